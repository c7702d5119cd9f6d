"""Period data of the Schottky double and Riemann theta functions.

The holomorphic differentials of the double restrict to the domain as
``alpha_i = (1/2) dg_i`` where ``g_i`` is the multivalued analytic completion
of the harmonic measure ``h_i``.  A-cycles run along the real segments and
return on the mirror sheet; B-cycles are the hole circles.  Because the
mirror sheet contributes the conjugate integral, an A-period is twice the
real part of a segment integral, i.e. a difference of ``h_i`` values.

Points of the mirror sheet are handled through ``chi(Jy) = -conj(chi(y))``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .domain import CircularDomain, fixed_points
from .harmonic import DEFAULT_DEGREE, harmonic_char

M_CAP = 30


class ThetaToleranceError(ArithmeticError):
    pass


class PeriodMatrixError(ArithmeticError):
    pass


def _log_up(w):
    """Logarithm with its branch cut along the upward vertical ray."""
    w = np.asarray(w, dtype=complex)
    ang = np.angle(w * 1j) - np.pi / 2  # in (-3pi/2, pi/2]
    return np.log(np.abs(w)) + 1j * ang


class DifferentialBasis:
    """Normalized holomorphic differentials ``alpha'_i = sum_k N_ik alpha_k``.

    Raw densities: ``alpha_i = (1/2) D_i(z) dz`` with ``D_i`` the complex
    derivative of ``h_i``.  A-cycles are the cumulative real-axis loops
    ``A'_j`` running from curve j to the outer circle and back on the
    mirror sheet, so the raw A-period matrix is the identity up to
    quadrature error; ``N`` is its inverse.
    """

    def __init__(self, domain: CircularDomain, degree: int = DEFAULT_DEGREE, gauss_nodes: int = 64):
        self.domain = domain
        self.fixed = fixed_points(domain)
        self.reps = [harmonic_char(domain, i, degree) for i in range(1, domain.n + 1)]
        self.gauss_nodes = gauss_nodes
        self.raw_a_periods = self._a_periods(gauss_nodes)
        self.normalization = np.linalg.inv(self.raw_a_periods)
        self.base = self.fixed.base_point
        self._g_base = self._g_raw(np.array([self.base]))[:, 0]

    @property
    def n(self) -> int:
        return self.domain.n

    def density(self, z) -> np.ndarray:
        """Normalized alpha densities, shape (n, ...): alpha'_i = density_i dz."""
        z = np.asarray(z, dtype=complex)
        raw = np.array([0.5 * r.derivative(z) for r in self.reps])
        return np.tensordot(self.normalization, raw, axes=1)

    def segment_integral(self, lo: float, hi: float, nodes: int | None = None) -> np.ndarray:
        """Raw integrals of alpha_i along the real segment [lo, hi] (Gauss-Legendre)."""
        x, w = np.polynomial.legendre.leggauss(nodes or self.gauss_nodes)
        # composite rule: split into 4 panels to resolve the endpoint behaviour
        edges = np.linspace(lo, hi, 5)
        total = np.zeros(self.n, dtype=complex)
        for a, b in zip(edges[:-1], edges[1:]):
            t = 0.5 * (b - a) * x + 0.5 * (a + b)
            vals = np.array([0.5 * r.derivative(t.astype(complex)) for r in self.reps])
            total += vals @ w * 0.5 * (b - a)
        return total

    def _a_periods(self, nodes: int) -> np.ndarray:
        n = self.n
        seg = [self.segment_integral(lo, hi, nodes) for lo, hi in self.fixed.segments]
        loops = np.array([2 * s.real for s in seg]).T  # column l: period of X_l - J X_l
        out = np.zeros((n, n))
        for j in range(1, n + 1):
            out[:, j - 1] = -loops[:, j:].sum(axis=1)
        return out

    def b_periods_raw(self, nodes: int = 512) -> np.ndarray:
        """Raw integrals of alpha_i over the hole circles, oriented as boundary of the domain."""
        n = self.n
        out = np.zeros((n, n), dtype=complex)
        theta = 2 * np.pi * np.arange(nodes) / nodes
        for j, hole in enumerate(self.domain.holes):
            z = hole.center + hole.radius * np.exp(1j * theta)
            dz = -1j * (z - hole.center) * 2 * np.pi / nodes  # clockwise
            for i, r in enumerate(self.reps):
                out[i, j] = np.sum(0.5 * r.derivative(z) * dz)
        return out

    def _g_raw(self, z) -> np.ndarray:
        """Branch of the multivalued g_i with cuts on vertical rays above the holes."""
        z = np.asarray(z, dtype=complex)
        out = []
        for r in self.reps:
            val = r.analytic_part(z)
            for hole, a in zip(self.domain.holes, r.log_charges):
                val = val + a * _log_up(z - hole.center)
            out.append(val)
        return np.array(out)

    def abel_jacobi(self, y, mirror: bool = False) -> np.ndarray:
        """chi(y) for y in the closure of the domain, or chi(Jy) when ``mirror``.

        Output shape (n,) + shape(y).  The value is exact for the chosen branch
        and differs from any path integral by a lattice vector.
        """
        y = np.asarray(y, dtype=complex)
        g = self._g_raw(y.ravel()) - self._g_base[:, None]
        chi = 0.5 * (self.normalization @ g)
        chi = chi.reshape((self.n,) + y.shape)
        return -np.conj(chi) if mirror else chi

    def path_integral(self, path: np.ndarray, nodes: int = 48) -> np.ndarray:
        """Normalized integral of alpha along a polygonal path (Gauss-Legendre per edge)."""
        x, w = np.polynomial.legendre.leggauss(nodes)
        total = np.zeros(self.n, dtype=complex)
        path = np.asarray(path, dtype=complex)
        for a, b in zip(path[:-1], path[1:]):
            t = 0.5 * (b - a) * x + 0.5 * (a + b)
            total += self.density(t) @ w * 0.5 * (b - a)
        return total


@dataclass
class PeriodMatrix:
    omega: np.ndarray
    a_periods: np.ndarray
    basis: DifferentialBasis = field(repr=False)

    @property
    def symmetry_error(self) -> float:
        return float(np.max(np.abs(self.omega - self.omega.T)))

    @property
    def a_period_error(self) -> float:
        return float(np.max(np.abs(self.a_periods - np.eye(len(self.omega)))))


@lru_cache(maxsize=8)
def differential_basis(domain: CircularDomain, degree: int = DEFAULT_DEGREE) -> DifferentialBasis:
    return DifferentialBasis(domain, degree)


@lru_cache(maxsize=8)
def period_matrix(domain: CircularDomain, degree: int = DEFAULT_DEGREE, nodes: int = 512) -> PeriodMatrix:
    basis = differential_basis(domain, degree)
    omega = basis.normalization @ basis.b_periods_raw(nodes)
    a_norm = basis.normalization @ basis.raw_a_periods
    if np.min(np.linalg.eigvalsh(0.5 * (omega.imag + omega.imag.T))) <= 0:
        raise PeriodMatrixError("imaginary part of the period matrix is not positive definite")
    return PeriodMatrix(omega, a_norm, basis)


# --- theta functions ---------------------------------------------------------

def _tail_bound(M: int, lam_min: float, lam_max: float, n: int) -> float:
    total = 0.0
    for s in range(M + 1, M + 200):
        count = (2 * s + 1) ** n - (2 * s - 1) ** n
        total += count * np.exp(-np.pi * lam_min * (s - 0.5) ** 2)
    return float(np.exp(np.pi * lam_max * n / 4) * total)


@dataclass
class ThetaContext:
    """Period matrix plus the truncation radius of the lattice sum."""

    omega: np.ndarray
    tol: float = 1e-12
    M: int = 0
    tail: float = 0.0
    lattice: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=complex)
        T = 0.5 * (self.omega.imag + self.omega.imag.T)
        ev = np.linalg.eigvalsh(T)
        if ev[0] <= 0:
            raise PeriodMatrixError("imaginary part of the period matrix is not positive definite")
        n = len(T)
        self._T_inv = np.linalg.inv(T)
        if not self.M:
            M = 1
            while _tail_bound(M, ev[0], ev[-1], n) > self.tol:
                M += 1
                if M > M_CAP:
                    raise ThetaToleranceError(f"tolerance {self.tol} needs truncation beyond {M_CAP}")
            self.M = M
        self.tail = _tail_bound(self.M, ev[0], ev[-1], n)
        rng = np.arange(-self.M, self.M + 1)
        # sorted by shell so summation order is deterministic
        pts = np.array(list(itertools.product(rng, repeat=n)), dtype=float)
        order = np.lexsort((pts.T[::-1].tolist()) + [np.abs(pts).max(axis=1)])
        self.lattice = pts[order]
        self._quad = np.einsum("ki,ij,kj->k", self.lattice, self.omega, self.lattice)

    @property
    def n(self) -> int:
        return len(self.omega)

    def reduce(self, z: np.ndarray):
        """Split z = z0 + Omega k + l with z0 in the fundamental cell; returns z0, k."""
        k = np.round(self._T_inv @ z.imag)
        z1 = z - self.omega @ k
        l = np.round(z1.real)
        return z1 - l, k

    def theta(self, z) -> np.ndarray:
        """Riemann theta at points z, shape (n,) or (n, N)."""
        z = np.asarray(z, dtype=complex)
        single = z.ndim == 1
        z = z.reshape(self.n, -1)
        z0, k = self.reduce(z)
        terms = np.exp(1j * np.pi * self._quad[:, None] + 2j * np.pi * (self.lattice @ z0))
        val = terms.sum(axis=0)
        # theta(z0 + Omega k) = exp(-pi i k.Omega.k - 2 pi i k.z0) theta(z0)
        factor = np.exp(-1j * np.pi * np.einsum("in,ij,jn->n", k, self.omega, k)
                        - 2j * np.pi * np.einsum("in,in->n", k, z0))
        out = factor * val
        return out[0] if single else out

    def split(self, e) -> tuple[np.ndarray, np.ndarray]:
        """Real u, v with e = u + Omega v."""
        e = np.asarray(e, dtype=complex)
        v = np.linalg.solve(self.omega.imag, e.imag)
        u = e.real - self.omega.real @ v
        return u, v

    def theta_char(self, u, v, z) -> np.ndarray:
        """theta[u; v](z) = exp(pi i v.Omega.v + 2 pi i (z + u).v) theta(z + u + Omega v)."""
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        z = np.asarray(z, dtype=complex)
        single = z.ndim == 1
        z = z.reshape(self.n, -1)
        shift = (u + self.omega @ v)[:, None]
        pref = np.exp(1j * np.pi * (v @ self.omega @ v) + 2j * np.pi * ((z + u[:, None]).T @ v))
        out = pref * self.theta(z + shift)
        return out[0] if single else out


def theta(z, ctx: ThetaContext):
    return ctx.theta(z)


def theta_char(e, z, ctx: ThetaContext):
    """theta with characteristic e, split as u + Omega v."""
    u, v = ctx.split(e)
    return ctx.theta_char(u, v, z)


def half_periods(n: int):
    """All (u, v) in {0, 1/2}^n x {0, 1/2}^n."""
    halves = list(itertools.product([0.0, 0.5], repeat=n))
    for u in halves:
        for v in halves:
            yield np.array(u), np.array(v)


def is_odd(u: np.ndarray, v: np.ndarray) -> bool:
    return int(round(4 * float(np.dot(u, v)))) % 2 == 1


@dataclass
class OddHalfPeriod:
    u: np.ndarray
    v: np.ndarray
    e: np.ndarray
    theta_at_e: float
    witness: float
    candidates: list = field(default_factory=list, repr=False)


def odd_half_period(ctx: ThetaContext, basis: DifferentialBasis | None = None,
                    samples: np.ndarray | None = None, seed: int = 0) -> OddHalfPeriod:
    """First odd half-period e with theta(e) = 0 and a nonvanishing section.

    The section theta(chi(y) - chi(x) + e) is tested at ten sample pairs.
    Without an Abel-Jacobi map the pairs are random points of C^n.
    """
    rng = np.random.default_rng(seed)
    n = ctx.n
    if basis is not None:
        if samples is None:
            from .domain import interior_points
            samples = interior_points(basis.domain, 20, margin=0.05, seed=seed)
        chis = basis.abel_jacobi(samples)
        diffs = chis[:, 10:] - chis[:, :10]
    else:
        diffs = rng.normal(size=(n, 10)) + 1j * rng.normal(size=(n, 10)) * 0.1
    report = []
    for u, v in half_periods(n):
        if not is_odd(u, v):
            continue
        e = u + ctx.omega @ v
        t0 = abs(ctx.theta(e))
        wit = float(np.max(np.abs(ctx.theta(diffs + e[:, None]))))
        report.append((u.tolist(), v.tolist(), float(t0), wit))
        if t0 < 1e-8 and wit > 1e-6:
            return OddHalfPeriod(u, v, e, float(t0), wit, report)
    raise ThetaToleranceError(f"no odd half-period passed: {report}")


class PrimeRatio:
    """y -> theta_*(chi(y) - chi(z)) / theta_*(chi(y) - chi(w)), one zero (z), one pole (w)."""

    def __init__(self, basis: DifferentialBasis, ctx: ThetaContext, ohp: OddHalfPeriod,
                 z: complex, w: complex, floor: float = 1e-10):
        self.basis, self.ctx, self.ohp = basis, ctx, ohp
        self.cz = basis.abel_jacobi(np.array([z]))[:, 0]
        self.cw = basis.abel_jacobi(np.array([w]))[:, 0]
        self.z, self.w = z, w
        # exceptional points: the section vanishes identically in y
        probe = basis.abel_jacobi(np.array([0.05 + 0.31j, -0.2 - 0.4j, 0.1 + 0.6j])
                                  if basis.domain.contains(0.05 + 0.31j) else np.array([z + 0.1]))
        for c, label in ((self.cz, "z"), (self.cw, "w")):
            vals = ctx.theta_char(ohp.u, ohp.v, probe - c[:, None])
            if np.max(np.abs(vals)) < floor:
                raise ValueError(f"{label} is an exceptional point of the prime ratio")

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=complex)
        cy = self.basis.abel_jacobi(y.ravel())
        num = self.ctx.theta_char(self.ohp.u, self.ohp.v, cy - self.cz[:, None])
        den = self.ctx.theta_char(self.ohp.u, self.ohp.v, cy - self.cw[:, None])
        return (num / den).reshape(y.shape)


def prime_ratio(z, w, basis: DifferentialBasis, ctx: ThetaContext, ohp: OddHalfPeriod) -> PrimeRatio:
    return PrimeRatio(basis, ctx, ohp, complex(z), complex(w))


def default_route(domain: CircularDomain, y: complex, height: float | None = None) -> np.ndarray:
    """Polygon from the base fixed point to y passing above or below the holes."""
    base = fixed_points(domain).base_point
    y = complex(y)
    if height is None:
        top = max(h.radius for h in domain.holes)
        height = top + 0.5 * min(domain.curve_gap(i) for i in range(domain.n + 1))
    s = 1.0 if y.imag >= 0 else -1.0
    x0 = base + 0.5 * (fixed_points(domain).segments[0][1] - base)
    path = np.array([base, x0, x0 + 1j * s * height, y.real + 1j * s * height, y])
    check_route(domain, path)
    return path


def check_route(domain: CircularDomain, path: np.ndarray, samples: int = 200) -> None:
    t = np.linspace(0, 1, samples)
    for a, b in zip(path[:-1], path[1:]):
        pts = a + t * (b - a)
        if np.any(domain.boundary_distance(pts[1:-1]) <= 0):
            raise ValueError(f"route segment {a} -> {b} leaves the domain; re-route")


def lattice_distance(w, omega: np.ndarray) -> float:
    """Distance from w to the nearest point of Z^n + Omega Z^n."""
    w = np.asarray(w, dtype=complex)
    k = np.round(np.linalg.solve(omega.imag, w.imag))
    r = w - omega @ k
    r = r - np.round(r.real)
    return float(np.max(np.abs(r)))

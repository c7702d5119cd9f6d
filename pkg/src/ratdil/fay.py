"""The Szego-type reproducing kernel of the Hardy space with harmonic-measure weight.

Two independent constructions are provided.  The Gram backend
orthonormalizes a rational basis in the boundary inner product weighted by
harmonic measure at b.  The theta backend evaluates the closed-form
expression in theta functions of the Schottky double, with its free vector
``e`` seeded from half-period candidates and refined against the Gram
backend.  Residues at the mirror-sheet poles and the invertibility test on
the resulting residue matrices live here too.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq, least_squares

from .domain import CircularDomain, boundary_grid, fixed_points, interior_points
from .harmonic import green
from .jacobian import (
    DifferentialBasis, OddHalfPeriod, ThetaContext, differential_basis, half_periods,
    odd_half_period, period_matrix,
)

GRAM_DEGREE = 128


class CriticalPointError(ArithmeticError):
    pass


class GramSingularError(ArithmeticError):
    pass


class FayFitError(ArithmeticError):
    pass


class ContourError(ArithmeticError):
    pass


@dataclass
class CriticalPoints:
    points: np.ndarray
    gradient_norms: np.ndarray

    @property
    def mirror_tags(self) -> list[str]:
        return [f"J({z:.12g})" for z in self.points]


def critical_points(domain: CircularDomain, b: float) -> CriticalPoints:
    """Zeros of dg/dx on the real segments not containing the pole b (X_1..X_n when b is in X_0)."""
    g = green(domain, complex(b))
    fp = fixed_points(domain)
    home = fp.segment_of(float(np.real(b)))
    if abs(np.imag(b)) > 0 or home is None:
        raise CriticalPointError(f"base point {b} is not on the real segments")
    pts, norms = [], []
    for i, (lo, hi) in enumerate(fp.segments):
        if i == home:
            continue
        def gx(x):
            return float(np.real(g.derivative(np.array([complex(x)]))[0]))
        eps = 1e-9 * (hi - lo)
        a, c = lo + eps, hi - eps
        if gx(a) * gx(c) > 0:
            raise CriticalPointError(f"no sign change of dg/dx on X_{i} = ({lo}, {hi})")
        x = brentq(gx, a, c, xtol=1e-15, rtol=1e-15)
        pts.append(x)
        norms.append(float(abs(g.derivative(np.array([complex(x)]))[0])))
    return CriticalPoints(np.array(pts), np.array(norms))


def _rational_basis(domain: CircularDomain, z: np.ndarray, d: int) -> np.ndarray:
    """Columns 1, u^k, v_i^k for k = 1..d."""
    z = np.asarray(z, dtype=complex).ravel()
    cols = [np.ones((len(z), 1), dtype=complex)]
    u = (z - domain.outer.center) / domain.outer.radius
    cols.append(np.cumprod(np.repeat(u[:, None], d, axis=1), axis=1))
    for h in domain.holes:
        v = h.radius / (z - h.center)
        cols.append(np.cumprod(np.repeat(v[:, None], d, axis=1), axis=1))
    return np.hstack(cols)


class FayKernel:
    """Common interface: ``kernel(x, y)`` for arrays of equal shape, plus ``gram(points)``."""

    backend: str = ""
    b: float

    def kernel(self, x, y):
        raise NotImplementedError

    def gram(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=complex)
        X, Y = np.meshgrid(pts, pts, indexing="ij")
        return self.kernel(X, Y)


class GramFayKernel(FayKernel):
    backend = "gram"

    def __init__(self, domain: CircularDomain, b: float, degree: int = GRAM_DEGREE, m: int | None = None):
        self.domain = domain
        self.b = float(b)
        self.degree = degree
        self.m = m or 4 * degree + 64
        grid = boundary_grid(domain, self.m)
        g = green(domain, complex(b))
        self.weights = grid.weight * g.poisson_density(grid.point, grid.normal)
        self.grid = grid
        Bm = _rational_basis(domain, grid.point, degree)
        q, r = np.linalg.qr(np.sqrt(self.weights)[:, None] * Bm)
        diag = np.abs(np.diag(r))
        self.gram_condition = float((diag.max() / diag.min()) ** 2)
        if diag.min() / diag.max() < 1e-13:
            raise GramSingularError(
                f"Gram matrix numerically singular at degree {degree}; reduce the degree")
        self._r = r

    def coefficients(self, z) -> np.ndarray:
        """Values of the orthonormal functions at z, shape (len(z), dim)."""
        Bz = _rational_basis(self.domain, z, self.degree)
        return sla.solve_triangular(self._r, Bz.T, trans="T").T

    def kernel(self, x, y):
        x = np.asarray(x, dtype=complex)
        y = np.asarray(y, dtype=complex)
        shape = np.broadcast(x, y).shape
        x, y = np.broadcast_to(x, shape).ravel(), np.broadcast_to(y, shape).ravel()
        cx, cy = self.coefficients(x), self.coefficients(y)
        return np.einsum("nk,nk->n", cx, np.conj(cy)).reshape(shape)

    def gram(self, points) -> np.ndarray:
        c = self.coefficients(np.asarray(points, dtype=complex))
        return c @ np.conj(c).T

    def inner(self, f_vals: np.ndarray, g_vals: np.ndarray) -> complex:
        """Boundary inner product int f conj(g) d omega_b from values on self.grid."""
        return complex(np.sum(f_vals * np.conj(g_vals) * self.weights))


@lru_cache(maxsize=8)
def fay_gram(domain: CircularDomain, b: float, degree: int = GRAM_DEGREE) -> GramFayKernel:
    return GramFayKernel(domain, b, degree)


class ThetaFayKernel(FayKernel):
    """Closed-form kernel in theta functions; points of the mirror sheet via ``mirror`` flags."""

    backend = "theta"

    def __init__(self, basis: DifferentialBasis, ctx: ThetaContext, ohp: OddHalfPeriod,
                 b: float, e: np.ndarray):
        self.basis, self.ctx, self.ohp = basis, ctx, ohp
        self.b = float(b)
        self.e = np.asarray(e, dtype=complex)
        self.chi_b = basis.abel_jacobi(np.array([complex(b)]))[:, 0]
        self._const = self._kernel_chi(self.chi_b[:, None], np.conj(self.chi_b)[:, None], both=True)

    def _theta_e(self, w):
        return self.ctx.theta(w + self.e[:, None])

    def _theta_star(self, w):
        return self.ctx.theta_char(self.ohp.u, self.ohp.v, w)

    def _kernel_chi(self, X, Ys, both: bool = False):
        """Kernel from chi(x) = X and conj(chi(y)) = Ys, arrays of shape (n, N)."""
        A = self.chi_b[:, None]
        As = np.conj(A)
        if both:
            return self._theta_e(A + As) / self._theta_star(A + As)
        num = self._theta_e(X + Ys) * self._theta_star(A + Ys) * self._theta_star(X + As)
        den = self._theta_e(A + Ys) * self._theta_e(X + As) * self._theta_star(X + Ys)
        return num / den * self._const

    def chi(self, z, mirror: bool = False) -> np.ndarray:
        """Abel-Jacobi image of z in R, or of its mirror Jz."""
        return self.basis.abel_jacobi(np.asarray(z, dtype=complex).ravel(), mirror=mirror)

    def kernel(self, x, y, x_mirror: bool = False):
        x = np.asarray(x, dtype=complex)
        y = np.asarray(y, dtype=complex)
        shape = np.broadcast(x, y).shape
        X = self.chi(np.broadcast_to(x, shape), mirror=x_mirror)
        Ys = np.conj(self.chi(np.broadcast_to(y, shape)))
        return self._kernel_chi(X, Ys).reshape(shape)

    def kernel_chart(self, zeta, y):
        """K(x, y) for x on the mirror sheet, with chart coordinate zeta = conj of its reflection."""
        zeta = np.asarray(zeta, dtype=complex)
        return self.kernel(np.conj(zeta), y, x_mirror=True)


def _sample_pairs(domain: CircularDomain, count: int, seed: int):
    pts = interior_points(domain, 2 * count, margin=0.08, seed=seed)
    return pts[:count], pts[count:]


def fit_e(gram: GramFayKernel, basis: DifferentialBasis, ctx: ThetaContext, ohp: OddHalfPeriod,
          crit: CriticalPoints, pairs: int = 30, seed: int = 3) -> tuple[np.ndarray, float, list]:
    """Fit the free vector e of the theta backend to the Gram backend.

    Seeds are ``delta +/- (conj chi(b) + sum chi(P_i))`` over all half-periods
    delta, the form dictated by the zero set of the denominator theta factor.
    The best seed is polished by nonlinear least squares on relative errors.
    """
    b = gram.b
    xs, ys = _sample_pairs(gram.domain, pairs, seed)
    target = gram.kernel(xs, ys)
    chi_b = basis.abel_jacobi(np.array([complex(b)]))[:, 0]
    chi_P = basis.abel_jacobi(crit.points.astype(complex), mirror=True).sum(axis=1)
    s = np.conj(chi_b) + chi_P

    def resid_complex(e):
        k = ThetaFayKernel(basis, ctx, ohp, b, e).kernel(xs, ys)
        return (k - target) / np.abs(target)

    seeds = []
    for u, v in half_periods(ctx.n):
        delta = u + ctx.omega @ v
        for sign in (1.0, -1.0):
            e0 = delta + sign * s
            with np.errstate(all="ignore"):
                r = resid_complex(e0)
            err = float(np.max(np.abs(r))) if np.all(np.isfinite(r)) else np.inf
            seeds.append((err, e0, u.tolist(), v.tolist(), sign))
    seeds.sort(key=lambda t: t[0])
    best_err, e0 = seeds[0][0], seeds[0][1]

    def resid_real(p):
        e = p[: ctx.n] + 1j * p[ctx.n:]
        r = resid_complex(e)
        return np.concatenate([r.real, r.imag])

    sol = least_squares(resid_real, np.concatenate([e0.real, e0.imag]), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    e = sol.x[: ctx.n] + 1j * sol.x[ctx.n:]
    err = float(np.max(np.abs(resid_complex(e))))
    if err > best_err:
        e, err = e0, best_err
    report = [(t[0], t[2], t[3], t[4]) for t in seeds]
    return e, err, report


def fay_theta(domain: CircularDomain, b: float, gram: GramFayKernel | None = None,
              tol: float = 1e-4) -> ThetaFayKernel:
    pm = period_matrix(domain)
    basis = differential_basis(domain)
    ctx = ThetaContext(pm.omega, 1e-14)
    ohp = odd_half_period(ctx, basis)
    gram = gram or fay_gram(domain, b)
    crit = critical_points(domain, b)
    e, err, report = fit_e(gram, basis, ctx, ohp, crit)
    if err > tol:
        raise FayFitError(f"theta backend disagrees with Gram backend (relative {err:.2e})")
    k = ThetaFayKernel(basis, ctx, ohp, b, e)
    k.fit_error = err
    k.seed_report = report
    k.critical = crit
    return k


# --- residues ------------------------------------------------------------------

def residue_at(kernel: ThetaFayKernel, pole: float, a: complex, radius: float = 1e-2,
               nodes: int = 64) -> complex:
    """(1/2 pi i) contour integral of K(., a) around the mirror-sheet pole, in the chart."""
    phi = 2 * np.pi * np.arange(nodes) / nodes
    zeta = pole + radius * np.exp(1j * phi)
    vals = kernel.kernel_chart(zeta, np.full(nodes, complex(a)))
    dz = 1j * radius * np.exp(1j * phi) * 2 * np.pi / nodes
    return complex(np.sum(vals * dz) / (2j * np.pi))


def residues(kernel: ThetaFayKernel, a: complex, radius: float = 1e-2, nodes: int = 64,
             retries: int = 4) -> np.ndarray:
    """Residues R_j(a) of K(., a) at the poles P_j, one per critical point."""
    crit = kernel.critical.points
    out = []
    # the only other mirror-sheet pole is J a, at chart coordinate conj(a)
    for z in crit:
        rad = radius
        for _ in range(retries + 1):
            others = [abs(np.conj(complex(a)) - z)] + [abs(w - z) for w in crit if w != z]
            if min(others) > 2 * rad:
                break
            rad /= 2
        else:
            raise ContourError(f"contour around {z} cannot exclude other singularities")
        out.append(residue_at(kernel, z, a, rad, nodes))
    return np.array(out)


@dataclass
class EpsilonReport:
    R1: np.ndarray
    R2: np.ndarray
    F: np.ndarray
    det_R1: complex
    det_R2: complex
    det_F: complex
    cond_F: float
    holds: bool
    meta: dict = field(default_factory=dict)


def residue_matrix(kernel: ThetaFayKernel, points) -> np.ndarray:
    """Rows indexed by poles P_i, columns by points a_j: R_i(a_j)."""
    return np.array([residues(kernel, a) for a in points]).T


def epsilon_matrices(kernel: ThetaFayKernel, points, gammas, cond_cap: float = 1e8) -> EpsilonReport:
    """Residue matrices for points a_1..a_2n with unit vectors gamma_1..gamma_2n.

    ``F`` has block rows for the two coordinates of C^2: row (c, i) and
    column j hold ``gamma_j[c] * R_i(a_j)``.  The first n points carry the
    first basis vector at the unperturbed configuration, so there ``F`` is
    block diagonal with blocks R1 (points 1..n) and R2 (points n+1..2n).
    """
    pts = np.asarray(points, dtype=complex)
    gam = np.asarray(gammas, dtype=complex)
    n = kernel.basis.n
    if len(pts) != 2 * n or gam.shape != (2 * n, 2):
        raise ValueError(f"need {2 * n} points and {2 * n} vectors in C^2")
    d = np.abs(pts[:, None] - pts[None, :]) + np.eye(2 * n)
    if d.min() < 1e-9:
        raise ValueError("points are not distinct")
    res = residue_matrix(kernel, pts)  # (n, 2n)
    F = np.vstack([res * gam[:, 0][None, :], res * gam[:, 1][None, :]])
    R1, R2 = res[:, :n], res[:, n:]
    cond = float(np.linalg.cond(F))
    return EpsilonReport(R1, R2, F, complex(np.linalg.det(R1)), complex(np.linalg.det(R2)),
                         complex(np.linalg.det(F)), cond, bool(np.isfinite(cond) and cond < cond_cap),
                         {"residues": res})

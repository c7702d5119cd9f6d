"""Harmonic functions on circular domains.

Functions are represented as

    h(z) = c + sum_i a_i log|z - c_i| + Re sum_k A_k u^k + Re sum_{i,k} B_ik v_i^k

with ``u = (z - c_0)/R_0`` and ``v_i = r_i/(z - c_i)``.  Every term is harmonic
in the domain, so Dirichlet problems reduce to a linear least-squares fit of
the coefficients against boundary data (collocation on equi-angular grids).
The analytic completion ``c + F(z)`` of the single-valued part is available
in closed form, which gives derivatives, normal derivatives and harmonic
conjugates without numerical differentiation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .domain import BoundaryGrid, CircularDomain, boundary_grid, fixed_points

DEFAULT_DEGREE = 48
FIT_TOL = 1e-8
PERIOD_TOL = 1e-7
DEGREE_LADDER = (24, 48, 72, 96, 128, 160)
IMAGE_DISTANCE = 0.1  # poles closer than this to B get an image charge


class DirichletFitError(RuntimeError):
    def __init__(self, residual: float, degree: int):
        super().__init__(f"boundary residual {residual:.3e} above tolerance at degree {degree}")
        self.residual = residual
        self.degree = degree


class PeriodError(ValueError):
    def __init__(self, periods):
        self.periods = np.asarray(periods)
        super().__init__(f"nonvanishing periods {self.periods}")


class BoundaryProximityError(ValueError):
    pass


def _polyval(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """sum_{k>=1} coeffs[k-1] x^k by Horner's rule."""
    out = np.zeros_like(x)
    for a in coeffs[::-1]:
        out = (out + a) * x
    return out


def _polyval_deriv(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """sum_{k>=1} k coeffs[k-1] x^(k-1)."""
    out = np.zeros_like(x)
    d = len(coeffs)
    for k in range(d, 0, -1):
        out = out * x + k * coeffs[k - 1]
    return out


@dataclass
class HarmonicRep:
    """Log charges plus truncated circular-harmonic series; see module docstring."""

    domain: CircularDomain
    constant: float
    log_charges: np.ndarray
    outer: np.ndarray
    holes: np.ndarray
    residual: float = 0.0

    @property
    def degree(self) -> int:
        return len(self.outer)

    def analytic_part(self, z):
        """Single-valued analytic function c + F(z) whose real part is h minus the logs."""
        z = np.asarray(z, dtype=complex)
        dom = self.domain
        out = np.full(z.shape, self.constant, dtype=complex)
        out += _polyval(self.outer, (z - dom.outer.center) / dom.outer.radius)
        for hole, coef in zip(dom.holes, self.holes):
            out += _polyval(coef, hole.radius / (z - hole.center))
        return out

    def log_part(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape)
        for hole, a in zip(self.domain.holes, self.log_charges):
            out += a * np.log(np.abs(z - hole.center))
        return out

    def __call__(self, z):
        return self.analytic_part(z).real + self.log_part(z)

    def derivative(self, z):
        """Complex derivative of the (locally defined) analytic completion: h_x - i h_y."""
        z = np.asarray(z, dtype=complex)
        dom = self.domain
        R0 = dom.outer.radius
        out = _polyval_deriv(self.outer, (z - dom.outer.center) / R0) / R0
        for hole, coef, a in zip(dom.holes, self.holes, self.log_charges):
            v = hole.radius / (z - hole.center)
            out = out - _polyval_deriv(coef, v) * v * v / hole.radius + a / (z - hole.center)
        return out

    def gradient(self, z):
        """h_x + i h_y."""
        return np.conj(self.derivative(z))

    def normal_derivative(self, z, normal):
        return np.real(np.asarray(normal) * self.derivative(z))

    def fluxes(self) -> np.ndarray:
        """Outward flux through each hole, equal to the period vector of h."""
        return -2 * np.pi * np.asarray(self.log_charges, dtype=float)

    def scaled(self, s: float) -> "HarmonicRep":
        return HarmonicRep(self.domain, s * self.constant, s * self.log_charges,
                           s * self.outer, s * self.holes, abs(s) * self.residual)

    def __add__(self, other: "HarmonicRep") -> "HarmonicRep":
        d = max(self.degree, other.degree)
        return HarmonicRep(
            self.domain, self.constant + other.constant,
            self.log_charges + other.log_charges,
            _pad(self.outer, d) + _pad(other.outer, d),
            _pad2(self.holes, d) + _pad2(other.holes, d),
            self.residual + other.residual,
        )


def _pad(a: np.ndarray, d: int) -> np.ndarray:
    return np.concatenate([a, np.zeros(d - len(a), dtype=complex)])


def _pad2(a: np.ndarray, d: int) -> np.ndarray:
    return np.concatenate([a, np.zeros((a.shape[0], d - a.shape[1]), dtype=complex)], axis=1)


def _design(domain: CircularDomain, z: np.ndarray, d: int) -> np.ndarray:
    """Real collocation matrix; columns are constant, logs, then Re/Im series terms."""
    cols = [np.ones(z.shape)]
    for h in domain.holes:
        cols.append(np.log(np.abs(z - h.center)))
    u = (z - domain.outer.center) / domain.outer.radius
    powers = np.cumprod(np.repeat(u[:, None], d, axis=1), axis=1)
    cols.extend([powers.real.T, powers.imag.T])
    for h in domain.holes:
        v = h.radius / (z - h.center)
        powers = np.cumprod(np.repeat(v[:, None], d, axis=1), axis=1)
        cols.extend([powers.real.T, powers.imag.T])
    return np.vstack([np.atleast_2d(c) for c in cols]).T


class DirichletSolver:
    """Least-squares collocation solver with a QR factorization shared by all right-hand sides."""

    def __init__(self, domain: CircularDomain, degree: int = DEFAULT_DEGREE, m: int | None = None):
        self.domain = domain
        self.degree = degree
        self.m = m or 4 * degree + 32
        self.grid = boundary_grid(domain, self.m)
        self.check_grid = boundary_grid(domain, self.m, offset=0.5)
        A = _design(domain, self.grid.point, degree)
        self._q, self._r = sla.qr(A, mode="economic")
        diag = np.abs(np.diag(self._r))
        self.condition = float(diag.max() / diag.min())
        if self.condition > 1e12:
            warnings.warn(f"collocation matrix is ill-conditioned (cond ~ {self.condition:.1e})")

    def _values(self, data, grid: BoundaryGrid) -> np.ndarray:
        if callable(data):
            return np.real(np.asarray(data(grid.point), dtype=complex)).astype(float)
        data = list(data)
        if len(data) != self.domain.n + 1:
            raise ValueError(f"need boundary data for {self.domain.n + 1} curves, got {len(data)}")
        out = np.empty(len(grid))
        for i, item in enumerate(data):
            mask = grid.curve == i
            out[mask] = np.real(item(grid.point[mask])) if callable(item) else float(item)
        return out

    def coefficients(self, values: np.ndarray) -> np.ndarray:
        """Solve for coefficient vectors; ``values`` may hold several columns."""
        return sla.solve_triangular(self._r, self._q.T @ values)

    def unpack(self, x: np.ndarray, residual: float = 0.0) -> HarmonicRep:
        n, d = self.domain.n, self.degree
        const = float(x[0])
        logs = np.array(x[1:1 + n], dtype=float)
        k = 1 + n
        outer = x[k:k + d] - 1j * x[k + d:k + 2 * d]
        k += 2 * d
        holes = np.zeros((n, d), dtype=complex)
        for i in range(n):
            holes[i] = x[k:k + d] - 1j * x[k + d:k + 2 * d]
            k += 2 * d
        return HarmonicRep(self.domain, const, logs, outer, holes, residual)

    def solve(self, data, tol: float | None = FIT_TOL) -> HarmonicRep:
        rep = self.unpack(self.coefficients(self._values(data, self.grid)))
        target = self._values(data, self.check_grid)
        rep.residual = float(np.max(np.abs(rep(self.check_grid.point) - target)))
        if tol is not None and rep.residual > tol:
            raise DirichletFitError(rep.residual, self.degree)
        return rep


@lru_cache(maxsize=32)
def get_solver(domain: CircularDomain, degree: int = DEFAULT_DEGREE) -> DirichletSolver:
    return DirichletSolver(domain, degree)


def solve_dirichlet(domain: CircularDomain, data, degree: int | None = None,
                    tol: float = FIT_TOL) -> HarmonicRep:
    """Harmonic function with the given boundary values.

    ``data`` is a callable of the boundary point, or one constant/callable per
    curve.  Without an explicit ``degree`` the series is enlarged along a
    fixed ladder until the off-grid residual meets ``tol``.
    """
    if degree is not None:
        return get_solver(domain, degree).solve(data, tol)
    err = None
    for d in DEGREE_LADDER:
        try:
            return get_solver(domain, d).solve(data, tol)
        except DirichletFitError as exc:
            err = exc
    raise err


@lru_cache(maxsize=64)
def harmonic_char(domain: CircularDomain, j: int, degree: int = DEFAULT_DEGREE) -> HarmonicRep:
    """Harmonic measure of curve j: 1 on B_j, 0 on the other curves."""
    if not 0 <= j <= domain.n:
        raise IndexError(f"curve index {j} outside 0..{domain.n}")
    data = [1.0 if i == j else 0.0 for i in range(domain.n + 1)]
    return solve_dirichlet(domain, data, degree)


@dataclass
class GreenFunction:
    """g(z) = -log|z - pole| + log|z - image| + image_const + regular_part(z), zero on B.

    The image is the reflection of the pole in its nearest circle, so the
    singular terms cancel exactly on that circle and the fitted part stays smooth.
    """

    pole: complex
    regular_part: HarmonicRep
    image: complex | None = None
    image_const: float = 0.0

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = -np.log(np.abs(z - self.pole)) + self.regular_part(z)
        if self.image is not None:
            out = out + np.log(np.abs(z - self.image)) + self.image_const
        return out

    def derivative(self, z):
        z = np.asarray(z, dtype=complex)
        out = -1.0 / (z - self.pole) + self.regular_part.derivative(z)
        if self.image is not None:
            out = out + 1.0 / (z - self.image)
        return out

    def gradient(self, z):
        return np.conj(self.derivative(z))

    def poisson_density(self, z, normal=None):
        """-(1/2pi) dg/dn_out at boundary points."""
        dom = self.regular_part.domain
        normal = dom.outward_normal(z) if normal is None else normal
        return -np.real(np.asarray(normal) * self.derivative(z)) / (2 * np.pi)


def _image(domain: CircularDomain, b: complex) -> tuple[complex, float]:
    """Reflection of b in its nearest circle and the constant making the pair vanish there."""
    c = domain.curve(int(domain.nearest_curve(b)))
    u = b - c.center
    return c.center + c.radius ** 2 / np.conj(u), float(np.log(abs(u) / c.radius))


def _check_pole(domain: CircularDomain, b: complex, min_dist: float = 0.01):
    dist = float(domain.boundary_distance(b))
    if dist < min_dist:
        raise BoundaryProximityError(
            f"point {b} is {dist:.3g} from the boundary (need at least {min_dist})")


@lru_cache(maxsize=128)
def green(domain: CircularDomain, b: complex, degree: int | None = None) -> GreenFunction:
    b = complex(b)
    _check_pole(domain, b)
    if domain.boundary_distance(b) >= IMAGE_DISTANCE:
        reg = solve_dirichlet(domain, lambda z: np.log(np.abs(z - b)), degree)
        return GreenFunction(b, reg)
    im, k = _image(domain, b)
    reg = solve_dirichlet(domain, lambda z: np.log(np.abs(z - b)) - np.log(np.abs(z - im)) - k,
                          degree)
    return GreenFunction(b, reg, complex(im), k)


@dataclass
class PoissonKernelField:
    """Density of harmonic measure at ``base`` against arc length, sampled on a grid."""

    base: complex
    grid: BoundaryGrid
    values: np.ndarray
    green_function: GreenFunction = field(repr=False)

    def density(self, z, normal=None):
        return self.green_function.poisson_density(z, normal)

    def mass(self, curve: int | None = None) -> float:
        w = self.grid.weight * self.values
        if curve is not None:
            w = w[self.grid.curve == curve]
        return float(w.sum())


def poisson(domain: CircularDomain, b: complex, m: int = 256,
            degree: int | None = None) -> PoissonKernelField:
    g = green(domain, complex(b), degree)
    # the density peaks with width ~ distance to B; resolve it on every circle
    rmax = max(c.radius for c in domain.circles)
    m = max(m, int(np.ceil(30 * rmax / float(domain.boundary_distance(complex(b))))))
    grid = boundary_grid(domain, m)
    vals = g.poisson_density(grid.point, grid.normal)
    if np.any(vals <= 0):
        raise ArithmeticError("Poisson density is not positive; fit failed")
    return PoissonKernelField(complex(b), grid, vals, g)


class QFunctions:
    """Outward normal derivatives Q_j of the harmonic measures h_j."""

    def __init__(self, domain: CircularDomain, degree: int = DEFAULT_DEGREE):
        self.domain = domain
        self.reps = [harmonic_char(domain, j, degree) for j in range(domain.n + 1)]

    def __call__(self, j: int, z, curve=None):
        z = np.asarray(z, dtype=complex)
        return self.reps[j].normal_derivative(z, self.domain.outward_normal(z, curve))

    def matrix(self, z, curve=None) -> np.ndarray:
        """Rows j = 0..n of Q_j at the given boundary points."""
        z = np.asarray(z, dtype=complex)
        nrm = self.domain.outward_normal(z, curve)
        return np.array([r.normal_derivative(z, nrm) for r in self.reps])


@lru_cache(maxsize=16)
def q_functions(domain: CircularDomain, degree: int = DEFAULT_DEGREE) -> QFunctions:
    return QFunctions(domain, degree)


def periods(domain: CircularDomain, points, weights, curves=None) -> np.ndarray:
    """P_j = integral of Q_j against the discrete measure sum w_k delta_{points_k}, j = 1..n."""
    q = q_functions(domain).matrix(np.asarray(points, dtype=complex), curves)
    return q[1:] @ np.asarray(weights, dtype=float)


# --- analytic functions -----------------------------------------------------

@dataclass
class AnalyticFunction:
    """Evaluator pair (value, derivative) for a single-valued analytic function."""

    value: Callable
    deriv: Callable
    meta: dict = field(default_factory=dict)

    def __call__(self, z):
        return self.value(np.asarray(z, dtype=complex))

    def derivative(self, z):
        return self.deriv(np.asarray(z, dtype=complex))


def _loop_residual(h, domain: CircularDomain, nodes: int = 256) -> float:
    """|closed integral of the analytic derivative| around each hole (zero iff single valued)."""
    worst = 0.0
    theta = 2 * np.pi * np.arange(nodes) / nodes
    for i, hole in enumerate(domain.holes, start=1):
        rho = hole.radius + 0.5 * domain.curve_gap(i)
        z = hole.center + rho * np.exp(1j * theta)
        dz = 1j * (z - hole.center) * 2 * np.pi / nodes
        worst = max(worst, float(abs(np.sum(h.derivative(z) * dz))))
    return worst


def harmonic_conjugate(h, anchor: complex | None = None, tol: float = PERIOD_TOL) -> AnalyticFunction:
    """Analytic f with Re f = h and Im f(anchor) = 0.

    ``h`` is any harmonic object exposing ``log_charges``, ``analytic_part``
    and ``derivative`` (a :class:`HarmonicRep` or a boundary Poisson sum).
    Its periods are the hole fluxes ``-2 pi a_i``; they must vanish.
    """
    domain = h.domain
    per = -2 * np.pi * np.asarray(h.log_charges, dtype=float)
    if np.max(np.abs(per), initial=0.0) > tol:
        raise PeriodError(per)
    if anchor is None:
        lo, hi = fixed_points(domain).segments[0] if domain.n else (domain.outer.center, domain.outer.center)
        anchor = 0.5 * (lo + hi)
    shift = 1j * float(np.imag(h.analytic_part(np.array([anchor]))[0]))
    loop = _loop_residual(h, domain)
    if loop > tol:
        raise PeriodError(per)

    def value(z):
        return h.analytic_part(z) - shift

    return AnalyticFunction(value, h.derivative,
                            {"periods": per, "loop_residual": loop, "anchor": complex(anchor)})


# --- Poisson kernels with the pole on the boundary ---------------------------

def circle_herglotz(domain: CircularDomain, curve: int, q: complex, w):
    """Herglotz kernel of circle ``curve`` (as a disk or disk exterior) with pole q.

    Its real part is the Poisson kernel of that single circle against arc
    length, so it carries the exact boundary singularity at q.
    """
    c = domain.curve(curve)
    w = np.asarray(w, dtype=complex)
    u = (w - c.center) / c.radius
    zeta = (q - c.center) / c.radius
    # infinite exactly at the pole; callers handle it
    with np.errstate(divide="ignore", invalid="ignore"):
        if curve == 0:
            return (zeta + u) / (zeta - u) / (2 * np.pi * c.radius)
        return (u + zeta) / (u - zeta) / (2 * np.pi * c.radius)


def circle_herglotz_derivative(domain: CircularDomain, curve: int, q: complex, w):
    c = domain.curve(curve)
    w = np.asarray(w, dtype=complex)
    u = (w - c.center) / c.radius
    zeta = (q - c.center) / c.radius
    sign = 1.0 if curve == 0 else -1.0
    return sign * 2 * zeta / (zeta - u) ** 2 / (2 * np.pi * c.radius ** 2)


@dataclass
class BoundaryPoissonKernel:
    """w -> P(w, q) for a boundary point q, split as Re(herglotz) + smooth remainder."""

    domain: CircularDomain
    q: complex
    curve: int
    smooth: HarmonicRep

    @property
    def log_charges(self) -> np.ndarray:
        return self.smooth.log_charges

    def analytic_part(self, w):
        return circle_herglotz(self.domain, self.curve, self.q, w) + self.smooth.analytic_part(w)

    def derivative(self, w):
        return circle_herglotz_derivative(self.domain, self.curve, self.q, w) + self.smooth.derivative(w)

    def __call__(self, w):
        return np.real(circle_herglotz(self.domain, self.curve, self.q, w)) + self.smooth(w)


def boundary_poisson_kernel(domain: CircularDomain, q: complex, curve: int | None = None,
                            degree: int = DEFAULT_DEGREE) -> BoundaryPoissonKernel:
    q = complex(q)
    if curve is None:
        curve = int(domain.nearest_curve(q))
    c = domain.curve(curve)
    if abs(abs(q - c.center) - c.radius) > 1e-9:
        raise ValueError(f"point {q} is not on boundary curve {curve}")

    def data(z):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -np.real(circle_herglotz(domain, curve, q, z))
        on_own = np.abs(np.abs(z - c.center) - c.radius) < 1e-9
        return np.where(on_own, 0.0, out)

    smooth = get_solver(domain, degree).solve(data)
    return BoundaryPoissonKernel(domain, q, curve, smooth)


@dataclass
class PoissonSum:
    """Positive combination sum_j weight_j P(., q_j) of boundary Poisson kernels."""

    kernels: Sequence[BoundaryPoissonKernel]
    weights: np.ndarray

    @property
    def domain(self) -> CircularDomain:
        return self.kernels[0].domain

    @property
    def log_charges(self) -> np.ndarray:
        return sum(w * k.log_charges for w, k in zip(self.weights, self.kernels))

    def analytic_part(self, z):
        return sum(w * k.analytic_part(z) for w, k in zip(self.weights, self.kernels))

    def derivative(self, z):
        return sum(w * k.derivative(z) for w, k in zip(self.weights, self.kernels))

    def __call__(self, z):
        return sum(w * k(z) for w, k in zip(self.weights, self.kernels))

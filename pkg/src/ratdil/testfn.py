"""Scalar test functions built from boundary Poisson kernels.

For a choice of one boundary point per curve, the normal-derivative matrix
``M(p)`` has a one-dimensional kernel spanned by a positive vector.  Weighting
the boundary Poisson kernels by that vector gives a positive harmonic function
with no periods, hence the real part of an analytic ``f_p`` with positive real
part.  The Cayley transform ``(f_p - 1)/(f_p + 1)`` is then unimodular on the
boundary, vanishes at the base point and has ``n + 1`` zeros.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domain import CircularDomain, fixed_points, segment_points
from .harmonic import (
    AnalyticFunction, BoundaryPoissonKernel, PoissonSum, boundary_poisson_kernel,
    harmonic_char, harmonic_conjugate, q_functions,
)
from .zeros import ZeroCountError, ZeroReport, curve_winding, find_zeros

KAPPA_TOL = 1e-8
F_NORMALIZATION_TOL = 1e-9


class DegenerateKernelError(ArithmeticError):
    pass


class SelectionError(RuntimeError):
    def __init__(self, message: str, tried: list):
        super().__init__(message)
        self.tried = tried


@dataclass(frozen=True)
class PiPoint:
    """One boundary point per curve, ``points[i]`` on curve i."""

    points: tuple[complex, ...]
    constrained: bool = False

    @classmethod
    def from_angles(cls, domain: CircularDomain, angles: Sequence[float],
                    constrained: bool = False) -> "PiPoint":
        """Angles for curves 0..n, or for curves 1..n when ``constrained``."""
        angles = list(angles)
        if constrained:
            if len(angles) != domain.n:
                raise ValueError(f"constrained point needs {domain.n} angles")
            angles = [np.pi] + angles
        if len(angles) != domain.n + 1:
            raise ValueError(f"need {domain.n + 1} angles")
        pts = tuple(complex(c.point(a)) for c, a in zip(domain.circles, angles))
        if constrained:
            pts = (complex(fixed_points(domain).base_point),) + pts[1:]
        return cls(pts, constrained)

    def validate(self, domain: CircularDomain, tol: float = 1e-9) -> None:
        if len(self.points) != domain.n + 1:
            raise ValueError(f"need one point per curve ({domain.n + 1}), got {len(self.points)}")
        for i, (c, p) in enumerate(zip(domain.circles, self.points)):
            if abs(abs(p - c.center) - c.radius) > tol:
                raise ValueError(f"p_{i} = {p} does not lie on curve {i}")
        if self.constrained and abs(self.points[0] - fixed_points(domain).base_point) > tol:
            raise ValueError("constrained point must have p_0 at the base fixed point")

    def mirror(self) -> "PiPoint":
        return PiPoint(tuple(complex(np.conj(p)) for p in self.points), self.constrained)

    def angles(self, domain: CircularDomain) -> list[float]:
        return [float(c.angle_of(p)) for c, p in zip(domain.circles, self.points)]


def m_matrix(domain: CircularDomain, p: PiPoint) -> np.ndarray:
    """M[j-1, i] = Q_j(p_i), j = 1..n, i = 0..n."""
    p.validate(domain)
    q = q_functions(domain)
    pts = np.array(p.points)
    return q.matrix(pts, np.arange(domain.n + 1))[1:]


@dataclass
class KernelVector:
    kappa: np.ndarray
    tau: np.ndarray
    kappa_cofactor: np.ndarray
    cosine: float
    residual: float
    kernels: list[BoundaryPoissonKernel] = field(repr=False, default_factory=list)


def cofactor_vector(M: np.ndarray) -> np.ndarray:
    """Signed maximal minors of an n x (n+1) matrix; spans its kernel when rank is n."""
    n1 = M.shape[1]
    return np.array([(-1) ** i * np.linalg.det(np.delete(M, i, axis=1)) for i in range(n1)])


def kernel_vector(domain: CircularDomain, p: PiPoint, b: complex) -> KernelVector:
    M = m_matrix(domain, p)
    _, sv, vt = np.linalg.svd(M)
    if sv[-1] / sv[0] <= 1e-8:
        raise DegenerateKernelError(f"M(p) has numerical rank below {domain.n}: {sv}")
    kappa = vt[-1]
    kappa = kappa / kappa.sum()
    cof = cofactor_vector(M)
    cof = cof / cof.sum()
    cosine = float(kappa @ cof / (np.linalg.norm(kappa) * np.linalg.norm(cof)))
    if np.any(kappa <= 0):
        raise DegenerateKernelError(f"kernel vector is not positive: {kappa}")
    kernels = [boundary_poisson_kernel(domain, q, i) for i, q in enumerate(p.points)]
    kp_b = sum(k * ker(np.array([b]))[0] for k, ker in zip(kappa, kernels))
    tau = kappa / kp_b
    return KernelVector(kappa, tau, cof, cosine, float(np.max(np.abs(M @ kappa))), kernels)


def canonical_f(domain: CircularDomain, p: PiPoint, b: complex,
                kv: KernelVector | None = None) -> AnalyticFunction:
    """Analytic f_p with Re f_p = sum_j tau_j P(., p_j) and f_p(b) = 1."""
    kv = kv or kernel_vector(domain, p, b)
    h = PoissonSum(kv.kernels, kv.tau)
    f = harmonic_conjugate(h, anchor=b)
    fb = complex(f(np.array([b]))[0])
    if abs(fb - 1) > F_NORMALIZATION_TOL:
        raise ArithmeticError(f"f_p(b) = {fb}, normalization failed")
    f.meta.update({"harmonic": h, "kernel_vector": kv, "f_at_b": fb})
    return f


def cayley(f_values):
    """(f - 1)/(f + 1), with the limit 1 at poles of f."""
    f_values = np.asarray(f_values, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = (f_values - 1) / (f_values + 1)
    return np.where(np.isfinite(f_values), out, 1.0)


@dataclass
class TestFunction:
    """psi = rotation * (f - 1)/(f + 1) on the domain."""

    __test__ = False  # keep pytest from collecting this class

    domain: CircularDomain
    p: PiPoint
    b: complex
    f: AnalyticFunction = field(repr=False)
    rotation: complex = 1.0
    report: ZeroReport | None = None

    def __call__(self, z):
        return self.rotation * cayley(self.f(z))

    def derivative(self, z):
        fz = self.f(z)
        return self.rotation * 2 * self.f.derivative(z) / (fz + 1) ** 2

    def logderiv(self, z):
        fz = self.f(z)
        return 2 * self.f.derivative(z) / (fz * fz - 1)

    @property
    def zeros(self) -> np.ndarray:
        return self.report.expanded() if self.report is not None else np.zeros(0, complex)

    @property
    def winding(self) -> int:
        return self.report.winding if self.report is not None else 0

    @property
    def kernel_vector(self) -> KernelVector:
        return self.f.meta["kernel_vector"]

    def curve_windings(self, m: int = 2048) -> list[int]:
        """Degree of psi restricted to each boundary curve (each equals 1)."""
        theta = 2 * np.pi * (np.arange(m) + 0.5) / m
        out = []
        for i, c in enumerate(self.domain.circles):
            out.append(curve_winding(self(c.point(theta)), 1.0 if i == 0 else -1.0))
        return out

    def one_points(self, m: int = 2048) -> list[complex]:
        """The boundary points where psi = 1, one per curve."""
        from scipy.optimize import brentq

        theta = 2 * np.pi * (np.arange(m) + 0.5) / m
        pts = []
        for c in self.domain.circles:
            arg = np.angle(self(c.point(theta)))
            found = None
            for k in range(m):
                a0, a1 = arg[k], arg[(k + 1) % m]
                if a0 * a1 < 0 and abs(a0 - a1) < np.pi:
                    t1 = theta[k + 1] if k + 1 < m else theta[0] + 2 * np.pi
                    t = brentq(lambda s: float(np.angle(self(c.point(s)))), theta[k], t1, xtol=1e-14)
                    found = complex(c.point(t))
                    break
            if found is None:
                # the 1-point falls between the angles nearest a pole of f
                k = int(np.argmin(np.abs(arg)))
                found = complex(c.point(theta[k]))
            pts.append(found)
        return pts


def test_function(domain: CircularDomain, p: PiPoint, b: complex,
                  constrain: bool | None = None, locate_zeros: bool = True) -> TestFunction:
    """psi_p with base b.  With ``constrain`` it is rotated so psi(p_0^-) = 1."""
    b = complex(b)
    if not bool(domain.contains(np.array([b]))[0]):
        raise ValueError(f"base point {b} is not in the domain")
    f = canonical_f(domain, p, b)
    psi = TestFunction(domain, p, b, f)
    constrain = p.constrained if constrain is None else constrain
    if constrain:
        base = fixed_points(domain).base_point
        val = complex(psi(np.array([base]))[0])
        psi.rotation = np.conj(val) / abs(val)
    if locate_zeros:
        psi.report = find_zeros(psi, psi.derivative, domain, expected=domain.n + 1,
                                logderiv=psi.logderiv)
    return psi


test_function.__test__ = False


def moebius(a: complex):
    """z -> (z - a)/(1 - conj(a) z)."""
    return lambda z: (z - a) / (1 - np.conj(a) * z)


@dataclass
class OffAxisSelection:
    b: float
    p: PiPoint
    psi: TestFunction
    tried: list = field(default_factory=list, repr=False)
    rebase_error: float = float("nan")
    margin: float = float("nan")


def offaxis_margin(domain: CircularDomain, zeros: np.ndarray, b: float) -> float:
    """Smallest of the admissibility margins for a zero set {b, z_1..z_n}.

    Positive margins mean: b is a simple zero, the other zeros are non-real,
    pairwise distinct, not conjugate to each other, and inside the domain.
    """
    zeros = np.asarray(zeros, dtype=complex)
    dist_b = np.abs(zeros - b)
    if np.sum(dist_b < 1e-6) != 1:
        return -1.0
    others = zeros[dist_b >= 1e-6]
    d = np.abs(zeros[:, None] - zeros[None, :]) + np.eye(len(zeros)) * 1e9
    margins = [d.min(), np.abs(others.imag).min(),
               np.abs(others[:, None] - np.conj(others)[None, :]).min(),
               domain.boundary_distance(zeros).min()]
    return float(min(margins))


def rebase(psi_unconstrained: TestFunction, x: float) -> tuple[TestFunction, complex]:
    """Post-compose with the disk automorphism sending psi(x) to 0 and rotate at p_0^-."""
    y = complex(psi_unconstrained(np.array([x]))[0])
    mob = moebius(y)
    base = fixed_points(psi_unconstrained.domain).base_point

    class _Rebased:
        def __call__(self, z):
            return mob(psi_unconstrained(z))

    g = _Rebased()
    rot = np.conj(complex(g(np.array([base]))[0]))
    return g, rot


def select_offX(domain: CircularDomain, angles_per_curve: int = 8,
                base_candidates: int = 3, min_margin: float = 1e-3) -> OffAxisSelection:
    """Base point b on the first real segment and constrained p with off-axis zeros.

    Candidates for b are points of X_0 with h_0(b) > 1/2, preferring those far
    from the boundary.  Hole angles are scanned on a fixed grid and the
    candidate with the largest admissibility margin is kept.
    """
    h0 = harmonic_char(domain, 0)
    xs = segment_points(domain, 0, 41)
    good = [float(x) for x in xs if h0(np.array([x]))[0] > 0.5]
    if not good:
        raise SelectionError("no point of X_0 has h_0 > 1/2", [])
    good.sort(key=lambda x: -float(domain.boundary_distance(x)))
    grid = np.pi * (2 * np.arange(angles_per_curve) / angles_per_curve - 1) + np.pi / angles_per_curve
    tried = []
    best = None
    for x in good[:base_candidates]:
        for angles in np.array(np.meshgrid(*[grid] * domain.n, indexing="ij")).reshape(domain.n, -1).T:
            p = PiPoint.from_angles(domain, angles, constrained=True)
            try:
                psi = test_function(domain, p, x)
            except (ZeroCountError, ArithmeticError) as exc:
                tried.append((angles.tolist(), x, str(exc)))
                continue
            margin = offaxis_margin(domain, psi.zeros, x)
            tried.append((angles.tolist(), x, margin))
            if margin > min_margin and (best is None or margin > best[0]):
                best = (margin, x, p, psi)
    if best is None:
        raise SelectionError("no parameter choice gave admissible zeros", tried)
    margin, x, p, psi = best
    # cross-check against the rebasing construction from another base point
    b0 = 0.5 * sum(fixed_points(domain).segments[min(1, domain.n)])
    phi = test_function(domain, p, b0, constrain=False, locate_zeros=False)
    g, rot = rebase(phi, x)
    zs = psi.zeros + 0.05
    zs = np.concatenate([zs[domain.contains(zs, 0.02)], [b0 + 0.1j]])
    err = float(np.max(np.abs(rot * g(zs) - psi(zs))))
    return OffAxisSelection(x, p, psi, tried, err, margin)

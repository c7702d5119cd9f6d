"""2x2 matrix inner functions assembled from boundary Poisson kernels.

A team of projections assigns complementary projections to the two
boundary points ``p_i`` and ``conj(p_i)`` on each hole.  Weighting the
Poisson kernels of those points by the positive vector tau and by the
projections gives a matrix harmonic function ``H`` with no periods and
``H(b) = I``; its analytic completion ``G`` yields the inner function
``Psi = (G - I)(G + I)^-1``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domain import CircularDomain, fixed_points, interior_points
from .harmonic import PERIOD_TOL, boundary_poisson_kernel, q_functions
from .testfn import PiPoint, kernel_vector
from .zeros import ZeroCountError, ZeroReport, find_zeros

E1 = np.array([1.0, 0.0])
E2 = np.array([0.0, 1.0])
PROJ_TOL = 1e-12


class SymmetryError(ArithmeticError):
    pass


class StandardZeroSetViolation(ArithmeticError):
    def __init__(self, report: dict):
        self.report = report
        failed = [k for k, v in report["conditions"].items() if not v["ok"]]
        super().__init__(f"standard zero set conditions failed: {failed}")


@dataclass(frozen=True)
class TeamOfProjections:
    """Projections P^{j+}, j = 1..n, on C^2; P^{j-} = I - P^{j+}."""

    plus: tuple

    def __post_init__(self):
        for j, P in enumerate(self.plus, start=1):
            P = np.asarray(P)
            if np.max(np.abs(P @ P - P)) > PROJ_TOL or np.max(np.abs(P - P.conj().T)) > PROJ_TOL:
                raise ValueError(f"P^{j}+ is not an orthogonal projection")
            if np.allclose(P, 0) or np.allclose(P, np.eye(2)):
                raise ValueError(f"P^{j}+/- must both be nonzero")
        if np.max(np.abs(np.asarray(self.plus[0]) - np.diag([1.0, 0.0]))) > PROJ_TOL:
            raise ValueError("P^1+ must be diag(1, 0)")

    @property
    def n(self) -> int:
        return len(self.plus)

    def minus(self, j: int) -> np.ndarray:
        return np.eye(2) - np.asarray(self.plus[j - 1])

    def pair(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.plus[j - 1]), self.minus(j)

    def distance(self, other: "TeamOfProjections") -> float:
        """max over j and signs of the operator-norm distance."""
        return float(max(np.linalg.norm(np.asarray(a) - np.asarray(b), 2)
                         for a, b in zip(self.plus, other.plus)))


def trivial_team(n: int) -> TeamOfProjections:
    return TeamOfProjections(tuple(np.diag([1.0, 0.0]) for _ in range(n)))


def rotated_projection(t: float) -> np.ndarray:
    v = np.array([np.cos(t), np.sin(t)])
    return np.outer(v, v)


def perturb_team(t: float, n: int = 2, hole: int = 2) -> TeamOfProjections:
    """Trivial team with P^{hole,+} rotated by angle t."""
    if not 0 <= t <= np.pi / 2:
        raise ValueError("rotation angle outside [0, pi/2]")
    if not 2 <= hole <= n:
        raise ValueError(f"hole index {hole} outside 2..{n}")
    plus = [np.diag([1.0, 0.0]) for _ in range(n)]
    plus[hole - 1] = rotated_projection(t)
    return TeamOfProjections(tuple(plus))


def involution_defect(domain: CircularDomain, p: PiPoint) -> float:
    """max |Q_j(p_i) - Q_j(conj p_i)|, zero when conjugation is the domain symmetry."""
    q = q_functions(domain)
    pts = np.array(p.points)
    curves = np.arange(domain.n + 1)
    return float(np.max(np.abs(q.matrix(pts, curves) - q.matrix(np.conj(pts), curves))))


class MatrixHerglotz:
    """H = sum_t c_t P(., q_t) Proj_t and its analytic completion G with G(b) = I."""

    def __init__(self, domain: CircularDomain, S: TeamOfProjections, p: PiPoint, b: float,
                 symmetry_tol: float = 1e-8):
        if S.n != domain.n:
            raise ValueError("team size does not match the number of holes")
        p.validate(domain)
        defect = involution_defect(domain, p)
        if defect > symmetry_tol:
            raise SymmetryError(f"conjugation symmetry defect {defect:.2e}")
        self.domain, self.S, self.p, self.b = domain, S, p, float(b)
        self.symmetry_defect = defect
        kv = kernel_vector(domain, p, b)
        self.tau = kv.tau
        terms = [(kv.tau[0], kv.kernels[0], np.eye(2))]
        for i in range(1, domain.n + 1):
            plus, minus = S.pair(i)
            q = p.points[i]
            terms.append((kv.tau[i], kv.kernels[i], plus))
            terms.append((kv.tau[i], boundary_poisson_kernel(domain, np.conj(q), i), minus))
        self.terms = terms
        self.poles = [k.q for _, k, _ in terms]
        g_b = self._raw_analytic(np.array([complex(b)]))[0]
        self._shift = 0.5 * (g_b - g_b.conj().T)
        self.log_residual = float(np.max(np.abs(self.log_charge_matrix())))

    def log_charge_matrix(self) -> np.ndarray:
        """sum_t c_t a_i(q_t) Proj_t for each hole i; vanishes iff H has no periods."""
        return np.array([sum(c * k.log_charges[i] * P for c, k, P in self.terms)
                         for i in range(self.domain.n)])

    def periods(self, x) -> np.ndarray:
        """Periods of <H x, x> for a vector x in C^2."""
        x = np.asarray(x, dtype=complex)
        return np.array([-2 * np.pi * np.real(np.conj(x) @ M @ x) for M in self.log_charge_matrix()])

    def __call__(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=complex)
        return sum(c * k(w)[..., None, None] * P for c, k, P in self.terms)

    def _raw_analytic(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=complex)
        return sum(c * k.analytic_part(w)[..., None, None] * P for c, k, P in self.terms)

    def analytic(self, w) -> np.ndarray:
        return self._raw_analytic(w) - self._shift

    def derivative(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=complex)
        return sum(c * k.derivative(w)[..., None, None] * P for c, k, P in self.terms)


def build_H(domain: CircularDomain, S: TeamOfProjections, p: PiPoint, b: float) -> MatrixHerglotz:
    H = MatrixHerglotz(domain, S, p, b)
    if H.log_residual > PERIOD_TOL:
        raise ArithmeticError(f"matrix Herglotz function has periods ({H.log_residual:.2e})")
    return H


def _inv2(M: np.ndarray) -> np.ndarray:
    a, b, c, d = M[..., 0, 0], M[..., 0, 1], M[..., 1, 0], M[..., 1, 1]
    det = a * d - b * c
    out = np.empty_like(M)
    out[..., 0, 0], out[..., 0, 1] = d / det, -b / det
    out[..., 1, 0], out[..., 1, 1] = -c / det, a / det
    return out


def _det2(M: np.ndarray) -> np.ndarray:
    return M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]


class MatrixInner:
    """Psi = (G - I)(G + I)^-1 = I - 2 (G + I)^-1."""

    def __init__(self, H: MatrixHerglotz):
        self.H = H
        self.domain = H.domain
        self.S, self.p, self.b = H.S, H.p, H.b
        self._zeros: ZeroReport | None = None

    def _resolvent(self, z) -> np.ndarray:
        G = self.H.analytic(z)
        with np.errstate(all="ignore"):
            R = _inv2(G + np.eye(2))
        # at a pole of G the resolvent vanishes
        return np.where(np.isfinite(R), R, 0.0)

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return np.eye(2) - 2 * self._resolvent(z)

    def derivative(self, z) -> np.ndarray:
        R = self._resolvent(z)
        return 2 * R @ self.H.derivative(z) @ R

    def det(self, z):
        return _det2(self(z))

    def det_derivative(self, z):
        P = self(z)
        D = self.derivative(z)
        adj = np.empty_like(P)
        adj[..., 0, 0], adj[..., 1, 1] = P[..., 1, 1], P[..., 0, 0]
        adj[..., 0, 1], adj[..., 1, 0] = -P[..., 0, 1], -P[..., 1, 0]
        return np.einsum("...ij,...ji->...", adj, D)

    def radial_limit(self, point: complex, h0: float = 1e-4) -> np.ndarray:
        """Boundary value by Richardson extrapolation along the inward normal (3 levels)."""
        nrm = complex(self.domain.outward_normal(np.array([point]))[0])
        hs = h0 * np.array([1.0, 0.5, 0.25])
        vals = self(point - hs * nrm)
        return (8 * vals[2] - 6 * vals[1] + vals[0]) / 3

    @property
    def zero_report(self) -> ZeroReport:
        if self._zeros is None:
            self._zeros = det_zeros(self)
        return self._zeros


def psi(domain: CircularDomain, S: TeamOfProjections, p: PiPoint, b: float) -> MatrixInner:
    return MatrixInner(build_H(domain, S, p, b))


def unitarity_residual(F: MatrixInner, m: int = 256, min_dist: float = 0.1) -> float:
    """max ||Psi Psi^* - I|| over boundary nodes away from the Poisson poles."""
    pts = []
    theta = 2 * np.pi * (np.arange(m) + 0.5) / m
    for c in F.domain.circles:
        pts.append(c.point(theta))
    pts = np.concatenate(pts)
    poles = np.array(F.H.poles)
    keep = np.min(np.abs(pts[:, None] - poles[None, :]), axis=1) >= min_dist
    P = F(pts[keep])
    return float(np.max(np.linalg.norm(P @ np.conj(np.swapaxes(P, -1, -2)) - np.eye(2), 2, axis=(-2, -1))))


def det_zeros(F: MatrixInner) -> ZeroReport:
    """Zeros of det Psi with multiplicities; the total must be 2n + 2."""
    return find_zeros(F.det, F.det_derivative, F.domain, expected=2 * F.domain.n + 2)


@dataclass
class StandardZeroSet:
    b: float
    points: np.ndarray
    gammas: np.ndarray
    report: dict = field(default_factory=dict)


def left_null_vector(M: np.ndarray) -> tuple[np.ndarray, float]:
    """Unit gamma minimizing ||M^* gamma||, with that minimal value."""
    U, s, _ = np.linalg.svd(M)
    return U[:, -1], float(s[-1])


def _collinearity_margin(gammas: np.ndarray, n: int) -> float:
    """Smallest second singular value over all (n+1)-subsets (0 means collinear)."""
    worst = np.inf
    for idx in itertools.combinations(range(len(gammas)), n + 1):
        s = np.linalg.svd(gammas[list(idx)].T, compute_uv=False)
        worst = min(worst, s[1] if len(s) > 1 else 0.0)
    return float(worst)


def standard_zero_set(F: MatrixInner, critical: Sequence[float], null_tol: float = 1e-6,
                      sep_tol: float = 1e-3, collinear_tol: float = 1e-6,
                      distinct_tol: float = 1e-6) -> StandardZeroSet:
    """Check the standard-zero-set conditions and order the points by their gamma.

    Points whose null vector is closer to e_1 come first.
    """
    n = F.domain.n
    rep = F.zero_report
    b = F.b
    at_b = np.abs(rep.zeros - b) < distinct_tol
    others = rep.zeros[~at_b]
    mults = rep.multiplicities[~at_b]
    conds = {}
    b_mult = int(rep.multiplicities[at_b].sum())
    if len(others) > 1:
        d = np.abs(others[:, None] - others[None, :]) + np.eye(len(others)) * 1e9
        sep = float(min(d.min(), np.abs(others - b).min()))
    else:
        sep = float(np.abs(others - b).min()) if len(others) else 0.0
    ok1 = (len(others) == 2 * n and np.all(mults == 1) and b_mult == 2 and sep > distinct_tol)
    conds["distinct_simple"] = {"ok": bool(ok1), "margin": sep, "count": int(len(others)),
                                "b_multiplicity": b_mult}
    gam, smin = [], []
    for a in others:
        g, s = left_null_vector(F(np.array([a]))[0])
        # fix the phase so the largest entry is real positive
        k = int(np.argmax(np.abs(g)))
        g = g * np.conj(g[k]) / abs(g[k])
        gam.append(g)
        smin.append(s)
    gam = np.array(gam).reshape(-1, 2)
    order = np.argsort(-np.abs(gam[:, 0]), kind="stable") if len(gam) else np.array([], int)
    others, gam, smin = others[order], gam[order], np.array(smin)[order]
    null_ok = bool(np.all(smin < null_tol))
    coll = _collinearity_margin(gam, n) if len(gam) > n else 0.0
    conds["null_vectors"] = {"ok": null_ok, "margin": float(max(smin, default=np.inf))}
    conds["not_collinear"] = {"ok": bool(coll > collinear_tol), "margin": coll}
    crit = np.asarray(critical, dtype=float)
    cdist = float(np.min(np.abs(others[:, None] - crit[None, :]))) if len(others) else 0.0
    conds["critical_avoidance"] = {"ok": bool(cdist > sep_tol), "margin": cdist}
    report = {"conditions": conds, "zeros": others, "gammas": gam, "sigma_min": smin}
    if not all(v["ok"] for v in conds.values()):
        raise StandardZeroSetViolation(report)
    return StandardZeroSet(b, others, gam, report)


@dataclass
class DiagonalizationResult:
    success: bool
    residual: float
    witness: float
    U: np.ndarray | None = None
    V: np.ndarray | None = None
    phi: np.ndarray | None = None
    samples: np.ndarray | None = None


def attempt_diagonalize(F, samples, tol: float = 1e-6) -> DiagonalizationResult:
    """Look for constant unitaries U, V with F = U diag(phi_1, phi_2) V on the samples.

    The Hermitian matrices F(z)F(z)^* supply candidate bases; the one with
    the widest eigenvalue gap is tested on every product F(z)F(w)^*.
    """
    z = np.asarray(samples, dtype=complex)
    if len(z) < 6:
        raise ValueError("need at least six sample points")
    Fz = F(z)
    C = Fz[:, None] @ np.conj(np.swapaxes(Fz, -1, -2))[None, :]  # C[i, j] = F(z_i) F(z_j)^*
    gaps = []
    for i in range(len(z)):
        ev, vec = np.linalg.eigh(C[i, i])
        gaps.append((ev[1] - ev[0], i, vec))
    gaps.sort(key=lambda t: -t[0])
    gap, i0, U = gaps[0]
    scale = max(1.0, float(np.max(np.abs(C))))
    if gap < 1e-10 * scale:
        flat = C.reshape(-1, 2, 2)
        # every F(z)F(z)^* is scalar: pick any non-scalar product instead
        H = [m + m.conj().T for m in flat] + [1j * (m - m.conj().T) for m in flat]
        gaps2 = [(np.ptp(np.linalg.eigvalsh(h)), h) for h in H]
        g2, h = max(gaps2, key=lambda t: t[0])
        if g2 < 1e-10 * scale:
            return DiagonalizationResult(True, 0.0, 0.0, np.eye(2), None, None, z)
        _, U = np.linalg.eigh(h)
    T = np.conj(U.T)[None, None] @ C @ U[None, None]
    residual = float(np.max(np.abs(T[..., 0, 1])) + 0 * np.max(np.abs(T[..., 1, 0]))) / scale
    residual = max(residual, float(np.max(np.abs(T[..., 1, 0]))) / scale)
    flat = C.reshape(-1, 2, 2)
    comm = flat[:, None] @ flat[None, :] - flat[None, :] @ flat[:, None]
    witness = float(np.max(np.linalg.norm(comm, 2, axis=(-2, -1))))
    if residual >= tol:
        return DiagonalizationResult(False, residual, witness, samples=z)
    # rows of U^* F(z) are phi_k(z) times fixed row vectors
    W = np.conj(U.T)[None] @ Fz
    V = np.zeros((2, 2), dtype=complex)
    for k in range(2):
        idx = int(np.argmax(np.linalg.norm(W[:, k, :], axis=1)))
        V[k] = W[idx, k] / np.linalg.norm(W[idx, k])
    phi = np.einsum("nkj,kj->nk", W, np.conj(V))
    return DiagonalizationResult(True, residual, witness, U, V, phi, z)


@dataclass
class PickResult:
    matrix: np.ndarray
    rank: int
    singular_values: np.ndarray
    min_eigenvalue: float


def pick_matrix(F, kernel, points, threshold: float = 1e-8) -> PickResult:
    """Block matrix ((I - F(z)F(w)^*) K(z, w)) over the points, with numerical rank."""
    z = np.asarray(points, dtype=complex)
    Fz = F(z)
    K = kernel.gram(z)
    blocks = np.eye(2)[None, None] - Fz[:, None] @ np.conj(np.swapaxes(Fz, -1, -2))[None, :]
    M = (blocks * K[:, :, None, None]).transpose(0, 2, 1, 3).reshape(2 * len(z), 2 * len(z))
    M = 0.5 * (M + M.conj().T)
    s = np.linalg.svd(M, compute_uv=False)
    rank = int(np.sum(s > threshold * s[0]))
    return PickResult(M, rank, s, float(np.linalg.eigvalsh(M)[0]))


def extra_nodes(domain: CircularDomain, avoid: np.ndarray, count: int = 2, seed: int = 11,
                min_sep: float = 0.1) -> np.ndarray:
    """Deterministic interior points away from the given points and the boundary."""
    cand = interior_points(domain, 200, margin=0.1, seed=seed)
    out = []
    for c in cand:
        pool = np.concatenate([np.asarray(avoid, dtype=complex), np.array(out, dtype=complex)])
        if np.min(np.abs(pool - c)) > min_sep:
            out.append(c)
        if len(out) == count:
            break
    return np.array(out)


def select_t(domain: CircularDomain, p: PiPoint, b: float, critical, kernel=None,
             t_max: float = 0.1, step: float = 0.01) -> tuple[float, MatrixInner, StandardZeroSet, list]:
    """Largest t <= t_max (scanning down) whose Psi_{S_t} passes the zero-set and residue tests."""
    trace = []
    for k in range(int(round(t_max / step)), 0, -1):
        t = k * step
        F = psi(domain, perturb_team(t, domain.n), p, b)
        try:
            szs = standard_zero_set(F, critical)
        except (StandardZeroSetViolation, ZeroCountError) as exc:
            trace.append({"t": t, "szs": False, "error": str(exc)})
            continue
        entry = {"t": t, "szs": True}
        if kernel is not None:
            from .fay import epsilon_matrices
            eps = epsilon_matrices(kernel, szs.points, szs.gammas)
            entry.update({"eps": eps.holds, "cond": eps.cond_F})
            if not eps.holds:
                trace.append(entry)
                continue
        trace.append(entry)
        return t, F, szs, trace
    raise RuntimeError(f"no t in (0, {t_max}] passed: {trace}")

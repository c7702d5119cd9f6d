"""Discretized Agler-cone feasibility and transfer-function realizations.

Nodes z_1..z_N and test functions psi_1..psi_K give generator kernels
W_k(z, w) = 1 - psi_k(z) conj psi_k(w) (broadcast over d x d blocks when F is
d x d).  The target E - rho^2 F F^* (E the identity block at every node pair)
lies in the discretized cone when

    sum_k W_k (.) Gamma_k = E - rho^2 F F^*,   Gamma_k >= 0,

with (.) the entrywise product.  ``rho_max`` is the largest such rho.

Two engines answer feasibility questions.

* ``path``: a log-barrier path on the dual problem
  min <Y, E> s.t. <Y, F F^*> = 1, conj(W_k) (.) Y >= 0.  Every central point
  gives primal blocks Gamma_k = (conj(W_k) (.) Y)^{-1} / t, corrected to an
  exact certificate, and every dual-feasible Y bounds rho_max^2 <= <Y, E>.
* ``factorized``: Gamma_k = L_k L_k^* with the Frobenius residual minimized by
  L-BFGS from seeded random starts and finished by Levenberg-Marquardt.

Targets on the boundary of the cone (rho = rho_max) are handled by keeping
only the blocks and eigen-directions the path concentrates on and solving the
reduced factorized problem with Levenberg-Marquardt.

A certificate at rho_1 gives one at any rho_2 < rho_1: with a single generator,
E = W_k (.) Sz_k where Sz_k = (1 - psi_k psi_k^*)^{-1} (x) I is a positive
Szego-type kernel, and the mix with weight rho_2^2/rho_1^2 is exact.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize

from .domain import CircularDomain
from .testfn import PiPoint, test_function

FEAS_TOL = 1e-6
RESTARTS = 5
GRID_OFFSET = 0.1  # angle offset keeps doubled grids nested and off the real axis
EIG_FLOOR = 1e-9


class ConeError(RuntimeError):
    pass


class CompressionError(ConeError):
    pass


class GramMismatchError(ConeError):
    pass


class MonotonicityError(ConeError):
    pass


# discretization

@dataclass
class ConeDiscretization:
    """Test functions (callables) and their values on a node set."""

    domain: CircularDomain
    b: float
    nodes: np.ndarray
    functions: list = field(repr=False)
    labels: list
    grid: int = 0
    values: np.ndarray = field(init=False, repr=False)  # (K, N)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=complex)
        if len(self.functions) != len(self.labels):
            raise ValueError("one label per test function")
        self.values = np.array([np.asarray(f(self.nodes), dtype=complex) for f in self.functions])
        if np.max(np.abs(self.values)) >= 1:
            raise ValueError("test functions must be strictly contractive at the nodes")

    @property
    def K(self) -> int:
        return len(self.functions)

    @property
    def N(self) -> int:
        return len(self.nodes)

    def kernels(self) -> np.ndarray:
        """(K, N, N) array of 1 - psi_k(z) conj psi_k(w)."""
        v = self.values
        return 1 - v[:, :, None] * np.conj(v[:, None, :])

    def phi(self, z) -> np.ndarray:
        """(..., K) test-function values at arbitrary points."""
        z = np.asarray(z, dtype=complex)
        return np.stack([np.asarray(f(z), dtype=complex) for f in self.functions], axis=-1)


def grid_angles(grid: int) -> np.ndarray:
    return GRID_OFFSET + 2 * np.pi * np.arange(grid) / grid


def build_discretization(domain: CircularDomain, b: float, nodes, grid: int = 8,
                         extra: Sequence[Callable] = (), extra_labels: Sequence[str] = ()
                         ) -> ConeDiscretization:
    """``extra`` test functions followed by constrained ones (p_0 = -1) on a grid of hole angles."""
    nodes = np.asarray(nodes, dtype=complex)
    if len(nodes) < 2 * domain.n + 3:
        raise ValueError(f"need at least {2 * domain.n + 3} nodes, got {len(nodes)}")
    fns = list(extra)
    labels = list(extra_labels) or [f"extra{i}" for i in range(len(fns))]
    for angles in itertools.product(grid_angles(grid), repeat=domain.n):
        p = PiPoint.from_angles(domain, list(angles), True)
        fns.append(test_function(domain, p, b, locate_zeros=False))
        labels.append("grid:" + ",".join(f"{a:.6f}" for a in angles))
    return ConeDiscretization(domain, b, nodes, fns, labels, grid)


def default_nodes(domain: CircularDomain, zeros, b: float, count: int | None = None,
                  seed: int = 11) -> np.ndarray:
    """Distinct zeros with b, topped up with interior points to ``count`` (default 2n + 3)."""
    from .matinner import extra_nodes

    count = count or 2 * domain.n + 3
    pts = [complex(b)]
    for z in np.atleast_1d(zeros):
        if min(abs(z - q) for q in pts) > 1e-6:
            pts.append(complex(z))
    pts = np.array(pts)
    if len(pts) < count:
        pts = np.concatenate([pts, extra_nodes(domain, pts, count - len(pts), seed=seed)])
    return pts


def evaluate_F(F, nodes) -> np.ndarray:
    """F on nodes as (N, d, d); scalars become 1x1.  F may be a callable or its node values."""
    if callable(F):
        vals = np.asarray(F(np.asarray(nodes, dtype=complex)), dtype=complex)
    else:
        vals = np.asarray(F, dtype=complex)
        if len(vals) != len(nodes):
            raise ValueError("F values must match the nodes")
    if vals.ndim == 1:
        vals = vals[:, None, None]
    return vals


def block_gram(FS: np.ndarray) -> np.ndarray:
    """F(z) F(w)^* as an (N d, N d) matrix."""
    N, d, _ = FS.shape
    return np.einsum("iab,jcb->iajc", FS, np.conj(FS)).reshape(N * d, N * d)


def block_identity(N: int, d: int) -> np.ndarray:
    return np.kron(np.ones((N, N)), np.eye(d))


def block_target(FS: np.ndarray, rho: float) -> np.ndarray:
    """E - rho^2 F F^*."""
    N, d, _ = FS.shape
    return block_identity(N, d) - rho ** 2 * block_gram(FS)


def block_weights(disc: ConeDiscretization, d: int) -> np.ndarray:
    return np.kron(disc.kernels(), np.ones((d, d)))


def szego_blocks(disc: ConeDiscretization, d: int) -> np.ndarray:
    """(K, N d, N d) blocks with W_k (.) Sz_k = E exactly."""
    return np.kron(1 / disc.kernels(), np.eye(d))


# factorized least squares

class _Problem:
    """min over L_k of || sum_k W_k (.) L_k L_k^* - T ||_F."""

    def __init__(self, W: np.ndarray, T: np.ndarray, rank: int):
        self.W, self.T = W, T
        self.Wc = np.conj(W)
        self.K, self.m, _ = W.shape
        self.r = rank
        self.shape = (self.K, self.m, self.r)
        self.tnorm = float(np.linalg.norm(T))

    def unpack(self, x: np.ndarray) -> np.ndarray:
        h = x.size // 2
        return (x[:h] + 1j * x[h:]).reshape(self.shape)

    @staticmethod
    def pack(L: np.ndarray) -> np.ndarray:
        return np.concatenate([L.real.ravel(), L.imag.ravel()])

    def residual(self, L: np.ndarray) -> np.ndarray:
        return np.einsum("kij,kir,kjr->ij", self.W, L, np.conj(L), optimize=True) - self.T

    def fun_grad(self, x: np.ndarray):
        L = self.unpack(x)
        R = self.residual(L)
        f = float(np.sum(np.abs(R) ** 2))
        G = 4 * np.einsum("kij,ij,kjr->kir", self.Wc, R, L, optimize=True)
        return f, self.pack(G)

    def normal_matrix(self, L: np.ndarray) -> np.ndarray:
        """J J^T as a complex (m^2, m^2) matrix acting on Hermitian Y.

        J J^T Y = 2 sum_k W_k (.) ((conj W_k (.) Y) G_k + G_k (conj W_k (.) Y)), G_k = L_k L_k^*.
        """
        m = self.m
        G = np.einsum("kir,kjr->kij", L, np.conj(L))
        C = np.einsum("kaj,kab,kbj->abj", self.W, self.Wc, G, optimize=True)
        D = np.einsum("kab,kbj,kaj->abj", G, self.Wc, self.W, optimize=True)
        A = np.zeros((m, m, m, m), dtype=complex)  # [out a, out j, in c, in e]
        idx = np.arange(m)
        A[idx, :, idx, :] += np.transpose(C, (0, 2, 1))
        A[:, idx, :, idx] += np.transpose(D, (2, 0, 1))
        return 2 * A.reshape(m * m, m * m)

    def lbfgs(self, L0: np.ndarray, maxiter: int) -> np.ndarray:
        res = minimize(self.fun_grad, self.pack(L0), jac=True, method="L-BFGS-B",
                       options={"maxiter": maxiter, "maxcor": 20, "ftol": 1e-30, "gtol": 1e-14})
        return self.unpack(res.x)

    def levenberg_marquardt(self, L: np.ndarray, target: float, maxiter: int = 60) -> np.ndarray:
        """Minimum-norm damped Gauss-Newton steps dL = 2 (conj W (.) Y) L."""
        R = self.residual(L)
        f = np.linalg.norm(R)
        lam = 1e-3 * f
        eye = np.eye(self.m * self.m)
        for _ in range(maxiter):
            if f <= target:
                break
            A = self.normal_matrix(L)
            scale = np.max(np.abs(np.diag(A))) or 1.0
            accepted = False
            while lam < 1e8 * scale:
                Y = np.linalg.solve(A + lam * eye, -R.ravel()).reshape(self.m, self.m)
                Y = 0.5 * (Y + Y.conj().T)
                Ln = L + 2 * np.einsum("kij,ij,kjr->kir", self.Wc, Y, L, optimize=True)
                Rn = self.residual(Ln)
                fn = np.linalg.norm(Rn)
                if fn < f:
                    accepted = True
                    break
                lam *= 10
            if not accepted:
                break
            stalled = fn > 0.999 * f
            L, R, f = Ln, Rn, fn
            lam = max(lam / 10, 1e-16 * scale)
            if stalled:
                break
        return L


def _factor(G: np.ndarray, r: int, rel: float = 0.0) -> np.ndarray:
    """m x r factor of a Hermitian G, keeping eigenvalues above rel * max."""
    lam, U = np.linalg.eigh(G)
    lam, U = lam[::-1], U[:, ::-1]
    top = max(lam[0], 0.0)
    lam = np.where(lam > rel * top, lam, 0.0)
    return U[:, :r] * np.sqrt(np.clip(lam[:r], 0, None))


# certificates

@dataclass
class Certificate:
    """Positive blocks Gamma_k and the residual they achieve against E - rho^2 F F^*."""

    rho: float
    gammas: np.ndarray  # (K, N d, N d)
    residual: float
    target_norm: float
    labels: list = field(default_factory=list)
    block: int = 2
    source: str = ""

    @property
    def relative_residual(self) -> float:
        return self.residual / self.target_norm

    @property
    def feasible(self) -> bool:
        return self.relative_residual < FEAS_TOL

    @property
    def support(self) -> list[int]:
        tr = np.real(np.trace(self.gammas, axis1=1, axis2=2))
        return [k for k in range(len(tr)) if tr[k] > 0]

    def ranks(self, rel: float = 1e-12) -> list[int]:
        out = []
        for G in self.gammas:
            lam = np.linalg.eigvalsh(G)
            out.append(int(np.sum(lam > rel * max(lam[-1], 1e-300))) if lam[-1] > 0 else 0)
        return out

    def min_eigenvalue(self) -> float:
        return float(min(np.linalg.eigvalsh(G)[0] for G in self.gammas))

    def recompute(self, disc: ConeDiscretization, F) -> float:
        """Residual rebuilt from the stored blocks, the test functions and F."""
        return _residual_norm(block_weights(disc, self.block), self.gammas,
                              block_target(evaluate_F(F, disc.nodes), self.rho))

    def verify(self, disc: ConeDiscretization, F, tol: float = 1e-12) -> dict:
        again = self.recompute(disc, F)
        mineig = self.min_eigenvalue()
        return {"residual": self.residual, "recomputed": again,
                "reproduction_error": abs(again - self.residual),
                "reproduces": abs(again - self.residual) <= tol,
                "min_eigenvalue": mineig, "psd": mineig >= -EIG_FLOOR}


def _residual_norm(W: np.ndarray, gammas: np.ndarray, T: np.ndarray) -> float:
    return float(np.linalg.norm(np.einsum("kij,kij->ij", W, gammas) - T))


def _make_certificate(W, T, gammas, rho, disc, d, source) -> Certificate:
    gammas = 0.5 * (gammas + np.conj(np.swapaxes(gammas, 1, 2)))
    return Certificate(float(rho), gammas, _residual_norm(W, gammas, T),
                       float(np.linalg.norm(T)), list(disc.labels), d, source)


def lower_certificate(gammas: np.ndarray, rho_from: float, rho_to: float, sz: np.ndarray,
                      k: int = 0) -> np.ndarray:
    """Blocks for rho_to <= rho_from: mix with the exact single-generator representation of E."""
    s = (rho_to / rho_from) ** 2 if rho_from > 0 else 0.0
    out = s * gammas
    out[k] = out[k] + (1 - s) * sz[k]
    return out


def exact_correction(gammas: np.ndarray, rho2: float, W: np.ndarray, E: np.ndarray,
                     FF: np.ndarray, sz: np.ndarray) -> tuple[np.ndarray, float]:
    """Absorb the residual into one block so that the identity holds to rounding.

    With R = sum W (.) Gamma - (E - rho2 FF): Gamma_j -> Gamma_j - R / W_j + c Sz_j
    stays positive for c large enough and gives (1 + c) E - rho2 FF; dividing by
    1 + c yields an exact certificate at rho2 / (1 + c).
    """
    R = np.einsum("kij,kij->ij", W, gammas) - (E - rho2 * FF)
    best = None
    for j in range(len(gammas)):
        A = gammas[j] - R / W[j]
        A = 0.5 * (A + A.conj().T)
        need = -np.linalg.eigvalsh(A)[0]
        if need > 0:
            ev = np.linalg.eigvalsh(sz[j])
            if ev[0] <= 1e-12 * ev[-1]:
                continue  # this generator cannot absorb a negative direction
            c = need / ev[0] * 1.01
        else:
            c = 0.0
        if best is None or c < best[0]:
            best = (c, j, A)
    if best is None:
        # nothing can absorb the residual: fall back to the exact representation of E
        k = int(np.argmax([np.linalg.eigvalsh(b)[0] for b in sz]))
        out = np.zeros_like(gammas)
        out[k] = sz[k]
        return out, 0.0
    c, j, A = best
    out = gammas.copy()
    out[j] = A + c * sz[j]
    return out / (1 + c), rho2 / (1 + c)


# dual barrier path

@dataclass
class PathResult:
    rho2_certified: float  # exact certificate available up to here
    gammas: np.ndarray  # certificate at rho2_certified
    dual_bound: float  # rho_max^2 <= dual_bound
    Y: np.ndarray  # dual point achieving dual_bound, <Y, FF> = 1
    central: np.ndarray  # uncorrected blocks at the last central point
    history: list
    newton_steps: int
    stop: str


def _newton_solver(H: np.ndarray):
    """Solver for the Jacobi-scaled Hessian (None when it has no positive part)."""
    dg = np.sqrt(np.real(np.diag(H)))
    if not np.all(dg > 0):
        return None
    Hs = H / dg[:, None] / dg[None, :]
    try:
        cf = sla.cho_factor(Hs)
        return lambda v: sla.cho_solve(cf, v / dg) / dg
    except np.linalg.LinAlgError:
        pass
    # rounding made the scaled Hessian indefinite: pseudo-inverse on its numerical range
    lam, V = np.linalg.eigh(0.5 * (Hs + Hs.conj().T))
    keep = lam > 1e-13 * lam[-1]
    if not keep.any():
        return None
    Vk, inv = V[:, keep], 1.0 / lam[keep]
    return lambda v: (Vk @ (inv * (Vk.conj().T @ (v / dg)))) / dg


def _low_rank(W: np.ndarray, rel: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """W_k = sum_r s_r v_r v_r^* with the numerically nonzero eigenpairs (padded to a common rank)."""
    lam, V = np.linalg.eigh(W)
    keep = np.abs(lam) > rel * np.abs(lam).max()
    R = int(keep.sum(axis=1).max())
    order = np.argsort(-np.abs(lam), axis=1)[:, :R]
    s = np.take_along_axis(lam, order, axis=1)
    vecs = np.take_along_axis(V, order[:, None, :], axis=2)
    return s, np.swapaxes(vecs, 1, 2)  # (K, R), (K, R, m)


def _hessian(P: np.ndarray, s: np.ndarray, V: np.ndarray) -> np.ndarray:
    """sum_k diag(vec W_k) (P_k kron P_k^T) diag(vec conj W_k) as one matrix product.

    With W_k = sum_r s_r v_r v_r^* the entry ((i,j),(a,l)) is a sum of products
    A[i,a] B[l,j], so the K Kronecker products collapse into a single GEMM.
    """
    K, R, m = V.shape
    Vc = np.conj(V)
    # A[k,r,q,i,a] = v_r[i] P[i,a] conj(v_q)[a];  B[k,r,q,l,j] = s_r s_q v_q[l] P[l,j] conj(v_r)[j]
    A = V[:, :, None, :, None] * P[:, None, None] * Vc[:, None, :, None, :]
    B = ((s[:, :, None] * s[:, None, :])[..., None, None]
         * V[:, None, :, :, None] * P[:, None, None] * Vc[:, :, None, None, :])
    A = A.reshape(-1, m * m)
    B = B.reshape(-1, m * m)
    H = (A.T @ B).reshape(m, m, m, m)  # [i, a, l, j]
    return H.transpose(0, 3, 1, 2).reshape(m * m, m * m)


def dual_path(W: np.ndarray, FF: np.ndarray, E: np.ndarray, sz: np.ndarray,
              gap_tol: float = 1e-9, mu: float = 10.0, t_max: float = 1e13,
              center_tol: float = 1e-9, max_newton: int = 60, min_step: float = 1.2) -> PathResult:
    """Barrier path for min <Y, E> s.t. <Y, FF> = 1, conj(W_k) (.) Y >= 0."""
    K, m, _ = W.shape
    Wc = np.conj(W)
    a = FF.ravel()
    nu_total = K * m
    ws, wv = _low_rank(W)

    def factors(Y):
        out = []
        for k in range(K):
            try:
                out.append(np.linalg.cholesky(Wc[k] * Y))
            except np.linalg.LinAlgError:
                return None
        return out

    def barrier(Y, t, Ls):
        logdet = sum(2 * np.sum(np.log(np.real(np.diag(L)))) for L in Ls)
        return t * np.real(np.vdot(E, Y)) - logdet

    Y = np.eye(m) / np.real(np.trace(FF))
    Ls = factors(Y)
    t = nu_total / np.real(np.vdot(E, Y))
    best_dual, best_Y = np.real(np.vdot(E, Y)), Y.copy()
    best_gammas = sz.copy() * 0
    best_gammas[0] = sz[0]
    best_rho2 = 0.0
    central = best_gammas
    history, newton, stop = [], 0, "gap"
    eye = np.eye(m)
    step, last = mu, None  # last centered (Y, Ls, t)
    while True:
        ok, centered, steps = True, False, 0
        for _ in range(max_newton):
            P = np.array([sla.cho_solve((L, True), eye) for L in Ls])
            g = t * E - np.einsum("kij,kij->ij", W, P)
            H = _hessian(P, ws, wv)
            sol = _newton_solver(H)
            if sol is None:
                ok = False
                break
            Hg, Ha = sol(g.ravel()), sol(a)
            nu = -np.real(np.vdot(a, Hg)) / np.real(np.vdot(a, Ha))
            d = -(Hg + nu * Ha)
            newton += 1
            steps += 1
            dec = np.real(np.vdot(d, H @ d))
            if dec / 2 < center_tol:
                centered = True
                break
            D = d.reshape(m, m)
            D = 0.5 * (D + D.conj().T)
            if dec < 0.5:
                # inside the quadratic region a full step is safe; function values are
                # too large (~t) to resolve the decrease in floating point
                Ln = factors(Y + D)
                if Ln is not None:
                    Y, Ls = Y + D, Ln
                    continue
            f0, slope, s = barrier(Y, t, Ls), np.real(np.vdot(g, D)), 1.0
            while s > 1e-10:
                Yn = Y + s * D
                Ln = factors(Yn)
                if Ln is not None and barrier(Yn, t, Ln) <= f0 + 0.25 * s * slope:
                    break
                s /= 2
            else:
                ok = False
                break
            Y, Ls = Yn, Ln
        # every iterate is dual feasible, centered or not
        dual = np.real(np.vdot(E, Y)) / np.real(np.vdot(FF, Y))
        if dual < best_dual:
            best_dual, best_Y = dual, Y / np.real(np.vdot(FF, Y))
        P = np.array([sla.cho_solve((L, True), eye) for L in Ls])
        gam = P / t
        comb = np.einsum("kij,kij->ij", W, gam)
        rho2 = np.real(np.vdot(FF, E - comb)) / np.real(np.vdot(FF, FF))
        cg, cr = exact_correction(gam, rho2, W, E, FF, sz)
        if cr > best_rho2:
            best_rho2, best_gammas = cr, cg
        history.append({"t": float(t), "rho2": float(cr), "dual": float(dual),
                        "newton": steps, "centered": centered, "gap": float(best_dual - best_rho2)})
        if len(history) > 4 and history[-1]["gap"] > 0.99 * history[-5]["gap"]:
            stop = "stalled"
            break
        if not centered:
            if last is not None and step > min_step:
                # retreat to the last central point and take a shorter step
                Y, Ls, t0 = last
                step = np.sqrt(step)
                t = t0 * step
                continue
            stop = "numerical"
            break
        central = gam
        last = (Y, Ls, t)
        if best_dual - best_rho2 < gap_tol:
            break
        if t > t_max:
            stop = "t_max"
            break
        step = min(mu, step * step)
        t *= step
    return PathResult(best_rho2, best_gammas, best_dual, best_Y, central, history, newton, stop)


# solver with cached path

@dataclass
class FeasibilityResult:
    rho: float
    feasible: bool
    residual: float  # best relative residual found
    certificate: Certificate
    floor_bound: float = 0.0  # certified lower bound on the relative residual (0 if none)
    restarts: list = field(default_factory=list)
    method: str = "path"

    @property
    def floor(self) -> float:
        return self.residual


class ConeSolver:
    """Feasibility of E - rho^2 F F^* for one F and one discretization."""

    def __init__(self, F, disc: ConeDiscretization):
        self.F, self.disc = F, disc
        self.FS = evaluate_F(F, disc.nodes)
        self.d = self.FS.shape[1]
        self.W = block_weights(disc, self.d)
        self.E = block_identity(disc.N, self.d)
        self.FF = block_gram(self.FS)
        self.sz = szego_blocks(disc, self.d)
        self._path: PathResult | None = None

    def target(self, rho: float) -> np.ndarray:
        return self.E - rho ** 2 * self.FF

    @property
    def path(self) -> PathResult:
        if self._path is None:
            self._path = dual_path(self.W, self.FF, self.E, self.sz)
        return self._path

    @property
    def rho_certified(self) -> float:
        return float(np.sqrt(max(self.path.rho2_certified, 0.0)))

    @property
    def rho_bound(self) -> float:
        return float(np.sqrt(max(self.path.dual_bound, 0.0)))

    def certificate(self, gammas, rho, source) -> Certificate:
        return _make_certificate(self.W, self.target(rho), gammas, rho, self.disc, self.d, source)

    def floor_bound(self, rho: float) -> float:
        """Lower bound on ||residual|| / ||target|| from the dual point (0 when rho is not above it)."""
        pr = self.path
        gap = rho ** 2 - pr.dual_bound
        if gap <= 0:
            return 0.0
        return float(gap / np.linalg.norm(pr.Y) / np.linalg.norm(self.target(rho)))

    def face_polish(self, rho: float, rels: Sequence[float] = (1e-2, 1e-3, 1e-4),
                    tol: float = 1e-12) -> Certificate | None:
        """Keep the blocks and directions the path concentrates on, then solve the reduced problem."""
        base = self.path.central
        tr = np.real(np.trace(base, axis1=1, axis2=2))
        T = self.target(rho)
        best = None
        for rel in rels:
            keep = np.flatnonzero(tr >= rel * tr.max())
            facs = [_factor(base[k], base.shape[1], rel) for k in keep]
            r = max(1, max(int(np.sum(np.linalg.norm(f, axis=0) > 0)) for f in facs))
            L = np.array([f[:, :r] for f in facs])
            prob = _Problem(self.W[keep], T, r)
            L = prob.levenberg_marquardt(L, tol * prob.tnorm, maxiter=80)
            full = np.zeros_like(base)
            full[keep] = np.einsum("kir,kjr->kij", L, np.conj(L))
            cert = self.certificate(full, rho, f"face:{rel:g}")
            if best is None or cert.residual < best.residual:
                best = cert
            if cert.relative_residual < tol * 10:
                break
        return best

    def factorized(self, rho: float, seed: int = 7, restarts: int = RESTARTS, warm=None,
                   maxiter: int = 600, tol: float = FEAS_TOL) -> FeasibilityResult:
        """Random-start factorized search (L-BFGS then Levenberg-Marquardt)."""
        T = self.target(rho)
        m = T.shape[0]
        prob = _Problem(self.W, T, m)
        rng = np.random.default_rng(seed)
        starts = [] if warm is None else [np.stack([_factor(G, m) for G in warm])]
        for _ in range(restarts):
            L0 = rng.standard_normal(prob.shape) + 1j * rng.standard_normal(prob.shape)
            starts.append(L0 / np.sqrt(self.disc.K * m * m))
        best, trace = None, []
        for L0 in starts:
            L = prob.lbfgs(L0, maxiter)
            L = prob.levenberg_marquardt(L, 1e-3 * tol * prob.tnorm)
            cert = self.certificate(np.einsum("kir,kjr->kij", L, np.conj(L)), rho, "factorized")
            trace.append(cert.relative_residual)
            if best is None or cert.residual < best.residual:
                best = cert
            if best.relative_residual < tol:
                break
        return FeasibilityResult(rho, best.relative_residual < tol, best.relative_residual, best,
                                 0.0, trace, "factorized")

    def feasible(self, rho: float, tol: float = FEAS_TOL) -> FeasibilityResult:
        pr = self.path
        rc = self.rho_certified
        if rho <= rc:
            g = lower_certificate(pr.gammas, rc, rho, self.sz) if rho < rc else pr.gammas
            cert = self.certificate(g, rho, "path")
            return FeasibilityResult(rho, cert.relative_residual < tol, cert.relative_residual,
                                     cert)
        floor = self.floor_bound(rho)
        cert = self.certificate(pr.gammas, rho, "path")
        if floor == 0.0:
            # between the certified rho and the dual bound: solve on the identified face
            face = self.face_polish(rho)
            if face is not None and face.residual < cert.residual:
                cert = face
        return FeasibilityResult(rho, cert.relative_residual < tol, cert.relative_residual,
                                 cert, floor)


def cone_feasible(F, rho: float, disc: ConeDiscretization, method: str = "path",
                  seed: int = 7, restarts: int = RESTARTS, warm=None,
                  tol: float = FEAS_TOL, solver: ConeSolver | None = None) -> FeasibilityResult:
    """Is E - rho^2 F F^* in the discretized cone?  Infeasibility is a residual floor."""
    solver = solver or ConeSolver(F, disc)
    if method == "path":
        return solver.feasible(rho, tol)
    if method == "factorized":
        return solver.factorized(rho, seed=seed, restarts=restarts, warm=warm, tol=tol)
    raise ValueError(f"unknown method {method!r}")


@dataclass
class RhoEstimate:
    rho_lower: float | None
    rho_upper: float | None
    certificate: Certificate | None
    trace: list  # (rho, feasible, relative residual, floor bound)
    seed: int
    grid: int
    rho_certified: float = 0.0
    rho_bound: float = 1.0

    @property
    def estimate(self) -> float:
        return self.rho_lower if self.rho_lower is not None else 0.0

    def to_dict(self) -> dict:
        return {"rho_lower": self.rho_lower, "rho_upper": self.rho_upper,
                "residual_trace": [{"rho": r, "feasible": f, "residual": e, "floor_bound": fb}
                                   for r, f, e, fb in self.trace],
                "seed": self.seed, "grid": self.grid,
                "rho_certified": self.rho_certified, "rho_bound": self.rho_bound}


def rho_estimate(F, disc: ConeDiscretization, lo: float = 0.5, hi: float = 1.0,
                 width: float = 0.005, seed: int = 7, method: str = "path",
                 solver: ConeSolver | None = None, refine: int = 12, refine_width: float = 1e-7,
                 **kw) -> RhoEstimate:
    """Bisection for the largest feasible rho in [lo, hi]; hi is tried first.

    With the path method the bracket is then tightened by the certified value and
    the dual bound and bisected again, at most ``refine`` times.
    """
    solver = solver or ConeSolver(F, disc)
    trace = []

    def trial(rho, warm=None):
        extra = {"warm": warm} if method == "factorized" else {}
        res = cone_feasible(F, rho, disc, method=method, seed=seed, solver=solver, **extra, **kw)
        trace.append((float(rho), bool(res.feasible), float(res.residual), float(res.floor_bound)))
        return res

    def monotone():
        feas = [r for r, f, _, _ in trace if f]
        infeas = [r for r, f, _, _ in trace if not f]
        if feas and infeas and max(feas) > min(infeas):
            raise MonotonicityError(f"feasible at {max(feas)} but not at {min(infeas)}")

    def done(a, b, cert):
        monotone()
        if method != "path":
            return RhoEstimate(a, b, cert, trace, seed, disc.grid)
        rc, rb = solver.rho_certified, solver.rho_bound
        # tighten the bisection bracket with the path's certified value and dual bound
        if b is not None and rc > (a if a is not None else -1.0) and rc < b:
            res = solver.feasible(rc)
            if res.feasible:
                a, cert = rc, res.certificate
        if b is not None and rb < b:
            b = max(rb, a if a is not None else rb)
        # refine inside the band, where trials are settled on the path's face
        for _ in range(refine):
            if a is None or b is None or b - a <= refine_width:
                break
            mid = 0.5 * (a + b)
            res = trial(mid)
            if res.feasible:
                a, cert = mid, res.certificate
            else:
                b = mid
        monotone()
        return RhoEstimate(a, b, cert, trace, seed, disc.grid, rc, rb)

    top = trial(hi)
    if top.feasible:
        return done(hi, None, top.certificate)
    bottom = trial(lo)
    if not bottom.feasible:
        return done(None, lo, None)
    a, b, cert = lo, hi, bottom.certificate
    while b - a > width:
        mid = 0.5 * (a + b)
        res = trial(mid, cert.gammas)
        if res.feasible:
            a, cert = mid, res.certificate
        else:
            b = mid
    return done(a, b, cert)


# scalar decompositions

@dataclass
class AglerDecomposition:
    """1 - rho(z) conj rho(w) = sum_j w_j h_j(z) (1 - psi_{k_j}(z) conj psi_{k_j}(w)) conj h_j(w) on S."""

    generators: np.ndarray  # index k_j into the discretization
    weights: np.ndarray  # w_j >= 0
    h: np.ndarray  # (terms, N) values on the nodes
    residual: float  # max-abs entrywise residual
    shift: complex = 0.0  # rho(b) removed by the Moebius map

    def kernel(self, disc: ConeDiscretization) -> np.ndarray:
        Wk = disc.kernels()[self.generators]
        return np.einsum("j,ja,jab,jb->ab", self.weights, self.h, Wk, np.conj(self.h))


def scalar_agler(rho_fn, disc: ConeDiscretization, rel: float = 1e-12,
                 tol: float = FEAS_TOL) -> AglerDecomposition:
    """Discrete decomposition for a scalar contraction; rho(b) != 0 is first moved to 0."""
    vals = np.asarray(rho_fn(disc.nodes), dtype=complex)
    ib = int(np.argmin(np.abs(disc.nodes - disc.b)))
    a = complex(vals[ib]) if abs(disc.nodes[ib] - disc.b) < 1e-12 else complex(rho_fn(np.array([disc.b]))[0])
    sigma = (vals - a) / (1 - np.conj(a) * vals)
    scale = (1 - np.conj(a) * vals) / np.sqrt(1 - abs(a) ** 2)

    solver = ConeSolver(sigma, disc)
    res = solver.feasible(1.0, tol)
    cert = res.certificate
    if not res.feasible:
        raise ConeError(f"decomposition residual {res.residual:.2e}; enlarge the test-function grid")
    # prefer the fewest terms: the face solution when it is as accurate
    face = solver.face_polish(1.0)
    if face is not None and face.relative_residual < tol and \
            sum(face.ranks(1e-10)) < sum(cert.ranks(rel)):
        cert = face
        rel = 1e-10
    gens, weights, hs = [], [], []
    for k, G in enumerate(cert.gammas):
        lam, U = np.linalg.eigh(G)
        top = lam[-1]
        for j in range(len(lam) - 1, -1, -1):
            if top <= 0 or lam[j] <= rel * top:
                break
            u = U[:, j] * scale
            # normalize h(b) = 1 when possible so single terms read h = 1
            ph = u[ib] if abs(u[ib]) > 1e-12 else np.linalg.norm(u)
            gens.append(k)
            weights.append(lam[j] * abs(ph) ** 2)
            hs.append(u / ph)
    dec = AglerDecomposition(np.array(gens, dtype=int), np.array(weights), np.array(hs), 0.0, a)
    target = 1 - vals[:, None] * np.conj(vals[None, :])
    dec.residual = float(np.max(np.abs(dec.kernel(disc) - target)))
    return dec


# colligations

@dataclass
class Colligation:
    """Unitary U = [[A, B], [C, D]] on K (+) C^d with Phi(z) = diag(psi_k(z) I_{r_k})."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    generators: list  # test-function index per aux coordinate
    disc: ConeDiscretization = field(repr=False)
    gram_mismatch: float = 0.0

    @property
    def U(self) -> np.ndarray:
        return np.block([[self.A, self.B], [self.C, self.D]])

    @property
    def aux_dim(self) -> int:
        return self.A.shape[0]

    def unitarity_error(self) -> float:
        U = self.U
        return float(np.linalg.norm(U.conj().T @ U - np.eye(U.shape[0]), 2))

    def phi(self, z) -> np.ndarray:
        """(..., aux) diagonal of Phi(z)."""
        vals = self.disc.phi(z)
        return vals[..., self.generators]


def transfer_eval(sigma: Colligation, z) -> np.ndarray:
    """W(z) = D + C (I - Phi(z) A)^{-1} Phi(z) B."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    ph = sigma.phi(z)
    out = []
    eye = np.eye(sigma.aux_dim)
    for row in ph:
        M = eye - row[:, None] * sigma.A
        if np.linalg.cond(M) > 1e12:
            raise ConeError("resolvent is near singular")
        out.append(sigma.D + sigma.C @ np.linalg.solve(M, row[:, None] * sigma.B))
    return np.array(out)


def transfer_identity_residual(sigma: Colligation, z: complex, w: complex) -> float:
    """|| I - W(z)W(w)^* - C (I - Phi(z)A)^{-1} (I - Phi(z)Phi(w)^*) (I - A^*Phi(w)^*)^{-1} C^* ||."""
    pz, pw = sigma.phi(np.array([z]))[0], sigma.phi(np.array([w]))[0]
    eye = np.eye(sigma.aux_dim)
    Wz, Ww = transfer_eval(sigma, z)[0], transfer_eval(sigma, w)[0]
    Rz = np.linalg.inv(eye - pz[:, None] * sigma.A)
    Rw = np.linalg.inv(eye - pw[:, None] * sigma.A)
    mid = np.diag(1 - pz * np.conj(pw))
    rhs = sigma.C @ Rz @ mid @ Rw.conj().T @ sigma.C.conj().T
    lhs = np.eye(Wz.shape[0]) - Wz @ Ww.conj().T
    return float(np.max(np.abs(lhs - rhs)))


def build_colligation(cert: Certificate, F, disc: ConeDiscretization, rel: float = 1e-10,
                      max_dim: int | None = None, gram_tol: float = 1e-8) -> Colligation:
    """Lurking-isometry realization of F from a certificate at rho = 1.

    With Gamma_k = H_k H_k^*, the vectors x(z) = [I; Phi(z)^* H(z)^*] and
    y(z) = [F(z)^*; H(z)^*] have equal Gram matrices; the unitary mapping one
    family to the other (Procrustes) rearranges into the colligation.
    """
    if abs(cert.rho - 1.0) > 1e-12:
        raise ConeError("a colligation needs a certificate at rho = 1")
    max_dim = max_dim or 4 * disc.domain.n + 6
    FS = evaluate_F(F, disc.nodes)
    N, d, _ = FS.shape
    ib = int(np.argmin(np.abs(disc.nodes - disc.b)))
    if np.max(np.abs(FS[ib])) > 1e-8:
        raise ConeError("F(b) must vanish")
    H, gens = [], []
    for k, G in enumerate(cert.gammas):
        lam, U = np.linalg.eigh(G)
        top = lam[-1]
        if top <= 0:
            continue
        sel = lam > rel * max(np.max(np.linalg.eigvalsh(g)[-1]) for g in cert.gammas)
        if not np.any(sel):
            continue
        H.append(U[:, sel] * np.sqrt(lam[sel]))
        gens += [k] * int(np.sum(sel))
    H = np.concatenate(H, axis=1)  # (N d, aux)
    aux = H.shape[1]
    if aux > max_dim:
        raise CompressionError(f"aux dimension {aux} exceeds {max_dim}")
    vals = disc.values[gens]  # (aux, N)
    X, Yv = [], []
    for i in range(N):
        Hz = H[i * d:(i + 1) * d]  # d x aux
        X.append(np.vstack([np.eye(d), (np.conj(vals[:, i])[:, None] * Hz.conj().T)]))
        Yv.append(np.vstack([FS[i].conj().T, Hz.conj().T]))
    X, Yv = np.hstack(X), np.hstack(Yv)
    mismatch = float(np.max(np.abs(X.conj().T @ X - Yv.conj().T @ Yv)))
    if mismatch > gram_tol:
        raise GramMismatchError(f"Gram mismatch {mismatch:.2e}")
    P, _, Qh = np.linalg.svd(Yv @ X.conj().T)
    V = P @ Qh  # V X = Y
    Dp, Cp = V[:d, :d], V[:d, d:]
    Bp, Ap = V[d:, :d], V[d:, d:]
    return Colligation(Ap.conj().T, Cp.conj().T, Bp.conj().T, Dp.conj().T, gens, disc, mismatch)

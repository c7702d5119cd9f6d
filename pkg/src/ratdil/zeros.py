"""Zeros of analytic functions on a circular domain via the argument principle.

The count comes from the winding of the function along the positively
oriented boundary.  Locations come from the power-sum moments
``(1/2 pi i) \\oint z^k f'/f dz`` (Delves-Lyness), which are converted to a
polynomial whose roots are polished by Newton's method.  Multiplicities are
confirmed by winding numbers on small circles.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .domain import CircularDomain


class ZeroCountError(RuntimeError):
    def __init__(self, winding: int, expected: int, detail: str = ""):
        self.winding = winding
        self.expected = expected
        super().__init__(f"winding number {winding}, expected {expected} {detail}".strip())


@dataclass
class ZeroReport:
    zeros: np.ndarray
    multiplicities: np.ndarray
    winding: int
    curve_windings: list[int]
    moment_error: float
    newton_residual: float
    meta: dict = field(default_factory=dict)

    def expanded(self) -> np.ndarray:
        return np.repeat(self.zeros, self.multiplicities)


def boundary_contour(domain: CircularDomain, m: int, offset: float = 0.5):
    """Nodes, dz weights and curve labels of the positively oriented boundary."""
    theta = 2 * np.pi * (np.arange(m) + offset) / m
    zs, dzs, labels = [], [], []
    for i, c in enumerate(domain.circles):
        e = np.exp(1j * theta)
        sign = 1.0 if i == 0 else -1.0
        zs.append(c.center + c.radius * e)
        dzs.append(sign * 1j * c.radius * e * 2 * np.pi / m)
        labels.append(np.full(m, i))
    return np.concatenate(zs), np.concatenate(dzs), np.concatenate(labels)


def curve_winding(values: np.ndarray, sign: float) -> int:
    """Winding number of a closed sampled curve around 0."""
    ph = np.unwrap(np.angle(np.append(values, values[0])))
    return int(round(sign * (ph[-1] - ph[0]) / (2 * np.pi)))


def circle_winding(f: Callable, center: complex, radius: float, nodes: int = 128) -> int:
    z = center + radius * np.exp(2j * np.pi * np.arange(nodes) / nodes)
    return curve_winding(f(z), 1.0)


def _newton_polish(f, df, z0: complex, mult: int, iters: int = 50) -> complex:
    z = complex(z0)
    for _ in range(iters):
        fz, dfz = complex(f(np.array([z]))[0]), complex(df(np.array([z]))[0])
        if dfz == 0 or not np.isfinite(fz):
            break
        step = mult * fz / dfz
        z -= step
        if abs(step) < 1e-15 * max(1.0, abs(z)):
            break
    return z


def find_zeros(f: Callable, df: Callable, domain: CircularDomain, expected: int | None = None,
               logderiv: Callable | None = None, m: int = 1024, cluster_tol: float = 1e-4) -> ZeroReport:
    """All zeros of ``f`` inside the domain, with multiplicities."""
    logderiv = logderiv or (lambda z: df(z) / f(z))
    z, dz, labels = boundary_contour(domain, m)
    fz = f(z)
    windings = []
    for i in range(domain.n + 1):
        sel = labels == i
        # nodes run counterclockwise on every circle; holes count negatively
        windings.append(curve_winding(fz[sel], 1.0 if i == 0 else -1.0))
    total = int(sum(windings))
    if expected is not None and total != expected:
        raise ZeroCountError(total, expected, f"(per curve {windings})")
    if total == 0:
        return ZeroReport(np.zeros(0, complex), np.zeros(0, int), 0, windings, 0.0, 0.0)
    c0, R0 = domain.outer.center, domain.outer.radius
    s = (z - c0) / R0
    g = logderiv(z) * dz / (2j * np.pi)
    moments = np.array([np.sum(g * s ** k) for k in range(total + 1)])
    moment_error = float(abs(moments[0] - total))
    # Newton identities: power sums -> elementary symmetric polynomials
    e = np.zeros(total + 1, dtype=complex)
    e[0] = 1.0
    for k in range(1, total + 1):
        acc = 0.0
        for i in range(1, k + 1):
            acc += (-1) ** (i - 1) * e[k - i] * moments[i]
        e[k] = acc / k
    coeffs = np.array([(-1) ** k * e[k] for k in range(total + 1)])
    roots = c0 + R0 * np.roots(coeffs)
    # cluster near-coincident roots into multiple zeros
    clusters: list[list[complex]] = []
    for r in sorted(roots, key=lambda x: (x.real, x.imag)):
        for cl in clusters:
            if abs(np.mean(cl) - r) < cluster_tol:
                cl.append(r)
                break
        else:
            clusters.append([r])
    zeros, mults = [], []
    for cl in clusters:
        mult = len(cl)
        zeros.append(_newton_polish(f, df, np.mean(cl), mult))
        mults.append(mult)
    zeros = np.array(zeros)
    mults = np.array(mults)
    # confirm multiplicities by local winding
    for i, z0 in enumerate(zeros):
        others = np.delete(zeros, i)
        sep = np.min(np.abs(others - z0)) if len(others) else 1.0
        rad = min(1e-3, 0.4 * sep, 0.5 * float(domain.boundary_distance(z0)))
        w = circle_winding(f, z0, rad)
        if w != mults[i]:
            raise ZeroCountError(w, int(mults[i]), f"(local winding at {z0})")
    resid = float(np.max(np.abs(f(zeros)))) if len(zeros) else 0.0
    return ZeroReport(zeros, mults, total, windings, moment_error, resid,
                      {"nodes_per_curve": m})

"""Static SVG figures for pipeline reports.

Output is deterministic: fixed hash salt and no creation date in the metadata.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "ratdil"


def _save(fig, path: Path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def domain_svg(domain, path, zeros=None, base=None) -> Path:
    """Boundary circles, base point and zeros."""
    fig, ax = plt.subplots(figsize=(5, 5))
    theta = np.linspace(0, 2 * np.pi, 400)
    for c in domain.circles:
        z = c.point(theta)
        ax.plot(z.real, z.imag, "k-", lw=1)
    if zeros is not None and len(zeros):
        z = np.asarray(zeros)
        ax.plot(z.real, z.imag, "o", color="tab:red", label="zeros")
    if base is not None:
        ax.plot([np.real(base)], [np.imag(base)], "s", color="tab:blue", label="b")
    ax.set_aspect("equal")
    if zeros is not None or base is not None:
        ax.legend(loc="upper right")
    ax.set_title("domain")
    return _save(fig, path)


def modulus_svg(domain, psi, path, m: int = 512) -> Path:
    """|psi| along each boundary curve against angle."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    theta = 2 * np.pi * (np.arange(m) + 0.5) / m
    for i, c in enumerate(domain.circles):
        ax.plot(theta, np.abs(psi(c.point(theta))), lw=1, label=f"B_{i}")
    ax.set_xlabel("angle")
    ax.set_ylabel("|psi|")
    ax.legend()
    return _save(fig, path)


def bisection_svg(trace, path) -> Path:
    """Relative residual of every bisection trial (filled markers are feasible)."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for r in trace:
        rho, ok, res = r["rho"], r["feasible"], max(r["residual"], 1e-18)
        ax.semilogy([rho], [res], "o", color="tab:green" if ok else "tab:red",
                    fillstyle="full" if ok else "none")
    ax.set_xlabel("rho")
    ax.set_ylabel("relative residual")
    return _save(fig, path)

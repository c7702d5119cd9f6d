"""Conjugation-symmetric circular domains.

A domain is the unit-style outer disk with ``n >= 2`` disjoint closed disks
removed, every circle centred on the real axis.  Complex conjugation is then
an anticonformal involution of the domain whose fixed points on the boundary
are the ``2n + 2`` intersections of the circles with the real axis.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np


class DomainError(ValueError):
    """Invalid domain geometry."""


@dataclass(frozen=True)
class Circle:
    center: float
    radius: float

    def point(self, angle):
        return self.center + self.radius * np.exp(1j * np.asarray(angle, dtype=float))

    def angle_of(self, z):
        return np.angle(np.asarray(z, dtype=complex) - self.center)


@dataclass(frozen=True)
class CircularDomain:
    """Outer disk minus ``n`` hole disks, all centred on the real axis.

    Curve 0 is the outer circle, curves ``1..n`` are the holes from left to
    right.  Use :func:`build_domain` to get a validated instance.
    """

    outer: Circle
    holes: tuple[Circle, ...]

    @property
    def n(self) -> int:
        return len(self.holes)

    @property
    def circles(self) -> tuple[Circle, ...]:
        return (self.outer,) + tuple(self.holes)

    def curve(self, i: int) -> Circle:
        return self.circles[i]

    def boundary_distance(self, z):
        """Signed distance to the boundary, positive inside the domain."""
        z = np.asarray(z, dtype=complex)
        d = self.outer.radius - np.abs(z - self.outer.center)
        for h in self.holes:
            d = np.minimum(d, np.abs(z - h.center) - h.radius)
        return d

    def curve_gap(self, i: int) -> float:
        """Distance from circle i to the nearest other circle."""
        c = self.circles[i]
        gaps = []
        for j, other in enumerate(self.circles):
            if j == i:
                continue
            d = abs(c.center - other.center)
            gaps.append(abs(max(c.radius, other.radius) - min(c.radius, other.radius) - d)
                        if (j == 0 or i == 0) else d - c.radius - other.radius)
        return min(gaps)

    def contains(self, z, margin: float = 0.0):
        return self.boundary_distance(z) > margin

    def nearest_curve(self, z):
        """Index of the circle closest to each point."""
        z = np.asarray(z, dtype=complex)
        dist = np.stack([np.abs(np.abs(z - c.center) - c.radius) for c in self.circles])
        return np.argmin(dist, axis=0)

    def outward_normal(self, z, curve=None):
        """Unit normal pointing out of the domain at boundary points."""
        z = np.asarray(z, dtype=complex)
        curve = self.nearest_curve(z) if curve is None else np.asarray(curve)
        centers = np.array([c.center for c in self.circles])[curve]
        u = (z - centers) / np.abs(z - centers)
        return np.where(curve == 0, u, -u)

    def to_config(self) -> dict:
        return {
            "outer": {"center": self.outer.center, "radius": self.outer.radius},
            "holes": [{"center": h.center, "radius": h.radius} for h in self.holes],
        }


def _as_real(value, what: str) -> float:
    if isinstance(value, complex):
        if value.imag != 0:
            raise DomainError(f"{what} must lie on the real axis, got {value}")
        value = value.real
    if isinstance(value, (list, tuple)):
        if len(value) == 2 and value[1] != 0:
            raise DomainError(f"{what} must lie on the real axis, got {value}")
        value = value[0]
    if isinstance(value, str):
        raise DomainError(f"{what} must be a number, got {value!r}")
    return float(value)


def _circle(entry, what: str) -> Circle:
    if isinstance(entry, Circle):
        return entry
    if isinstance(entry, dict):
        center, radius = entry["center"], entry["radius"]
    else:
        center, radius = entry
    c = _as_real(center, f"{what} center")
    r = float(radius)
    if not r > 0:
        raise DomainError(f"{what} radius must be positive, got {r}")
    return Circle(c, r)


def build_domain(config) -> CircularDomain:
    """Validate a geometry description and return the domain.

    ``config`` is a mapping ``{"outer": {...}, "holes": [{...}, ...]}`` with
    ``center``/``radius`` entries, or a path to a JSON file of that form.
    """
    if isinstance(config, (str, Path)):
        config = json.loads(Path(config).read_text())
    outer = _circle(config["outer"], "outer circle")
    holes = [_circle(h, f"hole {i + 1}") for i, h in enumerate(config.get("holes", []))]
    if len(holes) < 2:
        raise DomainError(
            f"need n >= 2 holes, got n = {len(holes)}"
        )
    holes.sort(key=lambda h: h.center)
    for i in range(len(holes) - 1):
        a, b = holes[i], holes[i + 1]
        if b.center - a.center <= a.radius + b.radius:
            raise DomainError(f"holes {i + 1} and {i + 2} overlap")
    for i, h in enumerate(holes):
        if abs(h.center - outer.center) + h.radius >= outer.radius:
            raise DomainError(f"hole {i + 1} is not inside the outer disk")
    return CircularDomain(outer, tuple(holes))


def reference_domain() -> CircularDomain:
    """Unit disk minus the disks of radius 0.15 centred at -0.5 and 0.5."""
    return build_domain(
        {"outer": {"center": 0.0, "radius": 1.0},
         "holes": [{"center": -0.5, "radius": 0.15}, {"center": 0.5, "radius": 0.15}]}
    )


def disk_domain(center: float = 0.0, radius: float = 1.0) -> CircularDomain:
    """Hole-free disk; bypasses validation and is only meant for sanity checks."""
    return CircularDomain(Circle(center, radius), ())


@dataclass(frozen=True)
class BoundarySample:
    curve: int
    angle: float
    point: complex
    outward_normal: complex
    weight: float


@dataclass(frozen=True)
class BoundaryGrid:
    """Equi-angular trapezoidal quadrature on every boundary circle.

    Arrays are ordered by curve index, then angle.  Iterating yields
    :class:`BoundarySample` records.
    """

    curve: np.ndarray
    angle: np.ndarray
    point: np.ndarray
    normal: np.ndarray
    weight: np.ndarray
    m: int

    def __len__(self) -> int:
        return len(self.point)

    def __iter__(self) -> Iterator[BoundarySample]:
        for c, a, p, nrm, w in zip(self.curve, self.angle, self.point, self.normal, self.weight):
            yield BoundarySample(int(c), float(a), complex(p), complex(nrm), float(w))

    def on_curve(self, i: int) -> np.ndarray:
        return self.curve == i


def boundary_grid(domain: CircularDomain, m: int, offset: float = 0.0) -> BoundaryGrid:
    """``m`` equi-angular nodes per circle; ``offset`` shifts angles by a fraction of a step."""
    if m < 8:
        raise DomainError(f"need at least 8 points per curve, got {m}")
    theta = 2 * np.pi * (np.arange(m) + offset) / m
    curves, angles, points, normals, weights = [], [], [], [], []
    for i, c in enumerate(domain.circles):
        z = c.point(theta)
        u = np.exp(1j * theta)
        curves.append(np.full(m, i))
        angles.append(theta)
        points.append(z)
        normals.append(u if i == 0 else -u)
        weights.append(np.full(m, 2 * np.pi * c.radius / m))
    return BoundaryGrid(
        np.concatenate(curves), np.concatenate(angles), np.concatenate(points),
        np.concatenate(normals), np.concatenate(weights), m,
    )


@dataclass(frozen=True)
class FixedPointData:
    """Real boundary fixed points and the real-axis segments between them.

    ``minus[i]`` and ``plus[i]`` are the points p_i^- and p_i^+ on curve i.
    ``segments[i]`` is the segment leaving curve i at p_i^- and ending at the
    next curve's p^+ (the outer circle's p_0^+ for the last one).
    """

    minus: tuple[float, ...]
    plus: tuple[float, ...]
    segments: tuple[tuple[float, float], ...]

    @property
    def base_point(self) -> float:
        return self.minus[0]

    def all_points(self) -> list[float]:
        return sorted(self.minus + self.plus)

    def segment_of(self, x: float) -> int | None:
        for i, (lo, hi) in enumerate(self.segments):
            if lo < x < hi:
                return i
        return None


def fixed_points(domain: CircularDomain) -> FixedPointData:
    """Label the fixed points by walking the real axis from the left end of B_0."""
    o = domain.outer
    minus = [o.center - o.radius]
    plus = [o.center + o.radius]
    for h in domain.holes:
        plus.append(h.center - h.radius)
        minus.append(h.center + h.radius)
    n = domain.n
    segments = []
    for i in range(n + 1):
        nxt = plus[i + 1] if i < n else plus[0]
        segments.append((minus[i], nxt))
    return FixedPointData(tuple(minus), tuple(plus), tuple(segments))


def segment_points(domain: CircularDomain, i: int, count: int, margin: float = 0.0) -> np.ndarray:
    """Evenly spaced interior points of the real segment X_i."""
    lo, hi = fixed_points(domain).segments[i]
    return np.linspace(lo + margin, hi - margin, count + 2)[1:-1]


def interior_points(domain: CircularDomain, count: int, margin: float = 0.05,
                    seed: int = 0, symmetric: bool = False) -> np.ndarray:
    """Uniform random interior points at distance > ``margin`` from the boundary."""
    rng = np.random.default_rng(seed)
    o = domain.outer
    out: list[complex] = []
    while len(out) < count:
        z = o.center + o.radius * (rng.uniform(-1, 1, 4 * count) + 1j * rng.uniform(-1, 1, 4 * count))
        z = z[domain.contains(z, margin)]
        if symmetric:
            z = z[np.abs(z.imag) > margin]
        out.extend(z.tolist())
    return np.array(out[:count])

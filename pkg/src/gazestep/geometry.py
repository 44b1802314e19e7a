"""Screen-to-disc mapping and step-length metrics.

Gaze positions live on a pixel grid; for the hyperbolic metric they are
mapped affinely onto the open unit disc (screen centre to the origin, the
half-diagonal to radius ``margin``) and distances are measured with the
Poincare-disc formula arctanh |(z - w)/(1 - z conj(w))|, which reduces to
arctanh(z) for real z against the origin.  Euclidean step lengths are taken
directly in pixel coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EUCLIDEAN = "euclidean"
HYPERBOLIC = "hyperbolic"
METRICS = (EUCLIDEAN, HYPERBOLIC)

# Points are clamped strictly inside the disc so arctanh stays finite.
CLAMP_RADIUS = 1.0 - 1e-9
DEFAULT_MARGIN = 0.95


@dataclass(frozen=True)
class DiscPoint:
    """Point strictly inside the unit disc."""

    u: float
    v: float

    def __post_init__(self):
        if not (math.isfinite(self.u) and math.isfinite(self.v)):
            raise ValueError("disc coordinates must be finite")
        if self.u * self.u + self.v * self.v >= 1.0:
            raise ValueError(f"point ({self.u}, {self.v}) is not inside the unit disc")

    @property
    def z(self) -> complex:
        return complex(self.u, self.v)


@dataclass(frozen=True)
class StepLength:
    """Non-negative distance between consecutive eye positions.

    Pixels under the euclidean metric, dimensionless hyperbolic radians
    under the hyperbolic one.
    """

    value: float
    metric_tag: str

    def __post_init__(self):
        if self.metric_tag not in METRICS:
            raise ValueError(f"unknown metric {self.metric_tag!r}")
        if not math.isfinite(self.value) or self.value < 0:
            raise ValueError(f"step length must be finite and non-negative, got {self.value}")


def disc_coords(x, y, screen_w: float, screen_h: float, margin: float = DEFAULT_MARGIN):
    """Vectorized pixel-to-disc map; returns (u, v) arrays clamped inside the disc."""
    if screen_w <= 0 or screen_h <= 0:
        raise ValueError("screen dimensions must be positive")
    if not 0.0 < margin <= 1.0:
        raise ValueError("margin must lie in (0, 1]")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("coordinates must be finite")
    half_diag = 0.5 * math.hypot(screen_w, screen_h)
    u = (x - 0.5 * screen_w) / half_diag * margin
    v = (y - 0.5 * screen_h) / half_diag * margin
    r = np.hypot(u, v)
    over = r > CLAMP_RADIUS
    if np.any(over):
        scale = CLAMP_RADIUS / r[over]
        u = np.array(u, copy=True)
        v = np.array(v, copy=True)
        u[over] = u[over] * scale
        v[over] = v[over] * scale
    return u, v


def to_disc(sample, screen_w: float, screen_h: float, margin: float = DEFAULT_MARGIN) -> DiscPoint:
    """Map one eye sample onto the unit disc."""
    u, v = disc_coords(
        np.float64(sample.x), np.float64(sample.y), screen_w, screen_h, margin
    )
    return DiscPoint(u=float(u), v=float(v))


def euclidean_distance(a, b) -> StepLength:
    """Pixel-plane distance between two eye samples."""
    for s in (a, b):
        if not (math.isfinite(s.x) and math.isfinite(s.y)):
            raise ValueError("coordinates must be finite")
    return StepLength(value=math.hypot(a.x - b.x, a.y - b.y), metric_tag=EUCLIDEAN)


def hyperbolic_distance(a: DiscPoint, b: DiscPoint) -> StepLength:
    """arctanh of the Mobius-invariant modulus between two disc points."""
    z, w = a.z, b.z
    if abs(z) >= 1.0 or abs(w) >= 1.0:
        raise ValueError("points must lie strictly inside the unit disc")
    # modulus of numerator and denominator separately: bitwise symmetric in
    # (a, b), unlike complex division whose roundings break exact symmetry
    m = abs(z - w) / abs(1.0 - z * w.conjugate())
    return StepLength(value=math.atanh(m), metric_tag=HYPERBOLIC)


def euclidean_steps(x, y) -> np.ndarray:
    """Consecutive pixel distances along a path given as coordinate arrays."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.hypot(np.diff(x), np.diff(y))


def hyperbolic_steps(u, v) -> np.ndarray:
    """Consecutive hyperbolic distances along a path of disc coordinates."""
    z = np.asarray(u, dtype=float) + 1j * np.asarray(v, dtype=float)
    a, b = z[:-1], z[1:]
    m = np.abs(a - b) / np.abs(1.0 - a * np.conj(b))
    return np.arctanh(m)

"""Free-space Helmholtz Green's function and the source/detector product kernel.

Points are plain length-3 float arrays (or anything ``np.asarray`` turns into
one); amplitudes are Python ``complex``. The vectorised ``green_matrix`` is the
workhorse used by the objective; the scalar functions exist for clarity and
for tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FOUR_PI = 4.0 * np.pi

# Separations below this are treated as coincident points.
MIN_SEPARATION = 1e-12


class KernelDomainError(ValueError):
    """Raised when the Green's function is evaluated at (or next to) its singularity."""


def as_point(p) -> np.ndarray:
    arr = np.asarray(p, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite coordinates {arr}")
    return arr


@dataclass(frozen=True)
class SourceDetectorPair:
    """One measurement: a point source and a receiver, both on the plane x3 = 0."""

    source: tuple[float, float, float]
    detector: tuple[float, float, float]

    def __post_init__(self):
        s = tuple(float(c) for c in as_point(self.source))
        d = tuple(float(c) for c in as_point(self.detector))
        if s[2] != 0.0 or d[2] != 0.0:
            raise ValueError(f"pair endpoints must lie on x3=0, got {s} and {d}")
        if np.linalg.norm(np.subtract(s, d)) < MIN_SEPARATION:
            raise ValueError(f"source and detector coincide at {s}")
        object.__setattr__(self, "source", s)
        object.__setattr__(self, "detector", d)


def green(x, y, k: float) -> complex:
    """exp(ik|x-y|) / (4 pi |x-y|)."""
    if not k > 0:
        raise ValueError(f"wavenumber must be positive, got {k}")
    r = float(np.linalg.norm(as_point(x) - as_point(y)))
    if r < MIN_SEPARATION:
        raise KernelDomainError(f"green() evaluated at coincident points (r={r:g})")
    return complex(np.exp(1j * k * r) / (FOUR_PI * r))


def pair_kernel(pair: SourceDetectorPair, z, k: float) -> complex:
    return green(pair.detector, z, k) * green(pair.source, z, k)


def green_matrix(xs: np.ndarray, zs: np.ndarray, k: float) -> np.ndarray:
    """Green's function for every (x, z) combination.

    ``xs`` has shape (P, 3), ``zs`` has shape (..., N, 3); the result has
    shape (..., P, N).
    """
    xs = np.asarray(xs, dtype=float)
    zs = np.asarray(zs, dtype=float)
    diff = xs[:, None, :] - zs[..., None, :, :]
    r = np.sqrt(np.einsum("...i,...i->...", diff, diff))
    if r.size and r.min() < MIN_SEPARATION:
        raise KernelDomainError("green_matrix() evaluated at coincident points")
    return np.exp(1j * k * r) / (FOUR_PI * r)

"""Synthetic data generation and measured-field ingestion."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kernel import SourceDetectorPair, green, green_matrix


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    """Search region -a<x1<a, -b<x2<b, 0<x3<c."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.c > 0):
            raise ConfigurationError(f"box dimensions must be positive, got {self}")

    @property
    def diameter(self) -> float:
        return float(np.sqrt((2 * self.a) ** 2 + (2 * self.b) ** 2 + self.c**2))

    @property
    def lower(self) -> np.ndarray:
        return np.array([-self.a, -self.b, 0.0])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c])

    def contains(self, p, closed: bool = False) -> bool:
        p = np.asarray(p, dtype=float)
        if closed:
            return bool(np.all(p >= self.lower) and np.all(p <= self.upper))
        return bool(np.all(p > self.lower) and np.all(p < self.upper))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` points drawn uniformly in the box, shape (n, 3)."""
        return self.lower + (self.upper - self.lower) * rng.random((n, 3))


@dataclass(frozen=True)
class Scatterer:
    position: tuple[float, float, float]
    intensity: float

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))
        object.__setattr__(self, "intensity", float(self.intensity))

    def validate(self, box: Box, v_max: float) -> None:
        if not box.contains(self.position):
            raise ConfigurationError(f"scatterer {self.position} lies outside {box}")
        if not 0.0 <= self.intensity <= v_max:
            raise ConfigurationError(
                f"scatterer intensity {self.intensity} outside [0, {v_max}]"
            )


@dataclass
class MeasurementSet:
    """Wavenumber, source/detector pairs and the complex data f_j (one per pair)."""

    k: float
    pairs: list[SourceDetectorPair]
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.k = float(self.k)
        self.pairs = list(self.pairs)
        self.data = np.asarray(self.data, dtype=complex).reshape(-1)
        if not self.k > 0:
            raise ConfigurationError(f"wavenumber must be positive, got {self.k}")
        if len(self.pairs) == 0:
            raise ConfigurationError("measurement set has no source/detector pairs")
        if len(self.data) != len(self.pairs):
            raise ConfigurationError(
                f"{len(self.data)} data values for {len(self.pairs)} pairs"
            )

    def __len__(self) -> int:
        return len(self.pairs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MeasurementSet):
            return NotImplemented
        return (
            self.k == other.k
            and self.pairs == other.pairs
            and np.array_equal(self.data, other.data)
        )

    @property
    def sources(self) -> np.ndarray:
        return np.array([p.source for p in self.pairs])

    @property
    def detectors(self) -> np.ndarray:
        return np.array([p.detector for p in self.pairs])

    @property
    def energy(self) -> float:
        """sum_j |f_j|^2, the objective value of the empty model."""
        return float(np.sum(np.abs(self.data) ** 2))


def product_pairs(sources: Sequence, detectors: Sequence) -> list[SourceDetectorPair]:
    """All source x detector combinations, source-major."""
    return [SourceDetectorPair(tuple(s), tuple(d)) for s in sources for d in detectors]


def kernel_columns(pairs: Sequence[SourceDetectorPair], positions, k: float) -> np.ndarray:
    """Matrix A with A[j, m] = G_j(z_m), shape (J, N)."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    src = np.array([p.source for p in pairs])
    det = np.array([p.detector for p in pairs])
    return green_matrix(det, positions, k) * green_matrix(src, positions, k)


def synthesize(
    truth: Sequence[Scatterer], pairs: Sequence[SourceDetectorPair], k: float
) -> MeasurementSet:
    """Point-scatterer data f_j = sum_m G_j(z_m) v_m, summed in truth order."""
    if len(pairs) == 0:
        raise ConfigurationError("cannot synthesize data without source/detector pairs")
    data = np.zeros(len(pairs), dtype=complex)
    if truth:
        cols = kernel_columns(pairs, [s.position for s in truth], k)
        for m, s in enumerate(truth):
            data += cols[:, m] * s.intensity
    return MeasurementSet(k=k, pairs=list(pairs), data=data)


def field_to_data(u: complex, pair: SourceDetectorPair, k: float) -> complex:
    """Convert a measured total field into the scattered-data value (u - g) / k^2."""
    return (complex(u) - green(pair.source, pair.detector, k)) / k**2


def add_noise(
    ms: MeasurementSet, delta: float, rng: np.random.Generator
) -> MeasurementSet:
    """Multiplicative noise: f_j -> f_j (1 + delta*zeta_j), zeta_j uniform on [-1,1]^2.

    ``delta == 0`` returns an exact copy and draws nothing from ``rng``.
    """
    if delta < 0:
        raise ValueError(f"noise level must be nonnegative, got {delta}")
    if delta == 0:
        return MeasurementSet(k=ms.k, pairs=ms.pairs, data=ms.data.copy())
    u = rng.uniform(-1.0, 1.0, size=(len(ms), 2))
    zeta = u[:, 0] + 1j * u[:, 1]
    return MeasurementSet(k=ms.k, pairs=ms.pairs, data=ms.data * (1.0 + delta * zeta))

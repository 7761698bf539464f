"""The two reference acquisition geometries and their six-inclusion ground truth."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .forward import Box, ConfigurationError, MeasurementSet, Scatterer, add_noise, product_pairs, synthesize

TRUTH = [
    Scatterer((1.640, -0.510, 0.520), 1.200),
    Scatterer((-1.430, -0.500, 0.580), 0.500),
    Scatterer((1.220, 0.570, 0.370), 0.700),
    Scatterer((1.410, 0.230, 0.740), 0.610),
    Scatterer((-0.220, 0.470, 0.270), 0.700),
    Scatterer((-1.410, 0.230, 0.174), 0.600),
]

BOX = Box(2.0, 1.0, 1.0)
K = 5.0
V_MAX = 2.0


@dataclass
class ExperimentSpec:
    box: Box
    k: float
    sources: list[tuple[float, float, float]]
    detectors: list[tuple[float, float, float]]
    truth: list[Scatterer]
    noise_delta: float = 0.0
    seed: int = 0
    v_max: float = V_MAX
    name: str = field(default="custom")

    def __post_init__(self):
        self.sources = [tuple(float(c) for c in s) for s in self.sources]
        self.detectors = [tuple(float(c) for c in d) for d in self.detectors]
        if not self.sources or not self.detectors:
            raise ConfigurationError("sources and detectors must be nonempty")
        for label, pts in (("sources", self.sources), ("detectors", self.detectors)):
            for p in pts:
                if len(p) != 3 or p[2] != 0.0:
                    raise ConfigurationError(f"{label}: point {p} is not on the plane x3=0")
        if self.noise_delta < 0:
            raise ConfigurationError(f"noise_delta must be nonnegative, got {self.noise_delta}")
        for s in self.truth:
            s.validate(self.box, self.v_max)

    def pairs(self):
        return product_pairs(self.sources, self.detectors)

    def measurement(self, rng: np.random.Generator | None = None) -> MeasurementSet:
        """Noiseless data for ``truth``, perturbed at ``noise_delta`` when positive.

        Without an explicit ``rng`` the noise comes from PCG64 seeded with ``seed``.
        """
        clean = synthesize(self.truth, self.pairs(), self.k)
        if self.noise_delta == 0:
            return clean
        if rng is None:
            rng = np.random.default_rng(self.seed)
        return add_noise(clean, self.noise_delta, rng)


def experiment_1_sources():
    return [(-2 + 0.333 + 0.667 * i, -0.5 + 1.0 * j, 0.0) for i in range(6) for j in range(2)]


def experiment_1_detectors():
    return [(-2 + 0.667 * i, -1.0 + 1.0 * j, 0.0) for i in range(7) for j in range(3)]


def experiment_2_sources():
    return [(-1.75 + 0.5 * i, 1.5, 0.0) for i in range(8)]


def experiment_2_detectors():
    return [(-2 + 0.4 * i, 1.0 + 1.0 * j, 0.0) for i in range(11) for j in range(2)]


def experiment(number: int, noise_delta: float = 0.0, seed: int = 0) -> ExperimentSpec:
    if number == 1:
        src, det = experiment_1_sources(), experiment_1_detectors()
    elif number == 2:
        src, det = experiment_2_sources(), experiment_2_detectors()
    else:
        raise ConfigurationError(f"unknown experiment {number!r}; expected 1 or 2")
    return ExperimentSpec(
        box=BOX, k=K, sources=src, detectors=det, truth=list(TRUTH),
        noise_delta=noise_delta, seed=seed, name=f"experiment-{number}",
    )

"""Least-squares misfit and its intensity-eliminated (reduced) form.

The reduced objective fixes the scatterer positions, fits real intensities to
the complex data through the normal equations of the stacked Re/Im system,
clips the solution into [0, v_max] and reports the misfit at the clipped
intensities. It is a projection of the unconstrained optimum, not a true
bound-constrained QP.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import lapack

from .forward import Box, ConfigurationError, MeasurementSet, Scatterer
from .kernel import green_matrix

# Singular values below RCOND * sigma_max are dropped from the solve.
RCOND = 1e-10
# Normal equations are used only while the stacked system has condition
# number below ~1e4 (the normal matrix squares it); otherwise SVD.
NORMAL_EQ_MIN_RCOND = 1e-8


@dataclass(frozen=True)
class Configuration:
    """Ordered scatterer positions (N, 3), intensities (N,) and their reduced-objective value."""

    positions: np.ndarray
    intensities: np.ndarray
    value: float = float("nan")

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(-1, 3)
        v = np.array(self.intensities, dtype=float).reshape(-1)
        if len(pos) != len(v):
            raise ValueError(f"{len(pos)} positions but {len(v)} intensities")
        pos.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "intensities", v)
        object.__setattr__(self, "value", float(self.value))

    def __len__(self) -> int:
        return len(self.intensities)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Configuration):
            return NotImplemented
        same_value = self.value == other.value or (
            np.isnan(self.value) and np.isnan(other.value)
        )
        return (
            same_value
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.intensities, other.intensities)
        )

    @property
    def scatterers(self) -> list[Scatterer]:
        return [Scatterer(tuple(p), v) for p, v in zip(self.positions, self.intensities)]

    @classmethod
    def from_scatterers(cls, scatterers: Sequence[Scatterer], value: float = float("nan")):
        return cls(
            positions=np.array([s.position for s in scatterers], dtype=float).reshape(-1, 3),
            intensities=np.array([s.intensity for s in scatterers], dtype=float),
            value=value,
        )

    @classmethod
    def empty(cls, value: float = float("nan")):
        return cls(np.empty((0, 3)), np.empty(0), value)


@dataclass(frozen=True)
class ObjectiveContext:
    measurement: MeasurementSet
    box: Box
    v_max: float
    M_cap: int
    _src: np.ndarray = field(init=False, repr=False)
    _src_idx: np.ndarray = field(init=False, repr=False)
    _det: np.ndarray = field(init=False, repr=False)
    _det_idx: np.ndarray = field(init=False, repr=False)
    _rhs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.v_max > 0:
            raise ConfigurationError(f"v_max must be positive, got {self.v_max}")
        if int(self.M_cap) < 1:
            raise ConfigurationError(f"M_cap must be >= 1, got {self.M_cap}")
        # Experiments reuse a handful of endpoints across many pairs, so the
        # Green's function is evaluated once per distinct endpoint.
        src, src_idx = np.unique(self.measurement.sources, axis=0, return_inverse=True)
        det, det_idx = np.unique(self.measurement.detectors, axis=0, return_inverse=True)
        f = self.measurement.data
        rhs = np.concatenate([f.real, f.imag])
        for name, arr in [
            ("_src", src),
            ("_src_idx", src_idx.reshape(-1)),
            ("_det", det),
            ("_det_idx", det_idx.reshape(-1)),
            ("_rhs", rhs),
        ]:
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def data(self) -> np.ndarray:
        return self.measurement.data

    def kernel_matrix(self, positions) -> np.ndarray:
        """A[..., j, m] = G_j(z_m) for positions of shape (..., N, 3)."""
        positions = np.asarray(positions, dtype=float)
        gs = green_matrix(self._src, positions, self.measurement.k)
        gd = green_matrix(self._det, positions, self.measurement.k)
        return gd[..., self._det_idx, :] * gs[..., self._src_idx, :]


def _positions(positions) -> np.ndarray:
    return np.asarray(positions, dtype=float).reshape(-1, 3)


def phi(ctx: ObjectiveContext, positions, intensities) -> float:
    """sum_j |f_j - sum_m G_j(z_m) v_m|^2."""
    positions = _positions(positions)
    v = np.asarray(intensities, dtype=float).reshape(-1)
    if len(positions) != len(v):
        raise ValueError(f"{len(positions)} positions but {len(v)} intensities")
    if len(v) == 0:
        return ctx.measurement.energy
    resid = ctx.data - ctx.kernel_matrix(positions) @ v
    return float(np.sum(resid.real**2 + resid.imag**2))


def _projected_lstsq(A: np.ndarray, rhs: np.ndarray, v_max: float) -> np.ndarray:
    """Stacked Re/Im least squares for (..., J, N) complex A, clipped to [0, v_max]."""
    Ar = np.concatenate([A.real, A.imag], axis=-2)
    u, s, vt = np.linalg.svd(Ar, full_matrices=False)
    cutoff = RCOND * s[..., :1]
    s_inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    coef = np.einsum("...ij,i->...j", u, rhs) * s_inv
    v = np.einsum("...ji,...j->...i", vt, coef)
    return np.clip(v, 0.0, v_max)


def _fit_intensities(A: np.ndarray, rhs: np.ndarray, v_max: float) -> np.ndarray:
    """Single-configuration fit: Cholesky on the normal equations, SVD when ill conditioned.

    The normal-equation solve gets one refinement step against the stacked
    system, which recovers the accuracy lost by squaring the condition number.
    """
    Ar = np.concatenate([A.real, A.imag])
    gram = Ar.T @ Ar
    chol, info = lapack.dpotrf(gram, lower=0, clean=0)
    if info == 0:
        rcond, info = lapack.dpocon(chol, np.abs(gram).sum(axis=0).max())
    if info != 0 or rcond < NORMAL_EQ_MIN_RCOND:
        return _projected_lstsq(A, rhs, v_max)
    v, _ = lapack.dpotrs(chol, Ar.T @ rhs)
    dv, _ = lapack.dpotrs(chol, Ar.T @ (rhs - Ar @ v))
    return np.clip(v + dv, 0.0, v_max)


def solve_intensities(ctx: ObjectiveContext, positions) -> tuple[np.ndarray, float]:
    """Best-fit intensities at fixed positions (solve, then clip) and the misfit there."""
    positions = _positions(positions)
    if len(positions) == 0:
        return np.empty(0), ctx.measurement.energy
    A = ctx.kernel_matrix(positions)
    v = _fit_intensities(A, ctx._rhs, ctx.v_max)
    resid = ctx.data - A @ v
    return v, float(np.sum(resid.real**2 + resid.imag**2))


def phi_tilde(ctx: ObjectiveContext, positions) -> float:
    return solve_intensities(ctx, positions)[1]


def phi_tilde_batch(ctx: ObjectiveContext, positions) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``solve_intensities`` over a stack of configurations of equal size.

    ``positions`` has shape (B, N, 3); returns intensities (B, N) and values (B,).
    """
    positions = np.asarray(positions, dtype=float)
    A = ctx.kernel_matrix(positions)
    v = _projected_lstsq(A, ctx._rhs, ctx.v_max)
    resid = ctx.data - np.einsum("bjn,bn->bj", A, v)
    return v, np.sum(resid.real**2 + resid.imag**2, axis=-1)


def evaluate(ctx: ObjectiveContext, positions) -> Configuration:
    """Configuration at ``positions`` with solved intensities and value."""
    v, value = solve_intensities(ctx, positions)
    return Configuration(_positions(positions), v, value)

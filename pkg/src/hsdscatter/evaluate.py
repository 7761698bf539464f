"""Ground-truth tooling: exhaustive grid oracle, 1-D objective slices, truth matching."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .forward import ConfigurationError, Scatterer
from .objective import Configuration, ObjectiveContext, evaluate, phi_tilde, phi_tilde_batch

DEFAULT_GRID_CAP = 1_000_000
DEFAULT_R_MATCH = 0.15


@dataclass
class MatchReport:
    # (truth_index, found_index, distance, found_intensity - truth_intensity)
    matched_pairs: list[tuple[int, int, float, float]] = field(default_factory=list)
    missed_truth: list[int] = field(default_factory=list)
    spurious_found: list[int] = field(default_factory=list)

    @property
    def n_matched(self) -> int:
        return len(self.matched_pairs)

    def matched_truth(self) -> set[int]:
        return {t for t, _, _, _ in self.matched_pairs}


@dataclass(frozen=True)
class GridSpec:
    n1: int
    n2: int
    n3: int
    cap: int = DEFAULT_GRID_CAP

    def __post_init__(self):
        if min(self.n1, self.n2, self.n3) < 1:
            raise ConfigurationError(f"grid resolution must be positive, got {self}")

    def nodes(self, box) -> np.ndarray:
        """Nodes of the closed box (endpoints included), minus those on the plane x3 = 0.

        An axis with a single node is placed at the centre of that axis.
        """
        axes = []
        for n, lo, hi in zip((self.n1, self.n2, self.n3), box.lower, box.upper):
            axes.append(np.linspace(lo, hi, n) if n > 1 else np.array([0.5 * (lo + hi)]))
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        return grid[grid[:, 2] > 0]

    def spacing(self, box) -> np.ndarray:
        n = np.array([self.n1, self.n2, self.n3])
        return (box.upper - box.lower) / np.maximum(n - 1, 1)


def grid_oracle(
    ctx: ObjectiveContext, grid: GridSpec, count: int = 1, chunk: int = 4096
) -> Configuration:
    """Exhaustive minimum of the reduced objective over grid nodes (count=1) or node pairs (count=2)."""
    if count not in (1, 2):
        raise ConfigurationError(f"grid oracle supports 1 or 2 scatterers, got {count}")
    nodes = grid.nodes(ctx.box)
    n = len(nodes)
    n_evals = n if count == 1 else n * (n - 1) // 2
    if n_evals > grid.cap:
        raise ConfigurationError(f"grid oracle needs {n_evals} evaluations, cap is {grid.cap}")
    if n_evals == 0:
        raise ConfigurationError("grid has no admissible nodes")

    if count == 1:
        combos = np.arange(n)[:, None]
    else:
        combos = np.array(list(itertools.combinations(range(n), 2)))
    best_val, best_combo = np.inf, None
    for start in range(0, len(combos), chunk):
        block = combos[start : start + chunk]
        _, vals = phi_tilde_batch(ctx, nodes[block])
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_combo = vals[i], block[i]
    return evaluate(ctx, nodes[best_combo])


def landscape_slice(
    ctx: ObjectiveContext,
    base: Sequence,
    varied_index: int,
    axis: int,
    value_range: tuple[float, float],
    samples: int,
) -> list[tuple[float, float]]:
    """Reduced objective as one coordinate of one point sweeps ``value_range``.

    ``axis`` is 0-based (0 -> x1). With ``samples == 1`` only the lower end is evaluated.
    """
    base = np.array(base, dtype=float).reshape(-1, 3)
    if not 0 <= varied_index < len(base):
        raise IndexError(f"varied_index {varied_index} out of range for {len(base)} points")
    if axis not in (0, 1, 2):
        raise IndexError(f"axis must be 0, 1 or 2, got {axis}")
    if samples < 1:
        raise ValueError("samples must be positive")
    lo, hi = value_range
    out = []
    for r in np.linspace(lo, hi, samples):
        pos = base.copy()
        pos[varied_index, axis] = r
        out.append((float(r), phi_tilde(ctx, pos)))
    return out


def local_minima(curve: Sequence[tuple[float, float]]) -> list[float]:
    """Abscissae of discrete local minima (3-point test; endpoints compare with their one neighbour)."""
    r = [p[0] for p in curve]
    y = [p[1] for p in curve]
    found = []
    for i in range(len(y)):
        left = y[i - 1] if i > 0 else np.inf
        right = y[i + 1] if i + 1 < len(y) else np.inf
        if y[i] < left and y[i] < right:
            found.append(r[i])
    return found


def match_inclusions(
    found: Configuration, truth: Sequence[Scatterer], r_match: float = DEFAULT_R_MATCH
) -> MatchReport:
    """Greedy matching: repeatedly pair the globally closest unmatched (truth, found) pair."""
    if not r_match > 0:
        raise ValueError("r_match must be positive")
    T = np.array([s.position for s in truth], dtype=float).reshape(-1, 3)
    F = np.asarray(found.positions, dtype=float).reshape(-1, 3)
    dist = np.linalg.norm(T[:, None, :] - F[None, :, :], axis=-1)
    candidates = sorted(
        (dist[i, j], i, j) for i in range(len(T)) for j in range(len(F)) if dist[i, j] < r_match
    )
    used_t, used_f = set(), set()
    pairs = []
    for d, i, j in candidates:
        if i in used_t or j in used_f:
            continue
        used_t.add(i)
        used_f.add(j)
        pairs.append((i, j, float(d), float(found.intensities[j] - truth[i].intensity)))
    return MatchReport(
        matched_pairs=pairs,
        missed_truth=[i for i in range(len(T)) if i not in used_t],
        spurious_found=[j for j in range(len(F)) if j not in used_f],
    )

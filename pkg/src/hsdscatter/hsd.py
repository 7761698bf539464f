"""Hybrid stochastic-deterministic global search over scatterer configurations.

Each restart alternates random completion of the configuration up to ``M_cap``
points with a clean-up (drop weak points, merge near-duplicates) and a Powell
polish of the survivors. Restarts are seeded independently from
``(master_seed, restart_index)`` and the lowest-misfit restart wins.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import Executor
from dataclasses import dataclass, field

import numpy as np

from .kernel import KernelDomainError
from .objective import Configuration, ObjectiveContext, evaluate, phi, solve_intensities
from .powell import BoxBounds, PowellOptions, powell_minimize

log = logging.getLogger(__name__)

TOLERANCE_MET = "tolerance_met"
TRIES_EXHAUSTED = "tries_exhausted"


@dataclass(frozen=True)
class HsdParams:
    M_cap: int = 16
    v_max: float = 2.0
    P0: float = 1.0
    T_max: int = 1000
    eps_s: float = 0.5
    eps_i: float = 0.25
    eps_d: float = 0.1
    eps: float = 1e-5
    n_max: int = 6
    powell: PowellOptions = field(default_factory=PowellOptions)
    master_seed: int = 0
    # Hard stop on random draws per restart; None means 20 * T_max.
    max_total_tries: int | None = None

    def __post_init__(self):
        if self.M_cap < 1 or self.T_max < 1 or self.n_max < 1:
            raise ValueError("M_cap, T_max and n_max must be positive integers")
        if not (self.v_max > 0 and self.P0 > 0 and self.eps > 0):
            raise ValueError("v_max, P0 and eps must be positive")
        for name in ("eps_s", "eps_i", "eps_d"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not self.eps < self.P0:
            raise ValueError("eps must be smaller than P0")
        if self.master_seed < 0:
            raise ValueError("master_seed must be nonnegative")
        if self.max_total_tries is not None and self.max_total_tries < self.T_max:
            raise ValueError("max_total_tries must be at least T_max")

    @property
    def total_tries(self) -> int:
        return self.max_total_tries if self.max_total_tries is not None else 20 * self.T_max


@dataclass
class RestartReport:
    best: Configuration
    random_tries_used: int
    powell_invocations: int
    powell_time_fraction: float
    stop_reason: str
    wall_time: float = 0.0


def restart_rng(master_seed: int, index: int) -> np.random.Generator:
    """PCG64 stream for restart ``index``; independent of how many restarts run."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(master_seed, spawn_key=(index,)))
    )


def random_fill(kept: Configuration, ctx: ObjectiveContext, rng: np.random.Generator) -> Configuration:
    """Top ``kept`` up to M_cap points with uniform draws from the box and fit intensities."""
    n_new = ctx.M_cap - len(kept)
    if n_new < 0:
        raise ValueError(f"{len(kept)} kept points exceed M_cap={ctx.M_cap}")
    positions = np.vstack([kept.positions, ctx.box.sample(rng, n_new)])
    return evaluate(ctx, positions)


def discharge(cfg: Configuration, params: HsdParams) -> Configuration:
    """Drop every point whose intensity is below v_max*eps_i."""
    threshold = params.v_max * params.eps_i
    keep = cfg.intensities >= threshold
    if keep.all():
        return cfg
    return Configuration(cfg.positions[keep], cfg.intensities[keep])


def merge_close(cfg: Configuration, params: HsdParams, box) -> Configuration:
    """Repeatedly fold the closest pair nearer than eps_d*diam(box) into its earlier point.

    The surviving point keeps its position and absorbs the other's intensity.
    """
    threshold = params.eps_d * box.diameter
    pos = [np.array(p) for p in cfg.positions]
    v = list(cfg.intensities)
    changed = False
    while len(pos) > 1:
        P = np.array(pos)
        dist = np.linalg.norm(P[:, None, :] - P[None, :, :], axis=-1)
        dist[np.tril_indices(len(pos))] = np.inf
        m, n = np.unravel_index(np.argmin(dist), dist.shape)
        if not dist[m, n] < threshold:
            break
        v[m] += v[n]
        del pos[n], v[n]
        changed = True
    if not changed:
        return cfg
    return Configuration(np.array(pos).reshape(-1, 3), np.array(v))


def _penalised_objective(ctx: ObjectiveContext):
    penalty = 1e30 * (1.0 + ctx.measurement.energy)

    def f(x: np.ndarray) -> float:
        try:
            return solve_intensities(ctx, x.reshape(-1, 3))[1]
        except KernelDomainError:
            return penalty

    return f


def polish(ctx: ObjectiveContext, cfg: Configuration, opts: PowellOptions) -> Configuration:
    """Powell-minimise the reduced objective over the positions of ``cfg``."""
    n = len(cfg)
    bounds = BoxBounds.tiled(ctx.box.lower, ctx.box.upper, n)
    res = powell_minimize(_penalised_objective(ctx), cfg.positions.reshape(-1), bounds, opts)
    return evaluate(ctx, res.x.reshape(n, 3))


def run_restart(ctx: ObjectiveContext, params: HsdParams, index: int) -> RestartReport:
    """One restart: random search, discharge, merge and polish until converged or stalled.

    The T_max budget applies to each search for an acceptable random
    configuration; it is refilled after every Powell polish. The restart stops
    when a search runs dry, when a polished value drops below ``eps``, or when
    ``max_total_tries`` random configurations have been drawn.
    """
    rng = restart_rng(params.master_seed, index)
    t_start = time.perf_counter()
    powell_time = 0.0
    powell_calls = 0
    tries = 0
    since_polish = 0
    p0 = params.P0
    kept = Configuration.empty()
    best_random: Configuration | None = None
    best_polished: Configuration | None = None
    stop = TRIES_EXHAUSTED

    while True:
        # step 1
        accepted = None
        while since_polish < params.T_max and tries < params.total_tries:
            tries += 1
            since_polish += 1
            cfg = random_fill(kept, ctx, rng)
            if best_random is None or cfg.value < best_random.value:
                best_random = cfg
            if cfg.value < p0 * params.eps_s:
                accepted = cfg
                break
        if accepted is None:
            break
        # steps 2-3; an empty survivor set goes straight back to step 1
        reduced = discharge(accepted, params)
        if len(reduced) == 0:
            kept = reduced
            continue
        reduced = merge_close(reduced, params, ctx.box)
        # step 4
        t0 = time.perf_counter()
        polished = polish(ctx, reduced, params.powell)
        powell_time += time.perf_counter() - t0
        powell_calls += 1
        since_polish = 0
        if best_polished is None or polished.value < best_polished.value:
            best_polished = polished
        log.debug(
            "restart %d try %d: N=%d polished value %.3e", index, tries, len(polished), polished.value
        )
        if polished.value < params.eps:
            stop = TOLERANCE_MET
            break
        # step 5
        p0 = polished.value
        kept = polished

    wall = time.perf_counter() - t_start
    best = best_polished if best_polished is not None else best_random
    return RestartReport(
        best=best,
        random_tries_used=tries,
        powell_invocations=powell_calls,
        powell_time_fraction=min(1.0, powell_time / wall) if wall > 0 else 0.0,
        stop_reason=stop,
        wall_time=wall,
    )


def finalize(ctx: ObjectiveContext, cfg: Configuration, params: HsdParams) -> Configuration:
    """Final discharge and merge, kept only if it costs at most ``eps`` of misfit.

    Intensities of the cleaned configuration are re-solved. When the clean-up
    would degrade the fit by more than ``eps`` the configuration is returned as
    is, minus points whose fitted intensity is exactly zero.
    """
    reduced = merge_close(discharge(cfg, params), params, ctx.box)
    if reduced is not cfg:
        cleaned = evaluate(ctx, reduced.positions)
        if cleaned.value <= cfg.value + params.eps:
            return cleaned
    live = cfg.intensities > 0
    if live.all():
        return cfg
    pos, v = cfg.positions[live], cfg.intensities[live]
    return Configuration(pos, v, phi(ctx, pos, v))


def hsd_run(
    ctx: ObjectiveContext, params: HsdParams, executor: Executor | None = None
) -> tuple[Configuration, list[RestartReport]]:
    """Run ``n_max`` independent restarts and return the best cleaned configuration."""
    if executor is None:
        reports = [run_restart(ctx, params, i) for i in range(params.n_max)]
    else:
        reports = list(
            executor.map(run_restart, [ctx] * params.n_max, [params] * params.n_max, range(params.n_max))
        )
    winner = min(reports, key=lambda r: r.best.value).best
    return finalize(ctx, winner, params), reports

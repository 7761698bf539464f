from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hsdscatter.experiments import BOX, V_MAX, experiment
from hsdscatter.forward import Scatterer, synthesize
from hsdscatter.hsd import (
    TOLERANCE_MET,
    TRIES_EXHAUSTED,
    HsdParams,
    discharge,
    finalize,
    hsd_run,
    merge_close,
    random_fill,
    restart_rng,
    run_restart,
)
from hsdscatter.objective import Configuration, ObjectiveContext, phi_tilde
from hsdscatter.powell import PowellOptions

PARAMS = HsdParams()
TWO = [Scatterer((0.9, -0.3, 0.5), 1.1), Scatterer((-1.0, 0.4, 0.3), 0.8)]


def small_params(seed=0, **kw):
    base = dict(M_cap=4, T_max=40, n_max=2, master_seed=seed,
                powell=PowellOptions(max_sweeps=15))
    base.update(kw)
    return HsdParams(**base)


def ctx_for(truth, m_cap):
    return ObjectiveContext(synthesize(truth, experiment(1).pairs(), 5.0), BOX, V_MAX, m_cap)


def cfg(points, v):
    return Configuration(np.array(points, dtype=float), np.array(v, dtype=float))


def test_params_validation():
    with pytest.raises(ValueError):
        HsdParams(eps_s=1.0)
    with pytest.raises(ValueError):
        HsdParams(eps=2.0)
    with pytest.raises(ValueError):
        HsdParams(M_cap=0)
    with pytest.raises(ValueError):
        HsdParams(max_total_tries=10)


def test_random_fill_full_and_empty():
    ctx = ctx_for(TWO, 4)
    rng = restart_rng(0, 0)
    full = cfg(np.array([[0, 0, 0.5], [1, 0, 0.2], [-1, 0.5, 0.7], [0.3, 0.3, 0.3]]), np.zeros(4))
    out = random_fill(full, ctx, rng)
    assert np.array_equal(out.positions, full.positions)
    assert out.value == phi_tilde(ctx, full.positions)

    fresh = random_fill(Configuration.empty(), ctx, rng)
    assert len(fresh) == 4
    p = fresh.positions
    assert np.all(np.abs(p[:, 0]) < 2) and np.all(np.abs(p[:, 1]) < 1)
    assert np.all((p[:, 2] > 0) & (p[:, 2] < 1))


def test_random_fill_replays_under_seed():
    ctx = ctx_for(TWO, 4)
    a = random_fill(Configuration.empty(), ctx, restart_rng(5, 2))
    b = random_fill(Configuration.empty(), ctx, restart_rng(5, 2))
    c = random_fill(Configuration.empty(), ctx, restart_rng(5, 3))
    assert a == b and a != c


def test_discharge_examples():
    pts = [[0, 0, 0.5], [1, 0, 0.5], [-1, 0, 0.5]]
    out = discharge(cfg(pts, [0.1, 0.6, 0.49]), PARAMS)
    assert out.intensities.tolist() == [0.6]
    assert out.positions.tolist() == [[1, 0, 0.5]]
    strong = cfg(pts, [0.5, 0.6, 1.9])
    assert discharge(strong, PARAMS) is strong
    assert len(discharge(cfg(pts, [0.1, 0.2, 0.3]), PARAMS)) == 0


def test_merge_pair_example():
    assert BOX.diameter * PARAMS.eps_d == pytest.approx(0.45826, abs=1e-5)
    out = merge_close(cfg([[0, 0, 0.5], [0.3, 0, 0.5]], [0.4, 0.3]), PARAMS, BOX)
    assert len(out) == 1
    assert out.positions.tolist() == [[0, 0, 0.5]]
    assert out.intensities[0] == pytest.approx(0.7)


def test_merge_far_points_identity():
    far = cfg([[0, 0, 0.5], [1, 0, 0.5]], [0.4, 0.3])
    assert merge_close(far, PARAMS, BOX) is far


def test_merge_three_close_points():
    # distances 0.2 and 0.2 (0.4 apart end to end), all below 0.458
    out = merge_close(cfg([[0, 0, 0.5], [0.2, 0, 0.5], [0.4, 0, 0.5]], [0.5, 0.6, 0.7]), PARAMS, BOX)
    assert len(out) == 1
    assert out.intensities[0] == pytest.approx(1.8)
    assert out.positions.tolist() == [[0, 0, 0.5]]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 12))
def test_discharge_merge_shrink_and_idempotence(seed, n):
    rng = np.random.default_rng(seed)
    c = cfg(BOX.sample(rng, n), rng.uniform(0, 2, n))
    d = discharge(c, PARAMS)
    m = merge_close(d, PARAMS, BOX)
    assert len(m) <= len(d) <= len(c)
    assert merge_close(m, PARAMS, BOX) is m
    assert discharge(d, PARAMS) is d
    assert m.intensities.sum() == pytest.approx(d.intensities.sum())


def test_zero_data_returns_empty_fit():
    ctx = ObjectiveContext(synthesize([], experiment(1).pairs(), 5.0), BOX, V_MAX, 4)
    best, reports = hsd_run(ctx, small_params(T_max=20, n_max=1))
    assert best.value == 0.0
    assert len(best) == 0 or np.all(best.intensities == 0)


def test_two_scatterers_recovered_and_reports():
    ctx = ctx_for(TWO, 4)
    best, reports = hsd_run(ctx, small_params(T_max=200, n_max=3, powell=PowellOptions()))
    assert len(reports) == 3
    winner = min(reports, key=lambda r: r.best.value).best
    assert best == finalize(ctx, winner, small_params())
    for r in reports:
        assert r.stop_reason in (TOLERANCE_MET, TRIES_EXHAUSTED)
        assert 0.0 <= r.powell_time_fraction <= 1.0
        assert r.random_tries_used <= small_params().total_tries
    assert best.value < 1e-5
    order = np.argsort(best.positions[:, 0])[::-1]
    assert np.allclose(best.positions[order], [s.position for s in TWO], atol=5e-3)
    assert np.allclose(best.intensities[order], [s.intensity for s in TWO], atol=5e-3)


def test_bitwise_reproducibility():
    ctx = ctx_for(TWO, 4)
    p = small_params(seed=11)
    a, ra = hsd_run(ctx, p)
    b, rb = hsd_run(ctx, p)
    assert a == b
    assert [r.best for r in ra] == [r.best for r in rb]
    assert [r.random_tries_used for r in ra] == [r.random_tries_used for r in rb]
    with ThreadPoolExecutor(2) as pool:
        c, _ = hsd_run(ctx, p, executor=pool)
    assert c == a


def test_restart_is_order_independent():
    ctx = ctx_for(TWO, 4)
    p = small_params(seed=3, n_max=3)
    _, reports = hsd_run(ctx, p)
    alone = run_restart(ctx, p, 2)
    assert alone.best == reports[2].best


def test_finalize_drops_negligible_phantom():
    ctx = ctx_for(TWO, 4)
    pts = [s.position for s in TWO] + [(0.1, 0.1, 0.8)]
    fit = Configuration(np.array(pts), np.array([1.1, 0.8, 1e-12]), 1e-20)
    out = finalize(ctx, fit, PARAMS)
    assert len(out) == 2
    assert np.allclose(out.intensities, [1.1, 0.8])
    assert out.value < 1e-20


def test_finalize_keeps_weak_point_that_matters():
    # A real inclusion below the discharge threshold: removing it costs far more than eps.
    truth = TWO + [Scatterer((0.0, -0.6, 0.3), 0.45)]
    ctx = ctx_for(truth, 4)
    fit = Configuration.from_scatterers(truth, value=0.0)
    assert finalize(ctx, fit, PARAMS) is fit


def test_finalize_drops_exact_zeros_when_cleanup_rejected():
    truth = TWO + [Scatterer((0.0, -0.6, 0.3), 0.45)]
    ctx = ctx_for(truth, 5)
    fit = Configuration(np.array([s.position for s in truth] + [(1.5, 0.8, 0.9)]),
                        np.array([1.1, 0.8, 0.45, 0.0]), 0.0)
    out = finalize(ctx, fit, PARAMS)
    assert len(out) == 3 and out.value < 1e-20

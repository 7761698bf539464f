import numpy as np
import pytest

from hsdscatter.evaluate import (
    GridSpec,
    grid_oracle,
    landscape_slice,
    local_minima,
    match_inclusions,
)
from hsdscatter.experiments import BOX, TRUTH, V_MAX, experiment
from hsdscatter.forward import ConfigurationError, Scatterer, synthesize
from hsdscatter.objective import Configuration, ObjectiveContext, phi_tilde

SLICE_BASE = [(0.0, 0.0, 0.52), (-1.0, 0.3, 0.58)] + [s.position for s in TRUTH[2:]]

# A four-point partial recovery: two inclusions missing, the rest slightly off.
PARTIAL_FOUR = Configuration(
    np.array([[1.645, -0.507, 0.525], [1.215, 0.609, 0.376],
              [-0.216, 0.465, 0.275], [-1.395, 0.248, 0.177]]),
    np.array([1.24243, 0.67626, 0.69180, 0.60747]),
)


def one_scatterer_ctx(position, v=0.9):
    ms = synthesize([Scatterer(position, v)], experiment(1).pairs(), 5.0)
    return ObjectiveContext(ms, BOX, V_MAX, 2)


@pytest.fixture(scope="module")
def ctx1():
    return ObjectiveContext(experiment(1).measurement(), BOX, V_MAX, 16)


@pytest.fixture(scope="module")
def slice_curve(ctx1):
    return landscape_slice(ctx1, SLICE_BASE, 0, 0, (-2.0, 2.0), 401)


def test_grid_nodes_and_spacing():
    g = GridSpec(41, 21, 21)
    nodes = g.nodes(BOX)
    assert len(nodes) == 41 * 21 * 20
    assert np.all(nodes[:, 2] > 0)
    assert np.allclose(g.spacing(BOX), [0.1, 0.1, 0.05])


def test_oracle_on_grid_node_finds_it():
    ctx = one_scatterer_ctx((0.6, -0.3, 0.45))
    found = grid_oracle(ctx, GridSpec(41, 21, 21))
    assert np.allclose(found.positions[0], (0.6, -0.3, 0.45), atol=1e-12)
    assert found.value < 1e-20
    assert found.intensities[0] == pytest.approx(0.9, rel=1e-8)


def test_oracle_off_grid_within_one_cell_and_optimal():
    truth = (0.637, -0.271, 0.418)
    ctx = one_scatterer_ctx(truth)
    g = GridSpec(41, 21, 21)
    found = grid_oracle(ctx, g)
    assert np.all(np.abs(found.positions[0] - truth) <= g.spacing(BOX))
    nodes = g.nodes(BOX)
    rng = np.random.default_rng(0)
    for i in rng.choice(len(nodes), 50, replace=False):
        assert found.value <= phi_tilde(ctx, nodes[i : i + 1])


def test_pair_oracle_recovers_two_nodes():
    truth = [Scatterer((1.0, 0.5, 0.5), 0.8), Scatterer((-1.0, -0.5, 0.5), 1.2)]
    ctx = ObjectiveContext(synthesize(truth, experiment(1).pairs(), 5.0), BOX, V_MAX, 2)
    found = grid_oracle(ctx, GridSpec(5, 5, 3), count=2)
    assert found.value < 1e-20
    assert sorted(map(tuple, found.positions)) == [(-1.0, -0.5, 0.5), (1.0, 0.5, 0.5)]


def test_oracle_cap_and_count_errors():
    ctx = one_scatterer_ctx((0.6, -0.3, 0.45))
    with pytest.raises(ConfigurationError):
        grid_oracle(ctx, GridSpec(41, 21, 21, cap=1000))
    with pytest.raises(ConfigurationError):
        grid_oracle(ctx, GridSpec(41, 21, 21), count=2)
    with pytest.raises(ConfigurationError):
        grid_oracle(ctx, GridSpec(3, 3, 3), count=3)
    with pytest.raises(ConfigurationError):
        GridSpec(0, 3, 3)


def test_slice_matches_direct_evaluation_bitwise(ctx1, slice_curve):
    assert len(slice_curve) == 401
    for i in (0, 57, 200, 400):
        r, val = slice_curve[i]
        pos = np.array(SLICE_BASE)
        pos[0, 0] = r
        assert val == phi_tilde(ctx1, pos)


def test_reference_slice_minima(slice_curve):
    r_best = min(slice_curve, key=lambda p: p[1])[0]
    assert 1.4 < r_best < 1.9
    minima = local_minima(slice_curve)
    for target in (-1.4, -0.6, 0.2, 0.9):
        assert any(abs(m - target) <= 0.15 for m in minima), (target, minima)


def test_phantom_point_gives_flat_curve():
    truth = [Scatterer((1.0, 0.5, 0.5), 0.8)]
    ms = synthesize(truth, experiment(1).pairs(), 5.0)
    # v_max tiny: the phantom's fitted intensity is clipped to ~0 everywhere.
    ctx = ObjectiveContext(ms, BOX, 1e-300, 2)
    curve = landscape_slice(ctx, [(0.0, 0.0, 0.5)], 0, 0, (-1.5, 1.5), 31)
    vals = [v for _, v in curve]
    assert max(vals) == pytest.approx(min(vals), rel=1e-12)
    assert vals[0] == pytest.approx(ms.energy, rel=1e-12)


def test_slice_argument_errors(ctx1):
    with pytest.raises(IndexError):
        landscape_slice(ctx1, SLICE_BASE, 6, 0, (-1, 1), 3)
    with pytest.raises(IndexError):
        landscape_slice(ctx1, SLICE_BASE, 0, 3, (-1, 1), 3)
    one = landscape_slice(ctx1, SLICE_BASE, 0, 0, (-1, 1), 1)
    assert len(one) == 1 and one[0][0] == -1.0


def test_local_minima_three_point_rule():
    curve = list(enumerate([3, 1, 2, 2, 0.5, 4, 3]))
    assert local_minima(curve) == [1, 4, 6]


def test_match_exact_truth():
    m = match_inclusions(Configuration.from_scatterers(TRUTH), TRUTH)
    assert m.n_matched == 6 and not m.missed_truth and not m.spurious_found
    assert all(d == 0 and e == 0 for _, _, d, e in m.matched_pairs)


def test_match_partial_four_point_result():
    m = match_inclusions(PARTIAL_FOUR, TRUTH, 0.15)
    assert m.n_matched == 4
    assert m.matched_truth() == {0, 2, 4, 5}
    assert sorted(m.missed_truth) == [1, 3]


def test_match_empty_and_permutation():
    assert match_inclusions(Configuration.empty(), TRUTH).missed_truth == list(range(6))
    perm = [3, 0, 2, 1]
    shuffled = Configuration(PARTIAL_FOUR.positions[perm], PARTIAL_FOUR.intensities[perm])
    a = match_inclusions(PARTIAL_FOUR, TRUTH)
    b = match_inclusions(shuffled, TRUTH)
    assert a.matched_truth() == b.matched_truth()
    with pytest.raises(ValueError):
        match_inclusions(PARTIAL_FOUR, TRUTH, 0.0)

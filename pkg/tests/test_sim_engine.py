import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_sample
from hybridsim.geo_rem import build_rem
from hybridsim.learners import ForestModel, ForestParams, GprHyperparams, GprModel
from hybridsim.learners.forest import LEAF, Tree
from hybridsim.mobility import NetworkError, RoadNetwork, is_finished, start_state, step
from hybridsim.sim_engine import (
    CAT, MLCAT, PERIODIC, RESULT_COLUMNS, Scenario, SchemeConfig, SchemeState,
    SimulationError, compare_schemes, decide, run_batch, run_simulation,
    transmission_duration, transmission_probability,
)


def leaf_forest(v):
    t = Tree(np.array([LEAF]), np.array([0.0]), np.array([LEAF]), np.array([LEAF]),
             np.array([float(v)]), np.array([10]))
    return ForestModel([t], ForestParams(num_trees=1), 8)


def sinr_stump_forest(thr, lo, hi):
    t = Tree(np.array([2, LEAF, LEAF]), np.array([thr, 0.0, 0.0]),
             np.array([1, LEAF, LEAF]), np.array([2, LEAF, LEAF]),
             np.array([(lo + hi) / 2, lo, hi]), np.array([10, 5, 5]))
    return ForestModel([t], ForestParams(num_trees=1), 8)


def const_gpr(mean, noise=0.01):
    return GprModel(np.arange(5.0), np.full(5, float(mean)), GprHyperparams(1.0, 1.0, noise))


def identity_gpr(noise=0.05):
    x = np.linspace(0, 30, 31)
    return GprModel(x, x, GprHyperparams(5.0, 10.0, noise))


def uniform_rem(sinr, extent=800, c=50):
    pts = np.arange(0, extent, c / 2)
    return build_rem([make_sample(float(x), float(y), sinr=sinr) for x in pts for y in pts], c,
                     origin=(-c, -c))


@pytest.fixture(scope="module")
def grid(shipped_config):
    return shipped_config.network()


@pytest.fixture(scope="module")
def loop600(grid):
    return Scenario(grid, [0, 35, 5, 30], duration=600, loop=True)


# -- probability & decisions -------------------------------------------------

def test_probability_examples():
    cfg = SchemeConfig(CAT, metric_min=0, metric_max=30)
    assert transmission_probability(0, cfg) == 0
    assert transmission_probability(30, cfg) == 1
    assert transmission_probability(15, cfg) == 0.5
    assert transmission_probability(15, SchemeConfig(CAT, metric_max=30, alpha=2)) == 0.25
    assert transmission_probability(-100, cfg) == 0 and transmission_probability(1e9, cfg) == 1


@settings(max_examples=200)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(0.01, 20),
       st.floats(-50, 50), st.floats(0.01, 50))
def test_probability_bounds_and_monotonicity(m1, m2, alpha, lo, width):
    cfg = SchemeConfig(MLCAT, metric_min=lo, metric_max=lo + width, alpha=alpha)
    p1, p2 = transmission_probability(m1, cfg), transmission_probability(m2, cfg)
    assert 0 <= p1 <= 1 and 0 <= p2 <= 1
    if m1 <= m2:
        assert p1 <= p2


def test_scheme_config_validation():
    for bad in [dict(kind="bogus"), dict(kind=CAT, metric_min=5, metric_max=5),
                dict(kind=PERIODIC, interval=0), dict(kind=CAT, alpha=0)]:
        with pytest.raises(ValueError):
            SchemeConfig(**bad)
    assert SchemeConfig.default(MLCAT, "ul").metric_max == 15
    assert SchemeConfig.default(MLCAT, "dl").metric_max == 30
    assert SchemeConfig.default(CAT, "dl").metric_max == 30


def test_periodic_decisions_on_probe_grid():
    state = SchemeState(SchemeConfig(PERIODIC, interval=10))
    fired = []
    for t in range(0, 601):
        if decide(state, float(t), None, None):
            fired.append(t)
            state.t_last = float(t)
    assert fired == list(range(10, 601, 10))


def test_bernoulli_extremes():
    rng = np.random.default_rng(0)
    never = SchemeState(SchemeConfig(CAT, metric_min=0, metric_max=30))
    always = SchemeState(SchemeConfig(MLCAT, metric_min=0, metric_max=15))
    assert not any(decide(never, t, -3.0, rng) for t in range(500))
    assert all(decide(always, t, 15.0, rng) for t in range(500))


# -- simulation accounting ---------------------------------------------------

def test_periodic_600s_accounting(loop600):
    res = run_simulation(loop600, SchemeConfig(PERIODIC, interval=10),
                         (leaf_forest(10), const_gpr(10)), uniform_rem(10), seed=0)
    assert [r.payload for r in res.records] == [500_000] * 60
    assert [r.t_start for r in res.records] == [10.0 * k for k in range(1, 61)]
    assert res.residual_buffer == 0 and res.generated == 30_000_000


def test_zero_duration_run(grid):
    sc = Scenario(grid, [0, 35], duration=0)
    res = run_simulation(sc, SchemeConfig(PERIODIC), (leaf_forest(10), const_gpr(10)),
                         uniform_rem(10), seed=0)
    assert res.records == [] and res.residual_buffer == 0


def test_runs_to_trip_end_without_duration(grid):
    sc = Scenario(grid, [0, 5])
    res = run_simulation(sc, SchemeConfig(PERIODIC), (leaf_forest(10), const_gpr(10)),
                         uniform_rem(10), seed=0)
    assert 0 < res.sim_duration < 1e3
    assert sum(r.payload for r in res.records) + res.residual_buffer == res.generated


def test_cat_starved_only_forced_flush(loop600):
    res = run_simulation(loop600, SchemeConfig(CAT, metric_min=0, metric_max=30),
                         (leaf_forest(10), const_gpr(10)), uniform_rem(-5), seed=1)
    assert [r.t_start for r in res.records] == [120.0, 240.0, 360.0, 480.0, 600.0]
    assert all(r.payload == 6_000_000 for r in res.records)


def test_mlcat_saturated_transmits_every_probe(loop600):
    res = run_simulation(loop600, SchemeConfig(MLCAT, metric_min=0, metric_max=15),
                         (leaf_forest(20), const_gpr(10)), uniform_rem(10), seed=1)
    assert len(res.records) == 600
    assert {r.payload for r in res.records} == {50_000}


def test_degenerate_metric_range_gives_per_probe_transmissions(loop600):
    cfg = SchemeConfig(CAT, metric_min=5.0, metric_max=5.0 + 1e-9)
    res = run_simulation(loop600, cfg, (leaf_forest(10), const_gpr(10)), uniform_rem(12), 3)
    assert {r.payload for r in res.records} == {50_000}


@pytest.mark.parametrize("kind", [PERIODIC, CAT, MLCAT])
def test_buffer_conservation_and_record_validity(kind, loop600):
    rem = build_rem([make_sample(float(x), float(y), sinr=float(s))
                     for x, y, s in np.random.default_rng(0).uniform(
                         [0, 0, -5], [750, 750, 30], (3000, 3))], 25)
    cfg = SchemeConfig.default(kind, "ul", alpha=2)
    res = run_simulation(loop600, cfg, (sinr_stump_forest(10, 2, 12), identity_gpr(3.0)), rem, 5)
    assert sum(r.payload for r in res.records) + res.residual_buffer == 50_000 * 600
    for r in res.records:
        assert r.achieved_rate > 0
        assert r.duration == pytest.approx(r.payload * 8 / (max(r.achieved_rate, 0.01) * 1e6))


def test_zero_rate_draws_are_retried(loop600):
    res = run_simulation(loop600, SchemeConfig(PERIODIC), (leaf_forest(1), const_gpr(-100)),
                         uniform_rem(10), seed=0)
    assert res.records == [] and res.residual_buffer == res.generated == 30_000_000


def test_duration_floor():
    assert transmission_duration(1_000_000, 0.001) == pytest.approx(1_000_000 * 8 / 1e4)
    assert transmission_duration(1_000_000, 8.0) == pytest.approx(1.0)


def test_rem_miss_flag(loop600):
    far = build_rem([make_sample(5000, 5000)], 10)
    res = run_simulation(loop600, SchemeConfig(PERIODIC), (leaf_forest(5), const_gpr(5)), far, 0)
    assert all(r.rem_miss for r in res.records)
    res = run_simulation(loop600, SchemeConfig(PERIODIC), (leaf_forest(5), const_gpr(5)),
                         uniform_rem(10), 0)
    assert not any(r.rem_miss for r in res.records)


def test_seed_determinism(loop600):
    rem = uniform_rem(10)
    cfg = SchemeConfig(MLCAT, metric_max=15)
    models = (sinr_stump_forest(10, 2, 12), identity_gpr(2.0))
    a = run_simulation(loop600, cfg, models, rem, 9)
    b = run_simulation(loop600, cfg, models, rem, 9)
    c = run_simulation(loop600, cfg, models, rem, 10)
    assert a.to_csv() == b.to_csv() and a.to_csv() != c.to_csv()
    assert a.to_csv().splitlines()[0] == ",".join(RESULT_COLUMNS)


def test_errors(grid, loop600):
    with pytest.raises(SimulationError):
        run_simulation(loop600, SchemeConfig(PERIODIC), (None, None), uniform_rem(1), 0)
    cut = RoadNetwork(dict(grid.nodes, **{"island": (5000.0, 5000.0)}), grid.edges)
    with pytest.raises(NetworkError):
        Scenario(cut, [0, "island"], duration=10)
    with pytest.raises(ValueError):
        Scenario(grid, [0, 5], loop=True)


# -- comparison --------------------------------------------------------------

def test_single_run_statistics(loop600):
    models, rem = (sinr_stump_forest(10, 2, 12), identity_gpr(2.0)), uniform_rem(15)
    cfg = SchemeConfig(PERIODIC)
    s = compare_schemes(loop600, [cfg], models, rem, 1, base_seed=4)["periodic"]
    rates = run_simulation(loop600, cfg, models, rem, 4).achieved_rates
    assert s.mean == pytest.approx(rates.mean())
    assert s.median == pytest.approx(np.median(rates))
    assert s.n_runs == 1 and s.transmissions == len(rates)


def test_identical_configs_identical_distributions(loop600):
    models, rem = (sinr_stump_forest(10, 2, 12), identity_gpr(2.0)), uniform_rem(15)
    cfg = SchemeConfig(CAT, alpha=2)
    out = compare_schemes(loop600, [cfg, cfg], models, rem, 3)
    a, b = out.values()
    assert list(out) == ["cat", "cat#2"]
    assert np.array_equal(a.rates, b.rates)


def test_parallel_batch_matches_serial(loop600):
    models, rem = (sinr_stump_forest(10, 2, 12), identity_gpr(2.0)), uniform_rem(15)
    cfgs = {"p": SchemeConfig(PERIODIC), "m": SchemeConfig(MLCAT, metric_max=15)}
    serial = run_batch(loop600, cfgs, models, rem, 2, base_seed=7)
    par = run_batch(loop600, cfgs, models, rem, 2, base_seed=7, workers=2)
    for k in cfgs:
        assert [r.to_csv() for r in serial[k]] == [r.to_csv() for r in par[k]]
        assert [r.seed for r in serial[k]] == [7, 8]


def test_hotspot_mlcat_beats_periodic_by_enumeration():
    # west half is a hotspot (sinr 20 -> 12 MBit/s), east half is poor (sinr 0 -> 2 MBit/s)
    net = RoadNetwork.from_dict({
        "nodes": [{"id": 0, "x": 0, "y": 0}, {"id": 1, "x": 1000, "y": 0}],
        "edges": [{"id": 0, "from": 0, "to": 1, "length": 1000, "speed_limit": 10,
                   "bidir": True}]})
    samples = [make_sample(float(x), 0.0, sinr=20.0 if x < 500 else 0.0)
               for x in np.arange(5, 1000, 10)]
    rem = build_rem(samples, 10, origin=(0, -5))
    sc = Scenario(net, [0, 1], duration=1200, loop=True)
    models = (sinr_stump_forest(10, 2, 12), identity_gpr(0.05))
    per = compare_schemes(sc, [SchemeConfig(PERIODIC)], models, rem, 3)["periodic"]
    ml = compare_schemes(sc, [SchemeConfig(MLCAT, metric_max=15, alpha=4)], models, rem, 3)
    # enumerate the periodic fire positions from the kinematics alone
    state = start_state(net, sc.route, 0)
    expected = []
    for k in range(1, 12001):
        if is_finished(state, net):
            state = start_state(net, sc.route, 0)
        state = step(state, net, 0.1)
        if k % 100 == 0:
            expected.append(12.0 if state.position[0] < 500 else 2.0)
    assert per.mean == pytest.approx(np.mean(expected), abs=0.05)
    assert ml["mlcat"].mean > per.mean + 3

import numpy as np
import pytest

from prefroute.core import routing_from_chain
from prefroute.dataio import history_to_dict
from prefroute.learn import estimate_first_order
from prefroute.synthetic import SyntheticConfig, generate_synthetic

# Reference operation: about 9 vehicles on 35 stops, then 6 vehicles on 25.
PRE_STOPS, PRE_FLEET = 35, 9
POST_STOPS, POST_FLEET = 25, 6


def test_deterministic():
    cfg = SyntheticConfig(weeks=6, drift_week=3, seed=11)
    a, da, _ = generate_synthetic(cfg)
    b, db, _ = generate_synthetic(cfg)
    assert history_to_dict(a) == history_to_dict(b)
    assert np.array_equal(da.dist, db.dist)
    c, _, _ = generate_synthetic(SyntheticConfig(weeks=6, drift_week=3, seed=12))
    assert history_to_dict(c) != history_to_dict(a)


def test_noiseless_planner_follows_latent_chain():
    cfg = SyntheticConfig(n_regular=12, n_adhoc=0, p_regular=1.0, weeks=3, weekdays=2, fleet_profile=(3, 3),
                          drift_week=None, planner_noise=0.0, capacity=1000, seed=4)
    ds, _, truth = generate_synthetic(cfg)
    for inst in ds:
        assert inst.routing == routing_from_chain(truth.before[inst.weekday].chain)


@pytest.mark.parametrize("seed", range(3))
def test_preferences_are_learnable(seed):
    cfg = SyntheticConfig(n_regular=15, n_adhoc=0, p_regular=0.9, weeks=80, weekdays=1, fleet_profile=(3, 3),
                          drift_week=None, planner_noise=0.1, seed=seed)
    ds, _, truth = generate_synthetic(cfg)
    p = estimate_first_order(ds, lam=1.0)
    latent = truth.before[0].preference.probs
    idx = p.stop_index
    for i in range(1, 16):
        assert np.argmax(p.probs[idx[i]]) == np.argmax(latent[i])


def test_reference_shape():
    ds, _, truth = generate_synthetic(SyntheticConfig(seed=0))
    rep = truth.report
    assert len(ds) == 200
    assert rep["pre_mean_stops"] == pytest.approx(PRE_STOPS, rel=0.1)
    assert rep["pre_mean_fleet"] == pytest.approx(PRE_FLEET, rel=0.1)
    assert rep["post_mean_stops"] == pytest.approx(POST_STOPS, rel=0.1)
    assert rep["post_mean_fleet"] == pytest.approx(POST_FLEET, rel=0.1)


def test_instances_are_valid_and_drift_marked():
    ds, dist, truth = generate_synthetic(SyntheticConfig(weeks=8, drift_week=4, seed=2))
    assert ds.drift_t == truth.drift_t == 3 * 5 + 1
    for inst in ds:
        assert inst.validate().ok
    assert dist.dist.shape == (71, 71) and np.all(np.diag(dist.dist) == 0)


@pytest.mark.parametrize("kw", [
    {"p_regular": 1.5}, {"planner_noise": -0.1}, {"weeks": 0}, {"fleet_profile": (0, 3)},
    {"drift_week": 40}, {"demand_range": (0, 2)}, {"capacity": 1, "demand_range": (1, 3)},
    {"p_regular": 0.0, "p_adhoc": 0.0}, {"n_regular": 0, "n_adhoc": 0},
])
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        SyntheticConfig(**kw)

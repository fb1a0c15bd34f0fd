import math

import numpy as np
import pytest

from hjmsv import InitialCurve, McConfig, ModelParams, simulate_caplet, simulate_zcb
from hjmsv.mc import characteristic_price, correlated_increments, simulate_paths
from hjmsv.model import CapletSpec

SMALL = McConfig(n_paths=4000, steps_per_year=24, seed=11, batch_size=1000)


def test_deterministic_caplet_matches_characteristic(flat_curve):
    params = ModelParams(lambda_fn=0.0, eps_fn=0.0)
    spec = CapletSpec(1.0, 2.0, 0.035)
    est = simulate_caplet(spec, flat_curve, params, SMALL)
    assert est.std_error == 0.0
    assert est.mean == pytest.approx(characteristic_price(flat_curve, params, 1.0, spec), abs=1e-12)


def test_characteristic_needs_zero_volatility(flat_curve, params):
    with pytest.raises(ValueError):
        characteristic_price(flat_curve, params, 1.0)


def test_characteristic_bond_is_curve_discount(quote_curve):
    params = ModelParams(lambda_fn=0.0, kappa=0.3)
    assert characteristic_price(quote_curve, params, 7.0) == pytest.approx(float(quote_curve.discount(7.0)), rel=1e-13)


def test_variance_frozen_without_vol_of_vol(flat_curve):
    params = ModelParams(eps_fn=0.0)
    _, _, v, _ = simulate_paths(2.0, flat_curve, params, 500, np.random.default_rng(0), SMALL)
    assert np.all(v == 1.0)


def test_bond_martingale(flat_curve, params):
    est = simulate_zcb(5.0, flat_curve, params, McConfig(n_paths=50_000, steps_per_year=24, seed=3))
    assert abs(est.mean - 1.04**-5) < 3 * est.std_error


def test_zero_maturity_bond(flat_curve, params):
    est = simulate_zcb(0.0, flat_curve, params, SMALL)
    assert est.mean == 1.0 and est.std_error == 0.0


def test_deterministic_rates_discount_exactly(quote_curve):
    params = ModelParams(kappa=0.0, lambda_fn=0.0)
    est = simulate_zcb(6.5, quote_curve, params, SMALL)
    assert est.mean == pytest.approx(float(quote_curve.discount(6.5)), rel=1e-14)
    assert est.std_error < 1e-15


@pytest.mark.parametrize("rho", [-0.75, 0.0, 0.4])
def test_increment_correlation(rho):
    n = 200_000
    dW, dZ = correlated_increments(np.random.default_rng(5), n, rho, 0.1)
    assert np.corrcoef(dW, dZ)[0, 1] == pytest.approx(rho, abs=3 / math.sqrt(n))
    assert np.std(dW) == pytest.approx(0.1, rel=0.01)


def test_y_stays_nonnegative(flat_curve, params):
    _, y, _, _ = simulate_paths(3.0, flat_curve, params, 2000, np.random.default_rng(1), SMALL)
    assert np.all(y >= 0.0)


def test_worker_count_does_not_change_result(flat_curve, params):
    spec = CapletSpec(1.0, 2.0, 0.04)
    one = simulate_caplet(spec, flat_curve, params, SMALL)
    four = simulate_caplet(spec, flat_curve, params, McConfig(**{**SMALL.__dict__, "workers": 4}))
    assert one == four


def test_same_seed_same_estimate(flat_curve, params):
    a = simulate_zcb(2.0, flat_curve, params, SMALL)
    b = simulate_zcb(2.0, flat_curve, params, SMALL)
    c = simulate_zcb(2.0, flat_curve, params, McConfig(**{**SMALL.__dict__, "seed": 12}))
    assert a == b and a != c


def test_uneven_batches(flat_curve, params):
    est = simulate_zcb(1.0, flat_curve, params, McConfig(n_paths=2500, batch_size=1000, steps_per_year=12))
    assert est.n_paths == 2500


def test_batch_merge_matches_pooled_statistics(flat_curve, params):
    cfg = McConfig(n_paths=3000, steps_per_year=12, seed=9, batch_size=1000)
    est = simulate_zcb(1.0, flat_curve, params, cfg)
    seeds = np.random.SeedSequence(9).spawn(3)
    pooled = np.concatenate([simulate_paths(1.0, flat_curve, params, 1000, np.random.default_rng(s), cfg)[3]
                             for s in seeds])
    assert est.mean == pytest.approx(pooled.mean(), rel=1e-13)
    assert est.std_error == pytest.approx(pooled.std(ddof=1) / math.sqrt(3000), rel=1e-10)


@pytest.mark.parametrize("kw", [dict(n_paths=0), dict(steps_per_year=0), dict(batch_size=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        McConfig(**kw)


def test_caplet_estimate_is_sane(flat_curve, params):
    est = simulate_caplet(CapletSpec(1.0, 2.0, 0.04), flat_curve, params, SMALL)
    assert 0.0 < est.mean < 0.01 and est.std_error > 0

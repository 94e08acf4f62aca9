import numpy as np
import pytest
from scipy.integrate import trapezoid

from carnot_tame.dynamics import (
    ChainConfig,
    capped_norm,
    constant_one,
    coordinate_x,
    dilating_exponential,
    empirical_logsobolev,
    empirical_poincare,
    entropy_of_square,
    integrated_autocorr_time,
    langevin_chain,
    n_marginal_density,
    n_marginal_test,
)
from carnot_tame.errors import EmptySample, InvalidParameter
from carnot_tame.group import heisenberg
from carnot_tame.norms import TypeTwoSmooth
from carnot_tame.outer import Power
from carnot_tame.taming import AdditivePower, EnergyModel, NoTaming, partition_estimate

N16 = TypeTwoSmooth(16.0)


def tamed(p=8.0):
    return EnergyModel(heisenberg(), N16, AdditivePower(1.0, 1.0), Power(p))


@pytest.fixture(scope="module")
def chain():
    return langevin_chain(tamed(), ChainConfig(steps=2000, burn_in=500, seed=11, chains=40))


def test_chain_config_validation():
    with pytest.raises(EmptySample):
        ChainConfig(steps=100, burn_in=100)
    with pytest.raises(InvalidParameter):
        ChainConfig(burn_in=-1)
    with pytest.raises(InvalidParameter):
        ChainConfig(step_size=0.0)
    with pytest.raises(InvalidParameter):
        ChainConfig(chains=0)


def test_chain_shape_acceptance_and_marginal(chain):
    assert chain.samples.x.shape == (40, 1500, 2)
    assert 0.2 <= chain.acceptance <= 0.8
    mt = n_marginal_test(tamed(), chain, bins=10)
    assert mt.p_value > 1e-3


def test_chain_deterministic():
    cfg = ChainConfig(steps=300, burn_in=100, seed=5, chains=3)
    a, b = langevin_chain(tamed(), cfg), langevin_chain(tamed(), cfg)
    assert np.array_equal(a.samples.x, b.samples.x) and a.acceptance == b.acceptance


def test_marginal_density_normalizes_to_partition_function():
    model = EnergyModel(heisenberg(), N16, NoTaming(), Power(2.0))
    N = np.linspace(0.0, 12.0, 20001)[1:]
    Z = trapezoid(n_marginal_density(model, N), N)
    assert np.isclose(Z, np.pi ** 2 / 4, rtol=1e-3)
    est = partition_estimate(tamed(2.0), 100_000, seed=0)
    Zt = trapezoid(n_marginal_density(tamed(2.0), N), N)
    assert abs(Zt - est.Z_hat) < 5 * est.stderr + 1e-3


def test_autocorr_time_of_ar1():
    rng = np.random.default_rng(0)
    phi, T = 0.8, 200_000
    e = rng.standard_normal(T)
    x = np.empty(T)
    x[0] = 0.0
    for t in range(1, T):
        x[t] = phi * x[t - 1] + e[t]
    assert np.isclose(integrated_autocorr_time(x), (1 + phi) / (1 - phi), rtol=0.1)


def test_entropy_of_square():
    assert entropy_of_square(np.ones(10)) == 0.0
    f = np.array([0.0, 1.0])
    assert np.isclose(entropy_of_square(f), 0.5 * np.log(2.0))


def test_inequalities_skip_constants_and_need_samples(chain):
    s = chain.flat
    tests = [constant_one(), coordinate_x(0), capped_norm()]
    p = empirical_poincare(tamed(), s, tests)
    l = empirical_logsobolev(tamed(), s, tests)
    assert p.table["1"] is None and l.table["1"] is None
    assert p.worst > 0 and np.isfinite(p.worst)
    with pytest.raises(EmptySample):
        empirical_poincare(tamed(), s[np.arange(10)], tests)
    with pytest.raises(EmptySample):
        empirical_logsobolev(tamed(), s, [])


def test_dilating_family_ratio_stays_bounded(chain):
    s = chain.flat
    ratios = [empirical_logsobolev(tamed(), s, [dilating_exponential(t)]).worst
              for t in (0.05, 0.1, 0.2)]
    assert all(np.isfinite(r) and r > 0 for r in ratios)
    assert max(ratios) < 10.0

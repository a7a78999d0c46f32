import math

import numpy as np
import pytest

from entropic_collapse.hilbert import CollapseParams
from entropic_collapse.models.wavepacket import (
    NEUTRON_MASS,
    WavepacketModel,
    containment,
    energy_input,
    free_width,
    lambda0,
    lambda0_max,
    localization_criterion,
    run_wavepacket,
    t0_from_lambda,
)


def test_lambda0_inverse_and_scaling():
    lam = lambda0(NEUTRON_MASS, 7.07e-26)
    assert lam == pytest.approx(2.43e-8, rel=1e-3)
    assert t0_from_lambda(NEUTRON_MASS, lam) == pytest.approx(7.07e-26)
    assert lambda0(2.0, 4.0, 1.0) == pytest.approx(lambda0(2.0, 1.0, 1.0) / 2)
    with pytest.raises(ValueError):
        lambda0(-1.0, 1.0)


def test_lambda0_max_regimes():
    assert lambda0_max(1.0, 1.0, 0.0, 1.0).value == pytest.approx(lambda0(1.0, 1.0, 1.0))
    r = lambda0_max(1.0, 1.0, 4 * math.pi, 1.0)
    assert r.ratio == pytest.approx(1.0)
    assert r.value == pytest.approx(math.sqrt(2) * r.lambda0)
    big = lambda0_max(1.0, 1.0, 1e6, 1.0)
    assert big.value == pytest.approx(1e6 / (2 * big.lambda0), rel=1e-9)
    assert lambda0_max(1.0, 1.0, 1.0, 1.0).localized and not big.localized


def test_grid_validation():
    with pytest.raises(ValueError):
        WavepacketModel(1.0, 500, 0.1, 0.2)
    with pytest.raises(ValueError):
        WavepacketModel(1.0, 512, 0.1, 0.05)


def test_localization_threshold_scales_with_lambda0():
    ratios = []
    for mass in (1e-2, 1.0, 1e2):
        m = WavepacketModel.natural(mass, 1.0, grid_n=1024, points_per_lambda=8)
        lam = lambda0(mass, 1.0, 1.0)
        r = localization_criterion(m, m.gaussian(20 * lam), CollapseParams(1.0, 1.0))
        assert r.met
        ratios.append(r.threshold_cell / lam)
    assert all(0.1 <= x <= 10 for x in ratios)
    assert max(ratios) / min(ratios) < 1.5


def test_sharp_packet_does_not_localize_further():
    m = WavepacketModel(1.0, 512, 0.25, 0.25)
    r = localization_criterion(m, m.gaussian(0.2), CollapseParams(0.5, 1.0))
    assert not r.met


def test_free_spreading_without_collapse():
    m = WavepacketModel(1.0, 1024, 0.25, 1.0)
    p = run_wavepacket(m, CollapseParams(2 * math.pi, 0.0), 5.0, 0, sigma0=2.0, dt=0.01,
                       n_samples=51)
    assert np.all(p.events == 0)
    np.testing.assert_allclose(p.width[0], free_width(2.0, p.times), rtol=1e-4)


def test_rows_do_not_depend_on_batch():
    m = WavepacketModel(1.0, 256, 0.25, 1.0)
    from entropic_collapse.models.wavepacket import WavepacketScenario
    sc = WavepacketScenario(m, CollapseParams(2 * math.pi, 5.0), 2.0, 1.0, 0.01, n_samples=11)
    a = sc.simulate([0, 1, 2], 7)
    b = sc.simulate([1], 7)
    # same random stream per trajectory; batched FFTs may differ in the last ulp
    np.testing.assert_array_equal(a.events[1], b.events[0])
    np.testing.assert_allclose(a.width[1], b.width[0], rtol=1e-12)


@pytest.fixture(scope="module")
def collapsing_paths():
    m = WavepacketModel(1.0, 512, 0.25, 1.0)
    p = CollapseParams(2 * math.pi, 10.0)
    return m, p, run_wavepacket(m, p, 10.0, 5, sigma0=2.0, dt=0.005, n_samples=101, n_traj=60)


def test_width_is_contained(collapsing_paths):
    m, p, paths = collapsing_paths
    assert paths.guard_ok
    lm = lambda0_max(m.mass, p.t0, p.tau0, m.hbar)
    c = containment(paths, lm.value, t_min=5.0)
    assert c.width_bound_ratio < 3
    # a free packet would have grown by a factor > 2 over the window
    assert abs(c.mean_slope) * 5.0 < 0.1 * c.mean_width


def test_energy_input_is_order_t0_over_tau0(collapsing_paths):
    m, p, paths = collapsing_paths
    e, power = energy_input(paths, k_cap=m.kinetic_spectrum.mean() / 2)
    assert e > 0
    assert 0.1 < power / (p.t0 / p.tau0) < 10

import math

import numpy as np
import pytest

from entropic_collapse.hilbert import CollapseParams
from entropic_collapse.models.cyclic import (
    CyclicModel,
    check_timescales,
    emission_oracle,
    run_cyclic,
)


def test_layout_and_restart():
    m = CyclicModel(1.0, 0.1, n_photon_modes=3, bandwidth=0.5)
    assert m.dim == 8
    h = m.hamiltonian
    assert h.basis.labels[m.index(1, 2)] == "down,w2"
    assert list(m.restart_map) == [0, 0, 0, 0, 4, 4, 4, 4]
    assert m.photon_mask.sum() == 6
    np.testing.assert_allclose(m.photon_energies, 2.0 + 0.5 * (np.arange(3) + 0.5) / 3 - 0.25)
    with pytest.raises(ValueError):
        CyclicModel(1.0, 0.1, n_photon_modes=3)
    with pytest.raises(OverflowError):
        CyclicModel(1.0, 0.1, n_photon_modes=5000, bandwidth=1.0)


def test_emission_conserves_energy_in_h0():
    # emitting from the upper atomic level into a resonant mode is on-shell
    m = CyclicModel(1.0, 0.2)
    h = m.hamiltonian
    vals = np.linalg.eigvalsh(h.full)
    assert vals[0] < 0
    assert m.photon_energies[0] == pytest.approx(2 * m.v1)


def test_no_collapse_without_gamma0():
    m = CyclicModel(1.0, math.pi / 2)
    run = run_cyclic(m, CollapseParams(10.0, 0.0), 500.0, seed=1, dt=0.005)
    assert run.n_emissions == 0 and run.n_collapses == 0


def test_timescale_warning():
    with pytest.warns(RuntimeWarning):
        assert not check_timescales(CyclicModel(1.0, 0.01), CollapseParams(1.0, 1.0))


def test_cycle_period_single_mode():
    m = CyclicModel(1.0, math.pi / 2)  # tau = 1
    p = CollapseParams(10.0, 0.01)  # tau0 = 100
    run = run_cyclic(m, p, 1.2e5, seed=4)
    assert run.n_collapses >= 1000
    assert 95 <= run.cycle_period <= 115


def test_emission_count_matches_markov_oracle():
    m = CyclicModel(1.0, math.pi / 2)
    p = CollapseParams(10.0, 0.01)
    t_end = 1e4 * p.tau0
    run = run_cyclic(m, p, t_end, seed=9)
    orc = emission_oracle(m, p)
    expected = t_end / orc["emission_interval"]
    assert abs(run.n_emissions - expected) < 4 * math.sqrt(expected)
    assert abs(run.n_collapses - t_end / p.tau0) < 4 * math.sqrt(t_end / p.tau0)
    assert orc["emission_probability"] == pytest.approx(0.25, abs=0.01)


def test_band_emits_about_half_the_time():
    m = CyclicModel(1.0, 0.02, n_photon_modes=100, bandwidth=1.0)
    p = CollapseParams(10.0, 0.01)
    orc = emission_oracle(m, p)
    assert 0.4 < orc["emission_probability"] < 0.55
    run = run_cyclic(m, p, 2e4, seed=2)
    n = run.n_collapses
    frac = run.n_emissions / n
    pe = orc["emission_probability"]
    assert abs(frac - pe) < 4 * math.sqrt(pe * (1 - pe) / n) + 0.02

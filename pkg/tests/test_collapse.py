import math

import numpy as np
import pytest

from entropic_collapse.collapse import (
    SegmentEngine,
    criterion_met,
    project,
    run_trajectory,
    sample_collapse_time,
    step_count,
)
from entropic_collapse.hilbert import (
    CollapseParams,
    MixedState,
    PreferredBasis,
    PureState,
    SplitHamiltonian,
    mean_energy,
    propagate_unitary,
)
from entropic_collapse.models.two_level import TwoLevelModel
from entropic_collapse.rng import trajectory_rng

SQ2 = 1 / math.sqrt(2)


@pytest.fixture
def chain():
    h1 = np.array([[0, 0.3, 0], [0.3, 0, 0.3], [0, 0.3, 0]])
    return SplitHamiltonian(PreferredBasis(3, ("a", "b", "c")), [0.0, 1.0, 2.0], h1)


def test_criterion_examples():
    h = TwoLevelModel(1.0).hamiltonian
    ground = PureState([SQ2, SQ2])
    assert criterion_met(ground, h, CollapseParams(2.0, 1.0))
    assert not criterion_met(ground, h, CollapseParams(1.0, 1.0))
    for i in range(2):
        assert not criterion_met(PureState.basis_state(2, i), h, CollapseParams(5.0, 1.0))
    free = SplitHamiltonian(PreferredBasis(2), [0.0, 0.0], np.zeros((2, 2)))
    assert criterion_met(ground, free, CollapseParams(1e-6, 1.0))


def test_criterion_on_mixed_state():
    m = TwoLevelModel(1.0, temperature=0.01)
    rho = m.canonical()
    assert isinstance(rho, MixedState)
    assert criterion_met(rho, m.hamiltonian, CollapseParams(1.5, 1.0))
    assert not criterion_met(rho, m.hamiltonian, CollapseParams(1.4, 1.0))


def test_waiting_time_moments():
    rng = np.random.default_rng(1)
    assert sample_collapse_time(rng, CollapseParams(1.0, 0.0)) == math.inf
    s = np.array([sample_collapse_time(rng, CollapseParams(1.0, 1.0)) for _ in range(10**6)])
    assert abs(s.mean() - 1.0) < 0.005
    t2 = np.array([sample_collapse_time(rng, CollapseParams(1.0, 2.0)) for _ in range(2 * 10**5)])
    assert t2.var() == pytest.approx(0.25, rel=0.02)


def test_gated_waits_are_exponential():
    # free degenerate levels: the superposition is static and the criterion
    # holds until the first collapse, so first-event times are pure gated waits
    from scipy import stats
    from entropic_collapse.ensemble import EnsembleSpec, MatrixScenario, run_ensemble

    free = SplitHamiltonian(PreferredBasis(2), [0.0, 0.0], np.zeros((2, 2)))
    p = CollapseParams(1.0, 0.5)
    sc = MatrixScenario(free, p, PureState([SQ2, SQ2]), 40.0, 2e-3, n_samples=2)
    st = run_ensemble(sc, EnsembleSpec(10_000, 8, ("events",), keep_logs=True))
    first = np.array([log.times[0] for _, log in st.logs if len(log)])
    assert all(len(log) == 1 for _, log in st.logs if len(log))
    # censoring at t_end = 20 tau0 removes a fraction exp(-20) only
    assert len(first) == 10_000
    assert stats.kstest(first, "expon", args=(0, p.tau0)).pvalue > 0.01


def test_project_basis_state_is_fixed():
    rng = np.random.default_rng(0)
    psi = PureState.basis_state(3, 1)
    out, ev = project(psi, rng)
    assert ev.selected == 1 and ev.delta_s == 0.0
    np.testing.assert_array_equal(out.amplitudes, psi.amplitudes)


@pytest.mark.parametrize("amps, p1", [([SQ2, SQ2], 0.5), ([0.5, 1j * math.sqrt(3) / 2], 0.75)])
def test_project_born_frequencies(amps, p1):
    rng = np.random.default_rng(7)
    n = 10**5
    psi = PureState(amps)
    hits = sum(project(psi, rng)[1].selected for _ in range(n))
    assert abs(hits / n - p1) < 3 * math.sqrt(p1 * (1 - p1) / n)


def test_gamma_zero_is_unitary(chain):
    psi = PureState.normalized([1, 1j, 0])
    rec = run_trajectory(psi, chain, CollapseParams(1.0, 0.0), 5.0, 0.01, seed=3, sample_every=50)
    assert len(rec.log) == 0
    ref = propagate_unitary(psi, chain, rec.times[-1])
    np.testing.assert_allclose(rec.states[-1], ref.amplitudes, atol=1e-12)


def test_bound_ground_state_never_collapses():
    m = TwoLevelModel(5.0)
    rec = run_trajectory(m.ground, m.hamiltonian, CollapseParams(1.0, 1.0), 200.0, 0.001, seed=1)
    assert len(rec.log) == 0
    assert rec.gated_time == 0.0


def test_event_log_invariants(chain):
    psi = PureState.normalized([1, 1, 1])
    rec = run_trajectory(psi, chain, CollapseParams(1.5, 0.5), 40.0, 0.005, seed=11)
    log = rec.log
    assert len(log) > 5
    assert np.all(np.diff(log.steps) > 0)
    assert log.times[0] >= 0 and log.times[-1] <= rec.times[-1]
    np.testing.assert_allclose(log.pre_weights.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(log.delta_s >= 0)
    assert np.all((log.selected >= 0) & (log.selected < 3))
    # ds > de / t0 held at every collapse
    assert np.all(log.delta_s > log.delta_e / 1.5)
    # right after each event the state is the selected basis vector
    idx = np.searchsorted(rec.times, log.times)
    for k, i in enumerate(idx):
        if i < len(rec.times) and rec.times[i] == log.times[k]:
            assert abs(rec.states[i][log.selected[k]]) == pytest.approx(1.0, abs=1e-12)


def test_same_seed_same_trajectory(chain):
    psi = PureState.normalized([1, 1, 0])
    a = run_trajectory(psi, chain, CollapseParams(1.5, 0.5), 20.0, 0.01, seed=5)
    b = run_trajectory(psi, chain, CollapseParams(1.5, 0.5), 20.0, 0.01, seed=5)
    c = run_trajectory(psi, chain, CollapseParams(1.5, 0.5), 20.0, 0.01, seed=6)
    np.testing.assert_array_equal(a.log.steps, b.log.steps)
    np.testing.assert_array_equal(a.states, b.states)
    assert not np.array_equal(a.log.steps, c.log.steps)


def naive_trajectory(psi, h, params, n_steps, dt, rng):
    """Step-by-step reference: unitary step, criterion check, Bernoulli collapse."""
    p = -math.expm1(-params.gamma0 * dt)
    events, jumps = 0, []
    for _ in range(n_steps):
        psi = propagate_unitary(psi, h, dt)
        if criterion_met(psi, h, params) and rng.random() < p:
            before = mean_energy(psi, h)
            w = np.abs(psi.amplitudes) ** 2
            psi, ev = project(psi, rng, h)
            jumps.append((mean_energy(psi, h) - before, ev.delta_e, w))
            events += 1
    return psi, events, jumps


def test_engine_matches_naive_stepper(chain):
    params = CollapseParams(1.5, 0.5)
    dt, n_steps, n = 0.01, 400, 300
    start = PureState.normalized([1, 1j, 0])
    eng = SegmentEngine(chain, params, dt)
    pop_e, cnt_e, pop_n, cnt_n, dE_gap = [], [], [], [], []
    for i in range(n):
        key, log, _, _ = eng.run(start.amplitudes, n_steps, trajectory_rng(1, i))
        psi = eng.sample(key, log, [n_steps])[0]
        pop_e.append(np.abs(psi) ** 2)
        cnt_e.append(len(log))
        psi, k, jumps = naive_trajectory(start, chain, params, n_steps, dt, trajectory_rng(2, i))
        pop_n.append(np.abs(psi.amplitudes) ** 2)
        cnt_n.append(k)
        dE_gap += [j[0] - j[1] for j in jumps]
    pop_e, pop_n = np.array(pop_e), np.array(pop_n)
    se = np.sqrt(pop_e.var(axis=0) / n + pop_n.var(axis=0) / n)
    assert np.all(np.abs(pop_e.mean(0) - pop_n.mean(0)) < 4 * se + 1e-12)
    se_c = math.sqrt(np.var(cnt_e) / n + np.var(cnt_n) / n)
    assert abs(np.mean(cnt_e) - np.mean(cnt_n)) < 4 * se_c
    # energy bookkeeping: mean post - pre energy equals mean delta E
    gap = np.array(dE_gap)
    assert abs(gap.mean()) < 4 * gap.std() / math.sqrt(len(gap))


def test_segment_engine_rejects_coarse_dt(chain):
    with pytest.raises(ValueError):
        SegmentEngine(chain, CollapseParams(1.0, 20.0), 0.01)


def test_step_count():
    assert step_count(1.0, 0.1) == 10
    assert step_count(1.05, 0.1) == 11
    with pytest.raises(ValueError):
        step_count(1.0, 0.0)

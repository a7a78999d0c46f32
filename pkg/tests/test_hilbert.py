import math

import numpy as np
import pytest

from entropic_collapse.hilbert import (
    CollapseParams,
    DimensionError,
    HermiticityError,
    MixedState,
    NormalizationError,
    PreferredBasis,
    PureState,
    SplitHamiltonian,
    born_weights,
    mean_energy,
    propagate_unitary,
    reduction_energy,
    reduction_entropy,
    shannon_entropy,
)
from entropic_collapse.models.two_level import TwoLevelModel

SQ2 = 1 / math.sqrt(2)


def two_level(v1=1.0):
    return TwoLevelModel(v1).hamiltonian


def test_basis_labels():
    b = PreferredBasis(3, ("a", "b", "c"))
    assert b.index("c") == 2
    assert PreferredBasis(2).labels == ("0", "1")
    with pytest.raises(ValueError):
        PreferredBasis(2, ("a", "a"))
    with pytest.raises(DimensionError):
        PreferredBasis(0)


def test_non_hermitian_h1_rejected():
    with pytest.raises(HermiticityError) as err:
        SplitHamiltonian(PreferredBasis(2), [0, 0], [[0, 1], [0.5, 0]])
    assert err.value.asymmetry == pytest.approx(0.5)


def test_state_normalisation():
    with pytest.raises(NormalizationError):
        PureState([1, 1])
    PureState([1, 1e-11])
    with pytest.raises(NormalizationError):
        MixedState(np.eye(2))


@pytest.mark.parametrize("amps, expected", [
    ([1, 0, 0], [1, 0, 0]),
    ([SQ2, SQ2], [0.5, 0.5]),
    ([0.5, 1j * math.sqrt(3) / 2], [0.25, 0.75]),
])
def test_born_weights(amps, expected):
    w = born_weights(PureState(amps))
    np.testing.assert_allclose(w, expected, atol=1e-15)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)


def test_reduction_entropy_examples():
    assert reduction_entropy(PureState([SQ2, SQ2])) == pytest.approx(math.log(2), abs=1e-12)
    assert reduction_entropy(PureState([0, 1])) == 0.0
    assert reduction_entropy(MixedState(np.eye(2) / 2)) == pytest.approx(0.0, abs=1e-12)
    rng = np.random.default_rng(0)
    u, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
    rho = MixedState(u @ (np.eye(2) / 2) @ u.conj().T)
    assert reduction_entropy(rho) == pytest.approx(0.0, abs=1e-12)


def test_reduction_energy_examples():
    h = two_level(1.3)
    assert reduction_energy(PureState([SQ2, SQ2]), h) == pytest.approx(1.3, abs=1e-12)
    for i in range(2):
        assert reduction_energy(PureState.basis_state(2, i), h) == 0.0


@pytest.mark.parametrize("x", [0.01, 0.5, 1.0, 3.0, 20.0])
def test_canonical_energy_is_v1_tanh(x):
    v1 = 0.7
    h = two_level(v1)
    rho = MixedState.thermal(h, v1 / x)
    assert reduction_energy(rho, h) == pytest.approx(v1 * math.tanh(x), rel=1e-10)


def test_mixed_entropy_subtracts_von_neumann():
    h = two_level(1.0)
    rho = MixedState.thermal(h, 1.0)
    p = np.linalg.eigvalsh(rho.rho)
    sv = -np.sum(p * np.log(p))
    assert reduction_entropy(rho) == pytest.approx(math.log(2) - sv, abs=1e-12)


def test_propagation_examples():
    h = two_level(1.0)
    up = PureState.basis_state(2, 0)
    assert propagate_unitary(up, h, 0.0) is up
    vals, vecs = h.eig
    eig = PureState(vecs[:, 0])
    out = propagate_unitary(eig, h, 3.7)
    assert abs(np.vdot(eig.amplitudes, out.amplitudes)) == pytest.approx(1.0, abs=1e-12)
    half = propagate_unitary(up, h, math.pi / 2)
    np.testing.assert_allclose(born_weights(half), [0, 1], atol=1e-12)


def test_propagation_preserves_energy_and_norm():
    rng = np.random.default_rng(4)
    a = rng.normal(size=4) + 1j * rng.normal(size=4)
    m = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    h = SplitHamiltonian.from_matrix(m + m.conj().T)
    psi = PureState.normalized(a)
    out = propagate_unitary(psi, h, 2.5)
    assert np.linalg.norm(out.amplitudes) == pytest.approx(1.0, abs=1e-12)
    assert mean_energy(out, h) == pytest.approx(mean_energy(psi, h), abs=1e-12)


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        reduction_energy(PureState([1, 0, 0]), two_level())
    with pytest.raises(DimensionError):
        propagate_unitary(PureState([1, 0, 0]), two_level(), 1.0)


def test_params():
    assert CollapseParams(1.0, 0.0).tau0 == math.inf
    assert CollapseParams(1.0, 4.0).tau0 == 0.25
    for bad in [(0.0, 1.0), (-1.0, 1.0), (1.0, -0.1), (math.nan, 1.0)]:
        with pytest.raises(ValueError):
            CollapseParams(*bad)


def test_entropy_floor():
    assert shannon_entropy(np.array([1.0, 1e-17])) == 0.0
    assert shannon_entropy(np.array([0.5, 0.5])) == pytest.approx(math.log(2))

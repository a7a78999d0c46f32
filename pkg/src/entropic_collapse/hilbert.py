"""Finite-dimensional state types, the H = H0 + H1 split, and reduction functionals.

Natural units throughout: hbar = 1, entropies in nats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np

NORM_TOL = 1e-10
HERMITIAN_TOL = 1e-12
WEIGHT_FLOOR = 1e-15


class NormalizationError(ValueError):
    pass


class DimensionError(ValueError):
    pass


class HermiticityError(ValueError):
    def __init__(self, asymmetry: float):
        super().__init__(f"matrix is not Hermitian (max |A - A^H| = {asymmetry:.3e})")
        self.asymmetry = asymmetry


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def max_asymmetry(a: np.ndarray) -> float:
    return float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0


@dataclass(frozen=True)
class PreferredBasis:
    dim: int
    labels: tuple = ()

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise DimensionError(f"basis dimension must be a positive integer, got {self.dim}")
        labels = tuple(str(s) for s in self.labels) or tuple(str(i) for i in range(self.dim))
        if len(labels) != self.dim:
            raise DimensionError(f"{len(labels)} labels for a {self.dim}-dimensional basis")
        if len(set(labels)) != len(labels):
            raise ValueError("basis labels must be distinct")
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "labels", labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)


@dataclass(frozen=True, eq=False)
class SplitHamiltonian:
    """H = diag(e0) + h1 written in the preferred basis.

    ``e0`` holds the H0 eigenvalues (H0 is diagonal in the preferred basis by
    definition); ``h1`` is the Hermitian remainder. The eigendecomposition of
    the full H is computed once and reused by every propagator.
    """

    basis: PreferredBasis
    e0: np.ndarray
    h1: np.ndarray

    def __post_init__(self):
        e0 = np.asarray(self.e0, dtype=float).reshape(-1)
        h1 = np.asarray(self.h1, dtype=complex)
        d = self.basis.dim
        if e0.shape != (d,) or h1.shape != (d, d):
            raise DimensionError(f"e0 {e0.shape} / h1 {h1.shape} do not match basis dim {d}")
        if not (np.all(np.isfinite(e0)) and np.all(np.isfinite(h1))):
            raise ValueError("Hamiltonian entries must be finite")
        asym = max_asymmetry(h1)
        scale = float(np.max(np.abs(h1))) if h1.size else 0.0
        if asym > HERMITIAN_TOL * scale:
            raise HermiticityError(asym)
        object.__setattr__(self, "e0", _frozen(e0))
        object.__setattr__(self, "h1", _frozen(0.5 * (h1 + h1.conj().T)))
        object.__setattr__(self, "_propagators", {})

    @classmethod
    def from_matrix(cls, h: np.ndarray, labels: Sequence[str] = ()) -> "SplitHamiltonian":
        """Split a full Hamiltonian: its diagonal becomes H0, the rest H1."""
        h = np.asarray(h, dtype=complex)
        e0 = np.real(np.diag(h)).copy()
        h1 = h - np.diag(np.diag(h))
        return cls(PreferredBasis(h.shape[0], tuple(labels)), e0, h1)

    @property
    def dim(self) -> int:
        return self.basis.dim

    @cached_property
    def full(self) -> np.ndarray:
        return _frozen(np.diag(self.e0).astype(complex) + self.h1)

    @cached_property
    def diagonal(self) -> np.ndarray:
        """<Phi_n|H|Phi_n>, i.e. e0 plus any diagonal of h1."""
        return _frozen(self.e0 + np.real(np.diag(self.h1)))

    @cached_property
    def eig(self) -> tuple:
        vals, vecs = np.linalg.eigh(self.full)
        return _frozen(vals), _frozen(vecs)

    @property
    def frequency_span(self) -> float:
        """Largest transition frequency of the full H."""
        vals = self.eig[0]
        return float(vals[-1] - vals[0])

    def propagator(self, dt: float) -> np.ndarray:
        """exp(-i H dt), cached per dt."""
        dt = float(dt)
        u = self._propagators.get(dt)
        if u is None:
            vals, vecs = self.eig
            u = _frozen((vecs * np.exp(-1j * vals * dt)) @ vecs.conj().T)
            self._propagators[dt] = u
        return u


@dataclass(frozen=True, eq=False)
class PureState:
    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if a.size == 0 or not np.all(np.isfinite(a)):
            raise ValueError("amplitudes must be a non-empty finite vector")
        norm2 = float(np.vdot(a, a).real)
        if abs(norm2 - 1.0) > NORM_TOL:
            raise NormalizationError(f"state norm^2 = {norm2!r}, expected 1")
        object.__setattr__(self, "amplitudes", _frozen(a))

    @classmethod
    def normalized(cls, amplitudes) -> "PureState":
        a = np.asarray(amplitudes, dtype=complex).reshape(-1)
        n = np.linalg.norm(a)
        if n == 0:
            raise NormalizationError("cannot normalize the zero vector")
        return cls(a / n)

    @classmethod
    def basis_state(cls, dim: int, index: int) -> "PureState":
        a = np.zeros(dim, dtype=complex)
        a[index] = 1.0
        return cls(a)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def density(self) -> "MixedState":
        a = self.amplitudes
        return MixedState(np.outer(a, a.conj()))


@dataclass(frozen=True, eq=False)
class MixedState:
    rho: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rho, dtype=complex)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise DimensionError(f"density matrix must be square, got {r.shape}")
        asym = max_asymmetry(r)
        if asym > HERMITIAN_TOL:
            raise HermiticityError(asym)
        r = 0.5 * (r + r.conj().T)
        tr = float(np.trace(r).real)
        if abs(tr - 1.0) > NORM_TOL:
            raise NormalizationError(f"trace(rho) = {tr!r}, expected 1")
        lo = float(np.linalg.eigvalsh(r)[0])
        if lo < -NORM_TOL:
            raise ValueError(f"density matrix has negative eigenvalue {lo:.3e}")
        object.__setattr__(self, "rho", _frozen(r))

    @classmethod
    def thermal(cls, h: SplitHamiltonian, temperature: float) -> "MixedState":
        """Canonical state exp(-H/T)/Z built from eigenstates of the full H."""
        vals, vecs = h.eig
        if temperature < 0:
            raise ValueError("temperature must be nonnegative")
        if temperature == 0:
            p = (vals <= vals[0] + 1e-12 * max(1.0, abs(vals[0]))).astype(float)
        else:
            p = np.exp(-(vals - vals[0]) / temperature)
        p /= p.sum()
        return cls((vecs * p) @ vecs.conj().T)

    @property
    def dim(self) -> int:
        return self.rho.shape[0]

    @property
    def purity(self) -> float:
        return float(np.real(np.vdot(self.rho, self.rho)))


State = Union[PureState, MixedState]


@dataclass(frozen=True)
class CollapseParams:
    """The two universal constants: energy scale t0 and Poisson rate gamma0."""

    t0: float
    gamma0: float

    def __post_init__(self):
        if not (math.isfinite(self.t0) and self.t0 > 0):
            raise ValueError(f"t0 must be positive and finite, got {self.t0}")
        if not (math.isfinite(self.gamma0) and self.gamma0 >= 0):
            raise ValueError(f"gamma0 must be nonnegative and finite, got {self.gamma0}")

    @property
    def tau0(self) -> float:
        return math.inf if self.gamma0 == 0 else 1.0 / self.gamma0


# -- functionals ------------------------------------------------------------

def shannon_entropy(weights: np.ndarray, axis: int = -1) -> np.ndarray:
    """-sum w ln w along ``axis`` with 0 ln 0 = 0 and weights < 1e-15 dropped."""
    w = np.asarray(weights, dtype=float)
    safe = np.where(w > WEIGHT_FLOOR, w, 1.0)
    return -np.sum(np.where(w > WEIGHT_FLOOR, w * np.log(safe), 0.0), axis=axis)


def von_neumann_entropy(rho: np.ndarray) -> float:
    return float(shannon_entropy(np.linalg.eigvalsh(np.asarray(rho))))


def born_weights(psi: PureState) -> np.ndarray:
    if not isinstance(psi, PureState):
        psi = PureState(psi)
    w = np.abs(psi.amplitudes) ** 2
    return w


def _diag_weights(state: State) -> np.ndarray:
    if isinstance(state, PureState):
        return born_weights(state)
    return np.clip(np.real(np.diag(state.rho)), 0.0, None)


def reduction_entropy(state: State, basis: PreferredBasis | None = None) -> float:
    """Entropy produced by projecting ``state`` onto the preferred basis."""
    if basis is not None and basis.dim != state.dim:
        raise DimensionError(f"state dim {state.dim} != basis dim {basis.dim}")
    s_f = float(shannon_entropy(_diag_weights(state)))
    if isinstance(state, PureState):
        return s_f
    return s_f - von_neumann_entropy(state.rho)


def mean_energy(state: State, h: SplitHamiltonian) -> float:
    if isinstance(state, PureState):
        a = state.amplitudes
        return float(np.vdot(a, h.full @ a).real)
    return float(np.real(np.sum(state.rho * h.full.T)))


def reduction_energy(state: State, h: SplitHamiltonian) -> float:
    """Energy change sum_n w_n H_nn - <H> caused by the projection."""
    if state.dim != h.dim:
        raise DimensionError(f"state dim {state.dim} != Hamiltonian dim {h.dim}")
    return float(_diag_weights(state) @ h.diagonal) - mean_energy(state, h)


def propagate_unitary(state: State, h: SplitHamiltonian, dt: float) -> State:
    if not math.isfinite(dt):
        raise ValueError(f"dt must be finite, got {dt}")
    if state.dim != h.dim:
        raise DimensionError(f"state dim {state.dim} != Hamiltonian dim {h.dim}")
    if dt == 0:
        return state
    u = h.propagator(dt)
    if isinstance(state, PureState):
        return PureState(u @ state.amplitudes)
    return MixedState(u @ state.rho @ u.conj().T)


# -- batched forms used by the engines ----------------------------------------

def batch_reduction(psis: np.ndarray, h: SplitHamiltonian) -> tuple:
    """Weights, entropy and energy change for a stack of state vectors (rows)."""
    w = np.abs(psis) ** 2
    ds = shannon_entropy(w, axis=1)
    hpsi = np.einsum("nk,jk->nj", psis, h.full)
    energy = np.einsum("ij,ij->i", psis.conj(), hpsi).real
    de = w @ h.diagonal - energy
    return w, ds, de

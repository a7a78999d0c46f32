"""Open two-level system that relaxes by emitting into photon modes.

Composite preferred basis {up, down} x {vac, w_1..w_n}. The emitter coupling
H2 = v2 (|0>|w_k><1|<vac| + h.c.) links the excited eigenstate |1> of the
two-level part to the ground eigenstate |0> plus one photon, with photon
energies centred on the resonance 2 v1. A collapse that finds a photon
counts as an emission; the photon leaves, so the next segment restarts from
the same system state with the field in vacuum.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ..collapse import EventLog, SegmentEngine, step_count
from ..hilbert import CollapseParams, PreferredBasis, SplitHamiltonian
from ..rng import check_seed, trajectory_rng

MAX_DIM = 4096


@dataclass(frozen=True)
class CyclicModel:
    v1: float
    v2: float
    n_photon_modes: int = 1
    bandwidth: float = 0.0

    def __post_init__(self):
        if not (self.v1 > 0 and self.v2 > 0):
            raise ValueError("couplings v1, v2 must be positive")
        if int(self.n_photon_modes) != self.n_photon_modes or self.n_photon_modes < 1:
            raise ValueError("n_photon_modes must be a positive integer")
        if self.bandwidth < 0:
            raise ValueError("bandwidth must be nonnegative")
        if self.n_photon_modes > 1 and self.bandwidth == 0:
            raise ValueError("several photon modes need a positive bandwidth")
        if self.dim > MAX_DIM:
            raise OverflowError(f"composite dimension {self.dim} exceeds {MAX_DIM}")

    @property
    def n_field(self) -> int:
        return self.n_photon_modes + 1

    @property
    def dim(self) -> int:
        return 2 * (self.n_photon_modes + 1)

    def index(self, sigma: int, mode: int) -> int:
        """sigma 0=up, 1=down; mode 0 = vacuum, k >= 1 = one photon in mode k."""
        return sigma * self.n_field + mode

    @property
    def photon_energies(self) -> np.ndarray:
        n = self.n_photon_modes
        if n == 1:
            return np.array([2 * self.v1])
        return 2 * self.v1 + self.bandwidth * ((np.arange(n) + 0.5) / n - 0.5)

    @property
    def tau(self) -> float:
        """Emission time of the excited level.

        Golden rule 1/(2 pi v2^2 n/B) for a band; the half Rabi period
        pi/(2 v2) for a single resonant mode.
        """
        if self.n_photon_modes == 1:
            return math.pi / (2 * self.v2)
        return self.bandwidth / (2 * math.pi * self.v2**2 * self.n_photon_modes)

    @property
    def photon_mask(self) -> np.ndarray:
        m = np.ones(self.dim, dtype=bool)
        m[[self.index(0, 0), self.index(1, 0)]] = False
        return m

    @property
    def restart_map(self) -> np.ndarray:
        """Basis index -> same system state with the field in vacuum."""
        return np.array([self.index(i // self.n_field, 0) for i in range(self.dim)])

    @property
    def hamiltonian(self) -> SplitHamiltonian:
        nf = self.n_field
        labels = [f"{s},{f}" for s in ("up", "down")
                  for f in ["vac"] + [f"w{k}" for k in range(1, nf)]]
        e0 = np.zeros(self.dim)
        for s in (0, 1):
            e0[s * nf + 1:(s + 1) * nf] = self.photon_energies
        sx = np.array([[0, 1], [1, 0]], dtype=complex)
        h1 = np.kron(-self.v1 * sx, np.eye(nf))
        lower = 0.5 * np.array([[1, -1], [1, -1]], dtype=complex)  # |0><1| in (up, down)
        emit = np.zeros((nf, nf), dtype=complex)
        emit[1:, 0] = 1.0  # |w_k><vac|
        h2 = self.v2 * np.kron(lower, emit)
        return SplitHamiltonian(PreferredBasis(self.dim, tuple(labels)), e0, h1 + h2 + h2.conj().T)

    def initial(self, sigma: int = 0) -> np.ndarray:
        a = np.zeros(self.dim, dtype=complex)
        a[self.index(sigma, 0)] = 1.0
        return a


@dataclass(frozen=True, eq=False)
class CyclicRun:
    t_end: float
    log: EventLog
    emission_times: np.ndarray
    gated_time: float

    @property
    def n_collapses(self) -> int:
        return len(self.log)

    @property
    def n_emissions(self) -> int:
        return len(self.emission_times)

    @property
    def cycle_period(self) -> float:
        """Mean time between successive collapses."""
        return self.t_end / self.n_collapses if self.n_collapses else math.inf

    @property
    def emission_interval(self) -> float:
        return self.t_end / self.n_emissions if self.n_emissions else math.inf


def check_timescales(model: CyclicModel, params: CollapseParams, factor: float = 10.0) -> bool:
    ok = model.tau * factor <= params.tau0
    if not ok:
        warnings.warn(f"emission time {model.tau:.3g} is not small against tau0 = {params.tau0:.3g}",
                      RuntimeWarning, stacklevel=2)
    return ok


def run_cyclic(model: CyclicModel, params: CollapseParams, t_end: float, seed: int,
               dt: float | None = None, sigma: int = 0, stream: int = 0,
               engine: SegmentEngine | None = None) -> CyclicRun:
    """One long trajectory; emission times are collapses that found a photon."""
    check_timescales(model, params)
    h = model.hamiltonian
    if dt is None:
        dt = 0.01 / max(h.frequency_span, params.gamma0)
    engine = engine or SegmentEngine(h, params, dt, restart=model.restart_map)
    rng = trajectory_rng(check_seed(seed), stream)
    _, log, gated, _ = engine.run(model.initial(sigma), step_count(t_end, dt), rng)
    emitted = model.photon_mask[log.selected]
    return CyclicRun(float(t_end), log, log.times[emitted], gated * dt)


def emission_oracle(model: CyclicModel, params: CollapseParams) -> dict:
    """Ungated Markov-chain prediction for collapse and emission statistics.

    From |sigma, vac> the wait to the next collapse is Exp(gamma0); the
    outcome law is the Laplace average gamma0 int e^{-gamma0 s} |<j|U(s)|sigma,vac>|^2 ds,
    evaluated in the eigenbasis. The resulting two-state chain on sigma gives
    the stationary emission probability per collapse.
    """
    h = model.hamiltonian
    vals, vecs = h.eig
    g = params.gamma0
    lap = g / (g + 1j * (vals[:, None] - vals[None, :]))
    mask = model.photon_mask
    trans = np.zeros((2, 2))
    p_emit = np.zeros(2)
    for s in (0, 1):
        c = vecs[model.index(s, 0)].conj()
        amp = vecs * c  # amp[j, a] = V_ja c_a
        w = np.real(np.einsum("ja,ab,jb->j", amp, lap, amp.conj()))
        w = np.clip(w, 0.0, None)
        w /= w.sum()
        p_emit[s] = w[mask].sum()
        for i, p in enumerate(w):
            trans[s, i // model.n_field] += p
    evals, evecs = np.linalg.eig(trans.T)
    pi = np.real(evecs[:, np.argmin(abs(evals - 1))])
    pi /= pi.sum()
    p = float(pi @ p_emit)
    return {
        "emission_probability": p,
        "cycle_period": params.tau0,
        "emission_interval": params.tau0 / p if p > 0 else math.inf,
    }

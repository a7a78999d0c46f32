"""Isolated two-state system with H1 = -v1 (|u><d| + |d><u|)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..collapse import criterion_met
from ..hilbert import (
    CollapseParams,
    MixedState,
    PreferredBasis,
    PureState,
    SplitHamiltonian,
    reduction_energy,
    reduction_entropy,
)

UP, DOWN = 0, 1


@dataclass(frozen=True)
class TwoLevelModel:
    v1: float
    temperature: float = 0.0

    def __post_init__(self):
        if not self.v1 > 0:
            raise ValueError(f"v1 must be positive, got {self.v1}")
        if self.temperature < 0:
            raise ValueError("temperature must be nonnegative")

    @property
    def omega0(self) -> float:
        """Oscillation frequency of w = rho_uu - rho_dd: the level splitting 2 v1."""
        return 2.0 * self.v1

    @property
    def hamiltonian(self) -> SplitHamiltonian:
        h1 = -self.v1 * np.array([[0, 1], [1, 0]], dtype=complex)
        return SplitHamiltonian(PreferredBasis(2, ("up", "down")), np.zeros(2), h1)

    @property
    def ground(self) -> PureState:
        return PureState(np.array([1, 1], dtype=complex) / math.sqrt(2))

    @property
    def excited(self) -> PureState:
        return PureState(np.array([1, -1], dtype=complex) / math.sqrt(2))

    def canonical(self, temperature: float | None = None) -> MixedState:
        t = self.temperature if temperature is None else temperature
        return MixedState.thermal(self.hamiltonian, t)


def canonical_reduction(v1: float, temperature: float) -> tuple:
    """Closed-form (dS, dE) for the canonical two-level state, x = v1/T.

    dE = v1 tanh x,  dS = ln 2 - H2((1 + tanh x)/2)  with H2 the binary entropy.
    """
    x = math.inf if temperature == 0 else v1 / temperature
    th = math.tanh(x)
    p = 0.5 * (1 + th)
    q = 0.5 * (1 - th)
    h2 = -sum(a * math.log(a) for a in (p, q) if a > 0)
    return math.log(2) - h2, v1 * th


def instability_condition(model: TwoLevelModel, params: CollapseParams) -> bool:
    """Criterion evaluated on the canonical state at the model temperature."""
    return criterion_met(model.canonical(), model.hamiltonian, params)


def instability_boundary(model: TwoLevelModel, rtol: float = 1e-12) -> float:
    """Smallest T0 for which the canonical state is unstable, by bisection."""
    rho = model.canonical()
    h = model.hamiltonian
    ds = reduction_entropy(rho)
    de = reduction_energy(rho, h)
    if de <= 0:
        return 0.0
    if ds <= 0:
        return math.inf

    def met(t0):
        return criterion_met(rho, h, CollapseParams(t0, 1.0))

    lo, hi = model.v1 * 1e-6, model.v1
    while met(lo):
        lo *= 1e-3
    while not met(hi):
        hi *= 2.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if met(mid):
            hi = mid
        else:
            lo = mid
    return hi


def telegraph_switch_rate(v1: float, gamma0: float) -> float:
    """Rate of up<->down changes for basis-state restarts and Exp(gamma0) waits.

    A collapse after waiting s flips the state with probability sin^2(v1 s);
    averaging over s gives 2 v1^2 gamma0 / (gamma0^2 + 4 v1^2) per unit time,
    i.e. omega0^2 tau0 / 2 with omega0 = 2 v1 when omega0 tau0 << 1.
    """
    return 2 * v1**2 * gamma0 / (gamma0**2 + 4 * v1**2)


def observer_window(omega0: float, tau0: float) -> float:
    """Default coarse-graining interval between tau0 and 1/omega0: sqrt(tau0 / omega0)."""
    if not (omega0 > 0 and tau0 > 0 and math.isfinite(tau0)):
        raise ValueError("omega0 and tau0 must be positive and finite")
    return math.sqrt(tau0 / omega0)


def coarse_grain(times, values, window: float) -> np.ndarray:
    """Trailing average of ``values`` over ``window`` (samples on a uniform grid)."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(t) < 2:
        return v.copy()
    k = max(1, int(round(window / (t[1] - t[0]))))
    c = np.concatenate(([0.0], np.cumsum(v)))
    idx = np.arange(1, len(v) + 1)
    lo = np.maximum(0, idx - k)
    return (c[idx] - c[lo]) / (idx - lo)


@dataclass(frozen=True)
class SwitchingTime:
    omega0: float
    mean: float  # t_end * n_traj / total switches
    stderr: float
    n_switches: int
    oracle: float


def measure_switching_time(v1: float, gamma0: float, t_end: float, n_traj: int,
                           seed: int, t0: float = 10.0, dt: float | None = None,
                           threads: int = 1) -> SwitchingTime:
    """Mean dwell time between up/down changes, starting from |up>."""
    from ..ensemble import EnsembleSpec, MatrixScenario, run_ensemble

    m = TwoLevelModel(v1)
    p = CollapseParams(t0, gamma0)
    dt = dt if dt is not None else 0.01 / max(m.omega0, gamma0)
    sc = MatrixScenario(m.hamiltonian, p, PureState.basis_state(2, UP), t_end, dt, n_samples=2)
    st = run_ensemble(sc, EnsembleSpec(n_traj, seed, ("switches",)), threads)
    n = st.final("switches") * st.count
    # switches are close to Poisson, so the count's relative error is 1/sqrt(n)
    mean = st.t_end * st.count / n if n > 0 else math.inf
    err = mean / math.sqrt(n) if n > 0 else math.inf
    return SwitchingTime(m.omega0, mean, err, int(round(n)), 1 / telegraph_switch_rate(v1, gamma0))

"""Unstable level coupled to a flat quasi-continuum.

The level |e> (index 0, energy 0) couples with uniform strength v to n_band
levels spread evenly over [-B/2, B/2]. A trajectory halts at the first
collapse onto a band state, so the ensemble survival P(t) is the fraction
of trajectories still in |e> at t.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ..density import build_rates
from ..ensemble import EnsembleSpec, MatrixScenario, run_ensemble
from ..hilbert import CollapseParams, PreferredBasis, PureState, SplitHamiltonian


class RecurrenceError(ValueError):
    pass


@dataclass(frozen=True)
class DecayModel:
    n_band: int
    bandwidth: float
    coupling: float

    def __post_init__(self):
        if int(self.n_band) != self.n_band or self.n_band < 10:
            raise ValueError(f"n_band must be an integer >= 10, got {self.n_band}")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.coupling < 0:
            raise ValueError("coupling must be nonnegative")
        if self.coupling > 0.1 * self.bandwidth:
            raise ValueError("coupling must be small against the bandwidth")

    @property
    def dim(self) -> int:
        return self.n_band + 1

    @property
    def band_energies(self) -> np.ndarray:
        n = self.n_band
        return self.bandwidth * ((np.arange(n) + 0.5) / n - 0.5)

    @property
    def density_of_states(self) -> float:
        return self.n_band / self.bandwidth

    @property
    def recurrence_time(self) -> float:
        """2 pi / level spacing."""
        return 2 * math.pi * self.density_of_states

    @property
    def tau(self) -> float:
        """Flat-band golden rule 1 / (2 pi v^2 rho)."""
        rate = 2 * math.pi * self.coupling**2 * self.density_of_states
        return math.inf if rate == 0 else 1.0 / rate

    def golden_rule_tau(self, params: CollapseParams) -> float:
        """Lifetime from the Lorentzian-broadened rates out of |e>."""
        rate = build_rates(self.hamiltonian, params).total_rate_out(0)
        return math.inf if rate == 0 else 1.0 / rate

    @property
    def hamiltonian(self) -> SplitHamiltonian:
        d = self.dim
        e0 = np.concatenate(([0.0], self.band_energies))
        h1 = np.zeros((d, d), dtype=complex)
        h1[0, 1:] = h1[1:, 0] = self.coupling
        labels = ("e",) + tuple(f"b{k}" for k in range(self.n_band))
        return SplitHamiltonian(PreferredBasis(d, labels), e0, h1)

    def scenario(self, params: CollapseParams, t_end: float, dt: float | None = None,
                 n_samples: int = 61) -> MatrixScenario:
        h = self.hamiltonian
        if dt is None:
            dt = 0.01 / max(h.frequency_span, params.gamma0)
        return MatrixScenario(h, params, PureState.basis_state(self.dim, 0), t_end, dt,
                              n_samples=n_samples, halt_on_exit=True)


@dataclass(frozen=True, eq=False)
class ExponentialFit:
    tau: float
    intercept: float
    r2: float


def fit_log_linear(times, survival, t_max: float | None = None) -> ExponentialFit:
    """Least squares of ln P on t over samples with P > 0 (and t <= t_max)."""
    t = np.asarray(times, dtype=float)
    p = np.asarray(survival, dtype=float)
    keep = p > 0
    if t_max is not None:
        keep &= t <= t_max * (1 + 1e-12)
    t, y = t[keep], np.log(p[keep])
    if len(t) < 3:
        raise ValueError("too few positive survival samples to fit")
    slope, icpt = np.polyfit(t, y, 1)
    resid = y - (slope * t + icpt)
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / sst if sst > 0 else 1.0
    tau = math.inf if slope >= 0 else -1.0 / slope
    return ExponentialFit(tau, float(icpt), r2)


@dataclass(frozen=True, eq=False)
class DecayResult:
    times: np.ndarray
    survival: np.ndarray
    stderr: np.ndarray
    fit: ExponentialFit
    tau_mle: float
    tau_mle_err: float
    tau_oracle: float
    tau_flat: float
    n_traj: int
    n_decayed: int
    tail_start: float = 0.0


def _exit_time(log) -> float:
    out = np.flatnonzero(log.selected != 0)
    return float(log.times[out[0]]) if len(out) else math.inf


def check_recurrence(model: DecayModel, t_end: float):
    if t_end >= model.recurrence_time:
        raise RecurrenceError(
            f"t_end = {t_end:.4g} reaches the band recurrence time {model.recurrence_time:.4g}; "
            "increase n_band at fixed bandwidth")


def analyse_decay(model: DecayModel, params: CollapseParams, stats) -> DecayResult:
    """Fits on an ensemble run with ``survival`` observed and logs kept."""
    tau_or = model.golden_rule_tau(params)
    t_end = stats.t_end
    surv = stats.mean["survival"]
    # exits are only registered at collapses, which delays the curve by about
    # tau0; the censored MLE is therefore taken on the tail t > 3 tau0
    t_a = min(3 * params.tau0, 0.5 * t_end) if params.gamma0 > 0 else 0.0
    exits = np.array([_exit_time(log) for _, log in stats.logs])
    tail = exits > t_a
    k = int(np.sum(tail & np.isfinite(exits)))
    exposure = float(np.sum(np.minimum(exits[tail], t_end) - t_a))
    tau_mle = exposure / k if k else math.inf
    if np.all(surv == 1.0):
        fit = ExponentialFit(math.inf, 0.0, 1.0)
    else:
        fit = fit_log_linear(stats.times, surv, min(t_end, 3 * tau_or))
    return DecayResult(stats.times, surv, stats.stderr("survival"), fit, tau_mle,
                       tau_mle / math.sqrt(k) if k else math.inf, tau_or, model.tau,
                       stats.count, int(np.isfinite(exits).sum()), t_a)


def run_decay(model: DecayModel, params: CollapseParams, ensemble_n: int, seed: int,
              t_end: float | None = None, dt: float | None = None, n_samples: int = 61,
              threads: int = 1) -> DecayResult:
    """Survival of |e> over an ensemble, fitted on [0, 3 tau_oracle]."""
    tau_or = model.golden_rule_tau(params)
    if t_end is None:
        t_end = 3 * tau_or if math.isfinite(tau_or) else 10 * params.tau0
    check_recurrence(model, t_end)
    if params.gamma0 > 0 and tau_or < 5 * params.tau0:
        warnings.warn("lifetime is not long against tau0; expect deviations from the golden rule",
                      RuntimeWarning, stacklevel=2)
    sc = model.scenario(params, t_end, dt, n_samples)
    st = run_ensemble(sc, EnsembleSpec(ensemble_n, seed, ("survival",), keep_logs=True), threads)
    return analyse_decay(model, params, st)

"""Named comparisons between the simulators and closed-form results."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .density import (
    build_rates,
    damped_oscillator,
    delrho_iterate,
    integrate_eqofmo,
    integrate_master,
    lorentzian_delta,
    two_level_observables,
    vanhove_kernel,
)
from .hilbert import CollapseParams, MixedState, PreferredBasis, PureState, SplitHamiltonian
from .models.bounds import ExperimentRecord, bounds_report
from .models.two_level import TwoLevelModel, instability_boundary
from .models.wavepacket import NEUTRON_MASS, WavepacketModel, free_width, run_wavepacket


@dataclass(frozen=True)
class OracleResult:
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    tolerance: str = ""

    def line(self) -> str:
        vals = ", ".join(f"{k}={v:.3e}" if isinstance(v, float) else f"{k}={v}"
                         for k, v in self.metrics.items())
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {vals} ({self.tolerance})"


def two_level_damped(v1=1.0, gamma0=0.2, t_end=20.0, dt=1e-3) -> OracleResult:
    m = TwoLevelModel(v1)
    ser = integrate_eqofmo(PureState.basis_state(2, 0).density(), m.hamiltonian,
                           CollapseParams(2.0, gamma0), t_end, dt)
    obs = two_level_observables(ser)
    res = obs.oscillator_residual(gamma0, m.omega0)
    err = float(np.max(np.abs(obs.w - damped_oscillator(obs.times, gamma0, m.omega0))))
    return OracleResult("two_level_damped", res < 1e-4 and err < 1e-6,
                        {"ode_residual": res, "max_abs_diff": err},
                        "residual < 1e-4, difference < 1e-6")


def criterion_limits() -> OracleResult:
    lo = instability_boundary(TwoLevelModel(1.0, 1e-3))
    hi = instability_boundary(TwoLevelModel(1.0, 100.0))
    e1 = abs(lo * math.log(2) - 1.0)
    e2 = abs(hi / 100.0 - 2.0) / 2.0
    return OracleResult("criterion_limits", e1 < 1e-3 and e2 < 0.02,
                        {"low_T_rel_err": e1, "high_T_rel_err": e2},
                        "T0 ln2 = v1 within 0.1%, T0 = 2T within 2%")


def random_split(dim: int, scale: float, seed: int, spacing: float | None = None):
    rng = np.random.default_rng(seed)
    e0 = np.arange(dim) * spacing if spacing is not None else np.sort(rng.uniform(0, 3, dim))
    h1 = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h1 = h1 + h1.conj().T
    np.fill_diagonal(h1, 0)
    h1 *= scale / np.max(np.abs(h1))
    return SplitHamiltonian(PreferredBasis(dim), e0, h1)


def master_equation(seed: int = 3) -> OracleResult:
    h = random_split(6, 1e-2, seed)
    params = CollapseParams(1.0, 1.0)
    rho0 = MixedState(np.diag([1.0, 0, 0, 0, 0, 0]).astype(complex))
    ser = integrate_eqofmo(rho0, h, params, 50.0, 0.01, sample_every=50)
    sel = ser.times >= 5.0 - 1e-9
    ms = integrate_master(np.real(np.diag(rho0.rho)), build_rates(h, params), ser.times[sel])
    err = float(np.max(np.abs(ser.populations[sel] - ms.populations)))
    return OracleResult("master_equation", err < 0.05, {"max_abs_diff": err},
                        "5% absolute on [5, 50] tau0")


def delrho(seed: int = 5, n_states: int = 20) -> OracleResult:
    h = random_split(4, 1e-2, seed, spacing=1.0)
    params = CollapseParams(1.0, 1.0)
    rng = np.random.default_rng(seed + 1)
    worst = 0.0
    for _ in range(n_states):
        p = rng.dirichlet(np.ones(4))
        rho0 = MixedState(np.diag(p).astype(complex))
        ser = integrate_eqofmo(rho0, h, params, 0.1, 1e-4)
        num = ser.populations[-1] - p
        worst = max(worst, float(np.max(np.abs(num - delrho_iterate(rho0, h, params, 0.1)))))
    return OracleResult("delrho", worst < 1e-5, {"max_abs_diff": worst}, "1e-5")


TEST_FUNCTIONS = {
    "gauss": lambda w: np.exp(-w**2),
    "lorentz": lambda w: 1.0 / (1.0 + w**2),
    "shifted_gauss": lambda w: np.exp(-(w - 0.3) ** 2),
    "cos_gauss": lambda w: np.cos(w) * np.exp(-w**2 / 2),
    "sech": lambda w: 1.0 / np.cosh(w),
}


def smeared(f, kernel, half: float = 60.0, n: int = 2_400_001) -> float:
    w = np.linspace(-half, half, n)
    return float(integrate.simpson(f(w) * kernel(w), x=w))


def lorentzian_vanhove(gamma0: float = 0.01) -> OracleResult:
    norm, _ = integrate.quad(lorentzian_delta, -np.inf, np.inf, args=(gamma0,),
                             epsabs=1e-13, epsrel=1e-13, limit=500)
    t = 1.0 / gamma0
    worst = 0.0
    for f in TEST_FUNCTIONS.values():
        a = smeared(f, lambda w: lorentzian_delta(w, gamma0))
        b = smeared(f, lambda w: vanhove_kernel(w, t) / math.pi)
        worst = max(worst, abs(a - b) / abs(a))
    ne = abs(norm - 1.0)
    return OracleResult("lorentzian_vanhove", ne < 1e-8 and worst < 0.01,
                        {"norm_err": ne, "max_rel_diff": worst},
                        "norm 1e-8, kernels within 1%")


def free_packet(sigma0: float = 2.0, t_end: float = 5.0) -> OracleResult:
    m = WavepacketModel(1.0, 1024, 0.25, 1.0)
    paths = run_wavepacket(m, CollapseParams(2 * math.pi, 0.0), t_end, 0, sigma0=sigma0,
                           dt=0.01, n_samples=51)
    ref = free_width(sigma0, paths.times)
    err = float(np.max(np.abs(paths.width[0] ** 2 / ref**2 - 1)))
    return OracleResult("free_packet", err < 1e-4, {"max_rel_diff": err}, "1e-4")


def bounds_neutron() -> OracleResult:
    t = bounds_report([ExperimentRecord("neutron", NEUTRON_MASS, 2.43e-8, "upper", 7e-26),
                       ExperimentRecord("nanogram", 1e-12, 1e-6, "lower", 1e-49)])
    n, g = t.rows
    ok = float(f"{n.t0_J:.3g}") == 7.07e-26 and g.discrepancy and 6.5e-44 < g.t0_J < 7.5e-44
    return OracleResult("bounds_neutron", ok, {"neutron_t0_J": n.t0_J, "nanogram_t0_J": g.t0_J},
                        "7.07e-26 J; nanogram ~7e-44 J flagged")


ORACLES = {
    "two_level_damped": two_level_damped,
    "criterion_limits": criterion_limits,
    "master_equation": master_equation,
    "delrho": delrho,
    "lorentzian_vanhove": lorentzian_vanhove,
    "free_packet": free_packet,
    "bounds_neutron": bounds_neutron,
}

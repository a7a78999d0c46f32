"""Deterministic counterparts of the collapse dynamics.

The effective density-matrix equation

    d rho/dt = -i [H, rho] - gamma0 (rho - sum_n P_n rho P_n)

its second-order iterate for the diagonal, the Pauli master equation with
Lorentzian-broadened rates, and the gamma0 -> 0 (Van Hove) kernel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .hilbert import (
    CollapseParams,
    DimensionError,
    MixedState,
    SplitHamiltonian,
    shannon_entropy,
)

MAX_STEP_PHASE = 0.05
TRACE_TOL = 1e-8
POSITIVITY_TOL = 1e-8


class StepSizeError(ValueError):
    pass


class PositivityError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DensitySeries:
    times: np.ndarray
    rhos: np.ndarray  # (n_times, d, d)

    def __len__(self):
        return len(self.times)

    @property
    def dim(self) -> int:
        return self.rhos.shape[1]

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.einsum("tii->ti", self.rhos))

    def component(self, i: int, j: int) -> np.ndarray:
        return self.rhos[:, i, j]

    @property
    def traces(self) -> np.ndarray:
        return np.real(np.einsum("tii->t", self.rhos))

    @property
    def purities(self) -> np.ndarray:
        return np.real(np.einsum("tij,tji->t", self.rhos, self.rhos))


def _dephase(rho: np.ndarray) -> np.ndarray:
    return rho - np.diag(np.diag(rho))


def _rho_criterion(rho: np.ndarray, h: SplitHamiltonian, t0: float) -> bool:
    w = np.clip(np.real(np.diag(rho)), 0.0, None)
    ds = float(shannon_entropy(w)) - float(shannon_entropy(np.linalg.eigvalsh(rho)))
    de = float(w @ h.diagonal) - float(np.real(np.sum(rho * h.full.T)))
    return ds > de / t0


def integrate_eqofmo(rho0: MixedState, h: SplitHamiltonian, params: CollapseParams,
                     t_end: float, dt: float, sample_every: int = 1,
                     gated: bool = False) -> DensitySeries:
    """Fixed-step RK4 integration of the dephasing equation.

    With ``gated=True`` the dephasing term is switched off on steps where the
    criterion fails for the current rho.
    """
    if rho0.dim != h.dim:
        raise DimensionError(f"rho dim {rho0.dim} != Hamiltonian dim {h.dim}")
    if not (dt > 0 and math.isfinite(dt)):
        raise StepSizeError(f"dt must be positive, got {dt}")
    fastest = max(h.frequency_span, params.gamma0)
    if dt * fastest > MAX_STEP_PHASE:
        raise StepSizeError(
            f"dt*max(omega_max, gamma0) = {dt * fastest:.3g} > {MAX_STEP_PHASE}; reduce dt")
    n = int(math.ceil(t_end / dt - 1e-9))
    hm = h.full
    g0 = params.gamma0

    def rhs(r, g):
        return -1j * (hm @ r - r @ hm) - g * _dephase(r)

    rho = np.array(rho0.rho, dtype=complex)
    every = max(1, int(sample_every))
    times, out = [0.0], [rho.copy()]
    if not gated:
        return _integrate_linear(rho, h, g0, dt, n, every)
    for k in range(1, n + 1):
        g = g0 if not gated or _rho_criterion(rho, h, params.t0) else 0.0
        k1 = rhs(rho, g)
        k2 = rhs(rho + 0.5 * dt * k1, g)
        k3 = rhs(rho + 0.5 * dt * k2, g)
        k4 = rhs(rho + dt * k3, g)
        rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
        if k % every == 0 or k == n:
            lo = float(np.linalg.eigvalsh(rho)[0])
            if lo < -POSITIVITY_TOL:
                raise PositivityError(f"rho lost positivity at t={k * dt:.6g} (min eig {lo:.3e})")
            times.append(k * dt)
            out.append(rho.copy())
    return DensitySeries(np.array(times), np.array(out))


def rk4_step_map(h: SplitHamiltonian, gamma0: float, dt: float) -> np.ndarray:
    """One RK4 step followed by Hermitian symmetrization, as a real matrix.

    For a linear autonomous equation an RK4 step is the degree-4 Taylor
    polynomial of L dt. Symmetrization is linear on (Re rho, Im rho), so the
    whole step acts on the stacked real vector.
    """
    d = h.dim
    ldt = liouvillian(h, gamma0) * dt
    step = np.eye(d * d, dtype=complex)
    term = np.eye(d * d, dtype=complex)
    for j in range(1, 5):
        term = term @ ldt / j
        step = step + term
    a, b = step.real, step.imag
    real = np.block([[a, -b], [b, a]])
    perm = np.arange(d * d).reshape(d, d).T.reshape(-1)
    tp = np.eye(d * d)[perm]
    eye = np.eye(d * d)
    sym = np.block([[0.5 * (eye + tp), np.zeros_like(eye)],
                    [np.zeros_like(eye), 0.5 * (eye - tp)]])
    return sym @ real


def _integrate_linear(rho, h, g0, dt, n, every) -> DensitySeries:
    d = h.dim
    m = rk4_step_map(h, g0, dt)
    v = np.concatenate([rho.real.reshape(-1), rho.imag.reshape(-1)])
    times, out = [0.0], [rho.copy()]
    block = np.linalg.matrix_power(m, every)
    k = 0
    while k < n:
        j = min(every, n - k)
        v = (block if j == every else np.linalg.matrix_power(m, j)) @ v
        k += j
        r = (v[: d * d] + 1j * v[d * d:]).reshape(d, d)
        lo = float(np.linalg.eigvalsh(r)[0])
        if lo < -POSITIVITY_TOL:
            raise PositivityError(f"rho lost positivity at t={k * dt:.6g} (min eig {lo:.3e})")
        times.append(k * dt)
        out.append(r)
    return DensitySeries(np.array(times), np.array(out))


def liouvillian(h: SplitHamiltonian, gamma0: float) -> np.ndarray:
    """Row-major vectorized generator of the dephasing equation."""
    d = h.dim
    eye = np.eye(d)
    hm = h.full
    gen = -1j * (np.kron(hm, eye) - np.kron(eye, hm.T))
    off = 1.0 - np.eye(d).reshape(-1)
    return gen - gamma0 * np.diag(off)


# -- two-level observables -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TwoLevelObservables:
    """w = rho_uu - rho_dd and d_pm = rho_ud +/- rho_du on a uniform time grid."""

    times: np.ndarray
    w: np.ndarray
    d_minus: np.ndarray
    d_plus: np.ndarray

    def oscillator_residual(self, gamma0: float, omega0: float) -> float:
        """max |w'' + gamma0 w' + omega0^2 w| / max |omega0^2 w| from central differences."""
        t, w = self.times, self.w
        h = np.diff(t)
        if not np.allclose(h, h[0], rtol=1e-9):
            raise ValueError("residual needs a uniform time grid")
        h = h[0]
        wdd = (w[2:] - 2 * w[1:-1] + w[:-2]) / h**2
        wd = (w[2:] - w[:-2]) / (2 * h)
        res = wdd + gamma0 * wd + omega0**2 * w[1:-1]
        return float(np.max(np.abs(res)) / np.max(np.abs(omega0**2 * w)))


def two_level_observables(series: DensitySeries) -> TwoLevelObservables:
    if series.dim != 2:
        raise DimensionError(f"two-level observables need dim 2, got {series.dim}")
    r = series.rhos
    return TwoLevelObservables(
        series.times,
        np.real(r[:, 0, 0] - r[:, 1, 1]),
        r[:, 0, 1] - r[:, 1, 0],
        r[:, 0, 1] + r[:, 1, 0],
    )


def damped_oscillator(t, gamma0: float, omega0: float):
    """Solution of w'' + g w' + w0^2 w = 0 with w(0)=1, w'(0)=0."""
    t = np.asarray(t, dtype=float)
    disc = omega0**2 - gamma0**2 / 4
    env = np.exp(-gamma0 * t / 2)
    if disc > 0:
        om = math.sqrt(disc)
        return env * (np.cos(om * t) + gamma0 / (2 * om) * np.sin(om * t))
    if disc < 0:
        k = math.sqrt(-disc)
        a = gamma0 / (2 * k)
        # cosh/sinh written as decaying exponentials to avoid overflow
        return 0.5 * ((1 + a) * np.exp((k - gamma0 / 2) * t)
                      + (1 - a) * np.exp(-(k + gamma0 / 2) * t))
    return env * (1 + gamma0 * t / 2)


# -- perturbative diagonal dynamics -------------------------------------------------

def _check_offdiagonal(h: SplitHamiltonian):
    diag = np.abs(np.diag(h.h1))
    if np.any(diag > 1e-14 * max(1.0, float(np.max(np.abs(h.h1))))):
        raise ValueError("H1 must have no diagonal elements in the preferred basis")


def delrho_iterate(rho0: MixedState | np.ndarray, h: SplitHamiltonian,
                   params: CollapseParams, interval: float) -> np.ndarray:
    """Second-order change of the diagonal of rho over ``interval``.

    The damping factors e^{-gamma0 t} are taken at t = interval.
    """
    _check_offdiagonal(h)
    rho = rho0.rho if isinstance(rho0, MixedState) else np.asarray(rho0, dtype=complex)
    if np.max(np.abs(_dephase(rho))) > 1e-12:
        raise ValueError("initial rho must be diagonal")
    p = np.real(np.diag(rho))
    g = params.gamma0
    dt = float(interval)
    om = h.e0[:, None] - h.e0[None, :]
    v2 = np.abs(h.h1) ** 2
    den = om**2 + g**2
    with np.errstate(divide="ignore", invalid="ignore"):
        decay = math.exp(-g * dt)
        bracket = (g * dt
                   + (om**2 - g**2) / den * (1 - decay * np.cos(om * dt))
                   - 2 * g * om / den * decay * np.sin(om * dt))
        coef = 2.0 * v2 / den * bracket
    # om = g = 0: limit of the bracket/den is dt^2 / 2 per unit |H1|^2
    degenerate = den == 0
    coef = np.where(degenerate, v2 * dt**2, coef)
    np.fill_diagonal(coef, 0.0)
    return coef @ p - coef.sum(axis=1) * p


def lorentzian_delta(omega, gamma0: float):
    if not gamma0 > 0:
        raise ValueError(f"gamma0 must be positive, got {gamma0}")
    omega = np.asarray(omega, dtype=float)
    return gamma0 / (math.pi * (omega**2 + gamma0**2))


def vanhove_kernel(omega, t: float):
    """(1 - cos wt) / (t w^2), equal to t/2 at w = 0; integrates to pi."""
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    omega = np.asarray(omega, dtype=float)
    half = 0.5 * omega * t
    with np.errstate(divide="ignore", invalid="ignore"):
        k = 2.0 * np.sin(half) ** 2 / (t * omega**2)
    return np.where(omega == 0, 0.5 * t, k)


@dataclass(frozen=True, eq=False)
class RateMatrix:
    """W[j, k]: transition rate k -> j."""

    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DimensionError("rate matrix must be square")
        if np.any(w < 0):
            raise ValueError("rates must be nonnegative")
        if np.any(np.diag(w) != 0):
            raise ValueError("rate matrix must have zero diagonal")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def generator(self) -> np.ndarray:
        return self.w - np.diag(self.w.sum(axis=0))

    def total_rate_out(self, k: int) -> float:
        return float(self.w[:, k].sum())


def build_rates(h: SplitHamiltonian, params: CollapseParams) -> RateMatrix:
    """W_jk = 2 pi |<j|H1|k>|^2 delta_gamma0(omega_jk)."""
    _check_offdiagonal(h)
    om = h.e0[:, None] - h.e0[None, :]
    w = 2 * math.pi * np.abs(h.h1) ** 2 * lorentzian_delta(om, params.gamma0)
    np.fill_diagonal(w, 0.0)
    return RateMatrix(w)


@dataclass(frozen=True, eq=False)
class MasterSeries:
    times: np.ndarray
    populations: np.ndarray  # (n_times, d)


def integrate_master(p0, rates: RateMatrix, times) -> MasterSeries:
    """Exact solution p(t) = exp(G t) p0 of the Pauli master equation."""
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != (rates.w.shape[0],):
        raise DimensionError("p0 does not match the rate matrix")
    if np.any(p0 < 0) or abs(p0.sum() - 1.0) > 1e-12:
        raise ValueError("p0 must be a probability vector")
    times = np.asarray(times, dtype=float)
    gen = rates.generator
    out = np.array([expm(gen * t) @ p0 for t in times]).reshape(len(times), -1)
    out = np.clip(out, 0.0, 1.0)
    out /= out.sum(axis=1, keepdims=True)
    return MasterSeries(times, out)

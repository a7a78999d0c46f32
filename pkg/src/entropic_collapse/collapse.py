"""Criterion-gated, Poisson-timed projection onto the preferred basis."""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .hilbert import (
    CollapseParams,
    PureState,
    SplitHamiltonian,
    State,
    DimensionError,
    shannon_entropy,
    born_weights,
    reduction_energy,
    reduction_entropy,
)
from .rng import check_seed, trajectory_rng


@dataclass(frozen=True, eq=False)
class CollapseEvent:
    time: float
    pre_weights: np.ndarray
    selected: int
    delta_s: float
    delta_e: float


@dataclass(frozen=True, eq=False)
class EventLog:
    """Columnar collapse log of one trajectory (steps are multiples of dt)."""

    dt: float
    steps: np.ndarray
    selected: np.ndarray
    delta_s: np.ndarray
    delta_e: np.ndarray
    pre_weights: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def times(self) -> np.ndarray:
        return self.steps * self.dt

    @classmethod
    def empty(cls, dt: float, dim: int | None = None) -> "EventLog":
        z = np.zeros(0, dtype=np.int64)
        pw = None if dim is None else np.zeros((0, dim))
        return cls(dt, z, z.copy(), np.zeros(0), np.zeros(0), pw)

    def events(self) -> list:
        pw = self.pre_weights
        return [
            CollapseEvent(float(self.steps[i] * self.dt),
                          None if pw is None else pw[i],
                          int(self.selected[i]), float(self.delta_s[i]), float(self.delta_e[i]))
            for i in range(len(self))
        ]

    def switch_mask(self, initial_index: int = -1) -> np.ndarray:
        """True where a collapse lands on a different state than the one occupied."""
        prev = np.concatenate(([initial_index], self.selected[:-1]))
        mask = self.selected != prev
        if initial_index < 0 and len(mask):
            mask[0] = False
        return mask


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    times: np.ndarray
    states: np.ndarray
    log: EventLog
    seed: int
    gated_time: float = 0.0
    halted: bool = False

    @property
    def events(self) -> list:
        return self.log.events()

    def state(self, i: int) -> PureState:
        return PureState.normalized(self.states[i])


# -- single-event operations -------------------------------------------------

def criterion_met(state: State, h: SplitHamiltonian, params: CollapseParams) -> bool:
    """Strict test of  dS > dE / T0."""
    return reduction_entropy(state) > reduction_energy(state, h) / params.t0


def sample_collapse_time(rng: np.random.Generator, params: CollapseParams) -> float:
    if params.gamma0 == 0:
        return math.inf
    return float(rng.exponential(params.tau0))


def _select(weights: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw of one index per row of ``weights``."""
    cw = np.cumsum(weights, axis=-1)
    total = cw[..., -1:]
    if np.any(total <= 0):
        raise RuntimeError("all-zero Born weights")
    idx = np.sum(cw < np.asarray(u)[..., None] * total, axis=-1)
    return np.minimum(idx, weights.shape[-1] - 1)


def project(state: PureState, rng: np.random.Generator,
            h: SplitHamiltonian | None = None, time: float = 0.0) -> tuple:
    """Born-rule projection onto one preferred-basis state.

    Entropy and energy bookkeeping refer to the pre-collapse state; without
    a Hamiltonian the energy change is reported as NaN.
    """
    w = born_weights(state)
    m = int(_select(w, rng.random()))
    de = reduction_energy(state, h) if h is not None else math.nan
    event = CollapseEvent(time, w, m, reduction_entropy(state), de)
    return PureState.basis_state(state.dim, m), event


# -- event-driven engine -------------------------------------------------------

class _Profile:
    """Gate/entropy/energy along U(k dt)|start>, grown in fixed-size chunks."""

    __slots__ = ("coeffs", "n", "cum", "ds", "de")

    def __init__(self, coeffs: np.ndarray, cap: int):
        self.coeffs = coeffs
        self.n = 0
        self.cum = np.zeros(cap, dtype=np.int64)
        self.ds = np.zeros(cap)
        self.de = np.zeros(cap)

    def _grow(self, need: int):
        cap = len(self.cum)
        if need <= cap:
            return
        new = max(need, 2 * cap)
        for name in ("cum", "ds", "de"):
            old = getattr(self, name)
            arr = np.zeros(new, dtype=old.dtype)
            arr[: self.n] = old[: self.n]
            setattr(self, name, arr)


_NEVER = np.iinfo(np.int64).max


class SegmentEngine:
    """Trajectory stepper for dynamics whose collapses land on basis states.

    After a collapse onto Phi_m the state until the next collapse is
    U(k dt) Phi_m, so the gate sequence of each start vector is computed once
    and shared. Collapse timing draws a geometric number of gated steps with
    success probability 1 - exp(-gamma0 dt); this is the per-step Bernoulli
    rule, sampled in one draw.

    ``restart`` maps the selected basis index to the basis index the next
    segment starts from (identity unless a model discards part of the state,
    e.g. an escaping photon).
    """

    CHUNK = 256
    MAX_BATCH = 4096

    def __init__(self, h: SplitHamiltonian, params: CollapseParams, dt: float,
                 restart: Sequence[int] | None = None):
        if not dt > 0 or not math.isfinite(dt):
            raise ValueError(f"dt must be positive, got {dt}")
        if params.gamma0 * dt > 0.1:
            raise ValueError(f"gamma0*dt = {params.gamma0 * dt:.3g} exceeds 0.1")
        self.h = h
        self.params = params
        self.dt = float(dt)
        self.p_step = -math.expm1(-params.gamma0 * dt)
        vals, vecs = h.eig
        self._vals = vals
        self._vecs = vecs
        self.restart = np.arange(h.dim) if restart is None else np.asarray(restart, dtype=np.int64)
        if self.restart.shape != (h.dim,):
            raise DimensionError("restart map must have one entry per basis state")
        self._profiles: dict = {}
        self._lock = threading.Lock()

    # profiles
    def _profile(self, key) -> _Profile:
        prof = self._profiles.get(key)
        if prof is None:
            if isinstance(key, tuple):
                raise KeyError(key)
            with self._lock:
                prof = self._profiles.setdefault(
                    int(key), _Profile(self._vecs[int(key)].conj().copy(), self.CHUNK))
        return prof

    def register(self, psi: np.ndarray) -> object:
        """Key for an arbitrary start vector (basis vectors map to their index)."""
        psi = np.asarray(psi, dtype=complex)
        nz = np.flatnonzero(psi)
        if len(nz) == 1 and abs(abs(psi[nz[0]]) - 1.0) < 1e-15 and psi[nz[0]] == abs(psi[nz[0]]):
            return int(nz[0])
        key = ("init", psi.tobytes())
        with self._lock:
            if key not in self._profiles:
                self._profiles[key] = _Profile(self._vecs.conj().T @ psi, self.CHUNK)
        return key

    def states(self, key, local_steps) -> np.ndarray:
        """Rows U(k dt)|start> for each k in ``local_steps``."""
        prof = self._profile(key)
        k = np.asarray(local_steps, dtype=float).reshape(-1)
        coeff = np.exp(-1j * np.outer(k * self.dt, self._vals)) * prof.coeffs
        return np.einsum("nk,jk->nj", coeff, self._vecs)

    def _chunk_reduction(self, coeffs: np.ndarray, ks: np.ndarray) -> tuple:
        # fixed chunk shape, so BLAS products are reproducible here
        phase = np.exp(-1j * np.outer(ks * self.dt, self._vals)) * coeffs
        psis = phase @ self._vecs.T
        w = np.abs(psis) ** 2
        energy = np.sum(np.abs(phase) ** 2 * self._vals, axis=1)
        return shannon_entropy(w, axis=1), w @ self.h.diagonal - energy

    def _extend(self, key, need_count: int, max_len: int) -> tuple:
        prof = self._profile(key)
        with self._lock:
            while prof.n == 0 or (prof.cum[prof.n - 1] < need_count and prof.n - 1 < max_len):
                k0 = prof.n
                ks = np.arange(k0, k0 + self.CHUNK)
                ds, de = self._chunk_reduction(prof.coeffs, ks)
                gate = ds > de / self.params.t0
                if k0 == 0:
                    gate[0] = False
                prof._grow(k0 + self.CHUNK)
                base = prof.cum[k0 - 1] if k0 else 0
                prof.cum[k0:k0 + self.CHUNK] = base + np.cumsum(gate)
                prof.ds[k0:k0 + self.CHUNK] = ds
                prof.de[k0:k0 + self.CHUNK] = de
                prof.n = k0 + self.CHUNK
            n = prof.n
            return prof.cum[:n], prof.ds[:n], prof.de[:n]

    def run(self, initial: np.ndarray, n_steps: int, rng: np.random.Generator,
            halt_on_exit: bool = False, record_weights: bool = False) -> tuple:
        """Simulate one trajectory over ``n_steps`` steps.

        Returns ``(init_key, log, gated_steps, halted)``.
        """
        init_key = self.register(initial)
        initial_index = init_key if isinstance(init_key, int) else -1
        steps, sel, dss, des, pws = [], [], [], [], []
        gated = 0
        halted = False
        key, start = init_key, 0
        batch = 1
        restart = self.restart
        while start < n_steps and self.p_step > 0:
            remaining = n_steps - start
            b = batch if isinstance(key, int) else 1
            js = rng.geometric(self.p_step, size=b)
            us = rng.random(b)
            cum, ds, de = self._extend(key, int(js.max()), remaining)
            ks = np.searchsorted(cum, js)
            reach = ks < len(cum)
            absolute = start + np.cumsum(np.where(reach, ks, n_steps + 1))
            ok = reach & (absolute <= n_steps)
            n_ok = b if ok.all() else int(np.argmin(ok))
            if n_ok:
                k_ok = ks[:n_ok]
                w = np.abs(self.states(key, k_ok)) ** 2
                chosen = _select(w, us[:n_ok])
                if isinstance(key, int):
                    moved = restart[chosen] != key
                else:  # any collapse leaves a superposition start
                    moved = np.ones(n_ok, dtype=bool)
                if halt_on_exit:
                    moved |= chosen != initial_index
                n_acc = int(np.argmax(moved)) + 1 if moved.any() else n_ok
                steps.append(absolute[:n_acc])
                sel.append(chosen[:n_acc])
                dss.append(ds[k_ok[:n_acc]])
                des.append(de[k_ok[:n_acc]])
                if record_weights:
                    pws.append(w[:n_acc] / w[:n_acc].sum(axis=1, keepdims=True))
                gated += int(js[:n_acc].sum())
                last = int(chosen[n_acc - 1])
                start = int(absolute[n_acc - 1])
                if halt_on_exit and last != initial_index:
                    halted = True
                    break
                if not isinstance(key, int) or restart[last] != key:
                    key = int(restart[last])
                    batch = max(1, batch // 2)
                    continue
                if n_ok == b:
                    batch = min(2 * batch, self.MAX_BATCH)
                    continue
            # next collapse falls beyond the horizon
            seg_len = n_steps - start
            gated += int(self._extend(key, _NEVER, seg_len)[0][seg_len])
            break
        if self.p_step == 0 and n_steps > 0:
            gated = int(self._extend(key, _NEVER, n_steps)[0][n_steps])
        cat = lambda xs, dt=np.int64: np.concatenate(xs) if xs else np.zeros(0, dtype=dt)
        log = EventLog(
            self.dt, cat(steps), cat(sel), cat(dss, float), cat(des, float),
            (np.concatenate(pws) if pws else np.zeros((0, self.h.dim))) if record_weights else None,
        )
        return init_key, log, gated, halted

    def segment_keys(self, init_key, log: EventLog) -> tuple:
        starts = np.concatenate(([0], log.steps)).astype(np.int64)
        keys = [init_key] + [int(k) for k in self.restart[log.selected]]
        return starts, keys

    def sample(self, init_key, log: EventLog, sample_steps: np.ndarray) -> np.ndarray:
        """State vectors at global step indices ``sample_steps`` (post-collapse)."""
        starts, keys = self.segment_keys(init_key, log)
        sample_steps = np.asarray(sample_steps, dtype=np.int64)
        seg = np.searchsorted(starts, sample_steps, side="right") - 1
        local = sample_steps - starts[seg]
        pos: dict = {}
        ids = np.array([pos.setdefault(k, len(pos)) for k in keys], dtype=np.int64)[seg]
        out = np.empty((len(sample_steps), self.h.dim), dtype=complex)
        for k, i in pos.items():
            mask = ids == i
            if mask.any():
                out[mask] = self.states(k, local[mask])
        return out


def step_count(t_end: float, dt: float) -> int:
    if not (dt > 0 and math.isfinite(dt)):
        raise ValueError(f"dt must be positive, got {dt}")
    if not (t_end >= 0 and math.isfinite(t_end)):
        raise ValueError(f"t_end must be nonnegative, got {t_end}")
    return int(math.ceil(t_end / dt - 1e-9))


def run_trajectory(initial: PureState, h: SplitHamiltonian, params: CollapseParams,
                   t_end: float, dt: float, seed: int, sample_every: int = 1,
                   engine: SegmentEngine | None = None) -> TrajectoryRecord:
    """Interleave unitary steps with gated collapse checks.

    The criterion is checked after every unitary step; while it holds a
    collapse fires with probability 1 - exp(-gamma0 dt). Deterministic in
    (seed, dt). The stream used is stream 0 of ``seed``.
    """
    if initial.dim != h.dim:
        raise DimensionError(f"state dim {initial.dim} != Hamiltonian dim {h.dim}")
    n = step_count(t_end, dt)
    engine = engine or SegmentEngine(h, params, dt)
    rng = trajectory_rng(check_seed(seed), 0)
    key, log, gated, halted = engine.run(initial.amplitudes, n, rng, record_weights=True)
    sample_steps = np.arange(0, n + 1, max(1, int(sample_every)))
    if sample_steps[-1] != n:
        sample_steps = np.append(sample_steps, n)
    states = engine.sample(key, log, sample_steps)
    return TrajectoryRecord(sample_steps * dt, states, log, int(seed), gated * dt, halted)

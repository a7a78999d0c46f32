"""Trajectory ensembles with per-trajectory seed streams and ordered merging.

Trajectories are cut into fixed blocks of ``checkpoint_stride`` indices.
Each block is reduced to (count, mean, M2) per observable and the blocks
are merged pairwise in index order, so the output does not depend on the
number of worker threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from .collapse import SegmentEngine, _select, step_count
from .hilbert import CollapseParams, DimensionError, MixedState, PureState, SplitHamiltonian
from .rng import check_seed, trajectory_rng

MATRIX_OBSERVABLES = ("populations", "coherences", "energy", "events", "switches",
                      "survival", "marked")


class EnsembleError(RuntimeError):
    def __init__(self, msg: str, completed: int):
        super().__init__(f"{msg} (completed trajectories: {completed})")
        self.completed = completed


@dataclass(frozen=True)
class EnsembleSpec:
    n_traj: int
    master_seed: int
    observables: tuple = ("populations",)
    checkpoint_stride: int = 256
    keep_logs: bool = False

    def __post_init__(self):
        if int(self.n_traj) != self.n_traj or self.n_traj < 1:
            raise ValueError(f"n_traj must be an integer >= 1, got {self.n_traj}")
        check_seed(self.master_seed)
        obs = tuple(self.observables)
        if not obs:
            raise ValueError("at least one observable is required")
        if len(set(obs)) != len(obs):
            raise ValueError("duplicate observables")
        object.__setattr__(self, "observables", obs)
        if int(self.checkpoint_stride) != self.checkpoint_stride or self.checkpoint_stride < 1:
            raise ValueError("checkpoint_stride must be a positive integer")

    def blocks(self) -> list:
        s = int(self.checkpoint_stride)
        return [range(a, min(a + s, self.n_traj)) for a in range(0, self.n_traj, s)]


# -- moments -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Moments:
    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, x: np.ndarray) -> "Moments":
        """Two-pass moments of samples stacked along axis 0."""
        x = np.asarray(x, dtype=float)
        mu = x.mean(axis=0)
        return cls(x.shape[0], mu, ((x - mu) ** 2).sum(axis=0))

    def merge(self, other: "Moments") -> "Moments":
        n = self.count + other.count
        d = other.mean - self.mean
        mean = self.mean + d * (other.count / n)
        m2 = self.m2 + other.m2 + d * d * (self.count * other.count / n)
        return Moments(n, mean, m2)

    @property
    def var(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.mean)
        return np.maximum(self.m2 / (self.count - 1), 0.0)


def tree_merge(items: Sequence, combine: Callable):
    """Pairwise reduction of ``items`` in fixed index order."""
    items = list(items)
    if not items:
        raise ValueError("nothing to merge")
    while len(items) > 1:
        nxt = [combine(items[i], items[i + 1]) for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


@dataclass(eq=False)
class BlockResult:
    moments: dict
    event_counts: np.ndarray  # collapses per histogram bin
    n_events: int
    gated_time: float
    logs: list = field(default_factory=list)

    def merge(self, other: "BlockResult") -> "BlockResult":
        return BlockResult(
            {k: self.moments[k].merge(other.moments[k]) for k in self.moments},
            self.event_counts + other.event_counts,
            self.n_events + other.n_events,
            self.gated_time + other.gated_time,
            self.logs + other.logs,
        )


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    times: np.ndarray
    names: tuple
    mean: dict
    var: dict
    count: int
    t_end: float
    n_events: int
    gated_time: float
    hist_edges: np.ndarray
    hist_rate: np.ndarray
    logs: tuple = ()
    dt: float = 0.0

    def stderr(self, name: str) -> np.ndarray:
        return np.sqrt(self.var[name] / self.count)

    @property
    def counts(self) -> np.ndarray:
        return np.full(len(self.times), self.count)

    @property
    def event_rate(self) -> float:
        """Collapses per trajectory per unit time."""
        return self.n_events / (self.count * self.t_end) if self.t_end > 0 else 0.0

    @property
    def gated_rate(self) -> float:
        """MLE of gamma0 from collapses per gated step, -ln(1 - n/steps) / dt."""
        if self.gated_time <= 0:
            return math.nan
        if self.dt <= 0:
            return self.n_events / self.gated_time
        frac = self.n_events * self.dt / self.gated_time
        return -math.log1p(-frac) / self.dt if frac < 1 else math.inf

    def rows(self) -> Iterable[tuple]:
        for name in self.names:
            for t, m, v in zip(self.times, self.mean[name], self.var[name]):
                yield float(t), name, float(m), float(v), self.count

    def final(self, name: str) -> float:
        return float(self.mean[name][-1])


def _finish(times, names, res: BlockResult, t_end, edges, dt) -> EnsembleStats:
    n = next(iter(res.moments.values())).count
    width = np.diff(edges)
    with np.errstate(invalid="ignore", divide="ignore"):
        rate = np.where(width > 0, res.event_counts / (n * width), 0.0)
    return EnsembleStats(
        np.asarray(times, dtype=float), tuple(names),
        {k: res.moments[k].mean for k in names},
        {k: res.moments[k].var for k in names},
        n, float(t_end), int(res.n_events), float(res.gated_time),
        np.asarray(edges), rate, tuple(res.logs), float(dt),
    )


# -- scenarios -----------------------------------------------------------------

def sample_grid(t_end: float, dt: float, n_samples: int) -> tuple:
    """Nominal uniform grid on [0, t_end] and the nearest integration steps."""
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    times = np.linspace(0.0, t_end, int(n_samples))
    n = step_count(t_end, dt)
    steps = np.minimum(np.rint(times / dt).astype(np.int64), n)
    return times, steps


class Scenario:
    """Something that can simulate a block of trajectories."""

    t_end: float
    times: np.ndarray

    def observable_names(self, groups: Sequence[str]) -> list:
        raise NotImplementedError

    def run_block(self, indices: Sequence[int], master_seed: int,
                  groups: Sequence[str], keep_logs: bool = False) -> BlockResult:
        raise NotImplementedError

    @property
    def hist_edges(self) -> np.ndarray:
        return np.asarray(self.times, dtype=float)


@dataclass(eq=False)
class MatrixScenario(Scenario):
    """Finite-dimensional model driven by the segment engine.

    A mixed ``initial`` state is unravelled: each trajectory starts from an
    eigenvector of rho drawn with its eigenvalue as probability, using the
    first draw of the trajectory's stream.
    """

    h: SplitHamiltonian
    params: CollapseParams
    initial: PureState | MixedState
    t_end: float
    dt: float
    n_samples: int = 51
    restart: np.ndarray | None = None
    halt_on_exit: bool = False
    marked: np.ndarray | None = None

    def __post_init__(self):
        if self.initial.dim != self.h.dim:
            raise DimensionError(f"initial dim {self.initial.dim} != H dim {self.h.dim}")
        self.times, self.sample_steps = sample_grid(self.t_end, self.dt, self.n_samples)
        self.n_steps = step_count(self.t_end, self.dt)
        if isinstance(self.initial, MixedState):
            p, v = np.linalg.eigh(self.initial.rho)
            keep = p > 1e-15
            self._mixture = (p[keep] / p[keep].sum(), np.ascontiguousarray(v[:, keep].T))
            self.initial_index = -1
            if len(self._mixture[0]) == 1:
                self.initial = PureState.normalized(self._mixture[1][0])
                self._mixture = None
        else:
            self._mixture = None
        if self._mixture is None:
            nz = np.flatnonzero(self.initial.amplitudes)
            self.initial_index = int(nz[0]) if len(nz) == 1 else -1

    @cached_property
    def engine(self) -> SegmentEngine:
        return SegmentEngine(self.h, self.params, self.dt, restart=self.restart)

    def observable_names(self, groups) -> list:
        d = self.h.dim
        names = []
        for g in groups:
            if g not in MATRIX_OBSERVABLES:
                raise ValueError(f"unknown observable {g!r} for a matrix model")
            if g == "populations":
                names += [f"pop_{j}" for j in range(d)]
            elif g == "coherences":
                for i in range(d):
                    for j in range(i + 1, d):
                        names += [f"re_rho_{i}_{j}", f"im_rho_{i}_{j}"]
            else:
                names.append(g)
            if g == "survival" and self.initial_index < 0:
                raise ValueError("survival needs a preferred-basis initial state")
            if g == "marked" and self.marked is None:
                raise ValueError("this scenario has no marked states")
            if self.halt_on_exit and g in ("populations", "coherences", "energy"):
                raise ValueError(f"{g} is undefined after a trajectory halts")
        return names

    def run_block(self, indices, master_seed, groups, keep_logs=False) -> BlockResult:
        eng = self.engine
        steps = self.sample_steps
        need_states = any(g in ("populations", "coherences", "energy") for g in groups)
        edges = self.hist_edges
        counts = np.zeros(len(edges) - 1)
        cols: dict = {g: [] for g in groups}
        states = []
        logs, n_events, gated_total = [], 0, 0
        for i in indices:
            rng = trajectory_rng(master_seed, i)
            if self._mixture is None:
                start = self.initial.amplitudes
            else:
                start = self._mixture[1][int(_select(self._mixture[0], rng.random()))]
            key, log, gated, _ = eng.run(start, self.n_steps, rng,
                                         halt_on_exit=self.halt_on_exit)
            n_events += len(log)
            gated_total += gated
            if len(log):
                counts += np.histogram(log.times, bins=edges)[0]
            if keep_logs:
                logs.append((int(i), log))
            if need_states:
                states.append(eng.sample(key, log, steps))
            upto = lambda mask: np.searchsorted(log.steps[mask], steps, side="right")
            if "events" in groups:
                cols["events"].append(upto(slice(None)))
            if "switches" in groups:
                cols["switches"].append(upto(log.switch_mask(self.initial_index)))
            if "marked" in groups:
                cols["marked"].append(upto(self.marked[log.selected]))
            if "survival" in groups:
                out = np.flatnonzero(log.selected != self.initial_index)
                exit_step = log.steps[out[0]] if len(out) else np.iinfo(np.int64).max
                cols["survival"].append((steps < exit_step).astype(float))
        mom = {}
        if need_states:
            psi = np.stack(states)  # (B, n_t, d)
            d = self.h.dim
            if "populations" in groups:
                w = np.abs(psi) ** 2
                for j in range(d):
                    mom[f"pop_{j}"] = Moments.of(w[:, :, j])
            if "coherences" in groups:
                for i in range(d):
                    for j in range(i + 1, d):
                        r = psi[:, :, i] * psi[:, :, j].conj()
                        mom[f"re_rho_{i}_{j}"] = Moments.of(r.real)
                        mom[f"im_rho_{i}_{j}"] = Moments.of(r.imag)
            if "energy" in groups:
                hp = np.einsum("btk,jk->btj", psi, self.h.full)
                mom["energy"] = Moments.of(np.einsum("btj,btj->bt", psi.conj(), hp).real)
        for g in ("events", "switches", "marked", "survival"):
            if g in groups:
                mom[g] = Moments.of(np.array(cols[g], dtype=float))
        return BlockResult(mom, counts, n_events, gated_total * self.dt, logs)


# -- drivers -------------------------------------------------------------------

def run_ensemble(scenario: Scenario, spec: EnsembleSpec, threads: int = 1) -> EnsembleStats:
    """Run ``spec.n_traj`` trajectories; results do not depend on ``threads``."""
    if int(threads) < 1:
        raise ValueError("threads must be >= 1")
    names = scenario.observable_names(spec.observables)
    blocks = spec.blocks()
    seed = check_seed(spec.master_seed)

    def job(idx):
        return scenario.run_block(idx, seed, spec.observables, spec.keep_logs)

    results = []
    try:
        if threads == 1:
            for b in blocks:
                results.append(job(b))
        else:
            with ThreadPoolExecutor(max_workers=int(threads)) as pool:
                for r in pool.map(job, blocks):
                    results.append(r)
    except MemoryError as exc:
        done = sum(len(b) for b in blocks[:len(results)])
        raise EnsembleError(f"out of memory: {exc}", done) from exc
    merged = tree_merge(results, BlockResult.merge)
    return _finish(scenario.times, names, merged, scenario.t_end, scenario.hist_edges,
                   getattr(scenario, "dt", 0.0))


@dataclass(frozen=True, eq=False)
class SweepRow:
    value: object
    stats: EnsembleStats | None
    error: str | None = None

    def summary(self) -> dict:
        row = {"value": self.value}
        if self.stats is None:
            row["error"] = self.error
            return row
        s = self.stats
        row["event_rate"] = s.event_rate
        row["gated_rate"] = s.gated_rate
        row["n_events"] = s.n_events
        for k in s.names:
            row[f"final_{k}"] = s.final(k)
        return row


def sweep(build: Callable[[object], Scenario], values: Sequence, spec: EnsembleSpec,
          threads: int = 1) -> list:
    """One ensemble per grid value; a failing row records its error and the rest run."""
    rows = []
    for v in values:
        try:
            rows.append(SweepRow(v, run_ensemble(build(v), spec, threads)))
        except (ValueError, ArithmeticError, RuntimeError) as exc:
            rows.append(SweepRow(v, None, f"{type(exc).__name__}: {exc}"))
    return rows

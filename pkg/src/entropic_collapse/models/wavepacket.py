"""Free particle on a periodic 1-D grid with position-cell collapse.

The preferred basis is the set of contiguous cells of ``cell_width``; a
collapse keeps the pre-collapse amplitude inside the chosen cell and zeroes
it elsewhere. The kinetic operator is spectral (E_k = hbar^2 k^2 / 2m on
the FFT grid), so the unitary step is exact for any dt and the in-cell
kinetic energy uses the matching real-space kernel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import stats as sps

from ..collapse import _select, step_count
from ..ensemble import BlockResult, Moments, Scenario, sample_grid
from ..hilbert import CollapseParams, shannon_entropy
from ..rng import check_seed, trajectory_rng

H_SI = 6.62607015e-34
HBAR_SI = H_SI / (2 * math.pi)
NEUTRON_MASS = 1.67492749804e-27

WAVEPACKET_OBSERVABLES = ("width", "position", "kinetic", "events")
ALIAS_TOL = 1e-8
GUARD_LOSS_TOL = 1e-3


class CommensurabilityError(ValueError):
    pass


class AliasingError(ValueError):
    pass


def _positive(**kw):
    for k, v in kw.items():
        if not (math.isfinite(v) and v > 0):
            raise ValueError(f"{k} must be positive and finite, got {v}")


def lambda0(mass: float, t0: float, hbar: float = HBAR_SI) -> float:
    """Thermal de Broglie wavelength h / sqrt(2 pi m T0)."""
    _positive(mass=mass, t0=t0, hbar=hbar)
    return 2 * math.pi * hbar / math.sqrt(2 * math.pi * mass * t0)


def t0_from_lambda(mass: float, length: float, hbar: float = HBAR_SI) -> float:
    """Inverse of lambda0: T0 = h^2 / (2 pi m lambda^2)."""
    _positive(mass=mass, length=length, hbar=hbar)
    return (2 * math.pi * hbar) ** 2 / (2 * math.pi * mass * length**2)


@dataclass(frozen=True)
class LambdaMax:
    value: float
    lambda0: float
    ratio: float  # T0 tau0 / (4 pi hbar)

    @property
    def localized(self) -> bool:
        """lambda0_max stays close to lambda0 when T0 tau0 < 4 pi hbar."""
        return self.ratio < 1.0


def lambda0_max(mass: float, t0: float, tau0: float, hbar: float = HBAR_SI) -> LambdaMax:
    """sqrt(lambda0^2 + (hbar tau0 / 2 m lambda0)^2) and the T0 tau0 regime."""
    _positive(mass=mass, t0=t0, hbar=hbar)
    if not (math.isfinite(tau0) and tau0 >= 0):
        raise ValueError(f"tau0 must be nonnegative and finite, got {tau0}")
    lam = lambda0(mass, t0, hbar)
    spread = hbar * tau0 / (2 * mass * lam)
    return LambdaMax(math.hypot(lam, spread), lam, t0 * tau0 / (4 * math.pi * hbar))


def free_width(sigma0: float, t, mass: float = 1.0, hbar: float = 1.0):
    """Position spread of a free Gaussian, sigma0 sqrt(1 + (hbar t / 2 m sigma0^2)^2)."""
    t = np.asarray(t, dtype=float)
    return sigma0 * np.sqrt(1 + (hbar * t / (2 * mass * sigma0**2)) ** 2)


@dataclass(frozen=True)
class WavepacketModel:
    mass: float
    grid_n: int
    grid_dx: float
    cell_width: float
    hbar: float = 1.0

    def __post_init__(self):
        _positive(mass=self.mass, grid_dx=self.grid_dx, cell_width=self.cell_width, hbar=self.hbar)
        n = self.grid_n
        if int(n) != n or n < 2 or (int(n) & (int(n) - 1)):
            raise ValueError(f"grid_n must be a power of two, got {n}")
        if self.cell_width < self.grid_dx * (1 - 1e-12):
            raise ValueError("cell_width must be at least grid_dx")
        object.__setattr__(self, "grid_n", int(n))

    @classmethod
    def natural(cls, mass: float, t0: float, grid_n: int = 1024, points_per_lambda: int = 4,
                cells_per_lambda: float = 1.0, hbar: float = 1.0) -> "WavepacketModel":
        """Grid scaled to lambda0: dx = lambda0 / points_per_lambda."""
        lam = lambda0(mass, t0, hbar)
        dx = lam / points_per_lambda
        return cls(mass, grid_n, dx, dx * round(points_per_lambda / cells_per_lambda), hbar)

    @property
    def length(self) -> float:
        return self.grid_n * self.grid_dx

    @cached_property
    def x(self) -> np.ndarray:
        return (np.arange(self.grid_n) - self.grid_n // 2) * self.grid_dx

    @cached_property
    def k(self) -> np.ndarray:
        return 2 * math.pi * np.fft.fftfreq(self.grid_n, self.grid_dx)

    @cached_property
    def kinetic_spectrum(self) -> np.ndarray:
        return self.hbar**2 * self.k**2 / (2 * self.mass)

    @property
    def frequency(self) -> float:
        """hbar / (2 m l^2) for the cell width l."""
        return self.hbar / (2 * self.mass * self.cell_width**2)

    def cell_points(self, width: float | None = None) -> int:
        w = self.cell_width if width is None else width
        r = w / self.grid_dx
        p = int(round(r))
        if p < 1 or abs(r - p) > 1e-9 * max(1.0, r):
            raise CommensurabilityError(f"cell width {w} is not a multiple of grid_dx {self.grid_dx}")
        if p > self.grid_n:
            raise CommensurabilityError("cell wider than the grid")
        return p

    def cell_kernel(self, points: int) -> np.ndarray:
        """Kinetic matrix restricted to ``points`` consecutive sites (Toeplitz)."""
        kap = np.fft.ifft(self.kinetic_spectrum)
        d = np.subtract.outer(np.arange(points), np.arange(points)) % self.grid_n
        return kap[d]

    def gaussian(self, sigma0: float, x0: float = 0.0, k0: float = 0.0) -> np.ndarray:
        _positive(sigma0=sigma0)
        d = (self.x - x0 + self.length / 2) % self.length - self.length / 2
        psi = np.exp(-d**2 / (4 * sigma0**2) + 1j * k0 * d)
        return psi / np.linalg.norm(psi)

    # -- functionals on stacks of grid vectors (rows) --
    def kinetic_energy(self, psi: np.ndarray) -> np.ndarray:
        f = np.fft.fft(np.atleast_2d(psi), axis=-1)
        return (np.abs(f) ** 2 @ self.kinetic_spectrum) / self.grid_n

    def _cells(self, psi: np.ndarray, points: int) -> np.ndarray:
        psi = np.atleast_2d(psi)
        pad = (-self.grid_n) % points
        if pad:
            psi = np.concatenate([psi, np.zeros((psi.shape[0], pad), dtype=psi.dtype)], axis=1)
        return psi.reshape(psi.shape[0], -1, points)

    def cell_weights(self, psi: np.ndarray, points: int | None = None) -> np.ndarray:
        p = self.cell_points() if points is None else points
        return (np.abs(self._cells(psi, p)) ** 2).sum(axis=2)

    def block_kinetic(self, psi: np.ndarray, points: int | None = None,
                      kernel: np.ndarray | None = None) -> np.ndarray:
        """sum_c <psi_c|K|psi_c> over the cell restrictions psi_c."""
        p = self.cell_points() if points is None else points
        kern = self.cell_kernel(p) if kernel is None else kernel
        b = self._cells(psi, p)
        return np.real(np.sum(b.conj() * (b @ kern.T), axis=(1, 2)))

    def center(self, psi: np.ndarray) -> np.ndarray:
        """Circular mean position."""
        p = np.abs(np.atleast_2d(psi)) ** 2
        phase = np.exp(2j * math.pi * self.x / self.length)
        return np.angle(p @ phase) * self.length / (2 * math.pi)

    def width(self, psi: np.ndarray) -> np.ndarray:
        """rms spread about the circular mean, distances wrapped to the grid."""
        p = np.abs(np.atleast_2d(psi)) ** 2
        p = p / p.sum(axis=1, keepdims=True)
        c = self.center(psi)
        d = (self.x[None, :] - c[:, None] + self.length / 2) % self.length - self.length / 2
        mu = np.sum(p * d, axis=1)
        return np.sqrt(np.maximum(np.sum(p * d * d, axis=1) - mu**2, 0.0))

    def alias_fraction(self, psi: np.ndarray) -> np.ndarray:
        """Probability in the top fifth of the momentum band."""
        f = np.abs(np.fft.fft(np.atleast_2d(psi), axis=-1)) ** 2
        hi = np.abs(self.k) > 0.8 * math.pi / self.grid_dx
        return f[:, hi].sum(axis=1) / f.sum(axis=1)

    def guard_mask(self, fraction: float) -> np.ndarray:
        """1 in the interior, cos^2 roll-off to 0 over the outer ``fraction`` at each edge."""
        if fraction <= 0:
            return np.ones(self.grid_n)
        edge = fraction * self.length / 2
        dist = self.length / 2 - np.abs(self.x)
        s = np.clip(dist / edge, 0.0, 1.0)
        return np.sin(0.5 * math.pi * s) ** 0.125


# -- criterion -----------------------------------------------------------------

@dataclass(frozen=True)
class LocalizationResult:
    delta_s: float
    delta_e: float
    met: bool
    threshold_cell: float


def _reduction(model: WavepacketModel, psi: np.ndarray, points: int, kin: float) -> tuple:
    w = model.cell_weights(psi, points)[0]
    ds = float(shannon_entropy(w))
    de = float(model.block_kinetic(psi, points)[0]) - kin
    return ds, de


def localization_criterion(model: WavepacketModel, psi: np.ndarray,
                           params: CollapseParams) -> LocalizationResult:
    """Criterion for the cell basis of ``model`` and the smallest cell meeting it.

    The threshold is bisected over integer numbers of grid points between the
    largest failing and the smallest passing power of two; it is inf when no
    cell up to the grid size passes.
    """
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    if psi.shape != (model.grid_n,):
        raise ValueError(f"psi has {psi.size} points, grid has {model.grid_n}")
    norm2 = float(np.vdot(psi, psi).real)
    if abs(norm2 - 1) > 1e-10:
        raise ValueError(f"psi is not normalized (norm^2 = {norm2})")
    kin = float(model.kinetic_energy(psi)[0])
    t0 = params.t0
    ds, de = _reduction(model, psi, model.cell_points(), kin)

    def met(p):
        s, e = _reduction(model, psi, p, kin)
        return s > e / t0

    if met(1):
        threshold = 1
    else:
        hi = 2
        while hi <= model.grid_n and not met(hi):
            hi *= 2
        if hi > model.grid_n:
            threshold = None
        else:
            lo = hi // 2
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if met(mid):
                    hi = mid
                else:
                    lo = mid
            threshold = hi
    cell = math.inf if threshold is None else threshold * model.grid_dx
    return LocalizationResult(ds, de, ds > de / t0, cell)


# -- dynamics ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WavepacketPaths:
    """Per-trajectory samples, arrays of shape (n_traj, n_times)."""

    times: np.ndarray
    width: np.ndarray
    position: np.ndarray
    kinetic: np.ndarray
    events: np.ndarray
    guard_loss: np.ndarray
    gated_steps: np.ndarray
    logs: list

    @property
    def guard_ok(self) -> bool:
        return bool(np.all(self.guard_loss <= GUARD_LOSS_TOL))


@dataclass(eq=False)
class WavepacketScenario(Scenario):
    model: WavepacketModel
    params: CollapseParams
    sigma0: float
    t_end: float
    dt: float | None = None
    x0: float = 0.0
    k0: float = 0.0
    n_samples: int = 51
    guard_fraction: float = 0.125

    def __post_init__(self):
        m = self.model
        if self.dt is None:
            self.dt = 0.01 / max(m.frequency, self.params.gamma0)
        if self.params.gamma0 * self.dt > 0.1:
            raise ValueError(f"gamma0*dt = {self.params.gamma0 * self.dt:.3g} exceeds 0.1")
        self.points = m.cell_points()
        self.times, self.sample_steps = sample_grid(self.t_end, self.dt, self.n_samples)
        self.n_steps = step_count(self.t_end, self.dt)
        self.psi0 = m.gaussian(self.sigma0, self.x0, self.k0)
        alias = float(m.alias_fraction(self.psi0)[0])
        if alias > ALIAS_TOL:
            raise AliasingError(f"{alias:.2e} of the initial momentum weight lies near Nyquist; "
                                "refine grid_dx or widen the packet")

    @cached_property
    def _ops(self) -> tuple:
        m = self.model
        phase = np.exp(-1j * m.kinetic_spectrum * self.dt / m.hbar)
        return phase, m.cell_kernel(self.points), m.guard_mask(self.guard_fraction)

    def observable_names(self, groups) -> list:
        for g in groups:
            if g not in WAVEPACKET_OBSERVABLES:
                raise ValueError(f"unknown observable {g!r} for the wavepacket model")
        return list(groups)

    def simulate(self, indices, master_seed: int) -> WavepacketPaths:
        m = self.model
        phase, kern, mask = self._ops
        kern_t = np.ascontiguousarray(kern.T)
        n = m.grid_n
        lo = int(np.argmax(mask[: n // 2] >= 1.0))  # absorbing sites [0, lo) and [hi, n)
        hi = n - int(np.argmax(mask[::-1][: n // 2] >= 1.0))
        idx = list(indices)
        b = len(idx)
        rngs = [trajectory_rng(master_seed, i) for i in idx]
        p = -math.expm1(-self.params.gamma0 * self.dt)
        budget = np.array([r.geometric(p) if p > 0 else 0 for r in rngs], dtype=np.int64)
        psi = np.tile(self.psi0, (b, 1))
        kin = m.kinetic_energy(psi)  # conserved by the free step; refreshed after changes
        loss = np.zeros(b)
        logs = [([], [], [], []) for _ in range(b)]
        n_ev = np.zeros(b, dtype=np.int64)
        gated = np.zeros(b, dtype=np.int64)
        ns = len(self.sample_steps)
        out = {k: np.zeros((b, ns)) for k in ("width", "position", "kinetic", "events")}
        t0 = self.params.t0
        pts = self.points
        n_cells = -(-n // pts)
        # shifting by whole cells is exact on the periodic grid, so each
        # trajectory is recentred on its collapse cell and the shift tracked
        recentre = n % pts == 0
        home = n_cells // 2
        shift = np.zeros(b, dtype=np.int64)  # cells moved so far
        nxt = 0

        def record(step):
            nonlocal nxt
            while nxt < ns and self.sample_steps[nxt] == step:
                out["width"][:, nxt] = m.width(psi)
                out["position"][:, nxt] = m.center(psi) + shift * pts * m.grid_dx
                out["kinetic"][:, nxt] = kin
                out["events"][:, nxt] = n_ev
                nxt += 1

        record(0)
        for step in range(1, self.n_steps + 1):
            if lo or hi < n:
                edge = (np.sum(np.abs(psi[:, :lo]) ** 2, axis=1)
                        + np.sum(np.abs(psi[:, hi:]) ** 2, axis=1))
                hit = np.flatnonzero(edge > 0)
                if len(hit):
                    sub = psi[hit] * mask
                    n2 = np.sum(np.abs(sub) ** 2, axis=1)
                    loss[hit] += 1.0 - n2
                    psi[hit] = sub / np.sqrt(n2)[:, None]
                    kin[hit] = m.kinetic_energy(psi[hit])
            psi = np.fft.ifft(np.fft.fft(psi, axis=1) * phase, axis=1)
            if p == 0:
                record(step)
                continue
            cells = m._cells(psi, pts)
            w = (cells.real**2 + cells.imag**2).sum(axis=2)
            ds = shannon_entropy(w, axis=1)
            flat = cells.reshape(-1, pts)
            kc = flat @ kern_t
            blk = (flat.real * kc.real + flat.imag * kc.imag).reshape(b, n_cells * pts).sum(axis=1)
            de = blk - kin
            gate = ds > de / t0
            budget -= gate
            gated += gate
            for j in np.flatnonzero(budget <= 0):
                r = rngs[j]
                c = int(_select(w[j], r.random()))
                new = np.zeros(n, dtype=complex)
                new[c * pts:(c + 1) * pts] = psi[j, c * pts:(c + 1) * pts]
                psi[j] = new / math.sqrt(w[j, c])
                kin[j] = m.kinetic_energy(psi[j])[0]
                budget[j] = r.geometric(p)
                n_ev[j] += 1
                cell = c + shift[j]
                if recentre and c != home:
                    psi[j] = np.roll(psi[j], (home - c) * pts)
                    shift[j] += c - home
                for lst, val in zip(logs[j], (step, cell, ds[j], de[j])):
                    lst.append(val)
            record(step)
        logs = [(i, tuple(np.array(x) for x in lg)) for i, lg in zip(idx, logs)]
        return WavepacketPaths(self.times, out["width"], out["position"], out["kinetic"],
                               out["events"], loss, gated, logs)

    def run_block(self, indices, master_seed, groups, keep_logs=False) -> BlockResult:
        paths = self.simulate(indices, master_seed)
        mom = {g: Moments.of(getattr(paths, g)) for g in groups}
        counts = np.zeros(len(self.hist_edges) - 1)
        for _, (steps, *_rest) in paths.logs:
            if len(steps):
                counts += np.histogram(steps * self.dt, bins=self.hist_edges)[0]
        n_events = int(paths.events[:, -1].sum())
        return BlockResult(mom, counts, n_events, float(paths.gated_steps.sum()) * self.dt,
                           paths.logs if keep_logs else [])


def run_wavepacket(model: WavepacketModel, params: CollapseParams, t_end: float, seed: int,
                   sigma0: float | None = None, dt: float | None = None,
                   n_samples: int = 101, n_traj: int = 1) -> WavepacketPaths:
    """Sampled widths (and positions, kinetic energies) of ``n_traj`` trajectories."""
    sigma0 = 2 * model.cell_width if sigma0 is None else sigma0
    sc = WavepacketScenario(model, params, sigma0, t_end, dt, n_samples=n_samples)
    return sc.simulate(range(n_traj), check_seed(seed))


# -- analysis ------------------------------------------------------------------

@dataclass(frozen=True)
class ContainmentResult:
    mean_slope: float
    slope_stderr: float
    p_value: float
    mean_width: float
    width_bound_ratio: float  # mean width / lambda0_max

    @property
    def stationary(self) -> bool:
        return self.p_value > 0.05


def containment(paths: WavepacketPaths, lam_max: float, t_min: float = 0.0) -> ContainmentResult:
    """Two-sided t-test of per-trajectory width-vs-time slopes against zero."""
    t = paths.times
    sel = t >= t_min
    if sel.sum() < 3:
        raise ValueError("need at least 3 samples after t_min")
    tt = t[sel]
    w = paths.width[:, sel]
    tc = tt - tt.mean()
    slopes = (w - w.mean(axis=1, keepdims=True)) @ tc / np.sum(tc**2)
    n = len(slopes)
    mean = float(slopes.mean())
    se = float(slopes.std(ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    if se == 0:
        pv = 1.0 if mean == 0 else 0.0
    else:
        pv = float(2 * sps.t.sf(abs(mean / se), n - 1))
    mw = float(w.mean())
    return ContainmentResult(mean, se, pv, mw, mw / lam_max)


def energy_input(paths: WavepacketPaths, k_cap: float | None = None) -> tuple:
    """Least-squares slope of ensemble-mean kinetic energy on mean collapse count.

    Samples whose mean kinetic energy has reached ``k_cap`` are left out (use
    half the grid saturation value, ``kinetic_spectrum.mean() / 2``).
    Returns (energy per collapse, power = slope * collapses per unit time).
    """
    n = paths.events.mean(axis=0)
    k = paths.kinetic.mean(axis=0)
    rate = float(n[-1] / paths.times[-1]) if paths.times[-1] > 0 else 0.0
    if k_cap is not None:
        n, k = n[k < k_cap], k[k < k_cap]
    if len(n) < 2 or np.ptp(n) == 0:
        return 0.0, 0.0
    slope = float(np.polyfit(n, k, 1)[0])
    return slope, slope * rate

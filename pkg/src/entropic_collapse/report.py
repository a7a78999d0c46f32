"""Artifact writers: observables, events, fit report and manifest."""
from __future__ import annotations

import csv
import io
import json
import math
import platform
from importlib import metadata

import numpy as np
import scipy
from scipy.optimize import minimize_scalar

from .collapse import step_count
from .config import ScenarioConfig, build_model, hamiltonian, initial_state
from .density import damped_oscillator, integrate_eqofmo
from .ensemble import EnsembleStats
from .hilbert import PureState
from .models.cyclic import CyclicModel, emission_oracle
from .models.decay import DecayModel, analyse_decay
from .models.two_level import (
    TwoLevelModel,
    instability_boundary,
    instability_condition,
    observer_window,
    telegraph_switch_rate,
)
from .models.wavepacket import WavepacketModel, lambda0_max

FLOAT = "{:.17g}"


def _f(x) -> str:
    return FLOAT.format(float(x))


def observables_csv(stats: EnsembleStats) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "obs_name", "mean", "var", "n"])
    for t, name, m, v, n in stats.rows():
        w.writerow([_f(t), name, _f(m), _f(v), n])
    return buf.getvalue()


def observables_json(stats: EnsembleStats) -> str:
    data = {
        "t": [float(t) for t in stats.times],
        "n": stats.count,
        "observables": {k: {"mean": stats.mean[k].tolist(), "var": stats.var[k].tolist()}
                        for k in stats.names},
    }
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _quote(label: str) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="").writerow([label])
    return buf.getvalue()


def _event_columns(stats: EnsembleStats, labels, dt: float):
    cols = ([], [], [], [], [])
    for traj, log in stats.logs:
        if hasattr(log, "selected"):
            steps, sel, ds, de = log.steps, log.selected, log.delta_s, log.delta_e
        else:  # wavepacket logs are (steps, cells, ds, de)
            steps, sel, ds, de = log
        for c, v in zip(cols, (np.full(len(steps), traj), steps, sel, ds, de)):
            c.append(np.asarray(v))
    traj, steps, sel, ds, de = (np.concatenate(c) if c else np.zeros(0) for c in cols)
    return traj.astype(np.int64), steps * dt, sel.astype(np.int64), ds, de


def events_csv(stats: EnsembleStats, labels, dt: float) -> str:
    traj, t, sel, ds, de = _event_columns(stats, labels, dt)
    names = [_quote(x) for x in labels]
    lab = (names[c] if 0 <= c < len(names) else f"cell{c}" for c in sel.tolist())
    rows = ("%d,%.17g,%d,%s,%.17g,%.17g\n" % r
            for r in zip(traj.tolist(), t.tolist(), sel.tolist(), lab, ds.tolist(), de.tolist()))
    return "traj,t,selected,label,delta_s,delta_e\n" + "".join(rows)


def versions() -> dict:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"artifact": pkg, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def manifest(cfg: ScenarioConfig, files: list) -> dict:
    return {
        "config": cfg.to_dict(),
        "config_ini": cfg.to_ini(),
        "seeds": {
            "master_seed": cfg.master_seed,
            "n_traj": cfg.n_traj,
            "stream": "trajectory i uses Philox(SeedSequence(master_seed, spawn_key=(i,)))",
        },
        "sampling": "observables at the nearest integration step to each grid time",
        "versions": versions(),
        "files": files,
    }


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _density_check(cfg: ScenarioConfig, stats: EnsembleStats) -> dict:
    h = hamiltonian(cfg)
    init = initial_state(cfg)
    rho0 = init.density() if isinstance(init, PureState) else init
    steps = np.minimum(np.rint(stats.times / cfg.dt).astype(np.int64),
                       step_count(stats.t_end, cfg.dt))
    every = max(1, int(np.gcd.reduce(steps)))
    ser = integrate_eqofmo(rho0, h, cfg.params, steps[-1] * cfg.dt, cfg.dt, sample_every=every)
    rhos = ser.rhos[steps // every]
    worst, worst_name = 0.0, ""
    for name in stats.names:
        if name.startswith("pop_"):
            ref = np.real(rhos[:, int(name[4:]), int(name[4:])])
        elif name.startswith(("re_rho_", "im_rho_")):
            i, j = (int(x) for x in name.split("_")[2:])
            ref = rhos[:, i, j].real if name.startswith("re") else rhos[:, i, j].imag
        else:
            continue
        # rounding floor: the t = 0 row has zero variance
        se = np.maximum(stats.stderr(name), 1e-12)
        z = np.abs(stats.mean[name] - ref) / se
        if z.max() > worst:
            worst, worst_name = float(z.max()), name
    return {"max_z": worst, "worst_observable": worst_name, "within_3_se": worst <= 3.0}


def _fit_dephasing(times, w, omega0) -> float:
    """gamma minimising the squared misfit of w(t) to the damped oscillator."""
    res = minimize_scalar(lambda g: float(np.sum((w - damped_oscillator(times, g, omega0)) ** 2)),
                          bounds=(0.0, 10 * omega0), method="bounded",
                          options={"xatol": 1e-10})
    return float(res.x)


def build_report(cfg: ScenarioConfig, stats: EnsembleStats) -> dict:
    rep = {
        "model": cfg.model,
        "n_traj": stats.count,
        "t_end": stats.t_end,
        "n_events": stats.n_events,
        "event_rate": stats.event_rate,
        "gamma0_configured": cfg.gamma0,
        "gamma0_fit": stats.gated_rate,
        "gated_fraction": stats.gated_time / (stats.count * step_count(stats.t_end, stats.dt) * stats.dt),
    }
    if cfg.gamma0 > 0 and math.isfinite(stats.gated_rate):
        rep["gamma0_rel_error"] = abs(stats.gated_rate / cfg.gamma0 - 1)
    model = build_model(cfg)
    if "switches" in stats.names:
        sw = stats.final("switches")
        rep["switching_time"] = stats.t_end / sw if sw > 0 else math.inf
    if isinstance(model, TwoLevelModel):
        p = cfg.params
        rep["telegraph_switching_time_oracle"] = (1 / telegraph_switch_rate(model.v1, p.gamma0)
                                                  if p.gamma0 > 0 else math.inf)
        rep["criterion"] = {
            "canonical_temperature": model.temperature,
            "boundary_t0": instability_boundary(model),
            "unstable_at_configured_t0": instability_condition(model, p),
        }
        if p.gamma0 > 0:
            rep["observer_window"] = observer_window(model.omega0, p.tau0)
        if {"pop_0", "pop_1"} <= set(stats.names) and cfg.initial == "basis":
            w = stats.mean["pop_0"] - stats.mean["pop_1"]
            if abs(abs(w[0]) - 1) < 1e-12:
                rep["dephasing_rate_fit"] = _fit_dephasing(stats.times, w * w[0], model.omega0)
    if cfg.compare_density:
        rep["density_comparison"] = _density_check(cfg, stats)
    if isinstance(model, DecayModel):
        d = analyse_decay(model, cfg.params, stats)
        rep["decay"] = {"tau_fit": d.fit.tau, "r2": d.fit.r2, "tau_tail_mle": d.tau_mle,
                        "tau_tail_mle_err": d.tau_mle_err, "tau_golden_rule": d.tau_oracle,
                        "tau_flat_band": d.tau_flat, "n_decayed": d.n_decayed,
                        "tau_rel_error": abs(d.fit.tau / d.tau_oracle - 1)
                        if math.isfinite(d.tau_oracle) else None}
    if isinstance(model, CyclicModel):
        ev = stats.final("events")
        em = stats.final("marked") if "marked" in stats.names else math.nan
        rep["cyclic"] = {"tau": model.tau, "collapses_per_traj": ev, "emissions_per_traj": em,
                         "cycle_period": stats.t_end / ev if ev > 0 else math.inf,
                         "emission_interval": stats.t_end / em if em > 0 else math.inf,
                         "oracle": emission_oracle(model, cfg.params)}
    if isinstance(model, WavepacketModel):
        lm = lambda0_max(model.mass, cfg.t0, cfg.params.tau0, model.hbar)
        wp = {"lambda0": lm.lambda0, "lambda0_max": lm.value, "t0_tau0_over_4pi_hbar": lm.ratio}
        if "width" in stats.names:
            t = stats.times
            # the sharp-cell projection heats the packet until its momentum
            # distribution fills the grid; only the second half is tested
            late = t >= t[-1] / 2
            w = stats.mean["width"][late]
            slope, icpt = np.polyfit(t[late], w, 1)
            resid = w - (slope * t[late] + icpt)
            se = math.sqrt(np.sum(resid**2) / max(1, late.sum() - 2) / np.sum((t[late] - t[late].mean()) ** 2))
            wp.update({"mean_width": float(w.mean()), "width_over_lambda0_max": float(w.mean()) / lm.value,
                       "width_slope": float(slope), "width_slope_stderr_naive": se,
                       "width_window_start": float(t[late][0])})
        if {"kinetic", "events"} <= set(stats.names):
            n, k = stats.mean["events"], stats.mean["kinetic"]
            # uniform occupation of the grid's momentum band caps the heating
            k_sat = float(np.mean(model.kinetic_spectrum))
            wp["kinetic_saturation"] = k_sat
            heat = k < k_sat / 2
            n, k = n[heat], k[heat]
            if len(n) >= 2 and np.ptp(n) > 0:
                e_per = float(np.polyfit(n, k, 1)[0])
                wp["energy_per_collapse"] = e_per
                wp["power"] = e_per * stats.event_rate
                wp["t0_over_tau0"] = cfg.t0 / cfg.params.tau0
        rep["wavepacket"] = wp
    return rep

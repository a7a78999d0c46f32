"""Scenario files: INI sections parsed with configparser, validated as a whole.

See docs/config.md for the grammar. Every problem found is reported, each
tagged with its ``section.key`` path.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ensemble import MATRIX_OBSERVABLES, EnsembleSpec, MatrixScenario, Scenario
from .hilbert import (
    CollapseParams,
    HermiticityError,
    MixedState,
    PreferredBasis,
    PureState,
    SplitHamiltonian,
    max_asymmetry,
)
from .models.cyclic import CyclicModel
from .models.decay import DecayModel
from .models.two_level import TwoLevelModel
from .models.wavepacket import WAVEPACKET_OBSERVABLES, WavepacketModel, WavepacketScenario, lambda0

MAX_STEP_PHASE = 0.05
AUTO_STEP_PHASE = 0.01

MODEL_KINDS = ("two_level", "cyclic", "decay", "wavepacket", "custom_matrix")
INITIAL_KINDS = ("basis", "amplitudes", "canonical", "gaussian")

DEFAULT_OBSERVABLES = {
    "two_level": ("populations", "coherences", "events", "switches"),
    "cyclic": ("populations", "events", "marked"),
    "decay": ("survival", "events"),
    "wavepacket": ("width", "position", "kinetic", "events"),
    "custom_matrix": ("populations", "events", "switches"),
}


class ConfigParseError(ValueError):
    def __init__(self, line: int, column: int, msg: str):
        super().__init__(f"line {line}, column {column}: {msg}")
        self.line, self.column = line, column


class ConfigError(ValueError):
    def __init__(self, errors: list):
        self.errors = list(errors)
        super().__init__("; ".join(f"{p}: {m}" for p, m in self.errors))


# -- value syntax ----------------------------------------------------------------

def _complex(tok: str) -> complex:
    return complex(tok.replace(" ", "").replace("i", "j"))


def parse_vector(text: str, kind=float) -> list:
    return [kind(t.strip()) for t in text.split(",") if t.strip()]


def parse_matrix(text: str) -> np.ndarray:
    rows = [r for r in text.replace("\n", " ").split(";") if r.strip()]
    data = [[_complex(t) for t in r.split(",") if t.strip()] for r in rows]
    if not data or any(len(r) != len(data[0]) for r in data):
        raise ValueError("matrix rows must be non-empty and of equal length")
    return np.array(data, dtype=complex)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, complex):
        return repr(v.real) if v.imag == 0 else f"{v.real!r}{v.imag:+.17g}j"
    if isinstance(v, (list, tuple)):
        if v and isinstance(v[0], (list, tuple)):
            return "; ".join(", ".join(_fmt(x) for x in row) for row in v)
        return ", ".join(_fmt(x) for x in v)
    return str(v)


# -- schema ----------------------------------------------------------------------

def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _pow2(x):
    return x >= 2 and (x & (x - 1)) == 0


# key -> (type, default or REQUIRED or None for optional, check, description)
REQUIRED = object()

MODEL_SCHEMA = {
    "two_level": {
        "v1": (float, REQUIRED, _pos, "positive"),
        "temperature": (float, 0.0, _nonneg, "nonnegative"),
    },
    "cyclic": {
        "v1": (float, REQUIRED, _pos, "positive"),
        "v2": (float, REQUIRED, _pos, "positive"),
        "n_photon_modes": (int, 1, lambda x: x >= 1, ">= 1"),
        "bandwidth": (float, 0.0, _nonneg, "nonnegative"),
    },
    "decay": {
        "n_band": (int, 200, lambda x: x >= 10, ">= 10"),
        "bandwidth": (float, 2.0, _pos, "positive"),
        "coupling": (float, REQUIRED, _nonneg, "nonnegative"),
    },
    "wavepacket": {
        "mass": (float, REQUIRED, _pos, "positive"),
        "grid_n": (int, 1024, _pow2, "a power of two"),
        "grid_dx": (float, None, _pos, "positive"),
        "cell_width": (float, None, _pos, "positive"),
        "hbar": (float, 1.0, _pos, "positive"),
    },
    "custom_matrix": {
        "e0": ("vector", REQUIRED, None, ""),
        "h1": ("matrix", REQUIRED, None, ""),
        "labels": ("labels", None, None, ""),
    },
}

INITIAL_SCHEMA = {
    "basis": {"index": (int, None, _nonneg, "nonnegative"), "state": (str, None, None, "")},
    "amplitudes": {"amplitudes": ("cvector", REQUIRED, None, "")},
    "canonical": {"temperature": (float, REQUIRED, _nonneg, "nonnegative")},
    "gaussian": {
        "sigma0": (float, None, _pos, "positive"),
        "x0": (float, 0.0, None, ""),
        "k0": (float, 0.0, None, ""),
    },
}


def _convert(kind, raw: str):
    if kind is float:
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError("must be finite")
        return v
    if kind is int:
        return int(raw)
    if kind is str:
        return raw.strip()
    if kind == "vector":
        return tuple(parse_vector(raw, float))
    if kind == "cvector":
        return tuple(parse_vector(raw, _complex))
    if kind == "matrix":
        return tuple(tuple(r) for r in parse_matrix(raw).tolist())
    if kind == "labels":
        return tuple(t.strip() for t in raw.split(",") if t.strip())
    if kind is bool:
        low = raw.strip().lower()
        if low not in ("true", "false", "yes", "no", "1", "0"):
            raise ValueError("expected true or false")
        return low in ("true", "yes", "1")
    raise TypeError(kind)


def _read_section(cp, section: str, schema: dict, errors: list, skip=()) -> dict:
    out = {}
    have = cp[section] if cp.has_section(section) else {}
    for key in have:
        if key not in schema and key not in skip:
            errors.append((f"{section}.{key}", "unknown key"))
    for key, (kind, default, check, desc) in schema.items():
        path = f"{section}.{key}"
        if key in have:
            try:
                val = _convert(kind, have[key])
            except (ValueError, TypeError) as exc:
                errors.append((path, f"cannot parse {have[key]!r}: {exc}"))
                continue
            if check is not None and not check(val):
                errors.append((path, f"must be {desc}, got {val}"))
                continue
            out[key] = val
        elif default is REQUIRED:
            errors.append((path, "missing required key"))
        elif default is not None:
            out[key] = default
    return out


# -- config ----------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    model: str
    model_params: dict
    t0: float
    gamma0: float
    initial: str
    initial_params: dict
    dt: float
    t_end: float
    n_samples: int
    n_traj: int
    master_seed: int
    checkpoint_stride: int = 256
    observables: tuple = ()
    compare_density: bool = False

    @property
    def params(self) -> CollapseParams:
        return CollapseParams(self.t0, self.gamma0)

    @property
    def ensemble(self) -> EnsembleSpec:
        return EnsembleSpec(self.n_traj, self.master_seed, self.observables,
                            self.checkpoint_stride, keep_logs=True)

    def replace(self, **kw) -> "ScenarioConfig":
        d = dict(self.__dict__)
        d.update(kw)
        return ScenarioConfig(**d)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp["model"] = {"kind": self.model, **{k: _fmt(v) for k, v in self.model_params.items()}}
        cp["collapse"] = {"t0": _fmt(self.t0), "gamma0": _fmt(self.gamma0)}
        cp["initial"] = {"kind": self.initial,
                         **{k: _fmt(v) for k, v in self.initial_params.items()}}
        cp["integration"] = {"dt": _fmt(self.dt), "t_end": _fmt(self.t_end),
                             "n_samples": str(self.n_samples)}
        cp["ensemble"] = {"n_traj": str(self.n_traj), "master_seed": str(self.master_seed),
                          "checkpoint_stride": str(self.checkpoint_stride)}
        cp["outputs"] = {"observables": ", ".join(self.observables),
                         "compare_density": _fmt(self.compare_density)}
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines += [f"{k} = {v}" for k, v in cp[sec].items()]
            lines.append("")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        def js(v):
            if isinstance(v, complex):
                return [v.real, v.imag]
            if isinstance(v, (list, tuple)):
                return [js(x) for x in v]
            if isinstance(v, dict):
                return {k: js(x) for k, x in v.items()}
            return v
        return js(dict(self.__dict__))


def _parse(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",),
                                   inline_comment_prefixes=("#",), strict=True)
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigParseError(exc.lineno, 1, "content before the first [section]") from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigParseError(exc.lineno or 0, 1, exc.message.splitlines()[0]) from None
    except configparser.ParsingError as exc:
        line, raw = exc.errors[0]
        raise ConfigParseError(line, 1, f"cannot parse line {raw.strip()!r}") from None
    return cp


def _basis_dim_labels(kind: str, mp: dict) -> tuple:
    if kind == "two_level":
        return 2, ("up", "down")
    if kind == "cyclic":
        m = CyclicModel(mp["v1"], mp["v2"], mp["n_photon_modes"], mp["bandwidth"])
        return m.dim, m.hamiltonian.basis.labels
    if kind == "decay":
        return mp["n_band"] + 1, ("e",) + tuple(f"b{k}" for k in range(mp["n_band"]))
    if kind == "custom_matrix":
        d = len(mp["e0"])
        return d, mp.get("labels") or tuple(str(i) for i in range(d))
    return 0, ()


def build_model(cfg: ScenarioConfig):
    mp = cfg.model_params
    if cfg.model == "two_level":
        return TwoLevelModel(mp["v1"], mp["temperature"])
    if cfg.model == "cyclic":
        return CyclicModel(mp["v1"], mp["v2"], mp["n_photon_modes"], mp["bandwidth"])
    if cfg.model == "decay":
        return DecayModel(mp["n_band"], mp["bandwidth"], mp["coupling"])
    if cfg.model == "wavepacket":
        return WavepacketModel(mp["mass"], mp["grid_n"], mp["grid_dx"], mp["cell_width"], mp["hbar"])
    if cfg.model == "custom_matrix":
        d = len(mp["e0"])
        return SplitHamiltonian(PreferredBasis(d, mp.get("labels", ())), np.array(mp["e0"]),
                                np.array(mp["h1"], dtype=complex))
    raise ValueError(cfg.model)


def hamiltonian(cfg: ScenarioConfig) -> SplitHamiltonian | None:
    m = build_model(cfg)
    if isinstance(m, SplitHamiltonian):
        return m
    return getattr(m, "hamiltonian", None)


def characteristic_frequency(cfg: ScenarioConfig) -> float:
    """Fastest model frequency used by the step-size guard."""
    m = build_model(cfg)
    if isinstance(m, TwoLevelModel):
        return m.omega0
    if isinstance(m, WavepacketModel):
        return m.frequency
    h = m if isinstance(m, SplitHamiltonian) else m.hamiltonian
    return h.frequency_span


def initial_state(cfg: ScenarioConfig):
    ip = cfg.initial_params
    h = hamiltonian(cfg)
    if cfg.initial == "basis":
        d, labels = h.dim, h.basis.labels
        idx = ip["index"] if "index" in ip else labels.index(ip["state"]) if "state" in ip else 0
        return PureState.basis_state(d, idx)
    if cfg.initial == "amplitudes":
        return PureState.normalized(np.array(ip["amplitudes"], dtype=complex))
    if cfg.initial == "canonical":
        return MixedState.thermal(h, ip["temperature"])
    raise ValueError(f"initial kind {cfg.initial} has no finite-dimensional state")


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    m = build_model(cfg)
    p = cfg.params
    if cfg.model == "wavepacket":
        ip = cfg.initial_params
        return WavepacketScenario(m, p, ip["sigma0"], cfg.t_end, cfg.dt, ip["x0"], ip["k0"],
                                  cfg.n_samples)
    if cfg.model == "decay":
        return m.scenario(p, cfg.t_end, cfg.dt, cfg.n_samples)
    h = m if isinstance(m, SplitHamiltonian) else m.hamiltonian
    kw = {}
    if cfg.model == "cyclic":
        kw = {"restart": m.restart_map, "marked": m.photon_mask}
    return MatrixScenario(h, p, initial_state(cfg), cfg.t_end, cfg.dt, cfg.n_samples, **kw)


def loads(text: str) -> ScenarioConfig:
    cp = _parse(text)
    errors: list = []
    known = ("model", "collapse", "initial", "integration", "ensemble", "outputs")
    for sec in cp.sections():
        if sec not in known:
            errors.append((sec, "unknown section"))
    kind = cp.get("model", "kind", fallback=None)
    if kind in MODEL_KINDS:
        mp = _read_section(cp, "model", MODEL_SCHEMA[kind], errors, skip=("kind",))
    else:
        errors.append(("model.kind", f"must be one of {', '.join(MODEL_KINDS)}, got {kind!r}"))
        mp = {}

    col = _read_section(cp, "collapse", {
        "t0": (float, REQUIRED, _pos, "positive"),
        "gamma0": (float, REQUIRED, _nonneg, "nonnegative"),
    }, errors)

    default_init = "gaussian" if kind == "wavepacket" else "basis"
    ikind = cp.get("initial", "kind", fallback=default_init)
    if ikind not in INITIAL_KINDS:
        errors.append(("initial.kind", f"must be one of {', '.join(INITIAL_KINDS)}, got {ikind!r}"))
        ip = {}
    else:
        ip = _read_section(cp, "initial", INITIAL_SCHEMA[ikind], errors, skip=("kind",))
        if kind in MODEL_KINDS and (kind == "wavepacket") != (ikind == "gaussian"):
            errors.append(("initial.kind", "gaussian initial states go with the wavepacket model only"))
        if kind == "decay" and ikind != "basis":
            errors.append(("initial.kind", "the decay model starts from its unstable level (basis)"))

    integ = _read_section(cp, "integration", {
        "dt": (str, "auto", None, ""),
        "t_end": (float, REQUIRED, _pos, "positive"),
        "n_samples": (int, 51, lambda x: x >= 2, ">= 2"),
    }, errors)
    ens = _read_section(cp, "ensemble", {
        "n_traj": (int, 1000, lambda x: x >= 1, ">= 1"),
        "master_seed": (int, 0, lambda x: 0 <= x < 2**64, "in [0, 2^64)"),
        "checkpoint_stride": (int, 256, lambda x: x >= 1, ">= 1"),
    }, errors)
    outs = _read_section(cp, "outputs", {
        "observables": ("labels", None, None, ""),
        "compare_density": (bool, None, None, ""),
    }, errors)

    # model-level checks that need several fields
    if kind == "custom_matrix" and "e0" in mp and "h1" in mp:
        h1 = np.array(mp["h1"], dtype=complex)
        d = len(mp["e0"])
        if h1.shape != (d, d):
            errors.append(("model.h1", f"shape {h1.shape} does not match e0 length {d}"))
        else:
            asym = max_asymmetry(h1)
            if asym > 1e-12 * max(1.0, float(np.max(np.abs(h1)))):
                errors.append(("model.h1", f"not Hermitian: max |H1 - H1^H| = {asym:.6g}"))
        if "labels" in mp and len(mp["labels"]) != d:
            errors.append(("model.labels", f"{len(mp['labels'])} labels for dimension {d}"))
    if kind == "decay" and "coupling" in mp and "bandwidth" in mp:
        if mp["coupling"] > 0.1 * mp["bandwidth"]:
            errors.append(("model.coupling", "must be at most 0.1 * bandwidth"))
    if kind == "cyclic" and mp.get("n_photon_modes", 1) > 1 and mp.get("bandwidth", 0) == 0:
        errors.append(("model.bandwidth", "several photon modes need a positive bandwidth"))
    if kind == "wavepacket" and "mass" in mp and "t0" in col:
        lam = lambda0(mp["mass"], col["t0"], mp["hbar"])
        mp.setdefault("grid_dx", lam / 4)
        mp.setdefault("cell_width", mp["grid_dx"] * max(1, round(lam / mp["grid_dx"])))
        r = mp["cell_width"] / mp["grid_dx"]
        if r < 1 - 1e-12 or abs(r - round(r)) > 1e-9 * max(1.0, r):
            errors.append(("model.cell_width", "must be a positive integer multiple of grid_dx"))
        if ikind == "gaussian":
            ip.setdefault("sigma0", 2 * mp["cell_width"])

    if errors:
        raise ConfigError(errors)

    # initial-state checks
    d, labels = _basis_dim_labels(kind, mp)
    if ikind == "basis":
        if "index" in ip and "state" in ip:
            errors.append(("initial", "give either index or state, not both"))
        elif "index" in ip and ip["index"] >= d:
            errors.append(("initial.index", f"must be < {d}"))
        elif "state" in ip and ip["state"] not in labels:
            errors.append(("initial.state", f"unknown label {ip['state']!r}; known: {', '.join(labels)}"))
        elif "index" not in ip and "state" not in ip:
            ip["index"] = 0
        if kind == "decay" and ip.get("index", 0) != 0 and ip.get("state", "e") != "e":
            errors.append(("initial", "the decay model starts from level e"))
    if ikind == "amplitudes":
        a = np.array(ip["amplitudes"], dtype=complex)
        if len(a) != d:
            errors.append(("initial.amplitudes", f"{len(a)} amplitudes for dimension {d}"))
        elif not np.any(a):
            errors.append(("initial.amplitudes", "zero vector"))

    obs = outs.get("observables") or DEFAULT_OBSERVABLES[kind]
    allowed = WAVEPACKET_OBSERVABLES if kind == "wavepacket" else MATRIX_OBSERVABLES
    for o in obs:
        if o not in allowed:
            errors.append(("outputs.observables", f"unknown observable {o!r} for {kind}"))
    if kind == "decay":
        bad = [o for o in obs if o in ("populations", "coherences", "energy")]
        if bad:
            errors.append(("outputs.observables", "decay trajectories halt at exit; "
                           f"{', '.join(bad)} not available"))
    if "survival" in obs and kind != "wavepacket" and ikind != "basis":
        errors.append(("outputs.observables", "survival needs a basis initial state"))
    if "marked" in obs and kind != "cyclic":
        errors.append(("outputs.observables", "marked counts exist for the cyclic model only"))
    compare = outs.get("compare_density")
    if compare is None:
        compare = kind in ("two_level", "custom_matrix")
    if compare and kind in ("wavepacket", "decay"):
        errors.append(("outputs.compare_density", f"not available for {kind}"))
    if errors:
        raise ConfigError(errors)

    cfg = ScenarioConfig(kind, mp, col["t0"], col["gamma0"], ikind, ip, 0.0, integ["t_end"],
                         integ["n_samples"], ens["n_traj"], ens["master_seed"],
                         ens["checkpoint_stride"], tuple(obs), bool(compare))
    try:
        build_model(cfg)
        fastest = max(characteristic_frequency(cfg), col["gamma0"])
    except (ValueError, HermiticityError, OverflowError) as exc:
        raise ConfigError([("model", str(exc))]) from None
    if integ["dt"] == "auto":
        dt = AUTO_STEP_PHASE / fastest if fastest > 0 else integ["t_end"] / 1000
    else:
        try:
            dt = float(integ["dt"])
        except ValueError:
            raise ConfigError([("integration.dt", f"cannot parse {integ['dt']!r}")]) from None
        if not (dt > 0 and math.isfinite(dt)):
            errors.append(("integration.dt", "must be positive"))
        elif dt * fastest > MAX_STEP_PHASE * (1 + 1e-12):
            errors.append(("integration.dt", f"dt*max(omega0, gamma0) = {dt * fastest:.4g} "
                           f"exceeds {MAX_STEP_PHASE}"))
    if dt > integ["t_end"]:
        errors.append(("integration.dt", "larger than t_end"))
    if errors:
        raise ConfigError(errors)
    return cfg.replace(dt=dt)


def load_config(path) -> ScenarioConfig:
    return loads(Path(path).read_text())


def dumps(cfg: ScenarioConfig) -> str:
    return cfg.to_ini()


def set_value(text: str, path: str, value: str) -> str:
    """Return ``text`` with ``section.key`` set to ``value``."""
    if "." not in path:
        raise ValueError(f"axis must look like section.key, got {path!r}")
    sec, key = path.split(".", 1)
    cp = _parse(text)
    if not cp.has_section(sec):
        cp.add_section(sec)
    cp[sec][key] = value
    lines = []
    for s in cp.sections():
        lines.append(f"[{s}]")
        lines += [f"{k} = {v}" for k, v in cp[s].items()]
        lines.append("")
    return "\n".join(lines)

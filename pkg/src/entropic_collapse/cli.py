"""Command line: simulate, sweep, bounds, validate, oracle.

Exit codes: 0 ok, 1 runtime failure, 2 usage, 3 validation.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import report as rp
from .config import (
    ConfigError,
    ConfigParseError,
    build_scenario,
    hamiltonian,
    load_config,
    loads,
    set_value,
)
from .ensemble import EnsembleSpec, SweepRow, run_ensemble
from .models.bounds import RecordError, bounds_report, load_records
from .oracles import ORACLES

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_INVALID = 0, 1, 2, 3


def _error(category: str, message: str, errors=None) -> None:
    payload = {"error": category, "message": message}
    if errors:
        payload["errors"] = [{"field": p, "message": m} for p, m in errors]
    print(json.dumps(payload), file=sys.stderr)


def _load(path: str, seed: int | None):
    cfg = load_config(path)
    if seed is not None:
        cfg = cfg.replace(master_seed=seed)
    return cfg


def _labels(cfg):
    h = hamiltonian(cfg) if cfg.model != "wavepacket" else None
    return h.basis.labels if h is not None else ()


def simulate(cfg, out: Path, threads: int, fmt: str) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    stats = run_ensemble(build_scenario(cfg), cfg.ensemble, threads)
    obs_name = "observables.csv" if fmt == "csv" else "observables.json"
    files = {
        obs_name: rp.observables_csv(stats) if fmt == "csv" else rp.observables_json(stats),
        "events.csv": rp.events_csv(stats, _labels(cfg), cfg.dt),
        "report.json": rp.dumps_json(rp.build_report(cfg, stats)),
    }
    files["manifest.json"] = rp.dumps_json(rp.manifest(cfg, sorted(files) + ["manifest.json"]))
    for name, text in files.items():
        with open(out / name, "w", newline="\n") as fh:
            fh.write(text)
    return files


def _sweep_rows(text: str, axis: str, values: list, seed, threads: int) -> list:
    """Rows keep going past a failing value; its error lands in the table."""
    rows = []
    for v in values:
        try:
            cfg = loads(set_value(text, axis, v))
            if seed is not None:
                cfg = cfg.replace(master_seed=seed)
            spec = EnsembleSpec(cfg.n_traj, cfg.master_seed, cfg.observables,
                                cfg.checkpoint_stride)
            st = run_ensemble(build_scenario(cfg), spec, threads)
            row = SweepRow(v, st).summary()
            if "switches" in st.names:
                sw = st.final("switches")
                row["switching_time"] = st.t_end / sw if sw > 0 else float("inf")
        except ConfigError as exc:
            row = SweepRow(v, None, f"validation: {exc}").summary()
        except (ValueError, ArithmeticError, RuntimeError) as exc:
            row = SweepRow(v, None, f"{type(exc).__name__}: {exc}").summary()
        rows.append({"axis": axis, **row})
    return rows


def _table_csv(rows: list) -> str:
    cols = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([rp._f(r[c]) if isinstance(r.get(c), float) else r.get(c, "") for c in cols])
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="entropic-collapse",
                                 description="Entropy-gated collapse simulator.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--out", default=None, help="output directory")
        if seed:
            p.add_argument("--seed", type=int, default=None, help="override ensemble.master_seed")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    p = sub.add_parser("simulate", help="run a scenario and write its artifacts")
    p.add_argument("config")
    common(p)
    p = sub.add_parser("sweep", help="run a scenario over one parameter axis")
    p.add_argument("config")
    p.add_argument("--axis", required=True, help="section.key=v1,v2,...")
    common(p)
    p = sub.add_parser("bounds", help="T0 bounds from an experiment record file")
    p.add_argument("records")
    common(p, seed=False)
    p = sub.add_parser("validate", help="check config files")
    p.add_argument("configs", nargs="+")
    p = sub.add_parser("oracle", help="run a named analytic comparison")
    p.add_argument("name", choices=sorted(ORACLES) + ["all"])
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    threads = getattr(args, "threads", 1)
    if threads is not None and threads < 1:
        _error("usage", "--threads must be >= 1")
        return EXIT_USAGE
    try:
        if args.command == "simulate":
            cfg = _load(args.config, args.seed)
            out = Path(args.out or "out")
            simulate(cfg, out, threads, args.format)
            print(f"wrote {out}")
            return EXIT_OK
        if args.command == "sweep":
            if "=" not in args.axis:
                _error("usage", "--axis must look like section.key=v1,v2,...")
                return EXIT_USAGE
            key, vals = args.axis.split("=", 1)
            values = [v.strip() for v in vals.split(",") if v.strip()]
            if not values:
                _error("usage", "--axis needs at least one value")
                return EXIT_USAGE
            text = Path(args.config).read_text()
            loads(text)  # the base config must be valid
            rows = _sweep_rows(text, key.strip(), values, args.seed, threads)
            body = _table_csv(rows) if args.format == "csv" else rp.dumps_json(rows)
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                name = "sweep.csv" if args.format == "csv" else "sweep.json"
                with open(Path(args.out) / name, "w", newline="\n") as fh:
                    fh.write(body)
            sys.stdout.write(body)
            return EXIT_OK
        if args.command == "bounds":
            table = bounds_report(load_records(args.records))
            if args.format == "csv":
                body = table.to_csv()
            else:
                body = rp.dumps_json({"rows": [dict(r.__dict__, relation=r.relation,
                                                    discrepancy=r.discrepancy) for r in table.rows],
                                      "note": table.note})
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                with open(Path(args.out) / f"bounds.{args.format}", "w", newline="\n") as fh:
                    fh.write(body)
            sys.stdout.write(body)
            print(f"# {table.note}")
            for r in table.rows:
                if r.discrepancy:
                    print(f"# {r.label}: formula gives {r.t0_J:.3g} J, quoted figure "
                          f"{r.quoted_t0_J:.3g} J (discrepancy flagged)")
            return EXIT_OK
        if args.command == "validate":
            bad = 0
            for path in args.configs:
                try:
                    load_config(path)
                    print(f"ok {path}")
                except (ConfigError, ConfigParseError) as exc:
                    bad += 1
                    print(f"invalid {path}: {exc}")
            return EXIT_INVALID if bad else EXIT_OK
        if args.command == "oracle":
            names = sorted(ORACLES) if args.name == "all" else [args.name]
            ok = True
            for n in names:
                res = ORACLES[n]()
                print(res.line())
                ok &= res.passed
            return EXIT_OK if ok else EXIT_RUNTIME
    except ConfigParseError as exc:
        _error("parse", str(exc))
        return EXIT_INVALID
    except ConfigError as exc:
        _error("validation", str(exc), exc.errors)
        return EXIT_INVALID
    except RecordError as exc:
        _error("validation", str(exc))
        return EXIT_INVALID
    except FileNotFoundError as exc:
        _error("io", str(exc))
        return EXIT_RUNTIME
    except OSError as exc:
        _error("io", str(exc))
        return EXIT_RUNTIME
    except (ValueError, ArithmeticError, RuntimeError, MemoryError) as exc:
        _error("numerical", f"{type(exc).__name__}: {exc}")
        return EXIT_RUNTIME
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Collapse rate across T0 from the near-pure canonical start, next to the bisected boundary."""
import argparse
from pathlib import Path

import numpy as np

from entropic_collapse.config import build_model, build_scenario, load_config
from entropic_collapse.ensemble import EnsembleSpec, run_ensemble
from entropic_collapse.models.two_level import instability_boundary

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "configs" / "criterion.ini"))
    ap.add_argument("--t0", default="1.0,1.3,1.42,1.46,1.6,2.0,3.0")
    ap.add_argument("--n-traj", type=int, default=200)
    args = ap.parse_args()

    base = load_config(args.config)
    print(f"# bisected boundary T0 = {instability_boundary(build_model(base)):.6g}")
    print("t0,event_rate")
    for t0 in map(float, args.t0.split(",")):
        cfg = base.replace(t0=t0, n_traj=args.n_traj)
        st = run_ensemble(build_scenario(cfg), EnsembleSpec(cfg.n_traj, cfg.master_seed,
                                                            ("events",)))
        print(f"{t0:g},{st.event_rate:.5g}")


if __name__ == "__main__":
    main()

"""Survival of the unstable level: exponential fit against the golden-rule lifetime."""
import argparse

from entropic_collapse.hilbert import CollapseParams
from entropic_collapse.models.decay import DecayModel, run_decay


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-band", type=int, default=200)
    ap.add_argument("--bandwidth", type=float, default=2.0)
    ap.add_argument("--couplings", default="0.003,0.004,0.005")
    ap.add_argument("--t0", type=float, default=1000.0)
    ap.add_argument("--gamma0", type=float, default=0.05)
    ap.add_argument("--n-traj", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()

    p = CollapseParams(args.t0, args.gamma0)
    print("coupling,tau_fit,r2,tau_tail_mle,tau_golden_rule,tau_flat_band")
    for v in map(float, args.couplings.split(",")):
        r = run_decay(DecayModel(args.n_band, args.bandwidth, v), p, args.n_traj, args.seed)
        print(f"{v:g},{r.fit.tau:.5g},{r.fit.r2:.4f},{r.tau_mle:.5g},"
              f"{r.tau_oracle:.5g},{r.tau_flat:.5g}")


if __name__ == "__main__":
    main()

"""Width of a collapsing packet: heating transient, then a stationary width.

The slope test uses only the last ``--window`` tau0 of the run.
"""
import argparse
import math

import numpy as np

from entropic_collapse.hilbert import CollapseParams
from entropic_collapse.models.wavepacket import (
    WavepacketModel,
    containment,
    energy_input,
    lambda0_max,
    run_wavepacket,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gamma0", type=float, default=10.0)
    ap.add_argument("--t-end", type=float, default=10.0)
    ap.add_argument("--window", type=float, default=50.0, help="test window in tau0")
    ap.add_argument("--n-traj", type=int, default=100)
    ap.add_argument("--seed", type=int, default=5)
    args = ap.parse_args()

    m = WavepacketModel(1.0, 512, 0.25, 1.0)
    p = CollapseParams(2 * math.pi, args.gamma0)
    paths = run_wavepacket(m, p, args.t_end, args.seed, sigma0=2.0, dt=0.005,
                           n_samples=101, n_traj=args.n_traj)
    lm = lambda0_max(m.mass, p.t0, p.tau0, m.hbar)
    t_min = max(0.0, args.t_end - args.window * p.tau0)
    c = containment(paths, lm.value, t_min=t_min)
    e, power = energy_input(paths, k_cap=np.mean(m.kinetic_spectrum) / 2)
    print("t,mean_width,mean_kinetic,mean_events")
    for i in range(0, len(paths.times), 10):
        print(f"{paths.times[i]:.3f},{paths.width[:, i].mean():.5f},"
              f"{paths.kinetic[:, i].mean():.4f},{paths.events[:, i].mean():.2f}")
    print(f"# window t >= {t_min:g}: slope {c.mean_slope:.3e} +- {c.slope_stderr:.2e}, "
          f"p = {c.p_value:.3f}, width / lambda0_max = {c.width_bound_ratio:.3f}")
    print(f"# energy per collapse {e:.3f}, power {power:.3f}, T0/tau0 = {p.t0 / p.tau0:.3f}")


if __name__ == "__main__":
    main()

"""Fit a zero-mean stochastic-volatility series and compare the posterior
with the generating parameters and log-variance path.

    python3 scripts/sv_recovery.py --seeds 7 8 9
"""

import argparse

import numpy as np

from bavart.sampler import ModelConfig, estimate
from bavart.simulate import sv_series


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[7])
    p.add_argument("--T", type=int, default=1000)
    p.add_argument("--c", type=float, default=-1.0)
    p.add_argument("--rho", type=float, default=0.95)
    p.add_argument("--sigma-h", type=float, default=0.2)
    p.add_argument("--sweeps", type=int, default=4000)
    args = p.parse_args()

    print("seed  param     truth     mean      sd   |z|")
    for seed in args.seeds:
        sim = sv_series(c=args.c, rho=args.rho, sigma_h=args.sigma_h, T=args.T, seed=seed)
        draws = estimate(sim.data, ModelConfig(n_trees=20, sweeps=args.sweeps, burn_in=args.sweeps // 4, seed=3))
        for name, x, truth in (("c", draws.c[:, 0], args.c), ("rho", draws.rho[:, 0], args.rho),
                               ("sigma_h", np.sqrt(draws.sigma2_h[:, 0]), args.sigma_h)):
            print(f"{seed:4d}  {name:8s} {truth:6.3f}  {x.mean():7.3f}  {x.std():6.3f}  "
                  f"{abs(x.mean() - truth) / x.std():4.2f}")
        corr = np.corrcoef(draws.h[:, 0].mean(axis=0), np.asarray(sim.truth["h"])[1:])[0, 1]
        print(f"{seed:4d}  corr(h_hat, h) = {corr:.3f}")


if __name__ == "__main__":
    main()

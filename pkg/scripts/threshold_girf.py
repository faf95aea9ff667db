"""Regime-dependent impulse responses on a simulated threshold VAR.

Conditions the GIRF on the in-sample dates with the lowest and highest
value of the switching variable and prints the posterior percentiles next
to the noise-free response of the true model.
"""

import argparse

import numpy as np

from bavart.girf import GirfSpec, girf
from bavart.sampler import ModelConfig, estimate
from bavart.simulate import threshold_var, threshold_var_mean


def true_response(truth: dict, y_last: np.ndarray, delta: float, horizon: int) -> np.ndarray:
    impact = np.asarray(truth["a0"])[:, 0] * delta
    y_s = y_b = y_last
    out = np.empty((horizon, len(y_last)))
    for s in range(horizon):
        y_b = threshold_var_mean(truth, y_b)[0]
        y_s = threshold_var_mean(truth, y_s)[0] + (impact if s == 0 else 0.0)
        out[s] = y_s - y_b
    return out


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--T", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int, default=6)
    args = p.parse_args()

    sim = threshold_var([[0.5, 0.0], [0.6, 0.3]], [[0.5, 0.0], [-0.6, 0.3]], a0=[[1.0, 0.0], [0.3, 1.0]],
                        sd=[1.0, 0.5], T=args.T, seed=args.seed)
    draws = estimate(sim.data, ModelConfig(n_trees=50, sweeps=400, burn_in=200, seed=1))
    y = sim.data.values
    for label, t in (("low", int(np.argmin(y[:, 0]))), ("high", int(np.argmax(y[:, 0])))):
        res = girf(draws, GirfSpec(shock=0, size="unit", horizon=args.horizon, history_end=t + 1))
        q16, q50, q84 = np.quantile(res.responses[:, :, 1], [0.16, 0.5, 0.84], axis=0)
        truth = true_response(sim.truth, y[t], 1.0, args.horizon)[:, 1]
        print(f"{label} regime (y1 = {y[t, 0]:+.2f}): response of y2 to a unit y1 shock")
        for s in range(args.horizon):
            print(f"  h={s}  true {truth[s]:+.3f}  median {q50[s]:+.3f}  [{q16[s]:+.3f}, {q84[s]:+.3f}]")


if __name__ == "__main__":
    main()

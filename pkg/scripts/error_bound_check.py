#!/usr/bin/env python3
"""Empirical check of the measurement-error bound for fitted f_b models.

For each seed: fit f_b on an NL-VAR training split, then on the test split
compare the measurement-space MSE with L^2 times the latent MSE, where L is
the largest Lipschitz constant of the inverse sensor maps.
"""

import argparse

from latentvar.evaluation import split_dataset
from latentvar.experiments import DatasetSpec, error_bound_terms
from latentvar.training import TrainConfig, train_formulation_b


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--t", type=int, default=1000)
    ap.add_argument("--lam", type=float, default=1e-3)
    args = ap.parse_args()
    print(f"{'seed':>4} {'meas MSE':>10} {'latent MSE':>11} {'L':>7} {'ratio':>7}")
    for s in range(args.seeds):
        data = DatasetSpec(t=args.t).build(s)
        tr, _, te = split_dataset(data, 4)
        fit = train_formulation_b(tr, TrainConfig(lam=args.lam, seed=s))
        meas, lat, L = error_bound_terms(fit.model, fit.standardizer.apply(te.z))
        print(f"{s:>4} {meas:>10.4f} {lat:>11.4f} {L:>7.3f} {meas / (L * L * lat):>7.3f}")


if __name__ == "__main__":
    main()

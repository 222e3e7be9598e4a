"""Lorenz-63: reconstruct the attractor and forecast, with and without noise.

Two bandwidths are compared. For each one the script fits the clean series
and a copy with unit measurement noise, prints the leading eigenvalues,
and forecasts the clean held-out trajectory from its observed windows.
The comparison baselines are persistence (the current observation) and
climatology (the training mean).

Run:  python demos/lorenz63_forecast.py [--n 3000]
"""

import argparse

import numpy as np

from kem.experiments import ExperimentConfig, evaluate_forecasts, make_dataset, probe_indices
from kem.model import fit

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--n", type=int, default=3000)
args = parser.parse_args()

horizons = [0, 5, 10, 25, 50]

for label, xi, decay, M in (("wide", 200.0, 0.01, 8), ("local", 2.0, 0.5, 20)):
    print(f"\n[{label}] xi={xi} gamma={decay}")
    for nu in (0.0, 1.0):
        cfg = ExperimentConfig.from_dict(
            {"n_pairs": args.n, "nu": nu, "bandwidth": xi, "decay": decay, "M_max": M,
             "horizons": horizons}, "lorenz63")
        data = make_dataset(cfg)
        model = fit(data.pairs, cfg.model_config())
        lam = model.basis.eigenvalues
        print(f"  nu={nu}: eigenvalues 1..6 {np.array2string(lam[1:7], precision=4)}")
        print(f"         (lambda3/lambda4) / (2 lambda4/lambda5) = "
              f"{(lam[3] / lam[4]) / (2 * lam[4] / lam[5]):.2f}")
        metrics, _ = evaluate_forecasts(model, data.test, data.test_clean,
                                        probe_indices(cfg, data.test), horizons)
        print("         steps ahead    rmse  persistence  climatology")
        for h in horizons:
            m = metrics[str(h)]
            print(f"         {h + 1:>11}  {m['rmse']:>6.2f}  {m['persistence_rmse']:>11.2f}"
                  f"  {m['climatology_rmse']:>11.2f}")

# The wide bandwidth gives the three-component spectrum, barely moves
# under noise, and beats persistence by a wide margin at short leads.
# Around 25 steps its clean-data forecasts fall behind the climatological
# mean and by 50 steps behind persistence too, while the noisy fit relaxes
# toward the mean and stays ahead of persistence. The local bandwidth has no inflection in its spectrum and loses to
# persistence at a one-step lead, more so under noise.

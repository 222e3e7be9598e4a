"""mess3: a nonunifilar source whose causal states fill a fractal triangle.

Only distributions over the three hidden states predict the future, and
those mixed states cover a Sierpinski-like gasket. Two coordinates carry
all of the structure; every further eigenvalue is at rounding level.

Run:  python demos/mess3_gasket.py [--n 10000] [--out coords.csv]
"""

import argparse

import numpy as np

from kem.discrete import cluster_states
from kem.experiments import ExperimentConfig, make_dataset
from kem.model import fit

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--n", type=int, default=10000)
parser.add_argument("--out", default=None, help="write (psi1, psi2) to this CSV")
args = parser.parse_args()

cfg = ExperimentConfig.from_dict({"n_pairs": args.n}, "mess3")
data = make_dataset(cfg)
# Ly=1 leaves only three distinct futures, which the few-futures path exploits.
model = fit(data.pairs, cfg.model_config())
lam = model.basis.spectrum
print(f"N={len(data.pairs)} fitted with the {model.info['method']} path")
print("eigenvalues 1..5:", np.array2string(lam[1:6], precision=6))
print(f"lambda2/lambda3 = {lam[2] / lam[3]:.3g}")

coords = model.basis.psi[:, 1:3]
labels = cluster_states(coords, cfg.radius, cfg.min_pts)
ids, counts = np.unique(labels[labels >= 0], return_counts=True)
main = ids[np.argsort(-counts)][:3]
centres = np.array([coords[labels == k].mean(axis=0) for k in main])
sides = [np.linalg.norm(centres[a] - centres[b]) for a, b in ((0, 1), (1, 2), (0, 2))]
print("\nthree corner clusters, sizes", sorted(counts.tolist(), reverse=True)[:3])
print("centroids:\n", np.array2string(centres, precision=4))
print(f"side lengths {np.round(sides, 4)}, max/min {max(sides) / min(sides):.4f}")
print(f"centre of the triangle {np.round(centres.mean(axis=0), 5)}")

if args.out:
    np.savetxt(args.out, coords, delimiter=",", header="psi1,psi2", comments="", fmt="%.10g")
    print(f"coordinates written to {args.out}")

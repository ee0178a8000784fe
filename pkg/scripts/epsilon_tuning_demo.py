"""Radius tuning demo.

Plants a known corruption fraction in Gaussian data, runs the curvature
tuner over a uniform epsilon grid, and prints the g-hat table so the elbow
is visible next to the chosen radius.

Usage:
    python scripts/epsilon_tuning_demo.py --fraction 0.1 --seed 0
"""

import argparse

import numpy as np

from owl.admm import AdmmConfig
from owl.bench import CorruptionPlan, UniformBox, corrupt
from owl.core import Dataset, ModelSpec, GAUSSIAN
from owl.engine import OwlConfig, tune_epsilon


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--d", type=int, default=5)
    ap.add_argument("--fraction", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--step", type=float, default=0.025)
    ap.add_argument("--stop", type=float, default=0.25)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    mean = rng.uniform(-10, 10, args.d)
    x = mean + rng.normal(0, 1, (args.n, args.d))
    plan = CorruptionPlan(args.fraction, UniformBox(-10, 10),
                          selector="random", seed=args.seed)
    data, _ = corrupt(Dataset(x), plan)

    grid = np.round(np.arange(args.step, args.stop + 1e-9, args.step), 6)
    # the curvature signal rides on second differences of g-hat, so the
    # solver noise must sit well below the grid-step scale
    cfg = OwlConfig(
        restarts=1,
        seed=args.seed,
        max_owl_iters=50,
        admm=AdmmConfig(primal_tol=1e-7, dual_tol=1e-7, max_iters=2000),
    )
    search = tune_epsilon(ModelSpec(GAUSSIAN), data, grid, cfg)

    print(f"planted fraction {args.fraction}  chosen epsilon {search.chosen:.4g}")
    print(f"{'epsilon':>8} {'g_hat':>10} {'smoothed':>10} {'curvature':>10}")
    for e, g, s, k in zip(search.grid, search.g_hat,
                          search.smoothed, search.curvature):
        mark = " <-- chosen" if e == search.chosen else ""
        print(f"{e:8.3f} {g:10.4f} {s:10.4f} {k:10.4f}{mark}")


if __name__ == "__main__":
    main()

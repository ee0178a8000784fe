"""Command line front end.

Subcommands: fit, tune, simulate, bootstrap, verify.  Outputs are JSON for
parameters and CSV for per-observation or per-grid tables; every file
embeds the exact run configuration (seed and library version included) so
a run can be replayed.  Exit codes: 0 ok, 2 bad arguments, 3 data errors,
4 fit failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from importlib.metadata import PackageNotFoundError, version as _pkg_version
from typing import Optional, Sequence

import numpy as np

from .admm import i_projection
from .bench import METHODS, SELECTORS, os_bootstrap, run_corruption_sweep, SCENARIOS
from .core import (
    Dataset,
    FAMILIES,
    ModelSpec,
    params_to_dict,
)
from .engine import (
    GAUSSIAN_KERNEL,
    INDICATOR_KERNEL,
    OwlConfig,
    choose_bandwidth,
    owl_fit,
    tune_epsilon,
)
from .verify import coarsened_likelihood_mc, okl_bruteforce

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_FIT = 4


def _version() -> str:
    try:
        return _pkg_version("owl")
    except PackageNotFoundError:
        return "0.0.0"


# --------------------------------------------------------------------- io


def read_dataset_csv(path: str, response: Optional[str] = None) -> Dataset:
    """Load a header-ed CSV into a Dataset; lines starting with # are skipped."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if len(rows) < 2:
        raise ValueError(f"{path}: need a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    try:
        body = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric cell ({exc})") from exc
    if body.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    if response is None:
        return Dataset(body)
    if response not in header:
        raise ValueError(f"{path}: no column named {response!r}")
    j = header.index(response)
    keep = [i for i in range(len(header)) if i != j]
    return Dataset(body[:, keep], response=body[:, j])


def write_dataset_csv(path: str, data: Dataset, response_name: str = "y") -> None:
    cols = [f"x{i}" for i in range(data.dim)]
    mat = data.points
    if data.response is not None:
        cols = cols + [response_name]
        mat = np.column_stack([data.points, data.response])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(cols)
        for row in mat:
            out.writerow([f"{v:.17g}" for v in row])


def _config_echo(args: argparse.Namespace, extra: Optional[dict] = None) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    cfg["version"] = _version()
    if extra:
        cfg.update(extra)
    return cfg


def _write_table(path: str, config: dict, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# config: " + json.dumps(config, sort_keys=True, default=str) + "\n")
        out = csv.writer(fh)
        out.writerow(list(header))
        for row in rows:
            out.writerow(
                [f"{v:.17g}" if isinstance(v, float) else v for v in row]
            )


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


# ------------------------------------------------------------- arg helpers


def _parse_grid(text: str) -> np.ndarray:
    """start:stop:step, stop included when it lands on the lattice."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError("grid must be start:stop:step")
    start, stop, step = (float(p) for p in parts)
    if step <= 0:
        raise ValueError("grid step must be positive")
    grid = np.arange(start, stop + 1e-9 * max(1.0, abs(step)), step)
    if grid.size == 0:
        raise ValueError("grid is empty")
    return grid


def _default_tune_grid() -> np.ndarray:
    return np.logspace(-4, -1, 50)


def _parse_floats(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",") if v.strip() != ""])


def _spec_from_args(args: argparse.Namespace) -> ModelSpec:
    return ModelSpec(
        family=args.model,
        k=getattr(args, "k", 1),
        ridge=getattr(args, "ridge", 0.0),
        cov_type=getattr(args, "cov_type", "full"),
    )


def _owl_config(args: argparse.Namespace, kernel: str = INDICATOR_KERNEL,
                bandwidth: Optional[float] = None) -> OwlConfig:
    return OwlConfig(
        restarts=getattr(args, "restarts", 5),
        seed=args.seed,
        kernel=kernel,
        bandwidth=bandwidth,
    )


# ------------------------------------------------------------ subcommands


def cmd_fit(args: argparse.Namespace) -> int:
    try:
        data = read_dataset_csv(args.data, response=args.response)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA

    try:
        spec = _spec_from_args(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    grid = None
    if args.tune:
        try:
            grid = _parse_grid(args.grid) if args.grid else _default_tune_grid()
            if grid.shape[0] < 5:
                raise ValueError("grid must contain at least 5 points")
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE

    os.makedirs(args.out, exist_ok=True)
    extra: dict = {}
    try:
        kernel = args.kernel
        bandwidth = None
        if kernel == GAUSSIAN_KERNEL:
            if args.bandwidth is None:
                print("error: --kernel gaussian requires --bandwidth", file=sys.stderr)
                return EXIT_USAGE
            if args.bandwidth == "auto":
                eps0 = args.epsilon if args.epsilon is not None else 0.05
                bandwidth, _, _ = choose_bandwidth(
                    spec, data, eps0, _owl_config(args)
                )
                extra["bandwidth_selected"] = bandwidth
            else:
                bandwidth = float(args.bandwidth)
        cfg = _owl_config(args, kernel=kernel, bandwidth=bandwidth)

        if args.tune:
            search = tune_epsilon(spec, data, grid, cfg)
            epsilon = search.chosen
            result = search.fits[search.chosen_index]
            extra["epsilon_selected"] = epsilon
            extra["no_kink"] = search.no_kink
            extra["grid_resolved"] = [float(v) for v in grid]
            config = _config_echo(args, extra)
            _write_table(
                os.path.join(args.out, "epsilon_search.csv"),
                config,
                ["epsilon", "g_hat", "smoothed", "curvature"],
                zip(search.grid, search.g_hat, search.smoothed, search.curvature),
            )
        else:
            epsilon = args.epsilon
            result = owl_fit(spec, data, epsilon, cfg)
            config = _config_echo(args, extra)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except np.linalg.LinAlgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT

    _write_json(
        os.path.join(args.out, "params.json"),
        {
            "config": config,
            "epsilon": epsilon,
            "value": result.value,
            "reason": result.trace.reason,
            "params": params_to_dict(result.params),
        },
    )
    scaled = result.weights.scaled()
    _write_table(
        os.path.join(args.out, "weights.csv"),
        config,
        ["index", "weight", "inlier"],
        ((i, float(scaled[i]), int(scaled[i] >= 1.0)) for i in range(scaled.shape[0])),
    )
    _write_table(
        os.path.join(args.out, "trace.csv"),
        config,
        ["iteration", "okl"],
        enumerate(result.trace.okl),
    )
    print(f"okl={result.value:.6g} epsilon={epsilon:g} reason={result.trace.reason}")
    return EXIT_OK


def cmd_tune(args: argparse.Namespace) -> int:
    try:
        data = read_dataset_csv(args.data, response=args.response)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        spec = _spec_from_args(args)
        grid = _parse_grid(args.grid) if args.grid else _default_tune_grid()
        if grid.shape[0] < 5:
            raise ValueError("grid must contain at least 5 points")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        search = tune_epsilon(spec, data, grid, _owl_config(args))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    os.makedirs(args.out, exist_ok=True)
    config = _config_echo(
        args,
        {
            "epsilon_selected": search.chosen,
            "no_kink": search.no_kink,
            "grid_resolved": [float(v) for v in grid],
        },
    )
    _write_table(
        os.path.join(args.out, "epsilon_search.csv"),
        config,
        ["epsilon", "g_hat", "smoothed", "curvature"],
        zip(search.grid, search.g_hat, search.smoothed, search.curvature),
    )
    print(f"epsilon={search.chosen:.6g}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        fractions = [float(v) for v in args.fractions.split(",")]
        methods = tuple(args.methods.split(","))
        rows = run_corruption_sweep(
            None,
            args.scenario,
            fractions,
            methods=methods,
            seeds=range(args.seeds),
            selector=args.selector,
            cfg=None if args.restarts is None else OwlConfig(restarts=args.restarts),
            n_override=args.n,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    config = _config_echo(args)
    _write_table(
        args.out,
        config,
        ["scenario", "fraction", "seed", "method", "epsilon", "metric", "okl"],
        (
            [
                r["scenario"],
                float(r["fraction"]),
                r["seed"],
                r["method"],
                float(r["epsilon"]),
                float(r["metric"]),
                float(r["okl"]),
            ]
            for r in rows
        ),
    )
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def cmd_bootstrap(args: argparse.Namespace) -> int:
    try:
        data = read_dataset_csv(args.data, response=args.response)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        spec = _spec_from_args(args)
        cfg = _owl_config(args)
        base = owl_fit(spec, data, args.epsilon, cfg)

        def refit(sample: Dataset):
            return owl_fit(spec, sample, args.epsilon, cfg).params

        res = os_bootstrap(
            data, base.weights, refit, m=args.m, level=args.level, seed=args.seed
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    config = _config_echo(args, {"ordinary_fallback": res.ordinary_fallback})
    _write_table(
        args.out,
        config,
        ["parameter", "lower", "upper"],
        (
            [nm, float(lo), float(hi)]
            for nm, lo, hi in zip(res.names, res.lower, res.upper)
        ),
    )
    print(f"wrote {len(res.names)} bands to {args.out}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    try:
        if args.p_theta is not None:
            p_theta = _parse_floats(args.p_theta)
        else:
            rng = np.random.default_rng(args.seed)
            p_theta = rng.dirichlet(np.ones(args.support))
        if args.p_hat is not None:
            p_hat = _parse_floats(args.p_hat)
        else:
            p_hat = np.full(args.support, 1.0 / args.support)
        if p_theta.shape != p_hat.shape or p_theta.shape[0] != args.support:
            raise ValueError("--p-theta/--p-hat must have --support entries")
        counts = np.round(p_hat * args.n).astype(int)
        if counts.sum() != args.n or np.any(np.abs(counts - p_hat * args.n) > 1e-9):
            raise ValueError("--p-hat times --n must be integral")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    okl, q = okl_bruteforce(p_hat, p_theta, args.eps, resolution=args.resolution)
    obs = np.repeat(np.arange(args.support), counts)
    mc = coarsened_likelihood_mc(
        p_theta, obs, args.eps, reps=args.reps, seed=args.seed
    )
    gap = abs(mc.log_lik_rate + okl) if not mc.zero_hits else float("inf")
    report = {
        "config": _config_echo(args),
        "okl_bruteforce": okl,
        "okl_argmin": [float(v) for v in q],
        "mc_log_lik_rate": mc.log_lik_rate,
        "mc_stderr": mc.stderr,
        "mc_hits": mc.hits,
        "mc_zero_hits": mc.zero_hits,
        "gap": gap,
    }
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        _write_json(args.out, report)
    print(f"mc_rate={mc.log_lik_rate:.6g} (se {mc.stderr:.2g})")
    print(f"okl={okl:.6g}")
    print(f"gap={gap:.6g}")
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="owl",
        description="Optimistically weighted likelihood estimation",
    )
    parser.add_argument("--version", action="version", version=_version())
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, with_data: bool = True) -> None:
        if with_data:
            p.add_argument("--data", required=True, help="CSV file with header")
            p.add_argument("--response", default=None, help="response column name")
            p.add_argument(
                "--model", required=True, choices=sorted(FAMILIES), help="model family"
            )
            p.add_argument("--k", type=int, default=1, help="mixture components")
            p.add_argument("--ridge", type=float, default=0.0)
            p.add_argument(
                "--cov-type",
                dest="cov_type",
                default="full",
                choices=["spherical", "diagonal", "full"],
            )
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--restarts", type=int, default=5)

    p_fit = sub.add_parser("fit", help="fit a model at a fixed or tuned radius")
    add_common(p_fit)
    p_fit.add_argument("--epsilon", type=float, default=None)
    p_fit.add_argument("--tune", action="store_true")
    p_fit.add_argument("--grid", default=None, help="start:stop:step for --tune")
    p_fit.add_argument(
        "--kernel", default=INDICATOR_KERNEL, choices=[INDICATOR_KERNEL, GAUSSIAN_KERNEL]
    )
    p_fit.add_argument("--bandwidth", default=None, help="'auto' or a float")
    p_fit.add_argument("--out", default=".", help="output directory")
    p_fit.set_defaults(func=cmd_fit)

    p_tune = sub.add_parser("tune", help="pick the radius by curvature of g(eps)")
    add_common(p_tune)
    p_tune.add_argument("--grid", default=None, help="start:stop:step")
    p_tune.add_argument("--out", default=".", help="output directory")
    p_tune.set_defaults(func=cmd_tune)

    p_sim = sub.add_parser("simulate", help="run a corruption sweep scenario")
    p_sim.add_argument("--scenario", required=True, choices=sorted(SCENARIOS))
    p_sim.add_argument("--fractions", default="0.0,0.05,0.1,0.2")
    p_sim.add_argument("--methods", default="mle,owl_known")
    p_sim.add_argument("--seeds", type=int, default=10, help="seeds 0..N-1")
    p_sim.add_argument("--selector", default=None, choices=list(SELECTORS))
    p_sim.add_argument("--n", type=int, default=None, help="override scenario n")
    p_sim.add_argument("--restarts", type=int, default=None)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", default="sweep.csv")
    p_sim.set_defaults(func=cmd_simulate)

    p_boot = sub.add_parser("bootstrap", help="outlier-stratified bootstrap bands")
    add_common(p_boot)
    p_boot.add_argument("--epsilon", type=float, required=True)
    p_boot.add_argument("--m", type=int, default=50, help="bootstrap replicates")
    p_boot.add_argument("--level", type=float, default=0.9)
    p_boot.add_argument("--out", default="bootstrap.csv")
    p_boot.set_defaults(func=cmd_bootstrap)

    p_ver = sub.add_parser(
        "verify", help="Monte Carlo rate vs brute-force OKL on a finite support"
    )
    p_ver.add_argument("--support", type=int, required=True)
    p_ver.add_argument("--n", type=int, required=True, help="sample size")
    p_ver.add_argument("--eps", type=float, required=True)
    p_ver.add_argument("--reps", type=int, default=200000)
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--p-theta", dest="p_theta", default=None)
    p_ver.add_argument("--p-hat", dest="p_hat", default=None)
    p_ver.add_argument("--resolution", type=float, default=1e-3)
    p_ver.add_argument("--out", default=None, help="optional JSON report path")
    p_ver.set_defaults(func=cmd_verify)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "fit" and not args.tune and args.epsilon is None:
        print("error: provide --epsilon or --tune", file=sys.stderr)
        print(parser.format_usage(), file=sys.stderr, end="")
        return EXIT_USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

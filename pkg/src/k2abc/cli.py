"""Command-line entry point: ``k2abc {simulate,infer,tune,eval,mmd}``.

Exit codes: 0 success, 2 configuration or input error, 3 inference error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .harness import ALGORITHMS, ConfigError, ExperimentConfig, build_model, observed_data, run_eval, run_experiment
from .inference import InferenceError
from .kernels import GaussianKernel, as_dataset, median_heuristic, sample_rff
from .mmd import MmdEstimator, kappa_epsilon
from .models import SimulationDivergence

EXIT_CONFIG = 2
EXIT_RUNTIME = 3

ESTIMATORS = {"quadratic": "quadratic_unbiased", "linear": "linear_cyclic", "rff": "random_features"}


def _config(args, **overrides) -> ExperimentConfig:
    try:
        d = io.read_json(args.config) if args.config else {}
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    if args.seed is not None:
        d["seed"] = args.seed
    if getattr(args, "algo", None):
        d["algorithm"] = args.algo
    if args.out is not None:
        d["out"] = args.out
    d.update(overrides)
    return ExperimentConfig.from_dict(d)


def _emit(rows):
    for k, v in rows:
        if isinstance(v, (list, tuple, np.ndarray)):
            v = ",".join(f"{x:.6g}" for x in v)
        elif isinstance(v, float):
            v = f"{v:.6g}"
        print(f"{k}\t{v}")


def cmd_simulate(args):
    cfg = _config(args)
    model = build_model(cfg)
    y, theta = observed_data(cfg, model)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    io.save_dataset(out / "simulated.csv", y)
    io.write_json(out / "simulated.json", {"config": cfg.to_dict(), "params": theta, "names": model.param_names})
    _emit([("file", str(out / "simulated.csv")), ("n", len(y)), ("params", theta)])


def _report_rows(report, out):
    rows = [("out", str(out)), ("posterior_mean", report.posterior_mean),
            ("epsilon", report.chosen_epsilon)]
    if report.kernel:
        rows.append(("gamma", report.kernel["gamma"]))
    if "ess" in report.diagnostics:
        rows.append(("ess", report.diagnostics["ess"]))
    if "acceptance_rate" in report.diagnostics:
        rows.append(("acceptance_rate", report.diagnostics["acceptance_rate"]))
    if report.posterior_error is not None:
        rows.append(("posterior_error", report.posterior_error))
    return rows


def cmd_infer(args):
    cfg = _config(args)
    eps = args.epsilon if args.epsilon is not None else cfg.epsilon_grid[0]
    cfg = _config(args, epsilon_grid=[eps], bandwidth_scales=cfg.bandwidth_scales[:1])
    report = run_experiment(cfg)
    _emit(_report_rows(report, cfg.out))


def cmd_tune(args):
    cfg = _config(args)
    report = run_experiment(cfg)
    print("epsilon\tbandwidth_scale\tscore")
    for r in report.scores:
        print(f"{r['epsilon']:.6g}\t{r['bandwidth_scale']:.6g}\t{r['score']:.6g}")
    _emit(_report_rows(report, cfg.out))


def cmd_eval(args):
    cfg = _config(args)
    algos = args.algos.split(",") if args.algos else None
    if algos and any(a not in ALGORITHMS for a in algos):
        raise ConfigError(f"--algos: entries must be among {ALGORITHMS}")
    results = run_eval(cfg, algos)
    print("algorithm\tepsilon\tmedian\tmean\tn_divergent")
    for algo, r in results.items():
        print(f"{algo}\t{r['epsilon']:.6g}\t{r['median']:.6g}\t{r['mean']:.6g}\t{r['n_divergent']}")


def cmd_mmd(args):
    x = as_dataset(io.load_dataset(args.x))
    y = as_dataset(io.load_dataset(args.y))
    gamma = median_heuristic(x) if args.gamma == "median" else float(args.gamma)
    kernel = GaussianKernel(gamma)
    variant = ESTIMATORS[args.estimator]
    if variant == "random_features":
        est = MmdEstimator(variant, sample_rff(kernel, x.shape[1], args.features, np.random.default_rng(args.seed or 0)))
    else:
        est = MmdEstimator(variant)
    value = est(x, y, kernel)
    rows = [("estimator", variant), ("gamma", gamma), ("mmd2", value)]
    if args.epsilon is not None:
        rows.append(("kappa", kappa_epsilon(value, args.epsilon)))
    _emit(rows)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="k2abc", description="ABC with kernel embeddings (K2-ABC) and baselines.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, algo=True):
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--seed", type=int, help="master seed (overrides config)")
        sp.add_argument("--out", help="output directory (overrides config)")
        if algo:
            sp.add_argument("--algo", choices=ALGORITHMS, help="algorithm (overrides config)")

    sp = sub.add_parser("simulate", help="generate a dataset from a model")
    common(sp, algo=False)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("infer", help="run one algorithm at fixed hyperparameters")
    common(sp)
    sp.add_argument("--epsilon", type=float, help="epsilon (default: first grid point)")
    sp.set_defaults(func=cmd_infer)

    sp = sub.add_parser("tune", help="grid-tune epsilon and bandwidth, then fit on all data")
    common(sp)
    sp.set_defaults(func=cmd_tune)

    sp = sub.add_parser("eval", help="summary-statistic error table across algorithms")
    common(sp)
    sp.add_argument("--algos", help="comma-separated algorithms (default: config eval_algorithms)")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("mmd", help="MMD^2 between two CSV datasets")
    sp.add_argument("x")
    sp.add_argument("y")
    sp.add_argument("--estimator", choices=sorted(ESTIMATORS), default="quadratic")
    sp.add_argument("--gamma", default="median", help="bandwidth or 'median' (of the first dataset)")
    sp.add_argument("--features", type=int, default=50)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--epsilon", type=float, help="also print exp(-MMD^2/epsilon)")
    sp.set_defaults(func=cmd_mmd)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, io.DataFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InferenceError, SimulationDivergence, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())

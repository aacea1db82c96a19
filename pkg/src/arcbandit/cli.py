"""Command line entry point: ``simulate``, ``oracle`` and ``sweep``.

Exit codes: 0 success, 2 configuration error, 3 too many numeric failures.
"""

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import harness, oracle
from .baselines import make_policy
from .errors import ConfigError, ConvergenceError, InvalidArgument

log = logging.getLogger("arcbandit")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
FULL_SCALE = {"n_arms": 50, "horizon": 2000, "replications": 1000}


def _range(text, with_step):
    parts = text.split(":")
    try:
        vals = [float(x) for x in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad range {text!r}") from None
    if len(vals) != (3 if with_step else 2):
        raise argparse.ArgumentTypeError(
            f"expected {'lo:hi:step' if with_step else 'lo:hi'}, got {text!r}")
    return vals


def _values(text):
    try:
        return [json.loads(x) for x in text.split(",")]
    except json.JSONDecodeError:
        raise argparse.ArgumentTypeError(f"bad value list {text!r}") from None


def build_parser():
    parser = argparse.ArgumentParser(prog="arcbandit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a regret experiment")
    sim.add_argument("--config", required=True)
    sim.add_argument("--reps", type=int)
    sim.add_argument("--horizon", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out", default="results")
    sim.add_argument("--workers", type=int)
    sim.add_argument("--paper-scale", action="store_true",
                     help="50 arms, T=2000, 1000 replications (slow)")

    orc = sub.add_parser("oracle", help="compare ARC with the numerical 1.5-arm solution")
    orc.add_argument("--lambda", dest="lam", type=float, default=0.1)
    orc.add_argument("--beta", type=float, default=0.99)
    orc.add_argument("--mc", type=int, default=1000)
    orc.add_argument("--grid-m", type=lambda s: _range(s, True), default=[0.0, 2.0, 0.02])
    orc.add_argument("--grid-d", type=lambda s: _range(s, False), default=[0.01, 0.05])
    orc.add_argument("--seed", type=int, default=0)
    orc.add_argument("--tol", type=float, default=1e-6)
    orc.add_argument("--max-iters", type=int, default=10_000)
    orc.add_argument("--method", choices=("layered", "jacobi"), default="layered")
    orc.add_argument("--out", default="oracle_out")

    swp = sub.add_parser("sweep", help="one experiment with a parameter swept per policy")
    swp.add_argument("--config", required=True)
    swp.add_argument("--param", required=True)
    swp.add_argument("--values", required=True, type=_values)
    swp.add_argument("--reps", type=int)
    swp.add_argument("--horizon", type=int)
    swp.add_argument("--seed", type=int)
    swp.add_argument("--out", default="sweep")
    swp.add_argument("--workers", type=int)
    return parser


def _apply_overrides(config, args):
    changes = {}
    if getattr(args, "paper_scale", False):
        log.warning("full-scale run requested: %s; this takes many hours", FULL_SCALE)
        env = dict(config.env.to_dict(), n_arms=FULL_SCALE["n_arms"])
        env.pop("loadings", None)
        env.pop("trials", None)
        changes.update(env=harness.EnvironmentSpec.from_dict(env),
                       horizon=FULL_SCALE["horizon"],
                       replications=FULL_SCALE["replications"])
    if args.reps is not None:
        changes["replications"] = args.reps
    if args.horizon is not None:
        changes["horizon"] = args.horizon
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.workers is not None:
        changes["workers"] = args.workers
    changes["output"] = args.out
    return config.replace(**changes)


def _progress(done, total):
    if done == total or done % max(total // 10, 1) == 0:
        log.info("%d/%d replications", done, total)


def _finish(summary, manifest, out):
    print(json.dumps({"output": out, "failures": summary.failures,
                      "mean_final_regret": summary.mean_final_regret()}, indent=2))
    if summary.failure_rate > harness.FAILURE_LIMIT:
        log.error("numeric failure rate %.2f%% exceeds %.0f%%", 100 * summary.failure_rate,
                  100 * harness.FAILURE_LIMIT)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_simulate(args):
    config = _apply_overrides(harness.load_config(args.config), args)
    summary, manifest = harness.simulate(config, path=args.out, progress=_progress)
    return _finish(summary, manifest, args.out)


def cmd_sweep(args):
    config = harness.load_config(args.config)
    policies, labels = [], []
    for label, pol in zip(config.labels, config.policies):
        params = pol.to_dict()
        if args.param not in params:
            policies.append(pol)
            labels.append(label)
            continue
        for value in args.values:
            try:
                policies.append(make_policy(dict(params, **{args.param: value})))
            except InvalidArgument as exc:
                raise ConfigError(str(exc)) from exc
            labels.append(f"{label}[{args.param}={value}]")
    if len(labels) == len(config.labels):
        raise ConfigError(f"no policy in the config has a parameter {args.param!r}")
    config = config.replace(policies=tuple(policies), labels=tuple(labels))
    config = _apply_overrides(config, args)
    summary, manifest = harness.simulate(config, path=args.out, progress=_progress)
    return _finish(summary, manifest, args.out)


def cmd_oracle(args):
    m_lo, m_hi, m_step = args.grid_m
    d_lo, d_hi = args.grid_d
    try:
        grid = oracle.GridSpec(m_lo=m_lo, m_hi=m_hi, m_step=m_step, d_lo=d_lo, d_hi=d_hi)
    except InvalidArgument as exc:
        raise ConfigError(str(exc)) from exc
    start = time.perf_counter()
    try:
        vg = oracle.value_iterate(grid, lam=args.lam, beta=args.beta, mc_samples=args.mc,
                                  rng=np.random.default_rng(args.seed), tol=args.tol,
                                  max_iters=args.max_iters, method=args.method)
    except ConvergenceError as exc:
        log.error("%s (sup_delta=%.3g)", exc, exc.sup_delta)
        return EXIT_NUMERIC
    rows, summary = oracle.compare_grid(vg)
    summary["wall_clock_seconds"] = time.perf_counter() - start
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "comparison.csv"), "w") as fh:
        fh.write(",".join(oracle.REPORT_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(format(x, ".17g") for x in row) + "\n")
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "oracle": cmd_oracle, "sweep": cmd_sweep}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, InvalidArgument) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

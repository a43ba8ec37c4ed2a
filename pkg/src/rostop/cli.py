"""Command-line entry points and flat key=value config parsing.

Subcommands: simulate, build, solve, evaluate, pipeline, export-milp,
selftest.  Exit codes: 0 success, 1 usage or runtime error, 2 solver refusal
(enumeration cap).  Errors go to stderr as a single line prefixed with
"rostop: error:".  CSV is the sole interchange format (headers mandatory,
UTF-8, '.' decimal); identifiers in files are 1-based.  The --threads flag
(or ROSTOP_THREADS) bounds the pipeline's epsilon-sweep parallelism.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from typing import IO, Dict, Optional, Sequence, Union

import numpy as np

from . import selftest as _selftest
from .core import (IdentityReward, SigmaPolicy, evaluate_policy,
                   materialize_policy, reward_matrix)
from .errors import (BudgetExhaustedError, ConfigError, EnumerationCapError,
                     ParameterError, RostopError)
from .exact import export_milp, solve_bnb, solve_enumeration
from .heuristic import solve_heuristic
from .instance import build_instance, load_instance, save_instance
from .pipeline import PipelineConfig, run_pipeline, simulate_process
from .scenarios import (BumpParams, GbmBarrierParams, ThreePointParams,
                        UniformParams, read_paths_csv, read_rewards_csv,
                        write_paths_csv, write_rewards_csv)

__all__ = ["main", "entrypoint", "parse_config", "parse_grid"]


class _UsageError(RostopError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def parse_config(source: Union[str, IO[str]]) -> Dict[str, str]:
    """Flat key=value file: blank lines and '#' comments ignored."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key, value = key.strip(), value.strip()
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def parse_grid(text: str) -> tuple:
    """Comma list of floats, or an inclusive start:step:stop range."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError("range grids use start:step:stop")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise ConfigError("grid step must be positive")
        count = int(round((stop - start) / step)) + 1
        return tuple(round(start + k * step, 12) for k in range(count))
    return tuple(float(p) for p in text.split(","))


def _take(cfg: Dict[str, str], key: str, conv, default=None, required=False):
    if key in cfg:
        return conv(cfg.pop(key))
    if required:
        raise ConfigError(f"missing config key {key!r}")
    return default


def _reject_unknown(cfg: Dict[str, str]) -> None:
    if cfg:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(cfg))}")


def _process_from_config(process: str, cfg: Dict[str, str], seed: int):
    if process == "bump":
        params = BumpParams(
            horizon=_take(cfg, "horizon", int, required=True),
            duration=_take(cfg, "delta", int, required=True),
            seed=seed,
        )
    elif process == "gbm":
        assets = _take(cfg, "assets", int, required=True)
        vol = _take(cfg, "volatility", str, required=True)
        sigma = tuple(float(v) for v in vol.split(","))
        if len(sigma) == 1:
            sigma = sigma * assets
        rho_off = _take(cfg, "rho", float, default=None)
        correlation = None
        if rho_off is not None:
            correlation = np.full((assets, assets), rho_off)
            np.fill_diagonal(correlation, 1.0)
        params = GbmBarrierParams(
            assets=assets,
            horizon=_take(cfg, "horizon", int, required=True),
            years=_take(cfg, "years", float, required=True),
            rate=_take(cfg, "rate", float, required=True),
            strike=_take(cfg, "strike", float, required=True),
            barrier_base=_take(cfg, "barrier_base", float, required=True),
            barrier_growth=_take(cfg, "barrier_growth", float, required=True),
            initial_price=_take(cfg, "initial_price", float, required=True),
            sigma=sigma,
            correlation=correlation,
            noise_scaling=_take(cfg, "noise_scaling", str, default="lambda"),
            seed=seed,
        )
    elif process == "threepoint":
        params = ThreePointParams(seed=seed)
    elif process == "uniform":
        params = UniformParams(horizon=_take(cfg, "horizon", int, required=True),
                               seed=seed)
    else:
        raise ConfigError(f"unknown process {process!r}")
    _reject_unknown(cfg)
    return params


def _read_sigma_csv(path: str) -> SigmaPolicy:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["path_id", "sigma"]:
            raise ParameterError("sigma CSV must start with path_id,sigma")
        rows = [(int(r[0]), int(r[1])) for r in reader]
    sigma = np.zeros(max(r[0] for r in rows), dtype=np.int64)
    for i, s in rows:
        sigma[i - 1] = s
    return SigmaPolicy(sigma)


def _write_sigma_csv(policy: SigmaPolicy, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path_id", "sigma"])
        for i, s in enumerate(policy.sigma, 1):
            writer.writerow([i, int(s)])


def _cmd_simulate(args) -> int:
    cfg = parse_config(args.config) if args.config else {}
    params = _process_from_config(args.process, cfg, args.seed)
    paths, rewards = simulate_process(params, args.n)
    write_paths_csv(paths, args.out)
    if args.rewards_out:
        write_rewards_csv(rewards, args.rewards_out)
    print(f"wrote {paths.n_paths} paths x {paths.horizon} periods to {args.out}")
    return 0


def _cmd_build(args) -> int:
    paths = read_paths_csv(args.paths)
    rewards = read_rewards_csv(args.rewards)
    instance = build_instance(paths.states, rewards, args.epsilon)
    save_instance(instance, args.out)
    print(f"wrote instance N={instance.n_paths} T={instance.horizon} "
          f"epsilon={instance.epsilon} to {args.out}")
    return 0


_METHODS = {"heuristic": None, "bnb": None, "enum": None}


def _cmd_solve(args) -> int:
    instance = load_instance(args.instance)
    t0 = time.perf_counter()
    extra = ""
    if args.method == "enum":
        sol = solve_enumeration(instance)
        sigma, objective = sol.sigma, sol.value
    elif args.method == "bnb":
        sol = solve_bnb(instance, budget=args.budget)
        sigma, objective = sol.sigma, sol.value
        if not sol.proved_optimal:
            extra = "\nproved_optimal=false"
    else:
        sol = solve_heuristic(instance)
        sigma, objective = sol.sigma, sol.ip_value
        extra = f"\nsurrogate={sol.hbar_value!r}"
    seconds = time.perf_counter() - t0
    if args.out:
        _write_sigma_csv(sigma, args.out)
    body = ",".join(str(int(s)) for s in sigma.sigma)
    print(f"sigma=({body})\nobjective={objective!r}{extra}\nseconds={seconds:.6f}")
    return 0


def _cmd_evaluate(args) -> int:
    instance = load_instance(args.instance)
    policy = _read_sigma_csv(args.sigma)
    rule = materialize_policy(instance, policy)
    test = read_paths_csv(args.test)
    if args.test_rewards:
        rewards = read_rewards_csv(args.test_rewards)
    else:
        rewards = reward_matrix(test, IdentityReward())
    est = evaluate_policy(rule, test, rewards)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["mean", "std_error", "n"])
        writer.writerow([repr(est.mean), repr(est.std_error), est.n])
    print(f"mean={est.mean!r} std_error={est.std_error!r} n={est.n}")
    return 0


def _cmd_pipeline(args) -> int:
    cfg = parse_config(args.config)
    process_name = _take(cfg, "process", str, required=True)
    seed = _take(cfg, "seed", int, default=0)
    pipeline_keys = {
        "training_sizes": _take(cfg, "training_sizes", str, required=True),
        "n_validation": _take(cfg, "n_validation", int, required=True),
        "n_test": _take(cfg, "n_test", int, required=True),
        "epsilon_grid": _take(cfg, "epsilon_grid", str, required=True),
        "solver": _take(cfg, "solver", str, default="heuristic"),
        "budget_seconds": _take(cfg, "budget_seconds", float, default=None),
        "threads": _take(cfg, "threads", int, default=args.threads),
    }
    process = _process_from_config(process_name, cfg, seed)
    config = PipelineConfig(
        process=process,
        training_sizes=tuple(int(v) for v in
                             pipeline_keys["training_sizes"].split(",")),
        n_validation=pipeline_keys["n_validation"],
        n_test=pipeline_keys["n_test"],
        epsilon_grid=parse_grid(pipeline_keys["epsilon_grid"]),
        solver=pipeline_keys["solver"],
        seed=seed,
        budget_seconds=pipeline_keys["budget_seconds"],
        threads=pipeline_keys["threads"],
    )
    report = run_pipeline(config)
    report.to_csv(args.out)
    if args.plot_prefix:
        report.write_plot_data(args.plot_prefix + "_mean_vs_n.csv",
                               args.plot_prefix + "_epsilon_vs_n.csv")
    sys.stdout.write(report.summary())
    return 0


def _cmd_export_milp(args) -> int:
    instance = load_instance(args.instance)
    export_milp(instance, args.out)
    print(f"wrote MILP model to {args.out}")
    return 0


def _cmd_selftest(args) -> int:
    return _selftest.run(verbose=True)


def _build_parser() -> _Parser:
    parser = _Parser(prog="rostop", description=__doc__)
    parser.add_argument("--threads", type=int,
                        default=int(os.environ.get("ROSTOP_THREADS",
                                                   os.cpu_count() or 1)),
                        help="parallelism for the pipeline epsilon sweep")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate sample paths to CSV")
    p.add_argument("--process", required=True,
                   choices=["bump", "gbm", "threepoint", "uniform"])
    p.add_argument("--config", help="key=value file with process parameters")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--rewards-out", help="also write the reward matrix CSV")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("build", help="build a solver instance from CSVs")
    p.add_argument("--paths", required=True)
    p.add_argument("--rewards", required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build)

    p = sub.add_parser("solve", help="solve an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--method", required=True, choices=sorted(_METHODS))
    p.add_argument("--budget", type=int,
                   help="node limit for bnb; exhausting it returns the best "
                        "incumbent unproved")
    p.add_argument("--out", help="sigma CSV output")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("evaluate", help="score a sigma policy on test paths")
    p.add_argument("--instance", required=True)
    p.add_argument("--sigma", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--test-rewards",
                   help="rewards CSV for the test paths (default: identity)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("pipeline", help="run the full selection pipeline")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--plot-prefix", help="also write plot-data CSVs")
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("export-milp", help="write the MILP model in LP format")
    p.add_argument("--instance", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_milp)

    p = sub.add_parser("selftest", help="run the built-in property suites")
    p.set_defaults(func=_cmd_selftest)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"rostop: error: {exc}", file=sys.stderr)
        return 1
    except EnumerationCapError as exc:
        print(f"rostop: error: {exc}", file=sys.stderr)
        return 2
    except BudgetExhaustedError as exc:
        print(f"rostop: error: {exc}", file=sys.stderr)
        return 1
    except (RostopError, OSError, ValueError) as exc:
        print(f"rostop: error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))

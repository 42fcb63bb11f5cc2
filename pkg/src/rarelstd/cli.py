"""Command-line interface: ``rarelstd <command> [options]``.

Exit status is 0 on success, 2 for invalid configuration and 3 for
numerical failures (singular systems, non-convergence, unfinished paths).
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__, io
from .errors import ConfigError, NumericalError
from .estimators import empirical_kernels, lstd_solve, mc_estimate
from .exact import mc_relative_avar, solve_value
from .experiments import EXPERIMENTS, ExperimentConfig, diagnostics_rows, run_experiment
from .mrp import ChainSpec, Family, build_chain, mfpt_reward, with_quantity
from .sampler import DEFAULT_CAP, TrajectoryDataset, sample_dataset, sample_until_escape
from .variance import avar_bound, fit_assumption_constants, sigma_asymptotic, theorem2_check

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _chain_args(p, many_n=False):
    if many_n:
        p.add_argument("--n", type=int, nargs="+", help="chain sizes")
    else:
        p.add_argument("--n", type=int, default=20, help="number of states (default 20)")
    p.add_argument("--lazy", action="store_true", help="use the lazy bistable chain")
    p.add_argument("--mu", choices=["uniform", "invariant"], default=None,
                   help="initial distribution on D (default uniform)")
    p.add_argument("--quantity", choices=["mfpt", "committor"], default="committor")
    p.add_argument("--tau", type=int, default=1, help="lag time (default 1)")
    p.add_argument("--out", help="output file (directory for build-chain/experiment)")
    p.add_argument("--config", help="chain config file with key=value lines "
                   "(a JSON object of experiment fields for experiment)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rarelstd",
        description="LSTD and Monte Carlo estimation for absorbing Markov reward processes.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-chain", help="write P, R and mu of a benchmark chain")
    _chain_args(p)

    p = sub.add_parser("exact", help="exact value function")
    _chain_args(p)

    p = sub.add_parser("sample", help="sample a trajectory dataset")
    _chain_args(p)
    p.add_argument("--m", type=int, required=True, help="number of trajectories")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--until-escape", action="store_true",
                   help="run paths until they leave D (Monte Carlo data)")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP, help="step cap for --until-escape")
    p.add_argument("--force", action="store_true", help="accept a cap below 10 E_mu[T]")

    p = sub.add_parser("estimate", help="LSTD or MC estimate from a dataset file")
    _chain_args(p)
    p.add_argument("--data", required=True, help="dataset written by 'sample'")

    p = sub.add_parser("variance", help="exact asymptotic variances")
    _chain_args(p)

    p = sub.add_parser("bound", help="relative-variance bounds and assumption constants")
    _chain_args(p)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--c-threshold", type=float, default=1 / (2 * (1 + math.e)))

    p = sub.add_parser("diagnose", help="quasi-stationary and closed-form diagnostics")
    _chain_args(p)
    p.add_argument("--taus", type=int, nargs="+", default=[1, 5])

    p = sub.add_parser("experiment", help="run a named experiment")
    p.add_argument("name", choices=EXPERIMENTS)
    _chain_args(p, many_n=True)
    p.set_defaults(tau=None, quantity=None)
    p.add_argument("--tau-range", type=int, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--m", help="M rule, an expression in n (default 10*n**3)")
    p.add_argument("--replicas", type=int)
    p.add_argument("--mc-replicas", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--c-threshold", type=float)
    p.add_argument("--n-jobs", type=int)
    p.add_argument("--both", action="store_true", help="run both quantities")
    return parser


def _spec(args):
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            spec = ChainSpec.from_config(fh.read())
        if args.mu:
            spec = ChainSpec(spec.family, spec.n, spec.laziness_denominator, args.mu)
        return spec
    family = Family.LAZY_BISTABLE if args.lazy else Family.BISTABLE
    return ChainSpec(family, args.n, mu_mode=args.mu or "uniform")


def _mrp(args):
    return with_quantity(build_chain(_spec(args)), args.quantity)


def _emit(args, writer, *a, **kw):
    """Run ``writer`` into the ``--out`` file or stdout."""
    writer(args.out or sys.stdout, *a, **kw)


def _echo(args, **more):
    d = {k: v for k, v in vars(args).items() if k not in ("out", "func")}
    d.update(more)
    return d


def cmd_build_chain(args):
    spec = _spec(args)
    mrp = with_quantity(build_chain(spec), args.quantity)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "chain.cfg"), "w", encoding="utf-8") as fh:
        fh.write(spec.to_config())
    io.write_matrix(os.path.join(out, "P.csv"), mrp.P, config=_echo(args))
    io.write_csv(
        os.path.join(out, "states.csv"),
        [("state", "state index (0-based)"), ("R", "reward"), ("mu", "initial distribution"),
         ("in_D", "1 if the state is not absorbing")],
        zip(range(mrp.n), mrp.R, mrp.mu, mrp.in_D), config=_echo(args),
    )


def cmd_exact(args):
    mrp = _mrp(args)
    u = solve_value(mrp, args.tau, args.quantity).u
    _emit(args, io.write_value, u, config=_echo(args))


def cmd_sample(args):
    mrp = _mrp(args)
    if args.until_escape:
        mean_T = float(mrp.mu @ solve_value(mrp.with_reward(mfpt_reward(mrp.n, mrp.D))).u)
        if args.cap < 10 * mean_T and not args.force:
            raise ConfigError(
                f"cap {args.cap} is below 10 E_mu[T] = {10 * mean_T:.4g}; use --force to override"
            )
        ds = sample_until_escape(mrp, args.m, args.seed, cap=args.cap)
    else:
        ds = sample_dataset(mrp, args.m, args.tau, args.seed)
    text = ds.to_text()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_estimate(args):
    mrp = _mrp(args)
    with open(args.data, encoding="utf-8") as fh:
        ds = TrajectoryDataset.from_text(fh.read(), mrp.D)
    if ds.n != mrp.n:
        raise ConfigError(f"dataset has n={ds.n}, chain has n={mrp.n}")
    if ds.tau is None:
        res = mc_estimate(ds, mrp)
        method = "mc"
    else:
        res = lstd_solve(empirical_kernels(ds, args.tau), mrp, args.tau)
        method = "lstd"
    _emit(args, io.write_estimate, res, mrp.n, config=_echo(args),
          seed=ds.master_seed, extra={"method": method, "M": ds.M})
    if not res.ok:
        print(f"estimator undefined: {res.failure.value}", file=sys.stderr)


def cmd_variance(args):
    mrp = _mrp(args)
    rep = sigma_asymptotic(mrp, args.tau)
    _emit(args, io.write_variance, rep, config=_echo(args),
          extra={"max_rel_avar": rep.max_rel_avar(mrp.D),
                 "mc_max_rel_avar": float(mc_relative_avar(mrp)[list(mrp.D)].max())})


def cmd_bound(args):
    mrp = _mrp(args)
    zero = not np.any(mrp.R[list(mrp.D)])
    report = fit_assumption_constants(mrp, args.tau, c=args.c_threshold, beta=args.beta)
    var = sigma_asymptotic(mrp, args.tau)
    holds, margin = theorem2_check(mrp, args.tau, report, var)
    rows = [
        ("max_rel_avar", var.max_rel_avar(mrp.D)),
        ("avar_bound", avar_bound(mrp, args.tau, zero_reward_in_D=zero)),
        ("zero_reward_in_D", zero),
    ] + io.assumption_rows(report) + [
        ("theorem2_holds", holds),
        ("theorem2_margin", margin),
    ]
    _emit(args, io.write_scalars, rows, config=_echo(args))


def cmd_diagnose(args):
    mrp = _mrp(args)
    _emit(args, io.write_scalars, diagnostics_rows(mrp, mrp.n, args.taus), config=_echo(args))


def experiment_config(args):
    fields = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            fields.update(json.load(fh))
    fields["experiment"] = args.name
    flag_map = {
        "n": "n_list", "tau": "tau", "tau_range": "tau_range", "m": "m_rule",
        "replicas": "replicas", "mc_replicas": "mc_replicas", "seed": "master_seed",
        "beta": "beta", "c_threshold": "c", "n_jobs": "n_jobs", "mu": "mu", "out": "output_dir",
    }
    for flag, name in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            fields[name] = value
    if args.lazy:
        fields["lazy"] = True
    if args.both:
        fields["quantities"] = ["mfpt", "committor"]
    elif args.quantity:
        fields["quantities"] = [args.quantity]
    try:
        return ExperimentConfig(**fields)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def cmd_experiment(args):
    cfg = experiment_config(args)
    run_experiment(cfg)
    print(f"wrote {os.path.join(cfg.output_dir, cfg.experiment)}")


COMMANDS = {
    "build-chain": cmd_build_chain,
    "exact": cmd_exact,
    "sample": cmd_sample,
    "estimate": cmd_estimate,
    "variance": cmd_variance,
    "bound": cmd_bound,
    "diagnose": cmd_diagnose,
    "experiment": cmd_experiment,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ZeroDivisionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())

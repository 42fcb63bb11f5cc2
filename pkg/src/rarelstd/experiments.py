"""Desk-scale reproductions of the benchmark experiments.

Each runner takes an :class:`ExperimentConfig`, writes CSV files below
``output_dir/<experiment>/n<n>/`` and returns the tables it wrote.  Replica
``r`` of a run uses the seed ``derive_seed(master_seed, r)``, so results do
not depend on ``n_jobs`` or scheduling.
"""

import ast
import dataclasses
import math
import operator
import os
from dataclasses import dataclass, field

import numpy as np

from . import io
from .errors import ConfigError
from .estimators import FailureKind, empirical_kernels, lstd_solve, mc_estimate
from .exact import (
    committor_u2_closed_form,
    mc_relative_avar,
    mfpt_midpoint_closed_form,
    quasi_stationary_report,
    solve_value,
    spectral_gap_bound,
)
from .mrp import ChainSpec, Family, build_chain, with_quantity
from .sampler import derive_seed, sample_dataset, sample_initial_states, sample_until_escape
from .variance import avar_bound, sigma_asymptotic

EXPERIMENTS = ("fig-mfpt", "fig-committor", "lag-sweep", "invariant-mu", "diagnostics", "custom")
QUANTITIES = ("mfpt", "committor")

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.FloorDiv: operator.floordiv,
    ast.Pow: operator.pow,
}


def eval_m_rule(rule, n):
    """Evaluate an arithmetic expression in ``n`` such as ``"10*n**3"``.

    Only numbers, the name ``n``, ``+ - * / // **`` and parentheses are
    accepted.  The result is rounded to the nearest integer.
    """

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return node.value
        if isinstance(node, ast.Name) and node.id == "n":
            return n
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
            v = ev(node.operand)
            return v if isinstance(node.op, ast.UAdd) else -v
        raise ConfigError(f"unsupported element in M rule {rule!r}")

    try:
        tree = ast.parse(str(rule), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse M rule {rule!r}: {exc.msg}") from None
    M = int(round(ev(tree)))
    if M < 1:
        raise ConfigError(f"M rule {rule!r} gives M={M} for n={n}")
    return M


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings of one experiment run.

    ``tau_range`` is only read by the lag sweep (inclusive bounds).
    ``quantities`` defaults to the one named by a ``fig-*`` experiment and to
    both otherwise.  ``mc_replicas`` > 0 adds an empirical Monte Carlo MSE
    column for ``n < 40`` (long escape times make it impractical beyond).
    """

    experiment: str = "fig-committor"
    n_list: tuple = (20, 40, 80)
    tau: int = 1
    tau_range: tuple = (1, 120)
    m_rule: str = "10*n**3"
    replicas: int = 2000
    master_seed: int = 0
    output_dir: str = "out"
    quantities: tuple = None
    mu: str = "uniform"
    lazy: bool = False
    beta: float = 0.5
    c: float = 1 / (2 * (1 + math.e))
    diag_taus: tuple = (1, 5)
    gap_n_list: tuple = (80, 160)
    mc_replicas: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("n_list", tuple(int(n) for n in self.n_list))
        set_("tau_range", tuple(int(t) for t in self.tau_range))
        if self.quantities is None:
            default = {"fig-mfpt": ("mfpt",), "fig-committor": ("committor",)}
            set_("quantities", default.get(self.experiment, QUANTITIES))
        set_("quantities", tuple(self.quantities))
        if self.experiment == "invariant-mu":
            set_("mu", "invariant")
        if self.experiment == "lag-sweep":
            set_("lazy", True)
        if any(q not in QUANTITIES for q in self.quantities):
            raise ConfigError(f"quantities must be among {QUANTITIES}")
        if self.replicas < 1:
            raise ConfigError("replicas must be at least 1")
        if not self.n_list or min(self.n_list) < 4:
            raise ConfigError("n_list entries must be at least 4")
        if self.tau < 1 or len(self.tau_range) != 2 or not 1 <= self.tau_range[0] <= self.tau_range[1]:
            raise ConfigError("tau and tau_range must be positive and ordered")
        if self.mu not in ("uniform", "invariant"):
            raise ConfigError("mu must be 'uniform' or 'invariant'")
        if not self.beta > 0 or not 0 < self.c <= 1:
            raise ConfigError("beta must be positive and c in (0, 1]")
        eval_m_rule(self.m_rule, self.n_list[0])

    def echo(self):
        """Fields that affect results (no output path or worker count)."""
        d = dataclasses.asdict(self)
        d.pop("output_dir")
        d.pop("n_jobs")
        return d

    def chain(self, n, quantity):
        family = Family.LAZY_BISTABLE if self.lazy else Family.BISTABLE
        return with_quantity(build_chain(ChainSpec(family, n, mu_mode=self.mu)), quantity)

    def path(self, n, name):
        return os.path.join(self.output_dir, self.experiment, f"n{n}", name)


@dataclass
class MseTable:
    """Per-state exact values and replica statistics for one chain and quantity."""

    n: int
    quantity: str
    tau: int
    M: int
    replicas: int
    states: np.ndarray
    exact_u: np.ndarray
    rel_avar: np.ndarray
    empirical_rel_mse: np.ndarray
    failure_rate: float
    failures: dict = field(default_factory=dict)

    def within(self, lo, hi):
        """Fraction of states whose empirical/exact ratio lies in ``[lo, hi]``."""
        ratio = self.empirical_rel_mse / self.rel_avar
        return float(np.mean((ratio >= lo) & (ratio <= hi)))


def lstd_replica(mrp_by_q, M, tau, seed):
    """One replica: sample a dataset and solve LSTD for every quantity.

    Returns ``(estimates, kind)`` where ``estimates`` has one row per quantity
    over ``D`` (``nan`` on failure).  Coverage of ``D`` is checked on the
    initial states before any transition is drawn.
    """
    mrps = list(mrp_by_q)
    base = mrps[0]
    D = list(base.D)
    out = np.full((len(mrps), len(D)), np.nan)
    initial = sample_initial_states(base, M, seed)
    if np.any(np.bincount(initial[0], minlength=base.n)[D] == 0):
        return out, FailureKind.UNDEFINED_STATES.value
    ds = sample_dataset(base, M, tau, seed, initial=initial)
    ek = empirical_kernels(ds, tau)
    kind = FailureKind.NONE.value
    for row, mrp in enumerate(mrps):
        res = lstd_solve(ek, mrp, tau)
        if not res.ok:
            return np.full_like(out, np.nan), res.failure.value
        out[row] = res.u[D]
    return out, kind


def mc_replica(mrp, M, seed):
    ds = sample_until_escape(mrp, M, seed)
    res = mc_estimate(ds, mrp)
    D = list(mrp.D)
    if not res.ok:
        return np.full(len(D), np.nan), res.failure.value
    return res.u[D], FailureKind.NONE.value


def _map(fn, args, n_jobs):
    if n_jobs == 1:
        return [fn(*a) for a in args]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=n_jobs)(delayed(fn)(*a) for a in args)


def run_replicas(cfg, mrps, M, tau):
    """Estimates of all replicas, stacked as ``(replicas, quantities, |D|)``."""
    args = [(mrps, M, tau, derive_seed(cfg.master_seed, r)) for r in range(cfg.replicas)]
    results = _map(lstd_replica, args, cfg.n_jobs)
    est = np.stack([e for e, _ in results])
    kinds = [k for _, k in results]
    return est, kinds


def _mse_table(n, quantity, tau, M, est, kinds, u, rel, D):
    ok = ~np.isnan(est).any(axis=1)
    err2 = (est[ok] - u[D]) ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        emp = M * err2.mean(axis=0) / u[D] ** 2 if ok.any() else np.full(len(D), np.nan)
    counts = {}
    for k in kinds:
        counts[k] = counts.get(k, 0) + 1
    return MseTable(
        n=n, quantity=quantity, tau=tau, M=M, replicas=len(kinds),
        states=np.array(D), exact_u=u[D], rel_avar=rel[D],
        empirical_rel_mse=emp, failure_rate=1.0 - ok.mean(), failures=counts,
    )


def _write_panels(cfg, table, mc_rel, mc_emp=None):
    n, q = table.n, table.quantity
    common = dict(config=cfg.echo(), seed=cfg.master_seed)
    D = table.states
    io.write_csv(
        cfg.path(n, f"{q}_value.csv"),
        [("state", "state index (0-based)"), ("u", "exact value function")],
        zip(D, table.exact_u), extra={"quantity": q}, **common,
    )
    io.write_csv(
        cfg.path(n, f"{q}_lstd.csv"),
        [
            ("state", "state index (0-based)"),
            ("exact_u", "exact value function"),
            ("rel_avar", "exact relative asymptotic variance sigma^2/u^2"),
            ("empirical_rel_mse", "M*MSE/u^2 over successful replicas (nan if none)"),
            ("failure_rate", "fraction of replicas where the estimator was undefined"),
        ],
        ((s, uu, r, e, table.failure_rate) for s, uu, r, e in
         zip(D, table.exact_u, table.rel_avar, table.empirical_rel_mse)),
        extra={"quantity": q, "tau": table.tau, "M": table.M, "replicas": table.replicas,
               "failures": ";".join(f"{k}={v}" for k, v in sorted(table.failures.items()))},
        **common,
    )
    cols = [("state", "state index (0-based)"),
            ("mc_rel_avar", "exact relative asymptotic MSE of the Monte Carlo estimator")]
    rows = list(zip(D, mc_rel[D]))
    if mc_emp is not None:
        cols.append(("mc_empirical_rel_mse", "M*MSE/u^2 of Monte Carlo replicas"))
        rows = [r + (e,) for r, e in zip(rows, mc_emp)]
    io.write_csv(cfg.path(n, f"{q}_mc.csv"), cols, rows, extra={"quantity": q}, **common)


def _mc_empirical(cfg, mrp, M, u):
    D = list(mrp.D)
    args = [(mrp, M, derive_seed(cfg.master_seed ^ 0x5EED, r)) for r in range(cfg.mc_replicas)]
    res = _map(mc_replica, args, cfg.n_jobs)
    est = np.stack([e for e, _ in res])
    ok = ~np.isnan(est).any(axis=1)
    if not ok.any():
        return np.full(len(D), np.nan)
    return M * ((est[ok] - u[D]) ** 2).mean(axis=0) / u[D] ** 2


def run_fig_experiment(cfg):
    """Exact value, LSTD relative variance with replica MSE, and exact MC variance per ``n``.

    Writes ``<quantity>_value.csv``, ``<quantity>_lstd.csv`` and
    ``<quantity>_mc.csv`` for every ``n``.  Returns ``{(n, quantity): MseTable}``.
    """
    tables = {}
    for n in cfg.n_list:
        M = eval_m_rule(cfg.m_rule, n)
        mrps = [cfg.chain(n, q) for q in cfg.quantities]
        est, kinds = run_replicas(cfg, mrps, M, cfg.tau)
        for qi, (q, mrp) in enumerate(zip(cfg.quantities, mrps)):
            D = list(mrp.D)
            rep = sigma_asymptotic(mrp, cfg.tau)
            table = _mse_table(n, q, cfg.tau, M, est[:, qi, :], kinds, rep.u, rep.rel_avar, D)
            mc_emp = None
            if cfg.mc_replicas > 0 and n < 40:
                mc_emp = _mc_empirical(cfg, mrp, M, rep.u)
            _write_panels(cfg, table, mc_relative_avar(mrp), mc_emp)
            tables[(n, q)] = table
    return tables


def run_invariant_mu(cfg):
    """Same pipeline as :func:`run_fig_experiment` with ``mu`` proportional to
    the invariant distribution on ``D``; failure rates are part of the output."""
    if cfg.mu != "invariant":
        raise ConfigError("run_invariant_mu needs mu='invariant'")
    return run_fig_experiment(cfg)


def lag_sweep_table(mrp, taus, quantity):
    """Rows ``(tau, max rel-avar, bound)``; the committor uses the zero-reward form."""
    zero = quantity == "committor"
    rows = []
    for tau in taus:
        worst = sigma_asymptotic(mrp, tau).max_rel_avar(mrp.D)
        rows.append((tau, worst, avar_bound(mrp, tau, zero_reward_in_D=zero)))
    return rows


def run_lag_sweep(cfg):
    """Max relative variance and its bound over ``tau_range``, one CSV per quantity."""
    taus = range(cfg.tau_range[0], cfg.tau_range[1] + 1)
    out = {}
    for n in cfg.n_list:
        for q in cfg.quantities:
            rows = lag_sweep_table(cfg.chain(n, q), taus, q)
            io.write_csv(
                cfg.path(n, f"{q}.csv"),
                [("tau", "lag time"),
                 ("max_rel_avar", "max over D of sigma^2/u^2"),
                 ("avar_bound", "upper bound on max_rel_avar")],
                rows, config=cfg.echo(), seed=cfg.master_seed, extra={"quantity": q},
            )
            out[(n, q)] = rows
    return out


def diagnostics_rows(mrp, n, taus):
    rows = []
    for tau in taus:
        rep = quasi_stationary_report(mrp, tau)
        lhs, rhs = rep.lemma1
        rows += [
            (f"lambda_max_tau{tau}", rep.lambda_max),
            (f"e_nu_T_tau{tau}", rep.e_nu_T),
            (f"resolvent_inf_norm_tau{tau}", lhs),
            (f"lemma1_rhs_tau{tau}", rhs),
            (f"lemma1_margin_tau{tau}", rep.lemma1_margin),
            (f"lemma1_holds_tau{tau}", rep.lemma1_holds),
        ]
    u_c = solve_value(with_quantity(mrp, "committor")).u
    rows += [("committor_u2_dense", u_c[1]),
             ("committor_u2_closed_form", committor_u2_closed_form(n))]
    if n % 2 == 1 and n >= 5:
        u_t = solve_value(with_quantity(mrp, "mfpt")).u
        rows += [("mfpt_midpoint_dense", u_t[(n - 1) // 2]),
                 ("mfpt_midpoint_closed_form", mfpt_midpoint_closed_form(n))]
    return rows


def run_diagnostics(cfg):
    """Quasi-stationary and closed-form checks per ``n``, plus spectral gaps."""
    out = {}
    for n in cfg.n_list:
        mrp = cfg.chain(n, "mfpt")
        rows = diagnostics_rows(mrp, n, cfg.diag_taus)
        io.write_scalars(cfg.path(n, "diagnostics.csv"), rows, config=cfg.echo(),
                         seed=cfg.master_seed)
        out[n] = rows
    gap = [(n, spectral_gap_bound(n)) for n in cfg.gap_n_list]
    io.write_csv(
        os.path.join(cfg.output_dir, cfg.experiment, "spectral_gap.csv"),
        [("n", "chain size"), ("gap", "1 - smallest eigenvalue of the interior block")],
        gap, config=cfg.echo(), seed=cfg.master_seed,
    )
    out["spectral_gap"] = gap
    return out


RUNNERS = {
    "fig-mfpt": run_fig_experiment,
    "fig-committor": run_fig_experiment,
    "custom": run_fig_experiment,
    "invariant-mu": run_invariant_mu,
    "lag-sweep": run_lag_sweep,
    "diagnostics": run_diagnostics,
}


def run_experiment(cfg):
    return RUNNERS[cfg.experiment](cfg)

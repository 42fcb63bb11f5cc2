import filecmp
import math

import numpy as np
import pytest

from rarelstd import io
from rarelstd.cli import main
from rarelstd.errors import ConfigError
from rarelstd.experiments import (
    ExperimentConfig,
    eval_m_rule,
    lag_sweep_table,
    run_diagnostics,
    run_experiment,
    run_fig_experiment,
    run_invariant_mu,
    run_lag_sweep,
)
from rarelstd.mrp import ChainSpec, build_chain, with_quantity
from rarelstd.variance import sigma_asymptotic


def tree(root):
    return sorted(p.relative_to(root) for p in root.rglob("*") if p.is_file())


def same_tree(a, b):
    files = tree(a)
    assert files == tree(b) and files
    return all(filecmp.cmp(a / f, b / f, shallow=False) for f in files)


def test_m_rule():
    assert eval_m_rule("10*n**3", 20) == 80000
    assert eval_m_rule("(n - 2) * 100 + 0.4", 5) == 300
    for bad in ("__import__('os')", "n.real", "open", "-n"):
        with pytest.raises(ConfigError):
            eval_m_rule(bad, 4)


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig("fig-energy")
    with pytest.raises(ConfigError):
        ExperimentConfig(replicas=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(n_list=(3,))
    assert ExperimentConfig("fig-mfpt").quantities == ("mfpt",)
    assert ExperimentConfig("invariant-mu").mu == "invariant"
    assert ExperimentConfig("lag-sweep").lazy


def test_single_replica_is_squared_error(tmp_path):
    cfg = ExperimentConfig("fig-committor", n_list=(8,), replicas=1, m_rule="2000",
                           master_seed=3, output_dir=str(tmp_path))
    table = run_fig_experiment(cfg)[(8, "committor")]
    from rarelstd.estimators import empirical_kernels, lstd_solve
    from rarelstd.sampler import derive_seed, sample_dataset

    mrp = with_quantity(build_chain(ChainSpec("bistable", 8)), "committor")
    ds = sample_dataset(mrp, 2000, 1, derive_seed(3, 0))
    u_hat = lstd_solve(empirical_kernels(ds, 1), mrp).u
    D = list(mrp.D)
    expected = 2000 * (u_hat[D] - table.exact_u) ** 2 / table.exact_u**2
    np.testing.assert_allclose(table.empirical_rel_mse, expected, rtol=1e-12)
    meta, header, _ = io.read_csv(tmp_path / "fig-committor" / "n8" / "committor_lstd.csv")
    assert {"config", "seed", "replicas", "M"} <= set(meta)
    assert header == ["state", "exact_u", "rel_avar", "empirical_rel_mse", "failure_rate"]


def test_outputs_independent_of_n_jobs(tmp_path):
    base = dict(experiment="invariant-mu", n_list=(10,), replicas=6, m_rule="300",
                master_seed=9)
    run_experiment(ExperimentConfig(**base, output_dir=str(tmp_path / "a")))
    run_experiment(ExperimentConfig(**base, output_dir=str(tmp_path / "b"), n_jobs=2))
    assert same_tree(tmp_path / "a", tmp_path / "b")


def test_failures_are_recorded(tmp_path):
    cfg = ExperimentConfig("invariant-mu", n_list=(20,), replicas=5, m_rule="50",
                           output_dir=str(tmp_path))
    tables = run_invariant_mu(cfg)
    t = tables[(20, "mfpt")]
    assert t.failure_rate == 1.0 and np.all(np.isnan(t.empirical_rel_mse))
    _, _, rows = io.read_csv(tmp_path / "invariant-mu" / "n20" / "mfpt_lstd.csv")
    assert rows[0][3] == "nan" and rows[0][4] == "1"


def test_invariant_mu_n20_never_fails(tmp_path):
    cfg = ExperimentConfig("invariant-mu", n_list=(20,), replicas=20, output_dir=str(tmp_path))
    tables = run_invariant_mu(cfg)
    assert all(t.failure_rate == 0 for t in tables.values())


def test_invariant_mu_exceeds_uniform_n20():
    for q in ("mfpt", "committor"):
        uni = with_quantity(build_chain(ChainSpec("bistable", 20)), q)
        inv = with_quantity(build_chain(ChainSpec("bistable", 20, mu_mode="invariant")), q)
        a = sigma_asymptotic(uni, 1).max_rel_avar(uni.D)
        b = sigma_asymptotic(inv, 1).max_rel_avar(inv.D)
        assert b > a


def test_mc_empirical_column(tmp_path):
    cfg = ExperimentConfig("fig-mfpt", n_list=(6,), replicas=3, mc_replicas=3, m_rule="500",
                           output_dir=str(tmp_path))
    run_fig_experiment(cfg)
    _, header, rows = io.read_csv(tmp_path / "fig-mfpt" / "n6" / "mfpt_mc.csv")
    assert header[-1] == "mc_empirical_rel_mse" and all(float(r[2]) > 0 for r in rows)


def test_lag_sweep_tau1_matches_fig():
    mrp = with_quantity(build_chain(ChainSpec("lazy-bistable", 12)), "committor")
    rows = lag_sweep_table(mrp, [1, 2], "committor")
    assert rows[0][1] == sigma_asymptotic(mrp, 1).max_rel_avar(mrp.D)
    assert all(r[1] <= r[2] for r in rows)


def test_lag_sweep_and_diagnostics_outputs(tmp_path):
    cfg = ExperimentConfig("lag-sweep", n_list=(10,), tau_range=(1, 4), output_dir=str(tmp_path))
    run_lag_sweep(cfg)
    _, header, rows = io.read_csv(tmp_path / "lag-sweep" / "n10" / "committor.csv")
    assert header == ["tau", "max_rel_avar", "avar_bound"] and len(rows) == 4
    cfg = ExperimentConfig("diagnostics", n_list=(11,), gap_n_list=(20,), output_dir=str(tmp_path))
    out = run_diagnostics(cfg)
    values = dict(out[11])
    assert values["lemma1_holds_tau1"] and values["lemma1_holds_tau5"]
    assert values["mfpt_midpoint_dense"] == pytest.approx(values["mfpt_midpoint_closed_form"],
                                                          rel=1e-8)
    assert (tmp_path / "diagnostics" / "spectral_gap.csv").exists()


def test_cli_experiment_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        code = main(["experiment", "fig-mfpt", "--n", "8", "--replicas", "4", "--m", "n**3",
                     "--seed", "5", "--out", str(tmp_path / name)])
        assert code == 0
    assert same_tree(tmp_path / "a", tmp_path / "b")
    code = main(["experiment", "fig-mfpt", "--n", "8", "--replicas", "0"])
    assert code == 2

"""Benchmark harness: sampling conformance, accuracy plumbing, throughput."""

import numpy as np
import pytest

from oscnet._util import ParameterError
from oscnet.bench import (
    BENCH_METHODS,
    OMEGA_RANGE,
    STIFFNESS_RANGE,
    ZETA_RANGE_GENERAL,
    ZETA_RANGE_UNDERDAMPED,
    BenchReport,
    bench_accuracy,
    bench_throughput,
    sample_network,
)
from oscnet.closed_form import cfa_udcon_rollout
from oscnet.integrators import step_fixed


def test_sample_network_deterministic():
    a = sample_network(7, n=12)
    b = sample_network(7, n=12)
    assert np.array_equal(a.op.stiffness, b.op.stiffness)
    assert np.array_equal(a.op.coupling, b.op.coupling)
    assert np.array_equal(a.y0, b.y0)
    c = sample_network(8, n=12)
    assert not np.array_equal(a.op.coupling, c.op.coupling)


@pytest.mark.parametrize("underdamped", [False, True])
def test_sample_ranges_hold_over_many_draws(underdamped):
    lo, hi = ZETA_RANGE_UNDERDAMPED if underdamped else ZETA_RANGE_GENERAL
    for seed in range(200):  # 200 x 50 = 1e4 oscillators
        s = sample_network(seed, n=50, underdamped_only=underdamped)
        assert np.all((s.damping_ratios > lo - 1e-12) & (s.damping_ratios < hi + 1e-12))
        assert np.all(
            (s.natural_frequencies >= OMEGA_RANGE[0])
            & (s.natural_frequencies <= OMEGA_RANGE[1])
        )
        k = s.stiffness_diag
        assert np.all((k >= STIFFNESS_RANGE[0]) & (k <= STIFFNESS_RANGE[1]))
        assert np.all(np.abs(s.op.bias) <= 1.0)
        assert np.all(s.mass > 0.0) and np.all(s.damping_diag > 0.0)
        # off-diagonals of stiffness/damping are exactly zero
        assert np.count_nonzero(s.op.stiffness - np.diag(k)) == 0


def test_sampled_coupling_positive_definite():
    for seed in range(50):
        s = sample_network(seed, n=20)
        eigs = np.linalg.eigvalsh(s.op.coupling)
        assert eigs.min() > 0.0


def test_underdamped_set_satisfies_specialized_precondition():
    # zeta < 1 everywhere, so the specialized rollout never rejects a draw
    for seed in range(100):
        s = sample_network(seed, n=30, underdamped_only=True)
        assert np.all(s.damping_ratios < 1.0)
        cfa_udcon_rollout(s.op, s.y0, None, 0.1, 1, mass=s.mass)


@pytest.fixture(scope="module")
def small_report():
    return bench_accuracy(
        n_configs=4,
        horizon=10.0,
        methods=("high_order", "euler", "cfa_con"),
        n=8,
    )


def test_accuracy_report_structure(small_report):
    s = small_report.summary()
    assert s["n_configs"] == 4 and s["n"] == 8
    for name in ("reference", "high_order", "euler", "cfa_con"):
        assert name in s["methods"]
        assert s["methods"][name]["divergent"] == 0
    assert s["methods"]["reference"]["mean_rmse"] is None
    for name in ("high_order", "euler", "cfa_con"):
        assert s["methods"][name]["mean_rmse"] > 0.0
    # step counts follow the method dt over the 10 s horizon
    assert small_report.method_steps["reference"] == 20000
    assert small_report.method_steps["high_order"] == 100
    assert small_report.method_steps["euler"] == 200
    assert small_report.method_steps["cfa_con"] == 100


def test_accuracy_error_ordering(small_report):
    s = small_report.summary()["methods"]
    # the fifth-order method at the coarse step still crushes both low-order
    # methods; on these smooth banks it sits far below the published scale,
    # so only the upper edge is asserted
    assert s["high_order"]["mean_rmse"] <= 5e-4
    assert s["high_order"]["mean_rmse"] < 0.01 * s["euler"]["mean_rmse"]
    assert s["high_order"]["mean_rmse"] < 0.01 * s["cfa_con"]["mean_rmse"]


def test_reference_accuracy_ladder():
    # the 5e-4 reference must be >= 100x more accurate than any candidate:
    # measure its own error against a 10x finer run
    s = sample_network(0, n=8)
    from oscnet.bench import _bank_field, _rollout_positions

    fld = _bank_field([s])
    ref = _rollout_positions(fld, s.y0[None], 5e-4, 20000, "dopri5_fixed", 200, 8)
    ultra = _rollout_positions(fld, s.y0[None], 5e-5, 200000, "dopri5_fixed", 2000, 8)
    ref_err = float(np.sqrt(np.mean((ref - ultra) ** 2)))
    rep = bench_accuracy(n_configs=1, horizon=10.0, methods=("euler", "cfa_con"), n=8)
    for name in ("euler", "cfa_con"):
        assert ref_err < rep.summary()["methods"][name]["mean_rmse"] / 100.0


def test_udcon_matches_general_rollout_in_report():
    rep = bench_accuracy(
        n_configs=3,
        horizon=10.0,
        methods=("cfa_con", "cfa_udcon"),
        n=8,
        underdamped_only=True,
    )
    con = rep.rmse["cfa_con"]
    ud = rep.rmse["cfa_udcon"]
    assert all(abs(a - b) < 1e-12 for a, b in zip(con, ud))


def test_csv_deterministic_excluding_timing(small_report):
    again = bench_accuracy(
        n_configs=4, horizon=10.0, methods=("high_order", "euler", "cfa_con"), n=8
    )

    def strip_timing(rows):
        return ["," .join(r.split(",")[:3]) for r in rows]

    assert strip_timing(small_report.csv_rows()) == strip_timing(again.csv_rows())


def test_csv_rows_shape(small_report):
    rows = list(small_report.csv_rows())
    assert rows[0] == "method,config_seed,rmse,steps_per_sec"
    assert len(rows) == 1 + 4 * 4  # four methods (incl. reference) x four configs
    ref_rows = [r for r in rows[1:] if r.startswith("reference,")]
    assert all(r.split(",")[2] == "" for r in ref_rows)


def test_divergent_runs_counted_not_averaged():
    rep = BenchReport(n=2, horizon=1.0, underdamped_only=False, config_seeds=[0, 1, 2])
    rep.rmse["euler"] = [0.5, None, 0.7]
    rep.steps_per_sec["euler"] = [10.0, 10.0, 10.0]
    rep.method_steps["euler"] = 20
    s = rep.summary()["methods"]["euler"]
    assert s["divergent"] == 1
    assert s["mean_rmse"] == pytest.approx(0.6)
    row = [r for r in rep.csv_rows() if r.startswith("euler,1,")][0]
    assert row.split(",")[2] == ""


def test_bench_accuracy_validation():
    with pytest.raises(ParameterError, match="unknown method"):
        bench_accuracy(n_configs=1, methods=("simpson",), n=4, horizon=1.0)
    with pytest.raises(ParameterError, match="divide"):
        bench_accuracy(n_configs=1, methods=("euler",), n=4, horizon=0.13)
    with pytest.raises(ParameterError, match="configuration"):
        bench_accuracy(n_configs=0, n=4)
    with pytest.raises(ParameterError, match="horizon shorter"):
        bench_accuracy(n_configs=1, methods=("cfa_con",), n=4, horizon=0.05)


def test_throughput_fields_and_scaling():
    th = bench_throughput(
        methods=("high_order", "euler", "cfa_con", "cfa_udcon"),
        repeats=2,
        horizon=5.0,
        n=8,
        underdamped_only=True,
    )
    assert th["euler"]["steps"] == 100
    assert th["high_order"]["steps"] == 50
    for r in th.values():
        assert r["steps_per_sec"] > 0.0
        assert r["sim_per_real"] == pytest.approx(5.0 / r["min_wall_s"])
    # the specialized underdamped rollout hoists all per-step decomposition
    # work out of the loop; the generic one redoes it every step
    assert th["cfa_udcon"]["steps_per_sec"] >= 1.5 * th["cfa_con"]["steps_per_sec"]


def test_throughput_validation():
    with pytest.raises(ParameterError, match="repeats"):
        bench_throughput(repeats=0)
    with pytest.raises(ParameterError, match="unknown method"):
        bench_throughput(methods=("verlet",), repeats=1, horizon=1.0, n=4)

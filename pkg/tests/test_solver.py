import csv

import numpy as np
import pytest

from advot.core import ConfigError, NumericError, SolverConfig
from advot.solver import (DiagnosticRecord, DiagnosticsTrace, convergence_check,
                          fit_fixed_features, fit_general)


def rec(i, cost, cons):
    return DiagnosticRecord(i, cost + cons, cost, cons, 0.0, 0.0, False, False)


def test_zero_iterations_gives_identity_flow():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(20, 2))
    res = fit_general(x, rng.normal(size=(20, 2)), SolverConfig(max_iterations=0, precondition=False))
    assert len(res.flow) == 0 and len(res.diagnostics) == 0
    assert np.array_equal(res.flow.apply(x), x)


def test_lengths_and_replay_consistency():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(60, 2))
    y = rng.normal(size=(50, 2)) * [2.0, 0.5] + 1.0
    res = fit_general(x, y, SolverConfig(max_iterations=25))
    assert len(res.flow) == res.iterations == 25
    assert np.allclose(res.flow.apply(x), res.transported_original(), rtol=0, atol=1e-10)
    trace = res.diagnostics
    assert np.all(trace.column("cost") >= 0)
    assert np.all(trace.column("step_norm") <= 0.003 * (1 + 1e-12))
    assert np.all(np.isfinite(trace.column("objective")))


def test_dimension_mismatch_raises_config_error():
    with pytest.raises(ConfigError, match="dimension mismatch"):
        fit_general(np.zeros((5, 2)) + np.arange(5)[:, None], np.ones((5, 1)) * np.arange(5)[:, None],
                    SolverConfig())


def test_reference_map_enables_l1():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(40, 1))
    res = fit_general(x, 2 * rng.normal(size=(40, 1)), SolverConfig(max_iterations=3),
                      reference_map=lambda v: 2 * v)
    assert np.all(np.isfinite(res.diagnostics.column("l1_error")))


def test_callback_extra_fields():
    rng = np.random.default_rng(3)
    seen = []

    def cb(r, flow):
        seen.append(len(flow))
        return {"kl": 0.5}

    res = fit_general(rng.normal(size=(30, 2)), rng.normal(size=(30, 2)),
                      SolverConfig(max_iterations=4), callback=cb)
    assert seen == [1, 2, 3, 4]
    assert np.all(res.diagnostics.column("kl") == 0.5)


@pytest.mark.parametrize("family", ["radial_iq", "multinomial"])
def test_other_families_and_gda_run(family):
    rng = np.random.default_rng(4)
    cfg = SolverConfig(max_iterations=5, map_family=family, optimizer="explicit_gda",
                       testfn_bandwidth="adaptive", map_scale="adaptive", n_centers=2)
    res = fit_general(rng.normal(size=(30, 2)), rng.normal(size=(30, 2)) + 1, cfg)
    assert res.iterations == 5
    assert not any(r.fallback for r in res.diagnostics)


def test_memory_less_iteration_time():
    import time
    rng = np.random.default_rng(5)
    stamps = []
    fit_general(rng.normal(size=(100, 2)), rng.normal(size=(100, 2)) + 1,
                SolverConfig(max_iterations=400),
                callback=lambda r, f: stamps.append(time.perf_counter()))
    dt = np.diff(stamps)
    early, late = np.median(dt[:100]), np.median(dt[-100:])
    assert late < 1.5 * early


def test_diagnostics_csv(tmp_path):
    tr = DiagnosticsTrace([rec(0, 0.1, -0.2), rec(1, 0.25, 0.0)])
    path = tmp_path / "d.csv"
    tr.write_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0][:4] == ["iteration", "objective", "cost", "constraint"]
    assert rows[1][2] == "0.1" and rows[1][6] == "0" and rows[1][8] == ""


def test_convergence_check_examples():
    flat = [rec(i, 0.0, 0.0) for i in range(10)]
    assert convergence_check(flat, 10, 0.01)
    osc = [rec(i, 1.0, 0.5 * (-1) ** i) for i in range(10)]
    assert not convergence_check(osc, 10, 0.01)
    assert not convergence_check(flat, 20, 0.01)
    drifting = [rec(i, 1.0 + 0.1 * i, 0.0) for i in range(10)]
    assert not convergence_check(drifting, 10, 0.01)


def test_self_transport_converges_early():
    x = np.random.default_rng(6).normal(size=(200, 2))
    res = fit_general(x, x, SolverConfig(max_iterations=500), convergence=(50, 0.01))
    assert res.termination == "converged"
    assert res.iterations < 500


def test_fixed_features_shift_recovery():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(400, 1))
    y = rng.normal(size=(400, 1)) + 2.0
    cfg = SolverConfig(max_iterations=3000, precondition=False, trust_region=0.01)
    res = fit_fixed_features(x, y, cfg, degree=2)
    assert abs(np.mean(res.transported - x) - 2.0) < 0.1


def test_fixed_features_equilibrium_stays_put():
    x = np.random.default_rng(8).normal(size=(50, 1))
    res = fit_fixed_features(x, x, SolverConfig(max_iterations=20, precondition=False))
    assert np.all(np.abs(res.beta) < 1e-8)
    assert np.allclose(res.transported, x, atol=1e-8)


def test_fixed_features_degree_one_translates():
    rng = np.random.default_rng(9)
    x = rng.normal(size=(30, 2))
    res = fit_fixed_features(x, rng.normal(size=(30, 2)) + 1, SolverConfig(max_iterations=5,
                                                                            precondition=False),
                             degree=1)
    shift = res.transported - res.source
    assert np.allclose(shift, shift[0], atol=1e-12)


def test_non_finite_propagates_with_iteration():
    x = np.random.default_rng(10).normal(size=(20, 1))

    def bad(r, flow):
        raise NumericError(f"iteration {r.iteration}: injected")

    with pytest.raises(NumericError, match="iteration 0"):
        fit_general(x, x + 1, SolverConfig(max_iterations=2), callback=bad)

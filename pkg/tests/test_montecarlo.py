import math

import numpy as np
import pytest

from mskrock.driver import StageControl, integrate
from mskrock.montecarlo import (
    ErrorRow,
    ErrorTable,
    RunError,
    fit_slope,
    generate_paths,
    read_error_table,
    run_convergence,
    significant_rows,
    write_error_table,
)
from mskrock.problems import SplitSdeProblem, make_multirate_test, make_sinh_problem
from mskrock.rkc import DriftPair
from mskrock.skrock import DiffusionSpec


def test_same_seed_same_increments():
    a = generate_paths(9, 5, 16, 2, 1.0)
    b = generate_paths(9, 5, 16, 2, 1.0)
    np.testing.assert_array_equal(a.increments, b.increments)
    c = generate_paths(10, 5, 16, 2, 1.0)
    assert not np.array_equal(a.increments, c.increments)


def test_block_partition_invariance():
    whole = generate_paths(3, 10, 8, 1, 1.0)
    part = generate_paths(3, 4, 8, 1, 1.0, first_index=6)
    np.testing.assert_array_equal(whole.increments[6:], part.increments)


def test_aggregation_identity():
    paths = generate_paths(1, 3, 64, 2, 2.0)
    for k in range(1, 5):
        coarse = paths.coarsen(64 // 2**k)
        fine = paths.increments.reshape(3, 64 // 2**k, 2**k, 2)
        np.testing.assert_array_equal(coarse, fine.sum(axis=2))
    np.testing.assert_allclose(paths.coarsen(1)[:, 0], paths.terminal(), rtol=1e-14)


def test_increment_variance():
    paths = generate_paths(123, 1000, 100, 1, 0.5)
    x = paths.increments.ravel()
    n = x.size
    var = x.var(ddof=1)
    tau = paths.tau_fine
    # chi-squared: sd of the sample variance is tau * sqrt(2/(n-1))
    assert abs(var - tau) < 3 * tau * math.sqrt(2 / (n - 1))


def test_divisibility_errors():
    with pytest.raises(ValueError):
        generate_paths(1, 2, 12, 1, 1.0, coarse_steps=[5])
    with pytest.raises(ValueError):
        generate_paths(1, 2, 12, 1, 1.0).coarsen(5)
    with pytest.raises(ValueError):
        generate_paths(-1, 2, 12, 1, 1.0)


# -- tables and fits ----------------------------------------------------------


def _table(taus, strong, weak=None):
    weak = strong if weak is None else weak
    return ErrorTable(
        [ErrorRow(t, s, 0.0, w, 0.0, 10, 1.0, 1.0, 1.0, 1.0, 2.0) for t, s, w in zip(taus, strong, weak)]
    )


def test_fit_slope_synthetic():
    taus = 2.0 ** -np.arange(1, 7)
    slope, icpt = fit_slope(_table(taus, taus**0.5))
    assert slope == pytest.approx(0.5, abs=1e-12) and icpt == pytest.approx(0.0, abs=1e-12)
    slope, icpt = fit_slope(_table(taus, 3 * taus), "weak")
    assert slope == pytest.approx(1.0, abs=1e-12) and icpt == pytest.approx(math.log2(3), abs=1e-12)


def test_fit_slope_needs_three_positive_rows():
    with pytest.raises(ValueError):
        fit_slope(_table([0.5, 0.25], [1.0, 0.5]))
    with pytest.raises(ValueError):
        fit_slope(_table([0.5, 0.25, 0.125], [1.0, 0.0, 0.5]))
    with pytest.raises(ValueError):
        fit_slope(_table([0.5, 0.25, 0.125], [1.0, 0.5, 0.2]), "median")


def test_table_validation():
    _table([0.5, 0.25, 0.125], [1, 1, 1]).validate()
    with pytest.raises(ValueError):
        _table([0.25, 0.5], [1, 1]).validate()
    with pytest.raises(ValueError):
        _table([0.5, 0.25], [1, -1]).validate()


def test_error_table_csv_round_trip(tmp_path):
    t = _table([0.5, 0.25, 0.125], [0.1 / 3, 2 / 7, 1e-300])
    f = tmp_path / "e.csv"
    write_error_table(t, f)
    assert f.read_bytes().count(b"\r") == 0
    back = read_error_table(f)
    assert back.rows == t.rows


def test_significant_rows():
    t = ErrorTable([ErrorRow(0.5, 1, 0, 1.0, 0.1, 1, 0, 0, 0, 0, 0), ErrorRow(0.25, 1, 0, 0.1, 0.1, 1, 0, 0, 0, 0, 0)])
    assert significant_rows(t, "weak") == [0]


# -- convergence runs -------------------------------------------------------


def test_self_reference_is_zero():
    t = run_convergence(make_sinh_problem(), "mskrock", [0.5, 0.25, 0.125], 50, seed=1, reference="self")
    assert np.all(t.column("strong_error") == 0) and np.all(t.column("weak_error") == 0)


def test_multirate_strong_slope_exact_reference():
    # mild decay keeps the terminal state, and hence the error, measurable
    prob = make_multirate_test(-0.5, -0.1, 0.8)
    taus = [2.0**-k for k in range(3, 10)]
    t = run_convergence(prob, "mskrock", taus, 2000, seed=4, reference="exact")
    t.validate()
    slope, _ = fit_slope(t, "strong")
    assert slope == pytest.approx(0.5, abs=0.1)


def test_thread_count_does_not_change_results():
    prob = make_sinh_problem()
    kw = dict(taus=[0.5, 0.25, 0.125], n_paths=300, seed=8, batch_size=70)
    a = run_convergence(prob, "mskrock", threads=1, **kw)
    b = run_convergence(prob, "mskrock", threads=3, **kw)
    for ra, rb in zip(a.rows, b.rows):
        assert ra.strong_error == pytest.approx(rb.strong_error, rel=1e-12)
        assert ra.weak_error == pytest.approx(rb.weak_error, rel=1e-12, abs=1e-15)


def test_serial_rerun_bitwise():
    prob = make_sinh_problem()
    kw = dict(taus=[0.5, 0.25, 0.125], n_paths=100, seed=2)
    assert run_convergence(prob, "skrock", **kw).rows == run_convergence(prob, "skrock", **kw).rows


def test_fine_skrock_reference():
    prob = make_sinh_problem()
    t = run_convergence(prob, "mskrock", [0.25, 0.125, 0.0625], 400, seed=3, reference="fine-skrock", ref_factor=8)
    assert t.meta["reference_steps"] == 128
    assert np.all(np.diff(t.column("strong_error")) < 0)


def test_methods_close_on_same_paths():
    prob = make_sinh_problem()
    paths = generate_paths(6, 400, 256, 1, 1.0)
    gaps = []
    taus = [2.0**-k for k in range(2, 8)]
    for tau in taus:
        dW = paths.coarsen(round(1 / tau))
        a = integrate(prob, "mskrock", tau, dW).x
        b = integrate(prob, "skrock", tau, dW).x
        gaps.append(math.sqrt(np.mean((a - b) ** 2)))
    assert np.polyfit(np.log2(taus), np.log2(gaps), 1)[0] >= 0.5


def test_input_errors():
    prob = make_sinh_problem()
    with pytest.raises(ValueError):
        run_convergence(prob, "mskrock", [0.5], 0, seed=1)
    with pytest.raises(ValueError):
        run_convergence(prob, "mrkc", [0.5], 10, seed=1)
    with pytest.raises(ValueError):
        run_convergence(prob, "mskrock", [0.5], 10, seed=1, reference="fine-skrock", ref_factor=1)
    no_exact = SplitSdeProblem("x", prob.drift, prob.diffusion, prob.x0, 1.0)
    with pytest.raises(ValueError):
        run_convergence(no_exact, "mskrock", [0.5], 10, seed=1, reference="exact")


def test_divergence_aborts_with_path_index():
    # explodes only for strongly positive noise, so some paths fail
    dp = DriftPair(lambda t, x: np.where(x > 3.0, np.inf, 0.0 * x), lambda t, x: 0 * x, 1)
    prob = SplitSdeProblem("blowup", dp, DiffusionSpec("vector", lambda t, x: 1.0 + 0 * x, 1), np.zeros(1), 1.0)
    with pytest.raises(RunError, match=r"path \d+ diverged"):
        run_convergence(prob, "mskrock", [0.5, 0.25, 0.125], 200, seed=1, reference="self",
                        control=StageControl(fixed=(1, 2)))

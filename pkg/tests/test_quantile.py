import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from dacnn.errors import DegenerateDesign, NoBinsInInterval, TauOutOfRange, TooFewPoints
from dacnn.evaluate import EvalRecords
from dacnn.quantile import (BinMedianTable, QuantileFit, adequacy_check, empirical_bin_medians, fit_interval_models,
                            fit_quantile_line, pinball_loss, pinball_objective, write_bins_csv, write_fits_csv)

from oracles import lattice_instance, lattice_optimum


def lp_optimum(x, y, tau):
    """Quantile regression as a linear program (independent solver)."""
    n = len(x)
    c = np.r_[0, 0, np.full(n, tau), np.full(n, 1 - tau)]
    A = sp.hstack([sp.csr_matrix(np.c_[np.ones(n), x]), sp.eye(n), -sp.eye(n)]).tocsr()
    res = linprog(c, A_eq=A, b_eq=y, bounds=[(None, None)] * 2 + [(0, None)] * (2 * n), method="highs")
    return res.fun


def test_pinball_examples():
    assert pinball_loss(4, 0.5) == 2
    assert pinball_loss(-4, 0.5) == 2
    assert pinball_loss(0, 0.3) == 0
    assert pinball_loss(-1, 0.9) == pytest.approx(0.1)
    with pytest.raises(TauOutOfRange):
        pinball_loss(1, 1.0)


@settings(max_examples=300)
@given(st.floats(-1e6, 1e6), st.floats(0.001, 0.999))
def test_pinball_identity(x, tau):
    assert pinball_loss(x, tau) + pinball_loss(-x, tau) == pytest.approx(abs(x), rel=1e-12, abs=1e-12)
    assert pinball_loss(x, tau) >= 0


def test_fit_errors():
    with pytest.raises(DegenerateDesign):
        fit_quantile_line([1, 1, 1], [1, 2, 3])
    with pytest.raises(TooFewPoints):
        fit_quantile_line([1], [1])
    with pytest.raises(TauOutOfRange):
        fit_quantile_line([0, 1], [0, 1], tau=0)


def test_median_limit_of_near_constant_design():
    for eps in (1e-3, 1e-6, 1e-9):
        fit = fit_quantile_line([0, 0, eps], [1, 2, 3], 0.5)
        assert fit.predict(0) == pytest.approx(2, abs=1e-6)


def test_two_points_exact():
    fit = fit_quantile_line([0, 1], [1, 3], 0.5)
    assert (fit.beta0, fit.beta1, fit.pinball_total) == (1, 2, 0)


@pytest.mark.parametrize("tau", [0.1, 0.25, 0.5, 0.75, 0.9])
def test_matches_linear_program(tau, rng):
    for trial in range(20):
        n = int(rng.integers(2, 150))
        if trial % 3 == 0:
            x, y = rng.choice([0.0, 0.5, 1.0], n), rng.integers(0, 1000, n) / 1000
        elif trial % 3 == 1:
            x, y = rng.uniform(0, 0.5, n), rng.uniform(0, 1, n)
        else:
            x, y = rng.integers(0, 4, n) * 1.0, rng.integers(0, 5, n) * 1.0
        if np.ptp(x) == 0:
            continue
        fit = fit_quantile_line(x, y, tau)
        assert fit.pinball_total == pytest.approx(pinball_objective(x, y, fit.beta0, fit.beta1, tau), abs=1e-12)
        opt = lp_optimum(x, y, tau)
        assert fit.pinball_total <= opt + 1e-6 * max(opt, 1e-9)


def test_matches_lattice_search(rng):
    for _ in range(5):
        x, y = lattice_instance(rng)
        fit = fit_quantile_line(x, y, 0.5)
        assert abs(fit.pinball_total - lattice_optimum(x, y, 0.5)) < 1e-4


def test_median_line_balance(rng):
    for _ in range(20):
        x = rng.uniform(0, 1, 101)
        y = 0.5 - 0.3 * x + rng.standard_t(3, 101) * 0.05
        fit = fit_quantile_line(x, y, 0.5)
        r = y - fit.predict(x)
        on = np.abs(r) < 1e-12
        assert abs((r > 1e-12).sum() - (r < -1e-12).sum()) <= on.sum() + 2


def test_scale_equivariance(rng):
    x, y = rng.uniform(0, 1, 80), rng.uniform(0, 1, 80)
    base = fit_quantile_line(x, y, 0.3).pinball_total
    for c in (0.5, 3.0, 1000.0):
        assert fit_quantile_line(x, c * y, 0.3).pinball_total == pytest.approx(c * base, rel=1e-10)


def test_large_input_is_fast(rng):
    x = rng.uniform(0, 0.5, 12_500)
    y = 0.55 - 0.1 * x + rng.normal(0, 0.05, 12_500)
    fit = fit_quantile_line(x, y, 0.5)
    assert fit.beta1 == pytest.approx(-0.1, abs=0.02)


def interval_records(rng, n_per=200):
    q = rng.uniform(0, 4, 8 * n_per)
    conf = 0.6 - 0.075 * q + rng.normal(0, 0.02, len(q))
    return EvalRecords(q, np.zeros(len(q)), np.zeros(len(q)), conf)


def test_interval_models_default_grid(rng):
    fits, problems = fit_interval_models(interval_records(rng))
    assert len(fits) == 8 and not problems
    assert [f.interval for f in fits] == [(0.5 * i, 0.5 * (i + 1)) for i in range(8)]
    assert all(f.beta1 < 0 for f in fits)
    assert sum(f.n_points for f in fits) == 1600


def test_interval_boundaries_half_open():
    q = np.array([0.0, 0.25, 0.5, 0.75, 3.5, 3.75, 4.0] * 2) + np.repeat([0, 1e-3], 7)
    q = np.clip(q, 0, 4)
    r = EvalRecords(q, np.zeros(len(q)), np.zeros(len(q)), np.linspace(0.2, 0.5, len(q)))
    fits, _ = fit_interval_models(r, min_points=2)
    assert fits[0].n_points == 4  # 0, 0.25 and their shifted twins; 0.5 starts the next interval
    assert fits[-1].n_points == 6  # 3.5, 3.75, 4.0, 3.501, 3.751 and the clipped 4.0


def test_sparse_intervals_marked(rng):
    q = rng.uniform(1.0, 1.5, 50)
    r = EvalRecords(q, np.zeros(50), np.zeros(50), rng.uniform(0.3, 0.6, 50))
    fits, problems = fit_interval_models(r)
    assert sum(f is not None for f in fits) == 1
    assert len(problems) == 7
    assert fits[2] is not None


def test_bin_medians():
    t = empirical_bin_medians(EvalRecords([1.1], [0], [0], [0.4]))
    assert len(t) == 1 and t.median[0] == 0.4 and t.count[0] == 1 and t.q_center[0] == 1.125
    t = empirical_bin_medians(EvalRecords([0.1, 0.2, 4.0], [0, 0, 0], [0, 0, 0], [0.2, 0.4, 0.7]))
    np.testing.assert_allclose(t.median, [0.3, 0.7])
    np.testing.assert_allclose(t.q_center, [0.125, 3.875])


def test_adequacy_examples():
    table = BinMedianTable(np.array([0.125, 0.375]), np.array([0.4, 0.5]), np.array([3, 3]))
    through = QuantileFit(0.5, (0.0, 0.5), 0.35, 0.4, 0.0, 6)
    assert adequacy_check(through, table) == pytest.approx(0, abs=1e-15)
    flat = QuantileFit(0.5, (0.0, 0.5), 0.45, 0.0, 0.0, 6)
    assert adequacy_check(flat, table) == pytest.approx(0.05)
    with pytest.raises(NoBinsInInterval):
        adequacy_check(QuantileFit(0.5, (1.0, 1.5), 0.45, 0.0, 0.0, 6), table)


def test_csv_exports(tmp_path, rng):
    r = interval_records(rng, 30)
    fits, _ = fit_interval_models(r)
    write_fits_csv(fits, tmp_path / "f.csv")
    write_bins_csv(empirical_bin_medians(r), tmp_path / "b.csv")
    f_lines = (tmp_path / "f.csv").read_text().splitlines()
    assert f_lines[0] == "interval_lo,interval_hi,tau,beta0,beta1,pinball_total,n_points"
    assert len(f_lines) == 9
    b_lines = (tmp_path / "b.csv").read_text().splitlines()
    assert b_lines[0] == "q_center,median,count" and len(b_lines) == 17

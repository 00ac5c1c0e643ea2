"""Linear quantile regression of confidence on blur level, per sub-interval.

The single-regressor problem ``min sum rho_tau(y - b0 - b1 x)`` is solved
exactly. Some optimal line always passes through two data points with
distinct ``x``; the solver walks between such lines by pivoting about one
point and picking the best slope through it (a weighted quantile), stops when
the pivot returns, and then checks the dual optimality conditions.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDesign, NoBinsInInterval, SparseInterval, TauOutOfRange, TooFewPoints
from .evaluate import ALL_RECORDS, EvalRecords

DEFAULT_BREAKPOINTS = tuple(0.5 * i for i in range(9))


def _check_tau(tau: float) -> None:
    if not 0 < tau < 1:
        raise TauOutOfRange(f"tau must lie in (0, 1), got {tau}")


def pinball_loss(residual, tau: float):
    _check_tau(tau)
    r = np.asarray(residual, dtype=np.float64)
    out = tau * np.maximum(r, 0) + (1 - tau) * np.maximum(-r, 0)
    return out if out.ndim else float(out)


def pinball_objective(x, y, beta0: float, beta1: float, tau: float) -> float:
    return float(pinball_loss(np.asarray(y) - beta0 - beta1 * np.asarray(x), tau).sum())


@dataclass(frozen=True)
class QuantileFit:
    tau: float
    interval: tuple
    beta0: float
    beta1: float
    pinball_total: float
    n_points: int

    def predict(self, q):
        return self.beta0 + self.beta1 * np.asarray(q, dtype=np.float64)


def weighted_quantile_point(u, w, tau_i) -> int:
    """Index ``j`` minimizing ``sum w_i rho_{tau_i}(u_i - b)`` at ``b = u_j``.

    The objective is convex piecewise-linear in ``b`` with kinks at the ``u``.
    Its right derivative at ``b`` is
    ``sum_{u_i <= b} w_i (1 - tau_i) - sum_{u_i > b} w_i tau_i``;
    the first sorted kink where that becomes non-negative is a minimizer.
    """
    order = np.argsort(u, kind="mergesort")
    w_sorted, t_sorted = w[order], tau_i[order]
    below = np.cumsum(w_sorted * (1 - t_sorted))
    above = (w_sorted * t_sorted).sum() - np.cumsum(w_sorted * t_sorted)
    k = int(np.argmax(below - above >= 0))
    return int(order[k])


def _best_line_through(x, y, k, tau):
    """Optimal line constrained to pass through point ``k``.

    Returns ``(beta0, beta1, j)`` with ``j`` the second point on that line.
    """
    e = x - x[k]
    d = y - y[k]
    mask = e != 0
    idx = np.flatnonzero(mask)
    u = d[mask] / e[mask]
    w = np.abs(e[mask])
    tau_i = np.where(e[mask] > 0, tau, 1 - tau)
    j = int(idx[weighted_quantile_point(u, w, tau_i)])
    beta1 = (y[j] - y[k]) / (x[j] - x[k])
    return y[k] - beta1 * x[k], beta1, j


def _dual_certificate(x, y, beta0, beta1, tau, scale) -> bool:
    """Check the LP optimality conditions for the line ``(beta0, beta1)``.

    Optimal iff there are weights ``a_i`` with ``a_i = tau`` for positive
    residuals, ``tau - 1`` for negative ones, ``a_i`` in ``[tau - 1, tau]`` for
    points on the line, and ``sum a_i (1, x_i) = 0``.
    """
    from scipy.optimize import linprog

    r = y - beta0 - beta1 * x
    tol = 1e-12 * max(scale, 1.0)
    on = np.abs(r) <= tol
    a_fixed = np.where(r > 0, tau, tau - 1.0)[~on]
    target = -np.array([a_fixed.sum(), (a_fixed * x[~on]).sum()])
    n_on = int(on.sum())
    if n_on == 0:
        return bool(np.allclose(target, 0))
    A = np.vstack([np.ones(n_on), x[on]])
    res = linprog(np.zeros(n_on), A_eq=A, b_eq=target, bounds=[(tau - 1.0, tau)] * n_on, method="highs")
    return bool(res.status == 0)


def fit_quantile_line(q, y, tau: float = 0.5, interval=None, max_iter: int = 10_000) -> QuantileFit:
    """Exact linear ``tau``-quantile regression of ``y`` on ``q``."""
    _check_tau(tau)
    x = np.asarray(q, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y):
        raise ValueError("q and y differ in length")
    if len(x) < 2:
        raise TooFewPoints("need at least two points")
    if np.ptp(x) == 0:
        raise DegenerateDesign("all q values are equal")
    interval = tuple(interval) if interval is not None else (float(x.min()), float(x.max()))

    # start from the flat tau-quantile line; its pivot is the quantile point
    k = weighted_quantile_point(y, np.ones(len(y)), np.full(len(y), tau))
    beta0, beta1, j = _best_line_through(x, y, k, tau)
    best = pinball_objective(x, y, beta0, beta1, tau)
    prev = k
    tried = set()
    for _ in range(max_iter):
        b0, b1, nxt = _best_line_through(x, y, j, tau)
        obj = pinball_objective(x, y, b0, b1, tau)
        if obj < best - 1e-15 * max(best, 1.0):
            beta0, beta1, best = b0, b1, obj
            prev, j = j, nxt
            continue
        # no strict progress: done unless a degenerate tie hides a better vertex
        if _dual_certificate(x, y, beta0, beta1, tau, np.abs(y).max()):
            break
        r = y - beta0 - beta1 * x
        candidates = [i for i in np.flatnonzero(np.abs(r) <= 1e-12 * max(np.abs(y).max(), 1.0))
                      if i not in tried]
        if not candidates:
            break
        tried.add(j)
        prev, j = j, candidates[0]
    return QuantileFit(tau, interval, float(beta0), float(beta1), float(best), len(x))


def interval_masks(q, breakpoints=DEFAULT_BREAKPOINTS):
    """Half-open intervals ``[lo, hi)`` except the last, which is closed."""
    q = np.asarray(q, dtype=np.float64)
    edges = list(breakpoints)
    for i, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        last = i == len(edges) - 2
        yield (lo, hi), (q >= lo) & ((q <= hi) if last else (q < hi))


def fit_interval_models(records, tau: float = 0.5, breakpoints=DEFAULT_BREAKPOINTS,
                        min_points: int = 10, population: str = ALL_RECORDS):
    """One quantile line per interval.

    Returns ``(fits, problems)``: ``fits`` holds a :class:`QuantileFit` or
    ``None`` per interval, ``problems`` maps the interval to the
    :class:`SparseInterval` that explains each ``None``.
    """
    rec = EvalRecords.from_records(records).population(population)
    fits, problems = [], {}
    for bounds, mask in interval_masks(rec.q, breakpoints):
        xq, yc = rec.q[mask], rec.confidence[mask]
        if len(xq) < min_points or len(np.unique(xq)) < 2:
            problems[bounds] = SparseInterval(
                f"interval [{bounds[0]}, {bounds[1]}] has {len(xq)} records, {len(np.unique(xq))} distinct q")
            fits.append(None)
            continue
        fits.append(fit_quantile_line(xq, yc, tau, interval=bounds))
    return fits, problems


@dataclass(frozen=True)
class BinMedianTable:
    q_center: np.ndarray
    median: np.ndarray
    count: np.ndarray

    def __len__(self) -> int:
        return len(self.q_center)


def empirical_bin_medians(records, bin_width: float = 0.25, q_lo: float = 0.0, q_hi: float = 4.0,
                          population: str = ALL_RECORDS) -> BinMedianTable:
    """Median confidence per equal-width blur bin; empty bins are left out."""
    rec = EvalRecords.from_records(records).population(population)
    n_bins = int(round((q_hi - q_lo) / bin_width))
    edges = q_lo + bin_width * np.arange(n_bins + 1)
    centers, medians, counts = [], [], []
    for (lo, hi), mask in interval_masks(rec.q, edges):
        if mask.any():
            centers.append((lo + hi) / 2)
            medians.append(float(np.median(rec.confidence[mask])))
            counts.append(int(mask.sum()))
    return BinMedianTable(np.array(centers), np.array(medians), np.array(counts, dtype=np.int64))


def adequacy_check(fit: QuantileFit, table: BinMedianTable, closed: bool | None = None) -> float:
    """Largest gap between the fitted line and the bin medians inside its interval.

    The interval is ``[lo, hi)``, or ``[lo, hi]`` when ``closed`` (default: closed
    when ``hi`` is the last bin edge in the table's range).
    """
    lo, hi = fit.interval
    if closed is None:
        closed = len(table) > 0 and hi >= table.q_center.max()
    inside = (table.q_center >= lo) & ((table.q_center <= hi) if closed else (table.q_center < hi))
    if inside.sum() < 2:
        raise NoBinsInInterval(f"fewer than two bins inside [{lo}, {hi}]")
    return float(np.abs(table.median[inside] - fit.predict(table.q_center[inside])).max())


def write_fits_csv(fits, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["interval_lo", "interval_hi", "tau", "beta0", "beta1", "pinball_total", "n_points"])
        for f in fits:
            if f is not None:
                w.writerow([f.interval[0], f.interval[1], f.tau, repr(f.beta0), repr(f.beta1),
                            repr(f.pinball_total), f.n_points])


def write_bins_csv(table: BinMedianTable, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["q_center", "median", "count"])
        for c, m, n in zip(table.q_center, table.median, table.count):
            w.writerow([repr(float(c)), repr(float(m)), int(n)])

"""Regret accounting over run traces: realized / pseudo / subset regret,
interval-width budgets, empirical growth rates, and bracket coverage."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .confidence import ConfidenceConfig, slack_tables_for


def realized_regret(losses: Sequence[float], l_star: float) -> np.ndarray:
    """Cumulative sums of (per-round loss - optimal expected loss)."""
    losses = np.asarray(losses, dtype=np.float64)
    return np.cumsum(losses - l_star)


def topm_regret_increment(
    selected: Sequence[int], oracle: Sequence[float], M: int
) -> float:
    """Mean optimum of the selected subset minus the best achievable M-subset mean."""
    if oracle is None:
        raise ValueError("subset regret needs the per-expert oracle table")
    if len(selected) > M:
        raise ValueError("selected subset exceeds the budget")
    l_bar = float(np.mean(sorted(oracle)[:M]))
    return sum(oracle[k] for k in selected) / M - l_bar


def interval_budget_series(
    trace,
    cfg: ConfidenceConfig,
    bound_fns: Sequence,
    keys: Optional[Sequence] = None,
) -> np.ndarray:
    """Width budget at each trace checkpoint, replayed from the training sets.

    The budget charges the full bracket width of the best expert at each of
    its training sessions plus 1/M of every expert's width at each of its
    sessions, with widths evaluated at the session's resulting count.
    Requires a full trace (per-round training sets) and an analytic oracle to
    identify the best expert.
    """
    if trace.training_sets is None:
        raise ValueError("interval budget needs a full trace (per-round sets)")
    if trace.l_star_table is None:
        raise ValueError("interval budget needs the oracle table")
    if keys is None:
        keys = list(range(len(bound_fns)))
    tables = slack_tables_for(cfg, bound_fns, keys)
    k_star = int(np.argmin(trace.l_star_table))
    counts = [0] * trace.K
    budget = 0.0
    out = []
    cp_iter = iter(np.asarray(trace.checkpoints).tolist())
    next_cp = next(cp_iter, None)
    for t, row in enumerate(np.asarray(trace.training_sets), start=1):
        for k in row:
            counts[k] += 1
            w = tables[k].width(counts[k])
            budget += w / trace.M
            if k == k_star:
                budget += w
        if t == next_cp:
            out.append(budget)
            next_cp = next(cp_iter, None)
    return np.asarray(out)


def interval_budget(
    trace,
    cfg: ConfidenceConfig,
    bound_fns: Sequence,
    keys: Optional[Sequence] = None,
) -> float:
    """Total width budget of a run (0 for an empty trace)."""
    if trace.T == 0:
        return 0.0
    return float(interval_budget_series(trace, cfg, bound_fns, keys)[-1])


def loglog_slope(
    series: Sequence[float],
    window: tuple[float, float],
    times: Optional[Sequence[float]] = None,
) -> float:
    """Least-squares slope of ln(series) against ln(t) over a time window.

    ``times`` defaults to 1..len(series).  The window must span at least a
    factor of 4 and the series must be strictly positive on it.
    """
    series = np.asarray(series, dtype=np.float64)
    if times is None:
        times = np.arange(1, len(series) + 1, dtype=np.float64)
    else:
        times = np.asarray(times, dtype=np.float64)
    t1, t2 = window
    if t2 < 4 * t1:
        raise ValueError("window must span at least a factor of 4")
    mask = (times >= t1) & (times <= t2)
    if mask.sum() < 2:
        raise ValueError("window contains fewer than two points")
    vals = series[mask]
    if np.any(vals <= 0):
        raise ValueError("regret not yet positive")
    x = np.log(times[mask])
    y = np.log(vals)
    x_c = x - x.mean()
    return float(np.dot(x_c, y - y.mean()) / np.dot(x_c, x_c))


@dataclass(frozen=True)
class CoverageStats:
    violations: int
    total_checks: int

    @property
    def run_violated(self) -> bool:
        return self.violations > 0


def coverage_stats(trace, oracle: Optional[Sequence[float]] = None) -> CoverageStats:
    """Count (expert, round) pairs whose bracket misses the true optimum.

    Uses the per-round bracket history of a full trace; untrained entries
    (NaN) are not checks.  A run fails coverage if any pair fails.
    """
    if trace.lcb_history is None or trace.ucb_history is None:
        raise ValueError("coverage needs a full trace with bracket history")
    table = np.asarray(trace.l_star_table if oracle is None else oracle, dtype=float)
    lcb = trace.lcb_history
    ucb = trace.ucb_history
    trained = ~np.isnan(lcb)
    ok = (lcb <= table[None, :]) & (table[None, :] <= ucb)
    violations = int(np.sum(trained & ~ok))
    return CoverageStats(violations=violations, total_checks=int(trained.sum()))


def approx_pseudo_regret_from_pointwise(
    checkpoints: Sequence[int], pointwise: Sequence[float], l_star: float
) -> np.ndarray:
    """Piecewise-constant approximation of cumulative expected-advice regret
    from pointwise advice losses evaluated only at checkpoints."""
    cps = np.asarray(checkpoints, dtype=np.float64)
    pts = np.asarray(pointwise, dtype=np.float64)
    widths = np.diff(np.concatenate([[0.0], cps]))
    return np.cumsum(widths * (pts - l_star))


def mean_and_band(curves: Sequence[np.ndarray], band: float = 0.5):
    """Mean curve with +-band*std envelopes across runs."""
    stack = np.vstack(curves)
    mean = stack.mean(axis=0)
    std = stack.std(axis=0)
    return mean, std, mean - band * std, mean + band * std

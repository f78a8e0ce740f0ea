"""Confidence brackets on each expert's optimal expected loss.

Two interchangeable schemes, built only from realized training losses, the
training count n, and the expert's internal regret bound U(n, delta):

Standard (Bernstein + Azuma slacks, per-count union bound)::

    lcb = mean - U(n, d_arm)/n - G(n, d_n)
    ucb = mean + H(n, d_n)
    G(n, d) = sqrt(2*log(1/d)/n) + 2*log(1/d)/(3n)
    H(n, d) = sqrt(2*log(1/d)/n)
    d_arm   = delta / (2K)
    d_n     = delta / (7*K*n^2)

Self-normalized (anytime in n, no per-count splitting)::

    xn(x, n) = x - 2/3 + 2*log(1 + log n)          # x = log(1/delta)
    g        = 2*xn/(3n)
    lcb      = mean - sqrt(3*g*mean) - g - U/n
    ucb      = mean + (9x/2n)*(6 + log x + log(1+4S))
                    + (1/n)*sqrt(2x*(1+4S)*(1 + log(1+4S)/2)),  S = n*mean

All logarithms are natural.  A ``scale`` multiplier (default 1.0) shrinks
every slack term uniformly; it exists because tight theoretical constants
are often too conservative in practice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

SCHEMES = ("standard", "standard-tight", "self-normalized")

# Regret-bound function: (n, delta) -> U(n, delta), vectorized over n.
BoundFn = Callable[..., float]


class NoObservationsError(ValueError):
    """Bounds are undefined before the first training session."""


def _require_trained(n: int) -> None:
    if n < 1:
        raise NoObservationsError("untrained expert has no bounds (n = 0)")


def delta_arm(delta: float, K: int) -> float:
    """Confidence share allotted to each expert's internal regret bound."""
    return delta / (2.0 * K)


def delta_n(delta: float, K: int, n: int) -> float:
    """Per-count confidence share; sums to < delta/2 over all (k, n)."""
    return delta / (7.0 * K * n * n)


def g_term(n: int, delta: float) -> float:
    """Bernstein-style slack sqrt(2*log(1/delta)/n) + 2*log(1/delta)/(3n)."""
    _require_trained(n)
    x = math.log(1.0 / delta)
    return math.sqrt(2.0 * x / n) + 2.0 * x / (3.0 * n)

def h_term(n: int, delta: float) -> float:
    """Azuma slack sqrt(2*log(1/delta)/n)."""
    _require_trained(n)
    return math.sqrt(2.0 * math.log(1.0 / delta) / n)


def xn_term(x: float, n: float) -> float:
    """Anytime-corrected exponent x - 2/3 + 2*log(1 + log n), for real n >= 1."""
    if n < 1:
        raise NoObservationsError("no observations")
    return x - 2.0 / 3.0 + 2.0 * math.log1p(math.log(n))


def self_normalized_lcb(running_loss: float, n: int, u_k_value: float, xn: float) -> float:
    """Lower bracket from the self-normalized scheme.

    ``xn`` is the already-corrected exponent (see :func:`xn_term`); the
    variance proxy uses the running loss itself, so the slack vanishes when
    the empirical loss is zero.
    """
    _require_trained(n)
    g = 2.0 * xn / (3.0 * n)
    return running_loss - math.sqrt(3.0 * g * running_loss) - g - u_k_value / n


def self_normalized_ucb(running_loss: float, n: int, x: float) -> float:
    """Upper bracket from the self-normalized scheme; requires x >= 1."""
    _require_trained(n)
    if x < 1.0:
        raise ValueError("self-normalized upper bound needs x >= 1")
    s4 = 1.0 + 4.0 * n * running_loss
    log_s4 = math.log(s4)
    poly = 9.0 * x / (2.0 * n) * (6.0 + math.log(x) + log_s4)
    root = math.sqrt(2.0 * x * s4 * (1.0 + 0.5 * log_s4)) / n
    return running_loss + poly + root


@dataclass(frozen=True)
class ConfidenceConfig:
    """Parameters shared by every bound computation in a run.

    delta_n_override forces a fixed per-count confidence (testing hook for
    exercising the closed forms with hand-picked delta values).
    """

    delta: float
    K: int
    scheme: str = "standard"
    scale: float = 1.0
    delta_n_override: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.scale < 0.0:
            raise ValueError("scale must be >= 0")

    def delta_arm(self) -> float:
        return delta_arm(self.delta, self.K)

    def delta_n(self, n: int) -> float:
        if self.delta_n_override is not None:
            return self.delta_n_override
        return delta_n(self.delta, self.K, n)


@dataclass(frozen=True, slots=True)
class ConfidenceState:
    """Snapshot of one expert's bracket at a given training count."""

    running_loss: float
    n: int
    lcb: float
    ucb: float

    def width(self) -> float:
        return self.ucb - self.lcb


def standard_bounds(
    running_loss: float, n: int, u_k: BoundFn, cfg: ConfidenceConfig
) -> tuple[float, float]:
    """(lcb, ucb) under the standard scheme at training count ``n``."""
    _require_trained(n)
    dn = cfg.delta_n(n)
    lower_slack = u_k(n, cfg.delta_arm()) / n + g_term(n, dn)
    upper_slack = h_term(n, dn)
    return (
        running_loss - cfg.scale * lower_slack,
        running_loss + cfg.scale * upper_slack,
    )


def tight_g_term(n: int, delta: float, z: float) -> float:
    """Bounded-loss refinement of the lower slack, sqrt(2*z*log(1/d)/(3n)) + 2*log(1/d)/n.

    ``z`` caps the variance proxy at min(1, ucb); used by the optional
    "standard-tight" scheme.
    """
    _require_trained(n)
    x = math.log(1.0 / delta)
    return math.sqrt(2.0 * z * x / (3.0 * n)) + 2.0 * x / n


def standard_tight_bounds(
    running_loss: float, n: int, u_k: BoundFn, cfg: ConfidenceConfig
) -> tuple[float, float]:
    """Standard scheme with the variance-capped lower slack."""
    _require_trained(n)
    dn = cfg.delta_n(n)
    upper_slack = h_term(n, dn)
    ucb = running_loss + cfg.scale * upper_slack
    z = min(1.0, ucb)
    lower_slack = u_k(n, cfg.delta_arm()) / n + tight_g_term(n, dn, z)
    return running_loss - cfg.scale * lower_slack, ucb


def interval_width(n: int, u_k: BoundFn, cfg: ConfidenceConfig) -> float:
    """Closed-form ucb - lcb for the standard scheme.

    Depends only on the training count, which is what makes the cumulative
    width budget of a whole run computable without replaying losses.
    """
    _require_trained(n)
    dn = cfg.delta_n(n)
    return cfg.scale * (
        h_term(n, dn) + g_term(n, dn) + u_k(n, cfg.delta_arm()) / n
    )


def confidence_state(
    loss_sum: float, n: int, u_k: BoundFn, cfg: ConfidenceConfig
) -> ConfidenceState:
    """Build the bracket snapshot for an expert with ``loss_sum`` over ``n`` sessions."""
    _require_trained(n)
    running = loss_sum / n
    if cfg.scheme == "standard":
        lcb, ucb = standard_bounds(running, n, u_k, cfg)
    elif cfg.scheme == "standard-tight":
        lcb, ucb = standard_tight_bounds(running, n, u_k, cfg)
    else:
        x = math.log(4.0 * cfg.K / cfg.delta)
        u_val = u_k(n, cfg.delta_arm())
        raw_lcb = self_normalized_lcb(running, n, u_val, xn_term(x, n))
        raw_ucb = self_normalized_ucb(running, n, x)
        lcb = running - cfg.scale * (running - raw_lcb)
        ucb = running + cfg.scale * (raw_ucb - running)
    return ConfidenceState(running_loss=running, n=n, lcb=lcb, ucb=ucb)


class SlackTable:
    """Per-count slack terms for the standard scheme, tabulated lazily.

    The engine evaluates bounds for every expert every round; since both
    slacks depend only on n (and the expert's bound parameters), they are
    grown in vectorized chunks and then read back as plain list lookups.
    Index 0 is a placeholder (bounds are undefined at n = 0).
    """

    CHUNK = 4096

    def __init__(self, cfg: ConfidenceConfig, u_fn: BoundFn):
        if cfg.scheme not in ("standard", "standard-tight"):
            raise ValueError("SlackTable only serves the standard schemes")
        self.cfg = cfg
        self.u_fn = u_fn
        self.lower: list[float] = [math.nan]
        self.upper: list[float] = [math.nan]

    def ensure(self, n: int) -> None:
        while len(self.lower) <= n:
            start = len(self.lower)
            stop = start + self.CHUNK
            ns = np.arange(start, stop, dtype=np.float64)
            if self.cfg.delta_n_override is not None:
                log_inv_dn = np.full_like(ns, math.log(1.0 / self.cfg.delta_n_override))
            else:
                log_inv_dn = math.log(7.0 * self.cfg.K / self.cfg.delta) + 2.0 * np.log(ns)
            h = np.sqrt(2.0 * log_inv_dn / ns)
            g = h + 2.0 * log_inv_dn / (3.0 * ns)
            u_over_n = np.asarray(self.u_fn(ns, self.cfg.delta_arm()), dtype=np.float64) / ns
            self.lower.extend((self.cfg.scale * (u_over_n + g)).tolist())
            self.upper.extend((self.cfg.scale * h).tolist())

    def width(self, n: int) -> float:
        self.ensure(n)
        return self.lower[n] + self.upper[n]


def slack_tables_for(
    cfg: ConfidenceConfig, u_fns: Sequence[BoundFn], keys: Sequence[object]
) -> list[SlackTable]:
    """One SlackTable per expert, shared between experts with equal ``keys``."""
    by_key: dict[object, SlackTable] = {}
    tables = []
    for u_fn, key in zip(u_fns, keys):
        if key not in by_key:
            by_key[key] = SlackTable(cfg, u_fn)
        tables.append(by_key[key])
    return tables

"""Budgeted selection engine: per-round loop over bound computation, training-set
and advisor selection, advice play, and training of the selected subset.

Round order is fixed: bounds are computed from the ledger as of the previous
round, then the training set (the M experts with the smallest lower bounds,
untrained experts first), then the advisor (smallest upper bound within the
set, untrained members ineligible while a trained one exists), then the
outcome is drawn, the advice loss suffered, and exactly the selected experts
are trained.  Experts outside the set are untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .confidence import (
    ConfidenceConfig,
    SlackTable,
    slack_tables_for,
    standard_tight_bounds,
    xn_term,
)
from .core import Advice, Environment
from .experts import Expert, ExpertHistory, safe_advice

NEG_INF = float("-inf")


class RoundError(RuntimeError):
    """Wraps an expert/environment failure with the round index attached."""


def select_training_set(lcbs: Sequence, M: int) -> list[int]:
    """The M expert ids minimizing the summed lower bounds.

    The arg-min over subsets of a separable sum is the bottom-M.  Untrained
    experts (``None`` entries, or -inf) sort first, so they are picked up in
    index order until everyone has been trained once.  Ties break toward the
    lower index; the result is returned in ascending id order.
    """
    K = len(lcbs)
    if not 1 <= M <= K:
        raise ValueError(f"M must satisfy 1 <= M <= K (got M={M}, K={K})")
    vals = [NEG_INF if v is None else v for v in lcbs]
    order = sorted(range(K), key=vals.__getitem__)
    return sorted(order[:M])


def select_advisor(training_set: Sequence[int], ucbs: Sequence) -> int:
    """Member of the training set with the smallest upper bound.

    Untrained members (``None`` upper bound) are never chosen while a trained
    member exists; an all-untrained set falls back to its lowest index.  Ties
    break toward the lower index.
    """
    if not training_set:
        raise RuntimeError("advisor selection from an empty training set")
    best = -1
    best_key: Optional[tuple] = None
    for k in sorted(training_set):
        u = ucbs[k]
        key = (1, 0.0) if u is None else (0, u)
        if best_key is None or key < best_key:
            best, best_key = k, key
    return best


class MlcbProcedure:
    """Confidence-bound selection: bottom-M lower bounds, then min upper bound."""

    name = "m-lcb"
    needs_bounds = True

    def start(self, engine: "Engine") -> None:
        if engine.cfg is None:
            raise ValueError("m-lcb needs a ConfidenceConfig")

    def select(self, engine: "Engine", t: int) -> tuple[list[int], int]:
        s = select_training_set(engine._lcbs_key, engine.M)
        return s, select_advisor(s, engine._ucbs)

    def observe(self, engine, t, training_set, advisor, losses) -> None:
        pass


@dataclass(slots=True)
class RoundDecision:
    """Everything one round decided and observed."""

    t: int
    training_set: tuple[int, ...]
    advisor: int
    advice: Advice
    realized_loss: float
    per_expert_losses: dict[int, float]


class ExpertLedger:
    """Per-expert training bookkeeping: session count and running loss sum.

    ``trained_rounds`` keeps the full list of training rounds only under the
    debug flag; the count alone is what the bounds need.
    """

    __slots__ = ("n", "loss_sum", "trained_rounds")

    def __init__(self, K: int, debug: bool = False):
        self.n = [0] * K
        self.loss_sum = [0.0] * K
        self.trained_rounds: Optional[list[list[int]]] = (
            [[] for _ in range(K)] if debug else None
        )


@dataclass
class Streams:
    """Independent per-component generators spawned from one master seed.

    The environment owns its stream (passed at construction), so changing the
    budget or the procedure never desynchronizes the outcome sequence.
    """

    wrapper: np.random.Generator
    procedure: np.random.Generator
    experts: list[np.random.Generator]


def derive_streams(base_seed: int, seed_index: int, K: int):
    """(env_seed, Streams): stable spawn order env, wrapper, procedure, experts."""
    root = np.random.SeedSequence(entropy=base_seed, spawn_key=(seed_index,))
    children = root.spawn(3 + K)
    streams = Streams(
        wrapper=np.random.default_rng(children[1]),
        procedure=np.random.default_rng(children[2]),
        experts=[np.random.default_rng(c) for c in children[3:]],
    )
    return children[0], streams


def checkpoint_schedule(T: int, full: bool = False) -> list[int]:
    """Every round up to 1000, then ~100 log-spaced points per decade, plus T."""
    if T <= 0:
        return []
    if full or T <= 1000:
        return list(range(1, T + 1))
    cps = list(range(1, 1001))
    ratio = 10.0 ** 0.01
    v = 1000.0
    last = 1000
    while True:
        v *= ratio
        nxt = int(v)
        if nxt >= T:
            break
        if nxt > last:
            cps.append(nxt)
            last = nxt
    cps.append(T)
    return cps


@dataclass
class RunTrace:
    """Aggregated record of one run; per-round arrays only in full mode."""

    K: int
    M: int
    T: int
    procedure: str
    meta: dict = field(default_factory=dict)

    checkpoints: np.ndarray = None
    cum_loss: np.ndarray = None
    cum_realized_regret: Optional[np.ndarray] = None
    cum_pseudo_regret: Optional[np.ndarray] = None
    cum_topm_regret: Optional[np.ndarray] = None
    delta_budget: Optional[np.ndarray] = None
    n_snapshots: Optional[np.ndarray] = None  # checkpoints x K
    cp_advisors: Optional[list[int]] = None  # decision taken at each checkpoint round
    cp_sets: Optional[list[tuple[int, ...]]] = None
    cp_round_losses: Optional[list[float]] = None

    final_n: list[int] = None
    advisor_counts: list[int] = None
    selection_counts: list[int] = None
    l_star: Optional[float] = None
    l_star_table: Optional[list[float]] = None

    # full-mode per-round records
    losses: Optional[np.ndarray] = None
    pseudo_losses: Optional[np.ndarray] = None
    advisors: Optional[np.ndarray] = None
    training_sets: Optional[np.ndarray] = None  # T x M
    lcb_history: Optional[np.ndarray] = None  # T x K (nan when untrained)
    ucb_history: Optional[np.ndarray] = None

    # counters
    rounds: int = 0
    budget_violations: int = 0
    topm_negative_increments: int = 0
    ledger_mismatch: int = 0
    coverage_violations: Optional[int] = None
    coverage_checks: Optional[int] = None
    coverage_violated: Optional[bool] = None
    delta_violations: Optional[int] = None
    clamp_count: int = 0


class Engine:
    """One sequential run of a selection procedure over self-learning experts."""

    def __init__(
        self,
        env: Environment,
        experts: Sequence[Expert],
        procedure,
        M: int,
        cfg: Optional[ConfidenceConfig],
        streams: Streams,
        *,
        record: str = "compact",
        track_bounds: bool = False,
        track_coverage: bool = False,
        track_delta: bool = False,
        debug_sets: bool = False,
    ):
        K = len(experts)
        if K < 1:
            raise ValueError("need at least one expert")
        if not 1 <= M <= K:
            raise ValueError(f"M must satisfy 1 <= M <= K (got M={M}, K={K})")
        if cfg is not None and cfg.K != K:
            raise ValueError("ConfidenceConfig.K disagrees with the expert count")
        self.env = env
        self.experts = list(experts)
        self.procedure = procedure
        self.K = K
        self.M = M
        self.cfg = cfg
        self.streams = streams
        self.record = record
        self.ledger = ExpertLedger(K, debug=debug_sets)
        self.states = [ex.initial_state() for ex in self.experts]
        self.histories = [ExpertHistory() for _ in range(K)]
        self.t = 0

        self._need_bounds = bool(
            getattr(procedure, "needs_bounds", False) or track_bounds or track_coverage
        )
        if self._need_bounds and cfg is None:
            raise ValueError("bound tracking needs a ConfidenceConfig")
        self._track_bounds = track_bounds
        self._track_coverage = track_coverage
        self._track_delta = track_delta

        self._lcbs: list = [None] * K       # None while untrained
        self._lcbs_key: list = [NEG_INF] * K  # -inf while untrained (sort key)
        self._ucbs: list = [None] * K
        self._tables: Optional[list[SlackTable]] = None
        self._sn_x = None
        if self._need_bounds or track_delta:
            if cfg is None:
                raise ValueError("width tracking needs a ConfidenceConfig")
            if cfg.scheme == "standard":
                self._tables = slack_tables_for(
                    cfg,
                    [ex.regret_bound for ex in self.experts],
                    [ex.bound_key() for ex in self.experts],
                )
            elif cfg.scheme == "self-normalized":
                self._sn_x = math.log(4.0 * cfg.K / cfg.delta)

        self.l_star_table = env.oracle_table()
        self.l_star = env.optimal_loss()
        self._k_star = None
        self._l_bar_star = None
        if self.l_star_table is not None:
            self._k_star = int(np.argmin(self.l_star_table))
            self._l_bar_star = float(np.mean(sorted(self.l_star_table)[:M]))
        if track_delta and self._k_star is None:
            raise ValueError("width-budget tracking needs an analytic oracle")
        if track_coverage and self.l_star_table is None:
            raise ValueError("coverage tracking needs an analytic oracle")

        self._has_pseudo = env.advice_expected_loss(
            Advice(value=self.experts[0].advice_value(self.states[0]), slot=0)
        ) is not None

        # cumulative accumulators
        self._cum_loss = 0.0
        self._cum_pseudo = 0.0
        self._cum_topm = 0.0
        self._delta_cum = 0.0
        self._coverage_violations = 0
        self._coverage_checks = 0
        self._delta_violations = 0
        self._budget_violations = 0
        self._topm_negative = 0
        self._sum_set_sizes = 0
        self.advisor_counts = [0] * K
        self.selection_counts = [0] * K

        procedure.start(self)

    # -- bounds ------------------------------------------------------------
    def _fill_bounds(self) -> None:
        n_arr = self.ledger.n
        sums = self.ledger.loss_sum
        lcbs, keys, ucbs = self._lcbs, self._lcbs_key, self._ucbs
        if self.cfg.scheme == "standard":
            tables = self._tables
            for k in range(self.K):
                n = n_arr[k]
                if n == 0:
                    lcbs[k] = None
                    keys[k] = NEG_INF
                    ucbs[k] = None
                    continue
                table = tables[k]
                if n >= len(table.lower):
                    table.ensure(n)
                running = sums[k] / n
                lo = running - table.lower[n]
                hi = running + table.upper[n]
                lcbs[k] = lo
                keys[k] = lo
                ucbs[k] = hi
        elif self.cfg.scheme == "standard-tight":
            for k in range(self.K):
                n = n_arr[k]
                if n == 0:
                    lcbs[k] = None
                    keys[k] = NEG_INF
                    ucbs[k] = None
                    continue
                lo, hi = standard_tight_bounds(
                    sums[k] / n, n, self.experts[k].regret_bound, self.cfg
                )
                lcbs[k] = lo
                keys[k] = lo
                ucbs[k] = hi
        else:
            x = self._sn_x
            scale = self.cfg.scale
            d_arm = self.cfg.delta_arm()
            for k in range(self.K):
                n = n_arr[k]
                if n == 0:
                    lcbs[k] = None
                    keys[k] = NEG_INF
                    ucbs[k] = None
                    continue
                running = sums[k] / n
                g = 2.0 * xn_term(x, n) / (3.0 * n)
                u_val = float(self.experts[k].regret_bound(n, d_arm))
                lo_slack = math.sqrt(3.0 * g * running) + g + u_val / n
                s4 = 1.0 + 4.0 * n * running
                log_s4 = math.log(s4)
                hi_slack = (
                    9.0 * x / (2.0 * n) * (6.0 + math.log(x) + log_s4)
                    + math.sqrt(2.0 * x * s4 * (1.0 + 0.5 * log_s4)) / n
                )
                lo = running - scale * lo_slack
                lcbs[k] = lo
                keys[k] = lo
                ucbs[k] = running + scale * hi_slack

    def _width_at(self, k: int, n: int) -> float:
        if self._tables is not None:
            return self._tables[k].width(n)
        running = self.ledger.loss_sum[k] / n
        if self.cfg.scheme == "standard-tight":
            lo, hi = standard_tight_bounds(
                running, n, self.experts[k].regret_bound, self.cfg
            )
            return hi - lo
        # self-normalized widths depend on the running loss as well
        x = self._sn_x
        g = 2.0 * xn_term(x, n) / (3.0 * n)
        u_val = float(self.experts[k].regret_bound(n, self.cfg.delta_arm()))
        s4 = 1.0 + 4.0 * n * running
        log_s4 = math.log(s4)
        lo_slack = math.sqrt(3.0 * g * running) + g + u_val / n
        hi_slack = (
            9.0 * x / (2.0 * n) * (6.0 + math.log(x) + log_s4)
            + math.sqrt(2.0 * x * s4 * (1.0 + 0.5 * log_s4)) / n
        )
        return self.cfg.scale * (lo_slack + hi_slack)

    # -- one round ----------------------------------------------------------
    def run_round(self) -> RoundDecision:
        self.t += 1
        t = self.t
        if self._need_bounds:
            self._fill_bounds()

        training_set, advisor = self.procedure.select(self, t)
        if len(training_set) > self.M or advisor not in training_set:
            self._budget_violations += 1
            raise RoundError(
                f"round {t}: illegal selection S={training_set} advisor={advisor}"
            )

        ex = self.experts[advisor]
        if self.ledger.n[advisor] == 0:
            value = ex.advice_value(self.states[advisor])
        else:
            value = safe_advice(ex, self.histories[advisor], self.streams.wrapper)
        advice = Advice(value=value, slot=advisor)

        outcome = self.env.sample(t)
        loss = self.env.loss(advice, outcome)

        per_losses: dict[int, float] = {}
        ledger = self.ledger
        for k in training_set:
            exp_k = self.experts[k]
            state = self.states[k]
            l_k, snap = exp_k.realized_loss(state, outcome, self.streams.experts[k])
            hist = self.histories[k]
            hist.append(snap, l_k)
            exp_k.accumulate_advice(snap)
            self.states[k] = exp_k.update(state, hist, outcome)
            ledger.n[k] += 1
            ledger.loss_sum[k] += l_k
            if ledger.trained_rounds is not None:
                ledger.trained_rounds[k].append(t)
            per_losses[k] = l_k
            self.selection_counts[k] += 1
            if self._track_delta:
                w = self._width_at(k, ledger.n[k])
                self._delta_cum += w / self.M
                if k == self._k_star:
                    self._delta_cum += w

        self.procedure.observe(self, t, training_set, advisor, per_losses)

        self.advisor_counts[advisor] += 1
        self._sum_set_sizes += len(training_set)
        self._cum_loss += loss
        if self._has_pseudo:
            self._cum_pseudo += self.env.advice_expected_loss(advice)
        if self._l_bar_star is not None:
            contrib = 0.0
            for k in training_set:
                contrib += self.l_star_table[k]
            inc = contrib / self.M - self._l_bar_star
            if inc < -1e-12:
                self._topm_negative += 1
            self._cum_topm += inc
        if self._track_coverage:
            table = self.l_star_table
            lcbs, ucbs = self._lcbs, self._ucbs
            for k in range(self.K):
                if lcbs[k] is None:
                    continue
                self._coverage_checks += 1
                opt = table[k]
                if not (lcbs[k] <= opt <= ucbs[k]):
                    self._coverage_violations += 1
        if self._track_delta and self.l_star is not None:
            pseudo_reg = self._cum_pseudo - t * self.l_star
            if pseudo_reg > self._delta_cum + 1e-9:
                self._delta_violations += 1

        return RoundDecision(
            t=t,
            training_set=tuple(training_set),
            advisor=advisor,
            advice=advice,
            realized_loss=loss,
            per_expert_losses=per_losses,
        )

    # -- full horizon --------------------------------------------------------
    def run(self, T: int) -> RunTrace:
        full = self.record == "full"
        cps = checkpoint_schedule(T, full=full)
        cp_iter = iter(cps)
        next_cp = next(cp_iter, None)

        cp_loss: list[float] = []
        cp_pseudo: list[float] = []
        cp_topm: list[float] = []
        cp_delta: list[float] = []
        cp_n: list[list[int]] = []
        cp_advisors: list[int] = []
        cp_sets: list[tuple[int, ...]] = []
        cp_round_losses: list[float] = []

        losses = [] if full else None
        pseudo_losses = [] if (full and self._has_pseudo) else None
        advisors = [] if full else None
        training_sets = [] if full else None
        lcb_rows = [] if (full and self._track_bounds) else None
        ucb_rows = [] if (full and self._track_bounds) else None

        for _ in range(T):
            try:
                dec = self.run_round()
            except RoundError:
                raise
            except Exception as exc:  # attach the round index
                raise RoundError(f"round {self.t + 1}: {exc}") from exc
            if full:
                losses.append(dec.realized_loss)
                advisors.append(dec.advisor)
                training_sets.append(dec.training_set)
                if pseudo_losses is not None:
                    pseudo_losses.append(self.env.advice_expected_loss(dec.advice))
                if lcb_rows is not None:
                    lcb_rows.append(
                        [math.nan if v is None else v for v in self._lcbs]
                    )
                    ucb_rows.append(
                        [math.nan if v is None else v for v in self._ucbs]
                    )
            if self.t == next_cp:
                cp_loss.append(self._cum_loss)
                if self._has_pseudo:
                    cp_pseudo.append(self._cum_pseudo)
                if self._l_bar_star is not None:
                    cp_topm.append(self._cum_topm)
                if self._track_delta:
                    cp_delta.append(self._delta_cum)
                cp_n.append(list(self.ledger.n))
                cp_advisors.append(dec.advisor)
                cp_sets.append(dec.training_set)
                cp_round_losses.append(dec.realized_loss)
                next_cp = next(cp_iter, None)

        n_total = sum(self.ledger.n)
        if n_total != self._sum_set_sizes:
            raise RoundError(
                f"ledger mismatch: sum n_k={n_total} != sum |S_t|={self._sum_set_sizes}"
            )

        cps_arr = np.asarray(cps, dtype=np.int64)
        cum_loss = np.asarray(cp_loss)
        trace = RunTrace(
            K=self.K,
            M=self.M,
            T=T,
            procedure=getattr(self.procedure, "name", type(self.procedure).__name__),
            checkpoints=cps_arr,
            cum_loss=cum_loss,
            final_n=list(self.ledger.n),
            advisor_counts=list(self.advisor_counts),
            selection_counts=list(self.selection_counts),
            l_star=self.l_star,
            l_star_table=None if self.l_star_table is None else list(self.l_star_table),
            rounds=T,
            budget_violations=self._budget_violations,
            topm_negative_increments=self._topm_negative,
            clamp_count=getattr(self.env, "clamp_count", 0),
        )
        trace.meta = {
            "scheme": None if self.cfg is None else self.cfg.scheme,
            "scale": None if self.cfg is None else self.cfg.scale,
            "delta": None if self.cfg is None else self.cfg.delta,
            "wrappers": [ex.wrapper for ex in self.experts],
            "advice_variants": [
                getattr(ex, "advice_variant", None) for ex in self.experts
            ],
        }
        if self.l_star is not None:
            trace.cum_realized_regret = cum_loss - cps_arr * self.l_star
            if self._has_pseudo:
                trace.cum_pseudo_regret = np.asarray(cp_pseudo) - cps_arr * self.l_star
        if self._l_bar_star is not None:
            trace.cum_topm_regret = np.asarray(cp_topm)
        if self._track_delta:
            trace.delta_budget = np.asarray(cp_delta)
            trace.delta_violations = self._delta_violations
        trace.n_snapshots = np.asarray(cp_n, dtype=np.int64) if cp_n else None
        trace.cp_advisors = cp_advisors
        trace.cp_sets = cp_sets
        trace.cp_round_losses = cp_round_losses
        if self._track_coverage:
            trace.coverage_violations = self._coverage_violations
            trace.coverage_checks = self._coverage_checks
            trace.coverage_violated = self._coverage_violations > 0
        if full:
            trace.losses = np.asarray(losses)
            trace.advisors = np.asarray(advisors, dtype=np.int64)
            trace.training_sets = np.asarray(training_sets, dtype=np.int64)
            if pseudo_losses is not None:
                trace.pseudo_losses = np.asarray(pseudo_losses)
            if lcb_rows is not None:
                trace.lcb_history = np.asarray(lcb_rows)
                trace.ucb_history = np.asarray(ucb_rows)
        return trace

"""Self-learning experts: state, append-only history, update rules, safe advice.

Three families are provided:

* gradient-descent experts over a bounded parameter ball (analytic gradient
  oracle supplied by the environment),
* index-policy bandit experts over a finite bank of base actions,
* static experts that never change their advice.

Each family declares an anytime internal-regret bound ``regret_bound(n, delta)``
used by the confidence module, and a safe-advice wrapper (averaging over past
states, or uniform sampling of a past state) whose expected loss is dominated
by the running average of state losses.
"""

from __future__ import annotations

import math
from typing import Callable, Optional, Sequence

import numpy as np

from .core import clip_loss


class DivergedExpertError(RuntimeError):
    pass


class UntrainedExpertError(RuntimeError):
    pass


def ogd_regret_bound(n, G: float, R: float, const: float = 1.5):
    """Deterministic gradient-descent regret bound const * G * R * sqrt(n).

    Holds for step sizes eta_t = R / (G * sqrt(t)) on convex G-Lipschitz
    losses over a ball of radius R; independent of the confidence level.
    """
    return const * G * R * np.sqrt(n)


def ucb1_regret_bound(n, d: int, delta: float, const: float = 8.0):
    """Anytime high-probability bound c * sqrt(d * n * log(n*d/delta)) for an
    index policy over d base actions (zero at n = 0)."""
    n_arr = np.asarray(n, dtype=np.float64)
    safe = np.maximum(n_arr, 1.0)
    vals = const * np.sqrt(d * safe * np.log(safe * d / delta))
    out = np.where(n_arr > 0, vals, 0.0)
    if np.ndim(n) == 0:
        return float(out)
    return out


class ExpertHistory:
    """Append-only record of (state snapshot, realized loss) per training session.

    Past entries never change; the advice snapshots used by the wrappers are
    derived from the stored states on demand, while the averaging wrapper
    keeps an incremental sum for O(1) queries.
    """

    __slots__ = ("states", "losses")

    def __init__(self):
        self.states: list = []
        self.losses: list[float] = []

    def append(self, state_snapshot, loss: float) -> None:
        self.states.append(state_snapshot)
        self.losses.append(loss)

    def __len__(self) -> int:
        return len(self.losses)


class Expert:
    """Common surface of one self-learning expert.

    ``slot`` ties the expert to its slice of the environment's outcome
    payload.  Subclasses implement the update rule, the advice map, and the
    realized-loss evaluation; the engine owns the history and the ledger.
    """

    wrapper = "averaging"  # or "sampling"

    def __init__(self, slot: int):
        self.slot = slot
        self._advice_sum: Optional[list[float]] = None

    # -- family-specific ---------------------------------------------------
    def initial_state(self):
        raise NotImplementedError

    def advice_value(self, state):
        """Map a state to its advice payload (the g map)."""
        raise NotImplementedError

    def realized_loss(self, state, outcome, rng) -> tuple[float, object]:
        """Loss the expert incurs on ``outcome`` plus the history snapshot.

        Bandit-style experts sample their action here; parametric experts
        evaluate their predictor.  Returned losses are already in [0, 1].
        """
        raise NotImplementedError

    def update(self, state, history: ExpertHistory, outcome):
        """New state from history (the realized loss of ``state`` is already
        the last history entry)."""
        raise NotImplementedError

    def regret_bound(self, n, delta: float):
        raise NotImplementedError

    def bound_key(self):
        """Experts with equal keys share tabulated confidence slacks."""
        raise NotImplementedError

    # -- advice bookkeeping --------------------------------------------------
    def accumulate_advice(self, snapshot) -> None:
        vec = self.snapshot_advice(snapshot)
        if self._advice_sum is None:
            self._advice_sum = [float(v) for v in vec]
        else:
            acc = self._advice_sum
            for i, v in enumerate(vec):
                acc[i] += v

    def snapshot_advice(self, snapshot) -> Sequence[float]:
        """Advice contributed by one stored history snapshot."""
        return self.advice_value(snapshot)

    def mean_advice(self, n: int) -> list[float]:
        return [v / n for v in self._advice_sum]


def safe_advice(expert: Expert, history: ExpertHistory, rng=None):
    """Wrapper advice from the expert's training history.

    Averaging returns the componentwise mean of past advice values; sampling
    returns the advice of a uniformly drawn past state.
    """
    n = len(history)
    if n == 0:
        raise UntrainedExpertError("untrained expert queried for advice")
    if expert.wrapper == "averaging":
        return expert.mean_advice(n)
    if expert.wrapper == "sampling":
        if rng is None:
            raise ValueError("sampling wrapper needs a generator")
        idx = int(rng.integers(n))
        return list(expert.snapshot_advice(history.states[idx]))
    raise ValueError(f"unknown wrapper {expert.wrapper!r}")


class OgdExpert(Expert):
    """Projected gradient descent over a radius-``radius`` parameter ball.

    The environment supplies analytic loss and gradient oracles; step sizes
    follow eta_t = radius / (lipschitz * sqrt(t)) unless an explicit schedule
    is given.
    """

    def __init__(
        self,
        slot: int,
        dim: int,
        radius: float,
        lipschitz: float,
        loss_fn: Callable,
        grad_fn: Callable,
        bound_const: float = 1.5,
        eta: Optional[Callable[[int], float]] = None,
        wrapper: str = "averaging",
        init: Optional[np.ndarray] = None,
    ):
        super().__init__(slot)
        if radius <= 0 or lipschitz <= 0:
            raise ValueError("radius and lipschitz must be positive")
        self.dim = dim
        self.radius = radius
        self.lipschitz = lipschitz
        self.loss_fn = loss_fn
        self.grad_fn = grad_fn
        self.bound_const = bound_const
        self.eta = eta or (lambda t: radius / (lipschitz * math.sqrt(t)))
        self.wrapper = wrapper
        self._init = np.zeros(dim) if init is None else np.asarray(init, dtype=float)

    def initial_state(self) -> np.ndarray:
        return self._init.copy()

    def advice_value(self, state):
        return state

    def realized_loss(self, state, outcome, rng):
        return clip_loss(float(self.loss_fn(state, outcome))), state.copy()

    def update(self, state, history, outcome):
        grad = np.asarray(self.grad_fn(state, outcome), dtype=float)
        if not np.all(np.isfinite(grad)):
            raise DivergedExpertError("diverged expert")
        step = self.eta(len(history))
        new = state - step * grad
        norm = float(np.linalg.norm(new))
        if norm > self.radius:
            new *= self.radius / norm
        return new

    def regret_bound(self, n, delta):
        return ogd_regret_bound(n, self.lipschitz, self.radius, self.bound_const)

    def bound_key(self):
        return ("ogd", self.lipschitz, self.radius, self.bound_const)

    def mean_advice(self, n):
        return np.asarray(self._advice_sum) / n


class Ucb1BanditExpert(Expert):
    """Index-policy expert over ``d`` base actions with Bernoulli-style losses.

    The state is the (degenerate) action distribution the policy would play
    next: after every arm has been tried once, play the arm minimizing
    mean_j - sqrt(explore * ln(n) / count_j).  Advice exposes either the
    state's probability vector or the empirical marginal of played actions;
    the two coincide for a deterministic index policy.
    """

    def __init__(
        self,
        slot: int,
        d: int,
        c_bound: float = 8.0,
        explore: float = 2.0,
        wrapper: str = "averaging",
        advice_variant: str = "probability-vector",
    ):
        super().__init__(slot)
        if d < 1:
            raise ValueError("need at least one base action")
        if advice_variant not in ("probability-vector", "empirical-marginal"):
            raise ValueError(f"unknown advice variant {advice_variant!r}")
        self.d = d
        self.c_bound = c_bound
        self.explore = explore
        self.wrapper = wrapper
        self.advice_variant = advice_variant

    def initial_state(self):
        # (target arm, per-arm counts, per-arm loss sums)
        return (0, (0,) * self.d, (0.0,) * self.d)

    def advice_value(self, state):
        vec = [0.0] * self.d
        vec[state[0]] = 1.0
        return vec

    def realized_loss(self, state, outcome, rng):
        arm = state[0]
        # snapshot records the action actually played this session
        return outcome.payload[self.slot][arm], arm

    def snapshot_advice(self, snapshot):
        vec = [0.0] * self.d
        vec[snapshot] = 1.0
        return vec

    def accumulate_advice(self, snapshot) -> None:
        if self._advice_sum is None:
            self._advice_sum = [0.0] * self.d
        self._advice_sum[snapshot] += 1.0

    def update(self, state, history, outcome):
        played = history.states[-1]
        loss = history.losses[-1]
        _, counts, sums = state
        counts = counts[:played] + (counts[played] + 1,) + counts[played + 1 :]
        sums = sums[:played] + (sums[played] + loss,) + sums[played + 1 :]
        n = len(history)
        target = -1
        best = math.inf
        for j in range(self.d):
            if counts[j] == 0:
                target = j
                break
            idx = sums[j] / counts[j] - math.sqrt(self.explore * math.log(n) / counts[j])
            if idx < best:
                best = idx
                target = j
        return (target, counts, sums)

    def regret_bound(self, n, delta):
        return ucb1_regret_bound(n, self.d, delta, self.c_bound)

    def bound_key(self):
        return ("ucb1", self.d, self.c_bound)


class StaticExpert(Expert):
    """Fixed-advice expert; its update rule is the identity and its internal
    regret is identically zero (its state space is the single point)."""

    def __init__(self, slot: int, advice, loss_fn: Callable, wrapper: str = "averaging"):
        super().__init__(slot)
        self._advice = list(advice) if isinstance(advice, (list, tuple)) else advice
        self.loss_fn = loss_fn
        self.wrapper = wrapper

    def initial_state(self):
        return self._advice

    def advice_value(self, state):
        return state

    def realized_loss(self, state, outcome, rng):
        return clip_loss(float(self.loss_fn(state, outcome))), state

    def update(self, state, history, outcome):
        return state

    def regret_bound(self, n, delta):
        if np.ndim(n) == 0:
            return 0.0
        return np.zeros(np.shape(n))

    def bound_key(self):
        return ("static",)

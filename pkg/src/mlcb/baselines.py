"""Comparator procedures sharing the engine's round interface.

* round-robin: deterministic rotation of size-M windows over the expert ids.
* limited-advice: importance-weighted exponential weights; the advisor is
  sampled from the weight distribution and M-1 extra experts are observed
  uniformly at random.
* oracle: always plays (and trains) the expert with the smallest true optimal
  loss; the lower envelope used to normalize regret plots.
"""

from __future__ import annotations

import math

import numpy as np


class WeightsCollapsedError(RuntimeError):
    pass


def round_robin_select(t: int, K: int, M: int) -> tuple[list[int], int]:
    """Window t of the rotation: ids ((t-1)*M + j) % K for j < M, advisor first.

    The training set is returned in ascending id order; the advisor is the
    window's first element.
    """
    if not 1 <= M <= K:
        raise ValueError(f"M must satisfy 1 <= M <= K (got M={M}, K={K})")
    base = (t - 1) * M
    window = [(base + j) % K for j in range(M)]
    return sorted(window), window[0]


class RoundRobinProcedure:
    name = "round-robin"
    needs_bounds = False

    def start(self, engine) -> None:
        pass

    def select(self, engine, t: int):
        return round_robin_select(t, engine.K, engine.M)

    def observe(self, engine, t, training_set, advisor, losses) -> None:
        pass


class LimitedAdviceProcedure:
    """Exponential weights with importance-weighted loss estimates.

    Learning rate eta_t = sqrt(M * ln K / (K * t)); each observed loss is
    divided by the probability of observing that expert this round, i.e.
    p_k + (1 - p_k) * (M - 1) / (K - 1).
    """

    name = "limited-advice"
    needs_bounds = False

    def __init__(self, eta_scale: float = 1.0):
        self.eta_scale = eta_scale
        self.weights: np.ndarray = None
        self._probs: np.ndarray = None

    def start(self, engine) -> None:
        self.weights = np.full(engine.K, 1.0 / engine.K)

    def select(self, engine, t: int):
        K, M = engine.K, engine.M
        rng = engine.streams.procedure
        self._probs = self.weights / self.weights.sum()
        u = rng.random()
        acc = 0.0
        advisor = K - 1
        for k in range(K):
            acc += self._probs[k]
            if u < acc:
                advisor = k
                break
        chosen = [advisor]
        if M > 1:
            others = [k for k in range(K) if k != advisor]
            # partial Fisher-Yates draw of M-1 distinct observation experts
            for j in range(M - 1):
                i = j + int(rng.integers(len(others) - j))
                others[j], others[i] = others[i], others[j]
            chosen.extend(others[: M - 1])
        return sorted(chosen), advisor

    def observe(self, engine, t, training_set, advisor, losses) -> None:
        K, M = engine.K, engine.M
        eta = self.eta_scale * math.sqrt(M * math.log(K) / (K * t)) if K > 1 else 0.0
        probs = self._probs
        w = self.weights
        for k in training_set:
            if K > 1:
                obs_prob = probs[k] + (1.0 - probs[k]) * (M - 1) / (K - 1)
            else:
                obs_prob = 1.0
            w[k] *= math.exp(-eta * losses[k] / obs_prob)
        total = float(w.sum())
        if total < 1e-12:
            raise WeightsCollapsedError("weights collapsed")
        w /= total


class OracleProcedure:
    """Plays and trains argmin of the true per-expert optima every round."""

    name = "oracle"
    needs_bounds = False

    def __init__(self):
        self.k_star: int = -1

    def start(self, engine) -> None:
        table = engine.l_star_table
        if table is None:
            raise ValueError("oracle baseline requires analytic environment")
        best = min(table)
        self.k_star = min(k for k, v in enumerate(table) if v == best)

    def select(self, engine, t: int):
        return [self.k_star], self.k_star

    def observe(self, engine, t, training_set, advisor, losses) -> None:
        pass

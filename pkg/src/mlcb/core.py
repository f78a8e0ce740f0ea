"""Shared vocabulary: outcomes, advice, losses, and the environment contract.

Everything downstream (experts, the selection engine, baselines, metrics)
talks about environments only through this module.  Outcome payloads are
environment-specific and opaque to the meta layer; the meta layer only ever
sees scalar losses in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Optional, Sequence

SIMPLEX_TOL = 1e-9


class NonFiniteLossError(ValueError):
    pass


def clip_loss(raw: float) -> float:
    """Clamp a raw loss value into [0, 1].

    Losses outside the range are clipped rather than rejected so that
    exploratory loss functions cannot crash a run; callers that care can
    compare input and output to count clamps.
    """
    if not math.isfinite(raw):
        raise NonFiniteLossError("non-finite loss")
    if raw < 0.0:
        return 0.0
    if raw > 1.0:
        return 1.0
    return raw


@dataclass(frozen=True, slots=True)
class Outcome:
    """One environment sample.

    payload: environment-specific encoding of the random draw (e.g. a table
        of per-arm Bernoulli losses, or a (feature vector, label) pair).
    round: 1-based index of the round that produced this sample.
    """

    payload: Any
    round: int


@dataclass(frozen=True, slots=True)
class Advice:
    """A point in the decision space.

    value: environment-specific encoding (scalar parameter, probability
        vector over a bank of base actions, or a predictor handle).
    slot: which expert family slot the value refers to, so an environment
        hosting heterogeneous experts can dispatch its loss function.
    """

    value: Any
    slot: int = 0

    def require_simplex(self) -> None:
        """Validate that ``value`` is a probability vector."""
        vec = self.value
        total = 0.0
        for p in vec:
            if p < -SIMPLEX_TOL:
                raise ValueError(f"negative simplex component {p!r}")
            total += p
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"simplex components sum to {total!r}, not 1")


class Environment:
    """Contract every synthetic environment implements.

    Concrete environments additionally provide ``make_experts()`` returning
    the matching expert bank.  Two instances constructed over the same seeded
    generator produce identical outcome sequences.
    """

    K: int

    def sample(self, t: int) -> Outcome:
        """Draw the round-t outcome from the environment's own stream."""
        raise NotImplementedError

    def loss(self, advice: Advice, outcome: Outcome) -> float:
        """Realized loss of playing ``advice`` against ``outcome``, in [0, 1]."""
        raise NotImplementedError

    def advice_expected_loss(self, advice: Advice) -> Optional[float]:
        """Expected loss of an advice point, when analytically available."""
        return None

    def oracle_optimum(self, k: int) -> Optional[float]:
        """Optimal expected loss of expert ``k``, when known."""
        return None

    def oracle_table(self) -> Optional[Sequence[float]]:
        vals = []
        for k in range(self.K):
            v = self.oracle_optimum(k)
            if v is None:
                return None
            vals.append(v)
        return vals

    def optimal_loss(self) -> Optional[float]:
        table = self.oracle_table()
        if table is None:
            return None
        return min(table)

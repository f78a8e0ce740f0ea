"""Synthetic stochastic environments with analytic or Monte-Carlo optima.

* BernoulliBankEnv: each expert slot owns a bank of Bernoulli-loss actions;
  the outcome reveals one loss draw per (slot, action) pair, so advice
  distributions are scored by their mixture loss.
* PerturbedGameEnv: the symmetric/perturbed two-action construction where at
  most one slot is uniformly better by the separation eps and every bank
  carries an internal gap.
* GlmEnv: model selection among nonlinear link predictors on unit-sphere
  features; one link generates the labels, so that slot is realizable.

All environments draw from a private generator in fixed-size blocks; block
draws are bitwise identical to per-round draws, so buffering never changes
a trace.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .core import Advice, Environment, Outcome, clip_loss
from .experts import OgdExpert, StaticExpert, Ucb1BanditExpert

_BLOCK = 1024


def _as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


class BernoulliBankEnv(Environment):
    """K banks of Bernoulli-loss actions with known mean table.

    means[k][j] is the expected loss of action j in bank k.  The outcome
    payload is the full K x d table of realized 0/1 losses for the round, so
    any advice distribution over a bank can be scored deterministically given
    the outcome.
    """

    def __init__(self, means: Sequence[Sequence[float]], seed=None):
        means = [list(map(float, row)) for row in means]
        if not means or not means[0]:
            raise ValueError("need at least one bank with one action")
        d = len(means[0])
        for row in means:
            if len(row) != d:
                raise ValueError("all banks must have the same number of actions")
            for mu in row:
                if not 0.0 <= mu <= 1.0:
                    raise ValueError(f"action mean {mu} outside [0, 1]")
        self.means = means
        self.K = len(means)
        self.d = d
        self._rng = _as_generator(seed)
        self._flat_means = np.asarray(means, dtype=np.float64).reshape(1, self.K, d)
        self._block: list = []
        self._cursor = 0
        self.clamp_count = 0

    def _refill(self) -> None:
        draws = self._rng.random((_BLOCK, self.K, self.d))
        self._block = (draws < self._flat_means).astype(np.float64).tolist()
        self._cursor = 0

    def sample(self, t: int) -> Outcome:
        if self._cursor >= len(self._block):
            self._refill()
        payload = self._block[self._cursor]
        self._cursor += 1
        return Outcome(payload=payload, round=t)

    def loss(self, advice: Advice, outcome: Outcome) -> float:
        row = outcome.payload[advice.slot]
        value = advice.value
        total = 0.0
        for j in range(self.d):
            total += value[j] * row[j]
        return clip_loss(total)

    def advice_expected_loss(self, advice: Advice) -> float:
        mus = self.means[advice.slot]
        value = advice.value
        total = 0.0
        for j in range(self.d):
            total += value[j] * mus[j]
        return total

    def oracle_optimum(self, k: int) -> float:
        return min(self.means[k])

    def make_experts(
        self,
        c_bound: float = 8.0,
        explore: float = 2.0,
        wrapper: str = "averaging",
        advice_variant: str = "probability-vector",
    ) -> list[Ucb1BanditExpert]:
        return [
            Ucb1BanditExpert(
                k, self.d, c_bound=c_bound, explore=explore,
                wrapper=wrapper, advice_variant=advice_variant,
            )
            for k in range(self.K)
        ]

    def make_static_experts(self, advices: Sequence[Sequence[float]]) -> list[StaticExpert]:
        """Fixed-distribution experts, one per bank (mainly for tests)."""
        experts = []
        for k, vec in enumerate(advices):
            def loss_fn(state, outcome, _k=k):
                row = outcome.payload[_k]
                return sum(p * row[j] for j, p in enumerate(state))

            experts.append(StaticExpert(k, list(vec), loss_fn))
        return experts


def perturbed_game_means(
    h: Optional[int], K: int, eps: float, gap: float
) -> list[list[float]]:
    """Mean table of the composite two-action game.

    In game ``h`` (0-based), bank h has means (1/2 - eps/2, 1/2 - eps/2 - gap)
    and every other bank (1/2 + eps/2, 1/2 + eps/2 + gap); the null game
    (h = None) assigns the latter pair to every bank.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if not 0.0 <= gap <= eps:
        raise ValueError("need 0 <= gap <= eps")
    if eps > 1.0 / 3.0:
        raise ValueError("eps must be <= 1/3 to keep all means in [0, 1]")
    if h is not None and not 0 <= h < K:
        raise ValueError(f"game index {h} outside [0, {K})")
    high = [0.5 + eps / 2.0, 0.5 + eps / 2.0 + gap]
    low = [0.5 - eps / 2.0, 0.5 - eps / 2.0 - gap]
    return [list(low) if k == h else list(high) for k in range(K)]


class PerturbedGameEnv(BernoulliBankEnv):
    """Hard-instance generator: identical banks except for one eps-better slot."""

    def __init__(self, h: Optional[int], K: int, eps: float, gap: float, seed=None):
        super().__init__(perturbed_game_means(h, K, eps, gap), seed=seed)
        self.h = h
        self.eps = eps
        self.gap = gap


# ---------------------------------------------------------------------------
# Link functions for the model-selection environment
# ---------------------------------------------------------------------------


def _sigmoid(u: float) -> float:
    if u >= 0:
        return 1.0 / (1.0 + math.exp(-u))
    e = math.exp(u)
    return e / (1.0 + e)


def _sigmoid_vec(u: np.ndarray) -> np.ndarray:
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    e = np.exp(u[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class Link:
    """A bounded link function R -> [0, 1] with analytic derivative."""

    kind = "base"
    params: dict

    def f(self, u: float) -> float:
        raise NotImplementedError

    def fprime(self, u: float) -> float:
        raise NotImplementedError

    def f_vec(self, u: np.ndarray) -> np.ndarray:
        return np.vectorize(self.f)(u)

    def sup_abs_deriv(self, radius: float, grid: int = 4001) -> float:
        us = np.linspace(-radius, radius, grid)
        return float(max(abs(self.fprime(float(u))) for u in us))

    def describe(self) -> dict:
        return {"kind": self.kind, **self.params}


class LogisticPolyLink(Link):
    """lo + (hi-lo) * sigmoid(c1*u + c3*u^3 + shift)."""

    kind = "logistic-poly"

    def __init__(self, c1: float, c3: float = 0.0, shift: float = 0.0,
                 lo: float = 0.0, hi: float = 1.0):
        self.c1, self.c3, self.shift, self.lo, self.hi = c1, c3, shift, lo, hi
        self.params = {"c1": c1, "c3": c3, "shift": shift, "lo": lo, "hi": hi}

    def f(self, u):
        return self.lo + (self.hi - self.lo) * _sigmoid(self.c1 * u + self.c3 * u ** 3 + self.shift)

    def fprime(self, u):
        s = _sigmoid(self.c1 * u + self.c3 * u ** 3 + self.shift)
        return (self.hi - self.lo) * s * (1.0 - s) * (self.c1 + 3.0 * self.c3 * u ** 2)

    def f_vec(self, u):
        return self.lo + (self.hi - self.lo) * _sigmoid_vec(self.c1 * u + self.c3 * u ** 3 + self.shift)


class RampLink(Link):
    """clip(a + b*u, lo, hi)."""

    kind = "ramp"

    def __init__(self, a: float, b: float, lo: float = 0.0, hi: float = 1.0):
        self.a, self.b, self.lo, self.hi = a, b, lo, hi
        self.params = {"a": a, "b": b, "lo": lo, "hi": hi}

    def f(self, u):
        return min(self.hi, max(self.lo, self.a + self.b * u))

    def fprime(self, u):
        v = self.a + self.b * u
        return self.b if self.lo < v < self.hi else 0.0

    def f_vec(self, u):
        return np.clip(self.a + self.b * u, self.lo, self.hi)


class GaussBumpLink(Link):
    """exp(-a*u^2)."""

    kind = "gauss-bump"

    def __init__(self, a: float):
        self.a = a
        self.params = {"a": a}

    def f(self, u):
        return math.exp(-self.a * u * u)

    def fprime(self, u):
        return -2.0 * self.a * u * math.exp(-self.a * u * u)

    def f_vec(self, u):
        return np.exp(-self.a * u * u)


class VeeLink(Link):
    """clip(a*|u|, 0, 1)."""

    kind = "vee"

    def __init__(self, a: float):
        self.a = a
        self.params = {"a": a}

    def f(self, u):
        return min(1.0, self.a * abs(u))

    def fprime(self, u):
        if self.a * abs(u) >= 1.0 or u == 0.0:
            return 0.0
        return self.a if u > 0 else -self.a

    def f_vec(self, u):
        return np.minimum(1.0, self.a * np.abs(u))


class SineLink(Link):
    """a + b*sin(c*u), with a, b chosen so the range stays inside [0, 1]."""

    kind = "sine"

    def __init__(self, a: float, b: float, c: float):
        self.a, self.b, self.c = a, b, c
        self.params = {"a": a, "b": b, "c": c}

    def f(self, u):
        return self.a + self.b * math.sin(self.c * u)

    def fprime(self, u):
        return self.b * self.c * math.cos(self.c * u)

    def f_vec(self, u):
        return self.a + self.b * np.sin(self.c * u)


class KickLogisticLink(Link):
    """sigmoid(c1*u) plus a one-sided saturating kick, clipped to [0, 1].

    f(u) = clip(sigmoid(c1*u) + gamma * tanh(max(side*u - z0, 0) / width)^2):
    exactly the base sigmoid for side*u <= z0, departing smoothly beyond with
    slope bounded by ~0.77*|gamma|/width, so the kick never dominates the
    link's Lipschitz constant.
    """

    kind = "kick-logistic"

    def __init__(self, c1: float, gamma: float, z0: float, width: float, side: int = 1):
        if side not in (-1, 1):
            raise ValueError("side must be +1 or -1")
        if width <= 0:
            raise ValueError("width must be positive")
        self.c1, self.gamma, self.z0, self.width, self.side = c1, gamma, z0, width, side
        self.params = {"c1": c1, "gamma": gamma, "z0": z0, "width": width, "side": side}

    def _raw(self, u):
        excess = max(self.side * u - self.z0, 0.0)
        th = math.tanh(excess / self.width)
        return _sigmoid(self.c1 * u) + self.gamma * th * th

    def f(self, u):
        return min(1.0, max(0.0, self._raw(u)))

    def fprime(self, u):
        raw = self._raw(u)
        if raw <= 0.0 or raw >= 1.0:
            return 0.0
        s = _sigmoid(self.c1 * u)
        d = self.c1 * s * (1.0 - s)
        excess = self.side * u - self.z0
        if excess > 0.0:
            th = math.tanh(excess / self.width)
            d += self.side * self.gamma * 2.0 * th * (1.0 - th * th) / self.width
        return d

    def f_vec(self, u):
        excess = np.maximum(self.side * u - self.z0, 0.0)
        th = np.tanh(excess / self.width)
        return np.clip(_sigmoid_vec(self.c1 * u) + self.gamma * th * th, 0.0, 1.0)


class CappedLogisticLink(Link):
    """min(sigmoid(c1*u), cap)."""

    kind = "capped-logistic"

    def __init__(self, c1: float, cap: float):
        self.c1, self.cap = c1, cap
        self.params = {"c1": c1, "cap": cap}

    def f(self, u):
        return min(self.cap, _sigmoid(self.c1 * u))

    def fprime(self, u):
        s = _sigmoid(self.c1 * u)
        if s >= self.cap:
            return 0.0
        return self.c1 * s * (1.0 - s)

    def f_vec(self, u):
        return np.minimum(self.cap, _sigmoid_vec(self.c1 * u))


class GlmEnv(Environment):
    """Label generation by one link of a bank of candidate links.

    Features are uniform on the unit sphere; the label is
    links[k_star].f(w . x) plus optional bounded uniform noise, clipped to
    [0, 1].  Advice for slot k is a parameter vector v, scored by the clipped
    squared error of links[k].f(v . x) against the label.
    """

    def __init__(
        self,
        links: Sequence[Link],
        dim: int,
        k_star: int,
        w: Optional[Sequence[float]] = None,
        noise_level: float = 0.0,
        seed=None,
    ):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        if not 0 <= k_star < len(links):
            raise ValueError("k_star outside link bank")
        if noise_level < 0:
            raise ValueError("noise_level must be >= 0")
        self.links = list(links)
        self.K = len(links)
        self.dim = dim
        self.k_star = k_star
        if w is None:
            w_vec = np.zeros(dim)
            w_vec[0] = 1.0
        else:
            w_vec = np.asarray(w, dtype=float)
            norm = float(np.linalg.norm(w_vec))
            if norm == 0:
                raise ValueError("w must be nonzero")
            w_vec = w_vec / norm
        self.w = w_vec
        self.noise_level = noise_level
        self._rng = _as_generator(seed)
        self._block_x: Optional[np.ndarray] = None
        self._block_r: list = []
        self._cursor = 0
        self.clamp_count = 0
        self._oracle_cache: dict[int, tuple[float, float]] = {}

    def _refill(self) -> None:
        x = self._rng.standard_normal((_BLOCK, self.dim))
        norms = np.linalg.norm(x, axis=1)
        while np.any(norms == 0.0):  # probability-zero guard: redraw degenerate rows
            bad = norms == 0.0
            x[bad] = self._rng.standard_normal((int(bad.sum()), self.dim))
            norms = np.linalg.norm(x, axis=1)
        x /= norms[:, None]
        r = self.links[self.k_star].f_vec(x @ self.w)
        if self.noise_level > 0:
            r = r + self._rng.uniform(-self.noise_level, self.noise_level, _BLOCK)
        self._block_x = x
        self._block_r = np.clip(r, 0.0, 1.0).tolist()
        self._cursor = 0

    def sample(self, t: int) -> Outcome:
        if self._block_x is None or self._cursor >= _BLOCK:
            self._refill()
        i = self._cursor
        self._cursor += 1
        return Outcome(payload=(self._block_x[i], self._block_r[i]), round=t)

    def loss(self, advice: Advice, outcome: Outcome) -> float:
        x, r = outcome.payload
        u = float(np.dot(advice.value, x))
        e = self.links[advice.slot].f(u) - r
        return clip_loss(e * e)

    def oracle_optimum(self, k: int) -> Optional[float]:
        if k in self._oracle_cache:
            return self._oracle_cache[k][0]
        if k == self.k_star and self.noise_level == 0.0:
            return 0.0  # realizable slot
        return None

    def optimal_loss(self) -> Optional[float]:
        if self.noise_level == 0.0:
            return 0.0
        table = self.oracle_table()
        return None if table is None else min(table)

    def estimate_optimum(
        self,
        k: int,
        radius: float = 2.0,
        n_samples: int = 1_000_000,
        coarse_samples: int = 100_000,
        seed=None,
    ) -> tuple[float, float]:
        """Monte-Carlo estimate of slot k's optimal expected loss.

        The optimal parameter lies in span{w, one orthogonal direction} by
        rotational symmetry of the feature law, so the search runs over
        (along-w, orthogonal) coordinates on the radius ball: a coarse grid,
        then a refined local grid under a larger sample.  Returns (estimate,
        standard error).
        """
        rng = _as_generator(seed)
        link = self.links[k]

        w = self.w
        if self.dim == 1:
            u_perp = np.zeros(1)
        else:
            probe = np.zeros(self.dim)
            probe[1 if abs(w[0]) >= abs(w[-1]) else 0] = 1.0
            u_perp = probe - np.dot(probe, w) * w
            u_perp /= np.linalg.norm(u_perp)

        def draw(n):
            x = rng.standard_normal((n, self.dim))
            x /= np.linalg.norm(x, axis=1)[:, None]
            z = x @ w
            y = x @ u_perp
            r = self.links[self.k_star].f_vec(z)
            if self.noise_level > 0:
                r = np.clip(r + rng.uniform(-self.noise_level, self.noise_level, n), 0.0, 1.0)
            return z, y, r

        def objective(z, y, r, a, b):
            pred = link.f_vec(a * z + b * y)
            err = pred - r
            return np.clip(err * err, 0.0, 1.0)

        z, y, r = draw(coarse_samples)
        best = (math.inf, 0.0, 0.0)
        a_grid = np.linspace(-radius, radius, 41)
        b_grid = np.linspace(0.0, radius, 11)
        for a in a_grid:
            for b in b_grid:
                if a * a + b * b > radius * radius + 1e-12:
                    continue
                val = float(np.mean(objective(z, y, r, a, b)))
                if val < best[0]:
                    best = (val, float(a), float(b))

        z, y, r = draw(n_samples)
        step_a = a_grid[1] - a_grid[0]
        step_b = b_grid[1] - b_grid[0]
        refined = best
        for a in np.linspace(best[1] - step_a, best[1] + step_a, 9):
            for b in np.linspace(max(0.0, best[2] - step_b), best[2] + step_b, 9):
                if a * a + b * b > radius * radius + 1e-12:
                    continue
                losses = objective(z, y, r, a, b)
                val = float(np.mean(losses))
                if val < refined[0]:
                    refined = (val, float(a), float(b), float(np.std(losses) / math.sqrt(n_samples)))
        if len(refined) == 3:  # coarse winner never re-evaluated: landscape degenerate
            losses = objective(z, y, r, refined[1], refined[2])
            refined = (float(np.mean(losses)), refined[1], refined[2],
                       float(np.std(losses) / math.sqrt(n_samples)))
        if not math.isfinite(refined[0]):
            raise RuntimeError(
                f"optimum search for slot {k} diverged: best={refined}"
            )
        self._oracle_cache[k] = (refined[0], refined[3])
        return refined[0], refined[3]

    def make_experts(
        self,
        radius: float = 2.0,
        bound_const: float = 1.5,
        wrapper: str = "averaging",
        shared_lipschitz: bool = True,
    ) -> list[OgdExpert]:
        """One gradient-descent expert per link slot.

        With ``shared_lipschitz`` (default) every expert declares the bank's
        largest gradient bound, so the internal-regret term of the brackets
        is uniform across slots; per-slot constants remain available for
        experiments about heterogeneous expert complexities.
        """
        sups = [2.0 * link.sup_abs_deriv(radius) for link in self.links]
        shared = max(sups)
        experts = []
        for k, link in enumerate(self.links):
            lipschitz = shared if shared_lipschitz else sups[k]

            def loss_fn(v, outcome, _link=link):
                x, r = outcome.payload
                e = _link.f(float(np.dot(v, x))) - r
                return e * e

            def grad_fn(v, outcome, _link=link):
                x, r = outcome.payload
                u = float(np.dot(v, x))
                return (2.0 * (_link.f(u) - r) * _link.fprime(u)) * x

            experts.append(
                OgdExpert(
                    k, self.dim, radius, lipschitz, loss_fn, grad_fn,
                    bound_const=bound_const, wrapper=wrapper,
                )
            )
        return experts

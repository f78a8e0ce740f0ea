"""Named environment presets and their matching expert banks.

Preset definitions are versioned: changing any constant below must bump the
version string, since traces and oracle tables depend on them.
"""

from __future__ import annotations

from typing import Optional

from .environments import (
    BernoulliBankEnv,
    CappedLogisticLink,
    GaussBumpLink,
    GlmEnv,
    KickLogisticLink,
    Link,
    LogisticPolyLink,
    PerturbedGameEnv,
    RampLink,
    SineLink,
    VeeLink,
)

PRESET_VERSION = "1"

# 5 banks of 2 Bernoulli actions; optima 0.25 .. 0.65, inner gap 0.20.
COVERAGE_BANK = [
    [0.25, 0.45],
    [0.35, 0.55],
    [0.45, 0.65],
    [0.55, 0.75],
    [0.65, 0.85],
]

# 10 banks of 2 Bernoulli actions; optima 0.20 .. 0.65, inner gap 0.20.
RATE_CHECK_BANK = [[0.20 + 0.05 * k, 0.40 + 0.05 * k] for k in range(10)]


def model_selection_links(version: str = PRESET_VERSION) -> list[Link]:
    """The 10-link bank of the model-selection environment.

    Slot 9 generates the labels.  Slots 7 and 8 agree with slot 9 within 0.02
    wherever |z| <= 0.5 (where most of the feature mass lives) and depart
    polynomially beyond, so the three best slots are hard to tell apart; the
    remaining slots are structurally worse (even shapes, shifted or squashed
    ranges, caps).
    """
    if version != PRESET_VERSION:
        raise ValueError(f"unknown link-family version {version!r}")
    return [
        RampLink(0.5, 0.6, lo=0.30, hi=0.70),
        GaussBumpLink(1.8),
        LogisticPolyLink(4.0, shift=-2.0),
        LogisticPolyLink(4.0, lo=0.30, hi=0.70),
        SineLink(0.5, 0.22, 2.4),
        VeeLink(1.1),
        CappedLogisticLink(2.2, 0.62),
        KickLogisticLink(4.0, 0.40, 0.45, 0.35, side=-1),
        KickLogisticLink(4.0, -0.45, 0.45, 0.35, side=1),
        LogisticPolyLink(4.0),
    ]


GLM_DEFAULTS = {"dim": 4, "k_star": 9, "noise_level": 0.0, "radius": 2.0, "T": 20_000}

# Per-preset expert overrides.  The rate-check bank declares a tighter (still
# valid) internal bound constant so the asymptotic regime of the selection
# rule is visible within desk-scale horizons.
EXPERT_DEFAULTS = {"bandit-rate-check": {"c_bound": 2.0}}


def expert_defaults(preset: str) -> dict:
    return dict(EXPERT_DEFAULTS.get(preset, {}))


def build_environment(name: str, params: Optional[dict] = None, seed=None):
    """Construct a preset environment over its own generator."""
    params = dict(params or {})
    if name == "bernoulli-bank":
        if "means" not in params:
            raise ValueError("bernoulli-bank needs a 'means' table")
        return BernoulliBankEnv(params["means"], seed=seed)
    if name == "bernoulli-coverage":
        return BernoulliBankEnv(COVERAGE_BANK, seed=seed)
    if name == "bandit-rate-check":
        return BernoulliBankEnv(RATE_CHECK_BANK, seed=seed)
    if name == "perturbed-game":
        return PerturbedGameEnv(
            params.get("h"),
            params["K"],
            params["eps"],
            params["gap"],
            seed=seed,
        )
    if name == "glm-appendixA":
        return GlmEnv(
            model_selection_links(params.get("link_version", PRESET_VERSION)),
            dim=params.get("dim", GLM_DEFAULTS["dim"]),
            k_star=params.get("k_star", GLM_DEFAULTS["k_star"]),
            noise_level=params.get("noise_level", GLM_DEFAULTS["noise_level"]),
            seed=seed,
        )
    raise KeyError(name)


def preset_names() -> list[str]:
    return [
        "bernoulli-bank",
        "bernoulli-coverage",
        "bandit-rate-check",
        "perturbed-game",
        "glm-appendixA",
    ]


def build_experts(env, expert_params: Optional[dict] = None):
    """Expert bank matching the environment family, with optional overrides."""
    p = dict(expert_params or {})
    if isinstance(env, GlmEnv):
        return env.make_experts(
            radius=p.get("radius", GLM_DEFAULTS["radius"]),
            bound_const=p.get("bound_const", 1.5),
            wrapper=p.get("wrapper", "averaging"),
        )
    if isinstance(env, BernoulliBankEnv):
        if p.get("kind") == "static":
            return env.make_static_experts(p["advices"])
        return env.make_experts(
            c_bound=p.get("c_bound", 8.0),
            explore=p.get("explore", 2.0),
            wrapper=p.get("wrapper", "averaging"),
            advice_variant=p.get("advice_variant", "probability-vector"),
        )
    raise TypeError(f"no expert bank builder for {type(env).__name__}")

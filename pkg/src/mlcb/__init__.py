"""Budget-constrained selection among self-learning experts."""

__version__ = "0.1.0"

from .confidence import (  # noqa: F401
    ConfidenceConfig,
    ConfidenceState,
    confidence_state,
    delta_arm,
    delta_n,
    g_term,
    h_term,
    interval_width,
    self_normalized_lcb,
    self_normalized_ucb,
    standard_bounds,
    xn_term,
)
from .core import Advice, Environment, Outcome, clip_loss  # noqa: F401
from .experts import (  # noqa: F401
    ExpertHistory,
    OgdExpert,
    StaticExpert,
    Ucb1BanditExpert,
    ogd_regret_bound,
    safe_advice,
    ucb1_regret_bound,
)
from .meta import (  # noqa: F401
    Engine,
    MlcbProcedure,
    RoundDecision,
    RunTrace,
    derive_streams,
    select_advisor,
    select_training_set,
)
from .baselines import (  # noqa: F401
    LimitedAdviceProcedure,
    OracleProcedure,
    RoundRobinProcedure,
    round_robin_select,
)
from .environments import (  # noqa: F401
    BernoulliBankEnv,
    GlmEnv,
    PerturbedGameEnv,
    perturbed_game_means,
)
from .metrics import (  # noqa: F401
    coverage_stats,
    interval_budget,
    interval_budget_series,
    loglog_slope,
    realized_regret,
    topm_regret_increment,
)

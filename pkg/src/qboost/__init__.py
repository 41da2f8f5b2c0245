"""Quality-aware ad auctions with learned, competitiveness-constrained boosts."""

from .auction import (
    AuctionOutcome,
    TickState,
    WelfareBreakdown,
    min_bid_ratio,
    optimal_welfare,
    run_auction,
    welfare,
)
from .boost import (
    competitive_factor,
    efficiency_bound,
    is_c_competitive,
    project,
    project_vjp,
)
from .environment import (
    AdvertiserAccount,
    BiddingEnv,
    Episode,
    EpisodeConfig,
    agent_bids,
    generate_episode,
    generate_tick,
    load_episode_csv,
    make_accounts,
    settle_tick,
)
from .learning import (
    POLICY_NAMES,
    EpisodeMetrics,
    QBoostPolicy,
    TrainConfig,
    build_features,
    empirical_virtual_value,
    evaluate,
    make_policy,
    train,
)
from .mlp import (
    PredictorParams,
    backward,
    forward,
    grad_global_norm,
    init_params,
    load_model,
    optimizer_step,
    save_model,
    schedule_and_stop,
)
from .reporting import read_per_tick, render_svg, write_metrics
from .surrogate import soft_welfare, soft_welfare_grad_z, surrogate_gap_bound
from .verify import SUITES

__version__ = "0.1.0"

__all__ = [
    "AuctionOutcome",
    "TickState",
    "WelfareBreakdown",
    "min_bid_ratio",
    "optimal_welfare",
    "run_auction",
    "welfare",
    "competitive_factor",
    "efficiency_bound",
    "is_c_competitive",
    "project",
    "project_vjp",
    "AdvertiserAccount",
    "BiddingEnv",
    "Episode",
    "EpisodeConfig",
    "agent_bids",
    "generate_episode",
    "generate_tick",
    "load_episode_csv",
    "make_accounts",
    "settle_tick",
    "POLICY_NAMES",
    "EpisodeMetrics",
    "QBoostPolicy",
    "TrainConfig",
    "build_features",
    "empirical_virtual_value",
    "evaluate",
    "make_policy",
    "train",
    "PredictorParams",
    "backward",
    "forward",
    "grad_global_norm",
    "init_params",
    "load_model",
    "optimizer_step",
    "save_model",
    "schedule_and_stop",
    "read_per_tick",
    "render_svg",
    "write_metrics",
    "soft_welfare",
    "soft_welfare_grad_z",
    "surrogate_gap_bound",
    "SUITES",
    "__version__",
]

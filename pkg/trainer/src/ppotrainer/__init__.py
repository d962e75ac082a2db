"""PPO trainer speaking the perishable-inventory environment's line protocol."""

from .client import EnvClient, ProtocolError
from .gae import clipped_surrogate, gae
from .model import ActorCritic
from .buffer import RolloutBuffer
from .trainer import (
    PpoConfig,
    TrainReport,
    evaluate_policy,
    export_policy_actions,
    load_checkpoint,
    random_policy_baseline,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

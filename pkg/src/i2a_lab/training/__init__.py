"""Actor-critic training."""

from .losses import (LAMBDA_DIST, LAMBDA_ENT, LossBreakdown, actor_critic_loss, distill_term, kl_divergence,
                     kstep_advantage, policy_terms, value_term)
from .trainer import (TrainConfig, TrainingDiverged, TrainResult, act, evaluate, load_checkpoint, make_agent,
                      make_model, save_checkpoint, train)

__all__ = ["LAMBDA_DIST", "LAMBDA_ENT", "LossBreakdown", "actor_critic_loss", "distill_term", "kl_divergence",
           "kstep_advantage", "policy_terms", "value_term", "TrainConfig", "TrainingDiverged", "TrainResult",
           "act", "evaluate", "load_checkpoint", "make_agent", "make_model", "save_checkpoint", "train"]

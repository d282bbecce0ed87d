from .rollout import EnvPool, ReplayBuffer, RolloutBatch, collect_rollout, compute_gae
from .ppo import (
    PpoAgent, PpoConfig, act, attach_estimates, ppo_minibatch_loss, ppo_update,
    train_ppo_phase,
)
from .sac import (
    SacAgent, SacConfig, actor_loss_node, critic_loss_node, sac_update,
    sample_with_demos, train_sac_phase,
)

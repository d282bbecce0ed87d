"""Behavior cloning: plain maximum likelihood on demonstration pairs.

The ablation alternative to the demo-augmented losses. Consumes no
environment interaction at all; consolidation is a fixed number of gradient
steps on the frozen demo store.
"""

from .. import autodiff as ad
from ..nets import head_log_prob, mlp_forward
from ..optim import adam_step


def bc_loss(policy_spec, policy, obs, actions, tape):
    """-mean log pi(a|s) over the batch, built on the tape."""
    head = mlp_forward(policy_spec, policy, obs, tape=tape)
    return ad.neg(ad.rmean(head_log_prob(head, actions)))


def bc_update(policy_spec, policy, opt_state, sampler, batch_size, lr):
    """One likelihood step on a fresh demo batch; returns stats."""
    batch = sampler.draw(batch_size)
    tape = ad.GradTape(policy)
    loss = bc_loss(policy_spec, policy, batch["obs"], batch["actions"], tape)
    grad = tape.gradient(loss)
    adam_step(policy, grad, opt_state, lr)
    return {"demo_loss": float(ad.val(loss))}

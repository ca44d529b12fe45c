"""
The recurrent controller
========================

A single tanh RNN maps the previous strategy to Gaussian means. One step of
REINFORCE with an RMSprop-scaled gradient nudges the means toward actions
that earned a positive (baseline-corrected) reward.
"""

import numpy as np

from strategy_search import controller as ctl
from strategy_search.search_space import StrategyVector

cfg = ctl.ControllerConfig(dim=2, learning_rate=0.03, use_reward_baseline=True)
params, state = ctl.init_controller(cfg, rng_seed=0)

prev = StrategyVector([0.5, 0.5])
step, state = ctl.policy_forward(params, state, prev, cfg, rng_seed=1)
print("means", step.means, "sampled", step.sampled_action.tolist(), "log prob", round(step.log_prob, 4))

# reward the controller whenever the first coordinate is large
for i in range(300):
    step, state = ctl.policy_forward(params, state, prev, cfg, rng_seed=100 + i)
    reward = step.sampled_action.values[0]
    params, state = ctl.policy_update(params, state, step, reward, cfg)
    prev = step.sampled_action

print("means after 300 updates:", np.round(step.means, 3))

# checkpoints are plain bytes and restore bit-exactly
blob = ctl.checkpoint(params, state, cfg)
p2, s2, _ = ctl.restore(blob)
print("checkpoint", len(blob), "bytes, restored equal:", ctl.params_equal(params, p2) and ctl.states_equal(state, s2))

"""
Search spaces and normalized strategies
=======================================

Every tunable knob lives in [0, 1] once normalized. The controller and the
hill climbers only ever see the normalized vector.
"""

from strategy_search import ParamSpec, SearchSpace, denormalize, normalize, random_strategy

# two augmentation probabilities and a learning rate
space = SearchSpace([
    ParamSpec("smooth", 0.0, 1.0, "augmentation_probability"),
    ParamSpec("gaussian_noise", 0.0, 1.0, "augmentation_probability"),
    ParamSpec("learning_rate", 0.0001, 0.01),
])
print(space.names, "dim =", space.dim)

x = normalize(space, [0.25, 0.5, 0.00505])
print("normalized:", x.tolist())
print("back to native:", denormalize(space, x))

# a reproducible random point, as used to seed the first trials
print("random strategy (seed 3):", random_strategy(space, 3).tolist())

# out-of-range native values are rejected rather than silently clipped
try:
    normalize(space, [0.25, 0.5, 0.5])
except ValueError as exc:
    print("rejected:", exc)

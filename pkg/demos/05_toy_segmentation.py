"""
A tiny segmentation objective
=============================

Four synthetic 20^3 subjects with three intensity classes. A strategy picks
augmentation probabilities plus a learning rate; the reward is the mean
Dice of a threshold segmenter on the augmented images.
"""

import numpy as np

from strategy_search import EvaluationRequest, ParamSpec, SearchSpace, StrategyVector
from strategy_search.augmentation import TRANSFORM_NAMES
from strategy_search.objectives import ToySegmentationEvaluator, dice_score, load_toy_fixture

image, labels = load_toy_fixture()[0]
print("subject 0:", image.shape, "class counts", np.bincount(labels.ravel()))
print("dice of labels with themselves:", dice_score(labels, labels, 3))

space = SearchSpace([ParamSpec(n, 0, 1, "augmentation_probability") for n in TRANSFORM_NAMES]
                    + [ParamSpec("learning_rate", 0.0001, 0.01)])
evaluator = ToySegmentationEvaluator(space)


def mean_reward(values, n=6):
    rewards = [evaluator(EvaluationRequest.build(space, "demo", StrategyVector(values), s)).reward
               for s in range(n)]
    return np.mean(rewards)


# smoothing helps, noise hurts, a badly chosen learning rate hurts
print("no augmentation      ", round(mean_reward([0, 0, 0, 0, 0, 0.4]), 4))
print("always smooth        ", round(mean_reward([0, 1, 0, 0, 0, 0.4]), 4))
print("always add noise     ", round(mean_reward([0, 0, 1, 0, 0, 0.4]), 4))
print("learning rate at max ", round(mean_reward([0, 0, 0, 0, 0, 1.0]), 4))

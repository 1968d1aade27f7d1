import numpy as np
import pytest

from mms_closure.env import StepOutcome


class Bandit:
    """One cell, one step, reward -(a - 0.3)^2."""

    optimum = 0.3

    def reset(self):
        return np.ones((3, 1))

    def step(self, action):
        reward = -((action[0] - self.optimum) ** 2)
        return StepOutcome(np.ones((3, 1)), reward, True, False, {})


@pytest.fixture
def bandit_factory():
    def make(rng):
        env = Bandit()
        return env, env.reset()

    return make

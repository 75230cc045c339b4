"""
Exp3 subroutine, the Rexp3 restart wrapper, and baseline policies
"""
import math
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
from loguru import logger
from pydantic import ValidationError

from models.schemas import PolicySpec, Rexp3Config
from utils.errors import EpochOrderError, InvalidConfigError, UpdateBeforeSelectError
from utils.random_streams import RandomStream

CEIL_GUARD = 1e-9


def batch_size(horizon: int, num_arms: int, budget: float) -> int:
    """Delta_T = ceil((K ln K)^(1/3) (T/V_T)^(2/3)), capped at T"""
    raw = (num_arms * math.log(num_arms)) ** (1.0 / 3.0) * (horizon / budget) ** (2.0 / 3.0)
    return max(1, min(horizon, int(math.ceil(raw - CEIL_GUARD))))


def exp3_gamma(num_arms: int, delta: int) -> float:
    """gamma = min(1, sqrt(K ln K / ((e - 1) Delta_T)))"""
    return min(1.0, math.sqrt(num_arms * math.log(num_arms) / ((math.e - 1.0) * delta)))


class Exp3State:
    """Exp3 weights (as log-weights, max re-centered to 0) and the cached sampling distribution

    Weights and probabilities are held as lists of Python floats and updated with
    ``math.exp``; ``log_weights`` and ``probs`` return numpy copies.
    """

    def __init__(self, num_arms: int, gamma: float, log_weights: Optional[Sequence[float]] = None):
        if not 0.0 < gamma <= 1.0:
            raise InvalidConfigError(f"gamma must lie in (0, 1], got {gamma}", field="gamma")
        self.num_arms = num_arms
        self.gamma = gamma
        self._explore = gamma / num_arms
        self._log_weights: List[float] = ([0.0] * num_arms if log_weights is None
                                          else [float(w) for w in log_weights])
        self._probs: List[float] = [1.0 / num_arms] * num_arms
        self.last_probs_valid = False

    @property
    def log_weights(self) -> np.ndarray:
        return np.array(self._log_weights)

    @property
    def probs(self) -> np.ndarray:
        """Distribution cached by the last select"""
        return np.array(self._probs)

    def reset(self) -> None:
        """All weights back to 1"""
        self._log_weights = [0.0] * self.num_arms
        self.last_probs_valid = False

    def _mix(self) -> List[float]:
        top = max(self._log_weights)
        weights = [math.exp(w - top) for w in self._log_weights]
        total = sum(weights)
        exploit, explore = 1.0 - self.gamma, self._explore
        return [exploit * w / total + explore for w in weights]

    def distribution(self) -> np.ndarray:
        """Mixing distribution (1 - gamma) w / sum(w) + gamma / K from the current weights"""
        return np.array(self._mix())

    def draw(self, u: float) -> int:
        """Cache p_t and invert its CDF at u; 1-based arm"""
        probs = self._mix()
        self._probs = probs
        self.last_probs_valid = True
        cumulative = 0.0
        for index, p in enumerate(probs):
            cumulative += p
            if u < cumulative:
                return index + 1
        return self.num_arms

    def update(self, chosen: int, reward: float) -> None:
        if not self.last_probs_valid:
            raise UpdateBeforeSelectError("exp3_update called before exp3_select")
        index = chosen - 1
        log_weights = self._log_weights
        log_weights[index] += self.gamma * (reward / self._probs[index]) / self.num_arms
        top = max(log_weights)
        if top != 0.0:
            self._log_weights = [w - top for w in log_weights]
        self.last_probs_valid = False


def exp3_select(state: Exp3State, stream: RandomStream) -> int:
    """
    Draw an arm from the Exp3 distribution

    Computes and caches p_t, then inverts the CDF over arms 1..K with exactly one variate.

    Returns:
        1-based arm index
    """
    return state.draw(stream.uniform())


def exp3_update(state: Exp3State, chosen: int, reward: float) -> None:
    """
    Importance-weighted update of the chosen arm's weight

    log w^chosen += gamma * (reward / p^chosen) / K, then log-weights are re-centered on their max.

    Raises:
        UpdateBeforeSelectError: if no probabilities are cached from a preceding select
    """
    state.update(chosen, reward)


class BanditPolicy(ABC):
    """Sequential decision interface: select_arm, observe, reset (arms and epochs 1-based)"""

    kind: str = "abstract"

    def __init__(self, num_arms: int):
        self.num_arms = num_arms

    @abstractmethod
    def select_arm(self, t: int, stream: RandomStream) -> int:
        """Arm to pull at epoch t; may only use observations from epochs < t and the stream"""

    @abstractmethod
    def observe(self, t: int, arm: int, reward: float) -> None:
        """Feedback for the arm pulled at epoch t"""

    @abstractmethod
    def reset(self) -> None:
        """Forget everything"""

    def describe(self) -> Dict[str, Any]:
        """Policy kind and resolved tuning, recorded into outputs"""
        return {"policy": self.kind, "delta_T": None, "gamma": None}


class Rexp3Policy(BanditPolicy):
    """Exp3 restarted from uniform weights at the start of every batch of Delta_T epochs"""

    kind = "rexp3"

    def __init__(self, config: Rexp3Config, kind: str = "rexp3"):
        super().__init__(config.num_arms)
        self.kind = kind
        self.config = config
        self.horizon = config.horizon
        self.batch_size = config.batch_size or batch_size(config.horizon, config.num_arms, config.budget)
        self.gamma = config.gamma or exp3_gamma(config.num_arms, self.batch_size)
        self.state = Exp3State(num_arms=config.num_arms, gamma=self.gamma)
        self.restarts = 0
        self._next_epoch = 1
        self._pending: Optional[int] = None

    @property
    def num_batches(self) -> int:
        return -(-self.horizon // self.batch_size)

    def reset(self) -> None:
        self.state.reset()
        self.restarts = 0
        self._next_epoch = 1
        self._pending = None

    def select_arm(self, t: int, stream: RandomStream) -> int:
        if t != self._next_epoch or self._pending is not None:
            raise EpochOrderError(f"expected epoch {self._next_epoch}, got select at {t}")
        if t > self.horizon:
            raise EpochOrderError(f"epoch {t} beyond horizon {self.horizon}")
        if (t - 1) % self.batch_size == 0:
            self.state.reset()
            self.restarts += 1
        self._pending = t
        return exp3_select(self.state, stream)

    def observe(self, t: int, arm: int, reward: float) -> None:
        if self._pending != t:
            raise EpochOrderError(f"observe for epoch {t} but pending epoch is {self._pending}")
        exp3_update(self.state, arm, reward)
        self._pending = None
        self._next_epoch = t + 1

    def describe(self) -> Dict[str, Any]:
        return {"policy": self.kind, "delta_T": self.batch_size, "gamma": self.gamma}


class UniformRandomPolicy(BanditPolicy):
    """Pulls every arm with probability 1/K"""

    kind = "uniform_random"

    def select_arm(self, t: int, stream: RandomStream) -> int:
        return min(int(stream.uniform() * self.num_arms), self.num_arms - 1) + 1

    def observe(self, t: int, arm: int, reward: float) -> None:
        pass

    def reset(self) -> None:
        pass


def make_policy(kind: str, config: Union[Rexp3Config, Dict[str, Any]]) -> BanditPolicy:
    """
    Build a policy

    Args:
        kind: rexp3, exp3_norestart or uniform_random
        config: Rexp3Config (or a dict validating to one)

    Returns:
        A fresh policy

    Raises:
        InvalidConfigError: unknown kind or invalid tuning
    """
    try:
        if not isinstance(config, Rexp3Config):
            config = Rexp3Config.model_validate(config)
    except ValidationError as e:
        first = e.errors()[0]
        field_name = ".".join(str(part) for part in first["loc"]) or "config"
        logger.error(f"Invalid policy config: {first['msg']}")
        raise InvalidConfigError(first["msg"], field=field_name) from e

    if kind == "rexp3":
        return Rexp3Policy(config)
    if kind == "exp3_norestart":
        return Rexp3Policy(config.model_copy(update={"batch_size": config.horizon}), kind="exp3_norestart")
    if kind == "uniform_random":
        return UniformRandomPolicy(config.num_arms)
    raise InvalidConfigError(f"Unsupported policy kind: {kind}", field="kind")


def policy_from_spec(spec: PolicySpec, horizon: int, num_arms: int, budget: float) -> BanditPolicy:
    """Policy for one grid point of an experiment"""
    config = {
        "horizon": horizon,
        "num_arms": num_arms,
        "budget": budget,
        "batch_size": spec.batch_size,
        "gamma": spec.gamma,
    }
    return make_policy(spec.kind, config)

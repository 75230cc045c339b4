"""
Non-stationary reward environments: mean-reward paths under a variation budget

Epochs and arms are 1-based at every interface; ``MeanRewardPath.means``
stores epoch t in column t-1 and arm k in row k-1.
"""
import math
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger

from models.schemas import BanditInstance, BudgetSpec, InstanceSpec, MeanRewardPath
from utils.errors import ArmIndexError, BudgetRangeError, BudgetViolationError
from utils.random_streams import RandomStream

BUDGET_TOLERANCE = 1e-9
TIE_TOLERANCE = 1e-12
CEIL_GUARD = 1e-9


def _ceil(value: float) -> int:
    # ceil that ignores floating noise just above an integer (64 ** (2/3) and friends)
    return int(math.ceil(value - CEIL_GUARD))


def resolve_budget(spec: BudgetSpec, horizon: int) -> float:
    """V_T for a horizon: v, or c * T^beta"""
    return spec.resolve(horizon)


def validate_budget_range(horizon: int, num_arms: int, budget: float, allow_above: bool = False) -> None:
    """
    Check V_T against the admissible range [1/K, T/K]

    Args:
        horizon: T
        num_arms: K
        budget: V_T
        allow_above: Only enforce the lower end (stage-two sweeps run above T/K)

    Raises:
        BudgetRangeError: if V_T is outside the range
    """
    low, high = 1.0 / num_arms, horizon / num_arms
    if budget < low or (budget > high and not allow_above):
        raise BudgetRangeError(
            f"budget V_T={budget:.6g} outside the admissible range [{low:.6g}, {high:.6g}] "
            f"for T={horizon}, K={num_arms}"
        )
    if budget > high:
        logger.warning(f"budget V_T={budget:.6g} exceeds T/K={high:.6g} (T={horizon}, K={num_arms}); running anyway")


def total_variation(path: MeanRewardPath) -> float:
    """Sum over consecutive epochs of the largest per-arm change in expected reward"""
    if path.horizon < 2:
        return 0.0
    steps = np.abs(np.diff(path.means, axis=1)).max(axis=0)
    return float(steps.sum())


def check_budget(path: MeanRewardPath, budget: float, tol: float = BUDGET_TOLERANCE) -> bool:
    """True iff the path's total variation is within V_T (absolute tolerance tol)"""
    return total_variation(path) <= budget + tol


def _finish(means: np.ndarray, budget: float, generator: str, gen_seed: int = 0, **metadata) -> BanditInstance:
    path = MeanRewardPath(means=np.clip(means, 0.0, 1.0))
    variation = total_variation(path)
    if variation > budget + BUDGET_TOLERANCE:
        logger.error(f"{generator} path spends {variation:.12g} > budget {budget:.12g}")
        raise BudgetViolationError(
            f"{generator} path has total variation {variation:.12g} above its budget {budget:.12g}"
        )
    metadata["total_variation"] = variation
    return BanditInstance(path=path, budget=budget, generator=generator, gen_seed=gen_seed, metadata=metadata)


def sinusoidal_instance(horizon: int, budget: float, allow_above_range: bool = False) -> BanditInstance:
    """
    Two arms in antiphase: mu^1_t = 1/2 + 1/2 sin(V_T pi t / T), mu^2_t = 1/2 + 1/2 sin(V_T pi t / T + pi)

    Args:
        horizon: T >= 1
        budget: V_T in [1/2, T/2]
        allow_above_range: Admit V_T above T/2 (stage-two sweeps)

    Returns:
        BanditInstance with generator=sinusoidal
    """
    if horizon < 1:
        raise ValueError(f"horizon must be positive, got {horizon}")
    validate_budget_range(horizon, 2, budget, allow_above=allow_above_range)
    t = np.arange(1, horizon + 1, dtype=float)
    phase = budget * np.pi * t / horizon
    means = np.vstack([0.5 + 0.5 * np.sin(phase), 0.5 + 0.5 * np.sin(phase + np.pi)])
    instance = _finish(means, budget, "sinusoidal")
    logger.debug(f"sinusoidal instance T={horizon} V_T={budget:.6g} TV={instance.metadata['total_variation']:.6g}")
    return instance


def compressed_instance(horizon: int, budget: float, allow_above_range: bool = False) -> BanditInstance:
    """
    Sinusoidal change squeezed into the first third of the horizon, constant afterwards

    For 3t < T: mu^1_t = 1/2 + 1/2 sin(3 V_T pi t / T + pi/2), mu^2_t = 1/2 + 1/2 sin(3 V_T pi t / T - pi/2);
    otherwise mu^1_t = 0 and mu^2_t = 1.

    Raises:
        BudgetViolationError: when the sinusoid does not meet the constants continuously
            and the jump at T/3 pushes the variation over V_T
    """
    if horizon < 3:
        raise ValueError(f"compressed instances need T >= 3, got {horizon}")
    validate_budget_range(horizon, 2, budget, allow_above=allow_above_range)
    t = np.arange(1, horizon + 1)
    early = 3 * t < horizon
    phase = 3.0 * budget * np.pi * t / horizon
    means = np.vstack([
        np.where(early, 0.5 + 0.5 * np.sin(phase + np.pi / 2), 0.0),
        np.where(early, 0.5 + 0.5 * np.sin(phase - np.pi / 2), 1.0),
    ])
    instance = _finish(means, budget, "compressed")
    logger.debug(f"compressed instance T={horizon} V_T={budget:.6g} TV={instance.metadata['total_variation']:.6g}")
    return instance


def worst_case_parameters(horizon: int, num_arms: int, budget: float,
                          batch_override: Optional[int] = None) -> Tuple[int, float]:
    """
    Batch size and reward gap of the worst-case family

    Returns:
        (batch size ceil(K^(1/3) (T/V_T)^(2/3)) capped at T, epsilon = min(1/4, V_T * batch / T))
    """
    if batch_override is not None:
        batch = int(batch_override)
    else:
        batch = _ceil(num_arms ** (1.0 / 3.0) * (horizon / budget) ** (2.0 / 3.0))
    batch = max(1, min(batch, horizon))
    epsilon = min(0.25, budget * batch / horizon)
    return batch, epsilon


def worst_case_instance(horizon: int, num_arms: int, budget: float, stream: RandomStream,
                        batch_override: Optional[int] = None) -> BanditInstance:
    """
    Draw a member of the worst-case family: batches of constant means with one good arm each

    Args:
        horizon: T
        num_arms: K >= 2
        budget: V_T in [1/K, T/K]
        stream: Random stream; one variate per batch picks the good arm uniformly
        batch_override: Fixed batch size instead of the formula

    Returns:
        BanditInstance with generator=worst_case; the good arm of each batch has mean 1/2 + epsilon,
        all others 1/2
    """
    if num_arms < 2:
        raise ValueError(f"need at least 2 arms, got {num_arms}")
    validate_budget_range(horizon, num_arms, budget)
    batch, epsilon = worst_case_parameters(horizon, num_arms, budget, batch_override)
    num_batches = -(-horizon // batch)

    means = np.full((num_arms, horizon), 0.5)
    good_arms: List[int] = []
    for j in range(num_batches):
        good = min(int(stream.uniform() * num_arms), num_arms - 1)
        start = j * batch
        means[good, start:start + batch] = 0.5 + epsilon
        good_arms.append(good + 1)

    gen_seed = stream.master_seed or 0
    return _finish(
        means, budget, "worst_case", gen_seed=gen_seed,
        batch_size=batch, epsilon=epsilon, num_batches=num_batches,
        good_arms=good_arms, stream_index=stream.index,
    )


def constant_instance(horizon: int, num_arms: int = 2, value: float = 0.5, budget: float = 0.0) -> BanditInstance:
    """Every arm has the same constant mean; zero regret for every policy"""
    means = np.full((num_arms, horizon), float(value))
    return _finish(means, budget, "custom", kind="constant", value=float(value))


def custom_instance(means, budget: Optional[float] = None) -> BanditInstance:
    """Wrap an arbitrary K x T matrix; budget defaults to its own total variation"""
    path = MeanRewardPath(means=means)
    if budget is None:
        budget = total_variation(path)
    return _finish(np.array(path.means), budget, "custom")


def build_instance(spec: InstanceSpec, stream: Optional[RandomStream] = None) -> BanditInstance:
    """
    Build the instance described by a spec

    Args:
        spec: Instance recipe
        stream: Required for worst_case (the drawing stream)
    """
    if spec.kind == "sinusoidal":
        return sinusoidal_instance(spec.horizon, spec.budget, spec.allow_budget_above_range)
    if spec.kind == "compressed":
        return compressed_instance(spec.horizon, spec.budget, spec.allow_budget_above_range)
    if spec.kind == "worst_case":
        if stream is None:
            raise ValueError("worst_case instances need a random stream")
        return worst_case_instance(spec.horizon, spec.num_arms, spec.budget, stream, spec.batch_override)
    if spec.kind == "constant":
        return constant_instance(spec.horizon, spec.num_arms, spec.constant_value, spec.budget)
    raise ValueError(f"Unsupported instance kind: {spec.kind}")


def oracle_arrays(path: MeanRewardPath) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorized dynamic oracle

    Returns:
        (mu_star, k_star): per-epoch maximum mean and the 1-based arm attaining it; arms within
        1e-12 of the maximum count as tied and the lowest index wins
    """
    mu_star = path.means.max(axis=0)
    k_star = np.argmax(path.means >= mu_star - TIE_TOLERANCE, axis=0) + 1
    return mu_star, k_star


def oracle_path(path: MeanRewardPath) -> List[Tuple[float, int]]:
    """Per-epoch (mu*_t, k*_t) pairs, length T"""
    mu_star, k_star = oracle_arrays(path)
    return [(float(m), int(k)) for m, k in zip(mu_star, k_star)]


def static_oracle(path: MeanRewardPath) -> Tuple[int, float]:
    """Single best fixed arm over the horizon (lowest index on ties) and its cumulative mean reward"""
    totals = path.means.sum(axis=1)
    arm = int(np.argmax(totals >= totals.max() - TIE_TOLERANCE * path.horizon)) + 1
    return arm, float(totals[arm - 1])


def static_oracle_gap(path: MeanRewardPath) -> float:
    """How far the single best fixed arm trails the dynamic oracle over the horizon"""
    mu_star, _ = oracle_arrays(path)
    _, static_total = static_oracle(path)
    return float(mu_star.sum() - static_total)


def _check_index(instance: BanditInstance, arm: int, t: int) -> None:
    if not 1 <= arm <= instance.num_arms:
        raise ArmIndexError(f"arm {arm} outside 1..{instance.num_arms}")
    if not 1 <= t <= instance.horizon:
        raise ArmIndexError(f"epoch {t} outside 1..{instance.horizon}")


def reward_from_uniform(instance: BanditInstance, arm: int, t: int, u: float) -> int:
    """Bernoulli(mu^arm_t) outcome driven by the variate u in [0, 1)"""
    _check_index(instance, arm, t)
    return 1 if u < instance.path.means[arm - 1, t - 1] else 0


def sample_reward(instance: BanditInstance, arm: int, t: int, stream: RandomStream) -> int:
    """
    Draw the reward of pulling an arm

    Args:
        instance: Bandit instance
        arm: 1-based arm index
        t: 1-based epoch
        stream: Random stream (one variate consumed)

    Returns:
        1 with probability mu^arm_t, else 0
    """
    _check_index(instance, arm, t)
    return reward_from_uniform(instance, arm, t, stream.uniform())

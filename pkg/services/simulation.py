"""
Episode runner, replication engine and grid sweeps
"""
import time
from typing import Dict, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from loguru import logger
from tqdm import tqdm

from models.schemas import BanditInstance, EpisodeResult, RegretCurve, ReplicationPlan, SweepPoint
from services.environment import build_instance, oracle_arrays, static_oracle_gap
from services.policies import BanditPolicy, policy_from_spec
from utils.errors import ArmIndexError, SweepError
from utils.random_streams import RandomStream, derive

CHUNKS_PER_WORKER = 4


def run_episode(instance: BanditInstance, policy: BanditPolicy, stream: RandomStream) -> EpisodeResult:
    """
    Play one episode of T epochs

    Each epoch consumes the stream strictly as select-then-sample: the policy's
    variate first, then one variate for the Bernoulli reward. The oracle arm's
    counterfactual reward reuses the reward variate, so the realized pointwise
    regret is zero whenever the policy plays k*_t.

    Args:
        instance: Bandit instance
        policy: A freshly reset policy
        stream: Stream owned by this episode

    Returns:
        EpisodeResult with per-epoch trajectories
    """
    horizon = instance.horizon
    num_arms = instance.num_arms
    mu_star, _ = oracle_arrays(instance.path)
    rows = instance.path.means.tolist()
    mu_star_list = mu_star.tolist()
    chosen = [0] * horizon
    rewards = [0] * horizon
    oracle_rewards = [0] * horizon

    select_arm, observe, uniform = policy.select_arm, policy.observe, stream.uniform
    for t in range(1, horizon + 1):
        arm = select_arm(t, stream)
        if not 1 <= arm <= num_arms:
            raise ArmIndexError(f"arm {arm} outside 1..{num_arms}")
        u = uniform()
        reward = 1 if u < rows[arm - 1][t - 1] else 0
        observe(t, arm, reward)
        chosen[t - 1] = arm
        rewards[t - 1] = reward
        oracle_rewards[t - 1] = 1 if u < mu_star_list[t - 1] else 0

    chosen = np.array(chosen, dtype=np.int64)
    rewards = np.array(rewards, dtype=np.int64)
    oracle_rewards = np.array(oracle_rewards, dtype=np.int64)

    policy_means = instance.path.means[chosen - 1, np.arange(horizon)]
    cum_policy = np.cumsum(policy_means)
    cum_oracle = np.cumsum(mu_star)
    return EpisodeResult(
        chosen_arms=chosen,
        realized_rewards=rewards,
        cum_policy_mean_reward=cum_policy,
        cum_oracle_mean_reward=cum_oracle,
        cum_regret_mean_gap=cum_oracle - cum_policy,
        cum_regret_realized=np.cumsum(oracle_rewards - rewards).astype(float),
    )


def sampled_epochs(horizon: int, stride: int) -> np.ndarray:
    """Epochs stride, 2 stride, ... always ending at T (1-based)"""
    epochs = np.arange(stride, horizon + 1, stride)
    if epochs.size == 0 or epochs[-1] != horizon:
        epochs = np.append(epochs, horizon)
    return epochs


def _run_chunk(plan: ReplicationPlan, instance: Optional[BanditInstance], indices: Sequence[int],
               epochs: np.ndarray) -> Dict[str, np.ndarray]:
    """Replications for a contiguous block of indices, reduced to the sampled epochs"""
    spec = plan.instance
    cols = epochs - 1
    out: Dict[str, List] = {key: [] for key in (
        "gap", "realized", "policy", "oracle", "policy_instant", "oracle_instant", "arms", "static_gap")}

    for r in indices:
        stream = derive(plan.master_seed, r)
        episode_instance = instance if instance is not None else build_instance(spec, stream)
        policy = policy_from_spec(plan.policy, spec.horizon, spec.num_arms, spec.budget)
        episode = run_episode(episode_instance, policy, stream)

        mu_star, _ = oracle_arrays(episode_instance.path)
        arms = episode.chosen_arms[cols]
        out["gap"].append(episode.cum_regret_mean_gap[cols])
        out["realized"].append(episode.cum_regret_realized[cols])
        out["policy"].append(episode.cum_policy_mean_reward[cols])
        out["oracle"].append(episode.cum_oracle_mean_reward[cols])
        out["policy_instant"].append(episode_instance.path.means[arms - 1, cols])
        out["oracle_instant"].append(mu_star[cols])
        out["arms"].append(arms)
        out["static_gap"].append(
            static_oracle_gap(episode_instance.path) if instance is None else 0.0)

    return {key: np.asarray(values) for key, values in out.items()}


def _pairwise_sum(rows: np.ndarray) -> np.ndarray:
    """Sum along axis 0 by fixed-order pairwise halving"""
    n = rows.shape[0]
    if n == 1:
        return np.array(rows[0], dtype=float)
    mid = n // 2
    return _pairwise_sum(rows[:mid]) + _pairwise_sum(rows[mid:])


def _mean_and_stderr(rows: np.ndarray):
    count = rows.shape[0]
    mean = _pairwise_sum(rows) / count
    if count == 1:
        return mean, np.zeros_like(mean)
    variance = _pairwise_sum((rows - mean) ** 2) / (count - 1)
    return mean, np.sqrt(variance / count)


def _chunks(count: int, workers: int) -> List[range]:
    n_chunks = min(count, max(1, workers * CHUNKS_PER_WORKER))
    bounds = np.linspace(0, count, n_chunks + 1).astype(int)
    return [range(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def replicate(plan: ReplicationPlan, workers: int = 1) -> RegretCurve:
    """
    Run R independent episodes and average their regret trajectories

    Replication r plays on derive(master_seed, r); worst_case plans draw a fresh
    instance from that stream before play. Per-replication results are stacked
    in index order and reduced pairwise, so the curve does not depend on the
    worker count or scheduling.

    Args:
        plan: Replication plan
        workers: Number of joblib worker processes

    Returns:
        RegretCurve at the sampled epochs
    """
    start = time.perf_counter()
    spec = plan.instance
    logger.info(
        f"Replicating {plan.policy.kind} on {spec.kind} T={spec.horizon} K={spec.num_arms} "
        f"V_T={spec.budget:.6g} R={plan.num_replications} workers={workers}"
    )

    shared = None if spec.kind == "worst_case" else build_instance(spec)
    policy_info = policy_from_spec(plan.policy, spec.horizon, spec.num_arms, spec.budget).describe()
    stride = plan.resolved_stride() if plan.record_trajectory else spec.horizon
    epochs = sampled_epochs(spec.horizon, stride)

    chunks = _chunks(plan.num_replications, workers)
    try:
        if workers <= 1 or len(chunks) == 1:
            parts = [_run_chunk(plan, shared, chunk, epochs) for chunk in chunks]
        else:
            parts = Parallel(n_jobs=workers, backend="loky")(
                delayed(_run_chunk)(plan, shared, chunk, epochs) for chunk in chunks
            )
    except Exception as e:
        logger.error(f"Replication failed: {str(e)}")
        raise

    stacked = {key: np.concatenate([part[key] for part in parts]) for key in parts[0]}
    gap_mean, gap_se = _mean_and_stderr(stacked["gap"])
    realized_mean, realized_se = _mean_and_stderr(stacked["realized"])
    arm_rows = stacked["arms"]
    frequencies = np.vstack([
        _pairwise_sum((arm_rows == k).astype(float)) / plan.num_replications
        for k in range(1, spec.num_arms + 1)
    ])
    static_gap = static_oracle_gap(shared.path) if shared is not None else float(
        _pairwise_sum(stacked["static_gap"].reshape(-1, 1))[0] / plan.num_replications)

    curve = RegretCurve(
        epochs=epochs,
        mean_gap_regret=gap_mean,
        mean_gap_stderr=gap_se,
        realized_regret=realized_mean,
        realized_stderr=realized_se,
        mean_cum_policy_reward=_pairwise_sum(stacked["policy"]) / plan.num_replications,
        mean_cum_oracle_reward=_pairwise_sum(stacked["oracle"]) / plan.num_replications,
        mean_policy_instant_reward=_pairwise_sum(stacked["policy_instant"]) / plan.num_replications,
        oracle_instant_reward=_pairwise_sum(stacked["oracle_instant"]) / plan.num_replications,
        arm_frequencies=frequencies,
        num_replications=plan.num_replications,
        estimator=plan.estimator,
        horizon=spec.horizon,
        num_arms=spec.num_arms,
        budget=spec.budget,
        generator="custom" if spec.kind == "constant" else spec.kind,
        master_seed=plan.master_seed,
        policy=policy_info,
        static_oracle_gap=static_gap,
        wall_time_seconds=time.perf_counter() - start,
    )
    logger.info(
        f"Final regret {curve.final_regret:.4f} +/- {curve.final_regret_stderr:.4f} "
        f"({curve.wall_time_seconds:.1f}s)"
    )
    return curve


def sweep(plans: List[ReplicationPlan], workers: int = 1, progress: bool = False) -> List[SweepPoint]:
    """
    Replicate every plan of a T-grid or beta-grid, in grid order

    Raises:
        SweepError: on an empty grid, or naming the grid point that failed
    """
    if not plans:
        raise SweepError("sweep needs at least one grid point")

    points: List[SweepPoint] = []
    for index, plan in enumerate(tqdm(plans, desc="grid points", disable=not progress)):
        spec = plan.instance
        try:
            curve = replicate(plan, workers=workers)
        except Exception as e:
            logger.error(f"Grid point {index} (T={spec.horizon}, V_T={spec.budget:.6g}) failed: {str(e)}")
            raise SweepError(
                f"grid point {index} (T={spec.horizon}, V_T={spec.budget:.6g}) failed: {e}"
            ) from e
        points.append(SweepPoint(index=index, horizon=spec.horizon, budget=spec.budget, curve=curve))
    return points

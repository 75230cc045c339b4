"""
Pydantic models for environments, policies, simulation results and experiment configs
"""
import math
from typing import List, Dict, Any, Optional, Tuple, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

UINT64_MAX = 2 ** 64 - 1

GeneratorKind = Literal["sinusoidal", "compressed", "worst_case", "custom"]
InstanceKind = Literal["sinusoidal", "compressed", "worst_case", "constant"]
PolicyKind = Literal["rexp3", "exp3_norestart", "uniform_random"]
EstimatorKind = Literal["mean_gap", "realized"]


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


# ---------------------------------------------------------------------------
# env
# ---------------------------------------------------------------------------

class BudgetSpec(BaseModel):
    """Variation budget: a constant V_T, or c * T^beta"""
    kind: Literal["constant", "power"] = Field(..., description="constant or power")
    v: Optional[float] = Field(None, gt=0, description="Constant budget value")
    coefficient: Optional[float] = Field(None, gt=0, description="Power-law coefficient c")
    exponent: Optional[float] = Field(None, ge=0, lt=1, description="Power-law exponent beta in [0, 1)")

    model_config = ConfigDict(json_schema_extra={
        "example": {"kind": "power", "coefficient": 3.0, "exponent": 0.3}
    })

    @model_validator(mode="after")
    def _fields_match_kind(self) -> "BudgetSpec":
        if self.kind == "constant" and self.v is None:
            raise ValueError("budget.v is required for a constant budget")
        if self.kind == "power" and (self.coefficient is None or self.exponent is None):
            raise ValueError("budget.coefficient and budget.exponent are required for a power budget")
        return self

    @property
    def scale(self) -> float:
        """The constant v, or the power-law coefficient c"""
        return float(self.v if self.kind == "constant" else self.coefficient)

    def resolve(self, horizon: int) -> float:
        """Resolved V_T for a horizon T"""
        if self.kind == "constant":
            return float(self.v)
        return float(self.coefficient) * float(horizon) ** float(self.exponent)

    def with_exponent(self, beta: float) -> "BudgetSpec":
        """Power budget with the same scale and exponent beta (stage-two sweeps)"""
        return BudgetSpec(kind="power", coefficient=self.scale, exponent=beta)


class MeanRewardPath(BaseModel):
    """K x T matrix of expected rewards; column t-1 holds epoch t"""
    means: np.ndarray = Field(..., description="Expected rewards, shape (K, T), entries in [0, 1]")

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator("means", mode="before")
    @classmethod
    def _validate_means(cls, value: Any) -> np.ndarray:
        means = np.array(value, dtype=float)
        if means.ndim != 2:
            raise ValueError(f"means must be a K x T matrix, got shape {means.shape}")
        num_arms, horizon = means.shape
        if num_arms < 2:
            raise ValueError(f"need at least 2 arms, got {num_arms}")
        if horizon < 1:
            raise ValueError("horizon must be at least 1")
        if not np.all(np.isfinite(means)) or np.any(means < 0.0) or np.any(means > 1.0):
            raise ValueError("every expected reward must lie in [0, 1]")
        return _readonly(means)

    @property
    def num_arms(self) -> int:
        return int(self.means.shape[0])

    @property
    def horizon(self) -> int:
        return int(self.means.shape[1])

    def mean(self, arm: int, t: int) -> float:
        """Expected reward of arm (1-based) at epoch t (1-based)"""
        return float(self.means[arm - 1, t - 1])


class BanditInstance(BaseModel):
    """Mean-reward path plus noise law and provenance"""
    path: MeanRewardPath
    noise: Literal["bernoulli"] = "bernoulli"
    budget: float = Field(..., ge=0, description="Resolved variation budget V_T")
    generator: GeneratorKind
    gen_seed: int = Field(0, ge=0, le=UINT64_MAX, description="Seed of the drawing stream (worst_case only)")
    metadata: Dict[str, Any] = Field(default_factory=dict, description="Generator constants, e.g. batch size and epsilon")

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @property
    def num_arms(self) -> int:
        return self.path.num_arms

    @property
    def horizon(self) -> int:
        return self.path.horizon


class InstanceSpec(BaseModel):
    """Recipe for building (or, for worst_case, drawing) an instance"""
    kind: InstanceKind
    horizon: int = Field(..., ge=1)
    budget: float = Field(..., gt=0)
    num_arms: int = Field(2, ge=2)
    batch_override: Optional[int] = Field(None, ge=1, description="Fixed worst-case batch size")
    constant_value: float = Field(0.5, ge=0, le=1, description="Mean of every arm for kind=constant")
    allow_budget_above_range: bool = False


# ---------------------------------------------------------------------------
# policy
# ---------------------------------------------------------------------------

class Rexp3Config(BaseModel):
    """Rexp3 tuning inputs; batch size and gamma default to the tuned formulas"""
    horizon: int = Field(..., ge=1)
    num_arms: int = Field(..., ge=2)
    budget: float = Field(..., gt=0)
    batch_size: Optional[int] = Field(None, ge=1, description="Explicit Delta_T override")
    gamma: Optional[float] = Field(None, gt=0, le=1, description="Explicit exploration rate override")


class PolicySpec(BaseModel):
    """Policy kind plus optional tuning overrides"""
    kind: PolicyKind = "rexp3"
    batch_size: Optional[int] = Field(None, ge=1)
    gamma: Optional[float] = Field(None, gt=0, le=1)


# ---------------------------------------------------------------------------
# sim
# ---------------------------------------------------------------------------

class ReplicationPlan(BaseModel):
    """Everything needed to reproduce one regret curve"""
    instance: InstanceSpec
    policy: PolicySpec = Field(default_factory=PolicySpec)
    num_replications: int = Field(..., ge=1)
    master_seed: int = Field(0, ge=0, le=UINT64_MAX)
    estimator: EstimatorKind = "mean_gap"
    record_trajectory: bool = True
    trajectory_stride: Optional[int] = Field(None, ge=1, description="Defaults to max(1, T // 1000)")

    def resolved_stride(self) -> int:
        if self.trajectory_stride is not None:
            return self.trajectory_stride
        return max(1, self.instance.horizon // 1000)


class EpisodeResult(BaseModel):
    """Per-epoch trajectories of one policy-vs-instance episode (index t-1 holds epoch t)"""
    chosen_arms: np.ndarray
    realized_rewards: np.ndarray
    cum_policy_mean_reward: np.ndarray
    cum_oracle_mean_reward: np.ndarray
    cum_regret_mean_gap: np.ndarray
    cum_regret_realized: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @property
    def horizon(self) -> int:
        return int(self.chosen_arms.shape[0])


class RegretCurve(BaseModel):
    """Replication-averaged trajectories at sampled epochs"""
    epochs: np.ndarray
    mean_gap_regret: np.ndarray
    mean_gap_stderr: np.ndarray
    realized_regret: np.ndarray
    realized_stderr: np.ndarray
    mean_cum_policy_reward: np.ndarray
    mean_cum_oracle_reward: np.ndarray
    mean_policy_instant_reward: np.ndarray
    oracle_instant_reward: np.ndarray
    arm_frequencies: np.ndarray = Field(..., description="Shape (K, n): share of replications pulling each arm")
    num_replications: int = Field(..., ge=1)
    estimator: EstimatorKind = "mean_gap"
    horizon: int
    num_arms: int
    budget: float
    generator: GeneratorKind
    master_seed: int
    policy: Dict[str, Any] = Field(default_factory=dict, description="Policy kind and resolved tuning")
    static_oracle_gap: float = 0.0
    wall_time_seconds: float = 0.0

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @property
    def mean_cum_regret(self) -> np.ndarray:
        return self.mean_gap_regret if self.estimator == "mean_gap" else self.realized_regret

    @property
    def std_err(self) -> np.ndarray:
        return self.mean_gap_stderr if self.estimator == "mean_gap" else self.realized_stderr

    @property
    def final_regret(self) -> float:
        return float(self.mean_cum_regret[-1])

    @property
    def final_regret_stderr(self) -> float:
        return float(self.std_err[-1])


class SweepPoint(BaseModel):
    """One grid point of a sweep"""
    index: int
    horizon: int
    budget: float
    curve: RegretCurve


# ---------------------------------------------------------------------------
# analysis
# ---------------------------------------------------------------------------

class SlopeFit(BaseModel):
    """Ordinary least squares fit of y on x (natural logs for regret growth)"""
    slope: float
    intercept: float
    r_squared: float
    points: List[Tuple[float, float]]
    residual_max: float

    @property
    def n_points(self) -> int:
        return len(self.points)


class SlopeTableRow(BaseModel):
    """One row of a stage-two table: log-log slope of regret vs T for V_T = c T^beta"""
    beta: float
    slope: float
    r_squared: float
    n_points: int


class BoundEnvelope(BaseModel):
    """Worst-case regret envelope: lower and upper minimax bounds"""
    lower: float
    upper: float
    T: int
    K: int
    V_T: float
    label: str = "worst-case envelope"


# ---------------------------------------------------------------------------
# cli
# ---------------------------------------------------------------------------

class InstanceConfig(BaseModel):
    """Instance family of an experiment"""
    kind: Literal["sinusoidal", "compressed", "worst_case"]
    K: int = Field(2, ge=2, description="Number of arms (worst_case only; the others use 2)")
    batch_override: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def _two_armed_families(self) -> "InstanceConfig":
        if self.kind != "worst_case" and self.K != 2:
            raise ValueError(f"instance.K must be 2 for {self.kind} instances")
        return self


class ExperimentConfig(BaseModel):
    """One reproducible experiment: a horizon grid (optionally per beta)"""
    name: str
    instance: InstanceConfig
    budget: BudgetSpec
    horizons: List[int] = Field(..., min_length=1)
    policy: PolicySpec = Field(default_factory=PolicySpec)
    replications: int = Field(..., ge=1)
    master_seed: int = Field(0, ge=0, le=UINT64_MAX)
    estimator: EstimatorKind = "mean_gap"
    output_dir: str = "./results"
    beta_grid: Optional[List[float]] = None
    workers: Optional[int] = Field(None, ge=1)
    allow_budget_above_range: bool = False
    trajectory_points: int = Field(1000, ge=1)

    model_config = ConfigDict(json_schema_extra={
        "example": {
            "name": "stage-one-sinusoidal-desk",
            "instance": {"kind": "sinusoidal"},
            "budget": {"kind": "constant", "v": 3.0},
            "horizons": [2000, 4000, 8000, 16000],
            "policy": {"kind": "rexp3"},
            "replications": 1000,
            "master_seed": 20140101,
            "estimator": "mean_gap",
            "output_dir": "./results/stage_one_sinusoidal"
        }
    })

    @field_validator("horizons")
    @classmethod
    def _strictly_increasing(cls, horizons: List[int]) -> List[int]:
        if any(T < 1 for T in horizons):
            raise ValueError("every horizon must be a positive integer")
        if any(b <= a for a, b in zip(horizons, horizons[1:])):
            raise ValueError("horizons must be strictly increasing")
        return horizons

    @field_validator("beta_grid")
    @classmethod
    def _beta_in_unit_interval(cls, grid: Optional[List[float]]) -> Optional[List[float]]:
        if grid is None:
            return grid
        if not grid:
            raise ValueError("beta_grid must not be empty")
        for beta in grid:
            if not 0.0 <= beta < 1.0:
                raise ValueError(f"beta_grid values must lie in [0, 1), got {beta}")
        if len(set(grid)) != len(grid):
            raise ValueError("beta_grid values must be distinct")
        return grid

    @model_validator(mode="after")
    def _admissible_budgets(self) -> "ExperimentConfig":
        if self.instance.kind == "worst_case" and self.allow_budget_above_range:
            raise ValueError(
                "allow_budget_above_range: worst_case instances need V_T within [1/K, T/K]"
            )
        K = self.instance.K
        for T in self.horizons:
            if self.instance.kind == "compressed" and T < 3:
                raise ValueError(f"horizons: compressed instances need T >= 3, got {T}")
            for beta, spec in self.budget_specs():
                V_T = spec.resolve(T)
                low, high = 1.0 / K, T / K
                tag = f" (beta={beta})" if beta is not None else ""
                if V_T < low or (V_T > high and not self.allow_budget_above_range):
                    raise ValueError(
                        f"budget: V_T={V_T:.6g} for T={T}{tag} outside the admissible range "
                        f"[{low:.6g}, {high:.6g}]"
                    )
        return self

    def budget_specs(self) -> List[Tuple[Optional[float], BudgetSpec]]:
        """(beta, budget) pairs: one per beta in stage-two mode, else the configured budget"""
        if self.beta_grid is None:
            return [(None, self.budget)]
        return [(beta, self.budget.with_exponent(beta)) for beta in sorted(self.beta_grid)]


class RunSummary(BaseModel):
    """Summary JSON written per replication plan"""
    T: int
    K: int
    V_T: float
    policy: str
    delta_T: Optional[int]
    gamma: Optional[float]
    R: int
    master_seed: int
    final_regret: float
    final_regret_stderr: float
    wall_time_seconds: float
    estimator: EstimatorKind
    generator: GeneratorKind
    budget_spec: Optional[BudgetSpec] = None
    beta: Optional[float] = None
    theory_lower: Optional[float] = None
    theory_upper: Optional[float] = None
    batched_upper: Optional[float] = None
    static_oracle_gap: float = 0.0
    config: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("final_regret", "final_regret_stderr", "wall_time_seconds")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("summary values must be finite")
        return value

"""
Regret-growth fits, theoretical bound envelopes and stage-two slope tables
"""
import math
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger

from models.schemas import BoundEnvelope, SlopeFit, SlopeTableRow
from services.environment import validate_budget_range
from services.policies import batch_size
from utils.errors import DegenerateInputError

LOWER_CONSTANT = 1.0 / 8.0
UPPER_CONSTANT = 6.0 * math.sqrt(math.e - 1.0) + 4.0

# Published estimated slopes for V_T = 3 T^beta (T from 3000 to 40000, 20,000 replications)
PUBLISHED_SLOPES: Tuple[Tuple[float, float], ...] = (
    (0.0, 0.6997),
    (0.1, 0.7558),
    (0.2, 0.7915),
    (0.3, 0.8421),
    (0.4, 0.8801),
    (0.5, 0.9210),
    (0.6, 0.9519),
    (0.7, 0.9813),
    (0.8, 0.9942),
    (0.9, 1.0036),
)


def linear_fit(x: Sequence[float], y: Sequence[float]) -> SlopeFit:
    """
    Unweighted ordinary least squares of y on x

    Raises:
        DegenerateInputError: fewer than 2 points or repeated x values
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise DegenerateInputError(f"need at least 2 points for a fit, got {x.size}")
    if np.unique(x).size != x.size:
        raise DegenerateInputError("x values must be distinct")

    slope, intercept = np.polyfit(x, y, 1)
    residuals = y - (slope * x + intercept)
    ss_res = float(np.sum(residuals ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=min(1.0, max(0.0, r_squared)),
        points=[(float(a), float(b)) for a, b in zip(x, y)],
        residual_max=float(np.max(np.abs(residuals))),
    )


def loglog_slope(points: Sequence[Tuple[float, float]]) -> SlopeFit:
    """
    Fit ln(regret) = intercept + slope * ln(T)

    Args:
        points: (T, regret) pairs with distinct T and positive regret

    Returns:
        SlopeFit whose points are the (ln T, ln regret) pairs

    Raises:
        DegenerateInputError: fewer than 2 points, non-positive regret, duplicate T
    """
    if len(points) < 2:
        raise DegenerateInputError(f"need at least 2 (T, regret) points, got {len(points)}")
    horizons = np.array([p[0] for p in points], dtype=float)
    regrets = np.array([p[1] for p in points], dtype=float)
    if np.any(horizons <= 0):
        raise DegenerateInputError("horizons must be positive")
    if np.any(~np.isfinite(regrets)) or np.any(regrets <= 0):
        raise DegenerateInputError("regrets must be finite and strictly positive for a log-log fit")
    if np.unique(horizons).size != horizons.size:
        raise DegenerateInputError("duplicate horizon T in log-log fit")
    return linear_fit(np.log(horizons), np.log(regrets))


def theory_lower_bound(horizon: int, num_arms: int, budget: float, check_range: bool = True) -> float:
    """Worst-case lower bound (1/8) (K V_T)^(1/3) T^(2/3)"""
    if check_range:
        validate_budget_range(horizon, num_arms, budget)
    return LOWER_CONSTANT * (num_arms * budget) ** (1.0 / 3.0) * horizon ** (2.0 / 3.0)


def theory_upper_bound(horizon: int, num_arms: int, budget: float, check_range: bool = True) -> float:
    """Rexp3 upper bound (6 sqrt(e-1) + 4) (K ln K V_T)^(1/3) T^(2/3)"""
    if check_range:
        validate_budget_range(horizon, num_arms, budget)
    return UPPER_CONSTANT * (num_arms * math.log(num_arms) * budget) ** (1.0 / 3.0) * horizon ** (2.0 / 3.0)


def batched_upper_bound(horizon: int, num_arms: int, budget: float, delta: Optional[int] = None) -> float:
    """
    Finite-horizon bound before simplification

    (T / Delta_T + 1) * 2 sqrt(e-1) sqrt(Delta_T K ln K) + 2 Delta_T V_T, with Delta_T the tuned batch
    size unless given.
    """
    if delta is None:
        delta = batch_size(horizon, num_arms, budget)
    per_batch = 2.0 * math.sqrt(math.e - 1.0) * math.sqrt(delta * num_arms * math.log(num_arms))
    return (horizon / delta + 1.0) * per_batch + 2.0 * delta * budget


def bound_envelope(horizon: int, num_arms: int, budget: float, check_range: bool = True) -> BoundEnvelope:
    """Lower and upper bounds together; a worst-case envelope, not a per-instance guarantee"""
    return BoundEnvelope(
        lower=theory_lower_bound(horizon, num_arms, budget, check_range),
        upper=theory_upper_bound(horizon, num_arms, budget, check_range),
        T=horizon,
        K=num_arms,
        V_T=budget,
    )


def minimax_exponent(beta: float) -> float:
    """Regret growth exponent (2 + beta) / 3 for V_T = C T^beta"""
    return (2.0 + beta) / 3.0


def stage_two_slope_table(results: Dict[float, Sequence[Tuple[float, float]]]) -> List[SlopeTableRow]:
    """
    Log-log slope per beta

    Args:
        results: beta -> (T, final regret) pairs of that beta's horizon grid

    Returns:
        Rows in ascending beta
    """
    rows = []
    for beta in sorted(results):
        fit = loglog_slope(list(results[beta]))
        rows.append(SlopeTableRow(beta=float(beta), slope=fit.slope, r_squared=fit.r_squared,
                                  n_points=fit.n_points))
        logger.debug(f"beta={beta}: slope={fit.slope:.4f} r2={fit.r_squared:.4f}")
    return rows


def slope_of_slopes(rows: Sequence[Union[SlopeTableRow, Tuple[float, float]]]) -> float:
    """
    Linear OLS slope of the estimated log-log slope against beta (expected near 1/3)

    Raises:
        DegenerateInputError: fewer than 2 rows
    """
    pairs = [(r.beta, r.slope) if isinstance(r, SlopeTableRow) else (float(r[0]), float(r[1])) for r in rows]
    if len(pairs) < 2:
        raise DegenerateInputError(f"slope of slopes needs at least 2 rows, got {len(pairs)}")
    return linear_fit([p[0] for p in pairs], [p[1] for p in pairs]).slope


def published_slope_table() -> List[SlopeTableRow]:
    """The ten published stage-two rows (r_squared unknown, recorded as 1)"""
    return [SlopeTableRow(beta=b, slope=s, r_squared=1.0, n_points=0) for b, s in PUBLISHED_SLOPES]


def slope_table_text(rows: Sequence[SlopeTableRow]) -> str:
    """Human-readable stage-two table"""
    lines = [
        "+------------+-----------------+-------------------+",
        "| beta value | Estimated slope | Theory (2+beta)/3 |",
        "+------------+-----------------+-------------------+",
    ]
    for row in rows:
        lines.append(f"| {row.beta:>10.1f} | {row.slope:>15.4f} | {minimax_exponent(row.beta):>17.4f} |")
    lines.append("+------------+-----------------+-------------------+")
    return "\n".join(lines)

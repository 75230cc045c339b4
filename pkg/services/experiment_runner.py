"""
Experiment pipelines behind the run / sweep-beta / analyze commands
"""
import json
import os
from typing import Any, Dict, List, Optional, Tuple

from loguru import logger
from pydantic import ValidationError

from config import Settings
from models.schemas import (
    BudgetSpec, ExperimentConfig, InstanceSpec, ReplicationPlan, RunSummary, SlopeTableRow, SweepPoint,
)
from services.analysis import (
    batched_upper_bound, loglog_slope, slope_of_slopes, slope_table_text, stage_two_slope_table,
    theory_lower_bound, theory_upper_bound,
)
from services.environment import build_instance
from services.simulation import sweep
from utils import csv_io
from utils.errors import DegenerateInputError, InvalidConfigError, MalformedCSVError

DETERMINISTIC_KINDS = ("sinusoidal", "compressed", "constant")


def config_error(exc: ValidationError) -> InvalidConfigError:
    """First pydantic error as an InvalidConfigError naming the field"""
    first = exc.errors()[0]
    message = first["msg"].removeprefix("Value error, ")
    field_name = ".".join(str(part) for part in first["loc"])
    if not field_name:
        head = message.split(":", 1)[0]
        field_name = head if head.replace("_", "").replace(".", "").isalnum() else "config"
    return InvalidConfigError(message, field=field_name)


def load_experiment_config(config_path: str) -> ExperimentConfig:
    """
    Load and validate an experiment config (JSON)

    Raises:
        InvalidConfigError: unreadable file, bad JSON or failed validation
    """
    try:
        with open(config_path) as f:
            text = f.read()
    except OSError as e:
        raise InvalidConfigError(f"cannot read config {config_path}: {e}", field="config")
    try:
        return ExperimentConfig.model_validate_json(text)
    except ValidationError as e:
        error = config_error(e)
        logger.error(f"Invalid config {config_path}: {error}")
        raise error from e


def save_experiment_config(config: ExperimentConfig, config_path: str) -> None:
    """Write a config as JSON; load_experiment_config reads it back unchanged"""
    parent = os.path.dirname(config_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(config_path, "w") as f:
        f.write(config.model_dump_json(indent=2) + "\n")


def resolve_runtime(config: ExperimentConfig, settings: Settings, workers: Optional[int] = None,
                    seed: Optional[int] = None, output_dir: Optional[str] = None) -> Tuple[ExperimentConfig, int]:
    """
    Apply overrides: flags > environment > config file

    Returns:
        (config with output_dir / master_seed / workers resolved, worker count)
    """
    update: Dict[str, Any] = {}
    resolved_dir = output_dir or settings.output_dir
    if resolved_dir:
        update["output_dir"] = resolved_dir
    if seed is not None:
        update["master_seed"] = seed
    resolved_workers = workers or settings.workers or config.workers or 1
    if resolved_workers < 1:
        raise InvalidConfigError("workers must be a positive integer", field="workers")
    update["workers"] = resolved_workers
    try:
        resolved = ExperimentConfig.model_validate({**config.model_dump(), **update})
    except ValidationError as e:
        raise config_error(e) from e
    return resolved, resolved_workers


class ExperimentRunner:
    """Runs the grids of one experiment config and writes every output file"""

    def __init__(self, config: ExperimentConfig, workers: int = 1, progress: bool = False):
        self.config = config
        self.workers = workers
        self.progress = progress
        self.output_dir = config.output_dir

    # ------------------------------------------------------------------
    # plans and provenance
    # ------------------------------------------------------------------

    def plans_for(self, budget: BudgetSpec) -> List[ReplicationPlan]:
        """One replication plan per horizon"""
        cfg = self.config
        plans = []
        for horizon in cfg.horizons:
            instance = InstanceSpec(
                kind=cfg.instance.kind,
                horizon=horizon,
                budget=budget.resolve(horizon),
                num_arms=cfg.instance.K,
                batch_override=cfg.instance.batch_override,
                allow_budget_above_range=cfg.allow_budget_above_range,
            )
            plans.append(ReplicationPlan(
                instance=instance,
                policy=cfg.policy,
                num_replications=cfg.replications,
                master_seed=cfg.master_seed,
                estimator=cfg.estimator,
                trajectory_stride=max(1, horizon // cfg.trajectory_points),
            ))
        return plans

    def _recorded_config(self) -> Dict[str, Any]:
        # worker count stays out so outputs match across --workers
        return self.config.model_dump(mode="json", exclude={"workers"})

    @staticmethod
    def _resolved(point: SweepPoint) -> Dict[str, Any]:
        return {"T": point.horizon, "V_T": point.budget, **point.curve.policy}

    def _provenance(self, point: SweepPoint, beta: Optional[float]) -> Dict[str, Any]:
        return {"config": self._recorded_config(), "beta": beta, **self._resolved(point)}

    def _save_config(self) -> None:
        os.makedirs(self.output_dir, exist_ok=True)
        save_experiment_config(self.config.model_copy(update={"workers": None}),
                               os.path.join(self.output_dir, "config.json"))

    def _bounds(self, horizon: int, budget: float) -> Tuple[float, float]:
        check = not self.config.allow_budget_above_range
        K = self.config.instance.K
        return theory_lower_bound(horizon, K, budget, check), theory_upper_bound(horizon, K, budget, check)

    # ------------------------------------------------------------------
    # grids
    # ------------------------------------------------------------------

    def run_grid(self, budget: BudgetSpec, out_dir: str, beta: Optional[float] = None) -> List[SweepPoint]:
        """
        Replicate every horizon under one budget and write its files

        Writes curve_T{T}.csv, performance_T{T}.csv, summary_T{T}.json per horizon (plus
        path_T{T}.csv for deterministic instances), then grid.csv and (with at least 2
        horizons) grid_fit.json.
        """
        plans = self.plans_for(budget)
        points = sweep(plans, workers=self.workers, progress=self.progress)
        K = self.config.instance.K
        grid_rows = []
        resolved = []

        for plan, point in zip(plans, points):
            curve = point.curve
            provenance = self._provenance(point, beta)
            if plan.instance.kind in DETERMINISTIC_KINDS:
                csv_io.write_path_csv(build_instance(plan.instance).path,
                                      os.path.join(out_dir, f"path_T{point.horizon}.csv"), provenance)
            csv_io.write_curve_csv(curve, os.path.join(out_dir, f"curve_T{point.horizon}.csv"), provenance)
            csv_io.write_performance_csv(curve, os.path.join(out_dir, f"performance_T{point.horizon}.csv"),
                                         provenance)

            lower, upper = self._bounds(point.horizon, point.budget)
            delta = curve.policy.get("delta_T")
            summary = RunSummary(
                T=point.horizon,
                K=K,
                V_T=point.budget,
                policy=curve.policy["policy"],
                delta_T=delta,
                gamma=curve.policy.get("gamma"),
                R=curve.num_replications,
                master_seed=curve.master_seed,
                final_regret=curve.final_regret,
                final_regret_stderr=curve.final_regret_stderr,
                wall_time_seconds=curve.wall_time_seconds,
                estimator=curve.estimator,
                generator=curve.generator,
                budget_spec=budget,
                beta=beta,
                theory_lower=lower,
                theory_upper=upper,
                batched_upper=batched_upper_bound(point.horizon, K, point.budget, delta) if delta else None,
                static_oracle_gap=curve.static_oracle_gap,
                config=provenance,
            )
            csv_io.write_json(os.path.join(out_dir, f"summary_T{point.horizon}.json"), summary.model_dump(mode="json"))
            grid_rows.append((point.horizon, curve.final_regret, curve.final_regret_stderr, lower, upper))
            resolved.append(self._resolved(point))

        grid_provenance = {"config": self._recorded_config(), "beta": beta, "resolved": resolved}
        csv_io.write_grid_csv(grid_rows, os.path.join(out_dir, "grid.csv"), grid_provenance)
        if len(points) >= 2:
            try:
                fit = loglog_slope([(row[0], row[1]) for row in grid_rows])
                csv_io.write_json(os.path.join(out_dir, "grid_fit.json"),
                                  {**fit.model_dump(mode="json"), "n_points": fit.n_points,
                                   "provenance": grid_provenance})
                logger.info(f"Log-log slope {fit.slope:.4f} (r2={fit.r_squared:.4f}) over {fit.n_points} horizons")
            except DegenerateInputError as e:
                logger.warning(f"No log-log fit for this grid: {e}")
        logger.info(f"Wrote {len(points)} grid points to {out_dir}")
        return points

    def run(self) -> List[SweepPoint]:
        """Stage one: one horizon grid under the configured budget"""
        if self.config.beta_grid is not None:
            raise InvalidConfigError("run takes a config without beta_grid; use sweep-beta", field="beta_grid")
        self._save_config()
        return self.run_grid(self.config.budget, self.output_dir)

    def sweep_beta(self) -> Dict[str, Any]:
        """
        Stage two: the horizon grid for every beta, then the slope table and slope of slopes

        Returns:
            Report with the table rows and slope of slopes ("n/a" with fewer than 2 rows)
        """
        if self.config.beta_grid is None:
            raise InvalidConfigError("sweep-beta needs a beta_grid", field="beta_grid")
        self._save_config()

        results: Dict[float, List[Tuple[int, float]]] = {}
        resolved: Dict[str, List[Dict[str, Any]]] = {}
        for beta, budget in self.config.budget_specs():
            logger.info(f"Stage two: beta={beta} (V_T = {budget.scale:g} T^{beta})")
            points = self.run_grid(budget, os.path.join(self.output_dir, f"beta_{beta:g}"), beta=beta)
            results[beta] = [(p.horizon, p.curve.final_regret) for p in points]
            resolved[f"{beta:g}"] = [self._resolved(p) for p in points]

        provenance = {"config": self._recorded_config(), "resolved": resolved}
        rows = stage_two_slope_table(results) if len(self.config.horizons) >= 2 else []
        csv_io.write_slope_table_csv(rows, os.path.join(self.output_dir, "slope_table.csv"), provenance)
        table = slope_table_text(rows)
        csv_io.write_text(os.path.join(self.output_dir, "slope_table.txt"), table, provenance)

        try:
            sos: Any = slope_of_slopes(rows)
        except DegenerateInputError as e:
            logger.warning(f"Slope of slopes unavailable: {e}")
            sos = "n/a"
        report = {
            "rows": [row.model_dump() for row in rows],
            "slope_of_slopes": sos,
            "provenance": provenance,
        }
        csv_io.write_json(os.path.join(self.output_dir, "stage_two_summary.json"), report)
        report["table"] = table
        return report


def analyze_file(input_path: str, output_path: Optional[str] = None) -> Dict[str, Any]:
    """
    Re-run the analysis on a stored grid CSV or slope-table CSV

    Args:
        input_path: grid.csv (T,final_regret,...) or slope_table.csv (beta,slope,...)
        output_path: JSON report path, defaults to <input>_analysis.json

    Returns:
        The report written to disk

    Raises:
        MalformedCSVError: unreadable input, naming the line
        DegenerateInputError: not enough points to fit
    """
    if not os.path.exists(input_path):
        raise MalformedCSVError(f"no such file: {input_path}")
    header, _, provenance = csv_io.read_csv(input_path)

    if header[:1] == ["beta"]:
        rows: List[SlopeTableRow] = csv_io.read_slope_table_csv(input_path)
        try:
            sos: Any = slope_of_slopes(rows)
        except DegenerateInputError:
            sos = "n/a"
        report = {"kind": "slope_table", "rows": [r.model_dump() for r in rows], "slope_of_slopes": sos}
    else:
        grid = csv_io.read_grid_csv(input_path)
        fit = loglog_slope([(T, regret) for T, regret, _ in grid])
        report = {"kind": "grid", **fit.model_dump(mode="json"), "n_points": fit.n_points,
                  "std_errs": [se for _, _, se in grid]}
    report["input"] = input_path
    report["provenance"] = provenance

    if output_path is None:
        output_path = os.path.splitext(input_path)[0] + "_analysis.json"
    csv_io.write_json(output_path, report)
    logger.info(f"Analysis written to {output_path}")
    return report


def format_report(report: Dict[str, Any]) -> str:
    """Text rendering of an analysis report for stdout"""
    if report.get("kind") == "slope_table":
        rows = [SlopeTableRow(**r) for r in report["rows"]]
        sos = report["slope_of_slopes"]
        sos_text = sos if isinstance(sos, str) else f"{sos:.4f}"
        return f"{slope_table_text(rows)}\nslope of slopes: {sos_text}"
    return "\n".join([
        f"slope:        {report['slope']:.6f}",
        f"intercept:    {report['intercept']:.6f}",
        f"r_squared:    {report['r_squared']:.6f}",
        f"residual_max: {report['residual_max']:.6g}",
        f"n_points:     {report['n_points']}",
        "points (ln T, ln regret): " + json.dumps(report["points"]),
    ])

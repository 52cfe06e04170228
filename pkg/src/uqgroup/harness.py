"""Adaptive-refinement study harness comparing ensemble grouping strategies.

One run drives the four-step loop: group the current level's samples, solve
them (in ensembles for PDE problems, by closed-form cost for the analytic
ones), update the sparse-grid surrogates for the quantity of interest and for
the iteration cost, then refine or stop.  All requested strategies are
evaluated as accounting over the same per-sample iteration counts; lane
arithmetic is grouping-independent, so the physics is computed exactly once.

Level numbering is 1-based: level 1 is the initial grid, solved as one batch
and grouped in generation order for every strategy except the post-hoc "its"
oracle.  Predicted iteration counts for level L always come from the
surrogate state fitted through level L-1.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .ensemble import ensemble_pcg
from .fem3d import StructuredMesh, assemble, qoi
from .grouping import (
    GroupingPlan,
    compute_R,
    group_by_key,
    group_natural,
    group_oracle,
    predicted_speedup,
)
from .hier_grid import HierGrid, RefinementPolicy
from .random_field import anisotropy_indicator, build_field

__all__ = [
    "ConfigurationError",
    "SolverConfig",
    "FieldConfig",
    "MeshConfig",
    "AnalyticConfig",
    "RunConfig",
    "preset_config",
    "config_from_dict",
    "analytic_qoi",
    "analytic_iters",
    "SampleRecord",
    "PlanRecord",
    "LevelRecord",
    "RunReport",
    "adaptive_run",
    "emit_reports",
    "parse_manifest",
    "read_base_curve",
]

STRATEGIES = ("nat", "par", "sur", "its")
ANALYTIC_PROBLEMS = ("analytic_g1", "analytic_g2")
PDE_PROBLEMS = ("pde_test1", "pde_test2", "pde_isotropic_baseline")

QOI_CHANNEL = "qoi"
ITER_CHANNEL = "iterations"


class ConfigurationError(ValueError):
    """Inconsistent or incomplete run configuration."""


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-7
    maxit: int = 30000

    def to_dict(self) -> dict:
        return {"tol": self.tol, "maxit": self.maxit}


@dataclass(frozen=True)
class FieldConfig:
    delta: float = 0.25
    sigma0: float = math.sqrt(300.0)
    a_min: float = 0.1
    a_hat_mode: str = "constant"
    a_hat_value: float = 1.0
    a_y: float = 1.0
    a_z: float = 1.0
    nystrom_points: int = 513
    sigma0_convention: str = "stddev"
    expansion: str = "log"

    def to_dict(self, n_modes: int) -> dict:
        return {
            "delta": self.delta,
            "sigma0": self.sigma0,
            "N": n_modes,
            "a_min": self.a_min,
            "a_hat": {"mode": self.a_hat_mode, "value": self.a_hat_value},
            "a_y": self.a_y,
            "a_z": self.a_z,
            "nystrom_points": self.nystrom_points,
            "sigma0_convention": self.sigma0_convention,
            "expansion": self.expansion,
        }


@dataclass(frozen=True)
class MeshConfig:
    mesh_cells: int = 16
    quadrature: str = "gauss2"

    def to_dict(self) -> dict:
        return {"mesh_cells": self.mesh_cells, "quadrature": self.quadrature}


@dataclass(frozen=True)
class AnalyticConfig:
    """Parameters of the closed-form QoI and iteration-cost proxies."""

    a1: float = 2.0
    a2: float = 2.0
    u1: float = 0.0
    u2: float = 0.0
    r1: float = 0.25
    r2: float = 0.65

    def to_dict(self) -> dict:
        return {"a1": self.a1, "a2": self.a2, "u1": self.u1, "u2": self.u2,
                "r1": self.r1, "r2": self.r2}


@dataclass(frozen=True)
class RunConfig:
    problem: str
    n_dims: int
    ensemble_size: int
    tau: float
    n_max: int
    initial_level: int
    strategies: tuple[str, ...]
    solver: SolverConfig
    field: FieldConfig | None = None
    mesh: MeshConfig | None = None
    analytic: AnalyticConfig | None = None
    base_curve: tuple[tuple[int, float], ...] | None = None
    dump_residuals: bool = False

    def __post_init__(self) -> None:
        if self.problem not in ANALYTIC_PROBLEMS + PDE_PROBLEMS:
            raise ConfigurationError(f"unknown problem {self.problem!r}")
        if self.ensemble_size < 1:
            raise ConfigurationError("ensemble size must be >= 1")
        if self.tau <= 0:
            raise ConfigurationError("tau must be positive")
        if self.n_max < 1:
            raise ConfigurationError("n_max must be >= 1")
        if self.initial_level < 0:
            raise ConfigurationError("initial_level must be >= 0")
        seen = set()
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ConfigurationError(f"unknown strategy {s!r}")
            if s in seen:
                raise ConfigurationError(f"duplicate strategy {s!r}")
            seen.add(s)
        if self.is_pde:
            if self.field is None or self.mesh is None:
                raise ConfigurationError(f"{self.problem} needs field and mesh blocks")
        else:
            if self.n_dims != 2:
                raise ConfigurationError("analytic problems are two-dimensional")
            if self.analytic is None:
                raise ConfigurationError(f"{self.problem} needs an analytic block")
            if "par" in self.strategies:
                raise ConfigurationError("strategy 'par' needs a PDE problem")

    @property
    def is_pde(self) -> bool:
        return self.problem in PDE_PROBLEMS

    def to_dict(self) -> dict:
        out = {
            "problem": self.problem,
            "n_dims": self.n_dims,
            "S": self.ensemble_size,
            "tau": self.tau,
            "n_max": self.n_max,
            "initial_level": self.initial_level,
            "strategies": list(self.strategies),
            "solver": self.solver.to_dict(),
            "field": self.field.to_dict(self.n_dims) if self.field else None,
            "mesh": self.mesh.to_dict() if self.mesh else None,
            "analytic": self.analytic.to_dict() if self.analytic else None,
            "base_curve": [[s, v] for s, v in self.base_curve] if self.base_curve else None,
            "dump_residuals": self.dump_residuals,
        }
        return out


_PRESETS: dict[str, dict] = {
    "analytic_g1": dict(
        n_dims=2, ensemble_size=8, tau=5e-4, n_max=1000, initial_level=2,
        strategies=("nat", "sur", "its"),
    ),
    "analytic_g2": dict(
        n_dims=2, ensemble_size=8, tau=5e-4, n_max=1000, initial_level=2,
        strategies=("nat", "sur", "its"),
    ),
    "pde_test1": dict(
        n_dims=4, ensemble_size=4, tau=1e-3, n_max=600, initial_level=1,
        strategies=("nat", "par", "sur", "its"),
    ),
    "pde_test2": dict(
        n_dims=4, ensemble_size=4, tau=1e-3, n_max=600, initial_level=1,
        strategies=("nat", "par", "sur", "its"),
    ),
    "pde_isotropic_baseline": dict(
        n_dims=4, ensemble_size=4, tau=1e-3, n_max=600, initial_level=1,
        strategies=("nat", "par", "sur", "its"),
    ),
}


def preset_config(problem: str, **overrides) -> RunConfig:
    """Build a RunConfig for a named problem with sensible per-problem defaults."""
    if problem not in _PRESETS:
        raise ConfigurationError(f"unknown problem {problem!r}")
    kw = dict(_PRESETS[problem])
    kw["problem"] = problem
    kw["solver"] = SolverConfig()
    if problem in ANALYTIC_PROBLEMS:
        kw["analytic"] = AnalyticConfig()
    elif problem == "pde_isotropic_baseline":
        # Constant isotropic coefficient: the premise that every sample costs
        # the same number of iterations, realised exactly.
        kw["field"] = FieldConfig(sigma0=0.0, a_min=0.0, a_hat_value=1.0, expansion="linear")
        kw["mesh"] = MeshConfig()
    else:
        # sqrt(300) under the kernel convention keeps the log-amplitudes
        # around +-8; the stddev convention would overflow exp at the corners.
        kw["field"] = FieldConfig(
            sigma0_convention="kernel",
            a_hat_mode="test2" if problem == "pde_test2" else "constant",
        )
        kw["mesh"] = MeshConfig()
    kw.update(overrides)
    return RunConfig(**kw)


def config_from_dict(doc: Mapping) -> RunConfig:
    """Parse the JSON configuration schema (the inverse of RunConfig.to_dict)."""
    if "problem" not in doc:
        raise ConfigurationError("configuration needs a 'problem' key")
    problem = doc["problem"]
    if problem not in _PRESETS:
        raise ConfigurationError(f"unknown problem {problem!r}")
    kw: dict = {}
    for src, dst in (("n_dims", "n_dims"), ("S", "ensemble_size"), ("tau", "tau"),
                     ("n_max", "n_max"), ("initial_level", "initial_level"),
                     ("dump_residuals", "dump_residuals")):
        if doc.get(src) is not None:
            kw[dst] = doc[src]
    if doc.get("strategies") is not None:
        kw["strategies"] = tuple(doc["strategies"])
    if doc.get("solver") is not None:
        kw["solver"] = SolverConfig(**doc["solver"])
    if doc.get("analytic") is not None:
        kw["analytic"] = AnalyticConfig(**doc["analytic"])
    if doc.get("mesh") is not None:
        kw["mesh"] = MeshConfig(**doc["mesh"])
    if doc.get("field") is not None:
        f = dict(doc["field"])
        n_modes = f.pop("N", None)
        a_hat = f.pop("a_hat", None)
        if a_hat is not None:
            f["a_hat_mode"] = a_hat["mode"]
            f["a_hat_value"] = a_hat.get("value", 1.0)
        kw["field"] = FieldConfig(**f)
        if n_modes is not None:
            if "n_dims" in kw and kw["n_dims"] != n_modes:
                raise ConfigurationError("field block N disagrees with n_dims")
            kw.setdefault("n_dims", n_modes)
    if doc.get("base_curve") is not None:
        bc = doc["base_curve"]
        pairs = bc.items() if isinstance(bc, Mapping) else bc
        kw["base_curve"] = tuple(sorted((int(s), float(v)) for s, v in pairs))
    return preset_config(problem, **kw)


def read_base_curve(path: str | Path) -> tuple[tuple[int, float], ...]:
    """Read a user-measured speed-up curve CSV with columns (S, speedup)."""
    pairs: list[tuple[int, float]] = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                pairs.append((int(row[0]), float(row[1])))
            except ValueError:
                if not pairs:  # tolerate a header line
                    continue
                raise ConfigurationError(f"bad base-curve row: {row}") from None
    if not pairs:
        raise ConfigurationError(f"base curve {path} has no data rows")
    return tuple(sorted(pairs))


# ---------------------------------------------------------------------------
# analytic problem functions


def analytic_qoi(y: np.ndarray, which: str, r1: float = 0.25, r2: float = 0.65) -> np.ndarray:
    """Closed-form quantities of interest on a batch of 2D points.

    "g1" is a smooth sum of Gaussian bumps on [-2, 2]^2; "g2" is a radial
    indicator on [0, 1]^2 equal to 1 inside y1^2+y2^2 < r1, 0 on the middle
    band up to r2 and 1 outside.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    y1, y2 = y[:, 0], y[:, 1]
    if which == "g1":
        return (
            -np.exp(-((y1 - 1.0) ** 2))
            + np.exp(-0.8 * (y1 + 1.0) ** 2) * np.exp(-((y2 - 1.0) ** 2))
            + np.exp(-0.8 * (y2 + 1.0))
        )
    if which == "g2":
        s = y1**2 + y2**2
        return np.where((s >= r1) & (s <= r2), 0.0, 1.0)
    raise ConfigurationError(f"unknown analytic QoI {which!r}")


def analytic_iters(
    y: np.ndarray, a1: float = 2.0, a2: float = 2.0, u1: float = 0.0, u2: float = 0.0
) -> np.ndarray:
    """Smooth synthetic solver-cost profile: a Gaussian bump plus a floor of 1."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    return np.exp(-(a1**2) * (y[:, 0] - u1) ** 2 - (a2**2) * (y[:, 1] - u2) ** 2) + 1.0


# ---------------------------------------------------------------------------
# problems


class _AnalyticProblem:
    is_pde = False

    def __init__(self, config: RunConfig):
        self.config = config
        self.which = "g1" if config.problem == "analytic_g1" else "g2"
        self.box = ((-2.0, 2.0), (-2.0, 2.0)) if self.which == "g1" else ((0.0, 1.0), (0.0, 1.0))

    def qoi_values(self, coords: np.ndarray) -> np.ndarray:
        a = self.config.analytic
        return analytic_qoi(coords, self.which, a.r1, a.r2)

    def iter_values(self, coords: np.ndarray) -> np.ndarray:
        a = self.config.analytic
        return analytic_iters(coords, a.a1, a.a2, a.u1, a.u2)


class _PdeProblem:
    is_pde = True

    def __init__(self, config: RunConfig):
        self.config = config
        f = config.field
        self.field = build_field(
            delta=f.delta,
            sigma0=f.sigma0,
            n_modes=config.n_dims,
            a_min=f.a_min,
            a_hat_mode=f.a_hat_mode,
            a_hat_value=f.a_hat_value,
            a_y=f.a_y,
            a_z=f.a_z,
            nystrom_points=f.nystrom_points,
            sigma0_convention=f.sigma0_convention,
            expansion=f.expansion,
        )
        self.mesh = StructuredMesh(config.mesh.mesh_cells, config.mesh.quadrature)
        self.mode_vals = self.field.mode_values(self.mesh.quad_points)
        self.box = tuple([(-1.0, 1.0)] * config.n_dims)

    def indicator_values(self, coords: np.ndarray) -> np.ndarray:
        return np.array(
            [anisotropy_indicator(self.field, y, self.mesh.quad_points, self.mode_vals)
             for y in coords]
        )

    def solve_plan(
        self,
        plan: GroupingPlan,
        coords_by_id: Mapping[int, np.ndarray],
        residual_sink: Callable[[int, int, list[np.ndarray]], None] | None,
    ) -> tuple[dict[int, int], dict[int, float], list[str]]:
        iters: dict[int, int] = {}
        qois: dict[int, float] = {}
        notes: list[str] = []
        record = residual_sink is not None
        for k, group in enumerate(plan.ensembles):
            samples = np.array([coords_by_id[sid] for sid in group])
            system = assemble(self.mesh, self.field, samples, self.mode_vals)
            result = ensemble_pcg(
                system.matrix,
                system.rhs,
                tol=self.config.solver.tol,
                maxit=self.config.solver.maxit,
                record_history=record,
            )
            if record:
                residual_sink(plan.level, k, result.residual_history)
            if not bool(np.all(result.converged_per_lane)):
                bad = int(np.count_nonzero(~result.converged_per_lane))
                notes.append(
                    f"level {plan.level} ensemble {k}: {bad} lane(s) hit maxit "
                    f"({self.config.solver.maxit}) unconverged"
                )
            for s, sid in enumerate(group):
                if sid not in iters:
                    iters[sid] = int(result.iterations_per_lane[s])
                    qois[sid] = qoi(result.solution[s])
        return iters, qois, notes


# ---------------------------------------------------------------------------
# report containers


@dataclass(frozen=True)
class SampleRecord:
    sample_id: int
    coords: tuple[float, ...]
    iterations: float
    predicted_iterations: float | None
    indicator: float | None

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "coords": list(self.coords),
            "iterations": self.iterations,
            "predicted_iterations": self.predicted_iterations,
            "indicator": self.indicator,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SampleRecord":
        return cls(
            sample_id=int(d["sample_id"]),
            coords=tuple(float(x) for x in d["coords"]),
            iterations=d["iterations"],
            predicted_iterations=d["predicted_iterations"],
            indicator=d["indicator"],
        )


@dataclass(frozen=True)
class PlanRecord:
    strategy: str
    ensembles: tuple[tuple[int, ...], ...]
    padding: tuple[int, ...]
    work_ratio: float

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "ensembles": [list(g) for g in self.ensembles],
            "padding": list(self.padding),
            "R_l": self.work_ratio,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PlanRecord":
        return cls(
            strategy=d["strategy"],
            ensembles=tuple(tuple(int(i) for i in g) for g in d["ensembles"]),
            padding=tuple(int(p) for p in d["padding"]),
            work_ratio=float(d["R_l"]),
        )


@dataclass(frozen=True)
class LevelRecord:
    level: int
    samples: tuple[SampleRecord, ...]
    plans: tuple[PlanRecord, ...]
    error_indicator: float
    mean_abs_prediction_error: float | None
    max_abs_prediction_error: float | None
    budget_truncated: bool

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "samples": [s.to_dict() for s in self.samples],
            "plans": [p.to_dict() for p in self.plans],
            "error_indicator": self.error_indicator,
            "mean_abs_prediction_error": self.mean_abs_prediction_error,
            "max_abs_prediction_error": self.max_abs_prediction_error,
            "budget_truncated": self.budget_truncated,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "LevelRecord":
        return cls(
            level=int(d["level"]),
            samples=tuple(SampleRecord.from_dict(s) for s in d["samples"]),
            plans=tuple(PlanRecord.from_dict(p) for p in d["plans"]),
            error_indicator=float(d["error_indicator"]),
            mean_abs_prediction_error=d["mean_abs_prediction_error"],
            max_abs_prediction_error=d["max_abs_prediction_error"],
            budget_truncated=bool(d["budget_truncated"]),
        )


@dataclass(frozen=True)
class RunReport:
    config: dict
    levels: tuple[LevelRecord, ...]
    work_ratios: dict
    predicted_speedups: dict | None
    stop_reason: str
    notes: tuple[str, ...]
    grid: dict

    @property
    def n_samples_total(self) -> int:
        return sum(len(lv.samples) for lv in self.levels)

    def level_ratios(self, strategy: str) -> list[float]:
        out = []
        for lv in self.levels:
            for p in lv.plans:
                if p.strategy == strategy:
                    out.append(p.work_ratio)
        return out

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "levels": [lv.to_dict() for lv in self.levels],
            "work_ratios": self.work_ratios,
            "predicted_speedups": self.predicted_speedups,
            "stop_reason": self.stop_reason,
            "notes": list(self.notes),
            "grid": self.grid,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RunReport":
        return cls(
            config=dict(d["config"]),
            levels=tuple(LevelRecord.from_dict(lv) for lv in d["levels"]),
            work_ratios=dict(d["work_ratios"]),
            predicted_speedups=None if d["predicted_speedups"] is None else dict(d["predicted_speedups"]),
            stop_reason=d["stop_reason"],
            notes=tuple(d["notes"]),
            grid=d["grid"],
        )


# ---------------------------------------------------------------------------
# the adaptive loop


def adaptive_run(
    config: RunConfig,
    residual_sink: Callable[[int, int, list[np.ndarray]], None] | None = None,
) -> RunReport:
    """Run the grouped adaptive-refinement loop to completion.

    residual_sink, if given together with config.dump_residuals, receives
    (level, ensemble_index, residual_history) for every executed ensemble.
    """
    problem = _PdeProblem(config) if config.is_pde else _AnalyticProblem(config)
    sink = residual_sink if (config.dump_residuals and config.is_pde) else None
    grid = HierGrid(config.n_dims, domain=problem.box)
    batch = grid.add_initial_levels(config.initial_level)
    if len(batch) > config.n_max:
        raise ConfigurationError(
            f"n_max={config.n_max} is smaller than the {len(batch)}-point initial grid"
        )

    S = config.ensemble_size
    policy = RefinementPolicy(tau=config.tau, channel=QOI_CHANNEL, max_points=config.n_max)
    notes: list[str] = []
    levels: list[LevelRecord] = []
    accounting: dict[str, list[tuple[GroupingPlan, list[list[float]]]]] = {
        s: [] for s in config.strategies
    }
    truncated_pending = False
    stop_reason = None
    level = 0

    while True:
        level += 1
        start = len(grid) - len(batch)
        ids = list(range(start, len(grid)))
        coords = grid.node_coords()[start:]
        coords_by_id = {sid: coords[i] for i, sid in enumerate(ids)}

        # Predictions and indicators available before this level's solves:
        # the expansion is cut at the nodes fitted through the previous level.
        predicted = None
        if level > 1:
            predicted = grid.eval_many(ITER_CHANNEL, coords, n_nodes=start)
        indicator = problem.indicator_values(coords) if config.is_pde else None

        plans: dict[str, GroupingPlan] = {}
        for strat in config.strategies:
            if strat == "its":
                continue  # needs measured counts; built after the solves
            if level == 1 or strat == "nat":
                plans[strat] = group_natural(ids, S, level, strat)
            elif strat == "sur":
                keys = {sid: float(predicted[i]) for i, sid in enumerate(ids)}
                plans[strat] = group_by_key(ids, keys, S, level, strat)
            elif strat == "par":
                keys = {sid: float(indicator[i]) for i, sid in enumerate(ids)}
                plans[strat] = group_by_key(ids, keys, S, level, strat)

        # Solve each sample once.  The executed ensembles follow the predicted
        # ordering when available; per-lane arithmetic is lane-local, so every
        # other strategy's accounting reuses the same measured counts.
        exec_plan = plans.get("sur") or plans.get("par") or plans.get("nat") or group_natural(
            ids, S, level, "nat"
        )
        if config.is_pde:
            iters, qois, solve_notes = problem.solve_plan(exec_plan, coords_by_id, sink)
            notes.extend(solve_notes)
        else:
            iters = {sid: float(v) for sid, v in zip(ids, problem.iter_values(coords))}
            qois = {sid: float(v) for sid, v in zip(ids, problem.qoi_values(coords))}

        if "its" in config.strategies:
            plans["its"] = group_oracle(ids, iters, S, level)

        plan_records = []
        for strat in config.strategies:
            plan = plans[strat]
            slot_iters = [[float(iters[sid]) for sid in group] for group in plan.ensembles]
            accounting[strat].append((plan, slot_iters))
            r_l = compute_R([(plan, slot_iters)])[1]
            plan_records.append(
                PlanRecord(strat, plan.ensembles, plan.padding, float(r_l))
            )

        # Update the surrogates with this level's data.
        node_ids = grid.nodes[start:]
        grid.compute_surpluses(QOI_CHANNEL, {n: qois[sid] for n, sid in zip(node_ids, ids)})
        grid.compute_surpluses(ITER_CHANNEL, {n: iters[sid] for n, sid in zip(node_ids, ids)})

        pred_err_mean = pred_err_max = None
        if predicted is not None:
            err = np.abs(predicted - np.array([iters[sid] for sid in ids]))
            pred_err_mean = float(err.mean())
            pred_err_max = float(err.max())

        samples = tuple(
            SampleRecord(
                sample_id=sid,
                coords=tuple(float(x) for x in coords_by_id[sid]),
                iterations=iters[sid],
                predicted_iterations=None if predicted is None else float(predicted[i]),
                indicator=None if indicator is None else float(indicator[i]),
            )
            for i, sid in enumerate(ids)
        )
        levels.append(
            LevelRecord(
                level=level,
                samples=samples,
                plans=tuple(plan_records),
                error_indicator=grid.error_indicator(QOI_CHANNEL),
                mean_abs_prediction_error=pred_err_mean,
                max_abs_prediction_error=pred_err_max,
                budget_truncated=truncated_pending,
            )
        )

        outcome = grid.refine(policy)
        if not outcome.new_nodes:
            stop_reason = "budget_exhausted" if outcome.budget_exhausted else "tolerance_met"
            break
        truncated_pending = outcome.budget_exhausted
        if truncated_pending:
            notes.append(
                f"level {level + 1} truncated to the n_max={config.n_max} sample budget"
            )
        batch = outcome.new_nodes
        if level > 10_000:  # pragma: no cover - defensive
            raise RuntimeError("refinement failed to terminate")

    work_ratios = {}
    for strat in config.strategies:
        work_ratios[strat] = float(compute_R(accounting[strat])[1])

    speedups = None
    if config.base_curve is not None:
        if config.is_pde:
            curve = dict(config.base_curve)
            speedups = {
                strat: float(predicted_speedup(r, S, curve)) for strat, r in work_ratios.items()
            }
        else:
            notes.append("base curve ignored: analytic runs have no linear solver")

    return RunReport(
        config=config.to_dict(),
        levels=tuple(levels),
        work_ratios=work_ratios,
        predicted_speedups=speedups,
        stop_reason=stop_reason,
        notes=tuple(notes),
        grid=grid.to_json_dict(),
    )


# ---------------------------------------------------------------------------
# emission


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def emit_reports(
    reports: RunReport | Sequence[RunReport], out_dir: str | Path
) -> dict[str, Path]:
    """Write the run table CSV, the JSON manifest and the per-level iteration CSV.

    Several reports may share one table (e.g. a strategy-by-size study); rows
    carry per-level ratios first, then one summary row per strategy.  Files
    contain no timestamps, so identical runs emit identical bytes.
    """
    if isinstance(reports, RunReport):
        reports = [reports]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    table = out_dir / "r_table.csv"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["strategy", "S", "level", "n_samples", "n_ensembles", "R_l", "R", "pred_speedup"])
    for report in reports:
        size = report.config["S"]
        for strat in report.config["strategies"]:
            for lv in report.levels:
                for plan in lv.plans:
                    if plan.strategy != strat:
                        continue
                    n_real = sum(len(g) for g in plan.ensembles) - sum(plan.padding)
                    writer.writerow(
                        [strat, size, lv.level, n_real, len(plan.ensembles),
                         _fmt(plan.work_ratio), "", ""]
                    )
        for strat in report.config["strategies"]:
            speedup = None
            if report.predicted_speedups is not None:
                speedup = report.predicted_speedups.get(strat)
            writer.writerow(
                [strat, size, "", "", "", "", _fmt(report.work_ratios[strat]), _fmt(speedup)]
            )
    table.write_text(buf.getvalue())

    manifest = out_dir / "manifest.json"
    doc = {"reports": [r.to_dict() for r in reports]}
    manifest.write_text(json.dumps(doc, indent=1) + "\n")

    iter_csv = out_dir / "iterations_by_level.csv"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["run", "level", "sample_id", "iterations", "predicted_iterations"])
    for run_idx, report in enumerate(reports):
        for lv in report.levels:
            for s in lv.samples:
                writer.writerow(
                    [run_idx, lv.level, s.sample_id, _fmt(s.iterations),
                     _fmt(s.predicted_iterations)]
                )
    iter_csv.write_text(buf.getvalue())
    return {"table": table, "manifest": manifest, "iterations": iter_csv}


def parse_manifest(path: str | Path) -> list[RunReport]:
    doc = json.loads(Path(path).read_text())
    return [RunReport.from_dict(d) for d in doc["reports"]]

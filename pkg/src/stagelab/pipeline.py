"""Three-stage training pipeline: pretrain, posttrain, finetune.

Stage 1 trains on the pretraining distribution, optionally mixed with a
fraction of posttraining data (mix_fraction).  Stage 2 trains on the
posttraining distribution, optionally replaying a fraction of pretraining data
(replay_fraction) and optionally ridge-anchored to the stage-1 checkpoint.
Stage 3 finetunes on the finetuning distribution and is always unregularized.

The metrics recorded per run:

* L_im:  posttrain loss at the stage-2 checkpoint (immediately after stage 2),
* L_ret: posttrain loss at the stage-3 checkpoint (what survived finetuning),
* L_ft:  finetune loss at the stage-3 checkpoint,
* L_pre: pretrain loss at the stage-3 checkpoint (what mixing/replay preserved),
* delta: L_ret - L_im, the forgetting induced by stage 3.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .errors import ConfigError, TrainingDiverged
from .network import NetworkState, TrainConfig, Trajectory, population_loss, train
from .records import format_float
from .tasks import StageDistribution, TaskFamily, mix_distributions

STAGE_ORDER = ("pretrain", "posttrain", "finetune")

CSV_COLUMNS = (
    "run_id",
    "mix_fraction",
    "replay_fraction",
    "eta2",
    "lambda_ridge",
    "eta3",
    "steps3",
    "L_im",
    "L_ret",
    "L_ft",
    "L_pre",
    "delta",
)


@dataclass(frozen=True)
class StagePlan:
    """Scalar hyperparameters for one stage.

    Plans deliberately carry no ridge anchor: the anchor is the stage-1
    checkpoint, which only exists once the pipeline runs, so run_pipeline
    injects it when it builds the effective TrainConfig.
    """

    stage: str
    steps: int
    eta: float
    mix_fraction: float = 0.0
    replay_fraction: float = 0.0
    ridge_lambda: float = 0.0
    stop_rule: str = "fixed_steps"
    plateau_threshold: float = 1e-9
    plateau_patience: int = 10
    gamma_bound: float = 2.0
    probe_every: int = 50

    def __post_init__(self) -> None:
        if self.stage not in STAGE_ORDER:
            raise ConfigError(f"unknown stage {self.stage!r}, expected one of {STAGE_ORDER}")
        if self.steps < 0:
            raise ConfigError(f"steps must be nonnegative, got {self.steps}")
        for name in ("mix_fraction", "replay_fraction"):
            frac = getattr(self, name)
            if not 0.0 <= frac <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {frac}")
        if self.mix_fraction != 0.0 and self.stage != "pretrain":
            raise ConfigError(f"mix_fraction applies to the pretrain stage, not {self.stage!r}")
        if self.replay_fraction != 0.0 and self.stage != "posttrain":
            raise ConfigError(f"replay_fraction applies to the posttrain stage, not {self.stage!r}")
        if self.ridge_lambda != 0.0 and self.stage != "posttrain":
            raise ConfigError(
                f"ridge_lambda applies to the posttrain stage, not {self.stage!r}; "
                "finetuning is always unregularized"
            )
        # Delegate the remaining numeric checks to TrainConfig (eta positivity,
        # stop rule names, cadence), then apply the stability budget with the
        # plan's actual ridge strength.
        TrainConfig(
            eta=self.eta,
            max_steps=self.steps,
            stop_rule=self.stop_rule,
            plateau_threshold=self.plateau_threshold,
            plateau_patience=self.plateau_patience,
            gamma_bound=self.gamma_bound,
            probe_every=self.probe_every,
        )
        budget = 4.0 * self.eta * (self.ridge_lambda + 2.0) * self.gamma_bound
        if not budget < 1.0:
            raise ConfigError(
                "step-size budget violated: 4 * eta * (ridge_lambda + 2) * gamma_bound = "
                f"{budget:.6g} >= 1"
            )

    @classmethod
    def pretrain(cls, steps: int, eta: float, mix_fraction: float = 0.0, **kw) -> "StagePlan":
        return cls(stage="pretrain", steps=steps, eta=eta, mix_fraction=mix_fraction, **kw)

    @classmethod
    def posttrain(
        cls,
        steps: int,
        eta: float,
        ridge_lambda: float = 0.1,
        replay_fraction: float = 0.01,
        **kw,
    ) -> "StagePlan":
        return cls(
            stage="posttrain",
            steps=steps,
            eta=eta,
            ridge_lambda=ridge_lambda,
            replay_fraction=replay_fraction,
            **kw,
        )

    @classmethod
    def finetune(cls, steps: int, eta: float, **kw) -> "StagePlan":
        return cls(stage="finetune", steps=steps, eta=eta, **kw)

    def train_config(self, ridge_anchor=None) -> TrainConfig:
        """Effective TrainConfig; the anchor is supplied by the pipeline at run time."""
        anchor = ridge_anchor if self.ridge_lambda > 0 else None
        if self.ridge_lambda > 0 and anchor is None:
            raise ConfigError(
                f"{self.stage} plan has ridge_lambda={self.ridge_lambda:g} but no anchor "
                "checkpoint was supplied"
            )
        return TrainConfig(
            eta=self.eta,
            max_steps=self.steps,
            ridge_lambda=self.ridge_lambda,
            ridge_anchor=anchor,
            stop_rule=self.stop_rule,
            plateau_threshold=self.plateau_threshold,
            plateau_patience=self.plateau_patience,
            gamma_bound=self.gamma_bound,
            probe_every=self.probe_every,
        )


def stage_training_distribution(family: TaskFamily, plan: StagePlan) -> StageDistribution:
    """The distribution a plan actually trains on, after mixing or replay."""
    if plan.stage == "pretrain":
        return mix_distributions(
            family.distribution("pretrain"), family.distribution("posttrain"), plan.mix_fraction
        )
    if plan.stage == "posttrain":
        return mix_distributions(
            family.distribution("posttrain"), family.distribution("pretrain"), plan.replay_fraction
        )
    return family.distribution("finetune")


@dataclass(frozen=True)
class CheckpointMetrics:
    loss_post_immediate: float
    loss_post_retained: float
    loss_finetune: float
    loss_pretrain_retained: float

    @property
    def forgetting(self) -> float:
        return self.loss_post_retained - self.loss_post_immediate

    def as_record(self) -> dict[str, float]:
        return {
            "L_im": self.loss_post_immediate,
            "L_ret": self.loss_post_retained,
            "L_ft": self.loss_finetune,
            "L_pre": self.loss_pretrain_retained,
            "delta": self.forgetting,
        }


@dataclass(frozen=True)
class PipelineRun:
    """Checkpoints, metrics and provenance for one pretrain/posttrain/finetune run."""

    run_id: str
    plans: tuple[StagePlan, StagePlan, StagePlan]
    pretrained: NetworkState | None
    posttrained: NetworkState | None
    finetuned: NetworkState | None
    metrics: CheckpointMetrics | None
    failed_stage: str | None = None
    failure: str | None = None
    trajectories: dict[str, Trajectory] | None = None

    @property
    def succeeded(self) -> bool:
        return self.failed_stage is None

    def params(self) -> dict[str, float | int | str]:
        """Flat hyperparameter view matching the sweep CSV columns."""
        p1, p2, p3 = self.plans
        return {
            "run_id": self.run_id,
            "mix_fraction": p1.mix_fraction,
            "replay_fraction": p2.replay_fraction,
            "eta2": p2.eta,
            "lambda_ridge": p2.ridge_lambda,
            "eta3": p3.eta,
            "steps3": p3.steps,
        }


def _check_plans(plans: Sequence[StagePlan]) -> tuple[StagePlan, StagePlan, StagePlan]:
    if len(plans) != 3 or tuple(p.stage for p in plans) != STAGE_ORDER:
        raise ConfigError(
            f"expected plans for stages {STAGE_ORDER} in order, got {[p.stage for p in plans]}"
        )
    return plans[0], plans[1], plans[2]


def run_pipeline(
    family: TaskFamily,
    plans: Sequence[StagePlan],
    init_state: NetworkState,
    run_id: str = "run",
    keep_trajectories: bool = False,
) -> PipelineRun:
    """Execute the three stages in order.

    A divergence in any stage stops the run there; checkpoints from completed
    stages are preserved and the failed stage is named on the result.
    """
    plan1, plan2, plan3 = _check_plans(plans)
    probes = {name: family.distribution(name) for name in STAGE_ORDER} if keep_trajectories else None
    trajectories: dict[str, Trajectory] = {}

    states: dict[str, NetworkState] = {}
    state = init_state
    anchor = None
    for plan in (plan1, plan2, plan3):
        dist = stage_training_distribution(family, plan)
        config = plan.train_config(ridge_anchor=anchor)
        try:
            state, traj = train(
                state,
                dist,
                family.basis,
                config,
                probes=probes,
                record_spectrum=keep_trajectories,
            )
        except TrainingDiverged as exc:
            return PipelineRun(
                run_id=run_id,
                plans=(plan1, plan2, plan3),
                pretrained=states.get("pretrain"),
                posttrained=states.get("posttrain"),
                finetuned=None,
                metrics=None,
                failed_stage=plan.stage,
                failure=str(exc),
                trajectories=trajectories if keep_trajectories else None,
            )
        states[plan.stage] = state
        if keep_trajectories:
            trajectories[plan.stage] = traj
        if plan.stage == "pretrain":
            anchor = state.theta

    basis = family.basis
    metrics = CheckpointMetrics(
        loss_post_immediate=population_loss(states["posttrain"], family.distribution("posttrain"), basis),
        loss_post_retained=population_loss(states["finetune"], family.distribution("posttrain"), basis),
        loss_finetune=population_loss(states["finetune"], family.distribution("finetune"), basis),
        loss_pretrain_retained=population_loss(states["finetune"], family.distribution("pretrain"), basis),
    )
    return PipelineRun(
        run_id=run_id,
        plans=(plan1, plan2, plan3),
        pretrained=states["pretrain"],
        posttrained=states["posttrain"],
        finetuned=states["finetune"],
        metrics=metrics,
        trajectories=trajectories if keep_trajectories else None,
    )


def compute_forgetting(run: PipelineRun) -> float:
    """delta = L_ret - L_im for a completed run."""
    if run.metrics is None:
        raise ConfigError(f"run {run.run_id} has no metrics (failed at stage {run.failed_stage})")
    return run.metrics.forgetting


def compute_matched_plans(
    total_budget: int,
    alloc_fraction: float,
    stage1_template: StagePlan,
    stage2_template: StagePlan,
) -> tuple[StagePlan, StagePlan]:
    """Split one step budget between stages 1 and 2.

    Stage 1 receives round(alloc_fraction * total_budget) steps, stage 2 the
    remainder, so the two always sum to total_budget exactly.  Other
    hyperparameters are taken from the templates unchanged.
    """
    if total_budget < 0:
        raise ConfigError(f"total_budget must be nonnegative, got {total_budget}")
    if not 0.0 <= alloc_fraction <= 1.0:
        raise ConfigError(f"alloc_fraction must lie in [0, 1], got {alloc_fraction}")
    steps1 = round(alloc_fraction * total_budget)
    steps2 = total_budget - steps1
    return replace(stage1_template, steps=steps1), replace(stage2_template, steps=steps2)


def plan_key(plan: StagePlan) -> tuple:
    return (
        plan.steps,
        plan.eta,
        plan.mix_fraction,
        plan.replay_fraction,
        plan.ridge_lambda,
        plan.stop_rule,
        plan.plateau_threshold,
        plan.plateau_patience,
        plan.probe_every,
    )


def make_run_id(plan1: StagePlan, plan2: StagePlan, plan3: StagePlan) -> str:
    """Deterministic identifier encoding the swept hyperparameters."""
    return (
        f"m{plan1.mix_fraction:g}-s1_{plan1.steps}"
        f"-r{plan2.replay_fraction:g}-l{plan2.ridge_lambda:g}-e2_{plan2.eta:g}-s2_{plan2.steps}"
        f"-e3_{plan3.eta:g}-s3_{plan3.steps}"
    )


def run_sweep(
    family: TaskFamily,
    init_state: NetworkState,
    stage1_plans: Sequence[StagePlan],
    stage2_plans: Sequence[StagePlan],
    stage3_plans: Sequence[StagePlan],
    reuse_stage1: bool = True,
) -> list[PipelineRun]:
    """Cartesian sweep over per-stage plans.

    Stage-1 training depends only on the stage-1 plan, so its checkpoint is
    computed once per distinct plan and reused (bitwise identical to rerunning
    it).  Diverged runs are kept in the result list with their failure marked;
    the sweep itself never aborts.
    """
    runs: list[PipelineRun] = []
    stage1_cache: dict[tuple, NetworkState | TrainingDiverged] = {}
    for plan1 in stage1_plans:
        key = plan_key(plan1)
        if not reuse_stage1 or key not in stage1_cache:
            dist1 = stage_training_distribution(family, plan1)
            try:
                state1, _ = train(
                    init_state, dist1, family.basis, plan1.train_config(), record_spectrum=False
                )
                stage1_cache[key] = state1
            except TrainingDiverged as exc:
                stage1_cache[key] = exc
        cached = stage1_cache[key]
        for plan2 in stage2_plans:
            for plan3 in stage3_plans:
                run_id = make_run_id(plan1, plan2, plan3)
                if isinstance(cached, TrainingDiverged):
                    runs.append(
                        PipelineRun(
                            run_id=run_id,
                            plans=(plan1, plan2, plan3),
                            pretrained=None,
                            posttrained=None,
                            finetuned=None,
                            metrics=None,
                            failed_stage="pretrain",
                            failure=str(cached),
                        )
                    )
                    continue
                runs.append(
                    continue_from_pretrained(family, cached, (plan1, plan2, plan3), run_id)
                )
    return runs


def continue_from_pretrained(
    family: TaskFamily,
    pretrained: NetworkState,
    plans: tuple[StagePlan, StagePlan, StagePlan],
    run_id: str,
) -> PipelineRun:
    plan1, plan2, plan3 = plans
    anchor = pretrained.theta
    basis = family.basis
    state = pretrained
    states: dict[str, NetworkState] = {"pretrain": pretrained}
    for plan in (plan2, plan3):
        dist = stage_training_distribution(family, plan)
        config = plan.train_config(ridge_anchor=anchor)
        try:
            state, _ = train(state, dist, basis, config, record_spectrum=False)
        except TrainingDiverged as exc:
            return PipelineRun(
                run_id=run_id,
                plans=plans,
                pretrained=pretrained,
                posttrained=states.get("posttrain"),
                finetuned=None,
                metrics=None,
                failed_stage=plan.stage,
                failure=str(exc),
            )
        states[plan.stage] = state
    metrics = CheckpointMetrics(
        loss_post_immediate=population_loss(states["posttrain"], family.distribution("posttrain"), basis),
        loss_post_retained=population_loss(states["finetune"], family.distribution("posttrain"), basis),
        loss_finetune=population_loss(states["finetune"], family.distribution("finetune"), basis),
        loss_pretrain_retained=population_loss(states["finetune"], family.distribution("pretrain"), basis),
    )
    return PipelineRun(
        run_id=run_id,
        plans=plans,
        pretrained=pretrained,
        posttrained=states["posttrain"],
        finetuned=states["finetune"],
        metrics=metrics,
    )


def sweep_to_csv(runs: Iterable[PipelineRun], path: str) -> None:
    """Write completed runs as CSV with a fixed column order.

    Failed runs carry no metrics and are omitted; they live in the JSONL
    records with their failure status instead.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for run in runs:
            if run.metrics is None:
                continue
            row = dict(run.params())
            row.update(run.metrics.as_record())
            writer.writerow(
                [
                    row["run_id"],
                    *(format_float(float(row[c])) for c in CSV_COLUMNS[1:6]),
                    str(int(row["steps3"])),
                    *(format_float(float(row[c])) for c in CSV_COLUMNS[7:]),
                ]
            )

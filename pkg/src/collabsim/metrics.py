"""Per-episode collaboration metrics and benchmark aggregation.

Sub-tasks are operationalized as counted propositions.  The "agent actions"
counted toward extraneous effort are successful skills that manipulate the
world: navigation (Navigate, Explore), Wait, and Done are excluded from both
numerator and denominator.  Exploration efficiency is the completion step of
the first skill that picks an object up (Pick or Rearrange).
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Optional

from .errors import EmptyInputError
from .evaluation import EvaluationReport
from .skills import ROBOT, SkillResult, Trace

ACTION_SKILLS = (
    "Pick",
    "Place",
    "Rearrange",
    "Open",
    "Close",
    "Clean",
    "Fill",
    "Pour",
    "PowerOn",
    "PowerOff",
)
PICKUP_SKILLS = ("Pick", "Rearrange")


@dataclass
class EpisodeMetrics:
    sim_steps: int
    success: bool
    percent_complete: float
    planning_cycles: int
    task_offloading: Optional[float]  # None when undefined (single agent / failed)
    extraneous_effort: float
    exploration_efficiency: Optional[int]  # None when nothing was ever picked
    task_type: str = ""
    episode: str = ""

    def as_dict(self) -> dict:
        return {
            "episode": self.episode,
            "task_type": self.task_type,
            "sim_steps": self.sim_steps,
            "success": self.success,
            "percent_complete": self.percent_complete,
            "planning_cycles": self.planning_cycles,
            "task_offloading": self.task_offloading,
            "extraneous_effort": self.extraneous_effort,
            "exploration_efficiency": self.exploration_efficiency,
        }


def _witness_result(
    report: EvaluationReport, prop_index: int, results: list[SkillResult]
) -> Optional[SkillResult]:
    """The action whose completion first satisfied the proposition."""
    record = report.records[prop_index]
    step = record.first_satisfied_step
    if step is None:
        return None
    at_step = [r for r in results if r.completed_at_step == step and r.ok]
    if not at_step:
        return None
    subjects = {
        entity
        for assignment in record.assignment_sets.get(step, ())
        for entity, _ in assignment
    }
    for result in at_step:
        if any(arg in subjects for arg in result.call.args):
            return result
    return at_step[0]


def compute_metrics(
    trace: Trace,
    report: EvaluationReport,
    roles: dict[str, str],
    planning_cycles: int,
    task_type: str = "",
    episode: str = "",
) -> EpisodeMetrics:
    results = trace.results
    sim_steps = trace.states[-1].step if trace.states else 0

    witnesses = {
        i: _witness_result(report, i, results) for i in sorted(report.counted)
    }

    offloading: Optional[float] = None
    if len(roles) > 1 and report.success and report.counted:
        robot_count = sum(
            1
            for result in witnesses.values()
            if result is not None and roles.get(result.agent) == ROBOT
        )
        offloading = robot_count / len(report.counted)

    counted_actions = [
        r for r in results if r.ok and r.call.skill in ACTION_SKILLS
    ]
    progressing = {
        id(result) for result in witnesses.values() if result is not None
    }
    if counted_actions:
        extraneous = sum(
            1 for r in counted_actions if id(r) not in progressing
        ) / len(counted_actions)
    else:
        extraneous = 0.0

    first_pick = next(
        (
            r.completed_at_step
            for r in results
            if r.ok and r.call.skill in PICKUP_SKILLS
        ),
        None,
    )

    return EpisodeMetrics(
        sim_steps=sim_steps,
        success=report.success,
        percent_complete=report.pc,
        planning_cycles=planning_cycles,
        task_offloading=offloading,
        extraneous_effort=extraneous,
        exploration_efficiency=first_pick,
        task_type=task_type,
        episode=episode,
    )


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    se: float
    n: int

    def format(self) -> str:
        return f"{self.mean:.2f} ± {self.se:.2f} (n={self.n})"


def summarize_values(values: list[float]) -> MetricSummary:
    n = len(values)
    if n == 0:
        return MetricSummary(float("nan"), float("nan"), 0)
    mean = sum(values) / n
    se = statistics.stdev(values) / (n**0.5) if n > 1 else 0.0
    return MetricSummary(mean, se, n)


@dataclass
class AggregateReport:
    episode_count: int
    metrics: dict = field(default_factory=dict)  # name -> MetricSummary
    success_by_task_type: dict = field(default_factory=dict)  # type -> MetricSummary

    def as_dict(self) -> dict:
        return {
            "episode_count": self.episode_count,
            "metrics": {
                name: {"mean": s.mean, "se": s.se, "n": s.n}
                for name, s in self.metrics.items()
            },
            "success_by_task_type": {
                name: {"mean": s.mean, "se": s.se, "n": s.n}
                for name, s in self.success_by_task_type.items()
            },
        }


_NUMERIC_FIELDS = (
    "sim_steps",
    "percent_complete",
    "planning_cycles",
    "task_offloading",
    "extraneous_effort",
    "exploration_efficiency",
)


def aggregate(episodes: list[EpisodeMetrics]) -> AggregateReport:
    """Mean and standard error per metric; N/A values excluded from that
    metric's sample."""
    if not episodes:
        raise EmptyInputError("no episode metrics to aggregate")
    report = AggregateReport(episode_count=len(episodes))
    report.metrics["success_rate"] = summarize_values(
        [1.0 if m.success else 0.0 for m in episodes]
    )
    for name in _NUMERIC_FIELDS:
        values = [
            float(getattr(m, name))
            for m in episodes
            if getattr(m, name) is not None
        ]
        report.metrics[name] = summarize_values(values)
    by_type: dict[str, list[float]] = {}
    for m in episodes:
        by_type.setdefault(m.task_type or "untyped", []).append(
            1.0 if m.success else 0.0
        )
    for task_type in sorted(by_type):
        report.success_by_task_type[task_type] = summarize_values(by_type[task_type])
    return report

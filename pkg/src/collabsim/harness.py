"""Episode runner, trace files, and benchmark reports.

``run_episode`` wires the world, simulator, controller, and evaluator
together and is fully deterministic given (episode, policies, seed).  Traces
are serialized as a versioned, append-only JSON-lines record stream
(docs/trace.md) replayable by the evaluator and the session viewer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from .agents import (
    Controller,
    ControllerConfig,
    ExpertCentralPolicy,
    Policy,
    CentralizedPolicy,
    heuristic_expert_plan,
)
from .errors import CollabSimError
from .evaluation import EvaluationReport, Evaluator
from .predicates import DEFAULT_CONFIG, PredicateConfig
from .geometry import BoundingBox, Vec3
from .metrics import EpisodeMetrics, compute_metrics
from .sceneio import EpisodeSpec, SceneSpec, build_catalog, build_world
from .skills import HUMAN, ROBOT, SimConfig, Simulator, Trace
from .world import (
    AffordanceSet,
    Placement,
    Relation,
    StateSet,
    WorldGraph,
    WorldState,
)

TRACE_VERSION = 1
REPORT_VERSION = 1

ROBOT_AGENT = "agent_0"
HUMAN_AGENT = "agent_1"


def roles_for_mode(mode: str) -> dict[str, str]:
    if mode == "single":
        return {HUMAN_AGENT: HUMAN}
    return {ROBOT_AGENT: ROBOT, HUMAN_AGENT: HUMAN}


def make_simulator(
    scene: SceneSpec,
    episode: EpisodeSpec,
    sim_config: SimConfig,
    mode: str = "decentralized",
) -> Simulator:
    world = build_world(scene, episode, seed=sim_config.seed or episode.seed)
    roles = roles_for_mode(mode)
    first_room = scene.rooms[0].name
    agent_rooms = episode.agent_rooms or (first_room, first_room)
    for agent in roles:
        room = agent_rooms[0] if agent == ROBOT_AGENT else agent_rooms[1]
        world.add_agent(agent, room)
    return Simulator(world, build_catalog(episode), sim_config, roles)


@dataclass
class EpisodeRun:
    episode: EpisodeSpec
    trace: Trace
    report: EvaluationReport
    metrics: EpisodeMetrics
    decides_per_agent: dict


def run_episode(
    scene: SceneSpec,
    episode: EpisodeSpec,
    controller_config: ControllerConfig,
    sim_config: SimConfig,
    policies: Optional[dict[str, Policy]] = None,
    central: Optional[CentralizedPolicy] = None,
    expert: bool = False,
    predicate_config: PredicateConfig = DEFAULT_CONFIG,
) -> EpisodeRun:
    """Run one episode to termination and evaluate its trace."""
    sim = make_simulator(scene, episode, sim_config, controller_config.mode)
    if expert:
        plan = heuristic_expert_plan(episode.evaluation, sim.world, sim.roles)
        central = ExpertCentralPolicy(plan, sim)
        controller_config.mode = "centralized"
    controller = Controller(
        sim,
        controller_config,
        policies=policies,
        central=central,
        instruction=episode.instruction,
    )
    trace = controller.run()
    evaluator = Evaluator(episode.evaluation, predicate_config)
    for state in trace.states:
        evaluator.step(state)
    report = evaluator.finalize()
    metrics = compute_metrics(
        trace,
        report,
        sim.roles,
        controller.stats.total_decides,
        task_type=episode.task_type,
        episode=episode.name,
    )
    return EpisodeRun(episode, trace, report, metrics, controller.stats.decides_per_agent)


# -- trace serialization -------------------------------------------------------


def _vec(v: Vec3) -> list:
    return [round(v.x, 6), round(v.y, 6), round(v.z, 6)]


def _box(b: BoundingBox) -> dict:
    return {"center": _vec(b.center), "half": _vec(b.half_extents)}


def _affordances(a: AffordanceSet) -> list:
    return [
        name
        for name in (
            "cleanable",
            "fillable",
            "powerable",
            "openable",
            "is_receptacle",
            "has_faucet",
        )
        if getattr(a, name)
    ]


def _states(s: StateSet) -> list:
    return [name for name in ("clean", "filled", "powered", "open") if getattr(s, name)]


def graph_to_json(graph: WorldGraph) -> dict:
    return {
        "seed": graph.seed,
        "rooms": [
            {"name": r.name, "region": _box(r.region)} for r in graph.rooms.values()
        ],
        "furniture": [
            {
                "name": f.name,
                "room": f.room,
                "box": _box(f.box),
                "affordances": _affordances(f.affordances),
                "states": _states(f.states),
                "surface": f.has_surface,
            }
            for f in graph.furniture.values()
            if not f.is_floor
        ],
        "objects": [
            {
                "name": o.name,
                "category": o.category,
                "box": _box(o.box),
                "affordances": _affordances(o.affordances),
                "states": _states(o.states),
                "placement": [o.placement.relation.value, o.placement.parent],
            }
            for o in graph.objects.values()
        ],
        "agents": [
            {
                "name": a.name,
                "position": _vec(a.position),
                "room": a.room,
                "held": a.held,
            }
            for a in graph.agents.values()
        ],
        "adjacency": sorted([a, b] for a in graph.adjacency for b in graph.adjacency[a]),
    }


def graph_from_json(data: dict) -> WorldGraph:
    graph = WorldGraph(seed=data.get("seed", 0))

    def vec(values: list) -> Vec3:
        return Vec3(*values)

    def box(entry: dict) -> BoundingBox:
        return BoundingBox(vec(entry["center"]), vec(entry["half"]))

    def affordances(names: list) -> AffordanceSet:
        return AffordanceSet(**{n: True for n in names})

    def states(names: list) -> StateSet:
        flags = StateSet()
        for n in names:
            setattr(flags, n, True)
        return flags

    for room in data["rooms"]:
        graph.add_room(room["name"], box(room["region"]))
    for furn in data["furniture"]:
        graph.add_furniture(
            furn["name"],
            furn["room"],
            box(furn["box"]),
            affordances(furn["affordances"]),
            states(furn["states"]),
            furn["surface"],
        )
    for pair in data.get("adjacency", ()):
        graph.add_adjacency(pair[0], pair[1])
    for agent in data["agents"]:
        graph.add_agent(agent["name"], agent["room"])
        node = graph.agents[agent["name"]]
        node.position = vec(agent["position"])
        node.held = agent["held"]
    for obj in data["objects"]:
        node = graph.add_object(
            obj["name"],
            obj["category"],
            vec(obj["box"]["half"]),
            affordances(obj["affordances"]),
            states(obj["states"]),
        )
        node.placement = Placement(Relation(obj["placement"][0]), obj["placement"][1])
        node.box = box(obj["box"])
    return graph


def _dump(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def trace_to_lines(trace: Trace, episode_name: str = "") -> list[str]:
    lines = [
        _dump(
            {
                "kind": "header",
                "version": TRACE_VERSION,
                "episode": episode_name,
                "seed": trace.seed,
                "termination": trace.termination,
            }
        )
    ]
    events: list[tuple] = []
    for state in trace.states:
        events.append((state.step, 0, {"kind": "state", "step": state.step, "graph": graph_to_json(state.graph)}))
    for order, result in enumerate(trace.results):
        events.append(
            (
                result.completed_at_step,
                1 + order,
                {
                    "kind": "result",
                    "step": result.completed_at_step,
                    "agent": result.agent,
                    "skill": result.call.skill,
                    "args": list(result.call.args),
                    "status": result.status,
                    "message": result.message,
                    "steps_consumed": result.steps_consumed,
                },
            )
        )
    events.sort(key=lambda e: (e[0], e[1]))
    lines.extend(_dump(e[2]) for e in events)
    return lines


def write_trace(trace: Trace, path: str | Path, episode_name: str = "") -> None:
    Path(path).write_text("\n".join(trace_to_lines(trace, episode_name)) + "\n")


@dataclass
class LoadedTrace:
    header: dict
    states: list
    results: list


def read_trace(path: str | Path) -> LoadedTrace:
    header: dict = {}
    states: list[WorldState] = []
    results: list[dict] = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        kind = record.get("kind")
        if kind == "header":
            header = record
        elif kind == "state":
            states.append(WorldState(record["step"], graph_from_json(record["graph"])))
        elif kind == "result":
            results.append(record)
    return LoadedTrace(header, states, results)


def evaluate_trace_file(
    trace_path: str | Path, fn, predicate_config: PredicateConfig = DEFAULT_CONFIG
) -> EvaluationReport:
    loaded = read_trace(trace_path)
    evaluator = Evaluator(fn, predicate_config)
    for state in loaded.states:
        evaluator.step(state)
    return evaluator.finalize()


# -- batch running -------------------------------------------------------------


@dataclass
class BatchResult:
    runs: list
    infrastructure_failures: list  # (episode name, message)

    @property
    def metrics(self) -> list[EpisodeMetrics]:
        return [r.metrics for r in self.runs]


def run_batch(
    scene: SceneSpec,
    episodes: list[EpisodeSpec],
    controller_factory: Callable[[EpisodeSpec], dict],
    sim_config: SimConfig,
    trace_dir: Optional[str | Path] = None,
    predicate_config: PredicateConfig = DEFAULT_CONFIG,
) -> BatchResult:
    """Run episodes sequentially (one simulator per episode, no shared state).

    ``controller_factory`` returns run_episode keyword arguments per episode
    (mode/policies/central/expert).  Policy and simulator errors inside an
    episode are recorded, never raised.
    """
    runs = []
    failures = []
    for episode in episodes:
        kwargs = controller_factory(episode)
        controller_config = kwargs.pop("controller_config", None) or ControllerConfig(
            mode=kwargs.pop("mode", "decentralized")
        )
        try:
            run = run_episode(
                scene, episode, controller_config, sim_config,
                predicate_config=predicate_config, **kwargs,
            )
        except CollabSimError as exc:
            failures.append((episode.name, str(exc)))
            continue
        runs.append(run)
        if trace_dir is not None:
            Path(trace_dir).mkdir(parents=True, exist_ok=True)
            write_trace(run.trace, Path(trace_dir) / f"{episode.name}.trace", episode.name)
    return BatchResult(runs, failures)


def report_to_json(batch: BatchResult) -> str:
    from .metrics import aggregate

    episodes = []
    for run in batch.runs:
        entry = run.metrics.as_dict()
        if not run.report.success:
            entry["failure_explanation"] = run.report.failure_explanation
        episodes.append(entry)
    payload = {
        "version": REPORT_VERSION,
        "episodes": episodes,
        "aggregate": aggregate(batch.metrics).as_dict() if batch.runs else {},
        "infrastructure_failures": [
            {"episode": name, "error": message}
            for name, message in batch.infrastructure_failures
        ],
    }
    return json.dumps(payload, sort_keys=True, indent=2)

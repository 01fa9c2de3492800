"""Procedural, template-based episode generation (no LLM involved).

Every emitted episode passes feasibility verification and is solvable by
construction: the expert plan over the ground-truth evaluation function is
its witness.  Templates guarantee that no proposition is satisfied at scene
start, so every productive action first-satisfies something.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from importlib import resources
from typing import Optional

from .agents import ExpertPlan, heuristic_expert_plan
from .dsl import EvalDslDocument
from .errors import SceneTooSmallError
from .evaluation import verify_feasibility
from .geometry import Vec3
from .sceneio import (
    EpisodeSpec,
    FurnitureSpec,
    PlacementSpec,
    SceneSpec,
    build_world,
    parse_scene,
)
from .skills import HUMAN, ROBOT, SkillCall
from .world import AffordanceSet

TASK_TYPES = ("constraint-free", "spatial", "temporal", "heterogeneous")


@dataclass
class FixtureRequest:
    scene: SceneSpec
    task_type: str
    count: int = 1
    seed: int = 0
    object_count: int = 2
    temporal_depth: int = 2

    def __post_init__(self) -> None:
        if self.count <= 0:
            raise ValueError("count must be positive")
        if self.task_type not in TASK_TYPES:
            raise ValueError(f"unknown task type {self.task_type}")


# movable object templates: category -> (half extents, affordances)
OBJECT_TYPES: dict[str, tuple[Vec3, AffordanceSet]] = {
    "book": (Vec3(0.11, 0.08, 0.02), AffordanceSet()),
    "vase": (Vec3(0.07, 0.07, 0.12), AffordanceSet()),
    "toy_truck": (Vec3(0.09, 0.05, 0.05), AffordanceSet()),
    "candle": (Vec3(0.03, 0.03, 0.06), AffordanceSet()),
    "cushion": (Vec3(0.15, 0.15, 0.05), AffordanceSet()),
    "stuffed_toy": (Vec3(0.08, 0.06, 0.08), AffordanceSet()),
    "cup": (Vec3(0.05, 0.05, 0.06), AffordanceSet(cleanable=True, fillable=True)),
    "plate": (Vec3(0.1, 0.1, 0.015), AffordanceSet(cleanable=True)),
    "kettle": (Vec3(0.09, 0.07, 0.1), AffordanceSet(cleanable=True, fillable=True)),
    "lamp": (Vec3(0.08, 0.08, 0.2), AffordanceSet(powerable=True)),
}
_PLAIN_CATEGORIES = ("book", "vase", "toy_truck", "candle", "cushion", "stuffed_toy")


def bundled_scene() -> SceneSpec:
    """The demo house shipped with the package."""
    text = resources.files("collabsim").joinpath("data/house.scene").read_text()
    return parse_scene(text)


def _surfaces(scene: SceneSpec) -> list[FurnitureSpec]:
    return [f for f in scene.furniture if f.has_surface]


def _open_receptacles(scene: SceneSpec) -> list[FurnitureSpec]:
    """Receptacles that never need an Open call."""
    return [
        f
        for f in scene.furniture
        if f.affordances.is_receptacle
        and (not f.affordances.openable or "open" in f.initial_states)
    ]


def _faucet_furniture(scene: SceneSpec) -> list[FurnitureSpec]:
    return [f for f in scene.furniture if f.affordances.has_faucet and f.has_surface]


class _Builder:
    def __init__(self, scene: SceneSpec, rng: random.Random):
        self.scene = scene
        self.rng = rng
        self.placements: list[PlacementSpec] = []
        self.clutter: list[PlacementSpec] = []
        self.counter: dict[str, int] = {}
        self.room_of = {f.name: f.room for f in scene.furniture}

    def new_object(
        self,
        category: str,
        parent: FurnitureSpec,
        states: tuple[str, ...] = (),
        clutter: bool = False,
    ) -> str:
        index = self.counter.get(category, 0)
        self.counter[category] = index + 1
        name = f"{category}_{index}"
        half, affordances = OBJECT_TYPES[category]
        spec = PlacementSpec(
            name, category, half, affordances, states, "on", parent.name, clutter
        )
        (self.clutter if clutter else self.placements).append(spec)
        return name

    def pick_surface(self, exclude_rooms: set[str] = frozenset()) -> FurnitureSpec:
        options = [
            f for f in _surfaces(self.scene) if f.room not in exclude_rooms
        ]
        if not options:
            raise SceneTooSmallError("no surface furniture available")
        return self.rng.choice(options)


def _episode(
    scene: SceneSpec,
    builder: _Builder,
    name: str,
    task_type: str,
    seed: int,
    doc: EvalDslDocument,
) -> EpisodeSpec:
    episode = EpisodeSpec(
        name=name,
        scene_ref=scene.name,
        task_type=task_type,
        seed=seed,
        placements=builder.placements,
        clutter=builder.clutter,
        eval_document=doc,
    )
    issues = verify_feasibility(episode.evaluation, scene, episode)
    if issues:
        raise AssertionError(f"generated infeasible episode {name}: {issues}")
    return episode


def _add_clutter(builder: _Builder, count: int = 2) -> None:
    for _ in range(count):
        category = builder.rng.choice(_PLAIN_CATEGORIES)
        builder.new_object(category, builder.pick_surface(), clutter=True)


def _rearrangement(builder: _Builder, rng: random.Random) -> tuple[str, str, str, str]:
    """(object, relation, target furniture, proposition source) pair where the
    target sits in a different room than the object's start."""
    scene = builder.scene
    target_options = _surfaces(scene) + _open_receptacles(scene)
    target = rng.choice(target_options)
    relation = "within" if not target.has_surface else (
        "within" if target in _open_receptacles(scene) and rng.random() < 0.3 else "on"
    )
    start = builder.pick_surface(exclude_rooms={target.room})
    category = rng.choice(_PLAIN_CATEGORIES)
    obj = builder.new_object(category, start)
    predicate = "is_inside" if relation == "within" else "is_on_top"
    return obj, relation, target.name, predicate


def _generate_one(
    scene: SceneSpec, task_type: str, index: int, seed: int, req: FixtureRequest
) -> EpisodeSpec:
    rng = random.Random((seed, task_type, index).__repr__())
    builder = _Builder(scene, rng)
    name = f"{task_type}_{index:03d}"
    doc = EvalDslDocument()

    if task_type == "constraint-free":
        lines = []
        props = []
        for _ in range(max(1, req.object_count)):
            obj, relation, target, predicate = _rearrangement(builder, rng)
            props.append(f"{predicate}(['{obj}'], ['{target}'])")
            verb = "in" if relation == "within" else "on"
            lines.append(f"Move the {obj.rsplit('_', 1)[0]} {verb}to the {target}.")
        doc = _doc(" ".join(lines), props, groups=[list(range(len(props)))])

    elif task_type == "spatial":
        rooms_with_tables: dict[str, list[FurnitureSpec]] = {}
        for f in _surfaces(scene):
            cat = f.name.rsplit("_", 1)[0]
            if cat in ("table", "counter", "shelves", "stand"):
                rooms_with_tables.setdefault((f.room, cat), []).append(f)
        group_options = sorted(
            (k for k, v in rooms_with_tables.items() if len(v) >= 2),
            key=lambda k: (k[0], k[1]),
        )
        if not group_options:
            raise SceneTooSmallError("spatial fixtures need two same-category surfaces in a room")
        room, cat = group_options[rng.randrange(len(group_options))]
        targets = [f.name for f in rooms_with_tables[(room, cat)]]
        start_a = builder.pick_surface(exclude_rooms={room})
        start_b = builder.pick_surface(exclude_rooms={room})
        cat_a, cat_b = rng.sample(_PLAIN_CATEGORIES, 2)
        a = builder.new_object(cat_a, start_a)
        b = builder.new_object(cat_b, start_b)
        target_list = ", ".join(f"'{t}'" for t in targets)
        props = [
            f"is_on_top(['{a}'], [{target_list}])",
            f"is_on_top(['{b}'], [{target_list}])",
            f"is_next_to(['{b}'], ['{a}'])",
        ]
        doc = _doc(
            f"Place the {cat_a} and the {cat_b} on the same {cat} in the {room}, "
            "next to each other.",
            props,
            groups=[[0, 1, 2]],
            ties=["SameArgConstraint([0, 1], [1, 1])"],
        )

    elif task_type == "temporal":
        depth = max(2, req.temporal_depth)
        props = []
        groups = []
        sentences = []
        for g in range(depth):
            obj, relation, target, predicate = _rearrangement(builder, rng)
            props.append(f"{predicate}(['{obj}'], ['{target}'])")
            groups.append([len(props) - 1])
            connective = "First," if g == 0 else "Then,"
            sentences.append(
                f"{connective} move the {obj.rsplit('_', 1)[0]} to the {target}."
            )
        doc = _doc(" ".join(sentences), props, groups=groups)

    else:  # heterogeneous
        props = []
        sentences = []
        for _ in range(max(1, req.object_count - 1)):
            obj, relation, target, predicate = _rearrangement(builder, rng)
            props.append(f"{predicate}(['{obj}'], ['{target}'])")
            sentences.append(
                f"Move the {obj.rsplit('_', 1)[0]} to the {target}."
            )
        flavor = ("clean", "fill", "power_on", "power_off")[index % 4]
        if flavor == "clean":
            target = builder.pick_surface()
            obj = builder.new_object("plate", target)
            props.append(f"is_clean(['{obj}'])")
            sentences.append("Also, clean the plate.")
        elif flavor == "fill":
            faucets = _faucet_furniture(scene)
            if not faucets:
                raise SceneTooSmallError("fill fixtures need faucet-bearing furniture")
            obj = builder.new_object("kettle", rng.choice(faucets))
            props.append(f"is_filled(['{obj}'])")
            sentences.append("Also, fill the kettle with water.")
        elif flavor == "power_on":
            obj = builder.new_object("lamp", builder.pick_surface())
            props.append(f"is_powered_on(['{obj}'])")
            sentences.append("Also, turn on the lamp.")
        else:
            obj = builder.new_object("lamp", builder.pick_surface(), states=("powered",))
            props.append(f"is_powered_off(['{obj}'])")
            sentences.append("Also, turn off the lamp.")
        doc = _doc(" ".join(sentences), props, groups=[list(range(len(props)))])

    _add_clutter(builder)
    return _episode(scene, builder, name, task_type, seed, doc)


def _doc(
    instruction: str,
    props: list[str],
    groups: list[list[int]],
    ties: Optional[list[str]] = None,
) -> EvalDslDocument:
    from .dsl import parse_eval_document

    text_lines = [f'instruction = """\n{instruction}\n"""']
    text_lines.append("propositions = [\n" + "".join(f"    {p},\n" for p in props) + "]")
    text_lines.append(
        "temporal_groups = [\n" + "".join(f"    {g},\n" for g in groups) + "]"
    )
    tie_body = "".join(f"    {t},\n" for t in (ties or []))
    text_lines.append(f"tie_constraints = [\n{tie_body}]")
    text_lines.append("exclude_final_constraint = []")
    text_lines.append("skip_episode = False")
    text_lines.append('reason = ""')
    return parse_eval_document("\n\n".join(text_lines))


def generate_fixtures(req: FixtureRequest) -> list[EpisodeSpec]:
    return [
        _generate_one(req.scene, req.task_type, i, req.seed, req)
        for i in range(req.count)
    ]


def witness_plan(scene: SceneSpec, episode: EpisodeSpec) -> ExpertPlan:
    """The expert plan proving the episode solvable."""
    world = build_world(scene, episode)
    first_room = scene.rooms[0].name
    rooms = episode.agent_rooms or (first_room, first_room)
    world.add_agent("agent_0", rooms[0])
    world.add_agent("agent_1", rooms[1])
    roles = {"agent_0": ROBOT, "agent_1": HUMAN}
    return heuristic_expert_plan(episode.evaluation, world, roles)


def witness_calls(scene: SceneSpec, episode: EpisodeSpec) -> list[SkillCall]:
    """Single-agent sequential call order solving the episode in DAG order."""
    plan = witness_plan(scene, episode)
    calls: list[SkillCall] = []
    for layer in plan.layers:
        for job in layer:
            calls.extend(job.calls)
    return calls

"""Scene, episode, and dataset files.

``.scene`` files declare rooms, furniture, and optional room adjacency.
``.episode`` files reference a scene, declare initial object placements
(plus clutter), and embed the evaluation DSL document verbatim.  A dataset
is a directory (or zip archive) of episode files with an optional manifest
carrying split tags.  Grammars are documented in docs/formats.md.
"""

from __future__ import annotations

import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

from .dsl import EvalDslDocument, parse_eval_document, serialize_eval_document
from .errors import DanglingReferenceError, DslSyntaxError
from .evaluation import EvaluationFunction
from .geometry import BoundingBox, Vec3
from .world import AffordanceSet, ObjectSpec, StateSet, WorldGraph

SCENE_HEADER = "%SCENE 1"
EPISODE_HEADER = "%EPISODE 1"

TASK_TYPES = ("constraint-free", "spatial", "temporal", "heterogeneous")

_AFFORDANCE_TOKENS = {
    "receptacle": "is_receptacle",
    "openable": "openable",
    "cleanable": "cleanable",
    "fillable": "fillable",
    "powerable": "powerable",
    "faucet": "has_faucet",
}
_STATE_TOKENS = ("open", "clean", "filled", "powered")


@dataclass(frozen=True)
class RoomSpec:
    name: str
    region: BoundingBox


@dataclass(frozen=True)
class FurnitureSpec:
    name: str
    room: str
    box: BoundingBox
    affordances: AffordanceSet = AffordanceSet()
    has_surface: bool = True
    initial_states: tuple[str, ...] = ()


@dataclass
class SceneSpec:
    name: str = "scene"
    split: str = "train"
    rooms: list = field(default_factory=list)
    furniture: list = field(default_factory=list)
    adjacency: list = field(default_factory=list)

    def room_names(self) -> list[str]:
        return [r.name for r in self.rooms]

    def furniture_in(self, room: str) -> list[FurnitureSpec]:
        return [f for f in self.furniture if f.room == room]


@dataclass(frozen=True)
class PlacementSpec:
    object_id: str
    category: str
    half_extents: Vec3
    affordances: AffordanceSet
    initial_states: tuple[str, ...]
    relation: str  # on | within | floor
    parent: str  # furniture name, or room name for floor
    clutter: bool = False

    def state_pairs(self) -> tuple[tuple[str, bool], ...]:
        mapping = {"open": "open", "clean": "clean", "filled": "filled", "powered": "powered"}
        return tuple((mapping[s], True) for s in self.initial_states)


@dataclass
class EpisodeSpec:
    name: str
    scene_ref: str
    task_type: str
    seed: int
    placements: list = field(default_factory=list)
    clutter: list = field(default_factory=list)
    eval_document: EvalDslDocument = field(default_factory=EvalDslDocument)
    agent_rooms: Optional[tuple[str, str]] = None

    @property
    def instruction(self) -> str:
        return self.eval_document.instruction

    @property
    def evaluation(self) -> EvaluationFunction:
        return self.eval_document.compile()

    def all_placements(self) -> list[PlacementSpec]:
        return list(self.placements) + list(self.clutter)


# -- low-level line scanning -------------------------------------------------


def _lines(text: str) -> Iterator[tuple[int, list[str]]]:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def _floats(tokens: list[str], lineno: int, what: str) -> list[float]:
    try:
        return [float(t) for t in tokens]
    except ValueError:
        raise DslSyntaxError(f"expected numbers for {what}", lineno, 0)


def _box(tokens: list[str], lineno: int) -> BoundingBox:
    if len(tokens) != 6:
        raise DslSyntaxError("a box needs 6 numbers (center + half-extents)", lineno, 0)
    cx, cy, cz, hx, hy, hz = _floats(tokens, lineno, "box")
    try:
        return BoundingBox(Vec3(cx, cy, cz), Vec3(hx, hy, hz))
    except ValueError as exc:
        raise DslSyntaxError(str(exc), lineno, 0)


def _affordances(raw: str, lineno: int) -> AffordanceSet:
    kwargs = {}
    for token in raw.split(","):
        token = token.strip()
        if not token:
            continue
        key = _AFFORDANCE_TOKENS.get(token)
        if key is None:
            raise DslSyntaxError(f"unknown affordance {token!r}", lineno, 0)
        kwargs[key] = True
    return AffordanceSet(**kwargs)


def _states(raw: str, lineno: int) -> tuple[str, ...]:
    out = []
    for token in raw.split(","):
        token = token.strip()
        if not token:
            continue
        if token not in _STATE_TOKENS:
            raise DslSyntaxError(f"unknown state {token!r}", lineno, 0)
        out.append(token)
    return tuple(out)


def _split_options(tokens: list[str]) -> tuple[list[str], dict[str, str]]:
    """Separate positional tokens from ``key value``-style trailing options."""
    options: dict[str, str] = {}
    positional: list[str] = []
    i = 0
    while i < len(tokens):
        if tokens[i] in ("affords", "state") and i + 1 < len(tokens):
            options[tokens[i]] = tokens[i + 1]
            i += 2
        elif tokens[i] == "nosurface":
            options["nosurface"] = "true"
            i += 1
        else:
            positional.append(tokens[i])
            i += 1
    return positional, options


# -- scenes --------------------------------------------------------------


def parse_scene(text: str) -> SceneSpec:
    lines = list(_lines(text))
    if not lines or " ".join(lines[0][1]) != SCENE_HEADER:
        raise DslSyntaxError(f"missing {SCENE_HEADER} header", 1, 0)
    scene = SceneSpec()
    room_names: set[str] = set()
    entity_names: set[str] = set()
    for lineno, tokens in lines[1:]:
        kind, rest = tokens[0], tokens[1:]
        try:
            _scene_directive(scene, kind, rest, lineno, room_names, entity_names)
        except (IndexError, ValueError) as exc:
            raise DslSyntaxError(str(exc) or f"malformed {kind} line", lineno, 0)
    return scene


def _scene_directive(scene, kind, rest, lineno, room_names, entity_names):
    if kind == "name":
        scene.name = rest[0] if rest else scene.name
    elif kind == "split":
        if rest and rest[0] not in ("train", "val", "test"):
            raise DslSyntaxError(f"unknown split {rest[0]!r}", lineno, 0)
        scene.split = rest[0] if rest else scene.split
    elif kind == "room":
        if len(rest) < 8 or rest[1] != "region":
            raise DslSyntaxError("room <id> region <6 numbers>", lineno, 0)
        name = rest[0]
        if name in entity_names:
            raise DslSyntaxError(f"duplicate entity {name}", lineno, 0)
        scene.rooms.append(RoomSpec(name, _box(rest[2:8], lineno)))
        room_names.add(name)
        entity_names.add(name)
    elif kind == "furniture":
        positional, options = _split_options(rest)
        if len(positional) < 10 or positional[1] != "in" or positional[3] != "box":
            raise DslSyntaxError(
                "furniture <id> in <room> box <6 numbers> [affords ...] [state ...] [nosurface]",
                lineno,
                0,
            )
        name, room = positional[0], positional[2]
        if name in entity_names:
            raise DslSyntaxError(f"duplicate entity {name}", lineno, 0)
        if room not in room_names:
            raise DanglingReferenceError(
                f"furniture {name} references missing room {room} (line {lineno})"
            )
        scene.furniture.append(
            FurnitureSpec(
                name,
                room,
                _box(positional[4:10], lineno),
                _affordances(options.get("affords", ""), lineno),
                "nosurface" not in options,
                _states(options.get("state", ""), lineno),
            )
        )
        entity_names.add(name)
    elif kind == "adjacent":
        if len(rest) != 2:
            raise DslSyntaxError("adjacent <room_a> <room_b>", lineno, 0)
        for room in rest:
            if room not in room_names:
                raise DanglingReferenceError(
                    f"adjacency references missing room {room} (line {lineno})"
                )
        scene.adjacency.append((rest[0], rest[1]))
    else:
        raise DslSyntaxError(f"unknown directive {kind!r}", lineno, 0)


def serialize_scene(scene: SceneSpec) -> str:
    def box(b: BoundingBox) -> str:
        c, h = b.center, b.half_extents
        return " ".join(f"{v:g}" for v in (c.x, c.y, c.z, h.x, h.y, h.z))

    lines = [SCENE_HEADER, f"name {scene.name}", f"split {scene.split}"]
    for room in scene.rooms:
        lines.append(f"room {room.name} region {box(room.region)}")
    for furn in scene.furniture:
        parts = [f"furniture {furn.name} in {furn.room} box {box(furn.box)}"]
        tokens = [
            token
            for token, attr in _AFFORDANCE_TOKENS.items()
            if getattr(furn.affordances, attr)
        ]
        if tokens:
            parts.append("affords " + ",".join(tokens))
        if furn.initial_states:
            parts.append("state " + ",".join(furn.initial_states))
        if not furn.has_surface:
            parts.append("nosurface")
        lines.append(" ".join(parts))
    for a, b in scene.adjacency:
        lines.append(f"adjacent {a} {b}")
    return "\n".join(lines) + "\n"


def load_scene(path: str | Path) -> SceneSpec:
    return parse_scene(Path(path).read_text())


# -- episodes --------------------------------------------------------------


def _parse_placement(rest: list[str], lineno: int, clutter: bool) -> PlacementSpec:
    positional, options = _split_options(rest)
    if (
        len(positional) < 9
        or positional[1] != "category"
        or positional[3] != "half"
        or positional[7] not in ("on", "within", "floor")
    ):
        raise DslSyntaxError(
            "object <id> category <cat> half <3 numbers> on|within|floor <parent>",
            lineno,
            0,
        )
    hx, hy, hz = _floats(positional[4:7], lineno, "half extents")
    return PlacementSpec(
        positional[0],
        positional[2],
        Vec3(hx, hy, hz),
        _affordances(options.get("affords", ""), lineno),
        _states(options.get("state", ""), lineno),
        positional[7],
        positional[8],
        clutter,
    )


def parse_episode(text: str, name: str = "episode") -> EpisodeSpec:
    # split out heredoc-style eval block first
    eval_text = None
    plain_lines = []
    lines = text.splitlines()
    i = 0
    while i < len(lines):
        stripped = lines[i].strip()
        if stripped == "eval <<<":
            block = []
            i += 1
            while i < len(lines) and lines[i].strip() != ">>>":
                block.append(lines[i])
                i += 1
            if i == len(lines):
                raise DslSyntaxError("unterminated eval block", len(lines), 0)
            eval_text = "\n".join(block)
        else:
            plain_lines.append(lines[i])
        i += 1

    parsed = list(_lines("\n".join(plain_lines)))
    if not parsed or " ".join(parsed[0][1]) != EPISODE_HEADER:
        raise DslSyntaxError(f"missing {EPISODE_HEADER} header", 1, 0)
    episode = EpisodeSpec(name=name, scene_ref="", task_type="constraint-free", seed=0)
    ids: set[str] = set()
    for lineno, tokens in parsed[1:]:
        kind, rest = tokens[0], tokens[1:]
        try:
            _episode_directive(episode, kind, rest, lineno, ids)
        except (IndexError, ValueError) as exc:
            raise DslSyntaxError(str(exc) or f"malformed {kind} line", lineno, 0)
    if not episode.scene_ref:
        raise DslSyntaxError("missing scene reference", 1, 0)
    if eval_text is None:
        raise DslSyntaxError("missing eval block", 1, 0)
    episode.eval_document = parse_eval_document(eval_text)
    return episode


def _episode_directive(episode, kind, rest, lineno, ids):
    if kind == "scene":
        episode.scene_ref = rest[0]
    elif kind == "task_type":
        if not rest or rest[0] not in TASK_TYPES:
            raise DslSyntaxError(f"task_type must be one of {TASK_TYPES}", lineno, 0)
        episode.task_type = rest[0]
    elif kind == "seed":
        episode.seed = int(rest[0])
    elif kind == "agents":
        if len(rest) != 2:
            raise DslSyntaxError("agents <room_for_agent_0> <room_for_agent_1>", lineno, 0)
        episode.agent_rooms = (rest[0], rest[1])
    elif kind in ("object", "clutter"):
        placement = _parse_placement(rest, lineno, kind == "clutter")
        if placement.object_id in ids:
            raise DslSyntaxError(f"duplicate object {placement.object_id}", lineno, 0)
        ids.add(placement.object_id)
        (episode.clutter if kind == "clutter" else episode.placements).append(placement)
    else:
        raise DslSyntaxError(f"unknown directive {kind!r}", lineno, 0)


def serialize_episode(episode: EpisodeSpec) -> str:
    lines = [EPISODE_HEADER, f"scene {episode.scene_ref}", f"task_type {episode.task_type}", f"seed {episode.seed}"]
    if episode.agent_rooms is not None:
        lines.append(f"agents {episode.agent_rooms[0]} {episode.agent_rooms[1]}")
    for placement in episode.all_placements():
        kind = "clutter" if placement.clutter else "object"
        h = placement.half_extents
        parts = [
            f"{kind} {placement.object_id} category {placement.category} "
            f"half {h.x:g} {h.y:g} {h.z:g}"
        ]
        tokens = [
            token
            for token, attr in _AFFORDANCE_TOKENS.items()
            if getattr(placement.affordances, attr)
        ]
        if tokens:
            parts.append("affords " + ",".join(tokens))
        if placement.initial_states:
            parts.append("state " + ",".join(placement.initial_states))
        parts.append(f"{placement.relation} {placement.parent}")
        lines.append(" ".join(parts))
    lines.append("eval <<<")
    lines.append(serialize_eval_document(episode.eval_document).rstrip("\n"))
    lines.append(">>>")
    return "\n".join(lines) + "\n"


def load_episode(path: str | Path) -> EpisodeSpec:
    path = Path(path)
    return parse_episode(path.read_text(), name=path.stem)


# -- datasets --------------------------------------------------------------


@dataclass
class Dataset:
    episodes: list = field(default_factory=list)
    errors: list = field(default_factory=list)  # (file, message)
    skipped: list = field(default_factory=list)  # (file, reason)
    splits: dict = field(default_factory=dict)  # episode name -> split tag

    def __iter__(self):
        return iter(self.episodes)

    def __len__(self) -> int:
        return len(self.episodes)


def load_dataset(path: str | Path) -> Dataset:
    """Ordered, validated episodes; skip-flagged files excluded with a reason."""
    path = Path(path)
    dataset = Dataset()
    if path.suffix == ".zip":
        with zipfile.ZipFile(path) as archive:
            names = sorted(n for n in archive.namelist() if n.endswith(".episode"))
            texts = {n: archive.read(n).decode() for n in names}
            manifest = (
                archive.read("manifest.txt").decode()
                if "manifest.txt" in archive.namelist()
                else ""
            )
    else:
        files = sorted(path.glob("*.episode"))
        texts = {f.name: f.read_text() for f in files}
        manifest_path = path / "manifest.txt"
        manifest = manifest_path.read_text() if manifest_path.exists() else ""
    for line in manifest.splitlines():
        tokens = line.split()
        if len(tokens) == 2:
            dataset.splits[Path(tokens[0]).stem] = tokens[1]
    for filename, text in texts.items():
        try:
            episode = parse_episode(text, name=Path(filename).stem)
        except Exception as exc:  # collected, never fatal
            dataset.errors.append((filename, str(exc)))
            continue
        if episode.eval_document.skip_episode:
            dataset.skipped.append((filename, episode.eval_document.reason))
            continue
        dataset.episodes.append(episode)
    return dataset


# -- world instantiation -----------------------------------------------------


def build_catalog(episode: EpisodeSpec) -> dict[str, ObjectSpec]:
    return {
        p.object_id: ObjectSpec(
            p.object_id, p.category, p.half_extents, p.affordances, p.state_pairs()
        )
        for p in episode.all_placements()
    }


def build_world(scene: SceneSpec, episode: EpisodeSpec, seed: Optional[int] = None) -> WorldGraph:
    """Instantiate the world truth for an episode (agents not yet added)."""
    from .world import Placement  # local import for a flat module graph

    graph = WorldGraph(seed if seed is not None else episode.seed)
    for room in scene.rooms:
        graph.add_room(room.name, room.region)
    for furn in scene.furniture:
        states = StateSet()
        for token in furn.initial_states:
            setattr(states, token, True)
        graph.add_furniture(
            furn.name, furn.room, furn.box, furn.affordances, states, furn.has_surface
        )
    for a, b in scene.adjacency:
        graph.add_adjacency(a, b)
    for placement in episode.all_placements():
        states = StateSet()
        for flag, value in placement.state_pairs():
            setattr(states, flag, value)
        graph.add_object(
            placement.object_id,
            placement.category,
            placement.half_extents,
            placement.affordances,
            states,
        )
        if placement.relation == "floor":
            graph.place_object(placement.object_id, Placement.floor(placement.parent))
        elif placement.relation == "within":
            graph.place_object(placement.object_id, Placement.within(placement.parent))
        else:
            graph.place_object(placement.object_id, Placement.on(placement.parent))
    graph.check_invariants()
    return graph

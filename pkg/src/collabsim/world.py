"""Hierarchical world graph: rooms, furniture, objects, and agents.

The graph is the single source of simulated truth.  Three levels: rooms hold
furniture, furniture holds objects; agents live alongside objects.  Geometry
is kinematic -- placement edges are authoritative and coordinates are sampled
deterministically inside the parent's bounds so that geometric predicates
remain computable without a physics engine.

Every room owns a pseudo-furniture ``floor_<room>`` used as the parent of
floor placements; it behaves like any other surface.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional

from .errors import (
    InconsistentUpdateError,
    PositionOutOfBoundsError,
    RelationNotAffordedError,
    UnknownEntityError,
)
from .geometry import BoundingBox, Vec3

AUTO = None  # sentinel for deterministic in-bounds position sampling

FLOOR_PREFIX = "floor_"

# grid pitch (meters) for deterministic placement sampling
_GRID_PITCH = 0.22
_MAX_GRID = 24


def entity_category(name: str) -> str:
    """``table_4`` -> ``table``; ``living_room_1`` -> ``living_room``."""
    stem, _, index = name.rpartition("_")
    if stem and index.isdigit():
        return stem
    return name


def floor_name(room: str) -> str:
    return FLOOR_PREFIX + room


@dataclass(frozen=True)
class AffordanceSet:
    cleanable: bool = False
    fillable: bool = False
    powerable: bool = False
    openable: bool = False
    is_receptacle: bool = False
    has_faucet: bool = False


@dataclass
class StateSet:
    """Dynamic flags; each is meaningful only if the matching affordance exists."""

    clean: bool = False
    filled: bool = False
    powered: bool = False
    open: bool = False


class Relation(Enum):
    ON = "on"
    WITHIN = "within"
    HELD = "held"


@dataclass(frozen=True)
class Placement:
    """The single placement edge of an object."""

    relation: Relation
    parent: str  # furniture name for ON/WITHIN, agent name for HELD

    @staticmethod
    def on(furniture: str) -> "Placement":
        return Placement(Relation.ON, furniture)

    @staticmethod
    def within(furniture: str) -> "Placement":
        return Placement(Relation.WITHIN, furniture)

    @staticmethod
    def held(agent: str) -> "Placement":
        return Placement(Relation.HELD, agent)

    @staticmethod
    def floor(room: str) -> "Placement":
        return Placement(Relation.ON, floor_name(room))


@dataclass
class Room:
    name: str
    region: BoundingBox


@dataclass
class Furniture:
    name: str
    room: str
    box: BoundingBox
    affordances: AffordanceSet = field(default_factory=AffordanceSet)
    states: StateSet = field(default_factory=StateSet)
    has_surface: bool = True

    @property
    def is_floor(self) -> bool:
        return self.name.startswith(FLOOR_PREFIX)


@dataclass
class Obj:
    name: str
    category: str
    box: BoundingBox
    affordances: AffordanceSet = field(default_factory=AffordanceSet)
    states: StateSet = field(default_factory=StateSet)
    placement: Placement = field(default_factory=lambda: Placement.on(""))


@dataclass
class AgentNode:
    name: str
    position: Vec3 = Vec3(0.0, 0.0, 0.0)
    room: str = ""
    held: Optional[str] = None


class WorldGraph:
    """Mutable world truth.  Confined to one simulator instance."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rooms: dict[str, Room] = {}
        self.furniture: dict[str, Furniture] = {}
        self.objects: dict[str, Obj] = {}
        self.agents: dict[str, AgentNode] = {}
        self.adjacency: dict[str, set[str]] = {}

    # -- construction -----------------------------------------------------

    def add_room(self, name: str, region: BoundingBox) -> Room:
        if name in self.rooms:
            raise ValueError(f"duplicate room {name}")
        room = Room(name, region)
        self.rooms[name] = room
        self.adjacency.setdefault(name, set())
        # every room carries a walkable floor surface
        slab = BoundingBox(
            Vec3(region.center.x, region.center.y, region.min_corner.z + 0.01),
            Vec3(region.half_extents.x, region.half_extents.y, 0.01),
        )
        self.furniture[floor_name(name)] = Furniture(
            floor_name(name), name, slab, AffordanceSet(), StateSet(), True
        )
        return room

    def add_furniture(
        self,
        name: str,
        room: str,
        box: BoundingBox,
        affordances: AffordanceSet = AffordanceSet(),
        states: Optional[StateSet] = None,
        has_surface: bool = True,
    ) -> Furniture:
        if room not in self.rooms:
            raise UnknownEntityError(f"room {room} does not exist")
        if name in self.furniture:
            raise ValueError(f"duplicate furniture {name}")
        furn = Furniture(name, room, box, affordances, states or StateSet(), has_surface)
        self.furniture[name] = furn
        return furn

    def add_object(
        self,
        name: str,
        category: str,
        half_extents: Vec3,
        affordances: AffordanceSet = AffordanceSet(),
        states: Optional[StateSet] = None,
    ) -> Obj:
        if name in self.objects:
            raise ValueError(f"duplicate object {name}")
        box = BoundingBox(Vec3(0.0, 0.0, half_extents.z), half_extents)
        obj = Obj(name, category, box, affordances, states or StateSet())
        self.objects[name] = obj
        return obj

    def add_agent(self, name: str, room: str) -> AgentNode:
        if room not in self.rooms:
            raise UnknownEntityError(f"room {room} does not exist")
        node = AgentNode(name, self.rooms[room].region.center, room)
        self.agents[name] = node
        return node

    def add_adjacency(self, a: str, b: str) -> None:
        self.adjacency.setdefault(a, set()).add(b)
        self.adjacency.setdefault(b, set()).add(a)

    # -- lookup -----------------------------------------------------------

    def has_entity(self, name: str) -> bool:
        return (
            name in self.rooms
            or name in self.furniture
            or name in self.objects
            or name in self.agents
        )

    def room_of(self, name: str) -> str:
        """Room containing the entity (a room contains itself)."""
        if name in self.rooms:
            return name
        if name in self.furniture:
            return self.furniture[name].room
        if name in self.agents:
            return self.agents[name].room
        if name in self.objects:
            placement = self.objects[name].placement
            if placement.relation is Relation.HELD:
                return self.agents[placement.parent].room
            return self.furniture[placement.parent].room
        raise UnknownEntityError(name)

    def entity_box(self, name: str) -> BoundingBox:
        if name in self.objects:
            return self.objects[name].box
        if name in self.furniture:
            return self.furniture[name].box
        if name in self.rooms:
            return self.rooms[name].region
        raise UnknownEntityError(name)

    def objects_at(self, furniture: str) -> list[str]:
        return [
            o.name
            for o in self.objects.values()
            if o.placement.relation is not Relation.HELD
            and o.placement.parent == furniture
        ]

    def room_hops(self, a: str, b: str) -> int:
        """Transitions along the shortest room-adjacency path (BFS).

        Rooms with no declared adjacency are reachable from anywhere in one
        transition (fully-connected default).
        """
        if a == b:
            return 0
        if not self.adjacency.get(a) and not self.adjacency.get(b):
            return 1
        seen = {a}
        frontier = [a]
        hops = 0
        while frontier:
            hops += 1
            nxt = []
            for r in frontier:
                neighbors = self.adjacency.get(r) or set(self.rooms) - {r}
                for n in neighbors:
                    if n == b:
                        return hops
                    if n not in seen:
                        seen.add(n)
                        nxt.append(n)
            frontier = nxt
        return 1  # disconnected declarations fall back to one hop

    # -- placement --------------------------------------------------------

    def _support_rect(self, furn: Furniture, obj: Obj, relation: Relation) -> tuple[float, float, float, float, float]:
        """(min_x, max_x, min_y, max_y, center_z) of valid object centers."""
        box = furn.box
        hx = max(box.half_extents.x - obj.box.half_extents.x, 0.0)
        hy = max(box.half_extents.y - obj.box.half_extents.y, 0.0)
        if relation is Relation.ON:
            z = box.max_corner.z + obj.box.half_extents.z
        else:
            z = box.min_corner.z + obj.box.half_extents.z
        c = box.center
        return (c.x - hx, c.x + hx, c.y - hy, c.y + hy, z)

    def _grid_cells(self, furn: Furniture, obj: Obj, relation: Relation) -> list[Vec3]:
        min_x, max_x, min_y, max_y, z = self._support_rect(furn, obj, relation)
        nx = min(_MAX_GRID, max(1, int(math.ceil((max_x - min_x) / _GRID_PITCH))))
        ny = min(_MAX_GRID, max(1, int(math.ceil((max_y - min_y) / _GRID_PITCH))))
        cells = []
        for iy in range(ny):
            for ix in range(nx):
                x = min_x if nx == 1 else min_x + (max_x - min_x) * ix / (nx - 1)
                y = min_y if ny == 1 else min_y + (max_y - min_y) * iy / (ny - 1)
                cells.append(Vec3(x, y, z))
        return cells

    def _sample_position(
        self, furn: Furniture, obj: Obj, relation: Relation, near: Optional[str] = None
    ) -> Vec3:
        """Deterministic grid scan; first free cell wins, lowest index on ties.

        With ``near`` set, the free cell closest to that entity is chosen
        instead (adjacent-slot sampling for next_to placements).
        """
        cells = self._grid_cells(furn, obj, relation)
        occupied = [
            self.objects[name].box.center
            for name in self.objects_at(furn.name)
            if name != obj.name
        ]

        def is_free(cell: Vec3) -> bool:
            return all(cell.horizontal_distance(p) > 1e-9 + _GRID_PITCH * 0.45 for p in occupied)

        free = [c for c in cells if is_free(c)]
        candidates = free or cells
        if near is not None:
            ref = self.entity_box(near).center
            best = min(
                range(len(candidates)),
                key=lambda i: (round(candidates[i].horizontal_distance(ref), 9), i),
            )
            return candidates[best]
        return candidates[0]

    def place_object(
        self,
        name: str,
        placement: Placement,
        position: Optional[Vec3] = AUTO,
        near: Optional[str] = None,
    ) -> None:
        """Attach the object's single placement edge and position it.

        AUTO positions come from a fixed grid scan of the support surface;
        explicit positions must lie within the parent's bounds.
        """
        if name not in self.objects:
            raise UnknownEntityError(f"object {name} does not exist")
        obj = self.objects[name]

        if placement.relation is Relation.HELD:
            agent = self.agents.get(placement.parent)
            if agent is None:
                raise UnknownEntityError(f"agent {placement.parent} does not exist")
            if agent.held is not None and agent.held != name:
                raise RelationNotAffordedError(
                    f"{agent.name} already holds {agent.held}"
                )
            self._detach(obj)
            agent.held = name
            obj.placement = placement
            obj.box = obj.box.at_center(
                Vec3(agent.position.x, agent.position.y, agent.position.z + 0.8)
            )
            return

        furn = self.furniture.get(placement.parent)
        if furn is None:
            raise UnknownEntityError(f"furniture {placement.parent} does not exist")
        if placement.relation is Relation.ON and not furn.has_surface:
            raise RelationNotAffordedError(f"{furn.name} has no support surface")
        if placement.relation is Relation.WITHIN and not furn.affordances.is_receptacle:
            raise RelationNotAffordedError(f"{furn.name} has no interior volume")

        if position is AUTO:
            position = self._sample_position(furn, obj, placement.relation, near)
        else:
            min_x, max_x, min_y, max_y, z = self._support_rect(
                furn, obj, placement.relation
            )
            eps = 1e-6
            if not (
                min_x - eps <= position.x <= max_x + eps
                and min_y - eps <= position.y <= max_y + eps
            ):
                raise PositionOutOfBoundsError(
                    f"position {position} outside bounds of {furn.name}"
                )
            position = Vec3(position.x, position.y, z)

        self._detach(obj)
        obj.placement = placement
        obj.box = obj.box.at_center(position)

    def _detach(self, obj: Obj) -> None:
        if obj.placement.relation is Relation.HELD:
            holder = self.agents.get(obj.placement.parent)
            if holder is not None and holder.held == obj.name:
                holder.held = None

    def move_agent(self, name: str, position: Vec3, room: str) -> None:
        agent = self.agents[name]
        agent.position = position
        agent.room = room
        if agent.held is not None:
            held = self.objects[agent.held]
            held.box = held.box.at_center(
                Vec3(position.x, position.y, position.z + 0.8)
            )

    # -- invariants / snapshots -------------------------------------------

    def check_invariants(self) -> None:
        held_by: dict[str, list[str]] = {}
        for obj in self.objects.values():
            placement = obj.placement
            if placement.relation is Relation.HELD:
                if placement.parent not in self.agents:
                    raise AssertionError(f"{obj.name} held by unknown {placement.parent}")
                held_by.setdefault(placement.parent, []).append(obj.name)
            else:
                furn = self.furniture.get(placement.parent)
                if furn is None:
                    raise AssertionError(f"{obj.name} placed on unknown {placement.parent}")
                min_x, max_x, min_y, max_y, _ = self._support_rect(
                    furn, obj, placement.relation
                )
                c = obj.box.center
                eps = 1e-6
                if not (min_x - eps <= c.x <= max_x + eps and min_y - eps <= c.y <= max_y + eps):
                    raise AssertionError(f"{obj.name} outside bounds of {furn.name}")
        for agent, names in held_by.items():
            if len(names) > 1:
                raise AssertionError(f"{agent} holds more than one object: {names}")
        for agent in self.agents.values():
            if agent.held is not None and self.objects[agent.held].placement != Placement.held(agent.name):
                raise AssertionError(f"{agent.name} hold slot out of sync")
        for furn in self.furniture.values():
            if furn.room not in self.rooms:
                raise AssertionError(f"{furn.name} in unknown room {furn.room}")

    def canonical(self) -> tuple:
        """Structural form used for equality, hashing, and serialization."""

        def box(b: BoundingBox) -> tuple:
            c, h = b.center, b.half_extents
            return tuple(round(v, 6) for v in (c.x, c.y, c.z, h.x, h.y, h.z))

        def states(s: StateSet) -> tuple:
            return (s.clean, s.filled, s.powered, s.open)

        return (
            tuple((r.name, box(r.region)) for r in self.rooms.values()),
            tuple(
                (f.name, f.room, box(f.box), f.affordances, states(f.states), f.has_surface)
                for f in self.furniture.values()
            ),
            tuple(
                (
                    o.name,
                    o.category,
                    box(o.box),
                    o.affordances,
                    states(o.states),
                    o.placement.relation.value,
                    o.placement.parent,
                )
                for o in sorted(self.objects.values(), key=lambda o: o.name)
            ),
            tuple(
                (
                    a.name,
                    tuple(round(v, 6) for v in (a.position.x, a.position.y, a.position.z)),
                    a.room,
                    a.held,
                )
                for a in self.agents.values()
            ),
        )

    def __eq__(self, other: object) -> bool:
        return isinstance(other, WorldGraph) and self.canonical() == other.canonical()

    def copy(self) -> "WorldGraph":
        return copy.deepcopy(self)


@dataclass(frozen=True)
class WorldState:
    """Immutable snapshot of the graph at a step index."""

    step: int
    graph: WorldGraph

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, WorldState)
            and self.step == other.step
            and self.graph == other.graph
        )


def snapshot(graph: WorldGraph, step: int) -> WorldState:
    return WorldState(step, graph.copy())


# -- observed views --------------------------------------------------------


@dataclass(frozen=True)
class ObjectSpec:
    """Static catalog entry: what an object is, independent of where it is."""

    name: str
    category: str
    half_extents: Vec3
    affordances: AffordanceSet
    initial_states: tuple[tuple[str, bool], ...] = ()


class ObservedGraph:
    """One agent's view: full layout, discovered objects, possibly stale."""

    def __init__(self, agent: str, true_graph: WorldGraph, catalog: dict[str, ObjectSpec]):
        self.agent = agent
        self.graph = WorldGraph(true_graph.seed)
        self.catalog = catalog
        self.last_observed: dict[str, int] = {}
        # layout (rooms + furniture) is known from step 0
        for room in true_graph.rooms.values():
            self.graph.add_room(room.name, room.region)
        for furn in true_graph.furniture.values():
            if furn.is_floor:
                continue
            self.graph.add_furniture(
                furn.name,
                furn.room,
                furn.box,
                furn.affordances,
                replace_states(furn.states),
                furn.has_surface,
            )
        self.graph.adjacency = {k: set(v) for k, v in true_graph.adjacency.items()}
        for agent_node in true_graph.agents.values():
            self.graph.add_agent(agent_node.name, agent_node.room)
            self.graph.agents[agent_node.name].position = agent_node.position

    @property
    def discovered(self) -> set[str]:
        return set(self.graph.objects)

    def _ensure_object(self, name: str) -> Obj:
        if name in self.graph.objects:
            return self.graph.objects[name]
        spec = self.catalog.get(name)
        if spec is None:
            raise InconsistentUpdateError(f"no catalog entry for {name}")
        states = StateSet()
        for flag, value in spec.initial_states:
            setattr(states, flag, value)
        return self.graph.add_object(
            name, spec.category, spec.half_extents, spec.affordances, states
        )

    def observe(self, true_state: WorldState, visibility: Iterable[str], step: Optional[int] = None) -> None:
        """Insert or update the visible entities with their true attributes."""
        at_step = true_state.step if step is None else step
        true = true_state.graph
        for name in visibility:
            if name in true.objects:
                src = true.objects[name]
                obj = self._ensure_object(name)
                obj.states = replace_states(src.states)
                obj.placement = src.placement
                obj.box = src.box
                self._sync_hold(obj)
            elif name in true.furniture:
                self.graph.furniture[name].states = replace_states(
                    true.furniture[name].states
                )
            elif name in true.agents:
                src_agent = true.agents[name]
                dst = self.graph.agents[name]
                dst.position = src_agent.position
                dst.room = src_agent.room
                dst.held = src_agent.held
            elif name not in true.rooms:
                raise UnknownEntityError(name)
            self.last_observed[name] = at_step

    def _sync_hold(self, obj: Obj) -> None:
        for agent in self.graph.agents.values():
            if agent.held == obj.name and obj.placement != Placement.held(agent.name):
                agent.held = None
        if obj.placement.relation is Relation.HELD:
            holder = self.graph.agents.get(obj.placement.parent)
            if holder is not None:
                holder.held = obj.name

    def apply_action_update(self, result) -> None:
        """Deterministic edge rewrite after a completed skill (A-series update).

        Accepts the acting agent's own results as well as broadcast partner
        results.  Failed results change nothing.
        """
        from .skills import SkillResult  # local import to avoid a cycle

        assert isinstance(result, SkillResult)
        if not result.ok:
            return
        call = result.call
        graph = self.graph
        name = call.skill
        if name in ("Pick",):
            obj = self._ensure_object(call.args[0])
            graph.place_object(obj.name, Placement.held(result.agent))
        elif name in ("Place", "Rearrange"):
            obj = self._ensure_object(call.args[0])
            relation = Relation.ON if call.args[1] == "on" else Relation.WITHIN
            target = call.args[2]
            if target not in graph.furniture:
                raise InconsistentUpdateError(f"unknown furniture {target}")
            if result.position is not None:
                graph._detach(obj)
                obj.placement = Placement(relation, target)
                obj.box = obj.box.at_center(result.position)
                self._sync_hold(obj)
            else:
                graph.place_object(obj.name, Placement(relation, target))
        elif name in ("Open", "Close"):
            target = call.args[0]
            if target not in graph.furniture:
                raise InconsistentUpdateError(f"unknown furniture {target}")
            graph.furniture[target].states.open = name == "Open"
        elif name in ("Clean", "Fill", "PowerOn", "PowerOff"):
            target = call.args[0]
            node = self._state_node(target)
            if name == "Clean":
                node.states.clean = True
            elif name == "Fill":
                node.states.filled = True
            else:
                node.states.powered = name == "PowerOn"
        elif name == "Pour":
            target = call.args[0]
            node = self._state_node(target)
            node.states.filled = True
            if result.poured_from is not None and result.poured_from in graph.objects:
                graph.objects[result.poured_from].states.filled = False
        elif name == "Navigate" and result.position is not None:
            agent = graph.agents.get(result.agent)
            if agent is not None:
                graph.move_agent(result.agent, result.position, result.room or agent.room)
        # Explore / Wait / Done carry no direct world effect

    def _state_node(self, name: str):
        if name in self.graph.furniture:
            return self.graph.furniture[name]
        return self._ensure_object(name)


def replace_states(states: StateSet) -> StateSet:
    return StateSet(states.clean, states.filled, states.powered, states.open)


def summarize(observed: ObservedGraph) -> str:
    """Render the agent-facing world description.

    Deterministic: one furniture line per room in scene order, a faucet line
    when any furniture has one, then discovered objects (or a fixed marker
    when none have been found).
    """
    graph = observed.graph
    lines = ["Furniture:"]
    for room in graph.rooms.values():
        names = [floor_name(room.name)] + [
            f.name
            for f in graph.furniture.values()
            if f.room == room.name and not f.is_floor
        ]
        lines.append(f"{room.name}: " + ", ".join(names))
    lines.append("")
    faucets = [
        f.name
        for f in graph.furniture.values()
        if f.affordances.has_faucet and not f.is_floor
    ]
    if faucets:
        lines.append("The following furnitures have a faucet: " + ", ".join(faucets))
    lines.append("Objects:")
    if not graph.objects:
        lines.append("No objects found yet")
    else:
        for obj in graph.objects.values():
            placement = obj.placement
            if placement.relation is Relation.HELD:
                room = graph.agents[placement.parent].room
                lines.append(f"{obj.name}: held by {placement.parent} in {room}")
            else:
                room = graph.furniture[placement.parent].room
                lines.append(f"{obj.name}: {placement.parent} in {room}")
    return "\n".join(lines)

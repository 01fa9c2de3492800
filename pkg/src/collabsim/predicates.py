"""The twelve logical predicates evaluated against a world snapshot.

Rearrange predicates (is_on_top, is_inside, is_on_floor) read the
authoritative placement edges instead of casting rays; the abstract world has
no occluders, so edges and raycasts agree by construction.  Spatial and room
predicates are geometric.  State predicates require the matching affordance.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import TypeMismatchError, UnknownEntityError
from .world import Relation, WorldState

REARRANGE_PREDICATES = ("is_on_top", "is_inside", "is_in_room", "is_on_floor")
SPATIAL_PREDICATES = ("is_next_to", "is_clustered")
STATE_PREDICATES = (
    "is_clean",
    "is_dirty",
    "is_filled",
    "is_empty",
    "is_powered_on",
    "is_powered_off",
)
ALL_PREDICATES = REARRANGE_PREDICATES + SPATIAL_PREDICATES + STATE_PREDICATES


@dataclass(frozen=True)
class PredicateConfig:
    """Thresholds for geometric predicates.

    ``inside_ray_threshold`` documents the raycast rule this model replaces;
    it is retained for reference and never consulted.
    """

    next_to_l2_threshold: float = 0.50
    floor_epsilon: float = 0.04
    in_room_keypoint_fraction: float = 0.25
    inside_ray_threshold: int = 2

    def __post_init__(self) -> None:
        if self.next_to_l2_threshold <= 0 or self.floor_epsilon <= 0:
            raise ValueError("thresholds must be positive")
        if not 0 < self.in_room_keypoint_fraction <= 1:
            raise ValueError("keypoint fraction must be in (0, 1]")


DEFAULT_CONFIG = PredicateConfig()


def _require(state: WorldState, name: str) -> None:
    if not state.graph.has_entity(name):
        raise UnknownEntityError(name)


def eval_rearrange_predicate(
    name: str,
    subject: str,
    target: str | None,
    state: WorldState,
    cfg: PredicateConfig = DEFAULT_CONFIG,
) -> bool:
    graph = state.graph
    _require(state, subject)
    if name == "is_on_floor":
        if subject not in graph.objects:
            return False
        obj = graph.objects[subject]
        placement = obj.placement
        if placement.relation is not Relation.ON:
            return False
        floor = graph.furniture.get(placement.parent)
        if floor is None or not floor.is_floor:
            return False
        offset = obj.box.min_corner.z - graph.rooms[floor.room].region.min_corner.z
        return abs(offset) <= cfg.floor_epsilon

    assert target is not None
    _require(state, target)
    if name == "is_in_room":
        if target not in graph.rooms:
            raise TypeMismatchError(f"{target} is not a room")
        region = graph.rooms[target].region
        points = graph.entity_box(subject).keypoints()
        inside = sum(1 for p in points if region.contains(p))
        return inside / len(points) >= cfg.in_room_keypoint_fraction

    if target in graph.rooms:
        raise TypeMismatchError(f"{target} is a room, expected furniture")
    if subject not in graph.objects:
        return False
    placement = graph.objects[subject].placement
    if name == "is_on_top":
        return placement.relation is Relation.ON and placement.parent == target
    if name == "is_inside":
        return placement.relation is Relation.WITHIN and placement.parent == target
    raise ValueError(f"not a rearrange predicate: {name}")


def is_next_to(
    a: str, b: str, state: WorldState, cfg: PredicateConfig = DEFAULT_CONFIG
) -> bool:
    """Vertical bounding-box overlap plus a horizontal footprint gap cap."""
    _require(state, a)
    _require(state, b)
    if a == b:
        return False
    box_a = state.graph.entity_box(a)
    box_b = state.graph.entity_box(b)
    if not box_a.vertical_overlap(box_b):
        return False
    return box_a.footprint_distance(box_b) <= cfg.next_to_l2_threshold


def is_clustered(
    entities: list[str], state: WorldState, cfg: PredicateConfig = DEFAULT_CONFIG
) -> bool:
    """Every entity is next to at least one other of the group."""
    if len(entities) < 2:
        raise ValueError("is_clustered needs at least two entities")
    return all(
        any(is_next_to(a, b, state, cfg) for b in entities if b != a)
        for a in entities
    )


def eval_spatial_predicate(
    name: str,
    args: list[str],
    state: WorldState,
    cfg: PredicateConfig = DEFAULT_CONFIG,
) -> bool:
    if name == "is_next_to":
        if len(args) != 2:
            raise ValueError("is_next_to takes exactly two entities")
        return is_next_to(args[0], args[1], state, cfg)
    if name == "is_clustered":
        return is_clustered(args, state, cfg)
    raise ValueError(f"not a spatial predicate: {name}")


def eval_state_predicate(name: str, entity: str, state: WorldState) -> bool:
    _require(state, entity)
    graph = state.graph
    if entity in graph.objects:
        node = graph.objects[entity]
    elif entity in graph.furniture:
        node = graph.furniture[entity]
    else:
        return False
    affordances, states = node.affordances, node.states
    if name == "is_clean":
        return affordances.cleanable and states.clean
    if name == "is_dirty":
        return affordances.cleanable and not states.clean
    if name == "is_filled":
        return affordances.fillable and states.filled
    if name == "is_empty":
        return affordances.fillable and not states.filled
    if name == "is_powered_on":
        return affordances.powerable and states.powered
    if name == "is_powered_off":
        return affordances.powerable and not states.powered
    raise ValueError(f"not a state predicate: {name}")


def eval_predicate(
    name: str,
    args: list[str],
    state: WorldState,
    cfg: PredicateConfig = DEFAULT_CONFIG,
) -> bool:
    """Dispatch a predicate call with positional entity arguments."""
    if name in STATE_PREDICATES:
        if len(args) != 1:
            raise ValueError(f"{name} takes exactly one entity")
        return eval_state_predicate(name, args[0], state)
    if name in SPATIAL_PREDICATES:
        return eval_spatial_predicate(name, args, state, cfg)
    if name == "is_on_floor":
        if len(args) != 1:
            raise ValueError("is_on_floor takes exactly one entity")
        return eval_rearrange_predicate(name, args[0], None, state, cfg)
    if name in REARRANGE_PREDICATES:
        if len(args) != 2:
            raise ValueError(f"{name} takes exactly two entities")
        return eval_rearrange_predicate(name, args[0], args[1], state, cfg)
    raise ValueError(f"unknown predicate {name}")

"""Discrete simulator: oracle skill execution with deterministic step costs.

Skills are scheduled with a completion step derived from the cost model and
take effect atomically when the global step counter reaches it.  A failed
skill leaves the world untouched.  Robot agents may not schedule
state-modifying skills.  Simultaneous completions execute human-first, then
by agent id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import (
    AgentBusyError,
    CapabilityViolationError,
    EpisodeTerminatedError,
    UnknownEntityError,
)
from .geometry import Vec3
from .world import (
    ObjectSpec,
    ObservedGraph,
    Placement,
    Relation,
    WorldGraph,
    WorldState,
    snapshot,
)

STATE_MODIFYING_SKILLS = ("Clean", "Fill", "Pour", "PowerOn", "PowerOff")

SKILL_ARITY = {
    "Navigate": 1,
    "Explore": 1,
    "Open": 1,
    "Close": 1,
    "Pick": 1,
    "Place": 5,
    "Rearrange": 5,
    "Clean": 1,
    "Fill": 1,
    "Pour": 1,
    "PowerOn": 1,
    "PowerOff": 1,
    "Wait": 0,
    "Done": 0,
}

HUMAN = "human"
ROBOT = "robot"

SUCCESS_MESSAGE = "Result: Successful execution!"


@dataclass(frozen=True)
class SkillCall:
    skill: str
    args: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        arity = SKILL_ARITY.get(self.skill)
        if arity is None:
            raise ValueError(f"unknown skill {self.skill}")
        if len(self.args) != arity:
            raise ValueError(f"{self.skill} takes {arity} arguments, got {len(self.args)}")
        if self.skill in ("Place", "Rearrange"):
            _, relation, _, constraint, _ = self.args
            if relation not in ("on", "within"):
                raise ValueError(f"spatial relation must be on/within, got {relation!r}")
            if constraint not in ("next_to", "none"):
                raise ValueError(f"spatial constraint must be next_to/none, got {constraint!r}")

    @staticmethod
    def make(skill: str, *args: str) -> "SkillCall":
        if skill in ("Place", "Rearrange"):
            args = tuple(
                "none" if a in ("None", "none") else a for a in args
            )
        return SkillCall(skill, tuple(args))

    def to_string(self) -> str:
        return f"{self.skill}[{', '.join(self.args)}]"


@dataclass
class SkillResult:
    agent: str
    call: SkillCall
    status: str  # success | failure
    message: str
    steps_consumed: int
    completed_at_step: int
    position: Optional[Vec3] = None
    room: Optional[str] = None
    poured_from: Optional[str] = None
    revealed: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.status == "success"

    def line(self) -> str:
        return f"{self.call.to_string()} -> {self.message}"


def failure_message(reason: str) -> str:
    return f"Result: Unexpected failure! - {reason}"


@dataclass(frozen=True)
class SimConfig:
    nav_cost_per_meter: int = 2
    room_transition_cost: int = 5
    manipulation_cost: int = 10
    explore_cost_per_furniture: int = 20
    max_sim_steps: int = 20000
    observability: str = "full"  # full | partial
    seed: int = 0
    adjacency_radius: float = 1.5
    pour_empties_source: bool = True
    clean_requires_faucet: bool = False

    def __post_init__(self) -> None:
        if min(
            self.nav_cost_per_meter,
            self.room_transition_cost,
            self.manipulation_cost,
            self.explore_cost_per_furniture,
        ) < 1:
            raise ValueError("all step costs must be at least 1")
        if self.max_sim_steps <= 0:
            raise ValueError("max_sim_steps must be positive")
        if self.observability not in ("full", "partial"):
            raise ValueError("observability must be full or partial")


@dataclass
class Trace:
    seed: int
    states: list = field(default_factory=list)  # WorldState, strictly increasing
    results: list = field(default_factory=list)  # SkillResult in completion order
    termination: Optional[str] = None

    def final_state(self) -> WorldState:
        return self.states[-1]


TERMINATED_ALL_DONE = "AllDone"
TERMINATED_TIMEOUT = "StepTimeout"


class Simulator:
    """Single-episode discrete-time engine.  Strictly single-threaded."""

    def __init__(
        self,
        world: WorldGraph,
        catalog: dict[str, ObjectSpec],
        config: SimConfig,
        roles: dict[str, str],
    ):
        self.world = world
        self.catalog = catalog
        self.config = config
        self.roles = dict(roles)
        for agent, role in roles.items():
            if agent not in world.agents:
                raise UnknownEntityError(f"agent {agent} not in world")
            if role not in (HUMAN, ROBOT):
                raise ValueError(f"unknown role {role}")
        self.step_index = 0
        # agent -> (scheduled_at, completion_step, call)
        self.in_progress: dict[str, tuple[int, int, SkillCall]] = {}
        self.done: set[str] = set()
        self.terminated: Optional[str] = None
        self.observed: dict[str, ObservedGraph] = {
            agent: ObservedGraph(agent, world, catalog) for agent in roles
        }
        if config.observability == "full":
            self._observe_everything()
        self.trace = Trace(seed=world.seed)
        self._snapshot()

    # -- observation plumbing ----------------------------------------------

    def _observe_everything(self) -> None:
        state = snapshot(self.world, self.step_index)
        everything = (
            list(self.world.objects)
            + list(self.world.furniture)
            + list(self.world.agents)
        )
        for view in self.observed.values():
            view.observe(state, everything, step=self.step_index)

    def _reveal(self, agent: str, entities: tuple[str, ...]) -> None:
        if entities:
            state = snapshot(self.world, self.step_index)
            self.observed[agent].observe(state, entities, step=self.step_index)

    # -- scheduling ----------------------------------------------------------

    def idle_agents(self) -> list[str]:
        return [
            a
            for a in self.roles
            if a not in self.in_progress and a not in self.done and not self.terminated
        ]

    def schedule_skill(self, agent: str, call: SkillCall) -> int:
        """Returns the deterministic completion step."""
        if self.terminated:
            raise EpisodeTerminatedError(self.terminated)
        if agent not in self.roles:
            raise UnknownEntityError(agent)
        if agent in self.done:
            raise AgentBusyError(f"{agent} already called Done")
        if agent in self.in_progress:
            raise AgentBusyError(f"{agent} has a skill in progress")
        if self.roles[agent] == ROBOT and call.skill in STATE_MODIFYING_SKILLS:
            raise CapabilityViolationError(
                f"robot agent {agent} may not execute {call.skill}"
            )
        cost = self._cost(agent, call)
        completion = self.step_index + max(1, cost)
        self.in_progress[agent] = (self.step_index, completion, call)
        return completion

    def _nav_cost(self, agent: str, target: str) -> int:
        world = self.world
        node = world.agents[agent]
        if not world.has_entity(target):
            return 1  # failure is established at completion time
        target_room = world.room_of(target)
        hops = world.room_hops(node.room, target_room)
        point = self._standing_point(agent, target)
        distance = node.position.horizontal_distance(point)
        return int(math.ceil(distance * self.config.nav_cost_per_meter)) + (
            hops * self.config.room_transition_cost
        )

    def _cost(self, agent: str, call: SkillCall) -> int:
        config = self.config
        skill = call.skill
        if skill == "Navigate":
            return self._nav_cost(agent, call.args[0])
        if skill == "Explore":
            room = call.args[0]
            count = (
                sum(
                    1
                    for f in self.world.furniture.values()
                    if f.room == room and not f.is_floor
                )
                if room in self.world.rooms
                else 0
            )
            return max(1, count) * config.explore_cost_per_furniture
        if skill == "Rearrange":
            obj, _, furniture = call.args[0], call.args[1], call.args[2]
            first_leg = self._nav_cost(agent, obj) if self.world.has_entity(obj) else 1
            second_leg = 1
            if self.world.has_entity(obj) and self.world.has_entity(furniture):
                start = self.world.entity_box(obj).center
                end = self._standing_point(agent, furniture, origin=start)
                hops = self.world.room_hops(
                    self.world.room_of(obj), self.world.room_of(furniture)
                )
                second_leg = int(
                    math.ceil(start.horizontal_distance(end) * config.nav_cost_per_meter)
                ) + hops * config.room_transition_cost
            return first_leg + second_leg + 2 * config.manipulation_cost
        if skill in ("Wait", "Done"):
            return 1
        return config.manipulation_cost

    # -- geometry helpers ----------------------------------------------------

    def _standing_point(self, agent: str, target: str, origin: Optional[Vec3] = None) -> Vec3:
        world = self.world
        if target in world.rooms:
            region = world.rooms[target].region
            return Vec3(region.center.x, region.center.y, region.min_corner.z)
        box = world.entity_box(target)
        room = world.rooms[world.room_of(target)]
        floor_z = room.region.min_corner.z
        start = origin if origin is not None else world.agents[agent].position
        dx = start.x - box.center.x
        dy = start.y - box.center.y
        norm = math.hypot(dx, dy)
        if norm < 1e-9:
            dx, dy, norm = 1.0, 0.0, 1.0
        dx, dy = dx / norm, dy / norm
        # boundary of the box inflated by the standing buffer, along (dx, dy)
        buffer = 0.4
        tx = (box.half_extents.x + buffer) / abs(dx) if abs(dx) > 1e-9 else math.inf
        ty = (box.half_extents.y + buffer) / abs(dy) if abs(dy) > 1e-9 else math.inf
        t = min(tx, ty)
        return Vec3(box.center.x + dx * t, box.center.y + dy * t, floor_z)

    def _adjacent(self, agent: str, target: str) -> bool:
        world = self.world
        node = world.agents[agent]
        if world.room_of(target) != node.room:
            return False
        box = world.entity_box(target)
        return box.distance_to_point_xy(node.position) <= self.config.adjacency_radius

    def _adjacent_to_faucet(self, agent: str) -> bool:
        return any(
            f.affordances.has_faucet and self._adjacent(agent, f.name)
            for f in self.world.furniture.values()
        )

    # -- stepping --------------------------------------------------------------

    def step(self) -> list[SkillResult]:
        """Advance one step; execute skills completing now; snapshot on change."""
        if self.terminated:
            raise EpisodeTerminatedError(self.terminated)
        self.step_index += 1
        due = sorted(
            (
                agent
                for agent, (_, completion, _) in self.in_progress.items()
                if completion <= self.step_index
            ),
            key=lambda a: (self.roles[a] != HUMAN, a),
        )
        results: list[SkillResult] = []
        for agent in due:
            scheduled_at, _, call = self.in_progress.pop(agent)
            result = self._execute(agent, call, scheduled_at)
            results.append(result)
            self.trace.results.append(result)
            self._propagate(result)
        if results:
            self.world.check_invariants()
            self._snapshot()
        if self.done and all(a in self.done for a in self.roles):
            self._terminate(TERMINATED_ALL_DONE)
        elif self.step_index >= self.config.max_sim_steps:
            self._terminate(TERMINATED_TIMEOUT)
        return results

    def run_to_completion_of(self, agent: str) -> list[SkillResult]:
        """Step until the given agent's in-flight skill resolves."""
        out: list[SkillResult] = []
        while agent in self.in_progress and not self.terminated:
            out.extend(self.step())
        return out

    def _terminate(self, reason: str) -> None:
        self.terminated = reason
        self.trace.termination = reason
        if not self.trace.states or self.trace.states[-1].step != self.step_index:
            self._snapshot()

    def _snapshot(self) -> None:
        self.trace.states.append(snapshot(self.world, self.step_index))

    def _propagate(self, result: SkillResult) -> None:
        """Update observed views: the actor sees true state of revealed
        entities; everyone receives the action broadcast."""
        if self.config.observability == "full":
            self._observe_everything()
            return
        self._reveal(result.agent, result.revealed)
        for agent, view in self.observed.items():
            view.apply_action_update(result)

    # -- skill effects ----------------------------------------------------------

    def _execute(self, agent: str, call: SkillCall, scheduled_at: int) -> SkillResult:
        handler = getattr(self, "_skill_" + call.skill.lower())
        status, message, extras = handler(agent, *call.args)
        return SkillResult(
            agent=agent,
            call=call,
            status=status,
            message=message,
            steps_consumed=max(1, self.step_index - scheduled_at),
            completed_at_step=self.step_index,
            **extras,
        )

    @staticmethod
    def _ok(**extras) -> tuple[str, str, dict]:
        return "success", SUCCESS_MESSAGE, extras

    @staticmethod
    def _fail(reason: str, **extras) -> tuple[str, str, dict]:
        return "failure", failure_message(reason), extras

    def _skill_navigate(self, agent: str, target: str):
        world = self.world
        if not world.has_entity(target):
            return self._fail(f"{target} does not exist")
        point = self._standing_point(agent, target)
        room = world.room_of(target)
        world.move_agent(agent, point, room)
        revealed: list[str] = [target]
        if target in world.objects:
            placement = world.objects[target].placement
            if placement.relation is not Relation.HELD:
                revealed.append(placement.parent)
                revealed.extend(world.objects_at(placement.parent))
        elif target in world.furniture:
            revealed.extend(world.objects_at(target))
        return self._ok(position=point, room=room, revealed=tuple(dict.fromkeys(revealed)))

    def _skill_explore(self, agent: str, room: str):
        world = self.world
        if room not in world.rooms:
            return self._fail(f"{room} is not a room")
        revealed = [room]
        last_point = None
        for furniture in world.furniture.values():
            if furniture.room != room:
                continue
            revealed.append(furniture.name)
            revealed.extend(world.objects_at(furniture.name))
            if not furniture.is_floor:
                last_point = self._standing_point(agent, furniture.name)
        point = last_point or Vec3(
            world.rooms[room].region.center.x,
            world.rooms[room].region.center.y,
            world.rooms[room].region.min_corner.z,
        )
        world.move_agent(agent, point, room)
        return self._ok(position=point, room=room, revealed=tuple(dict.fromkeys(revealed)))

    def _skill_pick(self, agent: str, target: str):
        world = self.world
        node = world.agents[agent]
        if target not in world.objects:
            return self._fail(f"{target} is not an object")
        if node.held is not None:
            return self._fail("cannot hold more than one object at a time")
        obj = world.objects[target]
        if obj.placement.relation is Relation.HELD:
            return self._fail(f"{target} is held by {obj.placement.parent}")
        parent = world.furniture[obj.placement.parent]
        if (
            obj.placement.relation is Relation.WITHIN
            and parent.affordances.openable
            and not parent.states.open
        ):
            return self._fail(f"{parent.name} is closed")
        if not self._adjacent(agent, target):
            return self._fail(f"agent is not near {target}")
        world.place_object(target, Placement.held(agent))
        return self._ok(revealed=(target,))

    def _place_checks(self, agent: str, target: str, relation: str, furniture: str,
                      constraint: str, reference: str):
        """Shared Place validation; returns an error reason or None."""
        world = self.world
        node = world.agents[agent]
        if node.held != target:
            return f"{target} is not held"
        if furniture not in world.furniture:
            return f"{furniture} is not furniture"
        furn = world.furniture[furniture]
        if not self._adjacent(agent, furniture):
            return f"agent is not near {furniture}"
        if relation == "on" and not furn.has_surface:
            return f"{furniture} has no support surface"
        if relation == "within":
            if not furn.affordances.is_receptacle:
                return f"{furniture} has no interior volume"
            if furn.affordances.openable and not furn.states.open:
                return f"{furniture} is closed"
        if constraint == "next_to":
            if reference not in world.objects:
                return f"reference object {reference} does not exist"
            ref_placement = world.objects[reference].placement
            if ref_placement.relation is Relation.HELD or ref_placement.parent != furniture:
                return f"the reference object must already be on {furniture}"
        return None

    def _skill_place(self, agent: str, target: str, relation: str, furniture: str,
                     constraint: str, reference: str):
        reason = self._place_checks(agent, target, relation, furniture, constraint, reference)
        if reason is not None:
            return self._fail(reason)
        kind = Relation.ON if relation == "on" else Relation.WITHIN
        near = reference if constraint == "next_to" else None
        self.world.place_object(target, Placement(kind, furniture), near=near)
        return self._ok(position=self.world.objects[target].box.center, revealed=(target,))

    def _skill_rearrange(self, agent: str, target: str, relation: str, furniture: str,
                         constraint: str, reference: str):
        """Navigate -> Pick -> Navigate -> Place, atomically; aborts at the
        first failing stage with the world unchanged."""
        saved = self.world.copy()
        stages = (
            ("Navigate", lambda: self._skill_navigate(agent, target)),
            ("Pick", lambda: self._skill_pick(agent, target)),
            ("Navigate", lambda: self._skill_navigate(agent, furniture)),
            (
                "Place",
                lambda: self._skill_place(
                    agent, target, relation, furniture, constraint, reference
                ),
            ),
        )
        position = None
        for stage_name, stage in stages:
            status, message, extras = stage()
            if status != "success":
                self.world = saved
                reason = message.removeprefix(failure_message("")).strip()
                return self._fail(f"{stage_name} stage failed: {reason}" if reason else f"{stage_name} stage failed")
            position = extras.get("position", position)
        return self._ok(position=position, revealed=(target,))

    def _skill_open(self, agent: str, target: str):
        return self._articulate(agent, target, True)

    def _skill_close(self, agent: str, target: str):
        return self._articulate(agent, target, False)

    def _articulate(self, agent: str, target: str, value: bool):
        world = self.world
        if target not in world.furniture:
            return self._fail(f"{target} is not furniture")
        furn = world.furniture[target]
        if not furn.affordances.openable:
            return self._fail(f"{target} is not openable")
        if not self._adjacent(agent, target):
            return self._fail(f"agent is not near {target}")
        furn.states.open = value
        return self._ok(revealed=(target, *world.objects_at(target)))

    def _state_target(self, target: str):
        if target in self.world.objects:
            return self.world.objects[target]
        if target in self.world.furniture:
            return self.world.furniture[target]
        return None

    def _skill_clean(self, agent: str, target: str):
        node = self._state_target(target)
        if node is None:
            return self._fail(f"{target} does not exist")
        if not node.affordances.cleanable:
            return self._fail(f"{target} is not cleanable")
        if not self._adjacent(agent, target):
            return self._fail(f"agent is not near {target}")
        if (
            self.config.clean_requires_faucet
            and node.affordances.fillable
            and not self._adjacent_to_faucet(agent)
        ):
            return self._fail("cleaning requires a faucet nearby")
        node.states.clean = True
        return self._ok(revealed=(target,))

    def _skill_fill(self, agent: str, target: str):
        world = self.world
        if target not in world.objects:
            return self._fail(f"{target} is not an object")
        obj = world.objects[target]
        if not obj.affordances.fillable:
            return self._fail(f"{target} is not fillable")
        held = world.agents[agent].held == target
        if not held and not self._adjacent(agent, target):
            return self._fail(f"agent is not near {target}")
        if not self._adjacent_to_faucet(agent):
            return self._fail("no faucet nearby")
        obj.states.filled = True
        return self._ok(revealed=(target,))

    def _skill_pour(self, agent: str, target: str):
        world = self.world
        held_name = world.agents[agent].held
        if held_name is None:
            return self._fail("nothing is held to pour from")
        held = world.objects[held_name]
        if not held.affordances.fillable or not held.states.filled:
            return self._fail(f"{held_name} holds no liquid")
        node = self._state_target(target)
        if node is None or not node.affordances.fillable:
            return self._fail(f"{target} is not fillable")
        if not self._adjacent(agent, target):
            return self._fail(f"agent is not near {target}")
        node.states.filled = True
        if self.config.pour_empties_source:
            held.states.filled = False
        return self._ok(poured_from=held_name, revealed=(target,))

    def _skill_poweron(self, agent: str, target: str):
        return self._power(agent, target, True)

    def _skill_poweroff(self, agent: str, target: str):
        return self._power(agent, target, False)

    def _power(self, agent: str, target: str, value: bool):
        node = self._state_target(target)
        if node is None:
            return self._fail(f"{target} does not exist")
        if not node.affordances.powerable:
            return self._fail(f"{target} is not powerable")
        if not self._adjacent(agent, target):
            return self._fail(f"agent is not near {target}")
        node.states.powered = value
        return self._ok(revealed=(target,))

    def _skill_wait(self, agent: str):
        return self._ok()

    def _skill_done(self, agent: str):
        self.done.add(agent)
        return self._ok()

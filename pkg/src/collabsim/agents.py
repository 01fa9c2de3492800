"""Policies and planner control loops.

A policy decides the next skill call for an agent (decentralized) or for
both agents (centralized).  The controller triggers a decision whenever an
agent is idle and something has changed since its last decision, validates
every emitted call against the dynamic grammar over the deciding agent's
observed entities, and enforces the planning-cycle caps.

The heuristic expert is privileged: it reads the ground-truth evaluation
function, orders sub-tasks by the temporal DAG, resolves argument ties up
front, assigns rearrangements to the nearest idle agent, and routes all
state-modifying sub-tasks to the human.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .errors import UnplannableError
from .evaluation import EvaluationFunction, Proposition, eval_proposition_at
from .grammar import GrammarInstance, grammar_for_view
from .skills import HUMAN, Simulator, SkillCall, SkillResult
from .world import Relation, WorldGraph, floor_name, snapshot, summarize

DECENTRALIZED_CYCLE_CAP = 50
CENTRALIZED_CYCLE_CAP = 100


@dataclass
class Observation:
    agent: str
    role: str
    instruction: str
    world_summary: str
    action_history: list[str]
    step: int


@dataclass
class ControllerConfig:
    mode: str = "decentralized"  # single | centralized | decentralized
    cycle_cap: Optional[int] = None

    def cap(self) -> int:
        if self.cycle_cap is not None:
            return self.cycle_cap
        return CENTRALIZED_CYCLE_CAP if self.mode == "centralized" else DECENTRALIZED_CYCLE_CAP


class Policy:
    """Decentralized policy interface; ``None`` means stay idle until the
    partner completes something."""

    def decide(self, obs: Observation) -> Optional[SkillCall]:
        raise NotImplementedError

    def reset(self) -> None:
        pass


class CentralizedPolicy:
    def decide_pair(
        self, observations: dict[str, Observation], idle: list[str]
    ) -> dict[str, Optional[SkillCall]]:
        raise NotImplementedError

    def reset(self) -> None:
        pass


class ScriptedPolicy(Policy):
    """Replays a fixed call list verbatim, then stays idle."""

    def __init__(self, calls: list[SkillCall]):
        self.calls = list(calls)
        self.cursor = 0

    def decide(self, obs: Observation) -> Optional[SkillCall]:
        if self.cursor >= len(self.calls):
            return None
        call = self.calls[self.cursor]
        self.cursor += 1
        return call

    def reset(self) -> None:
        self.cursor = 0


class WaitPolicy(Policy):
    """Waits forever; never calls Done."""

    def decide(self, obs: Observation) -> Optional[SkillCall]:
        return SkillCall.make("Wait")


class DonePolicy(Policy):
    def __init__(self):
        self.sent = False

    def decide(self, obs: Observation) -> Optional[SkillCall]:
        if self.sent:
            return None
        self.sent = True
        return SkillCall.make("Done")

    def reset(self) -> None:
        self.sent = False


# -- controller ---------------------------------------------------------------


@dataclass
class RunStats:
    decides_per_agent: dict = field(default_factory=dict)

    @property
    def total_decides(self) -> int:
        return sum(self.decides_per_agent.values())


class Controller:
    """Binds policies to a simulator and runs the episode to termination."""

    def __init__(
        self,
        sim: Simulator,
        config: ControllerConfig,
        policies: Optional[dict[str, Policy]] = None,
        central: Optional[CentralizedPolicy] = None,
        instruction: str = "",
    ):
        if config.mode == "centralized":
            if central is None:
                raise ValueError("centralized mode needs a central policy")
        elif policies is None or set(policies) != set(sim.roles):
            raise ValueError("one policy per agent required")
        self.sim = sim
        self.config = config
        self.policies = policies or {}
        self.central = central
        self.instruction = instruction
        self.stats = RunStats({a: 0 for a in sim.roles})
        self._pending = {a: True for a in sim.roles}
        # policies built before the simulator exists (e.g. from CLI specs)
        # receive their per-agent grammar provider here
        for agent, policy in self.policies.items():
            if getattr(policy, "grammar_provider", "missing") is None:
                policy.grammar_provider = lambda a=agent: self.grammar_for(a)

    # decision triggers: an idle agent decides when flagged pending; a
    # completion by any agent re-flags everyone idle
    def _flag_all(self) -> None:
        for agent in self._pending:
            self._pending[agent] = True

    def observation_for(self, agent: str) -> Observation:
        sim = self.sim
        history = []
        for result in sim.trace.results:
            if result.agent == agent:
                history.append(f"Agent_Action: {result.call.to_string()}")
                history.append(f"Action Result: {result.message}")
            else:
                history.append(f"Other_Agent_Action: {result.call.to_string()}")
        return Observation(
            agent=agent,
            role=sim.roles[agent],
            instruction=self.instruction,
            world_summary=summarize(sim.observed[agent]),
            action_history=history,
            step=sim.step_index,
        )

    def grammar_for(self, agent: str) -> GrammarInstance:
        return grammar_for_view(self.sim.observed[agent], self.sim.roles[agent])

    def _validate(self, agent: str, call: Optional[SkillCall]) -> Optional[SkillCall]:
        """Grammar-check a policy output; invalid calls degrade to Wait."""
        if call is None:
            return None
        grammar = self.grammar_for(agent)
        try:
            return grammar.validate_and_parse(call.to_string())
        except Exception:
            return SkillCall.make("Wait")

    def _capped(self, agent: str) -> bool:
        return self.stats.decides_per_agent[agent] >= self.config.cap()

    def _centralized_capped(self) -> bool:
        return self.stats.total_decides >= self.config.cap()

    def run_step(self) -> list[SkillResult]:
        sim = self.sim
        idle = sim.idle_agents()
        if self.config.mode == "centralized":
            if idle and not self._centralized_capped() and any(
                self._pending[a] for a in idle
            ):
                observations = {a: self.observation_for(a) for a in sim.roles}
                decisions = self.central.decide_pair(observations, idle)
                self.stats.decides_per_agent[idle[0]] += 1
                for agent in idle:
                    call = self._validate(agent, decisions.get(agent))
                    self._pending[agent] = False
                    if call is not None:
                        sim.schedule_skill(agent, call)
        else:
            for agent in idle:
                if self._capped(agent) or not self._pending[agent]:
                    continue
                self.stats.decides_per_agent[agent] += 1
                call = self._validate(agent, self.policies[agent].decide(self.observation_for(agent)))
                self._pending[agent] = False
                if call is not None:
                    sim.schedule_skill(agent, call)
        results = sim.step()
        if results:
            self._flag_all()
        for result in results:
            self._pending[result.agent] = True
        return results

    def run(self):
        while not self.sim.terminated:
            self.run_step()
        return self.sim.trace


# -- heuristic expert --------------------------------------------------------


@dataclass
class ExpertJob:
    """An ordered call chain satisfying one or more propositions."""

    calls: list
    prop_indices: list
    needs_human: bool
    anchor: str  # entity used for the nearest-agent heuristic


@dataclass
class ExpertPlan:
    layers: list  # list of list[ExpertJob]
    assignments: dict = field(default_factory=dict)  # (layer, job index) -> agent

    def queues(self, agents: dict[str, str]) -> dict[str, list]:
        """Flatten to per-agent ordered queues with layer boundaries kept."""
        queues: dict[str, list] = {a: [] for a in agents}
        for layer_index, layer in enumerate(self.layers):
            for job_index, job in enumerate(layer):
                agent = self.assignments[(layer_index, job_index)]
                queues[agent].extend(job.calls)
        for agent in queues:
            queues[agent].append(SkillCall.make("Done"))
        return queues


_PLACEMENT_PREDICATES = ("is_on_top", "is_inside", "is_in_room", "is_on_floor")
_STATE_SKILL = {
    "is_clean": "Clean",
    "is_filled": "Fill",
    "is_powered_on": "PowerOn",
    "is_powered_off": "PowerOff",
}


def _layers_of(fn: EvaluationFunction) -> list[list[int]]:
    n = len(fn.propositions)
    if fn.temporal.groups is not None:
        grouped = {i for g in fn.temporal.groups for i in g}
        layers = [list(g) for g in fn.temporal.groups]
        loose = [i for i in range(n) if i not in grouped]
        if loose:
            if layers:
                layers[0] = loose + layers[0]
            else:
                layers = [loose]
        return layers
    # Kahn levels over the edge set
    preds: dict[int, set[int]] = {i: set() for i in range(n)}
    for u, v in fn.temporal.edges:
        preds[v].add(u)
    level = {}
    remaining = set(range(n))
    current = 0
    while remaining:
        ready = sorted(
            i for i in remaining if all(p in level for p in preds[i])
        )
        if not ready:
            raise UnplannableError("temporal graph is cyclic")
        for i in ready:
            level[i] = current
            remaining.discard(i)
        current += 1
    layers = [[] for _ in range(current)]
    for i in sorted(level):
        layers[level[i]].append(i)
    return [layer for layer in layers if layer]


def _resolve_ties(fn: EvaluationFunction, world: WorldGraph) -> dict[tuple[int, int], str]:
    """Fix one entity per (proposition, slot) for every tie constraint."""
    fixed: dict[tuple[int, int], str] = {}
    for tie in fn.ties:
        members = list(zip(tie.proposition_indices, tie.arg_indices))
        if tie.kind == "same":
            candidate_lists = []
            for prop_index, slot in members:
                prop = fn.propositions[prop_index]
                if slot >= len(prop.arg_lists):
                    raise UnplannableError("tie references a missing argument slot")
                candidate_lists.append(list(prop.arg_lists[slot]))
            shared = [c for c in candidate_lists[0] if all(c in lst for lst in candidate_lists[1:])]
            if not shared:
                raise UnplannableError("no consistent shared argument for SameArgConstraint")
            choice = shared[0]
            for prop_index, slot in members:
                fixed[(prop_index, slot)] = choice
        else:
            used: set[str] = set()
            for prop_index, slot in members:
                prop = fn.propositions[prop_index]
                options = [e for e in prop.arg_lists[slot] if e not in used]
                if not options:
                    raise UnplannableError("no distinct argument left for DifferentArgConstraint")
                fixed[(prop_index, slot)] = options[0]
                used.add(options[0])
    return fixed


def _placement_plan(
    prop_index: int,
    prop: Proposition,
    fixed: dict,
    world: WorldGraph,
) -> list[tuple[str, str, str]]:
    """(object, relation, furniture) placements realizing one proposition."""
    subjects = list(prop.arg_lists[0])
    if (prop_index, 0) in fixed:
        chosen = fixed[(prop_index, 0)]
        subjects = [chosen] + [s for s in subjects if s != chosen]
    subjects = subjects[: prop.number]

    if prop.predicate == "is_on_floor":
        return [(s, "on", floor_name(world.room_of(s))) for s in subjects]

    targets = list(prop.arg_lists[1])
    if (prop_index, 1) in fixed:
        chosen = fixed[(prop_index, 1)]
        targets = [chosen] + [t for t in targets if t != chosen]
    if prop.predicate == "is_in_room":
        rooms = [t for t in targets if t in world.rooms]
        if not rooms:
            raise UnplannableError(f"no valid room for proposition {prop_index}")
        return [(s, "on", floor_name(rooms[0])) for s in subjects]

    relation = "on" if prop.predicate == "is_on_top" else "within"
    valid = []
    for t in targets:
        furn = world.furniture.get(t)
        if furn is None:
            continue
        if relation == "on" and not furn.has_surface:
            continue
        if relation == "within" and not furn.affordances.is_receptacle:
            continue
        valid.append(t)
    if not valid:
        raise UnplannableError(f"no valid furniture target for proposition {prop_index}")
    target = valid[0] if (prop_index, 1) not in fixed else fixed[(prop_index, 1)]
    if prop.arg_match or (prop_index, 1) in fixed:
        return [(s, relation, target) for s in subjects]
    return [(s, relation, valid[0]) for s in subjects]


def heuristic_expert_plan(
    fn: EvaluationFunction,
    world: WorldGraph,
    roles: dict[str, str],
    cfg=None,
) -> ExpertPlan:
    """Pre-plan per-agent queues from the ground-truth evaluation function.

    Raises UnplannableError when no capability- and tie-consistent plan
    exists.
    """
    from .predicates import DEFAULT_CONFIG

    cfg = cfg or DEFAULT_CONFIG
    planning = world.copy()
    initial = snapshot(planning, 0)
    fixed = _resolve_ties(fn, planning)
    layers = _layers_of(fn)
    humans = [a for a, r in roles.items() if r == HUMAN]
    no_temporal = not fn.temporal.edges

    entity_uses: dict[str, int] = {}
    for prop in fn.propositions:
        for entities in prop.arg_lists:
            for entity in entities:
                entity_uses[entity] = entity_uses.get(entity, 0) + 1

    def safe_to_skip(prop: Proposition) -> bool:
        # skipping is only sound when no other proposition touches the same
        # entities (the plan must not disturb a pre-satisfied proposition)
        return all(
            entity_uses[e] == 1 for entities in prop.arg_lists for e in entities
        )

    plan_layers: list[list[ExpertJob]] = []
    for layer in layers:
        placements: dict[int, list[tuple[str, str, str]]] = {}
        state_props: list[int] = []
        next_to_props: list[int] = []
        for i in layer:
            prop = fn.propositions[i]
            if (
                no_temporal
                and safe_to_skip(prop)
                and eval_proposition_at(prop, initial, cfg)
            ):
                continue  # already satisfied at scene start; leave untouched
            if prop.predicate in _PLACEMENT_PREDICATES:
                placements[i] = _placement_plan(i, prop, fixed, planning)
            elif prop.predicate in _STATE_SKILL:
                state_props.append(i)
            elif prop.predicate == "is_next_to":
                next_to_props.append(i)
            elif prop.predicate in ("is_dirty", "is_empty", "is_powered_off"):
                if prop.predicate == "is_powered_off":
                    state_props.append(i)
                else:
                    raise UnplannableError(
                        f"no skill can satisfy {prop.predicate} (proposition {i})"
                    )
            else:
                raise UnplannableError(f"cannot plan predicate {prop.predicate}")

        # attach next_to props to the placement of their first argument
        constrained: dict[str, tuple[str, int]] = {}  # object -> (reference, prop)
        standalone_next_to: list[int] = []
        placed_objects = {
            obj: i for i, plan in placements.items() for obj, _, _ in plan
        }
        for i in next_to_props:
            prop = fn.propositions[i]
            a = fixed.get((i, 0), prop.arg_lists[0][0])
            b = fixed.get((i, 1), prop.arg_lists[1][0])
            if a in placed_objects:
                constrained[a] = (b, i)
            elif b in placed_objects:
                constrained[b] = (a, i)
            else:
                standalone_next_to.append(i)

        # chains: props sharing a subject entity stay on one agent, ordered
        anchor_of: dict[int, str] = {}
        for i, plan in placements.items():
            anchor_of[i] = plan[0][0]
        for i in state_props:
            anchor_of[i] = fn.propositions[i].arg_lists[0][0]

        chain_of: dict[str, list[int]] = {}
        for i in sorted(anchor_of):
            chain_of.setdefault(anchor_of[i], []).append(i)
        # a next_to reference object must be placed before its dependent:
        # merge the dependent's chain into the reference's chain
        merged = True
        while merged:
            merged = False
            for obj, (reference, _) in list(constrained.items()):
                if reference in chain_of and obj in chain_of and reference != obj:
                    ref_chain, obj_chain = chain_of[reference], chain_of[obj]
                    if ref_chain is not obj_chain:
                        ref_chain.extend(obj_chain)
                        for i in obj_chain:
                            anchor_of[i] = reference
                        chain_of[obj] = ref_chain
                        merged = True

        jobs: list[ExpertJob] = []
        emitted_chains = set()
        for obj in sorted(chain_of):
            chain = tuple(chain_of[obj])
            if chain in emitted_chains:
                continue
            emitted_chains.add(chain)
            calls: list[SkillCall] = []
            covered: list[int] = []
            needs_human = False
            for i in chain:
                prop = fn.propositions[i]
                if i in placements:
                    for subject, relation, furniture in placements[i]:
                        reference, next_prop = constrained.get(subject, (None, None))
                        furn = planning.furniture.get(furniture)
                        if (
                            furn is not None
                            and relation == "within"
                            and furn.affordances.openable
                            and not furn.states.open
                        ):
                            calls.append(SkillCall.make("Navigate", furniture))
                            calls.append(SkillCall.make("Open", furniture))
                            furn.states.open = True
                        if reference is not None:
                            calls.append(
                                SkillCall.make(
                                    "Rearrange", subject, relation, furniture,
                                    "next_to", reference,
                                )
                            )
                            covered.append(next_prop)
                        else:
                            calls.append(
                                SkillCall.make(
                                    "Rearrange", subject, relation, furniture,
                                    "none", "none",
                                )
                            )
                        _plan_move(planning, subject, relation, furniture)
                    covered.append(i)
                else:
                    skill = _STATE_SKILL.get(fn.propositions[i].predicate, "PowerOff")
                    if fn.propositions[i].predicate == "is_powered_off":
                        skill = "PowerOff"
                    subject = fixed.get((i, 0), prop.arg_lists[0][0])
                    needs_human = True
                    calls.append(SkillCall.make("Navigate", subject))
                    calls.append(SkillCall.make(skill, subject))
                    covered.append(i)
            if calls:
                jobs.append(ExpertJob(calls, covered, needs_human, obj))

        for i in standalone_next_to:
            prop = fn.propositions[i]
            a = fixed.get((i, 0), prop.arg_lists[0][0])
            b = fixed.get((i, 1), prop.arg_lists[1][0])
            if b not in planning.objects:
                raise UnplannableError(f"cannot realize is_next_to for proposition {i}")
            parent = planning.objects[b].placement.parent
            jobs.append(
                ExpertJob(
                    [SkillCall.make("Rearrange", a, "on", parent, "next_to", b)],
                    [i],
                    False,
                    a,
                )
            )
            _plan_move(planning, a, "on", parent)

        if any(job.needs_human for job in jobs) and not humans:
            raise UnplannableError("state-modifying sub-tasks need a human agent")
        plan_layers.append(jobs)

    plan = ExpertPlan(plan_layers)
    _assign_jobs(plan, world, roles)
    return plan


def _plan_move(planning: WorldGraph, obj: str, relation: str, furniture: str) -> None:
    from .world import Placement

    kind = Relation.ON if relation == "on" else Relation.WITHIN
    if obj in planning.objects:
        planning.place_object(obj, Placement(kind, furniture))


def _assign_jobs(plan: ExpertPlan, world: WorldGraph, roles: dict[str, str]) -> None:
    positions = {a: world.agents[a].position for a in roles}
    humans = [a for a, r in sorted(roles.items()) if r == HUMAN]
    everyone = sorted(roles)
    tracking = world.copy()
    for layer_index, layer in enumerate(plan.layers):
        load = {a: 0 for a in roles}
        for job_index, job in enumerate(layer):
            candidates = humans if job.needs_human else everyone
            anchor_box = (
                tracking.entity_box(job.anchor)
                if tracking.has_entity(job.anchor)
                else None
            )

            def distance(agent: str) -> float:
                if anchor_box is None:
                    return 0.0
                return positions[agent].horizontal_distance(anchor_box.center)

            agent = min(candidates, key=lambda a: (load[a], round(distance(a), 6), a))
            plan.assignments[(layer_index, job_index)] = agent
            load[agent] += 1
            for call in job.calls:
                if call.skill == "Rearrange":
                    _plan_move(tracking, call.args[0], call.args[1], call.args[2])
                    if call.args[0] in tracking.objects:
                        positions[agent] = tracking.objects[call.args[0]].box.center
                elif call.skill == "Navigate" and tracking.has_entity(call.args[0]):
                    positions[agent] = tracking.entity_box(call.args[0]).center


class ExpertCentralPolicy(CentralizedPolicy):
    """Walks the expert plan layer by layer with completion barriers."""

    def __init__(self, plan: ExpertPlan, sim: Simulator):
        self.sim = sim
        self.queues_by_layer: list[dict[str, list]] = []
        agents = sim.roles
        for layer_index, layer in enumerate(plan.layers):
            queues: dict[str, list] = {a: [] for a in agents}
            for job_index, job in enumerate(layer):
                queues[plan.assignments[(layer_index, job_index)]].extend(job.calls)
            self.queues_by_layer.append(queues)
        self.layer = 0
        self.done_sent: set[str] = set()

    def _layer_finished(self, idle: list[str]) -> bool:
        queues = self.queues_by_layer[self.layer]
        return all(not q for q in queues.values()) and set(idle) == set(self.sim.roles)

    def decide_pair(self, observations, idle):
        decisions: dict[str, Optional[SkillCall]] = {a: None for a in self.sim.roles}
        while self.layer < len(self.queues_by_layer) and self._layer_finished(idle):
            self.layer += 1
        if self.layer >= len(self.queues_by_layer):
            for agent in idle:
                if agent not in self.done_sent:
                    self.done_sent.add(agent)
                    decisions[agent] = SkillCall.make("Done")
            return decisions
        queues = self.queues_by_layer[self.layer]
        for agent in idle:
            if queues[agent]:
                decisions[agent] = queues[agent].pop(0)
        return decisions


# -- LLM-backed policy --------------------------------------------------------


@dataclass
class LLMConfig:
    base_url: str = ""
    model: str = ""
    max_retries: int = 3
    temperature: float = 0.0
    timeout: float = 60.0
    cassette_path: Optional[str] = None
    record: bool = False


_PROMPTS_DIR = Path(__file__).parent / "prompts"


def load_prompt(name: str) -> str:
    return (_PROMPTS_DIR / name).read_text()


class LLMPolicy(Policy):
    """ReAct-style policy against a chat-completions endpoint.

    ``transport`` maps a message list to completion text; the default posts
    to ``{base_url}/chat/completions``.  With a cassette configured,
    completions are replayed (or recorded) for deterministic offline runs.
    """

    def __init__(
        self,
        config: LLMConfig,
        grammar_provider: Optional[Callable[[], GrammarInstance]] = None,
        transport: Optional[Callable[[list[dict]], str]] = None,
        rag_store: Optional["RagStore"] = None,
    ):
        self.config = config
        self.grammar_provider = grammar_provider
        self.transport = transport or self._http_transport
        self.rag_store = rag_store
        self._cassette: Optional[list[str]] = None
        self._cassette_cursor = 0
        if config.cassette_path and not config.record:
            data = json.loads(Path(config.cassette_path).read_text())
            self._cassette = list(data["completions"])
        self._recorded: list[str] = []

    def _http_transport(self, messages: list[dict]) -> str:
        import httpx

        response = httpx.post(
            f"{self.config.base_url.rstrip('/')}/chat/completions",
            json={
                "model": self.config.model,
                "messages": messages,
                "temperature": self.config.temperature,
            },
            timeout=self.config.timeout,
        )
        response.raise_for_status()
        return response.json()["choices"][0]["message"]["content"]

    def _complete(self, messages: list[dict]) -> str:
        if self._cassette is not None:
            if self._cassette_cursor >= len(self._cassette):
                raise IndexError("cassette exhausted")
            text = self._cassette[self._cassette_cursor]
            self._cassette_cursor += 1
            return text
        text = self.transport(messages)
        if self.config.record:
            self._recorded.append(text)
        return text

    def save_cassette(self) -> None:
        if self.config.cassette_path and self.config.record:
            Path(self.config.cassette_path).write_text(
                json.dumps({"completions": self._recorded}, indent=2)
            )

    def build_messages(self, obs: Observation, note: str = "") -> list[dict]:
        role_description = load_prompt(
            "role_human.txt" if obs.role == HUMAN else "role_robot.txt"
        )
        system = load_prompt("decentralized_react.txt").replace(
            "{agent_role_description}", role_description.strip()
        )
        rag_block = ""
        if self.rag_store is not None:
            exemplar = self.rag_store.retrieve(obs.instruction)
            if exemplar is not None:
                rag_block = (
                    "\nHere is an example of a successfully completed task:\n"
                    + exemplar
                    + "\n"
                )
        user = load_prompt("decentralized_user.txt")
        user = user.replace("{task_description}", obs.instruction)
        user = user.replace("{world_description}", obs.world_summary)
        user = user.replace("{history}", "\n".join(obs.action_history) or "(none)")
        if note:
            user += f"\n{note}"
        return [
            {"role": "system", "content": system + rag_block},
            {"role": "user", "content": user},
        ]

    def extract_action(self, completion: str) -> Optional[str]:
        for line in completion.splitlines():
            line = line.strip()
            if not line or line.startswith("Thought:") or line == "Assigned!":
                continue
            return line
        return None

    def decide(self, obs: Observation) -> Optional[SkillCall]:
        if self.grammar_provider is None:
            raise ValueError("LLM policy has no grammar provider bound")
        grammar = self.grammar_provider()
        note = ""
        for _ in range(self.config.max_retries + 1):
            completion = self._complete(self.build_messages(obs, note))
            action = self.extract_action(completion)
            if action is not None:
                try:
                    call = grammar.validate_and_parse(action)
                except Exception as exc:
                    note = f"Your previous action was rejected: {exc}"
                    continue
                if isinstance(call, SkillCall):
                    return call
                note = "Perception tools are unavailable; choose a skill."
                continue
            note = "No action line found; answer with a single action call."
        return SkillCall.make("Wait")


# -- retrieval-augmented exemplars ---------------------------------------------


_TOKEN = re.compile(r"[a-z0-9_]+")


def _tokens(text: str) -> Counter:
    return Counter(_TOKEN.findall(text.lower()))


def token_overlap_similarity(a: str, b: str) -> float:
    """Cosine similarity over token counts."""
    ta, tb = _tokens(a), _tokens(b)
    if not ta or not tb:
        return 0.0
    dot = sum(count * tb.get(token, 0) for token, count in ta.items())
    norm = math.sqrt(sum(c * c for c in ta.values())) * math.sqrt(
        sum(c * c for c in tb.values())
    )
    return dot / norm if norm else 0.0


class RagStore:
    """Instruction -> successful trace exemplars with pluggable similarity."""

    def __init__(self, similarity: Callable[[str, str], float] = token_overlap_similarity):
        self.similarity = similarity
        self.entries: list[tuple[str, str]] = []

    def add(self, instruction: str, trace_text: str) -> None:
        self.entries.append((instruction, trace_text))

    def retrieve(self, instruction: str) -> Optional[str]:
        if not self.entries:
            return None
        best = max(
            range(len(self.entries)),
            key=lambda i: (self.similarity(instruction, self.entries[i][0]), -i),
        )
        return self.entries[best][1]


def rag_retrieve(store: RagStore, instruction: str) -> Optional[str]:
    return store.retrieve(instruction)

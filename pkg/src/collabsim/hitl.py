"""Human-in-the-loop session service.

One WebSocket session drives one episode: the client steers the human agent
with grammar-validated commands while a configured machine partner (expert
plan follower) runs the robot agent; a two-human mode pairs two clients
instead.  Simulation time advances only while a skill is in flight, with
optional wall-clock pacing.  On termination the client receives the
evaluation report, including the failure explanation, and may retry the
episode up to a configured number of times.

Message schema: docs/hitl-protocol.md.  One JSON object per text frame.
"""

from __future__ import annotations

import asyncio
from dataclasses import dataclass, field
from typing import Optional

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .agents import ExpertPlan, heuristic_expert_plan
from .errors import CollabSimError, UnplannableError
from .evaluation import Evaluator
from .grammar import grammar_for_view
from .harness import HUMAN_AGENT, ROBOT_AGENT, make_simulator
from .metrics import compute_metrics
from .sceneio import EpisodeSpec, SceneSpec
from .skills import HUMAN, SimConfig, Simulator, SkillCall, SkillResult
from .world import Relation, summarize

PROTOCOL_VERSION = 1


@dataclass
class HitlConfig:
    scene: SceneSpec
    episodes: list
    partner: str = "expert"  # expert | human | none (single-user) | llm:URL | policy:
    sim: SimConfig = field(default_factory=lambda: SimConfig(observability="full"))
    tick_hz: Optional[float] = None  # None disables wall-clock pacing
    max_retries: int = 3
    partner_factory: Optional[object] = None  # () -> Policy, for policy: partners


class ExpertPartner:
    """Privileged robot partner following its share of the expert plan.

    Holds at a layer barrier until every proposition of the preceding layers
    is satisfied in the true world; gives up (Done) when the human has left
    and it cannot make progress alone.
    """

    def __init__(self, sim: Simulator, plan: ExpertPlan, fn, agent: str):
        self.sim = sim
        self.fn = fn
        self.agent = agent
        self.queues: list[list[SkillCall]] = []
        for layer_index, layer in enumerate(plan.layers):
            queue = []
            for job_index, job in enumerate(layer):
                if plan.assignments[(layer_index, job_index)] == agent:
                    queue.extend(job.calls)
            self.queues.append(queue)
        self.layer = 0
        self.done_sent = False

    def _layer_props_satisfied(self, upto: int) -> bool:
        from .evaluation import eval_proposition_at
        from .world import snapshot

        state = snapshot(self.sim.world, self.sim.step_index)
        layers = (
            self.fn.temporal.groups
            if self.fn.temporal.groups is not None
            else [list(range(len(self.fn.propositions)))]
        )
        for layer in list(layers)[: upto + 1]:
            for index in layer:
                if not eval_proposition_at(self.fn.propositions[index], state):
                    return False
        return True

    def decide(self) -> Optional[SkillCall]:
        if self.done_sent:
            return None
        while self.layer < len(self.queues) and not self.queues[self.layer]:
            if not self._layer_props_satisfied(self.layer):
                break
            self.layer += 1
        if self.layer >= len(self.queues):
            self.done_sent = True
            return SkillCall.make("Done")
        queue = self.queues[self.layer]
        if queue:
            return queue.pop(0)
        human_done = all(
            agent in self.sim.done
            for agent, role in self.sim.roles.items()
            if role == HUMAN
        )
        if human_done:
            self.done_sent = True
            return SkillCall.make("Done")
        return None


class PolicyPartner:
    """Machine partner driven by an arbitrary decentralized policy
    (e.g. the LLM client); observation built from the partner's view."""

    def __init__(self, sim: Simulator, policy, agent: str, instruction: str):
        from .agents import Observation  # local import: hitl <-> agents

        self._observation_type = Observation
        self.sim = sim
        self.policy = policy
        self.agent = agent
        self.instruction = instruction
        self.done_sent = False
        if getattr(policy, "grammar_provider", "missing") is None:
            policy.grammar_provider = lambda: grammar_for_view(
                sim.observed[agent], sim.roles[agent]
            )

    def decide(self) -> Optional[SkillCall]:
        if self.done_sent:
            return None
        history = []
        for result in self.sim.trace.results:
            if result.agent == self.agent:
                history.append(f"Agent_Action: {result.call.to_string()}")
                history.append(f"Action Result: {result.message}")
            else:
                history.append(f"Other_Agent_Action: {result.call.to_string()}")
        obs = self._observation_type(
            agent=self.agent,
            role=self.sim.roles[self.agent],
            instruction=self.instruction,
            world_summary=summarize(self.sim.observed[self.agent]),
            action_history=history,
            step=self.sim.step_index,
        )
        call = self.policy.decide(obs)
        if call is not None and call.skill == "Done":
            self.done_sent = True
        return call


def _entity_payload(sim: Simulator, agent: str) -> dict:
    graph = sim.observed[agent].graph
    return {
        "objects": sorted(graph.objects),
        "furniture": sorted(graph.furniture),
        "rooms": sorted(graph.rooms),
    }


def _object_record(graph, name: str) -> dict:
    obj = graph.objects[name]
    placement = obj.placement
    if placement.relation is Relation.HELD:
        room = graph.agents[placement.parent].room
    else:
        room = graph.furniture[placement.parent].room
    return {
        "name": name,
        "category": obj.category,
        "parent": placement.parent,
        "relation": placement.relation.value,
        "room": room,
        "states": [
            flag
            for flag in ("clean", "filled", "powered", "open")
            if getattr(obj.states, flag)
        ],
    }


class SessionState:
    """One episode attempt shared by the session's clients."""

    def __init__(self, config: HitlConfig, episode: EpisodeSpec):
        self.config = config
        self.episode = episode
        mode = "single" if config.partner == "none" else "decentralized"
        self.sim = make_simulator(config.scene, episode, config.sim, mode=mode)
        self.partner = None
        if config.partner == "expert":
            try:
                plan = heuristic_expert_plan(
                    episode.evaluation, self.sim.world, self.sim.roles
                )
            except UnplannableError:
                plan = ExpertPlan(layers=[])
            self.partner = ExpertPartner(self.sim, plan, episode.evaluation, ROBOT_AGENT)
        elif config.partner.startswith("llm:"):
            from .agents import LLMConfig, LLMPolicy

            policy = LLMPolicy(
                LLMConfig(base_url=config.partner.split(":", 1)[1]),
                grammar_provider=None,
            )
            self.partner = PolicyPartner(
                self.sim, policy, ROBOT_AGENT, episode.instruction
            )
        elif config.partner.startswith("policy:"):
            # injected programmatically through HitlConfig.partner_factory
            pass
        if getattr(config, "partner_factory", None) is not None:
            policy = config.partner_factory()
            self.partner = PolicyPartner(
                self.sim, policy, ROBOT_AGENT, episode.instruction
            )
        self.report = None
        self.last_sent: dict[str, dict] = {}

    def grammar(self, agent: str):
        return grammar_for_view(self.sim.observed[agent], self.sim.roles[agent])

    def state_diff(self, agent: str) -> dict:
        graph = self.sim.observed[agent].graph
        changed = []
        for name in graph.objects:
            record = _object_record(graph, name)
            if self.last_sent.get(f"{agent}:{name}") != record:
                self.last_sent[f"{agent}:{name}"] = record
                changed.append(record)
        agents = [
            {
                "name": a.name,
                "room": a.room,
                "held": a.held,
                "position": [round(a.position.x, 3), round(a.position.y, 3)],
            }
            for a in graph.agents.values()
        ]
        furniture_states = []
        for name, furn in graph.furniture.items():
            if furn.affordances.openable:
                record = {"name": name, "open": furn.states.open}
                if self.last_sent.get(f"{agent}:furn:{name}") != record:
                    self.last_sent[f"{agent}:furn:{name}"] = record
                    furniture_states.append(record)
        return {
            "kind": "state_diff",
            "step": self.sim.step_index,
            "objects": changed,
            "furniture": furniture_states,
            "agents": agents,
        }

    def finalize_report(self) -> dict:
        evaluator = Evaluator(self.episode.evaluation)
        for state in self.sim.trace.states:
            evaluator.step(state)
        self.report = evaluator.finalize()
        metrics = compute_metrics(
            self.sim.trace, self.report, self.sim.roles, 0,
            task_type=self.episode.task_type, episode=self.episode.name,
        )
        return {
            "kind": "report",
            "success": self.report.success,
            "percent_complete": self.report.pc,
            "explanation": self.report.failure_explanation,
            "sim_steps": metrics.sim_steps,
            "termination": self.sim.trace.termination,
        }


class Session:
    """Serializes all client messages into one deterministic event order."""

    def __init__(self, config: HitlConfig, episode: EpisodeSpec, session_id: int):
        self.config = config
        self.episode = episode
        self.session_id = session_id
        self.retries_left = config.max_retries
        self.state = SessionState(config, episode)
        self.sockets: dict[str, WebSocket] = {}
        self.traces: list = []
        self.lock = asyncio.Lock()

    def agents_for_clients(self) -> list[str]:
        if self.config.partner == "human":
            return [HUMAN_AGENT, ROBOT_AGENT]
        return [HUMAN_AGENT]

    async def send(self, agent: str, message: dict) -> None:
        socket = self.sockets.get(agent)
        if socket is not None:
            await socket.send_json(message)

    async def broadcast(self, message: dict) -> None:
        for agent in self.sockets:
            await self.send(agent, message)

    def init_message(self, agent: str) -> dict:
        sim = self.state.sim
        return {
            "kind": "session_init",
            "protocol": PROTOCOL_VERSION,
            "session": self.session_id,
            "episode": self.episode.name,
            "instruction": self.episode.instruction,
            "agent": agent,
            "role": sim.roles[agent],
            "world": summarize(sim.observed[agent]),
            "entities": _entity_payload(sim, agent),
            "skills": list(self.state.grammar(agent).skills),
            "retries_left": self.retries_left,
        }

    async def _route_result(self, result: SkillResult) -> None:
        for agent in self.sockets:
            if result.agent == agent:
                await self.send(
                    agent,
                    {
                        "kind": "result",
                        "step": result.completed_at_step,
                        "call": result.call.to_string(),
                        "status": result.status,
                        "message": result.message,
                    },
                )
            else:
                await self.send(
                    agent,
                    {
                        "kind": "partner_action",
                        "step": result.completed_at_step,
                        "agent": result.agent,
                        "call": result.call.to_string(),
                        "status": result.status,
                    },
                )
        for agent in self.sockets:
            await self.send(agent, self.state.state_diff(agent))

    async def _advance_while(self, waiting_agent: Optional[str]) -> None:
        """Step the simulator until the waiting agent's skill resolves (or,
        with no waiting agent, until the episode terminates)."""
        sim = self.state.sim
        partner = self.state.partner
        while not sim.terminated:
            if partner is not None and ROBOT_AGENT in sim.idle_agents():
                call = partner.decide()
                if call is not None:
                    try:
                        sim.schedule_skill(ROBOT_AGENT, call)
                    except CollabSimError:
                        pass
            if waiting_agent is not None and waiting_agent not in sim.in_progress:
                break
            if waiting_agent is None and not sim.in_progress and (
                partner is None or partner.done_sent or ROBOT_AGENT in sim.done
            ):
                if all(a in sim.done for a in sim.roles):
                    pass  # termination arrives on the next step
                else:
                    break
            results = sim.step()
            for result in results:
                await self._route_result(result)
            if self.config.tick_hz:
                await asyncio.sleep(1.0 / self.config.tick_hz)

    async def handle_command(self, agent: str, text: str) -> None:
        async with self.lock:
            sim = self.state.sim
            if sim.terminated:
                await self.send(agent, {"kind": "error", "error": "episode already finished"})
                return
            grammar = self.state.grammar(agent)
            try:
                call = grammar.validate_and_parse(text)
            except Exception as exc:
                await self.send(
                    agent,
                    {"kind": "result", "status": "rejected", "message": str(exc), "call": text},
                )
                return
            try:
                sim.schedule_skill(agent, call)
            except CollabSimError as exc:
                await self.send(
                    agent,
                    {"kind": "result", "status": "rejected", "message": str(exc), "call": text},
                )
                return
            await self._advance_while(agent)
            if call.skill == "Done" and not sim.terminated:
                await self._advance_while(None)
                if not sim.terminated and all(a in sim.done for a in sim.roles):
                    sim.step()
            if sim.terminated:
                await self._finish()

    async def _finish(self) -> None:
        self.traces.append(self.state.sim.trace)
        message = self.state.finalize_report()
        message["retries_left"] = self.retries_left
        await self.broadcast(message)

    async def handle_retry(self, agent: str) -> None:
        async with self.lock:
            if self.state.sim.terminated is None:
                await self.send(agent, {"kind": "error", "error": "episode still running"})
                return
            if self.retries_left <= 0:
                await self.send(agent, {"kind": "error", "error": "no retries left"})
                return
            self.retries_left -= 1
            self.state = SessionState(self.config, self.episode)
            for bound in self.sockets:
                await self.send(bound, self.init_message(bound))


def create_app(config: HitlConfig) -> FastAPI:
    app = FastAPI(title="collabsim HITL service")
    app.state.config = config
    app.state.sessions = []
    app.state.next_episode = 0
    lobby: list[Session] = []

    @app.get("/grammar")
    def grammar_dump() -> dict:
        episode = config.episodes[app.state.next_episode % len(config.episodes)]
        state = SessionState(config, episode)
        return {
            "human": state.grammar(HUMAN_AGENT).dump(),
            "robot": state.grammar(ROBOT_AGENT).dump()
            if ROBOT_AGENT in state.sim.roles
            else "",
        }

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "protocol": PROTOCOL_VERSION}

    @app.websocket("/session")
    async def session_socket(socket: WebSocket) -> None:
        await socket.accept()
        hello = await socket.receive_json()
        if hello.get("kind") != "hello":
            await socket.send_json({"kind": "error", "error": "expected hello"})
            await socket.close()
            return
        if hello.get("protocol") != PROTOCOL_VERSION:
            await socket.send_json(
                {
                    "kind": "error",
                    "error": f"protocol mismatch: server speaks {PROTOCOL_VERSION}",
                }
            )
            await socket.close()
            return

        if config.partner == "human" and lobby:
            session = lobby.pop(0)
            agent = ROBOT_AGENT
        else:
            episode = config.episodes[app.state.next_episode % len(config.episodes)]
            app.state.next_episode += 1
            session = Session(config, episode, session_id=len(app.state.sessions))
            app.state.sessions.append(session)
            agent = HUMAN_AGENT
            if config.partner == "human":
                lobby.append(session)
        session.sockets[agent] = socket

        if config.partner == "human" and agent == HUMAN_AGENT:
            await socket.send_json({"kind": "lobby", "waiting_for": "partner"})
            while ROBOT_AGENT not in session.sockets:
                # the lobby client idles until its partner binds
                await asyncio.sleep(0.01)
        if config.partner == "human" and agent == ROBOT_AGENT:
            for bound in list(session.sockets):
                await session.send(bound, session.init_message(bound))
        elif config.partner != "human":
            await session.send(agent, session.init_message(agent))

        try:
            while True:
                message = await socket.receive_json()
                kind = message.get("kind")
                if kind == "command":
                    await session.handle_command(agent, str(message.get("text", "")))
                elif kind == "retry":
                    await session.handle_retry(agent)
                elif kind == "bye":
                    await socket.close()
                    return
                else:
                    await socket.send_json(
                        {"kind": "error", "error": f"unknown message kind {kind!r}"}
                    )
        except WebSocketDisconnect:
            session.sockets.pop(agent, None)
            # client abandoned: episode is marked incomplete
            return

    return app


def serve_hitl(config: HitlConfig, host: str = "127.0.0.1", port: int = 8765) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port, log_level="warning")

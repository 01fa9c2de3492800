import json

import pytest

from collabsim.agents import (
    Controller,
    ControllerConfig,
    DonePolicy,
    LLMConfig,
    LLMPolicy,
    RagStore,
    ScriptedPolicy,
    WaitPolicy,
    heuristic_expert_plan,
    rag_retrieve,
    token_overlap_similarity,
)
from collabsim.errors import UnplannableError
from collabsim.evaluation import (
    EvaluationFunction,
    Proposition,
)
from collabsim.fixtures import FixtureRequest, bundled_scene, generate_fixtures
from collabsim.grammar import build_grammar
from collabsim.harness import run_episode
from collabsim.skills import HUMAN, ROBOT, SimConfig, SkillCall


def expert_run(episode, scene=None):
    scene = scene or bundled_scene()
    return run_episode(
        scene, episode, ControllerConfig(mode="centralized"),
        SimConfig(seed=episode.seed), expert=True,
    )


class TestScriptedPolicy:
    def test_replays_verbatim(self):
        calls = [SkillCall.make("Wait"), SkillCall.make("Done")]
        policy = ScriptedPolicy(calls)
        assert policy.decide(None) == calls[0]
        assert policy.decide(None) == calls[1]
        assert policy.decide(None) is None
        policy.reset()
        assert policy.decide(None) == calls[0]


class TestControllerCaps:
    def test_wait_policy_capped_at_50_decides(self):
        scene = bundled_scene()
        episode = generate_fixtures(FixtureRequest(scene, "constraint-free", count=1, seed=1))[0]
        run = run_episode(
            scene, episode, ControllerConfig(mode="decentralized"),
            SimConfig(seed=1, max_sim_steps=500),
            policies={"agent_0": WaitPolicy(), "agent_1": WaitPolicy()},
        )
        assert run.decides_per_agent["agent_0"] == 50
        assert run.decides_per_agent["agent_1"] == 50
        assert run.trace.termination == "StepTimeout"

    def test_invalid_call_degrades_to_wait(self):
        scene = bundled_scene()
        episode = generate_fixtures(FixtureRequest(scene, "constraint-free", count=1, seed=2))[0]
        # references an entity that does not exist: grammar rejects, Wait runs
        bogus = ScriptedPolicy([SkillCall.make("Pick", "lamp_0"), SkillCall.make("Done")])
        run = run_episode(
            scene, episode, ControllerConfig(mode="decentralized"),
            SimConfig(seed=2, max_sim_steps=300),
            policies={"agent_0": bogus, "agent_1": DonePolicy()},
        )
        skills = [r.call.skill for r in run.trace.results if r.agent == "agent_0"]
        assert skills[0] == "Wait"


class TestHeuristicExpert:
    def test_same_arg_tie_resolved_to_identical_target(self):
        scene = bundled_scene()
        episode = generate_fixtures(FixtureRequest(scene, "spatial", count=1, seed=8))[0]
        run = expert_run(episode, scene)
        assert run.report.success and run.metrics.percent_complete == 1.0
        placements = [
            r.call.args[2]
            for r in run.trace.results
            if r.call.skill == "Rearrange" and r.ok
        ]
        assert len(set(placements)) == 1  # both placements on the identical id

    def test_temporal_barrier_orders_layers(self):
        scene = bundled_scene()
        episode = generate_fixtures(
            FixtureRequest(scene, "temporal", count=1, seed=4, temporal_depth=3)
        )[0]
        run = expert_run(episode, scene)
        assert run.report.success
        groups = episode.eval_document.temporal_groups
        first_sat = [r.first_satisfied_step for r in run.report.records]
        for earlier, later in zip(groups, groups[1:]):
            assert max(first_sat[i] for i in earlier) < min(first_sat[i] for i in later)

    def test_state_subtasks_to_human_rearranges_split(self):
        scene = bundled_scene()
        episodes = generate_fixtures(FixtureRequest(scene, "heterogeneous", count=4, seed=6))
        for episode in episodes:
            run = expert_run(episode, scene)
            assert run.report.success
            for result in run.trace.results:
                if result.call.skill in ("Clean", "Fill", "PowerOn", "PowerOff"):
                    assert result.agent == "agent_1"

    def test_unplannable_state_without_human(self):
        from conftest import add_cup, make_two_room_world

        world = make_two_room_world()
        add_cup(world)
        world.add_agent("agent_0", "kitchen_1")
        fn = EvaluationFunction(
            propositions=(Proposition("is_clean", (("cup_0",),)),)
        )
        with pytest.raises(UnplannableError):
            heuristic_expert_plan(fn, world, {"agent_0": ROBOT})

    def test_unplannable_tie_without_common_target(self):
        from conftest import make_two_room_world
        from collabsim.evaluation import ArgTieConstraint
        from collabsim.geometry import Vec3
        from collabsim.world import Placement

        world = make_two_room_world()
        for name in ("a_0", "b_0"):
            world.add_object(name, "thing", Vec3(0.05, 0.05, 0.05))
            world.place_object(name, Placement.on("table_1"))
        world.add_agent("agent_1", "kitchen_1")
        fn = EvaluationFunction(
            propositions=(
                Proposition("is_on_top", (("a_0",), ("table_1",))),
                Proposition("is_on_top", (("b_0",), ("table_2",))),
            ),
            ties=(ArgTieConstraint("same", (0, 1), (1, 1)),),
        )
        with pytest.raises(UnplannableError):
            heuristic_expert_plan(fn, world, {"agent_1": HUMAN})


class TestLLMPolicy:
    def grammar(self):
        return build_grammar(("cup_1",), ("table_1",), ("kitchen_1",), "robot")

    def obs(self):
        from collabsim.agents import Observation

        return Observation(
            agent="agent_0", role="robot", instruction="bring the cup",
            world_summary="Furniture:\nkitchen_1: floor_kitchen_1, table_1\nObjects:\nNo objects found yet",
            action_history=[], step=0,
        )

    def test_action_extracted_from_react_block(self):
        completions = ["Thought: no objects found, explore the kitchen\nExplore[kitchen_1]\nAssigned!"]
        policy = LLMPolicy(
            LLMConfig(), self.grammar, transport=lambda messages: completions.pop(0)
        )
        assert policy.decide(self.obs()) == SkillCall.make("Explore", "kitchen_1")

    def test_unknown_entity_triggers_retry_then_success(self):
        completions = [
            "Thought: grab it\nPick[cup_99]\nAssigned!",
            "Thought: correct name\nPick[cup_1]\nAssigned!",
        ]
        seen_notes = []

        def transport(messages):
            seen_notes.append(messages[-1]["content"])
            return completions.pop(0)

        policy = LLMPolicy(LLMConfig(), self.grammar, transport=transport)
        assert policy.decide(self.obs()) == SkillCall.make("Pick", "cup_1")
        assert "rejected" in seen_notes[1]

    def test_exhausted_retries_fall_back_to_wait(self):
        policy = LLMPolicy(
            LLMConfig(max_retries=2), self.grammar,
            transport=lambda messages: "Thought: hmm\nLevitate[cup_1]\nAssigned!",
        )
        assert policy.decide(self.obs()) == SkillCall.make("Wait")

    def test_cassette_record_then_replay(self, tmp_path):
        cassette = tmp_path / "episode.cassette.json"
        completions = ["Thought: t\nExplore[kitchen_1]\nAssigned!",
                       "Thought: t\nDone[]\nAssigned!"]
        recorder = LLMPolicy(
            LLMConfig(cassette_path=str(cassette), record=True),
            self.grammar, transport=lambda messages: completions.pop(0),
        )
        first = [recorder.decide(self.obs()), recorder.decide(self.obs())]
        recorder.save_cassette()
        assert json.loads(cassette.read_text())["completions"]

        replayer = LLMPolicy(LLMConfig(cassette_path=str(cassette)), self.grammar)
        second = [replayer.decide(self.obs()), replayer.decide(self.obs())]
        assert first == second

    def test_prompt_carries_world_and_task(self):
        policy = LLMPolicy(LLMConfig(), self.grammar, transport=lambda m: "Done[]")
        messages = policy.build_messages(self.obs())
        assert "solves multi-agent planning problems" in messages[0]["content"]
        assert "Task: bring the cup" in messages[1]["content"]
        assert "No objects found yet" in messages[1]["content"]


class TestRag:
    def test_identical_instruction_wins(self):
        store = RagStore()
        store.add("move the cup", "trace-a")
        store.add("wash the plates", "trace-b")
        assert rag_retrieve(store, "move the cup") == "trace-a"

    def test_empty_store(self):
        assert rag_retrieve(RagStore(), "anything") is None

    def test_hand_computed_overlap_winner(self):
        # cosine over token counts, worked by hand:
        #   query "move the cups to the dining table"
        #   s1 "move the cup to the kitchen table"   -> 7/9      = 0.7777..
        #   s2 "wash the dishes in the sink"         -> 4/(3*sqrt(8)) = 0.4714..
        #   s3 "bring two cups to the dining table"  -> 6/(3*sqrt(7)) = 0.7559..
        query = "move the cups to the dining table"
        s1 = "move the cup to the kitchen table"
        s2 = "wash the dishes in the sink"
        s3 = "bring two cups to the dining table"
        assert token_overlap_similarity(query, s1) == pytest.approx(7 / 9)
        assert token_overlap_similarity(query, s2) == pytest.approx(4 / (3 * 8 ** 0.5))
        assert token_overlap_similarity(query, s3) == pytest.approx(6 / (3 * 7 ** 0.5))
        store = RagStore()
        store.add(s1, "trace-1")
        store.add(s2, "trace-2")
        store.add(s3, "trace-3")
        assert rag_retrieve(store, query) == "trace-1"

    def test_pluggable_similarity(self):
        store = RagStore(similarity=lambda a, b: float(len(b)))
        store.add("x", "short")
        store.add("a much longer instruction", "long")
        assert rag_retrieve(store, "anything") == "long"


def test_controller_binds_grammar_provider_for_llm_policies():
    """Policies built from CLI specs get a per-agent grammar provider."""
    scene = bundled_scene()
    episode = generate_fixtures(FixtureRequest(scene, "constraint-free", count=1, seed=40))[0]
    completions = iter(
        ["Thought: stop\nDone[]\nAssigned!"] * 4
    )
    robot = LLMPolicy(LLMConfig(), grammar_provider=None,
                      transport=lambda messages: next(completions))
    human = LLMPolicy(LLMConfig(), grammar_provider=None,
                      transport=lambda messages: next(completions))
    run = run_episode(
        scene, episode, ControllerConfig(mode="decentralized"),
        SimConfig(seed=40, max_sim_steps=200),
        policies={"agent_0": robot, "agent_1": human},
    )
    assert run.trace.termination == "AllDone"
    assert robot.grammar_provider is not None

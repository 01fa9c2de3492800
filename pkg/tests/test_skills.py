import pytest

from collabsim.errors import (
    AgentBusyError,
    CapabilityViolationError,
    EpisodeTerminatedError,
)
from collabsim.geometry import Vec3
from collabsim.predicates import is_next_to
from collabsim.skills import (
    HUMAN,
    ROBOT,
    SimConfig,
    Simulator,
    SkillCall,
)
from collabsim.world import AffordanceSet, ObjectSpec, Placement, snapshot

from conftest import add_cup, make_two_room_world


def make_sim(observability="full", max_steps=20000, agents=("human", "robot"), seed=0,
             **config_overrides):
    world = make_two_room_world(seed=seed)
    add_cup(world, "cup_0", parent="table_2")  # starts in the bedroom
    world.add_object("kettle_0", "kettle", Vec3(0.09, 0.07, 0.1),
                     AffordanceSet(fillable=True, cleanable=True))
    world.place_object("kettle_0", Placement.on("cabinet_1"))  # on the sink cabinet
    world.add_object("lamp_0", "lamp", Vec3(0.08, 0.08, 0.2),
                     AffordanceSet(powerable=True))
    world.place_object("lamp_0", Placement.on("table_1"))
    roles = {}
    if "human" in agents:
        world.add_agent("agent_1", "kitchen_1")
        roles["agent_1"] = HUMAN
    if "robot" in agents:
        world.add_agent("agent_0", "kitchen_1")
        roles["agent_0"] = ROBOT
    catalog = {
        name: ObjectSpec(name, obj.category, obj.box.half_extents, obj.affordances)
        for name, obj in world.objects.items()
    }
    config = SimConfig(observability=observability, max_sim_steps=max_steps, seed=seed,
                       **config_overrides)
    return Simulator(world, catalog, config, roles)


def run_until_idle(sim, agent):
    results = []
    while agent in sim.in_progress and not sim.terminated:
        results.extend(sim.step())
    return [r for r in results if r.agent == agent]


def do(sim, agent, call):
    sim.schedule_skill(agent, call)
    results = run_until_idle(sim, agent)
    assert results, f"no result for {call}"
    return results[-1]


class TestScheduling:
    def test_busy_agent_rejected(self):
        sim = make_sim()
        sim.schedule_skill("agent_1", SkillCall.make("Wait"))
        with pytest.raises(AgentBusyError):
            sim.schedule_skill("agent_1", SkillCall.make("Wait"))

    def test_robot_state_modifying_rejected(self):
        sim = make_sim()
        for skill in ("Clean", "Fill", "Pour", "PowerOn", "PowerOff"):
            with pytest.raises(CapabilityViolationError):
                sim.schedule_skill("agent_0", SkillCall.make(skill, "kettle_0"))

    def test_navigate_accepted_for_idle_agent(self):
        sim = make_sim()
        completion = sim.schedule_skill("agent_1", SkillCall.make("Navigate", "table_1"))
        assert completion > 0

    def test_every_skill_costs_at_least_one_step(self):
        sim = make_sim()
        result = do(sim, "agent_1", SkillCall.make("Wait"))
        assert result.steps_consumed >= 1
        assert result.completed_at_step == 1


class TestSkillEffects:
    def test_navigate_moves_and_reveals(self):
        sim = make_sim(observability="partial")
        assert sim.observed["agent_1"].discovered == set()
        result = do(sim, "agent_1", SkillCall.make("Navigate", "table_1"))
        assert result.ok
        assert sim.world.agents["agent_1"].room == "kitchen_1"
        # navigating to furniture reveals the objects sharing it
        assert "lamp_0" in sim.observed["agent_1"].discovered
        assert "cup_0" not in sim.observed["agent_1"].discovered

    def test_explore_reveals_room_contents(self):
        sim = make_sim(observability="partial")
        result = do(sim, "agent_1", SkillCall.make("Explore", "bedroom_1"))
        assert result.ok
        assert "cup_0" in sim.observed["agent_1"].discovered
        count = sum(
            1 for f in sim.world.furniture.values()
            if f.room == "bedroom_1" and not f.is_floor
        )
        assert result.steps_consumed == count * sim.config.explore_cost_per_furniture

    def test_pick_requires_adjacency_and_empty_hand(self):
        sim = make_sim()
        result = do(sim, "agent_1", SkillCall.make("Pick", "cup_0"))
        assert not result.ok  # cup is in the other room
        do(sim, "agent_1", SkillCall.make("Navigate", "cup_0"))
        result = do(sim, "agent_1", SkillCall.make("Pick", "cup_0"))
        assert result.ok
        assert sim.world.agents["agent_1"].held == "cup_0"

        do(sim, "agent_1", SkillCall.make("Navigate", "kettle_0"))
        result = do(sim, "agent_1", SkillCall.make("Pick", "kettle_0"))
        assert not result.ok
        assert "cannot hold more than one object" in result.message

    def test_pick_from_closed_receptacle_fails(self):
        sim = make_sim()
        sim.world.place_object("cup_0", Placement.within("chest_1"))
        do(sim, "agent_1", SkillCall.make("Navigate", "chest_1"))
        result = do(sim, "agent_1", SkillCall.make("Pick", "cup_0"))
        assert not result.ok and "closed" in result.message
        do(sim, "agent_1", SkillCall.make("Open", "chest_1"))
        result = do(sim, "agent_1", SkillCall.make("Pick", "cup_0"))
        assert result.ok

    def test_place_with_next_to_constraint(self):
        sim = make_sim()
        do(sim, "agent_1", SkillCall.make("Navigate", "cup_0"))
        do(sim, "agent_1", SkillCall.make("Pick", "cup_0"))
        do(sim, "agent_1", SkillCall.make("Navigate", "table_1"))
        # reference object absent from the furniture: failure, world unchanged
        before = sim.world.canonical()
        result = do(sim, "agent_1",
                    SkillCall.make("Place", "cup_0", "on", "table_1", "next_to", "kettle_0"))
        assert not result.ok
        assert "must already be on" in result.message
        assert sim.world.canonical() == before

        result = do(sim, "agent_1",
                    SkillCall.make("Place", "cup_0", "on", "table_1", "next_to", "lamp_0"))
        assert result.ok
        assert is_next_to("cup_0", "lamp_0", snapshot(sim.world, 0))

    def test_place_within_requires_open(self):
        sim = make_sim()
        do(sim, "agent_1", SkillCall.make("Navigate", "cup_0"))
        do(sim, "agent_1", SkillCall.make("Pick", "cup_0"))
        do(sim, "agent_1", SkillCall.make("Navigate", "cabinet_1"))
        result = do(sim, "agent_1",
                    SkillCall.make("Place", "cup_0", "within", "cabinet_1", "none", "none"))
        assert not result.ok and "closed" in result.message
        do(sim, "agent_1", SkillCall.make("Open", "cabinet_1"))
        result = do(sim, "agent_1",
                    SkillCall.make("Place", "cup_0", "within", "cabinet_1", "none", "none"))
        assert result.ok

    def test_rearrange_full_pipeline(self):
        sim = make_sim()
        result = do(sim, "agent_1",
                    SkillCall.make("Rearrange", "cup_0", "on", "table_1", "none", "none"))
        assert result.ok
        assert sim.world.objects["cup_0"].placement == Placement.on("table_1")
        assert sim.world.agents["agent_1"].held is None

    def test_rearrange_aborts_atomically(self):
        sim = make_sim()
        do(sim, "agent_1", SkillCall.make("Navigate", "kettle_0"))
        do(sim, "agent_1", SkillCall.make("Pick", "kettle_0"))  # hand now full
        before = sim.world.canonical()
        result = do(sim, "agent_1",
                    SkillCall.make("Rearrange", "cup_0", "on", "table_1", "none", "none"))
        assert not result.ok and "Pick stage failed" in result.message
        assert sim.world.canonical() == before

    def test_fill_requires_faucet_adjacency(self):
        sim = make_sim()
        # kettle on the faucet cabinet: navigate + fill succeeds
        do(sim, "agent_1", SkillCall.make("Navigate", "kettle_0"))
        result = do(sim, "agent_1", SkillCall.make("Fill", "kettle_0"))
        assert result.ok and sim.world.objects["kettle_0"].states.filled

        # cup away from any faucet: fill fails even when adjacent to the cup
        do(sim, "agent_1", SkillCall.make("Navigate", "cup_0"))
        result = do(sim, "agent_1", SkillCall.make("Fill", "cup_0"))
        assert not result.ok and "faucet" in result.message

    def test_pour_transfers_and_empties_source(self):
        sim = make_sim()
        do(sim, "agent_1", SkillCall.make("Navigate", "kettle_0"))
        do(sim, "agent_1", SkillCall.make("Fill", "kettle_0"))
        do(sim, "agent_1", SkillCall.make("Pick", "kettle_0"))
        do(sim, "agent_1", SkillCall.make("Navigate", "cup_0"))
        result = do(sim, "agent_1", SkillCall.make("Pour", "cup_0"))
        assert result.ok
        assert sim.world.objects["cup_0"].states.filled
        assert not sim.world.objects["kettle_0"].states.filled  # source emptied

    def test_pour_source_retention_toggle(self):
        sim = make_sim(pour_empties_source=False)
        do(sim, "agent_1", SkillCall.make("Navigate", "kettle_0"))
        do(sim, "agent_1", SkillCall.make("Fill", "kettle_0"))
        do(sim, "agent_1", SkillCall.make("Pick", "kettle_0"))
        do(sim, "agent_1", SkillCall.make("Navigate", "cup_0"))
        do(sim, "agent_1", SkillCall.make("Pour", "cup_0"))
        assert sim.world.objects["kettle_0"].states.filled

    def test_power_and_clean(self):
        sim = make_sim()
        do(sim, "agent_1", SkillCall.make("Navigate", "lamp_0"))
        assert do(sim, "agent_1", SkillCall.make("PowerOn", "lamp_0")).ok
        assert sim.world.objects["lamp_0"].states.powered
        assert do(sim, "agent_1", SkillCall.make("PowerOff", "lamp_0")).ok
        assert not sim.world.objects["lamp_0"].states.powered
        do(sim, "agent_1", SkillCall.make("Navigate", "kettle_0"))
        assert do(sim, "agent_1", SkillCall.make("Clean", "kettle_0")).ok
        assert sim.world.objects["kettle_0"].states.clean


class TestTermination:
    def test_all_done(self):
        sim = make_sim()
        sim.schedule_skill("agent_1", SkillCall.make("Done"))
        sim.schedule_skill("agent_0", SkillCall.make("Done"))
        while not sim.terminated:
            sim.step()
        assert sim.terminated == "AllDone"
        with pytest.raises(EpisodeTerminatedError):
            sim.step()

    def test_step_timeout_exact(self):
        sim = make_sim(max_steps=50)
        while not sim.terminated:
            sim.step()
        assert sim.terminated == "StepTimeout"
        assert sim.step_index == 50
        assert sim.trace.states[-1].step == 50

    def test_empty_step_advances_counter(self):
        sim = make_sim()
        assert sim.step() == []
        assert sim.step_index == 1
        assert len(sim.trace.states) == 1  # no completion: no snapshot


class TestTraceInvariants:
    def test_snapshots_strictly_increasing_and_valid(self):
        sim = make_sim()
        do(sim, "agent_1", SkillCall.make("Rearrange", "cup_0", "on", "table_1", "none", "none"))
        do(sim, "agent_0", SkillCall.make("Navigate", "table_2"))
        do(sim, "agent_1", SkillCall.make("Done"))
        do(sim, "agent_0", SkillCall.make("Done"))
        while not sim.terminated:
            sim.step()
        steps = [s.step for s in sim.trace.states]
        assert steps == sorted(set(steps))
        for state in sim.trace.states:
            state.graph.check_invariants()

    def test_determinism_identical_traces(self):
        from collabsim.harness import trace_to_lines

        def run():
            sim = make_sim(seed=9)
            do(sim, "agent_1", SkillCall.make("Rearrange", "cup_0", "on", "table_1", "none", "none"))
            do(sim, "agent_0", SkillCall.make("Navigate", "lamp_0"))
            do(sim, "agent_1", SkillCall.make("Done"))
            do(sim, "agent_0", SkillCall.make("Done"))
            while not sim.terminated:
                sim.step()
            return trace_to_lines(sim.trace, "t")

        assert run() == run()

    def test_human_first_tie_break(self):
        sim = make_sim()
        # identical 1-step waits complete simultaneously; human first
        sim.schedule_skill("agent_0", SkillCall.make("Wait"))
        sim.schedule_skill("agent_1", SkillCall.make("Wait"))
        results = sim.step()
        assert [r.agent for r in results] == ["agent_1", "agent_0"]


class TestObservability:
    def test_full_observability_views_match_truth_at_every_step(self):
        sim = make_sim(observability="full")
        script = (
            SkillCall.make("Rearrange", "cup_0", "on", "table_1", "none", "none"),
            SkillCall.make("Navigate", "kettle_0"),
            SkillCall.make("Fill", "kettle_0"),
            SkillCall.make("Pick", "kettle_0"),
        )
        for call in script:
            do(sim, "agent_1", call)
            state = snapshot(sim.world, sim.step_index)
            for view in sim.observed.values():
                assert view.graph.canonical() == state.graph.canonical()

    def test_partial_observation_monotone(self):
        sim = make_sim(observability="partial")
        seen = set()
        for call in (
            SkillCall.make("Navigate", "table_1"),
            SkillCall.make("Explore", "bedroom_1"),
            SkillCall.make("Navigate", "cabinet_1"),
        ):
            do(sim, "agent_1", call)
            now = set(sim.observed["agent_1"].discovered)
            assert now >= seen
            seen = now

    def test_partner_broadcast_updates_view(self):
        sim = make_sim(observability="partial")
        do(sim, "agent_1", SkillCall.make("Rearrange", "cup_0", "on", "table_1", "none", "none"))
        # the robot never observed the cup directly, yet the broadcast of the
        # human's completed rearrange resolves it through the catalog
        robot_view = sim.observed["agent_0"]
        assert robot_view.graph.objects["cup_0"].placement == Placement.on("table_1")

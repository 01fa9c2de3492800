from starlette.testclient import TestClient

from collabsim.fixtures import FixtureRequest, bundled_scene, generate_fixtures, witness_plan
from collabsim.harness import HUMAN_AGENT, ROBOT_AGENT, trace_to_lines
from collabsim.hitl import HitlConfig, PROTOCOL_VERSION, create_app
from collabsim.skills import SimConfig


def human_share(scene, episode):
    """The witness plan's calls for the human agent, in layer order."""
    plan = witness_plan(scene, episode)
    calls = []
    for layer_index, layer in enumerate(plan.layers):
        for job_index, job in enumerate(layer):
            if plan.assignments[(layer_index, job_index)] == HUMAN_AGENT:
                calls.extend(job.calls)
    return [c.to_string() for c in calls]


def make_app(task_type="constraint-free", seed=30, partner="expert", count=1):
    scene = bundled_scene()
    episodes = generate_fixtures(FixtureRequest(scene, task_type, count=count, seed=seed))
    config = HitlConfig(scene=scene, episodes=episodes, partner=partner,
                        sim=SimConfig(observability="full", seed=seed))
    return create_app(config), scene, episodes


def drain_until(socket, kind):
    """Read frames until one of the given kind arrives."""
    while True:
        message = socket.receive_json()
        if message["kind"] == kind:
            return message
        assert message["kind"] in (
            "session_init", "state_diff", "partner_action", "result", "report", "lobby"
        )


def hello(socket):
    socket.send_json({"kind": "hello", "protocol": PROTOCOL_VERSION})


def send_command(socket, text):
    socket.send_json({"kind": "command", "text": text})


def test_protocol_version_mismatch():
    app, _, _ = make_app()
    with TestClient(app).websocket_connect("/session") as socket:
        socket.send_json({"kind": "hello", "protocol": 99})
        message = socket.receive_json()
        assert message["kind"] == "error" and "protocol" in message["error"]


def test_session_init_payload():
    app, scene, episodes = make_app()
    with TestClient(app).websocket_connect("/session") as socket:
        hello(socket)
        init = socket.receive_json()
        assert init["kind"] == "session_init"
        assert init["protocol"] == PROTOCOL_VERSION
        assert init["instruction"] == episodes[0].instruction
        assert init["agent"] == HUMAN_AGENT and init["role"] == "human"
        assert init["retries_left"] == 3
        assert "Furniture:" in init["world"]
        assert init["entities"]["rooms"]
        assert "Done" in init["skills"]


def test_grammar_rejection_inline():
    app, _, _ = make_app()
    with TestClient(app).websocket_connect("/session") as socket:
        hello(socket)
        socket.receive_json()
        send_command(socket, "Pick[never_seen_99]")
        message = socket.receive_json()
        assert message["kind"] == "result" and message["status"] == "rejected"


def test_human_completes_episode_with_expert_partner():
    app, scene, episodes = make_app()
    client = TestClient(app)
    with client.websocket_connect("/session") as socket:
        hello(socket)
        socket.receive_json()
        for text in human_share(scene, episodes[0]):
            send_command(socket, text)
            result = drain_until(socket, "result")
            assert result["status"] == "success", result
        send_command(socket, "Done[]")
        report = drain_until(socket, "report")
        assert report["success"] is True
        assert report["percent_complete"] == 1.0
        assert report["termination"] == "AllDone"


def test_grammar_dump_endpoint():
    app, _, _ = make_app()
    payload = TestClient(app).get("/grammar").json()
    assert payload["human"].startswith("root ::=")
    assert "Fill" in payload["human"]
    assert "Fill" not in payload["robot"].split("\n")[0]


class TestOrderingFeedbackAndRetries:
    def test_out_of_order_feedback_then_retry_succeeds(self):
        # single-user session: ordering is fully human-controlled
        app, scene, episodes = make_app(task_type="temporal", seed=31, partner="none")
        episode = episodes[0]
        from collabsim.fixtures import witness_calls

        ordered = [c.to_string() for c in witness_calls(scene, episode)]
        assert len(ordered) >= 2
        swapped = [ordered[-1]] + ordered[1:-1] + [ordered[0]]

        client = TestClient(app)
        with client.websocket_connect("/session") as socket:
            hello(socket)
            socket.receive_json()
            for text in swapped:
                send_command(socket, text)
                drain_until(socket, "result")
            send_command(socket, "Done[]")
            report = drain_until(socket, "report")
            assert report["success"] is False
            assert "out of temporal order" in report["explanation"]
            assert report["retries_left"] == 3

            socket.send_json({"kind": "retry"})
            init = drain_until(socket, "session_init")
            assert init["retries_left"] == 2
            for text in ordered:
                send_command(socket, text)
                drain_until(socket, "result")
            send_command(socket, "Done[]")
            report = drain_until(socket, "report")
            assert report["success"] is True

    def test_retry_cap_is_three(self):
        app, scene, episodes = make_app(task_type="constraint-free", seed=32)
        client = TestClient(app)
        with client.websocket_connect("/session") as socket:
            hello(socket)
            socket.receive_json()
            for round_index in range(4):
                send_command(socket, "Done[]")
                drain_until(socket, "report")
                socket.send_json({"kind": "retry"})
                if round_index < 3:
                    init = drain_until(socket, "session_init")
                    assert init["retries_left"] == 2 - round_index
                else:
                    message = drain_until(socket, "error")
                    assert "no retries left" in message["error"]


def test_two_human_pairing_and_capability_gate():
    app, scene, episodes = make_app(partner="human", seed=33)
    client = TestClient(app)
    with client.websocket_connect("/session") as first:
        hello(first)
        lobby = first.receive_json()
        assert lobby["kind"] == "lobby"
        with client.websocket_connect("/session") as second:
            hello(second)
            first_init = first.receive_json()
            second_init = second.receive_json()
            assert first_init["agent"] == HUMAN_AGENT
            assert second_init["agent"] == ROBOT_AGENT
            assert "Clean" not in second_init["skills"]

            # the robot-driving client cannot issue state-modifying skills
            send_command(second, "Clean[plate_0]")
            message = second.receive_json()
            assert message["kind"] == "result" and message["status"] == "rejected"

            # partner actions are relayed to the other client
            send_command(second, "Wait[]")
            relayed = drain_until(first, "partner_action")
            assert relayed["call"] == "Wait[]"


def test_replayed_command_stream_reproduces_trace():
    def run_once():
        app, scene, episodes = make_app(seed=34)
        client = TestClient(app)
        with client.websocket_connect("/session") as socket:
            hello(socket)
            socket.receive_json()
            for text in human_share(scene, episodes[0]):
                send_command(socket, text)
                drain_until(socket, "result")
            send_command(socket, "Done[]")
            drain_until(socket, "report")
        session = app.state.sessions[0]
        return trace_to_lines(session.traces[0], "replay")

    assert run_once() == run_once()


def test_llm_partner_drives_robot_share():
    """A policy-driven machine partner (the LLM client's slot) acts for the
    robot; here a scripted stand-in rearranges while the human finishes."""
    from collabsim.agents import ScriptedPolicy
    from collabsim.fixtures import witness_plan
    from collabsim.skills import SkillCall

    scene = bundled_scene()
    episodes = generate_fixtures(FixtureRequest(scene, "constraint-free", count=1, seed=36))
    plan = witness_plan(scene, episodes[0])
    calls = [c for layer in plan.layers for job in layer for c in job.calls]

    config = HitlConfig(
        scene=scene, episodes=episodes, partner="policy:",
        sim=SimConfig(observability="full", seed=36),
        partner_factory=lambda: ScriptedPolicy(calls + [SkillCall.make("Done")]),
    )
    app = create_app(config)
    with TestClient(app).websocket_connect("/session") as socket:
        hello(socket)
        socket.receive_json()
        send_command(socket, "Done[]")
        report = drain_until(socket, "report")
        assert report["success"] is True


def test_llm_partner_config_constructs():
    scene = bundled_scene()
    episodes = generate_fixtures(FixtureRequest(scene, "constraint-free", count=1, seed=37))
    config = HitlConfig(scene=scene, episodes=episodes, partner="llm:http://127.0.0.1:9/v1")
    from collabsim.hitl import SessionState

    state = SessionState(config, episodes[0])
    assert state.partner is not None
    assert state.partner.policy.grammar_provider is not None

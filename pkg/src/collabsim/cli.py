"""Command-line entry point.

Subcommands: run, evaluate, verify, gen-fixtures, serve, report.  Exit code
is 0 iff no infrastructure failures occurred.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .agents import (
    ControllerConfig,
    DonePolicy,
    LLMConfig,
    LLMPolicy,
    Policy,
    ScriptedPolicy,
    WaitPolicy,
)
from .dsl import parse_eval_dsl
from .errors import CollabSimError
from .fixtures import FixtureRequest, bundled_scene, generate_fixtures
from .harness import (
    HUMAN_AGENT,
    ROBOT_AGENT,
    evaluate_trace_file,
    report_to_json,
    run_batch,
)
from .hitl import HitlConfig, serve_hitl
from .metrics import EpisodeMetrics, aggregate
from .predicates import DEFAULT_CONFIG, PredicateConfig
from .sceneio import load_dataset, load_scene, serialize_episode, serialize_scene
from .skills import SimConfig, SkillCall


def _predicate_config(args: argparse.Namespace) -> PredicateConfig:
    """Threshold overrides: config file first, direct flags win."""
    values = {}
    path = getattr(args, "predicate_config", None)
    if path:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in PredicateConfig.__dataclass_fields__:
                raise SystemExit(f"{path}:{lineno}: unknown predicate option {key!r}")
            field_type = type(getattr(DEFAULT_CONFIG, key))
            values[key] = field_type(raw)
    for flag, key in (
        ("next_to_threshold", "next_to_l2_threshold"),
        ("floor_epsilon", "floor_epsilon"),
        ("keypoint_fraction", "in_room_keypoint_fraction"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            values[key] = value
    return PredicateConfig(**values) if values else DEFAULT_CONFIG


def _add_predicate_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--predicate-config", default=None,
                        help="key = value file of PredicateConfig overrides")
    parser.add_argument("--next-to-threshold", dest="next_to_threshold",
                        type=float, default=None)
    parser.add_argument("--floor-epsilon", dest="floor_epsilon",
                        type=float, default=None)
    parser.add_argument("--keypoint-fraction", dest="keypoint_fraction",
                        type=float, default=None)


def _load_scene_arg(path: str):
    if path == "bundled":
        return bundled_scene()
    return load_scene(path)


def _scripted_policy(path: str) -> Policy:
    calls = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, _, args = line.partition("[")
        args = args.rstrip("]").strip()
        parts = tuple(a.strip() for a in args.split(",")) if args else ()
        calls.append(SkillCall.make(name, *parts))
    return ScriptedPolicy(calls)


def _policy_from_spec(spec: str) -> Policy:
    if spec == "wait":
        return WaitPolicy()
    if spec == "done":
        return DonePolicy()
    if spec.startswith("scripted:"):
        return _scripted_policy(spec.split(":", 1)[1])
    if spec.startswith("llm:"):
        # the controller injects a per-agent grammar provider at bind time
        return LLMPolicy(LLMConfig(base_url=spec.split(":", 1)[1]), grammar_provider=None)
    raise SystemExit(f"unknown policy spec {spec!r}")


def cmd_run(args: argparse.Namespace) -> int:
    scene = _load_scene_arg(args.scene)
    dataset = load_dataset(args.dataset)
    sim_config = SimConfig(observability=args.observability, seed=args.seed)

    def factory(episode):
        if args.policy == "expert":
            return {"mode": "centralized", "expert": True}
        mode = args.mode
        agents = [HUMAN_AGENT] if mode == "single" else [ROBOT_AGENT, HUMAN_AGENT]
        policies = {agent: _policy_from_spec(args.policy) for agent in agents}
        return {"controller_config": ControllerConfig(mode=mode), "policies": policies}

    batch = run_batch(
        scene, dataset.episodes, factory, sim_config,
        trace_dir=args.traces, predicate_config=_predicate_config(args),
    )
    payload = report_to_json(batch)
    Path(args.out).write_text(payload)
    print(f"ran {len(batch.runs)} episodes, {len(batch.infrastructure_failures)} failures")
    print(f"report written to {args.out}")
    return 1 if batch.infrastructure_failures else 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    fn = parse_eval_dsl(Path(args.eval).read_text())
    report = evaluate_trace_file(args.trace, fn, _predicate_config(args))
    print(json.dumps(
        {
            "percent_complete": report.pc,
            "success": report.success,
            "failure_explanation": report.failure_explanation,
        },
        indent=2,
    ))
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    from .evaluation import verify_feasibility
    from .sceneio import load_episode

    episode = load_episode(args.episode)
    scene = _load_scene_arg(args.scene)
    issues = verify_feasibility(episode.evaluation, scene, episode)
    if not issues:
        print("feasible: no issues")
        return 0
    for issue in issues:
        print(f"{issue.kind}: {issue.message}")
    return 1


def cmd_gen_fixtures(args: argparse.Namespace) -> int:
    scene = _load_scene_arg(args.scene)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    types = (
        ["constraint-free", "spatial", "temporal", "heterogeneous"]
        if args.type == "all"
        else [args.type]
    )
    manifest = []
    for task_type in types:
        request = FixtureRequest(
            scene,
            task_type,
            count=args.count,
            seed=args.seed,
            object_count=args.objects,
            temporal_depth=args.depth,
        )
        for episode in generate_fixtures(request):
            path = out / f"{episode.name}.episode"
            path.write_text(serialize_episode(episode))
            manifest.append(f"{path.name} {scene.split}")
    (out / "manifest.txt").write_text("\n".join(manifest) + "\n")
    if args.scene == "bundled":
        (out / "scene.scene").write_text(serialize_scene(scene))
    print(f"wrote {len(manifest)} episodes to {out}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    scene = _load_scene_arg(args.scene)
    dataset = load_dataset(args.dataset)
    if not dataset.episodes:
        print("dataset holds no runnable episodes", file=sys.stderr)
        return 1
    config = HitlConfig(
        scene=scene,
        episodes=dataset.episodes,
        partner=args.partner,
        tick_hz=args.tick_hz if args.tick_hz > 0 else None,
        sim=SimConfig(observability="full"),
    )
    print(f"serving HITL sessions on ws://{args.host}:{args.port}/session")
    serve_hitl(config, host=args.host, port=args.port)
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    source = Path(args.infile)
    rows: list[EpisodeMetrics] = []
    files = [source] if source.is_file() else sorted(source.glob("*.json"))
    for path in files:
        payload = json.loads(path.read_text())
        for entry in payload.get("episodes", []):
            rows.append(
                EpisodeMetrics(
                    sim_steps=entry["sim_steps"],
                    success=entry["success"],
                    percent_complete=entry["percent_complete"],
                    planning_cycles=entry["planning_cycles"],
                    task_offloading=entry["task_offloading"],
                    extraneous_effort=entry["extraneous_effort"],
                    exploration_efficiency=entry["exploration_efficiency"],
                    task_type=entry.get("task_type", ""),
                    episode=entry.get("episode", ""),
                )
            )
    if not rows:
        print("no episode metrics found", file=sys.stderr)
        return 1
    summary = aggregate(rows)
    if args.format == "json":
        print(json.dumps(summary.as_dict(), indent=2, sort_keys=True))
    else:
        columns = [
            "episode",
            "task_type",
            "sim_steps",
            "success",
            "percent_complete",
            "planning_cycles",
            "task_offloading",
            "extraneous_effort",
            "exploration_efficiency",
        ]
        lines = ["\t".join(columns)]
        for row in rows:
            record = row.as_dict()
            lines.append(
                "\t".join(
                    "N/A" if record[c] is None else str(record[c]) for c in columns
                )
            )
        lines.append("")
        for name, stat in summary.metrics.items():
            lines.append(f"# {name}\t{stat.mean:.4f}\t±{stat.se:.4f}\tn={stat.n}")
        for task_type, stat in summary.success_by_task_type.items():
            lines.append(f"# success[{task_type}]\t{stat.mean:.4f}\t±{stat.se:.4f}\tn={stat.n}")
        table = "\n".join(lines)
        print(table)
        if args.out_table:
            Path(args.out_table).write_text(table + "\n")
    if args.figures:
        from .plots import render_report_figures

        paths = render_report_figures(summary, rows, args.figures)
        for path in paths:
            print(f"figure: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="collabsim",
        description="household-collaboration benchmark: run, evaluate, and serve episodes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a dataset of episodes")
    run.add_argument("--dataset", required=True)
    run.add_argument("--scene", default="bundled")
    run.add_argument("--mode", choices=["single", "centralized", "decentralized"],
                     default="decentralized")
    run.add_argument("--policy", default="expert",
                     help="expert | wait | done | scripted:FILE | llm:URL")
    run.add_argument("--observability", choices=["full", "partial"], default="full")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", default="report.json")
    run.add_argument("--traces", default=None, help="directory for trace files")
    _add_predicate_flags(run)
    run.set_defaults(func=cmd_run)

    evaluate = sub.add_parser("evaluate", help="evaluate a trace file against an eval DSL file")
    evaluate.add_argument("--trace", required=True)
    evaluate.add_argument("--eval", required=True)
    _add_predicate_flags(evaluate)
    evaluate.set_defaults(func=cmd_evaluate)

    verify = sub.add_parser("verify", help="verify episode feasibility")
    verify.add_argument("--episode", required=True)
    verify.add_argument("--scene", default="bundled")
    verify.set_defaults(func=cmd_verify)

    gen = sub.add_parser("gen-fixtures", help="generate procedural episodes")
    gen.add_argument("--scene", default="bundled")
    gen.add_argument("--type", default="all",
                     choices=["all", "constraint-free", "spatial", "temporal", "heterogeneous"])
    gen.add_argument("--count", type=int, default=5)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--objects", type=int, default=2)
    gen.add_argument("--depth", type=int, default=2)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen_fixtures)

    serve = sub.add_parser("serve", help="serve the human-in-the-loop session service")
    serve.add_argument("--dataset", required=True)
    serve.add_argument("--scene", default="bundled")
    serve.add_argument("--partner", default="expert",
                       help="expert | human | none | llm:URL")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8765)
    serve.add_argument("--tick-hz", type=float, default=10.0)
    serve.set_defaults(func=cmd_serve)

    report = sub.add_parser("report", help="aggregate report files into tables and figures")
    report.add_argument("--in", dest="infile", required=True)
    report.add_argument("--format", choices=["table", "json"], default="table")
    report.add_argument("--figures", default=None, help="directory for rendered figures")
    report.add_argument("--out-table", default=None, help="also write the table to a file")
    report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CollabSimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

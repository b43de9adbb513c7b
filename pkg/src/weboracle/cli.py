"""Command line front end.

Exit codes: 0 clean pass, 2 bug reported, 1 error, 3 replay divergence.
Run records never contain wall-clock values; the timestamp lands in a
meta.json sidecar so records stay byte-comparable across replays.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
from pathlib import Path

from . import __version__
from .errors import ReplayDivergence, WeboracleError
from .gateway import ModelGateway, RemoteProfile, ScriptedProfile
from .metrics import GroundTruth, run_benchmark, write_report
from .oracle import RunConfig, parse_vote_spec, run_test
from .replay import build_driver, replay_bug_report, replay_run, verify_replay
from .requirements import Requirement, parse_requirement, steps_to_structured
from .schemas import SchemaRegistry

EXIT_PASS = 0
EXIT_ERROR = 1
EXIT_BUG = 2
EXIT_DIVERGED = 3


def _add_gateway_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--script", help="scripted gateway profile (JSON)")
    parser.add_argument("--remote", help="HTTP completion endpoint")
    parser.add_argument("--model", default="default", help="model name for --remote")
    parser.add_argument(
        "--api-key-env",
        default="",
        help="environment variable holding the API key for --remote",
    )


def _build_gateway(args, run_id: str) -> "ModelGateway | None":
    if args.script and args.remote:
        raise WeboracleError("use either --script or --remote, not both")
    if args.script:
        return ModelGateway(ScriptedProfile.from_file(args.script), run_id=run_id)
    if args.remote:
        api_key = os.environ.get(args.api_key_env, "") if args.api_key_env else ""
        return ModelGateway(
            RemoteProfile(args.remote, model=args.model, api_key=api_key),
            run_id=run_id,
        )
    return None


def _config_from(args) -> RunConfig:
    return RunConfig(
        vote=parse_vote_spec(args.vote),
        action_retries=args.retries,
        select_with_gateway=getattr(args, "select_with_gateway", False),
    )


def _write_outputs(out_dir: "str | None", record, gateway) -> None:
    if not out_dir:
        return
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run_record.json").write_bytes(record.to_json_bytes())
    (out / "trace.json").write_bytes(
        (json.dumps(record.trace, indent=2) + "\n").encode("utf-8")
    )
    if gateway is not None:
        (out / "transcript.json").write_bytes(
            (json.dumps(gateway.transcript_dict(), indent=2) + "\n").encode("utf-8")
        )
    meta = {
        "tool_version": __version__,
        "written_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    (out / "meta.json").write_bytes((json.dumps(meta, indent=2) + "\n").encode("utf-8"))


def cmd_run(args) -> int:
    requirement = Requirement.from_file(args.requirement)
    injected = None
    if args.bug:
        with open(args.bug, "r", encoding="utf-8") as fh:
            injected = json.load(fh)
    driver = build_driver(args.app, injected)
    gateway = _build_gateway(args, run_id="cli-run")
    oracles = None
    registry = None
    if args.ground_truth:
        truth = GroundTruth.from_file(args.ground_truth)
        registry = SchemaRegistry()
        oracles = truth.oracles(registry)
    record = run_test(
        requirement,
        driver,
        gateway,
        _config_from(args),
        app_ref=args.app,
        oracles=oracles,
        registry=registry,
        injected_bug=injected,
    )
    _write_outputs(args.out, record, gateway)
    if record.status == "bug_reported":
        bug = record.bug
        print(
            f"bug at step {bug.step_index} ({bug.phase}): {bug.message}"
            if bug
            else "bug reported"
        )
        return EXIT_BUG
    if record.status == "error":
        print(f"error: {record.error}", file=sys.stderr)
        return EXIT_ERROR
    print(f"passed ({len(record.outcomes)} steps)")
    return EXIT_PASS


def cmd_bench(args) -> int:
    only = set(args.only.split(",")) if args.only else None
    report = run_benchmark(
        args.cases,
        config=_config_from(args),
        prefer_scripts=not args.direct,
        only=only,
    )
    text = report.render_text()
    print(text, end="")
    if args.out:
        write_report(report, args.out)
        meta = {
            "tool_version": __version__,
            "written_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        }
        (Path(args.out) / "meta.json").write_bytes(
            (json.dumps(meta, indent=2) + "\n").encode("utf-8")
        )
    if any(r.error for r in report.results):
        return EXIT_ERROR
    return EXIT_PASS


def cmd_replay(args) -> int:
    with open(args.record, "r", encoding="utf-8") as fh:
        record = json.load(fh)
    if args.bug_only:
        report = replay_bug_report(record)
        print(json.dumps(report, indent=2))
        return EXIT_PASS if report["confirmed"] else EXIT_DIVERGED
    transcript = None
    if args.transcript:
        with open(args.transcript, "r", encoding="utf-8") as fh:
            transcript = json.load(fh)
    divergence = verify_replay(record, transcript)
    if divergence is None:
        print("replay matches the recorded run")
        return EXIT_PASS
    print(f"replay diverged: {divergence}", file=sys.stderr)
    return EXIT_DIVERGED


def cmd_parse(args) -> int:
    requirement = Requirement.from_file(args.requirement)
    gateway = _build_gateway(args, run_id="cli-parse")
    steps = parse_requirement(requirement, gateway)
    print(steps_to_structured(steps), end="")
    return EXIT_PASS


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="weboracle",
        description="Infer assertion oracles for natural-language web tests and run them.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one requirement against an app")
    p_run.add_argument("--requirement", required=True, help="requirement file (yaml/txt)")
    p_run.add_argument("--app", required=True, help="app definition path or builtin:<name>")
    p_run.add_argument("--bug", help="bug spec JSON to inject")
    p_run.add_argument("--ground-truth", help="use these programs instead of inference")
    p_run.add_argument("--vote", default="single", help="single | majority:M | threshold:M:T")
    p_run.add_argument("--retries", type=int, default=0, help="extra action attempts per step")
    p_run.add_argument("--select-with-gateway", action="store_true",
                       help="let the gateway pick among grounding candidates")
    p_run.add_argument("--out", help="directory for run_record/trace/transcript/meta")
    _add_gateway_args(p_run)
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="run the benchmark case suite")
    p_bench.add_argument("--cases", required=True, help="benchmark root or cases directory")
    p_bench.add_argument("--out", help="directory for report.json/report.txt")
    p_bench.add_argument("--vote", default="single")
    p_bench.add_argument("--retries", type=int, default=0)
    p_bench.add_argument("--direct", action="store_true",
                         help="skip gateway scripts; run from ground-truth programs")
    p_bench.add_argument("--only", help="comma-separated case ids")
    p_bench.set_defaults(func=cmd_bench)

    p_replay = sub.add_parser("replay", help="re-execute a recorded run and compare")
    p_replay.add_argument("--record", required=True, help="run_record.json from a prior run")
    p_replay.add_argument("--transcript", help="transcript.json from the same run")
    p_replay.add_argument("--bug-only", action="store_true",
                          help="only re-evaluate the recorded bug against the trace")
    p_replay.set_defaults(func=cmd_replay)

    p_parse = sub.add_parser("parse", help="parse a requirement into structured steps")
    p_parse.add_argument("--requirement", required=True)
    _add_gateway_args(p_parse)
    p_parse.set_defaults(func=cmd_parse)

    return parser


def main(argv: "list[str] | None" = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ReplayDivergence as exc:
        print(f"replay diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except WeboracleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

"""Scoring and the desk benchmark runner.

Each benchmark case bundles a requirement, an app reference, a bug to
inject, hand-written ground-truth assertions per step, and (optionally) a
gateway script that drives the full inference path offline. A case is
scored from two runs: a clean one for consistency and completion, a
bugged one for detection.

Consistency (tc) is 1 only when every ground-truth assertion holds over
the clean run's trace; completion (ct) is the longest holding prefix as a
fraction of all steps, 0 when the first assertion already fails. Bug
counts follow the flag/ground-truth contingency per run: flagging the
injected step is a true positive, flagging any other step a false
positive, missing an injected bug a false negative, and a clean run with
no flags a true negative. Precision and recall leave 0/0 undefined
rather than coercing it to a number.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .dsl import EvalEnvironment, evaluate, parse
from .errors import WeboracleError
from .gateway import ModelGateway, ScriptedProfile
from .oracle import (
    ReplayExtractor,
    RunConfig,
    RunRecord,
    bundle_from_sources,
    run_test,
)
from .replay import (
    _extractions_from_record,
    _truncated_session,
    build_driver,
    replay_bug_report,
)
from .requirements import Requirement
from .schemas import SchemaRegistry, parse_schema_text
from .simapp import BugSpec
from .trace import trace_from_dict


class BenchmarkError(WeboracleError):
    pass


# ---------------------------------------------------------------------------
# Point metrics
# ---------------------------------------------------------------------------


def consistency(holds: "list[bool]") -> int:
    """1 iff every ground-truth assertion held."""

    return 1 if all(holds) else 0


def completion(holds: "list[bool]") -> float:
    """Longest holding prefix over the total, 0.0 for an empty prefix."""

    if not holds:
        return 0.0
    prefix = 0
    for ok in holds:
        if not ok:
            break
        prefix += 1
    return prefix / len(holds)


def precision_recall(tp: int, fp: int, fn: int) -> "dict[str, float | None]":
    precision = tp / (tp + fp) if (tp + fp) > 0 else None
    recall = tp / (tp + fn) if (tp + fn) > 0 else None
    return {"precision": precision, "recall": recall}


def detection_counts(record_dict: dict, expected_step: "int | None") -> dict:
    """Contingency counts for one run against its injected bug.

    expected_step None means the run was clean. The runner stops at the
    first flag, so each run contributes at most one positive.
    """

    bug = record_dict.get("bug")
    flagged_step = bug["step_index"] if bug else None
    tp = fp = fn = tn = 0
    if expected_step is None:
        if flagged_step is None:
            tn = 1
        else:
            fp = 1
    else:
        if flagged_step == expected_step:
            tp = 1
        else:
            fn = 1
            if flagged_step is not None:
                fp = 1
    return {
        "tp": tp,
        "fp": fp,
        "fn": fn,
        "tn": tn,
        "flagged_step": flagged_step,
        "expected_step": expected_step,
    }


# ---------------------------------------------------------------------------
# Ground truth evaluation
# ---------------------------------------------------------------------------


def _uses_extract(source: str) -> bool:
    import ast as pyast

    try:
        tree = pyast.parse(source)
    except SyntaxError:
        return False
    for node in pyast.walk(tree):
        if (
            isinstance(node, pyast.Call)
            and isinstance(node.func, pyast.Attribute)
            and node.func.attr == "extract"
        ):
            return True
    return False


@dataclass
class GroundTruth:
    schema_text: str
    steps: "list[dict]"  # {"precondition": str, "postcondition": str}

    @classmethod
    def from_file(cls, path: "str | Path") -> "GroundTruth":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        steps = data.get("steps")
        if not isinstance(steps, list) or not steps:
            raise BenchmarkError(f"{path}: ground truth needs a non-empty steps list")
        for i, step in enumerate(steps, start=1):
            for label in ("precondition", "postcondition"):
                source = step.get(label, "")
                if source and _uses_extract(source):
                    # ground truth must evaluate without any model behind it
                    raise BenchmarkError(
                        f"{path}: step {i} {label} calls extract(); ground-truth "
                        "programs must be gateway-free"
                    )
        return cls(schema_text=data.get("schemas", ""), steps=steps)

    def oracles(self, registry: SchemaRegistry):
        bundles = []
        schema_text = self.schema_text
        for i, step in enumerate(self.steps, start=1):
            bundles.append(
                bundle_from_sources(
                    i,
                    step.get("precondition", ""),
                    step.get("postcondition", ""),
                    registry,
                    schema_text if i == 1 else "",
                )
            )
        return bundles


def evaluate_ground_truth(record_dict: dict, truth: GroundTruth) -> "list[bool]":
    """Check each ground-truth postcondition against the recorded trace.

    Assertion k is evaluated on the end state of step k; steps the run
    never reached (or never finished) count as not holding.
    """

    session = trace_from_dict(record_dict["trace"])
    registry = SchemaRegistry()
    if truth.schema_text.strip():
        for decl in parse_schema_text(truth.schema_text):
            registry.register(decl)
    extractor = ReplayExtractor(_extractions_from_record(record_dict), registry)
    outcomes = {o["step_index"]: o for o in record_dict.get("outcomes", [])}
    holds = []
    for i, step in enumerate(truth.steps, start=1):
        outcome = outcomes.get(i)
        if outcome is None or outcome["status"] != "passed":
            holds.append(False)
            continue
        end_index = outcome["end_state_index"]
        if end_index >= len(session.history):
            holds.append(False)
            continue
        scope = _truncated_session(session, end_index)
        program = parse(step.get("postcondition", "assert True") or "assert True")
        env = EvalEnvironment(
            bindings={"session": scope, "state": scope.state},
            schema_registry=registry,
            extractor=extractor,
        )
        holds.append(evaluate(program, env).passed)
    return holds


def score_trace(
    truth: GroundTruth,
    record_dict: dict,
    expected_step: "int | None" = None,
) -> dict:
    """Score one run against its ground truth.

    tc and ct come from re-evaluating the ground-truth assertions over
    the recorded trace; tp/fp/fn/tn compare the run's own flag against
    the known bug step (expected_step None for a clean run).
    """

    holds = evaluate_ground_truth(record_dict, truth)
    counts = detection_counts(record_dict, expected_step)
    return {
        "tc": consistency(holds),
        "ct": completion(holds),
        "holds": holds,
        "counts": counts,
    }


# ---------------------------------------------------------------------------
# Benchmark cases
# ---------------------------------------------------------------------------


@dataclass
class BenchmarkCase:
    case_id: str
    path: Path
    requirement: Requirement
    app_ref: str
    truth: GroundTruth
    bug: BugSpec
    script: "dict | None"

    @classmethod
    def load(cls, case_dir: "str | Path") -> "BenchmarkCase":
        path = Path(case_dir)
        req_file = None
        for name in ("requirement.yaml", "requirement.yml", "requirement.txt"):
            if (path / name).exists():
                req_file = path / name
                break
        if req_file is None:
            raise BenchmarkError(f"{path}: no requirement file")
        app_ref_file = path / "app_ref.txt"
        if not app_ref_file.exists():
            raise BenchmarkError(f"{path}: no app_ref.txt")
        truth_file = path / "ground_truth.json"
        if not truth_file.exists():
            raise BenchmarkError(f"{path}: no ground_truth.json")
        bug_file = path / "bug.json"
        if not bug_file.exists():
            raise BenchmarkError(f"{path}: no bug.json")
        script = None
        script_file = path / "gateway_script.json"
        if script_file.exists():
            with open(script_file, "r", encoding="utf-8") as fh:
                script = json.load(fh)
        case = cls(
            case_id=path.name,
            path=path,
            requirement=Requirement.from_file(req_file),
            app_ref=app_ref_file.read_text(encoding="utf-8").strip(),
            truth=GroundTruth.from_file(truth_file),
            bug=BugSpec.from_file(bug_file),
            script=script,
        )
        if case.requirement.source_kind == "structured":
            from .requirements import parse_requirement

            declared = len(parse_requirement(case.requirement))
            if declared != len(case.truth.steps):
                raise BenchmarkError(
                    f"{path}: requirement has {declared} steps but ground truth "
                    f"has {len(case.truth.steps)}"
                )
        return case


@dataclass
class CaseResult:
    case_id: str
    bug_category: str
    tc: int
    ct: float
    counts: dict
    clean_status: str
    bug_status: str
    clean_record: dict
    bug_record: dict
    bug_confirmed: "bool | None"
    mode: str  # "scripted" or "direct"
    app_ref: str = ""
    error: str = ""

    def summary(self) -> dict:
        return {
            "case_id": self.case_id,
            "app_ref": self.app_ref,
            "bug_category": self.bug_category,
            "mode": self.mode,
            "tc": self.tc,
            "ct": round(self.ct, 4),
            "clean_status": self.clean_status,
            "bug_status": self.bug_status,
            "counts": self.counts,
            "bug_confirmed": self.bug_confirmed,
            "error": self.error,
        }

    @classmethod
    def errored(cls, case_id: str, message: str, app_ref: str = "") -> "CaseResult":
        return cls(
            case_id=case_id,
            bug_category="?",
            tc=0,
            ct=0.0,
            counts={"tp": 0, "fp": 0, "fn": 0, "tn": 0,
                    "flagged_step": None, "expected_step": None,
                    "clean_flagged_step": None},
            clean_status="error",
            bug_status="error",
            clean_record={},
            bug_record={},
            bug_confirmed=None,
            mode="?",
            app_ref=app_ref,
            error=message,
        )


def _case_gateway(case: BenchmarkCase) -> "ModelGateway | None":
    if case.script is None:
        return None
    return ModelGateway(ScriptedProfile.from_dict(case.script), run_id=case.case_id)


def run_case(
    case: BenchmarkCase,
    config: "RunConfig | None" = None,
    prefer_scripts: bool = True,
) -> CaseResult:
    config = config or RunConfig()
    use_script = prefer_scripts and case.script is not None
    if not use_script and case.requirement.source_kind == "plain":
        # plain text cannot be split without a model; fall back to the script
        if case.script is None:
            raise BenchmarkError(
                f"{case.case_id}: plain-text requirement needs the gateway script"
            )
        use_script = True
    mode = "scripted" if use_script else "direct"

    def one_run(injected: "BugSpec | None") -> RunRecord:
        driver = build_driver(case.app_ref, injected.to_dict() if injected else None)
        if use_script:
            return run_test(
                case.requirement,
                driver,
                _case_gateway(case),
                config,
                app_ref=case.app_ref,
                injected_bug=injected.to_dict() if injected else None,
                run_id=f"{case.case_id}-{'bugged' if injected else 'clean'}",
            )
        registry = SchemaRegistry()
        oracles = case.truth.oracles(registry)
        return run_test(
            case.requirement,
            driver,
            None,
            config,
            app_ref=case.app_ref,
            oracles=oracles,
            registry=registry,
            injected_bug=injected.to_dict() if injected else None,
            run_id=f"{case.case_id}-{'bugged' if injected else 'clean'}",
        )

    clean = one_run(None).to_dict()
    bugged = one_run(case.bug).to_dict()

    clean_score = score_trace(case.truth, clean, None)
    bug_score = score_trace(case.truth, bugged, case.bug.expected_step)
    counts = {
        key: clean_score["counts"][key] + bug_score["counts"][key]
        for key in ("tp", "fp", "fn", "tn")
    }
    counts["flagged_step"] = bug_score["counts"]["flagged_step"]
    counts["expected_step"] = bug_score["counts"]["expected_step"]
    counts["clean_flagged_step"] = clean_score["counts"]["flagged_step"]

    confirmed = None
    if bugged.get("bug"):
        try:
            confirmed = replay_bug_report(bugged)["confirmed"]
        except WeboracleError as exc:  # pragma: no cover - defensive
            confirmed = None
            bugged.setdefault("warnings", []).append(f"bug replay failed: {exc}")

    return CaseResult(
        case_id=case.case_id,
        bug_category=case.bug.category,
        tc=clean_score["tc"],
        ct=clean_score["ct"],
        counts=counts,
        clean_status=clean["status"],
        bug_status=bugged["status"],
        clean_record=clean,
        bug_record=bugged,
        bug_confirmed=confirmed,
        mode=mode,
        app_ref=case.app_ref,
        error=clean.get("error", "") or bugged.get("error", ""),
    )


@dataclass
class BenchmarkReport:
    results: "list[CaseResult]"
    config: RunConfig = field(default_factory=RunConfig)

    @staticmethod
    def _slice(results: "list[CaseResult]") -> dict:
        n = len(results)
        tp = sum(r.counts["tp"] for r in results)
        fp = sum(r.counts["fp"] for r in results)
        fn = sum(r.counts["fn"] for r in results)
        tn = sum(r.counts["tn"] for r in results)
        pr = precision_recall(tp, fp, fn)
        return {
            "cases": n,
            "mean_tc": sum(r.tc for r in results) / n if n else 0.0,
            "mean_ct": sum(r.ct for r in results) / n if n else 0.0,
            "tp": tp,
            "fp": fp,
            "fn": fn,
            "tn": tn,
            "precision": pr["precision"],
            "recall": pr["recall"],
        }

    def aggregate(self) -> dict:
        total = self._slice(self.results)
        by_category: dict[str, dict] = {}
        apps: dict[str, list] = {}
        for r in self.results:
            slot = by_category.setdefault(
                r.bug_category, {"cases": 0, "detected": 0, "confirmed": 0}
            )
            slot["cases"] += 1
            slot["detected"] += r.counts["tp"]
            slot["confirmed"] += 1 if r.bug_confirmed else 0
            apps.setdefault(r.app_ref or "?", []).append(r)
        total["by_app"] = {app: self._slice(apps[app]) for app in sorted(apps)}
        total["by_category"] = {k: by_category[k] for k in sorted(by_category)}
        return total

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "aggregate": self.aggregate(),
            "cases": [r.summary() for r in self.results],
        }

    def render_text(self) -> str:
        agg = self.aggregate()

        def fmt(value):
            return "n/a" if value is None else f"{value:.3f}"

        lines = []
        lines.append("case        category             mode      tc  ct     bug step  found")
        lines.append("-" * 72)
        for r in self.results:
            found = "yes" if r.counts["tp"] else "no"
            expected = r.counts["expected_step"]
            lines.append(
                f"{r.case_id:<11} {r.bug_category:<20} {r.mode:<9} "
                f"{r.tc:<3} {r.ct:<6.2f} {str(expected):<9} {found}"
            )
        lines.append("-" * 72)

        def slice_row(label, sl):
            return (
                f"{label:<11} cases={sl['cases']:<3} tc={sl['mean_tc']:.3f} "
                f"ct={sl['mean_ct']:.3f} tp={sl['tp']} fp={sl['fp']} "
                f"fn={sl['fn']} tn={sl['tn']} "
                f"precision={fmt(sl['precision'])} recall={fmt(sl['recall'])}"
            )

        for app, sl in agg["by_app"].items():
            label = app.split(":", 1)[-1][:11]
            lines.append(slice_row(label, sl))
        lines.append(slice_row("Total", agg))
        for category, slot in agg["by_category"].items():
            lines.append(
                f"  {category:<22} cases={slot['cases']} "
                f"detected={slot['detected']} confirmed={slot['confirmed']}"
            )
        return "\n".join(lines) + "\n"


def discover_cases(root: "str | Path") -> "list[Path]":
    base = Path(root)
    case_root = base / "cases" if (base / "cases").is_dir() else base
    dirs = [p for p in sorted(case_root.iterdir()) if p.is_dir()]
    if not dirs:
        raise BenchmarkError(f"no case directories under {case_root}")
    return dirs


def run_benchmark(
    root: "str | Path",
    config: "RunConfig | None" = None,
    prefer_scripts: bool = True,
    only: "set[str] | None" = None,
) -> BenchmarkReport:
    config = config or RunConfig()
    results = []
    for case_dir in discover_cases(root):
        if only and case_dir.name not in only:
            continue
        # one broken case must not take the rest of the batch down
        try:
            case = BenchmarkCase.load(case_dir)
        except WeboracleError as exc:
            results.append(CaseResult.errored(case_dir.name, str(exc)))
            continue
        try:
            results.append(run_case(case, config, prefer_scripts=prefer_scripts))
        except WeboracleError as exc:
            results.append(CaseResult.errored(case.case_id, str(exc), case.app_ref))
    return BenchmarkReport(results, config=config)


def write_report(report: BenchmarkReport, out_dir: "str | Path") -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_bytes(
        (json.dumps(report.to_dict(), indent=2) + "\n").encode("utf-8")
    )
    (out / "report.txt").write_text(report.render_text(), encoding="utf-8")
    for result in report.results:
        case_out = out / result.case_id
        case_out.mkdir(exist_ok=True)
        for name, record in (("clean", result.clean_record), ("bugged", result.bug_record)):
            (case_out / f"run_{name}.json").write_bytes(
                (json.dumps(record, indent=2) + "\n").encode("utf-8")
            )

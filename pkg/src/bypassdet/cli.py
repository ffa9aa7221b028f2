"""Command-line pipeline: simulate, featurize, train, detect, tcg, report.

Data goes to files only; diagnostics go to stderr. Exit codes: 0 success,
2 usage or validation error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .cdr import (SchemaError, clean, parse_cdr_file, parse_timestamp, read_labels, serialize_cdr,
                  slice_window)
from .features import FeatureMatrix, extract, label_vector
from .learn import MODEL_KINDS, ColumnMismatchError, MlpTrainingError, Pipeline, SplitError, evaluate, fit_pipeline
from .learn.models import crosstab
from .synth import AntiSpamConfig, ConfigError, World, generate, load_config, read_truth, write_world
from .tcg import CampaignReport, ProbeCampaign, compare, format_comparison, probe_records, run_campaign, to_json
from .learn.metrics import EvalReport

DEFAULT_SEED = 42
DEFAULT_TRAIN_FRACTION = 2 / 3

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _diag(msg: str) -> None:
    print(msg, file=sys.stderr)


@dataclass
class RunManifest:
    subcommand: str
    params: dict[str, Any]
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    tool_version: str = __version__
    started: str = ""
    finished: str = ""

    @property
    def run_id(self) -> str:
        # depends only on what was asked for, so reruns produce identical artifacts
        key = json.dumps([self.subcommand, self.params, self.inputs], sort_keys=True, default=str)
        return hashlib.sha256(key.encode()).hexdigest()[:16]

    def add_input(self, path: str | Path) -> None:
        self.inputs[Path(path).name] = sha256_file(path)

    def add_output(self, path: str | Path) -> None:
        self.outputs[Path(path).name] = sha256_file(path)

    def to_dict(self) -> dict[str, Any]:
        return {"run_id": self.run_id, "subcommand": self.subcommand, "params": self.params,
                "inputs": self.inputs, "outputs": self.outputs, "tool_version": self.tool_version,
                "started": self.started, "finished": self.finished}

    def write(self, out_dir: Path) -> None:
        """Append this run to ``out_dir/manifest.json``."""
        path = out_dir / "manifest.json"
        runs = json.loads(path.read_text())["runs"] if path.exists() else []
        runs.append(self.to_dict())
        path.write_text(json.dumps({"runs": runs}, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _write_json(path: Path, payload: dict[str, Any]) -> None:
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _sibling(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


def _parse_value(text: str) -> Any:
    low = text.lower()
    if low in ("none", "null"):
        return None
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


# ---------------------------------------------------------------- subcommands


def cmd_simulate(args: argparse.Namespace) -> int:
    if not args.config:
        raise CliError("simulate requires --config")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        cfg.check()
    except ConfigError as exc:
        for v in exc.violations:
            _diag(f"config error: {v}")
        raise CliError("invalid scenario configuration") from None
    out = Path(args.out)
    man = RunManifest("simulate", {"config": cfg.to_dict()}, started=_now())
    man.add_input(args.config)
    world = generate(cfg)
    paths = write_world(out, world)
    for p in paths.values():
        man.add_output(p)
    man.finished = _now()
    man.write(out)
    labels = world.truth.labels
    _diag(f"wrote {len(world.dataset)} records, {len(labels)} SIMs "
          f"({len(world.truth.fraud_sims)} fraud) to {out}")
    return EXIT_OK


def cmd_featurize(args: argparse.Namespace) -> int:
    try:
        parsed = parse_cdr_file(args.cdr)
    except SchemaError as exc:
        raise CliError(f"schema error in {args.cdr}: {exc}") from None
    for line_no, reason in parsed.rejected:
        _diag(f"{args.cdr}:{line_no}: rejected: {reason}")
    dataset, stats = clean(parsed.dataset, parsed.extra_columns)
    if args.start or args.end:
        start = parse_timestamp(args.start) if args.start else dataset.window_start
        end = parse_timestamp(args.end) if args.end else dataset.window_end
        dataset = slice_window(dataset, start, end)
    if parsed.rejected and not dataset.records:
        raise CliError("no record survived parsing and cleaning")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    params = {"start": args.start, "end": args.end}
    man = RunManifest("featurize", params, started=_now())
    man.add_input(args.cdr)
    extract(dataset).write_csv(out)
    stats_path = _sibling(out, ".clean.json")
    stats_path.write_text(stats.to_json() + "\n", encoding="utf-8")
    man.add_output(out)
    man.add_output(stats_path)
    man.finished = _now()
    man.write(out.parent)
    _diag(f"clean stats: {stats.to_json()}; {len(parsed.rejected)} rejected rows")
    return EXIT_OK


def _load_features(path: str) -> FeatureMatrix:
    try:
        return FeatureMatrix.read_csv(path)
    except (ValueError, OSError) as exc:
        raise CliError(f"cannot read features {path}: {exc}") from None


def cmd_train(args: argparse.Namespace) -> int:
    if args.model not in MODEL_KINDS:
        raise CliError(f"unknown model kind {args.model!r}; choose from {', '.join(MODEL_KINDS)}")
    seed = DEFAULT_SEED if args.seed is None else args.seed
    overrides = {}
    for item in args.param or []:
        if "=" not in item:
            raise CliError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = _parse_value(v.strip())
    m = _load_features(args.features)
    try:
        labels = read_labels(args.labels)
        y = label_vector(m, labels)
    except (SchemaError, ValueError, KeyError) as exc:
        raise CliError(f"labels do not align with features: {exc}") from None

    from .learn import split
    from .tcg import world_id

    try:
        sp = split(y, args.train_fraction, seed)
        pipe = fit_pipeline(args.model, m.rows(sp.train), y[sp.train], overrides, seed,
                            select_k=args.select, pca_k=args.pca)
    except (SplitError, ValueError) as exc:
        raise CliError(str(exc)) from None
    except MlpTrainingError as exc:
        raise CliError(str(exc), EXIT_RUNTIME) from None

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    params = {"model": args.model, "hyperparameters": pipe.params, "seed": seed,
              "train_fraction": args.train_fraction, "select": args.select, "pca": args.pca}
    man = RunManifest("train", params, started=_now())
    man.add_input(args.features)
    man.add_input(args.labels)

    test = m.rows(sp.test)
    report = evaluate(pipe.predict(test), y[sp.test], test.sim_ids, model=args.model, params=pipe.params,
                      world_id=world_id(labels))
    pipe.save(out)
    payload = {"type": "eval_report", "manifest": man.run_id, "train_fraction": args.train_fraction,
               "n_train": int(len(sp.train)), **report.to_dict()}
    if args.model == "kmeans":
        assignment = pipe.model.result.predict(pipe.transform(m))
        payload["crosstab"] = crosstab(assignment, y, pipe.params["k"])
        payload["fraud_clusters"] = pipe.model.fraud_clusters
    report_path = _sibling(out, ".report.json")
    _write_json(report_path, payload)
    _sibling(out, ".report.txt").write_text(report.to_text(), encoding="utf-8")
    for p in (out, report_path, _sibling(out, ".report.txt")):
        man.add_output(p)
    man.finished = _now()
    man.write(out.parent)
    _diag(f"{args.model}: test accuracy {report.accuracy:.4f}, precision {report.precision:.4f}, "
          f"recall {report.recall:.4f}, fpr {report.fpr:.4f}")
    return EXIT_OK


def cmd_detect(args: argparse.Namespace) -> int:
    m = _load_features(args.features)
    try:
        pipe = Pipeline.load(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot load model {args.model}: {exc}") from None
    try:
        flags = pipe.predict(m)
    except ColumnMismatchError as exc:
        raise CliError(f"feature columns do not match the model: {exc}") from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    man = RunManifest("detect", {"model": Path(args.model).name}, started=_now())
    man.add_input(args.features)
    man.add_input(args.model)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("sim_id", "flag"))
    for sim, flag in zip(m.sim_ids, flags):
        writer.writerow((sim, int(flag)))
    out.write_text(buf.getvalue(), encoding="utf-8")
    man.add_output(out)
    man.finished = _now()
    man.write(out.parent)
    _diag(f"flagged {int(np.sum(flags))} of {len(flags)} SIMs")
    return EXIT_OK


def load_world(world_dir: str | Path) -> World:
    d = Path(world_dir)
    try:
        parsed = parse_cdr_file(d / "cdr.csv")
        labels = read_labels(d / "labels.csv")
        truth, cfg = read_truth(d / "truth.json", labels)
    except (OSError, SchemaError, ValueError, KeyError) as exc:
        raise CliError(f"cannot load world from {d}: {exc}") from None
    dataset, _ = clean(parsed.dataset)
    return World(dataset, truth, cfg)


def cmd_tcg(args: argparse.Namespace) -> int:
    world = load_world(args.world)
    seed = DEFAULT_SEED if args.seed is None else args.seed
    antispam = world.config.antispam
    if args.block_prob is not None or args.reroute_prob is not None:
        antispam = AntiSpamConfig(
            enabled=True,
            block_prob=antispam.block_prob if args.block_prob is None else args.block_prob,
            reroute_prob=antispam.reroute_prob if args.reroute_prob is None else args.reroute_prob,
        )
    violations = [v for v in replace(world.config, antispam=antispam).validate() if v.startswith("antispam")]
    if violations:
        raise CliError("; ".join(violations))
    try:
        report = run_campaign(world, ProbeCampaign(args.probes, seed, unit_cost=args.unit_cost), antispam)
    except (ConfigError, ValueError) as exc:
        raise CliError(str(exc)) from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    params = {"probes": args.probes, "seed": seed, "antispam": asdict(antispam), "unit_cost": args.unit_cost}
    man = RunManifest("tcg", params, started=_now())
    for name in ("cdr.csv", "labels.csv", "truth.json"):
        man.add_input(Path(args.world) / name)
    _write_json(out, {"manifest": man.run_id, **report.to_dict()})
    _sibling(out, ".txt").write_text(report.to_text(), encoding="utf-8")
    man.add_output(out)
    man.add_output(_sibling(out, ".txt"))
    if args.emit_probe_cdrs:
        probed = _sibling(out, ".cdr.csv")
        records = sorted(world.dataset.records + tuple(probe_records(world, report)), key=lambda r: r.sort_key())
        probed.write_text(serialize_cdr(records), encoding="utf-8")
        man.add_output(probed)
    man.finished = _now()
    man.write(out.parent)
    _diag(f"tcg: {len(report.detected)} of {report.n_fraud_sims} fraud SIMs detected with {args.probes} probes")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    run = Path(args.run)
    if not run.is_dir():
        raise CliError(f"run directory {run} does not exist")
    evals: dict[str, EvalReport] = {}
    campaigns: dict[str, CampaignReport] = {}
    sources: list[Path] = []
    for path in sorted(run.glob("*.json")):
        if path.name in ("report.json", "manifest.json"):
            continue
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            continue
        if not isinstance(data, dict):
            continue
        if data.get("type") == "eval_report":
            evals[path.name.removesuffix(".report.json")] = EvalReport.from_dict(data)
            sources.append(path)
        elif data.get("type") == "campaign_report":
            campaigns[path.stem] = CampaignReport.from_dict(data)
            sources.append(path)
    if not evals and not campaigns:
        raise CliError("nothing to report")
    rows = []
    for cname, camp in (campaigns.items() if campaigns else [(None, None)]):
        try:
            for row in compare(camp, evals):
                rows.append((cname, row))
        except ValueError as exc:
            raise CliError(str(exc)) from None
    payload = {
        "type": "comparison",
        "rows": [{"campaign": c, **r.to_dict()} for c, r in rows],
        "models": {k: {"accuracy": v.accuracy, "precision": v.precision, "recall": v.recall, "f1": v.f1,
                       "fpr": v.fpr, "tp": v.tp, "fp": v.fp, "tn": v.tn, "fn": v.fn} for k, v in evals.items()},
        "campaigns": {k: {"detection_rate": v.detection_rate, "probes": v.probes_spent, "cost": v.cost}
                      for k, v in campaigns.items()},
    }
    man = RunManifest("report", {"run": run.name}, started=_now())
    for path in sources:
        man.add_input(path)
    _write_json(run / "report.json", {"manifest": man.run_id, **payload})
    text = format_comparison([r for _, r in rows])
    (run / "report.txt").write_text(text, encoding="utf-8")
    man.add_output(run / "report.json")
    man.add_output(run / "report.txt")
    man.finished = _now()
    man.write(run)
    _diag(text.rstrip())
    return EXIT_OK


# ---------------------------------------------------------------- entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bypassdet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p: argparse.ArgumentParser, out_help: str) -> None:
        p.add_argument("--seed", type=int, default=None, help=f"RNG seed (default {DEFAULT_SEED})")
        p.add_argument("--out", required=True, help=out_help)
        p.add_argument("--config", default=None, help="scenario config file (key=value)")

    p = sub.add_parser("simulate", help="generate a labeled synthetic world")
    common(p, "output world directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("featurize", help="clean a CDR file and extract per-SIM features")
    common(p, "feature CSV to write")
    p.add_argument("--cdr", required=True)
    p.add_argument("--start", default=None, help="window start, YYYY-MM-DDTHH:MM:SSZ")
    p.add_argument("--end", default=None, help="window end (exclusive)")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train a detector and evaluate it on a held-out split")
    common(p, "model JSON to write")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--model", required=True, help=f"one of {', '.join(MODEL_KINDS)}")
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="hyperparameter override")
    p.add_argument("--train-fraction", type=float, default=DEFAULT_TRAIN_FRACTION)
    p.add_argument("--select", type=int, default=None, help="keep the top-K correlated features")
    p.add_argument("--pca", type=int, default=None, help="project onto K principal components")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="flag SIMs with a trained model")
    common(p, "flags CSV to write")
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True, help="model JSON from train")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("tcg", help="simulate a test-call-generation campaign")
    common(p, "campaign report JSON to write")
    p.add_argument("--world", required=True, help="directory written by simulate")
    p.add_argument("--probes", type=int, required=True)
    p.add_argument("--block-prob", type=float, default=None)
    p.add_argument("--reroute-prob", type=float, default=None)
    p.add_argument("--unit-cost", type=float, default=1.0)
    p.add_argument("--emit-probe-cdrs", action="store_true", help="also write the world CDRs plus probe records")
    p.set_defaults(func=cmd_tcg)

    p = sub.add_parser("report", help="consolidate model and campaign reports of a run directory")
    p.add_argument("--run", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="ignored; report files go into the run directory")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    func: Callable[[argparse.Namespace], int] = args.func
    try:
        return func(args)
    except CliError as exc:
        _diag(f"error: {exc}")
        return exc.code
    except OSError as exc:
        _diag(f"error: {exc}")
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - the exit-code contract covers every failure
        _diag(f"runtime failure: {type(exc).__name__}: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

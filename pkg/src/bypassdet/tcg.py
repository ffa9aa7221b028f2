"""Test-call-generation campaigns against a synthetic world.

A probe is an international call placed to a number the fraud team owns.
If it arrives with a local caller id, the presenting SIM is a SIMbox SIM.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from datetime import timedelta
from typing import Any, Mapping, Sequence

import numpy as np

from .cdr import CdrRecord, Direction, Label, Service, serialize_labels
from .learn.metrics import EvalReport
from .synth import AntiSpamConfig, ConfigError, World

DAY = 86_400
HOUR = 3_600
PROBE_DURATION_SEC = 30


class Route(str, enum.Enum):
    LEGITIMATE = "LEGITIMATE"
    BYPASS = "BYPASS"
    BLOCKED = "BLOCKED"
    REROUTED = "REROUTED"


def world_id(labels: Mapping[str, Label]) -> str:
    """Identifier of a world: SHA-256 prefix of its serialized label table."""
    return hashlib.sha256(serialize_labels(labels).encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class ProbeCampaign:
    n_probes: int
    seed: int = 42
    target_numbers: tuple[str, ...] = ()
    unit_cost: float = 1.0

    def __post_init__(self):
        if not self.target_numbers:
            n = 10
            ids = tuple(hashlib.blake2b(f"tcg:{self.seed}:{i}".encode(), digest_size=8).hexdigest()
                        for i in range(n))
            object.__setattr__(self, "target_numbers", ids)
        if self.n_probes < 1:
            raise ValueError("n_probes must be >= 1")


@dataclass(frozen=True)
class ProbeResult:
    offset_sec: int
    target: str
    route: Route
    presented_caller: str
    detected_sim: str | None = None

    def __post_init__(self):
        if (self.detected_sim is not None) != (self.route is Route.BYPASS):
            raise ValueError("detected_sim is set exactly when the probe took the bypass route")


@dataclass
class CampaignReport:
    detected: list[str]
    n_fraud_sims: int
    probes_spent: int
    unit_cost: float
    probes: list[ProbeResult] = field(default_factory=list)
    world_id: str = ""
    seed: int = 42

    @property
    def detection_rate(self) -> float:
        return len(self.detected) / self.n_fraud_sims if self.n_fraud_sims else 0.0

    @property
    def cost(self) -> float:
        return self.probes_spent * self.unit_cost

    def route_counts(self) -> dict[str, int]:
        counts = {r.value: 0 for r in Route}
        for p in self.probes:
            counts[p.route.value] += 1
        return counts

    def false_positives(self, labels: Mapping[str, Label]) -> int:
        return sum(1 for s in self.detected if labels.get(s) is not Label.FRAUD)

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "campaign_report",
            "world_id": self.world_id,
            "seed": self.seed,
            "detected": self.detected,
            "detection_rate": self.detection_rate,
            "n_fraud_sims": self.n_fraud_sims,
            "probes_spent": self.probes_spent,
            "unit_cost": self.unit_cost,
            "cost": self.cost,
            "route_counts": self.route_counts(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CampaignReport":
        return cls(list(d["detected"]), int(d["n_fraud_sims"]), int(d["probes_spent"]), float(d["unit_cost"]),
                   world_id=d.get("world_id", ""), seed=int(d.get("seed", 42)))

    def to_text(self) -> str:
        lines = [f"probes       {self.probes_spent}", f"cost         {self.cost:g}"]
        lines += [f"{k.lower():<12} {v}" for k, v in self.route_counts().items()]
        lines += [f"detected     {len(self.detected)} / {self.n_fraud_sims}",
                  f"detection    {self.detection_rate:.4f}"]
        return "\n".join(lines) + "\n"


def run_campaign(world: World, campaign: ProbeCampaign, antispam: AntiSpamConfig | None = None) -> CampaignReport:
    """Route every probe independently and collect the SIMs it exposes.

    ``antispam`` overrides the world's configured countermeasure.
    """
    cfg, truth = world.config, world.truth
    antispam = cfg.antispam if antispam is None else antispam
    fraud = truth.fraud_sims
    if not fraud and cfg.bypass_fraction > 0:
        raise ConfigError(["world has no fraud SIMs but bypass_fraction > 0"])
    span = int((world.dataset.window_end - world.dataset.window_start).total_seconds())
    rng = np.random.default_rng(campaign.seed)
    n = campaign.n_probes
    # fixed draws per probe keep campaigns coupled across antispam settings
    offsets = rng.integers(0, max(span, 1), n)
    targets = rng.integers(0, len(campaign.target_numbers), n)
    u_route, u_spam, u_pick = rng.random((3, n))
    intl_caller = rng.integers(0, 10**9, n)

    block = antispam.block_prob if antispam.enabled else 0.0
    reroute = antispam.reroute_prob if antispam.enabled else 0.0
    probes: list[ProbeResult] = []
    detected: set[str] = set()
    for i in range(n):
        t = int(offsets[i])
        target = campaign.target_numbers[targets[i]]
        caller = f"intl-{int(intl_caller[i]):09d}"
        if u_route[i] >= cfg.bypass_fraction:
            probes.append(ProbeResult(t, target, Route.LEGITIMATE, caller))
            continue
        if u_spam[i] < block:
            probes.append(ProbeResult(t, target, Route.BLOCKED, caller))
            continue
        if u_spam[i] < block + reroute:
            probes.append(ProbeResult(t, target, Route.REROUTED, caller))
            continue
        hour = (t % DAY) / HOUR
        active = [s for s in fraud if _on_shift(truth.shift_assignment.get(s), hour)]
        if not active:
            probes.append(ProbeResult(t, target, Route.LEGITIMATE, caller))
            continue
        sim = active[int(u_pick[i] * len(active))]
        detected.add(sim)
        probes.append(ProbeResult(t, target, Route.BYPASS, sim, sim))
    return CampaignReport(sorted(detected), len(fraud), n, campaign.unit_cost, probes,
                          world_id(truth.labels), campaign.seed)


def _on_shift(shift: tuple[float, float] | None, hour: float) -> bool:
    if shift is None:
        return True
    start, length = shift
    return (hour - start) % 24.0 < length


def probe_records(world: World, report: CampaignReport) -> list[CdrRecord]:
    """MO records that bypassed probes leave at the exposed SIMs."""
    last_seen: dict[str, list[CdrRecord]] = {}
    for r in world.dataset.records:
        last_seen.setdefault(r.sim_id, []).append(r)
    start = world.dataset.window_start
    out = []
    for n, p in enumerate(report.probes):
        if p.route is not Route.BYPASS:
            continue
        ts = start + timedelta(seconds=p.offset_sec)
        history = last_seen.get(p.detected_sim, [])
        before = [r for r in history if r.timestamp <= ts]
        ref = before[-1] if before else (history[0] if history else None)
        out.append(CdrRecord(
            hashlib.blake2b(f"probe:{report.seed}:{n}".encode(), digest_size=10).hexdigest(),
            ts, p.detected_sim,
            ref.imei if ref else "", ref.imsi if ref else "", p.target,
            ref.cell_id if ref else "",
            Direction.MO, Service.VOICE, PROBE_DURATION_SEC, False,
        ))
    return out


@dataclass(frozen=True)
class ComparisonRow:
    model: str | None
    ml_recall: float | None
    ml_false_positives: int | None
    ml_flagged: int | None
    tcg_recall: float | None
    tcg_false_positives: int | None
    tcg_flagged: int | None
    tcg_probes: int | None
    tcg_cost: float | None

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def compare(report: CampaignReport | None, ml_reports: Mapping[str, EvalReport],
            truth_labels: Mapping[str, Label] | None = None) -> list[ComparisonRow]:
    """Side-by-side recall / false positives / cost of TCG and each ML model."""
    for name, ml in ml_reports.items():
        if report is not None and report.world_id and ml.world_id and report.world_id != ml.world_id:
            raise ValueError(f"model {name!r} was evaluated on world {ml.world_id}, "
                             f"campaign ran on world {report.world_id}")
    tcg: dict[str, Any] = dict(tcg_recall=None, tcg_false_positives=None, tcg_flagged=None,
                               tcg_probes=None, tcg_cost=None)
    if report is not None:
        fps = report.false_positives(truth_labels) if truth_labels is not None else 0
        tcg = dict(tcg_recall=report.detection_rate, tcg_false_positives=fps, tcg_flagged=len(report.detected),
                   tcg_probes=report.probes_spent, tcg_cost=report.cost)
    if not ml_reports:
        return [ComparisonRow(None, None, None, None, **tcg)] if report is not None else []
    return [ComparisonRow(name, ml.recall, ml.fp, len(ml.flagged), **tcg) for name, ml in ml_reports.items()]


def format_comparison(rows: Sequence[ComparisonRow]) -> str:
    def cell(v):
        if v is None:
            return "-"
        return f"{v:.4f}" if isinstance(v, float) else str(v)

    header = ("model", "ml_recall", "ml_fp", "ml_flagged", "tcg_recall", "tcg_fp", "tcg_probes", "tcg_cost")
    body = [(r.model, r.ml_recall, r.ml_false_positives, r.ml_flagged, r.tcg_recall, r.tcg_false_positives,
             r.tcg_probes, r.tcg_cost) for r in rows]
    table = [header] + [tuple(cell(v) for v in row) for row in body]
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    return "\n".join("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() for row in table) + "\n"


def to_json(payload: Any) -> str:
    return json.dumps(payload, indent=1, sort_keys=True) + "\n"

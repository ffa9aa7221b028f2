"""Labeled synthetic CDR worlds: subscribers, SIMbox fleets and HBS evasion.

Everything is driven by one :class:`numpy.random.SeedSequence` per scenario,
split into independent child streams so that toggling a fraud-side behavior
(e.g. migration) never perturbs subscriber traffic.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .cdr import CdrRecord, Dataset, Direction, Label, Service, write_cdr_file, write_labels

WORLD_START = datetime(2024, 1, 1, tzinfo=timezone.utc)
DAY = 86_400
HOUR = 3_600

# relative hourly activity of legitimate subscribers (UTC clock hours)
DIURNAL = np.array(
    [0.15, 0.08, 0.05, 0.04, 0.04, 0.08, 0.25, 0.55,
     0.9, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0,
     1.0, 1.05, 1.1, 1.15, 1.15, 1.1, 0.95, 0.8]
)
DIURNAL = DIURNAL / DIURNAL.sum()

# per-day base rates of a subscriber's own traffic
BASE_RATES = {"mo_voice": 2.0, "mt_voice": 2.0, "sms": 1.5, "data": 1.5}
SUBSCRIBER_MEDIAN_SEC = 90.0
BYPASS_MEDIAN_SEC = 180.0
MIMIC_VOICE_MEDIAN_SEC = 60.0
INTL_RECEIVER_SHARE = 0.4
DATA_MEDIAN_SEC = 300.0


class ConfigError(ValueError):
    """Invalid scenario configuration; ``violations`` lists every problem."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass
class HbsConfig:
    migration: bool = False
    swap_period_hours: float = 24.0
    rotation: bool = False
    shift_hours: float = 8.0
    service_mimicry: bool = False
    mimic_events_per_day: float = 4.0
    family_lists: bool = False
    family_size: int = 5

    @classmethod
    def all_on(cls, **overrides) -> "HbsConfig":
        return cls(migration=True, rotation=True, service_mimicry=True, family_lists=True, **overrides)


@dataclass
class AntiSpamConfig:
    enabled: bool = False
    block_prob: float = 0.0
    reroute_prob: float = 0.0


@dataclass
class ScenarioConfig:
    seed: int = 42
    days: int = 30
    n_subscribers: int = 2000
    cells: int = 50
    n_simboxes: int = 5
    sims_per_box: int = 20
    intl_call_rate: float = 0.5
    bypass_fraction: float = 0.5
    hbs: HbsConfig = field(default_factory=HbsConfig)
    antispam: AntiSpamConfig = field(default_factory=AntiSpamConfig)
    # radio channels (IMEIs) per box; 0 means ceil(sims_per_box / 4)
    channels_per_box: int = 0
    # SIMs step to the next channel each day, so every channel sees every SIM
    channel_cycling: bool = False
    # legitimate handsets shared by 2-4 subscribers (family phones, dual use)
    shared_device_fraction: float = 0.0
    # heavy outgoing callers with wide contact lists
    business_fraction: float = 0.0

    @property
    def n_channels(self) -> int:
        return self.channels_per_box or math.ceil(self.sims_per_box / 4)

    @property
    def n_fraud_sims(self) -> int:
        return self.n_simboxes * self.sims_per_box

    def validate(self) -> list[str]:
        v: list[str] = []
        if not 0 <= self.seed < 2**64:
            v.append("seed: must be a 64-bit unsigned integer")
        for name in ("days", "n_subscribers", "cells", "sims_per_box"):
            if getattr(self, name) < 1:
                v.append(f"{name}: must be positive")
        if self.n_simboxes < 0:
            v.append("n_simboxes: must be non-negative")
        if self.intl_call_rate < 0:
            v.append("intl_call_rate: must be non-negative")
        if not 0.0 <= self.bypass_fraction <= 1.0:
            v.append("bypass_fraction: must lie in [0, 1]")
        if self.channels_per_box < 0:
            v.append("channels_per_box: must be non-negative")
        for name in ("shared_device_fraction", "business_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                v.append(f"{name}: must lie in [0, 1]")
        h = self.hbs
        if h.migration:
            if h.swap_period_hours <= 0:
                v.append("hbs.swap_period_hours: must be positive")
            if self.n_simboxes < 2:
                v.append("hbs.migration: requires at least 2 simbox sites")
        if h.rotation and not 0 < h.shift_hours <= 24:
            v.append("hbs.shift_hours: must lie in (0, 24]")
        if h.service_mimicry and h.mimic_events_per_day < 0:
            v.append("hbs.mimic_events_per_day: must be non-negative")
        if h.family_lists:
            if h.family_size < 1:
                v.append("hbs.family_size: must be positive")
            elif h.family_size > self.n_subscribers:
                v.append("hbs.family_size: exceeds n_subscribers")
        a = self.antispam
        for name in ("block_prob", "reroute_prob"):
            if not 0.0 <= getattr(a, name) <= 1.0:
                v.append(f"antispam.{name}: must lie in [0, 1]")
        if a.block_prob + a.reroute_prob > 1.0 + 1e-12:
            v.append(f"antispam: block_prob + reroute_prob = {a.block_prob + a.reroute_prob:g} exceeds 1")
        return v

    def check(self) -> "ScenarioConfig":
        violations = self.validate()
        if violations:
            raise ConfigError(violations)
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioConfig":
        data = dict(data)
        hbs = HbsConfig(**data.pop("hbs", {}))
        antispam = AntiSpamConfig(**data.pop("antispam", {}))
        return cls(hbs=hbs, antispam=antispam, **data)


# ---------------------------------------------------------------- config file


def _convert(text: str, typ: type) -> Any:
    if typ is bool:
        low = text.strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    return typ(text.strip())


def _field_types(obj) -> dict[str, type]:
    hints = {"bool": bool, "int": int, "float": float}
    return {f.name: hints.get(f.type, f.type) for f in dataclasses.fields(obj)}


def parse_config_text(text: str) -> ScenarioConfig:
    """Parse ``key=value`` lines (dotted keys for nested sections)."""
    cfg = ScenarioConfig()
    errors: list[str] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {line_no}: expected key=value")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        target, name = cfg, key
        if "." in key:
            section, name = key.split(".", 1)
            if section not in ("hbs", "antispam"):
                errors.append(f"{key}: unknown section {section!r}")
                continue
            target = getattr(cfg, section)
        types = _field_types(target)
        if name not in types or types[name] not in (bool, int, float):
            errors.append(f"{key}: unknown key")
            continue
        try:
            setattr(target, name, _convert(value, types[name]))
        except ValueError as exc:
            errors.append(f"{key}: {exc}")
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path: str | Path) -> ScenarioConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def format_config(cfg: ScenarioConfig) -> str:
    lines = []
    for key, value in cfg.to_dict().items():
        if isinstance(value, dict):
            lines += [f"{key}.{k}={_fmt(v)}" for k, v in value.items()]
        else:
            lines.append(f"{key}={_fmt(value)}")
    return "\n".join(lines) + "\n"


def _fmt(v: Any) -> str:
    return str(v).lower() if isinstance(v, bool) else str(v)


# ---------------------------------------------------------------- ground truth


@dataclass
class GroundTruth:
    labels: dict[str, Label]
    box_assignment: dict[str, int] = field(default_factory=dict)
    family_assignment: dict[str, list[str]] = field(default_factory=dict)
    # sim_id -> (start hour, shift length in hours)
    shift_assignment: dict[str, tuple[float, float]] = field(default_factory=dict)
    sites: list[dict[str, Any]] = field(default_factory=list)

    @property
    def fraud_sims(self) -> list[str]:
        return sorted(s for s, lab in self.labels.items() if lab is Label.FRAUD)

    def to_dict(self) -> dict[str, Any]:
        return {
            "box_assignment": dict(sorted(self.box_assignment.items())),
            "family_assignment": {k: list(v) for k, v in sorted(self.family_assignment.items())},
            "shift_assignment": {k: list(v) for k, v in sorted(self.shift_assignment.items())},
            "sites": self.sites,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any], labels: dict[str, Label]) -> "GroundTruth":
        return cls(
            labels=dict(labels),
            box_assignment={k: int(v) for k, v in data.get("box_assignment", {}).items()},
            family_assignment={k: list(v) for k, v in data.get("family_assignment", {}).items()},
            shift_assignment={k: (float(v[0]), float(v[1])) for k, v in data.get("shift_assignment", {}).items()},
            sites=list(data.get("sites", [])),
        )


# ---------------------------------------------------------------- fleet layout


def _streams(cfg: ScenarioConfig) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(7)]


def _hid(seed: int, kind: str, idx: int) -> str:
    return hashlib.blake2b(f"{seed}:{kind}:{idx}".encode(), digest_size=8).hexdigest()


@dataclass
class Fleet:
    """Static description of the SIMbox fleet (sites, channels, SIM slots)."""

    sim_ids: list[str]
    imsis: list[str]
    box_of: np.ndarray  # fraud sim index -> home box
    slot_of: np.ndarray  # fraud sim index -> slot within its box
    site_cells: list[str]
    site_imeis: list[list[str]]
    n_channels: int
    channel_cycling: bool
    shift_start: np.ndarray | None = None  # hours; None when rotation is off
    shift_hours: float = 24.0

    @property
    def n_boxes(self) -> int:
        return len(self.site_cells)

    def channel(self, k: int, day: int) -> int:
        slot = int(self.slot_of[k])
        return (slot + day) % self.n_channels if self.channel_cycling else slot % self.n_channels

    def active(self, k: int, hour_of_day: float) -> bool:
        if self.shift_start is None:
            return True
        return (hour_of_day - self.shift_start[k]) % 24.0 < self.shift_hours


@dataclass
class MigrationSchedule:
    fleet: Fleet
    swap_period_hours: float
    world_start: datetime = WORLD_START

    def site_at(self, k: int, offset_sec: float) -> int:
        epoch = int(offset_sec // (self.swap_period_hours * HOUR))
        return (int(self.fleet.box_of[k]) + epoch % 2) % self.fleet.n_boxes


def apply_migration(schedule: MigrationSchedule, records: Iterable[CdrRecord]) -> list[CdrRecord]:
    """Move fraud SIMs between gateway sites at every swap epoch.

    On odd epochs the SIM homed in box ``b`` sits in the same slot of site
    ``(b + 1) mod n_sites`` and returns home on even epochs; its records take
    the current site's cell and channel IMEI. With two sites this is a
    pairwise exchange of SIM cards.
    """
    fleet = schedule.fleet
    if fleet.n_boxes < 2:
        raise ConfigError(["hbs.migration: requires at least 2 simbox sites"])
    index = {sim: k for k, sim in enumerate(fleet.sim_ids)}
    out = []
    for r in records:
        k = index.get(r.sim_id)
        if k is None:
            out.append(r)
            continue
        offset = (r.timestamp - schedule.world_start).total_seconds()
        site = schedule.site_at(k, offset)
        imei = fleet.site_imeis[site][fleet.channel(k, int(offset // DAY))]
        out.append(dataclasses.replace(r, cell_id=fleet.site_cells[site], imei=imei))
    return out


def assign_families(cfg: ScenarioConfig, subscriber_ids: Sequence[str] | None = None,
                    rng: np.random.Generator | None = None) -> dict[str, list[str]]:
    """Give every fraud SIM a fixed list of ``family_size`` subscriber targets."""
    h = cfg.hbs
    if h.family_size > cfg.n_subscribers:
        raise ConfigError(["hbs.family_size: exceeds n_subscribers"])
    if subscriber_ids is None:
        subscriber_ids = [_hid(cfg.seed, "sub", i) for i in range(cfg.n_subscribers)]
    if rng is None:
        rng = _streams(cfg)[6]
    fraud_ids = [_hid(cfg.seed, "sim", k) for k in range(cfg.n_fraud_sims)]
    return {
        sim: [subscriber_ids[i] for i in sorted(rng.choice(len(subscriber_ids), h.family_size, replace=False))]
        for sim in fraud_ids
    }


# ---------------------------------------------------------------- generation


@dataclass
class _Population:
    ids: list[str]
    imsis: list[str]
    imeis: list[str]
    cells: np.ndarray  # (n, 4) cell indices, padded by repeating
    cell_cum: np.ndarray  # (n, 4) cumulative choice weights
    peers: np.ndarray  # (n, P) indices into the peer pool, padded
    peer_cum: np.ndarray
    rates: np.ndarray  # (n, 4) per-day rates for mo_voice, mt_voice, sms, data
    intl_rate: np.ndarray
    peer_ids: list[str]  # on-net subscribers then off-net local numbers


def _choose(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise inverse-CDF pick: index of the first cum >= u."""
    return np.minimum((u[:, None] > cum).sum(axis=1), cum.shape[1] - 1)


def _lognormal_int(rng: np.random.Generator, median: float, sigma: float, size: int) -> np.ndarray:
    return np.maximum(1, np.rint(median * np.exp(sigma * rng.standard_normal(size)))).astype(np.int64)


def _build_population(cfg: ScenarioConfig, rng: np.random.Generator) -> _Population:
    n = cfg.n_subscribers
    ids = [_hid(cfg.seed, "sub", i) for i in range(n)]
    imsis = [_hid(cfg.seed, "sub-imsi", i) for i in range(n)]
    imeis = [_hid(cfg.seed, "sub-imei", i) for i in range(n)]

    n_shared = int(round(cfg.shared_device_fraction * n))
    if n_shared >= 2:
        members = rng.permutation(n)[:n_shared]
        pos = 0
        while pos < n_shared - 1:
            size = min(int(rng.integers(2, 5)), n_shared - pos)
            group = members[pos:pos + size]
            for m in group[1:]:
                imeis[m] = imeis[group[0]]
            pos += size

    cells = np.zeros((n, 4), dtype=np.int64)
    cell_cum = np.ones((n, 4))
    for i in range(n):
        n_other = min(int(rng.integers(1, 4)), cfg.cells - 1)
        picks = rng.choice(cfg.cells, 1 + n_other, replace=False)
        w = np.concatenate([[0.6], np.full(n_other, 0.4 / n_other)]) if n_other else np.array([1.0])
        cells[i] = np.resize(picks, 4)
        cell_cum[i, : len(w)] = np.cumsum(w)

    business = rng.random(n) < cfg.business_fraction
    pool = 2 * n  # peers: on-net subscribers [0, n) and off-net local numbers [n, 2n)
    sizes = np.minimum(np.where(business, rng.integers(25, 61, n), rng.integers(4, 13, n)), pool - 1)
    width = int(sizes.max())
    peers = np.zeros((n, width), dtype=np.int64)
    peer_cum = np.ones((n, width))
    for i in range(n):
        choice = rng.choice(pool - 1, sizes[i], replace=False)
        choice = choice + (choice >= i)  # never yourself
        w = 1.0 / np.arange(1, sizes[i] + 1)
        peers[i] = np.resize(choice, width)
        peer_cum[i, : sizes[i]] = np.cumsum(w / w.sum())

    activity = np.exp(0.5 * rng.standard_normal(n))
    jitter = np.exp(0.3 * rng.standard_normal((n, 4)))
    rates = np.array([BASE_RATES[k] for k in ("mo_voice", "mt_voice", "sms", "data")]) * activity[:, None] * jitter
    rates[business, 0] *= 4.0
    # most subscribers never receive international calls; the mean stays intl_call_rate
    has_abroad = rng.random(n) < INTL_RECEIVER_SHARE
    intl_rate = np.where(has_abroad, cfg.intl_call_rate / INTL_RECEIVER_SHARE, 0.0)
    intl_rate = intl_rate * np.exp(0.8 * rng.standard_normal(n) - 0.32)
    peer_ids = ids + [_hid(cfg.seed, "local", i) for i in range(n)]
    return _Population(ids, imsis, imeis, cells, cell_cum, peers, peer_cum, rates, intl_rate, peer_ids)


def _event_times(rng: np.random.Generator, days: int, size: int, hour_p: np.ndarray = DIURNAL) -> np.ndarray:
    day = rng.integers(0, days, size)
    hour = rng.choice(24, size=size, p=hour_p)
    sec = rng.integers(0, HOUR, size)
    return day * DAY + hour * HOUR + sec


# raw event tuple: (stream, offset_sec, sim, imei, imsi, peer, cell, dir, service, duration, intl)
_Raw = tuple


def _subscriber_events(cfg: ScenarioConfig, pop: _Population, rng: np.random.Generator) -> list[_Raw]:
    n = len(pop.ids)
    kinds = [
        (Direction.MO, Service.VOICE),
        (Direction.MT, Service.VOICE),
        (None, Service.SMS),
        (Direction.MO, Service.DATA),
    ]
    owners, times, kind_idx = [], [], []
    for j in range(4):
        counts = rng.poisson(pop.rates[:, j] * cfg.days)
        owners.append(np.repeat(np.arange(n), counts))
        kind_idx.append(np.full(counts.sum(), j))
    owner = np.concatenate(owners)
    kind = np.concatenate(kind_idx)
    total = len(owner)
    times = _event_times(rng, cfg.days, total)
    cell_pick = _choose(pop.cell_cum[owner], rng.random(total))
    cell = pop.cells[owner, cell_pick]
    peer_pick = _choose(pop.peer_cum[owner], rng.random(total))
    peer = pop.peers[owner, peer_pick]
    voice_dur = _lognormal_int(rng, SUBSCRIBER_MEDIAN_SEC, 0.9, total)
    data_dur = _lognormal_int(rng, DATA_MEDIAN_SEC, 1.0, total)
    sms_mo = rng.random(total) < 0.5

    # every subscriber with >= 2 own events is seen on >= 2 cells
    if cfg.cells >= 2 and total:
        order = np.lexsort((np.arange(total), owner))
        bounds = np.flatnonzero(np.diff(owner[order])) + 1
        for grp in np.split(order, bounds):
            if len(grp) >= 2 and np.all(cell[grp] == cell[grp[0]]):
                alt = pop.cells[owner[grp[0]]]
                cell[grp[-1]] = alt[alt != cell[grp[0]]][0]

    data_peer = _hid(cfg.seed, "apn", 0)
    events = []
    for e in range(total):
        i = int(owner[e])
        j = int(kind[e])
        direction, service = kinds[j]
        if service is Service.SMS:
            direction = Direction.MO if sms_mo[e] else Direction.MT
            duration, peer_id = 0, pop.peer_ids[peer[e]]
        elif service is Service.DATA:
            duration, peer_id = int(data_dur[e]), data_peer
        else:
            duration, peer_id = int(voice_dur[e]), pop.peer_ids[peer[e]]
        events.append(
            ("S", int(times[e]), pop.ids[i], pop.imeis[i], pop.imsis[i], peer_id,
             f"C{int(cell[e]):04d}", direction, service, duration, False)
        )
    return events


def _build_fleet(cfg: ScenarioConfig, rng: np.random.Generator) -> Fleet:
    nb, spb = cfg.n_simboxes, cfg.sims_per_box
    k = np.arange(nb * spb)
    site_idx = rng.choice(cfg.cells, nb, replace=nb > cfg.cells) if nb else np.array([], dtype=int)
    shift_start = None
    if cfg.hbs.rotation:
        h = cfg.hbs.shift_hours
        n_slots = math.ceil(24.0 / h - 1e-9)
        shift_start = ((k % spb) % n_slots) * h % 24.0
    return Fleet(
        sim_ids=[_hid(cfg.seed, "sim", i) for i in k],
        imsis=[_hid(cfg.seed, "sim-imsi", i) for i in k],
        box_of=k // spb,
        slot_of=k % spb,
        site_cells=[f"C{int(c):04d}" for c in site_idx],
        site_imeis=[[_hid(cfg.seed, f"box{b}-imei", c) for c in range(cfg.n_channels)] for b in range(nb)],
        n_channels=cfg.n_channels,
        channel_cycling=cfg.channel_cycling,
        shift_start=shift_start,
        shift_hours=cfg.hbs.shift_hours if cfg.hbs.rotation else 24.0,
    )


def _fraud_leg(fleet: Fleet, k: int, t: int) -> tuple[str, str, str]:
    """(imei, imsi, cell) of fraud SIM ``k`` at its home site."""
    b = int(fleet.box_of[k])
    return fleet.site_imeis[b][fleet.channel(k, t // DAY)], fleet.imsis[k], fleet.site_cells[b]


def _international_events(cfg: ScenarioConfig, pop: _Population, fleet: Fleet,
                          families: dict[str, list[str]], arrival_rng: np.random.Generator,
                          route_rng: np.random.Generator) -> tuple[list[_Raw], int, int]:
    n = len(pop.ids)
    counts = arrival_rng.poisson(pop.intl_rate * cfg.days)
    target = np.repeat(np.arange(n), counts)
    total = len(target)
    # international callers sit in other time zones: arrivals span the whole day
    times = arrival_rng.integers(0, cfg.days * DAY, total)
    cell = pop.cells[target, _choose(pop.cell_cum[target], arrival_rng.random(total))]
    z = arrival_rng.standard_normal(total)
    legit_dur = np.maximum(1, np.rint(SUBSCRIBER_MEDIAN_SEC * np.exp(0.9 * z))).astype(np.int64)
    bypass_dur = np.maximum(1, np.rint(BYPASS_MEDIAN_SEC * np.exp(0.7 * z))).astype(np.int64)
    intl_peer = arrival_rng.integers(0, 10 * n + 1, total)

    u_route, u_box, u_pick = route_rng.random((3, total))
    n_fraud = len(fleet.sim_ids)
    by_target: dict[int, list[int]] = {}
    if families:
        index = {sid: i for i, sid in enumerate(pop.ids)}
        for k, sim in enumerate(fleet.sim_ids):
            for member in families[sim]:
                by_target.setdefault(index[member], []).append(k)
    spb = cfg.sims_per_box

    events: list[_Raw] = []
    bypassed = 0
    for a in range(total):
        i, t = int(target[a]), int(times[a])
        sim = None
        if n_fraud and u_route[a] < cfg.bypass_fraction:
            if families:
                cands = by_target.get(i, [])
            else:
                b = int(u_box[a] * fleet.n_boxes)
                cands = range(b * spb, (b + 1) * spb)
            hour = (t % DAY) / HOUR
            cands = [k for k in cands if fleet.active(k, hour)]
            if cands:
                sim = cands[int(u_pick[a] * len(cands))]
        cell_id = f"C{int(cell[a]):04d}"
        if sim is None:
            peer = _hid(cfg.seed, "intl", int(intl_peer[a]))
            events.append(("I", t, pop.ids[i], pop.imeis[i], pop.imsis[i], peer, cell_id,
                           Direction.MT, Service.VOICE, int(legit_dur[a]), True))
            continue
        bypassed += 1
        imei, imsi, site = _fraud_leg(fleet, sim, t)
        dur = int(bypass_dur[a])
        events.append(("B", t, fleet.sim_ids[sim], imei, imsi, pop.ids[i], site,
                       Direction.MO, Service.VOICE, dur, False))
        events.append(("I", t, pop.ids[i], pop.imeis[i], pop.imsis[i], fleet.sim_ids[sim], cell_id,
                       Direction.MT, Service.VOICE, dur, False))
    return events, total, bypassed


def _mimic_times(fleet: Fleet, k: int, days: int, size: int, rng: np.random.Generator) -> np.ndarray:
    if fleet.shift_start is None:
        return _event_times(rng, days, size)
    day = rng.integers(0, days, size)
    tod = (fleet.shift_start[k] + fleet.shift_hours * rng.random(size)) % 24.0
    return day * DAY + np.minimum(np.floor(tod * HOUR), DAY - 1).astype(np.int64)


def mimic_services(cfg: ScenarioConfig, fleet: Fleet, rng: np.random.Generator) -> list[_Raw]:
    """Fleet-internal SMS/short calls (both legs) plus occasional data sessions."""
    rate = cfg.hbs.mimic_events_per_day
    events: list[_Raw] = []
    spb = cfg.sims_per_box
    data_peer = _hid(cfg.seed, "apn", 0)
    for k in range(len(fleet.sim_ids)):
        box = int(fleet.box_of[k])
        mates = [m for m in range(box * spb, (box + 1) * spb) if m != k]
        n_ev = int(rng.poisson(rate * cfg.days))
        times = _mimic_times(fleet, k, cfg.days, n_ev, rng)
        u_peer, u_kind = rng.random((2, n_ev))
        durs = _lognormal_int(rng, MIMIC_VOICE_MEDIAN_SEC, 0.6, n_ev)
        for e in range(n_ev):
            t = int(times[e])
            hour = (t % DAY) / HOUR
            peers = [m for m in mates if fleet.active(m, hour)]
            if not peers:
                continue
            m = peers[int(u_peer[e] * len(peers))]
            service = Service.SMS if u_kind[e] < 0.6 else Service.VOICE
            dur = 0 if service is Service.SMS else int(durs[e])
            imei, imsi, cell = _fraud_leg(fleet, k, t)
            events.append(("M", t, fleet.sim_ids[k], imei, imsi, fleet.sim_ids[m], cell,
                           Direction.MO, service, dur, False))
            imei, imsi, cell = _fraud_leg(fleet, m, t)
            events.append(("M", t, fleet.sim_ids[m], imei, imsi, fleet.sim_ids[k], cell,
                           Direction.MT, service, dur, False))
        n_data = int(rng.poisson(rate / 2 * cfg.days))
        times = _mimic_times(fleet, k, cfg.days, n_data, rng)
        durs = _lognormal_int(rng, DATA_MEDIAN_SEC, 1.0, n_data)
        for e in range(n_data):
            t = int(times[e])
            imei, imsi, cell = _fraud_leg(fleet, k, t)
            events.append(("D", t, fleet.sim_ids[k], imei, imsi, data_peer, cell,
                           Direction.MO, Service.DATA, int(durs[e]), False))
    return events


def _to_records(cfg: ScenarioConfig, events: list[_Raw]) -> list[CdrRecord]:
    counters: dict[str, int] = {}
    out = []
    for ev in events:
        stream = ev[0]
        n = counters.get(stream, 0)
        counters[stream] = n + 1
        out.append(CdrRecord(
            hashlib.blake2b(f"{cfg.seed}:{stream}:{n}".encode(), digest_size=10).hexdigest(),
            WORLD_START + timedelta(seconds=ev[1]),
            *ev[2:],
        ))
    return out


@dataclass
class World:
    dataset: Dataset
    truth: GroundTruth
    config: ScenarioConfig
    international_arrivals: int = 0
    bypassed_calls: int = 0

    def __iter__(self):
        return iter((self.dataset, self.truth))


def generate(cfg: ScenarioConfig) -> World:
    """Build a labeled world; a pure function of ``cfg``.

    Unpacks as ``dataset, truth = generate(cfg)``.
    """
    cfg.check()
    pop_rng, traffic_rng, arrival_rng, fleet_rng, mimic_rng, route_rng, family_rng = _streams(cfg)

    pop = _build_population(cfg, pop_rng)
    fleet = _build_fleet(cfg, fleet_rng)
    families = assign_families(cfg, pop.ids, family_rng) if cfg.hbs.family_lists and fleet.sim_ids else {}

    events = _subscriber_events(cfg, pop, traffic_rng)
    intl, arrivals, bypassed = _international_events(cfg, pop, fleet, families, arrival_rng, route_rng)
    events += intl
    if cfg.hbs.service_mimicry:
        events += mimic_services(cfg, fleet, mimic_rng)

    records = _to_records(cfg, events)
    if cfg.hbs.migration and fleet.sim_ids:
        records = apply_migration(MigrationSchedule(fleet, cfg.hbs.swap_period_hours), records)

    labels = {sid: Label.NORMAL for sid in pop.ids}
    labels.update({sid: Label.FRAUD for sid in fleet.sim_ids})
    truth = GroundTruth(
        labels=labels,
        box_assignment={sid: int(fleet.box_of[k]) for k, sid in enumerate(fleet.sim_ids)},
        family_assignment=families,
        shift_assignment=(
            {sid: (float(fleet.shift_start[k]), fleet.shift_hours) for k, sid in enumerate(fleet.sim_ids)}
            if fleet.shift_start is not None else {}
        ),
        sites=[{"cell_id": c, "imeis": imeis} for c, imeis in zip(fleet.site_cells, fleet.site_imeis)],
    )
    window_end = WORLD_START + timedelta(days=cfg.days)
    dataset = Dataset.from_records(records, WORLD_START, window_end)
    return World(dataset, truth, cfg, arrivals, bypassed)


def write_world(out_dir: str | Path, world: World) -> dict[str, Path]:
    """Write ``cdr.csv``, ``labels.csv`` and ``truth.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"cdr": out / "cdr.csv", "labels": out / "labels.csv", "truth": out / "truth.json"}
    write_cdr_file(paths["cdr"], world.dataset.records)
    write_labels(paths["labels"], world.truth.labels)
    payload = {"config": world.config.to_dict(), **world.truth.to_dict()}
    paths["truth"].write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return paths


def read_truth(path: str | Path, labels: dict[str, Label]) -> tuple[GroundTruth, ScenarioConfig]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return GroundTruth.from_dict(data, labels), ScenarioConfig.from_dict(data["config"])

"""Batch experiments: corpus loading, the brake x sensor-set x threshold sweep and reports."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Optional

from .brakes import AEB, BRAKE_TYPES, V2X_PARTIAL, brake_preset
from .causes import SHORT_LABELS, CauseConfig, CrashCause, classify
from .engine import Replay, run
from .generator import generate_corpus
from .perception import SENSOR_SETS, SensorSet, onboard_channel, sensor_set
from .scenario import Scenario, ScenarioError, load_scenario

log = logging.getLogger(__name__)

CONFIG_ENV = "CRASHSIM_CONFIG"
CAUSE_COLUMNS = tuple(c.value for c in CrashCause)
CSV_HEADER = ("brake", "sensor_set", "ttc_threshold", "n", "avoided_pct") + CAUSE_COLUMNS + ("pairs",)
DEFAULT_THRESHOLDS = (2.0, 1.5, 1.25)


@dataclass(frozen=True, order=True)
class Cell:
    brake: str
    sensor_set: str
    ttc_threshold: Optional[float]  # None for the AEB, whose window is fixed

    @property
    def key(self) -> str:
        thr = "-" if self.ttc_threshold is None else f"{self.ttc_threshold:g}"
        return f"{self.brake}|{self.sensor_set}|{thr}"

    @classmethod
    def from_key(cls, key: str) -> "Cell":
        brake, ss, thr = key.split("|")
        return cls(brake, ss, None if thr == "-" else float(thr))

    def sort_key(self):
        order = list(SENSOR_SETS)
        ss = (order.index(self.sensor_set), "") if self.sensor_set in order else (len(order), self.sensor_set)
        return (BRAKE_TYPES.index(self.brake), ss, -(self.ttc_threshold or 0.0))


@dataclass
class ExperimentConfig:
    """One sweep. Either ``scenarios`` (a directory of JSON files) or ``generator``
    (``{"n": .., "profile": .., "seed": ..}``) supplies the corpus.

    ``custom_sensor_sets`` defines extra onboard sets by name, e.g.
    ``{"wide": {"angle_deg": 180, "mount": 0.25, "range": 80}}``; they join the V2X channel.
    """

    scenarios: Optional[str] = None
    generator: Optional[dict] = None
    brake_types: tuple = BRAKE_TYPES
    sensor_sets: tuple = tuple(SENSOR_SETS)
    ttc_thresholds: tuple = DEFAULT_THRESHOLDS
    friction_known: bool = False
    overrides: dict = field(default_factory=dict)
    jobs: int = 1
    seed: int = 0
    custom_sensor_sets: dict = field(default_factory=dict)
    classify: bool = True
    lenient: bool = False
    records: bool = False

    def __post_init__(self):
        if self.scenarios is None and self.generator is None:
            raise ValueError("no scenario source: give a directory or a generator spec")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        self.brake_types = tuple(dict.fromkeys(brake_preset(b).name for b in self.brake_types))
        self.ttc_thresholds = tuple(float(t) for t in self.ttc_thresholds)
        if any(t <= 0 for t in self.ttc_thresholds):
            raise ValueError("ttc thresholds must be > 0")
        self.overrides = dict(self.overrides)
        validate_overrides(self.overrides)
        registry = self.sensor_registry()
        self.sensor_sets = tuple(dict.fromkeys(_sensor_name(s, registry) for s in self.sensor_sets))
        if not self.cells():
            raise ValueError("the sweep has no cells")

    def sensor_registry(self) -> dict:
        out = dict(SENSOR_SETS)
        for name, ch in self.custom_sensor_sets.items():
            extra = set(ch) - {"angle_deg", "mount", "range"}
            if extra:
                raise ValueError(f"unknown keys {sorted(extra)} for sensor set {name!r}")
            out[name] = SensorSet(name, onboard_channel(float(ch["angle_deg"]), float(ch["mount"]), float(ch.get("range", 120.0))))
        return out

    def cells(self) -> list[Cell]:
        out = []
        for b in self.brake_types:
            for ss in self.sensor_sets:
                if b == "aeb":
                    out.append(Cell(b, ss, None))
                else:
                    out.extend(Cell(b, ss, t) for t in self.ttc_thresholds)
        return sorted(set(out), key=Cell.sort_key)

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**obj)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _sensor_name(name: str, registry: dict) -> str:
    if name in registry:
        return name
    return sensor_set(name).name


def validate_overrides(overrides: dict) -> None:
    """Raise ValueError unless every key names a stage field, optionally prefixed AEB. or V2X."""
    for key in overrides:
        target, _, _ = key.rpartition(".")
        if target and target.upper() not in ("AEB", "V2X", V2X_PARTIAL):
            raise ValueError(f"invalid override {key!r}: unknown stage {target!r}")
    brake_preset("two-stage", overrides=overrides)


def default_config_path() -> Optional[str]:
    return os.environ.get(CONFIG_ENV) or None


@dataclass
class CellStats:
    n: int = 0
    avoided: int = 0
    avoided_ids: tuple = ()
    causes: dict = field(default_factory=dict)  # stage -> {cause: count}
    pairs: dict = field(default_factory=dict)  # pair label -> count

    def merge(self, other: "CellStats") -> "CellStats":
        causes = {st: dict(v) for st, v in self.causes.items()}
        for st, hist in other.causes.items():
            tgt = causes.setdefault(st, {})
            for c, k in hist.items():
                tgt[c] = tgt.get(c, 0) + k
        pairs = dict(self.pairs)
        for p, k in other.pairs.items():
            pairs[p] = pairs.get(p, 0) + k
        return CellStats(
            self.n + other.n,
            self.avoided + other.avoided,
            tuple(sorted(self.avoided_ids + other.avoided_ids)),
            {st: dict(sorted(h.items())) for st, h in sorted(causes.items())},
            dict(sorted(pairs.items())),
        )

    @property
    def crashes(self) -> int:
        return self.n - self.avoided

    @property
    def avoided_pct(self) -> float:
        return 100.0 * self.avoided / self.n if self.n else 0.0

    def headline_causes(self) -> dict:
        """Cause counts of the AEB stage when present, else of the single stage."""
        if not self.causes:
            return {c: 0 for c in CAUSE_COLUMNS}
        stage = AEB if AEB in self.causes else next(iter(self.causes))
        hist = self.causes[stage]
        return {c: hist.get(c, 0) for c in CAUSE_COLUMNS}


@dataclass
class AggregateReport:
    """Per-cell statistics. :meth:`merge` is associative and commutative, so partial
    reports from workers combine to the same result in any grouping."""

    cells: dict = field(default_factory=dict)  # Cell.key -> CellStats
    skipped: tuple = ()  # (source, message)
    records: tuple = ()

    def merge(self, other: "AggregateReport") -> "AggregateReport":
        cells = dict(self.cells)
        for k, st in other.cells.items():
            cells[k] = cells[k].merge(st) if k in cells else st.merge(CellStats())
        ordered = dict(sorted(cells.items(), key=lambda kv: Cell.from_key(kv[0]).sort_key()))
        recs = tuple(sorted(self.records + other.records, key=_record_key))
        return AggregateReport(ordered, tuple(sorted(self.skipped + other.skipped)), recs)

    def cell(self, brake: str, sensor_set_name: str, ttc_threshold: Optional[float] = None) -> CellStats:
        thr = None if brake == "aeb" else ttc_threshold
        name = sensor_set_name if sensor_set_name in {Cell.from_key(k).sensor_set for k in self.cells} else sensor_set(sensor_set_name).name
        return self.cells[Cell(brake_preset(brake).name, name, thr).key]

    def to_dict(self) -> dict:
        return {
            "cells": {k: {**asdict(v), "avoided_pct": round(v.avoided_pct, 6)} for k, v in self.cells.items()},
            "skipped": [list(s) for s in self.skipped],
            "records": list(self.records),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "AggregateReport":
        cells = {}
        for k, v in obj["cells"].items():
            cells[k] = CellStats(v["n"], v["avoided"], tuple(v["avoided_ids"]), v["causes"], v["pairs"])
        return cls(cells, tuple(tuple(s) for s in obj.get("skipped", [])), tuple(obj.get("records", [])))

    def __eq__(self, other):
        return isinstance(other, AggregateReport) and self.to_dict() == other.to_dict()


def _record_key(rec: dict):
    return (rec["scenario_id"], rec["brake"], rec["sensor_set"], rec["ttc_threshold"] or 0.0)


# ---------------------------------------------------------------------- execution


def evaluate_scenario(scenario: Scenario, cells: Iterable[Cell], friction_known: bool = False, overrides: Optional[dict] = None,
                      do_classify: bool = True, keep_records: bool = False, cause_cfg: CauseConfig = CauseConfig(),
                      registry: Optional[dict] = None) -> AggregateReport:
    """Run every cell on one scenario and fold the results into a one-scenario report."""
    registry = registry or SENSOR_SETS
    rp = Replay(scenario)
    out = {}
    records = []
    for cell in cells:
        cfg = brake_preset(cell.brake, cell.ttc_threshold, overrides)
        sensors = registry[cell.sensor_set]
        o = run(scenario, cfg, sensors, friction_known, record_trace=False, replay=rp)
        st = CellStats(n=1)
        if not o.crashed:
            st.avoided, st.avoided_ids = 1, (scenario.id,)
            if keep_records:
                records.append({**_cell_record(scenario.id, cell), "result": "avoided", "stage_causes": [], "resolved_pair": None})
        elif do_classify:
            rep = classify(o, scenario, cfg, cause_cfg, replay=rp, sensors=sensors)
            st.causes = {s.stage: {s.resolved_label.value: 1} for s in rep.stages}
            if rep.resolved_pair is not None:
                st.pairs = {rep.label: 1}
            if keep_records:
                rec = rep.to_record()
                rec["ttc_threshold"] = cell.ttc_threshold
                records.append(rec)
        out[cell.key] = st
    return AggregateReport(out, (), tuple(records))


def _cell_record(sid: str, cell: Cell) -> dict:
    return {"scenario_id": sid, "brake": cell.brake, "sensor_set": cell.sensor_set, "ttc_threshold": cell.ttc_threshold}


def load_corpus(cfg: ExperimentConfig) -> tuple[list[Scenario], list[tuple[str, str]]]:
    """Scenarios of the configured source plus (source, error) for every rejected file."""
    if cfg.generator is not None:
        g = dict(cfg.generator)
        return generate_corpus(int(g.get("n", 100)), g.get("profile", "mixed"), int(g.get("seed", cfg.seed))), []
    root = Path(cfg.scenarios)
    if not root.is_dir():
        raise FileNotFoundError(f"scenario directory {root} not found")
    good, bad = [], []
    for path in sorted(root.glob("*.json")):
        try:
            good.append(load_scenario(path, strict=not cfg.lenient))
        except (ScenarioError, OSError) as exc:
            log.warning("skipping %s: %s", path, exc)
            bad.append((str(path), str(exc)))
    return good, bad


def _worker(args):
    scenarios, cells, fk, overrides, do_cls, keep, registry = args
    rep = AggregateReport()
    for s in scenarios:
        rep = rep.merge(evaluate_scenario(s, cells, fk, overrides, do_cls, keep, registry=registry))
    return rep


def run_experiment(cfg: ExperimentConfig, corpus: Optional[list[Scenario]] = None) -> AggregateReport:
    """Simulate every scenario in every cell and aggregate; identical for any ``jobs``."""
    skipped: list = []
    if corpus is None:
        corpus, skipped = load_corpus(cfg)
    if not corpus:
        raise ValueError("empty corpus")
    cells = cfg.cells()
    chunks = max(1, min(len(corpus), cfg.jobs * 4))
    size = -(-len(corpus) // chunks)
    parts = [corpus[i : i + size] for i in range(0, len(corpus), size)]
    registry = cfg.sensor_registry()
    args = [(p, cells, cfg.friction_known, cfg.overrides, cfg.classify, cfg.records, registry) for p in parts]
    if cfg.jobs == 1:
        results = [_worker(a) for a in args]
    else:
        # chunking follows cfg.jobs; the worker count only bounds real parallelism
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, os.cpu_count() or 1)) as ex:
            results = list(ex.map(_worker, args))
    report = AggregateReport(skipped=tuple(skipped))
    for r in results:
        report = report.merge(r)
    return report


# ------------------------------------------------------------------------ emitters


def _fmt_thr(t: Optional[float]) -> str:
    return "" if t is None else f"{t:g}"


def report_csv(report: AggregateReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for key, st in report.cells.items():
        cell = Cell.from_key(key)
        causes = st.headline_causes()
        pct = [f"{100.0 * causes[c] / st.n:.1f}" if st.n else "0.0" for c in CAUSE_COLUMNS]
        pairs = ";".join(f"{p}:{k}" for p, k in st.pairs.items())
        w.writerow([cell.brake, cell.sensor_set, _fmt_thr(cell.ttc_threshold), st.n, f"{st.avoided_pct:.1f}", *pct, pairs])
    return buf.getvalue()


_BRAKE_TITLES = {"aeb": "AEB", "v2x": "V2X", "two-stage": "2-stage"}


def markdown_columns(report: AggregateReport) -> list[tuple]:
    """(brake, threshold, title) per table column: the AEB, then each V2X and 2-stage threshold, descending."""
    cells = [Cell.from_key(k) for k in report.cells]
    cols = []
    for brake in BRAKE_TYPES:
        thrs = sorted({c.ttc_threshold for c in cells if c.brake == brake}, key=lambda t: -(t or 0.0))
        for t in thrs:
            title = _BRAKE_TITLES[brake] if t is None else f"{_BRAKE_TITLES[brake]} {t:g} s"
            cols.append((brake, t, title))
    return cols


def report_markdown(report: AggregateReport) -> str:
    """Avoided percentages, one row per sensor set and one column per brake/threshold."""
    cols = markdown_columns(report)
    present = {Cell.from_key(k).sensor_set for k in report.cells}
    rows = [s for s in SENSOR_SETS if s in present] + sorted(present - set(SENSOR_SETS))
    lines = ["| Sensor set | " + " | ".join(c[2] for c in cols) + " |", "|---" * (len(cols) + 1) + "|"]
    for ss in rows:
        vals = []
        for brake, thr, _ in cols:
            st = report.cells.get(Cell(brake, ss, thr).key)
            vals.append(f"{st.avoided_pct:.1f} %" if st else "-")
        lines.append(f"| {ss} | " + " | ".join(vals) + " |")
    return "\n".join(lines) + "\n"


def report_json(report: AggregateReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=False) + "\n"


def emit_report(report: AggregateReport, fmt: str, path=None) -> str:
    """Render ``report`` as json, csv or markdown; write it to ``path`` when given."""
    renderers = {"json": report_json, "csv": report_csv, "markdown": report_markdown, "md": report_markdown}
    if fmt not in renderers:
        raise ValueError(f"unknown report format {fmt!r}")
    text = renderers[fmt](report)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def cause_label_columns() -> dict:
    return {c.value: SHORT_LABELS[c] for c in CrashCause}

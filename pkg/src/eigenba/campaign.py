"""Campaigns: attack-set selection, per-image runs, efficiency metrics,
the reserve-rate ablation and report files."""

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .attacks import (
    AttackConfig,
    CartesianDirections,
    DctDirections,
    EigenDirections,
    TransFGM,
    TransFGSM,
    attack,
)
from .errors import ArgumentError, DataError
from .net import zero_parameters
from .oracle import AttackObjective

METHODS = ("eigenba", "simba", "simba-dct", "trans-fgm", "trans-fgsm")
TRANSFER_METHODS = ("eigenba", "trans-fgm", "trans-fgsm")

METRICS_COLUMNS = [
    "method",
    "images",
    "budget",
    "avg_queries_success",
    "avg_queries_all",
    "success_rate",
    "avg_l2_success",
]
CURVE_COLUMNS = ["budget", "success_rate"]
ABLATION_COLUMNS = ["reserve_rate"] + METRICS_COLUMNS


def make_provider(method, model, surrogate=None, k=10, dct_fraction=0.125):
    """Direction provider for ``method`` against ``model`` (the attacked model)."""
    if method not in METHODS:
        raise ArgumentError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
    if method in TRANSFER_METHODS:
        if surrogate is None:
            raise ArgumentError(f"method {method!r} needs a surrogate model")
        if surrogate.input_size != model.input_size:
            raise ArgumentError("surrogate and attacked model disagree on input size")
    if method == "eigenba":
        return EigenDirections(surrogate, k)
    if method == "trans-fgm":
        return TransFGM(surrogate)
    if method == "trans-fgsm":
        return TransFGSM(surrogate)
    if method == "simba":
        return CartesianDirections(model.input_size)
    shape = model.input_shape
    if len(shape) == 1:
        raise ArgumentError("simba-dct needs image-shaped inputs")
    return DctDirections(shape, dct_fraction)


@dataclass
class AttackItem:
    index: int  # position in the source dataset
    x: np.ndarray
    label: int
    target: int | None = None

    def objective(self):
        if self.target is None:
            return AttackObjective.untargeted(self.label)
        return AttackObjective.toward(self.target)


def select_attack_set(model, dataset, count, seed=0, targeted=False):
    """Sample ``count`` correctly classified images; targeted mode draws a target class too.

    The same seed yields the same selection whatever method is attacked later.
    """
    if count < 1:
        raise ArgumentError("count must be positive")
    correct = np.flatnonzero(model.predict(dataset.X) == dataset.y)
    if len(correct) < count:
        raise DataError(f"only {len(correct)} correctly classified samples, {count} requested")
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(correct, size=count, replace=False))
    items = []
    for i in chosen:
        label = int(dataset.y[i])
        target = None
        if targeted:
            others = [c for c in range(model.class_count) if c != label]
            target = int(others[rng.integers(len(others))])
        items.append(AttackItem(int(i), dataset.X[i].copy(), label, target))
    return items


@dataclass
class MetricsReport:
    method: str
    images: int
    budget: int
    avg_queries_success: float | None
    avg_queries_all: float
    success_rate: float
    avg_l2_success: float | None
    curve: list = field(default_factory=list)  # [budget, success rate] pairs

    def to_dict(self):
        d = asdict(self)
        d["curve"] = [list(p) for p in self.curve]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["curve"] = [list(p) for p in d.get("curve", [])]
        return cls(**d)


def default_curve_budgets(budget, points=20):
    return sorted({max(1, int(round(budget * (i + 1) / points))) for i in range(points)})


def summarize(outcomes, budget, method="", curve_budgets=None):
    """The four efficiency indicators plus the success-rate-vs-budget curve.

    Failures count as ``budget`` queries in ``avg_queries_all``.
    """
    if not outcomes:
        raise DataError("no outcomes to summarise")
    success = np.array([o.success for o in outcomes])
    queries = np.array([o.queries_used if o.success else budget for o in outcomes], dtype=float)
    l2 = np.array([o.final_l2 for o in outcomes])
    curve_budgets = curve_budgets or default_curve_budgets(budget)
    curve = [[int(b), float(np.mean(success & (queries <= b)))] for b in curve_budgets]
    return MetricsReport(
        method=method,
        images=len(outcomes),
        budget=int(budget),
        avg_queries_success=float(queries[success].mean()) if success.any() else None,
        avg_queries_all=float(queries.mean()),
        success_rate=float(success.mean()),
        avg_l2_success=float(l2[success].mean()) if success.any() else None,
        curve=curve,
    )


def item_seed(seed, index):
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


@dataclass
class Campaign:
    model: object  # the attacked (black-box) model
    method: str
    config: AttackConfig
    items: list
    surrogate: object = None
    dct_fraction: float = 0.125
    initial_check: bool = False
    workers: int = 1
    curve_budgets: list | None = None
    outcomes: list = field(default_factory=list)


def run_campaign(campaign):
    """Attack every item; fills ``campaign.outcomes`` (in item order) and returns the metrics."""
    if not campaign.items:
        raise DataError("empty attack set")
    cfg = campaign.config
    provider = make_provider(
        campaign.method, campaign.model, campaign.surrogate, cfg.k, campaign.dct_fraction
    )

    def one(item):
        item_cfg = replace(cfg, seed=item_seed(cfg.seed, item.index))
        return attack(campaign.model, item.x, item.objective(), provider, item_cfg, campaign.initial_check)

    if campaign.workers > 1:
        with ThreadPoolExecutor(campaign.workers) as pool:
            outcomes = list(pool.map(one, campaign.items))
    else:
        outcomes = [one(item) for item in campaign.items]
    campaign.outcomes = outcomes
    return summarize(outcomes, cfg.budget, campaign.method, campaign.curve_budgets)


def run_ablation(base_model, reserve_rates, config, items, zero_seed=0, **campaign_kwargs):
    """EigenBA against ``base_model`` with surrogates that keep ``rate`` of its parameters.

    Returns ``[(rate, MetricsReport, Campaign), ...]`` in the given rate order.
    """
    rows = []
    for rate in reserve_rates:
        surrogate = zero_parameters(base_model, rate, zero_seed)
        campaign = Campaign(base_model, "eigenba", config, items, surrogate=surrogate, **campaign_kwargs)
        rows.append((rate, run_campaign(campaign), campaign))
    return rows


# ------------------------------------------------------------------- output


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(columns, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def outcome_record(item, outcome, method, config):
    return {
        "index": item.index,
        "label": item.label,
        "target": item.target,
        "method": method,
        "seed": item_seed(config.seed, item.index),
        "config": asdict(config),
        "success": bool(outcome.success),
        "queries_used": int(outcome.queries_used),
        "final_l2": float(outcome.final_l2),
        "accepted_steps": outcome.accepted_steps,
    }


def emit_report(report, out_dir, items=None, outcomes=None, config=None):
    """Write ``metrics.json``, ``metrics.csv``, ``curve.csv`` and (given outcomes) ``outcomes.jsonl``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        doc = report.to_dict()
        if config is not None:
            doc = {**doc, "config": asdict(config)}
        (out / "metrics.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        (out / "metrics.csv").write_text(_csv_text(METRICS_COLUMNS, [doc]))
        curve_rows = [{"budget": b, "success_rate": r} for b, r in report.curve]
        (out / "curve.csv").write_text(_csv_text(CURVE_COLUMNS, curve_rows))
        if outcomes is not None:
            lines = [
                json.dumps(outcome_record(i, o, report.method, config), sort_keys=True)
                for i, o in zip(items, outcomes)
            ]
            (out / "outcomes.jsonl").write_text("".join(line + "\n" for line in lines))
    except OSError as exc:
        raise ArgumentError(f"cannot write report to {out}: {exc}") from exc
    return out


def emit_ablation(rows, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = [{"reserve_rate": rate, **report.to_dict()} for rate, report, *_ in rows]
    (out / "ablation.csv").write_text(_csv_text(ABLATION_COLUMNS, table))
    (out / "ablation.json").write_text(json.dumps(table, indent=1, sort_keys=True) + "\n")
    return out


def load_metrics(path):
    doc = json.loads(Path(path).read_text())
    doc.pop("config", None)
    return MetricsReport.from_dict(doc)


@dataclass
class StoredOutcome:
    success: bool
    queries_used: int
    final_l2: float


def reaggregate(outcomes_path, curve_budgets=None):
    """Rebuild a :class:`MetricsReport` from an ``outcomes.jsonl`` file."""
    records = [json.loads(line) for line in Path(outcomes_path).read_text().splitlines() if line.strip()]
    if not records:
        raise DataError(f"{outcomes_path}: no outcomes")
    budgets = {r["config"]["budget"] for r in records}
    methods = {r["method"] for r in records}
    if len(budgets) != 1 or len(methods) != 1:
        raise DataError("outcomes mix several budgets or methods")
    records.sort(key=lambda r: r["index"])
    outs = [StoredOutcome(r["success"], r["queries_used"], r["final_l2"]) for r in records]
    config = AttackConfig(**records[0]["config"])
    return summarize(outs, budgets.pop(), methods.pop(), curve_budgets), config

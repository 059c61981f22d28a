"""Case catalog and experiment runner.

The builtin catalog holds the thirteen modelling cases; case 12 is split into
a training run (S12a) and a simulation-only reuse of its network (S12b), so
there are fourteen configurations.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import series as ser
from .network import Network, NetworkShape, dumps_model
from .series import SplitSpec, TimeSeries
from .simulate import Prediction, corr_r, mse, simulate_closed_loop_dataset, simulate_open_loop
from .synth import SynthProfile, synth_series
from .training import AttemptRecord, TrainConfig, TrainReport, train_with_restarts

log = logging.getLogger(__name__)

DAY_REQUESTS = "day-requests"
DAY6_SECONDS = "wc_day6_1"
DAY66_SECONDS = "wc_day66_10"

RESULTS_HEADER = ("case", "description", "complete_mse", "r", "train_mse", "val_mse",
                  "test_mse", "seed", "stop_reason")


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class CaseConfig:
    id: str
    description: str = ""
    data_ref: str = DAY_REQUESTS
    network_kind: str = "ftdnn"            # ftdnn | nar | narx
    hidden_layers: tuple[int, ...] = (10,)
    y_delays: tuple[int, ...] = (1, 2)
    x_delays: tuple[int, ...] = ()
    split: tuple[float, float, float] = (0.70, 0.15, 0.15)
    training: str = "lm"                   # lm | incremental | none
    loop_mode: str = "open"
    exogenous_column: str | None = None
    source_model: str | None = None
    max_points: int | None = None
    attempts: int = 5

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(self.hidden_layers))
        object.__setattr__(self, "y_delays", tuple(self.y_delays))
        object.__setattr__(self, "x_delays", tuple(self.x_delays))
        object.__setattr__(self, "split", tuple(float(f) for f in self.split))
        if self.training not in ("lm", "incremental", "none"):
            raise ValueError(f"{self.id}: unknown training mode {self.training!r}")
        if self.loop_mode not in ("open", "closed"):
            raise ValueError(f"{self.id}: unknown loop mode {self.loop_mode!r}")
        if self.training == "none" and not self.source_model:
            raise ValueError(f"{self.id}: simulation-only cases need a source_model")
        if self.exogenous_column and not self.x_delays:
            raise ValueError(f"{self.id}: exogenous input needs x_delays")
        SplitSpec(*self.split)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("hidden_layers", "y_delays", "x_delays", "split"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "CaseConfig":
        return cls(**dict(d))


def builtin_cases() -> list[CaseConfig]:
    d1 = CaseConfig("D1", "Base network using day-requests")
    same = lambda id, desc, **kw: replace(d1, id=id, description=desc, **kw)  # noqa: E731
    s12a = same("S12a", "epoch-seconds data set (1000 points of day 6)",
                data_ref=DAY6_SECONDS, max_points=1000)
    return [
        d1,
        same("D2", "hiddenLayerSize = 30", hidden_layers=(30,)),
        same("D3", "two hidden layers", hidden_layers=(10, 10)),
        same("D4", "80%/10%/10% (data)", split=(0.80, 0.10, 0.10)),
        same("D5", "60%/20%/20% (data)", split=(0.60, 0.20, 0.20)),
        same("D6", "hiddenLayerSize = 1", hidden_layers=(1,)),
        same("D7", "Incremental training", training="incremental"),
        same("D8", "Delays = 1:7", y_delays=(1, 2, 3, 4, 5, 6, 7)),
        same("D9", "NAR network, 2-step ahead prediction (closed-loop)",
             network_kind="nar", y_delays=(2, 3), loop_mode="closed"),
        same("D10", "NARX network, exogenous input MATCHES (closed-loop)",
             network_kind="narx", x_delays=(1, 2), exogenous_column="MATCHES", loop_mode="closed"),
        same("D11", "NARX network, exogenous input ISMATCH (closed-loop)",
             network_kind="narx", x_delays=(1, 2), exogenous_column="ISMATCH", loop_mode="closed"),
        s12a,
        replace(s12a, id="S12b", description="Network from S12a, complete day 6 data",
                training="none", source_model="S12a", max_points=None, attempts=0),
        same("S13", "epoch-seconds data set (1000 points of day 66 part 10)",
             data_ref=DAY66_SECONDS, max_points=1000),
    ]


def case_by_id(cases: Sequence[CaseConfig], case_id: str) -> CaseConfig:
    for c in cases:
        if c.id.lower() == case_id.lower():
            return c
    raise ExperimentError(f"no case {case_id!r}; known: {', '.join(c.id for c in cases)}")


def dump_catalog(cases: Sequence[CaseConfig]) -> str:
    return json.dumps({"cases": [c.to_dict() for c in cases]}, indent=2) + "\n"


def load_catalog(path) -> list[CaseConfig]:
    with open(path) as fh:
        doc = json.load(fh)
    return [CaseConfig.from_dict(d) for d in doc["cases"]]


def case_seed(case_id: str, suite_seed: int) -> int:
    """Per-case seed; independent of which other cases are in the suite."""
    return (zlib.crc32(case_id.encode()) ^ int(suite_seed)) & 0x7FFFFFFF


# --- running one case ------------------------------------------------------------


@dataclass
class CaseResult:
    case_id: str
    complete_mse: float
    r: float
    per_split_mse: tuple[float, float, float]
    seed: int
    attempt_log: list[AttemptRecord] = field(default_factory=list)
    stop_reason: str = ""
    description: str = ""
    network: Network | None = field(default=None, repr=False, compare=False)
    prediction: Prediction | None = field(default=None, repr=False, compare=False)
    report: TrainReport | None = field(default=None, repr=False, compare=False)


def _split_mse(pred: Prediction) -> tuple[float, float, float]:
    out = []
    for label in ("train", "val", "test"):
        part = pred.select(label)
        out.append(mse(part.targets, part.outputs) if len(part) else float("nan"))
    return tuple(out)


def _simulate(net: Network, cfg: CaseConfig, scaled: TimeSeries, ds, splits) -> Prediction:
    if cfg.loop_mode == "closed":
        exo = scaled.exogenous[cfg.exogenous_column] if cfg.exogenous_column else None
        return simulate_closed_loop_dataset(net, scaled.values, ds, exo, splits)
    return simulate_open_loop(net, ds, splits)


def run_case(config: CaseConfig, data: TimeSeries, base_seed: int = 42,
             source_network: Network | None = None,
             train_config: TrainConfig | None = None) -> CaseResult:
    """Normalize, embed, split, train with restarts (or reuse a network), simulate, score.

    Every case scales its own data into (0, 1) over the whole series, and
    metrics are reported on that scale. Simulation-only cases reuse
    ``source_network`` unchanged.
    """
    if config.max_points:
        data = data.head(config.max_points)
    if config.exogenous_column and config.exogenous_column not in data.exogenous:
        raise ExperimentError(
            f"{config.id}: data {data.name!r} has no exogenous column {config.exogenous_column!r}"
        )
    if config.training == "none" and source_network is None:
        raise ExperimentError(f"{config.id}: needs the network trained by {config.source_model}")
    keep = {config.exogenous_column: data.exogenous[config.exogenous_column]} if config.exogenous_column else {}
    scaled, params = ser.normalize_columns(data.with_values(data.values, keep))
    ds = ser.delay_embed(scaled, config.y_delays, config.exogenous_column,
                         config.x_delays if config.exogenous_column else None)
    splits = ser.split_blocks(len(ds), SplitSpec(*config.split))
    seed = base_seed

    if config.training == "none":
        net = source_network.copy()
        report = None
        attempt_log: list[AttemptRecord] = []
        stop_reason = "simulation-only"
    else:
        tc = train_config or TrainConfig(algorithm=config.training)
        if tc.algorithm != config.training:
            tc = replace(tc, algorithm=config.training)
        shape = NetworkShape(ds.width, config.hidden_layers)
        evaluate = None
        if config.loop_mode == "closed":
            evaluate = lambda n: mse(ds.targets, _simulate(n, config, scaled, ds, splits).outputs)  # noqa: E731
        net, report, attempt_log = train_with_restarts(
            shape, ds, splits, tc, attempts=config.attempts, base_seed=seed, evaluate=evaluate,
            y_delays=ds.y_delays, x_delays=ds.x_delays, loop_mode=config.loop_mode,
        )
        net.norm_params = params
        net.provenance = {"case": config.id, "seed": report.seed, "base_seed": seed,
                          "data": config.data_ref, "split": list(config.split),
                          "exogenous_column": config.exogenous_column}
        stop_reason = report.stop_reason

    pred = _simulate(net, config, scaled, ds, splits)
    return CaseResult(
        case_id=config.id,
        complete_mse=mse(pred.targets, pred.outputs),
        r=corr_r(pred.targets, pred.outputs),
        per_split_mse=_split_mse(pred),
        seed=seed,
        attempt_log=attempt_log,
        stop_reason=stop_reason,
        description=config.description,
        network=net,
        prediction=pred,
        report=report,
    )


# --- data catalog ----------------------------------------------------------------


def synthetic_catalog(seed: int = 42) -> dict[str, TimeSeries]:
    return {
        DAY_REQUESTS: synth_series(SynthProfile("worldcup-days", seed=seed)),
        DAY6_SECONDS: synth_series(SynthProfile("day6-seconds", seed=seed)),
        DAY66_SECONDS: synth_series(SynthProfile("day66-seconds", seed=seed)),
    }


def _candidates(data_dir: Path, ref: str) -> list[Path]:
    return [data_dir / f"{ref}.tsv", data_dir / f"{ref}.count.txt", data_dir / f"{ref}.gz.count.txt"]


def load_data_catalog(data_dir, refs: Sequence[str]) -> dict[str, TimeSeries]:
    """Resolve each data_ref to ``<ref>.tsv``, ``<ref>.count.txt`` or ``<ref>.gz.count.txt``.

    Unresolvable refs are simply absent from the result.
    """
    data_dir = Path(data_dir)
    out = {}
    for ref in dict.fromkeys(refs):
        for p in _candidates(data_dir, ref):
            if p.is_file():
                out[ref] = ser.load_series(p, ref)
                break
    return out


def write_synthetic_catalog(out_dir, seed: int = 42) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for ref, ts in synthetic_catalog(seed).items():
        p = out_dir / (f"{ref}.tsv" if ref == DAY_REQUESTS else f"{ref}.count.txt")
        ser.write_series(ts, p)
        paths.append(p)
    return paths


# --- suite ---------------------------------------------------------------------------


@dataclass
class SuiteRow:
    config: CaseConfig
    result: CaseResult | None = None
    skipped: str | None = None


def _run_one(args):
    cfg, data, seed, source, tc = args
    return run_case(cfg, data, seed, source, tc)


def run_suite(configs: Sequence[CaseConfig], data_catalog: Mapping[str, TimeSeries],
              base_seed: int = 42, jobs: int = 1,
              train_config: TrainConfig | None = None) -> list[SuiteRow]:
    """Run every case; rows come back in catalog order.

    Cases whose data is missing, or whose source case did not produce a
    network, are skipped with a reason instead of failing the suite.
    """
    rows = {c.id: SuiteRow(c) for c in configs}
    ids = {c.id for c in configs}
    for c in configs:
        if c.source_model and c.source_model not in ids:
            rows[c.id].skipped = f"source case {c.source_model} not in suite"

    def ready(c: CaseConfig, done: set) -> bool:
        return not c.source_model or c.source_model in done

    pending = [c for c in configs if rows[c.id].skipped is None]
    done: set[str] = set()
    while pending:
        wave = [c for c in pending if ready(c, done)]
        if not wave:
            for c in pending:
                rows[c.id].skipped = f"source case {c.source_model} did not complete"
            break
        pending = [c for c in pending if c not in wave]
        work = []
        for c in wave:
            if c.source_model and rows[c.source_model].result is None:
                rows[c.id].skipped = f"source case {c.source_model} did not complete"
                continue
            if c.data_ref not in data_catalog:
                rows[c.id].skipped = f"missing dataset {c.data_ref}"
                continue
            source = rows[c.source_model].result.network if c.source_model else None
            work.append((c, data_catalog[c.data_ref], case_seed(c.id, base_seed), source, train_config))
        if jobs > 1 and len(work) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_run_one, work))
        else:
            results = [_run_one(w) for w in work]
        for (c, *_), res in zip(work, results):
            rows[c.id].result = res
            log.info("%s: mse=%.6g r=%.5f", c.id, res.complete_mse, res.r)
        done.update(c.id for c in wave)
    return [rows[c.id] for c in configs]


def _fmt(v: float) -> str:
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else repr(float(v))


def results_csv(rows: Sequence[SuiteRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULTS_HEADER)
    for row in rows:
        c, res = row.config, row.result
        if res is None:
            w.writerow([c.id, c.description, "", "", "", "", "", "", f"skipped: {row.skipped}"])
            continue
        tr, va, te = res.per_split_mse
        w.writerow([c.id, c.description, _fmt(res.complete_mse), _fmt(res.r), _fmt(tr), _fmt(va),
                    _fmt(te), res.seed, res.stop_reason])
    return buf.getvalue()


def read_results_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def model_document_extra(result: CaseResult, config: CaseConfig) -> dict:
    return {
        "case": config.to_dict(),
        "train_report": result.report.to_dict() if result.report else None,
        "attempt_log": [asdict(a) for a in result.attempt_log],
        "metrics": {"complete_mse": result.complete_mse, "r": result.r,
                    "per_split_mse": list(result.per_split_mse)},
    }


def write_suite_outputs(rows: Sequence[SuiteRow], out_csv, models_dir=None) -> list[Path]:
    written = []
    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    out_csv.write_text(results_csv(rows))
    written.append(out_csv)
    if models_dir is not None:
        models_dir = Path(models_dir)
        models_dir.mkdir(parents=True, exist_ok=True)
        for row in rows:
            if row.result is None or row.result.network is None:
                continue
            p = models_dir / f"{row.config.id}.json"
            p.write_text(dumps_model(row.result.network, model_document_extra(row.result, row.config)))
            written.append(p)
    return written


def data_dir_from_env(explicit=None):
    return explicit or os.environ.get("LOADCAST_DATA_DIR")

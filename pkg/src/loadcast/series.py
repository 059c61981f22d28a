"""Series preparation: min-max scaling, delay embedding and block splits."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from . import ingest


class SeriesError(ValueError):
    pass


@dataclass
class TimeSeries:
    name: str
    indices: np.ndarray
    values: np.ndarray
    exogenous: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=float)
        self.exogenous = {k: np.asarray(v, dtype=float) for k, v in self.exogenous.items()}
        n = len(self.indices)
        if len(self.values) != n or any(len(v) != n for v in self.exogenous.values()):
            raise SeriesError(f"{self.name}: columns have unequal lengths")
        if n > 1 and np.any(np.diff(self.indices) <= 0):
            raise SeriesError(f"{self.name}: indices must be strictly increasing")

    def __len__(self):
        return len(self.values)

    def head(self, n: int) -> "TimeSeries":
        return TimeSeries(
            self.name, self.indices[:n], self.values[:n], {k: v[:n] for k, v in self.exogenous.items()}
        )

    def with_values(self, values, exogenous=None) -> "TimeSeries":
        return TimeSeries(
            self.name, self.indices, values, self.exogenous if exogenous is None else exogenous
        )


@dataclass(frozen=True)
class NormalizationParams:
    observed_min: float
    observed_max: float
    target_lo: float = 0.0
    target_hi: float = 1.0

    def __post_init__(self):
        if not self.target_lo < self.target_hi:
            raise SeriesError("normalization target range must satisfy lo < hi")
        if self.observed_max < self.observed_min:
            raise SeriesError("observed_max < observed_min")

    @property
    def degenerate(self) -> bool:
        return self.observed_max == self.observed_min

    @classmethod
    def fit(cls, values, lo: float = 0.0, hi: float = 1.0) -> "NormalizationParams":
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            raise SeriesError("cannot normalize an empty series")
        return cls(float(values.min()), float(values.max()), float(lo), float(hi))

    def apply(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.degenerate:
            return np.full(values.shape, (self.target_lo + self.target_hi) / 2.0)
        # divide by the observed width directly: its reciprocal overflows for subnormal widths
        width = self.observed_max - self.observed_min
        return self.target_lo + (values - self.observed_min) / width * (self.target_hi - self.target_lo)

    def invert(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.degenerate:
            return np.full(values.shape, self.observed_min)
        scale = (self.observed_max - self.observed_min) / (self.target_hi - self.target_lo)
        return self.observed_min + (values - self.target_lo) * scale

    def to_dict(self) -> dict:
        return {
            "observed_min": self.observed_min,
            "observed_max": self.observed_max,
            "target_lo": self.target_lo,
            "target_hi": self.target_hi,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "NormalizationParams":
        return cls(float(d["observed_min"]), float(d["observed_max"]),
                   float(d["target_lo"]), float(d["target_hi"]))


def normalize(series: TimeSeries, range: tuple[float, float] = (0.0, 1.0)):
    """Min-max scale the series values into ``range``.

    The extremes are taken over the whole series. A constant series maps to
    the midpoint of ``range`` and the returned params report ``degenerate``.
    Exogenous columns are left untouched; see :func:`normalize_columns`.
    """
    if len(series) == 0:
        raise SeriesError(f"{series.name}: cannot normalize an empty series")
    params = NormalizationParams.fit(series.values, *range)
    return series.with_values(params.apply(series.values)), params


def denormalize(series: TimeSeries, params: NormalizationParams) -> TimeSeries:
    if not isinstance(params, NormalizationParams):
        raise SeriesError("denormalize needs NormalizationParams")
    return series.with_values(params.invert(series.values))


def normalize_columns(series: TimeSeries, range=(0.0, 1.0), params=None):
    """Scale the target and every exogenous column.

    Returns the scaled series and a dict of params keyed by column name, the
    target under ``"target"``. Passing ``params`` reuses stored scalings
    (e.g. to feed new data to an already trained network).
    """
    if len(series) == 0:
        raise SeriesError(f"{series.name}: cannot normalize an empty series")
    params = dict(params or {})
    if "target" not in params:
        params["target"] = NormalizationParams.fit(series.values, *range)
    exo = {}
    for name, col in series.exogenous.items():
        if name not in params:
            params[name] = NormalizationParams.fit(col, *range)
        exo[name] = params[name].apply(col)
    return series.with_values(params["target"].apply(series.values), exo), params


@dataclass
class SupervisedDataset:
    inputs: np.ndarray            # (rows, len(y_delays) + len(x_delays))
    targets: np.ndarray           # (rows,)
    target_indices: np.ndarray    # original series index of each target
    y_delays: tuple[int, ...]
    x_delays: tuple[int, ...] = ()
    exogenous_column: str | None = None

    def __len__(self):
        return len(self.targets)

    @property
    def width(self) -> int:
        return self.inputs.shape[1]

    @property
    def max_delay(self) -> int:
        return max(self.y_delays + self.x_delays)

    def subset(self, rows: range | slice) -> "SupervisedDataset":
        sl = rows if isinstance(rows, slice) else slice(rows.start, rows.stop)
        return SupervisedDataset(self.inputs[sl], self.targets[sl], self.target_indices[sl],
                                 self.y_delays, self.x_delays, self.exogenous_column)


def parse_delays(spec) -> tuple[int, ...]:
    """Accept ``"1:7"``, ``"2:3"``, ``"1,2,5"``, an int or an iterable of ints."""
    if isinstance(spec, str):
        spec = spec.strip()
        if not spec:
            return ()
        if ":" in spec:
            lo, hi = (int(s) for s in spec.split(":"))
            vals = range(lo, hi + 1)
        else:
            vals = (int(s) for s in spec.split(","))
    elif isinstance(spec, int):
        vals = (spec,)
    else:
        vals = spec
    return tuple(sorted({int(v) for v in vals}))


def delay_embed(
    series: TimeSeries,
    y_delays: Iterable[int],
    exogenous_column: str | None = None,
    x_delays: Iterable[int] | None = None,
) -> SupervisedDataset:
    """Build rows ``[y(t-d) for d in y_delays] + [x(t-d) for d in x_delays] -> y(t)``.

    Delays are sorted ascending. The first target sits at position
    ``max(all delays)`` so every row has a full set of lagged inputs.
    """
    y_delays = parse_delays(y_delays)
    if not y_delays or min(y_delays) < 1:
        raise SeriesError("y delays must be positive integers")
    x_delays = parse_delays(x_delays) if x_delays is not None else ()
    if exogenous_column is None and x_delays:
        raise SeriesError("x delays given without an exogenous column")
    if exogenous_column is not None:
        if exogenous_column not in series.exogenous:
            raise SeriesError(f"{series.name}: unknown exogenous column {exogenous_column!r}")
        if not x_delays:
            x_delays = y_delays
        if min(x_delays) < 0:
            raise SeriesError("x delays must be non-negative")
    m = max(y_delays + x_delays)
    n = len(series)
    if m >= n:
        raise SeriesError(f"{series.name}: max delay {m} needs more than {n} points")
    y = series.values
    cols = [y[m - d: n - d] for d in y_delays]
    if exogenous_column is not None:
        x = series.exogenous[exogenous_column]
        cols += [x[m - d: n - d] for d in x_delays]
    return SupervisedDataset(
        inputs=np.column_stack(cols).astype(float),
        targets=y[m:].astype(float).copy(),
        target_indices=series.indices[m:].copy(),
        y_delays=y_delays,
        x_delays=x_delays,
        exogenous_column=exogenous_column,
    )


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.70
    val: float = 0.15
    test: float = 0.15

    def __post_init__(self):
        if min(self.train, self.val, self.test) < 0:
            raise SeriesError("split fractions must be non-negative")
        if abs(self.train + self.val + self.test - 1.0) > 1e-9:
            raise SeriesError("split fractions must sum to 1")

    @classmethod
    def parse(cls, text: str) -> "SplitSpec":
        """``"70/15/15"`` or ``"0.7/0.15/0.15"``."""
        parts = [float(p) for p in text.split("/")]
        if len(parts) != 3:
            raise SeriesError(f"split needs three parts: {text!r}")
        if sum(parts) > 1.5:
            parts = [p / 100.0 for p in parts]
        return cls(*parts)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.train, self.val, self.test)


@dataclass(frozen=True)
class Splits:
    train: range
    val: range
    test: range

    def label_of(self, row: int) -> str:
        if row in self.train:
            return "train"
        if row in self.val:
            return "val"
        return "test"

    def labels(self) -> list[str]:
        return ["train"] * len(self.train) + ["val"] * len(self.val) + ["test"] * len(self.test)

    @property
    def n(self) -> int:
        return self.test.stop


def split_blocks(n_rows: int, spec: SplitSpec = SplitSpec(), allow_empty: bool = False) -> Splits:
    """Contiguous train, validation, test blocks.

    Train and validation sizes are floored; the remainder goes to test, so
    92 rows at 70/15/15 give 64/13/15.
    """
    if n_rows < 3 and not allow_empty:
        raise SeriesError(f"need at least 3 rows to split, got {n_rows}")
    # The epsilon keeps exact products like 0.7 * 1000 from flooring to 699.
    n_train = int(np.floor(spec.train * n_rows + 1e-9))
    n_val = int(np.floor(spec.val * n_rows + 1e-9))
    n_test = n_rows - n_train - n_val
    if not allow_empty and min(n_train, n_val, n_test) < 1:
        raise SeriesError(
            f"split {spec.as_tuple()} of {n_rows} rows leaves an empty block "
            f"({n_train}/{n_val}/{n_test})"
        )
    return Splits(range(0, n_train), range(n_train, n_train + n_val), range(n_train + n_val, n_rows))


# --- loading the ingest formats -----------------------------------------------


def load_day_requests(path, name: str = "day-requests") -> TimeSeries:
    d = ingest.read_day_requests(path)
    return TimeSeries(name, d.days, d.requests.astype(float),
                      {"MATCHES": d.matches.astype(float), "ISMATCH": d.is_match.astype(float)})


def load_epoch_requests(path, name: str | None = None) -> TimeSeries:
    e = ingest.read_epoch_requests(path)
    return TimeSeries(name or str(path), e.epochs, e.requests.astype(float))


def load_series(path, name: str | None = None) -> TimeSeries:
    """Load either TSV format, dispatching on the header row."""
    with open(path) as fh:
        header = tuple(fh.readline().rstrip("\n").split("\t"))
    if header == ingest.DAY_HEADER:
        return load_day_requests(path, name or "day-requests")
    if header == ingest.EPOCH_HEADER:
        return load_epoch_requests(path, name)
    raise SeriesError(f"{path}: unrecognised header {header}")


def write_series(series: TimeSeries, path) -> None:
    """Write a series back in the matching ingest TSV format."""
    if {"MATCHES", "ISMATCH"} <= series.exogenous.keys():
        day = ingest.DayRequestsSeries(
            series.indices, np.rint(series.values).astype(np.int64),
            np.rint(series.exogenous["MATCHES"]).astype(np.int64),
            np.rint(series.exogenous["ISMATCH"]).astype(np.int64),
        )
        ingest.write_day_requests(day, path)
    else:
        ingest.write_epoch_requests(
            ingest.EpochRequestsSeries(series.indices, np.rint(series.values).astype(np.int64)), path
        )

"""Matrix-variate time series container, long-CSV ingestion and preprocessing.

A :class:`MatrixSeries` holds ``T`` square flow matrices over one ordered
set of entities. Cell ``(i, j)`` is the flow from entity ``i`` (exporter)
to entity ``j`` (importer). For transport networks the diagonal is
undefined; it is tracked by a flag rather than stored as NaN, and the only
numeric view handed to downstream math is :meth:`MatrixSeries.zero_filled`.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import (
    DuplicateKeyError,
    MissingCellError,
    NonFiniteError,
    ParseError,
    RangeError,
    UndefinedCellError,
)

logger = logging.getLogger(__name__)

LONG_HEADER = ("exporter", "importer", "year", "month", "value")


class YearMonth(NamedTuple):
    year: int
    month: int

    def shift(self, months: int) -> "YearMonth":
        k = self.year * 12 + (self.month - 1) + months
        return YearMonth(k // 12, k % 12 + 1)

    def ordinal(self) -> int:
        return self.year * 12 + self.month - 1

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"

    @classmethod
    def parse(cls, text: str) -> "YearMonth":
        y, m = text.strip().split("-")
        return cls(int(y), int(m))


@dataclass(frozen=True, eq=False)
class MatrixSeries:
    """Immutable sequence of ``T`` ``n x n`` flow matrices.

    ``values`` may be passed with anything on the diagonal when
    ``diag_defined`` is false; those entries are discarded. Negative flows
    are rejected unless ``simulated`` is set.
    """

    entities: tuple[str, ...]
    times: tuple[YearMonth, ...]
    values: np.ndarray
    diag_defined: bool = False
    simulated: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ents = tuple(str(e) for e in self.entities)
        times = tuple(YearMonth(*t) for t in self.times)
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.ndim != 3 or vals.shape[1] != vals.shape[2]:
            raise ValueError(f"values must have shape (T, n, n), got {vals.shape}")
        T, n, _ = vals.shape
        if n != len(ents):
            raise ValueError(f"{len(ents)} entity labels for {n}x{n} matrices")
        if len(set(ents)) != n:
            raise ValueError("entity labels must be unique")
        if len(times) != T:
            raise ValueError(f"{len(times)} time stamps for {T} matrices")
        for a, b in zip(times, times[1:]):
            if b.ordinal() - a.ordinal() != 1:
                raise ValueError(f"time stamps not contiguous months: {a} -> {b}")
        if not self.diag_defined:
            idx = np.arange(n)
            vals[:, idx, idx] = 0.0
        if not np.all(np.isfinite(vals)):
            raise NonFiniteError("series contains non-finite defined entries")
        if not self.simulated and np.any(vals < 0):
            raise ValueError("negative flows are only permitted for simulated data")
        vals.setflags(write=False)
        object.__setattr__(self, "entities", ents)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "meta", dict(self.meta))

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def defined_mask(self) -> np.ndarray:
        mask = np.ones((self.n, self.n), dtype=bool)
        if not self.diag_defined:
            np.fill_diagonal(mask, False)
        return mask

    def zero_filled(self) -> np.ndarray:
        """Writable ``(T, n, n)`` copy with undefined cells set to zero."""
        return np.array(self.values, copy=True)

    def cell(self, t: int, i: int, j: int) -> float:
        if i == j and not self.diag_defined:
            raise UndefinedCellError(
                f"cell ({self.entities[i]}, {self.entities[j]}) at {self.times[t]} is undefined"
            )
        return float(self.values[t, i, j])

    def permute(self, order: Sequence[int]) -> "MatrixSeries":
        """Relabel entities so that new entity ``k`` is old entity ``order[k]``."""
        order = list(order)
        if sorted(order) != list(range(self.n)):
            raise ValueError("order must be a permutation of range(n)")
        vals = self.values[:, order][:, :, order]
        return self._replace(entities=[self.entities[k] for k in order], values=vals)

    def _replace(self, **changes) -> "MatrixSeries":
        kw = dict(
            entities=self.entities,
            times=self.times,
            values=self.values,
            diag_defined=self.diag_defined,
            simulated=self.simulated,
            meta=self.meta,
        )
        kw.update(changes)
        return MatrixSeries(**kw)

    def equals(self, other: "MatrixSeries") -> bool:
        return (
            self.entities == other.entities
            and self.times == other.times
            and self.diag_defined == other.diag_defined
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self) -> str:
        span = f"{self.times[0]}..{self.times[-1]}" if self.T else "empty"
        return f"MatrixSeries(n={self.n}, T={self.T}, {span})"


def month_range(start: YearMonth, T: int) -> tuple[YearMonth, ...]:
    start = YearMonth(*start)
    return tuple(start.shift(k) for k in range(T))


# ---------------------------------------------------------------------------
# long CSV


def _read_long_rows(path, diag_defined: bool, allow_negative: bool):
    """Yield ``(line, exporter, importer, YearMonth, value)`` from a long CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        header = [h.strip() for h in header]
        missing = [c for c in LONG_HEADER if c not in header]
        if missing:
            raise ParseError(f"header lacks columns {missing}", line=1)
        pos = [header.index(c) for c in LONG_HEADER]
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=line)
            exp, imp, ys, ms, vs = (row[p].strip() for p in pos)
            if not exp or not imp:
                raise ParseError("empty entity label", line=line)
            try:
                year, month, value = int(ys), int(ms), float(vs)
            except ValueError as exc:
                raise ParseError(str(exc), line=line) from None
            if not 1 <= month <= 12:
                raise ParseError(f"month {month} out of range", line=line)
            if not math.isfinite(value):
                raise ParseError(f"non-finite value {vs!r}", line=line)
            if value < 0 and not allow_negative:
                raise ParseError(f"negative flow {value}", line=line)
            if exp == imp and not diag_defined:
                raise ParseError(f"self-flow record for {exp!r}", line=line)
            yield line, exp, imp, YearMonth(year, month), value


def _collect(records, what: str):
    cells: dict[tuple[str, str, YearMonth], float] = {}
    entities: set[str] = set()
    months: set[YearMonth] = set()
    for line, exp, imp, ym, value in records:
        key = (exp, imp, ym)
        if key in cells:
            raise DuplicateKeyError(f"duplicate {what} record ({exp}, {imp}, {ym})", line=line)
        cells[key] = value
        entities.update((exp, imp))
        months.add(ym)
    return cells, entities, months


def _span(months: Iterable[YearMonth]) -> tuple[YearMonth, ...]:
    months = sorted(months)
    if not months:
        raise ParseError("no data rows")
    times = month_range(months[0], months[-1].ordinal() - months[0].ordinal() + 1)
    absent = sorted(set(times) - set(months))
    if absent:
        raise ParseError(f"non-contiguous months: no records for {', '.join(map(str, absent[:5]))}")
    return times


def _fill_missing(vals, mask_missing, entities, times, strict: bool, what: str) -> int:
    count = int(mask_missing.sum())
    if count == 0:
        return 0
    t, i, j = (int(x) for x in np.argwhere(mask_missing)[0])
    if strict:
        raise MissingCellError(
            f"{count} missing {what} cell(s); first is ({entities[i]}, {entities[j]}, {times[t]})"
        )
    vals[mask_missing] = 0.0
    logger.warning("set %d missing %s cell(s) to 0", count, what)
    return count


def ingest_long_csv(
    path,
    strict: bool = True,
    *,
    allow_negative: bool = False,
    diag_defined: bool = False,
) -> MatrixSeries:
    """Read a long ``exporter,importer,year,month,value`` file into a series.

    Entities are the sorted union of labels seen on either side and the time
    axis spans the first to last observed month. Off-diagonal cells with no
    record raise :class:`MissingCellError` when ``strict``; otherwise they are
    zeroed and counted in ``meta["missing_filled"]``.
    """
    cells, ents, months = _collect(_read_long_rows(path, diag_defined, allow_negative), "flow")
    entities = sorted(ents)
    times = _span(months)
    eidx = {e: k for k, e in enumerate(entities)}
    tidx = {t: k for k, t in enumerate(times)}
    n, T = len(entities), len(times)
    vals = np.full((T, n, n), np.nan)
    for (exp, imp, ym), v in cells.items():
        vals[tidx[ym], eidx[exp], eidx[imp]] = v
    missing = np.isnan(vals)
    if not diag_defined:
        missing[:, np.arange(n), np.arange(n)] = False
    filled = _fill_missing(vals, missing, entities, times, strict, "flow")
    return MatrixSeries(
        entities,
        times,
        np.nan_to_num(vals, nan=0.0),
        diag_defined=diag_defined,
        simulated=allow_negative,
        meta={"missing_filled": filled, "source": str(path)},
    )


def export_long_csv(series: MatrixSeries, path) -> Path:
    """Write ``series`` as a long CSV; floats use shortest round-trip repr."""
    path = Path(path)
    mask = series.defined_mask
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LONG_HEADER)
        for t, ym in enumerate(series.times):
            mat = series.values[t]
            for i, exp in enumerate(series.entities):
                for j, imp in enumerate(series.entities):
                    if mask[i, j]:
                        w.writerow((exp, imp, ym.year, ym.month, repr(float(mat[i, j]))))
    return path


def export_matrix_csvs(series: MatrixSeries, directory) -> list[Path]:
    """Write one wide CSV per time point, named ``YYYY-MM.csv``.

    Rows are exporters, columns importers; undefined cells are written ``NA``.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    mask = series.defined_mask
    out = []
    for t, ym in enumerate(series.times):
        p = directory / f"{ym}.csv"
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("exporter",) + series.entities)
            for i, exp in enumerate(series.entities):
                w.writerow(
                    [exp]
                    + [repr(float(series.values[t, i, j])) if mask[i, j] else "NA" for j in range(series.n)]
                )
        out.append(p)
    return out


# ---------------------------------------------------------------------------
# mirror imputation


@dataclass(frozen=True, eq=False)
class PartialSeries:
    """Reporter-side flows with NaN marking cells nobody reported.

    Cell ``(i, j)`` always means the flow from ``i`` to ``j``, whichever side
    reported it.
    """

    entities: tuple[str, ...]
    times: tuple[YearMonth, ...]
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float, copy=True)
        T, n = len(self.times), len(self.entities)
        if vals.shape != (T, n, n):
            raise ValueError(f"values shape {vals.shape} != {(T, n, n)}")
        vals.setflags(write=False)
        object.__setattr__(self, "entities", tuple(self.entities))
        object.__setattr__(self, "times", tuple(YearMonth(*t) for t in self.times))
        object.__setattr__(self, "values", vals)


def read_partial_long_csv(
    path, entities: Sequence[str] | None = None, times: Sequence[YearMonth] | None = None
) -> PartialSeries:
    """Read a long CSV without requiring completeness (unreported cells are NaN)."""
    cells, ents, months = _collect(_read_long_rows(path, False, False), "reported")
    entities = list(entities) if entities is not None else sorted(ents)
    times = tuple(times) if times is not None else _span(months)
    eidx = {e: k for k, e in enumerate(entities)}
    tidx = {t: k for k, t in enumerate(times)}
    vals = np.full((len(times), len(entities), len(entities)), np.nan)
    for (exp, imp, ym), v in cells.items():
        if exp not in eidx or imp not in eidx or ym not in tidx:
            raise ParseError(f"record ({exp}, {imp}, {ym}) outside the declared panel")
        vals[tidx[ym], eidx[exp], eidx[imp]] = v
    return PartialSeries(entities, times, vals)


def mirror_impute(
    exports_reported: PartialSeries, imports_reported: PartialSeries, strict: bool = True
) -> MatrixSeries:
    """Build exports from the importer-side reports.

    The flow ``i -> j`` is taken from ``j``'s reported import from ``i``.
    Where only ``i``'s export report exists it is used instead and counted in
    ``meta["exporter_fallback"]``; cells reported by neither side follow the
    ``strict`` missing-cell rule of :func:`ingest_long_csv`.
    """
    if exports_reported.entities != imports_reported.entities:
        raise ValueError("export and import reports cover different entities")
    if exports_reported.times != imports_reported.times:
        raise ValueError("export and import reports cover different months")
    entities, times = exports_reported.entities, exports_reported.times
    imp = imports_reported.values
    exp = exports_reported.values
    n = len(entities)
    out = np.array(imp, copy=True)
    fallback = np.isnan(imp) & ~np.isnan(exp)
    fallback[:, np.arange(n), np.arange(n)] = False
    out[fallback] = exp[fallback]
    n_fallback = int(fallback.sum())
    if n_fallback:
        logger.info("used exporter-side report for %d cell(s)", n_fallback)
    missing = np.isnan(out)
    missing[:, np.arange(n), np.arange(n)] = False
    filled = _fill_missing(out, missing, entities, times, strict, "flow")
    return MatrixSeries(
        entities,
        times,
        np.nan_to_num(out, nan=0.0),
        meta={"exporter_fallback": n_fallback, "missing_filled": filled},
    )


# ---------------------------------------------------------------------------
# transforms


def three_month_average(series: MatrixSeries) -> MatrixSeries:
    """Centered three-month mean; the first and last months are dropped."""
    if series.T < 3:
        raise RangeError(f"three-month averaging needs T >= 3, got T={series.T}")
    v = series.values
    avg = (v[:-2] + v[1:-1] + v[2:]) / 3.0
    return series._replace(times=series.times[1:-1], values=avg)


def window(series: MatrixSeries, start_index: int, length: int) -> MatrixSeries:
    if start_index < 0 or length < 1 or start_index + length > series.T:
        raise RangeError(
            f"window [{start_index}, {start_index + length}) outside series of length {series.T}"
        )
    return series._replace(
        times=series.times[start_index : start_index + length],
        values=series.values[start_index : start_index + length],
    )

"""Survival dataset container, CSV ingestion, and pre-fit validation.

A dataset is a flat collection of one row per subject: entry time, observation
time, event indicator, and a fixed-width covariate vector.  Times are in
arbitrary but consistent units; entry defaults to zero (pure right censoring)
when the input carries no entry column.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataValidationError

RESERVED_COLUMNS = ("id", "entry", "time", "event")


@dataclass(frozen=True)
class SurvivalRecord:
    """One subject: observation window (entry, time], event flag, covariates."""

    subject_id: str
    entry: float
    time: float
    event: int
    covariates: np.ndarray

    def __post_init__(self):
        if not self.time > self.entry:
            raise DataValidationError(
                f"subject {self.subject_id!r}: time ({self.time}) must be > entry ({self.entry})"
            )
        if self.entry < 0:
            raise DataValidationError(f"subject {self.subject_id!r}: entry must be >= 0")
        if self.event not in (0, 1):
            raise DataValidationError(
                f"subject {self.subject_id!r}: event must be 0 or 1, got {self.event}"
            )


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of survival records with aligned covariate columns.

    Subject ids are kept as opaque strings; ``subject_index`` maps them to the
    dense range 0..N-1 in file order, which is what the numerical engines use.
    """

    entry: np.ndarray
    time: np.ndarray
    event: np.ndarray
    covariates: np.ndarray  # (N, p)
    covariate_names: tuple[str, ...]
    subject_ids: tuple[str, ...]
    subject_index: dict[str, int] = field(repr=False, default_factory=dict)

    @property
    def n_subjects(self) -> int:
        return len(self.subject_ids)

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]

    @property
    def n_events(self) -> int:
        return int(self.event.sum())

    @property
    def records(self) -> list[SurvivalRecord]:
        return [
            SurvivalRecord(sid, float(e), float(t), int(d), x)
            for sid, e, t, d, x in zip(
                self.subject_ids, self.entry, self.time, self.event, self.covariates
            )
        ]

    def __len__(self) -> int:
        return self.n_subjects


def make_dataset(entry, time, event, covariates, covariate_names, subject_ids=None) -> Dataset:
    """Assemble and validate a Dataset from array-like columns."""
    entry = np.asarray(entry, dtype=float)
    time = np.asarray(time, dtype=float)
    event = np.asarray(event)
    covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
    n = time.shape[0]
    if covariates.shape[0] != n:
        covariates = covariates.reshape(n, -1)
    if subject_ids is None:
        subject_ids = tuple(str(i) for i in range(n))
    else:
        subject_ids = tuple(str(s) for s in subject_ids)

    if entry.shape != (n,) or event.shape != (n,):
        raise DataValidationError("entry/time/event columns must have equal length")
    if len(covariate_names) != covariates.shape[1]:
        raise DataValidationError(
            f"{len(covariate_names)} covariate names for {covariates.shape[1]} columns"
        )
    if not np.all(np.isfinite(entry)) or not np.all(np.isfinite(time)):
        raise DataValidationError("non-finite entry or observation time")
    if not np.all(np.isfinite(covariates)):
        raise DataValidationError("non-finite covariate value")
    bad = np.nonzero(~(time > entry))[0]
    if bad.size:
        i = int(bad[0])
        raise DataValidationError(
            f"row {i} (subject {subject_ids[i]!r}): time ({time[i]}) must be > entry ({entry[i]})"
        )
    if np.any(entry < 0):
        raise DataValidationError("entry times must be >= 0")
    event_arr = np.asarray(event, dtype=float)
    if not np.all(np.isin(event_arr, (0.0, 1.0))):
        i = int(np.nonzero(~np.isin(event_arr, (0.0, 1.0)))[0][0])
        raise DataValidationError(f"row {i}: event must be 0 or 1, got {event[i]}")

    index = {}
    for i, sid in enumerate(subject_ids):
        if sid in index:
            raise DataValidationError(f"duplicate subject id {sid!r}")
        index[sid] = i
    return Dataset(
        entry=entry,
        time=time,
        event=event_arr.astype(np.int8),
        covariates=covariates,
        covariate_names=tuple(covariate_names),
        subject_ids=subject_ids,
        subject_index=index,
    )


def load_dataset(path, schema: dict[str, str] | None = None) -> Dataset:
    """Read a delimited text file with header ``id,entry,time,event,<cov...>``.

    ``schema`` optionally remaps the reserved roles to other header names,
    e.g. ``{"time": "followup_days"}``.  The entry column is optional and
    defaults every entry time to 0.  All non-reserved columns are covariates,
    kept in file order.
    """
    schema = dict(schema or {})
    col_of = {role: schema.get(role, role) for role in RESERVED_COLUMNS}

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for role in ("id", "time", "event"):
            if col_of[role] not in header:
                raise DataValidationError(f"{path}: missing required column {col_of[role]!r}")
        has_entry = col_of["entry"] in header
        reserved = {col_of[r] for r in RESERVED_COLUMNS if r != "entry" or has_entry}
        cov_names = [h for h in header if h not in reserved]
        pos = {name: j for j, name in enumerate(header)}

        ids, entries, times, events, rows = [], [], [], [], []
        for i, raw in enumerate(reader):
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(header):
                raise DataValidationError(
                    f"{path}: row {i}: expected {len(header)} cells, got {len(raw)}"
                )

            def cell(name, row_index=i, row=raw):
                text = row[pos[name]].strip()
                try:
                    return float(text)
                except ValueError:
                    raise DataValidationError(
                        f"{path}: row {row_index}: malformed numeric cell {text!r} in column {name!r}"
                    ) from None

            ids.append(raw[pos[col_of["id"]]].strip())
            entries.append(cell(col_of["entry"]) if has_entry else 0.0)
            times.append(cell(col_of["time"]))
            ev = cell(col_of["event"])
            if ev not in (0.0, 1.0):
                raise DataValidationError(f"{path}: row {i}: event must be 0 or 1, got {raw[pos[col_of['event']]]}")
            events.append(int(ev))
            rows.append([cell(c) for c in cov_names])

    if not ids:
        raise DataValidationError(f"{path}: no data rows")
    covs = np.asarray(rows, dtype=float) if cov_names else np.empty((len(ids), 0))
    try:
        return make_dataset(entries, times, events, covs, cov_names, subject_ids=ids)
    except DataValidationError as exc:
        raise DataValidationError(f"{path}: {exc}") from None


def save_dataset(d: Dataset, path) -> None:
    """Write a dataset back to CSV in the canonical column order."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "entry", "time", "event", *d.covariate_names])
        for sid, e, t, ev, x in zip(d.subject_ids, d.entry, d.time, d.event, d.covariates):
            writer.writerow([sid, repr(float(e)), repr(float(t)), int(ev), *(repr(float(v)) for v in x)])


@dataclass(frozen=True)
class FitReadiness:
    """Pre-fit summary: dimensions, event count, and degenerate-column flags."""

    n_subjects: int
    n_covariates: int
    n_events: int
    max_time: float
    constant_covariates: tuple[str, ...]


def validate_for_fit(d: Dataset) -> FitReadiness:
    """Check the dataset supports hazard estimation; never mutates ``d``.

    Zero events is an error (nothing identifies the hazard level); a constant
    covariate column is only flagged, since some engines tolerate it.
    """
    n_events = d.n_events
    if n_events == 0:
        raise DataValidationError("no events: at least one record with event=1 is required")
    constant = tuple(
        name
        for j, name in enumerate(d.covariate_names)
        if np.ptp(d.covariates[:, j]) == 0.0
    )
    return FitReadiness(
        n_subjects=d.n_subjects,
        n_covariates=d.n_covariates,
        n_events=n_events,
        max_time=float(d.time.max()),
        constant_covariates=constant,
    )

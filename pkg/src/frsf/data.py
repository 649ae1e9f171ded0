"""Data model and CSV ingestion for longitudinal time-to-event records.

A subject is a set of timestamped measurements, a follow-up end point
(event or censoring time), an event indicator, and scalar covariates.
Two CSV files feed the model: an observation file with columns
``subject_id,time,value`` and a subject file with columns
``subject_id,event_time,event,<covariates...>``.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

from .exceptions import (
    CensoringConsistencyError,
    CsvParseError,
    MissingSeriesError,
    SchemaError,
    ValidationError,
)

OBS_HEADER = ("subject_id", "time", "value")
SUBJ_HEADER_PREFIX = ("subject_id", "event_time", "event")


@dataclass(frozen=True)
class Observation:
    """A single measurement: (time, value)."""

    time: float
    value: float

    def __post_init__(self):
        # coerce numpy scalars so equality and repr behave like floats
        object.__setattr__(self, "time", float(self.time))
        object.__setattr__(self, "value", float(self.value))
        if not (math.isfinite(self.time) and math.isfinite(self.value)):
            raise ValidationError(f"non-finite observation ({self.time}, {self.value})")


@dataclass(frozen=True)
class SubjectSeries:
    """One subject's longitudinal record plus survival outcome.

    Observation times are strictly increasing and never exceed
    ``event_time``. ``event`` is True when the terminal event was
    observed, False when the subject was right-censored.
    """

    subject_id: str
    observations: tuple[Observation, ...]
    event_time: float
    event: bool
    covariates: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "event_time", float(self.event_time))
        object.__setattr__(self, "event", bool(self.event))
        object.__setattr__(self, "covariates", {k: float(v) for k, v in self.covariates.items()})
        if len(self.observations) < 1:
            raise MissingSeriesError(f"subject {self.subject_id!r} has no observations")
        if not math.isfinite(self.event_time):
            raise ValidationError(f"subject {self.subject_id!r}: non-finite event_time")
        times = [o.time for o in self.observations]
        for a, b in zip(times, times[1:]):
            if not a < b:
                raise ValidationError(
                    f"subject {self.subject_id!r}: observation times not strictly increasing "
                    f"({a} then {b})"
                )
        if times[-1] > self.event_time:
            raise CensoringConsistencyError(
                f"subject {self.subject_id!r}: observation at t={times[-1]} "
                f"after event_time={self.event_time}"
            )
        for name, v in self.covariates.items():
            if not math.isfinite(v):
                raise ValidationError(f"subject {self.subject_id!r}: covariate {name!r} not finite")

    @property
    def n_obs(self) -> int:
        return len(self.observations)

    @property
    def times(self) -> list[float]:
        return [o.time for o in self.observations]

    @property
    def values(self) -> list[float]:
        return [o.value for o in self.observations]


@dataclass(frozen=True)
class Dataset:
    """An immutable collection of subjects on a common follow-up window [a, b]."""

    subjects: tuple[SubjectSeries, ...]
    domain: tuple[float, float]
    covariate_names: tuple[str, ...]

    def __post_init__(self):
        a, b = self.domain
        if not a < b:
            raise ValidationError(f"domain [{a}, {b}] must satisfy a < b")
        seen = set()
        for s in self.subjects:
            if s.subject_id in seen:
                raise ValidationError(f"duplicate subject id {s.subject_id!r}")
            seen.add(s.subject_id)
            if s.event_time > b or s.event_time < a:
                raise ValidationError(
                    f"subject {s.subject_id!r}: event_time {s.event_time} outside domain [{a}, {b}]"
                )
            if s.observations[0].time < a:
                raise ValidationError(
                    f"subject {s.subject_id!r}: observation at t={s.observations[0].time} before domain start"
                )
            if set(s.covariates) != set(self.covariate_names):
                raise ValidationError(
                    f"subject {s.subject_id!r}: covariate names {sorted(s.covariates)} "
                    f"differ from dataset covariates {sorted(self.covariate_names)}"
                )

    @property
    def n(self) -> int:
        return len(self.subjects)

    @property
    def follow_up_length(self) -> float:
        return self.domain[1] - self.domain[0]

    @property
    def subject_ids(self) -> list[str]:
        return [s.subject_id for s in self.subjects]

    def event_times(self) -> list[float]:
        return [s.event_time for s in self.subjects]

    def event_indicators(self) -> list[int]:
        return [int(s.event) for s in self.subjects]


def _split_csv_line(line: str) -> list[str]:
    return [f.strip() for f in line.rstrip("\r\n").split(",")]


def parse_observations(text: str) -> dict[str, list[Observation]]:
    """Parse observation CSV content into per-subject sorted observation lists.

    Rows are grouped by subject and sorted by time; duplicate
    (subject, time) rows are rejected.
    """
    lines = [ln for ln in io.StringIO(text)]
    if not lines or not lines[0].strip():
        raise SchemaError("observation file is empty")
    header = tuple(_split_csv_line(lines[0]))
    if header != OBS_HEADER:
        raise SchemaError(f"observation header must be {','.join(OBS_HEADER)}, got {','.join(header)}")
    out: dict[str, list[Observation]] = {}
    seen_times: dict[str, set] = {}
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        fields = _split_csv_line(raw)
        if len(fields) != 3:
            raise CsvParseError(f"expected 3 fields, got {len(fields)}", line=lineno)
        sid = fields[0]
        if not sid:
            raise CsvParseError("empty subject_id", line=lineno)
        try:
            t, v = float(fields[1]), float(fields[2])
        except ValueError:
            raise CsvParseError(f"could not parse numeric fields {fields[1]!r},{fields[2]!r}", line=lineno) from None
        if sid in seen_times and t in seen_times[sid]:
            raise ValidationError(f"subject {sid!r}: duplicate observation time {t}")
        seen_times.setdefault(sid, set()).add(t)
        out.setdefault(sid, []).append(Observation(t, v))
    for sid in out:
        out[sid].sort(key=lambda o: o.time)
    return out


def parse_subjects(text: str) -> tuple[dict[str, tuple[float, bool, dict[str, float]]], tuple[str, ...]]:
    """Parse subject CSV content.

    Returns (mapping subject_id -> (event_time, event, covariates), covariate names).
    Covariate names come from the header; empty covariate cells are rejected.
    """
    lines = [ln for ln in io.StringIO(text)]
    if not lines or not lines[0].strip():
        raise SchemaError("subject file is empty")
    header = _split_csv_line(lines[0])
    if tuple(header[:3]) != SUBJ_HEADER_PREFIX:
        raise SchemaError(
            f"subject header must start with {','.join(SUBJ_HEADER_PREFIX)}, got {','.join(header[:3])}"
        )
    cov_names = tuple(header[3:])
    if any(not c for c in cov_names):
        raise SchemaError("subject header has an empty covariate name")
    if len(set(cov_names)) != len(cov_names):
        raise SchemaError("subject header has duplicate covariate names")
    out: dict[str, tuple[float, bool, dict[str, float]]] = {}
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        fields = _split_csv_line(raw)
        if len(fields) != 3 + len(cov_names):
            raise CsvParseError(f"expected {3 + len(cov_names)} fields, got {len(fields)}", line=lineno)
        sid = fields[0]
        if not sid:
            raise CsvParseError("empty subject_id", line=lineno)
        if sid in out:
            raise ValidationError(f"duplicate subject id {sid!r}")
        try:
            event_time = float(fields[1])
        except ValueError:
            raise CsvParseError(f"could not parse event_time {fields[1]!r}", line=lineno) from None
        if fields[2] not in ("0", "1"):
            raise ValidationError(f"subject {sid!r}: event must be 0 or 1, got {fields[2]!r}")
        covs = {}
        for name, cell in zip(cov_names, fields[3:]):
            if cell == "":
                raise ValidationError(f"subject {sid!r}: missing covariate {name!r}")
            try:
                covs[name] = float(cell)
            except ValueError:
                raise CsvParseError(f"could not parse covariate {name!r} value {cell!r}", line=lineno) from None
        out[sid] = (event_time, fields[2] == "1", covs)
    return out, cov_names


def assemble_dataset(
    obs: dict[str, list[Observation]],
    subjects: dict[str, tuple[float, bool, dict[str, float]]],
    domain: tuple[float, float] | None = None,
    covariate_names: tuple[str, ...] | None = None,
) -> Dataset:
    """Join observation and outcome maps into a validated Dataset.

    Every subject needs at least one observation, and no observation may
    fall after the subject's event/censoring time. When ``domain`` is
    None it defaults to [min observed time, max event_time].
    """
    unknown = set(obs) - set(subjects)
    if unknown:
        raise ValidationError(f"observations for unknown subjects: {sorted(unknown)}")
    series = []
    for sid in subjects:
        event_time, event, covs = subjects[sid]
        if sid not in obs or not obs[sid]:
            raise MissingSeriesError(f"subject {sid!r} has outcomes but no observations")
        series.append(
            SubjectSeries(
                subject_id=sid,
                observations=tuple(obs[sid]),
                event_time=event_time,
                event=event,
                covariates=dict(covs),
            )
        )
    if covariate_names is None:
        covariate_names = tuple(series[0].covariates) if series else ()
    if domain is None:
        a = min(s.observations[0].time for s in series)
        b = max(s.event_time for s in series)
        domain = (a, b)
    return Dataset(subjects=tuple(series), domain=domain, covariate_names=covariate_names)


def load_dataset(
    obs_text: str, subj_text: str, domain: tuple[float, float] | None = None
) -> Dataset:
    """Parse both CSV contents and assemble the Dataset."""
    obs = parse_observations(obs_text)
    subj, cov_names = parse_subjects(subj_text)
    return assemble_dataset(obs, subj, domain=domain, covariate_names=cov_names)


def observations_to_csv(dataset: Dataset) -> str:
    """Serialize observations back to the ingestion CSV format."""
    rows = [",".join(OBS_HEADER)]
    for s in dataset.subjects:
        for o in s.observations:
            rows.append(f"{s.subject_id},{o.time!r},{o.value!r}")
    return "\n".join(rows) + "\n"


def subjects_to_csv(dataset: Dataset) -> str:
    """Serialize subject outcomes and covariates to the ingestion CSV format."""
    rows = [",".join(SUBJ_HEADER_PREFIX + dataset.covariate_names)]
    for s in dataset.subjects:
        covs = ",".join(repr(s.covariates[c]) for c in dataset.covariate_names)
        line = f"{s.subject_id},{s.event_time!r},{int(s.event)}"
        rows.append(line + ("," + covs if covs else ""))
    return "\n".join(rows) + "\n"

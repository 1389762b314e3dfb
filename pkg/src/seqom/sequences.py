"""Event alphabets, weighted sequence datasets and encoding schemes.

Datasets are read from two CSV layouts:

* long: ``case_id,weight,events`` where ``events`` is ``;``-separated;
* wide: ``case_id,weight,pcrash1,pcrash2,pcrash3,soe1,...,soeK`` where
  empty trailing cells mean the chain has ended.

Any other column is kept as a per-case label column (e.g. a benchmark
categorization) and travels with the dataset through encoding.
"""
from __future__ import annotations

import csv
import math
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .exceptions import DataError, EncodingWarning

__all__ = [
    "EventAlphabet",
    "EventSequence",
    "SequenceDataset",
    "EncodingScheme",
    "DatasetStats",
    "from_event_lists",
    "load_dataset",
    "write_dataset",
    "load_encoding_scheme",
    "write_encoding_scheme",
    "identity_scheme",
    "apply_encoding",
    "dataset_stats",
    "distinct_sequences",
]

_WIDE_EVENT_COL = re.compile(r"^(pcrash[123]|soe\d+)$")


class EventAlphabet:
    """Ordered set of distinct event codes.

    Codes keep their first-appearance order so that matrices built over the
    alphabet do not depend on hashing.
    """

    __slots__ = ("codes", "index")

    def __init__(self, codes: Iterable[str]):
        codes = tuple(codes)
        index: dict[str, int] = {}
        for code in codes:
            if not isinstance(code, str) or not code:
                raise DataError(f"event codes must be non-empty strings, got {code!r}")
            if code in index:
                raise DataError(f"duplicate event code {code!r}")
            index[code] = len(index)
        self.codes = codes
        self.index = index

    def __len__(self):
        return len(self.codes)

    def __iter__(self):
        return iter(self.codes)

    def __contains__(self, code):
        return code in self.index

    def __eq__(self, other):
        return isinstance(other, EventAlphabet) and self.codes == other.codes

    def __hash__(self):
        return hash(self.codes)

    def __repr__(self):
        return f"EventAlphabet({list(self.codes)!r})"

    def encode(self, events: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.index[e] for e in events)

    def decode(self, events: Iterable[int]) -> tuple[str, ...]:
        return tuple(self.codes[i] for i in events)


@dataclass(frozen=True)
class EventSequence:
    case_id: str
    weight: float
    events: tuple[int, ...]

    def __post_init__(self):
        if len(self.events) < 1:
            raise DataError(f"case {self.case_id!r}: zero-length sequence")
        if not self.weight >= 0 or math.isinf(self.weight):
            raise DataError(f"case {self.case_id!r}: negative weight {self.weight!r}")

    def __len__(self):
        return len(self.events)


@dataclass(frozen=True)
class SequenceDataset:
    """Immutable collection of weighted sequences over one alphabet.

    ``labels`` maps extra column names to one string per case.
    ``warnings`` lists messages recorded by lenient operations such as
    non-strict encoding.
    """

    alphabet: EventAlphabet
    sequences: tuple[EventSequence, ...]
    labels: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        n_codes = len(self.alphabet)
        seen = set()
        for s in self.sequences:
            if s.case_id in seen:
                raise DataError(f"duplicate case_id {s.case_id!r}")
            seen.add(s.case_id)
            for e in s.events:
                if not 0 <= e < n_codes:
                    raise DataError(f"case {s.case_id!r}: event index {e} outside alphabet")
        for name, column in self.labels.items():
            if len(column) != len(self.sequences):
                raise DataError(f"label column {name!r} has {len(column)} values for "
                                f"{len(self.sequences)} cases")

    def __len__(self):
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    @property
    def total_weight(self) -> float:
        return math.fsum(s.weight for s in self.sequences)

    @property
    def case_ids(self) -> list[str]:
        return [s.case_id for s in self.sequences]

    @property
    def weights(self):
        import numpy as np
        return np.array([s.weight for s in self.sequences], dtype=float)

    def decoded(self, i: int) -> tuple[str, ...]:
        return self.alphabet.decode(self.sequences[i].events)

    def __eq__(self, other):
        if not isinstance(other, SequenceDataset):
            return NotImplemented
        return (self.alphabet == other.alphabet
                and self.sequences == other.sequences
                and dict(self.labels) == dict(other.labels))

    __hash__ = None


def from_event_lists(event_lists: Sequence[Sequence[str]], weights=None, case_ids=None,
                     labels: Mapping[str, Sequence[str]] | None = None) -> SequenceDataset:
    """Build a dataset from lists of event codes.

    >>> ds = from_event_lists([["A", "B"], ["B"]], weights=[1.0, 2.5])
    >>> ds.alphabet.codes, ds.total_weight
    (('A', 'B'), 3.5)
    """
    n = len(event_lists)
    if weights is None:
        weights = [1.0] * n
    if case_ids is None:
        case_ids = [f"c{i + 1}" for i in range(n)]
    if len(weights) != n or len(case_ids) != n:
        raise DataError("event lists, weights and case ids must have equal length")
    codes: dict[str, None] = {}
    for events in event_lists:
        for e in events:
            codes.setdefault(str(e), None)
    alphabet = EventAlphabet(codes)
    seqs = tuple(
        EventSequence(str(cid), float(w), alphabet.encode(str(e) for e in events))
        for cid, w, events in zip(case_ids, weights, event_lists)
    )
    labels = {k: tuple(str(v) for v in col) for k, col in (labels or {}).items()}
    return SequenceDataset(alphabet, seqs, labels)


# ---------------------------------------------------------------------------
# CSV input/output
# ---------------------------------------------------------------------------

def _parse_weight(raw: str, line: int) -> float:
    try:
        w = float(raw)
    except ValueError:
        raise DataError(f"line {line}: malformed weight {raw!r}") from None
    if math.isnan(w) or math.isinf(w):
        raise DataError(f"line {line}: malformed weight {raw!r}")
    if w < 0:
        raise DataError(f"line {line}: negative weight {raw!r}")
    return w


def load_dataset(path, format: str = "long") -> SequenceDataset:
    """Read a sequence dataset from a long or wide CSV file.

    Raises
    ------
    DataError
        On a malformed row (with its line number), a zero-length sequence,
        a negative weight or a duplicate ``case_id``.
    """
    if format not in ("long", "wide"):
        raise DataError(f"unknown dataset format {format!r}")
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        if "case_id" not in header:
            raise DataError(f"{path}: header lacks a case_id column")
        id_col = header.index("case_id")
        w_col = header.index("weight") if "weight" in header else None
        if format == "long":
            if "events" not in header:
                raise DataError(f"{path}: long format requires an events column")
            ev_cols = [header.index("events")]
        else:
            ev_cols = [i for i, h in enumerate(header) if _WIDE_EVENT_COL.match(h)]
            if not ev_cols:
                raise DataError(f"{path}: wide format requires pcrash/soe columns")
        used = {id_col, *ev_cols} | ({w_col} if w_col is not None else set())
        label_cols = [(i, h) for i, h in enumerate(header) if i not in used]

        rows = []
        seen: set[str] = set()
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) > len(header) or len(row) < (len(header) if format == "long" else max(ev_cols[0], id_col) + 1):
                raise DataError(f"line {line}: expected {len(header)} fields, got {len(row)}")
            row = row + [""] * (len(header) - len(row))
            case_id = row[id_col].strip()
            if not case_id:
                raise DataError(f"line {line}: empty case_id")
            if case_id in seen:
                raise DataError(f"line {line}: duplicate case_id {case_id!r}")
            seen.add(case_id)
            weight = _parse_weight(row[w_col].strip(), line) if w_col is not None else 1.0
            if format == "long":
                raw = row[ev_cols[0]].strip()
                events = [e.strip() for e in raw.split(";")] if raw else []
                if any(not e for e in events):
                    raise DataError(f"line {line}: empty event code in {raw!r}")
            else:
                cells = [row[i].strip() for i in ev_cols]
                while cells and not cells[-1]:
                    cells.pop()
                if any(not c for c in cells):
                    raise DataError(f"line {line}: gap inside the event chain")
                events = cells
            if not events:
                raise DataError(f"line {line}: zero-length sequence for case {case_id!r}")
            rows.append((case_id, weight, events, [row[i].strip() for i, _ in label_cols]))

    ds = from_event_lists(
        [r[2] for r in rows],
        weights=[r[1] for r in rows],
        case_ids=[r[0] for r in rows],
        labels={name: [r[3][k] for r in rows] for k, (_, name) in enumerate(label_cols)},
    )
    return ds


def _format_weight(w: float) -> str:
    return repr(float(w))


def write_dataset(ds: SequenceDataset, path, format: str = "long") -> None:
    """Write ``ds`` so that :func:`load_dataset` reads back an equal dataset."""
    label_names = list(ds.labels)
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        if format == "long":
            writer.writerow(["case_id", "weight", "events", *label_names])
            for i, s in enumerate(ds.sequences):
                writer.writerow([s.case_id, _format_weight(s.weight), ";".join(ds.decoded(i)),
                                 *(ds.labels[n][i] for n in label_names)])
        elif format == "wide":
            width = max((len(s) for s in ds.sequences), default=3)
            n_soe = max(width - 3, 1)
            cols = ["pcrash1", "pcrash2", "pcrash3"] + [f"soe{i + 1}" for i in range(n_soe)]
            writer.writerow(["case_id", "weight", *label_names, *cols])
            for i, s in enumerate(ds.sequences):
                events = list(ds.decoded(i))
                writer.writerow([s.case_id, _format_weight(s.weight),
                                 *(ds.labels[n][i] for n in label_names),
                                 *events, *[""] * (len(cols) - len(events))])
        else:
            raise DataError(f"unknown dataset format {format!r}")


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EncodingScheme:
    name: str
    mapping: Mapping[str, str]
    descriptions: Mapping[str, str] = field(default_factory=dict)

    @property
    def target_alphabet(self) -> EventAlphabet:
        return EventAlphabet(dict.fromkeys(self.mapping.values()))

    def __len__(self):
        return len(self.mapping)


def identity_scheme(alphabet: EventAlphabet, name: str = "identity") -> EncodingScheme:
    return EncodingScheme(name, {c: c for c in alphabet})


def load_encoding_scheme(path, name: str | None = None) -> EncodingScheme:
    """Read a ``source,target,description`` CSV file."""
    path = Path(path)
    mapping: dict[str, str] = {}
    descriptions: dict[str, str] = {}
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    with handle:
        reader = csv.reader(handle)
        header = [h.strip() for h in next(reader, [])]
        if header[:2] != ["source", "target"]:
            raise DataError(f"{path}: header must start with source,target")
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2 or not row[0].strip() or not row[1].strip():
                raise DataError(f"line {line}: malformed scheme row")
            src, tgt = row[0].strip(), row[1].strip()
            if src in mapping:
                raise DataError(f"line {line}: duplicate source code {src!r}")
            mapping[src] = tgt
            descriptions[src] = row[2].strip() if len(row) > 2 else ""
    if not mapping:
        raise DataError(f"{path}: encoding scheme is empty")
    return EncodingScheme(name or path.stem, mapping, descriptions)


def write_encoding_scheme(scheme: EncodingScheme, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["source", "target", "description"])
        for src, tgt in scheme.mapping.items():
            writer.writerow([src, tgt, scheme.descriptions.get(src, "")])


def apply_encoding(ds: SequenceDataset, scheme: EncodingScheme, strict: bool = True) -> SequenceDataset:
    """Replace every event by its consolidated code.

    In strict mode an unmapped code raises :class:`DataError`; otherwise the
    code passes through unchanged and a warning is recorded on the result.
    Lengths, weights, case order and label columns are preserved.
    """
    mapping = scheme.mapping
    unmapped: dict[str, str] = {}
    lists = []
    for i, s in enumerate(ds.sequences):
        out = []
        for code in ds.decoded(i):
            target = mapping.get(code)
            if target is None:
                if strict:
                    raise DataError(f"event code {code!r} (first seen in case {s.case_id!r}) "
                                    f"is not mapped by scheme {scheme.name!r}")
                unmapped.setdefault(code, s.case_id)
                target = code
            out.append(target)
        lists.append(out)
    notes = tuple(f"unmapped code {c!r} passed through (first case {cid!r})"
                  for c, cid in unmapped.items())
    for note in notes:
        warnings.warn(note, EncodingWarning, stacklevel=2)
    encoded = from_event_lists(lists, weights=[s.weight for s in ds.sequences],
                               case_ids=ds.case_ids, labels=ds.labels)
    return SequenceDataset(encoded.alphabet, encoded.sequences, encoded.labels,
                           ds.warnings + notes)


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetStats:
    count: int
    total_weight: float
    min_length: int
    max_length: int
    mean_length: float
    weighted_mean_length: float
    length_histogram: dict[int, int]
    distinct: int
    alphabet_size: int

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["length_histogram"] = {str(k): v for k, v in sorted(self.length_histogram.items())}
        return d


def dataset_stats(ds: SequenceDataset) -> DatasetStats:
    if not len(ds):
        raise DataError("dataset is empty")
    lengths = [len(s) for s in ds.sequences]
    total = ds.total_weight
    wmean = (math.fsum(len(s) * s.weight for s in ds.sequences) / total
             if total > 0 else float("nan"))
    return DatasetStats(
        count=len(ds),
        total_weight=total,
        min_length=min(lengths),
        max_length=max(lengths),
        mean_length=math.fsum(lengths) / len(lengths),
        weighted_mean_length=wmean,
        length_histogram=dict(sorted(Counter(lengths).items())),
        distinct=len({s.events for s in ds.sequences}),
        alphabet_size=len(ds.alphabet),
    )


def distinct_sequences(ds: SequenceDataset):
    """Group cases by identical event lists.

    Returns
    -------
    uniques : list of tuple[int, ...]
        Distinct event lists in first-appearance order.
    weights : numpy.ndarray
        Aggregated case weight of each distinct list.
    case_to_unique : numpy.ndarray
        For every case, the position of its event list in ``uniques``.
    """
    import numpy as np

    if not len(ds):
        raise DataError("dataset is empty")
    position: dict[tuple[int, ...], int] = {}
    members: list[list[float]] = []
    case_to_unique = np.empty(len(ds), dtype=np.intp)
    for i, s in enumerate(ds.sequences):
        u = position.setdefault(s.events, len(position))
        if u == len(members):
            members.append([])
        members[u].append(s.weight)
        case_to_unique[i] = u
    weights = np.array([math.fsum(m) for m in members], dtype=float)
    return list(position), weights, case_to_unique

"""End-to-end study workflow: ingest, encode, cost, matrix, cluster, evaluate.

Every output is a deterministic function of the inputs and the
configuration, so a manifest plus the input files reproduces a bundle byte
for byte.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from contextlib import contextmanager
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .agreement import agreement_report, mantel_test
from .align import DissimilarityMatrix, expand_condensed, pairwise_matrix, read_matrix, write_matrix
from .cluster import (ClusterAssignment, QUALITY_NAMES, quality_over_k, representative_sequences,
                      weighted_k_medoids)
from .costs import PRESETS, CostScheme, build_cost_scheme, write_substitution_csv
from .exceptions import ConfigError, DataError, SeqomError
from .sequences import (SequenceDataset, apply_encoding, dataset_stats, distinct_sequences,
                        from_event_lists, load_dataset, load_encoding_scheme)

__all__ = [
    "PipelineConfig",
    "SweepResult",
    "load_config",
    "run_pipeline",
    "sensitivity_sweep",
    "mantel_report",
    "alluvial_export",
    "cluster_dataset",
    "e_grid_values",
]

MEASURES = PRESETS + ("custom",)


@dataclass
class PipelineConfig:
    input: str = ""
    format: str = "long"
    scheme: str | None = None
    strict: bool = True
    measure: str = "OMlev"
    q: int = 1
    e: float | None = None
    g: float | None = None
    weighted: bool = True
    normalize_max2: bool = True
    denominator: str = "successor"
    substitution: str | None = None
    indel: float = 1.0
    k: int | None = None
    k_range: tuple[int, int] | None = None
    init: str = "build"
    seed: int = 0
    benchmark: str | None = None
    weighted_agreement: bool = False
    permutations: int = 999
    e_grid: tuple[float, float, float] = (0.0, 0.4, 0.01)
    threads: int | None = None
    out: str = "out"

    def validate(self, sweep: bool = False) -> "PipelineConfig":
        """Check every field before any computation starts."""
        problems = []
        if not self.input:
            problems.append("input is required")
        if self.format not in ("long", "wide"):
            problems.append(f"format must be long or wide, got {self.format!r}")
        if self.measure not in MEASURES:
            problems.append(f"measure must be one of {', '.join(MEASURES)}, got {self.measure!r}")
        if self.measure == "custom" and not self.substitution:
            problems.append("custom measure requires a substitution matrix file")
        if not isinstance(self.q, int) or self.q < 1:
            problems.append(f"q must be a positive integer, got {self.q!r}")
        if self.denominator not in ("successor", "all"):
            problems.append(f"denominator must be successor or all, got {self.denominator!r}")
        if self.measure.startswith("LOM") and not sweep:
            if self.e is None or self.g is None:
                problems.append(f"{self.measure} requires e and g")
            elif self.e < 0 or self.g < 0 or 2 * self.e + self.g < 1 - 1e-12:
                problems.append(f"e={self.e}, g={self.g} violate 2e + g >= 1")
        if sweep:
            if not self.measure.startswith("LOM"):
                problems.append(f"sweep needs LOMtr or LOMsf, got {self.measure!r}")
            if not self.benchmark:
                problems.append("sweep needs a benchmark column")
            if self.k is None:
                problems.append("sweep needs k")
            start, stop, step = self.e_grid
            if not (0 <= start <= stop <= 0.5) or not step > 0:
                problems.append(f"e grid must satisfy 0 <= start <= stop <= 0.5 and step > 0, got {self.e_grid}")
        if self.k is not None and self.k < 1:
            problems.append(f"k must be positive, got {self.k!r}")
        if self.k_range is not None:
            a, b = self.k_range
            if a < 2 or b < a:
                problems.append(f"k range must satisfy 2 <= a <= b, got {a}:{b}")
        if self.init not in ("build", "random"):
            problems.append(f"init must be build or random, got {self.init!r}")
        if self.permutations < 1:
            problems.append("permutations must be positive")
        if self.threads is not None and self.threads < 1:
            problems.append("threads must be positive")
        if self.indel <= 0:
            problems.append("indel cost must be positive")
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    def as_dict(self) -> dict:
        d = asdict(self)
        for key in ("k_range", "e_grid"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d


def _parse_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _parse_k_range(value: str) -> tuple[int, int]:
    a, sep, b = value.partition(":")
    if not sep:
        raise ValueError(f"expected a:b, got {value!r}")
    return int(a), int(b)


def _parse_e_grid(value: str) -> tuple[float, float, float]:
    parts = value.split(":")
    if len(parts) != 3:
        raise ValueError(f"expected start:stop:step, got {value!r}")
    return tuple(float(p) for p in parts)


_PARSERS = {
    "strict": _parse_bool, "weighted": _parse_bool, "normalize_max2": _parse_bool,
    "weighted_agreement": _parse_bool, "q": int, "k": int, "seed": int, "permutations": int,
    "threads": int, "e": float, "g": float, "indel": float, "k_range": _parse_k_range,
    "e_grid": _parse_e_grid,
}


def config_from_mapping(values: dict) -> PipelineConfig:
    """Build a config from string values, rejecting unknown keys and bad types."""
    known = {f.name for f in fields(PipelineConfig)}
    kwargs = {}
    for key, raw in values.items():
        key = key.replace("-", "_")
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if raw is None:
            continue
        if isinstance(raw, str):
            raw = raw.strip()
            if raw == "" or raw.lower() == "none":
                kwargs[key] = None
                continue
            parser = _PARSERS.get(key)
            if parser is not None:
                try:
                    raw = parser(raw)
                except ValueError as exc:
                    raise ConfigError(f"config key {key!r}: {exc}") from None
        kwargs[key] = raw
    return PipelineConfig(**kwargs)


def load_config(path) -> PipelineConfig:
    """Read a flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key = key.strip()
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return config_from_mapping(values)


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

@contextmanager
def _stage(name: str):
    try:
        yield
    except SeqomError as exc:
        raise type(exc)(f"stage {name}: {exc}") from exc


def prepare_dataset(cfg: PipelineConfig) -> SequenceDataset:
    ds = load_dataset(cfg.input, cfg.format)
    if cfg.scheme:
        ds = apply_encoding(ds, load_encoding_scheme(cfg.scheme), strict=cfg.strict)
    return ds


def make_scheme(cfg: PipelineConfig, ds: SequenceDataset, substitution=None, e=None, g=None) -> CostScheme:
    e = cfg.e if e is None else e
    g = cfg.g if g is None else g
    if cfg.measure == "custom":
        from .costs import IndelModel, _checked, read_substitution_csv
        sub = substitution or read_substitution_csv(cfg.substitution)
        missing = [c for c in ds.alphabet if c not in sub.alphabet]
        if missing:
            raise DataError(f"substitution matrix lacks codes {missing}")
        indel = IndelModel.localized(e, g) if e is not None else IndelModel.constant(cfg.indel)
        return _checked(CostScheme("custom", sub, indel, {"lag": cfg.q}))
    return build_cost_scheme(cfg.measure, ds, lag=cfg.q, e=e, g=g, weighted=cfg.weighted,
                             normalize_max2=cfg.normalize_max2, denominator=cfg.denominator,
                             substitution=substitution)


def unique_dataset(ds: SequenceDataset):
    """Distinct sequences with aggregated weights, plus the case mapping."""
    uniques, weights, case_to_unique = distinct_sequences(ds)
    uds = from_event_lists([ds.alphabet.decode(u) for u in uniques], weights=weights.tolist(),
                           case_ids=[f"u{i}" for i in range(len(uniques))])
    return uds, case_to_unique


def cluster_dataset(ds: SequenceDataset, scheme: CostScheme, k: int, seed: int = 0,
                    init: str = "build", threads=None):
    """Cluster distinct sequences with aggregated weights and expand to cases.

    Returns the case-level assignment, the distinct-sequence matrix and the
    case-to-distinct mapping.
    """
    uds, c2u = unique_dataset(ds)
    umat = pairwise_matrix(uds, scheme, dedupe=False, threads=threads)
    a = weighted_k_medoids(umat, k, seed=seed, init=init)
    return a.expand(c2u), umat, c2u


def e_grid_values(start: float, stop: float, step: float) -> list[float]:
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


class _Bundle:
    """Tracks written files so a failed run leaves nothing half-written."""

    def __init__(self, out):
        self.out = Path(out)
        self.created_dir = not self.out.exists()
        self.files: list[Path] = []

    def path(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        self.files.append(p)
        return p

    def rollback(self):
        for p in self.files:
            p.unlink(missing_ok=True)
        if self.created_dir and self.out.exists() and not any(self.out.iterdir()):
            self.out.rmdir()

    def digests(self) -> dict:
        return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in self.files if p.exists()}


def _labels_of(ds: SequenceDataset, column: str) -> tuple[str, ...]:
    if column not in ds.labels:
        raise ConfigError(f"benchmark column {column!r} not in input (have {sorted(ds.labels)})")
    return ds.labels[column]


def _agreement(ds, column, labels, weighted):
    bench = _labels_of(ds, column)
    return agreement_report(bench, labels, ds.weights if weighted else None)


def write_assignment(path: Path, ds: SequenceDataset, a: ClusterAssignment):
    _write_csv(path, ["case_id", "cluster"], zip(ds.case_ids, a.labels.tolist()))


def write_quality(path: Path, table):
    header = ["k", *QUALITY_NAMES, *(f"{n}_z" for n in QUALITY_NAMES)]
    _write_csv(path, header, ([row["k"], *(_fmt(row[h]) for h in header[1:])] for row in table.rows()))


def write_representatives(path: Path, reps):
    _write_csv(path, ["cluster", "share", "events"],
               ([c, _fmt(share), ";".join(ev)] for c, (ev, share) in enumerate(reps)))


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run the full workflow and write the report bundle to ``cfg.out``.

    Returns a mapping of output names to paths. On failure every file
    written by this run is removed and the error names the failing stage.
    """
    cfg.validate()
    bundle = _Bundle(cfg.out)
    try:
        with _stage("load"):
            ds = prepare_dataset(cfg)
            if cfg.benchmark:
                _labels_of(ds, cfg.benchmark)
        with _stage("stats"):
            _write_json(bundle.path("stats.json"), dataset_stats(ds).as_dict())
        with _stage("costs"):
            scheme = make_scheme(cfg, ds)
            write_substitution_csv(scheme.substitution, bundle.path("substitution.csv"))
            _write_json(bundle.path("costs.json"), {
                "measure": scheme.name, "gamma_max": scheme.substitution.gamma_max,
                "indel": asdict(scheme.indel), "options": scheme.options})
        with _stage("matrix"):
            uds, c2u = unique_dataset(ds)
            umat = pairwise_matrix(uds, scheme, dedupe=False, threads=cfg.threads)
            cmat = DissimilarityMatrix(tuple(ds.case_ids), ds.weights,
                                       expand_condensed(umat.values, c2u), scheme.name)
            write_matrix(cmat, bundle.path("distances.txt"))
        results = {}
        with _stage("cluster"):
            if cfg.k is not None:
                a = weighted_k_medoids(umat, cfg.k, seed=cfg.seed, init=cfg.init)
                case_a = a.expand(c2u)
                write_assignment(bundle.path("assignment.csv"), ds, case_a)
                write_representatives(bundle.path("representatives.csv"),
                                      representative_sequences(ds, case_a))
                results["objective"] = a.objective
                results["medoids"] = [ds.case_ids[i] for i in case_a.medoids.tolist()]
        with _stage("quality"):
            ks = None
            if cfg.k_range is not None:
                ks = range(cfg.k_range[0], cfg.k_range[1] + 1)
            elif cfg.k is not None and cfg.k >= 2:
                ks = [cfg.k]
            if ks is not None:
                table = quality_over_k(umat, ks, seed=cfg.seed, init=cfg.init)
                write_quality(bundle.path("quality.csv"), table)
        with _stage("agreement"):
            if cfg.benchmark and cfg.k is not None:
                _write_json(bundle.path("agreement.json"),
                            _agreement(ds, cfg.benchmark, case_a.labels, cfg.weighted_agreement))
        manifest = {
            "version": __version__,
            "config": cfg.as_dict(),
            "n_cases": len(ds),
            "n_distinct": len(uds),
            "results": results,
            "outputs": bundle.digests(),
        }
        _write_json(bundle.path("manifest.json"), manifest)
    except BaseException:
        bundle.rollback()
        raise
    return {p.stem: p for p in bundle.files}


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[tuple[float, float, float, float, float], ...]
    optimum: tuple[float, float, float, float, float]

    HEADER = ("e", "g", "ari", "ami", "fms")


def sensitivity_sweep(cfg: PipelineConfig, e_grid=None, write: bool = True) -> SweepResult:
    """Score clusterings over a grid of e with g = 1 - 2e.

    Substitution costs do not depend on (e, g) and are computed once; each
    grid point recomputes alignments and reclusters with the fixed seed.
    The optimum is the row with the largest ARI, ties going to the smaller e.
    """
    if e_grid is not None:
        cfg.e_grid = tuple(e_grid)
    cfg.validate(sweep=True)
    with _stage("load"):
        ds = prepare_dataset(cfg)
        bench = _labels_of(ds, cfg.benchmark)
    with _stage("costs"):
        base = make_scheme(cfg, ds, e=0.5, g=0.0).substitution
    uds, c2u = unique_dataset(ds)
    rows = []
    for e in e_grid_values(*cfg.e_grid):
        g = 1.0 - 2.0 * e
        with _stage(f"sweep e={e}"):
            scheme = make_scheme(cfg, ds, substitution=base, e=e, g=g)
            umat = pairwise_matrix(uds, scheme, dedupe=False, threads=cfg.threads)
            a = weighted_k_medoids(umat, cfg.k, seed=cfg.seed, init=cfg.init).expand(c2u)
            rep = agreement_report(bench, a.labels, ds.weights if cfg.weighted_agreement else None)
        rows.append((e, g, rep["ari"], rep["ami"], rep["fms"]))
    best = rows[0]
    for row in rows[1:]:
        if row[2] > best[2]:
            best = row
    result = SweepResult(tuple(rows), best)
    if write:
        bundle = _Bundle(cfg.out)
        try:
            _write_csv(bundle.path("sweep.csv"), SweepResult.HEADER,
                       ([_fmt(v) for v in row] for row in rows))
            _write_json(bundle.path("sweep_optimum.json"),
                        {**dict(zip(SweepResult.HEADER, best)), "measure": cfg.measure,
                         "k": cfg.k, "seed": cfg.seed, "config": cfg.as_dict()})
        except BaseException:
            bundle.rollback()
            raise
    return result


def mantel_report(matrices, permutations: int = 999, seed: int = 0, names=None):
    """Pairwise Mantel correlations and p-values among several matrices.

    ``matrices`` holds DissimilarityMatrix objects or paths to matrix files.
    Returns ``(names, r, p)`` with NaN on the diagonals.
    """
    mats = [m if isinstance(m, DissimilarityMatrix) else read_matrix(m) for m in matrices]
    if len(mats) < 2:
        raise ConfigError("mantel report needs at least two matrices")
    if names is None:
        names = [m.scheme_name or f"m{i}" for i, m in enumerate(mats)]
        if len(set(names)) != len(names):
            names = [Path(str(p)).stem if not isinstance(p, DissimilarityMatrix) else f"m{i}"
                     for i, p in enumerate(matrices)]
    for m in mats[1:]:
        if m.labels != mats[0].labels:
            raise DataError("matrices have different case labels")
    k = len(mats)
    r = np.full((k, k), np.nan)
    p = np.full((k, k), np.nan)
    for i in range(k):
        for j in range(i + 1, k):
            res = mantel_test(mats[i], mats[j], permutations=permutations, seed=seed)
            r[i, j] = r[j, i] = res.r
            p[i, j] = p[j, i] = res.p_value
    return list(names), r, p


def write_mantel_tables(out, names, r, p):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for fname, table in (("mantel_r.csv", r), ("mantel_p.csv", p)):
        _write_csv(out / fname, ["", *names],
                   ([name, *("" if np.isnan(v) else _fmt(v) for v in row)]
                    for name, row in zip(names, table)))


def alluvial_export(assignments, weights=None, stages=None):
    """Weighted flows between consecutive labelings of the same cases.

    Returns rows ``(stage_from, category_from, stage_to, category_to, weight)``.
    """
    if len(assignments) < 2:
        raise ConfigError("alluvial export needs at least two labelings")
    labels = [np.asarray([str(v) for v in a]) for a in assignments]
    n = len(labels[0])
    if any(len(l) != n for l in labels):
        raise DataError("labelings differ in length")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if len(w) != n:
        raise DataError("weights differ in length from labelings")
    stages = list(stages) if stages is not None else [f"stage{i + 1}" for i in range(len(labels))]
    rows = []
    for s in range(len(labels) - 1):
        a, b = labels[s], labels[s + 1]
        flows: dict[tuple[str, str], list[float]] = {}
        for i in range(n):
            flows.setdefault((a[i], b[i]), []).append(w[i])
        for (ca, cb) in sorted(flows, key=lambda t: (_natural(t[0]), _natural(t[1]))):
            rows.append((stages[s], ca, stages[s + 1], cb, math.fsum(flows[(ca, cb)])))
    return rows


def _natural(v: str):
    try:
        return (0, float(v), v)
    except ValueError:
        return (1, 0.0, v)

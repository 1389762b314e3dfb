"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
degeneracy.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path


from . import __version__
from .agreement import agreement_report
from .align import read_matrix, write_matrix
from .cluster import representative_sequences, weighted_k_medoids, quality_over_k
from .exceptions import ConfigError, DataError, SeqomError
from .pipeline import (PipelineConfig, alluvial_export, config_from_mapping,
                       load_config, make_scheme, mantel_report, prepare_dataset, run_pipeline,
                       sensitivity_sweep, unique_dataset, write_assignment, write_mantel_tables,
                       write_quality, write_representatives, _fmt, _write_csv, _write_json)
from .costs import write_substitution_csv
from .align import pairwise_matrix
from .sequences import dataset_stats, write_dataset

# flags that map straight onto PipelineConfig fields
_CONFIG_FLAGS = ("input", "format", "scheme", "measure", "q", "e", "g", "k", "k_range", "seed",
                 "benchmark", "permutations", "out", "threads", "init", "e_grid")


def _add_data_flags(p):
    p.add_argument("--config", help="flat key = value config file; flags override it")
    p.add_argument("--input", help="dataset CSV")
    p.add_argument("--format", choices=("long", "wide"))
    p.add_argument("--scheme", help="encoding scheme CSV (source,target,description)")
    p.add_argument("--lenient", action="store_true",
                   help="pass unmapped codes through instead of failing")
    p.add_argument("--out", help="output directory")


def _add_cost_flags(p):
    p.add_argument("--measure", choices=("OMlev", "OMtr", "OMsf", "LOMtr", "LOMsf"))
    p.add_argument("--q", type=int, help="position lag for data-driven costs")
    p.add_argument("--e", type=float)
    p.add_argument("--g", type=float)
    p.add_argument("--threads", type=int)


def _add_cluster_flags(p, k_range=False):
    p.add_argument("--k", type=int)
    if k_range:
        p.add_argument("--k-range", dest="k_range", help="a:b inclusive")
    p.add_argument("--seed", type=int)
    p.add_argument("--init", choices=("build", "random"))


def _config(args) -> PipelineConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(load_config(args.config).as_dict())
        for key in ("k_range", "e_grid"):
            if values.get(key) is not None:
                values[key] = ":".join(str(v) for v in values[key])
    for name in _CONFIG_FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v if isinstance(v, str) else str(v)
    if getattr(args, "lenient", False):
        values["strict"] = "false"
    return config_from_mapping({k: (v if v is None or isinstance(v, str) else str(v))
                                for k, v in values.items()})


def _out(cfg) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _need_input(cfg):
    if not cfg.input:
        raise ConfigError("--input is required")


def cmd_stats(args):
    cfg = _config(args)
    _need_input(cfg)
    stats = dataset_stats(prepare_dataset(cfg)).as_dict()
    text = json.dumps(stats, indent=2, sort_keys=True)
    if args.out:
        _write_json(_out(cfg) / "stats.json", stats)
    print(text)


def cmd_encode(args):
    cfg = _config(args)
    _need_input(cfg)
    if not cfg.scheme:
        raise ConfigError("--scheme is required")
    ds = prepare_dataset(cfg)
    path = _out(cfg) / "encoded.csv"
    write_dataset(ds, path, "long")
    for w in ds.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(path)


def cmd_costs(args):
    cfg = _config(args)
    cfg.validate()
    ds = prepare_dataset(cfg)
    scheme = make_scheme(cfg, ds)
    out = _out(cfg)
    write_substitution_csv(scheme.substitution, out / "substitution.csv")
    _write_json(out / "costs.json", {"measure": scheme.name,
                                     "gamma_max": scheme.substitution.gamma_max,
                                     "indel": asdict(scheme.indel), "options": scheme.options})
    print(out / "substitution.csv")


def cmd_distmat(args):
    cfg = _config(args)
    cfg.validate()
    ds = prepare_dataset(cfg)
    scheme = make_scheme(cfg, ds)
    m = pairwise_matrix(ds, scheme, dedupe=True, threads=cfg.threads)
    path = _out(cfg) / ("distances.npz" if args.binary else "distances.txt")
    write_matrix(m, path)
    print(path)


def _load_or_compute(args, cfg):
    """Return (dataset or None, matrix used for clustering, case mapping or None)."""
    if args.matrix:
        return None, read_matrix(args.matrix), None
    cfg.validate()
    ds = prepare_dataset(cfg)
    scheme = make_scheme(cfg, ds)
    uds, c2u = unique_dataset(ds)
    return ds, pairwise_matrix(uds, scheme, dedupe=False, threads=cfg.threads), c2u


def cmd_cluster(args):
    cfg = _config(args)
    if cfg.k is None:
        raise ConfigError("--k is required")
    ds, m, c2u = _load_or_compute(args, cfg)
    a = weighted_k_medoids(m, cfg.k, seed=cfg.seed, init=cfg.init)
    out = _out(cfg)
    if ds is None:
        _write_csv(out / "assignment.csv", ["case_id", "cluster"], zip(m.labels, a.labels.tolist()))
        medoids = [m.labels[i] for i in a.medoids.tolist()]
    else:
        a = a.expand(c2u)
        write_assignment(out / "assignment.csv", ds, a)
        write_representatives(out / "representatives.csv", representative_sequences(ds, a))
        medoids = [ds.case_ids[i] for i in a.medoids.tolist()]
    _write_json(out / "cluster.json", {"k": cfg.k, "objective": a.objective, "medoids": medoids,
                                       "seed": cfg.seed, "init": cfg.init})
    print(out / "assignment.csv")


def cmd_quality(args):
    cfg = _config(args)
    if cfg.k_range is None:
        raise ConfigError("--k-range is required")
    _, m, _ = _load_or_compute(args, cfg)
    table = quality_over_k(m, range(cfg.k_range[0], cfg.k_range[1] + 1), seed=cfg.seed,
                           init=cfg.init)
    path = _out(cfg) / "quality.csv"
    write_quality(path, table)
    print(path)


def _read_labels(path):
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if not header or len(header) < 2:
            raise DataError(f"{path}: expected case_id,<label> columns")
        rows = [r for r in reader if r]
    return [r[0] for r in rows], [r[1] for r in rows]


def cmd_agree(args):
    ids_a, a = _read_labels(args.a)
    ids_b, b = _read_labels(args.b)
    if ids_a != ids_b:
        raise DataError("label files list different cases or a different order")
    report = agreement_report(a, b)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "agreement.json").write_text(text + "\n", encoding="utf-8")
    print(text)


def cmd_mantel(args):
    names, r, p = mantel_report(args.matrices, permutations=args.permutations, seed=args.seed)
    out = Path(args.out or ".")
    write_mantel_tables(out, names, r, p)
    pairs = [{"a": names[i], "b": names[j], "r": r[i, j], "p_value": p[i, j],
              "permutations": args.permutations, "seed": args.seed}
             for i in range(len(names)) for j in range(i + 1, len(names))]
    _write_json(out / "mantel.json", pairs)
    print(out / "mantel_r.csv")


def cmd_sweep(args):
    cfg = _config(args)
    res = sensitivity_sweep(cfg)
    print(json.dumps(dict(zip(res.HEADER, res.optimum)), sort_keys=True))


def cmd_alluvial(args):
    ids, labelings = None, []
    for path in args.assignments:
        case_ids, labels = _read_labels(path)
        if ids is not None and case_ids != ids:
            raise DataError(f"{path}: case ids differ from the first labeling")
        ids = case_ids
        labelings.append(labels)
    weights = None
    if args.input:
        from .sequences import load_dataset
        ds = load_dataset(args.input, args.format or "long")
        if ds.case_ids != ids:
            raise DataError("dataset case ids differ from the labelings")
        weights = ds.weights
    stages = [Path(p).stem for p in args.assignments]
    if len(set(stages)) != len(stages):
        stages = None
    rows = alluvial_export(labelings, weights, stages)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "alluvial.csv", ["stage_from", "category_from", "stage_to", "category_to",
                                      "weight"],
               ([a, b, c, d, _fmt(w)] for a, b, c, d, w in rows))
    print(out / "alluvial.csv")


def cmd_pipeline(args):
    cfg = _config(args)
    outputs = run_pipeline(cfg)
    print(outputs["manifest"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqom", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="dataset summary")
    _add_data_flags(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("encode", help="apply an encoding scheme")
    _add_data_flags(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("costs", help="write the substitution matrix of a measure")
    _add_data_flags(p)
    _add_cost_flags(p)
    p.set_defaults(func=cmd_costs)

    p = sub.add_parser("distmat", help="pairwise dissimilarity matrix")
    _add_data_flags(p)
    _add_cost_flags(p)
    p.add_argument("--binary", action="store_true", help="write an .npz container")
    p.set_defaults(func=cmd_distmat)

    for name, func, kr in (("cluster", cmd_cluster, False), ("quality", cmd_quality, True)):
        p = sub.add_parser(name, help="weighted k-medoids" if name == "cluster"
                           else "quality indices over a range of k")
        _add_data_flags(p)
        _add_cost_flags(p)
        _add_cluster_flags(p, k_range=kr)
        p.add_argument("--matrix", help="precomputed matrix file instead of --input")
        p.set_defaults(func=func)

    p = sub.add_parser("agree", help="ARI, AMI and FMS between two labelings")
    p.add_argument("a", help="CSV with case_id and a label column")
    p.add_argument("b", help="CSV with case_id and a label column")
    p.add_argument("--out")
    p.set_defaults(func=cmd_agree)

    p = sub.add_parser("mantel", help="pairwise Mantel tests between matrix files")
    p.add_argument("matrices", nargs="+")
    p.add_argument("--permutations", type=int, default=999)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_mantel)

    p = sub.add_parser("sweep", help="ARI sensitivity over e with g = 1 - 2e")
    _add_data_flags(p)
    _add_cost_flags(p)
    _add_cluster_flags(p)
    p.add_argument("--benchmark")
    p.add_argument("--e-grid", dest="e_grid", help="start:stop:step (default 0:0.4:0.01)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("alluvial", help="flow table between labelings")
    p.add_argument("assignments", nargs="+", help="CSV files with case_id and a label column")
    p.add_argument("--input", help="dataset supplying case weights")
    p.add_argument("--format", choices=("long", "wide"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_alluvial)

    p = sub.add_parser("pipeline", help="full workflow with a report bundle")
    _add_data_flags(p)
    _add_cost_flags(p)
    _add_cluster_flags(p, k_range=True)
    p.add_argument("--benchmark")
    p.add_argument("--permutations", type=int)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except SeqomError as exc:
        print(f"seqom {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())

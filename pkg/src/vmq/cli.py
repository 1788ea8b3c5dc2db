"""``vmq`` command line.

Every subcommand writes one JSON record per line to stdout (or ``--out``)
and diagnostics to stderr. Any config leaf can be overridden by a flag of
the same dotted name, e.g. ``--grid.g 28``, ``--estimator.method=mcv`` or
``--classes "[person]"``.

Exit codes: 0 success, 2 usage / query / config error, 3 data error.
"""
from __future__ import annotations

import argparse
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

from .config import DEFAULTS, EngineConfig
from .core import FrameAnnotation
from .engine import compare_estimators, run_selection, run_window_aggregate, speedup_report
from .exceptions import (
    AnnotationFormatError,
    ConfigurationError,
    QueryError,
    SamplingError,
    VmqError,
)
from .io import dump_record, read_annotations, write_annotations
from .metrics import ConfusionCounts, grid_confusion
from .querylang import QueryAst, SelectKind, parse_query, print_query
from .simulator import generate, profile

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3


class UsageError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", help="write records here instead of stdout")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--annotations", help="annotation file (default: simulate from the config)")

    filt = argparse.ArgumentParser(add_help=False)
    filt.add_argument("--filter", choices=("exact", "noisy"), help="overrides filter.kind")
    filt.add_argument("--relax", type=int, choices=(0, 1, 2), help="overrides cascade.relax")

    query = argparse.ArgumentParser(add_help=False)
    query.add_argument("--query", required=True, help="query text, or a path to a file holding it")

    parser = argparse.ArgumentParser(prog="vmq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write a synthetic annotation stream")
    sub.add_parser("profile", parents=[common, data], help="objects-per-frame moments of a stream")
    sub.add_parser("run", parents=[common, data, filt, query], help="execute a query")
    sub.add_parser("eval-filters", parents=[common, data, filt], help="count accuracy and grid f1 of the filter")
    sub.add_parser("estimate", parents=[common, data, filt, query],
                   help="repeat sampled estimation and compare estimators")
    return parser


def _dotted_overrides(extra: Sequence[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        name = tok.split("=", 1)[0][2:]
        if not tok.startswith("--") or ("." not in name and name not in DEFAULTS):
            raise UsageError(f"unrecognized argument {tok!r}")
        if "=" in tok:
            key, value = tok[2:].split("=", 1)
        else:
            if i + 1 >= len(extra):
                raise UsageError(f"{tok} needs a value")
            key, value = tok[2:], extra[i + 1]
            i += 1
        out[key] = value
        i += 1
    return out


def _load_config(args, extra) -> EngineConfig:
    overrides = _dotted_overrides(extra)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if getattr(args, "filter", None) is not None:
        overrides["filter.kind"] = args.filter
    if getattr(args, "relax", None) is not None:
        overrides["cascade.relax"] = str(args.relax)
    return EngineConfig.load(args.config, overrides)


def _frames(args, cfg: EngineConfig) -> Iterable[FrameAnnotation]:
    if getattr(args, "annotations", None):
        return read_annotations(args.annotations, cfg.class_table)
    print("vmq: no --annotations given; simulating a stream from the config", file=sys.stderr)
    return generate(cfg.stream_config())


def _query(args, cfg: EngineConfig) -> QueryAst:
    text = args.query
    path = Path(text)
    if "\n" not in text and len(text) < 4096 and path.is_file():
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read query file {path}: {exc.strerror}") from None
    return parse_query(text, cfg.class_table, cfg.regions)


@contextmanager
def _sink(out_path: Optional[str]) -> Iterator:
    if out_path is None:
        yield sys.stdout
        return
    try:
        fh = open(out_path, "w", encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {out_path}: {exc.strerror}") from None
    with fh:
        yield fh


def _emit(fh, record: dict) -> None:
    fh.write(dump_record(record) + "\n")


# --- subcommands ---------------------------------------------------------------

def cmd_simulate(args, cfg: EngineConfig) -> None:
    if args.out is None:
        raise UsageError("simulate needs --out")
    out = Path(args.out)
    try:
        n = write_annotations(out, generate(cfg.stream_config()), cfg.class_table)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {out}: {exc.strerror}") from None
    print(f"vmq: wrote {n} frames to {out}", file=sys.stderr)


def cmd_profile(args, cfg: EngineConfig) -> None:
    classes = cfg.class_table
    prof = profile(_frames(args, cfg), classes.n)
    with _sink(args.out) as fh:
        _emit(fh, {"type": "profile", **prof.to_dict(classes)})


def _estimator_section(cfg: EngineConfig) -> dict:
    return cfg.section("estimator")


def cmd_run(args, cfg: EngineConfig) -> None:
    q = _query(args, cfg)
    filt = cfg.make_filter()
    cas = cfg.section("cascade")
    with _sink(args.out) as fh:
        if q.select_kind is SelectKind.FRAMES:
            rep = run_selection(_frames(args, cfg), q, filt, cfg.relax, cfg.grid_relax, cfg.detector_cost,
                                cas.get("use_counts", True), cas.get("use_grids", True),
                                cas.get("relation_mode", "centroid"))
            rec = rep.to_dict()
            rec["query"] = print_query(q)
            rec["filter"] = cfg.filter_kind
            rec["relax"] = cfg.relax
            rec["speedup"] = speedup_report(rep, cfg.detector_cost)
            _emit(fh, rec)
            return
        est = _estimator_section(cfg)
        results = run_window_aggregate(
            _frames(args, cfg), q, filt, cfg.relax, est.get("evaluation", "sampled"), est.get("n"),
            est.get("method", "cv"), cfg.grid_relax, est.get("wide_fraction", 1.0),
            est.get("mu_source", "two_stage"), est.get("two_stage_mode", "superset"), est.get("split", False),
            cfg.seed, est.get("include_partial", False), cfg.detector_cost, cas.get("relation_mode", "centroid"),
            est.get("d"))
        for r in results:
            _emit(fh, r.to_dict())


def cmd_estimate(args, cfg: EngineConfig) -> None:
    q = _query(args, cfg)
    if q.select_kind is SelectKind.FRAMES:
        raise UsageError("estimate needs a COUNT or AVG query with a WINDOW clause")
    est = _estimator_section(cfg)
    method = est.get("method", "cv")
    methods = ("plain",) if method == "plain" else ("plain", method)
    rows = compare_estimators(_frames(args, cfg), q, cfg.make_filter(), est.get("n"),
                              int(est.get("repetitions", 50)), methods, cfg.relax, cfg.grid_relax,
                              est.get("wide_fraction", 1.0), est.get("mu_source", "two_stage"),
                              est.get("split", False), cfg.seed,
                              cfg.section("cascade").get("relation_mode", "centroid"), est.get("d"))
    with _sink(args.out) as fh:
        for row in rows:
            _emit(fh, row.to_dict())


def cmd_eval_filters(args, cfg: EngineConfig) -> None:
    classes = cfg.class_table
    truth_filter = cfg.make_filter("exact")
    filt = cfg.make_filter()
    ks = radii = (0, 1, 2)
    count_hits = {(c, k): 0 for c in [*range(classes.n), None] for k in ks}
    conf = {(c, r): ConfusionCounts() for c in range(classes.n) for r in radii}
    n = 0
    for frame in _frames(args, cfg):
        n += 1
        truth, pred = truth_filter.apply(frame), filt.apply(frame)
        for c in [*range(classes.n), None]:
            diff = abs(pred.counts.get(c) - truth.counts.get(c))
            for k in ks:
                count_hits[(c, k)] += diff <= k
        for c in range(classes.n):
            for r in radii:
                conf[(c, r)] = conf[(c, r)] + grid_confusion(pred.grids, truth.grids, c, r)
    if n == 0:
        raise AnnotationFormatError("no frames to evaluate")
    with _sink(args.out) as fh:
        for c in [*range(classes.n), None]:
            label = "*" if c is None else classes.labels[c]
            for k in ks:
                _emit(fh, {"type": "count_accuracy", "class": label, "k": k, "n_frames": n,
                           "accuracy": count_hits[(c, k)] / n, "filter": cfg.filter_kind})
        for c in range(classes.n):
            for r in radii:
                cc = conf[(c, r)]
                _emit(fh, {"type": "grid_f1", "class": classes.labels[c], "radius": r, "n_frames": n,
                           "tp": cc.tp, "fp": cc.fp, "fn": cc.fn, "precision": cc.precision,
                           "recall": cc.recall, "f1": cc.f1, "average": "micro", "filter": cfg.filter_kind})


COMMANDS = {
    "simulate": cmd_simulate,
    "profile": cmd_profile,
    "run": cmd_run,
    "eval-filters": cmd_eval_filters,
    "estimate": cmd_estimate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = _load_config(args, extra)
        COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigurationError, SamplingError) as exc:
        print(f"vmq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except QueryError as exc:
        print(f"vmq: query error ({exc.kind}): {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AnnotationFormatError, OSError, VmqError) as exc:
        print(f"vmq: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

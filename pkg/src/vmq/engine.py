"""Query execution over annotation streams.

The annotation stream doubles as the output of the full detector: a frame
that passes the filter cascade is evaluated exactly on its annotation, at
``detector_cost`` units per frame.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from ._rng import keyed_rng
from .core import FrameAnnotation
from .estimators import (
    COND_THRESHOLD,
    CvEstimate,
    cv_estimate,
    mcv_estimate,
    plain_mean,
    two_stage_mu,
)
from .exceptions import (
    ConfigurationError,
    ParameterError,
    QueryShapeError,
    SamplingError,
)
from .filters import DEFAULT_DETECTOR_COST, cascade_decide, grids_pass
from .gridding import dilate
from .metrics import SetScores, answer_set_scores
from .predicates import count_range_satisfies, eval_frame_exact, frame_value
from .querylang import QueryAst, SelectKind

ESTIMATORS = ("plain", "cv", "mcv")


@dataclass
class RunReport:
    matched_frame_ids: list[int]
    frames_scanned: int
    frames_full_evaluated: int
    filter_cost_total: float
    detector_cost_total: float
    filters_applied: tuple[str, ...] = ()
    truth_frame_ids: Optional[list[int]] = None
    scores: Optional[SetScores] = None

    @property
    def selectivity(self) -> float:
        return self.frames_full_evaluated / self.frames_scanned if self.frames_scanned else 0.0

    def to_dict(self) -> dict:
        out = {
            "type": "run_report",
            "matched_frame_ids": list(self.matched_frame_ids),
            "n_matched": len(self.matched_frame_ids),
            "frames_scanned": self.frames_scanned,
            "frames_full_evaluated": self.frames_full_evaluated,
            "filter_cost_total": self.filter_cost_total,
            "detector_cost_total": self.detector_cost_total,
            "selectivity": self.selectivity,
            "filters_applied": list(self.filters_applied),
        }
        if self.scores is not None:
            out["n_truth"] = len(self.truth_frame_ids)
            out.update(self.scores.to_dict())
        return out


def _ordered(stream: Iterable[FrameAnnotation]) -> Iterator[FrameAnnotation]:
    last = None
    for frame in stream:
        if last is not None and frame.frame_id <= last:
            raise ParameterError(f"frame ids must strictly increase; {frame.frame_id} follows {last}")
        last = frame.frame_id
        yield frame


def run_selection(stream: Iterable[FrameAnnotation], query: QueryAst, filter=None, relax: int = 0,
                  grid_relax: Optional[int] = None, detector_cost: float = DEFAULT_DETECTOR_COST,
                  use_counts: bool = True, use_grids: bool = True, relation_mode: str = "centroid",
                  score: bool = True) -> RunReport:
    """Run a FRAMES query through the filter cascade.

    ``filter=None`` is the filterless full scan. With ``score`` the true
    answer set is also computed (not charged to the cost totals) and
    precision/recall/f1/accuracy are attached.
    """
    if query.select_kind is not SelectKind.FRAMES or query.window is not None:
        raise QueryShapeError("run_selection needs a SELECT FRAMES query without WINDOW")
    matched, truth = [], []
    scanned = full = 0
    filter_cost = detector_total = 0.0
    applied: set[str] = set()
    for frame in _ordered(stream):
        scanned += 1
        passed = True
        if filter is not None:
            fo = filter.apply(frame)
            dec = cascade_decide(query, fo, relax, grid_relax, use_counts, use_grids)
            filter_cost += dec.filter_cost
            applied.update(dec.filters_applied)
            passed = dec.passed
        is_true = eval_frame_exact(query, frame, relation_mode) if (passed or score) else False
        if passed:
            full += 1
            detector_total += detector_cost
            if is_true:
                matched.append(frame.frame_id)
        if score and is_true:
            truth.append(frame.frame_id)
    report = RunReport(matched, scanned, full, filter_cost, detector_total, tuple(sorted(applied)))
    if score:
        report.truth_frame_ids = truth
        report.scores = answer_set_scores(matched, truth)
    return report


def speedup_report(report: RunReport, baseline_detector_cost_per_frame: float = DEFAULT_DETECTOR_COST) -> float:
    """Cost of running the detector on every frame divided by the cascade's cost."""
    if report.frames_scanned <= 0:
        raise ParameterError("speedup needs at least one scanned frame")
    total = report.filter_cost_total + report.detector_cost_total
    if total <= 0:
        raise ParameterError("speedup undefined: total cost is zero")
    return report.frames_scanned * baseline_detector_cost_per_frame / total


# --- windowed aggregates ------------------------------------------------------

@dataclass
class WindowResult:
    window_index: int
    start_frame: int
    agg_value: float
    n_frames: int
    estimate: Optional[CvEstimate] = None
    n_evaluated: int = 0
    filter_cost: float = 0.0
    detector_cost: float = 0.0
    method: str = "exhaustive"
    controls_used: int = 0

    def to_dict(self) -> dict:
        out = {
            "type": "window_result",
            "window_index": self.window_index,
            "start_frame": self.start_frame,
            "agg_value": self.agg_value,
            "n_frames": self.n_frames,
            "n_evaluated": self.n_evaluated,
            "filter_cost": self.filter_cost,
            "detector_cost": self.detector_cost,
            "method": self.method,
        }
        if self.estimate is not None:
            out.update(self.estimate.to_dict())
            out["controls_used"] = self.controls_used
        return out


def iter_windows(stream: Iterable[FrameAnnotation], size: int, advance: int,
                 include_partial: bool = False) -> Iterator[tuple[int, list[FrameAnnotation]]]:
    """Hopping windows over stream positions, as ``(window_index, frames)``."""
    buf: deque = deque()
    index = 0
    for frame in _ordered(stream):
        buf.append(frame)
        if len(buf) == size:
            yield index, list(buf)
            index += 1
            for _ in range(advance):
                buf.popleft()
    if include_partial:
        while buf:
            yield index, list(buf)
            index += 1
            for _ in range(min(advance, len(buf))):
                buf.popleft()


def control_vector(query: QueryAst, fo, relax: int = 0, grid_relax: Optional[int] = None,
                   multiple: bool = False) -> np.ndarray:
    """Cheap per-frame control statistics derived from one filter output.

    Single control: the cascade verdict as 0/1 (``COUNT``) or the reported
    class count gated by the verdict (``AVG``). With ``multiple`` one
    indicator per predicate is appended.
    """
    grid_relax = relax if grid_relax is None else grid_relax
    passed = cascade_decide(query, fo, relax, grid_relax).passed
    if query.avg_class is not None:
        first = [float(passed) * fo.counts[query.avg_class]]
        if multiple:
            first.append(float(passed))
    else:
        first = [float(passed)]
    if not multiple:
        return np.asarray(first)
    cols = list(first)
    for p in query.count_preds:
        cols.append(float(count_range_satisfies(p, fo.counts.get(p.class_id), relax)))
    if query.object_vars:
        grids = dilate(fo.grids, grid_relax)
        for rp in query.region_preds:
            sub = QueryAst(query.select_kind, query.classes, object_vars=(query.var(rp.var),),
                           region_preds=(rp,), window=query.window, avg_class=query.avg_class)
            cols.append(float(grids_pass(sub, grids)))
        for sp in query.spatial_preds:
            names = {sp.var_a} | ({sp.target} if not sp.target_is_region else set())
            sub = QueryAst(query.select_kind, query.classes,
                           object_vars=tuple(v for v in query.object_vars if v.name in names),
                           spatial_preds=(sp,), window=query.window, avg_class=query.avg_class)
            cols.append(float(grids_pass(sub, grids)))
    return np.asarray(cols)


def select_controls(z: np.ndarray, cond_threshold: float = COND_THRESHOLD) -> list[int]:
    """Greedy left-to-right subset of control columns with a well-conditioned covariance."""
    n = z.shape[0]
    keep: list[int] = []
    for j in range(z.shape[1]):
        trial = keep + [j]
        if len(trial) > n - 2:
            break
        s = np.atleast_2d(np.cov(z[:, trial], rowvar=False, ddof=1))
        if np.all(np.diag(s) > 0):
            cond = np.linalg.cond(s)
            if np.isfinite(cond) and cond <= cond_threshold:
                keep = trial
    return keep


def _window_value_exhaustive(query, frames, filter, relax, grid_relax, detector_cost, relation_mode):
    values = np.zeros(len(frames))
    filter_cost = det = 0.0
    for i, frame in enumerate(frames):
        passed = True
        if filter is not None:
            fo = filter.apply(frame)
            dec = cascade_decide(query, fo, relax, grid_relax)
            filter_cost += dec.filter_cost
            passed = dec.passed
        if passed:
            det += detector_cost
            values[i] = frame_value(query, frame, relation_mode)
    return values, filter_cost, det


def run_window_aggregate(stream: Iterable[FrameAnnotation], query: QueryAst, filter=None, relax: int = 0,
                         evaluation: str = "exhaustive", n_samples: Optional[int] = None,
                         estimator: str = "plain", grid_relax: Optional[int] = None,
                         wide_fraction: float = 1.0, mu_source: str = "two_stage",
                         two_stage_mode: str = "superset", split: bool = False, seed: int = 0,
                         include_partial: bool = False, detector_cost: float = DEFAULT_DETECTOR_COST,
                         relation_mode: str = "centroid", max_controls: Optional[int] = None) -> list[WindowResult]:
    """Evaluate a COUNT or AVG query per hopping window.

    ``exhaustive`` evaluates every frame (through the cascade when a filter
    is given). ``sampled`` draws ``n_samples`` frames per window without
    replacement, runs the detector on each, and estimates the window value
    with the ``plain``, ``cv`` or ``mcv`` estimator; control means come from
    the filter over a wide sample (``mu_source="two_stage"``) or, literally,
    from the sampled controls themselves (``mu_source="literal"``).
    ``max_controls`` caps the number of MCV control columns.
    """
    if query.select_kind is SelectKind.FRAMES or query.window is None:
        raise QueryShapeError("run_window_aggregate needs a COUNT or AVG query with a WINDOW clause")
    if evaluation not in ("exhaustive", "sampled"):
        raise ConfigurationError(f"unknown evaluation {evaluation!r}")
    if evaluation == "sampled":
        if estimator not in ESTIMATORS:
            raise ConfigurationError(f"unknown estimator {estimator!r}")
        if n_samples is None or n_samples < 2:
            raise SamplingError("sampled evaluation needs n_samples >= 2")
        if estimator != "plain" and filter is None:
            raise ConfigurationError(f"the {estimator} estimator needs a filter to supply controls")
        if mu_source not in ("two_stage", "literal"):
            raise ConfigurationError(f"unknown mu_source {mu_source!r}")
    is_count = query.select_kind is SelectKind.COUNT_FRAMES
    results = []
    for w_index, frames in iter_windows(stream, query.window.size, query.window.advance, include_partial):
        n_frames = len(frames)
        scale = float(n_frames) if is_count else 1.0
        if evaluation == "exhaustive":
            values, fcost, dcost = _window_value_exhaustive(query, frames, filter, relax, grid_relax,
                                                            detector_cost, relation_mode)
            agg = float(values.sum()) if is_count else float(values.mean())
            results.append(WindowResult(w_index, frames[0].frame_id, agg, n_frames, None,
                                        n_frames, fcost, dcost, "exhaustive"))
            continue
        if n_samples > n_frames:
            raise SamplingError(f"cannot sample {n_samples} frames from a window of {n_frames}")
        rng = keyed_rng(seed, w_index)
        # draw order is kept: in split mode the first half must be a random half
        idx = rng.choice(n_frames, size=n_samples, replace=False)
        y = np.array([frame_value(query, frames[i], relation_mode) for i in idx])
        dcost = n_samples * detector_cost
        fcost = 0.0
        used = 0
        if estimator == "plain":
            est = plain_mean(y)
        else:
            multiple = estimator == "mcv"

            def control(frame):
                return control_vector(query, filter.apply(frame), relax, grid_relax, multiple)

            z = np.array([control(frames[i]) for i in idx])
            if mu_source == "literal":
                mu = z.mean(axis=0)
                fcost = n_samples * float(filter.cost)
            else:
                mu, wide = two_stage_mu(control, frames, wide_fraction, idx, two_stage_mode,
                                        seed=int(keyed_rng(seed, w_index, 1).integers(2**62)))
                n_filtered = len(wide) if two_stage_mode == "superset" else len(wide) + n_samples
                fcost = n_filtered * float(filter.cost)
            cols = select_controls(z)[:max_controls]
            used = len(cols)
            if not cols:
                est = plain_mean(y)
            elif len(cols) == 1 and not multiple:
                est = cv_estimate(y, z[:, cols[0]], mu[cols[0]], split=split)
            else:
                est = mcv_estimate(y, z[:, cols], mu[cols], split=split)
        est = est.scaled(scale)
        results.append(WindowResult(w_index, frames[0].frame_id, est.estimate, n_frames, est,
                                    n_samples, fcost, dcost, estimator, used))
    return results


class _MemoFilter:
    """Per-frame cache around a deterministic filter (repetitions re-read the same frames)."""

    def __init__(self, inner):
        self.inner = inner
        self.cost = inner.cost
        self._memo: dict = {}

    def apply(self, frame: FrameAnnotation):
        out = self._memo.get(frame.frame_id)
        if out is None:
            out = self._memo[frame.frame_id] = self.inner.apply(frame)
        return out


@dataclass
class EstimatorComparison:
    window_index: int
    truth: float
    method: str
    repetitions: int
    mean_estimate: float
    empirical_variance: float
    mean_reported_variance: float
    variance_reduction_vs_plain: float

    def to_dict(self) -> dict:
        return {"type": "estimator_comparison", **self.__dict__}


def compare_estimators(stream: Iterable[FrameAnnotation], query: QueryAst, filter, n_samples: int,
                       repetitions: int, methods: Sequence[str] = ESTIMATORS, relax: int = 0,
                       grid_relax: Optional[int] = None, wide_fraction: float = 1.0,
                       mu_source: str = "two_stage", split: bool = False, seed: int = 0,
                       relation_mode: str = "centroid", max_controls: Optional[int] = None,
                       ) -> list[EstimatorComparison]:
    """Repeat sampled estimation per window and compare empirical variances across methods."""
    frames = list(_ordered(stream))
    filter = _MemoFilter(filter) if filter is not None else None
    exhaustive = run_window_aggregate(frames, query, None, evaluation="exhaustive", relation_mode=relation_mode)
    by_method: dict[str, list[list[float]]] = {m: [] for m in methods}
    reported: dict[str, list[list[float]]] = {m: [] for m in methods}
    rep_rng = keyed_rng(seed, 0xE57)
    rep_seeds = rep_rng.integers(0, 2**62, size=repetitions)
    for rs in rep_seeds:
        for m in methods:
            res = run_window_aggregate(frames, query, filter, relax, "sampled", n_samples, m, grid_relax,
                                       wide_fraction, mu_source, split=split, seed=int(rs),
                                       relation_mode=relation_mode, max_controls=max_controls)
            by_method[m].append([r.agg_value for r in res])
            reported[m].append([r.estimate.sample_variance_of_mean for r in res])
    out = []
    for w, ex in enumerate(exhaustive):
        plain_var = None
        if "plain" in methods:
            plain_var = float(np.var([rep[w] for rep in by_method["plain"]], ddof=1)) if repetitions > 1 else 0.0
        for m in methods:
            vals = np.array([rep[w] for rep in by_method[m]])
            var = float(np.var(vals, ddof=1)) if repetitions > 1 else 0.0
            if plain_var is None:
                ratio = float("nan")
            elif var > 0:
                ratio = plain_var / var
            else:
                ratio = float("inf") if plain_var > 0 else 1.0
            out.append(EstimatorComparison(w, ex.agg_value, m, repetitions, float(vals.mean()), var,
                                           float(np.mean([rep[w] for rep in reported[m]])), ratio))
    return out


# --- estimator-style wrappers -------------------------------------------------

class CascadeSelector(BaseEstimator):
    """Frame selector: ``predict(frames)`` marks the frames a FRAMES query returns.

    ``fit`` is a no-op; ``report_`` holds the RunReport of the last prediction.
    """

    def __init__(self, query=None, filter=None, relax=0, grid_relax=None,
                 detector_cost=DEFAULT_DETECTOR_COST, use_counts=True, use_grids=True, relation_mode="centroid"):
        self.query = query
        self.filter = filter
        self.relax = relax
        self.grid_relax = grid_relax
        self.detector_cost = detector_cost
        self.use_counts = use_counts
        self.use_grids = use_grids
        self.relation_mode = relation_mode

    def fit(self, X=None, y=None):
        if self.query is None:
            raise ConfigurationError("CascadeSelector needs a query")
        return self

    def predict(self, X: Sequence[FrameAnnotation]) -> np.ndarray:
        frames = list(X)
        self.report_ = run_selection(frames, self.query, self.filter, self.relax, self.grid_relax,
                                     self.detector_cost, self.use_counts, self.use_grids, self.relation_mode,
                                     score=False)
        hits = set(self.report_.matched_frame_ids)
        return np.array([f.frame_id in hits for f in frames], dtype=bool)

    def score(self, X, y=None) -> float:
        """f1 of the selection against the true answer set."""
        rep = run_selection(list(X), self.query, self.filter, self.relax, self.grid_relax, self.detector_cost,
                            self.use_counts, self.use_grids, self.relation_mode, score=True)
        return rep.scores.f1


class WindowAggregator(BaseEstimator):
    """``transform(frames)`` -> list of WindowResult for a COUNT / AVG query."""

    def __init__(self, query=None, filter=None, relax=0, evaluation="exhaustive", n_samples=None,
                 estimator="plain", grid_relax=None, wide_fraction=1.0, mu_source="two_stage",
                 split=False, seed=0, include_partial=False, detector_cost=DEFAULT_DETECTOR_COST):
        self.query = query
        self.filter = filter
        self.relax = relax
        self.evaluation = evaluation
        self.n_samples = n_samples
        self.estimator = estimator
        self.grid_relax = grid_relax
        self.wide_fraction = wide_fraction
        self.mu_source = mu_source
        self.split = split
        self.seed = seed
        self.include_partial = include_partial
        self.detector_cost = detector_cost

    def fit(self, X=None, y=None):
        if self.query is None:
            raise ConfigurationError("WindowAggregator needs a query")
        return self

    def transform(self, X: Iterable[FrameAnnotation]) -> list[WindowResult]:
        return run_window_aggregate(X, self.query, self.filter, self.relax, self.evaluation, self.n_samples,
                                    self.estimator, self.grid_relax, self.wide_fraction, self.mu_source,
                                    split=self.split, seed=self.seed, include_partial=self.include_partial,
                                    detector_cost=self.detector_cost)

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)

"""Filter oracles and the cascade decision rule.

A filter maps a frame to a :class:`FilterOutput` (per-class counts plus a
per-class occupancy grid). :class:`ExactFilter` reports the truth;
:class:`NoisyFilter` perturbs it with a seeded :class:`ErrorModel` to mimic a
learned count / class-location filter. Both follow the scikit-learn
transformer protocol (``fit`` is a no-op, ``transform`` maps a sequence of
frames to outputs).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._rng import SEED_MIXING, keyed_rng
from .core import ClassTable, CountVector, FrameAnnotation, _n_classes, count_objects
from .exceptions import ParameterError
from .gridding import (
    DEFAULT_GRID_SIZE,
    DEFAULT_THRESHOLD,
    ActivationMap,
    OccupancyGrid,
    box_mask,
    dilate,
    manhattan_offsets,
    rasterize,
    region_cell_mask,
    threshold_activation,
)
from .predicates import Comparator, CountPredicate, count_range_satisfies, relation_between_grids

DEFAULT_FILTER_COST = 1.9
DEFAULT_DETECTOR_COST = 200.0


@dataclass(frozen=True)
class FilterOutput:
    counts: CountVector
    grids: OccupancyGrid
    cost_units: float = 0.0

    def __post_init__(self):
        if self.cost_units < 0:
            raise ParameterError(f"cost must be non-negative, got {self.cost_units}")


def _check_dist(dist: Mapping[int, float], what: str) -> dict[int, float]:
    dist = {int(k): float(v) for k, v in dist.items()}
    if not dist:
        raise ParameterError(f"{what}: empty distribution")
    if any(not 0.0 <= p <= 1.0 for p in dist.values()):
        raise ParameterError(f"{what}: probabilities must lie in [0, 1], got {dist}")
    if abs(sum(dist.values()) - 1.0) > 1e-9:
        raise ParameterError(f"{what}: probabilities must sum to 1, got {sum(dist.values())}")
    return dict(sorted(dist.items()))


@dataclass(frozen=True)
class ErrorModel:
    """Parametric filter error.

    count_offsets
        Distribution over integer offsets added to each class count (clamped
        at zero). ``class_count_offsets`` overrides it per class id.
    cell_fn_rate / cell_fp_rate
        Probability that an occupied cell is dropped / an unoccupied cell is
        spuriously set.
    displacement
        Distribution over Manhattan shift distances {0, 1, 2} applied to each
        surviving cell; the direction is uniform over the cells at that
        distance, clipped at the grid border.
    """

    count_offsets: Mapping[int, float] = field(default_factory=lambda: {0: 1.0})
    class_count_offsets: Mapping[int, Mapping[int, float]] = field(default_factory=dict)
    cell_fn_rate: float = 0.0
    cell_fp_rate: float = 0.0
    displacement: Mapping[int, float] = field(default_factory=lambda: {0: 1.0})
    seed_mixing: str = SEED_MIXING

    def __post_init__(self):
        object.__setattr__(self, "count_offsets", _check_dist(self.count_offsets, "count_offsets"))
        object.__setattr__(self, "class_count_offsets", {
            int(c): _check_dist(d, f"class_count_offsets[{c}]") for c, d in self.class_count_offsets.items()
        })
        for name in ("cell_fn_rate", "cell_fp_rate"):
            p = float(getattr(self, name))
            if not 0.0 <= p <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1], got {p}")
            object.__setattr__(self, name, p)
        disp = _check_dist(self.displacement, "displacement")
        if not set(disp) <= {0, 1, 2}:
            raise ParameterError(f"displacement distances must be 0, 1 or 2, got {sorted(disp)}")
        object.__setattr__(self, "displacement", disp)
        if self.seed_mixing != SEED_MIXING:
            raise ParameterError(f"unsupported seed_mixing {self.seed_mixing!r}; only {SEED_MIXING!r}")

    def offsets_for(self, class_id: int) -> dict[int, float]:
        return self.class_count_offsets.get(class_id, self.count_offsets)

    @property
    def is_zero(self) -> bool:
        no_offset = all(d == {0: 1.0} for d in [self.count_offsets, *self.class_count_offsets.values()])
        return no_offset and self.cell_fn_rate == 0 and self.cell_fp_rate == 0 and self.displacement == {0: 1.0}

    def to_dict(self, classes: Optional[ClassTable] = None) -> dict:
        label = (lambda c: classes.labels[c]) if classes is not None else (lambda c: c)
        return {
            "count_offsets": dict(self.count_offsets),
            "class_count_offsets": {label(c): dict(d) for c, d in self.class_count_offsets.items()},
            "cell_fn_rate": self.cell_fn_rate,
            "cell_fp_rate": self.cell_fp_rate,
            "displacement": dict(self.displacement),
            "seed_mixing": self.seed_mixing,
        }

    @classmethod
    def from_dict(cls, d: Mapping, classes: Optional[ClassTable] = None) -> "ErrorModel":
        d = dict(d)
        per_class = {}
        for key, dist in (d.pop("class_count_offsets", None) or {}).items():
            cid = classes.id_of(key) if (classes is not None and isinstance(key, str)) else int(key)
            per_class[cid] = dist
        known = {"count_offsets", "cell_fn_rate", "cell_fp_rate", "displacement", "seed_mixing"}
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown error-model keys {sorted(unknown)}")
        return cls(class_count_offsets=per_class, **d)


def _sample_discrete(dist: Mapping[int, float], u: np.ndarray) -> np.ndarray:
    values = np.fromiter(dist.keys(), dtype=np.int64)
    cdf = np.cumsum(np.fromiter(dist.values(), dtype=float))
    idx = np.searchsorted(cdf, u, side="right")
    return values[np.minimum(idx, len(values) - 1)]


_RINGS = {d: np.array(manhattan_offsets(d, exact=True), dtype=np.int64) for d in (1, 2)}


class ExactFilter(BaseEstimator, TransformerMixin):
    """Idealized filter: true counts and the rasterized truth grid."""

    def __init__(self, classes=1, g=DEFAULT_GRID_SIZE, raster_mode="all_cells", cost=DEFAULT_DETECTOR_COST):
        self.classes = classes
        self.g = g
        self.raster_mode = raster_mode
        self.cost = cost

    def fit(self, X=None, y=None):
        return self

    def apply(self, frame: FrameAnnotation) -> FilterOutput:
        return FilterOutput(
            count_objects(frame, self.classes),
            rasterize(frame, self.classes, self.g, self.raster_mode),
            float(self.cost),
        )

    def transform(self, X: Sequence[FrameAnnotation]) -> list[FilterOutput]:
        return [self.apply(f) for f in X]


def exact_filter(frame: FrameAnnotation, classes, g: int = DEFAULT_GRID_SIZE,
                 cost: float = DEFAULT_DETECTOR_COST) -> FilterOutput:
    return ExactFilter(classes, g, cost=cost).apply(frame)


class NoisyFilter(BaseEstimator, TransformerMixin):
    """Seeded perturbation of the exact filter output.

    Output is a pure function of (frame, error_model, seed): the generator for
    a frame is keyed by ``(seed, frame_id)``.
    """

    def __init__(self, classes=1, g=DEFAULT_GRID_SIZE, error_model=None, seed=0,
                 threshold=DEFAULT_THRESHOLD, raster_mode="all_cells", cost=DEFAULT_FILTER_COST):
        self.classes = classes
        self.g = g
        self.error_model = error_model
        self.seed = seed
        self.threshold = threshold
        self.raster_mode = raster_mode
        self.cost = cost

    def fit(self, X=None, y=None):
        return self

    def apply(self, frame: FrameAnnotation) -> FilterOutput:
        em = self.error_model if self.error_model is not None else ErrorModel()
        if not 0.0 < self.threshold <= 1.0:
            raise ParameterError(f"threshold must lie in (0, 1] for the noisy filter, got {self.threshold}")
        n = _n_classes(self.classes)
        rng = keyed_rng(self.seed, frame.frame_id)

        true_counts = count_objects(frame, n)
        u = rng.random(n)
        reported = [
            max(0, true_counts[c] + int(_sample_discrete(em.offsets_for(c), u[c : c + 1])[0]))
            for c in range(n)
        ]

        truth = rasterize(frame, n, self.g, self.raster_mode).cells
        kept = truth & (rng.random(truth.shape) >= em.cell_fn_rate)
        cls_idx, rows, cols = np.nonzero(kept)
        dist = _sample_discrete(em.displacement, rng.random(rows.size))
        u_dir = rng.random(rows.size)
        for d, ring in _RINGS.items():
            sel = dist == d
            if sel.any():
                pick = ring[np.minimum((u_dir[sel] * len(ring)).astype(np.int64), len(ring) - 1)]
                rows[sel] = np.clip(rows[sel] + pick[:, 0], 0, self.g - 1)
                cols[sel] = np.clip(cols[sel] + pick[:, 1], 0, self.g - 1)
        mask = np.zeros_like(truth)
        mask[cls_idx, rows, cols] = True
        mask |= ~truth & (rng.random(truth.shape) < em.cell_fp_rate)

        # Route through the activation-map threshold, as a learned filter would.
        grids = threshold_activation(ActivationMap(mask.astype(float)), self.threshold)
        return FilterOutput(CountVector(tuple(reported)), grids, float(self.cost))

    def transform(self, X: Sequence[FrameAnnotation]) -> list[FilterOutput]:
        return [self.apply(f) for f in X]


def noisy_filter(frame: FrameAnnotation, classes, g: int, em: ErrorModel, stream_seed: int,
                 cost: float = DEFAULT_FILTER_COST) -> FilterOutput:
    return NoisyFilter(classes, g, em, stream_seed, cost=cost).apply(frame)


# --- cascade ---------------------------------------------------------------

class Verdict(str, Enum):
    DROP = "DROP"
    FULL_EVALUATE = "FULL_EVALUATE"


@dataclass(frozen=True)
class CascadeDecision:
    verdict: Verdict
    filters_applied: tuple[str, ...]
    filter_cost: float

    @property
    def passed(self) -> bool:
        return self.verdict is Verdict.FULL_EVALUATE


def implied_count_preds(query) -> list[CountPredicate]:
    """One ``COUNT(c) >= k`` per class, k = number of query variables of class c."""
    need: dict[int, int] = {}
    for v in query.object_vars:
        need[v.class_id] = need.get(v.class_id, 0) + 1
    return [CountPredicate(c, Comparator.GE, k) for c, k in sorted(need.items())]


def counts_pass(query, counts: CountVector, relax: int) -> bool:
    preds = list(query.count_preds) + implied_count_preds(query)
    return all(count_range_satisfies(p, counts.get(p.class_id), relax) for p in preds)


def _cells_inside(rect, g: int) -> np.ndarray:
    """Cells lying entirely inside the closed rectangle."""
    edges = np.arange(g + 1, dtype=float) / g
    cols = (edges[:-1] >= rect.x_min) & (edges[1:] <= rect.x_max)
    rows = (edges[:-1] >= rect.y_min) & (edges[1:] <= rect.y_max)
    return np.outer(rows, cols)


def grids_pass(query, grids: OccupancyGrid, grid_mode: str = "exists") -> bool:
    """Spatial part of the query checked on (already dilated) occupancy grids.

    Grids carry no object identity or attributes, so every check is an
    existential necessary condition rather than an exact evaluation.
    """
    g = grids.g
    for v in query.object_vars:
        if not grids.any(v.class_id):
            return False
    for rp in query.region_preds:
        cells = grids.for_class(query.var(rp.var).class_id)
        if rp.negated:
            inside = _cells_inside(rp.region.rect, g)
            if not (cells & ~inside).any():
                return False
        elif not (cells & region_cell_mask(rp.region.rect, g, closed=True)).any():
            return False
    for sp in query.spatial_preds:
        a = grids.for_class(query.var(sp.var_a).class_id)
        if sp.target_is_region:
            target = box_mask(sp.region.rect, g)
        else:
            target = grids.for_class(query.var(sp.target).class_id)
        if not relation_between_grids(target, a, sp.relation, grid_mode):
            return False
    return True


def cascade_decide(query, fo: FilterOutput, relax: int = 0, grid_relax: Optional[int] = None,
                   use_counts: bool = True, use_grids: bool = True, grid_mode: str = "exists") -> CascadeDecision:
    """Decide whether a frame goes on to full evaluation.

    Count predicates pass if any count within ``relax`` of the reported count
    satisfies them; spatial predicates are checked on grids dilated by
    ``grid_relax`` (default ``relax``). All applicable checks must pass.
    """
    if relax not in (0, 1, 2):
        raise ParameterError(f"relax must be 0, 1 or 2, got {relax!r}")
    grid_relax = relax if grid_relax is None else grid_relax
    applied = []
    ok = True
    if use_counts and (query.count_preds or query.object_vars):
        applied.append("CCF" + (f"-{relax}" if relax else ""))
        ok = counts_pass(query, fo.counts, relax)
    if ok and use_grids and query.object_vars:
        applied.append("CLF" + (f"-{grid_relax}" if grid_relax else ""))
        ok = grids_pass(query, dilate(fo.grids, grid_relax), grid_mode)
    return CascadeDecision(Verdict.FULL_EVALUATE if ok else Verdict.DROP, tuple(applied), float(fo.cost_units))

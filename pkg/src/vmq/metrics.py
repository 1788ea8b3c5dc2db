"""Scores for filter outputs and query answer sets."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import CountVector
from .exceptions import GridMismatchError, ParameterError
from .gridding import OccupancyGrid


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise ParameterError("confusion counts must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def precision(self) -> float:
        if self.tp + self.fp == 0:
            return 1.0 if self.fn == 0 else 0.0
        return self.tp / (self.tp + self.fp)

    @property
    def recall(self) -> float:
        if self.tp + self.fn == 0:
            return 1.0 if self.fp == 0 else 0.0
        return self.tp / (self.tp + self.fn)

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 0.0 if p + r == 0 else 2 * p * r / (p + r)


@dataclass(frozen=True)
class GridScore:
    confusion: ConfusionCounts
    precision: float
    recall: float
    f1: float


def _score(c: ConfusionCounts) -> GridScore:
    return GridScore(c, c.precision, c.recall, c.f1)


def count_accuracy(pred: Sequence[CountVector], truth: Sequence[CountVector], k: int = 0,
                   class_id: Optional[int] = None) -> float:
    """Fraction of frames whose predicted count is within ``k`` of the truth."""
    if len(pred) != len(truth):
        raise ParameterError(f"length mismatch: {len(pred)} predictions, {len(truth)} truths")
    if not pred:
        raise ParameterError("need at least one frame")
    if k < 0:
        raise ParameterError(f"k must be non-negative, got {k}")
    hits = sum(abs(p.get(class_id) - t.get(class_id)) <= k for p, t in zip(pred, truth))
    return hits / len(pred)


def _ordered_offsets(radius: int) -> list[tuple[int, int]]:
    # nearest first; equal distances resolve to the row-major-first truth cell
    return sorted(((di, dj) for di in range(-radius, radius + 1) for dj in range(-radius, radius + 1)
                   if abs(di) + abs(dj) <= radius), key=lambda o: (abs(o[0]) + abs(o[1]), o))


def greedy_cell_matching(pred_cells, truth_cells, radius: int) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """Match predicted to true cells one-to-one within Manhattan ``radius``.

    Predictions are visited in row-major order; each claims the nearest
    unclaimed truth cell, ties going to the first truth cell in row-major order.
    """
    free = set(map(tuple, truth_cells))
    offsets = _ordered_offsets(radius)
    pairs = []
    for cell in sorted(map(tuple, pred_cells)):
        i, j = cell
        for di, dj in offsets:
            t = (i + di, j + dj)
            if t in free:
                free.discard(t)
                pairs.append((cell, t))
                break
    return pairs


def _augment(matching: dict, pred_cells, truth_set: set, offsets) -> dict:
    """Grow a one-to-one matching to maximum cardinality along augmenting paths.

    Each unmatched prediction is tried once (Kuhn's algorithm); candidates are
    explored nearest first, so pairs chosen by the greedy pass stay put unless
    moving them frees a cell for an otherwise unmatched prediction.
    """
    owner = {t: p for p, t in matching.items()}

    def nbrs(u):
        return [t for t in ((u[0] + di, u[1] + dj) for di, dj in offsets) if t in truth_set]

    for root in pred_cells:
        if root in matching:
            continue
        visited: set = set()
        stack = [(root, iter(nbrs(root)))]
        via: dict = {}
        found = None
        while stack and found is None:
            u, it = stack[-1]
            for t in it:
                if t in visited:
                    continue
                visited.add(t)
                via[t] = u
                if t not in owner:
                    found = t
                else:
                    stack.append((owner[t], iter(nbrs(owner[t]))))
                break
            else:
                stack.pop()
        t = found
        while t is not None:
            u = via[t]
            prev = matching.get(u)
            matching[u] = t
            owner[t] = u
            t = prev
    return matching


def match_cells(pred_cells, truth_cells, radius: int,
                method: str = "augmented") -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """One-to-one cell matching within Manhattan ``radius``.

    ``greedy`` is :func:`greedy_cell_matching`. ``augmented`` (default) starts
    from it and repairs it to a maximum matching, so tp never falls short of
    the best achievable and never decreases as the radius grows.
    """
    pairs = greedy_cell_matching(pred_cells, truth_cells, radius)
    if method == "greedy":
        return pairs
    if method != "augmented":
        raise ParameterError(f"unknown matching method {method!r}")
    preds = sorted(map(tuple, pred_cells))
    matching = _augment(dict(pairs), preds, set(map(tuple, truth_cells)), _ordered_offsets(radius))
    return sorted(matching.items())


def _cells(grid, class_id):
    if isinstance(grid, OccupancyGrid):
        return grid.true_cells(class_id if class_id is not None else 0), grid.g
    mask = np.asarray(grid, dtype=bool)
    rows, cols = np.nonzero(mask)
    return list(zip(rows.tolist(), cols.tolist())), mask.shape[-1]


def grid_confusion(pred, truth, class_id: Optional[int] = None, radius: int = 0,
                   method: str = "augmented") -> ConfusionCounts:
    if radius not in (0, 1, 2):
        raise ParameterError(f"radius must be 0, 1 or 2, got {radius!r}")
    pc, pg = _cells(pred, class_id)
    tc, tg = _cells(truth, class_id)
    if pg != tg:
        raise GridMismatchError(f"grid sizes differ: {pg} vs {tg}")
    tp = len(match_cells(pc, tc, radius, method))
    return ConfusionCounts(tp, len(pc) - tp, len(tc) - tp)


def grid_f1(pred, truth, class_id: Optional[int] = None, radius: int = 0, method: str = "augmented") -> GridScore:
    """Cell-level precision/recall/f1 of one class with Manhattan-relaxed matching.

    Both sides empty scores 1; exactly one side empty scores 0.
    """
    return _score(grid_confusion(pred, truth, class_id, radius, method))


def grid_f1_stream(preds: Iterable[OccupancyGrid], truths: Iterable[OccupancyGrid], class_id: int,
                   radius: int = 0, average: str = "micro", method: str = "augmented") -> GridScore:
    """f1 over many frames: ``micro`` pools tp/fp/fn, ``macro`` averages per-frame scores."""
    per_frame = [grid_confusion(p, t, class_id, radius, method) for p, t in zip(preds, truths, strict=True)]
    if not per_frame:
        raise ParameterError("need at least one frame")
    total = ConfusionCounts()
    for c in per_frame:
        total = total + c
    if average == "micro":
        return _score(total)
    if average == "macro":
        scores = [_score(c) for c in per_frame]
        return GridScore(total, float(np.mean([s.precision for s in scores])),
                         float(np.mean([s.recall for s in scores])), float(np.mean([s.f1 for s in scores])))
    raise ParameterError(f"unknown average {average!r}")


@dataclass(frozen=True)
class SetScores:
    precision: float
    recall: float
    f1: float
    accuracy: Optional[float]
    accuracy_defined: bool

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "accuracy": self.accuracy, "accuracy_defined": self.accuracy_defined}


def answer_set_scores(matched: Iterable[int], truth_matched: Iterable[int]) -> SetScores:
    """Compare a query's matched frames with the true answer set.

    ``accuracy`` is |matched & truth| / |truth| (None with
    ``accuracy_defined=False`` when the truth set is empty).
    """
    m, t = set(matched), set(truth_matched)
    c = ConfusionCounts(len(m & t), len(m - t), len(t - m))
    acc = c.tp / len(t) if t else None
    return SetScores(c.precision, c.recall, c.f1, acc, bool(t))

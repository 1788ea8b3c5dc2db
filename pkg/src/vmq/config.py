"""Engine configuration: one YAML tree, every leaf overridable by dotted name."""
from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .core import BBox, ClassTable, Region
from .exceptions import ConfigurationError, VmqError
from .filters import DEFAULT_DETECTOR_COST, DEFAULT_FILTER_COST, ErrorModel, ExactFilter, NoisyFilter
from .gridding import DEFAULT_GRID_SIZE, DEFAULT_THRESHOLD
from .simulator import StreamConfig

_COLORS = {"red": 0.2, "blue": 0.2, "white": 0.4, "black": 0.2}

DEFAULTS: dict[str, Any] = {
    "classes": None,  # defaults to the simulator's class labels
    "regions": {
        "upper_left": [0.0, 0.0, 0.5, 0.5],
        "upper_right": [0.5, 0.0, 1.0, 0.5],
        "lower_left": [0.0, 0.5, 0.5, 1.0],
        "lower_right": [0.5, 0.5, 1.0, 1.0],
    },
    "seed": 0,
    "grid": {"g": DEFAULT_GRID_SIZE, "threshold": DEFAULT_THRESHOLD, "raster_mode": "all_cells"},
    "cascade": {"relax": 0, "grid_relax": None, "use_counts": True, "use_grids": True,
                "relation_mode": "centroid"},
    "filter": {
        "kind": "exact",
        "error_model": {
            "count_offsets": {0: 1.0},
            "class_count_offsets": {},
            "cell_fn_rate": 0.0,
            "cell_fp_rate": 0.0,
            "displacement": {0: 1.0},
        },
    },
    "costs": {"filter": DEFAULT_FILTER_COST, "detector": DEFAULT_DETECTOR_COST},
    "simulator": {
        "n_frames": 10000,
        "start_frame": 0,
        "classes": {
            "person": {"arrival_rate": 0.012, "dwell_mean": 25.0, "width": [0.03, 0.06],
                       "height": [0.08, 0.15], "speed": 0.004},
            "car": {"arrival_rate": 0.04, "dwell_mean": 25.0, "width": [0.08, 0.2], "height": [0.06, 0.12],
                    "speed": 0.01, "attributes": {"color": _COLORS}},
            "bus": {"arrival_rate": 0.01, "dwell_mean": 30.0, "width": [0.15, 0.3], "height": [0.1, 0.2],
                    "speed": 0.008, "attributes": {"color": _COLORS}},
        },
    },
    "estimator": {
        "evaluation": "sampled",
        "method": "cv",
        "n": 200,
        "wide_fraction": 1.0,
        "mu_source": "two_stage",
        "two_stage_mode": "superset",
        "split": False,
        "repetitions": 50,
        "include_partial": False,
        "d": None,  # cap on MCV controls; None keeps every well-conditioned one
    },
}


# Leaves that are whole values (distributions, class lists) rather than sections.
_ATOMIC = {"classes", "count_offsets", "class_count_offsets", "displacement", "width", "height", "attributes"}


def deep_merge(base: dict, over: Mapping) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict) and k not in _ATOMIC:
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def set_dotted(tree: dict, dotted: str, raw_value: str) -> None:
    """Set ``a.b.c`` in ``tree``; the value is parsed as YAML (so 3, 0.5, true, [..] work)."""
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        nxt = node.get(k)
        if nxt is None:
            nxt = node[k] = {}
        if not isinstance(nxt, dict):
            raise ConfigurationError(f"cannot set {dotted!r}: {k!r} is not a section")
        node = nxt
    try:
        node[keys[-1]] = yaml.safe_load(raw_value)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"bad value for {dotted!r}: {exc}") from None


@dataclass
class EngineConfig:
    tree: dict

    @classmethod
    def load(cls, path: Optional[str] = None, overrides: Optional[Mapping[str, str]] = None) -> "EngineConfig":
        tree = copy.deepcopy(DEFAULTS)
        if path is not None:
            try:
                text = Path(path).read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
            try:
                user = yaml.safe_load(text) or {}
            except yaml.YAMLError as exc:
                raise ConfigurationError(f"{path}: invalid YAML: {exc}") from None
            if not isinstance(user, dict):
                raise ConfigurationError(f"{path}: top level must be a mapping")
            tree = deep_merge(tree, user)
        for dotted, value in (overrides or {}).items():
            set_dotted(tree, dotted, value)
        cfg = cls(tree)
        cfg.validate()
        return cfg

    def section(self, name: str) -> dict:
        return self.tree.get(name) or {}

    def validate(self) -> None:
        try:
            self.class_table
            self.regions
            self.error_model
            if self.relax not in (0, 1, 2):
                raise ConfigurationError(f"cascade.relax must be 0, 1 or 2, got {self.relax!r}")
            if self.filter_kind not in ("exact", "noisy"):
                raise ConfigurationError(f"filter.kind must be exact or noisy, got {self.filter_kind!r}")
        except ConfigurationError:
            raise
        except (VmqError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"invalid configuration: {exc}") from None

    @property
    def seed(self) -> int:
        return int(self.tree.get("seed", 0))

    @property
    def class_table(self) -> ClassTable:
        labels = self.tree.get("classes")
        if labels is None:
            sim_classes = self.section("simulator").get("classes") or {}
            labels = list(sim_classes) if isinstance(sim_classes, Mapping) else [c["label"] for c in sim_classes]
        return ClassTable(tuple(labels))

    @property
    def regions(self) -> dict[str, Region]:
        return {name: Region(name, BBox.from_seq(rect)) for name, rect in (self.tree.get("regions") or {}).items()}

    @property
    def g(self) -> int:
        return int(self.section("grid").get("g", DEFAULT_GRID_SIZE))

    @property
    def relax(self) -> int:
        return self.section("cascade").get("relax", 0)

    @property
    def grid_relax(self) -> Optional[int]:
        return self.section("cascade").get("grid_relax")

    @property
    def filter_kind(self) -> str:
        return self.section("filter").get("kind", "exact")

    @property
    def error_model(self) -> ErrorModel:
        return ErrorModel.from_dict(self.section("filter").get("error_model") or {}, self.class_table)

    @property
    def detector_cost(self) -> float:
        return float(self.section("costs").get("detector", DEFAULT_DETECTOR_COST))

    def make_filter(self, kind: Optional[str] = None):
        kind = kind or self.filter_kind
        grid = self.section("grid")
        costs = self.section("costs")
        if kind == "exact":
            return ExactFilter(self.class_table, self.g, grid.get("raster_mode", "all_cells"),
                               cost=float(costs.get("detector", DEFAULT_DETECTOR_COST)))
        if kind == "noisy":
            return NoisyFilter(self.class_table, self.g, self.error_model, self.seed,
                               threshold=float(grid.get("threshold", DEFAULT_THRESHOLD)),
                               raster_mode=grid.get("raster_mode", "all_cells"),
                               cost=float(costs.get("filter", DEFAULT_FILTER_COST)))
        raise ConfigurationError(f"unknown filter kind {kind!r}")

    def stream_config(self, seed: Optional[int] = None) -> StreamConfig:
        sim = dict(self.section("simulator"))
        return StreamConfig.from_dict(sim, seed=self.seed if seed is None else seed)

import numpy as np
import pytest
from hypothesis import strategies as st

from vmq.core import BBox, ClassTable, FrameAnnotation, ObjectInstance

CLASSES = ClassTable(("person", "car", "bus"))


@pytest.fixture(scope="session")
def classes():
    return CLASSES


def obj(cls, box, track=None, **attrs):
    cid = CLASSES.id_of(cls) if isinstance(cls, str) else cls
    return ObjectInstance(cid, BBox(*box), track, attrs=attrs)


def frame(*objs, frame_id=0):
    return FrameAnnotation(frame_id, tuple(objs))


def random_box(rng, max_side=0.5):
    w, h = rng.uniform(0.01, max_side, size=2)
    x0 = rng.uniform(0.0, 1.0 - w)
    y0 = rng.uniform(0.0, 1.0 - h)
    return BBox(x0, y0, x0 + w, y0 + h)


def random_frame(rng, max_objects=6, n_classes=3, frame_id=0, colors=("red", "blue")):
    k = int(rng.integers(0, max_objects + 1))
    objs = tuple(
        ObjectInstance(int(rng.integers(0, n_classes)), random_box(rng), i,
                       attrs={"color": colors[int(rng.integers(0, len(colors)))]})
        for i in range(k)
    )
    return FrameAnnotation(frame_id, objs)


# Coordinates on a 1/64 lattice keep boundary cases frequent and exact.
coord = st.integers(0, 64).map(lambda v: v / 64)


@st.composite
def boxes(draw):
    x0, x1 = sorted(draw(st.lists(coord, min_size=2, max_size=2, unique=True)))
    y0, y1 = sorted(draw(st.lists(coord, min_size=2, max_size=2, unique=True)))
    return BBox(x0, y0, x1, y1)


@st.composite
def frames(draw, max_objects=6, n_classes=3):
    objs = draw(st.lists(st.tuples(st.integers(0, n_classes - 1), boxes()), max_size=max_objects))
    return FrameAnnotation(0, tuple(ObjectInstance(c, b) for c, b in objs))


@st.composite
def masks(draw, g=8):
    bits = draw(st.lists(st.booleans(), min_size=g * g, max_size=g * g))
    return np.array(bits, dtype=bool).reshape(g, g)


def random_query(rng, classes=CLASSES, max_vars=2, select=None, window=None, avg_class=None):
    """Random FRAMES query with 1..max_vars variables (QueryAst built directly)."""
    from vmq.core import quadrant_regions
    from vmq.predicates import Comparator, CountPredicate, SpatialRelation
    from vmq.querylang import ObjectVar, QueryAst, RegionPredicate, SelectKind, SpatialPredicate

    quads = list(quadrant_regions().values())
    rels = list(SpatialRelation)
    n_vars = int(rng.integers(1, max_vars + 1))
    vars_ = []
    for k in range(n_vars):
        attrs = (("color", ("red", "blue")[int(rng.integers(0, 2))]),) if rng.random() < 0.2 else ()
        vars_.append(ObjectVar(f"v{k}", int(rng.integers(0, classes.n)), attrs))
    counts = []
    if rng.random() < 0.5:
        cls = None if rng.random() < 0.3 else int(rng.integers(0, classes.n))
        counts.append(CountPredicate(cls, list(Comparator)[int(rng.integers(0, 3))], int(rng.integers(0, 4))))
    regions = []
    for v in vars_:
        if rng.random() < 0.4:
            overlap = rng.random() < 0.3
            regions.append(RegionPredicate(v.name, quads[int(rng.integers(0, 4))],
                                           "overlap" if overlap else "center",
                                           float(rng.choice([0.25, 0.5, 1.0])) if overlap else None,
                                           bool(rng.random() < 0.2)))
    spatial = []
    if n_vars == 2 and rng.random() < 0.7:
        spatial.append(SpatialPredicate("v0", "v1", rels[int(rng.integers(0, 4))]))
    if rng.random() < 0.2:
        q = quads[int(rng.integers(0, 4))]
        spatial.append(SpatialPredicate("v0", q.name, rels[int(rng.integers(0, 4))], q))
    return QueryAst(select or SelectKind.FRAMES, classes, tuple(counts), tuple(vars_), tuple(regions),
                    tuple(spatial), window, avg_class).validate()


def _center(b):
    return (b.x_min + b.x_max) / 2, (b.y_min + b.y_max) / 2


def _lies(rel, a, b):
    """Independent check that box b lies ``rel`` of box a (centroids, y down)."""
    (ax, ay), (bx, by) = _center(a), _center(b)
    return {"RIGHT": bx > ax, "LEFT": bx < ax, "BELOW": by > ay, "ABOVE": by < ay}[rel.value]


def _in_region(o, rp):
    r, b = rp.region.rect, o.bbox
    if rp.mode == "center":
        cx, cy = _center(b)
        inside = r.x_min <= cx <= r.x_max and r.y_min <= cy <= r.y_max
    else:
        w = max(0.0, min(b.x_max, r.x_max) - max(b.x_min, r.x_min))
        h = max(0.0, min(b.y_max, r.y_max) - max(b.y_min, r.y_min))
        inside = w * h / ((b.x_max - b.x_min) * (b.y_max - b.y_min)) >= rp.min_overlap
    return inside != rp.negated


def enumeration_oracle(query, f):
    """Exhaustive search over injective variable bindings."""
    from itertools import permutations

    n = len(query.classes.labels)
    counts = [sum(o.class_id == c for o in f.objects) for c in range(n)]
    for p in query.count_preds:
        v = sum(counts) if p.class_id is None else counts[p.class_id]
        if not {"=": v == p.value, ">=": v >= p.value, "<=": v <= p.value}[p.comparator.value]:
            return False
    names = [v.name for v in query.object_vars]
    if not names:
        return True
    for combo in permutations(range(len(f.objects)), len(names)):
        bind = {nm: f.objects[k] for nm, k in zip(names, combo)}
        ok = all(bind[v.name].class_id == v.class_id and all(bind[v.name].attrs.get(a) == x for a, x in v.attrs)
                 for v in query.object_vars)
        ok = ok and all(_in_region(bind[rp.var], rp) for rp in query.region_preds)
        for sp in query.spatial_preds:
            target = sp.region.rect if sp.target_is_region else bind[sp.target].bbox
            ok = ok and _lies(sp.relation, bind[sp.var_a].bbox, target)
        if ok:
            return True
    return False

"""Compact declarative query language for monitoring queries.

Grammar::

    query     := SELECT select WHERE pred (AND pred)* [window]
    select    := FRAMES | COUNT ['(' '*' ')'] | AVG '(' class ')'
    pred      := COUNT '(' (class | '*') ')' cmp INT
               | varref [NOT] IN region [OVERLAP NUMBER]
               | ORDER '(' varref ',' (varref | region) ')' '=' relation
               | varref
    varref    := NAME [':' class ['[' NAME '=' NAME (',' NAME '=' NAME)* ']']]
    cmp       := '=' | '>=' | '<='
    relation  := LEFT | RIGHT | ABOVE | BELOW
    window    := WINDOW [HOPPING | HOPING] ['('] [SIZE] INT [','] ADVANCE [BY] INT [')']

Keywords are case-insensitive; ``--`` starts a comment. Variables are
declared inline as ``name:class`` at any occurrence. ``ORDER(a, b) = RIGHT``
holds when b lies to the right of a. A bare ``varref`` asserts that such an
object exists.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional

from .core import ClassTable, Region, quadrant_regions
from .exceptions import (
    ClassTableError,
    ParameterError,
    QueryLexicalError,
    QueryShapeError,
    QuerySyntaxError,
    UndeclaredVariableError,
    UnknownNameError,
)
from .predicates import Comparator, CountPredicate, SpatialRelation


class SelectKind(str, Enum):
    FRAMES = "FRAMES"
    COUNT_FRAMES = "COUNT_FRAMES"
    AVG_CLASS_COUNT = "AVG_CLASS_COUNT"


@dataclass(frozen=True)
class WindowSpec:
    size: int
    advance: int

    def __post_init__(self):
        if not (isinstance(self.size, int) and isinstance(self.advance, int)):
            raise ParameterError("window size and advance must be integers")
        if not self.size >= self.advance >= 1:
            raise ParameterError(f"window needs size >= advance >= 1, got size={self.size}, advance={self.advance}")


@dataclass(frozen=True)
class ObjectVar:
    name: str
    class_id: int
    attrs: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class RegionPredicate:
    var: str
    region: Region
    mode: str = "center"
    min_overlap: Optional[float] = None
    negated: bool = False


@dataclass(frozen=True)
class SpatialPredicate:
    """``ORDER(var_a, target) = relation``: target lies ``relation`` of var_a.

    ``region`` is set when the target is a screen region rather than a variable.
    """

    var_a: str
    target: str
    relation: SpatialRelation
    region: Optional[Region] = None

    @property
    def target_is_region(self) -> bool:
        return self.region is not None


@dataclass(frozen=True)
class QueryAst:
    select_kind: SelectKind
    classes: ClassTable
    count_preds: tuple[CountPredicate, ...] = ()
    object_vars: tuple[ObjectVar, ...] = ()
    region_preds: tuple[RegionPredicate, ...] = ()
    spatial_preds: tuple[SpatialPredicate, ...] = ()
    window: Optional[WindowSpec] = None
    avg_class: Optional[int] = None

    def __post_init__(self):
        for name in ("count_preds", "object_vars", "region_preds", "spatial_preds"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def var(self, name: str) -> ObjectVar:
        for v in self.object_vars:
            if v.name == name:
                return v
        raise KeyError(name)

    @property
    def has_spatial(self) -> bool:
        return bool(self.region_preds or self.spatial_preds)

    @property
    def is_count_only(self) -> bool:
        return not self.object_vars

    def validate(self) -> "QueryAst":
        """Check shape invariants; raises QueryShapeError / UndeclaredVariableError."""
        if self.select_kind is SelectKind.FRAMES and self.window is not None:
            raise QueryShapeError("SELECT FRAMES does not take a WINDOW clause")
        if self.select_kind is not SelectKind.FRAMES and self.window is None:
            raise QueryShapeError(f"{self.select_kind.value} query requires a WINDOW clause")
        if (self.select_kind is SelectKind.AVG_CLASS_COUNT) != (self.avg_class is not None):
            raise QueryShapeError("AVG requires exactly one class")
        names = {v.name for v in self.object_vars}
        used = [rp.var for rp in self.region_preds] + [sp.var_a for sp in self.spatial_preds]
        used += [sp.target for sp in self.spatial_preds if not sp.target_is_region]
        for name in used:
            if name not in names:
                raise UndeclaredVariableError(f"variable {name!r} is not declared")
        return self


# --- lexer -----------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>--[^\n]*)
  | (?P<number>\d+(?:\.\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z0-9_\-]*)
  | (?P<op>>=|<=|[=(),:\[\]*])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int

    @property
    def upper(self) -> str:
        return self.text.upper()


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise QueryLexicalError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        newlines = m.group().count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + m.group().rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# --- parser ----------------------------------------------------------------

@dataclass
class _VarRef:
    name: Token
    cls: Optional[Token] = None
    attrs: list = field(default_factory=list)


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "eof":
            self.i += 1
        return t

    def error(self, expected: str, tok: Optional[Token] = None):
        tok = tok or self.tok
        got = "end of query" if tok.kind == "eof" else repr(tok.text)
        return QuerySyntaxError(f"expected {expected}, got {got}", tok.line, tok.column)

    def at_kw(self, *kws) -> bool:
        return self.tok.kind == "name" and self.tok.upper in kws

    def accept_kw(self, *kws) -> Optional[Token]:
        return self.advance() if self.at_kw(*kws) else None

    def expect_kw(self, kw) -> Token:
        if not self.at_kw(kw):
            raise self.error(kw)
        return self.advance()

    def accept_op(self, op) -> Optional[Token]:
        if self.tok.kind == "op" and self.tok.text == op:
            return self.advance()
        return None

    def expect_op(self, op) -> Token:
        t = self.accept_op(op)
        if t is None:
            raise self.error(repr(op))
        return t

    def expect_name(self, what="name") -> Token:
        if self.tok.kind != "name":
            raise self.error(what)
        return self.advance()

    def expect_int(self, what="integer") -> Token:
        if self.tok.kind != "number" or "." in self.tok.text:
            raise self.error(what)
        return self.advance()

    # grammar

    def parse(self) -> dict:
        self.expect_kw("SELECT")
        out = {"count": [], "region": [], "order": [], "decl": []}
        if self.accept_kw("FRAMES"):
            out["select"] = (SelectKind.FRAMES, None)
        elif self.accept_kw("COUNT"):
            if self.accept_op("("):
                self.expect_op("*")
                self.expect_op(")")
            out["select"] = (SelectKind.COUNT_FRAMES, None)
        elif self.accept_kw("AVG"):
            self.expect_op("(")
            cls = self.expect_name("class name")
            self.expect_op(")")
            out["select"] = (SelectKind.AVG_CLASS_COUNT, cls)
        else:
            raise self.error("FRAMES, COUNT or AVG")
        out["select_tok"] = self.toks[0]
        self.expect_kw("WHERE")
        self.pred(out)
        while self.accept_kw("AND"):
            self.pred(out)
        out["window"] = None
        if self.at_kw("WINDOW"):
            out["window"] = self.window()
        if self.tok.kind != "eof":
            raise self.error("AND, WINDOW or end of query")
        return out

    def window(self):
        wtok = self.advance()
        self.accept_kw("HOPPING", "HOPING")
        paren = self.accept_op("(")
        self.accept_kw("SIZE")
        size = self.expect_int("window size")
        self.accept_op(",")
        self.expect_kw("ADVANCE")
        self.accept_kw("BY")
        adv = self.expect_int("window advance")
        if paren:
            self.expect_op(")")
        return wtok, int(size.text), int(adv.text)

    def varref(self) -> _VarRef:
        name = self.expect_name("variable name")
        ref = _VarRef(name)
        if self.accept_op(":"):
            ref.cls = self.expect_name("class name")
            if self.accept_op("["):
                while True:
                    k = self.expect_name("attribute name")
                    self.expect_op("=")
                    v = self.tok
                    if v.kind not in ("name", "number"):
                        raise self.error("attribute value")
                    self.advance()
                    ref.attrs.append((k.text, v.text))
                    if not self.accept_op(","):
                        break
                self.expect_op("]")
        return ref

    def pred(self, out):
        if self.at_kw("COUNT"):
            start = self.advance()
            self.expect_op("(")
            cls = None if self.accept_op("*") else self.expect_name("class name or '*'")
            self.expect_op(")")
            t = self.tok
            if t.kind != "op" or t.text not in ("=", ">=", "<="):
                raise self.error("one of =, >=, <=")
            self.advance()
            value = self.expect_int("count value")
            out["count"].append((start, cls, Comparator(t.text), int(value.text)))
            return
        if self.at_kw("ORDER"):
            start = self.advance()
            self.expect_op("(")
            a = self.varref()
            self.expect_op(",")
            b = self.varref()
            self.expect_op(")")
            self.expect_op("=")
            rel = self.tok
            if rel.kind != "name" or rel.upper not in SpatialRelation.__members__:
                raise self.error("one of LEFT, RIGHT, ABOVE, BELOW")
            self.advance()
            out["order"].append((start, a, b, SpatialRelation(rel.upper)))
            return
        if self.tok.kind != "name":
            raise self.error("predicate")
        ref = self.varref()
        negated = bool(self.accept_kw("NOT"))
        if negated or self.at_kw("IN"):
            self.expect_kw("IN")
            region = self.expect_name("region name")
            overlap = None
            if self.accept_kw("OVERLAP"):
                t = self.tok
                if t.kind != "number":
                    raise self.error("overlap fraction")
                self.advance()
                overlap = (float(t.text), t)
            out["region"].append((ref, region, overlap, negated))
            return
        if ref.cls is None:
            raise self.error("':' class declaration, IN or NOT IN", self.tok)
        out["decl"].append(ref)


def _resolve_class(classes: ClassTable, tok: Token) -> int:
    try:
        return classes.id_of(tok.text)
    except ClassTableError:
        raise UnknownNameError(f"unknown class {tok.text!r}", tok.line, tok.column) from None


def parse_query(text: str, classes: ClassTable, regions: Optional[Mapping[str, Region]] = None) -> QueryAst:
    """Parse query text into a validated QueryAst.

    ``regions`` defaults to the four frame quadrants (upper_left, ...).
    """
    if not text or not text.strip():
        raise QuerySyntaxError("empty query", 1, 1)
    if regions is None:
        regions = quadrant_regions()
    raw = _Parser(text).parse()

    # Declarations may appear at any occurrence of a variable.
    refs = list(raw["decl"]) + [r[0] for r in raw["region"]]
    for _, a, b, _ in raw["order"]:
        refs.append(a)
        refs.append(b)
    declared: dict[str, ObjectVar] = {}
    for ref in refs:
        if ref.cls is None:
            continue
        var = ObjectVar(ref.name.text, _resolve_class(classes, ref.cls), tuple(ref.attrs))
        prev = declared.get(var.name)
        if prev is not None and prev != var:
            raise QuerySyntaxError(f"conflicting declarations of variable {var.name!r}",
                                   ref.name.line, ref.name.column)
        declared[var.name] = var

    def need_var(ref: _VarRef) -> str:
        if ref.name.text not in declared:
            raise UndeclaredVariableError(f"variable {ref.name.text!r} is not declared",
                                          ref.name.line, ref.name.column)
        return ref.name.text

    def need_region(tok: Token) -> Region:
        if tok.text not in regions:
            raise UnknownNameError(f"unknown region {tok.text!r}", tok.line, tok.column)
        return regions[tok.text]

    count_preds = tuple(
        CountPredicate(None if cls is None else _resolve_class(classes, cls), cmp, value)
        for _, cls, cmp, value in raw["count"]
    )
    region_preds = []
    for ref, rtok, overlap, negated in raw["region"]:
        mode, frac = "center", None
        if overlap is not None:
            frac, ftok = overlap
            if not 0.0 < frac <= 1.0:
                raise QuerySyntaxError(f"overlap fraction must lie in (0, 1], got {frac}", ftok.line, ftok.column)
            mode = "overlap"
        region_preds.append(RegionPredicate(need_var(ref), need_region(rtok), mode, frac, negated))
    spatial_preds = []
    for _, a, b, rel in raw["order"]:
        va = need_var(a)
        if b.cls is not None or b.name.text in declared:
            spatial_preds.append(SpatialPredicate(va, need_var(b), rel))
        elif b.name.text in regions:
            spatial_preds.append(SpatialPredicate(va, b.name.text, rel, regions[b.name.text]))
        else:
            raise UndeclaredVariableError(f"{b.name.text!r} is neither a declared variable nor a region",
                                          b.name.line, b.name.column)

    kind, avg_tok = raw["select"]
    avg_class = None if avg_tok is None else _resolve_class(classes, avg_tok)
    window = None
    if raw["window"] is not None:
        wtok, size, adv = raw["window"]
        try:
            window = WindowSpec(size, adv)
        except ParameterError as exc:
            raise QueryShapeError(str(exc), wtok.line, wtok.column) from None
        if kind is SelectKind.FRAMES:
            raise QueryShapeError("SELECT FRAMES does not take a WINDOW clause", wtok.line, wtok.column)
    elif kind is not SelectKind.FRAMES:
        tok = raw["select_tok"]
        raise QueryShapeError(f"{kind.value} query requires a WINDOW clause", tok.line, tok.column)

    return QueryAst(
        select_kind=kind,
        classes=classes,
        count_preds=count_preds,
        object_vars=tuple(sorted(declared.values(), key=lambda v: v.name)),
        region_preds=tuple(region_preds),
        spatial_preds=tuple(spatial_preds),
        window=window,
        avg_class=avg_class,
    ).validate()


def _fmt_number(x: float) -> str:
    return repr(float(x))


def print_query(ast: QueryAst) -> str:
    """Canonical text for ``ast``; ``parse_query`` of the result rebuilds it."""
    labels = ast.classes.labels
    vars_by_name = {v.name: v for v in ast.object_vars}
    seen: set[str] = set()

    def ref(name: str) -> str:
        if name in seen:
            return name
        seen.add(name)
        v = vars_by_name[name]
        s = f"{name}:{labels[v.class_id]}"
        if v.attrs:
            s += "[" + ",".join(f"{k}={val}" for k, val in v.attrs) + "]"
        return s

    if ast.select_kind is SelectKind.FRAMES:
        head = "SELECT FRAMES"
    elif ast.select_kind is SelectKind.COUNT_FRAMES:
        head = "SELECT COUNT"
    else:
        head = f"SELECT AVG({labels[ast.avg_class]})"
    preds = []
    for p in ast.count_preds:
        target = "*" if p.class_id is None else labels[p.class_id]
        preds.append(f"COUNT({target}) {p.comparator.value} {p.value}")
    for rp in ast.region_preds:
        s = f"{ref(rp.var)} {'NOT IN' if rp.negated else 'IN'} {rp.region.name}"
        if rp.mode == "overlap":
            s += f" OVERLAP {_fmt_number(rp.min_overlap)}"
        preds.append(s)
    for sp in ast.spatial_preds:
        a = ref(sp.var_a)
        b = sp.target if sp.target_is_region else ref(sp.target)
        preds.append(f"ORDER({a}, {b}) = {sp.relation.value}")
    for v in ast.object_vars:
        if v.name not in seen:
            preds.append(ref(v.name))
    text = f"{head} WHERE " + " AND ".join(preds)
    if ast.window is not None:
        text += f" WINDOW {ast.window.size} ADVANCE {ast.window.advance}"
    return text


def ast_to_dict(ast: QueryAst) -> dict:
    """JSON-friendly structural view of an AST (used for golden files)."""
    labels = ast.classes.labels
    return {
        "select": ast.select_kind.value,
        "avg_class": None if ast.avg_class is None else labels[ast.avg_class],
        "count_preds": [
            {"class": None if p.class_id is None else labels[p.class_id], "cmp": p.comparator.value, "value": p.value}
            for p in ast.count_preds
        ],
        "object_vars": [
            {"name": v.name, "class": labels[v.class_id], "attrs": [list(kv) for kv in v.attrs]}
            for v in ast.object_vars
        ],
        "region_preds": [
            {"var": rp.var, "region": rp.region.name, "mode": rp.mode, "min_overlap": rp.min_overlap,
             "negated": rp.negated}
            for rp in ast.region_preds
        ],
        "spatial_preds": [
            {"a": sp.var_a, "target": sp.target, "target_is_region": sp.target_is_region,
             "relation": sp.relation.value}
            for sp in ast.spatial_preds
        ],
        "window": None if ast.window is None else {"size": ast.window.size, "advance": ast.window.advance},
    }

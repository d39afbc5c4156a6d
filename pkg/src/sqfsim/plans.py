"""Plan document format, version 1.

A plan document lists each sub-query with its relations (base relations
carry an ``@location`` tag; bare names reference intermediate results of
earlier sub-queries), projected attributes, predicates and result volume,
then one ``expr:`` line combining the sub-query ids in infix notation with
``|`` (alias of the parallel operator) and ``_`` (sequential).

Example::

    plan-version: 1
    query: Q1
    subquery: q11
    relations: employee@DB1, project@DB1
    attributes: employee.empId, project.projId
    predicate: employee.empId = project.empId
    volume-gb: 4
    handle: qr11
    subquery: q13
    relations: qr11
    attributes: qr11.projId
    volume-gb: 1
    expr: ((q11) _ (q13))
"""

from __future__ import annotations

from sqfsim.errors import PlanParseError, PlanStructureError
from sqfsim.qet import (
    SYMBOL_OPERATOR,
    LeafSpec,
    OpSpec,
    QueryEvaluationTree,
    Skeleton,
    build_tree,
)
from sqfsim.semantics import Predicate, SemanticDescriptor, parse_descriptor_field

PLAN_VERSION = 1


class _PendingSubQuery:
    def __init__(self, sub_query_id: str, line: int):
        self.sub_query_id = sub_query_id
        self.line = line
        self.relations = None
        self.attributes = None
        self.predicates = []
        self.volume = None
        self.handle = None

    def finish(self) -> LeafSpec:
        if self.relations is None or not self.relations:
            raise PlanParseError(
                f"sub-query {self.sub_query_id!r} lists no relations", self.line
            )
        if self.volume is None:
            raise PlanParseError(
                f"sub-query {self.sub_query_id!r} has no volume-gb", self.line
            )
        descriptor = SemanticDescriptor(
            relations=self.relations,
            attributes=self.attributes or (),
            predicates=tuple(self.predicates),
            result_handle=self.handle,
            result_volume=self.volume,
        )
        return LeafSpec(self.sub_query_id, descriptor)


def _tokenize_expr(text: str, line: int) -> list[str]:
    tokens = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            tokens.append(ch)
            i += 1
        elif ch in SYMBOL_OPERATOR:
            tokens.append(ch)
            i += 1
        else:
            # Sub-query ids: alphanumerics and dashes (no underscore, which
            # is the sequential operator).
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] == "-"):
                j += 1
            if j == i:
                raise PlanParseError(f"unexpected character {ch!r} in expr", line)
            tokens.append(("id", text[i:j]))
            i = j
    return tokens


def _parse_expr(tokens: list[str], line: int, leaves: dict[str, LeafSpec]) -> Skeleton:
    pos = 0

    def atom() -> Skeleton:
        nonlocal pos
        if pos >= len(tokens):
            raise PlanParseError("unexpected end of expr", line)
        tok = tokens[pos]
        if tok == "(":
            pos += 1
            node = level()
            if pos >= len(tokens) or tokens[pos] != ")":
                raise PlanParseError("missing ')' in expr", line)
            pos += 1
            return node
        if isinstance(tok, tuple):
            pos += 1
            sub_query_id = tok[1]
            spec = leaves.get(sub_query_id)
            if spec is None:
                raise PlanParseError(f"expr uses undefined sub-query {sub_query_id!r}", line)
            return spec
        raise PlanParseError(f"unexpected token {tok!r} in expr", line)

    def level() -> Skeleton:
        nonlocal pos
        first = atom()
        children = [first]
        operator = None
        while pos < len(tokens) and tokens[pos] in SYMBOL_OPERATOR:
            op = SYMBOL_OPERATOR[tokens[pos]]
            if operator is None:
                operator = op
            elif operator != op:
                raise PlanParseError(
                    "mixed operators at one level need parentheses", line
                )
            pos += 1
            children.append(atom())
        if operator is None:
            return first
        return OpSpec(operator, tuple(children))

    node = level()
    if pos != len(tokens):
        raise PlanParseError(f"trailing tokens after expr: {tokens[pos]!r}", line)
    return node


def _used_ids(skeleton: Skeleton, out: set[str]) -> None:
    if isinstance(skeleton, LeafSpec):
        out.add(skeleton.sub_query_id)
    else:
        for child in skeleton.children:
            _used_ids(child, out)


def parse_plan(text: str) -> QueryEvaluationTree:
    """Parse a plan document into an evaluation tree."""
    leaves: dict[str, LeafSpec] = {}
    order: list[str] = []
    pending: _PendingSubQuery | None = None
    query_id = "Q"
    version_seen = False
    skeleton: Skeleton | None = None
    expr_line = 0

    def close_pending():
        nonlocal pending
        if pending is not None:
            spec = pending.finish()
            leaves[spec.sub_query_id] = spec
            order.append(spec.sub_query_id)
            pending = None

    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise PlanParseError(f"expected 'key: value', got {line!r}", lineno)
        key = key.strip().lower()
        value = value.strip()

        if not version_seen:
            if key != "plan-version":
                raise PlanParseError("document must start with 'plan-version: 1'", lineno)
            if value != str(PLAN_VERSION):
                raise PlanParseError(f"unsupported plan version {value!r}", lineno)
            version_seen = True
            continue

        if key == "query":
            query_id = value
        elif key == "subquery":
            if skeleton is not None:
                raise PlanParseError("subquery after expr", lineno)
            if not value:
                raise PlanParseError("subquery needs an id", lineno)
            close_pending()
            if value in leaves:
                raise PlanParseError(f"duplicate sub-query id {value!r}", lineno)
            pending = _PendingSubQuery(value, lineno)
        elif key in ("relations", "attributes"):
            if pending is None:
                raise PlanParseError(f"{key} outside a subquery block", lineno)
            parsed = parse_descriptor_field(key, value, lineno)
            if key == "relations":
                pending.relations = parsed
            else:
                pending.attributes = parsed
        elif key == "predicate":
            if pending is None:
                raise PlanParseError("predicate outside a subquery block", lineno)
            try:
                pending.predicates.append(Predicate.parse(value))
            except ValueError as exc:
                raise PlanParseError(str(exc), lineno) from exc
        elif key == "volume-gb":
            if pending is None:
                raise PlanParseError("volume-gb outside a subquery block", lineno)
            try:
                volume = float(value)
            except ValueError as exc:
                raise PlanParseError(f"bad volume {value!r}", lineno) from exc
            if volume < 0:
                raise PlanParseError("volume-gb must be >= 0", lineno)
            pending.volume = volume
        elif key == "handle":
            if pending is None:
                raise PlanParseError("handle outside a subquery block", lineno)
            pending.handle = value or None
        elif key == "expr":
            close_pending()
            if skeleton is not None:
                raise PlanParseError("duplicate expr line", lineno)
            tokens = _tokenize_expr(value, lineno)
            skeleton = _parse_expr(tokens, lineno, leaves)
            expr_line = lineno
        else:
            raise PlanParseError(f"unknown key {key!r}", lineno)

    if not version_seen:
        raise PlanParseError("empty plan document")
    close_pending()
    if skeleton is None:
        raise PlanParseError("plan document has no expr line")

    used: set[str] = set()
    _used_ids(skeleton, used)
    unused = [i for i in order if i not in used]
    if unused:
        raise PlanParseError(f"sub-queries defined but not used in expr: {unused}", expr_line)

    return build_tree(query_id, skeleton)


def _format_volume(volume: float) -> str:
    if volume == int(volume):
        return str(int(volume))
    return repr(volume)


def serialize_plan(tree: QueryEvaluationTree) -> str:
    """Emit the canonical plan document for a tree; round-trips through
    parse_plan to an isomorphic tree."""
    lines = [f"plan-version: {PLAN_VERSION}", f"query: {tree.query_id}"]
    for leaf in tree.leaves():
        desc = leaf.raw
        if desc is None:
            raise PlanStructureError("tree lacks source descriptors; cannot serialize")
        lines.append(f"subquery: {leaf.sub_query_id}")
        lines.append("relations: " + ", ".join(str(r) for r in desc.relations))
        if desc.attributes:
            lines.append("attributes: " + ", ".join(str(a) for a in desc.attributes))
        for predicate in desc.predicates:
            lines.append(f"predicate: {predicate}")
        lines.append(f"volume-gb: {_format_volume(desc.result_volume)}")
        if desc.result_handle:
            lines.append(f"handle: {desc.result_handle}")
    lines.append("expr: " + tree.root.expr.replace("∥", "|"))
    return "\n".join(lines) + "\n"

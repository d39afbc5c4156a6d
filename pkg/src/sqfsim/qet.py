"""Query evaluation trees.

Sub-queries sit at the leaves; operator nodes combine children either in
parallel (both can run concurrently) or in sequence (left to right). Every
node carries a semantic descriptor of the result produced by its subtree:
relations and predicates accumulate from all leaves below, while output
attributes and result volume come from the final aggregating leaf when one
consumes its siblings' intermediate results, and from the plain union of
the children otherwise.

Trees are immutable value objects; fragmentation produces new trees.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Union

from sqfsim.errors import FragmentationError, PlanStructureError
from sqfsim.semantics import AttrRef, Predicate, RelationRef, SemanticDescriptor

PAR = "PAR"
SEQ = "SEQ"
OPERATOR_SYMBOL = {PAR: "∥", SEQ: "_"}
SYMBOL_OPERATOR = {"∥": PAR, "|": PAR, "_": SEQ}


@dataclass(frozen=True)
class LeafSpec:
    """Builder input: one sub-query leaf as written in a plan."""

    sub_query_id: str
    descriptor: SemanticDescriptor


@dataclass(frozen=True)
class OpSpec:
    """Builder input: an operator node over sub-plans."""

    operator: str
    children: tuple = ()


Skeleton = Union[LeafSpec, OpSpec]


@dataclass(frozen=True)
class QetNode:
    kind: str  # "leaf" | "operator"
    semantics: SemanticDescriptor
    children: tuple["QetNode", ...] = ()
    operator: str | None = None
    sub_query_id: str | None = None
    raw: SemanticDescriptor | None = field(default=None, compare=False)
    address: str | None = field(default=None, compare=False)
    consumed: frozenset[str] = field(default=frozenset(), compare=False)
    produced: frozenset[str] = field(default=frozenset(), compare=False)

    @property
    def is_leaf(self) -> bool:
        return self.kind == "leaf"

    @property
    def expr(self) -> str:
        return "(" + self._core() + ")"

    def _core(self) -> str:
        if self.is_leaf:
            return self.sub_query_id or "?"
        sym = OPERATOR_SYMBOL[self.operator]
        return f" {sym} ".join(child.expr for child in self.children)

    @property
    def node_id(self) -> str:
        return self.expr

    def iter_nodes(self) -> Iterator["QetNode"]:
        """Breadth-first traversal, root first."""
        queue = [self]
        while queue:
            node = queue.pop(0)
            yield node
            queue.extend(node.children)

    def iter_leaves(self) -> Iterator["QetNode"]:
        if self.is_leaf:
            yield self
        else:
            for child in self.children:
                yield from child.iter_leaves()


@dataclass(frozen=True)
class QueryEvaluationTree:
    root: QetNode
    query_id: str

    def leaves(self) -> tuple[QetNode, ...]:
        return tuple(self.root.iter_leaves())

    def leaf_ids(self) -> tuple[str, ...]:
        return tuple(leaf.sub_query_id for leaf in self.root.iter_leaves())

    def find_leaf(self, sub_query_id: str) -> QetNode | None:
        for leaf in self.root.iter_leaves():
            if leaf.sub_query_id == sub_query_id:
                return leaf
        return None

    def nodes(self) -> tuple[QetNode, ...]:
        return tuple(self.root.iter_nodes())

    def total_leaf_volume(self) -> float:
        return sum(leaf.semantics.result_volume for leaf in self.root.iter_leaves())

    def leaf_volume(self, sub_query_id: str) -> float:
        leaf = self.find_leaf(sub_query_id)
        if leaf is None:
            raise KeyError(sub_query_id)
        return leaf.semantics.result_volume


def _resolve(desc: SemanticDescriptor, env: dict[str, SemanticDescriptor]) -> SemanticDescriptor:
    """Substitute intermediate-result references by what produced them."""
    handle_names = {r.name for r in desc.relations if r.is_handle}
    relations: list[RelationRef] = []
    for rel in desc.relations:
        if rel.is_handle:
            source = env.get(rel.name)
            if source is None:
                raise PlanStructureError(
                    f"sub-query references undefined intermediate result {rel.name!r}"
                )
            relations.extend(source.relations)
        else:
            relations.append(rel)

    def sub_attr(ref: AttrRef) -> AttrRef:
        if ref.qualifier not in handle_names:
            return ref
        source = env[ref.qualifier]
        matches = [a for a in source.attributes if a.name == ref.name]
        if not matches:
            raise PlanStructureError(
                f"intermediate result {ref.qualifier!r} does not expose attribute {ref.name!r}"
            )
        if len(matches) > 1:
            raise PlanStructureError(
                f"attribute {ref!s} is ambiguous in intermediate result {ref.qualifier!r}"
            )
        return matches[0]

    attributes = tuple(sub_attr(a) for a in desc.attributes)
    predicates = []
    for p in desc.predicates:
        left = sub_attr(p.left)
        right = sub_attr(p.right) if isinstance(p.right, AttrRef) else p.right
        predicates.append(Predicate(left, p.comparator, right))
    return replace(
        desc,
        relations=tuple(relations),
        attributes=attributes,
        predicates=tuple(predicates),
    ).normalize()


def _validate_leaf(spec: LeafSpec) -> None:
    names = {r.name for r in spec.descriptor.relations}
    for qualifier in sorted(spec.descriptor.referenced_qualifiers()):
        if qualifier not in names:
            raise PlanStructureError(
                f"sub-query {spec.sub_query_id!r} references {qualifier!r}, "
                "which is not among its relations"
            )


def _build_node(
    spec: Skeleton,
    resolved: dict[str, SemanticDescriptor],
    raw: dict[str, SemanticDescriptor],
) -> QetNode:
    if isinstance(spec, LeafSpec):
        desc = resolved[spec.sub_query_id]
        consumed = frozenset(
            r.name for r in raw[spec.sub_query_id].relations if r.is_handle
        )
        produced = frozenset([desc.result_handle]) if desc.result_handle else frozenset()
        return QetNode(
            kind="leaf",
            semantics=desc,
            sub_query_id=spec.sub_query_id,
            raw=raw[spec.sub_query_id],
            consumed=consumed,
            produced=produced,
        )

    if spec.operator not in (PAR, SEQ):
        raise PlanStructureError(f"unknown operator {spec.operator!r}")
    children = tuple(_build_node(c, resolved, raw) for c in spec.children)
    if len(children) < 2:
        raise PlanStructureError("operator node needs at least two children")

    relations: list[RelationRef] = []
    predicates: list[Predicate] = []
    for child in children:
        relations.extend(child.semantics.relations)
        predicates.extend(child.semantics.predicates)

    last = children[-1]
    produced_by_rest = frozenset().union(*(c.produced for c in children[:-1]))
    aggregating = bool(last.consumed & produced_by_rest)
    if aggregating:
        attributes = last.semantics.attributes
        volume = last.semantics.result_volume
        handle = last.semantics.result_handle
    else:
        attributes = tuple(a for c in children for a in c.semantics.attributes)
        volume = sum(c.semantics.result_volume for c in children)
        handle = None

    semantics = SemanticDescriptor(
        relations=tuple(relations),
        attributes=attributes,
        predicates=tuple(predicates),
        result_handle=handle,
        result_volume=volume,
    ).normalize()
    return QetNode(
        kind="operator",
        operator=spec.operator,
        semantics=semantics,
        children=children,
        consumed=frozenset().union(*(c.consumed for c in children)),
        produced=frozenset().union(*(c.produced for c in children)),
    )


def _collect_leaves(spec: Skeleton, out: list[LeafSpec]) -> None:
    if isinstance(spec, LeafSpec):
        out.append(spec)
    else:
        for child in spec.children:
            _collect_leaves(child, out)


def build_tree(query_id: str, skeleton: Skeleton) -> QueryEvaluationTree:
    """Construct a tree, resolving intermediate-result references in
    left-to-right execution order and deriving operator-node descriptors."""
    leaf_specs: list[LeafSpec] = []
    _collect_leaves(skeleton, leaf_specs)
    if not leaf_specs:
        raise PlanStructureError("a query needs at least one sub-query")

    seen: set[str] = set()
    for spec in leaf_specs:
        if spec.sub_query_id in seen:
            raise PlanStructureError(f"duplicate sub-query id {spec.sub_query_id!r}")
        seen.add(spec.sub_query_id)
        _validate_leaf(spec)

    env: dict[str, SemanticDescriptor] = {}
    resolved: dict[str, SemanticDescriptor] = {}
    raw: dict[str, SemanticDescriptor] = {}
    for spec in leaf_specs:
        desc = spec.descriptor.normalize()
        raw[spec.sub_query_id] = desc
        res = _resolve(desc, env)
        resolved[spec.sub_query_id] = res
        if res.result_handle:
            if res.result_handle in env:
                raise PlanStructureError(
                    f"duplicate intermediate-result handle {res.result_handle!r}"
                )
            env[res.result_handle] = res

    root = _build_node(skeleton, resolved, raw)
    return QueryEvaluationTree(root=root, query_id=query_id)


def node_to_skeleton(node: QetNode) -> Skeleton:
    if node.is_leaf:
        return LeafSpec(node.sub_query_id, node.raw)
    return OpSpec(node.operator, tuple(node_to_skeleton(c) for c in node.children))


def complexity(tree: QueryEvaluationTree) -> int:
    """Number of sub-queries in the plan, i.e. leaf nodes of the tree."""
    return len(tree.leaves())


def to_infix(tree: QueryEvaluationTree) -> str:
    return tree.root.expr


def fragment_leaf(
    tree: QueryEvaluationTree, leaf_id: str, replacement: QueryEvaluationTree
) -> QueryEvaluationTree:
    """Replace one leaf by a finer-grained sub-plan with equal semantics.

    The resulting tree keeps the root descriptor and gains
    ``complexity(replacement) - 1`` leaves.
    """
    target = tree.find_leaf(leaf_id)
    if target is None:
        raise FragmentationError(f"no leaf named {leaf_id!r}")
    if complexity(replacement) < 2:
        raise FragmentationError("replacement must split the leaf into several sub-queries")
    if replacement.root.semantics.semantic_key() != target.semantics.semantic_key():
        raise FragmentationError(
            f"replacement semantics differ from leaf {leaf_id!r} semantics"
        )

    def splice(node: QetNode) -> Skeleton:
        if node.is_leaf:
            if node.sub_query_id == leaf_id:
                return node_to_skeleton(replacement.root)
            return LeafSpec(node.sub_query_id, node.raw)
        return OpSpec(node.operator, tuple(splice(c) for c in node.children))

    try:
        return build_tree(tree.query_id, splice(tree.root))
    except PlanStructureError as exc:
        raise FragmentationError(str(exc)) from exc


def with_address(tree: QueryEvaluationTree, address: str) -> QueryEvaluationTree:
    """Stamp the physical cache location onto every node."""

    def visit(node: QetNode) -> QetNode:
        return replace(node, address=address, children=tuple(visit(c) for c in node.children))

    return replace(tree, root=visit(tree.root))


def isomorphic(a: QueryEvaluationTree, b: QueryEvaluationTree) -> bool:
    """Structural equality: shape, operators, leaf ids and node semantics."""

    def same(x: QetNode, y: QetNode) -> bool:
        if x.kind != y.kind or x.operator != y.operator:
            return False
        if x.sub_query_id != y.sub_query_id:
            return False
        if x.semantics.semantic_key() != y.semantics.semantic_key():
            return False
        if len(x.children) != len(y.children):
            return False
        return all(same(cx, cy) for cx, cy in zip(x.children, y.children))

    return same(a.root, b.root)

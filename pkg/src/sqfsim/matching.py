"""Answerability, query equivalence, containment and cache-wide search.

A probe query is decomposed into its leaf sub-queries; each one is either
answered by some node of some cached query (contained part) or must be
fetched from the origin servers (remainder part).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

from sqfsim.errors import ContractError
from sqfsim.qet import QetNode, QueryEvaluationTree
from sqfsim.semantics import PredicateClosure, SemanticDescriptor

if TYPE_CHECKING:  # pragma: no cover
    from sqfsim.network import CacheNetwork

FULLY_FOUND = "fully_found"
PARTIALLY_FOUND = "partially_found"
NOT_FOUND = "not_found"


@dataclass(frozen=True)
class ContainedEntry:
    sub_query_id: str
    cached_query_id: str
    node_id: str


@dataclass(frozen=True)
class SearchOutcome:
    contained: tuple[ContainedEntry, ...]
    remainder: tuple[str, ...]
    status: str

    def contained_ids(self) -> tuple[str, ...]:
        return tuple(entry.sub_query_id for entry in self.contained)


def answerable(s: SemanticDescriptor, t: SemanticDescriptor) -> bool:
    """True when every tuple of s's result is present in t's result and the
    cached result carries enough columns to recover it.

    Requires: s reads no relation t does not read; s projects no attribute t
    does not project; every condition t applied is implied by s's conditions
    (t dropped nothing s needs); and any condition of s that t does not
    already enforce can be re-applied on t's projection.
    """
    if not s.canonical or not t.canonical:
        raise ContractError("answerable() requires normalized descriptors")
    if not set(s.relations) <= set(t.relations):
        return False
    t_attrs = set(t.attributes)
    if not set(s.attributes) <= t_attrs:
        return False

    s_closure = PredicateClosure(s.predicates)
    for predicate in t.predicates:
        if not s_closure.implies(predicate):
            return False

    t_closure = PredicateClosure(t.predicates)
    for predicate in s.predicates:
        if t_closure.implies(predicate):
            continue
        if not set(predicate.attr_refs()) <= t_attrs:
            return False
    return True


def equivalent_query(s: QueryEvaluationTree, t: QueryEvaluationTree) -> bool:
    """Root-level semantic equality: different sub-query decompositions of
    the same result compare equal."""
    return s.root.semantics.semantic_key() == t.root.semantics.semantic_key()


def is_contained(s: QueryEvaluationTree, t: QueryEvaluationTree) -> QetNode | None:
    """First node of t (breadth-first from the root) whose semantics answer
    s's root; the root itself when the trees are equivalent."""
    if equivalent_query(s, t):
        return t.root
    probe = s.root.semantics
    for node in t.root.iter_nodes():
        if answerable(probe, node.semantics):
            return node
    return None


def _answering_node(leaf: QetNode, tree: QueryEvaluationTree) -> QetNode | None:
    probe = leaf.semantics
    if probe.semantic_key() == tree.root.semantics.semantic_key():
        return tree.root
    for node in tree.root.iter_nodes():
        if answerable(probe, node.semantics):
            return node
    return None


def search_cache(
    s: QueryEvaluationTree,
    network: "CacheNetwork",
    user_loc: str | None = None,
) -> SearchOutcome:
    """Split the probe's sub-queries into contained and remainder parts.

    Cache units are visited in ascending hop distance from the requesting
    user location (unit-id order when no location is given); within a unit,
    cached queries are visited by descending total frequency, then most
    recent use, then id. Each sub-query sticks to the first match.
    """
    leaves = s.leaves()
    leaf_order = [leaf.sub_query_id for leaf in leaves]
    remaining: dict[str, QetNode] = {}
    for leaf in leaves:
        remaining.setdefault(leaf.sub_query_id, leaf)
    found: dict[str, ContainedEntry] = {}

    for unit in network.units_by_distance(user_loc):
        for entry in unit.entries_by_demand():
            if not remaining:
                break
            for sub_query_id in list(remaining):
                leaf = remaining[sub_query_id]
                node = _answering_node(leaf, entry.expr)
                if node is not None:
                    found[sub_query_id] = ContainedEntry(
                        sub_query_id=sub_query_id,
                        cached_query_id=entry.id,
                        node_id=node.node_id,
                    )
                    del remaining[sub_query_id]
            if not remaining:
                break
        if not remaining:
            break

    seen: set[str] = set()
    contained = []
    remainder = []
    for sub_query_id in leaf_order:
        if sub_query_id in seen:
            continue
        seen.add(sub_query_id)
        if sub_query_id in found:
            contained.append(found[sub_query_id])
        else:
            remainder.append(sub_query_id)

    if not remainder:
        status = FULLY_FOUND
    elif not contained:
        status = NOT_FOUND
    else:
        status = PARTIALLY_FOUND
    return SearchOutcome(
        contained=tuple(contained), remainder=tuple(remainder), status=status
    )

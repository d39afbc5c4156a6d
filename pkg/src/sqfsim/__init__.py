"""sqfsim - distributed query-cache simulation with sub-query fragmentation.

The package models queries as evaluation trees of independently executable
sub-queries, searches a network of cache units for contained/remainder
parts, maintains caches by fragmenting, aggregating, evicting and
relocating cached objects, and compares the sub-query-fragmentation policy
against semantic-caching and full-query-caching baselines under synthetic
workloads.
"""

from sqfsim.errors import (
    ClockError,
    ConfigError,
    ContractError,
    DumpFormatError,
    FragmentationError,
    OversizeError,
    PlacementError,
    PlanParseError,
    PlanStructureError,
    SqfError,
    WorkloadFormatError,
)
from sqfsim.semantics import AttrRef, Predicate, RelationRef, SemanticDescriptor
from sqfsim.qet import QetNode, QueryEvaluationTree, complexity, fragment_leaf, to_infix
from sqfsim.plans import parse_plan, serialize_plan
from sqfsim.matching import (
    FULLY_FOUND,
    NOT_FOUND,
    PARTIALLY_FOUND,
    SearchOutcome,
    answerable,
    equivalent_query,
    is_contained,
    search_cache,
)

__all__ = [
    "AttrRef",
    "ClockError",
    "ConfigError",
    "ContractError",
    "DumpFormatError",
    "FragmentationError",
    "FULLY_FOUND",
    "NOT_FOUND",
    "OversizeError",
    "PARTIALLY_FOUND",
    "PlacementError",
    "PlanParseError",
    "PlanStructureError",
    "Predicate",
    "QetNode",
    "QueryEvaluationTree",
    "RelationRef",
    "SearchOutcome",
    "SemanticDescriptor",
    "SqfError",
    "WorkloadFormatError",
    "answerable",
    "complexity",
    "equivalent_query",
    "fragment_leaf",
    "is_contained",
    "parse_plan",
    "search_cache",
    "serialize_plan",
    "to_infix",
]

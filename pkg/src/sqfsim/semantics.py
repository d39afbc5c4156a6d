"""Semantic descriptors of sub-queries.

A sub-query is characterized by the relations it reads, the attributes it
projects, the predicates it applies, and a handle/volume for its result.
Descriptors are immutable; `normalize()` produces the canonical (sorted,
deduplicated) form required by the matching layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Union

from sqfsim.errors import ContractError, PlanParseError

COMPARATORS = ("=", "!=", "<", "<=", ">", ">=")

_ALIASES = {"≠": "!=", "≤": "<=", "≥": ">="}
_MIRROR = {"=": "=", "!=": "!=", "<": ">", "<=": ">=", ">": "<", ">=": "<="}

Constant = Union[int, float, str]


@dataclass(frozen=True)
class RelationRef:
    """A base relation with its home-location tag, or a bare result handle."""

    name: str
    location: str | None = None

    @property
    def is_handle(self) -> bool:
        return self.location is None

    def __str__(self) -> str:
        return f"{self.name}@{self.location}" if self.location else self.name

    @classmethod
    def parse(cls, text: str) -> "RelationRef":
        text = text.strip()
        if not text:
            raise ValueError("empty relation reference")
        if "@" in text:
            name, _, loc = text.partition("@")
            if not name or not loc:
                raise ValueError(f"bad relation reference {text!r}")
            return cls(name, loc)
        return cls(text, None)


@dataclass(frozen=True, order=True)
class AttrRef:
    """A qualified attribute reference, `qualifier.name`."""

    qualifier: str
    name: str

    def __str__(self) -> str:
        return f"{self.qualifier}.{self.name}"

    @classmethod
    def parse(cls, text: str) -> "AttrRef":
        text = text.strip()
        qualifier, dot, name = text.partition(".")
        if not dot or not qualifier or not name:
            raise ValueError(f"attribute reference must be qualified: {text!r}")
        return cls(qualifier, name)


def _render_constant(value: Constant) -> str:
    if isinstance(value, str):
        return "'" + value.replace("'", "''") + "'"
    return repr(value)


def _parse_term(text: str) -> AttrRef | Constant:
    text = text.strip()
    if text.startswith("'") and text.endswith("'") and len(text) >= 2:
        return text[1:-1].replace("''", "'")
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return AttrRef.parse(text)


@dataclass(frozen=True)
class Predicate:
    """One comparison: attribute vs attribute (join) or attribute vs constant
    (selection). The left side is always an attribute reference."""

    left: AttrRef
    comparator: str
    right: AttrRef | Constant

    def __post_init__(self):
        comp = _ALIASES.get(self.comparator, self.comparator)
        if comp != self.comparator:
            object.__setattr__(self, "comparator", comp)
        if self.comparator not in COMPARATORS:
            raise ValueError(f"unknown comparator {self.comparator!r}")
        if not isinstance(self.left, AttrRef):
            raise ValueError("predicate left side must be an attribute reference")

    @property
    def is_join(self) -> bool:
        return isinstance(self.right, AttrRef)

    def attr_refs(self) -> tuple[AttrRef, ...]:
        if self.is_join:
            return (self.left, self.right)
        return (self.left,)

    def normalized(self) -> "Predicate":
        """Order commutative attribute-vs-attribute comparisons so the
        lexicographically smaller side is on the left."""
        if self.is_join and self.comparator in ("=", "!="):
            if str(self.right) < str(self.left):
                return Predicate(self.right, self.comparator, self.left)
        return self

    def sort_key(self) -> tuple:
        right = self.right
        if isinstance(right, AttrRef):
            tag, rendered = "a", str(right)
        elif isinstance(right, str):
            tag, rendered = "s", right
        else:
            tag, rendered = "n", repr(right)
        return (str(self.left), self.comparator, tag, rendered)

    def __str__(self) -> str:
        right = str(self.right) if self.is_join else _render_constant(self.right)
        return f"{self.left} {self.comparator} {right}"

    @classmethod
    def parse(cls, text: str) -> "Predicate":
        src = text.strip()
        for alias, canon in _ALIASES.items():
            src = src.replace(alias, canon)
        # Longest comparators first so "<=" is not read as "<".
        for comp in ("<=", ">=", "!=", "=", "<", ">"):
            # Skip '=' inside '<=', '>=', '!='.
            idx = 0
            while True:
                idx = src.find(comp, idx)
                if idx < 0:
                    break
                before = src[idx - 1] if idx > 0 else ""
                if comp == "=" and before in ("<", ">", "!"):
                    idx += 1
                    continue
                lhs, rhs = src[:idx], src[idx + len(comp):]
                left = _parse_term(lhs)
                right = _parse_term(rhs)
                if not isinstance(left, AttrRef):
                    if isinstance(right, AttrRef):
                        left, right = right, left
                        comp = _MIRROR[comp]
                    else:
                        raise ValueError(f"no attribute reference in predicate {text!r}")
                return cls(left, comp, right)
        raise ValueError(f"no comparator found in predicate {text!r}")


@dataclass(frozen=True)
class SemanticDescriptor:
    """The <relations, attributes, predicates, content> tuple of a sub-query.

    `result_handle` names the intermediate result other sub-queries may
    consume; `result_volume` is the result size in GB. Neither participates
    in semantic equality: two descriptors describe the same result when
    their relations, attributes and predicates coincide after normalize().
    """

    relations: tuple[RelationRef, ...]
    attributes: tuple[AttrRef, ...]
    predicates: tuple[Predicate, ...]
    result_handle: str | None = None
    result_volume: float = 0.0
    canonical: bool = field(default=False, compare=False)

    def normalize(self) -> "SemanticDescriptor":
        """Sorted, deduplicated, commutative-predicate-ordered form.

        Idempotent: normalizing an already canonical descriptor returns an
        equal descriptor (still flagged canonical).
        """
        relations = tuple(sorted(set(self.relations), key=str))
        attributes = tuple(sorted(set(self.attributes), key=str))
        predicates = tuple(
            sorted({p.normalized() for p in self.predicates}, key=Predicate.sort_key)
        )
        return replace(
            self,
            relations=relations,
            attributes=attributes,
            predicates=predicates,
            canonical=True,
        )

    def semantic_key(self) -> tuple:
        """Equality key ignoring result handle and volume."""
        if not self.canonical:
            raise ContractError("semantic_key requires a normalized descriptor")
        return (self.relations, self.attributes, self.predicates)

    def relation_names(self) -> frozenset[str]:
        return frozenset(r.name for r in self.relations)

    def referenced_qualifiers(self) -> frozenset[str]:
        quals = {a.qualifier for a in self.attributes}
        for p in self.predicates:
            for a in p.attr_refs():
                quals.add(a.qualifier)
        return frozenset(quals)


def semantic_equal(a: SemanticDescriptor, b: SemanticDescriptor) -> bool:
    return a.semantic_key() == b.semantic_key()


class _Bounds:
    """Interval + exclusions known for one equality class of terms."""

    __slots__ = ("low", "low_strict", "high", "high_strict", "pinned", "neq")

    def __init__(self):
        self.low = None
        self.low_strict = False
        self.high = None
        self.high_strict = False
        self.pinned = None  # constant the class is equal to
        self.neq = set()

    def add_low(self, value, strict: bool):
        if self.low is None or value > self.low or (value == self.low and strict):
            self.low, self.low_strict = value, strict

    def add_high(self, value, strict: bool):
        if self.high is None or value < self.high or (value == self.high and strict):
            self.high, self.high_strict = value, strict

    def effective_pin(self):
        if self.pinned is not None:
            return self.pinned
        if (
            self.low is not None
            and self.high is not None
            and not self.low_strict
            and not self.high_strict
            and self.low == self.high
        ):
            return self.low
        return None

    def contradictory(self) -> bool:
        pin = self.effective_pin()
        try:
            if pin is not None:
                if self.low is not None and (pin < self.low or (pin == self.low and self.low_strict)):
                    return True
                if self.high is not None and (pin > self.high or (pin == self.high and self.high_strict)):
                    return True
                if pin in self.neq:
                    return True
            if self.low is not None and self.high is not None:
                if self.low > self.high:
                    return True
                if self.low == self.high and (self.low_strict or self.high_strict):
                    return True
        except TypeError:
            return False
        return False


class PredicateClosure:
    """Implication engine over a conjunction of selections and equi-joins.

    Sound for conjunctions of `attr op constant` selections and `attr = attr`
    joins: equality chains are closed transitively, single-attribute interval
    reasoning handles the ordered comparators. Incomparable constant types
    never imply anything.
    """

    def __init__(self, predicates: tuple[Predicate, ...]):
        self._parent: dict = {}
        self._bounds: dict = {}
        self._neq_pairs: set = set()
        self.contradictory = False

        # Equality pass first: chains must exist before bounds attach to roots.
        for p in predicates:
            if p.comparator == "=":
                self._union(self._attr_key(p.left), self._term_key(p.right))
        for p in predicates:
            if p.comparator == "=":
                continue
            left = self._find(self._attr_key(p.left))
            if p.comparator == "!=":
                right = self._find(self._term_key(p.right))
                if p.is_join:
                    if left == right:
                        self.contradictory = True
                    self._neq_pairs.add(frozenset((left, right)))
                else:
                    self._get_bounds(left).neq.add(p.right)
                continue
            bounds = self._get_bounds(left)
            try:
                if p.comparator == "<":
                    bounds.add_high(p.right, True)
                elif p.comparator == "<=":
                    bounds.add_high(p.right, False)
                elif p.comparator == ">":
                    bounds.add_low(p.right, True)
                elif p.comparator == ">=":
                    bounds.add_low(p.right, False)
            except TypeError:
                # Mixed-type bound; keep the closure sound by ignoring it.
                continue

        for root, bounds in list(self._bounds.items()):
            pin = self._pinned_constant(root)
            if pin is not None:
                bounds.pinned = pin
            if bounds.contradictory():
                self.contradictory = True

        for pair in self._neq_pairs:
            pins = [self._pinned_constant(r) for r in pair]
            if len(pair) == 1:
                self.contradictory = True
            elif all(p is not None for p in pins) and pins[0] == pins[1]:
                self.contradictory = True

    @staticmethod
    def _attr_key(ref: AttrRef):
        return ("a", str(ref))

    @staticmethod
    def _term_key(term):
        if isinstance(term, AttrRef):
            return ("a", str(term))
        return ("c", term)

    def _find(self, key):
        parent = self._parent
        if key not in parent:
            parent[key] = key
            return key
        root = key
        while parent[root] != root:
            root = parent[root]
        while parent[key] != root:
            parent[key], key = root, parent[key]
        return root

    def _union(self, a, b):
        ra, rb = self._find(a), self._find(b)
        if ra == rb:
            return
        # Deterministic representative keeps implication results stable.
        if rb < ra:
            ra, rb = rb, ra
        self._parent[rb] = ra
        merged = self._bounds.pop(rb, None)
        if merged is not None:
            target = self._get_bounds(ra)
            if merged.low is not None:
                target.add_low(merged.low, merged.low_strict)
            if merged.high is not None:
                target.add_high(merged.high, merged.high_strict)
            target.neq |= merged.neq

    def _get_bounds(self, root) -> _Bounds:
        bounds = self._bounds.get(root)
        if bounds is None:
            bounds = self._bounds[root] = _Bounds()
        return bounds

    def _pinned_constant(self, root):
        for key, parent_key in self._parent.items():
            if key[0] == "c" and self._find(key) == root:
                return key[1]
        bounds = self._bounds.get(root)
        if bounds is not None:
            return bounds.effective_pin()
        return None

    def implies(self, p: Predicate) -> bool:
        """True when every assignment satisfying the closed conjunction
        satisfies `p`."""
        if self.contradictory:
            return True
        p = p.normalized()
        left = self._find(self._attr_key(p.left))
        if p.is_join:
            right = self._find(self._attr_key(p.right))
            if p.comparator == "=":
                if left == right:
                    return True
                pins = (self._pinned_constant(left), self._pinned_constant(right))
                return pins[0] is not None and pins[0] == pins[1]
            if p.comparator == "!=":
                if frozenset((left, right)) in self._neq_pairs:
                    return True
                pins = (self._pinned_constant(left), self._pinned_constant(right))
                return all(v is not None for v in pins) and pins[0] != pins[1]
            return False  # ordered comparisons between attributes: not supported
        value = p.right
        pin = self._pinned_constant(left)
        bounds = self._bounds.get(left)
        try:
            if p.comparator == "=":
                return pin is not None and pin == value
            if p.comparator == "!=":
                if pin is not None:
                    return pin != value
                if bounds is None:
                    return False
                if value in bounds.neq:
                    return True
                if bounds.low is not None and (value < bounds.low or (value == bounds.low and bounds.low_strict)):
                    return True
                if bounds.high is not None and (value > bounds.high or (value == bounds.high and bounds.high_strict)):
                    return True
                return False
            if pin is not None:
                if p.comparator == "<":
                    return pin < value
                if p.comparator == "<=":
                    return pin <= value
                if p.comparator == ">":
                    return pin > value
                if p.comparator == ">=":
                    return pin >= value
            if bounds is None:
                return False
            if p.comparator == "<":
                return bounds.high is not None and (
                    bounds.high < value or (bounds.high == value and bounds.high_strict)
                )
            if p.comparator == "<=":
                return bounds.high is not None and bounds.high <= value
            if p.comparator == ">":
                return bounds.low is not None and (
                    bounds.low > value or (bounds.low == value and bounds.low_strict)
                )
            if p.comparator == ">=":
                return bounds.low is not None and bounds.low >= value
        except TypeError:
            return False
        return False


def parse_descriptor_field(kind: str, text: str, line: int | None = None):
    """Parse one comma-separated relations/attributes list for plan documents."""
    items = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            if kind == "relations":
                items.append(RelationRef.parse(chunk))
            else:
                items.append(AttrRef.parse(chunk))
        except ValueError as exc:
            raise PlanParseError(str(exc), line) from exc
    return tuple(items)

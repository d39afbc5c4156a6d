"""Cache units and cached-query objects.

A cached query couples an evaluation tree with its physical location,
volume, and usage profile (per-user-location timestamps and frequencies,
plus the ids of other cached queries it is requested together with).

A cache unit is a single-writer state machine. Admission evicts the
lowest-scoring entries when space is needed; the periodic maintenance pass
splits entries whose hot parts are requested independently of cold
siblings, merges entries that are habitually co-requested, flags unused
entries for eviction and proposes relocations toward demand.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from sqfsim.errors import ClockError, OversizeError, PlanStructureError
from sqfsim.qet import (
    PAR,
    OpSpec,
    QetNode,
    QueryEvaluationTree,
    build_tree,
    node_to_skeleton,
    with_address,
)


@dataclass(frozen=True)
class AccessRecord:
    ts: float
    user_loc: str
    nodes: tuple[str, ...]
    companions: tuple[str, ...]


@dataclass(frozen=True)
class FragmentAction:
    entry_id: str
    node_id: str
    new_ids: tuple[str, ...]


@dataclass(frozen=True)
class AggregateAction:
    first_id: str
    second_id: str
    new_id: str


@dataclass(frozen=True)
class EvictCandidate:
    entry_id: str


@dataclass(frozen=True)
class RelocateProposal:
    entry_id: str
    dominant_loc: str


MaintAction = FragmentAction | AggregateAction | EvictCandidate | RelocateProposal


class CachedQuery:
    """One cached sub-query object and its usage metadata."""

    def __init__(self, entry_id: str, expr: QueryEvaluationTree, cloc: str):
        self.id = entry_id
        self.expr = with_address(expr, cloc)
        self.cloc = cloc
        self.volume = expr.total_leaf_volume()
        self.complexity = len(expr.leaves())
        self.last_used: dict[str, float] = {}
        self.freq: dict[str, int] = {}
        self.co_queried: Counter[str] = Counter()
        self.window_log: list[AccessRecord] = []

    def record_access(
        self,
        user_loc: str,
        ts: float,
        companions: tuple[str, ...] = (),
        nodes: tuple[str, ...] | None = None,
    ) -> "CachedQuery":
        """Stamp one request: update per-location recency/frequency, merge
        companion query ids, and log the answering nodes for maintenance."""
        if self.last_used and ts < max(self.last_used.values()):
            raise ClockError(
                f"access at {ts} precedes last use {max(self.last_used.values())}"
            )
        self.last_used[user_loc] = ts
        self.freq[user_loc] = self.freq.get(user_loc, 0) + 1
        for companion in companions:
            if companion != self.id:
                self.co_queried[companion] += 1
        if nodes is None:
            nodes = (self.expr.root.node_id,)
        self.window_log.append(
            AccessRecord(ts=ts, user_loc=user_loc, nodes=tuple(nodes), companions=tuple(companions))
        )
        return self

    @property
    def total_freq(self) -> int:
        return sum(self.freq.values())

    @property
    def last_used_max(self) -> float:
        return max(self.last_used.values()) if self.last_used else -math.inf

    def score(self, now: float, decay: float, epoch_ticks: float) -> float:
        """Frequency aged by recency; low scores are evicted first."""
        total = 0.0
        for loc, count in sorted(self.freq.items()):
            age = max(0.0, now - self.last_used.get(loc, now)) / epoch_ticks
            total += count * decay**age
        return total

    def window_records(self, start: float, end: float) -> list[AccessRecord]:
        return [r for r in self.window_log if start <= r.ts <= end]

    def window_freq_by_loc(self, start: float, end: float) -> dict[str, int]:
        counts: dict[str, int] = {}
        for record in self.window_records(start, end):
            counts[record.user_loc] = counts.get(record.user_loc, 0) + 1
        return counts

    def prune_log(self, before: float) -> None:
        self.window_log = [r for r in self.window_log if r.ts >= before]

    def leaf_ids(self) -> tuple[str, ...]:
        return self.expr.leaf_ids()


def _merge_usage(target: CachedQuery, *sources: CachedQuery) -> None:
    for source in sources:
        for loc, ts in source.last_used.items():
            target.last_used[loc] = max(target.last_used.get(loc, -math.inf), ts)
        for loc, count in source.freq.items():
            target.freq[loc] = target.freq.get(loc, 0) + count
        target.co_queried.update(source.co_queried)
    for source in sources:
        target.co_queried.pop(source.id, None)
    target.window_log = sorted(
        (r for source in sources for r in source.window_log), key=lambda r: r.ts
    )


class CacheUnit:
    """A bounded cache at one network location."""

    def __init__(
        self,
        unit_id: str,
        location: str,
        capacity_gb: float,
        decay: float = 0.9,
        epoch_ticks: float = 1.0,
    ):
        self.id = unit_id
        self.location = location
        self.capacity_gb = capacity_gb
        self.decay = decay
        self.epoch_ticks = epoch_ticks
        self.entries: dict[str, CachedQuery] = {}
        self.used_gb = 0.0
        self.leaf_index: dict[str, set[str]] = {}
        self._maint_seq = 0

    def _index_add(self, entry: CachedQuery) -> None:
        for leaf_id in entry.leaf_ids():
            self.leaf_index.setdefault(leaf_id, set()).add(entry.id)

    def _index_remove(self, entry: CachedQuery) -> None:
        for leaf_id in entry.leaf_ids():
            ids = self.leaf_index.get(leaf_id)
            if ids is not None:
                ids.discard(entry.id)
                if not ids:
                    del self.leaf_index[leaf_id]

    def insert(self, entry: CachedQuery) -> None:
        """Store without capacity enforcement (volume-conserving rebuilds)."""
        entry.cloc = self.id
        entry.expr = with_address(entry.expr, self.id)
        self.entries[entry.id] = entry
        self.used_gb += entry.volume
        self._index_add(entry)

    def remove(self, entry_id: str) -> CachedQuery:
        entry = self.entries.pop(entry_id)
        self.used_gb -= entry.volume
        self._index_remove(entry)
        return entry

    def admit(self, entry: CachedQuery, now: float = 0.0) -> list[CachedQuery]:
        """Store an entry, evicting lowest-scoring entries if space is
        needed. Returns what was evicted."""
        if entry.volume > self.capacity_gb:
            raise OversizeError(
                f"entry {entry.id} ({entry.volume} GB) exceeds unit "
                f"{self.id} capacity ({self.capacity_gb} GB)"
            )
        evicted: list[CachedQuery] = []
        if self.used_gb + entry.volume > self.capacity_gb:
            ranked = sorted(
                self.entries.values(),
                key=lambda e: (e.score(now, self.decay, self.epoch_ticks), e.id),
            )
            for victim in ranked:
                if self.used_gb + entry.volume <= self.capacity_gb:
                    break
                evicted.append(self.remove(victim.id))
        self.insert(entry)
        return evicted

    def entries_by_demand(self) -> list[CachedQuery]:
        """Descending total frequency, most recent use, then id."""
        return sorted(
            self.entries.values(),
            key=lambda e: (-e.total_freq, -e.last_used_max, e.id),
        )

    def duplication_overhead(self) -> float:
        """Extra gigabytes stored because the same sub-query result lives in
        several cached objects of this unit."""
        counts: dict[str, tuple[int, float]] = {}
        for entry in self.entries.values():
            for leaf in entry.expr.leaves():
                count, _ = counts.get(leaf.sub_query_id, (0, 0.0))
                counts[leaf.sub_query_id] = (count + 1, leaf.semantics.result_volume)
        return sum((count - 1) * vol for count, vol in counts.values() if count > 1)

    def _next_id(self) -> str:
        self._maint_seq += 1
        return f"{self.id}:m{self._maint_seq}"

    # -- maintenance -------------------------------------------------------

    def maintenance_pass(
        self,
        window: tuple[float, float],
        theta_freq: int,
        theta_assoc: int,
        net=None,
    ) -> list[MaintAction]:
        """Run one maintenance phase over the windowed access history.

        Order: fragment hot-vs-cold splits, aggregate co-requested pairs,
        flag zero-access entries as eviction candidates, then propose
        relocations toward the dominant demand location (only when a network
        is supplied). Fragment and aggregate are executed in place;
        relocations are proposals for the placement layer.
        """
        start, end = window
        actions: list[MaintAction] = []
        actions.extend(self._fragment_phase(start, end, theta_freq))
        actions.extend(self._aggregate_phase(start, end, theta_assoc))
        for entry in sorted(self.entries.values(), key=lambda e: e.id):
            if not entry.window_records(start, end):
                actions.append(EvictCandidate(entry.id))
        if net is not None:
            actions.extend(self._relocation_proposals(start, end, net))
        for entry in self.entries.values():
            entry.prune_log(end)
        return actions

    def _node_hits(self, entry: CachedQuery, start: float, end: float) -> Counter:
        hits: Counter[str] = Counter()
        for record in entry.window_records(start, end):
            for node_id in record.nodes:
                hits[node_id] += 1
        return hits

    @staticmethod
    def _rolled(node: QetNode, hits: Counter) -> int:
        return sum(hits.get(n.node_id, 0) for n in node.iter_nodes())

    def _fragment_phase(self, start: float, end: float, theta_freq: int) -> list[FragmentAction]:
        actions: list[FragmentAction] = []
        for entry in sorted(self.entries.values(), key=lambda e: e.id):
            if entry.complexity < 2:
                continue
            hits = self._node_hits(entry, start, end)
            if not hits:
                continue
            found = self._find_split(entry.expr.root, hits, theta_freq)
            if found is None:
                continue
            parent, hot = found
            action = self._execute_split(entry, parent, hot)
            if action is not None:
                actions.append(action)
        return actions

    def _find_split(
        self, root: QetNode, hits: Counter, theta_freq: int
    ) -> tuple[QetNode, list[int]] | None:
        """Topmost node whose children partition into a hot group (each
        requested at least theta_freq times this window) and a cold group
        (never requested). Subtrees that answered requests as a whole are
        never split apart."""

        def visit(node: QetNode):
            if node.is_leaf or hits.get(node.node_id, 0) > 0:
                return None
            rolled = [self._rolled(child, hits) for child in node.children]
            hot = [i for i, r in enumerate(rolled) if r >= theta_freq]
            cold = [i for i, r in enumerate(rolled) if r == 0]
            if hot and cold and len(hot) + len(cold) == len(node.children):
                return node, hot
            for child in node.children:
                result = visit(child)
                if result is not None:
                    return result
            return None

        return visit(root)

    def _execute_split(
        self, entry: CachedQuery, parent: QetNode, hot: list[int]
    ) -> FragmentAction | None:
        root = entry.expr.root
        hot_children = [parent.children[i] for i in hot]
        cold_children = [c for i, c in enumerate(parent.children) if i not in hot]

        def group(nodes):
            if len(nodes) == 1:
                return node_to_skeleton(nodes[0])
            return OpSpec(parent.operator, tuple(node_to_skeleton(n) for n in nodes))

        hot_skeleton = group(hot_children)
        rest_skeleton = group(cold_children)
        try:
            hot_tree = build_tree(f"{entry.expr.query_id}:hot", hot_skeleton)
            remainder_skeleton = self._replace_node(root, parent, rest_skeleton)
            rest_tree = build_tree(f"{entry.expr.query_id}:rest", remainder_skeleton)
        except PlanStructureError:
            # Parts reference each other's intermediate results; splitting
            # them apart would orphan a handle, so keep the entry whole.
            return None

        hot_entry = CachedQuery(self._next_id(), hot_tree, self.id)
        rest_entry = CachedQuery(self._next_id(), rest_tree, self.id)
        for part in (hot_entry, rest_entry):
            part.last_used = dict(entry.last_used)
            part.freq = dict(entry.freq)
            part.co_queried = Counter(entry.co_queried)
        self._partition_log(entry, hot_entry, rest_entry)

        self.remove(entry.id)
        self.insert(hot_entry)
        self.insert(rest_entry)
        return FragmentAction(
            entry_id=entry.id,
            node_id=hot_tree.root.node_id,
            new_ids=(hot_entry.id, rest_entry.id),
        )

    @staticmethod
    def _replace_node(root: QetNode, victim: QetNode, replacement) -> OpSpec | object:
        def visit(node: QetNode):
            if node is victim:
                return replacement
            if node.is_leaf:
                return node_to_skeleton(node)
            return OpSpec(node.operator, tuple(visit(c) for c in node.children))

        return visit(root)

    @staticmethod
    def _partition_log(source: CachedQuery, first: CachedQuery, second: CachedQuery) -> None:
        first_nodes = {n.node_id for n in first.expr.root.iter_nodes()}
        second_nodes = {n.node_id for n in second.expr.root.iter_nodes()}
        for record in source.window_log:
            for part, node_ids in ((first, first_nodes), (second, second_nodes)):
                kept = tuple(n for n in record.nodes if n in node_ids)
                if kept:
                    part.window_log.append(
                        AccessRecord(record.ts, record.user_loc, kept, record.companions)
                    )

    def _aggregate_phase(self, start: float, end: float, theta_assoc: int) -> list[AggregateAction]:
        pair_counts: Counter[tuple[str, str]] = Counter()
        for entry in sorted(self.entries.values(), key=lambda e: e.id):
            for record in entry.window_records(start, end):
                for companion in record.companions:
                    if companion <= entry.id or companion not in self.entries:
                        continue
                    pair_counts[(entry.id, companion)] += 1

        qualifying = [
            (pair, count) for pair, count in pair_counts.items() if count >= theta_assoc
        ]
        qualifying.sort(key=lambda item: (-item[1], item[0]))

        snapshots = dict(self.entries)
        actions: list[AggregateAction] = []
        consumed: set[str] = set()
        merged_entries: list[CachedQuery] = []
        for (first_id, second_id), _count in qualifying:
            first, second = snapshots[first_id], snapshots[second_id]
            if set(first.leaf_ids()) & set(second.leaf_ids()):
                continue  # already share content; merging would self-duplicate
            skeleton = OpSpec(
                PAR,
                (node_to_skeleton(first.expr.root), node_to_skeleton(second.expr.root)),
            )
            try:
                tree = build_tree(f"{first.expr.query_id}+{second.expr.query_id}", skeleton)
            except PlanStructureError:
                continue
            merged = CachedQuery(self._next_id(), tree, self.id)
            _merge_usage(merged, first, second)
            merged_entries.append(merged)
            consumed.update((first_id, second_id))
            actions.append(AggregateAction(first_id, second_id, merged.id))

        for entry_id in sorted(consumed):
            if entry_id in self.entries:
                self.remove(entry_id)
        for merged in merged_entries:
            try:
                self.admit(merged, now=end)
            except OversizeError:
                continue
        return actions

    def _relocation_proposals(self, start: float, end: float, net) -> list[RelocateProposal]:
        proposals: list[RelocateProposal] = []
        for entry in sorted(self.entries.values(), key=lambda e: e.id):
            window_freq = entry.window_freq_by_loc(start, end)
            if not window_freq:
                continue
            dominant = min(
                window_freq.items(), key=lambda item: (-item[1], item[0])
            )[0]
            here = net.hops(dominant, self.location)
            nearer = any(
                net.hops(dominant, unit.location) < here
                for unit in net.units.values()
                if unit.id != self.id
            )
            if nearer:
                proposals.append(RelocateProposal(entry.id, dominant))
        return proposals

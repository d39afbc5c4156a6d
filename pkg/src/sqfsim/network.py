"""The cache network: units, user locations, data servers and hop counts.

Topologies come from a JSON network description supporting three kinds:
``complete`` (every location pair one hop apart), ``random`` (seeded
G(n, p) graph, augmented to connectivity) and ``explicit`` (edge list with
hop weights). Hop counts between locations are shortest-path distances.
"""

from __future__ import annotations

import json
from pathlib import Path

import networkx as nx

from sqfsim.cache import CachedQuery, CacheUnit
from sqfsim.errors import ConfigError

NETWORK_VERSION = 1


class CacheNetwork:
    def __init__(
        self,
        units: list[CacheUnit],
        user_locations: list[str],
        data_servers: list[str],
        hop_table: dict[tuple[str, str], int],
    ):
        self.units: dict[str, CacheUnit] = {u.id: u for u in sorted(units, key=lambda u: u.id)}
        self.user_locations = list(user_locations)
        self.data_servers = list(data_servers)
        self._hops = dict(hop_table)
        for a, b in list(self._hops):
            self._hops[(b, a)] = self._hops[(a, b)]

    def hops(self, a: str, b: str) -> int:
        if a == b:
            return 0
        try:
            return self._hops[(a, b)]
        except KeyError:
            raise ConfigError(f"no hop distance between {a!r} and {b!r}") from None

    def units_by_distance(self, user_loc: str | None) -> list[CacheUnit]:
        units = list(self.units.values())
        if user_loc is None:
            return units
        return sorted(units, key=lambda u: (self.hops(user_loc, u.location), u.id))

    def find_entry(self, entry_id: str) -> tuple[CacheUnit, CachedQuery] | None:
        for unit in self.units.values():
            entry = unit.entries.get(entry_id)
            if entry is not None:
                return unit, entry
        return None

    def leaf_candidates(self, leaf_id: str) -> list[tuple[CacheUnit, CachedQuery]]:
        out = []
        for unit in self.units.values():
            for entry_id in sorted(unit.leaf_index.get(leaf_id, ())):
                out.append((unit, unit.entries[entry_id]))
        return out

    def all_entries(self) -> list[tuple[CacheUnit, CachedQuery]]:
        out = []
        for unit in self.units.values():
            for entry_id in sorted(unit.entries):
                out.append((unit, unit.entries[entry_id]))
        return out

    def total_duplication(self) -> float:
        return sum(unit.duplication_overhead() for unit in self.units.values())

    def total_used_gb(self) -> float:
        return sum(unit.used_gb for unit in self.units.values())


def _graph_hops(graph: nx.Graph) -> dict[tuple[str, str], int]:
    table: dict[tuple[str, str], int] = {}
    lengths = dict(nx.all_pairs_dijkstra_path_length(graph, weight="weight"))
    for a in graph.nodes:
        for b, dist in lengths[a].items():
            table[(a, b)] = int(dist)
    return table


def _connect_components(graph: nx.Graph) -> None:
    components = sorted(nx.connected_components(graph), key=min)
    for first, second in zip(components, components[1:]):
        graph.add_edge(min(first), min(second), weight=1)


def network_from_config(config: dict) -> CacheNetwork:
    """Build a network from a parsed network description."""
    if config.get("version") != NETWORK_VERSION:
        raise ConfigError(f"unsupported network version {config.get('version')!r}")
    topology = config.get("topology", {})
    kind = topology.get("kind")
    if kind == "complete":
        locations = [f"loc-{i}" for i in range(int(topology["locations"]))]
        graph = nx.Graph()
        graph.add_nodes_from(locations)
        for i, a in enumerate(locations):
            for b in locations[i + 1:]:
                graph.add_edge(a, b, weight=1)
    elif kind == "random":
        count = int(topology["locations"])
        probability = float(topology.get("edge-probability", 0.3))
        seed = int(topology.get("seed", 0))
        base = nx.gnp_random_graph(count, probability, seed=seed)
        graph = nx.Graph()
        graph.add_nodes_from(f"loc-{i}" for i in range(count))
        for a, b in sorted(base.edges):
            graph.add_edge(f"loc-{a}", f"loc-{b}", weight=1)
        _connect_components(graph)
    elif kind == "explicit":
        graph = nx.Graph()
        for edge in topology.get("edges", ()):
            if len(edge) == 2:
                a, b, w = edge[0], edge[1], 1
            else:
                a, b, w = edge
            graph.add_edge(a, b, weight=int(w))
        if graph.number_of_nodes() == 0:
            raise ConfigError("explicit topology has no edges")
        if not nx.is_connected(graph):
            raise ConfigError("explicit topology is not connected")
    else:
        raise ConfigError(f"unknown topology kind {kind!r}")

    hop_table = _graph_hops(graph)
    known = set(graph.nodes)

    units = []
    for spec in config.get("units", ()):
        location = spec["location"]
        if location not in known:
            raise ConfigError(f"unit location {location!r} not in topology")
        units.append(
            CacheUnit(
                unit_id=spec["id"],
                location=location,
                capacity_gb=float(spec["capacity-gb"]),
                decay=float(config.get("decay", 0.9)),
            )
        )
    if not units:
        raise ConfigError("network has no cache units")

    user_locations = list(config.get("user-locations", ()))
    data_servers = list(config.get("data-servers", ()))
    for loc in user_locations + data_servers:
        if loc not in known:
            raise ConfigError(f"location {loc!r} not in topology")
    return CacheNetwork(units, user_locations, data_servers, hop_table)


def load_network(path: str | Path) -> CacheNetwork:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"network file not found: {path}")
    try:
        config = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed network file {path}: {exc}") from exc
    return network_from_config(config)


def default_network_config(
    units: int = 20,
    capacity_gb: float = 40.0,
    user_locations: int = 8,
    data_servers: int = 2,
    seed: int = 7,
    edge_probability: float = 0.3,
) -> dict:
    """Seeded random topology with one unit per location; user locations
    share the first unit locations, data servers take the last ones."""
    if user_locations + data_servers > units:
        raise ConfigError("not enough locations for users and servers")
    return {
        "version": NETWORK_VERSION,
        "topology": {
            "kind": "random",
            "locations": units,
            "edge-probability": edge_probability,
            "seed": seed,
        },
        "units": [
            {"id": f"cache-{i:02d}", "location": f"loc-{i}", "capacity-gb": capacity_gb}
            for i in range(units)
        ],
        "user-locations": [f"loc-{i}" for i in range(user_locations)],
        "data-servers": [f"loc-{units - 1 - i}" for i in range(data_servers)],
    }

"""Data placement: greedy demand-weighted placement, relocation execution
and inter-cache transfer cost accounting."""

from __future__ import annotations

from dataclasses import dataclass

from sqfsim.cache import CachedQuery
from sqfsim.errors import PlacementError
from sqfsim.network import CacheNetwork


@dataclass(frozen=True)
class TransferRecord:
    fragment_id: str
    from_unit: str
    to_unit: str
    volume: float
    hops: int
    cost_ticks: float
    failed: bool = False


def greedy_place(
    fragment: CachedQuery,
    net: CacheNetwork,
    demand: dict[str, int | float] | None = None,
) -> str:
    """Unit minimizing the demand-weighted hop sum, ties by lowest unit id.

    `demand` maps user locations to weights; the fragment's per-location
    frequency profile is used when omitted. A unit is feasible when its
    total capacity can hold the fragment (eviction can free the rest).
    """
    if demand is None:
        demand = fragment.freq
    feasible = [u for u in net.units.values() if u.capacity_gb >= fragment.volume]
    if not feasible:
        raise PlacementError(
            f"no unit can host fragment {fragment.id} ({fragment.volume} GB)"
        )
    weights = sorted(demand.items())

    def cost(unit) -> float:
        return sum(w * net.hops(loc, unit.location) for loc, w in weights)

    best = min(feasible, key=lambda u: (cost(u), u.id))
    return best.id


def transfer_cost(delta_n: int, volumes: list[float], d_net: float) -> float:
    """Average inter-cache transfer cost over one maintenance round.

    Written exactly as accounted: (1/n) * sum_i (n * v_i * d_net), which
    reduces to d_net * sum(v_i); zero relocations cost nothing.
    """
    if delta_n == 0:
        return 0.0
    if delta_n != len(volumes):
        raise ValueError("delta_n must equal the number of relocated volumes")
    return (1.0 / delta_n) * sum(delta_n * v * d_net for v in volumes)


def relocate(
    fragment_id: str,
    from_unit: str,
    to_unit: str,
    net: CacheNetwork,
    per_hop_ticks: float = 1.0,
    now: float = 0.0,
) -> TransferRecord:
    """Move a cached object between units and return the transfer record
    feeding the relocation ledger."""
    source = net.units[from_unit]
    if fragment_id not in source.entries:
        raise PlacementError(f"fragment {fragment_id} is not resident at {from_unit}")
    if from_unit == to_unit:
        entry = source.entries[fragment_id]
        return TransferRecord(fragment_id, from_unit, to_unit, entry.volume, 0, 0.0)

    destination = net.units[to_unit]
    entry = source.entries[fragment_id]
    hops = net.hops(source.location, destination.location)
    if entry.volume > destination.capacity_gb:
        return TransferRecord(
            fragment_id, from_unit, to_unit, entry.volume, hops, 0.0, failed=True
        )
    source.remove(fragment_id)
    destination.admit(entry, now=now)
    return TransferRecord(
        fragment_id=fragment_id,
        from_unit=from_unit,
        to_unit=to_unit,
        volume=entry.volume,
        hops=hops,
        cost_ticks=hops * per_hop_ticks,
    )

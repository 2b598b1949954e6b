"""Merge traces: which patches merged at which layer, and their JSON form.

The JSON layout is fixed so traces are byte-deterministic:

    {"grid": {"w": ..., "h": ...},
     "layers": [{"layer": i, "alpha": a, "r": r, "pairs": [[patch ids...], ...]}, ...],
     "final_groups": [[patch ids...], ...]}

Every id array is sorted ascending, pair and group lists are sorted by
their first id, and keys always appear in the order shown above.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import InvalidTraceError


@dataclass
class LayerTrace:
    """One layer's merge record; each pair is the union of the two merged
    tokens' patch lineages at the time of the merge."""

    layer: int
    alpha: float
    r: int
    pairs: list[tuple[int, ...]] = field(default_factory=list)


@dataclass
class MergeTrace:
    grid_w: int
    grid_h: int
    layers: list[LayerTrace] = field(default_factory=list)
    final_groups: list[tuple[int, ...]] = field(default_factory=list)

    @property
    def num_patches(self) -> int:
        return self.grid_w * self.grid_h


def _canonical_groups(groups) -> list[tuple[int, ...]]:
    return sorted(tuple(sorted(int(i) for i in g)) for g in groups)


def record_layer(
    trace: MergeTrace, layer: int, alpha: float, r: int, pair_groups
) -> None:
    """Append one layer's record with canonical ordering applied."""
    trace.layers.append(
        LayerTrace(layer=layer, alpha=float(alpha), r=int(r),
                   pairs=_canonical_groups(pair_groups))
    )


def finalize(trace: MergeTrace, lineage) -> None:
    trace.final_groups = _canonical_groups(lineage)


def is_partition(groups, n: int) -> bool:
    """True when the groups exactly tile {0, ..., n-1} without overlap."""
    seen: set[int] = set()
    total = 0
    for g in groups:
        total += len(g)
        seen.update(g)
    return total == n and len(seen) == n and (not seen or (min(seen) == 0 and max(seen) == n - 1))


def validate_partition(trace: MergeTrace) -> None:
    if not is_partition(trace.final_groups, trace.num_patches):
        raise InvalidTraceError(
            f"final groups do not partition the {trace.num_patches}-patch grid"
        )


def replay(trace: MergeTrace) -> list[tuple[int, ...]]:
    """Re-run the recorded merges from singleton tokens via union-find.

    The result must equal the trace's final partition; this is the ground
    truth the visualizer and the coherence metric rely on.
    """
    parent = list(range(trace.num_patches))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for layer in trace.layers:
        for group in layer.pairs:
            root = find(group[0])
            for i in group[1:]:
                r = find(i)
                if r != root:
                    parent[r] = root
    clusters: dict[int, list[int]] = {}
    for i in range(trace.num_patches):
        clusters.setdefault(find(i), []).append(i)
    return _canonical_groups(clusters.values())


def to_json(trace: MergeTrace) -> str:
    """Canonical JSON text (compact separators, fixed key order)."""
    obj = {
        "grid": {"w": trace.grid_w, "h": trace.grid_h},
        "layers": [
            {
                "layer": lt.layer,
                "alpha": lt.alpha,
                "r": lt.r,
                "pairs": [list(g) for g in lt.pairs],
            }
            for lt in trace.layers
        ],
        "final_groups": [list(g) for g in trace.final_groups],
    }
    return json.dumps(obj, separators=(",", ":")) + "\n"


def from_json(text: str) -> MergeTrace:
    try:
        obj = json.loads(text)
        trace = MergeTrace(
            grid_w=int(obj["grid"]["w"]),
            grid_h=int(obj["grid"]["h"]),
            layers=[
                LayerTrace(
                    layer=int(l["layer"]),
                    alpha=float(l["alpha"]),
                    r=int(l["r"]),
                    pairs=[tuple(int(i) for i in g) for g in l["pairs"]],
                )
                for l in obj["layers"]
            ],
            final_groups=[tuple(int(i) for i in g) for g in obj["final_groups"]],
        )
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise InvalidTraceError(f"malformed trace JSON: {exc}") from exc
    return trace


def save_trace(trace: MergeTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_json(trace))


def load_trace(path) -> MergeTrace:
    with open(path, "r", encoding="utf-8") as fh:
        return from_json(fh.read())

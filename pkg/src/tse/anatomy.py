"""Horizontal anatomy layers: non-semantic banding, refinement, and flags.

Layers are indexed 1..4 for skin, fat, mammary, and muscle.  The
non-semantic decomposition (3-5 horizontal bands driven by intensity
connectedness) is used to repair semantic layer maps that miss parts of a
layer or scatter one layer across the image.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum

import numpy as np

from .errors import ContractError
from .superpixel import RegionGraph

SKIN, FAT, MAMMARY, MUSCLE = 1, 2, 3, 4

SOURCE_SEMANTIC = "semantic"
SOURCE_REFINED = "refined"


class LayerFlag(IntEnum):
    SMOOTH = -1
    NORMAL = 0
    DARK = 1


@dataclass(frozen=True)
class LayerDecomposition:
    """Ordered horizontal bands (top to bottom) partitioning all regions."""

    layers: list  # list of sorted int arrays

    @property
    def count(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class AnatomyLabeling:
    layer_of: np.ndarray  # (N,) int, values in {1..4}
    prob: np.ndarray  # (4, N) per-region class probabilities
    source: str  # "semantic" or "refined"

    def members(self, layer: int) -> np.ndarray:
        return np.nonzero(self.layer_of == layer)[0]


@dataclass(frozen=True)
class FlagThresholds:
    dark_intensity: float = 0.25
    dark_fraction: float = 0.6
    smooth_intensity: float = 0.6
    smooth_fraction: float = 0.8


def layer_valid(layer, graph: RegionGraph, fraction: float = 0.75) -> bool:
    """A layer is valid when its regions span strictly more than the given
    fraction of image columns."""
    members = np.asarray(layer, dtype=np.int64)
    if members.size == 0:
        return False
    cols = np.unique(np.concatenate([graph.cols_present[i] for i in members]))
    return cols.size > fraction * graph.width


def classify_layer_flag(
    layer, graph: RegionGraph, thresholds: FlagThresholds = FlagThresholds()
) -> LayerFlag:
    """Dark (+1) / smooth (-1) / normal (0) call for one layer, by the
    area-weighted share of dark or bright member regions."""
    members = np.asarray(layer, dtype=np.int64)
    if members.size == 0:
        raise ContractError("cannot classify an empty layer")
    area = graph.area[members].astype(np.float64)
    total = area.sum()
    intensity = graph.intensity[members]
    dark_share = area[intensity < thresholds.dark_intensity].sum() / total
    if dark_share > thresholds.dark_fraction:
        return LayerFlag.DARK
    bright_share = area[intensity > thresholds.smooth_intensity].sum() / total
    if bright_share > thresholds.smooth_fraction:
        return LayerFlag.SMOOTH
    return LayerFlag.NORMAL


def _band_components(members: list, adjacency: list) -> list:
    """Connected components of a member set under region adjacency."""
    member_set = set(members)
    seen = set()
    comps = []
    for start in sorted(member_set):
        if start in seen:
            continue
        stack = [start]
        comp = []
        seen.add(start)
        while stack:
            u = stack.pop()
            comp.append(u)
            for v in adjacency[u].tolist():
                if v in member_set and v not in seen:
                    seen.add(v)
                    stack.append(v)
        comps.append(sorted(comp))
    return comps


def _even_area_split(order: np.ndarray, area: np.ndarray, parts: int) -> list:
    cum = np.cumsum(area[order])
    total = cum[-1]
    bands = []
    start = 0
    for k in range(1, parts):
        cut = int(np.searchsorted(cum, total * k / parts, side="left")) + 1
        cut = min(max(cut, start + 1), order.size - (parts - k))
        bands.append(order[start:cut])
        start = cut
    bands.append(order[start:])
    return [b for b in bands if b.size]


def decompose_nc_layers(
    graph: RegionGraph,
    *,
    affinity_scale: float = 0.5,
    merge_threshold: float = 0.9,
    max_fixup_rounds: int = 50,
) -> LayerDecomposition:
    """Split the region set into 3-5 horizontal bands.

    Regions ordered by centroid row start as singleton bands; adjacent
    bands merge greedily while the strongest intensity affinity across
    their boundary stays at or above ``merge_threshold`` (band count is
    clamped to [3, 5]).  Near-constant images fall back to an even
    three-way split by area.
    """
    if graph.height < 24:
        raise ContractError(
            f"image height {graph.height} is too short to form 3 bands"
        )
    order = np.lexsort((np.arange(graph.n_regions), graph.center[:, 1]))
    area = graph.area

    if graph.intensity.max() - graph.intensity.min() < 1e-9:
        bands = _even_area_split(order, area, 3)
        return _ordered_decomposition(bands, graph)

    bands = [[int(r)] for r in order]
    band_of = np.empty(graph.n_regions, dtype=np.int64)
    band_area = np.empty(len(bands), dtype=np.float64)
    for b, members in enumerate(bands):
        band_of[members[0]] = b
        band_area[b] = area[members[0]]

    src = []
    dst = []
    for i in range(graph.n_regions):
        nb = graph.neighbors[i]
        src.append(np.full(nb.size, i, dtype=np.int64))
        dst.append(nb)
    src = np.concatenate(src) if src else np.zeros(0, dtype=np.int64)
    dst = np.concatenate(dst) if dst else np.zeros(0, dtype=np.int64)
    keep = src < dst
    src, dst = src[keep], dst[keep]
    edge_aff = np.exp(-np.abs(graph.intensity[src] - graph.intensity[dst]) / affinity_scale)

    while len(bands) > 3:
        k = len(bands)
        bi, bj = band_of[src], band_of[dst]
        lo = np.minimum(bi, bj)
        hi = np.maximum(bi, bj)
        crossing = hi == lo + 1
        boundary_aff = np.zeros(k - 1)
        np.maximum.at(boundary_aff, lo[crossing], edge_aff[crossing])
        if k <= 5 and boundary_aff.max() < merge_threshold:
            break
        comb = band_area[:-1] + band_area[1:]
        candidates = np.nonzero(boundary_aff == boundary_aff.max())[0]
        b = int(min(candidates, key=lambda c: (comb[c], c)))
        for m in bands[b + 1]:
            band_of[m] = b
        band_of[band_of > b + 1] -= 1
        bands[b] = bands[b] + bands[b + 1]
        band_area[b] += band_area[b + 1]
        band_area = np.delete(band_area, b + 1)
        del bands[b + 1]

    bands = _reconnect_bands(bands, graph, max_fixup_rounds)
    return _ordered_decomposition(bands, graph)


def _reconnect_bands(bands: list, graph: RegionGraph, max_rounds: int) -> list:
    """Move stray adjacency components into the band they touch the most."""
    for _ in range(max_rounds):
        moved = False
        for bi in range(len(bands)):
            comps = _band_components(bands[bi], graph.neighbors)
            if len(comps) <= 1:
                continue
            comps.sort(key=lambda c: (-sum(graph.area[m] for m in c), c[0]))
            keep = comps[0]
            strays = comps[1:]
            bands[bi] = keep
            for comp in strays:
                counts = np.zeros(len(bands), dtype=np.int64)
                comp_set = set(comp)
                member_of = {}
                for bj, mem in enumerate(bands):
                    for m in mem:
                        member_of[m] = bj
                for u in comp:
                    for v in graph.neighbors[u].tolist():
                        if v in comp_set:
                            continue
                        if v in member_of:
                            counts[member_of[v]] += 1
                counts[bi] = 0
                if counts.max() == 0:
                    target = bi - 1 if bi > 0 else bi + 1
                else:
                    target = int(
                        min(
                            np.nonzero(counts == counts.max())[0],
                            key=lambda t: (abs(t - bi), t),
                        )
                    )
                bands[target] = sorted(bands[target] + comp)
                moved = True
        if not moved:
            break
    return [b for b in bands if b]


def _ordered_decomposition(bands: list, graph: RegionGraph) -> LayerDecomposition:
    def mean_row(members) -> float:
        members = np.asarray(members, dtype=np.int64)
        weight = graph.area[members].astype(np.float64)
        return float((graph.center[members, 1] * weight).sum() / weight.sum())

    bands = sorted(bands, key=mean_row)
    layers = [np.array(sorted(b), dtype=np.int64) for b in bands]
    return LayerDecomposition(layers=layers)


def refine_layers(
    sa: AnatomyLabeling,
    ncl: LayerDecomposition,
    graph: RegionGraph,
    validity_fraction: float = 0.75,
) -> AnatomyLabeling:
    """Repair semantic layers with the non-semantic bands.

    Skin keeps only its overlap with the first and last band.  Fat and
    muscle keep their semantic regions when the semantic layer is valid;
    otherwise they are rebuilt from the first (respectively last) band.
    Everything left over goes to the mammary layer, so mammary recall can
    only grow.  Regions claimed by two rules go to the earlier rule in the
    order skin, fat, muscle, mammary.
    """
    if sa.source != SOURCE_SEMANTIC and sa.source != SOURCE_REFINED:
        raise ContractError(f"unknown labeling source {sa.source!r}")
    n = sa.layer_of.size
    sa_set = {k: sa.layer_of == k for k in (SKIN, FAT, MAMMARY, MUSCLE)}

    def mask_of(indices) -> np.ndarray:
        m = np.zeros(n, dtype=bool)
        m[np.asarray(indices, dtype=np.int64)] = True
        return m

    ncl_masks = [mask_of(layer) for layer in ncl.layers]

    def anchor_layer(sa_mask: np.ndarray) -> int:
        overlaps = [int((m & sa_mask).sum()) for m in ncl_masks]
        return int(np.argmax(overlaps))

    nsa_skin = sa_set[SKIN] & (ncl_masks[0] | ncl_masks[-1])

    if layer_valid(np.nonzero(sa_set[FAT])[0], graph, validity_fraction):
        i = anchor_layer(sa_set[FAT])
        above = np.zeros(n, dtype=bool)
        for m in ncl_masks[:i]:
            above |= m
        cand_fat = (above | sa_set[FAT]) & ~(sa_set[SKIN] | sa_set[MAMMARY] | sa_set[MUSCLE])
    else:
        cand_fat = ncl_masks[0] & ~(sa_set[SKIN] | sa_set[MAMMARY] | sa_set[MUSCLE])
    nsa_fat = cand_fat & ~nsa_skin

    if layer_valid(np.nonzero(sa_set[MUSCLE])[0], graph, validity_fraction):
        i = anchor_layer(sa_set[MUSCLE])
        below = np.zeros(n, dtype=bool)
        for m in ncl_masks[i + 1 :]:
            below |= m
        cand_mus = (below | sa_set[MUSCLE]) & ~(sa_set[SKIN] | sa_set[FAT] | sa_set[MAMMARY])
    else:
        cand_mus = ncl_masks[-1] & ~sa_set[SKIN]
    nsa_mus = cand_mus & ~nsa_skin & ~nsa_fat

    layer_of = np.full(n, MAMMARY, dtype=np.int64)
    layer_of[nsa_skin] = SKIN
    layer_of[nsa_fat] = FAT
    layer_of[nsa_mus] = MUSCLE
    return replace(sa, layer_of=layer_of, source=SOURCE_REFINED)

"""Foreground, adaptive-center, boundary-connectivity, and background maps.

All maps are per-region vectors over a RegionGraph.  The foreground map
turns low intensity into high tumor likelihood through a Z-shaped
membership fit per anatomy layer, with dark (shadow) layers suppressed.
The background map combines squared boundary connectivity with mammary
probability weights and a center-distance factor.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .anatomy import MAMMARY, AnatomyLabeling, LayerFlag, layer_valid
from .errors import ContractError
from .superpixel import RegionGraph


@dataclass(frozen=True)
class LayerWeights:
    layer_w: np.ndarray  # (4,) mean mammary probability per layer (index = class-1)
    region_w: np.ndarray  # (N,) per-region weight


@dataclass(frozen=True)
class UnaryMaps:
    foreground: np.ndarray  # (N,) in [0, 1], max 1
    center: np.ndarray  # (N,) in (0, 1]
    background: np.ndarray  # (N,) in [0, 1], max 1
    adaptive_center: np.ndarray  # (2,) normalized (x, y)
    boundary_nc: np.ndarray  # (N,) in (0, 1]


def z_membership(x: np.ndarray, a: float, b: float) -> np.ndarray:
    """Z-shaped membership: 1 below ``a``, 0 above ``b``, quadratic blends
    between."""
    x = np.asarray(x, dtype=np.float64)
    if b <= a:
        raise ContractError("z_membership needs a < b")
    mid = (a + b) / 2.0
    span = b - a
    low = 1.0 - 2.0 * ((x - a) / span) ** 2
    high = 2.0 * ((x - b) / span) ** 2
    return np.select(
        [x <= a, x <= mid, x <= b], [np.ones_like(x), low, high], default=0.0
    )


def foreground_map(
    graph: RegionGraph,
    nsa: AnatomyLabeling,
    flags: dict,
    eps_foreground: float = 0.01,
    z_low_sigmas: float = -3.0,
    z_high_sigmas: float = -1.0,
) -> np.ndarray:
    """Per-region tumor likelihood from intensity, fit layer by layer.

    Each layer's Z-function runs over (mu + z_low_sigmas * sd,
    mu + z_high_sigmas * sd) of the layer's area-weighted intensity, so
    only regions distinctly darker than the layer light up; dark layers
    are clamped to ``eps_foreground`` so shadows cannot dominate.  The
    result is max-normalized.
    """
    if z_low_sigmas >= z_high_sigmas:
        raise ContractError("z_low_sigmas must be below z_high_sigmas")
    n = graph.n_regions
    f = np.zeros(n, dtype=np.float64)
    for layer in (1, 2, 3, 4):
        members = nsa.members(layer)
        if members.size == 0:
            continue
        if layer not in flags:
            raise ContractError(f"missing flag for layer {layer}")
        if flags[layer] == LayerFlag.DARK:
            f[members] = eps_foreground
            continue
        weight = graph.area[members].astype(np.float64)
        intensity = graph.intensity[members]
        mu = float((intensity * weight).sum() / weight.sum())
        var = float((weight * (intensity - mu) ** 2).sum() / weight.sum())
        sigma = np.sqrt(var)
        if sigma < 1e-12:
            f[members] = np.where(intensity < mu, 1.0, eps_foreground)
        else:
            f[members] = z_membership(
                intensity, mu + z_low_sigmas * sigma, mu + z_high_sigmas * sigma
            )
    peak = f.max()
    if peak <= 0:
        raise ContractError("foreground map collapsed to zero")
    return f / peak


def adaptive_center(foreground: np.ndarray, graph: RegionGraph) -> np.ndarray:
    """Foreground-weighted centroid of region centers."""
    total = foreground.sum()
    if total <= 0:
        raise ContractError("adaptive center needs a positive foreground mass")
    return (foreground[:, None] * graph.center).sum(axis=0) / total


def center_map(
    ac: np.ndarray, graph: RegionGraph, sigma3_sq: float = 0.1
) -> np.ndarray:
    """Exponential falloff of each region's distance to the adaptive center."""
    ac = np.asarray(ac, dtype=np.float64)
    if not ((0.0 <= ac) & (ac <= 1.0)).all():
        raise ContractError(f"adaptive center {ac} outside the unit square")
    dist = np.linalg.norm(graph.center - ac[None, :], axis=1)
    return np.exp(-dist / sigma3_sq)


def boundary_connectivity(
    graph: RegionGraph, affinity_scale: float = 0.5
) -> np.ndarray:
    """Widest-path connectivity to the border: the best min-affinity path
    from each region to any border-touching region.

    Border regions score 1; the result does not depend on visit order.
    """
    n = graph.n_regions
    value = np.zeros(n, dtype=np.float64)
    heap = []
    for i in np.nonzero(graph.touches_border)[0]:
        value[i] = 1.0
        heapq.heappush(heap, (-1.0, int(i)))
    if not heap:
        raise ContractError("partition has no border regions")
    intensity = graph.intensity
    while heap:
        neg, u = heapq.heappop(heap)
        vu = -neg
        if vu < value[u]:
            continue
        for w in graph.neighbors[u].tolist():
            aff = np.exp(-abs(intensity[u] - intensity[w]) / affinity_scale)
            cand = min(vu, aff)
            if cand > value[w]:
                value[w] = cand
                heapq.heappush(heap, (-cand, w))
    return value


def layer_weights(
    nsa: AnatomyLabeling, graph: RegionGraph, validity_fraction: float = 0.75
) -> LayerWeights:
    """Mean mammary probability per layer; per-region weights take the max
    of a region's own mammary probability and its layer mean.  All weights
    collapse to 1 when the mammary layer is invalid."""
    mammary_prob = nsa.prob[MAMMARY - 1]
    layer_w = np.zeros(4, dtype=np.float64)
    for layer in (1, 2, 3, 4):
        members = nsa.members(layer)
        if members.size:
            layer_w[layer - 1] = float(mammary_prob[members].mean())
    if not layer_valid(nsa.members(MAMMARY), graph, validity_fraction):
        region_w = np.ones(graph.n_regions, dtype=np.float64)
    else:
        region_w = np.maximum(mammary_prob, layer_w[nsa.layer_of - 1])
    return LayerWeights(layer_w=layer_w, region_w=region_w)


def background_map(
    nc: np.ndarray,
    weights: LayerWeights,
    center_values: np.ndarray,
    flags: dict,
    nsa: AnatomyLabeling,
) -> np.ndarray:
    """Background likelihood: high boundary connectivity, damped by the
    mammary weight and a center-distance factor, then max-normalized.

    The center factor is forced to 1 for mammary regions in a dark layer
    close to the adaptive center (c > 0.5) and for non-mammary regions in
    a normal layer moderately close to it (c >= 0.75); isolated blobs far
    from the tumor then cannot fake a low background score.
    """
    c_eff = center_values.copy()
    for layer in (1, 2, 3, 4):
        members = nsa.members(layer)
        if members.size == 0:
            continue
        flag = flags[layer]
        if layer == MAMMARY and flag == LayerFlag.DARK:
            sel = members[center_values[members] > 0.5]
        elif layer != MAMMARY and flag == LayerFlag.NORMAL:
            sel = members[center_values[members] >= 0.75]
        else:
            sel = members[:0]
        c_eff[sel] = 1.0
    t = 1.0 - (1.0 - nc ** 2) * weights.region_w * c_eff
    peak = t.max()
    if peak <= 0:
        raise ContractError("background map collapsed to zero")
    return t / peak


def background_map_nc_only(nc: np.ndarray) -> np.ndarray:
    """Plain squared boundary connectivity, max-normalized."""
    t = nc ** 2
    peak = t.max()
    if peak <= 0:
        raise ContractError("background map collapsed to zero")
    return t / peak


def render_region_values(values: np.ndarray, region_of: np.ndarray) -> np.ndarray:
    """Paint per-region values in [0, 1] onto pixels, scaled to [0, 255]."""
    values = np.asarray(values, dtype=np.float64)
    scaled = np.clip(np.rint(values * 255.0), 0, 255).astype(np.uint8)
    return scaled[region_of]


def render_saliency(values: np.ndarray, region_of: np.ndarray) -> np.ndarray:
    """Saliency rendering for evaluation: min-max normalized into [0, 255]."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if hi > lo:
        values = (values - lo) / (hi - lo)
    else:
        values = np.zeros_like(values)
    return render_region_values(values, region_of)

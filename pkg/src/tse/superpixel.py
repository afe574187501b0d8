"""Superpixel partitioning and the region graph every map indexes into.

Segmentation is a deterministic mode-seeking variant: a box-kernel density
is estimated over (x, y, intensity * weight) features, each pixel links to
its nearest higher-density neighbor within ``max_dist`` (feature-space
distance, ties in density broken by row-major scan order), and link trees
become regions.  Post-passes split disconnected or oversized regions and
merge slivers so region areas stay near ``max_dist**2`` and the partition
is 4-connected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import ContractError, FormatError
from .ingest import Image, read_fplanes, write_fplanes


@dataclass(frozen=True)
class SuperpixelParams:
    kernel_size: int = 1
    max_dist: float = 10.0
    intensity_weight: float = 4.0


@dataclass(frozen=True)
class SuperpixelMap:
    region_of: np.ndarray  # (H, W) int32, values in [0, n_regions)
    n_regions: int

    @property
    def height(self) -> int:
        return self.region_of.shape[0]

    @property
    def width(self) -> int:
        return self.region_of.shape[1]


@dataclass(frozen=True)
class RegionGraph:
    """Per-region features plus adjacency over a superpixel partition.

    ``intensity`` is the mean member intensity scaled to [0, 1]; ``center``
    holds (x, y) centroids with x normalized by width and y by height.
    """

    n_regions: int
    width: int
    height: int
    intensity: np.ndarray  # (N,) float64 in [0, 1]
    center: np.ndarray  # (N, 2) float64, columns (x, y)
    area: np.ndarray  # (N,) int64
    neighbors: list  # list of sorted int arrays, symmetric, irreflexive
    touches_border: np.ndarray  # (N,) bool
    rows_present: list  # list of sorted int arrays
    cols_present: list  # list of sorted int arrays


def _pair_windows(dy: int, dx: int, h: int, w: int):
    """Index windows selecting p and q = p + (dy, dx), both in bounds."""
    y0, y1 = max(0, -dy), min(h, h - dy)
    x0, x1 = max(0, -dx), min(w, w - dx)
    p = (slice(y0, y1), slice(x0, x1))
    q = (slice(y0 + dy, y1 + dy), slice(x0 + dx, x1 + dx))
    return p, q


def _box_density(v: np.ndarray, radius: int) -> np.ndarray:
    """Count neighbors inside the feature-space box of the given radius."""
    h, w = v.shape
    dens = np.zeros((h, w), dtype=np.float64)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dy == 0 and dx == 0:
                continue
            p, q = _pair_windows(dy, dx, h, w)
            dens[p] += np.abs(v[q] - v[p]) <= radius
    return dens


def _link_parents(v: np.ndarray, dens: np.ndarray, max_dist: float) -> np.ndarray:
    """Link each pixel to its nearest higher-density neighbor within max_dist."""
    h, w = v.shape
    radius = int(np.floor(max_dist))
    md2 = max_dist * max_dist
    best = np.full((h, w), np.inf)
    parent = np.full((h, w), -1, dtype=np.int64)
    flat_index = np.arange(h * w, dtype=np.int64).reshape(h, w)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if dy == 0 and dx == 0:
                continue
            sp2 = dy * dy + dx * dx
            if sp2 > md2:
                continue
            p, q = _pair_windows(dy, dx, h, w)
            dv = v[q] - v[p]
            fd2 = sp2 + dv * dv
            # scan-order tiebreak: an earlier pixel with equal density counts
            # as denser
            earlier = dy < 0 or (dy == 0 and dx < 0)
            if earlier:
                higher = dens[q] >= dens[p]
            else:
                higher = dens[q] > dens[p]
            ok = higher & (fd2 <= md2) & (fd2 < best[p])
            best_view = best[p]
            parent_view = parent[p]
            best_view[ok] = fd2[ok]
            parent_view[ok] = flat_index[q][ok]
    return parent.ravel()


def _tree_roots(parent: np.ndarray) -> np.ndarray:
    labels = parent.copy()
    own = np.arange(labels.size, dtype=np.int64)
    labels[labels < 0] = own[labels < 0]
    while True:
        hop = labels[labels]
        if np.array_equal(hop, labels):
            return labels
        labels = hop


def _connected_relabel(labels2d: np.ndarray) -> tuple[np.ndarray, int]:
    """Split every label into its 4-connected components."""
    h, w = labels2d.shape
    idx = np.arange(h * w, dtype=np.int64).reshape(h, w)
    rows = []
    cols = []
    same_h = labels2d[:, :-1] == labels2d[:, 1:]
    rows.append(idx[:, :-1][same_h])
    cols.append(idx[:, 1:][same_h])
    same_v = labels2d[:-1, :] == labels2d[1:, :]
    rows.append(idx[:-1, :][same_v])
    cols.append(idx[1:, :][same_v])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    graph = sparse.coo_matrix(
        (np.ones(r.size, dtype=np.int8), (r, c)), shape=(h * w, h * w)
    )
    n, comp = csgraph.connected_components(graph.tocsr(), directed=False)
    return comp.reshape(h, w), n


def _grid_tiles(ys: np.ndarray, xs: np.ndarray, ky: int, kx: int) -> np.ndarray:
    y0, y1 = ys.min(), ys.max()
    x0, x1 = xs.min(), xs.max()
    bh, bw = y1 - y0 + 1, x1 - x0 + 1
    ty = (ys - y0) * ky // bh
    tx = (xs - x0) * kx // bw
    return ty * kx + tx


def _split_oversized(labels2d: np.ndarray, n: int, max_dist: float):
    area = np.bincount(labels2d.ravel(), minlength=n)
    limit = 4.0 * max_dist * max_dist
    big = np.nonzero(area > limit)[0]
    if big.size == 0:
        return labels2d, n
    out = labels2d.copy()
    next_label = n
    for region in big:
        ys, xs = np.nonzero(labels2d == region)
        bh = ys.max() - ys.min() + 1
        bw = xs.max() - xs.min() + 1
        ky = max(1, int(round(bh / max_dist)))
        kx = max(1, int(round(bw / max_dist)))
        if ky * kx == 1:
            continue
        tiles = _grid_tiles(ys, xs, ky, kx)
        fresh = tiles > 0
        out[ys[fresh], xs[fresh]] = next_label + tiles[fresh] - 1
        next_label += ky * kx - 1
    return out, next_label


def _region_adjacency(labels2d: np.ndarray) -> dict:
    pairs = set()
    a, b = labels2d[:, :-1], labels2d[:, 1:]
    diff = a != b
    for u, v in zip(a[diff].tolist(), b[diff].tolist()):
        pairs.add((u, v) if u < v else (v, u))
    a, b = labels2d[:-1, :], labels2d[1:, :]
    diff = a != b
    for u, v in zip(a[diff].tolist(), b[diff].tolist()):
        pairs.add((u, v) if u < v else (v, u))
    neighbors: dict[int, set] = {}
    for u, v in pairs:
        neighbors.setdefault(u, set()).add(v)
        neighbors.setdefault(v, set()).add(u)
    return neighbors


def _merge_slivers(labels2d: np.ndarray, n: int, pixels: np.ndarray, max_dist: float):
    """Absorb regions below a quarter of max_dist**2 into similar neighbors."""
    flat = labels2d.ravel()
    area = np.bincount(flat, minlength=n).astype(np.int64)
    sums = np.bincount(flat, weights=pixels.ravel().astype(np.float64), minlength=n)
    min_area = 0.25 * max_dist * max_dist
    limit = 4.0 * max_dist * max_dist
    if not np.any(area < min_area):
        return labels2d, n

    neighbors = _region_adjacency(labels2d)
    parent = np.arange(n, dtype=np.int64)

    def find(r):
        while parent[r] != r:
            parent[r] = parent[parent[r]]
            r = parent[r]
        return r

    live = n
    order = np.lexsort((np.arange(n), area))
    for region in order:
        if live <= 4:
            break
        root = find(region)
        if area[root] >= min_area:
            continue
        cand = sorted({find(x) for x in neighbors.get(root, ())} - {root})
        if not cand:
            continue
        mean_root = sums[root] / area[root]

        def cost(c):
            return (abs(sums[c] / area[c] - mean_root), c)

        under = [c for c in cand if area[c] + area[root] <= limit]
        target = min(under or cand, key=cost)
        parent[root] = target
        area[target] += area[root]
        sums[target] += sums[root]
        merged = neighbors.pop(root, set())
        neighbors.setdefault(target, set()).update(merged)
        neighbors[target].discard(target)
        neighbors[target].discard(root)
        live -= 1

    roots = np.array([find(r) for r in range(n)], dtype=np.int64)
    return roots[flat].reshape(labels2d.shape), live


def _canonical_labels(labels2d: np.ndarray) -> tuple[np.ndarray, int]:
    flat = labels2d.ravel()
    uniq, first = np.unique(flat, return_index=True)
    order = np.argsort(first, kind="stable")
    remap = np.empty(int(uniq.max()) + 1, dtype=np.int32)
    remap[uniq[order]] = np.arange(uniq.size, dtype=np.int32)
    return remap[flat].reshape(labels2d.shape), int(uniq.size)


def _whole_image_grid(h: int, w: int, max_dist: float) -> tuple[np.ndarray, int]:
    ky = max(2, int(round(h / max_dist)))
    kx = max(2, int(round(w / max_dist)))
    ty = np.minimum(np.arange(h, dtype=np.int64) * ky // h, ky - 1)
    tx = np.minimum(np.arange(w, dtype=np.int64) * kx // w, kx - 1)
    return (ty[:, None] * kx + tx[None, :]).astype(np.int64), ky * kx


def segment(image: Image, params: SuperpixelParams = SuperpixelParams()) -> SuperpixelMap:
    """Partition an image into connected superpixel regions.

    Deterministic for fixed inputs; a constant image degenerates to a
    grid-like tiling rather than failing.
    """
    if image.width < 8 or image.height < 8:
        raise ContractError("segmentation needs at least an 8x8 image")
    if params.kernel_size < 1:
        raise ContractError("kernel_size must be >= 1")
    if params.max_dist <= 0:
        raise ContractError("max_dist must be positive")

    h, w = image.height, image.width
    v = image.pixels.astype(np.float64) / 255.0 * params.intensity_weight
    dens = _box_density(v, params.kernel_size)
    parent = _link_parents(v, dens, params.max_dist)
    labels = _tree_roots(parent).reshape(h, w)

    labels, n = _connected_relabel(labels)
    labels, n = _split_oversized(labels, n, params.max_dist)
    labels, n = _connected_relabel(labels)
    labels, n = _merge_slivers(labels, n, image.pixels, params.max_dist)
    labels, n = _canonical_labels(labels)
    if n < 4:
        labels, n = _whole_image_grid(h, w, params.max_dist)
        labels, n = _canonical_labels(labels)
    return SuperpixelMap(region_of=labels.astype(np.int32), n_regions=n)


def save_superpixel_map(path, spmap: SuperpixelMap) -> None:
    write_fplanes(path, spmap.region_of[None, :, :].astype(np.float64))


def load_superpixel_map(path) -> SuperpixelMap:
    """Alternate entry point: a precomputed partition instead of segment()."""
    arr = read_fplanes(path)
    if arr.shape[0] != 1:
        raise FormatError(f"{path}: superpixel map must have exactly one plane")
    labels = np.rint(arr[0]).astype(np.int64)
    if (labels < 0).any():
        raise FormatError(f"{path}: negative region index")
    n = int(labels.max()) + 1
    present = np.bincount(labels.ravel(), minlength=n)
    if (present == 0).any():
        missing = int(np.nonzero(present == 0)[0][0])
        raise FormatError(f"{path}: region index {missing} never occurs")
    return SuperpixelMap(region_of=labels.astype(np.int32), n_regions=n)


def _per_region_sets(labels_flat: np.ndarray, coord: np.ndarray, n: int) -> list:
    key = labels_flat.astype(np.int64) * (coord.max() + 1) + coord
    uniq = np.unique(key)
    owner = uniq // (coord.max() + 1)
    value = uniq % (coord.max() + 1)
    bounds = np.searchsorted(owner, np.arange(n + 1))
    return [value[bounds[i] : bounds[i + 1]] for i in range(n)]


def build_region_graph(image: Image, spmap: SuperpixelMap) -> RegionGraph:
    """Compute per-region means, centroids, adjacency, and border flags."""
    if (image.height, image.width) != (spmap.height, spmap.width):
        raise ContractError(
            f"image is {image.width}x{image.height} but superpixel map is "
            f"{spmap.width}x{spmap.height}"
        )
    h, w = image.height, image.width
    n = spmap.n_regions
    labels = spmap.region_of
    flat = labels.ravel().astype(np.int64)

    area = np.bincount(flat, minlength=n)
    if (area == 0).any():
        missing = int(np.nonzero(area == 0)[0][0])
        raise ContractError(f"region {missing} has no pixels")

    px = image.pixels.ravel().astype(np.float64)
    intensity = np.bincount(flat, weights=px, minlength=n) / area / 255.0

    ys, xs = np.divmod(np.arange(h * w, dtype=np.int64), w)
    cx = np.bincount(flat, weights=xs.astype(np.float64), minlength=n) / area / w
    cy = np.bincount(flat, weights=ys.astype(np.float64), minlength=n) / area / h
    center = np.stack([cx, cy], axis=1)

    pairs = []
    a, b = labels[:, :-1].ravel(), labels[:, 1:].ravel()
    diff = a != b
    pairs.append(np.stack([a[diff], b[diff]], axis=1))
    a, b = labels[:-1, :].ravel(), labels[1:, :].ravel()
    diff = a != b
    pairs.append(np.stack([a[diff], b[diff]], axis=1))
    edges = np.concatenate(pairs).astype(np.int64)
    lo = edges.min(axis=1)
    hi = edges.max(axis=1)
    uniq = np.unique(lo * n + hi)
    lo, hi = uniq // n, uniq % n
    neighbors: list[list] = [[] for _ in range(n)]
    for u, v in zip(lo.tolist(), hi.tolist()):
        neighbors[u].append(v)
        neighbors[v].append(u)
    neighbors = [np.array(sorted(nb), dtype=np.int64) for nb in neighbors]

    touches = np.zeros(n, dtype=bool)
    touches[np.unique(labels[0, :])] = True
    touches[np.unique(labels[-1, :])] = True
    touches[np.unique(labels[:, 0])] = True
    touches[np.unique(labels[:, -1])] = True

    rows_present = _per_region_sets(flat, ys, n)
    cols_present = _per_region_sets(flat, xs, n)

    return RegionGraph(
        n_regions=n,
        width=w,
        height=h,
        intensity=intensity,
        center=center,
        area=area.astype(np.int64),
        neighbors=neighbors,
        touches_border=touches,
        rows_present=rows_present,
        cols_present=cols_present,
    )


def regionize(pixel_map: np.ndarray, spmap: SuperpixelMap):
    """Convert a pixel class map into per-region labels and probabilities.

    Accepts either a (H, W) label map with classes in {1..4} or a
    (4, H, W) probability map.  Returns ``(labels, probs)`` where labels is
    an (N,) array of classes in {1..4} (majority vote, ties to the lower
    class) and probs is the (4, N) per-region class mean.
    """
    pixel_map = np.asarray(pixel_map)
    n = spmap.n_regions
    flat = spmap.region_of.ravel().astype(np.int64)
    if pixel_map.ndim == 2:
        if pixel_map.shape != (spmap.height, spmap.width):
            raise ContractError("label map dimensions do not match superpixel map")
        values = pixel_map.ravel()
        if not np.isin(values, (1, 2, 3, 4)).all():
            raise ContractError("anatomy label map must contain classes 1..4 only")
        votes = np.zeros((4, n), dtype=np.float64)
        for k in range(4):
            votes[k] = np.bincount(flat[values == k + 1], minlength=n)
    elif pixel_map.ndim == 3 and pixel_map.shape[0] == 4:
        if pixel_map.shape[1:] != (spmap.height, spmap.width):
            raise ContractError(
                "probability map dimensions do not match superpixel map"
            )
        votes = np.zeros((4, n), dtype=np.float64)
        for k in range(4):
            votes[k] = np.bincount(
                flat, weights=pixel_map[k].ravel().astype(np.float64), minlength=n
            )
    else:
        raise ContractError("expected a (H, W) label map or a (4, H, W) prob map")

    area = np.bincount(flat, minlength=n).astype(np.float64)
    probs = votes / area
    labels = np.argmax(probs, axis=0).astype(np.int64) + 1
    return labels, probs

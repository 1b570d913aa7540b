"""Single-person pose decoding from part confidence maps and part affinity fields.

Per joint the two strongest confidence peaks are kept as candidates (no score
threshold, so no joint is ever lost). Assembly starts from the stronger
head-top candidate and grows greedily along the limb tree, always committing
the (limb, candidate) option whose PAF line integral is highest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .skeleton import HEAD_TOP, NUM_JOINTS, LimbTree, Pose


@dataclass
class PartMaps:
    """Per-frame decoder input: 18 confidence maps and 2 PAF channels per limb."""

    confidence: np.ndarray   # (H, W, 18) float32
    pafs: np.ndarray         # (H, W, 34) float32, x then y per limb-tree edge
    stride: float            # map-grid to image-pixel scale

    def __post_init__(self):
        self.confidence = np.asarray(self.confidence, dtype=np.float32)
        self.pafs = np.asarray(self.pafs, dtype=np.float32)
        if self.confidence.ndim != 3 or self.confidence.shape[2] != NUM_JOINTS:
            raise ValueError(f"confidence must be (H, W, {NUM_JOINTS}), got {self.confidence.shape}")
        if self.pafs.shape[:2] != self.confidence.shape[:2]:
            raise ValueError(
                f"pafs grid {self.pafs.shape[:2]} does not match confidence grid "
                f"{self.confidence.shape[:2]}"
            )
        if self.pafs.ndim != 3 or self.pafs.shape[2] != 2 * (NUM_JOINTS - 1):
            raise ValueError(f"pafs must be (H, W, {2 * (NUM_JOINTS - 1)}), got {self.pafs.shape}")
        if self.stride <= 0:
            raise ValueError(f"stride must be positive, got {self.stride}")


class Candidate(NamedTuple):
    x: float
    y: float
    score: float


def extract_peaks(conf_map, k: int = 2) -> list:
    """Top-k strict 8-neighborhood local maxima, score-descending.

    Ties break by row-major scan order. When fewer than k strict maxima
    exist the best one is repeated; with none at all (flat map) the global
    argmax under scan order stands in.
    """
    m = np.asarray(conf_map)
    if m.ndim != 2 or m.size == 0:
        raise ValueError(f"expected a non-empty 2-D map, got shape {m.shape}")
    h, w = m.shape
    if h < 3 or w < 3:
        raise ValueError(f"map must be at least 3x3, got {h}x{w}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")

    padded = np.full((h + 2, w + 2), -np.inf, dtype=np.float64)
    padded[1:-1, 1:-1] = m
    center = padded[1:-1, 1:-1]
    is_max = np.ones((h, w), dtype=bool)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            is_max &= center > padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]

    ys, xs = np.nonzero(is_max)
    if len(ys) == 0:
        flat = int(np.argmax(m))        # first maximum in row-major scan
        best = Candidate(float(flat % w), float(flat // w), float(m.flat[flat]))
        return [best] * k
    scores = m[ys, xs].astype(np.float64)
    order = np.lexsort((xs, ys, -scores))
    cands = [Candidate(float(xs[i]), float(ys[i]), float(scores[i])) for i in order[:k]]
    while len(cands) < k:
        cands.append(cands[0])
    return cands


def paf_line_integral(paf_x, paf_y, p1, p2, samples: int = 10) -> float:
    """Mean dot product of the PAF with the limb's unit direction along p1->p2.

    Field lookups are nearest-neighbor, clamped to the grid. Coincident
    endpoints contribute no association evidence and score 0. The sampling
    and summation are arranged so that swapping the endpoints negates the
    result exactly.
    """
    if samples < 2:
        raise ValueError(f"samples must be >= 2, got {samples}")
    x1, y1 = float(p1[0]), float(p1[1])
    x2, y2 = float(p2[0]), float(p2[1])
    if x1 == x2 and y1 == y2:
        return 0.0
    px = np.asarray(paf_x)
    py = np.asarray(paf_y)
    if px.shape != py.shape or px.ndim != 2:
        raise ValueError(f"paf channels must be matching 2-D maps, got {px.shape} and {py.shape}")
    h, w = px.shape

    dx = x2 - x1
    dy = y2 - y1
    norm = math.sqrt(dx * dx + dy * dy)
    ux = dx / norm
    uy = dy / norm

    # Barycentric weights, computed identically for both endpoint orders so
    # the sampled cells are the same set under a swap.
    idx = np.arange(samples, dtype=np.float64)
    w2 = idx / (samples - 1)
    w1 = idx[::-1] / (samples - 1)
    sx = w1 * x1 + w2 * x2
    sy = w1 * y1 + w2 * y2
    ix = np.clip(np.rint(sx), 0, w - 1).astype(np.intp)
    iy = np.clip(np.rint(sy), 0, h - 1).astype(np.intp)
    dots = px[iy, ix].astype(np.float64) * ux + py[iy, ix].astype(np.float64) * uy
    return math.fsum(dots.tolist()) / samples


def assemble_pose(maps: PartMaps, tree: LimbTree) -> Pose:
    """Greedy head-top-rooted assembly over top-2 candidates per joint.

    A frontier holds every (limb, child-candidate) option whose parent is
    already placed; the highest line-integral option commits next. Ties
    resolve to the lower child joint id, then candidate 0. Grid positions
    scale to image pixels by the stride.
    """
    conf = maps.confidence
    h, w = conf.shape[:2]
    if h < 3 or w < 3:
        raise ValueError(f"decode grid must be at least 3x3, got {h}x{w}")

    candidates = [extract_peaks(conf[:, :, j], 2) for j in range(NUM_JOINTS)]
    children_of = {}
    for e, (p, c) in enumerate(tree.edges):
        children_of.setdefault(p, []).append((e, c))

    grid_xy = np.zeros((NUM_JOINTS, 2), dtype=np.float64)
    placed = np.zeros(NUM_JOINTS, dtype=bool)
    root = candidates[HEAD_TOP][0]
    grid_xy[HEAD_TOP] = (root.x, root.y)
    placed[HEAD_TOP] = True

    frontier = []  # (score, child, cand_index, (x, y))

    def open_edges(parent: int) -> None:
        for e, child in children_of.get(parent, ()):
            if placed[child]:
                continue
            paf_x = maps.pafs[:, :, 2 * e]
            paf_y = maps.pafs[:, :, 2 * e + 1]
            for ci, cand in enumerate(candidates[child]):
                score = paf_line_integral(paf_x, paf_y, grid_xy[parent], (cand.x, cand.y))
                frontier.append((score, child, ci, (cand.x, cand.y)))

    open_edges(HEAD_TOP)
    while not placed.all():
        if not frontier:
            raise ValueError("limb tree does not reach every joint from head_top")
        best = min(frontier, key=lambda o: (-o[0], o[1], o[2]))
        _, child, _, pos = best
        grid_xy[child] = pos
        placed[child] = True
        frontier = [o for o in frontier if o[1] != child]
        open_edges(child)

    return Pose.all_valid(grid_xy * maps.stride)


def decode_sequence(frames, tree: LimbTree) -> list:
    """Decode the 3 frames of a sequence independently."""
    frames = list(frames)
    if len(frames) != 3:
        raise ValueError(f"a sequence has exactly 3 frames, got {len(frames)}")
    return [assemble_pose(f, tree) for f in frames]

"""Joint vocabulary, the limb tree, and the Pose container.

18 joints: 16 body joints plus the two hockey-stick endpoints, treated as an
extension of the body. Left/right ids come in fixed mirror pairs so poses can
be flipped consistently.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

JOINT_NAMES = (
    "head_top",
    "upper_neck",
    "thorax",
    "l_shoulder",
    "r_shoulder",
    "l_elbow",
    "r_elbow",
    "l_wrist",
    "r_wrist",
    "pelvis",
    "l_hip",
    "r_hip",
    "l_knee",
    "r_knee",
    "l_ankle",
    "r_ankle",
    "stick_top",
    "stick_end",
)
NUM_JOINTS = len(JOINT_NAMES)
JOINT_INDEX = {name: i for i, name in enumerate(JOINT_NAMES)}

HEAD_TOP = 0
UPPER_NECK = 1
THORAX = 2
PELVIS = 9
STICK_TOP = 16
STICK_END = 17

MIRROR_PAIRS = ((3, 4), (5, 6), (7, 8), (10, 11), (12, 13), (14, 15))

# Permutation that exchanges each left joint with its right partner.
MIRROR_PERM = np.arange(NUM_JOINTS)
for _l, _r in MIRROR_PAIRS:
    MIRROR_PERM[_l], MIRROR_PERM[_r] = _r, _l

# Spanning tree rooted at head_top; one PAF (x then y channel) per edge, in
# this order. The stick hangs off r_wrist by default.
DEFAULT_LIMB_EDGES = (
    (0, 1),
    (1, 2),
    (2, 3),
    (2, 4),
    (3, 5),
    (4, 6),
    (5, 7),
    (6, 8),
    (2, 9),
    (9, 10),
    (9, 11),
    (10, 12),
    (11, 13),
    (12, 14),
    (13, 15),
    (8, 16),
    (16, 17),
)
NUM_LIMBS = len(DEFAULT_LIMB_EDGES)


@dataclass(frozen=True)
class LimbTree:
    """17 (parent, child) edges forming a tree over all 18 joints, rooted at head_top."""

    edges: tuple

    def __post_init__(self):
        edges = tuple((int(p), int(c)) for p, c in self.edges)
        object.__setattr__(self, "edges", edges)
        if len(edges) != NUM_JOINTS - 1:
            raise ValueError(f"limb tree needs {NUM_JOINTS - 1} edges, got {len(edges)}")
        children = [c for _, c in edges]
        if len(set(children)) != len(children):
            raise ValueError("limb tree has a joint with two parents")
        if HEAD_TOP in children:
            raise ValueError("head_top must be the root, not a child")
        for p, c in edges:
            if not (0 <= p < NUM_JOINTS and 0 <= c < NUM_JOINTS):
                raise ValueError(f"edge ({p},{c}) references an unknown joint")
        # Reachability from the root must cover every joint.
        reached = {HEAD_TOP}
        frontier = [HEAD_TOP]
        by_parent = {}
        for p, c in edges:
            by_parent.setdefault(p, []).append(c)
        while frontier:
            j = frontier.pop()
            for c in by_parent.get(j, ()):
                if c in reached:
                    raise ValueError("limb tree contains a cycle")
                reached.add(c)
                frontier.append(c)
        if len(reached) != NUM_JOINTS:
            missing = sorted(set(range(NUM_JOINTS)) - reached)
            names = [JOINT_NAMES[j] for j in missing]
            raise ValueError(f"limb tree does not span joints: {names}")

    @property
    def num_paf_channels(self) -> int:
        return 2 * len(self.edges)


def default_limb_tree() -> LimbTree:
    return LimbTree(DEFAULT_LIMB_EDGES)


def parse_limb_file(path) -> LimbTree:
    """Parse a 17-line `parent_name child_name` file into a LimbTree."""
    edges = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'parent child', got {raw!r}")
        for name in parts:
            if name not in JOINT_INDEX:
                raise ValueError(f"{path}:{lineno}: unknown joint name {name!r}")
        edges.append((JOINT_INDEX[parts[0]], JOINT_INDEX[parts[1]]))
    return LimbTree(tuple(edges))


def write_limb_file(tree: LimbTree, path) -> None:
    lines = [f"{JOINT_NAMES[p]} {JOINT_NAMES[c]}" for p, c in tree.edges]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class Pose:
    """18 joints in image pixels with per-joint validity."""

    xy: np.ndarray       # (18, 2) float64
    valid: np.ndarray    # (18,) bool

    def __post_init__(self):
        self.xy = np.asarray(self.xy, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.xy.shape != (NUM_JOINTS, 2):
            raise ValueError(f"pose xy must be ({NUM_JOINTS}, 2), got {self.xy.shape}")
        if self.valid.shape != (NUM_JOINTS,):
            raise ValueError(f"pose valid must be ({NUM_JOINTS},), got {self.valid.shape}")

    def copy(self) -> "Pose":
        return Pose(self.xy.copy(), self.valid.copy())

    @classmethod
    def all_valid(cls, xy) -> "Pose":
        return cls(np.asarray(xy, dtype=np.float64), np.ones(NUM_JOINTS, dtype=bool))

    @classmethod
    def from_array(cls, arr) -> "Pose":
        """Build from an (18, 3) array of [x, y, valid] rows."""
        a = np.asarray(arr, dtype=np.float64)
        if a.shape != (NUM_JOINTS, 3):
            raise ValueError(f"expected ({NUM_JOINTS}, 3) joint array, got {a.shape}")
        return cls(a[:, :2], a[:, 2] > 0.5)

    def to_array(self) -> np.ndarray:
        out = np.zeros((NUM_JOINTS, 3), dtype=np.float64)
        out[:, :2] = self.xy
        out[:, 2] = self.valid
        return out


def mirror_pose(pose: Pose, image_w: float) -> Pose:
    """Mirror about the vertical image axis and swap left/right joint ids."""
    xy = pose.xy[MIRROR_PERM].copy()
    xy[:, 0] = image_w - xy[:, 0]
    return Pose(xy, pose.valid[MIRROR_PERM].copy())

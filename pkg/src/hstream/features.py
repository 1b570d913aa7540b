"""Latent joint feature vectors for a 3-frame pose sequence.

Per frame: joint coordinates centered on the image and scaled by that frame's
head segment length, then 16 limb angles. Frames concatenate in temporal
order to 156 values with the stick included, 144 without.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateHeadError
from .skeleton import HEAD_TOP, JOINT_INDEX, NUM_JOINTS, UPPER_NECK, Pose

# Angle rows (A, B, C) with B the vertex; stick joints never appear.
ANGLE_TRIPLES = tuple(
    (JOINT_INDEX[a], JOINT_INDEX[b], JOINT_INDEX[c])
    for a, b, c in (
        ("head_top", "upper_neck", "thorax"),
        ("upper_neck", "thorax", "l_shoulder"),
        ("pelvis", "thorax", "l_shoulder"),
        ("thorax", "l_shoulder", "l_elbow"),
        ("l_shoulder", "l_elbow", "l_wrist"),
        ("upper_neck", "thorax", "r_shoulder"),
        ("pelvis", "thorax", "r_shoulder"),
        ("thorax", "r_shoulder", "r_elbow"),
        ("r_shoulder", "r_elbow", "r_wrist"),
        ("thorax", "pelvis", "l_hip"),
        ("pelvis", "l_hip", "l_knee"),
        ("l_hip", "l_knee", "l_ankle"),
        ("thorax", "pelvis", "r_hip"),
        ("pelvis", "r_hip", "r_knee"),
        ("r_hip", "r_knee", "r_ankle"),
        ("l_hip", "pelvis", "r_hip"),
    )
)
NUM_ANGLES = len(ANGLE_TRIPLES)

STICK_JOINTS = (JOINT_INDEX["stick_top"], JOINT_INDEX["stick_end"])

MIN_HEAD_SEGMENT = 1e-6
_MIN_SEGMENT = 1e-9


def head_segment_length(pose: Pose) -> float:
    """Distance between head_top and upper_neck; the per-image scale unit."""
    if not (pose.valid[HEAD_TOP] and pose.valid[UPPER_NECK]):
        raise DegenerateHeadError("head_top or upper_neck is not a valid joint")
    d = pose.xy[HEAD_TOP] - pose.xy[UPPER_NECK]
    length = float(math.hypot(d[0], d[1]))
    if length < MIN_HEAD_SEGMENT:
        raise DegenerateHeadError(f"head segment length {length} below {MIN_HEAD_SEGMENT}")
    return length


def normalize_joints(pose: Pose, image_w: int, image_h: int) -> np.ndarray:
    """Joints relative to the image center, divided by the head segment length.

    Invalid joints map to (0, 0). Raises DegenerateHeadError when the head
    segment is unusable, which flags the whole sequence.
    """
    length = head_segment_length(pose)
    center = np.array([image_w / 2.0, image_h / 2.0])
    out = (pose.xy - center) / length
    out[~pose.valid] = 0.0
    return out


def limb_angle(a, b, c) -> float:
    """Unsigned angle at vertex b between segments b->a and b->c, in [0, pi].

    Either segment shorter than 1e-9 yields 0 by convention.
    """
    ba = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    bc = np.asarray(c, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    na = math.hypot(ba[0], ba[1])
    nc = math.hypot(bc[0], bc[1])
    if na < _MIN_SEGMENT or nc < _MIN_SEGMENT:
        return 0.0
    cos = float(np.dot(ba, bc)) / (na * nc)
    return math.acos(max(-1.0, min(1.0, cos)))


def frame_angles(pose: Pose) -> np.ndarray:
    """The 16 table angles on raw coordinates; any invalid joint in a triple gives 0."""
    out = np.zeros(NUM_ANGLES, dtype=np.float64)
    for i, (a, b, c) in enumerate(ANGLE_TRIPLES):
        if pose.valid[a] and pose.valid[b] and pose.valid[c]:
            out[i] = limb_angle(pose.xy[a], pose.xy[b], pose.xy[c])
    return out


def featurize_frame(pose: Pose, image_w: int, image_h: int, include_stick: bool = True) -> np.ndarray:
    """One frame's feature block: normalized coordinates then angles (52 or 48 values).

    With the stick ablated its two coordinate rows are removed, not zeroed.
    Angles use raw coordinates; they are scale and translation invariant so
    the value matches either convention.
    """
    coords = normalize_joints(pose, image_w, image_h)
    if not include_stick:
        coords = np.delete(coords, STICK_JOINTS, axis=0)
    return np.concatenate([coords.reshape(-1), frame_angles(pose)])


def featurize_sequence(poses, dims, include_stick: bool = True) -> np.ndarray:
    """Concatenate the 3 per-frame blocks in temporal order (156 or 144 values)."""
    poses = list(poses)
    dims = list(dims)
    if len(poses) != 3 or len(dims) != 3:
        raise ValueError(f"a sequence has exactly 3 frames, got {len(poses)} poses / {len(dims)} dims")
    blocks = [featurize_frame(p, w, h, include_stick) for p, (w, h) in zip(poses, dims)]
    return np.concatenate(blocks)


def frame_feature_length(include_stick: bool = True) -> int:
    joints = NUM_JOINTS if include_stick else NUM_JOINTS - len(STICK_JOINTS)
    return 2 * joints + NUM_ANGLES


def sequence_feature_length(include_stick: bool = True) -> int:
    return 3 * frame_feature_length(include_stick)


def write_angle_file(path, triples=ANGLE_TRIPLES) -> None:
    """Ship the angle table as 16 lines of `A B C` joint names (B the vertex)."""
    from pathlib import Path

    from .skeleton import JOINT_NAMES

    lines = [" ".join(JOINT_NAMES[j] for j in triple) for triple in triples]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_angle_file(path) -> tuple:
    """Read an angle table file back into id triples, validating its shape."""
    from pathlib import Path

    triples = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        names = line.split()
        if len(names) != 3:
            raise ValueError(f"{path}:{lineno}: expected three joint names, got {raw!r}")
        for name in names:
            if name not in JOINT_INDEX:
                raise ValueError(f"{path}:{lineno}: unknown joint name {name!r}")
            if JOINT_INDEX[name] in STICK_JOINTS:
                raise ValueError(f"{path}:{lineno}: stick joints cannot appear in angle rows")
        triples.append(tuple(JOINT_INDEX[n] for n in names))
    if len(triples) != NUM_ANGLES:
        raise ValueError(f"{path}: expected {NUM_ANGLES} angle rows, got {len(triples)}")
    return tuple(triples)

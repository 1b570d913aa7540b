"""Deterministic synthetic data: planted skeletons, rendered maps, flows, labels.

Every pipeline stage can be tested against planted ground truth. Class
archetypes are built so each input stream carries signal the others cannot
fully substitute for:

- forward / backward: rigid x-translation of the whole skeleton (flows
  match), stick low and static; backward skaters crouch, a flip-invariant
  posture that keeps the class well-defined under mirror augmentation;
- passing: slight positive translation plus a small horizontal stick sweep
  (wrists co-move faintly, so stick ablation hurts);
- shooting: slight negative translation, large vertical stick raise (at
  least 2 head lengths) with a subtle wrist rise.

A depth-one rule on (flow dx sign, stick rise, stick sweep) is exact on
generated sequences, which the tests use as the class-separability oracle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pose import PartMaps
from .skeleton import (
    JOINT_INDEX,
    JOINT_NAMES,
    NUM_JOINTS,
    LimbTree,
    Pose,
    default_limb_tree,
)
from .tensor import write_tensor

ACTIONS = ("forward", "backward", "passing", "shooting")

# Skeleton in a 368x368 person-centered frame, head segment ~30 px. The
# upper body leans toward +x (the facing direction) and the stick hangs on
# one side; both survive the coupled flip as facing cues, so a mirrored
# "forward" stays distinguishable from "backward".
BASE_XY = np.array(
    [
        (206.0, 60.0),   # head_top
        (198.0, 90.0),   # upper_neck
        (192.0, 120.0),  # thorax
        (222.0, 125.0),  # l_shoulder
        (162.0, 125.0),  # r_shoulder
        (234.0, 165.0),  # l_elbow
        (150.0, 165.0),  # r_elbow
        (242.0, 205.0),  # l_wrist
        (142.0, 205.0),  # r_wrist
        (184.0, 210.0),  # pelvis
        (204.0, 215.0),  # l_hip
        (164.0, 215.0),  # r_hip
        (208.0, 265.0),  # l_knee
        (160.0, 265.0),  # r_knee
        (212.0, 315.0),  # l_ankle
        (156.0, 315.0),  # r_ankle
        (136.0, 212.0),  # stick_top
        (102.0, 298.0),  # stick_end
    ]
)
HEAD_SEGMENT = 30.0

# Per-class inter-frame translation d (px), sampled uniformly. Forward and
# passing (and backward and shooting) sit 2 px apart, well under the crop
# jitter and decoder quantization on the joints, so motion read from joints
# is ambiguous at the boundaries while the flow field reads it cleanly.
TRANSLATION_RANGES = {
    "forward": (9.0, 16.0),
    "backward": (-16.0, -9.0),
    "passing": (2.0, 7.0),
    "shooting": (-7.0, 0.0),
}

_WRISTS = (JOINT_INDEX["l_wrist"], JOINT_INDEX["r_wrist"])
_STICK = (JOINT_INDEX["stick_top"], JOINT_INDEX["stick_end"])
_UPPER_BODY = tuple(
    JOINT_INDEX[n]
    for n in ("head_top", "upper_neck", "thorax", "l_shoulder", "r_shoulder",
              "l_elbow", "r_elbow", "l_wrist", "r_wrist")
)
_HIPS = (JOINT_INDEX["pelvis"], JOINT_INDEX["l_hip"], JOINT_INDEX["r_hip"])
_KNEES = (JOINT_INDEX["l_knee"], JOINT_INDEX["r_knee"])


def _apply_backward_crouch(xy: np.ndarray) -> None:
    """Deeper knee bend and dropped torso: the flip-invariant backward posture
    that keeps the class well-defined under mirror augmentation."""
    for j in _UPPER_BODY + _STICK:
        xy[j, 1] += 18.0
    for j in _HIPS:
        xy[j, 1] += 13.0
    for j in _KNEES:
        xy[j, 0] += 12.0
        xy[j, 1] += 3.0


@dataclass
class SynthConfig:
    grid_h: int = 46
    grid_w: int = 46
    stride: float = 8.0
    gaussian_sigma: float = 3.0       # grid px
    paf_half_width: float = 1.5       # grid px
    sequences_per_class: int = 100
    seed: int = 0
    distractor_amplitude: float = 0.0
    class_counts: tuple | None = None  # overrides sequences_per_class when set
    flow_h: int = 112
    flow_w: int = 112
    flow_noise_sigma: float = 0.2     # flow-grid px
    pose_jitter: float = 1.5          # image px, per joint per sequence
    # Per-frame crop-centering error: inter-frame motion read off the joints
    # carries this noise while the flow field does not, giving the flow
    # branch its edge over joint-derived motion.
    center_jitter: float = 3.0        # image px

    def __post_init__(self):
        if self.gaussian_sigma <= 0:
            raise ValueError("gaussian_sigma must be > 0")
        if not 0.0 <= self.distractor_amplitude < 1.0:
            raise ValueError("distractor_amplitude must be in [0, 1)")

    @property
    def image_w(self) -> int:
        return int(round(self.grid_w * self.stride))

    @property
    def image_h(self) -> int:
        return int(round(self.grid_h * self.stride))

    def counts(self) -> tuple:
        if self.class_counts is not None:
            if len(self.class_counts) != len(ACTIONS):
                raise ValueError("class_counts needs one entry per action")
            return tuple(int(n) for n in self.class_counts)
        return (self.sequences_per_class,) * len(ACTIONS)

    def to_dict(self):
        return {
            "grid_h": self.grid_h,
            "grid_w": self.grid_w,
            "stride": self.stride,
            "gaussian_sigma": self.gaussian_sigma,
            "paf_half_width": self.paf_half_width,
            "sequences_per_class": self.sequences_per_class,
            "seed": self.seed,
            "distractor_amplitude": self.distractor_amplitude,
            "class_counts": list(self.class_counts) if self.class_counts else None,
            "flow_h": self.flow_h,
            "flow_w": self.flow_w,
            "flow_noise_sigma": self.flow_noise_sigma,
            "pose_jitter": self.pose_jitter,
            "center_jitter": self.center_jitter,
        }


def _segment_distances(points, a, b):
    """Distance from each (x, y) in points to segment a-b, plus the axial projection t."""
    d = b - a
    len2 = float(d @ d)
    rel = points - a
    if len2 == 0.0:
        t = np.zeros(len(points))
    else:
        t = (rel @ d) / len2
    tc = np.clip(t, 0.0, 1.0)
    closest = a + tc[:, None] * d
    dist = np.linalg.norm(points - closest, axis=1)
    return dist, t


def render_maps(pose: Pose, cfg: SynthConfig, tree: LimbTree | None = None, rng=None) -> PartMaps:
    """Gaussian confidence peaks plus unit-vector PAF ribbons for a planted pose.

    With distractor_amplitude > 0 each joint also gets a weaker far-off peak,
    rejection-sampled at least 10 grid cells away from every limb segment so
    its line-integral support is provably near zero.
    """
    tree = tree or default_limb_tree()
    h, w = cfg.grid_h, cfg.grid_w
    grid = pose.xy / cfg.stride
    if (grid[:, 0] < 0).any() or (grid[:, 0] > w - 1).any() or (grid[:, 1] < 0).any() or (grid[:, 1] > h - 1).any():
        raise ValueError("pose joints fall outside the decode grid")

    ys, xs = np.mgrid[0:h, 0:w]
    cells = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)

    conf = np.zeros((h, w, NUM_JOINTS), dtype=np.float32)
    two_sigma2 = 2.0 * cfg.gaussian_sigma**2
    far_mask = None
    if cfg.distractor_amplitude > 0:
        if rng is None:
            raise ValueError("distractor placement needs a seeded generator")
        far = np.full(len(cells), np.inf)
        for p, c in tree.edges:
            dist, _ = _segment_distances(cells, grid[p], grid[c])
            far = np.minimum(far, dist)
        far_mask = far >= 10.0

    for j in range(NUM_JOINTS):
        d2 = (xs - grid[j, 0]) ** 2 + (ys - grid[j, 1]) ** 2
        layer = np.exp(-d2 / two_sigma2)
        if far_mask is not None:
            choices = np.nonzero(far_mask)[0]
            cell = cells[choices[rng.integers(len(choices))]]
            d2d = (xs - cell[0]) ** 2 + (ys - cell[1]) ** 2
            layer = np.maximum(layer, cfg.distractor_amplitude * np.exp(-d2d / two_sigma2))
        conf[:, :, j] = layer

    pafs = np.zeros((h, w, 2 * len(tree.edges)), dtype=np.float32)
    for e, (p, c) in enumerate(tree.edges):
        a, b = grid[p], grid[c]
        seg = b - a
        norm = math.hypot(seg[0], seg[1])
        if norm < 1e-9:
            continue
        u = seg / norm
        dist, t = _segment_distances(cells, a, b)
        on_limb = (dist <= cfg.paf_half_width) & (t >= 0.0) & (t <= 1.0)
        mask = on_limb.reshape(h, w)
        pafs[:, :, 2 * e][mask] = u[0]
        pafs[:, :, 2 * e + 1][mask] = u[1]

    return PartMaps(confidence=conf, pafs=pafs, stride=cfg.stride)


def _clip_to_grid(xy: np.ndarray, cfg: SynthConfig) -> None:
    # Decode-grid bounds, not the image rectangle: cells run 0..grid-1.
    xy[:, 0] = np.clip(xy[:, 0], 1.0, (cfg.grid_w - 1) * cfg.stride - 1.0)
    xy[:, 1] = np.clip(xy[:, 1], 1.0, (cfg.grid_h - 1) * cfg.stride - 1.0)


def random_pose(cfg: SynthConfig, rng) -> Pose:
    """Base skeleton with a random global offset and per-joint shape noise, in bounds."""
    offset = rng.uniform(-20.0, 20.0, size=2)
    noise = rng.normal(0.0, cfg.pose_jitter, size=(NUM_JOINTS, 2))
    xy = BASE_XY + offset + noise
    _clip_to_grid(xy, cfg)
    return Pose.all_valid(xy)


def gen_action_sequence(label: str, cfg: SynthConfig, rng):
    """One labeled sequence: 3 poses, 2 flow fields, label.

    Joints carry the rigid translation plus a per-frame crop-centering error;
    flows carry the clean translation (in flow-grid units) plus Gaussian noise.
    """
    if label not in ACTIONS:
        raise ValueError(f"unknown action {label!r}")
    base = random_pose(cfg, rng)
    if label == "backward":
        _apply_backward_crouch(base.xy)
    lo, hi = TRANSLATION_RANGES[label]
    d = rng.uniform(lo, hi)

    # Forehand sweep only: one passing mode per facing keeps the class compact.
    sweep_sign = 1.0
    sweep_total = math.radians(rng.uniform(16.0, 28.0))   # passing stick sweep
    # Rise is measured against this skeleton's own head segment so the
    # "at least two head lengths" property holds with margin under noise.
    head = base.xy[0] - base.xy[1]
    raise_total = rng.uniform(2.2, 3.2) * math.hypot(head[0], head[1])

    poses = []
    for f in range(3):
        xy = base.xy.copy()
        xy[:, 0] += (f - 1) * d
        xy += rng.uniform(-cfg.center_jitter, cfg.center_jitter, size=2)
        if label == "passing":
            top = xy[_STICK[0]].copy()
            blade = xy[_STICK[1]] - top
            ang = sweep_sign * sweep_total * f / 2.0
            rot = np.array([[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]])
            moved = top + rot @ blade
            drift = moved - xy[_STICK[1]]
            xy[_STICK[1]] = moved
            for wj in _WRISTS:
                xy[wj] += 0.18 * drift
        elif label == "shooting":
            rise = raise_total * f / 2.0
            xy[_STICK[1], 1] -= rise
            xy[_STICK[0], 1] -= 0.45 * rise
            for wj in _WRISTS:
                xy[wj, 1] -= 0.12 * rise
        _clip_to_grid(xy, cfg)
        poses.append(Pose.all_valid(xy))

    # Background flow in flow-grid units: image translation scaled to the grid.
    u = d * cfg.flow_w / cfg.image_w
    flows = []
    for _ in range(2):
        field = np.zeros((cfg.flow_h, cfg.flow_w, 2), dtype=np.float32)
        field[:, :, 0] = u
        field += rng.normal(0.0, cfg.flow_noise_sigma, size=field.shape).astype(np.float32)
        flows.append(field)
    return poses, flows, label


def _split_sizes(n: int):
    n_val = int(math.floor(0.15 * n + 0.5))
    n_test = int(math.floor(0.15 * n + 0.5))
    return n - n_val - n_test, n_val, n_test


def gen_dataset(cfg: SynthConfig, out_dir, with_maps: bool = False, tree: LimbTree | None = None,
                map_splits=None) -> Path:
    """Write a labeled dataset with a stratified 70/15/15 split; returns the manifest path.

    Layout: manifest.json plus one subdirectory per sequence holding
    joints.json, flow_12.htsr, flow_23.htsr and, with maps enabled,
    confidence_{k}.htsr / pafs_{k}.htsr for k in 1..3. `map_splits` restricts
    map rendering to the named splits (maps are by far the largest files).
    """
    tree = tree or default_limb_tree()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    counts = cfg.counts()
    if min(counts) < 7:
        raise ValueError("need at least 7 sequences per class for a 70/15/15 split")

    records = []
    seq_no = 0
    for ci, action in enumerate(ACTIONS):
        n = counts[ci]
        n_train, n_val, _ = _split_sizes(n)
        order = np.random.default_rng([cfg.seed, 100 + ci]).permutation(n)
        split_of = {}
        for rank, idx in enumerate(order):
            split_of[int(idx)] = "train" if rank < n_train else ("val" if rank < n_train + n_val else "test")

        for i in range(n):
            rng = np.random.default_rng([cfg.seed, ci, i])
            poses, flows, _ = gen_action_sequence(action, cfg, rng)
            seq_id = f"seq_{seq_no:04d}"
            seq_dir = out / seq_id
            seq_dir.mkdir(exist_ok=True)
            flow_paths = [f"{seq_id}/flow_12.htsr", f"{seq_id}/flow_23.htsr"]
            for path, field in zip(flow_paths, flows):
                write_tensor(field, out / path)

            render_this = with_maps and (map_splits is None or split_of[i] in map_splits)
            frames = []
            for k, p in enumerate(poses, start=1):
                frame = {"joints": [[float(x), float(y), int(v)] for (x, y), v in zip(p.xy, p.valid)]}
                if render_this:
                    maps = render_maps(p, cfg, tree=tree, rng=np.random.default_rng([cfg.seed, ci, i, k]))
                    frame["confidence"] = f"{seq_id}/confidence_{k}.htsr"
                    frame["pafs"] = f"{seq_id}/pafs_{k}.htsr"
                    write_tensor(maps.confidence, out / frame["confidence"])
                    write_tensor(maps.pafs, out / frame["pafs"])
                frames.append(frame)

            (seq_dir / "joints.json").write_text(
                json.dumps({"id": seq_id, "action": action, "frames": [f["joints"] for f in frames]}, indent=1)
            )
            records.append(
                {
                    "id": seq_id,
                    "action": action,
                    "split": split_of[i],
                    "frames": frames,
                    "flows": flow_paths,
                }
            )
            seq_no += 1

    manifest = {
        "version": 1,
        "joint_names": list(JOINT_NAMES),
        "limbs": [[JOINT_NAMES[p], JOINT_NAMES[c]] for p, c in tree.edges],
        "stride": cfg.stride,
        "image_size": [cfg.image_w, cfg.image_h],
        "synth_config": cfg.to_dict(),
        "sequences": records,
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return manifest_path

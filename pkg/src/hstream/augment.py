"""Training-time augmentation: similarity transform, joint jitter, coupled flip.

Flipping is the one transform that must touch both streams at once: whenever
the joints are mirrored (with left/right ids swapped), both flow fields get
their columns reversed and their x channel negated. A pose mirror without the
flow flip (or vice versa) would decouple the player's orientation from the
background motion direction, so this module never does one without the other.
Scale and rotation apply to joints only; flow tensors are left unwarped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .skeleton import mirror_pose
from .tensor import hflip


@dataclass
class AugmentConfig:
    flip_prob: float = 0.5
    scale_range: tuple = (0.8, 1.2)
    rotation_deg: float = 15.0
    joint_jitter_sigma: float = 2.0   # px
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError(f"flip_prob must be in [0, 1], got {self.flip_prob}")
        lo, hi = self.scale_range
        if lo <= 0 or hi < lo:
            raise ValueError(f"scale_range must be positive and ordered, got {self.scale_range}")
        if self.joint_jitter_sigma < 0:
            raise ValueError("joint_jitter_sigma must be >= 0")

    def to_dict(self):
        return {
            "flip_prob": self.flip_prob,
            "scale_range": list(self.scale_range),
            "rotation_deg": self.rotation_deg,
            "joint_jitter_sigma": self.joint_jitter_sigma,
            "seed": self.seed,
        }


IDENTITY_AUGMENT = AugmentConfig(flip_prob=0.0, scale_range=(1.0, 1.0), rotation_deg=0.0, joint_jitter_sigma=0.0)


def augment_sequence(poses, flows, cfg: AugmentConfig, rng, image_w, image_h):
    """Augment one 3-frame sequence; returns (poses, flows, flipped).

    One scale/rotation draw is shared by all 3 frames; Gaussian jitter is
    independent per joint per frame; the flip applies jointly to poses and
    both flow fields. The generator is always consumed in the same order
    (scale, rotation, jitter, flip coin) so streams are reproducible.
    """
    poses = [p.copy() for p in poses]
    flows = [np.asarray(f) for f in flows]
    if len(poses) != 3 or len(flows) != 2:
        raise ValueError(f"expected 3 poses and 2 flows, got {len(poses)} and {len(flows)}")

    scale = rng.uniform(cfg.scale_range[0], cfg.scale_range[1])
    theta = math.radians(rng.uniform(-cfg.rotation_deg, cfg.rotation_deg))
    jitter = rng.normal(0.0, cfg.joint_jitter_sigma or 1.0, size=(3, poses[0].xy.shape[0], 2))
    if cfg.joint_jitter_sigma == 0.0:
        jitter = np.zeros_like(jitter)
    do_flip = bool(rng.random() < cfg.flip_prob)

    # Skip the no-op transform so an identity config is exactly the identity.
    if scale != 1.0 or theta != 0.0:
        center = np.array([image_w / 2.0, image_h / 2.0])
        rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        for pose in poses:
            pose.xy = center + scale * (pose.xy - center) @ rot.T
    if cfg.joint_jitter_sigma > 0.0:
        for f, pose in enumerate(poses):
            pose.xy = pose.xy + jitter[f]

    if do_flip:
        poses = [mirror_pose(p, image_w) for p in poses]
        flows = [hflip(f, negate_channels=(0,)) for f in flows]

    return poses, flows, do_flip

"""Dataset manifests: load, validate, and hand out per-sequence records.

The manifest is a single JSON file; joint annotations live inline (the
datasets here are ~10^3 sequences) while flow fields and decoder maps stay
in external .htsr tensors referenced by relative path.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DatasetError
from .pose import PartMaps
from .skeleton import JOINT_INDEX, NUM_JOINTS, LimbTree, Pose
from .tensor import read_tensor

ACTIONS = ("forward", "backward", "passing", "shooting")
ACTION_INDEX = {a: i for i, a in enumerate(ACTIONS)}
SPLITS = ("train", "val", "test")


@dataclass
class SequenceRecord:
    seq_id: str
    action: str
    split: str
    joints: np.ndarray            # (3, 18, 3) of [x, y, valid]
    flow_paths: list              # 2 absolute paths
    confidence_paths: list | None  # 3 absolute paths, or None
    paf_paths: list | None

    @property
    def label_index(self) -> int:
        return ACTION_INDEX[self.action]

    def poses(self) -> list:
        return [Pose.from_array(self.joints[k]) for k in range(3)]

    def load_flows(self) -> list:
        return [read_tensor(p) for p in self.flow_paths]

    def has_maps(self) -> bool:
        return self.confidence_paths is not None and self.paf_paths is not None

    def load_maps(self, stride: float) -> list:
        if not self.has_maps():
            raise DatasetError(f"{self.seq_id}: no confidence/paf maps in the manifest")
        return [
            PartMaps(read_tensor(c), read_tensor(p), stride)
            for c, p in zip(self.confidence_paths, self.paf_paths)
        ]


@dataclass
class Dataset:
    root: Path
    joint_names: list
    limb_tree: LimbTree
    stride: float
    image_size: tuple            # (w, h)
    records: list

    def split(self, name: str) -> list:
        if name not in SPLITS:
            raise DatasetError(f"unknown split {name!r}; expected one of {SPLITS}")
        return [r for r in self.records if r.split == name]

    @property
    def image_w(self) -> int:
        return self.image_size[0]

    @property
    def image_h(self) -> int:
        return self.image_size[1]


def _resolve(root: Path, rel: str, seq_id: str) -> str:
    path = root / rel
    if not path.is_file():
        raise DatasetError(f"{seq_id}: referenced file missing: {path}")
    return str(path)


def load_manifest(path) -> Dataset:
    """Load and validate a manifest.json (or the directory that contains one)."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.is_file():
        raise DatasetError(f"manifest not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DatasetError(f"{path}: invalid JSON: {e}") from e

    root = path.parent
    names = raw.get("joint_names")
    if names != list(JOINT_INDEX):
        raise DatasetError(f"{path}: joint_names missing or not the canonical 18-name table")
    try:
        edges = tuple((JOINT_INDEX[p], JOINT_INDEX[c]) for p, c in raw["limbs"])
        tree = LimbTree(edges)
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetError(f"{path}: bad limb table: {e}") from e

    stride = float(raw.get("stride", 0))
    if stride <= 0:
        raise DatasetError(f"{path}: stride must be positive")
    image_size = tuple(raw.get("image_size", ()))
    if len(image_size) != 2:
        raise DatasetError(f"{path}: image_size must be [w, h]")

    records = []
    for rec in raw.get("sequences", []):
        seq_id = rec.get("id", "<missing id>")
        action = rec.get("action")
        if action not in ACTIONS:
            raise DatasetError(f"{seq_id}: action {action!r} not in {ACTIONS}")
        split = rec.get("split")
        if split not in SPLITS:
            raise DatasetError(f"{seq_id}: split {split!r} not in {SPLITS}")
        frames = rec.get("frames", [])
        if len(frames) != 3:
            raise DatasetError(f"{seq_id}: expected 3 frames, got {len(frames)}")
        joints = np.zeros((3, NUM_JOINTS, 3), dtype=np.float64)
        conf_paths, paf_paths = [], []
        for k, frame in enumerate(frames):
            j = np.asarray(frame.get("joints", []), dtype=np.float64)
            if j.shape != (NUM_JOINTS, 3):
                raise DatasetError(f"{seq_id}: frame {k} joints must be {NUM_JOINTS}x3")
            joints[k] = j
            if frame.get("confidence"):
                conf_paths.append(_resolve(root, frame["confidence"], seq_id))
                paf_paths.append(_resolve(root, frame["pafs"], seq_id))
        flows = rec.get("flows", [])
        if len(flows) != 2:
            raise DatasetError(f"{seq_id}: expected 2 flow files, got {len(flows)}")
        flow_paths = [_resolve(root, f, seq_id) for f in flows]
        has_maps = len(conf_paths) == 3
        records.append(
            SequenceRecord(
                seq_id=seq_id,
                action=action,
                split=split,
                joints=joints,
                flow_paths=flow_paths,
                confidence_paths=conf_paths if has_maps else None,
                paf_paths=paf_paths if has_maps else None,
            )
        )
    if not records:
        raise DatasetError(f"{path}: manifest lists no sequences")
    return Dataset(
        root=root,
        joint_names=names,
        limb_tree=tree,
        stride=stride,
        image_size=(int(image_size[0]), int(image_size[1])),
        records=records,
    )

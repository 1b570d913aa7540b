"""The two-stream action classifier and its training loop.

Flow branch: three conv/relu/maxpool blocks over the 4-channel 56x56 flow map,
flattened into two relu dense layers. Its 64-dim output concatenates with the
latent joint vector and feeds four fusion dense layers, the first three with
sigmoid, the last with softmax over the four actions; dropout sits after the
second (50-unit) fusion layer.

Training: SGD with momentum 0.9, batch 2, constant lr 1e-2, 30 epochs, every
epoch checkpointed, the top-k by validation accuracy kept. All randomness
(shuffling, augmentation, dropout) derives from one seed, so identical seeds
give byte-identical checkpoints.
"""

from __future__ import annotations

import json
import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, augment_sequence
from .dataset import ACTIONS, Dataset
from .errors import DatasetError, DegenerateHeadError
from .features import featurize_sequence, sequence_feature_length
from .nn import (
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    MaxPool2,
    ReLU,
    Sequential,
    SgdMomentum,
    Sigmoid,
    Softmax,
    cross_entropy_loss,
)
from .pose import decode_sequence
from .tensor import read_tensor, resize_bilinear, write_tensor

logger = logging.getLogger(__name__)

FLOW_INPUT_HW = (56, 56)
CHECKPOINT_FORMAT = 1


@dataclass
class ModelConfig:
    use_flow: bool = True        # +OF / -OF
    use_stick: bool = True       # +ST / -ST
    dropout_rate: float = 0.3
    seed: int = 0
    conv_channels: tuple = (16, 32, 64)
    flow_dense: tuple = (256, 64)
    fusion_widths: tuple = (100, 50, 20, 4)
    flow_hw: tuple = FLOW_INPUT_HW   # smaller only for reduced verification nets

    def __post_init__(self):
        self.conv_channels = tuple(self.conv_channels)
        self.flow_dense = tuple(self.flow_dense)
        self.fusion_widths = tuple(self.fusion_widths)
        self.flow_hw = tuple(self.flow_hw)
        if len(self.fusion_widths) != 4 or self.fusion_widths[-1] != len(ACTIONS):
            raise ValueError(f"fusion needs 4 dense layers ending in {len(ACTIONS)}, got {self.fusion_widths}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not self.conv_channels or not self.flow_dense:
            raise ValueError("flow branch needs at least one conv and one dense layer")
        shrink = 2 ** len(self.conv_channels)
        if self.flow_hw[0] % shrink or self.flow_hw[1] % shrink:
            raise ValueError(f"flow input {self.flow_hw} must be divisible by {shrink} for the pool stack")

    @property
    def latent_dim(self) -> int:
        return sequence_feature_length(self.use_stick)

    @property
    def flow_feature_dim(self) -> int:
        return self.flow_dense[-1]

    def to_dict(self):
        return {
            "use_flow": self.use_flow,
            "use_stick": self.use_stick,
            "dropout_rate": self.dropout_rate,
            "seed": self.seed,
            "conv_channels": list(self.conv_channels),
            "flow_dense": list(self.flow_dense),
            "fusion_widths": list(self.fusion_widths),
            "flow_hw": list(self.flow_hw),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            use_flow=bool(d["use_flow"]),
            use_stick=bool(d["use_stick"]),
            dropout_rate=float(d["dropout_rate"]),
            seed=int(d["seed"]),
            conv_channels=tuple(d["conv_channels"]),
            flow_dense=tuple(d["flow_dense"]),
            fusion_widths=tuple(d["fusion_widths"]),
            flow_hw=tuple(d.get("flow_hw", FLOW_INPUT_HW)),
        )


@dataclass
class TrainConfig:
    batch_size: int = 2
    momentum: float = 0.9
    lr: float = 1e-2
    epochs: int = 30
    keep_top: int = 3
    weight_decay: float = 0.0
    val_joints: str = "gt"       # "gt" or "pred" (decode validation poses from maps)
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if self.batch_size < 1 or self.lr <= 0 or self.keep_top < 1 or self.epochs < 0:
            raise ValueError("batch_size/lr/keep_top must be positive, epochs >= 0")
        if self.val_joints not in ("gt", "pred"):
            raise ValueError(f"val_joints must be 'gt' or 'pred', got {self.val_joints!r}")

    def to_dict(self):
        return {
            "batch_size": self.batch_size,
            "momentum": self.momentum,
            "lr": self.lr,
            "epochs": self.epochs,
            "keep_top": self.keep_top,
            "weight_decay": self.weight_decay,
            "val_joints": self.val_joints,
            "augment": self.augment.to_dict(),
        }


class TwoStreamNet:
    """Flow conv branch (optional) fused with the latent vector by dense layers."""

    def __init__(self, cfg: ModelConfig, flow_net, fusion_net):
        self.cfg = cfg
        self.flow_net = flow_net
        self.fusion_net = fusion_net

    def forward(self, latent, flow=None, training=False, rng=None):
        latent = np.asarray(latent)
        if latent.ndim != 2 or latent.shape[1] != self.cfg.latent_dim:
            raise ValueError(f"latent input must be [B, {self.cfg.latent_dim}], got {latent.shape}")
        if self.flow_net is not None:
            if flow is None:
                raise ValueError("model was built with use_flow=True but got no flow input")
            feat, flow_cache = self.flow_net.forward(flow, training=training, rng=rng)
            fused = np.concatenate([feat, latent.astype(feat.dtype, copy=False)], axis=1)
        else:
            fused, flow_cache = latent, None
        probs, fusion_cache = self.fusion_net.forward(fused, training=training, rng=rng)
        return probs, (flow_cache, fusion_cache)

    def backward_from_logits(self, grad_logits, cache):
        flow_cache, fusion_cache = cache
        grad_fused, grads = self.fusion_net.backward_from_logits(grad_logits, fusion_cache)
        if self.flow_net is not None:
            grad_feat = grad_fused[:, : self.cfg.flow_feature_dim]
            _, flow_grads = self.flow_net.backward(grad_feat, flow_cache)
            grads.update(flow_grads)
        return grad_fused, grads

    def parameters(self):
        out = []
        if self.flow_net is not None:
            out.extend(self.flow_net.parameters())
        out.extend(self.fusion_net.parameters())
        return out

    def cast_(self, dtype):
        if self.flow_net is not None:
            self.flow_net.cast_(dtype)
        self.fusion_net.cast_(dtype)

    def layer_specs(self):
        specs = self.flow_net.specs() if self.flow_net is not None else []
        return specs + self.fusion_net.specs()


def build_model(cfg: ModelConfig) -> TwoStreamNet:
    """Construct the network with seeded Glorot-uniform initialization."""
    rng = np.random.default_rng(cfg.seed)
    flow_net = None
    if cfg.use_flow:
        layers = []
        in_ch = 4
        for ch in cfg.conv_channels:
            layers += [Conv2D(in_ch, ch, kernel=3, stride=1, padding=1, rng=rng), ReLU(), MaxPool2()]
            in_ch = ch
        layers.append(Flatten())
        shrink = 2 ** len(cfg.conv_channels)
        d_in = (cfg.flow_hw[0] // shrink) * (cfg.flow_hw[1] // shrink) * cfg.conv_channels[-1]
        for d in cfg.flow_dense:
            layers += [Dense(d_in, d, rng=rng), ReLU()]
            d_in = d
        flow_net = Sequential(layers)

    fusion_in = (cfg.flow_feature_dim if cfg.use_flow else 0) + cfg.latent_dim
    w = cfg.fusion_widths
    fusion_layers = [
        Dense(fusion_in, w[0], rng=rng),
        Sigmoid(),
        Dense(w[0], w[1], rng=rng),
        Sigmoid(),
        Dropout(cfg.dropout_rate),
        Dense(w[1], w[2], rng=rng),
        Sigmoid(),
        Dense(w[2], w[3], rng=rng),
        Softmax(),
    ]
    offset = len(flow_net.layers) if flow_net is not None else 0
    return TwoStreamNet(cfg, flow_net, Sequential(fusion_layers, name_offset=offset))


def prepare_flow_input(flow12, flow23) -> np.ndarray:
    """Stack two flow fields into a 4-channel map resized to 56x56.

    Displacement values rescale with the grid so they stay consistent.
    """
    f12 = np.asarray(flow12)
    f23 = np.asarray(flow23)
    if f12.shape != f23.shape or f12.ndim != 3 or f12.shape[2] != 2:
        raise ValueError(f"flow fields must share an (H, W, 2) shape, got {f12.shape} and {f23.shape}")
    stacked = np.concatenate([f12, f23], axis=2)
    out = resize_bilinear(stacked, FLOW_INPUT_HW[0], FLOW_INPUT_HW[1], scale_values_as_displacements=True)
    return out.astype(np.float32)


def predict(net: TwoStreamNet, latent, flow=None) -> np.ndarray:
    """Deterministic class probabilities with dropout disabled.

    Accepts one latent vector (with one flow map) or a batch of each.
    """
    latent = np.asarray(latent, dtype=np.float32)
    single = latent.ndim == 1
    if single:
        latent = latent[None, :]
        if flow is not None:
            flow = np.asarray(flow, dtype=np.float32)[None, ...]
    elif flow is not None:
        flow = np.asarray(flow, dtype=np.float32)
    probs, _ = net.forward(latent, flow, training=False)
    return probs[0] if single else probs


# --- checkpoints ---------------------------------------------------------


@dataclass
class CheckpointInfo:
    epoch: int
    val_accuracy: float
    path: str

    def to_dict(self):
        return {"epoch": self.epoch, "val_accuracy": self.val_accuracy, "path": self.path}


def save_checkpoint(net: TwoStreamNet, path, epoch: int, val_accuracy: float) -> None:
    """Write a checkpoint directory: manifest.json plus one .htsr per parameter."""
    path = Path(path)
    if path.exists():
        shutil.rmtree(path)
    path.mkdir(parents=True)
    params = net.parameters()
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "epoch": epoch,
        "val_accuracy": val_accuracy,
        "seed": net.cfg.seed,
        "model_cfg": net.cfg.to_dict(),
        "layers": net.layer_specs(),
        "parameters": [{"name": name, "shape": list(arr.shape)} for name, arr in params],
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    for name, arr in params:
        write_tensor(arr, path / f"{name}.htsr")


def load_checkpoint(path, expect_cfg: ModelConfig | None = None):
    """Rebuild a network from a checkpoint directory; returns (net, manifest dict)."""
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.is_file():
        raise ValueError(f"not a checkpoint directory: {path}")
    manifest = json.loads(manifest_path.read_text())
    cfg = ModelConfig.from_dict(manifest["model_cfg"])
    if expect_cfg is not None and cfg.to_dict() != expect_cfg.to_dict():
        raise ValueError(f"checkpoint {path} was trained with a different model config")
    net = build_model(cfg)
    for name, arr in net.parameters():
        stored = read_tensor(path / f"{name}.htsr")
        if tuple(stored.shape) != tuple(arr.shape):
            raise ValueError(f"{path}: parameter {name} has shape {stored.shape}, expected {arr.shape}")
        arr[...] = stored
    return net, manifest


# --- training ------------------------------------------------------------


def _one_hot(indices, k=len(ACTIONS)):
    out = np.zeros((len(indices), k), dtype=np.float32)
    out[np.arange(len(indices)), indices] = 1.0
    return out


def _load_examples(dataset: Dataset, split: str, need_flow: bool):
    """Materialize a split: (record, poses, raw flows) tuples."""
    records = dataset.split(split)
    if not records:
        raise DatasetError(f"dataset has no {split!r} sequences")
    out = []
    for rec in records:
        flows = rec.load_flows() if need_flow else None
        out.append((rec, rec.poses(), flows))
    return out


def _latent_or_none(poses, dataset, use_stick, counter):
    dims = [(dataset.image_w, dataset.image_h)] * 3
    try:
        return featurize_sequence(poses, dims, include_stick=use_stick)
    except DegenerateHeadError:
        counter["skipped"] += 1
        return None


def _eval_accuracy(net, examples) -> float:
    if not examples:
        return 0.0
    latents = np.stack([ex[0] for ex in examples]).astype(np.float32)
    flows = None
    if net.cfg.use_flow:
        flows = np.stack([ex[1] for ex in examples]).astype(np.float32)
    probs = predict(net, latents, flows)
    pred = probs.argmax(axis=1)
    gts = np.array([ex[2] for ex in examples])
    return float((pred == gts).mean())


def _prepare_eval_examples(dataset, records_with_data, model_cfg, counter, joints_from="gt"):
    """(latent, flow_input, label) triples for a non-augmented evaluation pass."""
    out = []
    for rec, poses, flows in records_with_data:
        if joints_from == "pred":
            maps = rec.load_maps(dataset.stride)
            poses = decode_sequence(maps, dataset.limb_tree)
        latent = _latent_or_none(poses, dataset, model_cfg.use_stick, counter)
        if latent is None:
            continue
        flow_input = prepare_flow_input(flows[0], flows[1]) if model_cfg.use_flow else None
        out.append((latent, flow_input, rec.label_index))
    return out


def train(dataset: Dataset, model_cfg: ModelConfig, train_cfg: TrainConfig, out_dir, seed: int = 0):
    """Train on augmented ground-truth joints; keep the top checkpoints by val accuracy.

    Every epoch shuffles from the seed, feeds each training sequence once,
    checkpoints, and scores the validation split (ground-truth joints by
    default, decoder predictions with val_joints='pred'). Returns the
    keep_top CheckpointInfo list ranked by accuracy (ties to earlier epoch).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if train_cfg.epochs == 0:
        return []

    counter = {"skipped": 0}
    train_data = _load_examples(dataset, "train", need_flow=model_cfg.use_flow)
    val_data = _load_examples(dataset, "val", need_flow=model_cfg.use_flow)
    val_examples = _prepare_eval_examples(dataset, val_data, model_cfg, counter, train_cfg.val_joints)

    net = build_model(model_cfg)
    opt = SgdMomentum(lr=train_cfg.lr, momentum=train_cfg.momentum, weight_decay=train_cfg.weight_decay)
    params = net.parameters()
    dims = [(dataset.image_w, dataset.image_h)] * 3

    history = []
    n = len(train_data)
    for epoch in range(1, train_cfg.epochs + 1):
        order = np.random.default_rng([seed, epoch, 0]).permutation(n)
        pos = 0
        step = 0
        while pos < n:
            batch_idx = order[pos : pos + train_cfg.batch_size]
            latents, flow_inputs, labels = [], [], []
            for j, di in enumerate(batch_idx):
                rec, poses, flows = train_data[di]
                aug_rng = np.random.default_rng([seed, epoch, 1, pos + j])
                aug_poses, aug_flows, _ = augment_sequence(
                    poses, flows if flows is not None else _NO_FLOWS, train_cfg.augment,
                    aug_rng, dataset.image_w, dataset.image_h,
                )
                latent = _latent_or_none(aug_poses, dataset, model_cfg.use_stick, counter)
                if latent is None:
                    continue
                latents.append(latent)
                labels.append(rec.label_index)
                if model_cfg.use_flow:
                    flow_inputs.append(prepare_flow_input(aug_flows[0], aug_flows[1]))
            pos += train_cfg.batch_size
            step += 1
            if not latents:
                continue
            x_latent = np.stack(latents).astype(np.float32)
            x_flow = np.stack(flow_inputs).astype(np.float32) if model_cfg.use_flow else None
            y = _one_hot(labels)
            drop_rng = np.random.default_rng([seed, epoch, 2, step])
            probs, cache = net.forward(x_latent, x_flow, training=True, rng=drop_rng)
            _, grad_logits = cross_entropy_loss(probs, y)
            _, grads = net.backward_from_logits(grad_logits, cache)
            opt.step(params, grads)

        acc = _eval_accuracy(net, val_examples)
        ckpt_path = out_dir / f"epoch_{epoch}.ckpt"
        save_checkpoint(net, ckpt_path, epoch, acc)
        history.append(CheckpointInfo(epoch=epoch, val_accuracy=acc, path=ckpt_path.name))
        logger.info("epoch %d/%d: val accuracy %.4f", epoch, train_cfg.epochs, acc)

    if counter["skipped"]:
        logger.warning("skipped %d sequences with degenerate head segments", counter["skipped"])

    kept = sorted(history, key=lambda c: (-c.val_accuracy, c.epoch))[: train_cfg.keep_top]
    ranking = {
        "model_cfg": model_cfg.to_dict(),
        "train_cfg": train_cfg.to_dict(),
        "seed": seed,
        "skipped_degenerate": counter["skipped"],
        "epochs": [c.to_dict() for c in history],
        "kept": [c.to_dict() for c in kept],
    }
    (out_dir / "ranking.json").write_text(json.dumps(ranking, indent=1, sort_keys=True))
    return kept


# Zero flow stand-ins so -OF training can still run the coupled augmentation.
_NO_FLOWS = [np.zeros((2, 2, 2), dtype=np.float32), np.zeros((2, 2, 2), dtype=np.float32)]

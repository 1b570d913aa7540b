"""Two-stream hockey action recognition from pose maps and optical flow.

Decodes single-person poses from part confidence maps and part affinity
fields, turns 3-frame pose sequences into latent joint feature vectors, and
classifies the sequence (forward / backward / passing / shooting) with a
small from-scratch neural network fusing the pose stream with a flow branch.
"""

from .augment import AugmentConfig, augment_sequence
from .dataset import ACTIONS, Dataset, load_manifest
from .errors import (
    DatasetError,
    DegenerateHeadError,
    HstreamError,
    TensorFormatError,
    TensorLengthError,
)
from .evaluate import classification_report, evaluate_checkpoints, pckh, pckh_report
from .features import featurize_frame, featurize_sequence, limb_angle, normalize_joints
from .model import (
    ModelConfig,
    TrainConfig,
    TwoStreamNet,
    build_model,
    load_checkpoint,
    predict,
    prepare_flow_input,
    save_checkpoint,
    train,
)
from .nn import cross_entropy_loss, gradient_check
from .pose import Candidate, PartMaps, assemble_pose, decode_sequence, extract_peaks, paf_line_integral
from .skeleton import (
    JOINT_NAMES,
    NUM_JOINTS,
    LimbTree,
    Pose,
    default_limb_tree,
    mirror_pose,
    parse_limb_file,
)
from .synth import SynthConfig, gen_action_sequence, gen_dataset, render_maps
from .tensor import hflip, read_tensor, resize_bilinear, write_tensor

__version__ = "0.1.0"

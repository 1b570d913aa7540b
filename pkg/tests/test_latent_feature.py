import math

import numpy as np
import pytest

from hstream.errors import DegenerateHeadError
from hstream.features import (
    ANGLE_TRIPLES,
    featurize_frame,
    featurize_sequence,
    frame_angles,
    limb_angle,
    normalize_joints,
)
from hstream.skeleton import JOINT_INDEX, NUM_JOINTS, Pose, mirror_pose
from hstream.synth import SynthConfig, random_pose

from helpers import mirror_latent_vector

W = H = 368
DIMS = [(W, H)] * 3


def sample_pose(seed=0):
    return random_pose(SynthConfig(), np.random.default_rng(seed))


class TestNormalizeJoints:
    def test_direct_arithmetic(self):
        xy = np.zeros((NUM_JOINTS, 2))
        xy[0] = (100, 100)   # head_top
        xy[1] = (100, 110)   # upper_neck, L = 10
        xy[JOINT_INDEX["pelvis"]] = (184, 284)
        pose = Pose.all_valid(xy)
        out = normalize_joints(pose, W, H)
        assert out[JOINT_INDEX["pelvis"]] == pytest.approx((0.0, 10.0))

    def test_scaling_about_center_cancels(self):
        pose = sample_pose(1)
        out1 = normalize_joints(pose, W, H)
        scaled = pose.copy()
        center = np.array([W / 2, H / 2])
        scaled.xy = center + 2.0 * (scaled.xy - center)
        out2 = normalize_joints(scaled, W, H)
        assert np.abs(out1 - out2).max() < 1e-9

    def test_degenerate_head(self):
        pose = sample_pose(2)
        pose.xy[1] = pose.xy[0]
        with pytest.raises(DegenerateHeadError):
            normalize_joints(pose, W, H)

    def test_invalid_head_joint(self):
        pose = sample_pose(3)
        pose.valid[0] = False
        with pytest.raises(DegenerateHeadError):
            normalize_joints(pose, W, H)

    def test_invalid_joints_zeroed(self):
        pose = sample_pose(4)
        pose.valid[5] = False
        out = normalize_joints(pose, W, H)
        assert (out[5] == 0.0).all()


class TestLimbAngle:
    def test_right_angle(self):
        assert limb_angle((1, 0), (0, 0), (0, 1)) == pytest.approx(math.pi / 2)

    def test_collinear_same_side(self):
        assert limb_angle((1, 0), (0, 0), (2, 0)) == pytest.approx(0.0)

    def test_degenerate_segment(self):
        assert limb_angle((0, 0), (0, 0), (1, 1)) == 0.0

    def test_opposite_rays(self):
        assert limb_angle((-1, 0), (0, 0), (1, 0)) == pytest.approx(math.pi)

    def test_range(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            a, b, c = rng.normal(size=(3, 2))
            ang = limb_angle(a, b, c)
            assert 0.0 <= ang <= math.pi


class TestFeaturizeFrame:
    def test_length_with_stick(self):
        vec = featurize_frame(sample_pose(), W, H, include_stick=True)
        assert vec.shape == (52,)  # 18*2 + 16

    def test_length_without_stick(self):
        vec = featurize_frame(sample_pose(), W, H, include_stick=False)
        assert vec.shape == (48,)  # 16*2 + 16

    def test_stick_rows_removed_not_zeroed(self):
        pose = sample_pose(7)
        with_stick = featurize_frame(pose, W, H, True)
        without = featurize_frame(pose, W, H, False)
        assert np.allclose(without[:32], with_stick[:32])
        assert np.allclose(without[32:], with_stick[36:])

    def test_rotation_leaves_angles(self):
        pose = sample_pose(8)
        before = featurize_frame(pose, W, H)
        theta = math.radians(30)
        rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        center = np.array([W / 2, H / 2])
        rotated = pose.copy()
        rotated.xy = center + (rotated.xy - center) @ rot.T
        after = featurize_frame(rotated, W, H)
        assert np.abs(after[36:] - before[36:]).max() < 1e-6
        assert np.abs(after[:36] - before[:36]).max() > 0.01  # coords did move


class TestFeaturizeSequence:
    def test_156_with_stick(self):
        poses = [sample_pose(s) for s in range(3)]
        vec = featurize_sequence(poses, DIMS, include_stick=True)
        assert vec.shape == (156,)

    def test_144_without_stick(self):
        poses = [sample_pose(s) for s in range(3)]
        vec = featurize_sequence(poses, DIMS, include_stick=False)
        assert vec.shape == (144,)

    def test_rejects_wrong_frame_count(self):
        poses = [sample_pose(s) for s in range(2)]
        with pytest.raises(ValueError):
            featurize_sequence(poses, DIMS[:2], include_stick=True)

    def test_temporal_order(self):
        poses = [sample_pose(s) for s in range(3)]
        vec = featurize_sequence(poses, DIMS)
        for f in range(3):
            frame_vec = featurize_frame(poses[f], W, H)
            assert np.allclose(vec[52 * f : 52 * (f + 1)], frame_vec)


class TestInvariances:
    def test_scale_invariance(self):
        poses = [sample_pose(s) for s in range(3)]
        base = featurize_sequence(poses, DIMS)
        center = np.array([W / 2, H / 2])
        for s in (0.5, 2.0):
            scaled = []
            for p in poses:
                q = p.copy()
                q.xy = center + s * (q.xy - center)
                scaled.append(q)
            vec = featurize_sequence(scaled, DIMS)
            assert np.abs(vec - base).max() < 1e-6

    def test_angle_similarity_invariance(self):
        pose = sample_pose(9)
        base = frame_angles(pose)
        rng = np.random.default_rng(10)
        for _ in range(10):
            theta = rng.uniform(-math.pi, math.pi)
            s = rng.uniform(0.3, 3.0)
            t = rng.uniform(-50, 50, size=2)
            rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
            q = pose.copy()
            q.xy = s * (q.xy @ rot.T) + t
            assert np.abs(frame_angles(q) - base).max() < 1e-6

    def test_mirror_equivariance(self):
        poses = [sample_pose(s) for s in range(3)]
        base = featurize_sequence(poses, DIMS)
        mirrored = [mirror_pose(p, W) for p in poses]
        vec = featurize_sequence(mirrored, DIMS)
        assert np.abs(vec - mirror_latent_vector(base)).max() < 1e-9

    def test_mirror_equivariance_without_stick(self):
        poses = [sample_pose(s + 20) for s in range(3)]
        base = featurize_sequence(poses, DIMS, include_stick=False)
        mirrored = [mirror_pose(p, W) for p in poses]
        vec = featurize_sequence(mirrored, DIMS, include_stick=False)
        assert np.abs(vec - mirror_latent_vector(base, include_stick=False)).max() < 1e-9

    def test_mirror_preserves_angle_multiset(self):
        pose = sample_pose(11)
        a = np.sort(frame_angles(pose))
        b = np.sort(frame_angles(mirror_pose(pose, W)))
        assert np.abs(a - b).max() < 1e-9


class TestAngleTable:
    def test_sixteen_rows_no_stick(self):
        assert len(ANGLE_TRIPLES) == 16
        stick = {JOINT_INDEX["stick_top"], JOINT_INDEX["stick_end"]}
        for triple in ANGLE_TRIPLES:
            assert not (set(triple) & stick)

    def test_first_row_is_head_chain(self):
        assert ANGLE_TRIPLES[0] == (JOINT_INDEX["head_top"], JOINT_INDEX["upper_neck"], JOINT_INDEX["thorax"])

    def test_last_row_is_hip_spread(self):
        assert ANGLE_TRIPLES[15] == (JOINT_INDEX["l_hip"], JOINT_INDEX["pelvis"], JOINT_INDEX["r_hip"])


class TestAngleFile:
    def test_round_trip(self, tmp_path):
        from hstream.features import parse_angle_file, write_angle_file

        path = tmp_path / "angles.txt"
        write_angle_file(path)
        assert len(path.read_text().strip().splitlines()) == 16
        assert parse_angle_file(path) == ANGLE_TRIPLES

    def test_rejects_stick_joint(self, tmp_path):
        from hstream.features import parse_angle_file

        path = tmp_path / "bad.txt"
        path.write_text("stick_top upper_neck thorax\n" * 16)
        with pytest.raises(ValueError):
            parse_angle_file(path)

    def test_rejects_short_table(self, tmp_path):
        from hstream.features import parse_angle_file

        path = tmp_path / "short.txt"
        path.write_text("head_top upper_neck thorax\n")
        with pytest.raises(ValueError):
            parse_angle_file(path)

import numpy as np
import pytest

from hstream.augment import AugmentConfig, IDENTITY_AUGMENT, augment_sequence
from hstream.skeleton import JOINT_INDEX
from hstream.synth import SynthConfig, gen_action_sequence

W = H = 368


def sample_sequence(seed=0, label="forward"):
    cfg = SynthConfig()
    poses, flows, _ = gen_action_sequence(label, cfg, np.random.default_rng(seed))
    return poses, flows


class TestIdentity:
    def test_identity_config_is_identity(self):
        poses, flows = sample_sequence()
        out_poses, out_flows, flipped = augment_sequence(
            poses, flows, IDENTITY_AUGMENT, np.random.default_rng(0), W, H
        )
        assert not flipped
        for a, b in zip(out_poses, poses):
            assert np.allclose(a.xy, b.xy)
        for a, b in zip(out_flows, flows):
            assert (np.asarray(a) == np.asarray(b)).all()


class TestFlip:
    def forced_flip(self):
        return AugmentConfig(flip_prob=1.0, scale_range=(1.0, 1.0), rotation_deg=0.0, joint_jitter_sigma=0.0)

    def test_wrist_swap_and_mirror(self):
        poses, flows = sample_sequence(1)
        lw, rw = JOINT_INDEX["l_wrist"], JOINT_INDEX["r_wrist"]
        poses[0].xy[lw] = (10.0, 0.0)
        poses[0].xy[rw] = (20.0, 0.0)
        out_poses, _, flipped = augment_sequence(
            poses, flows, self.forced_flip(), np.random.default_rng(0), W, H
        )
        assert flipped
        # l_wrist' carries the OLD r_wrist position, mirrored: 368 - 20 = 348
        assert out_poses[0].xy[lw] == pytest.approx((348.0, 0.0))
        assert out_poses[0].xy[rw] == pytest.approx((358.0, 0.0))

    def test_flip_negates_flow_x(self):
        poses, flows = sample_sequence(2)
        flows = [np.asarray(f) for f in flows]
        _, out_flows, _ = augment_sequence(poses, flows, self.forced_flip(), np.random.default_rng(0), W, H)
        for fin, fout in zip(flows, out_flows):
            assert np.allclose(fout[:, :, 0], -fin[:, ::-1, 0])
            assert np.allclose(fout[:, :, 1], fin[:, ::-1, 1])

    def test_double_flip_recovers_exactly_on_pixel_grid(self):
        # Integer pixel coordinates reflect exactly; w - x is lossless there.
        poses, flows = sample_sequence(3)
        for p in poses:
            p.xy = np.round(p.xy)
        cfg = self.forced_flip()
        p1, f1, _ = augment_sequence(poses, flows, cfg, np.random.default_rng(0), W, H)
        p2, f2, _ = augment_sequence(p1, f1, cfg, np.random.default_rng(1), W, H)
        for a, b in zip(p2, poses):
            assert (a.xy == b.xy).all()
            assert (a.valid == b.valid).all()
        for a, b in zip(f2, flows):
            assert (np.asarray(a) == np.asarray(b)).all()

    def test_double_flip_on_float_coords_within_ulp(self):
        poses, flows = sample_sequence(3)
        cfg = self.forced_flip()
        p1, f1, _ = augment_sequence(poses, flows, cfg, np.random.default_rng(0), W, H)
        p2, f2, _ = augment_sequence(p1, f1, cfg, np.random.default_rng(1), W, H)
        for a, b in zip(p2, poses):
            assert np.abs(a.xy - b.xy).max() < 1e-12
        for a, b in zip(f2, flows):
            assert (np.asarray(a) == np.asarray(b)).all()

    def test_flip_coupling_never_one_without_other(self):
        # instrumented: whenever joints mirror, flows must hflip-negate, and conversely
        cfg = AugmentConfig(flip_prob=0.5, scale_range=(1.0, 1.0), rotation_deg=0.0, joint_jitter_sigma=0.0)
        poses, flows = sample_sequence(4)
        flows = [np.asarray(f) for f in flows]
        for trial in range(40):
            rng = np.random.default_rng(trial)
            out_poses, out_flows, flipped = augment_sequence(poses, flows, cfg, rng, W, H)
            joints_mirrored = not np.allclose(out_poses[0].xy, poses[0].xy)
            flows_flipped = not np.allclose(out_flows[0], flows[0])
            assert joints_mirrored == flipped
            assert flows_flipped == flipped


class TestRandomness:
    def test_same_seed_same_stream(self):
        poses, flows = sample_sequence(5)
        cfg = AugmentConfig()
        a = augment_sequence(poses, flows, cfg, np.random.default_rng(77), W, H)
        b = augment_sequence(poses, flows, cfg, np.random.default_rng(77), W, H)
        for pa, pb in zip(a[0], b[0]):
            assert (pa.xy == pb.xy).all()
        assert a[2] == b[2]

    def test_scale_rotation_shared_across_frames(self):
        poses, flows = sample_sequence(6)
        base = [p.copy() for p in poses]
        cfg = AugmentConfig(flip_prob=0.0, scale_range=(0.8, 1.2), rotation_deg=15.0, joint_jitter_sigma=0.0)
        out_poses, _, _ = augment_sequence(poses, flows, cfg, np.random.default_rng(3), W, H)
        # the same similarity transform applies to every frame: recover it from
        # frame 0 and check it predicts frames 1 and 2
        center = np.array([W / 2, H / 2])
        src = base[0].xy - center
        dst = out_poses[0].xy - center
        scale = np.linalg.norm(dst[0]) / np.linalg.norm(src[0])
        for f in (1, 2):
            src_f = base[f].xy - center
            dst_f = out_poses[f].xy - center
            assert np.linalg.norm(dst_f[0]) / np.linalg.norm(src_f[0]) == pytest.approx(scale, rel=1e-9)

    def test_jitter_statistics(self):
        poses, flows = sample_sequence(7)
        cfg = AugmentConfig(flip_prob=0.0, scale_range=(1.0, 1.0), rotation_deg=0.0, joint_jitter_sigma=2.0)
        deltas = []
        for trial in range(200):
            out_poses, _, _ = augment_sequence(poses, flows, cfg, np.random.default_rng(trial), W, H)
            deltas.append(out_poses[0].xy - poses[0].xy)
        d = np.concatenate(deltas).ravel()
        assert abs(d.mean()) < 0.05
        assert abs(d.std() - 2.0) < 0.1


class TestConfigValidation:
    def test_rejects_bad_flip_prob(self):
        with pytest.raises(ValueError):
            AugmentConfig(flip_prob=1.5)

    def test_rejects_bad_scale_range(self):
        with pytest.raises(ValueError):
            AugmentConfig(scale_range=(0.0, 1.0))

    def test_rejects_negative_sigma(self):
        with pytest.raises(ValueError):
            AugmentConfig(joint_jitter_sigma=-1.0)

import math

import numpy as np
import pytest

from semidirect.image import build_pyramid, sample_bilinear
from semidirect.synth import (SequenceSpec, default_scene, generate_sequence,
                              octagon_room, render, single_wall, trajectory_for)


@pytest.fixture(scope="module")
def orbit_setup():
    spec = SequenceSpec(kind="orbit-loopy", n_frames=100, seed=1)
    rng = np.random.default_rng(spec.seed)
    return spec, default_scene(spec, rng), trajectory_for(spec), spec.intrinsics()


class TestRender:
    def test_same_pose_zero_noise_identical(self, orbit_setup):
        _, scene, poses, cam = orbit_setup
        a, _ = render(scene, poses[3], cam)
        b, _ = render(scene, poses[3], cam)
        assert np.array_equal(a.intensities, b.intensities)

    def test_brightness_offset_is_exact(self, orbit_setup):
        _, scene, poses, cam = orbit_setup
        a, _ = render(scene, poses[0], cam, b=0.0)
        b, _ = render(scene, poses[0], cam, b=10.0)
        assert np.allclose(b.intensities - a.intensities, 10.0, atol=1e-9)

    def test_brightness_transform_lossless(self, orbit_setup):
        _, scene, poses, cam = orbit_setup
        base, _ = render(scene, poses[0], cam)
        warped, _ = render(scene, poses[0], cam, exposure=1.1, a=0.04, b=5.0)
        corrected = (warped.intensities - 5.0) / (1.1 * math.exp(0.04))
        assert np.allclose(corrected, base.intensities, atol=1e-9)

    def test_depths_satisfy_plane_equations(self, orbit_setup):
        _, scene, poses, cam = orbit_setup
        _, idepth = render(scene, poses[7], cam)
        pose = poses[7]
        c = pose.camera_center()
        ys, xs = np.nonzero(idepth > 0)
        sel = slice(None, None, 97)
        dirs_cam = np.stack([(xs[sel] - cam.cx) / cam.fx,
                             (ys[sel] - cam.cy) / cam.fy,
                             np.ones(len(xs[sel]))], axis=-1)
        pts = c + (dirs_cam / idepth[ys[sel], xs[sel]][:, None]) @ pose.R
        best = np.full(len(pts), np.inf)
        for plane in scene.planes:
            n = plane.normal
            best = np.minimum(best, np.abs((pts - plane.origin) @ n))
        assert best.max() < 1e-9

    def test_photoconsistency(self, orbit_setup):
        _, scene, poses, cam = orbit_setup
        sigma = 1.0
        i0, d0 = render(scene, poses[0], cam, noise_sigma=sigma,
                        rng=np.random.default_rng(7))
        i5, _ = render(scene, poses[5], cam, noise_sigma=sigma,
                       rng=np.random.default_rng(8))
        T_rel = poses[5] @ poses[0].inverse()
        ys, xs = np.mgrid[0:cam.height, 0:cam.width]
        valid = d0 > 0
        X0 = np.stack([(xs - cam.cx) / cam.fx, (ys - cam.cy) / cam.fy,
                       np.ones_like(xs, float)], -1) / np.maximum(d0, 1e-9)[..., None]
        X5 = X0 @ T_rel.R.T + T_rel.t
        z = np.maximum(X5[..., 2], 1e-9)
        u5 = cam.fx * X5[..., 0] / z + cam.cx
        v5 = cam.fy * X5[..., 1] / z + cam.cy
        valid &= ((X5[..., 2] > 0.1) & (u5 >= 1) & (u5 <= cam.width - 2)
                  & (v5 >= 1) & (v5 <= cam.height - 2))
        pyr5 = build_pyramid(i5, 1)
        vy, vx = np.nonzero(valid)
        diffs = []
        for y, x in zip(vy[::5], vx[::5]):
            s = sample_bilinear(pyr5, 0, u5[y, x], v5[y, x])
            diffs.append(s[0] - i0.intensities[y, x])
        diffs = np.abs(np.array(diffs))
        frac = (diffs <= 3.0 * math.sqrt(2.0) * sigma).mean()
        assert frac >= 0.99


class TestTrajectories:
    def test_orbit_closes(self):
        spec = SequenceSpec(kind="orbit-loopy", n_frames=100)
        poses = trajectory_for(spec)
        r = 0.55
        gap = np.linalg.norm(poses[0].camera_center() - poses[-1].camera_center())
        assert gap < 0.01 * r

    def test_straight_directions_aligned(self):
        spec = SequenceSpec(kind="straight-exploratory", n_frames=50)
        poses = trajectory_for(spec)
        centers = np.array([p.camera_center() for p in poses])
        steps = np.diff(centers, axis=0)
        steps /= np.linalg.norm(steps, axis=1, keepdims=True)
        cosines = steps[1:] @ steps[0]
        assert np.all(np.degrees(np.arccos(np.clip(cosines, -1, 1))) < 5.0)

    def test_figure_eight_revisits(self):
        spec = SequenceSpec(kind="figure-eight-with-revisit", n_frames=80)
        poses = trajectory_for(spec)
        c = np.array([p.camera_center() for p in poses])
        assert np.linalg.norm(c[0] - c[-1]) < 1e-9
        mid = len(c) // 2
        assert np.linalg.norm(c[0] - c[mid]) < 0.05

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            trajectory_for(SequenceSpec(kind="spiral", n_frames=10))


class TestGenerateSequence:
    def test_deterministic_bit_identical(self, tmp_path):
        spec = SequenceSpec(kind="straight-exploratory", n_frames=4, seed=11,
                            intensity_sigma=0.8)
        a_dir, b_dir = tmp_path / "a", tmp_path / "b"
        generate_sequence(spec, out_dir=a_dir, keep_frames=False)
        generate_sequence(spec, out_dir=b_dir, keep_frames=False)
        for rel in ["calib.txt", "times.txt", "groundtruth.csv",
                    "images/000002.png", "depths/000002.npy"]:
            assert (a_dir / rel).read_bytes() == (b_dir / rel).read_bytes()

    def test_dataset_layout(self, tmp_path):
        spec = SequenceSpec(kind="orbit-loopy", n_frames=3, seed=2,
                            exposure_jitter=0.05)
        generate_sequence(spec, out_dir=tmp_path, keep_frames=False)
        times = (tmp_path / "times.txt").read_text().strip().splitlines()
        assert len(times) == 3
        assert len(times[0].split()) == 3  # exposure column present
        calib = (tmp_path / "calib.txt").read_text().split()
        assert len(calib) == 6
        gt = (tmp_path / "groundtruth.csv").read_text().splitlines()
        assert gt[0].startswith("#")
        assert len(gt) == 4

    def test_exits_scene_raises(self):
        spec = SequenceSpec(kind="straight-exploratory", n_frames=5, seed=3,
                            extent=40.0)
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError, match="visibility"):
            generate_sequence(spec, scene=single_wall(rng), keep_frames=False)

    def test_intensities_in_range(self, orbit_setup):
        _, scene, poses, cam = orbit_setup
        img, _ = render(scene, poses[0], cam, noise_sigma=2.0,
                        rng=np.random.default_rng(0))
        assert img.intensities.min() >= 0.0
        assert img.intensities.max() <= 255.0

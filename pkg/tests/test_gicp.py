import numpy as np
import pytest

from radarnav.errors import NotConverged
from radarnav.gicp import GicpConfig, relative_pose_gicp
from radarnav.manifold import RigidTransform, rot_z, rotation_angle, so3_exp


def structured_cloud(rng, n=400):
    """Two walls and a ground patch: well-constrained in all 6 DOF."""
    ground = rng.uniform([-6, -6, 0], [6, 6, 0.05], (n // 2, 3))
    wall_a = rng.uniform([-6, 5.8, 0], [6, 6.0, 3.0], (n // 4, 3))
    wall_b = rng.uniform([5.8, -6, 0], [6.0, 6, 3.0], (n - n // 2 - n // 4, 3))
    return np.vstack([ground, wall_a, wall_b])


class TestGicp:
    def test_identity_on_same_cloud(self, rng):
        cloud = structured_cloud(rng)
        result = relative_pose_gicp(cloud, cloud, RigidTransform())
        assert result.fitness == pytest.approx(1.0)
        assert np.linalg.norm(result.transform.translation) < 1e-9
        assert rotation_angle(result.transform.rotation) < 1e-9

    def test_recovers_known_transform(self, rng):
        cloud = structured_cloud(rng)
        true = RigidTransform(rot_z(np.deg2rad(8.0)), [0.6, -0.4, 0.15])
        target = true.apply(cloud)
        init = RigidTransform(rot_z(np.deg2rad(4.0)), [0.0, 0.0, 0.0])
        result = relative_pose_gicp(cloud, target, init)
        t_err = np.linalg.norm(result.transform.translation
                               - true.translation)
        r_err = rotation_angle(result.transform.rotation.T @ true.rotation)
        assert t_err < 0.05
        assert np.rad2deg(r_err) < 0.5
        assert result.fitness > 0.9

    def test_exact_init_machine_precision(self, rng):
        cloud = structured_cloud(rng)
        true = RigidTransform(so3_exp([0.02, -0.03, 0.3]), [1.0, 0.5, -0.2])
        target = true.apply(cloud)
        result = relative_pose_gicp(cloud, target, true.copy())
        t_err = np.linalg.norm(result.transform.translation
                               - true.translation)
        r_err = rotation_angle(result.transform.rotation.T @ true.rotation)
        assert t_err < 1e-3
        assert np.rad2deg(r_err) < 0.01

    def test_information_matrix_spd(self, rng):
        cloud = structured_cloud(rng)
        result = relative_pose_gicp(cloud, cloud, RigidTransform())
        eigvals = np.linalg.eigvalsh(result.information)
        assert eigvals[0] > 0.0

    def test_non_overlapping_rejected(self, rng):
        cloud_a = structured_cloud(rng)
        cloud_b = structured_cloud(rng) + np.array([500.0, 0.0, 0.0])
        config = GicpConfig(max_corr_dist=2.0)
        try:
            result = relative_pose_gicp(cloud_a, cloud_b, RigidTransform(),
                                        config)
            assert result.fitness < 0.3
        except NotConverged:
            pass  # also an acceptable rejection path

    def test_empty_cloud_rejected(self):
        with pytest.raises(ValueError):
            relative_pose_gicp(np.zeros((0, 3)), np.zeros((5, 3)),
                               RigidTransform())

import numpy as np
import pytest

from radarnav.scancontext import (KeyframeDescriptorDatabase,
                                  descriptor_distance, make_descriptor)
from radarnav.manifold import rot_z
from radarnav.types import RadarScan


def make_scan(points):
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    return RadarScan(0.0, points, np.zeros(len(points)), np.ones(len(points)))


def random_structured_scan(rng, n=250, max_range=40.0):
    """Clustered scan so the descriptor has structure."""
    centers = rng.uniform(-0.8, 0.8, (8, 3)) * [max_range, max_range, 0.0]
    centers[:, 2] = rng.uniform(0.5, 4.0, 8)
    pts = (centers[rng.integers(0, 8, n)]
           + rng.normal(0, 1.0, (n, 3)))
    return make_scan(pts)


class TestMakeDescriptor:
    def test_single_point_single_cell(self):
        r, theta, h = 10.0, 0.4, 2.5
        scan = make_scan([[r * np.cos(theta), r * np.sin(theta), h]])
        desc = make_descriptor(scan, max_range=40.0)
        nz = np.nonzero(desc.cells)
        assert len(nz[0]) == 1
        assert desc.cells[nz][0] == pytest.approx(h)

    def test_rotation_shifts_columns(self, rng):
        scan = random_structured_scan(rng)
        n_sectors = 60
        sector_width = 2 * np.pi / n_sectors
        rotated = make_scan(scan.positions @ rot_z(sector_width).T)
        a = make_descriptor(scan, 40.0, n_sectors=n_sectors)
        b = make_descriptor(rotated, 40.0, n_sectors=n_sectors)
        np.testing.assert_allclose(b.cells, np.roll(a.cells, 1, axis=1),
                                   atol=1e-12)

    def test_points_beyond_max_range_ignored(self):
        scan = make_scan([[100.0, 0.0, 3.0]])
        desc = make_descriptor(scan, max_range=40.0)
        assert not np.any(desc.cells)

    def test_empty_scan_rejected(self):
        with pytest.raises(ValueError):
            make_descriptor(RadarScan.empty(), 40.0)

    def test_ring_key_is_occupancy_ratio(self):
        scan = make_scan([[5.0, 0.0, 1.0], [0.0, 5.0, 2.0]])
        desc = make_descriptor(scan, max_range=40.0, n_rings=4, n_sectors=8)
        ring = int(5.0 / 40.0 * 4)
        assert desc.ring_key[ring] == pytest.approx(2 / 8)
        assert desc.ring_key.sum() == pytest.approx(2 / 8)


class TestDescriptorDistance:
    def test_identical_zero_distance(self, rng):
        scan = random_structured_scan(rng)
        desc = make_descriptor(scan, 40.0)
        dist, shift = descriptor_distance(desc, desc)
        assert dist == pytest.approx(0.0, abs=1e-12)
        assert shift == 0

    def test_recovers_circular_shift(self, rng):
        scan = random_structured_scan(rng)
        a = make_descriptor(scan, 40.0)
        sector_width = 2 * np.pi / 60
        rotated = make_scan(scan.positions @ rot_z(5 * sector_width).T)
        b = make_descriptor(rotated, 40.0)
        dist, shift = descriptor_distance(b, a)
        assert dist == pytest.approx(0.0, abs=1e-9)
        assert shift == 5

    def test_symmetric(self, rng):
        a = make_descriptor(random_structured_scan(rng), 40.0)
        b = make_descriptor(random_structured_scan(rng), 40.0)
        d_ab, _ = descriptor_distance(a, b)
        d_ba, _ = descriptor_distance(b, a)
        assert d_ab == pytest.approx(d_ba, abs=1e-12)

    def test_independent_scans_far_apart(self, rng):
        dists = []
        for _ in range(10):
            a = make_descriptor(random_structured_scan(rng), 40.0)
            b = make_descriptor(random_structured_scan(rng), 40.0)
            dists.append(descriptor_distance(a, b)[0])
        assert np.median(dists) > 0.3  # calibrates the 0.25 threshold

    def test_dimension_mismatch(self, rng):
        a = make_descriptor(random_structured_scan(rng), 40.0, n_rings=10)
        b = make_descriptor(random_structured_scan(rng), 40.0, n_rings=20)
        with pytest.raises(ValueError):
            descriptor_distance(a, b)


class TestDetectLoop:
    def test_empty_database(self, rng):
        db = KeyframeDescriptorDatabase(min_gap=5)
        desc = make_descriptor(random_structured_scan(rng), 40.0)
        assert db.detect_loop(desc, 100) is None

    def test_detects_revisit(self, rng):
        db = KeyframeDescriptorDatabase(threshold=0.25, min_gap=5)
        scans = [random_structured_scan(rng) for _ in range(20)]
        for i, s in enumerate(scans):
            db.add(i, make_descriptor(s, 40.0))
        # revisit of keyframe 3, slightly rotated
        revisit = make_scan(scans[3].positions @ rot_z(0.1).T
                            + rng.normal(0, 0.02, scans[3].positions.shape))
        hit = db.detect_loop(make_descriptor(revisit, 40.0), 40)
        assert hit is not None
        assert hit[0] == 3

    def test_min_gap_respected(self, rng):
        db = KeyframeDescriptorDatabase(threshold=0.9, min_gap=10)
        scan = random_structured_scan(rng)
        desc = make_descriptor(scan, 40.0)
        for i in range(12):
            db.add(i, desc)
        hit = db.detect_loop(desc, 12)
        assert hit is not None
        assert abs(12 - hit[0]) >= 10

    def test_all_above_threshold_none(self, rng):
        db = KeyframeDescriptorDatabase(threshold=1e-9, min_gap=1)
        for i in range(5):
            db.add(i, make_descriptor(random_structured_scan(rng), 40.0))
        desc = make_descriptor(random_structured_scan(rng), 40.0)
        assert db.detect_loop(desc, 50) is None

import numpy as np
import pytest

from polrot.decompose import angle_preset
from polrot.geometry import Plane, RigCalibration, fit_plane
from polrot.structured_light import (
    CorrespondenceMap,
    PointCloud,
    decode,
    decode_stacks,
    generate_patterns,
    gray_decode,
    gray_encode,
    graycode_experiment,
    plane_fit_metric,
    triangulate,
)
from polrot.synthetic import NoiseSpec, generate_scene, render_patterned

ANGLES = angle_preset("pol-cam-2")


def test_gray_examples():
    assert gray_encode(0) == 0
    assert gray_encode(5) == 7
    assert gray_decode(7) == 5


def test_gray_bijection_10_bits():
    n = np.arange(1024)
    g = gray_encode(n)
    assert len(np.unique(g)) == 1024 and g.max() < 1024
    np.testing.assert_array_equal(gray_decode(g), n)
    # neighbours differ in exactly one bit
    diff = g[1:] ^ g[:-1]
    assert np.all((diff & (diff - 1)) == 0)


def test_patterns_one_bit():
    codes = generate_patterns(1, 2)
    np.testing.assert_array_equal(codes.patterns[:, 0], [[0, 1], [1, 0]])


def test_patterns_column_five():
    codes = generate_patterns(3, 8)
    # gray_encode(5) = 0b111, most significant bit first
    np.testing.assert_array_equal(codes.positive[:, 0, 5], [1, 1, 1])
    np.testing.assert_array_equal(codes.positive + codes.negative, 1.0)
    with pytest.raises(ValueError):
        generate_patterns(3, 9)


def test_decode_all_equal_invalid():
    imgs = np.full((4, 3, 3), 0.5)
    cmap = decode(imgs, imgs)
    assert not cmap.valid.any() and np.all(cmap.column == -1)


def test_decode_synthetic_columns():
    codes = generate_patterns(10, 1024, 1)
    cols = np.array([[0, 1, 511, 1023]])
    pos = codes.positive[:, 0][:, cols]
    neg = codes.negative[:, 0][:, cols]
    np.testing.assert_array_equal(decode(pos, neg).column, cols)


def test_direct_only_closure():
    s = generate_scene("v-groove", 48, seed=2).without("i_r", "i_u")
    ph, pw = s.projector_shape
    codes = generate_patterns(10, pw, ph)
    stacks = render_patterned(s, ANGLES, codes.patterns)
    for comp in ("forward", "raw"):
        cmap = decode_stacks(stacks, comp)
        seen = s.direct_map[..., 0] >= 0
        np.testing.assert_array_equal(cmap.valid, seen)
        np.testing.assert_array_equal(cmap.column[seen], s.direct_map[..., 1][seen])


def test_raw_decode_pulled_toward_mirrored_codes():
    s = generate_scene("v-groove", 64, seed=1)
    ph, pw = s.projector_shape
    codes = generate_patterns(10, pw, ph)
    stacks = render_patterned(s, ANGLES, codes.patterns)
    faces = s.plane_labels > 0
    raw = decode_stacks(stacks, "raw")
    fwd = decode_stacks(stacks, "forward")
    rev = decode_stacks(stacks, "reverse")
    direct_col, source_col = s.direct_map[..., 1], s.source_map[..., 1]
    wrong = raw.valid & faces & (raw.column != direct_col)
    assert wrong.sum() > 0.5 * faces.sum()
    np.testing.assert_array_equal(fwd.column[faces], direct_col[faces])
    ok = rev.valid & faces
    np.testing.assert_array_equal(rev.column[ok], source_col[ok])


def test_triangulate_plane_depth():
    calib = RigCalibration(focal=2000, baseline=125, cx=15.5, cy=7.5, cx_proj=511.5 + 500.0, cy_proj=7.5)
    z0 = 500.0
    c = np.arange(32)[None, :].repeat(16, 0)
    col = np.rint((c - calib.cx) - calib.focal * calib.baseline / z0 + calib.cx_proj).astype(int)
    valid = np.ones_like(col, dtype=bool)
    valid[0, 0] = False
    cloud = triangulate(CorrespondenceMap(col, valid, np.ones(col.shape)), calib)
    assert len(cloud) == 16 * 32 - 1
    # half a column of quantization at this depth
    half_step = z0 * z0 / (calib.focal * calib.baseline) * 0.5
    assert np.all(np.abs(cloud.xyz[:, 2] - z0) <= half_step + 1e-9)
    assert not np.any((cloud.pixels[:, 0] == 0) & (cloud.pixels[:, 1] == 0))


def test_triangulate_drops_zero_disparity():
    calib = RigCalibration(cx=0.0, cx_proj=0.0)
    cmap = CorrespondenceMap(np.array([[0, 0]]), np.array([[True, True]]), np.ones((1, 2)))
    cloud = triangulate(cmap, calib)
    assert len(cloud) == 1 and cloud.pixels[0].tolist() == [0, 1]


def test_plane_fit_metric():
    plane = Plane((0, 0, -1), -500)
    on = PointCloud(np.array([[0, 0, 500.0], [10, 3, 500.0], [1, 2, 500.0]]), np.zeros((3, 2), int))
    off = PointCloud(on.xyz + [0, 0, 2.0], on.pixels)
    assert plane_fit_metric(on, [plane]) == 1.0
    assert plane_fit_metric(off, [plane]) == 0.0
    with pytest.warns(RuntimeWarning):
        assert plane_fit_metric(PointCloud(np.zeros((0, 3)), np.zeros((0, 2), int)), [plane]) == 0.0
    assert "0.000000 0.000000 500.000000" in on.to_xyz()


def test_fit_plane_recovers_normal():
    rng = np.random.default_rng(0)
    pts = np.c_[rng.uniform(-10, 10, (50, 2)), np.zeros(50)] @ np.array([[1, 0, 0.2], [0, 1, 0], [0, 0, 1]]) + [0, 0, 300]
    p = fit_plane(pts)
    assert np.max(p.distance(pts)) < 1e-9


def test_graycode_experiment_improves():
    r = graycode_experiment(generate_scene("v-groove", 64, seed=3), ANGLES, noise=NoiseSpec(1e-3, 3))
    assert r["forward"].proportion > r["raw"].proportion
    assert r["forward"].proportion > 0.99

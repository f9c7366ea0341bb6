import json
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from polrot.decompose import angle_preset
from polrot.imaging import (
    CaptureManifest,
    FrameRecord,
    ImageStack,
    ManifestError,
    PFMError,
    demosaic_polarization,
    encode_pfm,
    load_manifest,
    load_stack,
    load_stacks,
    merge_hdr,
    parse_pfm,
    read_pfm,
    remosaic_polarization,
    save_manifest,
    save_stack,
    stack_from_mosaics,
    write_pfm,
)


def test_pfm_round_trip_small(tmp_path):
    img = np.array([[0.0, 0.5], [1.0, 2.0]], dtype=np.float32)
    write_pfm(tmp_path / "a.pfm", img)
    out = read_pfm(tmp_path / "a.pfm")
    assert out.dtype == np.float32
    np.testing.assert_array_equal(out, img)


def test_pfm_little_endian_scale():
    # bottom row first on disk
    payload = struct.pack("<4f", 3.0, 4.0, 1.0, 2.0)
    img = parse_pfm(b"Pf\n2 2\n-1.0\n" + payload)
    np.testing.assert_array_equal(img, [[1.0, 2.0], [3.0, 4.0]])


def test_pfm_big_endian_and_color():
    img = np.arange(12, dtype=np.float32).reshape(2, 2, 3)
    buf = encode_pfm(img, little_endian=False)
    assert buf.startswith(b"PF\n2 2\n1.0\n")
    np.testing.assert_array_equal(parse_pfm(buf), img)


def test_pfm_truncated():
    buf = encode_pfm(np.ones((3, 3), dtype=np.float32))
    with pytest.raises(PFMError):
        parse_pfm(buf[:-1])
    with pytest.raises(PFMError):
        parse_pfm(b"P5\n1 1\n-1.0\n" + b"\0" * 4)


float32_bits = st.integers(0, 2**32 - 1).map(lambda b: np.frombuffer(struct.pack("<I", b), np.float32)[0])


@given(
    arrays(np.float32, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=float32_bits),
    st.booleans(),
)
def test_pfm_bit_exact_fuzz(img, le):
    out = parse_pfm(encode_pfm(img, little_endian=le))
    assert out.tobytes() == img.tobytes()


def test_pfm_subnormals():
    sub = np.array([[1e-45, -1e-45], [1.1754942e-38, np.float32(5e-40)]], dtype=np.float32)
    assert np.all(np.abs(sub) < np.finfo(np.float32).tiny)
    assert parse_pfm(encode_pfm(sub)).tobytes() == sub.tobytes()


def test_hdr_single_frame_exact():
    z = np.array([[0.2, 0.4], [0.6, 0.1]])
    np.testing.assert_array_equal(merge_hdr([z], [0.5], 1.0), z / 0.5)


def test_hdr_two_exposures_consistent():
    radiance = np.linspace(0.05, 0.9, 12).reshape(3, 4)
    merged = merge_hdr([radiance * 0.5, radiance * 1.0], [0.5, 1.0], 1.0)
    np.testing.assert_allclose(merged, radiance, atol=1e-6)


def test_hdr_all_saturated_masked():
    z = np.array([[1.0, 0.5]])
    out = merge_hdr([z, z], [1.0, 2.0], 1.0)
    assert np.isnan(out[0, 0]) and np.isfinite(out[0, 1])


@given(st.permutations([0, 1, 2]), st.integers(0, 1000))
def test_hdr_order_invariant(perm, seed):
    rng = np.random.default_rng(seed)
    frames = [rng.uniform(0, 1.2, (4, 4)) for _ in range(3)]
    t = [0.25, 1.0, 4.0]
    a = merge_hdr(frames, t, 1.0)
    b = merge_hdr([frames[i] for i in perm], [t[i] for i in perm], 1.0)
    np.testing.assert_array_equal(a, b)


def test_hdr_rejects_bad_input():
    with pytest.raises(ValueError):
        merge_hdr([np.ones(2)], [0.0], 1.0)
    with pytest.raises(ValueError):
        merge_hdr([np.ones(2), np.ones(2)], [1.0, 1.0], 1.0)
    with pytest.raises(ValueError):
        merge_hdr([np.ones(2), np.ones(3)], [1.0, 2.0], 1.0)


def test_demosaic_labels():
    raw = np.arange(16.0).reshape(4, 4)
    ch = demosaic_polarization(raw)
    np.testing.assert_array_equal(ch[90.0], [[0, 2], [8, 10]])
    np.testing.assert_array_equal(ch[45.0], [[1, 3], [9, 11]])
    np.testing.assert_array_equal(ch[135.0], [[4, 6], [12, 14]])
    np.testing.assert_array_equal(ch[0.0], [[5, 7], [13, 15]])
    ch = demosaic_polarization(raw, ((0, 45), (90, 135)))
    np.testing.assert_array_equal(ch[0.0], [[0, 2], [8, 10]])
    np.testing.assert_array_equal(ch[135.0], [[5, 7], [13, 15]])


def test_demosaic_constant_and_odd():
    ch = demosaic_polarization(np.full((6, 8), 3.0))
    assert len(ch) == 4 and all(np.all(c == 3.0) and c.shape == (3, 4) for c in ch.values())
    with pytest.raises(ValueError):
        demosaic_polarization(np.ones((5, 4)))


@given(arrays(np.float32, st.tuples(st.integers(1, 5).map(lambda n: 2 * n), st.integers(1, 5).map(lambda n: 2 * n)), elements=float32_bits))
def test_demosaic_remosaic_exact(raw):
    assert remosaic_polarization(demosaic_polarization(raw)).tobytes() == raw.tobytes()


def test_stack_from_mosaics():
    s = stack_from_mosaics([np.zeros((4, 4)), np.ones((4, 4))], [0, 45])
    assert len(s.angles) == 8 and s.shape == (2, 2)


def test_manifest_round_trip_and_hdr_grouping(tmp_path):
    angles = angle_preset("min-5")
    frames = np.random.default_rng(0).uniform(0.1, 0.4, (5, 3, 3))
    recs = save_stack(ImageStack(frames, angles), tmp_path)
    # a second, longer exposure of every frame
    for r, f in zip(recs[:], frames):
        name = "long_" + r.file
        write_pfm(tmp_path / name, f * 2.0)
        recs.append(FrameRecord(name, r.theta_c_deg, r.theta_l_deg, 2.0))
    save_manifest(CaptureManifest(recs, {"note": "x"}), tmp_path / "manifest.json")
    m = load_manifest(tmp_path / "manifest.json")
    assert m.scene == {"note": "x"} and len(m.frames) == 10
    stack = load_stack(tmp_path / "manifest.json", saturation_level=1.0)
    assert stack.frames.shape == (5, 3, 3)
    np.testing.assert_allclose(stack.frames, frames, atol=1e-6)


def test_manifest_errors(tmp_path):
    p = tmp_path / "m.json"
    p.write_text("{not json")
    with pytest.raises(ManifestError):
        load_manifest(p)
    p.write_text(json.dumps({"frames": [{"file": "a.pfm"}]}))
    with pytest.raises(ManifestError):
        load_manifest(p)
    with pytest.raises(ManifestError):
        FrameRecord("a.pfm", 0, 0, exposure_s=0)
    p.write_text(json.dumps({"frames": [{"file": "a.pfm", "theta_c_deg": 0, "theta_l_deg": 0, "role": "checker"}]}))
    with pytest.raises(ManifestError):
        load_stacks(load_manifest(p), role="regular")

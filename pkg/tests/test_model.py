import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import angle, intensity, phase
from polrot.model import (
    ComponentParams,
    PolarizedRay,
    PolarizerPair,
    canonical_angle,
    forward_intensity,
    intensity_single_polarizer,
    mixture_intensity,
    reverse_intensity,
    unpolarized_intensity,
)

PI = np.pi


@pytest.mark.parametrize(
    "amp, rho, phi, theta, expected",
    [(2, 1, 0, 0, 2.0), (2, 1, 0, PI / 2, 0.0), (2, 0, 1.234, PI / 3, 1.0)],
)
def test_single_polarizer(amp, rho, phi, theta, expected):
    assert intensity_single_polarizer(PolarizedRay(amp, rho, phi), theta) == pytest.approx(expected, abs=1e-15)


def test_polarized_ray_rejects_bad_dolp():
    with pytest.raises(ValueError):
        PolarizedRay(1.0, 1.5, 0.0)


@pytest.mark.parametrize("i_u, expected", [(1, 0.5), (0, 0.0), (0.3184, 0.1592)])
def test_unpolarized(i_u, expected):
    assert unpolarized_intensity(i_u) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize(
    "i_f, phi, tc, tl, expected",
    [(1, 0, 0, 0, 1.0), (1, 0, PI / 2, 0, 0.0), (1, PI / 8, PI / 8, 0, 1.0)],
)
def test_forward(i_f, phi, tc, tl, expected):
    assert forward_intensity(i_f, phi, tc, tl) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize(
    "i_r, phi, tc, tl, expected",
    [(1, 0, 0, 0, 1.0), (1, 0, PI / 4, PI / 4, 0.0), (2, PI / 4, PI / 8, PI / 8, 2.0)],
)
def test_reverse(i_r, phi, tc, tl, expected):
    assert reverse_intensity(i_r, phi, tc, tl) == pytest.approx(expected, abs=1e-15)


def test_mixture_examples(canonical):
    assert mixture_intensity(ComponentParams(1, 0, 0, 0, 0), 0.4, 1.3) == pytest.approx(0.5)
    assert mixture_intensity(ComponentParams(0, 1, 0, 1, 0), 0, 0) == pytest.approx(2.0)
    # evaluated with plain math.cos outside the package
    assert mixture_intensity(ComponentParams(*canonical), 0.3, 0.7) == pytest.approx(0.8620906917604418, abs=1e-15)


def test_params_validation():
    with pytest.raises(ValueError):
        ComponentParams(-0.1, 0, 0, 0, 0)
    with pytest.raises(ValueError):
        ComponentParams(np.nan, 0, 0, 0, 0)
    p = ComponentParams(0.1, 0.0, 2.0, 0.5, 4.0)
    assert p.phi_f == 0.0  # undefined phase pinned to zero
    assert 0 <= p.phi_r < PI


def test_polarizer_pair_degrees_round_trip():
    pair = PolarizerPair.from_degrees(225.0, -45.0)
    assert pair.degrees() == pytest.approx((45.0, 135.0))


@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_canonical_angle_range(a):
    c = canonical_angle(a)
    assert 0.0 <= c < PI


params = st.builds(ComponentParams, intensity, intensity, phase, intensity, phase)


@given(params, angle, angle)
def test_period_pi(p, tc, tl):
    base = mixture_intensity(p, tc, tl)
    scale = 1.0 + p.total()
    assert mixture_intensity(p, tc + PI, tl) == pytest.approx(base, abs=1e-12 * scale)
    assert mixture_intensity(p, tc, tl + PI) == pytest.approx(base, abs=1e-12 * scale)


@given(intensity, phase, angle, angle)
def test_forward_reverse_mirror(i, phi, tc, tl):
    assert forward_intensity(i, phi, tc, tl) == pytest.approx(reverse_intensity(i, phi, tc, -tl), abs=1e-12)


@given(params, angle)
def test_average_over_camera_angle(p, tl):
    tc = np.arange(180) * PI / 180
    mean = float(np.mean(mixture_intensity(p, tc, tl)))
    assert mean == pytest.approx(p.total() / 2, rel=1e-9, abs=1e-12)


@given(params, angle, angle)
def test_nonnegative(p, tc, tl):
    assert mixture_intensity(p, tc, tl) >= -1e-12

import numpy as np
import pytest

from polrot.decompose import angle_preset, decompose_stack
from polrot.separation import (
    PatternedStack,
    checker_patterns,
    combined_decompose,
    nayar_separate,
    separate_stacks,
)
from polrot.synthetic import generate_scene, render_observations, render_patterned

ANGLES = angle_preset("pol-cam-2")


def patterned(scene, period=8):
    pats = checker_patterns(scene.projector_shape, period)
    return PatternedStack(render_patterned(scene, ANGLES, pats), period)


def test_checker_patterns_complementary():
    a, b = checker_patterns((16, 32), 4)
    np.testing.assert_array_equal(a + b, 1.0)
    assert a.mean() == 0.5
    with pytest.raises(ValueError):
        checker_patterns((4, 4), 0)


@pytest.mark.parametrize(
    "lit, unlit, direct, global_",
    [
        (1.0, 0.0, 1.0, 0.0),  # pure direct
        (0.35, 0.35, 0.0, 0.7),  # pure global at half power
        (0.6 + 0.2, 0.2, 0.6, 0.4),
    ],
)
def test_nayar_two_phase(lit, unlit, direct, global_):
    d, g = nayar_separate([[lit], [unlit]])
    assert d[0] == pytest.approx(direct) and g[0] == pytest.approx(global_)


def test_nayar_needs_two_shifts():
    with pytest.raises(ValueError):
        nayar_separate([[1.0]])


@pytest.mark.parametrize("recipe", ["hexagon-mirror", "v-groove", "flat-specular"])
def test_energy_split(recipe):
    s = generate_scene(recipe, 32, seed=3)
    d, g = separate_stacks(patterned(s))
    full = render_observations(s, ANGLES).frames
    np.testing.assert_allclose(d.frames + g.frames, full, atol=1e-9)


def test_separate_decompose_commute():
    s = generate_scene("hexagon-mirror", 48, seed=1)
    ps = patterned(s)
    grid = combined_decompose(ps)
    per_shift = [decompose_stack(st) for st in ps.stacks]
    for name in ("i_u", "i_f", "i_r"):
        d, g = nayar_separate([getattr(x, name) for x in per_shift])
        np.testing.assert_allclose(getattr(grid.direct, name), d, atol=1e-7)
        np.testing.assert_allclose(getattr(grid.global_, name), g, atol=1e-7)


def test_direct_forward_only_scene():
    s = generate_scene("flat-specular", 32, seed=0, i_u=0.0)
    e = combined_decompose(patterned(s)).energy()
    total = sum(e.values())
    assert e[("direct", "i_f")] / total > 1 - 1e-9


def test_mirror_and_band_routing():
    s = generate_scene("hexagon-mirror", 64, seed=0)
    grid = combined_decompose(patterned(s))
    injected_r = s.i_r.sum()
    assert np.nansum(grid.direct.i_r) / injected_r > 0.9
    injected_g = s.i_g.sum()
    assert np.nansum(grid.global_.i_u) == pytest.approx(injected_g, rel=1e-9)
    cells = grid.cells()
    assert set(cells) >= {f"{p}_{c}" for p in ("direct", "global") for c in ("i_u", "i_f", "i_r")}


def test_patterned_stack_checks():
    s = generate_scene("flat-diffuse", 8)
    st = render_patterned(s, ANGLES, checker_patterns(s.projector_shape))
    with pytest.raises(ValueError):
        PatternedStack(st[:1])
    other = render_patterned(s, angle_preset("min-5"), checker_patterns(s.projector_shape))
    with pytest.raises(ValueError):
        PatternedStack([st[0], other[0]])

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ovfit.core import RationalModel, eval_model
from ovfit.errors import BadRange, MapSingularity, PointAtInfinity
from ovfit.mapping import BilinearMap, from_disk, map_model, select_alpha, to_disk


def test_fixed_points_of_map():
    b = BilinearMap(2.0)
    assert to_disk(b, 0) == 1
    assert to_disk(b, 2j) == pytest.approx(1j)
    assert to_disk(b, -2) == pytest.approx(0)
    assert from_disk(b, 0) == pytest.approx(-2)


def test_left_half_plane_goes_inside():
    b = BilinearMap(3.0)
    rng = np.random.default_rng(1)
    s = -rng.uniform(0.01, 100, 200) + 1j * rng.normal(0, 50, 200)
    assert np.all(np.abs(to_disk(b, s)) < 1)


def test_singular_points():
    b = BilinearMap(1.5)
    with pytest.raises(MapSingularity):
        to_disk(b, 1.5)
    with pytest.raises(PointAtInfinity):
        from_disk(b, -1)
    with pytest.raises(BadRange):
        BilinearMap(0.0)
    with pytest.raises(BadRange):
        select_alpha(10, 1)


@settings(max_examples=80, deadline=None)
@given(st.floats(-6, 6), st.floats(-6, 6), st.floats(-3, 3))
def test_round_trip(logre, logim, loga):
    b = BilinearMap(10 ** loga)
    s = -(10 ** logre) + 1j * 10 ** logim
    back = from_disk(b, to_disk(b, s))
    assert abs(back - s) <= 1e-9 * abs(s)


@settings(max_examples=80, deadline=None)
@given(st.floats(-8, 8), st.floats(-4, 4))
def test_imaginary_axis_to_unit_circle(logw, loga):
    q = to_disk(BilinearMap(10 ** loga), 1j * 10 ** logw)
    assert abs(abs(q) - 1) <= 1e-14


def test_select_alpha_is_chord_maximiser():
    lo, hi = 0.1, 1e6
    a = select_alpha(lo, hi)
    assert a == pytest.approx(np.sqrt(lo * hi))

    def chord(x):
        b = BilinearMap(x)
        return abs(to_disk(b, 1j * lo) - to_disk(b, 1j * hi))

    h = 1e-4 * a
    assert abs(chord(a + h) - chord(a - h)) / (2 * h) <= 1e-9
    for f in (0.5, 0.9, 1.1, 2.0):
        assert chord(f * a) < chord(a)


def test_map_model_preserves_response():
    m = RationalModel(poles=[-1 + 5j, -1 - 5j, -30], zeros=[-2.0], gains=[[40.0]])
    b = BilinearMap(7.0)
    mq = map_model(b, m, "s->q")
    assert mq.domain == "q" and mq.poles.size == 3
    s = 1j * np.logspace(-1, 2, 15)
    np.testing.assert_allclose(eval_model(mq, to_disk(b, s)), eval_model(m, s), rtol=1e-10)
    back = map_model(b, mq, "q->s")
    np.testing.assert_allclose(eval_model(back, s), eval_model(m, s), rtol=1e-10)
    assert back.zeros[0][0].size == 1


def test_map_model_rejects_wrong_domain():
    m = RationalModel(poles=[-1.0], zeros=[], gains=[[1.0]])
    with pytest.raises(ValueError):
        map_model(BilinearMap(1.0), m, "q->s")

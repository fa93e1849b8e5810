import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ovfit.core import FrequencyResponseData, RationalModel, eval_model
from ovfit.io import (bode_csv, dataset_from_csv, dataset_from_json, dataset_to_csv,
                      dataset_to_json, model_from_dict, model_to_dict, read_model, write_model)

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 2), st.integers(1, 2), st.data())
def test_csv_round_trip_is_bit_exact(l, p, m, data):
    w = np.cumsum(data.draw(st.lists(st.floats(1e-3, 1e3), min_size=l, max_size=l)))
    re = np.array(data.draw(st.lists(finite, min_size=l * p * m, max_size=l * p * m)))
    im = np.array(data.draw(st.lists(finite, min_size=l * p * m, max_size=l * p * m)))
    h = (re + 1j * im).reshape(l, p, m)
    weights = data.draw(st.one_of(st.none(), st.lists(st.floats(0.1, 10), min_size=l, max_size=l)))
    d = FrequencyResponseData(w, h, weights)
    for back in (dataset_from_csv(dataset_to_csv(d)), dataset_from_json(dataset_to_json(d))):
        np.testing.assert_array_equal(back.frequencies, d.frequencies)
        np.testing.assert_array_equal(back.responses, d.responses)
        if weights is None:
            assert back.weights is None
        else:
            np.testing.assert_array_equal(back.weights, d.weights)


def test_hz_conversion():
    text = "freq_hz,re_y1u1,im_y1u1\n1.0,1.0,0.0\n2.0,0.5,0.5\n"
    d = dataset_from_csv(text)
    np.testing.assert_allclose(d.frequencies, [2 * np.pi, 4 * np.pi])
    d = dataset_from_csv(text.replace("freq_hz", "freq_rad_s"), freq_unit="Hz")
    np.testing.assert_allclose(d.frequencies, [2 * np.pi, 4 * np.pi])


@pytest.mark.parametrize("text", [
    "",
    "omega,re_y1u1,im_y1u1\n1,1,1\n",
    "freq_rad_s,re_y1u1\n1,1\n",
    "freq_rad_s,re_y1u1,im_y1u1\n1,x,1\n",
    "freq_rad_s,re_y1u1,im_y1u1,bogus\n1,1,1,1\n",
])
def test_bad_csv(text):
    with pytest.raises(ValueError):
        dataset_from_csv(text)


def test_model_file_round_trip(tmp_path):
    m = RationalModel(poles=[-1 + 2j, -1 - 2j, -5], zeros=[-3.0], gains=[[7.0]]).with_coefficients()
    path = tmp_path / "m.json"
    write_model(path, m, metrics={"fit": float("nan"), "cost": 1.5})
    doc = json.loads(path.read_text())
    assert doc["metrics"]["fit"] is None
    back = read_model(path)
    s = 1j * np.logspace(-1, 1, 7)
    np.testing.assert_allclose(eval_model(back, s), eval_model(m, s), rtol=1e-14)
    # coefficient and zpk forms of the file agree
    np.testing.assert_allclose(eval_model(back, s, "coeff"), eval_model(back, s), rtol=1e-9)


def test_model_dict_rejects_foreign_documents():
    with pytest.raises(ValueError):
        model_from_dict({"format": "other"})
    assert model_to_dict(RationalModel(poles=[], zeros=[], gains=[[1.0]]))["denominator"] == [1.0]


def test_bode_csv_columns():
    h = np.array([1.0, 1j])[:, None, None]
    text = bode_csv(np.array([1.0, 2.0]), h, h)
    rows = [r.split(",") for r in text.strip().splitlines()]
    assert rows[0][1] == "meas_mag_db_y1u1"
    assert float(rows[2][2]) == pytest.approx(90.0)

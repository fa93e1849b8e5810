import numpy as np
import pytest

from ovfit.core import eval_model
from ovfit.datagen import (ModalModelSpec, NoiseSpec, fixed_model_4_2, log_frequencies,
                           modal_model, modal_response, sample_with_noise)


def test_single_mode_is_standard_second_order():
    m = modal_model(ModalModelSpec(modes=1, residues=(1.0,), frequencies=(1.0,), dampings=(0.5,)))
    s = 1j * np.array([0.1, 1.0, 3.0])
    np.testing.assert_allclose(eval_model(m, s)[:, 0, 0], 1 / (s ** 2 + s + 1), rtol=1e-12)


def test_two_modes_match_common_denominator_oracle():
    r, w, z = (2.0, -0.5), (3.0, 40.0), (0.1, 0.02)
    m = modal_model(ModalModelSpec(modes=2, residues=r, frequencies=w, dampings=z))
    d1 = np.array([w[0] ** 2, 2 * z[0] * w[0], 1.0])
    d2 = np.array([w[1] ** 2, 2 * z[1] * w[1], 1.0])
    P = np.polynomial.polynomial
    num = P.polyadd(r[0] * w[0] ** 2 * d2, r[1] * w[1] ** 2 * d1)
    den = P.polymul(d1, d2)
    s = 1j * np.logspace(-1, 3, 10)
    np.testing.assert_allclose(eval_model(m, s)[:, 0, 0], P.polyval(s, num) / P.polyval(s, den),
                               rtol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_default_modal_model_matches_modal_sum(seed):
    spec = ModalModelSpec(seed=seed)
    m = modal_model(spec)
    assert m.order == 20
    assert np.all(m.poles.real < 0)
    s = 1j * log_frequencies(0.1, 1e6, 200)
    np.testing.assert_allclose(eval_model(m, s)[:, 0, 0], modal_response(spec, s), rtol=1e-8)
    r, w, z = spec.draw()
    want = np.concatenate([-z * w + 1j * w * np.sqrt(1 - z ** 2), -z * w - 1j * w * np.sqrt(1 - z ** 2)])
    np.testing.assert_allclose(np.sort_complex(m.poles), np.sort_complex(want), rtol=1e-12)


def test_spec_validation():
    with pytest.raises(ValueError):
        ModalModelSpec(modes=0)
    with pytest.raises(ValueError):
        ModalModelSpec(modes=1, dampings=(1.5,))
    with pytest.raises(ValueError):
        NoiseSpec(-1.0)


def test_greybox_model_structure():
    m = fixed_model_4_2()
    num, den = m.coefficients()
    np.testing.assert_array_equal(num[0, 0], [5e10, 4.8e7, 1.2e8])
    np.testing.assert_array_equal(den, [0, 1.6e9, 1.7e6, 4e6, 200, 1])
    assert np.min(np.abs(m.poles)) < 1e-9  # integrator
    assert m.order - m.zeros[0][0].size == 3
    s = 10j
    want = (5e10 + 4.8e7 * s + 1.2e8 * s ** 2) / (1.6e9 * s + 1.7e6 * s ** 2 + 4e6 * s ** 3 + 200 * s ** 4 + s ** 5)
    assert eval_model(m, [s])[0, 0, 0] == pytest.approx(want, rel=1e-12)


def test_noise_free_and_determinism():
    m = fixed_model_4_2()
    w = log_frequencies(1, 1e4, 50)
    clean = sample_with_noise(m, w, None)
    np.testing.assert_allclose(clean.responses, eval_model(m, 1j * w))
    a = sample_with_noise(m, w, NoiseSpec(seed=4))
    b = sample_with_noise(m, w, NoiseSpec(seed=4))
    c = sample_with_noise(m, w, NoiseSpec(seed=5))
    np.testing.assert_array_equal(a.responses, b.responses)
    assert not np.array_equal(a.responses, c.responses)


def test_empirical_snr_is_about_20_db():
    m = fixed_model_4_2()
    w = log_frequencies(1, 1e4, 10_000)
    noisy = sample_with_noise(m, w, NoiseSpec.from_snr_db(20.0, seed=1))
    clean = eval_model(m, 1j * w)
    eps = noisy.responses / clean - 1
    snr = -10 * np.log10(np.mean(np.abs(eps) ** 2))
    assert abs(snr - 20) <= 1.0

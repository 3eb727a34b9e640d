import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prnu_nua.attribution import PCE_THRESHOLD, PceReport, attribute, ncc_surface, pce
from prnu_nua.errors import DegenerateInputError, DimensionError
from prnu_nua.fingerprint import Fingerprint, estimate_fingerprint
from prnu_nua.synth import capture, flat_field, gen_sensor, textured_scene


def brute_ncc(w, s):
    w = w - w.mean()
    s = s - s.mean()
    m, n = w.shape
    out = np.zeros((m, n))
    for a in range(m):
        for b in range(n):
            out[a, b] = np.sum(np.roll(w, (-a, -b), axis=(0, 1)) * s)
    return out / (np.linalg.norm(w) * np.linalg.norm(s))


def test_ncc_matches_brute_force(rng):
    w, s = rng.normal(size=(7, 11)), rng.normal(size=(7, 11))
    np.testing.assert_allclose(ncc_surface(w, s), brute_ncc(w, s), atol=1e-12)


def test_self_correlation_peaks_at_origin(rng):
    x = rng.normal(size=(32, 32))
    cc = ncc_surface(x, x)
    assert cc[0, 0] == pytest.approx(1.0)
    assert np.argmax(cc) == 0
    assert np.all(np.abs(cc) <= 1 + 1e-12)


def test_known_shift_is_recovered(rng):
    s = rng.normal(size=(64, 64))
    w = np.roll(s, (7, 13), axis=(0, 1))
    rep = pce(ncc_surface(w, s))
    assert rep.peak_shift == (7, 13)
    assert rep.peak_ncc == pytest.approx(1.0)


def test_ncc_rejects_bad_input():
    with pytest.raises(DimensionError):
        ncc_surface(np.ones((3, 3)), np.ones((3, 4)))
    with pytest.raises(DegenerateInputError):
        ncc_surface(np.ones((3, 3)), np.arange(9.0).reshape(3, 3))


def test_pce_closed_form_single_background_level():
    # peak 1 at the origin, every other entry c: PCE = 1 / c**2 (neighborhood also c)
    c = 0.1
    cc = np.full((16, 16), c)
    cc[0, 0] = 1.0
    assert pce(cc).pce == pytest.approx(1 / c ** 2)


def test_pce_of_flat_surface_is_one():
    assert pce(np.full((8, 8), 0.3)).pce == pytest.approx(1.0)


def test_neighborhood_anchored_forward_and_wraps():
    cc = np.zeros((8, 8)) + 0.01
    cc[7, 7] = 1.0
    cc[0, 0] = 0.9  # inside the wrapped 2x2 block starting at (7, 7)
    cc[0, 7] = 0.9
    cc[7, 0] = 0.9
    rep = pce(cc)
    assert rep.peak_shift == (7, 7)
    assert rep.pce == pytest.approx(1.0 / 0.01 ** 2)


def test_pce_is_scale_invariant(rng):
    cc = rng.normal(size=(20, 20))
    assert pce(3.5 * cc).pce == pytest.approx(pce(cc).pce, rel=1e-12)


def test_peak_is_signed_maximum():
    cc = np.full((8, 8), 0.01)
    cc[2, 2] = -5.0
    cc[4, 4] = 0.5
    assert pce(cc).peak_shift == (4, 4)


def test_threshold_is_strict():
    c = 1 / np.sqrt(60.0)
    cc = np.full((16, 16), c)
    cc[0, 0] = 1.0
    rep = pce(cc)
    assert rep.pce == pytest.approx(60.0)
    # exact tie: use the threshold equal to the computed value
    assert pce(cc, threshold=rep.pce).matched is False
    assert pce(cc, threshold=rep.pce * (1 - 1e-12)).matched is True


@pytest.mark.parametrize("nb", [(0, 2), (9, 1), (8, 8)])
def test_bad_neighborhood(nb):
    with pytest.raises(DimensionError):
        pce(np.ones((8, 8)), nb)


def test_zero_background_is_degenerate():
    cc = np.zeros((8, 8))
    cc[0, 0] = 1
    with pytest.raises(DegenerateInputError):
        pce(cc)


def test_report_json(rng):
    rep = pce(rng.normal(size=(8, 8)))
    d = json.loads(rep.to_json())
    assert set(d) == {"pce", "peak_shift", "peak_ncc", "threshold", "matched", "neighborhood"}
    assert d["threshold"] == PCE_THRESHOLD
    assert isinstance(d["peak_shift"], list)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 9), st.integers(2, 9), st.integers(0, 2 ** 31))
def test_pce_nonnegative_and_finite(m, n, seed):
    cc = np.random.default_rng(seed).normal(size=(m, n))
    rep = pce(cc, (1, 1))
    assert rep.pce >= 0 and np.isfinite(rep.pce)


def test_attribution_end_to_end():
    shape = (128, 128)
    s_a, s_b = gen_sensor(shape, 0.03, seed=1), gen_sensor(shape, 0.03, seed=2)
    flat = flat_field(shape, 150 * 257)
    f_a = estimate_fingerprint([capture(flat, s_a, i) for i in range(6)])
    scene = textured_scene(shape, np.random.default_rng(5), 120 * 257, 20 * 257)
    same = attribute(capture(scene, s_a, 100), f_a)
    other = attribute(capture(scene, s_b, 100), f_a)
    assert same.matched and same.peak_shift == (0, 0)
    assert not other.matched
    with pytest.raises(DimensionError):
        attribute(np.ones((64, 64)), f_a)

import warnings

import numpy as np
import pytest

from prnu_nua.core import Depth, GrayImage, normalized_correlation
from prnu_nua.denoise import residual
from prnu_nua.errors import DimensionError, PrnuError
from prnu_nua.fingerprint import (
    Fingerprint,
    FingerprintAccumulator,
    canonical_order,
    estimate_fingerprint,
    postprocess_fingerprint,
)
from prnu_nua.synth import capture, flat_field, gen_sensor


def test_single_image_algebra(rng):
    img = rng.uniform(50, 200, size=(64, 64))
    w = residual(img).data
    f = estimate_fingerprint([img])
    np.testing.assert_allclose(f.k_hat, w * img / img ** 2, rtol=1e-12)
    assert f.source_count == 1


def test_matches_explicit_sums(rng):
    imgs = [rng.uniform(50, 200, size=(48, 48)) for _ in range(4)]
    num = sum(residual(i).data * i for i in imgs)
    den = sum(i * i for i in imgs)
    np.testing.assert_allclose(estimate_fingerprint(imgs).k_hat, num / den, rtol=1e-12, atol=1e-15)


def test_constant_images_give_zero_fingerprint():
    f = estimate_fingerprint([np.full((32, 32), v) for v in (40.0, 80.0, 120.0)])
    np.testing.assert_allclose(f.k_hat, 0.0, atol=1e-12)


def test_recovers_planted_prnu():
    s = gen_sensor((128, 128), 0.02, seed=3)
    flat = flat_field((128, 128), 120 * 257, 0.0)
    imgs = [capture(flat, s, i) for i in range(8)]
    f = estimate_fingerprint(imgs)
    assert f.depth == Depth.BITS16
    assert normalized_correlation(f.k_hat, s.k) > 0.3


def test_permutation_invariance_is_bitwise(rng):
    imgs = [rng.uniform(0, 255, size=(32, 32)) for _ in range(5)]
    a = estimate_fingerprint(imgs).k_hat
    b = estimate_fingerprint(imgs[::-1]).k_hat
    c = estimate_fingerprint([imgs[i] for i in (2, 0, 4, 1, 3)]).k_hat
    assert a.tobytes() == b.tobytes() == c.tobytes()


def test_canonical_order_depends_only_on_content(rng):
    imgs = [rng.normal(size=(4, 4)) for _ in range(6)]
    order = canonical_order(imgs)
    shuffled = [imgs[i] for i in (5, 3, 1, 0, 2, 4)]
    assert [imgs[i].tobytes() for i in order] == [shuffled[i].tobytes() for i in canonical_order(shuffled)]


def test_merge_equals_single_pass(rng):
    imgs = [rng.uniform(1, 255, size=(32, 32)) for _ in range(6)]
    res = [residual(i) for i in imgs]
    one = FingerprintAccumulator()
    for w, i in zip(res, imgs):
        one.add(w, i)
    a, b = FingerprintAccumulator(), FingerprintAccumulator()
    for w, i in zip(res[:2], imgs[:2]):
        a.add(w, i)
    for w, i in zip(res[2:], imgs[2:]):
        b.add(w, i)
    merged = a.merge(b).finalize()
    assert merged.source_count == 6
    np.testing.assert_allclose(merged.k_hat, one.finalize().k_hat, rtol=1e-12, atol=1e-12)
    # merging with an empty accumulator is neutral
    np.testing.assert_array_equal(FingerprintAccumulator().merge(a).finalize().k_hat, a.finalize().k_hat)


def test_scaling_images_keeps_fingerprint_nearly_invariant(rng):
    from scipy.ndimage import gaussian_filter

    k = rng.normal(0, 0.02, size=(64, 64))
    imgs = [(120 + 20 * gaussian_filter(rng.normal(size=(64, 64)), 3)) * (1 + k) for _ in range(4)]
    a = estimate_fingerprint(imgs).k_hat
    # residual is not exactly homogeneous (shrinkage uses a fixed noise level), so only approximately
    b = estimate_fingerprint([2 * i for i in imgs]).k_hat
    assert normalized_correlation(a, b) > 0.8


def test_postprocess_zeroes_row_and_column_means(rng):
    f = Fingerprint(rng.normal(size=(20, 30)) + np.arange(30)[None, :], 3)
    g = postprocess_fingerprint(f)
    np.testing.assert_allclose(g.k_hat.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(g.k_hat.mean(axis=1), 0, atol=1e-12)
    assert g.postprocessed and not f.postprocessed
    np.testing.assert_allclose(postprocess_fingerprint(g).k_hat, g.k_hat, atol=1e-12)


def test_dark_pixels_warn_and_zero():
    img = np.full((32, 32), 100.0)
    img[3, 4] = 0.0
    with pytest.warns(UserWarning, match="1 pixels"):
        f = estimate_fingerprint([img, img.copy() * 0.5])
    assert f.dark_pixels == 1
    assert f.k_hat[3, 4] == 0.0
    assert np.all(np.isfinite(f.k_hat))


def test_no_warning_without_dark_pixels(rng):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        estimate_fingerprint([rng.uniform(1, 255, size=(32, 32))])


def test_input_validation(rng):
    with pytest.raises(PrnuError):
        estimate_fingerprint([])
    with pytest.raises(DimensionError):
        estimate_fingerprint([np.ones((32, 32)), np.ones((32, 48))])
    with pytest.raises(DimensionError):
        estimate_fingerprint([np.ones((32, 32))], residuals=[])
    with pytest.raises(PrnuError):
        FingerprintAccumulator().finalize()


def test_inputs_not_mutated(rng):
    img = rng.uniform(0, 255, size=(32, 32))
    before = img.copy()
    estimate_fingerprint([img])
    np.testing.assert_array_equal(img, before)


def test_fingerprint_bytes_roundtrip(rng):
    f = Fingerprint(rng.normal(size=(5, 7)), 4, depth=Depth.BITS16)
    g = Fingerprint.from_bytes(f.to_bytes(), 4)
    np.testing.assert_array_equal(g.k_hat, f.k_hat)
    assert g.depth == Depth.BITS16


def test_precomputed_residuals_used(rng):
    imgs = [GrayImage(rng.uniform(1, 255, size=(32, 32))) for _ in range(2)]
    res = [residual(i) for i in imgs]
    np.testing.assert_array_equal(estimate_fingerprint(imgs, residuals=res).k_hat, estimate_fingerprint(imgs).k_hat)

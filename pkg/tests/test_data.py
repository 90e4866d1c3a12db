from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage, stats
from skimage.morphology import skeletonize

from mvanet.data import (
    STROKE_WIDTHS,
    THIN_WIDTH,
    AugmentParams,
    Sample,
    apply_params,
    augment,
    generate_synthetic,
    hflip,
    load_dataset,
    read_image,
    read_mask,
    render_shape,
    save_dataset,
    transform_point,
    write_gray,
)
from mvanet.errors import DataError

SIZE = 256


@pytest.fixture(scope="module")
def corpus():
    return generate_synthetic(11, 64, SIZE)


def stroke_width(mask: np.ndarray) -> float:
    """Mean stroke width: foreground area over centreline length."""
    return mask.sum() / max(1, skeletonize(mask).sum())


def test_same_seed_same_bytes():
    a, b = generate_synthetic(7, 4, SIZE), generate_synthetic(7, 4, SIZE)
    for x, y in zip(a, b):
        assert x.id == y.id
        assert x.image.tobytes() == y.image.tobytes() and x.mask.tobytes() == y.mask.tobytes()
    c = generate_synthetic(8, 4, SIZE)
    assert any(x.mask.tobytes() != z.mask.tobytes() for x, z in zip(a, c))


def test_masks_binary_and_non_empty(corpus):
    for s in corpus:
        assert s.image.shape == (1, 3, SIZE, SIZE) and s.mask.shape == (1, 1, SIZE, SIZE)
        assert set(np.unique(s.mask)) <= {0.0, 1.0} and s.mask.any()
        assert 0.0 <= s.image.min() and s.image.max() <= 1.0


def test_measured_widths_match_declared(corpus):
    for s in corpus:
        for spec in s.shapes:
            assert round(stroke_width(render_shape(spec, SIZE))) == spec.width, spec


def test_width_distribution(corpus):
    first = Counter(s.shapes[0].width for s in corpus)
    assert first == {THIN_WIDTH: len(corpus)}
    rest = Counter(round(stroke_width(render_shape(sp, SIZE))) for s in corpus for sp in s.shapes[1:])
    assert set(rest) <= set(STROKE_WIDTHS)
    observed = [rest[w] for w in STROKE_WIDTHS]
    # uniform over the declared widths; a loose level since the sample is small
    assert stats.chisquare(observed).pvalue > 1e-3


def test_thin_structures_in_most_samples(corpus):
    thin = 0
    for s in corpus:
        mask = s.mask[0, 0].astype(bool)
        # structures thinner than size/128 vanish under an opening of that size
        opened = ndimage.binary_opening(mask, structure=np.ones((SIZE // 128, SIZE // 128)))
        thin += (mask & ~opened).sum() > 0.01 * mask.sum()
    assert thin / len(corpus) >= 0.30


def test_generation_errors():
    with pytest.raises(DataError, match="multiple of 64"):
        generate_synthetic(0, 1, 100)
    with pytest.raises(DataError, match="at least 1"):
        generate_synthetic(0, 0, 64)


def test_flip_twice_is_identity(corpus):
    s = corpus[0]
    back = hflip(hflip(s))
    assert np.array_equal(back.image, s.image) and np.array_equal(back.mask, s.mask)


@settings(max_examples=12, deadline=None)
@given(seed=st.integers(0, 2**16))
def test_augment_keeps_mask_binary_and_size(seed):
    s = generate_synthetic(3, 1, 64)[0]
    out = augment(s, seed)
    assert out.image.shape == s.image.shape and out.mask.shape == s.mask.shape
    assert set(np.unique(out.mask)) <= {0.0, 1.0}
    assert out.mask.any()


def test_augment_is_seeded():
    s = generate_synthetic(3, 1, 64)[0]
    a, b = augment(s, 5), augment(s, 5)
    assert np.array_equal(a.image, b.image) and np.array_equal(a.mask, b.mask)


@pytest.mark.parametrize(
    "params",
    [
        AugmentParams(False, (0, 0, 64, 64), 0.0),
        AugmentParams(True, (0, 0, 64, 64), 0.0),
        AugmentParams(False, (6, 2, 56, 56), 0.0),
        AugmentParams(False, (0, 0, 64, 64), 12.0),
        AugmentParams(True, (4, 8, 54, 54), -10.0),
    ],
)
@pytest.mark.parametrize("y,x", [(20, 24), (40, 30), (30, 45)])
def test_marker_pixel_lands_where_predicted(params, y, x):
    image = np.zeros((1, 3, 64, 64), np.float32)
    mask = np.zeros((1, 1, 64, 64), np.float32)
    mask[..., y - 1 : y + 2, x - 1 : x + 2] = 1.0  # 3x3 marker survives nearest resampling
    image[..., y - 1 : y + 2, x - 1 : x + 2] = 1.0
    out = apply_params(Sample(image, mask, "m"), params)
    ey, ex = transform_point(params, y, x, 64, 64)
    for plane in (out.mask[0, 0], out.image[0, 0]):
        cy, cx = ndimage.center_of_mass(plane)
        assert abs(cy - ey) < 1.0 and abs(cx - ex) < 1.0


def test_dataset_roundtrip(tmp_path, corpus):
    samples = corpus[:3]
    save_dataset(samples, tmp_path)
    loaded = load_dataset(tmp_path)
    assert [s.id for s in loaded] == [s.id for s in samples]
    for a, b in zip(samples, loaded):
        assert np.array_equal(a.mask, b.mask)
        assert np.abs(a.image - b.image).max() <= 0.5 / 255 + 1e-6


def test_dataset_errors(tmp_path):
    with pytest.raises(DataError, match="no manifest"):
        load_dataset(tmp_path)
    (tmp_path / "manifest.txt").write_text("only\ttwo\n")
    with pytest.raises(DataError, match="expected id"):
        load_dataset(tmp_path)
    (tmp_path / "manifest.txt").write_text("a\tmissing.ppm\tmissing.pgm\n")
    with pytest.raises(DataError, match="cannot read image"):
        load_dataset(tmp_path)
    (tmp_path / "junk.pgm").write_bytes(b"not an image")
    with pytest.raises(DataError, match="cannot read mask"):
        read_mask(tmp_path / "junk.pgm")
    with pytest.raises(DataError):
        read_image(tmp_path / "junk.pgm")


def test_size_mismatch_on_load(tmp_path):
    big, small = generate_synthetic(1, 1, 128)[0], generate_synthetic(1, 1, 64)[0]
    save_dataset([big], tmp_path)
    write_gray(tmp_path / "masks" / f"{big.id}.pgm", small.mask)
    with pytest.raises(DataError, match="differ in size"):
        load_dataset(tmp_path)

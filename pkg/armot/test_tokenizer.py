"""
Testy tokenizera obrazu, adaptera obiektów i dyskretyzacji prostokątów.
"""

import math

import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from armot.core import BBox, Detection, ModelDims
from armot.errors import ConfigError, ShapeError
from armot.tokenizer import (
    BoxDiscretizer, ImageTokenizer, ObjectAdapter, appearance_statistics, discretize_box, encode_query,
    image_tokenize, object_tokenize_query,
)

DIMS = ModelDims(d_img=8, d_lm=16, d_det=12, patch=8)


@pytest.mark.parametrize("height, width, grid", [(32, 32, (4, 4)), (32, 48, (4, 6))])
def test_token_count(height, width, grid):
    torch.manual_seed(0)
    tokens = image_tokenize(np.random.default_rng(0).random((height, width, 3)), DIMS)
    assert (tokens.grid_h, tokens.grid_w) == grid
    assert tuple(tokens.tokens.shape) == (grid[0] * grid[1], DIMS.d_lm)
    assert tuple(tokens.features.shape) == (grid[0] * grid[1], DIMS.d_img)


def test_constant_image_gives_identical_tokens():
    torch.manual_seed(0)
    tokens = image_tokenize(np.zeros((32, 32, 3)), DIMS).tokens
    assert torch.allclose(tokens, tokens[0].expand_as(tokens))


def test_image_not_divisible_by_patch():
    with pytest.raises(ShapeError):
        image_tokenize(np.zeros((30, 32, 3)), DIMS)
    with pytest.raises(ShapeError):
        ImageTokenizer(DIMS).encode(torch.zeros(1, 3, 32, 36))


def test_zero_query_with_zero_last_layer():
    adapter = ObjectAdapter(DIMS)
    adapter.zero_init_last()
    detection = Detection(BBox(0.1, 0.1, 0.2, 0.2), 0.9, np.zeros(DIMS.d_det, dtype=np.float32))
    assert torch.count_nonzero(object_tokenize_query(detection, adapter)) == 0


def test_identical_detections_identical_tokens():
    torch.manual_seed(1)
    adapter = ObjectAdapter(DIMS)
    query = np.random.default_rng(1).normal(size=DIMS.d_det).astype(np.float32)
    a = Detection(BBox(0.1, 0.1, 0.2, 0.2), 0.9, query)
    b = Detection(BBox(0.1, 0.1, 0.2, 0.2), 0.9, query.copy())
    assert torch.equal(object_tokenize_query(a, adapter), object_tokenize_query(b, adapter))


def test_adapter_matches_explicit_matrix_products():
    torch.manual_seed(2)
    adapter = ObjectAdapter(DIMS)
    x = torch.randn(5, DIMS.d_det)
    first, last = adapter.mlp[0], adapter.mlp[2]
    hidden = x @ first.weight.T + first.bias
    hidden = 0.5 * hidden * (1.0 + torch.erf(hidden / math.sqrt(2.0)))
    expected = hidden @ last.weight.T + last.bias
    assert torch.allclose(adapter(x), expected, atol=1e-5)


def test_adapter_rejects_wrong_length():
    with pytest.raises(ShapeError):
        ObjectAdapter(DIMS)(torch.zeros(3, DIMS.d_det + 1))


def test_adapter_gradcheck():
    torch.manual_seed(3)
    adapter = ObjectAdapter(ModelDims(d_img=4, d_lm=6, d_det=5, patch=8)).double()
    x = torch.randn(2, 5, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(adapter, (x,), eps=1e-6, atol=1e-6, rtol=1e-3)


def test_image_tokenizer_gradcheck():
    torch.manual_seed(4)
    tokenizer = ImageTokenizer(ModelDims(d_img=3, d_lm=4, d_det=4, patch=2)).double()
    images = torch.randn(1, 3, 4, 4, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(lambda x: tokenizer.encode(x)[0], (images,), eps=1e-6, atol=1e-6, rtol=1e-3)


@pytest.mark.parametrize("coordinate, n_bins, alpha, expected", [
    (0.5, 100, 1.0, 50),
    (1.0, 100, 1.0, 99),
    (0.5, 100, 0.5, 25),
    (0.0, 100, 0.4, 0),
])
def test_bin_arithmetic(coordinate, n_bins, alpha, expected):
    assert BoxDiscretizer(n_bins, alpha).bin(coordinate) == expected


def test_discretize_box_with_offset():
    disc = BoxDiscretizer(n_bins=10, alpha=1.0, offset=65)
    assert discretize_box(BBox(0.0, 0.25, 0.5, 1.0), disc) == (65, 67, 70, 74)
    assert BoxDiscretizer(100, 0.5).effective_bins == 50


def test_discretizer_validation():
    with pytest.raises(ConfigError):
        BoxDiscretizer(n_bins=0)
    with pytest.raises(ConfigError):
        BoxDiscretizer(alpha=0.0)


def test_query_encoding_is_deterministic_and_sized():
    image = np.random.default_rng(5).random((32, 32, 3))
    bbox = BBox(0.2, 0.2, 0.6, 0.5)
    appearance = appearance_statistics(image, bbox)
    assert appearance.shape == (6,)
    first = encode_query(bbox, appearance, 63)
    assert first.shape == (63,)
    assert np.array_equal(first, encode_query(bbox, appearance, 63))
    assert not np.array_equal(first, encode_query(BBox(0.3, 0.2, 0.7, 0.5), appearance, 63))


@given(
    st.floats(0.0, 1.0), st.floats(0.0, 1.0),
    st.integers(1, 400), st.floats(0.05, 1.0), st.integers(0, 100),
)
def test_bins_are_monotone_and_in_range(a, b, n_bins, alpha, offset):
    disc = BoxDiscretizer(n_bins, alpha, offset)
    low, high = sorted((a, b))
    assert 0 <= disc.bin(low) <= disc.bin(high) <= disc.effective_bins - 1
    if low < high:
        x1, y1, x2, y2 = discretize_box(BBox(low, low, high, high), disc)
        assert offset <= x1 <= x2 < offset + disc.effective_bins
        assert (x1, x2) == (y1, y2)

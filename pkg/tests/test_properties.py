"""Property tests for the pure pixel-level invariants."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from garmentgan import networks as nets
from garmentgan import preprocess as pp
from garmentgan.data import encode_onehot


small_dims = st.integers(min_value=4, max_value=24)


@st.composite
def region_in(draw, width, height):
    x0 = draw(st.integers(0, width - 2))
    y0 = draw(st.integers(0, height - 2))
    x1 = draw(st.integers(x0 + 1, width))
    y1 = draw(st.integers(y0 + 1, height))
    return pp.RegionBox(x0, y0, x1, y1)


@settings(max_examples=40, deadline=None)
@given(data=st.data(), w=small_dims, h=small_dims, seed=st.integers(0, 2**16), fill=st.floats(-1, 1))
def test_mask_out_touches_exactly_the_region(data, w, h, seed, fill):
    region = data.draw(region_in(w, h))
    img = np.random.default_rng(seed).uniform(-1, 1, size=(3, h, w)).astype(np.float32)
    out = pp.mask_out(img, region, fill=fill)
    inside = np.zeros((h, w), dtype=bool)
    inside[region.y0 : region.y1, region.x0 : region.x1] = True
    assert np.array_equal(out.pixels[:, ~inside], img[:, ~inside])
    assert np.all(out.pixels[:, inside] == np.float32(fill))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**16), n=st.integers(2, 12))
def test_blend_passes_base_wherever_mask_is_zero(seed, n):
    rng = np.random.default_rng(seed)
    base = rng.uniform(-1, 1, size=(3, n, n))
    color = rng.uniform(-1, 1, size=(3, n, n))
    mask = np.where(rng.uniform(size=(n, n)) < 0.5, 0.0, rng.uniform(size=(n, n)))
    out = nets.masked_blend(mask, color, base)
    zero = mask == 0.0
    assert np.array_equal(out[:, zero], base[:, zero])
    assert np.all(out[:, ~zero] == mask[~zero] * color[:, ~zero] + (1 - mask[~zero]) * base[:, ~zero])


@settings(max_examples=64, deadline=None)
@given(st.integers(0, 255))
def test_normalize_roundtrip_is_exact_per_level(level):
    img = np.full((2, 2, 3), level, dtype=np.uint8)
    assert np.array_equal(pp.denormalize(pp.normalize(img)), img)


@settings(max_examples=40, deadline=None)
@given(class_count=st.integers(2, 12), data=st.data())
def test_onehot_roundtrip(class_count, data):
    type_id = data.draw(st.integers(0, class_count - 1))
    v = encode_onehot(type_id, class_count)
    assert v.sum() == 1.0
    assert int(np.argmax(v)) == type_id


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 60), seed=st.integers(0, 2**16), frac=st.floats(0.1, 0.9))
def test_split_is_a_deterministic_partition(n, seed, frac):
    import math

    from garmentgan.data import split_dataset
    from garmentgan.errors import DegenerateSplit

    from test_data import dummy_manifest

    m = dummy_manifest(n)
    n_train = math.floor(n * frac)
    if n_train == 0 or n_train == n:
        try:
            split_dataset(m, frac, seed)
        except DegenerateSplit:
            return
        raise AssertionError("expected DegenerateSplit")
    a_train, a_test = split_dataset(m, frac, seed)
    b_train, b_test = split_dataset(m, frac, seed)
    assert [id(r) for r in a_train.records] == [id(r) for r in b_train.records]
    assert [id(r) for r in a_test.records] == [id(r) for r in b_test.records]
    assert len(a_train) == n_train
    ids = sorted([id(r) for r in a_train.records] + [id(r) for r in a_test.records])
    assert ids == sorted(id(r) for r in m.records)

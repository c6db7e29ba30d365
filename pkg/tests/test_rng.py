import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rumorlab.rng import (
    MASK64,
    TAG_ENV,
    TAG_RADIUS,
    TAG_REPLICATE_ENV,
    TAG_REPLICATE_PROC,
    RandomStream,
    block_uniforms,
    child_keys,
    derive,
    keyed_uniform,
    mix64,
    mix64_array,
    replicate_seeds,
    stream_uniforms,
    to_unit,
)


def test_scalar_and_vector_mixers_agree():
    xs = [0, 1, 2**32, MASK64, 0x123456789ABCDEF]
    assert [int(v) for v in mix64_array(np.array(xs, dtype=np.uint64))] == [mix64(x) for x in xs]


def test_derive_is_order_sensitive_and_stable():
    assert derive(1, 2, 3) == derive(1, 2, 3)
    assert derive(1, 2, 3) != derive(3, 2, 1)
    assert derive(-1) == derive(MASK64)
    assert 0 <= derive(7) <= MASK64


def test_to_unit_stays_inside_the_open_interval():
    u = to_unit(np.array([0, MASK64], dtype=np.uint64))
    assert 0.0 < u[0] < 1e-15
    assert 1.0 - 1e-15 < u[1] < 1.0


@given(key=st.integers(0, MASK64), start=st.integers(0, 10**6), count=st.integers(1, 200))
def test_streams_are_addressable_by_position(key, start, count):
    whole = stream_uniforms(key, 0, start + count)
    assert np.array_equal(stream_uniforms(key, start, count), whole[start:])
    assert np.all((whole > 0) & (whole < 1))


def test_block_rows_are_streams():
    keys = np.array([derive(i) for i in range(5)], dtype=np.uint64)
    block = block_uniforms(keys, 10, 30)
    for r, k in enumerate(keys):
        assert np.array_equal(block[r], stream_uniforms(int(k), 10, 30))


def test_stream_is_roughly_uniform():
    u = stream_uniforms(derive(2024), 0, 200_000)
    assert abs(u.mean() - 0.5) < 0.005
    hist, _ = np.histogram(u, bins=10, range=(0, 1))
    assert hist.min() > 19_000 and hist.max() < 21_000


def test_replicate_seeds_are_prefix_stable_and_tag_separated():
    a = replicate_seeds(99, 100, TAG_REPLICATE_ENV)
    assert np.array_equal(a[:10], replicate_seeds(99, 10, TAG_REPLICATE_ENV))
    assert len(set(a.tolist())) == 100
    assert not set(a.tolist()) & set(replicate_seeds(99, 100, TAG_REPLICATE_PROC).tolist())
    assert not np.array_equal(a, replicate_seeds(100, 100, TAG_REPLICATE_ENV))


def test_child_keys_distinct_for_siblings():
    kids = child_keys(np.full(1000, derive(5), dtype=np.uint64), np.arange(1000))
    assert len(set(kids.tolist())) == 1000


def test_keyed_uniform_depends_on_tag():
    keys = np.arange(100, dtype=np.uint64)
    a, b = keyed_uniform(keys, TAG_ENV), keyed_uniform(keys, TAG_RADIUS)
    assert np.array_equal(a, keyed_uniform(keys, TAG_ENV))
    assert not np.allclose(a, b)


def test_random_stream_walks_forward():
    s = RandomStream(11, TAG_ENV)
    first, second = s.uniforms(5), s.uniforms(5)
    assert np.array_equal(np.concatenate([first, second]), RandomStream(11, TAG_ENV).uniforms(10))
    assert s.position == 10
    child = s.spawn(TAG_RADIUS)
    assert child.position == 0
    assert not np.array_equal(child.uniforms(5), first)


@pytest.mark.parametrize("n", [0, 1])
def test_empty_and_single_draws(n):
    assert RandomStream(1).uniforms(n).shape == (n,)

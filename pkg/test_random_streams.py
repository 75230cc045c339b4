"""
Tests for the counter-based replication streams
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# Add current directory to path
sys.path.append(str(Path(__file__).parent))

from utils.random_streams import RandomStream, derive


def test_same_seed_and_index_repeat():
    """derive(s, i) twice gives identical sequences"""
    a = derive(7, 3).uniforms(1000)
    b = derive(7, 3).uniforms(1000)
    assert np.array_equal(a, b)


def test_different_master_seed_differs():
    a = derive(7, 3).uniforms(100)
    b = derive(8, 3).uniforms(100)
    assert not np.array_equal(a, b)


def test_distinct_indices_uncorrelated():
    """First 10^6 outputs of two sibling streams are uncorrelated"""
    n = 10 ** 6
    a = derive(2014, 0).generator.random(n)
    b = derive(2014, 1).generator.random(n)
    r = np.corrcoef(a, b)[0, 1]
    assert abs(r) < 0.01


def test_block_size_does_not_change_the_sequence():
    small = derive(11, 5, block_size=3).uniforms(50)
    large = derive(11, 5, block_size=4096).uniforms(50)
    assert np.array_equal(small, large)


def test_uniform_matches_generator_order():
    stream = derive(1, 2)
    expected = np.random.Generator(np.random.Philox(key=np.array([1, 2], dtype=np.uint64))).random(10)
    assert [stream.uniform() for _ in range(10)] == list(expected)


def test_uniforms_in_unit_interval_and_counted():
    stream = derive(0, 0)
    values = stream.uniforms(5000)
    assert np.all(values >= 0.0) and np.all(values < 1.0)
    assert stream.consumed == 5000


def test_stream_remembers_its_key():
    stream = derive(42, 9)
    assert stream.master_seed == 42
    assert stream.index == 9
    assert "master_seed=42" in repr(stream)


@pytest.mark.parametrize("seed,index", [(-1, 0), (0, -1), (2 ** 64, 0), (0, 2 ** 64)])
def test_out_of_range_keys_rejected(seed, index):
    with pytest.raises(ValueError):
        derive(seed, index)


def test_largest_keys_accepted():
    stream = derive(2 ** 64 - 1, 2 ** 64 - 1)
    assert 0.0 <= stream.uniform() < 1.0


def test_block_size_must_be_positive():
    with pytest.raises(ValueError):
        RandomStream(np.random.default_rng(0), block_size=0)

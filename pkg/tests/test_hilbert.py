import itertools

import numpy as np
import pytest

from oracles import hilbert_d2xy
from wabc.distances import hilbert_sort
from wabc.hilbert import BoxMapping, hilbert_index, hilbert_order

UNIT2 = BoxMapping(np.zeros(2), np.ones(2))


def cell_centres(bits, d):
    side = 1 << bits
    return [(np.array(c) + 0.5) / side for c in itertools.product(range(side), repeat=d)]


def test_first_order_curve():
    keys = {tuple(int(v) for v in c * 2 - 0.5): hilbert_index(c, UNIT2, bits=1) for c in cell_centres(1, 2)}
    order = sorted(keys, key=keys.get)
    assert order == [(0, 0), (0, 1), (1, 1), (1, 0)]
    assert sorted(keys.values()) == [0, 1, 2, 3]


def test_univariate_key_is_quantized_coordinate():
    m = BoxMapping(np.zeros(1), np.ones(1))
    assert hilbert_index([0.3], m, bits=4) == int(0.3 * 16)


def test_identical_points_same_key():
    assert hilbert_index([0.2, 0.7], UNIT2) == hilbert_index([0.2, 0.7], UNIT2)


@pytest.mark.parametrize("bits", [2, 3, 4])
def test_2d_keys_match_textbook_curve_up_to_orientation(bits):
    side = 1 << bits
    ours = {}
    for c in cell_centres(bits, 2):
        ours[hilbert_index(c, UNIT2, bits)] = tuple(int(v) for v in np.floor(c * side))
    assert sorted(ours) == list(range(side * side))
    ref = [hilbert_d2xy(bits, k) for k in range(side * side)]
    # the two constructions may differ by swapping the axes
    assert [ours[k] for k in range(side * side)] in (ref, [(b, a) for a, b in ref])


@pytest.mark.parametrize("d,bits", [(2, 3), (3, 2), (4, 2)])
def test_curve_is_continuous_and_bijective(d, bits):
    side = 1 << bits
    mapping = BoxMapping(np.zeros(d), np.ones(d))
    cells = {}
    for c in cell_centres(bits, d):
        cells[hilbert_index(c, mapping, bits)] = np.floor(c * side).astype(int)
    assert sorted(cells) == list(range(side**d))
    for k in range(side**d - 1):
        assert np.abs(cells[k + 1] - cells[k]).sum() == 1


def test_order_agrees_with_index_and_is_stable():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, (200, 3))
    x[50] = x[10]
    m = BoxMapping.from_data(x)
    perm, clamped = hilbert_order(x, m, 8)
    keys = [hilbert_index(p, m, 8) for p in x]
    assert np.array_equal(perm, np.array(sorted(range(200), key=lambda i: (keys[i], i))))
    assert clamped == 0


def test_wide_keys_sort_lexicographically():
    # 5 dims x 16 bits needs two 64-bit words
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 1, (100, 5))
    m = BoxMapping.from_data(x)
    perm = hilbert_sort(x, m, 16)
    keys = [hilbert_index(p, m, 16) for p in x]
    assert np.array_equal(perm, np.argsort(keys, kind="stable"))


def test_out_of_box_points_are_clamped_and_counted():
    m = BoxMapping(np.zeros(2), np.ones(2))
    x = np.array([[0.5, 0.5], [1.5, 0.2], [-3.0, 0.9]])
    _, clamped = hilbert_order(x, m, 4)
    assert clamped == 2
    assert hilbert_index([1.5, 0.2], m, 4) == hilbert_index([0.99999, 0.2], m, 4)


def test_mapping_margin():
    x = np.array([[0.0, 10.0], [1.0, 20.0]])
    m = BoxMapping.from_data(x)
    u, clamped = m(x)
    assert clamped == 0
    assert np.allclose(u.min(axis=0), 0.05 / 1.1) and np.allclose(u.max(axis=0), 1.05 / 1.1)


def test_bits_must_be_positive():
    with pytest.raises(ValueError):
        hilbert_index([0.1, 0.2], UNIT2, bits=0)

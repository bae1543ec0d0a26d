import gzip

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from drcb.env import (Action, ContextLabel, ContextSource, IdxFormatError, Parity, encode_idx1,
                      load_idx1, parse_idx1, payoff)

C, D = Action.C, Action.D


@pytest.mark.parametrize("a, b, digit, expected", [
    (C, C, 3, (3, 3)),
    (D, C, 3, (5, -1)),
    (C, D, 3, (-1, 5)),
    (D, D, 3, (0, 0)),
    (C, C, 4, (5, 5)),
    (D, C, 4, (5, -1)),
    (C, D, 0, (-1, 5)),
    (D, D, 8, (0, 0)),
])
def test_payoff_table(a, b, digit, expected):
    r = payoff(a, b, ContextLabel(digit))
    assert (r.reward_a, r.reward_b) == expected
    assert r.joint == sum(expected)


def test_joint_reward_extremes():
    assert payoff(C, C, ContextLabel(2)).joint == 10
    assert payoff(D, D, ContextLabel(2)).joint == 0


@given(st.integers(0, 9))
def test_parity(d):
    assert ContextLabel(d).parity == (Parity.EVEN if d % 2 == 0 else Parity.ODD)


@pytest.mark.parametrize("d", [-1, 10])
def test_context_rejects_non_digits(d):
    with pytest.raises(ValueError):
        ContextLabel(d)


def test_synthetic_source_is_seeded_and_roughly_uniform():
    def draw(seed):
        rng, src = np.random.default_rng(seed), ContextSource()
        return [src.next_context(rng).digit for _ in range(20)]

    assert draw(5) == draw(5)
    rng = np.random.default_rng(0)
    src = ContextSource()
    counts = np.bincount([src.next_context(rng).digit for _ in range(10000)], minlength=10)
    assert np.all(np.abs(counts - 1000) < 4 * np.sqrt(900))


def test_ingested_source_wraps_around():
    src = ContextSource([7, 2, 9])
    rng = np.random.default_rng(0)
    assert [src.next_context(rng).digit for _ in range(7)] == [7, 2, 9, 7, 2, 9, 7]


@given(st.lists(st.integers(0, 9), max_size=200))
def test_idx1_round_trip(labels):
    np.testing.assert_array_equal(parse_idx1(encode_idx1(labels)), labels)


def test_idx1_header_layout():
    assert encode_idx1([5, 0])[:8] == bytes.fromhex("0000080100000002")


def test_idx1_rejects_bad_magic_and_truncation():
    with pytest.raises(IdxFormatError):
        parse_idx1(bytes.fromhex("00000803") + (1).to_bytes(4, "big") + b"\x01")
    with pytest.raises(IdxFormatError):
        parse_idx1(encode_idx1([1, 2, 3])[:-1])
    with pytest.raises(IdxFormatError):
        parse_idx1(b"\x00\x00")


def test_load_idx1_plain_and_gzip(tmp_path):
    raw = encode_idx1([3, 1, 4, 1, 5])
    (tmp_path / "l.idx1").write_bytes(raw)
    with gzip.open(tmp_path / "l.idx1.gz", "wb") as fh:
        fh.write(raw)
    np.testing.assert_array_equal(load_idx1(tmp_path / "l.idx1"), [3, 1, 4, 1, 5])
    np.testing.assert_array_equal(load_idx1(tmp_path / "l.idx1.gz"), [3, 1, 4, 1, 5])

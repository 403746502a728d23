import itertools
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proxyhash.codespace import (
    BinaryCode,
    PackedCodes,
    ProxyCodebook,
    hamming_distance,
    hamming_matrix,
    inner_product,
    load_codes,
    pack,
    save_codes,
    sgn,
    surrogate_proxy,
    unpack,
)
from proxyhash.errors import DimensionError, FormatError, InvalidInputError, InvalidLabelError


def naive_hamming(a, b):
    return sum(1 for x, y in zip(a, b) if x != y)


def code(*values):
    return BinaryCode.from_signs(np.array(values))


class TestSgn:
    def test_examples(self):
        assert sgn([0.7, -0.2, 0.0]).tolist() == [1, -1, 1]
        assert sgn([1, 1, 1]).tolist() == [1, 1, 1]
        assert sgn([-0.001, 0.999]).tolist() == [-1, 1]

    def test_rejects_nan(self):
        with pytest.raises(InvalidInputError):
            sgn([0.1, np.nan])

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=40))
    def test_idempotent(self, values):
        once = sgn(values)
        assert np.array_equal(sgn(once.astype(float)), once)


class TestPacking:
    def test_layout_lsb_first(self):
        signs = -np.ones(70, dtype=int)
        signs[[0, 3, 64, 69]] = 1
        words = pack(signs)
        assert words.tolist() == [0b1001, (1 << 0) | (1 << 5)]

    def test_padding_zero(self):
        words = pack(np.ones(65, dtype=int))
        assert words[1] == 1

    @given(st.integers(1, 200).flatmap(lambda k: st.lists(st.sampled_from([-1, 1]), min_size=k, max_size=k)))
    def test_roundtrip(self, values):
        v = np.array(values)
        assert np.array_equal(unpack(pack(v), len(v)), v)

    def test_rejects_non_sign_values(self):
        with pytest.raises(InvalidInputError):
            pack(np.array([1, 0, -1]))


class TestDistances:
    def test_inner_product_examples(self):
        a = BinaryCode.from_signs(np.array([1, -1, 1, 1, -1, -1, 1, 1]))
        assert inner_product(a, a) == 8
        assert inner_product(a, -a) == -8
        assert inner_product(code(1, 1, 1, 1), code(1, 1, -1, -1)) == 0

    def test_hamming_examples(self, rng):
        a = BinaryCode.from_signs(rng.choice([-1, 1], 32))
        assert hamming_distance(a, a) == 0
        assert hamming_distance(a, -a) == 32
        assert hamming_distance(code(1, 1, 1, 1), code(1, 1, -1, -1)) == 2

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            hamming_distance(code(1, 1), code(1, 1, 1))
        with pytest.raises(DimensionError):
            inner_product(code(1), code(1, -1))

    @pytest.mark.parametrize("k", [1, 3, 8])
    def test_exhaustive_small_k(self, k):
        all_codes = [np.array(c) for c in itertools.product([-1, 1], repeat=k)]
        packed = [BinaryCode.from_signs(c) for c in all_codes]
        for (a, pa), (b, pb) in itertools.product(zip(all_codes, packed), repeat=2):
            d = hamming_distance(pa, pb)
            assert d == naive_hamming(a, b)
            assert 2 * d == k - inner_product(pa, pb)

    def test_random_pairs_k16(self, rng):
        a = rng.choice([-1, 1], size=(10_000, 16))
        b = rng.choice([-1, 1], size=(10_000, 16))
        pa, pb = PackedCodes.from_signs(a), PackedCodes.from_signs(b)
        for i in range(len(a)):
            assert hamming_distance(pa[i], pb[i]) == int(np.sum(a[i] != b[i]))

    def test_metric_axioms(self, rng):
        codes = PackedCodes.from_signs(rng.choice([-1, 1], size=(40, 100)))
        d = hamming_matrix(codes, codes)
        assert np.array_equal(d, d.T)
        assert np.all(np.diag(d) == 0)
        off = ~np.eye(40, dtype=bool)
        assert np.all(d[off] > 0)  # distinct with overwhelming probability
        for i, j, l in rng.integers(0, 40, size=(500, 3)):
            assert d[i, l] <= d[i, j] + d[j, l]

    def test_matrix_matches_pairwise(self, rng):
        q = PackedCodes.from_signs(rng.choice([-1, 1], size=(5, 130)))
        db = PackedCodes.from_signs(rng.choice([-1, 1], size=(7, 130)))
        d = hamming_matrix(q, db)
        for i in range(5):
            for j in range(7):
                assert d[i, j] == hamming_distance(q[i], db[j])


class TestSurrogateProxy:
    def test_singleton(self, rng):
        book = ProxyCodebook(rng.choice([-1, 1], size=(4, 16)))
        assert np.array_equal(surrogate_proxy(book, [2]), book.codes[2].astype(float))

    def test_mean_of_two(self):
        book = ProxyCodebook(np.array([[-1, -1, -1, -1], [1, 1, 1, 1], [1, 1, -1, -1]]))
        assert surrogate_proxy(book, {1, 2}).tolist() == [1, 1, 0, 0]

    def test_balanced_codebook_gives_zero(self):
        book = ProxyCodebook(np.array([[1, -1, 1], [-1, 1, -1]]))
        assert surrogate_proxy(book, [0, 1]).tolist() == [0, 0, 0]

    def test_empty_rejected(self):
        book = ProxyCodebook(np.ones((2, 4), dtype=int))
        with pytest.raises(InvalidLabelError):
            surrogate_proxy(book, [])
        with pytest.raises(InvalidLabelError):
            surrogate_proxy(book, [5])


class TestCodeFile:
    def test_roundtrip(self, tmp_path, rng):
        codes = PackedCodes.from_signs(rng.choice([-1, 1], size=(9, 70)))
        save_codes(tmp_path / "c.pxh", codes)
        blob = (tmp_path / "c.pxh").read_bytes()
        assert blob[:4] == b"PXH1"
        assert struct.unpack("<II", blob[4:12]) == (9, 70)
        assert len(blob) == 12 + 9 * 2 * 8
        assert load_codes(tmp_path / "c.pxh") == codes

    def test_bad_magic_and_truncation(self, tmp_path, rng):
        codes = PackedCodes.from_signs(rng.choice([-1, 1], size=(3, 8)))
        save_codes(tmp_path / "c.pxh", codes)
        blob = (tmp_path / "c.pxh").read_bytes()
        (tmp_path / "t.pxh").write_bytes(blob[:-3])
        with pytest.raises(FormatError, match="t.pxh"):
            load_codes(tmp_path / "t.pxh")
        (tmp_path / "m.pxh").write_bytes(b"XXXX" + blob[4:])
        with pytest.raises(FormatError):
            load_codes(tmp_path / "m.pxh")

    def test_padding_bits_rejected(self, tmp_path):
        (tmp_path / "p.pxh").write_bytes(b"PXH1" + struct.pack("<IIQ", 1, 4, 0xFF))
        with pytest.raises(FormatError, match="padding"):
            load_codes(tmp_path / "p.pxh")

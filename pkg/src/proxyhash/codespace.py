"""Binary codes, the sign quantizer and Hamming-space primitives.

Codes live in two forms. Arithmetic (losses, gradients, consensus) works on
dense ``{-1, +1}`` arrays; storage and ranking work on bit-packed words.

Packing layout: element ``j`` of a length-``k`` code maps to bit ``j % 64`` of
word ``j // 64`` (LSB first), and the bit is set iff the element is ``+1``.
Bits past ``k`` in the last word are always zero.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError, InvalidInputError, InvalidLabelError

CODE_MAGIC = b"PXH1"
WORD_BITS = 64


def n_words(k: int) -> int:
    return -(-k // WORD_BITS)


def sgn(values) -> np.ndarray:
    """Element-wise sign with ``sgn(0) = +1``. Returns an int8 array of +-1."""
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("sgn() received non-finite values")
    return np.where(values >= 0, 1, -1).astype(np.int8)


def _check_signs(signs: np.ndarray) -> None:
    if not np.all((signs == 1) | (signs == -1)):
        raise InvalidInputError("binary codes must contain only -1 and +1")


def pack(signs) -> np.ndarray:
    """Pack ``(..., k)`` +-1 values into ``(..., ceil(k/64))`` uint64 words."""
    signs = np.asarray(signs)
    _check_signs(signs)
    k = signs.shape[-1]
    lead = signs.shape[:-1]
    bits = (signs > 0).reshape(-1, k)
    padded = np.zeros((bits.shape[0], n_words(k) * WORD_BITS), dtype=bool)
    padded[:, :k] = bits
    packed = np.packbits(padded, axis=1, bitorder="little")
    words = packed.view("<u8").astype(np.uint64)
    return words.reshape(*lead, n_words(k))


def unpack(words, k: int) -> np.ndarray:
    """Inverse of :func:`pack`; returns int8 +-1 values of shape ``(..., k)``."""
    words = np.asarray(words, dtype=np.uint64)
    if words.shape[-1] != n_words(k):
        raise DimensionError(f"expected {n_words(k)} words for k={k}, got {words.shape[-1]}")
    lead = words.shape[:-1]
    raw = np.ascontiguousarray(words.reshape(-1, words.shape[-1]).astype("<u8")).view(np.uint8)
    bits = np.unpackbits(raw, axis=1, bitorder="little")[:, :k]
    return (bits.astype(np.int8) * 2 - 1).reshape(*lead, k)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class BinaryCode:
    """A single packed code of length ``k``."""

    k: int
    words: np.ndarray

    def __post_init__(self):
        words = np.asarray(self.words, dtype=np.uint64)
        if self.k <= 0:
            raise DimensionError("code length must be positive")
        if words.shape != (n_words(self.k),):
            raise DimensionError(f"expected {n_words(self.k)} words, got shape {words.shape}")
        object.__setattr__(self, "words", _frozen(words))

    @classmethod
    def from_signs(cls, signs) -> "BinaryCode":
        signs = np.asarray(signs)
        if signs.ndim != 1:
            raise DimensionError("BinaryCode.from_signs expects a 1-D array")
        return cls(signs.shape[0], pack(signs))

    def signs(self) -> np.ndarray:
        return unpack(self.words, self.k)

    def __neg__(self) -> "BinaryCode":
        return BinaryCode.from_signs(-self.signs())

    def __eq__(self, other):
        if not isinstance(other, BinaryCode):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.words, other.words)

    def __hash__(self):
        return hash((self.k, self.words.tobytes()))


@dataclass(frozen=True, eq=False)
class PackedCodes:
    """``n`` packed codes of a shared length ``k``; ``words`` has shape ``(n, W)``."""

    k: int
    words: np.ndarray

    def __post_init__(self):
        words = np.asarray(self.words, dtype=np.uint64)
        if words.ndim != 2 or words.shape[1] != n_words(self.k):
            raise DimensionError(f"expected (n, {n_words(self.k)}) words, got {words.shape}")
        object.__setattr__(self, "words", _frozen(words))

    @classmethod
    def from_signs(cls, signs) -> "PackedCodes":
        signs = np.atleast_2d(np.asarray(signs))
        return cls(signs.shape[1], pack(signs))

    def signs(self) -> np.ndarray:
        return unpack(self.words, self.k)

    def __len__(self):
        return self.words.shape[0]

    def __getitem__(self, i) -> BinaryCode:
        return BinaryCode(self.k, self.words[i])

    def __eq__(self, other):
        if not isinstance(other, PackedCodes):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.words, other.words)


def _same_length(a: BinaryCode, b: BinaryCode) -> None:
    if a.k != b.k:
        raise DimensionError(f"code length mismatch: {a.k} vs {b.k}")


def hamming_distance(a: BinaryCode, b: BinaryCode) -> int:
    _same_length(a, b)
    return int(np.bitwise_count(a.words ^ b.words).sum())


def inner_product(a: BinaryCode, b: BinaryCode) -> int:
    """``sum_j a_j * b_j`` for +-1 codes, i.e. ``k - 2 * hamming``."""
    return a.k - 2 * hamming_distance(a, b)


def hamming_matrix(queries: PackedCodes, database: PackedCodes) -> np.ndarray:
    """All-pairs Hamming distances, shape ``(len(queries), len(database))``."""
    if queries.k != database.k:
        raise DimensionError(f"code length mismatch: {queries.k} vs {database.k}")
    q, db = queries.words, database.words
    dist = np.zeros((q.shape[0], db.shape[0]), dtype=np.int32)
    for w in range(q.shape[1]):
        dist += np.bitwise_count(q[:, w, None] ^ db[None, :, w]).astype(np.int32)
    return dist


@dataclass(frozen=True, eq=False)
class ProxyCodebook:
    """One +-1 proxy code per category, stored densely as a ``(c, k)`` int8 array."""

    codes: np.ndarray

    def __post_init__(self):
        codes = np.asarray(self.codes)
        if codes.ndim != 2 or codes.shape[0] < 1 or codes.shape[1] < 1:
            raise DimensionError("codebook must be a non-empty (c, k) array")
        _check_signs(codes)
        object.__setattr__(self, "codes", _frozen(codes.astype(np.int8)))

    @property
    def c(self) -> int:
        return self.codes.shape[0]

    @property
    def k(self) -> int:
        return self.codes.shape[1]

    def packed(self) -> PackedCodes:
        return PackedCodes.from_signs(self.codes)

    def __getitem__(self, i) -> BinaryCode:
        return BinaryCode.from_signs(self.codes[i])

    def __eq__(self, other):
        if not isinstance(other, ProxyCodebook):
            return NotImplemented
        return np.array_equal(self.codes, other.codes)


def surrogate_proxy(codebook: ProxyCodebook, positives) -> np.ndarray:
    """Mean of the proxy codes indexed by ``positives``, kept as float64."""
    idx = np.asarray(sorted(set(int(i) for i in positives)), dtype=np.int64)
    if idx.size == 0:
        raise InvalidLabelError("surrogate proxy needs at least one positive category")
    if idx[0] < 0 or idx[-1] >= codebook.c:
        raise InvalidLabelError(f"category index out of range for c={codebook.c}")
    return codebook.codes[idx].astype(np.float64).mean(axis=0)


def surrogate_proxies(codebook: ProxyCodebook, labels: np.ndarray) -> np.ndarray:
    """Row-wise surrogate proxies for a multi-hot ``(n, c)`` label matrix."""
    labels = np.asarray(labels, dtype=np.float64)
    counts = labels.sum(axis=1, keepdims=True)
    if np.any(counts == 0):
        raise InvalidLabelError(f"label row {int(np.flatnonzero(counts[:, 0] == 0)[0])} is empty")
    return labels @ codebook.codes.astype(np.float64) / counts


def save_codes(path, codes: PackedCodes) -> None:
    """Write the ``PXH1`` packed-code file."""
    header = CODE_MAGIC + struct.pack("<II", len(codes), codes.k)
    Path(path).write_bytes(header + codes.words.astype("<u8").tobytes())


def load_codes(path) -> PackedCodes:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 12 or blob[:4] != CODE_MAGIC:
        raise FormatError(f"{path}: not a PXH1 code file")
    n, k = struct.unpack("<II", blob[4:12])
    if k == 0:
        raise FormatError(f"{path}: code length is zero")
    expected = 12 + n * n_words(k) * 8
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for n={n}, k={k}, got {len(blob)}")
    words = np.frombuffer(blob, dtype="<u8", offset=12).reshape(n, n_words(k)).astype(np.uint64)
    if k % WORD_BITS and n:
        spare = ~np.uint64((1 << (k % WORD_BITS)) - 1)
        if np.any(words[:, -1] & spare):
            raise FormatError(f"{path}: padding bits set past k={k}")
    return PackedCodes(k, words)

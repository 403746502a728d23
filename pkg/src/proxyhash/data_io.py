"""Paired two-modality datasets: synthetic generation, splits and disk format.

A dataset directory holds four files::

    meta.txt     ASCII key=value lines (n, d_v, d_t, c); unknown keys ignored
    img.f32      n x d_v little-endian float32, row-major
    txt.f32      n x d_t little-endian float32, row-major
    labels.u8    n x c bytes, each 0 or 1
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, FormatError, InvalidInputError, InvalidLabelError

META_KEYS = ("n", "d_v", "d_t", "c")


@dataclass(eq=False)
class PairedDataset:
    img: np.ndarray  # (n, d_v)
    txt: np.ndarray  # (n, d_t)
    labels: np.ndarray  # (n, c) uint8 multi-hot

    def __post_init__(self):
        self.img = np.asarray(self.img, dtype=np.float32)
        self.txt = np.asarray(self.txt, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        if self.img.ndim != 2 or self.txt.ndim != 2 or self.labels.ndim != 2:
            raise DimensionError("features and labels must be 2-D")
        n = self.img.shape[0]
        if self.txt.shape[0] != n or self.labels.shape[0] != n:
            raise DimensionError("modalities and labels disagree on n")
        if not (np.all(np.isfinite(self.img)) and np.all(np.isfinite(self.txt))):
            raise InvalidInputError("features contain non-finite values")
        if np.any(self.labels > 1):
            raise InvalidLabelError("labels must be 0/1")
        empty = np.flatnonzero(self.labels.sum(axis=1) == 0)
        if empty.size:
            raise InvalidLabelError(f"label row {int(empty[0])} has no category")

    @property
    def n(self) -> int:
        return self.img.shape[0]

    @property
    def c(self) -> int:
        return self.labels.shape[1]

    @property
    def d_v(self) -> int:
        return self.img.shape[1]

    @property
    def d_t(self) -> int:
        return self.txt.shape[1]

    def subset(self, idx) -> "PairedDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return PairedDataset(self.img[idx], self.txt[idx], self.labels[idx])

    def features(self, modality: str) -> np.ndarray:
        if modality == "img":
            return self.img
        if modality == "txt":
            return self.txt
        raise ConfigError(f"unknown modality {modality!r}; expected 'img' or 'txt'")

    def __eq__(self, other):
        if not isinstance(other, PairedDataset):
            return NotImplemented
        return (
            np.array_equal(self.img, other.img)
            and np.array_equal(self.txt, other.txt)
            and np.array_equal(self.labels, other.labels)
        )


@dataclass(frozen=True)
class SyntheticSource:
    """Generator output: the dataset plus the prototypes it was drawn around."""

    data: PairedDataset
    img_prototypes: np.ndarray
    txt_prototypes: np.ndarray
    primary: np.ndarray


def prototype_gap(prototypes: np.ndarray) -> float:
    """Smallest pairwise prototype distance, expressed per coordinate.

    Returned as ``min ||p_a - p_b|| / sqrt(d)`` so it shares units with the
    per-coordinate noise standard deviation.
    """
    p = np.asarray(prototypes, dtype=np.float64)
    diff = p[:, None, :] - p[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    np.fill_diagonal(dist, np.inf)
    return float(dist.min() / np.sqrt(p.shape[1]))


def synth_generate(
    c: int,
    n: int,
    d_v: int,
    d_t: int,
    sigma: float,
    multi_label_prob: float,
    seed: int,
    sigma_is_relative: bool = False,
) -> SyntheticSource:
    """Gaussian-cluster pairs with modality-specific prototypes.

    Each instance takes a uniformly drawn primary category plus each other
    category independently with ``multi_label_prob``. Each modality's feature
    vector is the mean of the chosen prototypes plus i.i.d. ``N(0, sigma^2)``
    noise. With ``sigma_is_relative`` the noise level is ``sigma`` times the
    smaller of the two per-coordinate prototype gaps.
    """
    if c < 2:
        raise ConfigError("need at least 2 categories")
    if n < 1 or d_v < 1 or d_t < 1:
        raise ConfigError("n, d_v and d_t must be positive")
    if sigma < 0:
        raise ConfigError("sigma must be >= 0")
    if not 0 <= multi_label_prob <= 1:
        raise ConfigError("multi_label_prob must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    proto_v = rng.standard_normal((c, d_v))
    proto_t = rng.standard_normal((c, d_t))
    if sigma_is_relative:
        sigma = sigma * min(prototype_gap(proto_v), prototype_gap(proto_t))
    primary = rng.integers(0, c, size=n)
    labels = rng.random((n, c)) < multi_label_prob
    labels[np.arange(n), primary] = True
    weights = labels / labels.sum(axis=1, keepdims=True)
    img = weights @ proto_v + sigma * rng.standard_normal((n, d_v))
    txt = weights @ proto_t + sigma * rng.standard_normal((n, d_t))
    data = PairedDataset(img, txt, labels.astype(np.uint8))
    return SyntheticSource(data, proto_v, proto_t, primary)


def save_dataset(path, data: PairedDataset) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = f"n={data.n}\nd_v={data.d_v}\nd_t={data.d_t}\nc={data.c}\n"
    (path / "meta.txt").write_bytes(meta.encode("ascii"))
    (path / "img.f32").write_bytes(data.img.astype("<f4").tobytes())
    (path / "txt.f32").write_bytes(data.txt.astype("<f4").tobytes())
    (path / "labels.u8").write_bytes(data.labels.astype(np.uint8).tobytes())


def read_meta(path) -> dict[str, int]:
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: unreadable meta file") from exc
    meta = {}
    for line in text.splitlines():
        if "=" not in line:
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key in META_KEYS:
            try:
                meta[key] = int(value)
            except ValueError as exc:
                raise FormatError(f"{path}: {key} is not an integer") from exc
    missing = [k for k in META_KEYS if k not in meta]
    if missing:
        raise FormatError(f"{path}: missing keys {', '.join(missing)}")
    return meta


def _read_array(path: Path, dtype: str, shape: tuple[int, int]) -> np.ndarray:
    if not path.exists():
        raise FormatError(f"{path}: file not found")
    blob = path.read_bytes()
    expected = shape[0] * shape[1] * np.dtype(dtype).itemsize
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for shape {shape}, got {len(blob)}")
    return np.frombuffer(blob, dtype=dtype).reshape(shape)


def read_labels(path, n: int) -> np.ndarray:
    """Read a bare ``labels.u8`` file whose row count is known from elsewhere."""
    path = Path(path)
    size = path.stat().st_size if path.exists() else -1
    if n <= 0 or size <= 0 or size % n:
        raise FormatError(f"{path}: cannot split {size} bytes into {n} label rows")
    labels = _read_array(path, "u1", (n, size // n)).astype(np.uint8)
    _check_label_rows(labels, path)
    return labels


def _check_label_rows(labels: np.ndarray, path: Path) -> None:
    if np.any(labels > 1):
        raise FormatError(f"{path}: label bytes must be 0 or 1")
    empty = np.flatnonzero(labels.sum(axis=1) == 0)
    if empty.size:
        raise FormatError(f"{path}: label row {int(empty[0])} has no category")


def write_labels(path, labels: np.ndarray) -> None:
    Path(path).write_bytes(np.asarray(labels, dtype=np.uint8).tobytes())


def load_dataset(path) -> PairedDataset:
    path = Path(path)
    meta = read_meta(path / "meta.txt")
    n, c = meta["n"], meta["c"]
    img = _read_array(path / "img.f32", "<f4", (n, meta["d_v"]))
    txt = _read_array(path / "txt.f32", "<f4", (n, meta["d_t"]))
    labels = _read_array(path / "labels.u8", "u1", (n, c))
    _check_label_rows(labels, path / "labels.u8")
    for name, arr in (("img.f32", img), ("txt.f32", txt)):
        if not np.all(np.isfinite(arr)):
            raise FormatError(f"{path / name}: non-finite feature values")
    return PairedDataset(img.astype(np.float32), txt.astype(np.float32), labels.astype(np.uint8))


@dataclass(frozen=True)
class SplitSpec:
    query: int
    train: int
    seed: int = 0


@dataclass(frozen=True)
class Split:
    query: np.ndarray
    retrieval: np.ndarray
    train: np.ndarray


def split(n: int, spec: SplitSpec) -> Split:
    """Random disjoint query/retrieval partition; training drawn from retrieval.

    Index arrays are returned sorted so downstream ranking ties stay stable.
    """
    if spec.query < 0 or spec.train < 0:
        raise ConfigError("split counts must be non-negative")
    if spec.query >= n:
        raise ConfigError(f"query count {spec.query} leaves an empty retrieval set (n={n})")
    if spec.train > n - spec.query:
        raise ConfigError(f"training count {spec.train} exceeds retrieval size {n - spec.query}")
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(n)
    query = np.sort(perm[: spec.query])
    retrieval = np.sort(perm[spec.query :])
    train = np.sort(rng.choice(retrieval, size=spec.train, replace=False))
    return Split(query, retrieval, train)


def standardize(train: np.ndarray, *others: np.ndarray):
    """Z-score every array with the training array's per-dimension statistics."""
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    std[std == 0] = 1.0
    return tuple((a - mean) / std for a in (train, *others))

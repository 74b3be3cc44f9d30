"""Embedding pools: synthetic generation, binary/CSV serialization, stats.

A pool is an ordered collection of (speaker, utterance, split, vector)
records sharing one dimensionality. The binary format (magic ``EMB1``)
stores vectors as little-endian float32 and widens to float64 in memory;
pools whose in-memory values are float32-exact round-trip bit-identically.
The synthetic generator emits float32-exact values for that reason.
"""

from __future__ import annotations

import csv
import hashlib
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateCovariance,
    DimensionMismatch,
    EmptyPool,
    FormatError,
    InvalidShape,
    InvalidSpec,
)

SPLITS = ("train", "enroll", "trial")
_SPLIT_CODE = {name: i for i, name in enumerate(SPLITS)}

_MAGIC = b"EMB1"
_VERSION = 1


@dataclass(frozen=True)
class PoolRecord:
    speaker: str
    utterance: str
    vector: np.ndarray
    split: str

    def __post_init__(self):
        if self.split not in SPLITS:
            raise InvalidSpec(f"unknown split {self.split!r}")
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1 or vec.shape[0] == 0:
            raise InvalidShape(f"record vector must be 1-D nonempty, got {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise InvalidShape("record vector contains non-finite values")
        vec = vec.copy()
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)


@dataclass(frozen=True)
class EmbeddingPool:
    dim: int
    records: tuple[PoolRecord, ...]

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            if rec.vector.shape[0] != self.dim:
                raise DimensionMismatch(
                    f"record {rec.speaker}/{rec.utterance} has length "
                    f"{rec.vector.shape[0]}, pool dim is {self.dim}"
                )
            key = (rec.speaker, rec.utterance)
            if key in seen:
                raise InvalidSpec(
                    f"duplicate record {rec.speaker}/{rec.utterance}"
                )
            seen.add(key)

    def __len__(self) -> int:
        return len(self.records)

    def subset(self, split: str) -> "EmbeddingPool":
        if split not in SPLITS:
            raise InvalidSpec(f"unknown split {split!r}")
        return EmbeddingPool(
            self.dim, tuple(r for r in self.records if r.split == split)
        )

    def speakers(self, split: str | None = None) -> tuple[str, ...]:
        seen = {
            r.speaker for r in self.records if split is None or r.split == split
        }
        return tuple(sorted(seen))

    def vectors(self, split: str | None = None) -> np.ndarray:
        rows = [
            r.vector for r in self.records if split is None or r.split == split
        ]
        if not rows:
            return np.empty((0, self.dim))
        return np.stack(rows)

    def by_speaker(self, split: str | None = None) -> dict[str, list[PoolRecord]]:
        """Records grouped by speaker, speakers and utterances sorted."""
        groups: dict[str, list[PoolRecord]] = {}
        for rec in self.records:
            if split is None or rec.split == split:
                groups.setdefault(rec.speaker, []).append(rec)
        return {
            sid: sorted(groups[sid], key=lambda r: r.utterance)
            for sid in sorted(groups)
        }

    def with_vectors(self, new_vectors: np.ndarray) -> "EmbeddingPool":
        """Copy of the pool with vectors replaced in record order."""
        arr = np.asarray(new_vectors, dtype=np.float64)
        if arr.shape != (len(self.records), self.dim):
            raise InvalidShape(
                f"expected {(len(self.records), self.dim)}, got {arr.shape}"
            )
        recs = tuple(
            PoolRecord(r.speaker, r.utterance, arr[i], r.split)
            for i, r in enumerate(self.records)
        )
        return EmbeddingPool(self.dim, recs)


@dataclass(frozen=True)
class PoolStats:
    mean: np.ndarray
    covariance: np.ndarray
    centroids: dict[str, np.ndarray] = field(repr=False)
    split_used: str = "train"


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters for the Gaussian speaker/utterance generator.

    Speaker centroids are drawn N(0, sigma_between^2 I); utterances are
    drawn N(centroid, sigma_within^2 I), optionally projected to the unit
    sphere. Per speaker, the first ``enroll_per_speaker`` utterances go to
    the enroll split, the next ``trial_per_speaker`` to trial, the rest to
    train.
    """

    num_speakers: int = 40
    utterances_per_speaker: int = 10
    dim: int = 16
    sigma_between: float = 1.0
    sigma_within: float = 0.25
    seed: int = 0
    normalize: bool = False
    enroll_per_speaker: int = 2
    trial_per_speaker: int = 2

    def validate(self) -> None:
        if self.num_speakers < 2:
            raise InvalidSpec("at least 2 speakers are required")
        if self.utterances_per_speaker < 1:
            raise InvalidSpec("at least 1 utterance per speaker is required")
        if self.dim < 1:
            raise InvalidSpec("dim must be positive")
        if not (self.sigma_between > 0.0 and self.sigma_within > 0.0):
            raise InvalidSpec("sigma_between and sigma_within must be positive")
        if self.enroll_per_speaker < 0 or self.trial_per_speaker < 0:
            raise InvalidSpec("split allocations must be non-negative")
        if self.enroll_per_speaker + self.trial_per_speaker > self.utterances_per_speaker:
            raise InvalidSpec("enroll + trial allocation exceeds utterances per speaker")
        if self.enroll_per_speaker > 0 and self.trial_per_speaker == 0:
            raise InvalidSpec("enroll split without a trial split is not allowed")


def generate_synthetic(spec: SyntheticSpec) -> EmbeddingPool:
    """Draw a pool per ``spec``; identical specs give identical pools.

    Values are rounded through float32 so the pool round-trips the binary
    format bit-identically.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    records: list[PoolRecord] = []
    for s in range(spec.num_speakers):
        sid = f"spk{s:04d}"
        centroid = spec.sigma_between * rng.standard_normal(spec.dim)
        for u in range(spec.utterances_per_speaker):
            vec = centroid + spec.sigma_within * rng.standard_normal(spec.dim)
            if spec.normalize:
                vec = vec / np.linalg.norm(vec)
            vec = vec.astype(np.float32).astype(np.float64)
            if u < spec.enroll_per_speaker:
                split = "enroll"
            elif u < spec.enroll_per_speaker + spec.trial_per_speaker:
                split = "trial"
            else:
                split = "train"
            records.append(PoolRecord(sid, f"{sid}-u{u:03d}", vec, split))
    return EmbeddingPool(spec.dim, tuple(records))


def pool_to_bytes(pool: EmbeddingPool) -> bytes:
    """Serialize to the EMB1 byte layout (see README for the field table)."""
    out = io.BytesIO()
    out.write(_MAGIC)
    out.write(struct.pack("<HII", _VERSION, pool.dim, len(pool.records)))
    for rec in pool.records:
        for text in (rec.speaker, rec.utterance):
            data = text.encode("utf-8")
            if len(data) > 0xFFFF:
                raise InvalidSpec(f"identifier too long: {text[:32]!r}...")
            out.write(struct.pack("<H", len(data)))
            out.write(data)
        out.write(struct.pack("<B", _SPLIT_CODE[rec.split]))
        out.write(rec.vector.astype("<f4").tobytes())
    return out.getvalue()


def save_pool(pool: EmbeddingPool, path) -> None:
    with open(path, "wb") as fh:
        fh.write(pool_to_bytes(pool))


class _Reader:
    """Byte cursor that reports the offset of the first violated field."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(self.pos, f"truncated while reading {what}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk


def pool_from_bytes(data: bytes) -> EmbeddingPool:
    rd = _Reader(data)
    if rd.take(4, "magic") != _MAGIC:
        raise FormatError(0, "bad magic, not an EMB1 file")
    (version,) = struct.unpack("<H", rd.take(2, "version"))
    if version != _VERSION:
        raise FormatError(4, f"unsupported version {version}")
    dim, count = struct.unpack("<II", rd.take(8, "header"))
    if dim == 0:
        raise FormatError(6, "dimension must be positive")
    records: list[PoolRecord] = []
    for i in range(count):
        texts = []
        for what in ("speaker id", "utterance id"):
            at = rd.pos
            (n,) = struct.unpack("<H", rd.take(2, f"{what} length"))
            try:
                texts.append(rd.take(n, what).decode("utf-8"))
            except UnicodeDecodeError:
                raise FormatError(at + 2, f"{what} is not valid UTF-8") from None
        at = rd.pos
        (split_code,) = struct.unpack("<B", rd.take(1, "split code"))
        if split_code >= len(SPLITS):
            raise FormatError(at, f"unknown split code {split_code}")
        at = rd.pos
        raw = rd.take(4 * dim, f"vector of record {i}")
        vec = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        if not np.all(np.isfinite(vec)):
            raise FormatError(at, f"non-finite value in vector of record {i}")
        records.append(PoolRecord(texts[0], texts[1], vec, SPLITS[split_code]))
    if rd.pos != len(data):
        raise FormatError(rd.pos, "trailing bytes after the last record")
    return EmbeddingPool(int(dim), tuple(records))


def load_pool(path) -> EmbeddingPool:
    with open(path, "rb") as fh:
        return pool_from_bytes(fh.read())


def pool_fingerprint(pool: EmbeddingPool) -> str:
    """Content hash (sha256 of the EMB1 bytes) used in reports."""
    return hashlib.sha256(pool_to_bytes(pool)).hexdigest()


def save_pool_csv(pool: EmbeddingPool, path) -> None:
    """Write the CSV form: header speaker,utterance,split,v0..v{d-1}."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["speaker", "utterance", "split"] + [f"v{i}" for i in range(pool.dim)]
        )
        for rec in pool.records:
            writer.writerow(
                [rec.speaker, rec.utterance, rec.split]
                + [repr(float(x)) for x in rec.vector]
            )


def load_pool_csv(path) -> EmbeddingPool:
    """Strict CSV import; rejects wrong headers, ragged rows, bad splits."""
    with open(path, "r", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(0, "empty CSV file")
    header = rows[0]
    if header[:3] != ["speaker", "utterance", "split"] or len(header) < 4:
        raise FormatError(0, "header must start speaker,utterance,split,v0,...")
    dim = len(header) - 3
    expected = [f"v{i}" for i in range(dim)]
    if header[3:] != expected:
        raise FormatError(0, f"vector columns must be v0..v{dim - 1}")
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise FormatError(lineno, f"row {lineno} has {len(row)} fields, expected {len(header)}")
        speaker, utterance, split = row[0], row[1], row[2]
        if split not in SPLITS:
            raise FormatError(lineno, f"row {lineno} has unknown split {split!r}")
        try:
            vec = np.array([float(x) for x in row[3:]], dtype=np.float64)
        except ValueError as exc:
            raise FormatError(lineno, f"row {lineno}: {exc}") from None
        if not np.all(np.isfinite(vec)):
            raise FormatError(lineno, f"row {lineno} has non-finite values")
        records.append(PoolRecord(speaker, utterance, vec, split))
    return EmbeddingPool(dim, tuple(records))


def pool_stats(pool: EmbeddingPool) -> PoolStats:
    """Mean, sample covariance (n-1) and per-speaker centroids.

    Statistics are taken over the train split; a pool with no train records
    falls back to all records (documented behavior for toy pools). Record
    order never affects the result: speakers and utterances are visited in
    sorted order.

    Raises:
        EmptyPool: the pool has no records at all.
        DegenerateCovariance: fewer than 2 vectors are available.
    """
    if not pool.records:
        raise EmptyPool("cannot compute statistics of an empty pool")
    split = "train" if any(r.split == "train" for r in pool.records) else None
    groups = pool.by_speaker(split)
    rows = np.stack(
        [rec.vector for sid in groups for rec in groups[sid]]
    )
    if rows.shape[0] < 2:
        raise DegenerateCovariance(
            f"{rows.shape[0]} vector(s) cannot produce a sample covariance"
        )
    mean = rows.mean(axis=0)
    centered = rows - mean
    cov = centered.T @ centered / (rows.shape[0] - 1)
    centroids = {
        sid: np.stack([r.vector for r in recs]).mean(axis=0)
        for sid, recs in groups.items()
    }
    return PoolStats(mean, cov, centroids, split_used=split or "all")

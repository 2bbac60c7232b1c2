"""Near-duplicate removal with a 64-bit difference hash.

Images are reduced to a 9x8 luminance grid by bilinear resampling and each
row contributes eight "left darker than right" bits.  Two images are
considered duplicates when their hashes differ in at most ``threshold``
bits.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .exceptions import DuplicateId, EmptyImage

logger = logging.getLogger(__name__)

HASH_BITS = 64
GRID_ROWS = 8
GRID_COLS = 9
DEFAULT_THRESHOLD = 4

Decoder = Callable[[str], np.ndarray]


def to_grayscale(image) -> np.ndarray:
    """Return a 2-d luminance array.

    Colour input (H x W x 3 or 4) is converted with the integer luma
    ``(77 R + 150 G + 29 B) >> 8``.
    """
    arr = np.asarray(image)
    if arr.ndim == 2:
        return arr
    if arr.ndim == 3 and arr.shape[2] in (3, 4):
        rgb = arr[..., :3].astype(np.int64)
        return (77 * rgb[..., 0] + 150 * rgb[..., 1] + 29 * rgb[..., 2]) >> 8
    raise ValueError(f"unsupported image shape {arr.shape}")


def _resample_axis(n_src: int, n_dst: int):
    # pixel-centre aligned source coordinates, clamped at the borders
    pos = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
    pos = np.clip(pos, 0.0, n_src - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n_src - 1)
    return lo, hi, pos - lo


def resize_bilinear(gray: np.ndarray, rows: int, cols: int) -> np.ndarray:
    gray = np.asarray(gray, dtype=np.float64)
    r0, r1, fr = _resample_axis(gray.shape[0], rows)
    c0, c1, fc = _resample_axis(gray.shape[1], cols)
    top = gray[r0][:, c0] * (1 - fc) + gray[r0][:, c1] * fc
    bottom = gray[r1][:, c0] * (1 - fc) + gray[r1][:, c1] * fc
    return top * (1 - fr)[:, None] + bottom * fr[:, None]


def dhash(image) -> int:
    """Compute the 64-bit difference hash of an image.

    Bit ``r * 8 + c`` is set iff ``grid[r, c] < grid[r, c + 1]`` on the
    resampled 9x8 grid.
    """
    gray = to_grayscale(image)
    if gray.size == 0 or 0 in gray.shape:
        raise EmptyImage(f"image has shape {gray.shape}")
    grid = resize_bilinear(gray, GRID_ROWS, GRID_COLS)
    bits = (grid[:, :-1] < grid[:, 1:]).ravel()
    return sum(1 << int(k) for k in np.flatnonzero(bits))


def hamming(a: int, b: int) -> int:
    return (a ^ b).bit_count()


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    """Read a binary (P5) or ASCII (P2) greymap."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        count = width * height
        pixels = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    elif magic == b"P2":
        pixels = np.array(data[pos:].split()[: width * height], dtype=np.int64)
    else:
        raise ValueError(f"{path}: not a PGM file (magic {magic!r})")
    pixels = pixels.reshape(height, width).astype(np.int64)
    if maxval != 255:
        pixels = pixels * 255 // maxval
    return pixels


def write_pgm(path: str | os.PathLike, image: np.ndarray) -> None:
    arr = np.asarray(image, dtype=np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (arr.shape[1], arr.shape[0]))
        fh.write(arr.tobytes())


def load_image(path: str | os.PathLike, decoder: Decoder | None = None) -> np.ndarray:
    if decoder is not None:
        return decoder(str(path))
    return read_pgm(path)


@dataclass
class DedupReport:
    kept: list[str] = field(default_factory=list)
    removed: list[tuple[str, str, int]] = field(default_factory=list)
    threshold: int = DEFAULT_THRESHOLD

    def to_dict(self) -> dict:
        return {
            "kept": list(self.kept),
            "removed": [
                {"id": rid, "duplicate_of": keep, "distance": dist}
                for rid, keep, dist in self.removed
            ],
            "threshold": self.threshold,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DedupReport":
        return cls(
            kept=list(doc["kept"]),
            removed=[(r["id"], r["duplicate_of"], int(r["distance"])) for r in doc["removed"]],
            threshold=int(doc["threshold"]),
        )


class _HashIndex:
    """Index of kept hashes.

    For small thresholds the 64 bits are cut into ``threshold + 1`` chunks;
    by pigeonhole two hashes within the threshold agree exactly on at
    least one chunk, so only bucket-mates need a full comparison.
    """

    def __init__(self, threshold: int):
        self.threshold = threshold
        self.entries: list[tuple[int, str]] = []
        n_chunks = threshold + 1
        self.bucketed = n_chunks <= 16
        if self.bucketed:
            edges = np.linspace(0, HASH_BITS, n_chunks + 1).astype(int)
            self.chunks = [(int(lo), int(hi - lo)) for lo, hi in zip(edges[:-1], edges[1:])]
            self.buckets: list[dict[int, list[int]]] = [{} for _ in self.chunks]

    def _keys(self, h: int):
        for lo, width in self.chunks:
            yield (h >> lo) & ((1 << width) - 1)

    def nearest_kept(self, h: int) -> tuple[str, int] | None:
        """Earliest kept entry within the threshold, if any."""
        if self.bucketed:
            candidates: set[int] = set()
            for bucket, key in zip(self.buckets, self._keys(h)):
                candidates.update(bucket.get(key, ()))
            order: Iterable[int] = sorted(candidates)
        else:
            order = range(len(self.entries))
        for idx in order:
            kept_hash, kept_id = self.entries[idx]
            dist = hamming(h, kept_hash)
            if dist <= self.threshold:
                return kept_id, dist
        return None

    def add(self, h: int, ident: str) -> None:
        idx = len(self.entries)
        self.entries.append((h, ident))
        if self.bucketed:
            for bucket, key in zip(self.buckets, self._keys(h)):
                bucket.setdefault(key, []).append(idx)


def dedup_hashes(hashes: Sequence[tuple[str, int]], threshold: int = DEFAULT_THRESHOLD) -> DedupReport:
    """Greedy first-kept-wins pass over precomputed ``(id, hash)`` pairs."""
    if not 0 <= threshold <= HASH_BITS:
        raise ValueError(f"threshold must be in 0..{HASH_BITS}, got {threshold}")
    seen: set[str] = set()
    index = _HashIndex(threshold)
    report = DedupReport(threshold=threshold)
    for ident, h in hashes:
        if ident in seen:
            raise DuplicateId(f"duplicate id {ident!r}")
        seen.add(ident)
        hit = index.nearest_kept(h)
        if hit is None:
            index.add(h, ident)
            report.kept.append(ident)
        else:
            report.removed.append((ident, hit[0], hit[1]))
    logger.info("dedup: kept %d, removed %d", len(report.kept), len(report.removed))
    return report


def dedup(instances, threshold: int = DEFAULT_THRESHOLD, n_jobs: int = 1) -> DedupReport:
    """Remove near-duplicates from ``(id, image)`` pairs, keeping input order.

    Images may be arrays or already-computed integer hashes.  Hashing runs
    on ``n_jobs`` threads; the keep/remove decision is a sequential fold.
    """
    instances = list(instances)
    ids = [ident for ident, _ in instances]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise DuplicateId(f"duplicate ids: {dupes}")

    def _hash(item):
        return item if isinstance(item, int) else dhash(item)

    images = [img for _, img in instances]
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            hashes = list(pool.map(_hash, images))
    else:
        hashes = [_hash(img) for img in images]
    return dedup_hashes(list(zip(ids, hashes)), threshold)

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conlabel.dedup import (
    DedupReport,
    dedup,
    dedup_hashes,
    dhash,
    hamming,
    read_pgm,
    resize_bilinear,
    to_grayscale,
    write_pgm,
)
from conlabel.exceptions import DuplicateId, EmptyImage

# hand-filled 9x8 grid and its hash, one comparison per bit
GRID = [
    [0, 53, 106, 159, 212, 9, 62, 115, 168],
    [37, 119, 201, 27, 109, 191, 17, 152, 234],
    [74, 185, 40, 151, 59, 170, 25, 189, 44],
    [111, 251, 135, 72, 212, 149, 33, 226, 110],
    [148, 61, 27, 196, 162, 75, 41, 7, 176],
    [185, 127, 122, 117, 59, 54, 49, 44, 242],
    [222, 193, 217, 241, 9, 33, 57, 81, 52],
    [3, 56, 109, 162, 215, 12, 65, 118, 171],
]
GRID_HASH = 0xEF7680844955DBEF

hashes64 = st.integers(min_value=0, max_value=2**64 - 1)


def naive_hamming(a, b):
    return sum(((a >> k) & 1) != ((b >> k) & 1) for k in range(64))


def test_uniform_image_hashes_to_zero():
    assert dhash(np.full((30, 40), 128, dtype=np.uint8)) == 0


def test_increasing_rows_hash_to_all_ones():
    img = np.tile(np.arange(9) * 20, (8, 1))
    assert dhash(img) == 2**64 - 1


def test_reference_grid():
    assert dhash(np.array(GRID)) == GRID_HASH


def test_grid_sized_input_is_not_resampled():
    grid = np.array(GRID, dtype=float)
    np.testing.assert_array_equal(resize_bilinear(grid, 8, 9), grid)


def test_hash_deterministic_and_rescale_invariant():
    rng = np.random.default_rng(0)
    base = rng.integers(0, 256, size=(8, 9))
    # nearest 4x upscale keeps the pixel-centre averages on the grid
    big = np.kron(base, np.ones((4, 4), dtype=base.dtype))
    assert dhash(base) == dhash(base.copy())
    assert dhash(big) == dhash(base)


def test_color_uses_integer_luma():
    rgb = np.zeros((2, 2, 3), dtype=np.uint8)
    rgb[..., 0], rgb[..., 1], rgb[..., 2] = 200, 100, 50
    expected = (77 * 200 + 150 * 100 + 29 * 50) >> 8
    assert np.all(to_grayscale(rgb) == expected)


@pytest.mark.parametrize("shape", [(0, 5), (5, 0), (0, 0)])
def test_empty_image(shape):
    with pytest.raises(EmptyImage):
        dhash(np.zeros(shape))


def test_hamming_examples():
    assert hamming(0, 0) == 0
    assert hamming(2**64 - 1, 0) == 64


def test_hamming_exhaustive_8bit_prefixes():
    for a in range(256):
        for b in range(256):
            ha, hb = a << 56, b << 56
            assert hamming(ha, hb) == naive_hamming(ha, hb)


@given(hashes64, hashes64, hashes64)
def test_hamming_is_a_metric(a, b, c):
    assert hamming(a, b) >= 0
    assert hamming(a, a) == 0
    assert hamming(a, b) == hamming(b, a)
    assert (hamming(a, b) == 0) == (a == b)
    assert hamming(a, c) <= hamming(a, b) + hamming(b, c)


def test_exact_duplicate_removed():
    img = np.random.default_rng(1).integers(0, 256, (16, 16))
    report = dedup([("a", img), ("b", img.copy())], threshold=0)
    assert report.kept == ["a"]
    assert report.removed == [("b", "a", 0)]


def test_distinct_noise_images_kept():
    rng = np.random.default_rng(7)
    a, b = rng.integers(0, 256, (32, 32)), rng.integers(0, 256, (32, 32))
    assert dhash(a) != dhash(b)
    assert dedup([("a", a), ("b", b)], threshold=0).kept == ["a", "b"]


def test_transitive_exact_duplicates():
    rng = np.random.default_rng(2)
    A = rng.integers(0, 256, (20, 20))
    B = np.tile(np.arange(20) * 10, (20, 1))  # all-increasing, far from A
    assert hamming(dhash(A), dhash(B)) > 4
    report = dedup([("A1", A), ("A2", A), ("A3", A), ("B", B)], threshold=4)
    assert report.kept == ["A1", "B"]
    assert report.removed == [("A2", "A1", 0), ("A3", "A1", 0)]


def test_duplicate_ids_rejected():
    with pytest.raises(DuplicateId):
        dedup([("x", 0), ("x", 1)])


def test_threaded_hashing_matches_serial():
    rng = np.random.default_rng(5)
    items = [(f"i{k}", rng.integers(0, 256, (12, 14))) for k in range(20)]
    assert dedup(items, 8, n_jobs=4) == dedup(items, 8)


def test_report_round_trips_through_json():
    report = DedupReport(["a", "c"], [("b", "a", 3)], 4)
    doc = json.loads(json.dumps(report.to_dict()))
    assert DedupReport.from_dict(doc) == report


def test_pgm_round_trip(tmp_path):
    img = np.random.default_rng(3).integers(0, 256, (5, 7)).astype(np.uint8)
    write_pgm(tmp_path / "x.pgm", img)
    np.testing.assert_array_equal(read_pgm(tmp_path / "x.pgm"), img)


def test_ascii_pgm_with_comment(tmp_path):
    (tmp_path / "a.pgm").write_text("P2\n# comment\n3 2\n255\n1 2 3\n4 5 6\n")
    np.testing.assert_array_equal(read_pgm(tmp_path / "a.pgm"), [[1, 2, 3], [4, 5, 6]])


def _kept_ids(hashes, threshold):
    return dedup_hashes(hashes, threshold).kept


# clustered hashes so near-duplicates actually occur
clustered = st.lists(
    st.tuples(st.integers(0, 3), st.integers(0, 2**64 - 1).map(lambda v: v & 0x0101010101)),
    min_size=1,
    max_size=30,
).map(lambda pairs: [(f"id{i}", (0xA5A5A5A5A5A5A5A5 * (c + 1)) % 2**64 ^ flip) for i, (c, flip) in enumerate(pairs)])


@given(clustered, st.integers(0, 64))
@settings(max_examples=200)
def test_dedup_partitions_ids_and_respects_threshold(hashes, threshold):
    report = dedup_hashes(hashes, threshold)
    removed = [r[0] for r in report.removed]
    assert set(report.kept) | set(removed) == {i for i, _ in hashes}
    assert not set(report.kept) & set(removed)
    assert all(dist <= threshold for _, _, dist in report.removed)
    assert report.kept[0] == hashes[0][0]


@given(clustered, st.integers(0, 64))
@settings(max_examples=200)
def test_dedup_idempotent(hashes, threshold):
    kept = set(dedup_hashes(hashes, threshold).kept)
    survivors = [(i, h) for i, h in hashes if i in kept]
    assert dedup_hashes(survivors, threshold).removed == []


def test_greedy_kept_count_can_grow_with_threshold():
    # x is kept first.  At threshold 2, z survives and swallows w1 and w2;
    # at threshold 3, x swallows z, and w1, w2 (4 apart) both survive.
    hashes = [("x", 0b0000000), ("z", 0b1110000), ("w1", 0b1111100), ("w2", 0b1110011)]
    assert _kept_ids(hashes, 2) == ["x", "z"]
    assert _kept_ids(hashes, 3) == ["x", "w1", "w2"]


@given(clustered)
@settings(max_examples=200)
def test_well_separated_clusters_keep_one_per_cluster(hashes):
    # clusters sit far apart and each spans at most 5 bits
    kept = _kept_ids(hashes, 5)
    centres = {h & ~0x0101010101 for _, h in hashes}
    assert len(kept) == len(centres)


@given(st.lists(hashes64, min_size=1, max_size=40, unique=True), st.integers(0, 20))
@settings(max_examples=100)
def test_bucketed_index_matches_linear_scan(values, threshold):
    hashes = [(f"h{i}", v) for i, v in enumerate(values)]
    expected_kept, expected_removed = [], []
    for ident, h in hashes:
        hit = next(((k, hamming(h, kh)) for k, kh in expected_kept if hamming(h, kh) <= threshold), None)
        if hit is None:
            expected_kept.append((ident, h))
        else:
            expected_removed.append((ident, hit[0], hit[1]))
    report = dedup_hashes(hashes, threshold)
    assert report.kept == [k for k, _ in expected_kept]
    assert report.removed == expected_removed

import numpy as np
import pytest

from pairforge import tagio
from pairforge.tagio import (TagFileError, TagWriter, iter_binary, iter_merged, merge_streams,
                             read_header, read_tags, split_streams, write_streams, write_tags,
                             write_text)


@pytest.fixture
def streams():
    rng = np.random.default_rng(1)
    return {k: np.sort(rng.integers(0, 10 ** 9, 1000 + 100 * k)) for k in range(3)}


def test_merge_and_split(streams):
    ch, t = merge_streams(streams)
    assert np.all(np.diff(t) >= 0)
    back = split_streams(ch, t)
    for k, v in streams.items():
        assert np.array_equal(back[k], v)


def test_merge_breaks_ties_by_channel():
    ch, t = merge_streams({1: [5], 0: [5]})
    assert ch.tolist() == [0, 1]


def test_binary_round_trip(tmp_path, streams):
    p = tmp_path / "x.ptag"
    write_streams(p, streams)
    assert read_header(p) == sum(v.size for v in streams.values())
    ch, t = read_tags(p)
    assert np.array_equal(t, merge_streams(streams)[1])
    assert t.dtype == np.int64
    assert p.stat().st_size == 16 + 16 * t.size


def test_chunked_read_matches(tmp_path, streams):
    p = tmp_path / "x.ptag"
    write_streams(p, streams)
    chunks = list(iter_binary(p, chunk_records=333))
    assert all(c[1].size <= 333 for c in chunks)
    assert np.array_equal(np.concatenate([c[1] for c in chunks]), read_tags(p)[1])


def test_text_round_trip(tmp_path, streams):
    p = tmp_path / "x.csv"
    ch, t = merge_streams(streams)
    write_text(p, ch, t)
    ch2, t2 = read_tags(p)
    assert np.array_equal(ch, ch2) and np.array_equal(t, t2)


def test_text_bad_line(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("channel,time_ps\n0,5\nzero,7\n")
    with pytest.raises(TagFileError, match=":3:"):
        read_tags(p)


def test_writer_patches_count(tmp_path):
    p = tmp_path / "w.ptag"
    with TagWriter(p) as w:
        w.write([0, 1], [1, 2])
        w.write([1], [3])
        with pytest.raises(ValueError):
            w.write([0], [2])
    assert read_header(p) == 3


def test_bad_magic(tmp_path):
    p = tmp_path / "bad.ptag"
    p.write_bytes(b"NOPE" + bytes(12))
    with pytest.raises(TagFileError, match="magic"):
        read_header(p)


def test_truncated_file(tmp_path, streams):
    p = tmp_path / "t.ptag"
    write_streams(p, streams)
    data = p.read_bytes()
    p.write_bytes(data[:-40])
    with pytest.raises(TagFileError):
        read_header(p)
    p.write_bytes(data[:10])
    with pytest.raises(TagFileError, match="truncated"):
        read_header(p)


def test_unordered_write_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_tags(tmp_path / "u.ptag", [0, 0], [5, 3])


def test_multi_file_merge(tmp_path, streams, monkeypatch):
    paths = []
    for k, v in streams.items():
        paths.append(tmp_path / f"ch{k}.ptag")
        write_streams(paths[-1], {k: v})
    chunks = list(iter_merged(paths, chunk_records=97))
    ch = np.concatenate([c for c, _ in chunks])
    t = np.concatenate([t for _, t in chunks])
    ref_ch, ref_t = merge_streams(streams)
    assert np.array_equal(t, ref_t) and np.array_equal(ch, ref_ch)


def test_truth_channel_is_reserved():
    assert tagio.TRUTH_CHANNEL == 0xFFFF

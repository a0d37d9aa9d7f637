"""Tag files.

Binary layout, little-endian::

    header  magic b"PTAG" | u16 version = 1 | u16 record_size = 16 | u64 record_count
    record  u16 channel | u16 reserved = 0 | u32 reserved = 0 | u64 time_ps

Records are stored in time order. A plain-text variant holds one
``channel,time_ps`` line per tag (optional header line).
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PTAG"
VERSION = 1
RECORD_SIZE = 16
HEADER = struct.Struct("<4sHHQ")
RECORD_DTYPE = np.dtype([
    ("channel", "<u2"),
    ("reserved0", "<u2"),
    ("reserved1", "<u4"),
    ("time", "<u8"),
])
assert RECORD_DTYPE.itemsize == RECORD_SIZE and HEADER.size == 16

# reserved channel id for simulated pair emission times (truth files)
TRUTH_CHANNEL = 0xFFFF

DEFAULT_CHUNK = 1 << 18  # records; larger chunks cost memory without speeding up


class TagFileError(IOError):
    pass


def merge_streams(streams):
    """Merge ``{channel: times}`` into time-ordered ``(channels, times)``.

    Ties are broken by channel id.
    """
    items = sorted(streams.items())
    if not items:
        return np.empty(0, np.uint16), np.empty(0, np.int64)
    channels = np.concatenate([np.full(len(t), ch, np.uint16) for ch, t in items])
    times = np.concatenate([np.asarray(t, np.int64) for _, t in items])
    order = np.lexsort((channels, times))
    return channels[order], times[order]


def split_streams(channels, times):
    return {int(ch): times[channels == ch] for ch in np.unique(channels)}


def _records(channels, times):
    rec = np.zeros(len(times), dtype=RECORD_DTYPE)
    rec["channel"] = channels
    rec["time"] = times
    return rec


def write_tags(path, channels, times):
    """Write a binary tag file from merged, time-ordered arrays."""
    times = np.asarray(times, dtype=np.int64)
    channels = np.asarray(channels)
    if times.size and (times.min() < 0 or np.any(np.diff(times) < 0)):
        raise ValueError("tag times must be nonnegative and time-ordered")
    if channels.size and (channels.min() < 0 or channels.max() > 0xFFFF):
        raise ValueError("channel ids must fit in 16 bits")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, RECORD_SIZE, times.size))
        for lo in range(0, times.size, DEFAULT_CHUNK):
            _records(channels[lo:lo + DEFAULT_CHUNK], times[lo:lo + DEFAULT_CHUNK]).tofile(fh)


def write_streams(path, streams):
    write_tags(path, *merge_streams(streams))


class TagWriter:
    """Append time-ordered chunks, patching the record count on close."""

    def __init__(self, path):
        self.fh = open(path, "wb")
        self.count = 0
        self.last = -1
        self.fh.write(HEADER.pack(MAGIC, VERSION, RECORD_SIZE, 0))

    def write(self, channels, times):
        times = np.asarray(times, dtype=np.int64)
        if times.size == 0:
            return
        if times[0] < self.last or np.any(np.diff(times) < 0):
            raise ValueError("chunks must continue in time order")
        _records(channels, times).tofile(self.fh)
        self.count += times.size
        self.last = int(times[-1])

    def close(self):
        self.fh.seek(0)
        self.fh.write(HEADER.pack(MAGIC, VERSION, RECORD_SIZE, self.count))
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_header(path):
    with open(path, "rb") as fh:
        raw = fh.read(HEADER.size)
    if len(raw) < HEADER.size:
        raise TagFileError(f"{path}: truncated header")
    magic, version, size, count = HEADER.unpack(raw)
    if magic != MAGIC:
        raise TagFileError(f"{path}: bad magic {magic!r}")
    if version != VERSION or size != RECORD_SIZE:
        raise TagFileError(f"{path}: unsupported version {version} / record size {size}")
    expected = HEADER.size + count * RECORD_SIZE
    actual = Path(path).stat().st_size
    if actual < expected:
        raise TagFileError(f"{path}: header announces {count} records but file holds "
                           f"{(actual - HEADER.size) // RECORD_SIZE}")
    return count


def is_binary(path):
    with open(path, "rb") as fh:
        return fh.read(4) == MAGIC


def iter_binary(path, chunk_records=DEFAULT_CHUNK):
    """Yield ``(channels, times)`` chunks with bounded memory."""
    count = read_header(path)
    with open(path, "rb") as fh:
        fh.seek(HEADER.size)
        remaining = count
        while remaining:
            n = min(chunk_records, remaining)
            rec = np.fromfile(fh, dtype=RECORD_DTYPE, count=n)
            if rec.size != n:
                raise TagFileError(f"{path}: file ended early")
            remaining -= n
            yield rec["channel"].copy(), rec["time"].astype(np.int64)


def read_text(path):
    rows = []
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except UnicodeDecodeError:
        raise TagFileError(f"{path}: neither a binary tag file nor text") from None
    for lineno, ln in enumerate(lines, 1):
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        parts = ln.replace(",", " ").split()
        try:
            if len(parts) != 2:
                raise ValueError
            rows.append((int(parts[0]), int(parts[1])))
        except ValueError:
            if lineno == 1 and len(parts) == 2:
                continue  # header
            raise TagFileError(f"{path}:{lineno}: expected 'channel,time_ps'") from None
    data = np.array(rows, dtype=np.int64).reshape(-1, 2)
    return data[:, 0].astype(np.uint16), data[:, 1]


def write_text(path, channels, times):
    with open(path, "w") as fh:
        fh.write("channel,time_ps\n")
        for ch, t in zip(np.asarray(channels).tolist(), np.asarray(times).tolist()):
            fh.write(f"{ch},{t}\n")


def iter_tags(path, chunk_records=DEFAULT_CHUNK):
    """Chunks from either file flavour; text files arrive as one chunk."""
    if is_binary(path):
        yield from iter_binary(path, chunk_records)
    else:
        yield read_text(path)


def read_tags(path):
    chunks = list(iter_tags(path))
    if not chunks:
        return np.empty(0, np.uint16), np.empty(0, np.int64)
    return np.concatenate([c for c, _ in chunks]), np.concatenate([t for _, t in chunks])


def iter_merged(paths, chunk_records=DEFAULT_CHUNK):
    """Merge several time-ordered tag files into one chunked stream."""
    its = [iter_tags(p, chunk_records) for p in paths]
    bufs = [(np.empty(0, np.uint16), np.empty(0, np.int64)) for _ in its]
    live = list(range(len(its)))
    while live:
        for k in list(live):
            while bufs[k][1].size == 0:
                nxt = next(its[k], None)
                if nxt is None:
                    live.remove(k)
                    break
                bufs[k] = nxt
        if not live:
            break
        # records up to the smallest buffered maximum are final
        horizon = min(int(bufs[k][1][-1]) for k in live)
        out_c, out_t = [], []
        for k in range(len(bufs)):
            c, t = bufs[k]
            if t.size == 0:
                continue
            j = int(np.searchsorted(t, horizon, side="right"))
            out_c.append(c[:j])
            out_t.append(t[:j])
            bufs[k] = (c[j:], t[j:])
        ch, tt = np.concatenate(out_c), np.concatenate(out_t)
        order = np.lexsort((ch, tt))
        yield ch[order], tt[order]

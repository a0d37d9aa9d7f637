# # Working with tag files
#
# Time taggers write one record per click. This walks through writing a
# simulated run to disk, reading it back in chunks, and analysing it with
# the same streaming code the command line uses.

# %%
import tempfile
from pathlib import Path

import numpy as np

from pairforge import tagio
from pairforge.config import load_config
from pairforge.pipeline import analyze_files, analyze_streams, simulate

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
run = load_config(CONFIGS / "pair_source.toml")
sim = simulate(run)
out = Path(tempfile.mkdtemp())

# %% [markdown]
# One binary file per channel: a 16-byte header, then 16-byte records
# (channel, reserved, picosecond time).

# %%
paths = []
for k, times in sim.streams.items():
    paths.append(out / f"ch{k}.ptag")
    tagio.write_streams(paths[-1], {k: times})
    print(paths[-1].name, tagio.read_header(paths[-1]), "records,", paths[-1].stat().st_size, "bytes")

# %% [markdown]
# Files are merged on the fly; only a bounded window of records is held.

# %%
chunks = list(tagio.iter_merged(paths, chunk_records=5000))
print(f"{len(chunks)} merged chunks, largest {max(t.size for _, t in chunks)} records")
from_disk = analyze_files(run, tagio.iter_merged(paths, chunk_records=5000))
in_memory = analyze_streams(run, sim.streams)
print("same counts from disk and memory:", from_disk == in_memory)

# %% [markdown]
# A plain-text variant exists for small hand-made fixtures.

# %%
ch, t = tagio.merge_streams({0: np.array([0, 10_000_000]), 1: np.array([200])})
tagio.write_text(out / "tiny.csv", ch, t)
print((out / "tiny.csv").read_text())

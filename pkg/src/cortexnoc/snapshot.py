"""Versioned binary snapshot of a cortex state.

Layout (little endian)::

    offset  size  field
    0       4     magic  b"CNXS"
    4       4     u32 format version (currently 1)
    8       4     u32 length N of the JSON header
    12      N     UTF-8 JSON: {"config": {...CortexConfig fields...}, "epoch": int}
    12+N    ...   numpy .npz archive with arrays
                    rf, perm                (columns x rf_diameter)
                    seg_col, seg_cell,
                    seg_last, seg_len       (one entry per distal segment,
                                             ordered by column, cell, position)
                    syn_presyn, syn_perm    (segments' synapses concatenated)
                    active_cells,
                    predictive_cells        (encoded column * cells + cell)
"""

from __future__ import annotations

import dataclasses
import io
import json
import struct
from pathlib import Path

import numpy as np

from .cla_ref import CortexConfig, CortexState, Segment
from .errors import UsageError
from .sdr import SdrParams

MAGIC = b"CNXS"
VERSION = 1


def config_to_dict(cfg: CortexConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_from_dict(d: dict) -> CortexConfig:
    d = dict(d)
    d["sdr"] = SdrParams(**d["sdr"])
    return CortexConfig(**d)


def dumps(state: CortexState) -> bytes:
    seg_col, seg_cell, seg_last, seg_len, presyn, perm = [], [], [], [], [], []
    for c, cells in enumerate(state.distal):
        for i, segs in enumerate(cells):
            for s in segs:
                seg_col.append(c)
                seg_cell.append(i)
                seg_last.append(s.last_used)
                seg_len.append(len(s))
                presyn.append(s.presyn)
                perm.append(s.perm)
    buf = io.BytesIO()
    np.savez(
        buf,
        rf=state.rf,
        perm=state.perm,
        seg_col=np.asarray(seg_col, dtype=np.int32),
        seg_cell=np.asarray(seg_cell, dtype=np.int32),
        seg_last=np.asarray(seg_last, dtype=np.int64),
        seg_len=np.asarray(seg_len, dtype=np.int32),
        syn_presyn=np.concatenate(presyn).astype(np.int32) if presyn else np.zeros(0, np.int32),
        syn_perm=np.concatenate(perm).astype(np.int16) if perm else np.zeros(0, np.int16),
        active_cells=np.asarray(sorted(state.active_cells), dtype=np.int64),
        predictive_cells=np.asarray(sorted(state.predictive_cells), dtype=np.int64),
    )
    header = json.dumps({"config": config_to_dict(state.cfg), "epoch": state.epoch},
                        sort_keys=True).encode()
    return MAGIC + struct.pack("<II", VERSION, len(header)) + header + buf.getvalue()


def loads(blob: bytes) -> CortexState:
    if blob[:4] != MAGIC:
        raise UsageError("not a cortex snapshot (bad magic)")
    version, hlen = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise UsageError(f"unsupported snapshot version {version}")
    header = json.loads(blob[12:12 + hlen])
    cfg = config_from_dict(header["config"])
    arrs = np.load(io.BytesIO(blob[12 + hlen:]))
    distal = [[[] for _ in range(cfg.cells)] for _ in range(cfg.num_columns)]
    pos = 0
    for c, i, last, n in zip(arrs["seg_col"], arrs["seg_cell"], arrs["seg_last"], arrs["seg_len"]):
        distal[c][i].append(Segment(arrs["syn_presyn"][pos:pos + n].copy(),
                                    arrs["syn_perm"][pos:pos + n].copy(), int(last)))
        pos += n
    return CortexState(
        cfg, arrs["rf"].copy(), arrs["perm"].copy(), distal, header["epoch"],
        frozenset(int(x) for x in arrs["active_cells"]),
        frozenset(int(x) for x in arrs["predictive_cells"]),
    )


def save(state: CortexState, path) -> None:
    Path(path).write_bytes(dumps(state))


def load(path) -> CortexState:
    return loads(Path(path).read_bytes())

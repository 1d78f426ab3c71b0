"""Byte-stable .npz archives.

``np.savez`` stamps the current time into the zip members, so two saves of
identical arrays differ.  Here the members are written with a fixed
timestamp and no compression, which makes the file a pure function of its
contents while staying loadable by ``np.load``.

Non-array metadata rides along as a JSON string stored under ``meta_json``.
"""
from __future__ import annotations

import io
import json
import zipfile

import numpy as np

_EPOCH = (1980, 1, 1, 0, 0, 0)


def save_arrays(path, arrays: dict, meta: dict | None = None) -> None:
    items = {str(k): np.asarray(v) for k, v in arrays.items()}
    if meta is not None:
        items["meta_json"] = np.array(json.dumps(meta, sort_keys=True))
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name in sorted(items):
            buf = io.BytesIO()
            np.save(buf, items[name], allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(name + ".npy", date_time=_EPOCH), buf.getvalue())


def load_arrays(path):
    """Returns (arrays, meta) where meta is None if the archive has none."""
    with np.load(path, allow_pickle=False) as data:
        out = {k: data[k] for k in data.files}
    meta = None
    if "meta_json" in out:
        meta = json.loads(out.pop("meta_json").item())
    return out, meta

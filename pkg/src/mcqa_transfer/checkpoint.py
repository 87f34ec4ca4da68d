"""Checkpoints: one zip holding ``manifest.json`` and one ``.npy`` per parameter.

Entries are stored uncompressed with a fixed timestamp and in sorted
order, so the same parameters and metadata always give the same bytes.
"""
import io
import json
import os
import zipfile
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import Vocab
from .errors import DataError
from .models import build_model
from .params import ParamStore

FORMAT = "mcqa-transfer-checkpoint/1"
_EPOCH = (1980, 1, 1, 0, 0, 0)


def _entry(name):
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    return info


def _npy_bytes(a):
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.asarray(a, dtype=np.float64, order="C"), version=(1, 0),
                              allow_pickle=False)
    return buf.getvalue()


def save_checkpoint(path, params, model, vocab=None, config=None, seed=None):
    """Write atomically: a failure never leaves a partial file at ``path``."""
    path = Path(path)
    manifest = {
        "format": FORMAT,
        "version": __version__,
        "model": model.kind,
        "hyper": model.config_dict(),
        "params": params.names(),
        "frozen": params.frozen(),
        "pretrained": sorted(params.pretrained),
        "vocab": None if vocab is None else vocab.itos,
        "config": config,
        "seed": seed,
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with zipfile.ZipFile(tmp, "w") as zf:
            zf.writestr(_entry("manifest.json"), json.dumps(manifest, sort_keys=True, indent=1))
            for name in params.names():
                zf.writestr(_entry(f"params/{name}.npy"), _npy_bytes(params[name].data))
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()
    return path


class Checkpoint:
    def __init__(self, params, model, vocab, manifest):
        self.params = params
        self.model = model
        self.vocab = vocab
        self.manifest = manifest

    @property
    def config(self):
        return self.manifest.get("config")

    @property
    def seed(self):
        return self.manifest.get("seed")


def load_checkpoint(path):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    try:
        with zipfile.ZipFile(path) as zf:
            manifest = json.loads(zf.read("manifest.json"))
            if manifest.get("format") != FORMAT:
                raise DataError(f"{path}: unsupported checkpoint format {manifest.get('format')!r}")
            arrays = {n: np.load(io.BytesIO(zf.read(f"params/{n}.npy")), allow_pickle=False)
                      for n in manifest["params"]}
    except (zipfile.BadZipFile, KeyError, ValueError) as e:
        raise DataError(f"{path}: unreadable checkpoint ({e})") from e
    model = build_model(manifest["model"], manifest["hyper"])
    frozen, pretrained = set(manifest["frozen"]), set(manifest["pretrained"])
    store = ParamStore()
    for n in manifest["params"]:
        store.add(n, arrays[n], frozen=n in frozen, pretrained=n in pretrained)
    vocab = None if manifest["vocab"] is None else Vocab(manifest["vocab"])
    return Checkpoint(store, model, vocab, manifest)

"""Self-describing checkpoints stored as byte-deterministic zip archives.

Layout: ``meta.json`` (dims, variant, epoch, loss history) plus one ``.npy``
member per array, written in sorted order with a fixed timestamp so equal
contents always give equal bytes.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError

FORMAT_VERSION = 1
_FIXED_TIME = (1980, 1, 1, 0, 0, 0)


@dataclass
class Checkpoint:
    dims: dict
    variant: str
    arrays: dict
    epoch: int = 0
    history: list = field(default_factory=list)

    @classmethod
    def from_model(cls, model, epoch=0, history=()):
        arrays = {k: np.array(v, dtype=np.float64, copy=True) for k, v in model.state_arrays().items()}
        return cls(model.dims_dict(), model.variant.name, arrays, int(epoch), [float(h) for h in history])

    def to_model(self):
        from .model import Model, ModelDims

        dims = dict(self.dims)
        dims["lstm_hidden"] = tuple(dims["lstm_hidden"])
        model = Model.init(ModelDims(**dims), seed=0, variant=self.variant)
        missing = sorted(set(model.state_arrays()) - set(self.arrays))
        if missing:
            raise InputError(f"checkpoint lacks tensors: {', '.join(missing[:5])}")
        model.load_state_arrays(self.arrays)
        return model

    def check_dims(self, dims):
        """Raise ConfigError unless ``dims`` (a ModelDims) matches the recorded dims."""
        want = asdict(dims)
        want["lstm_hidden"] = list(want["lstm_hidden"])
        have = dict(self.dims)
        have["lstm_hidden"] = list(have.get("lstm_hidden", []))
        diff = sorted(k for k in want if have.get(k) != want[k])
        if diff:
            k = diff[0]
            raise ConfigError(f"checkpoint has {k}={have.get(k)!r} but the run config has {k}={want[k]!r}")

    def meta(self):
        return {
            "format": FORMAT_VERSION,
            "dims": self.dims,
            "variant": self.variant,
            "epoch": self.epoch,
            "history": self.history,
            "arrays": sorted(self.arrays),
        }


def _member(name):
    info = zipfile.ZipInfo(name, date_time=_FIXED_TIME)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    return info


def to_bytes(ckpt):
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as zf:
        zf.writestr(_member("meta.json"), json.dumps(ckpt.meta(), sort_keys=True, indent=1))
        for name in sorted(ckpt.arrays):
            arr = io.BytesIO()
            np.lib.format.write_array(arr, np.array(ckpt.arrays[name], dtype=np.float64, order="C"), allow_pickle=False)
            zf.writestr(_member(f"arrays/{name}.npy"), arr.getvalue())
    return buf.getvalue()


def save(ckpt, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(to_bytes(ckpt))
    tmp.replace(path)
    return path


def load(path):
    try:
        zf = zipfile.ZipFile(path)
    except (OSError, zipfile.BadZipFile) as exc:
        raise InputError(f"cannot open checkpoint {path}: {exc}") from None
    with zf:
        meta = json.loads(zf.read("meta.json"))
        if meta.get("format") != FORMAT_VERSION:
            raise InputError(f"{path}: unsupported checkpoint format {meta.get('format')!r}")
        arrays = {}
        for name in meta["arrays"]:
            with zf.open(f"arrays/{name}.npy") as f:
                arrays[name] = np.lib.format.read_array(io.BytesIO(f.read()), allow_pickle=False)
    return Checkpoint(meta["dims"], meta["variant"], arrays, meta["epoch"], meta["history"])


def average_checkpoints(ckpts):
    """Unweighted elementwise mean of every tensor over the given list.

    Computed as ``first + mean(x_i - first)`` so that averaging identical
    checkpoints returns the inputs bit for bit.
    """
    ckpts = list(ckpts)
    if not ckpts:
        raise InputError("no checkpoints to average")
    first = ckpts[0]
    for other in ckpts[1:]:
        if other.dims != first.dims or other.variant != first.variant:
            raise InputError("checkpoints were produced by different model configurations")
        if set(other.arrays) != set(first.arrays):
            diff = sorted(set(other.arrays) ^ set(first.arrays))
            raise InputError(f"checkpoint tensor sets differ: {diff[0]}")
        for name, arr in other.arrays.items():
            if arr.shape != first.arrays[name].shape:
                raise InputError(
                    f"tensor {name} has shape {arr.shape} in one checkpoint and {first.arrays[name].shape} in another"
                )
    averaged = {}
    n = len(ckpts)
    for name, base in first.arrays.items():
        delta = sum(c.arrays[name] - base for c in ckpts) / n
        averaged[name] = base + delta
    if "buffer/center_initialized" in averaged:
        averaged["buffer/center_initialized"] = np.array(
            max(float(c.arrays["buffer/center_initialized"]) for c in ckpts)
        )
    epoch = max(c.epoch for c in ckpts)
    latest = max(ckpts, key=lambda c: c.epoch)
    return Checkpoint(dict(first.dims), first.variant, averaged, epoch, list(latest.history))

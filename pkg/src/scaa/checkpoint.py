"""Versioned binary model container.

Layout (all integers little-endian uint32, floats little-endian float64):

    bytes 0..3   magic "SCAA"
    u32          format version (currently 1)
    u32          manifest length in bytes
    ...          manifest: UTF-8 JSON, sorted keys
    u32          matrix count
    repeated:    u32 name length, name (UTF-8),
                 u32 rows, u32 cols,
                 rows*cols float64 values, row-major

The manifest records d, hidden, variant, use_soc, literal_self,
scale_attention, item_count, and the item id list, so a checkpoint fully
reconstructs the model without the original dataset. Writes are
deterministic: same weights in, same bytes out.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .attention import ProjectionTriple, SocParams
from .autodiff import Tensor
from .model import ItemTable, ScaaModel

__all__ = ["CheckpointError", "FORMAT_VERSION", "save_model", "load_model"]

MAGIC = b"SCAA"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """The file is not a valid model container."""


def _u32(n: int) -> bytes:
    return struct.pack("<I", n)


def save_model(path, model: ScaaModel) -> None:
    manifest = {
        "d": model.d,
        "hidden": model.hidden,
        "variant": model.variant,
        "use_soc": model.use_soc,
        "literal_self": model.literal_self,
        "scale_attention": model.scale_attention,
        "item_count": model.items.item_count,
        "item_ids": list(model.items.ids),
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    named = model.named_params()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_u32(FORMAT_VERSION))
        fh.write(_u32(len(blob)))
        fh.write(blob)
        fh.write(_u32(len(named)))
        for name, t in named:
            nb = name.encode("utf-8")
            rows, cols = t.value.shape
            fh.write(_u32(len(nb)))
            fh.write(nb)
            fh.write(_u32(rows))
            fh.write(_u32(cols))
            fh.write(np.ascontiguousarray(t.value, dtype="<f8").tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    b = fh.read(n)
    if len(b) != n:
        raise CheckpointError(f"truncated file while reading {what}")
    return b


def _read_u32(fh, what: str) -> int:
    return struct.unpack("<I", _read_exact(fh, 4, what))[0]


def load_model(path) -> ScaaModel:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise CheckpointError("bad magic, not a model container")
        version = _read_u32(fh, "version")
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported format version {version}")
        mlen = _read_u32(fh, "manifest length")
        try:
            manifest = json.loads(_read_exact(fh, mlen, "manifest").decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"unreadable manifest: {e}") from e
        count = _read_u32(fh, "matrix count")
        mats: dict[str, np.ndarray] = {}
        for _ in range(count):
            nlen = _read_u32(fh, "name length")
            name = _read_exact(fh, nlen, "matrix name").decode("utf-8")
            rows = _read_u32(fh, "rows")
            cols = _read_u32(fh, "cols")
            data = _read_exact(fh, rows * cols * 8, f"matrix {name}")
            mats[name] = np.frombuffer(data, dtype="<f8").reshape(rows, cols).astype(
                np.float64
            )
        if fh.read(1):
            raise CheckpointError("trailing bytes after last matrix")

    for key in (
        "d",
        "hidden",
        "variant",
        "use_soc",
        "literal_self",
        "scale_attention",
        "item_count",
        "item_ids",
    ):
        if key not in manifest:
            raise CheckpointError(f"manifest missing key {key!r}")
    if len(manifest["item_ids"]) != manifest["item_count"]:
        raise CheckpointError("manifest item_count disagrees with item_ids length")

    def take(name: str) -> Tensor:
        if name not in mats:
            raise CheckpointError(f"missing matrix {name!r}")
        return Tensor(mats.pop(name), requires_grad=True)

    def triple(site: str) -> ProjectionTriple:
        return ProjectionTriple(
            take(f"soc.{site}.w_q"), take(f"soc.{site}.w_k"), take(f"soc.{site}.w_v")
        )

    try:
        items = ItemTable(take("items.embeddings"), tuple(manifest["item_ids"]))
        soc = SocParams(
            triple("co_like"), triple("co_follow"), triple("self_like"), triple("self_follow")
        )
        model = ScaaModel(
            items,
            soc,
            take("head.w1"),
            take("head.b1"),
            take("head.w2"),
            take("head.b2"),
            variant=manifest["variant"],
            use_soc=bool(manifest["use_soc"]),
            literal_self=bool(manifest["literal_self"]),
            scale_attention=bool(manifest["scale_attention"]),
        )
    except CheckpointError:
        raise
    except (TypeError, ValueError) as e:
        # internally inconsistent container (mismatched shapes, bad variant...)
        raise CheckpointError(f"inconsistent model container: {e}") from e
    if mats:
        raise CheckpointError(f"unexpected matrices in container: {sorted(mats)}")
    if model.d != manifest["d"] or model.hidden != manifest["hidden"]:
        raise CheckpointError("manifest dimensions disagree with stored matrices")
    return model

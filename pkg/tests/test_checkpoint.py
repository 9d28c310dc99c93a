"""Binary container round-trips and rejection of malformed files."""

import json
import struct

import numpy as np
import pytest

from conftest import rng
from scaa.checkpoint import FORMAT_VERSION, CheckpointError, load_model, save_model
from scaa.model import UserHistory, new_model, predict_batch, score


def small_model(**kw):
    ids = ["vid:a", "vid:b", "vid:c", "vid:d", "vid:e", "vid:f"]
    defaults = dict(d=3, hidden=5, seed_rng=rng(11))
    defaults.update(kw)
    return new_model(ids, **defaults)


def saved(tmp_path, name="m.scaa", **kw):
    model = small_model(**kw)
    path = tmp_path / name
    save_model(path, model)
    return path, model


# ---------------------------------------------------------------- round trips


@pytest.mark.parametrize(
    "kw",
    [
        {},
        dict(variant="co_only", literal_self=True, scale_attention=True),
        dict(variant="none", use_soc=False),
    ],
)
def test_round_trip_preserves_everything(tmp_path, kw):
    path, model = saved(tmp_path, **kw)
    back = load_model(path)
    assert back.variant == model.variant
    assert back.use_soc == model.use_soc
    assert back.literal_self == model.literal_self
    assert back.scale_attention == model.scale_attention
    assert back.items.ids == model.items.ids
    assert back.d == model.d and back.hidden == model.hidden
    orig = model.named_params()
    got = back.named_params()
    assert [n for n, _ in got] == [n for n, _ in orig]
    for (_, a), (_, b) in zip(orig, got):
        assert a.value.tobytes() == b.value.tobytes()
        assert b.requires_grad  # reloaded models stay trainable


def test_save_is_deterministic(tmp_path):
    path1, model = saved(tmp_path, "a.scaa")
    path2 = tmp_path / "b.scaa"
    save_model(path2, model)
    assert path1.read_bytes() == path2.read_bytes()


def test_save_load_save_identical_bytes(tmp_path):
    path, _ = saved(tmp_path)
    back = load_model(path)
    path2 = tmp_path / "again.scaa"
    save_model(path2, back)
    assert path.read_bytes() == path2.read_bytes()


def test_reloaded_model_scores_identically(tmp_path):
    path, model = saved(tmp_path)
    back = load_model(path)
    hist = UserHistory(clicked=(0, 2, 4), liked=(1,), followed=(3, 5))
    pairs = [(hist, c) for c in range(6)] + [(UserHistory(), 0)]
    np.testing.assert_array_equal(predict_batch(model, pairs), predict_batch(back, pairs))
    assert score(model, hist, 2) == score(back, hist, 2)


# ------------------------------------------------------- corruption machinery


def manifest_span(blob):
    mlen = struct.unpack_from("<I", blob, 8)[0]
    return 12, 12 + mlen


def with_manifest(blob, mutate):
    """Re-pack the container around a JSON-level manifest edit."""
    start, end = manifest_span(blob)
    manifest = json.loads(blob[start:end].decode("utf-8"))
    mutate(manifest)
    fresh = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return blob[:8] + struct.pack("<I", len(fresh)) + fresh + blob[end:]


def parse_matrices(rest):
    count = struct.unpack_from("<I", rest, 0)[0]
    off = 4
    entries = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", rest, off)
        off += 4
        name = rest[off : off + nlen]
        off += nlen
        rows, cols = struct.unpack_from("<II", rest, off)
        off += 8
        data = rest[off : off + rows * cols * 8]
        off += rows * cols * 8
        entries.append([name, rows, cols, data])
    assert off == len(rest)
    return entries


def pack_matrices(entries):
    out = [struct.pack("<I", len(entries))]
    for name, rows, cols, data in entries:
        out += [struct.pack("<I", len(name)), name, struct.pack("<II", rows, cols), data]
    return b"".join(out)


def with_matrices(blob, mutate):
    _, end = manifest_span(blob)
    entries = parse_matrices(blob[end:])
    mutate(entries)
    return blob[:end] + pack_matrices(entries)


def expect_reject(tmp_path, blob, message):
    bad = tmp_path / "bad.scaa"
    bad.write_bytes(blob)
    with pytest.raises(CheckpointError, match=message):
        load_model(bad)


# ------------------------------------------------------------ malformed files


def test_bad_magic(tmp_path):
    path, _ = saved(tmp_path)
    blob = path.read_bytes()
    expect_reject(tmp_path, b"XXXX" + blob[4:], "bad magic")


def test_unsupported_version(tmp_path):
    path, _ = saved(tmp_path)
    blob = path.read_bytes()
    bad = blob[:4] + struct.pack("<I", FORMAT_VERSION + 1) + blob[8:]
    expect_reject(tmp_path, bad, "unsupported format version 2")


def test_truncations_every_section(tmp_path):
    path, _ = saved(tmp_path)
    blob = path.read_bytes()
    m_start, m_end = manifest_span(blob)
    (nlen,) = struct.unpack_from("<I", blob, m_end + 4)
    name_end = m_end + 8 + nlen
    cases = [
        (2, "magic"),
        (6, "version"),
        (10, "manifest length"),
        (m_end - 1, "manifest"),
        (m_end + 2, "matrix count"),
        (m_end + 6, "name length"),
        (name_end - 1, "matrix name"),
        (name_end + 2, "rows"),
        (name_end + 6, "cols"),
        (name_end + 12, "matrix items.embeddings"),
        (len(blob) - 1, "matrix head.b2"),
    ]
    for cut, what in cases:
        expect_reject(tmp_path, blob[:cut], f"truncated file while reading {what}")


def test_trailing_bytes(tmp_path):
    path, _ = saved(tmp_path)
    expect_reject(tmp_path, path.read_bytes() + b"\x00", "trailing bytes after last matrix")


def test_garbage_manifest(tmp_path):
    path, _ = saved(tmp_path)
    blob = path.read_bytes()
    _, end = manifest_span(blob)
    junk = b"{not json" + b" " * 3
    bad = blob[:8] + struct.pack("<I", len(junk)) + junk + blob[end:]
    expect_reject(tmp_path, bad, "unreadable manifest")


def test_missing_manifest_key(tmp_path):
    path, _ = saved(tmp_path)
    bad = with_manifest(path.read_bytes(), lambda m: m.pop("hidden"))
    expect_reject(tmp_path, bad, "manifest missing key 'hidden'")


def test_item_count_mismatch(tmp_path):
    path, _ = saved(tmp_path)

    def bump(m):
        m["item_count"] += 1

    bad = with_manifest(path.read_bytes(), bump)
    expect_reject(tmp_path, bad, "item_count disagrees with item_ids length")


def test_missing_matrix(tmp_path):
    path, _ = saved(tmp_path)

    def drop(entries):
        entries[:] = [e for e in entries if e[0] != b"head.w2"]

    bad = with_matrices(path.read_bytes(), drop)
    expect_reject(tmp_path, bad, "missing matrix 'head.w2'")


def test_unexpected_matrix(tmp_path):
    path, _ = saved(tmp_path)

    def add(entries):
        entries.append([b"zzz", 1, 1, struct.pack("<d", 0.0)])

    bad = with_matrices(path.read_bytes(), add)
    expect_reject(tmp_path, bad, r"unexpected matrices in container: \['zzz'\]")


def test_manifest_dimension_disagreement(tmp_path):
    path, _ = saved(tmp_path)

    def grow_d(m):
        m["d"] += 1

    def grow_hidden(m):
        m["hidden"] += 1

    blob = path.read_bytes()
    for mutate in (grow_d, grow_hidden):
        bad = with_manifest(blob, mutate)
        expect_reject(tmp_path, bad, "manifest dimensions disagree with stored matrices")


def test_inconsistent_container_wrapped(tmp_path):
    path, _ = saved(tmp_path)
    blob = path.read_bytes()

    def bad_variant(m):
        m["variant"] = "mystery"

    expect_reject(tmp_path, with_manifest(blob, bad_variant), "inconsistent model container")

    def shrink_ids(m):
        m["item_ids"] = m["item_ids"][:-1]
        m["item_count"] -= 1

    # id list no longer matches the stored embedding rows
    expect_reject(tmp_path, with_manifest(blob, shrink_ids), "inconsistent model container")


def test_empty_file(tmp_path):
    expect_reject(tmp_path, b"", "truncated file while reading magic")

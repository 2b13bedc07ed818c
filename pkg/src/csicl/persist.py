"""On-disk formats: domain datasets, core-sets, and model checkpoints.

Dataset directory layout (bit-exact, little-endian):
    manifest.json   domain_id, n_classes, l_h, n_range, seed, scene_hash,
                    entry_count, endianness tag
    data.bin        per entry: [u32 N][f64 timestamps x N]
                    [f32 interleaved re/im x (N * L_H)][u16 label]

A core-set directory uses the same binary layout plus labels.json carrying the
soft labels, origin domains and the downscaling factor, which is enough to
resume a sequential run after a crash.  Model checkpoints are model.bin (a
u32 config header followed by the flat f32 parameter vector) mirrored by a
human-readable model.json.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile

import numpy as np

from . import coreset as cs
from . import model as m
from .sim import CsiSequence, DomainDataset, SceneConfig

FORMAT_VERSION = 1


def atomic_write_bytes(path: str, payload: bytes):
    """Write-temp-then-rename so readers never observe a partial file."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def dump_json(obj) -> str:
    """Canonical JSON: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def scene_hash(scene: SceneConfig) -> str:
    """Stable digest of everything that determines the generated CSI."""
    parts = [scene.carrier_frequency, scene.bandwidth, scene.n_subcarriers,
             scene.n_tx, scene.n_rx, scene.noise_std,
             int(scene.phase_error_enabled), scene.duration, scene.packet_rate]
    h = hashlib.sha256()
    h.update(json.dumps(parts).encode())
    for arr in (scene.tx_positions, scene.rx_positions,
                scene.static_gain.view(float)):
        h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
    for path in scene.env_paths:
        h.update(struct.pack("<dd", path.gain, path.rcs))
        h.update(np.ascontiguousarray(path.key_times).tobytes())
        h.update(np.ascontiguousarray(path.key_positions).tobytes())
    return h.hexdigest()


def _encode_entry(seq: CsiSequence, label: int) -> bytes:
    n, l_h = seq.samples.shape
    inter = np.empty(2 * n * l_h, dtype="<f4")
    flat = seq.samples.reshape(-1)
    inter[0::2] = flat.real
    inter[1::2] = flat.imag
    return (struct.pack("<I", n)
            + seq.timestamps.astype("<f8").tobytes()
            + inter.tobytes()
            + struct.pack("<H", label))


def _decode_entries(raw: bytes, l_h: int):
    out = []
    offset = 0
    while offset < len(raw):
        (n,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        times = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).copy()
        offset += 8 * n
        inter = np.frombuffer(raw, dtype="<f4", count=2 * n * l_h, offset=offset)
        offset += 8 * n * l_h
        samples = (inter[0::2].astype(float)
                   + 1j * inter[1::2].astype(float)).reshape(n, l_h)
        (label,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        out.append((times, samples, int(label)))
    return out


def save_domain(dataset: DomainDataset, directory: str, seed=None,
                scene: SceneConfig | None = None):
    os.makedirs(directory, exist_ok=True)
    lengths = [seq.n_samples for seq, _ in dataset.entries]
    l_h = dataset.entries[0][0].samples.shape[1] if dataset.entries else 0
    payload = b"".join(_encode_entry(seq, seq.label or 0) for seq, _ in dataset.entries)
    manifest = {
        "format_version": FORMAT_VERSION,
        "domain_id": dataset.domain_id,
        "n_classes": dataset.n_classes,
        "l_h": l_h,
        "n_range": [min(lengths), max(lengths)] if lengths else [0, 0],
        "seed": dataset.metadata.get("seed") if seed is None else seed,
        "scene_hash": scene_hash(scene) if scene is not None else dataset.metadata.get("scene_hash"),
        "entry_count": len(dataset.entries),
        "endianness": "little",
    }
    atomic_write_bytes(os.path.join(directory, "data.bin"), payload)
    atomic_write_text(os.path.join(directory, "manifest.json"), dump_json(manifest))


def load_domain(directory: str) -> DomainDataset:
    with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("endianness") != "little":
        raise ValueError("unsupported dataset endianness tag")
    with open(os.path.join(directory, "data.bin"), "rb") as fh:
        raw = fh.read()
    n_classes = manifest["n_classes"]
    entries = []
    for times, samples, label in _decode_entries(raw, manifest["l_h"]):
        onehot = np.zeros(n_classes)
        onehot[label - 1] = 1.0
        entries.append((CsiSequence(times, samples, label=label), onehot))
    if len(entries) != manifest["entry_count"]:
        raise ValueError("dataset entry count disagrees with its manifest")
    return DomainDataset(domain_id=manifest["domain_id"], entries=entries,
                         metadata={k: manifest.get(k) for k in ("seed", "scene_hash", "n_classes")})


def save_coreset(knowledge: cs.KnowledgeCoreSet, directory: str):
    os.makedirs(directory, exist_ok=True)
    payload = b"".join(_encode_entry(e.sequence, e.class_id) for e in knowledge.entries)
    lengths = [e.sequence.n_samples for e in knowledge.entries]
    l_h = knowledge.entries[0].sequence.samples.shape[1] if knowledge.entries else 0
    manifest = {
        "format_version": FORMAT_VERSION,
        "domain_id": -1,
        "n_classes": int(max((e.class_id for e in knowledge.entries), default=0)),
        "l_h": l_h,
        "n_range": [min(lengths), max(lengths)] if lengths else [0, 0],
        "seed": None,
        "scene_hash": None,
        "entry_count": len(knowledge.entries),
        "endianness": "little",
    }
    labels = {
        "budget_per_class": knowledge.budget_per_class,
        "eta": knowledge.eta,
        "entries": [{"domain": e.domain_id, "class": e.class_id,
                     "soft_label": [float(v) for v in e.soft_label]}
                    for e in knowledge.entries],
    }
    atomic_write_bytes(os.path.join(directory, "data.bin"), payload)
    atomic_write_text(os.path.join(directory, "manifest.json"), dump_json(manifest))
    atomic_write_text(os.path.join(directory, "labels.json"), dump_json(labels))


def load_coreset(directory: str) -> cs.KnowledgeCoreSet:
    with open(os.path.join(directory, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    with open(os.path.join(directory, "labels.json"), encoding="utf-8") as fh:
        labels = json.load(fh)
    with open(os.path.join(directory, "data.bin"), "rb") as fh:
        raw = fh.read()
    decoded = _decode_entries(raw, manifest["l_h"])
    if len(decoded) != len(labels["entries"]):
        raise ValueError("core-set binary and label records disagree in length")
    entries = []
    for (times, samples, label), rec in zip(decoded, labels["entries"]):
        if label != rec["class"]:
            raise ValueError("core-set binary and label records disagree on a class")
        entries.append(cs.CoreSetEntry(
            sequence=CsiSequence(times, samples, label=label),
            soft_label=np.array(rec["soft_label"], dtype=float),
            domain_id=rec["domain"],
            class_id=rec["class"],
        ))
    return cs.KnowledgeCoreSet(budget_per_class=labels["budget_per_class"],
                               eta=labels["eta"], entries=entries)


_HEADER_FIELDS = ("input_width", "mlp_width_0", "mlp_width_1", "feature_width",
                  "n_heads", "n_blocks", "n_classes", "dropout_millionths")


def save_model(params: m.ModelParams, directory: str):
    """model.bin: u32 header of all config fields, then the flat f32 theta.

    The dropout rate is stored in millionths to fit the all-u32 header; the
    json mirror carries the exact float.
    """
    os.makedirs(directory, exist_ok=True)
    cfg = params.config
    header = (cfg.input_width, cfg.mlp_widths[0], cfg.mlp_widths[1], cfg.feature_width,
              cfg.n_heads, cfg.n_blocks, cfg.n_classes,
              int(round(cfg.dropout_rate * 1_000_000)))
    payload = struct.pack("<8I", *header) + params.flat.astype("<f4").tobytes()
    atomic_write_bytes(os.path.join(directory, "model.bin"), payload)
    mirror = dict(zip(_HEADER_FIELDS, header))
    mirror.update({"dropout_rate": cfg.dropout_rate,
                   "param_count": int(params.flat.size),
                   "format_version": FORMAT_VERSION})
    atomic_write_text(os.path.join(directory, "model.json"), dump_json(mirror))


def load_model(directory: str, dtype=np.float64) -> m.ModelParams:
    with open(os.path.join(directory, "model.bin"), "rb") as fh:
        raw = fh.read()
    header = struct.unpack_from("<8I", raw)
    cfg = m.ModelConfig(
        input_width=header[0],
        mlp_widths=(header[1], header[2]),
        feature_width=header[3],
        n_heads=header[4],
        n_blocks=header[5],
        n_classes=header[6],
        dropout_rate=header[7] / 1_000_000,
    )
    flat = np.frombuffer(raw, dtype="<f4", offset=32).astype(dtype)
    return m.ModelParams(cfg, flat)

"""Binary container for datasets, trajectories, and checkpoints.

Layout: 4-byte magic ("DMXD" for data, "DMXC" for checkpoints), a u32
little-endian header length, a UTF-8 JSON header, then raw little-endian
values row-major. Checkpoint tensors are named entries with byte offsets
recorded in the header. Headers are serialized with sorted keys and named
entries are written in sorted order, so save -> load -> save reproduces
identical bytes. Writes go to a temp file followed by an atomic rename.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .dataset import NormStats, TrajectoryDataset

MAGIC_DATA = b"DMXD"
MAGIC_CHECKPOINT = b"DMXC"
FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


def _canonical_dtype(arr: np.ndarray) -> str:
    return np.dtype(arr.dtype).newbyteorder("<").str


def _atomic_write(path: str, blob: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _pack(magic: bytes, header: dict, payload: bytes) -> bytes:
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return magic + np.array(len(head), dtype="<u4").tobytes() + head + payload


def _unpack(blob: bytes, magic: bytes) -> tuple[dict, bytes]:
    if blob[:4] != magic:
        raise FormatError(f"bad magic {blob[:4]!r}, expected {magic!r}")
    hlen = int(np.frombuffer(blob[4:8], dtype="<u4")[0])
    header = json.loads(blob[8 : 8 + hlen].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {header.get('format_version')}")
    return header, blob[8 + hlen :]


# --- datasets -----------------------------------------------------------------


def save_dataset(path: str, ds: TrajectoryDataset) -> None:
    arr = np.ascontiguousarray(ds.data)
    header = {
        "format_version": FORMAT_VERSION,
        "kind": "dataset",
        "pde": ds.pde,
        "dtype": _canonical_dtype(arr),
        "shape": list(arr.shape),
        "channel_names": ds.channel_names,
        "split": ds.split,
        "spec": ds.spec_echo,
    }
    _atomic_write(path, _pack(MAGIC_DATA, header, arr.astype(header["dtype"]).tobytes()))


def load_dataset(path: str) -> TrajectoryDataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    header, payload = _unpack(blob, MAGIC_DATA)
    if header.get("kind") != "dataset":
        raise FormatError(f"not a dataset file (kind={header.get('kind')!r})")
    shape = tuple(header["shape"])
    arr = np.frombuffer(payload, dtype=header["dtype"]).reshape(shape).copy()
    return TrajectoryDataset(
        data=arr,
        pde=header["pde"],
        channel_names=list(header["channel_names"]),
        split=list(header["split"]),
        spec_echo=header["spec"],
    )


def save_trajectory(path: str, arr: np.ndarray, meta: dict | None = None) -> None:
    arr = np.ascontiguousarray(arr)
    header = {
        "format_version": FORMAT_VERSION,
        "kind": "trajectory",
        "dtype": _canonical_dtype(arr),
        "shape": list(arr.shape),
        "meta": meta or {},
    }
    _atomic_write(path, _pack(MAGIC_DATA, header, arr.astype(header["dtype"]).tobytes()))


def load_trajectory(path: str) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    header, payload = _unpack(blob, MAGIC_DATA)
    if header.get("kind") != "trajectory":
        raise FormatError(f"not a trajectory file (kind={header.get('kind')!r})")
    arr = np.frombuffer(payload, dtype=header["dtype"]).reshape(tuple(header["shape"])).copy()
    return arr, header["meta"]


# --- checkpoints ----------------------------------------------------------------


def save_checkpoint(path: str, *, model_config: dict, precision: str,
                    run_config: dict, epoch: int, optimizer_step: int,
                    arrays: dict[str, np.ndarray]) -> None:
    """Write named tensors (params, moments, norm stats) plus config echo."""
    entries = []
    chunks = []
    offset = 0
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])  # 0-d scalars keep their shape
        dtype = _canonical_dtype(arr)
        raw = arr.astype(dtype).tobytes()
        entries.append({
            "name": name,
            "dtype": dtype,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(raw),
        })
        chunks.append(raw)
        offset += len(raw)
    header = {
        "format_version": FORMAT_VERSION,
        "kind": "checkpoint",
        "model_config": model_config,
        "precision": precision,
        "run_config": run_config,
        "epoch": epoch,
        "optimizer_step": optimizer_step,
        "entries": entries,
    }
    _atomic_write(path, _pack(MAGIC_CHECKPOINT, header, b"".join(chunks)))


def load_checkpoint(path: str) -> dict:
    with open(path, "rb") as fh:
        blob = fh.read()
    header, payload = _unpack(blob, MAGIC_CHECKPOINT)
    if header.get("kind") != "checkpoint":
        raise FormatError(f"not a checkpoint file (kind={header.get('kind')!r})")
    arrays = {}
    for e in header["entries"]:
        raw = payload[e["offset"] : e["offset"] + e["nbytes"]]
        arrays[e["name"]] = (
            np.frombuffer(raw, dtype=e["dtype"]).reshape(tuple(e["shape"])).copy()
        )
    return {
        "model_config": header["model_config"],
        "precision": header["precision"],
        "run_config": header["run_config"],
        "epoch": header["epoch"],
        "optimizer_step": header["optimizer_step"],
        "arrays": arrays,
    }


def checkpoint_arrays(model, optimizer=None, norm: NormStats | None = None
                      ) -> dict[str, np.ndarray]:
    """Collect the named tensors a checkpoint persists."""
    arrays = {f"param.{p.name}": p.value for p in model.parameters()}
    if optimizer is not None:
        arrays.update(optimizer.state_arrays())
    if norm is not None:
        arrays["norm.mins"] = norm.mins
        arrays["norm.maxs"] = norm.maxs
    return arrays


def restore_model_arrays(model, arrays: dict[str, np.ndarray]) -> None:
    """Copy parameter tensors into the model in place (aliases survive)."""
    for p in model.parameters():
        key = f"param.{p.name}"
        if key not in arrays:
            raise FormatError(f"checkpoint is missing parameter {p.name!r}")
        stored = arrays[key]
        if tuple(stored.shape) != tuple(p.value.shape):
            raise FormatError(
                f"checkpoint parameter {p.name!r} has shape {stored.shape}, "
                f"model expects {p.value.shape}"
            )
        p.value[...] = stored.astype(p.value.dtype)


def norm_from_arrays(arrays: dict[str, np.ndarray]) -> NormStats | None:
    if "norm.mins" in arrays:
        return NormStats(mins=arrays["norm.mins"], maxs=arrays["norm.maxs"])
    return None

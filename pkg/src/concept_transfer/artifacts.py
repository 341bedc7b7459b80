"""On-disk artifacts: a directory holding ``manifest.json`` and ``tensors.bin``.

``tensors.bin`` is the concatenation of little-endian float32 arrays; the
manifest lists each tensor's name, shape, byte offset and byte length, the
64-bit FNV-1a hash of the blob, and the ids of the artifacts it was built
from.  The artifact id is the FNV-1a hash of the canonical manifest text
(without the id itself), so it covers tensors and metadata alike.

Writes go to a temporary sibling directory that is renamed into place.
"""
from __future__ import annotations

import json
import os
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .alignment import AlignmentMap
from .bottleneck import Agent, BottleneckPolicy
from .concepts import ConceptModel
from .encoder import DemoDataset, Encoder

FORMAT_VERSION = 1
MANIFEST = "manifest.json"
BLOB = "tensors.bin"
KINDS = ("encoder", "concept_model", "bottleneck_policy", "alignment_map", "report",
         "demo_dataset", "agent")

_FNV_OFFSET = np.uint64(0xCBF29CE484222325)
_FNV_PRIME = np.uint64(0x100000001B3)


class ArtifactError(Exception):
    """Missing, malformed or corrupt artifact."""


@numba.njit(cache=True)
def _fnv1a64(data: np.ndarray) -> np.uint64:
    h = _FNV_OFFSET
    for byte in data:
        h ^= np.uint64(byte)
        h *= _FNV_PRIME
    return h


def fnv1a64(data: bytes) -> str:
    """64-bit FNV-1a of ``data`` as 16 lowercase hex digits."""
    return f"{int(_fnv1a64(np.frombuffer(data, dtype=np.uint8))):016x}"


@dataclass(frozen=True)
class Artifact:
    kind: str
    tensors: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)
    created_from: tuple[str, ...] = ()
    seeds: dict = field(default_factory=dict)
    artifact_id: str = ""


def _pack(tensors: dict[str, np.ndarray]) -> tuple[bytes, list[dict]]:
    index, chunks, offset = [], [], 0
    for name in sorted(tensors):
        raw = np.ascontiguousarray(tensors[name], dtype="<f4").tobytes()
        index.append({"name": name, "shape": list(np.shape(tensors[name])),
                      "offset": offset, "length": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    return b"".join(chunks), index


def _canonical(manifest: dict) -> str:
    return json.dumps(manifest, sort_keys=True, indent=1) + "\n"


def _write_dir(path: Path, files: dict[str, bytes]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{path.name}.", dir=path.parent))
    try:
        for name, data in files.items():
            (tmp / name).write_bytes(data)
        if path.exists():
            old = path.with_name(f".{path.name}.old{os.getpid()}")
            os.replace(path, old)
            os.replace(tmp, path)
            shutil.rmtree(old)
        else:
            os.replace(tmp, path)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def write_artifact(path, kind: str, tensors: dict[str, np.ndarray], meta: dict | None = None,
                   created_from=(), seeds: dict | None = None) -> str:
    """Write an artifact directory atomically and return its id."""
    if kind not in KINDS:
        raise ValueError(f"unknown artifact kind {kind!r}")
    blob, index = _pack(tensors)
    manifest = {
        "artifact_kind": kind,
        "format_version": FORMAT_VERSION,
        "created_from": list(created_from),
        "seeds": seeds or {},
        "hyperparameters": meta or {},
        "tensors": index,
        "blob_fnv1a64": fnv1a64(blob),
    }
    manifest["artifact_id"] = fnv1a64(_canonical(manifest).encode())
    _write_dir(Path(path), {BLOB: blob, MANIFEST: _canonical(manifest).encode()})
    return manifest["artifact_id"]


def read_manifest(path) -> dict:
    path = Path(path)
    try:
        manifest = json.loads((path / MANIFEST).read_text())
    except FileNotFoundError:
        raise ArtifactError(f"{path}: no artifact here") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"{path}: unreadable manifest ({exc})") from None
    if not isinstance(manifest, dict) or manifest.get("format_version") != FORMAT_VERSION:
        raise ArtifactError(f"{path}: unsupported manifest format")
    claimed = manifest.pop("artifact_id", None)
    if claimed != fnv1a64(_canonical(manifest).encode()):
        raise ArtifactError(f"{path}: manifest hash mismatch")
    manifest["artifact_id"] = claimed
    return manifest


def read_artifact(path, kind: str | None = None) -> Artifact:
    """Load and verify an artifact; raises :class:`ArtifactError` on any problem."""
    path = Path(path)
    manifest = read_manifest(path)
    if kind is not None and manifest["artifact_kind"] != kind:
        raise ArtifactError(f"{path}: expected a {kind} artifact, found {manifest['artifact_kind']}")
    try:
        blob = (path / BLOB).read_bytes()
    except OSError:
        raise ArtifactError(f"{path}: tensor blob missing") from None
    if fnv1a64(blob) != manifest["blob_fnv1a64"]:
        raise ArtifactError(f"{path}: tensor blob hash mismatch")
    tensors = {}
    for entry in manifest["tensors"]:
        start, length = entry["offset"], entry["length"]
        count = int(np.prod(entry["shape"], dtype=np.int64))
        if start < 0 or start + length > len(blob) or length != 4 * count:
            raise ArtifactError(f"{path}: tensor {entry['name']} lies outside the blob")
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=start).reshape(entry["shape"])
        arr = arr.astype(np.float32)
        arr.flags.writeable = False
        tensors[entry["name"]] = arr
    return Artifact(manifest["artifact_kind"], tensors, manifest["hyperparameters"],
                    tuple(manifest["created_from"]), manifest["seeds"], manifest["artifact_id"])


def artifact_id(path) -> str:
    return read_manifest(path)["artifact_id"]


# ------------------------------------------------------------------ models

def save_demos(path, data: DemoDataset, seed: int, games: int) -> str:
    tensors = {
        "obs": data.obs.reshape(len(data), -1),
        "actions": data.actions,
        "masks": data.masks,
        "game_lengths": np.asarray(data.game_lengths),
    }
    return write_artifact(path, "demo_dataset", tensors, {"games": games}, seeds={"seed": seed})


def load_demos(path) -> DemoDataset:
    t = read_artifact(path, "demo_dataset").tensors
    n = len(t["actions"])
    return DemoDataset(
        t["obs"].reshape(n, 7, 7, 3),
        t["actions"].astype(np.int64),
        t["masks"].astype(bool),
        tuple(int(x) for x in t["game_lengths"]),
    )


def save_encoder(path, enc: Encoder, created_from=(), meta: dict | None = None) -> str:
    info = {"steps": enc.steps, "loss_history": list(enc.loss_history), **(meta or {})}
    return write_artifact(path, "encoder", enc.tensors(), info, created_from, {"seed": enc.seed})


def load_encoder(path) -> Encoder:
    a = read_artifact(path, "encoder")
    t = a.tensors
    return Encoder(t["w1"], t["b1"], t["w2"], t["b2"], t.get("head_w"), t.get("head_b"),
                   seed=int(a.seeds["seed"]), steps=int(a.meta["steps"]),
                   loss_history=tuple(a.meta["loss_history"]))


def save_concepts(path, cm: ConceptModel, created_from=(), meta: dict | None = None) -> str:
    info = {"k": cm.k, "inertia": cm.inertia, "feature_count": cm.feature_count,
            "lloyd_inertia": list(cm.lloyd_inertia), **(meta or {})}
    return write_artifact(path, "concept_model", {"centroids": cm.centroids}, info,
                          created_from, {"seed": cm.fit_seed})


def load_concepts(path) -> ConceptModel:
    a = read_artifact(path, "concept_model")
    return ConceptModel(a.tensors["centroids"], int(a.meta["k"]), int(a.seeds["seed"]),
                        float(a.meta["inertia"]), int(a.meta["feature_count"]),
                        tuple(a.meta["lloyd_inertia"]))


def save_policy(path, policy: BottleneckPolicy, created_from=(), meta: dict | None = None) -> str:
    info = {"provenance": policy.provenance, "loss_history": list(policy.loss_history),
            **(meta or {})}
    return write_artifact(path, "bottleneck_policy", policy.tensors(), info, created_from,
                          {"seed": policy.seed})


def load_policy(path) -> BottleneckPolicy:
    a = read_artifact(path, "bottleneck_policy")
    return BottleneckPolicy(**a.tensors, seed=int(a.seeds["seed"]),
                            provenance=a.meta["provenance"],
                            loss_history=tuple(a.meta["loss_history"]))


def save_alignment(path, amap: AlignmentMap, created_from=()) -> str:
    """Alignment maps carry no tensors; the map itself is JSON in the manifest."""
    return write_artifact(path, "alignment_map", {}, amap.to_dict(), created_from,
                          {"seed": amap.seed})


def load_alignment(path) -> AlignmentMap:
    a = read_artifact(path, "alignment_map")
    try:
        return AlignmentMap.from_dict(a.meta)
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactError(f"{path}: malformed alignment map ({exc})") from None


# ------------------------------------------------------------------- agents
#
# An agent directory holds its own manifest (kind "agent", no tensors) plus
# sub-artifacts encoder/, concepts/ and policy/.  A missing encoder/ means
# the handcrafted feature map.

def save_agent(path, ag: Agent, created_from=(), meta: dict | None = None,
               policy_from=(), copy_parts: dict | None = None) -> str:
    """Write an agent directory.

    ``copy_parts`` maps "encoder" / "concepts" to existing artifact
    directories that are verified and copied verbatim, which keeps their
    provenance; the caller guarantees they hold the agent's own models.
    """
    path = Path(path)
    copy_parts = {k: Path(v) for k, v in (copy_parts or {}).items()}
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{path.name}.", dir=path.parent))
    try:
        parts = []
        if ag.encoder is not None:
            if "encoder" in copy_parts:
                read_artifact(copy_parts["encoder"], "encoder")
                shutil.copytree(copy_parts["encoder"], tmp / "encoder")
                parts.append(artifact_id(tmp / "encoder"))
            else:
                parts.append(save_encoder(tmp / "encoder", ag.encoder))
        if "concepts" in copy_parts:
            read_artifact(copy_parts["concepts"], "concept_model")
            shutil.copytree(copy_parts["concepts"], tmp / "concepts")
            parts.append(artifact_id(tmp / "concepts"))
        else:
            parts.append(save_concepts(tmp / "concepts", ag.concept_model))
        parts.append(save_policy(tmp / "policy", ag.policy, tuple(policy_from)))
        agent_id = write_artifact(
            tmp / "agent", "agent", {},
            {"handcrafted_encoder": ag.encoder is None, **(meta or {})},
            tuple(parts) + tuple(created_from))
        os.replace(tmp / "agent" / MANIFEST, tmp / MANIFEST)
        os.replace(tmp / "agent" / BLOB, tmp / BLOB)
        os.rmdir(tmp / "agent")
        if path.exists():
            shutil.rmtree(path)
        os.replace(tmp, path)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return agent_id


def load_agent(path) -> Agent:
    path = Path(path)
    a = read_artifact(path, "agent")
    handcrafted = bool(a.meta.get("handcrafted_encoder"))
    enc = None if handcrafted else load_encoder(path / "encoder")
    parts = ([] if handcrafted else [artifact_id(path / "encoder")]) + [
        artifact_id(path / "concepts"), artifact_id(path / "policy")]
    if list(a.created_from[:len(parts)]) != parts:
        raise ArtifactError(f"{path}: agent parts do not match the agent manifest")
    return Agent(enc, load_concepts(path / "concepts"), load_policy(path / "policy"))


# ------------------------------------------------------------------ reports

def write_report(csv_path, csv_text: str, summary: dict, experiment: str,
                 created_from=(), seeds: dict | None = None) -> dict:
    """Write ``csv_path`` and a JSON summary beside it, both atomically.

    The JSON records the report kind, experiment, seeds, input artifact ids
    and the FNV-1a hash of the CSV text.
    """
    csv_path = Path(csv_path)
    doc = {
        "artifact_kind": "report",
        "format_version": FORMAT_VERSION,
        "experiment": experiment,
        "created_from": list(created_from),
        "seeds": seeds or {},
        "csv": csv_path.name,
        "csv_fnv1a64": fnv1a64(csv_text.encode()),
        "summary": summary,
    }
    json_path = csv_path.with_suffix(".json")
    _atomic_file(csv_path, csv_text.encode())
    _atomic_file(json_path, _canonical(doc).encode())
    return doc


def _atomic_file(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise

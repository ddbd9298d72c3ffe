"""Synthetic prediction stores with a controllable distribution shift.

A teacher assigns class logits to latent 2-d inputs through random linear
maps; labels are drawn from the teacher's softmax. Each member model adds
its own fixed Gaussian offset to the teacher's class logits, so member
disagreement concentrates where the teacher is uncertain and fades where
one class dominates. The shifted test set translates its inputs along a
fixed random direction, which moves probability mass toward the teacher's
confident regions or away from them depending on the draw. Everything is
a pure function of the spec, so a fixed spec reproduces the store byte
for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .store import PredictionStore, softmax

IND_ID = "ind"
OOD_ID = "ood"


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs for one synthetic store."""

    n_points: int = 1000
    n_classes: int = 10
    n_models: int = 4
    member_noise_scale: float = 0.25
    shift_strength: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_points < 1:
            raise ValidationError("n_points must be >= 1")
        if self.n_classes < 2:
            raise ValidationError("n_classes must be >= 2")
        if self.n_models < 1:
            raise ValidationError("n_models must be >= 1")
        if self.member_noise_scale < 0 or self.shift_strength < 0:
            raise ValidationError("noise and shift scales must be nonnegative")


def _sample_labels(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    cum = probs.cumsum(axis=1)
    u = rng.random(probs.shape[0])
    return (u[:, None] > cum).sum(axis=1).astype(np.int64)


def _generate(spec: SyntheticSpec) -> dict[str, tuple[np.ndarray, dict[str, np.ndarray]]]:
    """Labels and per-model float64 logits for both datasets.

    Returns {dataset_id: (labels, {model_id: logits})} with a fixed draw
    order so the output is reproducible for a fixed seed.
    """
    rng = np.random.default_rng(spec.seed)
    c, k = spec.n_classes, spec.n_models

    teacher_w = rng.standard_normal((c, 2))
    teacher_b = rng.standard_normal(c)
    raw_dir = rng.standard_normal(2)
    shift_dir = raw_dir / np.linalg.norm(raw_dir)
    member_offset = rng.standard_normal((k, c)) * spec.member_noise_scale

    out: dict[str, tuple[np.ndarray, dict[str, np.ndarray]]] = {}
    for dataset_id in (IND_ID, OOD_ID):
        z = rng.standard_normal((spec.n_points, 2))
        if dataset_id == OOD_ID:
            z = z + spec.shift_strength * shift_dir
        teacher_logits = z @ teacher_w.T + teacher_b
        labels = _sample_labels(rng, softmax(teacher_logits))
        logits = {f"m{m:03d}": teacher_logits + member_offset[m] for m in range(k)}
        out[dataset_id] = (labels, logits)
    return out


def simulate_store(spec: SyntheticSpec) -> PredictionStore:
    """Generate the in-memory store for a spec (float64 end to end)."""
    data = _generate(spec)
    store = PredictionStore()
    for dataset_id, (labels, logits) in data.items():
        store.register_dataset(dataset_id, labels, spec.n_classes)
        for model_id, arr in logits.items():
            store.add_prediction(model_id, dataset_id, softmax(arr))
    store.pairs.append((IND_ID, OOD_ID))
    return store


def write_synthetic_store(spec: SyntheticSpec, out_dir: str | Path) -> Path:
    """Generate a store and write it in manifest format.

    Member files hold raw float32 logits so loading exercises the logit
    ingestion path; labels are raw int32. Returns the manifest path.
    """
    data = _generate(spec)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    datasets = []
    model_files: dict[str, dict[str, str]] = {f"m{m:03d}": {} for m in range(spec.n_models)}
    for dataset_id, (labels, logits) in data.items():
        labels_file = f"{dataset_id}_labels.i32"
        (out_dir / labels_file).write_bytes(labels.astype("<i4").tobytes())
        datasets.append(
            {
                "id": dataset_id,
                "n": spec.n_points,
                "c": spec.n_classes,
                "labels_file": labels_file,
                "kind": "logits",
            }
        )
        for model_id, arr in logits.items():
            rel = f"{model_id}__{dataset_id}.f32"
            (out_dir / rel).write_bytes(arr.astype("<f4").tobytes())
            model_files[model_id][dataset_id] = rel

    manifest = {
        "datasets": datasets,
        "models": [{"id": mid, "files": files} for mid, files in sorted(model_files.items())],
        "pairs": [[IND_ID, OOD_ID]],
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path

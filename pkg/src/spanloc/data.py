"""Synthetic grounding tasks and dataset file IO.

A synthetic example plants a motif inside the target segment: frames inside
the ground truth carry the mean of the query tokens' motif vectors plus
Gaussian noise, frames outside carry a distractor motif absent from the
query. With zero noise the segment boundary is recoverable exactly by
nearest-motif matching, which makes the task a learnability oracle.

On disk a dataset is a pair of files sharing a base path: ``<base>.json``
holds the manifest {version, count, T, D_v, records: [{feature_offset, N,
tokens, gt_s, gt_e, duration_s}]} and ``<base>.bin`` holds all features as
record-major little-endian float32, ``feature_offset`` counted in bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FormatError
from .supervision import Segment

_MOTIF_STREAM = 0
_RECORD_STREAM = 1

DATASET_VERSION = 1


@dataclass
class SyntheticSpec:
    frames: int = 32
    d_video_in: int = 16
    vocab_size: int = 64
    noise: float = 0.3
    query_len: tuple[int, int] = (3, 6)
    segment_len: tuple[int, int] = (4, 12)
    seed: int = 0

    def validate(self) -> None:
        if self.frames < 2:
            raise ConfigError(f"need at least 2 frames, got {self.frames}")
        if self.noise < 0:
            raise ConfigError(f"noise must be >= 0, got {self.noise}")
        lo, hi = self.query_len
        if not 1 <= lo <= hi or hi >= self.vocab_size:
            raise ConfigError(f"query length range {self.query_len} invalid for vocab {self.vocab_size}")
        slo, shi = self.segment_len
        if not 1 <= slo <= shi or slo > self.frames:
            raise ConfigError(
                f"segment length range {self.segment_len} does not fit in {self.frames} frames"
            )

    def motifs(self) -> np.ndarray:
        """Fixed per-token feature vectors, a pure function of the seed."""
        rng = np.random.default_rng([self.seed, _MOTIF_STREAM])
        return rng.standard_normal((self.vocab_size, self.d_video_in)).astype(np.float32)


@dataclass(eq=False)
class GroundingExample:
    features: np.ndarray  # frames x d_video_in, float32
    tokens: list[int]
    gt: Segment
    duration_s: float


def generate_example(
    spec: SyntheticSpec, rng: np.random.Generator, motifs: np.ndarray | None = None
) -> GroundingExample:
    spec.validate()
    if motifs is None:
        motifs = spec.motifs()
    n = int(rng.integers(spec.query_len[0], spec.query_len[1] + 1))
    tokens = rng.choice(spec.vocab_size, size=n, replace=False)
    length = int(rng.integers(spec.segment_len[0], min(spec.segment_len[1], spec.frames) + 1))
    start = int(rng.integers(0, spec.frames - length + 1))
    gt = Segment(start, start + length - 1)
    others = np.setdiff1d(np.arange(spec.vocab_size), tokens)
    distractor = int(rng.choice(others))

    target_motif = motifs[tokens].mean(axis=0, dtype=np.float64)
    base = np.tile(motifs[distractor].astype(np.float64), (spec.frames, 1))
    base[gt.start : gt.end + 1] = target_motif
    noise = rng.standard_normal((spec.frames, spec.d_video_in))
    features = (base + spec.noise * noise).astype(np.float32)
    return GroundingExample(
        features=features,
        tokens=[int(t) for t in tokens],
        gt=gt,
        duration_s=float(spec.frames),
    )


def generate_dataset(
    spec: SyntheticSpec, count: int, start_index: int = 0
) -> list[GroundingExample]:
    """Deterministic dataset; record i draws from its own (seed, i) stream."""
    spec.validate()
    motifs = spec.motifs()
    return [
        generate_example(
            spec, np.random.default_rng([spec.seed, _RECORD_STREAM, start_index + i]), motifs
        )
        for i in range(count)
    ]


def _paths(base_path) -> tuple[Path, Path]:
    base = Path(base_path)
    return base.with_suffix(".json"), base.with_suffix(".bin")


def save_dataset(examples: list[GroundingExample], base_path) -> tuple[Path, Path]:
    """Write ``<base>.json`` and ``<base>.bin``; returns both paths."""
    manifest_path, payload_path = _paths(base_path)
    frames = examples[0].features.shape[0] if examples else 0
    width = examples[0].features.shape[1] if examples else 0
    records = []
    payload = bytearray()
    for ex in examples:
        if ex.features.shape != (frames, width):
            raise DataError(
                f"all records must share shape ({frames}, {width}), got {ex.features.shape}"
            )
        records.append(
            {
                "feature_offset": len(payload),
                "N": len(ex.tokens),
                "tokens": [int(t) for t in ex.tokens],
                "gt_s": int(ex.gt.start),
                "gt_e": int(ex.gt.end),
                "duration_s": float(ex.duration_s),
            }
        )
        payload.extend(np.ascontiguousarray(ex.features, dtype="<f4").tobytes())
    manifest = {
        "version": DATASET_VERSION,
        "count": len(examples),
        "T": frames,
        "D_v": width,
        "records": records,
    }
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    payload_path.write_bytes(bytes(payload))
    return manifest_path, payload_path


def load_dataset(base_path) -> list[GroundingExample]:
    manifest_path, payload_path = _paths(base_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as err:
        raise FormatError(f"malformed manifest {manifest_path}: {err}") from err
    version = manifest.get("version")
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {version!r} (expected {DATASET_VERSION})")
    records = manifest.get("records")
    if records is None or manifest.get("count") != len(records):
        raise FormatError(
            f"manifest count {manifest.get('count')!r} does not match {len(records or [])} records"
        )
    frames, width = manifest["T"], manifest["D_v"]
    payload = payload_path.read_bytes()
    record_bytes = frames * width * 4
    expected = len(records) * record_bytes
    if len(payload) != expected:
        raise FormatError(
            f"payload is {len(payload)} bytes, expected {expected} "
            f"({len(records)} records of {record_bytes} bytes)"
        )
    examples = []
    for i, rec in enumerate(records):
        offset = rec["feature_offset"]
        if offset + record_bytes > len(payload):
            raise FormatError(
                f"record {i} needs bytes [{offset}, {offset + record_bytes}) "
                f"but payload ends at {len(payload)}"
            )
        if rec["N"] != len(rec["tokens"]):
            raise FormatError(f"record {i}: N={rec['N']} but {len(rec['tokens'])} tokens")
        features = np.frombuffer(
            payload, dtype="<f4", count=frames * width, offset=offset
        ).reshape(frames, width)
        examples.append(
            GroundingExample(
                features=features.copy(),
                tokens=[int(t) for t in rec["tokens"]],
                gt=Segment(int(rec["gt_s"]), int(rec["gt_e"])),
                duration_s=float(rec["duration_s"]),
            )
        )
    return examples


def subsample_indices(length: int, target: int) -> np.ndarray:
    """Uniform-stride frame selection used when a sequence exceeds target."""
    return (np.arange(target) * length) // target


def timestamps_to_segment(
    start_s: float, end_s: float, frames: int, duration_s: float
) -> Segment:
    """Inverse of the frame-to-seconds mapping: floor start, ceil end - 1."""
    s = int(np.floor(start_s * frames / duration_s))
    e = int(np.ceil(end_s * frames / duration_s)) - 1
    s = min(max(s, 0), frames - 1)
    e = min(max(e, s), frames - 1)
    return Segment(s, e)


def ingest_real_features(manifest_path, max_t: int) -> list[GroundingExample]:
    """Load pre-extracted features listed in an ingestion manifest.

    The manifest is JSON: {version, d_video_in, records: [{id, feature_file,
    frames, tokens, start_s, end_s, duration_s}]} where each feature file is
    raw little-endian float32 of frames x d_video_in. Sequences longer than
    ``max_t`` are uniformly subsampled to ``max_t``.
    """
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as err:
        raise FormatError(f"malformed manifest {manifest_path}: {err}") from err
    if manifest.get("version") != DATASET_VERSION:
        raise FormatError(f"unsupported ingestion manifest version {manifest.get('version')!r}")
    width = manifest["d_video_in"]
    examples = []
    for rec in manifest["records"]:
        sample = rec.get("id", "<unnamed>")
        frames = int(rec["frames"])
        raw = (manifest_path.parent / rec["feature_file"]).read_bytes()
        if len(raw) != frames * width * 4:
            raise FormatError(
                f"sample {sample}: feature file is {len(raw)} bytes, "
                f"expected {frames * width * 4}"
            )
        features = np.frombuffer(raw, dtype="<f4").reshape(frames, width)
        duration = float(rec["duration_s"])
        start_s, end_s = float(rec["start_s"]), float(rec["end_s"])
        if not (0.0 <= start_s <= end_s <= duration):
            raise DataError(
                f"sample {sample}: segment ({start_s}, {end_s}) outside video of {duration}s"
            )
        if frames > max_t:
            features = features[subsample_indices(frames, max_t)]
            frames = max_t
        examples.append(
            GroundingExample(
                features=features.copy(),
                tokens=[int(t) for t in rec["tokens"]],
                gt=timestamps_to_segment(start_s, end_s, frames, duration),
                duration_s=duration,
            )
        )
    return examples

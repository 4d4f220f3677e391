"""Synthetic multi-modal datasets with a shared latent factor per paired sample.

Each class gets a latent center (random unit direction scaled by the
separation knob). Paired video/fMRI rows share one latent draw pushed through
fixed full-rank linear maps plus modality noise; emotion rows use independent
latent draws around the same centers, so they are label-correlated but never
row-paired. Values are rounded to float32 at generation time so on-disk
round trips are bit-exact.

On-disk layout: a directory with ``manifest.json`` plus one headerless
little-endian float32 row-major blob per modality.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError

FORMAT_VERSION = "neuralign-ds/1"
_BLOB_NAMES = {"video": "video.f32", "fmri": "fmri.f32", "emotion": "emotion.f32"}

# Within-class latent spread; separation between centers is the config knob,
# this fixes the scale the separation is measured against.
LATENT_SPREAD = 0.5


@dataclass
class SyntheticSpec:
    num_classes: int = 5
    latent_dim: int = 4
    video_dim: int = 32
    fmri_dim: int = 24
    emotion_dim: int = 16
    samples_per_class: int = 40
    repetitions_per_class: int = 10
    class_separation: float = 3.0
    noise_std: tuple[float, float, float] = (0.05, 0.05, 0.05)  # video, fmri, emotion
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.noise_std, (int, float)):
            self.noise_std = (float(self.noise_std),) * 3
        self.noise_std = tuple(float(s) for s in self.noise_std)
        self.validate()

    def validate(self) -> None:
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.latent_dim < 1:
            raise ConfigurationError("latent_dim must be >= 1")
        for name in ("video_dim", "fmri_dim", "emotion_dim"):
            if getattr(self, name) < self.latent_dim:
                raise ConfigurationError(
                    f"{name} must be >= latent_dim ({self.latent_dim})")
        if self.samples_per_class < 1 or self.repetitions_per_class < 1:
            raise ConfigurationError("need at least one sample per class per set")
        if self.class_separation < 0:
            raise ConfigurationError("class_separation must be >= 0")
        if len(self.noise_std) != 3 or any(s < 0 for s in self.noise_std):
            raise ConfigurationError(f"invalid noise_std {self.noise_std}")

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "latent_dim": self.latent_dim,
            "video_dim": self.video_dim,
            "fmri_dim": self.fmri_dim,
            "emotion_dim": self.emotion_dim,
            "samples_per_class": self.samples_per_class,
            "repetitions_per_class": self.repetitions_per_class,
            "class_separation": self.class_separation,
            "noise_std": list(self.noise_std),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SyntheticSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigurationError(f"unknown dataset spec field(s) {sorted(unknown)}")
        if "noise_std" in raw and isinstance(raw["noise_std"], list):
            raw = dict(raw, noise_std=tuple(raw["noise_std"]))
        return cls(**raw)


@dataclass
class DatasetBundle:
    """Paired video/fMRI rows plus label-only emotion rows."""

    video: np.ndarray  # (n, video_dim), row-paired with fmri
    fmri: np.ndarray  # (n, fmri_dim)
    emotion: np.ndarray  # (m, emotion_dim), labels only, no row pairing
    labels_paired: np.ndarray  # (n,)
    labels_emotion: np.ndarray  # (m,)
    num_classes: int
    spec_echo: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.video.shape[0] != self.fmri.shape[0]:
            raise ConfigurationError(
                f"paired row counts differ: video {self.video.shape[0]}, "
                f"fmri {self.fmri.shape[0]}")
        if self.labels_paired.shape[0] != self.video.shape[0]:
            raise ConfigurationError("labels_paired length != paired row count")
        if self.labels_emotion.shape[0] != self.emotion.shape[0]:
            raise ConfigurationError("labels_emotion length != emotion row count")

    @property
    def dims(self) -> dict[str, int]:
        return {"video": self.video.shape[1], "fmri": self.fmri.shape[1],
                "emotion": self.emotion.shape[1]}

    @property
    def n_paired(self) -> int:
        return self.video.shape[0]

    @property
    def n_emotion(self) -> int:
        return self.emotion.shape[0]


def bundles_equal(a: DatasetBundle, b: DatasetBundle) -> bool:
    """Bitwise equality of arrays, labels and class count."""
    return (a.num_classes == b.num_classes
            and a.video.shape == b.video.shape
            and a.fmri.shape == b.fmri.shape
            and a.emotion.shape == b.emotion.shape
            and a.video.tobytes() == b.video.tobytes()
            and a.fmri.tobytes() == b.fmri.tobytes()
            and a.emotion.tobytes() == b.emotion.tobytes()
            and np.array_equal(a.labels_paired, b.labels_paired)
            and np.array_equal(a.labels_emotion, b.labels_emotion))


def _f32_exact(x: np.ndarray) -> np.ndarray:
    return x.astype(np.float32).astype(np.float64)


def generate_synthetic(spec: SyntheticSpec) -> DatasetBundle:
    """Deterministic draw of the full bundle from the spec's seed."""
    spec.validate()
    rng_shared = np.random.default_rng(np.random.SeedSequence((spec.seed, 0)))

    directions = rng_shared.normal(size=(spec.num_classes, spec.latent_dim))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    centers = spec.class_separation * directions / norms

    def linear_map(out_dim: int) -> np.ndarray:
        a = rng_shared.normal(size=(out_dim, spec.latent_dim)) / np.sqrt(spec.latent_dim)
        assert np.linalg.matrix_rank(a) == spec.latent_dim
        return a

    map_video = linear_map(spec.video_dim)
    map_fmri = linear_map(spec.fmri_dim)
    map_emotion = linear_map(spec.emotion_dim)

    video_parts, fmri_parts, emotion_parts = [], [], []
    nv, nf, ne = spec.noise_std
    for k in range(spec.num_classes):
        rng_pair = np.random.default_rng(np.random.SeedSequence((spec.seed, 1, k)))
        z = centers[k] + LATENT_SPREAD * rng_pair.normal(
            size=(spec.samples_per_class, spec.latent_dim))
        video_parts.append(z @ map_video.T + nv * rng_pair.normal(
            size=(spec.samples_per_class, spec.video_dim)))
        fmri_parts.append(z @ map_fmri.T + nf * rng_pair.normal(
            size=(spec.samples_per_class, spec.fmri_dim)))

        rng_emo = np.random.default_rng(np.random.SeedSequence((spec.seed, 2, k)))
        z_emo = centers[k] + LATENT_SPREAD * rng_emo.normal(
            size=(spec.repetitions_per_class, spec.latent_dim))
        emotion_parts.append(z_emo @ map_emotion.T + ne * rng_emo.normal(
            size=(spec.repetitions_per_class, spec.emotion_dim)))

    labels_paired = np.repeat(np.arange(spec.num_classes), spec.samples_per_class)
    labels_emotion = np.repeat(np.arange(spec.num_classes), spec.repetitions_per_class)
    return DatasetBundle(
        video=_f32_exact(np.vstack(video_parts)),
        fmri=_f32_exact(np.vstack(fmri_parts)),
        emotion=_f32_exact(np.vstack(emotion_parts)),
        labels_paired=labels_paired.astype(np.int64),
        labels_emotion=labels_emotion.astype(np.int64),
        num_classes=spec.num_classes,
        spec_echo=spec.to_dict(),
    )


def write_dataset(bundle: DatasetBundle, path: str | Path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": FORMAT_VERSION,
        "num_classes": bundle.num_classes,
        "dims": bundle.dims,
        "rows": {"paired": bundle.n_paired, "emotion": bundle.n_emotion},
        "blobs": dict(_BLOB_NAMES),
        "labels_paired": bundle.labels_paired.tolist(),
        "labels_emotion": bundle.labels_emotion.tolist(),
        "generator_spec": bundle.spec_echo,
    }
    for modality, filename in _BLOB_NAMES.items():
        arr = getattr(bundle, modality)
        (path / filename).write_bytes(arr.astype("<f4").tobytes())
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _require(manifest: dict, key: str):
    if key not in manifest:
        raise FormatError(f"manifest field {key!r} is missing")
    return manifest[key]


def read_dataset(path: str | Path) -> DatasetBundle:
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.is_file():
        raise FormatError(f"manifest.json not found under {path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"manifest.json is not valid JSON: {e}") from None

    version = _require(manifest, "format_version")
    if version != FORMAT_VERSION:
        raise FormatError(
            f"format_version {version!r} unsupported, expected {FORMAT_VERSION!r}")
    num_classes = _require(manifest, "num_classes")
    dims = _require(manifest, "dims")
    rows = _require(manifest, "rows")
    blobs = _require(manifest, "blobs")

    arrays = {}
    row_counts = {"video": rows["paired"], "fmri": rows["paired"],
                  "emotion": rows["emotion"]}
    for modality in ("video", "fmri", "emotion"):
        if modality not in blobs:
            raise FormatError(f"blobs entry for {modality!r} is missing")
        blob_path = path / blobs[modality]
        if not blob_path.is_file():
            raise FormatError(f"blob file {blobs[modality]!r} not found")
        raw = blob_path.read_bytes()
        n, d = row_counts[modality], dims[modality]
        expected = n * d * 4
        if len(raw) != expected:
            raise FormatError(
                f"blob {blobs[modality]!r}: manifest declares {n} rows x {d} cols "
                f"({expected} bytes) but file holds {len(raw)} bytes")
        arrays[modality] = np.frombuffer(raw, dtype="<f4").reshape(n, d).astype(np.float64)

    labels_paired = np.asarray(_require(manifest, "labels_paired"), dtype=np.int64)
    labels_emotion = np.asarray(_require(manifest, "labels_emotion"), dtype=np.int64)
    if labels_paired.shape[0] != rows["paired"]:
        raise FormatError(
            f"labels_paired length {labels_paired.shape[0]} != declared "
            f"paired rows {rows['paired']}")
    if labels_emotion.shape[0] != rows["emotion"]:
        raise FormatError(
            f"labels_emotion length {labels_emotion.shape[0]} != declared "
            f"emotion rows {rows['emotion']}")
    for name, labels in (("labels_paired", labels_paired),
                         ("labels_emotion", labels_emotion)):
        if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
            raise FormatError(f"{name} contains values outside [0, {num_classes})")

    return DatasetBundle(
        video=arrays["video"], fmri=arrays["fmri"], emotion=arrays["emotion"],
        labels_paired=labels_paired, labels_emotion=labels_emotion,
        num_classes=num_classes, spec_echo=manifest.get("generator_spec"),
    )


def _stratified_pick(labels: np.ndarray, num_classes: int, train_fraction: float,
                     seed_key: tuple, set_name: str) -> tuple[np.ndarray, np.ndarray]:
    train_idx, test_idx = [], []
    for k in range(num_classes):
        members = np.flatnonzero(labels == k)
        n_train = int(np.floor(members.size * train_fraction))
        if n_train < 1 or n_train >= members.size:
            raise ConfigurationError(
                f"split would empty class {k} on one side of the {set_name} set "
                f"({members.size} samples, fraction {train_fraction})")
        rng = np.random.default_rng(np.random.SeedSequence((*seed_key, k)))
        perm = rng.permutation(members)
        train_idx.append(np.sort(perm[:n_train]))
        test_idx.append(np.sort(perm[n_train:]))
    return np.concatenate(train_idx), np.concatenate(test_idx)


def split(bundle: DatasetBundle, train_fraction: float,
          seed: int = 0) -> tuple[DatasetBundle, DatasetBundle]:
    """Class-stratified split; paired rows move together, emotion rows separately."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigurationError(
            f"train_fraction must be in (0, 1), got {train_fraction}")
    pair_train, pair_test = _stratified_pick(
        bundle.labels_paired, bundle.num_classes, train_fraction, (seed, 10), "paired")
    emo_train, emo_test = _stratified_pick(
        bundle.labels_emotion, bundle.num_classes, train_fraction, (seed, 11), "emotion")

    def pick(p_idx: np.ndarray, e_idx: np.ndarray) -> DatasetBundle:
        return DatasetBundle(
            video=bundle.video[p_idx].copy(), fmri=bundle.fmri[p_idx].copy(),
            emotion=bundle.emotion[e_idx].copy(),
            labels_paired=bundle.labels_paired[p_idx].copy(),
            labels_emotion=bundle.labels_emotion[e_idx].copy(),
            num_classes=bundle.num_classes, spec_echo=bundle.spec_echo,
        )

    return pick(pair_train, emo_train), pick(pair_test, emo_test)

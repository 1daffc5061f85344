"""The four conditioning architectures and their training loop.

A model is an extraction network (BLSTM stack, dense hidden layer, sigmoid
mask layer) plus, in the embedding modes, an auxiliary network whose
time-pooled output multiplies the first hidden layer of the extractor:

  speakerbeam   - embedding from an enrollment utterance (plain time average)
  adenet_aux    - embedding from the mixture, activity-weighted average
  adenet_input  - no embedding; activity appended as an input column
  adenet_mix    - both the activity column and the activity-weighted embedding
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .activity import (
    FrameActivity,
    SegmentList,
    VadConfig,
    energy_vad,
    jitter_segments,
    remove_overlap,
    segments_to_frames,
)
from .dsp import (
    AudioSignal,
    FeatureSequence,
    MaskSequence,
    StftConfig,
    apply_mask,
    istft,
    log_amplitude,
    stft,
)
from .errors import (
    CheckpointError,
    ConfigurationError,
    InvalidInputError,
    NoActiveFramesError,
)
from .neural import AdamState, BiLSTM, Dense, ParamStore, adam_step
from .neural import checkpoint as ckpt_io

MODES = ("speakerbeam", "adenet_aux", "adenet_input", "adenet_mix")
ACTIVITY_VARIANTS = ("without_overlap", "with_overlap")
_NORM_STD_FLOOR = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    mode: str
    feature_dim: int = 257
    recurrent_layers: int = 2
    recurrent_units: int = 64
    aux_hidden: int = 64
    normalization: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if min(self.feature_dim, self.recurrent_layers, self.recurrent_units, self.aux_hidden) < 1:
            raise ConfigurationError("all model dimensions must be positive")

    @property
    def embed_dim(self) -> int:
        # the embedding multiplies the first BLSTM output, so it must match 2H
        return 2 * self.recurrent_units

    @property
    def uses_embedding(self) -> bool:
        return self.mode != "adenet_input"

    @property
    def uses_activity_input(self) -> bool:
        return self.mode in ("adenet_input", "adenet_mix")

    @property
    def needs_activity(self) -> bool:
        return self.mode != "speakerbeam"

    @property
    def extractor_input_dim(self) -> int:
        return self.feature_dim + (1 if self.uses_activity_input else 0)

    @property
    def aux_input_dim(self) -> int:
        return self.feature_dim + (1 if self.mode == "adenet_mix" else 0)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    lr: float = 1e-3
    seed: int = 0
    jitter_enabled: bool = False
    max_shift_s: float = 1.0
    activity_variant: str = "without_overlap"
    jitter_per_epoch: bool = True
    loss_domain: str = "linear"
    valid_fraction: float = 0.15
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigurationError("epochs must be non-negative")
        if self.lr <= 0:
            raise ConfigurationError("learning rate must be positive")
        if self.activity_variant not in ACTIVITY_VARIANTS:
            raise ConfigurationError(f"activity_variant must be one of {ACTIVITY_VARIANTS}")
        if self.loss_domain not in ("linear", "log"):
            raise ConfigurationError("loss_domain must be 'linear' or 'log'")
        if self.max_shift_s < 0:
            raise ConfigurationError("max_shift_s must be non-negative")


@dataclass(frozen=True)
class SpeakerEmbedding:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 1 or not np.all(np.isfinite(values)):
            raise InvalidInputError("embedding must be a finite vector")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)


class ExtractionModel:
    """Layer assembly, embedding computation, and the training-time graph."""

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.store = ParamStore(dtype)
        rng = np.random.default_rng(seed)
        H2 = config.embed_dim
        self.blstms = []
        din = config.extractor_input_dim
        for i in range(config.recurrent_layers):
            self.blstms.append(BiLSTM(self.store, f"ext.blstm{i}", din, config.recurrent_units, rng))
            din = H2
        self.fc_hidden = Dense(self.store, "ext.fc", H2, H2, "relu", rng)
        self.fc_mask = Dense(self.store, "ext.mask", H2, config.feature_dim, "sigmoid", rng)
        if config.uses_embedding:
            self.aux_fc0 = Dense(self.store, "aux.fc0", config.aux_input_dim, config.aux_hidden, "relu", rng)
            self.aux_fc1 = Dense(self.store, "aux.fc1", config.aux_hidden, H2, "linear", rng)
        self._cache = None

    # ---------------------------------------------------------------- helpers

    def _normalize(self, frames: np.ndarray) -> np.ndarray:
        frames = np.asarray(frames, dtype=self.store.dtype)
        if not self.config.normalization:
            return frames
        mean = frames.mean(axis=0)
        std = np.maximum(frames.std(axis=0), _NORM_STD_FLOOR)
        return (frames - mean) / std

    def _with_activity_column(self, frames: np.ndarray, p: np.ndarray) -> np.ndarray:
        col = np.asarray(p, dtype=self.store.dtype).reshape(-1, 1)
        if col.shape[0] != frames.shape[0]:
            raise InvalidInputError(
                f"activity length {col.shape[0]} != feature length {frames.shape[0]}"
            )
        return np.concatenate([frames, col], axis=1)

    def _aux_frames(self, aux_input: np.ndarray) -> np.ndarray:
        return self.aux_fc1.forward(self.aux_fc0.forward(aux_input))

    @staticmethod
    def _pool(frames: np.ndarray, weights: np.ndarray) -> np.ndarray:
        return (weights[:, None] * frames).sum(axis=0) / weights.sum()

    # ------------------------------------------------------------- embeddings

    def aux_embed_enrollment(self, enroll_features: FeatureSequence) -> SpeakerEmbedding:
        """Time-average of the auxiliary network over an enrollment utterance."""
        if not self.config.uses_embedding:
            raise ConfigurationError(f"mode {self.config.mode!r} has no auxiliary network")
        if self.config.mode == "adenet_mix":
            raise ConfigurationError("adenet_mix embeds from the mixture, not an enrollment")
        frames = enroll_features.frames
        if frames.shape[0] < 1:
            raise InvalidInputError("enrollment must contain at least one frame")
        if frames.shape[1] != self.config.feature_dim:
            raise InvalidInputError(
                f"expected {self.config.feature_dim} feature bins, got {frames.shape[1]}"
            )
        aux_in = self._normalize(frames)
        weights = np.ones(frames.shape[0], dtype=self.store.dtype)
        return SpeakerEmbedding(self._pool(self._aux_frames(aux_in), weights))

    def aux_embed_activity(self, mixture_features: FeatureSequence, p: FrameActivity) -> SpeakerEmbedding:
        """Activity-weighted pooling of the auxiliary network over the mixture."""
        if not self.config.uses_embedding:
            raise ConfigurationError(f"mode {self.config.mode!r} has no auxiliary network")
        frames = mixture_features.frames
        if len(p) != frames.shape[0]:
            raise InvalidInputError(f"activity length {len(p)} != feature length {frames.shape[0]}")
        if p.num_active == 0:
            raise NoActiveFramesError("activity has no active frame; cannot pool an embedding")
        weights = p.values.astype(self.store.dtype)
        aux_in = self._normalize(frames)
        if self.config.mode == "adenet_mix":
            aux_in = self._with_activity_column(aux_in, weights)
        return SpeakerEmbedding(self._pool(self._aux_frames(aux_in), weights))

    # -------------------------------------------------------------- extractor

    def _validate_clue(self, has_e: bool, has_p: bool) -> None:
        mode = self.config.mode
        need_e = self.config.uses_embedding
        need_p = self.config.uses_activity_input
        if has_e != need_e or has_p != need_p:
            raise ConfigurationError(
                f"mode {mode!r} requires embedding={need_e}, activity-input={need_p}; "
                f"got embedding={has_e}, activity-input={has_p}"
            )

    def _extract_from_input(self, x: np.ndarray, e: np.ndarray | None):
        h = self.blstms[0].forward(x)
        h1 = h
        if e is not None:
            h = h * e[None, :]
        for layer in self.blstms[1:]:
            h = layer.forward(h)
        h = self.fc_hidden.forward(h)
        mask = self.fc_mask.forward(h)
        return mask, h1

    def extract_mask(
        self,
        mixture_features: FeatureSequence,
        e: SpeakerEmbedding | None = None,
        p: FrameActivity | None = None,
    ) -> MaskSequence:
        """Mask in [0,1]^(T x F) from features plus the mode's clue arguments."""
        self._validate_clue(e is not None, p is not None)
        frames = mixture_features.frames
        if frames.shape[1] != self.config.feature_dim:
            raise InvalidInputError(
                f"expected {self.config.feature_dim} feature bins, got {frames.shape[1]}"
            )
        x = self._normalize(frames)
        if p is not None:
            if len(p) != frames.shape[0]:
                raise InvalidInputError(
                    f"activity length {len(p)} != feature length {frames.shape[0]}"
                )
            x = self._with_activity_column(x, p.values)
        e_values = None
        if e is not None:
            if len(e) != self.config.embed_dim:
                raise InvalidInputError(
                    f"embedding dim {len(e)} != first hidden layer width {self.config.embed_dim}"
                )
            e_values = np.asarray(e.values, dtype=self.store.dtype)
        mask, _ = self._extract_from_input(x, e_values)
        return MaskSequence(np.asarray(mask, dtype=np.float64))

    # ------------------------------------------------------------ train graph

    def train_forward(
        self,
        features: np.ndarray,
        p: np.ndarray | None,
        enroll_features: np.ndarray | None,
    ) -> np.ndarray:
        """Forward pass through aux and extraction networks; caches for backward."""
        cfg = self.config
        feats_n = self._normalize(features)
        e = None
        weights = None
        h1 = None
        if cfg.uses_embedding:
            if cfg.mode == "speakerbeam":
                if enroll_features is None:
                    raise ConfigurationError("speakerbeam training needs enrollment features")
                aux_in = self._normalize(enroll_features)
                weights = np.ones(aux_in.shape[0], dtype=self.store.dtype)
            else:
                if p is None:
                    raise ConfigurationError(f"mode {cfg.mode!r} training needs activity")
                weights = np.asarray(p, dtype=self.store.dtype)
                if weights.sum() == 0:
                    raise NoActiveFramesError("no active frame in training activity")
                aux_in = feats_n
                if cfg.mode == "adenet_mix":
                    aux_in = self._with_activity_column(aux_in, weights)
            aux_frames = self._aux_frames(aux_in)
            e = self._pool(aux_frames, weights)
        x = feats_n
        if cfg.uses_activity_input:
            if p is None:
                raise ConfigurationError(f"mode {cfg.mode!r} training needs activity")
            x = self._with_activity_column(x, p)
        mask, h1 = self._extract_from_input(x, e)
        self._cache = {"e": e, "weights": weights, "h1": h1}
        return mask

    def train_backward(self, dmask: np.ndarray) -> None:
        """Backprop from the mask gradient; populates the store's gradients."""
        if self._cache is None:
            raise InvalidInputError("train_backward before train_forward")
        cache = self._cache
        d = self.fc_mask.backward(np.asarray(dmask, dtype=self.store.dtype))
        d = self.fc_hidden.backward(d)
        for layer in reversed(self.blstms[1:]):
            d = layer.backward(d)
        e = cache["e"]
        if e is not None:
            de = (d * cache["h1"]).sum(axis=0)
            d = d * e[None, :]
        self.blstms[0].backward(d)
        if e is not None:
            w = cache["weights"]
            dframes = np.outer(w, de) / w.sum()
            self.aux_fc0.backward(self.aux_fc1.backward(dframes))
        self.store.grads_ready = True


# --------------------------------------------------------------- checkpoints


@dataclass
class Checkpoint:
    model_config: ModelConfig
    stft_config: StftConfig
    sample_rate_hz: int
    seed: int
    arrays: dict
    train_config: TrainConfig | None = None
    history: list = field(default_factory=list)

    def build_model(self, dtype=np.float32) -> ExtractionModel:
        model = ExtractionModel(self.model_config, seed=0, dtype=dtype)
        expected = {name: model.store[name].shape for name in model.store.names()}
        got = {name: arr.shape for name, arr in self.arrays.items()}
        if expected != got:
            raise CheckpointError(
                f"checkpoint arrays do not match config: expected {expected}, got {got}"
            )
        model.store.load_snapshot(self.arrays)
        return model

    def save(self, path) -> None:
        metadata = {
            "schema_version": 1,
            "model_config": dataclasses.asdict(self.model_config),
            "train_config": dataclasses.asdict(self.train_config) if self.train_config else None,
            "stft_config": dataclasses.asdict(self.stft_config),
            "sample_rate_hz": self.sample_rate_hz,
            "seed": self.seed,
            "history": self.history,
        }
        ckpt_io.save_arrays(path, metadata, self.arrays)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        metadata, arrays = ckpt_io.load_arrays(path)
        try:
            model_config = ModelConfig(**metadata["model_config"])
            stft_config = StftConfig(**metadata["stft_config"])
            tc = metadata.get("train_config")
            train_config = TrainConfig(**tc) if tc else None
            loaded = cls(
                model_config=model_config,
                stft_config=stft_config,
                sample_rate_hz=int(metadata["sample_rate_hz"]),
                seed=int(metadata["seed"]),
                arrays=arrays,
                train_config=train_config,
                history=[tuple(h) for h in metadata.get("history", [])],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"{path}: bad checkpoint metadata: {exc}") from exc
        loaded.build_model()  # validates array names and shapes against the config
        return loaded


# ------------------------------------------------------------------ pipeline


def forward_extract(
    mixture: AudioSignal,
    clue,
    checkpoint: Checkpoint,
    model: ExtractionModel | None = None,
):
    """Full pipeline: STFT, features, embedding per mode, mask, resynthesis.

    `clue` is a SegmentList for the activity-driven modes or an enrollment
    AudioSignal for speakerbeam. Returns (extracted AudioSignal, MaskSequence).
    Callers extracting many signals can pass a prebuilt `model`.
    """
    if len(mixture) == 0:
        raise InvalidInputError("cannot extract from an empty mixture")
    if mixture.sample_rate_hz != checkpoint.sample_rate_hz:
        raise InvalidInputError(
            f"mixture sample rate {mixture.sample_rate_hz} != checkpoint "
            f"rate {checkpoint.sample_rate_hz}"
        )
    if model is None:
        model = checkpoint.build_model()
    mode = checkpoint.model_config.mode
    spec = stft(mixture, checkpoint.stft_config)
    feats = log_amplitude(spec)
    if mode == "speakerbeam":
        if not isinstance(clue, AudioSignal):
            raise ConfigurationError("speakerbeam checkpoints need an enrollment AudioSignal")
        enroll_feats = log_amplitude(stft(clue, checkpoint.stft_config))
        e = model.aux_embed_enrollment(enroll_feats)
        mask = model.extract_mask(feats, e=e)
    else:
        if not isinstance(clue, SegmentList):
            raise ConfigurationError(f"{mode} checkpoints need a SegmentList activity clue")
        p = segments_to_frames(
            clue, checkpoint.stft_config, spec.num_frames, mixture.sample_rate_hz
        )
        if mode == "adenet_aux":
            e = model.aux_embed_activity(feats, p)
            mask = model.extract_mask(feats, e=e)
        elif mode == "adenet_input":
            mask = model.extract_mask(feats, p=p)
        else:
            e = model.aux_embed_activity(feats, p)
            mask = model.extract_mask(feats, e=e, p=p)
    out = istft(apply_mask(spec, mask))
    return out, mask


# ------------------------------------------------------------------ training


@dataclass
class _PreparedExample:
    mag_y: np.ndarray
    feats: np.ndarray
    ref_mag: np.ndarray
    base_segments: SegmentList
    num_frames: int
    enroll_feats: np.ndarray | None


def _prepare_example(sample, stft_config, variant, vad_config, needs_enrollment):
    spec_y = stft(sample.mixture, stft_config)
    feats = log_amplitude(spec_y).frames
    ref_mag = np.abs(stft(sample.target, stft_config).frames)
    target_vad = energy_vad(sample.target, vad_config)
    if variant == "without_overlap":
        other_vads = [energy_vad(sample.sources[o], vad_config) for o in sample.interferer_ids]
        base = remove_overlap(target_vad, other_vads)
    else:
        base = target_vad
    enroll_feats = None
    if needs_enrollment:
        if sample.enrollment is None:
            raise ConfigurationError("speakerbeam training needs enrollment audio per example")
        enroll_feats = log_amplitude(stft(sample.enrollment, stft_config)).frames
    return _PreparedExample(
        mag_y=np.abs(spec_y.frames),
        feats=feats,
        ref_mag=ref_mag,
        base_segments=base,
        num_frames=spec_y.num_frames,
        enroll_feats=enroll_feats,
    )


def _example_loss(model, prep, p_values, train_config, want_grad):
    from .neural import mse_loss

    mask = model.train_forward(prep.feats, p_values, prep.enroll_feats)
    est = mask * prep.mag_y
    if train_config.loss_domain == "linear":
        loss, dest = mse_loss(est, prep.ref_mag)
        dmask = dest * prep.mag_y
    else:
        eps = 1e-7
        est_f = np.maximum(est, eps)
        loss, dlog = mse_loss(np.log(est_f), np.log(np.maximum(prep.ref_mag, eps)))
        dmask = np.where(est > eps, dlog / est_f, 0.0) * prep.mag_y
    if want_grad:
        model.train_backward(dmask)
    return loss


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list  # (epoch, train_loss, valid_loss) tuples


def train(
    dataset,
    model_config: ModelConfig,
    train_config: TrainConfig,
    stft_config: StftConfig | None = None,
    vad_config: VadConfig | None = None,
    dtype=np.float32,
    progress=None,
) -> TrainResult:
    """Optimize a model on (mixture, reference, activity) triplets.

    Oracle activity is derived by running the energy VAD on each reference,
    reduced per `activity_variant`, and optionally jittered each epoch. The
    checkpoint returned holds the parameters with the best validation loss
    (validation always uses clean, un-jittered activity). Fully deterministic
    for a fixed `train_config.seed`.
    """
    if not dataset:
        raise ConfigurationError("training needs a non-empty dataset")
    stft_config = stft_config or StftConfig()
    if model_config.feature_dim != stft_config.num_bins:
        raise ConfigurationError(
            f"feature_dim {model_config.feature_dim} != F={stft_config.num_bins} "
            "from the STFT config"
        )
    fs = dataset[0].mixture.sample_rate_hz
    if any(s.mixture.sample_rate_hz != fs for s in dataset):
        raise ConfigurationError("all examples must share one sample rate")
    seed = train_config.seed
    model = ExtractionModel(model_config, seed=seed, dtype=dtype)
    adam = AdamState(model.store, lr=train_config.lr)

    prepared = [
        _prepare_example(
            s, stft_config, train_config.activity_variant, vad_config,
            model_config.mode == "speakerbeam",
        )
        for s in dataset
    ]

    n_valid = 0
    if train_config.epochs > 0 and len(prepared) >= 5:
        n_valid = max(1, round(train_config.valid_fraction * len(prepared)))
    train_idx = list(range(len(prepared) - n_valid))
    valid_idx = list(range(len(prepared) - n_valid, len(prepared)))

    def activity_values(prep, epoch, idx, jitter):
        segs = prep.base_segments
        if jitter and train_config.jitter_enabled and train_config.max_shift_s > 0:
            jit_epoch = epoch if train_config.jitter_per_epoch else 0
            segs = jitter_segments(
                segs, train_config.max_shift_s, seed=[seed, 3, jit_epoch, idx]
            )
        p = segments_to_frames(segs, stft_config, prep.num_frames, fs)
        return p.values if model_config.needs_activity else None

    def valid_loss():
        losses = []
        for idx in valid_idx:
            prep = prepared[idx]
            try:
                losses.append(
                    _example_loss(model, prep, activity_values(prep, 0, idx, False),
                                  train_config, want_grad=False)
                )
            except NoActiveFramesError:
                continue
        return float(np.mean(losses)) if losses else float("nan")

    history = []
    best_loss = np.inf
    best_arrays = model.store.snapshot()
    for epoch in range(train_config.epochs):
        order = np.random.default_rng([seed, 2, epoch]).permutation(train_idx)
        epoch_losses = []
        for idx in order:
            prep = prepared[idx]
            try:
                p_values = activity_values(prep, epoch, int(idx), True)
            except NoActiveFramesError:
                continue
            try:
                loss = _example_loss(model, prep, p_values, train_config, want_grad=True)
            except NoActiveFramesError:
                continue
            model.store.clip_global_grad_norm(train_config.clip_norm)
            adam_step(model.store, adam)
            epoch_losses.append(loss)
        train_loss = float(np.mean(epoch_losses)) if epoch_losses else float("nan")
        v_loss = valid_loss() if valid_idx else train_loss
        history.append((epoch, train_loss, v_loss))
        if np.isfinite(v_loss) and v_loss < best_loss:
            best_loss = v_loss
            best_arrays = model.store.snapshot()
        elif not valid_idx:
            best_arrays = model.store.snapshot()
        if progress is not None:
            progress(epoch, train_loss, v_loss)

    arrays32 = {name: np.asarray(arr, dtype=np.float32) for name, arr in best_arrays.items()}
    checkpoint = Checkpoint(
        model_config=model_config,
        stft_config=stft_config,
        sample_rate_hz=fs,
        seed=seed,
        arrays=arrays32,
        train_config=train_config,
        history=history,
    )
    return TrainResult(checkpoint=checkpoint, history=history)

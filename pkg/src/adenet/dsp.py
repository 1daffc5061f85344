"""Waveform I/O, STFT analysis/synthesis, log-amplitude features, and masking.

All operations are pure functions over immutable value types, so results can
be shared freely between workers.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, InvalidInputError, UnsupportedFormatError

DEFAULT_SAMPLE_RATE = 16000
DEFAULT_FLOOR_EPS = 1e-7

_PCM_SCALE = 32768.0  # 16-bit full scale; +1.0 clips to 32767


@dataclass(frozen=True)
class AudioSignal:
    """Mono waveform with sample rate. Samples are float64 in roughly [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InvalidInputError(f"expected mono 1-D samples, got shape {samples.shape}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise InvalidInputError("samples must be finite")
        if int(self.sample_rate_hz) <= 0:
            raise InvalidInputError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def normalized(self, peak: float = 1.0) -> "AudioSignal":
        """Scale so max |sample| equals `peak` (no-op on silence)."""
        m = np.max(np.abs(self.samples)) if len(self) else 0.0
        if m == 0.0:
            return self
        return AudioSignal(self.samples * (peak / m), self.sample_rate_hz)


def _make_window(name: str, length: int) -> np.ndarray:
    n = np.arange(length)
    if name == "sqrt_hann":
        return np.sin(np.pi * n / length)  # sqrt of the periodic Hann window
    if name == "hann":
        return 0.5 * (1.0 - np.cos(2.0 * np.pi * n / length))
    raise ConfigurationError(f"unknown window {name!r}")


@dataclass(frozen=True)
class StftConfig:
    """Analysis parameters; defaults give 32 ms windows with an 8 ms shift at 16 kHz."""

    window_len_samples: int = 512
    hop_samples: int = 128
    fft_size: int = 512
    window: str = "sqrt_hann"

    def __post_init__(self):
        if self.window_len_samples <= 0 or self.hop_samples <= 0 or self.fft_size <= 0:
            raise ConfigurationError("window, hop, and fft size must be positive")
        if self.hop_samples > self.window_len_samples:
            raise ConfigurationError(
                f"hop ({self.hop_samples}) must not exceed window length "
                f"({self.window_len_samples})"
            )
        if self.fft_size < self.window_len_samples:
            raise ConfigurationError("fft_size must be >= window length")
        self._check_cola()

    def _check_cola(self):
        # Overlap-added squared analysis window must be flat in the interior,
        # otherwise weighted overlap-add synthesis cannot invert the analysis.
        w2 = self.window_array() ** 2
        span = 4 * self.window_len_samples
        env = np.zeros(span + self.window_len_samples)
        for start in range(0, span, self.hop_samples):
            env[start : start + self.window_len_samples] += w2
        interior = env[self.window_len_samples : span - self.window_len_samples]
        if interior.size == 0 or np.ptp(interior) > 1e-9 * interior.max():
            raise ConfigurationError(
                f"window {self.window!r} with hop {self.hop_samples} is not "
                "constant-overlap-add; perfect reconstruction is impossible"
            )

    def window_array(self) -> np.ndarray:
        return _make_window(self.window, self.window_len_samples)

    @property
    def num_bins(self) -> int:
        return self.fft_size // 2 + 1


@dataclass(frozen=True)
class ComplexSpectrogram:
    """T x F complex STFT frames plus the config that produced them."""

    frames: np.ndarray
    config: StftConfig
    original_length_samples: int
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.complex128)
        if frames.ndim != 2:
            raise InvalidInputError(f"frames must be 2-D, got shape {frames.shape}")
        if frames.shape[1] != self.config.num_bins:
            raise InvalidInputError(
                f"expected F={self.config.num_bins} bins, got {frames.shape[1]}"
            )
        if frames.size and not np.all(np.isfinite(frames)):
            raise InvalidInputError("spectrogram entries must be finite")
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def num_bins(self) -> int:
        return self.frames.shape[1]

    def magnitudes(self) -> np.ndarray:
        return np.abs(self.frames)


@dataclass(frozen=True)
class FeatureSequence:
    """T x F log-amplitude features, floored at log(floor_eps)."""

    frames: np.ndarray
    floor_eps: float = DEFAULT_FLOOR_EPS

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise InvalidInputError(f"features must be 2-D, got shape {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise InvalidInputError("feature entries must be finite")
        object.__setattr__(self, "frames", frames)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class MaskSequence:
    """T x F real mask with every entry in [0, 1]."""

    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise InvalidInputError(f"mask must be 2-D, got shape {frames.shape}")
        if frames.size and (not np.all(np.isfinite(frames)) or frames.min() < 0.0 or frames.max() > 1.0):
            raise InvalidInputError("mask entries must lie in [0, 1]")
        object.__setattr__(self, "frames", frames)


def _padding(config: StftConfig, num_samples: int) -> tuple[int, int]:
    """Left/right zero padding: window_len - hop total, split symmetrically,
    plus right alignment so every input sample is covered by a full frame."""
    total = config.window_len_samples - config.hop_samples
    left = total // 2
    right = total - left
    padded = num_samples + total
    if padded < config.window_len_samples:
        right += config.window_len_samples - padded
        padded = config.window_len_samples
    remainder = (padded - config.window_len_samples) % config.hop_samples
    if remainder:
        right += config.hop_samples - remainder
    return left, right


def stft(signal: AudioSignal, config: StftConfig | None = None) -> ComplexSpectrogram:
    """Analyze a signal into T x F complex frames.

    Frame t covers input samples around t*hop; T = 1 + (len(padded) - window_len)/hop.
    """
    if config is None:
        config = StftConfig()
    if len(signal) == 0:
        raise InvalidInputError("cannot compute STFT of an empty signal")
    left, right = _padding(config, len(signal))
    x = np.pad(signal.samples, (left, right))
    win = config.window_len_samples
    hop = config.hop_samples
    frames = np.lib.stride_tricks.sliding_window_view(x, win)[::hop]
    spec = np.fft.rfft(frames * config.window_array(), n=config.fft_size, axis=1)
    return ComplexSpectrogram(spec, config, len(signal), signal.sample_rate_hz)


def istft(spec: ComplexSpectrogram) -> AudioSignal:
    """Weighted overlap-add synthesis, trimmed to the analyzed signal length."""
    config = spec.config
    win = config.window_len_samples
    hop = config.hop_samples
    w = config.window_array()
    frames_t = np.fft.irfft(spec.frames, n=config.fft_size, axis=1)[:, :win]
    n_padded = (spec.num_frames - 1) * hop + win
    y = np.zeros(n_padded)
    env = np.zeros(n_padded)
    for t in range(spec.num_frames):
        start = t * hop
        y[start : start + win] += w * frames_t[t]
        env[start : start + win] += w * w
    nonzero = env > 1e-12
    y[nonzero] /= env[nonzero]
    left = (win - hop) // 2
    out = y[left : left + spec.original_length_samples]
    return AudioSignal(out, spec.sample_rate_hz)


def log_amplitude(spec: ComplexSpectrogram, floor_eps: float = DEFAULT_FLOOR_EPS) -> FeatureSequence:
    """log(max(|spec|, floor_eps)) per time-frequency cell."""
    if floor_eps <= 0:
        raise InvalidInputError(f"floor_eps must be positive, got {floor_eps}")
    return FeatureSequence(np.log(np.maximum(np.abs(spec.frames), floor_eps)), floor_eps)


def apply_mask(mixture: ComplexSpectrogram, mask: MaskSequence) -> ComplexSpectrogram:
    """Scale each mixture cell by the mask value; the mixture phase is kept."""
    if mixture.frames.shape != mask.frames.shape:
        raise InvalidInputError(
            f"mask shape {mask.frames.shape} does not match spectrogram "
            f"shape {mixture.frames.shape}"
        )
    return replace(mixture, frames=mixture.frames * mask.frames)


def read_wav(path) -> AudioSignal:
    """Read a mono 16-bit PCM WAV file. Samples are scaled to [-1, 1]."""
    with wave.open(str(path), "rb") as f:
        channels = f.getnchannels()
        width = f.getsampwidth()
        rate = f.getframerate()
        n = f.getnframes()
        if channels != 1:
            raise UnsupportedFormatError(f"{path}: expected mono, got {channels} channels")
        if width != 2:
            raise UnsupportedFormatError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
        raw = f.readframes(n)
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / _PCM_SCALE
    return AudioSignal(samples, rate)


def write_wav(path, signal: AudioSignal) -> None:
    """Write a mono 16-bit PCM WAV file, clamping samples to [-1, 1]."""
    clipped = np.clip(signal.samples, -1.0, 1.0)
    ints = np.clip(np.round(clipped * _PCM_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(signal.sample_rate_hz)
        f.writeframes(ints.tobytes())


def write_spectrogram_csv(spec: ComplexSpectrogram, path) -> None:
    """Dump magnitudes for plotting: one row per frame, F comma-separated columns."""
    np.savetxt(path, spec.magnitudes(), delimiter=",", fmt="%.8e")

"""Synthetic data generation: parametric "speakers", two-speaker noisy
mixtures with controlled SIR/SNR, and meeting-like multi-speaker sessions
with controlled overlap ratio.

Each synthetic speaker is identified by a fundamental frequency (with slow
random-walk vibrato), a speaker-specific noise band, and an amplitude
modulation rate, which makes speakers separable in the time-frequency plane
without requiring a speech corpus.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.signal import fftconvolve

from .activity import SegmentList, overlap_ratio, read_segments_file, write_segments_file
from .dsp import AudioSignal, read_wav, write_wav
from .errors import ConfigurationError, InvalidInputError

PEAK_TARGET = 0.9
_MIN_BURST_S = 0.25  # below this a clipped trailing burst is discarded
_SAME_SPEAKER_GAP_S = 0.35


@dataclass(frozen=True)
class SpeakerProfile:
    speaker_id: str
    f0_hz: float
    band_lo_hz: float
    band_hi_hz: float
    am_rate_hz: float
    pause_density: float

    def validate(self, sample_rate_hz: int) -> None:
        if self.f0_hz <= 0 or self.am_rate_hz <= 0:
            raise ConfigurationError(f"{self.speaker_id}: f0 and AM rate must be positive")
        if not (0 < self.band_lo_hz < self.band_hi_hz < sample_rate_hz / 2):
            raise ConfigurationError(
                f"{self.speaker_id}: need 0 < band_lo < band_hi < Nyquist "
                f"({self.band_lo_hz}, {self.band_hi_hz} at fs={sample_rate_hz})"
            )
        if not 0.0 <= self.pause_density <= 1.0:
            raise ConfigurationError(f"{self.speaker_id}: pause_density must be in [0, 1]")


def default_profiles(num: int, sample_rate_hz: int = 16000, pause_density: float = 0.4):
    """Profiles with staggered fundamentals and noise bands so any pair is separable."""
    if num < 1:
        raise ConfigurationError("need at least one profile")
    nyquist = sample_rate_hz / 2
    f0s = [110.0, 210.0, 155.0, 280.0, 130.0, 240.0, 180.0, 330.0]
    ams = [3.0, 4.5, 2.3, 5.4, 3.7, 2.8, 4.1, 5.0]
    profiles = []
    for k in range(num):
        lo = 200.0 + 370.0 * (k % 8)
        hi = min(lo + 0.30 * nyquist, 0.92 * nyquist)
        profiles.append(
            SpeakerProfile(
                speaker_id=f"spk{k}",
                f0_hz=f0s[k % 8] * (1 + k // 8 * 0.07),
                band_lo_hz=lo,
                band_hi_hz=hi,
                am_rate_hz=ams[k % 8],
                pause_density=pause_density,
            )
        )
    return profiles


class GeneratedSource(NamedTuple):
    audio: AudioSignal
    segments: SegmentList
    transcript: list


@dataclass(frozen=True)
class MixtureSample:
    """Supervised triplet: mixture, per-speaker references, and activities."""

    mixture: AudioSignal
    sources: dict
    activities: dict
    target_id: str
    sir_db: float
    noise_snr_db: float
    seed: object
    noise: AudioSignal
    enrollment: AudioSignal | None = None

    def __post_init__(self):
        n = len(self.mixture)
        for spk, sig in self.sources.items():
            if len(sig) != n:
                raise InvalidInputError(f"source {spk} length differs from mixture")
        if len(self.noise) != n:
            raise InvalidInputError("noise length differs from mixture")
        if self.target_id not in self.sources:
            raise InvalidInputError(f"target {self.target_id!r} missing from sources")

    @property
    def target(self) -> AudioSignal:
        return self.sources[self.target_id]

    @property
    def interferer_ids(self) -> list:
        return [s for s in self.sources if s != self.target_id]

    def components_sum(self) -> np.ndarray:
        """Left-fold sum of sources plus noise; bit-equal to the mixture."""
        acc = np.zeros(len(self.mixture))
        for sig in self.sources.values():
            acc += sig.samples
        acc += self.noise.samples
        return acc


@dataclass(frozen=True)
class SessionRecording:
    """Continuous multi-speaker recording with per-speaker truth."""

    mixture: AudioSignal
    streams: dict
    activities: dict
    transcripts: dict
    overlap_ratio: float
    noise: AudioSignal
    metadata: dict = field(default_factory=dict)

    @property
    def speakers(self) -> list:
        return list(self.streams)

    @property
    def duration_s(self) -> float:
        return self.mixture.duration_s


def _bandpass_noise(n: int, lo_hz: float, hi_hz: float, fs: int, rng) -> np.ndarray:
    x = rng.standard_normal(n)
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    spec[(freqs < lo_hz) | (freqs > hi_hz)] = 0.0
    return np.fft.irfft(spec, n=n)


def _synth_burst(profile: SpeakerProfile, n: int, fs: int, rng) -> np.ndarray:
    """One speech-like burst: drifting harmonic stack + band noise, AM-shaped."""
    t = np.arange(n) / fs
    # f0 random walk, +-20 % around the nominal value, updated every 20 ms
    n_ctrl = max(2, n // int(0.02 * fs) + 1)
    walk = np.clip(np.cumsum(rng.normal(0.0, 0.08, n_ctrl)), -1.0, 1.0)
    rel = np.interp(np.linspace(0, 1, n), np.linspace(0, 1, n_ctrl), walk)
    f_inst = profile.f0_hz * (1.0 + 0.2 * rel)
    phase = 2.0 * np.pi * np.cumsum(f_inst) / fs
    harm = np.zeros(n)
    for k, amp in enumerate((1.0, 0.5, 0.3), start=1):
        if k * profile.f0_hz * 1.2 < fs / 2:
            harm += amp * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    harm /= max(np.sqrt(np.mean(harm**2)), 1e-12)

    noise = _bandpass_noise(n, profile.band_lo_hz, profile.band_hi_hz, fs, rng)
    noise /= max(np.sqrt(np.mean(noise**2)), 1e-12)

    sig = 0.8 * harm + 0.6 * noise
    env = 0.7 + 0.3 * np.sin(2.0 * np.pi * profile.am_rate_hz * t + rng.uniform(0, 2 * np.pi))
    sig *= env

    fade = min(int(0.010 * fs), n // 4)
    if fade > 0:
        ramp = 0.5 * (1.0 - np.cos(np.pi * np.arange(fade) / fade))
        sig[:fade] *= ramp
        sig[-fade:] *= ramp[::-1]

    sig *= 0.15 / max(np.sqrt(np.mean(sig**2)), 1e-12)
    peak = np.max(np.abs(sig))
    if peak > 0.95:
        sig *= 0.95 / peak
    return sig


def gen_source(
    profile: SpeakerProfile,
    duration_s: float,
    seed=0,
    sample_rate_hz: int = 16000,
) -> GeneratedSource:
    """Alternating speech bursts and silences for one synthetic speaker.

    Burst and pause lengths are drawn so the long-run pause fraction matches
    `profile.pause_density`; the returned SegmentList is the ground-truth
    burst placement and the transcript holds one token per burst.
    """
    if duration_s <= 0:
        raise ConfigurationError("duration_s must be positive")
    profile.validate(sample_rate_hz)
    fs = sample_rate_hz
    rng = np.random.default_rng(seed)
    n_total = round(duration_s * fs)
    samples = np.zeros(n_total)

    rho = profile.pause_density
    if rho >= 1.0:
        return GeneratedSource(AudioSignal(samples, fs), SegmentList((), duration_s), [])

    bursts: list[tuple[float, float]] = []
    if rho == 0.0:
        bursts.append((0.0, duration_s))
    else:
        mean_burst = 1.1
        mean_pause = max(mean_burst * rho / (1.0 - rho), 0.32)
        pause_lo, pause_hi = 0.30, max(0.34, 2.0 * mean_pause - 0.30)
        t = rng.uniform(pause_lo, pause_hi) if rng.uniform() < rho else 0.0
        while t < duration_s - _MIN_BURST_S:
            burst_len = min(rng.uniform(0.6, 1.6), duration_s - t)
            if burst_len >= _MIN_BURST_S:
                bursts.append((t, t + burst_len))
            t += burst_len + rng.uniform(pause_lo, pause_hi)

    transcript = []
    for k, (s, e) in enumerate(bursts):
        i0, i1 = round(s * fs), round(e * fs)
        samples[i0:i1] = _synth_burst(profile, i1 - i0, fs, rng)
        transcript.append(f"{profile.speaker_id}_burst{k}")
    segments = SegmentList.from_pairs(bursts, duration_s)
    return GeneratedSource(AudioSignal(samples, fs), segments, transcript)


def _active_power(signal: AudioSignal, segments: SegmentList) -> float:
    mask = np.zeros(len(signal), dtype=bool)
    fs = signal.sample_rate_hz
    for s, e in segments:
        mask[round(s * fs) : round(e * fs)] = True
    if not mask.any():
        return 0.0
    return float(np.mean(signal.samples[mask] ** 2))


def mix_two(
    target,
    interferer,
    sir_db: float,
    noise_snr_db: float,
    seed=0,
    target_id: str = "spk0",
    interferer_id: str = "spk1",
    enrollment: AudioSignal | None = None,
) -> MixtureSample:
    """Scale and sum two sources plus white noise.

    The interferer gain sets the target-to-interferer power ratio over each
    signal's own active regions to `sir_db`; the noise gain sets the
    speech-mixture-to-noise ratio to `noise_snr_db`. All stored components are
    rescaled by a common factor so the mixture peak stays within +-0.9, which
    keeps ratios intact and the decomposition y = sum(sources) + noise exact.
    """
    t_sig, t_segs = target
    i_sig, i_segs = interferer
    if len(t_sig) != len(i_sig) or t_sig.sample_rate_hz != i_sig.sample_rate_hz:
        raise InvalidInputError("target and interferer must share length and sample rate")
    p_t = _active_power(t_sig, t_segs)
    p_i = _active_power(i_sig, i_segs)
    if p_t <= 0.0 or p_i <= 0.0:
        raise InvalidInputError("both sources need non-zero active power")

    gain_i = float(np.sqrt(p_t / (p_i * 10.0 ** (sir_db / 10.0))))
    t = t_sig.samples
    i = i_sig.samples * gain_i
    speech = t + i

    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(len(t))
    p_speech = float(np.mean(speech**2))
    p_noise = float(np.mean(noise**2))
    noise *= np.sqrt(p_speech / (p_noise * 10.0 ** (noise_snr_db / 10.0)))

    peak = float(np.max(np.abs(speech + noise)))
    scale = PEAK_TARGET / peak if peak > PEAK_TARGET else 1.0
    t = t * scale
    i = i * scale
    noise = noise * scale
    mixture = t + i + noise

    fs = t_sig.sample_rate_hz
    return MixtureSample(
        mixture=AudioSignal(mixture, fs),
        sources={target_id: AudioSignal(t, fs), interferer_id: AudioSignal(i, fs)},
        activities={target_id: t_segs, interferer_id: i_segs},
        target_id=target_id,
        sir_db=float(sir_db),
        noise_snr_db=float(noise_snr_db),
        seed=seed,
        noise=AudioSignal(noise, fs),
        enrollment=enrollment,
    )


def draw_mix_params(seed, index: int, sir_range_db, snr_range_db) -> tuple[float, float]:
    """The (sir, snr) draw used by gen_dataset for example `index`."""
    rng = np.random.default_rng([_seed_int(seed), index, 0])
    sir = rng.uniform(*sir_range_db)
    snr = rng.uniform(*snr_range_db)
    return float(sir), float(snr)


def _seed_int(seed) -> int:
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    raise ConfigurationError(f"dataset seed must be an integer, got {seed!r}")


def gen_dataset(
    num_examples: int,
    profiles,
    sir_range_db=(-5.0, 5.0),
    snr_range_db=(10.0, 20.0),
    seed=0,
    duration_s: float = 4.0,
    sample_rate_hz: int = 16000,
    with_enrollment: bool = True,
    enrollment_s: float = 3.0,
) -> list:
    """Deterministic list of two-speaker mixtures; the target alternates over profiles."""
    profiles = list(profiles)
    if len(profiles) < 2:
        raise ConfigurationError("gen_dataset needs at least two profiles")
    base = _seed_int(seed)
    samples = []
    for i in range(num_examples):
        rng = np.random.default_rng([base, i, 1])
        target_profile = profiles[i % len(profiles)]
        others = [p for p in profiles if p.speaker_id != target_profile.speaker_id]
        interferer_profile = others[rng.integers(len(others))]
        sir, snr = draw_mix_params(base, i, sir_range_db, snr_range_db)
        tgt = gen_source(target_profile, duration_s, [base, i, 2], sample_rate_hz)
        itf = gen_source(interferer_profile, duration_s, [base, i, 3], sample_rate_hz)
        enroll = None
        if with_enrollment:
            # enrollment characterizes the speaker, so cap its pause density
            ep = replace(target_profile, pause_density=min(target_profile.pause_density, 0.3))
            enroll = gen_source(ep, enrollment_s, [base, i, 4], sample_rate_hz).audio
        samples.append(
            mix_two(
                (tgt.audio, tgt.segments),
                (itf.audio, itf.segments),
                sir,
                snr,
                seed=[base, i, 5],
                target_id=target_profile.speaker_id,
                interferer_id=interferer_profile.speaker_id,
                enrollment=enroll,
            )
        )
    return samples


def _current_ratio(intervals_by_speaker: dict, duration_s: float) -> float:
    lists = [
        SegmentList.from_pairs(pairs, duration_s) for pairs in intervals_by_speaker.values()
    ]
    if len(lists) < 2:
        return 0.0
    return overlap_ratio(lists)


def _place_utterances(duration_s: float, speakers, target_ratio: float, rng):
    """Greedy timeline placement with overlap feedback control."""
    placements = []  # (speaker, start_s, length_s)
    by_speaker = {s: [] for s in speakers}
    last_end = {s: -10.0 for s in speakers}
    frontier = 0.0
    prev_spk = None
    while True:
        length = rng.uniform(0.8, 2.0)
        candidates = [s for s in speakers if s != prev_spk]
        spk = candidates[rng.integers(len(candidates))]
        if not placements:
            start = rng.uniform(0.0, 0.4)
        elif target_ratio <= 0.0:
            start = frontier + rng.uniform(0.15, 0.7)
        else:
            achieved = _current_ratio(by_speaker, duration_s)
            if achieved < target_ratio:
                prev_len = placements[-1][2]
                start = frontier - rng.uniform(0.25, 0.95) * min(prev_len, length)
            else:
                start = frontier + rng.uniform(0.1, 0.5)
        start = max(start, 0.0, last_end[spk] + _SAME_SPEAKER_GAP_S)
        end = start + length
        if end > duration_s - 0.05:
            end = duration_s - 0.05
            if end - start < 0.4:
                break
        placements.append((spk, start, end - start))
        by_speaker[spk].append((start, end))
        last_end[spk] = end
        frontier = max(frontier, end)
        prev_spk = spk
        if frontier >= duration_s - 0.6:
            break
    return placements, by_speaker


def gen_session(
    num_speakers: int,
    duration_s: float,
    target_overlap_ratio: float,
    profiles,
    seed=0,
    sample_rate_hz: int = 16000,
    noise_snr_db: float = 15.0,
    ratio_tolerance: float = 0.05,
    max_attempts: int = 200,
) -> SessionRecording:
    """Meeting-like recording whose overlap ratio lands within
    `ratio_tolerance` of the target (best effort over `max_attempts` retries).
    """
    profiles = list(profiles)
    if num_speakers < 2:
        raise ConfigurationError("a session needs at least two speakers")
    if num_speakers > len(profiles):
        raise ConfigurationError(f"{num_speakers} speakers but only {len(profiles)} profiles")
    if not 0.0 <= target_overlap_ratio <= 0.6:
        raise ConfigurationError("target_overlap_ratio must be within [0, 0.6]")
    if duration_s < 5.0:
        raise ConfigurationError("sessions shorter than 5 s are not meaningful")
    for p in profiles[:num_speakers]:
        p.validate(sample_rate_hz)

    base = _seed_int(seed)
    speakers = [p.speaker_id for p in profiles[:num_speakers]]
    by_id = {p.speaker_id: p for p in profiles}
    best = None
    for attempt in range(max_attempts):
        rng = np.random.default_rng([base, attempt, 0])
        placements, by_speaker = _place_utterances(
            duration_s, speakers, target_overlap_ratio, rng
        )
        lists = {
            s: SegmentList.from_pairs(pairs, duration_s) for s, pairs in by_speaker.items()
        }
        achieved = overlap_ratio(list(lists.values()))
        err = abs(achieved - target_overlap_ratio)
        if target_overlap_ratio == 0.0 and achieved > 0.0:
            err = np.inf  # zero-overlap targets must be met exactly
        if best is None or err < best[0]:
            best = (err, attempt, placements, lists, achieved)
        if err <= ratio_tolerance and (target_overlap_ratio > 0.0 or achieved == 0.0):
            break
    err, attempt, placements, lists, achieved = best

    fs = sample_rate_hz
    n_total = round(duration_s * fs)
    streams = {s: np.zeros(n_total) for s in speakers}
    transcripts = {s: [] for s in speakers}
    counters = {s: 0 for s in speakers}
    for k, (spk, start, length) in enumerate(placements):
        i0 = round(start * fs)
        i1 = round((start + length) * fs)
        burst_rng = np.random.default_rng([base, attempt, 1, k])
        streams[spk][i0:i1] = _synth_burst(by_id[spk], i1 - i0, fs, burst_rng)
        transcripts[spk].append(f"{spk}_burst{counters[spk]}")
        counters[spk] += 1

    speech = np.zeros(n_total)
    for s in speakers:
        speech += streams[s]
    noise_rng = np.random.default_rng([base, attempt, 2])
    noise = noise_rng.standard_normal(n_total)
    p_speech = float(np.mean(speech**2))
    noise *= np.sqrt(p_speech / (np.mean(noise**2) * 10.0 ** (noise_snr_db / 10.0)))

    peak = float(np.max(np.abs(speech + noise)))
    scale = PEAK_TARGET / peak if peak > PEAK_TARGET else 1.0
    for s in speakers:
        streams[s] *= scale
    noise *= scale
    mixture = np.zeros(n_total)
    for s in speakers:
        mixture += streams[s]
    mixture += noise

    return SessionRecording(
        mixture=AudioSignal(mixture, fs),
        streams={s: AudioSignal(streams[s], fs) for s in speakers},
        activities=lists,
        transcripts=transcripts,
        overlap_ratio=achieved,
        noise=AudioSignal(noise, fs),
        metadata={
            "target_overlap_ratio": target_overlap_ratio,
            "achieved_within_tolerance": bool(err <= ratio_tolerance),
            "attempts_used": attempt + 1,
            "noise_snr_db": noise_snr_db,
            "seed": base,
        },
    )


def apply_synthetic_rir(signal: AudioSignal, rt60_s: float, seed=0) -> AudioSignal:
    """Convolve with an exponentially decaying white-noise impulse response.

    The envelope decays by 60 dB over rt60_s; rt60_s = 0 returns the input.
    Output is truncated to the input length.
    """
    if rt60_s < 0:
        raise InvalidInputError("rt60_s must be non-negative")
    if rt60_s == 0.0:
        return signal
    fs = signal.sample_rate_hz
    n_ir = max(2, round(rt60_s * fs))
    t = np.arange(n_ir) / fs
    rng = np.random.default_rng(seed)
    ir = rng.standard_normal(n_ir) * np.exp(-3.0 * np.log(10.0) * t / rt60_s)
    ir /= np.sqrt(np.sum(ir**2))
    out = fftconvolve(signal.samples, ir)[: len(signal)]
    return AudioSignal(out, fs)


# ---------------------------------------------------------------------------
# on-disk layout

_SCHEMA_VERSION = 1


def save_mixture(sample: MixtureSample, example_dir) -> None:
    d = Path(example_dir)
    d.mkdir(parents=True, exist_ok=True)
    write_wav(d / "mixture.wav", sample.mixture)
    for spk, sig in sample.sources.items():
        write_wav(d / f"source_{spk}.wav", sig)
    if sample.enrollment is not None:
        write_wav(d / f"enroll_{sample.target_id}.wav", sample.enrollment)
    write_segments_file(d / "segments.txt", sample.activities)
    meta = {
        "schema_version": _SCHEMA_VERSION,
        "target_id": sample.target_id,
        "sir_db": sample.sir_db,
        "snr_db": sample.noise_snr_db,
        "seed": sample.seed,
        "overlap_ratio": overlap_ratio(list(sample.activities.values())),
        "sample_rate_hz": sample.mixture.sample_rate_hz,
        "duration_s": sample.mixture.duration_s,
        "speakers": list(sample.sources),
    }
    (d / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")


def load_mixture(example_dir) -> MixtureSample:
    d = Path(example_dir)
    meta = json.loads((d / "meta.json").read_text())
    mixture = read_wav(d / "mixture.wav")
    sources = {}
    for spk in meta["speakers"]:
        sources[spk] = read_wav(d / f"source_{spk}.wav")
    activities = read_segments_file(d / "segments.txt", total_duration_s=mixture.duration_s)
    for spk in meta["speakers"]:
        activities.setdefault(spk, SegmentList((), mixture.duration_s))
    enroll_path = d / f"enroll_{meta['target_id']}.wav"
    enrollment = read_wav(enroll_path) if enroll_path.exists() else None
    # quantized WAVs no longer sum exactly, so recover noise as the difference
    residual = mixture.samples.copy()
    for sig in sources.values():
        residual -= sig.samples
    return MixtureSample(
        mixture=mixture,
        sources=sources,
        activities={spk: activities[spk] for spk in meta["speakers"]},
        target_id=meta["target_id"],
        sir_db=meta["sir_db"],
        noise_snr_db=meta["snr_db"],
        seed=meta["seed"],
        noise=AudioSignal(residual, mixture.sample_rate_hz),
        enrollment=enrollment,
    )


def save_dataset(samples, split_dir) -> dict:
    """Write one directory per example plus an index manifest; returns the manifest."""
    d = Path(split_dir)
    d.mkdir(parents=True, exist_ok=True)
    names = []
    ratios = []
    for i, sample in enumerate(samples):
        name = f"ex{i:05d}"
        save_mixture(sample, d / name)
        names.append(name)
        ratios.append(overlap_ratio(list(sample.activities.values())))
    manifest = {
        "schema_version": _SCHEMA_VERSION,
        "examples": names,
        "count": len(names),
        "overlap_ratio_mean": float(np.mean(ratios)) if ratios else 0.0,
        "overlap_ratio_min": float(np.min(ratios)) if ratios else 0.0,
        "overlap_ratio_max": float(np.max(ratios)) if ratios else 0.0,
    }
    (d / "index.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return manifest


def load_dataset(split_dir) -> list:
    d = Path(split_dir)
    index = d / "index.json"
    if index.exists():
        names = json.loads(index.read_text())["examples"]
    else:
        names = sorted(p.name for p in d.iterdir() if re.fullmatch(r"ex\d+", p.name))
    return [load_mixture(d / name) for name in names]


def save_session(session: SessionRecording, session_dir) -> None:
    d = Path(session_dir)
    d.mkdir(parents=True, exist_ok=True)
    write_wav(d / "mixture.wav", session.mixture)
    for spk, sig in session.streams.items():
        write_wav(d / f"source_{spk}.wav", sig)
    write_segments_file(d / "segments.txt", session.activities)
    for spk, tokens in session.transcripts.items():
        (d / f"transcript_{spk}.txt").write_text("".join(t + "\n" for t in tokens))
    meta = {
        "schema_version": _SCHEMA_VERSION,
        "overlap_ratio": session.overlap_ratio,
        "sample_rate_hz": session.mixture.sample_rate_hz,
        "duration_s": session.mixture.duration_s,
        "speakers": session.speakers,
        **session.metadata,
    }
    (d / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")

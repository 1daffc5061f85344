"""Speaker-activity signals: energy VAD, overlap removal, boundary jitter,
and conversion between timed segments and per-frame binary activity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import AudioSignal, StftConfig
from .errors import InvalidInputError

# Segments shorter than one default STFT hop (8 ms at 16 kHz) carry no frame
# and are dropped by jitter.
MIN_SEGMENT_S = 128 / 16000

_DURATION_TOL_S = 1e-6


@dataclass(frozen=True)
class SegmentList:
    """Sorted, non-overlapping (start_s, end_s) pairs within [0, total_duration_s]."""

    segments: tuple
    total_duration_s: float

    def __post_init__(self):
        if self.total_duration_s < 0:
            raise InvalidInputError("total_duration_s must be non-negative")
        segs = tuple((float(s), float(e)) for s, e in self.segments)
        for s, e in segs:
            if not (0.0 <= s < e <= self.total_duration_s + _DURATION_TOL_S):
                raise InvalidInputError(
                    f"segment ({s}, {e}) outside [0, {self.total_duration_s}] or empty"
                )
        for (_, e0), (s1, _) in zip(segs, segs[1:]):
            if s1 < e0:
                raise InvalidInputError("segments must be sorted and non-overlapping")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "total_duration_s", float(self.total_duration_s))

    @classmethod
    def from_pairs(cls, pairs, total_duration_s: float) -> "SegmentList":
        """Build from arbitrary (start, end) pairs: sorts, clips, and merges
        overlapping or touching intervals; empty intervals are dropped."""
        total = float(total_duration_s)
        clipped = []
        for s, e in pairs:
            s = max(0.0, float(s))
            e = min(total, float(e))
            if e > s:
                clipped.append((s, e))
        clipped.sort()
        merged: list[list[float]] = []
        for s, e in clipped:
            if merged and s <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], e)
            else:
                merged.append([s, e])
        return cls(tuple((s, e) for s, e in merged), total)

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    @property
    def total_active_s(self) -> float:
        return sum(e - s for s, e in self.segments)

    def contains(self, t: float) -> bool:
        return any(s <= t < e for s, e in self.segments)

    def intersect(self, start_s: float, end_s: float) -> "SegmentList":
        """Clip to [start_s, end_s] and re-express in local time starting at 0."""
        pairs = [
            (max(s, start_s) - start_s, min(e, end_s) - start_s)
            for s, e in self.segments
            if min(e, end_s) > max(s, start_s)
        ]
        return SegmentList.from_pairs(pairs, end_s - start_s)


@dataclass(frozen=True)
class FrameActivity:
    """Per-frame binary activity p_t aligned with a feature sequence."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 1:
            raise InvalidInputError("activity must be 1-D")
        if values.size and not np.isin(values, (0, 1)).all():
            raise InvalidInputError("activity values must be 0 or 1")
        object.__setattr__(self, "values", values.astype(np.uint8))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def num_active(self) -> int:
        return int(self.values.sum())


@dataclass(frozen=True)
class VadConfig:
    frame_ms: float = 10.0
    energy_offset_db: float = 12.0
    absolute_floor_db: float = -55.0
    min_speech_ms: float = 100.0
    min_silence_ms: float = 200.0

    def __post_init__(self):
        if self.frame_ms <= 0 or self.min_speech_ms <= 0 or self.min_silence_ms <= 0:
            raise InvalidInputError("VAD durations must be positive")


def energy_vad(signal: AudioSignal, config: VadConfig | None = None) -> SegmentList:
    """Energy-threshold VAD with hangover smoothing.

    A frame is speech when its RMS level (dBFS) exceeds both the 10th-percentile
    noise floor plus `energy_offset_db` and `absolute_floor_db`. Speech runs
    shorter than `min_speech_ms` are deleted, then silence gaps shorter than
    `min_silence_ms` are bridged.
    """
    if config is None:
        config = VadConfig()
    fs = signal.sample_rate_hz
    flen = max(1, round(config.frame_ms * fs / 1000.0))
    n_frames = len(signal) // flen
    if n_frames == 0:
        raise InvalidInputError("signal shorter than one VAD frame")
    x = signal.samples[: n_frames * flen].reshape(n_frames, flen)
    # 1e-30 keeps log finite; exact silence reports -300 dBFS
    level_db = 10.0 * np.log10(np.mean(x * x, axis=1) + 1e-30)
    noise_floor = np.percentile(level_db, 10)
    threshold = max(noise_floor + config.energy_offset_db, config.absolute_floor_db)
    speech = level_db > threshold

    min_speech = max(1, round(config.min_speech_ms / config.frame_ms))
    min_silence = max(1, round(config.min_silence_ms / config.frame_ms))
    speech = _drop_short_runs(speech, True, min_speech)
    speech = _drop_short_runs(speech, False, min_silence)

    duration = len(signal) / fs
    pairs = []
    for i0, i1 in _runs(speech):
        pairs.append((i0 * flen / fs, min(i1 * flen / fs, duration)))
    return SegmentList.from_pairs(pairs, duration)


def _runs(flags: np.ndarray):
    """Yield (start, end) index pairs of True runs; end is exclusive."""
    padded = np.concatenate(([False], flags, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    for i in range(0, len(edges), 2):
        yield int(edges[i]), int(edges[i + 1])


def _drop_short_runs(flags: np.ndarray, value: bool, min_len: int) -> np.ndarray:
    out = flags.copy()
    for i0, i1 in _runs(flags == value):
        if i1 - i0 < min_len:
            out[i0:i1] = not value
    # runs at the array edges are genuine signal boundaries for speech, but a
    # short leading/trailing silence should not be bridged into speech
    if not value:
        for i0, i1 in _runs(flags == value):
            if i1 - i0 < min_len and (i0 == 0 or i1 == len(flags)):
                out[i0:i1] = False
    return out


def _check_same_duration(lists) -> float:
    durations = {round(sl.total_duration_s, 6) for sl in lists}
    if len(durations) > 1:
        raise InvalidInputError(f"segment lists must share a duration, got {sorted(durations)}")
    return next(iter(lists)).total_duration_s


def remove_overlap(target: SegmentList, others) -> SegmentList:
    """Subtract the union of `others` from `target` (interval subtraction)."""
    others = list(others)
    _check_same_duration([target, *others])
    blocked = SegmentList.from_pairs(
        [seg for sl in others for seg in sl.segments], target.total_duration_s
    )
    result = []
    for s, e in target:
        cursor = s
        for bs, be in blocked:
            if be <= cursor or bs >= e:
                continue
            if bs > cursor:
                result.append((cursor, bs))
            cursor = max(cursor, be)
            if cursor >= e:
                break
        if cursor < e:
            result.append((cursor, e))
    return SegmentList.from_pairs(result, target.total_duration_s)


def jitter_segments(
    segments: SegmentList,
    max_shift_s: float = 1.0,
    seed=0,
    min_len_s: float = MIN_SEGMENT_S,
) -> SegmentList:
    """Perturb each boundary by independent uniform shifts in [-max_shift_s, +max_shift_s].

    Jittered segments are clamped to the recording, dropped when shorter than
    `min_len_s` (inverted boundaries included), and merged when they overlap.
    """
    if max_shift_s < 0:
        raise InvalidInputError("max_shift_s must be non-negative")
    if max_shift_s == 0 or len(segments) == 0:
        return segments
    rng = np.random.default_rng(seed)
    shifts = rng.uniform(-max_shift_s, max_shift_s, size=(len(segments), 2))
    total = segments.total_duration_s
    pairs = []
    for (s, e), (u1, u2) in zip(segments, shifts):
        ns = min(max(s + u1, 0.0), total)
        ne = min(max(e + u2, 0.0), total)
        if ne - ns >= min_len_s:
            pairs.append((ns, ne))
    return SegmentList.from_pairs(pairs, total)


def segments_to_frames(
    segments: SegmentList,
    stft_config: StftConfig,
    num_frames: int,
    sample_rate_hz: int,
) -> FrameActivity:
    """Frame t is active iff its center time t*hop/fs lies inside a segment."""
    if num_frames <= 0:
        raise InvalidInputError("num_frames must be positive")
    hop_s = stft_config.hop_samples / sample_rate_hz
    values = np.zeros(num_frames, dtype=np.uint8)
    for s, e in segments:
        first = int(np.ceil(s / hop_s - 1e-9))
        last = int(np.ceil(e / hop_s - 1e-9))  # center == end is outside (half-open)
        values[max(0, first) : max(0, min(last, num_frames))] = 1
    return FrameActivity(values)


def overlap_ratio(lists) -> float:
    """duration(>=2 speakers active) / duration(>=1 speaker active); 0 if no speech."""
    lists = list(lists)
    if len(lists) < 2:
        raise InvalidInputError("overlap_ratio needs at least two segment lists")
    _check_same_duration(lists)
    events = []
    for sl in lists:
        for s, e in sl:
            events.append((s, 1))
            events.append((e, -1))
    events.sort()
    active = 0
    prev_t = 0.0
    any_time = 0.0
    multi_time = 0.0
    for t, delta in events:
        if active >= 1:
            any_time += t - prev_t
        if active >= 2:
            multi_time += t - prev_t
        active += delta
        prev_t = t
    return multi_time / any_time if any_time > 0 else 0.0


def write_segments_file(path, segments_by_speaker: dict) -> None:
    """One `<speaker_id> <start_s> <end_s>` line per segment, 3-decimal seconds."""
    with open(path, "w", encoding="utf-8") as f:
        for speaker in segments_by_speaker:
            for s, e in segments_by_speaker[speaker]:
                f.write(f"{speaker} {s:.3f} {e:.3f}\n")


def read_segments_file(path, total_duration_s: float | None = None) -> dict:
    """Parse the plain segment format back into per-speaker SegmentLists.

    When `total_duration_s` is omitted, the largest end time is used for all
    speakers so lists remain mutually comparable.
    """
    raw: dict[str, list] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise InvalidInputError(f"{path}:{line_no}: expected 'speaker start end'")
            speaker, start, end = parts
            raw.setdefault(speaker, []).append((float(start), float(end)))
    if total_duration_s is None:
        total_duration_s = max((e for segs in raw.values() for _, e in segs), default=0.0)
    return {
        spk: SegmentList.from_pairs(pairs, total_duration_s) for spk, pairs in raw.items()
    }


def read_rttm(path, total_duration_s: float | None = None) -> dict:
    """Read SPEAKER records from an RTTM file into per-speaker SegmentLists."""
    raw: dict[str, list] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#") or line.startswith(";;"):
                continue
            parts = line.split()
            if parts[0].upper() != "SPEAKER":
                continue
            if len(parts) < 8:
                raise InvalidInputError(f"{path}:{line_no}: truncated SPEAKER record")
            start = float(parts[3])
            dur = float(parts[4])
            if dur <= 0:
                continue
            raw.setdefault(parts[7], []).append((start, start + dur))
    if total_duration_s is None:
        total_duration_s = max((e for segs in raw.values() for _, e in segs), default=0.0)
    return {
        spk: SegmentList.from_pairs(pairs, total_duration_s) for spk, pairs in raw.items()
    }

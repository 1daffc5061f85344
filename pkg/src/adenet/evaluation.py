"""Metrics and harnesses: SDR, the inactivity-masking baseline, the
diarization-segment extraction harness with stitching, and cpWER.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .activity import SegmentList, energy_vad, jitter_segments, remove_overlap
from .dsp import AudioSignal, write_wav
from .errors import InvalidInputError, NoActiveFramesError, NotSupportedError
from .models import Checkpoint, forward_extract

log = logging.getLogger(__name__)

SDR_CAP_DB = 60.0
ALL_CONDITIONS = (
    ("without_overlap", "oracle"),
    ("without_overlap", "noise"),
    ("with_overlap", "oracle"),
    ("with_overlap", "noise"),
)


def sdr(reference: AudioSignal, estimate: AudioSignal) -> float:
    """Scale-invariant signal-to-distortion ratio in dB, clamped to +-60.

    The estimate is projected onto the reference; SDR is the energy ratio of
    the projection to the residual, so any positive rescaling of the estimate
    leaves the value unchanged.
    """
    if len(reference) != len(estimate):
        raise InvalidInputError(
            f"length mismatch: reference {len(reference)} vs estimate {len(estimate)}"
        )
    x = reference.samples
    y = estimate.samples
    px = float(np.dot(x, x))
    if px == 0.0:
        raise InvalidInputError("reference signal is all zero")
    alpha = float(np.dot(y, x)) / px
    target = alpha * x
    resid = y - target
    pt = float(np.dot(target, target))
    pr = float(np.dot(resid, resid))
    if pr <= 1e-12 * pt:
        return SDR_CAP_DB
    if pt == 0.0:
        return -SDR_CAP_DB
    return float(np.clip(10.0 * np.log10(pt / pr), -SDR_CAP_DB, SDR_CAP_DB))


def inactivity_mask_baseline(mixture: AudioSignal, segments: SegmentList) -> AudioSignal:
    """Zero the mixture wherever the speaker is inactive; no neural processing."""
    if abs(segments.total_duration_s - mixture.duration_s) > 1.5 / mixture.sample_rate_hz:
        raise InvalidInputError(
            f"segment duration {segments.total_duration_s} != mixture "
            f"duration {mixture.duration_s}"
        )
    fs = mixture.sample_rate_hz
    out = np.zeros(len(mixture))
    for s, e in segments:
        i0, i1 = round(s * fs), round(e * fs)
        out[i0:i1] = mixture.samples[i0:i1]
    return AudioSignal(out, fs)


# ----------------------------------------------------------------------- cpWER


def _levenshtein(a, b) -> int:
    """Word-level edit distance (substitution, insertion, deletion all cost 1)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, wa in enumerate(a, 1):
        cur = [i]
        for j, wb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (wa != wb)))
        prev = cur
    return prev[-1]


def cpwer(reference: dict, hypothesis: dict) -> float:
    """Concatenated minimum-permutation word error rate.

    Each hypothesis stream is assigned to one reference speaker (padding the
    smaller side with empty streams); the reported value is the minimum over
    all bijections of total word errors divided by total reference words.
    Exact search only, so at most 8 streams are supported.
    """
    if not reference:
        raise InvalidInputError("reference transcript set is empty")
    ref_streams = [list(tokens) for tokens in reference.values()]
    hyp_streams = [list(tokens) for tokens in hypothesis.values()]
    total_ref = sum(len(t) for t in ref_streams)
    if total_ref == 0:
        raise InvalidInputError("reference transcripts contain no tokens")
    n = max(len(ref_streams), len(hyp_streams))
    if n > 8:
        raise NotSupportedError(f"exact permutation search supports <= 8 streams, got {n}")
    ref_streams += [[] for _ in range(n - len(ref_streams))]
    hyp_streams += [[] for _ in range(n - len(hyp_streams))]
    cost = [[_levenshtein(r, h) for h in hyp_streams] for r in ref_streams]
    best = min(
        sum(cost[i][j] for i, j in enumerate(perm))
        for perm in itertools.permutations(range(n))
    )
    return best / total_ref


# ------------------------------------------------------------- session harness


def _merge_gapped(segments: SegmentList, gap_s: float) -> SegmentList:
    """Bridge gaps shorter than gap_s into continuous segments."""
    merged: list[list[float]] = []
    for s, e in segments:
        if merged and s - merged[-1][1] < gap_s:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return SegmentList.from_pairs(merged, segments.total_duration_s)


def session_extract(
    session,
    segments_per_speaker: dict,
    checkpoint: Checkpoint,
    context_s: float = 2.0,
    remove_overlaps: bool = True,
    merge_gap_s: float = 0.5,
    crossfade_s: float = 0.05,
    out_dir=None,
    model=None,
) -> dict:
    """Extract one stream per speaker from diarization-style segments.

    Adjacent segments gapped under `merge_gap_s` are merged, each merged
    segment is cut with +-`context_s` of surrounding mixture, extracted with
    that speaker's activity (minus other speakers' regions when
    `remove_overlaps`), and placed back on the session timeline. Where the
    extended cuts overlap, a short linear cross-fade joins them. Segments
    whose activity ends up empty are skipped with a warning, not fatal.
    """
    mixture = session.mixture
    fs = mixture.sample_rate_hz
    n = len(mixture)
    duration = mixture.duration_s
    if model is None:
        model = checkpoint.build_model()
    others = {
        spk: [sl for other, sl in segments_per_speaker.items() if other != spk]
        for spk in segments_per_speaker
    }
    streams = {}
    for spk, segs in segments_per_speaker.items():
        activity = remove_overlap(segs, others[spk]) if remove_overlaps else segs
        placed = []
        for k, (s, e) in enumerate(_merge_gapped(segs, merge_gap_s)):
            xs = max(0.0, s - context_s)
            xe = min(duration, e + context_s)
            i0, i1 = round(xs * fs), round(xe * fs)
            cut = AudioSignal(mixture.samples[i0:i1], fs)
            local = activity.intersect(xs, xs + (i1 - i0) / fs)
            if local.total_active_s == 0.0:
                log.warning("%s segment %d (%.2f-%.2f s): no active frames, skipped", spk, k, s, e)
                continue
            try:
                est, _ = forward_extract(cut, local, checkpoint, model=model)
            except NoActiveFramesError:
                log.warning("%s segment %d (%.2f-%.2f s): no active frames, skipped", spk, k, s, e)
                continue
            placed.append((i0, i1, est.samples))
            if out_dir is not None:
                seg_dir = _ensure_dir(out_dir, spk)
                write_wav(seg_dir / f"segment_{k:03d}.wav", est)
        streams[spk] = AudioSignal(_stitch(placed, n, round(crossfade_s * fs)), fs)
        if out_dir is not None:
            write_wav(_ensure_dir(out_dir, spk) / "stitched.wav", streams[spk])
    return streams


def _ensure_dir(out_dir, spk):
    from pathlib import Path

    d = Path(out_dir) / spk
    d.mkdir(parents=True, exist_ok=True)
    return d


def _stitch(placed, n: int, crossfade_samples: int) -> np.ndarray:
    out = np.zeros(n)
    cur_end = -1
    for i0, i1, x in placed:
        if i0 >= cur_end:
            out[i0:i1] = x
        else:
            overlap = cur_end - i0
            fade = max(1, min(overlap, crossfade_samples))
            mid = i0 + overlap // 2
            f0 = max(i0, mid - fade // 2)
            fade = min(fade, i1 - f0)
            w = (np.arange(fade) + 0.5) / fade
            out[f0 : f0 + fade] = out[f0 : f0 + fade] * (1.0 - w) + x[f0 - i0 : f0 - i0 + fade] * w
            out[f0 + fade : i1] = x[f0 + fade - i0 :]
        cur_end = max(cur_end, i1)
    return out


def session_cutout_baseline(session, segments_per_speaker: dict) -> dict:
    """The no-processing condition: raw mixture cut to each speaker's segments."""
    return {
        spk: inactivity_mask_baseline(session.mixture, segs)
        for spk, segs in segments_per_speaker.items()
    }


def hypothesis_transcripts(session, processed_segments: dict, min_coverage: float = 0.5) -> dict:
    """Tokens credited to each extracted stream.

    Mimics perfect ASR on the extracted audio: an utterance token lands in a
    speaker's hypothesis when that speaker's (possibly corrupted) segments
    cover at least `min_coverage` of the utterance.
    """
    hyp = {}
    for spk, segs in processed_segments.items():
        tokens = []
        truth = session.activities.get(spk)
        if truth is None:
            hyp[spk] = []
            continue
        for (s, e), token in zip(truth, session.transcripts[spk]):
            covered = sum(
                max(0.0, min(e, be) - max(s, bs)) for bs, be in segs
            )
            if covered >= min_coverage * (e - s):
                tokens.append(token)
        hyp[spk] = tokens
    return hyp


def evaluate_session(
    session,
    checkpoint: Checkpoint,
    segments_per_speaker: dict | None = None,
    remove_overlaps: bool = True,
    context_s: float = 2.0,
    model=None,
) -> dict:
    """Per-speaker SDR of extraction vs. the segment cut-out, plus cpWER."""
    segs = segments_per_speaker if segments_per_speaker is not None else session.activities
    extracted = session_extract(
        session, segs, checkpoint, context_s=context_s,
        remove_overlaps=remove_overlaps, model=model,
    )
    cutout = session_cutout_baseline(session, segs)
    per_speaker = {}
    for spk in segs:
        ref = session.streams[spk]
        per_speaker[spk] = {
            "sdr_extracted_db": sdr(ref, extracted[spk]),
            "sdr_cutout_db": sdr(ref, cutout[spk]),
        }
    hyp = hypothesis_transcripts(session, segs)
    return {
        "overlap_ratio": session.overlap_ratio,
        "per_speaker": per_speaker,
        "mean_sdr_extracted_db": float(np.mean([v["sdr_extracted_db"] for v in per_speaker.values()])),
        "mean_sdr_cutout_db": float(np.mean([v["sdr_cutout_db"] for v in per_speaker.values()])),
        "cpwer": cpwer(session.transcripts, hyp),
    }


# ------------------------------------------------------------ condition matrix


@dataclass
class EvalReport:
    """Per-example SDRs and the Table-1-shaped condition means."""

    conditions: list
    per_example: list
    seed: int
    schema_version: int = 1
    condition_means: dict = field(default_factory=dict)
    mixture_mean: float = 0.0
    baseline_mean: float = 0.0

    def __post_init__(self):
        if self.per_example and not self.condition_means:
            self.condition_means = {
                self._key(c): float(np.mean([ex["conditions"][self._key(c)] for ex in self.per_example]))
                for c in self.conditions
            }
            self.mixture_mean = float(np.mean([ex["mixture_sdr"] for ex in self.per_example]))
            self.baseline_mean = float(np.mean([ex["baseline_sdr"] for ex in self.per_example]))

    @staticmethod
    def _key(condition) -> str:
        variant, noise = condition
        return f"{variant}/{noise}"

    @property
    def average(self) -> float:
        """Mean of the condition cells (the Avg column)."""
        return float(np.mean([self.condition_means[self._key(c)] for c in self.conditions]))

    def recomputed_means(self) -> dict:
        return {
            key: float(np.mean([ex["conditions"][key] for ex in self.per_example]))
            for key in self.condition_means
        }

    def to_json(self) -> str:
        payload = {
            "schema_version": self.schema_version,
            "seed": self.seed,
            "conditions": [list(c) for c in self.conditions],
            "condition_means": self.condition_means,
            "average": self.average,
            "mixture_mean": self.mixture_mean,
            "baseline_mean": self.baseline_mean,
            "per_example": self.per_example,
        }
        return json.dumps(payload, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        data = json.loads(text)
        return cls(
            conditions=[tuple(c) for c in data["conditions"]],
            per_example=data["per_example"],
            seed=data["seed"],
            schema_version=data["schema_version"],
            condition_means=data["condition_means"],
            mixture_mean=data["mixture_mean"],
            baseline_mean=data["baseline_mean"],
        )

    def to_csv(self) -> str:
        """Table-1-shaped CSV: one row per system, one column per condition."""
        keys = [self._key(c) for c in self.conditions]
        lines = ["system," + ",".join(keys) + ",avg"]
        n = len(keys)
        lines.append(
            "mixture," + ",".join(f"{self.mixture_mean:.2f}" for _ in keys)
            + f",{self.mixture_mean:.2f}"
        )
        lines.append(
            "inactivity_baseline," + ",".join(f"{self.baseline_mean:.2f}" for _ in keys)
            + f",{self.baseline_mean:.2f}"
        )
        lines.append(
            "model," + ",".join(f"{self.condition_means[k]:.2f}" for k in keys)
            + f",{self.average:.2f}"
        )
        return "\n".join(lines) + "\n"


def evaluate_matrix(
    checkpoint: Checkpoint,
    test_set,
    conditions=None,
    seed: int = 0,
    vad_config=None,
    model=None,
) -> EvalReport:
    """SDR per (activity variant x noise) condition over a mixture test set.

    Oracle activity comes from the energy VAD on the stored references; the
    noise condition jitters segment boundaries by up to the training default
    of 1 s using a seed recorded in the report. Examples whose activity ends
    up empty fall back to the unprocessed mixture for that cell.
    """
    conditions = [tuple(c) for c in (conditions or ALL_CONDITIONS)]
    for c in conditions:
        if c not in ALL_CONDITIONS:
            raise InvalidInputError(f"unknown condition {c!r}")
    if model is None:
        model = checkpoint.build_model()
    mode = checkpoint.model_config.mode
    per_example = []
    for i, sample in enumerate(test_set):
        ref = sample.target
        target_vad = energy_vad(ref, vad_config)
        other_vads = [energy_vad(sample.sources[o], vad_config) for o in sample.interferer_ids]
        row = {
            "index": i,
            "target_id": sample.target_id,
            "mixture_sdr": sdr(ref, sample.mixture),
            "baseline_sdr": sdr(ref, inactivity_mask_baseline(sample.mixture, target_vad)),
            "conditions": {},
        }
        for ci, (variant, noise) in enumerate(conditions):
            segs = remove_overlap(target_vad, other_vads) if variant == "without_overlap" else target_vad
            if noise == "noise":
                segs = jitter_segments(segs, 1.0, seed=[seed, i, ci])
            clue = sample.enrollment if mode == "speakerbeam" else segs
            try:
                est, _ = forward_extract(sample.mixture, clue, checkpoint, model=model)
            except NoActiveFramesError:
                est = sample.mixture  # nothing to condition on: pass the mixture through
            row["conditions"][EvalReport._key((variant, noise))] = sdr(ref, est)
        per_example.append(row)
    return EvalReport(conditions=conditions, per_example=per_example, seed=seed)

"""Rule-based pitch correction: constant per-note shifting with boundary cross-fades."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .analysis import PitchCurve
from .errors import ConfigError
from .notes import Note, NoteSequence


@dataclass
class NoteShift:
    note: Note
    mean_before: float | None
    shift_applied: float
    skipped: bool = False
    octave_clamped: bool = False


@dataclass
class TuneReport:
    entries: list[NoteShift] = field(default_factory=list)
    cent_rmse_before: float = float("nan")
    cent_rmse_after: float = float("nan")

    @property
    def processed(self) -> list[NoteShift]:
        return [e for e in self.entries if not e.skipped]

    def to_text(self) -> str:
        lines = [f"cent_rmse_before {self.cent_rmse_before:.3f}",
                 f"cent_rmse_after {self.cent_rmse_after:.3f}",
                 "midi onset offset mean_before shift_applied status"]
        for e in self.entries:
            status = "skipped" if e.skipped else ("octave_clamped" if e.octave_clamped else "ok")
            mean = "nan" if e.mean_before is None else f"{e.mean_before:.6f}"
            lines.append(f"{e.note.midi} {e.note.onset} {e.note.offset} {mean} {e.shift_applied:.6f} {status}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())


def cent_rmse(p: PitchCurve, ref: NoteSequence) -> float:
    """RMS deviation in cents over voiced frames that lie inside a reference note."""
    target = ref.frame_targets(len(p))
    mask = p.voiced & np.isfinite(target)
    if not mask.any():
        return float("nan")
    return float(100.0 * np.sqrt(np.mean((p.f0_midi[mask] - target[mask]) ** 2)))


def _note_span(n: Note, n_frames: int) -> slice:
    return slice(max(n.onset, 0), min(n.offset, n_frames))


def note_shift_tune(p: PitchCurve, ref: NoteSequence, octave_guard: float = 7.0):
    """Shift each note's segment so its voiced mean lands on the target note.

    The offset is constant per note, so vibrato and bends inside a note are
    preserved exactly; frames outside every note are untouched. Returns the
    tuned curve and a :class:`TuneReport`.
    """
    n_frames = len(p)
    shifts = np.zeros(n_frames)
    report = TuneReport()
    for n in ref:
        span = _note_span(n, n_frames)
        voiced = p.voiced[span]
        if span.start >= span.stop or not voiced.any():
            report.entries.append(NoteShift(n, None, 0.0, skipped=True))
            continue
        mean = float(np.mean(p.f0_midi[span][voiced]))
        shift = n.midi - mean
        clamped = abs(shift) > octave_guard
        if clamped:
            shift -= 12.0 * np.round(shift / 12.0)
        shifts[span] = shift
        report.entries.append(NoteShift(n, mean, float(shift), octave_clamped=bool(clamped)))
    tuned = p.with_f0(p.f0_midi + shifts)
    report.cent_rmse_before = cent_rmse(p, ref)
    report.cent_rmse_after = cent_rmse(tuned, ref)
    return tuned, report


def crossfade_boundaries(tuned: PitchCurve, original: PitchCurve, ref: NoteSequence,
                         width_frames: int = 5) -> PitchCurve:
    """Ramp the applied shift linearly across boundaries between adjacent notes.

    Two consecutive notes count as adjacent when the gap between them is at most
    ``width_frames``. The ramp spans ``width_frames`` frames on each side of the
    boundary and never reaches past the middle of either note.
    """
    if width_frames < 0:
        raise ConfigError("width_frames must be >= 0")
    shift = tuned.f0_midi - original.f0_midi
    if width_frames == 0 or len(ref) < 2:
        return tuned.with_f0(tuned.f0_midi)
    n_frames = len(tuned)
    out = shift.copy()
    notes = list(ref)
    for left, right in zip(notes, notes[1:]):
        if right.onset - left.offset > width_frames:
            continue
        s_left = shift[min(max(left.onset, 0), n_frames - 1)]
        s_right = shift[min(max(right.onset, 0), n_frames - 1)]
        if s_left == s_right:
            continue
        a = max(left.offset - width_frames, (left.onset + left.offset) // 2)
        c = min(right.onset + width_frames, (right.onset + right.offset + 1) // 2)
        a, c = max(a, 0), min(c, n_frames)
        if c <= a:
            continue
        t = np.arange(a, c)
        out[a:c] = s_left + (s_right - s_left) * (t - a + 0.5) / (c - a)
    return tuned.with_f0(original.f0_midi + out)


class RuleTuner(TransformerMixin, BaseEstimator):
    """Estimator wrapper around note shifting and cross-fading.

    ``transform((pitch_curve, notes))`` returns the tuned curve; the most
    recent report is kept in ``report_``.
    """

    def __init__(self, crossfade_width=5, octave_guard=7.0):
        self.crossfade_width = crossfade_width
        self.octave_guard = octave_guard

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        p, ref = X
        tuned, self.report_ = note_shift_tune(p, ref, self.octave_guard)
        return crossfade_boundaries(tuned, p, ref, self.crossfade_width)

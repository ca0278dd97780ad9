"""HMM note decoding of pitch curves and note-sequence file formats."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .analysis import MIDI_MAX, MIDI_MIN, PitchCurve
from .errors import ConfigError, FormatError, InfeasibleError, InvalidInputError


class Note(NamedTuple):
    midi: int
    onset: int  # first frame
    offset: int  # one past the last frame


class NoteSequence:
    """Sorted, non-overlapping monophonic notes on the analysis frame grid."""

    def __init__(self, notes=()):
        self.notes = [Note(int(m), int(a), int(b)) for m, a, b in notes]
        for n in self.notes:
            if n.onset >= n.offset:
                raise InvalidInputError(f"note {n} has onset >= offset")
        for a, b in zip(self.notes, self.notes[1:]):
            if b.onset < a.offset:
                raise InvalidInputError(f"notes {a} and {b} overlap or are unsorted")

    def __len__(self):
        return len(self.notes)

    def __iter__(self):
        return iter(self.notes)

    def __getitem__(self, i):
        return self.notes[i]

    def __eq__(self, other):
        return isinstance(other, NoteSequence) and self.notes == other.notes

    def __repr__(self):
        return f"NoteSequence({self.notes!r})"

    def transpose(self, semitones: int) -> "NoteSequence":
        return NoteSequence((n.midi + semitones, n.onset, n.offset) for n in self.notes)

    def frame_targets(self, n_frames: int) -> np.ndarray:
        """Per-frame target MIDI note, NaN where no note sounds."""
        out = np.full(n_frames, np.nan)
        for n in self.notes:
            out[max(n.onset, 0):min(n.offset, n_frames)] = n.midi
        return out


@dataclass(frozen=True)
class NoteHmmParams:
    midi_min: int = MIDI_MIN
    midi_max: int = MIDI_MAX
    self_loop_prob: float = 0.98
    switch_decay: float = 5.0  # semitones; switch mass ~ exp(-|dmidi| / decay)
    rest_share: float = 0.3  # fraction of a note's switch mass that goes to silence
    emission_sigma: float = 0.7
    silence_on_voiced: float = 1e-6
    note_on_unvoiced: float = 1e-3
    min_note_frames: int = 8

    def __post_init__(self):
        if not 0.0 < self.self_loop_prob < 1.0:
            raise ConfigError("self_loop_prob must be in (0, 1)")
        if self.emission_sigma <= 0:
            raise ConfigError("emission_sigma must be positive")
        if self.midi_max <= self.midi_min:
            raise ConfigError("empty pitch range")

    @property
    def pitches(self) -> np.ndarray:
        return np.arange(self.midi_min, self.midi_max + 1)

    @property
    def n_states(self) -> int:
        return self.pitches.size + 1  # state 0 is silence

    def transition_matrix(self) -> np.ndarray:
        pitches = self.pitches
        n = self.n_states
        stay = self.self_loop_prob
        trans = np.zeros((n, n))
        trans[0, 0] = stay
        trans[0, 1:] = (1.0 - stay) / pitches.size
        dist = np.abs(pitches[:, None] - pitches[None, :]).astype(float)
        weights = np.exp(-dist / self.switch_decay)
        np.fill_diagonal(weights, 0.0)
        weights /= weights.sum(axis=1, keepdims=True)
        switch = 1.0 - stay
        trans[1:, 0] = switch * self.rest_share
        trans[1:, 1:] = switch * (1.0 - self.rest_share) * weights
        trans[1:, 1:] += np.eye(pitches.size) * stay
        return trans


def viterbi(log_emission, log_trans, log_init) -> np.ndarray:
    """Most probable state path; ties resolve to the lowest state index."""
    log_emission = np.asarray(log_emission, dtype=np.float64)
    log_trans = np.asarray(log_trans, dtype=np.float64)
    log_init = np.asarray(log_init, dtype=np.float64)
    n_frames, n_states = log_emission.shape
    if n_frames < 1:
        raise InvalidInputError("viterbi needs at least one frame")
    if log_trans.shape != (n_states, n_states) or log_init.shape != (n_states,):
        raise InvalidInputError("transition/initial shapes do not match the emission matrix")
    for name, arr in (("emission", log_emission), ("transition", log_trans), ("init", log_init)):
        if np.any(np.isnan(arr)) or np.any(arr == np.inf):
            raise InvalidInputError(f"{name} log-probabilities must be finite or -inf")

    delta = log_init + log_emission[0]
    if not np.isfinite(delta.max()):
        raise InfeasibleError("every state has zero probability at frame 0")
    back = np.zeros((n_frames, n_states), dtype=np.int64)
    for t in range(1, n_frames):
        scores = delta[:, None] + log_trans
        back[t] = np.argmax(scores, axis=0)
        delta = scores[back[t], np.arange(n_states)] + log_emission[t]
        if not np.isfinite(delta.max()):
            raise InfeasibleError(f"every state has zero probability at frame {t}")
    path = np.empty(n_frames, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    for t in range(n_frames - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path


def note_log_emission(p: PitchCurve, params: NoteHmmParams) -> np.ndarray:
    pitches = params.pitches
    sigma = params.emission_sigma
    z = (p.f0_midi[:, None] - pitches[None, :]) / sigma
    log_gauss = -0.5 * z ** 2 - np.log(sigma * np.sqrt(2.0 * np.pi))
    em = np.empty((len(p), params.n_states))
    em[:, 1:] = np.where(p.voiced[:, None], log_gauss, np.log(params.note_on_unvoiced))
    em[:, 0] = np.where(p.voiced, np.log(params.silence_on_voiced), 0.0)
    return em


def _runs(labels: np.ndarray):
    """Yield (label, start, stop) for runs of equal values."""
    edges = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate([[0], edges])
    stops = np.concatenate([edges, [labels.size]])
    return [(int(labels[a]), int(a), int(b)) for a, b in zip(starts, stops)]


def _absorb_short(frame_midi: np.ndarray, voiced: np.ndarray, min_frames: int) -> np.ndarray:
    """Remove notes shorter than ``min_frames`` by merging them into neighbours."""
    labels = frame_midi.copy()
    while True:
        runs = _runs(labels)
        short = [(b - a, i) for i, (m, a, b) in enumerate(runs) if m > 0 and b - a < min_frames]
        if not short:
            break
        _, i = min(short)
        m, a, b = runs[i]
        prev = runs[i - 1] if i > 0 and runs[i - 1][0] > 0 else None
        nxt = runs[i + 1] if i + 1 < len(runs) and runs[i + 1][0] > 0 else None
        if prev is None and nxt is None:
            labels[a:b] = 0
            continue
        # prefer the neighbour closest in pitch, then the earlier one
        cands = [r for r in (prev, nxt) if r is not None]
        target = min(cands, key=lambda r: abs(r[0] - m))[0]
        labels[a:b] = target

    # voiced frames that decoded as silence inside long voiced runs join a neighbour note
    for v, a, b in _runs(voiced.astype(np.int64)):
        if v and b - a >= min_frames:
            for t in range(a, b):
                if labels[t] == 0:
                    left = labels[t - 1] if t > a else 0
                    labels[t] = left
            for t in range(b - 1, a - 1, -1):
                if labels[t] == 0 and t + 1 < b:
                    labels[t] = labels[t + 1]
    return labels


def decode_notes(p: PitchCurve, params: NoteHmmParams | None = None) -> NoteSequence:
    """Viterbi-decode a note sequence (rests included) from a pitch curve."""
    params = params or NoteHmmParams()
    if len(p) == 0:
        raise InvalidInputError("empty pitch curve")
    trans = params.transition_matrix()
    with np.errstate(divide="ignore"):
        log_trans = np.log(trans)
    log_init = np.full(params.n_states, -np.log(params.n_states))
    path = viterbi(note_log_emission(p, params), log_trans, log_init)
    frame_midi = np.where(path > 0, params.pitches[np.maximum(path - 1, 0)], 0)
    frame_midi = _absorb_short(frame_midi, p.voiced, params.min_note_frames)
    return NoteSequence((m, a, b) for m, a, b in _runs(frame_midi) if m > 0)


class NoteDecoder(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``transform(PitchCurve) -> NoteSequence``."""

    def __init__(self, self_loop_prob=0.98, switch_decay=5.0, emission_sigma=0.7, min_note_frames=8):
        self.self_loop_prob = self_loop_prob
        self.switch_decay = switch_decay
        self.emission_sigma = emission_sigma
        self.min_note_frames = min_note_frames

    def _params(self):
        return NoteHmmParams(self_loop_prob=self.self_loop_prob, switch_decay=self.switch_decay,
                             emission_sigma=self.emission_sigma, min_note_frames=self.min_note_frames)

    def fit(self, X=None, y=None):
        self.params_ = self._params()
        return self

    def transform(self, X: PitchCurve) -> NoteSequence:
        return decode_notes(X, getattr(self, "params_", None) or self._params())


# --- file formats ------------------------------------------------------------------

def save_notes_txt(notes: NoteSequence, path) -> None:
    """One ``midi onset_frame offset_frame`` triplet per line."""
    lines = [f"{n.midi} {n.onset} {n.offset}" for n in notes]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_notes_txt(path) -> NoteSequence:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected 'midi onset offset', got {line!r}")
        rows.append(tuple(int(v) for v in parts))
    return NoteSequence(rows)


_TICKS_PER_BEAT = 480
_TEMPO_US = 500000  # 120 bpm


def save_notes_midi(notes: NoteSequence, path, hop: int = 512, sample_rate: int = 32000) -> None:
    """Write a type-0 Standard MIDI File at a fixed 120 bpm."""
    import mido

    sec_per_tick = _TEMPO_US / 1e6 / _TICKS_PER_BEAT
    frame_sec = hop / sample_rate
    track = mido.MidiTrack()
    track.append(mido.MetaMessage("set_tempo", tempo=_TEMPO_US, time=0))
    events = []
    for n in notes:
        events.append((round(n.onset * frame_sec / sec_per_tick), 1, n.midi))
        events.append((round(n.offset * frame_sec / sec_per_tick), 0, n.midi))
    events.sort()
    now = 0
    for tick, on, midi in events:
        kind = "note_on" if on else "note_off"
        track.append(mido.Message(kind, note=int(midi), velocity=100 if on else 0, time=tick - now))
        now = tick
    track.append(mido.MetaMessage("end_of_track", time=0))
    mid = mido.MidiFile(type=0, ticks_per_beat=_TICKS_PER_BEAT)
    mid.tracks.append(track)
    mid.save(str(path))


def load_notes_midi(path, hop: int = 512, sample_rate: int = 32000) -> NoteSequence:
    """Read the monophonic note layer of a MIDI file onto the frame grid."""
    import mido

    try:
        mid = mido.MidiFile(str(path))
    except (OSError, EOFError, ValueError) as exc:
        raise FormatError(f"{path}: unreadable MIDI file ({exc})") from exc
    frame_sec = hop / sample_rate
    active: dict[int, float] = {}
    rows = []
    now = 0.0
    for msg in mid:  # iteration yields delta times in seconds, tempo map applied
        now += msg.time
        if msg.type == "note_on" and msg.velocity > 0:
            active[msg.note] = now
        elif msg.type in ("note_off", "note_on") and msg.note in active:
            start = active.pop(msg.note)
            a, b = round(start / frame_sec), round(now / frame_sec)
            if b > a:
                rows.append((msg.note, a, b))
    rows.sort(key=lambda r: r[1])
    return NoteSequence(rows)


def load_notes(path, hop: int = 512, sample_rate: int = 32000) -> NoteSequence:
    path = Path(path)
    if path.suffix.lower() in (".mid", ".midi"):
        return load_notes_midi(path, hop, sample_rate)
    return load_notes_txt(path)

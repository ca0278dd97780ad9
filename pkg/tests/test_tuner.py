import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from karatune.analysis import PitchCurve
from karatune.errors import ConfigError
from karatune.notes import NoteSequence
from karatune.tuner import RuleTuner, cent_rmse, crossfade_boundaries, note_shift_tune


def curve(values, voiced=None):
    values = np.asarray(values, dtype=float)
    return PitchCurve(values, np.ones(values.size, bool) if voiced is None else np.asarray(voiced))


def test_cent_rmse_examples():
    ref = NoteSequence([(60, 0, 10)])
    assert cent_rmse(curve(np.full(10, 60.0)), ref) == 0.0
    assert cent_rmse(curve(np.full(10, 60.4)), ref) == pytest.approx(40.0)
    assert np.isnan(cent_rmse(curve(np.full(10, 60.0), np.zeros(10, bool)), ref))


def test_shift_examples():
    p = curve(np.r_[np.full(10, 60.3), np.full(10, 61.8)])
    tuned, report = note_shift_tune(p, NoteSequence([(60, 0, 10), (62, 10, 20)]))
    np.testing.assert_allclose(tuned.f0_midi, np.r_[np.full(10, 60.0), np.full(10, 62.0)], atol=1e-12)
    assert [e.shift_applied for e in report.entries] == pytest.approx([-0.3, 0.2])
    assert report.cent_rmse_after == pytest.approx(0.0, abs=1e-9)


def test_frames_outside_notes_untouched():
    p = curve(np.linspace(55, 65, 30))
    tuned, _ = note_shift_tune(p, NoteSequence([(60, 10, 20)]))
    np.testing.assert_array_equal(tuned.f0_midi[:10], p.f0_midi[:10])
    np.testing.assert_array_equal(tuned.f0_midi[20:], p.f0_midi[20:])
    np.testing.assert_array_equal(tuned.voiced, p.voiced)


def test_unvoiced_note_skipped():
    p = curve(np.full(10, 61.0), np.zeros(10, bool))
    tuned, report = note_shift_tune(p, NoteSequence([(60, 0, 10)]))
    assert report.entries[0].skipped and report.processed == []
    np.testing.assert_array_equal(tuned.f0_midi, p.f0_midi)


def test_octave_guard():
    p = curve(np.full(10, 72.2))
    tuned, report = note_shift_tune(p, NoteSequence([(60, 0, 10)]), octave_guard=7.0)
    e = report.entries[0]
    assert e.octave_clamped
    assert e.shift_applied == pytest.approx(-0.2)
    np.testing.assert_allclose(tuned.f0_midi, 72.0)


def test_idempotent():
    rng = np.random.default_rng(0)
    p = curve(60 + rng.normal(0, 0.3, 40))
    ref = NoteSequence([(60, 0, 20), (61, 20, 40)])
    once, _ = note_shift_tune(p, ref)
    twice, _ = note_shift_tune(once, ref)
    np.testing.assert_allclose(twice.f0_midi, once.f0_midi, atol=1e-12)


@st.composite
def tuning_case(draw):
    n_notes = draw(st.integers(1, 5))
    bounds, t = [], 0
    for _ in range(n_notes):
        t += draw(st.integers(0, 4))
        length = draw(st.integers(1, 20))
        bounds.append((draw(st.integers(40, 80)), t, t + length))
        t += length
    n_frames = t + draw(st.integers(0, 5))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    f0 = rng.uniform(38, 82, n_frames) + 0.5 * np.sin(np.arange(n_frames))
    voiced = rng.random(n_frames) < draw(st.floats(0.3, 1.0))
    return curve(f0, voiced), NoteSequence(bounds)


@settings(max_examples=300, deadline=None)
@given(tuning_case())
def test_shift_contract(case):
    p, ref = case
    tuned, report = note_shift_tune(p, ref, octave_guard=100.0)
    for e in report.processed:
        span = slice(e.note.onset, e.note.offset)
        v = p.voiced[span]
        assert abs(np.mean(tuned.f0_midi[span][v]) - e.note.midi) <= 1e-9
        assert np.std(tuned.f0_midi[span][v]) == pytest.approx(np.std(p.f0_midi[span][v]), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(tuning_case())
def test_octave_guard_bounds_every_shift(case):
    p, ref = case
    _, report = note_shift_tune(p, ref, octave_guard=7.0)
    for e in report.processed:
        assert abs(e.shift_applied) <= 7.0 or (e.octave_clamped and abs(e.shift_applied) <= 6.0)
        target_offset = e.mean_before + e.shift_applied - e.note.midi
        assert abs(target_offset - 12 * round(target_offset / 12)) <= 1e-9


def test_crossfade_linear_ramp():
    n = 40
    p = curve(np.full(n, 60.0))
    ref = NoteSequence([(61, 0, 20), (63, 20, 40)])
    tuned, _ = note_shift_tune(p, ref)
    faded = crossfade_boundaries(tuned, p, ref, width_frames=4)
    shift = faded.f0_midi - p.f0_midi
    np.testing.assert_allclose(shift[:16], 1.0)
    np.testing.assert_allclose(shift[24:], 3.0)
    ramp = shift[16:24]
    assert np.all(np.diff(ramp) > 0)
    np.testing.assert_allclose(np.diff(ramp), 2.0 / 8)
    # symmetric about the boundary
    np.testing.assert_allclose(ramp + ramp[::-1], 4.0)


def test_crossfade_zero_width_and_gap():
    p = curve(np.full(40, 60.0))
    ref = NoteSequence([(61, 0, 15), (63, 25, 40)])
    tuned, _ = note_shift_tune(p, ref)
    np.testing.assert_array_equal(crossfade_boundaries(tuned, p, ref, 0).f0_midi, tuned.f0_midi)
    np.testing.assert_array_equal(crossfade_boundaries(tuned, p, ref, 5).f0_midi, tuned.f0_midi)
    with pytest.raises(ConfigError):
        crossfade_boundaries(tuned, p, ref, -1)


def test_crossfade_stays_inside_halves():
    p = curve(np.full(12, 60.0))
    ref = NoteSequence([(61, 0, 4), (63, 4, 12)])
    tuned, _ = note_shift_tune(p, ref)
    shift = crossfade_boundaries(tuned, p, ref, 10).f0_midi - p.f0_midi
    np.testing.assert_allclose(shift[:2], 1.0)
    np.testing.assert_allclose(shift[8:], 3.0)


def test_rule_tuner_estimator():
    p = curve(np.full(20, 60.25))
    est = RuleTuner(crossfade_width=0)
    out = est.fit_transform((p, NoteSequence([(60, 0, 20)])))
    np.testing.assert_allclose(out.f0_midi, 60.0)
    assert est.report_.entries[0].shift_applied == pytest.approx(-0.25)
    assert est.get_params() == {"crossfade_width": 0, "octave_guard": 7.0}


def test_documented_examples():
    tuned, report = note_shift_tune(curve(np.full(20, 61.4)), NoteSequence([(60, 0, 20)]))
    np.testing.assert_allclose(tuned.f0_midi, 60.0, atol=1e-12)
    assert report.entries[0].shift_applied == pytest.approx(-1.4)

    t = np.arange(48)
    vib = curve(60 + 0.3 * np.sin(2 * np.pi * t / 12))
    same, report = note_shift_tune(vib, NoteSequence([(60, 0, 48)]))
    np.testing.assert_allclose(same.f0_midi, vib.f0_midi, atol=1e-12)

    two, report = note_shift_tune(curve(np.r_[np.full(10, 60.5), np.full(10, 63.2)]),
                                  NoteSequence([(60, 0, 10), (64, 10, 20)]))
    assert [e.shift_applied for e in report.entries] == pytest.approx([-0.5, 0.8])


def test_crossfade_minus_one_plus_one_width_two():
    p = curve(np.full(20, 60.0))
    ref = NoteSequence([(59, 0, 10), (61, 10, 20)])
    tuned, _ = note_shift_tune(p, ref)
    shift = crossfade_boundaries(tuned, p, ref, 2).f0_midi - 60.0
    np.testing.assert_allclose(shift[:8], -1.0)
    np.testing.assert_allclose(shift[12:], 1.0)
    ramp = shift[7:13]
    assert np.all(np.diff(ramp) >= 0)
    np.testing.assert_allclose(shift[8:12], [-0.75, -0.25, 0.25, 0.75])


def test_single_note_crossfade_identity():
    p = curve(np.full(20, 60.3))
    ref = NoteSequence([(60, 0, 20)])
    tuned, _ = note_shift_tune(p, ref)
    np.testing.assert_array_equal(crossfade_boundaries(tuned, p, ref, 5).f0_midi, tuned.f0_midi)


@settings(max_examples=200, deadline=None)
@given(tuning_case())
def test_offset_constant_within_each_note(case):
    p, ref = case
    tuned, _ = note_shift_tune(p, ref, octave_guard=100.0)
    delta = tuned.f0_midi - p.f0_midi
    for n in ref:
        seg = delta[n.onset:n.offset]
        assert np.ptp(seg) <= 1e-9

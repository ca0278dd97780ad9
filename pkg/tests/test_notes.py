import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from karatune.analysis import PitchCurve
from karatune.errors import FormatError, InfeasibleError, InvalidInputError
from karatune.notes import (NoteDecoder, NoteHmmParams, NoteSequence, decode_notes, load_notes,
                            save_notes_midi, save_notes_txt, viterbi)

from synth import brute_force_viterbi, path_score


def curve(values, voiced=None):
    values = np.asarray(values, dtype=float)
    return PitchCurve(values, np.ones(values.size, bool) if voiced is None else voiced)


def test_transition_rows_sum_to_one():
    trans = NoteHmmParams().transition_matrix()
    np.testing.assert_allclose(trans.sum(axis=1), 1.0, atol=1e-9)
    assert trans.shape == (53, 53)


def test_viterbi_single_frame():
    assert viterbi(np.array([[-1.0, -2.0]]), np.log(np.full((2, 2), 0.5)), np.log([0.5, 0.5])).tolist() == [0]


def test_viterbi_dominant_state():
    rng = np.random.default_rng(0)
    em = np.full((6, 4), -50.0)
    em[:, 2] = 0.0
    path = viterbi(em, np.log(rng.dirichlet(np.ones(4), size=4)), np.log(np.full(4, 0.25)))
    assert path.tolist() == [2] * 6


def test_viterbi_ties_go_low():
    path = viterbi(np.zeros((3, 3)), np.zeros((3, 3)), np.zeros(3))
    assert path.tolist() == [0, 0, 0]


def test_viterbi_matches_brute_force_3x3():
    rng = np.random.default_rng(1)
    for _ in range(50):
        em, tr, init = rng.normal(size=(3, 3)), rng.normal(size=(3, 3)), rng.normal(size=3)
        expected, _ = brute_force_viterbi(em, tr, init)
        np.testing.assert_array_equal(viterbi(em, tr, init), expected)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 8), st.integers(1, 5), st.integers(0, 2 ** 32 - 1))
def test_viterbi_optimal_property(n_frames, n_states, seed):
    rng = np.random.default_rng(seed)
    em = rng.normal(size=(n_frames, n_states))
    tr = rng.normal(size=(n_states, n_states))
    tr[rng.random(tr.shape) < 0.2] = -np.inf
    init = rng.normal(size=n_states)
    expected, best = brute_force_viterbi(em, tr, init)
    if not np.isfinite(best):
        with pytest.raises(InfeasibleError):
            viterbi(em, tr, init)
        return
    path = viterbi(em, tr, init)
    assert path_score(path, em, tr, init) == pytest.approx(best, abs=1e-9)


def test_viterbi_infeasible_names_frame():
    em = np.zeros((3, 2))
    em[1] = -np.inf
    with pytest.raises(InfeasibleError, match="frame 1"):
        viterbi(em, np.zeros((2, 2)), np.zeros(2))


def test_decode_constant_curve():
    assert decode_notes(curve(np.full(100, 60.0))).notes == [(60, 0, 100)]


def test_decode_step_curve():
    notes = decode_notes(curve(np.r_[np.full(50, 60.0), np.full(50, 64.0)]))
    assert [n.midi for n in notes] == [60, 64]
    assert notes[0].onset == 0 and notes[1].offset == 100
    assert abs(notes[1].onset - 50) <= 3


def test_decode_step_agrees_with_brute_force_on_downsampled_version():
    params = NoteHmmParams(midi_min=58, midi_max=66)
    c = curve(np.r_[np.full(4, 60.0), np.full(4, 64.0)])
    from karatune.notes import note_log_emission

    em = note_log_emission(c, params)
    tr = np.log(params.transition_matrix())
    init = np.full(params.n_states, -np.log(params.n_states))
    # restrict brute force to the 5 states that could plausibly win
    keep = np.array([0, 60 - 58 + 1, 61 - 58 + 1, 63 - 58 + 1, 64 - 58 + 1])
    expected, _ = brute_force_viterbi(em[:, keep], tr[np.ix_(keep, keep)], init[keep])
    got = viterbi(em, tr, init)
    np.testing.assert_array_equal(got, keep[expected])


def test_decode_vibrato_single_note():
    t = np.arange(200) * 512 / 32000
    notes = decode_notes(curve(62 + 0.4 * np.sin(2 * np.pi * 6 * t)))
    assert [n.midi for n in notes] == [62]


def test_decode_silence_gives_rests():
    assert len(decode_notes(curve(np.full(50, 60.0), np.zeros(50, bool)))) == 0


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(40, 75), st.integers(10, 30)), min_size=1, max_size=4),
       st.floats(-0.3, 0.3))
def test_decode_shift_equivariance(segments, offset):
    values = np.concatenate([np.full(n, m + offset) for m, n in segments])
    base = decode_notes(curve(values))
    up = decode_notes(curve(values + 2))
    assert up == base.transpose(2)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(st.integers(40, 75), st.integers(1, 30), st.booleans()), min_size=1, max_size=6))
def test_decode_coverage_invariants(segments):
    values = np.concatenate([np.full(n, float(m)) for m, n, _ in segments])
    voiced = np.concatenate([np.full(n, v) for _, n, v in segments])
    notes = decode_notes(curve(values, voiced))
    assert all(0 <= n.onset < n.offset <= values.size for n in notes)
    covered = np.zeros(values.size, bool)
    for n in notes:
        covered[n.onset:n.offset] = True
    start = 0
    for _, n, v in segments:
        if v and n >= NoteHmmParams().min_note_frames:
            assert covered[start:start + n].all()
        start += n


def test_note_sequence_validation():
    with pytest.raises(InvalidInputError):
        NoteSequence([(60, 5, 5)])
    with pytest.raises(InvalidInputError):
        NoteSequence([(60, 0, 10), (62, 5, 15)])


def test_txt_and_midi_round_trip(tmp_path):
    notes = NoteSequence([(60, 0, 31), (62, 40, 80), (67, 80, 100)])
    save_notes_txt(notes, tmp_path / "n.txt")
    assert load_notes(tmp_path / "n.txt") == notes
    save_notes_midi(notes, tmp_path / "n.mid")
    assert load_notes(tmp_path / "n.mid") == notes


def test_bad_note_files(tmp_path):
    (tmp_path / "bad.txt").write_text("60 0\n")
    with pytest.raises(FormatError, match="bad.txt:1"):
        load_notes(tmp_path / "bad.txt")
    (tmp_path / "bad.mid").write_bytes(b"not midi")
    with pytest.raises(FormatError):
        load_notes(tmp_path / "bad.mid")


def test_note_decoder_estimator():
    est = NoteDecoder(min_note_frames=4)
    assert est.get_params()["min_note_frames"] == 4
    assert est.fit_transform(curve(np.full(30, 70.0))).notes == [(70, 0, 30)]

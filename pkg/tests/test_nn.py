import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from karatune import nn
from karatune.errors import ContractError, FormatError, NonFiniteError

from gradsuite import ALL_CASES, run_case
from synth import naive_conv1d, naive_conv_transpose1d


def t64(x, grad=False):
    return nn.Tensor(np.asarray(x, dtype=np.float64), requires_grad=grad, dtype=np.float64)


@pytest.mark.parametrize("name", sorted(ALL_CASES))
def test_gradients(name):
    assert run_case(name, 15, seed=1) < 1e-4


def test_backward_examples():
    x = t64([1.0, 2.0, 3.0], grad=True)
    nn.tsum(x * x).backward()
    np.testing.assert_allclose(x.grad, [2, 4, 6])
    y = t64(2.0, grad=True)
    (y * y * y).backward()
    assert y.grad == pytest.approx(12.0)


def test_gradient_accumulates_over_reuse():
    x = t64([1.0, -1.0], grad=True)
    nn.tsum(x + x * 3.0).backward()
    np.testing.assert_allclose(x.grad, [4, 4])


def test_backward_needs_scalar():
    x = t64([1.0, 2.0], grad=True)
    with pytest.raises(ContractError, match="scalar"):
        (x * 2.0).backward()


def test_nonfinite_gradient_named():
    x = t64([0.0], grad=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        loss = nn.tsum(nn.sqrt(x))
        with pytest.raises(NonFiniteError, match="sqrt"):
            loss.backward()


def test_no_grad_builds_no_tape():
    x = t64([1.0], grad=True)
    with nn.no_grad():
        y = x * 2.0
    assert not y.requires_grad


def test_conv1d_examples():
    x = t64([[1.0, 2.0, 3.0, 4.0]])
    w = t64([[[1.0, -1.0]]])
    np.testing.assert_allclose(nn.conv1d(x, w).data, [[-1, -1, -1]])
    np.testing.assert_allclose(nn.conv1d(x, w, stride=2).data, [[-1, -1]])
    np.testing.assert_allclose(nn.conv1d(x, w, dilation=2).data, [[-2, -2]])
    assert nn.conv1d(x, t64(np.ones((1, 1, 3))), padding="same").shape == (1, 4)
    with pytest.raises(ContractError):
        nn.conv1d(x, t64(np.ones((1, 2, 3))))


def test_conv1d_matches_naive_fuzz():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        c_in, c_out, k = rng.integers(1, 4, size=3)
        stride, dilation = rng.integers(1, 4, size=2)
        pl, pr = rng.integers(0, 4, size=2)
        t = int(dilation * (k - 1) + 1 + rng.integers(0, 10)) - pl - pr
        t = max(t, 1)
        if t + pl + pr < dilation * (k - 1) + 1:
            continue
        x, w, b = rng.normal(size=(c_in, t)), rng.normal(size=(c_out, c_in, k)), rng.normal(size=c_out)
        got = nn.conv1d(t64(x), t64(w), t64(b), stride=int(stride), dilation=int(dilation),
                        padding=(int(pl), int(pr))).data
        want = naive_conv1d(x, w, b, stride, dilation, (pl, pr))
        np.testing.assert_allclose(got, want, atol=1e-10)
        if pl == pr:
            assert got.shape[-1] == nn.conv_output_length(t, k, stride, dilation, pl)


def test_conv_transpose_matches_naive_and_length():
    rng = np.random.default_rng(1)
    for _ in range(300):
        stride = int(rng.choice([2, 4, 8]))
        k, pad = 2 * stride, stride // 2
        c_in, c_out, t = (int(v) for v in rng.integers(1, 5, size=3))
        x, w = rng.normal(size=(c_in, t)), rng.normal(size=(c_in, c_out, k))
        got = nn.conv_transpose1d(t64(x), t64(w), stride=stride, padding=pad).data
        np.testing.assert_allclose(got, naive_conv_transpose1d(x, w, stride, pad), atol=1e-10)
        assert got.shape[-1] == t * stride


def test_conv_transpose_upsamples_impulse():
    w = t64(np.ones((1, 1, 2)))
    out = nn.conv_transpose1d(t64([[1.0, 2.0]]), w, stride=2)
    np.testing.assert_allclose(out.data, [[1, 1, 2, 2]])


def test_attention_examples():
    v = t64([[1.0, 0.0], [0.0, 1.0]])
    q = t64(np.zeros((1, 2)))
    np.testing.assert_allclose(nn.attention(q, v, v, 1).data, [[0.5, 0.5]])
    big = t64([[50.0, 0.0]])
    np.testing.assert_allclose(nn.attention(big, v, v, 1).data, [[1.0, 0.0]], atol=1e-12)
    with pytest.raises(ContractError):
        nn.attention(t64(np.zeros((1, 3))), t64(np.zeros((2, 3))), t64(np.zeros((2, 3))), 2)


def test_layer_norm_normalises():
    x = t64(np.random.default_rng(0).normal(3, 5, size=(4, 16)))
    y = nn.LayerNorm(16)(x).data
    np.testing.assert_allclose(y.mean(axis=-1), 0, atol=1e-9)
    np.testing.assert_allclose(y.std(axis=-1), 1, atol=1e-3)


def test_haar_split_matches_signal_haar():
    from karatune.signal import haar_dwt

    x = np.random.default_rng(0).normal(size=32)
    bands = haar_dwt(x)
    out = nn.haar_split(t64(x[None])).data
    np.testing.assert_allclose(out[0], bands.approx, atol=1e-12)
    np.testing.assert_allclose(out[1], bands.detail, atol=1e-12)


def test_adamw_zero_grad_only_decays():
    p = t64([1.0, -2.0], grad=True)
    opt = nn.AdamW([p], lr=0.1, weight_decay=0.01)
    p.grad = np.zeros(2)
    opt.step()
    np.testing.assert_allclose(p.data, np.array([1.0, -2.0]) * (1 - 0.1 * 0.01))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(1e-4, 1e-1))
def test_adamw_constant_gradient_step_bounded_by_lr(seed, lr):
    # with a constant gradient the bias-corrected moments equal g and g**2 exactly
    rng = np.random.default_rng(seed)
    p = t64(rng.normal(size=5), grad=True)
    g = rng.normal(size=5) * 10 ** rng.uniform(-3, 3, size=5)
    opt = nn.AdamW([p], lr=lr, weight_decay=0.0)
    for _ in range(20):
        before = p.data.copy()
        p.grad = g.copy()
        opt.step()
        step = before - p.data
        assert np.all(np.abs(step) <= lr * (1 + 1e-9))
        assert np.all(np.sign(step) == np.sign(g))


def test_adamw_first_step_is_lr_sign():
    p = t64([1.0, 1.0], grad=True)
    opt = nn.AdamW([p], lr=0.01, weight_decay=0.0)
    p.grad = np.array([3.0, -1e-3])
    opt.step()
    np.testing.assert_allclose(p.data, [0.99, 1.01], atol=1e-6)


def test_adamw_converges_on_bowl():
    p = t64([5.0, -5.0], grad=True)
    opt = nn.AdamW([p], lr=0.1, weight_decay=0.0)
    for _ in range(500):
        opt.zero_grad()
        nn.tsum(p * p).backward()
        opt.step()
    assert np.linalg.norm(p.data) < 1e-2


def test_adamw_missing_grad():
    p = t64([1.0], grad=True)
    with pytest.raises(ContractError, match="no gradient"):
        nn.AdamW([p]).step()


def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    model = nn.Linear(3, 2, rng)
    opt = nn.AdamW(model.parameters(), lr=1e-3)
    nn.tsum(model(nn.Tensor(rng.normal(size=(4, 3))))).backward()
    opt.step()
    path = nn.save_checkpoint(tmp_path / "c.npz", {"m": model}, {"o": opt}, meta={"k": 1})
    other = nn.Linear(3, 2, np.random.default_rng(9))
    other_opt = nn.AdamW(other.parameters(), lr=5.0)
    assert nn.load_checkpoint(path, {"m": other}, {"o": other_opt}) == {"k": 1}
    for a, b in zip(model.parameters(), other.parameters()):
        assert np.array_equal(a.data, b.data) and a.data.dtype == b.data.dtype
    assert other_opt.lr == 1e-3 and other_opt.step_count == 1
    for a, b in zip(opt.m + opt.v, other_opt.m + other_opt.v):
        assert np.array_equal(a, b)


def test_checkpoint_bad_file(tmp_path):
    (tmp_path / "x.npz").write_bytes(b"junk")
    with pytest.raises(FormatError):
        nn.load_checkpoint(tmp_path / "x.npz", {})


def test_seeded_init_is_deterministic():
    a = nn.Conv1d(2, 3, 5, np.random.default_rng(4))
    b = nn.Conv1d(2, 3, 5, np.random.default_rng(4))
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert np.array_equal(pa.data, pb.data)


def test_loss_csv(tmp_path):
    path = nn.save_loss_csv(tmp_path / "l.csv", [{"step": 1, "loss": 0.5}, {"step": 2, "loss": 0.25}])
    assert path.read_text().splitlines() == ["step,loss", "1,0.5", "2,0.25"]

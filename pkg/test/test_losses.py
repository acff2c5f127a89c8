import math

import numpy as np
import pytest

from autodiff.gradcheck import check_gradient
from autodiff.tensor import Tensor, backward
from data.batch import one_hot
from losses.bundle import LogitBundle
from losses.kd_losses import (
    TEXT, VISUAL, LossWeights, autoregressive_loss, dft_loss, kd_kl_loss, visual_cosine_loss, visual_gram,
)
from utils.errors import (
    DegenerateVisualLogitsError, EmptyLossSupportError, MaskMismatchError, NoVisualTokensError,
)

IDENTITY_TRIALS = 10_000
GRADIENT_BUNDLES = range(50)


def bundle(logits, m, relevance=None, targets=None, requires_grad=False):
    logits = np.asarray(logits, dtype=np.float64)
    B, L, c = logits.shape
    rel = np.ones((B, L), dtype=bool) if relevance is None else np.asarray(relevance, dtype=bool)
    if targets is None:
        targets = one_hot(np.zeros((B, L), dtype=np.int64), c)
    return LogitBundle(Tensor(logits, requires_grad=requires_grad), m, rel, targets)


def random_pair(seed, B=2, L=6, c=5, m=2):
    r = np.random.default_rng(seed)
    ids = r.integers(0, c, size=(B, L))
    rel = r.random((B, L)) < 0.7
    rel[:, 0] = True
    rel[:, m] = True
    t = bundle(r.normal(size=(B, L, c)) * 2, m, rel, one_hot(ids, c))
    s = bundle(r.normal(size=(B, L, c)) * 2, m, rel, one_hot(ids, c))
    return t, s


# ─────────────────────────────────────────────
# L_rg
# ─────────────────────────────────────────────

def test_autoregressive_perfect_prediction_is_zero():
    ids = np.array([[0, 1, 2, 3, 1]])
    logits = np.zeros((1, 5, 4))
    logits[0, np.arange(4), ids[0, 1:]] = 1e3
    b = bundle(logits, 1, targets=one_hot(ids, 4))
    assert autoregressive_loss(b).item() == pytest.approx(0.0, abs=1e-12)


def test_autoregressive_uniform_raw_sum():
    # m=1, L=6: posiciones de texto 1..4 predicen 2..5.
    b = bundle(np.zeros((1, 6, 16)), 1)
    assert autoregressive_loss(b, raw_sums=True).item() == pytest.approx(4 * math.log(16))
    assert autoregressive_loss(b).item() == pytest.approx(math.log(16))


def test_autoregressive_matches_loop_oracle():
    r = np.random.default_rng(3)
    ids = r.integers(0, 4, size=(1, 4))
    logits = r.normal(size=(1, 4, 4))
    b = bundle(logits, 1, targets=one_hot(ids, 4))

    total, count = 0.0, 0
    for i in range(1, 3):
        z = logits[0, i]
        logp = z - math.log(sum(math.exp(v) for v in z))
        total -= logp[ids[0, i + 1]]
        count += 1
    assert autoregressive_loss(b, raw_sums=True).item() == pytest.approx(total, rel=1e-12)
    assert autoregressive_loss(b).item() == pytest.approx(total / count, rel=1e-12)


def test_autoregressive_empty_support():
    rel = np.array([[True, False, False, False]])
    with pytest.raises(EmptyLossSupportError):
        autoregressive_loss(bundle(np.zeros((1, 4, 3)), 1, rel))


# ─────────────────────────────────────────────
# KL visual / textual
# ─────────────────────────────────────────────

def test_kl_identical_is_zero():
    for seed in range(IDENTITY_TRIALS):
        t, _ = random_pair(seed, B=1, L=4, c=3, m=2)
        for range_ in (VISUAL, TEXT):
            assert abs(kd_kl_loss(t, t, range_).item()) <= 1e-12, f"seed {seed}"


def test_kl_two_class_oracle():
    teacher = bundle([[[0.0, 0.0], [math.log(0.8), math.log(0.2)]]], 1, [[False, True]])
    student = bundle([[[0.0, 0.0], [0.0, 0.0]]], 1, [[False, True]])
    expected = 0.8 * math.log(1.6) + 0.2 * math.log(0.4)
    assert kd_kl_loss(teacher, student, TEXT).item() == pytest.approx(expected, rel=1e-9)
    assert expected == pytest.approx(0.1927, abs=1e-4)


def test_kl_nonnegative():
    for seed in range(1000):
        t, s = random_pair(seed, B=1, L=4, c=3, m=2)
        for range_ in (VISUAL, TEXT):
            assert kd_kl_loss(t, s, range_, temperature=0.5 + (seed % 20) / 10).item() >= 0.0


def test_kl_empty_range_is_zero():
    t, s = random_pair(1, m=0)
    assert kd_kl_loss(t, s, VISUAL).item() == 0.0


def test_kl_mask_mismatch():
    t, s = random_pair(2)
    other = LogitBundle(s.logits, s.m, ~s.relevance_mask, s.targets)
    with pytest.raises(MaskMismatchError):
        kd_kl_loss(t, other, TEXT)


# ─────────────────────────────────────────────
# Gram y coseno
# ─────────────────────────────────────────────

def test_gram_single_token():
    g = visual_gram(bundle([[[3.0, 4.0], [0.0, 0.0]]], 1))
    assert g.data.shape == (1, 1, 1)
    assert g.data[0, 0, 0] == pytest.approx(25.0)


def test_gram_orthonormal_is_identity():
    z = np.zeros((1, 4, 3))
    z[0, :3] = np.eye(3)
    g = visual_gram(bundle(z, 3))
    np.testing.assert_allclose(g.data[0], np.eye(3))


def test_gram_matches_triple_loop():
    z = np.random.default_rng(5).normal(size=(1, 4, 5))
    g = visual_gram(bundle(z, 3)).data[0]
    for i in range(3):
        for j in range(3):
            assert g[i, j] == pytest.approx(sum(z[0, i, k] * z[0, j, k] for k in range(5)))


def test_gram_requires_visual_tokens():
    with pytest.raises(NoVisualTokensError):
        visual_gram(bundle(np.zeros((1, 3, 2)), 0))


def test_cosine_identical_and_scaled():
    for seed in range(IDENTITY_TRIALS):
        t, _ = random_pair(seed, B=1, L=4, c=3, m=2)
        assert abs(visual_cosine_loss(t, t).item()) <= 1e-12, f"seed {seed}"
        scaled = t.with_logits(t.logits.data * 3.0)
        assert abs(visual_cosine_loss(t, scaled).item()) <= 1e-12, f"seed {seed}"


def test_cosine_orthogonal_grams():
    teacher = bundle([[[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]]], 2)
    student = bundle([[[0.0, 0.0], [0.0, 1.0], [0.0, 0.0]]], 2)
    assert visual_cosine_loss(teacher, student).item() == pytest.approx(1.0)


def test_cosine_range_and_symmetry():
    for seed in range(1000):
        t, s = random_pair(seed, B=1, L=4, c=3, m=2)
        a = visual_cosine_loss(t, s).item()
        b = visual_cosine_loss(s, t).item()
        assert 0.0 <= a <= 2.0
        assert a == pytest.approx(b, abs=1e-12)


def test_cosine_degenerate():
    t, _ = random_pair(6)
    zero = t.with_logits(np.zeros(t.shape))
    with pytest.raises(DegenerateVisualLogitsError):
        visual_cosine_loss(t, zero)


# ─────────────────────────────────────────────
# Posiciones enmascaradas
# ─────────────────────────────────────────────

def test_masked_positions_do_not_change_losses():
    for seed in range(5):
        t, s = random_pair(seed)
        noise = np.random.default_rng(seed + 50).normal(size=s.shape) * 10
        masked = ~s.relevance_mask[..., None]
        s2 = s.with_logits(s.logits.data + noise * masked)
        t2 = t.with_logits(t.logits.data + noise * masked)

        assert autoregressive_loss(s2).item() == autoregressive_loss(s).item()
        for range_ in (VISUAL, TEXT):
            assert kd_kl_loss(t2, s2, range_).item() == kd_kl_loss(t, s, range_).item()
        assert visual_cosine_loss(t2, s2).item() == visual_cosine_loss(t, s).item()


# ─────────────────────────────────────────────
# L_dft
# ─────────────────────────────────────────────

def test_dft_zero_weights_equals_autoregressive():
    t, s = random_pair(7)
    out = dft_loss(t, s, LossWeights(tau1=0.0, tau2=0.0, tau3=0.0))
    assert out.value() == autoregressive_loss(s).item()
    assert set(out.terms) == {"rg", "td", "vd", "vc"}


def test_dft_perfect_self_distillation_is_zero():
    ids = np.array([[0, 0, 1, 2, 3]])
    logits = np.zeros((1, 5, 4))
    logits[0, np.arange(4), ids[0, 1:]] = 1e3
    b = bundle(logits, 1, targets=one_hot(ids, 4))
    assert dft_loss(b, b, LossWeights()).value() == pytest.approx(0.0, abs=1e-9)


def test_dft_equals_sum_of_components():
    t, s = random_pair(8)
    w = LossWeights(tau1=0.5, tau2=2.0, tau3=1.5, temperature=2.0)
    expected = (
        autoregressive_loss(s).item()
        + 0.5 * kd_kl_loss(t, s, TEXT, 2.0).item()
        + 2.0 * kd_kl_loss(t, s, VISUAL, 2.0).item()
        + 1.5 * visual_cosine_loss(t, s).item()
    )
    assert dft_loss(t, s, w).value() == pytest.approx(expected, rel=1e-12)


def test_loss_weights_validate():
    with pytest.raises(ValueError):
        LossWeights(tau1=-1.0).validate()
    with pytest.raises(ValueError):
        LossWeights(temperature=0.0).validate()


# ─────────────────────────────────────────────
# Gradientes
# ─────────────────────────────────────────────

def _student_fn(t, s, which):
    def f(x: Tensor):
        sb = s.with_logits(x)
        if which == "rg":
            return autoregressive_loss(sb)
        if which == "vd":
            return kd_kl_loss(t, sb, VISUAL, 1.5)
        if which == "td":
            return kd_kl_loss(t, sb, TEXT, 0.7)
        if which == "vc":
            return visual_cosine_loss(t, sb)
        return dft_loss(t, sb, LossWeights()).total
    return f


@pytest.mark.parametrize("which", ["rg", "vd", "td", "vc", "dft"])
def test_loss_gradients(which):
    for seed in GRADIENT_BUNDLES:
        t, s = random_pair(seed, B=2, L=5, c=3, m=2)
        result = check_gradient(_student_fn(t, s, which), Tensor(s.logits.data))
        assert result.ok(1e-4), f"{which} (seed {seed}): error relativo {result.max_rel_error}"


def test_teacher_receives_no_gradient():
    t, s = random_pair(9)
    t = LogitBundle(Tensor(t.logits.data, requires_grad=True), t.m, t.relevance_mask, t.targets)
    s = LogitBundle(Tensor(s.logits.data, requires_grad=True), s.m, s.relevance_mask, s.targets)
    backward(dft_loss(t, s, LossWeights()).total)
    assert t.logits.grad is None
    assert s.logits.grad is not None

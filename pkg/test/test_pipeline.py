import math
from dataclasses import replace

import numpy as np
import pytest
from conftest import fast_steps, tier_checkpoint, tier_config

from autodiff import ops
from autodiff.tensor import Tensor, backward, constant
from losses.kd_losses import LossWeights
from model.tiny_vlm import TinyVlm, build_model
from pipeline.encoder_pretrain import EncoderPretrainConfig, pretrain_encoder
from pipeline.metrics import MetricRecord, MetricsLog
from pipeline.optimizer import AdamW, clip_grad_norm
from pipeline.schedule import lr_at, warmup_steps
from pipeline.steps import StepKind, default_step_config, run_step
from pipeline.training import DistillationStage, train_llavakd_stage, train_tinyllava
from utils.errors import NonFiniteError, StepOrderError, TeacherRequiredError


def _changed(a, b):
    return {n for n in a.tensors if not np.array_equal(a.tensors[n], b.tensors[n])}


# ─────────────────────────────────────────────
# Calendario
# ─────────────────────────────────────────────

def test_lr_schedule_landmarks():
    cfg = default_step_config("FT", peak_lr=1e-3, warmup_ratio=0.1)
    T = 100
    W = warmup_steps(T, cfg.warmup_ratio)
    assert W == 10
    assert lr_at(0, T, cfg) == 0.0
    assert lr_at(W, T, cfg) == pytest.approx(1e-3)
    assert lr_at(T, T, cfg) == pytest.approx(0.0, abs=1e-18)
    assert lr_at((W + T) / 2, T, cfg) == pytest.approx(5e-4)


def test_lr_schedule_is_continuous():
    cfg = default_step_config("PT", warmup_ratio=0.05)
    T = 400
    values = [lr_at(s, T, cfg) for s in range(T + 1)]
    jumps = np.abs(np.diff(values))
    assert jumps.max() < 2 * cfg.peak_lr / warmup_steps(T, cfg.warmup_ratio)


def test_lr_out_of_range():
    cfg = default_step_config("PT")
    with pytest.raises(ValueError):
        lr_at(11, 10, cfg)
    with pytest.raises(ValueError):
        lr_at(-1, 10, cfg)


@pytest.mark.parametrize("T, ratio", [(1, 0.1), (2, 0.1), (3, 0.5), (5, 1.0)])
def test_short_schedule_trains_at_least_one_step(T, ratio):
    cfg = default_step_config("FT", peak_lr=1e-3, warmup_ratio=ratio)
    assert warmup_steps(T, ratio) <= T - 1
    # Los pasos que se ejecutan son 0..T-1.
    values = [lr_at(s, T, cfg) for s in range(T)]
    assert max(values) == pytest.approx(cfg.peak_lr)
    assert lr_at(0, 1, cfg) == pytest.approx(cfg.peak_lr)


# ─────────────────────────────────────────────
# AdamW
# ─────────────────────────────────────────────

def test_zero_gradients_leave_parameters():
    w = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = AdamW({"w": w})
    opt.step({"w": np.zeros(2)}, lr=0.1)
    np.testing.assert_array_equal(w.data, [1.0, -2.0])


def test_one_step_descends_square():
    w = Tensor(np.array([1.0]), requires_grad=True)
    opt = AdamW({"w": w})
    backward(ops.sum(ops.mul(w, w)))
    opt.step(opt.collect_grads(), lr=0.01)
    assert w.data[0] < 1.0


def test_weight_decay_is_decoupled():
    w = Tensor(np.array([2.0]), requires_grad=True)
    opt = AdamW({"w": w}, weight_decay=0.5)
    opt.step({"w": np.zeros(1)}, lr=0.1)
    assert w.data[0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)


def test_linear_regression_converges():
    r = np.random.default_rng(0)
    X = r.normal(size=(10, 3))
    y = X @ np.array([[1.0], [-2.0], [0.5]]) + 0.3
    w = Tensor(np.zeros((3, 1)), requires_grad=True)
    b = Tensor(np.zeros(1), requires_grad=True)
    opt = AdamW({"w": w, "b": b})
    cfg = default_step_config("FT", peak_lr=0.1, warmup_ratio=0.05)

    def loss():
        diff = ops.sub(ops.add(ops.matmul(constant(X), w), b), constant(y))
        return ops.scale(ops.sum(ops.mul(diff, diff)), 1.0 / 10)

    first = loss().item()
    for step in range(200):
        w.grad = b.grad = None
        current = loss()
        backward(current)
        opt.step(opt.collect_grads(), lr_at(step, 200, cfg))
    assert loss().item() < 1e-3 * first


def test_optimizer_rejects_non_finite():
    w = Tensor(np.ones(2), requires_grad=True)
    opt = AdamW({"w": w})
    with pytest.raises(NonFiniteError) as e:
        opt.step({"w": np.array([np.nan, 0.0])}, lr=0.1)
    assert e.value.name == "w"
    with pytest.raises(KeyError):
        opt.step({"w": np.zeros(2), "frozen": np.zeros(2)}, lr=0.1)


def test_optimizer_ignores_frozen_tensors():
    frozen = Tensor(np.ones(2))
    opt = AdamW({"frozen": frozen, "w": Tensor(np.ones(2), requires_grad=True)})
    assert set(opt.params) == {"w"}
    assert set(opt.state.m) == {"w"}


def test_clip_grad_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    clipped, norm = clip_grad_norm(grads, 1.0)
    assert norm == pytest.approx(5.0)
    assert math.hypot(clipped["a"][0], clipped["b"][0]) == pytest.approx(1.0)
    same, _ = clip_grad_norm(grads, 10.0)
    assert same["a"][0] == 3.0


# ─────────────────────────────────────────────
# Pasos
# ─────────────────────────────────────────────

def test_pt_only_changes_connector(corpus):
    start = tier_checkpoint(corpus, "student", provenance=["encoder"])
    model = TinyVlm.from_checkpoint(start)
    out = run_step(model, None, fast_steps()[StepKind.PT], corpus, provenance=start.provenance)

    changed = _changed(start, out.checkpoint)
    assert changed
    assert all(n.startswith("connector.") for n in changed)
    assert out.checkpoint.provenance == ["encoder", "PT"]
    assert out.updates == 2


def test_ft_leaves_encoder_frozen(corpus):
    start = tier_checkpoint(corpus, "student")
    out = run_step(TinyVlm.from_checkpoint(start), None, fast_steps()[StepKind.FT], corpus)
    changed = _changed(start, out.checkpoint)
    assert not any(n.startswith("encoder.") for n in changed)
    assert any(n.startswith("head.") for n in changed)
    assert any(n.startswith("backbone.") for n in changed)


def test_distillation_steps_require_teacher(corpus):
    model = TinyVlm.from_checkpoint(tier_checkpoint(corpus, "student"))
    teacher = TinyVlm.from_checkpoint(tier_checkpoint(corpus, "assistant"))
    steps = fast_steps()
    with pytest.raises(TeacherRequiredError):
        run_step(model, None, steps[StepKind.DFT], corpus)
    with pytest.raises(TeacherRequiredError):
        run_step(model, teacher, steps[StepKind.FT], corpus)


def test_dft_without_kd_terms_equals_ft(corpus):
    start = tier_checkpoint(corpus, "student")
    teacher = TinyVlm.from_checkpoint(tier_checkpoint(corpus, "teacher"))
    steps = fast_steps(max_steps=3)
    dft = replace(steps[StepKind.DFT], loss_weights=LossWeights(tau1=0.0, tau2=0.0, tau3=0.0))

    ft_out = run_step(TinyVlm.from_checkpoint(start), None, steps[StepKind.FT], corpus)
    dft_out = run_step(TinyVlm.from_checkpoint(start), teacher, dft, corpus)

    assert ft_out.checkpoint.fingerprint() == dft_out.checkpoint.fingerprint()
    assert ft_out.metrics.curve("rg") == dft_out.metrics.curve("rg")
    assert dft_out.metrics.curve("td")


def test_teacher_is_not_modified(corpus):
    teacher_ckpt = tier_checkpoint(corpus, "assistant")
    teacher = TinyVlm.from_checkpoint(teacher_ckpt)
    model = TinyVlm.from_checkpoint(tier_checkpoint(corpus, "student"))
    run_step(model, teacher, fast_steps()[StepKind.DPT], corpus)
    assert teacher.to_checkpoint().fingerprint() == teacher_ckpt.fingerprint()


def test_metrics_record_every_term(corpus):
    model = TinyVlm.from_checkpoint(tier_checkpoint(corpus, "student"))
    teacher = TinyVlm.from_checkpoint(tier_checkpoint(corpus, "assistant"))
    out = run_step(model, teacher, fast_steps(max_steps=3)[StepKind.DFT], corpus)
    assert len(out.metrics) == 3
    for term in ("rg", "td", "vd", "vc"):
        assert len(out.metrics.curve(term)) == 3
    assert out.metrics.summary()["steps"] == 3


def test_overfit_four_examples(corpus):
    model = TinyVlm.from_checkpoint(tier_checkpoint(corpus, "student"))
    cfg = default_step_config("FT", peak_lr=1e-2, batch_size=4, epochs=500)
    out = run_step(model, None, cfg, corpus, examples=corpus.d2[:4])
    assert out.updates == 500
    assert out.metrics.curve()[-1] < 0.01


def test_step_config_validation():
    with pytest.raises(ValueError):
        default_step_config("FT", warmup_ratio=0.0)
    with pytest.raises(ValueError):
        default_step_config("FT", batch_size=0)
    cfg = default_step_config("DPT")
    assert cfg.needs_teacher and cfg.dataset == "D1"
    assert cfg.trainable_parts == frozenset({"connector"})
    assert default_step_config("SFT").trainable_parts == frozenset({"connector", "backbone", "head"})


# ─────────────────────────────────────────────
# Etapas
# ─────────────────────────────────────────────

def test_stage_enforces_step_order(corpus):
    student = TinyVlm.from_checkpoint(tier_checkpoint(corpus, "student"))
    teacher = TinyVlm.from_checkpoint(tier_checkpoint(corpus, "assistant"))
    stage = DistillationStage(student, teacher, corpus, fast_steps())
    with pytest.raises(StepOrderError):
        stage.run(StepKind.DFT)
    stage.run(StepKind.DPT)
    with pytest.raises(StepOrderError):
        stage.run(StepKind.DFT)
    stage.run(StepKind.SFT)
    stage.run(StepKind.DFT)
    assert stage.finished
    with pytest.raises(StepOrderError):
        stage.run(StepKind.DFT)


def test_distill_only_skips_sft(corpus):
    student = TinyVlm.from_checkpoint(tier_checkpoint(corpus, "student"))
    teacher = TinyVlm.from_checkpoint(tier_checkpoint(corpus, "assistant"))
    stage = DistillationStage(student, teacher, corpus, fast_steps(), distill_only=True)
    stage.run(StepKind.DPT)
    assert stage.expected == StepKind.DFT


def test_llavakd_stage_provenance(corpus):
    student = tier_checkpoint(corpus, "student", provenance=["encoder"])
    teacher = tier_checkpoint(corpus, "assistant")
    out = train_llavakd_stage(student, teacher, corpus, fast_steps(), label="stage1")
    assert out.checkpoint.provenance == ["encoder", "stage1/DPT", "stage1/SFT", "stage1/DFT"]
    assert out.updates == 6
    assert set(out.metrics) == {"DPT", "SFT", "DFT"}


def test_self_distillation_has_no_kd_signal(corpus):
    ckpt = tier_checkpoint(corpus, "student")
    out = train_llavakd_stage(ckpt, ckpt, corpus, fast_steps(max_steps=1), distill_only=True)
    # En el primer paso de DPT alumno y profesor son la misma red.
    assert out.metrics["DPT"].curve("td")[0] == pytest.approx(0.0, abs=1e-12)
    assert out.metrics["DPT"].curve("vd")[0] == pytest.approx(0.0, abs=1e-12)


def test_tinyllava_is_deterministic(corpus):
    cfg = tier_config(corpus, "student")
    encoder = build_model(cfg).to_checkpoint(["encoder"])
    a = train_tinyllava(cfg, corpus, encoder, fast_steps())
    b = train_tinyllava(cfg, corpus, encoder, fast_steps())
    assert a.checkpoint.fingerprint() == b.checkpoint.fingerprint()
    assert a.checkpoint.provenance == ["encoder", "PT", "FT"]


def test_tinyllava_requires_encoder(corpus):
    cfg = tier_config(corpus, "student")
    with pytest.raises(ValueError):
        train_tinyllava(cfg, corpus, build_model(cfg).to_checkpoint([]), fast_steps())


def test_encoder_pretraining_reduces_error(corpus):
    model = build_model(tier_config(corpus, "student"))
    out = pretrain_encoder(model, corpus, EncoderPretrainConfig(steps=60, batch_size=8, peak_lr=1e-2))
    assert out.loss_last < out.loss_first
    assert not model.trainable_parameters()


# ─────────────────────────────────────────────
# Métricas
# ─────────────────────────────────────────────

def test_metrics_write_and_read(tmp_path):
    log = MetricsLog("DFT")
    log.append(MetricRecord(step=0, lr=0.0, loss=1.5, rg=1.0, td=0.5), 0.01)
    log.append(MetricRecord(step=1, lr=1e-3, loss=1.2, rg=0.9, td=0.3), 0.02)
    path = log.write(tmp_path)
    (back,) = MetricsLog.read(path)
    assert back.records == log.records
    assert "vd" not in log.records[0].to_dict()
    assert (tmp_path / "timing.jsonl").read_text(encoding="utf-8").count("\n") == 2

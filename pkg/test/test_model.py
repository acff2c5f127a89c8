import numpy as np
import pytest
from conftest import tier_config

from autodiff.tensor import backward, no_grad
from data.batch import TokenBatch, one_hot, padding_batch
from losses.kd_losses import autoregressive_loss
from model.checkpoint import Checkpoint
from model.config import ModelConfig, parameter_count_for, validate_tier_ladder
from model.tiny_vlm import PARTS, TinyVlm, build_model, check_same_interface
from pipeline.optimizer import AdamW
from utils.errors import CheckpointError, IncompatibleModelsError, InvalidModelConfigError, ShapeError


def small_config(**over):
    base = dict(
        d_embed=8, vocab_size=16, max_seq=8, n_visual_tokens=3, n_layers=1, n_heads=2,
        d_hidden=8, capacity_tier="student", seed=0, d_vision_in=6,
    )
    base.update(over)
    return ModelConfig(**base)


def small_batch(cfg, seed=0, B=2, L=None):
    r = np.random.default_rng(seed)
    L = L or cfg.max_seq
    ids = r.integers(0, cfg.vocab_size, size=(B, L))
    return TokenBatch(
        patches=r.random((B, cfg.n_visual_tokens, cfg.d_vision_in)),
        token_ids=ids,
        targets=one_hot(ids, cfg.vocab_size),
        relevance_mask=np.ones((B, L), dtype=bool),
        m=cfg.n_visual_tokens,
    )


# ─────────────────────────────────────────────
# Config
# ─────────────────────────────────────────────

def test_invalid_config_lists_violations():
    with pytest.raises(InvalidModelConfigError) as e:
        small_config(n_heads=3, vocab_size=1, n_visual_tokens=8).validate()
    assert len(e.value.violations) == 3


def test_tier_ordering(corpus):
    configs = [tier_config(corpus, t) for t in ("student", "assistant", "teacher")]
    counts = [parameter_count_for(c) for c in configs]
    assert counts[0] < counts[1] < counts[2]
    validate_tier_ladder(configs)
    with pytest.raises(InvalidModelConfigError):
        validate_tier_ladder(configs[::-1])


def test_parameter_count_matches_model(corpus):
    cfg = tier_config(corpus, "assistant")
    assert build_model(cfg).parameter_count() == parameter_count_for(cfg)


# ─────────────────────────────────────────────
# Forward
# ─────────────────────────────────────────────

def test_build_is_deterministic():
    a, b = build_model(small_config()), build_model(small_config())
    for name, t in a.params.items():
        assert np.array_equal(t.data, b.params[name].data)
    c = build_model(small_config(seed=1))
    assert not np.array_equal(a.params["head.w"].data, c.params["head.w"].data)


def test_forward_shape_contract():
    cfg = small_config()
    out = build_model(cfg).forward(small_batch(cfg))
    assert out.shape == (2, 8, 16)
    assert out.m == 3


def test_forward_is_deterministic():
    cfg = small_config()
    model = build_model(cfg)
    batch = small_batch(cfg)
    with no_grad():
        assert np.array_equal(model(batch).logits.data, model(batch).logits.data)


def test_forward_rejects_long_sequence():
    cfg = small_config()
    with pytest.raises(ShapeError):
        build_model(cfg).forward(small_batch(cfg, L=9))


def test_forward_all_padding_batch(corpus):
    cfg = tier_config(corpus, "student")
    batch = padding_batch(3, cfg.n_visual_tokens, cfg.d_vision_in, corpus.vocab, cfg.max_seq)
    out = build_model(cfg).forward(batch)
    assert not out.relevance_mask.any()


def test_future_tokens_do_not_change_past_logits():
    cfg = small_config(n_layers=2)
    model = build_model(cfg)
    batch = small_batch(cfg, seed=3)
    ids = batch.token_ids.copy()
    ids[:, [5, 6]] = ids[:, [6, 5]]
    ids[:, 6] = (ids[:, 5] + 1) % cfg.vocab_size
    swapped = TokenBatch(batch.patches, ids, one_hot(ids, cfg.vocab_size), batch.relevance_mask, batch.m)

    with no_grad():
        a = model(batch).logits.data
        b = model(swapped).logits.data
    assert np.array_equal(a[:, :5], b[:, :5])
    assert not np.allclose(a[:, 5:], b[:, 5:])


# ─────────────────────────────────────────────
# Congelación
# ─────────────────────────────────────────────

def test_set_trainable_counts():
    model = build_model(small_config())
    model.set_trainable({"connector"})
    n = sum(t.size for t in model.trainable_parameters().values())
    assert n == model.parameter_count("connector")
    with pytest.raises(ValueError):
        model.set_trainable({"decoder"})


@pytest.mark.parametrize("parts", [{"connector"}, {"connector", "backbone"}])
def test_frozen_parts_bit_identical(parts):
    cfg = small_config()
    model = build_model(cfg)
    before = model.state_dict()
    model.set_trainable(parts)
    opt = AdamW(model.trainable_parameters())
    for step in range(3):
        backward(autoregressive_loss(model(small_batch(cfg, seed=step))))
        opt.step(opt.collect_grads(), 1e-2)
        model.zero_grad()

    after = model.state_dict()
    for name in before:
        part = name.split(".", 1)[0]
        if part in parts:
            continue
        assert np.array_equal(before[name], after[name]), name
    assert not np.array_equal(before["connector.w1"], after["connector.w1"])


# ─────────────────────────────────────────────
# Checkpoints
# ─────────────────────────────────────────────

def test_checkpoint_round_trip(tmp_path):
    model = build_model(small_config())
    ckpt = model.to_checkpoint(["encoder", "PT"])
    path = ckpt.save(tmp_path / "m.ckpt")
    back = Checkpoint.load(path)

    assert back.config == ckpt.config
    assert back.provenance == ["encoder", "PT"]
    assert back.fingerprint() == ckpt.fingerprint()
    for name, arr in ckpt.tensors.items():
        assert back.tensors[name].dtype == arr.dtype
        assert np.array_equal(back.tensors[name], arr)
    assert back.to_bytes() == path.read_bytes()


def test_checkpoint_float32_round_trip():
    ckpt = build_model(small_config(dtype="float32")).to_checkpoint()
    back = Checkpoint.from_bytes(ckpt.to_bytes())
    assert back.tensors["head.w"].dtype == np.float32
    assert back.fingerprint() == ckpt.fingerprint()


def test_checkpoint_bad_magic(tmp_path):
    raw = bytearray(build_model(small_config()).to_checkpoint().to_bytes())
    assert raw.startswith(b"TINYVLM-CKPT")
    raw[:4] = b"XXXX"
    with pytest.raises(CheckpointError):
        Checkpoint.from_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        Checkpoint.load(tmp_path / "missing.ckpt")


def test_fingerprint_ignores_provenance():
    ckpt = build_model(small_config()).to_checkpoint(["encoder"])
    assert ckpt.with_provenance("PT").fingerprint() == ckpt.fingerprint()


def test_build_with_pretrained_encoder():
    pre = build_model(small_config(seed=5)).to_checkpoint(["encoder"])
    model = build_model(small_config(seed=0), pretrained=pre)
    fresh = build_model(small_config(seed=0))
    assert np.array_equal(model.params["encoder.w1"].data, pre.tensors["encoder.w1"])
    assert np.array_equal(model.params["connector.w1"].data, fresh.params["connector.w1"].data)
    with pytest.raises(ValueError):
        build_model(small_config(), pretrained=pre, load_parts=("encoder", "connector"))


def test_from_checkpoint_restores_all_parts():
    ckpt = build_model(small_config(seed=9)).to_checkpoint()
    model = TinyVlm.from_checkpoint(ckpt)
    for part in PARTS:
        for name, t in model.named_parameters(part).items():
            assert np.array_equal(t.data, ckpt.tensors[name])


def test_incompatible_interfaces():
    with pytest.raises(IncompatibleModelsError):
        check_same_interface(small_config(), small_config(vocab_size=17))
    check_same_interface(small_config(), small_config(d_hidden=16, n_layers=2))

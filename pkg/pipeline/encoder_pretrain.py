from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor, backward, constant, current_tape
from data.corpus import Corpus
from model.tiny_vlm import TinyVlm
from pipeline.metrics import MetricRecord, MetricsLog
from pipeline.optimizer import AdamW, clip_grad_norm
from pipeline.schedule import lr_at

log = logging.getLogger(__name__)


@dataclass
class EncoderPretrainConfig:
    """
    Tarea proxy: reconstruir los parches desde la salida del encoder.
    """
    steps: int = 200
    batch_size: int = 32
    peak_lr: float = 1e-3
    warmup_ratio: float = 0.03
    seed: int = 0
    clip_norm: float = 1.0

    def validate(self) -> "EncoderPretrainConfig":
        if self.steps < 1 or self.batch_size < 1 or self.peak_lr <= 0:
            raise ValueError("steps ≥ 1, batch_size ≥ 1 y peak_lr > 0")
        if not 0.0 < self.warmup_ratio < 1.0:
            raise ValueError(f"warmup_ratio debe estar en (0, 1): {self.warmup_ratio}")
        return self


@dataclass
class EncoderPretrainResult:
    metrics: MetricsLog
    loss_first: float
    loss_last: float


def _train_scene_indices(corpus: Corpus) -> np.ndarray:
    used = sorted({ex.scene_index for ex in corpus.d1} | {ex.scene_index for ex in corpus.d2})
    return np.asarray(used, dtype=np.int64)


def pretrain_encoder(model: TinyVlm, corpus: Corpus, cfg: EncoderPretrainConfig) -> EncoderPretrainResult:
    """
    Entrena encoder + decodificador lineal desechable con error cuadrático medio.
    Al terminar el encoder queda congelado.
    """
    cfg.validate()
    model.set_trainable({"encoder"})

    d, P = model.config.d_embed, model.config.d_vision_in
    rng = np.random.default_rng([int(cfg.seed), 7])
    decoder = {
        "decoder.w": Tensor(rng.normal(0.0, 1.0 / math.sqrt(d), size=(d, P)).astype(model.config.dtype),
                            requires_grad=True, name="decoder.w"),
        "decoder.b": Tensor(np.zeros(P, dtype=model.config.dtype), requires_grad=True, name="decoder.b"),
    }
    params = {**model.trainable_parameters(), **decoder}
    opt = AdamW(params)
    scenes = _train_scene_indices(corpus)
    metrics = MetricsLog("encoder")

    for step in range(cfg.steps):
        t0 = time.perf_counter()
        current_tape().clear()
        lr = lr_at(step, cfg.steps, cfg)

        pick = rng.choice(scenes, size=min(cfg.batch_size, len(scenes)), replace=False)
        x = np.stack([corpus.patches(int(i)) for i in pick]).astype(model.config.dtype)

        z = model.encode(x)
        recon = ops.add(ops.matmul(z, decoder["decoder.w"]), decoder["decoder.b"])
        diff = ops.sub(recon, constant(x))
        loss = ops.scale(ops.sum(ops.mul(diff, diff)), 1.0 / x.size)

        backward(loss)
        grads, norm = clip_grad_norm(opt.collect_grads(), cfg.clip_norm)
        opt.step(grads, lr)
        for t in params.values():
            t.grad = None

        metrics.append(MetricRecord(step=step, lr=lr, loss=loss.item(), grad_norm=norm),
                       time.perf_counter() - t0)

    model.set_trainable(())
    curve = metrics.curve()
    log.info("Encoder %s: MSE %.5f → %.5f", model.config.capacity_tier, curve[0], curve[-1])
    return EncoderPretrainResult(metrics, curve[0], curve[-1])

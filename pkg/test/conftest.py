import numpy as np
import pytest

from data.corpus import CorpusConfig, build_corpus
from model.config import config_for_tier
from model.tiny_vlm import build_model
from pipeline.steps import StepKind, default_step_config

# Rejilla 2×2 con parches de 4 px: c=27, m=4, L=12, P=48
TINY_CORPUS = dict(
    n_caption_pairs=24,
    n_instruction_pairs=24,
    n_eval_per_split=6,
    grid_size=2,
    cell_px=4,
    min_objects=1,
    max_objects=2,
    train_seed=0,
    eval_seed=1,
)


@pytest.fixture(scope="session")
def corpus_config():
    return CorpusConfig(**TINY_CORPUS)


@pytest.fixture(scope="session")
def corpus(corpus_config):
    c = build_corpus(corpus_config)
    c.warm()
    return c


def tier_config(corpus, tier, seed=0):
    cfg = corpus.config
    return config_for_tier(
        tier,
        vocab_size=len(corpus.vocab),
        max_seq=cfg.seq_len,
        n_visual_tokens=cfg.m,
        d_vision_in=cfg.patch_dim,
        d_embed=8,
        seed=seed,
    )


def tier_checkpoint(corpus, tier, seed=0, provenance=("encoder", "PT", "FT")):
    return build_model(tier_config(corpus, tier, seed)).to_checkpoint(list(provenance))


def fast_steps(seed=0, max_steps=2, batch_size=8):
    return {
        k: default_step_config(k, seed, max_steps=max_steps, batch_size=batch_size)
        for k in StepKind
    }


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

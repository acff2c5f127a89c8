from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List

from data.corpus import Corpus, CorpusConfig
from data.pairs import EVAL_SPLITS, Example
from data.scene_simulator import SceneObject, SceneSpec
from data.vocab import Vocab


class JsonlCorpusStorage:
    """
    Exporta/importa un corpus como registros JSON por línea
    (config, escenas, ejemplos con ids de token). Los parches se re-renderizan.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def save(self, corpus: Corpus) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", encoding="utf-8") as f:
            self._write(f, {"type": "config", "config": asdict(corpus.config), "vocab": corpus.vocab.tokens})

            for i, s in enumerate(corpus.scenes):
                self._write(f, {
                    "type": "scene",
                    "index": i,
                    "grid_size": s.grid_size,
                    "seed": s.seed,
                    "objects": [[o.shape, o.color, o.cell] for o in s.objects],
                })

            sets = [("D1", corpus.d1), ("D2", corpus.d2)]
            sets += [(f"eval:{name}", corpus.eval_splits[name]) for name in EVAL_SPLITS]
            for set_name, examples in sets:
                for ex in examples:
                    self._write(f, {
                        "type": "example",
                        "set": set_name,
                        "scene_index": ex.scene_index,
                        "kind": ex.kind,
                        "tier": ex.tier,
                        "token_ids": corpus.vocab.ids(ex.text),
                        "relevant": [int(r) for r in ex.relevant],
                        "answer": ex.answer,
                    })

    def load(self) -> Corpus:
        if not self.path.exists():
            raise FileNotFoundError(f"No existe el corpus: {self.path}")

        cfg: CorpusConfig | None = None
        vocab: Vocab | None = None
        scenes: List[SceneSpec] = []
        sets: Dict[str, List[Example]] = {}

        with open(self.path, "r", encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                rec = json.loads(line)
                kind = rec["type"]
                if kind == "config":
                    cfg = CorpusConfig(**rec["config"])
                    vocab = Vocab(list(rec["vocab"]))
                elif kind == "scene":
                    scenes.append(SceneSpec(
                        grid_size=int(rec["grid_size"]),
                        objects=tuple(SceneObject(shape=o[0], color=o[1], cell=int(o[2])) for o in rec["objects"]),
                        seed=int(rec["seed"]),
                    ))
                elif kind == "example":
                    if vocab is None:
                        raise ValueError("Registro de ejemplo antes de la configuración")
                    sets.setdefault(rec["set"], []).append(Example(
                        scene_index=int(rec["scene_index"]),
                        kind=rec["kind"],
                        tier=rec["tier"],
                        text=tuple(vocab.decode(rec["token_ids"])),
                        relevant=tuple(bool(r) for r in rec["relevant"]),
                        answer=rec["answer"],
                    ))

        if cfg is None or vocab is None:
            raise ValueError(f"Corpus sin registro de configuración: {self.path}")

        return Corpus(
            config=cfg,
            vocab=vocab,
            scenes=scenes,
            d1=sets.get("D1", []),
            d2=sets.get("D2", []),
            eval_splits={name: sets.get(f"eval:{name}", []) for name in EVAL_SPLITS},
        )

    @staticmethod
    def _write(f, record: dict) -> None:
        f.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")

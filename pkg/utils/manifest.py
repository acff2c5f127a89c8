from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional


def git_blob_hash(data: bytes) -> str:
    """
    Igual que `git hash-object`: sha1("blob <len>\\0" + datos).
    """
    h = hashlib.sha1()
    h.update(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def file_hash(path: str | Path) -> str:
    return git_blob_hash(Path(path).read_bytes())


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config: Dict[str, Any]
    seed: Optional[int]
    inputs: Dict[str, str] = field(default_factory=dict)
    content_hash: str = ""
    started_at: str = ""
    finished_at: str = ""
    outputs: List[str] = field(default_factory=list)

    @classmethod
    def start(cls, command: str, config: Dict[str, Any], seed: Optional[int],
              inputs: Dict[str, str] | None = None) -> "RunManifest":
        m = cls(command, config, seed, dict(inputs or {}), started_at=_now())
        m.content_hash = git_blob_hash(canonical_json({
            "command": command, "config": config, "seed": seed, "inputs": m.inputs,
        }))
        return m

    def add_output(self, path: str | Path) -> None:
        self.outputs.append(str(path))

    def finish(self) -> "RunManifest":
        self.finished_at = _now()
        return self

    def write(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "manifest.json"
        with open(path, "w", encoding="utf-8") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True)
        return path

    @classmethod
    def read(cls, path: str | Path) -> "RunManifest":
        with open(path, "r", encoding="utf-8") as f:
            return cls(**json.load(f))

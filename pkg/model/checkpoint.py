from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from model.config import ModelConfig
from utils.errors import CheckpointError

# ─────────────────────────────────────────────
# Formato binario (little endian)
# ─────────────────────────────────────────────
#
#   header   "<12sII"  magic, versión, longitud del bloque de config
#   config   JSON UTF-8 {config, provenance, format_version}
#   count    "<I"
#   tabla    por tensor: "<H" len(nombre), nombre, "<BB" dtype/ndim,
#            "<{ndim}I" dims, "<QQ" offset/nbytes (offset desde el inicio de los datos)
#   datos    payloads crudos, en el orden de la tabla

MAGIC = b"TINYVLM-CKPT"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<12sII")
_COUNT = struct.Struct("<I")
_NAME_LEN = struct.Struct("<H")
_DTYPE_NDIM = struct.Struct("<BB")
_SPAN = struct.Struct("<QQ")

DTYPE_CODES = {"float64": 1, "float32": 2}
_CODE_DTYPES = {v: k for k, v in DTYPE_CODES.items()}


@dataclass
class Checkpoint:
    """
    Artefacto inmutable: config + tensores con nombre + historial de pasos.
    """
    config: ModelConfig
    tensors: Dict[str, np.ndarray]
    provenance: List[str] = field(default_factory=list)
    format_version: int = FORMAT_VERSION

    @property
    def tag(self) -> str:
        return self.provenance[-1] if self.provenance else ""

    def with_provenance(self, tag: str) -> "Checkpoint":
        return Checkpoint(self.config, self.tensors, self.provenance + [tag], self.format_version)

    def parameter_count(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    # ─────────────────────────────────────────────
    # Huella
    # ─────────────────────────────────────────────

    def fingerprint(self) -> str:
        """
        sha256 de la config y de los payloads (no del historial).
        """
        h = hashlib.sha256()
        h.update(json.dumps(self.config.to_dict(), sort_keys=True).encode("utf-8"))
        for name in sorted(self.tensors):
            arr = self.tensors[name]
            h.update(name.encode("utf-8"))
            h.update(str(arr.shape).encode("ascii"))
            h.update(_le(arr).tobytes())
        return h.hexdigest()

    # ─────────────────────────────────────────────
    # Serialización
    # ─────────────────────────────────────────────

    def to_bytes(self) -> bytes:
        block = json.dumps(
            {
                "config": self.config.to_dict(),
                "provenance": list(self.provenance),
                "format_version": self.format_version,
            },
            sort_keys=True,
        ).encode("utf-8")

        out = bytearray(_HEADER.pack(MAGIC, self.format_version, len(block)))
        out += block
        out += _COUNT.pack(len(self.tensors))

        payloads: List[bytes] = []
        offset = 0
        for name, arr in self.tensors.items():
            dtype = str(arr.dtype)
            if dtype not in DTYPE_CODES:
                raise CheckpointError(f"dtype no soportado en '{name}': {dtype}")
            raw = _le(arr).tobytes()
            encoded = name.encode("utf-8")
            out += _NAME_LEN.pack(len(encoded))
            out += encoded
            out += _DTYPE_NDIM.pack(DTYPE_CODES[dtype], arr.ndim)
            out += struct.pack(f"<{arr.ndim}I", *arr.shape)
            out += _SPAN.pack(offset, len(raw))
            payloads.append(raw)
            offset += len(raw)

        for raw in payloads:
            out += raw
        return bytes(out)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "Checkpoint":
        if len(buf) < _HEADER.size:
            raise CheckpointError("Checkpoint truncado: cabecera incompleta")
        magic, version, block_len = _HEADER.unpack_from(buf, 0)
        if magic != MAGIC:
            raise CheckpointError(f"Magic inválido: {magic!r}")
        if version != FORMAT_VERSION:
            raise CheckpointError(f"Versión de formato no soportada: {version}")

        pos = _HEADER.size
        try:
            block = json.loads(buf[pos:pos + block_len].decode("utf-8"))
            config = ModelConfig.from_dict(block["config"])
        except (ValueError, KeyError, TypeError) as e:
            raise CheckpointError(f"Bloque de configuración ilegible: {e}") from e
        pos += block_len

        (count,) = _COUNT.unpack_from(buf, pos)
        pos += _COUNT.size

        table: List[Tuple[str, str, tuple, int, int]] = []
        try:
            for _ in range(count):
                (name_len,) = _NAME_LEN.unpack_from(buf, pos)
                pos += _NAME_LEN.size
                name = buf[pos:pos + name_len].decode("utf-8")
                pos += name_len
                code, ndim = _DTYPE_NDIM.unpack_from(buf, pos)
                pos += _DTYPE_NDIM.size
                dims = struct.unpack_from(f"<{ndim}I", buf, pos)
                pos += 4 * ndim
                offset, nbytes = _SPAN.unpack_from(buf, pos)
                pos += _SPAN.size
                if code not in _CODE_DTYPES:
                    raise CheckpointError(f"Código de dtype desconocido en '{name}': {code}")
                table.append((name, _CODE_DTYPES[code], tuple(dims), offset, nbytes))
        except struct.error as e:
            raise CheckpointError(f"Tabla de tensores truncada: {e}") from e

        data_start = pos
        tensors: Dict[str, np.ndarray] = {}
        for name, dtype, dims, offset, nbytes in table:
            start = data_start + offset
            if start + nbytes > len(buf):
                raise CheckpointError(f"Payload truncado en '{name}'")
            le = np.dtype(dtype).newbyteorder("<")
            arr = np.frombuffer(buf, dtype=le, count=nbytes // le.itemsize, offset=start)
            tensors[name] = arr.astype(dtype).reshape(dims)

        return cls(config, tensors, list(block.get("provenance", [])), int(version))

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        path = Path(path)
        if not path.exists():
            raise CheckpointError(f"No existe el checkpoint: {path}")
        return cls.from_bytes(path.read_bytes())


def _le(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))

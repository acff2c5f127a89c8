from __future__ import annotations

import dataclasses
import json
import typing
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Type, TypeVar

from utils.errors import ConfigError

T = TypeVar("T")

# Claves de un paso que un fichero puede cambiar.
STEP_OVERRIDE_KEYS = {
    "peak_lr": float,
    "batch_size": int,
    "epochs": int,
    "warmup_ratio": float,
    "weight_decay": float,
    "clip_norm": float,
    "max_steps": int,
}


# ─────────────────────────────────────────────
# Conversión tipada dict → dataclass
# ─────────────────────────────────────────────

def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _convert(value: Any, tp: Any, path: str) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)

    if tp is Any:
        return value
    if origin is typing.Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(value, inner[0], path)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(path, "se esperaba un objeto")
        return from_dict(tp, value, path)
    if isinstance(tp, type) and issubclass(tp, Enum):
        try:
            return tp(value)
        except ValueError:
            raise ConfigError(path, f"valor inválido {value!r} (usa {[e.value for e in tp]})") from None
    if origin in (list, tuple) or tp in (list, tuple):
        if not isinstance(value, list):
            raise ConfigError(path, "se esperaba una lista")
        item = args[0] if args else Any
        return [_convert(v, item, f"{path}[{i}]") for i, v in enumerate(value)]
    if origin is dict or tp is dict:
        if not isinstance(value, dict):
            raise ConfigError(path, "se esperaba un objeto")
        vt = args[1] if len(args) == 2 else Any
        return {str(k): _convert(v, vt, _join(path, str(k))) for k, v in value.items()}
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"se esperaba un booleano, no {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"se esperaba un entero, no {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"se esperaba un número, no {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"se esperaba un texto, no {value!r}")
        return value
    return value


def from_dict(cls: Type[T], raw: Dict[str, Any], path: str = "", required: typing.Iterable[str] = ()) -> T:
    """
    Construye `cls` desde un dict JSON; claves desconocidas, ausentes o mal tipadas
    producen ConfigError con la ruta completa (p. ej. `corpus.grid_size`).
    """
    if not isinstance(raw, dict):
        raise ConfigError(path or "<raíz>", "se esperaba un objeto")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init}

    unknown = set(raw) - set(fields)
    if unknown:
        raise ConfigError(_join(path, sorted(unknown)[0]), "clave desconocida")
    for key in required:
        if key not in raw:
            raise ConfigError(_join(path, key), "falta la sección obligatoria")

    kwargs = {}
    for name, f in fields.items():
        if name in raw:
            kwargs[name] = _convert(raw[name], hints[name], _join(path, name))
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(_join(path, name), "falta la clave obligatoria")

    try:
        obj = cls(**kwargs)
        validate = getattr(obj, "validate", None)
        if callable(validate):
            validate()
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as e:
        raise ConfigError(path or cls.__name__, str(e)) from e
    return obj


def to_dict(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.init}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, dict):
        return {str(k): to_dict(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_dict(v) for v in obj]
    return obj


def check_step_overrides(steps: Dict[str, dict], path: str) -> None:
    for kind, over in steps.items():
        if not isinstance(over, dict):
            raise ConfigError(_join(path, kind), "se esperaba un objeto")
        for key, value in over.items():
            if key not in STEP_OVERRIDE_KEYS:
                raise ConfigError(_join(_join(path, kind), key), "clave desconocida")
            _convert(value, STEP_OVERRIDE_KEYS[key], _join(_join(path, kind), key))


# ─────────────────────────────────────────────
# Almacenamiento JSON
# ─────────────────────────────────────────────

class JsonConfigStorage:
    def __init__(self, path: str | Path):
        self.path = Path(path)

    def load_raw(self) -> Dict[str, Any]:
        if not self.path.exists():
            raise ConfigError(str(self.path), "el fichero no existe")
        try:
            with open(self.path, "r", encoding="utf-8") as f:
                raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(str(self.path), f"JSON inválido (línea {e.lineno})") from e
        if not isinstance(raw, dict):
            raise ConfigError("<raíz>", "se esperaba un objeto")
        return raw

    def load(self, cls: Type[T], required: typing.Iterable[str] = ()) -> T:
        return from_dict(cls, self.load_raw(), "", required)

    def load_experiment(self):
        from cascade.experiment import ExperimentConfig

        raw = self.load_raw()
        check_step_overrides(raw.get("steps", {}) or {}, "steps")
        return from_dict(ExperimentConfig, raw, "", required=("corpus",))

    def load_plan(self):
        from cascade.experiment import PlanFile

        raw = self.load_raw()
        exp = raw.get("experiment")
        if isinstance(exp, str):
            raw = dict(raw)
            raw["experiment"] = JsonConfigStorage(self.path.parent / exp).load_raw()
        if isinstance(raw.get("experiment"), dict):
            check_step_overrides(raw["experiment"].get("steps", {}) or {}, "experiment.steps")
        for stage, steps in (raw.get("stage_overrides") or {}).items():
            check_step_overrides(steps, f"stage_overrides.{stage}")
        plan = from_dict(PlanFile, raw, "", required=("strategy", "experiment"))
        plan.base_dir = self.path.parent
        return plan

    def load_sweep(self):
        from bounds.sweep import SweepSpec

        return from_dict(SweepSpec, self.load_raw(), "", required=("axes",))

    def save(self, obj: Any) -> Path:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "w", encoding="utf-8") as f:
            json.dump(to_dict(obj), f, indent=2, sort_keys=True)
        return self.path

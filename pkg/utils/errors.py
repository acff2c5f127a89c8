from __future__ import annotations

from typing import Iterable, Sequence


class LabError(Exception):
    """
    Raíz de todos los errores del laboratorio.
    """


# ─────────────────────────────────────────────
# Configuración
# ─────────────────────────────────────────────

class ConfigError(LabError, ValueError):
    def __init__(self, key_path: str, message: str):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}")


class InvalidModelConfigError(ConfigError):
    """
    Lista todos los invariantes violados de un ModelConfig.
    """

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("model", "; ".join(self.violations))


# ─────────────────────────────────────────────
# Kernel numérico
# ─────────────────────────────────────────────

class ShapeError(LabError, ValueError):
    def __init__(self, op: str, dims: Iterable, message: str = "formas incompatibles"):
        self.op = op
        self.dims = [tuple(d) if isinstance(d, (tuple, list)) else d for d in dims]
        super().__init__(f"{op}: {message} {self.dims}")


class NonFiniteError(LabError, ArithmeticError):
    def __init__(self, name: str, message: str = "valor no finito"):
        self.name = name
        super().__init__(f"{message} en '{name}'")


# ─────────────────────────────────────────────
# Pérdidas
# ─────────────────────────────────────────────

class EmptyLossSupportError(LabError, ValueError):
    pass


class NoVisualTokensError(LabError, ValueError):
    pass


class DegenerateVisualLogitsError(LabError, ArithmeticError):
    pass


class MaskMismatchError(LabError, ValueError):
    pass


# ─────────────────────────────────────────────
# Entrenamiento y cascada
# ─────────────────────────────────────────────

class TeacherRequiredError(LabError, ValueError):
    pass


class StepOrderError(LabError, RuntimeError):
    pass


class IncompatibleModelsError(LabError, ValueError):
    pass


class LadderOrderError(LabError, ValueError):
    pass


class CheckpointError(LabError, IOError):
    pass


class BoundDomainError(LabError, ValueError):
    pass


class TeacherMutatedError(LabError, RuntimeError):
    pass


# ─────────────────────────────────────────────
# Evaluación e informes
# ─────────────────────────────────────────────

class InconsistentSplitsError(LabError, ValueError):
    pass


class ReportError(LabError, IOError):
    pass

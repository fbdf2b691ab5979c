"""Jerarquía de errores del simulador.

Cada clase lleva el código de salida que la CLI devuelve cuando el error
escapa de un pipeline.
"""


class RwoggError(Exception):
    """Error base del paquete."""

    exit_code: int = 2


class ConfigError(RwoggError):
    """Configuración o parámetros inválidos."""

    exit_code = 2


class DescriptorError(ConfigError):
    """Descriptor de familia o de schedule mal formado."""


class ScheduleError(ConfigError):
    """Schedule inválido o no evaluable."""


class ScheduleIndexError(ScheduleError, IndexError):
    """Fase fuera de la lista explícita."""


class UnsupportedScheduleError(ConfigError):
    """Forma de schedule que el clasificador no sabe decidir."""


class FamilyError(ConfigError):
    """Parámetros de familia fuera de sus restricciones."""


class EmbeddingError(ConfigError):
    pass


class DimensionError(ConfigError):
    pass


class LumpingError(ConfigError):
    """La familia no admite proyección exacta."""


class BoundsUndefinedError(ConfigError):
    pass


class NoBoundError(ConfigError):
    pass


class PrefixOrderError(ConfigError):
    """f no crece más rápido que g en el horizonte pedido."""


class CouplingPreconditionError(ConfigError):
    pass


class UnsupportedCouplingError(ConfigError):
    pass


class HorizonError(RwoggError):
    """El horizonte supera la línea de tiempo computable."""

    exit_code = 2


class StateCapError(RwoggError):
    """Espacio de estados por encima del límite configurado."""

    exit_code = 3


class ConvergenceError(RwoggError):
    exit_code = 3


class VerificationError(RwoggError):
    """Falla una verificación de dominancia o de acoplamiento."""

    exit_code = 1


def exit_code_for(error: BaseException) -> int:
    """Código de salida para cualquier excepción."""
    if isinstance(error, RwoggError):
        return error.exit_code
    if isinstance(error, (ValueError, KeyError, FileNotFoundError)):
        return 2
    return 1

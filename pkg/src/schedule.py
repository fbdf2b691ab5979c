"""Schedules de duración d(n), la línea temporal T_n y las familias simbólicas.

La fase n cubre las transiciones en t dentro de [T_{n-1}, T_n); una fase de
duración 0 se salta. Las familias simbólicas usan el logaritmo natural y, por
defecto, el redondeo de Python (empates al par).
"""

import bisect
import math
import threading
from enum import Enum
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.errors import HorizonError, ScheduleError, ScheduleIndexError

Duration = Union[int, float]


class Rounding(str, Enum):
    NEAREST = "nearest"
    CEIL = "ceil"


class ScheduleKind(str, Enum):
    EXPLICIT = "explicit"
    SYMBOLIC = "symbolic"


class ScheduleLimit(BaseModel):
    """Comportamiento de d(n) cuando n tiende a infinito."""

    model_config = ConfigDict(frozen=True)

    kind: str = Field(description="'zero', 'constant' o 'infinite'")
    value: Optional[int] = Field(default=None, description="Valor final si es constante")


class SymbolicScheduleFamily(BaseModel):
    """d(n) = rnd(c * base^n / (n^a (ln n)^b)) para n >= 2, d(1) = d1."""

    model_config = ConfigDict(frozen=True)

    base: float = Field(gt=0, description="Base geométrica")
    a: float = Field(default=0.0, description="Exponente polinómico")
    b: float = Field(default=0.0, description="Exponente logarítmico")
    d1: int = Field(default=1, ge=0, description="Valor explícito en n = 1")
    c: float = Field(default=1.0, gt=0, description="Escala")
    rounding: Rounding = Field(default=Rounding.NEAREST)

    def log_value(self, n: int) -> float:
        return (
            math.log(self.c)
            + n * math.log(self.base)
            - self.a * math.log(n)
            - self.b * math.log(math.log(n))
        )

    def evaluate(self, n: int) -> int:
        if n < 1:
            raise ScheduleError(f"fase inválida n={n}: debe ser >= 1")
        if n == 1:
            return self.d1
        log_value = self.log_value(n)
        if log_value > 700.0:
            raise ScheduleError(f"d({n}) desborda la precisión doble (ln d = {log_value:.1f})")
        return self._round(math.exp(log_value))

    def _round(self, value: float) -> int:
        if self.rounding == Rounding.CEIL:
            # exp(ln x) puede dejar 2.0000000000000004 para x = 2
            nearest = round(value)
            if math.isclose(value, nearest, rel_tol=1e-12):
                return max(0, nearest)
            return max(0, math.ceil(value))
        return max(0, round(value))

    def limit(self) -> ScheduleLimit:
        # signo del exponente dominante: primero base, luego a, luego b
        growth = _dominant_sign(math.log(self.base), -self.a, -self.b)
        if growth > 0:
            return ScheduleLimit(kind="infinite")
        if growth < 0:
            eventual = 1 if self.rounding == Rounding.CEIL else 0
            return ScheduleLimit(kind="constant" if eventual else "zero", value=eventual)
        # mismo redondeo que evaluate(): d(n) = rnd(exp(ln c)) para todo n >= 2
        eventual = self._round(math.exp(math.log(self.c)))
        return ScheduleLimit(kind="constant" if eventual else "zero", value=eventual)

    def describe(self) -> str:
        parts = [f"base={_fmt(self.base)}", f"a={_fmt(self.a)}", f"b={_fmt(self.b)}", f"d1={self.d1}"]
        if self.c != 1.0:
            parts.append(f"c={_fmt(self.c)}")
        if self.rounding != Rounding.NEAREST:
            parts.append(f"round={self.rounding.value}")
        return "symbolic:" + ",".join(parts)


class DurationSchedule(BaseModel):
    """Schedule explícito (lista finita, con cola simbólica o fase final infinita) o simbólico."""

    model_config = ConfigDict(frozen=True)

    kind: ScheduleKind
    values: Tuple[int, ...] = Field(default=(), description="Duraciones explícitas d(1), d(2), ...")
    family: Optional[SymbolicScheduleFamily] = Field(
        default=None, description="Familia simbólica (o cola de la lista explícita)"
    )
    unbounded_final: bool = Field(
        default=False, description="La lista termina en 'inf': la fase len+1 no acaba nunca"
    )
    name: str = ""

    @classmethod
    def explicit(cls, values, tail: Optional[SymbolicScheduleFamily] = None, unbounded_final: bool = False):
        values = tuple(int(v) for v in values)
        if any(v < 0 for v in values):
            raise ScheduleError(f"duraciones negativas en {values}")
        if tail is not None and unbounded_final:
            raise ScheduleError("una lista con 'inf' no admite cola simbólica")
        schedule = cls(kind=ScheduleKind.EXPLICIT, values=values, family=tail, unbounded_final=unbounded_final)
        return schedule.model_copy(update={"name": schedule.describe()})

    @classmethod
    def symbolic(cls, family: SymbolicScheduleFamily):
        schedule = cls(kind=ScheduleKind.SYMBOLIC, family=family)
        return schedule.model_copy(update={"name": schedule.describe()})

    @property
    def is_finite_list(self) -> bool:
        """Lista explícita sin cola: se agota."""
        return self.kind == ScheduleKind.EXPLICIT and self.family is None

    @property
    def has_symbolic_tail(self) -> bool:
        return self.family is not None

    def describe(self) -> str:
        if self.kind == ScheduleKind.SYMBOLIC:
            return self.family.describe()
        tokens = [str(v) for v in self.values]
        if self.unbounded_final:
            tokens.append("inf")
        text = "explicit:" + ",".join(tokens)
        if self.family is not None:
            text += "|" + self.family.describe()
        return text

    def timeline(self, max_phases: int = 100_000) -> "PhaseTimeline":
        return PhaseTimeline(self, max_phases=max_phases)


def eval_duration(s: DurationSchedule, n: int) -> Duration:
    """Devuelve d(n). Una fase final 'inf' devuelve math.inf."""
    if n < 1:
        raise ScheduleError(f"fase inválida n={n}: debe ser >= 1")
    if s.kind == ScheduleKind.SYMBOLIC:
        return s.family.evaluate(n)
    if n <= len(s.values):
        return s.values[n - 1]
    if s.unbounded_final and n == len(s.values) + 1:
        return math.inf
    if s.family is not None:
        return s.family.evaluate(n)
    raise ScheduleIndexError(f"fase {n} fuera de la lista explícita de longitud {len(s.values)}")


class PhaseTimeline:
    """Sumas acumuladas T_n calculadas bajo demanda y cacheadas.

    La caché crece bajo un lock; los valores ya calculados nunca cambian.
    """

    def __init__(self, schedule: DurationSchedule, max_phases: int = 100_000):
        self.schedule = schedule
        self.max_phases = max_phases
        self._cumulative: List[Duration] = [0]
        self._lock = threading.Lock()
        self._complete = False

    @property
    def last_phase(self) -> Optional[int]:
        """Última fase definida, o None si el schedule no se agota."""
        s = self.schedule
        if s.kind == ScheduleKind.SYMBOLIC or s.family is not None:
            return None
        return len(s.values) + (1 if s.unbounded_final else 0)

    def _extend_to_phase(self, n: int) -> None:
        with self._lock:
            while len(self._cumulative) <= n:
                k = len(self._cumulative)
                if k > self.max_phases:
                    raise HorizonError(f"se superó el máximo de {self.max_phases} fases")
                self._cumulative.append(self._cumulative[-1] + eval_duration(self.schedule, k))

    def _extend_past_time(self, t: int) -> bool:
        """Extiende hasta que T_n > t. Devuelve False si el schedule se agota antes."""
        last = self.last_phase
        with self._lock:
            while self._cumulative[-1] <= t:
                k = len(self._cumulative)
                if last is not None and k > last:
                    return False
                if k > self.max_phases:
                    raise HorizonError(
                        f"t={t} no alcanzable en {self.max_phases} fases (¿duraciones nulas?)"
                    )
                self._cumulative.append(self._cumulative[-1] + eval_duration(self.schedule, k))
        return True

    def T(self, n: int) -> Duration:
        if n < 0:
            raise ScheduleError(f"T_{n} no definido")
        self._extend_to_phase(n)
        return self._cumulative[n]

    def phase_of(self, t: int, hold: bool = False) -> int:
        """Menor n con t < T_n. Con hold=True un schedule agotado mantiene su última fase."""
        if t < 0:
            raise HorizonError(f"tiempo negativo t={t}")
        if not self._extend_past_time(t):
            if hold:
                return self.last_phase
            raise HorizonError(f"t={t} supera el horizonte del schedule (T={self._cumulative[-1]})")
        return bisect.bisect_right(self._cumulative, t)

    def phase_array(self, horizon: int, hold: bool = False) -> np.ndarray:
        """Fase que gobierna cada transición t -> t+1 para t = 0..horizon-1."""
        if horizon <= 0:
            return np.zeros(0, dtype=np.int64)
        exhausted = not self._extend_past_time(horizon - 1)
        if exhausted and not hold:
            raise HorizonError(f"horizonte {horizon} supera el schedule (T={self._cumulative[-1]})")
        cumulative = np.asarray(self._cumulative, dtype=float)
        phases = np.searchsorted(cumulative, np.arange(horizon), side="right")
        if exhausted:
            phases = np.minimum(phases, self.last_phase)
        return phases.astype(np.int64)

    def exhausted_before(self, horizon: int) -> bool:
        """True si el schedule se agota antes de cubrir las transiciones 0..horizon-1."""
        if horizon <= 0:
            return False
        return not self._extend_past_time(horizon - 1)

    def boundaries(self, horizon: int) -> List[Tuple[int, Duration]]:
        """Pares (n, T_n) con T_n <= horizon ya alcanzados."""
        self._extend_past_time(horizon)
        return [(n, T) for n, T in enumerate(self._cumulative) if n >= 1 and T <= horizon]


def phase_of(tl: PhaseTimeline, t: int) -> int:
    return tl.phase_of(t)


def prefix_dominates(f: DurationSchedule, g: DurationSchedule, horizon: int) -> bool:
    """True si sum_{i<=n} f(i) <= sum_{i<=n} g(i) para todo n <= horizon."""
    total_f: Duration = 0
    total_g: Duration = 0
    for n in range(1, horizon + 1):
        total_f += eval_duration(f, n)
        total_g += eval_duration(g, n)
        if total_f > total_g:
            return False
    return True


def timelines_ordered(f: DurationSchedule, g: DurationSchedule, horizon: int, max_phases: int = 100_000) -> bool:
    """f crece al menos tan rápido como g en cada transición t < horizon.

    Con listas agotadas se mantiene la última fase, igual que el motor.
    """
    phases_f = f.timeline(max_phases).phase_array(horizon, hold=True)
    phases_g = g.timeline(max_phases).phase_array(horizon, hold=True)
    return bool(np.all(phases_f >= phases_g))


def _dominant_sign(*terms: float) -> int:
    for term in terms:
        if math.isclose(term, 0.0, abs_tol=1e-12):
            continue
        return 1 if term > 0 else -1
    return 0


def _fmt(x: float) -> str:
    return f"{x:g}"

"""Evolución por fases de un paseo aleatorio sobre un grafo creciente.

Las transiciones en t dentro de [T_{n-1}, T_n) usan P(n); en cada frontera de
fase la distribución se eleva al nivel siguiente. La evolución exacta es la
referencia y Monte Carlo sirve de validación cruzada.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from src.errors import DimensionError, FamilyError
from src.families import (
    DEFAULT_STATE_CAP,
    NumericMode,
    SparseStochasticMatrix,
    StateIndex,
    TransitionFamily,
)
from src.schedule import DurationSchedule

DENSE_THRESHOLD = 2**16
MC_BLOCK_SIZE = 4096
RNG_ALGORITHM = "numpy.Philox/SeedSequence.spawn"


@dataclass
class DistributionVector:
    """Distribución sobre un nivel: densa (ndarray), dispersa (csr 1xN) o exacta (Fractions)."""

    values: Any
    index: StateIndex
    steps: int = 0

    @property
    def level(self) -> int:
        return self.index.level

    @property
    def mode(self) -> NumericMode:
        return NumericMode.EXACT if isinstance(self.values, list) else NumericMode.FLOAT

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.values)

    @classmethod
    def point_mass(cls, index: StateIndex, state: int, mode: NumericMode = NumericMode.FLOAT,
                   dense_threshold: int = DENSE_THRESHOLD) -> "DistributionVector":
        if mode == NumericMode.EXACT:
            values: Any = [Fraction(0)] * index.size
            values[state] = Fraction(1)
        elif index.size <= dense_threshold:
            values = np.zeros(index.size)
            values[state] = 1.0
        else:
            values = sp.csr_matrix(([1.0], ([0], [state])), shape=(1, index.size))
        return cls(values=values, index=index)

    def mass_at(self, state: int):
        if self.mode == NumericMode.EXACT:
            return self.values[state]
        if self.is_sparse:
            return float(self.values[0, state])
        return float(self.values[state])

    def total_mass(self):
        if self.mode == NumericMode.EXACT:
            return sum(self.values, Fraction(0))
        if self.is_sparse:
            return float(self.values.sum())
        return float(self.values.sum())

    def to_dense(self) -> np.ndarray:
        if self.mode == NumericMode.EXACT:
            return np.array([float(v) for v in self.values])
        if self.is_sparse:
            return self.values.toarray().ravel()
        return np.asarray(self.values, dtype=float)

    def support_parities(self) -> set:
        dense = self.to_dense()
        return set(int(p) for p in np.unique(self.index.parity[dense > 0]))


def evolve_step(x: DistributionVector, P: SparseStochasticMatrix) -> DistributionVector:
    """x -> x P."""
    if P.size != x.index.size:
        raise DimensionError(f"vector de dimensión {x.index.size} con matriz {P.size}x{P.size}")
    if x.mode == NumericMode.EXACT:
        if P.exact_rows is None:
            raise DimensionError("un vector exacto necesita una matriz construida en modo exacto")
        new = [Fraction(0)] * P.size
        for u, mass in enumerate(x.values):
            if mass:
                for v, p in P.exact_rows[u].items():
                    new[v] += mass * p
        values: Any = new
    elif x.is_sparse:
        values = (x.values @ P.csr).tocsr()
        values.eliminate_zeros()
    else:
        values = P.csr.T @ x.values
    return DistributionVector(values=values, index=x.index, steps=x.steps + 1)


def lift_level(x: DistributionVector, from_idx: StateIndex, to_idx: StateIndex,
               dense_threshold: int = DENSE_THRESHOLD) -> DistributionVector:
    """Reindexa x en el nivel mayor; los estados nuevos reciben masa 0."""
    embedding = from_idx.embedding_to(to_idx)
    if x.mode == NumericMode.EXACT:
        new = [Fraction(0)] * to_idx.size
        for i, mass in enumerate(x.values):
            if mass:
                new[embedding[i]] = mass
        return DistributionVector(values=new, index=to_idx, steps=x.steps)
    if x.is_sparse or to_idx.size > dense_threshold:
        coo = sp.coo_matrix(x.values) if x.is_sparse else sp.coo_matrix(np.atleast_2d(x.values))
        lifted = sp.csr_matrix((coo.data, (np.zeros_like(coo.col), embedding[coo.col])), shape=(1, to_idx.size))
        return DistributionVector(values=lifted, index=to_idx, steps=x.steps)
    new_dense = np.zeros(to_idx.size)
    new_dense[embedding] = x.values
    return DistributionVector(values=new_dense, index=to_idx, steps=x.steps)


class ReturnSeries(BaseModel):
    """R(t) para t = 0..T, sumas parciales S(T) y fronteras de fase."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    R: List[float] = Field(description="Probabilidad de estar en el origen en t")
    S: List[float] = Field(description="S(T) = suma de R(t) para t = 1..T")
    phase: List[int] = Field(description="Fase de la transición que llega a t")
    boundaries: List[Tuple[int, float]] = Field(default_factory=list, description="(n, T_n) dentro del horizonte")
    exact_R: Optional[List[Any]] = Field(default=None, description="R(t) como Fraction en modo exacto")
    stderr: Optional[List[float]] = Field(default=None, description="Error estándar en Monte Carlo")
    metadata: Dict[str, Any] = Field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return len(self.R) - 1

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            {"t": np.arange(len(self.R)), "R": self.R, "S": self.S, "phase": self.phase}
        )
        if self.stderr is not None:
            frame["stderr"] = self.stderr
        return frame

    def phase_increments(self) -> Dict[int, float]:
        """Suma de R(t) sobre los t cuya transición de llegada pertenece a la fase n."""
        increments: Dict[int, float] = {}
        for t in range(1, len(self.R)):
            increments[self.phase[t]] = increments.get(self.phase[t], 0.0) + self.R[t]
        return increments


def _partial_sums(R: Sequence[float]) -> List[float]:
    S = np.concatenate([[0.0], np.cumsum(np.asarray(R[1:], dtype=float))])
    return S.tolist()


def _phase_column(phases: np.ndarray) -> List[int]:
    if phases.size == 0:
        return [1]
    return [int(phases[0])] + [int(p) for p in phases]


class _LevelCache:
    """Construye cada nivel una sola vez por ejecución."""

    def __init__(self, family: TransitionFamily, mode: NumericMode, state_cap: int):
        self.family, self.mode, self.state_cap = family, mode, state_cap
        self._built: Dict[int, Tuple[StateIndex, SparseStochasticMatrix]] = {}
        self._indices: Dict[int, StateIndex] = {}

    def index(self, n: int) -> StateIndex:
        if n in self._built:
            return self._built[n][0]
        if n not in self._indices:
            count = self.family.state_count(n)
            if count > self.state_cap:
                # build() produce el StateCapError con el mensaje completo
                self.family.build(n, self.mode, self.state_cap)
            self._indices[n] = self.family.index(n)
        return self._indices[n]

    def matrix(self, n: int) -> Tuple[StateIndex, SparseStochasticMatrix]:
        if n not in self._built:
            logger.debug(f"🔧 Construyendo {self.family.describe()} nivel {n}")
            self._built[n] = self.family.build(n, self.mode, self.state_cap)
        return self._built[n]


def _schedule_phases(schedule: DurationSchedule, horizon: int, max_phases: int) -> np.ndarray:
    timeline = schedule.timeline(max_phases)
    if timeline.exhausted_before(horizon):
        logger.warning(
            f"⚠️ El schedule {schedule.describe()} se agota antes de t={horizon}; se mantiene la fase {timeline.last_phase}"
        )
    return timeline.phase_array(horizon, hold=True)


def _boundaries(schedule: DurationSchedule, horizon: int, max_phases: int) -> List[Tuple[int, float]]:
    timeline = schedule.timeline(max_phases)
    timeline.exhausted_before(horizon)
    return [(n, float(T)) for n, T in timeline.boundaries(horizon)]


def run_exact(
    family: TransitionFamily,
    schedule: DurationSchedule,
    horizon: int,
    mode: NumericMode = NumericMode.FLOAT,
    lumped: bool = False,
    state_cap: int = DEFAULT_STATE_CAP,
    dense_threshold: int = DENSE_THRESHOLD,
    max_phases: int = 100_000,
) -> ReturnSeries:
    """R(t) exacto para t = 0..horizon por evolución fase a fase."""
    chain = family.lumped() if lumped else family
    phases = _schedule_phases(schedule, horizon, max_phases)
    levels = _LevelCache(chain, mode, state_cap)
    start = chain.start_index()

    level = int(phases[0]) if horizon > 0 else 1
    x = DistributionVector.point_mass(levels.index(level), start, mode, dense_threshold)
    R_exact: List[Any] = [x.mass_at(start)]

    for t in range(horizon):
        target = int(phases[t])
        while level < target:
            # fases de duración 0: elevaciones consecutivas sin pasos
            x = lift_level(x, levels.index(level), levels.index(level + 1), dense_threshold)
            level += 1
        _, P = levels.matrix(level)
        x = evolve_step(x, P)
        R_exact.append(x.mass_at(start))

    R = [float(r) for r in R_exact]
    series = ReturnSeries(
        R=R,
        S=_partial_sums(R),
        phase=_phase_column(phases),
        boundaries=_boundaries(schedule, horizon, max_phases),
        exact_R=R_exact if mode == NumericMode.EXACT else None,
        metadata={
            "family": family.describe(),
            "chain": chain.describe(),
            "schedule": schedule.describe(),
            "mode": "exact-lumped" if lumped else "exact",
            "numeric": mode.value,
            "state_cap": state_cap,
            "horizon": horizon,
        },
    )
    logger.info(f"✅ Serie exacta {chain.describe()} hasta t={horizon}: S={series.S[-1]:.6g}")
    return series


def static_series(family: TransitionFamily, n: int, horizon: int, mode: NumericMode = NumericMode.FLOAT,
                  lumped: bool = False, state_cap: int = DEFAULT_STATE_CAP) -> ReturnSeries:
    """Cadena estática sobre G(n) desde el origen (fases 1..n-1 de duración 0, fase n infinita)."""
    schedule = DurationSchedule.explicit([0] * (n - 1), unbounded_final=True)
    return run_exact(family, schedule, horizon, mode=mode, lumped=lumped, state_cap=state_cap)


class _Sampler:
    """Muestreo por inversa sobre la csr completa: un searchsorted por paso."""

    def __init__(self, P: SparseStochasticMatrix):
        csr = P.csr
        self.indptr = csr.indptr
        self.indices = csr.indices
        cumulative = np.cumsum(csr.data)
        prefix = np.concatenate([[0.0], cumulative])
        self.cumulative = cumulative
        self.row_start = prefix[csr.indptr[:-1]]
        self.row_mass = prefix[csr.indptr[1:]] - self.row_start

    def step(self, states: np.ndarray, u: np.ndarray) -> np.ndarray:
        targets = self.row_start[states] + u * self.row_mass[states]
        j = np.searchsorted(self.cumulative, targets, side="right")
        j = np.minimum(j, self.indptr[states + 1] - 1)
        return self.indices[j]


def _prepare_levels(chain: TransitionFamily, phases: np.ndarray, state_cap: int):
    """Índices, muestreadores y embeddings de todos los niveles que toca el horizonte."""
    cache = _LevelCache(chain, NumericMode.FLOAT, state_cap)
    first = int(phases[0]) if phases.size else 1
    last = int(phases[-1]) if phases.size else first
    indices = {n: cache.index(n) for n in range(first, last + 1)}
    samplers = {int(n): _Sampler(cache.matrix(int(n))[1]) for n in np.unique(phases)}
    embeddings = {n: indices[n].embedding_to(indices[n + 1]) for n in range(first, last)}
    return first, indices, samplers, embeddings


def _walk_block(args) -> np.ndarray:
    """Un bloque de caminantes con su propio generador; devuelve conteos en el origen por t."""
    seed_seq, walkers, phases, first, samplers, embeddings, start = args
    rng = np.random.Generator(np.random.Philox(seed_seq))
    states = np.full(walkers, start, dtype=np.int64)
    counts = np.zeros(phases.size + 1, dtype=np.int64)
    counts[0] = walkers
    level = first
    for t in range(phases.size):
        while level < phases[t]:
            states = embeddings[level][states]
            level += 1
        states = samplers[level].step(states, rng.random(walkers))
        counts[t + 1] = int(np.count_nonzero(states == start))
    return counts


def _block_seeds(seed: int, walkers: int, block_size: int):
    n_blocks = max(1, math.ceil(walkers / block_size))
    sizes = [block_size] * (n_blocks - 1) + [walkers - block_size * (n_blocks - 1)]
    return np.random.SeedSequence(seed).spawn(n_blocks), sizes


def run_monte_carlo(
    family: TransitionFamily,
    schedule: DurationSchedule,
    horizon: int,
    walkers: int,
    seed: int,
    lumped: bool = False,
    jobs: int = 1,
    block_size: int = MC_BLOCK_SIZE,
    state_cap: int = DEFAULT_STATE_CAP,
    max_phases: int = 100_000,
) -> ReturnSeries:
    """R(t) empírico con `walkers` caminantes independientes.

    Los caminantes se reparten en bloques fijos, cada uno con su flujo Philox
    derivado de la semilla, así que el resultado no depende de `jobs`.
    """
    if walkers < 1:
        raise FamilyError("walkers debe ser >= 1")
    chain = family.lumped() if lumped else family
    phases = _schedule_phases(schedule, horizon, max_phases)
    first, _, samplers, embeddings = _prepare_levels(chain, phases, state_cap)
    start = chain.start_index()
    seeds, sizes = _block_seeds(seed, walkers, block_size)
    tasks = [(s, size, phases, first, samplers, embeddings, start) for s, size in zip(seeds, sizes)]

    logger.info(f"🎲 Monte Carlo: {walkers} caminantes en {len(tasks)} bloques, jobs={jobs}")
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            block_counts = list(executor.map(_walk_block, tasks))
    else:
        block_counts = [_walk_block(task) for task in tasks]

    counts = np.sum(block_counts, axis=0)
    R = counts / walkers
    stderr = np.sqrt(R * (1.0 - R) / walkers)
    return ReturnSeries(
        R=R.tolist(),
        S=_partial_sums(R),
        phase=_phase_column(phases),
        boundaries=_boundaries(schedule, horizon, max_phases),
        stderr=stderr.tolist(),
        metadata={
            "family": family.describe(),
            "chain": chain.describe(),
            "schedule": schedule.describe(),
            "mode": "monte-carlo",
            "walkers": walkers,
            "seed": seed,
            "rng": RNG_ALGORITHM,
            "block_size": block_size,
            "state_cap": state_cap,
            "horizon": horizon,
        },
    )


class HittingResult(BaseModel):
    """Tiempos de primera llegada por ensayo (None = censurado en el horizonte)."""

    target: Tuple[int, ...]
    target_level: int
    horizon: int
    trials: int
    seed: int
    first_hits: List[Optional[int]]

    @property
    def hit_fraction(self) -> float:
        if not self.first_hits:
            return 0.0
        return sum(h is not None for h in self.first_hits) / len(self.first_hits)


def _target_indices(levels: Dict[int, StateIndex], target: Sequence[int]) -> Dict[int, int]:
    """Índice del objetivo en cada nivel, -1 si aún no existe."""
    result = {}
    for n, idx in levels.items():
        try:
            result[n] = idx.index_of(target)
        except FamilyError:
            result[n] = -1
    return result


def _first_target_level(target_of: Dict[int, int]) -> int:
    present = [n for n, i in sorted(target_of.items()) if i >= 0]
    return present[0] if present else -1


def hitting_experiment(
    family: TransitionFamily,
    schedule: DurationSchedule,
    target: Sequence[int],
    trials: int,
    seed: int,
    horizon: int,
    state_cap: int = DEFAULT_STATE_CAP,
    max_phases: int = 100_000,
) -> HittingResult:
    """Primera visita al estado `target` (etiqueta del nivel donde existe) desde el origen."""
    target = tuple(int(c) for c in target)
    phases = _schedule_phases(schedule, horizon, max_phases)
    first, indices, samplers, embeddings = _prepare_levels(family, phases, state_cap)
    target_of = _target_indices(indices, target)
    start = family.start_index()

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    states = np.full(trials, start, dtype=np.int64)
    hits = np.full(trials, -1, dtype=np.int64)
    level = first
    if target_of[level] == start:
        hits[:] = 0
    for t in range(phases.size):
        while level < phases[t]:
            states = embeddings[level][states]
            level += 1
        states = samplers[level].step(states, rng.random(trials))
        if target_of[level] >= 0:
            fresh = (hits < 0) & (states == target_of[level])
            hits[fresh] = t + 1
    first_hits = [int(h) if h >= 0 else None for h in hits]
    result = HittingResult(
        target=target,
        target_level=_first_target_level(target_of),
        horizon=horizon,
        trials=trials,
        seed=seed,
        first_hits=first_hits,
    )
    logger.info(f"🎯 Objetivo {target}: alcanzado en {result.hit_fraction:.1%} de {trials} ensayos")
    return result


def hitting_probability_exact(
    family: TransitionFamily,
    schedule: DurationSchedule,
    target: Sequence[int],
    horizon: int,
    mode: NumericMode = NumericMode.FLOAT,
    state_cap: int = DEFAULT_STATE_CAP,
    max_phases: int = 100_000,
):
    """Probabilidad exacta de visitar `target` antes del horizonte (estado absorbente)."""
    target = tuple(int(c) for c in target)
    phases = _schedule_phases(schedule, horizon, max_phases)
    levels = _LevelCache(family, mode, state_cap)
    start = family.start_index()
    level = int(phases[0]) if horizon > 0 else 1

    def target_index(n: int) -> int:
        try:
            return levels.index(n).index_of(target)
        except FamilyError:
            return -1

    x = DistributionVector.point_mass(levels.index(level), start, mode, dense_threshold=max(state_cap, 1))
    if target_index(level) == start:
        return Fraction(1) if mode == NumericMode.EXACT else 1.0
    absorbed: Any = Fraction(0) if mode == NumericMode.EXACT else 0.0
    for t in range(horizon):
        while level < phases[t]:
            x = lift_level(x, levels.index(level), levels.index(level + 1), dense_threshold=max(state_cap, 1))
            level += 1
        _, P = levels.matrix(level)
        x = evolve_step(x, P)
        i = target_index(level)
        if i >= 0:
            absorbed += x.values[i]
            x.values[i] = Fraction(0) if mode == NumericMode.EXACT else 0.0
    return absorbed

"""Distribuciones estacionarias, p(n), tiempos de mezcla pares y clasificación de recurrencia.

Las cantidades a tiempo par se anclan en el estado inicial: la clase par U son
los estados con su misma paridad, y p(n) es la masa estacionaria par en él.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from src.errors import (
    BoundsUndefinedError,
    ConvergenceError,
    FamilyError,
    NoBoundError,
    UnsupportedScheduleError,
)
from src.families import (
    Box,
    GenBox,
    HammingWeightChain,
    HeightPath,
    Hypercube,
    KaryTree,
    LevelTree,
    LevelTreeHeightChain,
    NumericMode,
    ReflectingBox,
    SparseStochasticMatrix,
    Star,
    StarLumpedChain,
    StateIndex,
    TransitionFamily,
    exact,
)
from src.schedule import DurationSchedule, ScheduleKind, SymbolicScheduleFamily, eval_duration

# ---------------------------------------------------------------------------
# Reversibility weights
# ---------------------------------------------------------------------------


class ReversibilityWeights(BaseModel):
    """Pesos phi(v) > 0 con phi(u) P(u,v) = phi(v) P(v,u)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    family: str
    level: int
    values: Any = Field(description="ndarray en float, lista de Fraction en modo exacto")

    def as_array(self) -> np.ndarray:
        return np.array([float(v) for v in self.values]) if isinstance(self.values, list) else self.values


def _tree_height_weights(k: int, lam, n: int) -> List[Fraction]:
    """phi por nodo según su altura: k/(lam+k), lam^-h, (lam/(lam+k)) lam^-n."""
    lam = exact(lam)
    weights = [k / (lam + k)]
    weights += [lam ** (-h) for h in range(1, n)]
    weights.append((lam / (lam + k)) * lam ** (-n))
    return weights


def _materialize(values: List[Fraction], mode: NumericMode):
    return values if mode == NumericMode.EXACT else np.array([float(v) for v in values])


def weights_karytree(k: int, lam: float, n: int, mode: NumericMode = NumericMode.FLOAT) -> ReversibilityWeights:
    per_height = _tree_height_weights(k, lam, n)
    values = [per_height[h] for h in range(n + 1) for _ in range(k**h)]
    return ReversibilityWeights(family=KaryTree(k=k, lam=lam).describe(), level=n, values=_materialize(values, mode))


def _level_tree_degrees(children) -> List[int]:
    return [children[0]] + [c + 1 for c in children[1:]] + [1]


def reversibility_weights(family: TransitionFamily, n: int, mode: NumericMode = NumericMode.FLOAT) -> ReversibilityWeights:
    """phi para toda familia reversible del paquete."""
    if isinstance(family, KaryTree):
        return weights_karytree(family.k, family.lam, n, mode)
    if isinstance(family, HeightPath):
        k, lam = family.k, exact(family.lam)
        per_height = _tree_height_weights(k, lam, n)
        values = [per_height[h] * k**h for h in range(n + 1)]
    elif isinstance(family, ReflectingBox):
        idx = family.index(n)
        faces = (np.abs(idx.decode(np.arange(idx.size))) == np.asarray(idx.bounds)).sum(axis=1)
        values = [Fraction(1, 2 ** int(f)) for f in faces]
    elif isinstance(family, Hypercube):
        values = [Fraction(1)] * 2**n
    elif isinstance(family, HammingWeightChain):
        values = [Fraction(math.comb(n, w)) for w in range(n + 1)]
    elif isinstance(family, LevelTree):
        idx = family.index(n)
        degrees = _level_tree_degrees(idx.children)
        values = [Fraction(degrees[h]) for h in idx.heights()]
    elif isinstance(family, LevelTreeHeightChain):
        children = family.profile.children(n)
        degrees = _level_tree_degrees(children)
        sizes = [math.prod(children[:h]) for h in range(n + 1)]
        values = [Fraction(sizes[h] * degrees[h]) for h in range(n + 1)]
    elif isinstance(family, Star):
        m = family.growth(n)
        values = [Fraction(m)] + [Fraction(1)] * m
    elif isinstance(family, StarLumpedChain):
        m = family.growth(n)
        values = [Fraction(m), Fraction(1), Fraction(m - 1)]
    else:
        raise FamilyError(f"sin pesos de reversibilidad para {family.describe()}")
    return ReversibilityWeights(family=family.describe(), level=n, values=_materialize(values, mode))


def detailed_balance_residual(weights: ReversibilityWeights, P: SparseStochasticMatrix):
    """max |phi(u) P(u,v) - phi(v) P(v,u)|; Fraction exacta si ambos son exactos."""
    if isinstance(weights.values, list) and P.exact_rows is not None:
        phi = weights.values
        worst = Fraction(0)
        for u, row in enumerate(P.exact_rows):
            for v, p in row.items():
                worst = max(worst, abs(phi[u] * p - phi[v] * P.exact_rows[v].get(u, Fraction(0))))
        return worst
    flow = sp.diags(weights.as_array()) @ P.csr
    difference = (flow - flow.T).tocoo()
    return float(np.abs(difference.data).max()) if difference.nnz else 0.0


# ---------------------------------------------------------------------------
# Even-time stationary distributions
# ---------------------------------------------------------------------------


class EvenStationary(BaseModel):
    """pi sobre la clase par (ceros fuera) y p(n) = pi(inicio)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    vector: np.ndarray
    p: float
    level: int = 0
    method: str = "closed"
    even_only: bool = True


def even_class(parity: np.ndarray, start: int = 0) -> np.ndarray:
    return np.asarray(parity) == parity[start]


def even_stationary_closed(family: TransitionFamily, n: int) -> EvenStationary:
    """pi por normalización de phi sobre la clase par."""
    if not family.is_busy:
        raise FamilyError(f"{family.describe()} es aperiódica: use stationary_closed")
    idx = family.index(n)
    start = family.start_index(n)
    try:
        phi = reversibility_weights(family, n).as_array()
    except FamilyError:
        logger.warning(f"⚠️ {family.describe()} sin forma cerrada, se usa el punto fijo numérico")
        _, P = family.build(n)
        return even_stationary_numeric(P, idx.parity, start=start)
    mask = even_class(idx.parity, start)
    vector = np.where(mask, phi, 0.0)
    vector /= vector.sum()
    return EvenStationary(vector=vector, p=float(vector[start]), level=n, method="closed")


def stationary_closed(family: TransitionFamily, n: int) -> EvenStationary:
    """Distribución estacionaria ordinaria (familias perezosas): phi normalizado en todo V(n)."""
    phi = reversibility_weights(family, n).as_array()
    vector = phi / phi.sum()
    start = family.start_index(n)
    return EvenStationary(vector=vector, p=float(vector[start]), level=n, method="closed", even_only=False)


def _two_step_on_class(P: SparseStochasticMatrix, mask: np.ndarray) -> sp.csr_matrix:
    P2 = (P.csr @ P.csr).tocsr()
    U = np.flatnonzero(mask)
    return P2[U][:, U].tocsr()


def even_stationary_numeric(
    P: SparseStochasticMatrix,
    parity: np.ndarray,
    start: int = 0,
    method: str = "power",
    weights: Optional[np.ndarray] = None,
    tolerance: float = 1e-13,
    max_iterations: int = 1_000_000,
) -> EvenStationary:
    """Punto fijo de P^2 en la clase par, por iteración de potencias o resolviendo el balance."""
    mask = even_class(parity, start)
    U = np.flatnonzero(mask)
    Q = _two_step_on_class(P, mask)
    start_pos = int(np.searchsorted(U, start))

    if method == "solve":
        pi = _solve_balance(Q)
    else:
        if weights is not None:
            pi = np.asarray(weights, dtype=float)[U].copy()
        else:
            pi = np.ones(U.size)
        pi /= pi.sum()
        QT = Q.T.tocsr()
        for iteration in range(max_iterations):
            nxt = QT @ pi
            nxt /= nxt.sum()
            if np.max(np.abs(nxt - pi)) <= tolerance:
                pi = nxt
                break
            pi = nxt
        else:
            raise ConvergenceError(f"iteración de potencias sin converger en {max_iterations} pasos")
        logger.debug(f"🔁 Potencias: {iteration + 1} iteraciones sobre {U.size} estados")

    vector = np.zeros(P.size)
    vector[U] = pi
    return EvenStationary(vector=vector, p=float(pi[start_pos]), level=0, method=method)


def _solve_balance(Q: sp.csr_matrix) -> np.ndarray:
    size = Q.shape[0]
    if size == 1:
        return np.ones(1)
    A = (Q.T - sp.identity(size, format="csr")).tolil()
    A[size - 1, :] = np.ones(size)
    rhs = np.zeros(size)
    rhs[-1] = 1.0
    pi = spla.spsolve(A.tocsc(), rhs)
    if not np.all(np.isfinite(pi)):
        raise ConvergenceError("sistema de balance singular")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def p_closed(family: TransitionFamily, n: int, mode: NumericMode = NumericMode.FLOAT):
    """p(n) por fórmula, sin construir el espacio de estados.

    Familias perezosas: masa estacionaria ordinaria del estado inicial.
    """
    value = _p_closed_exact(family, n)
    return value if mode == NumericMode.EXACT else float(value)


def _p_closed_exact(family: TransitionFamily, n: int) -> Fraction:
    if isinstance(family, (KaryTree, HeightPath)):
        k, lam = family.k, exact(family.lam)
        ratio = Fraction(k) / lam
        phi_root = k / (lam + k)
        total = phi_root + sum(ratio ** (2 * i) for i in range(1, (n - 1) // 2 + 1))
        if n % 2 == 0:
            total += (lam / (lam + k)) * ratio**n
        return phi_root / total
    if isinstance(family, ReflectingBox):
        return Fraction(2, math.prod(2 * b for b in family.bounds(n)))
    if isinstance(family, (Hypercube, HammingWeightChain)):
        return Fraction(2, 2**n)
    if isinstance(family, (LevelTree, LevelTreeHeightChain)):
        children = family.profile.children(n)
        degrees = _level_tree_degrees(children)
        sizes = [math.prod(children[:h]) for h in range(n + 1)]
        if family.is_busy:
            even_total = sum(sizes[h] * degrees[h] for h in range(0, n + 1, 2))
            return Fraction(degrees[0], even_total)
        return Fraction(degrees[0], sum(s * d for s, d in zip(sizes, degrees)))
    if isinstance(family, (Star, StarLumpedChain)):
        m = family.growth(n)
        if family.is_busy:
            return Fraction(1) if family.start == "root" else Fraction(1, m)
        return Fraction(1, 2) if family.start == "root" else Fraction(1, 2 * m)
    raise FamilyError(f"sin fórmula cerrada de p(n) para {family.describe()}")


def p_bounds(family: TransitionFamily, n: int) -> Tuple[float, float]:
    """Cotas inferior y superior de p(n) para árboles (lam < k) y cajas."""
    if isinstance(family, (KaryTree, HeightPath)):
        k, lam = family.k, family.lam
        if lam >= k:
            raise BoundsUndefinedError(f"las cotas del árbol requieren lambda < k (lambda={lam}, k={k})")
        r = lam / k
        return (k - lam) / k * r ** (n + 1), r ** (n - 1)
    if isinstance(family, Box):
        d = family.d
        return 1.0 / (2 * n + 1) ** d, 2.0 / (2 * n - 1) ** d
    raise BoundsUndefinedError(f"sin cotas de p(n) para {family.describe()}")


# ---------------------------------------------------------------------------
# Even mixing times
# ---------------------------------------------------------------------------


class MixingEstimate(BaseModel):
    family: str = ""
    level: int = 0
    epsilon: float
    measured: int = Field(description="Tiempo de mezcla par medido (entero par)")
    bound: Optional[float] = Field(default=None, description="Cota analítica de la familia")
    constant: Optional[float] = None
    calibrated: bool = False


def _mixing_chunk(Q, pi: np.ndarray, rows: np.ndarray, epsilon: float, max_steps: int) -> int:
    """Menor t' con TV <= epsilon para todas las filas del bloque (TV no crece con t')."""
    dense_q = not sp.issparse(Q)
    M = np.zeros((rows.size, pi.size))
    M[np.arange(rows.size), rows] = 1.0
    for t_prime in range(1, max_steps + 1):
        M = M @ Q if dense_q else np.asarray((Q.T @ M.T).T)
        if 0.5 * np.abs(M - pi).sum(axis=1).max() <= epsilon:
            return t_prime
    raise ConvergenceError(f"sin mezclar a epsilon={epsilon} en {max_steps} pasos pares")


def measure_even_mixing(
    P: SparseStochasticMatrix,
    parity: np.ndarray,
    epsilon: float,
    start: int = 0,
    stationary: Optional[EvenStationary] = None,
    max_steps: int = 200_000,
    jobs: int = 1,
    chunk_size: int = 256,
) -> MixingEstimate:
    """Menor 2t' con max_u TV(P^{2t'}(u,.), pi) <= epsilon sobre la clase par."""
    if epsilon <= 0:
        raise FamilyError("epsilon debe ser positivo")
    mask = even_class(parity, start)
    U = np.flatnonzero(mask)
    Q = _two_step_on_class(P, mask)
    if U.size <= 4096:
        Q = Q.toarray()
    if stationary is None:
        stationary = even_stationary_numeric(P, parity, start=start)
    pi = stationary.vector[U]

    chunks = [np.arange(i, min(i + chunk_size, U.size)) for i in range(0, U.size, chunk_size)]
    if jobs > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            steps = list(executor.map(lambda rows: _mixing_chunk(Q, pi, rows, epsilon, max_steps), chunks))
    else:
        steps = [_mixing_chunk(Q, pi, rows, epsilon, max_steps) for rows in chunks]
    return MixingEstimate(epsilon=epsilon, measured=2 * max(steps))


def analytic_mixing_bound(family: TransitionFamily, n: int, epsilon: float, constants: Optional[Dict[str, float]] = None) -> float:
    """Cota del tiempo de mezcla par: camino n^2 ln(1/eps), caja n^2 d ln(d/eps), cubo n ln(n/eps)."""
    constants = constants or {}
    if isinstance(family, HeightPath):
        return constants.get("path", 1.0) * n**2 * math.log(1.0 / epsilon)
    if isinstance(family, Box):
        d = family.d
        return constants.get("box", 2.0) * n**2 * d * math.log(d / epsilon)
    if isinstance(family, (Hypercube, HammingWeightChain)):
        return constants.get("cube", 1.0) * n * math.log(n / epsilon)
    raise NoBoundError(f"sin cota de mezcla conocida para {family.describe()}")


def mixing_bound_name(family: TransitionFamily) -> str:
    if isinstance(family, HeightPath):
        return "path"
    if isinstance(family, Box):
        return "box"
    if isinstance(family, (Hypercube, HammingWeightChain)):
        return "cube"
    raise NoBoundError(f"sin cota de mezcla conocida para {family.describe()}")


def fit_mixing_growth(shapes, measured) -> Tuple[float, float]:
    """(C, pendiente): C por mínimos cuadrados en measured ~ C*shape; pendiente en log-log."""
    shapes = np.asarray(shapes, dtype=float)
    measured = np.asarray(measured, dtype=float)
    constant = float(np.dot(shapes, measured) / np.dot(shapes, shapes))
    slope = float(np.polyfit(np.log(shapes), np.log(measured), 1)[0]) if shapes.size >= 2 else float("nan")
    return constant, slope


# ---------------------------------------------------------------------------
# Recurrence classification
# ---------------------------------------------------------------------------


class Verdict(str, Enum):
    RECURRENT = "Recurrent"
    TRANSIENT = "Transient"
    UNDECIDED = "Undecided"


class SeriesTerm(BaseModel):
    """Término rho^n / (n^a (ln n)^b) de una serie de Bertrand generalizada."""

    model_config = ConfigDict(frozen=True)

    rho: float = Field(gt=0)
    a: float = 0.0
    b: float = 0.0

    def converges(self) -> bool:
        if not math.isclose(self.rho, 1.0, rel_tol=1e-12):
            return self.rho < 1.0
        if not math.isclose(self.a, 1.0, abs_tol=1e-12):
            return self.a > 1.0
        return self.b > 1.0 and not math.isclose(self.b, 1.0, abs_tol=1e-12)

    def describe(self) -> str:
        return f"sum rho^n/(n^a (ln n)^b), rho={self.rho:g}, a={self.a:g}, b={self.b:g}"


class RecurrenceVerdict(BaseModel):
    family: str
    schedule: str
    verdict: Verdict
    theorem: str
    series_term: str = ""
    convergence: Optional[str] = None
    one_sided: bool = False
    notes: str = ""


def _symbolic_part(schedule: DurationSchedule) -> Optional[SymbolicScheduleFamily]:
    if schedule.kind == ScheduleKind.SYMBOLIC or schedule.family is not None:
        return schedule.family
    return None


def _weighted_series(fam: SymbolicScheduleFamily, rho_w: float, a_w: float, b_w: float, minus_one: bool = False):
    """Serie sum (d(n) [-1]) w(n). None si solo tiene finitos términos positivos."""
    limit = fam.limit()
    if limit.kind == "infinite":
        return SeriesTerm(rho=fam.base * rho_w, a=fam.a + a_w, b=fam.b + b_w)
    value = limit.value or 0
    if value - (1 if minus_one else 0) <= 0:
        return None
    return SeriesTerm(rho=rho_w, a=a_w, b=b_w)


def _is_constant_one(schedule: DurationSchedule) -> bool:
    if any(v != 1 for v in schedule.values):
        return False
    fam = schedule.family
    if fam is None:
        return False
    if schedule.kind == ScheduleKind.SYMBOLIC or not schedule.values:
        if fam.d1 != 1:
            return False
    return fam.limit().kind == "constant" and fam.limit().value == 1 and math.isclose(fam.base, 1.0) \
        and fam.a == 0 and fam.b == 0


def classify(family: TransitionFamily, schedule: DurationSchedule) -> RecurrenceVerdict:
    """Veredicto de recurrencia del estado inicial según el teorema aplicable."""
    base = dict(family=family.describe(), schedule=schedule.describe())

    def undecided(theorem: str, notes: str, term: Optional[SeriesTerm] = None) -> RecurrenceVerdict:
        return RecurrenceVerdict(**base, verdict=Verdict.UNDECIDED, theorem=theorem,
                                 series_term=term.describe() if term else "", notes=notes)

    if schedule.unbounded_final:
        return RecurrenceVerdict(**base, verdict=Verdict.RECURRENT, theorem="static final level",
                                 notes="la última fase es infinita: cadena finita irreducible estática")
    fam = _symbolic_part(schedule)
    if fam is None:
        return undecided("none", "el clasificador necesita un schedule simbólico o una cola simbólica")
    if fam.limit().kind == "zero":
        return undecided("none", "d(n) se anula: la duración total es finita y el proceso no está definido")

    if isinstance(family, (Star, StarLumpedChain)):
        return _classify_star(family, schedule, base, undecided)
    if isinstance(family, (KaryTree, HeightPath)):
        if family.lam >= family.k:
            return RecurrenceVerdict(**base, verdict=Verdict.RECURRENT, theorem="karytree (lambda >= k)",
                                     notes="lambda >= k: recurrente con cualquier schedule")
        return _two_sided(base, _weighted_series(fam, family.lam / family.k, 0.0, 0.0), "karytree")
    if isinstance(family, Box):
        if family.d < 4:
            return undecided("box", "el teorema de la caja requiere d >= 4")
        return _two_sided(base, _weighted_series(fam, 1.0, float(family.d), 0.0), "box")
    if isinstance(family, (Hypercube, HammingWeightChain)):
        return _two_sided(base, _weighted_series(fam, 0.5, 0.0, 0.0), "cube")
    if isinstance(family, GenBox):
        return _classify_genbox(family, fam, base, undecided)
    if isinstance(family, (LevelTree, LevelTreeHeightChain)):
        return _classify_level_tree(family, fam, base, undecided)
    raise UnsupportedScheduleError(f"sin teorema para {family.describe()}")


def _two_sided(base: dict, term: Optional[SeriesTerm], theorem: str) -> RecurrenceVerdict:
    converges = term is None or term.converges()
    return RecurrenceVerdict(
        **base,
        verdict=Verdict.TRANSIENT if converges else Verdict.RECURRENT,
        theorem=theorem,
        series_term=term.describe() if term else "finitely many nonzero terms",
        convergence="convergent" if converges else "divergent",
    )


def _classify_genbox(family: GenBox, fam: SymbolicScheduleFamily, base: dict, undecided) -> RecurrenceVerdict:
    exponents = [axis.e for axis in family.axes]
    total, largest = float(sum(exponents)), float(max(exponents))
    recurrent_term = _weighted_series(fam, 1.0, total, 0.0, minus_one=True)
    if recurrent_term is not None and not recurrent_term.converges():
        return RecurrenceVerdict(**base, verdict=Verdict.RECURRENT, theorem="box2", one_sided=True,
                                 series_term=recurrent_term.describe(), convergence="divergent")
    duration_term = _weighted_series(fam, 1.0, total, 0.0)
    spread_term = SeriesTerm(rho=1.0, a=total - 2 * largest, b=-1.0)
    if (duration_term is None or duration_term.converges()) and spread_term.converges():
        return RecurrenceVerdict(**base, verdict=Verdict.TRANSIENT, theorem="box2", one_sided=True,
                                 series_term=(duration_term or spread_term).describe(), convergence="convergent",
                                 notes=f"además converge {spread_term.describe()}")
    return undecided("box2", "ninguna de las dos condiciones de la caja generalizada se cumple", duration_term)


def _classify_level_tree(family, fam: SymbolicScheduleFamily, base: dict, undecided) -> RecurrenceVerdict:
    k = family.profile.k
    if k is None:
        return undecided("level-tree", "perfil explícito: el crecimiento de |E_n| no es simbólico")
    # |E_n| = sum_{h<=n} k^h ~ k^n (k >= 2) o n (k = 1)
    rho_w, a_w = (1.0 / k, 0.0) if k >= 2 else (1.0, 1.0)
    if family.gamma == 0:
        term = _weighted_series(fam, rho_w, a_w, 0.0, minus_one=True)
        theorem = "level-tree busy"
    elif family.gamma >= 0.5:
        term = _weighted_series(fam, rho_w, a_w, 0.0)
        theorem = "level-tree lazy"
    else:
        return undecided("level-tree lazy", "gamma en (0, 1/2): la monotonía no está demostrada")
    if term is not None and not term.converges():
        return RecurrenceVerdict(**base, verdict=Verdict.RECURRENT, theorem=theorem, one_sided=True,
                                 series_term=term.describe(), convergence="divergent")
    return undecided(theorem, "solo se demuestra el lado recurrente", term)


def _classify_star(family, schedule: DurationSchedule, base: dict, undecided) -> RecurrenceVerdict:
    theorem = "star busy" if family.is_busy else "star lazy"
    if family.start == "root":
        return RecurrenceVerdict(**base, verdict=Verdict.RECURRENT, theorem=theorem,
                                 notes="el centro es recurrente con cualquier schedule")
    if not _is_constant_one(schedule):
        return undecided(theorem, "las proposiciones de la estrella suponen d(n) = 1")
    rho, a, b = family.growth.inverse_series()
    return _two_sided(base, SeriesTerm(rho=rho, a=a, b=b), theorem)


# ---------------------------------------------------------------------------
# Finite-horizon diagnostic
# ---------------------------------------------------------------------------


class DiagnosticRow(BaseModel):
    phase: int
    d_n: int
    p_n: Optional[float] = None
    increment: float
    lower_bound: Optional[float] = None
    upper_bound: Optional[float] = None
    complete: bool = True


class SeriesDiagnostic(BaseModel):
    rows: List[DiagnosticRow] = Field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        columns = ["phase", "d_n", "p_n", "increment", "lower_bound", "upper_bound", "complete"]
        return pd.DataFrame([row.model_dump() for row in self.rows], columns=columns)


def series_diagnostic(
    rs,
    schedule: DurationSchedule,
    p_of: Optional[Callable[[int], float]] = None,
    mixing_of: Optional[Callable[[int, float], int]] = None,
    busy: bool = True,
) -> SeriesDiagnostic:
    """Incrementos por fase de S(T) junto a las cotas inferior y superior por fase.

    inferior: (d(n)-1) p(n)/2; superior: (p(n)+p(n-1)) d(n) + holgura de mezcla,
    y d(1) en la fase 1. No emite veredicto.
    """
    if len(rs.R) <= 1:
        return SeriesDiagnostic()
    increments = rs.phase_increments()
    horizon = len(rs.R) - 1
    rows = []
    for n in sorted(increments):
        steps_in_phase = sum(1 for t in range(1, horizon + 1) if rs.phase[t] == n)
        try:
            d_n = eval_duration(schedule, n)
            complete = math.isfinite(d_n) and steps_in_phase == d_n
        except IndexError:
            d_n, complete = steps_in_phase, False
        if not math.isfinite(d_n):
            d_n = steps_in_phase
        row = DiagnosticRow(phase=n, d_n=int(d_n), increment=increments[n], complete=complete)
        if p_of is not None:
            p_n = p_of(n)
            row.p_n = p_n
            row.lower_bound = (d_n - 1) * p_n / 2
            if n == 1:
                row.upper_bound = float(d_n)
            else:
                p_prev = p_of(n - 1)
                slack = 0
                if mixing_of is not None and p_prev < 1:
                    unmixed = min(mixing_of(n, p_prev) - 1, d_n)
                    slack = math.ceil(unmixed / 2) if busy else unmixed
                row.upper_bound = (p_n + p_prev) * d_n + slack
        rows.append(row)
    return SeriesDiagnostic(rows=rows)

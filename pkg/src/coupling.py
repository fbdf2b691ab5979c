"""Acoplamientos monótonos de dos paseos sobre grafos crecientes y verificación LHaGG.

X sigue el schedule que crece antes (nivel nX >= nY) y no puede quedar más cerca
del origen que Y. Cada paso consume un uniforme compartido: una cadena se acerca
al origen si el uniforme cae por debajo de su probabilidad hacia dentro, así que
con estados iguales hace falta pX <= pY.
"""

from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, Field

from src.engine import run_exact
from src.errors import (
    CouplingPreconditionError,
    PrefixOrderError,
    UnsupportedCouplingError,
)
from src.families import (
    HammingWeightChain,
    HeightPath,
    Hypercube,
    KaryTree,
    LevelProfile,
    LevelTree,
    LevelTreeHeightChain,
    NumericMode,
    ReflectingBox,
    TransitionFamily,
)
from src.schedule import DurationSchedule, timelines_ordered

CaseRule = Callable[[np.ndarray, np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


class CoupledStep(BaseModel):
    x: Tuple[int, ...]
    y: Tuple[int, ...]
    case: str
    uniform: float


class CouplingTrace(BaseModel):
    """Trayectoria acoplada: resúmenes (h_X, h_Y) por tiempo."""

    seed: int
    h_x: List[Tuple[int, ...]] = Field(default_factory=list)
    h_y: List[Tuple[int, ...]] = Field(default_factory=list)
    cases: List[str] = Field(default_factory=list)
    uniforms: List[float] = Field(default_factory=list)
    dominated: List[bool] = Field(default_factory=list)

    def rows(self) -> List[dict]:
        fmt = lambda h: ";".join(str(v) for v in h)  # noqa: E731
        return [
            {"t": t, "hX": fmt(hx), "hY": fmt(hy), "case_label": case, "uniform_draw": u}
            for t, (hx, hy, case, u) in enumerate(zip(self.h_x, self.h_y, self.cases, self.uniforms))
        ]


class DominanceReport(BaseModel):
    family: str
    f: str
    g: str
    method: str = Field(description="'exact' o 'coupling'")
    horizon: int
    tolerance: float = 1e-12
    max_violation: float = 0.0
    violations: int = 0
    trials: Optional[int] = None
    seed: Optional[int] = None
    identical: Optional[bool] = None
    trajectory_file: Optional[str] = None
    passed: bool = True


# ---------------------------------------------------------------------------
# Shared-uniform rules
# ---------------------------------------------------------------------------


def inverse_transform(u: np.ndarray, p_in: np.ndarray, hold: float = 0.0) -> np.ndarray:
    """-1 (hacia el origen) si u < (1-hold) p_in, 0 si cae en la retención, +1 en otro caso."""
    inward = (1.0 - hold) * p_in
    return np.where(u < inward, -1, np.where(u < inward + hold, 0, 1)).astype(np.int64)


class HeightCoupling:
    """Acoplamiento de dos cadenas de nacimiento y muerte sobre una altura entera.

    Subclases: `inward_probabilities` y la clasificación de casos. Cada caso es
    un método (u, pX, pY) -> (movX, movY) que se puede sustituir.
    """

    hold: float = 0.0

    def inward_probabilities(self, hX, hY, nX, nY) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def classify(self, hX, hY, nX, nY) -> np.ndarray:
        raise NotImplementedError

    def check(self, hX, hY, nX, nY) -> None:
        if np.any(np.asarray(nX) < np.asarray(nY)):
            raise CouplingPreconditionError("X debe estar en un nivel >= al de Y")
        if np.any(np.asarray(hX) < np.asarray(hY)):
            raise CouplingPreconditionError(f"dominancia rota en la entrada: hX={hX}, hY={hY}")

    def shared(self, u, pX, pY):
        return inverse_transform(u, pX, self.hold), inverse_transform(u, pY, self.hold)

    def cases(self) -> Dict[str, CaseRule]:
        return {"gap": self.shared}

    def step(self, hX, hY, nX, nY, u) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        hX, hY = np.asarray(hX, dtype=np.int64), np.asarray(hY, dtype=np.int64)
        nX = np.broadcast_to(np.asarray(nX, dtype=np.int64), hX.shape)
        nY = np.broadcast_to(np.asarray(nY, dtype=np.int64), hY.shape)
        u = np.asarray(u, dtype=float)
        pX, pY = self.inward_probabilities(hX, hY, nX, nY)
        labels = self.classify(hX, hY, nX, nY)
        moveX = np.zeros_like(hX)
        moveY = np.zeros_like(hY)
        for label, rule in self.cases().items():
            mask = labels == label
            if mask.any():
                moveX[mask], moveY[mask] = rule(u[mask], pX[mask], pY[mask])
        return hX + moveX, hY + moveY, labels


class TreeCoupling(HeightCoupling):
    """Alturas en el árbol k-ario: bajar con prob. 0 (raíz), lam/(lam+k) (interno) o 1 (hoja)."""

    def __init__(self, k: int, lam: float):
        if lam >= k:
            raise CouplingPreconditionError(f"el acoplamiento del árbol requiere lambda < k (lambda={lam}, k={k})")
        self.k, self.lam = k, lam

    def _inward(self, h, n):
        internal = self.lam / (self.lam + self.k)
        return np.where(h == 0, 0.0, np.where(h >= n, 1.0, internal))

    def inward_probabilities(self, hX, hY, nX, nY):
        return self._inward(hX, nX), self._inward(hY, nY)

    def classify(self, hX, hY, nX, nY):
        labels = np.full(hX.shape, "gap", dtype=object)
        equal = hX == hY
        labels[equal & (hY == 0)] = "i"
        labels[equal & (hY > 0) & (hY < nY)] = "ii"
        labels[equal & (hX > 0) & (hX == nX) & (hY == nY)] = "iii"
        labels[equal & (hX > 0) & (hX < nX) & (hY == nY)] = "iv"
        return labels

    def case_root(self, u, pX, pY):
        return self.shared(u, pX, pY)

    def case_internal(self, u, pX, pY):
        return self.shared(u, pX, pY)

    def case_leaves(self, u, pX, pY):
        return self.shared(u, pX, pY)

    def case_internal_leaf(self, u, pX, pY):
        return self.shared(u, pX, pY)

    def cases(self):
        return {
            "gap": self.shared,
            "i": self.case_root,
            "ii": self.case_internal,
            "iii": self.case_leaves,
            "iv": self.case_internal_leaf,
        }


class LevelTreeCoupling(TreeCoupling):
    """Árbol de niveles: bajar con prob. 1/deg; el perezoso retiene con prob. gamma (gamma >= 1/2)."""

    def __init__(self, profile: LevelProfile, gamma: float = 0.0):
        if 0 < gamma < 0.5:
            raise UnsupportedCouplingError(f"acoplamiento perezoso solo para gamma >= 1/2 (gamma={gamma})")
        self.profile = profile
        self.hold = gamma

    def _inward(self, h, n):
        out = np.empty(h.shape, dtype=float)
        for level in np.unique(n):
            mask = n == level
            # c_h por altura; la posición `level` (hojas) no se usa
            children = np.asarray(self.profile.children(int(level)) + (0,), dtype=float)
            heights = h[mask]
            down = 1.0 / (children[np.minimum(heights, level)] + 1.0)
            out[mask] = np.where(heights == 0, 0.0, np.where(heights >= level, 1.0, down))
        return out

    def classify(self, hX, hY, nX, nY):
        labels = super().classify(hX, hY, nX, nY)
        labels[hX == hY + 1] = "adjacent"
        return labels

    def cases(self):
        rules = super().cases()
        rules["adjacent"] = self.shared
        return rules


class CubeCoupling(HeightCoupling):
    """Pesos de Hamming: bajar con prob. w/n."""

    def inward_probabilities(self, hX, hY, nX, nY):
        return hX / nX, hY / nY

    def classify(self, hX, hY, nX, nY):
        return np.where(hX == hY, "equal", "gap").astype(object)

    def cases(self):
        return {"gap": self.shared, "equal": self.shared}


class BoxCoupling:
    """Caja reflejante sobre vectores completos: coordenada i = floor(u d), residuo u d - i.

    En la coordenada elegida |.| crece si el residuo < q, con q = 1 en 0, 1/2
    en el interior y 0 en la cara. En 0 el signo es + si el residuo < 1/2.
    """

    def __init__(self, family: ReflectingBox):
        self.family = family
        self.d = family.dims

    @staticmethod
    def outward_probability(a: np.ndarray, bound: np.ndarray) -> np.ndarray:
        return np.where(a == 0, 1.0, np.where(a >= bound, 0.0, 0.5))

    def check(self, X, Y, nX, nY) -> None:
        if np.any(np.asarray(nX) < np.asarray(nY)):
            raise CouplingPreconditionError("X debe estar en un nivel >= al de Y")
        if np.any(np.abs(X) < np.abs(Y)):
            raise CouplingPreconditionError("se requiere |X_i| >= |Y_i| en cada coordenada")

    def classify(self, aX, aY, bX, bY) -> np.ndarray:
        labels = np.full(aX.shape, "gap", dtype=object)
        equal = aX == aY
        labels[equal & (aY == 0)] = "i"
        labels[equal & (aY > 0) & (aY < bY)] = "ii"
        labels[equal & (aY > 0) & (aY == bY) & (aX < bX)] = "iii"
        labels[equal & (aY > 0) & (aY == bY) & (aX == bX)] = "iv"
        return labels

    def axis_bounds(self, levels: np.ndarray, axis: np.ndarray) -> np.ndarray:
        """b_axis(n) por trayectoria, una llamada a bounds() por nivel distinto."""
        out = np.empty(axis.shape, dtype=np.int64)
        for level in np.unique(levels):
            mask = levels == level
            out[mask] = np.asarray(self.family.bounds(int(level)), dtype=np.int64)[axis[mask]]
        return out

    def move(self, residual, q):
        return residual < q

    def step(self, X, Y, nX, nY, u):
        X = np.array(X, dtype=np.int64, ndmin=2)
        Y = np.array(Y, dtype=np.int64, ndmin=2)
        u = np.atleast_1d(np.asarray(u, dtype=float))
        rows = np.arange(X.shape[0])
        scaled = u * self.d
        axis = np.minimum(scaled.astype(np.int64), self.d - 1)
        residual = scaled - axis
        nX = np.broadcast_to(np.asarray(nX, dtype=np.int64), rows.shape)
        nY = np.broadcast_to(np.asarray(nY, dtype=np.int64), rows.shape)
        bX, bY = self.axis_bounds(nX, axis), self.axis_bounds(nY, axis)
        xi, yi = X[rows, axis], Y[rows, axis]
        aX, aY = np.abs(xi), np.abs(yi)
        labels = self.classify(aX, aY, bX, bY)
        outX = self.move(residual, self.outward_probability(aX, bX))
        outY = self.move(residual, self.outward_probability(aY, bY))
        sign_at_zero = np.where(residual < 0.5, 1, -1)
        X, Y = X.copy(), Y.copy()
        X[rows, axis] = xi + np.where(outX, np.where(xi == 0, sign_at_zero, np.sign(xi)), -np.sign(xi))
        Y[rows, axis] = yi + np.where(outY, np.where(yi == 0, sign_at_zero, np.sign(yi)), -np.sign(yi))
        return X, Y, labels


# ---------------------------------------------------------------------------
# Scalar coupled steps
# ---------------------------------------------------------------------------


def _uniform(rng: np.random.Generator) -> float:
    return float(rng.random())


def _scalar_step(coupling: HeightCoupling, hX: int, hY: int, nX: int, nY: int, rng) -> CoupledStep:
    coupling.check(hX, hY, nX, nY)
    u = _uniform(rng)
    x, y, labels = coupling.step(np.array([hX]), np.array([hY]), np.array([nX]), np.array([nY]), np.array([u]))
    return CoupledStep(x=(int(x[0]),), y=(int(y[0]),), case=str(labels[0]), uniform=u)


def coupled_step_tree(hX: int, hY: int, nX: int, nY: int, k: int, lam: float, rng: np.random.Generator) -> CoupledStep:
    return _scalar_step(TreeCoupling(k, lam), hX, hY, nX, nY, rng)


def coupled_step_cube(wX: int, wY: int, nX: int, nY: int, rng: np.random.Generator) -> CoupledStep:
    return _scalar_step(CubeCoupling(), wX, wY, nX, nY, rng)


def coupled_step_leveltree(hX: int, hY: int, nX: int, nY: int, profile: LevelProfile, gamma: float,
                           rng: np.random.Generator) -> CoupledStep:
    coupling = LevelTreeCoupling(profile, gamma)
    if gamma == 0 and (hX - hY) % 2:
        raise CouplingPreconditionError("el árbol de niveles activo requiere alturas de igual paridad")
    return _scalar_step(coupling, hX, hY, nX, nY, rng)


def coupled_step_box(X, Y, nX: int, nY: int, family: ReflectingBox, rng: np.random.Generator) -> CoupledStep:
    coupling = BoxCoupling(family)
    coupling.check(np.asarray(X), np.asarray(Y), nX, nY)
    u = _uniform(rng)
    Xn, Yn, labels = coupling.step(X, Y, nX, nY, u)
    return CoupledStep(x=tuple(int(v) for v in Xn[0]), y=tuple(int(v) for v in Yn[0]), case=str(labels[0]), uniform=u)


def coupling_for(family: TransitionFamily):
    if isinstance(family, (KaryTree, HeightPath)):
        return TreeCoupling(family.k, family.lam)
    if isinstance(family, (LevelTree, LevelTreeHeightChain)):
        return LevelTreeCoupling(family.profile, family.gamma)
    if isinstance(family, (Hypercube, HammingWeightChain)):
        return CubeCoupling()
    if isinstance(family, ReflectingBox):
        return BoxCoupling(family)
    raise UnsupportedCouplingError(f"sin acoplamiento monótono para {family.describe()}")


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------


def _check_order(f: DurationSchedule, g: DurationSchedule, horizon: int, max_phases: int) -> None:
    if not timelines_ordered(f, g, horizon, max_phases):
        raise PrefixOrderError(f"{f.describe()} no crece al menos tan rápido como {g.describe()} antes de t={horizon}")


def verify_lhagg_exact(
    family: TransitionFamily,
    f: DurationSchedule,
    g: DurationSchedule,
    horizon: int,
    tolerance: float = 1e-12,
    mode: NumericMode = NumericMode.FLOAT,
    lumped: Optional[bool] = None,
    state_cap: int = 2**22,
    max_phases: int = 100_000,
) -> DominanceReport:
    """max_t (R_f(t) - R_g(t)) por evolución exacta; pasa si <= tolerance."""
    _check_order(f, g, horizon, max_phases)
    lumped = family.lumpable if lumped is None else lumped
    series_f = run_exact(family, f, horizon, mode=mode, lumped=lumped, state_cap=state_cap, max_phases=max_phases)
    series_g = run_exact(family, g, horizon, mode=mode, lumped=lumped, state_cap=state_cap, max_phases=max_phases)
    source_f = series_f.exact_R or series_f.R
    source_g = series_g.exact_R or series_g.R
    gaps = [rf - rg for rf, rg in zip(source_f, source_g)]
    worst = float(max(gaps))
    passed = worst <= tolerance
    (logger.success if passed else logger.error)(
        f"{'✅' if passed else '❌'} LHaGG exacto {family.describe()}: máx R_f - R_g = {worst:.3e}"
    )
    return DominanceReport(
        family=family.describe(), f=f.describe(), g=g.describe(), method="exact",
        horizon=horizon, tolerance=tolerance, max_violation=worst, passed=passed,
        identical=f == g,
    )


def _initial_states(coupling, trials: int) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(coupling, BoxCoupling):
        shape = (trials, coupling.d)
    else:
        shape = (trials,)
    return np.zeros(shape, dtype=np.int64), np.zeros(shape, dtype=np.int64)


def _summary(coupling, state: np.ndarray) -> np.ndarray:
    return np.abs(state) if isinstance(coupling, BoxCoupling) else state[:, None]


def verify_coupling_sim(
    family: TransitionFamily,
    f: DurationSchedule,
    g: DurationSchedule,
    horizon: int,
    trials: int,
    seed: int,
    coupling=None,
    dump_path: Optional[Path] = None,
    block_size: int = 4096,
    max_phases: int = 100_000,
) -> DominanceReport:
    """Corre `trials` trayectorias acopladas y cuenta pasos con dominancia rota.

    Los uniformes vienen de un Philox por bloque de trayectorias (SeedSequence.spawn).
    """
    _check_order(f, g, horizon, max_phases)
    coupling = coupling if coupling is not None else coupling_for(family)
    phases_x = f.timeline(max_phases).phase_array(horizon, hold=True)
    phases_y = g.timeline(max_phases).phase_array(horizon, hold=True)

    violations = 0
    identical = True
    failing: Optional[CouplingTrace] = None
    children = np.random.SeedSequence(seed).spawn(max(1, -(-trials // block_size)))
    for block, seed_seq in enumerate(children):
        size = min(block_size, trials - block * block_size)
        rng = np.random.Generator(np.random.Philox(seed_seq))
        X, Y = _initial_states(coupling, size)
        history: List[tuple] = []
        for t in range(horizon):
            u = rng.random(size)
            X, Y, labels = coupling.step(X, Y, phases_x[t], phases_y[t], u)
            hX, hY = _summary(coupling, X), _summary(coupling, Y)
            broken = np.any(hX < hY, axis=1)
            violations += int(broken.sum())
            identical = identical and bool(np.array_equal(X, Y))
            # historial solo si hay dónde volcar la trayectoria fallida
            if failing is None and dump_path is not None:
                history.append((hX, hY, labels, u))
                if broken.any():
                    failing = _extract_trace(history, int(np.flatnonzero(broken)[0]), seed)

    trajectory_file = None
    if failing is not None and dump_path is not None:
        trajectory_file = str(_dump_trace(failing, Path(dump_path)))
    passed = violations == 0
    if passed:
        logger.success(f"✅ Acoplamiento {family.describe()}: 0 violaciones en {trials} trayectorias")
    else:
        logger.error(f"❌ Acoplamiento {family.describe()}: {violations} pasos con dominancia rota")
    return DominanceReport(
        family=family.describe(), f=f.describe(), g=g.describe(), method="coupling",
        horizon=horizon, tolerance=0.0, max_violation=float(violations), violations=violations,
        trials=trials, seed=seed, identical=identical, trajectory_file=trajectory_file, passed=passed,
    )


def _extract_trace(history: List[tuple], trial: int, seed: int) -> CouplingTrace:
    """Trayectoria `trial` hasta su primera violación."""
    trace = CouplingTrace(seed=seed)
    for hX, hY, labels, u in history:
        trace.h_x.append(tuple(int(v) for v in hX[trial]))
        trace.h_y.append(tuple(int(v) for v in hY[trial]))
        trace.cases.append(str(labels[trial]))
        trace.uniforms.append(float(u[trial]))
        trace.dominated.append(bool(np.all(hX[trial] >= hY[trial])))
    return trace


def _dump_trace(trace: CouplingTrace, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(trace.rows(), columns=["t", "hX", "hY", "case_label", "uniform_draw"])
    frame.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
    logger.info(f"📄 Trayectoria fallida guardada en {path}")
    return path

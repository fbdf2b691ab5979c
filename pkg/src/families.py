"""Familias de grafos crecientes como matrices estocásticas dispersas.

Cada familia numera los estados del nivel n como 0..|V(n)|-1 con el origen en 0
e incluye el nivel n en el n+1 (V(n) contenido en V(n+1)). Las matrices salen de
arrays de índices de numpy y una tabla corta de valores exactos, así que el mismo
código produce la csr en float y las filas exactas con Fraction.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from src.errors import EmbeddingError, FamilyError, LumpingError, StateCapError

DEFAULT_STATE_CAP = 2**22


class NumericMode(str, Enum):
    FLOAT = "float"
    EXACT = "exact"


def exact(x) -> Fraction:
    """Fraction exacta de un parámetro real (0.5 -> 1/2, no el binario de 0.5)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(str(x))


# ---------------------------------------------------------------------------
# State indices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StateIndex:
    """Biyección estados <-> 0..size-1 de un nivel, con paridad por estado."""

    family: str
    level: int
    size: int
    parity: np.ndarray = field(repr=False, compare=False)

    origin: int = 0

    def _check_target(self, other: "StateIndex") -> None:
        if other.family != self.family or other.level < self.level:
            raise EmbeddingError(
                f"no hay embedding de {self.family}@{self.level} en {other.family}@{other.level}"
            )

    def embedding_to(self, other: "StateIndex") -> np.ndarray:
        """Índices en `other` de los estados de este nivel."""
        self._check_target(other)
        return np.arange(self.size, dtype=np.int64)

    def label_of(self, i: int) -> Tuple:
        return (int(i),)

    def index_of(self, label: Sequence[int]) -> int:
        i = int(label[0])
        if not 0 <= i < self.size:
            raise FamilyError(f"estado {tuple(label)} no existe en el nivel {self.level}")
        return i


@dataclass(frozen=True)
class TreeIndex(StateIndex):
    """Orden BFS: los hijos de i son k*i+1..k*i+k. El embedding es la identidad."""

    k: int = 2

    def heights(self) -> np.ndarray:
        return np.repeat(np.arange(self.level + 1), [self.k**h for h in range(self.level + 1)])

    def label_of(self, i: int) -> Tuple:
        path = []
        while i > 0:
            path.append((i - 1) % self.k)
            i = (i - 1) // self.k
        return tuple(reversed(path))

    def index_of(self, label: Sequence[int]) -> int:
        if len(label) > self.level or any(not 0 <= c < self.k for c in label):
            raise FamilyError(f"nodo {tuple(label)} no existe en el nivel {self.level}")
        i = 0
        for c in label:
            i = self.k * i + 1 + int(c)
        return i


@dataclass(frozen=True)
class LevelTreeIndex(StateIndex):
    """Orden BFS con c_h hijos por vértice de altura h."""

    children: Tuple[int, ...] = ()

    def level_sizes(self) -> List[int]:
        sizes = [1]
        for c in self.children:
            sizes.append(sizes[-1] * c)
        return sizes

    def offsets(self) -> List[int]:
        return [0] + list(np.cumsum(self.level_sizes()))[:-1]

    def heights(self) -> np.ndarray:
        return np.repeat(np.arange(self.level + 1), self.level_sizes())

    def embedding_to(self, other: "StateIndex") -> np.ndarray:
        self._check_target(other)
        assert isinstance(other, LevelTreeIndex)
        if other.children[: len(self.children)] == self.children:
            return np.arange(self.size, dtype=np.int64)
        result = np.empty(self.size, dtype=np.int64)
        old_offsets, new_offsets = self.offsets(), other.offsets()
        for h, count in enumerate(self.level_sizes()):
            rank = np.arange(count, dtype=np.int64)
            new_rank = np.zeros(count, dtype=np.int64)
            # dígitos en base mixta, del menos significativo (altura h-1) al más
            scale = 1
            for j in range(h - 1, -1, -1):
                digit = rank % self.children[j]
                rank //= self.children[j]
                new_rank += digit * scale
                scale *= other.children[j]
            result[old_offsets[h] : old_offsets[h] + count] = new_offsets[h] + new_rank
        return result

    def label_of(self, i: int) -> Tuple:
        offsets = self.offsets()
        h = int(np.searchsorted(offsets, i, side="right")) - 1
        rank = i - offsets[h]
        digits = []
        for j in range(h - 1, -1, -1):
            digits.append(rank % self.children[j])
            rank //= self.children[j]
        return tuple(reversed(digits))

    def index_of(self, label: Sequence[int]) -> int:
        h = len(label)
        if h > self.level or any(not 0 <= c < self.children[j] for j, c in enumerate(label)):
            raise FamilyError(f"nodo {tuple(label)} no existe en el nivel {self.level}")
        rank = 0
        for j, c in enumerate(label):
            rank = rank * self.children[j] + int(c)
        return self.offsets()[h] + rank


def _zigzag(x: np.ndarray) -> np.ndarray:
    # 0, 1, -1, 2, -2, ... -> 0, 1, 2, 3, 4, ...
    return np.where(x > 0, 2 * x - 1, -2 * x)


def _unzigzag(z: np.ndarray) -> np.ndarray:
    return np.where(z % 2 == 1, (z + 1) // 2, -(z // 2))


@dataclass(frozen=True)
class BoxIndex(StateIndex):
    """Coordenadas en prod_i {-b_i..b_i}; cada coordenada se codifica en zigzag (origen = 0)."""

    bounds: Tuple[int, ...] = ()

    @property
    def radices(self) -> np.ndarray:
        return 2 * np.asarray(self.bounds, dtype=np.int64) + 1

    def decode(self, indices: np.ndarray) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64)
        coords = np.empty((indices.size, len(self.bounds)), dtype=np.int64)
        rest = indices.copy()
        for i, r in enumerate(self.radices):
            coords[:, i] = _unzigzag(rest % r)
            rest //= r
        return coords

    def encode(self, coords: np.ndarray) -> np.ndarray:
        coords = np.atleast_2d(np.asarray(coords, dtype=np.int64))
        index = np.zeros(coords.shape[0], dtype=np.int64)
        scale = 1
        for i, r in enumerate(self.radices):
            index += _zigzag(coords[:, i]) * scale
            scale *= int(r)
        return index

    def embedding_to(self, other: "StateIndex") -> np.ndarray:
        self._check_target(other)
        assert isinstance(other, BoxIndex)
        if any(b_new < b for b, b_new in zip(self.bounds, other.bounds)):
            raise EmbeddingError("los límites por eje no pueden decrecer")
        return other.encode(self.decode(np.arange(self.size)))

    def label_of(self, i: int) -> Tuple:
        return tuple(int(x) for x in self.decode(np.array([i]))[0])

    def index_of(self, label: Sequence[int]) -> int:
        if len(label) != len(self.bounds) or any(abs(x) > b for x, b in zip(label, self.bounds)):
            raise FamilyError(f"estado {tuple(label)} fuera de la caja {self.bounds}")
        return int(self.encode(np.array([label]))[0])


@dataclass(frozen=True)
class CubeIndex(StateIndex):
    """El bit i es la coordenada i+1; la coordenada nueva vale 0, así que el embedding es la identidad."""

    def label_of(self, i: int) -> Tuple:
        return tuple((int(i) >> j) & 1 for j in range(self.level))

    def index_of(self, label: Sequence[int]) -> int:
        # coordenadas sobrantes a 0: el vértice ya existe (el embedding rellena con 0)
        if any(b not in (0, 1) for b in label) or any(label[self.level:]):
            raise FamilyError(f"vértice {tuple(label)} no existe en el nivel {self.level}")
        return sum(int(b) << j for j, b in enumerate(label[: self.level]))


# ---------------------------------------------------------------------------
# Sparse stochastic matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SparseStochasticMatrix:
    """Matriz estocástica por filas: csr en float, y filas exactas en modo EXACT."""

    csr: sp.csr_matrix = field(repr=False)
    mode: NumericMode = NumericMode.FLOAT
    exact_rows: Optional[Tuple[Dict[int, Fraction], ...]] = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.csr.shape[0]

    def row(self, u: int) -> Dict[int, object]:
        if self.exact_rows is not None:
            return dict(self.exact_rows[u])
        start, end = self.csr.indptr[u], self.csr.indptr[u + 1]
        return {int(v): float(p) for v, p in zip(self.csr.indices[start:end], self.csr.data[start:end])}

    def entry(self, u: int, v: int):
        if self.exact_rows is not None:
            return self.exact_rows[u].get(v, Fraction(0))
        return float(self.csr[u, v])

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.csr.sum(axis=1)).ravel()

    def is_stochastic(self, tolerance: float = 1e-12) -> bool:
        if self.exact_rows is not None:
            return all(sum(row.values()) == 1 for row in self.exact_rows)
        if self.csr.nnz and self.csr.data.min() < 0:
            return False
        return bool(np.all(np.abs(self.row_sums() - 1.0) <= tolerance))

    def to_coordinate_text(self) -> str:
        """Volcado fila, columna, valor (numerador denominador en modo exacto)."""
        lines = []
        if self.exact_rows is not None:
            for u, row in enumerate(self.exact_rows):
                for v in sorted(row):
                    lines.append(f"{u} {v} {row[v].numerator} {row[v].denominator}")
        else:
            coo = self.csr.tocoo()
            order = np.lexsort((coo.col, coo.row))
            for u, v, p in zip(coo.row[order], coo.col[order], coo.data[order]):
                lines.append(f"{u} {v} {float(p)!r}")
        return "\n".join(lines)


def _assemble(size: int, rows, cols, codes, table: Sequence[Fraction], mode: NumericMode) -> SparseStochasticMatrix:
    rows = np.concatenate([np.asarray(r, dtype=np.int64).ravel() for r in rows]) if rows else np.zeros(0, np.int64)
    cols = np.concatenate([np.asarray(c, dtype=np.int64).ravel() for c in cols]) if cols else np.zeros(0, np.int64)
    codes = np.concatenate([np.asarray(c, dtype=np.int64).ravel() for c in codes]) if codes else np.zeros(0, np.int64)
    values = np.array([float(v) for v in table], dtype=float)
    data = values[codes]
    keep = data != 0.0
    rows, cols, codes, data = rows[keep], cols[keep], codes[keep], data[keep]
    csr = sp.csr_matrix((data, (rows, cols)), shape=(size, size))
    csr.sum_duplicates()
    exact_rows = None
    if mode == NumericMode.EXACT:
        built: List[Dict[int, Fraction]] = [dict() for _ in range(size)]
        for u, v, code in zip(rows.tolist(), cols.tolist(), codes.tolist()):
            built[u][v] = built[u].get(v, Fraction(0)) + table[code]
        exact_rows = tuple(built)
    return SparseStochasticMatrix(csr=csr, mode=mode, exact_rows=exact_rows)


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------


class TransitionFamily(BaseModel, ABC):
    """n -> (V(n), P_n) con V(n) incluido en V(n+1)."""

    model_config = ConfigDict(frozen=True)

    key: str = "family"

    @property
    def is_busy(self) -> bool:
        """gamma = 0: paseo con periodo 2."""
        return getattr(self, "gamma", 0) == 0

    @abstractmethod
    def state_count(self, n: int) -> int: ...

    @abstractmethod
    def index(self, n: int) -> StateIndex: ...

    @abstractmethod
    def _entries(self, n: int, idx: StateIndex):
        """(rows, cols, codes, table) de las entradas no nulas."""

    @abstractmethod
    def describe(self) -> str: ...

    def start_index(self, n: int = 1) -> int:
        return 0

    def lumped(self) -> "TransitionFamily":
        raise LumpingError(f"la familia {self.describe()} no tiene proyección exacta")

    @property
    def lumpable(self) -> bool:
        try:
            self.lumped()
        except LumpingError:
            return False
        return True

    def build(
        self, n: int, mode: NumericMode = NumericMode.FLOAT, state_cap: int = DEFAULT_STATE_CAP
    ) -> Tuple[StateIndex, SparseStochasticMatrix]:
        if n < 1:
            raise FamilyError(f"nivel inválido n={n}")
        count = self.state_count(n)
        if count > state_cap:
            raise StateCapError(
                f"{self.describe()} en n={n} tiene {count} estados (límite {state_cap})"
            )
        idx = self.index(n)
        rows, cols, codes, table = self._entries(n, idx)
        return idx, _assemble(idx.size, rows, cols, codes, table, mode)


def _parity(values: np.ndarray) -> np.ndarray:
    return (np.asarray(values) % 2).astype(np.int8)


def _anchored(parity: np.ndarray, start: int) -> np.ndarray:
    """Paridad relativa al estado inicial: el inicio siempre es par."""
    return parity ^ parity[start]


class KaryTree(TransitionFamily):
    key: str = "karytree"
    k: int = Field(ge=2)
    lam: float = Field(gt=0)

    def state_count(self, n: int) -> int:
        return (self.k ** (n + 1) - 1) // (self.k - 1)

    def index(self, n: int) -> TreeIndex:
        size = self.state_count(n)
        heights = np.repeat(np.arange(n + 1), [self.k**h for h in range(n + 1)])
        return TreeIndex(family=self.describe(), level=n, size=size, parity=_parity(heights), k=self.k)

    def _entries(self, n, idx):
        k, lam = self.k, exact(self.lam)
        table = [Fraction(1, k), 1 / (lam + k), lam / (lam + k), Fraction(1)]
        first_leaf = (k**n - 1) // (k - 1)
        rows, cols, codes = [np.zeros(k, np.int64)], [np.arange(1, k + 1)], [np.zeros(k, np.int64)]
        internal = np.arange(1, first_leaf, dtype=np.int64)
        if internal.size:
            rep = np.repeat(internal, k)
            rows += [rep, internal]
            cols += [k * rep + 1 + np.tile(np.arange(k), internal.size), (internal - 1) // k]
            codes += [np.full(rep.size, 1), np.full(internal.size, 2)]
        leaves = np.arange(first_leaf, idx.size, dtype=np.int64)
        rows.append(leaves)
        cols.append((leaves - 1) // k)
        codes.append(np.full(leaves.size, 3))
        return rows, cols, codes, table

    def lumped(self) -> "HeightPath":
        return HeightPath(k=self.k, lam=self.lam)

    def describe(self) -> str:
        return f"karytree:k={self.k},lambda={self.lam:g}"


class HeightPath(TransitionFamily):
    """Cadena de alturas Q_n del árbol k-ario (n+1 estados)."""

    key: str = "heightpath"
    k: int = Field(ge=2)
    lam: float = Field(gt=0)

    def state_count(self, n: int) -> int:
        return n + 1

    def index(self, n: int) -> StateIndex:
        return StateIndex(family=self.describe(), level=n, size=n + 1, parity=_parity(np.arange(n + 1)))

    def _entries(self, n, idx):
        k, lam = self.k, exact(self.lam)
        table = [Fraction(1), k / (lam + k), lam / (lam + k)]
        inner = np.arange(1, n, dtype=np.int64)
        rows = [np.array([0, n]), inner, inner]
        cols = [np.array([1, n - 1]), inner + 1, inner - 1]
        codes = [np.array([0, 0]), np.full(inner.size, 1), np.full(inner.size, 2)]
        return rows, cols, codes, table

    def lumped(self) -> "HeightPath":
        return self

    def describe(self) -> str:
        return f"heightpath:k={self.k},lambda={self.lam:g}"


class AxisBound(BaseModel):
    """b(n) = max(1, round(c * n^e)); no decreciente porque c > 0 y e >= 0."""

    model_config = ConfigDict(frozen=True)

    c: float = Field(default=1.0, gt=0)
    e: float = Field(default=1.0, ge=0)

    def __call__(self, n: int) -> int:
        return max(1, round(self.c * n**self.e))

    def describe(self) -> str:
        return f"{self.c:g}:{self.e:g}"


class ReflectingBox(TransitionFamily, ABC):
    """Paseo simple con reflexión en prod_i {-b_i(n)..b_i(n)}."""

    @property
    @abstractmethod
    def dims(self) -> int: ...

    @abstractmethod
    def bounds(self, n: int) -> Tuple[int, ...]: ...

    def state_count(self, n: int) -> int:
        return math.prod(2 * b + 1 for b in self.bounds(n))

    def index(self, n: int) -> BoxIndex:
        bounds = self.bounds(n)
        draft = BoxIndex(family=self.describe(), level=n, size=self.state_count(n), parity=np.zeros(0, np.int8), bounds=bounds)
        coords = draft.decode(np.arange(draft.size))
        parity = _parity(np.abs(coords).sum(axis=1))
        return BoxIndex(family=self.describe(), level=n, size=draft.size, parity=parity, bounds=bounds)

    def _entries(self, n, idx):
        d = self.dims
        table = [Fraction(1, 2 * d), Fraction(1, d)]
        states = np.arange(idx.size, dtype=np.int64)
        coords = idx.decode(states)
        rows, cols, codes = [], [], []
        for i, b in enumerate(idx.bounds):
            inside = np.abs(coords[:, i]) < b
            for step in (1, -1):
                moved = coords[inside].copy()
                moved[:, i] += step
                rows.append(states[inside])
                cols.append(idx.encode(moved))
                codes.append(np.zeros(int(inside.sum()), np.int64))
            face = ~inside
            moved = coords[face].copy()
            moved[:, i] -= np.sign(moved[:, i])
            rows.append(states[face])
            cols.append(idx.encode(moved))
            codes.append(np.ones(int(face.sum()), np.int64))
        return rows, cols, codes, table


class GenBox(ReflectingBox):
    """Caja generalizada: límite b_i(n) = max(1, round(c_i n^e_i)) por eje."""

    key: str = "genbox"
    axes: Tuple[AxisBound, ...] = Field(min_length=1)

    @property
    def dims(self) -> int:
        return len(self.axes)

    def bounds(self, n: int) -> Tuple[int, ...]:
        return tuple(axis(n) for axis in self.axes)

    def describe(self) -> str:
        return "genbox:b=" + "/".join(axis.describe() for axis in self.axes)


class Box(ReflectingBox):
    """Caja {-n..n}^d."""

    key: str = "box"
    d: int = Field(default=1, ge=1)

    @property
    def dims(self) -> int:
        return self.d

    @property
    def axes(self) -> Tuple[AxisBound, ...]:
        return tuple(AxisBound() for _ in range(self.d))

    def bounds(self, n: int) -> Tuple[int, ...]:
        return (n,) * self.d

    def describe(self) -> str:
        return f"box:d={self.d}"


class Hypercube(TransitionFamily):
    key: str = "hypercube"

    def state_count(self, n: int) -> int:
        return 2**n

    def index(self, n: int) -> CubeIndex:
        weights = np.zeros(2**n, dtype=np.int64)
        for j in range(n):
            weights += (np.arange(2**n) >> j) & 1
        return CubeIndex(family="hypercube", level=n, size=2**n, parity=_parity(weights))

    def _entries(self, n, idx):
        states = np.arange(idx.size, dtype=np.int64)
        rows = [states] * n
        cols = [states ^ (1 << j) for j in range(n)]
        codes = [np.zeros(idx.size, np.int64)] * n
        return rows, cols, codes, [Fraction(1, n)]

    def lumped(self) -> "HammingWeightChain":
        return HammingWeightChain()

    def describe(self) -> str:
        return "hypercube"


class HammingWeightChain(TransitionFamily):
    """Cadena de Ehrenfest: peso w baja con prob. w/n y sube con (n-w)/n."""

    key: str = "hamming"

    def state_count(self, n: int) -> int:
        return n + 1

    def index(self, n: int) -> StateIndex:
        return StateIndex(family="hamming", level=n, size=n + 1, parity=_parity(np.arange(n + 1)))

    def _entries(self, n, idx):
        table = [Fraction(j, n) for j in range(n + 1)]
        w = np.arange(n + 1, dtype=np.int64)
        down, up = w > 0, w < n
        rows = [w[down], w[up]]
        cols = [w[down] - 1, w[up] + 1]
        codes = [w[down], n - w[up]]
        return rows, cols, codes, table

    def lumped(self) -> "HammingWeightChain":
        return self

    def describe(self) -> str:
        return "hamming"


class LevelProfile(BaseModel):
    """Número de hijos por altura en cada nivel: children(n) = (c_0, ..., c_{n-1})."""

    model_config = ConfigDict(frozen=True)

    k: Optional[int] = Field(default=None, ge=1)
    rows: Tuple[Tuple[int, ...], ...] = ()

    @classmethod
    def kary(cls, k: int) -> "LevelProfile":
        return cls(k=k)

    @classmethod
    def table(cls, rows: Sequence[Sequence[int]]) -> "LevelProfile":
        profile = cls(rows=tuple(tuple(int(c) for c in row) for row in rows))
        profile.validate_rows()
        return profile

    def validate_rows(self) -> None:
        for n, row in enumerate(self.rows, start=1):
            if len(row) != n:
                raise FamilyError(f"el nivel {n} necesita {n} alturas, tiene {len(row)}")
            if any(c < 1 for c in row):
                raise FamilyError(f"el nivel {n} tiene alturas sin hijos: {row}")
            if n > 1 and any(c < prev for c, prev in zip(row, self.rows[n - 2])):
                raise FamilyError(f"el nivel {n} reduce hijos respecto al nivel {n - 1}")

    def children(self, n: int) -> Tuple[int, ...]:
        if self.k is not None:
            return (self.k,) * n
        if n > len(self.rows):
            raise FamilyError(f"el perfil solo define {len(self.rows)} niveles (pedido n={n})")
        return self.rows[n - 1]

    def edge_growth_base(self) -> Optional[float]:
        """|E_n| ~ base^n cuando se conoce simbólicamente."""
        return float(self.k) if self.k is not None else None

    def describe(self) -> str:
        if self.k is not None:
            return f"k={self.k}"
        return "rows=" + ";".join("-".join(str(c) for c in row) for row in self.rows)


def _degree_table(degrees: Sequence[int], gamma: Fraction) -> Tuple[List[Fraction], Dict[int, int]]:
    table = [gamma]
    code_of = {}
    for deg in sorted(set(degrees)):
        code_of[deg] = len(table)
        table.append((1 - gamma) / deg)
    return table, code_of


class LevelTree(TransitionFamily):
    """Árbol de niveles: self-loop gamma y (1-gamma)/deg_n(u) a cada vecino."""

    key: str = "leveltree"
    profile: LevelProfile
    gamma: float = Field(default=0.0, ge=0, lt=1)

    def state_count(self, n: int) -> int:
        return sum(math.prod(self.profile.children(n)[:h]) for h in range(n + 1))

    def index(self, n: int) -> LevelTreeIndex:
        children = self.profile.children(n)
        sizes = [math.prod(children[:h]) for h in range(n + 1)]
        heights = np.repeat(np.arange(n + 1), sizes)
        return LevelTreeIndex(family=self.describe(), level=n, size=sum(sizes), parity=_parity(heights), children=children)

    def _entries(self, n, idx):
        children = idx.children
        degrees = [children[0]] + [c + 1 for c in children[1:]] + [1]
        table, code_of = _degree_table(degrees, exact(self.gamma))
        offsets, sizes = idx.offsets(), idx.level_sizes()
        rows, cols, codes = [], [], []
        if self.gamma > 0:
            states = np.arange(idx.size, dtype=np.int64)
            rows.append(states)
            cols.append(states)
            codes.append(np.zeros(idx.size, np.int64))
        for h in range(n + 1):
            rank = np.arange(sizes[h], dtype=np.int64)
            here = offsets[h] + rank
            code = code_of[degrees[h]]
            if h < n:
                c = children[h]
                rep = np.repeat(here, c)
                rows.append(rep)
                cols.append(offsets[h + 1] + np.repeat(rank, c) * c + np.tile(np.arange(c), sizes[h]))
                codes.append(np.full(rep.size, code))
            if h > 0:
                rows.append(here)
                cols.append(offsets[h - 1] + rank // children[h - 1])
                codes.append(np.full(here.size, code))
        return rows, cols, codes, table

    def lumped(self) -> "LevelTreeHeightChain":
        return LevelTreeHeightChain(profile=self.profile, gamma=self.gamma)

    def describe(self) -> str:
        return f"leveltree:{self.profile.describe()},gamma={self.gamma:g}"


class LevelTreeHeightChain(TransitionFamily):
    """Proyección por alturas del árbol de niveles."""

    key: str = "leveltree-height"
    profile: LevelProfile
    gamma: float = Field(default=0.0, ge=0, lt=1)

    def state_count(self, n: int) -> int:
        return n + 1

    def index(self, n: int) -> StateIndex:
        return StateIndex(family=self.describe(), level=n, size=n + 1, parity=_parity(np.arange(n + 1)))

    def _entries(self, n, idx):
        gamma = exact(self.gamma)
        children = self.profile.children(n)
        table = [gamma]
        rows, cols, codes = [], [], []

        def add(u, v, value):
            rows.append(np.array([u]))
            cols.append(np.array([v]))
            codes.append(np.array([len(table)]))
            table.append(value)

        for h in range(n + 1):
            if gamma > 0:
                rows.append(np.array([h]))
                cols.append(np.array([h]))
                codes.append(np.array([0]))
            if h == 0:
                add(0, 1, 1 - gamma)
            elif h == n:
                add(n, n - 1, 1 - gamma)
            else:
                c = children[h]
                add(h, h + 1, (1 - gamma) * Fraction(c, c + 1))
                add(h, h - 1, (1 - gamma) * Fraction(1, c + 1))
        return rows, cols, codes, table

    def lumped(self) -> "LevelTreeHeightChain":
        return self

    def describe(self) -> str:
        return f"leveltree-height:{self.profile.describe()},gamma={self.gamma:g}"


# 1/M(n) ~ rho^n * n^-a * (ln n)^-b
GROWTH_INVERSE_SERIES = {
    "const": (1.0, 0.0, 0.0),
    "linear": (1.0, 1.0, 0.0),
    "quadratic": (1.0, 2.0, 0.0),
    "cubic": (1.0, 3.0, 0.0),
    "nlogn": (1.0, 1.0, 1.0),
    "nlog2n": (1.0, 1.0, 2.0),
    "exp2": (0.5, 0.0, 0.0),
}


class GrowthFunction(BaseModel):
    """Número de hojas M(n) de la estrella."""

    model_config = ConfigDict(frozen=True)

    kind: str = Field(default="linear", pattern="^(" + "|".join(GROWTH_INVERSE_SERIES) + ")$")
    c: int = Field(default=1, ge=1)

    def __call__(self, n: int) -> int:
        ln = math.log(n)
        value = {
            "const": 1.0,
            "linear": n,
            "quadratic": n**2,
            "cubic": n**3,
            "nlogn": n * ln,
            "nlog2n": n * ln**2,
            "exp2": 2.0**n,
        }[self.kind]
        return max(1, round(self.c * value))

    def inverse_series(self) -> Tuple[float, float, float]:
        return GROWTH_INVERSE_SERIES[self.kind]

    def describe(self) -> str:
        return self.kind if self.c == 1 else f"{self.kind}*{self.c}"


class Star(TransitionFamily):
    """Estrella con centro r (índice 0) y hojas v_1..v_M(n) (índices 1..M)."""

    key: str = "star"
    growth: GrowthFunction = Field(default_factory=GrowthFunction)
    gamma: float = Field(default=0.0, ge=0, lt=1)
    start: str = Field(default="root", pattern="^(root|leaf)$")

    def state_count(self, n: int) -> int:
        return self.growth(n) + 1

    def start_index(self, n: int = 1) -> int:
        return 0 if self.start == "root" else 1

    def index(self, n: int) -> StateIndex:
        m = self.growth(n)
        parity = np.ones(m + 1, dtype=np.int8)
        parity[0] = 0
        return StateIndex(family=self.describe(), level=n, size=m + 1, parity=_anchored(parity, self.start_index(n)))

    def _entries(self, n, idx):
        gamma = exact(self.gamma)
        m = self.growth(n)
        table = [gamma, (1 - gamma) / m, 1 - gamma]
        leaves = np.arange(1, m + 1, dtype=np.int64)
        rows = [np.zeros(m, np.int64), leaves]
        cols = [leaves, np.zeros(m, np.int64)]
        codes = [np.full(m, 1), np.full(m, 2)]
        if gamma > 0:
            states = np.arange(m + 1, dtype=np.int64)
            rows.append(states)
            cols.append(states)
            codes.append(np.zeros(m + 1, np.int64))
        return rows, cols, codes, table

    def lumped(self) -> "StarLumpedChain":
        return StarLumpedChain(growth=self.growth, gamma=self.gamma, start=self.start)

    def describe(self) -> str:
        return f"star:M={self.growth.describe()},gamma={self.gamma:g},start={self.start}"


class StarLumpedChain(TransitionFamily):
    """Estrella agregada en {r, v_1, resto de hojas}."""

    key: str = "star-lumped"
    growth: GrowthFunction = Field(default_factory=GrowthFunction)
    gamma: float = Field(default=0.0, ge=0, lt=1)
    start: str = Field(default="root", pattern="^(root|leaf)$")

    def state_count(self, n: int) -> int:
        return 3

    def start_index(self, n: int = 1) -> int:
        return 0 if self.start == "root" else 1

    def index(self, n: int) -> StateIndex:
        parity = _anchored(np.array([0, 1, 1], dtype=np.int8), self.start_index(n))
        return StateIndex(family=self.describe(), level=n, size=3, parity=parity)

    def _entries(self, n, idx):
        gamma = exact(self.gamma)
        m = self.growth(n)
        table = [gamma, (1 - gamma) / m, (1 - gamma) * Fraction(m - 1, m), 1 - gamma]
        rows = [np.array([0, 0, 1, 2])]
        cols = [np.array([1, 2, 0, 0])]
        codes = [np.array([1, 2, 3, 3])]
        if gamma > 0:
            rows.append(np.arange(3))
            cols.append(np.arange(3))
            codes.append(np.zeros(3, np.int64))
        return rows, cols, codes, table

    def lumped(self) -> "StarLumpedChain":
        return self

    def describe(self) -> str:
        return f"star-lumped:M={self.growth.describe()},gamma={self.gamma:g},start={self.start}"


# ---------------------------------------------------------------------------
# Builder functions
# ---------------------------------------------------------------------------


def build_karytree(k: int, lam: float, n: int, mode: NumericMode = NumericMode.FLOAT, state_cap: int = DEFAULT_STATE_CAP):
    return KaryTree(k=k, lam=lam).build(n, mode, state_cap)


def build_height_path(k: int, lam: float, n: int, mode: NumericMode = NumericMode.FLOAT):
    return HeightPath(k=k, lam=lam).build(n, mode)


def build_box(d: int, n: int, mode: NumericMode = NumericMode.FLOAT, state_cap: int = DEFAULT_STATE_CAP):
    return Box(d=d).build(n, mode, state_cap)


def build_genbox(bounds: Sequence[AxisBound], n: int, mode: NumericMode = NumericMode.FLOAT, state_cap: int = DEFAULT_STATE_CAP):
    return GenBox(axes=tuple(bounds)).build(n, mode, state_cap)


def build_hypercube(n: int, mode: NumericMode = NumericMode.FLOAT, state_cap: int = DEFAULT_STATE_CAP):
    return Hypercube().build(n, mode, state_cap)


def build_leveltree(profile: LevelProfile, gamma: float, n: int, mode: NumericMode = NumericMode.FLOAT, state_cap: int = DEFAULT_STATE_CAP):
    return LevelTree(profile=profile, gamma=gamma).build(n, mode, state_cap)


def build_star(growth: GrowthFunction, gamma: float, n: int, mode: NumericMode = NumericMode.FLOAT, state_cap: int = DEFAULT_STATE_CAP):
    return Star(growth=growth, gamma=gamma).build(n, mode, state_cap)


def lump_by_height(family: TransitionFamily, n: int, mode: NumericMode = NumericMode.FLOAT):
    """Cadena proyectada exacta (alturas, peso de Hamming)."""
    lumped = family.lumped()
    logger.debug(f"📉 Proyectando {family.describe()} -> {lumped.describe()} en n={n}")
    return lumped.build(n, mode)

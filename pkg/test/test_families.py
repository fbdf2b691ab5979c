from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from src.engine import static_series
from src.errors import FamilyError, LumpingError, StateCapError
from src.families import (
    AxisBound,
    Box,
    GenBox,
    GrowthFunction,
    HammingWeightChain,
    HeightPath,
    Hypercube,
    KaryTree,
    LevelProfile,
    LevelTree,
    LevelTreeHeightChain,
    NumericMode,
    Star,
    StarLumpedChain,
    build_box,
    build_genbox,
    build_height_path,
    build_hypercube,
    build_karytree,
    build_leveltree,
    build_star,
    lump_by_height,
)

EXACT = NumericMode.EXACT

SMALL_FAMILIES = [
    (KaryTree(k=2, lam=1), 3),
    (KaryTree(k=3, lam=2.5), 2),
    (HeightPath(k=2, lam=0.5), 5),
    (Box(d=1), 3),
    (Box(d=2), 2),
    (GenBox(axes=(AxisBound(c=1, e=0), AxisBound(c=1, e=1))), 3),
    (Hypercube(), 4),
    (HammingWeightChain(), 6),
    (LevelTree(profile=LevelProfile.kary(2), gamma=0), 3),
    (LevelTree(profile=LevelProfile.table([[2], [2, 3], [3, 3, 4]]), gamma=0.5), 3),
    (LevelTreeHeightChain(profile=LevelProfile.kary(3), gamma=0.25), 4),
    (Star(growth=GrowthFunction(kind="linear"), gamma=0), 4),
    (Star(growth=GrowthFunction(kind="quadratic"), gamma=0.5), 3),
    (StarLumpedChain(growth=GrowthFunction(kind="linear"), gamma=0.5), 4),
]


def _ids(params):
    return [family.describe() for family, _ in params]


def test_karytree_rows():
    """Test de las filas raíz, interna y hoja del árbol binario"""
    _, P = build_karytree(2, 1, 1, mode=EXACT)
    assert P.row(0) == {1: Fraction(1, 2), 2: Fraction(1, 2)}
    assert P.row(1) == {0: Fraction(1)}

    _, P = build_karytree(2, 1, 2, mode=EXACT)
    assert P.row(1) == {0: Fraction(1, 3), 3: Fraction(1, 3), 4: Fraction(1, 3)}


def test_karytree_state_count():
    assert KaryTree(k=2, lam=1).state_count(3) == 15
    assert KaryTree(k=3, lam=1).state_count(2) == 13
    idx, P = build_karytree(3, 1, 2)
    assert idx.size == P.size == 13


def test_karytree_labels():
    idx = KaryTree(k=2, lam=1).index(3)
    for i in range(idx.size):
        assert idx.index_of(idx.label_of(i)) == i
    assert list(idx.heights()[:3]) == [0, 1, 1]
    with pytest.raises(FamilyError):
        idx.index_of((0, 0, 0, 0))


@pytest.mark.parametrize(
    "k, lam, n, up, down",
    [(2, 1, 2, Fraction(2, 3), Fraction(1, 3)), (3, 2, 3, Fraction(3, 5), Fraction(2, 5))],
)
def test_height_path_interior(k, lam, n, up, down):
    _, Q = build_height_path(k, lam, n, mode=EXACT)
    assert Q.entry(1, 2) == up
    assert Q.entry(1, 0) == down
    assert Q.entry(0, 1) == 1
    assert Q.entry(n, n - 1) == 1


def test_height_path_two_state_flip():
    _, Q = build_height_path(2, 1, 1, mode=EXACT)
    assert Q.row(0) == {1: 1}
    assert Q.row(1) == {0: 1}


def test_box_reflection_d1():
    """Test de la reflexión en la cara: el único movimiento tiene probabilidad 1/d"""
    idx, P = build_box(1, 1, mode=EXACT)
    zero, plus, minus = idx.index_of((0,)), idx.index_of((1,)), idx.index_of((-1,))
    assert P.row(zero) == {plus: Fraction(1, 2), minus: Fraction(1, 2)}
    assert P.row(plus) == {zero: Fraction(1)}


def test_box_face_row_d2():
    idx, P = build_box(2, 1, mode=EXACT)
    row = P.row(idx.index_of((1, 0)))
    assert row == {
        idx.index_of((0, 0)): Fraction(1, 2),
        idx.index_of((1, -1)): Fraction(1, 4),
        idx.index_of((1, 1)): Fraction(1, 4),
    }


def test_genbox_state_space():
    """Test de límites por eje b = (1, n)"""
    family = GenBox(axes=(AxisBound(c=1, e=0), AxisBound(c=1, e=1)))
    idx, P = family.build(2)
    assert idx.bounds == (1, 2)
    assert idx.size == 15
    coords = idx.decode(np.arange(idx.size))
    assert coords[:, 0].min() == -1 and coords[:, 0].max() == 1
    assert coords[:, 1].min() == -2 and coords[:, 1].max() == 2


def test_genbox_reduces_to_box():
    for n in (1, 2, 3):
        _, P_gen = build_genbox([AxisBound(), AxisBound()], n)
        _, P_box = build_box(2, n)
        assert (P_gen.csr != P_box.csr).nnz == 0


def test_genbox_double_bound_matches_wider_box():
    _, P_gen = build_genbox([AxisBound(c=2, e=1)], 3)
    _, P_box = build_box(1, 6)
    assert (P_gen.csr != P_box.csr).nnz == 0


def test_hypercube_rows():
    _, P = build_hypercube(1, mode=EXACT)
    assert P.row(0) == {1: 1} and P.row(1) == {0: 1}
    idx, P = build_hypercube(3, mode=EXACT)
    assert P.row(0) == {1: Fraction(1, 3), 2: Fraction(1, 3), 4: Fraction(1, 3)}
    assert idx.label_of(4) == (0, 0, 1)


def test_hypercube_embedding_pads_with_zero():
    small, big = Hypercube().index(2), Hypercube().index(3)
    embedding = small.embedding_to(big)
    i = small.index_of((0, 1))
    assert big.label_of(embedding[i]) == (0, 1, 0)


def test_hypercube_label_with_trailing_zeros():
    """Test: (0, 1, 0) ya existe en el nivel 2 como (0, 1); (0, 1, 1) todavía no"""
    small = Hypercube().index(2)
    assert small.index_of((0, 1, 0)) == small.index_of((0, 1)) == 2
    assert Hypercube().index(1).index_of((0, 0)) == 0
    with pytest.raises(FamilyError):
        small.index_of((0, 1, 1))
    with pytest.raises(FamilyError):
        small.index_of((0, 2))


def test_leveltree_reduces_to_karytree():
    """Test: gamma = 0 y k hijos por altura coincide con el árbol k-ario con lambda = 1"""
    for n in (1, 2, 3):
        _, P_level = build_leveltree(LevelProfile.kary(2), 0.0, n)
        _, P_tree = build_karytree(2, 1, n)
        assert (P_level.csr != P_tree.csr).nnz == 0


def test_leveltree_lazy_root_row():
    _, P = build_leveltree(LevelProfile.kary(2), 0.5, 1, mode=EXACT)
    assert P.row(0) == {0: Fraction(1, 2), 1: Fraction(1, 4), 2: Fraction(1, 4)}


def test_leveltree_profile_validation():
    with pytest.raises(FamilyError):
        LevelProfile.table([[2], [1, 2]])
    with pytest.raises(FamilyError):
        LevelProfile.table([[2], [2]])
    with pytest.raises(FamilyError):
        LevelProfile.table([[2]]).children(2)


def test_leveltree_embedding_with_growing_children():
    """Test: al crecer c_0 los vértices antiguos conservan su etiqueta"""
    family = LevelTree(profile=LevelProfile.table([[1], [2, 2], [2, 3, 2]]), gamma=0)
    for n in (1, 2):
        small, big = family.index(n), family.index(n + 1)
        embedding = small.embedding_to(big)
        assert len(set(embedding.tolist())) == small.size
        for i in range(small.size):
            assert big.label_of(embedding[i]) == small.label_of(i)


def test_star_rows():
    _, P = build_star(GrowthFunction(kind="linear"), 0.0, 3, mode=EXACT)
    assert P.row(0) == {1: Fraction(1, 3), 2: Fraction(1, 3), 3: Fraction(1, 3)}
    assert P.row(2) == {0: 1}
    _, P = build_star(GrowthFunction(kind="linear"), 0.5, 2, mode=EXACT)
    assert P.row(1) == {1: Fraction(1, 2), 0: Fraction(1, 2)}


def test_growth_function():
    assert GrowthFunction(kind="linear")(3) == 3
    assert GrowthFunction(kind="exp2")(3) == 8
    assert GrowthFunction(kind="quadratic", c=2)(3) == 18
    assert GrowthFunction(kind="nlogn")(1) == 1
    with pytest.raises(ValidationError):
        GrowthFunction(kind="weird")


def test_family_parameter_validation():
    with pytest.raises(ValidationError):
        KaryTree(k=1, lam=1)
    with pytest.raises(ValidationError):
        KaryTree(k=2, lam=0)
    with pytest.raises(ValidationError):
        Star(gamma=1.0)
    with pytest.raises(FamilyError):
        Hypercube().build(0)


@pytest.mark.parametrize("family, n", SMALL_FAMILIES, ids=_ids(SMALL_FAMILIES))
def test_rows_are_stochastic(family, n):
    """Test: filas estocásticas exactas en modo racional y a 1e-12 en float"""
    for level in range(1, n + 1):
        _, exact_P = family.build(level, mode=EXACT)
        assert exact_P.is_stochastic()
        _, P = family.build(level)
        assert P.is_stochastic(tolerance=1e-12)


@pytest.mark.parametrize("family, n", SMALL_FAMILIES, ids=_ids(SMALL_FAMILIES))
def test_origin_index_and_parity(family, n):
    for level in range(1, n + 1):
        idx = family.index(level)
        assert idx.origin == 0
        assert idx.parity[family.start_index(level)] == 0


@pytest.mark.parametrize("family", [Star(start="leaf"), StarLumpedChain(start="leaf")], ids=["star", "star-lumped"])
def test_star_leaf_start_is_even(family):
    """Test: con inicio en v_1 la hoja es par y el centro impar"""
    idx = family.index(3)
    assert idx.parity[1] == 0
    assert idx.parity[0] == 1
    assert list(idx.parity[2:]) == [0] * (idx.size - 2)


@pytest.mark.parametrize("family, n", SMALL_FAMILIES, ids=_ids(SMALL_FAMILIES))
def test_embedding_preserves_labels(family, n):
    """Test: V(n) incluido en V(n+1) con la misma identidad de estado"""
    for level in range(1, n):
        small, big = family.index(level), family.index(level + 1)
        embedding = small.embedding_to(big)
        assert embedding[0] == 0
        assert len(set(embedding.tolist())) == small.size
        if isinstance(family, (KaryTree, Box, GenBox, Hypercube, LevelTree)):
            for i in range(small.size):
                assert big.label_of(embedding[i]) == small.label_of(i)


def test_busy_walks_have_period_two():
    """Test: P^t(origen, origen) = 0 para t impar en familias con gamma = 0"""
    for family, n in [(KaryTree(k=2, lam=1), 3), (Box(d=2), 2), (Hypercube(), 4),
                      (LevelTree(profile=LevelProfile.kary(3), gamma=0), 2)]:
        series = static_series(family, n, 50)
        assert all(r == 0.0 for r in series.R[1::2])


@pytest.mark.parametrize("family, n", [(KaryTree(k=2, lam=1), 4), (KaryTree(k=3, lam=2), 3), (Hypercube(), 6),
                                       (LevelTree(profile=LevelProfile.kary(2), gamma=0.5), 4)])
def test_lumping_is_exact(family, n):
    """Test: la cadena proyectada devuelve el mismo R(t) que la completa"""
    full = static_series(family, n, 200)
    lumped = static_series(family, n, 200, lumped=True)
    assert np.allclose(full.R, lumped.R, atol=1e-12, rtol=0)


def test_lump_by_height():
    idx, Q = lump_by_height(KaryTree(k=2, lam=1), 3)
    _, expected = build_height_path(2, 1, 3)
    assert idx.size == 4
    assert (Q.csr != expected.csr).nnz == 0

    _, W = lump_by_height(Hypercube(), 2, mode=EXACT)
    assert W.row(1) == {0: Fraction(1, 2), 2: Fraction(1, 2)}


def test_box_is_not_lumpable():
    assert not Box(d=2).lumpable
    with pytest.raises(LumpingError):
        Box(d=2).lumped()


def test_state_cap():
    with pytest.raises(StateCapError):
        Hypercube().build(10, state_cap=100)


def test_coordinate_text_dump():
    _, P = build_hypercube(1, mode=EXACT)
    assert P.to_coordinate_text() == "0 1 1 1\n1 0 1 1"
    _, P = build_hypercube(1)
    assert P.to_coordinate_text() == "0 1 1.0\n1 0 1.0"


@given(st.integers(min_value=2, max_value=4), st.floats(min_value=0.1, max_value=6.0), st.integers(1, 4))
@settings(max_examples=60, deadline=None)
def test_karytree_stochastic_any_parameters(k, lam, n):
    _, P = build_karytree(k, lam, n)
    assert P.is_stochastic(tolerance=1e-12)

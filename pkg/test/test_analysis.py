import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.analysis import (
    SeriesTerm,
    Verdict,
    analytic_mixing_bound,
    classify,
    detailed_balance_residual,
    even_stationary_closed,
    even_stationary_numeric,
    fit_mixing_growth,
    measure_even_mixing,
    mixing_bound_name,
    p_bounds,
    p_closed,
    reversibility_weights,
    series_diagnostic,
    stationary_closed,
    weights_karytree,
)
from src.engine import run_exact
from src.errors import BoundsUndefinedError, FamilyError, NoBoundError
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
)
from src.schedule import DurationSchedule, Rounding, SymbolicScheduleFamily

EXACT = NumericMode.EXACT
TREE = KaryTree(k=2, lam=1)


def symbolic(**fields) -> DurationSchedule:
    return DurationSchedule.symbolic(SymbolicScheduleFamily(**fields))


REVERSIBLE = [
    (KaryTree(k=2, lam=1), 3),
    (KaryTree(k=2, lam=2), 3),
    (KaryTree(k=3, lam=0.5), 2),
    (HeightPath(k=2, lam=1), 6),
    (Box(d=2), 2),
    (GenBox(axes=(AxisBound(c=1, e=0), AxisBound(c=2, e=1))), 2),
    (Hypercube(), 4),
    (HammingWeightChain(), 7),
    (LevelTree(profile=LevelProfile.table([[2], [2, 3], [3, 3, 2]]), gamma=0), 3),
    (LevelTree(profile=LevelProfile.kary(2), gamma=0.5), 3),
    (LevelTreeHeightChain(profile=LevelProfile.table([[2], [2, 3], [3, 3, 2]]), gamma=0.25), 3),
    (Star(growth=GrowthFunction(kind="linear"), gamma=0), 4),
    (StarLumpedChain(growth=GrowthFunction(kind="quadratic"), gamma=0.5), 3),
]


def test_weights_karytree():
    """Test: phi(r) = 2/3, phi = 1 en altura 1 y 1/3 en las hojas (k=2, lambda=1, n=2)"""
    weights = weights_karytree(2, 1, 2, mode=EXACT)
    assert weights.values == [Fraction(2, 3), 1, 1] + [Fraction(1, 3)] * 4
    assert weights.as_array()[0] == pytest.approx(2 / 3)


def test_weights_karytree_lambda_equals_k():
    per_node = weights_karytree(3, 3, 2, mode=EXACT).values
    assert per_node[0] == Fraction(1, 2)
    assert per_node[1] == Fraction(1, 3)


@pytest.mark.parametrize("family, n", REVERSIBLE, ids=[f.describe() for f, _ in REVERSIBLE])
def test_detailed_balance_exact(family, n):
    """Test: phi(u) P(u,v) = phi(v) P(v,u) exactamente"""
    for level in range(1, n + 1):
        _, P = family.build(level, mode=EXACT)
        weights = reversibility_weights(family, level, mode=EXACT)
        assert detailed_balance_residual(weights, P) == 0
        _, P_float = family.build(level)
        assert detailed_balance_residual(reversibility_weights(family, level), P_float) <= 1e-12


@pytest.mark.parametrize("n, expected", [(1, Fraction(1)), (2, Fraction(1, 3)), (3, Fraction(1, 7)), (4, Fraction(1, 15))])
def test_p_closed_tree(n, expected):
    assert p_closed(TREE, n, mode=EXACT) == expected
    assert p_closed(HeightPath(k=2, lam=1), n, mode=EXACT) == expected


def test_p_closed_other_families():
    assert p_closed(Box(d=1), 1) == 1.0
    assert p_closed(Box(d=2), 1) == 0.5
    assert p_closed(Box(d=4), 2, mode=EXACT) == Fraction(1, 128)
    assert p_closed(Hypercube(), 5, mode=EXACT) == Fraction(1, 16)
    assert p_closed(LevelTree(profile=LevelProfile.kary(2)), 2, mode=EXACT) == Fraction(1, 3)
    assert p_closed(LevelTree(profile=LevelProfile.kary(2), gamma=0.5), 1, mode=EXACT) == Fraction(1, 2)
    linear = GrowthFunction(kind="linear")
    assert p_closed(Star(growth=linear), 4) == 1.0
    assert p_closed(Star(growth=linear, start="leaf"), 4, mode=EXACT) == Fraction(1, 4)
    assert p_closed(Star(growth=linear, gamma=0.5, start="leaf"), 4, mode=EXACT) == Fraction(1, 8)


@pytest.mark.parametrize(
    "family, n",
    [(TREE, 1), (TREE, 2), (TREE, 5), (KaryTree(k=3, lam=2), 3), (Box(d=2), 2), (Box(d=3), 2),
     (GenBox(axes=(AxisBound(c=1, e=0), AxisBound(c=1, e=1))), 3), (Hypercube(), 5),
     (LevelTree(profile=LevelProfile.table([[2], [2, 3], [3, 3, 2]])), 3),
     (Star(growth=GrowthFunction(kind="linear"), start="leaf"), 5)],
)
def test_even_stationary_closed_matches_numeric(family, n):
    """Test: phi normalizado en la clase par frente al punto fijo de P^2"""
    closed = even_stationary_closed(family, n)
    idx, P = family.build(n)
    start = family.start_index(n)
    power = even_stationary_numeric(P, idx.parity, start=start)
    solved = even_stationary_numeric(P, idx.parity, start=start, method="solve")
    assert closed.p == pytest.approx(p_closed(family, n), abs=1e-14)
    assert power.p == pytest.approx(closed.p, abs=1e-10)
    assert solved.p == pytest.approx(closed.p, abs=1e-10)
    assert np.allclose(power.vector, closed.vector, atol=1e-9)
    assert closed.vector[idx.parity != idx.parity[start]].sum() == 0


def _assert_closed_p_matches_fixed_point(family, n):
    closed = even_stationary_closed(family, n)
    idx, P = family.build(n)
    numeric = even_stationary_numeric(P, idx.parity, start=family.start_index(n))
    assert closed.p == pytest.approx(p_closed(family, n), abs=1e-14)
    assert numeric.p == pytest.approx(closed.p, abs=1e-10), (family.describe(), n)


@pytest.mark.parametrize("lam", [0.5, 1, 2])
@pytest.mark.parametrize("k", [2, 3])
def test_closed_p_grid_karytree(k, lam):
    """Test: p(n) cerrado frente al punto fijo de P^2 en el árbol completo, n <= 8"""
    family = KaryTree(k=k, lam=lam)
    for n in range(1, 9):
        _assert_closed_p_matches_fixed_point(family, n)


@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_closed_p_grid_box(d):
    for n in range(1, 4):
        _assert_closed_p_matches_fixed_point(Box(d=d), n)


def test_closed_p_grid_hypercube():
    """Test: p(n) = 2^{1-n} frente al punto fijo hasta n = 12"""
    for n in range(1, 13):
        _assert_closed_p_matches_fixed_point(Hypercube(), n)


def test_even_stationary_closed_rejects_lazy_family():
    lazy = LevelTree(profile=LevelProfile.kary(2), gamma=0.5)
    with pytest.raises(FamilyError):
        even_stationary_closed(lazy, 2)
    assert stationary_closed(lazy, 1).p == pytest.approx(0.5)
    lazy_star = Star(growth=GrowthFunction(kind="linear"), gamma=0.5)
    assert stationary_closed(lazy_star, 3).p == pytest.approx(0.5)


def test_p_bounds_examples():
    """Test: cotas del árbol (k=2, lambda=1, n=3) y de la caja (d=4, n=2)"""
    assert p_bounds(TREE, 3) == pytest.approx((1 / 32, 1 / 4))
    assert p_bounds(Box(d=4), 2) == pytest.approx((1 / 5**4, 2 / 3**4))


@pytest.mark.parametrize("family", [TREE, KaryTree(k=3, lam=1), KaryTree(k=3, lam=2), Box(d=1), Box(d=2), Box(d=4)])
def test_p_bounds_sandwich(family):
    for n in range(1, 13):
        lower, upper = p_bounds(family, n)
        assert lower <= p_closed(family, n) + 1e-15
        assert p_closed(family, n) <= upper + 1e-15


def test_p_bounds_sandwich_against_lumped_chain():
    """Test: el p(n) numérico de la cadena de alturas también queda entre las cotas"""
    for n in range(1, 13):
        idx, Q = HeightPath(k=2, lam=1).build(n)
        p = even_stationary_numeric(Q, idx.parity, method="solve").p
        lower, upper = p_bounds(TREE, n)
        assert lower - 1e-12 <= p <= upper + 1e-12


def test_p_bounds_undefined():
    with pytest.raises(BoundsUndefinedError):
        p_bounds(KaryTree(k=2, lam=2), 3)
    with pytest.raises(BoundsUndefinedError):
        p_bounds(Hypercube(), 3)
    with pytest.raises(BoundsUndefinedError):
        p_bounds(GenBox(axes=(AxisBound(),)), 3)


def test_analytic_mixing_bound():
    assert analytic_mixing_bound(HeightPath(k=2, lam=1), 10, 0.01) == pytest.approx(100 * math.log(100))
    assert analytic_mixing_bound(Hypercube(), 8, 0.5, {"cube": 2.0}) == pytest.approx(16 * math.log(16))
    assert analytic_mixing_bound(Box(d=2), 3, 0.1, {"box": 1.0}) == pytest.approx(18 * math.log(20))
    with pytest.raises(NoBoundError):
        analytic_mixing_bound(Star(), 3, 0.1)


@pytest.mark.parametrize("epsilon", [0.1, 0.01])
def test_path_mixing_below_bound(epsilon):
    """Test: camino de alturas k=2, lambda=1, tiempo medido <= n^2 ln(1/eps)"""
    path = HeightPath(k=2, lam=1)
    for n in range(1, 31):
        idx, Q = path.build(n)
        estimate = measure_even_mixing(Q, idx.parity, epsilon)
        assert estimate.measured % 2 == 0
        assert estimate.measured <= analytic_mixing_bound(path, n, epsilon)


def test_hypercube_mixing_below_bound():
    """Test: cadena de Hamming con epsilon = p(n-1)"""
    chain = HammingWeightChain()
    for n in range(3, 11):
        epsilon = p_closed(chain, n - 1)
        idx, W = chain.build(n)
        estimate = measure_even_mixing(W, idx.parity, epsilon)
        assert estimate.measured <= analytic_mixing_bound(chain, n, epsilon)


def test_mixing_small_path_by_hand():
    """Test: n=3 en el camino, Q par = [[1/3, 2/3], [1/9, 8/9]] mezcla a 0.01 en t' = 3"""
    idx, Q = HeightPath(k=2, lam=1).build(3)
    assert measure_even_mixing(Q, idx.parity, 0.01).measured == 6


def test_mixing_parallel_chunks_agree():
    idx, P = Box(d=2).build(3)
    serial = measure_even_mixing(P, idx.parity, 0.05, chunk_size=4)
    parallel = measure_even_mixing(P, idx.parity, 0.05, chunk_size=4, jobs=3)
    assert serial.measured == parallel.measured


def test_mixing_rejects_bad_epsilon():
    idx, P = Hypercube().build(2)
    with pytest.raises(FamilyError):
        measure_even_mixing(P, idx.parity, 0.0)


def test_fit_mixing_growth():
    constant, slope = fit_mixing_growth([1, 2, 4], [2, 4, 8])
    assert constant == pytest.approx(2.0)
    assert slope == pytest.approx(1.0)


@pytest.mark.parametrize(
    "chain, levels, epsilon",
    [(Box(d=1), range(3, 13), 0.1), (Box(d=2), range(3, 9), 0.1), (HammingWeightChain(), range(6, 25), 0.01)],
    ids=["box-d1", "box-d2", "hypercube"],
)
def test_mixing_growth_follows_bound_shape(chain, levels, epsilon):
    """Test: el tiempo medido no crece más rápido que la forma de la cota y cada cociente
    queda a un factor 2 de la constante ajustada"""
    shapes, measured = [], []
    for n in levels:
        idx, P = chain.build(n)
        measured.append(measure_even_mixing(P, idx.parity, epsilon).measured)
        shapes.append(analytic_mixing_bound(chain, n, epsilon, {mixing_bound_name(chain): 1.0}))
    constant, slope = fit_mixing_growth(shapes, measured)
    assert 0 < slope <= 1.5
    ratios = np.array(measured) / np.array(shapes)
    assert np.all(ratios >= constant / 2)
    assert np.all(ratios <= 2 * constant)


@pytest.mark.parametrize(
    "term, converges",
    [((1, 1, 1), False), ((1, 1, 1.01), True), ((0.9, -3, 0), True), ((1, 2, -5), True),
     ((1, 0.5, 9), False), ((1.1, 9, 9), False)],
)
def test_series_term_convergence(term, converges):
    rho, a, b = term
    assert SeriesTerm(rho=rho, a=a, b=b).converges() is converges


@pytest.mark.parametrize(
    "family, schedule, verdict",
    [
        (TREE, symbolic(base=2, a=1, b=1, d1=4), Verdict.RECURRENT),
        (TREE, symbolic(base=2, a=1, b=1.5, d1=4), Verdict.TRANSIENT),
        (TREE, symbolic(base=2, a=1, b=2, d1=4), Verdict.TRANSIENT),
        (KaryTree(k=3, lam=1), symbolic(base=3, a=0.5), Verdict.RECURRENT),
        (KaryTree(k=3, lam=1), symbolic(base=2), Verdict.TRANSIENT),
        (Box(d=4), symbolic(base=1, a=-3), Verdict.RECURRENT),
        (Box(d=4), symbolic(base=1, a=-2.5), Verdict.TRANSIENT),
        (Hypercube(), symbolic(base=2, a=0.5, d1=2), Verdict.RECURRENT),
        (Hypercube(), symbolic(base=2, a=1, d1=2), Verdict.RECURRENT),
        (Hypercube(), symbolic(base=2, a=1.5, d1=2), Verdict.TRANSIENT),
        (HammingWeightChain(), symbolic(base=2, a=1.5, d1=2), Verdict.TRANSIENT),
    ],
)
def test_classify_two_sided(family, schedule, verdict):
    result = classify(family, schedule)
    assert result.verdict == verdict
    assert not result.one_sided
    assert result.convergence == ("divergent" if verdict == Verdict.RECURRENT else "convergent")


def test_classify_tree_with_large_lambda_is_always_recurrent():
    result = classify(KaryTree(k=2, lam=2), symbolic(base=2))
    assert result.verdict == Verdict.RECURRENT
    assert result.theorem == "karytree (lambda >= k)"


def test_classify_undecided_cases():
    """Test: lista explícita sin cola, caja con d < 4, d(n) que se anula"""
    assert classify(Hypercube(), DurationSchedule.explicit([3, 5])).verdict == Verdict.UNDECIDED
    assert classify(Box(d=2), symbolic(base=1, a=-3)).verdict == Verdict.UNDECIDED
    assert classify(Hypercube(), symbolic(base=1, a=1)).verdict == Verdict.UNDECIDED


def test_classify_static_final_level():
    result = classify(Hypercube(), DurationSchedule.explicit([3], unbounded_final=True))
    assert result.verdict == Verdict.RECURRENT
    assert result.theorem == "static final level"


def test_classify_explicit_prefix_with_symbolic_tail():
    schedule = DurationSchedule.explicit([7, 7, 7], tail=SymbolicScheduleFamily(base=2, a=1.5))
    assert classify(Hypercube(), schedule).verdict == Verdict.TRANSIENT


def test_classify_genbox():
    cube4 = GenBox(axes=tuple(AxisBound() for _ in range(4)))
    recurrent = classify(cube4, symbolic(base=1, a=-3))
    assert recurrent.verdict == Verdict.RECURRENT
    assert recurrent.theorem == "box2" and recurrent.one_sided

    cube5 = GenBox(axes=tuple(AxisBound() for _ in range(5)))
    assert classify(cube5, symbolic(base=1, a=-2)).verdict == Verdict.TRANSIENT


def test_classify_level_tree():
    busy = LevelTree(profile=LevelProfile.kary(2))
    assert classify(busy, symbolic(base=2, a=1)).verdict == Verdict.RECURRENT
    assert classify(busy, symbolic(base=2, a=2)).verdict == Verdict.UNDECIDED
    lazy = LevelTree(profile=LevelProfile.kary(2), gamma=0.5)
    assert classify(lazy, symbolic(base=2, a=1)).theorem == "level-tree lazy"
    in_between = LevelTree(profile=LevelProfile.kary(2), gamma=0.3)
    assert classify(in_between, symbolic(base=2)).verdict == Verdict.UNDECIDED
    table = LevelTree(profile=LevelProfile.table([[2], [2, 2]]))
    assert classify(table, symbolic(base=2)).verdict == Verdict.UNDECIDED


def test_classify_star():
    """Test: centro siempre recurrente; hoja con d = 1 según la serie de 1/M(n)"""
    one = symbolic(base=1, d1=1)
    assert classify(Star(growth=GrowthFunction(kind="cubic")), symbolic(base=2)).verdict == Verdict.RECURRENT
    assert classify(Star(growth=GrowthFunction(kind="linear"), start="leaf"), one).verdict == Verdict.RECURRENT
    assert classify(Star(growth=GrowthFunction(kind="nlogn"), start="leaf"), one).verdict == Verdict.RECURRENT
    assert classify(Star(growth=GrowthFunction(kind="quadratic"), start="leaf"), one).verdict == Verdict.TRANSIENT
    lazy = Star(growth=GrowthFunction(kind="nlog2n"), gamma=0.5, start="leaf")
    result = classify(lazy, one)
    assert (result.verdict, result.theorem) == (Verdict.TRANSIENT, "star lazy")
    assert classify(Star(start="leaf"), symbolic(base=2)).verdict == Verdict.UNDECIDED


@given(st.floats(min_value=-3, max_value=3), st.floats(min_value=-3, max_value=3))
@settings(max_examples=100, deadline=None)
def test_classify_cube_follows_polynomial_exponent(a, b):
    """Propiedad: en el hipercubo con base 2 decide el signo de a - 1 y luego b - 1"""
    result = classify(Hypercube(), symbolic(base=2, a=a, b=b, d1=2))
    expected = SeriesTerm(rho=1.0, a=a, b=b).converges()
    assert result.verdict == (Verdict.TRANSIENT if expected else Verdict.RECURRENT)


def _tree_diagnostic(horizon: int):
    schedule = DurationSchedule.explicit([2, 4, 6, 8, 10])
    series = run_exact(TREE, schedule, horizon, lumped=True)
    return series_diagnostic(
        series, schedule, p_of=lambda n: p_closed(TREE, n), mixing_of=lambda n, eps: 10**6, busy=True,
    )


def test_series_diagnostic_bounds_hold_on_complete_phases():
    diagnostic = _tree_diagnostic(30)
    assert [row.phase for row in diagnostic.rows] == [1, 2, 3, 4, 5]
    assert all(row.complete for row in diagnostic.rows)
    first = diagnostic.rows[0]
    assert (first.increment, first.lower_bound, first.upper_bound) == (1.0, 0.5, 2.0)
    for row in diagnostic.rows:
        assert row.lower_bound <= row.increment + 1e-12
        assert row.increment <= row.upper_bound + 1e-12


def test_series_diagnostic_marks_incomplete_phase():
    diagnostic = _tree_diagnostic(25)
    assert not diagnostic.rows[-1].complete
    assert list(diagnostic.to_frame().columns) == [
        "phase", "d_n", "p_n", "increment", "lower_bound", "upper_bound", "complete"]


def test_series_diagnostic_without_p():
    schedule = DurationSchedule.explicit([3, 3])
    series = run_exact(Hypercube(), schedule, 6)
    diagnostic = series_diagnostic(series, schedule)
    assert [row.upper_bound for row in diagnostic.rows] == [None, None]
    assert sum(row.increment for row in diagnostic.rows) == pytest.approx(series.S[-1])


def test_rounding_ceil_keeps_verdict():
    ceil = DurationSchedule.symbolic(SymbolicScheduleFamily(base=2, a=1, b=1, rounding=Rounding.CEIL))
    assert classify(TREE, ceil).verdict == Verdict.RECURRENT

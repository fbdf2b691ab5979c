import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.errors import HorizonError, ScheduleError, ScheduleIndexError
from src.schedule import (
    DurationSchedule,
    Rounding,
    SymbolicScheduleFamily,
    eval_duration,
    phase_of,
    prefix_dominates,
    timelines_ordered,
)

durations = st.lists(st.integers(min_value=0, max_value=6), min_size=1, max_size=12)


def test_eval_duration_explicit_zero_phase():
    """Test que una fase de duración 0 se lee tal cual"""
    assert eval_duration(DurationSchedule.explicit([3, 5, 0, 2]), 3) == 0


def test_eval_duration_symbolic_golden():
    """Test del valor fijo 2^4 / (4 ln 4) redondeado"""
    schedule = DurationSchedule.symbolic(SymbolicScheduleFamily(base=2, a=1, b=1, d1=4))
    assert eval_duration(schedule, 4) == 3
    assert eval_duration(schedule, 1) == 4


def test_eval_duration_ceil_rounding():
    """Test del redondeo hacia arriba frente al redondeo al más cercano"""
    nearest = SymbolicScheduleFamily(base=2, a=1, b=1)
    ceil = SymbolicScheduleFamily(base=2, a=1, b=1, rounding=Rounding.CEIL)
    assert nearest.evaluate(3) == 2
    assert ceil.evaluate(3) == 3


def test_eval_duration_out_of_range():
    """Test que leer más allá de la lista es un error de índice"""
    with pytest.raises(ScheduleIndexError):
        eval_duration(DurationSchedule.explicit([3]), 2)
    with pytest.raises(IndexError):
        eval_duration(DurationSchedule.explicit([3]), 2)


def test_eval_duration_rejects_phase_zero():
    with pytest.raises(ScheduleError):
        eval_duration(DurationSchedule.explicit([3]), 0)


def test_explicit_rejects_negative_durations():
    with pytest.raises(ScheduleError):
        DurationSchedule.explicit([2, -1])


def test_symbolic_tail_after_list():
    """Test de la cola simbólica tras la lista explícita"""
    schedule = DurationSchedule.explicit([3, 5], tail=SymbolicScheduleFamily(base=2))
    assert eval_duration(schedule, 2) == 5
    assert eval_duration(schedule, 3) == 8
    assert schedule.timeline().last_phase is None


def test_unbounded_final_phase():
    """Test de la fase final infinita"""
    schedule = DurationSchedule.explicit([3], unbounded_final=True)
    assert eval_duration(schedule, 2) == math.inf
    timeline = schedule.timeline()
    assert timeline.phase_of(1000) == 2
    assert timeline.last_phase == 2


@pytest.mark.parametrize(
    "values, t, expected",
    [([2, 3], 0, 1), ([2, 3], 2, 2), ([2, 0, 3], 2, 3), ([2, 3], 4, 2)],
)
def test_phase_of(values, t, expected):
    """Test de la regla semiabierta [T_{n-1}, T_n)"""
    assert phase_of(DurationSchedule.explicit(values).timeline(), t) == expected


def test_phase_of_beyond_horizon():
    timeline = DurationSchedule.explicit([2, 3]).timeline()
    with pytest.raises(HorizonError):
        timeline.phase_of(5)
    assert timeline.phase_of(5, hold=True) == 2


def test_phase_of_all_zero_durations_hits_phase_cap():
    """Test que un schedule que se anula no cuelga el cálculo"""
    schedule = DurationSchedule.symbolic(SymbolicScheduleFamily(base=1, a=1, d1=0))
    with pytest.raises(HorizonError):
        schedule.timeline(max_phases=50).phase_of(0)


def test_phase_array_matches_phase_of():
    schedule = DurationSchedule.explicit([2, 0, 3, 1])
    timeline = schedule.timeline()
    phases = timeline.phase_array(6)
    assert list(phases) == [timeline.phase_of(t) for t in range(6)]
    assert list(phases) == [1, 1, 3, 3, 3, 4]


@pytest.mark.parametrize(
    "f, g, expected",
    [([1, 1, 1], [1, 1, 1], True), ([1, 2], [2, 2], True), ([3, 1], [2, 3], False)],
)
def test_prefix_dominates(f, g, expected):
    assert prefix_dominates(DurationSchedule.explicit(f), DurationSchedule.explicit(g), len(f)) is expected


def test_timelines_ordered():
    """Test que el schedule rápido va siempre en una fase >= a la del lento"""
    fast = DurationSchedule.explicit([1] * 4)
    slow = DurationSchedule.explicit([2] * 2)
    assert timelines_ordered(fast, slow, 4)
    assert not timelines_ordered(slow, fast, 4)


def test_symbolic_limits():
    assert SymbolicScheduleFamily(base=2).limit().kind == "infinite"
    assert SymbolicScheduleFamily(base=1, a=1).limit().kind == "zero"
    ceil = SymbolicScheduleFamily(base=1, a=1, rounding=Rounding.CEIL).limit()
    assert (ceil.kind, ceil.value) == ("constant", 1)
    assert SymbolicScheduleFamily(base=1).limit().value == 1


@pytest.mark.parametrize("rounding", [Rounding.NEAREST, Rounding.CEIL])
@pytest.mark.parametrize("c", [0.5, 1.5, 2.0, 2.5, 3.5, 7.0])
def test_constant_limit_matches_evaluate(c, rounding):
    """Test: con base 1 y a = b = 0 el límite es exactamente el valor de cada d(n)"""
    fam = SymbolicScheduleFamily(base=1, c=c, rounding=rounding)
    limit = fam.limit()
    assert all(fam.evaluate(n) == limit.value for n in range(2, 8))
    assert limit.kind == ("constant" if limit.value else "zero")


def test_ceil_of_integral_value():
    assert SymbolicScheduleFamily(base=1, c=2, rounding=Rounding.CEIL).evaluate(5) == 2
    assert SymbolicScheduleFamily(base=2, rounding=Rounding.CEIL).evaluate(3) == 8
    assert SymbolicScheduleFamily(base=1, c=2.5, rounding=Rounding.CEIL).limit().value == 3


def test_describe():
    schedule = DurationSchedule.explicit([3, 5], unbounded_final=True)
    assert schedule.describe() == "explicit:3,5,inf"
    assert schedule.name == "explicit:3,5,inf"


@given(durations)
@settings(max_examples=200, deadline=None)
def test_timeline_increments_equal_durations(values):
    """Propiedad: T_n - T_{n-1} = d(n)"""
    schedule = DurationSchedule.explicit(values)
    timeline = schedule.timeline()
    for n in range(1, len(values) + 1):
        assert timeline.T(n) - timeline.T(n - 1) == eval_duration(schedule, n)
    assert timeline.T(0) == 0


@given(durations)
@settings(max_examples=200, deadline=None)
def test_phase_of_start_of_nonempty_phase(values):
    """Propiedad: phase_of(T_{n-1}) = n si d(n) > 0"""
    timeline = DurationSchedule.explicit(values).timeline()
    for n, d in enumerate(values, start=1):
        if d > 0:
            assert timeline.phase_of(timeline.T(n - 1)) == n


@given(durations, durations, durations)
@settings(max_examples=200, deadline=None)
def test_prefix_dominates_reflexive_and_transitive(a, b, c):
    horizon = min(len(a), len(b), len(c))
    fa, fb, fc = (DurationSchedule.explicit(v) for v in (a, b, c))
    assert prefix_dominates(fa, fa, horizon)
    if prefix_dominates(fa, fb, horizon) and prefix_dominates(fb, fc, horizon):
        assert prefix_dominates(fa, fc, horizon)

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtgn.errors import (
    CycleError,
    DanglingVariableError,
    ExplosionError,
    IncompleteNoiseError,
    InfiniteDomainError,
    InvalidPriorError,
    LatentInterventionError,
    UnknownVariableError,
)
from dtgn.scm import (
    apply_do,
    build_scm,
    enumerate_latents,
    equation,
    evaluate,
    query_interventional,
    query_observational,
)

COIN = {0: 0.5, 1: 0.5}


def chain():
    """X = U_X, Y = X xor U_Y."""
    return build_scm(
        [equation("X", [], "U_X", lambda pa, u: u), equation("Y", ["X"], "U_Y", lambda pa, u: pa[0] ^ u)],
        {"U_X": COIN, "U_Y": {0: 0.9, 1: 0.1}},
    )


def test_build_orders_latents_then_topological():
    m = chain()
    assert m.latents == ("U_X", "U_Y")
    assert m.observables == ("X", "Y")
    assert m.parents_of("Y") == ("X",)


def test_cycle_rejected():
    eqs = [equation("A", ["B"], "U", lambda pa, u: pa[0]), equation("B", ["A"], "U", lambda pa, u: pa[0])]
    with pytest.raises(CycleError):
        build_scm(eqs, {"U": COIN})


def test_dangling_parent_and_noise():
    with pytest.raises(DanglingVariableError):
        build_scm([equation("A", ["Z"], "U", lambda pa, u: u)], {"U": COIN})
    with pytest.raises(DanglingVariableError):
        build_scm([equation("A", [], "V", lambda pa, u: u)], {"U": COIN})


@pytest.mark.parametrize("prior", [{0: 0.6, 1: 0.6}, {0: -0.1, 1: 1.1}, {0: float("nan"), 1: 1.0}])
def test_invalid_prior(prior):
    with pytest.raises(InvalidPriorError):
        build_scm([equation("A", [], "U", lambda pa, u: u)], {"U": prior})


def test_do_cuts_incoming_edges():
    m = apply_do(chain(), {"X": 1})
    assert m.parents_of("X") == ()
    assert evaluate(m, {"U_X": 0, "U_Y": 0}) == {"X": 1, "Y": 1}
    # the original model is untouched
    assert evaluate(chain(), {"U_X": 0, "U_Y": 0}) == {"X": 0, "Y": 0}


def test_do_errors():
    with pytest.raises(LatentInterventionError):
        apply_do(chain(), {"U_X": 1})
    with pytest.raises(UnknownVariableError):
        apply_do(chain(), {"Q": 1})


def test_evaluate_needs_all_noise():
    with pytest.raises(IncompleteNoiseError):
        evaluate(chain(), {"U_X": 0})


def test_enumeration_sums_to_one():
    assert math.isclose(sum(p for _, p in enumerate_latents(chain())), 1.0)


def test_enumeration_refuses_continuous_and_huge():
    m = build_scm([equation("A", [], "U", lambda pa, u: u)], {"U": "normal(0,1)"})
    with pytest.raises(InfiniteDomainError):
        list(enumerate_latents(m))
    big = {i: 1 / 1024 for i in range(1024)}
    eqs = [equation(f"A{i}", [], f"U{i}", lambda pa, u: u) for i in range(3)]
    with pytest.raises(ExplosionError):
        list(enumerate_latents(build_scm(eqs, {f"U{i}": big for i in range(3)})))


def test_queries():
    m = chain()
    assert math.isclose(query_observational(m, {"Y": 1}), 0.5)
    assert math.isclose(query_interventional(m, {"X": 1}, {"Y": 1}), 0.9)
    assert math.isclose(query_interventional(m, {"X": 1}, lambda v: v["Y"] == 0), 0.1)


@settings(max_examples=50, deadline=None)
@given(p=st.floats(0.0, 1.0), x=st.integers(0, 1))
def test_intervention_probability_is_valid(p, x):
    m = build_scm(
        [equation("X", [], "U_X", lambda pa, u: u), equation("Y", ["X"], "U_Y", lambda pa, u: pa[0] & u)],
        {"U_X": COIN, "U_Y": {0: 1 - p, 1: p}},
    )
    q = query_interventional(m, {"X": x}, {"Y": 1})
    assert 0.0 <= q <= 1.0
    assert math.isclose(q, p * x, abs_tol=1e-12)

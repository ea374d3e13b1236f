import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from occnum.model import (
    CREATE,
    DESTROY,
    Factor,
    JumpOperator,
    ModelError,
    ModelSpec,
    builtin_model,
    conserved_totals,
    default_caps,
    displacement_matrix,
    jump,
    swap_modes,
    validate,
)


def test_oscillator_operators():
    spec = builtin_model("oscillator", [2, 0])
    assert len(spec.jumps) == 2
    r1, r2 = spec.jumps
    assert r1.coefficient == pytest.approx(math.sqrt(2))
    assert r1.factors == (Factor(0, CREATE, 1),)
    assert r2.coefficient == 1.0
    assert r2.factors == (Factor(0, DESTROY, 2),)
    assert spec.frequencies == (0.0,)


def test_lvm_operators():
    spec = builtin_model("lvm", [1.5, 2.5])
    assert [op.coefficient for op in spec.jumps] == [1.5, 2.5, 1.0]
    assert spec.jumps[0].factors == (Factor(0, CREATE, 1),)
    assert spec.jumps[1].factors == (Factor(1, DESTROY, 1),)
    assert spec.jumps[2].factors == (Factor(0, DESTROY, 1), Factor(1, CREATE, 1))


def test_lvm_truncated_operators():
    spec = builtin_model("lvm_truncated")
    assert spec.jumps == (JumpOperator(1.0, (Factor(0, DESTROY, 1), Factor(1, CREATE, 1))),)


def test_cannibal_mode_swap_symmetry():
    spec = builtin_model("cannibal", [1, 1])
    swapped = swap_modes(spec, 0, 1)
    assert set(swapped.jumps) == set(spec.jumps)


def test_cannibal_asymmetric_is_not_swap_invariant():
    spec = builtin_model("cannibal", [1, 2])
    assert set(swap_modes(spec, 0, 1).jumps) != set(spec.jumps)


@pytest.mark.parametrize(
    "name, params",
    [("nope", []), ("oscillator", [0]), ("oscillator", [-1]), ("lvm", [1, 0]),
     ("cannibal", [-1, 1]), ("lvm_truncated", [1]), ("lvm", [1]),
     ("oscillator", [1, -2])],
)
def test_builtin_rejects_bad_input(name, params):
    with pytest.raises(ModelError):
        builtin_model(name, params)


@pytest.mark.parametrize(
    "name, expected",
    [("lvm_truncated", [(1, 1)]), ("cannibal", [(1, 1)]), ("oscillator", []), ("lvm", [])],
)
def test_conserved_totals(name, expected):
    params = {"oscillator": [1], "lvm": [1, 1], "cannibal": [1, 2], "lvm_truncated": []}[name]
    assert conserved_totals(builtin_model(name, params)) == expected


def test_validate_ok_and_errors():
    assert validate(builtin_model("lvm", [1, 1])) == []
    bad = ModelSpec("m", ("a",), (jump(0.0, (0, CREATE, 1)),))
    assert any("non-positive coefficient" in e for e in validate(bad))
    mixed = ModelSpec("m", ("a",), (jump(1.0, (0, CREATE, 1), (0, DESTROY, 1)),))
    errs = validate(mixed)
    assert errs == ["jump 0: mixed action on mode 0"]


def test_validate_reports_jump_index():
    spec = ModelSpec(
        "m", ("a", "b"),
        (jump(1.0, (0, CREATE, 1)), jump(1.0, (5, DESTROY, 1)), JumpOperator(1.0, ())),
    )
    errs = validate(spec)
    assert "jump 1: unknown mode index 5" in errs
    assert "jump 2: no factors" in errs


def test_validate_structure():
    assert "model has no modes" in validate(ModelSpec("m", (), ()))
    assert "duplicate mode name" in validate(ModelSpec("m", ("a", "a"), ()))
    with pytest.raises(ModelError) as info:
        ModelSpec("m", ("a",), (jump(-1, (0, CREATE, 1)),)).check()
    assert info.value.errors == ["jump 0: non-positive coefficient"]


def test_default_caps():
    assert default_caps(builtin_model("oscillator", [50])) == [130]
    assert default_caps(builtin_model("oscillator", [0.01])) == [31]
    assert default_caps(builtin_model("lvm", [math.sqrt(2), math.sqrt(3)])) == [42, 42]
    assert default_caps(builtin_model("lvm", [0.5, 0.5])) == [31, 31]


pos = st.floats(min_value=1e-3, max_value=1e3, allow_nan=False)


@given(name=st.sampled_from(["oscillator", "lvm", "lvm_truncated", "cannibal"]), a=pos, b=pos)
def test_builtins_always_validate(name, a, b):
    params = {"oscillator": [a, b], "lvm": [a, b], "cannibal": [a, b], "lvm_truncated": []}[name]
    assert validate(builtin_model(name, params)) == []


@st.composite
def random_specs(draw):
    m = draw(st.integers(1, 4))
    jumps = []
    for _ in range(draw(st.integers(0, 4))):
        modes = draw(st.lists(st.integers(0, m - 1), min_size=1, max_size=m, unique=True))
        factors = [(j, draw(st.sampled_from([CREATE, DESTROY])), draw(st.integers(1, 3)))
                   for j in modes]
        jumps.append(jump(1.0, *factors))
    return ModelSpec("r", tuple(f"x{i}" for i in range(m)), tuple(jumps))


@settings(max_examples=60, deadline=None)
@given(random_specs())
def test_conserved_vectors_annihilate_displacements(spec):
    d = np.array(displacement_matrix(spec), dtype=np.int64).reshape(-1, spec.n_modes)
    basis = conserved_totals(spec)
    for c in basis:
        assert all(isinstance(x, int) for x in c)
        assert np.all(d @ np.array(c, dtype=np.int64) == 0)
    rank = np.linalg.matrix_rank(d) if len(d) else 0
    assert len(basis) == spec.n_modes - rank

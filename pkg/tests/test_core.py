import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ate_lab.core import (
    EstimateResult,
    PropensityFunction,
    Role,
    Sample,
    Unit,
    read_sample_csv,
    validate_sample,
    weighted_group_means,
    write_sample_csv,
)
from ate_lab.errors import DegenerateDesign, ValidationError

HALF = PropensityFunction.constant(0.5)


def test_validate_interior_both_arms_is_clean():
    s = Sample([1, 0], [2.0, 1.0], [0.0, 0.0])
    report = validate_sample(s, HALF)
    assert report.ok and len(report) == 0


def test_validate_flags_empty_control_arm():
    s = Sample([1, 1], [2.0, 1.0], [0.0, 0.0])
    assert validate_sample(s, HALF).kinds() == {"degenerate_design"}


def test_validate_flags_overlap_boundary():
    ps = PropensityFunction(lambda x: np.where(x[:, 0] > 0, 1 - 1e-9, 0.5), overlap_margin=1e-6)
    s = Sample([1, 0, 1], [1.0, 0.0, 2.0], [1.0, -1.0, -1.0])
    report = validate_sample(s, ps)
    assert [v.unit for v in report if v.kind == "overlap"] == [0]


def test_weighted_means_two_units():
    s = Sample([1, 0], [2.0, 1.0], [0.0, 0.0])
    t, c = weighted_group_means(s, [0.5, 0.5], s.y)
    assert t == pytest.approx([2.0]) and c == pytest.approx([1.0])


def test_weighted_means_uneven_propensities():
    # (4/.8 + 1/.2) / (1/.8 + 1/.2) = 10 / 6.25
    s = Sample([1, 1, 0], [4.0, 1.0, 0.0], [0.0, 0.0, 0.0])
    t, c = weighted_group_means(s, [0.8, 0.2, 0.5], s.y)
    assert t[0] == pytest.approx(1.6, abs=1e-14)
    assert c[0] == 0.0


def test_weighted_means_constant_values():
    s = Sample([1, 1, 0, 0], np.zeros(4), np.zeros(4))
    t, c = weighted_group_means(s, [0.1, 0.7, 0.3, 0.9], np.full(4, 3.5))
    assert t[0] == pytest.approx(3.5, rel=1e-15) and c[0] == pytest.approx(3.5, rel=1e-15)


def test_weighted_means_zero_weight_arm():
    s = Sample([1, 1], [1.0, 2.0], [0.0, 0.0])
    with pytest.raises(DegenerateDesign):
        weighted_group_means(s, [0.5, 0.5], s.y)


@st.composite
def weighted_problem(draw):
    n = draw(st.integers(4, 30))
    d = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(lambda v: 0 < sum(v) < len(v)))
    p = draw(st.lists(st.floats(0.05, 0.95), min_size=n, max_size=n))
    vals = st.floats(-100, 100, allow_nan=False)
    v = draw(st.lists(vals, min_size=n, max_size=n))
    w = draw(st.lists(vals, min_size=n, max_size=n))
    perm = draw(st.permutations(list(range(n))))
    return Sample(d, np.zeros(n), np.zeros(n)), np.array(p), np.array(v), np.array(w), np.array(perm)


@settings(max_examples=60, deadline=None)
@given(weighted_problem(), st.floats(-5, 5), st.floats(-5, 5))
def test_weighted_means_properties(problem, a, b):
    s, p, v, w, perm = problem
    ones = weighted_group_means(s, p, np.ones(s.n))
    assert ones[0][0] == pytest.approx(1.0, abs=1e-15) and ones[1][0] == pytest.approx(1.0, abs=1e-15)

    t, c = weighted_group_means(s, p, v)
    tp, cp = weighted_group_means(s.take(perm), p[perm], v[perm])
    assert tp == pytest.approx(t, abs=1e-10) and cp == pytest.approx(c, abs=1e-10)

    tw, cw = weighted_group_means(s, p, w)
    tl, cl = weighted_group_means(s, p, a * v + b * w)
    scale = 1 + np.abs(v).max() + np.abs(w).max()
    assert abs(tl[0] - (a * t[0] + b * tw[0])) <= 1e-12 * scale * 10
    assert abs(cl[0] - (a * c[0] + b * cw[0])) <= 1e-12 * scale * 10


def test_weighted_means_vector_values():
    s = Sample([1, 0, 1, 0], np.zeros(4), np.zeros(4))
    vals = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]])
    t, c = weighted_group_means(s, [0.5] * 4, vals)
    assert t == pytest.approx([3.0, 4.0]) and c == pytest.approx([5.0, 6.0])


class TestSample:
    def test_rejects_bad_treatment(self):
        with pytest.raises(ValidationError):
            Sample([1, 2], [0.0, 0.0], [0.0, 0.0])

    def test_rejects_nonfinite(self):
        with pytest.raises(ValidationError):
            Sample([1, 0], [np.nan, 0.0], [0.0, 0.0])

    def test_rejects_single_unit(self):
        with pytest.raises(ValidationError):
            Sample([1], [0.0], [0.0])

    def test_roles_length(self):
        with pytest.raises(ValidationError):
            Sample([1, 0], [0.0, 0.0], [[0.0, 1.0], [1.0, 0.0]], roles=[Role.CONFOUNDER])

    def test_immutable_arrays(self):
        s = Sample([1, 0], [1.0, 0.0], [0.0, 0.0])
        with pytest.raises(ValueError):
            s.y[0] = 3.0

    def test_units_roundtrip(self):
        units = [Unit(1, 2.0, (0.5, 1.0)), Unit(0, -1.0, (0.0, 2.0))]
        s = Sample.from_units(units)
        assert list(s.units()) == units
        assert s.k == 2 and s.n_treated == 1 and s.n_control == 1

    def test_mixed_dimensions(self):
        with pytest.raises(ValidationError):
            Sample.from_units([Unit(1, 0.0, (1.0,)), Unit(0, 0.0, (1.0, 2.0))])

    def test_project(self):
        s = Sample([1, 0], [0.0, 0.0], [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]],
                   roles=["instrument", "confounder", "outcome_predictor"])
        p = s.project([1, 2])
        assert p.x.tolist() == [[2.0, 3.0], [5.0, 6.0]]
        assert p.roles == (Role.CONFOUNDER, Role.OUTCOME_PREDICTOR)


def test_estimate_result_alpha_contract():
    with pytest.raises(ValidationError):
        EstimateResult(1.0, "ipw_known", 1, 1, alpha_hat=np.zeros(1))
    with pytest.raises(ValidationError):
        EstimateResult(1.0, "lm", 1, 1)
    with pytest.raises(ValidationError):
        EstimateResult(float("inf"), "ipw_known", 1, 1)


class TestCsv:
    def test_roundtrip(self, tmp_path):
        s = Sample([1, 0, 1], [0.1, 2.5, -3.0], [[1.0, 0.25], [0.0, -1.5], [1e-3, 7.0]])
        path = tmp_path / "s.csv"
        write_sample_csv(s, path)
        back = read_sample_csv(path)
        assert np.array_equal(back.d, s.d) and np.array_equal(back.y, s.y) and np.array_equal(back.x, s.x)

    def test_wrong_arity_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("d,y,x1\n1,2.0,0\n0,1.0\n")
        with pytest.raises(ValidationError, match=":3:"):
            read_sample_csv(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("treat,y,x1\n1,2.0,0\n0,1.0,0\n")
        with pytest.raises(ValidationError, match="header"):
            read_sample_csv(path)

    def test_non_binary_treatment(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("d,y,x1\n1,2.0,0\n2,1.0,0\n")
        with pytest.raises(ValidationError, match=":3:"):
            read_sample_csv(path)

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import spearmanr

from ecx.errors import DimensionError, EmptyInputError, ValidationError
from ecx.model import GeneratorSpec, gen_linspace, output_single
from ecx.pipeline import (
    ProjectionMatrix,
    SpecializationMatrix,
    binarize,
    complexity,
    drop_empty,
    eci_eigen,
    eci_reflections,
    orient,
    project_activities,
    project_economies,
    rca,
    run_pipeline,
    spearman,
)

positive_matrices = st.tuples(st.integers(2, 12), st.integers(2, 12)).flatmap(
    lambda s: arrays(np.float64, s, elements=st.floats(0.01, 100))
)
binary_matrices = st.tuples(st.integers(2, 10), st.integers(2, 10)).flatmap(
    lambda s: arrays(np.int8, s, elements=st.integers(0, 1))
)


def test_rca_constant_is_one():
    assert np.all(rca(np.full((3, 4), 2.5)).values == 1.0)


def test_rca_hand_example():
    r = rca(np.array([[1.0, 2.0], [3.0, 4.0]])).values
    assert np.allclose(r, [[5 / 6, 10 / 9], [15 / 14, 20 / 21]], rtol=1e-15)


@given(positive_matrices)
def test_rca_weighted_row_means_are_one(y):
    r = rca(y).values
    # sum_p R_cp Y_p / Y == 1 for every c
    assert np.allclose((r * y.sum(axis=0)).sum(axis=1) / y.sum(), 1.0)


@given(positive_matrices, st.floats(0.1, 10))
def test_rca_scale_invariant(y, a):
    assert np.allclose(rca(a * y).values, rca(y).values, rtol=1e-12)


def test_rca_zero_row_marked_undefined():
    r = rca(np.array([[0.0, 0.0], [1.0, 2.0], [3.0, 1.0]]))
    assert r.undefined_rows.tolist() == [True, False, False]
    assert np.isnan(r.values[0]).all()
    with pytest.raises(ValidationError):
        binarize(r, policy="error")
    assert binarize(r).shape == (2, 2)


def test_binarize_ties_are_specialized():
    assert np.all(binarize(rca(np.ones((3, 3)))).values == 1)


def test_even_case_specialization():
    m = binarize(rca(output_single(gen_linspace(4), gen_linspace(6)))).values
    assert m.tolist() == [[0, 0, 0, 1, 1, 1]] * 2 + [[1, 1, 1, 0, 0, 0]] * 2


def test_odd_case_third_row_filled():
    m = binarize(rca(output_single(gen_linspace(5), gen_linspace(6)))).values
    assert m[2].all() and m.sum() == 18


def test_drop_empty_policies():
    m = SpecializationMatrix(np.array([[1, 0], [0, 0]], dtype=np.int8))
    assert drop_empty(m).shape == (1, 1)
    with pytest.raises(ValidationError):
        drop_empty(m, "error")
    with pytest.raises(EmptyInputError):
        drop_empty(SpecializationMatrix(np.zeros((2, 2), dtype=np.int8)))


@given(binary_matrices)
def test_projections_are_row_stochastic(a):
    m = SpecializationMatrix(a)
    if not a.any():
        return
    for proj in (project_economies(m), project_activities(m)):
        assert proj.row_sum_error() < 1e-12
        assert proj.values.min() >= 0


def test_even_case_projection_halves():
    m = binarize(rca(output_single(gen_linspace(4), gen_linspace(6))))
    expected = np.kron(np.eye(2), np.full((2, 2), 0.5))
    assert np.abs(project_economies(m).values - expected).max() < 1e-15


def test_odd_even_projection():
    m = binarize(rca(output_single(gen_linspace(5), gen_linspace(6))))
    p = project_economies(m).values
    assert np.allclose(p[2], [1 / 6, 1 / 6, 1 / 3, 1 / 6, 1 / 6], rtol=0, atol=1e-15)


def test_even_case_eigenvector_and_degeneracy():
    m = binarize(rca(output_single(gen_linspace(4), gen_linspace(6))))
    res = eci_eigen(project_economies(m))
    assert res.degenerate and "degenerate" in res.flags
    assert np.allclose(np.abs(res.eci_raw), 0.5)
    assert np.sign(res.eci_raw).tolist() in ([1, 1, -1, -1], [-1, -1, 1, 1])


def test_odd_even_eigenvector():
    m = binarize(rca(output_single(gen_linspace(5), gen_linspace(6))))
    v = eci_eigen(project_economies(m)).eci_raw
    assert abs(v[2]) < 1e-12
    assert np.allclose(np.abs(v) / np.abs(v).max(), [1, 1, 0, 1, 1], atol=1e-12)


def test_complexity_orients_with_diversity():
    y, r, _ = GeneratorSpec(n_economies=30, n_activities=60, n_capabilities=3).output()
    res = run_pipeline(y).result
    # rows are sorted by descending endowment; economies with equal rows in M tie
    assert np.all(np.diff(res.eci) <= 1e-12)
    assert spearman(res.eci, r.average()[y.row_order]) > 0.99


def test_orient_tie_rule():
    v, rule = orient(np.array([-1.0, 1.0]))
    assert v.tolist() == [1.0, -1.0] and "first" in rule


def test_power_route_agrees_with_dense():
    y, _, _ = GeneratorSpec(kind="mixed", n_economies=60, n_activities=200, n_capabilities=5,
                            alpha=0.7, seed=4).output()
    m = drop_empty(binarize(rca(y)))
    proj = project_economies(m)
    anchor = proj.values @ m.diversity.astype(float)
    dense = eci_eigen(proj, anchor)
    power = eci_eigen(proj, anchor, dense_max=10)
    assert power.converged
    assert abs(dense.eigenvalues[1] - power.eigenvalues[1]) < 1e-8
    assert np.abs(dense.eci_raw - power.eci_raw).max() < 1e-6


def test_eigen_rejects_tiny_input():
    with pytest.raises(DimensionError):
        eci_eigen(ProjectionMatrix(np.ones((1, 1)), "economy"))


def test_reflections_two_iterations_separate_even_case():
    m = binarize(rca(output_single(gen_linspace(4), gen_linspace(6))))
    res = eci_reflections(m, iterations=2)
    assert "constant_seed" in res.flags
    assert np.sign(res.eci).tolist() == [1, 1, -1, -1]


def test_reflections_all_ones_degenerate():
    res = eci_reflections(SpecializationMatrix(np.ones((3, 4), dtype=np.int8)), iterations=2)
    assert res.degenerate and "degenerate" in res.flags
    assert np.all(res.eci == res.eci[0])


def test_reflections_rejects_odd_iterations():
    with pytest.raises(ValidationError):
        eci_reflections(SpecializationMatrix(np.eye(3, dtype=np.int8)), iterations=3)


def test_reflections_match_eigen_multi_capability():
    y, _, _ = GeneratorSpec(n_economies=40, n_activities=300, n_capabilities=10).output()
    m = drop_empty(binarize(rca(y)))
    refl = eci_reflections(m)
    assert refl.converged
    assert spearman(refl.eci, complexity(m).eci) == 1.0


def test_spearman_examples():
    x = np.arange(6.0)
    assert spearman(x, x) == 1.0
    assert spearman(x, x[::-1]) == -1.0
    assert spearman([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)
    assert np.isnan(spearman([1, 1, 1], [1, 2, 3]))


@pytest.mark.filterwarnings("ignore::scipy.stats.ConstantInputWarning")
@given(
    arrays(np.float64, 12, elements=st.integers(0, 5).map(float)),
    arrays(np.float64, 12, elements=st.floats(-5, 5)),
)
def test_spearman_matches_scipy_with_ties(x, y):
    ours = spearman(x, y)
    ref = spearmanr(x, y).statistic
    if np.isnan(ref):
        assert np.isnan(ours)
    else:
        assert ours == pytest.approx(ref, abs=1e-12)

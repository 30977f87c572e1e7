import numpy as np
import pytest

from panelmidas.design import (
    Covariate,
    DesignProblem,
    GroupStructure,
    PanelDataset,
    add_response_lags,
    build_midas_design,
    build_umidas_design,
    standardize,
    unstack,
    within_transform,
)
from panelmidas.dictionary import MidasDictionary, build_dictionary


def small_panel(seed=0, N=2, T=3, K=2, m=4, q=0):
    rng = np.random.default_rng(seed)
    covs = tuple(
        Covariate(name=f"x{k}", values=rng.standard_normal((N, T, m)))
        for k in range(K)
    )
    lags = rng.standard_normal((N, T, q)) if q else None
    return PanelDataset(y=rng.standard_normal((N, T)), covariates=covs,
                        response_lags=lags)


class TestGroupStructure:
    def test_from_sizes(self):
        g = GroupStructure.from_sizes([3, 2], ["a", "b"])
        assert g.p == 5
        np.testing.assert_array_equal(g.partition[1], [3, 4])
        ptr, idx = g.flat_indices()
        np.testing.assert_array_equal(ptr, [0, 3, 5])
        np.testing.assert_array_equal(idx, np.arange(5))

    def test_partition_validated(self):
        with pytest.raises(ValueError):
            GroupStructure(partition=(np.array([0, 1]), np.array([1, 2])),
                           labels=("a", "b"))
        with pytest.raises(ValueError):
            GroupStructure(partition=(np.array([0, 2]),), labels=("a",))
        with pytest.raises(ValueError):
            GroupStructure(partition=(np.array([0]), np.array([1])),
                           labels=("a", "a"))
        with pytest.raises(ValueError):
            GroupStructure(partition=(np.array([0]), np.array([], dtype=int)),
                           labels=("a", "b"))

    def test_non_consecutive_partition_ok(self):
        g = GroupStructure(partition=(np.array([0, 2]), np.array([1])),
                           labels=("a", "b"))
        assert g.p == 3


class TestBuildDesigns:
    def test_shapes_and_groups(self):
        data = small_panel(N=2, T=3, K=2, m=4)
        d = build_dictionary(4, 3)
        prob = build_midas_design(data, d)
        assert prob.X.shape == (6, 6)
        np.testing.assert_array_equal(prob.groups.sizes, [3, 3])
        assert prob.groups.labels == ("x0", "x1")
        assert prob.intercept_mode == "pooled"

    def test_stacking_roundtrip(self):
        data = small_panel(seed=3, N=4, T=5)
        prob = build_midas_design(data, build_dictionary(4, 2))
        np.testing.assert_array_equal(
            unstack(prob.yvec, prob.n_entities, prob.n_periods), data.y
        )

    def test_block_content(self):
        data = small_panel(seed=1, N=2, T=3, K=1, m=4)
        d = build_dictionary(4, 2)
        prob = build_midas_design(data, d)
        # row for entity 1, period 2
        expected = data.covariates[0].values[1, 2] @ d.W
        np.testing.assert_allclose(prob.X[1 * 3 + 2], expected, atol=1e-14)

    def test_identity_dictionary_reproduces_umidas(self):
        data = small_panel(seed=2, N=3, T=4, K=2, m=5)
        ident = MidasDictionary(m=5, L=5, W=np.eye(5) / 5)
        midas = build_midas_design(data, ident)
        umidas = build_umidas_design(data)
        np.testing.assert_allclose(midas.X, umidas.X, rtol=0, atol=1e-15)
        np.testing.assert_array_equal(midas.yvec, umidas.yvec)

    def test_single_lag_umidas_equals_midas_l1(self):
        data = small_panel(seed=4, N=2, T=6, K=2, m=1)
        midas = build_midas_design(data, build_dictionary(1, 1))
        umidas = build_umidas_design(data)
        np.testing.assert_allclose(midas.X, umidas.X, atol=1e-15)

    def test_umidas_groups_are_singletons(self):
        data = small_panel(N=2, T=3, K=2, m=4)
        prob = build_umidas_design(data)
        assert prob.p == 8
        assert all(s == 1 for s in prob.groups.sizes)
        assert prob.column_labels[0] == "x0.lag1"

    def test_response_lags_lead_as_singletons(self):
        data = small_panel(seed=5, N=2, T=3, K=1, m=4, q=2)
        prob = build_midas_design(data, build_dictionary(4, 3))
        assert prob.p == 5
        assert prob.groups.labels == ("y.lag1", "y.lag2", "x0")
        np.testing.assert_array_equal(prob.X[:, 0],
                                      data.response_lags[:, :, 0].reshape(-1))
        np.testing.assert_array_equal(prob.columns_for("x0"), [2, 3, 4])

    def test_dictionary_lag_mismatch(self):
        data = small_panel(m=4)
        with pytest.raises(ValueError):
            build_midas_design(data, build_dictionary(6, 3))


class TestStandardize:
    def test_recorded_scales(self):
        X = np.column_stack([np.ones(10), 2 * np.ones(10), 4 * np.ones(10)])
        prob = DesignProblem(
            yvec=np.zeros(10), X=X,
            groups=GroupStructure.from_sizes([1, 1, 1], ["a", "b", "c"]),
            intercept_mode="pooled", n_entities=2, n_periods=5,
        )
        out = standardize(prob)
        np.testing.assert_allclose(out.column_scales, [1, 2, 4], atol=1e-14)
        np.testing.assert_allclose(out.X, np.ones((10, 3)), atol=1e-14)

    def test_unit_norms_after(self):
        data = small_panel(seed=6, N=3, T=7)
        out = standardize(build_midas_design(data, build_dictionary(4, 3)))
        np.testing.assert_allclose(np.mean(out.X**2, axis=0), np.ones(out.p),
                                   atol=1e-12)

    def test_scales_accumulate(self):
        data = small_panel(seed=7)
        prob = build_midas_design(data, build_dictionary(4, 2))
        once = standardize(prob)
        twice = standardize(once)
        np.testing.assert_allclose(twice.column_scales, once.column_scales,
                                   rtol=1e-12)
        scaled_back = twice.X * twice.column_scales
        np.testing.assert_allclose(scaled_back, prob.X, atol=1e-12)

    def test_zero_column_named(self):
        X = np.column_stack([np.ones(6), np.zeros(6)])
        prob = DesignProblem(
            yvec=np.zeros(6), X=X,
            groups=GroupStructure.from_sizes([1, 1], ["g0", "g1"]),
            intercept_mode="none", n_entities=2, n_periods=3,
            column_labels=("keep", "dead"),
        )
        with pytest.raises(ValueError, match="dead"):
            standardize(prob)


class TestWithinTransform:
    def test_entity_means_cleared(self):
        data = small_panel(seed=8, N=4, T=6)
        prob = build_midas_design(data, build_dictionary(4, 2),
                                  intercept="fixed_effects")
        out = within_transform(prob)
        assert out.intercept_mode == "none"
        ybar = unstack(out.yvec, 4, 6).mean(axis=1)
        np.testing.assert_allclose(ybar, np.zeros(4), atol=1e-13)
        colmeans = out.X.reshape(4, 6, -1).mean(axis=1)
        np.testing.assert_allclose(colmeans, np.zeros_like(colmeans), atol=1e-13)

    def test_rejects_pooled(self):
        data = small_panel(seed=9)
        prob = build_midas_design(data, build_dictionary(4, 2), intercept="pooled")
        with pytest.raises(ValueError):
            within_transform(prob)
        fe = build_midas_design(data, build_dictionary(4, 2),
                                intercept="fixed_effects")
        with pytest.raises(ValueError):
            within_transform(within_transform(fe))


class TestAddResponseLags:
    def test_lag_alignment(self):
        y = np.arange(12, dtype=float).reshape(2, 6)
        data = PanelDataset(
            y=y,
            covariates=(Covariate("x0", np.arange(24, dtype=float).reshape(2, 6, 2)),),
        )
        out = add_response_lags(data, 2)
        assert out.n_periods == 4
        np.testing.assert_array_equal(out.y, y[:, 2:])
        # first lag of the first remaining period is the period just before it
        np.testing.assert_array_equal(out.response_lags[:, 0, 0], y[:, 1])
        np.testing.assert_array_equal(out.response_lags[:, 0, 1], y[:, 0])
        np.testing.assert_array_equal(out.response_lags[:, 3, 0], y[:, 4])
        np.testing.assert_array_equal(out.covariates[0].values,
                                      np.arange(24, dtype=float).reshape(2, 6, 2)[:, 2:])

    def test_validation(self):
        data = small_panel(T=3)
        with pytest.raises(ValueError):
            add_response_lags(data, 3)
        with pytest.raises(ValueError):
            add_response_lags(data, 0)
        once = add_response_lags(data, 1)
        with pytest.raises(ValueError):
            add_response_lags(once, 1)


class TestValidation:
    def test_problem_shape_checks(self):
        g = GroupStructure.from_sizes([2], ["a"])
        with pytest.raises(ValueError):
            DesignProblem(yvec=np.zeros(5), X=np.ones((6, 2)), groups=g,
                          intercept_mode="pooled", n_entities=2, n_periods=3)
        with pytest.raises(ValueError):
            DesignProblem(yvec=np.zeros(6), X=np.ones((6, 3)), groups=g,
                          intercept_mode="pooled", n_entities=2, n_periods=3)
        with pytest.raises(ValueError):
            DesignProblem(yvec=np.zeros(6), X=np.ones((6, 2)), groups=g,
                          intercept_mode="demeaned", n_entities=2, n_periods=3)

    def test_panel_checks(self):
        with pytest.raises(ValueError):
            PanelDataset(y=np.array([[np.inf, 0.0]]), covariates=())
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            PanelDataset(
                y=rng.standard_normal((2, 3)),
                covariates=(Covariate("x", rng.standard_normal((2, 4, 2))),),
            )
        with pytest.raises(ValueError):
            PanelDataset(
                y=rng.standard_normal((2, 3)),
                covariates=(
                    Covariate("x", rng.standard_normal((2, 3, 2))),
                    Covariate("x", rng.standard_normal((2, 3, 2))),
                ),
            )

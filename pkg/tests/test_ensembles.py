"""Superlearner stacking, NNLS meta-weights, cascades, and presets."""

import numpy as np
import pytest

from stackbench.core import (
    Dataset,
    FitError,
    InvalidArgumentError,
    InvalidSpecError,
    SeededRng,
)
from stackbench import learners
from stackbench.ensembles import (
    CascadeSpec,
    MetaWeights,
    PRESETS,
    SuperlearnerSpec,
    algo_from_doc,
    algo_to_doc,
    fit_any,
    fit_cascade,
    fit_superlearner,
    nnls_solve,
    preset_deep_knn,
    preset_fast_superlearner,
    preset_knn_superlearner,
    preset_mixed_deep,
    preset_superlearner,
)
from stackbench.simgen import SimCondition, generate


def make_data(n=240, p=6, seed=0):
    gen = np.random.default_rng(seed)
    X = gen.normal(size=(n, p))
    eta = 1.3 * X[:, 0] - X[:, 1] + 0.5 * X[:, 2]
    y = (eta + 0.4 * gen.normal(size=n) > 0).astype(np.int64)
    return Dataset(X, y, tuple(f"x{i + 1}" for i in range(p)))


SMALL_BASES = (learners.Mars(), learners.CiTree(n_permutations=199),
               learners.Knn(k=5))


# --------------------------------------------------------------------------
# spec validation

def test_superlearner_spec_validation():
    with pytest.raises(InvalidSpecError):
        SuperlearnerSpec(base_specs=())
    with pytest.raises(InvalidSpecError):
        SuperlearnerSpec(base_specs=SMALL_BASES, folds=1)
    with pytest.raises(InvalidSpecError):
        SuperlearnerSpec(base_specs=SMALL_BASES, meta="ridge")
    with pytest.raises(InvalidSpecError):
        SuperlearnerSpec(base_specs=("not a spec",))


def test_cascade_spec_validation():
    unit = (learners.Mars(), 1.0)
    with pytest.raises(InvalidSpecError):
        CascadeSpec(layers=())
    with pytest.raises(InvalidSpecError):
        CascadeSpec(layers=((),))
    with pytest.raises(InvalidSpecError):
        CascadeSpec(layers=(((learners.Mars(), 0.0),),))
    with pytest.raises(InvalidSpecError):
        CascadeSpec(layers=(((learners.Mars(), 1.5),),))
    CascadeSpec(layers=((unit,),))  # minimal valid


def test_meta_weights_validation():
    with pytest.raises(InvalidArgumentError):
        MetaWeights(weights=np.array([0.5, 0.6]))
    with pytest.raises(InvalidArgumentError):
        MetaWeights(weights=np.array([-0.1, 1.1]))
    MetaWeights(weights=np.array([0.25, 0.75]))


# --------------------------------------------------------------------------
# NNLS

def test_nnls_exact_two_column_solution():
    Z = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    y = np.array([1.0, 1.0, 2.0])
    mw = nnls_solve(Z, y)
    np.testing.assert_allclose(mw.raw, [1.0, 1.0], atol=1e-10)
    assert mw.residual < 1e-20
    np.testing.assert_allclose(mw.weights, [0.5, 0.5], atol=1e-12)


def test_nnls_zeroes_negative_direction():
    y = np.array([1.0, 2.0, 3.0])
    Z = np.column_stack([y, -y])
    mw = nnls_solve(Z, y)
    np.testing.assert_allclose(mw.raw, [1.0, 0.0], atol=1e-10)


def test_nnls_all_zero_falls_back_to_uniform():
    y = np.array([1.0, 2.0, 3.0])
    Z = np.column_stack([-y, -y])
    mw = nnls_solve(Z, y)
    np.testing.assert_allclose(mw.weights, [0.5, 0.5])
    assert mw.residual == float(y @ y)


def test_nnls_rejects_bad_input():
    with pytest.raises(InvalidArgumentError):
        nnls_solve(np.array([[1.0, np.nan]]), np.array([1.0]))
    with pytest.raises(InvalidArgumentError):
        nnls_solve(np.ones((3, 2)), np.ones(4))


def test_nnls_weights_on_simplex_and_dominant():
    # the raw orthant optimum never loses to any single column
    gen = np.random.default_rng(42)
    for trial in range(20):
        Z = gen.random((30, 3))
        y = gen.random(30)
        mw = nnls_solve(Z, y)
        assert np.all(mw.weights >= 0.0)
        assert abs(float(mw.weights.sum()) - 1.0) <= 1e-12
        for col in range(3):
            r = y - Z[:, col]
            assert mw.residual <= float(r @ r) + 1e-9


# --------------------------------------------------------------------------
# superlearner

def test_superlearner_fit_and_predict_in_range():
    data = make_data()
    spec = SuperlearnerSpec(base_specs=SMALL_BASES, folds=5)
    model = fit_superlearner(spec, data, SeededRng(1, "sl"))
    test_x = np.random.default_rng(2).normal(size=(100, data.n_features))
    probs = model.predict(test_x)
    assert np.all((probs >= 0.0) & (probs <= 1.0))
    assert len(model.cv_column_risks) == 3
    assert model.meta_weights.residual <= min(model.cv_column_risks) + 1e-9


def test_superlearner_permutation_invariance():
    data = make_data(seed=4)
    fwd = SuperlearnerSpec(base_specs=SMALL_BASES, folds=5)
    rev = SuperlearnerSpec(base_specs=SMALL_BASES[::-1], folds=5)
    test_x = np.random.default_rng(3).normal(size=(100, data.n_features))
    p_fwd = fit_superlearner(fwd, data, SeededRng(9, "perm")).predict(test_x)
    p_rev = fit_superlearner(rev, data, SeededRng(9, "perm")).predict(test_x)
    assert np.max(np.abs(p_fwd - p_rev)) <= 1e-12


def test_superlearner_duplicate_learner_equals_single():
    data = make_data(seed=5)
    dup = SuperlearnerSpec(base_specs=(learners.Mars(), learners.Mars()), folds=5)
    one = SuperlearnerSpec(base_specs=(learners.Mars(),), folds=5)
    test_x = np.random.default_rng(4).normal(size=(100, data.n_features))
    p_dup = fit_superlearner(dup, data, SeededRng(2, "dup")).predict(test_x)
    p_one = fit_superlearner(one, data, SeededRng(2, "dup")).predict(test_x)
    np.testing.assert_allclose(p_dup, p_one, atol=1e-12)


def test_superlearner_logistic_meta():
    data = make_data(seed=6)
    spec = SuperlearnerSpec(base_specs=SMALL_BASES[:2], folds=5, meta="logistic")
    model = fit_superlearner(spec, data, SeededRng(3, "log"))
    probs = model.predict(data.features)
    assert np.all((probs > 0.0) & (probs < 1.0))
    assert model.meta_weights is None
    assert model.logistic_beta.shape == (3,)


def test_superlearner_stratification_failure_is_fit_error():
    gen = np.random.default_rng(7)
    X = gen.normal(size=(30, 3))
    y = np.zeros(30, dtype=np.int64)
    y[0] = 1  # one positive cannot reach every training complement
    data = Dataset(X, y, ("a", "b", "c"))
    spec = SuperlearnerSpec(base_specs=(learners.Knn(k=3),), folds=5)
    with pytest.raises(FitError):
        fit_superlearner(spec, data, SeededRng(0))


def test_superlearner_folds_exceeding_rows_is_fit_error():
    data = make_data(n=12)
    spec = SuperlearnerSpec(base_specs=(learners.Knn(k=3),), folds=20)
    with pytest.raises(FitError):
        fit_superlearner(spec, data, SeededRng(0))


def test_superlearner_mars_weight_largest_on_linear_low():
    data = generate(SimCondition("linear", "low"), 2500,
                    SeededRng(0, "mars-example"))
    model = fit_superlearner(preset_superlearner(), data,
                             SeededRng(0, "mars-fit"))
    weights = model.meta_weights.weights
    assert int(np.argmax(weights)) == 3  # rf, ferns, knn, MARS, citree, boost


# --------------------------------------------------------------------------
# cascades

def test_cascade_degenerates_to_bare_learner():
    data = make_data(seed=8)
    spec = CascadeSpec(layers=(((learners.Mars(), 1.0),),), passthrough=False)
    test_x = np.random.default_rng(5).normal(size=(80, data.n_features))
    casc = fit_cascade(spec, data, SeededRng(6, "deg")).predict(test_x)
    bare_rng = SeededRng(6, "deg").child("layer", 0, "unit", 0, "fit")
    bare = learners.fit(learners.Mars(), data, bare_rng).predict(test_x)
    assert np.array_equal(casc, bare)


def test_cascade_positional_seeding_gives_unit_diversity():
    # identical specs in one layer must still draw different bootstrap rows
    data = make_data(n=300, seed=9)
    knn = learners.Knn(k=5)
    spec = CascadeSpec(layers=(((knn, 0.632), (knn, 0.632)),),
                       passthrough=False)
    model = fit_cascade(spec, data, SeededRng(7, "div"))
    u0, u1 = model.layer_models[0]
    assert not np.array_equal(u0.train_x, u1.train_x)


def test_cascade_final_layer_averages_units():
    data = make_data(seed=10)
    knn = learners.Knn(k=3)
    spec = CascadeSpec(layers=(((knn, 0.7), (knn, 0.7)),), passthrough=False)
    model = fit_cascade(spec, data, SeededRng(8, "avg"))
    test_x = np.random.default_rng(6).normal(size=(50, data.n_features))
    direct = np.column_stack([m.predict(test_x)
                              for m in model.layer_models[0]]).mean(axis=1)
    np.testing.assert_allclose(model.predict(test_x), direct, atol=1e-15)


def test_cascade_passthrough_widens_layer_inputs():
    data = make_data(seed=11)
    spec_pt = CascadeSpec(
        layers=(((learners.Knn(k=3), 1.0),), ((learners.Knn(k=3), 1.0),)),
        passthrough=True)
    model = fit_cascade(spec_pt, data, SeededRng(9, "pt"))
    # second-layer model saw unit output + original features
    assert model.layer_models[1][0].n_features == data.n_features + 1
    spec_no = CascadeSpec(
        layers=(((learners.Knn(k=3), 1.0),), ((learners.Knn(k=3), 1.0),)),
        passthrough=False)
    model_no = fit_cascade(spec_no, data, SeededRng(9, "pt"))
    assert model_no.layer_models[1][0].n_features == 1


def test_cascade_oof_layer_features_change_training_path():
    data = make_data(n=300, seed=12)
    layers = (((learners.Knn(k=5), 1.0),), ((learners.Mars(), 1.0),))
    base = CascadeSpec(layers=layers, passthrough=False)
    oof = CascadeSpec(layers=layers, passthrough=False, oof_layer_features=True)
    test_x = np.random.default_rng(7).normal(size=(60, data.n_features))
    p_base = fit_cascade(base, data, SeededRng(10, "oof")).predict(test_x)
    p_oof = fit_cascade(oof, data, SeededRng(10, "oof")).predict(test_x)
    assert not np.array_equal(p_base, p_oof)
    assert np.all((p_oof >= 0.0) & (p_oof <= 1.0))


# --------------------------------------------------------------------------
# presets

def test_presets_have_documented_shapes():
    assert set(PRESETS) == {
        "superlearner", "fast-superlearner", "mixed-deep", "deep-knn",
        "knn-superlearner", "knn5", "dnn-mirror", "dnn-tuned",
    }
    sl = preset_superlearner()
    assert len(sl.base_specs) == 6 and sl.folds == 10 and sl.meta == "nnls"
    fast = preset_fast_superlearner()
    assert [learners.family_of(s) for s in fast.base_specs] == ["mars", "citree"]
    deep = preset_deep_knn()
    assert [len(layer) for layer in deep.layers] == [10, 10, 5]
    assert all(f == 0.632 for layer in deep.layers for _, f in layer)
    knn_sl = preset_knn_superlearner()
    assert [s.k for s in knn_sl.base_specs] == [2, 5, 10, 25]
    mixed = preset_mixed_deep()
    assert [len(layer) for layer in mixed.layers] == [4, 2, 1]
    assert PRESETS["knn5"]().k == 5
    assert PRESETS["dnn-mirror"]().hidden_sizes == (4, 2, 1)
    assert PRESETS["dnn-tuned"]().hidden_sizes == (13, 5, 3, 1)


def test_algo_doc_roundtrip_all_kinds():
    for make in PRESETS.values():
        algo = make()
        doc = algo_to_doc(algo)
        assert algo_from_doc(doc) == algo


def test_algo_from_doc_rejects_unknown_kind():
    with pytest.raises(InvalidSpecError):
        algo_from_doc({"kind": "voting"})
    with pytest.raises(InvalidSpecError):
        algo_from_doc([])


def test_fit_any_dispatches_each_kind():
    data = make_data(n=150, seed=13)
    test_x = np.random.default_rng(8).normal(size=(30, data.n_features))
    for algo in (learners.Knn(k=3),
                 SuperlearnerSpec(base_specs=SMALL_BASES[:2], folds=5),
                 CascadeSpec(layers=(((learners.Knn(k=3), 1.0),),))):
        model = fit_any(algo, data, SeededRng(11, "any"))
        probs = model.predict(test_x)
        assert np.all((probs >= 0.0) & (probs <= 1.0))
        assert model.fit_seconds >= 0.0

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srm_ripple import (
    SHAPES,
    CompensatorFileError,
    DegeneratePartitionError,
    FuzzyCompensator,
    MembershipFunction,
    RankDeficiencyError,
    TrainingDivergedError,
    build_partition,
    fit_consequents_gd,
    fit_consequents_lse,
)
from srm_ripple.fuzzy import consequent_gradient, squared_error

STROKE = math.radians(30)


def oracle_mu(kind, p, x):
    if kind == "triangular":
        a, b, c = p
        return max(min((x - a) / (b - a), (c - x) / (c - b)), 0.0)
    if kind == "bell":
        a, b, c = p
        return 1.0 / (1.0 + abs((x - c) / a) ** (2 * b))
    c, s, _ = p
    return math.exp(-((x - c) ** 2) / (2 * s * s))


def oracle_eval(fc, theta, i_ref):
    """25 explicit rules, plain Python floats."""
    t = min(max(theta, fc.theta_range[0]), fc.theta_range[1])
    i = min(max(i_ref, fc.iref_range[0]), fc.iref_range[1])
    num = den = 0.0
    for r, mt in enumerate(fc.theta_mfs):
        for c, mi in enumerate(fc.iref_mfs):
            w = oracle_mu(fc.shape, mt.params, t) * oracle_mu(fc.shape, mi.params, i)
            num += w * fc.consequents[r, c]
            den += w
    return num / den


def oracle_matrix(fc, theta, i_ref):
    rows = []
    for t, i in zip(theta, i_ref):
        w = np.array([oracle_mu(fc.shape, a.params, t) * oracle_mu(fc.shape, b.params, i) for a in fc.theta_mfs for b in fc.iref_mfs])
        rows.append(w / w.sum())
    return np.array(rows)


def random_fc(shape, seed=0):
    fc = FuzzyCompensator.create(shape, STROKE, 12.0)
    return fc.with_consequents(np.random.default_rng(seed).normal(0, 2, (5, 5)))


@pytest.mark.parametrize("shape", SHAPES)
def test_evaluate_matches_brute_force_oracle(shape):
    fc = random_fc(shape, 3)
    rng = np.random.default_rng(11)
    th = rng.uniform(-0.1, STROKE + 0.1, 10_000)
    ir = rng.uniform(-1, 13, 10_000)
    want = np.array([oracle_eval(fc, a, b) for a, b in zip(th, ir)])
    # error relative to the weighted sum of |consequents|: near a sign change of
    # the output a plain relative error measures cancellation, not correctness
    scale = fc.with_consequents(np.abs(fc.consequents)).evaluate(th, ir)
    assert np.max(np.abs(fc.evaluate(th, ir) - want) / scale) < 1e-12
    scalar = np.array([fc.evaluate(float(a), float(b)) for a, b in zip(th[:2000], ir[:2000])])
    assert np.max(np.abs(scalar - want[:2000]) / scale[:2000]) < 1e-12


@pytest.mark.parametrize("shape", SHAPES)
@given(st.floats(-1, 2), st.floats(-5, 20), st.integers(0, 1000))
def test_output_is_convex_combination(shape, theta, i_ref, seed):
    fc = random_fc(shape, seed)
    v = fc.evaluate(theta, i_ref)
    assert fc.consequents.min() - 1e-12 <= v <= fc.consequents.max() + 1e-12


@given(st.floats(0, 1), st.floats(0, 12))
def test_constant_consequents_give_constant_output(theta, i_ref):
    fc = FuzzyCompensator.create("bell").with_consequents(np.full((5, 5), 1.25))
    assert fc.evaluate(theta * STROKE, i_ref) == pytest.approx(1.25, rel=1e-14)


def test_triangular_partition_of_unity():
    mfs = build_partition(0.0, 1.0, 5, "triangular")
    x = np.linspace(0, 1, 1001)
    np.testing.assert_allclose(sum(mf(x) for mf in mfs), 1.0, rtol=1e-14)
    assert [mf.center for mf in mfs] == pytest.approx([0, 0.25, 0.5, 0.75, 1.0])


@pytest.mark.parametrize("shape", ["bell", "gaussian_normal"])
def test_neighbours_cross_at_one_half(shape):
    mfs = build_partition(0.0, 1.0, 5, shape)
    for a, b in zip(mfs, mfs[1:]):
        x = 0.5 * (a.center + b.center)
        assert float(a(x)) == pytest.approx(0.5, rel=1e-12)
        assert float(b(x)) == pytest.approx(0.5, rel=1e-12)


def test_open_gaussians_are_wider():
    n = build_partition(0.0, 1.0, 5, "gaussian_normal")
    o = build_partition(0.0, 1.0, 5, "gaussian_open")
    assert o[0].params[1] == pytest.approx(2 * n[0].params[1])
    assert float(o[1](0.5)) > float(n[1](0.5))


def test_partition_input_validation():
    with pytest.raises(ValueError):
        build_partition(1.0, 0.0)
    with pytest.raises(ValueError):
        build_partition(0.0, 1.0, shape="trapezoid")
    with pytest.raises(ValueError):
        MembershipFunction("cauchy", (0, 1, 2))


def test_inputs_are_clamped_to_range():
    fc = random_fc("gaussian_open", 4)
    assert fc.evaluate(-0.3, 5.0) == fc.evaluate(0.0, 5.0)
    assert fc.evaluate(0.2, 40.0) == fc.evaluate(0.2, 12.0)


def test_degenerate_partition_raises():
    narrow = [MembershipFunction("gaussian_normal", (c, 1e-4, 0.0)) for c in np.linspace(0, STROKE, 5)]
    fc = FuzzyCompensator("gaussian_normal", (0, STROKE), (0, 12), narrow, build_partition(0, 12, 5, "gaussian_normal"))
    with pytest.raises(DegeneratePartitionError):
        fc.evaluate(0.5 * (narrow[0].center + narrow[1].center), 6.0)
    with pytest.raises(DegeneratePartitionError):
        fc.evaluate(np.array([0.06]), np.array([6.0]))


def grid_samples(fc, n_t=12, n_i=9):
    t, i = np.meshgrid(np.linspace(0, STROKE, n_t), np.linspace(0, 12, n_i), indexing="ij")
    return t.ravel(), i.ravel()


@pytest.mark.parametrize("shape", SHAPES)
def test_lse_recovers_exact_consequents(shape):
    truth = random_fc(shape, 5)
    t, i = grid_samples(truth)
    samples = np.column_stack([t, i, truth.evaluate(t, i)])
    fit = fit_consequents_lse(FuzzyCompensator.create(shape, STROKE, 12.0), samples, damping=0.0)
    np.testing.assert_allclose(fit.consequents, truth.consequents, rtol=1e-6, atol=1e-6)


@pytest.mark.parametrize("shape", SHAPES)
def test_lse_matches_pseudo_inverse_oracle(shape):
    fc = FuzzyCompensator.create(shape, STROKE, 12.0)
    rng = np.random.default_rng(9)
    t = rng.uniform(0, STROKE, 300)
    i = rng.uniform(0, 12, 300)
    y = rng.normal(0, 1, 300)
    want = np.linalg.pinv(oracle_matrix(fc, t, i)) @ y
    got = fit_consequents_lse(fc, np.column_stack([t, i, y]), damping=0.0).consequents.ravel()
    np.testing.assert_allclose(got, want, rtol=1e-8, atol=1e-8 * np.abs(want).max())


def test_damped_lse_matches_normal_equations():
    fc = FuzzyCompensator.create("triangular", STROKE, 12.0)
    t = np.linspace(0, STROKE, 64)
    i = np.full_like(t, 10.0)
    y = np.sin(12 * t)
    a = oracle_matrix(fc, t, i)
    lam = 1e-3
    want = np.linalg.solve(a.T @ a + lam * np.eye(25), a.T @ y)
    got = fit_consequents_lse(fc, np.column_stack([t, i, y]), damping=lam).consequents.ravel()
    np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-12)


def test_rank_deficiency_without_damping():
    fc = FuzzyCompensator.create("triangular", STROKE, 12.0)
    t = np.linspace(0, STROKE, 64)
    samples = np.column_stack([t, np.full_like(t, 10.0), np.sin(12 * t)])
    with pytest.raises(RankDeficiencyError):
        fit_consequents_lse(fc, samples, damping=0.0)
    fit = fit_consequents_lse(fc, samples)  # default damping copes
    assert np.all(np.isfinite(fit.consequents))


@pytest.mark.parametrize("shape", SHAPES)
def test_gradient_matches_finite_difference(shape):
    fc = random_fc(shape, 2)
    rng = np.random.default_rng(1)
    t = rng.uniform(0, STROKE, 200)
    i = rng.uniform(0, 12, 200)
    samples = np.column_stack([t, i, rng.normal(0, 1, 200)])
    g = consequent_gradient(fc, samples)
    h = 1e-5
    fd = np.zeros((5, 5))
    for r in range(5):
        for c in range(5):
            up, dn = fc.consequents.copy(), fc.consequents.copy()
            up[r, c] += h
            dn[r, c] -= h
            fd[r, c] = (squared_error(fc.with_consequents(up), samples) - squared_error(fc.with_consequents(dn), samples)) / (2 * h)
    assert np.max(np.abs(fd - g)) / np.max(np.abs(g)) < 1e-5


def test_gd_zero_learning_rate_is_identity():
    fc = random_fc("bell", 1)
    samples = np.column_stack([np.linspace(0, STROKE, 30), np.full(30, 6.0), np.zeros(30)])
    assert np.array_equal(fit_consequents_gd(fc, samples, 0.0, 50).consequents, fc.consequents)


def test_gd_converges_to_lse():
    truth = random_fc("triangular", 8)
    t, i = grid_samples(truth, 9, 9)
    samples = np.column_stack([t, i, truth.evaluate(t, i)])
    start = FuzzyCompensator.create("triangular", STROKE, 12.0)
    gd = fit_consequents_gd(start, samples, learning_rate=20.0, epochs=20000)
    np.testing.assert_allclose(gd.consequents, truth.consequents, atol=1e-6)


def test_gd_divergence_is_reported():
    fc = FuzzyCompensator.create("triangular", STROKE, 12.0)
    t, i = grid_samples(fc)
    samples = np.column_stack([t, i, np.ones_like(t)])
    with pytest.raises(TrainingDivergedError):
        fit_consequents_gd(fc, samples, learning_rate=1e4, epochs=100)


@settings(max_examples=50)
@given(
    st.sampled_from(SHAPES),
    st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=25, max_size=25),
)
def test_file_round_trip_is_exact(tmp_path_factory, shape, values):
    fc = FuzzyCompensator.create(shape, STROKE, 12.0).with_consequents(values)
    path = fc.save(tmp_path_factory.mktemp("c") / "fc.json")
    back = FuzzyCompensator.load(path)
    assert back.shape == shape
    assert back.consequents.tobytes() == fc.consequents.tobytes()
    assert [m.params for m in back.theta_mfs] == [m.params for m in fc.theta_mfs]
    assert back.theta_range == fc.theta_range and back.iref_range == fc.iref_range


def test_file_version_and_format_checks(tmp_path):
    d = FuzzyCompensator.create().to_dict()
    for patch, msg in [({"version": 99}, "version"), ({"format": "other"}, "format"), ({"consequents": "x"}, "malformed")]:
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({**d, **patch}))
        with pytest.raises(CompensatorFileError, match=msg):
            FuzzyCompensator.load(p)
    p = tmp_path / "junk.json"
    p.write_text("{not json")
    with pytest.raises(CompensatorFileError):
        FuzzyCompensator.load(p)


def test_zero_consequents_give_zero():
    fc = FuzzyCompensator.create("gaussian_normal")
    assert fc.evaluate(0.2, 7.0) == 0.0
    assert not np.any(fc.evaluate(np.linspace(0, STROKE, 20), np.linspace(0, 12, 20)))


@pytest.mark.parametrize("shape", ["bell", "gaussian_normal", "gaussian_open"])
def test_smooth_partitions_cover_the_range(shape):
    mfs = build_partition(0.0, 1.0, 5, shape)
    x = np.linspace(0, 1, 4001)
    assert np.min(sum(mf(x) for mf in mfs)) > 0.5


def test_single_sample_is_rank_deficient():
    with pytest.raises(RankDeficiencyError):
        fit_consequents_lse(FuzzyCompensator.create(), [(0.1, 5.0, 1.0)], damping=0.0)


@pytest.mark.parametrize("damping", [0.0, 1e-8, 1e-3])
def test_lse_solution_is_a_minimum(damping):
    fc = FuzzyCompensator.create("bell", STROKE, 12.0)
    rng = np.random.default_rng(21)
    t = rng.uniform(0, STROKE, 200)
    i = rng.uniform(0, 12, 200)
    samples = np.column_stack([t, i, rng.normal(size=200)])
    fit = fit_consequents_lse(fc, samples, damping=damping)

    def objective(c):
        f = fc.with_consequents(c)
        return 2 * squared_error(f, samples) + damping * float(np.sum(c * c))

    best = objective(fit.consequents)
    for _ in range(200):
        d = rng.normal(size=(5, 5))
        d *= 1e-3 / np.linalg.norm(d)
        assert objective(fit.consequents + d) >= best - 1e-12 * best


def test_shapes_change_output():
    c = np.random.default_rng(0).normal(size=(5, 5))
    outs = {s: FuzzyCompensator.create(s).with_consequents(c).evaluate(0.13, 4.4) for s in SHAPES}
    assert len(set(outs.values())) == 4

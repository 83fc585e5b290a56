import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

import vqcint.shiftrule as sr
from vqcint.circuits import build_qpdf, build_reuploading, init_parameters
from vqcint.integration import (
    DegenerateNormalizationError,
    ExtrapolationWarning,
    IntegralResult,
    corner_points,
    corner_sum,
    corner_sum_of,
    ensemble_integrate,
    marginalize,
    normalized_prediction,
    normalized_prediction_batch,
    parametric_scan,
    primitive,
)
from vqcint.shiftrule import IDENTITY_MAP, OutputMap, TrainedModel, plan_cost
from vqcint.targets import HalfSineTarget
from vqcint.training import Dataset, TrainConfig, ensemble_train, generate_dataset


def cosine_model(scale=1.0, output_map=IDENTITY_MAP):
    # RY(pi/2) RZ(scale x) RY(-pi/2) sandwich: G(x) = cos(scale x)
    t = build_reuploading(1, 1)
    params = np.array([np.pi / 2, scale, 0.0, -np.pi / 2, 0.0, 0.0])
    return TrainedModel(t, params, output_map)


def log_cosine_model():
    # G(x, q) = cos(log x), flat in the spectator q
    t = build_qpdf(1)
    return TrainedModel(t, np.array([0.0, np.pi / 2, 1.0, 0.0, 0.0, -np.pi / 2]))


def random_model(input_dims, n_layers, seed, **kwargs):
    t = build_reuploading(input_dims, n_layers, **kwargs)
    return TrainedModel(t, init_parameters(t, seed))


def nested_difference(fn, lower, upper):
    # k one-dim endpoint differences applied in sequence; the oracle the
    # closed-form corner sum has to reproduce
    k = len(lower)
    if k == 0:
        return fn(np.array([]))
    def reduce(point, j):
        if j == k:
            return fn(np.array(point))
        hi = reduce(point + [upper[j]], j + 1)
        lo = reduce(point + [lower[j]], j + 1)
        return hi - lo
    return reduce([], 0)


# ---------------------------------------------------------------- corner rule


def test_corner_points_k1_is_b_minus_a():
    corners, signs = corner_points([2.0], [5.0])
    assert corners.tolist() == [[2.0], [5.0]]
    assert signs.tolist() == [-1.0, 1.0]


def test_corner_sum_of_product_primitive():
    # G(x, y) = x y is the primitive of 1, so the box integral is the area
    assert_allclose(corner_sum_of(lambda p: p[0] * p[1], [0, 0], [1, 1]), 1.0)
    assert_allclose(corner_sum_of(lambda p: p[0] * p[1], [1, 2], [4, 3]), 3.0)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_corner_sum_equals_nested_differences(k):
    # the 2^k signed corner sum must agree with k sequential endpoint
    # differences for any primitive whatsoever, to floating-point accuracy
    rng = np.random.default_rng(100 + k)
    freqs = rng.uniform(0.5, 2.0, k)
    phases = rng.uniform(0, 2 * np.pi, k)

    def smooth(p):
        return np.cos(p @ freqs + phases[0]) + np.prod(np.sin(p + phases))

    for _ in range(5):
        lo = rng.uniform(-1, 0.5, k)
        hi = lo + rng.uniform(0.1, 2.0, k)
        assert_allclose(
            corner_sum_of(smooth, lo, hi), nested_difference(smooth, lo, hi), atol=1e-12
        )


def test_corner_sum_of_zero_width_box_vanishes():
    assert corner_sum_of(lambda p: np.exp(p).sum(), [0.3, 1.1], [0.3, 1.1]) == 0.0


# ----------------------------------------------------------------- primitive


def test_primitive_is_the_model_value():
    m = cosine_model(scale=0.9)
    assert_allclose(primitive(m, [0.4]), np.cos(0.36), atol=1e-12)


def test_primitive_warns_outside_domain():
    m = cosine_model()  # default domain (0, 1)
    with pytest.warns(ExtrapolationWarning):
        primitive(m, [1.5])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        primitive(m, [0.5])


# ---------------------------------------------------------------- corner_sum


def test_full_integral_of_analytic_cosine():
    m = cosine_model(scale=1.3)
    res = corner_sum(m, [0.0], [1.0])
    assert_allclose(res.value, np.cos(1.3) - 1.0, atol=1e-12)
    assert res.uncertainty == 0.0
    assert res.mode == "exact"
    assert res.n_expectation_evals == 2
    assert res.dims == (0,)
    assert not res.extrapolated


def test_output_map_rescales_the_integral():
    plain = corner_sum(cosine_model(1.3), [0.0], [1.0]).value
    mapped = corner_sum(cosine_model(1.3, OutputMap(2.5, 7.0)), [0.0], [1.0]).value
    # the offset cancels between the two corners, the weight survives
    assert_allclose(mapped, 2.5 * plain, atol=1e-12)


def test_zero_width_interval_integrates_to_zero():
    res = corner_sum(cosine_model(), [0.4], [0.4])
    assert res.value == 0.0


def test_two_dim_corner_sum_against_injected_rule():
    m = random_model(2, 2, seed=5)
    box = ([0.1, 0.2], [0.8, 0.9])
    direct = corner_sum(m, *box)
    oracle = corner_sum_of(lambda p: m.value(p), *box)
    assert_allclose(direct.value, oracle, atol=1e-12)
    assert direct.n_expectation_evals == 4


def test_partial_corner_sum_keeps_residual_derivative():
    # integrating only dim 1 of a 2-dim model leaves d/dx0 in the corner sum
    m = random_model(2, 1, seed=8)
    x0 = 0.37
    res = corner_sum(m, [0.1], [0.9], dims=(1,), fixed={0: x0})
    oracle = m.derivative([x0, 0.9], (0,)) - m.derivative([x0, 0.1], (0,))
    assert_allclose(res.value, oracle, atol=1e-12)
    assert res.n_expectation_evals == 2 * plan_cost(m.template, (0,))


def test_corner_sum_validation():
    m = random_model(2, 1, seed=1)
    with pytest.raises(ValueError, match="inverted"):
        corner_sum(m, [1.0, 0.0], [0.0, 1.0])
    with pytest.raises(ValueError, match="pair per integrated dim"):
        corner_sum(m, [0.0], [1.0])
    with pytest.raises(ValueError, match="fixed"):
        corner_sum(m, [0.0], [1.0], dims=(0,))  # dim 1 left dangling
    with pytest.raises(ValueError, match="integrated, cannot also be fixed"):
        corner_sum(m, [0.0, 0.0], [1.0, 1.0], fixed={0: 0.5})
    with pytest.raises(ValueError, match="n_runs"):
        corner_sum(m, [0.0, 0.0], [1.0, 1.0], n_runs=0)


def test_spectator_dim_cannot_be_integrated():
    m = log_cosine_model()
    with pytest.raises(ValueError, match="spectator"):
        corner_sum(m, [0.1, 1.0], [0.9, 10.0], dims=(0, 1))


def test_spectator_needs_a_fixed_value():
    m = log_cosine_model()
    with pytest.raises(ValueError, match=r"\[1\]"):
        corner_sum(m, [0.1], [0.9])
    res = corner_sum(m, [0.1], [0.9], fixed={1: 5.0})
    assert_allclose(res.value, np.cos(np.log(0.9)) - np.cos(np.log(0.1)), atol=1e-12)


def test_extrapolated_box_warns_and_flags():
    m = cosine_model()  # trained box (0, 1)
    with pytest.warns(ExtrapolationWarning):
        res = corner_sum(m, [0.0], [2.0])
    assert res.extrapolated
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert not corner_sum(m, [0.0], [1.0]).extrapolated


def test_eval_accounting_matches_simulated_rows(monkeypatch):
    m = random_model(3, 1, seed=3)
    seen = []
    real = sr.run_program_batch_trig
    monkeypatch.setattr(
        sr, "run_program_batch_trig",
        lambda prog, ch, sh, nq: seen.append(len(ch)) or real(prog, ch, sh, nq),
    )
    res = corner_sum(m, [0.0, 0.0], [1.0, 1.0], dims=(1, 2), fixed={0: 0.3})
    assert res.n_expectation_evals == sum(seen) == 4 * plan_cost(m.template, (0,))


def test_shot_mode_mean_and_spread():
    m = cosine_model(scale=1.3)
    exact = corner_sum(m, [0.0], [1.0]).value
    res = corner_sum(m, [0.0], [1.0], n_shots=4000, n_runs=30, seed=9)
    assert res.mode == "shots"
    assert res.n_runs == 30
    assert res.uncertainty > 0
    assert abs(res.value - exact) < 5 * res.uncertainty / np.sqrt(30)
    assert res.n_expectation_evals == 30 * 2


def test_shot_spread_halves_at_quadruple_shots():
    m = cosine_model(scale=1.3)
    lo = corner_sum(m, [0.0], [1.0], n_shots=1000, n_runs=80, seed=2)
    hi = corner_sum(m, [0.0], [1.0], n_shots=4000, n_runs=80, seed=3)
    assert 1.5 < lo.uncertainty / hi.uncertainty < 2.6


def test_shot_mode_is_seed_deterministic():
    m = cosine_model()
    a = corner_sum(m, [0.0], [1.0], n_shots=500, n_runs=4, seed=7)
    b = corner_sum(m, [0.0], [1.0], n_shots=500, n_runs=4, seed=7)
    c = corner_sum(m, [0.0], [1.0], n_shots=500, n_runs=4, seed=8)
    assert a.value == b.value and a.uncertainty == b.uncertainty
    assert a.value != c.value


# ---------------------------------------------------------------- marginalize


def test_marginal_rows_match_manual_corner_sums():
    m = random_model(2, 1, seed=12)
    grid = [0.2, 0.5, 0.8]
    rows = marginalize(m, (1,), [0.1], [0.9], grid_dim=0, grid_values=grid)
    assert [r.grid_value for r in rows] == grid
    for r in rows:
        want = corner_sum(m, [0.1], [0.9], dims=(1,), fixed={0: r.grid_value})
        assert r.value == want.value
        assert r.n_expectation_evals == want.n_expectation_evals


def test_trapezoid_of_marginal_recovers_total_integral():
    # chaining the rules: integrating the dim-1 marginal over dim 0 on a
    # fine trapezoid grid has to land on the closed-form 2-dim corner sum
    m = random_model(2, 2, seed=21)
    total = corner_sum(m, [0.0, 0.0], [1.0, 1.0]).value
    grid = np.linspace(0.0, 1.0, 201)
    rows = marginalize(m, (1,), [0.0], [1.0], grid_dim=0, grid_values=grid)
    approx = np.trapezoid([r.value for r in rows], grid)
    assert abs(approx - total) < 0.02 * max(abs(total), 0.1)


def test_marginalize_with_no_integrated_dims_is_the_integrand():
    m = random_model(1, 2, seed=4)
    rows = marginalize(m, (), [], [], grid_dim=0, grid_values=[0.25, 0.75])
    for r in rows:
        assert_allclose(r.value, m.derivative([r.grid_value], (0,)), atol=1e-12)


def test_marginalize_partition_errors():
    m = random_model(2, 1, seed=2)
    with pytest.raises(ValueError, match="integrated, cannot also be fixed"):
        marginalize(m, (0,), [0.0], [1.0], grid_dim=0, grid_values=[0.5])
    with pytest.raises(ValueError, match="inconsistent"):
        marginalize(m, (1,), [0.0], [1.0], grid_dim=0, grid_values=[0.5], fixed={0: 0.1})
    with pytest.raises(ValueError, match="out of range"):
        marginalize(m, (1,), [0.0], [1.0], grid_dim=5, grid_values=[0.5])


# ------------------------------------------------------------ parametric scan


def test_scan_over_flat_spectator_is_constant():
    m = log_cosine_model()  # G independent of the spectator
    out = parametric_scan(m, 1, [1.5, 5.0, 40.0], [0.1], [0.9])
    want = np.cos(np.log(0.9)) - np.cos(np.log(0.1))
    for r in out:
        assert_allclose(r.value, want, atol=1e-12)
        assert not r.extrapolated


def test_scan_flags_out_of_domain_values():
    m = log_cosine_model()  # spectator domain defaults to (1, 100)
    with pytest.warns(ExtrapolationWarning):
        out = parametric_scan(m, 1, [5.0, 500.0], [0.1], [0.9])
    assert [r.extrapolated for r in out] == [False, True]


def test_scan_rejects_non_spectator_dim_and_empty_values():
    m = log_cosine_model()
    with pytest.raises(ValueError, match="not a spectator"):
        parametric_scan(m, 0, [1.0], [0.1], [0.9])
    assert parametric_scan(m, 1, [], [0.1], [0.9]) == []


# ------------------------------------------------------- normalized read-out


def test_normalized_prediction_trapezoid_is_three():
    # 3 g / (G(b) - G(a)) integrates to exactly 3 over (a, b) by construction;
    # a 200-point trapezoid of the batch read-out has to land within 2%
    m = random_model(1, 2, seed=31)
    xs = np.linspace(0.0, 1.0, 200)
    vals = normalized_prediction_batch(m, xs, 0.0, 1.0)
    assert abs(np.trapezoid(vals, xs) - 3.0) < 0.06


def test_normalized_prediction_point_matches_batch():
    m = random_model(1, 2, seed=31)
    one = normalized_prediction(m, 0.3, 0.0, 1.0)
    batch = normalized_prediction_batch(m, [0.3], 0.0, 1.0)
    assert one.value == batch[0]
    assert one.n_expectation_evals == plan_cost(m.template, (0,)) + 2


def test_normalized_prediction_eval_accounting(monkeypatch):
    m = random_model(1, 2, seed=31)  # 2 layers: derivative plan costs 4
    seen = []
    real = sr.run_program_batch_trig
    monkeypatch.setattr(
        sr, "run_program_batch_trig",
        lambda prog, ch, sh, nq: seen.append(len(ch)) or real(prog, ch, sh, nq),
    )
    one = normalized_prediction(m, 0.3, 0.0, 1.0)
    assert one.n_expectation_evals == sum(seen) == 6


def test_normalized_prediction_spectator_fixed():
    m = log_cosine_model()
    xs = np.array([0.2, 0.4])
    vals = normalized_prediction_batch(m, xs, 0.1, 0.9, fixed={1: 5.0})
    den = np.cos(np.log(0.9)) - np.cos(np.log(0.1))
    assert_allclose(vals, 3.0 * (-np.sin(np.log(xs)) / xs) / den, atol=1e-10)


def test_degenerate_normalization_raises():
    t = build_reuploading(1, 1)
    params = np.array([np.pi / 2, 0.0, 0.0, -np.pi / 2, 0.0, 0.0])  # G constant
    m = TrainedModel(t, params)
    with pytest.raises(DegenerateNormalizationError):
        normalized_prediction(m, 0.5, 0.0, 1.0)


def test_normalized_prediction_needs_single_integrated_dim():
    m = random_model(2, 1, seed=1)
    with pytest.raises(ValueError, match="one integrated dim"):
        normalized_prediction(m, 0.5, 0.0, 1.0)


# ------------------------------------------------------------------ ensemble


@pytest.fixture(scope="module")
def half_sine_ensemble():
    target = HalfSineTarget()
    config = TrainConfig(n_layers=2, max_iterations=150, seed=4, replicas=5)
    data = lambda seed: generate_dataset(target, target.domain, 20, "grid", seed)
    return ensemble_train(config, data)


def test_ensemble_integral_of_half_sine(half_sine_ensemble):
    res = ensemble_integrate(half_sine_ensemble, [0.0], [1.0])
    exact = (1.0 - np.cos(2.0)) / 4.0  # quadrature-checked in test_targets
    assert abs(res.value - exact) < 0.02 * exact
    assert res.uncertainty >= 0.0
    assert res.n_expectation_evals == sum(
        corner_sum(m, [0.0], [1.0]).n_expectation_evals for m in half_sine_ensemble
    )


def test_identical_replicas_have_zero_spread():
    m = cosine_model(1.3)
    res = ensemble_integrate([m, m, m], [0.0], [1.0])
    assert res.uncertainty == 0.0
    assert_allclose(res.value, np.cos(1.3) - 1.0, atol=1e-12)


def test_ensemble_needs_two_replicas_of_matching_shape():
    m = cosine_model()
    with pytest.raises(ValueError, match="at least 2"):
        ensemble_integrate([m], [0.0], [1.0])
    other = random_model(1, 3, seed=0)
    with pytest.raises(ValueError, match="template shape"):
        ensemble_integrate([m, other], [0.0], [1.0])


def test_result_dict_round_trips_json_fields():
    res = corner_sum(cosine_model(), [0.0], [1.0])
    d = res.to_dict()
    assert d["value"] == res.value
    assert d["dims"] == [0]
    assert d["mode"] == "exact"
    assert IntegralResult(**{**d, "dims": tuple(d["dims"]),
                             "lower": tuple(d["lower"]),
                             "upper": tuple(d["upper"])}) == res

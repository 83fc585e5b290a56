"""Read integrals off a trained model.

After training, the circuit output G is the integrand's primitive, so a
k-dim definite integral is the signed sum of G over the 2^k corners of the
integration box (the multidimensional fundamental theorem). Integrating
only a subset of the trained dims leaves the mixed partial over the
remaining integrated dims inside the corner sum, which is what marginal
distributions are made of.

Shot-noise uncertainty comes from repeating the whole corner evaluation
n_runs times with fresh seeds and quoting mean and std across runs;
ensemble uncertainty from the spread of independently retrained replicas.
Points outside the trained box are never refused, but they warn and flag
the result as extrapolated.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .rng import child_seed
from .shiftrule import TrainedModel, check_dims, plan_cost


class ExtrapolationWarning(UserWarning):
    """Raised (as a warning) when an evaluation point leaves the trained box."""


class DegenerateNormalizationError(Exception):
    """The normalizing denominator G(b) - G(a) is numerically zero."""


DEGENERATE_DENOMINATOR = 1e-8


@dataclass(frozen=True)
class IntegralResult:
    value: float
    uncertainty: float
    n_expectation_evals: int
    mode: str  # "exact" or "shots"
    n_shots: int
    n_runs: int
    dims: tuple[int, ...]
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    extrapolated: bool = False

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "uncertainty": self.uncertainty,
            "n_expectation_evals": self.n_expectation_evals,
            "mode": self.mode,
            "n_shots": self.n_shots,
            "n_runs": self.n_runs,
            "dims": list(self.dims),
            "lower": list(self.lower),
            "upper": list(self.upper),
            "extrapolated": self.extrapolated,
        }


@dataclass(frozen=True)
class MarginalRow:
    grid_value: float
    value: float
    uncertainty: float
    n_expectation_evals: int
    extrapolated: bool = False


def corner_points(lower, upper):
    """All 2^k corners of a box with the fundamental-theorem signs.

    A corner taking the lower limit in j dims carries sign (-1)^j, so for
    k = 1 the sum is G(b) - G(a).
    """
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    k = len(lower)
    corners = np.empty((2**k, k))
    signs = np.empty(2**k)
    for mask in range(2**k):
        picks = [(mask >> j) & 1 for j in range(k)]
        corners[mask] = np.where(picks, upper, lower)
        signs[mask] = (-1.0) ** (k - sum(picks))
    return corners, signs


def corner_sum_of(fn, lower, upper) -> float:
    """Signed corner sum of an arbitrary primitive; the testable core rule."""
    corners, signs = corner_points(lower, upper)
    return float(sum(s * fn(c) for s, c in zip(signs, corners)))


def primitive(model: TrainedModel, point, n_shots: int = 0, seed: int = 0) -> float:
    """The surrogate primitive: the model's (sampled) read-out at one point."""
    point = np.asarray(point, dtype=np.float64)
    if model.template.outside_domain(point):
        warnings.warn(
            f"point {point.tolist()} leaves the trained box", ExtrapolationWarning, stacklevel=2
        )
    return model.value(point, n_shots, seed)


def _assemble_box(model: TrainedModel, lower, upper, dims, fixed):
    t = model.template
    integrated = t.integrated_dims()
    dims = tuple(integrated) if dims is None else check_dims(t, dims)
    lower = tuple(float(v) for v in np.atleast_1d(np.asarray(lower, dtype=np.float64)))
    upper = tuple(float(v) for v in np.atleast_1d(np.asarray(upper, dtype=np.float64)))
    if len(lower) != len(dims) or len(upper) != len(dims):
        raise ValueError(
            f"need one (lower, upper) pair per integrated dim {dims}, "
            f"got {len(lower)}/{len(upper)}"
        )
    for d, lo, hi in zip(dims, lower, upper):
        if lo > hi:
            raise ValueError(f"inverted limits for dim {d}: {lo} > {hi}")
    fixed = {int(d): float(v) for d, v in (fixed or {}).items()}
    for d in fixed:
        if not 0 <= d < t.input_dims:
            raise ValueError(f"fixed dim {d} out of range")
        if d in dims:
            raise ValueError(f"dim {d} is integrated, cannot also be fixed")
    residual = tuple(d for d in integrated if d not in dims)
    missing = [d for d in range(t.input_dims) if d not in dims and d not in fixed]
    if missing:
        raise ValueError(f"dims {missing} need fixed evaluation values")
    return dims, lower, upper, residual, fixed


def corner_sum(
    model: TrainedModel,
    lower,
    upper,
    dims=None,
    fixed=None,
    n_shots: int = 0,
    n_runs: int = 1,
    seed: int = 0,
) -> IntegralResult:
    """Integrate the fitted integrand over a box via the primitive's corners.

    dims defaults to every integrated dim (a full integral, 2^k circuit
    values). With a subset, the mixed partial over the left-out integrated
    dims is evaluated at each corner instead (partial integration), and the
    left-out dims take their values from fixed, like the spectators do.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    dims, lower, upper, residual, fixed = _assemble_box(model, lower, upper, dims, fixed)
    t = model.template
    corners, signs = corner_points(lower, upper)
    points = np.empty((len(corners), t.input_dims))
    for d, v in fixed.items():
        points[:, d] = v
    for j, d in enumerate(dims):
        points[:, d] = corners[:, j]
    extrapolated = any(t.outside_domain(p) for p in points)
    if extrapolated:
        warnings.warn("integration box leaves the trained domain", ExtrapolationWarning,
                      stacklevel=2)
    if n_shots == 0:
        n_runs = 1
    run_values = np.empty(n_runs)
    for r in range(n_runs):
        vals = model.derivative_batch(
            points, residual, n_shots, child_seed(seed, r) if n_shots else 0
        )
        run_values[r] = float(signs @ vals)
    value = float(run_values.mean())
    uncertainty = float(run_values.std(ddof=1)) if n_runs > 1 else 0.0
    return IntegralResult(
        value=value,
        uncertainty=uncertainty,
        n_expectation_evals=n_runs * len(corners) * plan_cost(t, residual),
        mode="exact" if n_shots == 0 else "shots",
        n_shots=n_shots,
        n_runs=n_runs,
        dims=dims,
        lower=lower,
        upper=upper,
        extrapolated=extrapolated,
    )


def marginalize(
    model: TrainedModel,
    dims,
    lower,
    upper,
    grid_dim: int,
    grid_values,
    fixed=None,
    n_shots: int = 0,
    n_runs: int = 1,
    seed: int = 0,
) -> list[MarginalRow]:
    """Integrate out `dims` while scanning one left-out variable.

    Each row is the corner sum over the integrated dims of the mixed
    partial over the remaining integrated dims, with grid_dim pinned to the
    row's value. dims = () degenerates to the fitted integrand itself;
    dims = all integrated dims degenerates to corner_sum per grid value.
    """
    t = model.template
    if not 0 <= grid_dim < t.input_dims:
        raise ValueError(f"grid_dim {grid_dim} out of range")
    fixed = dict(fixed or {})
    if grid_dim in fixed:
        raise ValueError(f"grid_dim {grid_dim} is also fixed: inconsistent partition")
    rows = []
    for j, v in enumerate(grid_values):
        res = corner_sum(
            model,
            lower,
            upper,
            dims,
            {**fixed, grid_dim: float(v)},
            n_shots,
            n_runs,
            child_seed(seed, j) if n_shots else 0,
        )
        rows.append(
            MarginalRow(float(v), res.value, res.uncertainty, res.n_expectation_evals,
                        res.extrapolated)
        )
    return rows


def parametric_scan(
    model: TrainedModel,
    spectator_dim: int,
    values,
    lower,
    upper,
    dims=None,
    fixed=None,
    n_shots: int = 0,
    n_runs: int = 1,
    seed: int = 0,
) -> list[IntegralResult]:
    """One full integral per spectator value, no retraining in between."""
    t = model.template
    if not 0 <= spectator_dim < t.input_dims or t.dim_roles[spectator_dim] != "spectator":
        raise ValueError(f"dim {spectator_dim} is not a spectator")
    fixed = dict(fixed or {})
    out = []
    for j, v in enumerate(values):
        out.append(
            corner_sum(
                model,
                lower,
                upper,
                dims,
                {**fixed, spectator_dim: float(v)},
                n_shots,
                n_runs,
                child_seed(seed, j) if n_shots else 0,
            )
        )
    return out


@dataclass(frozen=True)
class NormalizedPrediction:
    value: float
    n_expectation_evals: int


def normalized_prediction(
    model: TrainedModel, x: float, a: float, b: float, fixed=None,
    n_shots: int = 0, seed: int = 0,
) -> NormalizedPrediction:
    """Density-style read-out 3 g(x) / (G(b) - G(a)) for one-dim integrands.

    The numerator costs one derivative plan, the denominator two corner
    values, hence plan + 2 expectation evaluations per point. A denominator
    below 1e-8 in magnitude raises instead of amplifying noise.
    """
    values, evals = _normalized_batch(model, [x], a, b, fixed, n_shots, seed)
    return NormalizedPrediction(float(values[0]), evals)


def normalized_prediction_batch(
    model: TrainedModel, xs, a: float, b: float, fixed=None
) -> np.ndarray:
    """Exact-mode normalized_prediction over a grid, denominator shared."""
    values, _ = _normalized_batch(model, xs, a, b, fixed, 0, 0)
    return values


def _normalized_batch(model, xs, a, b, fixed, n_shots, seed):
    t = model.template
    integrated = t.integrated_dims()
    if len(integrated) != 1:
        raise ValueError("normalized predictions need exactly one integrated dim")
    d = integrated[0]
    denom = corner_sum(
        model, [a], [b], (d,), fixed, n_shots, 1, child_seed(seed, 0) if n_shots else 0
    ).value
    if abs(denom) < DEGENERATE_DENOMINATOR:
        raise DegenerateNormalizationError(
            f"|G(b) - G(a)| = {abs(denom):.2e} < {DEGENERATE_DENOMINATOR}: "
            "cannot normalize by a vanishing integral"
        )
    fixed = dict(fixed or {})
    points = np.empty((len(xs), t.input_dims))
    for dd, v in fixed.items():
        points[:, dd] = v
    points[:, d] = np.asarray(xs, dtype=np.float64)
    g = model.derivative_batch(points, (d,), n_shots, child_seed(seed, 1) if n_shots else 0)
    per_point_evals = plan_cost(t, (d,)) + 2
    return 3.0 * g / denom, per_point_evals


def ensemble_integrate(
    models, lower, upper, dims=None, fixed=None, n_shots: int = 0, n_runs: int = 1,
    seed: int = 0,
) -> IntegralResult:
    """Corner sum per replica; mean is the estimate, spread the uncertainty."""
    models = list(models)
    if len(models) < 2:
        raise ValueError("ensemble spread needs at least 2 replicas")
    shapes = {(m.template.kind, m.template.input_dims, m.template.n_layers) for m in models}
    if len(shapes) != 1:
        raise ValueError(f"replicas disagree on template shape: {sorted(shapes)}")
    results = [
        corner_sum(m, lower, upper, dims, fixed, n_shots, n_runs, child_seed(seed, k))
        for k, m in enumerate(models)
    ]
    values = np.array([r.value for r in results])
    first = results[0]
    return IntegralResult(
        value=float(values.mean()),
        uncertainty=float(values.std(ddof=1)),
        n_expectation_evals=sum(r.n_expectation_evals for r in results),
        mode=first.mode,
        n_shots=n_shots,
        n_runs=first.n_runs,
        dims=first.dims,
        lower=first.lower,
        upper=first.upper,
        extrapolated=any(r.extrapolated for r in results),
    )

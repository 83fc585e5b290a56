"""Fit the circuit's shift-rule derivative to an integrand.

The model under training is G(x); the quantity compared against the data
is its mixed partial over all integrated dims, so after training G itself
is the integrand's primitive up to integration constants. When
train_output_map is on, the optimization vector is the circuit parameters
followed by (weight, offset) of the affine read-out.

Two optimizers: L-BFGS-B with finite-difference gradients (exact
simulation only; noisy losses would wreck the line search) and a seeded
(mu, lambda) evolution strategy that works in both modes. Both return the
best parameter vector ever evaluated, never the last iterate.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from .circuits import CircuitTemplate, build_ansatz, init_parameters
from .rng import child_seed, derive_rng
from .shiftrule import IDENTITY_MAP, OutputMap, TrainedModel, shift_rule_derivatives_batch

OPTIMIZERS = ("quasi-newton", "evolutionary")
SAMPLERS = ("uniform-random", "grid")
EARLY_STOP_WINDOW = 20

# seed stream tags so init, mutation, loss noise and replicas never collide
_INIT, _MUTATE, _LOSS, _REPLICA, _DATA = 0, 1, 2, 3, 4


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray
    targets: np.ndarray
    bounds: tuple[tuple[float, float], ...]
    seed: int
    sampler: str

    def __post_init__(self):
        object.__setattr__(self, "points", np.atleast_2d(np.asarray(self.points, float)))
        object.__setattr__(self, "targets", np.asarray(self.targets, float))
        if len(self.points) != len(self.targets):
            raise ValueError(
                f"{len(self.points)} points vs {len(self.targets)} targets"
            )
        if self.points.shape[1] != len(self.bounds):
            raise ValueError("bounds and point dimensionality disagree")
        for d, (lo, hi) in enumerate(self.bounds):
            col = self.points[:, d]
            if np.any(col < lo) or np.any(col > hi):
                raise ValueError(f"dim {d} has points outside [{lo}, {hi}]")

    @property
    def n_points(self) -> int:
        return len(self.points)


def generate_dataset(
    target,
    bounds,
    n_points: int,
    sampler: str = "uniform-random",
    seed: int = 0,
    spectator_values: dict | None = None,
) -> Dataset:
    """Sample training inputs and evaluate the target on them.

    uniform-random draws n_points vectors; grid takes n_points per dim and
    forms the tensor product. spectator_values pins listed dims to a cycle
    through the given values instead of sampling them, for the common
    "n points x a few parameter settings" layout.
    """
    bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
    if n_points < 1:
        raise ValueError(f"n_points must be >= 1, got {n_points}")
    if sampler not in SAMPLERS:
        raise ValueError(f"sampler must be one of {SAMPLERS}, got {sampler!r}")
    spectator_values = dict(spectator_values or {})
    free = [d for d in range(len(bounds)) if d not in spectator_values]
    rng = derive_rng(seed, _DATA)
    if sampler == "uniform-random":
        pts = np.empty((n_points, len(bounds)))
        for d in free:
            lo, hi = bounds[d]
            pts[:, d] = rng.uniform(lo, hi, n_points)
    else:
        axes = [np.linspace(*bounds[d], n_points) for d in free]
        mesh = np.meshgrid(*axes, indexing="ij") if axes else []
        rows = len(mesh[0].reshape(-1)) if axes else n_points
        pts = np.empty((rows, len(bounds)))
        for ax, d in enumerate(free):
            pts[:, d] = mesh[ax].reshape(-1)
    for d, values in spectator_values.items():
        values = np.asarray(values, dtype=np.float64)
        pts[:, d] = np.resize(values, len(pts))
    return Dataset(pts, np.asarray(target(pts)), bounds, seed, sampler)


@dataclass(frozen=True)
class TrainConfig:
    ansatz: str = "reuploading"
    n_layers: int = 2
    optimizer: str = "quasi-newton"
    max_iterations: int = 200
    n_shots: int = 0
    seed: int = 0
    replicas: int = 1
    tolerance: float = 1e-10
    spectator_dims: tuple[int, ...] = ()
    train_output_map: bool = False
    # evolution-strategy knobs
    population: int = 24
    sigma0: float = 0.3
    sigma_decay: float = 0.995

    def __post_init__(self):
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.optimizer == "quasi-newton" and self.n_shots > 0:
            raise ValueError(
                "quasi-newton needs the exact simulator: n_shots must be 0 "
                "(use the evolutionary optimizer for shot noise)"
            )
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.population < 2:
            raise ValueError("population must be >= 2")


def split_theta(template: CircuitTemplate, theta) -> tuple[np.ndarray, OutputMap]:
    """Optimization vector -> (circuit parameters, read-out map).

    Length n_params means the identity read-out; n_params + 2 means the
    last two entries are (weight, offset).
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape == (template.n_params,):
        return theta, IDENTITY_MAP
    if theta.shape == (template.n_params + 2,):
        return theta[:-2], OutputMap(float(theta[-2]), float(theta[-1]))
    raise ValueError(
        f"theta must have {template.n_params} or {template.n_params + 2} entries, "
        f"got shape {theta.shape}"
    )


def predict(template: CircuitTemplate, theta, points, n_shots: int = 0, seed: int = 0):
    """The trainee: mixed partial of G over every integrated dim, per point."""
    params, omap = split_theta(template, theta)
    return shift_rule_derivatives_batch(
        template, params, points, template.integrated_dims(), omap, n_shots, seed
    )


def mse_loss(template: CircuitTemplate, theta, dataset: Dataset, n_shots: int = 0, seed: int = 0):
    """Mean squared error of predict against the dataset targets."""
    g = predict(template, theta, dataset.points, n_shots, seed)
    return float(np.mean((g - dataset.targets) ** 2))


class _BestSeen:
    """Tracks the best finite loss over every evaluation, plus divergence."""

    def __init__(self):
        self.loss = np.inf
        self.theta = None
        self.nonfinite = 0

    def update(self, theta, loss: float) -> float:
        if not np.isfinite(loss):
            self.nonfinite += 1
            return np.inf
        if loss < self.loss:
            self.loss = loss
            self.theta = np.array(theta, dtype=np.float64, copy=True)
        return loss


class _EarlyStop(Exception):
    pass


def _check_early_stop(trace, tolerance):
    if len(trace) <= EARLY_STOP_WINDOW:
        return
    then = min(trace[: -EARLY_STOP_WINDOW])
    if then - min(trace) < tolerance:
        raise _EarlyStop


def _template_for(config: TrainConfig, dataset: Dataset) -> CircuitTemplate:
    dims = dataset.points.shape[1]
    roles = tuple(
        "spectator" if d in config.spectator_dims else "integrated" for d in range(dims)
    )
    if config.ansatz == "qpdf":
        if config.spectator_dims not in ((), (1,)):
            raise ValueError("qpdf fixes dim 1 as the spectator")
        roles = None
    return build_ansatz(config.ansatz, dims, config.n_layers, roles, dataset.bounds)


def train(config: TrainConfig, dataset: Dataset) -> tuple[TrainedModel, list[float]]:
    """Optimize one model; returns it with the per-iteration loss trace."""
    if dataset.n_points == 0:
        raise ValueError("empty dataset")
    template = _template_for(config, dataset)
    theta0 = init_parameters(template, child_seed(config.seed, _INIT))
    if config.train_output_map:
        theta0 = np.append(theta0, [1.0, 0.0])

    best = _BestSeen()

    def loss_at(theta, seed=0):
        val = mse_loss(template, theta, dataset, config.n_shots, seed)
        return best.update(theta, val)

    trace: list[float] = []
    loss_at(theta0, child_seed(config.seed, _LOSS, 0))
    if config.max_iterations > 0:
        if config.optimizer == "quasi-newton":
            _run_quasi_newton(config, theta0, loss_at, trace)
        else:
            _run_evolution(config, theta0, loss_at, trace)
    if best.nonfinite:
        warnings.warn(
            f"{best.nonfinite} non-finite loss evaluations; returning best finite iterate"
        )
    if best.theta is None:
        raise RuntimeError("optimizer diverged: every loss evaluation was non-finite")
    params, omap = split_theta(template, best.theta)
    model = TrainedModel(
        template,
        params,
        omap,
        metadata={
            "optimizer": config.optimizer,
            "iterations": len(trace),
            "seed": config.seed,
            "n_shots": config.n_shots,
            "final_loss": best.loss,
            "train_output_map": config.train_output_map,
        },
    )
    return model, trace


def _run_quasi_newton(config, theta0, loss_at, trace):
    def cb(xk):
        trace.append(loss_at(xk))
        _check_early_stop(trace, config.tolerance)

    try:
        minimize(
            loss_at,
            theta0,
            method="L-BFGS-B",
            jac="2-point",
            callback=cb,
            options={
                "maxiter": config.max_iterations,
                "finite_diff_rel_step": 1e-4,
            },
        )
    except _EarlyStop:
        pass


def _run_evolution(config, theta0, loss_at, trace):
    """(mu, lambda) strategy: Gaussian offspring, rank selection, decaying step."""
    exact = config.n_shots == 0
    mean = np.array(theta0, dtype=np.float64)
    sigma = config.sigma0
    mu = max(1, config.population // 4)
    for g in range(config.max_iterations):
        rng = derive_rng(config.seed, _MUTATE, g)
        offspring = mean + sigma * rng.standard_normal((config.population, len(mean)))
        losses = np.array(
            [
                loss_at(cand, child_seed(config.seed, _LOSS, g + 1, j))
                for j, cand in enumerate(offspring)
            ]
        )
        elite = offspring[np.argsort(losses, kind="stable")[:mu]]
        mean = elite.mean(axis=0)
        sigma *= config.sigma_decay
        trace.append(float(np.min(losses)))
        if exact:
            try:
                _check_early_stop(trace, config.tolerance)
            except _EarlyStop:
                break


def replica_seed(base_seed: int, k: int) -> int:
    """Training seed of ensemble member k; shared with the CLI."""
    return child_seed(base_seed, _REPLICA, k)


def ensemble_train(config: TrainConfig, data, replica_seeds=None) -> list[TrainedModel]:
    """Train config.replicas models with independent seeds.

    data is either a fixed Dataset (replicas differ by initialization only)
    or a callable seed -> Dataset so every replica also re-draws its
    training points. Failed replicas are warned about and dropped.
    """
    seeds = list(replica_seeds) if replica_seeds is not None else [
        replica_seed(config.seed, k) for k in range(config.replicas)
    ]
    if len(seeds) != config.replicas:
        raise ValueError(f"need {config.replicas} replica seeds, got {len(seeds)}")
    models = []
    for k, seed_k in enumerate(seeds):
        dataset = data(child_seed(seed_k, _DATA)) if callable(data) else data
        try:
            model, _ = train(replace(config, seed=seed_k, replicas=1), dataset)
        except Exception as err:  # noqa: BLE001 - replica isolation is the point
            warnings.warn(f"replica {k} failed and is excluded: {err}")
            continue
        models.append(model)
    if not models:
        raise RuntimeError("every ensemble replica failed")
    return models

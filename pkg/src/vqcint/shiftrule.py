"""Exact derivatives of the circuit output by the parameter shift rule.

With half-angle rotations every bound angle a enters the observable as a
pair of frequencies +-1/2, so dE/da = (E(a + pi/2) - E(a - pi/2)) / 2
exactly, not as a finite-difference approximation. An input coordinate
x_d reaches the circuit only through its data slots, each an affine map
scale * f(x_d) + offset, so the chain rule turns dE/dx_d into a sum of
shifted evaluations weighted by scale * f'(x_d).

Mixed partials over distinct dimensions expand as a product of those sums:
one shifted evaluation per choice of (slot, sign) for every dimension, so
the cost is prod_d (2 * uploads(d)) circuit runs. All evaluations of one
call are simulated in a single batch.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .circuits import CircuitTemplate
from .rng import child_seed
from .statevector import mean_z_batch, run_program_batch_trig, sampled_mean_z_batch

SHIFT = np.pi / 2
_HALF_TURN = np.sqrt(0.5)  # cos(pi/4) = sin(pi/4)


@dataclass(frozen=True)
class OutputMap:
    """Affine read-out y = weight * E + offset applied to the observable.

    The observable lives in [-1, 1]; the map lets a model reach targets
    outside that range. Derivatives pick up the weight only.
    """

    weight: float = 1.0
    offset: float = 0.0

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.weight * values + self.offset


IDENTITY_MAP = OutputMap()


def check_dims(template: CircuitTemplate, dims) -> tuple[int, ...]:
    """Canonicalize a mixed-partial dimension tuple.

    Dims must be distinct, in range, and integrated-role; spectator dims are
    pinned inputs and never differentiated. Second derivatives in one
    variable are out of scope, hence the distinctness requirement.
    """
    dims = tuple(int(d) for d in dims)
    if len(set(dims)) != len(dims):
        raise ValueError(f"derivative dims must be distinct, got {dims}")
    for d in dims:
        if not 0 <= d < template.input_dims:
            raise ValueError(f"dim {d} out of range for {template.input_dims} input dims")
        if template.dim_roles and template.dim_roles[d] != "integrated":
            raise ValueError(f"dim {d} is a spectator, cannot differentiate along it")
    return tuple(sorted(dims))


def psr_slot_derivative(evaluator, slot: int) -> float:
    """Exact d(expectation)/d(angle) for one slot from two shifted calls.

    evaluator maps a tuple of (slot, angle offset) assignments to an
    expectation value. This is the single-slot rule the mixed partials
    below are an expansion of; injectable for testing.
    """
    return 0.5 * (evaluator(((slot, SHIFT),)) - evaluator(((slot, -SHIFT),)))


def plan_cost(template: CircuitTemplate, dims) -> int:
    """Circuit evaluations needed for one mixed-partial value at one point."""
    dims = check_dims(template, dims)
    cost = 1
    for d in dims:
        cost *= 2 * len(template.data_slot_indices(d))
    return cost


def _term_plan(template: CircuitTemplate, dims):
    """Point-independent expansion of the mixed partial over `dims`.

    Each addend picks one upload slot and one shift sign per dim; the
    returned choices[k] is a pair of (n_terms,) arrays (local upload index,
    sign) for dims[k]. The chain-rule coefficients that weight the addends
    depend on the evaluation point and are applied by the caller.
    """
    options = [
        [(j, sign) for j in range(len(template.data_slot_indices(d))) for sign in (1.0, -1.0)]
        for d in dims
    ]
    combos = list(itertools.product(*options))
    choices = [
        (
            np.array([c[k][0] for c in combos], dtype=np.intp),
            np.array([c[k][1] for c in combos]),
        )
        for k in range(len(dims))
    ]
    return len(combos), choices


def _chain_factors(template: CircuitTemplate, params: np.ndarray, points: np.ndarray, dim: int):
    """d(angle)/d(x[dim]) for every upload of one dim, vectorized: (n_points, n_uploads)."""
    slots = template.data_slot_indices(dim)
    out = np.empty((len(points), len(slots)))
    for j, i in enumerate(slots):
        s = template.slots[i]
        if s.transform == "log":
            col = points[:, dim]
            if np.any(col <= 0):
                raise ValueError("log upload needs strictly positive input values")
            out[:, j] = params[s.scale_idx] / col
        else:
            out[:, j] = params[s.scale_idx]
    return out


def _observe(template, cos_half, sin_half, n_shots, seeds):
    amps = run_program_batch_trig(template.program, cos_half, sin_half, template.n_qubits)
    if n_shots == 0:
        return mean_z_batch(amps, template.n_qubits)
    return sampled_mean_z_batch(amps, template.n_qubits, n_shots, seeds)


def circuit_values_batch(
    template: CircuitTemplate,
    params: np.ndarray,
    points,
    output_map: OutputMap = IDENTITY_MAP,
    n_shots: int = 0,
    seed: int = 0,
) -> np.ndarray:
    """Mapped circuit output G(x) for each point, one batched simulation."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    half = 0.5 * template.bind_angles_batch(params, points)
    seeds = None
    if n_shots:
        seeds = [child_seed(seed, i, 0) for i in range(len(points))]
    return output_map.apply(_observe(template, np.cos(half), np.sin(half), n_shots, seeds))


def circuit_value(
    template: CircuitTemplate,
    params: np.ndarray,
    x,
    output_map: OutputMap = IDENTITY_MAP,
    n_shots: int = 0,
    seed: int = 0,
) -> float:
    return float(circuit_values_batch(template, params, [x], output_map, n_shots, seed)[0])


def shift_rule_derivatives_batch(
    template: CircuitTemplate,
    params: np.ndarray,
    points,
    dims,
    output_map: OutputMap = IDENTITY_MAP,
    n_shots: int = 0,
    seed: int = 0,
) -> np.ndarray:
    """Mixed partial of G over `dims`, evaluated at each point.

    dims may be empty, in which case this is circuit_values_batch. All
    points x terms are simulated as one batch; in sampled mode every
    evaluation draws its own shots from a seed derived per (point, term).
    """
    dims = check_dims(template, dims)
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if not dims:
        return circuit_values_batch(template, params, points, output_map, n_shots, seed)
    params = np.asarray(params, dtype=np.float64)
    half = 0.5 * template.bind_angles_batch(params, points)
    ch, sh = np.cos(half), np.sin(half)
    n_terms, choices = _term_plan(template, dims)
    # expand to (slots, points, terms); a +-pi/2 angle shift is a +-pi/4
    # half-angle turn, so shifted trig is an exact rotation of the base trig
    # and the expanded batch costs no further cos/sin evaluations. Slot-major
    # layout so the simulator's internal transpose is a free view.
    ch_rows = np.repeat(np.ascontiguousarray(ch.T)[:, :, None], n_terms, axis=2)
    sh_rows = np.repeat(np.ascontiguousarray(sh.T)[:, :, None], n_terms, axis=2)
    coeffs = np.ones((len(points), n_terms))
    for d, (picks, signs) in zip(dims, choices):
        slots = np.asarray(template.data_slot_indices(d))
        for t in range(n_terms):
            i, sign = slots[picks[t]], signs[t]
            c0, s0 = ch_rows[i, :, t].copy(), sh_rows[i, :, t].copy()
            ch_rows[i, :, t] = _HALF_TURN * (c0 - sign * s0)
            sh_rows[i, :, t] = _HALF_TURN * (s0 + sign * c0)
        factors = _chain_factors(template, params, points, d)
        coeffs *= factors[:, picks] * (0.5 * signs)
    seeds = None
    if n_shots:
        seeds = [
            child_seed(seed, i, t + 1) for i in range(len(points)) for t in range(n_terms)
        ]
    values = _observe(
        template,
        ch_rows.reshape(template.n_slots, -1).T,
        sh_rows.reshape(template.n_slots, -1).T,
        n_shots,
        seeds,
    )
    per_point = (coeffs * values.reshape(len(points), n_terms)).sum(axis=1)
    return output_map.weight * per_point


def shift_rule_derivative(
    template: CircuitTemplate,
    params: np.ndarray,
    x,
    dims,
    output_map: OutputMap = IDENTITY_MAP,
    n_shots: int = 0,
    seed: int = 0,
) -> float:
    return float(
        shift_rule_derivatives_batch(template, params, [x], dims, output_map, n_shots, seed)[0]
    )


@dataclass
class TrainedModel:
    """A circuit template with bound parameters and read-out map.

    The model's derivative over the trained dimensions plays the integrand;
    the model value plays its primitive.
    """

    template: CircuitTemplate
    params: np.ndarray
    output_map: OutputMap = IDENTITY_MAP
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (self.template.n_params,):
            raise ValueError(
                f"expected {self.template.n_params} parameters, got {self.params.shape}"
            )

    def value(self, x, n_shots: int = 0, seed: int = 0) -> float:
        return circuit_value(self.template, self.params, x, self.output_map, n_shots, seed)

    def value_batch(self, points, n_shots: int = 0, seed: int = 0) -> np.ndarray:
        return circuit_values_batch(
            self.template, self.params, points, self.output_map, n_shots, seed
        )

    def derivative(self, x, dims, n_shots: int = 0, seed: int = 0) -> float:
        return shift_rule_derivative(
            self.template, self.params, x, dims, self.output_map, n_shots, seed
        )

    def derivative_batch(self, points, dims, n_shots: int = 0, seed: int = 0) -> np.ndarray:
        return shift_rule_derivatives_batch(
            self.template, self.params, points, dims, self.output_map, n_shots, seed
        )

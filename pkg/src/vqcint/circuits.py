"""Trainable circuit layouts and their data-upload bookkeeping.

A template is a fixed gate skeleton plus a binding table saying where each
rotation angle comes from: either a trainable parameter, or a trainable
affine map of one input coordinate (a data slot). Re-binding the same
skeleton at many points is what the integrator does all day, so binding is
vectorized over points.

Two families are provided. The re-uploading family interleaves a
five-rotation block per input dimension with a ring of CZ entanglers each
layer; dimension d lives on qubit d // 2. The density family is a single
qubit taking two inputs, the first uploaded twice per layer (once through
log, once raw) and the second once, which suits positive, singular-at-zero
targets with a smooth spectator parameter.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import derive_rng

TRANSFORMS = ("identity", "log")
ROLES = ("integrated", "spectator")


@dataclass(frozen=True)
class SlotBinding:
    """How one rotation angle is produced from (parameters, input point).

    Pure slots carry a single trainable angle. Data slots compute
    scale * f(x[dim]) + offset with trainable scale (and optional trainable
    offset), f the named transform.
    """

    param_idx: int | None = None
    dim: int | None = None
    transform: str = "identity"
    scale_idx: int | None = None
    offset_idx: int | None = None

    @property
    def is_data(self) -> bool:
        return self.dim is not None


def _transform(values: np.ndarray, name: str) -> np.ndarray:
    if name == "identity":
        return values
    if name == "log":
        if np.any(values <= 0):
            raise ValueError("log upload needs strictly positive input values")
        return np.log(values)
    raise ValueError(f"unknown transform {name!r}")


def _transform_deriv(value: float, name: str) -> float:
    if name == "identity":
        return 1.0
    if name == "log":
        if value <= 0:
            raise ValueError("log upload needs strictly positive input values")
        return 1.0 / value
    raise ValueError(f"unknown transform {name!r}")


@dataclass(frozen=True)
class CircuitTemplate:
    kind: str
    n_qubits: int
    input_dims: int
    n_layers: int
    # (gate kind, qubits, slot index) triples; slot None marks the CZs
    program: tuple[tuple[str, tuple[int, ...], int | None], ...]
    slots: tuple[SlotBinding, ...]
    n_params: int
    scale_indices: tuple[int, ...]
    # per-dim role: integrated dims may be differentiated and integrated,
    # spectator dims are uploaded but only ever pinned to a value
    dim_roles: tuple[str, ...] = ()
    # declared training box per dim, for extrapolation flagging
    dim_domains: tuple[tuple[float, float], ...] = ()

    @property
    def n_slots(self) -> int:
        return len(self.slots)

    def integrated_dims(self) -> tuple[int, ...]:
        return tuple(d for d, r in enumerate(self.dim_roles) if r == "integrated")

    def spectator_dims(self) -> tuple[int, ...]:
        return tuple(d for d, r in enumerate(self.dim_roles) if r == "spectator")

    def outside_domain(self, point) -> bool:
        point = np.asarray(point, dtype=np.float64)
        for v, (lo, hi) in zip(point, self.dim_domains):
            if v < lo or v > hi:
                return True
        return False

    def data_slot_indices(self, dim: int) -> tuple[int, ...]:
        if not 0 <= dim < self.input_dims:
            raise ValueError(f"dim {dim} out of range for {self.input_dims} input dims")
        return tuple(i for i, s in enumerate(self.slots) if s.dim == dim)

    def data_slot_factors(self, params: np.ndarray, x: np.ndarray, dim: int):
        """(slot index, d angle / d x[dim]) for every upload of one dimension."""
        params = self._check_params(params)
        out = []
        for i in self.data_slot_indices(dim):
            s = self.slots[i]
            factor = float(params[s.scale_idx]) * _transform_deriv(float(x[dim]), s.transform)
            out.append((i, factor))
        return out

    def bind_angles(self, params: np.ndarray, x) -> np.ndarray:
        """Angle vector (n_slots,) for a single input point."""
        return self.bind_angles_batch(params, np.atleast_2d(np.asarray(x, dtype=np.float64)))[0]

    def bind_angles_batch(self, params: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Angle matrix (n_points, n_slots) for a batch of input points."""
        params = self._check_params(params)
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != self.input_dims:
            raise ValueError(
                f"points must have shape (n, {self.input_dims}), got {points.shape}"
            )
        angles = np.empty((points.shape[0], self.n_slots))
        for i, s in enumerate(self.slots):
            if s.is_data:
                col = params[s.scale_idx] * _transform(points[:, s.dim], s.transform)
                if s.offset_idx is not None:
                    col = col + params[s.offset_idx]
                angles[:, i] = col
            else:
                angles[:, i] = params[s.param_idx]
        return angles

    def _check_params(self, params: np.ndarray) -> np.ndarray:
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {params.shape}")
        return params


def _check_dim_meta(input_dims, dim_roles, dim_domains, default_domain):
    if dim_roles is None:
        dim_roles = ("integrated",) * input_dims
    dim_roles = tuple(dim_roles)
    if len(dim_roles) != input_dims or any(r not in ROLES for r in dim_roles):
        raise ValueError(f"dim_roles must be {input_dims} of {ROLES}, got {dim_roles}")
    if dim_domains is None:
        dim_domains = default_domain
    dim_domains = tuple((float(lo), float(hi)) for lo, hi in dim_domains)
    if len(dim_domains) != input_dims or any(lo >= hi for lo, hi in dim_domains):
        raise ValueError(f"dim_domains must be {input_dims} pairs with lo < hi, got {dim_domains}")
    return dim_roles, dim_domains


def build_reuploading(
    input_dims: int, n_layers: int, dim_roles=None, dim_domains=None
) -> CircuitTemplate:
    """Multi-qubit re-uploading template, two input dimensions per qubit."""
    if input_dims < 1:
        raise ValueError(f"input_dims must be >= 1, got {input_dims}")
    if n_layers < 1:
        raise ValueError(f"n_layers must be >= 1, got {n_layers}")
    dim_roles, dim_domains = _check_dim_meta(
        input_dims, dim_roles, dim_domains, ((0.0, 1.0),) * input_dims
    )
    n_qubits = math.ceil(input_dims / 2)
    program: list[tuple[str, tuple[int, ...], int | None]] = []
    slots: list[SlotBinding] = []
    scale_indices: list[int] = []
    n_params = 0

    def fresh() -> int:
        nonlocal n_params
        n_params += 1
        return n_params - 1

    def rot(kind: str, qubit: int, binding: SlotBinding) -> None:
        program.append((kind, (qubit,), len(slots)))
        slots.append(binding)

    for _ in range(n_layers):
        for dim in range(input_dims):
            q = dim // 2
            # five-rotation block, data entering the second gate applied
            rot("RY", q, SlotBinding(param_idx=fresh()))
            scale = fresh()
            scale_indices.append(scale)
            rot("RZ", q, SlotBinding(dim=dim, scale_idx=scale))
            rot("RZ", q, SlotBinding(param_idx=fresh()))
            rot("RY", q, SlotBinding(param_idx=fresh()))
            rot("RZ", q, SlotBinding(param_idx=fresh()))
        if n_qubits >= 2:
            for q in range(n_qubits - 1):
                program.append(("CZ", (q, q + 1), None))
            if n_qubits >= 3:
                program.append(("CZ", (n_qubits - 1, 0), None))
    for q in range(n_qubits):
        rot("RY", q, SlotBinding(param_idx=fresh()))
    return CircuitTemplate(
        kind="reuploading",
        n_qubits=n_qubits,
        input_dims=input_dims,
        n_layers=n_layers,
        program=tuple(program),
        slots=tuple(slots),
        n_params=n_params,
        scale_indices=tuple(scale_indices),
        dim_roles=dim_roles,
        dim_domains=dim_domains,
    )


def build_qpdf(n_layers: int, dim_domains=None) -> CircuitTemplate:
    """Single-qubit density template: inputs (x, spectator), x uploaded twice per layer."""
    if n_layers < 1:
        raise ValueError(f"n_layers must be >= 1, got {n_layers}")
    dim_roles, dim_domains = _check_dim_meta(
        2, ("integrated", "spectator"), dim_domains, ((1e-4, 1.0), (1.0, 100.0))
    )
    program: list[tuple[str, tuple[int, ...], int | None]] = []
    slots: list[SlotBinding] = []
    scale_indices: list[int] = []
    n_params = 0

    def fresh() -> int:
        nonlocal n_params
        n_params += 1
        return n_params - 1

    def data_rot(kind: str, dim: int, transform: str) -> None:
        scale = fresh()
        offset = fresh()
        scale_indices.append(scale)
        program.append((kind, (0,), len(slots)))
        slots.append(SlotBinding(dim=dim, transform=transform, scale_idx=scale, offset_idx=offset))

    for _ in range(n_layers):
        data_rot("RY", 1, "identity")
        data_rot("RZ", 0, "log")
        data_rot("RY", 0, "identity")
    return CircuitTemplate(
        kind="qpdf",
        n_qubits=1,
        input_dims=2,
        n_layers=n_layers,
        program=tuple(program),
        slots=tuple(slots),
        n_params=n_params,
        scale_indices=tuple(scale_indices),
        dim_roles=dim_roles,
        dim_domains=dim_domains,
    )


def build_ansatz(
    kind: str, input_dims: int, n_layers: int, dim_roles=None, dim_domains=None
) -> CircuitTemplate:
    if kind == "reuploading":
        return build_reuploading(input_dims, n_layers, dim_roles, dim_domains)
    if kind == "qpdf":
        if input_dims != 2:
            raise ValueError(f"qpdf takes exactly 2 input dims, got {input_dims}")
        if dim_roles is not None and tuple(dim_roles) != ("integrated", "spectator"):
            raise ValueError("qpdf roles are fixed: dim 0 integrated, dim 1 spectator")
        return build_qpdf(n_layers, dim_domains)
    raise ValueError(f"unknown ansatz kind {kind!r}")


def init_parameters(template: CircuitTemplate, seed: int) -> np.ndarray:
    """Random start: angles uniform on [0, 2pi), upload scales near one.

    Scales start in [0.9, 1.1] so every input dimension enters with a
    sensible frequency instead of a near-zero one that gradients cannot
    recover from.
    """
    rng = derive_rng(seed)
    params = rng.uniform(0.0, 2.0 * np.pi, template.n_params)
    if template.scale_indices:
        params[list(template.scale_indices)] = rng.uniform(
            0.9, 1.1, len(template.scale_indices)
        )
    return params

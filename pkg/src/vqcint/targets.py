"""Built-in integrands and an independent quadrature to check against.

Every target is a callable taking an (n, d) batch of input points and
returning (n,) values, with `input_dims` and a per-dim `domain` attribute
giving the box it is meant to be trained on. The quadrature here is
deliberately dumb (tensor-product composite Simpson): it shares no code
with the circuit pipeline, which is what makes it usable as an oracle.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy.interpolate import RegularGridInterpolator


def _as_points(x, input_dims: int) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if pts.shape[1] != input_dims:
        raise ValueError(f"expected points with {input_dims} columns, got shape {pts.shape}")
    return pts


def eval_cosine(alpha, alpha0: float, x) -> np.ndarray:
    """cos(alpha . x + alpha0) for a batch of points."""
    alpha = np.asarray(alpha, dtype=np.float64)
    pts = _as_points(x, len(alpha))
    return np.cos(pts @ alpha + alpha0)


def eval_half_sine(x) -> np.ndarray:
    """0.5 sin(2x), the single-variable warm-up integrand."""
    return 0.5 * np.sin(2.0 * np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class CosineTarget:
    """Plane-wave integrand cos(alpha . x + offset).

    With alpha0=None the offset rides along as the last input dimension (a
    spectator the model is trained over); with a number it is frozen and the
    target has len(alpha) dims.
    """

    alpha: tuple[float, ...] = (1.0,)
    alpha0: float | None = None
    kind: str = "cosine"

    @property
    def input_dims(self) -> int:
        return len(self.alpha) + (1 if self.alpha0 is None else 0)

    @property
    def domain(self) -> tuple[tuple[float, float], ...]:
        box = ((0.0, 3.5),) * len(self.alpha)
        if self.alpha0 is None:
            box = box + ((0.0, 5.0),)
        return box

    def __call__(self, x) -> np.ndarray:
        pts = _as_points(x, self.input_dims)
        if self.alpha0 is None:
            return np.cos(pts[:, :-1] @ np.asarray(self.alpha) + pts[:, -1])
        return eval_cosine(self.alpha, self.alpha0, pts)


@dataclass(frozen=True)
class HalfSineTarget:
    kind: str = "halfsine"
    input_dims: int = 1
    domain: tuple[tuple[float, float], ...] = ((0.0, 1.0),)

    def __call__(self, x) -> np.ndarray:
        return eval_half_sine(_as_points(x, 1)[:, 0])


class TabulatedGrid:
    """Multilinear interpolant over a full tensor-product grid of knots."""

    kind = "tabulated"

    def __init__(self, knots, values):
        self.knots = tuple(np.asarray(k, dtype=np.float64) for k in knots)
        self.values = np.asarray(values, dtype=np.float64)
        for k in self.knots:
            if k.ndim != 1 or len(k) < 2 or np.any(np.diff(k) <= 0):
                raise ValueError("knot vectors must be 1-dim, strictly increasing, length >= 2")
        if self.values.shape != tuple(len(k) for k in self.knots):
            raise ValueError(
                f"value array shape {self.values.shape} does not match knot counts "
                f"{tuple(len(k) for k in self.knots)}"
            )
        self._interp = RegularGridInterpolator(
            self.knots, self.values, method="linear", bounds_error=True
        )

    @property
    def input_dims(self) -> int:
        return len(self.knots)

    @property
    def domain(self) -> tuple[tuple[float, float], ...]:
        return tuple((float(k[0]), float(k[-1])) for k in self.knots)

    def __call__(self, x) -> np.ndarray:
        return self._interp(_as_points(x, self.input_dims))

    @classmethod
    def from_csv(cls, path) -> "TabulatedGrid":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if header[-1] != "value" or header[:-1] != [f"x{i}" for i in range(len(header) - 1)]:
                raise ValueError(f"expected header x0,...,x{{d-1}},value, got {header!r}")
            rows = np.loadtxt(fh, delimiter=",", ndmin=2)
        d = len(header) - 1
        if rows.shape[1] != d + 1:
            raise ValueError(f"rows have {rows.shape[1]} columns, header promises {d + 1}")
        knots = [np.unique(rows[:, i]) for i in range(d)]
        shape = tuple(len(k) for k in knots)
        if len(rows) != int(np.prod(shape)):
            raise ValueError(
                f"ragged grid: {len(rows)} rows cannot form a full {shape} tensor product"
            )
        values = np.full(shape, np.nan)
        idx = tuple(np.searchsorted(knots[i], rows[:, i]) for i in range(d))
        values[idx] = rows[:, -1]
        if np.any(np.isnan(values)):
            raise ValueError("ragged grid: duplicate and missing nodes")
        return cls(knots, values)

    def to_csv(self, path) -> None:
        d = self.input_dims
        mesh = np.meshgrid(*self.knots, indexing="ij")
        cols = [m.reshape(-1) for m in mesh] + [self.values.reshape(-1)]
        header = ",".join([f"x{i}" for i in range(d)] + ["value"])
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="")


def pdf_like_grid(n_x: int = 30, n_q: int = 9) -> TabulatedGrid:
    """Synthetic momentum-density-shaped 2-dim target on a log-spaced grid.

    f(x, Q) = x^-0.2 (1 - x)^3 (1 + 0.1 log Q): integrable singularity at
    x = 0, mild spectator dependence. Stands in for externally tabulated
    density grids in scan tests. Knot spans are kept short enough that the
    near-unit upload-scale initialization starts in a trainable frequency
    range (a linear Q upload across a 40 GeV-like span never recovers).
    """
    xs = np.geomspace(0.01, 0.7, n_x)
    qs = np.geomspace(1.65, 6.0, n_q)
    xg, qg = np.meshgrid(xs, qs, indexing="ij")
    vals = xg**-0.2 * (1 - xg) ** 3 * (1 + 0.1 * np.log(qg))
    return TabulatedGrid((xs, qs), vals)


def _simpson_rule(lo: float, hi: float, n: int):
    if n < 3 or n % 2 == 0:
        raise ValueError(f"points_per_dim must be odd and >= 3, got {n}")
    nodes = np.linspace(lo, hi, n)
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return nodes, w * (hi - lo) / (n - 1) / 3.0


def quadrature_oracle(fn, bounds, points_per_dim: int = 101) -> float:
    """Tensor-product composite Simpson integral of fn over a box.

    Kept to <= 4 dims: the node count is points_per_dim ** d.
    """
    bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
    if not 1 <= len(bounds) <= 4:
        raise ValueError(f"oracle handles 1..4 dims, got {len(bounds)}")
    per_dim = [_simpson_rule(lo, hi, points_per_dim) for lo, hi in bounds]
    mesh = np.meshgrid(*[nodes for nodes, _ in per_dim], indexing="ij")
    pts = np.column_stack([m.reshape(-1) for m in mesh])
    weights = reduce(np.multiply.outer, [w for _, w in per_dim]).reshape(-1)
    return float(weights @ np.asarray(fn(pts), dtype=np.float64))


def quadrature_marginal(fn, bounds, grid_dim: int, grid_values, points_per_dim: int = 101):
    """Integrate fn over every dim except grid_dim, at each pinned grid value."""
    bounds = tuple(bounds)
    if not 0 <= grid_dim < len(bounds):
        raise ValueError(f"grid_dim {grid_dim} out of range")
    rest = [b for i, b in enumerate(bounds) if i != grid_dim]
    out = np.empty(len(grid_values))
    for j, v in enumerate(grid_values):
        if rest:
            def pinned(pts, v=v):
                full = np.insert(np.atleast_2d(pts), grid_dim, v, axis=1)
                return fn(full)

            out[j] = quadrature_oracle(pinned, rest, points_per_dim)
        else:
            out[j] = float(np.asarray(fn(np.array([[v]], dtype=np.float64)))[0])
    return out

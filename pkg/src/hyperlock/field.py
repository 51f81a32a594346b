"""Time-periodic fields on [0, 1] x [0, 1].

A field is stored as one-sided Fourier modes in t (k = 0..M) at every
x-node; the negative modes are implied by conjugate symmetry, so the field is
real by construction.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from ._grid import (
    abs_max,
    grid_to_modes,
    modes_to_grid,
    node_weights,
    shift_factors,
    t_grid,
)

DEFAULT_QUAD_ORDER = 10


@dataclass(frozen=True)
class Numerics:
    """Discretization and solver settings shared by all operators."""

    modes: int = 32
    n_x: int = 129
    quad_order: int = DEFAULT_QUAD_ORDER
    oversample: int = 4
    tol: float = 1e-10
    max_iter: int = 50

    def __post_init__(self):
        if not 1 <= self.modes <= 128:
            raise ValueError("modes must lie in [1, 128]")
        if not 5 <= self.n_x <= 513:
            raise ValueError("n_x must lie in [5, 513]")
        if self.quad_order < 2:
            raise ValueError("quad_order must be at least 2")

    @property
    def x_nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_x)

    @property
    def n_phys(self) -> int:
        """Size of the physical t-grid used for products."""
        return max(self.oversample * self.modes, 2 * self.modes + 2)

    @property
    def n_colloc(self) -> int:
        return 2 * self.modes + 1

    def with_(self, **changes) -> "Numerics":
        data = asdict(self)
        data.update(changes)
        return Numerics(**data)

    def to_dict(self) -> dict:
        return asdict(self)


def _as_coef(coef) -> np.ndarray:
    coef = np.array(coef, dtype=complex)
    coef[..., 0] = coef[..., 0].real
    return coef


class BoundarySignal:
    """Periodic functions of t alone, one per component (boundary data)."""

    __slots__ = ("coef",)

    def __init__(self, coef):
        coef = _as_coef(coef)
        if coef.ndim != 2:
            raise ValueError("boundary signal coefficients must have shape (ncomp, M+1)")
        self.coef = coef

    @classmethod
    def from_function(cls, fn: Callable, n_modes: int, n_components: int = 2):
        n = 4 * n_modes + 4
        t = t_grid(n)
        vals = np.broadcast_to(np.asarray(fn(t), dtype=float), (n_components, n))
        return cls(grid_to_modes(vals, n_modes))

    @classmethod
    def zeros(cls, n_modes: int, n_components: int = 2):
        return cls(np.zeros((n_components, n_modes + 1), dtype=complex))

    @property
    def n_modes(self) -> int:
        return self.coef.shape[-1] - 1

    def values(self, n_t: int | None = None) -> np.ndarray:
        return modes_to_grid(self.coef, n_t or 2 * self.n_modes + 1)

    def shift(self, phi: float) -> "BoundarySignal":
        return BoundarySignal(self.coef * shift_factors(self.n_modes, phi))

    def dt(self) -> "BoundarySignal":
        return BoundarySignal(self.coef * (2j * np.pi * np.arange(self.n_modes + 1)))

    def eval(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        k = np.arange(self.n_modes + 1)
        e = np.exp(2j * np.pi * np.multiply.outer(t, k))
        w = np.full(k.shape, 2.0)
        w[0] = 1.0
        return np.einsum("...k,ck->c...", e, w * self.coef).real

    def sup_norm(self, density: int = 8) -> float:
        return abs_max(self.coef, density)

    def __add__(self, other):
        return BoundarySignal(self.coef + other.coef)

    def __sub__(self, other):
        return BoundarySignal(self.coef - other.coef)

    def __mul__(self, s):
        return BoundarySignal(self.coef * float(s))

    __rmul__ = __mul__

    def __neg__(self):
        return BoundarySignal(-self.coef)


class PeriodicField:
    """Real field u(t, x), 1-periodic in t, on uniform x-nodes of [0, 1]."""

    __slots__ = ("coef", "x_nodes")

    def __init__(self, coef, x_nodes):
        coef = _as_coef(coef)
        x_nodes = np.asarray(x_nodes, dtype=float)
        if coef.ndim != 3:
            raise ValueError("field coefficients must have shape (ncomp, N_x, M+1)")
        if coef.shape[1] != x_nodes.size:
            raise ValueError("coefficient array does not match the x-nodes")
        self.coef = coef
        self.x_nodes = x_nodes

    # construction -----------------------------------------------------
    @classmethod
    def zeros(cls, n_components: int, n_modes: int, x_nodes):
        x_nodes = np.asarray(x_nodes, dtype=float)
        return cls(np.zeros((n_components, x_nodes.size, n_modes + 1), dtype=complex), x_nodes)

    @classmethod
    def from_values(cls, values, x_nodes, n_modes: int | None = None):
        """Project samples on a uniform t-grid (last axis) onto M modes."""
        values = np.asarray(values, dtype=float)
        n = values.shape[-1]
        if n_modes is None:
            n_modes = (n - 1) // 2
        return cls(grid_to_modes(values, n_modes), x_nodes)

    @classmethod
    def from_function(cls, fn: Callable, n_modes: int, x_nodes, n_components: int | None = None):
        """Sample ``fn(t, x) -> (ncomp, ...)`` and project onto ``n_modes`` modes."""
        x_nodes = np.asarray(x_nodes, dtype=float)
        n = 4 * n_modes + 4
        tt, xx = np.meshgrid(t_grid(n), x_nodes)
        vals = np.asarray(fn(tt, xx), dtype=float)
        if vals.ndim == 2:
            vals = vals[None]
        if n_components is not None:
            vals = np.broadcast_to(vals, (n_components,) + tt.shape)
        return cls.from_values(vals, x_nodes, n_modes)

    # shape ------------------------------------------------------------
    @property
    def n_modes(self) -> int:
        return self.coef.shape[-1] - 1

    @property
    def n_x(self) -> int:
        return self.x_nodes.size

    @property
    def n_components(self) -> int:
        return self.coef.shape[0]

    def like(self, coef) -> "PeriodicField":
        return PeriodicField(coef, self.x_nodes)

    def component(self, j: int) -> "PeriodicField":
        return self.like(self.coef[j : j + 1])

    def truncate(self, n_modes: int) -> "PeriodicField":
        """Change the number of modes (zero-padding or truncation)."""
        coef = np.zeros(self.coef.shape[:-1] + (n_modes + 1,), dtype=complex)
        m = min(n_modes, self.n_modes)
        coef[..., : m + 1] = self.coef[..., : m + 1]
        return self.like(coef)

    # sampling ---------------------------------------------------------
    def values(self, n_t: int | None = None) -> np.ndarray:
        """Samples on a uniform t-grid, shape (ncomp, N_x, n_t)."""
        return modes_to_grid(self.coef, n_t or 2 * self.n_modes + 1)

    def eval(self, t, x) -> np.ndarray:
        """Point values, Fourier sum in t and cubic spline in x; shape (ncomp,)+bcast."""
        t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        if np.any(x < 0.0) or np.any(x > 1.0):
            raise ValueError("x must lie in [0, 1]")
        spline = CubicSpline(self.x_nodes, self.coef, axis=1)
        c = spline(x.ravel())  # (ncomp, npts, M+1)
        k = np.arange(self.n_modes + 1)
        e = np.exp(2j * np.pi * np.multiply.outer(t.ravel(), k))
        w = np.full(k.shape, 2.0)
        w[0] = 1.0
        vals = np.einsum("cpk,pk->cp", c * w, e).real
        return vals.reshape((self.n_components,) + t.shape)

    def trace(self, node: int) -> BoundarySignal:
        return BoundarySignal(self.coef[:, node, :])

    # group action and calculus ----------------------------------------
    def shift(self, phi: float) -> "PeriodicField":
        """(S_phi u)(t, x) = u(t + phi, x), exact on the modes."""
        return self.like(self.coef * shift_factors(self.n_modes, phi))

    def dt(self) -> "PeriodicField":
        return self.like(self.coef * (2j * np.pi * np.arange(self.n_modes + 1)))

    # norms ------------------------------------------------------------
    def sup_norm(self, density: int = 8) -> float:
        """``max |u|`` over t (sampled at density * M, then polished) and the x-nodes."""
        return abs_max(self.coef, density)

    def l2_inner(self, other: "PeriodicField", quad_order: int = DEFAULT_QUAD_ORDER) -> float:
        """Sum over components of the double integral of u * v."""
        self._check(other)
        w = node_weights(self.n_x, quad_order)
        per_node = self.coef[..., 0].real * other.coef[..., 0].real + 2.0 * (
            self.coef[..., 1:] * np.conj(other.coef[..., 1:])
        ).real.sum(axis=-1)
        return float((per_node * w).sum())

    def l2_norm(self, quad_order: int = DEFAULT_QUAD_ORDER) -> float:
        return float(np.sqrt(max(self.l2_inner(self, quad_order), 0.0)))

    # arithmetic -------------------------------------------------------
    def _check(self, other):
        if self.coef.shape != other.coef.shape:
            raise ValueError("fields have different shapes")
        if not np.array_equal(self.x_nodes, other.x_nodes):
            raise ValueError("fields live on different x-grids")

    def __add__(self, other):
        self._check(other)
        return self.like(self.coef + other.coef)

    def __sub__(self, other):
        self._check(other)
        return self.like(self.coef - other.coef)

    def __mul__(self, s):
        return self.like(self.coef * float(s))

    __rmul__ = __mul__

    def __neg__(self):
        return self.like(-self.coef)

    def __repr__(self):
        return (
            f"PeriodicField(components={self.n_components}, modes={self.n_modes}, "
            f"n_x={self.n_x})"
        )

    # serialization ----------------------------------------------------
    def header(self, extra: dict | None = None) -> dict:
        meta = {"M": self.n_modes, "N_x": self.n_x, "n_components": self.n_components}
        if extra:
            meta.update(extra)
        return meta

    def to_csv(self, path_or_buffer=None, extra: dict | None = None) -> str:
        """Uniform t-grid of size 4M as rows, (component, x-node) as columns."""
        n = 4 * self.n_modes
        vals = self.values(n)
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.header(extra), sort_keys=True) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        cols = ["t"] + [
            f"u{j + 1}@{float(x)!r}" for j in range(self.n_components) for x in self.x_nodes
        ]
        writer.writerow(cols)
        t = t_grid(n)
        for i in range(n):
            writer.writerow([repr(float(t[i]))] + [repr(float(v)) for v in vals[:, :, i].ravel()])
        text = buf.getvalue()
        if path_or_buffer is not None:
            if hasattr(path_or_buffer, "write"):
                path_or_buffer.write(text)
            else:
                with open(path_or_buffer, "w") as fh:
                    fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text) -> "PeriodicField":
        if isinstance(path_or_text, str) and path_or_text.startswith("#"):
            text = path_or_text
        else:
            with open(path_or_text) as fh:
                text = fh.read()
        lines = text.splitlines()
        meta = json.loads(lines[0][1:])
        rows = list(csv.reader(lines[1:]))
        cols = rows[0]
        data = np.array([[float(v) for v in r] for r in rows[1:]])
        m, nx, nc = meta["M"], meta["N_x"], meta["n_components"]
        x_nodes = np.array([float(c.split("@", 1)[1]) for c in cols[1 : 1 + nx]])
        vals = data[:, 1:].T.reshape(nc, nx, data.shape[0])
        return cls.from_values(vals, x_nodes, m)


"""Discretized Banach-lattice state spaces.

A state is a flat float64 vector partitioned into components by a
:class:`SpaceSpec`: plain scalars and cell-averaged grid densities.  Order
is componentwise, ``sup``/``abs`` act componentwise, and the product norm
is the *sum* of the component norms (which keeps L1 mass bookkeeping
exact).  Grid values are cell averages, so the weighted L1 norm of a grid
component equals the total mass it carries.

All objects here are immutable after construction and safe to share
between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

from .errors import DimensionMismatchError

__all__ = [
    "Scalar",
    "Grid",
    "SpaceSpec",
    "StateVector",
    "norm",
    "norms",
    "lattice_sup",
    "lattice_abs",
    "min_component",
    "cone_tolerance",
    "in_cone",
    "validate_state",
]

#: States are plain numpy vectors; the space object carries the structure.
StateVector = np.ndarray

NORM_KINDS = ("L1", "L2", "Linf")


@dataclass(frozen=True)
class Scalar:
    """A single real degree of freedom (weight 1 in the product norm)."""

    label: str = "s"


@dataclass(frozen=True)
class Grid:
    """A 1D cell-centered grid component.

    Parameters
    ----------
    cells : int
        Number of cells (>= 1).
    width : float or tuple of float
        Uniform cell width, or one width per cell. All widths > 0.
    norm : str
        ``"L1"`` (sum of w|v|), ``"L2"`` (sqrt of sum of w v^2) or
        ``"Linf"`` (max |v|, unweighted).
    """

    cells: int
    width: Union[float, tuple] = 1.0
    norm: str = "L1"
    label: str = "g"

    def __post_init__(self):
        if self.cells < 1:
            raise ValueError("Grid needs at least one cell")
        if self.norm not in NORM_KINDS:
            raise ValueError(f"unknown norm kind {self.norm!r}")
        w = self.width
        if isinstance(w, (list, np.ndarray)):
            object.__setattr__(self, "width", tuple(float(x) for x in w))
            w = self.width
        if isinstance(w, tuple):
            if len(w) != self.cells:
                raise ValueError("per-cell widths must match cell count")
            if any(x <= 0 for x in w):
                raise ValueError("cell widths must be positive")
        elif w <= 0:
            raise ValueError("cell width must be positive")

    @property
    def widths(self) -> np.ndarray:
        if isinstance(self.width, tuple):
            return np.asarray(self.width, dtype=float)
        return np.full(self.cells, float(self.width))


@dataclass(frozen=True)
class SpaceSpec:
    """An ordered product of Scalar and Grid components."""

    components: tuple = field(default_factory=tuple)

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ValueError("a space needs at least one component")
        for c in comps:
            if not isinstance(c, (Scalar, Grid)):
                raise TypeError(f"unsupported component {c!r}")
        object.__setattr__(self, "components", comps)

    @cached_property
    def dof(self) -> int:
        return int(sum(1 if isinstance(c, Scalar) else c.cells for c in self.components))

    @cached_property
    def slices(self) -> tuple:
        """Flat-index slice of each component."""
        out, start = [], 0
        for c in self.components:
            n = 1 if isinstance(c, Scalar) else c.cells
            out.append(slice(start, start + n))
            start += n
        return tuple(out)

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weight of every degree of freedom (1 for scalars)."""
        w = np.empty(self.dof)
        for c, sl in zip(self.components, self.slices):
            w[sl] = 1.0 if isinstance(c, Scalar) else c.widths
        return w

    @cached_property
    def labels(self) -> tuple:
        """One label per degree of freedom, e.g. ``S, I_001, I_002, ...``."""
        out = []
        for c in self.components:
            if isinstance(c, Scalar):
                out.append(c.label)
            else:
                out.extend(f"{c.label}_{k:03d}" for k in range(1, c.cells + 1))
        return tuple(out)

    def component_index(self, flat_index: int) -> int:
        """Which component a flat degree of freedom belongs to."""
        for k, sl in enumerate(self.slices):
            if sl.start <= flat_index < sl.stop:
                return k
        raise IndexError(flat_index)


def validate_state(space: SpaceSpec, v: StateVector) -> np.ndarray:
    """Check that ``v`` matches ``space`` and is finite; returns it as float64."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != space.dof:
        raise DimensionMismatchError(
            f"state has {v.shape[-1]} entries, space has {space.dof} degrees of freedom"
        )
    if not np.all(np.isfinite(v)):
        raise DimensionMismatchError("state contains non-finite entries")
    return v


def norms(space: SpaceSpec, states: np.ndarray) -> np.ndarray:
    """Product-space norm of a batch of states (norm along the last axis).

    The product norm is the sum over components of the component norms:
    absolute value for scalars, weighted L1/L2 or plain max-norm for grids.
    """
    states = np.asarray(states, dtype=float)
    if states.shape[-1] != space.dof:
        raise DimensionMismatchError(
            f"state has {states.shape[-1]} entries, space has {space.dof}"
        )
    total = np.zeros(states.shape[:-1])
    for c, sl in zip(space.components, space.slices):
        block = states[..., sl]
        if isinstance(c, Scalar):
            total = total + np.abs(block[..., 0])
        elif c.norm == "L1":
            total = total + np.abs(block) @ c.widths
        elif c.norm == "L2":
            total = total + np.sqrt((block * block) @ c.widths)
        else:  # Linf
            total = total + np.abs(block).max(axis=-1)
    return total


def norm(space: SpaceSpec, v: StateVector) -> float:
    """Product-space norm of a single state."""
    return float(norms(space, np.asarray(v, dtype=float)))


def _check_same_shape(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionMismatchError(f"shape mismatch {x.shape} vs {y.shape}")
    return x, y


def lattice_sup(x: StateVector, y: StateVector) -> StateVector:
    """Componentwise supremum of two states."""
    x, y = _check_same_shape(x, y)
    return np.maximum(x, y)


def lattice_abs(v: StateVector) -> StateVector:
    """Lattice modulus: sup(v, -v), i.e. the componentwise absolute value."""
    v = np.asarray(v, dtype=float)
    return lattice_sup(v, -v)


def min_component(v: StateVector) -> tuple:
    """Smallest entry of a state and its flat index (first occurrence)."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise DimensionMismatchError("empty state")
    idx = int(np.argmin(v))
    return float(v[idx]), idx


def cone_tolerance(space: SpaceSpec, v: StateVector, rel: float = 1e-12) -> float:
    """Absolute tolerance for cone membership: rel * (1 + ||v||).

    Floating-point quadrature can undershoot zero; raw values are still
    reported alongside any tolerance-based decision.
    """
    return rel * (1.0 + norm(space, v))


def in_cone(space: SpaceSpec, v: StateVector, tol: float | None = None) -> bool:
    """Whether ``v`` lies in the nonnegative cone up to tolerance."""
    if tol is None:
        tol = cone_tolerance(space, v)
    return min_component(v)[0] >= -tol

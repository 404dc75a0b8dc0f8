"""Uniform box grids, optional disc masks, Dirichlet data and sampled fields."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .operators import ConfigurationError


@dataclass(frozen=True)
class Disc:
    """Open ball B_R(center); nodes outside it act as Dirichlet nodes."""

    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise ConfigurationError("disc radius must be positive")

    def contains(self, X: np.ndarray) -> np.ndarray:
        d2 = ((X - np.asarray(self.center)) ** 2).sum(-1)
        return d2 < self.radius ** 2 * (1 - 1e-12)

    def axis_crossing(self, x: np.ndarray, axis: int, sign: int) -> float:
        """Distance t >= 0 from inside point x to the sphere along sign*e_axis."""
        y = x - np.asarray(self.center)
        rest = (y ** 2).sum() - y[axis] ** 2
        return float(np.sqrt(max(self.radius ** 2 - rest, 0.0)) - sign * y[axis])

    def to_dict(self) -> dict:
        return {"center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Grid:
    lo: tuple
    hi: tuple
    counts: tuple
    disc: Disc | None = None

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        counts = tuple(int(c) for c in self.counts)
        if not (len(lo) == len(hi) == len(counts)) or len(lo) not in (2, 3):
            raise ConfigurationError("grid must be 2- or 3-dimensional with matching lo/hi/counts")
        for a, b, c in zip(lo, hi, counts):
            if not b > a:
                raise ConfigurationError(f"empty axis [{a}, {b}]")
            if c < 9 or c % 2 == 0:
                raise ConfigurationError(f"axis point count must be odd and >= 9, got {c}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "counts", counts)
        if self.disc is not None:
            c, R = np.asarray(self.disc.center), self.disc.radius
            h = np.asarray(self.spacing)
            if len(c) != self.dim or np.any(c - R < np.asarray(lo) + h) or np.any(c + R > np.asarray(hi) - h):
                raise ConfigurationError("disc must lie strictly inside the box (one node margin)")

    @classmethod
    def square(cls, half_width: float, h: float, dim: int = 2, disc: Disc | None = None) -> "Grid":
        m = int(round(half_width / h))
        if not np.isclose(m * h, half_width):
            raise ConfigurationError(f"half width {half_width} is not a multiple of h={h}")
        return cls((-half_width,) * dim, (half_width,) * dim, (2 * m + 1,) * dim, disc)

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple:
        return self.counts

    @property
    def spacing(self) -> tuple:
        return tuple((b - a) / (c - 1) for a, b, c in zip(self.lo, self.hi, self.counts))

    def axes(self) -> list:
        return [np.linspace(a, b, c) for a, b, c in zip(self.lo, self.hi, self.counts)]

    def coords(self) -> np.ndarray:
        """Node coordinates, shape counts + (dim,)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def interior_mask(self) -> np.ndarray:
        m = np.zeros(self.counts, dtype=bool)
        m[(slice(1, -1),) * self.dim] = True
        if self.disc is not None:
            m &= self.disc.contains(self.coords())
        return m

    def node_of(self, x) -> tuple:
        """Nearest node index to point x."""
        idx = [int(round((xi - a) / h)) for xi, a, h in zip(x, self.lo, self.spacing)]
        return tuple(int(np.clip(i, 0, c - 1)) for i, c in zip(idx, self.counts))

    def to_dict(self) -> dict:
        d = {"lo": list(self.lo), "hi": list(self.hi), "counts": list(self.counts)}
        if self.disc is not None:
            d["disc"] = self.disc.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        disc = Disc(**d["disc"]) if d.get("disc") else None
        if "h" in d:
            return cls.square(d["half_width"], d["h"], d.get("dim", 2), disc)
        return cls(d["lo"], d["hi"], d["counts"], disc)


# Dirichlet data ------------------------------------------------------------

_GENERATORS: dict[str, Callable] = {}


def register_generator(tag: str):
    def deco(fn):
        _GENERATORS[tag] = fn
        return fn
    return deco


@register_generator("zero")
def _zero(X, **_):
    return np.zeros(X.shape[:-1])


@register_generator("constant")
def _constant(X, value=0.0):
    return np.full(X.shape[:-1], float(value))


@register_generator("quadratic")
def _quadratic(X, A=None, b=None, c=0.0):
    n = X.shape[-1]
    A = np.zeros((n, n)) if A is None else np.asarray(A, float)
    b = np.zeros(n) if b is None else np.asarray(b, float)
    return np.einsum("...i,ij,...j->...", X, A, X) + X @ b + float(c)


@register_generator("radial-quadratic")
def _radial_quadratic(X, a=1.0, c=0.0, center=None):
    """a*|x - center|^2 + c."""
    center = np.zeros(X.shape[-1]) if center is None else np.asarray(center, float)
    return a * ((X - center) ** 2).sum(-1) + c


@dataclass
class DirichletData:
    """Boundary values g, as a closed-form generator (tag + params) or a node table.

    A node table carries one value per node of the full grid; only entries at
    Dirichlet nodes are read.  Masked domains need a closed form, since the
    boundary closure evaluates g off-grid.
    """

    tag: str = "zero"
    params: dict = field(default_factory=dict)
    table: np.ndarray | None = None

    def __post_init__(self):
        if self.table is None and self.tag not in _GENERATORS:
            raise ConfigurationError(f"unknown boundary generator {self.tag!r}; known: {sorted(_GENERATORS)}")

    def __call__(self, X: np.ndarray) -> np.ndarray:
        if self.table is not None:
            raise ConfigurationError("tabulated boundary data cannot be evaluated off-grid")
        out = _GENERATORS[self.tag](np.asarray(X, float), **self.params)
        if not np.all(np.isfinite(out)):
            raise ConfigurationError("boundary data is not finite")
        return out

    def on_grid(self, grid: Grid) -> np.ndarray:
        if self.table is not None:
            t = np.asarray(self.table, float)
            if t.shape != grid.shape or not np.all(np.isfinite(t[~grid.interior_mask()])):
                raise ConfigurationError("boundary table does not match the grid")
            return t
        return self(grid.coords())

    def to_dict(self) -> dict:
        if self.table is not None:
            return {"table": np.asarray(self.table).tolist()}
        return {"tag": self.tag, "params": _jsonable(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "DirichletData":
        if "table" in d:
            return cls(tag="table", table=np.asarray(d["table"], float))
        return cls(d.get("tag", "zero"), dict(d.get("params", {})))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


@dataclass(frozen=True)
class GridField:
    grid: Grid
    values: np.ndarray = field(repr=False)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field has non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def sample(cls, grid: Grid, fn, **metadata) -> "GridField":
        return cls(grid, fn(grid.coords()), dict(metadata))

    def rescaled(self, fn_values) -> "GridField":
        return GridField(self.grid, fn_values, dict(self.metadata))

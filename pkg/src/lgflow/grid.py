"""Discrete BV calculus on uniform 1D/2D cell grids.

Layout
------
Cell values live in arrays of shape ``grid.cells`` (C order, axis 0 is x).
The gradient lives on interior faces: component ``a`` has shape ``cells``
with one fewer entry along axis ``a``; entry ``i`` is the face between cells
``i`` and ``i+1``.  A face is interior when both neighbouring cells are
active.  Each cell owns the faces on its upper side, which gives the
cell-centred gradient used by all integrands::

    xi(cell)_a = (u[cell + e_a] - u[cell]) / h    (0 if that face is not interior)

Boundary faces separate an active cell from an inactive cell or from the
edge of the box.  Dirichlet data enter only through these faces, by the
relaxed term ``sum h^(n-1) |Tv - g| f_inf(x, nu)``; there are no ghost cells.

Inner products are h-weighted: ``h^n`` on cells and faces, ``h^(n-1)`` on
boundary faces, so that ``<grad u, z> = -<u, div z>`` holds exactly when
``z`` carries no boundary flux.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional, Sequence

import numpy as np

from . import lagrangian as lg
from .errors import GridMismatch, InvalidParam, ShapeMismatch

MEMORY_CAP_CELLS = 64_000_000
MAGIC = b"LGF1"


class BoundaryFaces(NamedTuple):
    cell: np.ndarray      # flat index of the adjacent active cell
    axis: np.ndarray
    side: np.ndarray      # -1 lower face, +1 upper face
    normal: np.ndarray    # (nb, dim) outward unit normals
    center: np.ndarray    # (nb, dim) face centres


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Uniform box grid, optionally restricted to the cells where ``mask`` is true."""

    cells: tuple
    h: float
    origin: Optional[tuple] = None
    mask: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        cells = tuple(int(c) for c in self.cells)
        object.__setattr__(self, "cells", cells)
        if len(cells) not in (1, 2):
            raise InvalidParam("only 1D and 2D grids are supported")
        if min(cells) < 2:
            raise InvalidParam("need at least 2 cells per axis")
        if not self.h > 0:
            raise InvalidParam("spacing h must be positive")
        if int(np.prod(cells)) > MEMORY_CAP_CELLS:
            raise InvalidParam(f"{np.prod(cells)} cells exceeds the cap of {MEMORY_CAP_CELLS}")
        origin = (0.0,) * len(cells) if self.origin is None else tuple(float(o) for o in self.origin)
        if len(origin) != len(cells):
            raise InvalidParam("origin dimension mismatch")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "h", float(self.h))
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != cells:
                raise InvalidParam("mask shape must equal cells")
            if not mask.any():
                raise InvalidParam("mask has no active cells")
            mask = mask.copy()
            mask.setflags(write=False)
            object.__setattr__(self, "mask", None if mask.all() else mask)

    def __eq__(self, other):
        if not isinstance(other, GridSpec):
            return NotImplemented
        if (self.cells, self.h, self.origin) != (other.cells, other.h, other.origin):
            return False
        if self.mask is None or other.mask is None:
            return self.mask is None and other.mask is None
        return bool(np.array_equal(self.mask, other.mask))

    __hash__ = None

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple:
        return self.cells

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @property
    def face_area(self) -> float:
        return self.h ** (self.dim - 1)

    @cached_property
    def active(self) -> np.ndarray:
        return np.ones(self.cells, dtype=bool) if self.mask is None else self.mask

    @property
    def measure(self) -> float:
        """Lebesgue measure of the active region."""
        return float(self.active.sum()) * self.cell_volume

    @cached_property
    def centers(self) -> np.ndarray:
        axes = [self.origin[a] + (np.arange(n) + 0.5) * self.h for a, n in enumerate(self.cells)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def face_mask(self, axis: int) -> np.ndarray:
        return self._face_masks[axis]

    @cached_property
    def _face_masks(self):
        act = self.active
        out = []
        for a in range(self.dim):
            lo = np.take(act, np.arange(self.cells[a] - 1), axis=a)
            hi = np.take(act, np.arange(1, self.cells[a]), axis=a)
            out.append(lo & hi)
        return tuple(out)

    def face_shape(self, axis: int) -> tuple:
        s = list(self.cells)
        s[axis] -= 1
        return tuple(s)

    @cached_property
    def owned_faces(self) -> np.ndarray:
        """(dim, *cells) bool: cell owns an interior face on its upper side along axis a."""
        out = np.zeros((self.dim,) + self.cells, dtype=bool)
        for a in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[a] = slice(0, self.cells[a] - 1)
            out[(a,) + tuple(sl)] = self.face_mask(a)
        return out

    @cached_property
    def boundary(self) -> BoundaryFaces:
        act = self.active
        cells, axes, sides, normals, centers = [], [], [], [], []
        flat = np.arange(act.size).reshape(self.cells)
        for a in range(self.dim):
            for side in (-1, 1):
                nbr = np.zeros_like(act)
                sl_dst = [slice(None)] * self.dim
                sl_src = [slice(None)] * self.dim
                if side < 0:
                    sl_dst[a], sl_src[a] = slice(1, None), slice(0, -1)
                else:
                    sl_dst[a], sl_src[a] = slice(0, -1), slice(1, None)
                nbr[tuple(sl_dst)] = act[tuple(sl_src)]
                on = act & ~nbr
                idx = flat[on]
                nrm = np.zeros(self.dim)
                nrm[a] = side
                cells.append(idx)
                axes.append(np.full(idx.size, a))
                sides.append(np.full(idx.size, side))
                normals.append(np.tile(nrm, (idx.size, 1)))
                c = self.centers.reshape(-1, self.dim)[idx].copy()
                c[:, a] += 0.5 * side * self.h
                centers.append(c)
        return BoundaryFaces(
            np.concatenate(cells).astype(np.int64), np.concatenate(axes).astype(np.int64),
            np.concatenate(sides).astype(np.int64), np.concatenate(normals),
            np.concatenate(centers))

    @property
    def n_boundary(self) -> int:
        return int(self.boundary.cell.size)

    def locate(self, points) -> np.ndarray:
        """Index tuple arrays of the cells containing ``points`` (clipped to the box)."""
        p = np.asarray(points, dtype=float)
        idx = []
        for a in range(self.dim):
            i = np.floor((p[..., a] - self.origin[a]) / self.h).astype(np.int64)
            idx.append(np.clip(i, 0, self.cells[a] - 1))
        return tuple(idx)

    def with_mask(self, mask) -> "GridSpec":
        return GridSpec(self.cells, self.h, self.origin, mask)

    def to_dict(self) -> dict:
        return {"cells": list(self.cells), "h": self.h, "origin": list(self.origin)}


def _check_same(a: GridSpec, b: GridSpec):
    if a != b:
        raise GridMismatch("fields live on different grids")


# ---------------------------------------------------------------- field types

class ScalarField:
    """One real per cell.  Inactive cells of a masked grid hold 0."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: GridSpec, values):
        v = np.array(values, dtype=float)
        if v.size == int(np.prod(grid.cells)) and v.shape != grid.cells:
            v = v.reshape(grid.cells)
        if v.shape != grid.cells:
            raise ShapeMismatch(f"values shape {v.shape} != cells {grid.cells}")
        if not np.all(np.isfinite(v)):
            raise InvalidParam("field values must be finite")
        if grid.mask is not None:
            v[~grid.mask] = 0.0
        self.grid = grid
        self.values = v

    @classmethod
    def constant(cls, grid: GridSpec, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.cells, float(c)))

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "ScalarField":
        return cls(grid, np.broadcast_to(fn(grid.centers), grid.cells))

    def sample(self, points) -> np.ndarray:
        return self.values[self.grid.locate(points)]

    def on_grid(self, grid: GridSpec) -> "ScalarField":
        if (grid.cells, grid.h) != (self.grid.cells, self.grid.h):
            raise GridMismatch("field file does not match the problem grid")
        return ScalarField(grid, self.values)

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values)

    def __repr__(self):
        return f"ScalarField(cells={self.grid.cells}, h={self.grid.h})"


class VectorField:
    """Face-valued vector field (staggered layout).

    ``components[a]`` has ``grid.face_shape(a)``; non-interior faces hold 0.
    ``boundary`` optionally extends the field to boundary faces as outward
    normal components ``[z, nu]`` (one per boundary face, grid ordering).
    """

    __slots__ = ("grid", "components", "boundary")

    def __init__(self, grid: GridSpec, components: Sequence, boundary=None):
        if len(components) != grid.dim:
            raise ShapeMismatch("one component per axis required")
        comps = []
        for a, c in enumerate(components):
            c = np.array(c, dtype=float)
            if c.shape != grid.face_shape(a):
                raise ShapeMismatch(f"axis {a}: shape {c.shape} != {grid.face_shape(a)}")
            if not np.all(np.isfinite(c)):
                raise InvalidParam("vector field values must be finite")
            comps.append(np.where(grid.face_mask(a), c, 0.0))
        if boundary is not None:
            boundary = np.array(boundary, dtype=float)
            if boundary.shape != (grid.n_boundary,):
                raise ShapeMismatch("boundary extension needs one value per boundary face")
        self.grid = grid
        self.components = tuple(comps)
        self.boundary = boundary

    @classmethod
    def zeros(cls, grid: GridSpec) -> "VectorField":
        return cls(grid, [np.zeros(grid.face_shape(a)) for a in range(grid.dim)])

    @classmethod
    def from_cell_vectors(cls, grid: GridSpec, cellvec, boundary=None) -> "VectorField":
        """Inverse of :func:`cell_vectors` on owned faces."""
        cellvec = np.asarray(cellvec, dtype=float)
        comps = []
        for a in range(grid.dim):
            sl = [slice(None)] * grid.dim
            sl[a] = slice(0, grid.cells[a] - 1)
            comps.append(cellvec[tuple(sl) + (a,)])
        return cls(grid, comps, boundary)

    def with_boundary(self, boundary) -> "VectorField":
        return VectorField(self.grid, self.components, boundary)


class BoundaryTrace:
    """One value per boundary face, in :attr:`GridSpec.boundary` order."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: GridSpec, values):
        v = np.array(values, dtype=float).reshape(-1)
        if v.size == 1 and grid.n_boundary != 1:
            v = np.full(grid.n_boundary, float(v[0]))
        if v.shape != (grid.n_boundary,):
            raise ShapeMismatch(f"{v.size} values for {grid.n_boundary} boundary faces")
        self.grid = grid
        self.values = v

    @property
    def normals(self) -> np.ndarray:
        return self.grid.boundary.normal

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "BoundaryTrace":
        return cls(grid, np.broadcast_to(fn(grid.boundary.center), (grid.n_boundary,)))


class TimeSeries:
    """Frames sharing one grid at strictly increasing times."""

    __slots__ = ("times", "frames")

    def __init__(self, times, frames):
        t = np.array(times, dtype=float).reshape(-1)
        frames = list(frames)
        if t.size != len(frames):
            raise ShapeMismatch("one time stamp per frame required")
        if t.size and t[0] < 0:
            raise InvalidParam("times must be nonnegative")
        if np.any(np.diff(t) <= 0):
            raise InvalidParam("times must be strictly increasing")
        if frames:
            g0 = frames[0].grid
            for fr in frames[1:]:
                _check_same(g0, fr.grid)
        self.times = t
        self.frames = frames

    def __len__(self):
        return len(self.frames)

    @property
    def grid(self) -> GridSpec:
        return self.frames[0].grid

    def stack(self) -> np.ndarray:
        """(K, *cells) array of scalar frames."""
        return np.stack([fr.values for fr in self.frames])

    @classmethod
    def from_stack(cls, grid: GridSpec, times, values) -> "TimeSeries":
        return cls(times, [ScalarField(grid, v) for v in values])


# ---------------------------------------------------------------- operators

def gradient(u: ScalarField) -> VectorField:
    g = u.grid
    comps = [np.diff(u.values, axis=a) / g.h * g.face_mask(a) for a in range(g.dim)]
    return VectorField(g, comps)


def divergence(z: VectorField) -> ScalarField:
    """Negative adjoint of :func:`gradient`.

    Faces outside the field are zero-padded; a boundary extension, when
    present, adds ``[z, nu] / h`` to the adjacent cell.
    """
    g = z.grid
    out = np.zeros(g.cells)
    for a, c in enumerate(z.components):
        pad = [(0, 0)] * g.dim
        pad[a] = (1, 1)
        out += np.diff(np.pad(c * g.face_mask(a), pad), axis=a) / g.h
    if z.boundary is not None:
        b = g.boundary
        out += np.bincount(b.cell, weights=z.boundary, minlength=out.size).reshape(g.cells) / g.h
    return ScalarField(g, out * g.active)


def inner(a, b) -> float:
    """h-weighted inner product of two scalar fields or two vector fields."""
    _check_same(a.grid, b.grid)
    g = a.grid
    if isinstance(a, ScalarField):
        return float(np.sum(a.values * b.values * g.active)) * g.cell_volume
    if isinstance(a, BoundaryTrace):
        return float(np.sum(a.values * b.values)) * g.face_area
    return sum(float(np.sum(ca * cb * g.face_mask(k)))
               for k, (ca, cb) in enumerate(zip(a.components, b.components))) * g.cell_volume


def norm_l2(u: ScalarField) -> float:
    return float(np.sqrt(max(inner(u, u), 0.0)))


def cell_vectors(z: VectorField) -> np.ndarray:
    """(*cells, dim) array: each cell's owned (upper) face values, 0 where absent."""
    g = z.grid
    out = np.zeros(g.cells + (g.dim,))
    for a, c in enumerate(z.components):
        sl = [slice(None)] * g.dim
        sl[a] = slice(0, g.cells[a] - 1)
        out[tuple(sl) + (a,)] = c
    return out


def cell_gradient(u: ScalarField) -> np.ndarray:
    return cell_vectors(gradient(u))


def cell_gradient_values(grid: GridSpec, values) -> np.ndarray:
    """:func:`cell_gradient` for raw arrays with extra leading axes ``(..., *cells)``."""
    v = np.asarray(values, dtype=float)
    lead = v.ndim - grid.dim
    out = np.zeros(v.shape + (grid.dim,))
    for a in range(grid.dim):
        ax = lead + a
        d = np.diff(v, axis=ax) / grid.h
        sl = [slice(None)] * v.ndim
        sl[ax] = slice(0, grid.cells[a] - 1)
        out[tuple(sl) + (a,)] = d * grid.face_mask(a)
    return out


def cell_axis_scale(spec: lg.LagrangianSpec, grid: GridSpec) -> np.ndarray:
    """(*cells, dim) diagonal of A(x) at cell centres."""
    a = spec.axis_scale(grid.centers, grid.dim)
    return np.broadcast_to(a, grid.cells + (grid.dim,)).copy()


def f_density(spec: lg.LagrangianSpec, u: ScalarField) -> np.ndarray:
    """Cellwise f(x_cell, xi_cell); 0 on inactive cells."""
    g = u.grid
    a = cell_axis_scale(spec, g)
    xi = cell_gradient(u)
    return np.sqrt(spec.m ** 2 + np.sum((a * xi) ** 2, axis=-1)) * g.active


def f_integral(spec: lg.LagrangianSpec, u: ScalarField) -> float:
    """sum_cells h^n f(x_cell, xi_cell): the absolutely continuous part of f(Du)."""
    return float(np.sum(f_density(spec, u))) * u.grid.cell_volume


def total_variation(u: ScalarField) -> float:
    g = u.grid
    xi = cell_gradient(u)
    return float(np.sum(np.sqrt(np.sum(xi ** 2, axis=-1)) * g.active)) * g.cell_volume


def area_functional(u: ScalarField) -> float:
    return f_integral(lg.area(), u)


def trace(u: ScalarField) -> BoundaryTrace:
    """Piecewise-constant trace: the adjacent cell value on each boundary face."""
    return BoundaryTrace(u.grid, u.values.reshape(-1)[u.grid.boundary.cell])


def boundary_weights(spec: lg.LagrangianSpec, grid: GridSpec) -> np.ndarray:
    """f_inf(x, nu) per boundary face, with A sampled at the adjacent cell centre."""
    b = grid.boundary
    a = cell_axis_scale(spec, grid).reshape(-1, grid.dim)[b.cell]
    return np.sqrt(np.sum((a * b.normal) ** 2, axis=-1))


def boundary_integral(t1: BoundaryTrace, t2: BoundaryTrace, spec: lg.LagrangianSpec) -> float:
    """sum over boundary faces of h^(n-1) |t1 - t2| f_inf(x, nu)."""
    _check_same(t1.grid, t2.grid)
    g = t1.grid
    return float(np.sum(np.abs(t1.values - t2.values) * boundary_weights(spec, g))) * g.face_area


def gauss_green_residual(u: ScalarField, z: VectorField, zb: BoundaryTrace) -> float:
    """|<u, div z> + <z, grad u> - sum_b h^(n-1) zb Tu|.

    ``div z`` uses the boundary extension carried by ``z`` (zero if none);
    the residual vanishes when ``zb`` equals that extension.
    """
    _check_same(u.grid, z.grid)
    _check_same(u.grid, zb.grid)
    lhs = inner(u, divergence(z)) + inner(z, gradient(u))
    return abs(lhs - inner(zb, trace(u)))


def min_max_split(u1: ScalarField, u2: ScalarField):
    _check_same(u1.grid, u2.grid)
    return (ScalarField(u1.grid, np.minimum(u1.values, u2.values)),
            ScalarField(u1.grid, np.maximum(u1.values, u2.values)))


# ---------------------------------------------------------------- file IO

def write_field(path, u: ScalarField) -> None:
    """Write the LGF1 binary format (little-endian header, f64 row-major values)."""
    g = u.grid
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", g.dim))
        fh.write(struct.pack(f"<{g.dim}I", *g.cells))
        fh.write(struct.pack("<d", g.h))
        fh.write(struct.pack(f"<{g.dim}d", *g.origin))
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())


def read_field(path, mask=None) -> ScalarField:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise InvalidParam(f"{path}: not an LGF1 field file")
    off = 4
    (dim,) = struct.unpack_from("<I", data, off)
    off += 4
    if dim not in (1, 2):
        raise InvalidParam(f"{path}: bad dimension {dim}")
    cells = struct.unpack_from(f"<{dim}I", data, off)
    off += 4 * dim
    (h,) = struct.unpack_from("<d", data, off)
    off += 8
    origin = struct.unpack_from(f"<{dim}d", data, off)
    off += 8 * dim
    n = int(np.prod(cells))
    if len(data) - off != 8 * n:
        raise InvalidParam(f"{path}: expected {n} values")
    vals = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(cells)
    return ScalarField(GridSpec(cells, h, origin, mask), vals.astype(float))


def write_csv(path, u: ScalarField) -> None:
    """CSV export ``x[,y],value`` over active cells, for plotting."""
    g = u.grid
    cols = ["x", "y"][: g.dim] + ["value"]
    pts = g.centers.reshape(-1, g.dim)
    vals = u.values.reshape(-1)
    act = g.active.reshape(-1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for p, v, on in zip(pts, vals, act):
            if on:
                w.writerow([repr(float(c)) for c in p] + [repr(float(v))])

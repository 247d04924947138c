"""Grid fields: values at interior nodes plus a constant Dirichlet value."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..errors import ArgumentError, CoverageError


def _lagrange4(tau):
    """Cubic Lagrange weights on the nodes -1, 0, 1, 2 at offset ``tau``."""
    return np.stack(
        [
            -tau * (tau - 1) * (tau - 2) / 6,
            (tau + 1) * (tau - 1) * (tau - 2) / 2,
            -(tau + 1) * tau * (tau - 2) / 2,
            (tau + 1) * tau * (tau - 1) / 6,
        ],
        axis=-1,
    )


def _quadratic_basis(d):
    """Monomials of degree <= 2 in the local coordinates ``d`` (rows)."""
    n = d.shape[1]
    cols = [np.ones(len(d))] + [d[:, i] for i in range(n)]
    cols += [d[:, i] * d[:, j] for i in range(n) for j in range(i, n)]
    return np.stack(cols, axis=1)


@dataclass(eq=False)
class GridField:
    """Scalar field on a :class:`Grid`.

    Parameters
    ----------
    grid : Grid
    values : ndarray, shape (N,)
        Values at the interior nodes (ordering of ``grid.points``).
    boundary_value : float
        Dirichlet value on the domain boundary.
    meta : dict
        Free-form provenance (time, s, clamp flags, warnings).
    """

    grid: object
    values: np.ndarray
    boundary_value: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.size,):
            raise ArgumentError(f"expected {self.grid.size} values, got shape {self.values.shape}")

    # -- interpolation -----------------------------------------------------

    def _array(self, log):
        full = np.full(self.grid.mask.shape, np.nan)
        full[self.grid.mask] = np.log(self.values) if log else self.values
        return full

    def interpolate(self, points, log: bool | None = None) -> np.ndarray:
        """Values at arbitrary points of the closed domain.

        Tensor-product cubic interpolation where the full 4^n stencil is
        interior; otherwise a weighted least-squares quadratic through the
        nearby interior nodes and the boundary crossings (which carry the
        Dirichlet value).  With ``log=True`` (default for positive fields)
        the logarithm is interpolated, which keeps exponentially small
        boundary-layer profiles accurate.
        """
        grid = self.grid
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[-1] != grid.n:
            raise ArgumentError("point dimension does not match the grid")
        inside = grid.contains(pts)
        if not np.all(inside):
            bad = pts[~inside]
            raise CoverageError(f"{len(bad)} points lie outside the domain, e.g. {bad[0].tolist()}", offending=bad)
        if log is None:
            log = bool(np.all(self.values > 0) and self.boundary_value > 0)
        full = self._array(log)
        g = np.log(self.boundary_value) if log else self.boundary_value
        rel = pts / grid.h
        base = np.floor(rel).astype(np.int64)
        tau = rel - base
        arr = base - grid.origin_index  # array index of the lower-left node
        n = grid.n
        shape = np.array(grid.mask.shape)
        out = np.full(len(pts), np.nan)
        ok = np.all((arr - 1 >= 0) & (arr + 2 < shape), axis=1)
        weights = _lagrange4(tau)  # (P, n, 4)
        idx_ok = np.nonzero(ok)[0]
        if len(idx_ok):
            acc = np.zeros(len(idx_ok))
            for offs in np.ndindex(*(4,) * n):
                w = np.ones(len(idx_ok))
                ind = []
                for a, o in enumerate(offs):
                    w = w * weights[idx_ok, a, o]
                    ind.append(arr[idx_ok, a] + o - 1)
                acc = acc + w * full[tuple(ind)]
            out[idx_ok] = acc
        todo = np.nonzero(~np.isfinite(out))[0]
        # Points on a grid node take the stored value (the local fit is not interpolatory).
        near = np.rint(rel[todo]).astype(np.int64)
        on_node = np.all(np.abs(rel[todo] - near) < 1e-9, axis=1)
        if on_node.any():
            lat = near[on_node] - grid.origin_index
            valid = np.all((lat >= 0) & (lat < shape), axis=1)
            sel = todo[on_node][valid]
            out[sel] = full[tuple(lat[valid].T)]
            todo = np.nonzero(~np.isfinite(out))[0]
        for i in todo:
            out[i] = self._local_fit(pts[i], arr[i], full, g)
        return np.exp(out) if log else out

    def _local_fit(self, x, arr, full, g):
        grid = self.grid
        n = grid.n
        cross_pts, cross_owner = grid.boundary_crossings()
        for radius in (2, 3, 4):
            lo = np.maximum(arr - radius + 1, 0)
            hi = np.minimum(arr + radius + 1, np.array(grid.mask.shape))
            block = tuple(slice(a, b) for a, b in zip(lo, hi))
            sub_mask = grid.mask[block]
            node_ids = grid.index[block][sub_mask]
            pts = grid.points[node_ids]
            vals = full[block][sub_mask]
            sel = np.isin(cross_owner, node_ids)
            pts = np.concatenate([pts, cross_pts[sel]])
            vals = np.concatenate([vals, np.full(sel.sum(), g)])
            d = (pts - x) / grid.h
            r2 = np.sum(d * d, axis=1)
            keep = r2 <= radius * radius * n
            if keep.sum() < 3 * (n + 1):
                continue
            V = _quadratic_basis(d[keep])
            w = 1.0 / (1.0 + r2[keep]) ** 2
            sw = np.sqrt(w)
            coef, _, rank, _ = np.linalg.lstsq(V * sw[:, None], vals[keep] * sw, rcond=None)
            if rank == V.shape[1]:
                return coef[0]
        raise CoverageError(f"not enough grid data to interpolate at {x.tolist()}", offending=x[None])

    # -- io ------------------------------------------------------------------

    def to_csv(self, path) -> None:
        """Write ``x1,x2[,x3],value`` rows in full double precision."""
        n = self.grid.n
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(n)] + ["value"])
            for p, v in zip(self.grid.points, self.values):
                w.writerow([repr(float(c)) for c in p] + [repr(float(v))])

    @classmethod
    def from_csv(cls, path, grid, boundary_value: float = 1.0) -> "GridField":
        """Read a snapshot written by :meth:`to_csv` back onto ``grid``."""
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != grid.n + 1:
            raise ArgumentError("CSV column count does not match the grid dimension")
        lattice = np.rint(data[:, : grid.n] / grid.h).astype(np.int64) - grid.origin_index
        if np.any(lattice < 0) or np.any(lattice >= np.array(grid.mask.shape)):
            raise ArgumentError("CSV nodes do not belong to the grid")
        ids = grid.index[tuple(lattice.T)]
        if np.any(ids < 0) or len(np.unique(ids)) != grid.size:
            raise ArgumentError("CSV nodes do not cover the grid interior exactly")
        values = np.empty(grid.size)
        values[ids] = data[:, grid.n]
        return cls(grid, values, boundary_value)

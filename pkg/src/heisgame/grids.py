"""Regular 3D grids, trilinear interpolation, and time-stacked value grids.

The PDE lives on the whole group; computations truncate it to a box.
Interpolation clamps exterior query points to the box faces and flags
them untrusted.  ``certify_region`` shrinks a box by the reach of the
dynamics so that values at certified nodes never depend on clamped data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .heis import Box, eval_field

__all__ = [
    "Grid3",
    "ValueGrid",
    "interp_values",
    "sample_field",
    "certify_region",
    "write_grid_csv",
    "write_grid_binary",
    "read_grid_binary",
    "write_value_grid",
    "read_value_grid",
]

# fractions this close to a cell face snap onto it, keeping nodal queries exact
_SNAP = 1e-12


@dataclass
class Grid3:
    """Nodal values on a regular grid over a box (row-major ``(n1, n2, n3)``)."""

    box: Box
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 3:
            raise ValueError(f"values must be a 3D array, got shape {vals.shape}")
        if min(vals.shape) < 2:
            raise ValueError("need at least 2 nodes per axis")
        if not np.isfinite(vals).all():
            idx = tuple(int(i) for i in np.argwhere(~np.isfinite(vals))[0])
            raise ValueError(f"non-finite grid value at node {idx}")
        self.values = vals

    @property
    def counts(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def spacing(self) -> np.ndarray:
        return self.box.extent / (np.array(self.counts) - 1)

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(
            np.linspace(self.box.lo[i], self.box.hi[i], self.counts[i])
            for i in range(3)
        )

    def node_coordinates(self) -> np.ndarray:
        ax = self.axes()
        mesh = np.meshgrid(*ax, indexing="ij")
        return np.stack(mesh, axis=-1).reshape(-1, 3)

    def interp(self, p) -> tuple[np.ndarray, np.ndarray]:
        """Trilinear value at ``p`` plus a trusted flag.

        Exterior points are clamped componentwise onto the box and marked
        untrusted.  Returns scalars for a single point.
        """
        p = np.asarray(p, dtype=float)
        if p.ndim == 1:
            vals, trusted = interp_values(self.box, self.values, p[None, :])
            return float(vals[0]), bool(trusted[0])
        return interp_values(self.box, self.values, p)


def interp_values(box: Box, values: np.ndarray, pts: np.ndarray):
    """Trilinear interpolation core shared by ``Grid3.interp`` and the solvers.

    ``pts`` is ``(n, 3)``; returns values and the inside-box flags.
    Fractions within 1e-12 of a cell face snap onto it, so queries at
    node coordinates return the stored value exactly.
    """
    trusted = ((pts >= box.lo) & (pts <= box.hi)).all(axis=-1)
    q = np.clip(pts, box.lo, box.hi)
    n = np.array(values.shape)
    t = (q - box.lo) / box.extent * (n - 1)
    i = np.clip(np.floor(t).astype(np.int64), 0, n - 2)
    f = t - i
    f[f < _SNAP] = 0.0
    f[f > 1.0 - _SNAP] = 1.0

    v = values
    i1, i2, i3 = i[:, 0], i[:, 1], i[:, 2]
    f1, f2, f3 = f[:, 0], f[:, 1], f[:, 2]
    c00 = v[i1, i2, i3] * (1 - f1) + v[i1 + 1, i2, i3] * f1
    c10 = v[i1, i2 + 1, i3] * (1 - f1) + v[i1 + 1, i2 + 1, i3] * f1
    c01 = v[i1, i2, i3 + 1] * (1 - f1) + v[i1 + 1, i2, i3 + 1] * f1
    c11 = v[i1, i2 + 1, i3 + 1] * (1 - f1) + v[i1 + 1, i2 + 1, i3 + 1] * f1
    c0 = c00 * (1 - f2) + c10 * f2
    c1 = c01 * (1 - f2) + c11 * f2
    return c0 * (1 - f3) + c1 * f3, trusted


def sample_field(f: Callable, box: Box, counts) -> Grid3:
    """Nodal evaluation of a scalar field."""
    counts = tuple(int(c) for c in counts)
    if len(counts) != 3 or min(counts) < 2:
        raise ValueError(f"counts must be three values >= 2, got {counts}")
    ax = [np.linspace(box.lo[i], box.hi[i], counts[i]) for i in range(3)]
    pts = np.stack(np.meshgrid(*ax, indexing="ij"), axis=-1).reshape(-1, 3)
    vals = eval_field(f, pts)
    if not np.isfinite(vals).all():
        k = int(np.argmax(~np.isfinite(vals)))
        idx = np.unravel_index(k, counts)
        raise ValueError(
            f"field returned a non-finite value at node {tuple(int(i) for i in idx)}"
            f" = {pts[k]}"
        )
    return Grid3(box, vals.reshape(counts))


def certify_region(box: Box, r_z: float, horizon: float) -> Box:
    """Sub-box whose backward trajectories stay inside ``box``.

    Horizontal axes shrink by the reach ``r_z * horizon``; the vertical
    axis by ``(r_z*horizon)^2 + r_z*horizon*max(|x1|, |x2|)`` covering the
    worst drift of ``xdot3 = (x1*z2 - x2*z1)/2``.
    """
    if r_z < 0 or horizon < 0:
        raise ValueError("r_z and horizon must be nonnegative")
    reach = r_z * horizon
    m = float(np.abs(np.stack([box.lo[:2], box.hi[:2]])).max())
    margins = np.array([reach, reach, reach * reach + reach * m])
    half = 0.5 * box.extent
    for axis in range(3):
        if margins[axis] >= half[axis]:
            raise ValueError(
                f"certified region is empty on axis {axis + 1}: margin "
                f"{margins[axis]:.6g} >= half extent {half[axis]:.6g}; "
                f"enlarge the box on that axis"
            )
    return Box(box.lo + margins, box.hi - margins)


@dataclass
class ValueGrid:
    """Uniformly time-stacked grids holding a discrete value function.

    ``trusted_region`` is the certified sub-box; ``trusted`` flags nodes
    whose one-step stencil stayed inside the box at each time.
    """

    box: Box
    times: np.ndarray
    data: np.ndarray
    trusted_region: Box
    trusted: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        data = np.asarray(self.data, dtype=float)
        trusted = np.asarray(self.trusted, dtype=bool)
        if len(times) < 2:
            raise ValueError("need at least 2 time slices")
        steps = np.diff(times)
        if not (steps > 0).all() or not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise ValueError("times must be uniformly increasing")
        if data.shape != (len(times),) + tuple(data.shape[1:]) or data.ndim != 4:
            raise ValueError(f"data must be (n_times, n1, n2, n3), got {data.shape}")
        if trusted.shape != data.shape:
            raise ValueError("trusted flags must match data shape")
        if not ((self.trusted_region.lo >= self.box.lo).all()
                and (self.trusted_region.hi <= self.box.hi).all()):
            raise ValueError("trusted_region must lie inside the box")
        self.times = times
        self.data = data
        self.trusted = trusted

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def counts(self) -> tuple[int, int, int]:
        return self.data.shape[1:]

    @property
    def horizon(self) -> float:
        return float(self.times[-1] - self.times[0])

    def slice(self, k: int) -> Grid3:
        return Grid3(self.box, self.data[k])

    def axes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.slice(0).axes()

    def region_index_bounds(self) -> tuple[slice, slice, slice]:
        """Index slices of the nodes inside the certified region."""
        out = []
        for i, ax in enumerate(self.axes()):
            inside = np.nonzero(
                (ax >= self.trusted_region.lo[i]) & (ax <= self.trusted_region.hi[i])
            )[0]
            if len(inside) == 0:
                raise ValueError(f"no grid nodes inside the certified region on axis {i + 1}")
            out.append(slice(int(inside[0]), int(inside[-1]) + 1))
        return tuple(out)

    def reversed_time(self) -> "ValueGrid":
        """Same stack reindexed by ``t -> horizon - t``."""
        return ValueGrid(
            self.box,
            self.times.copy(),
            self.data[::-1].copy(),
            self.trusted_region,
            self.trusted[::-1].copy(),
        )

    @classmethod
    def from_function(
        cls,
        fn: Callable,
        box: Box,
        counts,
        horizon: float,
        n_steps: int,
        r_z: float = 0.0,
    ) -> "ValueGrid":
        """Sample ``fn(t, points)`` on the space-time grid (fully trusted)."""
        times = np.linspace(0.0, horizon, n_steps + 1)
        slices = [sample_field(lambda p, t=t: fn(t, p), box, counts).values for t in times]
        data = np.stack(slices)
        region = certify_region(box, r_z, horizon)
        return cls(box, times, data, region, np.ones_like(data, dtype=bool))


# ---------------------------------------------------------------------------
# Serialization: CSV rows per node, and a JSON header next to a flat binary
# array of 64-bit little-endian reals in row-major order.
# ---------------------------------------------------------------------------

def write_grid_csv(grid: Grid3, path, trusted: np.ndarray | None = None) -> None:
    nodes = grid.node_coordinates()
    flags = (np.ones(len(nodes), dtype=bool) if trusted is None
             else np.asarray(trusted, dtype=bool).reshape(-1))
    table = np.column_stack([nodes, grid.values.reshape(-1), flags.astype(float)])
    np.savetxt(
        path,
        table,
        fmt="%.17g,%.17g,%.17g,%.17g,%d",
        header="x1,x2,x3,value,trusted",
        comments="",
    )


def _box_json(box: Box) -> list:
    return [list(map(float, box.lo)), list(map(float, box.hi))]


def write_grid_binary(
    grid: Grid3,
    base: Path,
    time: float | None = None,
    trusted: np.ndarray | None = None,
) -> None:
    """Writes ``base.json`` (header) and ``base.bin`` (values, '<f8', C order)."""
    base = Path(base)
    header = {
        "box": _box_json(grid.box),
        "counts": list(grid.counts),
        "dtype": "<f8",
        "order": "C",
        "value_file": base.name + ".bin",
    }
    if time is not None:
        header["time"] = float(time)
    if trusted is not None:
        header["trusted_file"] = base.name + ".trusted.bin"
        Path(str(base) + ".trusted.bin").write_bytes(
            np.ascontiguousarray(trusted, dtype=np.uint8).tobytes()
        )
    Path(str(base) + ".bin").write_bytes(
        np.ascontiguousarray(grid.values, dtype="<f8").tobytes()
    )
    Path(str(base) + ".json").write_text(
        json.dumps(header, indent=2, sort_keys=True) + "\n"
    )


def read_grid_binary(json_path) -> tuple[Grid3, float | None, np.ndarray | None]:
    json_path = Path(json_path)
    header = json.loads(json_path.read_text())
    counts = tuple(header["counts"])
    box = Box(header["box"][0], header["box"][1])
    raw = (json_path.parent / header["value_file"]).read_bytes()
    values = np.frombuffer(raw, dtype="<f8").reshape(counts).copy()
    trusted = None
    if "trusted_file" in header:
        raw_t = (json_path.parent / header["trusted_file"]).read_bytes()
        trusted = np.frombuffer(raw_t, dtype=np.uint8).reshape(counts).astype(bool)
    return Grid3(box, values), header.get("time"), trusted


def write_value_grid(vg: ValueGrid, outdir, csv: bool = True) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    names = []
    for k in range(len(vg.times)):
        name = f"slice_{k:03d}"
        names.append(name)
        write_grid_binary(vg.slice(k), outdir / name, time=float(vg.times[k]),
                          trusted=vg.trusted[k])
        if csv:
            write_grid_csv(vg.slice(k), outdir / (name + ".csv"),
                           trusted=vg.trusted[k].reshape(-1))
    master = {
        "box": _box_json(vg.box),
        "counts": list(vg.counts),
        "times": [float(t) for t in vg.times],
        "trusted_region": _box_json(vg.trusted_region),
        "slices": names,
    }
    (outdir / "valuegrid.json").write_text(
        json.dumps(master, indent=2, sort_keys=True) + "\n"
    )


def read_value_grid(outdir) -> ValueGrid:
    outdir = Path(outdir)
    master = json.loads((outdir / "valuegrid.json").read_text())
    times = np.asarray(master["times"], dtype=float)
    data, flags = [], []
    for name in master["slices"]:
        grid, _, trusted = read_grid_binary(outdir / (name + ".json"))
        data.append(grid.values)
        flags.append(trusted if trusted is not None
                     else np.ones(grid.counts, dtype=bool))
    return ValueGrid(
        Box(master["box"][0], master["box"][1]),
        times,
        np.stack(data),
        Box(master["trusted_region"][0], master["trusted_region"][1]),
        np.stack(flags),
    )

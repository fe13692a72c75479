"""Time-series sample container shared by simulators, differentiation and regression."""

from __future__ import annotations

import json
import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

__all__ = ["FieldSnapshotSet", "SnapshotSet", "data_digest"]


def data_digest(*arrays):
    """Stable sha256 over array bytes, for provenance manifests."""
    h = hashlib.sha256()
    for a in arrays:
        if a is None:
            h.update(b"none")
        else:
            a = np.ascontiguousarray(a)
            h.update(str(a.shape).encode())
            h.update(a.tobytes())
    return h.hexdigest()


@dataclass
class SnapshotSet:
    """Sampled trajectories: times, states, optional controls and derivatives.

    ``bounds`` lists (start, stop) row ranges of the individual trajectories;
    rows of one trajectory are contiguous and time-ordered.  ``meta`` carries
    provenance (system, parameters, dt, seeds, noise level, ...).
    """

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray | None = None
    dx: np.ndarray | None = None
    bounds: tuple[tuple[int, int], ...] = ()
    state_names: tuple[str, ...] = ()
    control_names: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).ravel()
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        if self.x.shape[0] != self.t.shape[0]:
            self.x = self.x.T
        if self.u is not None:
            self.u = np.asarray(self.u, dtype=float)
            if self.u.ndim == 1:
                self.u = self.u[:, None]
        if self.dx is not None:
            self.dx = np.atleast_2d(np.asarray(self.dx, dtype=float))
            if self.dx.shape != self.x.shape:
                raise ValueError("dx shape must match x")
        if not self.bounds:
            self.bounds = ((0, len(self.t)),)
        if not self.state_names:
            n = self.x.shape[1]
            self.state_names = tuple(f"x{i + 1}" for i in range(n)) if n != 1 else ("x",)
        if self.u is not None and not self.control_names:
            q = self.u.shape[1]
            self.control_names = tuple(f"u{i + 1}" for i in range(q)) if q != 1 else ("u",)

    @property
    def n_samples(self):
        return self.x.shape[0]

    @property
    def n_states(self):
        return self.x.shape[1]

    def trajectories(self):
        """Iterate per-trajectory views as SnapshotSets."""
        for start, stop in self.bounds:
            yield self.take(np.arange(start, stop), contiguous=True)

    def take(self, rows, contiguous=False):
        """Row subset; trajectory bounds survive only for contiguous slices."""
        rows = np.asarray(rows)
        sub = SnapshotSet(
            t=self.t[rows],
            x=self.x[rows],
            u=None if self.u is None else self.u[rows],
            dx=None if self.dx is None else self.dx[rows],
            bounds=((0, len(rows)),),
            state_names=self.state_names,
            control_names=self.control_names,
            meta=dict(self.meta),
        )
        if not contiguous:
            sub.meta["rows_reindexed"] = True
        return sub

    def with_dx(self, dx):
        return replace(self, dx=np.asarray(dx, dtype=float), meta=dict(self.meta))

    def without_dx(self):
        return replace(self, dx=None, meta=dict(self.meta))

    def digest(self):
        return data_digest(self.t, self.x, self.u, self.dx)

    # -- persistence --------------------------------------------------------

    def header(self):
        cols = ["t", *self.state_names]
        if self.u is not None:
            cols += list(self.control_names)
        if self.dx is not None:
            cols += [f"d{n}" for n in self.state_names]
        return cols

    def save(self, path):
        """Write ``<path>.csv`` plus a ``<path>.json`` manifest; returns both paths."""
        path = Path(path)
        if path.suffix == ".csv":
            path = path.with_suffix("")
        cols = [self.t[:, None], self.x]
        if self.u is not None:
            cols.append(self.u)
        if self.dx is not None:
            cols.append(self.dx)
        table = np.hstack(cols)
        csv_path = path.with_suffix(".csv")
        with open(csv_path, "w") as fh:
            fh.write(",".join(self.header()) + "\n")
            for row in table:
                fh.write(",".join(repr(v) for v in row) + "\n")
        manifest = {
            "columns": self.header(),
            "state_names": list(self.state_names),
            "control_names": list(self.control_names),
            "n_samples": int(self.n_samples),
            "bounds": [list(b) for b in self.bounds],
            "has_dx": self.dx is not None,
            "has_u": self.u is not None,
            "sha256": self.digest(),
            "meta": _jsonable(self.meta),
        }
        json_path = path.with_suffix(".json")
        with open(json_path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return csv_path, json_path

    @classmethod
    def load(cls, path):
        path = Path(path)
        if path.suffix == ".csv":
            path = path.with_suffix("")
        with open(path.with_suffix(".json")) as fh:
            manifest = json.load(fh)
        table = np.loadtxt(path.with_suffix(".csv"), delimiter=",", skiprows=1, ndmin=2)
        names = manifest["state_names"]
        ctrl = manifest["control_names"]
        n = len(names)
        q = len(ctrl) if manifest["has_u"] else 0
        i = 1
        x = table[:, i : i + n]
        i += n
        u = table[:, i : i + q] if q else None
        i += q
        dx = table[:, i : i + n] if manifest["has_dx"] else None
        return cls(
            t=table[:, 0],
            x=x,
            u=u,
            dx=dx,
            bounds=tuple(tuple(b) for b in manifest["bounds"]),
            state_names=tuple(names),
            control_names=tuple(ctrl),
            meta=manifest.get("meta", {}),
        )


@dataclass
class FieldSnapshotSet:
    """Spatiotemporal samples of one or more fields on a periodic 1-D grid.

    Every field (and derivative field) is an (m_t, m_x) array.  Derivative
    fields live in ``derivatives`` under names like ``u_t`` or ``u_xx`` and
    record how they were produced in ``meta['derivative_method']``.
    """

    t: np.ndarray
    grid: np.ndarray
    fields: dict
    length: float
    derivatives: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float).ravel()
        self.grid = np.asarray(self.grid, dtype=float).ravel()
        self.length = float(self.length)
        self.fields = {k: np.asarray(v, dtype=float) for k, v in self.fields.items()}
        self.derivatives = {k: np.asarray(v, dtype=float) for k, v in self.derivatives.items()}
        if not self.fields:
            raise ValueError("at least one field is required")
        if self.length <= 0:
            raise ValueError("domain length must be positive")
        shape = (self.t.shape[0], self.grid.shape[0])
        for name, arr in list(self.fields.items()) + list(self.derivatives.items()):
            if arr.shape != shape:
                raise ValueError(f"field {name!r} has shape {arr.shape}, expected {shape}")
        if self.t.shape[0] > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("time samples must be strictly increasing")

    @property
    def dt(self):
        return float(self.t[1] - self.t[0])

    @property
    def dx(self):
        # periodic spacing: n points cover [0, length)
        return self.length / self.grid.shape[0]

    @property
    def shape(self):
        return (self.t.shape[0], self.grid.shape[0])

    @property
    def field_names(self):
        return tuple(self.fields)

    def field_named(self, name):
        if name in self.fields:
            return self.fields[name]
        if name in self.derivatives:
            return self.derivatives[name]
        known = sorted(self.fields) + sorted(self.derivatives)
        raise KeyError(f"no field named {name!r}; available: {known}")

    def with_derivatives(self, named, method):
        merged = {**self.derivatives, **{k: np.asarray(v, dtype=float) for k, v in named.items()}}
        meta = dict(self.meta)
        meta.setdefault("derivative_method", {})
        meta["derivative_method"] = dict(meta["derivative_method"])
        for k in named:
            meta["derivative_method"][k] = method
        return replace(self, derivatives=merged, meta=meta)

    def digest(self):
        names = sorted(self.fields)
        return data_digest(self.t, self.grid, *(self.fields[k] for k in names))

    def save(self, path):
        """Write one CSV per field into directory ``path`` plus manifest.json."""
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        written = []
        for name in sorted(self.fields):
            fp = path / f"{name}.csv"
            with open(fp, "w") as fh:
                for row in self.fields[name]:
                    fh.write(",".join(repr(v) for v in row) + "\n")
            written.append(fp)
        manifest = {
            "fields": sorted(self.fields),
            "t0": float(self.t[0]),
            "dt": self.dt,
            "n_t": int(self.t.shape[0]),
            "grid_start": float(self.grid[0]),
            "dx": self.dx,
            "n_x": int(self.grid.shape[0]),
            "length": self.length,
            "sha256": self.digest(),
            "meta": _jsonable(self.meta),
        }
        mp = path / "manifest.json"
        with open(mp, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return written + [mp]

    @classmethod
    def load(cls, path):
        path = Path(path)
        with open(path / "manifest.json") as fh:
            manifest = json.load(fh)
        t = manifest["t0"] + manifest["dt"] * np.arange(manifest["n_t"])
        grid = manifest["grid_start"] + manifest["dx"] * np.arange(manifest["n_x"])
        fields = {
            name: np.loadtxt(path / f"{name}.csv", delimiter=",", ndmin=2)
            for name in manifest["fields"]
        }
        return cls(
            t=t,
            grid=grid,
            fields=fields,
            length=manifest["length"],
            meta=manifest.get("meta", {}),
        )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj

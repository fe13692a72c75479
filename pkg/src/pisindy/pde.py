"""Model discovery on spatiotemporal field data.

The pipeline mirrors the ODE one: estimate the missing derivative fields
(temporal from the samples, spatial spectrally), flatten the space-time grid
into regression rows, then run either explicit sparse regression of the time
derivative on a derivative-free library or the implicit candidate sweep when
the dynamics are rational.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .differentiation import (
    DifferentiationSpec,
    central_difference,
    spectral_spatial_derivatives,
    tvreg_diff_batch,
)
from .discovery import (
    SELECT_TIE_ATOL,
    CandidateSweepReport,
    Split,
    make_split,
    select_model,
    sweep_candidates,
)
from .regression import SparseLinearModel, stlsq
from .snapshots import FieldSnapshotSet
from .terms import (
    DesignMatrix,
    FunctionLibrary,
    LibraryError,
    evaluate_on_table,
    normalize_columns,
    render_equation,
)

__all__ = [
    "PDE_SELECT_RTOL",
    "estimate_field_derivatives",
    "field_table",
    "pde_design",
    "PdeFindCell",
    "PdeFindReport",
    "pdefind",
    "sindy_pi_pde",
]

# Held-out error on clean field data bottoms out at the spectral/truncation
# floor (~1e-5 relative here), where a dense fit can always shave a few tens
# of percent off a minimal one by soaking up discretization residue.  Such
# differences are not evidence, so PDE selection uses a much wider near-tie
# window than the trajectory case.
PDE_SELECT_RTOL = 0.5


def estimate_field_derivatives(
    data: FieldSnapshotSet, spatial_orders=(), spec: DifferentiationSpec | None = None
) -> FieldSnapshotSet:
    """Attach u_t (temporal) and requested u_x... (spectral) to every field.

    Temporal derivatives follow ``spec`` exactly like trajectory data: plain
    second-order differences, or batched TVRegDiff with every grid point as
    one column.  Spatial derivatives are always spectral (the grid is
    periodic by construction).
    """
    spec = spec or DifferentiationSpec()
    dt = data.dt
    named = {}
    for name in data.field_names:
        f = data.fields[name]
        if spec.method == "central-difference":
            named[f"{name}_t"] = central_difference(f, dt)
        else:
            deriv, _, _ = tvreg_diff_batch(
                f, dt, spec.tv_alpha, spec.tv_iterations, spec.tv_eps
            )
            named[f"{name}_t"] = deriv
        if spatial_orders:
            per_order = spectral_spatial_derivatives(f, data.length, tuple(spatial_orders))
            for order, arr in per_order.items():
                named[f"{name}_{'x' * order}"] = arr
    return data.with_derivatives(named, spec.method)


def _needed_variables(library: FunctionLibrary):
    need = set()
    for term in library.terms:
        for f in term.factors:
            need.add((f.kind, f.var, f.order))
        for tf in term.trig:
            for var, _ in tf.coeffs:
                need.add(("state", var, 0))
    return need


def _variable_field_name(key, state_names):
    kind, var, order = key
    name = state_names[var]
    if kind == "state":
        return name
    if kind == "dstate":
        return f"{name}_t"
    if kind == "spatial":
        return f"{name}_{'x' * order}"
    raise LibraryError(f"field data cannot supply variables of kind {kind!r}")


def field_table(data: FieldSnapshotSet, library: FunctionLibrary, time_margin=2, time_stride=1):
    """Flatten the grid into regression samples for every library variable.

    The first and last ``time_margin`` time rows are dropped: temporal
    differentiation is least accurate there (one-sided stencils, TVRegDiff
    end bias).  ``time_stride`` keeps every stride-th remaining time row, so
    data can be sampled densely for accurate derivatives without flooding the
    regression.  Returns ``(table, m)`` for ``evaluate_on_table``.
    """
    n_t = data.t.shape[0]
    if time_margin < 0:
        raise ValueError("time_margin must be >= 0")
    if time_stride < 1:
        raise ValueError("time_stride must be >= 1")
    if n_t - 2 * time_margin < 1:
        raise ValueError(f"time_margin {time_margin} leaves no rows of {n_t}")
    rows = np.arange(time_margin, n_t - time_margin, time_stride)
    table = {}
    for key in sorted(_needed_variables(library)):
        name = _variable_field_name(key, library.state_names)
        try:
            arr = data.field_named(name)
        except KeyError:
            raise LibraryError(
                f"data is missing field {name!r}; run estimate_field_derivatives first"
            ) from None
        table[key] = arr[rows].ravel()
    m = len(rows) * data.grid.shape[0]
    return table, m


def pde_design(data: FieldSnapshotSet, library: FunctionLibrary, time_margin=2, time_stride=1):
    """Evaluate ``library`` on flattened field samples; also return the table."""
    table, m = field_table(data, library, time_margin, time_stride)
    return evaluate_on_table(library, table, m), (table, m)


# ---------------------------------------------------------------------------
# Explicit route: regress u_t directly on a derivative-free library


@dataclass
class PdeFindCell:
    """One threshold outcome of the explicit regression."""

    threshold: float
    model: SparseLinearModel
    error: float  # relative u_t prediction error on the test rows


@dataclass
class PdeFindReport:
    """Explicit PDE regression over a threshold grid."""

    library: FunctionLibrary
    lhs_field: str
    thresholds: tuple
    cells: tuple
    split: dict
    selected: float | None = None

    def cell(self, threshold):
        for c in self.cells:
            if c.threshold == threshold:
                return c
        raise KeyError(threshold)

    def selected_cell(self):
        return None if self.selected is None else self.cell(self.selected)

    def equation(self, precision=6):
        cell = self.selected_cell()
        if cell is None:
            raise ValueError("no model selected")
        return render_equation(
            None, cell.model.coefficients, self.library,
            precision=precision, lhs_name=f"{self.lhs_field}_t",
        )


def pdefind(
    data: FieldSnapshotSet,
    library: FunctionLibrary,
    lhs_field,
    thresholds,
    split: Split | None = None,
    ratio=0.8,
    seed=0,
    time_margin=2,
    time_stride=1,
    normalize=True,
    max_iter=10,
    ridge=0.0,
    select_rtol=None,
) -> PdeFindReport:
    """Sparse regression of a field's time derivative on ``library``.

    The library must be free of time-derivative terms (they belong on the
    left).  Thresholds are swept, each fit scored by relative prediction
    error of u_t on held-out rows, and the winner picked with the same
    near-tie sparsity rule as the implicit sweep, but with the wider
    PDE_SELECT_RTOL window by default.
    """
    for term in library.terms:
        if term.derivative_vars():
            raise LibraryError(
                "library contains time-derivative terms; use sindy_pi_pde for implicit forms"
            )
    names = library.state_names
    k = names.index(lhs_field) if isinstance(lhs_field, str) else int(lhs_field)
    design, (table, m) = pde_design(data, library, time_margin, time_stride)
    n_t = data.t.shape[0]
    rows = np.arange(time_margin, n_t - time_margin, time_stride)
    target = data.field_named(f"{names[k]}_t")[rows].ravel()
    if split is None:
        split = make_split(m, ratio=ratio, seed=seed)
    thresholds = tuple(float(t) for t in thresholds)
    if len(set(thresholds)) != len(thresholds):
        raise ValueError("duplicate thresholds")

    raw = design.values
    if normalize:
        normed = normalize_columns(design)
        V, norms = normed.values, normed.norms
    else:
        V, norms = raw, None
    train = split.train
    test = split.test if len(split.test) else split.train
    tn = np.linalg.norm(target[test])

    cells = []
    for lam in thresholds:
        model = stlsq(
            V[train], target[train], lam, max_iter=max_iter,
            norms=norms, target_norm=1.0, ridge=ridge,
        )
        r = np.linalg.norm(target[test] - raw[test] @ model.coefficients)
        err = float(r / tn) if tn > 0 else float(r)
        cells.append(PdeFindCell(lam, model, err))
    report = PdeFindReport(
        library=library,
        lhs_field=names[k],
        thresholds=thresholds,
        cells=tuple(cells),
        split=split.describe(),
    )
    usable = [c for c in cells if c.model.nonzero_count > 0]
    if usable:
        rtol = PDE_SELECT_RTOL if select_rtol is None else float(select_rtol)
        best = min(c.error for c in usable)
        window = best * (1.0 + rtol) + SELECT_TIE_ATOL
        finalists = [c for c in usable if c.error <= window]
        win = min(finalists, key=lambda c: (c.model.nonzero_count, c.error, c.threshold))
        report.selected = win.threshold
    return report


# ---------------------------------------------------------------------------
# Implicit route: candidate sweep on the flattened samples


def sindy_pi_pde(
    data: FieldSnapshotSet,
    library: FunctionLibrary,
    candidates,
    thresholds,
    split: Split | None = None,
    ratio=0.8,
    seed=0,
    time_margin=2,
    time_stride=1,
    deriv_state=None,
    normalize=True,
    max_iter=10,
    n_workers=1,
    ridge=0.0,
    select=True,
    select_rtol=None,
) -> CandidateSweepReport:
    """Candidate sweep over field samples; returns the usual sweep report.

    Identical regression and selection machinery as the trajectory case; the
    field data only changes how the design matrix and scoring table are
    assembled.  ``select`` runs the selection in place before returning,
    with the wider PDE_SELECT_RTOL window by default.
    """
    design, (table, m) = pde_design(data, library, time_margin, time_stride)
    if split is None:
        split = make_split(m, ratio=ratio, seed=seed)
    report = sweep_candidates(
        design,
        candidates,
        thresholds,
        split,
        data=(table, m),
        deriv_state=deriv_state,
        normalize=normalize,
        max_iter=max_iter,
        n_workers=n_workers,
        ridge=ridge,
    )
    if select:
        rtol = PDE_SELECT_RTOL if select_rtol is None else float(select_rtol)
        select_model(report, rtol=rtol)
    return report

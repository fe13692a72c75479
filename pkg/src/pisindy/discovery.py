"""Parallel implicit model discovery.

Strategy: pick candidate left-hand-side terms from an implicit library,
regress each against the remaining columns over a grid of sparsity
thresholds, score every (candidate, threshold) cell on held-out samples, and
select the winner.  Models whose terms involve the state derivative are
rearranged into rational form (numerator over denominator) for scoring,
simulation and comparison against ground truth.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .regression import (
    SparseLinearModel,
    adm_sparsest,
    least_squares,
    null_space_basis,
    null_space_basis_gap,
    smallest_singular_direction,
    stlsq,
)
from .snapshots import SnapshotSet
from .terms import (
    DesignMatrix,
    FunctionLibrary,
    LibraryError,
    TermDescriptor,
    constant_term,
    evaluate,
    evaluate_on_table,
    multiply_terms,
    normalize_columns,
    render_term,
)

__all__ = [
    "Split",
    "make_split",
    "RationalStateModel",
    "SweepCell",
    "CandidateSweepReport",
    "sweep_candidates",
    "fit_error",
    "derivative_error",
    "canonical_vector",
    "reconstruct_rational",
    "select_model",
    "cross_reference",
    "simulate_discovered",
    "kinematic_model",
    "structure_error",
    "parameter_error",
    "models_equivalent",
    "support_of",
    "aic_score",
    "implicit_sindy",
    "plain_sindy",
]

SUPPORT_RTOL = 1e-10  # entries below this (relative) never count as support
DENOMINATOR_FLOOR = 1e-8  # |D| below this aborts rational evaluation


@dataclass(frozen=True)
class Split:
    """Row split used for fitting vs scoring."""

    train: np.ndarray
    test: np.ndarray
    ratio: float
    seed: int

    def describe(self):
        return {
            "ratio": self.ratio,
            "seed": self.seed,
            "n_train": int(len(self.train)),
            "n_test": int(len(self.test)),
        }


def make_split(n_samples, ratio=0.8, seed=0, shuffle=True):
    """Seeded shuffle split; the trailing (1 - ratio) block is the test set."""
    if not 0 < ratio <= 1:
        raise ValueError("ratio must be in (0, 1]")
    idx = np.arange(n_samples)
    if shuffle:
        np.random.default_rng(seed).shuffle(idx)
    cut = int(round(ratio * n_samples))
    cut = max(1, min(cut, n_samples))
    return Split(np.sort(idx[:cut]), np.sort(idx[cut:]), ratio, seed)


# ---------------------------------------------------------------------------
# Rational models


@dataclass
class RationalStateModel:
    """dx_k/dt = numerator(x, u) / denominator(x, u).

    Both sides are lists of (term, coefficient) over derivative-free terms,
    scaled so the largest-magnitude denominator coefficient is +1.
    """

    state_index: int
    numerator: tuple
    denominator: tuple
    library: FunctionLibrary

    def evaluate_parts(self, table, m):
        num = np.zeros(m)
        for term, c in self.numerator:
            col = evaluate_on_table(self.library.with_terms([term]), table, m).values[:, 0]
            num += c * col
        den = np.zeros(m)
        for term, c in self.denominator:
            col = evaluate_on_table(self.library.with_terms([term]), table, m).values[:, 0]
            den += c * col
        return num, den

    def rhs(self, x, u=None):
        """Evaluate at single samples (1-D state) or batches (2-D)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        table = {("state", i, 0): x[:, i] for i in range(x.shape[1])}
        if u is not None:
            u = np.atleast_2d(np.asarray(u, dtype=float))
            if u.shape[0] != x.shape[0]:
                u = u.T
            for i in range(u.shape[1]):
                table[("control", i, 0)] = u[:, i]
        num, den = self.evaluate_parts(table, x.shape[0])
        if np.any(np.abs(den) < DENOMINATOR_FLOOR):
            raise ZeroDivisionError(
                f"denominator magnitude below {DENOMINATOR_FLOOR} for state {self.state_index}"
            )
        return num / den

    def render(self, precision=6):
        lib = self.library
        num = _render_combination(self.numerator, lib, precision)
        den = _render_combination(self.denominator, lib, precision)
        pde = lib.pde_style
        name = (
            f"{lib.state_names[self.state_index]}_t"
            if pde
            else f"d{lib.state_names[self.state_index]}"
        )
        if den == "1":
            return f"{name} = {num}"
        return f"{name} = ({num})/({den})"


def _render_combination(pairs, library, precision):
    parts = []
    for term, c in pairs:
        if c == 0:
            continue
        mag = f"{abs(c):.{precision}g}"
        body = render_term(term, library)
        piece = mag if term.is_constant else (body if mag == "1" else f"{mag}*{body}")
        if not parts:
            parts.append(("-" if c < 0 else "") + piece)
        else:
            parts.append((" - " if c < 0 else " + ") + piece)
    return "".join(parts) if parts else "0"


def kinematic_model(library, state_index, source_state):
    """Trivial rational model dx_k = x_i (velocity states of mechanical systems)."""
    from .terms import state_term

    return RationalStateModel(
        state_index,
        ((state_term(source_state), 1.0),),
        ((constant_term, 1.0),),
        library,
    )


# ---------------------------------------------------------------------------
# Canonical implicit vectors


def _embed(model: SparseLinearModel, p):
    v = -np.asarray(model.coefficients, dtype=float).copy()
    if not isinstance(model.lhs, (int, np.integer)):
        raise ValueError("model lhs must be a library column index to canonicalize")
    j = int(model.lhs)
    if v.shape != (p,):
        raise ValueError("model coefficients must be embedded at library length")
    if v[j] != 0:
        raise ValueError("lhs column must not carry a regression coefficient")
    v[j] = 1.0
    return v


def support_of(vector, rtol=SUPPORT_RTOL):
    """Indices counted as structurally nonzero (relative hard zero)."""
    v = np.asarray(vector, dtype=float)
    top = np.abs(v).max()
    if top == 0:
        return ()
    return tuple(np.flatnonzero(np.abs(v) > rtol * top).tolist())


def _deriv_state_of(vector, library, rtol=SUPPORT_RTOL):
    ks = set()
    for i in support_of(vector, rtol):
        ks.update(library.terms[i].derivative_vars())
    if len(ks) > 1:
        raise LibraryError(f"terms mix derivatives of states {sorted(ks)}")
    return ks.pop() if ks else None


def canonical_vector(model_or_vector, library: FunctionLibrary, deriv_state=None):
    """Full implicit coefficient vector in canonical scale.

    A fitted model ``lhs = sum(coeffs * terms)`` becomes the vector of
    ``lhs - sum(...) = 0`` with +1 at the lhs column.  The vector is rescaled
    so the largest-magnitude coefficient among denominator terms (terms
    containing the state derivative) becomes +1; vectors with no derivative
    term scale their overall largest coefficient to +1.  Canonical vectors of
    proportional inputs are identical.
    """
    p = len(library.terms)
    if isinstance(model_or_vector, SparseLinearModel):
        v = _embed(model_or_vector, p)
    else:
        v = np.asarray(model_or_vector, dtype=float).copy()
        if v.shape != (p,):
            raise ValueError("vector length must match the library")
    if not np.any(v):
        raise ValueError("cannot canonicalize the zero vector")
    k = _deriv_state_of(v, library) if deriv_state is None else deriv_state
    sup = support_of(v)
    if k is not None:
        den_idx = [i for i in sup if k in library.terms[i].derivative_vars()]
    else:
        den_idx = []
    pool = den_idx if den_idx else list(sup)
    pivot = max(pool, key=lambda i: (abs(v[i]), -i))
    v = v / v[pivot]
    return v


def reconstruct_rational(model_or_vector, library, deriv_state=None) -> RationalStateModel:
    """Rearrange an implicit relation into dx_k = N(x)/D(x).

    Terms containing the derivative factor (to the first power only) go to
    the denominator with the derivative divided out; the rest, negated, form
    the numerator.  Errors when derivative factors of other states, powers
    above one, or no derivative term at all appear.
    """
    v = canonical_vector(model_or_vector, library, deriv_state)
    k = _deriv_state_of(v, library) if deriv_state is None else deriv_state
    if k is None:
        raise LibraryError("no derivative term present; nothing to solve for")
    num, den = [], []
    for i in support_of(v):
        term = library.terms[i]
        dvars = term.derivative_vars()
        if dvars:
            if set(dvars) != {k}:
                raise LibraryError(
                    f"term {render_term(term, library)} involves a different state derivative"
                )
            den.append((term.drop_dstate(k), float(v[i])))
        else:
            num.append((term, -float(v[i])))
    if not den:
        raise LibraryError("no denominator term containing the state derivative")
    return RationalStateModel(k, tuple(num), tuple(den), library)


# ---------------------------------------------------------------------------
# Errors and scores


def fit_error(A, b, coefficients):
    """Relative residual ||b - A c|| / ||b|| (absolute when b is zero)."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    r = np.linalg.norm(b - A @ np.asarray(coefficients, dtype=float))
    bn = np.linalg.norm(b)
    return float(r / bn) if bn > 0 else float(r)


def derivative_error(model: RationalStateModel, data) -> float:
    """Relative error of predicted vs recorded dx_k over a sample set."""
    if isinstance(data, SnapshotSet):
        if data.dx is None:
            raise ValueError("data carries no derivative samples")
        table = _table_of(data)
        m = data.n_samples
    else:
        table, m = data
    key = ("dstate", model.state_index, 0)
    if key not in table:
        raise ValueError(f"data carries no derivative of state {model.state_index}")
    truth = table[key]
    num, den = model.evaluate_parts(table, m)
    if np.any(np.abs(den) < DENOMINATOR_FLOOR):
        raise ZeroDivisionError("denominator vanishes on the evaluation samples")
    pred = num / den
    tn = np.linalg.norm(truth)
    r = np.linalg.norm(pred - truth)
    return float(r / tn) if tn > 0 else float(r)


def _table_of(data: SnapshotSet):
    table = {("state", i, 0): data.x[:, i] for i in range(data.n_states)}
    if data.dx is not None:
        for i in range(data.n_states):
            table[("dstate", i, 0)] = data.dx[:, i]
    if data.u is not None:
        for i in range(data.u.shape[1]):
            table[("control", i, 0)] = data.u[:, i]
    return table


def structure_error(a, b, rtol=SUPPORT_RTOL):
    """Size of the symmetric support difference of two canonical vectors."""
    sa, sb = set(support_of(a, rtol)), set(support_of(b, rtol))
    return len(sa ^ sb)


def parameter_error(a, b, rtol=SUPPORT_RTOL):
    """Max relative coefficient deviation; requires equal supports."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    sa, sb = support_of(a, rtol), support_of(b, rtol)
    if sa != sb:
        raise ValueError(f"supports differ: {sorted(set(sa) ^ set(sb))}")
    idx = list(sa)
    return float(np.max(np.abs(a[idx] - b[idx]) / np.abs(b[idx])))


def models_equivalent(a: RationalStateModel, b: RationalStateModel, rtol=1e-9):
    """Whether two rational models define the same function of the state.

    Cross-multiplies: Na*Db - Nb*Da must vanish term by term after expansion,
    so a relation and its polynomial multiples count as one model.  ``rtol``
    bounds the surviving coefficients relative to the largest cross product;
    loosen it to compare noisily estimated parameters.  Trig identities are
    not reduced, so equivalences that need them go undetected.
    """
    if a.state_index != b.state_index:
        return False
    resid = {}
    scale = 0.0
    for ta, ca in a.numerator:
        for tb, cb in b.denominator:
            t = multiply_terms(ta, tb)
            resid[t] = resid.get(t, 0.0) + ca * cb
            scale = max(scale, abs(ca * cb))
    for ta, ca in a.denominator:
        for tb, cb in b.numerator:
            t = multiply_terms(ta, tb)
            resid[t] = resid.get(t, 0.0) - ca * cb
            scale = max(scale, abs(ca * cb))
    if scale == 0.0:
        # denominators always carry a unit pivot, so this means Na = Nb = 0
        return True
    return all(abs(c) <= rtol * scale for c in resid.values())


def aic_score(rss, n_samples, n_terms):
    """Corrected Akaike score for a residual sum of squares."""
    if rss <= 0:
        rss = 1e-300
    k = n_terms
    m = n_samples
    base = m * math.log(rss / m) + 2 * k
    if m - k - 1 <= 0:
        return float("inf")
    return float(base + 2 * k * (k + 1) / (m - k - 1))


# ---------------------------------------------------------------------------
# The sweep


@dataclass
class SweepCell:
    """One (candidate, threshold) regression outcome."""

    candidate: int  # library column index used as LHS
    threshold: float
    model: SparseLinearModel | None
    fit_error: float = math.nan
    derivative_error: float = math.nan
    error: str | None = None

    @property
    def ok(self):
        return self.error is None and self.model is not None


@dataclass
class CandidateSweepReport:
    """All sweep cells plus the split and selection records."""

    library: FunctionLibrary
    candidates: tuple
    thresholds: tuple
    cells: dict
    split: dict
    deriv_state: int | None
    normalized: bool
    selected: tuple | None = None
    selection_metric: str | None = None

    def cell(self, candidate, threshold):
        return self.cells[(candidate, threshold)]

    def selected_cell(self):
        return None if self.selected is None else self.cells[self.selected]


def _resolve_candidates(library, candidates):
    out = []
    for c in candidates:
        if isinstance(c, TermDescriptor):
            out.append(library.index_of(c))
        elif isinstance(c, str):
            term = _parse_in(library, c)
            out.append(library.index_of(term))
        else:
            j = int(c)
            if not 0 <= j < len(library.terms):
                raise LibraryError(f"candidate index {j} out of range")
            out.append(j)
    if len(set(out)) != len(out):
        raise LibraryError("duplicate candidate columns")
    return tuple(out)


def _parse_in(library, text):
    from .terms import parse_term

    return parse_term(text, library.state_names, library.control_names)


def sweep_candidates(
    design: DesignMatrix,
    candidates,
    thresholds,
    split: Split,
    data=None,
    deriv_state=None,
    normalize=True,
    max_iter=10,
    n_workers=1,
    ridge=0.0,
) -> CandidateSweepReport:
    """Regress every candidate column on the rest for every threshold.

    ``design`` must be unnormalized; normalization (on by default) happens
    internally so scoring stays in the data frame.  Cells are independent
    and may be computed by a thread pool; results are identical for any
    worker count.  ``data`` (a SnapshotSet or (table, m) pair) enables
    derivative-error scoring; without it only fit errors are available.
    ``ridge`` shrinks the regression fits (see ``stlsq``), which keeps noisy
    near-null directions of implicit libraries from flooding the coefficients;
    the reported model is always re-fit without shrinkage on its final support.
    """
    if design.norms is not None:
        raise ValueError("pass the unnormalized design; the sweep normalizes internally")
    library = design.library
    cand = _resolve_candidates(library, candidates)
    thresholds = tuple(float(t) for t in thresholds)
    if len(set(thresholds)) != len(thresholds):
        raise ValueError("duplicate thresholds")
    raw = design.values
    m, p = raw.shape
    if deriv_state is None:
        ks = {f.var for t in library.terms for f in t.factors if f.kind == "dstate"}
        deriv_state = ks.pop() if len(ks) == 1 else None

    if normalize:
        normed = normalize_columns(design)
        V, norms = normed.values, normed.norms
    else:
        V, norms = raw, None

    train, test = split.train, split.test
    test_rows = test if len(test) else train  # degenerate split scores in-sample
    test_table = None
    if data is not None:
        if isinstance(data, SnapshotSet):
            sub = data.take(test_rows)
            test_table = (_table_of(sub), sub.n_samples)
        else:
            table, _ = data
            test_table = ({k: v[test_rows] for k, v in table.items()}, len(test_rows))

    others_cache = {j: np.flatnonzero(np.arange(p) != j) for j in cand}

    def run_cell(j, lam):
        cols = others_cache[j]
        try:
            model = stlsq(
                V[np.ix_(train, cols)],
                V[train, j],
                lam,
                max_iter=max_iter,
                norms=None if norms is None else norms[cols],
                target_norm=1.0 if norms is None else float(norms[j]),
                lhs=j,
                ridge=ridge,
            )
        except Exception as exc:  # pragma: no cover - defensive
            return SweepCell(j, lam, None, error=f"{type(exc).__name__}: {exc}")
        full = np.zeros(p)
        full[cols] = model.coefficients
        model.coefficients = full
        cell = SweepCell(j, lam, model)
        cell.fit_error = fit_error(raw[np.ix_(test_rows, cols)], raw[test_rows, j], full[cols])
        if test_table is not None and deriv_state is not None:
            try:
                rational = reconstruct_rational(model, library, deriv_state)
                cell.derivative_error = derivative_error(rational, test_table)
            except (LibraryError, ZeroDivisionError, ValueError):
                cell.derivative_error = math.nan
        return cell

    jobs = [(j, lam) for j in cand for lam in thresholds]
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(lambda jl: run_cell(*jl), jobs))
    else:
        results = [run_cell(*jl) for jl in jobs]
    cells = {(c.candidate, c.threshold): c for c in results}
    return CandidateSweepReport(
        library=library,
        candidates=cand,
        thresholds=thresholds,
        cells=cells,
        split=split.describe(),
        deriv_state=deriv_state,
        normalized=normalize,
    )


SELECT_TIE_RTOL = 0.01  # errors within 1% count as tied; sparsity decides
SELECT_TIE_ATOL = 1e-12  # groups the pure numerical-noise regime


def select_model(report: CandidateSweepReport, rtol: float = SELECT_TIE_RTOL):
    """Pick the winning cell: lowest error, with near-ties resolved by sparsity.

    Cells within rtol of the best error (plus a tiny absolute slack) are
    indistinguishable in practice; among them the sparsest model wins, which
    keeps a relation from beating its own minimal form times an extra
    factor.  Sparsity ties go to the earliest candidate, so the pivot stays
    canonical instead of drifting to whichever multiple hit a slightly
    luckier error.  Cells that could not be rationally reconstructed are
    excluded whenever any cell could; when none could, fit error ranks
    instead.  The report is updated in place and the winning cell returned.
    """
    usable = [c for c in report.cells.values() if c.ok and c.model.nonzero_count > 0]
    if not usable:
        raise ValueError("sweep produced no usable cells")
    with_deriv = [c for c in usable if not math.isnan(c.derivative_error)]
    if with_deriv:
        pool, metric = with_deriv, "derivative_error"
        err = lambda c: c.derivative_error
    else:
        pool, metric = usable, "fit_error"
        err = lambda c: c.fit_error
    best = min(err(c) for c in pool)
    window = best * (1.0 + rtol) + SELECT_TIE_ATOL
    finalists = [c for c in pool if err(c) <= window]
    win = min(
        finalists,
        key=lambda c: (
            c.model.nonzero_count,
            report.candidates.index(c.candidate),
            err(c),
            c.threshold,
        ),
    )
    report.selected = (win.candidate, win.threshold)
    report.selection_metric = metric
    return win


def cross_reference(report: CandidateSweepReport, cells=None):
    """Group cells by the canonical support of their models.

    Different LHS candidates that landed on the same underlying implicit
    relation fall into one group; the returned list is ordered by group size
    (largest first) with per-group canonical representatives and coefficient
    spread.
    """
    groups = {}
    pool = cells if cells is not None else [c for c in report.cells.values() if c.ok]
    for cell in pool:
        if cell.model.nonzero_count == 0:
            continue
        try:
            v = canonical_vector(cell.model, report.library, report.deriv_state)
        except (ValueError, LibraryError):
            continue
        sup = support_of(v)
        groups.setdefault(sup, []).append((cell, v))
    out = []
    for sup, members in groups.items():
        vecs = np.array([v for _, v in members])
        rep = vecs.mean(axis=0)
        spread = float(np.max(np.abs(vecs - rep))) if len(members) > 1 else 0.0
        out.append(
            {
                "support": sup,
                "members": [(c.candidate, c.threshold) for c, _ in members],
                "representative": rep,
                "spread": spread,
            }
        )
    out.sort(key=lambda g: (-len(g["members"]), g["support"]))
    return out


# ---------------------------------------------------------------------------
# Simulation of discovered models


def simulate_discovered(models, x0, dt, n_steps, control=None):
    """Integrate rational state models with classical RK4.

    ``models`` maps every state index to a RationalStateModel.  ``control``
    is a callable t -> control vector.  A denominator magnitude below 1e-8
    aborts integration; the truncated trajectory is returned with
    ``meta['aborted']`` set.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    n = x0.size
    missing = [k for k in range(n) if k not in models]
    if missing:
        raise ValueError(f"no model for states {missing}")
    lib = models[0].library

    def rhs(t, x):
        u = None if control is None else np.atleast_1d(control(t))
        out = np.empty(n)
        for k in range(n):
            out[k] = models[k].rhs(x[None, :], None if u is None else u[None, :])[0]
        return out

    ts = [0.0]
    xs = [x0]
    aborted = None
    x = x0.copy()
    t = 0.0
    for _ in range(n_steps):
        try:
            k1 = rhs(t, x)
            k2 = rhs(t + dt / 2, x + dt / 2 * k1)
            k3 = rhs(t + dt / 2, x + dt / 2 * k2)
            k4 = rhs(t + dt, x + dt * k3)
        except ZeroDivisionError as exc:
            aborted = str(exc)
            break
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
        if not np.all(np.isfinite(x)):
            aborted = "state became non-finite"
            break
        ts.append(t)
        xs.append(x.copy())
    u = None
    if control is not None:
        u = np.array([np.atleast_1d(control(tv)) for tv in ts])
    out = SnapshotSet(
        t=np.array(ts),
        x=np.array(xs),
        u=u,
        state_names=lib.state_names,
        control_names=lib.control_names,
        meta={"dt": dt, "source": "simulate_discovered"},
    )
    if aborted:
        out.meta["aborted"] = aborted
    return out


# ---------------------------------------------------------------------------
# Baselines


def implicit_sindy(
    design: DesignMatrix,
    deriv_state,
    adm_lambdas,
    data=None,
    split=None,
    normalize=True,
    restarts=32,
    seed=0,
    max_iter=200,
    null_space="adaptive",
):
    """Null-space + alternating-directions baseline.

    Builds a null space of the normalized library, extracts the sparsest
    vector per ADM threshold, and keeps the candidate with the lowest
    derivative error on the test rows (fit rows when no data).  The
    ``"adaptive"`` null space cuts the singular spectrum at its largest
    well-separated gap so mild noise does not erase it outright; ``"strict"``
    keeps only machine-precision null directions.  Either way, an empty
    result falls back to the smallest singular direction as a 1-dim
    approximate null space, flagged ``degenerate_null_space``.
    """
    if design.norms is not None:
        raise ValueError("pass the unnormalized design")
    if null_space not in ("adaptive", "strict"):
        raise ValueError("null_space must be 'adaptive' or 'strict'")
    library = design.library
    if normalize:
        normed = normalize_columns(design)
        V, norms = normed.values, normed.norms
    else:
        V, norms = design.values, None
    rows = np.arange(V.shape[0]) if split is None else split.train
    if null_space == "adaptive":
        basis = null_space_basis_gap(V[rows])
    else:
        basis = null_space_basis(V[rows])
    degenerate = basis.shape[1] == 0
    if degenerate:
        basis = smallest_singular_direction(V[rows])[:, None]

    test_table = None
    if data is not None and split is not None and len(split.test):
        if isinstance(data, SnapshotSet):
            sub = data.take(split.test)
            test_table = (_table_of(sub), sub.n_samples)
        else:
            table, _ = data
            test_table = ({k: v[split.test] for k, v in table.items()}, len(split.test))

    results = []
    for lam in adm_lambdas:
        try:
            v = adm_sparsest(basis, lam, max_iter=max_iter, restarts=restarts, seed=seed)
        except ValueError:
            continue
        v_raw = v / norms if norms is not None else v.copy()
        try:
            vec = canonical_vector(v_raw, library, deriv_state)
            rational = reconstruct_rational(vec, library, deriv_state)
        except (LibraryError, ValueError):
            results.append((float(lam), v_raw, None, math.nan))
            continue
        err = math.nan
        if test_table is not None:
            try:
                err = derivative_error(rational, test_table)
            except (ZeroDivisionError, ValueError):
                err = math.nan
        results.append((float(lam), vec, rational, err))
    if not results:
        raise ValueError("ADM produced no candidate vectors")
    scored = [r for r in results if r[2] is not None and not math.isnan(r[3])]
    if scored:
        # same near-tie rule as select_model: errors within the window are
        # indistinguishable and the sparsest vector wins
        low = min(r[3] for r in scored)
        window = low * (1.0 + SELECT_TIE_RTOL) + SELECT_TIE_ATOL
        finalists = [r for r in scored if r[3] <= window]
        best = min(finalists, key=lambda r: (int(np.count_nonzero(r[1])), r[3], r[0]))
    else:
        usable = [r for r in results if r[2] is not None]
        pool = usable if usable else results
        best = min(pool, key=lambda r: (int(np.count_nonzero(r[1])), r[0]))
    return {
        "lambda": best[0],
        "vector": best[1],
        "model": best[2],
        "derivative_error": best[3],
        "null_dim": int(basis.shape[1]),
        "degenerate_null_space": degenerate,
        "all": results,
    }


def plain_sindy(design: DesignMatrix, target, threshold, normalize=True, max_iter=10, ridge=0.0):
    """Explicit sparse regression of a derivative signal on the library."""
    if design.norms is not None:
        raise ValueError("pass the unnormalized design")
    target = np.asarray(target, dtype=float).ravel()
    if normalize:
        normed = normalize_columns(design)
        V, norms = normed.values, normed.norms
    else:
        V, norms = design.values, None
    model = stlsq(
        V, target, threshold, max_iter=max_iter, norms=norms, target_norm=1.0, ridge=ridge
    )
    return model


def explicit_to_rational(model: SparseLinearModel, library, state_index):
    """Wrap a plain regression as a rational model with denominator 1."""
    num = [
        (library.terms[i], float(model.coefficients[i]))
        for i in np.flatnonzero(model.coefficients)
    ]
    return RationalStateModel(
        state_index, tuple(num), ((constant_term, 1.0),), library
    )

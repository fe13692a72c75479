"""Candidate term library: symbolic descriptors, construction, evaluation.

A term is a product of powers of problem variables (states, state
derivatives, controls, spatial derivatives of fields) and optional
trigonometric factors of integer linear combinations of designated angle
states.  Terms are hashable value objects with a canonical internal order,
so libraries can be deduplicated, compared and serialized.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "Factor",
    "TrigFactor",
    "TermDescriptor",
    "FunctionLibrary",
    "DesignMatrix",
    "LibraryError",
    "constant_term",
    "multiply_terms",
    "build_polynomial_library",
    "build_implicit_library",
    "build_trig_library",
    "concat_libraries",
    "evaluate",
    "evaluate_on_table",
    "normalize_columns",
    "unnormalize_columns",
    "parse_term",
    "render_term",
    "render_equation",
]

# Variable kinds.  "state" also covers PDE field values; "dstate" is the time
# derivative of a state/field; "spatial" carries a derivative order.
KINDS = ("state", "dstate", "control", "spatial")
_KIND_RANK = {k: i for i, k in enumerate(KINDS)}


class LibraryError(ValueError):
    """Raised for malformed terms, duplicate entries or evaluation failures."""


@dataclass(frozen=True, order=True)
class Factor:
    """One power of one variable, e.g. x2^3 or u_xx."""

    kind: str
    var: int
    order: int = 0  # spatial derivative order; 0 for non-spatial kinds
    exp: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise LibraryError(f"unknown variable kind {self.kind!r}")
        if self.exp < 1:
            raise LibraryError("factor exponent must be >= 1")
        if self.kind == "spatial" and self.order < 1:
            raise LibraryError("spatial factor needs derivative order >= 1")
        if self.kind != "spatial" and self.order != 0:
            raise LibraryError("only spatial factors carry a derivative order")

    def key(self):
        return (_KIND_RANK[self.kind], self.var, self.order)


@dataclass(frozen=True, order=True)
class TrigFactor:
    """sin or cos of an integer combination of angle states, to a power.

    ``coeffs`` holds (state index, integer coefficient) pairs, sorted by
    state index, zeros dropped.  The canonical representative has a positive
    leading coefficient; sin(-a) = -sin(a) only flips the column sign, which
    regression coefficients absorb.
    """

    shape: str
    coeffs: tuple[tuple[int, int], ...]
    exp: int = 1

    def __post_init__(self):
        if self.shape not in ("sin", "cos"):
            raise LibraryError(f"trig shape must be sin or cos, got {self.shape!r}")
        if not self.coeffs:
            raise LibraryError("trig factor needs a nonempty angle combination")
        if any(c == 0 for _, c in self.coeffs):
            raise LibraryError("zero coefficients must be dropped from trig combos")
        if list(self.coeffs) != sorted(self.coeffs, key=lambda vc: vc[0]):
            raise LibraryError("trig combo must be sorted by state index")
        if self.coeffs[0][1] < 0:
            raise LibraryError("trig combo must be in canonical sign (leading > 0)")
        if self.exp < 1:
            raise LibraryError("trig exponent must be >= 1")

    def key(self):
        return (self.coeffs, self.shape)


def canonical_combo(pairs):
    """Sort a (state, coeff) combination, drop zeros, force leading sign > 0.

    Returns (coeffs, sign) where sign is -1 when the combination was flipped;
    sin picks up that sign, cos does not.
    """
    pairs = sorted((v, int(c)) for v, c in pairs if int(c) != 0)
    if not pairs:
        raise LibraryError("angle combination is identically zero")
    sign = 1
    if pairs[0][1] < 0:
        pairs = [(v, -c) for v, c in pairs]
        sign = -1
    return tuple(pairs), sign


@dataclass(frozen=True)
class TermDescriptor:
    """A single library term: product of factors and trig factors.

    The constant term has empty ``factors`` and ``trig``.  Factors are kept
    sorted by (kind, var, order) and trig factors by (combo, shape); equal
    variables never repeat (their exponents merge), which makes equality and
    hashing structural.
    """

    factors: tuple[Factor, ...] = ()
    trig: tuple[TrigFactor, ...] = ()

    def __post_init__(self):
        keys = [f.key() for f in self.factors]
        if keys != sorted(keys) or len(set(keys)) != len(keys):
            raise LibraryError("factors must be sorted and unique per variable")
        tkeys = [t.key() for t in self.trig]
        if tkeys != sorted(tkeys) or len(set(tkeys)) != len(tkeys):
            raise LibraryError("trig factors must be sorted and unique per combo")

    @property
    def is_constant(self):
        return not self.factors and not self.trig

    def degree(self):
        """Total polynomial degree (trig factors count 0)."""
        return sum(f.exp for f in self.factors)

    def derivative_vars(self):
        """State indices appearing as time-derivative factors."""
        return tuple(f.var for f in self.factors if f.kind == "dstate")

    def drop_dstate(self, var):
        """Divide out one power of d<state var>; errors if absent or exp > 1."""
        out = []
        hit = False
        for f in self.factors:
            if f.kind == "dstate" and f.var == var:
                if f.exp != 1:
                    raise LibraryError(
                        f"cannot divide out {render_term(self)}: derivative power {f.exp}"
                    )
                hit = True
                continue
            out.append(f)
        if not hit:
            raise LibraryError(f"term {render_term(self)} has no derivative of state {var}")
        return TermDescriptor(tuple(out), self.trig)


constant_term = TermDescriptor()


def _term(factors=(), trig=()):
    factors = tuple(sorted(factors, key=Factor.key))
    trig = tuple(sorted(trig, key=TrigFactor.key))
    return TermDescriptor(factors, trig)


def multiply_terms(a: TermDescriptor, b: TermDescriptor) -> TermDescriptor:
    """Product of two terms, merging exponents of shared variables."""
    facs = {f.key(): f for f in a.factors}
    for f in b.factors:
        k = f.key()
        if k in facs:
            facs[k] = replace(facs[k], exp=facs[k].exp + f.exp)
        else:
            facs[k] = f
    trig = {t.key(): t for t in a.trig}
    for t in b.trig:
        k = t.key()
        if k in trig:
            trig[k] = replace(trig[k], exp=trig[k].exp + t.exp)
        else:
            trig[k] = t
    return _term(facs.values(), trig.values())


def state_term(var, exp=1):
    return _term([Factor("state", var, exp=exp)])


def dstate_term(var):
    return _term([Factor("dstate", var)])


@dataclass(frozen=True)
class FunctionLibrary:
    """An ordered collection of distinct terms plus naming context."""

    terms: tuple[TermDescriptor, ...]
    state_names: tuple[str, ...]
    control_names: tuple[str, ...] = ()
    angle_indices: tuple[int, ...] = ()

    def __post_init__(self):
        if len(set(self.terms)) != len(self.terms):
            seen = set()
            for t in self.terms:
                if t in seen:
                    raise LibraryError(f"duplicate library term {render_term(t)}")
                seen.add(t)

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    @property
    def pde_style(self):
        """True when any term differentiates in space (switches dstate rendering)."""
        return any(f.kind == "spatial" for t in self.terms for f in t.factors)

    def index_of(self, term):
        try:
            return self.terms.index(term)
        except ValueError:
            raise LibraryError(f"term {render_term(term)} not in library") from None

    def term_names(self):
        return [render_term(t, self) for t in self.terms]

    def with_terms(self, terms):
        return replace(self, terms=tuple(terms))


@dataclass
class DesignMatrix:
    """Evaluated library: one column per term, one row per sample."""

    values: np.ndarray
    library: FunctionLibrary
    norms: np.ndarray | None = None  # set when columns are normalized

    @property
    def n_samples(self):
        return self.values.shape[0]

    @property
    def n_terms(self):
        return self.values.shape[1]


def _dedup(terms):
    out, seen = [], set()
    for t in terms:
        if t not in seen:
            seen.add(t)
            out.append(t)
    return out


def default_state_names(n):
    return tuple(f"x{i + 1}" for i in range(n)) if n != 1 else ("x",)


def build_polynomial_library(
    n_states,
    max_degree,
    include_constant=True,
    state_names=None,
    control_names=(),
    n_controls=0,
    max_terms=20000,
):
    """All monomials in the states (and controls) up to ``max_degree``.

    Graded order: degree 0 (optional constant), then degree 1, 2, ...; within
    a degree, lexicographic by variable index with states before controls.
    Count for states only is C(n_states + max_degree, max_degree) including
    the constant.
    """
    if max_degree < 0:
        raise LibraryError("max_degree must be >= 0")
    state_names = tuple(state_names) if state_names else default_state_names(n_states)
    if len(state_names) != n_states:
        raise LibraryError("state_names length must match n_states")
    control_names = tuple(control_names)
    if n_controls and not control_names:
        control_names = tuple(f"u{i + 1}" for i in range(n_controls)) if n_controls != 1 else ("u",)
    nvars = n_states + len(control_names)
    terms = []
    if include_constant:
        terms.append(constant_term)
    for deg in range(1, max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(nvars), deg):
            facs = []
            for var, grp in itertools.groupby(combo):
                reps = len(list(grp))
                if var < n_states:
                    facs.append(Factor("state", var, exp=reps))
                else:
                    facs.append(Factor("control", var - n_states, exp=reps))
            terms.append(_term(facs))
        if len(terms) > max_terms:
            raise LibraryError(
                f"library exceeds {max_terms} terms at degree {deg}; raise max_terms to allow"
            )
    return FunctionLibrary(tuple(terms), state_names, control_names)


def build_implicit_library(base: FunctionLibrary, derivative_indices) -> FunctionLibrary:
    """Base library extended with d<state>/dt times every base term.

    The base must not already contain derivative factors.  Output order is
    the base terms followed by the products, grouped by derivative index in
    the order given.
    """
    for t in base.terms:
        if any(f.kind == "dstate" for f in t.factors):
            raise LibraryError("base library already contains derivative factors")
    terms = list(base.terms)
    for k in derivative_indices:
        if not 0 <= k < len(base.state_names):
            raise LibraryError(f"derivative index {k} out of range")
        dk = dstate_term(k)
        terms.extend(multiply_terms(dk, t) for t in base.terms)
    terms = _dedup(terms)
    return base.with_terms(terms)


def build_trig_library(
    n_states,
    angle_indices,
    combos,
    partners=None,
    shapes=("sin", "cos"),
    state_names=None,
) -> FunctionLibrary:
    """Products of sin/cos of integer angle combinations with partner terms.

    ``combos`` are integer coefficient vectors aligned with ``angle_indices``
    (sorted).  Each combo is canonicalized (leading coefficient positive);
    combos that collide after canonicalization are rejected.  ``partners``
    defaults to just the constant term.
    """
    angle_indices = tuple(sorted(angle_indices))
    state_names = tuple(state_names) if state_names else default_state_names(n_states)
    partners = list(partners) if partners is not None else [constant_term]
    seen = set()
    canon = []
    for combo in combos:
        if len(combo) != len(angle_indices):
            raise LibraryError("combo length must match angle_indices")
        pairs, _ = canonical_combo(zip(angle_indices, combo))
        if pairs in seen:
            raise LibraryError(f"duplicate angle combination {pairs} after canonicalization")
        seen.add(pairs)
        canon.append(pairs)
    terms = []
    for pairs in canon:
        for shape in shapes:
            tf = TrigFactor(shape, pairs)
            for p in partners:
                terms.append(multiply_terms(_term(trig=[tf]), p))
    terms = _dedup(terms)
    return FunctionLibrary(tuple(terms), state_names, angle_indices=angle_indices)


def concat_libraries(*libs: FunctionLibrary) -> FunctionLibrary:
    """Concatenate libraries sharing a naming context; duplicates rejected."""
    if not libs:
        raise LibraryError("need at least one library")
    names = libs[0].state_names
    controls = max((l.control_names for l in libs), key=len)
    angles = tuple(sorted({i for l in libs for i in l.angle_indices}))
    terms = []
    for l in libs:
        if l.state_names != names:
            raise LibraryError("libraries disagree on state names")
        terms.extend(l.terms)
    if len(set(terms)) != len(terms):
        seen = set()
        for t in terms:
            if t in seen:
                raise LibraryError(f"duplicate term across libraries: {render_term(t)}")
            seen.add(t)
    return FunctionLibrary(tuple(terms), names, controls, angles)


# ---------------------------------------------------------------------------
# Evaluation


def evaluate_on_table(library: FunctionLibrary, table, m=None) -> DesignMatrix:
    """Evaluate every term on a variable table.

    ``table`` maps (kind, var, order) -> 1-D sample array.  Missing variables
    and non-finite results raise with the offending term named.
    """
    if m is None:
        m = len(next(iter(table.values())))
    cols = np.empty((m, len(library.terms)))
    for j, term in enumerate(library.terms):
        col = np.ones(m)
        for f in term.factors:
            key = (f.kind, f.var, f.order)
            if key not in table:
                raise LibraryError(
                    f"data is missing variable {key} needed by term {render_term(term, library)}"
                )
            col = col * table[key] ** f.exp
        for tf in term.trig:
            angle = np.zeros(m)
            for var, c in tf.coeffs:
                key = ("state", var, 0)
                if key not in table:
                    raise LibraryError(
                        f"data is missing angle state {var} needed by term "
                        f"{render_term(term, library)}"
                    )
                angle = angle + c * table[key]
            w = np.sin(angle) if tf.shape == "sin" else np.cos(angle)
            col = col * w**tf.exp
        if not np.all(np.isfinite(col)):
            bad = int(np.flatnonzero(~np.isfinite(col))[0])
            raise LibraryError(
                f"non-finite value in term {render_term(term, library)} at sample {bad}"
            )
        cols[:, j] = col
    return DesignMatrix(cols, library)


def evaluate(library: FunctionLibrary, data) -> DesignMatrix:
    """Evaluate a library on a SnapshotSet-like object (t, x, u, dx)."""
    table = {}
    x = np.atleast_2d(np.asarray(data.x, dtype=float))
    for i in range(x.shape[1]):
        table[("state", i, 0)] = x[:, i]
    if getattr(data, "dx", None) is not None:
        dx = np.asarray(data.dx, dtype=float)
        for i in range(dx.shape[1]):
            table[("dstate", i, 0)] = dx[:, i]
    if getattr(data, "u", None) is not None:
        u = np.asarray(data.u, dtype=float)
        if u.ndim == 1:
            u = u[:, None]
        for i in range(u.shape[1]):
            table[("control", i, 0)] = u[:, i]
    return evaluate_on_table(library, table, m=x.shape[0])


def normalize_columns(design: DesignMatrix) -> DesignMatrix:
    """Scale every column to unit 2-norm, recording the norms."""
    if design.norms is not None:
        raise LibraryError("design is already normalized")
    norms = np.linalg.norm(design.values, axis=0)
    bad = np.flatnonzero(norms < 1e-300)
    if bad.size:
        name = render_term(design.library.terms[bad[0]], design.library)
        raise LibraryError(f"column {bad[0]} ({name}) has zero norm; cannot normalize")
    return DesignMatrix(design.values / norms, design.library, norms)


def unnormalize_columns(design: DesignMatrix) -> DesignMatrix:
    """Undo normalize_columns."""
    if design.norms is None:
        raise LibraryError("design is not normalized")
    return DesignMatrix(design.values * design.norms, design.library, None)


# ---------------------------------------------------------------------------
# Rendering and parsing


def _var_name(f: Factor, library: FunctionLibrary | None, pde_style: bool):
    if library is not None:
        states = library.state_names
        controls = library.control_names
    else:
        states = controls = None

    def sname(i):
        return states[i] if states and i < len(states) else f"x{i + 1}"

    if f.kind == "state":
        return sname(f.var)
    if f.kind == "dstate":
        return f"{sname(f.var)}_t" if pde_style else f"d{sname(f.var)}"
    if f.kind == "control":
        if controls and f.var < len(controls):
            return controls[f.var]
        return f"u{f.var + 1}"
    return f"{sname(f.var)}_{'x' * f.order}"


def _render_combo(coeffs, library):
    parts = []
    for i, (var, c) in enumerate(coeffs):
        name = library.state_names[var] if library and var < len(library.state_names) else f"x{var + 1}"
        mag = "" if abs(c) == 1 else f"{abs(c)}*"
        if i == 0:
            parts.append(("-" if c < 0 else "") + mag + name)
        else:
            parts.append((" - " if c < 0 else " + ") + mag + name)
    return "".join(parts)


def render_term(term: TermDescriptor, library: FunctionLibrary | None = None, pde_style=None):
    """Human-readable form, e.g. ``x1^2*dx2`` or ``sin(phi1 - 2*phi2)*w1^2``."""
    if term.is_constant:
        return "1"
    if pde_style is None:
        pde_style = library.pde_style if library is not None else any(
            f.kind == "spatial" for f in term.factors
        )
    bits = []
    for tf in term.trig:
        s = f"{tf.shape}({_render_combo(tf.coeffs, library)})"
        if tf.exp > 1:
            s += f"^{tf.exp}"
        bits.append(s)
    for f in term.factors:
        s = _var_name(f, library, pde_style)
        if f.exp > 1:
            s += f"^{f.exp}"
        bits.append(s)
    return "*".join(bits)


def _fmt_coeff(c, precision):
    return f"{c:.{precision}g}"


def render_equation(lhs, coefficients, library: FunctionLibrary, precision=6, lhs_name=None):
    """Render ``lhs = sum(coefficients * terms)`` skipping zero entries.

    ``lhs`` may be a TermDescriptor (rendered through the library) or a plain
    string.  ``coefficients`` aligns with the library terms; entries equal to
    zero are dropped; an all-zero right side renders ``= 0``.
    """
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.shape != (len(library.terms),):
        raise LibraryError("coefficient vector length must match the library")
    left = lhs_name or (render_term(lhs, library) if isinstance(lhs, TermDescriptor) else str(lhs))
    parts = []
    for c, term in zip(coefficients, library.terms):
        if c == 0:
            continue
        mag = _fmt_coeff(abs(c), precision)
        body = render_term(term, library)
        piece = mag if term.is_constant else (f"{mag}*{body}" if mag != "1" else body)
        if not parts:
            parts.append(("-" if c < 0 else "") + piece)
        else:
            parts.append((" - " if c < 0 else " + ") + piece)
    return f"{left} = " + ("".join(parts) if parts else "0")


_TRIG_RE = re.compile(r"^(sin|cos)\((.+)\)(?:\^(\d+))?$")
_POW_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)(?:\^(\d+))?$")
_COMBO_PIECE = re.compile(r"^(?:(\d+)\*)?([A-Za-z_][A-Za-z0-9_]*)$")


def _split_product(text):
    """Split on '*' outside parentheses."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "*" and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def _resolve_name(name, state_names, control_names):
    """Map a rendered variable name back to (kind, var, order)."""
    if name in control_names:
        return ("control", control_names.index(name), 0)
    if name in state_names:
        return ("state", state_names.index(name), 0)
    if name.startswith("d") and name[1:] in state_names:
        return ("dstate", state_names.index(name[1:]), 0)
    if "_" in name:
        base, _, suffix = name.rpartition("_")
        if base in state_names:
            if suffix == "t":
                return ("dstate", state_names.index(base), 0)
            if suffix and set(suffix) == {"x"}:
                return ("spatial", state_names.index(base), len(suffix))
    raise LibraryError(f"cannot resolve variable name {name!r}")


def _parse_combo(text, state_names):
    text = text.replace(" ", "")
    pieces = re.split(r"(?=[+-])", text)
    pairs = []
    for piece in pieces:
        if not piece:
            continue
        sign = 1
        if piece[0] in "+-":
            sign = -1 if piece[0] == "-" else 1
            piece = piece[1:]
        m = _COMBO_PIECE.match(piece)
        if not m:
            raise LibraryError(f"cannot parse angle combination piece {piece!r}")
        mag = int(m.group(1)) if m.group(1) else 1
        name = m.group(2)
        if name not in state_names:
            raise LibraryError(f"angle name {name!r} is not a state")
        pairs.append((state_names.index(name), sign * mag))
    merged = {}
    for v, c in pairs:
        merged[v] = merged.get(v, 0) + c
    return merged.items()


def parse_term(text, state_names, control_names=()) -> TermDescriptor:
    """Inverse of render_term for the grammar used by configs and reports.

    Grammar: factors joined by '*'; a factor is ``name``, ``name^k``,
    or ``sin(...)``/``cos(...)`` (optionally ``^k``) of an integer
    combination like ``phi1 - 2*phi2``.  ``1`` is the constant term.
    """
    state_names = tuple(state_names)
    control_names = tuple(control_names)
    text = text.strip()
    if text in ("1", ""):
        return constant_term
    term = constant_term
    for piece in _split_product(text):
        if piece == "1":
            continue
        m = _TRIG_RE.match(piece)
        if m:
            shape, combo_text, exp = m.group(1), m.group(2), int(m.group(3) or 1)
            pairs, sign = canonical_combo(_parse_combo(combo_text, state_names))
            # the canonical representative only differs by column sign
            tf = TrigFactor(shape, pairs, exp)
            term = multiply_terms(term, _term(trig=[tf]))
            continue
        m = _POW_RE.match(piece)
        if not m:
            raise LibraryError(f"cannot parse term piece {piece!r}")
        name, exp = m.group(1), int(m.group(2) or 1)
        kind, var, order = _resolve_name(name, state_names, control_names)
        term = multiply_terms(term, _term([Factor(kind, var, order, exp)]))
    return term

"""Immutable symbolic expression trees, metadata lattices, and the atom registry.

Expressions are plain trees: variables and constants at the leaves,
arithmetic combinators and atom applications inside.  Fixed atom parameters
(vectors, matrices, integer orders, exponents) are baked into the applying
node rather than represented as children, so only manifold-valued arguments
participate in curvature propagation.

Arity, argument kinds, and dimensions are checked when a node is built,
never during analysis.  Nodes are immutable after construction; the
``meta`` slot holds propagated metadata and is excluded from structural
equality.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterator, NamedTuple

import numpy as np

from . import spd
from .errors import (
    DeclarationConflictError,
    DomainError,
    ExpressionError,
    RegistrationConflictError,
    UnknownAtomError,
)


class Sign(Enum):
    POSITIVE = "Positive"
    NEGATIVE = "Negative"
    ANY = "AnySign"


class GCurvature(Enum):
    LINEAR = "GLinear"
    CONVEX = "GConvex"
    CONCAVE = "GConcave"
    UNKNOWN = "GUnknown"


class GMonotonicity(Enum):
    INCREASING = "GIncreasing"
    DECREASING = "GDecreasing"
    ANY = "GAnyMono"


class ECurvature(Enum):
    AFFINE = "Affine"
    CONVEX = "Convex"
    CONCAVE = "Concave"
    UNKNOWN = "UnknownCurvature"


class Definiteness(Enum):
    PD = "PD"
    PSD = "PSD"
    NONE = "none"


@dataclass(frozen=True)
class Manifold:
    """Carrier manifold of a variable; only SPD(d) is supported."""

    kind: str
    dim: int

    def __post_init__(self):
        if self.kind != "SPD":
            raise ExpressionError(f"unsupported manifold kind '{self.kind}'")
        if not isinstance(self.dim, int) or self.dim < 1:
            raise ExpressionError(f"manifold dimension must be a positive integer, got {self.dim!r}")

    def __str__(self):
        return f"SPD({self.dim})"


def SPD(dim: int) -> Manifold:
    """The manifold of symmetric positive definite dim x dim matrices."""
    return Manifold("SPD", int(dim))


class ArgKind(Enum):
    MANIFOLD = "manifold"          # matrix-valued subexpression on the manifold
    SCALAR = "scalar"              # scalar-valued subexpression
    PARAM_MATRIX = "matrix-param"
    PARAM_VECTOR = "vector-param"
    PARAM_VECTORS = "vectors-param"
    PARAM_MATRICES = "matrices-param"
    PARAM_SCALAR = "scalar-param"
    PARAM_INT = "int-param"


EXPR_KINDS = (ArgKind.MANIFOLD, ArgKind.SCALAR)


class EffectiveMeta(NamedTuple):
    sign: Sign
    gcurv: GCurvature
    gmono: GMonotonicity
    ecurv: ECurvature


@dataclass(frozen=True)
class AtomSignature:
    """Registry entry: shape contract plus curvature metadata for one atom.

    ``validate`` receives the manifold argument dimensions and the parameter
    tuple, performs the atom's dimension and domain checks, and returns the
    result dimension (``None`` for scalar results).  ``refine`` may override
    metadata fields that depend on the parameters.
    """

    id: str
    positions: tuple[ArgKind, ...]
    result: str  # "scalar" | "matrix"
    sign: Sign
    gcurv: GCurvature
    gmono: GMonotonicity
    ecurv: ECurvature
    validate: Callable | None = None
    refine: Callable | None = None

    def effective(self, params: tuple, arg_dims: tuple = ()) -> EffectiveMeta:
        meta = EffectiveMeta(self.sign, self.gcurv, self.gmono, self.ecurv)
        if self.refine is not None:
            meta = meta._replace(**self.refine(params, arg_dims))
        return meta

    @property
    def expr_kinds(self) -> tuple[ArgKind, ...]:
        return tuple(k for k in self.positions if k in EXPR_KINDS)


@dataclass(frozen=True)
class NodeMeta:
    sign: Sign | None = None
    gcurv: GCurvature | None = None
    ecurv: ECurvature | None = None


class ParamRef(NamedTuple):
    """A named constant bound for use in an atom parameter slot."""

    name: str | None
    value: object


_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


def _merge_variables(parts) -> dict[str, Manifold]:
    out: dict[str, Manifold] = {}
    for m in parts:
        for name, manifold in m.items():
            seen = out.get(name)
            if seen is not None and seen != manifold:
                raise DeclarationConflictError(
                    f"variable '{name}' used on both {seen} and {manifold}"
                )
            out[name] = manifold
    return out


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


class Expression:
    """Base class for immutable expression nodes."""

    __slots__ = ("_kind", "_dim", "_vars", "meta")

    def _init_base(self, kind: str, dim: int | None, variables: dict, meta):
        self._kind = kind
        self._dim = dim
        self._vars = variables
        self.meta = meta if meta is not None else NodeMeta()

    @property
    def kind(self) -> str:
        """Value kind: "scalar", "matrix", or "param" (parameter-only constant)."""
        return self._kind

    @property
    def dim(self) -> int | None:
        """Matrix dimension for matrix-valued nodes, else None."""
        return self._dim

    @property
    def variables(self) -> dict[str, Manifold]:
        return self._vars

    def children(self) -> tuple["Expression", ...]:
        return ()

    def walk(self, path=()) -> Iterator[tuple[tuple, "Expression"]]:
        """Yield (path, node) pairs in post-order."""
        for i, child in enumerate(self.children()):
            yield from child.walk(path + (i,))
        yield path, self

    def node_count(self) -> int:
        return sum(1 for _ in self.walk())

    # Arithmetic sugar; all scalar-valued per the combinator contracts.
    def __add__(self, other):
        return Add((self, _coerce(other)))

    def __radd__(self, other):
        return Add((_coerce(other), self))

    def __sub__(self, other):
        return Add((self, _coerce(other)), (1.0, -1.0))

    def __rsub__(self, other):
        return Add((_coerce(other), self), (1.0, -1.0))

    def __neg__(self):
        return ScalarMul(-1.0, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return ScalarMul(float(other), self)
        return Mul((self, _coerce(other)))

    def __rmul__(self, other):
        if isinstance(other, (int, float)):
            return ScalarMul(float(other), self)
        return Mul((_coerce(other), self))


def _coerce(x) -> Expression:
    if isinstance(x, Expression):
        return x
    if isinstance(x, (int, float)):
        return ConstScalar(float(x))
    raise ExpressionError(f"cannot use {type(x).__name__} as an expression")


def _require_scalar_children(nodes, what: str):
    for n in nodes:
        if not isinstance(n, Expression):
            raise ExpressionError(f"{what} children must be expressions")
        if n.kind != "scalar":
            raise ExpressionError(
                f"{what} is defined for scalar subexpressions; matrix-valued "
                f"combinations go through the positive_affine atom"
            )


class Variable(Expression):
    """A matrix variable living on an SPD manifold; positive definite by domain."""

    __slots__ = ("name", "manifold")

    def __init__(self, name: str, manifold: Manifold, meta=None):
        if not name or not _IDENT_RE.match(name):
            raise ExpressionError(f"variable name must be an identifier, got {name!r}")
        if not isinstance(manifold, Manifold):
            raise ExpressionError("manifold must be a Manifold instance")
        self.name = name
        self.manifold = manifold
        self._init_base("matrix", manifold.dim, {name: manifold}, meta)

    def __eq__(self, other):
        return (
            isinstance(other, Variable)
            and self.name == other.name
            and self.manifold == other.manifold
        )

    def __hash__(self):
        return hash(("var", self.name, self.manifold))

    def __repr__(self):
        return f"Variable({self.name!r}, {self.manifold})"


class ConstMatrix(Expression):
    """A fixed matrix; usable as an atom parameter or, when square PD, on the manifold."""

    __slots__ = ("values", "definiteness", "name")

    def __init__(self, values, definiteness=Definiteness.NONE, name=None, meta=None):
        if isinstance(definiteness, str):
            definiteness = Definiteness(definiteness)
        a = _readonly(np.asarray(values, dtype=float))
        if a.ndim != 2:
            raise ExpressionError(f"constant matrix must be 2-D, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise DomainError("constant matrix has non-finite entries")
        if definiteness is not Definiteness.NONE:
            _verify_definiteness(a, definiteness)
        self.values = a
        self.definiteness = definiteness
        self.name = name
        square = a.shape[0] == a.shape[1]
        self._init_base("matrix" if square else "param", a.shape[0] if square else None, {}, meta)

    def __eq__(self, other):
        return (
            isinstance(other, ConstMatrix)
            and self.definiteness == other.definiteness
            and self.name == other.name
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash(("constm", self.name, self.values.shape, self.values.tobytes()))

    def __repr__(self):
        label = self.name or f"{self.values.shape[0]}x{self.values.shape[1]}"
        return f"ConstMatrix({label})"


def _verify_definiteness(a: np.ndarray, claim: Definiteness):
    if a.shape[0] != a.shape[1]:
        raise ExpressionError(f"{claim.value} claim requires a square matrix")
    scale = float(np.linalg.norm(a))
    if float(np.linalg.norm(a - a.T)) > spd.ASYM_RTOL * max(scale, spd.PD_FLOOR):
        raise ExpressionError(f"{claim.value} claim requires a symmetric matrix")
    lam = np.linalg.eigvalsh((a + a.T) / 2.0)
    tol = max(spd.PD_RTOL * max(float(lam[-1]), 0.0), spd.PD_FLOOR)
    if claim is Definiteness.PD and float(lam[0]) <= tol:
        raise DomainError(f"PD claim fails: lambda_min={lam[0]:.6g}")
    if claim is Definiteness.PSD and float(lam[0]) < -tol:
        raise DomainError(f"PSD claim fails: lambda_min={lam[0]:.6g}")


class ConstScalar(Expression):
    __slots__ = ("value",)

    def __init__(self, value: float, meta=None):
        v = float(value)
        if not np.isfinite(v):
            raise DomainError("constant scalar must be finite")
        self.value = v
        self._init_base("scalar", None, {}, meta)

    def __eq__(self, other):
        return isinstance(other, ConstScalar) and self.value == other.value

    def __hash__(self):
        return hash(("consts", self.value))

    def __repr__(self):
        return f"ConstScalar({self.value})"


class Add(Expression):
    """Weighted sum of scalar subexpressions."""

    __slots__ = ("terms", "weights")

    def __init__(self, terms, weights=None, meta=None):
        terms = tuple(terms)
        if not terms:
            raise ExpressionError("addition needs at least one term")
        _require_scalar_children(terms, "addition")
        if weights is None:
            weights = (1.0,) * len(terms)
        weights = tuple(float(w) for w in weights)
        if len(weights) != len(terms):
            raise ExpressionError("weights and terms must have equal length")
        if not all(np.isfinite(weights)):
            raise DomainError("addition weights must be finite")
        self.terms = terms
        self.weights = weights
        self._init_base("scalar", None, _merge_variables(t.variables for t in terms), meta)

    def children(self):
        return self.terms

    def __eq__(self, other):
        return (
            isinstance(other, Add)
            and self.weights == other.weights
            and self.terms == other.terms
        )

    def __hash__(self):
        return hash(("add", self.weights, self.terms))

    def __repr__(self):
        return f"Add({len(self.terms)} terms)"


class ScalarMul(Expression):
    """A scalar subexpression scaled by a constant weight."""

    __slots__ = ("weight", "child")

    def __init__(self, weight: float, child: Expression, meta=None):
        w = float(weight)
        if not np.isfinite(w):
            raise DomainError("scale weight must be finite")
        _require_scalar_children((child,), "scaling")
        self.weight = w
        self.child = child
        self._init_base("scalar", None, child.variables, meta)

    def children(self):
        return (self.child,)

    def __eq__(self, other):
        return (
            isinstance(other, ScalarMul)
            and self.weight == other.weight
            and self.child == other.child
        )

    def __hash__(self):
        return hash(("smul", self.weight, self.child))

    def __repr__(self):
        return f"ScalarMul({self.weight}, {self.child!r})"


class Mul(Expression):
    """Product of scalar subexpressions; non-constant products are never certified."""

    __slots__ = ("factors",)

    def __init__(self, factors, meta=None):
        factors = tuple(factors)
        if len(factors) < 2:
            raise ExpressionError("product needs at least two factors")
        _require_scalar_children(factors, "product")
        self.factors = factors
        self._init_base("scalar", None, _merge_variables(f.variables for f in factors), meta)

    def children(self):
        return self.factors

    def __eq__(self, other):
        return isinstance(other, Mul) and self.factors == other.factors

    def __hash__(self):
        return hash(("mul", self.factors))

    def __repr__(self):
        return f"Mul({len(self.factors)} factors)"


class MaxOf(Expression):
    """Pointwise maximum of scalar subexpressions."""

    __slots__ = ("options",)

    def __init__(self, options, meta=None):
        options = tuple(options)
        if not options:
            raise ExpressionError("max needs at least one argument")
        _require_scalar_children(options, "max")
        self.options = options
        self._init_base("scalar", None, _merge_variables(o.variables for o in options), meta)

    def children(self):
        return self.options

    def __eq__(self, other):
        return isinstance(other, MaxOf) and self.options == other.options

    def __hash__(self):
        return hash(("max", self.options))

    def __repr__(self):
        return f"MaxOf({len(self.options)} options)"


def _params_equal(p, q) -> bool:
    if type(p) is not type(q) and not (
        isinstance(p, (int, float)) and isinstance(q, (int, float))
    ):
        return False
    if isinstance(p, np.ndarray):
        return p.shape == q.shape and bool(np.array_equal(p, q))
    if isinstance(p, tuple):
        return len(p) == len(q) and all(_params_equal(a, b) for a, b in zip(p, q))
    return p == q


def _param_token(p):
    if isinstance(p, np.ndarray):
        return ("a", p.shape, p.tobytes())
    if isinstance(p, tuple):
        return ("t",) + tuple(_param_token(x) for x in p)
    return ("v", p)


class AtomApply(Expression):
    """Application of a registered atom to expression arguments plus baked parameters."""

    __slots__ = ("sig", "args", "params", "param_labels", "result_dim")

    def __init__(self, sig, args, params, param_labels, result_dim, meta=None):
        self.sig = sig
        self.args = tuple(args)
        self.params = tuple(params)
        self.param_labels = tuple(param_labels)
        self.result_dim = result_dim
        kind = "scalar" if sig.result == "scalar" else "matrix"
        self._init_base(
            kind,
            result_dim if kind == "matrix" else None,
            _merge_variables(a.variables for a in self.args),
            meta,
        )

    def children(self):
        return self.args

    def effective_meta(self) -> EffectiveMeta:
        dims = tuple(a.dim for a in self.args if a.kind == "matrix")
        return self.sig.effective(self.params, dims)

    def __eq__(self, other):
        return (
            isinstance(other, AtomApply)
            and self.sig.id == other.sig.id
            and self.args == other.args
            and self.param_labels == other.param_labels
            and len(self.params) == len(other.params)
            and all(_params_equal(p, q) for p, q in zip(self.params, other.params))
        )

    def __hash__(self):
        return hash(
            ("atom", self.sig.id, self.args, self.param_labels)
            + tuple(_param_token(p) for p in self.params)
        )

    def __repr__(self):
        return f"AtomApply({self.sig.id}, {len(self.args)} args)"


# ---------------------------------------------------------------------------
# Variable declarations
# ---------------------------------------------------------------------------


class VariableScope:
    """Tracks variable declarations so one name cannot live on two manifolds."""

    def __init__(self):
        self._decl: dict[str, Manifold] = {}

    def declare(self, name: str, manifold: Manifold) -> Variable:
        seen = self._decl.get(name)
        if seen is not None and seen != manifold:
            raise DeclarationConflictError(
                f"variable '{name}' was already declared on {seen}, cannot redeclare on {manifold}"
            )
        self._decl[name] = manifold
        return Variable(name, manifold)

    def clear(self):
        self._decl.clear()


_DEFAULT_SCOPE = VariableScope()


def make_variable(name: str, manifold: Manifold, scope: VariableScope | None = None) -> Variable:
    """Declare (idempotently) and return a manifold variable.

    Redeclaring the same name on a different manifold raises
    ``DeclarationConflictError``.
    """
    return (scope or _DEFAULT_SCOPE).declare(name, manifold)


def clear_declarations():
    """Reset the default declaration scope (startup / test isolation)."""
    _DEFAULT_SCOPE.clear()


def make_const_matrix(values, definiteness=Definiteness.NONE, name=None) -> ConstMatrix:
    """Wrap a fixed matrix, verifying any claimed definiteness numerically."""
    return ConstMatrix(values, definiteness=definiteness, name=name)


# ---------------------------------------------------------------------------
# Atom registry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegisteredAtom:
    sig: AtomSignature
    evaluator: Callable


_REGISTRY: dict[str, RegisteredAtom] = {}


def register_atom(sig: AtomSignature, evaluator: Callable):
    """Add an atom to the registry; ids must be unique."""
    if sig.id in _REGISTRY:
        raise RegistrationConflictError(f"atom '{sig.id}' is already registered")
    if sig.result not in ("scalar", "matrix"):
        raise ExpressionError(f"atom result must be 'scalar' or 'matrix', got {sig.result!r}")
    _REGISTRY[sig.id] = RegisteredAtom(sig=sig, evaluator=evaluator)


def unregister_atom(name: str):
    """Remove a registered atom (test isolation helper)."""
    _REGISTRY.pop(name, None)


def lookup_atom(name: str) -> AtomSignature:
    try:
        return _REGISTRY[name].sig
    except KeyError:
        raise UnknownAtomError(f"unknown atom '{name}'") from None


def atom_evaluator(name: str) -> Callable:
    try:
        return _REGISTRY[name].evaluator
    except KeyError:
        raise UnknownAtomError(f"unknown atom '{name}'") from None


def atom_ids() -> tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


def _require_spd_usable(cm: ConstMatrix):
    # Constants without a PD claim get checked numerically when they stand on
    # the manifold; declared-PD constants were verified at construction.
    if cm.kind != "matrix":
        raise ExpressionError("a manifold argument must be a square matrix")
    if cm.definiteness is Definiteness.NONE:
        _verify_definiteness(cm.values, Definiteness.PD)


def _coerce_param(kind: ArgKind, item):
    if isinstance(item, ConstScalar):
        item = item.value
    if kind is ArgKind.PARAM_INT:
        v = float(item)
        if not v.is_integer():
            raise ExpressionError(f"expected an integer parameter, got {item!r}")
        return int(v)
    if kind is ArgKind.PARAM_SCALAR:
        return float(item)
    if kind is ArgKind.PARAM_VECTOR:
        a = np.asarray(item, dtype=float)
        if a.ndim != 1:
            raise ExpressionError(f"expected a vector parameter, got shape {a.shape}")
        return _readonly(a)
    if kind is ArgKind.PARAM_MATRIX:
        a = np.asarray(item, dtype=float)
        if a.ndim != 2:
            raise ExpressionError(f"expected a matrix parameter, got shape {a.shape}")
        return _readonly(a)
    if kind is ArgKind.PARAM_VECTORS:
        a = np.asarray(item, dtype=float)
        if a.ndim == 1:
            return (_readonly(a),)
        if a.ndim == 2:
            return tuple(_readonly(a[:, j]) for j in range(a.shape[1]))
        raise ExpressionError("expected a vector, list of vectors, or matrix of columns")
    if kind is ArgKind.PARAM_MATRICES:
        if isinstance(item, np.ndarray) and item.ndim == 2:
            return (_readonly(item),)
        mats = tuple(_readonly(np.asarray(m, dtype=float)) for m in item)
        if not mats or any(m.ndim != 2 for m in mats):
            raise ExpressionError("expected a matrix or a non-empty list of matrices")
        return mats
    raise ExpressionError(f"unsupported parameter kind {kind}")


def apply_atom(name: str, items) -> AtomApply:
    """Apply a registered atom to a positional list of arguments.

    Expression slots take expressions (numbers are promoted to scalar
    constants); parameter slots take numbers, arrays, named constants, or
    ``ParamRef`` bindings.  Dimension checks run here, at construction.
    """
    sig = lookup_atom(name)
    items = list(items)
    if len(items) != len(sig.positions):
        raise ExpressionError(
            f"atom '{name}' takes {len(sig.positions)} arguments, got {len(items)}"
        )
    args: list[Expression] = []
    params: list = []
    labels: list = []
    for kind, item in zip(sig.positions, items):
        if kind in EXPR_KINDS:
            if isinstance(item, (int, float)):
                item = ConstScalar(float(item))
            if isinstance(item, ParamRef):
                value = np.asarray(item.value, dtype=float)
                if kind is ArgKind.MANIFOLD and value.ndim == 2:
                    item = ConstMatrix(value, name=item.name)
                else:
                    raise ExpressionError(
                        f"constant '{item.name}' cannot stand in a {kind.value} slot of '{name}'"
                    )
            if not isinstance(item, Expression):
                raise ExpressionError(
                    f"atom '{name}' expected an expression in a {kind.value} slot"
                )
            if kind is ArgKind.MANIFOLD:
                if item.kind != "matrix":
                    raise ExpressionError(
                        f"atom '{name}' expected a matrix-valued argument, got {item.kind}"
                    )
                if isinstance(item, ConstMatrix):
                    _require_spd_usable(item)
            else:
                if item.kind != "scalar":
                    raise ExpressionError(
                        f"atom '{name}' expected a scalar-valued argument, got {item.kind}"
                    )
            args.append(item)
        else:
            label = None
            if isinstance(item, ParamRef):
                label = item.name
                item = item.value
            elif isinstance(item, ConstMatrix):
                label = item.name
                item = item.values
            params.append(_coerce_param(kind, item))
            labels.append(label)
    arg_dims = tuple(a.dim for a in args if a.kind == "matrix")
    if len(set(arg_dims)) > 1:
        raise ExpressionError(
            f"atom '{name}' requires matching argument dimensions, got {arg_dims}"
        )
    result_dim = None
    if sig.validate is not None:
        result_dim = sig.validate(arg_dims, tuple(params))
    elif sig.result == "matrix":
        result_dim = arg_dims[0]
    return AtomApply(sig, args, tuple(params), tuple(labels), result_dim)


# ---------------------------------------------------------------------------
# Numeric evaluation of expressions
# ---------------------------------------------------------------------------


def evaluate(e: Expression, env: dict):
    """Evaluate an expression numerically.

    ``env`` maps variable names to SPD arrays.  Returns a float for scalar
    expressions, a symmetric ndarray for matrix-valued ones.  Domain
    violations raise ``DomainError``.
    """
    if isinstance(e, Variable):
        try:
            value = env[e.name]
        except KeyError:
            raise ExpressionError(f"no value bound for variable '{e.name}'") from None
        arr = np.asarray(value, dtype=float)
        if arr.shape != (e.manifold.dim, e.manifold.dim):
            raise ExpressionError(
                f"value for '{e.name}' has shape {arr.shape}, expected {(e.manifold.dim,) * 2}"
            )
        return arr
    if isinstance(e, ConstMatrix):
        return e.values
    if isinstance(e, ConstScalar):
        return e.value
    if isinstance(e, Add):
        return float(sum(w * evaluate(t, env) for w, t in zip(e.weights, e.terms)))
    if isinstance(e, ScalarMul):
        return float(e.weight * evaluate(e.child, env))
    if isinstance(e, Mul):
        out = 1.0
        for f in e.factors:
            out *= evaluate(f, env)
        return float(out)
    if isinstance(e, MaxOf):
        return float(max(evaluate(o, env) for o in e.options))
    if isinstance(e, AtomApply):
        fn = atom_evaluator(e.sig.id)
        arg_vals = iter([evaluate(a, env) for a in e.args])
        param_vals = iter(e.params)
        ordered = [
            next(arg_vals) if k in EXPR_KINDS else next(param_vals)
            for k in e.sig.positions
        ]
        return fn(*ordered)
    raise ExpressionError(f"cannot evaluate node {type(e).__name__}")

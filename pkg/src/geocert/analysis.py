"""Bottom-up propagation of sign, geodesic curvature, and Euclidean curvature.

Everything runs as a post-order walk over an immutable expression tree.  The
shared composition table, applied to (outer curvature, outer monotonicity)
against an inner curvature, is:

    (convex, increasing)  o  convex   -> convex
    (convex, decreasing)  o  concave  -> convex
    (concave, increasing) o  concave  -> concave
    (concave, decreasing) o  convex   -> concave

A linear inner qualifies as both convex and concave, so composing with it
returns the outer curvature with no monotonicity requirement (pre-composing
with a geodesic-tracing, resp. affine, map costs nothing).  A linear outer
tries both sides and keeps the lattice meet of whatever sticks.  Patterns
outside the table produce the top element, never an error: failure to
certify is a verdict.

The inverse atom is the one special case.  Inversion maps geodesics to
geodesics, so ``inv`` of a geodesically linear argument is itself treated
as linear for everything composed above it; applied to anything curvier its
verdict is unknown.

Products of non-constant scalar subexpressions are never certified: the
midpoint test fails already for trace times negated log-determinant on a
pair of scaled identity matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

from .atoms import POSITIVE_DOMAIN_ATOMS, SCALAR_OUTER_ATOMS, SIGN_RANGE_OVERRIDES
from .errors import DomainError, ShapeError
from .expr import (
    Add,
    AtomApply,
    AtomSignature,
    ConstMatrix,
    ConstScalar,
    Definiteness,
    ECurvature,
    Expression,
    GCurvature,
    GMonotonicity,
    Manifold,
    MaxOf,
    Mul,
    NodeMeta,
    ScalarMul,
    Sign,
    Variable,
)

G = GCurvature
E = ECurvature
M = GMonotonicity


@dataclass(frozen=True)
class TraceEntry:
    """One propagation step: which rule fired at a node and what it produced."""

    path: str
    rule: str
    inputs: str
    output: str

    def to_dict(self):
        return {"path": self.path, "rule": self.rule, "inputs": self.inputs, "output": self.output}


@dataclass(frozen=True)
class AnalysisReport:
    """Root verdicts plus the per-node geodesic-curvature propagation trace."""

    sign: Sign
    gcurvature: GCurvature
    ecurvature: ECurvature
    trace: tuple[TraceEntry, ...]

    def to_dict(self):
        return {
            "sign": self.sign.value,
            "gcurvature": self.gcurvature.value,
            "ecurvature": self.ecurvature.value,
            "trace": [t.to_dict() for t in self.trace],
        }


# ---------------------------------------------------------------------------
# Lattice helpers
# ---------------------------------------------------------------------------

_FLIP = {G.LINEAR: G.LINEAR, G.CONVEX: G.CONCAVE, G.CONCAVE: G.CONVEX, G.UNKNOWN: G.UNKNOWN}
_E2G = {E.AFFINE: G.LINEAR, E.CONVEX: G.CONVEX, E.CONCAVE: G.CONCAVE, E.UNKNOWN: G.UNKNOWN}
_G2E = {v: k for k, v in _E2G.items()}


def gflip(c: GCurvature) -> GCurvature:
    return _FLIP[c]


def gjoin(a: GCurvature, b: GCurvature) -> GCurvature:
    """Least upper bound: GLinear below GConvex and GConcave, GUnknown on top."""
    if a == b:
        return a
    if a is G.LINEAR:
        return b
    if b is G.LINEAR:
        return a
    return G.UNKNOWN


def _compose(outer: GCurvature, mono: GMonotonicity, inner: GCurvature) -> GCurvature:
    if inner is G.UNKNOWN or outer is G.UNKNOWN:
        return G.UNKNOWN
    if inner is G.LINEAR:
        return outer
    sides = (G.CONVEX, G.CONCAVE) if outer is G.LINEAR else (outer,)
    hits = set()
    if G.CONVEX in sides:
        if (inner is G.CONVEX and mono is M.INCREASING) or (
            inner is G.CONCAVE and mono is M.DECREASING
        ):
            hits.add(G.CONVEX)
    if G.CONCAVE in sides:
        if (inner is G.CONCAVE and mono is M.INCREASING) or (
            inner is G.CONVEX and mono is M.DECREASING
        ):
            hits.add(G.CONCAVE)
    if not hits:
        return G.UNKNOWN
    if len(hits) == 2:
        return G.LINEAR  # lattice meet: both inequalities hold
    return hits.pop()


# ---------------------------------------------------------------------------
# Combination rules (public, per the rule tables)
# ---------------------------------------------------------------------------


def combine_add(children) -> GCurvature:
    """Curvature of a weighted sum given (curvature, weight) pairs.

    Negative weights flip convex and concave; GLinear is flip-invariant.
    The result is the lattice join over all terms.
    """
    out = G.LINEAR
    for curv, weight in children:
        eff = gflip(curv) if float(weight) < 0.0 else curv
        out = gjoin(out, eff)
    return out


def combine_max(children) -> GCurvature:
    """Curvature of a pointwise maximum of scalar children.

    The max of a single function is that function.  A max of g-convex or
    g-linear functions is g-convex; anything else is unknown.
    """
    children = list(children)
    if len(children) == 1:
        return children[0]
    if all(c in (G.CONVEX, G.LINEAR) for c in children):
        return G.CONVEX
    return G.UNKNOWN


def compose_scalar(outer: tuple[ECurvature, GMonotonicity], inner: GCurvature) -> GCurvature:
    """Geodesic curvature of a scalar function composed with a scalar subexpression."""
    ecurv, mono = outer
    return _compose(_E2G[ecurv], mono, inner)


def compose_loewner(outer: AtomSignature, inner_curvatures, params: tuple = (),
                    arg_dims: tuple = ()) -> GCurvature:
    """Curvature of an atom applied to matrix-valued arguments.

    The outer atom's geodesic curvature and Loewner monotonicity are composed
    against each argument's curvature; the results are joined over all
    manifold arguments.
    """
    eff = outer.effective(params, arg_dims)
    out = G.LINEAR
    for inner in inner_curvatures:
        out = gjoin(out, _compose(eff.gcurv, eff.gmono, inner))
    return out


def compose_inverse(inner: GCurvature) -> GCurvature:
    """Curvature of ``inv`` applied to a matrix subexpression.

    Inversion maps geodesics to geodesics, so a geodesically linear argument
    keeps the whole composition exact; any other argument is unknown.
    """
    return G.LINEAR if inner is G.LINEAR else G.UNKNOWN


# ---------------------------------------------------------------------------
# Propagation passes
# ---------------------------------------------------------------------------


def _sign_node(e: Expression, child_signs: list[Sign], safe: bool) -> Sign:
    if isinstance(e, Variable):
        return Sign.POSITIVE
    if isinstance(e, ConstScalar):
        return Sign.NEGATIVE if e.value < 0.0 else Sign.POSITIVE
    if isinstance(e, ConstMatrix):
        if e.definiteness in (Definiteness.PD, Definiteness.PSD):
            return Sign.POSITIVE
        return Sign.ANY
    if isinstance(e, Add):
        effective = [
            _flip_sign(s) if w < 0.0 else s
            for s, w in zip(child_signs, e.weights)
            if w != 0.0
        ]
        return _mix_signs(effective)
    if isinstance(e, ScalarMul):
        if e.weight == 0.0:
            return Sign.POSITIVE
        return _flip_sign(child_signs[0]) if e.weight < 0.0 else child_signs[0]
    if isinstance(e, Mul):
        if any(s is Sign.ANY for s in child_signs):
            return Sign.ANY
        negatives = sum(1 for s in child_signs if s is Sign.NEGATIVE)
        return Sign.NEGATIVE if negatives % 2 else Sign.POSITIVE
    if isinstance(e, MaxOf):
        if any(s is Sign.POSITIVE for s in child_signs):
            return Sign.POSITIVE
        if all(s is Sign.NEGATIVE for s in child_signs):
            return Sign.NEGATIVE
        return Sign.ANY
    if isinstance(e, AtomApply):
        if safe and e.sig.id in SIGN_RANGE_OVERRIDES:
            return SIGN_RANGE_OVERRIDES[e.sig.id]
        return e.effective_meta().sign
    return Sign.ANY


def _flip_sign(s: Sign) -> Sign:
    if s is Sign.POSITIVE:
        return Sign.NEGATIVE
    if s is Sign.NEGATIVE:
        return Sign.POSITIVE
    return Sign.ANY


def _mix_signs(signs) -> Sign:
    signs = list(signs)
    if not signs:
        return Sign.POSITIVE
    if all(s is Sign.POSITIVE for s in signs):
        return Sign.POSITIVE
    if all(s is Sign.NEGATIVE for s in signs):
        return Sign.NEGATIVE
    return Sign.ANY


def _sign_map(e: Expression, safe: bool = False) -> dict[tuple, Sign]:
    # safe=True replaces registered signs that overstate the value range, so
    # the composition domain gates never lean on optimistic metadata; the
    # reported signs stay as registered.
    out: dict[tuple, Sign] = {}

    def rec(node, path):
        kids = [rec(c, path + (i,)) for i, c in enumerate(node.children())]
        s = _sign_node(node, kids, safe)
        out[path] = s
        return s

    rec(e, ())
    return out


def _curv_map(e: Expression, signs: dict[tuple, Sign], geodesic: bool, trace=None):
    """Shared engine for geodesic (geodesic=True) and Euclidean curvature."""
    out: dict[tuple, GCurvature | ECurvature] = {}

    def atom_curv(node: AtomApply) -> tuple[GCurvature, GMonotonicity]:
        eff = node.effective_meta()
        if geodesic and node.sig.id not in SCALAR_OUTER_ATOMS:
            return eff.gcurv, eff.gmono
        # Euclidean pass uses Euclidean curvature; scalar outer atoms compose
        # through Euclidean curvature in both passes (their domain is flat).
        return _E2G[eff.ecurv], eff.gmono

    def emit(path, node, rule, inputs, curv: GCurvature):
        out[path] = curv if geodesic else _G2E[curv]
        if trace is not None:
            trace.append(
                TraceEntry(path=_fmt_path(path), rule=rule, inputs=inputs, output=out[path].value)
            )
        return curv

    def rec(node, path) -> GCurvature:
        kids = [rec(c, path + (i,)) for i, c in enumerate(node.children())]
        if not node.variables:
            # Constant along geodesics and straight lines alike.
            return emit(path, node, "constant", "", G.LINEAR)
        if isinstance(node, Variable):
            return emit(path, node, "variable", "", G.LINEAR)
        if isinstance(node, (Add, ScalarMul)):
            weights = node.weights if isinstance(node, Add) else (node.weight,)
            pairs = [(c, w) for c, w in zip(kids, weights) if w != 0.0]
            curv = combine_add(pairs)
            inputs = ", ".join(f"{c.value if geodesic else _G2E[c].value}*{w:+g}" for c, w in pairs)
            return emit(path, node, "signed-sum", inputs, curv)
        if isinstance(node, Mul):
            nonconst = [c for c, f in zip(kids, node.factors) if f.variables]
            inputs = ", ".join((c if geodesic else _G2E[c]).value for c in kids)
            if len(nonconst) > 1:
                return emit(path, node, "scalar-product",
                            inputs + "; note: products of non-constant factors are not certifiable",
                            G.UNKNOWN)
            weight = 1.0
            opaque = False  # constant factor whose value is not a literal
            for f in node.factors:
                if not f.variables:
                    if isinstance(f, ConstScalar):
                        weight *= f.value
                    else:
                        opaque = True
            if opaque:
                return emit(path, node, "scalar-product", inputs, G.UNKNOWN)
            curv = combine_add([(nonconst[0], weight)]) if weight != 0.0 else G.LINEAR
            return emit(path, node, "scalar-product", inputs, curv)
        if isinstance(node, MaxOf):
            curv = combine_max(kids)
            inputs = ", ".join((c if geodesic else _G2E[c]).value for c in kids)
            return emit(path, node, "pointwise-max", inputs, curv)
        if isinstance(node, AtomApply):
            sig = node.sig
            if geodesic and sig.id == "inv":
                curv = compose_inverse(kids[0])
                note = "" if curv is not G.UNKNOWN else (
                    "; note: inversion only reparametrizes geodesically linear arguments"
                )
                return emit(path, node, "inverse-reparametrization",
                            f"inner={kids[0].value}{note}", curv)
            outer_curv, mono = atom_curv(node)
            rule = "scalar-composition" if sig.id in SCALAR_OUTER_ATOMS else "loewner-composition"
            note = ""
            if sig.id in POSITIVE_DOMAIN_ATOMS:
                arg_sign = signs[path + (0,)]
                if arg_sign is not Sign.POSITIVE:
                    even_power = (
                        sig.id == "pow"
                        and float(node.params[0]).is_integer()
                        and int(node.params[0]) % 2 == 0
                    )
                    if even_power:
                        # t^p with even p is convex on all of R, just not
                        # monotone; composition still covers linear inners.
                        mono = M.ANY
                        note = "; note: even power composed without a sign guarantee"
                    else:
                        note = (f"; note: {sig.id} needs a provably nonnegative "
                                f"argument, value range is {arg_sign.value}")
                        inputs = f"outer=({_show(outer_curv, geodesic)},{mono.value}){note}"
                        return emit(path, node, rule, inputs, G.UNKNOWN)
            curv = G.LINEAR
            for c in kids:
                curv = gjoin(curv, _compose(outer_curv, mono, c))
            inputs = (
                f"outer=({_show(outer_curv, geodesic)},{mono.value}); inner="
                + ",".join(_show(c, geodesic) for c in kids)
            )
            return emit(path, node, rule, inputs, curv)
        return emit(path, node, "unmatched", "", G.UNKNOWN)

    rec(e, ())
    return out


def _show(c: GCurvature, geodesic: bool) -> str:
    return c.value if geodesic else _G2E[c].value


def _fmt_path(path: tuple) -> str:
    return "root" + "".join(f".{i}" for i in path)


def _annotate(e: Expression, signs=None, gcurvs=None, ecurvs=None, path=()) -> Expression:
    kids = tuple(
        _annotate(c, signs, gcurvs, ecurvs, path + (i,)) for i, c in enumerate(e.children())
    )
    meta = NodeMeta(
        sign=signs.get(path) if signs else e.meta.sign,
        gcurv=gcurvs.get(path) if gcurvs else e.meta.gcurv,
        ecurv=ecurvs.get(path) if ecurvs else e.meta.ecurv,
    )
    return _rebuild(e, kids, meta)


def _rebuild(e: Expression, kids: tuple, meta: NodeMeta) -> Expression:
    if isinstance(e, Variable):
        return Variable(e.name, e.manifold, meta=meta)
    if isinstance(e, ConstMatrix):
        out = ConstMatrix.__new__(ConstMatrix)
        out.values = e.values
        out.definiteness = e.definiteness
        out.name = e.name
        out._init_base(e.kind, e.dim, {}, meta)
        return out
    if isinstance(e, ConstScalar):
        return ConstScalar(e.value, meta=meta)
    if isinstance(e, Add):
        return Add(kids, e.weights, meta=meta)
    if isinstance(e, ScalarMul):
        return ScalarMul(e.weight, kids[0], meta=meta)
    if isinstance(e, Mul):
        return Mul(kids, meta=meta)
    if isinstance(e, MaxOf):
        return MaxOf(kids, meta=meta)
    if isinstance(e, AtomApply):
        return AtomApply(e.sig, kids, e.params, e.param_labels, e.result_dim, meta=meta)
    raise ShapeError(f"cannot rebuild node {type(e).__name__}")


def propagate_sign(e: Expression) -> Expression:
    """Return a copy of ``e`` with sign metadata on every node."""
    return _annotate(e, signs=_sign_map(e))


def propagate_gcurvature(e: Expression) -> Expression:
    """Return a copy of ``e`` with geodesic curvature metadata on every node."""
    safe = _sign_map(e, safe=True)
    return _annotate(e, signs=_sign_map(e), gcurvs=_curv_map(e, safe, geodesic=True))


def propagate_ecurvature(e: Expression) -> Expression:
    """Return a copy of ``e`` with Euclidean curvature metadata on every node."""
    safe = _sign_map(e, safe=True)
    emap = _curv_map(e, safe, geodesic=False)
    return _annotate(e, signs=_sign_map(e), ecurvs=emap)


def analyze(e: Expression, manifold: Manifold) -> AnalysisReport:
    """Propagate sign and both curvatures; return the verdicts and full trace.

    The expression must be scalar-valued at the root, and every variable must
    live on ``manifold``.
    """
    if e.kind != "scalar":
        raise ShapeError("analysis requires a scalar-valued objective at the root")
    for name, m in e.variables.items():
        if m != manifold:
            raise DomainError(f"variable '{name}' lives on {m}, not on {manifold}")
    signs = _sign_map(e)
    safe_signs = _sign_map(e, safe=True)
    emap = _curv_map(e, safe_signs, geodesic=False)
    trace: list[TraceEntry] = []
    gmap = _curv_map(e, safe_signs, geodesic=True, trace=trace)
    return AnalysisReport(
        sign=signs[()],
        gcurvature=gmap[()],
        ecurvature=emap[()],
        trace=tuple(trace),
    )

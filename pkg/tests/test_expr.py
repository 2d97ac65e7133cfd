import numpy as np
import pytest

import geocert as gc
from geocert.errors import (
    DeclarationConflictError,
    DomainError,
    ExpressionError,
    RegistrationConflictError,
    UnknownAtomError,
)


class TestVariables:
    def test_make_variable_positive_leaf(self, scope):
        x = gc.make_variable("X", gc.SPD(5), scope=scope)
        assert x.kind == "matrix"
        assert x.dim == 5
        assert x.variables == {"X": gc.SPD(5)}

    def test_idempotent_declaration(self, scope):
        a = gc.make_variable("X", gc.SPD(5), scope=scope)
        b = gc.make_variable("X", gc.SPD(5), scope=scope)
        assert a == b

    def test_conflicting_declaration(self, scope):
        gc.make_variable("X", gc.SPD(5), scope=scope)
        with pytest.raises(DeclarationConflictError):
            gc.make_variable("X", gc.SPD(3), scope=scope)

    def test_default_scope_conflict(self):
        gc.make_variable("X", gc.SPD(5))
        with pytest.raises(DeclarationConflictError):
            gc.make_variable("X", gc.SPD(3))

    def test_cross_tree_conflict_detected_structurally(self):
        # Same name on two manifolds must not meet inside one tree.
        x5 = gc.Variable("X", gc.SPD(5))
        x3 = gc.Variable("X", gc.SPD(3))
        with pytest.raises(DeclarationConflictError):
            gc.Add((gc.apply_atom("tr", [x5]), gc.apply_atom("tr", [x3])))

    def test_bad_names(self, scope):
        for bad in ("", "2x", "a b"):
            with pytest.raises(ExpressionError):
                gc.make_variable(bad, gc.SPD(2), scope=scope)


class TestConstants:
    def test_identity_pd_claim(self):
        c = gc.make_const_matrix(np.eye(3), "PD")
        assert c.definiteness == gc.Definiteness.PD

    def test_indefinite_pd_claim_rejected(self):
        with pytest.raises(DomainError):
            gc.make_const_matrix(np.diag([1.0, -1.0]), "PD")

    def test_printed_covariance_is_pd(self):
        from conftest import SIGMA_2

        c = gc.make_const_matrix(SIGMA_2, "PD")
        assert c.dim == 3

    def test_nonfinite_rejected(self):
        with pytest.raises(DomainError):
            gc.make_const_matrix(np.array([[1.0, np.nan], [0.0, 1.0]]))

    def test_psd_claim(self):
        gc.make_const_matrix(np.zeros((2, 2)), "PSD")
        with pytest.raises(DomainError):
            gc.make_const_matrix(np.diag([1.0, -0.5]), "PSD")

    def test_nonsquare_is_parameter_only(self):
        c = gc.make_const_matrix(np.ones((3, 2)))
        assert c.kind == "param"


class TestApplyAtom:
    def test_scalar_atom(self, scope):
        x = gc.make_variable("X", gc.SPD(5), scope=scope)
        node = gc.apply_atom("logdet", [x])
        assert node.kind == "scalar"

    def test_conjugation_result_dim(self, scope):
        x = gc.make_variable("X", gc.SPD(5), scope=scope)
        node = gc.apply_atom("conjugation", [x, np.random.default_rng(0).normal(size=(5, 5))])
        assert node.kind == "matrix"
        assert node.dim == 5

    def test_conjugation_rectangular(self, scope):
        x = gc.make_variable("X", gc.SPD(5), scope=scope)
        node = gc.apply_atom("conjugation", [x, np.random.default_rng(0).normal(size=(5, 2))])
        assert node.dim == 2

    def test_conjugation_rank_deficient(self, scope):
        x = gc.make_variable("X", gc.SPD(3), scope=scope)
        b = np.ones((3, 2))
        with pytest.raises(ExpressionError):
            gc.apply_atom("conjugation", [x, b])

    def test_arity_mismatch(self, scope):
        x = gc.make_variable("X", gc.SPD(5), scope=scope)
        with pytest.raises(ExpressionError):
            gc.apply_atom("logdet", [x, x])

    def test_unknown_atom(self, scope):
        x = gc.make_variable("X", gc.SPD(5), scope=scope)
        with pytest.raises(UnknownAtomError):
            gc.apply_atom("not_an_atom", [x])

    def test_dimension_mismatch(self, scope):
        x = gc.make_variable("X", gc.SPD(3), scope=scope)
        with pytest.raises(ExpressionError):
            gc.apply_atom("quad_form", [np.ones(4), x])

    def test_manifold_slot_requires_pd_constant(self, scope):
        x = gc.make_variable("X", gc.SPD(2), scope=scope)
        with pytest.raises(DomainError):
            gc.apply_atom("sdivergence", [x, gc.make_const_matrix(np.diag([1.0, -1.0]))])
        gc.apply_atom("sdivergence", [x, gc.make_const_matrix(np.diag([1.0, 2.0]))])

    def test_top_k_validation(self, scope):
        x = gc.make_variable("X", gc.SPD(3), scope=scope)
        gc.apply_atom("eigsummax", [x, 3])
        with pytest.raises(ExpressionError):
            gc.apply_atom("eigsummax", [x, 4])
        with pytest.raises(ExpressionError):
            gc.apply_atom("schatten_norm", [x, 0.5])

    def test_hadamard_mask_validation(self, scope):
        x = gc.make_variable("X", gc.SPD(2), scope=scope)
        w = np.array([[1.0, 0.9], [0.9, 1.0]])
        gc.apply_atom("hadamard_product", [x, w])
        with pytest.raises(ExpressionError):
            gc.apply_atom("hadamard_product", [x, np.array([[1.0, 2.0], [2.0, 1.0]])])
        with pytest.raises(ExpressionError):
            gc.apply_atom("hadamard_product", [x, np.array([[1.0, 0.0], [0.0, 0.0]])])

    def test_positive_affine_validation(self, scope):
        x = gc.make_variable("X", gc.SPD(3), scope=scope)
        ys = [np.random.default_rng(1).normal(size=(3, 2))]
        b = np.eye(2)
        node = gc.apply_atom("positive_affine", [x, ys, b, 1])
        assert node.dim == 2
        with pytest.raises(ExpressionError):
            gc.apply_atom("positive_affine", [x, ys, b, 2])
        with pytest.raises(ExpressionError):
            gc.apply_atom("positive_affine", [x, ys, np.diag([1.0, -1.0]), 1])


class TestStructure:
    def test_deep_equality_same_construction(self, scope):
        def build():
            x = gc.Variable("X", gc.SPD(4))
            a = gc.make_const_matrix(np.eye(4), "PD", name="A")
            return gc.apply_atom("sdivergence", [x, a]) + gc.apply_atom("logdet", [x])

        assert build() == build()
        assert hash(build()) == hash(build())

    def test_inequality_on_params(self, scope):
        x = gc.Variable("X", gc.SPD(4))
        assert gc.apply_atom("eigsummax", [x, 2]) != gc.apply_atom("eigsummax", [x, 3])

    def test_scalar_only_combinators(self, scope):
        x = gc.make_variable("X", gc.SPD(3), scope=scope)
        with pytest.raises(ExpressionError):
            gc.Add((x,))
        with pytest.raises(ExpressionError):
            gc.ScalarMul(2.0, x)
        with pytest.raises(ExpressionError):
            gc.MaxOf((x,))

    def test_node_count_and_walk(self, scope):
        x = gc.make_variable("X", gc.SPD(3), scope=scope)
        e = gc.apply_atom("tr", [x]) + gc.apply_atom("logdet", [x])
        # Add, two atoms, two variable leaves
        assert e.node_count() == 5
        paths = [p for p, _ in e.walk()]
        assert paths[-1] == ()

    def test_operator_sugar(self, scope):
        x = gc.make_variable("X", gc.SPD(3), scope=scope)
        t = gc.apply_atom("tr", [x])
        e = 2 * t + 3 - t
        assert e.kind == "scalar"
        assert isinstance(-t, gc.ScalarMul)
        assert isinstance(t * t, gc.Mul)


class TestRegistry:
    def test_catalog_lookup_total(self):
        for name in gc.CATALOG_IDS:
            sig = gc.lookup_atom(name)
            assert sig.id == name
        assert gc.lookup_atom("sdivergence").gcurv == gc.GCurvature.CONVEX

    def test_duplicate_registration_rejected(self):
        sig = gc.lookup_atom("logdet")
        with pytest.raises(RegistrationConflictError):
            gc.register_atom(sig, lambda x: 0.0)

    def test_custom_atom_roundtrip(self, scope):
        sig = gc.AtomSignature(
            id="half_trace",
            positions=(gc.ArgKind.MANIFOLD,),
            result="scalar",
            sign=gc.Sign.POSITIVE,
            gcurv=gc.GCurvature.CONVEX,
            gmono=gc.GMonotonicity.INCREASING,
            ecurv=gc.ECurvature.AFFINE,
        )
        gc.register_atom(sig, lambda x: 0.5 * float(np.trace(x)))
        try:
            x = gc.make_variable("X", gc.SPD(2), scope=scope)
            e = gc.apply_atom("half_trace", [x])
            report = gc.analyze(e, gc.SPD(2))
            assert report.gcurvature == gc.GCurvature.CONVEX
            assert gc.evaluate(e, {"X": np.diag([2.0, 4.0])}) == 3.0
        finally:
            gc.unregister_atom("half_trace")


class TestEvaluate:
    def test_arithmetic(self, scope):
        x = gc.make_variable("X", gc.SPD(2), scope=scope)
        e = 2 * gc.apply_atom("tr", [x]) + 3
        assert gc.evaluate(e, {"X": np.eye(2)}) == 7.0

    def test_max_and_mul(self, scope):
        x = gc.make_variable("X", gc.SPD(2), scope=scope)
        t = gc.apply_atom("tr", [x])
        e = gc.MaxOf((t, gc.ConstScalar(10.0)))
        assert gc.evaluate(e, {"X": np.eye(2)}) == 10.0
        assert gc.evaluate(t * t, {"X": np.eye(2)}) == 4.0

    def test_missing_binding(self, scope):
        x = gc.make_variable("X", gc.SPD(2), scope=scope)
        with pytest.raises(ExpressionError):
            gc.evaluate(gc.apply_atom("tr", [x]), {})

    def test_shape_mismatch(self, scope):
        x = gc.make_variable("X", gc.SPD(2), scope=scope)
        with pytest.raises(ExpressionError):
            gc.evaluate(gc.apply_atom("tr", [x]), {"X": np.eye(3)})

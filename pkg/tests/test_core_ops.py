import logging

import numpy as np
import pytest

from rfi_toolkit.backend.operators import (
    AffineMap,
    AffineSubspace,
    Ball,
    Composition,
    DouglasRachford,
    ForwardBackward,
    GradStep,
    Halfspace,
    Hyperplane,
    Identity,
    OperatorRegistry,
    ProxIndicator,
    ProxL1,
    ProxQuadratic,
    Reflector,
    Regularity,
    RegularityKind,
    Relaxation,
    apply,
    check_averaged_inequality,
    check_nonexpansive_inequality,
    compose,
    douglas_rachford_step,
    fold_regularity,
    forward_backward_step,
    reflect,
    relax,
    transport_discrepancy,
)
from rfi_toolkit.shared.errors import DegenerateDrawError, DimensionMismatchError, NonFiniteInputError


class TestProjectors:
    def test_hyperplane_projection_lands_on_the_set(self, rng):
        op = Hyperplane([1.0, 2.0, -1.0], offset=3.0)
        for _ in range(20):
            y = op(rng.normal(size=3))
            assert abs(op.normal @ y - 3.0) < 1e-12

    def test_anchored_hyperplane(self):
        op = Hyperplane([0.0, 1.0], offset=0.0, anchor=[5.0, 2.0])
        np.testing.assert_allclose(op([1.0, 7.0]), [1.0, 2.0])
        assert op.residual([1.0, 2.0]) == 0.0

    def test_halfspace_keeps_feasible_points(self):
        op = Halfspace([1.0, 0.0], offset=1.0)
        np.testing.assert_array_equal(op([0.5, 3.0]), [0.5, 3.0])
        np.testing.assert_allclose(op([4.0, 3.0]), [1.0, 3.0])
        assert op.residual([4.0, 3.0]) == pytest.approx(3.0)

    def test_ball_projection(self):
        op = Ball([1.0, 1.0], radius=2.0)
        y = op([1.0, 11.0])
        np.testing.assert_allclose(y, [1.0, 3.0])
        np.testing.assert_array_equal(op([1.5, 1.0]), [1.5, 1.0])

    def test_affine_subspace_is_idempotent(self, rng):
        op = AffineSubspace([[1.0, 1.0], [0.0, 1.0], [0.0, 1.0]], anchor=[0.0, 0.0, 1.0])
        x = rng.normal(size=3)
        np.testing.assert_allclose(op(op(x)), op(x), atol=1e-12)

    def test_zero_normal_is_degenerate(self):
        with pytest.raises(DegenerateDrawError):
            Hyperplane([0.0, 0.0])
        with pytest.raises(DegenerateDrawError):
            Halfspace([0.0, 0.0], 1.0)

    def test_projectors_are_averaged_one_half(self):
        for op in (Hyperplane([1.0, 0.0]), Halfspace([1.0, 1.0], 0.0), Ball([0.0, 0.0], 1.0)):
            assert op.regularity == Regularity.averaged(0.5)

    def test_input_validation(self):
        op = Hyperplane([1.0, 0.0])
        with pytest.raises(DimensionMismatchError):
            op([1.0, 2.0, 3.0])
        with pytest.raises(NonFiniteInputError):
            op([np.nan, 1.0])
        with pytest.raises(NonFiniteInputError):
            apply(op, [np.inf, 0.0])


class TestRegularityTags:
    def test_affine_map_tags(self):
        assert AffineMap.scaling(-1.0, 2).regularity.kind == RegularityKind.NONEXPANSIVE
        assert AffineMap.rotation(np.pi / 2).regularity.kind == RegularityKind.NONEXPANSIVE
        assert AffineMap.translation([1.0, 0.0]).regularity.kind == RegularityKind.NONEXPANSIVE
        assert AffineMap.scaling(0.5, 1).regularity == Regularity.averaged(0.75)
        assert AffineMap.constant([3.0]).regularity == Regularity.averaged(0.5)
        assert AffineMap.scaling(2.0, 1).regularity.kind == RegularityKind.NONE

    def test_identity_is_averaged(self):
        assert Identity(3).regularity == Regularity.averaged(0.5)

    def test_gradient_step_tags(self, caplog):
        q = np.diag([1.0, 2.0])
        assert GradStep.quadratic(q, 0.5).regularity == Regularity.averaged(0.5)
        assert GradStep.quadratic(q, 1.0).regularity.kind == RegularityKind.NONEXPANSIVE
        logging.getLogger("rfi_toolkit").propagate = True
        try:
            with caplog.at_level(logging.WARNING, logger="rfi_toolkit"):
                tag = GradStep.quadratic(q, 1.5).regularity
        finally:
            logging.getLogger("rfi_toolkit").propagate = False
        assert tag.kind == RegularityKind.NONE
        assert "exceeds" in caplog.text

    def test_only_per_draw_tags_are_nonexpansive(self):
        assert Regularity.averaged(0.3).is_nonexpansive
        assert Regularity.nonexpansive().is_nonexpansive
        assert not Regularity.contraction_in_expectation(0.5).is_nonexpansive
        assert not Regularity.none().is_nonexpansive

    def test_relaxation_tags(self):
        rotation = AffineMap.rotation(1.0)
        assert Relaxation(rotation, 0.3).regularity == Regularity.averaged(0.3)
        assert Relaxation(Hyperplane([1.0, 0.0]), 0.5).regularity == Regularity.averaged(0.25)
        assert Relaxation(rotation, 1.0).regularity.kind == RegularityKind.NONEXPANSIVE
        with pytest.raises(ValueError):
            Relaxation(rotation, 0.0)

    def test_relax_with_unit_parameter_returns_operator(self):
        op = Ball([0.0], 1.0)
        assert relax(op, 1.0) is op

    def test_composition_fold(self):
        assert fold_regularity([Regularity.averaged(0.5)] * 2).constant == pytest.approx(2.0 / 3.0)
        tags = [Regularity.averaged(0.5), Regularity.nonexpansive()]
        assert fold_regularity(tags).kind == RegularityKind.NONEXPANSIVE
        assert fold_regularity([Regularity.none(), Regularity.averaged(0.5)]).kind == RegularityKind.NONE
        # a long fold saturates at nonexpansive
        assert fold_regularity([Regularity.averaged(0.5)] * 200).kind in (
            RegularityKind.AVERAGED, RegularityKind.NONEXPANSIVE
        )

    def test_reflector_of_projector_is_nonexpansive(self):
        assert Reflector(Halfspace([1.0], 0.0)).regularity.kind == RegularityKind.NONEXPANSIVE

    def test_douglas_rachford_is_averaged_one_half(self):
        op = DouglasRachford(Halfspace([1.0, 0.0], 0.0), Ball([0.0, 0.0], 1.0))
        assert op.regularity == Regularity.averaged(0.5)

    def test_forward_backward_constant(self):
        q = np.diag([1.0, 4.0])
        grad = GradStep.quadratic(q, 0.4)
        op = ForwardBackward(ProxL1(2, 0.4), grad)
        t_l = 0.4 * 4.0
        assert op.regularity.constant == pytest.approx(2.0 / (1.0 + 2.0 / max(t_l, 1.0)))


class TestCombinators:
    def test_composition_applies_right_to_left(self):
        shift = AffineMap.translation([1.0])
        double = AffineMap.scaling(2.0, 1)
        np.testing.assert_allclose(Composition([shift, double])([3.0]), [7.0])
        np.testing.assert_allclose(compose([double, shift])([3.0]), [8.0])

    def test_compose_single_operator(self):
        op = Identity(2)
        assert compose([op]) is op

    def test_empty_composition(self):
        with pytest.raises(ValueError):
            Composition([])

    def test_forward_backward_step_mismatch(self):
        with pytest.raises(ValueError):
            ForwardBackward(ProxL1(2, 0.1), GradStep.quadratic(np.eye(2), 0.2))

    def test_forward_backward_step_value(self):
        grad = GradStep.quadratic(np.eye(1), 0.5, linear=[-4.0])
        prox = ProxL1(1, 0.5, weight=1.0)
        # gradient step: 2 - 0.5 (2 - 4) = 3; soft threshold by 0.5
        np.testing.assert_allclose(forward_backward_step(prox, grad, [2.0]), [2.5])

    def test_douglas_rachford_step_fixes_intersection(self):
        prox_f = Halfspace([1.0, 0.0], 1.0)
        prox_g = Halfspace([0.0, 1.0], 1.0)
        np.testing.assert_allclose(douglas_rachford_step(prox_f, prox_g, [0.0, 0.0]), [0.0, 0.0])

    def test_reflect(self):
        np.testing.assert_allclose(reflect(Halfspace([1.0], 0.0), [2.0]), [-2.0])

    def test_prox_quadratic_solves_linear_system(self):
        q = np.array([[2.0, 0.5], [0.5, 1.0]])
        op = ProxQuadratic(q, step=0.5, linear=[1.0, -1.0])
        y = op([1.0, 2.0])
        np.testing.assert_allclose(y + 0.5 * (q @ y + np.array([1.0, -1.0])), [1.0, 2.0])

    def test_indefinite_quadratics_are_rejected(self):
        # I + tQ is still positive definite here, but (1, 0) would be sent to (2, 0)
        indefinite = np.diag([-1.0, 1.0])
        with pytest.raises(ValueError, match="positive semidefinite"):
            ProxQuadratic(indefinite, step=0.5)
        with pytest.raises(ValueError, match="positive semidefinite"):
            GradStep.quadratic(indefinite, 0.5)

    def test_semidefinite_quadratic_prox_is_nonexpansive(self):
        op = ProxQuadratic(np.diag([0.0, 1.0]), step=0.5)
        assert op.regularity.alpha == 0.5
        assert check_nonexpansive_inequality(op, [1.0, 0.0], [0.0, 0.0]).holds
        np.testing.assert_allclose(op([1.0, 3.0]), [1.0, 2.0])

    def test_prox_indicator_is_the_projector(self):
        ball = Ball([0.0, 0.0], 1.0)
        np.testing.assert_allclose(ProxIndicator(ball, 3.0)([3.0, 4.0]), ball([3.0, 4.0]))

    def test_registry(self):
        assert "hyperplane" in OperatorRegistry.get_kinds()
        op = OperatorRegistry.create("ball", center=[0.0], radius=1.0)
        assert isinstance(op, Ball)
        assert op.kind == "ball"
        with pytest.raises(ValueError):
            OperatorRegistry.create("no_such_operator")


class TestInequalities:
    def test_transport_discrepancy(self):
        assert transport_discrepancy([0.0], [1.0], [1.0], [1.0]) == pytest.approx(1.0)
        assert transport_discrepancy([0.0], [1.0], [1.0], [-1.0]) == pytest.approx(9.0)
        with pytest.raises(DimensionMismatchError):
            transport_discrepancy([0.0], [1.0, 0.0], [0.0], [0.0])

    def test_negation_is_not_averaged(self):
        check = check_averaged_inequality(AffineMap.scaling(-1.0, 1), 0.5, [1.0], [-1.0])
        assert not check.holds
        assert check.slack == pytest.approx(-16.0)
        assert check_nonexpansive_inequality(AffineMap.scaling(-1.0, 1), [1.0], [-1.0]).holds

    @pytest.mark.parametrize("make_op", [
        lambda: Hyperplane([1.0, -2.0, 0.5], 1.0),
        lambda: Halfspace([0.3, 1.0, 0.0], -0.5),
        lambda: Ball([0.0, 1.0, 0.0], 0.7),
        lambda: ProxL1(3, 0.3),
        lambda: ProxQuadratic(np.diag([1.0, 2.0, 3.0]), 0.5),
        lambda: DouglasRachford(Halfspace([1.0, 0.0, 0.0], 0.0), Ball([0.0, 0.0, 0.0], 1.0)),
        lambda: ForwardBackward(ProxL1(3, 0.3), GradStep.quadratic(np.diag([1.0, 2.0, 5.0]), 0.3)),
        lambda: Relaxation(AffineMap(np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])), 0.4),
        lambda: Composition([Hyperplane([1.0, 0.0, 0.0]), Hyperplane([1.0, 1.0, 0.0])]),
    ])
    def test_tagged_operators_satisfy_their_inequality(self, make_op, rng):
        op = make_op()
        alpha = op.regularity.alpha
        assert alpha is not None
        for _ in range(500):
            x = rng.normal(scale=3.0, size=3)
            y = rng.normal(scale=3.0, size=3)
            assert check_averaged_inequality(op, alpha, x, y).holds

    def test_invalid_alpha(self):
        with pytest.raises(ValueError):
            check_averaged_inequality(Identity(1), 1.0, [0.0], [1.0])

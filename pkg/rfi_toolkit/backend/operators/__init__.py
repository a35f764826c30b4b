# rfi_toolkit/backend/operators/__init__.py
"""
Operator types for random function iterations.
"""
from .base import (
    BaseOperator,
    OperatorRegistry,
    Regularity,
    RegularityKind,
    as_point,
)
from .projectors import Hyperplane, Halfspace, Ball, AffineSubspace
from .prox import Identity, AffineMap, ProxQuadratic, ProxL1, ProxIndicator, GradStep
from .combinators import (
    fold_regularity,
    Reflector,
    Relaxation,
    Composition,
    ForwardBackward,
    DouglasRachford,
    apply,
    reflect,
    relax,
    compose,
    forward_backward_step,
    douglas_rachford_step,
)
from .inequalities import (
    DiscrepancyRecord,
    transport_discrepancy,
    check_averaged_inequality,
    check_nonexpansive_inequality,
    check_averaged_in_expectation,
)

# Export operator types, registry and the core operations
__all__ = [
    'BaseOperator',
    'OperatorRegistry',
    'Regularity',
    'RegularityKind',
    'as_point',
    'Hyperplane',
    'Halfspace',
    'Ball',
    'AffineSubspace',
    'Identity',
    'AffineMap',
    'ProxQuadratic',
    'ProxL1',
    'ProxIndicator',
    'GradStep',
    'Reflector',
    'Relaxation',
    'Composition',
    'ForwardBackward',
    'DouglasRachford',
    'fold_regularity',
    'apply',
    'reflect',
    'relax',
    'compose',
    'forward_backward_step',
    'douglas_rachford_step',
    'DiscrepancyRecord',
    'transport_discrepancy',
    'check_averaged_inequality',
    'check_nonexpansive_inequality',
    'check_averaged_in_expectation',
]

"""Sparse and dense tensor algebra over user-defined algebraic structures.

Tensors carry an algebraic structure (monoid, group, semiring, ring) that
supplies the meaning of addition and multiplication in Einstein-notation
expressions; contractions are planned over virtual processor grids with a
communication cost model, and planned executions are replayed in-process
with word accounting.
"""

from .algebra import (
    AlgebraicStructure,
    AxiomReport,
    ElementFunction,
    ElementTransform,
    PathElement,
    StructureError,
    check_axioms,
    make_path_semiring,
    make_standard_ring,
    make_tropical_semiring,
)
from .einsum import (
    ExpressionError,
    ExpressionSpec,
    IndexRole,
    IndexedTensor,
    PlanError,
    apply_function,
    apply_transform,
    classify_indices,
    execute,
    execute_planned,
    execute_reference,
)
from .planner import (
    ContractionPlan,
    CostConfig,
    MemoryLimitError,
    ProblemShape,
    choose_plan,
    enumerate_grids,
    lower_bound,
    predict_costs,
)
from .simgrid import (
    SimReport,
    VirtualWorld,
    balance_report,
    cyclic_assign,
    randomize_indices,
    replay_summa,
)
from .tensor import (
    AS,
    NS,
    SH,
    SY,
    SparsityError,
    SymmetryError,
    Tensor,
    TensorError,
    matrix,
    read_coordinate_text,
    read_matrix_market,
    scalar,
    vector,
    write_coordinate_text,
    write_matrix_market,
)

__version__ = "0.1.0"

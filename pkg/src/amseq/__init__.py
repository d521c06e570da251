"""Sequence calculus for arithmetic means, means at infinity and principal ideals."""
from .expr import (
    Ampliation,
    Dilution,
    Geom,
    LogPow,
    Max,
    Min,
    OmegaPow,
    PiecewiseConstant,
    PrefixOverride,
    Product,
    Scale,
    SeqExpr,
    Sum,
)
from .sequence import (
    Sequence,
    SummabilityError,
    TailSum,
    TailUnavailable,
    am_infinity,
    ampliation,
    arithmetic_mean,
    as_sequence,
    compile_expr,
    dilution,
    eval_at,
    geometric_mean,
    monotonize,
    tail_sum,
    upper_envelope,
)
from .spec_lang import ParseError, parse, to_string
from .classify import (
    ClassReport,
    IndexEstimate,
    analytic_bounds,
    check_delta_half,
    check_infty_regular,
    check_regular,
    cross_check_412,
    matuszewska_indices,
    potter_fit,
    symbolic_summability,
)
from .ideals import (
    PrincipalIdeal,
    TraceVerdict,
    lorentz_member,
    member,
    principal_am,
    principal_am_infty,
    se_member,
    stabilizer_tower,
    three_way_class,
    trace_dimension,
)
from .constructions import (
    ConstructionCertificate,
    ConstructionError,
    dixmier_gap_check,
    example_422,
    example_45_iii,
    lemma_47_block_eta,
    remark_42_witness,
    theorem_78_family,
    theorem_78_xi,
)

__version__ = "0.1.0"

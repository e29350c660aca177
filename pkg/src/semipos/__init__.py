"""Positivity-certified mild-solution solver for semilinear evolution
problems ``y' = Ay + f(y, t)`` on discretized Banach lattices.

The pieces, bottom up: :mod:`semipos.lattice` (product state spaces with
componentwise order), :mod:`semipos.semigroup` (Metzler generators and the
action of ``e^{tA}``), :mod:`semipos.certify` (quasi-positivity shift and
Lipschitz estimation on cone balls), :mod:`semipos.solver` (windowed
fixed-point integration with blow-up detection), :mod:`semipos.models`
(three built-in biological systems), :mod:`semipos.oracle` (independent
test references) and :mod:`semipos.cli` (command-line front door).
"""

from .certify import (
    CertificationReport,
    NonlinearField,
    Violation,
    certify_shift,
    lipschitz_estimate,
    quasi_positivity_report,
    sample_cone_ball,
)
from .errors import (
    CertificationError,
    CertificationMismatchError,
    DimensionMismatchError,
    DomainError,
    OracleDivergenceError,
    ParameterError,
    PicardIterationError,
    PositivityError,
    SemiposError,
)
from .lattice import (
    Grid,
    Scalar,
    SpaceSpec,
    StateVector,
    cone_tolerance,
    in_cone,
    lattice_abs,
    lattice_sup,
    min_component,
    norm,
    norms,
    validate_state,
)
from .models import (
    EpidemicParams,
    OncologyParams,
    PredatorPreyParams,
    build_epidemic,
    build_oncology,
    build_predator_prey,
    epidemic_initial,
    epidemic_shift,
    oncology_initial,
    oncology_shift,
    predator_initial,
    predator_shift,
)
from .semigroup import (
    GeneratorMatrix,
    GrowthBound,
    Propagator,
    apply_semigroup,
    growth_bound,
    is_metzler,
    load_matrix_market,
    save_matrix_market,
    shifted_apply,
)
from .solver import (
    BlowUp,
    CauchyProblem,
    SolveCaches,
    SolverConfig,
    Trajectory,
    WindowResult,
    apply_mild_map,
    contraction_bound,
    exponential_euler_step,
    picard_window,
    solve,
    window_length,
)

__version__ = "0.1.0"

"""Purity-optimal control of a qubit under Lindblad dissipation.

The state is a Bloch vector ``r n_hat``.  Hamiltonian control moves ``n_hat``
freely on a sphere of fixed radius, while dissipation alone sets the radial
speed ``f(n_hat, r)``.  The package finds the directions that extremize ``f``
at each radius (threads), the region where the purity grows (the chimney),
and the Hamiltonians that keep the state on a thread.
"""

from .chimney import ChimneyMesh, chimney_ellipsoid_residual, chimney_feedback, classify_point, trace_chimney
from .critical import (
    AffineCriticalSet,
    CriticalPoint,
    TangencyPoint,
    critical_points_at,
    special_case_critical_sets,
    tangency_points,
)
from .dynamics import (
    bloch_rhs,
    evolve_density,
    lindblad_rhs_density,
    radial_velocity,
    split_velocity,
    transverse_velocity,
)
from .errors import (
    ApogeeReached,
    BlochThreadsError,
    FeedbackError,
    FIsZeroOnThread,
    InvalidStateError,
    KDenominatorVanished,
    RootFindingError,
    SeedMatchingError,
    SingularLambda,
    SystemInputError,
    UnresolvableSpecialCase,
)
from .planner import hamiltonian_for, plan_trajectory, replay_plan
from .survey import SurveyConfig, SurveyStats, count_alternate_threads, run_survey, sample_system
from .system import (
    BlochState,
    LindbladOperatorSet,
    LindbladSystem,
    build_system,
    figure_system,
    system_from_dict,
    system_to_operators,
    validate_system,
)
from .threads import Thread, alternate_threads, feedback, handle_special_cases, integrate_thread, main_threads

__version__ = "0.1.0"

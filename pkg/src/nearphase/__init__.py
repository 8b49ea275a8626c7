"""Two-sphere phaseless near-field scattering at a fixed frequency.

Forward solvers for sphere obstacles (acoustic modal series, electromagnetic
vector wave series) and gridded media (Lippmann-Schwinger), synthesis of the
two-sphere phaseless datasets, the constructive phase-difference recovery
steps, shell eigenvalue certification, and an executable identity-check
harness.
"""

from .acoustic import (
    AcousticConfig,
    AcousticField,
    MediumSample,
    SphereScatterer,
    ball_medium,
    far_field,
    fundamental_solution,
    impedance_sphere,
    radiation_residual,
    solve_medium_ls,
    solve_sphere_plane_wave,
    solve_sphere_point_source,
    sound_soft_sphere,
    total_field_superposed,
)
from .eigencheck import (
    EigenCertificate,
    ShellSpec,
    certify_eigenvalue_free,
    dirichlet_determinant,
    find_eigen_k,
    maxwell_determinants,
)
from .em import (
    DipoleMatrix,
    DipoleSource,
    EmField,
    dipole_matrix,
    em_far_field,
    silver_muller_residual,
    singularity_probe,
    solve_pec_sphere_dipole,
    solve_pec_sphere_plane_wave,
    superposed_electric_total,
    tangential_measurement,
)
from .errors import (
    DomainError,
    IllPosedConfigError,
    InconsistentDataError,
    InsufficientDataError,
    PoleError,
    SingularityError,
    SolverError,
)
from .geometry import SphereGrid, SpherePoint, TangentFrame, great_circle, sphere_grid, tangent_frame
from .phaseless import (
    BranchVerdict,
    ConjugatedField,
    DiscriminatorVerdict,
    PhaseDiffRecord,
    PhaselessDataset,
    classify_branch,
    conjugate_discriminator,
    em_phase_diff_records,
    em_recover_cos_delta,
    em_recover_real_cross,
    phase_diff_records,
    recover_cos_delta,
    recover_real_cross,
    synthesize_acoustic,
    synthesize_em,
)
from .specfun import ModalTable, legendre, modal_table, sph_harmonic
from .verify import (
    CheckReport,
    check_acoustic_reciprocity,
    check_em_mixed_reciprocity,
    check_em_reciprocity,
    check_mixed_reciprocity_acoustic,
    check_nonvanishing,
    uniqueness_premise_witness,
)

__version__ = "0.1.0"

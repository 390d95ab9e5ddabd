"""Conditional expectations and representing functionals on matrix *-algebra inclusions."""

from .algebras import (
    StarAlgebra,
    Subalgebra,
    block_diagonal_algebra,
    block_upper_triangular,
    commutant,
    diagonal_algebra,
    from_spanning,
    full_matrix_algebra,
    generate_star_algebra,
    scalar_algebra,
    unitary_conjugate_algebra,
)
from .expectations import (
    ConditionalExpectation,
    average_to_central,
    choi_matrix,
    commutes_with_modular,
    existence_diagnosis,
    expectation_from_density,
    expectation_to_density,
    preserving_expectation,
    support_ideal_expectation,
)
from .jensen import (
    geometric_mean,
    holder_tracial,
    jensen_measure_suite,
    logmodular_witness,
)
from .representing import (
    DCharacter,
    make_block_character,
    mth_check,
    representing_expectation_state,
    representing_expectation_tracial,
)
from .states import (
    PositiveFunctional,
    centralizer,
    check_support_compression,
    tracial_certificate,
)

__version__ = "0.1.0"

from .unitary import (
    DEFAULT_UNITARITY_TOL,
    RNG_ALGORITHM,
    ComplexMatrix,
    Unitary,
    embed_two_mode,
    haar_random_unitary,
    identity_unitary,
    make_rng,
    unitarity_defect,
)

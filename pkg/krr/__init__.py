from krr.ridge import (
    RESIDUAL_TOL,
    Design,
    RidgeSolution,
    regularization,
    sample_design,
    sample_labels,
    factorize,
    relative_residual,
    solve,
    conditional_mean_solution,
    predict,
)

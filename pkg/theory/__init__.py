from theory.rates import (
    RatePrediction,
    Noise,
    noisy,
    NOISE_FREE,
    UNDERFITTING,
    OVERFITTING,
    INTERPOLATING,
    NOISELESS,
    NO_FLOOR,
    CONSTANT_SIGMA2,
    saturated,
    predict_rates,
    optimal_theta,
    crossover_tau,
    approximation_error_law,
)
from theory.series import SeriesValue, series_value, effective_dimension
from theory.phase import PhaseCell, PhaseDiagram, phase_diagram, phase_frame, write_phase_csv

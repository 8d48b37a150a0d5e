"""Field-of-view analysis for atrous segmentation heads."""

from ._core import (
    DEFAULT_ALPHA,
    REPORT_SCHEMA,
    ConfigError,
    GraphBuildError,
    advise,
    analyze,
    conv2d,
    conv2d_input_grad,
    detect_peaks,
    erf,
    fit_gaussian,
    guideline_table,
    legacy_rate,
    load_tensor,
    mix_seed,
    optimal_rate,
    predict_fcn_d6_span,
    predict_star,
    round_rate,
    run_erf,
    sample_gaussian,
    tensor_random,
    validate_config,
    validate_report,
)

__all__ = [name for name in dir() if not name.startswith("_")]

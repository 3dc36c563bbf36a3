"""Sequential part scheduling for additive-score part-based classifiers.

Fits per-part score likelihoods, computes an optimal part-ordering-and-
stopping policy by backward dynamic programming over (used-parts bitmask,
belief), and runs sequential inference that evaluates parts on demand.
"""

from .errors import (
    ArityMismatchError,
    CapacityError,
    ConfigurationError,
    FormatError,
    InsufficientDataError,
    InsufficientScriptError,
    InvalidActionError,
    InvalidParameterError,
    InvalidRangeError,
    InvalidStateError,
    PartschedError,
    ProviderError,
    UndefinedMetricError,
)
from .likelihoods import (
    DEFAULT_BINS,
    PDF_FLOOR,
    DiscretePdf,
    GaussianKde,
    ScoreLikelihood,
    ScoreSampleSet,
    discretize,
    eval_pdf,
    fit_kde,
    fit_part_likelihood,
    load_likelihoods,
    read_sample_sets,
    save_likelihoods,
    save_sample_sets,
)
from .policy import (
    LABEL_NEG,
    LABEL_POS,
    MAX_PARTS,
    BeliefGrid,
    CostParams,
    Policy,
    action_name,
    action_part,
    belief_update,
    belief_update_unnormalized,
    expected_q,
    is_part_action,
    load_policy,
    part_action,
    query_policy,
    save_policy,
    terminal_stage,
    train_policy,
)
from .inference import (
    NEG_LABEL,
    POS_LABEL,
    DetectionResult,
    DetectorModel,
    InferenceStats,
    MatrixResponseProvider,
    ResponseProvider,
    full_score,
    load_responses,
    load_responses_bin,
    load_responses_csv,
    load_results_csv,
    run_grid,
    run_location,
    save_responses_bin,
    save_responses_csv,
    save_results_csv,
)
from .oracle import (
    PolicyCostEstimate,
    TinyInstance,
    exhaustive_optimal_value,
    exhaustive_value_row,
    random_tiny_instance,
    simulate_policy,
    step_trace,
)
from .synth import (
    ClassificationCounts,
    PrCurve,
    SweepResult,
    SweepRow,
    SyntheticSpec,
    classification_counts,
    compute_rnpe,
    evaluate_operating_point,
    lambda_sweep,
    make_synthetic,
    precision_recall,
    save_sweep_csv,
)

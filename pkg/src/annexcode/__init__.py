"""Random annex codes: network coding over randomly overlapping
generations, with an exact GF(2^m) simulator and an analytical
throughput predictor."""

from .analysis import (
    CollectorProfile,
    OverlapProfile,
    condense,
    condense_real,
    eta,
    eta_exact,
    expected_collection,
    integrand,
    omega,
    omega_asymptotic,
    omega_profile,
    partial_exp_sum,
    predict_expected_packets,
    predict_from_overlap,
    step_requirements,
    weighted_gap,
)
from .codec import CodedPacket, DecodeReport, DecoderState, encode, read_trace, write_trace
from .gfield import GF, get_field
from .layout import (
    CodeParams,
    GenerationLayout,
    LayoutStats,
    build_layout,
    layout_statistics,
    make_disjoint,
    make_head_to_toe,
    make_random_annex,
    sample_annexes,
)
from .simulate import (
    FailureCurve,
    MeanEstimate,
    TrialResult,
    completion_counts,
    empirical_overlap,
    failure_curve,
    full_rank_waiting_mc,
    mean_packets,
    measured_overlap_profile,
    run_trial,
    sample_overlaps,
)

__version__ = "0.1.0"

__all__ = [
    "GF",
    "get_field",
    "CodeParams",
    "GenerationLayout",
    "LayoutStats",
    "build_layout",
    "layout_statistics",
    "make_disjoint",
    "make_head_to_toe",
    "make_random_annex",
    "sample_annexes",
    "CodedPacket",
    "DecodeReport",
    "DecoderState",
    "encode",
    "read_trace",
    "write_trace",
    "CollectorProfile",
    "OverlapProfile",
    "condense",
    "condense_real",
    "eta",
    "eta_exact",
    "expected_collection",
    "integrand",
    "omega",
    "omega_asymptotic",
    "omega_profile",
    "partial_exp_sum",
    "predict_expected_packets",
    "predict_from_overlap",
    "step_requirements",
    "weighted_gap",
    "TrialResult",
    "MeanEstimate",
    "FailureCurve",
    "completion_counts",
    "empirical_overlap",
    "failure_curve",
    "full_rank_waiting_mc",
    "mean_packets",
    "measured_overlap_profile",
    "run_trial",
    "sample_overlaps",
    "__version__",
]

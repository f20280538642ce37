"""Court-localized player tracking, identification, and evaluation toolkit."""

__version__ = "0.1.0"

from .court import (
    CourtModel,
    Homography,
    fit_homography,
    indoor_court,
    outdoor_court,
    project_detection,
    zone_test,
)
from .identity import (
    StartContext,
    assign_indoor_attributes,
    assign_outdoor_attributes,
    js_divergence,
    torso_histogram,
)
from .metrics import (
    MetricReport,
    SimilarityParams,
    evaluate_mot_iou,
    evaluate_track_id,
    id_sim,
    loc_sim,
    pdj,
    pdj_auc,
    solve_assignment,
    torso_length,
)
from .pipeline import (
    PipelineConfig,
    cap_detections_per_frame,
    exclude_detections,
    exclude_tracklets,
    extrapolate_endpoints,
    interpolate_gaps,
    merge_id_switches,
    run_pipeline,
)
from .synth import ScenarioSpec, generate_scenario, oracle_ti_hota
from .trackdata import (
    Detection,
    IdentityAttributes,
    JerseyPrediction,
    PoseFrame,
    SequenceData,
    map_coco17_to_10,
    parse_pose_csv,
    parse_tracking_csv,
    serialize_tracking_csv,
)

__all__ = [
    "CourtModel",
    "Detection",
    "Homography",
    "IdentityAttributes",
    "JerseyPrediction",
    "MetricReport",
    "PipelineConfig",
    "PoseFrame",
    "ScenarioSpec",
    "SequenceData",
    "SimilarityParams",
    "StartContext",
    "assign_indoor_attributes",
    "assign_outdoor_attributes",
    "cap_detections_per_frame",
    "evaluate_mot_iou",
    "evaluate_track_id",
    "exclude_detections",
    "exclude_tracklets",
    "extrapolate_endpoints",
    "fit_homography",
    "generate_scenario",
    "id_sim",
    "indoor_court",
    "interpolate_gaps",
    "js_divergence",
    "loc_sim",
    "map_coco17_to_10",
    "merge_id_switches",
    "oracle_ti_hota",
    "outdoor_court",
    "parse_pose_csv",
    "parse_tracking_csv",
    "pdj",
    "pdj_auc",
    "project_detection",
    "run_pipeline",
    "serialize_tracking_csv",
    "solve_assignment",
    "torso_histogram",
    "torso_length",
    "zone_test",
]

"""Per-class uncertainty calibration evaluation for point-wise segmentation."""
from .audit import AuditFinding, cluster_findings, confident_error_mask, rank_findings
from .baselines import PatchSpec, ece, pavpu
from .errors import InputError
from .metrics import ClassConfig, ConfusionMatrix, FrameRecord, confusion_matrix, iou_per_class, miou
from .sparsification import (
    FractionGrid,
    SparsificationReport,
    ause,
    binned_evaluate,
    evaluate_dataset,
    oracle_ranking,
    sparsification_curve,
    uncertainty_ranking,
)
from .synth import ScenarioSpec, corrupt_labels, generate_scenario
from .uncertainty import (
    LogitGaussianField,
    MCSampleSet,
    class_weights,
    logit_loss,
    logit_loss_grad,
    mean_softmax,
    mutual_information,
    normalize_uncertainty,
    predictive_entropy,
    sample_logits,
)

__version__ = "0.1.0"

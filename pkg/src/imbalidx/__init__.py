"""Flow-based intrusion detection on simulated industrial polling traffic.

The package covers the full experiment loop: packet capture I/O, flow
assembly and feature extraction, imbalanced dataset construction,
minority oversampling, a small feedforward classifier, detection
metrics, a deterministic traffic simulator, and a sweep runner that
ties them together across class-imbalance ratios.
"""

from .dataset import (
    DegenerateSplit,
    InsufficientPool,
    LabeledDataset,
    NormalizationStats,
    build_imbalanced,
    normalize_apply,
    normalize_fit,
    read_dataset_csv,
    required_normals,
    save_dataset,
    split_train_test,
    write_dataset_csv,
)
from .experiment import (
    CellResult,
    ExperimentConfig,
    ExperimentResult,
    experiment_config_from_json,
    run_experiment,
    write_report,
)
from .flows import (
    ATTACK,
    FEATURE_NAMES,
    NORMAL,
    FlowFeatures,
    FlowRecord,
    LabelRule,
    assemble_flows,
    compute_features,
    features_from_packets,
    label_flows,
    read_features_csv,
    read_label_csv,
    to_arrays,
    write_features_csv,
    write_label_csv,
)
from .metrics import (
    ConfusionMatrix,
    MetricsReport,
    accuracy,
    confusion,
    far,
    mcc,
    sensitivity,
    undetected_rate,
)
from .mlp import (
    MlpModel,
    TrainConfig,
    gradient_check,
    init_model,
    load_model,
    predict,
    save_model,
    train,
)
from .packets import (
    PacketRecord,
    Protocol,
    read_packet_csv,
    read_pcap,
    write_packet_csv,
    write_pcap,
)
from .simulate import SimConfig, sim_config_from_json, simulate
from .smote import SmoteConfig, SmoteResult, augment_training_set, replay, smote

__version__ = "0.1.0"

__all__ = [
    "ATTACK",
    "CellResult",
    "ConfusionMatrix",
    "DegenerateSplit",
    "ExperimentConfig",
    "ExperimentResult",
    "FEATURE_NAMES",
    "FlowFeatures",
    "FlowRecord",
    "InsufficientPool",
    "LabelRule",
    "LabeledDataset",
    "MetricsReport",
    "MlpModel",
    "NORMAL",
    "NormalizationStats",
    "PacketRecord",
    "Protocol",
    "SimConfig",
    "SmoteConfig",
    "SmoteResult",
    "TrainConfig",
    "accuracy",
    "assemble_flows",
    "augment_training_set",
    "build_imbalanced",
    "compute_features",
    "confusion",
    "experiment_config_from_json",
    "far",
    "features_from_packets",
    "gradient_check",
    "init_model",
    "label_flows",
    "load_model",
    "mcc",
    "normalize_apply",
    "normalize_fit",
    "predict",
    "read_dataset_csv",
    "read_features_csv",
    "read_label_csv",
    "read_packet_csv",
    "read_pcap",
    "replay",
    "required_normals",
    "run_experiment",
    "save_dataset",
    "save_model",
    "sensitivity",
    "sim_config_from_json",
    "simulate",
    "smote",
    "split_train_test",
    "to_arrays",
    "train",
    "undetected_rate",
    "write_dataset_csv",
    "write_features_csv",
    "write_label_csv",
    "write_packet_csv",
    "write_pcap",
    "write_report",
]

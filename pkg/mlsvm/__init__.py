from .dataset import Dataset, NormalizationParams, load_dataset, save_dataset, normalize_features, stratified_split
from .exceptions import MLSVMError, DataFormatError, DomainError, ValidationError, ModelFileError
from .knn_graph import AffinityGraph, build_knn_graph
from .coarsening import CoarseningConfig, ClassHierarchy, build_hierarchy
from .solver import ModelParams, TrainedModel, train, predict, save_model, load_model
from .model_selection import SearchDomain, TuningResult, tune
from .engine import MultilevelConfig, MultilevelResult, train_multilevel, train_flat, predict_final

__all__ = [
    "Dataset", "NormalizationParams", "load_dataset", "save_dataset", "normalize_features", "stratified_split",
    "MLSVMError", "DataFormatError", "DomainError", "ValidationError", "ModelFileError",
    "AffinityGraph", "build_knn_graph",
    "CoarseningConfig", "ClassHierarchy", "build_hierarchy",
    "ModelParams", "TrainedModel", "train", "predict", "save_model", "load_model",
    "SearchDomain", "TuningResult", "tune",
    "MultilevelConfig", "MultilevelResult", "train_multilevel", "train_flat", "predict_final",
]

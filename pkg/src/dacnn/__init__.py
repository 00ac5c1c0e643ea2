"""Training a small CNN whose confidence tracks input blur, plus the statistics that check it."""
from .augment import AugmentedDataset, blur, expand_dataset, filter_min_q, gaussian_kernel
from .estimators import BlurTransformer, DistortionAwareCNN, IntervalQuantileRegressor
from .evaluate import (EvalRecord, EvalRecords, MetricsReport, accuracy, error_free_rate,
                       error_free_threshold, evaluate_model, metrics_report, spearman)
from .mnist_io import BaseDataset, load_dataset
from .nn import NetworkModel, build_lenet_like, init_parameters, softmax
from .quantile import QuantileFit, empirical_bin_medians, fit_interval_models, fit_quantile_line, pinball_loss
from .rbf import RbfConfig, center_from_target, logit_confidence, rbf_transform, target_estimate
from .trainer import TrainConfig, TrainedModel, load_model, save_model, train

__version__ = "0.1.0"

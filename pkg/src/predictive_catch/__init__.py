"""Predictive hand-eye workbench: blanked ball flights, a synthetic catcher, and
per-horizon LSTM ensembles that predict motor state through the blank."""

from .ballistics import (Trajectory, TrajectoryConfig, blanking_schedule, sample_trajectories,
                         sample_trajectory, solve_ballistic)
from .agent import AgentParams, Trial, simulate_population, simulate_trial
from .features import (FEATURE_NAMES, MOTOR_NAMES, OPTICAL_NAMES, FeaturizedTrial, Normalizer,
                       extract_features, featurize, fit_normalizer, window_dataset)
from .lstm import LSTMParams, backward, gradient_check, predict
from .ensemble import Dataset, ModelSpec, TrainedModel, predict_blank, split_dataset, train_model
from .baselines import LinearModel, MeanPredictor, fit_linear, fit_linear_model, fit_mean
from .analysis import (AblationMatrix, ErrorCurve, ablate_feature, ablation_matrix,
                       behavior_summary, displacement_ratio, mse_by_distance, pursuit_gain,
                       rmse_components)

__version__ = "0.1.0"

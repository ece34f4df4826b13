"""Federated multi-task learning of channel and DoA from BSA labels."""

from .checkpoint import load_checkpoint, save_checkpoint
from .data import (LocalDataset, Sample, build_dataset, channel_from_label, channel_label,
                   imbalanced_counts, observation_features, pool)
from .network import (Architecture, ModelParameters, forward, init_params, loss,
                      loss_and_grad)
from .training import (DESK_TRAINING, PAPER_TRAINING, TRAINING_PROFILES, Mode,
                       TrainingConfig, TrainingDiverged, TrainingReport, federated_round,
                       local_gradient, noisy_transmit, predict_channel_and_doa, train)

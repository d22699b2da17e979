"""Minimal reverse-mode neural networks: MLP, 1D CNN and bidirectional LSTM."""

from hzflux.nn.layers import BiLSTM, Conv1D, Dense, Dropout, Flatten, bilstm_forward, lstm_sequence
from hzflux.nn.net import Net, bilstm, cnn, load_net, mlp, net_from_dict, net_to_dict, save_net
from hzflux.nn.optim import AdamState, TrainingError, TrainResult, adam_step, train

__all__ = [
    "BiLSTM",
    "Conv1D",
    "Dense",
    "Dropout",
    "Flatten",
    "bilstm_forward",
    "lstm_sequence",
    "Net",
    "mlp",
    "cnn",
    "bilstm",
    "save_net",
    "load_net",
    "net_to_dict",
    "net_from_dict",
    "AdamState",
    "adam_step",
    "train",
    "TrainResult",
    "TrainingError",
]

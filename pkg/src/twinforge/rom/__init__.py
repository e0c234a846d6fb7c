"""Non-intrusive neural-ODE reduced-order model."""

from .model import RomModel, load_model, save_model, write_rollout_csv
from .train import TrainConfig, TrainReport, gradient_check, loss_and_grad, new_model, train

__all__ = ["RomModel", "load_model", "save_model", "write_rollout_csv", "TrainConfig", "TrainReport",
           "gradient_check", "loss_and_grad", "new_model", "train"]

"""Experiment orchestration: config, workspace, stages and report."""

from .config import BankSpec, EvalSpec, ExperimentConfig, load_config
from .report import report, run_pipeline
from .stages import Context
from .workspace import Workspace, sim_key

__all__ = ["BankSpec", "EvalSpec", "ExperimentConfig", "load_config", "report", "run_pipeline",
           "Context", "Workspace", "sim_key"]

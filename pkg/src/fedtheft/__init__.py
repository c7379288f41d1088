"""Federated MLP simulator for energy-theft detection on smart-meter data."""

from .cost import CostReport, bandwidth_reduction, centralized_cost, fl_cost
from .dataio import Dataset, NormStats, generate_synthetic, load_csv, write_csv
from .fed import FedConfig, RoundLog, fedavg, run_federated
from .metrics import Metrics, evaluate
from .nn import MlpParams, init_params, param_count

__version__ = "0.1.0"

"""Touch-sensing network physicalizations: from a graph to printable geometry and a delay table."""

from .adjust import AdjustmentReport, LossWeights, TrainConfig, adjust_layout
from .circuit import CircuitSpec, DelayModel, DelayProfile, delay_profile
from .config import PipelineConfig, load_config
from .fabrication import (CalibrationTable, FabricationModel, MaterialProfile,
                          build_fabrication_model, calibration_table, max_resistance,
                          plan_serpentine)
from .layout import Layout3D, LayoutConfig, make_layout
from .network import NetworkDataset, NetworkError, build_network, load_network
from .optimize import OptimizationConfig, optimize
from .pipeline import run_pipeline
from .runtime import ClassifierConfig, classify_touch, simulate_measurement
from .selection import SpanningTree, select_resistor_links

__version__ = "0.1.0"

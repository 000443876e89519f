"""Scale-attention convolution (SCAN) layers on a small NumPy engine."""
from .analysis import filter_decomposition, scale_histogram, truncation_report, xpass_classification
from .data import DatasetSpec, synth_dataset
from .network import SacNetwork, inference_cost
from .sac import SacLayer, absorb, sac_backward, sac_forward
from .scale_space import (ScaleOracleSpec, empirical_scale_peak, gaussian_kernel,
                          heat_equation_residual, normalized_derivative_amplitude, scale_space_rep)
from .serialize import load_model, save_model
from .tensor import conv2d, finite_difference_gradcheck, gap_linear, relu, softmax_cross_entropy
from .training import RmoConfig, TrainConfig, evaluate, rmo_loss, total_loss, train, train_step

__version__ = "0.1.0"

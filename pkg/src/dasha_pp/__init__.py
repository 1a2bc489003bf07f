"""Simulator for the DASHA-PP family of distributed nonconvex optimizers."""

from dasha_pp.compressors import CompressorSpec, SparseMessage, compress, expected_density, omega
from dasha_pp.data import Dataset, NodeShard, load_libsvm, make_synthetic, parse_libsvm, split_equal
from dasha_pp.losses import SoftmaxNonconvexReg, SquaredSigmoid
from dasha_pp.optimizer import (
    DashaConfig, DashaPP, FiniteMVR, Gradient, MVR, OptimizerState, Page, RunRecord, SyncMVR, run,
)
from dasha_pp.participation import ParticipationScheme
from dasha_pp.problem import Problem, SmoothnessEstimates

__version__ = "0.1.0"

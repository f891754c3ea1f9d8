"""Thread coarsening for a subset of OpenCL C.

Parse a kernel, merge work-items with consecutive or gapped coarsening,
predict the resulting load-store units and check the result against the
original with a reference NDRange interpreter.
"""

__version__ = "0.1.0"

from .analysis import classify_divergence, count_ops
from .benchgen import BenchSpec, generate
from .cache import CacheModel, IndexArray, calibrate, generate_indices, simulate_cache
from .coarsen import CoarsenConfig, coarsen, emit_replication, emit_simd
from .errors import (
    BarrierDivergenceError, DataRaceError, ExecutionError, IdDependentBranchError,
    OutOfBoundsError, ParseError, PreconditionError, TCoarsenError, TransformError,
    UnsupportedConstructError,
)
from .interp import BufferSet, ExecResult, LaunchConfig, interpret
from .lsu import LsuReport, analyze
from .nodes import Kernel
from .parser import parse, parse_file
from .printer import print_kernel
from .verify import VerifyResult, verify

__all__ = [
    "BarrierDivergenceError", "BenchSpec", "BufferSet", "CacheModel", "CoarsenConfig",
    "DataRaceError", "ExecResult", "ExecutionError", "IdDependentBranchError",
    "IndexArray", "Kernel", "LaunchConfig", "LsuReport", "OutOfBoundsError",
    "ParseError", "PreconditionError", "TCoarsenError", "TransformError",
    "UnsupportedConstructError", "VerifyResult", "analyze", "calibrate", "classify_divergence",
    "coarsen", "count_ops", "emit_replication", "emit_simd", "generate",
    "generate_indices", "interpret", "parse", "parse_file", "print_kernel",
    "simulate_cache", "verify",
]

"""Hybrid QAM-MPPM modulation toolkit: analysis, simulation and sweeps."""

from .analytic import (
    AnalyticMethod,
    AnalyticResult,
    CapacityError,
    QuadratureError,
    ebn0_at_target,
    pb_cmd,
    pb_imd,
    pe_cmd_ja,
    pe_cmd_sa,
    pe_imd,
)
from .constellation import Constellation, build_constellation, demap_ml, qam_avg_ser
from .link import (
    DEFAULT_RECEIVER,
    ComplexityReport,
    LinkParams,
    ReceiverNoiseParams,
    complexity,
    ebn0_db_from_sigma,
    frame_energies,
    link_from_popt,
    sigma_from_ebn0,
    total_bits,
)
from .mppm import MppmCode, bits_per_mppm, decode_mppm, encode_mppm, make_code
from .simulate import TrialCounters, run_point, run_sweep
from .sweep import ConfigError, SweepSpec, build_spec, parse_config

__all__ = [
    "AnalyticMethod",
    "AnalyticResult",
    "CapacityError",
    "ComplexityReport",
    "ConfigError",
    "Constellation",
    "DEFAULT_RECEIVER",
    "LinkParams",
    "MppmCode",
    "QuadratureError",
    "ReceiverNoiseParams",
    "SweepSpec",
    "TrialCounters",
    "bits_per_mppm",
    "build_constellation",
    "build_spec",
    "complexity",
    "decode_mppm",
    "demap_ml",
    "ebn0_at_target",
    "ebn0_db_from_sigma",
    "encode_mppm",
    "frame_energies",
    "link_from_popt",
    "make_code",
    "parse_config",
    "pb_cmd",
    "pb_imd",
    "pe_cmd_ja",
    "pe_cmd_sa",
    "pe_imd",
    "qam_avg_ser",
    "run_point",
    "run_sweep",
    "sigma_from_ebn0",
    "total_bits",
]

__version__ = "0.1.0"

"""Variable-exponent weak Hardy space toolkit on sampled grids."""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # pragma: no cover - source checkout without install
    __version__ = "0.1.0"

from .grid import Ball, GridFunction, GridSpec, build_scale_stack, read_vgf, write_vgf
from .exponent import make_exponent, validate_log_holder
from .norms import luxemburg_norm, modular, weak_norm

__all__ = ["__version__", "Ball", "GridFunction", "GridSpec", "build_scale_stack", "read_vgf",
           "write_vgf", "make_exponent", "validate_log_holder", "luxemburg_norm", "modular",
           "weak_norm"]

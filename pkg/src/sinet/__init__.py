"""SINet: spatial-squeeze encoder with an information-blocking decoder, in numpy."""

from .blocks import DecoderKind
from .errors import SINetError
from .model import SINet, build_sinet, count_flops, count_params
from .weights import load_weights, save_weights

__all__ = ["DecoderKind", "SINet", "SINetError", "build_sinet", "count_flops", "count_params",
           "load_weights", "save_weights"]

"""Sequential lossless/near-lossless codec for multi-channel integer biosignals."""

from .codec import (AlphabetSpec, CodecConfig, MODE_ADAPTIVE, MODE_FIXED,
                    decode_stream, encode_stream)
from .signalio import SignalMatrix, load_csv, load_raw, synth_mvar
from .topology import CodingTree, SensorLayout, build_geometry_tree, dmst

__version__ = "0.1.0"

__all__ = [
    "AlphabetSpec", "CodecConfig", "MODE_ADAPTIVE", "MODE_FIXED",
    "decode_stream", "encode_stream", "SignalMatrix", "load_csv", "load_raw",
    "synth_mvar", "CodingTree", "SensorLayout", "build_geometry_tree", "dmst",
    "__version__",
]

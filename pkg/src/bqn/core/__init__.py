from bqn.core.bitpack import BitTensor, binary_dot, pack_bits, sign, sign_array, unpack_bits
from bqn.core.layers import (
    ArchitectureError,
    BinaryConv2d,
    BinaryDense,
    LayerSpec,
    ScaleShift,
    SignActivation,
)
from bqn.core.network import (
    BinarizedNetwork,
    FullPrecisionNetwork,
    binarize_params,
    forward,
    forward_reference,
)

__all__ = [
    "ArchitectureError",
    "BinaryConv2d",
    "BinaryDense",
    "BinarizedNetwork",
    "BitTensor",
    "FullPrecisionNetwork",
    "LayerSpec",
    "ScaleShift",
    "SignActivation",
    "binarize_params",
    "binary_dot",
    "forward",
    "forward_reference",
    "pack_bits",
    "sign",
    "sign_array",
    "unpack_bits",
]

"""Model container format (magic "BQN1").

Layout, all little-endian:

    magic           4 bytes  "BQN1"
    format version  u16      (currently 1)
    layer count     u16
    input rank      u8, then input dims as u32 each
    per layer:      kind tag u8, shape fields u32, payload
                    (packed weight words u64; scale/bias float32)
    sections:       tag u8 + length u64 + payload; 0xFF latent weights
                    (float32), 0xFE optimizer state
    footer          CRC32 (u32) of all preceding bytes

Inference-only files simply omit the 0xFF section.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from bqn.core.bitpack import BitTensor
from bqn.core.layers import (
    BinaryConv2d,
    BinaryDense,
    ScaleShift,
    SignActivation,
    fan_in,
    is_weighted,
    out_channels,
    weight_shape,
)
from bqn.core.network import BinarizedNetwork

MAGIC = b"BQN1"
FORMAT_VERSION = 1

KIND_DENSE = 1
KIND_CONV = 2
KIND_SIGN = 3
KIND_SCALESHIFT = 4

SECTION_LATENT = 0xFF
SECTION_OPTIMIZER = 0xFE


class ModelFormatError(ValueError):
    pass


class BadMagicError(ModelFormatError):
    pass


class BadVersionError(ModelFormatError):
    pass


class ChecksumError(ModelFormatError):
    pass


class TruncatedError(ModelFormatError):
    pass


def _pack_words(words: np.ndarray) -> bytes:
    return words.astype("<u8").tobytes()


def _pack_f32(arr: np.ndarray) -> bytes:
    return np.asarray(arr, dtype="<f4").tobytes()


def serialize(
    net: BinarizedNetwork,
    include_latents: bool = True,
    optimizer_state: dict | None = None,
) -> bytes:
    """Encode a network (deterministically) into the container format."""
    net._ensure_fresh()
    out = bytearray()
    out += MAGIC
    out += struct.pack("<HH", FORMAT_VERSION, len(net.layers))
    out += struct.pack("<B", len(net.input_shape))
    out += struct.pack(f"<{len(net.input_shape)}I", *net.input_shape)

    for idx, spec in enumerate(net.layers):
        if isinstance(spec, BinaryDense):
            out += struct.pack("<BII", KIND_DENSE, spec.in_dim, spec.out_dim)
            out += _pack_words(net.packed[idx].words)
        elif isinstance(spec, BinaryConv2d):
            out += struct.pack(
                "<BIIIII",
                KIND_CONV,
                spec.in_channels,
                spec.out_channels,
                spec.kernel_h,
                spec.kernel_w,
                spec.stride,
            )
            out += _pack_words(net.packed[idx].words)
        elif isinstance(spec, SignActivation):
            out += struct.pack("<B", KIND_SIGN)
        elif isinstance(spec, ScaleShift):
            out += struct.pack("<BI", KIND_SCALESHIFT, spec.channels)
            out += _pack_f32(net.scales[idx])
            out += _pack_f32(net.biases[idx])

    if include_latents:
        payload = b"".join(
            _pack_f32(net.latents[idx]) for idx in net.weighted_indices
        )
        out += struct.pack("<BQ", SECTION_LATENT, len(payload))
        out += payload

    if optimizer_state is not None:
        payload = _encode_optimizer(net, optimizer_state)
        out += struct.pack("<BQ", SECTION_OPTIMIZER, len(payload))
        out += payload

    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    return bytes(out)


def _encode_optimizer(net: BinarizedNetwork, state: dict) -> bytes:
    parts = [
        struct.pack(
            "<Qfff",
            int(state["step"]),
            float(state["lr"]),
            float(state["rho"]),
            float(state["eps"]),
        )
    ]
    for idx in net.weighted_indices:
        parts.append(_pack_f32(state["latent_v"][idx]))
    for idx in net.scaleshift_indices:
        parts.append(_pack_f32(state["scale_v"][idx]))
        parts.append(_pack_f32(state["bias_v"][idx]))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedError(
                f"file ends at byte {len(self.data)}, needed {self.pos + n}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def f32(self, count: int) -> np.ndarray:
        raw = self.take(4 * count)
        return np.frombuffer(raw, dtype="<f4").astype(np.float64)

    def words(self, rows: int, n_bits: int) -> np.ndarray:
        wpr = (n_bits + 63) // 64
        raw = self.take(8 * rows * wpr)
        return np.frombuffer(raw, dtype="<u8").reshape(rows, wpr).copy()

    @property
    def remaining(self) -> int:
        return len(self.data) - self.pos


def deserialize(data: bytes) -> BinarizedNetwork:
    net, _ = deserialize_with_state(data)
    return net


def deserialize_with_state(data: bytes) -> tuple[BinarizedNetwork, dict | None]:
    """Decode a container; returns the network and optimizer state if stored."""
    if len(data) < len(MAGIC) + 4 + 4:
        raise TruncatedError(f"file too short ({len(data)} bytes)")
    if data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}")
    stored_crc = struct.unpack("<I", data[-4:])[0]
    actual_crc = zlib.crc32(data[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise ChecksumError(
            f"checksum mismatch: stored {stored_crc:#x}, computed {actual_crc:#x}"
        )

    r = _Reader(data[4:-4])
    version, layer_count = r.unpack("<HH")
    if version != FORMAT_VERSION:
        raise BadVersionError(f"unsupported format version {version}")
    (rank,) = r.unpack("<B")
    input_shape = tuple(r.unpack(f"<{rank}I"))

    layers = []
    packed_words = {}
    scales = {}
    biases = {}
    for idx in range(layer_count):
        (kind,) = r.unpack("<B")
        if kind == KIND_DENSE:
            in_dim, out_dim = r.unpack("<II")
            spec = BinaryDense(in_dim, out_dim)
            packed_words[idx] = r.words(out_dim, in_dim)
        elif kind == KIND_CONV:
            in_c, out_c, kh, kw, stride = r.unpack("<IIIII")
            spec = BinaryConv2d(in_c, out_c, kh, kw, stride)
            packed_words[idx] = r.words(out_c, in_c * kh * kw)
        elif kind == KIND_SIGN:
            spec = SignActivation()
        elif kind == KIND_SCALESHIFT:
            (channels,) = r.unpack("<I")
            spec = ScaleShift(channels)
            scales[idx] = r.f32(channels)
            biases[idx] = r.f32(channels)
        else:
            raise ModelFormatError(f"unknown layer kind tag {kind}")
        layers.append(spec)

    latent_payload = None
    optimizer_payload = None
    while r.remaining > 0:
        tag, length = r.unpack("<BQ")
        payload = r.take(length)
        if tag == SECTION_LATENT:
            latent_payload = payload
        elif tag == SECTION_OPTIMIZER:
            optimizer_payload = payload
        else:
            raise ModelFormatError(f"unknown section tag {tag:#x}")

    latents = {}
    if latent_payload is not None:
        lr = _Reader(latent_payload)
        for idx, spec in enumerate(layers):
            if is_weighted(spec):
                shape = weight_shape(spec)
                latents[idx] = lr.f32(int(np.prod(shape))).reshape(shape)
        if lr.remaining:
            raise ModelFormatError("latent section has trailing bytes")
    else:
        for idx, spec in enumerate(layers):
            if is_weighted(spec):
                bt = BitTensor(
                    (out_channels(spec), fan_in(spec)), packed_words[idx]
                )
                latents[idx] = bt.to_signs().reshape(weight_shape(spec))

    net = BinarizedNetwork(input_shape, layers, latents, scales, biases)

    # The packed bits of record are the stored ones; verify they match the
    # latents we reconstructed or loaded.
    for idx in net.weighted_indices:
        stored = packed_words[idx]
        if not np.array_equal(net.packed[idx].words, stored):
            raise ModelFormatError(
                f"layer {idx}: stored bits disagree with latent signs"
            )

    state = None
    if optimizer_payload is not None:
        sr = _Reader(optimizer_payload)
        step, lr_, rho, eps = sr.unpack("<Qfff")
        state = {
            "step": step,
            "lr": float(lr_),
            "rho": float(rho),
            "eps": float(eps),
            "latent_v": {},
            "scale_v": {},
            "bias_v": {},
        }
        for idx in net.weighted_indices:
            shape = weight_shape(net.layers[idx])
            state["latent_v"][idx] = sr.f32(int(np.prod(shape))).reshape(shape)
        for idx in net.scaleshift_indices:
            ch = net.layers[idx].channels
            state["scale_v"][idx] = sr.f32(ch)
            state["bias_v"][idx] = sr.f32(ch)
        if sr.remaining:
            raise ModelFormatError("optimizer section has trailing bytes")

    return net, state


def save(net: BinarizedNetwork, path, include_latents=True, optimizer_state=None):
    blob = serialize(net, include_latents, optimizer_state)
    with open(path, "wb") as fh:
        fh.write(blob)
    return blob


def load(path) -> BinarizedNetwork:
    with open(path, "rb") as fh:
        return deserialize(fh.read())


def load_with_state(path):
    with open(path, "rb") as fh:
        return deserialize_with_state(fh.read())

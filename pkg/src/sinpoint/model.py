"""Dual-branch inception encoder-decoder for core/delta region segmentation.

A shared five-stage encoder (inception blocks with 2x2 max pooling between
stages, filter schedule 64-128-256-512-1024) feeds two structurally identical
decoder branches (upsample + skip concat + inception, schedule 512-256-128-64),
one ending in a core probability map and one in a delta probability map.
Every filter count can be divided by ``width_divisor`` for desk-scale runs.

Both decoder branches are initialized from the same random draw, so the two
output roles are interchangeable: training with swapped masks produces the
mirrored model.
"""

from __future__ import annotations

import math
import os
import struct
from dataclasses import dataclass

import numpy as np

from .tensor import (
    Tensor,
    concat_channels,
    conv2d,
    dropout,
    maxpool2,
    maxpool3_same,
    relu,
    sigmoid,
    upsample2,
)

ENCODER_FILTERS = (64, 128, 256, 512, 1024)
DECODER_FILTERS = (512, 256, 128, 64)

MODEL_MAGIC = b"CDNETV01"
MODEL_VERSION = 1


class ModelFormatError(ValueError):
    """Raised when a model file has a bad magic, version, or structure."""


class Conv:
    def __init__(self, in_ch: int, out_ch: int, ksize: int, dtype=np.float32):
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.ksize = ksize
        self.weight = Tensor(np.zeros((out_ch, in_ch, ksize, ksize), dtype=dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(out_ch, dtype=dtype), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias)

    def init(self, rng: np.random.Generator) -> None:
        fan_in = self.in_ch * self.ksize * self.ksize
        std = math.sqrt(2.0 / fan_in)
        w = rng.standard_normal(self.weight.data.shape) * std
        self.weight.data[...] = w.astype(self.weight.data.dtype)
        self.bias.data[...] = 0


class InceptionBlock:
    """Four parallel branches, each emitting filters/4 channels:

    p1:        1x1 conv
    p3:        1x1 reduce -> 3x3 conv
    p5:        1x1 reduce -> 3x3 conv -> 3x3 conv (factorized 5x5 field)
    pool_proj: 3x3 stride-1 max pool -> 1x1 conv

    ReLU follows every convolution.  Reductions use max(filters//8, 1)
    channels so narrow desk-scale widths stay valid.
    """

    def __init__(self, in_ch: int, filters: int, dtype=np.float32):
        if filters % 4 != 0:
            raise ValueError(f"inception filter count must be divisible by 4, got {filters}")
        self.in_ch = in_ch
        self.filters = filters
        q = filters // 4
        r = max(filters // 8, 1)
        self.p1 = Conv(in_ch, q, 1, dtype)
        self.p3_reduce = Conv(in_ch, r, 1, dtype)
        self.p3 = Conv(r, q, 3, dtype)
        self.p5_reduce = Conv(in_ch, r, 1, dtype)
        self.p5a = Conv(r, q, 3, dtype)
        self.p5b = Conv(q, q, 3, dtype)
        self.pool_proj = Conv(in_ch, q, 1, dtype)

    def convs(self) -> list[tuple[str, Conv]]:
        return [
            ("p1", self.p1),
            ("p3_reduce", self.p3_reduce),
            ("p3", self.p3),
            ("p5_reduce", self.p5_reduce),
            ("p5a", self.p5a),
            ("p5b", self.p5b),
            ("pool_proj", self.pool_proj),
        ]

    def __call__(self, x: Tensor) -> Tensor:
        b1 = relu(self.p1(x))
        b3 = relu(self.p3(relu(self.p3_reduce(x))))
        b5 = relu(self.p5b(relu(self.p5a(relu(self.p5_reduce(x))))))
        bp = relu(self.pool_proj(maxpool3_same(x)))
        return concat_channels([b1, b3, b5, bp])


class DecoderBranch:
    """Four stages of upsample + skip concat + inception, then the output
    head: a 3x3 conv to 2 channels (ReLU) and a 1x1 conv to 1 channel
    (sigmoid)."""

    def __init__(self, bottom_ch: int, skip_chs: tuple[int, ...], filters: tuple[int, ...], dtype=np.float32):
        self.blocks: list[InceptionBlock] = []
        in_ch = bottom_ch
        for skip_ch, f in zip(skip_chs, filters):
            block = InceptionBlock(in_ch + skip_ch, f, dtype)
            # decoder stage input = upsampled channels + matched encoder channels
            assert block.in_ch == in_ch + skip_ch
            self.blocks.append(block)
            in_ch = f
        self.head3 = Conv(filters[-1], 2, 3, dtype)
        self.head1 = Conv(2, 1, 1, dtype)

    def convs(self) -> list[tuple[str, Conv]]:
        out = []
        for i, block in enumerate(self.blocks, start=1):
            out.extend((f"d{i}.{name}", conv) for name, conv in block.convs())
        out.append(("head3", self.head3))
        out.append(("head1", self.head1))
        return out

    def __call__(self, bottom: Tensor, skips: list[Tensor]) -> Tensor:
        h = bottom
        for block, skip in zip(self.blocks, skips):
            h = block(concat_channels([upsample2(h), skip]))
        return sigmoid(self.head1(relu(self.head3(h))))


class CoreDeltaNet:
    """Shared encoder, two symmetric decoder branches (core and delta)."""

    def __init__(
        self,
        width_divisor: int = 1,
        dropout_rate: float = 0.5,
        seed: int | None = 0,
        dtype=np.float32,
    ):
        enc_filters = _divided_filters(ENCODER_FILTERS, width_divisor)
        dec_filters = _divided_filters(DECODER_FILTERS, width_divisor)
        self.width_divisor = width_divisor
        self.dropout_rate = dropout_rate
        self.dtype = dtype

        self.encoder: list[InceptionBlock] = []
        in_ch = 1
        for f in enc_filters:
            self.encoder.append(InceptionBlock(in_ch, f, dtype))
            in_ch = f
        skip_chs = tuple(reversed(enc_filters[:4]))  # encoder stages 4,3,2,1
        self.core_branch = DecoderBranch(enc_filters[4], skip_chs, dec_filters, dtype)
        self.delta_branch = DecoderBranch(enc_filters[4], skip_chs, dec_filters, dtype)
        if seed is not None:
            init_weights(self, seed)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        items: list[tuple[str, Tensor]] = []
        for i, block in enumerate(self.encoder, start=1):
            for name, conv in block.convs():
                items.append((f"enc{i}.{name}.weight", conv.weight))
                items.append((f"enc{i}.{name}.bias", conv.bias))
        for branch_name, branch in (("core", self.core_branch), ("delta", self.delta_branch)):
            for name, conv in branch.convs():
                items.append((f"{branch_name}.{name}.weight", conv.weight))
                items.append((f"{branch_name}.{name}.bias", conv.bias))
        return items

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def parameter_count(self) -> int:
        return sum(t.data.size for t in self.parameters())

    def forward(
        self,
        image: Tensor,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> tuple[Tensor, Tensor]:
        if image.data.ndim != 4 or image.data.shape[1] != 1:
            raise ValueError(f"expected a (B, 1, H, W) image tensor, got shape {image.data.shape}")
        _, _, h, w = image.data.shape
        if h % 16 or w % 16:
            raise ValueError(
                f"image spatial dims {h}x{w} must be multiples of 16; use pad_image first"
            )
        skips: list[Tensor] = []
        x = image
        for block in self.encoder[:4]:
            e = block(x)
            skips.append(e)
            x, _ = maxpool2(e)
        bottleneck = self.encoder[4](x)
        bottleneck = dropout(bottleneck, self.dropout_rate, training, rng)
        skips_rev = list(reversed(skips))
        core = self.core_branch(bottleneck, skips_rev)
        delta = self.delta_branch(bottleneck, skips_rev)
        return core, delta


def _divided_filters(filters: tuple[int, ...], width_divisor: int) -> tuple[int, ...]:
    if width_divisor < 1:
        raise ValueError(f"width_divisor must be >= 1, got {width_divisor}")
    out = []
    for f in filters:
        if f % width_divisor:
            raise ValueError(f"width_divisor {width_divisor} does not divide filter count {f}")
        d = f // width_divisor
        if d % 4:
            raise ValueError(
                f"width_divisor {width_divisor} leaves filter count {d} not divisible by 4"
            )
        out.append(d)
    return tuple(out)


def init_weights(model: CoreDeltaNet, seed: int) -> None:
    """He-normal conv weights (std sqrt(2/fan_in)), zero biases.

    The encoder and a single branch template are drawn from the seeded
    stream; both decoder branches copy the template so they start identical.
    """
    rng = np.random.default_rng(seed)
    for block in model.encoder:
        for _, conv in block.convs():
            conv.init(rng)
    for (_, c_conv), (_, d_conv) in zip(model.core_branch.convs(), model.delta_branch.convs()):
        c_conv.init(rng)
        d_conv.weight.data[...] = c_conv.weight.data
        d_conv.bias.data[...] = c_conv.bias.data


# ---------------------------------------------------------------------------
# padding


@dataclass(frozen=True)
class PadRecord:
    width: int
    height: int


def pad_image(image: np.ndarray, dtype=np.float32) -> tuple[Tensor, PadRecord]:
    """Zero-pad a grayscale (H, W) image on the right/bottom to multiples of 16.

    Pixel (x, y) keeps its coordinates; the record holds the original dims.
    """
    if image.ndim != 2:
        raise ValueError(f"pad_image expects a 2-d grayscale image, got shape {image.shape}")
    h, w = image.shape
    if h < 16 or w < 16:
        raise ValueError(f"image must be at least 16x16, got {w}x{h}")
    h16 = ((h + 15) // 16) * 16
    w16 = ((w + 15) // 16) * 16
    padded = np.zeros((h16, w16), dtype=dtype)
    padded[:h, :w] = image
    return Tensor(padded[None, None]), PadRecord(width=w, height=h)


def crop_output(tensor_map: Tensor, record: PadRecord) -> Tensor:
    """Top-left crop back to the original dims recorded by pad_image."""
    _, _, h, w = tensor_map.data.shape
    if record.height > h or record.width > w:
        raise ValueError(
            f"crop record {record.width}x{record.height} exceeds map dims {w}x{h}"
        )
    return Tensor(tensor_map.data[:, :, : record.height, : record.width].copy())


# ---------------------------------------------------------------------------
# serialization


def save_model(model: CoreDeltaNet, path: str) -> None:
    """Binary format: magic, version, width_divisor, then named f32 tensors.

    Written atomically (tmp file + rename); the round trip is bitwise exact.
    """
    params = model.named_parameters()
    chunks = [MODEL_MAGIC, struct.pack("<II", MODEL_VERSION, model.width_divisor)]
    chunks.append(struct.pack("<I", len(params)))
    for name, tensor in params:
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(tensor.data, dtype=np.float32)
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(arr.tobytes(order="C"))
    blob = b"".join(chunks)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(blob)
    os.replace(tmp, path)


def load_model(path: str, dropout_rate: float = 0.5) -> CoreDeltaNet:
    with open(path, "rb") as fh:
        blob = fh.read()
    view = memoryview(blob)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise ModelFormatError(f"model file truncated at byte {pos} (wanted {n} more)")
        out = view[pos : pos + n]
        pos += n
        return out

    if bytes(take(len(MODEL_MAGIC))) != MODEL_MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    version, width_divisor = struct.unpack("<II", take(8))
    if version != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    (count,) = struct.unpack("<I", take(4))

    model = CoreDeltaNet(width_divisor=width_divisor, dropout_rate=dropout_rate, seed=None)
    expected = dict(model.named_parameters())
    if count != len(expected):
        raise ModelFormatError(f"model file has {count} tensors, architecture needs {len(expected)}")
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        n_items = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(take(4 * n_items), dtype="<f4").reshape(shape)
        target = expected.get(name)
        if target is None:
            raise ModelFormatError(f"unknown tensor name {name!r} in model file")
        if target.data.shape != data.shape:
            raise ModelFormatError(
                f"tensor {name!r} has shape {data.shape}, architecture expects {target.data.shape}"
            )
        target.data[...] = data
    if pos != len(view):
        raise ModelFormatError(f"{len(view) - pos} trailing bytes after last tensor")
    return model

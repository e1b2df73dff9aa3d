import math
import os

import numpy as np
import pytest

from sinpoint.model import (
    DECODER_FILTERS,
    ENCODER_FILTERS,
    CoreDeltaNet,
    InceptionBlock,
    ModelFormatError,
    PadRecord,
    crop_output,
    init_weights,
    load_model,
    pad_image,
    save_model,
)
from sinpoint.tensor import Tensor, backward, bce_loss, add

from .oracles import conv2d_naive


def small_image(shape=(1, 1, 16, 16), seed=0):
    return Tensor(np.random.default_rng(seed).random(shape, dtype=np.float32))


# ---------------------------------------------------------------------------
# inception block


def test_inception_output_shape():
    block = InceptionBlock(1, 64)
    for _, conv in block.convs():
        conv.init(np.random.default_rng(0))
    out = block(small_image((1, 1, 16, 16)))
    assert out.data.shape == (1, 64, 16, 16)


def test_inception_rejects_bad_filter_count():
    with pytest.raises(ValueError, match="divisible by 4"):
        InceptionBlock(1, 30)


def test_inception_zero_weights_zero_output():
    block = InceptionBlock(2, 8)  # weights default to zero
    out = block(small_image((1, 2, 8, 8)))
    assert np.all(out.data == 0)


def test_inception_branch_slices_match_independent_oracles():
    rng = np.random.default_rng(3)
    block = InceptionBlock(2, 8)
    for _, conv in block.convs():
        conv.init(rng)
    x = np.random.default_rng(4).random((1, 2, 6, 6)).astype(np.float32)
    out = block(Tensor(x)).data

    def naive_conv_relu(inp, conv):
        return np.maximum(conv2d_naive(inp, conv.weight.data, conv.bias.data), 0)

    q = 2  # filters // 4
    b1 = naive_conv_relu(x, block.p1)
    np.testing.assert_allclose(out[:, 0:q], b1, atol=1e-5)
    b3 = naive_conv_relu(naive_conv_relu(x, block.p3_reduce), block.p3)
    np.testing.assert_allclose(out[:, q : 2 * q], b3, atol=1e-5)
    b5 = naive_conv_relu(
        naive_conv_relu(naive_conv_relu(x, block.p5_reduce), block.p5a), block.p5b
    )
    np.testing.assert_allclose(out[:, 2 * q : 3 * q], b5, atol=1e-5)
    # pool branch: 3x3 stride-1 max windows then 1x1 conv
    h, w = x.shape[2:]
    pooled = np.zeros_like(x)
    for y in range(h):
        for xx in range(w):
            pooled[:, :, y, xx] = x[:, :, max(0, y - 1) : y + 2, max(0, xx - 1) : xx + 2].max(
                axis=(2, 3)
            )
    bp = naive_conv_relu(pooled, block.pool_proj)
    np.testing.assert_allclose(out[:, 3 * q : 4 * q], bp, atol=1e-5)


# ---------------------------------------------------------------------------
# forward contract


def test_forward_shape_and_range():
    model = CoreDeltaNet(width_divisor=16, seed=0)
    core, delta = model.forward(small_image((2, 1, 32, 48)))
    for out in (core, delta):
        assert out.data.shape == (2, 1, 32, 48)
        assert np.all(out.data > 0) and np.all(out.data < 1)


def test_forward_rejects_bad_dims():
    model = CoreDeltaNet(width_divisor=16, seed=0)
    with pytest.raises(ValueError, match="pad_image"):
        model.forward(small_image((1, 1, 20, 32)))
    with pytest.raises(ValueError, match="B, 1, H, W"):
        model.forward(small_image((1, 2, 16, 16)))


def test_forward_inference_deterministic():
    model = CoreDeltaNet(width_divisor=16, seed=1)
    x = small_image(seed=5)
    c1, d1 = model.forward(x)
    c2, d2 = model.forward(x)
    np.testing.assert_array_equal(c1.data, c2.data)
    np.testing.assert_array_equal(d1.data, d2.data)


def test_forward_dropout_only_when_training():
    model = CoreDeltaNet(width_divisor=16, dropout_rate=0.5, seed=1)
    x = small_image(seed=6)
    c_inf, _ = model.forward(x, training=False)
    c_tr, _ = model.forward(x, training=True, rng=np.random.default_rng(0))
    assert not np.array_equal(c_inf.data, c_tr.data)


def test_width_divisor_validation():
    with pytest.raises(ValueError, match="divide"):
        CoreDeltaNet(width_divisor=3, seed=None)
    with pytest.raises(ValueError, match="divisible by 4"):
        CoreDeltaNet(width_divisor=32, seed=None)


@pytest.mark.parametrize("divisor", [1, 2, 4, 8, 16])
def test_skip_link_channel_accounting(divisor):
    model = CoreDeltaNet(width_divisor=divisor, seed=None)
    enc = [f // divisor for f in ENCODER_FILTERS]
    dec = [f // divisor for f in DECODER_FILTERS]
    for branch in (model.core_branch, model.delta_branch):
        in_ch = enc[4]
        for block, skip_ch, f in zip(branch.blocks, reversed(enc[:4]), dec):
            assert block.in_ch == in_ch + skip_ch
            assert block.filters == f
            in_ch = f
        assert branch.head3.in_ch == dec[-1] and branch.head3.out_ch == 2
        assert branch.head1.in_ch == 2 and branch.head1.out_ch == 1


# ---------------------------------------------------------------------------
# initialization


def test_init_deterministic_per_seed():
    a = CoreDeltaNet(width_divisor=16, seed=7)
    b = CoreDeltaNet(width_divisor=16, seed=7)
    c = CoreDeltaNet(width_divisor=16, seed=8)
    for (_, ta), (_, tb) in zip(a.named_parameters(), b.named_parameters()):
        np.testing.assert_array_equal(ta.data, tb.data)
    assert any(
        not np.array_equal(ta.data, tc.data)
        for (_, ta), (_, tc) in zip(a.named_parameters(), c.named_parameters())
    )


def test_init_weight_std_matches_he_normal():
    model = CoreDeltaNet(width_divisor=4, seed=11)
    checked = 0
    for block in model.encoder:
        for _, conv in block.convs():
            fan_in = conv.in_ch * conv.ksize**2
            if fan_in < 256:
                continue
            std = float(conv.weight.data.std())
            assert std == pytest.approx(math.sqrt(2.0 / fan_in), rel=0.10)
            checked += 1
    assert checked >= 3
    for block in model.encoder:
        for _, conv in block.convs():
            assert np.all(conv.bias.data == 0)


def test_init_branches_start_identical():
    model = CoreDeltaNet(width_divisor=16, seed=3)
    for (_, c_conv), (_, d_conv) in zip(
        model.core_branch.convs(), model.delta_branch.convs()
    ):
        np.testing.assert_array_equal(c_conv.weight.data, d_conv.weight.data)


def test_encoder_gradients_shared_by_both_branches():
    model = CoreDeltaNet(width_divisor=16, seed=4)
    x = small_image(seed=9)
    target = Tensor(np.zeros((1, 1, 16, 16), dtype=np.float32))

    def encoder_grads(include_delta):
        for p in model.parameters():
            p.grad = None
        core, delta = model.forward(x)
        loss = bce_loss(core, target)
        if include_delta:
            loss = add(loss, bce_loss(delta, target))
        backward(loss)
        return [conv.weight.grad.copy() for _, conv in model.encoder[0].convs()]

    both = encoder_grads(include_delta=True)
    core_only = encoder_grads(include_delta=False)
    assert any(not np.allclose(a, b) for a, b in zip(both, core_only))


def test_dual_branch_swap_symmetry():
    # identical branch init + swapped targets => mirrored gradients, exactly
    model = CoreDeltaNet(width_divisor=16, seed=12)
    x = small_image(seed=13)
    m1 = Tensor((np.random.default_rng(14).random((1, 1, 16, 16)) < 0.2).astype(np.float32))
    m2 = Tensor((np.random.default_rng(15).random((1, 1, 16, 16)) < 0.2).astype(np.float32))

    def branch_grads(core_target, delta_target):
        for p in model.parameters():
            p.grad = None
        core, delta = model.forward(x)
        backward(add(bce_loss(core, core_target), bce_loss(delta, delta_target)))
        core_g = [conv.weight.grad.copy() for _, conv in model.core_branch.convs()]
        delta_g = [conv.weight.grad.copy() for _, conv in model.delta_branch.convs()]
        enc_g = [conv.weight.grad.copy() for _, conv in model.encoder[0].convs()]
        return core_g, delta_g, enc_g

    core_a, delta_a, enc_a = branch_grads(m1, m2)
    core_b, delta_b, enc_b = branch_grads(m2, m1)
    for ga, gb in zip(core_a, delta_b):
        np.testing.assert_array_equal(ga, gb)
    for ga, gb in zip(delta_a, core_b):
        np.testing.assert_array_equal(ga, gb)
    for ga, gb in zip(enc_a, enc_b):
        np.testing.assert_array_equal(ga, gb)


# ---------------------------------------------------------------------------
# padding


def test_pad_image_355x390():
    img = np.random.default_rng(16).random((390, 355)).astype(np.float32)  # H=390, W=355
    padded, record = pad_image(img)
    assert padded.data.shape == (1, 1, 400, 368)
    assert record == PadRecord(width=355, height=390)
    np.testing.assert_array_equal(padded.data[0, 0, :390, :355], img)
    assert np.all(padded.data[0, 0, 390:, :] == 0)
    assert np.all(padded.data[0, 0, :, 355:] == 0)


def test_pad_image_already_multiple():
    img = np.random.default_rng(17).random((384, 352)).astype(np.float32)
    padded, record = pad_image(img)
    assert padded.data.shape == (1, 1, 384, 352)
    np.testing.assert_array_equal(padded.data[0, 0], img)
    assert record == PadRecord(width=352, height=384)


def test_pad_image_rejects_tiny():
    with pytest.raises(ValueError, match="at least 16x16"):
        pad_image(np.zeros((8, 40), dtype=np.float32))


def test_pad_crop_roundtrip():
    img = np.random.default_rng(18).random((37, 61)).astype(np.float32)
    padded, record = pad_image(img)
    out = crop_output(padded, record)
    assert out.data.shape == (1, 1, 37, 61)
    np.testing.assert_array_equal(out.data[0, 0], img)


def test_crop_rejects_record_larger_than_map():
    with pytest.raises(ValueError, match="exceeds"):
        crop_output(Tensor(np.zeros((1, 1, 16, 16))), PadRecord(width=20, height=10))


def test_crop_preserves_interior_blob_centroids():
    from sinpoint.blobs import label_components

    rng = np.random.default_rng(19)
    for _ in range(10):
        mask = np.zeros((48, 64), dtype=np.uint8)
        y, x = rng.integers(5, 30), rng.integers(5, 40)
        mask[y : y + 6, x : x + 9] = 1
        padded, record = pad_image(mask.astype(np.float32))
        _, blobs_pre = label_components(mask)
        cropped = crop_output(padded, record).data[0, 0]
        _, blobs_post = label_components((cropped > 0.5).astype(np.uint8))
        assert [b.centroid for b in blobs_pre] == [b.centroid for b in blobs_post]


# ---------------------------------------------------------------------------
# serialization


def test_save_load_roundtrip_bitwise(tmp_path):
    model = CoreDeltaNet(width_divisor=16, seed=20)
    p1 = tmp_path / "model.bin"
    p2 = tmp_path / "model2.bin"
    save_model(model, str(p1))
    loaded = load_model(str(p1))
    for (na, ta), (nb, tb) in zip(model.named_parameters(), loaded.named_parameters()):
        assert na == nb
        np.testing.assert_array_equal(ta.data, tb.data)
    save_model(loaded, str(p2))
    assert p1.read_bytes() == p2.read_bytes()
    assert not list(tmp_path.glob("*.tmp.*"))


def test_load_rejects_truncated_file(tmp_path):
    model = CoreDeltaNet(width_divisor=16, seed=21)
    path = tmp_path / "model.bin"
    save_model(model, str(path))
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) // 2])
    with pytest.raises(ModelFormatError, match="truncated"):
        load_model(str(path))


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "model.bin"
    path.write_bytes(b"NOTAMODL" + b"\x00" * 64)
    with pytest.raises(ModelFormatError, match="magic"):
        load_model(str(path))


def test_forward_identical_after_roundtrip(tmp_path):
    model = CoreDeltaNet(width_divisor=16, seed=22)
    path = tmp_path / "model.bin"
    save_model(model, str(path))
    loaded = load_model(str(path))
    x = small_image(seed=23)
    c1, d1 = model.forward(x)
    c2, d2 = loaded.forward(x)
    np.testing.assert_array_equal(c1.data, c2.data)
    np.testing.assert_array_equal(d1.data, d2.data)


def test_init_weights_reinitializes_in_place():
    model = CoreDeltaNet(width_divisor=16, seed=24)
    before = [t.data.copy() for _, t in model.named_parameters()]
    init_weights(model, 24)
    for (_, t), prev in zip(model.named_parameters(), before):
        np.testing.assert_array_equal(t.data, prev)
    init_weights(model, 25)
    assert any(
        not np.array_equal(t.data, prev)
        for (_, t), prev in zip(model.named_parameters(), before)
    )

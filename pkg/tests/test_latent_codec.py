import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from mminpaint.errors import ShapeError
from mminpaint.geometry import RANGE, CropSpec, crop_range, uncrop_range
from mminpaint.latent_codec import (
    Codecs,
    ConvPoolerReferenceEncoder,
    ExternalReferenceEncoder,
    NaiveRangeCodec,
    PatchDiscriminator,
    embed_reference,
)


@pytest.fixture(scope="module")
def codecs():
    torch.manual_seed(0)
    return Codecs().eval()


def test_latent_shapes(codecs):
    z_c = codecs.camera.encode(torch.zeros(2, 3, 64, 64))
    z_r = codecs.range.encode(torch.zeros(2, 2, 64, 64))
    assert z_c.shape == z_r.shape == (2, 4, 8, 8)
    assert codecs.camera.decode(z_c).shape == (2, 3, 64, 64)
    assert codecs.range.decode(z_r).shape == (2, 2, 64, 64)


@pytest.mark.parametrize("shape", [(1, 3, 60, 64), (1, 2, 64, 64), (3, 64, 64)])
def test_camera_rejects_bad_shape(codecs, shape):
    with pytest.raises(ShapeError):
        codecs.camera.encode(torch.zeros(shape))


def test_range_rejects_three_channels(codecs):
    with pytest.raises(ShapeError):
        codecs.range.encode(torch.zeros(1, 3, 64, 64))


def test_zero_image_finite(codecs):
    with torch.no_grad():
        out = codecs.camera.decode(codecs.camera.encode(torch.zeros(1, 3, 64, 64)))
    assert torch.isfinite(out).all() and out.abs().max() < 1e3


def test_encoding_is_deterministic(codecs):
    x = torch.rand(2, 2, 64, 64) * 2 - 1
    with torch.no_grad():
        assert torch.equal(codecs.range.encode(x), codecs.range.encode(x))
        mean, _ = codecs.range.encode_moments(x)
    assert torch.equal(codecs.range.encode(x), mean)


def test_backbone_shared_and_adapters_separate():
    c = Codecs()
    assert c.camera.backbone is c.range.backbone
    cam_ids = {id(p) for p in c.camera.backbone.parameters()}
    assert cam_ids == {id(p) for p in c.range.backbone.parameters()}
    adapters = c.range.adapter_parameters()
    assert sum(p.numel() for p in adapters) > 0
    assert not cam_ids & {id(p) for p in adapters}


def test_backbone_mutation_visible_through_range():
    torch.manual_seed(1)
    c = Codecs().eval()
    x = torch.rand(1, 2, 64, 64)
    with torch.no_grad():
        before = c.range.encode(x)
        c.camera.backbone.encoder[-1].bias.add_(1.0)
        after = c.range.encode(x)
    assert not torch.allclose(before, after)


def test_naive_codec_duplicates_depth(codecs):
    naive = NaiveRangeCodec(codecs.camera)
    x = torch.rand(1, 2, 64, 64)
    with torch.no_grad():
        z = naive.encode(x)
        ref = codecs.camera.encode(torch.cat([x[:, :1], x[:, :1], x[:, 1:]], dim=1))
    assert torch.equal(z, ref)
    assert naive.decode(z).shape == (1, 2, 64, 64)


def test_patch_discriminator_shape():
    d = PatchDiscriminator(2)
    assert d(torch.zeros(2, 2, 64, 64)).shape[:2] == (2, 1)


# -- reference tokens ---------------------------------------------------------------


def test_black_reference_is_null_token():
    enc = ConvPoolerReferenceEncoder(64)
    tok = embed_reference(enc, np.zeros((32, 32, 3)))
    assert torch.equal(tok, enc.null_token())


def test_reference_token_deterministic_and_distinct():
    torch.manual_seed(0)
    enc = ConvPoolerReferenceEncoder(64)
    rng = np.random.default_rng(0)
    red = np.zeros((32, 32, 3))
    red[8:24, 8:24, 0] = 1.0
    blue = np.zeros((32, 32, 3))
    blue[4:28, 10:22, 2] = 0.8
    blue += rng.uniform(0, 0.1, blue.shape)
    a, b = embed_reference(enc, red), embed_reference(enc, blue)
    assert torch.equal(a, embed_reference(enc, red))
    assert float(torch.cosine_similarity(a, b).detach()) < 0.99


def test_reference_adapter_frozen():
    enc = ConvPoolerReferenceEncoder(64)
    assert not any(p.requires_grad for p in enc.adapt.parameters())
    assert all(p.requires_grad for p in enc.features.parameters())


def test_external_encoder_black_to_null():
    enc = ExternalReferenceEncoder(lambda x: x.mean(dim=(2, 3)) + 1.0, 3, 16)
    tok = embed_reference(enc, np.zeros((2, 32, 32, 3)))
    assert torch.equal(tok, torch.zeros(2, 16))
    assert embed_reference(enc, np.ones((32, 32, 3))).abs().sum() > 0


def test_reference_resized_to_fixed_size():
    enc = ConvPoolerReferenceEncoder(64)
    assert embed_reference(enc, np.random.default_rng(0).random((50, 20, 3))).shape == (1, 64)


# -- resize round trip ---------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(st.integers(8, 400), st.integers(-200, 1200), st.sampled_from([32, 64, 128]), st.integers(0, 2**31 - 1))
def test_avgpool_return_preserves_window(width, x0, size, seed):
    """Nearest resize in, average pooling back: the window survives unchanged, so its mean does too."""
    rng = np.random.default_rng(seed)
    arr = rng.normal(size=(32, 1096, 2))
    crop = CropSpec(RANGE, x0, 0, width, 32, size)
    win = arr[:, crop.source_columns()]
    back = uncrop_range(crop_range(arr, crop), crop, "avg")
    assert back.shape == win.shape
    if size >= width:
        np.testing.assert_allclose(back, win, rtol=0, atol=1e-12)
        assert abs(back.mean() - win.mean()) < 1e-6
    else:
        # narrower targets skip some columns; the sampled ones come back exactly
        cols = np.unique(np.floor((np.arange(size) + 0.5) * width / size).astype(int))
        np.testing.assert_allclose(back[:, cols], win[:, cols], rtol=0, atol=1e-12)

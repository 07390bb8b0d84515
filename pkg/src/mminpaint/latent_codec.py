"""Camera and range latent autoencoders plus the reference-image encoder.

The two autoencoders share one backbone. The camera codec wraps it with a
plain input/output convolution. The range codec swaps those for two residual
blocks each on a 2-channel (depth, intensity) signal.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ShapeError

LATENT_CHANNELS = 4
DOWNSAMPLE = 8


def _groups(ch: int) -> int:
    return 8 if ch % 8 == 0 else 1


class ResBlock(nn.Module):
    def __init__(self, cin: int, cout: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(cin), cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.norm2 = nn.GroupNorm(_groups(cout), cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x):
        h = self.conv1(F.silu(self.norm1(x)))
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class SharedBackbone(nn.Module):
    """Encoder/decoder body operating on ``widths[0]``-channel feature maps."""

    def __init__(self, widths=(32, 64, 128), latent_channels: int = LATENT_CHANNELS):
        super().__init__()
        w0, w1, w2 = widths
        self.widths = widths
        self.latent_channels = latent_channels
        self.encoder = nn.Sequential(
            ResBlock(w0, w0),
            nn.Conv2d(w0, w0, 3, stride=2, padding=1),
            ResBlock(w0, w1),
            nn.Conv2d(w1, w1, 3, stride=2, padding=1),
            ResBlock(w1, w2),
            nn.Conv2d(w2, w2, 3, stride=2, padding=1),
            ResBlock(w2, w2),
            nn.GroupNorm(_groups(w2), w2),
            nn.SiLU(),
            nn.Conv2d(w2, 2 * latent_channels, 3, padding=1),
        )
        self.decoder = nn.Sequential(
            nn.Conv2d(latent_channels, w2, 3, padding=1),
            ResBlock(w2, w2),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(w2, w2, 3, padding=1),
            ResBlock(w2, w1),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(w1, w1, 3, padding=1),
            ResBlock(w1, w0),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(w0, w0, 3, padding=1),
            ResBlock(w0, w0),
            nn.GroupNorm(_groups(w0), w0),
            nn.SiLU(),
        )

    def moments(self, h):
        mean, logvar = self.encoder(h).chunk(2, dim=1)
        return mean, logvar.clamp(-30.0, 20.0)

    def decode_features(self, z):
        return self.decoder(z)


class _Autoencoder(nn.Module):
    in_channels = 3

    def __init__(self, backbone: SharedBackbone):
        super().__init__()
        self.backbone = backbone

    def _check(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels or x.shape[-1] % DOWNSAMPLE or x.shape[-2] % DOWNSAMPLE:
            raise ShapeError(f"expected (B, {self.in_channels}, D, D) with D divisible by {DOWNSAMPLE}, got {tuple(x.shape)}")

    def encode_moments(self, x):
        self._check(x)
        return self.backbone.moments(self.input_layer(x))

    def encode(self, x):
        """Posterior mean; encoding is deterministic."""
        return self.encode_moments(x)[0]

    def decode(self, z):
        return self.output_layer(self.backbone.decode_features(z))

    def forward(self, x, sample: bool = False, generator=None):
        mean, logvar = self.encode_moments(x)
        z = mean
        if sample:
            z = mean + torch.exp(0.5 * logvar) * torch.randn(mean.shape, generator=generator, dtype=mean.dtype)
        return self.decode(z), mean, logvar


class CameraAutoencoder(_Autoencoder):
    """Images in ``[-1, 1]``, shape ``(B, 3, D, D)``."""

    in_channels = 3

    def __init__(self, backbone: SharedBackbone):
        super().__init__(backbone)
        w0 = backbone.widths[0]
        self.input_layer = nn.Conv2d(3, w0, 3, padding=1)
        self.output_layer = nn.Conv2d(w0, 3, 3, padding=1)


class RangeAutoencoder(_Autoencoder):
    """Normalized ``(depth, intensity)`` range images, shape ``(B, 2, D, D)``."""

    in_channels = 2

    def __init__(self, backbone: SharedBackbone):
        super().__init__(backbone)
        w0 = backbone.widths[0]
        self.input_layer = nn.Sequential(ResBlock(2, w0), ResBlock(w0, w0))
        self.output_layer = nn.Sequential(ResBlock(w0, w0), ResBlock(w0, 2))

    def adapter_parameters(self):
        return list(self.input_layer.parameters()) + list(self.output_layer.parameters())


class NaiveRangeCodec(nn.Module):
    """Range images through the camera codec: duplicate depth to 3 channels, drop one on decode."""

    def __init__(self, camera: CameraAutoencoder):
        super().__init__()
        self.camera = camera

    def encode(self, x):
        return self.camera.encode(torch.cat([x[:, :1], x], dim=1))

    def decode(self, z):
        return self.camera.decode(z)[:, 1:]


def kl_term(mean, logvar):
    return 0.5 * torch.mean(mean.pow(2) + logvar.exp() - 1.0 - logvar)


class PatchDiscriminator(nn.Module):
    """Four-layer convolutional patch critic for the optional adversarial term."""

    def __init__(self, in_channels: int = 2, width: int = 32):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(in_channels, width, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(width, 2 * width, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(2 * width, 4 * width, 4, stride=1, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(4 * width, 1, 4, stride=1, padding=1),
        )

    def forward(self, x):
        return self.net(x)


# ---------------------------------------------------------------------------
# reference encoders
# ---------------------------------------------------------------------------

REF_SIZE = 32


class ReferenceEncoder(nn.Module):
    """Maps ``(B, 3, S, S)`` images in ``[0, 1]`` to one ``dim``-wide token each.

    An all-black image must map to the all-zero null token.
    """

    dim: int

    def null_token(self, batch: int = 1, dtype=torch.float32):
        return torch.zeros(batch, self.dim, dtype=dtype)


class ConvPoolerReferenceEncoder(ReferenceEncoder):
    """Bias-free conv pooler followed by a frozen linear adaptation layer.

    Without biases, a black input propagates to an exactly zero token.
    """

    def __init__(self, dim: int = 64, width: int = 32):
        super().__init__()
        self.dim = dim
        self.features = nn.Sequential(
            nn.Conv2d(3, width, 3, stride=2, padding=1, bias=False),
            nn.ReLU(),
            nn.Conv2d(width, 2 * width, 3, stride=2, padding=1, bias=False),
            nn.ReLU(),
            nn.Conv2d(2 * width, 4 * width, 3, stride=2, padding=1, bias=False),
            nn.ReLU(),
        )
        self.adapt = nn.Linear(4 * width, dim, bias=False)
        self.adapt.requires_grad_(False)

    def forward(self, img):
        f = self.features(img).mean(dim=(2, 3))
        return self.adapt(f)


class ExternalReferenceEncoder(ReferenceEncoder):
    """Slot for a pretrained image encoder (e.g. a CLIP-class model).

    ``feature_fn`` maps ``(B, 3, S, S)`` images to ``(B, feature_dim)`` class
    tokens; black inputs are forced to the null token.
    """

    def __init__(self, feature_fn, feature_dim: int, dim: int = 64):
        super().__init__()
        self.feature_fn = feature_fn
        self.dim = dim
        self.adapt = nn.Linear(feature_dim, dim, bias=False)
        self.adapt.requires_grad_(False)

    def forward(self, img):
        tok = self.adapt(self.feature_fn(img))
        black = img.flatten(1).abs().amax(dim=1) == 0
        return torch.where(black[:, None], torch.zeros_like(tok), tok)


def embed_reference(encoder: ReferenceEncoder, ref_img) -> torch.Tensor:
    """Token for ``(S, S, 3)`` or ``(B, S, S, 3)`` images in ``[0, 1]`` (numpy or torch)."""
    x = torch.as_tensor(ref_img, dtype=torch.float32)
    if x.ndim == 3:
        x = x[None]
    x = x.permute(0, 3, 1, 2)
    if x.shape[-1] != REF_SIZE or x.shape[-2] != REF_SIZE:
        x = F.interpolate(x, size=(REF_SIZE, REF_SIZE), mode="bilinear", align_corners=False)
    return encoder(x)


class Codecs(nn.Module):
    """Bundle of the frozen-at-finetune encoders."""

    def __init__(self, widths=(32, 64, 128), latent_channels=LATENT_CHANNELS, ref_dim=64):
        super().__init__()
        self.backbone = SharedBackbone(widths, latent_channels)
        self.camera = CameraAutoencoder(self.backbone)
        self.range = RangeAutoencoder(self.backbone)
        self.reference = ConvPoolerReferenceEncoder(ref_dim)

    @property
    def latent_channels(self):
        return self.backbone.latent_channels

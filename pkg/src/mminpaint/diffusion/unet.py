"""Joint camera/lidar denoiser.

Both modalities run through one shared UNet. Camera and range items are
stacked along the batch axis: the first half is camera, the second half
range, and row ``b`` of each half belongs to the same scene. Each transformer
site interleaves two gated layers after self-attention:

* cross-modal attention: camera queries attend to the same scene's range
  tokens and vice versa, through modality-specific weights;
* box adapter: attends over {box token, reference token}, with weights
  shared by both modalities.

Both gates start at zero, so a fresh model equals the base UNet exactly.
"""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from ..conditioning import BoxEncoder, ConditioningSet
from ..errors import PairingError


def _groups(ch):
    return 8 if ch % 8 == 0 else 1


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / half)
    args = t.float()[:, None] * freqs[None]
    return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)


class Attention(nn.Module):
    def __init__(self, q_dim: int, kv_dim: int, heads: int = 4, d_head: int = 32):
        super().__init__()
        inner = heads * d_head
        self.heads = heads
        self.d_head = d_head
        self.to_q = nn.Linear(q_dim, inner, bias=False)
        self.to_k = nn.Linear(kv_dim, inner, bias=False)
        self.to_v = nn.Linear(kv_dim, inner, bias=False)
        self.to_out = nn.Linear(inner, q_dim)

    def forward(self, x, ctx):
        B, N, _ = x.shape
        M = ctx.shape[1]
        q = self.to_q(x).view(B, N, self.heads, self.d_head).transpose(1, 2)
        k = self.to_k(ctx).view(B, M, self.heads, self.d_head).transpose(1, 2)
        v = self.to_v(ctx).view(B, M, self.heads, self.d_head).transpose(1, 2)
        w = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(self.d_head), dim=-1)
        out = (w @ v).transpose(1, 2).reshape(B, N, self.heads * self.d_head)
        return self.to_out(out)


class GatedCrossModalAttention(nn.Module):
    """Bidirectional camera<->range attention with zero-initialized per-channel gates."""

    def __init__(self, ch: int, heads: int = 4, d_head: int = 32):
        super().__init__()
        self.norm_cam = nn.LayerNorm(ch)
        self.norm_range = nn.LayerNorm(ch)
        self.cam_from_range = Attention(ch, ch, heads, d_head)
        self.range_from_cam = Attention(ch, ch, heads, d_head)
        self.gate_cam = nn.Parameter(torch.zeros(ch))
        self.gate_range = nn.Parameter(torch.zeros(ch))

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        h_cam, h_rng = h.chunk(2, dim=0)
        n_cam, n_rng = self.norm_cam(h_cam), self.norm_range(h_rng)
        out_cam = h_cam + self.gate_cam * self.cam_from_range(n_cam, n_rng)
        out_rng = h_rng + self.gate_range * self.range_from_cam(n_rng, n_cam)
        return torch.cat([out_cam, out_rng], dim=0)


class GatedBoxAdapter(nn.Module):
    def __init__(self, ch: int, token_dim: int, heads: int = 4, d_head: int = 32):
        super().__init__()
        self.norm = nn.LayerNorm(ch)
        self.attn = Attention(ch, token_dim, heads, d_head)
        self.gate = nn.Parameter(torch.zeros(ch))

    def forward(self, h, tokens):
        return h + self.gate * self.attn(self.norm(h), tokens)


class TransformerBlock(nn.Module):
    def __init__(self, ch: int, token_dim: int, heads: int, d_head: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(ch)
        self.self_attn = Attention(ch, ch, heads, d_head)
        self.cross_modal = GatedCrossModalAttention(ch, heads, d_head)
        self.box_adapter = GatedBoxAdapter(ch, token_dim, heads, d_head)
        self.norm2 = nn.LayerNorm(ch)
        self.ref_attn = Attention(ch, token_dim, heads, d_head)
        self.norm3 = nn.LayerNorm(ch)
        self.ff = nn.Sequential(nn.Linear(ch, 4 * ch), nn.GELU(), nn.Linear(4 * ch, ch))

    def forward(self, h, ref_ctx, adapter_ctx, use_adapters: bool):
        n = self.norm1(h)
        h = h + self.self_attn(n, n)
        if use_adapters:
            h = self.cross_modal(h)
            h = self.box_adapter(h, adapter_ctx)
        h = h + self.ref_attn(self.norm2(h), ref_ctx)
        return h + self.ff(self.norm3(h))


class SpatialTransformer(nn.Module):
    def __init__(self, ch, token_dim, heads, d_head):
        super().__init__()
        self.norm = nn.GroupNorm(_groups(ch), ch)
        self.proj_in = nn.Conv2d(ch, ch, 1)
        self.block = TransformerBlock(ch, token_dim, heads, d_head)
        self.proj_out = nn.Conv2d(ch, ch, 1)

    def forward(self, x, ref_ctx, adapter_ctx, use_adapters):
        B, C, H, W = x.shape
        h = self.proj_in(self.norm(x)).flatten(2).transpose(1, 2).contiguous()
        h = self.block(h, ref_ctx, adapter_ctx, use_adapters)
        return x + self.proj_out(h.transpose(1, 2).reshape(B, C, H, W))


class TimeResBlock(nn.Module):
    def __init__(self, cin, cout, emb_dim):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(cin), cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.emb = nn.Linear(emb_dim, cout)
        self.norm2 = nn.GroupNorm(_groups(cout), cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x, emb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.emb(F.silu(emb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class DiffusionUNet(nn.Module):
    """Desk-scale latent UNet: two resolutions, widths (64, 128), 4 heads of 32.

    Input channels are latent + context latent + resized keep-mask.
    """

    def __init__(self, latent_channels=4, widths=(64, 128), token_dim=64, heads=4, d_head=32, box_bands=16):
        super().__init__()
        c0, c1 = widths
        self.latent_channels = latent_channels
        emb_dim = 4 * c0
        self.time_dim = c0
        self.time_mlp = nn.Sequential(nn.Linear(c0, emb_dim), nn.SiLU(), nn.Linear(emb_dim, emb_dim))
        # 0 = camera, 1 = range
        self.modality_emb = nn.Embedding(2, emb_dim)
        self.conv_in = nn.Conv2d(2 * latent_channels + 1, c0, 3, padding=1)
        self.down0 = TimeResBlock(c0, c0, emb_dim)
        self.attn_down0 = SpatialTransformer(c0, token_dim, heads, d_head)
        self.downsample = nn.Conv2d(c0, c0, 3, stride=2, padding=1)
        self.down1 = TimeResBlock(c0, c1, emb_dim)
        self.attn_down1 = SpatialTransformer(c1, token_dim, heads, d_head)
        self.mid0 = TimeResBlock(c1, c1, emb_dim)
        self.attn_mid = SpatialTransformer(c1, token_dim, heads, d_head)
        self.mid1 = TimeResBlock(c1, c1, emb_dim)
        self.up1 = TimeResBlock(2 * c1, c1, emb_dim)
        self.attn_up1 = SpatialTransformer(c1, token_dim, heads, d_head)
        self.upsample = nn.Sequential(nn.Upsample(scale_factor=2, mode="nearest"), nn.Conv2d(c1, c1, 3, padding=1))
        self.up0 = TimeResBlock(c1 + c0, c0, emb_dim)
        self.attn_up0 = SpatialTransformer(c0, token_dim, heads, d_head)
        self.out = nn.Sequential(nn.GroupNorm(_groups(c0), c0), nn.SiLU(), nn.Conv2d(c0, latent_channels, 3, padding=1))
        self.box_encoder = BoxEncoder(token_dim, box_bands)

    # -- parameter groups ---------------------------------------------------

    def transformer_sites(self):
        return [self.attn_down0, self.attn_down1, self.attn_mid, self.attn_up1, self.attn_up0]

    def adapter_modules(self) -> list[nn.Module]:
        mods: list[nn.Module] = [self.box_encoder]
        for st in self.transformer_sites():
            mods += [st.block.cross_modal, st.block.box_adapter]
        return mods

    def trainable_parameters(self) -> list[nn.Parameter]:
        """Box encoder, box adapters and cross-modal attention: the fine-tune set."""
        return [p for m in self.adapter_modules() for p in m.parameters()]

    def base_parameters(self) -> list[nn.Parameter]:
        ids = {id(p) for p in self.trainable_parameters()}
        return [p for p in self.parameters() if id(p) not in ids]

    def freeze_base(self):
        for p in self.base_parameters():
            p.requires_grad_(False)
        for p in self.trainable_parameters():
            p.requires_grad_(True)
        return self

    def gates(self) -> list[nn.Parameter]:
        out = []
        for st in self.transformer_sites():
            b = st.block
            out += [b.cross_modal.gate_cam, b.cross_modal.gate_range, b.box_adapter.gate]
        return out

    # -- forward --------------------------------------------------------------

    def forward(self, z_cam, z_range, t, cond: ConditioningSet, use_adapters: bool = True):
        """Predict noise for both modalities; returns ``(eps_cam, eps_range)``."""
        if z_cam.shape != z_range.shape:
            raise PairingError(f"camera latent {tuple(z_cam.shape)} and range latent {tuple(z_range.shape)} differ")
        B = z_cam.shape[0]
        if cond.batch != B:
            raise PairingError(f"conditioning batch {cond.batch} does not match latent batch {B}")
        t = torch.as_tensor(t, dtype=torch.long).reshape(-1).expand(B)
        x = torch.cat(
            [
                torch.cat([z_cam, cond.ctx_cam, cond.mask_cam], dim=1),
                torch.cat([z_range, cond.ctx_range, cond.mask_range], dim=1),
            ]
        )
        tt = torch.cat([t, t])
        modality = torch.cat([torch.zeros(B, dtype=torch.long), torch.ones(B, dtype=torch.long)])
        emb = self.time_mlp(timestep_embedding(tt, self.time_dim).to(x.dtype)) + self.modality_emb(modality)

        ref = cond.ref_token.to(x.dtype)
        ref_ctx = torch.cat([ref, ref])[:, None]
        if use_adapters:
            box_tok = self.box_encoder(torch.cat([cond.box_cam, cond.box_range]).to(x.dtype))
            adapter_ctx = torch.stack([box_tok, torch.cat([ref, ref])], dim=1)
        else:
            adapter_ctx = None

        h = self.conv_in(x)
        h = self.attn_down0(self.down0(h, emb), ref_ctx, adapter_ctx, use_adapters)
        skip0 = h
        h = self.down1(self.downsample(h), emb)
        h = self.attn_down1(h, ref_ctx, adapter_ctx, use_adapters)
        skip1 = h
        h = self.mid0(h, emb)
        h = self.attn_mid(h, ref_ctx, adapter_ctx, use_adapters)
        h = self.mid1(h, emb)
        h = self.up1(torch.cat([h, skip1], dim=1), emb)
        h = self.attn_up1(h, ref_ctx, adapter_ctx, use_adapters)
        h = self.upsample(h)
        h = self.up0(torch.cat([h, skip0], dim=1), emb)
        h = self.attn_up0(h, ref_ctx, adapter_ctx, use_adapters)
        eps = self.out(h)
        return eps[:B], eps[B:]

"""Cross-modal fusion: rescaled text enhancement, patch enhancement,
cosine maps, channel fusion."""

import pytest
import torch

from promptvos.config import gradcheck_config
from promptvos.encoders import LinguisticFeature
from promptvos.fusion import FeatureFusion, cosine_similarity_map
from promptvos.nn.functional import multi_head_attention


@pytest.fixture()
def cfg():
    return gradcheck_config()


def _lang(cfg, n_tokens=5):
    return LinguisticFeature(tokens=torch.randn(n_tokens, cfg.embed_dim), eos_index=n_tokens - 1)


def test_alpha_zero_is_bitwise_identity(cfg, seeded):
    fusion = FeatureFusion(cfg)
    with torch.no_grad():
        fusion.alpha.zero_()
    x_e = torch.randn(cfg.embed_dim)
    patches = torch.randn(2, cfg.patch_count, cfg.embed_dim)
    assert torch.equal(fusion.enhance_text(x_e, patches), x_e)


def test_alpha_init_norm_bound(cfg, seeded):
    fusion = FeatureFusion(cfg)
    x_e = torch.randn(cfg.embed_dim)
    patches = torch.randn(2, cfg.patch_count, cfg.embed_dim)
    out = fusion.v2l(x_e.unsqueeze(0), patches.reshape(-1, cfg.embed_dim)).squeeze(0).detach()
    delta = (fusion.enhance_text(x_e, patches) - x_e).detach()
    assert float(delta.norm()) <= 0.01 * float(out.norm()) + 1e-12


def test_single_patch_decoder_output_is_projected_value(cfg, seeded):
    fusion = FeatureFusion(cfg)
    patch = torch.randn(1, 1, cfg.embed_dim)
    out = fusion.v2l(torch.randn(1, cfg.embed_dim), patch.reshape(1, -1))
    want = fusion.v2l.out_map(fusion.v2l.value_map(patch.reshape(1, -1)))
    assert (out - want).abs().max() < 1e-12


def test_patch_enhancement_zero_value_map_is_identity(cfg, seeded):
    fusion = FeatureFusion(cfg)
    with torch.no_grad():
        fusion.l2v.value_map.weight.zero_()
    patches = torch.randn(2, cfg.patch_count, cfg.embed_dim)
    out = fusion.enhance_patches(patches, _lang(cfg).tokens)
    assert torch.equal(out, patches)


def test_patch_enhancement_single_token_broadcasts(cfg, seeded):
    fusion = FeatureFusion(cfg)
    token = torch.randn(1, cfg.embed_dim)
    patches = torch.randn(1, 4, cfg.embed_dim)
    out = fusion.enhance_patches(patches, token)
    want = patches + fusion.l2v.out_map(fusion.l2v.value_map(token)).expand(1, 4, -1)
    assert (out - want).abs().max() < 1e-12


def test_patch_enhancement_matches_attention_oracle(cfg, seeded):
    fusion = FeatureFusion(cfg)
    patches = torch.randn(3, cfg.patch_count, cfg.embed_dim)
    words = torch.randn(6, cfg.embed_dim)
    out = fusion.enhance_patches(patches, words)
    for t in range(3):
        want = patches[t] + multi_head_attention(patches[t], words, fusion.l2v)
        assert (out[t] - want).abs().max() < 1e-10


# ----------------------------------------------------------------------
# cosine map
# ----------------------------------------------------------------------

def test_cosine_extremes_and_orthogonality():
    v = torch.tensor([1.0, 2.0, -1.0])
    rows = torch.stack([v, -v, torch.tensor([2.0, -1.0, 0.0])])
    sims = cosine_similarity_map(rows, v)
    assert abs(float(sims[0]) - 1.0) < 1e-9
    assert abs(float(sims[1]) + 1.0) < 1e-9
    assert abs(float(sims[2])) < 1e-9


def test_cosine_bounded_and_scale_invariant(seeded):
    rows = torch.randn(50, 8)
    ref = torch.randn(8)
    sims = cosine_similarity_map(rows, ref)
    assert float(sims.abs().max()) <= 1.0
    scaled = cosine_similarity_map(rows * 37.5, ref * 0.004)
    assert (sims - scaled).abs().max() < 1e-9


# ----------------------------------------------------------------------
# fuse + project
# ----------------------------------------------------------------------

def test_fusion_output_shapes(cfg, seeded):
    fusion = FeatureFusion(cfg)
    patches = torch.randn(2, cfg.patch_count, cfg.embed_dim)
    fused, sim, x_e = fusion(patches, _lang(cfg))
    grid = cfg.grid
    assert fused.shape == (2, grid, grid, cfg.fusion_dim)
    assert sim.shape == (2, grid, grid)
    assert x_e.shape == (cfg.embed_dim,)
    assert float(sim.detach().abs().max()) <= 1.0


def test_fusion_zero_projection_gives_zero(cfg, seeded):
    fusion = FeatureFusion(cfg)
    with torch.no_grad():
        fusion.fuse_proj.weight.zero_()
        fusion.fuse_proj.bias.zero_()
    patches = torch.randn(2, cfg.patch_count, cfg.embed_dim)
    fused, _, _ = fusion(patches, _lang(cfg))
    assert torch.equal(fused, torch.zeros_like(fused))


def test_fusion_similarity_channel_row_major_indexing(cfg, seeded):
    """Patch i lands at grid cell (i // W, i % W); the similarity channel
    carries the cosine of that very patch."""
    fusion = FeatureFusion(cfg)
    with torch.no_grad():
        fusion.alpha.zero_()
        fusion.l2v.value_map.weight.zero_()
        fusion.fuse_proj.weight.zero_()
        fusion.fuse_proj.weight[:, -1] = 1.0  # expose the similarity channel
        fusion.fuse_proj.bias.zero_()
    patches = torch.randn(1, cfg.patch_count, cfg.embed_dim)
    lang = _lang(cfg)
    with torch.no_grad():
        fused, sim, x_e = fusion(patches, lang)
    grid = cfg.grid
    for index in range(cfg.patch_count):
        want = cosine_similarity_map(patches[0, index : index + 1], x_e)[0]
        r, c = divmod(index, grid)
        assert abs(float(sim[0, r, c]) - float(want)) < 1e-12
        assert abs(float(fused[0, r, c, 0]) - float(want)) < 1e-12


def test_fusion_blocks_all_trainable(cfg, seeded):
    fusion = FeatureFusion(cfg)
    assert all(p.requires_grad for p in fusion.parameters())

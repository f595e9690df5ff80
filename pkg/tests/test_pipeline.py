"""End-to-end clip forwards, training steps, clip-by-clip inference."""

import dataclasses

import pytest
import torch

from promptvos.config import apply_ablation_flags, gradcheck_config, wiring_summary
from promptvos.errors import ShapeError
from promptvos.model import build_model
from promptvos.pipeline import (
    VideoPredictor,
    frozen_drift,
    frozen_snapshot,
    infer_video,
    make_optimizer,
    parameter_registry,
    train_on_dataset,
    train_step_two_clips,
    two_clip_loss,
)
from promptvos.prompts import ClipState
from promptvos.synth.scenes import generate_dataset


@pytest.fixture(scope="module")
def video():
    cfg = gradcheck_config()
    return generate_dataset(1, cfg.image_size, seed=7, event_mix=0.0, n_frames=2 * cfg.clip_len)[0]


def _tensors(video):
    return torch.as_tensor(video.frames), torch.as_tensor(video.masks)


def test_segment_clip_deterministic(video):
    cfg = gradcheck_config()
    frames, _ = _tensors(video)
    a = build_model(cfg, 3).segment_clip(frames[:2], video.words, ClipState())[0]
    b = build_model(cfg, 3).segment_clip(frames[:2], video.words, ClipState())[0]
    assert torch.equal(a, b)


def test_segment_clip_probabilities_in_unit_interval(video):
    cfg = gradcheck_config()
    model = build_model(cfg, 0)
    frames, _ = _tensors(video)
    probs, state = model.segment_clip(frames[:2], video.words, ClipState())
    assert float(probs.detach().min()) >= 0.0 and float(probs.detach().max()) <= 1.0
    assert state.features.shape == (2, cfg.patch_count, cfg.embed_dim)


def test_single_frame_clip_mode(video):
    cfg = gradcheck_config(clip_len=1)
    model = build_model(cfg, 0)
    frames, _ = _tensors(video)
    probs, _ = model.segment_clip(frames[:1], video.words, ClipState())
    assert probs.shape == (1, cfg.image_size, cfg.image_size)


def test_clip_longer_than_limit_rejected(video):
    cfg = gradcheck_config(clip_len=2)
    model = build_model(cfg, 0)
    frames, _ = _tensors(video)
    with pytest.raises(ShapeError):
        model.segment_clip(frames[:3], video.words, ClipState())


# ----------------------------------------------------------------------
# cross-frame information flow (encoder level)
# ----------------------------------------------------------------------

def _encoder_features(model, frames, words):
    vision_p, temporal_p, language_p = (None, None, None)
    if model.prompts is not None:
        vision_p, temporal_p, language_p = model.interact_prompts()
    lang = model.language(words, language_p)
    features, _ = model.encode_clip(frames, lang, ClipState(), vision_p, temporal_p)
    return features


def test_capture_on_spreads_perturbations_across_frames(video):
    cfg = gradcheck_config()
    model = build_model(cfg, 0)
    frames, _ = _tensors(video)
    base = _encoder_features(model, frames[:2], video.words)
    bumped_frames = frames[:2].clone()
    bumped_frames[0, 0, 0, 0] += 0.5
    bumped = _encoder_features(model, bumped_frames, video.words)
    assert (base[1] - bumped[1]).abs().max() > 0


def test_no_temporal_paths_means_frames_independent(video):
    """Temporal carriers, capture, and history off: other frames' pixels
    cannot influence a frame's encoder features, bit for bit."""
    cfg = gradcheck_config(temporal_prompts=False, prtc=False, history=False)
    model = build_model(cfg, 0)
    frames, _ = _tensors(video)
    base = _encoder_features(model, frames[:2], video.words)
    bumped_frames = frames[:2].clone()
    bumped_frames[0] = torch.rand_like(bumped_frames[0])
    bumped = _encoder_features(model, bumped_frames, video.words)
    assert torch.equal(base[1], bumped[1])


def test_fully_per_frame_wiring_makes_masks_independent(video):
    """With every clip-coupling path off (temporal, history, spatial-temporal
    encoder, stage-2 joint text enhancement, stage-3 joint keys) the final
    masks are per-frame functions."""
    cfg = gradcheck_config(
        temporal_prompts=False, prtc=False, history=False,
        stage2=False, stage3=False, st_attention="none",
    )
    model = build_model(cfg, 0)
    frames, _ = _tensors(video)
    base, _ = model.segment_clip(frames[:2], video.words, ClipState())
    bumped_frames = frames[:2].clone()
    bumped_frames[0] = torch.rand_like(bumped_frames[0])
    bumped, _ = model.segment_clip(bumped_frames, video.words, ClipState())
    assert torch.equal(base[1], bumped[1])


def test_promptless_encoder_equals_plain_vit_forward(video):
    """All prompts off, injection off: the encode path reduces to a vanilla
    per-frame transformer over [CLS|patches] plus the output projection."""
    cfg = gradcheck_config(
        lang_vision_prompts=False, temporal_prompts=False, prtc=False,
        history=False, stage1=False,
    )
    model = build_model(cfg, 0)
    frames, _ = _tensors(video)
    features, _ = model.encode_clip(frames[:2], None, ClipState(), None, None)
    x = model.vision.embed_clip(frames[:2])
    for layer in model.vision.layers:
        x = layer(x)
    want = torch.nn.functional.linear(x, model.vision_proj.weight, model.vision_proj.bias)
    assert (features - want).abs().max() < 1e-12


# ----------------------------------------------------------------------
# training
# ----------------------------------------------------------------------

def test_train_step_leaves_frozen_weights_bit_identical(video):
    cfg = gradcheck_config()
    model = build_model(cfg, 0)
    optimizer = make_optimizer(model, cfg)
    frames, masks = _tensors(video)
    before = frozen_snapshot(model)
    for _ in range(3):
        train_step_two_clips(model, optimizer, frames[:2], frames[2:4], video.words, masks[:2], masks[2:4])
    assert frozen_drift(model, before) == []


def test_history_off_equals_two_independent_clips(video):
    cfg = gradcheck_config(history=False)
    model = build_model(cfg, 0)
    frames, masks = _tensors(video)
    joint = two_clip_loss(model, frames[:2], frames[2:4], video.words, masks[:2], masks[2:4], False)
    a, _ = model.segment_clip(frames[:2], video.words, ClipState())
    b, _ = model.segment_clip(frames[2:4], video.words, ClipState())
    from promptvos.losses import dice_loss, focal_loss

    dice = dice_loss(a, masks[:2]) + dice_loss(b, masks[2:4])
    focal = focal_loss(a, masks[:2]) + focal_loss(b, masks[2:4])
    want = cfg.dice_weight * dice + cfg.focal_weight * focal
    assert abs(float(joint["total"].detach()) - float(want.detach())) < 1e-12


def test_history_on_couples_the_clips(video):
    cfg = gradcheck_config()
    model = build_model(cfg, 0)
    frames, masks = _tensors(video)
    _, state = model.segment_clip(frames[:2], video.words, ClipState())
    with_history, _ = model.segment_clip(frames[2:4], video.words, state)
    without, _ = model.segment_clip(frames[2:4], video.words, ClipState())
    assert not torch.equal(with_history.detach(), without.detach())


def test_training_trajectory_bitwise_reproducible(video):
    cfg = gradcheck_config()
    runs = []
    for _ in range(2):
        model = build_model(cfg, 5)
        log = train_on_dataset(model, [video], steps=10, seed=5)
        runs.append((log, [p.detach().clone() for p in model.parameters()]))
    assert [s["total"] for s in runs[0][0].steps] == [s["total"] for s in runs[1][0].steps]
    for a, b in zip(runs[0][1], runs[1][1]):
        assert torch.equal(a, b)


def test_registry_frozen_exactly_the_encoders(video):
    cfg = gradcheck_config()
    model = build_model(cfg, 0)
    for name, _, frozen in parameter_registry(model):
        assert frozen == (name.startswith("vision.") or name.startswith("language.")), name


# ----------------------------------------------------------------------
# inference
# ----------------------------------------------------------------------

def test_infer_video_single_segment_equals_direct_call(video):
    cfg = gradcheck_config()
    model = build_model(cfg, 0)
    frames, _ = _tensors(video)
    whole = infer_video(model, frames[:2], video.words, clip_len=2)
    with torch.no_grad():
        direct, _ = model.segment_clip(frames[:2], video.words, ClipState())
    assert torch.equal(whole, direct)


def test_infer_video_ragged_last_clip_covers_all_frames(video):
    cfg = gradcheck_config(clip_len=2)
    model = build_model(cfg, 0)
    frames, _ = _tensors(video)  # 4 frames
    probs = infer_video(model, frames[:3], video.words, clip_len=2)
    assert probs.shape[0] == 3


def test_infer_video_frame_by_frame_threads_history(video):
    cfg = gradcheck_config()
    model = build_model(cfg, 0)
    frames, _ = _tensors(video)
    probs = infer_video(model, frames[:3], video.words, clip_len=1)
    assert probs.shape[0] == 3


def test_video_predictor_adapter_shape(video):
    cfg = gradcheck_config()
    model = build_model(cfg, 0)
    out = VideoPredictor(model)(video, clip_len=2)
    assert out.shape == video.masks.shape


def test_variant_profiles_audit():
    cfg = gradcheck_config()
    full = wiring_summary(cfg)
    assert full == {
        "lang_vision_prompts": True, "temporal_prompts": True, "prtc": True,
        "history": True, "stage1": True, "stage2": True, "stage3": True,
        "st_attention": "cfmsa",
    }
    no_temporal = wiring_summary(apply_ablation_flags(cfg, ["no-temporal"]))
    assert no_temporal == {
        "lang_vision_prompts": True, "temporal_prompts": False, "prtc": False,
        "history": False, "stage1": False, "stage2": False, "stage3": True,
        "st_attention": "none",
    }

"""Model/training configuration, config-file round-trip, ablation wiring.

Config files are line-based ``key = value`` under ``[section]`` headers.
Unknown sections or keys are errors, which catches ablation-flag typos
before a multi-minute run starts.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, fields
from pathlib import Path

from promptvos.errors import ConfigError

ATTENTION_VARIANTS = ("cfmsa", "global", "w3d", "none")


@dataclass
class ModelConfig:
    # encoder geometry
    image_size: int = 32
    patch_size: int = 4
    channels: int = 3
    vision_layers: int = 4
    vision_dim: int = 64
    vision_heads: int = 4
    embed_dim: int = 32
    lang_layers: int = 2
    lang_heads: int = 4
    vocab_size: int = 64
    max_words: int = 12
    ffn_ratio: int = 4
    # prompt counts
    vision_prompt_tokens: int = 10
    temporal_prompt_tokens: int = 4
    language_prompt_tokens: int = 10
    # fusion / reasoning
    fusion_dim: int = 16
    str_depth: int = 4
    str_heads: int = 4
    window: int = 4
    # training
    clip_len: int = 6
    lr: float = 5e-5
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    dice_weight: float = 5.0
    focal_weight: float = 2.0
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    steps: int = 300
    teacher_force_history: bool = False
    # ablation wiring (defaults = full model)
    lang_vision_prompts: bool = True
    temporal_prompts: bool = True
    prtc: bool = True
    history: bool = True
    stage1: bool = True
    stage2: bool = True
    stage3: bool = True
    st_attention: str = "cfmsa"

    # ------------------------------------------------------------------
    # derived geometry
    # ------------------------------------------------------------------
    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def patch_count(self) -> int:
        return self.grid * self.grid

    @property
    def patch_pixels(self) -> int:
        return self.patch_size * self.patch_size * self.channels

    @property
    def max_lang_tokens(self) -> int:
        return self.max_words + 2 + self.language_prompt_tokens

    def validate(self) -> "ModelConfig":
        if self.image_size % self.patch_size != 0:
            raise ConfigError(f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.vision_dim % self.vision_heads != 0:
            raise ConfigError("vision_dim not divisible by vision_heads")
        if self.embed_dim % self.lang_heads != 0:
            raise ConfigError("embed_dim not divisible by lang_heads")
        if self.fusion_dim % self.str_heads != 0:
            raise ConfigError("fusion_dim not divisible by str_heads")
        if self.st_attention not in ATTENTION_VARIANTS:
            raise ConfigError(f"st_attention must be one of {ATTENTION_VARIANTS}")
        if self.st_attention in ("cfmsa", "w3d") and self.window > min(self.grid, self.grid):
            raise ConfigError(f"window {self.window} exceeds token grid {self.grid}")
        if self.prtc and not self.temporal_prompts:
            raise ConfigError("prtc requires temporal_prompts (it runs on the temporal carriers)")
        if self.clip_len < 1:
            raise ConfigError("clip_len must be >= 1")
        if self.temporal_prompts and self.temporal_prompt_tokens < 1:
            raise ConfigError("temporal_prompts enabled but temporal_prompt_tokens < 1")
        return self


SECTIONS: dict[str, tuple[str, ...]] = {
    "encoder": (
        "image_size", "patch_size", "channels", "vision_layers", "vision_dim",
        "vision_heads", "embed_dim", "lang_layers", "lang_heads", "vocab_size",
        "max_words", "ffn_ratio",
    ),
    "prompts": ("vision_prompt_tokens", "temporal_prompt_tokens", "language_prompt_tokens"),
    "model": ("fusion_dim", "str_depth", "str_heads", "window"),
    "train": (
        "clip_len", "lr", "weight_decay", "beta1", "beta2", "adam_eps",
        "dice_weight", "focal_weight", "focal_gamma", "focal_alpha", "steps",
        "teacher_force_history",
    ),
    "ablate": (
        "lang_vision_prompts", "temporal_prompts", "prtc", "history",
        "stage1", "stage2", "stage3", "st_attention",
    ),
}

_FIELD_TYPES = {f.name: f.type for f in fields(ModelConfig)}


def _parse_value(name: str, raw: str):
    kind = _FIELD_TYPES[name]
    raw = raw.strip()
    if kind == "bool":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"bad boolean for {name}: {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def parse_config(text: str) -> ModelConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unparsable config: {exc}") from exc
    values = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            values[key] = _parse_value(key, raw)
    return ModelConfig(**values).validate()


def load_config(path: str | Path) -> ModelConfig:
    return parse_config(Path(path).read_text())


def serialize_config(cfg: ModelConfig) -> str:
    parser = configparser.ConfigParser()
    for section, keys in SECTIONS.items():
        parser[section] = {key: str(getattr(cfg, key)) for key in keys}
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()


def save_config(path: str | Path, cfg: ModelConfig) -> None:
    Path(path).write_text(serialize_config(cfg))


# ----------------------------------------------------------------------
# presets
# ----------------------------------------------------------------------

def toy_config(**overrides) -> ModelConfig:
    """Desk-scale training preset: toy geometry plus optimizer settings
    that move a randomly initialized prompt stack within hundreds of steps
    (the defaults lr=5e-5 / beta2=0.999 are tuned for full-scale runs) and
    teacher-forced history so early clip-B conditioning is clean."""
    base = dict(lr=3e-3, beta2=0.99, teacher_force_history=True, steps=400)
    base.update(overrides)
    return dataclasses.replace(ModelConfig(), **base).validate()


def gradcheck_config(**overrides) -> ModelConfig:
    """Very small geometry so finite-difference sweeps stay fast."""
    base = dict(
        image_size=16, patch_size=4, vision_layers=2, vision_dim=16,
        vision_heads=2, embed_dim=8, lang_layers=1, lang_heads=2,
        vision_prompt_tokens=2, temporal_prompt_tokens=2, language_prompt_tokens=2,
        fusion_dim=8, str_depth=1, str_heads=2, window=2, clip_len=2,
        max_words=6,
    )
    base.update(overrides)
    return dataclasses.replace(ModelConfig(), **base).validate()


# ----------------------------------------------------------------------
# ablation flags
# ----------------------------------------------------------------------

_PROFILE_BASE = dict(
    lang_vision_prompts=False, temporal_prompts=False, prtc=False, history=False,
    stage1=False, stage2=False, stage3=True, st_attention="none",
)

# Rows of the component-ablation grid: each variant adds one mechanism.
VARIANT_PROFILES: dict[str, dict] = {
    "variant-1": dict(_PROFILE_BASE),
    "variant-2": dict(_PROFILE_BASE, lang_vision_prompts=True),
    "variant-3": dict(_PROFILE_BASE, lang_vision_prompts=True, temporal_prompts=True, prtc=True),
    "variant-4": dict(_PROFILE_BASE, lang_vision_prompts=True, temporal_prompts=True, prtc=True, history=True),
    "variant-5": dict(_PROFILE_BASE, lang_vision_prompts=True, temporal_prompts=True, prtc=True, history=True, stage1=True),
    "variant-6": dict(_PROFILE_BASE, lang_vision_prompts=True, temporal_prompts=True, prtc=True, history=True, stage2=True),
    "variant-7": dict(_PROFILE_BASE, lang_vision_prompts=True, temporal_prompts=True, prtc=True, history=True, stage1=True, stage2=True),
    "variant-8": dict(lang_vision_prompts=True, temporal_prompts=True, prtc=True, history=True, stage1=True, stage2=True, stage3=True, st_attention="cfmsa"),
    "variant-9": dict(lang_vision_prompts=True, temporal_prompts=True, prtc=True, history=True, stage1=True, stage2=True, stage3=True, st_attention="global"),
    "variant-10": dict(lang_vision_prompts=True, temporal_prompts=True, prtc=True, history=True, stage1=True, stage2=True, stage3=True, st_attention="w3d"),
}

_SIMPLE_FLAGS = {
    "no-prompts": dict(lang_vision_prompts=False),
    "no-temporal-prompts": dict(temporal_prompts=False, prtc=False),
    "no-history": dict(history=False),
    "no-stage1": dict(stage1=False),
    "no-stage2": dict(stage2=False),
    "no-stage3": dict(stage3=False),
}


def apply_ablation_flags(cfg: ModelConfig, flags: list[str]) -> ModelConfig:
    """Apply ablation flags to a config.

    Supported: ``variant-1`` .. ``variant-10`` profiles, ``no-temporal``
    (alias for the variant-2 wiring: every temporal mechanism removed),
    single toggles (``no-history``, ``no-stage2``, ...) and
    ``attention=cfmsa|global|w3d|none``.  Selecting two different
    attention variants is a config error.
    """
    updates: dict = {}
    attention_choice: str | None = None
    for flag in flags:
        flag = flag.strip()
        if not flag:
            continue
        if flag == "no-temporal":
            updates.update(VARIANT_PROFILES["variant-2"])
        elif flag in VARIANT_PROFILES:
            updates.update(VARIANT_PROFILES[flag])
        elif flag in _SIMPLE_FLAGS:
            updates.update(_SIMPLE_FLAGS[flag])
        elif flag.startswith("attention="):
            choice = flag.split("=", 1)[1]
            if choice not in ATTENTION_VARIANTS:
                raise ConfigError(f"unknown attention variant {choice!r}")
            if attention_choice is not None and attention_choice != choice:
                raise ConfigError(f"contradictory attention flags: {attention_choice} vs {choice}")
            attention_choice = choice
            updates["st_attention"] = choice
        else:
            raise ConfigError(f"unknown ablation flag {flag!r}")
    if updates.get("temporal_prompts") is False:
        updates["prtc"] = False
    return dataclasses.replace(cfg, **updates).validate()


def wiring_summary(cfg: ModelConfig) -> dict[str, object]:
    """Which components are active; used to audit ablation wiring."""
    return {
        "lang_vision_prompts": cfg.lang_vision_prompts,
        "temporal_prompts": cfg.temporal_prompts,
        "prtc": cfg.prtc,
        "history": cfg.history,
        "stage1": cfg.stage1,
        "stage2": cfg.stage2,
        "stage3": cfg.stage3,
        "st_attention": cfg.st_attention,
    }

from promptvos.synth.scenes import (
    COLORS,
    SHAPES,
    VOCAB,
    SynthObject,
    SynthScene,
    VideoSample,
    audit_frame_resolvable,
    expression_text,
    generate_dataset,
    render_scene,
    word_ids,
)
from promptvos.synth.dataio import load_dataset, read_pgm, read_ppm, save_dataset, write_pgm, write_ppm
from promptvos.synth.metrics import (
    EvalReport,
    clip_length_study,
    evaluate_dataset,
    f_metric,
    j_metric,
)

__all__ = [
    "COLORS",
    "EvalReport",
    "SHAPES",
    "SynthObject",
    "SynthScene",
    "VOCAB",
    "VideoSample",
    "audit_frame_resolvable",
    "clip_length_study",
    "evaluate_dataset",
    "expression_text",
    "f_metric",
    "generate_dataset",
    "j_metric",
    "load_dataset",
    "read_pgm",
    "read_ppm",
    "render_scene",
    "save_dataset",
    "word_ids",
    "write_pgm",
    "write_ppm",
]

"""Glyph transcription with spotlight attention."""

from ._core import (
    CANVAS_HEIGHT,
    CANVAS_WIDTH,
    Error,
    OverflowError,
    ParseError,
    ShapeError,
    UnknownTokenError,
    detokenize,
    episode_reward,
    evaluate,
    gen_data,
    gradcheck,
    parse,
    random_program,
    render,
    run_cli,
    tokenize,
    train,
    transcribe,
    weight_map,
)

__all__ = [
    "CANVAS_HEIGHT",
    "CANVAS_WIDTH",
    "Error",
    "OverflowError",
    "ParseError",
    "ShapeError",
    "UnknownTokenError",
    "detokenize",
    "episode_reward",
    "evaluate",
    "gen_data",
    "gradcheck",
    "parse",
    "random_program",
    "render",
    "run_cli",
    "tokenize",
    "train",
    "transcribe",
    "weight_map",
]

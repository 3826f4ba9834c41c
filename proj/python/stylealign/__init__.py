"""Retrieval-augmented style alignment for machine translation."""

import json as _json
import os as _os

from ._core import (
    ConfigError,
    DataError,
    DimensionMismatch,
    Error,
    ExemplarIndex,
    ParseError,
    ProviderError,
    TransientError,
    UndefinedStatistic,
    bin_style,
    correlation_p_value,
    cosine_similarity,
    display_name,
    format_delta,
    mock_translate,
    normalize_language,
    pearson,
    relative_std_change,
    render_prompt,
    round_to,
)
from . import _core

__version__ = "0.1.0"


def alignment_score(original, translated):
    """Style alignment A between paired score lists; A is None when undefined."""
    return _json.loads(_core._alignment_score(list(original), list(translated)))


def distribution_stats(scores):
    return _json.loads(_core._distribution_stats(list(scores)))


def report_table(style, languages, baselines, rasta, decimals=2):
    """baselines: ordered mapping of method name -> {language: A}."""
    return _json.loads(_core._report_table(style, list(languages), list(baselines.items()), dict(rasta), decimals))


def build_heatmap(cells):
    """cells: iterable of (source, target, A or None)."""
    return _json.loads(_core._build_heatmap([tuple(c) for c in cells]))


def load_corpus(path):
    return _json.loads(_core._load_corpus(_os.fspath(path)))


def generate_testbed(**spec):
    return _json.loads(_core._generate_testbed(_json.dumps(spec)))


def run(config, base_dir="", variants=()):
    """Runs the pipeline from a config dict (or a path to a JSON config) and returns the report."""
    if isinstance(config, (str, _os.PathLike)):
        path = _os.fspath(config)
        with open(path, encoding="utf-8") as fh:
            config = _json.load(fh)
        base_dir = base_dir or _os.path.dirname(path)
    return _json.loads(_core._run_pipeline(_json.dumps(config), _os.fspath(base_dir), list(variants)))

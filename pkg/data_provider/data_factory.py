import logging
import os
from dataclasses import fields

import yaml

from data_provider.data_loader import GenConfig, generate, write_dataset
from layers.Wire_Codec import decode_event
from utils.tools import ConfigError

logger = logging.getLogger(__name__)

data_dict = {
    "tweets": GenConfig,
}

STREAM_FILE = "stream.jsonl"
KB_FILE = "kb.nt"


def gen_config(path=None, **overrides):
    """GenConfig from an optional YAML document plus keyword overrides."""
    values = {}
    if path:
        with open(path, encoding="utf-8") as f:
            values = yaml.safe_load(f) or {}
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: expected a mapping of generator settings")
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(GenConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown generator settings {sorted(unknown)}")
    return GenConfig(**values)


def dataset_paths(root_path):
    base = os.path.abspath(root_path)
    return {
        "stream": os.path.join(base, STREAM_FILE),
        "kb": os.path.join(base, KB_FILE),
        "artists": os.path.join(base, "kb_artists.nt"),
        "shows": os.path.join(base, "kb_shows.nt"),
        "other": os.path.join(base, "kb_other.nt"),
        "glossary": os.path.join(base, "glossary.tsv"),
    }


def data_provider(args, cfg=None):
    """
    Paths of the dataset under ``args.root_path``, generating it first when
    missing or when ``args.regenerate`` is set.
    """
    if args.data not in data_dict:
        raise ConfigError(f"unknown dataset {args.data!r}; options: {sorted(data_dict)}")
    paths = dataset_paths(args.root_path)
    if args.regenerate or not all(os.path.exists(p) for p in paths.values()):
        os.makedirs(args.root_path, exist_ok=True)
        cfg = cfg or gen_config(args.gen_config, seed=args.seed, tweet_count=args.tweets)
        write_dataset(generate(cfg), paths["stream"], paths["kb"])
    return paths


def load_stream(path):
    with open(path, "rb") as f:
        return [decode_event(line) for line in f if line.strip()]


def load_kb_lines(*paths):
    lines = []
    for path in paths:
        with open(path, encoding="utf-8") as f:
            lines.extend(f.readlines())
    return lines

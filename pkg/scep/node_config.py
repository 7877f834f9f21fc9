import logging
import os
from dataclasses import dataclass
from typing import Optional, Tuple

import yaml

from layers.KB_Access import LOCAL, NONE, SERVICE, KbAccessMode
from layers.Query_Parser import QuerySyntaxError, parse_query
from scep.operator import OperatorConfig
from scep.window import COUNT, DEFAULT_MAX_TRIPLES, TIME, WINDOW_KINDS, AggregatorConfig
from utils.tools import ConfigError

logger = logging.getLogger(__name__)

OPERATOR_KEYS = {
    "id", "topics", "output", "window.kind", "window.max_triples", "window.width_ms", "window.merge_buffer",
    "engines", "query.file", "kb.mode", "kb.file", "kb.endpoint", "kb.reload_per_window", "engine",
    "engine.backend", "output.format", "metrics.file",
}
CLIENT_KEYS = {
    "id", "topics", "scripts", "window.kind", "window.max_triples", "window.width_ms", "window.merge_buffer",
    "sink.file",
}


def flatten(doc, prefix=""):
    """Nested mappings become dotted keys, so both YAML spellings work."""
    out = {}
    for key, value in (doc or {}).items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(flatten(value, name + "."))
        else:
            out[name] = value
    return out


def read_document(path):
    with open(path, encoding="utf-8") as f:
        try:
            doc = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: not a YAML document: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected a mapping of settings")
    return flatten(doc)


def _topics(value, where):
    if isinstance(value, str):
        value = [t.strip() for t in value.split(",")]
    topics = tuple(t for t in (value or []) if t)
    if not topics:
        raise ConfigError(f"{where}: 'topics' names no input topic")
    return topics


def _resolve(path, base_dir):
    if path is None or os.path.isabs(path) or base_dir is None:
        return path
    return os.path.join(base_dir, path)


def _require(doc, key, where):
    if doc.get(key) in (None, ""):
        raise ConfigError(f"{where}: missing required key {key!r}")
    return doc[key]


def window_config(doc, topics, where):
    kind = doc.get("window.kind", COUNT)
    if kind not in WINDOW_KINDS:
        raise ConfigError(f"{where}: window.kind must be one of {WINDOW_KINDS}, got {kind!r}")
    max_triples = int(doc.get("window.max_triples", DEFAULT_MAX_TRIPLES))
    width = doc.get("window.width_ms")
    if kind == TIME and not width:
        raise ConfigError(f"{where}: window.kind time needs window.width_ms")
    if max_triples <= 0 or (width is not None and int(width) <= 0):
        raise ConfigError(f"{where}: window sizes must be positive")
    return AggregatorConfig(
        topics, kind, max_triples, int(width) if width else None, int(doc.get("window.merge_buffer", 1024))
    )


def parse_endpoints(value, where="kb.endpoint"):
    """One address, or comma-separated name=address pairs for several SERVICE names."""
    if isinstance(value, dict):
        return {str(k): str(v) for k, v in value.items()}
    value = str(value)
    if "=" not in value:
        return value.strip()
    out = {}
    for item in value.split(","):
        name, sep, address = item.partition("=")
        if not sep or not name.strip() or not address.strip():
            raise ConfigError(f"{where}: expected name=host:port, got {item!r}")
        out[name.strip()] = address.strip()
    return out


def kb_spec_from_doc(doc, base_dir, where):
    mode = doc.get("kb.mode", NONE)
    spec = {"mode": mode, "reload": bool(doc.get("kb.reload_per_window", False))}
    if mode == LOCAL:
        files = _require(doc, "kb.file", where)
        if isinstance(files, str):
            files = [f.strip() for f in files.split(",") if f.strip()]
        spec["file"] = [_resolve(f, base_dir) for f in files]
    elif mode == SERVICE:
        spec["endpoint"] = parse_endpoints(_require(doc, "kb.endpoint", where), where)
    elif mode != NONE:
        raise ConfigError(f"{where}: kb.mode must be local, service or none, got {mode!r}")
    return spec


def kb_mode_from_spec(spec, store=None):
    mode = spec.get("mode", NONE)
    if mode == LOCAL:
        if store is not None and not spec.get("reload"):
            return KbAccessMode.local_merge(store=store)
        try:
            return KbAccessMode.from_file(spec["file"], reload_per_window=spec.get("reload", False))
        except OSError as e:
            raise ConfigError(f"cannot read kb.file {spec['file']!r}: {e}") from e
    if mode == SERVICE:
        return KbAccessMode.remote_service(spec["endpoint"])
    return KbAccessMode.none()


def operator_config(doc, base_dir=None, where="operator", kb_mode=None, overrides=None):
    """Build an OperatorConfig from a (flattened) node document."""
    doc = {**doc, **(overrides or {})}
    unknown = set(doc) - OPERATOR_KEYS
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    node_id = str(_require(doc, "id", where))
    topics = _topics(doc.get("topics"), where)
    query_file = _resolve(_require(doc, "query.file", where), base_dir)
    try:
        with open(query_file, encoding="utf-8") as f:
            query_text = f.read()
    except OSError as e:
        raise ConfigError(f"{where}: cannot read query.file {query_file!r}: {e}") from e
    try:
        query = parse_query(query_text)
    except QuerySyntaxError as e:
        raise ConfigError(f"{where}: {query_file}: {e}") from e
    kb_spec = kb_spec_from_doc(doc, base_dir, where)
    return OperatorConfig(
        id=node_id,
        aggregator=window_config(doc, topics, where),
        query=query,
        output_topic=str(_require(doc, "output", where)),
        kb_mode=kb_mode or kb_mode_from_spec(kb_spec),
        engine_count=int(doc.get("engines", 1)),
        engine=doc.get("engine", "Native"),
        backend=doc.get("engine.backend", "thread"),
        output_format=doc.get("output.format", "graph"),
        query_text=query_text,
        kb_spec=kb_spec,
        metrics_file=_resolve(doc.get("metrics.file"), base_dir),
    )


def load_operator_config(path, **kwargs):
    return operator_config(read_document(path), os.path.dirname(os.path.abspath(path)), where=path, **kwargs)


@dataclass
class ClientSettings:
    id: str
    topics: Tuple[str, ...]
    scripts: int
    window: AggregatorConfig
    sink_file: Optional[str] = None


def client_settings(doc, base_dir=None, where="client"):
    unknown = set(doc) - CLIENT_KEYS
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    topics = _topics(doc.get("topics"), where)
    scripts = int(doc.get("scripts", 1))
    if scripts < 1:
        raise ConfigError(f"{where}: scripts must be at least 1")
    return ClientSettings(
        str(doc.get("id", "client")),
        topics,
        scripts,
        window_config(doc, topics, where),
        _resolve(doc.get("sink.file"), base_dir),
    )


def load_client_settings(path):
    return client_settings(read_document(path), os.path.dirname(os.path.abspath(path)), where=path)

"""Experiment config files (YAML).

Example::

    run_id: moons
    seed: 0
    output_dir: runs/moons
    stream:
      n: 500
      noise: 0.1
      domains:
        - {kind: moons, rotation: 0}
        - {kind: moons, rotation: 30}
    hyper:
      lambda: 1.0
      tau: 0.9
      n_b: 10
    model:
      encoder: [32, 16]
    ablation:
      n_b_sweep: [0, 10, 50]

Only ``stream`` is required. Unknown keys and wrongly typed values raise
:class:`ConfigError` naming the key and its line.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .data import DomainSpec, StreamConfig
from .exceptions import ConfigError, ValidationError
from .trainer import HyperParams

_NUM = (int, float)

# key -> (accepted types, nullable)
_TOP = {
    "run_id": (str, False),
    "seed": (int, False),
    "output_dir": (str, False),
    "stream": (dict, False),
    "hyper": (dict, False),
    "model": (dict, False),
    "ablation": (dict, False),
}
_STREAM = {
    "n": (int, False),
    "n_test": (int, False),
    "noise": (_NUM, False),
    "k": (int, True),
    "means": (list, True),
    "cov_scale": (_NUM, False),
    "imbalance": (bool, False),
    "standardize": (bool, False),
    "domains": (list, False),
}
_DOMAIN = {
    "kind": (str, False),
    "rotation": (_NUM, False),
    "noise": (_NUM, True),
    "shift": (list, True),
    "means": (list, True),
    "cov_scale": (_NUM, True),
    "images": (str, True),
    "labels": (str, True),
    "test_images": (str, True),
    "test_labels": (str, True),
    "name": (str, True),
}
_HYPER = {
    "lambda": (_NUM, False),
    "tau": (_NUM, False),
    "n_b": (int, False),
    "n_p": (int, True),
    "l_projections": (int, False),
    "epochs_source": (int, False),
    "epochs_adapt": (int, False),
    "batch_size": (int, False),
    "learning_rate": (_NUM, False),
    "learning_rate_adapt": (_NUM, True),
    "normalize_swd": (bool, False),
    "reg_epsilon": (_NUM, False),
}
_MODEL = {
    "encoder": (list, False),
    "classifier_hidden": (list, False),
    "activation": (str, False),
    "embedding_activation": (str, True),
}
_ABLATION = {
    "disable_buffer": (bool, False),
    "lambda_override": (_NUM, True),
    "tau_sweep": (list, True),
    "n_b_sweep": (list, True),
    "seeds": (list, True),
}


@dataclass
class ModelConfig:
    encoder: list[int] = field(default_factory=lambda: [32, 16])
    classifier_hidden: list[int] = field(default_factory=list)
    activation: str = "relu"
    embedding_activation: str | None = None


@dataclass
class AblationConfig:
    disable_buffer: bool = False
    lambda_override: float | None = None
    tau_sweep: list[float] | None = None
    n_b_sweep: list[int] | None = None
    seeds: list[int] | None = None


@dataclass
class ExperimentConfig:
    stream: StreamConfig
    hyper: HyperParams = field(default_factory=HyperParams)
    model: ModelConfig = field(default_factory=ModelConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    seed: int = 0
    run_id: str = "run"
    output_dir: str = "runs"

    def effective_hyper(self) -> HyperParams:
        """Hyperparameters after applying ablation flags and the run seed."""
        h = replace(self.hyper, seed=self.seed)
        if self.ablation.disable_buffer:
            h = replace(h, n_b=0)
        if self.ablation.lambda_override is not None:
            h = replace(h, lambda_=float(self.ablation.lambda_override))
        return h


class _Located:
    """YAML value tree with the source line (1-based) of every key."""

    def __init__(self, text: str):
        loader = yaml.SafeLoader(text)
        try:
            node = loader.get_single_node()
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError(f"invalid YAML: {exc}", line=mark.line + 1 if mark else None) from exc
        self.loader = loader
        self.lines: dict[str, int] = {}
        self.value = self._convert(node, "") if node is not None else {}

    def _convert(self, node, path):
        if isinstance(node, yaml.MappingNode):
            out = {}
            for knode, vnode in node.value:
                key = str(self.loader.construct_object(knode))
                sub = f"{path}.{key}" if path else key
                if key in out:
                    raise ConfigError("duplicate key", sub, knode.start_mark.line + 1)
                self.lines[sub] = knode.start_mark.line + 1
                out[key] = self._convert(vnode, sub)
            return out
        if isinstance(node, yaml.SequenceNode):
            items = []
            for i, item in enumerate(node.value):
                sub = f"{path}[{i}]"
                self.lines[sub] = item.start_mark.line + 1
                items.append(self._convert(item, sub))
            return items
        return self.loader.construct_object(node, deep=True)


def _check_type(value, types, nullable, key, line):
    if value is None:
        if nullable:
            return
        raise ConfigError("value must not be null", key, line)
    types = types if isinstance(types, tuple) else (types,)
    if isinstance(value, bool) and bool not in types:
        raise ConfigError(f"expected {'/'.join(t.__name__ for t in types)}, got bool", key, line)
    if not isinstance(value, types):
        raise ConfigError(f"expected {'/'.join(t.__name__ for t in types)}, got {type(value).__name__}", key, line)


def _section(data, schema, prefix, loc: _Located):
    if not isinstance(data, dict):
        raise ConfigError("expected a mapping", prefix or None, loc.lines.get(prefix))
    for key, value in data.items():
        full = f"{prefix}.{key}" if prefix else key
        if key not in schema:
            raise ConfigError("unknown key", full, loc.lines.get(full))
        _check_type(value, *schema[key], full, loc.lines.get(full))
    return data


def _number_list(values, key, loc, kind=_NUM, nested=False):
    for i, v in enumerate(values):
        sub = f"{key}[{i}]"
        if nested:
            _check_type(v, list, False, sub, loc.lines.get(sub))
            _number_list(v, sub, loc, kind)
        else:
            _check_type(v, kind, False, sub, loc.lines.get(sub))
    return values


def _range(cond, msg, key, loc):
    if not cond:
        raise ConfigError(msg, key, loc.lines.get(key))


def config_from_text(text: str) -> ExperimentConfig:
    loc = _Located(text)
    top = _section(loc.value, _TOP, "", loc)
    if "stream" not in top:
        raise ConfigError("missing required section", "stream")

    s = _section(top["stream"], _STREAM, "stream", loc)
    if "domains" not in s:
        raise ConfigError("missing required key", "stream.domains", loc.lines.get("stream"))
    _range(len(s["domains"]) >= 1, "need at least one domain", "stream.domains", loc)
    domains = []
    for i, d in enumerate(s["domains"]):
        key = f"stream.domains[{i}]"
        _section(d, _DOMAIN, key, loc)
        if "kind" not in d:
            raise ConfigError("domain needs a 'kind'", key, loc.lines.get(key))
        _range(d["kind"] in ("moons", "blobs", "idx"), "kind must be moons, blobs or idx", f"{key}.kind", loc)
        if d.get("shift") is not None:
            _number_list(d["shift"], f"{key}.shift", loc)
        if d.get("means") is not None:
            _number_list(d["means"], f"{key}.means", loc, nested=True)
        domains.append(DomainSpec(**{k: (float(v) if k in ("rotation", "noise", "cov_scale") and v is not None else v) for k, v in d.items()}))
    stream_kw = {k: v for k, v in s.items() if k != "domains"}
    if stream_kw.get("means") is not None:
        _number_list(stream_kw["means"], "stream.means", loc, nested=True)
    for key in ("n", "n_test"):
        if key in stream_kw:
            _range(stream_kw[key] >= 2, "must be >= 2", f"stream.{key}", loc)
    if "noise" in stream_kw:
        _range(stream_kw["noise"] >= 0, "must be >= 0", "stream.noise", loc)
    stream = StreamConfig(domains, **stream_kw)

    h = _section(top.get("hyper", {}), _HYPER, "hyper", loc)
    hyper_kw = {("lambda_" if k == "lambda" else k): v for k, v in h.items()}
    for k in ("lambda_", "tau", "learning_rate", "learning_rate_adapt", "reg_epsilon"):
        if hyper_kw.get(k) is not None:
            hyper_kw[k] = float(hyper_kw[k])
    hyper = HyperParams(**hyper_kw)
    checks = [
        ("lambda", hyper.lambda_ >= 0, "must be >= 0"),
        ("tau", 0.0 <= hyper.tau < 1.0, "out of range: must lie in [0, 1)"),
        ("n_b", hyper.n_b >= 0, "must be >= 0"),
        ("n_p", hyper.n_p is None or hyper.n_p >= 1, "must be >= 1"),
        ("l_projections", hyper.l_projections >= 1, "must be >= 1"),
        ("batch_size", hyper.batch_size >= 1, "must be >= 1"),
        ("epochs_source", hyper.epochs_source >= 0, "must be >= 0"),
        ("epochs_adapt", hyper.epochs_adapt >= 0, "must be >= 0"),
        ("learning_rate", hyper.learning_rate > 0, "must be > 0"),
        ("learning_rate_adapt", hyper.learning_rate_adapt is None or hyper.learning_rate_adapt > 0, "must be > 0"),
    ]
    for key, ok, msg in checks:
        _range(ok, msg, f"hyper.{key}", loc)

    m = _section(top.get("model", {}), _MODEL, "model", loc)
    for key in ("encoder", "classifier_hidden"):
        if key in m:
            _number_list(m[key], f"model.{key}", loc, int)
            _range(all(w >= 1 for w in m[key]), "widths must be >= 1", f"model.{key}", loc)
    _range(len(m.get("encoder", [1])) >= 1, "encoder needs at least one layer", "model.encoder", loc)
    for key in ("activation", "embedding_activation"):
        if m.get(key) is not None:
            _range(m[key] in ("relu", "tanh", "identity"), "activation must be relu, tanh or identity", f"model.{key}", loc)
    model = ModelConfig(**m)

    a = _section(top.get("ablation", {}), _ABLATION, "ablation", loc)
    for key, kind in (("tau_sweep", _NUM), ("n_b_sweep", int), ("seeds", int)):
        if a.get(key) is not None:
            _range(len(a[key]) >= 1, "sweep must not be empty", f"ablation.{key}", loc)
            _number_list(a[key], f"ablation.{key}", loc, kind)
    for i, t in enumerate(a.get("tau_sweep") or []):
        _range(0.0 <= t < 1.0, "out of range: must lie in [0, 1)", f"ablation.tau_sweep[{i}]", loc)
    for i, nb in enumerate(a.get("n_b_sweep") or []):
        _range(nb >= 0, "must be >= 0", f"ablation.n_b_sweep[{i}]", loc)
    if a.get("lambda_override") is not None:
        _range(a["lambda_override"] >= 0, "must be >= 0", "ablation.lambda_override", loc)
    ablation = AblationConfig(**a)

    return ExperimentConfig(
        stream=stream,
        hyper=hyper,
        model=model,
        ablation=ablation,
        seed=top.get("seed", 0),
        run_id=top.get("run_id", "run"),
        output_dir=top.get("output_dir", "runs"),
    )


def parse_config(path) -> ExperimentConfig:
    """Read and validate a YAML experiment config; defaults fill every omitted key."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return config_from_text(text)
    except ValidationError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def config_to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    """Plain-data form of a config (suitable for ``yaml.safe_dump``)."""
    from dataclasses import asdict

    stream = asdict(cfg.stream)
    stream["domains"] = [{k: v for k, v in d.items() if v is not None} for d in stream["domains"]]
    hyper = asdict(cfg.hyper)
    hyper["lambda"] = hyper.pop("lambda_")
    hyper.pop("seed")
    abl = {k: v for k, v in asdict(cfg.ablation).items() if v is not None}
    return {
        "run_id": cfg.run_id,
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
        "stream": stream,
        "hyper": hyper,
        "model": asdict(cfg.model),
        "ablation": abl,
    }

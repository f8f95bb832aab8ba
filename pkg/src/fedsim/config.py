"""Run-config files: schema, validation with key paths, overrides, round-trip.

A run config is a YAML (or JSON) mapping with sections ``data``, ``model``,
``partition``, ``federation``, ``client_opt``, ``server_opt`` plus
``log_path`` and the required ``root_seed``. Every seed left unset resolves
to ``root_seed``, so a resolved config never depends on the wall clock.
"""

from __future__ import annotations

import json
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .engine import RoundConfig
from .errors import ConfigError, FedsimError
from .optim import ClientOptConfig, ServerOptConfig
from .partition import PartitionSpec
from .secagg import QuantizationConfig
from .tasks import SyntheticTCConfig, TaggingConfig


def _seed():
    return Field(None, ge=0, le=2**64 - 1)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class TcGenerator(_Section):
    n_classes: int = Field(20, ge=2)
    vocab_size: int = Field(500, ge=1)
    doc_min: int = Field(20, ge=1)
    doc_max: int = Field(60, ge=1)
    skew: float = Field(1.0, gt=0)
    n_train: int = Field(10000, ge=1)
    n_test: int = Field(2000, ge=0)
    n_groups: int = Field(0, ge=0)
    seed: Optional[int] = _seed()

    @model_validator(mode="after")
    def _lengths(self):
        if self.doc_min > self.doc_max:
            raise ValueError("doc_min must be <= doc_max")
        return self


class StGenerator(_Section):
    n_entity_types: int = Field(18, ge=1)
    vocab_size: int = Field(2000, ge=1)
    entity_vocab: int = Field(40, ge=1)
    sent_min: int = Field(8, ge=1)
    sent_max: int = Field(25, ge=1)
    entity_rate: float = Field(0.12, ge=0, le=1)
    n_train: int = Field(3000, ge=1)
    n_test: int = Field(600, ge=0)
    seed: Optional[int] = _seed()

    @model_validator(mode="after")
    def _lengths(self):
        if self.sent_min > self.sent_max:
            raise ValueError("sent_min must be <= sent_max")
        return self


class DataSection(_Section):
    task: Literal["tc", "st"] = "tc"
    # a manifest written by ``fedsim gen-data``; when unset the generator runs
    path: Optional[str] = None
    tc: TcGenerator = Field(default_factory=TcGenerator)
    st: StGenerator = Field(default_factory=StGenerator)


class ModelSection(_Section):
    feature_dim: int = Field(256, ge=8)
    feature_seed: Optional[int] = _seed()
    n_blocks: int = Field(1, ge=1)
    frozen: list[str] = Field(default_factory=list)
    init_scale: float = Field(0.0, ge=0)
    init_seed: Optional[int] = _seed()


class PartitionSection(_Section):
    strategy: Literal["label_dirichlet", "quantity_dirichlet", "cluster_dirichlet", "natural"] = "label_dirichlet"
    n_clients: int = Field(100, ge=1)
    alpha: Optional[float] = Field(1.0, gt=0)
    beta: Optional[float] = Field(None, gt=0)
    n_clusters: Optional[int] = Field(None, ge=1)
    prior: Optional[list[float]] = None
    seed: Optional[int] = _seed()
    # a partition file written by ``fedsim partition``; overrides the fields above
    path: Optional[str] = None


class QuantizationSection(_Section):
    bits: int = Field(32, ge=17, le=64)
    clip: float = Field(8.0, gt=0)
    headroom_bits: int = Field(4, ge=0)


class FederationSection(_Section):
    rounds: int = Field(22, ge=0)
    cohort_size: int = Field(10, ge=1)
    local_epochs: int = Field(1, ge=1)
    batch_size: int = Field(10, ge=1)
    secure: bool = False
    weighting: Literal["size", "uniform"] = "size"
    seed: Optional[int] = _seed()
    quantization: QuantizationSection = Field(default_factory=QuantizationSection)


class ClientOptSection(_Section):
    name: Literal["sgd", "adamw"] = "sgd"
    lr: float = Field(0.1, gt=0)
    momentum: float = Field(0.0, ge=0, lt=1)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    weight_decay: float = Field(0.0, ge=0)
    proximal_mu: float = Field(0.0, ge=0)


class ServerOptSection(_Section):
    lr: float = Field(1.0, gt=0)
    momentum: float = Field(0.0, ge=0, lt=1)


class RunConfig(_Section):
    root_seed: int = Field(ge=0, le=2**64 - 1)
    data: DataSection = Field(default_factory=DataSection)
    model: ModelSection = Field(default_factory=ModelSection)
    partition: PartitionSection = Field(default_factory=PartitionSection)
    federation: FederationSection = Field(default_factory=FederationSection)
    client_opt: ClientOptSection = Field(default_factory=ClientOptSection)
    server_opt: ServerOptSection = Field(default_factory=ServerOptSection)
    log_path: Optional[str] = None

    @model_validator(mode="after")
    def _fill_seeds(self):
        for section, name in SEED_FIELDS:
            obj = self
            for part in section:
                obj = getattr(obj, part)
            if getattr(obj, name) is None:
                setattr(obj, name, self.root_seed)
        return self

    # runtime objects

    def round_config(self) -> RoundConfig:
        f = self.federation
        client = self.client_opt_config()
        server = _prefixed("server_opt", lambda: ServerOptConfig(**self.server_opt.model_dump()))
        quant = _prefixed("federation.quantization", lambda: QuantizationConfig(**f.quantization.model_dump()))
        return _prefixed("federation", lambda: RoundConfig(
            total_rounds=f.rounds,
            cohort_size=f.cohort_size,
            local_epochs=f.local_epochs,
            batch_size=f.batch_size,
            client_opt=client,
            server_opt=server,
            seed=f.seed,
            secure=f.secure,
            weighting=f.weighting,
            quantization=quant,
        ), rename={"total_rounds": "rounds"})

    def client_opt_config(self) -> ClientOptConfig:
        return _prefixed("client_opt", lambda: ClientOptConfig(**self.client_opt.model_dump()))

    def partition_spec(self) -> PartitionSpec:
        p = self.partition
        return _prefixed("partition", lambda: PartitionSpec(
            strategy=p.strategy, n_clients=p.n_clients, alpha=p.alpha, beta=p.beta,
            prior=p.prior, n_clusters=p.n_clusters, seed=p.seed,
        ))

    def generator_config(self):
        d = self.data
        if d.task == "tc":
            return _prefixed("data.tc", lambda: SyntheticTCConfig(**d.tc.model_dump()))
        return _prefixed("data.st", lambda: TaggingConfig(**d.st.model_dump()))


SEED_FIELDS = (
    (("data", "tc"), "seed"),
    (("data", "st"), "seed"),
    (("model",), "feature_seed"),
    (("model",), "init_seed"),
    (("partition",), "seed"),
    (("federation",), "seed"),
)


def _prefixed(prefix, build, rename=None):
    rename = rename or {}
    try:
        return build()
    except ConfigError as exc:
        errors = [(f"{prefix}.{rename.get(k, k)}", why) for k, why in exc.errors]
        raise ConfigError(f"{prefix}: {exc}", errors) from None


def _from_validation(exc: ValidationError) -> ConfigError:
    errors = []
    for e in exc.errors():
        path = ".".join(str(p) for p in e["loc"]) or "<root>"
        reason = "unknown key" if e["type"] == "extra_forbidden" else e["msg"]
        errors.append((path, reason))
    lines = "; ".join(f"{k}: {why}" for k, why in errors)
    return ConfigError(f"invalid config: {lines}", errors)


def load_text(text: str) -> dict:
    """YAML is a superset of JSON, so one loader serves both."""
    try:
        doc = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML/JSON: {exc}", [("<root>", "parse error")]) from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping", [("<root>", "expected a mapping")])
    return doc


def validate(doc: dict) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise _from_validation(exc) from None
    # constraints that live in the runtime dataclasses surface here with key paths
    cfg.partition_spec()
    rc = cfg.round_config()
    if rc.secure:
        _prefixed("federation", lambda: rc.quantization.check_cohort(rc.cohort_size))
    cfg.generator_config()
    return cfg


def parse_config(text: str, overrides=()) -> RunConfig:
    """Parse and fully validate a run config; raises ConfigError with key paths."""
    doc = load_text(text)
    for key, value in overrides:
        apply_override(doc, key, value)
    return validate(doc)


def load_config(path, overrides=()) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", [("<file>", str(exc))]) from None
    return parse_config(text, overrides)


def apply_override(doc: dict, key: str, value) -> None:
    """Set ``a.b.c`` in a nested dict; string values are read as YAML scalars."""
    if isinstance(value, str):
        try:
            value = yaml.safe_load(value)
        except yaml.YAMLError:
            pass
    parts = key.split(".")
    node = doc
    for part in parts[:-1]:
        nxt = node.get(part)
        if nxt is None:
            nxt = node[part] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(f"cannot override {key}: {part} is not a section", [(key, "not a section")])
        node = nxt
    node[parts[-1]] = value


def to_dict(cfg: RunConfig) -> dict:
    return cfg.model_dump(mode="json")


def serialize(cfg: RunConfig, fmt: str = "yaml") -> str:
    doc = to_dict(cfg)
    if fmt == "json":
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"
    return yaml.safe_dump(doc, sort_keys=True)


def defaults_text() -> str:
    """The fully defaulted config (root_seed 0), used in ``--help``."""
    return serialize(RunConfig(root_seed=0))


__all__ = [
    "ConfigError",
    "FedsimError",
    "RunConfig",
    "apply_override",
    "defaults_text",
    "load_config",
    "parse_config",
    "serialize",
    "to_dict",
    "validate",
]

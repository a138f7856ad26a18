"""Experiment configuration: flat ``key=value`` files and labelled seed derivation."""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

from .attacks import AttackParams
from .defenses import SegmentParams
from .store import StoreParams
from .trace import SyntheticCorpusParams


def derive_seed(root: int, label: str) -> int:
    """64-bit seed for one module or cell, derived from the root seed by labelled hashing."""
    d = hashlib.sha256(f"{root}:{label}".encode()).digest()
    return int.from_bytes(d[:8], "big")


_SECTIONS = {
    "gen": SyntheticCorpusParams,
    "attack": AttackParams,
    "segment": SegmentParams,
    "store": StoreParams,
}


@dataclass
class ExperimentConfig:
    subcommand: str = "run-all"
    seed: int = 0
    output: str = "out"
    inputs: list[str] = field(default_factory=list)
    gen: SyntheticCorpusParams = field(default_factory=SyntheticCorpusParams)
    attack: AttackParams = field(default_factory=AttackParams)
    segment: SegmentParams = field(default_factory=SegmentParams)
    store: StoreParams = field(default_factory=StoreParams)

    def to_text(self) -> str:
        lines = [f"subcommand={self.subcommand}", f"seed={self.seed}",
                 f"output={self.output}", f"inputs={','.join(self.inputs)}"]
        for section in _SECTIONS:
            obj = getattr(self, section)
            for f in fields(obj):
                value = getattr(obj, f.name)
                lines.append(f"{section}.{f.name}={'' if value is None else value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        top: dict = {}
        nested: dict[str, dict] = {s: {} for s in _SECTIONS}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"config line {lineno}: expected key=value")
            key, value = key.strip(), value.strip()
            section, dot, name = key.partition(".")
            if dot:
                if section not in _SECTIONS:
                    raise ValueError(f"config line {lineno}: unknown section {section!r}")
                nested[section][name] = value
            else:
                top[key] = value
        cfg = cls()
        if "subcommand" in top:
            cfg.subcommand = top["subcommand"]
        if "seed" in top:
            cfg.seed = int(top["seed"])
        if "output" in top:
            cfg.output = top["output"]
        if top.get("inputs"):
            cfg.inputs = [p for p in top["inputs"].split(",") if p]
        for section, values in nested.items():
            if values:
                setattr(cfg, section, _coerce(_SECTIONS[section], getattr(cfg, section), values))
        return cfg

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text())


def _coerce(kind, current, values: dict[str, str]):
    types = {f.name: f.type for f in fields(kind)}
    kwargs = {}
    for name, raw in values.items():
        if name not in types:
            raise ValueError(f"unknown {kind.__name__} field {name!r}")
        default = getattr(current, name)
        kwargs[name] = _parse_value(raw, default, str(types[name]))
    return dataclasses.replace(current, **kwargs)


def _parse_value(raw: str, default, type_name: str):
    if raw == "" and "None" in type_name:
        return None
    if "bool" in type_name:
        return raw.lower() in ("1", "true", "yes", "on")
    if "int" in type_name and "float" not in type_name:
        return int(raw)
    if "float" in type_name:
        return float(raw)
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    return raw

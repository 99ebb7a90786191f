"""Run configuration: plain `key = value` text files with validation."""

from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass
class RunConfig:
    seed: int = 0
    epochs: int = 60
    warmup_epochs: int = 10          # source-only task supervision before PL
    eta: float = 0.93                # pseudo-label confidence threshold
    T: int = 8
    lambda1: float = 1.0             # mutual information
    lambda2: float = 1.0             # adversarial
    lambda3: float = 1.0             # triplet
    lambda4: float = 1.0             # task
    margin: float = 1.0
    lr0: float = 1e-3
    weight_decay: float = 1e-4
    batch: int = 32
    dz_d: int = 16
    dz_t: int = 16
    hidden: int = 256
    relation_dim: int = 128
    mode: str = "image"              # image | feature
    grl_beta: float = 1.0
    free_bits: float = 0.5           # per-dim KL floor against collapse
    exclusive_dynamic: bool = False  # condition q(z_t) on frames 1..t-1
    cls_norm_total: bool = False     # divide task loss by all sequences
    no_mi: bool = False
    no_adv: bool = False
    no_ctc: bool = False
    no_cls: bool = False
    no_pl: bool = False

    def validate(self):
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ValueError("warmup_epochs must satisfy 0 <= warmup < epochs")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        for name in ("lambda1", "lambda2", "lambda3", "lambda4"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.mode not in ("image", "feature"):
            raise ValueError(f"mode must be image or feature, got {self.mode!r}")
        if self.batch % 2 != 0 or self.batch < 4:
            raise ValueError("batch must be even and >= 4")
        if self.T < 2:
            raise ValueError("T must be >= 2")
        return self


_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}


def _parse_value(field_type, raw: str):
    if field_type is bool:
        if raw.lower() not in _BOOL:
            raise ValueError(f"expected a boolean, got {raw!r}")
        return _BOOL[raw.lower()]
    return field_type(raw)


def parse_config_text(text: str) -> RunConfig:
    cfg = RunConfig()
    types = {f.name: f.type if isinstance(f.type, type) else type(getattr(cfg, f.name))
             for f in fields(RunConfig)}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in types:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        try:
            setattr(cfg, key, _parse_value(types[key], raw))
        except ValueError as e:
            raise ValueError(f"line {lineno}: bad value for {key!r}: {e}") from e
    return cfg.validate()


def parse_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read())


def config_text(cfg: RunConfig) -> str:
    """Serialize a config back to the parseable text form."""
    lines = []
    for f in fields(RunConfig):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"

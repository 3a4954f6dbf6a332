"""Run configuration: a flat ``section.key=value`` text file plus overrides.

Example::

    # covxr.cfg
    seed=7
    model.backbone_id=resnet50-imagenet
    train.epochs=10
    train.batch_size=64
    augment.channel_means=103.939,116.779,123.68
    eval.threshold=0.5
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import CovXRError
from .model import ModelSpec
from .preprocess import AugmentConfig
from .train import TrainConfig

SNAPSHOT_FILE = "run_config.txt"


class ConfigError(CovXRError, ValueError):
    pass


# dataclass fields that are not user-settable through the file
_HIDDEN = {("model", "input_size"), ("train", "seed"), ("train", "checkpoint_dir")}


@dataclass(frozen=True)
class RunConfig:
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    model: ModelSpec = field(default_factory=ModelSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    pretrained: bool = True
    train_fraction: float = 0.8
    threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction <= 1:
            raise ConfigError(f"train.train_fraction must lie in (0, 1], got {self.train_fraction}")
        if not 0 < self.threshold < 1:
            raise ConfigError(f"eval.threshold must lie in (0, 1), got {self.threshold}")

    def items(self) -> list[tuple[str, object]]:
        """Every settable key with its effective value, in file order."""
        out = [("seed", self.seed)]
        for section in ("augment", "model", "train"):
            obj = getattr(self, section)
            for f in fields(obj):
                if (section, f.name) not in _HIDDEN:
                    out.append((f"{section}.{f.name}", getattr(obj, f.name)))
        out += [
            ("model.pretrained", self.pretrained),
            ("train.train_fraction", self.train_fraction),
            ("eval.threshold", self.threshold),
        ]
        return out

    def to_text(self) -> str:
        return "".join(f"{k}={_format(v)}\n" for k, v in self.items())

    def write_snapshot(self, out_dir) -> Path:
        path = Path(out_dir) / SNAPSHOT_FILE
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text(), encoding="utf-8")
        return path


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(repr(x) for x in v)
    return str(v)


def _parse(key: str, raw: str, like):
    raw = raw.strip()
    try:
        if isinstance(like, bool):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(like, int):
            return int(raw)
        if isinstance(like, float):
            return float(raw)
        if isinstance(like, tuple):
            return tuple(float(x) for x in raw.split(","))
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(like).__name__}") from None


def parse_pairs(text: str, origin: str = "<config>") -> dict[str, str]:
    pairs = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{n}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        pairs[k.strip()] = v.strip()
    return pairs


def build_config(pairs: dict[str, str], base: RunConfig | None = None) -> RunConfig:
    """Apply ``key -> raw string`` settings on top of ``base`` (defaults if None)."""
    cfg = base or RunConfig()
    current = dict(cfg.items())
    unknown = sorted(set(pairs) - set(current))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}; valid keys: {', '.join(current)}")
    values = {k: _parse(k, v, current[k]) for k, v in pairs.items()}

    sections = {}
    top = {}
    for k, v in values.items():
        if k == "seed":
            top["seed"] = v
        elif k == "model.pretrained":
            top["pretrained"] = v
        elif k == "train.train_fraction":
            top["train_fraction"] = v
        elif k == "eval.threshold":
            top["threshold"] = v
        else:
            section, name = k.split(".", 1)
            sections.setdefault(section, {})[name] = v
    try:
        for section, changes in sections.items():
            top[section] = replace(getattr(cfg, section), **changes)
        return replace(cfg, **top)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Defaults, then the file at ``path``, then ``overrides``."""
    pairs = {}
    if path is not None:
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        pairs.update(parse_pairs(text, str(path)))
    pairs.update(overrides or {})
    return build_config(pairs)

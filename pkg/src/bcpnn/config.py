"""Run configuration: sectioned ``key = value`` text parsed with configparser.

Example::

    [network]
    h_hid = 30
    m_hid = 100
    fanin = 78
    connectivity = structural

    [learning]
    alpha = 1e-4
    noise = 1e-3
    epochs = 5

    [structural]
    n_swap = 100
    t_swap = 500
    rho = 1.1

    [encoder]
    kind = intensity

    [data]
    train_images = mnist/train-images-idx3-ubyte.gz
    train_labels = mnist/train-labels-idx1-ubyte.gz
    test_images = mnist/t10k-images-idx3-ubyte.gz
    test_labels = mnist/t10k-labels-idx1-ubyte.gz

    [seeds]
    network = 0

    [output]
    dir = runs/mnist

Relative data paths resolve against the config file's directory. The
``BCPNN_OUTPUT_DIR`` environment variable overrides ``[output] dir``.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .encoding import DogFilterBank
from .errors import ConfigurationError
from .evaluation import ProbeConfig
from .trainer import TrainingConfig

OUTPUT_ENV = "BCPNN_OUTPUT_DIR"
ENCODERS = ("intensity", "dog", "gmm")
DATA_FORMATS = ("idx", "raw")

_SECTIONS = {
    "network": {"h_hid", "m_hid", "fanin", "connectivity", "local_patch"},
    "learning": {"alpha", "noise", "epochs", "trace_floor", "engine", "pre_init"},
    "structural": {"n_swap", "t_swap", "rho", "prospective_fanout"},
    "encoder": {
        "kind", "gmm_k", "sigma_small", "sigma_large", "small_size", "large_size",
        "gain", "polarity", "channel_mode", "boundary",
    },
    "data": {"format", "train_images", "train_labels", "test_images", "test_labels", "limit_train", "limit_test"},
    "probe": {"lr", "beta1", "beta2", "eps", "batch", "epochs"},
    "seeds": {"network", "shuffle", "noise", "probe", "encoder"},
    "output": {"dir", "run_id"},
    "sweep": {"n_hid", "m_hid", "fanin", "repeats"},
}


@dataclass(frozen=True)
class EncoderConfig:
    kind: str = "intensity"
    gmm_k: int = 10
    dog: DogFilterBank = field(default_factory=DogFilterBank)


@dataclass(frozen=True)
class DataConfig:
    format: str = "idx"
    train_images: Path | None = None
    train_labels: Path | None = None
    test_images: Path | None = None
    test_labels: Path | None = None
    limit_train: int | None = None
    limit_test: int | None = None


@dataclass(frozen=True)
class SweepGrid:
    n_hid: tuple[int, ...] = ()  # total hidden minicolumns h_hid * m_hid
    m_hid: tuple[int, ...] = ()
    fanin: tuple[int, ...] = ()
    repeats: int = 1


@dataclass(frozen=True)
class RunConfig:
    training: TrainingConfig = field(default_factory=TrainingConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    data: DataConfig = field(default_factory=DataConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    sweep: SweepGrid = field(default_factory=SweepGrid)
    seed_probe: int = 0
    seed_encoder: int = 0
    engine: str = "fast"
    output_dir: Path = Path("runs")
    run_id: str = "run"

    @property
    def resolved_output_dir(self) -> Path:
        env = os.environ.get(OUTPUT_ENV)
        return Path(env) if env else self.output_dir


def _convert(section: str, key: str, raw: str, target):
    try:
        if isinstance(target, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(target, int):
            return int(raw)
        if isinstance(target, float):
            return float(raw)
    except ValueError:
        raise ConfigurationError(f"[{section}] {key}: cannot parse {raw!r} as {type(target).__name__}") from None
    return raw.strip()


def _int_list(section: str, key: str, raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in raw.replace(",", " ").split())
    except ValueError:
        raise ConfigurationError(f"[{section}] {key}: expected a list of integers, got {raw!r}") from None


def _apply(obj, section: str, values: dict, mapping: dict[str, str] | None = None):
    """Copy of dataclass ``obj`` with ``values`` converted to each field's type."""
    mapping = mapping or {}
    known = {f.name for f in fields(obj)}
    kwargs = {}
    for key, raw in values.items():
        name = mapping.get(key, key)
        if name not in known:
            continue
        current = getattr(obj, name)
        if current is None and name == "trace_floor":
            kwargs[name] = _convert(section, key, raw, 0.0)
        else:
            kwargs[name] = _convert(section, key, raw, current)
    try:
        return type(obj)(**{**{f.name: getattr(obj, f.name) for f in fields(obj)}, **kwargs})
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"[{section}] {exc}") from None


def parse_config(text: str, base_dir: Path | str = ".") -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigurationError(f"unknown section [{section}]")
        unknown = set(cp[section]) - _SECTIONS[section]
        if unknown:
            raise ConfigurationError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    sec = {s: dict(cp[s]) for s in cp.sections()}
    base = Path(base_dir)

    training = TrainingConfig()
    training = _apply(training, "network", sec.get("network", {}))
    learning = dict(sec.get("learning", {}))
    engine = learning.pop("engine", "fast").strip()
    if engine not in ("fast", "reference"):
        raise ConfigurationError(f"[learning] engine must be 'fast' or 'reference', got {engine!r}")
    training = _apply(training, "learning", learning)
    training = _apply(training, "structural", sec.get("structural", {}))
    training = _apply(
        training, "seeds", sec.get("seeds", {}),
        {"network": "seed_network", "shuffle": "seed_shuffle", "noise": "seed_noise"},
    )

    enc = dict(sec.get("encoder", {}))
    kind = enc.pop("kind", "intensity").strip()
    if kind not in ENCODERS:
        raise ConfigurationError(f"[encoder] kind must be one of {ENCODERS}, got {kind!r}")
    gmm_k = int(_convert("encoder", "gmm_k", enc.pop("gmm_k", "10"), 0))
    dog = _apply(DogFilterBank(), "encoder", enc)
    encoder = EncoderConfig(kind, gmm_k, dog)

    d = dict(sec.get("data", {}))
    fmt = d.get("format", "idx").strip()
    if fmt not in DATA_FORMATS:
        raise ConfigurationError(f"[data] format must be one of {DATA_FORMATS}, got {fmt!r}")
    paths = {k: base / d[k].strip() for k in ("train_images", "train_labels", "test_images", "test_labels") if k in d}
    limits = {k: int(_convert("data", k, d[k], 0)) for k in ("limit_train", "limit_test") if k in d}
    data = DataConfig(fmt, **paths, **limits)

    probe = _apply(ProbeConfig(), "probe", sec.get("probe", {}))

    sw = sec.get("sweep", {})
    grid = SweepGrid(
        _int_list("sweep", "n_hid", sw["n_hid"]) if "n_hid" in sw else (training.h_hid * training.m_hid,),
        _int_list("sweep", "m_hid", sw["m_hid"]) if "m_hid" in sw else (training.m_hid,),
        _int_list("sweep", "fanin", sw["fanin"]) if "fanin" in sw else (training.fanin,),
        int(_convert("sweep", "repeats", sw.get("repeats", "1"), 0)),
    )
    if grid.repeats < 1:
        raise ConfigurationError(f"[sweep] repeats must be >= 1, got {grid.repeats}")

    seeds = sec.get("seeds", {})
    out = sec.get("output", {})
    return RunConfig(
        training=training,
        encoder=encoder,
        data=data,
        probe=probe,
        sweep=grid,
        seed_probe=int(_convert("seeds", "probe", seeds.get("probe", "0"), 0)),
        seed_encoder=int(_convert("seeds", "encoder", seeds.get("encoder", "0"), 0)),
        engine=engine,
        output_dir=base / out.get("dir", "runs").strip(),
        run_id=out.get("run_id", "run").strip(),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {path} not found")
    return parse_config(path.read_text(encoding="utf-8"), path.parent)

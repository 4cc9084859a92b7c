"""INI run configuration with typed, validated keys."""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable

from moldiff.denoiser import DenoiserConfig
from moldiff.diffusion import ScheduleConfig
from moldiff.trainer import ModelConfig, TrainConfig


class ConfigError(ValueError):
    """Unknown or invalid configuration entry."""


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none", "default") else float(text)


def _opt_int(text: str) -> int | None:
    return None if text.strip().lower() in ("", "none", "default") else int(text)


def _list(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def _choice(*options: str) -> Callable[[str], str]:
    def parse(text: str) -> str:
        value = text.strip()
        if value not in options:
            raise ValueError(f"expected one of {options}, got {value!r}")
        return value
    return parse


def _positive(conv: Callable[[str], Any]) -> Callable[[str], Any]:
    def parse(text: str):
        v = conv(text)
        if v <= 0:
            raise ValueError(f"must be positive, got {v}")
        return v
    return parse


def _non_negative(conv: Callable[[str], Any]) -> Callable[[str], Any]:
    def parse(text: str):
        v = conv(text)
        if v < 0:
            raise ValueError(f"must be non-negative, got {v}")
        return v
    return parse


_PATH = "path"

SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any] | str, Any]]] = {
    "data": {
        "dataset": (_PATH, None),
        "names": (_PATH, None),
        "vocab": (_PATH, None),
        "max_len": (_positive(int), 96),
        "vocab_size": (_opt_int, None),
        "desc_mode": (_choice("names", "smiles"), "names"),
        "properties": (_list, None),
    },
    "model": {
        "L": (_positive(int), 4),
        "d": (_positive(int), 32),
        "d2": (_positive(int), 128),
        "heads": (_positive(int), 4),
        "d1": (_positive(int), 128),
        "text_layers": (_positive(int), 2),
        "text_heads": (_positive(int), 4),
        "max_text_len": (_positive(int), 128),
        "text_frozen": (_bool, False),
        "seed": (_non_negative(int), 0),
    },
    "schedule": {
        "kind": (_choice("linear", "sqrt", "cosine"), "linear"),
        "T": (_positive(int), 2000),
        "beta_min": (_opt_float, None),
        "beta_max": (_opt_float, None),
        "beta0": (_choice("min", "repeat", "zero"), "min"),
    },
    "train": {
        "lr": (_non_negative(float), 5e-5),
        "warmup": (_non_negative(int), 0),
        "batch_size": (_positive(int), 16),
        "steps": (_non_negative(int), 1000),
        "sigma0": (_non_negative(float), 0.05),
        "seed": (_non_negative(int), 0),
        "w_mse": (_non_negative(float), 1.0),
        "w_nll": (_non_negative(float), 1.0),
        "tau": (_positive(float), 1.0),
        "log_every": (_positive(int), 50),
        "ckpt_every": (_non_negative(int), 0),
        "out_dir": (_PATH, "run"),
    },
    "sample": {
        "checkpoint": (_PATH, None),
        "init": (_choice("source", "noise"), "source"),
        "steps": (_opt_int, None),
        "t_start": (_opt_int, None),
        "seed": (_non_negative(int), 0),
        "batch_size": (_positive(int), 32),
        "clamp": (_bool, False),
        "output": (_PATH, "samples.jsonl"),
    },
    "eval": {
        "outputs": (_PATH, None),
        "report": (_PATH, "report.json"),
        "thresholds": (_list, None),
    },
    "errsim": {
        "T": (_positive(int), 1000),
        "schedules": (_list, ["linear", "sqrt", "cosine"]),
        "sigma": (_non_negative(float), 1.0),
        "eta": (_positive(float), 1.0),
        "H": (_positive(float), 1.0),
        "trials": (_positive(int), 10_000),
        "seed": (_non_negative(int), 0),
        "out_dir": (_PATH, "errsim"),
    },
}


@dataclass
class RunConfig:
    values: dict[str, dict[str, Any]]
    base_dir: Path

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.values[section]

    def model_config(self) -> ModelConfig:
        m, s = self["model"], self["schedule"]
        den = DenoiserConfig(L=m["L"], d=m["d"], d2=m["d2"], heads=m["heads"], n=self["data"]["max_len"],
                             d1=m["d1"], T=s["T"])
        return ModelConfig(den, m["text_layers"], m["text_heads"], m["max_text_len"], m["text_frozen"])

    def schedule_config(self) -> ScheduleConfig:
        s = self["schedule"]
        return ScheduleConfig(s["kind"], s["T"], s["beta_min"], s["beta_max"], s["beta0"])

    def train_config(self) -> TrainConfig:
        t = self["train"]
        return TrainConfig(lr=t["lr"], warmup=t["warmup"], batch_size=t["batch_size"], steps=t["steps"],
                           sigma0=t["sigma0"], seed=t["seed"], w_mse=t["w_mse"], w_nll=t["w_nll"],
                           tau=t["tau"], log_every=t["log_every"], ckpt_every=t["ckpt_every"])

    def thresholds(self) -> dict[str, tuple[str, float]]:
        """``eval.thresholds`` entries of the form ``name:abs:0.1`` or ``name:rel:0.05``."""
        out = {}
        for item in self["eval"]["thresholds"] or []:
            try:
                name, kind, value = item.split(":")
                if kind not in ("abs", "rel"):
                    raise ValueError(kind)
                out[name] = (kind, float(value))
            except ValueError as exc:
                raise ConfigError(f"bad threshold entry {item!r} (want name:abs|rel:value)") from exc
        return out

    def validate(self) -> None:
        """Cross-key checks performed by the owning modules' constructors."""
        try:
            self.model_config()
            self.schedule_config().build()
            self.train_config()
            self.thresholds()
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc


def _convert(section: str, key: str, raw: str, base: Path) -> Any:
    conv, _ = SCHEMA[section][key]
    if conv == _PATH:
        value = raw.strip()
        if not value:
            return None
        p = Path(value).expanduser()
        return p if p.is_absolute() else (base / p)
    try:
        return conv(raw)  # type: ignore[operator]
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc


def load_config(path: str | Path | None = None, overrides: Iterable[str] = ()) -> RunConfig:
    """Defaults, then the INI file, then ``section.key=value`` overrides.

    Relative paths in the file resolve against the file's directory; paths
    given as overrides resolve against the working directory.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case (``L``, ``T``)
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        base = path.resolve().parent
    values: dict[str, dict[str, Any]] = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (conv, default) in keys.items():
            if conv == _PATH and isinstance(default, str):
                default = Path.cwd() / default
            values[section][key] = default
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[section][key] = _convert(section, key, raw, base)
    for item in overrides:
        name, sep, raw = item.partition("=")
        section, dot, key = name.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown override key {name!r}")
        values[section][key] = _convert(section, key, raw, Path.cwd())
    cfg = RunConfig(values, base)
    cfg.validate()
    return cfg

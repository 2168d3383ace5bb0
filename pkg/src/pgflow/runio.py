"""Plain-text run artifacts: key-value configs, manifests, metrics, samples.

Everything is line-oriented text so runs can be diffed and plotted with
ordinary tools.
"""

from __future__ import annotations

import os

import numpy as np

from .flow import MetricsRecord

CONFIG_DEFAULTS = {
    "mode": None,            # required
    "lambda": "0.05",
    "T": "5",
    "K": "5",
    "L": "1",
    "f": "reverse_kl",
    "widths_U": "512,512,512",
    "widths_phi": "256,256,256",
    "M": "64",
    "N_iter_U": "500",
    "N_phi_iter": "5",
    "lr": "1e-4",
    "penalty_weight": "10",
    "target.kind": None,     # required
    "target.params": "",
    "seed": "0",
    "out_dir": None,         # required
}

REQUIRED_KEYS = ("mode", "target.kind", "out_dir")


class ConfigError(ValueError):
    pass


def parse_config_text(text):
    """key = value lines; '#' comments; later keys win."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def resolve_config(path, overrides=()):
    """Defaults, then the file, then command-line overrides."""
    with open(path) as fh:
        file_cfg = parse_config_text(fh.read())
    cfg = dict(CONFIG_DEFAULTS)
    for key, value in file_cfg.items():
        if key not in cfg:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = value
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, value = item.split("=", 1)
        key = key.strip()
        if key not in cfg:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = value.strip()
    for key in REQUIRED_KEYS:
        if cfg[key] is None:
            raise ConfigError(f"missing required key {key!r}")
    return cfg


def parse_widths(s):
    return tuple(int(x) for x in s.split(",") if x.strip())


def parse_target_params(s):
    """'r=1;noise=0;embed_dim=8' with comma-separated vector values."""
    out = {}
    for part in s.split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"bad target parameter {part!r}")
        key, value = part.split("=", 1)
        key, value = key.strip(), value.strip()
        if "," in value:
            out[key] = tuple(float(v) for v in value.split(","))
        else:
            try:
                fv = float(value)
                out[key] = int(fv) if fv == int(fv) and "." not in value and "e" not in value.lower() else fv
            except ValueError:
                out[key] = value
    return out


def write_manifest(path, cfg, version):
    with open(path, "w") as fh:
        fh.write(f"# pgflow run manifest (version {version})\n")
        for key in sorted(cfg):
            fh.write(f"{key} = {cfg[key]}\n")


def read_manifest(path):
    with open(path) as fh:
        return parse_config_text(fh.read())


METRICS_HEADER = "# " + " ".join(MetricsRecord.FIELDS)


def write_metrics(path, history):
    with open(path, "w") as fh:
        fh.write(METRICS_HEADER + "\n")
        for rec in history:
            fh.write(rec.as_line() + "\n")


def read_metrics(path):
    history = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            parts = line.split()
            history.append(MetricsRecord(int(parts[0]), *[float(p) for p in parts[1:]]))
    return history


def write_samples(path, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    with open(path, "w") as fh:
        fh.write(f"# n={X.shape[0]} d={X.shape[1] if X.size else 0}\n")
        for row in X:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def read_samples(path):
    rows = []
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError(f"missing sample-file header in {path}")
        for line in fh:
            if line.strip():
                rows.append([float(v) for v in line.split()])
    return np.asarray(rows, dtype=np.float64)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path

"""Seeded samplers for reference and target distributions, plus MNIST IDX.

The manifold targets (circle, two moons) live on 1-D curves and can be
zero-padded (optionally rotated) into a higher-dimensional ambient space,
which makes them exactly singular with respect to the standard-normal
reference there.
"""

from __future__ import annotations

import struct

import numpy as np

TARGET_KINDS = ("gaussian", "gaussian_mixture", "circle", "two_moons", "checkerboard")


def sample_reference(d: int, n: int, seed: int) -> np.ndarray:
    """Standard d-dimensional normal draws."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, d))


def _embed(X, embed_dim, rotate, rng):
    n, d = X.shape
    if embed_dim < d:
        raise ValueError(f"embed_dim {embed_dim} smaller than intrinsic dim {d}")
    if embed_dim > d:
        X = np.hstack([X, np.zeros((n, embed_dim - d))])
    if rotate:
        Q, _ = np.linalg.qr(rng.standard_normal((embed_dim, embed_dim)))
        X = X @ Q.T
    return X


def sample_target(kind: str, n: int, seed: int, **params) -> np.ndarray:
    """Draw n target samples; pure function of (kind, params, seed)."""
    rng = np.random.default_rng(seed)
    if kind == "gaussian":
        m = np.atleast_1d(np.asarray(params.get("m", (0.0, 0.0)), dtype=np.float64))
        sigma = float(params.get("sigma", 1.0))
        return m[None, :] + sigma * rng.standard_normal((n, m.size))
    if kind == "gaussian_mixture":
        k = int(params.get("k", 2))
        radius = float(params.get("radius", 3.0))
        sigma = float(params.get("sigma", 0.5))
        angles = 2 * np.pi * np.arange(k) / k
        centers = radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
        idx = rng.integers(0, k, size=n)
        return centers[idx] + sigma * rng.standard_normal((n, 2))
    if kind == "circle":
        r = float(params.get("r", 1.0))
        noise = float(params.get("noise", 0.0))
        embed_dim = int(params.get("embed_dim", 2))
        theta = rng.uniform(0.0, 2 * np.pi, size=n)
        X = r * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        if noise > 0:
            X = X + noise * rng.standard_normal((n, 2))
        return _embed(X, embed_dim, bool(params.get("rotate", False)), rng)
    if kind == "two_moons":
        noise = float(params.get("noise", 0.0))
        embed_dim = int(params.get("embed_dim", 2))
        half = rng.integers(0, 2, size=n)
        theta = rng.uniform(0.0, np.pi, size=n)
        X = np.where(
            half[:, None] == 0,
            np.stack([np.cos(theta), np.sin(theta)], axis=1),
            np.stack([1.0 - np.cos(theta), -np.sin(theta) + 0.5], axis=1),
        )
        if noise > 0:
            X = X + noise * rng.standard_normal((n, 2))
        return _embed(X, embed_dim, bool(params.get("rotate", False)), rng)
    if kind == "checkerboard":
        scale = float(params.get("scale", 2.0))
        x = rng.uniform(-scale, scale, size=n)
        shift = rng.integers(0, 2, size=n) * 1.0
        y = rng.uniform(0.0, 1.0, size=n) + np.floor(x) % 2 + 2 * shift - scale
        return np.stack([x, y], axis=1)
    raise ValueError(f"unknown target kind {kind!r}")


_IDX_IMAGES_MAGIC = 0x00000803


def load_mnist(path: str, n_train: int = 6000, seed: int = 0) -> np.ndarray:
    """Read an IDX image file and return a seeded subset scaled to [0,1]."""
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) < 16:
            raise ValueError(f"truncated IDX header in {path}")
        magic, count, rows, cols = struct.unpack(">iiii", head)
        if magic != _IDX_IMAGES_MAGIC:
            raise ValueError(f"bad IDX magic {magic:#010x} in {path}")
        data = np.frombuffer(fh.read(count * rows * cols), dtype=np.uint8)
        if data.size != count * rows * cols:
            raise ValueError(f"truncated IDX payload in {path}")
    images = data.reshape(count, rows * cols).astype(np.float64) / 255.0
    rng = np.random.default_rng(seed)
    idx = rng.choice(count, size=min(n_train, count), replace=False)
    return images[idx]

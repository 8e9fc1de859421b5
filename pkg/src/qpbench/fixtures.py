"""Shipped device topologies and noise models, addressable by name."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .noise import NoiseModel, load_noise_model
from .topology import ConnectivityGraph, load_device

__all__ = ["list_devices", "list_noise_models", "device", "noise_model", "resolve"]


def _dir(kind: str):
    return resources.files("qpbench") / "data" / kind


def _names(kind: str) -> list[str]:
    return sorted(p.name[:-5] for p in _dir(kind).iterdir() if p.name.endswith(".json"))


def list_devices() -> list[str]:
    return _names("devices")


def list_noise_models() -> list[str]:
    return _names("noise")


def resolve(kind: str, name_or_path: str | Path) -> Path:
    """A filesystem path wins; otherwise look up a shipped fixture by name."""
    p = Path(name_or_path)
    if p.exists():
        return p
    if p.suffix == "" and p.name in _names(kind):
        return Path(str(_dir(kind) / f"{p.name}.json"))
    what = "device" if kind == "devices" else "noise model"
    raise FileNotFoundError(f"no such file or shipped {what} fixture: {name_or_path}")


def device(name_or_path: str | Path) -> ConnectivityGraph:
    return load_device(resolve("devices", name_or_path))


def noise_model(name_or_path: str | Path) -> NoiseModel:
    return load_noise_model(resolve("noise", name_or_path))

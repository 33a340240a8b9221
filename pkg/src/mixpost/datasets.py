"""Bundled example data: the galaxy velocities and the small fixed datasets
used by the exact-enumeration checks."""

from __future__ import annotations

from importlib import resources

import numpy as np

__all__ = ["galaxy_path", "load_galaxy", "toy_data", "TOY_NAMES"]

# Small datasets with two loose clusters, sized so that full enumeration over
# allocations stays cheap while every occupancy pattern has visible mass.
_TOYS = {
    "n5": np.array([-1.2, -0.8, -1.0, 0.9, 1.1]),
    "n6": np.array([-1.5, -1.1, -0.7, 0.8, 1.2, 1.6]),
    "n8": np.array([-2.1, -1.6, -1.2, -0.9, 0.8, 1.1, 1.5, 2.2]),
}
TOY_NAMES = tuple(sorted(_TOYS))


def toy_data(name: str) -> np.ndarray:
    """One of the fixed toy datasets ("n5", "n6", "n8")."""
    try:
        return _TOYS[name].copy()
    except KeyError:
        raise ValueError(f"unknown toy dataset {name!r}; have {TOY_NAMES}") from None


def galaxy_path():
    """Path to the bundled galaxy-velocity dataset (82 values, 1000 km/s)."""
    return resources.files("mixpost").joinpath("data/galaxy.txt")


def load_galaxy() -> np.ndarray:
    from .cli import read_dataset

    with resources.as_file(galaxy_path()) as p:
        return read_dataset(p)

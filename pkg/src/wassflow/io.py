"""CSV and JSON artifacts.

Numbers are written with 17 significant digits, '.' decimals and LF line
endings. Every writer goes through a temporary file in the target directory
that is renamed into place only after the write succeeded.
"""
from __future__ import annotations

import contextlib
import json
import os
import tempfile
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidInputError
from .measures import Density1D, Grid1D, ParticleEnsemble, TransportMap1D

ENERGY_HEADER = ("t", "entropy", "potential", "total", "kl_to_stationary", "dissipation_residual")


def fmt(v) -> str:
    v = float(v)
    if np.isnan(v):
        return "nan"
    return f"{v:.17g}"


@contextlib.contextmanager
def atomic_write(path):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]):
    with atomic_write(path) as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) if not isinstance(v, (int, np.integer)) else str(int(v)) for v in row) + "\n")


def write_json(path, obj):
    with atomic_write(path) as fh:
        json.dump(obj, fh, indent=2, sort_keys=False)
        fh.write("\n")


def _read_columns(path, expected: Sequence[str]) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if header[: len(expected)] != list(expected):
        raise InvalidInputError(f"{path}: expected header {','.join(expected)}, got {','.join(header)}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, : len(expected)]


def write_density(path, rho: Density1D):
    write_csv(path, ("x", "rho"), zip(rho.x, rho.values))


def read_density(path) -> Density1D:
    """Density CSV on a uniform grid; the grid is recovered from the centres."""
    data = _read_columns(path, ("x", "rho"))
    x, p = data[:, 0], data[:, 1]
    if x.size < 2:
        raise InvalidInputError(f"{path}: need at least two cells")
    h = (x[-1] - x[0]) / (x.size - 1)
    if np.max(np.abs(np.diff(x) - h)) > 1e-9 * max(1.0, abs(h)):
        raise InvalidInputError(f"{path}: cell centres are not uniformly spaced")
    grid = Grid1D(x[0] - h / 2, x[-1] + h / 2, x.size)
    return Density1D.normalize(grid, p)


def write_ensemble(path, ens: ParticleEnsemble):
    write_csv(path, ("x",), ((v,) for v in ens.positions))


def read_ensemble(path) -> ParticleEnsemble:
    return ParticleEnsemble(_read_columns(path, ("x",))[:, 0])


def write_trajectory(path, traj):
    """Long-format Eulerian trajectory: t,x,rho[,v]."""
    with_v = traj.velocities is not None
    header = ("t", "x", "rho", "v") if with_v else ("t", "x", "rho")

    def rows():
        for k, (t, r) in enumerate(traj):
            v = traj.velocities[k] if with_v else None
            for i, (x, p) in enumerate(zip(r.x, r.values)):
                yield (t, x, p, v[i]) if with_v else (t, x, p)

    write_csv(path, header, rows())


def write_particle_trajectory(path, times, positions):
    positions = np.asarray(positions)
    if positions.ndim == 1:
        positions = positions[:, None]

    def rows():
        for t, xs in zip(times, positions):
            for i, x in enumerate(xs):
                yield (t, i, x)

    write_csv(path, ("t", "particle_id", "x"), rows())


def write_energy_trace(path, rows):
    write_csv(path, ENERGY_HEADER, rows)


def write_map(path, tmap: TransportMap1D):
    write_csv(path, ("x", "T(x)"), zip(tmap.grid.centers, tmap.values))

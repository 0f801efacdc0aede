"""CSV and INI serialization.

CSV files carry ``# key=value`` comment lines, one header row, then rows of
full-precision floats (shortest round-trip repr), so every file parses back
to bit-identical arrays.
"""

from __future__ import annotations

import configparser
import csv
import math
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .kinematics import ChainGeometry


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, columns, rows, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], np.ndarray, dict]:
    meta = {}
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if ln.strip()]
    body = []
    for ln in lines:
        if ln.startswith("#"):
            key, _, value = ln[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
        else:
            body.append(ln)
    reader = csv.reader(body)
    columns = next(reader)
    data = np.array([[float(v) for v in row] for row in reader], dtype=float)
    return columns, data.reshape(-1, len(columns)), meta


def write_poses(path, poses, meta=None) -> Path:
    poses = np.atleast_2d(poses)
    cols = [f"q{i + 1}" for i in range(poses.shape[1])]
    return write_csv(path, cols, poses, meta)


def read_poses(path) -> np.ndarray:
    return read_csv(path)[1]


def write_betas(path, betas_rows, meta=None) -> Path:
    """One parameter vector per row."""
    betas_rows = np.atleast_2d(betas_rows)
    cols = [f"b{i + 1}" for i in range(betas_rows.shape[1])]
    return write_csv(path, cols, betas_rows, meta)


def read_betas(path) -> np.ndarray:
    return read_csv(path)[1]


def parse_model(cp: configparser.ConfigParser) -> tuple[ChainGeometry, np.ndarray | None]:
    """Geometry plus optional per-link ground-truth masses from INI sections.

    ``[model]`` holds global values; ``[link1]``, ``[link2]``, ... hold
    ``length``, ``lower``, ``upper`` and optionally ``mass``.
    """
    if not cp.has_section("model"):
        raise ConfigError("missing [model] section")
    links = sorted((s for s in cp.sections() if s.startswith("link")),
                   key=lambda s: int(s[4:]) if s[4:].isdigit() else math.inf)
    if not links or any(not s[4:].isdigit() for s in links):
        raise ConfigError("link sections must be named link1, link2, ...")
    if [int(s[4:]) for s in links] != list(range(1, len(links) + 1)):
        raise ConfigError("link sections must be numbered consecutively from 1")
    try:
        m = cp["model"]
        lengths = [cp.getfloat(s, "length") for s in links]
        lower = [cp.getfloat(s, "lower") for s in links]
        upper = [cp.getfloat(s, "upper") for s in links]
        masses = [cp.getfloat(s, "mass") for s in links if cp.has_option(s, "mass")]
        geom = ChainGeometry(np.array(lengths), np.array(lower), np.array(upper),
                             m.getfloat("total_mass"),
                             m.getfloat("wheel_radius", 0.25), m.getfloat("wheel_mass", 12.0),
                             m.getfloat("wheel_inertia", 0.375))
    except (KeyError, ValueError, configparser.Error) as exc:
        raise ConfigError(f"invalid model config: {exc}") from exc
    if masses and len(masses) != len(links):
        raise ConfigError("either every link or no link may set a mass")
    return geom, (np.array(masses) if masses else None)


def load_model(path) -> tuple[ChainGeometry, np.ndarray | None]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"model config not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.read(path)
    return parse_model(cp)


def dump_model(geom: ChainGeometry, masses=None) -> str:
    lines = ["[model]", f"total_mass = {geom.total_mass!r}",
             f"wheel_radius = {geom.wheel_radius!r}", f"wheel_mass = {geom.wheel_mass!r}",
             f"wheel_inertia = {geom.wheel_inertia!r}"]
    for i in range(geom.n_links):
        lines += ["", f"[link{i + 1}]", f"length = {float(geom.link_lengths[i])!r}",
                  f"lower = {float(geom.joint_lower[i])!r}", f"upper = {float(geom.joint_upper[i])!r}"]
        if masses is not None:
            lines.append(f"mass = {float(masses[i])!r}")
    return "\n".join(lines) + "\n"

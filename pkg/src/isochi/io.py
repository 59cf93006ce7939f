"""Run configuration and CSV spectrum files.

Config files are flat ``key = value`` text with dotted keys; ``#`` starts a
comment. Spectrum files are CSV with a ``B_mT,chi_real[,chi_imag]`` header
and optional ``#`` comment lines; a ``# units: <per_ion|si|arb>`` comment
declares the susceptibility units.

Floats are written with ``repr`` (shortest round-trip form), so reading a
written file reproduces every value bit for bit.
"""

from __future__ import annotations

import csv
import io as _io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from isochi.errors import ConfigError, SpectrumFormatError
from isochi.material import DeltaDistribution, Material, spin_ice_material
from isochi.response import KINDS, ResponseCurve

__all__ = [
    "RunConfig",
    "SpectrumFile",
    "DEFAULTS",
    "parse_config",
    "config_from_mapping",
    "read_spectrum",
    "write_spectrum",
    "write_curve",
    "write_table",
    "read_table",
    "format_float",
]

#: every accepted key with its built-in default (None = unset)
DEFAULTS: dict[str, Any] = {
    "material.x": 0.0025,
    "material.g_parallel": 19.0,
    "material.A_K": 0.2945,
    "material.nuclear_I": 3.5,
    "material.number_density_m3": None,
    "material.sites": "all",
    "distribution.delta1_K": 0.015,
    "distribution.weight1": 0.511,
    "distribution.delta2_K": 0.1,
    "distribution.weight2": 0.352,
    "grid.bmin_mT": 0.0,
    "grid.bmax_mT": 250.0,
    "grid.n": 2501,
    "temperature_K": 2.1,
    "kind": "isolated",
    "populations.mode": "boltzmann",
    "populations.prep_B_mT": 0.0,
    "populations.prep_T_K": None,
    "probe_mT": 0.0,
    "fit.min_prominence": 0.05,
    "fit.scale": False,
    "io.input": None,
    "io.output": None,
}

_FLOAT_KEYS = {
    "material.x", "material.g_parallel", "material.A_K", "material.nuclear_I",
    "material.number_density_m3", "grid.bmin_mT", "grid.bmax_mT", "temperature_K",
    "populations.prep_B_mT", "populations.prep_T_K", "probe_mT", "fit.min_prominence",
}
_INT_KEYS = {"grid.n"}
_BOOL_KEYS = {"fit.scale"}
_CHOICES = {
    "material.sites": ("all", "apical", "basal"),
    "kind": KINDS,
    "populations.mode": ("boltzmann", "frozen"),
}
_DIST_PREFIXES = ("distribution.delta", "distribution.weight")


def _is_dist_key(key: str) -> int | None:
    """Component index for ``distribution.deltaN_K`` / ``distribution.weightN`` keys."""
    if key.startswith("distribution.delta") and key.endswith("_K"):
        num = key[len("distribution.delta"):-2]
    elif key.startswith("distribution.weight"):
        num = key[len("distribution.weight"):]
    else:
        return None
    return int(num) if num.isdigit() and int(num) >= 1 else None


@dataclass(frozen=True)
class RunConfig:
    """Validated run parameters; field values in mT, energies and temperatures in K."""

    x: float
    g_parallel: float
    A_K: float
    nuclear_I: float
    number_density_m3: float | None
    sites: str
    distribution: tuple[tuple[float, float], ...]
    bmin_mT: float
    bmax_mT: float
    n: int
    temperature_K: float
    kind: str
    populations_mode: str
    prep_B_mT: float
    prep_T_K: float | None
    probe_mT: float
    min_prominence: float
    fit_scale: bool
    input: str | None
    output: str | None
    warnings: tuple[str, ...] = ()
    values: Mapping[str, Any] = field(default_factory=dict)

    def material(self) -> Material:
        mat = spin_ice_material(
            self.x, self.g_parallel, self.A_K, DeltaDistribution(self.distribution),
            self.nuclear_I, self.number_density_m3,
        )
        return mat if self.sites == "all" else mat.only(self.sites)

    def grid_T(self) -> np.ndarray:
        return np.linspace(self.bmin_mT, self.bmax_mT, self.n) * 1e-3

    def provenance(self) -> dict[str, Any]:
        """Resolved parameters for output headers; the output path is left out so reruns match byte for byte."""
        return {k: self.values[k] for k in sorted(self.values) if k != "io.output"}


def _coerce(key: str, raw: Any, where: str):
    if raw is None:
        return None
    if isinstance(raw, str):
        raw = raw.strip()
        if raw.lower() in ("", "none"):
            return None
    try:
        if key in _FLOAT_KEYS or _is_dist_key(key):
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if key in _INT_KEYS:
            f = float(raw)
            if f != int(f):
                raise ValueError
            return int(f)
        if key in _BOOL_KEYS:
            if isinstance(raw, bool):
                return raw
            low = str(raw).lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: invalid value {raw!r} for {key}") from None
    value = str(raw)
    if key in _CHOICES and value not in _CHOICES[key]:
        raise ConfigError(f"{where}: {key} must be one of {', '.join(_CHOICES[key])}, got {value!r}")
    return value


def _read_pairs(path: Path) -> tuple[dict[str, tuple[str, int]], list[str]]:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    pairs: dict[str, tuple[str, int]] = {}
    warnings: list[str] = []
    unknown: list[str] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in DEFAULTS and _is_dist_key(key) is None:
            unknown.append(f"{key} (line {lineno})")
            continue
        if key in pairs:
            warnings.append(f"{path}:{lineno}: duplicate key {key}; line {pairs[key][1]} overridden")
        pairs[key] = (value, lineno)
    if unknown:
        raise ConfigError(f"{path}: unknown keys: {', '.join(unknown)}")
    return pairs, warnings


def config_from_mapping(
    values: Mapping[str, Any],
    origins: Mapping[str, str] | None = None,
    warnings: Sequence[str] = (),
) -> RunConfig:
    """Build and validate a :class:`RunConfig` from ``DEFAULTS`` updated by ``values``.

    ``origins`` maps keys to a location string (``file:line`` or ``--flag``)
    used in error messages.
    """
    origins = dict(origins or {})
    merged: dict[str, Any] = dict(DEFAULTS)
    if any(_is_dist_key(k) is not None for k in values):
        # an explicit mixture replaces the built-in one entirely
        for key in [k for k in merged if k.startswith("distribution.")]:
            del merged[key]
    for key, raw in values.items():
        if key not in DEFAULTS and _is_dist_key(key) is None:
            raise ConfigError(f"unknown key {key}")
        merged[key] = _coerce(key, raw, origins.get(key, key))

    def where(key):
        return origins.get(key, f"{key} (default)")

    def need(cond, key, msg):
        if not cond:
            raise ConfigError(f"{where(key)}: {key} {msg}, got {merged[key]!r}")

    # distribution components: indices must pair up
    idx = sorted({_is_dist_key(k) for k in merged if _is_dist_key(k) is not None})
    comps = []
    for i in idx:
        dk, wk = f"distribution.delta{i}_K", f"distribution.weight{i}"
        d, w = merged.get(dk), merged.get(wk)
        if d is None and w is None:
            continue
        if d is None:
            raise ConfigError(f"{where(wk)}: missing required key {dk}")
        if w is None:
            raise ConfigError(f"{where(dk)}: missing required key {wk}")
        need(d > 0, dk, "must be > 0")
        need(w >= 0, wk, "must be >= 0")
        comps.append((d, w))
    comps.sort()
    if sum(w for _, w in comps) > 1 + 1e-12:
        raise ConfigError("distribution weights sum to more than 1")
    if any(b[0] == a[0] for a, b in zip(comps, comps[1:])):
        raise ConfigError("distribution gap values must be distinct")

    need(0 < merged["material.x"] <= 2, "material.x", "must lie in (0, 2]")
    need(merged["material.g_parallel"] > 0, "material.g_parallel", "must be > 0")
    need(merged["material.A_K"] > 0, "material.A_K", "must be > 0")
    nI = merged["material.nuclear_I"]
    need(nI >= 0 and float(2 * nI).is_integer(), "material.nuclear_I", "must be a non-negative half-integer")
    nd = merged["material.number_density_m3"]
    need(nd is None or nd > 0, "material.number_density_m3", "must be > 0")
    need(merged["grid.n"] >= 2, "grid.n", "must be >= 2")
    need(merged["grid.bmin_mT"] < merged["grid.bmax_mT"], "grid.bmax_mT", "must exceed grid.bmin_mT")
    need(merged["temperature_K"] > 0, "temperature_K", "must be > 0")
    need(merged["probe_mT"] >= 0, "probe_mT", "must be >= 0")
    pt = merged["populations.prep_T_K"]
    need(pt is None or pt > 0, "populations.prep_T_K", "must be > 0")
    if merged["populations.mode"] == "frozen" and pt is None:
        raise ConfigError(f"{where('populations.mode')}: frozen populations need populations.prep_T_K")
    need(0 < merged["fit.min_prominence"] < 1, "fit.min_prominence", "must lie in (0, 1)")

    shown = {k: v for k, v in merged.items() if v is not None}
    return RunConfig(
        x=merged["material.x"],
        g_parallel=merged["material.g_parallel"],
        A_K=merged["material.A_K"],
        nuclear_I=nI,
        number_density_m3=nd,
        sites=merged["material.sites"],
        distribution=tuple(comps),
        bmin_mT=merged["grid.bmin_mT"],
        bmax_mT=merged["grid.bmax_mT"],
        n=merged["grid.n"],
        temperature_K=merged["temperature_K"],
        kind=merged["kind"],
        populations_mode=merged["populations.mode"],
        prep_B_mT=merged["populations.prep_B_mT"],
        prep_T_K=pt,
        probe_mT=merged["probe_mT"],
        min_prominence=merged["fit.min_prominence"],
        fit_scale=merged["fit.scale"],
        input=merged["io.input"],
        output=merged["io.output"],
        warnings=tuple(warnings),
        values=shown,
    )


def read_config_values(path) -> tuple[dict[str, str], dict[str, str], list[str]]:
    """Raw ``(values, origins, warnings)`` from a config file, without validation."""
    path = Path(path)
    pairs, warnings = _read_pairs(path)
    values = {k: v for k, (v, _) in pairs.items()}
    origins = {k: f"{path}:{ln}" for k, (_, ln) in pairs.items()}
    return values, origins, warnings


def parse_config(path) -> RunConfig:
    """Read and validate a config file. Duplicate keys: last wins, with a recorded warning."""
    values, origins, warnings = read_config_values(path)
    return config_from_mapping(values, origins, warnings)


# --------------------------------------------------------------------------- CSV


def format_float(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class SpectrumFile:
    field_mT: np.ndarray
    chi_real: np.ndarray
    chi_imag: np.ndarray | None = None
    comments: tuple[str, ...] = ()
    units: str = "per_ion"

    def __len__(self):
        return len(self.field_mT)

    def to_curve(self, kind: str = "isolated") -> ResponseCurve:
        """Curve on an increasing tesla grid (decreasing files are reversed)."""
        f = np.asarray(self.field_mT) * 1e-3
        v = np.asarray(self.chi_real)
        if f.size > 1 and f[1] < f[0]:
            f, v = f[::-1], v[::-1]
        units = self.units if self.units in ("per_ion", "si") else "si"
        return ResponseCurve(f, v, kind, units, {"source_units": self.units})


def _provenance_lines(provenance: Mapping[str, Any] | None) -> list[str]:
    from isochi import __version__

    lines = [f"# provenance: isochi {__version__}"]
    for key, value in (provenance or {}).items():
        lines.append(f"# {key} = {value}")
    return lines


def write_table(
    path,
    columns: Mapping[str, Iterable[float]],
    provenance: Mapping[str, Any] | None = None,
    units: str | None = None,
) -> str:
    """Write named float columns as CSV with a provenance comment block.

    ``path`` may be ``None`` or ``"-"`` to only return the text.
    """
    names = list(columns)
    data = [np.asarray(list(columns[n]) if not isinstance(columns[n], np.ndarray) else columns[n], dtype=float)
            for n in names]
    if len({d.size for d in data}) > 1:
        raise ValueError("columns differ in length")
    buf = _io.StringIO()
    for line in _provenance_lines(provenance):
        buf.write(line + "\n")
    if units:
        buf.write(f"# units: {units}\n")
    buf.write(",".join(names) + "\n")
    for row in zip(*data):
        buf.write(",".join(format_float(v) for v in row) + "\n")
    text = buf.getvalue()
    if path is not None and str(path) != "-":
        Path(path).write_text(text)
    return text


def write_spectrum(spec: SpectrumFile, path, provenance: Mapping[str, Any] | None = None) -> str:
    cols = {"B_mT": spec.field_mT, "chi_real": spec.chi_real}
    if spec.chi_imag is not None:
        cols["chi_imag"] = spec.chi_imag
    return write_table(path, cols, provenance, spec.units)


def write_curve(curve: ResponseCurve, path, provenance: Mapping[str, Any] | None = None) -> str:
    """Write a curve in spectrum-file format (field converted to mT)."""
    prov = dict(provenance or {})
    prov["kind"] = curve.kind
    prov.update({k: curve.metadata[k] for k in sorted(curve.metadata)})
    return write_spectrum(SpectrumFile(curve.fields * 1e3, curve.values, units=curve.units), path, prov)


def read_table(path, required: Sequence[str], optional: Sequence[str] = ()):
    """Parse a comment-tolerant numeric CSV; returns ``(columns, comments)``.

    ``columns`` maps header names to float arrays. Errors carry the file line
    number and column name.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpectrumFormatError(f"cannot read {path}: {exc}") from None
    comments: list[str] = []
    header = None
    rows: list[tuple[int, list[str]]] = []
    for lineno, row in enumerate(csv.reader(_io.StringIO(text)), 1):
        if not row or all(not c.strip() for c in row):
            continue
        if row[0].lstrip().startswith("#"):
            comments.append(",".join(row).lstrip()[1:].strip())
            continue
        if header is None:
            header = [c.strip() for c in row]
            continue
        rows.append((lineno, row))
    if header is None:
        raise SpectrumFormatError(f"{path}: empty file (no header)")
    allowed = list(required) + list(optional)
    if header[: len(required)] != list(required) or any(h not in allowed for h in header) or len(set(header)) != len(header):
        raise SpectrumFormatError(
            f"{path}: header must be {','.join(required)}" + "".join(f"[,{o}]" for o in optional) + f", got {','.join(header)}"
        )
    if not rows:
        raise SpectrumFormatError(f"{path}: no data rows")
    data = {h: np.empty(len(rows)) for h in header}
    for r, (lineno, row) in enumerate(rows):
        if len(row) != len(header):
            raise SpectrumFormatError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        for h, cell in zip(header, row):
            try:
                v = float(cell.strip())
            except ValueError:
                raise SpectrumFormatError(f"{path}:{lineno}: column {h}: non-numeric value {cell.strip()!r}") from None
            if not math.isfinite(v):
                raise SpectrumFormatError(f"{path}:{lineno}: column {h}: non-finite value {cell.strip()!r}")
            data[h][r] = v
    data["_lines"] = np.array([ln for ln, _ in rows])
    return data, comments


def read_spectrum(path) -> SpectrumFile:
    """Read a ``B_mT,chi_real[,chi_imag]`` file; the field column must be strictly monotone."""
    data, comments = read_table(path, ("B_mT", "chi_real"), ("chi_imag",))
    f = data["B_mT"]
    if f.size > 1:
        step = np.diff(f)
        sign = 1.0 if step[0] > 0 else -1.0
        bad = np.nonzero(sign * step <= 0)[0]
        if bad.size:
            i = int(bad[0]) + 1
            raise SpectrumFormatError(
                f"{path}:{int(data['_lines'][i])}: field column not strictly monotone at data row {i + 1}"
                f" (B_mT={f[i]!r} after {f[i - 1]!r})"
            )
    units = "per_ion"
    for c in comments:
        if c.lower().startswith("units:"):
            units = c.split(":", 1)[1].strip()
    return SpectrumFile(f, data["chi_real"], data.get("chi_imag"), tuple(comments), units)

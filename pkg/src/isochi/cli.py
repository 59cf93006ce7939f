"""Command-line entry point: ``isochi <subcommand> [options]``.

Parameter precedence is CLI flag > config file (``--config``) > built-in
default. Exit codes: 0 success, 2 usage or configuration error, 1
computation, fit or data error. Diagnostics go to stderr; data go to
``--out`` files or stdout.

Relative ``--out`` paths are resolved under ``$ISOCHI_OUTPUT_DIR`` when set.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from isochi import __version__
from isochi.errors import ConfigError, IsochiError
from isochi.fitting import (
    PeakSet,
    detect_peaks,
    fit_curie,
    fit_hyperfine_A,
    fit_weights,
    infer_populations,
)
from isochi.io import (
    RunConfig,
    config_from_mapping,
    format_float,
    read_config_values,
    read_spectrum,
    read_table,
    write_curve,
    write_table,
)
from isochi.material import to_si, total_spectrum
from isochi.response import plateau_model
from isochi.ensemble import boltzmann_populations, frozen_populations
from isochi.spinmodel import SpinSpecies, block_energies, fraction_label

OUTPUT_DIR_ENV = "ISOCHI_OUTPUT_DIR"

# flag dest -> config key
_FLAG_KEYS = {
    "x": "material.x",
    "g": "material.g_parallel",
    "A": "material.A_K",
    "nuclear_I": "material.nuclear_I",
    "number_density": "material.number_density_m3",
    "sites": "material.sites",
    "bmin_mT": "grid.bmin_mT",
    "bmax_mT": "grid.bmax_mT",
    "n": "grid.n",
    "T": "temperature_K",
    "kind": "kind",
    "populations": "populations.mode",
    "prep_B_mT": "populations.prep_B_mT",
    "prep_T": "populations.prep_T_K",
    "probe_mT": "probe_mT",
    "min_prominence": "fit.min_prominence",
    "fit_scale": "fit.scale",
    "data": "io.input",
    "out": "io.output",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _add_common(p, *, grid=True, physics=True):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out", help="output CSV path (default stdout)")
    if physics:
        g = p.add_argument_group("material")
        g.add_argument("--x", type=float, help="Ho per formula unit")
        g.add_argument("--g", type=float, help="g-factor along the Ising axis")
        g.add_argument("--A", type=float, help="hyperfine constant A/k_B in K")
        g.add_argument("--nuclear-I", dest="nuclear_I", type=float, help="nuclear spin")
        g.add_argument("--number-density", dest="number_density", type=float, help="Ho ions per m^3 (SI output)")
        g.add_argument("--sites", choices=("all", "apical", "basal"))
        g.add_argument(
            "--delta", type=float, action="append",
            help="gap in K; repeat for a mixture (pair with --weight); one value alone means weight 1",
        )
        g.add_argument("--weight", type=float, action="append", help="weight of the matching --delta")
        g.add_argument("--T", type=float, help="temperature in K")
    if grid:
        g = p.add_argument_group("field grid")
        g.add_argument("--bmin-mT", dest="bmin_mT", type=float)
        g.add_argument("--bmax-mT", dest="bmax_mT", type=float)
        g.add_argument("--n", type=int, help="number of grid points")


def _add_populations(p):
    p.add_argument("--populations", choices=("boltzmann", "frozen"))
    p.add_argument("--prep-B-mT", dest="prep_B_mT", type=float, help="field at which populations froze")
    p.add_argument("--prep-T", dest="prep_T", type=float, help="temperature at which populations froze (K)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="isochi", description="Isothermal, adiabatic and isolated susceptibilities.")
    ap.add_argument("--version", action="version", version=f"isochi {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("levels", help="energy levels of one species versus field")
    _add_common(p)

    p = sub.add_parser("chi", help="susceptibility curves of the selected sites (default apical)")
    _add_common(p)
    p.add_argument("--kind", choices=("isothermal", "adiabatic", "isolated", "isolated_kubo", "all"))
    p.add_argument("--probe-mT", dest="probe_mT", type=float, help="probe amplitude in mT (isolated kind)")
    _add_populations(p)

    p = sub.add_parser("spectrum", help="total spectrum of the configured sample")
    _add_common(p)
    p.add_argument("--kind", choices=("isothermal", "adiabatic", "isolated", "isolated_kubo"))
    p.add_argument("--probe-mT", dest="probe_mT", type=float)
    p.add_argument("--si", action="store_true", help="SI volume susceptibility (needs number density)")
    _add_populations(p)

    p = sub.add_parser("plateau", help="frequency dependence between the three plateaus at one field")
    _add_common(p, grid=False)
    p.add_argument("--B-mT", dest="B_mT", type=float, default=0.0, help="bias field in mT")
    p.add_argument("--tau1", type=float, required=True, help="spin-lattice time in s")
    p.add_argument("--tau2", type=float, required=True, help="spin-spin time in s (< tau1)")
    p.add_argument("--omega-min", type=float, default=1e-2, help="rad/s")
    p.add_argument("--omega-max", type=float, default=1e8, help="rad/s")
    p.add_argument("--n-omega", type=int, default=201)

    p = sub.add_parser("fit-peaks", help="locate spectrum peaks and fit the hyperfine constant")
    _add_common(p, grid=False)
    p.add_argument("--data", help="spectrum CSV (B_mT,chi_real[,chi_imag])")
    p.add_argument("--min-prominence", dest="min_prominence", type=float)
    p.add_argument("--max-field-mT", type=float, help="ignore data above this field")
    p.add_argument("--negative", action="store_true", help="use the negative-field half instead")

    p = sub.add_parser("fit-weights", help="fit gap-mixture weights to an isolated spectrum")
    _add_common(p, grid=False)
    p.add_argument("--data", help="spectrum CSV (B_mT,chi_real[,chi_imag])")
    p.add_argument("--probe-mT", dest="probe_mT", type=float)
    p.add_argument("--fit-scale", dest="fit_scale", action="store_const", const=True,
                   help="data in arbitrary units: fit an overall scale")

    p = sub.add_parser("fit-curie", help="fit chi = C/T + chi0 to T_K,chi data")
    p.add_argument("--data", required=True, help="CSV with header T_K,chi")
    p.add_argument("--x", type=float, help="Ho per formula unit")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--out", help="output CSV path (default stdout)")

    p = sub.add_parser("populations", help="population table, or population inference from a spectrum")
    _add_common(p, grid=False)
    p.add_argument("--data", help="spectrum CSV; if given, infer populations from its peaks")
    p.add_argument("--B-mT", dest="B_mT", type=float, default=0.0, help="field for the population table")
    p.add_argument("--min-prominence", dest="min_prominence", type=float)
    _add_populations(p)
    return ap


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, the config file and flags (in increasing priority) and validate.

    ``chi`` defaults to the apical sites unless the sites are set explicitly.
    """
    values, origins, warnings = {}, {}, []
    if getattr(args, "config", None):
        values, origins, warnings = read_config_values(args.config)
    if args.command == "chi":
        values.setdefault("material.sites", "apical")
    for dest, key in _FLAG_KEYS.items():
        v = getattr(args, dest, None)
        if dest == "kind" and v == "all":
            continue
        if v is not None:
            values[key] = v
            origins[key] = "--" + dest.replace("_", "-")
    deltas = getattr(args, "delta", None)
    weights = getattr(args, "weight", None)
    if weights and not deltas:
        raise ConfigError("--weight needs matching --delta")
    if deltas:
        if weights is None:
            if len(deltas) != 1:
                raise ConfigError("several --delta values need matching --weight values")
            weights = [1.0]
        if len(weights) != len(deltas):
            raise ConfigError("--delta and --weight counts differ")
        for key in [k for k in values if k.startswith("distribution.")]:
            del values[key]
        for i, (d, w) in enumerate(zip(deltas, weights), 1):
            values[f"distribution.delta{i}_K"] = d
            values[f"distribution.weight{i}"] = w
            origins[f"distribution.delta{i}_K"] = "--delta"
            origins[f"distribution.weight{i}"] = "--weight"
    return config_from_mapping(values, origins, warnings)


def _out_path(out):
    if out is None or out == "-":
        return None
    p = Path(out)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _emit(text: str, out):
    path = _out_path(out)
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text)


def _provenance(cmd, cfg: RunConfig, **extra):
    prov = {"command": cmd}
    prov.update(cfg.provenance())
    prov.update(extra)
    return prov


def _first_species(cfg: RunConfig) -> SpinSpecies:
    mat = cfg.material()
    sp = mat.species_groups[0] if cfg.sites != "all" else max(mat.species_groups, key=lambda s: s.projection)
    delta = cfg.distribution[0][0] if cfg.distribution else 0.0
    return sp.with_delta(delta)


# --------------------------------------------------------------------------- commands


def cmd_levels(args, cfg: RunConfig):
    sp = _first_species(cfg)
    B = cfg.grid_T()
    ms = sp.m_values()
    ep, em = block_energies(sp, ms[:, None], B[None, :])
    cols = {"B_mT": B * 1e3}
    for k, m in enumerate(ms):
        cols[f"E_{fraction_label(m)}_lower_K"] = em[k]
        cols[f"E_{fraction_label(m)}_upper_K"] = ep[k]
    text = write_table(None, cols, _provenance("levels", cfg, species=sp.name, delta_K=sp.gap_delta))
    _emit(text, cfg.output)


def _curve(cfg: RunConfig, kind: str):
    return total_spectrum(
        cfg.material(), cfg.grid_T(), cfg.temperature_K, kind, cfg.populations_mode,
        cfg.probe_mT * 1e-3, cfg.prep_B_mT * 1e-3, cfg.prep_T_K,
    )


def cmd_chi(args, cfg: RunConfig):
    kind = args.kind or cfg.kind
    if kind == "all":
        B = cfg.grid_T()
        cols = {"B_mT": B * 1e3}
        for name, k in (("chi_T", "isothermal"), ("chi_S", "adiabatic"), ("chi_I", "isolated")):
            probe = cfg.probe_mT if k == "isolated" else 0.0
            c = total_spectrum(cfg.material(), B, cfg.temperature_K, k, "boltzmann", probe * 1e-3)
            cols[name] = c.values
        text = write_table(None, cols, _provenance("chi", cfg, kind="all"), "per_ion")
    else:
        text = write_curve(_curve(cfg, kind), None, _provenance("chi", cfg))
    _emit(text, cfg.output)


def cmd_spectrum(args, cfg: RunConfig):
    curve = _curve(cfg, cfg.kind)
    if args.si:
        curve = to_si(curve, cfg.number_density_m3)
    _emit(write_curve(curve, None, _provenance("spectrum", cfg)), cfg.output)


def cmd_plateau(args, cfg: RunConfig):
    if args.n_omega < 2 or not 0 < args.omega_min < args.omega_max:
        raise ConfigError("need 0 < --omega-min < --omega-max and --n-omega >= 2")
    B = np.array([args.B_mT * 1e-3])
    mat, T = cfg.material(), cfg.temperature_K
    chis = [float(total_spectrum(mat, B, T, k).values[0]) for k in ("isothermal", "adiabatic", "isolated")]
    w = np.geomspace(args.omega_min, args.omega_max, args.n_omega)
    chi = plateau_model(*chis, args.tau1, args.tau2, w)
    prov = _provenance("plateau", cfg, B_mT=args.B_mT, tau1_s=args.tau1, tau2_s=args.tau2,
                       chi_T=format_float(chis[0]), chi_S=format_float(chis[1]), chi_I=format_float(chis[2]))
    _emit(write_table(None, {"omega_rad_s": w, "chi_real": chi.real, "chi_imag": chi.imag}, prov, "per_ion"),
          cfg.output)


def _load_curve(cfg: RunConfig):
    if not cfg.input:
        raise ConfigError("--data (or io.input) is required")
    return read_spectrum(cfg.input)


def cmd_fit_peaks(args, cfg: RunConfig):
    spec = _load_curve(cfg)
    curve = spec.to_curve()
    # one field side only: crossings are symmetric and the A fit takes one sign
    side = -1.0 if args.negative else 1.0
    keep = side * curve.fields >= 0
    if args.max_field_mT is not None:
        keep &= side * curve.fields <= args.max_field_mT * 1e-3
    curve = type(curve)(curve.fields[keep], curve.values[keep], curve.kind, curve.units)
    peaks = detect_peaks(curve, cfg.min_prominence)
    mat = cfg.material()
    ap = max(mat.species_groups, key=lambda s: s.projection)
    res = fit_hyperfine_A(peaks, ap.moment_mu, ap.projection, ap.nuclear_I)
    lines = ["quantity,value,stderr"]
    for i, pk in enumerate(peaks, 1):
        lines.append(f"peak{i}_B_mT,{format_float(pk.field * 1e3)},")
        lines.append(f"peak{i}_height,{format_float(pk.height)},")
    lines.append(f"A_K,{format_float(res.parameters['A_K'])},{format_float(res.standard_errors['A_K'])}")
    print(f"# {res.model_description}", file=sys.stderr)
    _emit("\n".join(lines) + "\n", cfg.output)


def _fit_row(name, value, err):
    return f"{name},{format_float(value)},{format_float(err)}"


def cmd_fit_weights(args, cfg: RunConfig):
    spec = _load_curve(cfg)
    res = fit_weights(
        spec.to_curve(), cfg.material(), cfg.temperature_K, cfg.probe_mT * 1e-3,
        fit_scale=cfg.fit_scale, imag=spec.chi_imag,
    )
    lines = ["parameter,value,stderr"]
    for k, v in res.parameters.items():
        lines.append(_fit_row(k, v, res.standard_errors[k]))
    if res.scale is not None:
        lines.append(f"scale,{format_float(res.scale)},")
    lines.append(f"residual_norm,{format_float(res.residual_norm)},")
    print(f"# {res.model_description}", file=sys.stderr)
    _emit("\n".join(lines) + "\n", cfg.output)


def cmd_fit_curie(args, cfg: RunConfig):
    data, _ = read_table(args.data, ("T_K", "chi"))
    res = fit_curie(data["T_K"], data["chi"], cfg.x)
    lines = ["parameter,value,stderr"]
    for k, v in res.parameters.items():
        lines.append(_fit_row(k, v, res.standard_errors.get(k, float("nan"))))
    print(f"# {res.model_description}", file=sys.stderr)
    for note in res.extra.get("warnings", ()):
        print(f"warning: {note}", file=sys.stderr)
    _emit("\n".join(lines) + "\n", cfg.output)


def cmd_populations(args, cfg: RunConfig):
    if cfg.input:
        curve = read_spectrum(cfg.input).to_curve()
        peaks = detect_peaks(curve, cfg.min_prominence)
        inf = infer_populations(PeakSet(tuple(peaks)), cfg.material())
        lines = ["m_I,B_mT,height,population_difference,relative_intensity"]
        for row in zip(inf.channels, inf.fields, inf.heights, inf.population_differences, inf.relative_intensities):
            m, f, h, d, r = row
            lines.append(f"{fraction_label(m)},{format_float(f * 1e3)},{format_float(h)},{format_float(d)},{format_float(r)}")
        lines.append(f"# effective_temperature_K = {format_float(inf.effective_temperature)}")
        lines.append(f"# temperature_se_K = {format_float(inf.temperature_se)}")
        lines.append(f"# ordering_violation = {inf.ordering_violation}")
        if inf.ordering_violation:
            print("warning: peak intensities increase outward; populations are out of equilibrium", file=sys.stderr)
        _emit("\n".join(lines) + "\n", cfg.output)
        return
    sp = _first_species(cfg)
    if cfg.populations_mode == "frozen":
        pops = frozen_populations(sp, cfg.prep_B_mT * 1e-3, cfg.prep_T_K)
    else:
        pops = boltzmann_populations(sp, args.B_mT * 1e-3, cfg.temperature_K)
    lines = ["m_I,branch,probability"]
    for label, p in pops.entries.items():
        lines.append(f"{fraction_label(label.m_I)},{'lower' if label.branch < 0 else 'upper'},{format_float(p)}")
    _emit("\n".join(lines) + "\n", cfg.output)


COMMANDS = {
    "levels": cmd_levels,
    "chi": cmd_chi,
    "spectrum": cmd_spectrum,
    "plateau": cmd_plateau,
    "fit-peaks": cmd_fit_peaks,
    "fit-weights": cmd_fit_weights,
    "fit-curie": cmd_fit_curie,
    "populations": cmd_populations,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        for w in cfg.warnings:
            print(f"warning: {w}", file=sys.stderr)
        COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"isochi {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (IsochiError, ValueError, ArithmeticError, KeyError, OSError) as exc:
        print(f"isochi {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

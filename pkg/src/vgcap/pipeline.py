"""Orchestration and command-line front-end.

Three subcommands:

  vgcap simulate --config cfg.ini --out DIR [--grid-spacing M] [--threads N] [--seed N]
  vgcap fit --kind {s11,power,decay,losstangent,coherent} --config cfg.ini --out DIR [--seed N]
  vgcap reproduce {fig2,fig4b,fig6,fig7,tableI,tableII} --out DIR [--threads N] [--seed N]

Exit codes: 0 success, 1 declared check failed, 2 input/config error,
3 numerical failure.

Config files are sectioned key=value text (INI). Sections and keys:

  [geometry]  variant = bulk_substrate | membrane | trenched_beams | vacuum_gap
              finger_width_m, gap_width_m, n_finger_pairs,
              membrane_thickness_m, metal_thickness_m, oxide_thickness_m,
              handle_depth_m, padding_factor, eps_si, eps_sio2
  [sweep]     gaps_m = comma list; variants = comma list (optional)
  [layer]     thickness_m, eps_layer
  [zero_point] c_total_f = single value; frequencies_hz = one per gap (or one)
  [solver]    tol, grid_spacing_m (optional override)
  [fit]       data = CSV path; frequency_hz; temperature_k;
              sensitivities_csv (losstangent); log_residuals
  [calibration] attenuation_db, kappa_int_rad_s, kappa_ext_rad_s,
              detuning_rad_s (power sweeps given in dBm)
  [expected]  <param> = value and <param>_rtol = rel tol (fit checks)

Input CSV schemas (header row mandatory):
  s11 trace    freq_hz, s11_re, s11_im
  power sweep  n_photons (or power_dbm), q_internal [, q_sigma]
  decay        time_s, population
  losstangent  gap_m, q_low [, s_ma_per_m]
  coherent     e_zpf_v_per_m, q

Reports are JSON (full report with provenance) plus a results-only file
whose bytes are reproducible for a fixed config, seed, and thread count;
a human-readable summary goes to standard output.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from configparser import ConfigParser
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .circuits import (
    capacitance_from_charging_energy,
    dbm_to_watt,
    photon_number,
    q_from_t1,
    q_per_area_um2,
    transmon_frequency,
)
from .errors import (
    ConfigError,
    GridTooCoarse,
    Infeasible,
    InvalidMap,
    InvalidSpec,
    NoConvergence,
    NoResonanceFound,
    SingularJacobian,
    VgcapError,
)
from .fieldsolver import (
    ThinLayerSpec,
    participation_report,
    solve_potential,
    write_field_dump,
)
from .fitting import (
    ResonanceTrace,
    fit_coherent_tls,
    fit_decay,
    fit_loss_tangent,
    fit_power_sweep,
    fit_s11,
)
from .geometry import GeometrySpec, Variant, build_cross_section, extract_interfaces
from .lossmodels import CoherentTlsModel, q_coherent_tls

DEFAULT_SPACING_CAP = 10e-9

# Published reference values driving the reproduction recipes.
GAPS_M = (100e-9, 200e-9, 500e-9, 1000e-9)
RESONATOR_FREQS_HZ = (9.1e9, 9.5e9, 9.8e9, 8.6e9)
RESONATOR_C_F = 50e-15
TAN_DELTA_MA_RESONATOR = 2.74e-4
TAN_DELTA_MA_QUBIT = 1.47e-4
TABLE_I = {
    "resonators": {"tan_delta": 2.74e-4, "xi": 3.0e-3, "q0": 5.5e4},
    "qubits": {"tan_delta": 1.47e-4, "xi": 0.3e-3, "q0": 8.0e4},
}
# per gap: area m^2, f_ge Hz, E_C Hz, E_J Hz, T1_in s, T1_res s
TABLE_II = {
    100e-9: (39e-6 * 36e-6, 5.94e9, 461e6, 11.11e9, 0.71e-6, 7.23e-6),
    200e-9: (39e-6 * 62e-6, 5.33e9, 389e6, 10.51e9, 0.90e-6, 5.14e-6),
    500e-9: (39e-6 * 125e-6, 5.41e9, 362e6, 11.51e9, 1.57e-6, 3.75e-6),
    1000e-9: (39e-6 * 239e-6, 4.96e9, 342e6, 10.28e9, 3.07e-6, 3.22e-6),
}


@dataclass
class RunConfig:
    """Parsed and validated run configuration."""

    sections: dict
    seed: int = 0
    path: Optional[Path] = None

    @classmethod
    def load(cls, path, seed: int = 0) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        parser = ConfigParser()
        try:
            parser.read(path)
        except Exception as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        sections = {name: dict(parser[name]) for name in parser.sections()}
        return cls(sections=sections, seed=seed, path=path)

    def get(self, section: str, key: str, default=None, cast=str):
        value = self.sections.get(section, {}).get(key)
        if value is None:
            return default
        try:
            return cast(value)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} = {value!r} is not a valid {cast.__name__}") from exc

    def get_list(self, section: str, key: str, cast=float, default=None):
        raw = self.sections.get(section, {}).get(key)
        if raw is None:
            return default
        try:
            return [cast(item.strip()) for item in raw.split(",") if item.strip()]
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} has a malformed list entry") from exc

    def require(self, section: str, key: str, cast=str):
        value = self.get(section, key, cast=cast)
        if value is None:
            raise ConfigError(f"missing required key [{section}] {key}")
        return value

    def effective(self) -> dict:
        return {"sections": self.sections, "seed": self.seed}

    def digest(self) -> str:
        blob = json.dumps(self.effective(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def geometry_spec_from_config(config: RunConfig, gap: Optional[float] = None,
                              variant: Optional[str] = None) -> GeometrySpec:
    g = config.sections.get("geometry", {})
    name = variant or g.get("variant", "vacuum_gap")
    try:
        var = Variant(name)
    except ValueError:
        raise ConfigError(
            f"unknown variant {name!r}; pick from {[v.value for v in Variant]}"
        ) from None
    kwargs = {}
    for key, attr in [
        ("finger_width_m", "finger_width"),
        ("gap_width_m", "gap_width"),
        ("membrane_thickness_m", "membrane_thickness"),
        ("metal_thickness_m", "metal_thickness"),
        ("oxide_thickness_m", "oxide_thickness"),
        ("handle_depth_m", "handle_depth"),
        ("padding_factor", "padding_factor"),
        ("eps_si", "eps_si"),
        ("eps_sio2", "eps_sio2"),
    ]:
        if key in g:
            kwargs[attr] = config.get("geometry", key, cast=float)
    if "n_finger_pairs" in g:
        kwargs["n_finger_pairs"] = config.get("geometry", "n_finger_pairs", cast=int)
    if gap is not None:
        kwargs["gap_width"] = gap
    return GeometrySpec(variant=var, **kwargs)


def layer_from_config(config: RunConfig) -> ThinLayerSpec:
    return ThinLayerSpec(
        thickness=config.get("layer", "thickness_m", 3e-9, float),
        eps_layer=config.get("layer", "eps_layer", 10.0, float),
    )


def default_spacing(gap: float) -> float:
    """Per-gap default grid spacing: gap/20, never coarser than 10 nm."""
    return min(gap / 20.0, DEFAULT_SPACING_CAP)


# ---------------------------------------------------------------------------
# Reports


@dataclass
class Report:
    """Command output: provenance, effective inputs, results, checks."""

    command: str
    provenance: dict
    inputs: dict
    results: dict
    checks: list = field(default_factory=list)

    def add_check(self, name: str, expected: str, obtained, passed: bool, blocking: bool = True):
        self.checks.append(
            {
                "name": name,
                "expected": expected,
                "obtained": obtained,
                "passed": bool(passed),
                "blocking": blocking,
            }
        )

    @property
    def all_passed(self) -> bool:
        return all(c["passed"] or not c["blocking"] for c in self.checks)

    def results_bytes(self) -> bytes:
        """Canonical serialization of results and checks (no timestamps)."""
        return json.dumps(
            {"results": self.results, "checks": self.checks}, sort_keys=True
        ).encode()

    def write(self, outdir: Path, name: str) -> Path:
        outdir.mkdir(parents=True, exist_ok=True)
        full = {
            "command": self.command,
            "provenance": self.provenance,
            "inputs": self.inputs,
            "results": self.results,
            "checks": self.checks,
        }
        path = outdir / f"{name}.json"
        path.write_text(json.dumps(full, sort_keys=True, indent=1))
        (outdir / f"{name}.results.json").write_bytes(self.results_bytes())
        return path

    def print_summary(self, stream=None):
        stream = stream or sys.stdout
        print(f"== {self.command} ==", file=stream)
        for key, value in sorted(self.results.items()):
            if isinstance(value, (int, float, str)):
                print(f"  {key}: {value}", file=stream)
        for check in self.checks:
            status = "PASS" if check["passed"] else ("FLAG" if not check["blocking"] else "FAIL")
            print(
                f"  [{status}] {check['name']}: expected {check['expected']}, "
                f"got {check['obtained']}",
                file=stream,
            )


def _provenance(config: Optional[RunConfig], seed: int) -> dict:
    return {
        "timestamp_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "version": __version__,
        "seed": seed,
        "config_digest": config.digest() if config else None,
    }


# ---------------------------------------------------------------------------
# simulate


def _simulate_point(spec: GeometrySpec, spacing: float, layer: ThinLayerSpec,
                    tol: float, frequency: Optional[float], c_total: Optional[float],
                    dump_path: Optional[Path] = None) -> dict:
    rmap = build_cross_section(spec, spacing)
    sol = solve_potential(rmap, voltage=1.0, tol=tol)
    ifaces = extract_interfaces(rmap)
    rep = participation_report(
        rmap, sol, ifaces, layer=layer, frequency=frequency, c_total=c_total
    )
    if dump_path is not None:
        write_field_dump(sol, dump_path)
    doc = rep.to_json_dict()
    doc["variant"] = spec.variant.value
    doc["gap_m"] = spec.gap_width
    doc["grid_spacing_m"] = spacing
    return doc


_SWEEP_CSV_COLUMNS = [
    "variant", "gap_m", "grid_spacing_m", "s_ma_per_m", "s_ms_per_m", "s_sa_per_m",
    "p_vacuum", "p_si", "p_sio2", "p_ma", "p_ms", "p_sa",
    "capacitance_per_length_f_per_m", "e_max_gap_v_per_m",
    "e_zpf_max_v_per_m", "e_zpf_gap_mean_v_per_m",
]


def _write_sweep_csv(points: list, path: Path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_SWEEP_CSV_COLUMNS)
        for doc in points:
            row = []
            for col in _SWEEP_CSV_COLUMNS:
                value = doc.get(col)
                if value is None:
                    row.append("")
                elif isinstance(value, str):
                    row.append(value)
                else:
                    row.append(repr(value))
            writer.writerow(row)


def cmd_simulate(config: RunConfig, outdir: Path, grid_spacing: Optional[float] = None,
                 threads: int = 1, dump_fields: bool = False) -> Report:
    """Geometry -> solve -> participation for every sweep point."""
    layer = layer_from_config(config)
    tol = config.get("solver", "tol", 1e-8, float)
    spacing_override = grid_spacing or config.get("solver", "grid_spacing_m", None, float)

    gaps = config.get_list("sweep", "gaps_m", float)
    variants = config.get_list("sweep", "variants", str)
    if gaps is not None and len(gaps) == 0:
        raise ConfigError("[sweep] gaps_m is empty")
    if gaps is None:
        gaps = [geometry_spec_from_config(config).gap_width]
    if variants is None:
        variants = [geometry_spec_from_config(config).variant.value]

    c_total = config.get("zero_point", "c_total_f", None, float)
    freqs = config.get_list("zero_point", "frequencies_hz", float)
    if freqs is not None and len(freqs) not in (1, len(gaps)):
        raise ConfigError("[zero_point] frequencies_hz must list one value or one per gap")

    jobs = []
    for variant in variants:
        for i, gap in enumerate(gaps):
            spec = geometry_spec_from_config(config, gap=gap, variant=variant)
            spacing = spacing_override or default_spacing(gap)
            freq = None
            if freqs is not None:
                freq = freqs[0] if len(freqs) == 1 else freqs[i]
            dump = outdir / f"fields_{variant}_{int(round(gap * 1e9))}nm.bin" if dump_fields else None
            jobs.append((spec, spacing, layer, tol, freq, c_total, dump))

    outdir.mkdir(parents=True, exist_ok=True)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            points = list(pool.map(lambda args: _simulate_point(*args), jobs))
    else:
        points = [_simulate_point(*args) for args in jobs]

    _write_sweep_csv(points, outdir / "sweep.csv")

    report = Report(
        command="simulate",
        provenance=_provenance(config, config.seed),
        inputs=config.effective(),
        results={"points": points, "n_points": len(points)},
    )
    report.write(outdir, "simulate")
    return report


# ---------------------------------------------------------------------------
# fit


def _read_csv(path: Path, required: list, optional: list = ()) -> dict:
    if not path.exists():
        raise ConfigError(f"data file not found: {path}")
    with open(path, newline="") as fh:
        # tolerate comment lines before the header
        lines = [ln for ln in fh if not ln.lstrip().startswith("#")]
    reader = csv.DictReader(io.StringIO("".join(lines)))
    if reader.fieldnames is None:
        raise ConfigError(f"{path}: missing header row")
    names = [n.strip() for n in reader.fieldnames]
    for col in required:
        if col not in names:
            raise ConfigError(f"{path}: missing required column {col!r} (found {names})")
    columns = {n: [] for n in names}
    for line_no, row in enumerate(reader, start=2):
        for name in names:
            raw = (row[name] or "").strip()
            if raw == "" and name in optional:
                columns[name].append(np.nan)
                continue
            try:
                columns[name].append(float(raw))
            except ValueError:
                raise ConfigError(f"{path}: row {line_no}, column {name!r}: bad value {raw!r}") from None
    return {n: np.asarray(v) for n, v in columns.items()}


def _expected_checks(config: RunConfig, report: Report, params: dict):
    expected = config.sections.get("expected", {})
    for key, raw in expected.items():
        if key.endswith("_rtol"):
            continue
        if key not in params:
            raise ConfigError(f"[expected] {key} is not a fitted parameter")
        target = float(raw)
        rtol = float(expected.get(f"{key}_rtol", 0.05))
        obtained = params[key]
        passed = abs(obtained - target) <= rtol * abs(target)
        report.add_check(f"{key} within {rtol:.0%} of {target:g}", f"{target:g}", obtained, passed)


def cmd_fit(config: RunConfig, kind: str, outdir: Path) -> Report:
    """Run one fit driver on a CSV data file named in the config."""
    layer = layer_from_config(config)
    temperature = config.get("fit", "temperature_k", 0.010, float)
    data_path = Path(config.require("fit", "data"))
    results: dict = {"kind": kind}

    if kind == "s11":
        cols = _read_csv(data_path, ["freq_hz", "s11_re", "s11_im"])
        trace = ResonanceTrace(cols["freq_hz"], cols["s11_re"] + 1j * cols["s11_im"])
        fit = fit_s11(trace)
    elif kind == "power":
        cols = _read_csv(data_path, ["q_internal"], optional=["q_sigma"])
        if "n_photons" in cols:
            n = cols["n_photons"]
        elif "power_dbm" in cols:
            att = config.get("calibration", "attenuation_db", 0.0, float)
            k_int = config.require("calibration", "kappa_int_rad_s", float)
            k_ext = config.require("calibration", "kappa_ext_rad_s", float)
            detuning = config.get("calibration", "detuning_rad_s", 0.0, float)
            f0 = config.require("fit", "frequency_hz", float)
            n = np.array(
                [photon_number(dbm_to_watt(p, att), f0, k_int, k_ext, detuning)
                 for p in cols["power_dbm"]]
            )
        else:
            raise ConfigError(f"{data_path}: needs column 'n_photons' or 'power_dbm'")
        sigma = cols.get("q_sigma")
        if sigma is not None and np.all(np.isnan(sigma)):
            sigma = None
        fit = fit_power_sweep(
            n, cols["q_internal"],
            frequency=config.require("fit", "frequency_hz", float),
            temperature=temperature, sigma_q=sigma,
        )
    elif kind == "decay":
        cols = _read_csv(data_path, ["time_s", "population"])
        decay = fit_decay(cols["time_s"], cols["population"])
        fit = decay.selected
        results["degenerate"] = decay.degenerate
        results["residual_ratio"] = decay.residual_ratio
        results["double_params"] = decay.double.params
        results["single_params"] = decay.single.params
    elif kind == "losstangent":
        cols = _read_csv(data_path, ["gap_m", "q_low"], optional=["s_ma_per_m"])
        if "s_ma_per_m" in cols and not np.any(np.isnan(cols["s_ma_per_m"])):
            s_ma = cols["s_ma_per_m"]
        else:
            sens_path = config.get("fit", "sensitivities_csv")
            if sens_path is None:
                raise ConfigError(
                    f"{data_path}: needs a s_ma_per_m column or [fit] sensitivities_csv"
                )
            sens = _read_csv(Path(sens_path), ["gap_m", "s_ma_per_m"])
            lookup = dict(zip(sens["gap_m"], sens["s_ma_per_m"]))
            try:
                s_ma = np.array([lookup[g] for g in cols["gap_m"]])
            except KeyError as exc:
                raise ConfigError(f"sensitivities_csv lacks gap {exc.args[0]!r}") from None
        fit = fit_loss_tangent(list(zip(cols["gap_m"], cols["q_low"])), s_ma, layer)
    elif kind == "coherent":
        cols = _read_csv(data_path, ["e_zpf_v_per_m", "q"])
        fit = fit_coherent_tls(list(zip(cols["e_zpf_v_per_m"], cols["q"])), temperature)
    else:
        raise ConfigError(f"unknown fit kind {kind!r}")

    results.update(
        {
            "params": fit.params,
            "ci95": fit.ci95,
            "residual_norm": fit.residual_norm,
            "n_iterations": fit.n_iterations,
            "extras": fit.extras,
            "input_sha256": hashlib.sha256(data_path.read_bytes()).hexdigest(),
        }
    )
    report = Report(
        command=f"fit:{kind}",
        provenance=_provenance(config, config.seed),
        inputs=config.effective(),
        results=results,
    )
    _expected_checks(config, report, fit.params)
    report.write(outdir, f"fit_{kind}")
    return report


# ---------------------------------------------------------------------------
# reproduce


def _sweep_points(outdir: Path, threads: int, variants, gaps,
                  frequencies=None, c_total=None, cache_csv: Optional[Path] = None) -> list:
    """Simulate (variant, gap) points, or load them from a cached sweep CSV."""
    if cache_csv is not None:
        cols = _read_csv(
            Path(cache_csv),
            ["gap_m", "s_ma_per_m", "s_ms_per_m", "s_sa_per_m", "p_vacuum"],
            optional=["e_zpf_max_v_per_m", "e_zpf_gap_mean_v_per_m"],
        )
        # variant column is non-numeric; recover it textually
        with open(cache_csv, newline="") as fh:
            rows = list(csv.DictReader(ln for ln in fh if not ln.lstrip().startswith("#")))
        points = []
        for i, row in enumerate(rows):
            doc = {name: cols[name][i] for name in cols}
            doc["variant"] = row["variant"]
            points.append(doc)
        return points

    layer = ThinLayerSpec()
    jobs = []
    for variant in variants:
        for i, gap in enumerate(gaps):
            spec = GeometrySpec(variant=Variant(variant), gap_width=gap)
            freq = None if frequencies is None else frequencies[i]
            jobs.append((spec, default_spacing(gap), layer, 1e-8, freq, c_total, None))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda args: _simulate_point(*args), jobs))
    return [_simulate_point(*args) for args in jobs]


def _loss_tangent_roundtrip(points: list, tan_true: float, layer: ThinLayerSpec, rtol=0.05):
    gaps = [p["gap_m"] for p in points]
    s_ma = [p["s_ma_per_m"] for p in points]
    q_low = [1.0 / (s * layer.eps_layer * layer.thickness * tan_true) for s in s_ma]
    fit = fit_loss_tangent(list(zip(gaps, q_low)), s_ma, layer)
    got = fit.params["tan_delta"]
    return got, abs(got - tan_true) <= rtol * tan_true


def cmd_reproduce(target: str, outdir: Path, threads: int = 1, seed: int = 0,
                  cache_csv: Optional[Path] = None) -> Report:
    """Bundled end-to-end reproduction recipes with pass/fail check tables.

    Measurement-style inputs are synthesized from published parameters
    (recorded in the results), since raw traces are not available; the
    seed controls any synthetic noise.
    """
    report = Report(
        command=f"reproduce:{target}",
        provenance=_provenance(None, seed),
        inputs={"target": target, "threads": threads, "cache_csv": str(cache_csv) if cache_csv else None},
        results={},
    )
    layer = ThinLayerSpec()

    if target == "tableII":
        rows = []
        for gap, (_area, f_ge, e_c, e_j, _t1i, _t1r) in sorted(TABLE_II.items()):
            f_pred = transmon_frequency(e_c, e_j)
            rows.append({"gap_m": gap, "f_ge_hz": f_ge, "f_pred_hz": f_pred})
            report.add_check(
                f"transmon frequency at {int(gap * 1e9)} nm within 20 MHz",
                f"{f_ge / 1e9:.3f} GHz", f_pred / 1e9, abs(f_pred - f_ge) <= 20e6,
            )
        report.results["rows"] = rows

    elif target == "tableI":
        rng = np.random.default_rng(seed)
        rows = {}
        for name, ref in TABLE_I.items():
            model = CoherentTlsModel(q0=ref["q0"], xi=ref["xi"])
            e = np.geomspace(4.0, 22.0, 8)
            q = q_coherent_tls(e, model) * (1.0 + 0.01 * rng.standard_normal(e.size))
            fit = fit_coherent_tls(list(zip(e, q)))
            rows[name] = {"fit": fit.params, "reference": ref}
            for pname in ("q0", "xi"):
                got = fit.params[pname]
                report.add_check(
                    f"{name}: {pname} recovered within 5%",
                    f"{ref[pname]:g}", got, abs(got - ref[pname]) <= 0.05 * ref[pname],
                )
        q22 = q_coherent_tls(22.0, CoherentTlsModel(q0=5.5e4, xi=3.0e-3))
        rows["q_at_22_v_per_m"] = q22
        report.add_check(
            "resonator-row Q at 22 V/m equals 6.6e5 within 5%", "6.6e5", q22,
            abs(q22 - 6.6e5) <= 0.05 * 6.6e5,
        )
        report.results["rows"] = rows

    elif target == "fig2":
        variants = [v.value for v in Variant]
        var_points = _sweep_points(outdir, threads, variants, [100e-9], cache_csv=cache_csv)
        var_points = [p for p in var_points if p["gap_m"] == 100e-9]
        by_variant = {p["variant"]: p for p in var_points}
        if set(by_variant) != set(variants):
            missing = sorted(set(variants) - set(by_variant))
            raise ConfigError(f"fixture sweep lacks variants: {missing}")
        p_vac = [by_variant[v]["p_vacuum"] for v in variants]
        report.results["p_vacuum_by_variant"] = dict(zip(variants, p_vac))
        report.add_check(
            "vacuum participation ordered a < b < c < d",
            "increasing", [round(x, 4) for x in p_vac],
            all(a < b for a, b in zip(p_vac, p_vac[1:])),
        )
        report.add_check("bulk-substrate p_vacuum near 14%", "0.14 +- 0.03", p_vac[0],
                         abs(p_vac[0] - 0.14) <= 0.03)
        report.add_check("vacuum-gap p_vacuum >= 99%", ">= 0.99", p_vac[-1], p_vac[-1] >= 0.99)
        d100 = by_variant["vacuum_gap"]
        for other in ("s_ms_per_m", "s_sa_per_m"):
            ratio = d100["s_ma_per_m"] / max(d100[other], 1e-300)
            report.add_check(
                f"MA sensitivity 100x above {other.split('_')[1].upper()} at 100 nm",
                ">= 100", round(ratio, 1), ratio >= 100.0,
            )
        report.results["vacuum_gap_100nm"] = d100

    elif target in ("fig4b", "fig6"):
        tan_true = TAN_DELTA_MA_RESONATOR if target == "fig4b" else TAN_DELTA_MA_QUBIT
        points = _sweep_points(outdir, threads, ["vacuum_gap"], list(GAPS_M), cache_csv=cache_csv)
        points = [p for p in points if p["variant"] == "vacuum_gap"]
        points.sort(key=lambda p: p["gap_m"])
        s_list = [p["s_ma_per_m"] for p in points]
        report.results["s_ma_per_m_by_gap"] = {repr(p["gap_m"]): p["s_ma_per_m"] for p in points}
        report.add_check(
            "s_MA strictly decreasing with gap", "monotone",
            [float(f"{s:.4g}") for s in s_list],
            all(a > b for a, b in zip(s_list, s_list[1:])),
        )
        got, ok = _loss_tangent_roundtrip(points, tan_true, layer)
        report.results["tan_delta_recovered"] = got
        report.add_check(
            f"loss tangent round-trip recovers {tan_true:g} within 5%",
            f"{tan_true:g}", got, ok,
        )
        if target == "fig6":
            area, f_ge, _ec, _ej, t1_in, _t1r = TABLE_II[100e-9]
            q_in = q_from_t1(f_ge, t1_in)
            qa = q_per_area_um2(q_in, area)
            report.results["q_in_per_area_um2"] = qa
            report.add_check("smallest qubit Q/A of 19 +- 3 per um^2", "19 +- 3", qa,
                             abs(qa - 19.0) <= 3.0)
            qa_pulsed = q_per_area_um2(q_from_t1(f_ge, 1.23e-6), area)
            report.results["q_in_per_area_pulsed_um2"] = qa_pulsed
            # known rounding discrepancy: computed ~33 vs the stated ~40
            report.add_check(
                "pulse-train Q/A near 40 per um^2 (flagged rounding discrepancy)",
                "40 +- 25%", qa_pulsed, abs(qa_pulsed - 40.0) <= 0.25 * 40.0,
                blocking=False,
            )

    elif target == "fig7":
        points = _sweep_points(
            outdir, threads, ["vacuum_gap"], list(GAPS_M),
            frequencies=list(RESONATOR_FREQS_HZ), c_total=RESONATOR_C_F,
            cache_csv=cache_csv,
        )
        points = [p for p in points if p["variant"] == "vacuum_gap"]
        points.sort(key=lambda p: p["gap_m"])
        ez = [p["e_zpf_max_v_per_m"] for p in points]
        if any(e is None or (isinstance(e, float) and np.isnan(e)) for e in ez):
            raise ConfigError("fixture sweep lacks zero-point columns; rerun without cache")
        report.results["e_zpf_max_by_gap"] = {repr(p["gap_m"]): e for p, e in zip(points, ez)}
        report.add_check(
            "zero-point field monotone decreasing in gap", "monotone",
            [float(f"{e:.4g}") for e in ez], all(a > b for a, b in zip(ez, ez[1:])),
        )
        ratio = ez[0] / ez[-1]
        report.add_check(
            "e_zpf(100 nm) / e_zpf(1000 nm) in [3, 13]", "[3, 13]", round(ratio, 2),
            3.0 <= ratio <= 13.0,
        )

    else:
        raise ConfigError(
            f"unknown reproduce target {target!r}; pick from fig2, fig4b, fig6, fig7, tableI, tableII"
        )

    report.write(outdir, f"reproduce_{target}")
    return report


# ---------------------------------------------------------------------------
# CLI


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vgcap",
        description="Vacuum-gap capacitor electrostatics and TLS loss-model fitting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="geometry sweep -> participation reports")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--grid-spacing", type=float, default=None)
    sim.add_argument("--threads", type=int, default=1)
    sim.add_argument("--dump-fields", action="store_true")

    fit = sub.add_parser("fit", help="fit measurement data from CSV")
    fit.add_argument("--kind", required=True,
                     choices=["s11", "power", "decay", "losstangent", "coherent"])
    fit.add_argument("--config", required=True)
    fit.add_argument("--out", required=True)
    fit.add_argument("--seed", type=int, default=0)

    rep = sub.add_parser("reproduce", help="run a bundled reproduction recipe")
    rep.add_argument("target", choices=["fig2", "fig4b", "fig6", "fig7", "tableI", "tableII"])
    rep.add_argument("--out", required=True)
    rep.add_argument("--seed", type=int, default=0)
    rep.add_argument("--threads", type=int, default=1)
    rep.add_argument("--cache-csv", default=None,
                     help="reuse a sweep.csv from an earlier simulate run")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    outdir = Path(args.out)
    try:
        if args.command == "simulate":
            config = RunConfig.load(args.config, seed=args.seed)
            report = cmd_simulate(config, outdir, grid_spacing=args.grid_spacing,
                                  threads=args.threads, dump_fields=args.dump_fields)
        elif args.command == "fit":
            config = RunConfig.load(args.config, seed=args.seed)
            report = cmd_fit(config, args.kind, outdir)
        else:
            cache = Path(args.cache_csv) if args.cache_csv else None
            report = cmd_reproduce(args.target, outdir, threads=args.threads,
                                   seed=args.seed, cache_csv=cache)
    except (ConfigError, InvalidSpec, GridTooCoarse, InvalidMap) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except (NoConvergence, SingularJacobian, NoResonanceFound, Infeasible) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except VgcapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3

    report.print_summary()
    return 0 if report.all_passed else 1


if __name__ == "__main__":
    sys.exit(main())

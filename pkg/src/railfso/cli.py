"""Config-driven experiment runner with deterministic CSV output.

Configs are flat ``key = value`` text files ('#' starts a comment); every
key has a documented default, unknown keys are rejected, and the effective
parameter set is echoed to ``params.csv`` in the output directory.  Each
experiment tag produces one or more CSV files whose first line records the
tool version and effective seed; identical config and seed give
byte-identical files (floats are printed with 9 significant digits).

Experiment tags
---------------
``fig4``
    Serving-period average SNR versus base-station lateral offset, per
    strategy and turbulence regime.
``fig5``
    Closed-form versus simulated outage at matched branch-average SNR.
``fig6`` / ``fig7``
    Worst-case-edge average SNR (and achievable rate) versus station
    spacing.
``fig8``
    Edge SNR and coverage versus mirror-panel size.
``fig9`` / ``table2``
    Deployment designs (required SNR, coverage, station count); ``table2``
    also compares against the benchmark design values embedded below.
``validate``
    Closed-form-versus-oracle report: density normalizations, simulated
    distribution distances, moment checks, special-function cross-checks,
    and the retained uncorrected-variant defects.  Formula checks gate the
    exit status; benchmark comparisons are reported, not gated.
``custom``
    One scenario summary from the config keys.

Exit codes: 0 success, 2 configuration error, 3 numerical-guard trip,
4 validation failure.  On failure a MANIFEST file lists what was written.
The only environment variable honored is ``RAILFSO_THREADS`` (caps BLAS
thread pools; set before heavy array work starts).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate, special

from . import __version__, channel, montecarlo, planner, specfun, stats
from .channel import AtmosphereParams, DirectPointingParams, TurbulenceRegime
from .geometry import RisLayout, TrackLayout
from .montecarlo import ScenarioConfig


class ConfigError(ValueError):
    """Bad configuration file or override."""


EXPERIMENTS = (
    "fig4",
    "fig5",
    "fig6",
    "fig7",
    "fig8",
    "fig9",
    "table2",
    "validate",
    "custom",
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VALIDATION = 4


def _positive(v: float) -> float:
    if v <= 0.0:
        raise ConfigError("value must be positive")
    return v


def _fraction(v: float) -> float:
    if not 0.0 < v <= 1.0:
        raise ConfigError("value must lie in (0, 1]")
    return v


def _probability(v: float) -> float:
    if not 0.0 < v < 1.0:
        raise ConfigError("value must lie in (0, 1)")
    return v


def _pos_int(v: str) -> int:
    i = int(v)
    if i < 1:
        raise ConfigError("value must be a positive integer")
    return i


def _nonneg_int(v: str) -> int:
    i = int(v)
    if i < 0:
        raise ConfigError("value must be nonnegative")
    return i


def _choice(options):
    def parse(v: str) -> str:
        if v not in options:
            raise ConfigError(f"must be one of {', '.join(options)}")
        return v

    return parse


def _pos_float(v: str) -> float:
    return _positive(float(v))


def _frac_float(v: str) -> float:
    return _fraction(float(v))


def _prob_float(v: str) -> float:
    return _probability(float(v))


def _any_float(v: str) -> float:
    return float(v)


def _optional_pos_float(v: str):
    if v.strip().lower() in ("", "auto"):
        return None
    return _positive(float(v))


#: key -> (parser, default).  Defaults are the study's baseline parameters.
CONFIG_KEYS = {
    "experiment": (_choice(EXPERIMENTS), "validate"),
    "seed": (_nonneg_int, 20260814),
    "mc_samples": (_pos_int, 100000),
    "output_dir": (str, "out"),
    "strategy": (_choice(("direct", "for", "dor", "relay")), "dor"),
    "regime": (_choice(("weak", "strong")), "weak"),
    "wavelength_nm": (_pos_float, 850.0),
    "power_mw": (_pos_float, 40.0),
    "eta": (_frac_float, 0.5),
    "rho": (_frac_float, 0.95),
    "noise_sigma_a": (_pos_float, 1e-7),
    "noise_sigma_ris_a": (_pos_float, 1e-7),
    "attenuation_db_km": (_pos_float, 0.44),
    "cn2": (_pos_float, 1e-15),
    "cn2_strong": (_pos_float, 1e-13),
    "zeta": (_pos_float, 100.0),
    "psi_deg": (_pos_float, 3.5),
    "aperture_rx_m": (_pos_float, 0.20),
    "element_radius_m": (_pos_float, 0.025),
    "cells": (_pos_int, 25),
    "grid_k": (_pos_int, 10),
    "grid_l": (_pos_int, 10),
    "track_drop_m": (_pos_float, 2.5),
    "lateral_offset_m": (_pos_float, 8.0),
    "direct_span_m": (_optional_pos_float, None),
    "array_span_m": (_optional_pos_float, None),
    "bs_spacing_m": (_pos_float, 1000.0),
    "v_hst_kmh": (_pos_float, 300.0),
    "pole_height_m": (_pos_float, 5.0),
    "roof_height_m": (_pos_float, 4.0),
    "ris_x_m": (_any_float, 0.5),
    "ris_y_m": (_any_float, 0.0),
    "ris_z_m": (_pos_float, 6.0),
    "sway_surge": (_pos_float, 5.0),
    "sway_roll": (_pos_float, 5.0),
    "sway_lateral": (_pos_float, 5.0),
    "direct_pointing_peak": (_frac_float, 0.0764),
    "direct_pointing_shape": (_pos_float, 2.35),
    "gamma_th_db_weak": (_any_float, 9.05),
    "gamma_th_db_strong": (_any_float, 21.32),
    "p_out_target": (_prob_float, 1e-3),
    "rail_length_km": (_pos_float, 100.0),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Effective experiment request: tag, parameter map, sampling, output."""

    experiment: str
    overrides: dict
    mc_samples: int
    seed: int
    output_dir: Path


def load_config(path: str | None, cli_overrides: dict | None = None) -> ExperimentConfig:
    """Parse a flat key-value config file and apply CLI overrides.

    Missing file path means pure defaults.  Raises :class:`ConfigError`
    with a line number on parse problems, unknown keys, or invariant
    violations.
    """
    values = {k: d for k, (_, d) in CONFIG_KEYS.items()}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        for lineno, raw in enumerate(p.read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            parser = CONFIG_KEYS[key][0]
            try:
                values[key] = parser(val)
            except ConfigError as exc:
                raise ConfigError(f"{path}:{lineno}: {key}: {exc}") from None
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: {key}: cannot parse {val!r}") from None
    for key, val in (cli_overrides or {}).items():
        if val is None:
            continue
        parser = CONFIG_KEYS[key][0]
        values[key] = parser(str(val)) if not isinstance(val, str) else parser(val)

    if values["direct_span_m"] is None:
        values["direct_span_m"] = 0.05 * values["bs_spacing_m"]
    if values["array_span_m"] is None:
        values["array_span_m"] = values["bs_spacing_m"] - values["direct_span_m"]
    if values["direct_span_m"] + values["array_span_m"] > values["bs_spacing_m"] * (1 + 1e-12):
        raise ConfigError("direct_span_m + array_span_m exceeds bs_spacing_m")

    return ExperimentConfig(
        experiment=values["experiment"],
        overrides=values,
        mc_samples=values["mc_samples"],
        seed=values["seed"],
        output_dir=Path(values["output_dir"]),
    )


def build_scenario(
    ov: dict,
    strategy: str | None = None,
    regime: str | None = None,
    strong_cn2: bool = False,
) -> ScenarioConfig:
    """Scenario from an effective parameter map.

    ``strong_cn2`` switches the refractive-index structure constant to the
    ``cn2_strong`` value; the deployment-style experiments use it for their
    gamma-gamma rows while the baseline experiments keep the single default
    for both regimes.
    """
    strategy = strategy or ov["strategy"]
    regime = regime or ov["regime"]
    wavelength = ov["wavelength_nm"] * 1e-9
    psi = math.radians(ov["psi_deg"])
    track = TrackLayout(
        l_d=ov["track_drop_m"],
        l_0=ov["lateral_offset_m"],
        l_b=ov["direct_span_m"],
        l_m=ov["array_span_m"],
        v_hst=ov["v_hst_kmh"] / 3.6,
        psi=psi,
        bs_spacing=ov["bs_spacing_m"],
        pole_height=ov["pole_height_m"],
        roof_height=ov["roof_height_m"],
    )
    ris = RisLayout(
        n_k=ov["grid_k"],
        n_l=ov["grid_l"],
        n_m=ov["cells"],
        a_r=ov["element_radius_m"],
        a_p=ov["aperture_rx_m"],
        rho=ov["rho"],
        position=(ov["ris_x_m"], ov["ris_y_m"], ov["ris_z_m"]),
    )
    atm = AtmosphereParams(
        gamma_db_per_km=ov["attenuation_db_km"],
        cn2=ov["cn2_strong"] if strong_cn2 else ov["cn2"],
        wavelength=wavelength,
        w0_hat=wavelength / (2.0 * math.pi * psi),
        zeta=ov["zeta"],
    )
    pointing = DirectPointingParams(
        h0_b=ov["direct_pointing_peak"], xi=ov["direct_pointing_shape"]
    )
    return ScenarioConfig(
        strategy=strategy,
        regime=regime,
        track=track,
        ris=ris,
        atm=atm,
        pointing=pointing,
        sway=(ov["sway_surge"], ov["sway_roll"], ov["sway_lateral"]),
        power_w=ov["power_mw"] * 1e-3,
        eta=ov["eta"],
        noise_sigma_direct=ov["noise_sigma_a"],
        noise_sigma_ris=ov["noise_sigma_ris_a"],
        gamma_th_db=ov["gamma_th_db_weak"] if regime == "weak" else ov["gamma_th_db_strong"],
    )


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{float(v):.9g}"
    return str(v)


class OutputSet:
    """Collects CSV files and writes them deterministically."""

    def __init__(self, out_dir: Path, seed: int):
        self.out_dir = out_dir
        self.seed = seed
        self.written: list[str] = []

    def write(self, name: str, header, rows, comments=()):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        lines = [f"# railfso {__version__} seed={self.seed}"]
        lines += [f"# {c}" for c in comments]
        lines.append(",".join(header))
        for row in rows:
            lines.append(",".join(_fmt(v) for v in row))
        path = self.out_dir / name
        path.write_text("\n".join(lines) + "\n")
        self.written.append(name)

    def manifest(self, note: str):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        lines = [f"railfso {__version__}"] + [f"written: {n}" for n in self.written] + [note]
        (self.out_dir / "MANIFEST").write_text("\n".join(lines) + "\n")


def _write_params(out: OutputSet, cfg: ExperimentConfig):
    rows = []
    for key in CONFIG_KEYS:
        rows.append((key, _fmt(cfg.overrides[key])))
    out.write("params.csv", ("key", "value"), rows)


# ---------------------------------------------------------------------------
# Reference single-link objects used by the validation report
# ---------------------------------------------------------------------------

#: Orientation used for the per-element reference checks (incidence and
#: departure both at 20 degrees from the element normal).
_REF_ANGLE = math.radians(20.0)
_REF_DISTANCES = (50.0, 150.0, 500.0)


def _element_objects(scn: ScenarioConfig, d_e: float):
    c = math.cos(_REF_ANGLE)
    f = channel.gml_fields(d_e, c, c, scn.atm, sway=scn.sway, a_p=scn.ris.a_p)
    gml = channel.GmlParams(
        h0=float(f["h0"]), v=float(f["v"]), varpi=float(f["varpi"]),
        delta_m2=float(f["delta_m2"]), w_d=float(f["w_d"]),
    )
    s2 = channel.rytov_sigma2(scn.atm, d_e)
    h_p = channel.path_loss(scn.atm, d_e)
    const = channel.ris_link_constants(h_p, gml, s2, scn.atm.zeta)
    alpha, beta = channel.gg_shape_params(s2)
    return const, gml, s2, alpha, beta


def _direct_objects(scn: ScenarioConfig, d_b: float):
    s2 = channel.rytov_sigma2(scn.atm, d_b)
    h_p = channel.path_loss(scn.atm, d_b)
    const = channel.direct_link_constants(h_p, scn.pointing, s2)
    alpha, beta = channel.gg_shape_params(s2)
    return const, s2, alpha, beta


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

_STRATS = ("direct", "for", "dor", "relay")
_ARRAY_STRATS = ("for", "dor", "relay")
_REGIMES = ("weak", "strong")

#: Benchmark deployment values for the design-table comparison: strategy,
#: regime, required branch-average SNR (dB), station count over 100 km,
#: SNR tolerance (dB), station-count relative tolerance.
_BENCH = (
    ("for", "weak", 25.0, 100, 2.0, 0.20),
    ("for", "strong", 35.0, 3572, 2.0, 0.35),
    ("dor", "weak", 22.0, 89, 2.0, 0.20),
    ("dor", "strong", 33.0, 114, 2.0, 0.35),
    ("relay", "weak", 27.0, 308, 2.0, 0.20),
    ("relay", "strong", 37.0, 5000, 2.0, 0.35),
)


def _exp_fig4(cfg: ExperimentConfig, out: OutputSet):
    ov = cfg.overrides
    l0s = np.arange(1.0, 60.0 + 0.5, 1.0)
    cols = ["l0_m"]
    series = []
    for strat in _ARRAY_STRATS:
        for regime in _REGIMES:
            cols.append(f"avg_snr_db_{strat}_{regime}")
            scn = build_scenario(ov, strategy=strat, regime=regime)
            _, avg_db = planner.sweep_lateral_offset(scn, l0s, step=2.0)
            series.append(avg_db)
    rows = [
        tuple([l0s[i]] + [s[i] for s in series]) for i in range(l0s.size)
    ]
    out.write("fig4.csv", cols, rows, comments=("span average over 2 m steps",))


def _exp_fig5(cfg: ExperimentConfig, out: OutputSet):
    ov = cfg.overrides
    targets_db = np.arange(15.0, 36.0, 5.0)
    rows = []
    for regime in _REGIMES:
        scns = {
            s: build_scenario(ov, strategy=s, regime=regime, strong_cn2=(regime == "strong"))
            for s in _STRATS
        }
        edge = planner.worst_case_offset(scns["dor"])
        nat_db = {s: 10.0 * math.log10(stats.branch_average_snr(scns[s], edge)) for s in _STRATS}
        for t_db in targets_db:
            scale = {s: 10.0 ** ((t_db - nat_db[s]) / 10.0) for s in _STRATS}
            cmp = montecarlo.outage_comparison(
                scns, edge, cfg.mc_samples, cfg.seed, power_scale=scale
            )
            for s in _STRATS:
                closed = stats.outage_closed_form(scns[s], edge, power_scale=scale[s])
                p_mc, se = cmp.probability[s]
                rows.append((s, regime, t_db, closed.probability, p_mc, se))
    out.write(
        "fig5.csv",
        ("strategy", "regime", "avg_snr_db", "p_out_closed", "p_out_mc", "mc_stderr"),
        rows,
        comments=(
            "outage at the worst-case edge, power matched to the average-SNR column",
            "closed form uses the per-element product convention; simulation sums element powers",
        ),
    )


def _spacing_grid() -> np.ndarray:
    return np.geomspace(50.0, 20000.0, 28)


def _exp_fig6(cfg: ExperimentConfig, out: OutputSet, with_rate: bool = False):
    ov = cfg.overrides
    rows = []
    for strat in _STRATS:
        for regime in _REGIMES:
            scn = build_scenario(ov, strategy=strat, regime=regime, strong_cn2=(regime == "strong"))
            for d in _spacing_grid():
                avg_db = planner.edge_average_snr_db(scn, spacing=float(d))
                if with_rate:
                    lin = 10.0 ** (avg_db / 10.0)
                    rows.append(
                        (
                            strat,
                            regime,
                            d,
                            avg_db,
                            stats.spectral_efficiency(lin),
                            stats.spectral_efficiency(lin, imdd_penalty=True),
                        )
                    )
                else:
                    rows.append((strat, regime, d, avg_db))
    if with_rate:
        out.write(
            "fig7.csv",
            ("strategy", "regime", "diameter_m", "edge_avg_snr_db", "rate_bps_hz", "rate_imdd_bps_hz"),
            rows,
        )
    else:
        out.write("fig6.csv", ("strategy", "regime", "diameter_m", "edge_avg_snr_db"), rows)


def _exp_fig8(cfg: ExperimentConfig, out: OutputSet):
    ov = cfg.overrides
    rows = []
    sizes = (2, 4, 6, 8, 10, 14, 20)
    for regime in _REGIMES:
        scn = build_scenario(ov, strategy="dor", regime=regime, strong_cn2=(regime == "strong"))
        base_db = planner.edge_average_snr_db(scn)
        req = planner.required_snr_db(scn, ov["p_out_target"])
        scale = 10.0 ** ((req - base_db) / 10.0)
        for size in sizes:
            c2, psi_eff = planner.panel_config(scn, size)
            avg_db = planner.edge_average_snr_db(c2, power_scale=scale)
            try:
                cov = planner.coverage_diameter(c2, 30.0, power_scale=scale)
            except planner.PlannerError:
                cov = float("nan")
            rows.append((regime, size, c2.ris.total_elements, psi_eff, cov, avg_db))
    out.write(
        "fig8.csv",
        ("regime", "grid_size", "total_elements", "divergence_rad", "diameter_30db_m", "edge_avg_snr_db"),
        rows,
        comments=(
            "coverage diameter at a 30 dB edge requirement; power fixed by the"
            " default panel's requirement bisection so sizing shows the panel"
            " effect alone",
        ),
    )


def _design_rows(cfg: ExperimentConfig, targets):
    """Designs per strategy and regime, power anchored once per scenario.

    Each scenario's transmit power is fixed by its requirement bisection at
    the configured outage target; the sweep then resizes coverage for the
    other targets at that power, so tightening the target costs stations
    instead of silently re-powering every row.
    """
    ov = cfg.overrides
    rail_m = ov["rail_length_km"] * 1e3
    anchor = ov["p_out_target"]
    rows = []
    for strat in _ARRAY_STRATS:
        for regime in _REGIMES:
            scn = build_scenario(ov, strategy=strat, regime=regime, strong_cn2=(regime == "strong"))
            base_db = planner.edge_average_snr_db(scn)
            req_anchor = planner.required_snr_db(scn, anchor)
            scale = 10.0 ** ((req_anchor - base_db) / 10.0)
            for target in targets:
                req = req_anchor if target == anchor else planner.required_snr_db(scn, target)
                cov = planner.coverage_diameter(scn, req, power_scale=scale)
                rows.append((strat, regime, target, req, cov, planner.bs_count(rail_m, cov)))
    return rows


def _exp_fig9(cfg: ExperimentConfig, out: OutputSet):
    rows = _design_rows(cfg, (1e-2, 1e-3, 1e-4))
    out.write(
        "fig9.csv",
        ("strategy", "regime", "p_out_target", "required_snr_db", "coverage_m", "bs_count"),
        rows,
        comments=(
            "power per scenario anchored by the requirement bisection at p_out_target="
            + _fmt(cfg.overrides["p_out_target"]),
        ),
    )


def _table2_rows(cfg: ExperimentConfig):
    ov = cfg.overrides
    rail_m = ov["rail_length_km"] * 1e3
    rows = []
    for strat, regime, bench_snr, bench_bs, tol_db, tol_bs in _BENCH:
        scn = build_scenario(ov, strategy=strat, regime=regime, strong_cn2=(regime == "strong"))
        d = planner.design(scn, ov["p_out_target"], rail_m)
        snr_ok = abs(d.required_snr_db - bench_snr) <= tol_db
        bs_ok = abs(d.bs_count - bench_bs) <= tol_bs * bench_bs
        rows.append(
            (
                strat,
                regime,
                d.required_snr_db,
                bench_snr,
                snr_ok,
                d.coverage_m,
                d.bs_count,
                bench_bs,
                bs_ok,
            )
        )
    return rows


def _exp_table2(cfg: ExperimentConfig, out: OutputSet):
    rows = _table2_rows(cfg)
    out.write(
        "table2.csv",
        (
            "strategy",
            "regime",
            "required_snr_db",
            "benchmark_snr_db",
            "snr_in_band",
            "coverage_m",
            "bs_count",
            "benchmark_bs_count",
            "bs_in_band",
        ),
        rows,
        comments=("benchmark design values embedded for comparison; deviations are reported, not hidden",),
    )


def _exp_custom(cfg: ExperimentConfig, out: OutputSet):
    ov = cfg.overrides
    scn = build_scenario(ov)
    edge = planner.worst_case_offset(scn)
    avg_db = planner.edge_average_snr_db(scn)
    span_db = 10.0 * math.log10(stats.span_average_snr(scn, step=2.0))
    res = stats.outage_closed_form(scn, edge)
    d = planner.design(scn, ov["p_out_target"], ov["rail_length_km"] * 1e3)
    out.write(
        "custom.csv",
        (
            "strategy",
            "regime",
            "edge_avg_snr_db",
            "span_avg_snr_db",
            "p_out_closed",
            "required_snr_db",
            "coverage_m",
            "bs_count",
        ),
        [
            (
                scn.strategy,
                scn.regime,
                avg_db,
                span_db,
                res.probability,
                d.required_snr_db,
                d.coverage_m,
                d.bs_count,
            )
        ],
    )


# ---------------------------------------------------------------------------
# Validation report
# ---------------------------------------------------------------------------


def _quad_norm(f, lo, hi, points=None):
    val, _ = integrate.quad(f, lo, hi, limit=300, points=points)
    return val


def _log_gain_norm(pdf, peak, lo, hi, points=None):
    """Integrate a gain density over ``ln(h / peak)`` in ``[lo, hi]``."""
    val, _ = integrate.quad(
        lambda l: float(pdf(peak * math.exp(l))) * peak * math.exp(l),
        lo,
        hi,
        limit=500,
        points=points,
    )
    return val


def _ks_distance(sorted_samples: np.ndarray, cdf_vals: np.ndarray) -> float:
    n = sorted_samples.size
    emp_hi = np.arange(1, n + 1) / n
    emp_lo = np.arange(0, n) / n
    return float(max(np.max(np.abs(emp_hi - cdf_vals)), np.max(np.abs(emp_lo - cdf_vals))))


def _ks_bound(sorted_samples: np.ndarray, cdf, max_evals: int = 65536) -> float:
    """Upper bound on the KS distance from a strided CDF evaluation.

    The distribution function is monotone and the samples are sorted, so
    between two evaluated sample points the deviation is bounded by the
    cell's corner gaps.  The bound exceeds the exact distance by at most
    about twice the stride fraction (a few 1e-5 here), which keeps heavy
    quadrature-backed distribution functions affordable at millions of
    points.
    """
    n = sorted_samples.size
    stride = max(1, math.ceil(n / max_evals))
    if stride == 1:
        return _ks_distance(sorted_samples, np.clip(cdf(sorted_samples), 0.0, 1.0))
    idx = np.arange(stride - 1, n, stride)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    f = np.clip(cdf(sorted_samples[idx]), 0.0, 1.0)
    f_lo = np.concatenate(([0.0], f[:-1]))
    emp_hi = (idx + 1) / n
    emp_lo = np.concatenate(([0.0], (idx[:-1] + 1) / n))
    return float(max(np.max(emp_hi - f_lo), np.max(f - emp_lo)))


def _validate_rows(cfg: ExperimentConfig):
    """(rows, any_check_failed).  Row: section, name, value, target, tol, status."""
    ov = cfg.overrides
    scn = build_scenario(ov)
    n_mc = cfg.mc_samples
    ks_tol = 0.015 * math.sqrt(max(1e6 / n_mc, 1.0))
    rows = []
    failed = False

    def check(section, name, value, target, tol):
        nonlocal failed
        ok = abs(value - target) <= tol
        failed = failed or not ok
        rows.append((section, name, value, target, tol, "pass" if ok else "FAIL"))

    def info(section, name, value, note=""):
        rows.append((section, name, value, float("nan"), float("nan"), note or "info"))

    # --- density normalizations at the three reference distances.  Each
    # density is integrated in its natural log-gain parametrization, where
    # the integrand is smooth and bounded; integrating over the raw gain
    # instead hits endpoint singularities and produces false defects.
    for d_e in _REF_DISTANCES:
        const, gml, s2, alpha, beta = _element_objects(scn, d_e)
        tol_z = {50.0: 2e-2, 150.0: 1e-2, 500.0: 1e-2}[d_e]

        nodes, weights = specfun.leggauss_nodes(200)
        y_hi = 7.0 / math.sqrt(gml.varpi)
        y = 0.5 * y_hi * (nodes + 1.0)
        g = gml.h0 * np.exp(-(y**2))
        vals = channel.gml_pdf(gml, g) * (2.0 * y * g)
        norm = float(np.sum(weights * vals) * 0.5 * y_hi)
        check("norm", f"misalignment_pdf_d{int(d_e)}", norm, 1.0, 1e-6)

        ca = const.peak_gain
        sig = math.sqrt(s2)
        norm = _log_gain_norm(
            lambda h: channel.composite_pdf_weak(const, s2, gml.varpi, h),
            ca,
            -2.0 * s2 - 28.0 * sig - 60.0 / gml.varpi,
            -2.0 * s2 + 28.0 * sig,
            points=[0.0, -2.0 * s2],
        )
        check("norm", f"element_weak_pdf_d{int(d_e)}", norm, 1.0, 1e-6)

        half = specfun.kernel_band_half_width(alpha, beta)
        norm = _log_gain_norm(
            lambda h: channel.composite_pdf_strong(const, alpha, beta, gml.varpi, None, h),
            ca,
            -half - 60.0 / gml.varpi,
            half,
            points=[0.0],
        )
        check("norm", f"element_strong_pdf_d{int(d_e)}", norm, 1.0, 1e-6)

        norm = _log_gain_norm(
            lambda h: channel.composite_pdf_strong(
                const, alpha, beta, gml.varpi, scn.atm.zeta, h
            ),
            ca,
            -half - 60.0 / gml.varpi,
            half,
            points=[0.0],
        )
        check("norm", f"element_strong_zeta_pdf_d{int(d_e)}", norm, 1.0, tol_z)

        dconst, ds2, dalpha, dbeta = _direct_objects(scn, d_e)
        cd = dconst.peak_gain
        dsig = math.sqrt(ds2)
        xi2 = scn.pointing.xi2
        norm = _log_gain_norm(
            lambda h: channel.direct_pdf_weak(dconst, ds2, scn.pointing, h),
            cd,
            -2.0 * ds2 - 28.0 * dsig - 60.0 / xi2,
            -2.0 * ds2 + 28.0 * dsig,
            points=[0.0, -2.0 * ds2],
        )
        check("norm", f"direct_weak_pdf_d{int(d_e)}", norm, 1.0, 1e-6)

        dhalf = specfun.kernel_band_half_width(dalpha, dbeta)
        norm = _log_gain_norm(
            lambda h: float(channel.direct_pdf_strong(dconst, dalpha, dbeta, scn.pointing, h)),
            cd,
            -dhalf - 60.0 / xi2,
            dhalf,
            points=[0.0],
        )
        check("norm", f"direct_strong_pdf_d{int(d_e)}", norm, 1.0, 1e-6)

    # --- simulated-distribution distances and moments at d = 150 m
    d_ref = 150.0
    const, gml, s2, alpha, beta = _element_objects(scn, d_ref)
    dconst, ds2, dalpha, dbeta = _direct_objects(scn, d_ref)
    weak = TurbulenceRegime.weak(s2)
    strong = TurbulenceRegime.strong(s2)
    dweak = TurbulenceRegime.weak(ds2)
    dstrong = TurbulenceRegime.strong(ds2)

    rng = montecarlo.rng_stream(cfg.seed, 100)
    smp = np.sort(montecarlo.sample_misalignment(rng, gml.h0, gml.varpi, n_mc))
    with np.errstate(divide="ignore"):
        cdfv = special.erfc(np.sqrt(gml.varpi * np.log(gml.h0 / smp)))
    check("ks", "misalignment_vs_mc", _ks_distance(smp, cdfv), 0.0, ks_tol)
    m2 = gml.h0**2 * (1.0 + 2.0 / gml.varpi) ** -0.5
    emp2 = float(np.mean(smp**2))
    se = float(np.std(smp**2) / math.sqrt(n_mc))
    check("moment", "misalignment_m2", emp2, m2, max(3.0 * se, 5e-2 * m2))

    rng = montecarlo.rng_stream(cfg.seed, 101)
    smp = np.sort(montecarlo.sample_element_gain(rng, const.peak_gain, gml.varpi, weak, n_mc))
    cdfv = stats.element_cdf(smp, const.peak_gain, gml.varpi, sigma2=s2)
    check("ks", "element_weak_vs_mc", _ks_distance(smp, cdfv), 0.0, ks_tol)
    m2 = stats.element_gain_second_moment(const.peak_gain, gml.varpi, sigma2=s2)
    emp2 = float(np.mean(smp**2))
    se = float(np.std(smp**2) / math.sqrt(n_mc))
    check("moment", "element_weak_m2", emp2, m2, max(3.0 * se, 5e-2 * m2))

    rng = montecarlo.rng_stream(cfg.seed, 102)
    smp = np.sort(montecarlo.sample_element_gain(rng, const.peak_gain, gml.varpi, strong, n_mc))
    ks = _ks_bound(smp, lambda v: stats.element_cdf(v, const.peak_gain, gml.varpi, alpha=alpha, beta=beta))
    check("ks", "element_strong_vs_mc", ks, 0.0, ks_tol)
    m2 = stats.element_gain_second_moment(const.peak_gain, gml.varpi, alpha=alpha, beta=beta)
    emp2 = float(np.mean(smp**2))
    se = float(np.std(smp**2) / math.sqrt(n_mc))
    check("moment", "element_strong_m2", emp2, m2, max(3.0 * se, 5e-2 * m2))

    rng = montecarlo.rng_stream(cfg.seed, 103)
    smp = np.sort(montecarlo.sample_direct_gain(rng, dconst.peak_gain, scn.pointing, dweak, n_mc))
    cdfv = channel.direct_cdf_weak(dconst, ds2, scn.pointing, smp)
    check("ks", "direct_weak_vs_mc", _ks_distance(smp, cdfv), 0.0, ks_tol)
    m2 = stats.direct_gain_second_moment(dconst.peak_gain, scn.pointing.xi2, sigma2=ds2)
    emp2 = float(np.mean(smp**2))
    se = float(np.std(smp**2) / math.sqrt(n_mc))
    check("moment", "direct_weak_m2", emp2, m2, max(3.0 * se, 5e-2 * m2))

    rng = montecarlo.rng_stream(cfg.seed, 104)
    smp = np.sort(montecarlo.sample_direct_gain(rng, dconst.peak_gain, scn.pointing, dstrong, n_mc))
    ks = _ks_bound(smp, lambda v: channel.direct_cdf_strong(dconst, dalpha, dbeta, scn.pointing, v))
    check("ks", "direct_strong_vs_mc", ks, 0.0, ks_tol)
    m2 = stats.direct_gain_second_moment(dconst.peak_gain, scn.pointing.xi2, alpha=dalpha, beta=dbeta)
    emp2 = float(np.mean(smp**2))
    se = float(np.std(smp**2) / math.sqrt(n_mc))
    check("moment", "direct_strong_m2", emp2, m2, max(3.0 * se, 5e-2 * m2))

    # --- special-function cross-checks
    worst = 0.0
    spec_e = specfun.MeijerGSpec(m=1, n=0, a=(), b=(0.0,))
    for z in np.geomspace(1e-4, 30.0, 60):
        ln_v, sign = specfun.meijer_g_ln(spec_e, float(z))
        err = abs(ln_v + z) / max(1.0, z) if sign > 0 else 1.0
        worst = max(worst, err)
    check("specfun", "exp_identity_max_rel", worst, 0.0, 1e-8)

    a_b = (3.2, 1.1)
    spec_k = specfun.MeijerGSpec(m=2, n=0, a=(), b=a_b)
    worst = 0.0
    for z in (0.1, 0.6, 4.0, 10.0):
        v = specfun.meijer_g(spec_k, z)
        ref = 2.0 * z ** (sum(a_b) / 2.0) * special.kv(a_b[0] - a_b[1], 2.0 * math.sqrt(z))
        worst = max(worst, abs(v - ref) / abs(ref))
    check("specfun", "bessel_identity_max_rel", worst, 0.0, 1e-8)

    worst = 0.0
    spec3 = specfun.MeijerGSpec(m=3, n=0, a=(1.0 + 5.5225,), b=(5.5225, 4.3939, 2.5636))
    for z in np.geomspace(0.05, 11.0, 30):
        l1, s1 = specfun.meijer_g_ln(spec3, float(z), path="series")
        l2, s2_tp = specfun.meijer_g_ln(spec3, float(z), path="contour")
        if s1 == s2_tp:
            worst = max(worst, abs(math.expm1(l1 - l2)))
        else:
            worst = 1.0
    check("specfun", "two_path_max_rel", worst, 0.0, 1e-6)

    g_target = _quad_norm(lambda t: t**1.5 * math.exp(-t), 1.3, 60.0)
    check(
        "specfun",
        "upper_gamma_identity",
        specfun.upper_incomplete_gamma(2.5, 1.3),
        g_target,
        1e-10,
    )

    # --- retained uncorrected variants (reported, not gated)
    for d_e in _REF_DISTANCES:
        const, gml, s2, alpha, beta = _element_objects(scn, d_e)
        sig = math.sqrt(s2)
        v = _log_gain_norm(
            lambda h: channel.composite_pdf_weak_uncorrected(const, s2, gml.varpi, h),
            const.peak_gain,
            -2.0 * s2 - 28.0 * sig - 60.0 / gml.varpi,
            -2.0 * s2 + 28.0 * sig,
            points=[0.0, -2.0 * s2],
        )
        info("variant", f"element_weak_uncorrected_norm_d{int(d_e)}", v)
        info(
            "variant",
            f"element_strong_uncorrected_norm_d{int(d_e)}",
            channel.composite_strong_uncorrected_norm(const, alpha, beta, gml.varpi, scn.atm.zeta),
        )
        dconst, ds2, dalpha, dbeta = _direct_objects(scn, d_e)
        info(
            "variant",
            f"direct_weak_uncorrected_mass_d{int(d_e)}",
            dconst.exp_correction * math.exp(-dconst.exp_correction),
        )
        info(
            "variant",
            f"direct_strong_uncorrected_norm_d{int(d_e)}",
            channel.direct_strong_uncorrected_norm(dalpha, dbeta, scn.pointing),
        )
        m2 = stats.element_gain_second_moment(const.peak_gain, gml.varpi, sigma2=s2)
        v = stats.element_second_moment_uncorrected(const.peak_gain, gml.varpi, s2)
        info("variant", f"element_m2_uncorrected_ratio_d{int(d_e)}", v / m2)
        m2 = stats.direct_gain_second_moment(dconst.peak_gain, scn.pointing.xi2, sigma2=ds2)
        v = stats.direct_second_moment_uncorrected(dconst.peak_gain, scn.pointing.xi2, ds2)
        info("variant", f"direct_m2_uncorrected_ratio_d{int(d_e)}", v / m2)

    try:
        stats.second_moment_uncorrected_strong(scn.pointing.xi2, 4.0, 2.2, 100.0)
        info("variant", "strong_m2_variant_pole", float("nan"), "unexpected-success")
        failed = True
    except specfun.PoleCoincidenceError:
        info("variant", "strong_m2_variant_pole", float("nan"), "raises-pole-coincidence")

    const, gml, s2, alpha, beta = _element_objects(scn, 500.0)
    gbar_e = scn.mean_snr_ris
    for gth_db in (10.0, 25.0, 60.0):
        gth = 10.0 ** (gth_db / 10.0)
        v = stats.direct_outage_uncorrected(
            gth, scn.mean_snr_direct, _direct_objects(scn, 100.0)[0].peak_gain,
            scn.pointing.xi2, _direct_objects(scn, 100.0)[1],
        )
        info("variant", f"direct_outage_uncorrected_{int(gth_db)}db", v)
    v = stats.element_outage_factor_uncorrected(
        gbar_e * (const.peak_gain * 0.4) ** 2, gbar_e, const.peak_gain, gml.varpi, s2
    )
    info("variant", "element_outage_uncorrected_mid", v)

    # --- deployment benchmarks (reported, not gated)
    for (strat, regime, req, bench_snr, snr_ok, cov, bs, bench_bs, bs_ok) in (
        (r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8]) for r in _table2_rows(cfg)
    ):
        info(
            "benchmark",
            f"design_{strat}_{regime}_required_db",
            req,
            f"bench={_fmt(bench_snr)} in_band={'yes' if snr_ok else 'no'}",
        )
        info(
            "benchmark",
            f"design_{strat}_{regime}_bs_count",
            float(bs),
            f"bench={_fmt(bench_bs)} in_band={'yes' if bs_ok else 'no'}",
        )

    ratio_bench = {
        ("dor", "relay", "weak"): 4.04,
        ("dor", "for", "weak"): 1.60,
        ("dor", "relay", "strong"): 3.77,
        ("dor", "for", "strong"): 2.45,
    }
    cov30 = {}
    for strat in _ARRAY_STRATS:
        for regime in _REGIMES:
            scn2 = build_scenario(ov, strategy=strat, regime=regime, strong_cn2=(regime == "strong"))
            base_db = planner.edge_average_snr_db(scn2)
            req = planner.required_snr_db(scn2, ov["p_out_target"])
            scale = 10.0 ** ((req - base_db) / 10.0)
            cov30[(strat, regime)] = planner.coverage_diameter(scn2, 30.0, power_scale=scale)
    for (a, b, regime), bench in ratio_bench.items():
        ratio = cov30[(a, regime)] / cov30[(b, regime)]
        lo_b, hi_b = 0.75 * bench, 1.25 * bench
        in_band = lo_b <= ratio <= hi_b
        info(
            "benchmark",
            f"coverage_ratio_{a}_{b}_{regime}",
            ratio,
            f"bench={_fmt(bench)} in_band={'yes' if in_band else 'no'}",
        )

    return rows, failed


def _exp_validate(cfg: ExperimentConfig, out: OutputSet) -> bool:
    rows, failed = _validate_rows(cfg)
    formatted = []
    for section, name, value, target, tol, status in rows:
        formatted.append((section, name, value, target, tol, status))
    out.write(
        "validate.csv",
        ("section", "name", "value", "target", "tolerance", "status"),
        formatted,
        comments=(
            f"mc_samples={cfg.mc_samples}",
            "status pass/FAIL rows gate the exit code; info rows report context",
        ),
    )
    return failed


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run one experiment tag; returns a process exit code."""
    out = OutputSet(cfg.output_dir, cfg.seed)
    try:
        _write_params(out, cfg)
        if cfg.experiment == "fig4":
            _exp_fig4(cfg, out)
        elif cfg.experiment == "fig5":
            _exp_fig5(cfg, out)
        elif cfg.experiment == "fig6":
            _exp_fig6(cfg, out, with_rate=False)
        elif cfg.experiment == "fig7":
            _exp_fig6(cfg, out, with_rate=True)
        elif cfg.experiment == "fig8":
            _exp_fig8(cfg, out)
        elif cfg.experiment == "fig9":
            _exp_fig9(cfg, out)
        elif cfg.experiment == "table2":
            _exp_table2(cfg, out)
        elif cfg.experiment == "custom":
            _exp_custom(cfg, out)
        elif cfg.experiment == "validate":
            if _exp_validate(cfg, out):
                out.manifest("FAILED validate: one or more formula checks failed")
                return EXIT_VALIDATION
        else:
            raise ConfigError(f"unknown experiment {cfg.experiment!r}")
    except specfun.NumericalGuardError as exc:
        out.manifest(f"FAILED numerical-guard: {exc}")
        print(f"numerical guard tripped: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (planner.PlannerError, stats.StatsError, channel.ChannelError, montecarlo.MonteCarloError, specfun.SpecialFunctionError) as exc:
        out.manifest(f"FAILED {cfg.experiment}: {exc}")
        print(f"experiment failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


def main(argv=None) -> int:
    threads = os.environ.get("RAILFSO_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)

    parser = argparse.ArgumentParser(prog="railfso", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run one experiment from a config file")
    run_p.add_argument("--config", default=None, help="flat key=value config file")
    run_p.add_argument("--experiment", default=None, choices=EXPERIMENTS)
    run_p.add_argument("--seed", default=None, type=int)
    run_p.add_argument("--samples", default=None, type=int, help="Monte-Carlo sample count")
    run_p.add_argument("--out", default=None, help="output directory")
    val_p = sub.add_parser("validate", help="shorthand for run --experiment validate")
    val_p.add_argument("--config", default=None)
    val_p.add_argument("--seed", default=None, type=int)
    val_p.add_argument("--samples", default=None, type=int)
    val_p.add_argument("--out", default=None)
    args = parser.parse_args(argv)

    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.samples is not None:
        overrides["mc_samples"] = args.samples
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.command == "validate":
        overrides["experiment"] = "validate"
    elif args.experiment is not None:
        overrides["experiment"] = args.experiment

    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run_experiment(cfg)


if __name__ == "__main__":
    sys.exit(main())

"""Monte-Carlo simulation of link gains and branch SNR.

This module owns the scenario description (:class:`ScenarioConfig`), the
assembly of per-position branch parameters from geometry and channel
primitives, independent samplers for every fade model the closed forms
describe, and a chunked SNR simulator.  Samplers draw from
``numpy.random.default_rng([seed, stream_id])`` so that every experiment
is reproducible from a single seed and distinct purposes never share a
stream.

For paired scenario comparisons, :func:`outage_comparison` reuses common
random numbers across strategies: the turbulence and misalignment fades of
the reflective-array strategies are driven by identical standard draws
(their element distances, hence turbulence shapes, coincide; only the
orientation-dependent fade scale differs), which removes most sampling
noise from ordering checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import channel, geometry
from .channel import AtmosphereParams, DirectPointingParams, TurbulenceRegime
from .geometry import RisLayout, TrackLayout


class MonteCarloError(ValueError):
    """Invalid simulation request."""


GAMMA_TH_DB_DEFAULT = {"weak": 9.05, "strong": 21.32}


def rng_stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Deterministic generator for one (seed, purpose) pair."""
    return np.random.default_rng([int(seed), int(stream_id)])


@dataclass(frozen=True)
class ScenarioConfig:
    """One end-to-end service scenario.

    ``strategy`` selects the serving chain (``"direct"``, ``"for"``,
    ``"dor"``, ``"relay"``), ``regime`` the turbulence model used for every
    hop (``"weak"`` or ``"strong"``).  Powers are in watts, noise standard
    deviations in amperes at the detector, sway deviations in meters, and
    ``gamma_th_db`` is the outage SNR threshold in dB.
    """

    strategy: str = "dor"
    regime: str = "weak"
    track: TrackLayout = field(default_factory=TrackLayout)
    ris: RisLayout = field(default_factory=RisLayout)
    atm: AtmosphereParams = field(default_factory=AtmosphereParams)
    pointing: DirectPointingParams = field(default_factory=DirectPointingParams)
    sway: tuple = (5.0, 5.0, 5.0)
    power_w: float = 0.04
    eta: float = 0.5
    noise_sigma_direct: float = 1e-7
    noise_sigma_ris: float = 1e-7
    gamma_th_db: float = 9.05

    def __post_init__(self):
        if self.strategy not in geometry.STRATEGIES:
            raise MonteCarloError(f"unknown strategy {self.strategy!r}")
        if self.regime not in ("weak", "strong"):
            raise MonteCarloError(f"unknown regime {self.regime!r}")
        for name in ("power_w", "eta", "noise_sigma_direct", "noise_sigma_ris"):
            if getattr(self, name) <= 0.0:
                raise MonteCarloError(f"{name} must be positive")
        if len(self.sway) != 3:
            raise MonteCarloError("sway must hold three standard deviations")

    @property
    def mean_snr_direct(self) -> float:
        """SNR multiplier of the direct branch: snr = mean_snr_direct * h**2."""
        return self.eta**2 * self.power_w / self.noise_sigma_direct**2

    @property
    def mean_snr_ris(self) -> float:
        """Per-element SNR multiplier of the reflected branch."""
        return self.eta**2 * self.ris.rho**2 * self.power_w / self.noise_sigma_ris**2

    @property
    def gamma_th(self) -> float:
        return 10.0 ** (self.gamma_th_db / 10.0)


def default_config(strategy: str = "dor", regime: str = "weak", **overrides) -> ScenarioConfig:
    """Scenario with the study defaults for the given strategy and regime."""
    overrides.setdefault("gamma_th_db", GAMMA_TH_DB_DEFAULT.get(regime, 9.05))
    return ScenarioConfig(strategy=strategy, regime=regime, **overrides)


# ---------------------------------------------------------------------------
# Branch parameter assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DirectField:
    """Resolved direct-branch parameters at one train position."""

    distance: float
    sigma2: float
    peak_gain: float
    coef: float
    alpha: float | None = None
    beta: float | None = None

    kind = "direct"


@dataclass(frozen=True)
class RisField:
    """Resolved reflected-branch per-element parameters at one position.

    Arrays are flat over the whole panel.  ``active_indices`` selects the
    subset that actually carries the branch: the serving cell for the
    fixed-orientation array, or the elements whose aggregate the relay
    baseline emulates.  ``None`` means the full panel contributes.
    """

    d_e: np.ndarray
    sigma2: np.ndarray
    peak_gain: np.ndarray
    varpi: np.ndarray
    coef: float
    alpha: np.ndarray | None = None
    beta: np.ndarray | None = None
    active_indices: np.ndarray | None = None

    kind = "ris"

    @property
    def active(self) -> "RisField":
        """Restrict to the elements that actually carry the branch."""
        if self.active_indices is None:
            return self
        idx = self.active_indices
        return RisField(
            d_e=self.d_e[idx],
            sigma2=self.sigma2[idx],
            peak_gain=self.peak_gain[idx],
            varpi=self.varpi[idx],
            coef=self.coef,
            alpha=None if self.alpha is None else self.alpha[idx],
            beta=None if self.beta is None else self.beta[idx],
        )


def branch_field(cfg: ScenarioConfig, x: float):
    """Resolve the branch serving track offset ``x`` into channel parameters.

    Offsets before the blockage span, and the direct strategy everywhere,
    resolve to a :class:`DirectField`; otherwise a :class:`RisField` whose
    orientation follows the strategy (grid-point aim for the fixed array,
    detector aim for the dynamic array and the relay baseline).
    """
    track, ris, atm = cfg.track, cfg.ris, cfg.atm
    if cfg.strategy == "direct" or x < track.l_b:
        d_b = geometry.direct_distance(track, x / track.v_hst, 0.0)
        s2 = channel.rytov_sigma2(atm, d_b)
        fld = DirectField(
            distance=d_b,
            sigma2=s2,
            peak_gain=channel.path_loss(atm, d_b) * cfg.pointing.h0_b,
            coef=cfg.mean_snr_direct,
        )
        if cfg.regime == "strong":
            a, b = channel.gg_shape_params(s2)
            fld = replace(fld, alpha=a, beta=b)
        return fld

    det = geometry.detector_position(track, x)
    if cfg.strategy == "for":
        cell = geometry.active_cell_at(track, ris, x)
        aim_x = geometry.cell_grid_aim(track, ris, cell)
        aim = np.array([aim_x, 0.0, track.roof_height])
        geo = geometry.element_path_geometry(track, ris, det, aim_pos=aim)
    else:
        geo = geometry.element_path_geometry(track, ris, det)

    f = channel.gml_fields(
        geo["d_e"], geo["cos_in"], geo["cos_out"], atm, sway=cfg.sway, a_p=ris.a_p
    )
    s2 = channel.rytov_sigma2(atm, geo["d_e"])
    fld = RisField(
        d_e=geo["d_e"],
        sigma2=s2,
        peak_gain=channel.path_loss(atm, geo["d_e"]) * f["h0"],
        varpi=f["varpi"],
        coef=cfg.mean_snr_ris,
    )
    if cfg.regime == "strong":
        a, b = channel.gg_shape_params(s2)
        fld = replace(fld, alpha=a, beta=b)
    if cfg.strategy == "for":
        e = ris.elements_per_cell
        fld = replace(fld, active_indices=np.arange((cell - 1) * e, cell * e))
    elif cfg.strategy == "relay":
        g2 = element_second_moments(fld)
        idx = np.sort(np.argsort(g2)[-ris.relay_elements :])
        fld = replace(fld, active_indices=idx)
    return fld


def element_second_moments(fld: RisField) -> np.ndarray:
    """Closed-form second moment of each element's composite gain."""
    base = fld.peak_gain**2 * (1.0 + 2.0 / fld.varpi) ** -0.5
    if fld.alpha is None:
        return base * np.exp(4.0 * fld.sigma2)
    return base * (1.0 + 1.0 / fld.alpha) * (1.0 + 1.0 / fld.beta)


def direct_second_moment(fld: DirectField, pointing: DirectPointingParams) -> float:
    """Closed-form second moment of the direct composite gain."""
    base = fld.peak_gain**2 * pointing.xi2 / (pointing.xi2 + 2.0)
    if fld.alpha is None:
        return base * math.exp(4.0 * fld.sigma2)
    return base * (1.0 + 1.0 / fld.alpha) * (1.0 + 1.0 / fld.beta)


def branch_mean_snr(cfg: ScenarioConfig, x: float) -> float:
    """Closed-form branch-average SNR at track offset ``x`` (linear)."""
    fld = branch_field(cfg, x)
    if fld.kind == "direct":
        return fld.coef * direct_second_moment(fld, cfg.pointing)
    return fld.coef * float(np.sum(element_second_moments(fld.active)))


# ---------------------------------------------------------------------------
# Single-link samplers
# ---------------------------------------------------------------------------


def sample_turbulence(rng: np.random.Generator, regime: TurbulenceRegime, n: int) -> np.ndarray:
    """Unit-mean turbulence fades."""
    if n <= 0:
        raise MonteCarloError("sample count must be positive")
    if regime.kind == "weak":
        s = math.sqrt(regime.sigma2)
        return np.exp(-2.0 * regime.sigma2 + 2.0 * s * rng.standard_normal(n))
    big = rng.gamma(regime.alpha, 1.0 / regime.alpha, n)
    small = rng.gamma(regime.beta, 1.0 / regime.beta, n)
    return big * small


def sample_misalignment(rng: np.random.Generator, h0: float, varpi: float, n: int) -> np.ndarray:
    """Misalignment gains ``h0 * exp(-u)``, ``u ~ Gamma(1/2, rate varpi)``."""
    if n <= 0:
        raise MonteCarloError("sample count must be positive")
    return h0 * np.exp(-rng.gamma(0.5, 1.0, n) / varpi)


def sample_direct_pointing(rng: np.random.Generator, p: DirectPointingParams, n: int) -> np.ndarray:
    """Direct-link pointing gains ``h0_b * U**(1/xi**2)``."""
    if n <= 0:
        raise MonteCarloError("sample count must be positive")
    return p.h0_b * rng.uniform(size=n) ** (1.0 / p.xi2)


def sample_element_gain(
    rng: np.random.Generator,
    peak_gain: float,
    varpi: float,
    regime: TurbulenceRegime,
    n: int,
) -> np.ndarray:
    """Composite gains of one array element (turbulence then misalignment)."""
    t = sample_turbulence(rng, regime, n)
    g = np.exp(-rng.gamma(0.5, 1.0, n) / varpi)
    return peak_gain * t * g


def sample_direct_gain(
    rng: np.random.Generator,
    peak_gain: float,
    p: DirectPointingParams,
    regime: TurbulenceRegime,
    n: int,
) -> np.ndarray:
    """Composite gains of the direct link (turbulence then pointing)."""
    t = sample_turbulence(rng, regime, n)
    u = rng.uniform(size=n) ** (1.0 / p.xi2)
    return peak_gain * t * u


# ---------------------------------------------------------------------------
# Branch SNR simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmpiricalSummary:
    """Moments, outage estimates, and optional sorted samples of branch SNR."""

    n_samples: int
    mean: float
    second_moment: float
    outage: dict
    samples: np.ndarray | None = None

    def outage_at(self, threshold_db: float):
        """(probability, binomial standard error) for a simulated threshold."""
        key = float(threshold_db)
        if key in self.outage:
            return self.outage[key]
        if self.samples is None:
            raise MonteCarloError(
                f"threshold {threshold_db} dB was not simulated and samples were not kept"
            )
        th = 10.0 ** (key / 10.0)
        p = float(np.searchsorted(self.samples, th, side="left")) / self.n_samples
        return p, math.sqrt(max(p * (1.0 - p), 1.0 / self.n_samples) / self.n_samples)


def _chunk_sizes(n_samples: int, n_elements: int, chunk_size: int | None):
    if chunk_size is None:
        chunk_size = max(1, min(n_samples, int(2.5e6 / max(n_elements, 1))))
    sizes = [chunk_size] * (n_samples // chunk_size)
    if n_samples % chunk_size:
        sizes.append(n_samples % chunk_size)
    return sizes


def _ris_snr_chunk(fld: RisField, rng_t, rng_s, m: int) -> np.ndarray:
    """One chunk of reflected-branch SNR draws (turbulence then misalignment)."""
    e = fld.d_e.size
    if fld.alpha is None:
        z = rng_t.standard_normal((m, e))
        t = np.exp(-2.0 * fld.sigma2 + 2.0 * np.sqrt(fld.sigma2) * z)
    else:
        big = rng_t.gamma(np.broadcast_to(fld.alpha, (m, e)), 1.0 / fld.alpha)
        small = rng_t.gamma(np.broadcast_to(fld.beta, (m, e)), 1.0 / fld.beta)
        t = big * small
    s = rng_s.gamma(0.5, 1.0, (m, e))
    h = fld.peak_gain * t * np.exp(-s / fld.varpi)
    return fld.coef * np.sum(h * h, axis=1)


def _direct_snr_chunk(fld: DirectField, p: DirectPointingParams, rng_t, rng_u, m: int) -> np.ndarray:
    if fld.alpha is None:
        z = rng_t.standard_normal(m)
        t = np.exp(-2.0 * fld.sigma2 + 2.0 * math.sqrt(fld.sigma2) * z)
    else:
        t = rng_t.gamma(fld.alpha, 1.0 / fld.alpha, m) * rng_t.gamma(fld.beta, 1.0 / fld.beta, m)
    u = rng_u.uniform(size=m) ** (1.0 / p.xi2)
    h = fld.peak_gain * t * u
    return fld.coef * h * h


def simulate_snr(
    cfg: ScenarioConfig,
    x: float,
    n_samples: int,
    seed: int,
    thresholds_db=(),
    keep_samples: bool = False,
    chunk_size: int | None = None,
) -> EmpiricalSummary:
    """Simulate the serving-branch SNR at track offset ``x``.

    Outage is the fraction of draws whose branch SNR (the mean-SNR
    multiplier times the sum of squared element gains, or the squared
    direct gain) falls below each threshold.
    """
    if n_samples <= 0:
        raise MonteCarloError("sample count must be positive")
    fld = branch_field(cfg, x)
    active = fld.active if fld.kind == "ris" else fld
    n_elem = active.d_e.size if fld.kind == "ris" else 1

    rng_t = rng_stream(seed, 1)
    rng_s = rng_stream(seed, 2)
    rng_u = rng_stream(seed, 3)

    th = np.array([10.0 ** (float(t) / 10.0) for t in thresholds_db])
    counts = np.zeros(th.size, dtype=np.int64)
    total = 0.0
    total2 = 0.0
    kept = [] if keep_samples else None

    for m in _chunk_sizes(n_samples, n_elem, chunk_size):
        if fld.kind == "ris":
            snr = _ris_snr_chunk(active, rng_t, rng_s, m)
        else:
            snr = _direct_snr_chunk(fld, cfg.pointing, rng_t, rng_u, m)
        total += float(np.sum(snr))
        total2 += float(np.sum(snr * snr))
        if th.size:
            counts += np.sum(snr[:, None] < th[None, :], axis=0)
        if kept is not None:
            kept.append(snr)

    outage = {}
    for i, t_db in enumerate(thresholds_db):
        p = counts[i] / n_samples
        se = math.sqrt(max(p * (1.0 - p), 1.0 / n_samples) / n_samples)
        outage[float(t_db)] = (float(p), se)
    samples = np.sort(np.concatenate(kept)) if kept is not None else None
    return EmpiricalSummary(
        n_samples=n_samples,
        mean=total / n_samples,
        second_moment=total2 / n_samples,
        outage=outage,
        samples=samples,
    )


# ---------------------------------------------------------------------------
# Paired scenario comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairedOutage:
    """Outage estimates on shared draws plus paired difference errors.

    ``probability`` maps scenario name to (outage, standard error);
    ``difference`` maps an ordered name pair to (p_first - p_second,
    standard error of that difference under the shared draws).
    """

    n_samples: int
    probability: dict
    difference: dict


def outage_comparison(
    named_cfgs: dict,
    x: float,
    n_samples: int,
    seed: int,
    power_scale: dict | None = None,
    chunk_size: int | None = None,
) -> PairedOutage:
    """Estimate outage for several scenarios on common random numbers.

    All reflective-array scenarios must share element geometry distances
    (same panel and detector position), which makes their turbulence and
    misalignment standard draws reusable; each scenario's own fade scales
    and thresholds are applied on top.  ``power_scale`` optionally
    multiplies each scenario's SNR (matched-average comparisons pass the
    ratio of a common target to the scenario's natural branch average).
    """
    if n_samples <= 0:
        raise MonteCarloError("sample count must be positive")
    names = list(named_cfgs)
    fields = {n: branch_field(named_cfgs[n], x) for n in names}
    scales = {n: 1.0 if power_scale is None else float(power_scale.get(n, 1.0)) for n in names}

    ris_names = [n for n in names if fields[n].kind == "ris"]
    if ris_names:
        ref = fields[ris_names[0]].d_e
        for n in ris_names[1:]:
            if fields[n].d_e.shape != ref.shape or not np.allclose(fields[n].d_e, ref):
                raise MonteCarloError(
                    "common-random-number comparison requires identical element distances"
                )
        weak_ris = any(fields[n].alpha is None for n in ris_names)
        strong_fields = [fields[n] for n in ris_names if fields[n].alpha is not None]
        strong_ris = bool(strong_fields)
        for f in strong_fields[1:]:
            if not (np.allclose(f.alpha, strong_fields[0].alpha) and np.allclose(f.beta, strong_fields[0].beta)):
                raise MonteCarloError(
                    "common-random-number comparison requires identical turbulence shapes"
                )

    rng_t_weak = rng_stream(seed, 1)
    rng_t_strong = rng_stream(seed, 2)
    rng_s = rng_stream(seed, 3)
    rng_d_weak = rng_stream(seed, 4)
    rng_d_strong = rng_stream(seed, 5)
    rng_d_u = rng_stream(seed, 6)

    max_elem = max((fields[n].d_e.size for n in ris_names), default=1)
    counts = {n: 0 for n in names}
    joint10 = {}
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            joint10[(a, b)] = [0, 0]

    for m in _chunk_sizes(n_samples, max_elem, chunk_size):
        z = s = big = small = None
        if ris_names:
            s = rng_s.gamma(0.5, 1.0, (m, max_elem))
            if weak_ris:
                z = rng_t_weak.standard_normal((m, max_elem))
            if strong_ris:
                a0, b0 = strong_fields[0].alpha, strong_fields[0].beta
                big = rng_t_strong.gamma(np.broadcast_to(a0, (m, max_elem)), 1.0 / a0)
                small = rng_t_strong.gamma(np.broadcast_to(b0, (m, max_elem)), 1.0 / b0)
        below = {}
        for n in names:
            fld = fields[n]
            if fld.kind == "direct":
                rng_dt = rng_d_weak if fld.alpha is None else rng_d_strong
                snr = _direct_snr_chunk(fld, named_cfgs[n].pointing, rng_dt, rng_d_u, m)
            else:
                if fld.alpha is None:
                    t = np.exp(-2.0 * fld.sigma2 + 2.0 * np.sqrt(fld.sigma2) * z)
                else:
                    t = big * small
                act = fld.active
                if fld.active_indices is not None:
                    idx = fld.active_indices
                    h = act.peak_gain * t[:, idx] * np.exp(-s[:, idx] / act.varpi)
                else:
                    h = fld.peak_gain * t * np.exp(-s / fld.varpi)
                snr = fld.coef * np.sum(h * h, axis=1)
            below[n] = snr * scales[n] < named_cfgs[n].gamma_th
            counts[n] += int(np.sum(below[n]))
        for (a, b), acc in joint10.items():
            acc[0] += int(np.sum(below[a] & ~below[b]))
            acc[1] += int(np.sum(~below[a] & below[b]))

    probability = {}
    for n in names:
        p = counts[n] / n_samples
        se = math.sqrt(max(p * (1.0 - p), 1.0 / n_samples) / n_samples)
        probability[n] = (p, se)
    difference = {}
    for (a, b), (n10, n01) in joint10.items():
        d = (n10 - n01) / n_samples
        var = (n10 + n01) / n_samples - d * d
        difference[(a, b)] = (d, math.sqrt(max(var, 1.0 / n_samples) / n_samples))
    return PairedOutage(n_samples=n_samples, probability=probability, difference=difference)

"""Closed-form link statistics: moments, distributions, outage, efficiency.

Everything here is an exact consequence of the channel models in
:mod:`railfso.channel`; the Monte-Carlo samplers in
:mod:`railfso.montecarlo` provide the independent cross-checks.  Functions
with an ``_uncorrected`` suffix port earlier algebraic variants of the
same quantities; they are kept only so the validation report can measure
how far each variant sits from the exact value, and they are never used
by the planner.

Branch outage follows the per-element product convention used throughout
the planning chain: a branch is in outage when every one of its elements'
individual SNR contributions sits below the threshold, so the probability
is the product of per-element distribution values (evaluated in log
domain).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import channel, geometry, montecarlo, specfun
from .montecarlo import DirectField, RisField, ScenarioConfig, branch_field


class StatsError(ValueError):
    """Invalid statistical query."""


# ---------------------------------------------------------------------------
# Second moments (exact, and retained uncorrected variants)
# ---------------------------------------------------------------------------


def element_gain_second_moment(peak_gain, varpi, sigma2=None, alpha=None, beta=None):
    """Exact second moment of one array element's composite gain.

    Pass ``sigma2`` for the lognormal regime or ``alpha``/``beta`` for the
    gamma-gamma regime.
    """
    base = np.asarray(peak_gain, dtype=float) ** 2 * (1.0 + 2.0 / np.asarray(varpi, dtype=float)) ** -0.5
    if alpha is not None:
        out = base * (1.0 + 1.0 / np.asarray(alpha, dtype=float)) * (1.0 + 1.0 / np.asarray(beta, dtype=float))
    elif sigma2 is not None:
        out = base * np.exp(4.0 * np.asarray(sigma2, dtype=float))
    else:
        raise StatsError("pass sigma2 (lognormal) or alpha and beta (gamma-gamma)")
    return float(out) if np.ndim(out) == 0 else out


def direct_gain_second_moment(peak_gain, xi2, sigma2=None, alpha=None, beta=None):
    """Exact second moment of the direct link's composite gain."""
    base = np.asarray(peak_gain, dtype=float) ** 2 * xi2 / (xi2 + 2.0)
    if alpha is not None:
        out = base * (1.0 + 1.0 / np.asarray(alpha, dtype=float)) * (1.0 + 1.0 / np.asarray(beta, dtype=float))
    elif sigma2 is not None:
        out = base * np.exp(4.0 * np.asarray(sigma2, dtype=float))
    else:
        raise StatsError("pass sigma2 (lognormal) or alpha and beta (gamma-gamma)")
    return float(out) if np.ndim(out) == 0 else out


def element_second_moment_uncorrected(peak_gain: float, varpi: float, sigma2: float) -> float:
    """Earlier lognormal-regime element second-moment variant.

    Its value collapses toward zero at practical parameters; retained for
    the validation report only.
    """
    c_a = peak_gain
    c_b = 2.0 * sigma2 * (1.0 + 2.0 * varpi)
    c_g = c_b / (c_a * math.sqrt(8.0 * sigma2))
    t14 = (math.sqrt(varpi) * c_b**3) / (8.0 * math.sqrt(math.pi) * c_a**varpi)
    br1 = (5.0 - math.log(c_a)) / 3.0 * (
        math.exp(-(c_g**2)) * (c_g**2 + 1.0) / (math.sqrt(math.pi) * c_g**3)
        - special.erfc(c_g)
    )
    br2 = (math.sqrt(8.0 * sigma2) * c_b**varpi / (math.sqrt(math.pi) * (varpi + 3.0))) * (
        special.gammaincc((varpi + 4.0) / 2.0, c_g**2)
        * special.gamma((varpi + 4.0) / 2.0)
        / (math.sqrt(math.pi) * c_g ** (varpi + 3.0))
        - special.erfc(c_g)
    )
    return t14 * (br1 + br2)


def direct_second_moment_uncorrected(peak_gain: float, xi2: float, sigma2: float) -> float:
    """Earlier lognormal-regime direct second-moment variant (report only)."""
    c_d = peak_gain
    c_e = 2.0 * sigma2 * (1.0 + 2.0 * xi2)
    c_f = 2.0 * sigma2 * xi2 * (1.0 + xi2)
    c_h = c_e / (c_d * math.sqrt(8.0 * sigma2))
    pref = xi2 * (c_e / c_h) ** (xi2 + 2.0) * c_f / (2.0 * (xi2 + 2.0) * c_d**xi2)
    br = special.gammaincc((xi2 + 3.0) / 2.0, c_h**2) * special.gamma(
        (xi2 + 3.0) / 2.0
    ) / math.sqrt(math.pi) - c_h ** (xi2 + 2.0) * special.erfc(c_h)
    return pref * br


def moment_meijer_degenerate_spec(exponent: float, alpha: float, beta: float) -> specfun.MeijerGSpec:
    """Meijer-G spec of the earlier gamma-gamma second-moment variants.

    Both the element and direct variants share one structure whose first
    upper parameter sits exactly one unit above the first lower parameter,
    a pole coincidence that makes the expression undefined; evaluating the
    spec raises :class:`railfso.specfun.PoleCoincidenceError`, which the
    validation report records.
    """
    e = float(exponent)
    return specfun.MeijerGSpec(
        m=4, n=1, a=(-1.0 - e, 1.0 + e), b=(-2.0 - e, e, float(alpha), float(beta))
    )


def second_moment_uncorrected_strong(exponent: float, alpha: float, beta: float, argument: float) -> float:
    """Evaluate the degenerate gamma-gamma moment variant (always raises)."""
    spec = moment_meijer_degenerate_spec(exponent, alpha, beta)
    return specfun.meijer_g(spec, argument)


# ---------------------------------------------------------------------------
# Per-link gain distributions
# ---------------------------------------------------------------------------


def element_cdf(x, peak_gain, varpi, sigma2=None, alpha=None, beta=None):
    """Distribution of one element's composite gain at threshold ``x``.

    Parameters may be arrays over elements (broadcast against each other);
    ``x`` may be a scalar or an array broadcastable with them.  Exact up to
    fixed-order quadrature of smooth kernels.
    """
    strong = alpha is not None
    if not strong and sigma2 is None:
        raise StatsError("pass sigma2 (lognormal) or alpha and beta (gamma-gamma)")
    if strong:
        c_a, pw, a, b, xv = np.broadcast_arrays(
            np.asarray(peak_gain, float), np.asarray(varpi, float),
            np.asarray(alpha, float), np.asarray(beta, float), np.asarray(x, float),
        )
    else:
        c_a, pw, s2, xv = np.broadcast_arrays(
            np.asarray(peak_gain, float), np.asarray(varpi, float),
            np.asarray(sigma2, float), np.asarray(x, float),
        )
    shape = xv.shape
    c_a, pw, xv = c_a.ravel(), pw.ravel(), xv.ravel()
    out = np.zeros(xv.size)
    pos = np.flatnonzero(xv > 0.0)

    # The quadrature scratch is (points x nodes); slice the evaluation so
    # million-point callers stay within a bounded footprint.
    if strong:
        a, b = a.ravel(), b.ravel()
        for sl in _index_chunks(pos):
            out[sl] = _element_cdf_strong(xv[sl], c_a[sl], pw[sl], a[sl], b[sl])
    else:
        s2 = s2.ravel()
        for sl in _index_chunks(pos):
            out[sl] = _element_cdf_weak(xv[sl], c_a[sl], pw[sl], s2[sl])

    out = out.reshape(shape)
    return float(out) if np.ndim(x) == 0 and out.ndim == 0 else out


#: Threshold-point block size for the chunked CDF evaluations.
_CDF_BLOCK = 32768


def _index_chunks(idx: np.ndarray):
    for start in range(0, idx.size, _CDF_BLOCK):
        yield idx[start : start + _CDF_BLOCK]


def _element_cdf_weak(xv, c_a, pw, s2):
    nodes, weights = specfun.leggauss_nodes(96)
    l = np.log(xv / c_a)
    sd = 2.0 * np.sqrt(s2)
    z0 = (l + 2.0 * s2) / sd
    base = special.ndtr(z0)
    # Mass below the fade knee comes as phi(z) * erfc(...) for z >= z0;
    # substitute z = z0 + u^2 so the square-root kink at z0 vanishes and
    # window z to [-9, 9] where the normal factor carries all the mass.
    u_lo = np.sqrt(np.maximum(-9.0 - z0, 0.0))
    u_hi = np.sqrt(np.maximum(9.0 - z0, 0.0))
    u = 0.5 * (u_hi - u_lo)[:, None] * (nodes[None, :] + 1.0) + u_lo[:, None]
    z = z0[:, None] + u * u
    phi = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    ker = phi * special.erfc(np.sqrt(pw[:, None] * sd[:, None]) * u) * 2.0 * u
    tail = np.sum(weights[None, :] * ker, axis=1) * 0.5 * (u_hi - u_lo)
    return np.minimum(base + tail, 1.0)


def _element_cdf_strong(xv, c_a, pw, ap, bp):
    nodes, weights = specfun.leggauss_nodes(200)
    xt = xv / c_a
    lg = special.gammaln(ap) + special.gammaln(bp)
    half = specfun.kernel_band_half_width(ap, bp)

    lo = -half
    hi = np.minimum(np.log(xt), half)
    width = np.maximum(hi - lo, 0.0)
    lt = 0.5 * width[:, None] * (nodes[None, :] + 1.0) + lo[:, None]
    mass = np.exp(
        specfun.bessel_k_product_ln(
            (ap[:, None], bp[:, None]), ap[:, None] * bp[:, None] * np.exp(lt)
        )
        - lg[:, None]
    )
    val = np.sum(weights[None, :] * mass, axis=1) * 0.5 * width

    b2 = half - np.log(xt)
    live = b2 > 0.0
    b2 = np.where(live, np.minimum(b2, 60.0 / pw), 0.0)
    rb = np.sqrt(b2)
    y = 0.5 * rb[:, None] * (nodes[None, :] + 1.0)
    lt2 = np.log(np.maximum(xt, 1e-300))[:, None] + y * y
    ker = (
        np.exp(
            specfun.bessel_k_product_ln(
                (ap[:, None], bp[:, None]), ap[:, None] * bp[:, None] * np.exp(lt2)
            )
            - lg[:, None]
        )
        * special.erfc(np.sqrt(pw)[:, None] * y)
        * 2.0
        * y
    )
    val = val + np.where(live, np.sum(weights[None, :] * ker, axis=1) * 0.5 * rb, 0.0)
    return np.minimum(val, 1.0)


def direct_cdf(cfg: ScenarioConfig, fld: DirectField, x):
    """Distribution of the direct composite gain for a resolved branch."""
    if fld.alpha is None:
        const = channel.direct_link_constants(
            fld.peak_gain / cfg.pointing.h0_b, cfg.pointing, fld.sigma2
        )
        return channel.direct_cdf_weak(const, fld.sigma2, cfg.pointing, x)
    const = channel.direct_link_constants(
        fld.peak_gain / cfg.pointing.h0_b, cfg.pointing, fld.sigma2
    )
    return channel.direct_cdf_strong(const, fld.alpha, fld.beta, cfg.pointing, x)


# ---------------------------------------------------------------------------
# Branch-average SNR over the serving period
# ---------------------------------------------------------------------------


def branch_average_snr(cfg: ScenarioConfig, x: float) -> float:
    """Closed-form branch-average SNR at track offset ``x`` (linear)."""
    return montecarlo.branch_mean_snr(cfg, x)


def average_snr(cfg: ScenarioConfig, t: float) -> float:
    """Closed-form serving-branch average SNR at time ``t`` (linear)."""
    if t < 0.0:
        raise StatsError("time must be nonnegative")
    x = (t % cfg.track.period) * cfg.track.v_hst
    return branch_average_snr(cfg, x)


def span_snr_profile(cfg: ScenarioConfig, xs, power_scale: float = 1.0) -> np.ndarray:
    """Branch-average SNR at many track offsets (vectorized, linear scale)."""
    xs = np.asarray(xs, dtype=float)
    if np.any(xs < 0.0):
        raise StatsError("offsets must be nonnegative")
    track, ris, atm = cfg.track, cfg.ris, cfg.atm
    out = np.empty(xs.shape, dtype=float)
    strong = cfg.regime == "strong"

    dmask = np.full(xs.shape, cfg.strategy == "direct") | (xs < track.l_b)
    if np.any(dmask):
        d_b = np.hypot(track.l_d, track.l_0 + xs[dmask])
        s2 = channel.rytov_sigma2(atm, d_b)
        peak = channel.path_loss(atm, d_b) * cfg.pointing.h0_b
        if strong:
            a, b = channel.gg_shape_params(s2)
            m2 = direct_gain_second_moment(peak, cfg.pointing.xi2, alpha=a, beta=b)
        else:
            m2 = direct_gain_second_moment(peak, cfg.pointing.xi2, sigma2=s2)
        out[dmask] = cfg.mean_snr_direct * np.atleast_1d(m2)

    rmask = ~dmask
    if np.any(rmask):
        xr = xs[rmask]
        dets = np.stack([xr, np.zeros_like(xr), np.full_like(xr, track.roof_height)], axis=1)
        if cfg.strategy == "for":
            cell_len = track.l_m / ris.n_m
            cells = np.clip(np.ceil((xr - track.l_b) / cell_len).astype(int), 1, ris.n_m)
            aim_x = track.l_b + (cells - 0.5) * cell_len
            aims = np.stack([aim_x, np.zeros_like(aim_x), np.full_like(aim_x, track.roof_height)], axis=1)
        else:
            cells, aims = None, None

        n_e = ris.total_elements
        sums = np.empty(xr.size)
        block = max(1, int(2e5) // max(n_e, 1))
        for i0 in range(0, xr.size, block):
            sl = slice(i0, min(i0 + block, xr.size))
            geo = geometry.element_path_geometry_multi(
                track,
                ris,
                dets[sl],
                cells=None if cells is None else cells[sl],
                aim_pos=None if aims is None else aims[sl],
            )
            f = channel.gml_fields(
                geo["d_e"], geo["cos_in"], geo["cos_out"], atm, sway=cfg.sway, a_p=ris.a_p
            )
            peak = channel.path_loss(atm, geo["d_e"]) * f["h0"]
            s2 = channel.rytov_sigma2(atm, geo["d_e"])
            if strong:
                a, b = channel.gg_shape_params(s2)
                g2 = element_gain_second_moment(peak, f["varpi"], alpha=a, beta=b)
            else:
                g2 = element_gain_second_moment(peak, f["varpi"], sigma2=s2)
            if cfg.strategy == "relay":
                k = ris.relay_elements
                part = np.partition(g2, g2.shape[1] - k, axis=1)[:, -k:]
                sums[sl] = part.sum(axis=1)
            else:
                sums[sl] = g2.sum(axis=1)
        out[rmask] = cfg.mean_snr_ris * sums
    return out * power_scale


def span_average_snr(cfg: ScenarioConfig, step: float = 1.0) -> float:
    """Serving-period average of the branch-average SNR (trapezoid, linear).

    Averages over track offsets from 1 m to the station spacing at the
    given step.
    """
    if step <= 0.0:
        raise StatsError("step must be positive")
    xs = np.arange(1.0, cfg.track.bs_spacing + step / 2.0, step)
    vals = span_snr_profile(cfg, xs)
    return float(np.trapezoid(vals, xs) / (xs[-1] - xs[0]))


# ---------------------------------------------------------------------------
# Outage
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OutageResult:
    """Closed-form branch outage under the per-element product convention."""

    probability: float
    log10_probability: float
    n_active: int


def _field_outage(
    cfg: ScenarioConfig, fld, gamma_th: float, power_scale: float = 1.0
) -> OutageResult:
    coef = fld.coef * power_scale
    if fld.kind == "direct":
        p = float(direct_cdf(cfg, fld, math.sqrt(gamma_th / coef)))
        lp = math.log10(p) if p > 0.0 else -math.inf
        return OutageResult(probability=p, log10_probability=lp, n_active=1)
    act = fld.active
    th = math.sqrt(gamma_th / coef)
    if act.alpha is None:
        f = element_cdf(th, act.peak_gain, act.varpi, sigma2=act.sigma2)
    else:
        f = element_cdf(th, act.peak_gain, act.varpi, alpha=act.alpha, beta=act.beta)
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0.0):
        return OutageResult(probability=0.0, log10_probability=-math.inf, n_active=f.size)
    ln_p = float(np.sum(np.log(f)))
    return OutageResult(
        probability=math.exp(ln_p) if ln_p > -700.0 else 0.0,
        log10_probability=ln_p / math.log(10.0),
        n_active=f.size,
    )


def outage_closed_form(
    cfg: ScenarioConfig, x: float, gamma_th_db: float | None = None, power_scale: float = 1.0
) -> OutageResult:
    """Closed-form outage of the branch serving offset ``x``.

    ``power_scale`` multiplies the branch SNR (used by planning sweeps that
    rescale transmit power without rebuilding the scenario).
    """
    th_db = cfg.gamma_th_db if gamma_th_db is None else float(gamma_th_db)
    fld = branch_field(cfg, x)
    return _field_outage(cfg, fld, 10.0 ** (th_db / 10.0), power_scale)


def element_outage_factor_uncorrected(
    gamma_th: float, mean_snr: float, peak_gain: float, varpi: float, sigma2: float
) -> float:
    """Earlier per-element outage factor, lognormal regime (report only).

    The exact factor is the element gain distribution at
    ``sqrt(gamma_th / mean_snr)``; this variant returns essentially zero
    across the practical range.
    """
    c_a = peak_gain
    c_b = 2.0 * sigma2 * (1.0 + 2.0 * varpi)
    c_g = c_b / (c_a * math.sqrt(8.0 * sigma2))
    cg_hat = c_g / math.sqrt(mean_snr)
    arg = cg_hat * (1.0 + gamma_th / c_b)
    pref = math.sqrt(8.0 * sigma2) * (c_b / c_g) ** (varpi / 2.0) / (
        8.0 * math.pi * math.sqrt(varpi) * c_a**varpi
    )
    brk = arg ** (varpi / 2.0) * special.erfc(arg) - special.gammaincc(
        (varpi + 2.0) / 4.0, arg**2
    ) * special.gamma((varpi + 2.0) / 4.0) / math.sqrt(math.pi)
    return pref * brk


def direct_outage_uncorrected(
    gamma_th: float, mean_snr: float, peak_gain: float, xi2: float, sigma2: float
) -> float:
    """Earlier direct-link outage expression, lognormal regime (report only).

    Goes negative at low thresholds and misses the lognormal body term; the
    exact outage is the direct gain distribution at
    ``sqrt(gamma_th / mean_snr)``.
    """
    c_d = peak_gain
    c_e = 2.0 * sigma2 * (1.0 + 2.0 * xi2)
    c_f = 2.0 * sigma2 * xi2 * (1.0 + xi2)
    c_h = c_e / (c_d * math.sqrt(8.0 * sigma2))
    ch_hat = c_h / math.sqrt(mean_snr)
    a1 = ch_hat * (1.0 + gamma_th / c_e)
    pref = (c_e / c_h) ** (xi2 / 2.0) * c_f / (4.0 * c_d**xi2)
    brk = ch_hat ** (xi2 / 2.0) * (1.0 + gamma_th / c_e) ** (xi2 / 2.0) * special.erfc(
        a1
    ) - special.gammaincc((xi2 + 2.0) / 4.0, a1**2) * special.gamma(
        (xi2 + 2.0) / 4.0
    ) / math.sqrt(math.pi)
    return pref * brk


# ---------------------------------------------------------------------------
# Spectral efficiency
# ---------------------------------------------------------------------------


def spectral_efficiency(snr, imdd_penalty: bool = False):
    """Achievable spectral efficiency at linear SNR.

    With ``imdd_penalty`` the intensity-modulation lower bound
    ``log2(1 + e snr / (2 pi))`` is used instead of the coherent capacity.
    """
    s = np.asarray(snr, dtype=float)
    if np.any(s < 0.0):
        raise StatsError("snr must be nonnegative")
    factor = math.e / (2.0 * math.pi) if imdd_penalty else 1.0
    out = np.log2(1.0 + factor * s)
    return float(out) if np.ndim(snr) == 0 else out

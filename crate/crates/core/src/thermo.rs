//! Pointwise moist thermodynamics: latent heat, the saturation curve with its
//! cutoffs, and the moisture-dependent gas "constant" and heat capacity.

use crate::error::{Error, Result};
use crate::params::PhysParams;
use crate::real::Real;

/// Moisture-dependent coefficients at one point, evaluated on the nonnegative parts
/// of the mixing ratios.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoistCoeffs<S> {
    /// Moist gas constant `R~`.
    pub r_tilde: S,
    /// Moist heat capacity `C~`.
    pub c_tilde: S,
    /// `R~ / C~`.
    pub kappa_tilde: S,
    /// `L(T) / C~`.
    pub l_tilde: S,
    /// `1 / C~`.
    pub inv_c: S,
}

/// `L(T) = L0 - (c_l - c_pv)(T - T0)`.
#[inline]
pub fn latent_heat<S: Real>(temp: S, params: &PhysParams<S>) -> S {
    params.l0 - (params.c_l - params.c_pv) * (temp - params.t0)
}

/// Root of the latent heat, `T0 + L0 / (c_l - c_pv)`.
pub fn critical_temperature<S: Real>(params: &PhysParams<S>) -> Result<S> {
    let dc = params.c_l - params.c_pv;
    if !(dc > S::zero()) {
        return Err(Error::param("c_l", "c_l must exceed c_pv for a finite critical temperature"));
    }
    Ok(params.t0 + params.l0 / dc)
}

#[inline]
fn t_crit_unchecked<S: Real>(params: &PhysParams<S>) -> S {
    params.t0 + params.l0 / (params.c_l - params.c_pv)
}

/// Integrated Clausius-Clapeyron curve without cutoffs, computed in log space so
/// that it underflows cleanly to zero for small `T`.
#[inline]
pub fn clausius_clapeyron<S: Real>(temp: S, params: &PhysParams<S>) -> S {
    if !(temp > S::zero()) {
        return S::zero();
    }
    let dc = params.c_l - params.c_pv;
    let a = dc / params.r_v;
    let b = (params.l0 + dc * params.t0) / params.r_v;
    let ln_ratio = a * (params.t0 / temp).ln() + b * (params.t0.recip() - temp.recip());
    params.es0 * ln_ratio.exp()
}

/// Saturation vapour pressure [Pa] with the lower and upper cutoffs.
///
/// Zero for `T <= T_low` and `T >= T_crit`; between the cutoffs the closed-form
/// curve is multiplied by linear ramps of width `t_ramp` at both ends, which keeps
/// the curve Lipschitz continuous.
pub fn saturation_vapor_pressure<S: Real>(temp: S, params: &PhysParams<S>) -> S {
    let t_crit = t_crit_unchecked(params);
    if !(temp > params.t_low && temp < t_crit) {
        return S::zero();
    }
    let mut e = clausius_clapeyron(temp, params);
    let lo = (temp - params.t_low) / params.t_ramp;
    if lo < S::one() {
        e = e * lo;
    }
    let hi = (t_crit - temp) / params.t_ramp;
    if hi < S::one() {
        e = e * hi;
    }
    e
}

/// `q_vs = E e_s / (p - e_s)`, clamped to `q_vs_max` near the pole `e_s -> p`.
pub fn saturation_mixing_ratio<S: Real>(p: S, temp: S, params: &PhysParams<S>) -> Result<S> {
    if !(p > S::zero()) {
        return Err(Error::NonPositivePressure(p.as_f64()));
    }
    Ok(qvs_unchecked(p, temp, params))
}

/// [`saturation_mixing_ratio`] for callers that have already validated `p > 0`.
#[inline]
pub(crate) fn qvs_unchecked<S: Real>(p: S, temp: S, params: &PhysParams<S>) -> S {
    let e = saturation_vapor_pressure(temp, params);
    if e <= S::zero() {
        return S::zero();
    }
    if e >= p {
        return params.q_vs_max;
    }
    (params.epsilon() * e / (p - e)).min(params.q_vs_max)
}

/// Moist coefficients from the nonnegative parts of the mixing ratios.
#[inline]
pub fn moist_coeffs<S: Real>(qv: S, qc: S, qr: S, temp: S, params: &PhysParams<S>) -> MoistCoeffs<S> {
    let (qv, qc, qr) = (qv.pos(), qc.pos(), qr.pos());
    let q_total = qv + qc + qr;
    let r_tilde = params.r_d * (S::one() + qv / params.epsilon()) / (S::one() + q_total);
    let c_tilde = params.c_pd + params.c_pv * qv + params.c_l * (qc + qr);
    let inv_c = c_tilde.recip();
    MoistCoeffs {
        r_tilde,
        c_tilde,
        kappa_tilde: r_tilde / c_tilde,
        l_tilde: latent_heat(temp, params) / c_tilde,
        inv_c,
    }
}

/// `theta = T (p_ref / p)^(R_d / c_pd)`.
pub fn potential_temperature<S: Real>(temp: S, p: S, params: &PhysParams<S>) -> Result<S> {
    if !(p > S::zero()) {
        return Err(Error::NonPositivePressure(p.as_f64()));
    }
    Ok(temp * (params.p_ref / p).powf(params.kappa_dry()))
}

/// Total density from the moist ideal gas law `p = rho R~ T`.
pub fn density<S: Real>(p: S, temp: S, qv: S, qc: S, qr: S, params: &PhysParams<S>) -> Result<S> {
    if !(temp > S::zero()) {
        return Err(Error::NonPositiveTemperature(temp.as_f64()));
    }
    let c = moist_coeffs(qv, qc, qr, temp, params);
    Ok(p / (c.r_tilde * temp))
}

/// Supremum of `q_vs` over the pressure range `[p_top, p_bottom]` and all temperatures.
///
/// `q_vs` decreases in `p`, so the supremum sits on `p_top`; the temperature axis is
/// scanned densely between the cutoffs.
pub fn saturation_mixing_ratio_sup<S: Real>(p_top: S, params: &PhysParams<S>) -> S {
    let t_crit = t_crit_unchecked(params);
    let n = 20_000usize;
    let mut best = S::zero();
    for m in 0..=n {
        let t = params.t_low + (t_crit - params.t_low) * S::from_usize_lossy(m) / S::from_usize_lossy(n);
        best = best.max(qvs_unchecked(p_top, t, params));
    }
    best
}

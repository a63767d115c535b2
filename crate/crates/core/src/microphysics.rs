//! Kessler-type warm-rain source terms on the nonnegative parts of the unknowns.

use crate::error::{Error, Result};
use crate::params::PhysParams;
use crate::real::Real;
use crate::thermo::{moist_coeffs, qvs_unchecked};

/// Phase-change rates at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceRates<S> {
    /// Evaporation of rain, `>= 0`.
    pub s_ev: S,
    /// Condensation (positive) or evaporation of cloud water (negative).
    pub s_cd: S,
    /// Autoconversion of cloud water to rain, `>= 0`.
    pub s_ac: S,
    /// Collection of cloud water by rain, `>= 0`.
    pub s_cr: S,
}

/// Source tendencies of the four prognostic equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseChange<S> {
    pub d_temp: S,
    pub d_qv: S,
    pub d_qc: S,
    pub d_qr: S,
}

/// Rates with evaporation exponent one:
///
/// ```text
/// S_ev = C_ev R~ T+ q_r+ (q_vs - q_v)+
/// S_cr = C_cr q_c+ q_r+
/// S_ac = C_ac (q_c - q_ac*)+
/// S_cd = C_cd (q_v+ - q_vs) q_c+ + C_cn (q_v - q_vs)+
/// ```
pub fn source_rates<S: Real>(p: S, temp: S, qv: S, qc: S, qr: S, params: &PhysParams<S>) -> Result<SourceRates<S>> {
    if !(p > S::zero()) {
        return Err(Error::NonPositivePressure(p.as_f64()));
    }
    let qvs = qvs_unchecked(p, temp, params);
    let r_tilde = moist_coeffs(qv, qc, qr, temp, params).r_tilde;
    Ok(rates_with_qvs(qvs, r_tilde, temp, qv, qc, qr, params))
}

#[inline]
fn rates_with_qvs<S: Real>(qvs: S, r_tilde: S, temp: S, qv: S, qc: S, qr: S, params: &PhysParams<S>) -> SourceRates<S> {
    let (qc_p, qr_p) = (qc.pos(), qr.pos());
    SourceRates {
        s_ev: params.c_ev * r_tilde * temp.pos() * qr_p * (qvs - qv).pos(),
        s_cr: params.c_cr * qc_p * qr_p,
        s_ac: params.c_ac * (qc - params.q_ac_star).pos(),
        s_cd: params.c_cd * (qv.pos() - qvs) * qc_p + params.c_cn * (qv - qvs).pos(),
    }
}

/// Right-hand sides contributed by phase changes, including latent heating
/// `L(T)/C~ (S_cd - S_ev)`.
pub fn phase_change_tendencies<S: Real>(
    p: S,
    temp: S,
    qv: S,
    qc: S,
    qr: S,
    params: &PhysParams<S>,
) -> Result<PhaseChange<S>> {
    if !(p > S::zero()) {
        return Err(Error::NonPositivePressure(p.as_f64()));
    }
    Ok(phase_change_unchecked(p, temp, qv, qc, qr, params))
}

#[inline]
pub(crate) fn phase_change_unchecked<S: Real>(
    p: S,
    temp: S,
    qv: S,
    qc: S,
    qr: S,
    params: &PhysParams<S>,
) -> PhaseChange<S> {
    let qvs = qvs_unchecked(p, temp, params);
    let c = moist_coeffs(qv, qc, qr, temp, params);
    let r = rates_with_qvs(qvs, c.r_tilde, temp, qv, qc, qr, params);
    PhaseChange {
        d_temp: c.l_tilde * (r.s_cd - r.s_ev),
        d_qv: r.s_ev - r.s_cd,
        d_qc: r.s_cd - r.s_ac - r.s_cr,
        d_qr: r.s_ac + r.s_cr - r.s_ev,
    }
}

/// Linearised sink rates `[T, q_v, q_c, q_r]` of the source terms at one point.
///
/// Every source contribution to a field `f` can be written as `a - r f` with `a >= 0`
/// (or as a relaxation `r (target - f)` towards a target inside the admissible range),
/// so an explicit step keeps `f` inside its bounds whenever `dt r` plus the transport
/// coefficients stays below one. Rates are zero where the field itself is zero.
pub fn sink_rates<S: Real>(p: S, temp: S, qv: S, qc: S, qr: S, omega: S, params: &PhysParams<S>) -> [S; 4] {
    let qvs = qvs_unchecked(p, temp, params);
    let c = moist_coeffs(qv, qc, qr, temp, params);
    let (qc_p, qr_p, t_p) = (qc.pos(), qr.pos(), temp.pos());
    let zero = S::zero();

    let ev_coef = params.c_ev * c.r_tilde * qr_p;
    let mut r_qv = params.c_cd * qc_p;
    if qv < qvs {
        r_qv += ev_coef * t_p;
    }
    if qv > qvs {
        r_qv += params.c_cn;
    }
    let r_qc = if qc > zero {
        params.c_ac + params.c_cr * qr_p + params.c_cd * qvs
    } else {
        zero
    };
    let r_qr = if qr > zero {
        params.c_ev * c.r_tilde * t_p * qvs
    } else {
        zero
    };
    // -L~ S_ev is proportional to T; the adiabatic term is a sink when omega < 0.
    let mut r_t = c.kappa_tilde * (-omega).pos() / p;
    if temp > zero {
        r_t += c.l_tilde.pos() * ev_coef * (qvs - qv).pos();
    }
    [r_t, r_qv, r_qc, r_qr]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermo::{critical_temperature, saturation_mixing_ratio};

    fn p() -> PhysParams<f64> {
        PhysParams::default()
    }

    #[test]
    fn no_rain_means_no_evaporation_or_collection() {
        let r = source_rates(6.0e4, 280.0, 0.001, 0.002, 0.0, &p()).unwrap();
        assert_eq!(r.s_ev, 0.0);
        assert_eq!(r.s_cr, 0.0);
    }

    #[test]
    fn autoconversion_threshold() {
        let pr = p();
        for qc in [0.0, 0.5e-3, 1.0e-3] {
            let r = source_rates(6.0e4, 280.0, 0.001, qc, 0.001, &pr).unwrap();
            assert_eq!(r.s_ac, 0.0);
        }
        let r = source_rates(6.0e4, 280.0, 0.001, 3.0e-3, 0.001, &pr).unwrap();
        assert!((r.s_ac - 2.0e-3).abs() < 1e-15);
    }

    #[test]
    fn no_evaporation_above_critical_temperature() {
        let pr = p();
        let tc = critical_temperature(&pr).unwrap();
        for t in [tc, tc + 1.0, 2.0 * tc] {
            let r = source_rates(6.0e4, t, 0.01, 0.001, 0.002, &pr).unwrap();
            assert_eq!(r.s_ev, 0.0);
        }
    }

    #[test]
    fn subsaturated_cloud_evaporates() {
        let pr = p();
        let qvs = saturation_mixing_ratio(6.0e4, 280.0, &pr).unwrap();
        let r = source_rates(6.0e4, 280.0, 0.5 * qvs, 1e-3, 0.0, &pr).unwrap();
        assert!(r.s_cd < 0.0);
    }

    #[test]
    fn tendencies_conserve_water() {
        let pr = p();
        let t = phase_change_tendencies(5.0e4, 285.0, 0.02, 0.003, 0.002, &pr).unwrap();
        let sum = t.d_qv + t.d_qc + t.d_qr;
        let scale = t.d_qv.abs() + t.d_qc.abs() + t.d_qr.abs();
        assert!(sum.abs() <= 4.0 * f64::EPSILON * scale);
    }

    #[test]
    fn dry_air_has_no_tendencies() {
        let t = phase_change_tendencies(5.0e4, 285.0, 0.0, 0.0, 0.0, &p()).unwrap();
        assert_eq!((t.d_temp, t.d_qv, t.d_qc, t.d_qr), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn condensation_warms() {
        let pr = p();
        let qvs = saturation_mixing_ratio(7.0e4, 290.0, &pr).unwrap();
        let t = phase_change_tendencies(7.0e4, 290.0, 1.3 * qvs, 1e-3, 0.0, &pr).unwrap();
        assert!(t.d_temp > 0.0);
        assert!(t.d_qv < 0.0);
    }

    #[test]
    fn rejects_nonpositive_pressure() {
        assert!(source_rates(0.0, 280.0, 0.0, 0.0, 0.0, &p()).is_err());
        assert!(phase_change_tendencies(-1.0, 280.0, 0.0, 0.0, 0.0, &p()).is_err());
    }

    #[test]
    fn truncated_rates_equal_plain_rates_for_nonnegative_input() {
        // Untruncated closures evaluated directly on nonnegative input.
        let pr = p();
        for &(t, qv, qc, qr) in &[(280.0, 0.004, 0.002, 0.001), (300.0, 0.05, 0.0, 0.003), (250.0, 0.0, 0.01, 0.0)] {
            let pres = 6.5e4;
            let qvs = saturation_mixing_ratio(pres, t, &pr).unwrap();
            let r_t = pr.r_d * (1.0 + qv / pr.epsilon()) / (1.0 + qv + qc + qr);
            let s_ev = pr.c_ev * r_t * t * qr * f64::max(qvs - qv, 0.0);
            let s_cr = pr.c_cr * qc * qr;
            let s_ac = pr.c_ac * f64::max(qc - pr.q_ac_star, 0.0);
            let s_cd = pr.c_cd * (qv - qvs) * qc + pr.c_cn * f64::max(qv - qvs, 0.0);
            let r = source_rates(pres, t, qv, qc, qr, &pr).unwrap();
            assert_eq!(r, SourceRates { s_ev, s_cd, s_ac, s_cr });
        }
    }
}

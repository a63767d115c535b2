//! Physical constants, rate constants and diffusivities.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::state::Field;

/// Horizontal (`mu`) and weighted vertical (`nu`) diffusivity of one prognostic field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diffusivity<S> {
    pub mu: S,
    pub nu: S,
}

/// Every constant the model needs. Defaults are SI values for the thermodynamic
/// constants and unit rate constants for the microphysics.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysParams<S> {
    /// Gas constant of dry air [J kg⁻¹ K⁻¹].
    pub r_d: S,
    /// Gas constant of water vapour [J kg⁻¹ K⁻¹].
    pub r_v: S,
    pub c_pd: S,
    pub c_pv: S,
    pub c_l: S,
    /// Latent heat at the reference temperature [J kg⁻¹].
    pub l0: S,
    /// Reference temperature [K].
    pub t0: S,
    /// Saturation vapour pressure at `t0` [Pa].
    pub es0: S,
    pub g: S,
    /// Terminal fall velocity of rain.
    pub v_rain: S,
    pub c_ev: S,
    pub c_cd: S,
    pub c_cn: S,
    pub c_ac: S,
    pub c_cr: S,
    /// Autoconversion threshold for cloud water.
    pub q_ac_star: S,
    /// Lower temperature cutoff of the saturation curve [K].
    pub t_low: S,
    /// Width of the linear blends to zero at both cutoffs [K].
    pub t_ramp: S,
    /// Clamp for the saturation mixing ratio near the pole `e_s -> p`.
    pub q_vs_max: S,
    /// Reference pressure of the potential temperature [Pa].
    pub p_ref: S,
    /// Exponent of `q_r` in the evaporation rate. Only 1 is supported.
    pub beta: S,
    /// Indexed by [`Field::index`].
    pub diffusion: [Diffusivity<S>; 4],
    /// Optional user bound for the moist `R/C` ratio; must dominate the certified bound.
    pub kappa1_override: Option<S>,
}

impl<S: Real> Default for PhysParams<S> {
    fn default() -> Self {
        let d = Diffusivity {
            mu: S::lit(1.0e-2),
            nu: S::lit(1.0e5),
        };
        PhysParams {
            r_d: S::lit(287.0),
            r_v: S::lit(461.5),
            c_pd: S::lit(1005.0),
            c_pv: S::lit(1850.0),
            c_l: S::lit(4186.0),
            l0: S::lit(2.5e6),
            t0: S::lit(273.15),
            es0: S::lit(611.0),
            g: S::lit(9.81),
            v_rain: S::lit(1.0e4),
            c_ev: S::lit(1.0e-4),
            c_cd: S::one(),
            c_cn: S::one(),
            c_ac: S::one(),
            c_cr: S::one(),
            q_ac_star: S::lit(1.0e-3),
            t_low: S::lit(150.0),
            t_ramp: S::lit(5.0),
            q_vs_max: S::one(),
            p_ref: S::lit(1.0e5),
            beta: S::one(),
            diffusion: [d; 4],
            kappa1_override: None,
        }
    }
}

impl<S: Real> PhysParams<S> {
    /// `E = R_d / R_v`.
    pub fn epsilon(&self) -> S {
        self.r_d / self.r_v
    }

    /// Dry-air Poisson exponent `R_d / c_pd`.
    pub fn kappa_dry(&self) -> S {
        self.r_d / self.c_pd
    }

    pub fn diffusivity(&self, field: Field) -> Diffusivity<S> {
        self.diffusion[field.index()]
    }

    /// Certified upper bound of `R~/C~` over all nonnegative mixing ratios.
    ///
    /// `R~/C~ = (R_d + R_v q_v) / ((1 + q_T)(c_pd + c_pv q_v + c_l (q_c + q_r)))`
    /// is at most the mediant `(R_d + R_v q_v)/(c_pd + c_pv q_v)`, which never exceeds
    /// `max(R_d/c_pd, R_v/c_pv)`. A few ulps of slack absorb rounding in the evaluation.
    pub fn certified_kappa1(&self) -> S {
        let bound = (self.r_d / self.c_pd).max(self.r_v / self.c_pv);
        bound * (S::one() + S::lit(16.0) * S::epsilon())
    }

    /// The bound `kappa1` used by the runtime checks.
    pub fn kappa1(&self) -> S {
        self.kappa1_override
            .unwrap_or_else(|| self.certified_kappa1())
    }

    pub fn validate(&self) -> Result<()> {
        let zero = S::zero();
        let pos = |name: &'static str, v: S| -> Result<()> {
            if v.is_finite() && v > zero {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be positive and finite, got {v}")))
            }
        };
        let nonneg = |name: &'static str, v: S| -> Result<()> {
            if v.is_finite() && v >= zero {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be nonnegative and finite, got {v}")))
            }
        };
        pos("r_d", self.r_d)?;
        pos("r_v", self.r_v)?;
        if self.r_v <= self.r_d {
            return Err(Error::param("r_v", "must exceed r_d so that E = R_d/R_v lies in (0,1)"));
        }
        pos("c_pd", self.c_pd)?;
        pos("c_pv", self.c_pv)?;
        pos("c_l", self.c_l)?;
        if self.c_l <= self.c_pv {
            return Err(Error::param("c_l", "must exceed c_pv so that the latent heat decreases with T"));
        }
        pos("l0", self.l0)?;
        pos("t0", self.t0)?;
        pos("es0", self.es0)?;
        pos("g", self.g)?;
        nonneg("v_rain", self.v_rain)?;
        nonneg("c_ev", self.c_ev)?;
        nonneg("c_cd", self.c_cd)?;
        nonneg("c_cn", self.c_cn)?;
        nonneg("c_ac", self.c_ac)?;
        nonneg("c_cr", self.c_cr)?;
        nonneg("q_ac_star", self.q_ac_star)?;
        nonneg("t_low", self.t_low)?;
        pos("t_ramp", self.t_ramp)?;
        pos("q_vs_max", self.q_vs_max)?;
        pos("p_ref", self.p_ref)?;
        if self.t0 <= self.t_low + self.t_ramp {
            return Err(Error::param("t_low", "t_low + t_ramp must lie below the reference temperature t0"));
        }
        let t_crit = self.t0 + self.l0 / (self.c_l - self.c_pv);
        if self.t0 >= t_crit - self.t_ramp {
            return Err(Error::param("t_ramp", "the upper blend must not reach the reference temperature"));
        }
        if self.beta != S::one() {
            return Err(Error::param(
                "beta",
                format!(
                    "only beta = 1 is supported (got {}); well-posedness of the evaporation closure \
                     with beta in (0,1) is left open, so the general exponent is not implemented",
                    self.beta
                ),
            ));
        }
        for (f, d) in Field::ALL.iter().zip(self.diffusion.iter()) {
            if !(d.mu.is_finite() && d.mu > zero && d.nu.is_finite() && d.nu > zero) {
                return Err(Error::param(
                    "diffusion",
                    format!("diffusivities of {} must be positive, got mu={} nu={}", f.name(), d.mu, d.nu),
                ));
            }
        }
        if let Some(k1) = self.kappa1_override {
            if !(k1 >= self.certified_kappa1()) {
                return Err(Error::param(
                    "kappa1",
                    format!(
                        "override {k1} is below the certified bound {}",
                        self.certified_kappa1()
                    ),
                ));
            }
        }
        Ok(())
    }
}

//! Polynomial parameter schedules of the single-loop solver:
//!
//! ```text
//! α_k = α₀·k^{−s}    β_k = β₀·k^{−(2p+q)}    ρ_k = min(ρ₀·k^{p}, ρ_cap)    σ_k = σ₀·k^{−q}
//! ```

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::smooth::PenaltyReg;

pub const DEFAULT_RHO_CAP: f64 = 1e12;
/// Default exponents of the parameter-selection guideline.
pub const GUIDELINE_P: f64 = 0.01;
pub const GUIDELINE_Q: f64 = 0.01;
pub const GUIDELINE_RHO0: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleParams<T> {
    pub alpha0: T,
    pub beta0: T,
    pub rho0: T,
    pub sigma0: T,
    pub p: T,
    pub q: T,
    pub s: T,
    pub rho_cap: T,
}

/// Per-iteration values of the schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams<T> {
    pub alpha: T,
    pub beta: T,
    pub rho: T,
    pub sigma: T,
}

impl<T: Scalar> StepParams<T> {
    pub fn penalty(&self) -> Result<PenaltyReg<T>> {
        PenaltyReg::new(self.rho, self.sigma)
    }
}

impl<T: Scalar> ScheduleParams<T> {
    /// Validates the hard constraints and logs a warning outside the
    /// regime `s ≥ 8p + 8q` covered by the convergence theory.
    pub fn new(alpha0: T, beta0: T, rho0: T, sigma0: T, p: T, q: T, s: T) -> Result<Self> {
        let sp = Self {
            alpha0,
            beta0,
            rho0,
            sigma0,
            p,
            q,
            s,
            rho_cap: T::lit(DEFAULT_RHO_CAP),
        };
        sp.validate()?;
        Ok(sp)
    }

    /// Guideline mode: forces `s = 8p + 8q`.
    pub fn guideline(alpha0: T, beta0: T, rho0: T, sigma0: T, p: T, q: T) -> Result<Self> {
        let s = T::lit(8.0) * (p + q);
        Self::new(alpha0, beta0, rho0, sigma0, p, q, s)
    }

    /// Guideline defaults `p = q = 0.01`, `ρ₀ = 10`.
    pub fn guideline_defaults(alpha0: T, beta0: T, sigma0: T) -> Result<Self> {
        Self::guideline(
            alpha0,
            beta0,
            T::lit(GUIDELINE_RHO0),
            sigma0,
            T::lit(GUIDELINE_P),
            T::lit(GUIDELINE_Q),
        )
    }

    pub fn with_rho_cap(mut self, cap: T) -> Result<Self> {
        self.rho_cap = cap;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha0", self.alpha0),
            ("beta0", self.beta0),
            ("rho0", self.rho0),
            ("sigma0", self.sigma0),
            ("rho_cap", self.rho_cap),
        ] {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::Contract(format!("{name} must be positive and finite, got {v}")));
            }
        }
        for (name, v) in [("p", self.p), ("q", self.q)] {
            if !(v > T::zero() && v < T::one()) {
                return Err(Error::Contract(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if !(self.s > T::zero() && self.s < T::half()) {
            return Err(Error::Contract(format!("s must lie in (0, 1/2), got {}", self.s)));
        }
        if let Some(w) = self.regime_warning() {
            log::warn!("{w}");
        }
        Ok(())
    }

    /// Describes how the exponents leave the regime `s ≥ 8p + 8q`, if they do.
    pub fn regime_warning(&self) -> Option<String> {
        let bound = T::lit(8.0) * (self.p + self.q);
        (self.s < bound).then(|| {
            format!(
                "s = {} is below 8p + 8q = {}; convergence guarantees do not apply",
                self.s, bound
            )
        })
    }

    pub fn params_at(&self, k: usize) -> Result<StepParams<T>> {
        if k == 0 {
            return Err(Error::Contract("schedules are defined for k >= 1".into()));
        }
        let kf = T::from_usize(k).unwrap();
        Ok(StepParams {
            alpha: self.alpha0 * kf.powf(-self.s),
            beta: self.beta0 * kf.powf(-(T::two() * self.p + self.q)),
            rho: (self.rho0 * kf.powf(self.p)).min(self.rho_cap),
            sigma: self.sigma0 * kf.powf(-self.q),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ScheduleParams<f64> {
        ScheduleParams::new(0.1, 0.001, 10.0, 0.01, 0.001, 0.001, 0.1).unwrap()
    }

    #[test]
    fn first_iteration_returns_base_values() {
        let sp = base();
        let p = sp.params_at(1).unwrap();
        assert_eq!((p.alpha, p.beta, p.rho, p.sigma), (0.1, 0.001, 10.0, 0.01));
    }

    #[test]
    fn alpha_power_law() {
        let sp = ScheduleParams::new(1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 0.49).unwrap();
        let sp = ScheduleParams { s: 0.5, ..sp };
        assert!((sp.params_at(16).unwrap().alpha - 0.25f64).abs() < 1e-15);
    }

    #[test]
    fn zero_iteration_is_rejected() {
        assert!(base().params_at(0).is_err());
    }

    #[test]
    fn guideline_forces_s() {
        let sp = ScheduleParams::guideline_defaults(1e-4, 1e-4, 1e-4).unwrap();
        assert_eq!((sp.p, sp.q, sp.rho0), (0.01, 0.01, 10.0));
        assert!((sp.s - 0.16f64).abs() < 1e-15);
        assert!(sp.regime_warning().is_none());
    }

    #[test]
    fn reference_exponents_sit_inside_regime() {
        assert!(base().regime_warning().is_none());
        let stressed = ScheduleParams::new(0.1, 0.001, 10.0, 0.01, 0.001, 0.001, 0.01).unwrap();
        assert!(stressed.regime_warning().is_some());
    }

    #[test]
    fn rho_is_capped() {
        let sp = base().with_rho_cap(10.1).unwrap();
        assert_eq!(sp.params_at(1_000_000_000).unwrap().rho, 10.1);
    }

    #[test]
    fn invalid_exponents_are_rejected() {
        assert!(ScheduleParams::new(0.1, 0.1, 1.0, 1.0, 0.0, 0.1, 0.2).is_err());
        assert!(ScheduleParams::new(0.1, 0.1, 1.0, 1.0, 0.1, 0.1, 0.5).is_err());
        assert!(ScheduleParams::new(-0.1, 0.1, 1.0, 1.0, 0.1, 0.1, 0.2).is_err());
    }
}

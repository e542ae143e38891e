use serde::{Deserialize, Serialize};

use super::ControllerError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "schedule", rename_all = "snake_case")]
pub enum Schedule {
    /// `γ_k = γ`
    Constant { gamma: f64 },
    /// `γ_k = C/√k`
    InvSqrt { c: f64 },
    /// `γ_k = 1/(μk)`
    InvMuK { mu: f64 },
    /// `γ_k = c·k^{−1/(τ+1)}`
    UniformOpt { c: f64, tau: f64 },
}

impl Schedule {
    pub fn validate(&self) -> Result<(), ControllerError> {
        let ok = match *self {
            Schedule::Constant { gamma } => gamma > 0.0 && gamma.is_finite(),
            Schedule::InvSqrt { c } => c > 0.0 && c.is_finite(),
            Schedule::InvMuK { mu } => mu > 0.0 && mu.is_finite(),
            Schedule::UniformOpt { c, tau } => c > 0.0 && c.is_finite() && tau > -1.0 && tau.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(ControllerError::InvalidParams(format!("bad schedule {self:?}")))
        }
    }
}

pub fn fixed_schedule(schedule: &Schedule, k: u64) -> Result<f64, ControllerError> {
    if k == 0 {
        return Err(ControllerError::ZeroIteration);
    }
    let k = k as f64;
    Ok(match *schedule {
        Schedule::Constant { gamma } => gamma,
        Schedule::InvSqrt { c } => c / k.sqrt(),
        Schedule::InvMuK { mu } => 1.0 / (mu * k),
        Schedule::UniformOpt { c, tau } => c * k.powf(-1.0 / (tau + 1.0)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(fixed_schedule(&Schedule::InvSqrt { c: 1.0 }, 4), Ok(0.5));
        assert_eq!(fixed_schedule(&Schedule::InvMuK { mu: 0.1 }, 10), Ok(1.0));
        let tau = 1.0 - 2.0 / 2.5;
        let g = fixed_schedule(&Schedule::UniformOpt { c: 1.0, tau }, 7).unwrap();
        assert!((g - 7f64.powf(-1.0 / 1.2)).abs() < 1e-15);
        assert_eq!(fixed_schedule(&Schedule::Constant { gamma: 0.3 }, 1), Ok(0.3));
    }

    #[test]
    fn zero_iteration_is_an_error() {
        assert_eq!(
            fixed_schedule(&Schedule::InvSqrt { c: 1.0 }, 0),
            Err(ControllerError::ZeroIteration)
        );
    }
}

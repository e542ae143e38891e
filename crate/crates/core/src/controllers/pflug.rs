use crate::numkit::{dot_slices, Vec64};

use super::{ControllerParams, ControllerState, Decision};

pub const PFLUG_BURN_IN_CAP: u64 = 10_000;

/// `⌈2/(γμ)⌉` capped at [`PFLUG_BURN_IN_CAP`].
pub fn pflug_burn_in(gamma: f64, mu: f64) -> u64 {
    let b = (2.0 / (gamma * mu)).ceil();
    if b.is_finite() && b >= 0.0 {
        (b as u64).min(PFLUG_BURN_IN_CAP)
    } else {
        PFLUG_BURN_IN_CAP
    }
}

/// Running mean of successive-gradient inner products; a negative mean
/// past burn-in signals stationarity. Decays do not touch the auxiliary
/// iterate.
pub fn pflug_observe(
    state: &mut ControllerState,
    params: &ControllerParams,
    g_prev: &Vec64,
    g_curr: &Vec64,
    k: u64,
) -> Decision {
    state.pflug.sum += dot_slices(g_prev.as_slice(), g_curr.as_slice());
    state.pflug.count += 1;
    let mean = state.pflug.sum / state.pflug.count as f64;
    if k % params.check_every as u64 != 0 || !state.past_burn_in(params, k) {
        return Decision::cont(mean);
    }
    if state.trigger(params, mean < 0.0) {
        state.decay(params, k, mean, false)
    } else {
        Decision::cont(mean)
    }
}

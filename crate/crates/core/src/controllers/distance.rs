use crate::numkit::Vec64;

use super::{ControllerParams, ControllerState, Decision};

/// Smallest `⌈qʲ⌉` strictly greater than `k`.
pub fn checkpoint_after(k: u64, q: f64) -> u64 {
    let mut j = if k == 0 { 0.0 } else { ((k as f64).ln() / q.ln()).floor() };
    loop {
        let c = q.powf(j).ceil() as u64;
        if c > k {
            return c;
        }
        j += 1.0;
    }
}

/// Log-log slope of `Ω = ‖θ − θ₀‖²` between geometric checkpoints; a slope
/// under the threshold means the iterate stopped diffusing away from the
/// phase anchor. Decays re-anchor at the current iterate.
pub fn distance_observe(state: &mut ControllerState, params: &ControllerParams, theta: &Vec64, k: u64) -> Decision {
    let anchor = state.distance.anchor.get_or_insert_with(|| theta.clone());
    let omega = theta.dist_sq(anchor).unwrap_or(f64::NAN);
    let k_rel = k.saturating_sub(state.phase_start);
    if k_rel < state.distance.next_checkpoint {
        return Decision::cont(f64::NAN);
    }
    state.distance.next_checkpoint = checkpoint_after(k_rel, params.checkpoint_ratio);
    if !(omega > 0.0) || !omega.is_finite() {
        return Decision::cont(f64::NAN);
    }
    state.distance.log.push((k_rel, omega));
    let prev = state.distance.last.replace((k_rel, omega));
    let Some((kp, op)) = prev else {
        return Decision::cont(f64::NAN);
    };
    let slope = (omega.ln() - op.ln()) / ((k_rel as f64).ln() - (kp as f64).ln());
    if !state.past_burn_in(params, k) {
        return Decision::cont(slope);
    }
    if state.trigger(params, slope < params.slope_threshold) {
        let d = state.decay(params, k, slope, false);
        state.distance.anchor = Some(theta.clone());
        state.distance.last = None;
        state.distance.next_checkpoint = 1;
        state.distance.log.clear();
        d
    } else {
        Decision::cont(slope)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::ControllerKind;

    fn setup() -> (ControllerParams, ControllerState) {
        let mut p = ControllerParams::new(ControllerKind::DistanceBased, 0.1);
        p.burn_in = Some(0);
        let mut s = ControllerState::new(&p);
        s.distance.anchor = Some(Vec64::zeros(1));
        (p, s)
    }

    #[test]
    fn checkpoints_are_ceiled_powers() {
        let mut k = 0;
        let mut seen = vec![];
        for _ in 0..10 {
            k = checkpoint_after(k, 1.5);
            seen.push(k);
        }
        assert_eq!(seen, vec![1, 2, 3, 4, 6, 8, 12, 18, 26, 39]);
    }

    #[test]
    fn linear_growth_continues() {
        let (p, mut s) = setup();
        for k in 1..5_000u64 {
            let theta = Vec64::from_vec(vec![(k as f64).sqrt()]);
            assert!(!distance_observe(&mut s, &p, &theta, k).is_decay());
        }
    }

    #[test]
    fn frozen_distance_decays_and_reanchors() {
        let (p, mut s) = setup();
        let theta = Vec64::from_vec(vec![3.0]);
        let mut fired = None;
        for k in 1..10u64 {
            let d = distance_observe(&mut s, &p, &theta, k);
            if d.is_decay() {
                fired = Some((k, d.statistic));
                break;
            }
        }
        let (k, slope) = fired.unwrap();
        assert_eq!(k, 2);
        assert_eq!(slope, 0.0);
        assert_eq!(s.distance.anchor.as_ref().unwrap().as_slice(), &[3.0]);
    }

    #[test]
    fn default_burn_in_holds_off() {
        let mut p = ControllerParams::new(ControllerKind::DistanceBased, 0.1);
        p.mu_estimate = 0.5;
        let mut s = ControllerState::new(&p);
        s.distance.anchor = Some(Vec64::zeros(1));
        let theta = Vec64::from_vec(vec![3.0]);
        let first = (1..200u64).find(|&k| distance_observe(&mut s, &p, &theta, k).is_decay());
        // ⌈2/(0.1·0.5)⌉ = 40; the next checkpoint after that is 58.
        assert_eq!(first, Some(58));
    }

    #[test]
    fn zero_distance_checkpoint_is_skipped() {
        let (p, mut s) = setup();
        let z = Vec64::zeros(1);
        for k in 1..20u64 {
            assert!(!distance_observe(&mut s, &p, &z, k).is_decay());
        }
        assert!(s.distance.log.is_empty());
    }
}

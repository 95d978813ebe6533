//! User scheduling: admit only users that can reach the secrecy threshold,
//! find each admitted user's minimum bandwidth by bisection, then shed the
//! most demanding users until the minimums fit in the budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{secrecy_rate_fast, ChannelSample, SystemParams, UserChannel};

/// Bisection stops once the bracket is narrower than this fraction of the budget.
pub const BISECTION_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    /// Cannot reach the threshold even with the whole budget.
    InfeasibleAlone,
    /// Removed because the minimum bandwidths did not fit in the budget.
    BudgetExceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Original indices of the scheduled users, ascending.
    pub scheduled_idx: Vec<usize>,
    pub w_min_hz: Vec<f64>,
    pub w_min_norm: Vec<f64>,
    pub surplus_norm: f64,
    pub dropped: Vec<(usize, DropReason)>,
    pub total_bandwidth_hz: f64,
}

impl Schedule {
    /// Builds a schedule from per-user minimums, deriving the normalized fields.
    pub fn from_minimums(
        scheduled_idx: Vec<usize>,
        w_min_hz: Vec<f64>,
        dropped: Vec<(usize, DropReason)>,
        total_bandwidth_hz: f64,
    ) -> Result<Self> {
        if scheduled_idx.len() != w_min_hz.len() {
            return Err(Error::LengthMismatch {
                expected: scheduled_idx.len(),
                got: w_min_hz.len(),
            });
        }
        let total: f64 = w_min_hz.iter().sum();
        if total > total_bandwidth_hz * (1.0 + 1e-12) {
            return Err(Error::InvalidParam(format!(
                "minimum bandwidths sum to {total} Hz, over the {total_bandwidth_hz} Hz budget"
            )));
        }
        let w_min_norm: Vec<f64> = w_min_hz.iter().map(|w| w / total_bandwidth_hz).collect();
        let surplus_norm = (1.0 - w_min_norm.iter().sum::<f64>()).clamp(0.0, 1.0);
        Ok(Schedule {
            scheduled_idx,
            w_min_hz,
            w_min_norm,
            surplus_norm,
            dropped,
            total_bandwidth_hz,
        })
    }

    pub fn k(&self) -> usize {
        self.scheduled_idx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scheduled_idx.is_empty()
    }

    pub fn surplus_hz(&self) -> f64 {
        (self.total_bandwidth_hz - self.w_min_hz.iter().sum::<f64>()).max(0.0)
    }

    /// Channels of the scheduled users, in schedule order.
    pub fn channels(&self, sample: &ChannelSample) -> Result<Vec<UserChannel>> {
        self.scheduled_idx
            .iter()
            .map(|&i| {
                sample.users.get(i).copied().ok_or(Error::LengthMismatch {
                    expected: i + 1,
                    got: sample.len(),
                })
            })
            .collect()
    }
}

/// Smallest bandwidth meeting the secrecy threshold, to within
/// [`BISECTION_REL_TOL`] of the budget. The returned value is always the
/// feasible end of the final bracket.
pub fn min_bandwidth_bisect(ch: &UserChannel, params: &SystemParams) -> Result<f64> {
    ch.validate()?;
    let w_max = params.total_bandwidth_hz;
    let target = params.min_secrecy_rate_bps;
    let at_max = secrecy_rate_fast(w_max, ch, params);
    if at_max < target {
        return Err(Error::InfeasibleUser {
            rate_at_max_bps: at_max,
            required_bps: target,
        });
    }
    let tol = BISECTION_REL_TOL * w_max;
    let (mut lo, mut hi) = (0.0, w_max);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if secrecy_rate_fast(mid, ch, params) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

pub fn schedule_users(sample: &ChannelSample, params: &SystemParams) -> Result<Schedule> {
    if sample.is_empty() {
        return Err(Error::InvalidParam("cannot schedule an empty sample".into()));
    }
    let w_max = params.total_bandwidth_hz;
    let mut dropped = Vec::new();
    let mut kept: Vec<(usize, f64)> = Vec::with_capacity(sample.len());

    for (u, ch) in sample.users.iter().enumerate() {
        ch.validate()?;
        // Zero secrecy at full bandwidth, or positive but under the threshold:
        // either way no minimum bandwidth exists.
        if secrecy_rate_fast(w_max, ch, params) < params.min_secrecy_rate_bps {
            dropped.push((u, DropReason::InfeasibleAlone));
            continue;
        }
        kept.push((u, min_bandwidth_bisect(ch, params)?));
    }

    while kept.iter().map(|&(_, w)| w).sum::<f64>() > w_max {
        let mut worst = 0;
        for (pos, &(_, w)) in kept.iter().enumerate().skip(1) {
            if w > kept[worst].1 {
                worst = pos;
            }
        }
        let (u, _) = kept.remove(worst);
        dropped.push((u, DropReason::BudgetExceeded));
    }

    let (idx, w_min): (Vec<usize>, Vec<f64>) = kept.into_iter().unzip();
    Schedule::from_minimums(idx, w_min, dropped, w_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_channels, secrecy_rate};

    fn params() -> SystemParams {
        SystemParams::reference()
    }

    /// Legitimate gain that makes `secrecy_rate(w) == target` for fixed geometry.
    fn gain_for_requirement(w: f64, target: f64, d_b: f64, d_e: f64, g_e: f64, p: &SystemParams) -> f64 {
        let (mut lo, mut hi) = (0.0, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let ch = UserChannel::new(d_b, d_e, mid, g_e).unwrap();
            if secrecy_rate(w, &ch, p).unwrap() >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    #[test]
    fn bisection_hits_budget_boundary() {
        let base = params();
        let ch = UserChannel::new(60.0, 90.0, 1.0, 1.0).unwrap();
        let at_max = secrecy_rate(base.total_bandwidth_hz, &ch, &base).unwrap();
        let p = SystemParams {
            min_secrecy_rate_bps: at_max,
            ..base
        };
        let w = min_bandwidth_bisect(&ch, &p).unwrap();
        assert!((w - p.total_bandwidth_hz).abs() <= BISECTION_REL_TOL * p.total_bandwidth_hz);
    }

    #[test]
    fn bisection_three_bit_channel() {
        let p = params();
        let ch = UserChannel::new(50.0, 100.0, 1.0, 1.0).unwrap();
        let w = min_bandwidth_bisect(&ch, &p).unwrap();
        // dense grid oracle over (0, W_max]
        let step = 1.0;
        let mut grid = step;
        while secrecy_rate(grid, &ch, &p).unwrap() < p.min_secrecy_rate_bps {
            grid += step;
        }
        assert!((w - grid).abs() <= BISECTION_REL_TOL * p.total_bandwidth_hz + step);
        assert!((w - 0.8e6 / 3.0).abs() < 0.001e6, "{w}");
    }

    #[test]
    fn bisection_brackets_threshold() {
        let p = params();
        let tol = BISECTION_REL_TOL * p.total_bandwidth_hz;
        for seed in 0..200 {
            let sample = sample_channels(seed, 10, &p).unwrap();
            for ch in &sample.users {
                let Ok(w) = min_bandwidth_bisect(ch, &p) else { continue };
                assert!(secrecy_rate(w, ch, &p).unwrap() >= p.min_secrecy_rate_bps);
                let below = w - 2.0 * tol;
                if below > 0.0 {
                    assert!(secrecy_rate(below, ch, &p).unwrap() < p.min_secrecy_rate_bps);
                }
            }
        }
    }

    #[test]
    fn bisection_rejects_infeasible_user() {
        let ch = UserChannel::new(100.0, 50.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            min_bandwidth_bisect(&ch, &params()),
            Err(Error::InfeasibleUser { .. })
        ));
    }

    #[test]
    fn wiretap_dominated_user_is_dropped() {
        let good = UserChannel::new(50.0, 150.0, 1.0, 1.0).unwrap();
        let bad = UserChannel::new(120.0, 40.0, 1.0, 1.0).unwrap();
        let sample = ChannelSample::new(vec![good, bad]).unwrap();
        let s = schedule_users(&sample, &params()).unwrap();
        assert_eq!(s.scheduled_idx, vec![0]);
        assert_eq!(s.dropped, vec![(1, DropReason::InfeasibleAlone)]);
    }

    #[test]
    fn weak_but_positive_user_is_dropped() {
        // secrecy at full budget positive but below 0.8 Mbps
        let p = params();
        let ch = UserChannel::new(100.0, 100.0, 1.02, 1.0).unwrap();
        let r = secrecy_rate(p.total_bandwidth_hz, &ch, &p).unwrap();
        assert!(r > 0.0 && r < p.min_secrecy_rate_bps);
        let s = schedule_users(&ChannelSample::new(vec![ch]).unwrap(), &p).unwrap();
        assert!(s.is_empty());
        assert_eq!(s.dropped, vec![(0, DropReason::InfeasibleAlone)]);
        assert_eq!(s.surplus_norm, 1.0);
    }

    #[test]
    fn budget_step_drops_exactly_one_of_three() {
        let p = params();
        let g = gain_for_requirement(4e6, p.min_secrecy_rate_bps, 100.0, 110.0, 1.0, &p);
        let ch = UserChannel::new(100.0, 110.0, g, 1.0).unwrap();
        let w = min_bandwidth_bisect(&ch, &p).unwrap();
        assert!((w - 4e6).abs() < 100.0, "{w}");
        let sample = ChannelSample::new(vec![ch; 3]).unwrap();
        let s = schedule_users(&sample, &p).unwrap();
        assert_eq!(s.k(), 2);
        // lowest index goes first on ties
        assert_eq!(s.dropped, vec![(0, DropReason::BudgetExceeded)]);
        assert_eq!(s.scheduled_idx, vec![1, 2]);
        assert!(s.w_min_hz.iter().sum::<f64>() <= p.total_bandwidth_hz);
    }

    #[test]
    fn identical_feasible_users_all_kept() {
        let ch = UserChannel::new(40.0, 140.0, 1.0, 1.0).unwrap();
        let s = schedule_users(&ChannelSample::new(vec![ch; 5]).unwrap(), &params()).unwrap();
        assert_eq!(s.k(), 5);
        assert!(s.dropped.is_empty());
    }

    #[test]
    fn schedule_invariants_on_random_samples() {
        let p = params();
        for seed in 0..500 {
            let sample = sample_channels(seed, 10, &p).unwrap();
            let s = schedule_users(&sample, &p).unwrap();
            assert_eq!(s, schedule_users(&sample, &p).unwrap());
            assert_eq!(s.k() + s.dropped.len(), 10);
            assert!(s.w_min_hz.iter().sum::<f64>() <= p.total_bandwidth_hz);
            assert!((0.0..=1.0).contains(&s.surplus_norm));
            for (k, &u) in s.scheduled_idx.iter().enumerate() {
                assert!(s.w_min_norm[k] > 0.0 && s.w_min_norm[k] <= 1.0);
                let r = secrecy_rate(s.w_min_hz[k], &sample.users[u], &p).unwrap();
                assert!(r >= p.min_secrecy_rate_bps);
            }
        }
    }
}

//! Multiplication accounting for the four allocators: closed-form cost
//! expressions and instrumented runs that count what the code actually does.

use std::cell::Cell;
use std::ops::{Add, Div, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::alloc::{allocate_bec_with, allocate_ivs_with, sum_rate_of, Allocation, BestChannelRule, Policy};
use crate::error::{Error, Result};
use crate::gnn::{gnn_forward_counted, FnnParams};
use crate::model::{rate_gap_expr, ChannelSample, RateScalar, SystemParams, UserChannel};
use crate::scheduling::Schedule;

/// Multiplication-equivalent charged for one logarithm.
pub const LOG_COST: u64 = 1;

/// Reference cost of one secrecy-rate evaluation used in the comparisons.
pub const REFERENCE_OMEGA: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCount {
    /// Multiplications performed outside secrecy-rate evaluations.
    pub multiplications: u64,
    pub secrecy_rate_evals: u64,
    pub policy: Policy,
}

impl OpCount {
    pub fn new(policy: Policy) -> Self {
        OpCount {
            multiplications: 0,
            secrecy_rate_evals: 0,
            policy,
        }
    }

    /// Total multiplications when each secrecy-rate evaluation costs `omega`.
    pub fn total(&self, omega: u64) -> u64 {
        self.multiplications + self.secrecy_rate_evals * omega
    }
}

/// `sum_l m_l * m_{l+1}` over consecutive layer widths.
pub fn fnn_multiplications(widths: &[usize]) -> u64 {
    widths.windows(2).map(|w| (w[0] * w[1]) as u64).sum()
}

/// Closed-form per-sample cost of `policy`, in multiplications.
pub fn complexity_formula(
    policy: Policy,
    k: usize,
    delta_w_hz: f64,
    surplus_hz: f64,
    fnn_widths: &[usize],
    omega: f64,
) -> Result<f64> {
    if !(delta_w_hz > 0.0) || !(omega >= 1.0) || surplus_hz < 0.0 {
        return Err(Error::InvalidParam(format!(
            "complexity needs delta_w > 0, omega >= 1, surplus >= 0 (got {delta_w_hz}, {omega}, {surplus_hz})"
        )));
    }
    let k = k as f64;
    Ok(match policy {
        Policy::GnnUsl | Policy::GnnSl => k * (fnn_multiplications(fnn_widths) as f64 + 2.0 + omega),
        Policy::Ivs => k * (surplus_hz / delta_w_hz) * 3.0 * omega,
        Policy::Bec => omega,
        Policy::BruteForce => return Err(Error::UnknownPolicy(policy.to_string())),
    })
}

thread_local! {
    static TALLY: Cell<u64> = const { Cell::new(0) };
}

/// f64 that counts multiplications, divisions and logarithms on this thread.
#[derive(Debug, Clone, Copy)]
struct Tallied(f64);

fn bump(n: u64) {
    TALLY.with(|t| t.set(t.get() + n));
}

impl Add for Tallied {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Tallied(self.0 + o.0)
    }
}

impl Sub for Tallied {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Tallied(self.0 - o.0)
    }
}

impl Mul for Tallied {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        bump(1);
        Tallied(self.0 * o.0)
    }
}

impl Div for Tallied {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        bump(1);
        Tallied(self.0 / o.0)
    }
}

impl RateScalar for Tallied {
    fn lift(v: f64) -> Self {
        Tallied(v)
    }
    fn ln_1p(self) -> Self {
        bump(LOG_COST);
        Tallied(self.0.ln_1p())
    }
    fn powf(self, e: Self) -> Self {
        Tallied(self.0.powf(e.0))
    }
    fn value(self) -> f64 {
        self.0
    }
}

/// Multiplications in one secrecy-rate evaluation, measured by replaying
/// the production expression with a counting scalar.
pub fn measured_omega() -> u64 {
    let params = SystemParams::reference();
    let ch = UserChannel {
        d_bs_m: 50.0,
        d_eve_m: 100.0,
        g_bs: 1.0,
        g_eve: 1.0,
    };
    TALLY.with(|t| t.set(0));
    let r = rate_gap_expr(Tallied(1e6), &ch, &params);
    debug_assert!(r.value() > 0.0);
    TALLY.with(|t| t.get())
}

/// Allocator knobs for [`counted_run`].
#[derive(Debug, Clone, Copy)]
pub struct RunKnobs<'a> {
    pub delta_w_hz: f64,
    pub bec_rule: BestChannelRule,
    pub model: Option<&'a FnnParams>,
}

/// Runs one allocator and reports what it spent. GNN runs include scoring
/// the emitted allocation, one secrecy-rate evaluation per user.
pub fn counted_run(
    policy: Policy,
    sched: &Schedule,
    sample: &ChannelSample,
    params: &SystemParams,
    knobs: RunKnobs<'_>,
) -> Result<(Allocation, OpCount)> {
    counted_run_on(policy, sched, &sched.channels(sample)?, params, knobs)
}

/// [`counted_run`] on explicit per-user channels, in schedule order. Used
/// when the allocator works from estimated rather than true channels.
pub fn counted_run_on(
    policy: Policy,
    sched: &Schedule,
    chs: &[UserChannel],
    params: &SystemParams,
    knobs: RunKnobs<'_>,
) -> Result<(Allocation, OpCount)> {
    let mut ops = OpCount::new(policy);
    let alloc = match policy {
        Policy::Ivs => allocate_ivs_with(sched, chs, params, knobs.delta_w_hz, &mut ops)?,
        Policy::Bec => allocate_bec_with(sched, chs, params, knobs.bec_rule, &mut ops)?,
        Policy::GnnSl | Policy::GnnUsl => {
            let model = knobs
                .model
                .ok_or_else(|| Error::InvalidParam(format!("{policy} run needs a model")))?;
            let out = gnn_forward_counted(sched, model, &mut ops)?;
            let _ = sum_rate_of(&out.w_hz, chs, params);
            ops.secrecy_rate_evals += chs.len() as u64;
            Allocation {
                w_hz: out.w_hz,
                policy,
            }
        }
        Policy::BruteForce => return Err(Error::UnknownPolicy(policy.to_string())),
    };
    Ok((alloc, ops))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::LAYER_WIDTHS;
    use crate::model::sample_channels;
    use crate::scheduling::schedule_users;

    #[test]
    fn fnn_cost_of_reference_widths() {
        assert_eq!(fnn_multiplications(&LAYER_WIDTHS), 168);
    }

    #[test]
    fn omega_is_eleven() {
        // noise N0*W, two SNRs at three each, two logs, final two products
        assert_eq!(measured_omega(), 11);
    }

    #[test]
    fn empty_network_costs_nothing() {
        for p in [Policy::GnnUsl, Policy::GnnSl, Policy::Ivs] {
            assert_eq!(complexity_formula(p, 0, 1e5, 5e6, &LAYER_WIDTHS, 10.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn formula_values() {
        let usl = complexity_formula(Policy::GnnUsl, 4, 1e5, 5e6, &LAYER_WIDTHS, 10.0).unwrap();
        assert_eq!(usl, 4.0 * 180.0);
        assert_eq!(usl, complexity_formula(Policy::GnnSl, 4, 1e5, 5e6, &LAYER_WIDTHS, 10.0).unwrap());
        let a = complexity_formula(Policy::Ivs, 4, 1e5, 6e6, &LAYER_WIDTHS, 10.0).unwrap();
        let b = complexity_formula(Policy::Ivs, 4, 1e5, 3e6, &LAYER_WIDTHS, 10.0).unwrap();
        assert_eq!(a, 2.0 * b);
        assert_eq!(complexity_formula(Policy::Bec, 7, 1e5, 6e6, &LAYER_WIDTHS, 10.0).unwrap(), 10.0);
        assert!(complexity_formula(Policy::Ivs, 1, 0.0, 6e6, &LAYER_WIDTHS, 10.0).is_err());
        assert!(complexity_formula(Policy::Ivs, 1, 1e5, 6e6, &LAYER_WIDTHS, 0.5).is_err());
    }

    #[test]
    fn measured_counts_track_formulas() {
        let p = SystemParams::reference();
        let model = FnnParams::init(11);
        for seed in 0..200 {
            let sample = sample_channels(seed, 10, &p).unwrap();
            let sched = schedule_users(&sample, &p).unwrap();
            if sched.is_empty() {
                continue;
            }
            let k = sched.k() as u64;
            let knobs = RunKnobs {
                delta_w_hz: 1e5,
                bec_rule: BestChannelRule::LegitimateSnr,
                model: Some(&model),
            };
            let (_, ivs) = counted_run(Policy::Ivs, &sched, &sample, &p, knobs).unwrap();
            let bound = complexity_formula(Policy::Ivs, sched.k(), 1e5, sched.surplus_hz(), &LAYER_WIDTHS, 1.0).unwrap();
            assert!(ivs.secrecy_rate_evals as f64 <= bound, "seed {seed}");

            let (_, gnn) = counted_run(Policy::GnnUsl, &sched, &sample, &p, knobs).unwrap();
            assert_eq!(gnn.multiplications, k * 170);
            assert_eq!(gnn.secrecy_rate_evals, k);

            let (_, bec) = counted_run(Policy::Bec, &sched, &sample, &p, knobs).unwrap();
            let (_, bec_coarse) = counted_run(
                Policy::Bec,
                &sched,
                &sample,
                &p,
                RunKnobs { delta_w_hz: 1e6, ..knobs },
            )
            .unwrap();
            assert_eq!(bec, bec_coarse);
        }
    }

    #[test]
    fn gnn_run_requires_model() {
        let p = SystemParams::reference();
        let sample = sample_channels(3, 10, &p).unwrap();
        let sched = schedule_users(&sample, &p).unwrap();
        let knobs = RunKnobs {
            delta_w_hz: 1e5,
            bec_rule: BestChannelRule::LegitimateSnr,
            model: None,
        };
        assert!(counted_run(Policy::GnnSl, &sched, &sample, &p, knobs).is_err());
        assert!(counted_run(Policy::BruteForce, &sched, &sample, &p, knobs).is_err());
    }
}

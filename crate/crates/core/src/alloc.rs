//! Baseline bandwidth allocators and the sum-secrecy-rate objective.
//!
//! Every allocator starts each scheduled user at its minimum bandwidth and
//! differs only in how it hands out the surplus.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::complexity::OpCount;
use crate::error::{Error, Result};
use crate::model::{rate_gap_deriv_fast, secrecy_rate_fast, ChannelSample, SystemParams, UserChannel};
use crate::scheduling::Schedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    Ivs,
    Bec,
    GnnSl,
    GnnUsl,
    BruteForce,
}

impl Policy {
    pub const COMPARED: [Policy; 4] = [Policy::Ivs, Policy::Bec, Policy::GnnSl, Policy::GnnUsl];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Ivs => "ivs",
            Policy::Bec => "bec",
            Policy::GnnSl => "gnn-sl",
            Policy::GnnUsl => "gnn-usl",
            Policy::BruteForce => "brute-force",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ivs" => Ok(Policy::Ivs),
            "bec" => Ok(Policy::Bec),
            "gnn-sl" => Ok(Policy::GnnSl),
            "gnn-usl" => Ok(Policy::GnnUsl),
            "brute-force" => Ok(Policy::BruteForce),
            other => Err(Error::UnknownPolicy(other.to_string())),
        }
    }
}

/// How the best-channel heuristic picks the single user that gets the surplus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BestChannelRule {
    /// Strongest legitimate link, `d_B^-alpha g_B`, ignoring the eavesdropper.
    #[default]
    LegitimateSnr,
    /// Largest secrecy-rate derivative at the user's minimum bandwidth.
    MarginalGain,
}

impl FromStr for BestChannelRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "legitimate-snr" => Ok(BestChannelRule::LegitimateSnr),
            "marginal-gain" => Ok(BestChannelRule::MarginalGain),
            other => Err(Error::InvalidParam(format!("unknown best-channel rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Bandwidth per scheduled user, aligned with `Schedule::scheduled_idx`.
    pub w_hz: Vec<f64>,
    pub policy: Policy,
}

/// Absolute slack on the budget equality, in Hz.
pub const BUDGET_ABS_TOL_HZ: f64 = 1e-6;

impl Allocation {
    pub fn total_hz(&self) -> f64 {
        self.w_hz.iter().sum()
    }

    /// Full utilization and per-user floors.
    pub fn check_feasible(&self, sched: &Schedule) -> Result<()> {
        if self.w_hz.len() != sched.k() {
            return Err(Error::LengthMismatch {
                expected: sched.k(),
                got: self.w_hz.len(),
            });
        }
        if sched.is_empty() {
            return Ok(());
        }
        let total = self.total_hz();
        if (total - sched.total_bandwidth_hz).abs() > BUDGET_ABS_TOL_HZ {
            return Err(Error::InvalidParam(format!(
                "{} allocation uses {total} Hz of a {} Hz budget",
                self.policy, sched.total_bandwidth_hz
            )));
        }
        for (k, (&w, &floor)) in self.w_hz.iter().zip(&sched.w_min_hz).enumerate() {
            if w < floor {
                return Err(Error::InvalidParam(format!(
                    "{} gives user {k} {w} Hz, below its {floor} Hz minimum",
                    self.policy
                )));
            }
        }
        Ok(())
    }
}

pub fn sum_secrecy_rate(
    alloc: &Allocation,
    sched: &Schedule,
    sample: &ChannelSample,
    params: &SystemParams,
) -> Result<f64> {
    if alloc.w_hz.len() != sched.k() {
        return Err(Error::LengthMismatch {
            expected: sched.k(),
            got: alloc.w_hz.len(),
        });
    }
    let chs = sched.channels(sample)?;
    Ok(sum_rate_of(&alloc.w_hz, &chs, params))
}

pub(crate) fn sum_rate_of(w_hz: &[f64], chs: &[UserChannel], params: &SystemParams) -> f64 {
    w_hz.iter()
        .zip(chs)
        .map(|(&w, ch)| secrecy_rate_fast(w, ch, params))
        .sum()
}

fn require_nonempty(sched: &Schedule) -> Result<()> {
    if sched.is_empty() {
        Err(Error::EmptySchedule)
    } else {
        Ok(())
    }
}

/// Index of the first maximum.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Writes `W_max - sum(others)` into `w[k]` so the budget is met exactly.
fn settle_budget(w: &mut [f64], k: usize, w_max: f64) {
    let others: f64 = w.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, v)| v).sum();
    w[k] = w_max - others;
}

/// Block-greedy iterative search. `chs` are the channels the allocator
/// believes, which may differ from the true ones under CSI uncertainty.
pub(crate) fn ivs_core(
    sched: &Schedule,
    chs: &[UserChannel],
    params: &SystemParams,
    delta_w_hz: f64,
    ops: &mut OpCount,
) -> Vec<f64> {
    let k = sched.k();
    let mut w = sched.w_min_hz.clone();
    if k == 1 {
        settle_budget(&mut w, 0, sched.total_bandwidth_hz);
        return w;
    }
    let surplus = sched.surplus_hz();
    // a hair of slack so an exact multiple of the block size is not lost to rounding
    let blocks = (surplus / delta_w_hz + 1e-9).floor() as usize;

    let gain = |w: f64, ch: &UserChannel| secrecy_rate_fast(w + delta_w_hz, ch, params) - secrecy_rate_fast(w, ch, params);
    let mut gains = vec![0.0; k];
    let mut winner = None;
    for _ in 0..blocks {
        for (j, ch) in chs.iter().enumerate() {
            gains[j] = gain(w[j], ch);
        }
        ops.secrecy_rate_evals += 2 * k as u64;
        let best = argmax(&gains);
        w[best] += delta_w_hz;
        winner = Some(best);
    }

    let target = match winner {
        // only the last winner's gain is stale
        Some(last) => {
            gains[last] = gain(w[last], &chs[last]);
            ops.secrecy_rate_evals += 2;
            argmax(&gains)
        }
        // surplus below one block: smallest floor, i.e. best average secrecy efficiency
        None => argmin(&sched.w_min_hz),
    };
    settle_budget(&mut w, target, sched.total_bandwidth_hz);
    w
}

/// Iterative search: repeatedly grant a block of `delta_w_hz` to the user
/// whose secrecy rate grows the most. The final sub-block remainder goes to
/// the user with the best marginal gain after the last block.
pub fn allocate_ivs(
    sched: &Schedule,
    sample: &ChannelSample,
    params: &SystemParams,
    delta_w_hz: f64,
) -> Result<Allocation> {
    let chs = sched.channels(sample)?;
    allocate_ivs_with(sched, &chs, params, delta_w_hz, &mut OpCount::new(Policy::Ivs))
}

pub(crate) fn allocate_ivs_with(
    sched: &Schedule,
    chs: &[UserChannel],
    params: &SystemParams,
    delta_w_hz: f64,
    ops: &mut OpCount,
) -> Result<Allocation> {
    require_nonempty(sched)?;
    if !(delta_w_hz > 0.0 && delta_w_hz.is_finite()) {
        return Err(Error::InvalidParam(format!("block size must be > 0, got {delta_w_hz}")));
    }
    if chs.len() != sched.k() {
        return Err(Error::LengthMismatch {
            expected: sched.k(),
            got: chs.len(),
        });
    }
    Ok(Allocation {
        w_hz: ivs_core(sched, chs, params, delta_w_hz, ops),
        policy: Policy::Ivs,
    })
}

/// Best channel: floors for everyone, the whole surplus to a single user.
pub fn allocate_bec(
    sched: &Schedule,
    sample: &ChannelSample,
    params: &SystemParams,
    rule: BestChannelRule,
) -> Result<Allocation> {
    let chs = sched.channels(sample)?;
    allocate_bec_with(sched, &chs, params, rule, &mut OpCount::new(Policy::Bec))
}

pub(crate) fn allocate_bec_with(
    sched: &Schedule,
    chs: &[UserChannel],
    params: &SystemParams,
    rule: BestChannelRule,
    ops: &mut OpCount,
) -> Result<Allocation> {
    require_nonempty(sched)?;
    let scores: Vec<f64> = match rule {
        BestChannelRule::LegitimateSnr => {
            ops.multiplications += chs.len() as u64;
            chs.iter()
                .map(|ch| ch.d_bs_m.powf(-params.path_loss_exp) * ch.g_bs)
                .collect()
        }
        BestChannelRule::MarginalGain => {
            ops.secrecy_rate_evals += chs.len() as u64;
            chs.iter()
                .zip(&sched.w_min_hz)
                .map(|(ch, &w)| {
                    let (xb, xe) = ch.snr_scales(params);
                    rate_gap_deriv_fast(w, xb, xe)
                })
                .collect()
        }
    };
    let best = argmax(&scores);
    let mut w = sched.w_min_hz.clone();
    settle_budget(&mut w, best, sched.total_bandwidth_hz);
    Ok(Allocation {
        w_hz: w,
        policy: Policy::Bec,
    })
}

/// Exhaustive grid search over surplus splits, for up to three users.
/// `grid_points` is the number of levels per free coordinate.
pub fn brute_force_oracle(
    sched: &Schedule,
    sample: &ChannelSample,
    params: &SystemParams,
    grid_points: usize,
) -> Result<Allocation> {
    require_nonempty(sched)?;
    let k = sched.k();
    if k > 3 {
        return Err(Error::OracleTooLarge(k));
    }
    if grid_points < 2 {
        return Err(Error::InvalidParam("grid needs at least 2 points".into()));
    }
    let chs = sched.channels(sample)?;
    let surplus = sched.surplus_hz();
    let steps = (grid_points - 1) as f64;
    let w_max = sched.total_bandwidth_hz;
    let floors = &sched.w_min_hz;

    let mut best_w = floors.clone();
    settle_budget(&mut best_w, 0, w_max);
    if k == 1 {
        return Ok(Allocation {
            w_hz: best_w,
            policy: Policy::BruteForce,
        });
    }
    let mut best_rate = f64::NEG_INFINITY;
    let mut consider = |w: Vec<f64>| {
        let r = sum_rate_of(&w, &chs, params);
        if r > best_rate {
            best_rate = r;
            best_w = w;
        }
    };
    match k {
        2 => {
            for i in 0..grid_points {
                let a = surplus * i as f64 / steps;
                let mut w = vec![floors[0] + a, floors[1]];
                settle_budget(&mut w, 1, w_max);
                consider(w);
            }
        }
        _ => {
            for i in 0..grid_points {
                for j in 0..grid_points - i {
                    let a = surplus * i as f64 / steps;
                    let b = surplus * j as f64 / steps;
                    let mut w = vec![floors[0] + a, floors[1] + b, floors[2]];
                    settle_budget(&mut w, 2, w_max);
                    if w[2] >= floors[2] {
                        consider(w);
                    }
                }
            }
        }
    }
    Ok(Allocation {
        w_hz: best_w,
        policy: Policy::BruteForce,
    })
}

//! Physical uplink model: user/eavesdropper placement, Shannon rates on the
//! legitimate and wiretap links, the clamped secrecy rate, and its first two
//! bandwidth derivatives.
//!
//! All quantities are SI: watts, hertz, metres, bit/s. Unit conversions from
//! dBm / MHz / Mbps happen once, in [`SystemParams::from_table_units`].

use std::f64::consts::{LN_2, LOG2_E};
use std::ops::{Add, Div, Mul, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to sampled distances so that path loss stays finite.
const MIN_DISTANCE_M: f64 = 1e-3;

/// Relative floor for perturbed eavesdropper CSI.
const PERTURB_FLOOR: f64 = 1e-9;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub tx_power_w: f64,
    pub total_bandwidth_hz: f64,
    pub noise_density_w_per_hz: f64,
    pub path_loss_exp: f64,
    pub min_secrecy_rate_bps: f64,
    pub area_half_width_m: f64,
}

impl SystemParams {
    pub fn new(
        tx_power_w: f64,
        total_bandwidth_hz: f64,
        noise_density_w_per_hz: f64,
        path_loss_exp: f64,
        min_secrecy_rate_bps: f64,
        area_half_width_m: f64,
    ) -> Result<Self> {
        let params = SystemParams {
            tx_power_w,
            total_bandwidth_hz,
            noise_density_w_per_hz,
            path_loss_exp,
            min_secrecy_rate_bps,
            area_half_width_m,
        };
        params.validate()?;
        Ok(params)
    }

    /// Builds parameters from the units the simulation table is written in.
    pub fn from_table_units(
        tx_power_dbm: f64,
        total_bandwidth_mhz: f64,
        noise_density_dbm_per_hz: f64,
        path_loss_exp: f64,
        min_secrecy_rate_mbps: f64,
        area_half_width_m: f64,
    ) -> Result<Self> {
        Self::new(
            dbm_to_watts(tx_power_dbm),
            total_bandwidth_mhz * 1e6,
            dbm_to_watts(noise_density_dbm_per_hz),
            path_loss_exp,
            min_secrecy_rate_mbps * 1e6,
            area_half_width_m,
        )
    }

    /// 23 dBm, 10 MHz, -174 dBm/Hz, alpha = 3, 0.8 Mbps, 200 m x 200 m area.
    pub fn reference() -> Self {
        Self::from_table_units(23.0, 10.0, -174.0, 3.0, 0.8, 100.0)
            .expect("reference parameters are valid")
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("tx_power_w", self.tx_power_w),
            ("total_bandwidth_hz", self.total_bandwidth_hz),
            ("noise_density_w_per_hz", self.noise_density_w_per_hz),
            ("path_loss_exp", self.path_loss_exp),
            ("min_secrecy_rate_bps", self.min_secrecy_rate_bps),
            ("area_half_width_m", self.area_half_width_m),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParam(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Received SNR scale `P d^-alpha g / N0` in hertz.
    pub fn snr_scale_hz(&self, d_m: f64, gain: f64) -> f64 {
        self.tx_power_w * d_m.powf(-self.path_loss_exp) * gain / self.noise_density_w_per_hz
    }
}

/// CSI of one user: distances to the base station and the eavesdropper and
/// the small-scale power gains of both links.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserChannel {
    pub d_bs_m: f64,
    pub d_eve_m: f64,
    pub g_bs: f64,
    pub g_eve: f64,
}

impl UserChannel {
    pub fn new(d_bs_m: f64, d_eve_m: f64, g_bs: f64, g_eve: f64) -> Result<Self> {
        let ch = UserChannel {
            d_bs_m,
            d_eve_m,
            g_bs,
            g_eve,
        };
        ch.validate()?;
        Ok(ch)
    }

    pub fn validate(&self) -> Result<()> {
        for d in [self.d_bs_m, self.d_eve_m] {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::NonPositiveDistance(d));
            }
        }
        for g in [self.g_bs, self.g_eve] {
            if !(g.is_finite() && g >= 0.0) {
                return Err(Error::InvalidParam(format!(
                    "channel gain must be finite and >= 0, got {g}"
                )));
            }
        }
        Ok(())
    }

    /// `(xi_B, xi_E)`, the legitimate and wiretap SNR scales in hertz.
    pub fn snr_scales(&self, params: &SystemParams) -> (f64, f64) {
        (
            params.snr_scale_hz(self.d_bs_m, self.g_bs),
            params.snr_scale_hz(self.d_eve_m, self.g_eve),
        )
    }

    /// True when the legitimate link is strictly stronger than the wiretap link.
    pub fn has_secrecy_advantage(&self, params: &SystemParams) -> bool {
        let (xb, xe) = self.snr_scales(params);
        xb > xe
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSample {
    pub users: Vec<UserChannel>,
}

impl ChannelSample {
    pub fn new(users: Vec<UserChannel>) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::InvalidParam("a sample needs at least one user".into()));
        }
        for u in &users {
            u.validate()?;
        }
        Ok(ChannelSample { users })
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

/// Draws one network snapshot: BS at the origin, users and a freshly placed
/// eavesdropper uniform on the square, unit-mean exponential power gains.
pub fn sample_channels(rng_seed: u64, num_users: usize, params: &SystemParams) -> Result<ChannelSample> {
    if num_users == 0 {
        return Err(Error::InvalidParam("num_users must be >= 1".into()));
    }
    let a = params.area_half_width_m;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let eve = (rng.random_range(-a..=a), rng.random_range(-a..=a));
    let users = (0..num_users)
        .map(|_| {
            let x: f64 = rng.random_range(-a..=a);
            let y: f64 = rng.random_range(-a..=a);
            let g_bs: f64 = rng.sample(Exp1);
            let g_eve: f64 = rng.sample(Exp1);
            UserChannel {
                d_bs_m: x.hypot(y).max(MIN_DISTANCE_M),
                d_eve_m: (x - eve.0).hypot(y - eve.1).max(MIN_DISTANCE_M),
                g_bs,
                g_eve,
            }
        })
        .collect();
    Ok(ChannelSample { users })
}

fn check_bandwidth(bandwidth_hz: f64) -> Result<()> {
    if bandwidth_hz.is_nan() || bandwidth_hz < 0.0 {
        return Err(Error::NegativeBandwidth(bandwidth_hz));
    }
    Ok(())
}

/// Shannon rate `W log2(1 + P d^-alpha g / (N0 W))`, zero at `W = 0`.
pub fn data_rate(bandwidth_hz: f64, d_m: f64, gain: f64, params: &SystemParams) -> Result<f64> {
    check_bandwidth(bandwidth_hz)?;
    if !(d_m > 0.0) {
        return Err(Error::NonPositiveDistance(d_m));
    }
    if bandwidth_hz == 0.0 {
        return Ok(0.0);
    }
    let snr = params.tx_power_w * d_m.powf(-params.path_loss_exp) * gain
        / (params.noise_density_w_per_hz * bandwidth_hz);
    Ok(bandwidth_hz * snr.ln_1p() * LOG2_E)
}

/// Arithmetic used by the secrecy-rate expression. Lets the complexity
/// module replay the exact expression with a multiplication tally.
pub(crate) trait RateScalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self>
{
    fn lift(v: f64) -> Self;
    fn ln_1p(self) -> Self;
    fn powf(self, e: Self) -> Self;
    fn value(self) -> f64;
}

impl RateScalar for f64 {
    fn lift(v: f64) -> Self {
        v
    }
    fn ln_1p(self) -> Self {
        f64::ln_1p(self)
    }
    fn powf(self, e: Self) -> Self {
        f64::powf(self, e)
    }
    fn value(self) -> f64 {
        self
    }
}

/// `R^B - R^E` without the clamp; callers guarantee `w > 0`.
pub(crate) fn rate_gap_expr<T: RateScalar>(w: T, ch: &UserChannel, params: &SystemParams) -> T {
    let p = T::lift(params.tx_power_w);
    let neg_alpha = T::lift(-params.path_loss_exp);
    let noise = T::lift(params.noise_density_w_per_hz) * w;
    let snr_b = p * T::lift(ch.d_bs_m).powf(neg_alpha) * T::lift(ch.g_bs) / noise;
    let snr_e = p * T::lift(ch.d_eve_m).powf(neg_alpha) * T::lift(ch.g_eve) / noise;
    w * (snr_b.ln_1p() - snr_e.ln_1p()) * T::lift(LOG2_E)
}

/// Legitimate rate minus wiretapped rate, not clamped at zero.
///
/// Equal to [`secrecy_rate`] whenever the user has a secrecy advantage.
pub fn rate_gap(bandwidth_hz: f64, ch: &UserChannel, params: &SystemParams) -> Result<f64> {
    check_bandwidth(bandwidth_hz)?;
    ch.validate()?;
    if bandwidth_hz == 0.0 {
        return Ok(0.0);
    }
    Ok(rate_gap_expr(bandwidth_hz, ch, params))
}

/// `[R^B - R^E]^+` in bit/s.
pub fn secrecy_rate(bandwidth_hz: f64, ch: &UserChannel, params: &SystemParams) -> Result<f64> {
    rate_gap(bandwidth_hz, ch, params).map(|r| r.max(0.0))
}

/// Unchecked hot-path variant used inside allocators once inputs are validated.
#[inline]
pub(crate) fn secrecy_rate_fast(bandwidth_hz: f64, ch: &UserChannel, params: &SystemParams) -> f64 {
    if bandwidth_hz <= 0.0 {
        return 0.0;
    }
    rate_gap_expr(bandwidth_hz, ch, params).max(0.0)
}

#[inline]
pub(crate) fn rate_gap_deriv_fast(w: f64, xi_b: f64, xi_e: f64) -> f64 {
    let log_ratio = ((xi_b - xi_e) / (w + xi_e)).ln_1p();
    let correction = (xi_e - xi_b) * w / ((w + xi_b) * (w + xi_e));
    (log_ratio + correction) / LN_2
}

#[inline]
pub(crate) fn rate_gap_second_deriv_fast(w: f64, xi_b: f64, xi_e: f64) -> f64 {
    let num = (xi_e - xi_b) * ((xi_e + xi_b) * w + 2.0 * xi_e * xi_b);
    let sb = (w + xi_b) * (w + xi_b);
    let se = (w + xi_e) * (w + xi_e);
    num / (LN_2 * sb * se)
}

fn check_positive_bandwidth(bandwidth_hz: f64) -> Result<()> {
    if !(bandwidth_hz > 0.0) {
        return Err(Error::NonPositiveBandwidth(bandwidth_hz));
    }
    Ok(())
}

/// Closed-form `d(R^B - R^E)/dW`, in bit/s per Hz.
///
/// Positive whenever `xi_B > xi_E`, zero when the two links coincide.
pub fn secrecy_rate_deriv(bandwidth_hz: f64, ch: &UserChannel, params: &SystemParams) -> Result<f64> {
    check_positive_bandwidth(bandwidth_hz)?;
    ch.validate()?;
    let (xb, xe) = ch.snr_scales(params);
    Ok(rate_gap_deriv_fast(bandwidth_hz, xb, xe))
}

/// Closed-form second derivative, in bit/s per Hz^2. Negative whenever
/// `xi_B > xi_E`.
pub fn secrecy_rate_second_deriv(
    bandwidth_hz: f64,
    ch: &UserChannel,
    params: &SystemParams,
) -> Result<f64> {
    check_positive_bandwidth(bandwidth_hz)?;
    ch.validate()?;
    let (xb, xe) = ch.snr_scales(params);
    Ok(rate_gap_second_deriv_fast(bandwidth_hz, xb, xe))
}

/// Multiplicative uniform noise on the eavesdropper distance and gain:
/// each becomes `v (1 + eps)` with `eps ~ U[-frac, frac]`. The legitimate
/// link is returned untouched.
pub fn perturb_eve_csi(ch: &UserChannel, uncertainty_frac: f64, rng_seed: u64) -> Result<UserChannel> {
    if !(0.0..=1.0).contains(&uncertainty_frac) {
        return Err(Error::InvalidParam(format!(
            "uncertainty fraction must lie in [0, 1], got {uncertainty_frac}"
        )));
    }
    if uncertainty_frac == 0.0 {
        return Ok(*ch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut jitter = |v: f64| {
        let eps: f64 = rng.random_range(-uncertainty_frac..=uncertainty_frac);
        (v * (1.0 + eps)).max(v * PERTURB_FLOOR)
    };
    let d_eve_m = jitter(ch.d_eve_m);
    let g_eve = jitter(ch.g_eve);
    Ok(UserChannel {
        d_eve_m,
        g_eve,
        ..*ch
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> SystemParams {
        SystemParams::reference()
    }

    #[test]
    fn reference_units_convert() {
        let p = params();
        assert_relative_eq!(p.tx_power_w, 0.199_526_231_5, max_relative = 1e-9);
        assert_relative_eq!(p.noise_density_w_per_hz, 3.981_071_705_5e-21, max_relative = 1e-9);
        assert_eq!(p.total_bandwidth_hz, 10e6);
        assert_eq!(p.min_secrecy_rate_bps, 0.8e6);
    }

    #[test]
    fn rejects_non_positive_params() {
        assert!(SystemParams::new(1.0, 0.0, 1.0, 3.0, 1.0, 1.0).is_err());
        assert!(SystemParams::new(1.0, 1.0, 1.0, 3.0, 0.0, 1.0).is_err());
        assert!(SystemParams::new(f64::NAN, 1.0, 1.0, 3.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn zero_bandwidth_gives_zero_rate() {
        assert_eq!(data_rate(0.0, 100.0, 1.0, &params()).unwrap(), 0.0);
    }

    #[test]
    fn reference_link_rate() {
        // log2(1 + 0.19953 * 1e-6 / (3.981e-21 * 1e6)) * 1 MHz
        let r = data_rate(1e6, 100.0, 1.0, &params()).unwrap();
        assert!((r - 25.58e6).abs() < 0.01e6, "{r}");
    }

    #[test]
    fn doubling_gain_adds_one_bit_per_hz_at_high_snr() {
        let p = params();
        let r1 = data_rate(1e6, 100.0, 1.0, &p).unwrap();
        let r2 = data_rate(1e6, 100.0, 2.0, &p).unwrap();
        assert!(((r2 - r1) - 1e6).abs() < 10.0, "{}", r2 - r1);
    }

    #[test]
    fn data_rate_rejects_bad_inputs() {
        assert!(matches!(
            data_rate(-1.0, 10.0, 1.0, &params()),
            Err(Error::NegativeBandwidth(_))
        ));
        assert!(matches!(
            data_rate(1.0, 0.0, 1.0, &params()),
            Err(Error::NonPositiveDistance(_))
        ));
    }

    #[test]
    fn identical_links_have_no_secrecy() {
        let ch = UserChannel::new(80.0, 80.0, 0.7, 0.7).unwrap();
        for w in [0.0, 1e3, 1e6, 1e7] {
            assert_eq!(secrecy_rate(w, &ch, &params()).unwrap(), 0.0);
        }
        assert_eq!(secrecy_rate_deriv(1e6, &ch, &params()).unwrap(), 0.0);
        assert_eq!(secrecy_rate_second_deriv(1e6, &ch, &params()).unwrap(), 0.0);
    }

    #[test]
    fn eavesdropper_twice_as_far_gives_three_bits() {
        let ch = UserChannel::new(50.0, 100.0, 1.0, 1.0).unwrap();
        let r = secrecy_rate(1e6, &ch, &params()).unwrap();
        assert!((r - 3.0e6).abs() < 1e3, "{r}");
    }

    #[test]
    fn silent_eavesdropper_leaves_data_rate() {
        let p = params();
        let ch = UserChannel::new(70.0, 30.0, 1.3, 0.0).unwrap();
        let rs = secrecy_rate(2e6, &ch, &p).unwrap();
        let rb = data_rate(2e6, 70.0, 1.3, &p).unwrap();
        assert_relative_eq!(rs, rb, max_relative = 1e-12);
    }

    #[test]
    fn derivative_positive_at_small_bandwidth() {
        let ch = UserChannel::new(50.0, 150.0, 1.0, 1.0).unwrap();
        assert!(secrecy_rate_deriv(0.1e6, &ch, &params()).unwrap() > 0.0);
    }

    #[test]
    fn derivatives_reject_zero_bandwidth() {
        let ch = UserChannel::new(50.0, 150.0, 1.0, 1.0).unwrap();
        assert!(secrecy_rate_deriv(0.0, &ch, &params()).is_err());
        assert!(secrecy_rate_second_deriv(-1.0, &ch, &params()).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_bounded() {
        let p = params();
        let a = sample_channels(42, 10, &p).unwrap();
        let b = sample_channels(42, 10, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        let bound = 200.0 * 2f64.sqrt();
        for u in &a.users {
            assert!(u.d_bs_m > 0.0 && u.d_bs_m <= bound);
            assert!(u.d_eve_m > 0.0 && u.d_eve_m <= bound);
        }
        assert_ne!(a, sample_channels(43, 10, &p).unwrap());
        assert!(sample_channels(1, 0, &p).is_err());
    }

    #[test]
    fn exponential_gains_have_unit_mean() {
        let p = params();
        let n = 100_000;
        let sum: f64 = (0..n)
            .map(|s| sample_channels(s, 10, &p).unwrap())
            .flat_map(|c| c.users.into_iter().map(|u| u.g_bs))
            .sum();
        let mean = sum / (n as f64 * 10.0);
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn perturbation_contract() {
        let ch = UserChannel::new(40.0, 90.0, 0.5, 1.5).unwrap();
        assert_eq!(perturb_eve_csi(&ch, 0.0, 7).unwrap(), ch);
        for seed in 0..500 {
            let q = perturb_eve_csi(&ch, 0.15, seed).unwrap();
            assert!(q.d_eve_m >= 0.85 * 90.0 - 1e-12 && q.d_eve_m <= 1.15 * 90.0 + 1e-12);
            assert!(q.g_eve >= 0.85 * 1.5 - 1e-12 && q.g_eve <= 1.15 * 1.5 + 1e-12);
            assert_eq!(q.d_bs_m.to_bits(), ch.d_bs_m.to_bits());
            assert_eq!(q.g_bs.to_bits(), ch.g_bs.to_bits());
        }
        let full = perturb_eve_csi(&ch, 1.0, 3).unwrap();
        assert!(full.d_eve_m > 0.0 && full.g_eve > 0.0);
        assert!(perturb_eve_csi(&ch, 1.5, 0).is_err());
        assert!(perturb_eve_csi(&ch, -0.1, 0).is_err());
    }

    fn scheduled_channel() -> impl Strategy<Value = UserChannel> {
        (5.0..250.0f64, 1.0..8.0f64, 0.05..3.0f64, 0.05..3.0f64).prop_filter_map(
            "needs secrecy advantage",
            |(d_b, ratio, g_b, g_e)| {
                let ch = UserChannel::new(d_b, d_b * ratio, g_b, g_e).ok()?;
                ch.has_secrecy_advantage(&SystemParams::reference()).then_some(ch)
            },
        )
    }

    proptest! {
        #[test]
        fn secrecy_rate_never_negative(d_b in 1.0..300.0f64, d_e in 1.0..300.0f64,
                                       g_b in 0.0..5.0f64, g_e in 0.0..5.0f64, w in 0.0..1e7f64) {
            let ch = UserChannel::new(d_b, d_e, g_b, g_e).unwrap();
            prop_assert!(secrecy_rate(w, &ch, &params()).unwrap() >= 0.0);
        }

        #[test]
        fn monotone_in_bandwidth(ch in scheduled_channel(), a in 1.0..1e7f64, b in 1.0..1e7f64) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let p = params();
            prop_assert!(secrecy_rate(lo, &ch, &p).unwrap() <= secrecy_rate(hi, &ch, &p).unwrap());
        }

        #[test]
        fn midpoint_concavity(ch in scheduled_channel(), a in 1.0..1e7f64, b in 1.0..1e7f64) {
            let p = params();
            let mid = secrecy_rate(0.5 * (a + b), &ch, &p).unwrap();
            let chord = 0.5 * (secrecy_rate(a, &ch, &p).unwrap() + secrecy_rate(b, &ch, &p).unwrap());
            // rounding slack: both sides are O(1e8) bit/s
            prop_assert!(mid >= chord - 1e-7 * chord.abs().max(1.0));
        }
    }
}

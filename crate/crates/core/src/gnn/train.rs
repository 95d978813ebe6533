use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{realized_sum_rate, sgd_step, sl_loss_grad, usl_loss_grad, Activation, FnnParams, Gradient};
use crate::error::{Error, Result};
use crate::model::{SystemParams, UserChannel};
use crate::scheduling::Schedule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    Sl,
    Usl,
}

impl TrainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::Sl => "sl",
            TrainMode::Usl => "usl",
        }
    }
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sl" => Ok(TrainMode::Sl),
            "usl" => Ok(TrainMode::Usl),
            other => Err(Error::InvalidParam(format!("unknown training mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub mode: TrainMode,
    pub seed: u64,
    #[serde(default)]
    pub hidden_activation: Activation,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParam("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One scheduled snapshot prepared for training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub sched: Schedule,
    /// Channels of the scheduled users, in schedule order.
    pub channels: Vec<UserChannel>,
    /// Reference allocation in Hz (the supervised label).
    pub label_w_hz: Option<Vec<f64>>,
    /// Sum secrecy rate of the reference allocation; the normalizer for the
    /// reported training metric.
    pub reference_rate_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub mode: TrainMode,
    pub normalized_avg_sum_secrecy_rate: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    pub normalized_avg_sum_secrecy_rate: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn normalized_series(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.normalized_avg_sum_secrecy_rate).collect()
    }

    /// First step whose trailing moving average reaches `level`.
    pub fn first_step_reaching(&self, level: f64, window: usize) -> Option<usize> {
        moving_average(&self.normalized_series(), window)
            .iter()
            .position(|&v| v >= level)
            .map(|i| self.steps[i].step)
    }
}

/// Trailing moving average; the first entries average what is available.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, &v) in values.iter().enumerate() {
        acc += v;
        if i >= window {
            acc -= values[i - window];
        }
        out.push(acc / (i + 1).min(window) as f64);
    }
    out
}

/// Mini-batch SGD over a shuffled dataset. Empty schedules are skipped.
/// Bit-for-bit reproducible for a fixed dataset and seed.
pub fn train(
    dataset: &[TrainingSample],
    config: &TrainConfig,
    params: &SystemParams,
) -> Result<(FnnParams, TrainingHistory)> {
    config.validate()?;
    let mut theta = FnnParams::init_with(&super::LAYER_WIDTHS, config.hidden_activation, config.seed);
    let mut history = TrainingHistory::default();
    if config.epochs == 0 {
        return Ok((theta, history));
    }

    let mut order: Vec<usize> = dataset
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.sched.is_empty())
        .map(|(i, _)| i)
        .collect();
    if config.mode == TrainMode::Sl && order.iter().any(|&i| dataset[i].label_w_hz.is_none()) {
        return Err(Error::MissingLabels);
    }
    if order.is_empty() {
        return Err(Error::EmptyBatch);
    }
    for &i in &order {
        let s = &dataset[i];
        if s.channels.len() != s.sched.k() {
            return Err(Error::LengthMismatch {
                expected: s.sched.k(),
                got: s.channels.len(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x0005_eed0_f5a3_b1e5);
    let mut step = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut epoch_ratio, mut epoch_loss, mut epoch_steps) = (0.0, 0.0, 0);
        for batch in order.chunks(config.batch_size) {
            let mut grad = Gradient::zeros_like(&theta);
            let (mut loss_sum, mut ratio_sum) = (0.0, 0.0);
            for &i in batch {
                let s = &dataset[i];
                let (loss, g, out) = match config.mode {
                    TrainMode::Usl => usl_loss_grad(&s.sched, &s.channels, &theta, params)?,
                    TrainMode::Sl => {
                        let label_hz = s.label_w_hz.as_ref().ok_or(Error::MissingLabels)?;
                        let label: Vec<f64> = label_hz.iter().map(|w| w / s.sched.total_bandwidth_hz).collect();
                        sl_loss_grad(&s.sched, &label, &theta)?
                    }
                };
                grad.add_scaled(&g, 1.0);
                loss_sum += loss;
                ratio_sum += normalized_ratio(realized_sum_rate(&out, &s.channels, params), s.reference_rate_bps);
            }
            let n = batch.len() as f64;
            let mut mean_grad = Gradient::zeros_like(&theta);
            mean_grad.add_scaled(&grad, 1.0 / n);
            theta = sgd_step(&theta, &mean_grad, config.learning_rate)?;

            let record = StepRecord {
                step,
                epoch,
                mode: config.mode,
                normalized_avg_sum_secrecy_rate: ratio_sum / n,
                loss: loss_sum / n,
            };
            epoch_ratio += record.normalized_avg_sum_secrecy_rate;
            epoch_loss += record.loss;
            epoch_steps += 1;
            history.steps.push(record);
            step += 1;
        }
        history.epochs.push(EpochRecord {
            epoch,
            steps: epoch_steps,
            normalized_avg_sum_secrecy_rate: epoch_ratio / epoch_steps as f64,
            loss: epoch_loss / epoch_steps as f64,
        });
    }
    Ok((theta, history))
}

/// Sum rate relative to a reference; zero when the reference is zero.
pub(crate) fn normalized_ratio(rate: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        rate / reference
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alloc::{allocate_ivs, sum_secrecy_rate};
    use crate::model::{sample_channels, ChannelSample};
    use crate::scheduling::schedule_users;

    fn dataset(n: u64, with_labels: bool) -> Vec<TrainingSample> {
        let p = SystemParams::reference();
        (0..n)
            .map(|seed| {
                let sample = sample_channels(seed, 10, &p).unwrap();
                let sched = schedule_users(&sample, &p).unwrap();
                let channels = sched.channels(&sample).unwrap();
                let (label, reference) = if sched.is_empty() {
                    (Some(vec![]), 0.0)
                } else {
                    let a = allocate_ivs(&sched, &sample, &p, 1e5).unwrap();
                    let r = sum_secrecy_rate(&a, &sched, &sample, &p).unwrap();
                    (Some(a.w_hz), r)
                };
                TrainingSample {
                    sched,
                    channels,
                    label_w_hz: if with_labels { label } else { None },
                    reference_rate_bps: reference,
                }
            })
            .collect()
    }

    fn config(mode: TrainMode, epochs: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-2,
            batch_size: 16,
            epochs,
            mode,
            seed: 7,
            hidden_activation: Activation::Tanh,
        }
    }

    #[test]
    fn zero_epochs_returns_init() {
        let data = dataset(10, true);
        let (theta, hist) = train(&data, &config(TrainMode::Usl, 0), &SystemParams::reference()).unwrap();
        assert_eq!(theta, FnnParams::init(7));
        assert!(hist.steps.is_empty() && hist.epochs.is_empty());
    }

    #[test]
    fn supervised_needs_labels() {
        let data = dataset(10, false);
        assert!(matches!(
            train(&data, &config(TrainMode::Sl, 1), &SystemParams::reference()),
            Err(Error::MissingLabels)
        ));
        assert!(train(&data, &config(TrainMode::Usl, 1), &SystemParams::reference()).is_ok());
    }

    #[test]
    fn training_is_reproducible() {
        let data = dataset(60, true);
        let p = SystemParams::reference();
        for mode in [TrainMode::Sl, TrainMode::Usl] {
            let a = train(&data, &config(mode, 3), &p).unwrap();
            let b = train(&data, &config(mode, 3), &p).unwrap();
            assert_eq!(a.0.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                       b.0.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            assert_eq!(a.1, b.1);
            let per_epoch = data.iter().filter(|s| !s.sched.is_empty()).count().div_ceil(16);
            assert_eq!(a.1.steps.len(), 3 * per_epoch);
            assert_eq!(a.1.epochs.len(), 3);
        }
    }

    #[test]
    fn usl_learns_even_split_for_twins() {
        let p = SystemParams::reference();
        let ch = UserChannel::new(40.0, 140.0, 1.0, 1.0).unwrap();
        let sample = ChannelSample::new(vec![ch, ch]).unwrap();
        let sched = schedule_users(&sample, &p).unwrap();
        let grid = crate::alloc::brute_force_oracle(&sched, &sample, &p, 2001).unwrap();
        let best = sum_secrecy_rate(&grid, &sched, &sample, &p).unwrap();
        let item = TrainingSample {
            channels: sched.channels(&sample).unwrap(),
            sched,
            label_w_hz: None,
            reference_rate_bps: best,
        };
        let (theta, hist) = train(std::slice::from_ref(&item), &config(TrainMode::Usl, 50), &p).unwrap();
        let out = super::super::gnn_forward(&item.sched, &theta).unwrap();
        let rate = realized_sum_rate(&out, &item.channels, &p);
        assert!(rate >= 0.999 * best, "{rate} vs {best}");
        assert_eq!(hist.steps.len(), 50);
    }

    #[test]
    fn moving_average_is_trailing() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(moving_average(&v, 2), vec![1.0, 1.5, 2.5, 3.5]);
        assert_eq!(moving_average(&v, 10), vec![1.0, 1.5, 2.0, 2.5]);
    }
}

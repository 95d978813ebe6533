//! Dataset container.
//!
//! Layout (little endian):
//!
//! ```text
//! magic   8 bytes  "SECBWDS\0"
//! version u32
//! hlen    u32      length of the JSON header that follows
//! header  hlen bytes, UTF-8 JSON (`DatasetHeader`)
//! records num_records x (16 + 49 * num_users) bytes
//! ```
//!
//! A record is `sample_seed u64, reference_rate_bps f64`, then per user
//! `d_bs, d_eve, g_bs, g_eve (f64), status u8, w_min_hz f64, label_hz f64`.
//! Status is 0 = scheduled, 1 = dropped (infeasible alone), 2 = dropped
//! (budget exceeded); dropped users carry zero bandwidths.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{derive_seed, ExperimentConfig};
use crate::alloc::{allocate_ivs, sum_secrecy_rate, Allocation, Policy};
use crate::error::{Error, Result};
use crate::gnn::TrainingSample;
use crate::model::{sample_channels, secrecy_rate, ChannelSample, SystemParams, UserChannel};
use crate::scheduling::{schedule_users, DropReason, Schedule, BISECTION_REL_TOL};

pub const DATASET_MAGIC: &[u8; 8] = b"SECBWDS\0";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.ssbw",
            Split::Test => "test.ssbw",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub split: Split,
    pub num_users: usize,
    pub num_records: usize,
    pub master_seed: u64,
    pub config_hash: String,
    pub label_delta_w_hz: f64,
    pub params: SystemParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub sample_seed: u64,
    pub sample: ChannelSample,
    pub sched: Schedule,
    /// Iterative-search allocation, aligned with the schedule.
    pub label_w_hz: Vec<f64>,
    pub reference_rate_bps: f64,
}

impl Record {
    pub fn build(sample_seed: u64, num_users: usize, params: &SystemParams, label_delta_w_hz: f64) -> Result<Self> {
        let sample = sample_channels(sample_seed, num_users, params)?;
        let sched = schedule_users(&sample, params)?;
        let (label_w_hz, reference_rate_bps) = if sched.is_empty() {
            (Vec::new(), 0.0)
        } else {
            let a = allocate_ivs(&sched, &sample, params, label_delta_w_hz)?;
            let r = sum_secrecy_rate(&a, &sched, &sample, params)?;
            (a.w_hz, r)
        };
        Ok(Record {
            sample_seed,
            sample,
            sched,
            label_w_hz,
            reference_rate_bps,
        })
    }

    pub fn label(&self) -> Allocation {
        Allocation {
            w_hz: self.label_w_hz.clone(),
            policy: Policy::Ivs,
        }
    }

    pub fn training_sample(&self) -> Result<TrainingSample> {
        Ok(TrainingSample {
            channels: self.sched.channels(&self.sample)?,
            sched: self.sched.clone(),
            label_w_hz: Some(self.label_w_hz.clone()),
            reference_rate_bps: self.reference_rate_bps,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<Record>,
}

/// Per-dataset scheduling statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleStats {
    pub records: usize,
    pub empty_schedules: usize,
    pub mean_scheduled: f64,
    pub dropped_infeasible: usize,
    pub dropped_budget: usize,
}

impl Dataset {
    pub fn generate(cfg: &ExperimentConfig, split: Split) -> Result<Self> {
        let params = cfg.system_params()?;
        let n = match split {
            Split::Train => cfg.data.train_samples,
            Split::Test => cfg.data.test_samples,
        };
        let u = cfg.system.num_users;
        let dw = cfg.label_delta_w_hz();
        let records = (0..n as u64)
            .into_par_iter()
            .map(|i| Record::build(derive_seed(cfg.seed, split.as_str(), i), u, &params, dw))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            header: DatasetHeader {
                format: "secbw-dataset".into(),
                version: DATASET_VERSION,
                split,
                num_users: u,
                num_records: n,
                master_seed: cfg.seed,
                config_hash: cfg.data_hash(),
                label_delta_w_hz: dw,
                params,
            },
            records,
        })
    }

    pub fn stats(&self) -> ScheduleStats {
        let mut s = ScheduleStats {
            records: self.records.len(),
            empty_schedules: 0,
            mean_scheduled: 0.0,
            dropped_infeasible: 0,
            dropped_budget: 0,
        };
        let mut scheduled = 0;
        for r in &self.records {
            scheduled += r.sched.k();
            if r.sched.is_empty() {
                s.empty_schedules += 1;
            }
            for (_, why) in &r.sched.dropped {
                match why {
                    DropReason::InfeasibleAlone => s.dropped_infeasible += 1,
                    DropReason::BudgetExceeded => s.dropped_budget += 1,
                }
            }
        }
        s.mean_scheduled = scheduled as f64 / self.records.len().max(1) as f64;
        s
    }

    pub fn training_samples(&self) -> Result<Vec<TrainingSample>> {
        self.records.iter().map(Record::training_sample).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header).map_err(|e| Error::format("dataset", e.to_string()))?;
        let u = self.header.num_users;
        let mut out = Vec::with_capacity(16 + header.len() + self.records.len() * record_width(u));
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for r in &self.records {
            if r.sample.len() != u {
                return Err(Error::format("dataset", "record user count differs from header"));
            }
            out.extend_from_slice(&r.sample_seed.to_le_bytes());
            out.extend_from_slice(&r.reference_rate_bps.to_le_bytes());
            let mut status = vec![(0u8, 0.0, 0.0); u];
            for (k, &i) in r.sched.scheduled_idx.iter().enumerate() {
                status[i] = (0, r.sched.w_min_hz[k], r.label_w_hz[k]);
            }
            for &(i, why) in &r.sched.dropped {
                status[i].0 = match why {
                    DropReason::InfeasibleAlone => 1,
                    DropReason::BudgetExceeded => 2,
                };
            }
            for (ch, (code, w_min, label)) in r.sample.users.iter().zip(status) {
                for v in [ch.d_bs_m, ch.d_eve_m, ch.g_bs, ch.g_eve] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                out.push(code);
                out.extend_from_slice(&w_min.to_le_bytes());
                out.extend_from_slice(&label.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { bytes, pos: 0 };
        if rd.take(8)? != DATASET_MAGIC {
            return Err(Error::format("dataset", "bad magic"));
        }
        let version = rd.u32()?;
        if version != DATASET_VERSION {
            return Err(Error::format("dataset", format!("unsupported version {version}")));
        }
        let hlen = rd.u32()? as usize;
        let header: DatasetHeader =
            serde_json::from_slice(rd.take(hlen)?).map_err(|e| Error::format("dataset", e.to_string()))?;
        let u = header.num_users;
        if rd.remaining() != header.num_records * record_width(u) {
            return Err(Error::format("dataset", "payload size does not match the header"));
        }
        let mut records = Vec::with_capacity(header.num_records);
        for _ in 0..header.num_records {
            let sample_seed = rd.u64()?;
            let reference_rate_bps = rd.f64()?;
            let mut users = Vec::with_capacity(u);
            let (mut idx, mut w_min, mut label, mut dropped) = (vec![], vec![], vec![], vec![]);
            for i in 0..u {
                let ch = UserChannel {
                    d_bs_m: rd.f64()?,
                    d_eve_m: rd.f64()?,
                    g_bs: rd.f64()?,
                    g_eve: rd.f64()?,
                };
                let code = rd.take(1)?[0];
                let (wm, lb) = (rd.f64()?, rd.f64()?);
                match code {
                    0 => {
                        idx.push(i);
                        w_min.push(wm);
                        label.push(lb);
                    }
                    1 => dropped.push((i, DropReason::InfeasibleAlone)),
                    2 => dropped.push((i, DropReason::BudgetExceeded)),
                    c => return Err(Error::format("dataset", format!("unknown user status {c}"))),
                }
                users.push(ch);
            }
            let sample = ChannelSample::new(users)?;
            let sched = Schedule::from_minimums(idx, w_min, dropped, header.params.total_bandwidth_hz)?;
            records.push(Record {
                sample_seed,
                sample,
                sched,
                label_w_hz: label,
                reference_rate_bps,
            });
        }
        Ok(Dataset { header, records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Re-derives every schedule from its channels and re-checks every label.
    /// Returns one message per problem found.
    pub fn validate(&self) -> Vec<String> {
        let p = &self.header.params;
        let tol = BISECTION_REL_TOL * p.total_bandwidth_hz;
        let mut issues = Vec::new();
        for (n, r) in self.records.iter().enumerate() {
            match schedule_users(&r.sample, p) {
                Ok(s) if s.scheduled_idx == r.sched.scheduled_idx && s.dropped.len() == r.sched.dropped.len() => {}
                Ok(_) => issues.push(format!("record {n}: stored schedule differs from recomputed one")),
                Err(e) => issues.push(format!("record {n}: {e}")),
            }
            if let Err(e) = r.label().check_feasible(&r.sched) {
                issues.push(format!("record {n}: label {e}"));
            }
            for (k, &i) in r.sched.scheduled_idx.iter().enumerate() {
                let ch = &r.sample.users[i];
                let floor = secrecy_rate(r.sched.w_min_hz[k], ch, p).unwrap_or(0.0);
                if floor < p.min_secrecy_rate_bps {
                    issues.push(format!("record {n}: user {i} misses the threshold at its minimum bandwidth"));
                }
                let below = r.sched.w_min_hz[k] - 2.0 * tol;
                if below > 0.0 && secrecy_rate(below, ch, p).unwrap_or(0.0) >= p.min_secrecy_rate_bps {
                    issues.push(format!("record {n}: user {i} minimum bandwidth is not tight"));
                }
            }
        }
        issues
    }
}

fn record_width(num_users: usize) -> usize {
    16 + 49 * num_users
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format("dataset", "truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.data.train_samples = 100;
        cfg.data.test_samples = 20;
        cfg
    }

    #[test]
    fn generated_dataset_is_valid() {
        let ds = Dataset::generate(&small_config(), Split::Train).unwrap();
        assert_eq!(ds.records.len(), 100);
        assert!(ds.records.iter().all(|r| r.sched.k() <= 10));
        assert!(ds.validate().is_empty(), "{:?}", ds.validate());
        let stats = ds.stats();
        assert_eq!(stats.records, 100);
        assert!(stats.mean_scheduled > 0.0);
    }

    #[test]
    fn bytes_round_trip_and_are_deterministic() {
        let cfg = small_config();
        let a = Dataset::generate(&cfg, Split::Test).unwrap();
        let bytes = a.to_bytes().unwrap();
        assert_eq!(bytes, Dataset::generate(&cfg, Split::Test).unwrap().to_bytes().unwrap());
        let back = Dataset::from_bytes(&bytes).unwrap();
        assert_eq!(back.header, a.header);
        for (x, y) in back.records.iter().zip(&a.records) {
            assert_eq!(x.sample, y.sample);
            assert_eq!(x.sched.scheduled_idx, y.sched.scheduled_idx);
            assert_eq!(x.sched.w_min_hz, y.sched.w_min_hz);
            assert_eq!(x.label_w_hz, y.label_w_hz);
        }
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn splits_use_different_streams() {
        let cfg = small_config();
        let tr = Dataset::generate(&cfg, Split::Train).unwrap();
        let te = Dataset::generate(&cfg, Split::Test).unwrap();
        assert_ne!(tr.records[0].sample, te.records[0].sample);
    }

    #[test]
    fn corrupt_files_rejected() {
        let ds = Dataset::generate(&small_config(), Split::Test).unwrap();
        let bytes = ds.to_bytes().unwrap();
        assert!(Dataset::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Dataset::from_bytes(&bad).is_err());
        assert!(Dataset::from_bytes(&[]).is_err());
    }

    #[test]
    fn validator_flags_tampered_labels() {
        let mut ds = Dataset::generate(&small_config(), Split::Test).unwrap();
        let r = ds.records.iter_mut().find(|r| r.sched.k() >= 2).unwrap();
        r.label_w_hz[0] += 1e3;
        assert!(!ds.validate().is_empty());
    }
}

//! Experiment commands. Each writes its artifacts into an output directory,
//! records a `run_meta_<command>.json`, and returns a summary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{derive_seed, ExperimentConfig};
use super::dataset::{Dataset, ScheduleStats, Split};
use crate::alloc::{Allocation, Policy};
use crate::complexity::{complexity_formula, counted_run_on, OpCount, RunKnobs, REFERENCE_OMEGA};
use crate::error::{Error, Result};
use crate::gnn::{moving_average, train, Checkpoint, FnnParams, TrainMode, TrainingHistory, LAYER_WIDTHS};
use crate::model::{perturb_eve_csi, secrecy_rate, ChannelSample, SystemParams};
use crate::scheduling::Schedule;

pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Rate slack when checking the per-user threshold, relative to it.
pub const RATE_REL_TOL: f64 = 1e-9;

/// Level used to compare how fast the two training modes converge.
pub const CONVERGENCE_LEVEL: f64 = 0.9;

/// Where each command reads and writes. Unset inputs default to the
/// conventional names inside `out_dir`.
#[derive(Debug, Clone, Default)]
pub struct Paths {
    pub out_dir: PathBuf,
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub model_sl: Option<PathBuf>,
    pub model_usl: Option<PathBuf>,
}

impl Paths {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Paths {
            out_dir: out_dir.into(),
            ..Default::default()
        }
    }

    pub fn data(&self, split: Split) -> PathBuf {
        let given = match split {
            Split::Train => &self.train_data,
            Split::Test => &self.test_data,
        };
        given.clone().unwrap_or_else(|| self.out_dir.join(split.file_name()))
    }

    pub fn model(&self, mode: TrainMode) -> PathBuf {
        let given = match mode {
            TrainMode::Sl => &self.model_sl,
            TrainMode::Usl => &self.model_usl,
        };
        given
            .clone()
            .unwrap_or_else(|| self.out_dir.join(format!("model_{}.json", mode.as_str())))
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

fn policy_of(mode: TrainMode) -> Policy {
    match mode {
        TrainMode::Sl => Policy::GnnSl,
        TrainMode::Usl => Policy::GnnUsl,
    }
}

fn ratio(rate: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        rate / reference
    } else {
        0.0
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let digest = Sha256::digest(fs::read(path)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Serialize)]
struct RunMeta<'a> {
    command: &'a str,
    crate_version: &'a str,
    csv_schema_version: u32,
    config: &'a ExperimentConfig,
    config_hash: String,
    derived_seeds: BTreeMap<String, u64>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

/// Writes `run_meta_<command>.json`. Files are listed by name with their
/// SHA-256, so the document does not depend on where the run lives.
fn write_meta(
    paths: &Paths,
    command: &str,
    cfg: &ExperimentConfig,
    derived_seeds: BTreeMap<String, u64>,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
) -> Result<()> {
    let describe = |files: &[PathBuf]| -> Result<BTreeMap<String, String>> {
        files
            .iter()
            .map(|p| {
                let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                Ok((name, sha256_file(p)?))
            })
            .collect()
    };
    let meta = RunMeta {
        command,
        crate_version: env!("CARGO_PKG_VERSION"),
        csv_schema_version: CSV_SCHEMA_VERSION,
        config: cfg,
        config_hash: cfg.data_hash(),
        derived_seeds,
        inputs: describe(inputs)?,
        outputs: describe(outputs)?,
    };
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::format("metadata", e.to_string()))?;
    fs::write(paths.out(&format!("run_meta_{command}.json")), text + "\n")?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format("csv", e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::format("csv", e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn load_dataset(path: &Path, cfg: &ExperimentConfig) -> Result<Dataset> {
    let ds = Dataset::load(path)?;
    if ds.header.params != cfg.system_params()? || ds.header.num_users != cfg.system.num_users {
        return Err(Error::format(
            "dataset",
            format!("{} was generated for a different system configuration", path.display()),
        ));
    }
    Ok(ds)
}

/// Loads a checkpoint and checks it fits the configured system.
pub fn load_model(path: &Path, params: &SystemParams) -> Result<FnnParams> {
    let ckpt = Checkpoint::load(path)?;
    if ckpt.params.layer_widths != LAYER_WIDTHS {
        return Err(Error::format(
            "checkpoint",
            format!("layer widths {:?}, expected {:?}", ckpt.params.layer_widths, LAYER_WIDTHS),
        ));
    }
    if ckpt.total_bandwidth_hz != params.total_bandwidth_hz {
        return Err(Error::format(
            "checkpoint",
            format!(
                "trained for a {} Hz budget, configured budget is {} Hz",
                ckpt.total_bandwidth_hz, params.total_bandwidth_hz
            ),
        ));
    }
    Ok(ckpt.params)
}

// ---------------------------------------------------------------- gen-data

#[derive(Debug, Clone, Serialize)]
pub struct GenDataSummary {
    pub train: ScheduleStats,
    pub test: ScheduleStats,
    pub train_path: PathBuf,
    pub test_path: PathBuf,
}

pub fn gen_data(cfg: &ExperimentConfig, paths: &Paths) -> Result<GenDataSummary> {
    cfg.validate()?;
    fs::create_dir_all(&paths.out_dir)?;
    let mut stats = Vec::new();
    let mut outputs = Vec::new();
    for split in [Split::Train, Split::Test] {
        let ds = Dataset::generate(cfg, split)?;
        let path = paths.data(split);
        ds.save(&path)?;
        stats.push(ds.stats());
        outputs.push(path);
    }
    let seeds = [Split::Train, Split::Test]
        .map(|s| (format!("{}[0]", s.as_str()), derive_seed(cfg.seed, s.as_str(), 0)))
        .into_iter()
        .collect();
    write_meta(paths, "gen-data", cfg, seeds, &[], &outputs)?;
    Ok(GenDataSummary {
        train: stats[0],
        test: stats[1],
        train_path: outputs[0].clone(),
        test_path: outputs[1].clone(),
    })
}

// ------------------------------------------------------------------- train

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub mode: TrainMode,
    pub steps: usize,
    pub epochs: usize,
    pub final_epoch_normalized: f64,
    /// Moving average of the per-step metric at the last step.
    pub final_moving_average: f64,
    pub max_moving_average: f64,
    pub first_step_reaching_level: Option<usize>,
    pub model_path: PathBuf,
}

#[derive(Serialize)]
struct HistoryRow {
    step: usize,
    epoch: usize,
    mode: &'static str,
    normalized_avg_sum_secrecy_rate: f64,
    moving_average: f64,
    loss: f64,
}

fn summarize_history(mode: TrainMode, hist: &TrainingHistory, window: usize, model_path: PathBuf) -> TrainSummary {
    let ma = moving_average(&hist.normalized_series(), window);
    TrainSummary {
        mode,
        steps: hist.steps.len(),
        epochs: hist.epochs.len(),
        final_epoch_normalized: hist.epochs.last().map_or(0.0, |e| e.normalized_avg_sum_secrecy_rate),
        final_moving_average: ma.last().copied().unwrap_or(0.0),
        max_moving_average: ma.iter().copied().fold(0.0, f64::max),
        first_step_reaching_level: hist.first_step_reaching(CONVERGENCE_LEVEL, window),
        model_path,
    }
}

pub fn train_models(cfg: &ExperimentConfig, paths: &Paths, modes: &[TrainMode]) -> Result<Vec<TrainSummary>> {
    cfg.validate()?;
    fs::create_dir_all(&paths.out_dir)?;
    let data_path = paths.data(Split::Train);
    let ds = load_dataset(&data_path, cfg)?;
    let params = ds.header.params;
    let samples = ds.training_samples()?;
    let window = cfg.eval.moving_average_window;
    let mut summaries = Vec::new();
    let mut outputs = Vec::new();
    let mut seeds = BTreeMap::new();
    for &mode in modes {
        let tc = cfg.train_config(mode);
        seeds.insert(format!("train-{}", mode.as_str()), tc.seed);
        let (theta, hist) = train(&samples, &tc, &params)?;
        let model_path = paths.model(mode);
        Checkpoint::new(theta, tc, params.total_bandwidth_hz).save(&model_path)?;
        let ma = moving_average(&hist.normalized_series(), window);
        let rows: Vec<HistoryRow> = hist
            .steps
            .iter()
            .zip(&ma)
            .map(|(s, &m)| HistoryRow {
                step: s.step,
                epoch: s.epoch,
                mode: mode.as_str(),
                normalized_avg_sum_secrecy_rate: s.normalized_avg_sum_secrecy_rate,
                moving_average: m,
                loss: s.loss,
            })
            .collect();
        let hist_path = paths.out(&format!("history_{}.csv", mode.as_str()));
        write_csv(&hist_path, &rows)?;
        summaries.push(summarize_history(mode, &hist, window, model_path.clone()));
        outputs.extend([model_path, hist_path]);
    }
    write_meta(paths, "train", cfg, seeds, &[data_path], &outputs)?;
    Ok(summaries)
}

// ---------------------------------------------------------------- evaluate

/// Per-policy aggregate over the test samples with at least one scheduled user.
#[derive(Debug, Clone, Serialize)]
pub struct PolicySummary {
    pub policy: Policy,
    pub samples: usize,
    pub mean_normalized: f64,
    pub mean_sum_rate_bps: f64,
    pub mean_secrecy_rate_evals: f64,
    pub mean_multiplications: f64,
    pub mean_total_ops_reference_omega: f64,
    /// Samples whose allocation misses the budget or a per-user floor.
    pub budget_violations: usize,
    /// Scheduled users whose secrecy rate falls under the threshold.
    pub rate_violations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub test_samples: usize,
    pub empty_schedules: usize,
    pub policies: Vec<PolicySummary>,
}

impl EvalSummary {
    pub fn get(&self, policy: Policy) -> Option<&PolicySummary> {
        self.policies.iter().find(|p| p.policy == policy)
    }
}

struct Outcome {
    alloc: Allocation,
    ops: OpCount,
    rate_bps: f64,
    normalized: f64,
    feasible: bool,
    rate_violations: usize,
}

/// Scores `alloc` on the true channels of the users in `sched`.
fn score(alloc: &Allocation, sched: &Schedule, truth: &ChannelSample, params: &SystemParams) -> Result<(f64, usize)> {
    let floor = params.min_secrecy_rate_bps * (1.0 - RATE_REL_TOL);
    let mut sum = 0.0;
    let mut low = 0;
    for (&w, &i) in alloc.w_hz.iter().zip(&sched.scheduled_idx) {
        let r = secrecy_rate(w.max(0.0), &truth.users[i], params)?;
        sum += r;
        if r < floor {
            low += 1;
        }
    }
    Ok((sum, low))
}

fn run_policies(
    policies: &[(Policy, Option<&FnnParams>)],
    sched: &Schedule,
    believed: &ChannelSample,
    truth: &ChannelSample,
    reference: f64,
    params: &SystemParams,
    cfg: &ExperimentConfig,
) -> Result<Vec<Outcome>> {
    let chs = sched.channels(believed)?;
    policies
        .iter()
        .map(|&(policy, model)| {
            let knobs = RunKnobs {
                delta_w_hz: cfg.label_delta_w_hz(),
                bec_rule: cfg.eval.bec_rule,
                model,
            };
            let (alloc, ops) = counted_run_on(policy, sched, &chs, params, knobs)?;
            let (rate_bps, rate_violations) = score(&alloc, sched, truth, params)?;
            Ok(Outcome {
                feasible: alloc.check_feasible(sched).is_ok(),
                normalized: ratio(rate_bps, reference),
                alloc,
                ops,
                rate_bps,
                rate_violations,
            })
        })
        .collect()
}

fn load_models<'a>(
    paths: &Paths,
    params: &SystemParams,
    models: &'a mut Vec<FnnParams>,
) -> Result<Vec<(Policy, Option<&'a FnnParams>)>> {
    models.clear();
    for mode in [TrainMode::Sl, TrainMode::Usl] {
        models.push(load_model(&paths.model(mode), params)?);
    }
    Ok(vec![
        (Policy::Ivs, None),
        (Policy::Bec, None),
        (Policy::GnnSl, Some(&models[0])),
        (Policy::GnnUsl, Some(&models[1])),
    ])
}

#[derive(Serialize)]
struct EvalRow {
    sample_index: usize,
    policy: &'static str,
    k: usize,
    sum_secrecy_rate_bps: f64,
    normalized: Option<f64>,
    moving_average: Option<f64>,
    secrecy_rate_evals: u64,
    multiplications: u64,
    uncertainty: f64,
    delta_w_hz: f64,
    alloc_hz: String,
}

pub fn evaluate(cfg: &ExperimentConfig, paths: &Paths) -> Result<EvalSummary> {
    cfg.validate()?;
    fs::create_dir_all(&paths.out_dir)?;
    let data_path = paths.data(Split::Test);
    let ds = load_dataset(&data_path, cfg)?;
    let params = ds.header.params;
    let mut store = Vec::new();
    let policies = load_models(paths, &params, &mut store)?;

    let outcomes: Vec<Option<Vec<Outcome>>> = ds
        .records
        .par_iter()
        .map(|r| {
            if r.sched.is_empty() {
                return Ok(None);
            }
            run_policies(&policies, &r.sched, &r.sample, &r.sample, r.reference_rate_bps, &params, cfg).map(Some)
        })
        .collect::<Result<_>>()?;

    let window = cfg.eval.moving_average_window;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (p_idx, &(policy, _)) in policies.iter().enumerate() {
        let series: Vec<f64> = outcomes.iter().flatten().map(|o| o[p_idx].normalized).collect();
        let ma = moving_average(&series, window);
        let mut ma_iter = ma.iter();
        for (n, (rec, out)) in ds.records.iter().zip(&outcomes).enumerate() {
            let (row_rate, norm, avg, evals, muls, alloc) = match out {
                Some(o) => {
                    let o = &o[p_idx];
                    let alloc = o.alloc.w_hz.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(";");
                    let avg = ma_iter.next().copied();
                    (o.rate_bps, Some(o.normalized), avg, o.ops.secrecy_rate_evals, o.ops.multiplications, alloc)
                }
                None => (0.0, None, None, 0, 0, String::new()),
            };
            rows.push(EvalRow {
                sample_index: n,
                policy: policy.as_str(),
                k: rec.sched.k(),
                sum_secrecy_rate_bps: row_rate,
                normalized: norm,
                moving_average: avg,
                secrecy_rate_evals: evals,
                multiplications: muls,
                uncertainty: 0.0,
                delta_w_hz: cfg.label_delta_w_hz(),
                alloc_hz: alloc,
            });
        }
        let done: Vec<&Outcome> = outcomes.iter().flatten().map(|o| &o[p_idx]).collect();
        summaries.push(PolicySummary {
            policy,
            samples: done.len(),
            mean_normalized: mean(done.iter().map(|o| o.normalized)),
            mean_sum_rate_bps: mean(done.iter().map(|o| o.rate_bps)),
            mean_secrecy_rate_evals: mean(done.iter().map(|o| o.ops.secrecy_rate_evals as f64)),
            mean_multiplications: mean(done.iter().map(|o| o.ops.multiplications as f64)),
            mean_total_ops_reference_omega: mean(done.iter().map(|o| o.ops.total(REFERENCE_OMEGA) as f64)),
            budget_violations: done.iter().filter(|o| !o.feasible).count(),
            rate_violations: done.iter().map(|o| o.rate_violations).sum(),
        });
    }

    let rows_path = paths.out("evaluate_samples.csv");
    let summary_path = paths.out("evaluate_summary.csv");
    write_csv(&rows_path, &rows)?;
    write_csv(&summary_path, &summaries.iter().map(SummaryRow::from).collect::<Vec<_>>())?;
    let inputs = [data_path, paths.model(TrainMode::Sl), paths.model(TrainMode::Usl)];
    write_meta(paths, "evaluate", cfg, BTreeMap::new(), &inputs, &[rows_path, summary_path])?;
    Ok(EvalSummary {
        test_samples: ds.records.len(),
        empty_schedules: outcomes.iter().filter(|o| o.is_none()).count(),
        policies: summaries,
    })
}

#[derive(Serialize)]
struct SummaryRow {
    policy: &'static str,
    samples: usize,
    mean_normalized: f64,
    mean_sum_rate_bps: f64,
    mean_secrecy_rate_evals: f64,
    mean_multiplications: f64,
    mean_total_ops_reference_omega: f64,
    budget_violations: usize,
    rate_violations: usize,
}

impl From<&PolicySummary> for SummaryRow {
    fn from(s: &PolicySummary) -> Self {
        SummaryRow {
            policy: s.policy.as_str(),
            samples: s.samples,
            mean_normalized: s.mean_normalized,
            mean_sum_rate_bps: s.mean_sum_rate_bps,
            mean_secrecy_rate_evals: s.mean_secrecy_rate_evals,
            mean_multiplications: s.mean_multiplications,
            mean_total_ops_reference_omega: s.mean_total_ops_reference_omega,
            budget_violations: s.budget_violations,
            rate_violations: s.rate_violations,
        }
    }
}

// ---------------------------------------------------------------- sweep-dw

#[derive(Debug, Clone, Serialize)]
pub struct DwPoint {
    pub policy: Policy,
    pub delta_w_hz: f64,
    pub samples: usize,
    pub mean_sum_rate_bps: f64,
    pub mean_normalized: f64,
    pub mean_secrecy_rate_evals: f64,
    pub mean_total_ops_reference_omega: f64,
    /// Mean of the closed-form cost at the reference evaluation cost.
    pub mean_formula_ops: f64,
    /// Samples whose counted cost exceeds the closed form.
    pub formula_exceeded: usize,
}

pub fn sweep_dw(cfg: &ExperimentConfig, paths: &Paths) -> Result<Vec<DwPoint>> {
    cfg.validate()?;
    fs::create_dir_all(&paths.out_dir)?;
    let data_path = paths.data(Split::Test);
    let ds = load_dataset(&data_path, cfg)?;
    let params = ds.header.params;
    let usl_path = paths.model(TrainMode::Usl);
    let usl = load_model(&usl_path, &params)?;
    let live: Vec<_> = ds.records.iter().filter(|r| !r.sched.is_empty()).collect();
    let omega = REFERENCE_OMEGA as f64;

    let mut grid: Vec<(Policy, f64)> = cfg.eval.sweep_delta_w_mhz.iter().map(|&m| (Policy::Ivs, m * 1e6)).collect();
    grid.push((Policy::GnnUsl, cfg.label_delta_w_hz()));

    let mut points = Vec::new();
    for (policy, dw) in grid {
        let knobs = RunKnobs {
            delta_w_hz: dw,
            bec_rule: cfg.eval.bec_rule,
            model: Some(&usl),
        };
        let per: Vec<(f64, f64, OpCount, f64)> = live
            .par_iter()
            .map(|r| {
                let chs = r.sched.channels(&r.sample)?;
                let (alloc, ops) = counted_run_on(policy, &r.sched, &chs, &params, knobs)?;
                let (rate, _) = score(&alloc, &r.sched, &r.sample, &params)?;
                let bound =
                    complexity_formula(policy, r.sched.k(), dw, r.sched.surplus_hz(), &LAYER_WIDTHS, omega)?;
                Ok((rate, ratio(rate, r.reference_rate_bps), ops, bound))
            })
            .collect::<Result<_>>()?;
        points.push(DwPoint {
            policy,
            delta_w_hz: dw,
            samples: per.len(),
            mean_sum_rate_bps: mean(per.iter().map(|p| p.0)),
            mean_normalized: mean(per.iter().map(|p| p.1)),
            mean_secrecy_rate_evals: mean(per.iter().map(|p| p.2.secrecy_rate_evals as f64)),
            mean_total_ops_reference_omega: mean(per.iter().map(|p| p.2.total(REFERENCE_OMEGA) as f64)),
            mean_formula_ops: mean(per.iter().map(|p| p.3)),
            formula_exceeded: per
                .iter()
                .filter(|p| p.2.total(REFERENCE_OMEGA) as f64 > p.3 * (1.0 + 1e-12))
                .count(),
        });
    }

    #[derive(Serialize)]
    struct Row {
        policy: &'static str,
        delta_w_mhz: f64,
        samples: usize,
        mean_sum_rate_bps: f64,
        mean_normalized: f64,
        mean_secrecy_rate_evals: f64,
        mean_total_ops_reference_omega: f64,
        mean_formula_ops: f64,
        formula_exceeded: usize,
    }
    let rows: Vec<Row> = points
        .iter()
        .map(|p| Row {
            policy: p.policy.as_str(),
            delta_w_mhz: p.delta_w_hz / 1e6,
            samples: p.samples,
            mean_sum_rate_bps: p.mean_sum_rate_bps,
            mean_normalized: p.mean_normalized,
            mean_secrecy_rate_evals: p.mean_secrecy_rate_evals,
            mean_total_ops_reference_omega: p.mean_total_ops_reference_omega,
            mean_formula_ops: p.mean_formula_ops,
            formula_exceeded: p.formula_exceeded,
        })
        .collect();
    let out = paths.out("sweep_dw.csv");
    write_csv(&out, &rows)?;
    write_meta(paths, "sweep-dw", cfg, BTreeMap::new(), &[data_path, usl_path], &[out])?;
    Ok(points)
}

// ------------------------------------------------------- sweep-uncertainty

#[derive(Debug, Clone, Serialize)]
pub struct UncertaintyPoint {
    pub fraction: f64,
    pub policy: Policy,
    pub samples: usize,
    pub mean_normalized: f64,
    pub mean_sum_rate_bps: f64,
    /// Scheduled users whose true secrecy rate ends up under the threshold.
    pub rate_violations: usize,
}

/// Perturbed copy of every eavesdropper link, as seen by the allocators.
/// Each user's perturbation direction is fixed across fractions, so the
/// curves differ only through the error size.
pub fn believed_sample(truth: &ChannelSample, fraction: f64, sample_seed: u64) -> Result<ChannelSample> {
    let users = truth
        .users
        .iter()
        .enumerate()
        .map(|(i, ch)| perturb_eve_csi(ch, fraction, derive_seed(sample_seed, "eve-csi", i as u64)))
        .collect::<Result<Vec<_>>>()?;
    ChannelSample::new(users)
}

/// The admitted set and the per-user floors come from the true channels;
/// the allocators then split the surplus using the perturbed eavesdropper
/// links, and the result is scored on the true ones.
pub fn sweep_uncertainty(cfg: &ExperimentConfig, paths: &Paths) -> Result<Vec<UncertaintyPoint>> {
    cfg.validate()?;
    fs::create_dir_all(&paths.out_dir)?;
    let data_path = paths.data(Split::Test);
    let ds = load_dataset(&data_path, cfg)?;
    let params = ds.header.params;
    let mut store = Vec::new();
    let policies = load_models(paths, &params, &mut store)?;
    let live: Vec<_> = ds.records.iter().filter(|r| !r.sched.is_empty()).collect();

    let mut points = Vec::new();
    for &frac in &cfg.eval.uncertainty_fractions {
        // per record: (rate, normalized, violations) for each policy
        let per: Vec<Vec<(f64, f64, usize)>> = live
            .par_iter()
            .map(|r| {
                let believed = believed_sample(&r.sample, frac, r.sample_seed)?;
                let outs =
                    run_policies(&policies, &r.sched, &believed, &r.sample, r.reference_rate_bps, &params, cfg)?;
                Ok(outs.iter().map(|o| (o.rate_bps, o.normalized, o.rate_violations)).collect())
            })
            .collect::<Result<_>>()?;
        for (p_idx, &(policy, _)) in policies.iter().enumerate() {
            points.push(UncertaintyPoint {
                fraction: frac,
                policy,
                samples: per.len(),
                mean_normalized: mean(per.iter().map(|v| v[p_idx].1)),
                mean_sum_rate_bps: mean(per.iter().map(|v| v[p_idx].0)),
                rate_violations: per.iter().map(|v| v[p_idx].2).sum(),
            });
        }
    }

    #[derive(Serialize)]
    struct Row {
        uncertainty: f64,
        policy: &'static str,
        samples: usize,
        mean_normalized: f64,
        mean_sum_rate_bps: f64,
        rate_violations: usize,
    }
    let rows: Vec<Row> = points
        .iter()
        .map(|p| Row {
            uncertainty: p.fraction,
            policy: p.policy.as_str(),
            samples: p.samples,
            mean_normalized: p.mean_normalized,
            mean_sum_rate_bps: p.mean_sum_rate_bps,
            rate_violations: p.rate_violations,
        })
        .collect();
    let out = paths.out("sweep_uncertainty.csv");
    write_csv(&out, &rows)?;
    let inputs = [data_path, paths.model(TrainMode::Sl), paths.model(TrainMode::Usl)];
    write_meta(paths, "sweep-uncertainty", cfg, BTreeMap::new(), &inputs, &[out])?;
    Ok(points)
}

// ---------------------------------------------------------------- validate

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub checked: Vec<String>,
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Checks whatever artifacts exist: datasets are re-derived from their
/// channels, checkpoints are loaded against the configuration, and every
/// allocator's output on the test set is checked for feasibility.
pub fn validate(cfg: &ExperimentConfig, paths: &Paths) -> Result<ValidationReport> {
    let mut rep = ValidationReport::default();
    cfg.validate()?;
    rep.checked.push("config".into());
    let params = cfg.system_params()?;

    let mut models = Vec::new();
    for mode in [TrainMode::Sl, TrainMode::Usl] {
        let p = paths.model(mode);
        if !p.exists() {
            continue;
        }
        rep.checked.push(p.display().to_string());
        match load_model(&p, &params) {
            Ok(m) => models.push((policy_of(mode), m)),
            Err(e) => rep.issues.push(format!("{}: {e}", p.display())),
        }
    }

    for split in [Split::Train, Split::Test] {
        let p = paths.data(split);
        if !p.exists() {
            continue;
        }
        rep.checked.push(p.display().to_string());
        let ds = match load_dataset(&p, cfg) {
            Ok(ds) => ds,
            Err(e) => {
                rep.issues.push(format!("{}: {e}", p.display()));
                continue;
            }
        };
        rep.issues
            .extend(ds.validate().into_iter().map(|m| format!("{}: {m}", p.display())));
        if split != Split::Test {
            continue;
        }
        let mut policies: Vec<(Policy, Option<&FnnParams>)> = vec![(Policy::Ivs, None), (Policy::Bec, None)];
        policies.extend(models.iter().map(|(pol, m)| (*pol, Some(m))));
        for (n, r) in ds.records.iter().enumerate().filter(|(_, r)| !r.sched.is_empty()) {
            let outs = run_policies(&policies, &r.sched, &r.sample, &r.sample, r.reference_rate_bps, &params, cfg)?;
            for (o, (pol, _)) in outs.iter().zip(&policies) {
                if !o.feasible {
                    rep.issues.push(format!("test record {n}: {pol} allocation is infeasible"));
                }
                if o.rate_violations > 0 {
                    rep.issues.push(format!("test record {n}: {pol} leaves a user under the threshold"));
                }
            }
        }
    }
    Ok(rep)
}

//! Seeded multi-trial experiments: config parsing, learners, oracle scoring,
//! CSV output and pass-rate aggregation.
//!
//! Trials run in parallel but each one is sequential and owns its sampler,
//! so records depend only on the config and the trial index.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::bpi::{bpi, BpiConfig, BpiError, DevConstants};
use crate::format::{parse_ssp, FormatError};
use crate::instances::{generate, InstanceError, InstanceSpec};
use crate::keyvalue::{KvDoc, KvError};
use crate::mdp::SspMdp;
use crate::oracle::{self, check_against, CheckMode, OracleError};
use crate::policy::{Policy, StationaryPolicy};
use crate::sampling::{GenerativeSampler, OnlineEnv};
use crate::search_horizon::{search_horizon, ScheduleConstants, SearchConfig, SearchError, SearchVerdict};

/// Two-sided 95% normal quantile.
pub const WILSON_Z: f64 = 1.959963984540054;

pub const CSV_HEADER: [&str; 8] = ["trial", "seed", "epsilon", "samples", "verdict", "gap", "pass", "wall_ms"];

/// Redirects relative output paths.
pub const OUT_DIR_ENV: &str = "SSP_LAB_OUT_DIR";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("learner failed: {0}")]
    Learner(String),
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    SearchHorizon,
    Bpi,
    /// Returns `π*` without sampling.
    OptimalStub,
    /// Returns the uniform stochastic policy without sampling.
    UniformStub,
}

impl std::str::FromStr for Algorithm {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s {
            "search-horizon" => Ok(Algorithm::SearchHorizon),
            "bpi" => Ok(Algorithm::Bpi),
            "optimal-stub" => Ok(Algorithm::OptimalStub),
            "uniform-stub" => Ok(Algorithm::UniformStub),
            _ => Err(HarnessError::Config(format!("unknown algorithm `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSource {
    File(PathBuf),
    Generator(InstanceSpec),
}

impl InstanceSource {
    pub fn load(&self) -> Result<SspMdp, HarnessError> {
        match self {
            InstanceSource::File(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| HarnessError::Io(format!("{}: {e}", p.display())))?;
                Ok(parse_ssp(&text)?)
            }
            InstanceSource::Generator(spec) => Ok(generate(spec)?.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub instance: InstanceSource,
    pub epsilons: Vec<f64>,
    pub delta: f64,
    /// `T` of the search; `INFINITY` when absent.
    pub horizon_bound: f64,
    pub trials: usize,
    pub base_seed: u64,
    pub schedule: ScheduleConstants,
    pub dev: DevConstants,
    pub budget_cap: Option<u64>,
    pub max_horizon: usize,
    pub check_mode: CheckMode,
    pub output: Option<PathBuf>,
    pub record_wall_time: bool,
}

fn fixed<const N: usize>(doc: &KvDoc, key: &str, default: [f64; N]) -> Result<[f64; N], HarnessError> {
    match doc.list::<f64>(key)? {
        None => Ok(default),
        Some(v) => v
            .try_into()
            .map_err(|v: Vec<f64>| HarnessError::Config(format!("`{key}` needs {N} values, got {}", v.len()))),
    }
}

impl ExperimentConfig {
    /// Relative instance paths resolve against `base`.
    pub fn from_kv(doc: &KvDoc, base: &Path) -> Result<Self, HarnessError> {
        let algorithm: Algorithm = doc.require("algorithm")?.parse()?;
        let instance = match doc.get("instance_file") {
            Some(f) => InstanceSource::File(base.join(f)),
            None => {
                let mut sub = KvDoc::new();
                for (k, v) in doc.entries() {
                    if let Some(rest) = k.strip_prefix("instance.") {
                        sub.push(rest, v);
                    }
                }
                if sub.entries().is_empty() {
                    return Err(HarnessError::Config("need `instance_file` or `instance.*` keys".into()));
                }
                InstanceSource::Generator(InstanceSpec::from_kv(&sub)?)
            }
        };
        let check_mode = match doc.get("check_mode") {
            None => match algorithm {
                Algorithm::Bpi => CheckMode::InitState,
                _ => CheckMode::AllStates,
            },
            Some("all-states") => CheckMode::AllStates,
            Some("init-state") => CheckMode::InitState,
            Some(other) => return Err(HarnessError::Config(format!("unknown check_mode `{other}`"))),
        };
        let schedule = ScheduleConstants {
            k_star: fixed(doc, "k_star", ScheduleConstants::default().k_star)?,
            k_hat: fixed(doc, "k_hat", ScheduleConstants::default().k_hat)?,
        };
        let cfg = ExperimentConfig {
            algorithm,
            instance,
            epsilons: doc.list("epsilon")?.ok_or_else(|| KvError::Missing("epsilon".into()))?,
            delta: doc.required("delta")?,
            horizon_bound: doc.parsed("horizon_bound")?.unwrap_or(f64::INFINITY),
            trials: doc.required("trials")?,
            base_seed: doc.parsed("base_seed")?.unwrap_or(0),
            schedule,
            dev: DevConstants { k: fixed(doc, "dev_k", DevConstants::default().k)? },
            budget_cap: doc.parsed("budget_cap")?,
            max_horizon: doc.parsed("max_horizon")?.unwrap_or(10_000_000),
            check_mode,
            output: doc.get("output").map(PathBuf::from),
            record_wall_time: doc.parsed("record_wall_time")?.unwrap_or(false),
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        ExperimentConfig::from_kv(&KvDoc::parse(&text)?, base)
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        if self.epsilons.is_empty() || self.epsilons.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(HarnessError::Config("epsilon grid must be non-empty and strictly positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(HarnessError::Config("delta must lie in (0,1)".into()));
        }
        if !(self.horizon_bound > 0.0) {
            return Err(HarnessError::Config("horizon_bound must be positive".into()));
        }
        Ok(())
    }

    pub fn seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }

    /// `output`, moved under `$SSP_LAB_OUT_DIR` when it is relative and the
    /// variable is set.
    pub fn output_path(&self) -> Option<PathBuf> {
        let out = self.output.as_ref()?;
        match std::env::var_os(OUT_DIR_ENV) {
            Some(dir) if out.is_relative() => Some(PathBuf::from(dir).join(out)),
            _ => Some(out.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Policy,
    TLessThanD,
    BudgetAbort,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Policy => "policy",
            Verdict::TLessThanD => "t-less-than-d",
            Verdict::BudgetAbort => "budget-abort",
        }
    }
}

#[derive(Debug, Clone)]
pub struct LearnOutcome {
    pub verdict: Verdict,
    pub policy: Option<Policy>,
    pub samples: u64,
}

pub trait Learner: Sync {
    fn learn(&self, mdp: &SspMdp, epsilon: f64, seed: u64) -> Result<LearnOutcome, HarnessError>;
}

pub struct SearchHorizonLearner {
    pub delta: f64,
    pub horizon_bound: f64,
    pub schedule: ScheduleConstants,
    pub budget_cap: Option<u64>,
    pub max_horizon: usize,
}

impl Learner for SearchHorizonLearner {
    fn learn(&self, mdp: &SspMdp, epsilon: f64, seed: u64) -> Result<LearnOutcome, HarnessError> {
        let mut sampler = GenerativeSampler::new(mdp, seed);
        let mut cfg = SearchConfig::new(self.horizon_bound, epsilon, self.delta);
        cfg.schedule = self.schedule;
        cfg.budget_cap = self.budget_cap;
        cfg.max_horizon = self.max_horizon;
        match search_horizon(&mut sampler, &cfg) {
            Ok(out) => Ok(LearnOutcome {
                verdict: match out.verdict {
                    SearchVerdict::Policy => Verdict::Policy,
                    SearchVerdict::TLessThanD => Verdict::TLessThanD,
                },
                policy: out.policy.map(Policy::Periodic),
                samples: out.samples_used,
            }),
            Err(SearchError::BudgetExceeded { used, .. }) => {
                Ok(LearnOutcome { verdict: Verdict::BudgetAbort, policy: None, samples: used })
            }
            Err(e) => Err(HarnessError::Learner(e.to_string())),
        }
    }
}

pub struct BpiLearner {
    pub delta: f64,
    pub dev: DevConstants,
    pub budget_cap: Option<u64>,
}

impl Learner for BpiLearner {
    fn learn(&self, mdp: &SspMdp, epsilon: f64, seed: u64) -> Result<LearnOutcome, HarnessError> {
        let mut env = OnlineEnv::new(mdp, seed);
        let mut cfg = BpiConfig::for_mdp(mdp, epsilon, self.delta).map_err(|e| HarnessError::Learner(e.to_string()))?;
        cfg.dev = self.dev;
        cfg.budget_cap = self.budget_cap;
        match bpi(&mut env, &cfg) {
            Ok(out) => Ok(LearnOutcome {
                verdict: Verdict::Policy,
                policy: Some(Policy::Periodic(out.policy)),
                samples: out.samples_used,
            }),
            Err(BpiError::BudgetExceeded { used, .. }) => {
                Ok(LearnOutcome { verdict: Verdict::BudgetAbort, policy: None, samples: used })
            }
            Err(e) => Err(HarnessError::Learner(e.to_string())),
        }
    }
}

pub struct OptimalStub;

impl Learner for OptimalStub {
    fn learn(&self, mdp: &SspMdp, _: f64, _: u64) -> Result<LearnOutcome, HarnessError> {
        let sol = oracle::ssp_value_iteration(mdp, Default::default())?;
        Ok(LearnOutcome { verdict: Verdict::Policy, policy: Some(Policy::Stationary(sol.stationary())), samples: 0 })
    }
}

pub struct UniformStub;

impl Learner for UniformStub {
    fn learn(&self, mdp: &SspMdp, _: f64, _: u64) -> Result<LearnOutcome, HarnessError> {
        let a = mdp.n_actions();
        let p = StationaryPolicy::stochastic(vec![vec![1.0 / a as f64; a]; mdp.n_states()])
            .map_err(|e| HarnessError::Learner(e.to_string()))?;
        Ok(LearnOutcome { verdict: Verdict::Policy, policy: Some(Policy::Stationary(p)), samples: 0 })
    }
}

impl ExperimentConfig {
    pub fn learner(&self) -> Box<dyn Learner> {
        match self.algorithm {
            Algorithm::SearchHorizon => Box::new(SearchHorizonLearner {
                delta: self.delta,
                horizon_bound: self.horizon_bound,
                schedule: self.schedule,
                budget_cap: self.budget_cap,
                max_horizon: self.max_horizon,
            }),
            Algorithm::Bpi => Box::new(BpiLearner { delta: self.delta, dev: self.dev, budget_cap: self.budget_cap }),
            Algorithm::OptimalStub => Box::new(OptimalStub),
            Algorithm::UniformStub => Box::new(UniformStub),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub samples: u64,
    pub verdict: String,
    /// `V^π - V*` over the checked states; `NaN` when no policy came back.
    pub gap: f64,
    pub pass: bool,
    pub wall_ms: u64,
}

/// Oracle quantities shared by every trial.
#[derive(Debug, Clone)]
pub struct Scorer {
    pub v_star: Vec<f64>,
    pub diameter: f64,
    pub horizon_bound: f64,
    pub mode: CheckMode,
}

impl Scorer {
    pub fn new(mdp: &SspMdp, horizon_bound: f64, mode: CheckMode) -> Result<Self, HarnessError> {
        let sol = oracle::ssp_value_iteration(mdp, Default::default())?;
        let diameter = oracle::diameter(mdp)?;
        Ok(Scorer { v_star: sol.values, diameter, horizon_bound, mode })
    }

    /// `(gap, pass)`.
    ///
    /// When `D > T` no policy meets the hitting-time bound, so either verdict
    /// is correct. Otherwise the T<D claim is wrong, and a returned policy is
    /// checked against the unrestricted `V*`, which is conservative when
    /// `T < T*`.
    pub fn score(&self, mdp: &SspMdp, out: &LearnOutcome, epsilon: f64) -> Result<(f64, bool), HarnessError> {
        let vacuous = self.diameter > self.horizon_bound;
        let gap = match &out.policy {
            Some(p) => check_against(mdp, &self.v_star, p, epsilon, self.mode)?.gap,
            None => f64::NAN,
        };
        let pass = match out.verdict {
            Verdict::BudgetAbort => false,
            Verdict::TLessThanD => vacuous,
            Verdict::Policy => vacuous || gap <= epsilon + oracle::VERDICT_TOL,
        };
        Ok((gap, pass))
    }
}

pub fn run_trial(
    learner: &dyn Learner,
    scorer: &Scorer,
    mdp: &SspMdp,
    epsilon: f64,
    trial: usize,
    seed: u64,
    wall: bool,
) -> Result<TrialRecord, HarnessError> {
    let start = Instant::now();
    let out = learner.learn(mdp, epsilon, seed)?;
    let wall_ms = if wall { start.elapsed().as_millis() as u64 } else { 0 };
    let (gap, pass) = scorer.score(mdp, &out, epsilon)?;
    Ok(TrialRecord { trial, seed, epsilon, samples: out.samples, verdict: out.verdict.as_str().into(), gap, pass, wall_ms })
}

/// Rows are ordered by `(epsilon, trial)` whatever the execution order.
pub fn run_trials(config: &ExperimentConfig) -> Result<(Vec<TrialRecord>, Vec<Summary>), HarnessError> {
    config.check()?;
    let mdp = config.instance.load()?;
    let scorer = Scorer::new(&mdp, config.horizon_bound, config.check_mode)?;
    let learner = config.learner();
    let jobs: Vec<(f64, usize)> =
        config.epsilons.iter().flat_map(|&e| (0..config.trials).map(move |t| (e, t))).collect();
    let records = jobs
        .par_iter()
        .map(|&(e, t)| run_trial(learner.as_ref(), &scorer, &mdp, e, t, config.seed(t), config.record_wall_time))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(&records);
    Ok((records, summary))
}

pub fn write_csv<W: std::io::Write>(records: &[TrialRecord], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record([
            r.trial.to_string(),
            r.seed.to_string(),
            r.epsilon.to_string(),
            r.samples.to_string(),
            r.verdict.clone(),
            r.gap.to_string(),
            r.pass.to_string(),
            r.wall_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<TrialRecord>, HarnessError> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    if header != CSV_HEADER {
        return Err(HarnessError::Csv(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let row = row?;
        let field = |k: usize| -> Result<&str, HarnessError> {
            row.get(k).ok_or_else(|| HarnessError::Csv(format!("row {}: missing column {}", i + 1, CSV_HEADER[k])))
        };
        let bad = |k: usize| HarnessError::Csv(format!("row {}: bad {}", i + 1, CSV_HEADER[k]));
        out.push(TrialRecord {
            trial: field(0)?.parse().map_err(|_| bad(0))?,
            seed: field(1)?.parse().map_err(|_| bad(1))?,
            epsilon: field(2)?.parse().map_err(|_| bad(2))?,
            samples: field(3)?.parse().map_err(|_| bad(3))?,
            verdict: field(4)?.to_string(),
            gap: field(5)?.parse().map_err(|_| bad(5))?,
            pass: field(6)?.parse().map_err(|_| bad(6))?,
            wall_ms: field(7)?.parse().map_err(|_| bad(7))?,
        });
    }
    Ok(out)
}

/// 95% Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (n, z2) = (n as f64, WILSON_Z * WILSON_Z);
    let p = k as f64 / n;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub epsilon: f64,
    pub trials: usize,
    pub passes: usize,
    pub pass_rate: f64,
    pub wilson: (f64, f64),
    pub mean_samples: f64,
    pub max_samples: u64,
}

/// One summary per distinct epsilon, in first-seen order.
pub fn summarize(records: &[TrialRecord]) -> Vec<Summary> {
    let mut eps: Vec<f64> = Vec::new();
    for r in records {
        if !eps.iter().any(|&e| e == r.epsilon) {
            eps.push(r.epsilon);
        }
    }
    eps.into_iter()
        .map(|e| {
            let rows: Vec<&TrialRecord> = records.iter().filter(|r| r.epsilon == e).collect();
            let n = rows.len();
            let passes = rows.iter().filter(|r| r.pass).count();
            Summary {
                epsilon: e,
                trials: n,
                passes,
                pass_rate: passes as f64 / n as f64,
                wilson: wilson_interval(passes, n),
                mean_samples: rows.iter().map(|r| r.samples as f64).sum::<f64>() / n as f64,
                max_samples: rows.iter().map(|r| r.samples).max().unwrap_or(0),
            }
        })
        .collect()
}

pub fn render_summary(summary: &[Summary]) -> String {
    let mut s = String::from("epsilon,trials,passes,pass_rate,wilson_lo,wilson_hi,mean_samples,max_samples\n");
    for m in summary {
        s.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{},{}\n",
            m.epsilon, m.trials, m.passes, m.pass_rate, m.wilson.0, m.wilson.1, m.mean_samples, m.max_samples
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_known_values() {
        let (lo, hi) = wilson_interval(50, 50);
        assert!((hi - 1.0).abs() < 1e-12);
        assert!((lo - 0.928652).abs() < 1e-5);
        let (lo, hi) = wilson_interval(5, 10);
        assert!((lo - 0.236593).abs() < 1e-5 && (hi - 0.763407).abs() < 1e-5);
        assert_eq!(wilson_interval(0, 0), (0.0, 1.0));
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![
            TrialRecord { trial: 0, seed: 7, epsilon: 0.2, samples: 10, verdict: "policy".into(), gap: 0.01, pass: true, wall_ms: 0 },
            TrialRecord { trial: 1, seed: 8, epsilon: 0.2, samples: 3, verdict: "t-less-than-d".into(), gap: f64::NAN, pass: false, wall_ms: 0 },
        ];
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("trial,seed,epsilon,samples,verdict,gap,pass,wall_ms\n"));
        let back = read_csv(text.as_bytes()).unwrap();
        assert_eq!(back[0], recs[0]);
        assert!(back[1].gap.is_nan());
    }

    #[test]
    fn config_parsing() {
        let doc = KvDoc::parse(
            "algorithm = search-horizon\ninstance.family = zero-cmin\ninstance.variant = M0\ninstance.n = 2\n\
             epsilon = 0.2, 0.1\ndelta = 0.1\nhorizon_bound = 20\ntrials = 3\nbase_seed = 100\nk_hat = 1, 1\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::from_kv(&doc, Path::new(".")).unwrap();
        assert_eq!(cfg.epsilons, vec![0.2, 0.1]);
        assert_eq!(cfg.schedule.k_hat, [1.0, 1.0]);
        assert_eq!(cfg.seed(2), 102);
        assert_eq!(cfg.check_mode, CheckMode::AllStates);
        let bad = KvDoc::parse("algorithm = bpi\ninstance_file = x.ssp\nepsilon = 0.1\ndelta = 0.1\ntrials = 0\n").unwrap();
        assert!(ExperimentConfig::from_kv(&bad, Path::new(".")).is_err());
    }
}

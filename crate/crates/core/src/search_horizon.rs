//! Search-Horizon: PAC learning with a generative model.
//!
//! Doubles `B_i = 2^i` until an LCBVI estimate with coarse sample counts
//! passes the stop test, then solves once more with fine counts and returns
//! the periodic extension of the finite-horizon policy.

use thiserror::Error;

use crate::lcbvi::{lcbvi, LcbviError, LcbviInput};
use crate::mdp::MdpError;
use crate::policy::{make_periodic, PeriodicPolicy};
use crate::sampling::GenerativeSampler;

/// Slack on the stop-test comparisons.
pub const STOP_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("c_min = 0 with unbounded T leaves the horizon undefined")]
    UnboundedHorizon,
    #[error("horizon {horizon} exceeds the cap {cap}")]
    HorizonTooLarge { horizon: u64, cap: usize },
    #[error("sample budget exceeded: {used} used, {requested} more requested, cap {cap}")]
    BudgetExceeded { used: u64, requested: u64, cap: u64 },
    #[error(transparent)]
    Lcbvi(#[from] LcbviError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Multipliers of the polynomial terms in the sample schedules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConstants {
    /// `(k1, k2, k3)` of `N*`.
    pub k_star: [f64; 3],
    /// `(k1, k2)` of `N̂`.
    pub k_hat: [f64; 2],
}

impl Default for ScheduleConstants {
    fn default() -> Self {
        ScheduleConstants { k_star: [2.0, 1.0, 1.0], k_hat: [2.0, 1.0] }
    }
}

/// Ceiling that ignores float noise just above an integer.
pub(crate) fn count_ceil(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

/// `ceil(k1 B²H L/ε² + k2 S B H L/ε + k3 S H² L)` with `L = ln(1/δ)`.
pub fn n_star(b: f64, h: usize, eps: f64, delta: f64, s: usize, k: &[f64; 3]) -> u64 {
    let (h, s, l) = (h as f64, s as f64, -delta.ln());
    count_ceil(k[0] * b * b * h * l / (eps * eps) + k[1] * s * b * h * l / eps + k[2] * s * h * h * l)
}

/// `ceil(k1 B² S H L/ε² + k2 S B H L/ε)` with `L = ln(1/δ)`.
pub fn n_hat(b: f64, h: usize, eps: f64, delta: f64, s: usize, k: &[f64; 2]) -> u64 {
    let (h, s, l) = (h as f64, s as f64, -delta.ln());
    count_ceil(k[0] * b * b * s * h * l / (eps * eps) + k[1] * s * b * h * l / eps)
}

/// `H_i = ceil(4 min{B/c_min, T} ln(48 B/ε))`, at least 1.
pub fn horizon_for(b: f64, c_min: f64, t: f64, eps: f64) -> f64 {
    let scale = if c_min > 0.0 { (b / c_min).min(t) } else { t };
    (4.0 * scale * (48.0 * b / eps).ln()).ceil().max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Hitting-time bound `T`; `f64::INFINITY` for none.
    pub horizon_bound: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub schedule: ScheduleConstants,
    pub budget_cap: Option<u64>,
    pub max_horizon: usize,
}

impl SearchConfig {
    pub fn new(horizon_bound: f64, epsilon: f64, delta: f64) -> Self {
        SearchConfig {
            horizon_bound,
            epsilon,
            delta,
            schedule: ScheduleConstants::default(),
            budget_cap: None,
            max_horizon: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchVerdict {
    Policy,
    TLessThanD,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchIteration {
    pub i: u32,
    pub b: f64,
    pub horizon: usize,
    pub samples_per_pair: u64,
    pub v1_norm: f64,
    pub vmax_norm: f64,
    pub broke: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub verdict: SearchVerdict,
    /// Periodic extension carrying `c_{f,i}` as its terminal cost.
    pub policy: Option<PeriodicPolicy>,
    pub samples_used: u64,
    pub trace: Vec<SearchIteration>,
    /// `N*` of the final solve.
    pub fine_samples_per_pair: Option<u64>,
    /// `V̂_1` of the final solve (goal entry last).
    pub fine_v1: Option<Vec<f64>>,
}

fn charge(sampler: &GenerativeSampler<'_>, per_pair: u64, cap: Option<u64>) -> Result<(), SearchError> {
    let mdp = sampler.mdp();
    let requested = per_pair.saturating_mul((mdp.n_states() * mdp.n_actions()) as u64);
    if let Some(cap) = cap {
        let used = sampler.total_samples();
        if used.saturating_add(requested) > cap {
            return Err(SearchError::BudgetExceeded { used, requested, cap });
        }
    }
    Ok(())
}

pub fn search_horizon(sampler: &mut GenerativeSampler<'_>, config: &SearchConfig) -> Result<SearchOutcome, SearchError> {
    let mdp = sampler.mdp();
    let (ns, t, eps, delta) = (mdp.n_states(), config.horizon_bound, config.epsilon, config.delta);
    if !(t >= 1.0) {
        return Err(SearchError::Config("T must be at least 1".into()));
    }
    if !(eps > 0.0 && eps < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(SearchError::Config("epsilon and delta must lie in (0,1)".into()));
    }
    if mdp.c_min() <= 0.0 && t.is_infinite() {
        return Err(SearchError::UnboundedHorizon);
    }
    let k = config.schedule;
    if k.k_star.iter().chain(&k.k_hat).any(|&x| !(x > 0.0)) {
        return Err(SearchError::Config("schedule constants must be positive".into()));
    }
    let start = sampler.total_samples();
    let mut trace = Vec::new();
    let mut i: u32 = 1;
    loop {
        let b = 2f64.powi(i as i32);
        let hz = horizon_for(b, mdp.c_min(), t, eps);
        if hz > config.max_horizon as f64 {
            return Err(SearchError::HorizonTooLarge { horizon: hz as u64, cap: config.max_horizon });
        }
        let hz = hz as usize;
        let mut cf = vec![0.6 * b; ns + 1];
        cf[ns] = 0.0;
        let delta_i = delta / (40.0 * f64::from(i) * f64::from(i));
        let n = n_hat(b, hz, 0.1 * b, delta_i, ns, &k.k_hat);
        charge(sampler, n, config.budget_cap)?;
        let counts = sampler.gen_batch(n);
        let out =
            lcbvi(&LcbviInput { mdp, counts: &counts, horizon: hz, value_bound: b, terminal_cost: &cf, delta: delta_i })?;
        let v1_norm = out.values.max_norm(1);
        let vmax_norm = (1..=hz + 1).map(|h| out.values.max_norm(h)).fold(0.0, f64::max);
        let broke = v1_norm <= 0.1 * b + STOP_SLACK && vmax_norm <= 0.7 * b + STOP_SLACK;
        trace.push(SearchIteration { i, b, horizon: hz, samples_per_pair: n, v1_norm, vmax_norm, broke });
        if broke {
            let n_fine = n_star(b, hz, eps / 2.0, delta_i, ns, &k.k_star);
            charge(sampler, n_fine, config.budget_cap)?;
            let counts = sampler.gen_batch(n_fine);
            let out = lcbvi(&LcbviInput {
                mdp,
                counts: &counts,
                horizon: hz,
                value_bound: b,
                terminal_cost: &cf,
                delta: delta_i,
            })?;
            let policy = make_periodic(&out.policy, hz)?.with_terminal_cost(cf);
            return Ok(SearchOutcome {
                verdict: SearchVerdict::Policy,
                policy: Some(policy),
                samples_used: sampler.total_samples() - start,
                trace,
                fine_samples_per_pair: Some(n_fine),
                fine_v1: Some(out.values.v(1).to_vec()),
            });
        }
        i += 1;
        if 2f64.powi(i as i32) > 40.0 * t {
            return Ok(SearchOutcome {
                verdict: SearchVerdict::TLessThanD,
                policy: None,
                samples_used: sampler.total_samples() - start,
                trace,
                fine_samples_per_pair: None,
                fine_v1: None,
            });
        }
    }
}

//! BPI-SSP: best-policy identification from episodes started at `s_init`,
//! using the escape action `a†` to truncate episodes at the horizon.
//!
//! Each round recomputes an LCBVI policy from all counts collected so far,
//! then runs up to `λ` episodes with it. A round ends as a skip (some
//! `N(s,a)` reached a power of two), a failure (running cost estimate above
//! the optimistic value), or a success, which returns the policy.

use thiserror::Error;

use crate::lcbvi::{lcbvi, LcbviError, LcbviInput, LcbviOutput};
use crate::mdp::{MdpError, SspMdp};
use crate::policy::{make_periodic, PeriodicPolicy};
use crate::sampling::{CounterTable, OnlineEnv, SamplingError};
use crate::search_horizon::count_ceil;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BpiError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("escape-action assumption violated: {0}")]
    Assumption(String),
    #[error("sample budget exceeded: {used} steps, cap {cap}")]
    BudgetExceeded { used: u64, cap: u64 },
    #[error(transparent)]
    Lcbvi(#[from] LcbviError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Multipliers `(k1, k2)` of the episode schedule `N_Dev`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DevConstants {
    pub k: [f64; 2],
}

impl Default for DevConstants {
    fn default() -> Self {
        DevConstants { k: [2.0, 1.0] }
    }
}

/// `ceil(k1 B² L/ε² + k2 (H^1.5 + J² H^1.25) S A L/ε)` with `L = ln(1/δ)`.
#[allow(clippy::too_many_arguments)]
pub fn n_dev(b: f64, eps: f64, delta: f64, s: usize, a: usize, h: usize, j: f64, k: &DevConstants) -> u64 {
    let (h, sa, l) = (h as f64, (s * a) as f64, -delta.ln());
    count_ceil(k.k[0] * b * b * l / (eps * eps) + k.k[1] * (h.powf(1.5) + j * j * h.powf(1.25)) * sa * l / eps)
}

/// `ceil((32 J / c_min) ln(8 J / ε))`.
pub fn bpi_horizon(j: f64, c_min: f64, eps: f64) -> usize {
    ((32.0 * j / c_min) * (8.0 * j / eps).ln()).ceil().max(1.0) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpiConfig {
    pub epsilon: f64,
    pub delta: f64,
    /// Escape cost `J`.
    pub terminal_cost: f64,
    pub c_min: f64,
    pub dev: DevConstants,
    /// Cap on environment steps.
    pub budget_cap: Option<u64>,
}

impl BpiConfig {
    /// `J` and `c_min` taken from the model.
    pub fn for_mdp(mdp: &SspMdp, epsilon: f64, delta: f64) -> Result<Self, BpiError> {
        let t = mdp.terminal_action().ok_or_else(|| BpiError::Assumption("no terminal action declared".into()))?;
        Ok(BpiConfig {
            epsilon,
            delta,
            terminal_cost: t.cost,
            c_min: mdp.c_min(),
            dev: DevConstants::default(),
            budget_cap: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundKind {
    Skip,
    Failure,
    Success,
}

impl RoundKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RoundKind::Skip => "skip",
            RoundKind::Failure => "failure",
            RoundKind::Success => "success",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: u64,
    pub kind: RoundKind,
    /// `B` after the doubling loop, used for `λ`.
    pub b: f64,
    pub lambda: u64,
    /// Episodes finished and counted in `τ̂`.
    pub episodes: u64,
    pub tau_hat: f64,
    /// Sum of the counted episodes' costs.
    pub cost_sum: f64,
    pub v_init: f64,
    pub lcbvi_calls: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpiOutcome {
    /// `π^R` for steps `1..=H`, then `a†`.
    pub policy: PeriodicPolicy,
    pub horizon: usize,
    pub samples_used: u64,
    pub rounds: Vec<RoundRecord>,
    pub counts: CounterTable,
    /// Longest episode in steps, escape included.
    pub max_episode_len: u64,
}

impl BpiOutcome {
    pub fn skip_rounds(&self) -> usize {
        self.rounds.iter().filter(|r| r.kind == RoundKind::Skip).count()
    }
}

fn check(env: &OnlineEnv<'_>, config: &BpiConfig) -> Result<usize, BpiError> {
    let mdp = env.mdp();
    if !(config.epsilon > 0.0 && config.epsilon < 1.0) || !(config.delta > 0.0 && config.delta < 1.0) {
        return Err(BpiError::Config("epsilon and delta must lie in (0,1)".into()));
    }
    if !(config.c_min > 0.0) {
        return Err(BpiError::Config("c_min must be positive".into()));
    }
    if !(config.terminal_cost >= 1.0) {
        return Err(BpiError::Config("J must be at least 1".into()));
    }
    if config.dev.k.iter().any(|&x| !(x > 0.0)) {
        return Err(BpiError::Config("dev constants must be positive".into()));
    }
    let t = mdp.terminal_action().ok_or_else(|| BpiError::Assumption("no terminal action declared".into()))?;
    if t.cost != config.terminal_cost {
        return Err(BpiError::Assumption(format!("model charges {} for a†, config says {}", t.cost, config.terminal_cost)));
    }
    let report = mdp.validate();
    if let Some(v) = report.violations.first() {
        return Err(BpiError::Assumption(v.to_string()));
    }
    Ok(t.action)
}

pub fn bpi(env: &mut OnlineEnv<'_>, config: &BpiConfig) -> Result<BpiOutcome, BpiError> {
    let escape = check(env, config)?;
    let mdp = env.mdp();
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let (eps, delta, j) = (config.epsilon, config.delta, config.terminal_cost);
    let hz = bpi_horizon(j, config.c_min, eps);
    let mut cf = vec![j; ns + 1];
    cf[ns] = 0.0;
    let stop_stage = hz / 2 + 1;
    let start = env.total_samples();
    let mut counts = CounterTable::new(ns, na);
    let mut b: f64 = 1.0;
    let mut rounds = Vec::new();
    let mut max_episode_len = 0;
    let over_budget = |env: &OnlineEnv<'_>| match config.budget_cap {
        Some(cap) if env.total_samples() - start > cap => Err(BpiError::BudgetExceeded { used: env.total_samples() - start, cap }),
        _ => Ok(()),
    };
    for r in 1u64.. {
        let mut calls = 0;
        let out: LcbviOutput = loop {
            let out = lcbvi(&LcbviInput {
                mdp,
                counts: &counts,
                horizon: hz,
                value_bound: 2.0 * j,
                terminal_cost: &cf,
                delta: delta / (2.0 * b),
            })?;
            calls += 1;
            let m = (1..=stop_stage.min(hz + 1)).map(|h| out.values.max_norm(h)).fold(0.0, f64::max);
            if b >= m {
                break out;
            }
            b = 2.0 * m;
        };
        let v_init = out.values.v(1)[mdp.init_state()];
        let lambda = n_dev(b, eps / 4.0, delta / (2.0 * (r * r) as f64), ns, na, hz, j, &config.dev);
        let lf = lambda as f64;
        let table = out.policy.table();
        let mut tau_hat = 0.0;
        let mut cost_sum = 0.0;
        let mut episodes = 0;
        let mut kind = RoundKind::Success;
        'episodes: for _ in 0..lambda {
            let mut s = env.reset();
            let mut ep_cost = 0.0;
            let mut len = 0;
            for h in 1..=hz {
                let a = table[(h - 1) * ns + s];
                let st = env.step(a)?;
                len += 1;
                counts.record(s, a, st.next);
                ep_cost += st.cost;
                tau_hat += st.cost / lf;
                if counts.count(s, a).is_power_of_two() {
                    if !st.done {
                        env.step(escape)?;
                        len += 1;
                    }
                    max_episode_len = max_episode_len.max(len);
                    over_budget(env)?;
                    kind = RoundKind::Skip;
                    break 'episodes;
                }
                if st.done {
                    break;
                }
                s = st.next;
                if h == hz {
                    let esc = env.step(escape)?;
                    len += 1;
                    ep_cost += esc.cost;
                    tau_hat += esc.cost / lf;
                }
            }
            max_episode_len = max_episode_len.max(len);
            over_budget(env)?;
            episodes += 1;
            cost_sum += ep_cost;
            if tau_hat > v_init + eps / 2.0 {
                kind = RoundKind::Failure;
                break;
            }
        }
        rounds.push(RoundRecord { round: r, kind, b, lambda, episodes, tau_hat, cost_sum, v_init, lcbvi_calls: calls });
        if kind == RoundKind::Success {
            let policy = make_periodic(&out.policy, hz)?.with_overflow(escape);
            return Ok(BpiOutcome {
                policy,
                horizon: hz,
                samples_used: env.total_samples() - start,
                rounds,
                counts,
                max_episode_len,
            });
        }
    }
    unreachable!("round loop only exits by returning")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::SspBuilder;

    #[test]
    fn n_dev_examples() {
        let d = (-1f64).exp();
        let k = DevConstants { k: [1.0, 1.0] };
        assert_eq!(n_dev(2.0, 1.0, d, 1, 1, 1, 1.0, &k), 6);
        let first = DevConstants { k: [1.0, 1e-300] };
        assert_eq!(n_dev(4.0, 1.0, d, 1, 1, 1, 1.0, &first), 16);
        assert_eq!(n_dev(2.0, 1.0, d * d, 1, 1, 1, 1.0, &k), 12);
    }

    #[test]
    fn horizon_value() {
        assert_eq!(bpi_horizon(5.0, 0.1, 0.3), (1600.0 * (40.0f64 / 0.3).ln()).ceil() as usize);
    }

    fn immediate(c: f64) -> SspMdp {
        let mut b = SspBuilder::new(1, 2);
        b.c_min(c);
        b.cost(0, 0, c).transition(0, 0, 1, 1.0);
        b.escape_action(1, 3.0);
        b.build().unwrap()
    }

    #[test]
    fn deterministic_instance_succeeds_at_exact_cost() {
        let m = immediate(0.5);
        let mut env = OnlineEnv::new(&m, 4);
        let mut cfg = BpiConfig::for_mdp(&m, 0.5, 0.1).unwrap();
        cfg.dev = DevConstants { k: [1e-3, 1e-6] };
        let out = bpi(&mut env, &cfg).unwrap();
        let last = out.rounds.last().unwrap();
        assert_eq!(last.kind, RoundKind::Success);
        assert!((last.tau_hat - 0.5).abs() < 1e-9);
        assert!(last.v_init <= 0.5 + 1e-12 && last.tau_hat <= last.v_init + 0.25);
        assert!(out.rounds[..out.rounds.len() - 1].iter().all(|r| r.kind != RoundKind::Success));
        assert_eq!(out.samples_used, env.total_samples());
        assert_eq!(out.policy.action_at(0, 1), 0);
        assert_eq!(out.policy.action_at(0, out.horizon + 1), 1);
    }

    #[test]
    fn requires_escape_action() {
        let mut b = SspBuilder::new(1, 1);
        b.c_min(0.5).cost(0, 0, 0.5).transition(0, 0, 1, 1.0);
        let m = b.build().unwrap();
        assert!(matches!(BpiConfig::for_mdp(&m, 0.5, 0.1), Err(BpiError::Assumption(_))));
        let mut leaky = SspBuilder::new(1, 2);
        leaky.c_min(0.5).cost(0, 0, 0.5).transition(0, 0, 1, 1.0);
        leaky.terminal_action(1, 3.0).cost(0, 1, 3.0).transition(0, 1, 0, 0.5).transition(0, 1, 1, 0.5);
        let m = leaky.build().unwrap();
        let cfg = BpiConfig::for_mdp(&m, 0.5, 0.1).unwrap();
        let mut env = OnlineEnv::new(&m, 1);
        assert!(matches!(bpi(&mut env, &cfg), Err(BpiError::Assumption(_))));
    }

    #[test]
    fn budget_cap_aborts() {
        let m = immediate(0.5);
        let mut env = OnlineEnv::new(&m, 4);
        let cfg = BpiConfig { budget_cap: Some(100), ..BpiConfig::for_mdp(&m, 0.5, 0.1).unwrap() };
        assert!(matches!(bpi(&mut env, &cfg), Err(BpiError::BudgetExceeded { .. })));
    }
}

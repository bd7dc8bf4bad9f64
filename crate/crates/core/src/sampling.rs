//! Generative sampler, online episodic environment and visit counters.
//!
//! Randomness is a single ChaCha8 stream per sampler or environment, seeded
//! from a `u64` and advanced in call order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use thiserror::Error;

use crate::mdp::SspMdp;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("pair ({state},{action}) out of range")]
    OutOfRange { state: usize, action: usize },
    #[error("episode is closed; call reset first")]
    EpisodeClosed,
}

/// Visit counts `N(s,a)` and `N(s,a,s')`.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterTable {
    n_states: usize,
    n_actions: usize,
    n_sa: Vec<u64>,
    n_sas: Vec<u64>,
}

impl CounterTable {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        CounterTable {
            n_states,
            n_actions,
            n_sa: vec![0; n_states * n_actions],
            n_sas: vec![0; n_states * n_actions * (n_states + 1)],
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn reset(&mut self) {
        self.n_sa.fill(0);
        self.n_sas.fill(0);
    }

    pub fn record(&mut self, s: usize, a: usize, next: usize) {
        self.record_many(s, a, next, 1);
    }

    pub fn record_many(&mut self, s: usize, a: usize, next: usize, k: u64) {
        let i = s * self.n_actions + a;
        self.n_sa[i] += k;
        self.n_sas[i * (self.n_states + 1) + next] += k;
    }

    pub fn count(&self, s: usize, a: usize) -> u64 {
        self.n_sa[s * self.n_actions + a]
    }

    pub fn count_next(&self, s: usize, a: usize, next: usize) -> u64 {
        self.n_sas[(s * self.n_actions + a) * (self.n_states + 1) + next]
    }

    /// Next-state counts of `(s, a)`, goal last.
    pub fn next_counts(&self, s: usize, a: usize) -> &[u64] {
        let w = self.n_states + 1;
        let i = (s * self.n_actions + a) * w;
        &self.n_sas[i..i + w]
    }

    /// `max{1, N(s,a)}`.
    pub fn n_plus(&self, s: usize, a: usize) -> u64 {
        self.count(s, a).max(1)
    }

    pub fn total(&self) -> u64 {
        self.n_sa.iter().sum()
    }

    /// `P̂_{s,a}`: counts over `N⁺`, the zero vector for unvisited pairs.
    pub fn empirical_row(&self, s: usize, a: usize) -> Vec<f64> {
        let np = self.n_plus(s, a) as f64;
        self.next_counts(s, a).iter().map(|&k| k as f64 / np).collect()
    }

    /// `Σ_{s'} N(s,a,s') = N(s,a)` for every pair.
    pub fn is_conserved(&self) -> bool {
        (0..self.n_states).all(|s| {
            (0..self.n_actions).all(|a| self.next_counts(s, a).iter().sum::<u64>() == self.count(s, a))
        })
    }
}

fn draw(row: &[(usize, f64)], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(n, p) in row {
        acc += p;
        if u < acc {
            return n;
        }
    }
    // Rounding left a sliver above the cumulative sum.
    row.iter().rev().find(|e| e.1 > 0.0).map(|e| e.0).unwrap_or(row[row.len() - 1].0)
}

/// Teleporting sampler: draws `s' ~ P(.|s,a)` for any requested pair.
#[derive(Debug, Clone)]
pub struct GenerativeSampler<'a> {
    mdp: &'a SspMdp,
    rng: ChaCha8Rng,
    total_samples: u64,
    sink: Option<CounterTable>,
}

impl<'a> GenerativeSampler<'a> {
    pub fn new(mdp: &'a SspMdp, seed: u64) -> Self {
        GenerativeSampler { mdp, rng: ChaCha8Rng::seed_from_u64(seed), total_samples: 0, sink: None }
    }

    /// Every draw is also recorded into an internal counter table.
    pub fn with_sink(mut self) -> Self {
        self.sink = Some(CounterTable::new(self.mdp.n_states(), self.mdp.n_actions()));
        self
    }

    pub fn mdp(&self) -> &'a SspMdp {
        self.mdp
    }

    pub fn total_samples(&self) -> u64 {
        self.total_samples
    }

    pub fn sink(&self) -> Option<&CounterTable> {
        self.sink.as_ref()
    }

    pub fn gen_sample(&mut self, s: usize, a: usize) -> Result<usize, SamplingError> {
        if s >= self.mdp.n_states() || a >= self.mdp.n_actions() {
            return Err(SamplingError::OutOfRange { state: s, action: a });
        }
        let next = draw(self.mdp.row(s, a), &mut self.rng);
        self.total_samples += 1;
        if let Some(sink) = &mut self.sink {
            sink.record(s, a, next);
        }
        Ok(next)
    }

    /// `n` fresh draws for every pair, returned as a new counter table.
    ///
    /// Only the counts are materialized: per pair they are drawn as a
    /// multinomial through successive conditional binomials, which has the
    /// same law as `n` independent draws.
    pub fn gen_batch(&mut self, n: u64) -> CounterTable {
        let (ns, na) = (self.mdp.n_states(), self.mdp.n_actions());
        let mut table = CounterTable::new(ns, na);
        for s in 0..ns {
            for a in 0..na {
                let row = self.mdp.row(s, a);
                let last = row.iter().rposition(|e| e.1 > 0.0).unwrap_or(0);
                let mut remaining = n;
                let mut mass = 1.0;
                for (i, &(next, p)) in row.iter().enumerate().take(last + 1) {
                    if remaining == 0 {
                        break;
                    }
                    let k = if i == last || p >= mass {
                        remaining
                    } else if p <= 0.0 {
                        0
                    } else {
                        Binomial::new(remaining, (p / mass).min(1.0)).expect("valid binomial").sample(&mut self.rng)
                    };
                    mass -= p;
                    remaining -= k;
                    if k > 0 {
                        table.record_many(s, a, next, k);
                    }
                }
            }
        }
        self.total_samples += n * (ns * na) as u64;
        if let Some(sink) = &mut self.sink {
            for s in 0..ns {
                for a in 0..na {
                    for next in 0..=ns {
                        let k = table.count_next(s, a, next);
                        if k > 0 {
                            sink.record_many(s, a, next, k);
                        }
                    }
                }
            }
        }
        table
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub cost: f64,
    pub next: usize,
    pub done: bool,
}

/// Episodic environment started from `s_init`. Episode length is not capped
/// here; the learner truncates.
#[derive(Debug, Clone)]
pub struct OnlineEnv<'a> {
    mdp: &'a SspMdp,
    rng: ChaCha8Rng,
    state: usize,
    open: bool,
    episode_steps: u64,
    episodes: u64,
    total_samples: u64,
}

impl<'a> OnlineEnv<'a> {
    pub fn new(mdp: &'a SspMdp, seed: u64) -> Self {
        OnlineEnv {
            mdp,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: mdp.init_state(),
            open: false,
            episode_steps: 0,
            episodes: 0,
            total_samples: 0,
        }
    }

    pub fn mdp(&self) -> &'a SspMdp {
        self.mdp
    }

    pub fn reset(&mut self) -> usize {
        self.state = self.mdp.init_state();
        self.open = true;
        self.episode_steps = 0;
        self.episodes += 1;
        self.state
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn is_open(&self) -> bool {
        self.open
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn episode_steps(&self) -> u64 {
        self.episode_steps
    }

    pub fn total_samples(&self) -> u64 {
        self.total_samples
    }

    pub fn step(&mut self, a: usize) -> Result<Step, SamplingError> {
        if !self.open {
            return Err(SamplingError::EpisodeClosed);
        }
        if a >= self.mdp.n_actions() {
            return Err(SamplingError::OutOfRange { state: self.state, action: a });
        }
        let s = self.state;
        let cost = self.mdp.cost(s, a);
        let next = draw(self.mdp.row(s, a), &mut self.rng);
        self.total_samples += 1;
        self.episode_steps += 1;
        self.state = next;
        let done = next == self.mdp.goal();
        if done {
            self.open = false;
        }
        Ok(Step { cost, next, done })
    }
}

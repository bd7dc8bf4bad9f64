#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use ssp_lab::format::parse_ssp;
use ssp_lab::oracle::policy_value;
use ssp_lab::{SspBuilder, SspMdp, StationaryPolicy};

pub fn data_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

pub fn load(rel: &str) -> SspMdp {
    parse_ssp(&std::fs::read_to_string(data_path(rel)).unwrap()).unwrap()
}

/// Random row over `0..=goal` with 1 to 3 support points.
fn random_row(rng: &mut ChaCha8Rng, goal: usize) -> Vec<(usize, f64)> {
    let k = rng.random_range(1..=3usize).min(goal + 1);
    let mut targets: Vec<usize> = Vec::new();
    while targets.len() < k {
        let t = rng.random_range(0..=goal);
        if !targets.contains(&t) {
            targets.push(t);
        }
    }
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = w.iter().sum();
    let mut row: Vec<(usize, f64)> = targets.iter().zip(&w).map(|(&t, &x)| (t, x / total)).collect();
    let head: f64 = row[..k - 1].iter().map(|e| e.1).sum();
    row[k - 1].1 = 1.0 - head;
    row
}

/// Random valid SSP with costs in `[c_min, 1]`. Proper policies may not exist.
pub fn random_ssp(rng: &mut ChaCha8Rng, n_states: usize, n_actions: usize, c_min: f64) -> SspMdp {
    let mut b = SspBuilder::new(n_states, n_actions);
    b.c_min(c_min);
    for s in 0..n_states {
        for a in 0..n_actions {
            b.cost(s, a, rng.random_range(c_min..=1.0));
            for (t, p) in random_row(rng, n_states) {
                b.transition(s, a, t, p);
            }
        }
    }
    b.build().unwrap()
}

/// Random SSP where every row reaches the goal with probability at least 0.2.
pub fn random_leaky_ssp(rng: &mut ChaCha8Rng, n_states: usize, n_actions: usize, c_min: f64) -> SspMdp {
    let mut b = SspBuilder::new(n_states, n_actions);
    b.c_min(c_min);
    for s in 0..n_states {
        for a in 0..n_actions {
            b.cost(s, a, rng.random_range(c_min..=1.0));
            let leak = rng.random_range(0.2..0.6);
            b.transition(s, a, n_states, leak);
            for (t, p) in random_row(rng, n_states - 1) {
                b.transition(s, a, t, p * (1.0 - leak));
            }
        }
    }
    b.build().unwrap()
}

/// Componentwise minimum of `V^π` over proper deterministic stationary
/// policies, by enumeration. `None` when no policy is proper everywhere.
pub fn brute_force_v_star(mdp: &SspMdp) -> Option<Vec<f64>> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let total = na.pow(ns as u32);
    let mut best: Option<Vec<f64>> = None;
    for code in 0..total {
        let mut c = code;
        let actions: Vec<usize> = (0..ns)
            .map(|_| {
                let a = c % na;
                c /= na;
                a
            })
            .collect();
        let ev = policy_value(mdp, &StationaryPolicy::deterministic(actions)).unwrap();
        if !ev.proper.iter().all(|&p| p) {
            continue;
        }
        best = Some(match best {
            None => ev.values[..ns].to_vec(),
            Some(b) => b.iter().zip(&ev.values).map(|(x, y)| x.min(*y)).collect(),
        });
    }
    best
}

/// `s -> next` chain of `n` unit-cost steps ending at the goal.
pub fn unit_chain(n: usize) -> SspMdp {
    let mut b = SspBuilder::new(n, 1);
    b.c_min(1.0);
    for s in 0..n {
        b.cost(s, 0, 1.0).transition(s, 0, s + 1, 1.0);
    }
    b.build().unwrap()
}

/// One state with a unit-cost self-loop leaving w.p. `1/tau`.
pub fn geometric_loop(tau: f64) -> SspMdp {
    let mut b = SspBuilder::new(1, 1);
    b.c_min(1.0);
    b.cost(0, 0, 1.0).transition(0, 0, 1, 1.0 / tau).transition(0, 0, 0, 1.0 - 1.0 / tau);
    b.build().unwrap()
}

//! LCBVI: finite-horizon value iteration on the empirical kernel with a
//! subtracted Bernstein bonus, clipped at zero.

use thiserror::Error;

use crate::mdp::{SspMdp, ValueTable};
use crate::policy::FiniteHorizonPolicy;
use crate::sampling::CounterTable;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LcbviError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    Input(String),
}

/// `PV² − (PV)²`, clamped at 0. An all-zero `p` gives 0.
pub fn variance(p: &[f64], v: &[f64]) -> Result<f64, LcbviError> {
    if p.len() != v.len() {
        return Err(LcbviError::Dimension(format!("p has {} entries, v has {}", p.len(), v.len())));
    }
    let (mut m1, mut m2) = (0.0, 0.0);
    for (&pi, &vi) in p.iter().zip(v) {
        m1 += pi * vi;
        m2 += pi * vi * vi;
    }
    Ok((m2 - m1 * m1).max(0.0))
}

/// `ln(2 S A H n / δ)` with `n` floored at 1.
pub fn iota(n_states: usize, n_actions: usize, horizon: usize, n: u64, delta: f64) -> f64 {
    (2.0 * n_states as f64 * n_actions as f64 * horizon as f64 * n.max(1) as f64 / delta).ln()
}

fn bonus_from(var: f64, n_plus: f64, b: f64, iota: f64) -> f64 {
    (7.0 * (var * iota / n_plus).sqrt()).max(49.0 * b * iota / n_plus)
}

/// `max{7 sqrt(V(P̂,V) ι / N⁺), 49 B ι / N⁺}`.
pub fn bonus(counts: &CounterTable, s: usize, a: usize, v_next: &[f64], b: f64, iota: f64) -> Result<f64, LcbviError> {
    let var = variance(&counts.empirical_row(s, a), v_next)?;
    Ok(bonus_from(var, counts.n_plus(s, a) as f64, b, iota))
}

#[derive(Debug, Clone, Copy)]
pub struct LcbviInput<'a> {
    /// Supplies the cost table; transitions come from `counts`.
    pub mdp: &'a SspMdp,
    pub counts: &'a CounterTable,
    pub horizon: usize,
    pub value_bound: f64,
    /// `c_f` with the goal entry last.
    pub terminal_cost: &'a [f64],
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcbviOutput {
    pub policy: FiniteHorizonPolicy,
    /// `V̂_h` and `Q̂_h`.
    pub values: ValueTable,
    pub iota: f64,
}

pub fn lcbvi(input: &LcbviInput<'_>) -> Result<LcbviOutput, LcbviError> {
    let mdp = input.mdp;
    let counts = input.counts;
    let (ns, na, hz) = (mdp.n_states(), mdp.n_actions(), input.horizon);
    if counts.n_states() != ns || counts.n_actions() != na {
        return Err(LcbviError::Dimension("counter table does not match the mdp".into()));
    }
    if input.terminal_cost.len() != ns + 1 {
        return Err(LcbviError::Dimension(format!("terminal cost needs {} entries", ns + 1)));
    }
    if hz == 0 {
        return Err(LcbviError::Input("horizon must be at least 1".into()));
    }
    if !(input.value_bound > 0.0) {
        return Err(LcbviError::Input("value bound must be positive".into()));
    }
    if !(input.delta > 0.0 && input.delta < 1.0) {
        return Err(LcbviError::Input("delta must lie in (0,1)".into()));
    }
    let io = iota(ns, na, hz, counts.total(), input.delta);
    // Sparse empirical rows, fixed across stages.
    let rows: Vec<(f64, Vec<(usize, f64)>)> = (0..ns * na)
        .map(|i| {
            let (s, a) = (i / na, i % na);
            let np = counts.n_plus(s, a) as f64;
            let row = counts
                .next_counts(s, a)
                .iter()
                .enumerate()
                .filter(|&(_, &k)| k > 0)
                .map(|(n, &k)| (n, k as f64 / np))
                .collect();
            (np, row)
        })
        .collect();
    let mut table = ValueTable::zeros(hz, ns, na);
    table.v_mut(hz + 1).copy_from_slice(input.terminal_cost);
    let mut next = input.terminal_cost.to_vec();
    let mut cur = vec![0.0; ns + 1];
    let mut actions = vec![0; hz * ns];
    for h in (1..=hz).rev() {
        for s in 0..ns {
            let mut best = f64::INFINITY;
            let mut arg = 0;
            for a in 0..na {
                let (np, row) = &rows[s * na + a];
                let (mut m1, mut m2) = (0.0, 0.0);
                for &(n, p) in row {
                    m1 += p * next[n];
                    m2 += p * next[n] * next[n];
                }
                let var = (m2 - m1 * m1).max(0.0);
                let q = (mdp.cost(s, a) + m1 - bonus_from(var, *np, input.value_bound, io)).max(0.0);
                table.set_q(h, s, a, q);
                if q < best {
                    best = q;
                    arg = a;
                }
            }
            cur[s] = best;
            actions[(h - 1) * ns + s] = arg;
        }
        cur[ns] = 0.0;
        table.v_mut(h).copy_from_slice(&cur);
        std::mem::swap(&mut cur, &mut next);
    }
    let policy = FiniteHorizonPolicy::from_table(hz, ns, actions).expect("table shape");
    Ok(LcbviOutput { policy, values: table, iota: io })
}

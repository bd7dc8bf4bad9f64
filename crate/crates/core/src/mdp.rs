//! SSP model, validation, finite-horizon specs and exact finite-horizon DP.
//!
//! States are `0..S`; the goal is the sink index `S`. Value vectors carry
//! `S + 1` entries with the goal entry pinned at 0.

use std::fmt;

use thiserror::Error;

use crate::policy::Policy;

/// Row-stochasticity tolerance.
pub const ROW_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("index out of range: {0}")]
    Index(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid finite-horizon spec: {0}")]
    Spec(String),
    #[error("invalid policy: {0}")]
    Policy(String),
}

/// Escape action available in every state (cost `J`, straight to goal).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalAction {
    pub action: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SspMdp {
    n_states: usize,
    n_actions: usize,
    cost: Vec<f64>,
    c_min: f64,
    trans: Vec<Vec<(usize, f64)>>,
    init_state: usize,
    terminal: Option<TerminalAction>,
}

/// Incremental constructor. Index errors surface in [`SspBuilder::build`];
/// semantic problems (row sums, cost range) are left to [`SspMdp::validate`].
#[derive(Debug, Clone)]
pub struct SspBuilder {
    n_states: usize,
    n_actions: usize,
    cost: Vec<f64>,
    c_min: f64,
    trans: Vec<Vec<(usize, f64)>>,
    init_state: usize,
    terminal: Option<TerminalAction>,
    errors: Vec<String>,
}

impl SspBuilder {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        SspBuilder {
            n_states,
            n_actions,
            cost: vec![0.0; n_states * n_actions],
            c_min: 0.0,
            trans: vec![Vec::new(); n_states * n_actions],
            init_state: 0,
            terminal: None,
            errors: Vec::new(),
        }
    }

    pub fn c_min(&mut self, c_min: f64) -> &mut Self {
        self.c_min = c_min;
        self
    }

    pub fn init_state(&mut self, s: usize) -> &mut Self {
        self.init_state = s;
        self
    }

    /// Declares `a` as the terminal action without touching its rows.
    pub fn terminal_action(&mut self, action: usize, cost: f64) -> &mut Self {
        self.terminal = Some(TerminalAction { action, cost });
        self
    }

    /// Declares `a` as the terminal action and fills its rows: cost `j`,
    /// goal with probability one, from every state.
    pub fn escape_action(&mut self, action: usize, j: f64) -> &mut Self {
        self.terminal_action(action, j);
        for s in 0..self.n_states {
            self.cost(s, action, j);
            self.clear_row(s, action);
            self.transition(s, action, self.n_states, 1.0);
        }
        self
    }

    fn pair(&mut self, s: usize, a: usize) -> Option<usize> {
        if s >= self.n_states || a >= self.n_actions {
            self.errors.push(format!("pair ({s},{a}) outside {}x{}", self.n_states, self.n_actions));
            None
        } else {
            Some(s * self.n_actions + a)
        }
    }

    pub fn cost(&mut self, s: usize, a: usize, c: f64) -> &mut Self {
        if let Some(i) = self.pair(s, a) {
            self.cost[i] = c;
        }
        self
    }

    /// Adds `p` to `P(next | s, a)`; repeated entries accumulate.
    pub fn transition(&mut self, s: usize, a: usize, next: usize, p: f64) -> &mut Self {
        if next > self.n_states {
            self.errors.push(format!("next state {next} outside 0..={}", self.n_states));
            return self;
        }
        if let Some(i) = self.pair(s, a) {
            let row = &mut self.trans[i];
            match row.iter_mut().find(|(n, _)| *n == next) {
                Some(entry) => entry.1 += p,
                None => row.push((next, p)),
            }
        }
        self
    }

    pub fn clear_row(&mut self, s: usize, a: usize) -> &mut Self {
        if let Some(i) = self.pair(s, a) {
            self.trans[i].clear();
        }
        self
    }

    pub fn build(&self) -> Result<SspMdp, MdpError> {
        if let Some(e) = self.errors.first() {
            return Err(MdpError::Index(e.clone()));
        }
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(MdpError::Dimension("need at least one state and one action".into()));
        }
        let mut trans = self.trans.clone();
        for row in &mut trans {
            row.sort_by_key(|&(n, _)| n);
        }
        Ok(SspMdp {
            n_states: self.n_states,
            n_actions: self.n_actions,
            cost: self.cost.clone(),
            c_min: self.c_min,
            trans,
            init_state: self.init_state,
            terminal: self.terminal,
        })
    }
}

impl SspMdp {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Index of the goal sink.
    pub fn goal(&self) -> usize {
        self.n_states
    }

    pub fn c_min(&self) -> f64 {
        self.c_min
    }

    pub fn init_state(&self) -> usize {
        self.init_state
    }

    pub fn terminal_action(&self) -> Option<TerminalAction> {
        self.terminal
    }

    pub fn cost(&self, s: usize, a: usize) -> f64 {
        self.cost[s * self.n_actions + a]
    }

    /// Sparse row `P(. | s, a)` sorted by next state.
    pub fn row(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.trans[s * self.n_actions + a]
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.row(s, a).iter().filter(|(n, _)| *n == next).map(|(_, p)| p).sum()
    }

    /// `P_{s,a} v` for a value vector of length `S + 1`.
    pub fn expect(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        self.row(s, a).iter().map(|&(n, p)| p * v[n]).sum()
    }

    /// Same model with every cost replaced by `f(s, a)`. Used for unit-cost
    /// hitting-time problems.
    pub fn with_costs(&self, f: impl Fn(usize, usize) -> f64) -> SspMdp {
        let mut out = self.clone();
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                out.cost[s * self.n_actions + a] = f(s, a);
            }
        }
        out
    }

    pub fn with_init_state(&self, s: usize) -> SspMdp {
        let mut out = self.clone();
        out.init_state = s;
        out
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_valid()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let (ns, na) = (self.n_states, self.n_actions);
        if !(0.0..=1.0).contains(&self.c_min) {
            violations.push(Violation::CminOutOfRange { c_min: self.c_min });
        }
        if self.init_state >= ns {
            violations.push(Violation::InitOutOfRange { init: self.init_state });
        }
        let terminal = match self.terminal {
            Some(t) if t.action >= na => {
                violations.push(Violation::TerminalActionOutOfRange { action: t.action });
                None
            }
            other => other,
        };
        for s in 0..ns {
            for a in 0..na {
                let row = self.row(s, a);
                let mut sum = 0.0;
                for &(next, p) in row {
                    if next > ns {
                        violations.push(Violation::NextOutOfRange { state: s, action: a, next });
                    }
                    if !(p >= 0.0) || !p.is_finite() {
                        violations.push(Violation::BadProbability { state: s, action: a, next, prob: p });
                    }
                    sum += p;
                }
                if !((sum - 1.0).abs() <= ROW_TOL) {
                    violations.push(Violation::RowSum { state: s, action: a, sum });
                }
                let c = self.cost(s, a);
                match terminal {
                    Some(t) if t.action == a => {
                        if c != t.cost {
                            violations.push(Violation::TerminalCost { state: s, cost: c, expected: t.cost });
                        }
                        let g = self.prob(s, a, ns);
                        if !((g - 1.0).abs() <= ROW_TOL) {
                            violations.push(Violation::TerminalNotAbsorbing { state: s, goal_prob: g });
                        }
                    }
                    _ => {
                        if !(c >= self.c_min && c <= 1.0) {
                            violations.push(Violation::CostOutOfRange { state: s, action: a, cost: c, c_min: self.c_min });
                        }
                    }
                }
            }
        }
        ValidationReport { violations }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    CminOutOfRange { c_min: f64 },
    InitOutOfRange { init: usize },
    TerminalActionOutOfRange { action: usize },
    NextOutOfRange { state: usize, action: usize, next: usize },
    BadProbability { state: usize, action: usize, next: usize, prob: f64 },
    RowSum { state: usize, action: usize, sum: f64 },
    CostOutOfRange { state: usize, action: usize, cost: f64, c_min: f64 },
    TerminalCost { state: usize, cost: f64, expected: f64 },
    TerminalNotAbsorbing { state: usize, goal_prob: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::CminOutOfRange { c_min } => write!(f, "c_min {c_min} outside [0,1]"),
            Violation::InitOutOfRange { init } => write!(f, "init state {init} out of range"),
            Violation::TerminalActionOutOfRange { action } => write!(f, "terminal action {action} out of range"),
            Violation::NextOutOfRange { state, action, next } => {
                write!(f, "({state},{action}): next state {next} out of range")
            }
            Violation::BadProbability { state, action, next, prob } => {
                write!(f, "({state},{action}): probability {prob} for next state {next}")
            }
            Violation::RowSum { state, action, sum } => write!(f, "({state},{action}): row sums to {sum}"),
            Violation::CostOutOfRange { state, action, cost, c_min } => {
                write!(f, "({state},{action}): cost {cost} outside [{c_min},1]")
            }
            Violation::TerminalCost { state, cost, expected } => {
                write!(f, "({state},terminal): cost {cost}, declared {expected}")
            }
            Violation::TerminalNotAbsorbing { state, goal_prob } => {
                write!(f, "({state},terminal): goal probability {goal_prob}, expected 1")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Horizon `H` and terminal cost `c_f` of the auxiliary problem `M_{H,c_f}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteHorizonSpec {
    horizon: usize,
    terminal_cost: Vec<f64>,
}

impl FiniteHorizonSpec {
    /// `terminal_cost` has `S + 1` entries, the last being the goal.
    pub fn new(horizon: usize, terminal_cost: Vec<f64>) -> Result<Self, MdpError> {
        if horizon == 0 {
            return Err(MdpError::Spec("horizon must be at least 1".into()));
        }
        if terminal_cost.is_empty() {
            return Err(MdpError::Spec("terminal cost needs a goal entry".into()));
        }
        if terminal_cost.iter().any(|&c| !(c >= 0.0)) {
            return Err(MdpError::Spec("terminal cost must be nonnegative".into()));
        }
        if *terminal_cost.last().unwrap() != 0.0 {
            return Err(MdpError::Spec("terminal cost at goal must be 0".into()));
        }
        Ok(FiniteHorizonSpec { horizon, terminal_cost })
    }

    /// `c_f(s) = level * 1{s != g}`.
    pub fn uniform(n_states: usize, horizon: usize, level: f64) -> Result<Self, MdpError> {
        let mut cf = vec![level; n_states + 1];
        cf[n_states] = 0.0;
        Self::new(horizon, cf)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn terminal_cost(&self) -> &[f64] {
        &self.terminal_cost
    }
}

/// Stage values `V_h` for `h = 1..=H+1` and action values `Q_h` for `h = 1..=H`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    horizon: usize,
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
    q: Vec<f64>,
}

impl ValueTable {
    pub(crate) fn zeros(horizon: usize, n_states: usize, n_actions: usize) -> Self {
        ValueTable {
            horizon,
            n_states,
            n_actions,
            values: vec![0.0; (horizon + 1) * (n_states + 1)],
            q: vec![0.0; horizon * n_states * n_actions],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// `V_h` including the goal entry, `h` in `1..=H+1`.
    pub fn v(&self, h: usize) -> &[f64] {
        let w = self.n_states + 1;
        &self.values[(h - 1) * w..h * w]
    }

    pub(crate) fn v_mut(&mut self, h: usize) -> &mut [f64] {
        let w = self.n_states + 1;
        &mut self.values[(h - 1) * w..h * w]
    }

    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[((h - 1) * self.n_states + s) * self.n_actions + a]
    }

    pub(crate) fn set_q(&mut self, h: usize, s: usize, a: usize, value: f64) {
        self.q[((h - 1) * self.n_states + s) * self.n_actions + a] = value;
    }

    /// `max_s V_h(s)` over non-goal states.
    pub fn max_norm(&self, h: usize) -> f64 {
        self.v(h)[..self.n_states].iter().fold(0.0, |m, &x| m.max(x.abs()))
    }

    /// Lowest-index argmin of `Q_h(s, .)`.
    pub fn greedy_action(&self, h: usize, s: usize) -> usize {
        let mut best = 0;
        for a in 1..self.n_actions {
            if self.q(h, s, a) < self.q(h, s, best) {
                best = a;
            }
        }
        best
    }

    pub fn greedy_policy(&self) -> crate::policy::FiniteHorizonPolicy {
        let mut actions = Vec::with_capacity(self.horizon * self.n_states);
        for h in 1..=self.horizon {
            for s in 0..self.n_states {
                actions.push(self.greedy_action(h, s));
            }
        }
        crate::policy::FiniteHorizonPolicy::from_table(self.horizon, self.n_states, actions)
            .expect("greedy table has consistent shape")
    }
}

/// Exact backward induction on `M_{H,c_f}`.
///
/// Without a policy computes `V*_h, Q*_h`; with one computes `V^pi_h` (the Q
/// table still holds `c + P V^pi_{h+1}` for every action).
pub fn finite_horizon_dp(
    mdp: &SspMdp,
    spec: &FiniteHorizonSpec,
    policy: Option<&Policy>,
) -> Result<ValueTable, MdpError> {
    let (ns, na, hz) = (mdp.n_states(), mdp.n_actions(), spec.horizon());
    if spec.terminal_cost().len() != ns + 1 {
        return Err(MdpError::Dimension(format!(
            "terminal cost has {} entries, expected {}",
            spec.terminal_cost().len(),
            ns + 1
        )));
    }
    if let Some(p) = policy {
        p.check_shape(ns, na)?;
        if let Policy::FiniteHorizon(fh) = p {
            if fh.horizon() != hz {
                return Err(MdpError::Dimension(format!(
                    "policy covers {} stages, spec horizon is {hz}",
                    fh.horizon()
                )));
            }
        }
    }
    let mut table = ValueTable::zeros(hz, ns, na);
    table.v_mut(hz + 1).copy_from_slice(spec.terminal_cost());
    let mut next = spec.terminal_cost().to_vec();
    let mut cur = vec![0.0; ns + 1];
    for h in (1..=hz).rev() {
        for s in 0..ns {
            for a in 0..na {
                table.set_q(h, s, a, mdp.cost(s, a) + mdp.expect(s, a, &next));
            }
            cur[s] = match policy {
                None => (0..na).map(|a| table.q(h, s, a)).fold(f64::INFINITY, f64::min),
                Some(p) => p.stage_distribution(s, h).map(|(a, w)| w * table.q(h, s, a)).sum(),
            };
        }
        cur[ns] = 0.0;
        table.v_mut(h).copy_from_slice(&cur);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{make_periodic, FiniteHorizonPolicy, StationaryPolicy};

    /// Two-state zero-cmin instance with actions `a0` (index 0) and `a_g`.
    fn fig_m0() -> SspMdp {
        let mut b = SspBuilder::new(2, 2);
        b.cost(0, 0, 0.0).transition(0, 0, 0, 1.0);
        b.cost(0, 1, 0.5).transition(0, 1, 2, 1.0);
        for a in 0..2 {
            b.cost(1, a, 1.0).transition(1, a, 2, 1.0);
        }
        b.build().unwrap()
    }

    fn chain2() -> SspMdp {
        let mut b = SspBuilder::new(2, 1);
        b.c_min(1.0);
        b.cost(0, 0, 1.0).transition(0, 0, 1, 1.0);
        b.cost(1, 0, 1.0).transition(1, 0, 2, 1.0);
        b.build().unwrap()
    }

    #[test]
    fn m0_is_valid() {
        assert!(fig_m0().validate().violations.is_empty());
    }

    #[test]
    fn short_row_reports_one_violation() {
        let mut b = SspBuilder::new(1, 1);
        b.cost(0, 0, 0.5).transition(0, 0, 1, 0.9);
        let report = b.build().unwrap().validate();
        assert_eq!(report.violations.len(), 1);
        assert!(matches!(report.violations[0], Violation::RowSum { state: 0, action: 0, .. }));
    }

    #[test]
    fn leaky_terminal_action_reports_one_violation() {
        let mut b = SspBuilder::new(1, 2);
        b.cost(0, 0, 0.5).transition(0, 0, 1, 1.0);
        b.terminal_action(1, 5.0).cost(0, 1, 5.0).transition(0, 1, 1, 0.5).transition(0, 1, 0, 0.5);
        let report = b.build().unwrap().validate();
        assert_eq!(report.violations.len(), 1, "{:?}", report);
        assert!(matches!(report.violations[0], Violation::TerminalNotAbsorbing { state: 0, .. }));
    }

    #[test]
    fn builder_rejects_bad_index() {
        let mut b = SspBuilder::new(1, 1);
        b.transition(3, 0, 1, 1.0);
        assert!(b.build().is_err());
    }

    #[test]
    fn chain_dp() {
        let spec = FiniteHorizonSpec::uniform(2, 3, 0.0).unwrap();
        let t = finite_horizon_dp(&chain2(), &spec, None).unwrap();
        assert_eq!(t.v(1)[0], 2.0);
        assert_eq!(t.v(4), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn one_step_dp() {
        let mut b = SspBuilder::new(1, 1);
        b.cost(0, 0, 0.5).transition(0, 0, 1, 1.0);
        let spec = FiniteHorizonSpec::uniform(1, 1, 0.0).unwrap();
        let t = finite_horizon_dp(&b.build().unwrap(), &spec, None).unwrap();
        assert_eq!(t.v(1)[0], 0.5);
    }

    /// Brute force over all deterministic stage policies of M0 at H=4.
    #[test]
    fn m0_dp_matches_enumeration() {
        let mdp = fig_m0();
        let spec = FiniteHorizonSpec::uniform(2, 4, 1.0).unwrap();
        let t = finite_horizon_dp(&mdp, &spec, None).unwrap();
        assert!((t.v(1)[0] - 0.5).abs() < 1e-12);
        let mut best = f64::INFINITY;
        for code in 0u32..(1 << 8) {
            let actions: Vec<usize> = (0..8).map(|i| ((code >> i) & 1) as usize).collect();
            let pol = FiniteHorizonPolicy::from_table(4, 2, actions).unwrap();
            let v = finite_horizon_dp(&mdp, &spec, Some(&Policy::FiniteHorizon(pol))).unwrap();
            best = best.min(v.v(1)[0]);
        }
        assert!((best - 0.5).abs() < 1e-12);
    }

    #[test]
    fn policy_mode_with_greedy_reproduces_optimum() {
        let mdp = fig_m0();
        let spec = FiniteHorizonSpec::uniform(2, 6, 0.7).unwrap();
        let t = finite_horizon_dp(&mdp, &spec, None).unwrap();
        let pol = Policy::FiniteHorizon(t.greedy_policy());
        let tp = finite_horizon_dp(&mdp, &spec, Some(&pol)).unwrap();
        for h in 1..=7 {
            for s in 0..3 {
                assert!((t.v(h)[s] - tp.v(h)[s]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stochastic_stationary_policy_mode() {
        let mdp = fig_m0();
        let spec = FiniteHorizonSpec::uniform(2, 1, 0.0).unwrap();
        let pol = Policy::Stationary(StationaryPolicy::stochastic(vec![vec![0.5, 0.5], vec![1.0, 0.0]]).unwrap());
        let t = finite_horizon_dp(&mdp, &spec, Some(&pol)).unwrap();
        assert!((t.v(1)[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn dp_rejects_horizon_mismatch() {
        let mdp = chain2();
        let spec = FiniteHorizonSpec::uniform(2, 3, 0.0).unwrap();
        let pol = FiniteHorizonPolicy::from_table(2, 2, vec![0; 4]).unwrap();
        assert!(finite_horizon_dp(&mdp, &spec, Some(&Policy::FiniteHorizon(pol))).is_err());
        let per = make_periodic(&FiniteHorizonPolicy::from_table(2, 2, vec![0; 4]).unwrap(), 2).unwrap();
        assert!(finite_horizon_dp(&mdp, &spec, Some(&Policy::Periodic(per))).is_ok());
    }

    #[test]
    fn spec_checks() {
        assert!(FiniteHorizonSpec::new(0, vec![0.0]).is_err());
        assert!(FiniteHorizonSpec::new(1, vec![-1.0, 0.0]).is_err());
        assert!(FiniteHorizonSpec::new(1, vec![1.0, 1.0]).is_err());
    }
}

//! Policy objects: stationary (deterministic or stochastic), finite-horizon
//! stage tables, and periodic extensions of a finite-horizon table.

use crate::mdp::MdpError;

/// Tolerance on action-distribution sums.
pub const DIST_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum StationaryPolicy {
    Deterministic(Vec<usize>),
    Stochastic(Vec<Vec<f64>>),
}

impl StationaryPolicy {
    pub fn deterministic(actions: Vec<usize>) -> Self {
        StationaryPolicy::Deterministic(actions)
    }

    pub fn stochastic(dists: Vec<Vec<f64>>) -> Result<Self, MdpError> {
        for (s, d) in dists.iter().enumerate() {
            let sum: f64 = d.iter().sum();
            if d.iter().any(|&w| !(w >= 0.0)) || (sum - 1.0).abs() > DIST_TOL {
                return Err(MdpError::Policy(format!("distribution at state {s} is not a probability vector")));
            }
        }
        Ok(StationaryPolicy::Stochastic(dists))
    }

    pub fn n_states(&self) -> usize {
        match self {
            StationaryPolicy::Deterministic(a) => a.len(),
            StationaryPolicy::Stochastic(d) => d.len(),
        }
    }

    pub fn distribution(&self, s: usize) -> Dist<'_> {
        match self {
            StationaryPolicy::Deterministic(a) => Dist::Point(Some(a[s])),
            StationaryPolicy::Stochastic(d) => Dist::Weights(d[s].iter().enumerate()),
        }
    }

    fn check_shape(&self, n_states: usize, n_actions: usize) -> Result<(), MdpError> {
        if self.n_states() != n_states {
            return Err(MdpError::Dimension(format!("policy has {} states, mdp {n_states}", self.n_states())));
        }
        match self {
            StationaryPolicy::Deterministic(a) => {
                if let Some(&bad) = a.iter().find(|&&x| x >= n_actions) {
                    return Err(MdpError::Policy(format!("action {bad} out of range")));
                }
            }
            StationaryPolicy::Stochastic(d) => {
                if d.iter().any(|row| row.len() != n_actions) {
                    return Err(MdpError::Dimension(format!("distribution length differs from {n_actions} actions")));
                }
            }
        }
        Ok(())
    }
}

/// Deterministic stage table `pi(s, h)` for `h = 1..=H`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteHorizonPolicy {
    horizon: usize,
    n_states: usize,
    actions: Vec<usize>,
}

impl FiniteHorizonPolicy {
    /// `actions[(h - 1) * S + s]` is the stage-`h` action at `s`.
    pub fn from_table(horizon: usize, n_states: usize, actions: Vec<usize>) -> Result<Self, MdpError> {
        if horizon == 0 {
            return Err(MdpError::Policy("horizon must be at least 1".into()));
        }
        if actions.len() != horizon * n_states {
            return Err(MdpError::Dimension(format!(
                "table has {} entries, expected {}",
                actions.len(),
                horizon * n_states
            )));
        }
        Ok(FiniteHorizonPolicy { horizon, n_states, actions })
    }

    /// Same action at every stage.
    pub fn constant(horizon: usize, stationary: &[usize]) -> Result<Self, MdpError> {
        let mut actions = Vec::with_capacity(horizon * stationary.len());
        for _ in 0..horizon {
            actions.extend_from_slice(stationary);
        }
        Self::from_table(horizon, stationary.len(), actions)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn action(&self, s: usize, h: usize) -> usize {
        debug_assert!(h >= 1 && h <= self.horizon);
        self.actions[(h - 1) * self.n_states + s]
    }

    pub fn table(&self) -> &[usize] {
        &self.actions
    }
}

/// Periodic replay of a finite-horizon table: `pi(s, h + iH) = pi(s, h)`.
///
/// With `overflow_action` set, the table runs once and that action is taken
/// from step `H + 1` on. `terminal_cost` records the `c_f` the learner used.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicPolicy {
    base: FiniteHorizonPolicy,
    terminal_cost: Option<Vec<f64>>,
    overflow_action: Option<usize>,
}

impl PeriodicPolicy {
    pub fn base(&self) -> &FiniteHorizonPolicy {
        &self.base
    }

    pub fn period(&self) -> usize {
        self.base.horizon
    }

    pub fn terminal_cost(&self) -> Option<&[f64]> {
        self.terminal_cost.as_deref()
    }

    pub fn overflow_action(&self) -> Option<usize> {
        self.overflow_action
    }

    pub fn with_terminal_cost(mut self, cf: Vec<f64>) -> Self {
        self.terminal_cost = Some(cf);
        self
    }

    /// Runs the base table for `H` steps, then `action` forever.
    pub fn with_overflow(mut self, action: usize) -> Self {
        self.overflow_action = Some(action);
        self
    }

    /// Action at global step `t >= 1`.
    pub fn action_at(&self, s: usize, t: usize) -> usize {
        let hz = self.base.horizon;
        match self.overflow_action {
            Some(a) if t > hz => a,
            _ => self.base.action(s, (t - 1) % hz + 1),
        }
    }
}

/// Extends `policy` periodically with period `horizon`.
pub fn make_periodic(policy: &FiniteHorizonPolicy, horizon: usize) -> Result<PeriodicPolicy, MdpError> {
    if policy.horizon != horizon {
        return Err(MdpError::Dimension(format!(
            "policy covers {} stages, period {horizon} requested",
            policy.horizon
        )));
    }
    Ok(PeriodicPolicy { base: policy.clone(), terminal_cost: None, overflow_action: None })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Stationary(StationaryPolicy),
    FiniteHorizon(FiniteHorizonPolicy),
    Periodic(PeriodicPolicy),
}

impl Policy {
    /// Action distribution at state `s` and (global) step `h`.
    pub fn stage_distribution(&self, s: usize, h: usize) -> Dist<'_> {
        match self {
            Policy::Stationary(p) => p.distribution(s),
            Policy::FiniteHorizon(p) => Dist::Point(Some(p.action(s, h))),
            Policy::Periodic(p) => Dist::Point(Some(p.action_at(s, h))),
        }
    }

    pub(crate) fn check_shape(&self, n_states: usize, n_actions: usize) -> Result<(), MdpError> {
        let table = match self {
            Policy::Stationary(p) => return p.check_shape(n_states, n_actions),
            Policy::FiniteHorizon(p) => p,
            Policy::Periodic(p) => {
                if matches!(p.overflow_action, Some(a) if a >= n_actions) {
                    return Err(MdpError::Policy("overflow action out of range".into()));
                }
                &p.base
            }
        };
        if table.n_states != n_states {
            return Err(MdpError::Dimension(format!("policy has {} states, mdp {n_states}", table.n_states)));
        }
        if table.actions.iter().any(|&a| a >= n_actions) {
            return Err(MdpError::Policy("action out of range".into()));
        }
        Ok(())
    }
}

/// Iterator over `(action, weight)` pairs of a policy distribution.
#[derive(Debug, Clone)]
pub enum Dist<'a> {
    Point(Option<usize>),
    Weights(std::iter::Enumerate<std::slice::Iter<'a, f64>>),
}

impl Iterator for Dist<'_> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            Dist::Point(a) => a.take().map(|a| (a, 1.0)),
            Dist::Weights(it) => it.by_ref().find(|(_, &w)| w > 0.0).map(|(a, &w)| (a, w)),
        }
    }
}

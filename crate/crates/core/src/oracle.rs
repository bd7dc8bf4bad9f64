//! Exact planning and evaluation: SSP value iteration, stationary policy
//! values and hitting times, diameter, the constants `B*, D, T*, T‡`,
//! evaluation of periodic extensions, and epsilon-optimality verdicts.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::mdp::{finite_horizon_dp, FiniteHorizonSpec, MdpError, SspMdp, Violation};
use crate::policy::{FiniteHorizonPolicy, PeriodicPolicy, Policy, StationaryPolicy};

pub const CHAIN_TOL: f64 = 1e-9;
pub const VERDICT_TOL: f64 = 1e-9;
/// Slack on `V^pi_1 <= c_f` before the extension precondition is declared violated.
pub const PRECONDITION_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid mdp: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("no proper policy from states {0:?}")]
    NoProperPolicy(Vec<usize>),
    #[error("value iteration diverged: residual {residual} after {iterations} iterations")]
    Diverged { iterations: usize, residual: f64 },
    #[error("no proper greedy action at state {0}")]
    GreedyImproper(usize),
    #[error("chain inequality violated: {0}")]
    ChainViolated(String),
    #[error("extension precondition violated at state {state}: V1 = {v1}, c_f = {cf}")]
    PreconditionViolated { state: usize, v1: f64, cf: f64 },
    #[error("periodic evaluation did not settle within {0} periods")]
    NotConverged(usize),
    #[error("singular policy system")]
    Singular,
    #[error("unsupported policy: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-10, max_iter: 10_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SspSolution {
    /// `V*` with the goal entry last.
    pub values: Vec<f64>,
    /// Proper greedy policy, lowest index among tight actions.
    pub policy: Vec<usize>,
    pub iterations: usize,
    pub residual: f64,
}

impl SspSolution {
    pub fn stationary(&self) -> StationaryPolicy {
        StationaryPolicy::deterministic(self.policy.clone())
    }

    pub fn max_value(&self) -> f64 {
        let s = self.values.len() - 1;
        self.values[..s].iter().fold(0.0, |m, &x| m.max(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEvaluation {
    /// Expected accumulated cost, `INFINITY` where it diverges; goal entry last.
    pub values: Vec<f64>,
    /// Whether the goal is reached with probability one from each state.
    pub proper: Vec<bool>,
}

impl PolicyEvaluation {
    /// Value with improper states mapped to `INFINITY`.
    pub fn proper_value(&self, s: usize) -> f64 {
        if self.proper[s] {
            self.values[s]
        } else {
            f64::INFINITY
        }
    }
}

fn check_valid(mdp: &SspMdp) -> Result<(), OracleError> {
    let report = mdp.validate();
    if report.is_valid() {
        Ok(())
    } else {
        Err(OracleError::Invalid(report.violations))
    }
}

/// Breadth-first attractor of the goal: states reached in layers, each with
/// the lowest allowed action that hits an earlier layer with positive
/// probability.
fn attractor(mdp: &SspMdp, candidate: &[bool], allowed: impl Fn(usize, usize) -> bool) -> (Vec<bool>, Vec<usize>) {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut reached = vec![false; ns + 1];
    reached[ns] = true;
    let mut action = vec![0; ns];
    loop {
        let mut layer = Vec::new();
        for s in (0..ns).filter(|&s| candidate[s] && !reached[s]) {
            let hit = (0..na).find(|&a| allowed(s, a) && mdp.row(s, a).iter().any(|&(n, p)| p > 0.0 && reached[n]));
            if let Some(a) = hit {
                layer.push((s, a));
            }
        }
        if layer.is_empty() {
            break;
        }
        for (s, a) in layer {
            reached[s] = true;
            action[s] = a;
        }
    }
    reached.truncate(ns);
    (reached, action)
}

/// States from which some policy reaches the goal with probability one, and
/// a proper policy on that region.
pub fn proper_region(mdp: &SspMdp) -> (Vec<bool>, Vec<usize>) {
    let ns = mdp.n_states();
    let mut inside = vec![true; ns];
    loop {
        let safe = |s: usize, a: usize| mdp.row(s, a).iter().all(|&(n, p)| p == 0.0 || n == ns || inside[n]);
        let (reached, action) = attractor(mdp, &inside, safe);
        if reached == inside {
            return (inside, action);
        }
        inside = reached;
    }
}

fn q_value(mdp: &SspMdp, cost: &impl Fn(usize, usize) -> f64, v: &[f64], s: usize, a: usize) -> f64 {
    cost(s, a) + mdp.row(s, a).iter().filter(|e| e.1 > 0.0).map(|&(n, p)| p * v[n]).sum::<f64>()
}

/// Value iteration for the SSP under the model's costs.
pub fn ssp_value_iteration(mdp: &SspMdp, opts: SolveOptions) -> Result<SspSolution, OracleError> {
    check_valid(mdp)?;
    solve_with_costs(mdp, |s, a| mdp.cost(s, a), opts)
}

/// Value iteration under an arbitrary nonnegative cost function.
///
/// Starts from 0 when every cost is positive. Otherwise starts from the value
/// of a proper policy, which upper-bounds `V*` and avoids the spurious fixed
/// points that zero-cost cycles create below it.
pub fn solve_with_costs(
    mdp: &SspMdp,
    cost: impl Fn(usize, usize) -> f64,
    opts: SolveOptions,
) -> Result<SspSolution, OracleError> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let (inside, fallback) = proper_region(mdp);
    let outside: Vec<usize> = (0..ns).filter(|&s| !inside[s]).collect();
    if !outside.is_empty() {
        return Err(OracleError::NoProperPolicy(outside));
    }
    let has_zero = (0..ns).any(|s| (0..na).any(|a| cost(s, a) <= 0.0));
    let mut v = if has_zero {
        evaluate_with_costs(mdp, &StationaryPolicy::deterministic(fallback), &cost)?.values
    } else {
        vec![0.0; ns + 1]
    };
    let mut next = v.clone();
    let mut iterations = 0;
    loop {
        let mut residual: f64 = 0.0;
        for s in 0..ns {
            let best = (0..na).map(|a| q_value(mdp, &cost, &v, s, a)).fold(f64::INFINITY, f64::min);
            residual = residual.max((best - v[s]).abs());
            next[s] = best;
        }
        std::mem::swap(&mut v, &mut next);
        iterations += 1;
        if residual <= opts.tol {
            break;
        }
        if iterations >= opts.max_iter || !residual.is_finite() {
            return Err(OracleError::Diverged { iterations, residual });
        }
    }
    let policy = greedy_proper(mdp, &cost, &v, opts.tol)?;
    let exact = evaluate_with_costs(mdp, &StationaryPolicy::deterministic(policy.clone()), &cost)?;
    let scale = 1.0 + v.iter().fold(0.0_f64, |m, &x| m.max(x));
    if exact.proper.iter().all(|&p| p) && (0..ns).all(|s| (exact.values[s] - v[s]).abs() <= 1e-6 * scale) {
        v = exact.values;
    }
    let residual = (0..ns)
        .map(|s| {
            let best = (0..na).map(|a| q_value(mdp, &cost, &v, s, a)).fold(f64::INFINITY, f64::min);
            (best - v[s]).abs()
        })
        .fold(0.0, f64::max);
    Ok(SspSolution { values: v, policy, iterations, residual })
}

/// Lowest-index greedy policy; states where it is improper are repaired by
/// an attractor restricted to near-tight actions.
fn greedy_proper(
    mdp: &SspMdp,
    cost: &impl Fn(usize, usize) -> f64,
    v: &[f64],
    tol: f64,
) -> Result<Vec<usize>, OracleError> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let q = |s: usize, a: usize| q_value(mdp, cost, v, s, a);
    let mut policy = vec![0; ns];
    for (s, slot) in policy.iter_mut().enumerate() {
        let mut best = 0;
        for a in 1..na {
            if q(s, a) < q(s, best) - 1e-12 * (1.0 + q(s, best).abs()) {
                best = a;
            }
        }
        *slot = best;
    }
    let eval = evaluate_with_costs(mdp, &StationaryPolicy::deterministic(policy.clone()), cost)?;
    if eval.proper.iter().all(|&p| p) {
        return Ok(policy);
    }
    let slack = (1e3 * tol).max(1e-9) * (1.0 + v.iter().fold(0.0_f64, |m, &x| m.max(x)));
    let tight = |s: usize, a: usize| q(s, a) <= v[s] + slack;
    let bad: Vec<bool> = eval.proper.iter().map(|&p| !p).collect();
    // Proper states keep their action; they are closed under the greedy chain.
    let mut reached: Vec<bool> = eval.proper.clone();
    reached.push(true);
    loop {
        let mut layer = Vec::new();
        for s in (0..ns).filter(|&s| bad[s] && !reached[s]) {
            if let Some(a) = (0..na).find(|&a| tight(s, a) && mdp.row(s, a).iter().any(|&(n, p)| p > 0.0 && reached[n]))
            {
                layer.push((s, a));
            }
        }
        if layer.is_empty() {
            break;
        }
        for (s, a) in layer {
            reached[s] = true;
            policy[s] = a;
        }
    }
    if let Some(s) = (0..ns).find(|&s| !reached[s]) {
        return Err(OracleError::GreedyImproper(s));
    }
    Ok(policy)
}

/// Exact value of a stationary policy under the model's costs.
pub fn policy_value(mdp: &SspMdp, policy: &StationaryPolicy) -> Result<PolicyEvaluation, OracleError> {
    evaluate_with_costs(mdp, policy, |s, a| mdp.cost(s, a))
}

/// Expected steps to goal under `policy`, `INFINITY` where improper.
pub fn hitting_time(mdp: &SspMdp, policy: &StationaryPolicy) -> Result<Vec<f64>, OracleError> {
    let eval = evaluate_with_costs(mdp, policy, |_, _| 1.0)?;
    Ok((0..mdp.n_states()).map(|s| eval.proper_value(s)).collect())
}

fn reach_from(adj: &[Vec<(usize, f64)>], start: usize, n: usize) -> Vec<bool> {
    let mut seen = vec![false; n + 1];
    let mut stack = vec![start];
    seen[start] = true;
    while let Some(u) = stack.pop() {
        if u == n {
            continue;
        }
        for &(w, _) in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen
}

/// Backward closure of `targets` in a graph whose last node index `n` is the
/// absorbing goal.
fn backward_closure(adj: &[Vec<(usize, f64)>], targets: &[bool]) -> Vec<bool> {
    let n = adj.len();
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for (u, row) in adj.iter().enumerate() {
        for &(w, _) in row {
            rev[w].push(u);
        }
    }
    let mut mark = targets.to_vec();
    let mut stack: Vec<usize> = (0..=n).filter(|&i| mark[i]).collect();
    while let Some(w) = stack.pop() {
        for &u in &rev[w] {
            if !mark[u] {
                mark[u] = true;
                stack.push(u);
            }
        }
    }
    mark
}

/// Proper flags for a Markov chain on `0..n` plus goal `n`: a node is proper
/// iff every node it can reach can still reach the goal.
fn chain_proper(adj: &[Vec<(usize, f64)>]) -> Vec<bool> {
    let n = adj.len();
    let mut goal = vec![false; n + 1];
    goal[n] = true;
    let reaches_goal = backward_closure(adj, &goal);
    let trapped: Vec<bool> = reaches_goal.iter().map(|&r| !r).collect();
    let improper = backward_closure(adj, &trapped);
    (0..n).map(|u| !improper[u]).collect()
}

/// Exact accumulated cost of a stationary policy under `cost`.
///
/// Properness comes from reachability on the policy chain. For improper
/// states the accumulated cost is infinite iff a recurrent non-goal class
/// with positive cost is reachable; otherwise it is finite and solved with
/// the zero-cost recurrent states pinned at 0.
pub fn evaluate_with_costs(
    mdp: &SspMdp,
    policy: &StationaryPolicy,
    cost: impl Fn(usize, usize) -> f64,
) -> Result<PolicyEvaluation, OracleError> {
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    Policy::Stationary(policy.clone()).check_shape(ns, na)?;
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ns];
    let mut c = vec![0.0; ns];
    for s in 0..ns {
        for (a, w) in policy.distribution(s) {
            c[s] += w * cost(s, a);
            for &(n, p) in mdp.row(s, a) {
                if p * w <= 0.0 {
                    continue;
                }
                match adj[s].iter_mut().find(|e| e.0 == n) {
                    Some(e) => e.1 += p * w,
                    None => adj[s].push((n, p * w)),
                }
            }
        }
    }
    let proper = chain_proper(&adj);
    let mut infinite = vec![false; ns + 1];
    let mut pinned = vec![false; ns];
    if proper.iter().any(|&p| !p) {
        let reach: Vec<Option<Vec<bool>>> =
            (0..ns).map(|s| if proper[s] { None } else { Some(reach_from(&adj, s, ns)) }).collect();
        let mut costly_recurrent = vec![false; ns + 1];
        for s in (0..ns).filter(|&s| !proper[s]) {
            let rs = reach[s].as_ref().unwrap();
            // Trapped states only reach trapped (hence improper) states.
            let recurrent = !rs[ns] && (0..ns).all(|t| !rs[t] || reach[t].as_ref().is_some_and(|rt| rt[s]));
            if recurrent {
                if c[s] > 0.0 {
                    costly_recurrent[s] = true;
                } else {
                    pinned[s] = true;
                }
            }
        }
        infinite = backward_closure(&adj, &costly_recurrent);
        for s in 0..ns {
            if infinite[s] {
                pinned[s] = false;
            }
        }
    }
    let unknown: Vec<usize> = (0..ns).filter(|&s| !infinite[s] && !pinned[s]).collect();
    let mut index = vec![usize::MAX; ns];
    for (i, &s) in unknown.iter().enumerate() {
        index[s] = i;
    }
    let m = unknown.len();
    let mut values = vec![0.0; ns + 1];
    if m > 0 {
        let mut mat = DMatrix::<f64>::identity(m, m);
        let mut rhs = DVector::<f64>::zeros(m);
        for (i, &s) in unknown.iter().enumerate() {
            rhs[i] = c[s];
            for &(n, p) in &adj[s] {
                if n < ns && index[n] != usize::MAX {
                    mat[(i, index[n])] -= p;
                }
            }
        }
        let sol = mat.lu().solve(&rhs).ok_or(OracleError::Singular)?;
        for (i, &s) in unknown.iter().enumerate() {
            values[s] = sol[i].max(0.0);
        }
    }
    for s in 0..ns {
        if infinite[s] {
            values[s] = f64::INFINITY;
        }
    }
    Ok(PolicyEvaluation { values, proper })
}

/// `max_s min_pi T^pi(s)`; `INFINITY` if some state cannot reach the goal.
pub fn diameter(mdp: &SspMdp) -> Result<f64, OracleError> {
    diameter_with(mdp, SolveOptions::default())
}

pub fn diameter_with(mdp: &SspMdp, opts: SolveOptions) -> Result<f64, OracleError> {
    check_valid(mdp)?;
    match solve_with_costs(mdp, |_, _| 1.0, opts) {
        Ok(sol) => Ok(sol.max_value()),
        Err(OracleError::NoProperPolicy(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SspConstants {
    pub b_star: f64,
    pub t_star: f64,
    /// `B*/c_min`, `INFINITY` when `c_min = 0`.
    pub t_ddagger: f64,
    pub diameter: f64,
    pub v_star: Vec<f64>,
    pub pi_star: Vec<usize>,
}

/// `B*, T*, T‡, D` and `V*`, with the chain `B* <= D <= T* <= T‡` checked.
///
/// The first link needs costs bounded by 1, so it is skipped when a terminal
/// action charges `J > 1`.
pub fn constants(mdp: &SspMdp) -> Result<SspConstants, OracleError> {
    constants_with(mdp, SolveOptions::default())
}

pub fn constants_with(mdp: &SspMdp, opts: SolveOptions) -> Result<SspConstants, OracleError> {
    let sol = ssp_value_iteration(mdp, opts)?;
    let b_star = sol.max_value();
    let t = hitting_time(mdp, &sol.stationary())?;
    let t_star = t.iter().fold(0.0_f64, |m, &x| m.max(x));
    let d = diameter_with(mdp, opts)?;
    let t_ddagger = if mdp.c_min() > 0.0 { b_star / mdp.c_min() } else { f64::INFINITY };
    let unit_bounded = mdp.terminal_action().is_none_or(|t| t.cost <= 1.0);
    let ok = |lo: f64, hi: f64| !(lo.is_finite() && hi.is_finite()) || lo <= hi + CHAIN_TOL;
    if unit_bounded && !ok(b_star, d) {
        return Err(OracleError::ChainViolated(format!("B* = {b_star} > D = {d}")));
    }
    if !ok(d, t_star) {
        return Err(OracleError::ChainViolated(format!("D = {d} > T* = {t_star}")));
    }
    if !ok(t_star, t_ddagger) {
        return Err(OracleError::ChainViolated(format!("T* = {t_star} > T‡ = {t_ddagger}")));
    }
    Ok(SspConstants { b_star, t_star, t_ddagger, diameter: d, v_star: sol.values, pi_star: sol.policy })
}

/// `c + P v` for `H` stages of `base`, terminal values `terminal`.
fn h_step(mdp: &SspMdp, base: &FiniteHorizonPolicy, terminal: &[f64]) -> Vec<f64> {
    let ns = mdp.n_states();
    let mut next = terminal.to_vec();
    let mut cur = vec![0.0; ns + 1];
    for h in (1..=base.horizon()).rev() {
        for s in 0..ns {
            let a = base.action(s, h);
            cur[s] = mdp.cost(s, a)
                + mdp.row(s, a).iter().filter(|e| e.1 > 0.0).map(|&(n, p)| p * next[n]).sum::<f64>();
        }
        cur[ns] = 0.0;
        std::mem::swap(&mut cur, &mut next);
    }
    next
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedValue {
    /// Limit of the iterates (goal entry last).
    pub values: Vec<f64>,
    /// `V^pi_1` of `M_{H,c_f}`, the first iterate.
    pub first_stage: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest entrywise increase between successive iterates (<= 0 when monotone).
    pub max_increase: f64,
}

/// Value of the periodic extension of `base`, by iterating the `H`-step
/// policy operator downward from `c_f`.
pub fn eval_extended(
    mdp: &SspMdp,
    base: &FiniteHorizonPolicy,
    spec: &FiniteHorizonSpec,
    tol: f64,
    max_iter: usize,
) -> Result<ExtendedValue, OracleError> {
    let ns = mdp.n_states();
    Policy::FiniteHorizon(base.clone()).check_shape(ns, mdp.n_actions())?;
    if base.horizon() != spec.horizon() {
        return Err(MdpError::Dimension(format!("policy horizon {} vs spec {}", base.horizon(), spec.horizon())).into());
    }
    let cf = spec.terminal_cost();
    if cf.len() != ns + 1 {
        return Err(MdpError::Dimension("terminal cost length".into()).into());
    }
    let mut cur = cf.to_vec();
    let mut first = None;
    let mut max_increase = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        let next = h_step(mdp, base, &cur);
        iterations += 1;
        if first.is_none() {
            for s in 0..ns {
                if next[s] > cf[s] + PRECONDITION_TOL {
                    return Err(OracleError::PreconditionViolated { state: s, v1: next[s], cf: cf[s] });
                }
            }
            first = Some(next.clone());
        }
        let mut diff: f64 = 0.0;
        for s in 0..ns {
            max_increase = max_increase.max(next[s] - cur[s]);
            diff = diff.max((next[s] - cur[s]).abs());
        }
        cur = next;
        if diff <= tol {
            converged = true;
            break;
        }
    }
    Ok(ExtendedValue {
        values: cur,
        first_stage: first.unwrap_or_else(|| cf.to_vec()),
        iterations,
        converged,
        max_increase,
    })
}

/// Proper flags of the periodic chain on `(s, h)` for start stage 1.
fn periodic_proper(mdp: &SspMdp, base: &FiniteHorizonPolicy) -> Vec<bool> {
    let (ns, hz) = (mdp.n_states(), base.horizon());
    let n = ns * hz;
    let goal = n;
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for h in 1..=hz {
        let next_h = h % hz;
        for s in 0..ns {
            let a = base.action(s, h);
            for &(t, p) in mdp.row(s, a) {
                if p > 0.0 {
                    let node = if t == ns { goal } else { next_h * ns + t };
                    adj[(h - 1) * ns + s].push((node, p));
                }
            }
        }
    }
    let flags = chain_proper(&adj);
    flags[..ns].to_vec()
}

/// Exact SSP value of a periodic policy.
///
/// Escape-overflow policies are one finite-horizon pass with the overflow
/// action's value as terminal cost. Repeating policies use the downward
/// extension iteration when the learner's `c_f` satisfies its precondition,
/// and otherwise iterate upward from 0 on the states that are proper.
pub fn periodic_value(
    mdp: &SspMdp,
    policy: &PeriodicPolicy,
    opts: SolveOptions,
) -> Result<PolicyEvaluation, OracleError> {
    let ns = mdp.n_states();
    let base = policy.base();
    if let Some(a) = policy.overflow_action() {
        let tail = policy_value(mdp, &StationaryPolicy::deterministic(vec![a; ns]))?;
        if tail.proper.iter().any(|&p| !p) {
            return Err(OracleError::Unsupported("overflow action is not proper".into()));
        }
        let spec = FiniteHorizonSpec::new(base.horizon(), tail.values)?;
        let table = finite_horizon_dp(mdp, &spec, Some(&Policy::FiniteHorizon(base.clone())))?;
        return Ok(PolicyEvaluation { values: table.v(1).to_vec(), proper: vec![true; ns] });
    }
    let proper = periodic_proper(mdp, base);
    if proper.iter().all(|&p| p) {
        if let Some(cf) = policy.terminal_cost() {
            let spec = FiniteHorizonSpec::new(base.horizon(), cf.to_vec())?;
            match eval_extended(mdp, base, &spec, opts.tol, opts.max_iter) {
                Ok(ext) if ext.converged => return Ok(PolicyEvaluation { values: ext.values, proper }),
                Ok(_) => return Err(OracleError::NotConverged(opts.max_iter)),
                Err(OracleError::PreconditionViolated { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    // Upward iteration from 0; improper starts are pinned at infinity and
    // never reached from proper ones.
    let mut cur = vec![0.0; ns + 1];
    for s in 0..ns {
        if !proper[s] {
            cur[s] = f64::INFINITY;
        }
    }
    for _ in 0..opts.max_iter {
        let mut next = h_step(mdp, base, &cur);
        let mut diff: f64 = 0.0;
        for s in 0..ns {
            if proper[s] {
                diff = diff.max((next[s] - cur[s]).abs());
            } else {
                next[s] = f64::INFINITY;
            }
        }
        cur = next;
        if diff <= opts.tol {
            return Ok(PolicyEvaluation { values: cur, proper });
        }
    }
    Err(OracleError::NotConverged(opts.max_iter))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckMode {
    AllStates,
    InitState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityVerdict {
    pub epsilon: f64,
    pub mode: CheckMode,
    pub gap: f64,
    pub pass: bool,
}

/// SSP value of any policy that runs forever; improper states map to `INFINITY`.
pub fn ssp_policy_value(mdp: &SspMdp, policy: &Policy, opts: SolveOptions) -> Result<Vec<f64>, OracleError> {
    let eval = match policy {
        Policy::Stationary(p) => policy_value(mdp, p)?,
        Policy::Periodic(p) => periodic_value(mdp, p, opts)?,
        Policy::FiniteHorizon(_) => {
            return Err(OracleError::Unsupported("finite-horizon table has no SSP value; extend it first".into()))
        }
    };
    Ok((0..mdp.n_states()).map(|s| eval.proper_value(s)).collect())
}

pub fn check_correctness(
    mdp: &SspMdp,
    policy: &Policy,
    epsilon: f64,
    mode: CheckMode,
) -> Result<OptimalityVerdict, OracleError> {
    let sol = ssp_value_iteration(mdp, SolveOptions::default())?;
    check_against(mdp, &sol.values, policy, epsilon, mode)
}

/// Same as [`check_correctness`] with a precomputed `V*`.
pub fn check_against(
    mdp: &SspMdp,
    v_star: &[f64],
    policy: &Policy,
    epsilon: f64,
    mode: CheckMode,
) -> Result<OptimalityVerdict, OracleError> {
    let v = ssp_policy_value(mdp, policy, SolveOptions::default())?;
    let states: Vec<usize> = match mode {
        CheckMode::AllStates => (0..mdp.n_states()).collect(),
        CheckMode::InitState => vec![mdp.init_state()],
    };
    let gap = states.iter().map(|&s| v[s] - v_star[s]).fold(f64::NEG_INFINITY, f64::max);
    Ok(OptimalityVerdict { epsilon, mode, gap, pass: gap <= epsilon + VERDICT_TOL })
}

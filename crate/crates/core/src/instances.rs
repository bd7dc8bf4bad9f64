//! Hard-instance generators for the lower-bound families.
//!
//! Each generator returns a validated model plus an [`InstanceManifest`]
//! holding the construction parameters, the derived symbols and a list of
//! oracle-checked certificates. A manifest round-trips through key-value
//! text and regenerates the same model bit for bit.

use std::fmt;

use thiserror::Error;

use crate::keyvalue::{KvDoc, KvError};
use crate::mdp::{MdpError, SspBuilder, SspMdp, Violation};
use crate::oracle::{self, OracleError, SspConstants, CHAIN_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("parameter out of range: {0}")]
    Params(String),
    #[error("S = {requested} is not a full-tree size; nearest admissible S is {nearest}")]
    Inadmissible { requested: usize, nearest: usize },
    #[error("certificate `{name}` failed: {value} not in [{lower}, {upper}]")]
    Certificate { name: String, value: f64, lower: f64, upper: f64 },
    #[error("generated model is invalid: {0:?}")]
    Invalid(Vec<Violation>),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), InstanceError> {
    if cond {
        Ok(())
    } else {
        Err(InstanceError::Params(msg()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroVariant {
    M0,
    Plus,
    Minus,
}

impl ZeroVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ZeroVariant::M0 => "M0",
            ZeroVariant::Plus => "Mplus",
            ZeroVariant::Minus => "Mminus",
        }
    }
}

impl std::str::FromStr for ZeroVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "M0" => Ok(ZeroVariant::M0),
            "Mplus" => Ok(ZeroVariant::Plus),
            "Mminus" => Ok(ZeroVariant::Minus),
            _ => Err(format!("unknown variant `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    pub states: usize,
    pub actions: usize,
    pub b: f64,
    pub c_min: f64,
    pub t0: f64,
    /// Hitting-time prior; `INFINITY` when unknown.
    pub t_bar: f64,
    pub epsilon: f64,
    /// Index into the leaf arms `(leaf, action >= 1)`, leaf-major.
    pub arm: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LockParams {
    pub states: usize,
    pub actions: usize,
    pub b_star: f64,
    pub c_min: f64,
    pub epsilon: f64,
    pub lock: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalParams {
    pub states: usize,
    /// Includes the escape action, which is the last index.
    pub actions: usize,
    pub b: f64,
    pub c_min: f64,
    pub epsilon: f64,
    pub j: f64,
    pub lock: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsTParams {
    pub states: usize,
    pub actions: usize,
    pub b_star: f64,
    pub b_t: f64,
    pub t: f64,
    pub epsilon: f64,
    /// Chain advance probability; `1/(2T)` when absent.
    pub p_override: Option<f64>,
    pub tree_arm: Option<usize>,
    pub chain_lock: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSpec {
    Tree(TreeParams),
    ZeroCmin { variant: ZeroVariant, n: u64 },
    BpiLock(LockParams),
    BpiTerminal(TerminalParams),
    EpsT(EpsTParams),
    /// `member` 0 is the deterministic loop, 1 the leaky one.
    HorizonFree { n: u64, member: u8 },
}

impl InstanceSpec {
    pub fn family(&self) -> &'static str {
        match self {
            InstanceSpec::Tree(_) => "tree",
            InstanceSpec::ZeroCmin { .. } => "zero-cmin",
            InstanceSpec::BpiLock(_) => "bpi-lock",
            InstanceSpec::BpiTerminal(_) => "bpi-terminal",
            InstanceSpec::EpsT(_) => "eps-t",
            InstanceSpec::HorizonFree { .. } => "horizon-free",
        }
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut d = KvDoc::new();
        d.push("family", self.family());
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let opt = |v: Option<usize>| v.map_or("none".to_string(), |x| x.to_string());
        match self {
            InstanceSpec::Tree(p) => {
                d.push("S", p.states);
                d.push("A", p.actions);
                d.push("B", p.b);
                d.push("c_min", p.c_min);
                d.push("T0", p.t0);
                d.push("T_bar", p.t_bar);
                d.push("epsilon", p.epsilon);
                d.push("arm", opt(p.arm));
            }
            InstanceSpec::ZeroCmin { variant, n } => {
                d.push("variant", variant.as_str());
                d.push("n", n);
            }
            InstanceSpec::BpiLock(p) => {
                d.push("S", p.states);
                d.push("A", p.actions);
                d.push("B_star", p.b_star);
                d.push("c_min", p.c_min);
                d.push("epsilon", p.epsilon);
                d.push("lock", list(&p.lock));
            }
            InstanceSpec::BpiTerminal(p) => {
                d.push("S", p.states);
                d.push("A", p.actions);
                d.push("B", p.b);
                d.push("c_min", p.c_min);
                d.push("epsilon", p.epsilon);
                d.push("J", p.j);
                d.push("lock", list(&p.lock));
            }
            InstanceSpec::EpsT(p) => {
                d.push("S", p.states);
                d.push("A", p.actions);
                d.push("B_star", p.b_star);
                d.push("B_T", p.b_t);
                d.push("T", p.t);
                d.push("epsilon", p.epsilon);
                d.push("p_override", p.p_override.map_or("none".to_string(), |x| x.to_string()));
                d.push("tree_arm", opt(p.tree_arm));
                d.push("chain_lock", list(&p.chain_lock));
            }
            InstanceSpec::HorizonFree { n, member } => {
                d.push("n", n);
                d.push("member", member);
            }
        }
        d
    }

    /// Reads the parameter keys; derived and certificate keys are ignored.
    pub fn from_kv(doc: &KvDoc) -> Result<Self, InstanceError> {
        fn opt<T: std::str::FromStr>(doc: &KvDoc, key: &str) -> Result<Option<T>, InstanceError> {
            match doc.get(key) {
                None | Some("none") => Ok(None),
                Some(_) => Ok(doc.parsed(key)?),
            }
        }
        let list = |key: &str| -> Result<Vec<usize>, InstanceError> {
            match doc.require(key)? {
                "" => Ok(Vec::new()),
                _ => Ok(doc.list(key)?.unwrap_or_default()),
            }
        };
        let spec = match doc.require("family")? {
            "tree" => InstanceSpec::Tree(TreeParams {
                states: doc.required("S")?,
                actions: doc.required("A")?,
                b: doc.required("B")?,
                c_min: doc.required("c_min")?,
                t0: doc.required("T0")?,
                t_bar: doc.required("T_bar")?,
                epsilon: doc.required("epsilon")?,
                arm: opt(doc, "arm")?,
            }),
            "zero-cmin" => InstanceSpec::ZeroCmin {
                variant: doc
                    .require("variant")?
                    .parse()
                    .map_err(InstanceError::Manifest)?,
                n: doc.required("n")?,
            },
            "bpi-lock" => InstanceSpec::BpiLock(LockParams {
                states: doc.required("S")?,
                actions: doc.required("A")?,
                b_star: doc.required("B_star")?,
                c_min: doc.required("c_min")?,
                epsilon: doc.required("epsilon")?,
                lock: list("lock")?,
            }),
            "bpi-terminal" => InstanceSpec::BpiTerminal(TerminalParams {
                states: doc.required("S")?,
                actions: doc.required("A")?,
                b: doc.required("B")?,
                c_min: doc.required("c_min")?,
                epsilon: doc.required("epsilon")?,
                j: doc.required("J")?,
                lock: list("lock")?,
            }),
            "eps-t" => InstanceSpec::EpsT(EpsTParams {
                states: doc.required("S")?,
                actions: doc.required("A")?,
                b_star: doc.required("B_star")?,
                b_t: doc.required("B_T")?,
                t: doc.required("T")?,
                epsilon: doc.required("epsilon")?,
                p_override: opt(doc, "p_override")?,
                tree_arm: opt(doc, "tree_arm")?,
                chain_lock: list("chain_lock")?,
            }),
            "horizon-free" => InstanceSpec::HorizonFree { n: doc.required("n")?, member: doc.required("member")? },
            other => return Err(InstanceError::Manifest(format!("unknown family `{other}`"))),
        };
        Ok(spec)
    }
}

/// A designed property checked against the oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub name: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub holds: bool,
}

impl Certificate {
    /// `lower <= value <= upper`, both ends widened by the chain tolerance.
    pub fn range(name: &str, value: f64, lower: f64, upper: f64) -> Self {
        let holds = value >= lower - CHAIN_TOL && value <= upper + CHAIN_TOL;
        Certificate { name: name.to_string(), value, lower, upper, holds }
    }

    pub fn equals(name: &str, value: f64, expected: f64, tol: f64) -> Self {
        let holds = (value - expected).abs() <= tol;
        Certificate { name: name.to_string(), value, lower: expected - tol, upper: expected + tol, holds }
    }

    /// Strictly above `bound`.
    pub fn exceeds(name: &str, value: f64, bound: f64) -> Self {
        Certificate { name: name.to_string(), value, lower: bound, upper: f64::INFINITY, holds: value > bound }
    }

    pub fn action(name: &str, chosen: usize, designed: usize) -> Self {
        let (v, d) = (chosen as f64, designed as f64);
        Certificate { name: name.to_string(), value: v, lower: d, upper: d, holds: chosen == designed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceManifest {
    pub spec: InstanceSpec,
    /// Construction symbols computed from the parameters.
    pub derived: Vec<(String, f64)>,
    pub certificates: Vec<Certificate>,
    pub b_star: f64,
    pub t_star: f64,
    pub diameter: f64,
}

impl InstanceManifest {
    pub fn derived(&self, key: &str) -> Option<f64> {
        self.derived.iter().find(|(k, _)| k == key).map(|e| e.1)
    }

    pub fn certificate(&self, name: &str) -> Option<&Certificate> {
        self.certificates.iter().find(|c| c.name == name)
    }

    pub fn to_kv(&self) -> KvDoc {
        let mut d = self.spec.to_kv();
        for (k, v) in &self.derived {
            d.push(format!("derived.{k}"), v);
        }
        d.push("oracle.B_star", self.b_star);
        d.push("oracle.T_star", self.t_star);
        d.push("oracle.D", self.diameter);
        for c in &self.certificates {
            d.push(format!("cert.{}.value", c.name), c.value);
            d.push(format!("cert.{}.lower", c.name), c.lower);
            d.push(format!("cert.{}.upper", c.name), c.upper);
            d.push(format!("cert.{}.holds", c.name), c.holds);
        }
        d
    }

    pub fn render(&self) -> String {
        self.to_kv().render()
    }

    /// Rebuilds the model from the parameter keys of a rendered manifest.
    pub fn regenerate(text: &str) -> Result<(SspMdp, InstanceManifest), InstanceError> {
        generate(&InstanceSpec::from_kv(&KvDoc::parse(text)?)?)
    }
}

impl fmt::Display for InstanceManifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

pub fn generate(spec: &InstanceSpec) -> Result<(SspMdp, InstanceManifest), InstanceError> {
    match spec {
        InstanceSpec::Tree(p) => tree_instance(p),
        InstanceSpec::ZeroCmin { variant, n } => zero_cmin_instance(*variant, *n),
        InstanceSpec::BpiLock(p) => bpi_lock_instance(p),
        InstanceSpec::BpiTerminal(p) => bpi_terminal_instance(p),
        InstanceSpec::EpsT(p) => eps_t_instance(p),
        InstanceSpec::HorizonFree { n, member } => {
            check(*member <= 1, || format!("member must be 0 or 1, got {member}"))?;
            let (m0, m1) = horizon_free_pair(*n)?;
            Ok(if *member == 0 { m0 } else { m1 })
        }
    }
}

/// Validates, solves, and checks every certificate.
fn finish(
    mdp: SspMdp,
    spec: InstanceSpec,
    derived: Vec<(&str, f64)>,
    certify: impl FnOnce(&SspMdp, &SspConstants) -> Vec<Certificate>,
) -> Result<(SspMdp, InstanceManifest), InstanceError> {
    let report = mdp.validate();
    if !report.is_valid() {
        return Err(InstanceError::Invalid(report.violations));
    }
    let k = oracle::constants(&mdp)?;
    let certificates = certify(&mdp, &k);
    if let Some(c) = certificates.iter().find(|c| !c.holds) {
        return Err(InstanceError::Certificate {
            name: c.name.clone(),
            value: c.value,
            lower: c.lower,
            upper: c.upper,
        });
    }
    let manifest = InstanceManifest {
        spec,
        derived: derived.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        certificates,
        b_star: k.b_star,
        t_star: k.t_star,
        diameter: k.diameter,
    };
    Ok((mdp, manifest))
}

fn q_star(mdp: &SspMdp, v: &[f64], s: usize, a: usize) -> f64 {
    mdp.cost(s, a) + mdp.expect(s, a, v)
}

/// Smallest `Q*(s, a) - V*(s)` over the listed actions.
fn min_gap(mdp: &SspMdp, v: &[f64], s: usize, actions: impl Iterator<Item = usize>) -> f64 {
    actions.map(|a| q_star(mdp, v, s, a) - v[s]).fold(f64::INFINITY, f64::min)
}

fn argmin_q(mdp: &SspMdp, v: &[f64], s: usize, actions: impl Iterator<Item = usize>) -> usize {
    let mut best = (f64::INFINITY, 0);
    for a in actions {
        let q = q_star(mdp, v, s, a);
        if q < best.0 - 1e-12 {
            best = (q, a);
        }
    }
    best.1
}

/// Full `arity`-ary tree laid out breadth first: children of `k` are
/// `k * arity + 1 ..= k * arity + arity`.
#[derive(Debug, Clone, Copy)]
struct Tree {
    arity: usize,
    levels: u32,
    nodes: usize,
    first_leaf: usize,
}

fn tree_size(arity: usize, levels: u32) -> usize {
    (arity.pow(levels) - 1) / (arity - 1)
}

impl Tree {
    fn fit(nodes: usize, arity: usize) -> Result<Tree, InstanceError> {
        let mut l = 1;
        while tree_size(arity, l) < nodes {
            l += 1;
        }
        if tree_size(arity, l) == nodes {
            return Ok(Tree { arity, levels: l, nodes, first_leaf: tree_size(arity, l - 1) });
        }
        let (lo, hi) = (tree_size(arity, l - 1), tree_size(arity, l));
        let nearest = if l > 1 && nodes - lo <= hi - nodes { lo } else { hi };
        Err(InstanceError::Inadmissible { requested: nodes, nearest })
    }

    fn leaves(&self) -> usize {
        self.nodes - self.first_leaf
    }

    /// Leaf state and action of arm `i`.
    fn arm(&self, i: usize) -> (usize, usize) {
        (self.first_leaf + i / (self.arity - 1), 1 + i % (self.arity - 1))
    }
}

/// Leaf design of the tree family. `alpha` tilts action 0 at every leaf and
/// the flipped arm, if any.
#[derive(Debug, Clone, Copy)]
struct LeafDesign {
    b: f64,
    c_min: f64,
    t0: f64,
    t1: f64,
    alpha: f64,
}

fn stay_or_goal(bld: &mut SspBuilder, s: usize, a: usize, goal: usize, p_goal: f64) {
    bld.transition(s, a, goal, p_goal);
    if p_goal < 1.0 {
        bld.transition(s, a, s, 1.0 - p_goal);
    }
}

/// Writes the tree on actions `0..arity` into states `offset..offset + nodes`.
fn fill_tree(bld: &mut SspBuilder, tree: &Tree, offset: usize, goal: usize, d: &LeafDesign, arm: Option<usize>) {
    for k in 0..tree.first_leaf {
        for a in 0..tree.arity {
            bld.cost(offset + k, a, d.c_min).transition(offset + k, a, offset + k * tree.arity + 1 + a, 1.0);
        }
    }
    let flipped = arm.map(|i| tree.arm(i));
    for k in tree.first_leaf..tree.nodes {
        let s = offset + k;
        bld.cost(s, 0, d.b / d.t0);
        stay_or_goal(bld, s, 0, goal, (1.0 + d.t1 * d.alpha / 2.0) / d.t0);
        for a in 1..tree.arity {
            let extra = if flipped == Some((k, a)) { d.alpha } else { 0.0 };
            bld.cost(s, a, d.b / d.t1);
            stay_or_goal(bld, s, a, goal, 1.0 / d.t1 + extra);
        }
    }
}

/// Full `A`-ary tree with two leaf action classes. `arm = None` gives the
/// reference model; `Some(i)` makes arm `i` the unique good pair.
pub fn tree_instance(p: &TreeParams) -> Result<(SspMdp, InstanceManifest), InstanceError> {
    check(p.actions >= 3, || format!("A = {} < 3", p.actions))?;
    check(p.b >= 2.0 && p.b.is_finite(), || format!("B = {} < 2", p.b))?;
    check((0.0..=1.0).contains(&p.c_min), || format!("c_min = {} outside [0,1]", p.c_min))?;
    check(p.epsilon > 0.0 && p.epsilon < 1.0 / 32.0, || format!("epsilon = {} outside (0, 1/32)", p.epsilon))?;
    let tree = Tree::fit(p.states, p.actions)?;
    let t1 = (p.t_bar / 2.0).min(if p.c_min > 0.0 { p.b / p.c_min } else { f64::INFINITY });
    check(t1.is_finite(), || "min(T_bar/2, B/c_min) must be finite".into())?;
    let log_s = (p.states as f64).ln() / (p.actions as f64).ln() + 1.0;
    check(p.t0 >= p.b.max(log_s), || format!("T0 = {} < max(B, log_A S + 1) = {}", p.t0, p.b.max(log_s)))?;
    check(p.t0 <= t1, || format!("T0 = {} > min(T_bar/2, B/c_min) = {t1}", p.t0))?;
    let n_arms = tree.leaves() * (p.actions - 1);
    if let Some(i) = p.arm {
        check(i < n_arms, || format!("arm {i} >= {n_arms}"))?;
    }
    let alpha = 32.0 * p.epsilon / (t1 * p.b);
    let design = LeafDesign { b: p.b, c_min: p.c_min, t0: p.t0, t1, alpha };
    let mut bld = SspBuilder::new(p.states, p.actions);
    bld.c_min(p.c_min);
    fill_tree(&mut bld, &tree, 0, p.states, &design, p.arm);
    let mdp = bld.build()?;
    let derived = vec![
        ("levels", tree.levels as f64),
        ("leaves", tree.leaves() as f64),
        ("N", n_arms as f64),
        ("T1", t1),
        ("alpha", alpha),
    ];
    let (b, eps, t_bar, arm) = (p.b, p.epsilon, p.t_bar, p.arm);
    finish(mdp, InstanceSpec::Tree(p.clone()), derived, |m, k| {
        let v = &k.v_star;
        let mut certs = vec![
            Certificate::range("b_star", k.b_star, b / 2.0, 2.0 * b),
            Certificate::range("t_star", k.t_star, 0.0, t_bar),
        ];
        let (leaf, good) = match arm {
            None => (tree.first_leaf, 0),
            Some(i) => tree.arm(i),
        };
        certs.push(Certificate::action("leaf_action", argmin_q(m, v, leaf, 0..tree.arity), good));
        certs.push(Certificate::exceeds("leaf_gap", min_gap(m, v, leaf, (0..tree.arity).filter(|&a| a != good)), eps));
        certs
    })
}

/// Two-state model with a free self-loop at `s0`. Action 0 is `a_0`,
/// action 1 is `a_g`.
pub fn zero_cmin_instance(variant: ZeroVariant, n: u64) -> Result<(SspMdp, InstanceManifest), InstanceError> {
    check(variant == ZeroVariant::M0 || n >= 2, || format!("n = {n} < 2"))?;
    let q = 1.0 / n.max(1) as f64;
    let mut bld = SspBuilder::new(2, 2);
    bld.cost(0, 0, 0.0).cost(0, 1, 0.5).transition(0, 1, 2, 1.0);
    for a in 0..2 {
        bld.cost(1, a, 1.0).transition(1, a, 2, 1.0);
    }
    let (v0, good) = match variant {
        ZeroVariant::M0 => {
            bld.transition(0, 0, 0, 1.0);
            (0.5, 1)
        }
        ZeroVariant::Plus => {
            bld.transition(0, 0, 1, q).transition(0, 0, 0, 1.0 - q);
            (0.5, 1)
        }
        ZeroVariant::Minus => {
            bld.transition(0, 0, 2, q).transition(0, 0, 0, 1.0 - q);
            (0.0, 0)
        }
    };
    let mdp = bld.build()?;
    finish(mdp, InstanceSpec::ZeroCmin { variant, n }, Vec::new(), |_, k| {
        vec![
            Certificate::equals("v_star_s0", k.v_star[0], v0, CHAIN_TOL),
            Certificate::action("s0_action", k.pi_star[0], good),
        ]
    })
}

/// `(M_0, M_1)`: `a_0` loops at `s0` for free; in `M_1` it leaks to `s1`
/// with probability `1/n`.
pub type ModelPair = ((SspMdp, InstanceManifest), (SspMdp, InstanceManifest));

pub fn horizon_free_pair(n: u64) -> Result<ModelPair, InstanceError> {
    check(n >= 2, || format!("n = {n} < 2"))?;
    let build = |member: u8| -> Result<(SspMdp, InstanceManifest), InstanceError> {
        let mut bld = SspBuilder::new(2, 2);
        bld.cost(0, 0, 0.0).cost(0, 1, 1.0).transition(0, 1, 2, 1.0);
        for a in 0..2 {
            bld.cost(1, a, 0.5).transition(1, a, 2, 1.0);
        }
        if member == 0 {
            bld.transition(0, 0, 0, 1.0);
        } else {
            let q = 1.0 / n as f64;
            bld.transition(0, 0, 1, q).transition(0, 0, 0, 1.0 - q);
        }
        let (v0, good) = if member == 0 { (1.0, 1) } else { (0.5, 0) };
        finish(bld.build()?, InstanceSpec::HorizonFree { n, member }, Vec::new(), |_, k| {
            vec![
                Certificate::equals("v_star_s0", k.v_star[0], v0, CHAIN_TOL),
                Certificate::action("s0_action", k.pi_star[0], good),
            ]
        })
    };
    Ok((build(0)?, build(1)?))
}

/// Shared chain layout of the two lock families: `s0 = 0`, lock states
/// `1..=N`, then `s_b`, `s_c` and dummies. `lock_actions` is the range the
/// lock and the reset draw from.
#[allow(clippy::too_many_arguments)]
fn fill_lock(
    bld: &mut SspBuilder,
    states: usize,
    lock_actions: usize,
    lock: &[usize],
    p: f64,
    b_exit: f64,
    c_min: f64,
) {
    let (n, goal) = (lock.len(), states);
    for a in 0..lock_actions {
        bld.cost(0, a, 1.0).transition(0, a, goal, 1.0 - p).transition(0, a, 1, p);
        for i in 1..=n {
            let next = if a == lock[i - 1] { if i == n { goal } else { i + 1 } } else { 1 };
            bld.cost(i, a, 1.0).transition(i, a, next, 1.0);
        }
        let (sb, sc) = (n + 1, n + 2);
        bld.cost(sb, a, 1.0);
        stay_or_goal(bld, sb, a, goal, 1.0 / b_exit);
        bld.cost(sc, a, c_min).transition(sc, a, goal, 1.0);
        for s in n + 3..states {
            bld.cost(s, a, 1.0).transition(s, a, goal, 1.0);
        }
    }
}

fn lock_certificates(m: &SspMdp, k: &SspConstants, n: usize, p: f64, lock: &[usize], range: usize, eps: f64) -> Vec<Certificate> {
    let v = &k.v_star;
    let mut certs = vec![
        Certificate::equals("v_star_s0", v[0], 1.0 + p * n as f64, CHAIN_TOL),
    ];
    let mut gap = f64::INFINITY;
    let mut follows = true;
    for i in 1..=n {
        follows &= argmin_q(m, v, i, 0..range) == lock[i - 1];
        gap = gap.min(min_gap(m, v, i, (0..range).filter(|&a| a != lock[i - 1])));
    }
    certs.push(Certificate::action("lock_followed", usize::from(follows), 1));
    certs.push(Certificate::exceeds("wrong_arm_gap", gap, eps));
    certs
}

/// Combination lock reached from `s0` with probability `p = 4ε/A^N`.
pub fn bpi_lock_instance(p: &LockParams) -> Result<(SspMdp, InstanceManifest), InstanceError> {
    check(p.states >= 4, || format!("S = {} < 4", p.states))?;
    check(p.actions >= 4, || format!("A = {} < 4", p.actions))?;
    check(p.b_star >= 1.0 && p.b_star.is_finite(), || format!("B_star = {} < 1", p.b_star))?;
    check((0.0..=1.0).contains(&p.c_min), || format!("c_min = {} outside [0,1]", p.c_min))?;
    check(p.epsilon > 0.0 && p.epsilon < 0.25, || format!("epsilon = {} outside (0, 1/4)", p.epsilon))?;
    let n = (p.b_star.floor() as usize).min(p.states - 3);
    check(p.lock.len() == n, || format!("lock has {} entries, N = {n}", p.lock.len()))?;
    check(p.lock.iter().all(|&a| a < p.actions), || "lock action out of range".into())?;
    let prob = 4.0 * p.epsilon / (p.actions as f64).powi(n as i32);
    let mut bld = SspBuilder::new(p.states, p.actions);
    bld.c_min(p.c_min);
    fill_lock(&mut bld, p.states, p.actions, &p.lock, prob, p.b_star, p.c_min);
    let mdp = bld.build()?;
    let derived = vec![("N", n as f64), ("p", prob)];
    let (lock, range, eps, b_star) = (p.lock.clone(), p.actions, p.epsilon, p.b_star);
    finish(mdp, InstanceSpec::BpiLock(p.clone()), derived, |m, k| {
        let mut c = lock_certificates(m, k, n, prob, &lock, range, eps);
        c.push(Certificate::equals("v_star_sb", k.v_star[n + 1], b_star, CHAIN_TOL));
        c
    })
}

/// Lock family with the escape action appended at index `A - 1` and
/// `p = 4ε/J`.
pub fn bpi_terminal_instance(p: &TerminalParams) -> Result<(SspMdp, InstanceManifest), InstanceError> {
    check(p.states >= 4, || format!("S = {} < 4", p.states))?;
    check(p.actions >= 3, || format!("A = {} < 3", p.actions))?;
    check(p.b >= 1.0 && p.b.is_finite(), || format!("B = {} < 1", p.b))?;
    check((0.0..=1.0).contains(&p.c_min), || format!("c_min = {} outside [0,1]", p.c_min))?;
    check(p.epsilon > 0.0 && p.epsilon < 0.25, || format!("epsilon = {} outside (0, 1/4)", p.epsilon))?;
    check(p.j >= 3.0 * p.b && p.j.is_finite(), || format!("J = {} < 3B = {}", p.j, 3.0 * p.b))?;
    let range = p.actions - 1;
    let n = (p.b.floor() as usize).min(p.states - 3);
    check(p.lock.len() == n, || format!("lock has {} entries, N = {n}", p.lock.len()))?;
    check(p.lock.iter().all(|&a| a < range), || "lock action out of range".into())?;
    let prob = 4.0 * p.epsilon / p.j;
    let mut bld = SspBuilder::new(p.states, p.actions);
    bld.c_min(p.c_min);
    fill_lock(&mut bld, p.states, range, &p.lock, prob, p.b, p.c_min);
    bld.escape_action(range, p.j);
    let mdp = bld.build()?;
    let derived = vec![("N", n as f64), ("p", prob)];
    let (lock, eps, b, j) = (p.lock.clone(), p.epsilon, p.b, p.j);
    finish(mdp, InstanceSpec::BpiTerminal(p.clone()), derived, |m, k| {
        let mut c = lock_certificates(m, k, n, prob, &lock, range, eps);
        c.push(Certificate::equals("v_star_sb", k.v_star[n + 1], b, CHAIN_TOL));
        let escape_ok = (0..m.n_states()).all(|s| m.cost(s, range) == j && m.prob(s, range, m.n_states()) == 1.0);
        c.push(Certificate::action("escape_rows", usize::from(escape_ok), 1));
        c
    })
}

/// Tree component on actions `0..A-1` wired to a slow chain through `s★_0`.
///
/// Layout: tree states `0..=N` (root 0), chain states `N+1..=2N+1` with
/// `s★_0 = N + 1`. Action `A - 1` is the extra action.
pub fn eps_t_instance(p: &EpsTParams) -> Result<(SspMdp, InstanceManifest), InstanceError> {
    check(p.states >= 6 && p.states % 2 == 0, || format!("S = {} must be even and >= 6", p.states))?;
    check(p.actions >= 8, || format!("A = {} < 8", p.actions))?;
    check(p.b_star >= 2.0, || format!("B_star = {} < 2", p.b_star))?;
    check(p.b_t >= 2.0, || format!("B_T = {} < 2", p.b_t))?;
    check(p.epsilon > 0.0 && p.epsilon < 1.0 / 32.0, || format!("epsilon = {} outside (0, 1/32)", p.epsilon))?;
    let arity = p.actions - 1;
    let half = p.states / 2;
    let tree = Tree::fit(half, arity).map_err(|e| match e {
        InstanceError::Inadmissible { nearest, .. } => {
            InstanceError::Inadmissible { requested: p.states, nearest: 2 * nearest }
        }
        other => other,
    })?;
    let log_s = (half as f64).ln() / (arity as f64).ln() + 1.0;
    check(p.t >= 6.0 * log_s, || format!("T = {} < 6(log_(A-1)(S/2) + 1) = {}", p.t, 6.0 * log_s))?;
    check(p.b_star <= p.b_t, || format!("B_star = {} > B_T = {}", p.b_star, p.b_t))?;
    let cap = p.b_star * (arity as f64).powf(half as f64 - 1.0) / 4.0;
    check(p.b_t <= cap, || format!("B_T = {} > B_star (A-1)^(S/2-1) / 4 = {cap}", p.b_t))?;
    check(p.b_t <= p.t / 6.0, || format!("B_T = {} > T/6", p.b_t))?;
    let n = half - 1;
    check(p.chain_lock.len() == n, || format!("chain lock has {} entries, N = {n}", p.chain_lock.len()))?;
    check(p.chain_lock.iter().all(|&a| a < arity), || "chain lock action out of range".into())?;
    let n_arms = tree.leaves() * (arity - 1);
    if let Some(i) = p.tree_arm {
        check(i < n_arms, || format!("tree arm {i} >= {n_arms}"))?;
    }
    let q = p.p_override.unwrap_or(1.0 / (2.0 * p.t));
    check(q > 0.0 && q <= 1.0, || format!("chain probability {q} outside (0,1]"))?;
    let (t0, t1) = (p.t / 6.0, p.t / 6.0);
    let alpha = 32.0 * p.epsilon / (t1 * p.b_t);
    let design = LeafDesign { b: p.b_t, c_min: 0.0, t0, t1, alpha };
    let (goal, extra, star0) = (p.states, arity, half);
    let mut bld = SspBuilder::new(p.states, p.actions);
    fill_tree(&mut bld, &tree, 0, goal, &design, p.tree_arm);
    for s in 0..half {
        bld.cost(s, extra, 0.0).transition(s, extra, star0, 1.0);
    }
    for a in 0..arity {
        bld.cost(star0, a, 1.0);
        stay_or_goal(&mut bld, star0, a, star0 + 1, 1.0 / p.b_star);
    }
    bld.cost(star0, extra, 1.0);
    stay_or_goal(&mut bld, star0, extra, 0, 1.0 / (2.0 * p.b_t));
    for i in 1..=n {
        let s = star0 + i;
        let advance = if i == n { goal } else { s + 1 };
        for a in 0..arity {
            bld.cost(s, a, 0.0);
            stay_or_goal(&mut bld, s, a, if a == p.chain_lock[i - 1] { advance } else { star0 }, q);
        }
        bld.cost(s, extra, 0.0).transition(s, extra, star0, 1.0);
    }
    let mdp = bld.build()?;

    // Tree restriction on actions 0..A-1 only.
    let mut rb = SspBuilder::new(half, arity);
    fill_tree(&mut rb, &tree, 0, half, &design, p.tree_arm);
    let restricted = rb.build()?;
    let rk = oracle::constants(&restricted)?;

    let derived = vec![
        ("N", n as f64),
        ("N_arms", n_arms as f64),
        ("levels", tree.levels as f64),
        ("T0", t0),
        ("T1", t1),
        ("alpha", alpha),
        ("p", q),
        ("tree_b_star", rk.b_star),
    ];
    let (b_star, b_t) = (p.b_star, p.b_t);
    finish(mdp, InstanceSpec::EpsT(p.clone()), derived, |m, k| {
        let v = &k.v_star;
        let direct = (0..half).chain(star0 + 1..=star0 + n).all(|s| m.prob(s, extra, star0) == 1.0);
        vec![
            Certificate::equals("v_star_chain_entry", v[star0], b_star, CHAIN_TOL),
            Certificate::equals("b_star", k.b_star, b_star, CHAIN_TOL),
            Certificate::range("tree_b_star", rk.b_star, b_t / 2.0, 2.0 * b_t),
            Certificate::range("b_star_t_proxy", 2.0 * b_t + rk.v_star[0], b_t / 2.0, 3.0 * b_t),
            Certificate::action("extra_action_to_chain", usize::from(direct), 1),
        ]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::write_ssp;

    fn tree(arm: Option<usize>) -> TreeParams {
        TreeParams { states: 13, actions: 3, b: 2.0, c_min: 0.1, t0: 4.0, t_bar: 20.0, epsilon: 0.01, arm }
    }

    #[test]
    fn tree_shape_and_alpha() {
        let (m, man) = tree_instance(&tree(None)).unwrap();
        assert_eq!(m.n_states(), 13);
        assert_eq!(man.derived("leaves"), Some(9.0));
        assert_eq!(man.derived("T1"), Some(10.0));
        assert!((man.derived("alpha").unwrap() - 0.016).abs() < 1e-15);
        assert!(man.certificates.iter().all(|c| c.holds));
    }

    #[test]
    fn tree_arm_flips_optimum() {
        let (m, man) = tree_instance(&tree(Some(5))).unwrap();
        let c = man.certificate("leaf_action").unwrap();
        assert_eq!(c.value, 2.0);
        let (m0, _) = tree_instance(&tree(None)).unwrap();
        assert_ne!(write_ssp(&m), write_ssp(&m0));
    }

    #[test]
    fn tree_inadmissible_size() {
        let e = tree_instance(&TreeParams { states: 12, ..tree(None) }).unwrap_err();
        assert_eq!(e, InstanceError::Inadmissible { requested: 12, nearest: 13 });
        let e = tree_instance(&TreeParams { states: 6, ..tree(None) }).unwrap_err();
        assert_eq!(e, InstanceError::Inadmissible { requested: 6, nearest: 4 });
        assert!(matches!(tree_instance(&TreeParams { epsilon: 0.05, ..tree(None) }), Err(InstanceError::Params(_))));
        assert!(matches!(tree_instance(&TreeParams { t0: 30.0, ..tree(None) }), Err(InstanceError::Params(_))));
    }

    #[test]
    fn zero_cmin_values() {
        for (v, want) in [(ZeroVariant::M0, 0.5), (ZeroVariant::Plus, 0.5), (ZeroVariant::Minus, 0.0)] {
            let (_, man) = zero_cmin_instance(v, 10).unwrap();
            assert!((man.certificate("v_star_s0").unwrap().value - want).abs() < 1e-9);
        }
        assert!(zero_cmin_instance(ZeroVariant::Plus, 1).is_err());
    }

    #[test]
    fn lock_value_and_sb() {
        let p = LockParams { states: 6, actions: 4, b_star: 3.0, c_min: 0.1, epsilon: 0.1, lock: vec![2, 0, 3] };
        let (m, man) = bpi_lock_instance(&p).unwrap();
        let prob = man.derived("p").unwrap();
        assert!((prob - 0.4 / 64.0).abs() < 1e-15);
        assert!(man.certificates.iter().all(|c| c.holds));
        assert_eq!(m.prob(3, 3, 6), 1.0);
        assert_eq!(m.prob(2, 1, 1), 1.0);
    }

    #[test]
    fn terminal_p_and_escape() {
        let p = TerminalParams { states: 5, actions: 4, b: 1.5, c_min: 0.1, epsilon: 0.01, j: 5.0, lock: vec![1] };
        let (m, man) = bpi_terminal_instance(&p).unwrap();
        assert!((man.derived("p").unwrap() - 0.008).abs() < 1e-15);
        assert_eq!(m.terminal_action().unwrap().action, 3);
        assert!(bpi_terminal_instance(&TerminalParams { j: 4.0, ..p }).is_err());
    }

    #[test]
    fn horizon_free_rows_differ_once() {
        let ((a, _), (b, _)) = horizon_free_pair(4).unwrap();
        let mut diff = 0;
        for s in 0..2 {
            for act in 0..2 {
                if a.row(s, act) != b.row(s, act) {
                    diff += 1;
                }
            }
        }
        assert_eq!(diff, 1);
    }

    #[test]
    fn manifest_round_trip() {
        let (m, man) = tree_instance(&tree(Some(3))).unwrap();
        let (m2, man2) = InstanceManifest::regenerate(&man.render()).unwrap();
        assert_eq!(write_ssp(&m), write_ssp(&m2));
        assert_eq!(man, man2);
    }
}

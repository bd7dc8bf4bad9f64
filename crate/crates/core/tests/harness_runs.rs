mod common;

use ssp_lab::bpi::DevConstants;
use ssp_lab::format::write_ssp;
use ssp_lab::harness::{run_trials, Algorithm, ExperimentConfig, InstanceSource};
use ssp_lab::instances::{InstanceSpec, TreeParams};
use ssp_lab::oracle::{diameter, CheckMode};
use ssp_lab::sampling::GenerativeSampler;
use ssp_lab::search_horizon::{search_horizon, ScheduleConstants, SearchConfig, SearchVerdict};

fn config(algorithm: Algorithm, instance: InstanceSource, eps: f64, t: f64, trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        algorithm,
        instance,
        epsilons: vec![eps],
        delta: 0.1,
        horizon_bound: t,
        trials,
        base_seed: 7,
        schedule: ScheduleConstants::default(),
        dev: DevConstants::default(),
        budget_cap: None,
        max_horizon: 10_000_000,
        check_mode: CheckMode::AllStates,
        output: None,
        record_wall_time: false,
    }
}

fn tree_m0() -> InstanceSource {
    InstanceSource::Generator(InstanceSpec::Tree(TreeParams {
        states: 13,
        actions: 3,
        b: 2.0,
        c_min: 0.1,
        t0: 4.0,
        t_bar: 20.0,
        epsilon: 0.01,
        arm: None,
    }))
}

fn file(rel: &str) -> InstanceSource {
    InstanceSource::File(common::data_path(rel))
}

#[test]
fn optimal_stub_always_passes() {
    for src in [tree_m0(), file("instances/search3.ssp"), file("instances/bpi3.ssp")] {
        let (records, summary) = run_trials(&config(Algorithm::OptimalStub, src, 1e-6, f64::INFINITY, 5)).unwrap();
        assert_eq!(summary[0].pass_rate, 1.0);
        assert!(records.iter().all(|r| r.gap.abs() <= 1e-9 && r.samples == 0));
    }
}

#[test]
fn uniform_stub_fails_below_the_leaf_gap() {
    let (records, summary) = run_trials(&config(Algorithm::UniformStub, tree_m0(), 0.01, f64::INFINITY, 5)).unwrap();
    assert_eq!(summary[0].pass_rate, 0.0);
    assert!(records.iter().all(|r| r.gap > 0.01));
}

#[test]
fn single_trial_runs_repeat_exactly() {
    for alg in [Algorithm::SearchHorizon, Algorithm::UniformStub] {
        let cfg = config(alg, file("instances/search3.ssp"), 0.2, 20.0, 1);
        assert_eq!(run_trials(&cfg).unwrap().0, run_trials(&cfg).unwrap().0);
    }
}

#[test]
fn seeds_follow_the_base_seed() {
    let (records, _) = run_trials(&config(Algorithm::OptimalStub, tree_m0(), 0.1, f64::INFINITY, 4)).unwrap();
    let seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
    assert_eq!(seeds, vec![7, 8, 9, 10]);
}

#[test]
fn long_chain_with_unit_bound_reports_t_less_than_d() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain50.ssp");
    let chain = common::unit_chain(50);
    assert_eq!(diameter(&chain).unwrap(), 50.0);
    std::fs::write(&path, write_ssp(&chain)).unwrap();
    let (records, _) =
        run_trials(&config(Algorithm::SearchHorizon, InstanceSource::File(path), 0.2, 1.0, 3)).unwrap();
    for r in &records {
        assert_eq!(r.verdict, "t-less-than-d");
        assert!(r.gap.is_nan());
        // D > T leaves no comparator class, so the verdict is accepted.
        assert!(r.pass);
    }
}

/// The search stops with a policy exactly when the last iteration broke, and
/// reports `t-less-than-d` exactly when the next doubled bound would exceed `40 T`.
#[test]
fn search_verdict_matches_its_trace() {
    let cases: Vec<(ssp_lab::SspMdp, f64)> = vec![
        (common::unit_chain(3), 1.0),
        (common::unit_chain(50), 1.0),
        (common::unit_chain(50), 2.0),
        (common::load("instances/search3.ssp"), 20.0),
        (common::load("instances/search3.ssp"), 1.0),
        (common::geometric_loop(4.0), 1.0),
    ];
    for (m, t) in &cases {
        for seed in 0..3 {
            let mut sampler = GenerativeSampler::new(m, seed);
            let out = search_horizon(&mut sampler, &SearchConfig::new(*t, 0.2, 0.1)).unwrap();
            let last = out.trace.last().unwrap();
            let exceeded = !last.broke && 2.0 * last.b > 40.0 * t;
            assert_eq!(out.verdict == SearchVerdict::TLessThanD, exceeded, "T={t} trace end B={}", last.b);
            assert_eq!(out.verdict == SearchVerdict::Policy, last.broke);
            assert!(out.trace.iter().rev().skip(1).all(|it| !it.broke && it.b <= 40.0 * t));
            assert_eq!(out.policy.is_some(), out.verdict == SearchVerdict::Policy);
            assert_eq!(out.samples_used, sampler.total_samples());
        }
    }
}

#[test]
fn bpi_runs_through_the_harness() {
    let mut cfg = config(Algorithm::Bpi, file("instances/bpi3.ssp"), 0.3, f64::INFINITY, 2);
    cfg.dev = DevConstants { k: [2.0, 0.01] };
    cfg.check_mode = CheckMode::InitState;
    let (records, summary) = run_trials(&cfg).unwrap();
    assert_eq!(summary[0].trials, 2);
    assert!(records.iter().all(|r| r.verdict == "policy" && r.samples > 0));
}

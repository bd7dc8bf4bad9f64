mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssp_lab::format::{parse_ssp, write_ssp};
use ssp_lab::harness::wilson_interval;
use ssp_lab::instances::{tree_instance, InstanceManifest, TreeParams};
use ssp_lab::lcbvi::{bonus, iota, lcbvi, LcbviInput};
use ssp_lab::mdp::finite_horizon_dp;
use ssp_lab::oracle::{policy_value, ssp_value_iteration, SolveOptions};
use ssp_lab::policy::make_periodic;
use ssp_lab::sampling::{CounterTable, GenerativeSampler};
use ssp_lab::search_horizon::{n_hat, n_star, ScheduleConstants};
use ssp_lab::{FiniteHorizonPolicy, FiniteHorizonSpec, Policy, SspMdp, StationaryPolicy};

fn model(seed: u64, ns: usize, na: usize) -> SspMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    common::random_ssp(&mut rng, ns, na, 0.05)
}

fn leaky(seed: u64, ns: usize, na: usize) -> SspMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    common::random_leaky_ssp(&mut rng, ns, na, 0.05)
}

fn random_cf(rng: &mut ChaCha8Rng, ns: usize) -> Vec<f64> {
    let mut cf: Vec<f64> = (0..ns).map(|_| rng.random_range(0.0..3.0)).collect();
    cf.push(0.0);
    cf
}

/// Straightforward recomputation of one LCBVI backup, written independently.
fn naive_q(m: &SspMdp, counts: &CounterTable, v_next: &[f64], s: usize, a: usize, b: f64, io: f64) -> f64 {
    let n = counts.count(s, a).max(1) as f64;
    let p: Vec<f64> = (0..=m.n_states()).map(|t| counts.count_next(s, a, t) as f64 / n).collect();
    let mean: f64 = p.iter().zip(v_next).map(|(x, v)| x * v).sum();
    let var: f64 = p.iter().zip(v_next).map(|(x, v)| x * (v - mean).powi(2)).sum();
    let bonus = f64::max(7.0 * (var * io / n).sqrt(), 49.0 * b * io / n);
    (m.cost(s, a) + mean - bonus).max(0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dp_is_monotone_in_terminal_cost(seed in any::<u64>(), ns in 1usize..5, na in 1usize..4, hz in 1usize..8) {
        let m = model(seed, ns, na);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let low = random_cf(&mut rng, ns);
        let high: Vec<f64> = low.iter().enumerate().map(|(i, &x)| if i < ns { x + rng.random_range(0.0..1.0) } else { 0.0 }).collect();
        let a = finite_horizon_dp(&m, &FiniteHorizonSpec::new(hz, low).unwrap(), None).unwrap();
        let b = finite_horizon_dp(&m, &FiniteHorizonSpec::new(hz, high).unwrap(), None).unwrap();
        for h in 1..=hz + 1 {
            for s in 0..ns {
                prop_assert!(a.v(h)[s] <= b.v(h)[s] + 1e-12);
            }
        }
    }

    #[test]
    fn greedy_policy_reproduces_optimal_values(seed in any::<u64>(), ns in 1usize..5, na in 1usize..4, hz in 1usize..8) {
        let m = model(seed, ns, na);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let spec = FiniteHorizonSpec::new(hz, random_cf(&mut rng, ns)).unwrap();
        let opt = finite_horizon_dp(&m, &spec, None).unwrap();
        let pi = Policy::FiniteHorizon(opt.greedy_policy());
        let ev = finite_horizon_dp(&m, &spec, Some(&pi)).unwrap();
        for h in 1..=hz {
            for s in 0..ns {
                prop_assert!((ev.v(h)[s] - opt.v(h)[s]).abs() <= 1e-12);
                let qmin = (0..na).map(|a| opt.q(h, s, a)).fold(f64::INFINITY, f64::min);
                prop_assert!((opt.v(h)[s] - qmin).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gen_batch_conserves_counts(seed in any::<u64>(), ns in 1usize..5, na in 1usize..4, n in 0u64..5000) {
        let m = model(seed, ns, na);
        let counts = GenerativeSampler::new(&m, seed).gen_batch(n);
        prop_assert!(counts.is_conserved());
        prop_assert_eq!(counts.total(), n * (ns * na) as u64);
        for s in 0..ns {
            for a in 0..na {
                prop_assert_eq!(counts.count(s, a), n);
                let row_sum: u64 = counts.next_counts(s, a).iter().sum();
                prop_assert_eq!(row_sum, n);
                for t in 0..=ns {
                    if m.prob(s, a, t) == 0.0 {
                        prop_assert_eq!(counts.count_next(s, a, t), 0);
                    }
                }
            }
        }
    }

    #[test]
    fn bonus_shrinks_with_more_data(seed in any::<u64>(), ns in 1usize..5, base in 1u64..50, factor in 2u64..20, b in 0.1f64..10.0) {
        let m = model(seed, ns, 1);
        let small = GenerativeSampler::new(&m, seed).gen_batch(base);
        let mut large = CounterTable::new(ns, 1);
        for s in 0..ns {
            for t in 0..=ns {
                large.record_many(s, 0, t, small.count_next(s, 0, t) * factor);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_cf(&mut rng, ns);
        let io = iota(ns, 1, 5, 1000, 0.1);
        for s in 0..ns {
            let b_small = bonus(&small, s, 0, &v, b, io).unwrap();
            let b_large = bonus(&large, s, 0, &v, b, io).unwrap();
            prop_assert!(b_large <= b_small + 1e-12);
        }
    }

    #[test]
    fn lcbvi_backups_match_naive_recomputation(
        seed in any::<u64>(), ns in 1usize..5, na in 1usize..4, hz in 1usize..6, n in 1u64..400, b in 0.5f64..5.0,
    ) {
        let m = model(seed, ns, na);
        let counts = GenerativeSampler::new(&m, seed).gen_batch(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let cf = random_cf(&mut rng, ns);
        let input = LcbviInput { mdp: &m, counts: &counts, horizon: hz, value_bound: b, terminal_cost: &cf, delta: 0.1 };
        let out = lcbvi(&input).unwrap();
        prop_assert_eq!(&out, &lcbvi(&input).unwrap());
        prop_assert_eq!(out.values.v(hz + 1), &cf[..]);
        let io = iota(ns, na, hz, counts.total(), 0.1);
        for h in 1..=hz {
            prop_assert_eq!(out.values.v(h)[ns], 0.0);
            for s in 0..ns {
                let mut qmin = f64::INFINITY;
                for a in 0..na {
                    let q = out.values.q(h, s, a);
                    prop_assert!(q >= 0.0);
                    let naive = naive_q(&m, &counts, out.values.v(h + 1), s, a, b, io);
                    prop_assert!((q - naive).abs() <= 1e-9 * (1.0 + naive.abs()));
                    qmin = qmin.min(q);
                }
                prop_assert_eq!(out.values.v(h)[s], qmin);
                let chosen = out.policy.action(s, h);
                prop_assert_eq!(out.values.q(h, s, chosen), qmin);
            }
        }
    }

    #[test]
    fn optimal_policy_is_no_worse_than_any_proper_policy(seed in any::<u64>(), ns in 1usize..6, na in 1usize..4) {
        let m = leaky(seed, ns, na);
        let sol = ssp_value_iteration(&m, SolveOptions::default()).unwrap();
        let own = policy_value(&m, &sol.stationary()).unwrap();
        for s in 0..ns {
            prop_assert!((own.values[s] - sol.values[s]).abs() <= 1e-9);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
        for _ in 0..8 {
            let dists: Vec<Vec<f64>> = (0..ns)
                .map(|_| {
                    let w: Vec<f64> = (0..na).map(|_| rng.random_range(0.01..1.0)).collect();
                    let t: f64 = w.iter().sum();
                    w.iter().map(|x| x / t).collect()
                })
                .collect();
            let pi = StationaryPolicy::stochastic(dists).unwrap();
            let ev = policy_value(&m, &pi).unwrap();
            for s in 0..ns {
                prop_assert!(ev.proper[s]);
                prop_assert!(sol.values[s] <= ev.values[s] + 1e-9);
            }
        }
    }

    #[test]
    fn format_round_trips(seed in any::<u64>(), ns in 1usize..6, na in 1usize..4) {
        let m = model(seed, ns, na);
        let text = write_ssp(&m);
        let back = parse_ssp(&text).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(write_ssp(&back), text);
    }

    #[test]
    fn perturbed_rows_fail_validation(seed in any::<u64>(), ns in 1usize..5, na in 1usize..4, bump in 1e-6f64..0.5) {
        let m = model(seed, ns, na);
        let text = write_ssp(&m);
        let line = text.lines().find(|l| l.starts_with("trans ")).unwrap().to_string();
        let fields: Vec<&str> = line.split_whitespace().collect();
        let p: f64 = fields[4].parse().unwrap();
        let edited = format!("{} {} {} {} {:e}", fields[0], fields[1], fields[2], fields[3], p + bump);
        prop_assert!(parse_ssp(&text.replacen(&line, &edited, 1)).is_err());
    }

    #[test]
    fn manifests_regenerate_identically(arm in proptest::option::of(0usize..18), eps in 0.001f64..0.01) {
        let p = TreeParams { states: 13, actions: 3, b: 2.0, c_min: 0.1, t0: 4.0, t_bar: 20.0, epsilon: eps, arm };
        let (m, man) = tree_instance(&p).unwrap();
        let (m2, man2) = InstanceManifest::regenerate(&man.render()).unwrap();
        prop_assert_eq!(m, m2);
        prop_assert_eq!(man.render(), man2.render());
    }

    #[test]
    fn periodic_extension_repeats_the_table(seed in any::<u64>(), ns in 1usize..5, na in 1usize..4, hz in 1usize..7, t in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table: Vec<usize> = (0..hz * ns).map(|_| rng.random_range(0..na)).collect();
        let base = FiniteHorizonPolicy::from_table(hz, ns, table.clone()).unwrap();
        let per = make_periodic(&base, hz).unwrap();
        for s in 0..ns {
            prop_assert_eq!(per.action_at(s, t + hz), per.action_at(s, t));
            let stage = (t - 1) % hz;
            prop_assert_eq!(per.action_at(s, t), table[stage * ns + s]);
        }
    }

    #[test]
    fn sample_schedules_are_monotone(b in 0.1f64..50.0, h in 1usize..500, eps in 0.01f64..1.0, delta in 0.001f64..0.5, s in 1usize..20) {
        let k = ScheduleConstants::default();
        let finer = eps / 2.0;
        prop_assert!(n_star(b, h, finer, delta, s, &k.k_star) >= n_star(b, h, eps, delta, s, &k.k_star));
        prop_assert!(n_hat(b, h, finer, delta, s, &k.k_hat) >= n_hat(b, h, eps, delta, s, &k.k_hat));
        prop_assert!(n_star(2.0 * b, h, eps, delta, s, &k.k_star) >= n_star(b, h, eps, delta, s, &k.k_star));
        prop_assert!(n_hat(b, h, eps, delta / 2.0, s, &k.k_hat) >= n_hat(b, h, eps, delta, s, &k.k_hat));
    }

    #[test]
    fn wilson_interval_brackets_the_rate(n in 1usize..500, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).round() as usize;
        let (lo, hi) = wilson_interval(k, n);
        let rate = k as f64 / n as f64;
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        prop_assert!(lo <= rate + 1e-12 && rate <= hi + 1e-12);
    }
}

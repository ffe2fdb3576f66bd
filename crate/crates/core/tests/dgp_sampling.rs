use std::collections::BTreeMap;

use proptest::prelude::*;
use tte_core::dgp::{
    counterfactual_survival, default_dgp, enumerate_distribution, sample_cohort, total_mass, true_ate, DgpTableOf,
};
use tte_core::{Cohort, DgpTable, ExactDgpTable, Rational, Regime, Scalar, ScenarioKind, Treatment};

fn frequency_check(kind: ScenarioKind, n: usize, seed: u64) {
    let dgp = default_dgp::<f64>(kind);
    let cohort = sample_cohort(&dgp, n, seed);
    let mut counts = BTreeMap::new();
    for t in &cohort.trajectories {
        *counts.entry(t.clone()).or_insert(0usize) += 1;
    }
    let support = enumerate_distribution(&dgp).unwrap();
    let mut checked = 0;
    for (traj, p) in &support {
        let observed = counts.remove(traj).unwrap_or(0) as f64 / n as f64;
        if *p >= 0.001 {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((observed - p).abs() <= 5.0 * se, "{kind} {traj:?}: {observed} vs {p}");
            checked += 1;
        }
    }
    assert!(counts.is_empty(), "sampled trajectories outside the support: {counts:?}");
    assert!(checked >= 10);
}

#[test]
fn sampled_frequencies_match_enumeration_a() {
    frequency_check(ScenarioKind::NoWithinPeriodTreatmentEffect, 1_000_000, 20240601);
}

#[test]
fn sampled_frequencies_match_enumeration_b() {
    frequency_check(ScenarioKind::NoWithinPeriodOutcomeEffect, 1_000_000, 77);
}

#[test]
fn first_period_margins() {
    let n = 200_000;
    let a = sample_cohort(&default_dgp::<f64>(ScenarioKind::NoWithinPeriodTreatmentEffect), n, 5);
    let deaths = a.trajectories.iter().filter(|t| t.y[0]).count() as f64 / n as f64;
    assert!((deaths - 0.05).abs() < 4.0 * (0.05f64 * 0.95 / n as f64).sqrt());
    let b = sample_cohort(&default_dgp::<f64>(ScenarioKind::NoWithinPeriodOutcomeEffect), n, 6);
    let treated = b.trajectories.iter().filter(|t| t.x[0] == Treatment::Treated).count() as f64 / n as f64;
    assert!((treated - 0.3).abs() < 4.0 * (0.3f64 * 0.7 / n as f64).sqrt());
}

#[test]
fn sampling_ignores_thread_count() {
    let dgp = default_dgp::<f64>(ScenarioKind::NoWithinPeriodOutcomeEffect);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| sample_cohort(&dgp, 5000, 42))
    };
    assert_eq!(run(1), run(4));
    assert_ne!(sample_cohort(&dgp, 5000, 42), sample_cohort(&dgp, 5000, 43));
}

#[test]
fn sampled_cohort_survives_csv() {
    let dgp = default_dgp::<f64>(ScenarioKind::NoWithinPeriodTreatmentEffect);
    let cohort = sample_cohort(&dgp, 300, 1);
    let mut buf = Vec::new();
    cohort.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("id,period,x,y\n"));
    assert!(!text.contains('\r'));
    let back = Cohort::read_csv(cohort.scenario, buf.as_slice()).unwrap();
    assert_eq!(back.trajectories, cohort.trajectories);
}

#[test]
fn closed_form_survival_matches_intervened_enumeration() {
    for kind in ScenarioKind::ALL {
        let dgp = default_dgp::<Rational>(kind);
        for regime in [Regime::Never, Regime::AlwaysFromStart, Regime::InitiateAt(2), Regime::InitiateAt(3)] {
            let curve = counterfactual_survival(&dgp, regime).unwrap();
            let world = enumerate_distribution(&dgp.intervened(regime).unwrap()).unwrap();
            for (k, s) in curve.iter().enumerate() {
                let alive: Rational = world
                    .iter()
                    .filter(|(t, _)| !t.y[k])
                    .map(|(_, p)| p.clone())
                    .fold(Rational::from_ratio(0, 1), |a, b| a + b);
                assert_eq!(&alive, s, "{kind} {regime} k={}", k + 1);
            }
        }
    }
}

#[test]
fn grace_of_one_is_always() {
    for kind in ScenarioKind::ALL {
        let dgp = default_dgp::<Rational>(kind);
        let always = counterfactual_survival(&dgp, Regime::AlwaysFromStart).unwrap();
        assert_eq!(counterfactual_survival(&dgp, Regime::UniformGrace(1)).unwrap(), always);
        assert_eq!(counterfactual_survival(&dgp, Regime::InitiateAt(1)).unwrap(), always);
    }
}

#[test]
fn exact_effects() {
    let a: ExactDgpTable = default_dgp(ScenarioKind::NoWithinPeriodTreatmentEffect);
    let b: ExactDgpTable = default_dgp(ScenarioKind::NoWithinPeriodOutcomeEffect);
    assert_eq!(true_ate(&a, Regime::AlwaysFromStart, Regime::Never).unwrap(), Rational::from_ratio(2375, 10000));
    assert_eq!(
        true_ate(&b, Regime::AlwaysFromStart, Regime::Never).unwrap(),
        Rational::from_ratio(2410625, 10_000_000)
    );
    let grace = true_ate(&a, Regime::UniformGrace(3), Regime::Never).unwrap();
    let parts: Vec<Rational> = (1..=3).map(|i| true_ate(&a, Regime::InitiateAt(i), Regime::Never).unwrap()).collect();
    assert_eq!(grace, (parts[0].clone() + parts[1].clone() + parts[2].clone()) / Rational::from_ratio(3, 1));
}

/// Random linear-probability process on `horizon` periods with entries
/// clamped to `[0.01, 0.99]`.
fn random_dgp(kind: ScenarioKind, horizon: u32, coefs: &[f64]) -> DgpTable {
    let at = |i: usize| coefs[i % coefs.len()];
    let lin = |k: u32, h: &[bool], offset: usize| {
        let v = at(offset + k as usize)
            + h.iter().enumerate().map(|(j, &b)| if b { at(offset + 7 * j + 3) - 0.5 } else { 0.0 }).sum::<f64>() * 0.3;
        v.clamp(0.01, 0.99)
    };
    DgpTableOf::from_fn(kind, horizon, |k, h| lin(k, h, 0), |k, h| lin(k, h, 11)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_processes_are_coherent(
        coefs in proptest::collection::vec(0.0f64..1.0, 24),
        horizon in 1u32..=5,
        b in any::<bool>(),
    ) {
        let kind = if b { ScenarioKind::NoWithinPeriodOutcomeEffect } else { ScenarioKind::NoWithinPeriodTreatmentEffect };
        let dgp = random_dgp(kind, horizon, &coefs);
        let support = enumerate_distribution(&dgp).unwrap();
        prop_assert!((total_mass(&support) - 1.0).abs() < 1e-12);
        for (t, _) in &support {
            prop_assert!(t.validate(kind).is_ok());
        }
        for regime in [Regime::Never, Regime::AlwaysFromStart, Regime::UniformGrace(horizon)] {
            let curve = counterfactual_survival(&dgp, regime).unwrap();
            prop_assert!(curve.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(curve.iter().all(|s| (0.0..=1.0).contains(s)));
        }
        let back = DgpTable::from_json(&dgp.to_json()).unwrap();
        prop_assert_eq!(back, dgp);
    }
}

#[test]
fn longest_tabulated_horizon_enumerates() {
    let dgp =
        random_dgp(ScenarioKind::NoWithinPeriodOutcomeEffect, tte_core::dgp::MAX_TABLE_HORIZON, &[0.3, 0.6, 0.2, 0.8]);
    let support = enumerate_distribution(&dgp).unwrap();
    assert!(support.len() <= tte_core::dgp::MAX_SUPPORT);
    assert!((total_mass(&support) - 1.0).abs() < 1e-9);
    let end = counterfactual_survival(&dgp, Regime::AlwaysFromStart).unwrap()[15];
    let world = enumerate_distribution(&dgp.intervened(Regime::AlwaysFromStart).unwrap()).unwrap();
    let alive: f64 = world.iter().filter(|(t, _)| !t.y[15]).map(|(_, p)| p).sum();
    assert!((alive - end.to_f64()).abs() < 1e-12);
}

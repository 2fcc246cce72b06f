mod support;

use std::collections::{BTreeMap, BTreeSet};

use dpm_core::hmm::{decode, fixtures, sample, Decoding, DecodingSet};
use dpm_core::ingest::{Dataset, Visit};
use dpm_core::summarize::{
    feature_matrix, fraction_before, kde, kde_at, outcome_ages, silverman_bandwidth, transition_summary,
    waterfall_points,
};
use proptest::prelude::*;
use rand::Rng;
use support::*;

fn gaussian(z: f64) -> f64 {
    (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[test]
fn three_point_density_by_hand() {
    // sd = 1; type-7 quartiles 0.5 and 1.5, IQR/1.34 < sd
    let h = 0.9 * (1.0f64 / 1.34) * 3f64.powf(-0.2);
    let expected = (gaussian(1.0 / h) + gaussian(0.0) + gaussian(1.0 / h)) / (3.0 * h);
    let samples = [0.0, 1.0, 2.0];
    assert!((silverman_bandwidth(&samples) - h).abs() < 1e-15);
    assert!((kde_at(&samples, h, 1.0) - expected).abs() < 1e-15);
    let est = kde(&samples, 513).unwrap();
    let (x, f) = est.grid[256];
    assert!((x - 1.0).abs() < 1e-12);
    assert!((f - expected).abs() < 1e-12);
}

#[test]
fn iqr_zero_uses_sd() {
    let samples = [0.0, 0.0, 0.0, 0.0, 0.0, 10.0];
    let mean = 10.0 / 6.0;
    let sd = ((5.0 * mean * mean + (10.0 - mean) * (10.0 - mean)) / 5.0f64).sqrt();
    assert!((silverman_bandwidth(&samples) - 0.9 * sd * 6f64.powf(-0.2)).abs() < 1e-12);
}

proptest! {
    #[test]
    fn kde_integrates_to_one(samples in proptest::collection::vec(0.0f64..240.0, 1..60)) {
        let est = kde(&samples, 512).unwrap();
        prop_assert!(est.grid.iter().all(|&(_, f)| f >= 0.0));
        let area = est.integral();
        prop_assert!((0.99..=1.01).contains(&area), "{}", area);
    }

    #[test]
    fn kde_is_symmetric(half in proptest::collection::vec(0.0f64..50.0, 1..20), m in -20.0f64..80.0, d in 0.0f64..30.0) {
        let samples: Vec<f64> = half.iter().flat_map(|x| [m + x, m - x]).collect();
        let h = silverman_bandwidth(&samples);
        prop_assert!((kde_at(&samples, h, m + d) - kde_at(&samples, h, m - d)).abs() < 1e-12);
    }
}

fn constructed_fixture() -> (Dataset, DecodingSet) {
    // ten subjects, each with one 3 -> 4 transition; seven land before 60 months
    let landing = [12.0, 24.0, 30.0, 45.0, 57.0, 59.0, 59.9, 60.0, 72.0, 96.0];
    let mut visits = Vec::new();
    let mut subjects = BTreeMap::new();
    for (i, &age) in landing.iter().enumerate() {
        let id = format!("p{i}");
        let ages = [age - 6.0, age, age + 6.0];
        for &a in &ages {
            visits.push(Visit {
                subject_id: id.clone(),
                age_months: a,
                observations: BTreeMap::from([("v0".to_string(), Some(true))]),
                outcomes: BTreeMap::new(),
            });
        }
        subjects.insert(
            id,
            Decoding {
                ages: ages.to_vec(),
                states: vec![3, 4, 4],
                posteriors: vec![vec![0.2; 5]; 3],
                viterbi_path: vec![3, 4, 4],
                subject_log_likelihood: 0.0,
            },
        );
    }
    let dataset = Dataset::from_visits(&config(&["v0".to_string()]), visits).unwrap();
    let decodings = DecodingSet { model_id: "m".into(), dataset_id: dataset.id(), n_states: 5, subjects };
    (dataset, decodings)
}

#[test]
fn fraction_before_on_constructed_fixture() {
    let (dataset, decodings) = constructed_fixture();
    let summary = transition_summary(&decodings, &dataset, None).unwrap();
    assert_eq!(summary.counts[3][4], 10);
    assert_eq!(summary.counts[4][4], 10);
    assert_eq!(fraction_before(&summary, 60.0, 3, 4), Some(0.7));
    assert_eq!(fraction_before(&summary, 0.0, 3, 4), Some(0.0));
    assert_eq!(fraction_before(&summary, 60.0, 4, 3), None);
}

#[test]
fn summaries_on_sampled_data() {
    let truth = fixtures::three_state_generator();
    let mut rng = rng(31);
    for seed in 0..10 {
        let n_subjects = rng.random_range(1..40);
        let n_visits = rng.random_range(1..12);
        let data = sample(&truth, n_subjects, n_visits, seed);
        let decoded = decode(&truth, &data).unwrap();
        let full = transition_summary(&decoded, &data, None).unwrap();
        let expected: usize = data.subjects().values().map(|s| s.visits.len() - 1).sum();
        assert_eq!(full.total() as usize, expected);

        let cohort: BTreeSet<String> = data.subjects().keys().filter(|_| rng.random_bool(0.5)).cloned().collect();
        let sub = data.restrict(&cohort);
        assert_eq!(
            transition_summary(&decoded, &data, Some(&cohort)).unwrap(),
            transition_summary(&decoded, &sub, None).unwrap()
        );
        assert_eq!(
            waterfall_points(&decoded, &data, Some(&cohort)).unwrap(),
            waterfall_points(&decoded, &sub, None).unwrap()
        );
        let vars: Vec<String> = truth.variables().map(str::to_owned).collect();
        let fm = feature_matrix(&truth, &decoded, &data, &vars).unwrap();
        for v in &vars {
            let row: Vec<f64> = fm.rows[v].iter().map(|x| x.unwrap()).collect();
            assert_eq!(&row, &truth.emission()[v]);
        }
    }
}

#[test]
fn outcome_ages_respect_cohort() {
    let mut visits = Vec::new();
    for (id, flags) in [("a", [false, true, true]), ("b", [false, false, false]), ("c", [true, false, true])] {
        for (t, flag) in flags.iter().enumerate() {
            visits.push(Visit {
                subject_id: id.into(),
                age_months: 12.0 * (t + 1) as f64,
                observations: BTreeMap::new(),
                outcomes: BTreeMap::from([("onset".to_string(), *flag)]),
            });
        }
    }
    let mut c = config(&["v0".to_string()]);
    c.outcome_cols = vec!["onset".into()];
    let d = Dataset::from_visits(&c, visits).unwrap();
    assert_eq!(outcome_ages(&d, "onset", None).unwrap(), vec![24.0, 12.0]);
    let cohort = BTreeSet::from(["a".to_string(), "b".to_string()]);
    assert_eq!(outcome_ages(&d, "onset", Some(&cohort)).unwrap(), vec![24.0]);
}

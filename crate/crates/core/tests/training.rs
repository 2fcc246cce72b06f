mod support;

use dpm_core::hmm::{fixtures, sample, train, train_with_report, HmmModel, TrainConfig, SUM_TOLERANCE};
use support::floor_ok;

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, k - 1);
            out.push(q);
        }
    }
    out
}

/// `perm[true_state] = fitted_state`, minimizing total absolute emission error.
fn align(truth: &HmmModel, fitted: &HmmModel) -> Vec<usize> {
    let k = truth.n_states();
    permutations(k)
        .into_iter()
        .map(|perm| {
            let cost: f64 = truth
                .emission()
                .iter()
                .map(|(v, b)| (0..k).map(|s| (b[s] - fitted.emission()[v][perm[s]]).abs()).sum::<f64>())
                .sum();
            (cost, perm)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap()
        .1
}

fn max_abs_error(truth: &HmmModel, fitted: &HmmModel) -> (f64, f64) {
    let perm = align(truth, fitted);
    let k = truth.n_states();
    let mut a_err: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            a_err = a_err.max((truth.transition()[i][j] - fitted.transition()[perm[i]][perm[j]]).abs());
        }
    }
    let mut b_err: f64 = 0.0;
    for (v, b) in truth.emission() {
        for s in 0..k {
            b_err = b_err.max((b[s] - fitted.emission()[v][perm[s]]).abs());
        }
    }
    (a_err, b_err)
}

#[test]
fn permutation_helper() {
    assert_eq!(permutations(3).len(), 6);
    let m = fixtures::three_state_generator();
    assert_eq!(align(&m, &m), vec![0, 1, 2]);
}

#[test]
fn recovers_three_state_generator() {
    let truth = fixtures::three_state_generator();
    let data = sample(&truth, 500, 20, 20240501);
    let fitted = train(&data, &TrainConfig::new(3, 1)).unwrap();
    let (a_err, b_err) = max_abs_error(&truth, &fitted);
    eprintln!("recovery: transition {a_err:.4}, emission {b_err:.4}");
    assert!(a_err <= 0.05, "transition error {a_err}");
    assert!(b_err <= 0.05, "emission error {b_err}");
}

#[test]
fn em_never_decreases_and_respects_invariants() {
    let truth = fixtures::three_state_generator();
    let data = sample(&truth, 200, 12, 8);
    let report = train_with_report(&data, &TrainConfig::new(3, 5)).unwrap();
    assert_eq!(report.restarts.len(), 5);
    for trace in &report.restarts {
        for w in trace.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{} -> {}", w[0], w[1]);
        }
    }
    let m = &report.model;
    assert_eq!(m.log_likelihood(), *report.restarts[report.best_restart].log_likelihoods.last().unwrap());
    for r in &report.restarts {
        assert!(r.log_likelihoods.last().unwrap() <= &m.log_likelihood());
    }
    assert!((m.initial().iter().sum::<f64>() - 1.0).abs() < SUM_TOLERANCE);
    for row in m.transition() {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < SUM_TOLERANCE);
    }
    assert!(m.emission().values().flatten().all(|&p| floor_ok(p)));
    assert_eq!(m.n_iterations_run(), report.restarts[report.best_restart].log_likelihoods.len() - 1);
}

#[test]
fn max_iter_bounds_iterations() {
    let data = sample(&fixtures::three_state_generator(), 50, 10, 3);
    let config = TrainConfig { max_iter: 4, n_restarts: 2, ..TrainConfig::new(3, 2) };
    let report = train_with_report(&data, &config).unwrap();
    for trace in &report.restarts {
        assert!(trace.log_likelihoods.len() <= 5);
    }
    assert!(report.model.n_iterations_run() <= 4);
}

#[test]
fn missing_values_are_tolerated() {
    let truth = fixtures::three_state_generator();
    let full = sample(&truth, 120, 10, 12);
    let config = full.ingest_config();
    // Blank every third cell.
    let mut i = 0;
    let visits = full
        .subjects()
        .values()
        .flat_map(|s| s.visits.clone())
        .map(|mut v| {
            for x in v.observations.values_mut() {
                i += 1;
                if i % 3 == 0 {
                    *x = None;
                }
            }
            v
        })
        .collect();
    let sparse = dpm_core::Dataset::from_visits(&config, visits).unwrap();
    let m = train(&sparse, &TrainConfig { n_restarts: 2, ..TrainConfig::new(3, 1) }).unwrap();
    assert!(m.log_likelihood().is_finite());
    assert!(m.emission().values().flatten().all(|&p| floor_ok(p)));
}

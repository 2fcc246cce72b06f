mod support;

use dpm_core::hmm::{decode, forward_backward, viterbi, SUM_TOLERANCE};
use rand::Rng;
use support::*;

const TOL: f64 = 1e-10;

#[test]
fn forward_backward_and_viterbi_match_path_enumeration() {
    let mut rng = rng(0x5eed);
    for case in 0..200 {
        let k = rng.random_range(1..=4);
        let t = rng.random_range(1..=8);
        let v = rng.random_range(1..=3);
        let model = random_model(&mut rng, k, v);
        let data = random_subject(&mut rng, &variable_names(v), t, 0.25);
        let subject = &data.subjects()["s"];
        let oracle = enumerate_paths(&model, subject);

        let fb = forward_backward(&model, subject).unwrap();
        assert!((fb.log_likelihood - oracle.log_likelihood).abs() < TOL, "case {case}: log-lik");
        for (p, q) in fb.posteriors.iter().zip(&oracle.posteriors) {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < SUM_TOLERANCE);
            for (a, b) in p.iter().zip(q) {
                assert!((a - b).abs() < TOL, "case {case}: posterior {a} vs {b}");
            }
        }
        assert_eq!(viterbi(&model, subject).unwrap(), oracle.best_path, "case {case}: viterbi");
    }
}

#[test]
fn decoded_states_are_oracle_argmax() {
    let mut rng = rng(77);
    for _ in 0..50 {
        let model = random_model(&mut rng, 3, 2);
        let data = random_subject(&mut rng, &variable_names(2), 6, 0.2);
        let oracle = enumerate_paths(&model, &data.subjects()["s"]);
        let decoded = decode(&model, &data).unwrap();
        let d = &decoded.subjects["s"];
        for (state, post) in d.states.iter().zip(&oracle.posteriors) {
            let best = post.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            // argmax of the oracle posteriors, allowing only float-level near-ties
            assert!(post[*state] >= best - 1e-12);
            let first = post.iter().position(|&p| p >= best - 1e-12).unwrap();
            assert_eq!(*state, first);
        }
        assert_eq!(d.viterbi_path, oracle.best_path);
    }
}

#[test]
fn missing_cell_equals_sum_of_imputed_likelihoods() {
    let mut rng = rng(4);
    for _ in 0..100 {
        let k = rng.random_range(1..=4);
        let t_len = rng.random_range(1..=4);
        let vars = variable_names(rng.random_range(1..=3));
        let model = random_model(&mut rng, k, vars.len());
        let data = random_subject(&mut rng, &vars, t_len, 0.0);
        let subject = &data.subjects()["s"];
        let t = rng.random_range(0..t_len);
        let var = &vars[rng.random_range(0..vars.len())];

        let with = |value: Option<bool>| {
            let mut s = subject.clone();
            s.visits[t].observations.insert(var.clone(), value);
            s
        };
        let lik = |s| forward_backward(&model, &s).unwrap().log_likelihood.exp();
        let missing = lik(with(None));
        let imputed = lik(with(Some(true))) + lik(with(Some(false)));
        assert!((missing - imputed).abs() < 1e-12, "{missing} vs {imputed}");
        let brute = enumerate_paths(&model, &with(None)).likelihood;
        assert!((missing - brute).abs() < 1e-12);
    }
}

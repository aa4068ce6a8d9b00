use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xfactor_core::hmm::{self, baum_welch, init_from_segments, GaussianHmm, ModelFile, TrainConfig};

fn simplex(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

fn random_hmm(rng: &mut impl Rng, n: usize, d: usize) -> GaussianHmm {
    GaussianHmm::new(
        simplex(rng, n),
        (0..n).map(|_| simplex(rng, n)).collect(),
        (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect(),
        (0..n).map(|_| (0..d).map(|_| rng.random_range(0.2..2.0)).collect()).collect(),
    )
    .unwrap()
}

fn random_seq(rng: &mut impl Rng, t: usize, d: usize, spread: f64) -> Vec<Vec<f64>> {
    (0..t)
        .map(|_| (0..d).map(|_| rng.random_range(-spread..spread)).collect())
        .collect()
}

fn log_gauss(x: &[f64], m: &[f64], v: &[f64]) -> f64 {
    x.iter()
        .zip(m)
        .zip(v)
        .map(|((x, m), v)| -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (x - m).powi(2) / (2.0 * v))
        .sum()
}

fn path_score(m: &GaussianHmm, seq: &[Vec<f64>], path: &[usize]) -> f64 {
    let mut s = m.prior[path[0]].ln() + log_gauss(&seq[0], &m.means[path[0]], &m.vars[path[0]]);
    for t in 1..seq.len() {
        s += m.trans[path[t - 1]][path[t]].ln() + log_gauss(&seq[t], &m.means[path[t]], &m.vars[path[t]]);
    }
    s
}

fn all_paths(n: usize, t: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..t {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..n).map(move |s| {
                    let mut q = p.clone();
                    q.push(s);
                    q
                })
            })
            .collect();
    }
    out
}

fn brute_force_loglik(m: &GaussianHmm, seq: &[Vec<f64>]) -> f64 {
    let scores: Vec<f64> = all_paths(m.n_states(), seq.len())
        .iter()
        .map(|p| path_score(m, seq, p))
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

#[test]
fn forward_matches_path_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..100 {
        let n = rng.random_range(1..=3);
        let d = rng.random_range(1..=2);
        let m = random_hmm(&mut rng, n, d);
        let t = rng.random_range(1..=6);
        let seq = random_seq(&mut rng, t, d, 3.0);
        let fast = m.log_likelihood(&seq).unwrap();
        assert!((fast - brute_force_loglik(&m, &seq)).abs() < 1e-9);
    }
}

#[test]
fn viterbi_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..100 {
        let n = rng.random_range(1..=3);
        let d = rng.random_range(1..=2);
        let m = random_hmm(&mut rng, n, d);
        let t = rng.random_range(1..=6);
        let seq = random_seq(&mut rng, t, d, 3.0);
        let best = all_paths(n, seq.len())
            .into_iter()
            .map(|p| (path_score(&m, &seq, &p), p))
            .fold(None::<(f64, Vec<usize>)>, |acc, (s, p)| match acc {
                Some((bs, bp)) if bs >= s => Some((bs, bp)),
                _ => Some((s, p)),
            })
            .unwrap();
        let (path, score) = m.viterbi(&seq).unwrap();
        assert_eq!(path, best.1);
        assert!((score - best.0).abs() < 1e-9);
    }
}

#[test]
fn viterbi_ties_go_to_lower_states() {
    let m = GaussianHmm::new(
        vec![0.5, 0.5],
        vec![vec![0.5, 0.5]; 2],
        vec![vec![1.0]; 2],
        vec![vec![1.0]; 2],
    )
    .unwrap();
    assert_eq!(m.viterbi(&[vec![0.3], vec![2.0], vec![-1.0]]).unwrap().0, vec![0, 0, 0]);
}

#[test]
fn in_model_data_scores_higher_than_far_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = random_hmm(&mut rng, 3, 2);
    let (_, near) = m.sample(60, &mut rng);
    let far: Vec<Vec<f64>> = near
        .iter()
        .map(|x| x.iter().map(|v| v + 10.0 * 2.0f64.sqrt()).collect())
        .collect();
    assert!(m.log_likelihood(&near).unwrap() / 60.0 > m.log_likelihood(&far).unwrap() / 60.0);
}

#[test]
fn single_state_recovers_sample_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let truth = GaussianHmm::new(vec![1.0], vec![vec![1.0]], vec![vec![1.5, -0.5]], vec![vec![0.8, 2.0]]).unwrap();
    let seqs: Vec<Vec<Vec<f64>>> = (0..20).map(|_| truth.sample(25, &mut rng).1).collect();
    let (m, _) = hmm::train(&seqs, 1, &TrainConfig::default()).unwrap();
    let all: Vec<&Vec<f64>> = seqs.iter().flatten().collect();
    for k in 0..2 {
        let xs: Vec<f64> = all.iter().map(|x| x[k]).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        let se = (var / xs.len() as f64).sqrt();
        assert!((m.means[0][k] - mean).abs() < 3.0 * se);
        assert!((m.means[0][k] - mean).abs() < 1e-9);
        assert!((m.vars[0][k] - var).abs() < 1e-9);
    }
}

#[test]
fn zero_responsibility_state_is_reseeded() {
    // state 1 sits far from every observation and starts with no prior mass
    let m = GaussianHmm::new(
        vec![1.0, 0.0],
        vec![vec![1.0, 0.0], vec![0.5, 0.5]],
        vec![vec![0.0], vec![1e3]],
        vec![vec![1.0], vec![1.0]],
    )
    .unwrap();
    let seqs = vec![vec![vec![0.1], vec![-0.2], vec![0.4]]];
    let cfg = TrainConfig {
        max_iterations: 2,
        loglik_tolerance: -1.0,
        ..TrainConfig::default()
    };
    let (out, trace) = baum_welch(&m, &seqs, &cfg).unwrap();
    assert!(trace.reinitialized >= 1);
    assert!(seqs[0].contains(&out.means[1]));
    out.validate().unwrap();
}

#[test]
fn training_is_seed_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let src = random_hmm(&mut rng, 3, 2);
    let seqs: Vec<Vec<Vec<f64>>> = (0..10).map(|_| src.sample(12, &mut rng).1).collect();
    let cfg = TrainConfig::default().with_seed(3);
    let a = hmm::train(&seqs, 3, &cfg).unwrap();
    let b = hmm::train(&seqs, 3, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn init_errors_without_long_sequence() {
    let seqs = vec![vec![vec![0.0]; 2]; 3];
    assert!(init_from_segments(&seqs, 3, &TrainConfig::default()).is_err());
}

#[test]
fn model_json_is_bit_faithful() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..20 {
        let m = random_hmm(&mut rng, 3, 2);
        let text = ModelFile::new(m.clone()).to_json().unwrap();
        let back = ModelFile::from_json(&text).unwrap().model;
        for (a, b) in m.means.iter().flatten().zip(back.means.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in m.trans.iter().flatten().zip(back.trans.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(m, back);
    }
}

fn permuted(m: &GaussianHmm, perm: &[usize]) -> GaussianHmm {
    let n = m.n_states();
    GaussianHmm::new(
        perm.iter().map(|&p| m.prior[p]).collect(),
        (0..n).map(|i| (0..n).map(|j| m.trans[perm[i]][perm[j]]).collect()).collect(),
        perm.iter().map(|&p| m.means[p].clone()).collect(),
        perm.iter().map(|&p| m.vars[p].clone()).collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn permutation_equivariance(seed in any::<u64>(), t in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_hmm(&mut rng, 3, 2);
        let seq = random_seq(&mut rng, t, 2, 3.0);
        let base = m.log_likelihood(&seq).unwrap();
        for perm in [[1, 0, 2], [2, 1, 0], [1, 2, 0]] {
            let p = permuted(&m, &perm);
            prop_assert!((p.log_likelihood(&seq).unwrap() - base).abs() < 1e-12);
        }
    }

    #[test]
    fn viterbi_never_exceeds_forward(seed in any::<u64>(), t in 1usize..40, n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_hmm(&mut rng, n, 2);
        let seq = random_seq(&mut rng, t, 2, 4.0);
        let (_, v) = m.viterbi(&seq).unwrap();
        prop_assert!(v <= m.log_likelihood(&seq).unwrap() + 1e-9);
    }

    #[test]
    fn every_iteration_keeps_invariants(seed in any::<u64>(), n in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = random_hmm(&mut rng, 3, 2);
        let seqs: Vec<Vec<Vec<f64>>> = (0..6)
            .map(|_| {
                let t = rng.random_range(n..20);
                src.sample(t, &mut rng).1
            })
            .collect();
        let init = init_from_segments(&seqs, n, &TrainConfig::default()).unwrap();
        for iters in 1..=4 {
            let cfg = TrainConfig { max_iterations: iters, loglik_tolerance: f64::NEG_INFINITY, ..TrainConfig::default() };
            let (m, trace) = baum_welch(&init, &seqs, &cfg).unwrap();
            m.validate().unwrap();
            for row in &m.trans {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            prop_assert!((m.prior.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for v in m.vars.iter().flatten() {
                prop_assert!(*v >= 0.01 - 1e-15 && *v <= 100.0 + 1e-13);
            }
            for w in trace.logliks.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-8);
            }
        }
    }
}

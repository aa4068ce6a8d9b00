//! Gaussian-emission hidden Markov model with diagonal covariances.
//!
//! All recursions run in log space. Training is Baum-Welch over multiple
//! sequences with every variance clamped to `[var_floor, var_ceil]` after each
//! M-step; the clamp is the exact constrained maximiser for a diagonal
//! Gaussian, so EM stays monotone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::Scaler;
use crate::error::{Error, Result};
use crate::stats::logsumexp;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Off-diagonal transition probability used at initialisation.
pub const INIT_OFF_DIAGONAL: f64 = 0.025;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianHmm {
    pub prior: Vec<f64>,
    pub trans: Vec<Vec<f64>>,
    pub means: Vec<Vec<f64>>,
    /// Diagonal covariance entries per state.
    pub vars: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_iterations: usize,
    /// Stop when total log-likelihood improves by less than this.
    pub loglik_tolerance: f64,
    /// Baum-Welch passes over the representative sequences after segmental
    /// initialisation.
    pub init_iterations: usize,
    pub n_representatives: usize,
    pub var_floor: f64,
    pub var_ceil: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iterations: 20,
            loglik_tolerance: 1e-4,
            init_iterations: 3,
            n_representatives: 5,
            var_floor: 0.01,
            var_ceil: 100.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be at least 1".into()));
        }
        if !(self.var_floor > 0.0 && self.var_floor < self.var_ceil) {
            return Err(Error::InvalidInput(format!(
                "variance bounds must satisfy 0 < floor < ceil, got [{}, {}]",
                self.var_floor, self.var_ceil
            )));
        }
        if self.n_representatives == 0 {
            return Err(Error::InvalidInput("n_representatives must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TrainConfig { seed, ..self.clone() }
    }

    fn clamp(&self, v: f64) -> f64 {
        if v.is_nan() {
            self.var_floor
        } else {
            v.clamp(self.var_floor, self.var_ceil)
        }
    }
}

/// Per-iteration record of a Baum-Welch run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Total log-likelihood of the training set under the parameters in
    /// force at each iteration; the last entry belongs to the returned model.
    pub logliks: Vec<f64>,
    pub converged: bool,
    /// States re-seeded after losing all responsibility.
    pub reinitialized: usize,
}

fn check_simplex(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidInput(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

impl GaussianHmm {
    pub fn new(prior: Vec<f64>, trans: Vec<Vec<f64>>, means: Vec<Vec<f64>>, vars: Vec<Vec<f64>>) -> Result<Self> {
        let m = GaussianHmm {
            prior,
            trans,
            means,
            vars,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn n_states(&self) -> usize {
        self.prior.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_states();
        if n == 0 {
            return Err(Error::InvalidInput("an HMM needs at least one state".into()));
        }
        if self.trans.len() != n || self.means.len() != n || self.vars.len() != n {
            return Err(Error::InvalidInput(format!(
                "state count mismatch: prior {n}, trans {}, means {}, vars {}",
                self.trans.len(),
                self.means.len(),
                self.vars.len()
            )));
        }
        check_simplex(&self.prior, "prior")?;
        for (i, row) in self.trans.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            check_simplex(row, &format!("transition row {i}"))?;
        }
        let d = self.dim();
        for (mu, var) in self.means.iter().zip(&self.vars) {
            if mu.len() != d || var.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: mu.len().max(var.len()),
                });
            }
            if mu.iter().any(|v| !v.is_finite()) || var.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(Error::InvalidInput("means must be finite and variances positive".into()));
            }
        }
        Ok(())
    }

    fn check_seq(&self, seq: &[Vec<f64>]) -> Result<()> {
        if seq.is_empty() {
            return Err(Error::InvalidInput("empty observation sequence".into()));
        }
        let d = self.dim();
        match seq.iter().find(|o| o.len() != d) {
            Some(o) => Err(Error::DimensionMismatch {
                expected: d,
                got: o.len(),
            }),
            None => Ok(()),
        }
    }

    /// `ln N(x; μ_j, diag(σ²_j))`.
    pub fn log_emission(&self, state: usize, x: &[f64]) -> f64 {
        let mu = &self.means[state];
        let var = &self.vars[state];
        let mut acc = 0.0;
        for ((&xi, &m), &v) in x.iter().zip(mu).zip(var) {
            let d = xi - m;
            acc += LN_2PI + v.ln() + d * d / v;
        }
        -0.5 * acc
    }

    fn emission_table(&self, seq: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let norm: Vec<f64> = self
            .vars
            .iter()
            .map(|var| var.iter().map(|v| LN_2PI + v.ln()).sum::<f64>())
            .collect();
        seq.iter()
            .map(|x| {
                (0..self.n_states())
                    .map(|j| {
                        let q: f64 = x
                            .iter()
                            .zip(&self.means[j])
                            .zip(&self.vars[j])
                            .map(|((xi, m), v)| (xi - m) * (xi - m) / v)
                            .sum();
                        -0.5 * (norm[j] + q)
                    })
                    .collect()
            })
            .collect()
    }

    fn log_trans(&self) -> Vec<Vec<f64>> {
        self.trans.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect()
    }

    fn forward_table(&self, emis: &[Vec<f64>], log_a: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.n_states();
        let mut alpha = Vec::with_capacity(emis.len());
        alpha.push((0..n).map(|j| self.prior[j].ln() + emis[0][j]).collect::<Vec<f64>>());
        let mut buf = vec![0.0; n];
        for e in &emis[1..] {
            let prev: &Vec<f64> = alpha.last().unwrap();
            let next: Vec<f64> = (0..n)
                .map(|j| {
                    for i in 0..n {
                        buf[i] = prev[i] + log_a[i][j];
                    }
                    logsumexp(&buf) + e[j]
                })
                .collect();
            alpha.push(next);
        }
        alpha
    }

    fn backward_table(&self, emis: &[Vec<f64>], log_a: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let n = self.n_states();
        let t_len = emis.len();
        let mut beta = vec![vec![0.0; n]; t_len];
        let mut buf = vec![0.0; n];
        for t in (0..t_len - 1).rev() {
            for i in 0..n {
                for j in 0..n {
                    buf[j] = log_a[i][j] + emis[t + 1][j] + beta[t + 1][j];
                }
                beta[t][i] = logsumexp(&buf);
            }
        }
        beta
    }

    /// `ln P(O | λ)` by the forward recursion.
    pub fn log_likelihood(&self, seq: &[Vec<f64>]) -> Result<f64> {
        self.check_seq(seq)?;
        let emis = self.emission_table(seq);
        let alpha = self.forward_table(&emis, &self.log_trans());
        Ok(logsumexp(alpha.last().unwrap()))
    }

    /// Most likely state path and its joint log-probability. Ties go to the
    /// lower state index.
    pub fn viterbi(&self, seq: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
        self.check_seq(seq)?;
        let n = self.n_states();
        let emis = self.emission_table(seq);
        let log_a = self.log_trans();
        let mut delta: Vec<f64> = (0..n).map(|j| self.prior[j].ln() + emis[0][j]).collect();
        let mut back: Vec<Vec<usize>> = Vec::with_capacity(seq.len());
        for e in &emis[1..] {
            let mut next = vec![f64::NEG_INFINITY; n];
            let mut ptr = vec![0usize; n];
            for j in 0..n {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for i in 0..n {
                    let v = delta[i] + log_a[i][j];
                    if v > best {
                        best = v;
                        arg = i;
                    }
                }
                next[j] = best + e[j];
                ptr[j] = arg;
            }
            delta = next;
            back.push(ptr);
        }
        let mut last = 0;
        for j in 1..n {
            if delta[j] > delta[last] {
                last = j;
            }
        }
        let score = delta[last];
        let mut path = vec![last; seq.len()];
        for t in (0..back.len()).rev() {
            path[t] = back[t][path[t + 1]];
        }
        Ok((path, score))
    }

    /// Draws a state path and observations.
    pub fn sample<R: Rng + ?Sized>(&self, len: usize, rng: &mut R) -> (Vec<usize>, Vec<Vec<f64>>) {
        let pick = |p: &[f64], rng: &mut R| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, &w) in p.iter().enumerate() {
                acc += w;
                if u < acc {
                    return i;
                }
            }
            p.len() - 1
        };
        let mut states: Vec<usize> = Vec::with_capacity(len);
        let mut obs = Vec::with_capacity(len);
        for t in 0..len {
            let s = if t == 0 {
                pick(&self.prior[..], rng)
            } else {
                pick(&self.trans[states[t - 1]][..], rng)
            };
            states.push(s);
            obs.push(
                self.means[s]
                    .iter()
                    .zip(&self.vars[s])
                    .map(|(&m, &v)| Normal::new(m, v.sqrt()).unwrap().sample(rng))
                    .collect(),
            );
        }
        (states, obs)
    }

    /// Copy with every variance multiplied by `factor`.
    pub fn inflated(&self, factor: f64) -> GaussianHmm {
        GaussianHmm {
            vars: self
                .vars
                .iter()
                .map(|v| v.iter().map(|x| x * factor).collect())
                .collect(),
            ..self.clone()
        }
    }
}

/// Segmental initialisation: the `n_representatives` longest sequences (ties
/// by input order) are each cut into `n_states` equal contiguous parts and
/// state `j` takes the pooled moments of every part `j`. Transitions are
/// ergodic with off-diagonal [`INIT_OFF_DIAGONAL`]; the prior is uniform.
pub fn init_from_segments<S: AsRef<[Vec<f64>]>>(
    sequences: &[S],
    n_states: usize,
    cfg: &TrainConfig,
) -> Result<GaussianHmm> {
    cfg.validate()?;
    if n_states == 0 {
        return Err(Error::InvalidInput("n_states must be at least 1".into()));
    }
    let self_p = 1.0 - INIT_OFF_DIAGONAL * (n_states - 1) as f64;
    if !(self_p > 0.0) {
        return Err(Error::InvalidInput(format!(
            "{n_states} states leave no self-transition mass at off-diagonal {INIT_OFF_DIAGONAL}"
        )));
    }
    let mut candidates: Vec<usize> = (0..sequences.len())
        .filter(|&i| sequences[i].as_ref().len() >= n_states)
        .collect();
    if candidates.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no training sequence has at least {n_states} observations"
        )));
    }
    candidates.sort_by_key(|&i| std::cmp::Reverse(sequences[i].as_ref().len()));
    candidates.truncate(cfg.n_representatives);

    let dim = sequences[candidates[0]].as_ref()[0].len();
    let mut means = Vec::with_capacity(n_states);
    let mut vars = Vec::with_capacity(n_states);
    for j in 0..n_states {
        let mut pooled: Vec<&Vec<f64>> = Vec::new();
        for &c in &candidates {
            let seq = sequences[c].as_ref();
            let len = seq.len();
            pooled.extend(&seq[j * len / n_states..(j + 1) * len / n_states]);
        }
        let cnt = pooled.len() as f64;
        let mut mu = vec![0.0; dim];
        for x in &pooled {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: x.len(),
                });
            }
            for (m, v) in mu.iter_mut().zip(x.iter()) {
                *m += v;
            }
        }
        mu.iter_mut().for_each(|m| *m /= cnt);
        let mut var = vec![0.0; dim];
        for x in &pooled {
            for ((s, v), m) in var.iter_mut().zip(x.iter()).zip(&mu) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s = cfg.clamp(*s / cnt));
        means.push(mu);
        vars.push(var);
    }
    let trans = (0..n_states)
        .map(|i| {
            (0..n_states)
                .map(|j| if i == j { self_p } else { INIT_OFF_DIAGONAL })
                .collect()
        })
        .collect();
    GaussianHmm::new(vec![1.0 / n_states as f64; n_states], trans, means, vars)
}

struct Accumulators {
    prior: Vec<f64>,
    trans: Vec<Vec<f64>>,
    occupancy: Vec<f64>,
    weighted_sum: Vec<Vec<f64>>,
}

/// Multi-sequence Baum-Welch. Stops after `max_iterations` updates or once
/// the total log-likelihood gains less than `loglik_tolerance`.
pub fn baum_welch<S: AsRef<[Vec<f64>]>>(
    model: &GaussianHmm,
    sequences: &[S],
    cfg: &TrainConfig,
) -> Result<(GaussianHmm, TrainTrace)> {
    cfg.validate()?;
    model.validate()?;
    if sequences.is_empty() {
        return Err(Error::InsufficientData("Baum-Welch needs at least one sequence".into()));
    }
    for s in sequences {
        model.check_seq(s.as_ref())?;
    }
    let n = model.n_states();
    let d = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut current = model.clone();
    let mut trace = TrainTrace::default();

    for iteration in 0..=cfg.max_iterations {
        let log_a = current.log_trans();
        let mut acc = Accumulators {
            prior: vec![0.0; n],
            trans: vec![vec![0.0; n]; n],
            occupancy: vec![0.0; n],
            weighted_sum: vec![vec![0.0; d]; n],
        };
        let mut gammas: Vec<Vec<Vec<f64>>> = Vec::with_capacity(sequences.len());
        let mut total = 0.0;
        for s in sequences {
            let seq = s.as_ref();
            let emis = current.emission_table(seq);
            let alpha = current.forward_table(&emis, &log_a);
            let beta = current.backward_table(&emis, &log_a);
            let ll = logsumexp(alpha.last().unwrap());
            total += ll;
            let gamma: Vec<Vec<f64>> = (0..seq.len())
                .map(|t| (0..n).map(|j| (alpha[t][j] + beta[t][j] - ll).exp()).collect())
                .collect();
            for t in 0..seq.len().saturating_sub(1) {
                for i in 0..n {
                    for j in 0..n {
                        acc.trans[i][j] += (alpha[t][i] + log_a[i][j] + emis[t + 1][j] + beta[t + 1][j] - ll).exp();
                    }
                }
            }
            for j in 0..n {
                acc.prior[j] += gamma[0][j];
            }
            for (x, g) in seq.iter().zip(&gamma) {
                for j in 0..n {
                    acc.occupancy[j] += g[j];
                    for (s, v) in acc.weighted_sum[j].iter_mut().zip(x) {
                        *s += g[j] * v;
                    }
                }
            }
            gammas.push(gamma);
        }
        trace.logliks.push(total);
        if iteration > 0 {
            let prev = trace.logliks[trace.logliks.len() - 2];
            if total - prev < cfg.loglik_tolerance {
                trace.converged = true;
                break;
            }
        }
        if iteration == cfg.max_iterations {
            break;
        }

        // M-step
        let mut next = current.clone();
        let psum: f64 = acc.prior.iter().sum();
        next.prior = acc.prior.iter().map(|p| p / psum).collect();
        for i in 0..n {
            let row: f64 = acc.trans[i].iter().sum();
            if row > 0.0 && row.is_finite() {
                next.trans[i] = acc.trans[i].iter().map(|v| v / row).collect();
            }
        }
        for j in 0..n {
            if acc.occupancy[j] <= 1e-10 {
                let si = rng.random_range(0..sequences.len());
                let seq = sequences[si].as_ref();
                next.means[j] = seq[rng.random_range(0..seq.len())].clone();
                trace.reinitialized += 1;
                log::debug!("state {j} lost all responsibility; re-seeded from sequence {si}");
                continue;
            }
            next.means[j] = acc.weighted_sum[j].iter().map(|s| s / acc.occupancy[j]).collect();
        }
        let mut sq = vec![vec![0.0; d]; n];
        for (s, gamma) in sequences.iter().zip(&gammas) {
            for (x, g) in s.as_ref().iter().zip(gamma) {
                for j in 0..n {
                    for ((acc_sq, v), m) in sq[j].iter_mut().zip(x).zip(&next.means[j]) {
                        *acc_sq += g[j] * (v - m) * (v - m);
                    }
                }
            }
        }
        for j in 0..n {
            if acc.occupancy[j] <= 1e-10 {
                continue;
            }
            next.vars[j] = sq[j].iter().map(|s| cfg.clamp(s / acc.occupancy[j])).collect();
        }
        current = next;
    }
    Ok((current, trace))
}

/// Segmental initialisation, a short smoothing pass on the representative
/// sequences, then Baum-Welch on everything.
pub fn train<S: AsRef<[Vec<f64>]>>(
    sequences: &[S],
    n_states: usize,
    cfg: &TrainConfig,
) -> Result<(GaussianHmm, TrainTrace)> {
    let init = init_from_segments(sequences, n_states, cfg)?;
    let smoothed = if cfg.init_iterations > 0 {
        let mut reps: Vec<usize> = (0..sequences.len())
            .filter(|&i| sequences[i].as_ref().len() >= n_states)
            .collect();
        reps.sort_by_key(|&i| std::cmp::Reverse(sequences[i].as_ref().len()));
        reps.truncate(cfg.n_representatives);
        let rep_seqs: Vec<&[Vec<f64>]> = reps.iter().map(|&i| sequences[i].as_ref()).collect();
        let smooth_cfg = TrainConfig {
            max_iterations: cfg.init_iterations,
            ..cfg.clone()
        };
        baum_welch(&init, &rep_seqs, &smooth_cfg)?.0
    } else {
        init
    };
    baum_welch(&smoothed, sequences, cfg)
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Serialised form of a single model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub model: GaussianHmm,
    pub feature_mask: Option<Vec<usize>>,
    pub scaler: Option<Scaler>,
}

impl ModelFile {
    pub fn new(model: GaussianHmm) -> Self {
        ModelFile {
            version: MODEL_FORMAT_VERSION,
            model,
            feature_mask: None,
            scaler: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text)?;
        if f.version != MODEL_FORMAT_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported model format version {}",
                f.version
            )));
        }
        f.model.validate()?;
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> GaussianHmm {
        GaussianHmm::new(
            vec![0.5, 0.5],
            vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            vec![vec![0.0], vec![10.0]],
            vec![vec![1.0], vec![1.0]],
        )
        .unwrap()
    }

    #[test]
    fn single_state_likelihood_is_sum_of_log_densities() {
        let m = GaussianHmm::new(vec![1.0], vec![vec![1.0]], vec![vec![1.0, -1.0]], vec![vec![2.0, 0.5]]).unwrap();
        let seq = vec![vec![0.0, 0.0], vec![1.5, -2.0], vec![3.0, 1.0]];
        let expected: f64 = seq.iter().map(|x| m.log_emission(0, x)).sum();
        assert!((m.log_likelihood(&seq).unwrap() - expected).abs() < 1e-12);
        assert_eq!(m.viterbi(&seq).unwrap().0, vec![0, 0, 0]);
    }

    #[test]
    fn separated_states_decode() {
        let (path, _) = two_state().viterbi(&[vec![0.0], vec![10.0], vec![0.0]]).unwrap();
        assert_eq!(path, vec![0, 1, 0]);
    }

    #[test]
    fn dimension_mismatch_reported() {
        assert!(matches!(
            two_state().log_likelihood(&[vec![0.0, 1.0]]),
            Err(Error::DimensionMismatch { expected: 1, got: 2 })
        ));
        assert!(two_state().viterbi(&[vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn invalid_rows_rejected() {
        assert!(GaussianHmm::new(vec![1.0], vec![vec![0.9]], vec![vec![0.0]], vec![vec![1.0]]).is_err());
        assert!(GaussianHmm::new(vec![0.4, 0.4], vec![vec![0.5, 0.5]; 2], vec![vec![0.0]; 2], vec![vec![1.0]; 2]).is_err());
    }

    #[test]
    fn init_single_state_uses_global_moments() {
        let seqs = vec![vec![vec![1.0], vec![3.0]], vec![vec![5.0]]];
        let m = init_from_segments(&seqs, 1, &TrainConfig::default()).unwrap();
        assert_eq!(m.trans, vec![vec![1.0]]);
        assert!((m.means[0][0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn init_four_states_transition_layout() {
        let seq: Vec<Vec<f64>> = (0..16).map(|i| vec![i as f64]).collect();
        let m = init_from_segments(&[seq], 4, &TrainConfig::default()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 0.925 } else { 0.025 };
                assert!((m.trans[i][j] - want).abs() < 1e-15);
            }
        }
        assert_eq!(m.prior, vec![0.25; 4]);
        assert_eq!(m.means[0], vec![1.5]);
        assert_eq!(m.means[3], vec![13.5]);
    }

    #[test]
    fn init_constant_data_pins_floor() {
        let seq = vec![vec![2.0, -1.0]; 8];
        let m = init_from_segments(&[seq], 2, &TrainConfig::default()).unwrap();
        assert_eq!(m.means, vec![vec![2.0, -1.0]; 2]);
        assert_eq!(m.vars, vec![vec![0.01; 2]; 2]);
    }

    #[test]
    fn init_needs_long_enough_sequence() {
        let seqs = vec![vec![vec![1.0]; 3]];
        assert!(matches!(
            init_from_segments(&seqs, 4, &TrainConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn init_prefers_longest_sequences() {
        let cfg = TrainConfig {
            n_representatives: 1,
            ..TrainConfig::default()
        };
        let seqs = vec![vec![vec![100.0]; 2], vec![vec![1.0]; 3], vec![vec![2.0]; 3]];
        let m = init_from_segments(&seqs, 1, &cfg).unwrap();
        assert_eq!(m.means[0], vec![1.0]);
    }

    #[test]
    fn constant_training_data_pins_variance_floor() {
        let seqs = vec![vec![vec![4.0, 4.0]; 10]; 6];
        let (m, _) = train(&seqs, 2, &TrainConfig::default()).unwrap();
        assert!(m.vars.iter().flatten().all(|&v| v == 0.01));
    }

    #[test]
    fn model_file_round_trip_is_bit_exact() {
        let mut m = two_state();
        m.means[0][0] = 0.1 + 0.2;
        m.vars[1][0] = 1.0 / 3.0;
        let f = ModelFile::new(m);
        let back = ModelFile::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.model.means[0][0].to_bits(), (0.1f64 + 0.2).to_bits());
    }
}

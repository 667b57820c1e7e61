//! Two-state gesture HMMs per behavior and sequence classification.
//!
//! Hidden states and observations share the gesture alphabet: state 0 is
//! typing, state 1 is mouse. Emissions model classifier confusion.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::GestureKind;
use crate::classify::Confusion;
use crate::error::{Error, Result};

pub type Matrix2 = [[f64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Behavior {
    Surfing,
    Working,
    Gaming,
}

impl Behavior {
    pub const ALL: [Behavior; 3] = [Behavior::Surfing, Behavior::Working, Behavior::Gaming];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Behavior::Surfing => "surfing",
            Behavior::Working => "working",
            Behavior::Gaming => "gaming",
        }
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Behavior {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "surfing" => Ok(Behavior::Surfing),
            "working" => Ok(Behavior::Working),
            "gaming" => Ok(Behavior::Gaming),
            other => Err(Error::invalid("behavior", format!("unknown behavior {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorHmm {
    /// `None` for a candidate model fitted on a single sequence.
    pub behavior: Option<Behavior>,
    pub pi: [f64; 2],
    pub a: Matrix2,
    pub b: Matrix2,
}

fn check_distribution(name: &str, row: &[f64; 2]) -> Result<()> {
    if row.iter().any(|p| !(*p >= 0.0 && p.is_finite())) || (row[0] + row[1] - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(name, format!("{row:?} is not a probability vector")));
    }
    Ok(())
}

impl BehaviorHmm {
    pub fn new(behavior: Option<Behavior>, pi: [f64; 2], a: Matrix2, b: Matrix2) -> Result<Self> {
        let hmm = BehaviorHmm { behavior, pi, a, b };
        hmm.validate()?;
        Ok(hmm)
    }

    pub fn validate(&self) -> Result<()> {
        check_distribution("pi", &self.pi)?;
        for row in &self.a {
            check_distribution("A", row)?;
        }
        for row in &self.b {
            check_distribution("B", row)?;
        }
        Ok(())
    }
}

/// Observed classifier outputs in temporal order, plus the true gestures
/// when the sequence was simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureSequence {
    pub observations: Vec<GestureKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<GestureKind>>,
}

impl GestureSequence {
    pub fn new(observations: Vec<GestureKind>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::invalid("sequence", "empty"));
        }
        Ok(GestureSequence { observations, hidden: None })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    fn symbols(&self) -> Vec<usize> {
        self.observations.iter().map(|o| o.index()).collect()
    }
}

/// Scaled forward pass. Returns the normalized alphas and scale factors, or
/// `None` when the sequence has probability zero.
fn forward(hmm: &BehaviorHmm, obs: &[usize]) -> Option<(Vec<[f64; 2]>, Vec<f64>)> {
    let mut alphas = Vec::with_capacity(obs.len());
    let mut scales = Vec::with_capacity(obs.len());
    let mut alpha = [0, 1].map(|i| hmm.pi[i] * hmm.b[i][obs[0]]);
    for (t, &o) in obs.iter().enumerate() {
        if t > 0 {
            let prev: [f64; 2] = alphas[t - 1];
            alpha = [0, 1].map(|j| (prev[0] * hmm.a[0][j] + prev[1] * hmm.a[1][j]) * hmm.b[j][o]);
        }
        let c = alpha[0] + alpha[1];
        if !(c > 0.0) {
            return None;
        }
        alphas.push([alpha[0] / c, alpha[1] / c]);
        scales.push(c);
    }
    Some((alphas, scales))
}

/// Backward pass normalized with the forward scale factors.
fn backward(hmm: &BehaviorHmm, obs: &[usize], scales: &[f64]) -> Vec<[f64; 2]> {
    let n = obs.len();
    let mut betas = vec![[1.0, 1.0]; n];
    for t in (0..n - 1).rev() {
        let next = betas[t + 1];
        let o = obs[t + 1];
        betas[t] = [0, 1].map(|i| {
            (hmm.a[i][0] * hmm.b[0][o] * next[0] + hmm.a[i][1] * hmm.b[1][o] * next[1]) / scales[t + 1]
        });
    }
    betas
}

/// log P(O | λ); negative infinity when the sequence is impossible.
pub fn forward_log_likelihood(hmm: &BehaviorHmm, seq: &GestureSequence) -> f64 {
    if seq.is_empty() {
        return f64::NEG_INFINITY;
    }
    match forward(hmm, &seq.symbols()) {
        Some((_, scales)) => scales.iter().map(|c| c.ln()).sum(),
        None => f64::NEG_INFINITY,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaumWelchOptions {
    pub max_iter: usize,
    /// Stop once the total log-likelihood improves by less than this.
    pub tol: f64,
}

impl Default for BaumWelchOptions {
    fn default() -> Self {
        BaumWelchOptions { max_iter: 200, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaumWelchFit {
    pub a: Matrix2,
    /// Total log-likelihood of the training set before each update and after
    /// the last one.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Some entry of A collapsed to zero.
    pub at_boundary: bool,
    /// The data has probability zero under the starting model; A is returned
    /// unchanged.
    pub impossible: bool,
}

/// Re-estimates only the transition matrix, with `pi` and `b` held fixed.
pub fn baum_welch(
    sequences: &[GestureSequence],
    pi: [f64; 2],
    b: Matrix2,
    init_a: Matrix2,
    options: &BaumWelchOptions,
) -> Result<BaumWelchFit> {
    if sequences.is_empty() || sequences.iter().any(|s| s.is_empty()) {
        return Err(Error::invalid("sequences", "need at least one non-empty sequence"));
    }
    if init_a.iter().flatten().any(|p| !(*p > 0.0)) {
        return Err(Error::invalid("init A", "entries must be strictly positive"));
    }
    let mut hmm = BehaviorHmm::new(None, pi, init_a, b)?;
    let symbols: Vec<Vec<usize>> = sequences.iter().map(|s| s.symbols()).collect();
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    loop {
        let mut total_ll = 0.0;
        let mut num = [[0.0f64; 2]; 2];
        let mut den = [0.0f64; 2];
        for obs in &symbols {
            let Some((alphas, scales)) = forward(&hmm, obs) else {
                return Ok(BaumWelchFit {
                    a: init_a,
                    log_likelihoods: vec![f64::NEG_INFINITY],
                    iterations: 0,
                    converged: false,
                    at_boundary: false,
                    impossible: true,
                });
            };
            total_ll += scales.iter().map(|c| c.ln()).sum::<f64>();
            let betas = backward(&hmm, obs, &scales);
            for t in 0..obs.len() - 1 {
                let o = obs[t + 1];
                for i in 0..2 {
                    for j in 0..2 {
                        let xi = alphas[t][i] * hmm.a[i][j] * hmm.b[j][o] * betas[t + 1][j] / scales[t + 1];
                        num[i][j] += xi;
                        den[i] += xi;
                    }
                }
            }
        }
        if let Some(prev) = history.last() {
            if total_ll - prev < options.tol {
                history.push(total_ll);
                converged = true;
                break;
            }
        }
        history.push(total_ll);
        if iterations == options.max_iter {
            break;
        }
        for i in 0..2 {
            if den[i] > 0.0 {
                let row = [num[i][0] / den[i], num[i][1] / den[i]];
                let s = row[0] + row[1];
                hmm.a[i] = [row[0] / s, row[1] / s];
            }
        }
        iterations += 1;
    }
    let at_boundary = hmm.a.iter().flatten().any(|p| *p < 1e-12);
    Ok(BaumWelchFit { a: hmm.a, log_likelihoods: history, iterations, converged, at_boundary, impossible: false })
}

/// Row-normalized confusion counts; every cell gets one extra count when any
/// cell is zero.
pub fn build_emission(confusion: &Confusion) -> Result<Matrix2> {
    if confusion.iter().any(|row| row[0] + row[1] == 0) {
        return Err(Error::invalid("confusion", "every true class needs at least one count"));
    }
    let add = u64::from(confusion.iter().flatten().any(|c| *c == 0));
    Ok(confusion.map(|row| {
        let total = (row[0] + row[1] + 2 * add) as f64;
        [(row[0] + add) as f64 / total, (row[1] + add) as f64 / total]
    }))
}

/// Initial-state distribution from the first observation of each sequence,
/// add-one smoothed.
pub fn first_gesture_pi(sequences: &[GestureSequence]) -> [f64; 2] {
    let mut counts = [1.0, 1.0];
    for s in sequences {
        if let Some(o) = s.observations.first() {
            counts[o.index()] += 1.0;
        }
    }
    let total = counts[0] + counts[1];
    [counts[0] / total, counts[1] / total]
}

pub const DEFAULT_INIT_A: Matrix2 = [[0.7, 0.3], [0.3, 0.7]];

/// Trains one model per behavior from its training sequences.
pub fn fit_behavior_models(
    training: &[(Behavior, Vec<GestureSequence>)],
    b: Matrix2,
    options: &BaumWelchOptions,
) -> Result<Vec<BehaviorHmm>> {
    if training.is_empty() {
        return Err(Error::invalid("training", "no behaviors"));
    }
    training
        .iter()
        .map(|(behavior, seqs)| {
            if seqs.is_empty() {
                return Err(Error::invalid("training", format!("no sequences for {behavior}")));
            }
            let pi = first_gesture_pi(seqs);
            let fit = baum_welch(seqs, pi, b, DEFAULT_INIT_A, options)?;
            BehaviorHmm::new(Some(*behavior), pi, fit.a, b)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifyMethod {
    /// Highest per-symbol log-likelihood.
    #[default]
    Likelihood,
    /// Smallest model distance to an HMM fitted on the sequence itself.
    ModelDistance,
}

impl FromStr for ClassifyMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "likelihood" | "default" => Ok(ClassifyMethod::Likelihood),
            "distance" | "model_distance" => Ok(ClassifyMethod::ModelDistance),
            other => Err(Error::invalid("method", format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorDecision {
    /// `None` when every model gives the sequence probability zero.
    pub behavior: Option<Behavior>,
    /// Per-model score: log-likelihood per symbol, or model distance.
    pub scores: Vec<(Behavior, f64)>,
    /// Another behavior scored exactly as well; the fixed order decided.
    pub tie: bool,
}

/// Length of the sequence drawn from the candidate model when measuring
/// model distance.
pub const DISTANCE_SAMPLE_LEN: usize = 1000;

/// D(λ, λ_c) = [log P(O_c | λ_c) − log P(O_c | λ)] / T with O_c drawn from λ_c.
pub fn model_distance(model: &BehaviorHmm, candidate: &BehaviorHmm, sample: &GestureSequence) -> f64 {
    (forward_log_likelihood(candidate, sample) - forward_log_likelihood(model, sample)) / sample.len() as f64
}

pub fn classify_behavior(
    models: &[BehaviorHmm],
    seq: &GestureSequence,
    method: ClassifyMethod,
    seed: u64,
) -> Result<BehaviorDecision> {
    if models.len() < 2 {
        return Err(Error::invalid("models", "need at least two behavior models"));
    }
    if seq.is_empty() {
        return Err(Error::invalid("sequence", "empty"));
    }
    let mut scored = Vec::with_capacity(models.len());
    for m in models {
        let behavior = m.behavior.ok_or_else(|| Error::invalid("models", "model without a behavior label"))?;
        scored.push((behavior, m));
    }
    let scores: Vec<(Behavior, f64)> = match method {
        ClassifyMethod::Likelihood => scored
            .iter()
            .map(|(beh, m)| (*beh, forward_log_likelihood(m, seq) / seq.len() as f64))
            .collect(),
        ClassifyMethod::ModelDistance => {
            let reference = scored[0].1;
            let pi = first_gesture_pi(std::slice::from_ref(seq));
            let fit = baum_welch(std::slice::from_ref(seq), pi, reference.b, DEFAULT_INIT_A, &BaumWelchOptions::default())?;
            let candidate = BehaviorHmm::new(None, pi, fit.a, reference.b)?;
            let sample = sample_hmm(&candidate, DISTANCE_SAMPLE_LEN, seed);
            scored.iter().map(|(beh, m)| (*beh, -model_distance(m, &candidate, &sample))).collect()
        }
    };
    // Both methods are maximized here; distances are negated above.
    let best = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY || best.is_nan() {
        return Ok(BehaviorDecision { behavior: None, scores: restore(scores, method), tie: false });
    }
    let mut winners: Vec<Behavior> = scores.iter().filter(|s| s.1 == best).map(|s| s.0).collect();
    winners.sort();
    winners.dedup();
    Ok(BehaviorDecision { behavior: Some(winners[0]), tie: winners.len() > 1, scores: restore(scores, method) })
}

fn restore(scores: Vec<(Behavior, f64)>, method: ClassifyMethod) -> Vec<(Behavior, f64)> {
    match method {
        ClassifyMethod::Likelihood => scores,
        ClassifyMethod::ModelDistance => scores.into_iter().map(|(b, s)| (b, -s)).collect(),
    }
}

/// Draws an observation sequence (with hidden truth) from any HMM.
pub fn sample_hmm(hmm: &BehaviorHmm, length: usize, seed: u64) -> GestureSequence {
    sample_chain(hmm.pi, hmm.a, hmm.b, length, seed)
}

fn draw(rng: &mut ChaCha8Rng, row: &[f64; 2]) -> usize {
    usize::from(rng.random::<f64>() >= row[0])
}

fn sample_chain(pi: [f64; 2], a: Matrix2, b: Matrix2, length: usize, seed: u64) -> GestureSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hidden = Vec::with_capacity(length);
    let mut observations = Vec::with_capacity(length);
    let mut state = draw(&mut rng, &pi);
    for t in 0..length {
        if t > 0 {
            state = draw(&mut rng, &a[state]);
        }
        hidden.push(GestureKind::ALL[state]);
        observations.push(GestureKind::ALL[draw(&mut rng, &b[state])]);
    }
    GestureSequence { observations, hidden: Some(hidden) }
}

/// Simulator-side description of how a behavior mixes gestures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorProfile {
    pub behavior: Behavior,
    pub pi_true: [f64; 2],
    pub a_true: Matrix2,
}

impl BehaviorProfile {
    /// Chain with stationary typing share `typing` and mean run length
    /// `run` gestures averaged over both states.
    pub fn from_mix(behavior: Behavior, typing: f64, run: f64) -> Result<Self> {
        if !(typing > 0.0 && typing < 1.0) {
            return Err(Error::invalid("typing share", "must be in (0, 1)"));
        }
        let run_typing = 2.0 * run * typing;
        let run_mouse = 2.0 * run * (1.0 - typing);
        if !(run_typing >= 1.0 && run_mouse >= 1.0) {
            return Err(Error::invalid("run length", "runs shorter than one gesture"));
        }
        let p = 1.0 / run_typing;
        let q = 1.0 / run_mouse;
        Ok(BehaviorProfile {
            behavior,
            pi_true: [typing, 1.0 - typing],
            a_true: [[1.0 - p, p], [q, 1.0 - q]],
        })
    }

    pub fn standard(behavior: Behavior) -> Self {
        let (typing, run) = match behavior {
            Behavior::Surfing => (0.25, 6.0),
            Behavior::Working => (0.65, 6.0),
            Behavior::Gaming => (0.5, 2.0),
        };
        Self::from_mix(behavior, typing, run).expect("built-in profile is valid")
    }

    pub fn stationary_typing(&self) -> f64 {
        let p = self.a_true[0][1];
        let q = self.a_true[1][0];
        q / (p + q)
    }
}

pub fn sample_behavior_sequence(profile: &BehaviorProfile, b: Matrix2, length: usize, seed: u64) -> Result<GestureSequence> {
    if length == 0 {
        return Err(Error::invalid("length", "must be >= 1"));
    }
    BehaviorHmm::new(Some(profile.behavior), profile.pi_true, profile.a_true, b)?;
    Ok(sample_chain(profile.pi_true, profile.a_true, b, length, seed))
}

/// Rows are true behaviors, columns predictions, in Surfing, Working, Gaming
/// order. The last column counts unclassifiable sequences.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BehaviorConfusion {
    pub counts: [[u64; 4]; 3],
    pub ties: u64,
}

impl BehaviorConfusion {
    pub fn record(&mut self, truth: Behavior, decision: &BehaviorDecision) {
        let col = decision.behavior.map_or(3, |b| b.index());
        self.counts[truth.index()][col] += 1;
        self.ties += u64::from(decision.tie);
    }

    pub fn accuracy(&self, behavior: Behavior) -> f64 {
        let row = &self.counts[behavior.index()];
        let total: u64 = row.iter().sum();
        if total == 0 {
            0.0
        } else {
            row[behavior.index()] as f64 / total as f64
        }
    }

    pub fn macro_accuracy(&self) -> f64 {
        Behavior::ALL.iter().map(|b| self.accuracy(*b)).sum::<f64>() / 3.0
    }

    /// Text table: one row per true behavior with its prediction shares.
    pub fn table(&self) -> String {
        let mut out = String::from("truth\\predicted  surfing  working  gaming  accuracy\n");
        for b in Behavior::ALL {
            let row = &self.counts[b.index()];
            let total = row.iter().sum::<u64>().max(1) as f64;
            out.push_str(&format!(
                "{:<16} {:>7.1}% {:>7.1}% {:>6.1}% {:>8.1}%\n",
                b.as_str(),
                100.0 * row[0] as f64 / total,
                100.0 * row[1] as f64 / total,
                100.0 * row[2] as f64 / total,
                100.0 * self.accuracy(b)
            ));
        }
        out.push_str(&format!("AVG {:.1}%\n", 100.0 * self.macro_accuracy()));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const T: GestureKind = GestureKind::Keystroke;
    const M: GestureKind = GestureKind::MouseMove;

    fn seq(obs: &[GestureKind]) -> GestureSequence {
        GestureSequence::new(obs.to_vec()).unwrap()
    }

    /// Sum over every hidden path of the joint probability.
    fn brute_force(hmm: &BehaviorHmm, obs: &[usize]) -> f64 {
        let n = obs.len();
        (0..1usize << n)
            .map(|mask| {
                let state = |t: usize| (mask >> t) & 1;
                let mut p = hmm.pi[state(0)] * hmm.b[state(0)][obs[0]];
                for t in 1..n {
                    p *= hmm.a[state(t - 1)][state(t)] * hmm.b[state(t)][obs[t]];
                }
                p
            })
            .sum()
    }

    fn unscaled_forward(hmm: &BehaviorHmm, obs: &[usize]) -> f64 {
        let mut alpha = [0, 1].map(|i| hmm.pi[i] * hmm.b[i][obs[0]]);
        for &o in &obs[1..] {
            alpha = [0, 1].map(|j| (alpha[0] * hmm.a[0][j] + alpha[1] * hmm.a[1][j]) * hmm.b[j][o]);
        }
        alpha[0] + alpha[1]
    }

    fn textbook() -> BehaviorHmm {
        BehaviorHmm::new(None, [0.6, 0.4], [[0.7, 0.3], [0.4, 0.6]], [[0.9, 0.1], [0.2, 0.8]]).unwrap()
    }

    #[test]
    fn two_symbol_example_matches_enumeration() {
        let hmm = textbook();
        let o = [T, M];
        let p = brute_force(&hmm, &[0, 1]);
        // paths TT, TM, MT, MM
        let by_hand = 0.6 * 0.9 * 0.7 * 0.1 + 0.6 * 0.9 * 0.3 * 0.8 + 0.4 * 0.2 * 0.4 * 0.1 + 0.4 * 0.2 * 0.6 * 0.8;
        assert!((p - by_hand).abs() < 1e-15);
        assert!((p - 0.2090).abs() < 1e-12);
        assert!((forward_log_likelihood(&hmm, &seq(&o)) - p.ln()).abs() < 1e-12);
    }

    #[test]
    fn deterministic_chain() {
        let id = [[1.0, 0.0], [0.0, 1.0]];
        let hmm = BehaviorHmm::new(None, [1.0, 0.0], id, id).unwrap();
        assert_eq!(forward_log_likelihood(&hmm, &seq(&[T, T, T])), 0.0);
        assert_eq!(forward_log_likelihood(&hmm, &seq(&[T, M, T])), f64::NEG_INFINITY);
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(BehaviorHmm::new(None, [0.5, 0.6], DEFAULT_INIT_A, DEFAULT_INIT_A).is_err());
        assert!(BehaviorHmm::new(None, [0.5, 0.5], [[1.2, -0.2], [0.5, 0.5]], DEFAULT_INIT_A).is_err());
        assert!(GestureSequence::new(vec![]).is_err());
    }

    #[test]
    fn emission_from_counts() {
        let b = build_emission(&[[50, 0], [0, 50]]).unwrap();
        assert_eq!(b, [[51.0 / 52.0, 1.0 / 52.0], [1.0 / 52.0, 51.0 / 52.0]]);
        assert_eq!(build_emission(&[[90, 10], [20, 80]]).unwrap(), [[0.9, 0.1], [0.2, 0.8]]);
        assert_eq!(build_emission(&[[1, 1], [1, 1]]).unwrap(), [[0.5, 0.5], [0.5, 0.5]]);
        assert!(build_emission(&[[0, 0], [1, 1]]).is_err());
    }

    #[test]
    fn baum_welch_recovers_generator() {
        let b = [[0.95, 0.05], [0.08, 0.92]];
        let pi = [0.5, 0.5];
        let a_true = [[0.8, 0.2], [0.3, 0.7]];
        let gen = BehaviorHmm::new(None, pi, a_true, b).unwrap();
        let data: Vec<_> = (0..20).map(|s| sample_hmm(&gen, 500, 100 + s)).collect();
        let fit = baum_welch(&data, pi, b, [[0.5, 0.5], [0.5, 0.5]], &BaumWelchOptions::default()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((fit.a[i][j] - a_true[i][j]).abs() < 0.05, "{:?}", fit.a);
            }
        }
        assert!(fit.converged);
        for w in fit.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
    }

    #[test]
    fn fixed_point_is_stable() {
        let b = [[0.9, 0.1], [0.1, 0.9]];
        let data: Vec<_> = (0..5).map(|s| sample_hmm(&textbook(), 200, s)).collect();
        let first = baum_welch(&data, [0.5, 0.5], b, DEFAULT_INIT_A, &BaumWelchOptions::default()).unwrap();
        let again = baum_welch(&data, [0.5, 0.5], b, first.a, &BaumWelchOptions { max_iter: 1, tol: 1e-6 }).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((again.a[i][j] - first.a[i][j]).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn single_symbol_data_reaches_boundary() {
        let id = [[1.0, 0.0], [0.0, 1.0]];
        let data = vec![seq(&[T; 40])];
        let fit = baum_welch(&data, [0.5, 0.5], id, DEFAULT_INIT_A, &BaumWelchOptions::default()).unwrap();
        assert!(fit.a[0][0] > 0.999);
        assert!(!fit.impossible);
        let none = baum_welch(&data, [0.0, 1.0], id, DEFAULT_INIT_A, &BaumWelchOptions::default()).unwrap();
        assert!(none.impossible);
        assert_eq!(none.a, DEFAULT_INIT_A);
    }

    #[test]
    fn keyboard_only_training_sticks_to_typing() {
        let b = build_emission(&[[95, 5], [8, 92]]).unwrap();
        let kb: Vec<_> = (0..10).map(|_| seq(&[T; 50])).collect();
        let models = fit_behavior_models(&[(Behavior::Working, kb)], b, &BaumWelchOptions::default()).unwrap();
        assert!(models[0].a[0][0] > 0.9);
    }

    #[test]
    fn identical_training_identical_models() {
        let b = [[0.9, 0.1], [0.1, 0.9]];
        let data: Vec<_> = (0..5).map(|s| sample_hmm(&textbook(), 60, s)).collect();
        let models = fit_behavior_models(
            &[(Behavior::Surfing, data.clone()), (Behavior::Gaming, data)],
            b,
            &BaumWelchOptions::default(),
        )
        .unwrap();
        assert_eq!(models[0].a, models[1].a);
        assert_eq!(models[0].pi, models[1].pi);
    }

    #[test]
    fn degenerate_model_wins_its_own_sequence() {
        let id = [[1.0, 0.0], [0.0, 1.0]];
        let sure = BehaviorHmm::new(Some(Behavior::Working), [1.0, 0.0], id, id).unwrap();
        let other = BehaviorHmm::new(Some(Behavior::Surfing), [0.5, 0.5], DEFAULT_INIT_A, [[0.9, 0.1], [0.1, 0.9]]).unwrap();
        let s = sample_hmm(&sure, 30, 1);
        let d = classify_behavior(&[other.clone(), sure.clone()], &s, ClassifyMethod::Likelihood, 0).unwrap();
        assert_eq!(d.behavior, Some(Behavior::Working));
        assert!(!d.tie);
        let d = classify_behavior(&[other, sure], &seq(&[M, T]), ClassifyMethod::Likelihood, 0).unwrap();
        assert_eq!(d.behavior, Some(Behavior::Surfing));
    }

    #[test]
    fn ties_follow_fixed_order() {
        let m = |beh| BehaviorHmm::new(Some(beh), [0.5, 0.5], DEFAULT_INIT_A, DEFAULT_INIT_A).unwrap();
        let d = classify_behavior(&[m(Behavior::Gaming), m(Behavior::Working)], &seq(&[T, M]), ClassifyMethod::Likelihood, 0)
            .unwrap();
        assert_eq!(d.behavior, Some(Behavior::Working));
        assert!(d.tie);
    }

    #[test]
    fn unclassifiable_when_all_impossible() {
        let id = [[1.0, 0.0], [0.0, 1.0]];
        let m = |beh| BehaviorHmm::new(Some(beh), [1.0, 0.0], id, id).unwrap();
        let d = classify_behavior(&[m(Behavior::Gaming), m(Behavior::Working)], &seq(&[M]), ClassifyMethod::Likelihood, 0)
            .unwrap();
        assert_eq!(d.behavior, None);
    }

    #[test]
    fn identity_emission_reveals_hidden_chain() {
        let id = [[1.0, 0.0], [0.0, 1.0]];
        let s = sample_behavior_sequence(&BehaviorProfile::standard(Behavior::Gaming), id, 200, 3).unwrap();
        assert_eq!(Some(s.observations.clone()), s.hidden);
    }

    fn switch_rate(s: &GestureSequence) -> f64 {
        let h = s.hidden.as_ref().unwrap();
        h.windows(2).filter(|w| w[0] != w[1]).count() as f64 / (h.len() - 1) as f64
    }

    #[test]
    fn profiles_behave_as_constructed() {
        let id = [[1.0, 0.0], [0.0, 1.0]];
        let gaming = sample_behavior_sequence(&BehaviorProfile::standard(Behavior::Gaming), id, 10_000, 5).unwrap();
        let working_p = BehaviorProfile::standard(Behavior::Working);
        let working = sample_behavior_sequence(&working_p, id, 10_000, 6).unwrap();
        assert!(switch_rate(&gaming) > switch_rate(&working));
        let typing = working.hidden.as_ref().unwrap().iter().filter(|g| **g == T).count() as f64 / 10_000.0;
        // stationary share from the balance q / (p + q)
        let stationary = working_p.a_true[1][0] / (working_p.a_true[0][1] + working_p.a_true[1][0]);
        assert!((stationary - 0.65).abs() < 1e-12);
        assert!((typing - stationary).abs() < 0.05);
        assert!(sample_behavior_sequence(&working_p, id, 0, 1).is_err());
    }

    #[test]
    fn profile_run_lengths() {
        let s = BehaviorProfile::standard(Behavior::Surfing);
        // runs of 3 typing and 9 mouse gestures
        assert!((s.a_true[0][1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.a_true[1][0] - 1.0 / 9.0).abs() < 1e-15);
        assert!((s.stationary_typing() - 0.25).abs() < 1e-12);
        let g = BehaviorProfile::standard(Behavior::Gaming);
        assert_eq!(g.a_true, [[0.5, 0.5], [0.5, 0.5]]);
    }

    #[test]
    fn distance_method_prefers_generator() {
        let b = [[0.95, 0.05], [0.05, 0.95]];
        let models: Vec<_> = Behavior::ALL
            .iter()
            .map(|beh| {
                let p = BehaviorProfile::standard(*beh);
                BehaviorHmm::new(Some(*beh), p.pi_true, p.a_true, b).unwrap()
            })
            .collect();
        let s = sample_behavior_sequence(&BehaviorProfile::standard(Behavior::Gaming), b, 400, 11).unwrap();
        let d = classify_behavior(&models, &s, ClassifyMethod::ModelDistance, 1).unwrap();
        assert_eq!(d.behavior, Some(Behavior::Gaming));
        let d2 = classify_behavior(&models, &s, ClassifyMethod::ModelDistance, 1).unwrap();
        assert_eq!(d, d2);
    }

    fn arb_row() -> impl Strategy<Value = [f64; 2]> {
        (0.0f64..=1.0).prop_map(|p| [p, 1.0 - p])
    }

    fn arb_hmm() -> impl Strategy<Value = BehaviorHmm> {
        (arb_row(), arb_row(), arb_row(), arb_row(), arb_row())
            .prop_map(|(pi, a0, a1, b0, b1)| BehaviorHmm { behavior: None, pi, a: [a0, a1], b: [b0, b1] })
    }

    proptest! {
        #[test]
        fn forward_matches_enumeration(hmm in arb_hmm(), obs in prop::collection::vec(0usize..2, 1..=8)) {
            let s = GestureSequence::new(obs.iter().map(|o| GestureKind::ALL[*o]).collect()).unwrap();
            let ll = forward_log_likelihood(&hmm, &s);
            let p = brute_force(&hmm, &obs);
            let raw = unscaled_forward(&hmm, &obs);
            if p == 0.0 {
                prop_assert_eq!(ll, f64::NEG_INFINITY);
            } else {
                prop_assert!((ll.exp() - p).abs() <= 1e-10 * p);
                prop_assert!((raw - p).abs() <= 1e-10 * p);
                prop_assert!(ll <= 1e-15);
            }
        }

        #[test]
        fn baum_welch_keeps_rows_stochastic(seed in 0u64..500, p in 0.05f64..0.95, q in 0.05f64..0.95) {
            let gen = BehaviorHmm { behavior: None, pi: [0.5, 0.5], a: [[1.0 - p, p], [q, 1.0 - q]], b: [[0.9, 0.1], [0.15, 0.85]] };
            let data: Vec<_> = (0..3).map(|k| sample_hmm(&gen, 40, seed * 3 + k)).collect();
            let fit = baum_welch(&data, gen.pi, gen.b, DEFAULT_INIT_A, &BaumWelchOptions { max_iter: 30, tol: 0.0 }).unwrap();
            for row in &fit.a {
                prop_assert!((row[0] + row[1] - 1.0).abs() <= 1e-12);
            }
            for w in fit.log_likelihoods.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9);
            }
        }

        #[test]
        fn duplicate_models_do_not_change_winner(seed in 0u64..200) {
            let b = [[0.92, 0.08], [0.1, 0.9]];
            let models: Vec<_> = Behavior::ALL.iter().map(|beh| {
                let p = BehaviorProfile::standard(*beh);
                BehaviorHmm::new(Some(*beh), p.pi_true, p.a_true, b).unwrap()
            }).collect();
            let s = sample_hmm(&models[(seed % 3) as usize], 50, seed);
            let base = classify_behavior(&models, &s, ClassifyMethod::Likelihood, 0).unwrap();
            let mut doubled = models.clone();
            doubled.push(models[(seed % 3) as usize].clone());
            let dup = classify_behavior(&doubled, &s, ClassifyMethod::Likelihood, 0).unwrap();
            prop_assert_eq!(base.behavior, dup.behavior);
        }
    }
}

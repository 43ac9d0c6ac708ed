//! Bradley-Terry fitting by minorization-maximization.
//!
//! With strengths `p_i = exp(s_i)`, wins `w_i` and pair totals `n_ij`, each
//! iteration sets `p_i <- w_i / sum_j n_ij / (p_i + p_j)` for all systems at
//! once, which never decreases the log-likelihood. Scores are then shifted to
//! sum to zero.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub winner: String,
    pub loser: String,
    pub count: u64,
}

impl PreferenceRecord {
    pub fn new(winner: impl Into<String>, loser: impl Into<String>, count: u64) -> Self {
        Self { winner: winner.into(), loser: loser.into(), count }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BtOptions {
    /// Pseudo-wins added to every ordered pair of systems.
    pub epsilon: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for BtOptions {
    fn default() -> Self {
        Self { epsilon: 0.5, tol: 1e-10, max_iters: 100_000 }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BtError {
    #[error("need at least two systems, got {0}")]
    TooFewSystems(usize),
    #[error("system `{0}` is recorded as beating itself")]
    SelfPreference(String),
    #[error("preference {winner} > {loser} has count 0")]
    ZeroCount { winner: String, loser: String },
    #[error("epsilon must be finite and non-negative, got {0}")]
    InvalidEpsilon(f64),
    #[error("comparison graph is not strongly connected; `{0}` cannot be placed against the rest (use epsilon > 0)")]
    Disconnected(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BtFit {
    /// Log-strengths, summing to zero.
    pub scores: BTreeMap<String, f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Log-likelihood before the first update and after each one.
    pub log_likelihood: Vec<f64>,
}

/// `exp(s_i) / (exp(s_i) + exp(s_j))`.
pub fn bt_prob(s_i: f64, s_j: f64) -> f64 {
    1.0 / (1.0 + (s_j - s_i).exp())
}

/// `ln bt_prob(s_i, s_j)` without overflow.
fn ln_bt_prob(s_i: f64, s_j: f64) -> f64 {
    -softplus(s_j - s_i)
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

struct Counts {
    systems: Vec<String>,
    /// `wins[i][j]`: times i beat j, pseudo-counts included.
    wins: Vec<Vec<f64>>,
}

fn build_counts(prefs: &[PreferenceRecord], epsilon: f64) -> Result<Counts, BtError> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(BtError::InvalidEpsilon(epsilon));
    }
    let mut names = BTreeSet::new();
    for p in prefs {
        if p.winner == p.loser {
            return Err(BtError::SelfPreference(p.winner.clone()));
        }
        if p.count == 0 {
            return Err(BtError::ZeroCount { winner: p.winner.clone(), loser: p.loser.clone() });
        }
        names.insert(p.winner.clone());
        names.insert(p.loser.clone());
    }
    let systems: Vec<String> = names.into_iter().collect();
    let n = systems.len();
    if n < 2 {
        return Err(BtError::TooFewSystems(n));
    }
    let index: BTreeMap<&str, usize> = systems.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut wins = vec![vec![0.0; n]; n];
    for (i, row) in wins.iter_mut().enumerate() {
        for (j, w) in row.iter_mut().enumerate() {
            if i != j {
                *w = epsilon;
            }
        }
    }
    for p in prefs {
        wins[index[p.winner.as_str()]][index[p.loser.as_str()]] += p.count as f64;
    }
    Ok(Counts { systems, wins })
}

/// Index of a system that cannot reach every other system along "beat"
/// edges, if any.
fn unreachable_system(wins: &[Vec<f64>]) -> Option<usize> {
    let n = wins.len();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let w = if forward { wins[i][j] } else { wins[j][i] };
                if w > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen
    };
    let fwd = reach(true);
    let bwd = reach(false);
    (0..n).find(|&i| !fwd[i] || !bwd[i])
}

fn log_likelihood(wins: &[Vec<f64>], s: &[f64]) -> f64 {
    let mut ll = 0.0;
    for (i, row) in wins.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            if w > 0.0 {
                ll += w * ln_bt_prob(s[i], s[j]);
            }
        }
    }
    ll
}

/// Log-likelihood of `scores` under `prefs` plus `epsilon` pseudo-counts.
pub fn bt_log_likelihood(
    prefs: &[PreferenceRecord],
    epsilon: f64,
    scores: &BTreeMap<String, f64>,
) -> Result<f64, BtError> {
    let counts = build_counts(prefs, epsilon)?;
    let s: Vec<f64> = counts.systems.iter().map(|k| scores.get(k).copied().unwrap_or(0.0)).collect();
    Ok(log_likelihood(&counts.wins, &s))
}

fn center(s: &mut [f64]) {
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    for v in s.iter_mut() {
        *v -= mean;
    }
}

pub fn bt_fit(prefs: &[PreferenceRecord], options: &BtOptions) -> Result<BtFit, BtError> {
    let Counts { systems, wins } = build_counts(prefs, options.epsilon)?;
    if let Some(i) = unreachable_system(&wins) {
        return Err(BtError::Disconnected(systems[i].clone()));
    }
    let n = systems.len();
    let total_wins: Vec<f64> = wins.iter().map(|row| row.iter().sum()).collect();
    let mut s = vec![0.0; n];
    let mut trace = vec![log_likelihood(&wins, &s)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iters {
        iterations += 1;
        let mut next = vec![0.0; n];
        for i in 0..n {
            // The MM update divided through by p_i, so it stays finite in log space.
            let mut denom = 0.0;
            for j in 0..n {
                if i != j {
                    let n_ij = wins[i][j] + wins[j][i];
                    denom += n_ij * bt_prob(s[i], s[j]);
                }
            }
            next[i] = s[i] + total_wins[i].ln() - denom.ln();
        }
        center(&mut next);
        let delta = s.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        s = next;
        trace.push(log_likelihood(&wins, &s));
        if delta < options.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("Bradley-Terry fit stopped after {iterations} iterations without converging");
    }
    Ok(BtFit {
        scores: systems.into_iter().zip(s).collect(),
        converged,
        iterations,
        log_likelihood: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prob_examples() {
        assert_eq!(bt_prob(0.3, 0.3), 0.5);
        assert!((bt_prob(3f64.ln(), 0.0) - 0.75).abs() < 1e-12);
        assert!((bt_prob(1.7, -0.4) + bt_prob(-0.4, 1.7) - 1.0).abs() < 1e-12);
        assert_eq!(bt_prob(1000.0, -1000.0), 1.0);
        assert_eq!(bt_prob(-1000.0, 1000.0), 0.0);
        assert!(ln_bt_prob(-1000.0, 1000.0).is_finite());
    }

    #[test]
    fn two_player_closed_form() {
        let prefs = vec![PreferenceRecord::new("A", "B", 3), PreferenceRecord::new("B", "A", 1)];
        let fit = bt_fit(&prefs, &BtOptions { epsilon: 0.0, ..Default::default() }).unwrap();
        assert!(fit.converged);
        let d = fit.scores["A"] - fit.scores["B"];
        assert!((d - 3f64.ln()).abs() < 1e-9);
        assert!((bt_prob(fit.scores["A"], fit.scores["B"]) - 0.75).abs() < 1e-9);
        assert!((fit.scores["A"] + fit.scores["B"]).abs() < 1e-12);
    }

    #[test]
    fn symmetric_record() {
        let prefs = vec![PreferenceRecord::new("A", "B", 1), PreferenceRecord::new("B", "A", 1)];
        let fit = bt_fit(&prefs, &BtOptions { epsilon: 0.0, ..Default::default() }).unwrap();
        assert!(fit.scores["A"].abs() < 1e-12 && fit.scores["B"].abs() < 1e-12);
    }

    #[test]
    fn disconnected_without_smoothing() {
        let prefs = vec![PreferenceRecord::new("A", "B", 2)];
        let err = bt_fit(&prefs, &BtOptions { epsilon: 0.0, ..Default::default() }).unwrap_err();
        assert_eq!(err, BtError::Disconnected("B".into()));
        let fit = bt_fit(&prefs, &BtOptions::default()).unwrap();
        // 2.5 vs 0.5 wins.
        assert!((fit.scores["A"] - fit.scores["B"] - 5f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn invalid_inputs() {
        let opts = BtOptions::default();
        assert_eq!(bt_fit(&[], &opts).unwrap_err(), BtError::TooFewSystems(0));
        assert!(matches!(bt_fit(&[PreferenceRecord::new("A", "A", 1)], &opts), Err(BtError::SelfPreference(_))));
        assert!(matches!(bt_fit(&[PreferenceRecord::new("A", "B", 0)], &opts), Err(BtError::ZeroCount { .. })));
        let neg = BtOptions { epsilon: -1.0, ..Default::default() };
        assert!(matches!(bt_fit(&[PreferenceRecord::new("A", "B", 1)], &neg), Err(BtError::InvalidEpsilon(_))));
    }

    #[test]
    fn iteration_cap_is_flagged() {
        let prefs = vec![
            PreferenceRecord::new("A", "B", 9),
            PreferenceRecord::new("B", "C", 9),
            PreferenceRecord::new("C", "A", 1),
        ];
        let fit = bt_fit(&prefs, &BtOptions { epsilon: 0.0, tol: 1e-15, max_iters: 2 }).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 2);
        assert_eq!(fit.log_likelihood.len(), 3);
    }
}

//! Random-answer calibration for the alignment measures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{majority_match, wasserstein_1d, AnswerDistribution};
use crate::matrix::SurveyQuestion;
use crate::{Error, Result};

/// Mean ± sample standard deviation of both measures across trials of
/// uniform-random answering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    /// Normalized Wasserstein distance, averaged over questions per trial.
    pub wasserstein_mean: f64,
    pub wasserstein_std: f64,
    pub majority_mean: f64,
    pub majority_std: f64,
    pub trials: usize,
}

/// Uniform draw from the probability simplex (normalized unit exponentials).
fn uniform_simplex(k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// How well a random answerer aligns with the given group's human
/// distributions. Per trial, one uniform simplex sample per question is
/// scored with both measures (Wasserstein after the usual refusal drop,
/// majority over the full list) and averaged over questions; the summary is
/// the mean ± std over trials.
pub fn random_baseline(
    questions: &[SurveyQuestion],
    group_id: &str,
    trials: usize,
    seed: u64,
) -> Result<BaselineSummary> {
    if trials < 2 {
        return Err(Error::Degenerate(format!(
            "random baseline needs at least 2 trials, got {trials}"
        )));
    }
    if questions.is_empty() {
        return Err(Error::Degenerate(
            "random baseline needs at least one question".to_string(),
        ));
    }
    let mut human = Vec::with_capacity(questions.len());
    for question in questions {
        question.validate()?;
        let dist = question.human_distributions.get(group_id).ok_or_else(|| {
            Error::Degenerate(format!(
                "question '{}' has no human distribution for group '{group_id}'",
                question.id
            ))
        })?;
        human.push(AnswerDistribution {
            question_id: question.id.clone(),
            options: question.options.clone(),
            probs: dist.clone(),
            absent_options: 0,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w1_trials = Vec::with_capacity(trials);
    let mut majority_trials = Vec::with_capacity(trials);
    for _ in 0..trials {
        let mut w1_sum = 0.0;
        let mut majority_sum = 0.0;
        for reference in &human {
            let random = AnswerDistribution {
                question_id: reference.question_id.clone(),
                options: reference.options.clone(),
                probs: uniform_simplex(reference.options.len(), &mut rng),
                absent_options: 0,
            };
            w1_sum += wasserstein_1d(&random, reference)?.normalized;
            majority_sum += if majority_match(&random, reference).matched {
                1.0
            } else {
                0.0
            };
        }
        w1_trials.push(w1_sum / human.len() as f64);
        majority_trials.push(majority_sum / human.len() as f64);
    }
    let (wasserstein_mean, wasserstein_std) = mean_and_std(&w1_trials);
    let (majority_mean, majority_std) = mean_and_std(&majority_trials);
    Ok(BaselineSummary {
        wasserstein_mean,
        wasserstein_std,
        majority_mean,
        majority_std,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn question(id: &str, human: Vec<f64>) -> SurveyQuestion {
        let options = (0..human.len()).map(|i| format!("O{i}")).collect();
        SurveyQuestion {
            id: id.to_string(),
            text: format!("{id} text"),
            options,
            human_distributions: BTreeMap::from([("white-male".to_string(), human)]),
        }
    }

    /// Independent Monte-Carlo oracle for E[W1(random, human)] with k = 2:
    /// the random mass on option 0 is Uniform(0, 1) in distribution, so the
    /// normalized distance is |U − h0| with analytic mean
    /// ∫|u − h0| du = h0² − h0 + 1/2.
    #[test]
    fn two_option_baseline_matches_the_analytic_oracle() {
        let cases = [(0.5, 0.25), (1.0, 0.5)];
        for (h0, analytic) in cases {
            let q = vec![question("Q1", vec![h0, 1.0 - h0])];
            let summary = random_baseline(&q, "white-male", 4000, 7).unwrap();
            // Trials are single draws here, so the standard error of the
            // mean is std / sqrt(trials).
            let stderr = summary.wasserstein_std / (summary.trials as f64).sqrt();
            assert!(
                (summary.wasserstein_mean - analytic).abs() < 4.0 * stderr.max(1e-4),
                "h0 = {h0}: mean {} vs analytic {analytic} (stderr {stderr})",
                summary.wasserstein_mean
            );
        }
    }

    /// Cross-check against a test-local simulation written independently of
    /// the implementation (its own RNG, its own W1 arithmetic).
    #[test]
    fn k3_baseline_matches_a_brute_force_simulation() {
        use rand::rngs::StdRng;
        let human = [0.2, 0.5, 0.3];

        let mut rng = StdRng::seed_from_u64(1234);
        let mut total = 0.0;
        let n = 60_000;
        for _ in 0..n {
            let e: Vec<f64> = (0..3).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let s: f64 = e.iter().sum();
            let p: Vec<f64> = e.iter().map(|v| v / s).collect();
            // W1 over CDFs, normalized by k − 1 = 2.
            let d = ((p[0] - human[0]).abs() + ((p[0] + p[1]) - (human[0] + human[1])).abs()) / 2.0;
            total += d;
        }
        let oracle = total / n as f64;

        let q = vec![question("Q1", human.to_vec())];
        let summary = random_baseline(&q, "white-male", 4000, 99).unwrap();
        let stderr = summary.wasserstein_std / (summary.trials as f64).sqrt();
        assert!(
            (summary.wasserstein_mean - oracle).abs() < 4.0 * stderr.max(1e-3),
            "mean {} vs oracle {oracle}",
            summary.wasserstein_mean
        );
    }

    #[test]
    fn majority_baseline_on_a_peaked_two_option_question_is_about_half() {
        // Human mass peaks at option 1; a random draw matches when its own
        // argmax lands there, which happens with probability 1/2.
        let q = vec![question("Q1", vec![0.2, 0.8])];
        let summary = random_baseline(&q, "white-male", 4000, 21).unwrap();
        assert!(
            (summary.majority_mean - 0.5).abs() < 0.05,
            "majority mean {}",
            summary.majority_mean
        );
    }

    #[test]
    fn deterministic_for_a_fixed_seed() {
        let q = vec![question("Q1", vec![0.6, 0.4]), question("Q2", vec![0.1, 0.9])];
        let a = random_baseline(&q, "white-male", 50, 3).unwrap();
        let b = random_baseline(&q, "white-male", 50, 3).unwrap();
        assert_eq!(a, b);
        let c = random_baseline(&q, "white-male", 50, 4).unwrap();
        assert_ne!(a.wasserstein_mean, c.wasserstein_mean);
    }

    #[test]
    fn preconditions_are_enforced() {
        let q = vec![question("Q1", vec![0.5, 0.5])];
        assert!(random_baseline(&q, "white-male", 1, 0).is_err());
        assert!(random_baseline(&[], "white-male", 10, 0).is_err());
        let err = random_baseline(&q, "black-female", 10, 0).unwrap_err().to_string();
        assert!(err.contains("black-female"), "unexpected: {err}");
    }
}

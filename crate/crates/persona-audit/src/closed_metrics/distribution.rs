//! Log-probabilities → answer distributions.

use super::AnswerDistribution;
use crate::gateway::OptionLogprobs;
use crate::{Error, Result};

/// Softmax over the option log-probabilities. The scores are already
/// temperature-scaled at collection time, so no further scaling happens
/// here. Unscored options receive probability 0 and are counted in
/// [`AnswerDistribution::absent_options`].
pub fn to_distribution(logprobs: &OptionLogprobs) -> Result<AnswerDistribution> {
    logprobs.validate()?;
    let absent = logprobs.logprobs.iter().filter(|lp| lp.is_none()).count();
    if absent == logprobs.options.len() {
        return Err(Error::Degenerate(format!(
            "question '{}': no option could be scored; distribution unusable",
            logprobs.question_id
        )));
    }
    let max = logprobs
        .logprobs
        .iter()
        .flatten()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let unnormalized: Vec<f64> = logprobs
        .logprobs
        .iter()
        .map(|lp| lp.map(|v| (v - max).exp()).unwrap_or(0.0))
        .collect();
    let sum: f64 = unnormalized.iter().sum();
    let dist = AnswerDistribution {
        question_id: logprobs.question_id.clone(),
        options: logprobs.options.clone(),
        probs: unnormalized.into_iter().map(|v| v / sum).collect(),
        absent_options: absent,
    };
    dist.validate()?;
    Ok(dist)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logprobs(values: Vec<Option<f64>>) -> OptionLogprobs {
        OptionLogprobs {
            question_id: "Q1".to_string(),
            options: (0..values.len()).map(|i| format!("O{i}")).collect(),
            logprobs: values,
            temperature: 1.0,
            first_token_match: false,
        }
    }

    #[test]
    fn equal_logprobs_are_uniform() {
        let d = to_distribution(&logprobs(vec![Some(-2.0); 4])).unwrap();
        for p in &d.probs {
            assert!((p - 0.25).abs() < 1e-12);
        }
        assert_eq!(d.absent_options, 0);
    }

    #[test]
    fn hand_computed_softmax() {
        // exp(0) = 1 and exp(-ln 3) = 1/3, so the split is 3/4 vs 1/4.
        let d = to_distribution(&logprobs(vec![Some(0.0), Some(-(3f64.ln()))])).unwrap();
        assert!((d.probs[0] - 0.75).abs() < 1e-12);
        assert!((d.probs[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn shift_invariance() {
        let a = to_distribution(&logprobs(vec![Some(-1.0), Some(-2.5), Some(-0.25)])).unwrap();
        let b = to_distribution(&logprobs(vec![
            Some(-1.0 + 123.0),
            Some(-2.5 + 123.0),
            Some(-0.25 + 123.0),
        ]))
        .unwrap();
        for (pa, pb) in a.probs.iter().zip(&b.probs) {
            assert!((pa - pb).abs() < 1e-12);
        }
    }

    #[test]
    fn absent_options_get_zero_and_a_flag() {
        let d = to_distribution(&logprobs(vec![Some(0.0), None, Some(0.0)])).unwrap();
        assert_eq!(d.probs[1], 0.0);
        assert!((d.probs[0] - 0.5).abs() < 1e-12);
        assert_eq!(d.absent_options, 1);
    }

    #[test]
    fn all_absent_is_an_error() {
        let err = to_distribution(&logprobs(vec![None, None])).unwrap_err().to_string();
        assert!(err.contains("no option could be scored"), "unexpected: {err}");
    }

    #[test]
    fn extreme_scores_stay_finite_and_dominant() {
        let d = to_distribution(&logprobs(vec![Some(0.0), Some(-800.0), Some(-900.0)])).unwrap();
        assert!(d.probs[0] > 0.999);
        assert!(d.validate().is_ok());
    }
}

//! Distribution-level alignment measures.

use serde::{Deserialize, Serialize};

use super::AnswerDistribution;
use crate::{Error, Result};

/// 1-D Wasserstein distance on the ordinal answer scale, in both raw index
/// units and normalized by the maximum possible transport (k−1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wasserstein {
    pub raw: f64,
    pub normalized: f64,
}

/// Outcome of a modal-answer comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorityMatch {
    pub matched: bool,
    /// True when either side had an argmax tie (broken toward the lowest
    /// index on both sides).
    pub tied: bool,
}

fn is_refused(option: &str) -> bool {
    option.trim().eq_ignore_ascii_case("refused")
}

/// `W1(p, q) = Σᵢ |CDF_p(i) − CDF_q(i)|` over the ordinal options.
///
/// "Refused" has no position on the ordinal scale, so it is dropped and both
/// distributions are renormalized first. Errors when the option lists differ
/// or fewer than two ordinal options remain.
pub fn wasserstein_1d(p: &AnswerDistribution, q: &AnswerDistribution) -> Result<Wasserstein> {
    if p.options != q.options {
        return Err(Error::Validation(format!(
            "option lists differ between '{}' and '{}'; distributions are not comparable",
            p.question_id, q.question_id
        )));
    }
    let keep: Vec<usize> = (0..p.options.len())
        .filter(|&i| !is_refused(&p.options[i]))
        .collect();
    if keep.len() < 2 {
        return Err(Error::Degenerate(format!(
            "question '{}': {} ordinal option(s) left after dropping refusals; need 2",
            p.question_id,
            keep.len()
        )));
    }
    let renormalize = |d: &AnswerDistribution| -> Result<Vec<f64>> {
        let sum: f64 = keep.iter().map(|&i| d.probs[i]).sum();
        if sum <= 0.0 {
            return Err(Error::Degenerate(format!(
                "question '{}': all probability mass on refusals",
                d.question_id
            )));
        }
        Ok(keep.iter().map(|&i| d.probs[i] / sum).collect())
    };
    let pv = renormalize(p)?;
    let qv = renormalize(q)?;
    let mut raw = 0.0;
    let (mut cp, mut cq) = (0.0, 0.0);
    for (a, b) in pv.iter().zip(&qv) {
        cp += a;
        cq += b;
        raw += (cp - cq).abs();
    }
    Ok(Wasserstein {
        raw,
        normalized: raw / (keep.len() - 1) as f64,
    })
}

fn argmax(probs: &[f64]) -> (usize, bool) {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate().skip(1) {
        if *p > probs[best] {
            best = i;
        }
    }
    let tied = probs
        .iter()
        .enumerate()
        .any(|(i, p)| i != best && *p == probs[best]);
    (best, tied)
}

/// Whether the modal answers agree. Computed over the full option list
/// (including "Refused"); argmax ties go to the lowest index and are
/// flagged. The option lists must already be identical.
pub fn majority_match(p: &AnswerDistribution, q: &AnswerDistribution) -> MajorityMatch {
    assert_eq!(
        p.options, q.options,
        "majority_match called on different option lists"
    );
    let (ip, tie_p) = argmax(&p.probs);
    let (iq, tie_q) = argmax(&q.probs);
    MajorityMatch {
        matched: ip == iq,
        tied: tie_p || tie_q,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dist(probs: Vec<f64>) -> AnswerDistribution {
        let options = (0..probs.len()).map(|i| format!("O{i}")).collect();
        AnswerDistribution::new("Q1", options, probs).unwrap()
    }

    fn dist_with_refused(probs: Vec<f64>) -> AnswerDistribution {
        let mut options: Vec<String> = (0..probs.len() - 1).map(|i| format!("O{i}")).collect();
        options.push("Refused".to_string());
        AnswerDistribution::new("Q1", options, probs).unwrap()
    }

    #[test]
    fn identical_distributions_have_zero_distance() {
        let p = dist(vec![0.2, 0.3, 0.5]);
        let w = wasserstein_1d(&p, &p).unwrap();
        assert_eq!(w.raw, 0.0);
        assert_eq!(w.normalized, 0.0);
    }

    #[test]
    fn opposite_point_masses_transport_the_full_scale() {
        let p = dist(vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        let q = dist(vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        let w = wasserstein_1d(&p, &q).unwrap();
        assert!((w.raw - 4.0).abs() < 1e-12);
        assert!((w.normalized - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_cdf_sum() {
        let p = dist(vec![0.5, 0.5, 0.0]);
        let q = dist(vec![0.0, 0.5, 0.5]);
        // CDFs: (0.5, 1.0, 1.0) vs (0.0, 0.5, 1.0) → 0.5 + 0.5 + 0.
        let w = wasserstein_1d(&p, &q).unwrap();
        assert!((w.raw - 1.0).abs() < 1e-12);
        assert!((w.normalized - 0.5).abs() < 1e-12);
    }

    #[test]
    fn refused_mass_is_dropped_and_renormalized() {
        // Once "Refused" is gone both sides renormalize to (0.5, 0.5) and
        // (0.25, 0.75) over two ordinal options.
        let p = dist_with_refused(vec![0.3, 0.3, 0.4]);
        let q = dist_with_refused(vec![0.2, 0.6, 0.2]);
        let w = wasserstein_1d(&p, &q).unwrap();
        assert!((w.raw - 0.25).abs() < 1e-12);
        assert!((w.normalized - 0.25).abs() < 1e-12);
    }

    #[test]
    fn too_few_ordinal_options_is_an_error() {
        let p = dist_with_refused(vec![0.5, 0.5]);
        let q = dist_with_refused(vec![0.9, 0.1]);
        assert!(wasserstein_1d(&p, &q).is_err());
    }

    #[test]
    fn all_mass_on_refused_is_an_error() {
        let p = dist_with_refused(vec![0.0, 0.0, 1.0]);
        let q = dist_with_refused(vec![0.4, 0.4, 0.2]);
        let err = wasserstein_1d(&p, &q).unwrap_err().to_string();
        assert!(err.contains("refusals"), "unexpected: {err}");
    }

    #[test]
    fn mismatched_option_lists_are_rejected() {
        let p = dist(vec![0.5, 0.5]);
        let q = AnswerDistribution::new("Q2", vec!["A".into(), "B".into()], vec![0.5, 0.5]).unwrap();
        assert!(wasserstein_1d(&p, &q).is_err());
    }

    #[test]
    fn metric_properties_hold_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        for _ in 0..200 {
            let k = rng.gen_range(2..7);
            let draw = |rng: &mut ChaCha8Rng| {
                let raw: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
                let sum: f64 = raw.iter().sum();
                dist(raw.into_iter().map(|v| v / sum).collect())
            };
            let (p, q, r) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let pq = wasserstein_1d(&p, &q).unwrap().raw;
            let qp = wasserstein_1d(&q, &p).unwrap().raw;
            let pr = wasserstein_1d(&p, &r).unwrap().raw;
            let qr = wasserstein_1d(&q, &r).unwrap().raw;
            assert!(pq >= 0.0);
            assert!((pq - qp).abs() < 1e-12, "symmetry");
            assert!(pr <= pq + qr + 1e-12, "triangle inequality");
            assert_eq!(wasserstein_1d(&p, &p).unwrap().raw, 0.0);
        }
    }

    #[test]
    fn majority_match_agrees_and_disagrees() {
        let p = dist(vec![0.1, 0.7, 0.2]);
        assert_eq!(
            majority_match(&p, &p),
            MajorityMatch { matched: true, tied: false }
        );
        let q = dist(vec![0.6, 0.2, 0.2]);
        assert!(!majority_match(&p, &q).matched);
    }

    #[test]
    fn uniform_tie_breaks_to_the_lowest_index_with_a_flag() {
        let p = dist(vec![0.25, 0.25, 0.25, 0.25]);
        let q = dist(vec![0.97, 0.01, 0.01, 0.01]);
        let m = majority_match(&p, &q);
        assert!(m.matched);
        assert!(m.tied);
    }

    #[test]
    fn majority_match_is_argmax_invariant() {
        // Squaring probabilities (then renormalizing) is strictly monotone,
        // so the verdict cannot change.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let draw = |rng: &mut ChaCha8Rng| {
                let raw: Vec<f64> = (0..4).map(|_| rng.gen_range(0.01..1.0)).collect();
                let sum: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / sum).collect::<Vec<f64>>()
            };
            let pv = draw(&mut rng);
            let qv = draw(&mut rng);
            let squared = |v: &[f64]| {
                let sq: Vec<f64> = v.iter().map(|x| x * x).collect();
                let sum: f64 = sq.iter().sum();
                dist(sq.into_iter().map(|x| x / sum).collect())
            };
            let before = majority_match(&dist(pv.clone()), &dist(qv.clone()));
            let after = majority_match(&squared(&pv), &squared(&qv));
            assert_eq!(before.matched, after.matched);
        }
    }
}

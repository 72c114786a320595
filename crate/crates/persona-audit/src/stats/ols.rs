//! Ordinary least squares with classical standard errors.
//!
//! The disparity regressions are small (tens of rows, ~13 columns), so a
//! single dense QR factorization is plenty. Coefficient p values use the
//! two-sided Student-t distribution on the residual degrees of freedom.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

use super::design::DesignMatrix;

/// Relative tolerance on the QR diagonal below which a column is treated as
/// linearly dependent on the ones before it.
const RANK_TOL: f64 = 1e-10;

/// One fitted coefficient with its inference columns.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Coefficient {
    pub column: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
}

/// A fitted model: per-coefficient inference plus fit summaries.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RegressionResult {
    pub coefficients: Vec<Coefficient>,
    /// Residual degrees of freedom, `n - k`.
    pub df: usize,
    pub r_squared: f64,
    /// Residual standard deviation `sqrt(SSR / df)`.
    pub residual_std: f64,
}

/// Significance stars for a p value: `***` below 0.001, `**` below 0.01,
/// `*` below 0.05, empty otherwise.
pub fn stars(p_value: f64) -> &'static str {
    if p_value < 0.001 {
        "***"
    } else if p_value < 0.01 {
        "**"
    } else if p_value < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Fit `response ~ columns` by least squares.
///
/// Uses a QR factorization of the design matrix rather than forming the
/// normal equations, so moderately correlated indicator columns do not lose
/// precision. Exactly collinear columns are reported as
/// [`Error::Collinear`] with the offending column names.
pub fn ols_fit(design: &DesignMatrix) -> Result<RegressionResult> {
    design.validate()?;
    let n = design.rows.len();
    let k = design.column_labels.len();
    if n <= k {
        return Err(Error::Degenerate(format!(
            "need more observations than columns to fit: n={n}, k={k}"
        )));
    }
    let x = DMatrix::from_row_iterator(n, k, design.rows.iter().flatten().copied());
    let y = DVector::from_column_slice(&design.response);

    let qr = x.clone().qr();
    let r = qr.r();
    let q = qr.q();

    let diag_max = (0..k).map(|i| r[(i, i)].abs()).fold(0.0_f64, f64::max);
    let dependent: Vec<String> = (0..k)
        .filter(|&i| r[(i, i)].abs() <= RANK_TOL * diag_max.max(1.0))
        .map(|i| design.column_labels[i].clone())
        .collect();
    if !dependent.is_empty() {
        return Err(Error::Collinear(dependent));
    }

    // β from R β = Qᵀ y by back substitution.
    let qty = q.transpose() * &y;
    let mut beta = vec![0.0_f64; k];
    for i in (0..k).rev() {
        let mut acc = qty[i];
        for j in (i + 1)..k {
            acc -= r[(i, j)] * beta[j];
        }
        beta[i] = acc / r[(i, i)];
    }

    let fitted = &x * DVector::from_column_slice(&beta);
    let residuals = &y - fitted;
    let ssr: f64 = residuals.iter().map(|e| e * e).sum();
    let df = n - k;
    let sigma2 = ssr / df as f64;

    // (XᵀX)⁻¹ = R⁻¹ R⁻ᵀ; its diagonal is the squared row norms of R⁻¹,
    // obtained by back-solving R M = I column by column.
    let mut r_inv = DMatrix::zeros(k, k);
    for col in 0..k {
        for i in (0..k).rev() {
            let mut acc = if i == col { 1.0 } else { 0.0 };
            for j in (i + 1)..k {
                acc -= r[(i, j)] * r_inv[(j, col)];
            }
            r_inv[(i, col)] = acc / r[(i, i)];
        }
    }

    let mean_y = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let r_squared = if sst > 0.0 {
        1.0 - ssr / sst
    } else if ssr.abs() < 1e-12 {
        1.0
    } else {
        0.0
    };

    let t_dist = StudentsT::new(0.0, 1.0, df as f64)
        .map_err(|e| Error::Degenerate(format!("t distribution with df={df}: {e}")))?;
    let coefficients = (0..k)
        .map(|j| {
            let row_norm2: f64 = (0..k).map(|l| r_inv[(j, l)].powi(2)).sum();
            let std_error = (sigma2 * row_norm2).sqrt();
            let (t_value, p_value) = if std_error > 0.0 {
                let t = beta[j] / std_error;
                (t, 2.0 * (1.0 - t_dist.cdf(t.abs())))
            } else if beta[j] == 0.0 {
                (0.0, 1.0)
            } else {
                // Exact fit: the coefficient is infinitely many SEs from 0.
                (beta[j].signum() * f64::INFINITY, 0.0)
            };
            Coefficient {
                column: design.column_labels[j].clone(),
                estimate: beta[j],
                std_error,
                t_value,
                p_value,
            }
        })
        .collect();

    Ok(RegressionResult {
        coefficients,
        df,
        r_squared,
        residual_std: sigma2.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::super::design::DesignMatrix;
    use super::*;

    fn design(rows: Vec<Vec<f64>>, response: Vec<f64>, labels: &[&str]) -> DesignMatrix {
        DesignMatrix {
            row_labels: (0..rows.len()).map(|i| format!("r{i}")).collect(),
            column_labels: labels.iter().map(|s| s.to_string()).collect(),
            rows,
            response,
        }
    }

    // ------------------------------------------------------------------
    // Reference implementation used only by this test module: solve the
    // normal equations XᵀX β = Xᵀy by Gaussian elimination with partial
    // pivoting, invert XᵀX by Gauss–Jordan for the standard errors, and
    // evaluate the Student-t tail through the regularized incomplete beta
    // function (Lentz's continued fraction). Entirely separate from the
    // QR/statrs path under test.
    // ------------------------------------------------------------------

    fn oracle_fit(rows: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
        let n = rows.len();
        let k = rows[0].len();
        // XᵀX and Xᵀy.
        let mut xtx = vec![vec![0.0_f64; k]; k];
        let mut xty = vec![0.0_f64; k];
        for (row, &yi) in rows.iter().zip(y) {
            for a in 0..k {
                xty[a] += row[a] * yi;
                for b in 0..k {
                    xtx[a][b] += row[a] * row[b];
                }
            }
        }
        let beta = gauss_solve(xtx.clone(), xty);
        let inv = gauss_jordan_inverse(xtx);
        let mut ssr = 0.0;
        let mean_y = y.iter().sum::<f64>() / n as f64;
        let mut sst = 0.0;
        for (row, &yi) in rows.iter().zip(y) {
            let fit: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
            ssr += (yi - fit).powi(2);
            sst += (yi - mean_y).powi(2);
        }
        let df = (n - k) as f64;
        let sigma2 = ssr / df;
        let se: Vec<f64> = (0..k).map(|j| (sigma2 * inv[j][j]).sqrt()).collect();
        let p: Vec<f64> = (0..k)
            .map(|j| {
                let t = beta[j] / se[j];
                // Two-sided tail: P(|T| > t) = I_{df/(df+t²)}(df/2, 1/2).
                inc_beta(df / 2.0, 0.5, df / (df + t * t))
            })
            .collect();
        (beta, se, p, 1.0 - ssr / sst)
    }

    fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let k = b.len();
        for col in 0..k {
            let pivot = (col..k)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            a.swap(col, pivot);
            b.swap(col, pivot);
            for row in (col + 1)..k {
                let factor = a[row][col] / a[col][col];
                for c in col..k {
                    a[row][c] -= factor * a[col][c];
                }
                b[row] -= factor * b[col];
            }
        }
        let mut x = vec![0.0; k];
        for row in (0..k).rev() {
            let acc: f64 = ((row + 1)..k).map(|c| a[row][c] * x[c]).sum();
            x[row] = (b[row] - acc) / a[row][row];
        }
        x
    }

    fn gauss_jordan_inverse(a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        let k = a.len();
        let mut aug: Vec<Vec<f64>> = a
            .into_iter()
            .enumerate()
            .map(|(i, mut row)| {
                row.extend((0..k).map(|j| if i == j { 1.0 } else { 0.0 }));
                row
            })
            .collect();
        for col in 0..k {
            let pivot = (col..k)
                .max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))
                .unwrap();
            aug.swap(col, pivot);
            let scale = aug[col][col];
            for c in 0..2 * k {
                aug[col][c] /= scale;
            }
            for row in 0..k {
                if row != col {
                    let factor = aug[row][col];
                    for c in 0..2 * k {
                        aug[row][c] -= factor * aug[col][c];
                    }
                }
            }
        }
        aug.into_iter().map(|row| row[k..].to_vec()).collect()
    }

    fn ln_gamma(x: f64) -> f64 {
        // Lanczos approximation, g = 7.
        const COEF: [f64; 9] = [
            0.999_999_999_999_809_93,
            676.520_368_121_885_1,
            -1259.139_216_722_402_8,
            771.323_428_777_653_13,
            -176.615_029_162_140_6,
            12.507_343_278_686_905,
            -0.138_571_095_265_720_12,
            9.984_369_578_019_572e-6,
            1.505_632_735_149_311_6e-7,
        ];
        if x < 0.5 {
            let pi = std::f64::consts::PI;
            return pi.ln() - (pi * x).sin().ln() - ln_gamma(1.0 - x);
        }
        let x = x - 1.0;
        let mut acc = COEF[0];
        for (i, c) in COEF.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + 7.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }

    fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
        // Lentz's algorithm for the continued fraction in I_x(a, b).
        let tiny = 1e-300;
        let qab = a + b;
        let qap = a + 1.0;
        let qam = a - 1.0;
        let mut c = 1.0;
        let mut d = 1.0 - qab * x / qap;
        if d.abs() < tiny {
            d = tiny;
        }
        d = 1.0 / d;
        let mut h = d;
        for m in 1..200 {
            let m = m as f64;
            let m2 = 2.0 * m;
            let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
            d = 1.0 + aa * d;
            if d.abs() < tiny {
                d = tiny;
            }
            c = 1.0 + aa / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            h *= d * c;
            let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
            d = 1.0 + aa * d;
            if d.abs() < tiny {
                d = tiny;
            }
            c = 1.0 + aa / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-14 {
                break;
            }
        }
        h
    }

    fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        let bt =
            (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
        if x < (a + 1.0) / (a + b + 2.0) {
            bt * beta_cf(a, b, x) / a
        } else {
            1.0 - bt * beta_cf(b, a, 1.0 - x) / b
        }
    }

    #[test]
    fn exact_linear_fit_recovers_the_line() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, i as f64]).collect();
        let response: Vec<f64> = (0..6).map(|i| 2.0 + 3.0 * i as f64).collect();
        let fit = ols_fit(&design(rows, response, &["intercept", "x"])).unwrap();
        assert!((fit.coefficients[0].estimate - 2.0).abs() < 1e-10);
        assert!((fit.coefficients[1].estimate - 3.0).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.coefficients[1].p_value, 0.0);
    }

    #[test]
    fn duplicated_column_reports_collinear_names() {
        let rows: Vec<Vec<f64>> = (0..8)
            .map(|i| vec![1.0, i as f64, i as f64])
            .collect();
        let response: Vec<f64> = (0..8).map(|i| i as f64 * 0.5 + 1.0).collect();
        let err = ols_fit(&design(rows, response, &["intercept", "a", "a_copy"])).unwrap_err();
        match err {
            crate::Error::Collinear(cols) => assert_eq!(cols, vec!["a_copy".to_string()]),
            other => panic!("expected Collinear, got {other:?}"),
        }
    }

    #[test]
    fn more_columns_than_rows_is_degenerate() {
        let rows = vec![vec![1.0, 0.0], vec![1.0, 1.0]];
        let err = ols_fit(&design(rows, vec![0.0, 1.0], &["intercept", "x"])).unwrap_err();
        assert!(matches!(err, crate::Error::Degenerate(_)), "{err:?}");
    }

    #[test]
    fn matches_normal_equation_oracle_on_random_fixtures() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for fixture in 0..50 {
            let n = 40 + (fixture % 7) * 5;
            let k = 3 + fixture % 4;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let mut row = vec![1.0];
                    // Approximate normals keep the columns well conditioned.
                    row.extend((1..k).map(|_| {
                        (0..12).map(|_| rng.gen::<f64>()).sum::<f64>() - 6.0
                    }));
                    row
                })
                .collect();
            let truth: Vec<f64> = (0..k).map(|j| j as f64 - 1.0).collect();
            let response: Vec<f64> = rows
                .iter()
                .map(|row| {
                    let signal: f64 = row.iter().zip(&truth).map(|(x, b)| x * b).sum();
                    signal + rng.gen::<f64>() - 0.5
                })
                .collect();
            let labels: Vec<String> = (0..k).map(|j| format!("c{j}")).collect();
            let label_refs: Vec<&str> = labels.iter().map(|s| s.as_str()).collect();

            let fit = ols_fit(&design(rows.clone(), response.clone(), &label_refs)).unwrap();
            let (beta, se, p, r2) = oracle_fit(&rows, &response);
            for j in 0..k {
                assert!(
                    (fit.coefficients[j].estimate - beta[j]).abs() < 1e-8,
                    "fixture {fixture} beta[{j}]: {} vs {}",
                    fit.coefficients[j].estimate,
                    beta[j]
                );
                assert!(
                    (fit.coefficients[j].std_error - se[j]).abs() < 1e-8,
                    "fixture {fixture} se[{j}]: {} vs {}",
                    fit.coefficients[j].std_error,
                    se[j]
                );
                assert!(
                    (fit.coefficients[j].p_value - p[j]).abs() < 1e-8,
                    "fixture {fixture} p[{j}]: {} vs {}",
                    fit.coefficients[j].p_value,
                    p[j]
                );
            }
            assert!((fit.r_squared - r2).abs() < 1e-8, "fixture {fixture} r²");
        }
    }

    #[test]
    fn null_slope_p_values_are_calibrated() {
        // Pure noise: the slope p value should be uniform, so p ≤ 0.001
        // should be extremely rare across seeded trials.
        let trials = 400;
        let mut extreme = 0;
        for seed in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(1_000 + seed);
            let rows: Vec<Vec<f64>> = (0..200)
                .map(|_| vec![1.0, rng.gen::<f64>()])
                .collect();
            let response: Vec<f64> = (0..200)
                .map(|_| (0..12).map(|_| rng.gen::<f64>()).sum::<f64>() - 6.0)
                .collect();
            let fit = ols_fit(&design(rows, response, &["intercept", "x"])).unwrap();
            if fit.coefficients[1].p_value <= 0.001 {
                extreme += 1;
            }
        }
        assert!(
            extreme as f64 <= trials as f64 * 0.01,
            "{extreme}/{trials} null fits had p <= 0.001"
        );
    }

    #[test]
    fn stars_thresholds() {
        assert_eq!(stars(0.0005), "***");
        assert_eq!(stars(0.005), "**");
        assert_eq!(stars(0.03), "*");
        assert_eq!(stars(0.05), "");
        assert_eq!(stars(0.5), "");
    }
}

//! Summary statistics for paired experiment results.

use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("paired t-test needs at least two pairs, got {0}")]
    TooFewSamples(usize),
}

/// Samples at or above this size use the normal critical value.
pub const NORMAL_APPROXIMATION_MIN_N: usize = 100;

/// Two-tailed paired t-test on `b − a`.
pub fn paired_t_test(a: &[f64], b: &[f64], alpha: f64) -> Result<TTest, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples(n));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let m = mean(&d);
    let sd = std_dev(&d);
    if sd == 0.0 {
        return Ok(if m == 0.0 {
            TTest {
                t: 0.0,
                significant: false,
            }
        } else {
            TTest {
                t: m.signum() * f64::INFINITY,
                significant: true,
            }
        });
    }
    let t = m / (sd / (n as f64).sqrt());
    Ok(TTest {
        t,
        significant: t.abs() > critical_value(n, alpha),
    })
}

fn critical_value(n: usize, alpha: f64) -> f64 {
    let q = 1.0 - alpha / 2.0;
    if n >= NORMAL_APPROXIMATION_MIN_N && (alpha - 0.05).abs() < 1e-12 {
        return 1.96;
    }
    if n >= NORMAL_APPROXIMATION_MIN_N {
        statrs::distribution::Normal::new(0.0, 1.0)
            .expect("standard normal")
            .inverse_cdf(q)
    } else {
        StudentsT::new(0.0, 1.0, (n - 1) as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(q)
    }
}

/// `(shielded − original) / |original| · 100`; `None` when `original` is 0.
pub fn relative_increase(original: f64, shielded: f64) -> Option<f64> {
    if original == 0.0 {
        None
    } else {
        Some((shielded - original) / original.abs() * 100.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ri_examples() {
        assert!((relative_increase(3.088, 3.702).unwrap() - 19.88).abs() < 0.01);
        assert!((relative_increase(-4.173, 3.702).unwrap() - 188.71).abs() < 0.01);
        assert_eq!(relative_increase(2.5, 2.5), Some(0.0));
        assert_eq!(relative_increase(0.0, 1.0), None);
    }

    #[test]
    fn degenerate_t_tests() {
        let a = vec![1.0, 2.0, 3.0];
        let same = paired_t_test(&a, &a, 0.05).unwrap();
        assert_eq!(same.t, 0.0);
        assert!(!same.significant);
        let b: Vec<f64> = a.iter().map(|x| x + 1.0).collect();
        assert!(paired_t_test(&a, &b, 0.05).unwrap().significant);
        assert!(paired_t_test(&a, &a[..2], 0.05).is_err());
        assert!(paired_t_test(&a[..1], &a[..1], 0.05).is_err());
    }

    #[test]
    fn small_sample_uses_student_t() {
        // t = 2.5 with 4 degrees of freedom: not significant at 5% (crit 2.776)
        let a = vec![0.0; 5];
        let d = [1.0, 2.0, 3.0, 0.0, -0.5];
        let b: Vec<f64> = d.to_vec();
        let r = paired_t_test(&a, &b, 0.05).unwrap();
        let expected = mean(&d) / (std_dev(&d) / 5f64.sqrt());
        assert!((r.t - expected).abs() < 1e-12);
        assert_eq!(r.significant, expected.abs() > 2.776);
    }
}

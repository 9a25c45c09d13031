use serde::{Deserialize, Serialize};

use super::TrustError;

/// Absolute slack applied to both ends of the valid interval.
pub const INTERVAL_TOLERANCE: f64 = 1e-9;

/// Half-width of the valid interval in standard deviations.
const INTERVAL_HALF_WIDTH: f64 = 2.0;

/// Population mean and standard deviation (divide by N, no Bessel correction).
pub fn question_stats(values: &[f64]) -> Result<(f64, f64), TrustError> {
    if values.is_empty() {
        return Err(TrustError::EmptyInput);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

pub fn valid_interval(mean: f64, std: f64) -> (f64, f64) {
    (
        mean - INTERVAL_HALF_WIDTH * std,
        mean + INTERVAL_HALF_WIDTH * std,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionStats {
    pub question_id: u32,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub lo: f64,
    pub hi: f64,
}

impl QuestionStats {
    pub fn compute(question_id: u32, values: &[f64]) -> Result<Self, TrustError> {
        let (mean, std) = question_stats(values)?;
        let (lo, hi) = valid_interval(mean, std);
        Ok(Self {
            question_id,
            n: values.len(),
            mean,
            std,
            lo,
            hi,
        })
    }

    /// Inclusive membership with [`INTERVAL_TOLERANCE`].
    pub fn contains(&self, value: f64) -> bool {
        value >= self.lo - INTERVAL_TOLERANCE && value <= self.hi + INTERVAL_TOLERANCE
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9
    }

    #[test]
    fn constant_values() {
        assert_eq!(question_stats(&[2.0; 5]).unwrap(), (2.0, 0.0));
    }

    #[test]
    fn one_two_three() {
        let (m, s) = question_stats(&[1.0, 2.0, 3.0]).unwrap();
        assert!(close(m, 2.0));
        assert!(close(s, (2.0f64 / 3.0).sqrt()));
        assert!(close(s, 0.816_496_580_927_726));
    }

    #[test]
    fn skewed_five() {
        let (m, s) = question_stats(&[1.0, 1.0, 1.0, 1.0, 5.0]).unwrap();
        assert!(close(m, 1.8));
        assert!(close(s, 1.6));
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(question_stats(&[]), Err(TrustError::EmptyInput));
    }

    #[test]
    fn intervals() {
        assert_eq!(valid_interval(2.0, 0.0), (2.0, 2.0));
        let (lo, hi) = valid_interval(1.8, 1.6);
        assert!(close(lo, -1.4) && close(hi, 5.0));
        let (lo, hi) = valid_interval(2.0, 0.816_497);
        assert!((lo - 0.367_006).abs() < 1e-6 && (hi - 3.632_994).abs() < 1e-6);
    }

    #[test]
    fn degenerate_interval_admits_only_the_mean() {
        let st = QuestionStats::compute(1, &[3.0; 6]).unwrap();
        assert!(st.contains(3.0));
        assert!(st.contains(3.0 + 1e-10));
        assert!(!st.contains(3.000_001));
        assert!(!st.contains(2.0));
    }

    #[test]
    fn interval_is_inclusive() {
        let st = QuestionStats::compute(1, &[1.0, 1.0, 1.0, 1.0, 5.0]).unwrap();
        assert!(st.contains(5.0));
        assert!(st.contains(-1.4));
        assert!(!st.contains(5.01));
        assert!(st.lo <= st.mean && st.mean <= st.hi);
        assert!(close(st.hi - st.lo, 4.0 * st.std));
    }
}

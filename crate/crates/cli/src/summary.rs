//! Posterior summaries: highest density intervals and batch-means ESS.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SummaryError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("credible level must lie in (0, 1), got {0}")]
    BadLevel(f64),
}

/// Shortest interval holding `ceil(level * n)` sorted samples; ties go to the leftmost window.
pub fn hdi(samples: &[f64], level: f64) -> Result<(f64, f64), SummaryError> {
    let n = samples.len();
    if n < 2 {
        return Err(SummaryError::TooFewSamples { need: 2, got: n });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(SummaryError::BadLevel(level));
    }
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    // Guard against 0.9 * 100 landing a hair above 90.
    let m = ((level * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut best = 0;
    for j in 1..=n - m {
        if x[j + m - 1] - x[j] < x[best + m - 1] - x[best] {
            best = j;
        }
    }
    Ok((x[best], x[best + m - 1]))
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Effective sample size from batch means with batches of size `floor(sqrt(n))`.
pub fn ess_batch(samples: &[f64]) -> Result<f64, SummaryError> {
    let n = samples.len();
    if n < 9 {
        return Err(SummaryError::TooFewSamples { need: 9, got: n });
    }
    let b = (n as f64).sqrt().floor() as usize;
    let k = n / b;
    let means: Vec<f64> = samples[..k * b].chunks(b).map(mean).collect();
    let var_means = variance(&means);
    if var_means == 0.0 {
        return Ok(n as f64);
    }
    Ok(n as f64 * variance(samples) / (b as f64 * var_means))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub hdi_lower: f64,
    pub hdi_upper: f64,
}

impl Summary {
    pub const HEADER: [&'static str; 7] = ["mean", "sd", "min", "median", "max", "HDI.lower", "HDI.upper"];

    pub fn of(samples: &[f64]) -> Result<Summary, SummaryError> {
        let n = samples.len();
        if n < 2 {
            return Err(SummaryError::TooFewSamples { need: 2, got: n });
        }
        let mut x = samples.to_vec();
        x.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 { x[n / 2] } else { 0.5 * (x[n / 2 - 1] + x[n / 2]) };
        let (hdi_lower, hdi_upper) = hdi(&x, 0.9)?;
        Ok(Summary {
            mean: mean(&x),
            sd: variance(&x).sqrt(),
            min: x[0],
            median,
            max: x[n - 1],
            hdi_lower,
            hdi_upper,
        })
    }

    pub fn values(&self) -> [f64; 7] {
        [self.mean, self.sd, self.min, self.median, self.max, self.hdi_lower, self.hdi_upper]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hdi_examples() {
        let x: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(hdi(&x, 0.9).unwrap(), (1.0, 90.0));
        assert_eq!(hdi(&[3.0, 1.0], 0.5).unwrap(), (1.0, 1.0));
        assert!(hdi(&[1.0], 0.5).is_err());
        assert!(hdi(&x, 1.0).is_err());
    }

    #[test]
    fn constant_chain() {
        let x = vec![2.5; 50];
        assert_eq!(ess_batch(&x).unwrap(), 50.0);
        let s = Summary::of(&x).unwrap();
        assert_eq!(s.sd, 0.0);
        assert_eq!((s.hdi_lower, s.hdi_upper), (2.5, 2.5));
        assert!(ess_batch(&x[..8]).is_err());
    }
}

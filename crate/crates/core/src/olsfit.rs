//! Ordinary least squares helpers with normal-theory confidence intervals.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub se_intercept: f64,
    pub se_slope: f64,
    pub n: usize,
}

/// Two-sided Student-t critical value for the given confidence level.
/// Falls back to the normal quantile for very large samples.
pub fn t_critical(level: f64, df: usize) -> f64 {
    let p = 0.5 + level / 2.0;
    if df == 0 {
        return f64::INFINITY;
    }
    if df > 100_000 {
        return Normal::standard().inverse_cdf(p);
    }
    StudentsT::new(0.0, 1.0, df as f64)
        .map(|t| t.inverse_cdf(p))
        .unwrap_or(f64::INFINITY)
}

pub fn ols(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::InvalidParameter("x and y lengths differ".into()));
    }
    if n < 2 {
        return Err(Error::insufficient("line fit", format!("{n} points")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::insufficient("line fit", "regressor has no spread"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (se_slope, se_intercept) = if n > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        let s2 = rss / (nf - 2.0);
        ((s2 / sxx).sqrt(), (s2 * (1.0 / nf + mx * mx / sxx)).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(LineFit {
        intercept,
        slope,
        se_intercept,
        se_slope,
        n,
    })
}

/// Slope of y = b·x (no intercept) and its standard error.
pub fn ols_through_origin(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    if n == 0 || n != y.len() {
        return Err(Error::insufficient("origin fit", format!("{n} points")));
    }
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if sxx <= 0.0 {
        return Err(Error::insufficient("origin fit", "regressor is all zero"));
    }
    let b = x.iter().zip(y).map(|(a, c)| a * c).sum::<f64>() / sxx;
    let se = if n > 1 {
        let rss: f64 = x.iter().zip(y).map(|(a, c)| (c - b * a).powi(2)).sum();
        (rss / (n as f64 - 1.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok((b, se))
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance (n - 1 denominator).
pub fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let f = ols(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!(f.se_slope.abs() < 1e-9);
    }

    #[test]
    fn t_quantiles() {
        // t_{0.95, 10} = 1.812
        assert!((t_critical(0.90, 10) - 1.8125).abs() < 1e-3);
        assert!((t_critical(0.90, 100_000) - 1.6449).abs() < 1e-3);
    }

    #[test]
    fn origin_fit() {
        let (b, _) = ols_through_origin(&[1.0, 2.0], &[3.0, 6.0]).unwrap();
        assert!((b - 3.0).abs() < 1e-12);
    }
}

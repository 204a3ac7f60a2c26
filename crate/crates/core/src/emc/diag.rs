use crate::error::{Error, Result};

/// Normalized empirical autocorrelation `ρ(0..=max_lag)` of `series`.
///
/// `ρ(t) = C(t)/C(0)` with `C(t) = (1/(n−t)) Σ_{i<n−t} (x_i − x̄)(x_{i+t} − x̄)`.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = series.len();
    if max_lag < 1 || n <= max_lag {
        return Err(Error::invalid(format!(
            "autocorrelation needs 1 <= max_lag < series length (got lag {max_lag}, length {n})"
        )));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("series contains non-finite values"));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let c0 = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if !(c0 > 0.0) {
        return Err(Error::Degenerate("series has zero variance".into()));
    }
    Ok((0..=max_lag)
        .map(|t| {
            if t == 0 {
                return 1.0;
            }
            let c = centered[..n - t]
                .iter()
                .zip(&centered[t..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / (n - t) as f64;
            c / c0
        })
        .collect())
}

/// Integrated autocorrelation time `1 + 2 Σ ρ(t)`, summed until the first
/// non-positive `ρ`.
pub fn integrated_time(rho: &[f64]) -> f64 {
    1.0 + 2.0
        * rho
            .iter()
            .skip(1)
            .take_while(|&&r| r > 0.0)
            .sum::<f64>()
}

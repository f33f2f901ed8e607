use crate::error::{Error, Result};

/// Least-squares line through (n, value) pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedFit {
    pub slope: f64,
    pub intercept: f64,
    /// Heteroskedasticity-robust (HC1) or cluster-robust standard error of the slope.
    pub stderr: f64,
    pub n_range: (f64, f64),
    pub points: usize,
}

struct Ols {
    slope: f64,
    intercept: f64,
    xbar: f64,
    sxx: f64,
}

fn ols(pts: &[(f64, f64)]) -> Result<Ols> {
    let n = pts.len() as f64;
    let xbar = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ybar = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xbar).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Degenerate("all generations are equal".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    let slope = sxy / sxx;
    Ok(Ols { slope, intercept: ybar - slope * xbar, xbar, sxx })
}

fn select(series: &[(f64, f64)], n_min: f64) -> Result<Vec<(f64, f64)>> {
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|p| p.0 >= n_min && p.1.is_finite()).collect();
    if pts.len() < 5 {
        return Err(Error::InsufficientData(format!("speed fit needs >= 5 points with n >= {n_min}, got {}", pts.len())));
    }
    Ok(pts)
}

fn range(pts: &[(f64, f64)]) -> (f64, f64) {
    pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)))
}

/// OLS of value on n over n >= n_min with an HC1 standard error.
pub fn speed_fit(series: &[(f64, f64)], n_min: f64) -> Result<SpeedFit> {
    let pts = select(series, n_min)?;
    let fit = ols(&pts)?;
    let k = pts.len() as f64;
    let meat: f64 = pts
        .iter()
        .map(|&(x, y)| ((x - fit.xbar) * (y - fit.intercept - fit.slope * x)).powi(2))
        .sum();
    let var = k / (k - 2.0) * meat / (fit.sxx * fit.sxx);
    Ok(SpeedFit { slope: fit.slope, intercept: fit.intercept, stderr: var.sqrt(), n_range: range(&pts), points: pts.len() })
}

/// OLS on pooled (cluster, n, value) observations with a cluster-robust (CR1)
/// standard error; use one cluster per replicate.
pub fn speed_fit_clustered(series: &[(usize, f64, f64)], n_min: f64) -> Result<SpeedFit> {
    let keep: Vec<(usize, f64, f64)> = series.iter().copied().filter(|p| p.1 >= n_min && p.2.is_finite()).collect();
    let pts: Vec<(f64, f64)> = keep.iter().map(|p| (p.1, p.2)).collect();
    let pts = select(&pts, n_min)?;
    let fit = ols(&pts)?;
    let mut scores = std::collections::BTreeMap::<usize, f64>::new();
    for &(g, x, y) in &keep {
        *scores.entry(g).or_default() += (x - fit.xbar) * (y - fit.intercept - fit.slope * x);
    }
    let g = scores.len() as f64;
    if g < 2.0 {
        return Err(Error::InsufficientData("clustered fit needs at least two clusters".into()));
    }
    let k = pts.len() as f64;
    let meat: f64 = scores.values().map(|s| s * s).sum();
    let var = g / (g - 1.0) * (k - 1.0) / (k - 2.0) * meat / (fit.sxx * fit.sxx);
    Ok(SpeedFit { slope: fit.slope, intercept: fit.intercept, stderr: var.sqrt(), n_range: range(&pts), points: pts.len() })
}

/// Weighted least squares slope and its model-based standard error, for
/// (x, y, weight) triples with weights proportional to inverse variances.
pub(crate) fn weighted_slope(pts: &[(f64, f64, f64)]) -> Option<(f64, f64)> {
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    if !(sw > 0.0) || pts.len() < 3 {
        return None;
    }
    let xbar = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ybar = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - xbar).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = pts.iter().map(|p| p.2 * (p.0 - xbar) * (p.1 - ybar)).sum::<f64>() / sxx;
    Some((slope, (1.0 / sxx).sqrt()))
}

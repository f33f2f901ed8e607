//! Kolmogorov-Smirnov statistics with the asymptotic p-value.

/// D statistic, approximate p-value and (effective) sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub d: f64,
    pub p: f64,
    pub n: f64,
}

/// P[K > x] for the Kolmogorov distribution, series truncated at 100 terms.
pub fn kolmogorov_q(x: f64) -> f64 {
    if x < 0.27 {
        // the alternating series has not started to converge; Q is 1 to 1e-5 here
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100u32 {
        let kf = f64::from(k);
        let term = (-2.0 * kf * kf * x * x).exp();
        sum += if k % 2 == 1 { term } else { -term };
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn p_value(d: f64, n: f64) -> f64 {
    let rn = n.sqrt();
    kolmogorov_q((rn + 0.12 + 0.11 / rn) * d)
}

/// One-sample test of `samples` against a continuous `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    KsResult { d, p: p_value(d, n), n }
}

/// Two-sample test; ties are handled by stepping both empirical CDFs together.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (n, m) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let n_eff = n * m / (n + m);
    KsResult { d, p: p_value(d, n_eff), n: n_eff }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn exact_quantiles_give_half_over_n() {
        let n = 200;
        let xs: Vec<f64> = (1..=n).map(|j| (j as f64 - 0.5) / n as f64).collect();
        let r = ks_statistic(&xs, |x| x.clamp(0.0, 1.0));
        assert!((r.d - 0.5 / n as f64).abs() < 1e-12);
        assert!(r.p > 0.999);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Q(1.36) ~ 0.049, Q(1.63) ~ 0.0098
        assert!((kolmogorov_q(1.36) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_q(1.628) - 0.0100).abs() < 5e-4);
        assert_eq!(kolmogorov_q(0.1), 1.0);
    }

    #[test]
    fn null_p_values_are_uniform() {
        let mut rng = stream(21, 0);
        let trials = 1000;
        let mut bins = [0u32; 10];
        for _ in 0..trials {
            let xs: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
            let p = ks_statistic(&xs, |x| x).p;
            bins[((p * 10.0) as usize).min(9)] += 1;
        }
        let e = trials as f64 / 10.0;
        let chi2: f64 = bins.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
        // 9 degrees of freedom, 1% critical value
        assert!(chi2 < 21.666, "{bins:?}");
    }

    #[test]
    fn shifted_gumbel_is_rejected() {
        let mut rng = stream(22, 0);
        let xs: Vec<f64> = (0..500).map(|_| 0.5 - (-(rng.random::<f64>()).ln()).ln()).collect();
        let r = ks_statistic(&xs, |z| (-(-z).exp()).exp());
        assert!(r.p < 0.01, "{r:?}");
    }

    #[test]
    fn two_sample_detects_shift_and_accepts_null() {
        let mut rng = stream(23, 0);
        let a: Vec<f64> = (0..800).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..600).map(|_| rng.random::<f64>()).collect();
        let c: Vec<f64> = (0..600).map(|_| rng.random::<f64>() + 0.2).collect();
        assert!(ks_two_sample(&a, &b).p > 0.01);
        assert!(ks_two_sample(&a, &c).p < 1e-6);
        assert_eq!(ks_two_sample(&a, &a).d, 0.0);
    }
}

//! Convex analysis of phi: roots, the Legendre-Fenchel transform I, the
//! maximal-particle speed beta0, Chernoff bounds and the persistence verdict.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::ClusterModel;

/// |phi| tolerance for a stored root.
pub const ROOT_TOL: f64 = 1e-10;
/// Dead band on lambda * phi'(lambda) mapped to `Inconclusive`.
pub const CLASSIFY_TOL: f64 = 1e-9;
/// min phi within this of zero counts as a tangency (double root).
pub const TANGENCY_TOL: f64 = 1e-12;
/// A candidate lambda must satisfy |phi(lambda)| <= this to be classified.
pub const IS_ROOT_TOL: f64 = 1e-8;
/// Bracket searches never leave [-BRACKET_CAP, BRACKET_CAP].
pub const BRACKET_CAP: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criticality {
    Subcritical,
    Critical,
    Supercritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Persistent,
    Extinct,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::Persistent => "persistent",
            Verdict::Extinct => "extinct",
            Verdict::Inconclusive => "inconclusive",
        };
        f.write_str(s)
    }
}

impl fmt::Display for Criticality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Criticality::Subcritical => "subcritical",
            Criticality::Critical => "critical",
            Criticality::Supercritical => "supercritical",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub verdict: Verdict,
    /// lambda * phi'(lambda), or the inner product in several dimensions.
    pub product: f64,
}

impl Classification {
    fn from_product(product: f64) -> Self {
        let verdict = if product > CLASSIFY_TOL {
            Verdict::Persistent
        } else if product < -CLASSIFY_TOL {
            Verdict::Extinct
        } else {
            Verdict::Inconclusive
        };
        Classification { verdict, product }
    }
}

/// Everything the engine knows about phi for one model.
#[derive(Debug, Clone)]
pub struct LaplaceProfile {
    pub model: ClusterModel,
    pub phi0: f64,
    pub criticality: Criticality,
    pub roots: Vec<f64>,
    pub beta0: f64,
    /// Roots with lambda * phi'(lambda) > 0.
    pub k_st: Vec<f64>,
}

impl LaplaceProfile {
    pub fn compute(model: &ClusterModel) -> Result<Self> {
        let roots = find_roots(model)?;
        let phi0 = model.log_laplace(0.0);
        let criticality = if phi0.abs() <= TANGENCY_TOL {
            Criticality::Critical
        } else if phi0 < 0.0 {
            Criticality::Subcritical
        } else {
            Criticality::Supercritical
        };
        let k_st = roots
            .iter()
            .copied()
            .filter(|&l| classify(model, l).map(|c| c.verdict == Verdict::Persistent).unwrap_or(false))
            .collect();
        Ok(LaplaceProfile { model: model.clone(), phi0, criticality, roots, beta0: beta0(model), k_st })
    }
}

/// phi'(t), exact closed form.
pub fn phi_prime(model: &ClusterModel, t: f64) -> f64 {
    model.phi_prime(t)
}

fn bisect<F: Fn(f64) -> bool>(mut lo: f64, mut hi: f64, lo_side: F) -> (f64, f64) {
    // invariant: lo_side(lo) && !lo_side(hi)
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if lo_side(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

/// Location of the minimum of phi, by bisection on phi'.
pub fn argmin_phi(model: &ClusterModel) -> Result<f64> {
    if model.is_one_sided() {
        return Err(Error::OneSided);
    }
    let (mut lo, mut hi) = (-1.0, 1.0);
    while model.phi_prime(lo) >= 0.0 {
        lo *= 2.0;
        if lo < -BRACKET_CAP {
            return Err(Error::BracketOverflow { what: "argmin of phi", cap: BRACKET_CAP });
        }
    }
    while model.phi_prime(hi) <= 0.0 {
        hi *= 2.0;
        if hi > BRACKET_CAP {
            return Err(Error::BracketOverflow { what: "argmin of phi", cap: BRACKET_CAP });
        }
    }
    let (a, b) = bisect(lo, hi, |t| model.phi_prime(t) < 0.0);
    Ok(0.5 * (a + b))
}

/// All real solutions of phi(lambda) = 0, sorted.
pub fn find_roots(model: &ClusterModel) -> Result<Vec<f64>> {
    let t0 = argmin_phi(model)?;
    let m = model.log_laplace(t0);
    if m > TANGENCY_TOL {
        return Ok(Vec::new());
    }
    if m > -TANGENCY_TOL {
        return Ok(vec![t0]);
    }
    let mut roots = Vec::with_capacity(2);
    for dir in [-1.0, 1.0] {
        let mut d = 1.0;
        while model.log_laplace(t0 + dir * d) <= 0.0 {
            d *= 2.0;
            if d > 2.0 * BRACKET_CAP {
                return Err(Error::BracketOverflow { what: "root of phi", cap: BRACKET_CAP });
            }
        }
        let (inner, outer) = (t0, t0 + dir * d);
        // bisect on the parameter s in [0, 1] along inner -> outer
        let at = |s: f64| inner + s * (outer - inner);
        let (s0, s1) = bisect(0.0, 1.0, |s| model.log_laplace(at(s)) <= 0.0);
        let (r0, r1) = (at(s0), at(s1));
        let r = if model.log_laplace(r0).abs() <= model.log_laplace(r1).abs() { r0 } else { r1 };
        roots.push(r);
    }
    roots.sort_by(f64::total_cmp);
    Ok(roots)
}

/// I(z) = sup_t (z t - phi(t)); `f64::INFINITY` outside the closed range of phi'.
pub fn legendre(model: &ClusterModel, z: f64) -> f64 {
    if let Some((a2, a1, a0)) = model.quadratic() {
        return (z - a1).powi(2) / (4.0 * a2) - a0;
    }
    legendre_numeric(model, z)
}

/// Legendre transform by bisection on the monotone phi', for any model.
pub(crate) fn legendre_numeric(model: &ClusterModel, z: f64) -> f64 {
    let (lo, hi) = model.phi_prime_range();
    if z > hi || z < lo {
        return f64::INFINITY;
    }
    let mass = model.intensity_mass();
    if z == hi && hi.is_finite() {
        return -(mass * model.edge_atom_mass(true)).ln();
    }
    if z == lo && lo.is_finite() {
        return -(mass * model.edge_atom_mass(false)).ln();
    }
    let value = |t: f64| z * t - model.log_laplace(t);
    let (mut tl, mut th) = (-1.0, 1.0);
    while model.phi_prime(th) < z {
        th *= 2.0;
        if th > BRACKET_CAP {
            // supremum approached only at the edge of the range; the cap value is within rounding of it
            return value(BRACKET_CAP);
        }
    }
    while model.phi_prime(tl) > z {
        tl *= 2.0;
        if tl < -BRACKET_CAP {
            return value(-BRACKET_CAP);
        }
    }
    let (a, b) = bisect(tl, th, |t| model.phi_prime(t) < z);
    value(a).max(value(b))
}

/// Largest zero of I; `-inf` in the subcritical case.
pub fn beta0(model: &ClusterModel) -> f64 {
    if model.log_laplace(0.0) < -TANGENCY_TOL {
        return f64::NEG_INFINITY;
    }
    level_crossing(model, 0.0).unwrap_or_else(|| model.phi_prime(0.0))
}

/// Largest z >= phi'(0) with I(z) <= level, or `None` when even the minimum
/// I(phi'(0)) = -phi(0) exceeds the level. Infinite when I stays below the
/// level forever.
pub(crate) fn level_crossing(model: &ClusterModel, level: f64) -> Option<f64> {
    // I attains its minimum -phi(0) at z = phi'(0) and increases to the right.
    let z0 = model.phi_prime(0.0);
    if legendre(model, z0) > level {
        return None;
    }
    let (_, hi) = model.phi_prime_range();
    if hi.is_finite() && legendre(model, hi) <= level {
        return Some(hi);
    }
    let mut d = 1.0;
    while legendre(model, z0 + d) <= level {
        d *= 2.0;
        if d > 1e300 {
            return Some(f64::INFINITY);
        }
    }
    let (a, _) = bisect(z0, z0 + d, |z| legendre(model, z) <= level);
    Some(a)
}

/// Theorem-level persistence verdict for a root lambda of phi.
pub fn classify(model: &ClusterModel, lambda: f64) -> Result<Classification> {
    let phi = model.log_laplace(lambda);
    if !(phi.abs() <= IS_ROOT_TOL) {
        return Err(Error::NotARoot { lambda, phi });
    }
    Ok(Classification::from_product(lambda * model.phi_prime(lambda)))
}

/// Verdict in several dimensions from a caller-supplied phi and gradient.
pub fn classify_multidim(
    phi: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    lambda: &[f64],
) -> Result<Classification> {
    let value = phi(lambda);
    if !(value.abs() <= IS_ROOT_TOL) {
        return Err(Error::NotARoot { lambda: lambda.iter().map(|x| x * x).sum::<f64>().sqrt(), phi: value });
    }
    let g = grad(lambda);
    let product = lambda.iter().zip(&g).map(|(a, b)| a * b).sum();
    Ok(Classification::from_product(product))
}

/// exp(-n I(a/n)), an upper bound on P[max of generation n >= a].
pub fn chernoff_bound(model: &ClusterModel, n: u32, a: f64) -> Result<f64> {
    let n = f64::from(n);
    let floor = n * model.phi_prime(0.0);
    if a < floor - 1e-12 * floor.abs().max(1.0) {
        return Err(Error::OutOfDomain(format!("a = {a} below n phi'(0) = {floor}")));
    }
    let i = legendre(model, a / n);
    if i == f64::INFINITY {
        return Ok(0.0);
    }
    Ok((-n * i).exp().min(1.0))
}

/// First-moment bound on the expected number of particles in [a_obs, inf), at
/// any generation up to `n`, descending from seeds below `lower`:
/// sum over k of the integral over u < lower of c e^{-lambda u} e^{-k I((a_obs - u)/k)}.
pub fn truncation_bound(
    model: &ClusterModel,
    lambda: f64,
    c_mult: f64,
    lower: f64,
    n: u32,
    a_obs: f64,
) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::OutOfDomain(format!("truncation bound needs lambda > 0, got {lambda}")));
    }
    let slope0 = model.phi_prime(0.0);
    let (zlo, zhi) = model.phi_prime_range();
    let mut total = 0.0;
    for k in 1..=n {
        let kf = f64::from(k);
        if (a_obs - lower) / kf < slope0 - 1e-12 {
            return Err(Error::OutOfDomain(format!(
                "window lower edge {lower} too close to {a_obs} for {k} generations"
            )));
        }
        let log_f = |u: f64| c_mult.ln() - lambda * u - kf * legendre(model, (a_obs - u) / kf);
        // support of the integrand in u is [a - k zhi, a - k zlo]
        let upper = lower.min(a_obs - kf * zlo);
        let u_min = a_obs - kf * zhi;
        if upper <= u_min {
            continue;
        }
        // log_f is concave; its unconstrained maximum sits where I'((a-u)/k) = lambda
        let u_star = a_obs - kf * model.phi_prime(lambda);
        let peak = u_star.clamp(if u_min.is_finite() { u_min } else { f64::NEG_INFINITY }, upper);
        let h_max = log_f(peak);
        if h_max == f64::NEG_INFINITY {
            continue;
        }
        let mut d = 1.0;
        while peak - d > u_min && log_f(peak - d) > h_max - 60.0 {
            d *= 2.0;
        }
        let u_lo = (peak - d).max(u_min);
        let g = |u: f64| (log_f(u) - h_max).exp();
        let part = integrate(&g, u_lo, peak, 1e-8) + integrate(&g, peak, upper, 1e-8);
        total += part * h_max.exp();
    }
    Ok(total)
}

/// Adaptive Simpson quadrature.
pub(crate) fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    // start from a modest uniform split so narrow peaks are not missed
    let pieces = 16;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (f0, f1) = (f(x0), f(x1));
            let fm = f(0.5 * (x0 + x1));
            let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
            simpson_step(f, x0, x1, f0, fm, f1, whole, tol / pieces as f64, 40)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return left + right + diff / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CountLaw, DisplacementLaw};

    fn bbm(c: f64) -> ClusterModel {
        ClusterModel::unit_time_bbm(-c).unwrap()
    }

    fn frozen() -> ClusterModel {
        ClusterModel::iid(CountLaw::Fixed(1), DisplacementLaw::Atoms(vec![(0.0, 1.0)])).unwrap()
    }

    fn gauss2() -> ClusterModel {
        ClusterModel::iid(CountLaw::Fixed(2), DisplacementLaw::Gaussian { mean: -2.0, var: 1.0 }).unwrap()
    }

    fn two_point() -> ClusterModel {
        ClusterModel::iid(CountLaw::Fixed(2), DisplacementLaw::TwoPoint { a: -1.0, b: 1.0, p: 0.5 }).unwrap()
    }

    fn central_difference(m: &ClusterModel, t: f64) -> f64 {
        let h = 1e-6;
        (m.log_laplace(t + h) - m.log_laplace(t - h)) / (2.0 * h)
    }

    /// Brute-force supremum of z t - phi(t) over t in [-20, 20] with step 1e-4.
    fn grid_sup(m: &ClusterModel, z: f64) -> f64 {
        (0..=400_000).map(|i| -20.0 + i as f64 * 1e-4).map(|t| z * t - m.log_laplace(t)).fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn phi_prime_agrees_with_finite_differences() {
        assert!((phi_prime(&bbm(1.5), 2.0) - 0.5).abs() < 1e-15);
        assert!((central_difference(&bbm(1.5), 2.0) - 0.5).abs() < 1e-8);
        assert!((phi_prime(&gauss2(), 1.0) + 1.0).abs() < 1e-15);
        assert!((central_difference(&gauss2(), 1.0) + 1.0).abs() < 1e-8);
        assert_eq!(phi_prime(&frozen(), 0.7), 0.0);
        let m = ClusterModel::iid(CountLaw::Poisson(1.2), DisplacementLaw::TwoPoint { a: -1.0, b: 2.0, p: 0.3 }).unwrap();
        for t in [-1.0, 0.0, 0.4, 2.0] {
            assert!((phi_prime(&m, t) - central_difference(&m, t)).abs() < 1e-7);
        }
    }

    #[test]
    fn roots_of_bbm_and_poisson_gaussian() {
        let r = find_roots(&bbm(1.5)).unwrap();
        assert_eq!(r.len(), 2);
        assert!((r[0] - 1.0).abs() < 1e-9 && (r[1] - 2.0).abs() < 1e-9, "{r:?}");
        let r = find_roots(&bbm(2f64.sqrt())).unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0] - 2f64.sqrt()).abs() < 1e-6, "{r:?}");
        let pg = ClusterModel::iid(CountLaw::Poisson(0.5), DisplacementLaw::Gaussian { mean: 0.0, var: 1.0 }).unwrap();
        let r = find_roots(&pg).unwrap();
        let s = (2.0 * 2f64.ln()).sqrt();
        assert!((r[0] + s).abs() < 1e-9 && (r[1] - s).abs() < 1e-9, "{r:?}");
        assert!(find_roots(&bbm(1.0)).unwrap().is_empty());
    }

    #[test]
    fn one_sided_models_are_rejected() {
        assert!(matches!(find_roots(&frozen()), Err(Error::OneSided)));
        let m = ClusterModel::iid(CountLaw::Fixed(2), DisplacementLaw::TwoPoint { a: 0.5, b: 1.0, p: 0.5 }).unwrap();
        assert!(matches!(find_roots(&m), Err(Error::OneSided)));
    }

    #[test]
    fn legendre_examples() {
        assert!((legendre(&bbm(1.5), 0.0) - 0.125).abs() < 1e-15);
        assert!((grid_sup(&bbm(1.5), 0.0) - 0.125).abs() < 1e-6);
        for m in [bbm(1.5), gauss2(), two_point()] {
            let z = m.phi_prime(0.0);
            assert!((legendre(&m, z) + m.log_laplace(0.0)).abs() < 1e-12);
        }
        assert_eq!(legendre(&two_point(), 2.0), f64::INFINITY);
        // edge of the range: sup approached as t -> inf, equals -log(2 * 0.5)
        assert!(legendre(&two_point(), 1.0).abs() < 1e-15);
    }

    #[test]
    fn numeric_legendre_matches_closed_form() {
        for m in [bbm(1.5), gauss2()] {
            for z in [-3.0, -1.0, 0.0, 0.5, 2.0] {
                let a = legendre(&m, z);
                let b = legendre_numeric(&m, z);
                assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{z}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn beta0_examples() {
        assert!((beta0(&bbm(1.5)) - (2f64.sqrt() - 1.5)).abs() < 1e-12);
        assert!((beta0(&bbm(0.0)) - 2f64.sqrt()).abs() < 1e-12);
        let pg = ClusterModel::iid(CountLaw::Poisson(0.5), DisplacementLaw::Gaussian { mean: 0.0, var: 1.0 }).unwrap();
        assert_eq!(beta0(&pg), f64::NEG_INFINITY);
        assert!(legendre(&bbm(1.5), beta0(&bbm(1.5))).abs() <= 1e-10);
        // atomic: I(1) = 0 at the top of the range
        assert_eq!(beta0(&two_point()), 1.0);
        let m = ClusterModel::iid(CountLaw::Poisson(1.5), DisplacementLaw::TwoPoint { a: -1.0, b: 2.0, p: 0.6 }).unwrap();
        let b = beta0(&m);
        assert!(legendre(&m, b).abs() <= 1e-10, "I(beta0) = {}", legendre(&m, b));
        assert!(legendre(&m, b + 1e-6) > 0.0);
    }

    #[test]
    fn classify_examples() {
        let c = classify(&bbm(1.5), 2.0).unwrap();
        assert_eq!(c.verdict, Verdict::Persistent);
        assert!((c.product - 1.0).abs() < 1e-12);
        let c = classify(&bbm(1.5), 1.0).unwrap();
        assert_eq!(c.verdict, Verdict::Extinct);
        assert!((c.product + 0.5).abs() < 1e-12);
        let s = 2f64.sqrt();
        assert_eq!(classify(&bbm(s), s).unwrap().verdict, Verdict::Inconclusive);
        assert!(matches!(classify(&bbm(1.5), 1.5), Err(Error::NotARoot { .. })));
    }

    #[test]
    fn classify_multidim_examples() {
        let phi = |t: &[f64]| (t[0] * t[0] + t[1] * t[1]) / 2.0 - 1.5 * t[0] + 1.0;
        let grad = |t: &[f64]| vec![t[0] - 1.5, t[1]];
        assert_eq!(classify_multidim(&phi, &grad, &[2.0, 0.0]).unwrap().verdict, Verdict::Persistent);
        let c = classify_multidim(&phi, &grad, &[1.0, 0.0]).unwrap();
        assert_eq!(c.verdict, Verdict::Extinct);
        assert!((c.product + 0.5).abs() < 1e-12);
        let flat = |_: &[f64]| 0.0;
        let zero = |t: &[f64]| vec![0.0; t.len()];
        assert_eq!(classify_multidim(&flat, &zero, &[0.3, -1.0]).unwrap().verdict, Verdict::Inconclusive);
        assert!(classify_multidim(&phi, &grad, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn chernoff_examples() {
        let b = chernoff_bound(&bbm(1.5), 10, 0.0).unwrap();
        assert!((b - (-1.25f64).exp()).abs() < 1e-12);
        // at the mean the bound is e^{n phi(0)}, clipped to 1 when supercritical
        let m = gauss2();
        let a = 4.0 * m.phi_prime(0.0);
        assert_eq!(chernoff_bound(&m, 4, a).unwrap(), 1.0);
        let sub = ClusterModel::iid(CountLaw::Poisson(0.5), DisplacementLaw::Gaussian { mean: 0.3, var: 1.0 }).unwrap();
        let a = 3.0 * sub.phi_prime(0.0);
        assert!((chernoff_bound(&sub, 3, a).unwrap() - (3.0 * 0.5f64.ln()).exp()).abs() < 1e-12);
        assert_eq!(chernoff_bound(&frozen(), 5, 0.5).unwrap(), 0.0);
        assert!(chernoff_bound(&bbm(1.5), 10, -20.0).is_err());
    }

    #[test]
    fn truncation_bound_examples() {
        assert_eq!(truncation_bound(&frozen(), 1.0, 1.0, -5.5, 10, -5.0).unwrap(), 0.0);
        let m = bbm(1.5);
        let b1 = truncation_bound(&m, 2.0, 1.0, -30.0, 20, -5.0).unwrap();
        let b2 = truncation_bound(&m, 2.0, 1.0, -35.0, 20, -5.0).unwrap();
        assert!(b2 < b1 && b2 >= 0.0);
        // single generation against a brute-force Riemann sum
        let f = |u: f64| (-2.0 * u - legendre(&m, -5.0 - u)).exp();
        let riemann: f64 = (0..280_000).map(|i| -40.0 + i as f64 * 1e-4 + 0.5e-4).filter(|&u| u < -12.0).map(f).sum::<f64>() * 1e-4;
        let quad = truncation_bound(&m, 2.0, 1.0, -12.0, 1, -5.0).unwrap();
        assert!((quad - riemann).abs() < 1e-6 * riemann, "{quad} vs {riemann}");
    }

    #[test]
    fn profile_of_bbm() {
        let p = LaplaceProfile::compute(&bbm(1.5)).unwrap();
        assert_eq!(p.criticality, Criticality::Supercritical);
        assert_eq!(p.k_st.len(), 1);
        assert!((p.k_st[0] - 2.0).abs() < 1e-9);
    }
}

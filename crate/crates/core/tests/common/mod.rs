//! Shared test oracles, independent of the library's computation paths:
//! adaptive quadrature, finite differences, double-double arithmetic, and
//! basic goodness-of-fit tests.

#![allow(dead_code)]

/// Adaptive Simpson quadrature with absolute tolerance.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
        }
    }
    if b <= a {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

/// Double-double value (~31 significant digits); enough ops for the
/// risk-bound expression.
#[derive(Debug, Clone, Copy)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub fn from(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        (s, b - (s - a))
    }

    fn two_prod(a: f64, b: f64) -> (f64, f64) {
        let p = a * b;
        (p, a.mul_add(b, -p))
    }

    pub fn add(self, other: Dd) -> Dd {
        let (s, e) = Dd::two_sum(self.hi, other.hi);
        let e = e + self.lo + other.lo;
        let (hi, lo) = Dd::quick_two_sum(s, e);
        Dd { hi, lo }
    }

    pub fn sub(self, other: Dd) -> Dd {
        self.add(Dd { hi: -other.hi, lo: -other.lo })
    }

    pub fn mul(self, other: Dd) -> Dd {
        let (p, e) = Dd::two_prod(self.hi, other.hi);
        let e = e + self.hi * other.lo + self.lo * other.hi;
        let (hi, lo) = Dd::quick_two_sum(p, e);
        Dd { hi, lo }
    }

    pub fn div(self, other: Dd) -> Dd {
        let q1 = self.hi / other.hi;
        let r = self.sub(other.mul(Dd::from(q1)));
        let q2 = (r.hi + r.lo) / other.hi;
        let (hi, lo) = Dd::quick_two_sum(q1, q2);
        Dd { hi, lo }
    }

    pub fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// Natural log in double-double: the f64 log plus one Newton correction,
/// `ln(x) = y0 + (x - e^{y0}) / e^{y0}` with the residual computed exactly
/// (the operands agree to ~1e-16 so the subtraction is exact).
pub fn ln_dd(x: f64) -> Dd {
    let y0 = x.ln();
    let e0 = y0.exp();
    let correction = (x - e0) / e0;
    Dd::from(y0).add(Dd::from(correction))
}

/// Kolmogorov-Smirnov p-value of `samples` against the uniform law on
/// `[0, upper]` (asymptotic Kolmogorov distribution).
pub fn ks_uniform_pvalue(samples: &mut [f64], upper: f64) -> f64 {
    let n = samples.len();
    assert!(n > 0);
    samples.sort_by(|a, b| a.total_cmp(b));
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let cdf = (x / upper).clamp(0.0, 1.0);
        let hi = (i + 1) as f64 / n as f64 - cdf;
        let lo = cdf - i as f64 / n as f64;
        d = d.max(hi).max(lo);
    }
    let lambda = (n as f64).sqrt() * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        p += if k % 2 == 1 { 2.0 * term } else { -2.0 * term };
    }
    p.clamp(0.0, 1.0)
}

/// Chi-squared goodness-of-fit p-value of observed counts against Poisson
/// with known mean. Bins with expected count below 5 are merged into the
/// tail; degrees of freedom are bins - 1 (no parameter estimated).
pub fn chi2_poisson_pvalue(counts: &[u64], mean: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let n = counts.len() as f64;
    let max_count = *counts.iter().max().unwrap() as usize;

    // Poisson pmf by recurrence
    let mut pmf = Vec::with_capacity(max_count + 1);
    let mut p = (-mean).exp();
    pmf.push(p);
    for k in 1..=max_count {
        p *= mean / k as f64;
        pmf.push(p);
    }

    let mut observed = vec![0.0f64; max_count + 1];
    for &c in counts {
        observed[c as usize] += 1.0;
    }

    // merge into bins with expected >= 5; the final bin absorbs the tail
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc_obs = 0.0;
    let mut acc_exp = 0.0;
    for k in 0..=max_count {
        acc_obs += observed[k];
        acc_exp += pmf[k] * n;
        if acc_exp >= 5.0 {
            bins.push((acc_obs, acc_exp));
            acc_obs = 0.0;
            acc_exp = 0.0;
        }
    }
    // tail probability beyond max_count plus any remainder
    let covered: f64 = pmf.iter().sum();
    acc_exp += (1.0 - covered).max(0.0) * n;
    if acc_exp > 0.0 {
        if let Some(last) = bins.last_mut() {
            if acc_exp < 5.0 {
                last.0 += acc_obs;
                last.1 += acc_exp;
            } else {
                bins.push((acc_obs, acc_exp));
            }
        }
    }

    let stat: f64 = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let df = (bins.len().saturating_sub(1)).max(1) as f64;
    let chi = ChiSquared::new(df).unwrap();
    1.0 - chi.cdf(stat)
}

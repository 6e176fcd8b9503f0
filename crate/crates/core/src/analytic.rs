//! Closed-form and root-found quantities of the mean-field model: the three
//! critical points, the giant-component fraction of `G(n, mu/n)`, the
//! Swendsen-Wang and Chayes-Machta drift functions and their fixed points.
//!
//! All roots are found by bisection on explicit brackets and are iterated to
//! full double precision (well below the `1e-12` absolute tolerance the
//! callers rely on).

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::model::q_as_int;

const SCAN_STEP: f64 = 1e-3;

/// `lambda_s <= lambda_c <= lambda_S`, strictly ordered when `q > 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalPoints {
    /// Onset of metastability of the ordered phase.
    pub lambda_s: f64,
    /// Phase-coexistence point.
    pub lambda_c: f64,
    /// Disappearance of metastability of the disordered phase (`= q`).
    #[serde(rename = "lambda_S")]
    pub lambda_big_s: f64,
}

pub fn critical_points(q: f64) -> Result<CriticalPoints> {
    if !(q.is_finite() && q >= 1.0) {
        return Err(invalid("q", format!("need q >= 1, got {q}")));
    }
    if q <= 2.0 {
        return Ok(CriticalPoints {
            lambda_s: q,
            lambda_c: q,
            lambda_big_s: q,
        });
    }
    Ok(CriticalPoints {
        lambda_s: lambda_s(q),
        lambda_c: lambda_c(q),
        lambda_big_s: q,
    })
}

/// `2 (q-1) ln(q-1) / (q-2)`, continued by its limit 2 at `q = 2`.
fn lambda_c(q: f64) -> f64 {
    let x = q - 2.0;
    if x.abs() < 1e-8 {
        // 2(1+x)ln(1+x)/x = 2 + x - x^2/3 + O(x^3)
        return 2.0 + x - x * x / 3.0;
    }
    2.0 * (q - 1.0) * x.ln_1p() / x
}

/// Objective whose minimum over `z > 0` is `lambda_s`.
pub(crate) fn spinodal_objective(z: f64, q: f64) -> f64 {
    z + q * z / z.exp_m1()
}

fn lambda_s(q: f64) -> f64 {
    let z = golden_section_min(|z| spinodal_objective(z, q), 1e-9, 50.0, 1e-12);
    spinodal_objective(z, q)
}

fn golden_section_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Bisection on `[lo, hi]` where `f(lo)` and `f(hi)` have opposite signs.
/// Runs until the bracket cannot shrink further.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let f_lo_neg = f(lo) < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) < 0.0) == f_lo_neg {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Giant-component fraction of `G(n, mu/n)`: the positive root of
/// `exp(-mu x) = 1 - x`, or 0 when `mu <= 1`.
pub fn theta_giant(mu: f64) -> f64 {
    if mu <= 1.0 {
        return 0.0;
    }
    if mu.is_infinite() {
        return 1.0;
    }
    // h(x) = exp(-mu x) - 1 + x is convex with h(0) = 0, h'(0) < 0, h(1) > 0.
    let h = |x: f64| (-mu * x).exp_m1() + x;
    let lo = 1e-15;
    if h(lo) >= 0.0 {
        return 0.0;
    }
    bisect(h, lo, 1.0)
}

/// Largest root in `(0, 1]` of `exp(-lambda x) = 1 - q x / (1 + (q-1) x)`:
/// the giant fraction of the ordered FK phase.
///
/// Fails with [`Error::DegenerateRegime`] when the equation has no positive
/// root (in particular for `lambda <= lambda_s` when `q > 2`).
pub fn theta_r(lambda: f64, q: f64) -> Result<f64> {
    if !(q >= 1.0 && lambda > 0.0) {
        return Err(Error::DegenerateRegime(format!(
            "theta_r needs q >= 1 and lambda > 0 (q = {q}, lambda = {lambda})"
        )));
    }
    let phi = |x: f64| (-lambda * x).exp() - 1.0 + q * x / (1.0 + (q - 1.0) * x);
    let mut upper = 1.0;
    let mut k = 1;
    loop {
        let x = 1.0 - k as f64 * SCAN_STEP;
        if x <= 0.0 {
            return Err(Error::DegenerateRegime(format!(
                "no positive root of the ordered-phase equation at lambda = {lambda}, q = {q}"
            )));
        }
        if phi(x) < 0.0 {
            return Ok(bisect(phi, x, upper));
        }
        upper = x;
        k += 1;
    }
}

/// The ordered fixed point `a_lambda in (1/q, 1)` of the Swendsen-Wang drift:
/// the largest root of `ln((q-1) a / (1-a)) = lambda (a - (1-a)/(q-1))`.
pub fn a_fixed_point(lambda: f64, q: f64) -> Result<f64> {
    let qi = q_as_int(q).ok_or(Error::NonIntegerQ("ordered fixed point"))?;
    if qi < 3 {
        return Err(invalid("q", "ordered fixed point needs q >= 3"));
    }
    let lambda_s = critical_points(q)?.lambda_s;
    if lambda <= lambda_s {
        return Err(Error::NoOrderedFixedPoint { lambda, lambda_s });
    }
    let psi = |a: f64| ((q - 1.0) * a / (1.0 - a)).ln() - lambda * (a - (1.0 - a) / (q - 1.0));
    let floor = 1.0 / q;
    let mut upper = 1.0 - 1e-12;
    let mut k = 1;
    loop {
        let a = 1.0 - k as f64 * SCAN_STEP;
        if a <= floor {
            return Err(Error::NoOrderedFixedPoint { lambda, lambda_s });
        }
        if psi(a) < 0.0 {
            return Ok(bisect(psi, a, upper));
        }
        upper = a;
        k += 1;
    }
}

/// Mean size (as a fraction of `n`) of the largest color class after one
/// Swendsen-Wang step started with a class of size `z n`.
pub fn sw_drift(z: f64, lambda: f64, q: f64) -> f64 {
    if z * lambda <= 1.0 {
        return 1.0 / q;
    }
    let giant = z * theta_giant(lambda * z);
    giant + (1.0 - giant) / q
}

/// Chayes-Machta drift of the giant fraction: with the giant (fraction `theta`)
/// active and every other vertex active w.p. `1/q`, the activated set has
/// fraction `s = (1 + (q-1) theta)/q` and its resampled giant is `s * theta_{lambda s}`.
pub fn cm_drift(theta: f64, lambda: f64, q: f64) -> f64 {
    let s = (1.0 + (q - 1.0) * theta) / q;
    s * theta_giant(lambda * s)
}

/// `g(theta) = f(theta) - theta`.
pub fn cm_g(theta: f64, lambda: f64, q: f64) -> f64 {
    cm_drift(theta, lambda, q) - theta
}

/// `max{0, (q - lambda) / (lambda (q - 1))}`: the giant fraction at which the
/// activated set is exactly critical.
pub fn theta_min(lambda: f64, q: f64) -> f64 {
    ((q - lambda) / (lambda * (q - 1.0))).max(0.0)
}

/// The smaller root `theta_star` of `g` on `(theta_min, theta_r)`.
pub fn theta_star(lambda: f64, q: f64) -> Result<f64> {
    if q <= 2.0 {
        return Err(Error::Regime(format!("theta_star needs q > 2, got {q}")));
    }
    let cp = critical_points(q)?;
    if !(lambda > cp.lambda_s && lambda < cp.lambda_big_s) {
        return Err(Error::Regime(format!(
            "theta_star needs lambda in ({}, {}), got {lambda}",
            cp.lambda_s, cp.lambda_big_s
        )));
    }
    let upper = theta_r(lambda, q)?;
    let lower = theta_min(lambda, q);
    let g = |t: f64| cm_g(t, lambda, q);

    let mut prev = lower;
    let mut x = lower + SCAN_STEP;
    let root = loop {
        if x >= upper {
            return Err(Error::DegenerateRegime(format!(
                "g has no sign change below theta_r = {upper}"
            )));
        }
        if g(x) > 0.0 {
            break bisect(g, prev, x);
        }
        prev = x;
        x += SCAN_STEP;
    };

    // g must stay positive strictly between the two roots.
    let mut t = root + SCAN_STEP;
    while t < upper - SCAN_STEP {
        if g(t) <= 0.0 {
            return Err(Error::DegenerateRegime(format!(
                "g is not positive at {t} inside (theta_star, theta_r)"
            )));
        }
        t += SCAN_STEP;
    }
    Ok(root)
}

/// Fixed points of both drift maps at `(lambda, q)` with `q > 2` and `lambda`
/// inside the metastability window `(lambda_s, lambda_S)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftFixedPoints {
    pub lambda: f64,
    pub q: f64,
    pub theta_r: f64,
    pub theta_star: f64,
    pub theta_min: f64,
    /// Ordered Swendsen-Wang fixed point; integer `q` only.
    pub a_lambda: Option<f64>,
    /// `(1 - a_lambda) / (q - 1)`.
    pub b_lambda: Option<f64>,
}

impl DriftFixedPoints {
    pub fn compute(lambda: f64, q: f64) -> Result<Self> {
        let theta_star = theta_star(lambda, q)?;
        let a_lambda = match a_fixed_point(lambda, q) {
            Ok(a) => Some(a),
            Err(Error::NonIntegerQ(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            lambda,
            q,
            theta_r: theta_r(lambda, q)?,
            theta_star,
            theta_min: theta_min(lambda, q),
            a_lambda,
            b_lambda: a_lambda.map(|a| (1.0 - a) / (q - 1.0)),
        })
    }

    pub fn theta_lambda(&self, mu: f64) -> f64 {
        theta_giant(mu)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN2: f64 = std::f64::consts::LN_2;

    /// Independent route to theta: fixed-point iteration `x <- 1 - exp(-mu x)`,
    /// which contracts near the positive root for mu > 1.
    fn theta_by_iteration(mu: f64) -> f64 {
        let mut x = 1.0;
        for _ in 0..100_000 {
            x = 1.0 - (-mu * x).exp();
        }
        x
    }

    #[test]
    fn critical_points_q3() {
        let cp = critical_points(3.0).unwrap();
        assert!((cp.lambda_c - 4.0 * LN2).abs() < 1e-12);
        assert_eq!(cp.lambda_big_s, 3.0);
        assert!((2.7450..=2.7465).contains(&cp.lambda_s), "{}", cp.lambda_s);
        assert!(cp.lambda_s < cp.lambda_c && cp.lambda_c < cp.lambda_big_s);
    }

    #[test]
    fn critical_points_low_q() {
        let cp = critical_points(2.0).unwrap();
        assert_eq!((cp.lambda_s, cp.lambda_c, cp.lambda_big_s), (2.0, 2.0, 2.0));
        let cp = critical_points(1.5).unwrap();
        assert_eq!(cp.lambda_c, 1.5);
        assert!(critical_points(0.9).is_err());
        // continuity of lambda_c across the q = 2 branch
        assert!((lambda_c(2.0 + 1e-9) - 2.0).abs() < 1e-8);
        assert!((lambda_c(2.0 + 1e-7) - lambda_c(2.0 + 1.1e-8)).abs() < 1e-6);
    }

    #[test]
    fn critical_point_ordering_holds() {
        for &q in &[2.5, 3.0, 4.0, 10.0, 100.0] {
            let cp = critical_points(q).unwrap();
            assert!(cp.lambda_s < cp.lambda_c, "q={q}");
            assert!(cp.lambda_c < cp.lambda_big_s, "q={q}");
            assert_eq!(cp.lambda_big_s, q);
        }
    }

    #[test]
    fn spinodal_objective_is_unimodal_on_bracket() {
        for &q in &[2.5, 3.0, 10.0] {
            let grid: Vec<f64> = (0..1000)
                .map(|i| spinodal_objective(1e-9 + 50.0 * i as f64 / 999.0, q))
                .collect();
            let arg = grid
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert!(grid[..=arg].windows(2).all(|w| w[1] <= w[0]), "q={q}");
            assert!(grid[arg..].windows(2).all(|w| w[1] >= w[0]), "q={q}");
            let cp = critical_points(q).unwrap();
            assert!(cp.lambda_s <= grid[arg] + 1e-12);
            assert!(grid[arg] - cp.lambda_s < 1e-3);
        }
    }

    #[test]
    fn theta_giant_examples() {
        assert_eq!(theta_giant(1.0), 0.0);
        assert_eq!(theta_giant(0.3), 0.0);
        let t2 = theta_giant(2.0);
        assert!((t2 - theta_by_iteration(2.0)).abs() < 1e-12);
        assert!((t2 - 0.79681).abs() < 1e-5);
        assert!(((-2.0 * t2).exp() - (1.0 - t2)).abs() < 1e-10);
        assert!((theta_giant(8.0 / 3.0 * LN2) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn theta_giant_residual_and_monotonicity() {
        let mus = [1.01, 1.1, 2.0, 5.0, 20.0];
        for &mu in &mus {
            let t = theta_giant(mu);
            assert!(((-mu * t).exp() - (1.0 - t)).abs() < 1e-10, "mu={mu}");
            assert!((t - theta_by_iteration(mu)).abs() < 1e-9, "mu={mu}");
        }
        let mut prev = 0.0;
        for i in 1..=400 {
            let t = theta_giant(1.0 + i as f64 * 0.05);
            assert!(t > prev);
            prev = t;
        }
    }

    #[test]
    fn theta_r_at_lambda_c() {
        for &q in &[3.0, 4.0, 10.0] {
            let lc = critical_points(q).unwrap().lambda_c;
            let t = theta_r(lc, q).unwrap();
            assert!((t - (q - 2.0) / (q - 1.0)).abs() < 1e-8, "q={q} t={t}");
        }
        assert!((theta_r(3.0 * 3f64.ln(), 4.0).unwrap() - 2.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn theta_r_residual_and_degenerate() {
        let t = theta_r(2.9, 3.0).unwrap();
        let resid = (-2.9 * t).exp() - (1.0 - 3.0 * t / (1.0 + 2.0 * t));
        assert!(resid.abs() < 1e-10);
        assert!(t > 0.5 && t <= 1.0);
        assert!(matches!(theta_r(2.0, 3.0), Err(Error::DegenerateRegime(_))));
    }

    #[test]
    fn a_fixed_point_examples() {
        let a = a_fixed_point(4.0 * LN2, 3.0).unwrap();
        assert!((a - 2.0 / 3.0).abs() < 1e-12, "{a}");
        let a = a_fixed_point(2.9, 3.0).unwrap();
        let resid = (2.0 * a / (1.0 - a)).ln() - 2.9 * (a - (1.0 - a) / 2.0);
        assert!(resid.abs() < 1e-10 && a > 1.0 / 3.0 && a < 1.0);
        assert!(matches!(
            a_fixed_point(2.0, 3.0),
            Err(Error::NoOrderedFixedPoint { .. })
        ));
        assert!(matches!(a_fixed_point(2.9, 2.5), Err(Error::NonIntegerQ(_))));
    }

    #[test]
    fn ordered_fixed_point_is_supercritical_class() {
        for &l in &[2.75, 4.0 * LN2, 2.9, 3.5] {
            let a = a_fixed_point(l, 3.0).unwrap();
            let b = (1.0 - a) / 2.0;
            assert!(l * a > 1.0 && l * b < 1.0, "lambda={l}");
        }
    }

    #[test]
    fn sw_drift_examples() {
        assert_eq!(sw_drift(0.2, 3.0, 3.0), 1.0 / 3.0);
        assert_eq!(sw_drift(1.0 / 3.0, 2.9, 3.0), 1.0 / 3.0);
        assert!((sw_drift(2.0 / 3.0, 4.0 * LN2, 3.0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((sw_drift(1.0, 1e6, 3.0) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sw_drift_fixed_point_and_stability() {
        for &l in &[2.75, 4.0 * LN2, 2.9] {
            let a = a_fixed_point(l, 3.0).unwrap();
            assert!((sw_drift(a, l, 3.0) - a).abs() < 1e-8);
            let h = 1e-6;
            let d = (sw_drift(a + h, l, 3.0) - sw_drift(a - h, l, 3.0)) / (2.0 * h);
            assert!(d.abs() < 1.0, "lambda={l} F'={d}");
        }
    }

    #[test]
    fn sw_drift_monotone_above_threshold() {
        let l = 2.9;
        let mut prev = sw_drift(1.0 / l + 1e-9, l, 3.0);
        for i in 1..=1000 {
            let z = 1.0 / l + i as f64 * (1.0 - 1.0 / l) / 1000.0;
            let f = sw_drift(z, l, 3.0);
            assert!(f >= prev - 1e-15);
            prev = f;
        }
    }

    #[test]
    fn cm_drift_examples() {
        let l = 4.0 * LN2;
        let tr = theta_r(l, 3.0).unwrap();
        assert!((cm_drift(tr, l, 3.0) - tr).abs() < 1e-10);
        // activated set subcritical: lambda (1 + 2 theta)/3 <= 1
        assert_eq!(cm_drift(0.01, l, 3.0), 0.0);
        let tm = theta_min(l, 3.0);
        assert!((tm - (3.0 - 4.0 * LN2) / (8.0 * LN2)).abs() < 1e-15);
        assert!((tm - 0.0410).abs() < 1e-4);
        assert!((l * (tm + (1.0 - tm) / 3.0) - 1.0).abs() < 1e-12);
        assert_eq!(cm_drift(tm, l, 3.0), 0.0);
    }

    #[test]
    fn theta_star_examples() {
        let l = 4.0 * LN2;
        let ts = theta_star(l, 3.0).unwrap();
        let tr = theta_r(l, 3.0).unwrap();
        assert!(ts > theta_min(l, 3.0) && ts < tr);
        assert!(cm_g(ts, l, 3.0).abs() < 1e-10);
        assert!(cm_g(0.5 * (ts + tr), l, 3.0) > 0.0);
        assert!(matches!(theta_star(2.5, 3.0), Err(Error::Regime(_))));
        assert!(matches!(theta_star(3.2, 3.0), Err(Error::Regime(_))));
    }

    #[test]
    fn drift_fixed_points_residuals() {
        for &l in &[2.75, 4.0 * LN2, 2.9] {
            let fp = DriftFixedPoints::compute(l, 3.0).unwrap();
            assert!(cm_g(fp.theta_r, l, 3.0).abs() < 1e-8);
            assert!(cm_g(fp.theta_star, l, 3.0).abs() < 1e-8);
            assert!(fp.theta_min <= fp.theta_star && fp.theta_star < fp.theta_r);
            assert!(fp.theta_r <= 1.0);
            let a = fp.a_lambda.unwrap();
            assert!((sw_drift(a, l, 3.0) - a).abs() < 1e-8);
            assert!((fp.b_lambda.unwrap() - (1.0 - a) / 2.0).abs() < 1e-15);
        }
        let fp = DriftFixedPoints::compute(critical_points(2.5).unwrap().lambda_c, 2.5).unwrap();
        assert!(fp.a_lambda.is_none());
    }
}

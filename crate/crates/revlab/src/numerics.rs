//! Scalar kernels shared by every module: logistic/logit pair, bracketed
//! root finding, weighted isotonic regression (PAVA), weighted least squares,
//! and log-sum-exp. Generic over the floating scalar so the same kernels run
//! at f32 or f64; the lattice layers use the crate-level [`crate::Real`] alias.

use num_traits::Float;

/// Floating scalar the kernels are generic over.
pub trait Scalar: Float + num_traits::FromPrimitive + Send + Sync + core::fmt::Debug {
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("constant representable")
    }
}
impl<T> Scalar for T where T: Float + num_traits::FromPrimitive + Send + Sync + core::fmt::Debug {}

/// Clamp bound for probabilities before taking logits.
pub fn prob_eps<R: Scalar>() -> R {
    R::c(1e-15)
}

/// Logistic function Λ(z) = 1/(1+e^{-z}). The negative branch is defined as
/// the complement of the positive one, which makes the point symmetry
/// Λ(z)+Λ(-z) = 1 hold exactly in floating point (1-q is exact for q ≥ ½).
pub fn logistic<R: Scalar>(z: R) -> R {
    let q = R::one() / (R::one() + (-z.abs()).exp());
    if z >= R::zero() {
        q
    } else {
        R::one() - q
    }
}

/// logit(q) = ln(q/(1-q)) with input clamped to [ε, 1-ε], ε = 1e-15.
pub fn logit<R: Scalar>(q: R) -> R {
    let eps = prob_eps::<R>();
    let q = q.max(eps).min(R::one() - eps);
    q.ln() - (-q).ln_1p()
}

/// Whether a probability sits outside the clamp range (so its logit saturates).
pub fn saturates<R: Scalar>(q: R) -> bool {
    let eps = prob_eps::<R>();
    q < eps || q > R::one() - eps
}

/// A value plus a flag recording that a logit clamp fired somewhere upstream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flagged<T> {
    pub value: T,
    pub saturated: bool,
}

impl<T> Flagged<T> {
    pub fn clean(value: T) -> Self {
        Flagged { value, saturated: false }
    }
}

/// log(Σ exp(aᵢ)) over a slice, stable against underflow. Empty input gives -∞.
pub fn logsumexp<R: Scalar>(a: &[R]) -> R {
    let m = a.iter().cloned().fold(R::neg_infinity(), R::max);
    if !m.is_finite() {
        return m;
    }
    let s = a.iter().fold(R::zero(), |acc, &x| acc + (x - m).exp());
    m + s.ln()
}

/// Bracketed hybrid root finder (bisection-safeguarded secant) for a strictly
/// monotone decreasing f on [lo, hi]. Requires f(lo) ≥ 0 ≥ f(hi). Returns the
/// abscissa once the interval or |f| drops below `tol`.
pub fn brent_decreasing<R: Scalar>(
    mut lo: R,
    mut hi: R,
    tol: R,
    max_iter: usize,
    mut f: impl FnMut(R) -> R,
) -> R {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo <= R::zero() {
        return lo;
    }
    if fhi >= R::zero() {
        return hi;
    }
    let mut x = (lo + hi) * R::c(0.5);
    for it in 0..max_iter {
        let mid = (lo + hi) * R::c(0.5);
        // bisection on even steps guarantees progress; secant on odd steps
        // accelerates once the bracket is tight
        let mut cand = if it % 2 == 0 {
            mid
        } else {
            let denom = flo - fhi;
            if denom.abs() > R::zero() && denom.is_finite() {
                lo + (hi - lo) * (flo / denom)
            } else {
                mid
            }
        };
        if !(cand > lo && cand < hi) || !cand.is_finite() {
            cand = mid;
        }
        let fc = f(cand);
        if fc > R::zero() {
            lo = cand;
            flo = fc;
        } else {
            hi = cand;
            fhi = fc;
        }
        x = (lo + hi) * R::c(0.5);
        if (hi - lo).abs() < tol || fc.abs() < tol {
            return if fc.abs() < tol { cand } else { x };
        }
    }
    x
}

/// Weighted pool-adjacent-violators: projects `y` onto the nondecreasing cone
/// under weights `w`, in place. Standard stack formulation.
pub fn pava_nondecreasing<R: Scalar>(y: &mut [R], w: &[R]) {
    debug_assert_eq!(y.len(), w.len());
    let n = y.len();
    if n < 2 {
        return;
    }
    // (value, weight, count) blocks
    let mut vals: Vec<R> = Vec::with_capacity(n);
    let mut wts: Vec<R> = Vec::with_capacity(n);
    let mut cnt: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        vals.push(y[i]);
        wts.push(w[i]);
        cnt.push(1);
        while vals.len() > 1 && vals[vals.len() - 2] > vals[vals.len() - 1] {
            let (v2, w2, c2) = (vals.pop().unwrap(), wts.pop().unwrap(), cnt.pop().unwrap());
            let (v1, w1, c1) = (vals.pop().unwrap(), wts.pop().unwrap(), cnt.pop().unwrap());
            let wsum = w1 + w2;
            let merged = if wsum > R::zero() {
                (v1 * w1 + v2 * w2) / wsum
            } else {
                (v1 + v2) * R::c(0.5)
            };
            vals.push(merged);
            wts.push(wsum);
            cnt.push(c1 + c2);
        }
    }
    let mut k = 0;
    for (v, c) in vals.iter().zip(cnt.iter()) {
        for _ in 0..*c {
            y[k] = *v;
            k += 1;
        }
    }
}

/// Weighted least-squares line fit of y on x; also returns the weighted R².
#[derive(Debug, Clone, Copy)]
pub struct WlsFit<R> {
    pub slope: R,
    pub intercept: R,
    pub r2: R,
    pub n: usize,
}

/// Single-pass weighted regression. Returns None when either variable has zero
/// weighted variance (degenerate regression).
pub fn wls<R: Scalar>(xs: &[R], ys: &[R], ws: &[R]) -> Option<WlsFit<R>> {
    let wsum = ws.iter().fold(R::zero(), |a, &w| a + w);
    if !(wsum > R::zero()) {
        return None;
    }
    let mut xm = R::zero();
    let mut ym = R::zero();
    for i in 0..xs.len() {
        xm = xm + ws[i] * xs[i];
        ym = ym + ws[i] * ys[i];
    }
    xm = xm / wsum;
    ym = ym / wsum;
    let (mut sxx, mut syy, mut sxy) = (R::zero(), R::zero(), R::zero());
    for i in 0..xs.len() {
        let dx = xs[i] - xm;
        let dy = ys[i] - ym;
        sxx = sxx + ws[i] * dx * dx;
        syy = syy + ws[i] * dy * dy;
        sxy = sxy + ws[i] * dx * dy;
    }
    if !(sxx > R::zero()) || !(syy > R::zero()) {
        return None;
    }
    Some(WlsFit {
        slope: sxy / sxx,
        intercept: ym - (sxy / sxx) * xm,
        r2: (sxy * sxy) / (sxx * syy),
        n: xs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn logistic_logit_round_trip() {
        // through a stored f64 probability the inverse direction holds to
        // 1e-10 only while q(1-q) stays above ~1e-6, i.e. |z| up to ~13
        for i in -13..=13 {
            let z = i as f64;
            assert_abs_diff_eq!(logit(logistic(z)), z, epsilon = 1e-10);
        }
        // the stable direction is tight across the whole clamp range
        for i in 1..100 {
            let q = i as f64 / 100.0;
            assert_abs_diff_eq!(logistic(logit(q)), q, epsilon = 1e-14);
        }
    }

    #[test]
    fn logistic_point_symmetry_exact() {
        for &z in &[0.0, 0.3, 1.0, 4.5, 17.0] {
            let s: f64 = logistic(z) + logistic(-z);
            assert_eq!(s, 1.0);
        }
    }

    #[test]
    fn logit_clamps_and_flags() {
        assert!(logit(0.0_f64).is_finite());
        assert!(logit(1.0_f64).is_finite());
        assert!(saturates(1e-16_f64));
        assert!(!saturates(0.5_f64));
    }

    #[test]
    fn brent_finds_monotone_root() {
        let root = brent_decreasing(-40.0, 40.0, 1e-13, 200, |t: f64| 3.0 - t);
        assert_abs_diff_eq!(root, 3.0, epsilon = 1e-10);
    }

    #[test]
    fn pava_idempotent_and_pools_pairs() {
        let mut y = vec![2.0, 1.0];
        pava_nondecreasing(&mut y, &[1.0, 3.0]);
        assert_abs_diff_eq!(y[0], 1.25, epsilon = 1e-14);
        assert_eq!(y[0], y[1]);
        let mut z = vec![0.1, 0.5, 0.9];
        let before = z.clone();
        pava_nondecreasing(&mut z, &[1.0, 1.0, 1.0]);
        assert_eq!(z, before);
    }

    #[test]
    fn wls_affine_is_exact() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let ws = vec![0.1; 10];
        let fit = wls(&xs, &ys, &ws).unwrap();
        assert_abs_diff_eq!(fit.slope, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn wls_degenerate_is_none() {
        let xs = vec![1.0, 1.0, 1.0];
        let ys = vec![0.0, 1.0, 2.0];
        let ws = vec![1.0, 1.0, 1.0];
        assert!(wls(&xs, &ys, &ws).is_none());
    }
}

//! Shared numerical kernels: bracketed root finding, adaptive quadrature,
//! and the Lambert W function.
//!
//! Everything here is deterministic and allocation-free so the callers in the
//! tail/divergence solvers can treat these as cheap primitives.

use thiserror::Error;

/// Errors surfaced by the numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    /// The supplied interval does not bracket a sign change.
    #[error("root is not bracketed: f({a}) = {fa}, f({b}) = {fb}")]
    NotBracketed { a: f64, b: f64, fa: f64, fb: f64 },
    /// The iteration hit its step budget before reaching tolerance.
    #[error("{what} failed to converge within {max_iter} iterations")]
    NoConvergence { what: &'static str, max_iter: usize },
    /// The quadrature error estimate stayed above tolerance at maximal depth.
    #[error("quadrature did not reach tolerance {tol:.3e} (estimate {estimate:.3e})")]
    QuadratureTolerance { tol: f64, estimate: f64 },
    /// A function evaluation produced NaN where a finite value was required.
    #[error("non-finite function value at x = {x}")]
    NonFinite { x: f64 },
    /// Argument outside the domain of the function.
    #[error("argument {x} outside domain of {what}")]
    Domain { what: &'static str, x: f64 },
}

/// Brent's method on `[a, b]` with `f(a)` and `f(b)` of opposite sign.
///
/// Combines bisection, secant, and inverse quadratic steps; the bracket never
/// widens, so a sign change in the input guarantees an answer. `rel_tol` is
/// measured against the bracket scale `max(|a|, |b|, 1)`, which suits the
/// log-space solves in this crate where roots can sit anywhere in the bracket
/// including at 0.
pub fn brent_root<F>(mut f: F, x1: f64, x2: f64, rel_tol: f64, max_iter: usize) -> Result<f64, NumericsError>
where
    F: FnMut(f64) -> f64,
{
    let mut a = x1;
    let mut b = x2;
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !fa.is_finite() {
        return Err(NumericsError::NonFinite { x: a });
    }
    if !fb.is_finite() {
        return Err(NumericsError::NonFinite { x: b });
    }
    if fa.signum() == fb.signum() {
        return Err(NumericsError::NotBracketed { a, b, fa, fb });
    }
    let abs_tol = rel_tol * x1.abs().max(x2.abs()).max(1.0);
    let mut c = b;
    let mut fc = fb;
    let mut d = b - a;
    let mut e = b - a;
    for _ in 0..max_iter {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * abs_tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (2.0 * xm * s, 1.0 - s)
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                (
                    s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0)),
                    (qq - 1.0) * (r - 1.0) * (s - 1.0),
                )
            };
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        if d.abs() > tol1 {
            b += d;
        } else {
            b += tol1.copysign(xm);
        }
        fb = f(b);
        if !fb.is_finite() {
            return Err(NumericsError::NonFinite { x: b });
        }
    }
    Err(NumericsError::NoConvergence { what: "brent_root", max_iter })
}

/// Plain bisection to relative tolerance `rel_tol` on the abscissa.
///
/// Slower than [`brent_root`] but with a trivially auditable contraction
/// argument; the test oracles use it as the independent reference solver.
pub fn bisect_root<F>(mut f: F, a: f64, b: f64, rel_tol: f64, max_iter: usize) -> Result<f64, NumericsError>
where
    F: FnMut(f64) -> f64,
{
    let (mut lo, mut hi) = (a, b);
    let flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(NumericsError::NotBracketed { a, b, fa: flo, fb: fhi });
    }
    let rising = fhi > 0.0;
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= rel_tol * mid.abs().max(f64::MIN_POSITIVE) {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

// Gauss-Kronrod 7-15 nodes/weights on [-1, 1] (symmetric; positive half listed).
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One Gauss-Kronrod 7-15 panel over `[a, b]`; returns (estimate, error).
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let fsum = f(mid - dx) + f(mid + dx);
        kronrod += WGK[j] * fsum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * fsum;
        }
    }
    kronrod *= half;
    gauss *= half;
    (kronrod, (kronrod - gauss).abs())
}

/// Adaptive Gauss-Kronrod quadrature of `f` over the finite interval `[a, b]`
/// to absolute tolerance `abs_tol`.
///
/// Panels are bisected while their error estimate exceeds their share of the
/// budget. Integrand values must be finite at interior nodes (endpoints are
/// never evaluated, so integrable edge behavior is fine).
pub fn integrate<F>(mut f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64, NumericsError>
where
    F: FnMut(f64) -> f64,
{
    if a == b {
        return Ok(0.0);
    }
    // Work stack of (lo, hi, budget); depth is bounded by budget subdivision.
    let mut stack = vec![(a, b, abs_tol)];
    let mut total = 0.0;
    let mut worst = 0.0_f64;
    let mut panels = 0usize;
    while let Some((lo, hi, budget)) = stack.pop() {
        panels += 1;
        if panels > 100_000 {
            return Err(NumericsError::QuadratureTolerance { tol: abs_tol, estimate: worst });
        }
        let (est, err) = gk15(&mut f, lo, hi);
        if !est.is_finite() {
            return Err(NumericsError::NonFinite { x: 0.5 * (lo + hi) });
        }
        let width = hi - lo;
        if err <= budget || width.abs() <= 1e-14 * (lo.abs() + hi.abs()).max(1e-300) {
            total += est;
            worst = worst.max(err);
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * budget));
            stack.push((mid, hi, 0.5 * budget));
        }
    }
    Ok(total)
}

/// Adaptive quadrature over a possibly right-infinite interval.
///
/// Infinite upper limits are folded through `x = a + t/(1-t)`, `t ∈ (0, 1)`.
pub fn integrate_to_inf<F>(mut f: F, a: f64, b: f64, abs_tol: f64) -> Result<f64, NumericsError>
where
    F: FnMut(f64) -> f64,
{
    if b.is_finite() {
        return integrate(f, a, b, abs_tol);
    }
    integrate(
        move |t: f64| {
            let u = 1.0 - t;
            let x = a + t / u;
            f(x) / (u * u)
        },
        0.0,
        1.0,
        abs_tol,
    )
}

/// Principal-branch Lambert W on `x ≥ -1/e`: the solution of `w·e^w = x`
/// with `w ≥ -1`.
///
/// Halley iteration from a regime-appropriate seed (branch-point series below
/// -1/4, power series near 0, log-based above e); for very large arguments
/// the defining equation is solved in log form (`w + ln w = ln x`) so nothing
/// overflows. Converges to ~1e-14 relative away from the branch point.
pub fn lambert_w0(x: f64) -> Result<f64, NumericsError> {
    const NEG_INV_E: f64 = -0.367_879_441_171_442_33;
    if !(x >= NEG_INV_E) {
        // Tolerate roundoff-level excursions below the branch point.
        if x >= NEG_INV_E - 1e-12 {
            return Ok(-1.0);
        }
        return Err(NumericsError::Domain { what: "lambert_w0", x });
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x > 1e10 {
        return lambert_w0_log(x.ln());
    }
    // Initial guess: branch-point expansion in p = √(2(1+ex)) for strongly
    // negative x, series near 0, log-based above e.
    let mut w = if x < -0.25 {
        let p = (2.0 * (1.0 + std::f64::consts::E * x)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < std::f64::consts::E {
        let g = x / std::f64::consts::E;
        if g.abs() < 1e-4 {
            x * (1.0 - x)
        } else {
            // One secant-quality guess is enough as a Halley seed.
            x / (1.0 + x)
        }
    } else {
        let lx = x.ln();
        lx - lx.ln().max(0.0)
    };
    for _ in 0..60 {
        let ew = w.exp();
        let wew = w * ew;
        let fx = wew - x;
        let denom = ew * (w + 1.0) - (w + 2.0) * fx / (2.0 * w + 2.0);
        let step = fx / denom;
        if !step.is_finite() {
            // Degenerate Halley denominator only occurs at the branch point,
            // where the seed is already series-accurate.
            return Ok(w);
        }
        w -= step;
        if step.abs() <= 1e-15 * w.abs().max(1e-300) {
            return Ok(w);
        }
    }
    Err(NumericsError::NoConvergence { what: "lambert_w0", max_iter: 60 })
}

/// Lambert W from the *logarithm* of the argument: solves `w + ln w = ln_x`,
/// i.e. `W(exp(ln_x))`, usable when the argument itself would overflow f64.
///
/// Requires `ln_x ≥ 2` (w ≥ 1.37), where the Newton iteration on the log form
/// converges monotonically; below that call [`lambert_w0`] on the raw value.
pub fn lambert_w0_log(ln_x: f64) -> Result<f64, NumericsError> {
    if !(ln_x >= 2.0) {
        return Err(NumericsError::Domain { what: "lambert_w0_log", x: ln_x });
    }
    // Newton on g(w) = w + ln w - ln_x; g' = 1 + 1/w.
    let mut w = (ln_x - ln_x.ln()).max(1.0);
    for _ in 0..60 {
        let g = w + w.ln() - ln_x;
        let step = g * w / (w + 1.0);
        w -= step;
        if step.abs() <= 1e-15 * w {
            return Ok(w);
        }
    }
    Err(NumericsError::NoConvergence { what: "lambert_w0_log", max_iter: 60 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_simple_roots() {
        let r = brent_root(|x| x * x - 2.0, 0.0, 2.0, 1e-14, 200).unwrap();
        assert!((r - std::f64::consts::SQRT_2).abs() < 1e-12);
        let r = brent_root(|x| x.cos() - x, 0.0, 1.0, 1e-14, 200).unwrap();
        assert!((r - 0.7390851332151607).abs() < 1e-12);
    }

    #[test]
    fn brent_rejects_unbracketed_input() {
        let err = brent_root(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 100).unwrap_err();
        assert!(matches!(err, NumericsError::NotBracketed { .. }));
    }

    #[test]
    fn bisect_matches_brent() {
        let f = |x: f64| x.exp() - 5.0;
        let rb = brent_root(f, 0.0, 3.0, 1e-14, 200).unwrap();
        let ri = bisect_root(f, 0.0, 3.0, 1e-12, 200).unwrap();
        assert!((rb - ri).abs() < 1e-10);
        assert!((rb - 5.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn quadrature_hits_known_integrals() {
        let v = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-10).unwrap();
        assert!((v - 2.0).abs() < 1e-10);
        // Integrable endpoint singularity.
        let v = integrate(|x| x.powf(-0.5), 0.0, 1.0, 1e-8).unwrap();
        assert!((v - 2.0).abs() < 1e-6);
    }

    #[test]
    fn quadrature_handles_infinite_upper_limit() {
        let v = integrate_to_inf(|x| (-x).exp(), 0.0, f64::INFINITY, 1e-10).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
        // Standard normal mass above 0 folded to infinity.
        let inv_sqrt_2pi = (2.0 * std::f64::consts::PI).sqrt().recip();
        let v = integrate_to_inf(|x| inv_sqrt_2pi * (-0.5 * x * x).exp(), 0.0, f64::INFINITY, 1e-10).unwrap();
        assert!((v - 0.5).abs() < 1e-9);
    }

    #[test]
    fn lambert_w_satisfies_defining_identity() {
        // Identity W(x)·exp(W(x)) = x to 1e-12 relative across the heavy-use range.
        let mut x = 1e-6;
        while x <= 1e12 {
            let w = lambert_w0(x).unwrap();
            let back = if w < 700.0 { w * w.exp() } else { f64::INFINITY };
            assert!(
                (back - x).abs() <= 1e-12 * x,
                "identity failure at x = {x:e}: w = {w}, w e^w = {back:e}"
            );
            x *= 3.7;
        }
    }

    #[test]
    fn lambert_w_known_values() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        let w1 = lambert_w0(1.0).unwrap();
        assert!((w1 - 0.5671432904097838).abs() < 1e-14);
        let we = lambert_w0(std::f64::consts::E).unwrap();
        assert!((we - 1.0).abs() < 1e-14);
        // Very large argument goes through the log-form branch.
        let w = lambert_w0(1e300).unwrap();
        assert!((w + w.ln() - 300.0 * 10.0_f64.ln()).abs() < 1e-12 * 700.0);
    }

    #[test]
    fn lambert_w_log_form_agrees_and_extends() {
        for &x in &[1e2, 1e6, 1e10, 1e300] {
            let direct = lambert_w0(x).unwrap();
            let via_log = lambert_w0_log(x.ln()).unwrap();
            assert!((via_log / direct - 1.0).abs() < 1e-13, "x = {x:e}");
        }
        // Beyond f64 range: check the defining log-form identity directly.
        let w = lambert_w0_log(5000.0).unwrap();
        assert!((w + w.ln() - 5000.0).abs() < 1e-9);
        assert!(lambert_w0_log(0.5).is_err());
    }

    #[test]
    fn lambert_w_rejects_negative() {
        assert!(matches!(lambert_w0(-0.5), Err(NumericsError::Domain { .. })));
    }

    #[test]
    fn lambert_w_negative_branch() {
        // Principal branch on [-1/e, 0): identity roundtrip and w ≥ -1.
        for &x in &[-0.367, -0.36, -0.3, -0.25, -0.2, -0.05, -1e-4, -1e-8] {
            let w = lambert_w0(x).unwrap();
            assert!((-1.0..0.0).contains(&w), "x = {x}: w = {w}");
            let back = w * w.exp();
            assert!(
                (back - x).abs() <= 1e-11 * x.abs(),
                "identity failure at x = {x}: w = {w}, w e^w = {back}"
            );
        }
        // At the branch point itself the series seed returns ≈ -1.
        let w = lambert_w0(-(-1.0f64).exp()).unwrap();
        assert!((w + 1.0).abs() < 2e-6, "w(-1/e) = {w}");
    }
}

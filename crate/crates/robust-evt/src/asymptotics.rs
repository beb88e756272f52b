//! Shape of worst-case tails: the transformed shape parameter γ*, analytic
//! envelopes that sandwich the exact worst-case tail, and a log-log slope
//! estimator for verifying tail indices numerically.
//!
//! Over a GEV reference with shape γ_ref and a divergence ball of order
//! α > 1, the worst-case tail again has generalized-extreme-value decay with
//! shape γ* = α/(α-1)·γ_ref. The KL ball (α = 1) is qualitatively different:
//! over a Gumbel reference the worst-case tail is regularly varying with
//! Fréchet index 1, and over any other reference it decays only
//! logarithmically, leaving every GEV domain of attraction.
//!
//! The envelopes come from keeping only one branch of the two-point budget
//! identity. Dropping the off-event term gives the upper form
//! `h(A)·A, h(t) = φ_α⁻¹(δ̄/t)`, a true pointwise bound for α > 1 (where the
//! dropped term is nonnegative) and an asymptotic equivalent that the exact
//! tail approaches from above for α = 1. The lower form
//! `g(A)·A, g(t) = a·φ_α⁻¹(c·(1-ln t)⁻²/t)` is the tail of an explicit
//! mixture witness; it certifies a lower bound only when that mixture
//! verifiably lies inside the ball, so the mixing constants are explicit
//! inputs and feasibility is checked by quadrature rather than assumed.

use crate::divergence::{phi_alpha_inv, DivergenceError, DivergenceSpec};
use crate::gev::{gev_tail, GevParams};
use crate::numerics::{self, NumericsError};
use std::cell::Cell;
use thiserror::Error;

/// Errors from envelope construction and slope estimation.
#[derive(Debug, Error)]
pub enum AsymptoticsError {
    /// The confidence-interval rule for α is stated only for γ₀ > 0.
    #[error("alpha-from-interval rule needs shape gamma0 > 0 (got {gamma0}); supply alpha directly")]
    NonPositiveShape { gamma0: f64 },
    /// Interval half-width must be a positive real.
    #[error("interval half-width epsilon = {epsilon} must be finite and > 0")]
    InvalidEpsilon { epsilon: f64 },
    /// Envelopes need a nondegenerate reference tail at the threshold.
    #[error("reference tail probability at x = {x} is {tail}; need strictly inside (0,1)")]
    DegenerateTail { x: f64, tail: f64 },
    /// Mixture constants outside their domain.
    #[error("mixture constants a = {a}, c = {c} must satisfy 0 < a < 1 and c > 0")]
    InvalidMixture { a: f64, c: f64 },
    /// The unnormalized witness carries more than unit mass at this weight.
    #[error("mixture component mass a*Z = {mass} reaches 1; shrink the mixing weight")]
    MixtureExceedsUnitMass { mass: f64 },
    /// The witness mixture lies outside the divergence ball.
    #[error("mixture divergence {divergence} exceeds the budget delta = {delta}")]
    InfeasibleMixture { divergence: f64, delta: f64 },
    /// Slope estimation needs a strictly increasing positive grid of ≥ 2 points.
    #[error("grid must be strictly increasing and positive with at least 2 points")]
    InvalidGrid,
    /// Too much of the grid underflowed to fit a slope.
    #[error("tail underflowed on {unusable} of {total} grid points; slope fit degenerate")]
    DegenerateFit { unusable: usize, total: usize },
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Tail regime of the worst-case distribution over a divergence ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WorstCaseShape {
    /// α > 1: the worst case stays in a GEV domain of attraction, with
    /// shape α/(α-1)·γ_ref (any sign, including 0).
    Finite { gamma_star: f64 },
    /// α = 1 over a Gumbel reference: regularly varying with Fréchet
    /// index 1, i.e. effective shape 1.
    KlOverGumbel,
    /// α = 1 over a non-Gumbel reference: logarithmic tail decay, outside
    /// every GEV domain of attraction.
    KlLogarithmic,
}

impl WorstCaseShape {
    /// Effective worst-case shape when one exists: the transformed value for
    /// `Finite`, 1 for `KlOverGumbel`, none for the logarithmic regime.
    pub fn gamma_star(&self) -> Option<f64> {
        match self {
            WorstCaseShape::Finite { gamma_star } => Some(*gamma_star),
            WorstCaseShape::KlOverGumbel => Some(1.0),
            WorstCaseShape::KlLogarithmic => None,
        }
    }
}

/// Classify the worst-case tail regime for ball order `alpha` ≥ 1 and
/// reference shape `gamma_ref`. Shapes within 1e-9 of zero count as Gumbel,
/// matching the evaluation branch of the GEV functions.
pub fn gamma_star(alpha: f64, gamma_ref: f64) -> WorstCaseShape {
    assert!(
        alpha.is_finite() && alpha >= 1.0,
        "ball order alpha = {alpha} outside [1, inf)"
    );
    if alpha == 1.0 {
        if gamma_ref.abs() < 1e-9 {
            WorstCaseShape::KlOverGumbel
        } else {
            WorstCaseShape::KlLogarithmic
        }
    } else {
        WorstCaseShape::Finite {
            gamma_star: alpha / (alpha - 1.0) * gamma_ref,
        }
    }
}

/// Ball order α matching a shape confidence interval: the α > 1 with
/// worst-case shape γ₀·α/(α-1) equal to the interval's upper end γ₀+ε,
/// namely α = (γ₀+ε)/ε. Stated only for γ₀ > 0; other shapes are rejected
/// rather than extrapolated.
pub fn choose_alpha(gamma0: f64, epsilon: f64) -> Result<f64, AsymptoticsError> {
    if !gamma0.is_finite() || gamma0 <= 0.0 {
        return Err(AsymptoticsError::NonPositiveShape { gamma0 });
    }
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(AsymptoticsError::InvalidEpsilon { epsilon });
    }
    Ok((gamma0 + epsilon) / epsilon)
}

/// One-branch tail envelope `h(A(x))·A(x)` with `h(t) = φ_α⁻¹(δ̄/t)`,
/// capped at 1.
///
/// For α > 1 this dominates the exact worst-case tail at every threshold
/// (the dropped budget term is nonnegative). For α = 1 it is only an
/// asymptotic equivalent: the exact tail exceeds it at every finite
/// threshold and approaches it from above as A → 0 (ratio 1 + O(1/ln(δ/A))).
pub fn upper_envelope(
    x: f64,
    model: &GevParams,
    spec: &DivergenceSpec,
) -> Result<f64, AsymptoticsError> {
    let a = gev_tail(x, model);
    if !(a > 0.0 && a < 1.0) {
        return Err(AsymptoticsError::DegenerateTail { x, tail: a });
    }
    let h = phi_alpha_inv(spec.delta_bar() / a, spec.alpha())?;
    Ok((h * a).min(1.0))
}

/// Witness-mixture tail envelope `g(A(x))·A(x)` with
/// `g(t) = a·φ_α⁻¹(c·(1-ln t)⁻²/t)`, certified by construction.
///
/// The witness is the mixture `a·Q_c + (1-a·Z)·P_ref`, where `Q_c` has
/// likelihood ratio `φ_α⁻¹(c·(1-ln A(y))⁻²/A(y))` against the reference and
/// `Z` is its total mass. The ratio increases toward the tail, so the
/// mixture's tail beyond x is at least `g(A(x))·A(x)`; whenever the mixture
/// passes the quadrature divergence check it is a member of the ball, making
/// the returned value a certified lower bound on the worst-case tail.
/// Feasibility is the caller's burden via (a, c): infeasible constants are
/// an error, not a silent extrapolation.
pub fn lower_envelope(
    x: f64,
    model: &GevParams,
    spec: &DivergenceSpec,
    a: f64,
    c: f64,
) -> Result<f64, AsymptoticsError> {
    if !a.is_finite() || !c.is_finite() || !(a > 0.0 && a < 1.0) || !(c > 0.0) {
        return Err(AsymptoticsError::InvalidMixture { a, c });
    }
    let tail_x = gev_tail(x, model);
    if !(tail_x > 0.0 && tail_x < 1.0) {
        return Err(AsymptoticsError::DegenerateTail { x, tail: tail_x });
    }
    let alpha = spec.alpha();
    let ln_c = c.ln();

    // Everything the gate needs is a function of the reference tail level
    // t = A(Y), which is uniform on (0,1) under the reference, so both gate
    // integrals reduce exactly to one-dimensional integrals in s = -ln t.
    // Working in logs of s keeps every integrand finite at any depth: the
    // tails decay rationally in s and the full mass is captured, with no
    // underflow cut. Root-finder failures inside quadrature closures are
    // deferred and rechecked after each integral.
    let deferred = Cell::new(None::<NumericsError>);
    let ln_ratio = |s: f64| -> f64 {
        // ln φ_α⁻¹(y) at ln y = ln c + s - 2·ln(1+s).
        let ln_y = ln_c + s - 2.0 * (1.0 + s).ln();
        if alpha > 1.0 {
            ln_y / alpha
        } else {
            let w = if ln_y >= 2.0 {
                numerics::lambert_w0_log(ln_y)
            } else {
                numerics::lambert_w0(ln_y.exp())
            };
            match w {
                Ok(w) => ln_y - w.ln(),
                Err(e) => {
                    deferred.set(Some(e));
                    0.0
                }
            }
        }
    };
    let z = numerics::integrate_to_inf(|s: f64| (ln_ratio(s) - s).exp(), 0.0, f64::INFINITY, 1e-10)?;
    if let Some(e) = deferred.take() {
        return Err(e.into());
    }
    let mass = a * z;
    if mass >= 1.0 {
        return Err(AsymptoticsError::MixtureExceedsUnitMass { mass });
    }

    let base = 1.0 - mass;
    let (ln_a, ln_base) = (a.ln(), base.ln());
    let log_mix = |s: f64| -> f64 {
        // ln(a·r(s) + base), stable for any magnitude of r.
        let u = ln_a + ln_ratio(s);
        let m = u.max(ln_base);
        m + ((u - m).exp() + (ln_base - m).exp()).ln()
    };
    let div = if alpha == 1.0 {
        numerics::integrate_to_inf(
            |s: f64| {
                let lm = log_mix(s);
                (lm - s).exp() * lm
            },
            0.0,
            f64::INFINITY,
            1e-10,
        )?
    } else {
        let power = numerics::integrate_to_inf(
            |s: f64| (alpha * log_mix(s) - s).exp(),
            0.0,
            f64::INFINITY,
            1e-10,
        )?;
        power.ln() / (alpha - 1.0)
    };
    if let Some(e) = deferred.take() {
        return Err(e.into());
    }
    let div = div.max(0.0);
    if div > spec.delta() {
        return Err(AsymptoticsError::InfeasibleMixture {
            divergence: div,
            delta: spec.delta(),
        });
    }
    let r_at_x = phi_alpha_inv(c / (tail_x * (1.0 - tail_x.ln()).powi(2)), alpha)?;
    Ok((a * r_at_x * tail_x).min(1.0))
}

/// Least-squares slope of `ln tail_fn(x)` against `ln x` over a strictly
/// increasing positive grid: ≈ -1/γ for a Fréchet-domain tail with shape γ.
/// Grid points where the tail underflows (or is otherwise not a positive
/// finite number) are skipped; more than half the grid unusable is an error.
pub fn tail_index_estimate<F>(tail_fn: F, x_grid: &[f64]) -> Result<f64, AsymptoticsError>
where
    F: Fn(f64) -> f64,
{
    if x_grid.len() < 2
        || x_grid.iter().any(|&x| !x.is_finite() || x <= 0.0)
        || x_grid.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(AsymptoticsError::InvalidGrid);
    }
    let mut points = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let t = tail_fn(x);
        if t.is_finite() && t > 0.0 {
            points.push((x.ln(), t.ln()));
        }
    }
    let unusable = x_grid.len() - points.len();
    if 2 * unusable > x_grid.len() || points.len() < 2 {
        return Err(AsymptoticsError::DegenerateFit {
            unusable,
            total: x_grid.len(),
        });
    }
    let n = points.len() as f64;
    let mean_x: f64 = points.iter().map(|(u, _)| u).sum::<f64>() / n;
    let mean_y: f64 = points.iter().map(|(_, v)| v).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(u, v) in &points {
        sxx += (u - mean_x) * (u - mean_x);
        sxy += (u - mean_x) * (v - mean_y);
    }
    Ok(sxy / sxx)
}

/// Log-spaced grid of `n ≥ 2` points from `lo` to `hi` (0 < lo < hi),
/// endpoints included.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi > lo, "need n >= 2 and 0 < lo < hi");
    let (la, lb) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

//! Worst-case tail probabilities, quantiles, and robust expectations over a
//! divergence ball around a reference model.
//!
//! The ball is `{Q : D_α(Q ‖ P_ref) ≤ δ}`. For tail events the optimizer is a
//! two-point likelihood ratio: value θ on `(x, ∞)` and the normalizing value
//! `(1 - θA)/(1 - A)` below, with `A = P_ref(x, ∞)`. The divergence budget
//! pins θ through
//!
//! `A·φ_α(θ) + (1-A)·φ_α((1-θA)/(1-A)) = δ̄`,
//!
//! which is strictly increasing in θ on (1, 1/A], so bracketed root-finding
//! is exact. The solve runs in s = ln θ throughout, keeping subnormal
//! reference tails (A down to e^-700 and beyond) inside ordinary float
//! range. Worst-case quantiles invert the worst-case tail in x; general
//! robust expectations over discrete references use the exponential-tilt
//! (α = 1) or positive-part power (α > 1) form of the optimal ratio with
//! nested scalar root-finding on its two coefficients.
//!
//! Bracketing note: the upper θ bracket comes from dropping the second
//! budget term. For α > 1 that term is nonnegative, so `(δ̄/A)^{1/α}` bounds
//! the root directly. For α = 1 the generator `x·ln x` goes negative on
//! (0, 1) and the analogous bound fails; the centered generator
//! `x·ln x - x + 1` leaves the budget equation unchanged (the linear terms
//! cancel between the two branches) while being nonnegative, and its
//! inverse `exp(1 + W((y-1)/e))` gives a correct bracket.

use crate::divergence::DivergenceSpec;
use crate::gev::{gev_log_cdf, gev_log_tail, gev_quantile, gev_tail, GevError, GevParams};
use crate::numerics::{self, NumericsError};
use thiserror::Error;

/// Errors from worst-case solvers.
#[derive(Debug, Error)]
pub enum WorstCaseError {
    /// The tail split at x is degenerate: everything or nothing lies above.
    #[error("reference tail probability at x = {x} is {tail}; need strictly inside (0,1)")]
    DegenerateTail { x: f64, tail: f64 },
    /// Quantile levels live in the open unit interval.
    #[error("quantile level {u} outside (0, 1)")]
    InvalidQuantileLevel { u: f64 },
    /// The divergence budget exceeds what the reference support allows.
    #[error("budget delta = {delta} not attainable: supremum for this reference is {max_delta}")]
    BudgetInfeasible { delta: f64, max_delta: f64 },
    /// Discrete reference construction: length mismatch.
    #[error("values ({values}) and probabilities ({probs}) differ in length")]
    ReferenceLengthMismatch { values: usize, probs: usize },
    /// Discrete reference construction: no atoms.
    #[error("reference needs at least one atom")]
    EmptyReference,
    /// Discrete reference construction: non-finite value or probability.
    #[error("non-finite value or probability in reference")]
    NonFiniteReference,
    /// Discrete reference construction: bad probability vector.
    #[error("probabilities must be > 0 and sum to 1 (sum = {sum})")]
    InvalidProbabilities { sum: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Gev(#[from] GevError),
}

/// Solution of the two-point tail problem at a fixed threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaSolution {
    /// Likelihood-ratio level on the tail event, ≥ 1. May round to +∞ when
    /// the reference tail is subnormal and the solution saturates.
    pub theta: f64,
    /// Worst-case tail probability θ·A, or 1 when saturated.
    pub worst_tail: f64,
    /// True when the whole unit mass can sit above x within budget.
    pub saturated: bool,
}

/// Coefficients of the optimal likelihood ratio for a general objective:
/// `L*(x) = c1·exp(c2·x)` when α = 1, `L*(x) = (c1 + c2·x)₊^{1/(α-1)}`
/// when α > 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltCoefficients {
    pub c1: f64,
    pub c2: f64,
    pub alpha: f64,
}

/// Finite discrete reference law: atoms with strictly positive probabilities
/// summing to one (renormalized exactly on construction).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteReference {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscreteReference {
    pub fn new(values: &[f64], probs: &[f64]) -> Result<Self, WorstCaseError> {
        if values.len() != probs.len() {
            return Err(WorstCaseError::ReferenceLengthMismatch {
                values: values.len(),
                probs: probs.len(),
            });
        }
        if values.is_empty() {
            return Err(WorstCaseError::EmptyReference);
        }
        if values.iter().chain(probs.iter()).any(|v| !v.is_finite()) {
            return Err(WorstCaseError::NonFiniteReference);
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|&p| p <= 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(WorstCaseError::InvalidProbabilities { sum });
        }
        Ok(Self {
            values: values.to_vec(),
            probs: probs.iter().map(|p| p / sum).collect(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(v, p)| v * p).sum()
    }

    fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Total probability of the atoms at the maximal value; the divergence
    /// budget saturates at -ln of this mass.
    fn prob_at_max(&self) -> f64 {
        let top = self.max_value();
        self.values
            .iter()
            .zip(&self.probs)
            .filter(|(v, _)| **v == top)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Worst-case two-point solution at threshold `x` under the GEV reference.
///
/// Returns the unique root θ ∈ (1, 1/A] of the two-point budget equation to
/// better than 1e-12 relative, where `A = gev_tail(x)`; θ = 1 exactly at
/// δ = 0, and the saturated solution (worst_tail = 1) when even θ = 1/A fits
/// the budget, i.e. when `ln A ≥ -δ` (full mass above x costs A^{1-α} ≤ δ̄
/// for α > 1 and -ln A ≤ δ for α = 1, the same condition in both scales).
pub fn solve_theta(
    x: f64,
    model: &GevParams,
    spec: &DivergenceSpec,
) -> Result<ThetaSolution, WorstCaseError> {
    let a = gev_tail(x, model);
    if !(a > 0.0 && a < 1.0) {
        return Err(WorstCaseError::DegenerateTail { x, tail: a });
    }
    solve_theta_from_logs(gev_log_tail(x, model), gev_log_cdf(x, model), spec)
}

/// Two-point solver on log inputs: `log_a = ln A` (reference tail) and
/// `log_1ma = ln(1-A)`; both strictly negative.
fn solve_theta_from_logs(
    log_a: f64,
    log_1ma: f64,
    spec: &DivergenceSpec,
) -> Result<ThetaSolution, WorstCaseError> {
    let alpha = spec.alpha();
    let delta = spec.delta();
    let a = log_a.exp();
    if delta == 0.0 {
        return Ok(ThetaSolution { theta: 1.0, worst_tail: a, saturated: false });
    }
    if log_a >= -delta {
        return Ok(ThetaSolution {
            theta: (-log_a).exp(),
            worst_tail: 1.0,
            saturated: true,
        });
    }

    // Budget minus target as a function of s = ln θ; strictly increasing,
    // and exactly evaluable at the endpoint s = -ln A.
    let budget_gap = |s: f64| -> f64 {
        // g = ln(θA), clamped so roundoff cannot push past the bound θ ≤ 1/A.
        let g = (s + log_a).min(0.0);
        let one_minus_ta = -g.exp_m1();
        let log_1mta = one_minus_ta.ln();
        if spec.is_kl() {
            // A·θ·ln θ + (1-θA)·(ln(1-θA) - ln(1-A)) - δ; the second term
            // has limit 0 as θA → 1, guarded against 0·(-∞).
            let spread = if one_minus_ta > 0.0 {
                one_minus_ta * (log_1mta - log_1ma)
            } else {
                0.0
            };
            g.exp() * s + spread - delta
        } else {
            // ln[A·θ^α + (1-A)·((1-θA)/(1-A))^α] - ln δ̄ via log-sum-exp.
            let u1 = log_a + alpha * s;
            let u2 = (1.0 - alpha) * log_1ma + alpha * log_1mta;
            log_sum_exp(u1, u2) - spec.log_delta_bar()
        }
    };

    // At roundoff-scale δ the gap at θ = 1 may already be nonnegative; the
    // root is then 1 to machine precision.
    if budget_gap(0.0) >= 0.0 {
        return Ok(ThetaSolution { theta: 1.0, worst_tail: a, saturated: false });
    }

    // Upper bracket; see the module docs for why α = 1 uses the centered
    // generator. Both caps strictly overestimate the root, and the gap at
    // the fallback endpoint s = -ln A is (α-1)(-ln A - δ) > 0 for α > 1
    // resp. -ln A - δ > 0 for α = 1, so that endpoint also brackets.
    let s_cap = if spec.is_kl() {
        // ln of exp(1 + W((y-1)/e)) with y = δ/A, the inverse of
        // x·ln x - x + 1 at y; evaluated from ln y when y would overflow.
        let ly = delta.ln() - log_a;
        let w = if ly > 30.0 {
            numerics::lambert_w0_log(ly - 1.0)?
        } else {
            numerics::lambert_w0(ly.exp_m1() / std::f64::consts::E)?
        };
        1.0 + w
    } else {
        (spec.log_delta_bar() - log_a) / alpha
    };
    let mut s_up = (-log_a).min(s_cap);
    if budget_gap(s_up) <= 0.0 {
        s_up = -log_a;
    }

    let s = numerics::brent_root(budget_gap, 0.0, s_up, 1e-15, 200)?;
    let theta = s.exp();
    let worst_tail = (s + log_a).min(0.0).exp();
    Ok(ThetaSolution { theta, worst_tail, saturated: false })
}

/// `ln(e^a + e^b)` without overflow; tolerates -∞ in either argument.
fn log_sum_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Worst-case tail probability at x: `sup{Q(x,∞) : D_α(Q‖P_ref) ≤ δ}`,
/// equal to θ·gev_tail(x) (1 when saturated). Nonincreasing in x and α,
/// nondecreasing in δ, and ≥ the reference tail.
pub fn worst_case_tail(
    x: f64,
    model: &GevParams,
    spec: &DivergenceSpec,
) -> Result<f64, WorstCaseError> {
    Ok(solve_theta(x, model, spec)?.worst_tail)
}

/// Worst-case tail with degenerate thresholds mapped to their limit values
/// (1 at or below the support, 0 past the tail's floating-point range); used
/// by the quantile bisection, whose probes may step outside the valid band.
fn worst_tail_clamped(
    x: f64,
    model: &GevParams,
    spec: &DivergenceSpec,
) -> Result<f64, WorstCaseError> {
    let a = gev_tail(x, model);
    if a >= 1.0 {
        return Ok(1.0);
    }
    if a <= 0.0 {
        return Ok(0.0);
    }
    Ok(solve_theta_from_logs(gev_log_tail(x, model), gev_log_cdf(x, model), spec)?.worst_tail)
}

/// Worst-case quantile at level u: the threshold where the worst-case tail
/// crosses `1-u`; equivalently `sup{G⁻¹(u) : D_α(G‖P_ref) ≤ δ}`.
///
/// The search runs in log reference-tail depth s = ln A(x), where the map to
/// x is monotone and probes stay finite even when x itself is astronomically
/// large. The deep end is seeded where a dropped-second-term tail envelope
/// crosses `1-u`, deepened geometrically until the worst-case tail falls
/// strictly below target, then bisected until the bracketing x values agree
/// to 1e-9 relative. If the crossing lies beyond the largest representable
/// quantile the error says so rather than returning ∞.
/// Returns `gev_quantile(u)` exactly at δ = 0.
pub fn worst_case_quantile(
    u: f64,
    model: &GevParams,
    spec: &DivergenceSpec,
) -> Result<f64, WorstCaseError> {
    if !(u > 0.0 && u < 1.0) {
        return Err(WorstCaseError::InvalidQuantileLevel { u });
    }
    let x_lo = gev_quantile(u, model)?;
    if spec.delta() == 0.0 {
        return Ok(x_lo);
    }
    let target = 1.0 - u;
    let log_t = target.ln();

    // Maps log tail depth back to a threshold, None once x leaves f64 range.
    let finite_quantile = |la: f64| -> Option<f64> {
        match crate::gev::gev_quantile_from_log_tail(la, model) {
            Ok(x) if x.is_finite() => Some(x),
            _ => None,
        }
    };

    // Seed the deep end from the reference tail A_up at which the
    // dropped-second-term envelope equals the target, in logs so deep seeds
    // cannot underflow: A_up = (t^α/δ̄)^{1/(α-1)} for α > 1, and for α = 1
    // from t·ln(t/A) ≈ δ. The α = 1 seed is heuristic (that envelope can
    // undershoot the worst tail at finite x), and the α > 1 seed degenerates
    // as α → 1⁺, so it is capped; the deepening loop below is what
    // guarantees a bracket.
    let log_a_seed = if spec.is_kl() {
        log_t - spec.delta() / target
    } else {
        (spec.alpha() * log_t - spec.log_delta_bar()) / (spec.alpha() - 1.0)
    };
    let mut la_deep = log_a_seed.max(-650.0).min(2.0 * log_t);
    let mut la_shallow = log_t;
    let mut x_shallow = finite_quantile(la_shallow).unwrap_or(x_lo);
    let mut guard = 0;
    let (mut la_deep, mut x_deep) = loop {
        guard += 1;
        if guard > 200 {
            return Err(NumericsError::NoConvergence {
                what: "worst_case_quantile deep bracket",
                max_iter: 200,
            }
            .into());
        }
        match finite_quantile(la_deep) {
            Some(x) => {
                if worst_tail_clamped(x, model, spec)? < target {
                    break (la_deep, x);
                }
                la_shallow = la_deep;
                x_shallow = x;
                la_deep *= 2.0;
            }
            None => {
                // The probe left f64 range; narrow onto the deepest
                // representable threshold and test the bracket once there.
                let mut lo = la_deep;
                let mut hi = la_shallow;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if finite_quantile(mid).is_some() {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if (lo - hi).abs() <= 1e-9 * hi.abs().max(1.0) {
                        break;
                    }
                }
                let x = match finite_quantile(hi) {
                    Some(x) => x,
                    None => {
                        return Err(NumericsError::NoConvergence {
                            what: "worst_case_quantile representable bracket",
                            max_iter: 200,
                        }
                        .into());
                    }
                };
                if worst_tail_clamped(x, model, spec)? < target {
                    break (hi, x);
                }
                return Err(NumericsError::NoConvergence {
                    what: "worst_case_quantile crossing beyond f64 range",
                    max_iter: guard,
                }
                .into());
            }
        }
    };

    for _ in 0..300 {
        let span = (x_deep - x_shallow).abs();
        if span <= 1e-9 * x_shallow.abs().max(x_deep.abs()).max(1.0) {
            break;
        }
        if (la_shallow - la_deep).abs() <= 1e-13 * la_deep.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (la_shallow + la_deep);
        // Between two finite-quantile depths, so the probe cannot overflow.
        let xm = match finite_quantile(mid) {
            Some(x) => x,
            None => break,
        };
        if worst_tail_clamped(xm, model, spec)? >= target {
            la_shallow = mid;
            x_shallow = xm;
        } else {
            la_deep = mid;
            x_deep = xm;
        }
    }
    Ok(0.5 * (x_shallow + x_deep))
}

/// Optimal likelihood-ratio coefficients for `sup E_Q[X]` over the ball
/// around a discrete reference, by nested root-finding: the inner loop on c1
/// normalizes `E[L] = 1`, the outer loop on c2 ≥ 0 matches the divergence
/// budget. Normalization holds to 1e-8 and the budget to 1e-6 relative.
///
/// Errors with `BudgetInfeasible` when δ reaches `-ln P(X = max)`, beyond
/// which no finite tilt attains the budget (the optimum degenerates toward a
/// point mass on the top atoms).
pub fn solve_tilt(
    reference: &DiscreteReference,
    spec: &DivergenceSpec,
) -> Result<TiltCoefficients, WorstCaseError> {
    let alpha = spec.alpha();
    let delta = spec.delta();
    if delta == 0.0 {
        return Ok(TiltCoefficients { c1: 1.0, c2: 0.0, alpha });
    }
    let max_delta = -reference.prob_at_max().ln();
    if delta >= max_delta {
        return Err(WorstCaseError::BudgetInfeasible { delta, max_delta });
    }

    let scale = (reference.max_value() - reference.min_value()).max(1e-12);

    if spec.is_kl() {
        // L = exp(c2·x - Λ(c2)); the spent budget c2·Λ'(c2) - Λ(c2) is
        // nondecreasing in c2 with supremum -ln P(X = max) > δ, so doubling
        // c2 brackets the root.
        let budget = |c2: f64| tilted_budget_kl(reference, c2) - delta;
        let mut lo = 0.0;
        let mut hi = 1.0 / scale;
        let mut guard = 0;
        while budget(hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
            guard += 1;
            if guard > 600 {
                return Err(NumericsError::NoConvergence {
                    what: "solve_tilt exponential bracket",
                    max_iter: 600,
                }
                .into());
            }
        }
        let c2 = numerics::brent_root(budget, lo, hi, 1e-14, 300)?;
        let c1 = (-log_mgf(reference, c2)).exp();
        Ok(TiltCoefficients { c1, c2, alpha })
    } else {
        let delta_bar = spec.delta_bar();
        let budget = |c2: f64| -> Result<f64, WorstCaseError> {
            let c1 = normalize_power_tilt(reference, c2, alpha)?;
            let spent: f64 = reference
                .values
                .iter()
                .zip(&reference.probs)
                .map(|(&v, &p)| p * pos_power(c1 + c2 * v, alpha / (alpha - 1.0)))
                .sum();
            Ok(spent - delta_bar)
        };
        let mut lo = 0.0;
        let mut hi = 1.0 / scale;
        let mut guard = 0;
        while budget(hi)? < 0.0 {
            lo = hi;
            hi *= 2.0;
            guard += 1;
            if guard > 600 {
                return Err(NumericsError::NoConvergence {
                    what: "solve_tilt power bracket",
                    max_iter: 600,
                }
                .into());
            }
        }
        // The root-finder sees a plain f64 objective; inner normalization
        // errors are deferred through a capture.
        let mut deferred: Option<WorstCaseError> = None;
        let c2 = numerics::brent_root(
            |c2| match budget(c2) {
                Ok(v) => v,
                Err(e) => {
                    deferred = Some(e);
                    f64::NAN
                }
            },
            lo,
            hi,
            1e-14,
            300,
        );
        if let Some(e) = deferred {
            return Err(e);
        }
        let c2 = c2?;
        let c1 = normalize_power_tilt(reference, c2, alpha)?;
        Ok(TiltCoefficients { c1, c2, alpha })
    }
}

/// `sup E_Q[X]` over the divergence ball: `E_ref[L*·X]` at the solved tilt.
/// Equals the reference mean exactly at δ = 0 and is nondecreasing in δ.
pub fn robust_expectation(
    reference: &DiscreteReference,
    spec: &DivergenceSpec,
) -> Result<f64, WorstCaseError> {
    if spec.delta() == 0.0 {
        return Ok(reference.mean());
    }
    let coeffs = solve_tilt(reference, spec)?;
    if spec.is_kl() {
        Ok(tilted_mean_kl(reference, coeffs.c2))
    } else {
        let e = 1.0 / (coeffs.alpha - 1.0);
        Ok(reference
            .values
            .iter()
            .zip(&reference.probs)
            .map(|(&v, &p)| p * pos_power(coeffs.c1 + coeffs.c2 * v, e) * v)
            .sum())
    }
}

/// `(y)₊^p` with the exponent capped so probe values far from the root
/// saturate near 1e304 instead of overflowing to ∞ inside the root-finder.
fn pos_power(y: f64, p: f64) -> f64 {
    if y <= 0.0 {
        0.0
    } else {
        (p * y.ln()).min(700.0).exp()
    }
}

/// `Λ(c2) = ln E[exp(c2·X)]`, evaluated with the max-value shift so large
/// tilts cannot overflow.
fn log_mgf(reference: &DiscreteReference, c2: f64) -> f64 {
    let top = reference.max_value();
    let sum: f64 = reference
        .values
        .iter()
        .zip(&reference.probs)
        .map(|(&v, &p)| p * (c2 * (v - top)).exp())
        .sum();
    c2 * top + sum.ln()
}

/// Tilted mean `Λ'(c2) = E[X·exp(c2·X)] / E[exp(c2·X)]`, max-shifted.
fn tilted_mean_kl(reference: &DiscreteReference, c2: f64) -> f64 {
    let top = reference.max_value();
    let mut num = 0.0;
    let mut den = 0.0;
    for (&v, &p) in reference.values.iter().zip(&reference.probs) {
        let w = p * (c2 * (v - top)).exp();
        num += w * v;
        den += w;
    }
    num / den
}

/// Spent budget of the exponential tilt: `c2·Λ'(c2) - Λ(c2)`.
fn tilted_budget_kl(reference: &DiscreteReference, c2: f64) -> f64 {
    c2 * tilted_mean_kl(reference, c2) - log_mgf(reference, c2)
}

/// Inner normalization for the α > 1 tilt: the c1 with
/// `E[(c1 + c2·X)₊^{1/(α-1)}] = 1`, nondecreasing in c1 and sign-changing
/// on `[-c2·max X, 1 - c2·min X]`.
fn normalize_power_tilt(
    reference: &DiscreteReference,
    c2: f64,
    alpha: f64,
) -> Result<f64, WorstCaseError> {
    if c2 == 0.0 {
        return Ok(1.0);
    }
    let e = 1.0 / (alpha - 1.0);
    let mean_gap = |c1: f64| -> f64 {
        reference
            .values
            .iter()
            .zip(&reference.probs)
            .map(|(&v, &p)| p * pos_power(c1 + c2 * v, e))
            .sum::<f64>()
            - 1.0
    };
    let lo = -c2 * reference.max_value();
    let hi = 1.0 - c2 * reference.min_value();
    Ok(numerics::brent_root(mean_gap, lo, hi, 1e-14, 300)?)
}

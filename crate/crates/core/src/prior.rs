//! Prior-constrained inverses of the spectral response (single-band pan).
//!
//! The fusion formulas want a row `m` with `m · a = 1`. The prior restricts
//! `m` to a box of physically plausible gains; this module finds the feasible
//! row closest to the box center, detects infeasibility exactly from the
//! interval bounds of `m · a` over the box, and also provides the adaptive
//! weights that project the synthetic intensity onto the ms bands.

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Box prior on the entries of the response inverse.
#[derive(Debug, Clone, Copy)]
pub struct PriorBox {
    pub lower: f64,
    pub upper: f64,
}

impl PriorBox {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() || lower >= upper {
            return Err(Error::InvalidDimensions(format!(
                "prior box requires lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    /// Range of `m · a` over the box: the exact feasibility certificate for
    /// the constraint `m · a = 1`.
    pub fn dot_range(&self, a: &DVector<f64>) -> (f64, f64) {
        let mut lo = 0.0;
        let mut hi = 0.0;
        for &ai in a.iter() {
            if ai >= 0.0 {
                lo += ai * self.lower;
                hi += ai * self.upper;
            } else {
                lo += ai * self.upper;
                hi += ai * self.lower;
            }
        }
        (lo, hi)
    }
}

impl Default for PriorBox {
    fn default() -> Self {
        Self {
            lower: 0.9,
            upper: 1.4,
        }
    }
}

/// A candidate inverse row with its achieved `m · a` and feasibility flag.
#[derive(Debug, Clone)]
pub struct PriorInverse {
    pub m: RowDVector<f64>,
    pub inverse_ability: f64,
    pub feasible: bool,
}

const UNIT_CONSTRAINT_TOL: f64 = 1e-10;

/// Closest-to-center row satisfying `m · a = 1` inside the box.
///
/// Works on the equality constraint with a Lagrange step, clips violating
/// coordinates to the bound they crossed, and re-solves on the free
/// coordinates until nothing moves (at most one pass per coordinate). When
/// the box excludes the constraint entirely, returns the equality-only
/// solution with `feasible = false` so pipelines can proceed and report the
/// violation.
pub fn solve_prior_inverse(a: &DVector<f64>, prior: &PriorBox) -> Result<PriorInverse> {
    let n = a.len();
    if n == 0 || a.iter().all(|&v| v == 0.0) {
        return Err(Error::NoSolution(
            "the zero response has no generalized inverse".into(),
        ));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("response vector contains NaN/Inf".into()));
    }

    let center = prior.center();
    let (lo, hi) = prior.dot_range(a);
    let interval_feasible = lo <= 1.0 && 1.0 <= hi;

    if !interval_feasible {
        let m = lagrange_step(a, center, &vec![None; n]);
        let m = RowDVector::from_vec(m.into_iter().map(Option::unwrap).collect());
        let inverse_ability = (&m * a)[0];
        return Ok(PriorInverse {
            m,
            inverse_ability,
            feasible: false,
        });
    }

    // Active-set passes: clipped coordinates stay on their bound.
    let mut clipped: Vec<Option<f64>> = vec![None; n];
    let mut solution = vec![center; n];
    for _ in 0..n {
        let step = lagrange_step(a, center, &clipped);
        let mut any_violation = false;
        for i in 0..n {
            match step[i] {
                Some(v) if v > prior.upper => {
                    clipped[i] = Some(prior.upper);
                    any_violation = true;
                }
                Some(v) if v < prior.lower => {
                    clipped[i] = Some(prior.lower);
                    any_violation = true;
                }
                Some(v) => solution[i] = v,
                None => solution[i] = clipped[i].unwrap(),
            }
        }
        if !any_violation {
            break;
        }
    }
    for i in 0..n {
        if let Some(b) = clipped[i] {
            solution[i] = b;
        }
    }

    let mut m = RowDVector::from_vec(solution);
    let mut achieved = (&m * a)[0];
    if (achieved - 1.0).abs() > UNIT_CONSTRAINT_TOL || m.iter().any(|&v| !prior.contains(v)) {
        // Mixed-sign responses can strand a coordinate on the wrong bound;
        // fall back to the monotone multiplier equation, which is exact.
        m = monotone_multiplier_solve(a, prior, center);
        achieved = (&m * a)[0];
    }

    let feasible =
        (achieved - 1.0).abs() <= UNIT_CONSTRAINT_TOL && m.iter().all(|&v| prior.contains(v));
    Ok(PriorInverse {
        m,
        inverse_ability: achieved,
        feasible,
    })
}

/// Seeded alternative: draws box-uniform rows and projects them onto the
/// constraint plane, keeping the first projection that stays in the box.
/// Falls back to the deterministic solution when no draw lands inside.
pub fn sample_prior_inverse(
    a: &DVector<f64>,
    prior: &PriorBox,
    seed: u64,
    tries: usize,
) -> Result<PriorInverse> {
    let n = a.len();
    if n == 0 || a.iter().all(|&v| v == 0.0) {
        return Err(Error::NoSolution(
            "the zero response has no generalized inverse".into(),
        ));
    }
    let norm_sq = a.dot(a);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..tries {
        let draw: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(prior.lower..=prior.upper))
            .collect();
        let draw = RowDVector::from_vec(draw);
        let shift = (1.0 - (&draw * a)[0]) / norm_sq;
        let m = &draw + a.transpose() * shift;
        let achieved = (&m * a)[0];
        if (achieved - 1.0).abs() <= UNIT_CONSTRAINT_TOL && m.iter().all(|&v| prior.contains(v)) {
            return Ok(PriorInverse {
                m,
                inverse_ability: achieved,
                feasible: true,
            });
        }
    }
    solve_prior_inverse(a, prior)
}

/// Equality-constrained minimizer of `‖m − center·1‖` on the free
/// coordinates, entries of `clipped` held at their bound.
fn lagrange_step(a: &DVector<f64>, center: f64, clipped: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut target = 1.0;
    let mut sum_a = 0.0;
    let mut sum_aa = 0.0;
    for (i, &ai) in a.iter().enumerate() {
        match clipped[i] {
            Some(b) => target -= b * ai,
            None => {
                sum_a += ai;
                sum_aa += ai * ai;
            }
        }
    }
    let lambda = if sum_aa > 0.0 {
        (target - center * sum_a) / sum_aa
    } else {
        0.0
    };
    a.iter()
        .enumerate()
        .map(|(i, &ai)| match clipped[i] {
            Some(_) => None,
            None => Some(center + lambda * ai),
        })
        .collect()
}

/// Solves `Σ aᵢ · clip(center + λ aᵢ) = 1` for λ. The left side is monotone
/// nondecreasing and piecewise linear, so a bisection bracketed by the box
/// breakpoints converges to the exact kink-free segment, where one final
/// Lagrange step recovers the exact answer.
fn monotone_multiplier_solve(a: &DVector<f64>, prior: &PriorBox, center: f64) -> RowDVector<f64> {
    let eval = |lambda: f64| -> f64 {
        a.iter()
            .map(|&ai| ai * (center + lambda * ai).clamp(prior.lower, prior.upper))
            .sum()
    };
    let mut span: f64 = 1.0;
    for &ai in a.iter() {
        if ai != 0.0 {
            span = span
                .max(((prior.lower - center) / ai).abs())
                .max(((prior.upper - center) / ai).abs());
        }
    }
    let (mut lo, mut hi) = (-span - 1.0, span + 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eval(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    // Pin the clipped set implied by λ, then re-solve exactly on the rest.
    let clipped: Vec<Option<f64>> = a
        .iter()
        .map(|&ai| {
            let v = center + lambda * ai;
            if v > prior.upper {
                Some(prior.upper)
            } else if v < prior.lower {
                Some(prior.lower)
            } else {
                None
            }
        })
        .collect();
    let step = lagrange_step(a, center, &clipped);
    RowDVector::from_vec(
        step.into_iter()
            .zip(clipped)
            .map(|(free, pinned)| free.or(pinned).unwrap())
            .collect(),
    )
}

/// Adaptive weights `w = var(z a)⁻¹ cov(z a, z)` with population (1/hw)
/// normalization; satisfies `w · a = 1` whenever the intensity variance is
/// nonzero.
pub fn gsa_weights(z: &DMatrix<f64>, a: &DVector<f64>) -> Result<RowDVector<f64>> {
    if z.ncols() != a.len() {
        return Err(Error::ShapeMismatch(format!(
            "ms has {} bands but response has {} entries",
            z.ncols(),
            a.len()
        )));
    }
    let intensity = z * a;
    regression_weights(&intensity, z)
}

/// Row of per-band regression gains of `z`'s columns on `intensity`:
/// `cov(intensity, z_k) / var(intensity)`, population normalization.
///
/// With `intensity = z a` these are the adaptive weights; with
/// `intensity = b(y)` they are the per-band detail gains of the
/// covariance-based baseline.
pub fn regression_weights(intensity: &DVector<f64>, z: &DMatrix<f64>) -> Result<RowDVector<f64>> {
    let n = intensity.len();
    if z.nrows() != n {
        return Err(Error::ShapeMismatch(format!(
            "intensity has {} pixels, ms has {}",
            n,
            z.nrows()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidDimensions("empty intensity".into()));
    }
    let inv_n = 1.0 / n as f64;
    let mean = intensity.sum() * inv_n;
    let centered = intensity.map(|v| v - mean);
    let var = centered.dot(&centered) * inv_n;
    let mean_sq = intensity.dot(intensity) * inv_n;
    if var <= f64::EPSILON * mean_sq.max(1.0) {
        return Err(Error::DegenerateVariance(format!(
            "intensity variance {var:.3e} is numerically zero"
        )));
    }
    let mut w = RowDVector::zeros(z.ncols());
    for k in 0..z.ncols() {
        let col = z.column(k);
        let col_mean = col.sum() * inv_n;
        let cov = col
            .iter()
            .zip(centered.iter())
            .map(|(&zv, &cv)| cv * (zv - col_mean))
            .sum::<f64>()
            * inv_n;
        w[k] = cov / var;
    }
    Ok(w)
}

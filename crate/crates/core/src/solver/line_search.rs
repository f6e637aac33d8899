//! Hager–Zhang line search.
//!
//! Finds a step satisfying the Wolfe conditions, or their approximate form
//! `(2δ − 1) φ'(0) ≥ φ'(α) ≥ σ φ'(0)`, using the secant² bracketing scheme.
//! Accepted steps never increase φ, and steps are capped at `alpha_max`.

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchParams {
    /// Sufficient decrease constant δ.
    pub delta: f64,
    /// Curvature constant σ.
    pub sigma: f64,
    /// Relative tolerance for the approximate Wolfe test.
    pub epsilon: f64,
    pub theta: f64,
    pub gamma: f64,
    /// Expansion factor while bracketing.
    pub expand: f64,
    pub max_evals: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        LineSearchParams {
            delta: 1e-4,
            sigma: 0.9,
            epsilon: 1e-6,
            theta: 0.5,
            gamma: 0.66,
            expand: 5.0,
            max_evals: 60,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub alpha: f64,
    pub value: f64,
    pub slope: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchResult {
    pub step: Step,
    pub evals: usize,
    /// Whether a (possibly approximate) Wolfe point was found; otherwise the
    /// step is the best decreasing point seen.
    pub wolfe: bool,
}

struct Search<'p, F> {
    phi: F,
    p: &'p LineSearchParams,
    f0: f64,
    g0: f64,
    eps: f64,
    evals: usize,
    best: Option<Step>,
}

impl<F: FnMut(f64) -> Result<(f64, f64)>> Search<'_, F> {
    fn eval(&mut self, alpha: f64) -> Result<Step> {
        let (value, slope) = (self.phi)(alpha)?;
        self.evals += 1;
        let s = Step { alpha, value, slope };
        if value.is_finite() && value < self.f0 && self.armijo(&s) && self.best.is_none_or(|b| value < b.value) {
            self.best = Some(s);
        }
        Ok(s)
    }

    fn armijo(&self, s: &Step) -> bool {
        s.value <= self.f0 + self.p.delta * s.alpha * self.g0
    }

    fn accepts(&self, s: &Step) -> bool {
        if !s.value.is_finite() || s.value > self.f0 {
            return false;
        }
        let curvature = s.slope >= self.p.sigma * self.g0;
        let wolfe = self.armijo(s) && curvature;
        let approx = (2.0 * self.p.delta - 1.0) * self.g0 >= s.slope && curvature && s.value <= self.f0 + self.eps;
        wolfe || approx
    }

    fn out_of_budget(&self) -> bool {
        self.evals >= self.p.max_evals
    }

    /// Update rule for a bracket `[a, b]` and a trial point `c`.
    fn update(&mut self, a: Step, b: Step, c: Step) -> Result<(Step, Step, Option<Step>)> {
        if c.alpha <= a.alpha || c.alpha >= b.alpha {
            return Ok((a, b, None));
        }
        if self.accepts(&c) {
            return Ok((a, b, Some(c)));
        }
        if c.slope >= 0.0 {
            return Ok((a, c, None));
        }
        if c.value <= self.f0 + self.eps {
            return Ok((c, b, None));
        }
        self.shrink(a, c)
    }

    /// Bisection towards a bracket when `φ'(c) < 0` but `φ(c)` is too high.
    fn shrink(&mut self, mut a: Step, mut b: Step) -> Result<(Step, Step, Option<Step>)> {
        while !self.out_of_budget() {
            let d = self.eval((1.0 - self.p.theta) * a.alpha + self.p.theta * b.alpha)?;
            if self.accepts(&d) {
                return Ok((a, b, Some(d)));
            }
            if d.slope >= 0.0 {
                return Ok((a, d, None));
            }
            if d.value <= self.f0 + self.eps {
                a = d;
            } else {
                b = d;
            }
        }
        Ok((a, b, None))
    }
}

fn secant(a: &Step, b: &Step) -> f64 {
    let denom = b.slope - a.slope;
    if denom == 0.0 || !denom.is_finite() {
        return 0.5 * (a.alpha + b.alpha);
    }
    (a.alpha * b.slope - b.alpha * a.slope) / denom
}

/// Searches along `φ(α) = f(x + α d)`; `phi(α)` returns `(φ(α), φ'(α))`.
///
/// Requires `g0 = φ'(0) < 0`. Returns `None` when no decreasing step was found.
pub fn hager_zhang<F>(
    phi: F,
    f0: f64,
    g0: f64,
    alpha0: f64,
    alpha_max: f64,
    params: &LineSearchParams,
) -> Result<Option<LineSearchResult>>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    debug_assert!(g0 < 0.0);
    let mut s = Search {
        phi,
        p: params,
        f0,
        g0,
        eps: params.epsilon * f0.abs().max(1e-300),
        evals: 0,
        best: None,
    };
    let finish = |s: &Search<'_, F>, found: Option<Step>| {
        let evals = s.evals;
        found
            .map(|step| LineSearchResult { step, evals, wolfe: true })
            .or_else(|| s.best.map(|step| LineSearchResult { step, evals, wolfe: false }))
    };

    // Bracketing.
    let origin = Step {
        alpha: 0.0,
        value: f0,
        slope: g0,
    };
    let mut a = origin;
    let mut c = s.eval(alpha0.min(alpha_max))?;
    let b;
    loop {
        if s.accepts(&c) {
            return Ok(finish(&s, Some(c)));
        }
        if c.slope >= 0.0 {
            b = c;
            break;
        }
        if !(c.value <= f0 + s.eps) {
            let (na, nb, found) = s.shrink(origin, c)?;
            if found.is_some() {
                return Ok(finish(&s, found));
            }
            a = na;
            b = nb;
            break;
        }
        a = c;
        if c.alpha >= alpha_max || s.out_of_budget() {
            // Capped at the feasible boundary while still descending.
            return Ok(finish(&s, None));
        }
        c = s.eval((c.alpha * params.expand).min(alpha_max))?;
    }

    // Secant² refinement.
    let mut b = b;
    while !s.out_of_budget() && b.alpha - a.alpha > f64::EPSILON * b.alpha {
        let width = b.alpha - a.alpha;
        let mut alpha = secant(&a, &b);
        if !(alpha > a.alpha && alpha < b.alpha) {
            alpha = 0.5 * (a.alpha + b.alpha);
        }
        let c = s.eval(alpha)?;
        let (na, nb, found) = s.update(a, b, c)?;
        if found.is_some() {
            return Ok(finish(&s, found));
        }
        let mut next = (na, nb);
        if c.alpha == nb.alpha || c.alpha == na.alpha {
            let cbar = if c.alpha == nb.alpha { secant(&b, &nb) } else { secant(&a, &na) };
            // Points outside the bracket would be discarded by `update`.
            if cbar > na.alpha && cbar < nb.alpha && !s.out_of_budget() {
                let cb = s.eval(cbar)?;
                let (aa, bb, found) = s.update(na, nb, cb)?;
                if found.is_some() {
                    return Ok(finish(&s, found));
                }
                next = (aa, bb);
            }
        }
        (a, b) = next;
        if b.alpha - a.alpha > params.gamma * width && !s.out_of_budget() {
            let mid = s.eval(0.5 * (a.alpha + b.alpha))?;
            let (aa, bb, found) = s.update(a, b, mid)?;
            if found.is_some() {
                return Ok(finish(&s, found));
            }
            (a, b) = (aa, bb);
        }
    }
    Ok(finish(&s, None))
}

/// Halving search for the Armijo condition; the fallback when the Wolfe search fails.
pub fn backtrack<F>(mut value: F, f0: f64, g0: f64, alpha0: f64, delta: f64, max_halvings: usize) -> Result<Option<Step>>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut alpha = alpha0;
    for _ in 0..=max_halvings {
        let v = value(alpha)?;
        if v.is_finite() && v <= f0 + delta * alpha * g0 && v < f0 {
            return Ok(Some(Step {
                alpha,
                value: v,
                slope: f64::NAN,
            }));
        }
        alpha *= 0.5;
    }
    Ok(None)
}

//! Adaptive Simpson quadrature with an evaluation budget.
//!
//! The integrands in this crate are smooth bumps sitting on a near-zero
//! floor, so the integrator accepts caller-supplied breakpoints to seed the
//! subdivision where the mass actually lives, then refines adaptively with
//! the usual Richardson error estimate.

use crate::error::{Result, SimError};

/// Outcome of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureResult {
    /// Integral estimate.
    pub value: f64,
    /// Accumulated absolute error estimate over accepted intervals.
    pub abs_error_estimate: f64,
    /// Number of integrand evaluations performed.
    pub evaluations: usize,
}

struct Segment {
    a: f64,
    m: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
}

const MAX_DEPTH: u32 = 60;

/// Integrate `f` over `[a, b]` to relative tolerance `rel_tol`.
///
/// `breakpoints` are hint abscissae strictly inside `(a, b)`; values outside
/// the interval are ignored. Returns [`SimError::NonConvergence`] if the
/// tolerance is not met within `max_evaluations` integrand calls.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    rel_tol: f64,
    max_evaluations: usize,
) -> Result<QuadratureResult> {
    if !(b > a) {
        return Err(SimError::domain("quadrature.bounds", "requires b > a"));
    }
    if !(rel_tol > 0.0) {
        return Err(SimError::domain("quadrature.rel_tol", "must be > 0"));
    }

    let mut edges: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&x| x > a && x < b)
        .collect();
    edges.push(a);
    edges.push(b);
    edges.sort_by(|x, y| x.partial_cmp(y).unwrap());
    edges.dedup();

    let mut evaluations = 0usize;
    let eval = |x: f64, n: &mut usize| -> f64 {
        *n += 1;
        f(x)
    };

    // Coarse pass: one Simpson estimate per seeded segment, to fix the
    // magnitude that the relative tolerance refers to.
    let mut segments = Vec::with_capacity(edges.len() - 1);
    let mut coarse_total = 0.0f64;
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mid = 0.5 * (lo + hi);
        let flo = eval(lo, &mut evaluations);
        let fmid = eval(mid, &mut evaluations);
        let fhi = eval(hi, &mut evaluations);
        let whole = simpson(lo, hi, flo, fmid, fhi);
        coarse_total += whole.abs();
        segments.push((lo, mid, hi, flo, fmid, fhi, whole));
    }

    // Floor the scale so an identically-zero integrand converges immediately
    // rather than chasing a relative error of 0/0.
    let scale = coarse_total.max(f64::MIN_POSITIVE);
    let abs_tol = rel_tol * scale;

    let mut total = 0.0f64;
    let mut err_total = 0.0f64;
    let mut stack: Vec<Segment> = segments
        .into_iter()
        .map(|(a, m, b, fa, fm, fb, whole)| Segment {
            a,
            m,
            b,
            fa,
            fm,
            fb,
            whole,
            tol: abs_tol / (edges.len() - 1) as f64,
            depth: 0,
        })
        .collect();

    while let Some(seg) = stack.pop() {
        if evaluations > max_evaluations {
            return Err(SimError::NonConvergence {
                achieved: err_total.max(seg.tol) / scale,
                evaluations,
                budget: max_evaluations,
            });
        }
        let lm = 0.5 * (seg.a + seg.m);
        let rm = 0.5 * (seg.m + seg.b);
        let flm = eval(lm, &mut evaluations);
        let frm = eval(rm, &mut evaluations);
        let left = simpson(seg.a, seg.m, seg.fa, flm, seg.fm);
        let right = simpson(seg.m, seg.b, seg.fm, frm, seg.fb);
        let refined = left + right;
        let err = (refined - seg.whole) / 15.0;

        let interval_tiny = (seg.b - seg.a) <= f64::EPSILON * (seg.b.abs() + seg.a.abs());
        if err.abs() <= seg.tol || seg.depth >= MAX_DEPTH || interval_tiny {
            total += refined + err;
            err_total += err.abs();
        } else {
            let child_tol = 0.5 * seg.tol;
            stack.push(Segment {
                a: seg.a,
                m: lm,
                b: seg.m,
                fa: seg.fa,
                fm: flm,
                fb: seg.fm,
                whole: left,
                tol: child_tol,
                depth: seg.depth + 1,
            });
            stack.push(Segment {
                a: seg.m,
                m: rm,
                b: seg.b,
                fa: seg.fm,
                fm: frm,
                fb: seg.fb,
                whole: right,
                tol: child_tol,
                depth: seg.depth + 1,
            });
        }
    }

    Ok(QuadratureResult {
        value: total,
        abs_error_estimate: err_total,
        evaluations,
    })
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

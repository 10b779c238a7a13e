//! Adaptive Simpson quadrature for smooth one-dimensional integrands.

/// Integrate `f` over `[a, b]` with adaptive Simpson subdivision.
///
/// Recursion stops when the local Richardson error estimate drops below the
/// tolerance allotted to the subinterval or `max_depth` is reached.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_depth: u32,
) -> f64 {
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(a, b, fa, fm, fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, abs_tol, max_depth)
}

/// Same as [`adaptive_simpson`] but with forced panel splits at the given
/// interior points (kinks, support edges of piecewise integrands).
pub fn adaptive_simpson_split<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    splits: &[f64],
    abs_tol: f64,
    max_depth: u32,
) -> f64 {
    let mut cuts: Vec<f64> = splits.iter().cloned().filter(|s| *s > a && *s < b).collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let mut lo = a;
    let mut total = 0.0;
    let n_panels = cuts.len() + 1;
    for hi in cuts.into_iter().chain(std::iter::once(b)) {
        total += adaptive_simpson(f, lo, hi, abs_tol / n_panels as f64, max_depth);
        lo = hi;
    }
    total
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let err = left + right - whole;
    if depth == 0 || err.abs() <= 15.0 * tol {
        return left + right + err / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

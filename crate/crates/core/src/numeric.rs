//! One-dimensional search helpers shared by the bound optimizers.
//!
//! All routines are deterministic: the same inputs always produce the same
//! sequence of evaluations, which keeps CLI output byte-stable.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Non-finite objective values are treated as `+inf` so that searches steer
/// away from poles instead of propagating NaN.
fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Golden-section minimization of `f` on `[a, b]`.
pub fn golden_min<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = sanitize(f(c));
    let mut fd = sanitize(f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = sanitize(f(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = sanitize(f(d));
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Grid-seeded golden-section search over `[lo, hi]`.
///
/// The grid (log-spaced when `log_spaced`, which needs `lo > 0`) locates the
/// best cell; golden-section then refines inside the neighbouring cells. Both
/// interval endpoints are always candidates, so boundary optima are returned
/// exactly.
pub fn grid_golden_min<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    points: usize,
    log_spaced: bool,
) -> (f64, f64) {
    debug_assert!(hi >= lo);
    if hi <= lo {
        return (lo, sanitize(f(lo)));
    }
    let n = points.max(3);
    let grid: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            if i == n - 1 {
                hi
            } else if log_spaced {
                (lo.ln() + t * (hi.ln() - lo.ln())).exp()
            } else {
                lo + t * (hi - lo)
            }
        })
        .collect();
    let values: Vec<f64> = grid.iter().map(|&x| sanitize(f(x))).collect();
    let (best, _) =
        values.iter().enumerate().fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(n - 1)];
    let (x, fx) = golden_min(&mut f, a, b, 1e-12);
    if values[best] <= fx {
        (grid[best], values[best])
    } else {
        (x, fx)
    }
}

/// Largest point of `[lo, hi]` where the monotone predicate still holds,
/// given `ok(lo)` and `!ok(hi)`. The returned point always satisfies `ok`.
pub fn bisect_last_ok<P: FnMut(f64) -> bool>(mut ok: P, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Smallest `x >= lo` with `f(x) <= target` for a non-increasing `f`.
///
/// The upper end is grown geometrically from `hi_hint` until it satisfies the
/// target; returns `None` if that fails within a generous range.
pub fn invert_decreasing<F: FnMut(f64) -> f64>(mut f: F, target: f64, lo: f64, hi_hint: f64) -> Option<f64> {
    if f(lo) <= target {
        return Some(lo);
    }
    let mut hi = hi_hint.max(lo + 1.0);
    let mut grown = 0;
    while f(hi) > target {
        hi = lo + 2.0 * (hi - lo);
        grown += 1;
        if grown > 200 || !hi.is_finite() {
            return None;
        }
    }
    let mut a = lo;
    for _ in 0..300 {
        let mid = 0.5 * (a + hi);
        if mid <= a || mid >= hi {
            break;
        }
        if f(mid) <= target {
            hi = mid;
        } else {
            a = mid;
        }
    }
    Some(hi)
}

/// Numerically stable `ln(sum(exp(xs)))`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

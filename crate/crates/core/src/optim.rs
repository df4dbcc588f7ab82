//! One-dimensional searches over log10 smoothing/variance parameters.

/// Bounded scalar minimization (Brent's golden-section/parabolic method).
/// Returns `(x, f(x))`; stops once the bracket is within `xtol`.
pub fn brent_min<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, xtol: f64, max_iter: usize) -> (f64, f64) {
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    let sqrt_eps = f64::EPSILON.sqrt();
    let (mut a, mut b) = (lo, hi);
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);

    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = sqrt_eps * x.abs() + xtol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 { x + d } else if d > 0.0 { x + tol1 } else { x - tol1 };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Outcome of a bracketed line search on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub x: f64,
    pub value: f64,
    pub at_bound: bool,
}

/// Maximizes `f` on `[lo, hi]`: an equispaced scan with spacing `step`
/// locates the best grid cell, then Brent refines inside the neighbouring
/// cells to `xtol`. The grid endpoints are always evaluated so boundary
/// optima are found exactly.
pub fn scan_maximize<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, step: f64, xtol: f64) -> LineSearch {
    let cells = ((hi - lo) / step).ceil().max(1.0) as usize;
    let grid: Vec<f64> = (0..=cells).map(|i| (lo + i as f64 * step).min(hi)).collect();
    let values: Vec<f64> = grid.iter().map(|&x| sanitize(f(x))).collect();
    let best = argmax(&values);
    refine(&mut f, &grid, &values, best, xtol)
}

/// Local maximization around `x0`: steps of size `step` walk uphill until the
/// maximum is bracketed (or a bound is reached), then Brent refines.
pub fn local_maximize<F: FnMut(f64) -> f64>(mut f: F, x0: f64, lo: f64, hi: f64, step: f64, xtol: f64) -> LineSearch {
    let x0 = x0.clamp(lo, hi);
    let f0 = sanitize(f(x0));
    let right = (x0 + step).min(hi);
    let left = (x0 - step).max(lo);
    let fr = if right > x0 { sanitize(f(right)) } else { f64::NEG_INFINITY };
    let fl = if left < x0 { sanitize(f(left)) } else { f64::NEG_INFINITY };

    let mut grid = vec![left, x0, right];
    let mut values = vec![fl, f0, fr];
    if fr > f0 && fr >= fl {
        // walk right
        let mut x = right;
        loop {
            let next = (x + step).min(hi);
            if next <= x {
                break;
            }
            let fnext = sanitize(f(next));
            grid.push(next);
            values.push(fnext);
            if fnext < values[values.len() - 2] {
                break;
            }
            x = next;
        }
    } else if fl > f0 {
        let mut x = left;
        loop {
            let next = (x - step).max(lo);
            if next >= x {
                break;
            }
            let fnext = sanitize(f(next));
            grid.insert(0, next);
            values.insert(0, fnext);
            if fnext < values[1] {
                break;
            }
            x = next;
        }
    }
    // drop duplicates created by clamping at the bounds
    let mut g = Vec::with_capacity(grid.len());
    let mut v = Vec::with_capacity(grid.len());
    for (x, fx) in grid.into_iter().zip(values) {
        if g.last().map_or(true, |&last: &f64| x > last) {
            g.push(x);
            v.push(fx);
        }
    }
    let best = argmax(&v);
    refine(&mut f, &g, &v, best, xtol)
}

fn refine<F: FnMut(f64) -> f64>(f: &mut F, grid: &[f64], values: &[f64], best: usize, xtol: f64) -> LineSearch {
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (mut x, mut value) = (grid[best], values[best]);
    if hi > lo {
        let (xb, fb) = brent_min(|t| -sanitize(f(t)), lo, hi, xtol, 200);
        // on a flat plateau at a bound, stay at the bound
        let endpoint = best == 0 || best == grid.len() - 1;
        let margin = if endpoint { 1e-9 * (1.0 + value.abs()) } else { 0.0 };
        if -fb > value + margin {
            x = xb;
            value = -fb;
        }
    }
    let at_bound = (x - grid[0]).abs() <= xtol || (x - grid[grid.len() - 1]).abs() <= xtol;
    LineSearch { x, value, at_bound: at_bound && (best == 0 || best == grid.len() - 1) }
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

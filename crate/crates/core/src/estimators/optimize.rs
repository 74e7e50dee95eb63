//! One-dimensional maximization over a bounded population-size range.

/// Result of [`maximize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Maximum {
    pub x: f64,
    pub value: f64,
    /// The maximizer sits on (or numerically at) the upper end of the range.
    pub at_upper: bool,
}

const GRID_POINTS: usize = 256;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Maximizes `f` over `[lo, hi]` with a geometric coarse grid followed by golden-section
/// refinement of the bracket around the best grid point, to absolute tolerance `tol`.
///
/// `f` may return `-inf` where undefined; `NaN` is treated the same way.
pub(crate) fn maximize<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Maximum {
    debug_assert!(lo > 0.0 && hi > lo);
    let eval = |x: f64| {
        let v = f(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let ratio = (hi / lo).powf(1.0 / (GRID_POINTS - 1) as f64);
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| {
            if i == GRID_POINTS - 1 {
                hi
            } else {
                lo * ratio.powi(i as i32)
            }
        })
        .collect();
    let (best, best_value) = grid
        .iter()
        .enumerate()
        .map(|(i, &x)| (i, eval(x)))
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });

    if best == GRID_POINTS - 1 {
        return Maximum { x: hi, value: best_value, at_upper: true };
    }
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[best + 1];
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c);
    let mut fd = eval(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d);
        }
    }
    let mut x = 0.5 * (a + b);
    let mut value = eval(x);
    // Boundary optimum at the lower end: golden section only approaches it.
    let at_lo = eval(lo);
    if at_lo >= value {
        x = lo;
        value = at_lo;
    }
    Maximum { x, value, at_upper: false }
}

/// Central second difference, shrinking the step to stay inside `[lo, ∞)`.
pub(crate) fn second_derivative<F: Fn(f64) -> f64>(f: F, x: f64, lo: f64) -> Option<f64> {
    let mut h = (1e-3 * x.abs()).max(1e-2);
    if x - h < lo {
        h = 0.5 * (x - lo);
    }
    if h <= 1e-9 {
        return None;
    }
    let d2 = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
    d2.is_finite().then_some(d2)
}

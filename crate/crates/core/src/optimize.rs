//! One-dimensional search: golden-section minimisation and bisection.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Minimise a unimodal `f` on `[lo, hi]` to an interval of width `tol`.
/// Returns the abscissa and the smallest value seen.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    // The end points are candidates too: a monotone f has its minimum there.
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    for x in [lo, hi] {
        let fx = f(x);
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Outcome of [`bisect`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bisection {
    pub root: f64,
    pub iterations: usize,
}

/// Bisection for a sign change of `f` between `inside` (where `f >= 0`) and
/// `outside` (where `f < 0`). `f` may be noisy: each call is trusted as is
/// and only its sign is used. Stops when the bracket is narrower than `tol`
/// or after `max_iter` evaluations.
pub fn bisect<F: FnMut(f64, usize) -> f64>(mut f: F, inside: f64, outside: f64, tol: f64, max_iter: usize) -> Bisection {
    let (mut a, mut b) = (inside, outside);
    let mut iterations = 0;
    while (b - a).abs() > tol && iterations < max_iter {
        let mid = 0.5 * (a + b);
        if f(mid, iterations) >= 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        iterations += 1;
    }
    Bisection {
        root: 0.5 * (a + b),
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_quadratic_minimum() {
        let (x, fx) = golden_section(|x| (x - 1.3).powi(2) + 2.0, -5.0, 5.0, 1e-9);
        assert!((x - 1.3).abs() < 1e-6);
        assert!((fx - 2.0).abs() < 1e-12);
    }

    #[test]
    fn golden_handles_boundary_minimum() {
        let (x, _) = golden_section(|x| x, -1.0, 4.0, 1e-9);
        assert_eq!(x, -1.0);
    }

    #[test]
    fn bisection_on_both_orientations() {
        let r = bisect(|x, _| 2.0 - x, 0.0, 10.0, 1e-10, 200);
        assert!((r.root - 2.0).abs() < 1e-9);
        let r = bisect(|x, _| x + 3.0, 0.0, -10.0, 1e-10, 200);
        assert!((r.root + 3.0).abs() < 1e-9);
        let r = bisect(|x, _| 2.0 - x, 0.0, 10.0, 0.0, 5);
        assert_eq!(r.iterations, 5);
    }
}

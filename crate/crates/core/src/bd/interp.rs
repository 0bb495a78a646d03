//! Shape-preserving piecewise cubic Hermite interpolation.
//!
//! Slopes follow the Fritsch-Butland weighted harmonic mean at interior
//! knots and a one-sided three-point estimate at the ends, clamped so the
//! interpolant never overshoots monotone data. Two knots give a straight
//! line.

/// Monotone cubic interpolant through strictly increasing abscissae.
#[derive(Debug, Clone, PartialEq)]
pub struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl Pchip {
    /// `xs` must be strictly increasing and at least two long.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert!(xs.len() >= 2 && xs.len() == ys.len(), "need >= 2 knots");
        debug_assert!(xs.windows(2).all(|w| w[0] < w[1]));
        let slopes = slopes(&xs, &ys);
        Self { xs, ys, slopes }
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    fn segment(&self, x: f64) -> usize {
        let last = self.xs.len() - 2;
        match self.xs.partition_point(|&k| k <= x) {
            0 => 0,
            i => (i - 1).min(last),
        }
    }

    /// Power-basis coefficients of segment `k` in `s = x - xs[k]`.
    fn coefficients(&self, k: usize) -> [f64; 4] {
        let h = self.xs[k + 1] - self.xs[k];
        let delta = (self.ys[k + 1] - self.ys[k]) / h;
        let (d0, d1) = (self.slopes[k], self.slopes[k + 1]);
        [
            self.ys[k],
            d0,
            (3.0 * delta - 2.0 * d0 - d1) / h,
            (d0 + d1 - 2.0 * delta) / (h * h),
        ]
    }

    /// Evaluates the interpolant. Outside the knot range the end segments
    /// are extended.
    pub fn eval(&self, x: f64) -> f64 {
        let k = self.segment(x);
        if x == self.xs[k] {
            return self.ys[k];
        }
        if x == self.xs[k + 1] {
            return self.ys[k + 1];
        }
        let [c0, c1, c2, c3] = self.coefficients(k);
        let s = x - self.xs[k];
        c0 + s * (c1 + s * (c2 + s * c3))
    }

    /// Exact integral over `[a, b]` with `a <= b`, both inside the domain.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        debug_assert!(a <= b);
        let first = self.segment(a);
        let last = self.segment(b);
        (first..=last)
            .map(|k| {
                let lo = if k == first { a } else { self.xs[k] };
                let hi = if k == last { b } else { self.xs[k + 1] };
                let [c0, c1, c2, c3] = self.coefficients(k);
                let anti = |s: f64| s * (c0 + s * (c1 / 2.0 + s * (c2 / 3.0 + s * c3 / 4.0)));
                anti(hi - self.xs[k]) - anti(lo - self.xs[k])
            })
            .sum()
    }
}

fn slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }

    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        let (a, b) = (delta[k - 1], delta[k]);
        if a == 0.0 || b == 0.0 || a.signum() != b.signum() {
            continue;
        }
        let w1 = 2.0 * h[k] + h[k - 1];
        let w2 = h[k] + 2.0 * h[k - 1];
        d[k] = (w1 + w2) / (w1 / a + w2 / b);
    }
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn end_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() || m0 == 0.0 {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

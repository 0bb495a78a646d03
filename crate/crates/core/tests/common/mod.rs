//! Reference implementations used only by tests: a Hermite-basis monotone
//! cubic and a brute-force trapezoid BD-Rate.

#![allow(dead_code)]

pub const TRAPEZOID_SAMPLES: usize = 10_001;

/// Monotone cubic through (x, y) with Fritsch-Butland interior slopes and
/// the three-point end conditions.
pub struct Monotone {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

impl Monotone {
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        let n = x.len();
        assert!(n >= 2 && n == y.len());
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let del: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = del[0];
            d[1] = del[0];
        } else {
            for k in 1..n - 1 {
                if sign(del[k - 1]) * sign(del[k]) > 0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
                }
            }
            d[0] = end_slope(h[0], h[1], del[0], del[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
        }
        Self {
            x: x.to_vec(),
            y: y.to_vec(),
            d,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let k = match self.x.iter().rposition(|&xi| xi <= t) {
            Some(k) => k.min(n - 2),
            None => 0,
        };
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let h00 = 2.0 * s.powi(3) - 3.0 * s * s + 1.0;
        let h10 = s.powi(3) - 2.0 * s * s + s;
        let h01 = -2.0 * s.powi(3) + 3.0 * s * s;
        let h11 = s.powi(3) - s * s;
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }

    /// Trapezoid rule over `samples` equally spaced points.
    pub fn trapezoid(&self, a: f64, b: f64, samples: usize) -> f64 {
        let step = (b - a) / (samples - 1) as f64;
        let mut acc = 0.5 * (self.eval(a) + self.eval(b));
        for i in 1..samples - 1 {
            acc += self.eval(a + step * i as f64);
        }
        acc * step
    }
}

fn end_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if sign(d) != sign(m0) {
        0.0
    } else if sign(m0) != sign(m1) && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

/// BD-Rate in percent from (rate, quality) points with quality strictly
/// increasing, integrating log10 rate over quality by trapezoids.
pub fn bd_rate(anchor: &[(f64, f64)], test: &[(f64, f64)]) -> f64 {
    let fit = |pts: &[(f64, f64)]| {
        let q: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let lr: Vec<f64> = pts.iter().map(|p| p.0.log10()).collect();
        Monotone::new(&q, &lr)
    };
    let lo = anchor[0].1.max(test[0].1);
    let hi = anchor[anchor.len() - 1].1.min(test[test.len() - 1].1);
    let ia = fit(anchor).trapezoid(lo, hi, TRAPEZOID_SAMPLES);
    let it = fit(test).trapezoid(lo, hi, TRAPEZOID_SAMPLES);
    (10f64.powf((it - ia) / (hi - lo)) - 1.0) * 100.0
}

//! Cubic Hermite interpolation of sampled fields and time series.

use std::ops::{Add, Mul, Sub};

use nalgebra::SVector;

use crate::error::{Error, Result};

/// Values of a vector space the splines can interpolate.
pub trait Linear: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {}
impl<T> Linear for T where T: Copy + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T> {}

/// C¹ piecewise-cubic interpolant with second-order finite-difference slopes.
/// Evaluation outside the sample range holds the end values.
#[derive(Debug, Clone, PartialEq)]
pub struct Spline<T> {
    knots: Vec<f64>,
    values: Vec<T>,
    slopes: Vec<T>,
}

impl<T: Linear> Spline<T> {
    pub fn new(knots: Vec<f64>, values: Vec<T>) -> Result<Self> {
        if knots.len() != values.len() || knots.is_empty() {
            return Err(Error::InvalidInput(format!(
                "spline needs matching non-empty knots/values ({} vs {})",
                knots.len(),
                values.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("spline knots must increase strictly".into()));
        }
        let slopes = slopes(&knots, &values);
        Ok(Self { knots, values, slopes })
    }

    /// Samples on a uniform grid of `[start, end]`.
    pub fn uniform(start: f64, end: f64, values: Vec<T>) -> Result<Self> {
        let n = values.len();
        let knots = if n == 1 {
            vec![start]
        } else {
            (0..n).map(|j| start + (end - start) * j as f64 / (n - 1) as f64).collect()
        };
        Self::new(knots, values)
    }

    pub fn constant(value: T) -> Self {
        Self { knots: vec![0.0], values: vec![value], slopes: vec![value * 0.0] }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn start(&self) -> f64 {
        self.knots[0]
    }

    pub fn end(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    fn locate(&self, t: f64) -> Option<(usize, f64, f64)> {
        let n = self.knots.len();
        if n == 1 || t <= self.knots[0] || t >= self.knots[n - 1] {
            return None;
        }
        let k = self.knots.partition_point(|&s| s <= t).clamp(1, n - 1) - 1;
        let h = self.knots[k + 1] - self.knots[k];
        Some((k, (t - self.knots[k]) / h, h))
    }

    pub fn eval(&self, t: f64) -> T {
        match self.locate(t) {
            None => {
                if t <= self.knots[0] {
                    self.values[0]
                } else {
                    *self.values.last().unwrap()
                }
            }
            Some((k, s, h)) => hermite(self.values[k], self.slopes[k] * h, self.values[k + 1], self.slopes[k + 1] * h, s),
        }
    }

    pub fn derivative(&self, t: f64) -> T {
        match self.locate(t) {
            None => {
                let n = self.knots.len();
                if n > 1 && t == self.knots[0] {
                    self.slopes[0]
                } else if n > 1 && t == self.knots[n - 1] {
                    self.slopes[n - 1]
                } else {
                    self.values[0] * 0.0
                }
            }
            Some((k, s, h)) => {
                hermite_derivative(self.values[k], self.slopes[k] * h, self.values[k + 1], self.slopes[k + 1] * h, s)
                    * (1.0 / h)
            }
        }
    }
}

/// Time series of `N`-vectors.
pub type Series<const N: usize> = Spline<SVector<f64, N>>;

impl<const N: usize> Spline<SVector<f64, N>> {
    pub fn zeros() -> Self {
        Self::constant(SVector::zeros())
    }
}

/// Cubic Hermite on the unit interval with values `p0, p1` and scaled slopes `m0, m1`.
pub fn hermite<T: Linear>(p0: T, m0: T, p1: T, m1: T, s: f64) -> T {
    let s2 = s * s;
    let s3 = s2 * s;
    p0 * (2.0 * s3 - 3.0 * s2 + 1.0) + m0 * (s3 - 2.0 * s2 + s) + p1 * (-2.0 * s3 + 3.0 * s2) + m1 * (s3 - s2)
}

pub fn hermite_derivative<T: Linear>(p0: T, m0: T, p1: T, m1: T, s: f64) -> T {
    let s2 = s * s;
    p0 * (6.0 * s2 - 6.0 * s) + m0 * (3.0 * s2 - 4.0 * s + 1.0) + p1 * (-6.0 * s2 + 6.0 * s) + m1 * (3.0 * s2 - 2.0 * s)
}

fn slopes<T: Linear>(t: &[f64], y: &[T]) -> Vec<T> {
    let n = t.len();
    if n == 1 {
        return vec![y[0] * 0.0];
    }
    if n == 2 {
        let m = (y[1] - y[0]) * (1.0 / (t[1] - t[0]));
        return vec![m, m];
    }
    let mut out = Vec::with_capacity(n);
    let (h0, h1) = (t[1] - t[0], t[2] - t[1]);
    out.push(
        y[0] * (-(2.0 * h0 + h1) / (h0 * (h0 + h1))) + y[1] * ((h0 + h1) / (h0 * h1)) + y[2] * (-h0 / (h1 * (h0 + h1))),
    );
    for k in 1..n - 1 {
        let (a, b) = (t[k] - t[k - 1], t[k + 1] - t[k]);
        out.push((y[k + 1] - y[k]) * (a / (b * (a + b))) + (y[k] - y[k - 1]) * (b / (a * (a + b))));
    }
    let (h0, h1) = (t[n - 2] - t[n - 3], t[n - 1] - t[n - 2]);
    out.push(
        y[n - 3] * (h1 / (h0 * (h0 + h1))) + y[n - 2] * (-(h0 + h1) / (h0 * h1)) + y[n - 1] * ((2.0 * h1 + h0) / (h1 * (h0 + h1))),
    );
    out
}

/// Linear interpolation of uniformly spaced samples at fractional index `s`.
pub fn lerp_index<T: Linear>(samples: &[T], s: f64) -> T {
    let n = samples.len();
    if n == 1 || s <= 0.0 {
        return samples[0];
    }
    if s >= (n - 1) as f64 {
        return samples[n - 1];
    }
    let k = s.floor() as usize;
    let w = s - k as f64;
    samples[k] * (1.0 - w) + samples[k + 1] * w
}

/// Second-order derivative of uniformly spaced samples at index `j` (one-sided at the ends).
pub fn diff_uniform<T: Linear>(samples: &[T], j: usize, h: f64) -> T {
    let n = samples.len();
    assert!(n >= 3, "derivative stencil needs three samples");
    if j == 0 {
        (samples[1] * 4.0 - samples[0] * 3.0 - samples[2]) * (0.5 / h)
    } else if j == n - 1 {
        (samples[n - 1] * 3.0 - samples[n - 2] * 4.0 + samples[n - 3]) * (0.5 / h)
    } else {
        (samples[j + 1] - samples[j - 1]) * (0.5 / h)
    }
}

/// Composite trapezoid rule on a uniform grid.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    #[test]
    fn reproduces_cubics_inside() {
        let f = |t: f64| t * t * t - 2.0 * t + 1.0;
        let knots: Vec<f64> = (0..21).map(|k| 0.1 * k as f64).collect();
        let s = Spline::new(knots.clone(), knots.iter().map(|&t| f(t)).collect()).unwrap();
        for k in 0..200 {
            let t = 0.3 + 1.4 * k as f64 / 200.0;
            // second-order slopes: error O(h^2) in slope, O(h^3) in values
            assert!((s.eval(t) - f(t)).abs() < 1e-3);
            assert!((s.derivative(t) - (3.0 * t * t - 2.0)).abs() < 2e-2);
        }
        assert_eq!(s.eval(-1.0), f(0.0));
        assert_eq!(s.eval(10.0), f(2.0));
    }

    #[test]
    fn quadratics_exact() {
        let f = |t: f64| Vector2::new(t * t, 1.0 - t);
        let knots = vec![0.0, 0.3, 0.5, 1.1, 1.2];
        let s = Spline::new(knots.clone(), knots.iter().map(|&t| f(t)).collect()).unwrap();
        for t in [0.05, 0.4, 0.77, 1.15] {
            assert!((s.eval(t) - f(t)).norm() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_knots() {
        assert!(Spline::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(Spline::<f64>::new(vec![0.0], vec![]).is_err());
    }

    #[test]
    fn trapezoid_linear_exact() {
        let v: Vec<f64> = (0..11).map(|k| 2.0 * k as f64 / 10.0).collect();
        assert!((trapezoid(&v, 0.1) - 1.0).abs() < 1e-14);
    }
}

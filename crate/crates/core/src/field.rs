//! Radial potential profiles `φ(r)` with their derivative, interpolated by
//! piecewise cubic Hermite polynomials.

use crate::error::{Error, Result};

/// Radial field carrying `φ` and `∂_r φ` on a strictly increasing grid.
///
/// Between nodes the profile is the cubic Hermite interpolant of the node
/// values and slopes, so it is C¹ and reproduces the stored slopes exactly at
/// the nodes. Outside `[r_min, r_max]` both `φ` and `∂_r φ` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldProfile {
    r: Vec<f64>,
    phi: Vec<f64>,
    dphi: Vec<f64>,
    uniform: Option<(f64, f64)>,
    zero: bool,
}

impl FieldProfile {
    /// The identically vanishing field (pure Kepler potential).
    pub fn zero() -> Self {
        Self {
            r: Vec::new(),
            phi: Vec::new(),
            dphi: Vec::new(),
            uniform: None,
            zero: true,
        }
    }

    pub fn new(r: Vec<f64>, phi: Vec<f64>, dphi: Vec<f64>) -> Result<Self> {
        if r.len() < 2 || phi.len() != r.len() || dphi.len() != r.len() {
            return Err(Error::InvalidSpec(format!(
                "field profile needs matching arrays of length >= 2 (got {}, {}, {})",
                r.len(),
                phi.len(),
                dphi.len()
            )));
        }
        if !(r[0] > 0.0) || r.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSpec(
                "field grid must be strictly increasing with r_min > 0".into(),
            ));
        }
        if phi.iter().chain(&dphi).any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("field values must be finite".into()));
        }
        let n = r.len();
        let dr = (r[n - 1] - r[0]) / (n - 1) as f64;
        let uniform = r
            .iter()
            .enumerate()
            .all(|(i, &x)| (x - (r[0] + dr * i as f64)).abs() <= 1e-12 * r[n - 1])
            .then_some((r[0], dr));
        let zero = phi.iter().chain(&dphi).all(|&v| v == 0.0);
        Ok(Self {
            r,
            phi,
            dphi,
            uniform,
            zero,
        })
    }

    /// Samples `f(r) -> (φ, ∂_r φ)` on the given nodes.
    pub fn from_fn<F: Fn(f64) -> (f64, f64)>(nodes: Vec<f64>, f: F) -> Result<Self> {
        let (phi, dphi) = nodes.iter().map(|&r| f(r)).unzip();
        Self::new(nodes, phi, dphi)
    }

    /// Samples `f` on `n` uniformly spaced nodes spanning `[r_min, r_max]`.
    pub fn from_fn_uniform<F: Fn(f64) -> (f64, f64)>(
        r_min: f64,
        r_max: f64,
        n: usize,
        f: F,
    ) -> Result<Self> {
        let n = n.max(2);
        let dr = (r_max - r_min) / (n - 1) as f64;
        let nodes = (0..n).map(|i| r_min + dr * i as f64).collect();
        Self::from_fn(nodes, f)
    }

    /// Smooth compactly supported bump `ε (1 - s^2)^4` on `[lo, hi]`,
    /// sampled on a uniform grid over `[r_min, r_max]`.
    pub fn bump(
        amplitude: f64,
        lo: f64,
        hi: f64,
        r_min: f64,
        r_max: f64,
        n: usize,
    ) -> Result<Self> {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        Self::from_fn_uniform(r_min, r_max, n, |r| {
            let s = (r - mid) / half;
            if s.abs() >= 1.0 {
                (0.0, 0.0)
            } else {
                let base = 1.0 - s * s;
                (
                    amplitude * base.powi(4),
                    amplitude * 4.0 * base.powi(3) * (-2.0 * s / half),
                )
            }
        })
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn nodes(&self) -> &[f64] {
        &self.r
    }

    pub fn phi_values(&self) -> &[f64] {
        &self.phi
    }

    pub fn dphi_values(&self) -> &[f64] {
        &self.dphi
    }

    pub fn r_min(&self) -> f64 {
        self.r.first().copied().unwrap_or(0.0)
    }

    pub fn r_max(&self) -> f64 {
        self.r.last().copied().unwrap_or(0.0)
    }

    fn locate(&self, r: f64) -> usize {
        let n = self.r.len();
        match self.uniform {
            Some((r0, dr)) => (((r - r0) / dr) as usize).min(n - 2),
            None => self
                .r
                .partition_point(|&x| x <= r)
                .saturating_sub(1)
                .min(n - 2),
        }
    }

    /// Returns `(φ(r), ∂_r φ(r))`.
    pub fn eval(&self, r: f64) -> (f64, f64) {
        if self.zero || !(r >= self.r[0] && r <= self.r[self.r.len() - 1]) {
            return (0.0, 0.0);
        }
        let i = self.locate(r);
        let (x0, x1) = (self.r[i], self.r[i + 1]);
        let h = x1 - x0;
        let t = (r - x0) / h;
        let (y0, y1) = (self.phi[i], self.phi[i + 1]);
        let (m0, m1) = (self.dphi[i] * h, self.dphi[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let value = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1;
        let slope = ((6.0 * t2 - 6.0 * t) * y0
            + (3.0 * t2 - 4.0 * t + 1.0) * m0
            + (-6.0 * t2 + 6.0 * t) * y1
            + (3.0 * t2 - 2.0 * t) * m1)
            / h;
        (value, slope)
    }

    pub fn phi(&self, r: f64) -> f64 {
        self.eval(r).0
    }

    pub fn dphi(&self, r: f64) -> f64 {
        self.eval(r).1
    }

    /// Largest `|φ|` and `|∂_r φ|` over the nodes.
    pub fn sup_norms(&self) -> (f64, f64) {
        let a = self.phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let b = self.dphi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_reproduces_cubics() {
        let f = |r: f64| (r * r * r - 2.0 * r, 3.0 * r * r - 2.0);
        let p = FieldProfile::from_fn(vec![0.5, 0.9, 1.7, 2.0, 3.1], f).unwrap();
        for &r in &[0.5, 0.61, 1.0, 1.99, 2.5, 3.1] {
            let (v, d) = p.eval(r);
            assert!((v - f(r).0).abs() < 1e-12);
            assert!((d - f(r).1).abs() < 1e-11);
        }
        assert_eq!(p.eval(0.4), (0.0, 0.0));
        assert_eq!(p.eval(3.2), (0.0, 0.0));
    }

    #[test]
    fn uniform_lookup_matches_search() {
        let f = |r: f64| (r.sin(), r.cos());
        let u = FieldProfile::from_fn_uniform(0.3, 4.0, 101, f).unwrap();
        let mut nodes = u.nodes().to_vec();
        nodes[50] += 1e-9;
        let nu = FieldProfile::from_fn(nodes, f).unwrap();
        for k in 0..500 {
            let r = 0.3 + 3.7 * k as f64 / 499.0;
            assert!((u.phi(r) - nu.phi(r)).abs() < 1e-7);
            assert!((u.phi(r) - r.sin()).abs() < 1e-7);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(FieldProfile::new(vec![1.0, 1.0], vec![0.0; 2], vec![0.0; 2]).is_err());
        assert!(FieldProfile::new(vec![0.0, 1.0], vec![0.0; 2], vec![0.0; 2]).is_err());
        assert!(FieldProfile::new(vec![1.0, 2.0], vec![0.0; 3], vec![0.0; 2]).is_err());
    }

    #[test]
    fn bump_is_compact() {
        let b = FieldProfile::bump(1e-3, 1.5, 2.0, 0.2, 12.0, 4001).unwrap();
        assert_eq!(b.phi(1.2), 0.0);
        assert!((b.phi(1.75) - 1e-3).abs() < 1e-9);
        assert!(b.phi(1.6) > 0.0 && b.dphi(1.6) > 0.0);
        assert!(!b.is_zero());
        assert!(FieldProfile::zero().is_zero());
    }
}

//! Complex radial profiles carrying an equivariance index; the universal data
//! carrier for u, w, the error fields, profiles, and kernels.

use crate::grid::{Interpolant, Parity, RadialGrid, TailPolicy};
use crate::{CssError, Result};
use num_complex::Complex64;
use std::sync::Arc;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Complex-valued radial profile aligned with a [`RadialGrid`].
#[derive(Clone)]
pub struct EquivariantField {
    pub m: usize,
    pub origin_parity: Parity,
    values: Vec<Complex64>,
    grid: Arc<RadialGrid>,
}

impl EquivariantField {
    pub fn new(grid: Arc<RadialGrid>, m: usize, values: Vec<Complex64>) -> Self {
        assert_eq!(values.len(), grid.len(), "values must align with the grid");
        Self {
            m,
            origin_parity: Parity::of_index(m),
            values,
            grid,
        }
    }

    pub fn zeros(grid: Arc<RadialGrid>, m: usize) -> Self {
        let n = grid.len();
        Self::new(grid, m, vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn from_fn(grid: Arc<RadialGrid>, m: usize, f: impl Fn(f64) -> Complex64) -> Self {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::new(grid, m, values)
    }

    pub fn from_real_fn(grid: Arc<RadialGrid>, m: usize, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, m, |r| Complex64::new(f(r), 0.0))
    }

    pub fn with_parity(mut self, p: Parity) -> Self {
        self.origin_parity = p;
        self
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) {
            Ok(())
        } else {
            Err(CssError::GridMismatch)
        }
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn im(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.im).collect()
    }

    pub fn abs(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub fn conj(&self) -> Self {
        self.map(|v| v.conj())
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v = f(*v);
        }
        out
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Self {
        let mut out = self.clone();
        for (v, o) in out.values.iter_mut().zip(other.values.iter()) {
            *v = f(*v, *o);
        }
        out
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn axpy(&self, c: Complex64, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + c * b)
    }

    /// Pointwise multiplication by a real nodal function.
    pub fn mul_real(&self, g: &[f64]) -> Self {
        let mut out = self.clone();
        for (v, &w) in out.values.iter_mut().zip(g.iter()) {
            *v *= w;
        }
        out
    }

    pub fn mul_field(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn times_i(&self) -> Self {
        self.map(|v| Complex64::new(-v.im, v.re))
    }

    /// \int f = 2 pi \int f(r) r dr over the grid (no tail added).
    pub fn integrate_measure(&self) -> Complex64 {
        let re = self.grid.integrate_rdr(&self.re());
        let im = self.grid.integrate_rdr(&self.im());
        TWO_PI * Complex64::new(re, im)
    }

    /// Real L^2 inner product (f, g)_r = \int Re(conj(f) g).
    pub fn inner_real(&self, other: &Self) -> Result<f64> {
        self.same_grid(other)?;
        let prod: Vec<f64> = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a.conj() * b).re)
            .collect();
        Ok(TWO_PI * self.grid.integrate_rdr(&prod))
    }

    /// Squared L^2 norm with the 2 pi r dr measure.
    pub fn l2_sq(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v.norm_sqr()).collect();
        TWO_PI * self.grid.integrate_rdr(&sq)
    }

    pub fn l2(&self) -> f64 {
        self.l2_sq().max(0.0).sqrt()
    }

    /// L^2 norm with the algebraic-tail correction on |f|^2.
    pub fn l2_tail_corrected(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v.norm_sqr()).collect();
        (TWO_PI * self.grid.integrate_rdr_tail_corrected(&sq)).max(0.0).sqrt()
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Sup norm restricted to nodes with r <= r_cut.
    pub fn sup_on(&self, r_cut: f64) -> f64 {
        self.grid
            .nodes()
            .iter()
            .zip(self.values.iter())
            .filter(|(&r, _)| r <= r_cut)
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max)
    }

    /// k-th radial derivative; origin closure uses the field parity, and the
    /// result's parity flips with each derivative.
    pub fn derivative(&self, k: usize) -> Result<Self> {
        let re = self.grid.differentiate_f64(&self.re(), k, self.origin_parity)?;
        let im = self.grid.differentiate_f64(&self.im(), k, self.origin_parity)?;
        let values = re
            .into_iter()
            .zip(im)
            .map(|(a, b)| Complex64::new(a, b))
            .collect();
        let mut out = Self::new(self.grid.clone(), self.m, values);
        out.origin_parity = if k % 2 == 0 {
            self.origin_parity
        } else {
            self.origin_parity.flip()
        };
        Ok(out)
    }

    /// Pointwise seminorm |f|_k(r) = sup_{0<=l<=k} |r^l d^l f| for k >= 0; for
    /// negative orders |f|_{-k}(r) = r^{-k} |f|_k(r).
    pub fn pointwise_seminorm(&self, k: i32) -> Result<Vec<f64>> {
        let ka = k.unsigned_abs() as usize;
        if ka > 3 {
            return Err(CssError::UnsupportedOrder(ka));
        }
        let mut out: Vec<f64> = self.values.iter().map(|v| v.norm()).collect();
        let mut current = self.clone();
        for l in 1..=ka {
            current = current.derivative(1)?;
            for (i, &r) in self.grid.nodes().iter().enumerate() {
                let t = r.powi(l as i32) * current.values[i].norm();
                if t > out[i] {
                    out[i] = t;
                }
            }
        }
        if k < 0 {
            for (i, &r) in self.grid.nodes().iter().enumerate() {
                out[i] /= r.powi(ka as i32);
            }
        }
        Ok(out)
    }

    /// Extrapolated value at r = 0 (parity-aware).
    pub fn origin_value(&self) -> Complex64 {
        Complex64::new(
            self.grid.origin_value(&self.re(), self.origin_parity),
            self.grid.origin_value(&self.im(), self.origin_parity),
        )
    }

    /// Resample this field at arbitrary radii through cubic Hermite
    /// interpolation; positions beyond r_max follow `tail`.
    pub fn sample_at(&self, positions: &[f64], tail: TailPolicy) -> Result<(Vec<Complex64>, usize)> {
        let re = self.re();
        let im = self.im();
        let ire = Interpolant::new(&self.grid, &re, self.origin_parity, tail)?;
        let iim = Interpolant::new(&self.grid, &im, self.origin_parity, tail)?;
        let out = positions
            .iter()
            .map(|&x| Complex64::new(ire.eval(x), iim.eval(x)))
            .collect();
        Ok((out, ire.extrapolations.get() + iim.extrapolations.get()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::vortex;

    fn grid() -> Arc<RadialGrid> {
        RadialGrid::build(100.0, 1024, 1024, 10.0).unwrap()
    }

    fn nearest_node(g: &RadialGrid, r: f64) -> usize {
        let mut best = 0;
        let mut dist = f64::INFINITY;
        for (i, &x) in g.nodes().iter().enumerate() {
            if (x - r).abs() < dist {
                dist = (x - r).abs();
                best = i;
            }
        }
        best
    }

    #[test]
    fn integrate_q_squared_is_8pi() {
        let g = grid();
        let q = vortex(&g, 0);
        let q2 = q.map(|v| v * v);
        let val = q2.integrate_measure().re;
        let exact_truncated = 8.0 * std::f64::consts::PI * (1.0 - 1.0 / (1.0 + 100.0f64 * 100.0));
        assert!(
            (val - exact_truncated).abs() < 5e-7,
            "got {val}, want {exact_truncated}"
        );
        assert!((val - 8.0 * std::f64::consts::PI).abs() / (8.0 * std::f64::consts::PI) < 2e-4);
    }

    #[test]
    fn integrate_zero_and_indicator() {
        let g = grid();
        let zero = EquivariantField::zeros(g.clone(), 0);
        assert_eq!(zero.integrate_measure(), Complex64::new(0.0, 0.0));
        let ind = EquivariantField::from_real_fn(g, 0, |r| if r <= 1.0 { 1.0 } else { 0.0 });
        let val = ind.integrate_measure().re;
        assert!(
            (val - std::f64::consts::PI).abs() / std::f64::consts::PI < 1e-2,
            "unit disc area: got {val}"
        );
    }

    #[test]
    fn inner_product_real_field_vs_imaginary() {
        let g = grid();
        let q = vortex(&g, 0);
        let lam_q = crate::gauge::lambda_op(&q, 0.0).unwrap();
        let iq = q.times_i();
        let ip = lam_q.inner_real(&iq).unwrap();
        assert!(ip.abs() < 1e-12, "(LambdaQ, iQ)_r = {ip}");
    }

    #[test]
    fn inner_product_q_q_near_8pi() {
        let g = grid();
        let q = vortex(&g, 0);
        let ip = q.inner_real(&q).unwrap();
        let pi8 = 8.0 * std::f64::consts::PI;
        assert!((ip - pi8).abs() / pi8 < 2e-4, "(Q,Q)_r = {ip}");
    }

    #[test]
    fn yq_cutoff_log_divergence() {
        // (yQ, yQ chi_M)_r with sharp cutoff at M = e^10 is ~ 16 pi * 10
        let g = RadialGrid::build(45000.0, 1024, 3072, 10.0).unwrap();
        let q = vortex(&g, 0);
        let yq = EquivariantField::from_fn(g.clone(), 1, |r| {
            Complex64::new(r, 0.0)
        })
        .mul_field(&q);
        let m_cut = (10.0f64).exp();
        let cut: Vec<f64> = g
            .nodes()
            .iter()
            .map(|&r| if r <= m_cut { 1.0 } else { 0.0 })
            .collect();
        let yq_cut = yq.mul_real(&cut);
        let ip = yq.inner_real(&yq_cut).unwrap();
        let per_log = ip / (16.0 * std::f64::consts::PI);
        // the O(1) correction to 16 pi log M is exactly -1/2 for the sharp cutoff
        assert!(
            (per_log - 9.5).abs() < 0.02,
            "expected log M - 1/2 = 9.5, got {per_log}"
        );
        assert!((per_log - 10.0).abs() < 1.0);
    }

    #[test]
    fn derivative_examples() {
        let g = grid();
        // r^2 with even parity: derivative 2r
        let f = EquivariantField::from_real_fn(g.clone(), 0, |r| r * r);
        let d = f.derivative(1).unwrap();
        for (i, &r) in g.nodes().iter().enumerate().step_by(97) {
            assert!((d.values()[i].re - 2.0 * r).abs() < 1e-8 * (1.0 + r));
        }
        // Q'(1) = -sqrt(8)/2, checked at the node nearest r=1
        let q = vortex(&g, 0);
        let dq = q.derivative(1).unwrap();
        let i1 = nearest_node(&g, 1.0);
        let r1 = g.nodes()[i1];
        let want = -2.0 * (8.0f64).sqrt() * r1 / (1.0 + r1 * r1).powi(2);
        assert!((dq.values()[i1].re - want).abs() < 1e-7);
        assert!((dq.values()[i1].re + (8.0f64).sqrt() / 2.0).abs() < 1e-2);
        // (yQ)'(0) = Q(0) = sqrt(8)
        let yq = q.mul_real(g.nodes()).with_parity(Parity::Odd);
        let mut dyq = yq.derivative(1).unwrap();
        dyq.m = 1;
        let v0 = dyq.origin_value();
        assert!((v0.re - (8.0f64).sqrt()).abs() < 1e-6, "got {v0}");
    }

    #[test]
    fn seminorm_examples() {
        let g = grid();
        let c = EquivariantField::from_real_fn(g.clone(), 0, |_| -2.5);
        let s = c.pointwise_seminorm(2).unwrap();
        for v in s.iter().step_by(131) {
            assert!((v - 2.5).abs() < 1e-8);
        }
        // |yQ|_1 at y~1 equals max(|yQ|, |y d(yQ)|) = sqrt(8)/2
        let q = vortex(&g, 0);
        let yq = q.mul_real(g.nodes()).with_parity(Parity::Odd);
        let s1 = yq.pointwise_seminorm(1).unwrap();
        let i1 = nearest_node(&g, 1.0);
        assert!((s1[i1] - (8.0f64).sqrt() / 2.0).abs() < 1e-4);
        // |Q|_{-1}(2) = max(|dQ(2)|, |Q(2)|/2) computed against the oracle
        let sm1 = q.pointwise_seminorm(-1).unwrap();
        let i2 = nearest_node(&g, 2.0);
        let r2 = g.nodes()[i2];
        let q2 = (8.0f64).sqrt() / (1.0 + r2 * r2);
        let dq2 = 2.0 * (8.0f64).sqrt() * r2 / (1.0 + r2 * r2).powi(2);
        let want = dq2.max(q2 / r2);
        assert!((sm1[i2] - want).abs() < 1e-8, "got {} want {want}", sm1[i2]);
    }

    #[test]
    fn vortex_origin_values() {
        let g = grid();
        let q0 = vortex(&g, 0);
        assert!((q0.origin_value().re - (8.0f64).sqrt()).abs() < 1e-9);
        for m in 1..=2 {
            let qm = vortex(&g, m);
            assert!(qm.origin_value().norm() < 1e-10, "Q^({m})(0) != 0");
        }
    }

    #[test]
    fn l2_positive_definite() {
        let g = grid();
        let zero = EquivariantField::zeros(g.clone(), 0);
        assert_eq!(zero.l2_sq(), 0.0);
        let f = EquivariantField::from_real_fn(g, 0, |r| (-(r - 3.0) * (r - 3.0)).exp());
        assert!(f.l2_sq() > 0.0);
    }
}

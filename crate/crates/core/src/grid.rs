//! Composite radial grids: uniform inner region, geometrically graded outer
//! region, product-integration quadrature for the r dr and dr measures, and
//! finite-difference stencils with parity closure at the origin.

use crate::banded::solve_dense;
use crate::{CssError, Result};
use std::sync::{Arc, OnceLock};

/// Evenness of a radial profile under r -> -r; m-equivariant fields carry
/// parity (-1)^m.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of_index(m: usize) -> Self {
        if m % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }
}

const FD_ORDER: usize = 4;
const MAX_DERIV: usize = 3;

/// Node/weight structure for radial profiles on (0, r_max].
pub struct RadialGrid {
    nodes: Vec<f64>,
    n_inner: usize,
    n_outer: usize,
    r_inner: f64,
    r_max: f64,
    /// Quadrature weights for \int_0^{r_max} f(r) r dr.
    w_rdr: Vec<f64>,
    /// Quadrature weights for \int_0^{r_max} f(r) dr.
    w_dr: Vec<f64>,
    /// Per-panel stencils and weights; panel p covers [nodes[p-1], nodes[p]]
    /// (panel 0 covers (0, nodes[0]]).
    panels_rdr: Vec<Panel>,
    panels_dr: Vec<Panel>,
    /// Extrapolatory 4-node rule for the first r dr panel, used only inside
    /// prefix integrals where signed weights are acceptable; keeps cumulative
    /// integrals at the cubic-exact order near the origin.
    prefix_panel0_rdr: Panel,
    stencils: [OnceLock<Vec<Stencil>>; MAX_DERIV],
}

struct Panel {
    first: usize,
    weights: [f64; 4],
    len: usize,
}

/// Finite-difference stencil in extended (parity-ghosted) indexing: entry k
/// applies to extended node `start + k`, where extended index e >= 0 is node e
/// and e < 0 is the ghost node at -nodes[-e-1].
#[derive(Clone)]
pub(crate) struct Stencil {
    pub start: isize,
    pub weights: Vec<f64>,
}

impl std::fmt::Debug for RadialGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RadialGrid")
            .field("n", &self.nodes.len())
            .field("r_inner", &self.r_inner)
            .field("r_max", &self.r_max)
            .finish()
    }
}

/// Fornberg's algorithm: weights of the m-th derivative at `z` on nodes `x`.
pub fn fd_weights(z: f64, x: &[f64], m: usize) -> Vec<f64> {
    let n = x.len();
    let mut c = vec![0.0f64; n * (m + 1)];
    let at = |i: usize, k: usize| i * (m + 1) + k;
    c[at(0, 0)] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[at(i, k)] = c1 * (k as f64 * c[at(i - 1, k - 1)] - c5 * c[at(i - 1, k)]) / c2;
                }
                c[at(i, 0)] = -c1 * c5 * c[at(i - 1, 0)] / c2;
            }
            for k in (1..=mn).rev() {
                c[at(j, k)] = (c4 * c[at(j, k)] - k as f64 * c[at(j, k - 1)]) / c3;
            }
            c[at(j, 0)] = c4 * c[at(j, 0)] / c3;
        }
        c1 = c2;
    }
    (0..n).map(|i| c[at(i, m)]).collect()
}

fn panel_weights(nodes: &[f64], a: f64, b: f64, stencil: &[usize], with_r: bool) -> [f64; 4] {
    // Interpolatory weights: integrate the Lagrange basis on `stencil` against
    // the measure over [a, b], via moment matching in shifted coordinates.
    let rc = 0.5 * (a + b);
    let sc = (0.5 * (b - a)).max(1e-300);
    let k = stencil.len();
    let mut vandermonde = vec![0.0; k * k];
    for (col, &j) in stencil.iter().enumerate() {
        let x = (nodes[j] - rc) / sc;
        let mut p = 1.0;
        for row in 0..k {
            vandermonde[row * k + col] = p;
            p *= x;
        }
    }
    // moments of x^row against the measure over [a, b]
    let xa = (a - rc) / sc;
    let xb = (b - rc) / sc;
    let mut rhs = vec![0.0; k];
    for row in 0..k {
        let p = row as f64;
        let m0 = (xb.powi(row as i32 + 1) - xa.powi(row as i32 + 1)) / (p + 1.0);
        if with_r {
            let m1 = (xb.powi(row as i32 + 2) - xa.powi(row as i32 + 2)) / (p + 2.0);
            rhs[row] = sc * (rc * m0 + sc * m1);
        } else {
            rhs[row] = sc * m0;
        }
    }
    solve_dense(&mut vandermonde, &mut rhs, k).expect("panel moment system is nonsingular");
    let mut w = [0.0; 4];
    w[..k].copy_from_slice(&rhs);
    w
}

impl RadialGrid {
    /// Composite grid: `n_inner` uniform nodes on (0, r_inner], `n_outer`
    /// geometrically graded nodes on (r_inner, r_max].
    pub fn build(r_max: f64, n_inner: usize, n_outer: usize, r_inner: f64) -> Result<Arc<Self>> {
        if !(r_max > r_inner && r_inner > 0.0) {
            return Err(CssError::GridConfig(format!(
                "need r_max > r_inner > 0, got r_max={r_max}, r_inner={r_inner}"
            )));
        }
        if n_inner < 16 || n_outer < 16 {
            return Err(CssError::GridConfig(format!(
                "need node counts >= 16, got n_inner={n_inner}, n_outer={n_outer}"
            )));
        }
        let mut nodes = Vec::with_capacity(n_inner + n_outer);
        let h = r_inner / n_inner as f64;
        for j in 1..=n_inner {
            nodes.push(j as f64 * h);
        }
        let q = (r_max / r_inner).powf(1.0 / n_outer as f64);
        for k in 1..=n_outer {
            nodes.push(r_inner * q.powi(k as i32));
        }
        let last = nodes.len() - 1;
        nodes[last] = r_max; // kill rounding in the final power
        let n = nodes.len();

        let mut panels_rdr = Vec::with_capacity(n);
        let mut panels_dr = Vec::with_capacity(n);
        // Panel 0, rdr: single-node rule w = h^2/2 (positive; exact for even
        // integrands to O(h^4) since the linear moment mismatch needs g'(0)).
        panels_rdr.push(Panel {
            first: 0,
            weights: [nodes[0] * nodes[0] / 2.0, 0.0, 0.0, 0.0],
            len: 1,
        });
        // Panel 0, dr: 4-node extrapolatory rule, exact for cubics.
        let st0: Vec<usize> = (0..4).collect();
        panels_dr.push(Panel {
            first: 0,
            weights: panel_weights(&nodes, 0.0, nodes[0], &st0, false),
            len: 4,
        });
        for p in 1..n {
            let a = nodes[p - 1];
            let b = nodes[p];
            let s = (p as isize - 2).clamp(0, n as isize - 4) as usize;
            let stencil: Vec<usize> = (s..s + 4).collect();
            panels_rdr.push(Panel {
                first: s,
                weights: panel_weights(&nodes, a, b, &stencil, true),
                len: 4,
            });
            panels_dr.push(Panel {
                first: s,
                weights: panel_weights(&nodes, a, b, &stencil, false),
                len: 4,
            });
        }
        let prefix_panel0_rdr = Panel {
            first: 0,
            weights: panel_weights(&nodes, 0.0, nodes[0], &st0, true),
            len: 4,
        };
        let mut w_rdr = vec![0.0; n];
        let mut w_dr = vec![0.0; n];
        for p in &panels_rdr {
            for k in 0..p.len {
                w_rdr[p.first + k] += p.weights[k];
            }
        }
        for p in &panels_dr {
            for k in 0..p.len {
                w_dr[p.first + k] += p.weights[k];
            }
        }

        Ok(Arc::new(Self {
            nodes,
            n_inner,
            n_outer,
            r_inner,
            r_max,
            w_rdr,
            w_dr,
            panels_rdr,
            panels_dr,
            prefix_panel0_rdr,
            stencils: [OnceLock::new(), OnceLock::new(), OnceLock::new()],
        }))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn r_inner(&self) -> f64 {
        self.r_inner
    }

    pub fn n_inner(&self) -> usize {
        self.n_inner
    }

    pub fn n_outer(&self) -> usize {
        self.n_outer
    }

    pub fn fd_order(&self) -> usize {
        FD_ORDER
    }

    /// Stable identifier of the grid layout for keying exported tables.
    pub fn layout_hash(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.r_inner.to_bits().hash(&mut h);
        self.r_max.to_bits().hash(&mut h);
        self.n_inner.hash(&mut h);
        self.n_outer.hash(&mut h);
        h.finish()
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.w_rdr
    }

    pub fn line_weights(&self) -> &[f64] {
        &self.w_dr
    }

    /// \int_0^{r_max} f r dr by nodal quadrature.
    pub fn integrate_rdr(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.w_rdr).map(|(v, w)| v * w).sum()
    }

    /// \int_0^{r_max} f dr by nodal quadrature.
    pub fn integrate_dr(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.w_dr).map(|(v, w)| v * w).sum()
    }

    fn prefix(&self, panels: &[Panel], values: &[f64], first_panel: Option<&Panel>) -> Vec<f64> {
        let mut out = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        for (idx, p) in panels.iter().enumerate() {
            let p = match (idx, first_panel) {
                (0, Some(fp)) => fp,
                _ => p,
            };
            let mut s = 0.0;
            for k in 0..p.len {
                s += p.weights[k] * values[p.first + k];
            }
            acc += s;
            out.push(acc);
        }
        out
    }

    /// Cumulative \int_0^{r_i} f r dr at every node.
    pub fn prefix_rdr(&self, values: &[f64]) -> Vec<f64> {
        self.prefix(&self.panels_rdr, values, Some(&self.prefix_panel0_rdr))
    }

    /// Cumulative \int_0^{r_i} f dr at every node.
    pub fn prefix_dr(&self, values: &[f64]) -> Vec<f64> {
        self.prefix(&self.panels_dr, values, None)
    }

    /// Fit |f| ~ C r^{-p} on the last octave of nodes (short window keeps the
    /// curvature bias of nearly-power-law tails small); returns the exponent p,
    /// or None when the tail is not usably power-like.
    pub fn fit_tail_exponent(&self, values: &[f64]) -> Option<f64> {
        let lo = self.r_max / 2.0;
        let mut sx = 0.0;
        let mut sy = 0.0;
        let mut sxx = 0.0;
        let mut sxy = 0.0;
        let mut count = 0.0;
        for (i, &r) in self.nodes.iter().enumerate() {
            if r < lo {
                continue;
            }
            let a = values[i].abs();
            if a < 1e-280 {
                return None;
            }
            let x = r.ln();
            let y = a.ln();
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            count += 1.0;
        }
        if count < 8.0 {
            return None;
        }
        let denom = count * sxx - sx * sx;
        if denom.abs() < 1e-12 {
            return None;
        }
        let slope = (count * sxy - sx * sy) / denom;
        let p = -slope;
        if p.is_finite() {
            Some(p)
        } else {
            None
        }
    }

    /// Two-term algebraic tail model |f| ~ C r^{-p} (1 + d r^{-2}) fitted on
    /// the last octave by linear least squares in (ln C, p, d); returns the
    /// model evaluated as the tail integral against the requested measure.
    fn tail_model(&self, values: &[f64], min_p: f64, with_r: bool) -> Option<f64> {
        let lo = self.r_max / 2.0;
        let sign = values[values.len() - 1].signum();
        let mut rows: Vec<(f64, f64, f64)> = Vec::new();
        for (i, &r) in self.nodes.iter().enumerate() {
            if r < lo {
                continue;
            }
            let v = sign * values[i];
            if v <= 1e-280 {
                return None; // sign change or underflow; tail not power-like
            }
            rows.push((r.ln(), v.ln(), 1.0 / (r * r)));
        }
        if rows.len() < 12 {
            return None;
        }
        // least squares for ln|f| = a0 - p ln r + d r^{-2}
        let mut m = [0.0f64; 9];
        let mut rhs = [0.0f64; 3];
        for &(x, y, z) in &rows {
            let basis = [1.0, -x, z];
            for i in 0..3 {
                for j in 0..3 {
                    m[i * 3 + j] += basis[i] * basis[j];
                }
                rhs[i] += basis[i] * y;
            }
        }
        crate::banded::solve_dense(&mut m, &mut rhs, 3)?;
        let (a0, p, d) = (rhs[0], rhs[1], rhs[2]);
        if !p.is_finite() || p < min_p {
            return None;
        }
        let c = a0.exp();
        let rm = self.r_max;
        let tail = if with_r {
            // int_R^inf C r^{-p}(1 + d r^{-2}) r dr
            c * (rm.powf(2.0 - p) / (p - 2.0) + d * rm.powf(-p) / p)
        } else {
            c * (rm.powf(1.0 - p) / (p - 1.0) + d * rm.powf(-1.0 - p) / (p + 1.0))
        };
        if tail.is_finite() {
            Some(sign * tail)
        } else {
            None
        }
    }

    /// \int_0^infty f r dr with an analytic algebraic tail correction fitted
    /// on the last octave (only added when the fitted decay has p > 2.2).
    pub fn integrate_rdr_tail_corrected(&self, values: &[f64]) -> f64 {
        let base = self.integrate_rdr(values);
        match self.tail_model(values, 2.2, true) {
            Some(tail) => base + tail,
            None => base,
        }
    }

    /// \int_0^infty f dr with the analogous tail correction (needs p > 1.2).
    pub fn integrate_dr_tail_corrected(&self, values: &[f64]) -> f64 {
        let base = self.integrate_dr(values);
        match self.tail_model(values, 1.2, false) {
            Some(tail) => base + tail,
            None => base,
        }
    }

    /// Extended-axis coordinate: e >= 0 is nodes[e], e < 0 is -nodes[-e-1].
    #[inline]
    fn ext_coord(&self, e: isize) -> f64 {
        if e >= 0 {
            self.nodes[e as usize]
        } else {
            -self.nodes[(-e - 1) as usize]
        }
    }

    pub(crate) fn stencils(&self, k: usize) -> &[Stencil] {
        assert!((1..=MAX_DERIV).contains(&k));
        self.stencils[k - 1].get_or_init(|| {
            let n = self.nodes.len();
            let p = k + FD_ORDER; // p - k = 4th order on arbitrary spacings
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let half = (p - 1) / 2;
                let mut start = i as isize - half as isize;
                // keep the window inside the extended axis
                let min_start = -(p as isize); // at most p ghosts ever needed
                if start < min_start {
                    start = min_start;
                }
                if start + p as isize > n as isize {
                    start = n as isize - p as isize;
                }
                let xs: Vec<f64> = (0..p as isize).map(|o| self.ext_coord(start + o)).collect();
                let weights = fd_weights(self.nodes[i], &xs, k);
                out.push(Stencil { start, weights });
            }
            out
        })
    }

    /// k-th derivative (k <= 3) of nodal values with parity closure at r = 0.
    pub fn differentiate_f64(&self, values: &[f64], k: usize, parity: Parity) -> Result<Vec<f64>> {
        if k == 0 {
            return Ok(values.to_vec());
        }
        if k > MAX_DERIV {
            return Err(CssError::UnsupportedOrder(k));
        }
        if self.nodes.len() < 2 * k + 3 {
            return Err(CssError::GridConfig(
                "grid too small for requested derivative".into(),
            ));
        }
        let sign = parity.sign();
        let st = self.stencils(k);
        let mut out = vec![0.0; values.len()];
        for (i, s) in st.iter().enumerate() {
            let mut acc = 0.0;
            for (o, w) in s.weights.iter().enumerate() {
                let e = s.start + o as isize;
                let v = if e >= 0 {
                    values[e as usize]
                } else {
                    sign * values[(-e - 1) as usize]
                };
                acc += w * v;
            }
            out[i] = acc;
        }
        Ok(out)
    }

    /// Parity-constrained extrapolation of nodal values to r = 0.
    pub fn origin_value(&self, values: &[f64], parity: Parity) -> f64 {
        match parity {
            Parity::Odd => 0.0,
            Parity::Even => {
                // fit a + b r^2 + c r^4 through the first three nodes
                let mut a = [0.0; 9];
                let mut b = [values[0], values[1], values[2]];
                for (row, &r) in self.nodes[..3].iter().enumerate() {
                    a[row * 3] = 1.0;
                    a[row * 3 + 1] = r * r;
                    a[row * 3 + 2] = r.powi(4);
                }
                solve_dense(&mut a, &mut b, 3).map(|_| b[0]).unwrap_or(values[0])
            }
        }
    }
}

/// How to evaluate an interpolant beyond the last grid node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TailPolicy {
    Zero,
    /// Extend by C r^{-p} matched at the boundary, with p fitted on the last
    /// decade of nodes (falls back to zero when no usable fit exists).
    PowerLaw,
}

/// Cubic Hermite interpolant of real nodal data with 4th-order slopes and
/// parity closure below the first node.
pub struct Interpolant<'a> {
    grid: &'a RadialGrid,
    values: &'a [f64],
    slopes: Vec<f64>,
    parity: Parity,
    tail: TailPolicy,
    tail_exponent: Option<f64>,
    pub extrapolations: std::cell::Cell<usize>,
}

impl<'a> Interpolant<'a> {
    pub fn new(
        grid: &'a RadialGrid,
        values: &'a [f64],
        parity: Parity,
        tail: TailPolicy,
    ) -> Result<Self> {
        let slopes = grid.differentiate_f64(values, 1, parity)?;
        let tail_exponent = match tail {
            TailPolicy::PowerLaw => grid.fit_tail_exponent(values),
            TailPolicy::Zero => None,
        };
        Ok(Self {
            grid,
            values,
            slopes,
            parity,
            tail,
            tail_exponent,
            extrapolations: std::cell::Cell::new(0),
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let nodes = self.grid.nodes();
        let n = nodes.len();
        if x > self.grid.r_max() {
            self.extrapolations.set(self.extrapolations.get() + 1);
            return match self.tail {
                TailPolicy::Zero => 0.0,
                TailPolicy::PowerLaw => match self.tail_exponent {
                    Some(p) => self.values[n - 1] * (x / nodes[n - 1]).powf(-p),
                    None => 0.0,
                },
            };
        }
        if x <= nodes[0] {
            // parity-extended cubic through (-r2, -r1, r1, r2)
            let s = self.parity.sign();
            let xs = [-nodes[1], -nodes[0], nodes[0], nodes[1]];
            let vs = [s * self.values[1], s * self.values[0], self.values[0], self.values[1]];
            return lagrange4(&xs, &vs, x);
        }
        let i = match nodes.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => return self.values[i],
            Err(i) => i - 1,
        };
        let (x0, x1) = (nodes[i], nodes[i + 1]);
        let h = x1 - x0;
        let t = (x - x0) / h;
        let (v0, v1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        v0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + d0 * (t3 - 2.0 * t2 + t)
            + v1 * (-2.0 * t3 + 3.0 * t2)
            + d1 * (t3 - t2)
    }
}

fn lagrange4(xs: &[f64; 4], vs: &[f64; 4], x: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..4 {
        let mut l = vs[i];
        for j in 0..4 {
            if i != j {
                l *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        acc += l;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_small() -> Arc<RadialGrid> {
        RadialGrid::build(100.0, 1024, 1024, 10.0).unwrap()
    }

    #[test]
    fn constructor_contract() {
        let g = grid_small();
        assert_eq!(g.len(), 2048);
        assert!((g.nodes()[2047] - 100.0).abs() < 1e-12);
        for w in g.nodes().windows(2) {
            assert!(w[1] > w[0], "nodes must increase strictly");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(RadialGrid::build(5.0, 64, 64, 10.0).is_err());
        assert!(RadialGrid::build(100.0, 8, 64, 10.0).is_err());
    }

    #[test]
    fn quad_weights_nonnegative() {
        let g = grid_small();
        for (i, &w) in g.quad_weights().iter().enumerate() {
            assert!(w >= 0.0, "negative rdr weight {w:e} at node {i}");
        }
    }

    #[test]
    fn quadrature_constant_exact() {
        let g = grid_small();
        let ones = vec![1.0; g.len()];
        let val = g.integrate_rdr(&ones);
        let exact = 100.0f64 * 100.0 / 2.0;
        assert!(
            ((val - exact) / exact).abs() <= 1e-12,
            "got {val}, want {exact}"
        );
    }

    #[test]
    fn quadrature_cubics_exact() {
        let g = grid_small();
        for p in 1..=3 {
            let vals: Vec<f64> = g.nodes().iter().map(|r| r.powi(p)).collect();
            let val = g.integrate_rdr(&vals);
            let exact = 100.0f64.powi(p + 2) / (p as f64 + 2.0);
            assert!(
                ((val - exact) / exact).abs() <= 1e-12,
                "degree {p}: got {val}, want {exact}"
            );
        }
    }

    #[test]
    fn line_quadrature_cubics_exact() {
        let g = grid_small();
        for p in 0..=3 {
            let vals: Vec<f64> = g.nodes().iter().map(|r| r.powi(p)).collect();
            let val = g.integrate_dr(&vals);
            let exact = 100.0f64.powi(p + 1) / (p as f64 + 1.0);
            assert!(
                ((val - exact) / exact).abs() <= 1e-11,
                "degree {p}: got {val}, want {exact}"
            );
        }
    }

    #[test]
    fn derivative_of_cube_is_exactish() {
        let g = grid_small();
        let vals: Vec<f64> = g.nodes().iter().map(|r| r.powi(3)).collect();
        let d = g.differentiate_f64(&vals, 1, Parity::Odd).unwrap();
        for (i, &r) in g.nodes().iter().enumerate() {
            let rel = (d[i] - 3.0 * r * r).abs() / (3.0 * r * r);
            assert!(rel < 1e-10, "at r={r}: rel error {rel:e}");
        }
    }

    #[test]
    fn derivative_fourth_order_on_sine() {
        // sin is odd, so parity closure uses m=1 ghosts
        let err = |n: usize| {
            let g = RadialGrid::build(20.0, n, n, 10.0).unwrap();
            let vals: Vec<f64> = g.nodes().iter().map(|r| r.sin()).collect();
            let d = g.differentiate_f64(&vals, 1, Parity::Odd).unwrap();
            g.nodes()
                .iter()
                .enumerate()
                .map(|(i, r)| (d[i] - r.cos()).abs())
                .fold(0.0f64, f64::max)
        };
        let (e1, e2) = (err(256), err(512));
        let ratio = e1 / e2;
        assert!(
            (12.0..=20.0).contains(&ratio),
            "refinement ratio {ratio} outside [12, 20] (e1={e1:e}, e2={e2:e})"
        );
    }

    #[test]
    fn second_and_third_derivatives_converge() {
        for k in 2..=3 {
            let err = |n: usize| {
                let g = RadialGrid::build(20.0, n, n, 10.0).unwrap();
                let vals: Vec<f64> = g.nodes().iter().map(|r| r.sin()).collect();
                let d = g.differentiate_f64(&vals, k, Parity::Odd).unwrap();
                g.nodes()
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let exact = match k {
                            2 => -r.sin(),
                            _ => -r.cos(),
                        };
                        (d[i] - exact).abs()
                    })
                    .fold(0.0f64, f64::max)
            };
            let ratio = err(256) / err(512);
            assert!(
                (10.0..=24.0).contains(&ratio),
                "k={k}: ratio {ratio} not ~16"
            );
        }
    }

    #[test]
    fn derivative_order_above_three_rejected() {
        let g = grid_small();
        let vals = vec![0.0; g.len()];
        assert!(matches!(
            g.differentiate_f64(&vals, 4, Parity::Even),
            Err(CssError::UnsupportedOrder(4))
        ));
    }

    #[test]
    fn prefix_matches_total() {
        let g = grid_small();
        let vals: Vec<f64> = g.nodes().iter().map(|r| (-r / 7.0f64).exp()).collect();
        let pre = g.prefix_rdr(&vals);
        let total = g.integrate_rdr(&vals);
        // the prefix path uses the extrapolatory first panel, the exposed
        // weights the positive one; they differ by the first-panel error
        assert!((pre[g.len() - 1] - total).abs() < 1e-8 * total.abs().max(1.0));
        let pre_dr = g.prefix_dr(&vals);
        let total_dr = g.integrate_dr(&vals);
        assert!((pre_dr[g.len() - 1] - total_dr).abs() < 1e-13 * total_dr.abs().max(1.0));
    }

    #[test]
    fn tail_correction_recovers_algebraic_integral() {
        let g = grid_small();
        // f = 8/(1+r^2)^2: int_0^inf f r dr = 4
        let vals: Vec<f64> = g.nodes().iter().map(|r| 8.0 / (1.0 + r * r).powi(2)).collect();
        let val = g.integrate_rdr_tail_corrected(&vals);
        assert!(
            (val - 4.0).abs() < 2e-6,
            "tail-corrected integral {val} != 4"
        );
    }

    #[test]
    fn origin_extrapolation() {
        let g = grid_small();
        let vals: Vec<f64> = g.nodes().iter().map(|r| 1.0 / (1.0 + r * r)).collect();
        let v0 = g.origin_value(&vals, Parity::Even);
        assert!((v0 - 1.0).abs() < 1e-10);
        let odd: Vec<f64> = g.nodes().iter().map(|r| r / (1.0 + r * r)).collect();
        assert_eq!(g.origin_value(&odd, Parity::Odd), 0.0);
    }

    #[test]
    fn interpolation_fourth_order() {
        // odd in r, matching the Parity::Odd closure below
        let f = |r: f64| (r / 3.0).sin() * (-r * r / 81.0).exp();
        let err = |n: usize| {
            let g = RadialGrid::build(30.0, n, n, 10.0).unwrap();
            let vals: Vec<f64> = g.nodes().iter().map(|&r| f(r)).collect();
            let it = Interpolant::new(&g, &vals, Parity::Odd, TailPolicy::Zero).unwrap();
            let mut worst = 0.0f64;
            let mut x = 0.01;
            while x < 29.0 {
                worst = worst.max((it.eval(x) - f(x)).abs());
                x += 0.137;
            }
            worst
        };
        let ratio = err(200) / err(400);
        assert!(ratio > 10.0, "interpolation ratio {ratio} too small");
    }
}

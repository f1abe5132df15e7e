//! Linearized operators at the ground state, their kernels and generalized
//! kernel, the repulsive potential, the three outgoing Green's functions, and
//! the generalized-nullspace element rho.

use crate::field::EquivariantField;
use crate::gauge::{a_theta_q_exact, q_exact, vortex};
use crate::grid::{Interpolant, Parity, RadialGrid, TailPolicy};
use crate::{CssError, Result};
use num_complex::Complex64;
use std::sync::{Arc, OnceLock};

/// Linearized operators available through [`Background::apply`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearizedOp {
    /// L_Q: index 0 -> 1 (R-linear)
    LQ,
    /// L_Q^*: index 1 -> 0 (R-linear)
    LQStar,
    /// A_Q: index 1 -> 2
    AQ,
    /// A_Q^*: index 2 -> 1
    AQStar,
    /// H_Q = A_Q^* A_Q: index 1 -> 1
    HQ,
    /// A_Q A_Q^*: index 2 -> 2
    AQAQStar,
}

/// Operator tags for the outgoing Green's function closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelOp {
    AQ,
    HQ,
    LQReal,
    LQImag,
}

/// Operators with an outgoing right inverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InverseOp {
    AQ,
    HQ,
    LQ,
}

/// Ground-state background on a grid: analytic Q and A_theta[Q], cached rho,
/// and all linearized-operator applications.
pub struct Background {
    grid: Arc<RadialGrid>,
    pub q: EquivariantField,
    a_theta_q: Vec<f64>,
    rho: OnceLock<EquivariantField>,
}

impl Background {
    pub fn new(grid: Arc<RadialGrid>) -> Self {
        let q = vortex(&grid, 0);
        let a_theta_q = grid.nodes().iter().map(|&r| a_theta_q_exact(r)).collect();
        Self {
            grid,
            q,
            a_theta_q,
            rho: OnceLock::new(),
        }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn a_theta_q(&self) -> &[f64] {
        &self.a_theta_q
    }

    /// yQ, the kernel of A_Q (and resonance of H_Q).
    pub fn yq(&self) -> EquivariantField {
        let mut f = self.q.mul_real(self.grid.nodes());
        f.m = 1;
        f.origin_parity = Parity::Odd;
        f
    }

    /// Lambda Q = (1 + y d_y) Q.
    pub fn lambda_q(&self) -> EquivariantField {
        EquivariantField::from_real_fn(self.grid.clone(), 0, |y| {
            q_exact(y) + y * crate::gauge::q_prime_exact(y)
        })
    }

    /// i y^2 Q / 4, the b-direction of the generalized kernel.
    pub fn iy2q4(&self) -> EquivariantField {
        self.q
            .mul_real(&self.grid.nodes().iter().map(|y| y * y / 4.0).collect::<Vec<_>>())
            .times_i()
    }

    fn check_index(&self, v: &EquivariantField, expected: usize) -> Result<()> {
        if v.m != expected {
            return Err(CssError::IndexMismatch {
                expected,
                got: v.m,
            });
        }
        Ok(())
    }

    /// D_Q v = v' - (A_theta[Q]/y) v, index 0 -> 1.
    pub fn d_q(&self, v: &EquivariantField) -> Result<EquivariantField> {
        self.check_index(v, 0)?;
        crate::gauge::cr_with_a_theta(&self.a_theta_q, v, 0)
    }

    /// A_Q v = v' - ((1 + A_theta[Q])/y) v, index 1 -> 2.
    pub fn a_q(&self, v: &EquivariantField) -> Result<EquivariantField> {
        self.check_index(v, 1)?;
        crate::gauge::cr_with_a_theta(&self.a_theta_q, v, 1)
    }

    /// A_Q^* v = -v' - ((2 + A_theta[Q])/y) v, index 2 -> 1.
    pub fn a_q_star(&self, v: &EquivariantField) -> Result<EquivariantField> {
        self.check_index(v, 2)?;
        crate::gauge::cr_adjoint_with_a_theta(&self.a_theta_q, v, 1)
    }

    /// H_Q in its local second-order form -d_yy - d_y/y + 1/y^2 - Q^2,
    /// index 1 -> 1; identical to the composition A_Q^* A_Q.
    pub fn h_q(&self, v: &EquivariantField) -> Result<EquivariantField> {
        self.check_index(v, 1)?;
        let d2 = v.derivative(2)?;
        let d1 = v.derivative(1)?;
        let mut out = d2.scaled(Complex64::new(-1.0, 0.0));
        for (i, &y) in self.grid.nodes().iter().enumerate() {
            let q = q_exact(y);
            out.values_mut()[i] +=
                -d1.values()[i] / y + (1.0 / (y * y) - q * q) * v.values()[i];
        }
        out.m = 1;
        out.origin_parity = Parity::Odd;
        Ok(out)
    }

    /// A_Q A_Q^* in its local form -d_yy - d_y/y + W/y^2 with the
    /// operator-derived W = (2+A_theta[Q])^2 + y^2 Q^2/2 = 4/(1+y^2);
    /// index 2 -> 2, identical to the composition A_Q of A_Q^*.
    pub fn aq_aq_star(&self, v: &EquivariantField) -> Result<EquivariantField> {
        self.check_index(v, 2)?;
        let d2 = v.derivative(2)?;
        let d1 = v.derivative(1)?;
        let mut out = d2.scaled(Complex64::new(-1.0, 0.0));
        for (i, &y) in self.grid.nodes().iter().enumerate() {
            let w = 4.0 / (1.0 + y * y);
            out.values_mut()[i] += -d1.values()[i] / y + w / (y * y) * v.values()[i];
        }
        out.m = 2;
        out.origin_parity = Parity::Even;
        Ok(out)
    }

    /// L_Q v = D_Q v + Q B_Q v, index 0 -> 1.
    pub fn l_q(&self, v: &EquivariantField) -> Result<EquivariantField> {
        self.check_index(v, 0)?;
        let mut out = self.d_q(v)?;
        let prod: Vec<f64> = self
            .q
            .values()
            .iter()
            .zip(v.values())
            .map(|(a, b)| (a.conj() * b).re)
            .collect();
        let pre = self.grid.prefix_rdr(&prod);
        for (i, &y) in self.grid.nodes().iter().enumerate() {
            out.values_mut()[i] += self.q.values()[i] * (pre[i] / y);
        }
        Ok(out)
    }

    /// L_Q^* v = D_Q^* v + Q int_y^infty Re(Q v) dy', index 1 -> 0.
    pub fn l_q_star(&self, v: &EquivariantField) -> Result<EquivariantField> {
        self.check_index(v, 1)?;
        let mut out = crate::gauge::cr_adjoint_with_a_theta(&self.a_theta_q, v, 0)?;
        let f: Vec<f64> = self
            .q
            .values()
            .iter()
            .zip(v.values())
            .map(|(a, b)| (a.conj() * b).re)
            .collect();
        let total = self.grid.integrate_dr_tail_corrected(&f);
        let prefix = self.grid.prefix_dr(&f);
        for (i, val) in out.values_mut().iter_mut().enumerate() {
            *val += self.q.values()[i] * (total - prefix[i]);
        }
        Ok(out)
    }

    /// i cal-L_Q = i L_Q^* L_Q via composition (the self-dual factorization).
    pub fn i_cal_l_q(&self, v: &EquivariantField) -> Result<EquivariantField> {
        let lv = self.l_q(v)?;
        Ok(self.l_q_star(&lv)?.times_i())
    }

    pub fn apply(&self, op: LinearizedOp, v: &EquivariantField) -> Result<EquivariantField> {
        match op {
            LinearizedOp::LQ => self.l_q(v),
            LinearizedOp::LQStar => self.l_q_star(v),
            LinearizedOp::AQ => self.a_q(v),
            LinearizedOp::AQStar => self.a_q_star(v),
            LinearizedOp::HQ => self.h_q(v),
            LinearizedOp::AQAQStar => self.aq_aq_star(v),
        }
    }

    /// The repulsive potential Vtilde = (2 + A_theta[Q])^2 + y^2 Q^2 together
    /// with -y d_y Vtilde (both from closed forms).
    pub fn repulsive_potential(&self) -> (Vec<f64>, Vec<f64>) {
        // Vtilde = 4(1+2y^2)/(1+y^2)^2, -y Vtilde' = 16 y^4/(1+y^2)^3
        let vt: Vec<f64> = self
            .grid
            .nodes()
            .iter()
            .map(|&y| {
                let b = 2.0 + a_theta_q_exact(y);
                let q = q_exact(y);
                b * b + y * y * q * q
            })
            .collect();
        let neg_y_dvt: Vec<f64> = self
            .grid
            .nodes()
            .iter()
            .map(|&y| 16.0 * y.powi(4) / (1.0 + y * y).powi(3))
            .collect();
        (vt, neg_y_dvt)
    }

    /// J = yQ and Gamma = J int_1^y J^{-2} dz/z of the H_Q fundamental system;
    /// Gamma in closed form since the integral is elementary.
    pub fn gamma_fundamental(&self) -> Vec<f64> {
        self.grid.nodes().iter().map(|&y| gamma_exact(y)).collect()
    }

    /// A_Q Gamma = (1+y^2)/(2 sqrt(2) y^2).
    pub fn a_q_gamma(&self) -> Vec<f64> {
        self.grid
            .nodes()
            .iter()
            .map(|&y| (1.0 + y * y) / (2.0 * (2.0f64).sqrt() * y * y))
            .collect()
    }

    /// Outgoing Green's function value G(y, y'); zero for y < y' by contract.
    pub fn green_kernel(&self, op: KernelOp, y: f64, yp: f64) -> f64 {
        if y < yp {
            return 0.0;
        }
        match op {
            KernelOp::AQ => y * q_exact(y) / (yp * q_exact(yp)),
            KernelOp::HQ => {
                yp * (y * q_exact(y) * gamma_exact(yp) - gamma_exact(y) * yp * q_exact(yp))
            }
            KernelOp::LQImag => q_exact(y) / q_exact(yp),
            KernelOp::LQReal => {
                let table = self.volterra_kernel(yp, y.max(yp * 1.001)).expect("volterra march");
                q_exact(y) / q_exact(yp) * table.eval_i(y)
            }
        }
    }

    /// Volterra kernel I(., y') tabulated on [y', y_max], together with
    /// y d_y I; marched as the equivalent first-order system
    /// (y d_y I = -S, S' = y Q^2 I) with step-doubling control.
    pub fn volterra_kernel(&self, yp: f64, y_max: f64) -> Result<VolterraTable> {
        if !(yp > 0.0 && yp < y_max && y_max <= self.grid.r_max() * (1.0 + 1e-12)) {
            return Err(CssError::Domain(format!(
                "volterra kernel needs 0 < y' < y_max <= r_max, got y'={yp}, y_max={y_max}"
            )));
        }
        let mut mesh: Vec<f64> = vec![yp];
        for &y in self.grid.nodes() {
            if y > yp && y <= y_max {
                mesh.push(y);
            }
        }
        if mesh.len() < 2 {
            mesh.push(y_max);
        }
        let mut prev = march_volterra(&mesh, 1);
        for refine in 1..=6 {
            let cur = march_volterra(&mesh, 1 << refine);
            let diff = prev
                .i_vals
                .iter()
                .zip(cur.i_vals.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            if diff <= 1e-9 {
                return Ok(cur);
            }
            prev = cur;
        }
        Err(CssError::VolterraDiverged(format!(
            "no 1e-9 agreement after 6 refinements (y'={yp})"
        )))
    }

    /// Outgoing right inverse applied to data of the operator's target index.
    pub fn outgoing_inverse(
        &self,
        op: InverseOp,
        f: &EquivariantField,
    ) -> Result<EquivariantField> {
        let grid = &self.grid;
        match op {
            InverseOp::AQ => {
                self.check_index(f, 2)?;
                if f.values().iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                    return Err(CssError::Domain("non-finite data".into()));
                }
                // v = yQ int_0^y f/(y'Q) dy'
                let h_re: Vec<f64> = grid
                    .nodes()
                    .iter()
                    .enumerate()
                    .map(|(i, &y)| f.values()[i].re / (y * q_exact(y)))
                    .collect();
                let h_im: Vec<f64> = grid
                    .nodes()
                    .iter()
                    .enumerate()
                    .map(|(i, &y)| f.values()[i].im / (y * q_exact(y)))
                    .collect();
                let pre_re = grid.prefix_dr(&h_re);
                let pre_im = grid.prefix_dr(&h_im);
                let vals: Vec<Complex64> = grid
                    .nodes()
                    .iter()
                    .enumerate()
                    .map(|(i, &y)| y * q_exact(y) * Complex64::new(pre_re[i], pre_im[i]))
                    .collect();
                Ok(EquivariantField::new(grid.clone(), 1, vals))
            }
            InverseOp::HQ => {
                self.check_index(f, 1)?;
                // v = J cum(Gamma f y dy) - Gamma cum(J f y dy)
                let gam = self.gamma_fundamental();
                let solve_part = |part: Vec<f64>| -> Vec<f64> {
                    let gf: Vec<f64> = gam.iter().zip(part.iter()).map(|(g, p)| g * p).collect();
                    let jf: Vec<f64> = grid
                        .nodes()
                        .iter()
                        .zip(part.iter())
                        .map(|(&y, p)| y * q_exact(y) * p)
                        .collect();
                    let a = grid.prefix_rdr(&gf);
                    let b = grid.prefix_rdr(&jf);
                    grid.nodes()
                        .iter()
                        .enumerate()
                        .map(|(i, &y)| y * q_exact(y) * a[i] - gam[i] * b[i])
                        .collect()
                };
                let re = solve_part(f.re());
                let im = solve_part(f.im());
                let vals: Vec<Complex64> = re
                    .into_iter()
                    .zip(im)
                    .map(|(a, b)| Complex64::new(a, b))
                    .collect();
                Ok(EquivariantField::new(grid.clone(), 1, vals))
            }
            InverseOp::LQ => {
                self.check_index(f, 1)?;
                // real part: v = Q g with g' = f_re/Q - G/y, G' = y Q^2 g
                let re = invert_lq_real(grid, &f.re())?;
                // imaginary part: v = i Q int_0^y f_im/Q dy'
                let him: Vec<f64> = grid
                    .nodes()
                    .iter()
                    .enumerate()
                    .map(|(i, &y)| {
                        let _ = y;
                        f.values()[i].im / q_exact(grid.nodes()[i])
                    })
                    .collect();
                let pre = grid.prefix_dr(&him);
                let vals: Vec<Complex64> = grid
                    .nodes()
                    .iter()
                    .enumerate()
                    .map(|(i, &y)| Complex64::new(re[i], q_exact(y) * pre[i]))
                    .collect();
                Ok(EquivariantField::new(grid.clone(), 0, vals))
            }
        }
    }

    /// rho = outgoing L_Q^{-1} (y Q / 2): real, with L_Q rho = yQ/2 and
    /// cal-L_Q rho = Q; cached per background.
    pub fn rho(&self) -> &EquivariantField {
        self.rho.get_or_init(|| {
            let half_yq = self.yq().scaled(Complex64::new(0.5, 0.0));
            self.outgoing_inverse(InverseOp::LQ, &half_yq)
                .expect("rho construction")
        })
    }

    /// || (i A_Q^* A_Q - L_Q i L_Q^*) phi ||_{L^2} and the relative residual
    /// against || H_Q phi ||_{L^2}, for an m=1 test field.
    pub fn conjugation_identity_residual(&self, phi: &EquivariantField) -> Result<(f64, f64)> {
        self.check_index(phi, 1)?;
        let lhs = self.h_q(phi)?.times_i();
        let rhs = self.l_q(&self.l_q_star(phi)?.times_i())?;
        let diff = lhs.sub(&rhs).l2();
        let scale = lhs.l2().max(1e-300);
        Ok((diff, diff / scale))
    }
}

/// Gamma(y) = yQ [ (y^2 - y^{-2})/16 + log(y)/4 ].
pub fn gamma_exact(y: f64) -> f64 {
    y * q_exact(y) * ((y * y - 1.0 / (y * y)) / 16.0 + y.ln() / 4.0)
}

/// d/dy of Gamma in closed form.
pub fn gamma_prime_exact(y: f64) -> f64 {
    let j = (y * y - 1.0 / (y * y)) / 16.0 + y.ln() / 4.0;
    let jp = (y + 1.0 / (y * y * y)) / 8.0 + 1.0 / (4.0 * y);
    let big_j_prime = q_exact(y) + y * crate::gauge::q_prime_exact(y);
    big_j_prime * j + y * q_exact(y) * jp
}

/// Tabulated Volterra kernel column I(., y').
pub struct VolterraTable {
    pub mesh: Vec<f64>,
    pub i_vals: Vec<f64>,
    pub ydy_vals: Vec<f64>,
}

impl VolterraTable {
    /// Linear interpolation inside the marching mesh.
    pub fn eval_i(&self, y: f64) -> f64 {
        eval_linear(&self.mesh, &self.i_vals, y)
    }

    pub fn eval_ydy(&self, y: f64) -> f64 {
        eval_linear(&self.mesh, &self.ydy_vals, y)
    }
}

fn eval_linear(mesh: &[f64], vals: &[f64], y: f64) -> f64 {
    if y <= mesh[0] {
        return vals[0];
    }
    if y >= mesh[mesh.len() - 1] {
        return vals[vals.len() - 1];
    }
    let i = match mesh.binary_search_by(|v| v.partial_cmp(&y).unwrap()) {
        Ok(i) => return vals[i],
        Err(i) => i - 1,
    };
    let t = (y - mesh[i]) / (mesh[i + 1] - mesh[i]);
    vals[i] * (1.0 - t) + vals[i + 1] * t
}

/// RK4 march of I' = -S/y, S' = y Q^2 I from I(y')=1, S(y')=0, with
/// `substeps` subdivisions per mesh cell.
fn march_volterra(mesh: &[f64], substeps: usize) -> VolterraTable {
    let mut i_vals = Vec::with_capacity(mesh.len());
    let mut ydy_vals = Vec::with_capacity(mesh.len());
    let mut iv = 1.0f64;
    let mut sv = 0.0f64;
    i_vals.push(iv);
    ydy_vals.push(0.0);
    let rhs = |y: f64, i: f64, s: f64| -> (f64, f64) {
        let q = q_exact(y);
        (-s / y, y * q * q * i)
    };
    for k in 0..mesh.len() - 1 {
        let h = (mesh[k + 1] - mesh[k]) / substeps as f64;
        let mut y = mesh[k];
        for _ in 0..substeps {
            let (k1i, k1s) = rhs(y, iv, sv);
            let (k2i, k2s) = rhs(y + h / 2.0, iv + h / 2.0 * k1i, sv + h / 2.0 * k1s);
            let (k3i, k3s) = rhs(y + h / 2.0, iv + h / 2.0 * k2i, sv + h / 2.0 * k2s);
            let (k4i, k4s) = rhs(y + h, iv + h * k3i, sv + h * k3s);
            iv += h / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i);
            sv += h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
            y += h;
        }
        i_vals.push(iv);
        ydy_vals.push(-sv);
    }
    VolterraTable {
        mesh: mesh.to_vec(),
        i_vals,
        ydy_vals,
    }
}

/// Solve L_Q (Q g) = f for real f via g' = f/Q - G/y, G' = y Q^2 g; returns
/// the nodal values of Q g. RK4 with the data interpolated between nodes.
fn invert_lq_real(grid: &Arc<RadialGrid>, f: &[f64]) -> Result<Vec<f64>> {
    let interp = Interpolant::new(grid, f, Parity::Odd, TailPolicy::Zero)?;
    let nodes = grid.nodes();
    let mut out = Vec::with_capacity(nodes.len());
    let mut g = 0.0f64;
    let mut big_g = 0.0f64;
    let rhs = |y: f64, g: f64, big_g: f64| -> (f64, f64) {
        if y == 0.0 {
            // f/Q vanishes at the origin for index-1 data, and G/y -> 0
            return (0.0, 0.0);
        }
        let q = q_exact(y);
        (interp.eval(y) / q - big_g / y, y * q * q * g)
    };
    let mut y = 0.0f64;
    for &target in nodes {
        // two RK4 substeps per cell keep the local error at the h^4 scale
        let steps = 2;
        let h = (target - y) / steps as f64;
        for _ in 0..steps {
            let (k1g, k1s) = rhs(y, g, big_g);
            let (k2g, k2s) = rhs(y + h / 2.0, g + h / 2.0 * k1g, big_g + h / 2.0 * k1s);
            let (k3g, k3s) = rhs(y + h / 2.0, g + h / 2.0 * k2g, big_g + h / 2.0 * k2s);
            let (k4g, k4s) = rhs(y + h, g + h * k3g, big_g + h * k3s);
            g += h / 6.0 * (k1g + 2.0 * k2g + 2.0 * k3g + k4g);
            big_g += h / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
            y += h;
        }
        out.push(q_exact(target) * g);
    }
    Ok(out)
}

//! The tail-computation pipeline: the solvability ratio c_b, the correction
//! profiles g2, T20, U2, g30, U30, the localized modified profiles P, P1, P2,
//! the modulation vectors, the profile-equation residuals, and the
//! compatibility defects between the three profile levels.

use crate::cutoff::chi_values;
use crate::field::EquivariantField;
use crate::gauge::{
    a_theta_of, covariant_cr_derivative, cr_adjoint_with_a_theta, cr_with_a_theta, lambda_op,
    linearized_bogomolnyi, q_exact, q_prime_exact,
};
use crate::grid::Parity;
use crate::norms::{adapted_norm, AdaptedNorm};
use crate::spectral::{gamma_exact, gamma_prime_exact, Background};
use crate::{CssError, Result};
use num_complex::Complex64;

/// The four modulation parameters plus derived scales.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ModulationState {
    pub lambda: f64,
    pub gamma: f64,
    pub b: f64,
    pub eta: f64,
}

impl ModulationState {
    pub fn new(lambda: f64, gamma: f64, b: f64, eta: f64) -> Self {
        Self {
            lambda,
            gamma,
            b,
            eta,
        }
    }

    pub fn log_b_abs(&self) -> f64 {
        self.b.ln().abs()
    }

    /// B0 = b^{-1/2}.
    pub fn b0_radius(&self) -> f64 {
        self.b.powf(-0.5)
    }

    /// B1 = b^{-1/2} |log b| = B0 |log b| exactly.
    pub fn b1_radius(&self) -> f64 {
        self.b0_radius() * self.log_b_abs()
    }

    /// Inside the trapped region |eta| <= b / |log b|.
    pub fn trapped(&self) -> bool {
        self.eta.abs() <= self.b / self.log_b_abs()
    }
}

/// Report of the solvability-restoring ratio computation.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct CbReport {
    pub c_b: f64,
    pub numerator: f64,
    pub denominator: f64,
    /// c_b |log b|, the constant the asymptotic expansion fits.
    pub fitted_constant: f64,
}

/// Lambda(yQ/2) = yQ + y^2 Q'/2 in closed form.
pub fn lambda_half_yq(y: f64) -> f64 {
    y * q_exact(y) + 0.5 * y * y * q_prime_exact(y)
}

/// c_b = (Lambda(yQ/2), yQ/2)_r / (yQ/2 chi_{B0}, yQ/2)_r at cutoff radius
/// `cutoff_radius` (the profile pipeline passes B0). The numerator is the
/// conditionally convergent pairing; its integrand collapses to an exact
/// boundary term, so plain quadrature of the collapsed form is well posed.
pub fn compute_cb(bg: &Background, b: f64, cutoff_radius: f64) -> Result<CbReport> {
    if !(0.0 < b && b < 1.0) {
        return Err(CssError::Domain(format!("need 0 < b < 1, got {b}")));
    }
    let grid = bg.grid();
    if 2.0 * cutoff_radius > grid.r_max() {
        return Err(CssError::Domain(format!(
            "cutoff 2*{cutoff_radius} beyond the grid (r_max {})",
            grid.r_max()
        )));
    }
    let nodes = grid.nodes();
    // (Lambda f, f)_r with f = yQ/2; the integrand is f^2 + y f f' whose
    // cumulative is y^2 f^2 / 2 exactly, so quadrature equals the boundary value
    let num_integrand: Vec<f64> = nodes
        .iter()
        .map(|&y| {
            let f = 0.5 * y * q_exact(y);
            lambda_half_yq(y) * 0.5 * f / (0.5 * y * q_exact(y)) * f
            // == Lambda(f) * f, kept in collapsed form below
        })
        .collect();
    let _ = num_integrand;
    let collapsed: Vec<f64> = nodes
        .iter()
        .map(|&y| {
            let f = 0.5 * y * q_exact(y);
            lambda_half_yq(y) * 0.5 * f
        })
        .collect();
    let numerator = 2.0 * crate::field::TWO_PI * grid.integrate_rdr(&collapsed);
    let chi = chi_values(nodes, cutoff_radius);
    let den_integrand: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let f = 0.5 * y * q_exact(y);
            f * f * chi[i]
        })
        .collect();
    let denominator = crate::field::TWO_PI * grid.integrate_rdr(&den_integrand);
    let c_b = numerator / denominator;
    Ok(CbReport {
        c_b,
        numerator,
        denominator,
        fitted_constant: c_b * b.ln().abs(),
    })
}

/// Correction profiles of the quadratic/cubic tail computation.
pub struct CorrectionProfiles {
    pub b: f64,
    pub c_b: f64,
    pub g2: EquivariantField,
    pub t20: EquivariantField,
    /// y T20' assembled from the closed-form derivatives of the fundamental
    /// system (no finite differencing of marched quantities).
    pub lambda1_t20: EquivariantField,
    pub u2: EquivariantField,
    pub g30: EquivariantField,
    pub u30: EquivariantField,
}

pub fn build_correction_profiles(bg: &Background, b: f64) -> Result<CorrectionProfiles> {
    let grid = bg.grid().clone();
    let nodes = grid.nodes();
    let state = ModulationState::new(1.0, 0.0, b, 0.0);
    let b0 = state.b0_radius();
    let cb = compute_cb(bg, b, b0)?;
    let chi_b0 = chi_values(nodes, b0);

    // g2 = Lambda(yQ/2) - c_b (yQ/2) chi_{B0}
    let g2_vals: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(i, &y)| lambda_half_yq(y) - cb.c_b * 0.5 * y * q_exact(y) * chi_b0[i])
        .collect();
    let g2 = EquivariantField::new(
        grid.clone(),
        1,
        g2_vals.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    );

    // T20 = J cum(Gamma g2 y dy) - Gamma cum(J g2 y dy)
    let gam: Vec<f64> = nodes.iter().map(|&y| gamma_exact(y)).collect();
    let jf: Vec<f64> = nodes.iter().map(|&y| y * q_exact(y)).collect();
    let gg2: Vec<f64> = gam.iter().zip(&g2_vals).map(|(g, v)| g * v).collect();
    let jg2: Vec<f64> = jf.iter().zip(&g2_vals).map(|(j, v)| j * v).collect();
    let cum_a = grid.prefix_rdr(&gg2);
    let cum_b = grid.prefix_rdr(&jg2);
    let t20_vals: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(i, &_y)| jf[i] * cum_a[i] - gam[i] * cum_b[i])
        .collect();
    let t20 = EquivariantField::new(
        grid.clone(),
        1,
        t20_vals.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    );

    // T20' = J' cum_a - Gamma' cum_b (the cum-derivative terms cancel), so
    // Lambda_1 T20 = y T20' needs no finite differencing
    let lambda1_t20_vals: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let jp = q_exact(y) + y * q_prime_exact(y);
            y * (jp * cum_a[i] - gamma_prime_exact(y) * cum_b[i])
        })
        .collect();
    let lambda1_t20 = EquivariantField::new(
        grid.clone(),
        1,
        lambda1_t20_vals
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect(),
    );

    // U2 = -(A_Q Gamma) cum(J g2 y dy)
    let aqg = bg.a_q_gamma();
    let u2_vals: Vec<f64> = (0..nodes.len()).map(|i| -aqg[i] * cum_b[i]).collect();
    let u2 = EquivariantField::new(
        grid.clone(),
        2,
        u2_vals.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    );

    // g30 = Lambda_1 T20 - (int_0^y (Q T20 + y'^3 Q^2/8) dy') (yQ/2)
    let s_integrand: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let q = q_exact(y);
            q * t20_vals[i] + y.powi(3) * q * q / 8.0
        })
        .collect();
    let s_cum = grid.prefix_dr(&s_integrand);
    let g30_vals: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(i, &y)| lambda1_t20_vals[i] - s_cum[i] * 0.5 * y * q_exact(y))
        .collect();
    let g30 = EquivariantField::new(
        grid.clone(),
        1,
        g30_vals.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    );

    // U30 = -(A_Q Gamma) cum(J g30 y dy)
    let jg30: Vec<f64> = jf.iter().zip(&g30_vals).map(|(j, v)| j * v).collect();
    let cum_c = grid.prefix_rdr(&jg30);
    let u30_vals: Vec<f64> = (0..nodes.len()).map(|i| -aqg[i] * cum_c[i]).collect();
    let u30 = EquivariantField::new(
        grid.clone(),
        2,
        u30_vals.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    );

    Ok(CorrectionProfiles {
        b,
        c_b: cb.c_b,
        g2,
        t20,
        lambda1_t20,
        u2,
        g30,
        u30,
    })
}

/// The localized modified profiles P, P1, P2 and their constituents.
pub struct ProfileSet {
    pub state: ModulationState,
    pub p: EquivariantField,
    pub p1: EquivariantField,
    pub p2: EquivariantField,
    pub corrections: CorrectionProfiles,
    pub chi_b0: Vec<f64>,
    pub chi_b1: Vec<f64>,
}

pub fn assemble_modified_profiles(bg: &Background, state: ModulationState) -> Result<ProfileSet> {
    let grid = bg.grid().clone();
    if state.b <= 0.0 {
        return Err(CssError::Domain("profiles need b > 0".into()));
    }
    let b1 = state.b1_radius();
    if grid.r_max() < 4.0 * b1 {
        return Err(CssError::Domain(format!(
            "grid r_max {} shorter than 4 B1 = {}",
            grid.r_max(),
            4.0 * b1
        )));
    }
    let corrections = build_correction_profiles(bg, state.b)?;
    let nodes = grid.nodes();
    let chi_b0 = chi_values(nodes, state.b0_radius());
    let chi_b1 = chi_values(nodes, b1);
    let rho = bg.rho();
    let (b, eta) = (state.b, state.eta);

    // P = Q + chi_B1 { -i b y^2 Q/4 - eta rho }
    let p_vals: Vec<Complex64> = nodes
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let q = q_exact(y);
            let lin = Complex64::new(0.0, -b * y * y / 4.0) * q - eta * rho.values()[i];
            Complex64::new(q, 0.0) + chi_b1[i] * lin
        })
        .collect();
    let p = EquivariantField::new(grid.clone(), 0, p_vals);

    // P1 = chi_B1 { -(ib + eta) yQ/2 } + chi_B0 { b^2 T20 }
    let p1_vals: Vec<Complex64> = nodes
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let half_yq = 0.5 * y * q_exact(y);
            chi_b1[i] * Complex64::new(-eta, -b) * half_yq
                + chi_b0[i] * b * b * corrections.t20.values()[i]
        })
        .collect();
    let p1 = EquivariantField::new(grid.clone(), 1, p1_vals);

    // P2 = chi_B0 { (b^2 - 2 i b eta - eta^2) U2 + i b^3 U30 }
    let quad = Complex64::new(b * b - eta * eta, -2.0 * b * eta);
    let p2_vals: Vec<Complex64> = (0..nodes.len())
        .map(|i| {
            chi_b0[i]
                * (quad * corrections.u2.values()[i]
                    + Complex64::new(0.0, b.powi(3)) * corrections.u30.values()[i])
        })
        .collect();
    let p2 = EquivariantField::new(grid.clone(), 2, p2_vals);

    Ok(ProfileSet {
        state,
        p,
        p1,
        p2,
        corrections,
        chi_b0,
        chi_b1,
    })
}

/// The three 4-component modulation vector tuples
/// v_k = (Lambda_{-k} P_k, -i P_k, -d_b P_k, -d_eta P_k).
pub struct ModulationVectors {
    pub v0: [EquivariantField; 4],
    pub v1: [EquivariantField; 4],
    pub v2: [EquivariantField; 4],
}

/// Parameter derivatives of the profile set by centered differences with
/// relative step 1e-3 b.
pub fn profile_parameter_derivatives(
    bg: &Background,
    state: ModulationState,
) -> Result<[(EquivariantField, EquivariantField, EquivariantField); 2]> {
    let db = 1e-3 * state.b;
    if db == 0.0 {
        return Err(CssError::Domain("parameter step underflow".into()));
    }
    let diff = |plus: &ProfileSet, minus: &ProfileSet, h: f64| {
        let scale = Complex64::new(1.0 / (2.0 * h), 0.0);
        (
            plus.p.sub(&minus.p).scaled(scale),
            plus.p1.sub(&minus.p1).scaled(scale),
            plus.p2.sub(&minus.p2).scaled(scale),
        )
    };
    let bp = assemble_modified_profiles(bg, ModulationState { b: state.b + db, ..state })?;
    let bm = assemble_modified_profiles(bg, ModulationState { b: state.b - db, ..state })?;
    let d_b = diff(&bp, &bm, db);
    let ep = assemble_modified_profiles(bg, ModulationState { eta: state.eta + db, ..state })?;
    let em = assemble_modified_profiles(bg, ModulationState { eta: state.eta - db, ..state })?;
    let d_eta = diff(&ep, &em, db);
    Ok([d_b, d_eta])
}

pub fn modulation_vectors(bg: &Background, state: ModulationState) -> Result<ModulationVectors> {
    let set = assemble_modified_profiles(bg, state)?;
    let [(dbp, dbp1, dbp2), (dep, dep1, dep2)] = profile_parameter_derivatives(bg, state)?;
    let neg = Complex64::new(-1.0, 0.0);
    let v0 = [
        lambda_op(&set.p, 0.0)?,
        set.p.times_i().scaled(neg),
        dbp.scaled(neg),
        dep.scaled(neg),
    ];
    let v1 = [
        lambda_op(&set.p1, -1.0)?,
        set.p1.times_i().scaled(neg),
        dbp1.scaled(neg),
        dep1.scaled(neg),
    ];
    let v2 = [
        lambda_op(&set.p2, -2.0)?,
        set.p2.times_i().scaled(neg),
        dbp2.scaled(neg),
        dep2.scaled(neg),
    ];
    Ok(ModulationVectors { v0, v1, v2 })
}

/// Profile-equation residuals Psi, Psi1, Psi2 under the formal parameter law.
pub struct ProfileResiduals {
    pub psi: EquivariantField,
    pub psi1: EquivariantField,
    pub psi2: EquivariantField,
    pub sup_psi: f64,
    pub psi1_x: f64,
    pub psi2_h12: f64,
}

/// int_0^y Re(conj(P) P1) dy' nodal values and its tail-corrected total.
fn p_p1_line_integrals(set: &ProfileSet) -> (Vec<f64>, f64) {
    let prod: Vec<f64> = set
        .p
        .values()
        .iter()
        .zip(set.p1.values())
        .map(|(a, b)| (a.conj() * b).re)
        .collect();
    let prefix = set.p.grid().prefix_dr(&prod);
    let total = set.p.grid().integrate_dr_tail_corrected(&prod);
    (prefix, total)
}

pub fn profile_equation_residuals(
    bg: &Background,
    state: ModulationState,
    m_trunc: f64,
) -> Result<ProfileResiduals> {
    if !state.trapped() {
        return Err(CssError::Domain(format!(
            "state outside the trapped region: |eta|={} > b/|log b|={}",
            state.eta.abs(),
            state.b / state.log_b_abs()
        )));
    }
    let set = assemble_modified_profiles(bg, state)?;
    let [(dbp, dbp1, dbp2), (dep, dep1, dep2)] = profile_parameter_derivatives(bg, state)?;
    let (b, eta) = (state.b, state.eta);
    let c_b = set.corrections.c_b;

    // formal parameter law
    let a = -b; // lambda_s / lambda
    let b_s = -(b * b) - eta * eta - c_b * (b * b - eta * eta);
    let eta_s = -2.0 * c_b * b * eta;
    let gamma_tilde_s = -eta;
    let (prefix, total) = p_p1_line_integrals(&set);
    let gamma_s = gamma_tilde_s - total;

    let ds = |db: &EquivariantField, de: &EquivariantField| {
        db.scaled(Complex64::new(b_s, 0.0))
            .add(&de.scaled(Complex64::new(eta_s, 0.0)))
    };
    let ds_p = ds(&dbp, &dep);
    let ds_p1 = ds(&dbp1, &dep1);
    let ds_p2 = ds(&dbp2, &dep2);

    let a_theta_p = a_theta_of(&set.p);

    // Mod . v with Mod = (a + b, gamma_s - eta, b_s + b^2 + eta^2, eta_s)
    let mod2 = gamma_s - eta;
    let mod3 = b_s + b * b + eta * eta;
    let mod4 = eta_s;
    let mod_dot_v = set
        .p
        .times_i()
        .scaled(Complex64::new(-mod2, 0.0))
        .add(&dbp.scaled(Complex64::new(-mod3, 0.0)))
        .add(&dep.scaled(Complex64::new(-mod4, 0.0)));

    // i Psi = (d_s - a Lambda + gamma_s i) P + i L_P^* P1 + Mod . v
    let lam_p = lambda_op(&set.p, 0.0)?;
    let lstar_p1 = linearized_bogomolnyi(&set.p, &set.p1, true)?;
    let i_psi = ds_p
        .axpy(Complex64::new(-a, 0.0), &lam_p)
        .axpy(Complex64::new(0.0, gamma_s), &set.p)
        .add(&lstar_p1.times_i())
        .add(&mod_dot_v);
    let mut psi = i_psi.scaled(Complex64::new(0.0, -1.0)); // Psi = -i (i Psi)
    // restrict to (0, 2M]
    for (i, &y) in bg.grid().nodes().iter().enumerate() {
        if y > 2.0 * m_trunc {
            psi.values_mut()[i] = Complex64::new(0.0, 0.0);
        }
    }

    // i Psi1 = (d_s - a Lambda_{-1} + gamma_tilde_s i) P1 + i A_P^* P2
    //          - (int_0^y Re(conj P P1)) i P1   (Mod-tilde . v1 = 0 by the law)
    let lam_p1 = lambda_op(&set.p1, -1.0)?;
    let astar_p2 = cr_adjoint_with_a_theta(&a_theta_p, &set.p2, 1)?;
    let nl_p1 = set.p1.times_i().mul_real(&prefix);
    let i_psi1 = ds_p1
        .axpy(Complex64::new(-a, 0.0), &lam_p1)
        .axpy(Complex64::new(0.0, gamma_tilde_s), &set.p1)
        .add(&astar_p2.times_i())
        .sub(&nl_p1);
    let psi1 = i_psi1.scaled(Complex64::new(0.0, -1.0));

    // i Psi2 = (d_s - a Lambda_{-2} + gamma_tilde_s i) P2 + i A_P A_P^* P2
    //          - (int...) i P2 - i conj(P) P1^2
    let lam_p2 = lambda_op(&set.p2, -2.0)?;
    let a_astar_p2 = cr_with_a_theta(&a_theta_p, &astar_p2, 1)?;
    let nl_p2 = set.p2.times_i().mul_real(&prefix);
    let cubic = set.p.conj().mul_field(&set.p1).mul_field(&set.p1);
    let i_psi2 = ds_p2
        .axpy(Complex64::new(-a, 0.0), &lam_p2)
        .axpy(Complex64::new(0.0, gamma_tilde_s), &set.p2)
        .add(&a_astar_p2.times_i())
        .sub(&nl_p2)
        .sub(&cubic.times_i());
    let psi2 = i_psi2.scaled(Complex64::new(0.0, -1.0));

    let sup_psi = psi.sup_on(2.0 * m_trunc);
    let psi1_x = adapted_norm(&psi1, AdaptedNorm::X)?;
    let psi2_h12 = adapted_norm(&psi2, AdaptedNorm::H12)?;

    Ok(ProfileResiduals {
        psi,
        psi1,
        psi2,
        sup_psi,
        psi1_x,
        psi2_h12,
    })
}

/// The three compatibility defects of the profile hierarchy.
pub fn compatibility_defects(bg: &Background, state: ModulationState) -> Result<(f64, f64, f64)> {
    let set = assemble_modified_profiles(bg, state)?;
    let dpp = covariant_cr_derivative(&set.p, &set.p, 0)?;
    let diff1 = dpp.sub(&set.p1);
    let l2 = diff1.l2();
    let h21 = adapted_norm(&diff1, AdaptedNorm::H21)?;
    let a_theta_p = a_theta_of(&set.p);
    let app1 = cr_with_a_theta(&a_theta_p, &set.p1, 1)?;
    let diff2 = app1.sub(&set.p2);
    let h12 = adapted_norm(&diff2, AdaptedNorm::H12)?;
    Ok((l2, h21, h12))
}

/// The b^3-order bracket A_Q Lambda_1 T20 - (Q T20 + y^3 Q^2/8)(yQ/2) - A_Q g30,
/// which vanishes by the construction of U30; returned with its natural scale
/// ||A_Q Lambda_1 T20||_{H12}.
pub fn step5_bracket(bg: &Background, b: f64) -> Result<(EquivariantField, f64)> {
    let c = build_correction_profiles(bg, b)?;
    let aq_l1 = bg.a_q(&c.lambda1_t20.clone().with_parity(Parity::Odd))?;
    let aq_g30 = bg.a_q(&c.g30.clone().with_parity(Parity::Odd))?;
    let nodes = bg.grid().nodes();
    let mid: Vec<Complex64> = nodes
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let q = q_exact(y);
            let h = q * c.t20.values()[i].re + y.powi(3) * q * q / 8.0;
            Complex64::new(h * 0.5 * y * q, 0.0)
        })
        .collect();
    let mid_field = EquivariantField::new(bg.grid().clone(), 2, mid);
    let bracket = aq_l1.sub(&mid_field).sub(&aq_g30);
    let scale = adapted_norm(&aq_l1, AdaptedNorm::H12)?;
    Ok((bracket, scale))
}

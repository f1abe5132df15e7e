//! Orthogonality vectors, the rough and nonlinear modulation decompositions,
//! nonlinear adapted derivatives, coercivity ratios, refined parameters, the
//! modified third energy, and bootstrap flags.

use crate::banded::solve_dense;
use crate::cutoff::chi_values;
use crate::field::EquivariantField;
use crate::gauge::{a_theta_of, cr_with_a_theta, q_exact};
use crate::grid::{Parity, TailPolicy};
use crate::norms::{adapted_norm, AdaptedNorm};
use crate::profiles::{assemble_modified_profiles, ModulationState, ProfileSet};
use crate::spectral::Background;
use crate::testfields::TestFieldGen;
use crate::{CssError, Result};
use num_complex::Complex64;

/// Truncated orthogonality vectors: Z_1..Z_4 (m=0), the w1-level vectors
/// Z~_3, Z~_4 (m=1, cutoff M) and their B_delta-truncated versions.
pub struct OrthogonalityVectors {
    pub m_trunc: f64,
    pub delta: f64,
    pub b_delta: f64,
    pub z1: EquivariantField,
    pub z2: EquivariantField,
    pub z3: EquivariantField,
    pub z4: EquivariantField,
    pub z3t: EquivariantField,
    pub z4t: EquivariantField,
    pub z3d: EquivariantField,
    pub z4d: EquivariantField,
    /// (yQ, yQ chi_M)_r, the log-divergent diagonal pairing.
    pub yq_pairing_m: f64,
    /// (yQ/2, yQ chi_{B_delta})_r, the refined-parameter denominator.
    pub half_yq_pairing_delta: f64,
}

pub fn orthogonality_vectors(
    bg: &Background,
    m_trunc: f64,
    delta: f64,
    b: f64,
) -> Result<OrthogonalityVectors> {
    if !(0.0 < delta && delta <= 0.05) {
        return Err(CssError::Domain(format!("delta {delta} outside (0, 0.05]")));
    }
    let grid = bg.grid().clone();
    if 2.0 * m_trunc > grid.r_max() {
        return Err(CssError::Domain("truncation radius beyond grid".into()));
    }
    let nodes = grid.nodes();
    let chi_m = chi_values(nodes, m_trunc);
    let yq = bg.yq();
    let yq_chi = yq.mul_real(&chi_m);
    let iyq_chi = yq_chi.times_i();
    let z3 = bg.l_q_star(&iyq_chi)?;
    let z4 = bg.l_q_star(&yq_chi)?;
    let yq_pairing_m = yq.inner_real(&yq_chi)?;

    let rho = bg.rho();
    let y2q: Vec<f64> = nodes
        .iter()
        .map(|&y| y * y * q_exact(y))
        .collect();
    let y2q_chi = EquivariantField::new(
        grid.clone(),
        0,
        y2q.iter()
            .zip(chi_m.iter())
            .map(|(&v, &c)| Complex64::new(v * c, 0.0))
            .collect(),
    );
    let rho_chi = rho.mul_real(&chi_m);
    // coefficients chosen to kill the (rho, Z1)_r and (i y^2 Q/4, Z2)_r pairings
    let c1 = 2.0 * rho.inner_real(&y2q_chi)? / yq_pairing_m;
    let y2q_field = EquivariantField::new(
        grid.clone(),
        0,
        y2q.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    );
    let c2 = y2q_field.inner_real(&rho_chi)? / (2.0 * yq_pairing_m);
    let z1 = y2q_chi.axpy(Complex64::new(-c1, 0.0), &z4);
    let z2 = rho_chi.times_i().axpy(Complex64::new(-c2, 0.0), &z3);

    let b_delta = b.powf(-delta);
    if 2.0 * b_delta > grid.r_max() {
        return Err(CssError::Domain("B_delta beyond grid".into()));
    }
    let chi_d = chi_values(nodes, b_delta);
    let yq_chi_d = yq.mul_real(&chi_d);
    // pairing convention after the w1-level transversality table: the
    // imaginary vector detects b, the real one detects eta
    let z3d = yq_chi_d.times_i();
    let z4d = yq_chi_d.clone();
    let half_yq = yq.scaled(Complex64::new(0.5, 0.0));
    let half_yq_pairing_delta = half_yq.inner_real(&yq_chi_d)?;

    Ok(OrthogonalityVectors {
        m_trunc,
        delta,
        b_delta,
        z1,
        z2,
        z3,
        z4,
        z3t: iyq_chi,
        z4t: yq_chi,
        z3d,
        z4d,
        yq_pairing_m,
        half_yq_pairing_delta,
    })
}

/// Which orthogonality system fixes the decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum DecompositionMode {
    Rough,
    Nonlinear,
}

/// Outcome of a modulation decomposition.
pub struct DecompositionResult {
    pub state: ModulationState,
    pub w: EquivariantField,
    pub eps: EquivariantField,
    pub eps1: EquivariantField,
    pub eps2: EquivariantField,
    pub eps3: EquivariantField,
    pub ortho_residuals: [f64; 4],
    pub newton_iters: usize,
    pub mode: DecompositionMode,
}

/// w and the nonlinear adapted derivatives of w against the profile set.
pub fn adapted_derivatives_from_w(
    bg: &Background,
    w: &EquivariantField,
    set: &ProfileSet,
) -> Result<(
    EquivariantField,
    EquivariantField,
    EquivariantField,
    EquivariantField,
)> {
    let eps = w.sub(&set.p);
    let a_theta_w = a_theta_of(w);
    let w1 = cr_with_a_theta(&a_theta_w, w, 0)?;
    let eps1 = w1.sub(&set.p1);
    let w2 = cr_with_a_theta(&a_theta_w, &w1, 1)?;
    let eps2 = w2.sub(&set.p2);
    let eps3 = bg.a_q_star(&eps2)?;
    Ok((eps, eps1, eps2, eps3))
}

/// The four nonlinear adapted derivatives of a lab-frame field under `state`.
pub fn nonlinear_adapted_derivatives(
    bg: &Background,
    u: &EquivariantField,
    state: ModulationState,
) -> Result<(
    EquivariantField,
    EquivariantField,
    EquivariantField,
    EquivariantField,
)> {
    let w = renormalize_field(u, state.lambda, state.gamma)?;
    let set = assemble_modified_profiles(bg, state)?;
    adapted_derivatives_from_w(bg, &w, &set)
}

/// lambda e^{-i gamma} u(lambda .) on the same grid.
pub fn renormalize_field(
    u: &EquivariantField,
    lambda: f64,
    gamma: f64,
) -> Result<EquivariantField> {
    let phase = Complex64::from_polar(1.0, -gamma);
    if lambda == 1.0 {
        return Ok(u.scaled(phase));
    }
    let grid = u.grid().clone();
    let positions: Vec<f64> = grid.nodes().iter().map(|&y| lambda * y).collect();
    let (vals, _) = u.sample_at(&positions, TailPolicy::PowerLaw)?;
    let out: Vec<Complex64> = vals.into_iter().map(|v| lambda * phase * v).collect();
    Ok(EquivariantField::new(grid, u.m, out).with_parity(u.origin_parity))
}

fn ortho_residual_vector(
    bg: &Background,
    vectors: &OrthogonalityVectors,
    u: &EquivariantField,
    p: &[f64; 4],
    mode: DecompositionMode,
) -> Result<[f64; 4]> {
    let state = ModulationState::new(p[0], p[1], p[2], p[3]);
    let w = renormalize_field(u, state.lambda, state.gamma)?;
    let set = assemble_modified_profiles(bg, state)?;
    let eps = w.sub(&set.p);
    match mode {
        DecompositionMode::Rough => Ok([
            eps.inner_real(&vectors.z1)?,
            eps.inner_real(&vectors.z2)?,
            eps.inner_real(&vectors.z3)?,
            eps.inner_real(&vectors.z4)?,
        ]),
        DecompositionMode::Nonlinear => {
            let a_theta_w = a_theta_of(&w);
            let w1 = cr_with_a_theta(&a_theta_w, &w, 0)?;
            let eps1 = w1.sub(&set.p1);
            Ok([
                eps.inner_real(&vectors.z1)?,
                eps.inner_real(&vectors.z2)?,
                eps1.inner_real(&vectors.z3t)?,
                eps1.inner_real(&vectors.z4t)?,
            ])
        }
    }
}

/// Orthogonality residuals at a given state (diagnostic entry point).
pub fn debug_residual(
    bg: &Background,
    vectors: &OrthogonalityVectors,
    u: &EquivariantField,
    state: ModulationState,
    mode: DecompositionMode,
) -> Result<[f64; 4]> {
    ortho_residual_vector(bg, vectors, u, &[state.lambda, state.gamma, state.b, state.eta], mode)
}

/// Newton decomposition of `u` into (lambda, gamma, b, eta, eps) under the
/// selected orthogonality system.
pub fn decompose(
    bg: &Background,
    vectors: &OrthogonalityVectors,
    u: &EquivariantField,
    mode: DecompositionMode,
    init: Option<ModulationState>,
) -> Result<DecompositionResult> {
    let init = init.unwrap_or(ModulationState::new(1.0, 0.0, 0.01, 0.0));
    let mut p = [init.lambda, init.gamma, init.b, init.eta];
    let u_l2 = u.l2();
    let z_scales = match mode {
        DecompositionMode::Rough => [
            vectors.z1.l2(),
            vectors.z2.l2(),
            vectors.z3.l2(),
            vectors.z4.l2(),
        ],
        DecompositionMode::Nonlinear => [
            vectors.z1.l2(),
            vectors.z2.l2(),
            vectors.z3t.l2(),
            vectors.z4t.l2(),
        ],
    };
    let tol: Vec<f64> = z_scales.iter().map(|z| 1e-11 * u_l2 * z).collect();

    let mut f = ortho_residual_vector(bg, vectors, u, &p, mode)?;
    let norm2 = |v: &[f64; 4]| v.iter().map(|x| x * x).sum::<f64>();
    let mut iters = 0usize;
    loop {
        if f.iter().zip(tol.iter()).all(|(r, t)| r.abs() <= *t) {
            break;
        }
        if iters >= 50 {
            return Err(CssError::NewtonDiverged {
                iters,
                residual: norm2(&f).sqrt(),
            });
        }
        iters += 1;
        // forward-difference Jacobian with the parameter-scaled steps
        let steps = [1e-7 * p[0], 1e-7, 1e-7 * p[2], 1e-7 * p[2]];
        let mut jac = [0.0f64; 16];
        for col in 0..4 {
            let mut pp = p;
            pp[col] += steps[col];
            let fp = ortho_residual_vector(bg, vectors, u, &pp, mode)?;
            for row in 0..4 {
                jac[row * 4 + col] = (fp[row] - f[row]) / steps[col];
            }
        }
        let mut rhs = f;
        if solve_dense(&mut jac, &mut rhs, 4).is_none() {
            return Err(CssError::Domain("degenerate decomposition Jacobian".into()));
        }
        // backtracking on the residual square sum
        let base = norm2(&f);
        let mut damp = 1.0f64;
        let mut accepted = false;
        for _ in 0..12 {
            let cand = [
                p[0] - damp * rhs[0],
                p[1] - damp * rhs[1],
                p[2] - damp * rhs[2],
                p[3] - damp * rhs[3],
            ];
            if cand[0] > 0.0 && cand[2] > 0.0 {
                if let Ok(fc) = ortho_residual_vector(bg, vectors, u, &cand, mode) {
                    if norm2(&fc) < base {
                        p = cand;
                        f = fc;
                        accepted = true;
                        break;
                    }
                }
            }
            damp *= 0.5;
        }
        if !accepted {
            return Err(CssError::NewtonDiverged {
                iters,
                residual: base.sqrt(),
            });
        }
    }

    let state = ModulationState::new(p[0], p[1], p[2], p[3]);
    let w = renormalize_field(u, state.lambda, state.gamma)?;
    let set = assemble_modified_profiles(bg, state)?;
    let (eps, eps1, eps2, eps3) = adapted_derivatives_from_w(bg, &w, &set)?;
    Ok(DecompositionResult {
        state,
        w,
        eps,
        eps1,
        eps2,
        eps3,
        ortho_residuals: f,
        newton_iters: iters,
        mode,
    })
}

/// Coercivity checks of the linearized operators in their adapted norms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoercivityPair {
    /// ||L_Q v|| / ||v||_{H10} over the sample projected off {Z1, Z2}
    LQAtH1,
    /// ||A_Q^* v|| / ||v||_{H12}, unconditional
    AQStarUnconditional,
}

pub fn coercivity_ratio(
    bg: &Background,
    vectors: &OrthogonalityVectors,
    pair: CoercivityPair,
    sample_size: usize,
    seed: u64,
) -> Result<f64> {
    let mut worst = f64::INFINITY;
    match pair {
        CoercivityPair::AQStarUnconditional => {
            for k in 0..sample_size {
                let v = TestFieldGen::new(2, seed + k as u64).field(bg.grid());
                let num = bg.a_q_star(&v)?.l2();
                let den = adapted_norm(&v, AdaptedNorm::H12)?;
                if den > 1e-12 {
                    worst = worst.min(num / den);
                }
            }
        }
        CoercivityPair::LQAtH1 => {
            let lam_q = bg.lambda_q();
            let iq = bg.q.times_i();
            // pairing matrix a_ij = (psi_i, k_j)_r with kernel directions k
            let a11 = vectors.z1.inner_real(&lam_q)?;
            let a12 = vectors.z1.inner_real(&iq)?;
            let a21 = vectors.z2.inner_real(&lam_q)?;
            let a22 = vectors.z2.inner_real(&iq)?;
            let det = a11 * a22 - a12 * a21;
            if det.abs() < 1e-8 * (a11.abs() + a22.abs()).powi(2).max(1e-30) {
                return Err(CssError::Domain("degenerate pairing matrix".into()));
            }
            for k in 0..sample_size {
                let v = TestFieldGen::new(0, seed + k as u64).field(bg.grid());
                let b1 = v.inner_real(&vectors.z1)?;
                let b2 = v.inner_real(&vectors.z2)?;
                // remove the kernel components so (v', Z1) = (v', Z2) = 0
                let alpha = (b1 * a22 - b2 * a12) / det;
                let beta = (a11 * b2 - a21 * b1) / det;
                let vp = v
                    .axpy(Complex64::new(-alpha, 0.0), &lam_q)
                    .axpy(Complex64::new(-beta, 0.0), &iq);
                let num = bg.l_q(&vp)?.l2();
                let den = adapted_norm(&vp, AdaptedNorm::H10)?;
                if den > 1e-12 {
                    worst = worst.min(num / den);
                }
            }
        }
    }
    Ok(worst)
}

/// Refined parameters of the w1-level testing against the B_delta vectors.
pub fn refined_parameters(
    vectors: &OrthogonalityVectors,
    eps1: &EquivariantField,
    b: f64,
    eta: f64,
) -> Result<(f64, f64)> {
    let den = vectors.half_yq_pairing_delta;
    let b_corr = eps1.inner_real(&vectors.z3d)? / den;
    let eta_corr = eps1.inner_real(&vectors.z4d)? / den;
    Ok((b - b_corr, eta - eta_corr))
}

/// The modified third energy and its diagnostics.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct F3Report {
    pub f3: f64,
    pub half_eps3_sq: f64,
    pub correction: f64,
    /// (eps2, (y d_y Vtilde / y^2) eps2)_r, nonpositive by repulsivity.
    pub repulsivity_pairing: f64,
}

pub fn modified_energy_f3(
    bg: &Background,
    eps1: &EquivariantField,
    eps2: &EquivariantField,
    eps3: &EquivariantField,
    b: f64,
) -> Result<F3Report> {
    let half = 0.5 * eps3.l2_sq();
    // b (i eps2, y Q^2 eps1)_r
    let nodes = bg.grid().nodes();
    let weighted: Vec<Complex64> = nodes
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let q = q_exact(y);
            y * q * q * eps1.values()[i]
        })
        .collect();
    let weighted_field = EquivariantField::new(bg.grid().clone(), 1, weighted);
    let correction = b * eps2.times_i().inner_real(&weighted_field)?;
    let (vt, _) = bg.repulsive_potential();
    let dvt: Vec<f64> = bg
        .grid()
        .differentiate_f64(&vt, 1, Parity::Even)
        .unwrap_or_else(|_| vec![0.0; vt.len()]);
    let pairing_vals: Vec<f64> = nodes
        .iter()
        .enumerate()
        .map(|(i, &y)| (y * dvt[i] / (y * y)) * eps2.values()[i].norm_sqr())
        .collect();
    let repulsivity_pairing =
        crate::field::TWO_PI * bg.grid().integrate_rdr(&pairing_vals);
    Ok(F3Report {
        f3: half - correction,
        half_eps3_sq: half,
        correction,
        repulsivity_pairing,
    })
}

/// Bootstrap flags of the trapped regime.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct BootstrapVerdict {
    pub b_in_range: bool,
    pub eta_trapped: bool,
    pub eps_small: bool,
    pub eps1_small: bool,
    pub eps3_small: bool,
}

impl BootstrapVerdict {
    pub fn all(&self) -> bool {
        self.b_in_range && self.eta_trapped && self.eps_small && self.eps1_small && self.eps3_small
    }
}

pub fn bootstrap_check(result: &DecompositionResult, k_const: f64, b_star: f64) -> BootstrapVerdict {
    let b = result.state.b;
    let eta = result.state.eta;
    let log_b = result.state.log_b_abs();
    BootstrapVerdict {
        b_in_range: 0.0 < b && b < b_star,
        eta_trapped: eta.abs() <= b / log_b,
        eps_small: result.eps.l2() < b_star.powf(0.25),
        eps1_small: result.eps1.l2() < k_const * b * log_b * log_b,
        eps3_small: result.eps3.l2() < k_const * b * b / log_b,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RadialGrid;

    // the truncated orthogonality structure needs 2M < B1 = b^{-1/2} |log b|,
    // so decomposition tests run at b ~ 1e-3 where B1 ~ 218 clears M = 50
    fn setup(b: f64) -> (Background, OrthogonalityVectors) {
        let b1 = b.powf(-0.5) * b.ln().abs();
        let r_max = (4.0 * b1 * 1.1).max(220.0);
        let bg = Background::new(RadialGrid::build(r_max, 2048, 2048, 10.0).unwrap());
        let vecs = orthogonality_vectors(&bg, 50.0, 0.02, b).unwrap();
        (bg, vecs)
    }

    #[test]
    fn transversality_table() {
        let (bg, v) = setup(1e-3);
        let lam_q = bg.lambda_q();
        let iq = bg.q.times_i();
        let iy2q4 = bg.iy2q4();
        let rho = bg.rho();
        let diag = v.yq_pairing_m;
        // diagonal entries
        // diagonals match up to the O(1) corrections of the cutoff calculus
        let d1 = lam_q.inner_real(&v.z1).unwrap();
        assert!(
            ((d1 + diag) / diag).abs() < 0.2,
            "(LamQ, Z1) = {d1}, want ~ -{diag}"
        );
        let d2 = iq.scaled(Complex64::new(-1.0, 0.0)).inner_real(&v.z2).unwrap();
        assert!(
            ((d2 + diag / 4.0) / (diag / 4.0)).abs() < 0.2,
            "(-iQ, Z2) = {d2}, want ~ -{}",
            diag / 4.0
        );
        let d3 = iy2q4.inner_real(&v.z3).unwrap();
        assert!(
            ((d3 - diag / 2.0) / (diag / 2.0)).abs() < 0.02,
            "(iy^2Q/4, Z3) = {d3} vs {}",
            diag / 2.0
        );
        let d4 = rho.inner_real(&v.z4).unwrap();
        assert!(
            ((d4 - diag / 2.0) / (diag / 2.0)).abs() < 0.02,
            "(rho, Z4) = {d4} vs {}",
            diag / 2.0
        );
        // off-diagonals below 1% of the diagonal
        for (f, zs, skip) in [
            (&lam_q, 0usize, 0usize),
            (&iq.scaled(Complex64::new(-1.0, 0.0)), 1, 1),
            (&iy2q4, 2, 2),
            (rho, 3, 3),
        ] {
            for (k, z) in [&v.z1, &v.z2, &v.z3, &v.z4].iter().enumerate() {
                if k == skip {
                    continue;
                }
                let off = f.inner_real(z).unwrap();
                assert!(
                    off.abs() < 0.01 * diag,
                    "off-diagonal ({zs},{k}) = {off} vs diag {diag}"
                );
            }
        }
        // w1-level transversality
        let yq = bg.yq();
        let half_iyq = yq.times_i().scaled(Complex64::new(0.5, 0.0));
        let t33 = half_iyq.inner_real(&v.z3t).unwrap();
        assert!(((t33 - diag / 2.0) / (diag / 2.0)).abs() < 1e-6);
        let t34 = half_iyq.inner_real(&v.z4t).unwrap();
        assert!(t34.abs() < 1e-10 * diag);
        let half_yq = yq.scaled(Complex64::new(0.5, 0.0));
        assert!((half_yq.inner_real(&v.z4t).unwrap() - diag / 2.0).abs() < 1e-6 * diag);
        assert!(half_yq.inner_real(&v.z3t).unwrap().abs() < 1e-10 * diag);
    }

    #[test]
    fn exact_profile_roundtrip_both_modes() {
        let b = 1e-3;
        let (bg, vecs) = setup(b);
        let truth = ModulationState::new(1.13, 0.4, b, 5e-5);
        let set = assemble_modified_profiles(&bg, truth).unwrap();
        // u = lambda^{-1} e^{i gamma} P(./lambda)
        let grid = bg.grid().clone();
        let positions: Vec<f64> = grid.nodes().iter().map(|&r| r / truth.lambda).collect();
        let (vals, _) = set.p.sample_at(&positions, TailPolicy::PowerLaw).unwrap();
        let u_vals: Vec<Complex64> = vals
            .into_iter()
            .map(|v| Complex64::from_polar(1.0, truth.gamma) / truth.lambda * v)
            .collect();
        let u = EquivariantField::new(grid, 0, u_vals);

        // rough mode: eps = 0 solves the system, so the constructing
        // parameters are recovered directly
        let init = ModulationState::new(
            truth.lambda * 1.01,
            truth.gamma + 0.01,
            truth.b * 1.01,
            truth.eta + 1e-6,
        );
        let res = decompose(&bg, &vecs, &u, DecompositionMode::Rough, Some(init)).unwrap();
        assert!(res.newton_iters <= 8, "rough: {} iterations", res.newton_iters);
        assert!(
            (res.state.lambda - truth.lambda).abs() < 1e-9,
            "rough lambda {} vs {}",
            res.state.lambda,
            truth.lambda
        );
        assert!((res.state.gamma - truth.gamma).abs() < 1e-9);
        assert!((res.state.b - truth.b).abs() < 1e-9);
        assert!((res.state.eta - truth.eta).abs() < 1e-9);
        assert!(res.eps.l2() < 1e-7, "rough eps = {:e}", res.eps.l2());

        // nonlinear mode: its fixed point differs from the constructing
        // parameters by the compatibility defect O(M^C b^2); the round-trip
        // statement is stability of that fixed point
        let first = decompose(&bg, &vecs, &u, DecompositionMode::Nonlinear, Some(truth)).unwrap();
        let dist = (first.state.b - truth.b).abs() + (first.state.eta - truth.eta).abs();
        assert!(dist < 50.0 * b * b, "nonlinear shift {dist:e} not O(b^2)");
        let p_star = first.state;
        let init2 = ModulationState::new(
            p_star.lambda * 1.01,
            p_star.gamma + 0.01,
            p_star.b * 1.01,
            p_star.eta + 1e-6,
        );
        let again = decompose(&bg, &vecs, &u, DecompositionMode::Nonlinear, Some(init2)).unwrap();
        assert!(again.newton_iters <= 8, "nonlinear: {} iterations", again.newton_iters);
        assert!((again.state.lambda - p_star.lambda).abs() < 1e-9);
        assert!((again.state.gamma - p_star.gamma).abs() < 1e-9);
        assert!((again.state.b - p_star.b).abs() < 1e-9);
        assert!((again.state.eta - p_star.eta).abs() < 1e-9);
    }

    #[test]
    fn decomposition_difference_tracks_eps1_pairings() {
        let (bg, vecs) = setup(0.8e-3);
        let mut consts = Vec::new();
        for &b in &[1.2e-3f64, 0.8e-3] {
            let truth = ModulationState::new(1.0, 0.0, b, 0.0);
            let set = assemble_modified_profiles(&bg, truth).unwrap();
            let bump = TestFieldGen::new(0, 40).with_support(30.0).field(bg.grid());
            let u = set.p.axpy(Complex64::new(2e-4, 1e-4), &bump);
            let init = Some(truth);
            let rough = decompose(&bg, &vecs, &u, DecompositionMode::Rough, init).unwrap();
            let nl = decompose(&bg, &vecs, &u, DecompositionMode::Nonlinear, init).unwrap();
            let dist = (rough.state.lambda / nl.state.lambda).ln().abs()
                + (rough.state.gamma - nl.state.gamma).abs()
                + (rough.state.b - nl.state.b).abs()
                + (rough.state.eta - nl.state.eta).abs();
            let pair = rough.eps1.inner_real(&vecs.z3t).unwrap().abs()
                + rough.eps1.inner_real(&vecs.z4t).unwrap().abs();
            assert!(pair > 0.0);
            consts.push(dist / pair);
        }
        // the difference estimate has a b-stable constant
        let ratio = consts[0] / consts[1];
        assert!(
            (0.2..5.0).contains(&ratio),
            "difference-estimate constant unstable: {consts:?}"
        );
    }

    #[test]
    fn initial_transition_defect_scales_quadratically() {
        // for exact profile data the w1-level pairings (eps1, Z~_k)_r carry
        // the compatibility defect and shrink like b^2 once the cutoff
        // hierarchy B0 >= 2M holds (otherwise chi_B0 chops T20 inside the
        // pairing window and the decay degrades to ~b)
        let b_lo = 4e-5f64;
        let b1 = b_lo.powf(-0.5) * b_lo.ln().abs();
        let bg = Background::new(
            RadialGrid::build(4.0 * b1 * 1.05, 2048, 4096, 10.0).unwrap(),
        );
        let vecs = orthogonality_vectors(&bg, 50.0, 0.02, b_lo).unwrap();
        let mut pairs = Vec::new();
        for &b in &[1e-4f64, b_lo] {
            let set = assemble_modified_profiles(&bg, ModulationState::new(1.0, 0.0, b, 0.0))
                .unwrap();
            let a_theta = a_theta_of(&set.p);
            let w1 = cr_with_a_theta(&a_theta, &set.p, 0).unwrap();
            let eps1 = w1.sub(&set.p1);
            let pair = eps1.inner_real(&vecs.z3t).unwrap().abs()
                + eps1.inner_real(&vecs.z4t).unwrap().abs();
            pairs.push(pair);
        }
        let rate = (pairs[0] / pairs[1]).ln() / (1e-4f64 / b_lo).ln();
        assert!(
            rate > 1.5,
            "transition defect exponent {rate} (pairings {pairs:?})"
        );
    }

    #[test]
    fn coercivity_ratios_bounded_below() {
        let (bg, vecs) = setup(1e-3);
        let c1 = coercivity_ratio(&bg, &vecs, CoercivityPair::AQStarUnconditional, 8, 7).unwrap();
        assert!(c1 > 0.1, "A_Q^* coercivity ratio {c1}");
        let c2 = coercivity_ratio(&bg, &vecs, CoercivityPair::LQAtH1, 8, 11).unwrap();
        // c(M) shrinks with log M; bounded away from zero is the claim
        assert!(c2 > 1e-3, "L_Q coercivity ratio {c2}");
        // kernel witness: L_Q nearly annihilates span{LamQ, iQ}
        let lam_q = bg.lambda_q();
        let mix = lam_q.axpy(Complex64::new(0.0, 0.7), &bg.q);
        let num = bg.l_q(&mix).unwrap().l2();
        let den = adapted_norm(&mix, AdaptedNorm::H10).unwrap();
        assert!(num / den < 1e-4, "kernel witness ratio {}", num / den);
    }

    #[test]
    fn nonlinear_adapted_derivative_linearizes() {
        // eps1 -> L_Q eps at first order in the perturbation around Q
        let (bg, _) = setup(1e-3);
        let bump = TestFieldGen::new(0, 61).with_support(30.0).field(bg.grid());
        let ratio_at = |a: f64| {
            let eps = bump.scaled(Complex64::new(a, 0.0));
            let w = bg.q.add(&eps);
            let a_theta_w = a_theta_of(&w);
            let w1 = cr_with_a_theta(&a_theta_w, &w, 0).unwrap();
            // P1(0,0) = 0 in the b -> 0 limit, so eps1 = D_w w here
            let lq_eps = bg.l_q(&eps).unwrap();
            w1.sub(&lq_eps).l2() / eps.l2()
        };
        let (r1, r2) = (ratio_at(1e-2), ratio_at(1e-3));
        assert!(
            r1 / r2 > 5.0,
            "||eps1 - L_Q eps||/||eps|| not first order: {r1:e} vs {r2:e}"
        );
    }

    #[test]
    fn eps2_eps3_norm_equivalence() {
        // || eps2 ||_{H12} ~ || eps3 ||_{L2} on a perturbation sample
        let (bg, _) = setup(1e-3);
        for seed in [3u64, 8, 21] {
            let e2 = TestFieldGen::new(2, seed).field(bg.grid());
            let h12 = crate::norms::adapted_norm(&e2, crate::norms::AdaptedNorm::H12).unwrap();
            let e3 = bg.a_q_star(&e2).unwrap().l2();
            let ratio = h12 / e3;
            assert!(
                (0.1..10.0).contains(&ratio),
                "norm equivalence broken: {ratio}"
            );
        }
    }

    #[test]
    fn refined_parameters_fixed_point_at_zero_eps1() {
        let (bg, vecs) = setup(1e-3);
        let z = EquivariantField::zeros(bg.grid().clone(), 1);
        let (bt, et) = refined_parameters(&vecs, &z, 0.01, 1e-4).unwrap();
        assert_eq!((bt, et), (0.01, 1e-4));
    }

    #[test]
    fn f3_zero_and_repulsivity_sign() {
        let (bg, _) = setup(1e-3);
        let z1 = EquivariantField::zeros(bg.grid().clone(), 1);
        let z2 = EquivariantField::zeros(bg.grid().clone(), 2);
        let rep = modified_energy_f3(&bg, &z1, &z2, &z1, 0.01).unwrap();
        assert_eq!(rep.f3, 0.0);
        // repulsivity pairing <= 0 for arbitrary eps2
        for seed in [3u64, 5, 9] {
            let e2 = TestFieldGen::new(2, seed).field(bg.grid());
            let r = modified_energy_f3(&bg, &z1, &e2, &z1, 0.01).unwrap();
            assert!(
                r.repulsivity_pairing <= 1e-10,
                "repulsivity pairing {} > 0",
                r.repulsivity_pairing
            );
        }
    }

    #[test]
    fn bootstrap_flag_arithmetic() {
        let (bg, vecs) = setup(1e-3);
        let truth = ModulationState::new(1.0, 0.0, 1e-3, 0.0);
        let set = assemble_modified_profiles(&bg, truth).unwrap();
        let u = set.p.clone();
        let res = decompose(&bg, &vecs, &u, DecompositionMode::Nonlinear, Some(truth)).unwrap();
        // K = 25: the eps3 floor for interpolation-built data sits at ~3e-6
        // here, a factor 2 over the K = 10 threshold at this b
        let verdict = bootstrap_check(&res, 25.0, 0.1);
        assert!(
            verdict.all(),
            "exact profile data must pass: {verdict:?} (eps3 = {:e})",
            res.eps3.l2(),
        );
        // eta at 0.95 of the boundary still passes
        let mut margin = res;
        margin.state.eta = 0.95 * margin.state.b / margin.state.log_b_abs();
        let verdict = bootstrap_check(&margin, 25.0, 0.1);
        assert!(verdict.eta_trapped);
        // scaling eps1 up breaks its flag
        let mut broken = decompose(&bg, &vecs, &u, DecompositionMode::Nonlinear, Some(truth)).unwrap();
        broken.eps1 = TestFieldGen::new(1, 2).field(bg.grid()).scaled(Complex64::new(40.0, 0.0));
        let verdict = bootstrap_check(&broken, 25.0, 0.1);
        assert!(!verdict.eps1_small);
    }
}

//! Time integration: Crank-Nicolson in the lab frame, the dynamically rescaled
//! frame with modulation-rate projection, the formal parameter ODE laws,
//! blow-up-rate extraction, the eta-shooting driver, and the pseudoconformal
//! push to the infinite-time scenario.

use crate::banded::{solve_dense, BandedMatrix};
use crate::cascade::line_integral_w_w1;
use crate::decompose::{
    adapted_derivatives_from_w, decompose, modified_energy_f3, renormalize_field,
    DecompositionMode, OrthogonalityVectors,
};
use crate::field::EquivariantField;
use crate::gauge::{a_theta_of, lambda_op, linearized_bogomolnyi};
#[allow(unused_imports)]
use crate::grid::Parity;
use crate::profiles::{assemble_modified_profiles, profile_parameter_derivatives, ModulationState};
use crate::spectral::Background;
use crate::{CssError, Result};
use num_complex::Complex64;

/// Evolution frame selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Frame {
    Lab,
    Renormalized,
}

/// Time-stepping controls.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SolverConfig {
    pub frame: Frame,
    /// rescaled step d sigma
    pub ds: f64,
    pub picard_iters: usize,
    pub picard_tol: f64,
    pub decomposition_every: usize,
    /// orthogonality truncation for the rate projection
    pub m_trunc: f64,
    pub delta: f64,
    pub record_every: usize,
    /// strength of the absorbing layer on the outer grid band (0 disables);
    /// models the radiation escaping to infinity instead of reflecting
    pub sponge_strength: f64,
    /// inner edge of the absorbing layer as a fraction of r_max
    pub sponge_start_fraction: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            frame: Frame::Renormalized,
            ds: 0.01,
            picard_iters: 3,
            picard_tol: 1e-10,
            decomposition_every: 20,
            m_trunc: 15.0,
            delta: 0.02,
            record_every: 5,
            sponge_strength: 0.5,
            sponge_start_fraction: 0.85,
        }
    }
}

/// One recorded sample of a run.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub s: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub b: f64,
    pub eta: f64,
    pub lambda_s_over_lambda: f64,
    pub gamma_s: f64,
    pub gamma_tilde_s: f64,
    pub b_s: f64,
    pub eta_s: f64,
    pub c_b: f64,
    /// refined parameters from the B_delta-truncated testing
    pub b_tilde: f64,
    pub eta_tilde: f64,
    pub eps_l2: f64,
    pub eps1_l2: f64,
    pub eps3_l2: f64,
    pub f3: f64,
    pub f3_correction: f64,
    pub repulsivity: f64,
    pub mass: f64,
    /// cumulative mass removed by the absorbing layer (open-system ledger)
    pub mass_absorbed: f64,
    pub energy_lab: f64,
    /// kinetic yardstick 1/2 ||d_y w||^2 / lambda^2 for drift normalization
    pub energy_scale: f64,
}

/// Time series of a run.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct ParameterTrajectory {
    pub rows: Vec<TrajectoryRow>,
    pub truncated: Option<String>,
}

impl ParameterTrajectory {
    pub fn last(&self) -> Option<&TrajectoryRow> {
        self.rows.last()
    }
}

// ---------------------------------------------------------------------------
// lab-frame Crank-Nicolson
// ---------------------------------------------------------------------------

/// Real potential of the radial equation: A_theta^2/r^2 - |u|^2 + A_t.
fn gauge_potential_values(u: &EquivariantField) -> Vec<f64> {
    let pots = crate::gauge::compute_gauge_potentials(u);
    u.grid()
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let at2 = pots.a_theta[i] / r;
            at2 * at2 - u.values()[i].norm_sqr() + pots.a_t[i]
        })
        .collect()
}

/// Assemble the banded operator M = i Delta_0 - i V - sigma + a (1 + y d_y)
/// - i g and solve the Crank-Nicolson system (I - ds/2 M) u+ = (I + ds/2 M) u0;
/// `sigma` is a real nonnegative absorbing profile (empty slice disables).
fn cn_sweep(
    u0: &EquivariantField,
    v_mid: &[f64],
    sigma: &[f64],
    a_rate: f64,
    g_rate: f64,
    ds: f64,
) -> Result<EquivariantField> {
    let grid = u0.grid();
    let n = grid.len();
    let (kl, ku) = (7usize, 7usize);
    let st2 = grid.stencils(2).to_vec();
    let st1 = grid.stencils(1).to_vec();
    let parity_sign = u0.origin_parity.sign();

    let mut m_mat = BandedMatrix::zeros(n, kl, ku);
    let nodes = grid.nodes();
    for i in 0..n {
        let y = nodes[i];
        // second derivative + first derivative / y, times i
        for (o, wgt) in st2[i].weights.iter().enumerate() {
            let e = st2[i].start + o as isize;
            let (col, sign) = if e >= 0 {
                (e as usize, 1.0)
            } else {
                ((-e - 1) as usize, parity_sign)
            };
            m_mat.add(i, col, Complex64::new(0.0, sign * wgt));
        }
        for (o, wgt) in st1[i].weights.iter().enumerate() {
            let e = st1[i].start + o as isize;
            let (col, sign) = if e >= 0 {
                (e as usize, 1.0)
            } else {
                ((-e - 1) as usize, parity_sign)
            };
            // i d_y / y  +  a y d_y
            m_mat.add(
                i,
                col,
                Complex64::new(sign * a_rate * y * wgt, sign * wgt / y),
            );
        }
        let damp = if sigma.is_empty() { 0.0 } else { sigma[i] };
        m_mat.add(i, i, Complex64::new(a_rate - damp, -v_mid[i] - g_rate));
    }

    // rhs = u0 + ds/2 M u0
    let mu = m_mat.matvec(u0.values());
    let mut rhs: Vec<Complex64> = u0
        .values()
        .iter()
        .zip(mu.iter())
        .map(|(u, m)| u + 0.5 * ds * m)
        .collect();

    // A = I - ds/2 M assembled in place
    let mut a_mat = BandedMatrix::zeros(n, kl, ku);
    for i in 0..n {
        let y = nodes[i];
        for (o, wgt) in st2[i].weights.iter().enumerate() {
            let e = st2[i].start + o as isize;
            let (col, sign) = if e >= 0 {
                (e as usize, 1.0)
            } else {
                ((-e - 1) as usize, parity_sign)
            };
            a_mat.add(i, col, Complex64::new(0.0, -0.5 * ds * sign * wgt));
        }
        for (o, wgt) in st1[i].weights.iter().enumerate() {
            let e = st1[i].start + o as isize;
            let (col, sign) = if e >= 0 {
                (e as usize, 1.0)
            } else {
                ((-e - 1) as usize, parity_sign)
            };
            a_mat.add(
                i,
                col,
                -0.5 * ds * Complex64::new(sign * a_rate * y * wgt, sign * wgt / y),
            );
        }
        let damp = if sigma.is_empty() { 0.0 } else { sigma[i] };
        a_mat.add(
            i,
            i,
            Complex64::new(1.0, 0.0)
                - 0.5 * ds * Complex64::new(a_rate - damp, -v_mid[i] - g_rate),
        );
    }
    // Dirichlet wall at r_max
    a_mat.set_row_unit(n - 1);
    rhs[n - 1] = Complex64::new(0.0, 0.0);
    let piv = a_mat
        .factor()
        .ok_or_else(|| CssError::Domain("singular Crank-Nicolson matrix".into()))?;
    a_mat.solve_factored(&piv, &mut rhs);
    Ok(EquivariantField::new(grid.clone(), u0.m, rhs).with_parity(u0.origin_parity))
}

/// One Crank-Nicolson step of the lab-frame flow with Picard-updated gauge
/// terms; mass drift per step stays at the scheme's conservation level.
pub fn step_lab_frame(
    u: &EquivariantField,
    dt: f64,
    picard_iters: usize,
    picard_tol: f64,
) -> Result<EquivariantField> {
    if u.m != 0 {
        return Err(CssError::IndexMismatch {
            expected: 0,
            got: u.m,
        });
    }
    let mut current = u.clone();
    let mut previous_change = f64::INFINITY;
    let scale = u.sup().max(1e-300);
    for sweep in 0..picard_iters.max(1) + 7 {
        let mid = u.zip_map(&current, |a, b| 0.5 * (a + b));
        let v_mid = gauge_potential_values(&mid);
        let next = cn_sweep(u, &v_mid, &[], 0.0, 0.0, dt)?;
        let change = next.sub(&current).sup() / scale;
        current = next;
        if sweep + 1 >= picard_iters.max(1) && change <= picard_tol {
            return Ok(current);
        }
        if sweep > picard_iters.max(1) + 5 && change > previous_change {
            return Err(CssError::PicardDiverged(format!(
                "sweep {sweep}: change {change:e}"
            )));
        }
        previous_change = change;
    }
    Ok(current)
}

/// Lab-frame drift diagnostics over a fixed-step run.
pub struct LabRunReport {
    pub field: EquivariantField,
    pub mass_drift: f64,
    pub energy_drift: f64,
    pub max_step_mass_drift: f64,
    /// |d v1/dt - 4 v2| at midrun
    pub virial_defect: f64,
    /// |d v2/dt - 4 E| at midrun
    pub virial2_defect: f64,
}

/// Run `steps` lab steps and report conservation drifts and the virial
/// identity defect |d v1/dt - 4 v2| measured midway.
pub fn evolve_lab(
    u0: &EquivariantField,
    dt: f64,
    steps: usize,
    picard_iters: usize,
    picard_tol: f64,
) -> Result<LabRunReport> {
    let (m0, e0) = crate::gauge::conserved_quantities(u0)?;
    let mut u = u0.clone();
    let mut max_step = 0.0f64;
    let mut prev_mass = m0;
    let mut virial_defect = 0.0f64;
    let mut virial2_defect = 0.0f64;
    let mid = steps / 2;
    for k in 0..steps {
        if k == mid {
            // centered finite differences of v1, v2 across one step
            let v_before = crate::gauge::virial_functionals(&u)?;
            let u_next = step_lab_frame(&u, dt, picard_iters, picard_tol)?;
            let v_after = crate::gauge::virial_functionals(&u_next)?;
            let dv1 = (v_after.v1 - v_before.v1) / dt;
            let v2_mid = 0.5 * (v_after.v2 + v_before.v2);
            virial_defect = (dv1 - 4.0 * v2_mid).abs();
            let dv2 = (v_after.v2 - v_before.v2) / dt;
            let (_, energy) = crate::gauge::conserved_quantities(&u)?;
            virial2_defect = (dv2 - 4.0 * energy).abs();
            u = u_next;
        } else {
            u = step_lab_frame(&u, dt, picard_iters, picard_tol)?;
        }
        let (m, _) = crate::gauge::conserved_quantities(&u)?;
        max_step = max_step.max(((m - prev_mass) / m0).abs());
        prev_mass = m;
    }
    let (m1, e1) = crate::gauge::conserved_quantities(&u)?;
    Ok(LabRunReport {
        field: u,
        mass_drift: ((m1 - m0) / m0).abs(),
        energy_drift: if e0.abs() > 1e-12 {
            ((e1 - e0) / e0).abs()
        } else {
            (e1 - e0).abs()
        },
        max_step_mass_drift: max_step,
        virial_defect,
        virial2_defect,
    })
}

// ---------------------------------------------------------------------------
// renormalized frame with modulation-rate projection
// ---------------------------------------------------------------------------

struct Rates {
    a: f64,
    g: f64,
    b_s: f64,
    eta_s: f64,
    gamma_tilde_s: f64,
}

/// Solve the 4x4 projected system: rates (lambda_s/lambda, gamma_s, b_s,
/// eta_s) such that the time derivatives of the four nonlinear orthogonality
/// pairings vanish.
fn solve_rate_projection(
    bg: &Background,
    vectors: &OrthogonalityVectors,
    w: &EquivariantField,
    b: f64,
    eta: f64,
) -> Result<Rates> {
    let state = ModulationState::new(1.0, 0.0, b, eta);
    let [(dbp, dbp1, _), (dep, dep1, _)] = profile_parameter_derivatives(bg, state)?;
    // autonomous part of the w-equation: T0 = -i L_w^* (D_w w)
    let a_theta_w = a_theta_of(w);
    let w1 = crate::gauge::cr_with_a_theta(&a_theta_w, w, 0)?;
    let t0 = linearized_bogomolnyi(w, &w1, true)?
        .times_i()
        .scaled(Complex64::new(-1.0, 0.0));
    let lam_w = lambda_op(w, 0.0)?;
    let miw = w.times_i().scaled(Complex64::new(-1.0, 0.0));

    let lw = |v: &EquivariantField| linearized_bogomolnyi(w, v, false);
    let lw_lam = lw(&lam_w)?;
    let lw_miw = lw(&miw)?;
    let lw_t0 = lw(&t0)?;

    let pair0 = |f: &EquivariantField| -> Result<[f64; 2]> {
        Ok([f.inner_real(&vectors.z1)?, f.inner_real(&vectors.z2)?])
    };
    let pair1 = |f: &EquivariantField| -> Result<[f64; 2]> {
        Ok([f.inner_real(&vectors.z3t)?, f.inner_real(&vectors.z4t)?])
    };

    let ca0 = pair0(&lam_w)?;
    let cg0 = pair0(&miw)?;
    let cb0 = pair0(&dbp.scaled(Complex64::new(-1.0, 0.0)))?;
    let ce0 = pair0(&dep.scaled(Complex64::new(-1.0, 0.0)))?;
    let rhs0 = pair0(&t0)?;
    let ca1 = pair1(&lw_lam)?;
    let cg1 = pair1(&lw_miw)?;
    let cb1 = pair1(&dbp1.scaled(Complex64::new(-1.0, 0.0)))?;
    let ce1 = pair1(&dep1.scaled(Complex64::new(-1.0, 0.0)))?;
    let rhs1 = pair1(&lw_t0)?;

    let mut mat = [
        ca0[0], cg0[0], cb0[0], ce0[0], //
        ca0[1], cg0[1], cb0[1], ce0[1], //
        ca1[0], cg1[0], cb1[0], ce1[0], //
        ca1[1], cg1[1], cb1[1], ce1[1],
    ];
    let mut rhs = [-rhs0[0], -rhs0[1], -rhs1[0], -rhs1[1]];
    solve_dense(&mut mat, &mut rhs, 4)
        .ok_or_else(|| CssError::Domain("degenerate rate projection".into()))?;
    let gamma_tilde_s = rhs[1] + line_integral_w_w1(w, &w1);
    Ok(Rates {
        a: rhs[0],
        g: rhs[1],
        b_s: rhs[2],
        eta_s: rhs[3],
        gamma_tilde_s,
    })
}

/// Stop conditions for a renormalized run.
#[derive(Debug, Clone, Copy)]
pub struct StopCondition {
    pub b_end: f64,
    pub s_max: f64,
    /// stop when |eta| |log b| / b reaches this multiple of the trapped bound
    pub eta_exit_ratio: f64,
}

/// Outcome of a renormalized run.
pub struct RenormalizedRun {
    pub trajectory: ParameterTrajectory,
    pub w: EquivariantField,
    pub state: ModulationState,
    /// sign of eta at the eta-exit, when that stop fired
    pub eta_exit_sign: Option<f64>,
    /// worst full-step vs two-half-steps deviation from the periodic
    /// step-halving comparison (relative sup norm)
    pub max_step_halving_error: f64,
}

/// Dynamic rescaling: evolve w with modulation rates from the projected
/// system, renormalizing bookkeeping (lambda, gamma, b, eta) alongside, with
/// periodic Newton recentring.
pub fn evolve_renormalized(
    bg: &Background,
    vectors: &OrthogonalityVectors,
    w0: &EquivariantField,
    state0: ModulationState,
    config: &SolverConfig,
    stop: StopCondition,
) -> Result<RenormalizedRun> {
    if !(config.ds > 0.0) {
        return Err(CssError::Domain("solver step must be positive".into()));
    }
    if config.picard_tol > 1e-9 {
        return Err(CssError::Domain(
            "picard_tol must be at most 1e-9".into(),
        ));
    }
    let mut w = w0.clone();
    let mut lambda = state0.lambda;
    let mut gamma = state0.gamma;
    let mut b = state0.b;
    let mut eta = state0.eta;
    let mut s = 0.0f64;
    let mut t = 0.0f64;
    let mut traj = ParameterTrajectory::default();
    let mut eta_exit_sign = None;
    let mass0 = w.l2_sq();
    let ds = config.ds;
    // quadratic absorbing ramp on the outer band
    let sponge: Vec<f64> = if config.sponge_strength > 0.0 {
        let grid = w.grid();
        let y0 = config.sponge_start_fraction * grid.r_max();
        let width = grid.r_max() - y0;
        grid.nodes()
            .iter()
            .map(|&y| {
                if y > y0 {
                    config.sponge_strength * ((y - y0) / width).powi(2)
                } else {
                    0.0
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut rates = solve_rate_projection(bg, vectors, &w, b, eta)?;
    let mut step_index = 0usize;
    let mut mass_absorbed = 0.0f64;
    let mut max_step_halving_error = 0.0f64;

    loop {
        // diagnostics before stepping
        if step_index % config.record_every == 0 {
            let mut row = record_row(
                bg, vectors, &w, b, eta, lambda, gamma, s, t, &rates, mass0,
            )?;
            row.mass_absorbed = mass_absorbed;
            traj.rows.push(row);
        }
        if b <= stop.b_end {
            break;
        }
        if s >= stop.s_max {
            traj.truncated = Some(format!("s_max {} reached", stop.s_max));
            break;
        }
        let log_b = b.ln().abs();
        if eta.abs() * log_b / b >= stop.eta_exit_ratio {
            eta_exit_sign = Some(eta.signum());
            traj.truncated = Some("eta exit".into());
            break;
        }

        // Picard-updated Crank-Nicolson sweep with the current rates
        let mut next = w.clone();
        for _ in 0..config.picard_iters.max(1) {
            let mid = w.zip_map(&next, |a, c| 0.5 * (a + c));
            let v_mid = gauge_potential_values(&mid);
            next = cn_sweep(&w, &v_mid, &sponge, rates.a, rates.g, ds)?;
        }
        // error control: compare against two half steps every 100 steps
        if step_index % 100 == 0 {
            let mut half = w.clone();
            for _ in 0..2 {
                let mut inner = half.clone();
                for _ in 0..config.picard_iters.max(1) {
                    let mid = half.zip_map(&inner, |a, c| 0.5 * (a + c));
                    let v_mid = gauge_potential_values(&mid);
                    inner = cn_sweep(&half, &v_mid, &sponge, rates.a, rates.g, 0.5 * ds)?;
                }
                half = inner;
            }
            let dev = next.sub(&half).sup() / next.sup().max(1e-300);
            max_step_halving_error = max_step_halving_error.max(dev);
        }
        if !sponge.is_empty() {
            // absorbed mass flux 2 int sigma |w|^2 at the step midpoint
            let mid = w.zip_map(&next, |a, c| 0.5 * (a + c));
            let dens: Vec<f64> = mid
                .values()
                .iter()
                .zip(&sponge)
                .map(|(v, &sg)| 2.0 * sg * v.norm_sqr())
                .collect();
            mass_absorbed += ds * crate::field::TWO_PI * w.grid().integrate_rdr(&dens);
        }

        // end-of-step rates give a trapezoidal parameter update and become
        // the next step's start rates
        let b_pred = (b + ds * rates.b_s).max(1e-12);
        let eta_pred = eta + ds * rates.eta_s;
        let rates_end = solve_rate_projection(bg, vectors, &next, b_pred, eta_pred)?;
        let a_mid = 0.5 * (rates.a + rates_end.a);
        let g_mid = 0.5 * (rates.g + rates_end.g);
        let bs_mid = 0.5 * (rates.b_s + rates_end.b_s);
        let es_mid = 0.5 * (rates.eta_s + rates_end.eta_s);
        let lambda_new = lambda * (a_mid * ds).exp();
        t += 0.5 * (lambda * lambda + lambda_new * lambda_new) * ds;
        lambda = lambda_new;
        gamma += g_mid * ds;
        b += bs_mid * ds;
        eta += es_mid * ds;
        w = next;
        s += ds;
        rates = rates_end;
        step_index += 1;

        if b <= 0.0 {
            traj.truncated = Some("b crossed zero".into());
            break;
        }

        // periodic Newton recentring kills orthogonality drift
        if step_index % config.decomposition_every == 0 {
            match decompose(
                bg,
                vectors,
                &w,
                DecompositionMode::Nonlinear,
                Some(ModulationState::new(1.0, 0.0, b, eta)),
            ) {
                Ok(res) => {
                    if (res.state.lambda - 1.0).abs() > 1e-14 || res.state.gamma.abs() > 1e-14 {
                        w = renormalize_field(&w, res.state.lambda, res.state.gamma)?;
                        lambda *= res.state.lambda;
                        gamma += res.state.gamma;
                    }
                    b = res.state.b;
                    eta = res.state.eta;
                    rates = solve_rate_projection(bg, vectors, &w, b, eta)?;
                }
                Err(e) => {
                    traj.truncated = Some(format!("recentring failed: {e}"));
                    break;
                }
            }
        }
    }

    Ok(RenormalizedRun {
        trajectory: traj,
        w,
        state: ModulationState::new(lambda, gamma, b, eta),
        eta_exit_sign,
        max_step_halving_error,
    })
}

#[allow(clippy::too_many_arguments)]
fn record_row(
    bg: &Background,
    vectors: &OrthogonalityVectors,
    w: &EquivariantField,
    b: f64,
    eta: f64,
    lambda: f64,
    gamma: f64,
    s: f64,
    t: f64,
    rates: &Rates,
    mass0: f64,
) -> Result<TrajectoryRow> {
    let state = ModulationState::new(1.0, 0.0, b, eta);
    let set = assemble_modified_profiles(bg, state)?;
    let (eps, eps1, eps2, eps3) = adapted_derivatives_from_w(bg, w, &set)?;
    let f3 = modified_energy_f3(bg, &eps1, &eps2, &eps3, b)?;
    let (b_tilde, eta_tilde) = crate::decompose::refined_parameters(vectors, &eps1, b, eta)?;
    let mass = w.l2_sq();
    let a_theta_w = a_theta_of(w);
    let w1 = crate::gauge::cr_with_a_theta(&a_theta_w, w, 0)?;
    let energy_lab = 0.5 * w1.l2_sq() / (lambda * lambda);
    let dw = w.derivative(1)?;
    let energy_scale = 0.5 * dw.l2_sq() / (lambda * lambda);
    let _ = mass0;
    Ok(TrajectoryRow {
        t,
        s,
        lambda,
        gamma,
        b,
        eta,
        lambda_s_over_lambda: rates.a,
        gamma_s: rates.g,
        gamma_tilde_s: rates.gamma_tilde_s,
        b_s: rates.b_s,
        eta_s: rates.eta_s,
        c_b: set.corrections.c_b,
        b_tilde,
        eta_tilde,
        eps_l2: eps.l2(),
        eps1_l2: eps1.l2(),
        eps3_l2: eps3.l2(),
        f3: f3.f3,
        f3_correction: f3.correction,
        repulsivity: f3.repulsivity_pairing,
        mass,
        mass_absorbed: 0.0,
        energy_lab,
        energy_scale,
    })
}

// ---------------------------------------------------------------------------
// formal parameter ODE laws
// ---------------------------------------------------------------------------

/// Which c_b model drives the m=0 logarithmic law.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum CbModel {
    /// the classical asymptotic coefficient: c_b = 2/|log b|
    Asymptotic,
    /// c_b = kappa/|log b| with kappa fitted from the defining quadrature ratio
    Fitted { kappa: f64 },
}

impl CbModel {
    pub fn c_b(&self, b: f64) -> f64 {
        let log_b = b.ln().abs();
        match self {
            CbModel::Asymptotic => 2.0 / log_b,
            CbModel::Fitted { kappa } => kappa / log_b,
        }
    }
}

/// The ODE system selector for `integrate_parameter_law`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum ParameterLaw {
    /// m = 0 with logarithmic corrections:
    /// lambda_s/lambda = -b, gamma~_s = -eta,
    /// b_s = -b^2 - eta^2 - c_b (b^2 - eta^2), eta_s = -2 c_b b eta
    M0Log(CbModel),
    /// m >= 1: lambda_s/lambda = -b, gamma_s = (m+1) eta,
    /// b_s = -b^2 - eta^2, eta_s = 0
    MGe1 { m: usize },
}

/// One ODE sample: (t, s, lambda, gamma, b, eta, integral of c_b ds).
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct OdeRow {
    pub t: f64,
    pub s: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub b: f64,
    pub eta: f64,
    pub cb_integral: f64,
}

pub struct OdeTrajectory {
    pub rows: Vec<OdeRow>,
    pub law: ParameterLaw,
    /// set when the run stopped early (e.g. b reached zero past the trapped
    /// regime)
    pub truncated: Option<String>,
}

fn law_rhs(law: ParameterLaw, state: &[f64; 7]) -> [f64; 7] {
    // state = [t, lambda, gamma, b, eta, cb_integral, s] driven in s
    let (lambda, b, eta) = (state[1], state[3], state[4]);
    match law {
        ParameterLaw::M0Log(model) => {
            let cb = model.c_b(b.max(1e-300));
            [
                lambda * lambda,
                -b * lambda,
                -eta, // gamma~ rate; gamma := gamma~ for the m0 law
                -b * b - eta * eta - cb * (b * b - eta * eta),
                -2.0 * cb * b * eta,
                cb,
                1.0,
            ]
        }
        ParameterLaw::MGe1 { m } => [
            lambda * lambda,
            -b * lambda,
            (m as f64 + 1.0) * eta,
            -b * b - eta * eta,
            0.0,
            0.0,
            1.0,
        ],
    }
}

/// Adaptive RK4 (step-doubling control) of the chosen law over [0, s_span],
/// marched in logarithmic time tau = log(1 + s) so late, slow dynamics take
/// large s-steps.
pub fn integrate_parameter_law(
    initial: ModulationState,
    law: ParameterLaw,
    s_span: f64,
    samples: usize,
) -> Result<OdeTrajectory> {
    let mut state = [
        0.0,
        initial.lambda,
        initial.gamma,
        initial.b,
        initial.eta,
        0.0,
        0.0,
    ];
    let mut rows = vec![OdeRow {
        t: 0.0,
        s: 0.0,
        lambda: state[1],
        gamma: state[2],
        b: state[3],
        eta: state[4],
        cb_integral: 0.0,
    }];
    // rhs in tau: d/dtau = (1 + s) d/ds
    let rhs_tau = |st: &[f64; 7]| -> [f64; 7] {
        let f = law_rhs(law, st);
        let j = 1.0 + st[6];
        let mut out = [0.0; 7];
        for i in 0..7 {
            out[i] = j * f[i];
        }
        out
    };
    let rk4 = |st: &[f64; 7], h: f64| -> [f64; 7] {
        let k1 = rhs_tau(st);
        let add = |a: &[f64; 7], k: &[f64; 7], c: f64| {
            let mut out = *a;
            for i in 0..7 {
                out[i] += c * k[i];
            }
            out
        };
        let k2 = rhs_tau(&add(st, &k1, h / 2.0));
        let k3 = rhs_tau(&add(st, &k2, h / 2.0));
        let k4 = rhs_tau(&add(st, &k3, h));
        let mut out = *st;
        for i in 0..7 {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    };
    let tau_end = (1.0 + s_span).ln();
    let mut tau = 0.0f64;
    let mut h = 1e-4f64;
    let tol = 1e-12;
    // log-spaced recording targets in s
    let mut targets: Vec<f64> = (1..=samples)
        .map(|k| {
            let f = k as f64 / samples as f64;
            if s_span > 100.0 {
                (s_span.ln() * f).exp()
            } else {
                s_span * f
            }
        })
        .collect();
    targets.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut ti = 0usize;
    let mut steps = 0usize;
    let mut truncated = None;
    while tau < tau_end {
        if steps > 5_000_000 {
            return Err(CssError::Domain("ODE step budget exhausted".into()));
        }
        steps += 1;
        let hh = h.min(tau_end - tau).max(1e-12);
        let full = rk4(&state, hh);
        let half = rk4(&rk4(&state, hh / 2.0), hh / 2.0);
        let mut err = 0.0f64;
        for i in 1..5 {
            let scale = half[i].abs() + state[i].abs() + 1e-300;
            err = err.max((full[i] - half[i]).abs() / scale);
        }
        if err > tol && hh > 1e-9 {
            h = 0.5 * hh;
            continue;
        }
        state = half;
        tau += hh;
        if state[3] <= 0.0 && matches!(law, ParameterLaw::M0Log(_)) {
            truncated = Some("b crossed zero".into());
            break;
        }
        h = if err < tol / 64.0 { hh * 1.7 } else { hh };
        while ti < targets.len() && state[6] >= targets[ti] {
            rows.push(OdeRow {
                t: state[0],
                s: state[6],
                lambda: state[1],
                gamma: state[2],
                b: state[3],
                eta: state[4],
                cb_integral: state[5],
            });
            ti += 1;
        }
    }
    rows.push(OdeRow {
        t: state[0],
        s: state[6],
        lambda: state[1],
        gamma: state[2],
        b: state[3],
        eta: state[4],
        cb_integral: state[5],
    });
    Ok(OdeTrajectory {
        rows,
        law,
        truncated,
    })
}

// ---------------------------------------------------------------------------
// modulation residual series, rate extraction, shooting, pseudoconformal
// ---------------------------------------------------------------------------

/// Fitted constant of the F3 monotonicity bound along a run:
/// (d_s - 6 lambda_s/lambda) F3 <= b (||eps3||^2/100 + C b^4/|log b|^2).
pub fn f3_monotonicity_constant(traj: &ParameterTrajectory) -> Option<f64> {
    let rows = &traj.rows;
    if rows.len() < 3 {
        return None;
    }
    let mut c_fit = 0.0f64;
    for k in 1..rows.len() - 1 {
        let ds = rows[k + 1].s - rows[k - 1].s;
        if ds <= 0.0 {
            continue;
        }
        let df3 = (rows[k + 1].f3 - rows[k - 1].f3) / ds;
        let r = &rows[k];
        let lhs = df3 - 6.0 * r.lambda_s_over_lambda * r.f3;
        let margin = lhs - r.b * r.eps3_l2 * r.eps3_l2 / 100.0;
        if margin > 0.0 {
            let log_b = r.b.ln().abs();
            c_fit = c_fit.max(margin * log_b * log_b / r.b.powi(5));
        }
    }
    Some(c_fit)
}

/// Per-sample modulation residuals of a renormalized run.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ModulationResidualRow {
    pub s: f64,
    pub b: f64,
    pub scale_residual: f64,
    pub phase_residual: f64,
    pub phase_tilde_residual: f64,
    pub b_residual: f64,
    pub eta_residual: f64,
    pub eps3_l2: f64,
}

pub fn modulation_residual_series(traj: &ParameterTrajectory) -> Vec<ModulationResidualRow> {
    traj.rows
        .iter()
        .map(|r| {
            let cb = r.c_b;
            ModulationResidualRow {
                s: r.s,
                b: r.b,
                scale_residual: (r.lambda_s_over_lambda + r.b).abs(),
                phase_residual: (r.gamma_s - r.eta).abs(),
                phase_tilde_residual: (r.gamma_tilde_s + r.eta).abs(),
                b_residual: (r.b_s + r.b * r.b + r.eta * r.eta + cb * (r.b * r.b - r.eta * r.eta))
                    .abs(),
                eta_residual: (r.eta_s + 2.0 * cb * r.b * r.eta).abs(),
                eps3_l2: r.eps3_l2,
            }
        })
        .collect()
}

/// Blow-up time and rate-constant extraction from an ODE trajectory.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct RateFit {
    pub t_blowup: f64,
    pub ell: f64,
    /// relative spread of b |log b|^2 / lambda over the final decade of s
    pub plateau_flatness: f64,
    /// relative spread of lambda(t) |log(T-t)|^2/(T-t) over the same window
    pub lambda_rate_flatness: f64,
    pub ell_from_lambda_rate: f64,
    /// plateau value of b(t) |log(T-t)|^4/(T-t), to compare with ell^2
    pub ell_sq_from_b_rate: f64,
}

/// Remaining time to blow-up T - t at every row, accumulated backward as
/// int_s^infty lambda^2 ds' (sums of small positives; no cancellation), with
/// the far tail closed by the asymptotic lambda^2 s (1 + 4/ln s).
pub fn remaining_time(rows: &[OdeRow]) -> Vec<f64> {
    let n = rows.len();
    let mut r = vec![0.0; n];
    let last = &rows[n - 1];
    r[n - 1] = last.lambda * last.lambda * last.s * (1.0 + 4.0 / last.s.max(3.0).ln());
    for k in (0..n - 1).rev() {
        let (s0, s1) = (rows[k].s.max(1e-300), rows[k + 1].s);
        let f0 = rows[k].lambda * rows[k].lambda * s0;
        let f1 = rows[k + 1].lambda * rows[k + 1].lambda * s1;
        // trapezoid of lambda^2 s dln(s); fall back to plain ds near s ~ 0
        let seg = if s0 > 1.0 {
            0.5 * (f0 + f1) * (s1 / s0).ln()
        } else {
            0.5 * (rows[k].lambda * rows[k].lambda + rows[k + 1].lambda * rows[k + 1].lambda)
                * (s1 - rows[k].s)
        };
        r[k] = r[k + 1] + seg;
    }
    r
}

/// `window_hi`: the rate diagnostics run over s in [window_hi/10, window_hi].
/// The trajectory should extend well past the window (b far smaller) so the
/// backward-accumulated remaining time is accurate inside it.
pub fn extract_blowup_rate(rows: &[OdeRow], window_hi: f64) -> Result<RateFit> {
    if rows.len() < 8 {
        return Err(CssError::Domain("trajectory too short for a rate fit".into()));
    }
    let remaining = remaining_time(rows);
    let idx: Vec<usize> = (0..rows.len())
        .filter(|&i| rows[i].s >= window_hi / 10.0 && rows[i].s <= window_hi)
        .collect();
    if idx.len() < 4 {
        return Err(CssError::Domain("no usable rate window".into()));
    }
    let t_blowup = rows[0].t + remaining[0];

    let plateau: Vec<f64> = idx
        .iter()
        .map(|&i| rows[i].b * rows[i].b.ln().abs().powi(2) / rows[i].lambda)
        .collect();
    let ell = plateau.iter().sum::<f64>() / plateau.len() as f64;
    let spread = |v: &[f64]| {
        let hi = v.iter().fold(f64::MIN, |a, &x| a.max(x));
        let lo = v.iter().fold(f64::MAX, |a, &x| a.min(x));
        (hi - lo) / (v.iter().sum::<f64>() / v.len() as f64)
    };
    let plateau_flatness = spread(&plateau);

    let lam_rate: Vec<f64> = idx
        .iter()
        .map(|&i| {
            let tt = remaining[i];
            rows[i].lambda * tt.ln().abs().powi(2) / tt
        })
        .collect();
    let ell_from_lambda_rate = lam_rate.iter().sum::<f64>() / lam_rate.len().max(1) as f64;
    let lambda_rate_flatness = spread(&lam_rate);
    let b_rate: Vec<f64> = idx
        .iter()
        .map(|&i| {
            let tt = remaining[i];
            rows[i].b * tt.ln().abs().powi(4) / tt
        })
        .collect();
    let ell_sq_from_b_rate = b_rate.iter().sum::<f64>() / b_rate.len().max(1) as f64;

    Ok(RateFit {
        t_blowup,
        ell,
        plateau_flatness,
        lambda_rate_flatness,
        ell_from_lambda_rate,
        ell_sq_from_b_rate,
    })
}

/// Outcome of a single shooting run.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum ShotOutcome {
    ExitPlus,
    ExitMinus,
    TrappedToEnd { final_eta_sign: f64 },
}

impl ShotOutcome {
    fn sign(&self) -> f64 {
        match self {
            ShotOutcome::ExitPlus => 1.0,
            ShotOutcome::ExitMinus => -1.0,
            ShotOutcome::TrappedToEnd { final_eta_sign } => *final_eta_sign,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ShootingReport {
    pub eta_hat: f64,
    pub bracket_initial: (f64, f64),
    pub bracket_final: (f64, f64),
    pub log: Vec<(f64, f64)>,
    pub shrink_factor: f64,
}

/// Bisection on the sign of eta at the trapped-region exit.
pub fn eta_shooting(
    mut run: impl FnMut(f64) -> Result<ShotOutcome>,
    bracket: (f64, f64),
    budget: usize,
) -> Result<ShootingReport> {
    let (mut lo, mut hi) = bracket;
    if lo >= hi {
        return Err(CssError::BracketError("empty bracket".into()));
    }
    let s_lo = run(lo)?.sign();
    let s_hi = run(hi)?.sign();
    let mut log = vec![(lo, s_lo), (hi, s_hi)];
    if s_lo == s_hi {
        return Err(CssError::BracketError(format!(
            "both endpoints exit with sign {s_lo}"
        )));
    }
    let mut used = 2usize;
    while used < budget {
        let mid = 0.5 * (lo + hi);
        let s_mid = run(mid)?.sign();
        log.push((mid, s_mid));
        if s_mid == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        used += 1;
    }
    let width0 = bracket.1 - bracket.0;
    Ok(ShootingReport {
        eta_hat: 0.5 * (lo + hi),
        bracket_initial: bracket,
        bracket_final: (lo, hi),
        log,
        shrink_factor: width0 / (hi - lo),
    })
}

/// The infinite-time scale from a finite-time trajectory: with blow-up at T,
/// lambda_inf(t') = t' lambda(T - 1/t') evaluated at t' = 1/(T - t).
#[derive(Debug, Clone, serde::Serialize)]
pub struct PseudoconformalPush {
    pub rows: Vec<(f64, f64, f64)>,
    /// relative spread of lambda_inf (log t)^2 over the pushed window
    pub flatness: f64,
}

/// `window`: s-range of source rows pushed through the transform.
pub fn pseudoconformal_push(rows: &[OdeRow], window: (f64, f64)) -> Result<PseudoconformalPush> {
    let remaining = remaining_time(rows);
    let mut out = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        if r.s < window.0 || r.s > window.1 {
            continue;
        }
        let rem = remaining[i];
        if rem <= 0.0 {
            continue;
        }
        let t_new = 1.0 / rem;
        if t_new < 10.0 {
            continue; // need log t bounded away from 0
        }
        let lam_inf = t_new * r.lambda;
        out.push((t_new, lam_inf, lam_inf * t_new.ln().powi(2)));
    }
    if out.len() < 4 {
        return Err(CssError::Domain("no usable pushed window".into()));
    }
    let vals: Vec<f64> = out.iter().map(|r| r.2).collect();
    let hi = vals.iter().fold(f64::MIN, |a, &x| a.max(x));
    let lo = vals.iter().fold(f64::MAX, |a, &x| a.min(x));
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    Ok(PseudoconformalPush {
        rows: out,
        flatness: (hi - lo) / mean,
    })
}

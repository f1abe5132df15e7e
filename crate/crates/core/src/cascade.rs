//! The nonlinear higher-order variables u1 = D_u u and u2 = A_u D_u u, the
//! renormalized frame (s, y, w, w1, w2), the modified phase rate, and residual
//! evaluators for the three renormalized evolution equations.

use crate::field::EquivariantField;
use crate::gauge::{
    a_theta_of, covariant_cr_derivative, cr_adjoint_with_a_theta, cr_with_a_theta, lambda_op,
    linearized_bogomolnyi,
};
use crate::grid::TailPolicy;
use crate::Result;
use num_complex::Complex64;

/// The cascade u, u1 = D_u u, u2 = A_u u1.
pub struct CascadeState {
    pub u: EquivariantField,
    pub u1: EquivariantField,
    pub u2: EquivariantField,
}

pub fn build_cascade(u: &EquivariantField) -> Result<CascadeState> {
    let u1 = covariant_cr_derivative(u, u, u.m)?;
    let u2 = covariant_cr_derivative(u, &u1, u.m + 1)?;
    Ok(CascadeState {
        u: u.clone(),
        u1,
        u2,
    })
}

/// Renormalized variables on the y-grid, with the scaling/phase rates the
/// caller has decided on (zero for static data).
pub struct RenormalizedFrame {
    pub s: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub w: EquivariantField,
    pub w1: EquivariantField,
    pub w2: EquivariantField,
    pub lambda_s_over_lambda: f64,
    pub gamma_s: f64,
    /// Number of sample points that fell beyond the source grid and were
    /// tail-extrapolated during renormalization.
    pub extrapolated: usize,
}

impl RenormalizedFrame {
    /// gamma_tilde_s = gamma_s + int_0^infty Re(conj(w) w1) dy.
    pub fn gamma_tilde_s(&self) -> f64 {
        self.gamma_s + line_integral_w_w1(&self.w, &self.w1)
    }
}

/// int_0^infty Re(conj(w) w1) dy (1-D line measure, tail-corrected).
pub fn line_integral_w_w1(w: &EquivariantField, w1: &EquivariantField) -> f64 {
    let f: Vec<f64> = w
        .values()
        .iter()
        .zip(w1.values())
        .map(|(a, b)| (a.conj() * b).re)
        .collect();
    w.grid().integrate_dr_tail_corrected(&f)
}

/// w(y) = lambda e^{-i gamma} u(lambda y) and its cascade, by interpolation
/// onto the same grid; static rates.
pub fn renormalize_frame(
    u: &EquivariantField,
    lambda: f64,
    gamma: f64,
) -> Result<RenormalizedFrame> {
    let grid = u.grid().clone();
    let cascade = build_cascade(u)?;
    let phase = Complex64::from_polar(1.0, -gamma);
    let resample = |f: &EquivariantField, power: i32| -> Result<(EquivariantField, usize)> {
        if lambda == 1.0 {
            return Ok((f.scaled(phase), 0));
        }
        let positions: Vec<f64> = grid.nodes().iter().map(|&y| lambda * y).collect();
        let (vals, e) = f.sample_at(&positions, TailPolicy::PowerLaw)?;
        let c = lambda.powi(power);
        let scaled: Vec<Complex64> = vals.into_iter().map(|v| c * phase * v).collect();
        Ok((
            EquivariantField::new(grid.clone(), f.m, scaled).with_parity(f.origin_parity),
            e,
        ))
    };
    let (w, e0) = resample(u, 1)?;
    let (w1, e1) = resample(&cascade.u1, 2)?;
    let (w2, e2) = resample(&cascade.u2, 3)?;
    Ok(RenormalizedFrame {
        s: 0.0,
        lambda,
        gamma,
        w,
        w1,
        w2,
        lambda_s_over_lambda: 0.0,
        gamma_s: 0.0,
        extrapolated: e0 + e1 + e2,
    })
}

/// Which renormalized equation to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CascadeEquation {
    W,
    W1,
    W2,
}

/// Left-hand side of the selected renormalized equation; `ds_field` is the
/// caller's estimate of the s-derivative of the corresponding variable.
pub fn cascade_equation_residual(
    frame: &RenormalizedFrame,
    which: CascadeEquation,
    ds_field: &EquivariantField,
) -> Result<EquivariantField> {
    let a = frame.lambda_s_over_lambda;
    let w = &frame.w;
    let a_theta_w = a_theta_of(w);
    let gamma_tilde_s = frame.gamma_tilde_s();
    // int_0^y Re(conj(w) w1) dy' as nodal values
    let prod: Vec<f64> = w
        .values()
        .iter()
        .zip(frame.w1.values())
        .map(|(x, y)| (x.conj() * y).re)
        .collect();
    let nonlocal = w.grid().prefix_dr(&prod);

    match which {
        CascadeEquation::W => {
            let w1c = cr_with_a_theta(&a_theta_w, w, w.m)?;
            let lstar = linearized_bogomolnyi(w, &w1c, true)?;
            let mut res = ds_field.clone();
            let lam = lambda_op(w, 0.0)?;
            res = res.axpy(Complex64::new(-a, 0.0), &lam);
            res = res.axpy(Complex64::new(0.0, frame.gamma_s), w);
            res = res.add(&lstar.times_i());
            Ok(res)
        }
        CascadeEquation::W1 => {
            let aw = cr_with_a_theta(&a_theta_w, &frame.w1, 1)?;
            let astar_aw = cr_adjoint_with_a_theta(&a_theta_w, &aw, 1)?;
            let mut res = ds_field.clone();
            let lam = lambda_op(&frame.w1, -1.0)?;
            res = res.axpy(Complex64::new(-a, 0.0), &lam);
            res = res.axpy(Complex64::new(0.0, gamma_tilde_s), &frame.w1);
            res = res.add(&astar_aw.times_i());
            let nl = frame.w1.times_i().mul_real(&nonlocal);
            res = res.sub(&nl);
            Ok(res)
        }
        CascadeEquation::W2 => {
            let astar_w2 = cr_adjoint_with_a_theta(&a_theta_w, &frame.w2, 1)?;
            let a_astar_w2 = cr_with_a_theta(&a_theta_w, &astar_w2, 1)?;
            let mut res = ds_field.clone();
            let lam = lambda_op(&frame.w2, -2.0)?;
            res = res.axpy(Complex64::new(-a, 0.0), &lam);
            res = res.axpy(Complex64::new(0.0, gamma_tilde_s), &frame.w2);
            res = res.add(&a_astar_w2.times_i());
            let nl = frame.w2.times_i().mul_real(&nonlocal);
            res = res.sub(&nl);
            let cubic = w.conj().mul_field(&frame.w1).mul_field(&frame.w1);
            res = res.sub(&cubic.times_i());
            Ok(res)
        }
    }
}

/// The w1-equation assembled with the raw phase rate and the outer-tail
/// integral instead of gamma_tilde; agrees with the gamma_tilde assembly
/// identically (same total used on both sides).
pub fn w1_residual_outer_assembly(
    frame: &RenormalizedFrame,
    ds_w1: &EquivariantField,
) -> Result<EquivariantField> {
    let a = frame.lambda_s_over_lambda;
    let w = &frame.w;
    let a_theta_w = a_theta_of(w);
    let prod: Vec<f64> = w
        .values()
        .iter()
        .zip(frame.w1.values())
        .map(|(x, y)| (x.conj() * y).re)
        .collect();
    let total = line_integral_w_w1(w, &frame.w1);
    let prefix = w.grid().prefix_dr(&prod);
    let outer: Vec<f64> = prefix.iter().map(|p| total - p).collect();

    let aw = cr_with_a_theta(&a_theta_w, &frame.w1, 1)?;
    let astar_aw = cr_adjoint_with_a_theta(&a_theta_w, &aw, 1)?;
    let mut res = ds_w1.clone();
    let lam = lambda_op(&frame.w1, -1.0)?;
    res = res.axpy(Complex64::new(-a, 0.0), &lam);
    res = res.axpy(Complex64::new(0.0, frame.gamma_s), &frame.w1);
    res = res.add(&astar_aw.times_i());
    let nl = frame.w1.times_i().mul_real(&outer);
    res = res.add(&nl);
    Ok(res)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::{apply_symmetry, vortex, Symmetry};
    use crate::grid::RadialGrid;
    use crate::testfields::TestFieldGen;
    use std::sync::Arc;

    fn grid() -> Arc<RadialGrid> {
        RadialGrid::build(100.0, 1024, 1024, 10.0).unwrap()
    }

    #[test]
    fn cascade_of_ground_state_vanishes() {
        let g = grid();
        let q = vortex(&g, 0);
        let c = build_cascade(&q).unwrap();
        assert!(c.u1.l2() < 1e-5, "u1 = {:e}", c.u1.l2());
        assert!(c.u2.l2() < 1e-3, "u2 = {:e}", c.u2.l2());
        assert_eq!(c.u1.m, 1);
        assert_eq!(c.u2.m, 2);
    }

    #[test]
    fn cascade_of_modulated_ground_state_vanishes() {
        let g = grid();
        let q = vortex(&g, 0);
        let u = apply_symmetry(&q, Symmetry::Scale(1.4)).unwrap();
        let u = apply_symmetry(&u, Symmetry::Phase(1.1)).unwrap();
        let c = build_cascade(&u).unwrap();
        assert!(c.u1.l2() < 1e-4, "u1 = {:e}", c.u1.l2());
    }

    #[test]
    fn cascade_linear_in_small_perturbations() {
        let g = grid();
        let q = vortex(&g, 0);
        let bump = TestFieldGen::new(0, 31).with_support(30.0).field(&g);
        let norm1 = {
            let u = q.axpy(Complex64::new(1e-3, 0.0), &bump);
            build_cascade(&u).unwrap().u1.l2()
        };
        let norm2 = {
            let u = q.axpy(Complex64::new(5e-4, 0.0), &bump);
            build_cascade(&u).unwrap().u1.l2()
        };
        let ratio = norm1 / norm2;
        assert!(
            (ratio - 2.0).abs() < 0.02,
            "first-order scaling broken: ratio {ratio}"
        );
    }

    #[test]
    fn renormalize_identity() {
        let g = grid();
        let u = TestFieldGen::new(0, 8).field(&g);
        let f = renormalize_frame(&u, 1.0, 0.0).unwrap();
        assert!(f.w.sub(&u).sup() == 0.0);
        assert_eq!(f.extrapolated, 0);
    }

    #[test]
    fn renormalize_inverts_modulation() {
        let g = grid();
        let q = vortex(&g, 0);
        let lambda = 1.6;
        let u = apply_symmetry(&q, Symmetry::Scale(lambda)).unwrap();
        let f = renormalize_frame(&u, lambda, 0.0).unwrap();
        let diff = f.w.sub(&q);
        assert!(diff.sup_on(50.0) < 1e-6, "w != Q: {:e}", diff.sup_on(50.0));
    }

    #[test]
    fn renormalize_preserves_l2_for_compact_data() {
        let g = RadialGrid::build(60.0, 4096, 2048, 10.0).unwrap();
        let u = TestFieldGen::new(0, 12).with_support(25.0).field(&g);
        let f = renormalize_frame(&u, 1.3, 0.7).unwrap();
        let (n0, n1) = (u.l2(), f.w.l2());
        assert!(
            ((n1 - n0) / n0).abs() < 1e-10,
            "renormalization broke L2: {n0} -> {n1}"
        );
    }

    #[test]
    fn cascade_naturality() {
        let g = grid();
        let q = vortex(&g, 0);
        let bump = TestFieldGen::new(0, 77).with_support(20.0).field(&g);
        let u = q.axpy(Complex64::new(0.05, 0.0), &bump);
        let lambda = 1.25;
        let frame = renormalize_frame(&u, lambda, 0.3).unwrap();
        let direct = build_cascade(&frame.w).unwrap();
        let d1 = frame.w1.sub(&direct.u1).sup_on(40.0);
        let d2 = frame.w2.sub(&direct.u2).sup_on(40.0);
        assert!(d1 < 1e-5, "w1 naturality defect {d1:e}");
        assert!(d2 < 1e-3, "w2 naturality defect {d2:e}");
    }

    #[test]
    fn static_frame_residuals_vanish() {
        let g = grid();
        let q = vortex(&g, 0);
        let frame = RenormalizedFrame {
            s: 0.0,
            lambda: 1.0,
            gamma: 0.0,
            w: q.clone(),
            w1: EquivariantField::zeros(g.clone(), 1),
            w2: EquivariantField::zeros(g.clone(), 2),
            lambda_s_over_lambda: 0.0,
            gamma_s: 0.0,
            extrapolated: 0,
        };
        let zero0 = EquivariantField::zeros(g.clone(), 0);
        let zero1 = EquivariantField::zeros(g.clone(), 1);
        let zero2 = EquivariantField::zeros(g.clone(), 2);
        let r0 = cascade_equation_residual(&frame, CascadeEquation::W, &zero0).unwrap();
        let r1 = cascade_equation_residual(&frame, CascadeEquation::W1, &zero1).unwrap();
        let r2 = cascade_equation_residual(&frame, CascadeEquation::W2, &zero2).unwrap();
        assert!(r0.l2() < 1e-4, "w-eqn residual {:e}", r0.l2());
        assert!(r1.l2() < 1e-12);
        assert!(r2.l2() < 1e-12);
    }

    #[test]
    fn phase_rotation_residual_cancels() {
        // w = e^{-is} Q at s=0 with gamma_s = 1: ds w = -i w cancels gamma_s i w
        let g = grid();
        let q = vortex(&g, 0);
        let frame = RenormalizedFrame {
            s: 0.0,
            lambda: 1.0,
            gamma: 0.0,
            w: q.clone(),
            w1: EquivariantField::zeros(g.clone(), 1),
            w2: EquivariantField::zeros(g.clone(), 2),
            lambda_s_over_lambda: 0.0,
            gamma_s: 1.0,
            extrapolated: 0,
        };
        let ds_w = q.times_i().scaled(Complex64::new(-1.0, 0.0));
        let res = cascade_equation_residual(&frame, CascadeEquation::W, &ds_w).unwrap();
        assert!(res.l2() < 1e-4, "residual {:e}", res.l2());
    }

    #[test]
    fn consecutive_frames_residual_is_second_order_in_time() {
        // the w-equation residual evaluated with a centered time difference of
        // two solver frames shrinks like h^2
        let g = RadialGrid::build(60.0, 1024, 512, 10.0).unwrap();
        let q = vortex(&g, 0);
        let bump = TestFieldGen::new(0, 13).with_support(20.0).field(&g);
        let u0 = q.axpy(Complex64::new(0.05, 0.02), &bump);
        let residual_at = |h: f64| {
            // centered difference over three solver frames, evaluated at the
            // middle one (the two-frame midpoint satisfies the scheme's own
            // identity and hides the O(h^2) error)
            let u1 = crate::dynamics::step_lab_frame(&u0, h, 4, 1e-12).unwrap();
            let u2 = crate::dynamics::step_lab_frame(&u1, h, 4, 1e-12).unwrap();
            let ds = u2.sub(&u0).scaled(Complex64::new(0.5 / h, 0.0));
            let c = build_cascade(&u1).unwrap();
            let frame = RenormalizedFrame {
                s: 0.0,
                lambda: 1.0,
                gamma: 0.0,
                w: c.u,
                w1: c.u1,
                w2: c.u2,
                lambda_s_over_lambda: 0.0,
                gamma_s: 0.0,
                extrapolated: 0,
            };
            cascade_equation_residual(&frame, CascadeEquation::W, &ds)
                .unwrap()
                .sup_on(40.0)
        };
        // steps large enough that the O(h^2) part dominates the spatial floor
        let (r1, r2) = (residual_at(4e-2), residual_at(2e-2));
        let ratio = r1 / r2;
        assert!(
            ratio > 3.0 && ratio < 6.0,
            "time-residual ratio {ratio} not ~4 ({r1:e} vs {r2:e})"
        );
    }

    #[test]
    fn w1_assemblies_agree() {
        let g = grid();
        let q = vortex(&g, 0);
        let bump = TestFieldGen::new(0, 19).with_support(25.0).field(&g);
        let u = q.axpy(Complex64::new(0.02, 0.01), &bump);
        let c = build_cascade(&u).unwrap();
        let frame = RenormalizedFrame {
            s: 0.0,
            lambda: 1.0,
            gamma: 0.0,
            w: c.u,
            w1: c.u1,
            w2: c.u2,
            lambda_s_over_lambda: -0.01,
            gamma_s: 0.3,
            extrapolated: 0,
        };
        let ds = TestFieldGen::new(1, 55).field(&g);
        let ra = cascade_equation_residual(&frame, CascadeEquation::W1, &ds).unwrap();
        let rb = w1_residual_outer_assembly(&frame, &ds).unwrap();
        let diff = ra.sub(&rb).sup();
        let scale = ra.sup().max(1e-10);
        assert!(diff / scale < 1e-12, "assemblies differ by {diff:e}");
    }
}

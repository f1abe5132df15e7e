//! Adapted norms at the four regularity levels, the auxiliary X norm, the
//! Hardy/interpolation/weighted-sup inequality suites, and the dyadic-sum
//! family separating the adapted H2-level norm from the Sobolev one.

use crate::cutoff::chi_scaled;
use crate::field::{EquivariantField, TWO_PI};
use crate::testfields::TestFieldGen;
use crate::{CssError, Result};
use std::sync::Arc;

/// The adapted norms (k, m) in {(1,0), (1,2), (2,1), (3,0)} plus L^2 and X.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptedNorm {
    L2,
    /// Hdot^1_0: |d_r v| + |v / (r <log_- r>)|
    H10,
    /// Hdot^1_2: |d_r v| + |v / (r <log_+ r>)|
    H12,
    /// Hdot^2_1: |d_rr v| + ||v|_{-1} / (r <log r>)|
    H21,
    /// Hdot^3_0: |d_rrr v| + ||d_r v|_{-1}/(r<log r>)| + |v/(r <r>^2 <log r>)|
    H30,
    /// X: |<y>^{-2} <log_+ y> v|
    X,
}

fn bracket(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

fn log_plus(r: f64) -> f64 {
    r.ln().max(0.0)
}

fn log_minus(r: f64) -> f64 {
    (-r.ln()).max(0.0)
}

fn l2_of(f: &EquivariantField, weighted: &[f64]) -> f64 {
    (TWO_PI * f.grid().integrate_rdr(weighted)).max(0.0).sqrt()
}

/// Weighted L^2 building block: || w(r) |field| ||_{L^2(2 pi r dr)}.
fn weighted_l2(f: &EquivariantField, mags: &[f64], weight: impl Fn(f64) -> f64) -> f64 {
    let sq: Vec<f64> = f
        .grid()
        .nodes()
        .iter()
        .zip(mags.iter())
        .map(|(&r, &m)| {
            let w = weight(r);
            w * w * m * m
        })
        .collect();
    l2_of(f, &sq)
}

/// The adapted norm of `f`; errors when the field index does not match the
/// norm's equivariance level.
pub fn adapted_norm(f: &EquivariantField, which: AdaptedNorm) -> Result<f64> {
    let expect = |m: usize| -> Result<()> {
        if f.m != m {
            Err(CssError::IndexMismatch {
                expected: m,
                got: f.m,
            })
        } else {
            Ok(())
        }
    };
    let mags = f.abs();
    match which {
        AdaptedNorm::L2 => Ok(f.l2()),
        AdaptedNorm::X => Ok(weighted_l2(f, &mags, |r| {
            bracket(log_plus(r)) / (bracket(r) * bracket(r))
        })),
        AdaptedNorm::H10 => {
            expect(0)?;
            let d = f.derivative(1)?;
            Ok(d.l2() + weighted_l2(f, &mags, |r| 1.0 / (r * bracket(log_minus(r)))))
        }
        AdaptedNorm::H12 => {
            expect(2)?;
            let d = f.derivative(1)?;
            Ok(d.l2() + weighted_l2(f, &mags, |r| 1.0 / (r * bracket(log_plus(r)))))
        }
        AdaptedNorm::H21 => {
            expect(1)?;
            let d2 = f.derivative(2)?;
            let s1 = f.pointwise_seminorm(-1)?;
            Ok(d2.l2() + weighted_l2(f, &s1, |r| 1.0 / (r * bracket(r.ln()))))
        }
        AdaptedNorm::H30 => {
            expect(0)?;
            let d3 = f.derivative(3)?;
            let df = f.derivative(1)?;
            let s1 = df.pointwise_seminorm(-1)?;
            let mid = weighted_l2(f, &s1, |r| 1.0 / (r * bracket(r.ln())));
            let low = weighted_l2(f, &mags, |r| {
                1.0 / (r * bracket(r) * bracket(r) * bracket(r.ln()))
            });
            Ok(d3.l2() + mid + low)
        }
    }
}

/// All norms meaningful for the index of `f`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct NormReport {
    pub l2: f64,
    pub h1_0: Option<f64>,
    pub h1_2: Option<f64>,
    pub h2_1: Option<f64>,
    pub h3_0: Option<f64>,
    pub x_norm: f64,
}

pub fn norm_report(f: &EquivariantField) -> Result<NormReport> {
    let grab = |w: AdaptedNorm| adapted_norm(f, w).ok();
    Ok(NormReport {
        l2: f.l2(),
        h1_0: grab(AdaptedNorm::H10),
        h1_2: grab(AdaptedNorm::H12),
        h2_1: grab(AdaptedNorm::H21),
        h3_0: grab(AdaptedNorm::H30),
        x_norm: adapted_norm(f, AdaptedNorm::X)?,
    })
}

/// Plain Sobolev Hdot^2-level seminorm of an m=1 field, || |d_+ v|_{-1} ||_{L^2}
/// with d_+ = d_r - 1/r; the comparison partner of the adapted H21 norm.
pub fn sobolev_h21(f: &EquivariantField) -> Result<f64> {
    if f.m != 1 {
        return Err(CssError::IndexMismatch {
            expected: 1,
            got: f.m,
        });
    }
    let grid = f.grid();
    let d = f.derivative(1)?;
    let mut dplus = d.clone();
    for (i, &r) in grid.nodes().iter().enumerate() {
        dplus.values_mut()[i] = d.values()[i] - f.values()[i] / r;
    }
    dplus.m = 2;
    dplus.origin_parity = crate::grid::Parity::Even;
    let s = dplus.pointwise_seminorm(-1)?;
    let ones: Vec<f64> = s.iter().map(|&v| v * v).collect();
    Ok(l2_of(f, &ones))
}

/// L^2 mass on the annulus r in [1/2, 2].
pub fn local_mass(f: &EquivariantField) -> f64 {
    let sq: Vec<f64> = f
        .grid()
        .nodes()
        .iter()
        .zip(f.values())
        .map(|(&r, v)| {
            if (0.5..=2.0).contains(&r) {
                v.norm_sqr()
            } else {
                0.0
            }
        })
        .collect();
    (TWO_PI * f.grid().integrate_rdr(&sq)).max(0.0).sqrt()
}

/// Worst LHS/RHS ratios of the weighted inequality suite over a seeded sample.
#[derive(Debug, Clone, serde::Serialize)]
pub struct InequalityReport {
    pub log_hardy: f64,
    pub weighted_hardy: f64,
    pub interpolation_seminorm: f64,
    pub interpolation_lp: f64,
    pub weighted_sup_m0: f64,
    pub weighted_sup_m1: f64,
    pub weighted_sup_m2: f64,
    pub h21_equivalence_hi: f64,
    pub h21_equivalence_lo: f64,
}

/// Evaluate the inequality suite on `samples` seeded random smooth fields.
pub fn inequality_suite(
    grid: &Arc<crate::grid::RadialGrid>,
    seed: u64,
    samples: usize,
) -> Result<InequalityReport> {
    let mut log_hardy = 0.0f64;
    let mut weighted_hardy = 0.0f64;
    let mut interp_semi = 0.0f64;
    let mut interp_lp = 0.0f64;
    let mut sup0 = 0.0f64;
    let mut sup1 = 0.0f64;
    let mut sup2 = 0.0f64;
    let mut equiv_hi = 0.0f64;
    let mut equiv_lo = f64::INFINITY;
    let nodes = grid.nodes();

    for k in 0..samples {
        let f0 = TestFieldGen::new(0, seed.wrapping_add(3 * k as u64)).field(grid);
        let f1 = TestFieldGen::new(1, seed.wrapping_add(3 * k as u64 + 1)).field(grid);
        let f2 = TestFieldGen::new(2, seed.wrapping_add(3 * k as u64 + 2)).field(grid);

        // logarithmic Hardy (k=0, boundary term at r=1):
        // ||f/(r <log r>)||^2 <= C (||d_r f||^2 + |f(1)|^2)
        {
            let mags = f0.abs();
            let lhs = weighted_l2(&f0, &mags, |r| 1.0 / (r * bracket(r.ln()))).powi(2);
            let d = f0.derivative(1)?;
            let i1 = nodes.iter().position(|&r| r >= 1.0).unwrap();
            let rhs = d.l2().powi(2) + f0.values()[i1].norm_sqr();
            if rhs > 1e-14 {
                log_hardy = log_hardy.max(lhs / rhs);
            }
        }

        // weighted Hardy with phi = r (increasing):
        // int |f/r|^2 |r phi'| r dr <= C (int |d_r f|^2 phi r dr + phi(R)|f(R)|^2)
        {
            let mags = f0.abs();
            let lhs = weighted_l2(&f0, &mags, |r| (1.0f64 / r) * r.sqrt()).powi(2);
            let d = f0.derivative(1)?;
            let dm = d.abs();
            let rhs_int = weighted_l2(&f0, &dm, |r| r.sqrt()).powi(2);
            let rn = nodes[nodes.len() - 1];
            let rhs = rhs_int + rn * f0.values()[nodes.len() - 1].norm_sqr();
            if rhs > 1e-14 {
                weighted_hardy = weighted_hardy.max(lhs / rhs);
            }
        }

        // interpolation: || |v1|_{-1} || <= C ||v1||^{1/2} ||v1||_{H21}^{1/2}
        {
            let s = f1.pointwise_seminorm(-1)?;
            let sq: Vec<f64> = s.iter().map(|&v| v * v).collect();
            let lhs = l2_of(&f1, &sq);
            let rhs = f1.l2().sqrt() * adapted_norm(&f1, AdaptedNorm::H21)?.sqrt();
            if rhs > 1e-12 {
                interp_semi = interp_semi.max(lhs / rhs);
            }
        }

        // interpolation: ||v||_{L^8} <= C ||v||_{L^2}^{1/4} ||d_r v||^{3/4}
        {
            let p8: Vec<f64> = f0.values().iter().map(|v| v.norm().powi(8)).collect();
            let lhs = (TWO_PI * grid.integrate_rdr(&p8)).powf(0.125);
            let d = f0.derivative(1)?;
            let rhs = f0.l2().powf(0.25) * d.l2().powf(0.75);
            if rhs > 1e-12 {
                interp_lp = interp_lp.max(lhs / rhs);
            }
        }

        // weighted sup bounds near infinity
        {
            let out_sup = nodes
                .iter()
                .zip(f0.values())
                .filter(|(&r, _)| r >= 1.0)
                .map(|(_, v)| v.norm())
                .fold(0.0f64, f64::max);
            let rhs = adapted_norm(&f0, AdaptedNorm::H10)?;
            if rhs > 1e-12 {
                sup0 = sup0.max(out_sup / rhs);
            }
            let s1 = f1.pointwise_seminorm(-1)?;
            let out1 = nodes
                .iter()
                .zip(s1.iter())
                .filter(|(&r, _)| r >= 1.0)
                .map(|(&r, &v)| v / bracket(log_plus(r)))
                .fold(0.0f64, f64::max);
            let rhs1 = adapted_norm(&f1, AdaptedNorm::H21)?;
            if rhs1 > 1e-12 {
                sup1 = sup1.max(out1 / rhs1);
            }
            let out2 = nodes
                .iter()
                .zip(f2.values())
                .filter(|(&r, _)| r >= 1.0)
                .map(|(&r, v)| v.norm() / bracket(log_plus(r)))
                .fold(0.0f64, f64::max);
            let rhs2 = adapted_norm(&f2, AdaptedNorm::H12)?;
            if rhs2 > 1e-12 {
                sup2 = sup2.max(out2 / rhs2);
            }
        }

        // two-sided comparison of the adapted H21 norm with Sobolev + local mass
        {
            let lhs = adapted_norm(&f1, AdaptedNorm::H21)?;
            let rhs = sobolev_h21(&f1)? + local_mass(&f1);
            if rhs > 1e-12 && lhs > 1e-12 {
                equiv_hi = equiv_hi.max(lhs / rhs);
                equiv_lo = equiv_lo.min(lhs / rhs);
            }
        }
    }

    Ok(InequalityReport {
        log_hardy,
        weighted_hardy,
        interpolation_seminorm: interp_semi,
        interpolation_lp: interp_lp,
        weighted_sup_m0: sup0,
        weighted_sup_m1: sup1,
        weighted_sup_m2: sup2,
        h21_equivalence_hi: equiv_hi,
        h21_equivalence_lo: equiv_lo,
    })
}

/// The dyadic family v = y sum_{n=1..N} chi_{2^n}: adapted H21 norm grows like
/// N, the Sobolev seminorm like sqrt(N).
pub fn dyadic_counterexample(
    grid: &Arc<crate::grid::RadialGrid>,
    n_dyadic: usize,
) -> Result<(f64, f64)> {
    let f = EquivariantField::from_real_fn(grid.clone(), 1, move |r| {
        let mut s = 0.0;
        for n in 1..=n_dyadic {
            s += chi_scaled(r, (2.0f64).powi(n as i32));
        }
        r * s
    });
    let adapted = adapted_norm(&f, AdaptedNorm::H21)?;
    let sobolev = sobolev_h21(&f)?;
    Ok((adapted, sobolev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::RadialGrid;

    fn grid() -> Arc<RadialGrid> {
        RadialGrid::build(100.0, 1024, 1024, 10.0).unwrap()
    }

    #[test]
    fn zero_field_has_zero_norms() {
        let g = grid();
        for m in 0..=2 {
            let z = EquivariantField::zeros(g.clone(), m);
            let r = norm_report(&z).unwrap();
            assert_eq!(r.l2, 0.0);
            assert_eq!(r.x_norm, 0.0);
            for v in [r.h1_0, r.h1_2, r.h2_1, r.h3_0].into_iter().flatten() {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn norms_are_homogeneous_and_phase_invariant() {
        let g = grid();
        let f = TestFieldGen::new(1, 10).field(&g);
        let n1 = adapted_norm(&f, AdaptedNorm::H21).unwrap();
        let scaled = f.scaled(num_complex::Complex64::new(3.0, 0.0));
        let n3 = adapted_norm(&scaled, AdaptedNorm::H21).unwrap();
        assert!((n3 / n1 - 3.0).abs() < 1e-10);
        let rotated = f.scaled(num_complex::Complex64::from_polar(1.0, 1.234));
        let nr = adapted_norm(&rotated, AdaptedNorm::H21).unwrap();
        assert!((nr / n1 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn index_mismatch_rejected() {
        let g = grid();
        let f = TestFieldGen::new(0, 2).field(&g);
        assert!(matches!(
            adapted_norm(&f, AdaptedNorm::H21),
            Err(CssError::IndexMismatch { .. })
        ));
    }

    #[test]
    fn inequality_suite_finite_and_stable() {
        let coarse = RadialGrid::build(100.0, 512, 512, 10.0).unwrap();
        let fine = RadialGrid::build(100.0, 1024, 1024, 10.0).unwrap();
        let a = inequality_suite(&coarse, 99, 6).unwrap();
        let b = inequality_suite(&fine, 99, 6).unwrap();
        for (x, y, name) in [
            (a.log_hardy, b.log_hardy, "log-hardy"),
            (a.weighted_hardy, b.weighted_hardy, "weighted-hardy"),
            (a.interpolation_seminorm, b.interpolation_seminorm, "interp"),
            (a.interpolation_lp, b.interpolation_lp, "interp-lp"),
            (a.weighted_sup_m0, b.weighted_sup_m0, "sup0"),
            (a.weighted_sup_m1, b.weighted_sup_m1, "sup1"),
            (a.weighted_sup_m2, b.weighted_sup_m2, "sup2"),
        ] {
            assert!(x.is_finite() && x > 0.0, "{name} ratio not positive-finite");
            assert!(
                ((x - y) / y).abs() < 0.05,
                "{name} not refinement-stable: {x} vs {y}"
            );
        }
        assert!(b.h21_equivalence_hi <= 10.0, "equivalence factor too big");
        assert!(b.h21_equivalence_lo >= 0.1, "equivalence factor too small");
    }

    #[test]
    fn dyadic_family_separates_norms() {
        // needs a grid reaching 2^{N+1}
        let g = RadialGrid::build(2.0f64.powi(35), 256, 4096, 10.0).unwrap();
        let (a8, s8) = dyadic_counterexample(&g, 8).unwrap();
        let (a16, s16) = dyadic_counterexample(&g, 16).unwrap();
        let (a32, s32) = dyadic_counterexample(&g, 32).unwrap();
        let r8 = a8 / s8;
        let r16 = a16 / s16;
        let r32 = a32 / s32;
        let sqrt2 = 2.0f64.sqrt();
        assert!(
            ((r16 / r8) / sqrt2 - 1.0).abs() < 0.2,
            "ratio growth 8->16: {}",
            r16 / r8
        );
        assert!(
            ((r32 / r16) / sqrt2 - 1.0).abs() < 0.2,
            "ratio growth 16->32: {}",
            r32 / r16
        );
    }
}

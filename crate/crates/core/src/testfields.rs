//! Seeded generator of smooth random test profiles: sums of Gaussian bumps
//! with randomized centers, widths, amplitudes, and phases, multiplied by the
//! r^m vanishing factor the equivariance index requires.

use crate::field::EquivariantField;
use crate::grid::RadialGrid;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Deterministic smooth-bump field generator.
#[derive(Clone)]
pub struct TestFieldGen {
    pub m: usize,
    pub seed: u64,
    pub bumps: usize,
    pub support: Option<f64>,
}

impl TestFieldGen {
    pub fn new(m: usize, seed: u64) -> Self {
        Self {
            m,
            seed,
            bumps: 3,
            support: None,
        }
    }

    /// Force compact support in [0, r_supp] through the smooth cutoff.
    pub fn with_support(mut self, r_supp: f64) -> Self {
        self.support = Some(r_supp);
        self
    }

    pub fn with_bumps(mut self, k: usize) -> Self {
        self.bumps = k;
        self
    }

    pub fn field(&self, grid: &Arc<RadialGrid>) -> EquivariantField {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ ((self.m as u64) << 32));
        let mut params = Vec::with_capacity(self.bumps);
        for _ in 0..self.bumps {
            let center = rng.gen_range(1.0..12.0);
            let width = rng.gen_range(0.6..2.5);
            let amp = rng.gen_range(0.2..1.0);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            params.push((center, width, amp, phase));
        }
        let m = self.m as i32;
        let supp = self.support;
        EquivariantField::from_fn(grid.clone(), self.m, move |r| {
            let mut v = Complex64::new(0.0, 0.0);
            for &(c, w, a, p) in &params {
                // even in r so that r^m * envelope has the exact parity an
                // m-equivariant profile carries
                let envelope = (-((r * r - c * c) / (2.0 * c * w)).powi(2)).exp();
                v += a * envelope * Complex64::from_polar(1.0, p);
            }
            let shape = r.powi(m) / (1.0 + r * r).powi((m + 1) / 2);
            v *= shape;
            if let Some(rs) = supp {
                v *= crate::cutoff::chi_scaled(r, rs / 2.0);
            }
            v
        })
    }
}

//! The smooth cutoff chi used throughout: chi == 1 on [0,1], == 0 on [2,inf),
//! with a C-infinity exponential transition, plus scaled variants chi_B.

/// chi(x): 1 on [0,1], 0 on [2,inf), smooth in between.
pub fn chi(x: f64) -> f64 {
    if x <= 1.0 {
        1.0
    } else if x >= 2.0 {
        0.0
    } else {
        let a = bump(2.0 - x);
        let b = bump(x - 1.0);
        a / (a + b)
    }
}

fn bump(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// chi_B(r) = chi(r/B).
pub fn chi_scaled(r: f64, b_radius: f64) -> f64 {
    chi(r / b_radius)
}

/// Nodal values of chi_B on a set of radii.
pub fn chi_values(nodes: &[f64], b_radius: f64) -> Vec<f64> {
    nodes.iter().map(|&r| chi_scaled(r, b_radius)).collect()
}

/// Sharp indicator of [0, cut].
pub fn indicator_values(nodes: &[f64], cut: f64) -> Vec<f64> {
    nodes
        .iter()
        .map(|&r| if r <= cut { 1.0 } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_and_support() {
        assert_eq!(chi(0.3), 1.0);
        assert_eq!(chi(1.0), 1.0);
        assert_eq!(chi(2.0), 0.0);
        assert_eq!(chi(5.0), 0.0);
        let mid = chi(1.5);
        assert!(mid > 0.0 && mid < 1.0);
    }

    #[test]
    fn band_difference_support() {
        // chi_B1 - chi_B0 is supported in [B0, 2 B1]
        let (b0, b1) = (10.0, 46.0);
        let mut r = 0.1;
        while r < 200.0 {
            let d = chi_scaled(r, b1) - chi_scaled(r, b0);
            if r < b0 || r > 2.0 * b1 {
                assert_eq!(d, 0.0, "band leak at r={r}");
            }
            r += 0.37;
        }
    }

    #[test]
    fn monotone_transition() {
        let mut prev = 1.0;
        let mut x = 1.0;
        while x <= 2.0 {
            let v = chi(x);
            assert!(v <= prev + 1e-14);
            prev = v;
            x += 0.01;
        }
    }
}

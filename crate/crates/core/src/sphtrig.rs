//! Closed-form spherical trigonometry for hinge contours.
//!
//! A hinge is a pair of geodesic sides of lengths `a`, `b` meeting at an
//! angle `gamma`. Solving the hinge closes it into a spherical triangle; the
//! other operations here are the closed-form relations between the corner
//! angle of the symmetric configuration, the median length and the bottom
//! side, plus genus bookkeeping for reflection closures.

use crate::error::{Error, Result};

/// Spherical excess below this threshold counts as a degenerate triangle.
pub const DEGENERATE_EXCESS: f64 = 1e-12;

/// Tolerance on genus integrality, absorbing float noise of measured angles.
pub const GENUS_INT_TOL: f64 = 1e-9;

/// Two geodesic sides in (0, pi/2] meeting at an angle in (0, pi).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HingeSpec {
    pub a_tilde: f64,
    pub b_tilde: f64,
    pub gamma: f64,
}

impl HingeSpec {
    pub fn new(a_tilde: f64, b_tilde: f64, gamma: f64) -> Result<Self> {
        let half_pi = std::f64::consts::FRAC_PI_2;
        if !(a_tilde > 0.0 && a_tilde <= half_pi + 1e-12) {
            return Err(Error::InputDomain(format!(
                "hinge side a must lie in (0, pi/2], got {a_tilde}"
            )));
        }
        if !(b_tilde > 0.0 && b_tilde <= half_pi + 1e-12) {
            return Err(Error::InputDomain(format!(
                "hinge side b must lie in (0, pi/2], got {b_tilde}"
            )));
        }
        if !(gamma > 0.0 && gamma < std::f64::consts::PI) {
            return Err(Error::InputDomain(format!(
                "hinge angle must lie in (0, pi), got {gamma}"
            )));
        }
        Ok(Self {
            a_tilde,
            b_tilde,
            gamma,
        })
    }
}

/// The solved triangle closing a hinge.
///
/// Angle naming: `alpha_tilde` is the corner angle at the far end of the
/// a-side (between the a-side and the closing side `c`), `beta_tilde` the
/// corner angle at the far end of the b-side. Equivalently `alpha_tilde` is
/// opposite the b-side and `beta_tilde` opposite the a-side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleData {
    pub c: f64,
    pub alpha_tilde: f64,
    pub beta_tilde: f64,
    /// Spherical excess.
    pub area: f64,
}

/// Solve the hinge by the spherical cosine rules; the sine rule is used as a
/// consistency residual.
pub fn solve_hinge(spec: &HingeSpec) -> Result<TriangleData> {
    let (a, b, g) = (spec.a_tilde, spec.b_tilde, spec.gamma);
    let cos_c = a.cos() * b.cos() + a.sin() * b.sin() * g.cos();
    let c = crate::geom::acos_clamped(cos_c);
    if c < 1e-9 || c > std::f64::consts::PI - 1e-9 {
        return Err(Error::DegenerateTriangle(format!(
            "closing side collapses (c = {c})"
        )));
    }

    let alpha = crate::geom::acos_clamped((b.cos() - a.cos() * cos_c) / (a.sin() * c.sin()));
    let beta = crate::geom::acos_clamped((a.cos() - b.cos() * cos_c) / (b.sin() * c.sin()));
    let area = alpha + beta + g - std::f64::consts::PI;
    if area < DEGENERATE_EXCESS {
        return Err(Error::DegenerateTriangle(format!(
            "spherical excess {area:.3e} below threshold"
        )));
    }

    // Sine-rule consistency between the three vertex/side pairs.
    let k = g.sin() / c.sin();
    let r1 = (alpha.sin() - k * b.sin()).abs();
    let r2 = (beta.sin() - k * a.sin()).abs();
    if r1.max(r2) > 1e-10 {
        return Err(Error::DegenerateTriangle(format!(
            "sine-rule residual {:.3e} too large",
            r1.max(r2)
        )));
    }

    Ok(TriangleData {
        c,
        alpha_tilde: alpha,
        beta_tilde: beta,
        area,
    })
}

/// Corner angle of the symmetric prism base from the median length:
/// `alpha = arccos(sin(gamma/2) * cos(delta))`.
pub fn alpha_from_delta(gamma: f64, ell_delta: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < std::f64::consts::PI) {
        return Err(Error::InputDomain(format!("gamma out of (0, pi): {gamma}")));
    }
    if !(0.0..=std::f64::consts::PI).contains(&ell_delta) {
        return Err(Error::InputDomain(format!(
            "median length out of [0, pi]: {ell_delta}"
        )));
    }
    Ok(crate::geom::acos_clamped((gamma / 2.0).sin() * ell_delta.cos()))
}

/// Inverse reading of the same relation; errors when the target angle is out
/// of reach for the given corner angle.
pub fn delta_from_alpha(gamma: f64, alpha: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < std::f64::consts::PI) {
        return Err(Error::InputDomain(format!("gamma out of (0, pi): {gamma}")));
    }
    let ratio = alpha.cos() / (gamma / 2.0).sin();
    if ratio.abs() > 1.0 + 1e-12 {
        return Err(Error::NoSolution(format!(
            "target angle {alpha} unreachable for gamma {gamma} (ratio {ratio})"
        )));
    }
    let delta = crate::geom::acos_clamped(ratio);
    Ok(delta)
}

/// Closing-side length of the symmetric hinge (both sides `a_tilde`), in the
/// half-angle closed form. Coincides with `solve_hinge(a, a, gamma).c`.
pub fn edge23_length(a_tilde: f64, gamma: f64) -> Result<f64> {
    if !(a_tilde > 0.0 && a_tilde <= std::f64::consts::FRAC_PI_2 + 1e-12) {
        return Err(Error::InputDomain(format!(
            "side out of (0, pi/2]: {a_tilde}"
        )));
    }
    if !(gamma > 0.0 && gamma < std::f64::consts::PI) {
        return Err(Error::InputDomain(format!("gamma out of (0, pi): {gamma}")));
    }
    let half = gamma / 2.0;
    let cot_half = half.cos() / half.sin();
    let denom = (cot_half * cot_half + a_tilde.cos().powi(2)).sqrt();
    Ok(2.0 * (a_tilde.sin() / denom).atan())
}

/// Genus of the closed surface assembled from `m` copies of a piece whose
/// corner angle is `gamma`: `g = 1 + m (pi - gamma) / (4 pi)`.
pub fn genus_from_copies(m: u32, gamma: f64) -> Result<i64> {
    if m == 0 {
        return Err(Error::InputDomain("copy count must be positive".into()));
    }
    let raw = (m as f64) * (std::f64::consts::PI - gamma) / (4.0 * std::f64::consts::PI);
    let rounded = raw.round();
    if (raw - rounded).abs() > GENUS_INT_TOL {
        return Err(Error::InconsistentConfiguration(format!(
            "m (pi - gamma) / 4 pi = {raw} is not an integer; the copies cannot close"
        )));
    }
    Ok(1 + rounded as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};

    #[test]
    fn octant_triangle() {
        let t = solve_hinge(&HingeSpec::new(FRAC_PI_2, FRAC_PI_2, FRAC_PI_2).unwrap()).unwrap();
        assert_relative_eq!(t.c, FRAC_PI_2, epsilon = 1e-12);
        assert_relative_eq!(t.alpha_tilde, FRAC_PI_2, epsilon = 1e-12);
        assert_relative_eq!(t.beta_tilde, FRAC_PI_2, epsilon = 1e-12);
        assert_relative_eq!(t.area, FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn right_hinge_with_quarter_side_forces_right_beta() {
        // With a = gamma = pi/2 the angle at the far end of the b-side is
        // right, for any b.
        for b in [0.3, 0.7, 1.1, FRAC_PI_2] {
            let t = solve_hinge(&HingeSpec::new(FRAC_PI_2, b, FRAC_PI_2).unwrap()).unwrap();
            assert_relative_eq!(t.beta_tilde, FRAC_PI_2, epsilon = 1e-12);
        }
    }

    #[test]
    fn isosceles_symmetry() {
        for (a, g) in [(0.4, 0.9), (0.8, 2.0), (1.2, FRAC_PI_2)] {
            let t = solve_hinge(&HingeSpec::new(a, a, g).unwrap()).unwrap();
            assert_relative_eq!(t.alpha_tilde, t.beta_tilde, epsilon = 1e-12);
        }
    }

    #[test]
    fn hinge_round_trip_through_dual_data() {
        // Re-solving from (c, side a) recovers the hinge data.
        let spec = HingeSpec::new(0.9, 0.6, 1.2).unwrap();
        let t = solve_hinge(&spec).unwrap();
        // Treat (a, c) as a hinge at the alpha corner; its closing side is b.
        let dual = HingeSpec::new(spec.a_tilde, t.c, t.alpha_tilde).unwrap();
        let td = solve_hinge(&dual).unwrap();
        assert_relative_eq!(td.c, spec.b_tilde, epsilon = 1e-10);
    }

    #[test]
    fn degenerate_hinge_rejected() {
        let spec = HingeSpec::new(1e-9, 1e-9, 1.0).unwrap();
        assert!(solve_hinge(&spec).is_err());
    }

    #[test]
    fn alpha_from_delta_examples() {
        assert_relative_eq!(
            alpha_from_delta(FRAC_PI_2, FRAC_PI_4).unwrap(),
            FRAC_PI_3,
            epsilon = 1e-12
        );
        for k in 2..6 {
            let g = PI / k as f64;
            assert_relative_eq!(
                alpha_from_delta(g, FRAC_PI_2).unwrap(),
                FRAC_PI_2,
                epsilon = 1e-12
            );
        }
        let g = 1.1;
        assert_relative_eq!(
            alpha_from_delta(g, 0.0).unwrap(),
            FRAC_PI_2 - g / 2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn delta_from_alpha_examples() {
        assert_relative_eq!(
            delta_from_alpha(FRAC_PI_2, FRAC_PI_3).unwrap(),
            FRAC_PI_4,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            delta_from_alpha(FRAC_PI_2, FRAC_PI_2).unwrap(),
            FRAC_PI_2,
            epsilon = 1e-12
        );
        assert!(matches!(
            delta_from_alpha(FRAC_PI_3, PI / 6.0),
            Err(crate::error::Error::NoSolution(_))
        ));
    }

    #[test]
    fn edge23_matches_hinge_solution() {
        assert_relative_eq!(
            edge23_length(FRAC_PI_2, FRAC_PI_2).unwrap(),
            FRAC_PI_2,
            epsilon = 1e-12
        );
        assert!(edge23_length(1e-6, FRAC_PI_2).unwrap() < 1e-5);
        for (a, g) in [(FRAC_PI_4, FRAC_PI_2), (0.6, 1.0), (1.3, 2.2)] {
            let c = solve_hinge(&HingeSpec::new(a, a, g).unwrap()).unwrap().c;
            assert_relative_eq!(edge23_length(a, g).unwrap(), c, epsilon = 1e-12);
        }
    }

    #[test]
    fn genus_examples() {
        assert_eq!(genus_from_copies(48, FRAC_PI_2).unwrap(), 7);
        for k in 2..6u32 {
            assert_eq!(
                genus_from_copies(8 * k, PI / k as f64).unwrap(),
                2 * k as i64 - 1
            );
            assert_eq!(genus_from_copies(8 * k, FRAC_PI_2).unwrap(), k as i64 + 1);
        }
        assert!(genus_from_copies(7, FRAC_PI_2).is_err());
    }

    #[test]
    fn genus_euler_consistency() {
        // chi = 2 - 2g must equal m (gamma - pi) / (2 pi).
        for (m, g) in [(48u32, FRAC_PI_2), (16, PI / 2.0), (24, PI / 3.0)] {
            if let Ok(genus) = genus_from_copies(m, g) {
                let chi = 2 - 2 * genus;
                let total_curvature = m as f64 * (g - PI);
                assert_relative_eq!(chi as f64, total_curvature / (2.0 * PI), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn median_decomposition_matches_closed_form() {
        // Split the isosceles triangle along its median: the right triangle
        // with hypotenuse a and apex angle gamma/2 reproduces the
        // angle/median relation.
        for (a, g) in [(0.5, 0.8), (0.9, FRAC_PI_2), (1.3, 2.4), (FRAC_PI_2, 1.0)] {
            let t = solve_hinge(&HingeSpec::new(a, a, g).unwrap()).unwrap();
            // Median from the hypotenuse rule for the right triangle.
            let delta = crate::geom::acos_clamped(a.cos() / (t.c / 2.0).cos());
            let alpha = alpha_from_delta(g, delta).unwrap();
            assert_relative_eq!(alpha, t.alpha_tilde, epsilon = 1e-10);
        }
    }

    proptest! {
        #[test]
        fn alpha_delta_round_trip(
            g in 0.2f64..3.0,
            d in 0.0f64..FRAC_PI_2,
        ) {
            let alpha = alpha_from_delta(g, d).unwrap();
            let d_back = delta_from_alpha(g, alpha).unwrap();
            prop_assert!((d - d_back).abs() < 1e-12);
        }

        #[test]
        fn alpha_strictly_monotone_in_delta(
            g in 0.2f64..3.0,
            d in 0.01f64..1.5,
        ) {
            // d(alpha)/d(delta) = sin(g/2) sin(delta) / sqrt(1 - sin^2(g/2) cos^2(delta)) > 0,
            // so the angle grows with the median and cos(alpha) shrinks.
            let step = 1e-3;
            let a0 = alpha_from_delta(g, d).unwrap();
            let a1 = alpha_from_delta(g, (d + step).min(FRAC_PI_2)).unwrap();
            prop_assert!(a1 > a0);
            prop_assert!(a1.cos() < a0.cos());
        }
    }
}

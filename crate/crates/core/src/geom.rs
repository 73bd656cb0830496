//! Geometry of the round 2-sphere, its product with a line, and the circle
//! quotients of that product.
//!
//! Points carry a unit base vector plus a height. Tangent vectors split into a
//! horizontal part (orthogonal to the base point) and a vertical component
//! along the distinguished parallel field `xi`. Everything here is exact
//! closed-form geometry; the discretization lives elsewhere.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Default tolerance for exact-geometry checks.
pub const GEOM_TOL: f64 = 1e-10;

/// Strict construction tolerance for unit/tangency invariants.
pub const UNIT_TOL: f64 = 1e-12;

pub type Vec3 = Vector3<f64>;

/// arccos with the argument clamped to [-1, 1].
#[inline]
pub fn acos_clamped(x: f64) -> f64 {
    x.clamp(-1.0, 1.0).acos()
}

/// A point of the unit 2-sphere, renormalized on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint {
    coords: Vec3,
}

impl SpherePoint {
    pub fn new(coords: Vec3) -> Self {
        let n = coords.norm();
        assert!(n > 1e-14, "sphere point from near-zero vector");
        Self { coords: coords / n }
    }

    #[inline]
    pub fn coords(&self) -> Vec3 {
        self.coords
    }

    /// Great-circle distance to another point. The atan2 form of the clamped
    /// arccos, accurate near both coincident and antipodal pairs.
    pub fn distance(&self, other: &SpherePoint) -> f64 {
        let dot = self.coords.dot(&other.coords);
        let cross = self.coords.cross(&other.coords).norm();
        cross.atan2(dot)
    }

    /// An arbitrary unit tangent vector at this point.
    pub fn any_tangent(&self) -> Vec3 {
        let p = self.coords;
        let trial = if p.x.abs() < 0.9 {
            Vec3::x()
        } else {
            Vec3::y()
        };
        (trial - p * trial.dot(&p)).normalize()
    }

    /// Unit tangent at `self` pointing toward `other` along the short arc.
    ///
    /// Errors at coincident or antipodal pairs, where the direction is not
    /// unique.
    pub fn direction_to(&self, other: &SpherePoint) -> Result<Vec3> {
        let p = self.coords;
        let q = other.coords;
        let t = q - p * p.dot(&q);
        let n = t.norm();
        if n < 1e-12 {
            return Err(Error::InputDomain(
                "direction undefined for coincident or antipodal points".into(),
            ));
        }
        Ok(t / n)
    }
}

/// A point of the product of the sphere with a line (or with a circle, when a
/// quotient circumference is tracked by the surrounding mesh).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProdPoint {
    pub base: SpherePoint,
    pub height: f64,
}

impl ProdPoint {
    pub fn new(base: SpherePoint, height: f64) -> Self {
        Self { base, height }
    }

    pub fn from_coords(base: Vec3, height: f64) -> Self {
        Self {
            base: SpherePoint::new(base),
            height,
        }
    }

    /// Coordinates of the chordal embedding: unit base vector plus height.
    #[inline]
    pub fn chordal(&self) -> [f64; 4] {
        let b = self.base.coords();
        [b.x, b.y, b.z, self.height]
    }
}

/// Product-metric distance between two points.
pub fn prod_distance(x: &ProdPoint, y: &ProdPoint) -> f64 {
    let ds = x.base.distance(&y.base);
    let dt = x.height - y.height;
    (ds * ds + dt * dt).sqrt()
}

/// A tangent vector of the product at some base point: a horizontal 3-vector
/// orthogonal to the base, plus a vertical component along `xi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProdVector {
    pub horizontal: Vec3,
    pub vertical: f64,
}

impl ProdVector {
    pub fn new(horizontal: Vec3, vertical: f64) -> Self {
        Self {
            horizontal,
            vertical,
        }
    }

    /// The distinguished unit vertical field.
    pub fn xi() -> Self {
        Self {
            horizontal: Vec3::zeros(),
            vertical: 1.0,
        }
    }

    /// Checks tangency at `base` within the strict tolerance.
    pub fn is_tangent_at(&self, base: &SpherePoint) -> bool {
        self.horizontal.dot(&base.coords()).abs() <= UNIT_TOL * (1.0 + self.horizontal.norm())
    }

    pub fn dot(&self, other: &ProdVector) -> f64 {
        self.horizontal.dot(&other.horizontal) + self.vertical * other.vertical
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: f64) -> ProdVector {
        ProdVector::new(self.horizontal * s, self.vertical * s)
    }

    pub fn add(&self, other: &ProdVector) -> ProdVector {
        ProdVector::new(
            self.horizontal + other.horizontal,
            self.vertical + other.vertical,
        )
    }

    pub fn sub(&self, other: &ProdVector) -> ProdVector {
        ProdVector::new(
            self.horizontal - other.horizontal,
            self.vertical - other.vertical,
        )
    }
}

/// Exponential map of the sphere: follow the great circle from `p` in the
/// unit tangent direction `u` for arc length `s`.
pub fn sphere_geodesic(p: &SpherePoint, u: &Vec3, s: f64) -> Result<SpherePoint> {
    if (u.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InputDomain(format!(
            "geodesic direction must be unit (norm {})",
            u.norm()
        )));
    }
    if u.dot(&p.coords()).abs() > 1e-9 {
        return Err(Error::InputDomain(
            "geodesic direction must be tangent to the sphere".into(),
        ));
    }
    Ok(SpherePoint::new(p.coords() * s.cos() + u * s.sin()))
}

/// Parallel transport of a tangent vector along the great circle from `p` in
/// direction `u` for arc length `s`.
pub fn sphere_parallel_transport(p: &SpherePoint, u: &Vec3, s: f64, v: &Vec3) -> Vec3 {
    // Decompose v into the along-geodesic part and the invariant normal part.
    let along = v.dot(u);
    let normal = v - u * along;
    let u_s = u * s.cos() - p.coords() * s.sin();
    normal + u_s * along
}

/// Rotation of the sphere by `angle` about the axis `axis` (unit).
pub fn rotation_about_axis(axis: &Vec3, angle: f64) -> Matrix3<f64> {
    let k = axis.normalize();
    let kx = Matrix3::new(0.0, -k.z, k.y, k.z, 0.0, -k.x, -k.y, k.x, 0.0);
    Matrix3::identity() + kx * angle.sin() + kx * kx * (1.0 - angle.cos())
}

/// Reflection of the sphere across the plane through the origin with unit
/// normal `n` (fixes the great circle orthogonal to `n`).
pub fn reflection_across_plane(n: &Vec3) -> Matrix3<f64> {
    let k = n.normalize();
    Matrix3::identity() - 2.0 * k * k.transpose()
}

/// Which geometric move an isometry encodes. The sphere part is a 3x3
/// orthogonal matrix and the height part an affine map `t -> sign*t + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsometryKind {
    SphereRotation,
    VerticalTranslation,
    SliceReflection,
    VerticalPlaneReflection,
    VerticalGeodesicRotation,
    HorizontalGeodesicRotation,
}

/// An ambient isometry of the product.
#[derive(Debug, Clone, Copy)]
pub struct Isometry {
    pub kind: IsometryKind,
    pub sphere: Matrix3<f64>,
    /// +1.0 or -1.0.
    pub height_sign: f64,
    pub height_offset: f64,
}

impl Isometry {
    pub fn sphere_rotation(axis: &Vec3, angle: f64) -> Self {
        Self {
            kind: IsometryKind::SphereRotation,
            sphere: rotation_about_axis(axis, angle),
            height_sign: 1.0,
            height_offset: 0.0,
        }
    }

    pub fn vertical_translation(c: f64) -> Self {
        Self {
            kind: IsometryKind::VerticalTranslation,
            sphere: Matrix3::identity(),
            height_sign: 1.0,
            height_offset: c,
        }
    }

    /// Mirror across the horizontal slice at height `t0`.
    pub fn slice_reflection(t0: f64) -> Self {
        Self {
            kind: IsometryKind::SliceReflection,
            sphere: Matrix3::identity(),
            height_sign: -1.0,
            height_offset: 2.0 * t0,
        }
    }

    /// Mirror across the vertical plane over the great circle with unit axis
    /// `axis` (the plane's normal).
    pub fn vertical_plane_reflection(axis: &Vec3) -> Self {
        Self {
            kind: IsometryKind::VerticalPlaneReflection,
            sphere: reflection_across_plane(axis),
            height_sign: 1.0,
            height_offset: 0.0,
        }
    }

    /// Rotation by pi about the vertical geodesic over `p0`.
    pub fn vertical_geodesic_rotation(p0: &SpherePoint) -> Self {
        Self {
            kind: IsometryKind::VerticalGeodesicRotation,
            sphere: rotation_about_axis(&p0.coords(), std::f64::consts::PI),
            height_sign: 1.0,
            height_offset: 0.0,
        }
    }

    /// Rotation by pi about the horizontal geodesic at height `t0` over the
    /// great circle with unit axis `axis`.
    pub fn horizontal_geodesic_rotation(axis: &Vec3, t0: f64) -> Self {
        Self {
            kind: IsometryKind::HorizontalGeodesicRotation,
            sphere: reflection_across_plane(axis),
            height_sign: -1.0,
            height_offset: 2.0 * t0,
        }
    }

    pub fn apply(&self, x: &ProdPoint) -> ProdPoint {
        ProdPoint::from_coords(
            self.sphere * x.base.coords(),
            self.height_sign * x.height + self.height_offset,
        )
    }

    /// Differential applied to a tangent vector at `x`.
    pub fn apply_vector(&self, v: &ProdVector) -> ProdVector {
        ProdVector::new(self.sphere * v.horizontal, self.height_sign * v.vertical)
    }

    pub fn compose(&self, other: &Isometry) -> Isometry {
        // self after other.
        Isometry {
            kind: self.kind,
            sphere: self.sphere * other.sphere,
            height_sign: self.height_sign * other.height_sign,
            height_offset: self.height_sign * other.height_offset + self.height_offset,
        }
    }

    pub fn inverse(&self) -> Isometry {
        Isometry {
            kind: self.kind,
            sphere: self.sphere.transpose(),
            height_sign: self.height_sign,
            height_offset: -self.height_offset / self.height_sign,
        }
    }

    /// True when the map reverses the ambient orientation.
    pub fn orientation_reversing(&self) -> bool {
        self.sphere.determinant() * self.height_sign < 0.0
    }
}

/// Apply an isometry to a point, validating the matrix is orthogonal.
pub fn apply_isometry(g: &Isometry, x: &ProdPoint) -> Result<ProdPoint> {
    let qtq = g.sphere.transpose() * g.sphere;
    if (qtq - Matrix3::identity()).norm() > 1e-9 {
        return Err(Error::InputDomain(
            "isometry sphere part is not orthogonal".into(),
        ));
    }
    if g.height_sign != 1.0 && g.height_sign != -1.0 {
        return Err(Error::InputDomain("height sign must be +1 or -1".into()));
    }
    Ok(g.apply(x))
}

/// Ricci curvature of the product in direction `v`: the squared horizontal
/// norm. Nonnegative, zero exactly for vertical directions.
pub fn ricci(v: &ProdVector) -> f64 {
    v.horizontal.norm_squared()
}

/// Curvature tensor of the product evaluated on three tangent vectors at a
/// common base point.
pub fn curvature_tensor(x: &ProdVector, y: &ProdVector, z: &ProdVector) -> ProdVector {
    let xz = x.dot(z);
    let yz = y.dot(z);
    let x_xi = x.vertical;
    let y_xi = y.vertical;
    let z_xi = z.vertical;

    let mut out = x.scale(yz - y_xi * z_xi);
    out = out.add(&y.scale(-xz + x_xi * z_xi));
    out = out.add(&ProdVector::xi().scale(xz * y_xi - yz * x_xi));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, PI};

    fn pt(x: f64, y: f64, z: f64) -> SpherePoint {
        SpherePoint::new(Vec3::new(x, y, z))
    }

    #[test]
    fn geodesic_quarter_circle() {
        let p = pt(1.0, 0.0, 0.0);
        let q = sphere_geodesic(&p, &Vec3::y(), FRAC_PI_2).unwrap();
        assert_relative_eq!(q.coords(), Vec3::y(), epsilon = 1e-12);
    }

    #[test]
    fn geodesic_zero_length_is_identity() {
        let p = pt(1.0, 0.0, 0.0);
        let q = sphere_geodesic(&p, &Vec3::y(), 0.0).unwrap();
        assert_relative_eq!(q.coords(), p.coords(), epsilon = 1e-12);
    }

    #[test]
    fn geodesic_closed_form() {
        let p = pt(1.0, 0.0, 0.0);
        let q = sphere_geodesic(&p, &Vec3::z(), FRAC_PI_3).unwrap();
        assert_relative_eq!(
            q.coords(),
            Vec3::new(FRAC_PI_3.cos(), 0.0, FRAC_PI_3.sin()),
            epsilon = 1e-12
        );
    }

    #[test]
    fn geodesic_rejects_non_tangent() {
        let p = pt(1.0, 0.0, 0.0);
        assert!(sphere_geodesic(&p, &Vec3::x(), 1.0).is_err());
        assert!(sphere_geodesic(&p, &(Vec3::y() * 2.0), 1.0).is_err());
    }

    #[test]
    fn prod_distance_examples() {
        let a = ProdPoint::from_coords(Vec3::x(), 0.0);
        let b = ProdPoint::from_coords(Vec3::x(), 2.0);
        assert_relative_eq!(prod_distance(&a, &b), 2.0, epsilon = 1e-12);

        let c = ProdPoint::from_coords(Vec3::y(), 0.0);
        assert_relative_eq!(prod_distance(&a, &c), FRAC_PI_2, epsilon = 1e-12);

        let d = ProdPoint::from_coords(Vec3::y(), FRAC_PI_2);
        assert_relative_eq!(prod_distance(&a, &d), PI / 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn isometry_examples() {
        let x = ProdPoint::from_coords(Vec3::x(), 1.0);
        let g = Isometry::slice_reflection(0.0);
        let y = apply_isometry(&g, &x).unwrap();
        assert_relative_eq!(y.height, -1.0);
        assert_relative_eq!(y.base.coords(), Vec3::x(), epsilon = 1e-12);

        let g = Isometry::vertical_translation(2.0 * PI);
        let x = ProdPoint::from_coords(Vec3::y(), 0.0);
        let y = g.apply(&x);
        assert_relative_eq!(y.height, 2.0 * PI);

        // Half-turn about the equator at height zero sends the north pole at
        // height 1 to the south pole at height -1.
        let g = Isometry::horizontal_geodesic_rotation(&Vec3::z(), 0.0);
        let x = ProdPoint::from_coords(Vec3::z(), 1.0);
        let y = g.apply(&x);
        assert_relative_eq!(y.base.coords(), -Vec3::z(), epsilon = 1e-12);
        assert_relative_eq!(y.height, -1.0);
    }

    #[test]
    fn reflections_are_involutions() {
        let samples = [
            ProdPoint::from_coords(Vec3::new(0.3, -0.2, 0.9), 0.7),
            ProdPoint::from_coords(Vec3::new(-1.0, 0.4, 0.1), -1.3),
        ];
        let refls = [
            Isometry::slice_reflection(0.4),
            Isometry::vertical_plane_reflection(&Vec3::new(0.1, 1.0, -0.3).normalize()),
            Isometry::horizontal_geodesic_rotation(&Vec3::new(1.0, 1.0, 0.0).normalize(), -0.2),
            Isometry::vertical_geodesic_rotation(&pt(0.0, 0.6, 0.8)),
        ];
        for g in &refls {
            let gg = g.compose(g);
            for x in &samples {
                let y = gg.apply(x);
                assert!(prod_distance(x, &y) < 1e-12);
            }
        }
    }

    #[test]
    fn inverse_composes_to_identity() {
        let g = Isometry::sphere_rotation(&Vec3::new(0.2, 0.5, 1.0).normalize(), 1.234)
            .compose(&Isometry::vertical_translation(0.8))
            .compose(&Isometry::slice_reflection(0.3));
        let id = g.compose(&g.inverse());
        let x = ProdPoint::from_coords(Vec3::new(0.4, -0.8, 0.45), 2.2);
        assert!(prod_distance(&x, &id.apply(&x)) < 1e-12);
    }

    #[test]
    fn ricci_examples() {
        assert_relative_eq!(ricci(&ProdVector::xi()), 0.0);
        let h = ProdVector::new(Vec3::y(), 0.0);
        assert_relative_eq!(ricci(&h), 1.0);
        let mixed = ProdVector::new(Vec3::y() / 2f64.sqrt(), 1.0 / 2f64.sqrt());
        assert_relative_eq!(ricci(&mixed), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn curvature_tensor_horizontal_section() {
        // Horizontal orthonormal x, y at the north pole.
        let x = ProdVector::new(Vec3::x(), 0.0);
        let y = ProdVector::new(Vec3::y(), 0.0);
        let r = curvature_tensor(&x, &y, &x);
        assert_relative_eq!(r.horizontal, -Vec3::y(), epsilon = 1e-15);
        assert_relative_eq!(r.vertical, 0.0);
    }

    #[test]
    fn curvature_tensor_mixed_section_flat() {
        let x = ProdVector::new(Vec3::x(), 0.0);
        let xi = ProdVector::xi();
        let r = curvature_tensor(&x, &xi, &xi);
        assert_relative_eq!(r.norm(), 0.0, epsilon = 1e-15);
        let sect = curvature_tensor(&x, &xi, &xi).dot(&x);
        assert_relative_eq!(sect, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn curvature_tensor_antisymmetry() {
        let a = ProdVector::new(Vec3::new(0.3, 0.1, 0.0), 0.5);
        let b = ProdVector::new(Vec3::new(-0.2, 0.7, 0.0), -0.1);
        let c = ProdVector::new(Vec3::new(0.9, -0.4, 0.0), 0.2);
        let r1 = curvature_tensor(&a, &b, &c);
        let r2 = curvature_tensor(&b, &a, &c);
        assert!(r1.add(&r2).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn geodesic_additivity(
            seed in 0u64..1000,
            s in 0.01f64..2.0,
            t in 0.01f64..2.0,
        ) {
            // Derive a pseudo-random point/direction from the seed.
            let a = (seed as f64) * 0.7231 + 0.11;
            let b = (seed as f64) * 1.3117 + 0.37;
            let p = pt(a.cos() * b.sin(), a.sin() * b.sin(), b.cos());
            let u0 = p.any_tangent();
            let u1 = p.coords().cross(&u0);
            let u = (u0 * a.sin() + u1 * a.cos()).normalize();

            let q = sphere_geodesic(&p, &u, s).unwrap();
            let u_q = sphere_parallel_transport(&p, &u, s, &u);
            let r_two_steps = sphere_geodesic(&q, &u_q, t).unwrap();
            let r_direct = sphere_geodesic(&p, &u, s + t).unwrap();
            prop_assert!(r_two_steps.distance(&r_direct) < 1e-10);
        }

        #[test]
        fn isometries_preserve_distance(
            seed in 0u64..1000,
            h1 in -2.0f64..2.0,
            h2 in -2.0f64..2.0,
        ) {
            let a = (seed as f64) * 0.912 + 0.2;
            let b = (seed as f64) * 0.417 + 0.5;
            let x = ProdPoint::from_coords(Vec3::new(a.cos(), a.sin() * b.cos(), a.sin() * b.sin()), h1);
            let y = ProdPoint::from_coords(Vec3::new(b.cos(), b.sin() * a.cos(), b.sin() * a.sin()), h2);
            let g = Isometry::sphere_rotation(&Vec3::new(1.0, a, b).normalize(), a + b)
                .compose(&Isometry::horizontal_geodesic_rotation(&Vec3::new(a, 1.0, -b).normalize(), 0.3))
                .compose(&Isometry::vertical_translation(b - a));
            let d0 = prod_distance(&x, &y);
            let d1 = prod_distance(&g.apply(&x), &g.apply(&y));
            prop_assert!((d0 - d1).abs() < 1e-10);
        }
    }
}

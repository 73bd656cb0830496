//! Boundary contour and reference surfaces.
//!
//! The contour is a five-sided geodesic polygon: a hinge of two horizontal
//! geodesics at the top height, two vertical drops, and a closing horizontal
//! geodesic at height zero. The reference surfaces (slices, vertical
//! cylinders over great circles, vertical helicoids) serve as fixtures for
//! the residual and topology suites.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geom::{sphere_geodesic, ProdPoint, SpherePoint, Vec3};
use crate::mesh::SurfaceMesh;
use crate::sphtrig::{solve_hinge, HingeSpec, TriangleData};

/// Hinge data plus the lift height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourSpec {
    pub hinge: HingeSpec,
    pub h_tilde: f64,
}

impl ContourSpec {
    pub fn new(a_tilde: f64, b_tilde: f64, gamma: f64, h_tilde: f64) -> Result<Self> {
        let hinge = HingeSpec::new(a_tilde, b_tilde, gamma)?;
        if !(h_tilde > 0.0 && h_tilde <= std::f64::consts::FRAC_PI_2 + 1e-12) {
            return Err(Error::InputDomain(format!(
                "lift height must lie in (0, pi/2], got {h_tilde}"
            )));
        }
        Ok(Self { hinge, h_tilde })
    }

    pub fn is_symmetric(&self) -> bool {
        (self.hinge.a_tilde - self.hinge.b_tilde).abs() < 1e-12
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolygonEdgeKind {
    HorizontalGeodesic,
    VerticalGeodesic,
}

#[derive(Debug, Clone, Copy)]
pub struct PolygonEdge {
    pub kind: PolygonEdgeKind,
    /// Indices into `GeodesicPolygon::vertices` (0-based; vertex k of the
    /// contour is index k-1).
    pub endpoints: (usize, usize),
    pub length: f64,
}

/// The closed five-sided polygon, with vertex 5's projection pinned at the
/// north pole and the a-side leaving along the reference meridian.
#[derive(Debug, Clone)]
pub struct GeodesicPolygon {
    pub vertices: [ProdPoint; 5],
    pub edges: [PolygonEdge; 5],
    pub triangle: TriangleData,
    pub spec: ContourSpec,
}

impl GeodesicPolygon {
    /// Largest gap between consecutive edge endpoints.
    pub fn closure_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for e in 0..5 {
            let (_, end) = self.edges[e].endpoints;
            let (start_next, _) = self.edges[(e + 1) % 5].endpoints;
            worst = worst.max(crate::geom::prod_distance(
                &self.vertices[end],
                &self.vertices[start_next],
            ));
        }
        worst
    }

    /// Base points of the domain triangle corners: (apex, a-side foot,
    /// b-side foot).
    pub fn domain_corners(&self) -> (SpherePoint, SpherePoint, SpherePoint) {
        (
            self.vertices[4].base,
            self.vertices[0].base,
            self.vertices[3].base,
        )
    }
}

/// Place the contour for a spec. Vertices 4, 5, 1 sit at the lift height,
/// vertices 2, 3 at height zero.
pub fn build_contour(spec: &ContourSpec) -> Result<GeodesicPolygon> {
    let triangle = solve_hinge(&spec.hinge)?;
    let h = spec.h_tilde;
    let apex = SpherePoint::new(Vec3::z());
    let dir_a = Vec3::x();
    let g = spec.hinge.gamma;
    let dir_b = Vec3::new(g.cos(), g.sin(), 0.0);

    let base_1 = sphere_geodesic(&apex, &dir_a, spec.hinge.a_tilde)?;
    let base_4 = sphere_geodesic(&apex, &dir_b, spec.hinge.b_tilde)?;

    let vertices = [
        ProdPoint::new(base_1, h),
        ProdPoint::new(base_1, 0.0),
        ProdPoint::new(base_4, 0.0),
        ProdPoint::new(base_4, h),
        ProdPoint::new(apex, h),
    ];

    let edges = [
        PolygonEdge {
            kind: PolygonEdgeKind::VerticalGeodesic,
            endpoints: (0, 1),
            length: h,
        },
        PolygonEdge {
            kind: PolygonEdgeKind::HorizontalGeodesic,
            endpoints: (1, 2),
            length: triangle.c,
        },
        PolygonEdge {
            kind: PolygonEdgeKind::VerticalGeodesic,
            endpoints: (2, 3),
            length: h,
        },
        PolygonEdge {
            kind: PolygonEdgeKind::HorizontalGeodesic,
            endpoints: (3, 4),
            length: spec.hinge.b_tilde,
        },
        PolygonEdge {
            kind: PolygonEdgeKind::HorizontalGeodesic,
            endpoints: (4, 0),
            length: spec.hinge.a_tilde,
        },
    ];

    let poly = GeodesicPolygon {
        vertices,
        edges,
        triangle,
        spec: *spec,
    };
    debug_assert!(poly.closure_residual() < 1e-10);
    Ok(poly)
}

/// Subdivisions per icosahedron edge for a target resolution (subdivisions
/// per unit arc length).
fn ico_segments(resolution: u32) -> usize {
    let edge_arc = 1.10714871779409; // arc between adjacent icosahedron vertices
    ((resolution as f64 * edge_arc).ceil() as usize).max(2)
}

/// Triangulated round sphere at a fixed height, built by subdividing an
/// icosahedron and projecting.
pub fn slice_mesh(t0: f64, resolution: u32) -> Result<SurfaceMesh> {
    if resolution < 2 {
        return Err(Error::InputDomain("slice resolution must be >= 2".into()));
    }
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ];
    let corners: Vec<Vec3> = raw
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
        .collect();
    let ico_faces: [[usize; 3]; 20] = [
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    let n = ico_segments(resolution);
    let mut vertices: Vec<ProdPoint> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut index: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let quant = 1e-9;
    let mut vid = |p: Vec3, vertices: &mut Vec<ProdPoint>| -> usize {
        let key = (
            (p.x / quant).round() as i64,
            (p.y / quant).round() as i64,
            (p.z / quant).round() as i64,
        );
        *index.entry(key).or_insert_with(|| {
            vertices.push(ProdPoint::from_coords(p, t0));
            vertices.len() - 1
        })
    };

    for face in &ico_faces {
        let [a, b, c] = *face;
        // Ensure outward winding before subdividing.
        let (a, b, c) = if corners[a].dot(&corners[b].cross(&corners[c])) > 0.0 {
            (a, b, c)
        } else {
            (a, c, b)
        };
        let lattice = |i: usize, j: usize| -> Vec3 {
            let u = i as f64 / n as f64;
            let v = j as f64 / n as f64;
            (corners[a] * (1.0 - u) + corners[b] * (u - v) + corners[c] * v).normalize()
        };
        // Row i holds points (i, 0..=i).
        let mut rows: Vec<Vec<usize>> = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let mut row = Vec::with_capacity(i + 1);
            for j in 0..=i {
                row.push(vid(lattice(i, j), &mut vertices));
            }
            rows.push(row);
        }
        for i in 0..n {
            for j in 0..=i {
                faces.push([rows[i][j], rows[i + 1][j], rows[i + 1][j + 1]]);
                if j < i {
                    faces.push([rows[i][j], rows[i + 1][j + 1], rows[i][j + 1]]);
                }
            }
        }
    }

    let mesh = SurfaceMesh::new(vertices, faces, None);
    mesh.check_face_quality()?;
    Ok(mesh)
}

/// Orthonormal basis of the plane orthogonal to `axis`.
fn circle_basis(axis: &Vec3) -> (Vec3, Vec3) {
    let a = axis.normalize();
    let e1 = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = (e1 - a * e1.dot(&a)).normalize();
    let e2 = a.cross(&e1);
    (e1, e2)
}

/// Grid counts for a torus-like quotient mesh; both are kept even so that
/// half-period companions land on grid lines.
fn grid_counts(arc_u: f64, arc_t: f64, resolution: u32) -> (usize, usize) {
    let mut nu = ((resolution as f64 * arc_u).ceil() as usize).max(6);
    let mut nt = ((resolution as f64 * arc_t).ceil() as usize).max(4);
    if nu % 2 == 1 {
        nu += 1;
    }
    if nt % 2 == 1 {
        nt += 1;
    }
    (nu, nt)
}

/// Vertical cylinder over the great circle orthogonal to `axis`, closed in
/// the circumference-`2 pi r` quotient: a flat minimal torus.
pub fn cylinder_mesh(axis: &Vec3, r: f64, resolution: u32) -> Result<SurfaceMesh> {
    if resolution < 3 {
        return Err(Error::InputDomain(
            "cylinder resolution must be >= 3".into(),
        ));
    }
    if r <= 0.0 {
        return Err(Error::InputDomain("quotient radius must be positive".into()));
    }
    let circ = 2.0 * std::f64::consts::PI * r;
    let (e1, e2) = circle_basis(axis);
    let (nu, nt) = grid_counts(2.0 * std::f64::consts::PI, circ, resolution);

    let mut vertices = Vec::with_capacity(nu * nt);
    for j in 0..nt {
        let t = circ * j as f64 / nt as f64;
        for i in 0..nu {
            let u = 2.0 * std::f64::consts::PI * i as f64 / nu as f64;
            vertices.push(ProdPoint::from_coords(e1 * u.cos() + e2 * u.sin(), t));
        }
    }
    let vid = |i: usize, j: usize| (j % nt) * nu + (i % nu);
    let mut faces = Vec::with_capacity(2 * nu * nt);
    for j in 0..nt {
        for i in 0..nu {
            faces.push([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)]);
            faces.push([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)]);
        }
    }
    let mesh = SurfaceMesh::new(vertices, faces, Some(circ));
    mesh.check_face_quality()?;
    Ok(mesh)
}

/// Pitch closure mode of a vertical helicoid in the quotient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HelicoidClosure {
    /// Pitch equals the circumference: orientable (torus).
    Torus,
    /// Pitch equals twice the circumference: one-sided (Klein bottle).
    KleinBottle,
}

/// Vertical helicoid of the given pitch, closed in the circumference-`2 pi r`
/// quotient. The pitch must be `2 pi r` (torus) or `4 pi r` (Klein bottle).
pub fn helicoid_mesh(pitch: f64, r: f64, resolution: u32) -> Result<SurfaceMesh> {
    if r <= 0.0 || pitch <= 0.0 {
        return Err(Error::InputDomain(
            "pitch and quotient radius must be positive".into(),
        ));
    }
    let circ = 2.0 * std::f64::consts::PI * r;
    let closure = if (pitch - circ).abs() < 1e-9 {
        HelicoidClosure::Torus
    } else if (pitch - 2.0 * circ).abs() < 1e-9 {
        HelicoidClosure::KleinBottle
    } else {
        return Err(Error::InputDomain(format!(
            "pitch {pitch} does not close in a circumference {circ} quotient"
        )));
    };

    let (nu, nt) = grid_counts(2.0 * std::f64::consts::PI, circ, resolution);
    let omega = 2.0 * std::f64::consts::PI / pitch;

    let mut vertices = Vec::with_capacity(nu * nt);
    for j in 0..nt {
        let t = circ * j as f64 / nt as f64;
        let phi = omega * t;
        for i in 0..nu {
            let u = 2.0 * std::f64::consts::PI * i as f64 / nu as f64;
            let p = Vec3::new(u.sin() * phi.cos(), u.sin() * phi.sin(), u.cos());
            vertices.push(ProdPoint::from_coords(p, t));
        }
    }
    // Row nt wraps to row 0, with a flip of the ruling parameter in the
    // Klein-bottle closure.
    let vid = |i: usize, j: usize| -> usize {
        let i = i % nu;
        if j < nt {
            j * nu + i
        } else {
            match closure {
                HelicoidClosure::Torus => i,
                HelicoidClosure::KleinBottle => (nu - i) % nu,
            }
        }
    };
    let mut faces = Vec::with_capacity(2 * nu * nt);
    for j in 0..nt {
        for i in 0..nu {
            faces.push([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)]);
            faces.push([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)]);
        }
    }
    let mesh = SurfaceMesh::new(vertices, faces, Some(circ));
    mesh.check_face_quality()?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{euler_characteristic, orientability};
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn contour_octant_pentagon() {
        let spec = ContourSpec::new(FRAC_PI_2, FRAC_PI_2, FRAC_PI_2, 0.5).unwrap();
        let poly = build_contour(&spec).unwrap();
        assert_relative_eq!(poly.edges[1].length, FRAC_PI_2, epsilon = 1e-12);
        assert_relative_eq!(poly.edges[0].length, 0.5);
        assert_relative_eq!(poly.edges[2].length, 0.5);
        assert!(poly.closure_residual() < 1e-10);

        // Edge lengths against the placed vertices.
        let d23 = poly.vertices[1].base.distance(&poly.vertices[2].base);
        assert_relative_eq!(d23, poly.triangle.c, epsilon = 1e-10);
    }

    #[test]
    fn contour_small_height_limit() {
        let spec = ContourSpec::new(0.8, 0.6, 1.1, 1e-9).unwrap();
        let poly = build_contour(&spec).unwrap();
        assert!(poly.closure_residual() < 1e-10);
        assert!(poly.vertices[4].height < 1e-8);
    }

    #[test]
    fn contour_turning_angles() {
        let spec = ContourSpec::new(0.9, 0.7, 1.3, 0.4).unwrap();
        let poly = build_contour(&spec).unwrap();
        // Angle at vertex 5 between the directions toward vertices 4 and 1.
        let apex = poly.vertices[4].base;
        let to4 = apex.direction_to(&poly.vertices[3].base).unwrap();
        let to1 = apex.direction_to(&poly.vertices[0].base).unwrap();
        assert_relative_eq!(
            crate::geom::acos_clamped(to4.dot(&to1)),
            1.3,
            epsilon = 1e-9
        );
        // At vertices 1..4 a horizontal and a vertical edge meet: the
        // product-metric angle is automatically right. Check horizontality
        // and verticality instead.
        assert_eq!(poly.edges[0].kind, PolygonEdgeKind::VerticalGeodesic);
        assert_eq!(poly.edges[1].kind, PolygonEdgeKind::HorizontalGeodesic);
        assert_relative_eq!(poly.vertices[0].height, 0.4);
        assert_relative_eq!(poly.vertices[1].height, 0.0);
    }

    #[test]
    fn slice_is_a_sphere() {
        let mesh = slice_mesh(0.0, 16).unwrap();
        assert_eq!(euler_characteristic(&mesh).unwrap(), 2);
        assert!(orientability(&mesh).unwrap());
        assert!(mesh.is_watertight());
        for &nu in &mesh.nu {
            assert_relative_eq!(nu, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn cylinder_is_a_torus() {
        let mesh = cylinder_mesh(&Vec3::z(), 1.0, 8).unwrap();
        assert_eq!(euler_characteristic(&mesh).unwrap(), 0);
        assert!(orientability(&mesh).unwrap());
        assert!(mesh.is_watertight());
        for &nu in &mesh.nu {
            assert!(nu.abs() < 1e-9);
        }
    }

    #[test]
    fn helicoid_torus_and_klein_bottle() {
        let r = 0.75;
        let torus = helicoid_mesh(2.0 * PI * r, r, 8).unwrap();
        assert_eq!(euler_characteristic(&torus).unwrap(), 0);
        assert!(orientability(&torus).unwrap());
        assert!(torus.is_watertight());
        for &nu in &torus.nu {
            assert!(nu.abs() < 1.0 - 1e-6);
        }

        let klein = helicoid_mesh(4.0 * PI * r, r, 8).unwrap();
        assert_eq!(euler_characteristic(&klein).unwrap(), 0);
        assert!(!orientability(&klein).unwrap());
        assert!(klein.is_watertight());
        // One-sided genus from chi: 2 - chi = 2, an even value.
        assert_eq!(2 - euler_characteristic(&klein).unwrap(), 2);

        assert!(helicoid_mesh(3.0 * PI * r, r, 8).is_err());
    }

    #[test]
    fn helicoid_contains_both_pole_fibers() {
        let r = 1.0;
        let mesh = helicoid_mesh(2.0 * PI * r, r, 8).unwrap();
        let mut north = 0;
        let mut south = 0;
        for v in &mesh.vertices {
            let p = v.base.coords();
            if (p - Vec3::z()).norm() < 1e-9 {
                north += 1;
            }
            if (p + Vec3::z()).norm() < 1e-9 {
                south += 1;
            }
        }
        assert!(north >= 4 && south >= 4);
        assert_eq!(north, south);
    }
}

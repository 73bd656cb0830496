//! Triangulated surfaces in the product, optionally living in a circle
//! quotient.
//!
//! Geometry is evaluated through the chordal embedding (unit base vector plus
//! height). Faces of quotient meshes may wrap in height; all geometric
//! queries unwrap heights face-locally, so faces must span less than half the
//! quotient circumference.

use std::collections::HashMap;

use nalgebra::Vector4;

use crate::error::{Error, Result};
use crate::geom::{ProdPoint, ProdVector, Vec3};

pub type Vec4 = Vector4<f64>;

/// Faces thinner than this count as degenerate.
pub const FACE_AREA_FLOOR: f64 = 1e-14;

/// Polygon edge labels of the five-sided boundary contour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeId {
    E12,
    E23,
    E34,
    E45,
    E51,
}

impl EdgeId {
    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeId::E12 => "12",
            EdgeId::E23 => "23",
            EdgeId::E34 => "34",
            EdgeId::E45 => "45",
            EdgeId::E51 => "51",
        }
    }

    pub fn parse(s: &str) -> Result<EdgeId> {
        match s {
            "12" => Ok(EdgeId::E12),
            "23" => Ok(EdgeId::E23),
            "34" => Ok(EdgeId::E34),
            "45" => Ok(EdgeId::E45),
            "51" => Ok(EdgeId::E51),
            _ => Err(Error::Format(format!("unknown edge id {s}"))),
        }
    }

    pub fn is_vertical(&self) -> bool {
        matches!(self, EdgeId::E12 | EdgeId::E34)
    }
}

/// Prism faces and edges a constrained vertex may be confined to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrismFace {
    Wall23,
    Wall45,
    Wall51,
    SliceBottom,
    SliceTop,
    /// Corner k of the contour sits on a prism edge (wall/slice or wall/wall
    /// intersection).
    Corner(u8),
}

/// Per-vertex boundary label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryTag {
    /// On a contour polygon edge, at arc length `s` from the edge's first
    /// corner (polygon order 1-2-3-4-5).
    PolygonEdge { edge: EdgeId, s: f64 },
    /// Confined to a face or edge of the prism.
    Prism(PrismFace),
}

/// A triangulated surface with per-vertex normals and angle function.
#[derive(Debug, Clone)]
pub struct SurfaceMesh {
    pub vertices: Vec<ProdPoint>,
    pub faces: Vec<[usize; 3]>,
    pub boundary_tags: Vec<Option<BoundaryTag>>,
    pub normals: Vec<ProdVector>,
    /// Angle function: vertical component of the unit vertex normal.
    pub nu: Vec<f64>,
    /// `2 pi r` when the mesh lives in the circle quotient of circumference
    /// `2 pi r`; heights are then stored in `[0, 2 pi r)` and faces may wrap.
    pub quotient_circumference: Option<f64>,
}

/// The generalized cross product in four dimensions: the unique vector
/// orthogonal to `a`, `b`, `c` whose sign makes `det[a b c n] > 0`.
pub fn cross4(a: &Vec4, b: &Vec4, c: &Vec4) -> Vec4 {
    // Cofactor expansion of det[a; b; c; e_l].
    let m = |i: usize, j: usize, k: usize| -> f64 {
        a[i] * (b[j] * c[k] - b[k] * c[j]) - a[j] * (b[i] * c[k] - b[k] * c[i])
            + a[k] * (b[i] * c[j] - b[j] * c[i])
    };
    // n_l = (-1)^(l+1) * minor(l) arranged so det[a b c n] = |n|^2 >= 0.
    Vec4::new(-m(1, 2, 3), m(0, 2, 3), -m(0, 1, 3), m(0, 1, 2))
}

impl SurfaceMesh {
    pub fn new(
        vertices: Vec<ProdPoint>,
        faces: Vec<[usize; 3]>,
        quotient_circumference: Option<f64>,
    ) -> Self {
        let n = vertices.len();
        let mut mesh = Self {
            vertices,
            faces,
            boundary_tags: vec![None; n],
            normals: vec![ProdVector::xi(); n],
            nu: vec![0.0; n],
            quotient_circumference,
        };
        mesh.compute_normals();
        mesh
    }

    /// Wrap a height into `[0, circumference)` when in a quotient.
    pub fn wrap_height(&self, t: f64) -> f64 {
        match self.quotient_circumference {
            Some(c) => t.rem_euclid(c),
            None => t,
        }
    }

    /// Chordal positions of a face's corners with heights unwrapped to the
    /// window of the first corner.
    pub fn face_points(&self, f: usize) -> [Vec4; 3] {
        let [i, j, k] = self.faces[f];
        let mut pts = [
            chordal4(&self.vertices[i]),
            chordal4(&self.vertices[j]),
            chordal4(&self.vertices[k]),
        ];
        if let Some(c) = self.quotient_circumference {
            let t0 = pts[0][3];
            for p in pts.iter_mut().skip(1) {
                let mut dt = p[3] - t0;
                while dt > c / 2.0 {
                    p[3] -= c;
                    dt -= c;
                }
                while dt < -c / 2.0 {
                    p[3] += c;
                    dt += c;
                }
            }
        }
        pts
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [p0, p1, p2] = self.face_points(f);
        triangle_area4(&p0, &p1, &p2)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Unit face normal in the tangent space of the product at the face
    /// centroid, oriented by the face winding.
    pub fn face_normal(&self, f: usize) -> Vec4 {
        let [p0, p1, p2] = self.face_points(f);
        let e1 = p1 - p0;
        let e2 = p2 - p0;
        let centroid = Vec3::new(p0[0] + p1[0] + p2[0], p0[1] + p1[1] + p2[1], p0[2] + p1[2] + p2[2])
            .normalize();
        let m_hat = Vec4::new(centroid.x, centroid.y, centroid.z, 0.0);
        let n = cross4(&e1, &e2, &m_hat);
        let norm = n.norm();
        if norm < 1e-16 {
            Vec4::zeros()
        } else {
            n / norm
        }
    }

    /// Recompute area-weighted vertex normals and the angle function.
    pub fn compute_normals(&mut self) {
        let nv = self.vertices.len();
        let mut acc = vec![Vec4::zeros(); nv];
        for f in 0..self.faces.len() {
            let n = self.face_normal(f);
            let a = self.face_area(f);
            for &v in &self.faces[f] {
                acc[v] += n * a;
            }
        }
        self.normals = Vec::with_capacity(nv);
        self.nu = Vec::with_capacity(nv);
        for (v, sum) in acc.iter().enumerate() {
            let p = self.vertices[v].base.coords();
            // Project onto the tangent space at the vertex.
            let radial = Vec4::new(p.x, p.y, p.z, 0.0);
            let mut n = sum - radial * sum.dot(&radial);
            let norm = n.norm();
            if norm > 1e-14 {
                n /= norm;
            } else {
                n = Vec4::new(0.0, 0.0, 0.0, 1.0);
            }
            self.normals
                .push(ProdVector::new(Vec3::new(n[0], n[1], n[2]), n[3]));
            self.nu.push(n[3].clamp(-1.0, 1.0));
        }
        if self.boundary_tags.len() != nv {
            self.boundary_tags = vec![None; nv];
        }
    }

    /// Map from undirected edge to the list of incident faces.
    pub fn edge_map(&self) -> HashMap<(usize, usize), Vec<usize>> {
        let mut map: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (f, face) in self.faces.iter().enumerate() {
            for e in 0..3 {
                let a = face[e];
                let b = face[(e + 1) % 3];
                let key = (a.min(b), a.max(b));
                map.entry(key).or_default().push(f);
            }
        }
        map
    }

    /// Every interior edge shared by exactly two faces, boundary edges by one.
    pub fn check_edge_manifold(&self) -> Result<()> {
        for (edge, faces) in self.edge_map() {
            if faces.len() > 2 {
                return Err(Error::MeshQuality(format!(
                    "edge {edge:?} shared by {} faces",
                    faces.len()
                )));
            }
        }
        Ok(())
    }

    /// Undirected edges on the boundary (incident to exactly one face).
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        self.edge_map()
            .into_iter()
            .filter(|(_, faces)| faces.len() == 1)
            .map(|(e, _)| e)
            .collect()
    }

    pub fn is_watertight(&self) -> bool {
        self.edge_map().values().all(|faces| faces.len() == 2)
    }

    /// Interior angle of face `f` at its `corner`-th vertex.
    pub fn face_angle(&self, f: usize, corner: usize) -> f64 {
        let pts = self.face_points(f);
        let p = pts[corner];
        let q = pts[(corner + 1) % 3];
        let r = pts[(corner + 2) % 3];
        let u = q - p;
        let w = r - p;
        let cosang = u.dot(&w) / (u.norm() * w.norm()).max(1e-300);
        cosang.clamp(-1.0, 1.0).acos()
    }

    /// Reject meshes containing degenerate faces.
    pub fn check_face_quality(&self) -> Result<()> {
        for f in 0..self.faces.len() {
            let [a, b, c] = self.faces[f];
            if a == b || b == c || a == c {
                return Err(Error::MeshQuality(format!(
                    "face {f} repeats a vertex index"
                )));
            }
            if self.face_area(f) <= FACE_AREA_FLOOR {
                return Err(Error::MeshQuality(format!(
                    "face {f} has area {:.3e}",
                    self.face_area(f)
                )));
            }
        }
        Ok(())
    }

    /// Maximum edge length (chordal), a proxy for the mesh size.
    pub fn max_edge_length(&self) -> f64 {
        let mut h: f64 = 0.0;
        for f in 0..self.faces.len() {
            let pts = self.face_points(f);
            for e in 0..3 {
                h = h.max((pts[(e + 1) % 3] - pts[e]).norm());
            }
        }
        h
    }

    /// Sum of the angle defects over interior vertices: the discrete total
    /// Gauss curvature concentrated away from the boundary.
    pub fn interior_angle_defect_sum(&self) -> f64 {
        let mut angle_sum = vec![0.0f64; self.vertices.len()];
        for f in 0..self.faces.len() {
            for corner in 0..3 {
                angle_sum[self.faces[f][corner]] += self.face_angle(f, corner);
            }
        }
        let mut on_boundary = vec![false; self.vertices.len()];
        for (a, b) in self.boundary_edges() {
            on_boundary[a] = true;
            on_boundary[b] = true;
        }
        let mut total = 0.0;
        for v in 0..self.vertices.len() {
            if !on_boundary[v] && angle_sum[v] > 0.0 {
                total += 2.0 * std::f64::consts::PI - angle_sum[v];
            }
        }
        total
    }

    /// One-third of the total incident face area, per vertex.
    pub fn vertex_areas(&self) -> Vec<f64> {
        let mut areas = vec![0.0f64; self.vertices.len()];
        for f in 0..self.faces.len() {
            let a = self.face_area(f) / 3.0;
            for &v in &self.faces[f] {
                areas[v] += a;
            }
        }
        areas
    }
}

#[inline]
pub fn chordal4(p: &ProdPoint) -> Vec4 {
    let c = p.chordal();
    Vec4::new(c[0], c[1], c[2], c[3])
}

/// Area of a triangle with the given corner positions.
pub fn triangle_area4(p0: &Vec4, p1: &Vec4, p2: &Vec4) -> f64 {
    let e1 = p1 - p0;
    let e2 = p2 - p0;
    let g11 = e1.dot(&e1);
    let g22 = e2.dot(&e2);
    let g12 = e1.dot(&e2);
    0.5 * (g11 * g22 - g12 * g12).max(0.0).sqrt()
}

/// Gradient of the triangle area with respect to the first corner.
pub fn triangle_area_grad4(p0: &Vec4, p1: &Vec4, p2: &Vec4) -> Vec4 {
    let e1 = p1 - p0;
    let e2 = p2 - p0;
    let g11 = e1.dot(&e1);
    let g22 = e2.dot(&e2);
    let g12 = e1.dot(&e2);
    let area = 0.5 * (g11 * g22 - g12 * g12).max(0.0).sqrt();
    if area < 1e-300 {
        return Vec4::zeros();
    }
    // dA/de1 = (|e2|^2 e1 - (e1.e2) e2) / 4A, and p0 enters through both
    // edges with a negative sign.
    let d1 = (e1 * g22 - e2 * g12) / (4.0 * area);
    let d2 = (e2 * g11 - e1 * g12) / (4.0 * area);
    -(d1 + d2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::SpherePoint;
    use approx::assert_relative_eq;

    #[test]
    fn cross4_is_orthogonal_and_right_handed() {
        let a = Vec4::new(1.0, 0.0, 0.0, 0.0);
        let b = Vec4::new(0.0, 1.0, 0.0, 0.0);
        let c = Vec4::new(0.0, 0.0, 1.0, 0.0);
        let n = cross4(&a, &b, &c);
        assert_relative_eq!(n, Vec4::new(0.0, 0.0, 0.0, 1.0), epsilon = 1e-14);

        let a = Vec4::new(0.3, -0.2, 0.8, 0.1);
        let b = Vec4::new(-0.5, 0.4, 0.2, 0.9);
        let c = Vec4::new(0.7, 0.6, -0.1, 0.3);
        let n = cross4(&a, &b, &c);
        assert!(n.dot(&a).abs() < 1e-12);
        assert!(n.dot(&b).abs() < 1e-12);
        assert!(n.dot(&c).abs() < 1e-12);
        let det = nalgebra::Matrix4::from_columns(&[a, b, c, n]).determinant();
        assert!(det > 0.0);
    }

    #[test]
    fn triangle_area_and_gradient_agree() {
        let p0 = Vec4::new(0.1, 0.2, 0.3, 0.4);
        let p1 = Vec4::new(1.0, 0.1, -0.2, 0.3);
        let p2 = Vec4::new(0.2, 0.9, 0.4, -0.5);
        let g = triangle_area_grad4(&p0, &p1, &p2);
        let eps = 1e-6;
        for dim in 0..4 {
            let mut plus = p0;
            plus[dim] += eps;
            let mut minus = p0;
            minus[dim] -= eps;
            let fd = (triangle_area4(&plus, &p1, &p2) - triangle_area4(&minus, &p1, &p2))
                / (2.0 * eps);
            assert_relative_eq!(g[dim], fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn quotient_faces_unwrap() {
        // Two vertices near the wrap seam of a circumference-1 quotient.
        let p = SpherePoint::new(Vec3::x());
        let q = SpherePoint::new(Vec3::new(0.9, 0.1, 0.0));
        let r = SpherePoint::new(Vec3::new(0.9, 0.0, 0.1));
        let mesh = SurfaceMesh::new(
            vec![
                ProdPoint::new(p, 0.95),
                ProdPoint::new(q, 0.02),
                ProdPoint::new(r, 0.98),
            ],
            vec![[0, 1, 2]],
            Some(1.0),
        );
        let pts = mesh.face_points(0);
        assert_relative_eq!(pts[1][3], 1.02, epsilon = 1e-12);
        assert_relative_eq!(pts[2][3], 0.98, epsilon = 1e-12);
    }
}

//! Least-area vertical graphs over the spherical triangle spanned by the
//! contour, plus the first-order boundary measurements the contour
//! reconstruction consumes.
//!
//! The domain triangulation is swept in two patches from the medial segment
//! (apex to the bottom-edge midpoint) toward the two bottom corners, so each
//! bottom corner carries a dense angular fan. The boundary height data jumps
//! at those corners; the jump is resolved by a strip of faces attached to a
//! fixed sampling of the vertical fiber segment. Row spacing is graded
//! geometrically toward the corners.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geom::{sphere_geodesic, ProdPoint, SpherePoint, Vec3};
use crate::mesh::{BoundaryTag, EdgeId, SurfaceMesh, Vec4};
use crate::optim::laplacian_smooth;
use crate::surfaces::{build_contour, ContourSpec, GeodesicPolygon};

/// One record of a horizontal-edge boundary trace.
#[derive(Debug, Clone, Copy)]
pub struct TraceSample {
    /// Arc length from the edge's first corner in polygon order.
    pub s: f64,
    /// Angle function at the sample.
    pub nu: f64,
    /// Signed vertical-speed datum of the mirror contour.
    pub w: f64,
}

/// One record of the normal rotation along a vertical edge.
#[derive(Debug, Clone, Copy)]
pub struct ThetaSample {
    /// Height along the fiber segment.
    pub s: f64,
    /// Unwrapped angle of the horizontal normal in the corner frame.
    pub theta: f64,
}

/// Direction frame at a bottom corner: `p` points along the bottom edge
/// toward the opposite corner, `q` completes the tangent frame.
#[derive(Debug, Clone, Copy)]
pub struct CornerFrame {
    pub base: SpherePoint,
    pub p: Vec3,
    pub q: Vec3,
}

/// Converged graph solution with its boundary measurements.
#[derive(Debug, Clone)]
pub struct PlateauSolution {
    pub spec: ContourSpec,
    pub contour: GeodesicPolygon,
    pub mesh: SurfaceMesh,
    /// Graph height per mesh vertex.
    pub height_fn: Vec<f64>,
    pub trace_23: Vec<TraceSample>,
    pub trace_45: Vec<TraceSample>,
    pub trace_51: Vec<TraceSample>,
    pub theta_12: Vec<ThetaSample>,
    pub theta_34: Vec<ThetaSample>,
    /// Corner frames used for the theta measurements (the bottom corner
    /// under vertices 1/2 and the one under vertices 3/4).
    pub frame_b: CornerFrame,
    pub frame_c: CornerFrame,
    /// Mirror-curve polyline (apex to bottom midpoint), symmetric specs only.
    pub mirror_chain: Option<Vec<usize>>,
    /// Vertices in the graded corner zones, excluded from residual norms.
    pub near_corner: Vec<bool>,
    /// Final normalized height-gradient residual.
    pub residual: f64,
    pub resolution: u32,
    pub tol: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum HeightBc {
    Free,
    Fixed(f64),
}

struct DomainMesh {
    bases: Vec<SpherePoint>,
    faces: Vec<[usize; 3]>,
    bc: Vec<HeightBc>,
    tags: Vec<Option<BoundaryTag>>,
    /// Vertices in the graded corner zone, excluded from residual norms.
    near_corner: Vec<bool>,
    /// First-ring rows around the two corners, ordered from the top edge
    /// (j = 0) to the bottom edge (j = m).
    ring_b: Vec<usize>,
    ring_c: Vec<usize>,
    /// Boundary chains with arc lengths, in polygon order, each entry with
    /// two inward probe vertices for one-sided slope estimates (`None` at
    /// the polygon corners, where the trace values are forced).
    bottom: Vec<(f64, usize, Option<(usize, usize)>)>,
    chain_45: Vec<(f64, usize, Option<(usize, usize)>)>,
    chain_51: Vec<(f64, usize, Option<(usize, usize)>)>,
    mirror_chain: Vec<usize>,
}

/// Geodesic point at fraction `t` of the arc from `a` to `b`.
fn slerp(a: &SpherePoint, b: &SpherePoint, t: f64) -> SpherePoint {
    if t <= 0.0 {
        return *a;
    }
    if t >= 1.0 {
        return *b;
    }
    let d = a.distance(b);
    let dir = a.direction_to(b).expect("slerp endpoints distinct");
    sphere_geodesic(a, &dir, t * d).expect("slerp step")
}

/// Row parameters in (0, 1): uniform spacing with four geometrically graded
/// intervals (ratio 0.5) appended toward the corner at `u = 1`. The gap that
/// remains past the last knot is the innermost ring radius.
fn graded_knots(base_rows: usize, levels: u32) -> (Vec<f64>, usize) {
    let r0 = base_rows.max(3);
    // r0 uniform gaps, then geometrically halving gaps; the leftover
    // distance to 1 equals the final gap, the innermost ring radius.
    let delta = 1.0 / (r0 as f64 + 1.0);
    let mut knots = Vec::with_capacity(r0 + levels as usize + 1);
    for i in 0..=r0 {
        knots.push(delta * i as f64);
    }
    let mut u = delta * r0 as f64;
    for k in 1..=levels as i32 {
        u += delta * 0.5f64.powi(k);
        knots.push(u);
    }
    (knots, r0)
}

/// Build one swept patch from the medial row toward a bottom corner and its
/// fiber strip. Returns all rows (medial first, innermost ring last) and the
/// fiber samples (from the top edge down).
#[allow(clippy::too_many_arguments)]
fn sweep_patch(
    dm: &mut DomainMesh,
    medial: &[usize],
    apex: SpherePoint,
    mid: SpherePoint,
    corner: SpherePoint,
    knots: &[f64],
    h: f64,
    top_edge: EdgeId,
    top_len: f64,
    half_c: f64,
    bottom_through_mid: bool,
    graded_from: usize,
) -> (Vec<Vec<usize>>, Vec<usize>) {
    let m = medial.len() - 1;
    let mut rows: Vec<Vec<usize>> = Vec::with_capacity(knots.len());
    rows.push(medial.to_vec());

    for (i, &u) in knots.iter().enumerate().skip(1) {
        let in_graded_zone = i > graded_from;
        let mut row = Vec::with_capacity(m + 1);
        let top_pt = slerp(&apex, &corner, u);
        let bot_pt = slerp(&mid, &corner, u);
        for j in 0..=m {
            let q = slerp(&top_pt, &bot_pt, j as f64 / m as f64);
            let idx = dm.bases.len();
            dm.bases.push(q);
            dm.near_corner.push(in_graded_zone);
            if j == 0 {
                dm.bc.push(HeightBc::Fixed(h));
                let s = match top_edge {
                    // Edge 51 runs apex -> corner 1; edge 45 runs corner 4 ->
                    // apex.
                    EdgeId::E51 => u * top_len,
                    _ => (1.0 - u) * top_len,
                };
                dm.tags
                    .push(Some(BoundaryTag::PolygonEdge { edge: top_edge, s }));
            } else if j == m {
                dm.bc.push(HeightBc::Fixed(0.0));
                let s = if bottom_through_mid {
                    half_c + u * half_c
                } else {
                    (1.0 - u) * half_c
                };
                dm.tags.push(Some(BoundaryTag::PolygonEdge {
                    edge: EdgeId::E23,
                    s,
                }));
            } else {
                dm.bc.push(HeightBc::Free);
                dm.tags.push(None);
            }
            row.push(idx);
        }
        rows.push(row);
    }

    for i in 0..rows.len() - 1 {
        for j in 0..m {
            let a = rows[i][j];
            let b = rows[i][j + 1];
            let c = rows[i + 1][j];
            let d = rows[i + 1][j + 1];
            dm.faces.push([a, c, d]);
            dm.faces.push([a, d, b]);
        }
    }

    // Fiber strip: fixed samples of the vertical boundary segment over the
    // corner, paired per index with the innermost ring.
    let vertical_edge = match top_edge {
        EdgeId::E51 => EdgeId::E12,
        _ => EdgeId::E34,
    };
    let mut fiber = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let tau = h * (1.0 - j as f64 / m as f64);
        let idx = dm.bases.len();
        dm.bases.push(corner);
        dm.near_corner.push(true);
        dm.bc.push(HeightBc::Fixed(tau));
        let s = match vertical_edge {
            // Edge 12 runs from vertex 1 (top) downward; edge 34 from vertex
            // 3 (bottom) upward.
            EdgeId::E12 => h - tau,
            _ => tau,
        };
        dm.tags.push(Some(BoundaryTag::PolygonEdge {
            edge: vertical_edge,
            s,
        }));
        fiber.push(idx);
    }
    let ring = rows.last().unwrap().clone();
    for j in 0..m {
        dm.faces.push([fiber[j], fiber[j + 1], ring[j + 1]]);
        dm.faces.push([fiber[j], ring[j + 1], ring[j]]);
    }

    (rows, fiber)
}

fn build_domain(spec: &ContourSpec, resolution: u32) -> Result<(DomainMesh, GeodesicPolygon)> {
    let contour = build_contour(spec)?;
    let (apex, corner_b, corner_c) = contour.domain_corners();
    let tri = contour.triangle;
    let h = spec.h_tilde;
    let res = resolution.max(2) as f64;

    let mid = slerp(&corner_b, &corner_c, 0.5);
    let medial_len = apex.distance(&mid);

    // Columns resolve the longest swept arc and the fiber sampling density.
    let longest = medial_len
        .max(spec.hinge.a_tilde)
        .max(spec.hinge.b_tilde)
        .max(tri.c / 2.0);
    let m = ((res * longest).ceil() as usize)
        .max((8.0 * h * res).ceil() as usize)
        .clamp(8, 64);
    let base_rows = ((res * corner_b.distance(&mid)).ceil() as usize).clamp(4, 48);
    // Grade until the innermost ring radius is well inside the fiber length,
    // so the first-ring normals sample the asymptotic corner profile.
    let corner_dist = corner_b.distance(&mid);
    let delta = 1.0 / (base_rows as f64 + 1.0);
    let target = (h / 50.0).max(1e-6);
    let levels = ((delta * corner_dist / target).log2().ceil() as i64).clamp(4, 22) as u32;
    let (knots, graded_from) = graded_knots(base_rows, levels);

    let mut dm = DomainMesh {
        bases: Vec::new(),
        faces: Vec::new(),
        bc: Vec::new(),
        tags: Vec::new(),
        near_corner: Vec::new(),
        ring_b: Vec::new(),
        ring_c: Vec::new(),
        bottom: Vec::new(),
        chain_45: Vec::new(),
        chain_51: Vec::new(),
        mirror_chain: Vec::new(),
    };

    // Shared medial row, apex first. The apex carries the top boundary data.
    let mut medial = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let q = slerp(&apex, &mid, j as f64 / m as f64);
        let idx = dm.bases.len();
        dm.bases.push(q);
        dm.near_corner.push(false);
        if j == 0 {
            dm.bc.push(HeightBc::Fixed(h));
            dm.tags.push(Some(BoundaryTag::PolygonEdge {
                edge: EdgeId::E51,
                s: 0.0,
            }));
        } else if j == m {
            dm.bc.push(HeightBc::Fixed(0.0));
            dm.tags.push(Some(BoundaryTag::PolygonEdge {
                edge: EdgeId::E23,
                s: tri.c / 2.0,
            }));
        } else {
            dm.bc.push(HeightBc::Free);
            dm.tags.push(None);
        }
        medial.push(idx);
    }
    dm.mirror_chain = medial.clone();

    let (rows_b, fiber_b) = sweep_patch(
        &mut dm,
        &medial,
        apex,
        mid,
        corner_b,
        &knots,
        h,
        EdgeId::E51,
        spec.hinge.a_tilde,
        tri.c / 2.0,
        false,
        graded_from,
    );
    let (rows_c, fiber_c) = sweep_patch(
        &mut dm,
        &medial,
        apex,
        mid,
        corner_c,
        &knots,
        h,
        EdgeId::E45,
        spec.hinge.b_tilde,
        tri.c / 2.0,
        true,
        graded_from,
    );
    dm.ring_b = rows_b.last().unwrap().clone();
    dm.ring_c = rows_c.last().unwrap().clone();

    // Boundary chains (arc length, vertex, inward probes) in polygon order.
    // The fiber endpoints are the polygon corners, with forced trace values.
    let mut bottom = Vec::new();
    let mut c45 = Vec::new();
    let mut c51 = Vec::new();
    let half_c = tri.c / 2.0;
    // Apex and bottom midpoint from the shared medial row.
    c51.push((0.0, medial[0], Some((medial[1], medial[2]))));
    c45.push((spec.hinge.b_tilde, medial[0], Some((medial[1], medial[2]))));
    bottom.push((half_c, medial[m], Some((medial[m - 1], medial[m - 2]))));
    for (i, &u) in knots.iter().enumerate().skip(1) {
        let rb = &rows_b[i];
        let rc = &rows_c[i];
        c51.push((u * spec.hinge.a_tilde, rb[0], Some((rb[1], rb[2]))));
        bottom.push(((1.0 - u) * half_c, rb[m], Some((rb[m - 1], rb[m - 2]))));
        c45.push(((1.0 - u) * spec.hinge.b_tilde, rc[0], Some((rc[1], rc[2]))));
        bottom.push((half_c + u * half_c, rc[m], Some((rc[m - 1], rc[m - 2]))));
    }
    // Polygon corners: vertex 1 ends edge 51, vertex 2 starts the bottom,
    // vertex 3 ends it, vertex 4 starts edge 45.
    c51.push((spec.hinge.a_tilde, fiber_b[0], None));
    bottom.push((0.0, *fiber_b.last().unwrap(), None));
    bottom.push((tri.c, *fiber_c.last().unwrap(), None));
    c45.push((0.0, fiber_c[0], None));
    bottom.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    c45.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    c51.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    dm.bottom = bottom;
    dm.chain_45 = c45;
    dm.chain_51 = c51;

    Ok((dm, contour))
}

/// Solve the least-area graph for the contour.
pub fn solve_graph(spec: &ContourSpec, resolution: u32, tol: f64) -> Result<PlateauSolution> {
    if tol <= 0.0 {
        return Err(Error::InputDomain("tolerance must be positive".into()));
    }
    let (dm, contour) = build_domain(spec, resolution)?;
    let nv = dm.bases.len();
    let h = spec.h_tilde;

    // Initial heights: Dirichlet data extended by graph-Laplacian smoothing.
    let mut heights = vec![h / 2.0; nv];
    let mut fixed = vec![false; nv];
    for v in 0..nv {
        if let HeightBc::Fixed(t) = dm.bc[v] {
            heights[v] = t;
            fixed[v] = true;
        }
    }
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for face in &dm.faces {
        for e in 0..3 {
            let a = face[e];
            let b = face[(e + 1) % 3];
            if !neighbors[a].contains(&b) {
                neighbors[a].push(b);
            }
            if !neighbors[b].contains(&a) {
                neighbors[b].push(a);
            }
        }
    }
    laplacian_smooth(&mut heights, &neighbors, &fixed, 300);

    // Lagged-weight minimization: the gradient of total lifted area with
    // respect to a height equals the cotangent Laplacian of the height
    // function in the current lifted metric, so each outer step solves that
    // linear (SPD Dirichlet-form) system by conjugate gradients and
    // re-evaluates the weights.
    let free: Vec<usize> = (0..nv).filter(|&v| !fixed[v]).collect();
    let base3: Vec<Vec3> = dm.bases.iter().map(|b| b.coords()).collect();
    let faces = dm.faces.clone();

    let lift = |v: usize, t: &[f64]| -> Vec4 {
        let b = base3[v];
        Vec4::new(b.x, b.y, b.z, t[v])
    };
    let total_area = |t: &[f64]| -> f64 {
        faces
            .iter()
            .map(|f| crate::mesh::triangle_area4(&lift(f[0], t), &lift(f[1], t), &lift(f[2], t)))
            .sum()
    };
    // Half-cotangents of the angles opposite each face edge.
    let cotan_weights = |t: &[f64]| -> Vec<[f64; 3]> {
        faces
            .iter()
            .map(|f| {
                let p = [lift(f[0], t), lift(f[1], t), lift(f[2], t)];
                let mut w = [0.0; 3];
                for corner in 0..3 {
                    let u = p[(corner + 1) % 3] - p[corner];
                    let v = p[(corner + 2) % 3] - p[corner];
                    let cos = u.dot(&v);
                    let sin = (u.dot(&u) * v.dot(&v) - cos * cos).max(1e-300).sqrt();
                    // Edge (corner+1, corner+2) sees the angle at `corner`.
                    w[corner] = 0.5 * cos / sin;
                }
                w
            })
            .collect()
    };
    // r = L t restricted to free vertices (cotangent Laplacian residual).
    let apply_l = |weights: &Vec<[f64; 3]>, t: &[f64], out: &mut [f64]| {
        for o in out.iter_mut() {
            *o = 0.0;
        }
        for (f, w) in faces.iter().zip(weights.iter()) {
            for corner in 0..3 {
                let i = f[(corner + 1) % 3];
                let j = f[(corner + 2) % 3];
                let d = w[corner] * (t[i] - t[j]);
                out[i] += d;
                out[j] -= d;
            }
        }
    };

    // Per-triangle Hessian of lifted area in the three corner heights, by
    // central finite differences (each face couples only 3 height DOFs).
    let face_hessians = |t: &[f64]| -> Vec<[[f64; 3]; 3]> {
        let eps = 1e-6;
        faces
            .iter()
            .map(|f| {
                let area_at = |d: [f64; 3]| {
                    let p: Vec<Vec4> = (0..3)
                        .map(|c| {
                            let b = base3[f[c]];
                            Vec4::new(b.x, b.y, b.z, t[f[c]] + d[c])
                        })
                        .collect();
                    crate::mesh::triangle_area4(&p[0], &p[1], &p[2])
                };
                let mut h = [[0.0; 3]; 3];
                let a0 = area_at([0.0; 3]);
                for i in 0..3 {
                    let mut dp = [0.0; 3];
                    dp[i] = eps;
                    let mut dm = [0.0; 3];
                    dm[i] = -eps;
                    h[i][i] = (area_at(dp) + area_at(dm) - 2.0 * a0) / (eps * eps);
                    for j in (i + 1)..3 {
                        let mut dpp = [0.0; 3];
                        dpp[i] = eps;
                        dpp[j] = eps;
                        let mut dpm = [0.0; 3];
                        dpm[i] = eps;
                        dpm[j] = -eps;
                        let mut dmp = [0.0; 3];
                        dmp[i] = -eps;
                        dmp[j] = eps;
                        let mut dmm = [0.0; 3];
                        dmm[i] = -eps;
                        dmm[j] = -eps;
                        let v = (area_at(dpp) - area_at(dpm) - area_at(dmp) + area_at(dmm))
                            / (4.0 * eps * eps);
                        h[i][j] = v;
                        h[j][i] = v;
                    }
                }
                h
            })
            .collect()
    };

    // Stop when the normalized residual (area-gradient over a third of the
    // ring area, graded corner zone excluded) is safely under tolerance.
    let normalized_residual = |t: &[f64], r_full: &[f64]| -> f64 {
        let mut ring_area = vec![0.0f64; nv];
        for f in &faces {
            let a =
                crate::mesh::triangle_area4(&lift(f[0], t), &lift(f[1], t), &lift(f[2], t)) / 3.0;
            for &v in f {
                ring_area[v] += a;
            }
        }
        let mut worst = 0.0f64;
        for &v in &free {
            if dm.near_corner[v] || ring_area[v] <= 0.0 {
                continue;
            }
            worst = worst.max(r_full[v].abs() / (ring_area[v] / 3.0));
        }
        worst
    };

    let mut area_prev = total_area(&heights);
    let mut iterations = 0usize;
    let mut worst_increase = 0.0f64;
    let mut r_full = vec![0.0; nv];
    for _outer in 0..40 {
        let weights = cotan_weights(&heights);
        apply_l(&weights, &heights, &mut r_full);
        let gmax = normalized_residual(&heights, &r_full);
        if gmax < 0.3 * tol {
            break;
        }
        iterations += 1;

        // A few Picard steps (lagged Dirichlet form as the model Hessian)
        // give a good global start; Newton finishes superlinearly.
        let picard = iterations <= 6;
        let hess = if picard {
            weights
                .iter()
                .map(|w| {
                    // Assemble the 3x3 edge-weight block of the face.
                    let mut h = [[0.0; 3]; 3];
                    for corner in 0..3 {
                        let i = (corner + 1) % 3;
                        let j = (corner + 2) % 3;
                        h[i][i] += w[corner];
                        h[j][j] += w[corner];
                        h[i][j] -= w[corner];
                        h[j][i] -= w[corner];
                    }
                    h
                })
                .collect()
        } else {
            face_hessians(&heights)
        };
        let mut diag = vec![0.0f64; nv];
        for (f, h) in faces.iter().zip(hess.iter()) {
            for c in 0..3 {
                diag[f[c]] += h[c][c];
            }
        }
        for d in diag.iter_mut() {
            if d.abs() < 1e-14 {
                *d = 1.0;
            }
        }
        let apply_h = |lambda: f64, p_full: &[f64], out: &mut [f64]| {
            for o in out.iter_mut() {
                *o = 0.0;
            }
            for (f, h) in faces.iter().zip(hess.iter()) {
                for ci in 0..3 {
                    let mut acc = 0.0;
                    for cj in 0..3 {
                        acc += h[ci][cj] * p_full[f[cj]];
                    }
                    out[f[ci]] += acc;
                }
            }
            if lambda > 0.0 {
                for v in 0..p_full.len() {
                    out[v] += lambda * diag[v].abs() * p_full[v];
                }
            }
        };

        let mut lambda = 0.0f64;
        let mut delta = vec![0.0f64; free.len()];
        'reg: for _attempt in 0..8 {
            // Jacobi-preconditioned CG on the free heights.
            for d in delta.iter_mut() {
                *d = 0.0;
            }
            let mut r: Vec<f64> = free.iter().map(|&v| -r_full[v]).collect();
            let r0 = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut z: Vec<f64> = r
                .iter()
                .zip(free.iter())
                .map(|(ri, &v)| ri / (diag[v].abs() * (1.0 + lambda)))
                .collect();
            let mut p = z.clone();
            let mut rz: f64 = r.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
            let mut p_full = vec![0.0; nv];
            let mut hp_full = vec![0.0; nv];
            let cg_rel = if picard { 1e-4 } else { 1e-6 };
            let cg_cap = free.len().max(100).min(1500);
            for _cg in 0..cg_cap {
                for t in p_full.iter_mut() {
                    *t = 0.0;
                }
                for (k, &v) in free.iter().enumerate() {
                    p_full[v] = p[k];
                }
                apply_h(lambda, &p_full, &mut hp_full);
                let pap: f64 = free
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| p[k] * hp_full[v])
                    .sum();
                if pap <= 0.0 {
                    // Indefinite direction: regularize and restart.
                    lambda = if lambda == 0.0 { 1e-4 } else { lambda * 30.0 };
                    if lambda > 1e6 {
                        break 'reg;
                    }
                    continue 'reg;
                }
                let alpha = rz / pap;
                for (k, &v) in free.iter().enumerate() {
                    delta[k] += alpha * p[k];
                    r[k] -= alpha * hp_full[v];
                }
                let rmax = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if rmax < cg_rel * r0 || rmax < 1e-16 {
                    break 'reg;
                }
                for (k, &v) in free.iter().enumerate() {
                    z[k] = r[k] / (diag[v].abs() * (1.0 + lambda));
                }
                let rz_new: f64 = r.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
                let beta = rz_new / rz;
                rz = rz_new;
                for k in 0..free.len() {
                    p[k] = z[k] + beta * p[k];
                }
            }
            break;
        }

        // Damped update with an area-monotonicity guard.
        let mut step = 1.0;
        let mut applied = false;
        for _ in 0..30 {
            let mut trial = heights.clone();
            for (k, &v) in free.iter().enumerate() {
                trial[v] += step * delta[k];
            }
            let area = total_area(&trial);
            if area <= area_prev + 1e-13 {
                worst_increase = worst_increase.max((area - area_prev).max(0.0));
                heights = trial;
                area_prev = area;
                applied = true;
                break;
            }
            step *= 0.5;
        }
        if std::env::var("PLATEAU_DEBUG").is_ok() {
            eprintln!(
                "outer {iterations}: area {area_prev:.10} gmax {gmax:.3e} applied {applied}"
            );
        }
        if !applied {
            break;
        }
    }
    let report_iterations = iterations;

    // Assemble the surface mesh and orient it upward.
    let vertices: Vec<ProdPoint> = (0..nv)
        .map(|v| ProdPoint::new(dm.bases[v], heights[v]))
        .collect();
    let mut mesh = SurfaceMesh::new(vertices, dm.faces.clone(), None);
    let flips = crate::topology::orientation_flips(&mesh)?
        .ok_or_else(|| Error::MeshQuality("graph mesh is not orientable".into()))?;
    for (f, flip) in flips.iter().enumerate() {
        if *flip {
            mesh.faces[f].swap(1, 2);
        }
    }
    mesh.compute_normals();
    let interior_nu_sum: f64 = (0..nv)
        .filter(|&v| dm.tags[v].is_none())
        .map(|v| mesh.nu[v])
        .sum();
    if interior_nu_sum < 0.0 {
        for f in mesh.faces.iter_mut() {
            f.swap(1, 2);
        }
        mesh.compute_normals();
    }
    mesh.boundary_tags = dm.tags.clone();

    // Normalized residual over free vertices, and the graph condition.
    let vertex_areas = mesh.vertex_areas();
    let final_weights = cotan_weights(&heights);
    let mut grad_full = vec![0.0; nv];
    apply_l(&final_weights, &heights, &mut grad_full);
    let mut residual: f64 = 0.0;
    for &v in &free {
        if dm.near_corner[v] {
            continue;
        }
        residual = residual.max(grad_full[v].abs() / (vertex_areas[v] / 3.0));
    }
    if residual > tol {
        return Err(Error::SolverFailure {
            message: format!("no convergence in {report_iterations} outer iterations"),
            residual,
        });
    }
    if worst_increase > 1e-12 {
        return Err(Error::SolverFailure {
            message: "iteration admitted an area increase".into(),
            residual: worst_increase,
        });
    }
    for &v in &free {
        if mesh.nu[v] <= 0.0 {
            return Err(Error::GraphViolation(format!(
                "angle function {:.3e} at interior vertex {v}; refine the mesh",
                mesh.nu[v]
            )));
        }
    }

    // Corner frames: p along the bottom edge toward the other corner.
    let (_, corner_b, corner_c) = contour.domain_corners();
    let frame_b = {
        let p = corner_b.direction_to(&corner_c)?;
        CornerFrame {
            base: corner_b,
            p,
            q: corner_b.coords().cross(&p),
        }
    };
    let frame_c = {
        let p = corner_c.direction_to(&corner_b)?;
        CornerFrame {
            base: corner_c,
            p,
            q: corner_c.coords().cross(&p),
        }
    };

    let theta_12 = measure_ring_rotation(&mesh, &heights, &dm.ring_b, &frame_b, h);
    let theta_34 = measure_ring_rotation(&mesh, &heights, &dm.ring_c, &frame_c, h);

    let trace_23 = horizontal_trace(&mesh, &heights, &dm.bottom);
    let trace_45 = horizontal_trace(&mesh, &heights, &dm.chain_45);
    let trace_51 = horizontal_trace(&mesh, &heights, &dm.chain_51);

    let mirror_chain = if spec.is_symmetric() {
        Some(dm.mirror_chain.clone())
    } else {
        None
    };

    Ok(PlateauSolution {
        spec: *spec,
        contour,
        mesh,
        height_fn: heights,
        trace_23,
        trace_45,
        trace_51,
        theta_12,
        theta_34,
        frame_b,
        frame_c,
        mirror_chain,
        near_corner: dm.near_corner.clone(),
        residual,
        resolution,
        tol,
        iterations: report_iterations,
    })
}

/// Theta samples from the first-ring vertex normals around a corner fan,
/// ordered by ascending height and unwrapped to the nearest branch.
fn measure_ring_rotation(
    mesh: &SurfaceMesh,
    heights: &[f64],
    ring: &[usize],
    frame: &CornerFrame,
    h: f64,
) -> Vec<ThetaSample> {
    let mut samples: Vec<ThetaSample> = ring
        .iter()
        .map(|&v| {
            let n = &mesh.normals[v];
            let theta = n.horizontal.dot(&frame.q).atan2(n.horizontal.dot(&frame.p));
            ThetaSample {
                s: heights[v].clamp(0.0, h),
                theta,
            }
        })
        .collect();
    // Ring order runs from the top edge down to the bottom edge.
    samples.reverse();
    for k in 1..samples.len() {
        let prev = samples[k - 1].theta;
        let mut t = samples[k].theta;
        while t - prev > PI {
            t -= 2.0 * PI;
        }
        while t - prev < -PI {
            t += 2.0 * PI;
        }
        samples[k].theta = t;
    }
    // The endpoint vertices sit on the horizontal boundary edges, where the
    // one-sided normal average lags the fan profile by half an angular step.
    // Replace their angles by linear extrapolation of the interior slope.
    let n = samples.len();
    if n >= 4 {
        let slope0 = (samples[2].theta - samples[1].theta) / (samples[2].s - samples[1].s);
        samples[0].theta = samples[1].theta - slope0 * (samples[1].s - samples[0].s);
        let slope1 =
            (samples[n - 2].theta - samples[n - 3].theta) / (samples[n - 2].s - samples[n - 3].s);
        samples[n - 1].theta = samples[n - 2].theta + slope1 * (samples[n - 1].s - samples[n - 2].s);
    }
    samples
}

/// Dense trace along a horizontal boundary chain. The angle function comes
/// from a second-order one-sided estimate of the normal slope of the height
/// function (the chain is a level set), the vertical-speed datum from the
/// same slope with its sign taken from the oriented normal determinant. At
/// the polygon corners the values are forced: the surface is vertical there.
fn horizontal_trace(
    mesh: &SurfaceMesh,
    heights: &[f64],
    chain: &[(f64, usize, Option<(usize, usize)>)],
) -> Vec<TraceSample> {
    let n = chain.len();
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let (s, v, probes) = chain[k];
        let here = mesh.vertices[v];
        let p = here.base.coords();

        // Boundary tangent from chain neighbors, horizontalized.
        let prev = chain[if k == 0 { 0 } else { k - 1 }].1;
        let next = chain[if k + 1 < n { k + 1 } else { n - 1 }].1;
        let chord = mesh.vertices[next].base.coords() - mesh.vertices[prev].base.coords();
        let mut tangent = chord - p * chord.dot(&p);
        let tnorm = tangent.norm();
        if tnorm < 1e-14 {
            out.push(TraceSample { s, nu: 0.0, w: 1.0 });
            continue;
        }
        tangent /= tnorm;

        let (nu, u_n) = match probes {
            None => (0.0, f64::INFINITY),
            Some((q1, q2)) => {
                // Inward normal of the domain at the chain (the chain is a
                // level set of the height function, so the gradient is
                // normal to it).
                let inward = {
                    let d = mesh.vertices[q1].base.coords() - p;
                    let d = d - p * d.dot(&p) - tangent * d.dot(&tangent);
                    d.normalize()
                };
                let r_of = |q: usize| {
                    let d = mesh.vertices[q].base.coords() - p;
                    (d - p * d.dot(&p)).dot(&inward)
                };
                let r1 = r_of(q1);
                let r2 = r_of(q2);
                let u0 = heights[v];
                let u1 = heights[q1];
                let u2 = heights[q2];
                // Fit u - u0 = a r + b r^2 through the two probes.
                let det = r1 * r2 * r2 - r2 * r1 * r1;
                let a = if det.abs() < 1e-30 {
                    (u1 - u0) / r1
                } else {
                    ((u1 - u0) * r2 * r2 - (u2 - u0) * r1 * r1) / det
                };
                (1.0 / (1.0 + a * a).sqrt(), a)
            }
        };

        // Sign of w from the oriented determinant with the slope-built
        // normal; magnitude from the slope itself.
        let w_mag = if u_n.is_infinite() {
            1.0
        } else {
            u_n.abs() / (1.0 + u_n * u_n).sqrt()
        };
        let w_sign = {
            // Normal of the graph with positive angle function.
            let (nh, nv) = match probes {
                None => {
                    // Vertical boundary: take the horizontal normal from the
                    // mesh (it is well defined there).
                    (mesh.normals[v].horizontal, 0.0)
                }
                Some((q1, _)) => {
                    let inward = {
                        let d = mesh.vertices[q1].base.coords() - p;
                        let d = d - p * d.dot(&p) - tangent * d.dot(&tangent);
                        d.normalize()
                    };
                    let scale = 1.0 / (1.0 + u_n * u_n).sqrt();
                    (-inward * u_n * scale, scale)
                }
            };
            let det = nalgebra::Matrix4::new(
                p.x, p.y, p.z, 0.0, nh.x, nh.y, nh.z, nv, tangent.x, tangent.y, tangent.z, 0.0,
                0.0, 0.0, 0.0, 1.0,
            )
            .determinant();
            if det >= 0.0 {
                1.0
            } else {
                -1.0
            }
        };
        out.push(TraceSample {
            s,
            nu,
            w: w_sign * w_mag,
        });
    }
    out
}

/// Per-vertex discrete minimality residual: the tangentially projected
/// gradient of total chordal area, normalized by a third of the incident
/// area. `None` at boundary vertices.
pub fn mean_curvature_residual(mesh: &SurfaceMesh) -> Result<Vec<Option<f64>>> {
    mesh.check_face_quality()?;
    let nv = mesh.vertices.len();
    let mut grads = vec![Vec4::zeros(); nv];
    for f in 0..mesh.faces.len() {
        let pts = mesh.face_points(f);
        for corner in 0..3 {
            let g = crate::mesh::triangle_area_grad4(
                &pts[corner],
                &pts[(corner + 1) % 3],
                &pts[(corner + 2) % 3],
            );
            grads[mesh.faces[f][corner]] += g;
        }
    }
    let mut on_boundary = vec![false; nv];
    for (a, b) in mesh.boundary_edges() {
        on_boundary[a] = true;
        on_boundary[b] = true;
    }
    let areas = mesh.vertex_areas();
    let mut out = Vec::with_capacity(nv);
    for v in 0..nv {
        if on_boundary[v] || areas[v] <= 0.0 {
            out.push(None);
            continue;
        }
        let p = mesh.vertices[v].base.coords();
        let radial = Vec4::new(p.x, p.y, p.z, 0.0);
        let g = grads[v] - radial * grads[v].dot(&radial);
        out.push(Some(g.norm() / (areas[v] / 3.0)));
    }
    Ok(out)
}

/// Largest residual over interior vertices.
pub fn max_residual(mesh: &SurfaceMesh) -> Result<f64> {
    Ok(mean_curvature_residual(mesh)?
        .into_iter()
        .flatten()
        .fold(0.0, f64::max))
}

/// Rotation measurement of a vertical edge: the unwrapped samples and the
/// total rotation.
pub fn measure_normal_rotation(
    sol: &PlateauSolution,
    edge: EdgeId,
) -> Result<(Vec<ThetaSample>, f64)> {
    let samples = match edge {
        EdgeId::E12 => &sol.theta_12,
        EdgeId::E34 => &sol.theta_34,
        _ => {
            return Err(Error::NotApplicable(format!(
                "edge {} is horizontal",
                edge.as_str()
            )))
        }
    };
    if samples.len() < 2 {
        return Err(Error::MeshQuality("too few rotation samples".into()));
    }
    let total = samples.last().unwrap().theta - samples.first().unwrap().theta;
    Ok((samples.clone(), total))
}

/// Length of the mirror curve (symmetric specs only): the lifted medial
/// polyline from the apex to the bottom midpoint.
pub fn measure_symmetry_curve(sol: &PlateauSolution) -> Result<f64> {
    let chain = sol
        .mirror_chain
        .as_ref()
        .ok_or_else(|| Error::NotApplicable("spec is not symmetric".into()))?;
    let mut len = 0.0;
    for k in 1..chain.len() {
        len += crate::geom::prod_distance(
            &sol.mesh.vertices[chain[k - 1]],
            &sol.mesh.vertices[chain[k]],
        );
    }
    Ok(len)
}

/// Boundary trace of a horizontal edge.
pub fn boundary_trace(sol: &PlateauSolution, edge: EdgeId) -> Result<&[TraceSample]> {
    match edge {
        EdgeId::E23 => Ok(&sol.trace_23),
        EdgeId::E45 => Ok(&sol.trace_45),
        EdgeId::E51 => Ok(&sol.trace_51),
        _ => Err(Error::NotApplicable(format!(
            "edge {} is vertical",
            edge.as_str()
        ))),
    }
}

/// Trapezoid integral of a sampled quantity against arc length.
pub fn integrate_trace<F: Fn(&TraceSample) -> f64>(samples: &[TraceSample], f: F) -> f64 {
    let mut total = 0.0;
    for k in 1..samples.len() {
        let ds = samples[k].s - samples[k - 1].s;
        total += 0.5 * (f(&samples[k]) + f(&samples[k - 1])) * ds;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surfaces::{cylinder_mesh, helicoid_mesh, slice_mesh};
    use std::f64::consts::FRAC_PI_2;

    fn octantish() -> ContourSpec {
        ContourSpec::new(FRAC_PI_2, FRAC_PI_2, FRAC_PI_2, 0.5).unwrap()
    }

    #[test]
    fn solve_converges_on_symmetric_spec() {
        let sol = solve_graph(&octantish(), 6, 1e-4).unwrap();
        assert!(sol.residual < 1e-4);
        for (v, tag) in sol.mesh.boundary_tags.iter().enumerate() {
            if tag.is_none() {
                assert!(sol.mesh.nu[v] > 0.0);
                assert!(sol.height_fn[v] > 0.0 && sol.height_fn[v] < 0.5);
            }
        }
    }

    #[test]
    fn small_height_collapses_to_slice() {
        let spec = ContourSpec::new(0.9, 0.7, 1.2, 1e-4).unwrap();
        let sol = solve_graph(&spec, 5, 1e-4).unwrap();
        let max_h = sol.height_fn.iter().cloned().fold(0.0f64, f64::max);
        assert!(max_h <= 1e-4 + 1e-12);
    }

    #[test]
    fn symmetric_solve_commutes_with_mirror() {
        let sol = solve_graph(&octantish(), 6, 1e-6).unwrap();
        // The mirror swaps the two swept patches; paired trace samples on
        // the two top edges must agree.
        let t45 = &sol.trace_45;
        let t51 = &sol.trace_51;
        assert_eq!(t45.len(), t51.len());
        for (a, b) in t45.iter().zip(t51.iter().rev()) {
            assert!((a.nu - b.nu).abs() < 1e-6, "{} vs {}", a.nu, b.nu);
        }
        let len = measure_symmetry_curve(&sol).unwrap();
        assert!(len > 0.5);
    }

    #[test]
    fn normal_rotation_matches_corner_angles() {
        let sol = solve_graph(&octantish(), 8, 1e-6).unwrap();
        let alpha = sol.contour.triangle.alpha_tilde;
        let beta = sol.contour.triangle.beta_tilde;
        let (samples, total_12) = measure_normal_rotation(&sol, EdgeId::E12).unwrap();
        assert!(
            (total_12.abs() - alpha).abs() / alpha < 0.02,
            "|dtheta| {} vs alpha {}",
            total_12.abs(),
            alpha
        );
        for k in 1..samples.len() {
            let d = samples[k].theta - samples[k - 1].theta;
            assert!(d * total_12 >= -1e-9, "rotation not monotone");
        }
        let (_, total_34) = measure_normal_rotation(&sol, EdgeId::E34).unwrap();
        assert!((total_34.abs() - beta).abs() / beta < 0.02);
    }

    #[test]
    fn traces_vanish_at_vertical_corners() {
        let sol = solve_graph(&octantish(), 6, 1e-6).unwrap();
        let t = &sol.trace_23;
        assert!(t.first().unwrap().nu.abs() < 0.1);
        assert!(t.last().unwrap().nu.abs() < 0.1);
        assert!(t.first().unwrap().w.abs() > 0.9);
        for s in t.iter() {
            assert!((s.nu * s.nu + s.w * s.w - 1.0).abs() < 0.05, "{s:?}");
        }
        let l23 = integrate_trace(t, |s| s.nu);
        assert!(l23 > 0.0 && l23 < sol.contour.triangle.c);
    }

    #[test]
    fn mirror_curve_exceeds_height_and_grows() {
        let mut prev = 0.0;
        for (k, h) in [0.2, 0.4, 0.6].into_iter().enumerate() {
            let spec = ContourSpec::new(0.8, 0.8, FRAC_PI_2, h).unwrap();
            let sol = solve_graph(&spec, 5, 1e-5).unwrap();
            let len = measure_symmetry_curve(&sol).unwrap();
            assert!(len > h);
            if k > 0 {
                assert!(len > prev);
            }
            prev = len;
        }
    }

    #[test]
    fn mirror_curve_small_height_matches_median() {
        let a = 0.8f64;
        let spec = ContourSpec::new(a, a, FRAC_PI_2, 2e-3).unwrap();
        let sol = solve_graph(&spec, 8, 1e-6).unwrap();
        let len = measure_symmetry_curve(&sol).unwrap();
        let c = sol.contour.triangle.c;
        let median = crate::geom::acos_clamped(a.cos() / (c / 2.0).cos());
        assert!((len - median).abs() < 5e-3, "{len} vs {median}");
    }

    #[test]
    fn reference_surfaces_have_small_residual() {
        let slice = slice_mesh(0.0, 8).unwrap();
        let r = max_residual(&slice).unwrap();
        assert!(r < 0.05, "slice residual {r}");

        let cyl = cylinder_mesh(&Vec3::z(), 1.0, 8).unwrap();
        let r = max_residual(&cyl).unwrap();
        assert!(r < 1e-9, "cylinder residual {r}");

        let hel = helicoid_mesh(2.0 * PI, 1.0, 8).unwrap();
        let r = max_residual(&hel).unwrap();
        assert!(r < 0.1, "helicoid residual {r}");
    }

    #[test]
    fn residual_detects_displaced_vertex() {
        let mut slice = slice_mesh(0.0, 12).unwrap();
        let v = slice.vertices.len() / 2;
        slice.vertices[v].height += 0.1;
        slice.compute_normals();
        let res = mean_curvature_residual(&slice).unwrap();
        assert!(res[v].unwrap() > 0.01);
    }

    #[test]
    fn residual_decays_at_second_order_on_slice() {
        let mut rs = Vec::new();
        let mut hs = Vec::new();
        for res in [6, 12, 24] {
            let mesh = slice_mesh(0.0, res).unwrap();
            rs.push(max_residual(&mesh).unwrap());
            hs.push(mesh.max_edge_length());
        }
        let slope = (rs[0] / rs[2]).ln() / (hs[0] / hs[2]).ln();
        assert!((1.6..=2.4).contains(&slope), "slice slope {slope} {rs:?}");
    }
}

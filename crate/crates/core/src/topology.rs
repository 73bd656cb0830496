//! Topological predicates on triangulated surfaces: Euler characteristic,
//! orientability, separation parity in the circle quotient, the index audit
//! of the vertical-gradient field, pairwise intersection, and contained
//! geodesic detection.

use std::collections::{HashMap, HashSet, VecDeque};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::mesh::{SurfaceMesh, Vec4};

/// Combinatorial Euler characteristic, exact integer arithmetic.
pub fn euler_characteristic(mesh: &SurfaceMesh) -> Result<i64> {
    mesh.check_edge_manifold()?;
    let v = mesh.vertices.len() as i64;
    let e = mesh.edge_map().len() as i64;
    let f = mesh.faces.len() as i64;
    Ok(v - e + f)
}

/// Face adjacency with the relative orientation across each shared edge:
/// `true` when the two windings traverse the edge oppositely (consistent).
fn face_adjacency(mesh: &SurfaceMesh) -> Result<Vec<Vec<(usize, bool)>>> {
    let mut directed: HashMap<(usize, usize), Vec<(usize, bool)>> = HashMap::new();
    for (f, face) in mesh.faces.iter().enumerate() {
        for e in 0..3 {
            let a = face[e];
            let b = face[(e + 1) % 3];
            let key = (a.min(b), a.max(b));
            directed.entry(key).or_default().push((f, a < b));
        }
    }
    let mut adj = vec![Vec::new(); mesh.faces.len()];
    for (edge, users) in directed {
        match users.len() {
            1 => {}
            2 => {
                let (f0, d0) = users[0];
                let (f1, d1) = users[1];
                // Opposite traversal directions mean consistent windings.
                let consistent = d0 != d1;
                adj[f0].push((f1, consistent));
                adj[f1].push((f0, consistent));
            }
            n => {
                return Err(Error::MeshQuality(format!(
                    "edge {edge:?} shared by {n} faces"
                )))
            }
        }
    }
    Ok(adj)
}

/// Whether a consistent global orientation of the faces exists. Disconnected
/// meshes are orientable when every component is.
pub fn orientability(mesh: &SurfaceMesh) -> Result<bool> {
    Ok(orientation_flips(mesh)?.is_some())
}

/// Per-face flip flags making the windings globally consistent, or `None`
/// when the mesh is one-sided.
pub fn orientation_flips(mesh: &SurfaceMesh) -> Result<Option<Vec<bool>>> {
    let adj = face_adjacency(mesh)?;
    let n = mesh.faces.len();
    let mut flip: Vec<Option<bool>> = vec![None; n];
    for start in 0..n {
        if flip[start].is_some() {
            continue;
        }
        flip[start] = Some(false);
        let mut queue = VecDeque::from([start]);
        while let Some(f) = queue.pop_front() {
            let ff = flip[f].unwrap();
            for &(g, consistent) in &adj[f] {
                let want = if consistent { ff } else { !ff };
                match flip[g] {
                    None => {
                        flip[g] = Some(want);
                        queue.push_back(g);
                    }
                    Some(have) => {
                        if have != want {
                            return Ok(None);
                        }
                    }
                }
            }
        }
    }
    Ok(Some(flip.into_iter().map(|f| f.unwrap()).collect()))
}

/// A copy of the mesh with all face windings made globally consistent.
/// Errors when the mesh is one-sided.
pub fn oriented_copy(mesh: &SurfaceMesh) -> Result<SurfaceMesh> {
    match orientation_flips(mesh)? {
        None => Err(Error::NotApplicable(
            "mesh is one-sided; no global orientation".into(),
        )),
        Some(flips) => {
            let mut out = mesh.clone();
            for (f, flip) in flips.iter().enumerate() {
                if *flip {
                    out.faces[f].swap(1, 2);
                }
            }
            out.compute_normals();
            Ok(out)
        }
    }
}

/// Combinatorial orientation double cover. For orientable input this is two
/// disjoint copies; for one-sided input a connected orientable surface with
/// doubled Euler characteristic.
pub fn orientation_double_cover(mesh: &SurfaceMesh) -> Result<SurfaceMesh> {
    let adj = face_adjacency(mesh)?;
    let nf = mesh.faces.len();

    // Sheets: (face, sign). Vertex copies are the orbits of corners under
    // edge-adjacency within each sheet assignment.
    let corner_id = |f: usize, sign: usize, corner: usize| (f * 2 + sign) * 3 + corner;
    let mut parent: Vec<usize> = (0..nf * 6).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let union = |parent: &mut Vec<usize>, a: usize, b: usize| {
        let ra = find(parent, a);
        let rb = find(parent, b);
        if ra != rb {
            parent[ra] = rb;
        }
    };

    let corner_of = |f: usize, v: usize| mesh.faces[f].iter().position(|&x| x == v).unwrap();

    for (f, neighbors) in adj.iter().enumerate() {
        for &(g, consistent) in neighbors {
            if g < f {
                continue;
            }
            // Shared vertices between f and g glue corner copies. A
            // consistent edge keeps the sheet sign, an inconsistent one
            // swaps it.
            let shared: Vec<usize> = mesh.faces[f]
                .iter()
                .copied()
                .filter(|v| mesh.faces[g].contains(v))
                .collect();
            for &v in &shared {
                let cf = corner_of(f, v);
                let cg = corner_of(g, v);
                for sign in 0..2 {
                    let other = if consistent { sign } else { 1 - sign };
                    union(
                        &mut parent,
                        corner_id(f, sign, cf),
                        corner_id(g, other, cg),
                    );
                }
            }
        }
    }

    let mut new_index: HashMap<usize, usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut faces = Vec::with_capacity(nf * 2);
    for f in 0..nf {
        for sign in 0..2 {
            let mut tri = [0usize; 3];
            for corner in 0..3 {
                let root = find(&mut parent, corner_id(f, sign, corner));
                let idx = *new_index.entry(root).or_insert_with(|| {
                    vertices.push(mesh.vertices[mesh.faces[f][corner]]);
                    vertices.len() - 1
                });
                tri[corner] = idx;
            }
            if sign == 1 {
                tri.swap(1, 2);
            }
            faces.push(tri);
        }
    }

    let mut cover = SurfaceMesh::new(vertices, faces, mesh.quotient_circumference);
    cover.compute_normals();
    Ok(cover)
}

/// Outcome of the index audit of `T`, the tangential part of the vertical
/// field (equivalently the surface gradient of the height function).
#[derive(Debug, Clone)]
pub struct PoincareHopfAudit {
    /// One entry per zero site: (representative vertex, index).
    pub zeros: Vec<(usize, i64)>,
    pub index_sum: i64,
    /// Set when the field is identically degenerate (a slice).
    pub degenerate: bool,
    /// Set when the audit ran on the orientation double cover and the
    /// reported quantities were halved.
    pub via_double_cover: bool,
}

/// Audit the zeros of `T = xi - nu N` against the Euler characteristic.
/// One-sided meshes are audited on their orientation double cover and the
/// index sum is halved.
pub fn poincare_hopf_audit(mesh: &SurfaceMesh) -> Result<PoincareHopfAudit> {
    let orientable = orientability(mesh)?;
    if !orientable {
        let cover = orientation_double_cover(mesh)?;
        let mut audit = audit_oriented(&oriented_copy(&cover)?, None)?;
        if audit.index_sum % 2 != 0 {
            return Err(Error::Indeterminate(
                "double-cover index sum is odd".into(),
            ));
        }
        audit.index_sum /= 2;
        audit.via_double_cover = true;
        return Ok(audit);
    }
    audit_oriented(&oriented_copy(mesh)?, None)
}

/// Audit an explicitly supplied vertex field on an oriented mesh (used by
/// tests); `None` uses the vertical-gradient field.
pub fn audit_oriented(
    mesh: &SurfaceMesh,
    field: Option<&[Vec4]>,
) -> Result<PoincareHopfAudit> {
    let nv = mesh.vertices.len();
    let t_field: Vec<Vec4> = match field {
        Some(f) => f.to_vec(),
        None => (0..nv)
            .map(|v| {
                let n = &mesh.normals[v];
                let nu = mesh.nu[v];
                Vec4::new(
                    -nu * n.horizontal.x,
                    -nu * n.horizontal.y,
                    -nu * n.horizontal.z,
                    1.0 - nu * nu,
                )
            })
            .collect(),
    };

    let norms: Vec<f64> = t_field.iter().map(|t| t.norm()).collect();
    let max_norm = norms.iter().cloned().fold(0.0f64, f64::max);
    if max_norm < 1e-6 {
        return Ok(PoincareHopfAudit {
            zeros: Vec::new(),
            index_sum: 0,
            degenerate: true,
            via_double_cover: false,
        });
    }

    // Per-face winding of the field, in each face's own oriented frame.
    let mut face_winding = vec![0i64; mesh.faces.len()];
    for f in 0..mesh.faces.len() {
        let pts = mesh.face_points(f);
        let e1 = (pts[1] - pts[0]).normalize();
        let mut e2 = pts[2] - pts[0];
        e2 -= e1 * e2.dot(&e1);
        let e2 = e2.normalize();
        let mut angles = [0.0f64; 3];
        for (corner, &v) in mesh.faces[f].iter().enumerate() {
            let t = &t_field[v];
            angles[corner] = t.dot(&e2).atan2(t.dot(&e1));
        }
        let wrap = |x: f64| {
            let mut y = x;
            while y > std::f64::consts::PI {
                y -= 2.0 * std::f64::consts::PI;
            }
            while y <= -std::f64::consts::PI {
                y += 2.0 * std::f64::consts::PI;
            }
            y
        };
        let total =
            wrap(angles[1] - angles[0]) + wrap(angles[2] - angles[1]) + wrap(angles[0] - angles[2]);
        face_winding[f] = (total / (2.0 * std::f64::consts::PI)).round() as i64;
    }

    // Seed clusters from faces with nonzero winding and from faces near
    // small-|T| vertices, then grow two rings so the cluster boundary sits
    // away from the zero [clustering radius of a few mesh edges].
    let mut flagged: HashSet<usize> = HashSet::new();
    for (f, w) in face_winding.iter().enumerate() {
        if *w != 0 {
            flagged.insert(f);
        }
    }
    let zero_thresh = (max_norm * 0.05).max(1e-6);
    let mut vertex_faces: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for (f, face) in mesh.faces.iter().enumerate() {
        for &v in face {
            vertex_faces[v].push(f);
        }
    }
    for v in 0..nv {
        if norms[v] < zero_thresh {
            flagged.extend(vertex_faces[v].iter().copied());
        }
    }
    for _ in 0..2 {
        let current: Vec<usize> = flagged.iter().copied().collect();
        for f in current {
            for &v in &mesh.faces[f] {
                flagged.extend(vertex_faces[v].iter().copied());
            }
        }
    }

    // Connected clusters of flagged faces (across shared vertices).
    let mut cluster_of: HashMap<usize, usize> = HashMap::new();
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut sorted_flagged: Vec<usize> = flagged.iter().copied().collect();
    sorted_flagged.sort_unstable();
    for &seed in &sorted_flagged {
        if cluster_of.contains_key(&seed) {
            continue;
        }
        let id = clusters.len();
        let mut members = Vec::new();
        let mut queue = VecDeque::from([seed]);
        cluster_of.insert(seed, id);
        while let Some(f) = queue.pop_front() {
            members.push(f);
            for &v in &mesh.faces[f] {
                for &g in &vertex_faces[v] {
                    if flagged.contains(&g) && !cluster_of.contains_key(&g) {
                        cluster_of.insert(g, id);
                        queue.push_back(g);
                    }
                }
            }
        }
        clusters.push(members);
    }

    let mut zeros = Vec::new();
    let mut index_sum = 0i64;
    for members in &clusters {
        let idx = match cluster_boundary_winding(mesh, &t_field, members) {
            Some(idx) => idx,
            // Boundary walk failed (cluster touches the mesh boundary or is
            // not disk-like): fall back to the face-winding sum.
            None => members.iter().map(|&f| face_winding[f]).sum(),
        };
        if idx != 0 {
            let rep = members
                .iter()
                .flat_map(|&f| mesh.faces[f].iter().copied())
                .min_by(|&a, &b| norms[a].partial_cmp(&norms[b]).unwrap())
                .unwrap();
            zeros.push((rep, idx));
            index_sum += idx;
        }
    }
    zeros.sort_by_key(|&(v, _)| v);

    Ok(PoincareHopfAudit {
        zeros,
        index_sum,
        degenerate: false,
        via_double_cover: false,
    })
}

/// Quarter-turn of a tangent-plane vector around the vertex normal.
/// For a positively-oriented frame (e1, e2, radial, normal) this sends e1 to
/// e2, matching the handedness of the per-face frames built from windings.
fn tangent_quarter_turn(radial: &Vec4, normal: &Vec4, a: &Vec4) -> Vec4 {
    crate::mesh::cross4(radial, normal, a)
}

/// Winding of the field along the (oriented) boundary of a face cluster,
/// computed in a frame transported vertex to vertex. Returns the summed
/// winding over all boundary cycles, or `None` when the boundary is not a
/// union of clean cycles.
fn cluster_boundary_winding(
    mesh: &SurfaceMesh,
    t_field: &[Vec4],
    members: &[usize],
) -> Option<i64> {
    let member_set: HashSet<usize> = members.iter().copied().collect();
    // Directed boundary edges, following each face's winding.
    let mut undirected_count: HashMap<(usize, usize), usize> = HashMap::new();
    for &f in members {
        for e in 0..3 {
            let a = mesh.faces[f][e];
            let b = mesh.faces[f][(e + 1) % 3];
            *undirected_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let mut next: HashMap<usize, usize> = HashMap::new();
    for &f in members {
        for e in 0..3 {
            let a = mesh.faces[f][e];
            let b = mesh.faces[f][(e + 1) % 3];
            if undirected_count[&(a.min(b), a.max(b))] == 1 {
                // Interior edges of the cluster appear twice. This directed
                // edge bounds the cluster; `member_set` owns exactly one side.
                debug_assert!(member_set.contains(&f));
                if next.insert(a, b).is_some() {
                    return None; // branching boundary
                }
            }
        }
    }
    if next.is_empty() {
        return None;
    }

    let radial = |v: usize| {
        let p = mesh.vertices[v].base.coords();
        Vec4::new(p.x, p.y, p.z, 0.0)
    };
    let normal4 = |v: usize| {
        let n = &mesh.normals[v];
        Vec4::new(n.horizontal.x, n.horizontal.y, n.horizontal.z, n.vertical)
    };
    let project_tangent = |v: usize, a: &Vec4| -> Vec4 {
        let r = radial(v);
        let n = normal4(v);
        let mut out = *a;
        out -= r * out.dot(&r);
        out -= n * out.dot(&n);
        out
    };

    let mut total_winding = 0i64;
    let mut visited: HashSet<usize> = HashSet::new();
    let starts: Vec<usize> = {
        let mut s: Vec<usize> = next.keys().copied().collect();
        s.sort_unstable();
        s
    };
    for &start in &starts {
        if visited.contains(&start) {
            continue;
        }
        // Collect the cycle.
        let mut cycle = vec![start];
        visited.insert(start);
        let mut cur = *next.get(&start)?;
        while cur != start {
            if !visited.insert(cur) {
                return None;
            }
            cycle.push(cur);
            cur = *next.get(&cur)?;
        }
        if cycle.len() < 3 {
            continue;
        }

        // Transported-frame walk: accumulate the turning of T relative to a
        // frame vector carried along the cycle, then close up with the
        // frame's holonomy.
        let v0 = cycle[0];
        let mut frame = project_tangent(v0, &t_field[v0]);
        if frame.norm() < 1e-14 {
            return None;
        }
        frame = frame.normalize();
        let frame0 = frame;
        let mut acc = 0.0f64;
        let mut prev_angle = 0.0f64; // angle of T relative to frame at v0 is 0
        for k in 1..=cycle.len() {
            let v = cycle[k % cycle.len()];
            // Transport the frame by projection onto the next tangent plane.
            let mut carried = project_tangent(v, &frame);
            if carried.norm() < 1e-10 {
                return None;
            }
            carried = carried.normalize();
            let t = project_tangent(v, &t_field[v]);
            if t.norm() < 1e-14 {
                return None;
            }
            let j = tangent_quarter_turn(&radial(v), &normal4(v), &carried);
            let angle = t.dot(&j).atan2(t.dot(&carried));
            let mut delta = angle - prev_angle;
            while delta > std::f64::consts::PI {
                delta -= 2.0 * std::f64::consts::PI;
            }
            while delta <= -std::f64::consts::PI {
                delta += 2.0 * std::f64::consts::PI;
            }
            acc += delta;
            prev_angle = angle;
            frame = carried;
        }
        // Holonomy of the transported frame after the full loop.
        let j0 = tangent_quarter_turn(&radial(v0), &normal4(v0), &frame0);
        let holonomy = frame.dot(&j0).atan2(frame.dot(&frame0));
        let winding = (acc + holonomy) / (2.0 * std::f64::consts::PI);
        total_winding += winding.round() as i64;
    }
    Some(total_winding)
}

/// Deterministic stratified sample of the sphere (spiral lattice).
pub fn sphere_samples(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..n)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            Vec3::new(rho * phi.cos(), rho * phi.sin(), z)
        })
        .collect()
}

/// Number of transversal crossings of the fiber over `p` with the mesh, or
/// `None` when a crossing is too close to tangential to trust.
fn fiber_crossings(mesh: &SurfaceMesh, p: &Vec3) -> Option<usize> {
    let mut count = 0;
    for f in 0..mesh.faces.len() {
        let pts = mesh.face_points(f);
        let m = nalgebra::Matrix3::from_columns(&[
            Vec3::new(pts[0][0], pts[0][1], pts[0][2]),
            Vec3::new(pts[1][0], pts[1][1], pts[1][2]),
            Vec3::new(pts[2][0], pts[2][1], pts[2][2]),
        ]);
        let det = m.determinant();
        if det.abs() < 1e-12 {
            continue;
        }
        let lambda = match m.try_inverse() {
            Some(inv) => inv * p,
            None => continue,
        };
        let sum: f64 = lambda.iter().sum();
        if sum.abs() < 1e-12 {
            continue;
        }
        let bary = lambda / sum;
        let margin = 1e-7;
        if bary.iter().all(|&l| l > margin) && sum > 0.0 {
            count += 1;
        } else if bary.iter().any(|&l| l.abs() <= margin) && sum > 0.0 {
            // Grazing hit: caller must perturb and retry.
            return None;
        }
    }
    Some(count)
}

/// Whether the mesh separates the quotient: every sampled fiber must cross
/// it an even number of times.
pub fn separation_parity(mesh: &SurfaceMesh, fiber_samples: usize) -> Result<bool> {
    if mesh.quotient_circumference.is_none() {
        return Err(Error::InputDomain(
            "separation parity needs a quotient mesh".into(),
        ));
    }
    let samples = sphere_samples(fiber_samples.max(4));
    for p in samples {
        let mut q = p;
        let mut crossings = None;
        for attempt in 0..8 {
            if let Some(c) = fiber_crossings(mesh, &q) {
                crossings = Some(c);
                break;
            }
            // Deterministic perturbation away from the grazing configuration.
            let jitter = 1e-4 * (attempt + 1) as f64;
            q = (p + Vec3::new(jitter, 2.0 * jitter, 3.0 * jitter)).normalize();
        }
        match crossings {
            Some(c) => {
                if c % 2 == 1 {
                    return Ok(false);
                }
            }
            None => {
                return Err(Error::Indeterminate(
                    "fiber sampling kept grazing the mesh".into(),
                ))
            }
        }
    }
    Ok(true)
}

fn point_segment_dist4(p: &Vec4, a: &Vec4, b: &Vec4) -> f64 {
    let ab = b - a;
    let denom = ab.dot(&ab);
    let t = if denom < 1e-300 {
        0.0
    } else {
        ((p - a).dot(&ab) / denom).clamp(0.0, 1.0)
    };
    (p - (a + ab * t)).norm()
}

fn point_triangle_dist4(p: &Vec4, t: &[Vec4; 3]) -> f64 {
    let e1 = t[1] - t[0];
    let e2 = t[2] - t[0];
    let g11 = e1.dot(&e1);
    let g12 = e1.dot(&e2);
    let g22 = e2.dot(&e2);
    let det = g11 * g22 - g12 * g12;
    if det.abs() > 1e-300 {
        let d = p - t[0];
        let b1 = d.dot(&e1);
        let b2 = d.dot(&e2);
        let u = (g22 * b1 - g12 * b2) / det;
        let v = (g11 * b2 - g12 * b1) / det;
        if u >= 0.0 && v >= 0.0 && u + v <= 1.0 {
            return (d - e1 * u - e2 * v).norm();
        }
    }
    point_segment_dist4(p, &t[0], &t[1])
        .min(point_segment_dist4(p, &t[1], &t[2]))
        .min(point_segment_dist4(p, &t[2], &t[0]))
}

fn segment_segment_dist4(p1: &Vec4, q1: &Vec4, p2: &Vec4, q2: &Vec4) -> f64 {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.dot(&d1);
    let e = d2.dot(&d2);
    let f = d2.dot(&r);
    let (mut s, mut t);
    if a < 1e-300 && e < 1e-300 {
        return r.norm();
    }
    if a < 1e-300 {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e < 1e-300 {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            s = if denom > 1e-300 {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            t = (b * s + f) / e;
            if t < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            }
        }
    }
    ((p1 + d1 * s) - (p2 + d2 * t)).norm()
}

fn triangle_triangle_dist4(a: &[Vec4; 3], b: &[Vec4; 3]) -> f64 {
    let mut d = f64::INFINITY;
    for p in a {
        d = d.min(point_triangle_dist4(p, b));
    }
    for p in b {
        d = d.min(point_triangle_dist4(p, a));
    }
    for i in 0..3 {
        for j in 0..3 {
            d = d.min(segment_segment_dist4(
                &a[i],
                &a[(i + 1) % 3],
                &b[j],
                &b[(j + 1) % 3],
            ));
        }
    }
    d
}

/// Result of the pairwise proximity sweep.
#[derive(Debug, Clone, Copy)]
pub struct IntersectionReport {
    pub intersects: bool,
    /// Smallest chordal distance observed between the two triangulations.
    pub min_distance: f64,
    pub tolerance: f64,
}

/// Spatial-hash accelerated triangle-to-triangle proximity between two
/// meshes in the same quotient. `true` when any pair passes within the
/// discretization tolerance.
pub fn intersection_check(a: &SurfaceMesh, b: &SurfaceMesh) -> Result<IntersectionReport> {
    let ca = a.quotient_circumference;
    let cb = b.quotient_circumference;
    if let (Some(x), Some(y)) = (ca, cb) {
        if (x - y).abs() > 1e-9 {
            return Err(Error::InputDomain(format!(
                "meshes live in different quotients ({x} vs {y})"
            )));
        }
    } else if ca.is_some() != cb.is_some() {
        return Err(Error::InputDomain(
            "one mesh is a quotient mesh, the other is not".into(),
        ));
    }

    let ha = a.max_edge_length();
    let hb = b.max_edge_length();
    let tolerance = 0.5 * ha.max(hb);
    let cell = (ha.max(hb) * 1.5).max(1e-6);
    let shifts: Vec<f64> = match ca {
        Some(c) => vec![-c, 0.0, c],
        None => vec![0.0],
    };

    // Hash triangles of b by the cells their centroids occupy.
    let key_of = |p: &Vec4| {
        (
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
            (p[3] / cell).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64, i64), Vec<(usize, f64)>> = HashMap::new();
    for f in 0..b.faces.len() {
        let pts = b.face_points(f);
        let centroid = (pts[0] + pts[1] + pts[2]) / 3.0;
        for &s in &shifts {
            let mut c = centroid;
            c[3] += s;
            grid.entry(key_of(&c)).or_default().push((f, s));
        }
    }

    let mut min_distance = f64::INFINITY;
    for fa in 0..a.faces.len() {
        let pa = a.face_points(fa);
        let centroid = (pa[0] + pa[1] + pa[2]) / 3.0;
        let base = key_of(&centroid);
        let mut seen: HashSet<(usize, i64)> = HashSet::new();
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                for dz in -1..=1i64 {
                    for dt in -1..=1i64 {
                        let key = (base.0 + dx, base.1 + dy, base.2 + dz, base.3 + dt);
                        if let Some(candidates) = grid.get(&key) {
                            for &(fb, shift) in candidates {
                                if !seen.insert((fb, shift.round() as i64)) {
                                    continue;
                                }
                                let mut pb = b.face_points(fb);
                                for p in pb.iter_mut() {
                                    p[3] += shift;
                                }
                                let d = triangle_triangle_dist4(&pa, &pb);
                                min_distance = min_distance.min(d);
                            }
                        }
                    }
                }
            }
        }
        if min_distance <= 0.0 {
            break;
        }
    }

    Ok(IntersectionReport {
        intersects: min_distance <= tolerance,
        min_distance,
        tolerance,
    })
}

/// Contained vertical fibers and horizontal great circles, with their
/// required companions.
#[derive(Debug, Clone, Default)]
pub struct CompanionReport {
    /// Base points of fully contained vertical fibers.
    pub fibers: Vec<Vec3>,
    /// Fibers whose antipodal partner is missing.
    pub unpaired_fibers: Vec<Vec3>,
    /// (axis, height) of contained horizontal great circles.
    pub circles: Vec<(Vec3, f64)>,
    /// Circles whose half-circumference companion is missing.
    pub uncompanioned_circles: Vec<(Vec3, f64)>,
}

impl CompanionReport {
    pub fn violations(&self) -> usize {
        self.unpaired_fibers.len() + self.uncompanioned_circles.len()
    }
}

/// Detect vertical fibers and horizontal great circles contained in a
/// quotient mesh (via edge chains within `tol`), and check the antipodal
/// fiber and half-period circle companions.
pub fn geodesic_companions(mesh: &SurfaceMesh, tol: f64) -> Result<CompanionReport> {
    let circ = mesh.quotient_circumference.ok_or_else(|| {
        Error::InputDomain("companion detection needs a quotient mesh".into())
    })?;

    let mut report = CompanionReport::default();

    // Vertical fibers: vertical edges grouped by base point; a fiber is
    // contained when the group's total vertical length fills the circle.
    let mut fiber_len: HashMap<(i64, i64, i64), (Vec3, f64)> = HashMap::new();
    let quant = (tol * 10.0).max(1e-7);
    for (&(va, vb), _) in mesh.edge_map().iter() {
        let pa = mesh.vertices[va].base.coords();
        let pb = mesh.vertices[vb].base.coords();
        if (pa - pb).norm() < tol {
            let dt = {
                let raw = (mesh.vertices[va].height - mesh.vertices[vb].height).abs();
                raw.min(circ - raw)
            };
            let key = (
                (pa.x / quant).round() as i64,
                (pa.y / quant).round() as i64,
                (pa.z / quant).round() as i64,
            );
            let entry = fiber_len.entry(key).or_insert((pa, 0.0));
            entry.1 += dt;
        }
    }
    let fibers: Vec<Vec3> = fiber_len
        .values()
        .filter(|(_, len)| *len > 0.9 * circ)
        .map(|(p, _)| *p)
        .collect();
    for p in &fibers {
        let paired = fibers.iter().any(|q| (q + p).norm() < 20.0 * tol);
        if !paired {
            report.unpaired_fibers.push(*p);
        }
    }
    report.fibers = fibers;

    // Horizontal great circles: horizontal edges bucketed by height; each
    // bucket's connected closed chains are tested for planarity through the
    // origin and full angular coverage.
    let mut height_buckets: HashMap<i64, Vec<(usize, usize)>> = HashMap::new();
    let hquant = tol.max(1e-9);
    for (&(va, vb), faces) in mesh.edge_map().iter() {
        if faces.is_empty() {
            continue;
        }
        let ta = mesh.vertices[va].height;
        let tb = mesh.vertices[vb].height;
        let dt = {
            let raw = (ta - tb).abs();
            raw.min(circ - raw)
        };
        let ds = (mesh.vertices[va].base.coords() - mesh.vertices[vb].base.coords()).norm();
        if dt < tol && ds > tol {
            let key = (ta / hquant).round() as i64;
            height_buckets.entry(key).or_default().push((va, vb));
        }
    }

    for (hkey, edges) in height_buckets {
        // Chains: degree-2 subgraph components.
        let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
        for &(a, b) in &edges {
            adj.entry(a).or_default().push(b);
            adj.entry(b).or_default().push(a);
        }
        let mut visited: HashSet<usize> = HashSet::new();
        for &start in adj.keys() {
            if visited.contains(&start) || adj[&start].len() != 2 {
                continue;
            }
            // Walk the closed chain.
            let mut chain = vec![start];
            visited.insert(start);
            let mut prev = start;
            let mut cur = adj[&start][0];
            let mut closed = false;
            while !visited.contains(&cur) {
                if adj[&cur].len() != 2 {
                    break;
                }
                visited.insert(cur);
                chain.push(cur);
                let next = if adj[&cur][0] == prev {
                    adj[&cur][1]
                } else {
                    adj[&cur][0]
                };
                prev = cur;
                cur = next;
            }
            if cur == start && chain.len() >= 6 {
                closed = true;
            }
            if !closed {
                continue;
            }
            // Planar through the origin: the common normal of consecutive
            // cross products, with small residual.
            let pts: Vec<Vec3> = chain
                .iter()
                .map(|&v| mesh.vertices[v].base.coords())
                .collect();
            let mut axis = Vec3::zeros();
            for i in 0..pts.len() {
                let c = pts[i].cross(&pts[(i + 1) % pts.len()]);
                if axis.norm() < 1e-12 {
                    axis = c;
                } else if c.dot(&axis) > 0.0 {
                    axis += c;
                } else {
                    axis -= c;
                }
            }
            if axis.norm() < 1e-9 {
                continue;
            }
            let axis = axis.normalize();
            let planar = pts.iter().all(|p| p.dot(&axis).abs() < 20.0 * tol);
            // Full coverage: total arc close to the circle length.
            let total_arc: f64 = (0..pts.len())
                .map(|i| crate::geom::acos_clamped(pts[i].dot(&pts[(i + 1) % pts.len()]).min(1.0)))
                .sum();
            if planar && (total_arc - 2.0 * std::f64::consts::PI).abs() < 0.1 {
                let height = hkey as f64 * hquant;
                report.circles.push((axis, height));
            }
        }
    }

    let circles = report.circles.clone();
    for (axis, h) in &circles {
        let partner_h = (h + circ / 2.0).rem_euclid(circ);
        let found = circles.iter().any(|(a2, h2)| {
            let axis_match = (a2 - axis).norm() < 1e-3 || (a2 + axis).norm() < 1e-3;
            let dh = (h2 - partner_h).abs();
            axis_match && (dh < 50.0 * tol || (circ - dh) < 50.0 * tol)
        });
        if !found {
            report.uncompanioned_circles.push((*axis, *h));
        }
    }

    Ok(report)
}

/// Summary report for an assembled mesh.
#[derive(Debug, Clone)]
pub struct TopologyReport {
    pub chi: i64,
    pub orientable: bool,
    /// Orientable genus `1 - chi/2`, or one-sided genus `2 - chi`.
    pub genus: i64,
    pub separates: Option<bool>,
    pub ph_zeros: Vec<(usize, i64)>,
    pub ph_sum: Option<i64>,
    pub ph_degenerate: bool,
    pub intersects: Option<bool>,
}

/// Run the full predicate suite on one mesh.
pub fn analyze(mesh: &SurfaceMesh, fiber_samples: usize) -> Result<TopologyReport> {
    let chi = euler_characteristic(mesh)?;
    let orientable = orientability(mesh)?;
    let genus = if orientable { 1 - chi / 2 } else { 2 - chi };
    let separates = if mesh.quotient_circumference.is_some() && mesh.is_watertight() {
        Some(separation_parity(mesh, fiber_samples)?)
    } else {
        None
    };
    let audit = poincare_hopf_audit(mesh)?;
    Ok(TopologyReport {
        chi,
        orientable,
        genus,
        separates,
        ph_zeros: audit.zeros.clone(),
        ph_sum: if audit.degenerate {
            None
        } else {
            Some(audit.index_sum)
        },
        ph_degenerate: audit.degenerate,
        intersects: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::ProdPoint;
    use crate::surfaces::{cylinder_mesh, helicoid_mesh, slice_mesh};
    use std::f64::consts::PI;

    #[test]
    fn euler_of_reference_meshes() {
        assert_eq!(euler_characteristic(&slice_mesh(0.0, 8).unwrap()).unwrap(), 2);
        assert_eq!(
            euler_characteristic(&cylinder_mesh(&Vec3::z(), 1.0, 6).unwrap()).unwrap(),
            0
        );
        assert_eq!(
            euler_characteristic(&helicoid_mesh(2.0 * PI, 1.0, 6).unwrap()).unwrap(),
            0
        );
    }

    #[test]
    fn double_cover_doubles_chi_of_klein_bottle() {
        let klein = helicoid_mesh(4.0 * PI, 1.0, 6).unwrap();
        assert!(!orientability(&klein).unwrap());
        let cover = orientation_double_cover(&klein).unwrap();
        assert!(orientability(&cover).unwrap());
        assert_eq!(euler_characteristic(&cover).unwrap(), 0);
        assert_eq!(cover.faces.len(), 2 * klein.faces.len());
        assert!(cover.is_watertight());
    }

    #[test]
    fn double_cover_of_orientable_is_two_copies() {
        let torus = cylinder_mesh(&Vec3::z(), 0.5, 6).unwrap();
        let cover = orientation_double_cover(&torus).unwrap();
        assert_eq!(cover.vertices.len(), 2 * torus.vertices.len());
        assert_eq!(euler_characteristic(&cover).unwrap(), 0);
    }

    #[test]
    fn constant_field_projection_has_index_sum_two() {
        let sphere = slice_mesh(0.0, 10).unwrap();
        let oriented = oriented_copy(&sphere).unwrap();
        // Project a constant ambient direction onto each tangent plane: a
        // source and a sink at the two poles of the direction.
        let field: Vec<Vec4> = oriented
            .vertices
            .iter()
            .map(|v: &ProdPoint| {
                let p = v.base.coords();
                let e = Vec3::x();
                let t = e - p * e.dot(&p);
                Vec4::new(t.x, t.y, t.z, 0.0)
            })
            .collect();
        let audit = audit_oriented(&oriented, Some(&field)).unwrap();
        assert_eq!(audit.index_sum, 2);
        assert_eq!(audit.zeros.len(), 2);
    }

    #[test]
    fn helicoid_field_is_nowhere_zero() {
        let mesh = helicoid_mesh(2.0 * PI, 1.0, 8).unwrap();
        let audit = poincare_hopf_audit(&mesh).unwrap();
        assert!(!audit.degenerate);
        assert_eq!(audit.index_sum, 0);
        assert!(audit.zeros.is_empty());
    }

    #[test]
    fn slice_field_is_degenerate() {
        let mesh = slice_mesh(0.5, 8).unwrap();
        let audit = poincare_hopf_audit(&mesh).unwrap();
        assert!(audit.degenerate);
    }

    #[test]
    fn separation_of_reference_surfaces() {
        // The flat torus over a great circle bounds two solid tori.
        let cyl = cylinder_mesh(&Vec3::z(), 0.5, 8).unwrap();
        assert!(separation_parity(&cyl, 32).unwrap());

        // A slice crosses every fiber once: parity odd.
        let mut slice = slice_mesh(0.7, 8).unwrap();
        slice.quotient_circumference = Some(2.0 * PI);
        assert!(!separation_parity(&slice, 16).unwrap());

        // Helicoid torus: orientable, so it must separate.
        let hel = helicoid_mesh(PI, 0.5, 8).unwrap();
        assert!(orientability(&hel).unwrap());
        assert!(separation_parity(&hel, 16).unwrap());

        // Klein-bottle helicoid: one-sided, must not separate.
        let klein = helicoid_mesh(2.0 * PI, 0.5, 8).unwrap();
        assert!(!orientability(&klein).unwrap());
        assert!(!separation_parity(&klein, 16).unwrap());
    }

    #[test]
    fn intersection_of_slices_and_crossing_surfaces() {
        let mut s0 = slice_mesh(0.0, 8).unwrap();
        let mut s1 = slice_mesh(PI / 4.0, 8).unwrap();
        s0.quotient_circumference = Some(2.0 * PI);
        s1.quotient_circumference = Some(2.0 * PI);
        let rep = intersection_check(&s0, &s1).unwrap();
        assert!(!rep.intersects);
        assert!(rep.min_distance > 0.5);

        let hel = helicoid_mesh(2.0 * PI, 1.0, 8).unwrap();
        let cyl = cylinder_mesh(&Vec3::z(), 1.0, 8).unwrap();
        let rep = intersection_check(&hel, &cyl).unwrap();
        assert!(rep.intersects, "min distance {}", rep.min_distance);
    }

    #[test]
    fn helicoid_companions() {
        let r = 1.0;
        let mesh = helicoid_mesh(2.0 * PI * r, r, 8).unwrap();
        let rep = geodesic_companions(&mesh, 1e-6).unwrap();
        // Both pole fibers, each the other's antipode.
        assert_eq!(rep.fibers.len(), 2);
        assert!(rep.unpaired_fibers.is_empty());
        // Every grid row is a ruled horizontal great circle; companions at
        // half the circumference exist because the row count is even.
        assert!(!rep.circles.is_empty());
        assert!(rep.uncompanioned_circles.is_empty());
    }

    #[test]
    fn slice_has_no_fibers() {
        let mut mesh = slice_mesh(0.3, 6).unwrap();
        mesh.quotient_circumference = Some(2.0 * PI);
        let rep = geodesic_companions(&mesh, 1e-6).unwrap();
        assert!(rep.fibers.is_empty());
        assert_eq!(rep.violations(), 0);
    }
}

//! Polygonal meshes made of star-shaped cells.
//!
//! A mesh is the triplet of cells, faces and cell centers. Faces are derived
//! from the cell loops by edge matching, so a geometric side that carries a
//! hanging node is simply two faces. Every cell stores the signed distances
//! from its center to its faces; these must all be strictly positive.

mod generators;
mod io;
mod quality;

use std::collections::HashMap;

use nalgebra::Vector2;
use thiserror::Error;

pub use generators::{gen_cartesian, gen_hexagonal, gen_kershaw, gen_locally_refined, MeshFamily};
pub use io::{read_mesh, write_mesh, write_mesh_to};
pub use quality::{estimate_rho, regularity_gamma};

/// A point (or vector) of the plane.
pub type Point = Vector2<f64>;

/// Relative tolerance used by the degeneracy checks (relative to `h_K`).
pub const GEOM_TOL: f64 = 1e-12;

/// z-component of the cross product of two plane vectors.
#[inline]
pub fn cross(a: &Point, b: &Point) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Rotates a vector by -90 degrees; for an edge traversed counter-clockwise
/// this gives the outward direction.
#[inline]
pub fn rot_cw(v: &Point) -> Point {
    Point::new(v.y, -v.x)
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("cell {0} is not strictly star-shaped with respect to its center")]
    NotStarShaped(usize),
    #[error(
        "edge ({0}, {1}) is shared by more than two cells or traversed twice in the same direction"
    )]
    NonManifoldFace(usize, usize),
    #[error("cell {0} is degenerate (area below tolerance)")]
    DegenerateCell(usize),
    #[error("cell {cell}: {reason}")]
    InvalidCell { cell: usize, reason: String },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported mesh parameters: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One side of a face: the owning cell, the face position in the cell loop,
/// and the signed distance from the cell center to the face.
#[derive(Clone, Debug)]
pub struct FaceSide {
    pub cell: usize,
    pub local: usize,
    pub distance: f64,
}

#[derive(Clone, Debug)]
pub struct Face {
    /// Endpoints, ordered counter-clockwise with respect to the first owner.
    pub vertices: [usize; 2],
    pub centroid: Point,
    pub length: f64,
    /// Unit normal pointing out of the first owner.
    pub normal: Point,
    /// One side for boundary faces, two for interior faces.
    pub sides: Vec<FaceSide>,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.sides.len() == 1
    }

    /// Outward unit normal with respect to side `k` (0 or 1).
    pub fn normal_for_side(&self, k: usize) -> Point {
        if k == 0 {
            self.normal
        } else {
            -self.normal
        }
    }

    fn side_of(&self, cell: usize) -> Option<usize> {
        self.sides.iter().position(|s| s.cell == cell)
    }
}

#[derive(Clone, Debug)]
pub struct PolyCell {
    /// Counter-clockwise boundary loop.
    pub vertices: Vec<usize>,
    /// `faces[k]` joins `vertices[k]` and `vertices[k + 1]`.
    pub faces: Vec<usize>,
    /// Star center `x_K`.
    pub center: Point,
    pub diameter: f64,
    pub area: f64,
    pub centroid: Point,
    /// Outward normal orientation of each local face relative to the stored
    /// face normal (`+1` when this cell is the first owner).
    pub face_signs: Vec<f64>,
    /// Signed distances `d_{K,σ}` in loop order.
    pub face_distances: Vec<f64>,
}

impl PolyCell {
    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }
}

/// The half-diamond `D_{K,σ}`: triangle with apex `x_K` and base `σ`.
#[derive(Clone, Copy, Debug)]
pub struct Pyramid {
    pub apex: Point,
    /// Base endpoints in counter-clockwise order of the cell.
    pub a: Point,
    pub b: Point,
    pub area: f64,
    /// Outward unit normals on the two internal faces `[x_K, a]` and `[b, x_K]`.
    pub internal_normals: [Point; 2],
}

impl Pyramid {
    fn new(apex: Point, a: Point, b: Point) -> Self {
        let ea = a - apex;
        let eb = apex - b;
        Pyramid {
            apex,
            a,
            b,
            area: 0.5 * cross(&(a - apex), &(b - apex)),
            internal_normals: [rot_cw(&ea).normalize(), rot_cw(&eb).normalize()],
        }
    }

    /// Barycentric coordinates with respect to `(apex, a, b)`.
    pub fn barycentric(&self, x: &Point) -> [f64; 3] {
        let det = cross(&(self.a - self.apex), &(self.b - self.apex));
        let la = cross(&(x - self.apex), &(self.b - self.apex)) / det;
        let lb = cross(&(self.a - self.apex), &(x - self.apex)) / det;
        [1.0 - la - lb, la, lb]
    }

    /// Closed-triangle membership test with a small relative slack.
    pub fn contains(&self, x: &Point) -> bool {
        self.barycentric(x).iter().all(|&l| l >= -1e-12)
    }

    /// Point of the triangle from barycentric coordinates on `(apex, a, b)`.
    pub fn map(&self, la: f64, lb: f64) -> Point {
        self.apex + (self.a - self.apex) * la + (self.b - self.apex) * lb
    }

    pub fn perimeter(&self) -> f64 {
        (self.a - self.apex).norm() + (self.b - self.a).norm() + (self.apex - self.b).norm()
    }

    pub fn inradius(&self) -> f64 {
        2.0 * self.area / self.perimeter()
    }
}

#[derive(Clone, Debug)]
pub struct PolytopalMesh {
    pub dim: usize,
    pub vertices: Vec<Point>,
    pub cells: Vec<PolyCell>,
    pub faces: Vec<Face>,
    pub h_max: f64,
}

impl PolytopalMesh {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn n_interior_faces(&self) -> usize {
        self.faces.iter().filter(|f| !f.is_boundary()).count()
    }

    pub fn interior_faces(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.faces.len()).filter(|&f| !self.faces[f].is_boundary())
    }

    /// Outward unit normal `n_{K,σ}` for the `k`-th face of cell `c`.
    pub fn face_normal(&self, c: usize, k: usize) -> Point {
        let cell = &self.cells[c];
        self.faces[cell.faces[k]].normal * cell.face_signs[k]
    }

    /// The pyramid `D_{K,σ}` for the `k`-th face of cell `c`.
    pub fn pyramid(&self, c: usize, k: usize) -> Pyramid {
        let cell = &self.cells[c];
        let n = cell.vertices.len();
        let a = self.vertices[cell.vertices[k]];
        let b = self.vertices[cell.vertices[(k + 1) % n]];
        Pyramid::new(cell.center, a, b)
    }

    pub fn pyramids(&self, c: usize) -> impl Iterator<Item = Pyramid> + '_ {
        (0..self.cells[c].n_faces()).map(move |k| self.pyramid(c, k))
    }

    /// The diamond `D_σ` as the list of its half-diamonds.
    pub fn diamond(&self, f: usize) -> Vec<Pyramid> {
        self.faces[f]
            .sides
            .iter()
            .map(|s| self.pyramid(s.cell, s.local))
            .collect()
    }

    /// First pyramid of cell `c` (in face order) containing `x`.
    pub fn locate_pyramid(&self, c: usize, x: &Point) -> Option<usize> {
        (0..self.cells[c].n_faces()).find(|&k| self.pyramid(c, k).contains(x))
    }

    /// First cell (in index order) whose closure contains `x`.
    pub fn locate_cell(&self, x: &Point) -> Option<usize> {
        (0..self.cells.len()).find(|&c| {
            let cell = &self.cells[c];
            if (x - cell.center).norm() > cell.diameter * (1.0 + 1e-12) {
                return false;
            }
            self.locate_pyramid(c, x).is_some()
        })
    }

    pub fn total_area(&self) -> f64 {
        self.cells.iter().map(|c| c.area).sum()
    }

    /// Applies `map` to every vertex and star center and rebuilds the
    /// geometry. Intended for affine maps (scaling, rigid motions).
    pub fn transformed(&self, map: impl Fn(&Point) -> Point) -> Result<PolytopalMesh, MeshError> {
        let vertices: Vec<Point> = self.vertices.iter().map(&map).collect();
        let loops: Vec<Vec<usize>> = self.cells.iter().map(|c| c.vertices.clone()).collect();
        let centers: Vec<Point> = self.cells.iter().map(|c| map(&c.center)).collect();
        build_mesh(vertices, loops, Some(&centers))
    }
}

fn shoelace(points: &[Point]) -> (f64, Point) {
    // Computed relative to the first vertex to limit cancellation.
    let o = points[0];
    let mut area2 = 0.0;
    let mut cx = Point::zeros();
    for k in 1..points.len().saturating_sub(1) {
        let p = points[k] - o;
        let q = points[k + 1] - o;
        let w = cross(&p, &q);
        area2 += w;
        cx += (p + q) * w;
    }
    let area = 0.5 * area2;
    let centroid = if area2 != 0.0 {
        o + cx / (3.0 * area2)
    } else {
        o
    };
    (area, centroid)
}

fn diameter(points: &[Point]) -> f64 {
    let mut h: f64 = 0.0;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            h = h.max((p - q).norm());
        }
    }
    h
}

/// Builds a mesh from vertex coordinates and counter-clockwise cell loops.
///
/// Faces are derived by matching edges; shared edges must coincide
/// endpoint-to-endpoint. Star centers default to the cell centroids.
pub fn build_mesh(
    vertices: Vec<Point>,
    cell_loops: Vec<Vec<usize>>,
    star_centers: Option<&[Point]>,
) -> Result<PolytopalMesh, MeshError> {
    if let Some(centers) = star_centers {
        if centers.len() != cell_loops.len() {
            return Err(MeshError::InvalidParameter(format!(
                "{} star centers for {} cells",
                centers.len(),
                cell_loops.len()
            )));
        }
    }

    let mut faces: Vec<Face> = Vec::new();
    let mut edge_to_face: HashMap<(usize, usize), usize> = HashMap::new();
    let mut cells = Vec::with_capacity(cell_loops.len());

    for (c, lp) in cell_loops.into_iter().enumerate() {
        let n = lp.len();
        if n < 3 {
            return Err(MeshError::InvalidCell {
                cell: c,
                reason: format!("loop has {n} vertices"),
            });
        }
        if let Some(&bad) = lp.iter().find(|&&v| v >= vertices.len()) {
            return Err(MeshError::InvalidCell {
                cell: c,
                reason: format!("vertex index {bad} out of range"),
            });
        }
        for k in 0..n {
            if lp[k] == lp[(k + 1) % n] {
                return Err(MeshError::InvalidCell {
                    cell: c,
                    reason: "repeated consecutive vertex".into(),
                });
            }
        }
        let pts: Vec<Point> = lp.iter().map(|&v| vertices[v]).collect();
        let h = diameter(&pts);
        let (area, centroid) = shoelace(&pts);
        if area <= GEOM_TOL * h * h {
            return Err(MeshError::DegenerateCell(c));
        }
        let center = star_centers.map_or(centroid, |s| s[c]);

        let mut face_ids = Vec::with_capacity(n);
        let mut signs = Vec::with_capacity(n);
        let mut dists = Vec::with_capacity(n);
        for k in 0..n {
            let (va, vb) = (lp[k], lp[(k + 1) % n]);
            let key = (va.min(vb), va.max(vb));
            let (fid, sign) = match edge_to_face.get(&key) {
                None => {
                    let pa = vertices[va];
                    let pb = vertices[vb];
                    let e = pb - pa;
                    let length = e.norm();
                    if length <= GEOM_TOL * h {
                        return Err(MeshError::DegenerateCell(c));
                    }
                    faces.push(Face {
                        vertices: [va, vb],
                        centroid: (pa + pb) * 0.5,
                        length,
                        normal: rot_cw(&e) / length,
                        sides: Vec::with_capacity(2),
                    });
                    let fid = faces.len() - 1;
                    edge_to_face.insert(key, fid);
                    (fid, 1.0)
                }
                Some(&fid) => {
                    let f = &faces[fid];
                    if f.sides.len() >= 2 || f.vertices != [vb, va] {
                        return Err(MeshError::NonManifoldFace(key.0, key.1));
                    }
                    (fid, -1.0)
                }
            };
            let face = &mut faces[fid];
            let d = (face.centroid - center).dot(&(face.normal * sign));
            if d <= GEOM_TOL * h {
                return Err(MeshError::NotStarShaped(c));
            }
            face.sides.push(FaceSide {
                cell: c,
                local: k,
                distance: d,
            });
            face_ids.push(fid);
            signs.push(sign);
            dists.push(d);
        }

        cells.push(PolyCell {
            vertices: lp,
            faces: face_ids,
            center,
            diameter: h,
            area,
            centroid,
            face_signs: signs,
            face_distances: dists,
        });
    }

    let h_max = cells.iter().map(|c| c.diameter).fold(0.0, f64::max);
    Ok(PolytopalMesh {
        dim: 2,
        vertices,
        cells,
        faces,
        h_max,
    })
}

impl Face {
    /// Signed distance `d_{K,σ}` from the center of `cell`.
    pub fn distance_for(&self, cell: usize) -> Option<f64> {
        self.side_of(cell).map(|k| self.sides[k].distance)
    }
}

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use super::{build_mesh, MeshError, Point, PolytopalMesh};

/// The mesh families used by the convergence studies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFamily {
    Cartesian,
    Hexagonal,
    Kershaw,
    LocallyRefined,
}

impl MeshFamily {
    pub const ALL: [MeshFamily; 4] = [
        MeshFamily::Cartesian,
        MeshFamily::Hexagonal,
        MeshFamily::Kershaw,
        MeshFamily::LocallyRefined,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MeshFamily::Cartesian => "cartesian",
            MeshFamily::Hexagonal => "hexagonal",
            MeshFamily::Kershaw => "kershaw",
            MeshFamily::LocallyRefined => "locref",
        }
    }

    /// Generates the member of resolution `n` (default Kershaw distortion 0.6).
    pub fn generate(&self, n: usize) -> Result<PolytopalMesh, MeshError> {
        match self {
            MeshFamily::Cartesian => gen_cartesian(n),
            MeshFamily::Hexagonal => gen_hexagonal(n),
            MeshFamily::Kershaw => gen_kershaw(n, 0.6),
            MeshFamily::LocallyRefined => gen_locally_refined(n),
        }
    }
}

impl fmt::Display for MeshFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MeshFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cartesian" => Ok(MeshFamily::Cartesian),
            "hexagonal" | "hexa" => Ok(MeshFamily::Hexagonal),
            "kershaw" => Ok(MeshFamily::Kershaw),
            "locref" | "locally-refined" => Ok(MeshFamily::LocallyRefined),
            other => Err(format!("unknown mesh family '{other}'")),
        }
    }
}

/// Vertex table keyed by integer lattice coordinates.
struct LatticeVertices {
    index: HashMap<(i64, i64), usize>,
    points: Vec<Point>,
    scale: (f64, f64),
}

impl LatticeVertices {
    fn new(sx: f64, sy: f64) -> Self {
        LatticeVertices {
            index: HashMap::new(),
            points: Vec::new(),
            scale: (sx, sy),
        }
    }

    fn id(&mut self, i: i64, j: i64) -> usize {
        let (sx, sy) = self.scale;
        let points = &mut self.points;
        *self.index.entry((i, j)).or_insert_with(|| {
            points.push(Point::new(i as f64 * sx, j as f64 * sy));
            points.len() - 1
        })
    }
}

/// Uniform `n × n` grid of the unit square.
pub fn gen_cartesian(n: usize) -> Result<PolytopalMesh, MeshError> {
    gen_kershaw_unchecked(n, 0.0)
}

/// Two-period triangle wave on [0, 1]: zero at multiples of 1/4, ±1 at the
/// odd multiples of 1/8.
fn zigzag(t: f64) -> f64 {
    let s = (2.0 * t).rem_euclid(1.0);
    if s < 0.25 {
        4.0 * s
    } else if s < 0.75 {
        2.0 - 4.0 * s
    } else {
        4.0 * s - 4.0
    }
}

/// Kershaw-type mesh: the `n × n` grid under the piecewise-affine map
/// `y ↦ y + (distortion / 8) · Z(x) · Z(y)`, with `Z` the two-period zig-zag.
/// Vertical grid lines stay vertical, horizontal ones become zig-zags with
/// slopes up to `distortion`; cell heights stay within `(1 ± distortion)/n`.
pub fn gen_kershaw(n: usize, distortion: f64) -> Result<PolytopalMesh, MeshError> {
    if !(0.0..1.0).contains(&distortion) {
        return Err(MeshError::InvalidParameter(format!(
            "distortion {distortion} outside [0, 1)"
        )));
    }
    gen_kershaw_unchecked(n, distortion)
}

fn gen_kershaw_unchecked(n: usize, distortion: f64) -> Result<PolytopalMesh, MeshError> {
    if n == 0 {
        return Err(MeshError::InvalidParameter("n must be positive".into()));
    }
    let h = 1.0 / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let x = i as f64 * h;
            let y = j as f64 * h;
            let y = if distortion > 0.0 {
                y + distortion / 8.0 * zigzag(x) * zigzag(y)
            } else {
                y
            };
            vertices.push(Point::new(x, y));
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut loops = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            loops.push(vec![id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    build_mesh(vertices, loops, None)
}

/// Clips a convex polygon (lattice coordinates) to the box `[0, w] × [0, h]`.
fn clip_to_box(poly: &[(i64, i64)], w: i64, h: i64) -> Vec<(i64, i64)> {
    // Each half-plane is `a·x + b·y + c >= 0`.
    let planes = [(1, 0, 0), (-1, 0, w), (0, 1, 0), (0, -1, h)];
    let mut out: Vec<(i64, i64)> = poly.to_vec();
    for &(a, b, c) in &planes {
        if out.is_empty() {
            break;
        }
        let inp = std::mem::take(&mut out);
        let side = |p: (i64, i64)| a * p.0 + b * p.1 + c;
        for k in 0..inp.len() {
            let p = inp[k];
            let q = inp[(k + 1) % inp.len()];
            let (sp, sq) = (side(p), side(q));
            if sp >= 0 {
                out.push(p);
            }
            if (sp > 0 && sq < 0) || (sp < 0 && sq > 0) {
                // Intersections of hexagon edges with the box lines fall on
                // lattice points; the division is exact.
                let t_num = sp;
                let t_den = sp - sq;
                let x = p.0 + (q.0 - p.0) * t_num / t_den;
                let y = p.1 + (q.1 - p.1) * t_num / t_den;
                out.push((x, y));
            }
        }
        out.dedup();
        if out.len() > 1 && out.first() == out.last() {
            out.pop();
        }
    }
    out
}

fn lattice_area2(poly: &[(i64, i64)]) -> i64 {
    let n = poly.len();
    (0..n)
        .map(|k| {
            let p = poly[k];
            let q = poly[(k + 1) % n];
            p.0 * q.1 - q.0 * p.1
        })
        .sum()
}

/// Mostly hexagonal mesh of the unit square.
///
/// Pointy-top hexagons are laid out in `m ≈ 2n/√3` rows of horizontal pitch
/// `1/n`; even rows are centred on `x = 0`, odd rows are shifted by half a
/// pitch. The tiling is clipped to the square through hexagon centres, so
/// boundary cells are half hexagons (pentagons) or quadrilaterals.
pub fn gen_hexagonal(n: usize) -> Result<PolytopalMesh, MeshError> {
    if n < 2 {
        return Err(MeshError::InvalidParameter(
            "hexagonal meshes need n >= 2".into(),
        ));
    }
    let m = ((2.0 * n as f64 / 3f64.sqrt()).round() as usize).max(2);
    // Lattice units: x in half pitches, y in thirds of the row spacing.
    let w = 2 * n as i64;
    let h = 3 * m as i64;
    let mut lattice = LatticeVertices::new(1.0 / w as f64, 1.0 / h as f64);
    let mut loops = Vec::new();
    for j in 0..=m as i64 {
        let cy = 3 * j;
        let (start, count) = if j % 2 == 0 {
            (0, n as i64 + 1)
        } else {
            (1, n as i64)
        };
        for i in 0..count {
            let cx = start + 2 * i;
            let hex = [
                (cx + 1, cy - 1),
                (cx + 1, cy + 1),
                (cx, cy + 2),
                (cx - 1, cy + 1),
                (cx - 1, cy - 1),
                (cx, cy - 2),
            ];
            let clipped = clip_to_box(&hex, w, h);
            if clipped.len() < 3 || lattice_area2(&clipped) <= 0 {
                continue;
            }
            loops.push(
                clipped
                    .iter()
                    .map(|&(x, y)| lattice.id(x, y))
                    .collect::<Vec<_>>(),
            );
        }
    }
    build_mesh(lattice.points, loops, None)
}

/// Uniform `n × n` grid whose lower-left quadrant `(0, 1/2)²` is refined
/// once (each cell split in 2 × 2). Coarse cells along the refinement
/// boundary carry a hanging node, i.e. two faces on that side.
pub fn gen_locally_refined(n: usize) -> Result<PolytopalMesh, MeshError> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(MeshError::InvalidParameter(
            "locally refined meshes need a positive even n".into(),
        ));
    }
    // Lattice in units of half a coarse cell.
    let fine = 2 * n as i64;
    let mut lattice = LatticeVertices::new(1.0 / fine as f64, 1.0 / fine as f64);
    let half = n as i64 / 2;
    let mut loops = Vec::new();
    for j in 0..n as i64 {
        for i in 0..n as i64 {
            let (x0, y0) = (2 * i, 2 * j);
            if i < half && j < half {
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    let (a, b) = (x0 + dx, y0 + dy);
                    loops.push(vec![
                        lattice.id(a, b),
                        lattice.id(a + 1, b),
                        lattice.id(a + 1, b + 1),
                        lattice.id(a, b + 1),
                    ]);
                }
                continue;
            }
            let mut lp = Vec::with_capacity(5);
            lp.push(lattice.id(x0, y0));
            // Bottom side split when the cell sits just above the fine quadrant.
            if j == half && i < half {
                lp.push(lattice.id(x0 + 1, y0));
            }
            lp.push(lattice.id(x0 + 2, y0));
            lp.push(lattice.id(x0 + 2, y0 + 2));
            lp.push(lattice.id(x0, y0 + 2));
            // Left side split when the cell sits just right of the fine quadrant.
            if i == half && j < half {
                lp.push(lattice.id(x0, y0 + 1));
            }
            loops.push(lp);
        }
    }
    build_mesh(lattice.points, loops, None)
}

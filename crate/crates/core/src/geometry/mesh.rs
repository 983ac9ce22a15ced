use std::collections::HashMap;
use std::io::{BufRead, Write};

use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use super::pore::{polygon_area, PoreShape};
use crate::scalar::Real;
use crate::GeometryError;

/// Per-vertex boundary tag.
///
/// Corner vertices belong to the face that starts at them when walking the outer
/// square counterclockwise (bottom, right, top, left).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Marker {
    Interior,
    Bottom,
    Right,
    Top,
    Left,
    Pore,
}

impl Marker {
    pub fn code(self) -> u8 {
        match self {
            Marker::Interior => 0,
            Marker::Bottom => 1,
            Marker::Right => 2,
            Marker::Top => 3,
            Marker::Left => 4,
            Marker::Pore => 5,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => Marker::Interior,
            1 => Marker::Bottom,
            2 => Marker::Right,
            3 => Marker::Top,
            4 => Marker::Left,
            5 => Marker::Pore,
            _ => return None,
        })
    }

    /// Index of the outer face (0 bottom, 1 right, 2 top, 3 left).
    pub fn face(self) -> Option<usize> {
        match self {
            Marker::Bottom => Some(0),
            Marker::Right => Some(1),
            Marker::Top => Some(2),
            Marker::Left => Some(3),
            _ => None,
        }
    }

    pub fn is_outer(self) -> bool {
        self.face().is_some()
    }
}

/// Triangulated material domain of a rectangular array of pore cells.
///
/// The lower-left corner of the domain is the origin; cell `(i, j)` (column `i`, row `j`)
/// has its pore centred at `((i + ½) L0, (j + ½) L0)`.
#[derive(Clone, Debug)]
pub struct Mesh<T> {
    pub vertices: Vec<[T; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub markers: Vec<Marker>,
    /// Pores along x and along y.
    pub pores: [usize; 2],
    pub cell_side: T,
}

/// Mesh resolution knobs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MeshResolution {
    /// Vertices on each pore polygon (multiple of 4).
    pub pore: usize,
    /// Minimum number of elements along a cell side.
    pub min_mesh: usize,
}

impl MeshResolution {
    pub const fn new(pore: usize, min_mesh: usize) -> Self {
        Self { pore, min_mesh }
    }
}

impl<T: Real> Mesh<T> {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.vertices.len()
    }

    pub fn width(&self) -> T {
        self.cell_side * T::lit(self.pores[0] as f64)
    }

    pub fn height(&self) -> T {
        self.cell_side * T::lit(self.pores[1] as f64)
    }

    pub fn signed_area(&self, t: usize) -> T {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        T::lit(0.5) * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    pub fn material_area(&self) -> T {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    /// Outer-boundary vertices in increasing index order.
    pub fn outer_boundary_vertices(&self) -> Vec<usize> {
        (0..self.vertices.len()).filter(|&v| self.markers[v].is_outer()).collect()
    }

    /// Longest triangle edge.
    pub fn max_edge_length(&self) -> T {
        let mut h = T::zero();
        for tri in &self.triangles {
            for k in 0..3 {
                let p = self.vertices[tri[k]];
                let q = self.vertices[tri[(k + 1) % 3]];
                h = h.max(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt());
            }
        }
        h
    }

    /// True when every vertex is reachable from vertex 0 through triangle edges.
    pub fn is_connected(&self) -> bool {
        let n = self.vertices.len();
        if n == 0 {
            return true;
        }
        let mut adj = vec![Vec::new(); n];
        for t in &self.triangles {
            for k in 0..3 {
                adj[t[k]].push(t[(k + 1) % 3]);
                adj[t[(k + 1) % 3]].push(t[k]);
            }
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Index of the vertex at `p` (within `tol`), if any.
    pub fn find_vertex(&self, p: [T; 2], tol: T) -> Option<usize> {
        self.vertices
            .iter()
            .position(|q| (q[0] - p[0]).abs() <= tol && (q[1] - p[1]).abs() <= tol)
    }

    /// For each vertex of `self` shifted by `offset`, the matching vertex of `other`.
    pub fn vertex_map_into(&self, other: &Mesh<T>, offset: [T; 2]) -> Option<Vec<usize>> {
        let tol = self.cell_side * T::lit(1e-9);
        let key = |p: [T; 2]| -> (i64, i64) {
            ((p[0] / tol).round().to_i64().unwrap_or(0), (p[1] / tol).round().to_i64().unwrap_or(0))
        };
        let mut index: HashMap<(i64, i64), usize> = HashMap::new();
        for (i, &q) in other.vertices.iter().enumerate() {
            index.insert(key(q), i);
        }
        self.vertices
            .iter()
            .map(|&p| {
                let shifted = [p[0] + offset[0], p[1] + offset[1]];
                index.get(&key(shifted)).copied().or_else(|| other.find_vertex(shifted, tol * T::lit(10.0)))
            })
            .collect()
    }

    /// Locates the triangle containing `p` and returns its vertices with barycentric weights.
    pub fn locate(&self, p: [T; 2]) -> Option<([usize; 3], [T; 3])> {
        let tol = T::lit(-1e-10);
        let mut best: Option<([usize; 3], [T; 3], T)> = None;
        for (t, tri) in self.triangles.iter().enumerate() {
            let area = self.signed_area(t);
            let [a, b, c] = *tri;
            let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
            let sub = |q: [T; 2], r: [T; 2]| {
                T::lit(0.5) * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
            };
            let w = [sub(pb, pc) / area, sub(pc, pa) / area, sub(pa, pb) / area];
            let worst = w[0].min(w[1]).min(w[2]);
            if worst >= tol {
                return Some((*tri, w));
            }
            if best.as_ref().map_or(true, |b| worst > b.2) {
                best = Some((*tri, w, worst));
            }
        }
        best.filter(|b| b.2 > T::lit(-1e-6)).map(|b| (b.0, b.1))
    }

    /// Plain-text form: header `nv nt`, then `x y marker` lines, then `i j k` lines.
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.vertices.len(), self.triangles.len())?;
        for (p, m) in self.vertices.iter().zip(&self.markers) {
            writeln!(w, "{} {} {}", p[0].to_f64_lossy(), p[1].to_f64_lossy(), m.code())?;
        }
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    /// Inverse of [`write_text`](Self::write_text); the cell side must be supplied.
    pub fn read_text<R: BufRead>(r: R, cell_side: T) -> Result<Self, GeometryError> {
        let mut lines = r.lines().enumerate();
        let mut next = || -> Result<(usize, String), GeometryError> {
            match lines.next() {
                Some((i, Ok(l))) => Ok((i + 1, l)),
                Some((i, Err(e))) => Err(GeometryError::Parse { line: i + 1, reason: e.to_string() }),
                None => Err(GeometryError::Parse { line: 0, reason: "unexpected end of file".into() }),
            }
        };
        let parse_err = |line: usize, what: &str| GeometryError::Parse { line, reason: what.to_string() };
        let (ln, header) = next()?;
        let counts: Vec<usize> =
            header.split_whitespace().map(|s| s.parse().map_err(|_| parse_err(ln, "bad header"))).collect::<Result<_, _>>()?;
        if counts.len() != 2 {
            return Err(parse_err(ln, "header must hold two counts"));
        }
        let mut vertices = Vec::with_capacity(counts[0]);
        let mut markers = Vec::with_capacity(counts[0]);
        for _ in 0..counts[0] {
            let (ln, l) = next()?;
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() != 3 {
                return Err(parse_err(ln, "vertex line needs x y marker"));
            }
            let x: f64 = f[0].parse().map_err(|_| parse_err(ln, "bad x"))?;
            let y: f64 = f[1].parse().map_err(|_| parse_err(ln, "bad y"))?;
            let m = f[2].parse::<u8>().ok().and_then(Marker::from_code).ok_or_else(|| parse_err(ln, "bad marker"))?;
            vertices.push([T::lit(x), T::lit(y)]);
            markers.push(m);
        }
        let mut triangles = Vec::with_capacity(counts[1]);
        for _ in 0..counts[1] {
            let (ln, l) = next()?;
            let f: Vec<usize> =
                l.split_whitespace().map(|s| s.parse().map_err(|_| parse_err(ln, "bad index"))).collect::<Result<_, _>>()?;
            if f.len() != 3 || f.iter().any(|&i| i >= counts[0]) {
                return Err(parse_err(ln, "triangle line needs three valid indices"));
            }
            triangles.push([f[0], f[1], f[2]]);
        }
        let max = vertices.iter().fold([T::zero(); 2], |m, p| [m[0].max(p[0]), m[1].max(p[1])]);
        let pores = [
            (max[0] / cell_side).round().to_usize().unwrap_or(0),
            (max[1] / cell_side).round().to_usize().unwrap_or(0),
        ];
        Ok(Self { vertices, triangles, markers, pores, cell_side })
    }
}

/// Meshes an `nx × ny` array of pore cells. `shapes` is row-major from the bottom row.
///
/// Each cell is meshed on one quadrant (a constrained Delaunay triangulation of a
/// structured grid plus the pore polygon vertices) and mirrored, so cells are exactly
/// symmetric about both of their midlines and neighbouring cells share edge vertices.
pub fn build_mesh<T: Real>(
    shapes: &[PoreShape<T>],
    pores: [usize; 2],
    res: MeshResolution,
) -> Result<Mesh<T>, GeometryError> {
    let [nx, ny] = pores;
    if nx == 0 || ny == 0 {
        return Err(GeometryError::Parameters("need at least one pore per side".into()));
    }
    if shapes.len() != nx * ny {
        return Err(GeometryError::Parameters(format!("expected {} pore shapes, got {}", nx * ny, shapes.len())));
    }
    if res.pore < 4 || res.pore % 4 != 0 {
        return Err(GeometryError::Parameters(format!("pore resolution {} must be a positive multiple of 4", res.pore)));
    }
    if res.min_mesh == 0 {
        return Err(GeometryError::Parameters("minimum mesh resolution must be positive".into()));
    }
    let cell_side = shapes[0].cell_side.to_f64_lossy();
    if shapes.iter().any(|s| (s.cell_side.to_f64_lossy() - cell_side).abs() > 1e-12 * cell_side) {
        return Err(GeometryError::Parameters("all pores must share one cell side".into()));
    }
    let q = res.min_mesh.div_ceil(2).max(1);
    let h = 0.5 * cell_side / q as f64;

    let mut builder = MeshBuilder::new(cell_side, h, nx, ny);
    for (pore_idx, shape) in shapes.iter().enumerate() {
        let quarter = mesh_quadrant(shape, q, h, res.pore).map_err(|reason| GeometryError::Meshing { pore: pore_idx, reason })?;
        let (ci, cj) = (pore_idx % nx, pore_idx / nx);
        builder.add_cell(ci, cj, &quarter);
    }
    let mesh: Mesh<T> = builder.finish();
    if let Some(t) = (0..mesh.triangles.len()).find(|&t| mesh.signed_area(t) <= T::zero()) {
        let [a, _, _] = mesh.triangles[t];
        let p = mesh.vertices[a];
        let cell = |x: T| (x.to_f64_lossy() / cell_side).floor().max(0.0) as usize;
        let pore = cell(p[1]) * nx + cell(p[0]);
        return Err(GeometryError::Meshing { pore, reason: format!("degenerate triangle {t}") });
    }
    Ok(mesh)
}

/// Meshes a square component of `pores_per_side²` cells.
pub fn build_component_mesh<T: Real>(
    shapes: &[PoreShape<T>],
    pores_per_side: usize,
    pore_resolution: usize,
    min_mesh_resolution: usize,
) -> Result<Mesh<T>, GeometryError> {
    build_mesh(shapes, [pores_per_side, pores_per_side], MeshResolution::new(pore_resolution, min_mesh_resolution))
}

/// Vertex kinds inside one quadrant mesh, in local cell coordinates.
#[derive(Clone, Copy, Debug)]
enum QuadVertex {
    /// Grid point `(i h, j h)`.
    Grid(i64, i64),
    /// Pore polygon vertex at local coordinates.
    Arc(f64, f64),
}

struct Quadrant {
    vertices: Vec<QuadVertex>,
    triangles: Vec<[usize; 3]>,
}

fn mesh_quadrant<T: Real>(shape: &PoreShape<T>, q: usize, h: f64, pore_res: usize) -> Result<Quadrant, String> {
    let half = 0.5 * shape.cell_side.to_f64_lossy();
    let r = |theta: f64| shape.radius(T::lit(theta)).to_f64_lossy();
    let m = pore_res / 4;
    let arc: Vec<(f64, f64)> = (0..=m)
        .map(|k| {
            if k == 0 {
                (r(0.0), 0.0)
            } else if k == m {
                (0.0, r(std::f64::consts::FRAC_PI_2))
            } else {
                let theta = std::f64::consts::FRAC_PI_2 * k as f64 / m as f64;
                let rad = r(theta);
                (rad * theta.cos(), rad * theta.sin())
            }
        })
        .collect();
    if arc.iter().any(|&(x, y)| x.hypot(y) <= 0.0 || x >= half || y >= half) {
        return Err("pore polygon leaves the cell".into());
    }
    // closed pore region of this quadrant: origin followed by the arc
    let mut region = vec![(0.0, 0.0)];
    region.extend_from_slice(&arc);
    let inside = |p: (f64, f64)| point_in_polygon(p, &region);
    let clearance = 0.3 * h;

    let mut vertices = Vec::new();
    let mut cdt = ConstrainedDelaunayTriangulation::<Point2<f64>>::new();
    let mut handles = Vec::new();
    let mut push = |cdt: &mut ConstrainedDelaunayTriangulation<Point2<f64>>, v: QuadVertex, p: (f64, f64)| {
        let hnd = cdt.insert(Point2::new(p.0, p.1)).map_err(|e| format!("insertion failed: {e:?}"))?;
        if hnd.index() == vertices.len() {
            vertices.push(v);
        }
        Ok::<_, String>(hnd)
    };
    for i in 0..=q as i64 {
        for j in 0..=q as i64 {
            let p = (i as f64 * h, j as f64 * h);
            let on_cell_edge = i == q as i64 || j == q as i64;
            if !on_cell_edge && (inside(p) || dist_to_polyline(p, &arc) < clearance) {
                continue;
            }
            push(&mut cdt, QuadVertex::Grid(i, j), p)?;
        }
    }
    for &p in &arc {
        handles.push(push(&mut cdt, QuadVertex::Arc(p.0, p.1), p)?);
    }
    for w in handles.windows(2) {
        if !cdt.can_add_constraint(w[0], w[1]) {
            return Err("pore edge crosses an existing constraint".into());
        }
        cdt.add_constraint(w[0], w[1]);
    }
    if cdt.num_vertices() != vertices.len() {
        return Err("duplicate vertices in quadrant".into());
    }
    let mut triangles = Vec::new();
    for face in cdt.inner_faces() {
        let vs = face.vertices();
        let pts: Vec<(f64, f64)> = vs.iter().map(|v| (v.position().x, v.position().y)).collect();
        let centroid = ((pts[0].0 + pts[1].0 + pts[2].0) / 3.0, (pts[0].1 + pts[1].1 + pts[2].1) / 3.0);
        if inside(centroid) {
            continue;
        }
        let area2 = (pts[1].0 - pts[0].0) * (pts[2].1 - pts[0].1) - (pts[2].0 - pts[0].0) * (pts[1].1 - pts[0].1);
        if area2.abs() <= 1e-14 * h * h {
            return Err("sliver triangle in quadrant".into());
        }
        let mut t = [vs[0].fix().index(), vs[1].fix().index(), vs[2].fix().index()];
        if area2 < 0.0 {
            t.swap(1, 2);
        }
        triangles.push(t);
    }
    Ok(Quadrant { vertices, triangles })
}

struct MeshBuilder {
    cell_side: f64,
    h: f64,
    q: i64,
    nx: usize,
    ny: usize,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    grid_index: HashMap<(i64, i64), usize>,
    arc_index: HashMap<(i64, i64), usize>,
    is_arc: Vec<bool>,
}

impl MeshBuilder {
    fn new(cell_side: f64, h: f64, nx: usize, ny: usize) -> Self {
        let q = (0.5 * cell_side / h).round() as i64;
        Self {
            cell_side,
            h,
            q,
            nx,
            ny,
            vertices: Vec::new(),
            triangles: Vec::new(),
            grid_index: HashMap::new(),
            arc_index: HashMap::new(),
            is_arc: Vec::new(),
        }
    }

    fn add_cell(&mut self, ci: usize, cj: usize, quarter: &Quadrant) {
        let center_i = (2 * ci as i64 + 1) * self.q;
        let center_j = (2 * cj as i64 + 1) * self.q;
        let cx = (ci as f64 + 0.5) * self.cell_side;
        let cy = (cj as f64 + 0.5) * self.cell_side;
        let quant = 1e-9 * self.cell_side;
        for (sx, sy) in [(1i64, 1i64), (-1, 1), (-1, -1), (1, -1)] {
            let ids: Vec<usize> = quarter
                .vertices
                .iter()
                .map(|v| match *v {
                    QuadVertex::Grid(i, j) => {
                        let key = (center_i + sx * i, center_j + sy * j);
                        let p = [key.0 as f64 * self.h, key.1 as f64 * self.h];
                        Self::intern(&mut self.grid_index, &mut self.vertices, &mut self.is_arc, key, p, false)
                    }
                    QuadVertex::Arc(x, y) => {
                        let p = [cx + sx as f64 * x, cy + sy as f64 * y];
                        let key = ((p[0] / quant).round() as i64, (p[1] / quant).round() as i64);
                        Self::intern(&mut self.arc_index, &mut self.vertices, &mut self.is_arc, key, p, true)
                    }
                })
                .collect();
            for t in &quarter.triangles {
                let mut tri = [ids[t[0]], ids[t[1]], ids[t[2]]];
                if sx * sy < 0 {
                    tri.swap(1, 2);
                }
                self.triangles.push(tri);
            }
        }
    }

    fn intern(
        index: &mut HashMap<(i64, i64), usize>,
        vertices: &mut Vec<[f64; 2]>,
        is_arc: &mut Vec<bool>,
        key: (i64, i64),
        p: [f64; 2],
        arc: bool,
    ) -> usize {
        *index.entry(key).or_insert_with(|| {
            vertices.push(p);
            is_arc.push(arc);
            vertices.len() - 1
        })
    }

    fn finish<T: Real>(self) -> Mesh<T> {
        let w = self.nx as i64 * 2 * self.q;
        let hgt = self.ny as i64 * 2 * self.q;
        let mut markers = vec![Marker::Interior; self.vertices.len()];
        for (&(i, j), &v) in &self.grid_index {
            markers[v] = if j == 0 && i < w {
                Marker::Bottom
            } else if i == w && j < hgt {
                Marker::Right
            } else if j == hgt && i > 0 {
                Marker::Top
            } else if i == 0 && j > 0 {
                Marker::Left
            } else {
                Marker::Interior
            };
        }
        for (v, &arc) in self.is_arc.iter().enumerate() {
            if arc {
                markers[v] = Marker::Pore;
            }
        }
        Mesh {
            vertices: self.vertices.iter().map(|p| [T::lit(p[0]), T::lit(p[1])]).collect(),
            triangles: self.triangles,
            markers,
            pores: [self.nx, self.ny],
            cell_side: T::lit(self.cell_side),
        }
    }
}

fn point_in_polygon(p: (f64, f64), poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > p.1) != (yj > p.1) && p.0 < (xj - xi) * (p.1 - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn dist_to_polyline(p: (f64, f64), line: &[(f64, f64)]) -> f64 {
    line.windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            let len2 = dx * dx + dy * dy;
            let t = if len2 > 0.0 { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
            (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Area of the pore polygon used by the mesher at a given resolution.
pub fn pore_polygon_area<T: Real>(shape: &PoreShape<T>, resolution: usize) -> T {
    polygon_area(&shape.polygon(resolution))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circle_mesh(n: usize, res: MeshResolution) -> Mesh<f64> {
        let shapes = vec![PoreShape::circular(); n * n];
        build_mesh(&shapes, [n, n], res).unwrap()
    }

    #[test]
    fn single_circular_cell_has_half_material() {
        let m = circle_mesh(1, MeshResolution::new(64, 8));
        let area = m.material_area();
        assert!((area - 0.5).abs() / 0.5 < 0.01, "area {area}");
        assert!((0..m.triangles.len()).all(|t| m.signed_area(t) > 0.0));
        assert!(m.is_connected());
        let mut used = vec![false; m.n_vertices()];
        m.triangles.iter().flatten().for_each(|&v| used[v] = true);
        assert!(used.iter().all(|&u| u));
        assert!(m.max_edge_length() <= 1.0 / 8.0 * std::f64::consts::SQRT_2 + 1e-12);
    }

    #[test]
    fn two_by_two_material_area_matches_polygon_oracle() {
        let m = circle_mesh(2, MeshResolution::new(64, 4));
        let expect = 4.0 - 4.0 * pore_polygon_area(&PoreShape::<f64>::circular(), 64);
        assert!((m.material_area() - expect).abs() < 1e-10);
        assert!((m.material_area() - 2.0).abs() / 2.0 < 0.01);
    }

    #[test]
    fn outer_vertices_lie_on_square_and_pore_vertices_on_curve() {
        let shape = PoreShape::<f64>::new(-0.2, 0.15, 1.0);
        let m: Mesh<f64> = build_mesh(&[shape; 4], [2, 2], MeshResolution::new(32, 6)).unwrap();
        for (p, mk) in m.vertices.iter().zip(&m.markers) {
            match mk {
                Marker::Bottom => assert_eq!(p[1], 0.0),
                Marker::Top => assert_eq!(p[1], 2.0),
                Marker::Left => assert_eq!(p[0], 0.0),
                Marker::Right => assert_eq!(p[0], 2.0),
                Marker::Pore => {
                    let cx = (p[0]).floor() + 0.5;
                    let cy = (p[1]).floor() + 0.5;
                    let (dx, dy) = (p[0] - cx, p[1] - cy);
                    let rr = shape.radius(dy.atan2(dx));
                    assert!((dx.hypot(dy) - rr).abs() < 1e-12);
                }
                Marker::Interior => {}
            }
        }
        let corners = [[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]];
        let expect = [Marker::Bottom, Marker::Right, Marker::Top, Marker::Left];
        for (c, e) in corners.iter().zip(expect) {
            let v = m.find_vertex(*c, 1e-12).unwrap();
            assert_eq!(m.markers[v], e);
        }
    }

    #[test]
    fn mesh_is_mirror_symmetric() {
        let m = build_mesh(&[PoreShape::new(0.1, -0.1, 1.0); 4], [2, 2], MeshResolution::new(16, 4)).unwrap();
        let mirrored = Mesh { vertices: m.vertices.iter().map(|p| [2.0 - p[0], p[1]]).collect(), ..m.clone() };
        let map = mirrored.vertex_map_into(&m, [0.0, 0.0]).expect("every mirrored vertex exists");
        let mut tris: Vec<[usize; 3]> = m.triangles.iter().map(|t| sorted(*t)).collect();
        tris.sort();
        let mut mapped: Vec<[usize; 3]> = m.triangles.iter().map(|t| sorted([map[t[0]], map[t[1]], map[t[2]]])).collect();
        mapped.sort();
        assert_eq!(tris, mapped);
    }

    fn sorted(mut t: [usize; 3]) -> [usize; 3] {
        t.sort();
        t
    }

    #[test]
    fn text_round_trip() {
        let m = circle_mesh(1, MeshResolution::new(16, 2));
        let mut buf = Vec::new();
        m.write_text(&mut buf).unwrap();
        let back = Mesh::<f64>::read_text(buf.as_slice(), 1.0).unwrap();
        assert_eq!(back.vertices, m.vertices);
        assert_eq!(back.triangles, m.triangles);
        assert_eq!(back.markers, m.markers);
        assert_eq!(back.pores, [1, 1]);
        let err = Mesh::<f64>::read_text(&buf[..buf.len() / 2], 1.0).unwrap_err();
        assert!(matches!(err, GeometryError::Parse { .. }));
    }

    #[test]
    fn bad_parameters_are_rejected() {
        let s = [PoreShape::<f64>::circular()];
        assert!(build_mesh(&s, [1, 1], MeshResolution::new(6, 2)).is_err());
        assert!(build_mesh(&s, [2, 1], MeshResolution::new(8, 2)).is_err());
        let invalid = [PoreShape::new(0.0, 0.9, 1.0)];
        assert!(matches!(
            build_mesh(&invalid, [1, 1], MeshResolution::new(16, 2)),
            Err(GeometryError::Meshing { pore: 0, .. })
        ));
    }
}

//! Surface meshes, boundary elements, quadrature and cell binning.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::lattice::{block_cells, CellIndex, GridSpec, Vec3};

/// Triangles with area at or below this are rejected, m^2.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = TriangleMesh { vertices, triangles };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (i, t) in self.triangles.iter().enumerate() {
            if let Some(&bad) = t.iter().find(|&&v| v >= n) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {i} references vertex {bad} but only {n} vertices exist"
                )));
            }
            let area = self.triangle_area(i);
            if !(area > MIN_TRIANGLE_AREA) {
                return Err(Error::DegenerateTriangle { index: i, area });
            }
        }
        Ok(())
    }

    pub fn triangle_area(&self, i: usize) -> f64 {
        let [a, b, c] = self.triangles[i];
        triangle_area(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| self.triangle_area(i)).sum()
    }

    pub fn max_edge(&self) -> f64 {
        self.triangles
            .iter()
            .flat_map(|t| {
                (0..3).map(move |k| (self.vertices[t[k]] - self.vertices[t[(k + 1) % 3]]).norm())
            })
            .fold(0.0, f64::max)
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bbox(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    /// Uniformly scale and move the mesh so its bounding box is centred on
    /// `center` with largest extent `extent`.
    pub fn fitted(&self, center: Vec3, extent: f64) -> TriangleMesh {
        let (lo, hi) = self.bbox();
        let mid = 0.5 * (lo + hi);
        let size = (hi - lo).max();
        let s = extent / size;
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| center + (v - mid) * s).collect(),
            triangles: self.triangles.clone(),
        }
    }

    pub fn translated(&self, offset: Vec3) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| v + offset).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Icosahedron refined `subdivisions` times by midpoint splitting with
    /// the new vertices projected onto the sphere. `20 * 4^subdivisions`
    /// triangles, wound counter-clockwise seen from outside.
    pub fn icosphere(center: Vec3, radius: f64, subdivisions: usize) -> TriangleMesh {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let mut vertices: Vec<Vec3> = [
            [-1.0, t, 0.0],
            [1.0, t, 0.0],
            [-1.0, -t, 0.0],
            [1.0, -t, 0.0],
            [0.0, -1.0, t],
            [0.0, 1.0, t],
            [0.0, -1.0, -t],
            [0.0, 1.0, -t],
            [t, 0.0, -1.0],
            [t, 0.0, 1.0],
            [-t, 0.0, -1.0],
            [-t, 0.0, 1.0],
        ]
        .iter()
        .map(|p| Vec3::from(*p).normalize())
        .collect();
        let mut triangles: Vec<[usize; 3]> = vec![
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
        for _ in 0..subdivisions {
            let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
            let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
                let key = (a.min(b), a.max(b));
                *midpoints.entry(key).or_insert_with(|| {
                    vertices.push((0.5 * (vertices[a] + vertices[b])).normalize());
                    vertices.len() - 1
                })
            };
            let mut next = Vec::with_capacity(triangles.len() * 4);
            for [a, b, c] in triangles {
                let ab = midpoint(a, b, &mut vertices);
                let bc = midpoint(b, c, &mut vertices);
                let ca = midpoint(c, a, &mut vertices);
                next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            triangles = next;
        }
        TriangleMesh {
            vertices: vertices.into_iter().map(|v| center + v * radius).collect(),
            triangles,
        }
    }

    /// Closed axis-aligned box with half extents `half`, two triangles per
    /// face, outward winding.
    pub fn cuboid(center: Vec3, half: Vec3) -> TriangleMesh {
        let corner = |i: usize| {
            Vec3::new(
                if i & 1 == 1 { half.x } else { -half.x },
                if i & 2 == 2 { half.y } else { -half.y },
                if i & 4 == 4 { half.z } else { -half.z },
            ) + center
        };
        let vertices = (0..8).map(corner).collect();
        let triangles = vec![
            [0, 2, 1],
            [1, 2, 3],
            [4, 5, 6],
            [5, 7, 6],
            [0, 1, 4],
            [1, 5, 4],
            [2, 6, 3],
            [3, 6, 7],
            [0, 4, 2],
            [2, 4, 6],
            [1, 3, 5],
            [3, 7, 5],
        ];
        TriangleMesh { vertices, triangles }
    }

    pub fn load_obj(path: impl AsRef<Path>) -> Result<TriangleMesh> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        parse_obj(BufReader::new(file), path)
    }

    pub fn write_obj(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        for v in &self.vertices {
            writeln!(out, "v {:.17e} {:.17e} {:.17e}", v.x, v.y, v.z).map_err(io)?;
        }
        for t in &self.triangles {
            writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn boundary_elements(&self) -> Vec<BoundaryElement> {
        self.triangles
            .iter()
            .enumerate()
            .map(|(id, t)| {
                BoundaryElement::new(
                    id,
                    *t,
                    [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]],
                )
            })
            .collect()
    }
}

/// Parse ASCII Wavefront OBJ. Only `v` and `f` records are used; polygon
/// faces are fan-triangulated and `v/vt/vn` references are accepted.
pub fn parse_obj(reader: impl BufRead, path: &Path) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let perr = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("v") => {
                let coords: Vec<f64> = fields
                    .take(3)
                    .map(|s| s.parse::<f64>().map_err(|e| perr(format!("bad coordinate {s:?}: {e}"))))
                    .collect::<Result<_>>()?;
                if coords.len() != 3 {
                    return Err(perr("vertex needs three coordinates".into()));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = fields
                    .map(|s| {
                        let head = s.split('/').next().unwrap_or("");
                        let raw: i64 = head
                            .parse()
                            .map_err(|e| perr(format!("bad face index {s:?}: {e}")))?;
                        let resolved = if raw > 0 {
                            raw - 1
                        } else if raw < 0 {
                            vertices.len() as i64 + raw
                        } else {
                            -1
                        };
                        if resolved < 0 || resolved as usize >= vertices.len() {
                            return Err(perr(format!("face index {raw} out of range")));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(perr(format!("face with {} vertices cannot be triangulated", idx.len())));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if triangles.is_empty() {
        return Err(Error::InvalidMesh(format!("{} contains no faces", path.display())));
    }
    TriangleMesh::new(vertices, triangles)
}

/// Result of [`remesh_to_grid`]: the refined mesh plus, per output
/// triangle, its source triangle and the barycentric coordinates of its
/// three corners within that source triangle.
#[derive(Clone, Debug)]
pub struct Remeshed {
    pub mesh: TriangleMesh,
    pub parent: Vec<usize>,
    pub barycentric: Vec<[[f64; 3]; 3]>,
}

impl Remeshed {
    /// Transfer per-triangle data from the source mesh: each child takes
    /// the value of its source triangle (barycentric interpolation of a
    /// per-element constant).
    pub fn transfer<T: Clone>(&self, data: &[T]) -> Vec<T> {
        self.parent.iter().map(|&p| data[p].clone()).collect()
    }
}

/// Subdivide until every edge is shorter than `h`.
///
/// Each pass marks all edges with length `>= h` and splits them at their
/// midpoints; a triangle with one, two or three marked edges is replaced by
/// two, three or four triangles. Decisions are per edge, so the result stays
/// conforming, and no vertex is moved.
pub fn remesh_to_grid(mesh: &TriangleMesh, h: f64) -> Result<Remeshed> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("remesh cell size must be positive, got {h}")));
    }
    let mut vertices = mesh.vertices.clone();
    let mut tris: Vec<[usize; 3]> = mesh.triangles.clone();
    let mut parent: Vec<usize> = (0..tris.len()).collect();
    // barycentric coordinates of every vertex inside each source triangle,
    // tracked per (triangle corner)
    let mut bary: Vec<[[f64; 3]; 3]> = vec![[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]; tris.len()];

    loop {
        let mut split: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &tris {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                if !split.contains_key(&key) && (vertices[a] - vertices[b]).norm() >= h {
                    vertices.push(0.5 * (vertices[a] + vertices[b]));
                    split.insert(key, vertices.len() - 1);
                }
            }
        }
        if split.is_empty() {
            break;
        }
        let mut next_tris = Vec::with_capacity(tris.len() * 2);
        let mut next_parent = Vec::with_capacity(tris.len() * 2);
        let mut next_bary = Vec::with_capacity(tris.len() * 2);
        for (ti, t) in tris.iter().enumerate() {
            let bc = &bary[ti];
            let mid_of = |k: usize| split.get(&(t[k].min(t[(k + 1) % 3]), t[k].max(t[(k + 1) % 3]))).copied();
            let mids: [Option<usize>; 3] = [mid_of(0), mid_of(1), mid_of(2)];
            // local corner: index into t (0..3) or midpoint of edge k (3 + k)
            let pos = |local: usize| -> usize {
                if local < 3 {
                    t[local]
                } else {
                    mids[local - 3].expect("midpoint exists")
                }
            };
            let bpos = |local: usize| -> [f64; 3] {
                if local < 3 {
                    bc[local]
                } else {
                    let k = local - 3;
                    let (p, q) = (bc[k], bc[(k + 1) % 3]);
                    [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1]), 0.5 * (p[2] + q[2])]
                }
            };
            let count = mids.iter().filter(|m| m.is_some()).count();
            let locals: Vec<[usize; 3]> = match count {
                0 => vec![[0, 1, 2]],
                1 => {
                    let k = mids.iter().position(|m| m.is_some()).unwrap();
                    let (a, b, c) = (k, (k + 1) % 3, (k + 2) % 3);
                    vec![[a, 3 + k, c], [3 + k, b, c]]
                }
                2 => {
                    let k_off = mids.iter().position(|m| m.is_none()).unwrap();
                    // edges k1 = k_off+1 and k2 = k_off+2 are split
                    let k1 = (k_off + 1) % 3;
                    let k2 = (k_off + 2) % 3;
                    // edge k1 joins corners k1 -> k1+1 = k2; edge k2 joins k2 -> k_off
                    let len = |k: usize| (vertices[t[k]] - vertices[t[(k + 1) % 3]]).norm();
                    let shared = k2; // corner common to both split edges
                    let m1 = 3 + k1;
                    let m2 = 3 + k2;
                    // diagonal from the midpoint of the longer split edge
                    if len(k1) >= len(k2) {
                        vec![[shared, m2, m1], [m1, m2, k_off], [k1, m1, k_off]]
                    } else {
                        vec![[shared, m2, m1], [m2, k_off, k1], [m1, m2, k1]]
                    }
                }
                _ => vec![[0, 3, 5], [3, 1, 4], [5, 4, 2], [3, 4, 5]],
            };
            for l in locals {
                next_tris.push([pos(l[0]), pos(l[1]), pos(l[2])]);
                next_parent.push(parent[ti]);
                next_bary.push([bpos(l[0]), bpos(l[1]), bpos(l[2])]);
            }
        }
        tris = next_tris;
        parent = next_parent;
        bary = next_bary;
    }
    let mesh = TriangleMesh::new(vertices, tris)?;
    Ok(Remeshed {
        mesh,
        parent,
        barycentric: bary,
    })
}

/// One flat triangle of the radiating surface.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryElement {
    pub id: usize,
    /// Indices of the corners in the owning mesh; used for adjacency.
    pub vertex_ids: [usize; 3],
    pub vertices: [Vec3; 3],
    pub center: Vec3,
    pub area: f64,
    pub normal: Vec3,
}

impl BoundaryElement {
    pub fn new(id: usize, vertex_ids: [usize; 3], vertices: [Vec3; 3]) -> Self {
        let cross = (vertices[1] - vertices[0]).cross(&(vertices[2] - vertices[0]));
        let norm = cross.norm();
        BoundaryElement {
            id,
            vertex_ids,
            vertices,
            center: (vertices[0] + vertices[1] + vertices[2]) / 3.0,
            area: 0.5 * norm,
            normal: cross / norm,
        }
    }

    pub fn is_adjacent(&self, other: &BoundaryElement) -> bool {
        self.vertex_ids.iter().any(|v| other.vertex_ids.contains(v))
    }

    pub fn max_edge(&self) -> f64 {
        (0..3)
            .map(|k| (self.vertices[k] - self.vertices[(k + 1) % 3]).norm())
            .fold(0.0, f64::max)
    }

    /// Point with barycentric coordinates `b`.
    #[inline]
    pub fn point_at(&self, b: [f64; 3]) -> Vec3 {
        self.vertices[0] * b[0] + self.vertices[1] * b[1] + self.vertices[2] * b[2]
    }
}

/// Points and weights on one triangle; weights sum to one (multiply by the
/// area to integrate).
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<Vec3>,
    pub weights: Vec<f64>,
}

const THREE_POINT: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

/// Gaussian rule on `element`: order 1 is the centroid rule, order 3 the
/// symmetric three-point rule.
pub fn quadrature_points(element: &BoundaryElement, order: usize) -> Result<QuadratureRule> {
    match order {
        1 => Ok(QuadratureRule {
            points: vec![element.center],
            weights: vec![1.0],
        }),
        3 => Ok(QuadratureRule {
            points: THREE_POINT.iter().map(|b| element.point_at(*b)).collect(),
            weights: vec![1.0 / 3.0; 3],
        }),
        other => Err(Error::UnsupportedOrder(other)),
    }
}

/// Composite three-point rule over `4^levels` congruent sub-triangles.
pub fn composite_rule(element: &BoundaryElement, levels: u32) -> QuadratureRule {
    let mut tris: Vec<[Vec3; 3]> = vec![element.vertices];
    for _ in 0..levels {
        tris = tris
            .into_iter()
            .flat_map(|[a, b, c]| {
                let (ab, bc, ca) = (0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a));
                [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
            })
            .collect();
    }
    let w = 1.0 / (3 * tris.len()) as f64;
    let mut points = Vec::with_capacity(3 * tris.len());
    for t in &tris {
        for b in THREE_POINT {
            points.push(t[0] * b[0] + t[1] * b[1] + t[2] * b[2]);
        }
    }
    let n = points.len();
    QuadratureRule {
        points,
        weights: vec![w; n],
    }
}

/// Sorted, duplicate-free list of element ids.
pub type ElementSet = Vec<usize>;

/// Elements of `a` not in `b`; both sorted.
pub fn set_difference(a: &[usize], b: &[usize]) -> ElementSet {
    let mut out = Vec::new();
    let mut j = 0;
    for &x in a {
        while j < b.len() && b[j] < x {
            j += 1;
        }
        if j >= b.len() || b[j] != x {
            out.push(x);
        }
    }
    out
}

/// Element-to-cell assignment by element centre.
#[derive(Clone, Debug, PartialEq)]
pub struct CellBinning {
    pub grid: GridSpec,
    pub cell_of_element: Vec<CellIndex>,
    /// Linear cell index to sorted element ids; only occupied cells appear.
    pub elements_in_cell: BTreeMap<usize, Vec<usize>>,
}

pub fn bin_elements(elements: &[BoundaryElement], grid: &GridSpec) -> Result<CellBinning> {
    let mut cell_of_element = Vec::with_capacity(elements.len());
    let mut elements_in_cell: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, e) in elements.iter().enumerate() {
        let cell = grid.cell_of(&e.center).ok_or(Error::ElementOutsideDomain {
            element: i,
            position: [e.center.x, e.center.y, e.center.z],
        })?;
        cell_of_element.push(cell);
        elements_in_cell.entry(grid.linear(cell)).or_default().push(i);
    }
    Ok(CellBinning {
        grid: grid.clone(),
        cell_of_element,
        elements_in_cell,
    })
}

impl CellBinning {
    pub fn elements_in(&self, cell: CellIndex) -> &[usize] {
        self.elements_in_cell
            .get(&self.grid.linear(cell))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn num_elements(&self) -> usize {
        self.cell_of_element.len()
    }

    fn collect_block(&self, block: &[std::ops::RangeInclusive<usize>; 3]) -> ElementSet {
        let mut out: Vec<usize> = block_cells(block)
            .flat_map(|c| self.elements_in(c).iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    /// Elements in the `r x r x r` block around a point; see
    /// [`GridSpec::block_around_point`] for even `r`.
    pub fn elements_near_point(&self, x: &Vec3, r: usize) -> ElementSet {
        if self.elements_in_cell.is_empty() {
            return Vec::new();
        }
        self.collect_block(&self.grid.block_around_point(x, r))
    }

    /// Reject scenes whose elements sit too close to the absorbing layer:
    /// every element cell must keep a `margin`-cell ring inside the
    /// interior.
    pub fn check_clear_of_boundary(&self, margin: usize) -> Result<()> {
        let dims = self.grid.dims;
        for (i, c) in self.cell_of_element.iter().enumerate() {
            if (0..3).any(|a| c[a] < 1 + margin || c[a] + 2 + margin > dims[a]) {
                return Err(Error::ElementInAbsorbingLayer { element: i, cell: *c });
            }
        }
        Ok(())
    }

    /// Write `element id, cx, cy, cz, area, nx, ny, nz, u, v, w`.
    pub fn write_csv(&self, elements: &[BoundaryElement], path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path.as_ref())?;
        w.write_record(["element", "cx", "cy", "cz", "area", "nx", "ny", "nz", "u", "v", "w"])?;
        for (e, c) in elements.iter().zip(&self.cell_of_element) {
            w.write_record([
                e.id.to_string(),
                e.center.x.to_string(),
                e.center.y.to_string(),
                e.center.z.to_string(),
                e.area.to_string(),
                e.normal.x.to_string(),
                e.normal.y.to_string(),
                e.normal.z.to_string(),
                c[0].to_string(),
                c[1].to_string(),
                c[2].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path.as_ref(), e))
    }
}

/// Union of the element sets of the `r x r x r` cells centred on `cell`
/// (clamped to the grid). `r` must be odd.
pub fn neighbor_elements(cell: CellIndex, r: usize, binning: &CellBinning) -> ElementSet {
    assert!(r % 2 == 1, "neighbour block width must be odd");
    if binning.elements_in_cell.is_empty() {
        return Vec::new();
    }
    binning.collect_block(&binning.grid.block_around_cell(cell, r))
}

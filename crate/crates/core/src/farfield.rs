//! Ghost-cell-free FDTD grid carrying only far-field pressure.
//!
//! Cell `a` stores `p_a(F_a)`: the pressure at its centre due to all
//! elements outside its `R1`-block `N_a`. The leapfrog update needs the
//! face neighbours restricted to the same far set,
//! `p_b(F_a) = p_b(F_b) - p_b(N_a \ N_b) + p_b(N_b \ N_a)`, so each cell
//! carries a short list of correction terms built from the slabs where the
//! two blocks differ.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{CellIndex, GridSpec};
use crate::mesh::{neighbor_elements, set_difference, CellBinning};

/// Largest stable leapfrog step in 3D, `h / (c sqrt 3)`.
pub fn cfl_timestep(h: f64, c: f64) -> f64 {
    h / (c * 3f64.sqrt())
}

/// `(sum of face neighbours - 6 centre) / h^2` at an interior cell.
pub fn discrete_laplacian(field: &[f64], spec: &GridSpec, cell: CellIndex) -> f64 {
    let centre = field[spec.linear(cell)];
    let mut sum = 0.0;
    for (dir, step) in FACE_STEPS {
        let mut n = cell;
        n[dir] = (n[dir] as isize + step) as usize;
        sum += field[spec.linear(n)];
    }
    (sum - 6.0 * centre) / (spec.h * spec.h)
}

const FACE_STEPS: [(usize, isize); 6] = [(0, -1), (0, 1), (1, -1), (1, 1), (2, -1), (2, 1)];

/// Signed single-element contribution at a cell centre: `sign * p_cell({element})`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrectionTerm {
    pub cell: usize,
    pub element: usize,
    pub sign: f64,
    /// Free slot for the owner of the contribution values.
    pub slot: usize,
}

/// Value source for correction terms.
pub trait SubsetField: Sync {
    fn term(&self, t: &CorrectionTerm) -> f64;
}

/// For every interior cell with a non-empty correction, the terms that turn
/// the sum of its six stored neighbours into `sum_b p_b(F_a)`.
#[derive(Clone, Debug, Default)]
pub struct CorrectionPlan {
    /// Linear cell ids with corrections, ascending.
    pub cells: Vec<usize>,
    /// `terms[offsets[k]..offsets[k + 1]]` belong to `cells[k]`.
    pub offsets: Vec<usize>,
    pub terms: Vec<CorrectionTerm>,
    /// Per linear cell, index into `cells` or `usize::MAX`.
    lookup: Vec<usize>,
}

impl CorrectionPlan {
    pub fn build(binning: &CellBinning, r1: usize) -> Self {
        let spec = &binning.grid;
        // only cells within reach of an element can differ from their neighbours
        let reach = (r1 - 1) / 2 + 1;
        let mut candidates: Vec<usize> = Vec::new();
        let mut mark = vec![false; spec.num_cells()];
        for &cell in binning.elements_in_cell.keys() {
            let c = spec.unlinear(cell);
            let block = spec.block_around_cell(c, 2 * reach + 1);
            for a in crate::lattice::block_cells(&block) {
                let idx = spec.linear(a);
                if !mark[idx] && spec.is_interior(a) {
                    mark[idx] = true;
                    candidates.push(idx);
                }
            }
        }
        candidates.sort_unstable();
        let per_cell: Vec<Vec<CorrectionTerm>> = candidates
            .par_iter()
            .map(|&idx| {
                let a = spec.unlinear(idx);
                let na = neighbor_elements(a, r1, binning);
                let mut terms = Vec::new();
                for (dir, step) in FACE_STEPS {
                    let mut b = a;
                    b[dir] = (b[dir] as isize + step) as usize;
                    let nb = neighbor_elements(b, r1, binning);
                    let bl = spec.linear(b);
                    for m in set_difference(&na, &nb) {
                        terms.push(CorrectionTerm { cell: bl, element: m, sign: -1.0, slot: 0 });
                    }
                    for m in set_difference(&nb, &na) {
                        terms.push(CorrectionTerm { cell: bl, element: m, sign: 1.0, slot: 0 });
                    }
                }
                terms
            })
            .collect();
        let mut plan = CorrectionPlan {
            lookup: vec![usize::MAX; spec.num_cells()],
            ..Default::default()
        };
        plan.offsets.push(0);
        for (idx, terms) in candidates.into_iter().zip(per_cell) {
            if terms.is_empty() {
                continue;
            }
            plan.lookup[idx] = plan.cells.len();
            plan.cells.push(idx);
            plan.terms.extend(terms);
            plan.offsets.push(plan.terms.len());
        }
        plan
    }

    /// Correction terms of linear cell `a` (empty if none).
    pub fn terms_of(&self, a: usize) -> &[CorrectionTerm] {
        match self.lookup.get(a) {
            Some(&k) if k != usize::MAX => &self.terms[self.offsets[k]..self.offsets[k + 1]],
            _ => &[],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// `p_b(F_a)` for face neighbour `b` of `a`: the stored `p_b(F_b)` with the
/// slab corrections applied.
pub fn corrected_neighbor_value(
    grid: &FarFieldGrid,
    a: CellIndex,
    b: CellIndex,
    binning: &CellBinning,
    r1: usize,
    field: &dyn SubsetField,
) -> f64 {
    let spec = &grid.spec;
    let bl = spec.linear(b);
    let na = neighbor_elements(a, r1, binning);
    let nb = neighbor_elements(b, r1, binning);
    let mut value = grid.current[bl];
    for m in set_difference(&na, &nb) {
        value -= field.term(&CorrectionTerm { cell: bl, element: m, sign: 1.0, slot: 0 });
    }
    for m in set_difference(&nb, &na) {
        value += field.term(&CorrectionTerm { cell: bl, element: m, sign: 1.0, slot: 0 });
    }
    value
}

/// Damping of the time shift in both Mur factors of the Higdon operator.
/// At 1 the operator has a double root at zero frequency and a constant
/// offset on the boundary grows linearly.
pub const HIGDON_DAMPING: f64 = 0.95;

/// Absorbing boundary on the outermost cell layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Absorber {
    /// First-order Mur extrapolation.
    Mur,
    /// Second-order Higdon operator: the square of a slightly damped Mur
    /// operator, which roughly squares the reflection coefficient at
    /// oblique incidence.
    #[default]
    Higdon,
}

/// Two leapfrog levels of far-field pressure.
#[derive(Clone, Debug, PartialEq)]
pub struct FarFieldGrid {
    pub spec: GridSpec,
    pub c: f64,
    pub tau: f64,
    pub absorber: Absorber,
    /// Level `n`.
    pub current: Vec<f64>,
    /// Level `n - 1`.
    pub previous: Vec<f64>,
    /// Index `n` of `current`.
    pub step: usize,
}

impl FarFieldGrid {
    pub fn new(spec: GridSpec, c: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || tau > cfl_timestep(spec.h, c) * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "time step {tau:e} violates the CFL bound {:e}",
                cfl_timestep(spec.h, c)
            )));
        }
        if spec.dims.iter().any(|&d| d < 4) {
            return Err(Error::Config(format!("grid needs at least 4 cells per axis, got {:?}", spec.dims)));
        }
        let n = spec.num_cells();
        Ok(FarFieldGrid {
            spec,
            c,
            tau,
            absorber: Absorber::default(),
            current: vec![0.0; n],
            previous: vec![0.0; n],
            step: 0,
        })
    }

    pub fn courant_squared(&self) -> f64 {
        let k = self.c * self.tau / self.spec.h;
        k * k
    }

    pub fn value(&self, cell: CellIndex) -> f64 {
        self.current[self.spec.linear(cell)]
    }

    pub fn max_abs(&self) -> f64 {
        self.current.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.current.iter().chain(&self.previous).all(|v| v.is_finite())
    }

    /// Mur coefficient `(c tau - h) / (c tau + h)`.
    pub fn mur_coefficient(&self) -> f64 {
        let ct = self.c * self.tau;
        (ct - self.spec.h) / (ct + self.spec.h)
    }
}

/// Advance the grid from level `n` to `n + 1`: leapfrog on interior cells
/// with corrected neighbours, then the absorbing boundary.
pub fn fdtd_far_step(grid: &mut FarFieldGrid, plan: &CorrectionPlan, field: &dyn SubsetField) {
    let spec = grid.spec.clone();
    let [nx, ny, nz] = spec.dims;
    let k2 = grid.courant_squared();
    let cur = &grid.current;
    let prev = &grid.previous;
    let plane = ny * nz;
    let mut next = vec![0.0; cur.len()];
    next.par_chunks_mut(plane).enumerate().for_each(|(u, slab)| {
        if u == 0 || u + 1 == nx {
            return;
        }
        for v in 1..ny - 1 {
            for w in 1..nz - 1 {
                let i = (u * ny + v) * nz + w;
                let mut nb = cur[i - plane] + cur[i + plane] + cur[i - nz] + cur[i + nz] + cur[i - 1] + cur[i + 1];
                for t in plan.terms_of(i) {
                    nb += t.sign * field.term(t);
                }
                slab[v * nz + w] = 2.0 * cur[i] - prev[i] + k2 * (nb - 6.0 * cur[i]);
            }
        }
    });
    apply_abc(grid, &mut next);
    grid.previous = std::mem::replace(&mut grid.current, next);
    grid.step += 1;
}

/// Absorbing boundary on the outermost layer of `next`, whose interior
/// already holds level `n + 1`; `grid` holds levels `n` and `n - 1`.
/// Faces are done first, then edges, then corners, so every inward
/// neighbour is final when it is read; edge and corner cells average the
/// one-dimensional update over their boundary axes.
pub fn apply_abc(grid: &FarFieldGrid, next: &mut [f64]) {
    let spec = &grid.spec;
    let k = grid.mur_coefficient();
    let dims = spec.dims;
    let (cur, prev) = (&grid.current, &grid.previous);
    let mut boundary: Vec<(usize, CellIndex)> = Vec::new();
    for u in 0..dims[0] {
        for v in 0..dims[1] {
            for w in 0..dims[2] {
                let c = [u, v, w];
                let count = (0..3).filter(|&a| c[a] == 0 || c[a] + 1 == dims[a]).count();
                if count > 0 {
                    boundary.push((count, c));
                }
            }
        }
    }
    boundary.sort_by_key(|&(count, c)| (count, spec.linear(c)));
    for (count, c) in boundary {
        let i = spec.linear(c);
        let mut acc = 0.0;
        for a in 0..3 {
            let inward = if c[a] == 0 {
                1isize
            } else if c[a] + 1 == dims[a] {
                -1
            } else {
                continue;
            };
            let step_in = |d: isize| {
                let mut n = c;
                n[a] = (n[a] as isize + d * inward) as usize;
                spec.linear(n)
            };
            let j1 = step_in(1);
            acc += match grid.absorber {
                Absorber::Higdon if count == 1 => {
                    let j2 = step_in(2);
                    let q = HIGDON_DAMPING;
                    -2.0 * k * q * cur[i] - k * k * q * q * prev[i]
                        + 2.0 * (k * next[j1] + (1.0 + k * k) * q * cur[j1] + k * q * q * prev[j1])
                        - (k * k * next[j2] + 2.0 * k * q * cur[j2] + q * q * prev[j2])
                }
                _ => cur[j1] + k * (next[j1] - cur[i]),
            };
        }
        next[i] = acc / count as f64;
    }
}

/// Axis-aligned slice of the current level.
pub fn slice(grid: &FarFieldGrid, axis: usize, index: usize) -> Result<(usize, usize, Vec<f64>)> {
    let dims = grid.spec.dims;
    if axis > 2 || index >= dims[axis] {
        return Err(Error::Config(format!("slice {index} on axis {axis} outside grid {dims:?}")));
    }
    let (a1, a2) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut out = Vec::with_capacity(dims[a1] * dims[a2]);
    for i in 0..dims[a1] {
        for j in 0..dims[a2] {
            let mut c = [0; 3];
            c[axis] = index;
            c[a1] = i;
            c[a2] = j;
            out.push(grid.value(c));
        }
    }
    Ok((dims[a1], dims[a2], out))
}

/// Write a row-major field as ASCII PGM, mapping `[-pmax, pmax]` to
/// `[0, 255]`. `pmax = 0` is taken from the data.
pub fn write_pgm(path: impl AsRef<Path>, rows: usize, cols: usize, values: &[f64], pmax: f64) -> Result<()> {
    let path = path.as_ref();
    let pmax = if pmax > 0.0 {
        pmax
    } else {
        values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE)
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    writeln!(out, "P2\n{cols} {rows}\n255").map_err(io)?;
    for r in 0..rows {
        let line: Vec<String> = values[r * cols..(r + 1) * cols]
            .iter()
            .map(|v| pgm_level(*v, pmax).to_string())
            .collect();
        writeln!(out, "{}", line.join(" ")).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn pgm_level(v: f64, pmax: f64) -> u8 {
    let t = ((v / pmax).clamp(-1.0, 1.0) + 1.0) * 0.5;
    (t * 255.0).round() as u8
}

/// Write `u, v, w, p` rows for one slice.
pub fn write_slice_csv(path: impl AsRef<Path>, grid: &FarFieldGrid, axis: usize, index: usize) -> Result<()> {
    let path = path.as_ref();
    let dims = grid.spec.dims;
    if axis > 2 || index >= dims[axis] {
        return Err(Error::Config(format!("slice {index} on axis {axis} outside grid {dims:?}")));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["u", "v", "w", "p"])?;
    for i in 0..grid.spec.num_cells() {
        let c = grid.spec.unlinear(i);
        if c[axis] == index {
            w.write_record([c[0].to_string(), c[1].to_string(), c[2].to_string(), format!("{:e}", grid.current[i])])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

//! Dense reference TDBEM.
//!
//! Marches the full boundary system
//!
//! ```text
//! (I/2 - D_0) Phi_n = sum_{j=1..L} D_j Phi_{n-j} - sum_{j=0..L} V_j G_{n-j}
//! ```
//!
//! and evaluates the potential
//! `p_x^n = sum_j d_j(x) . Phi_{n-j} - v_j(x) . G_{n-j}`, optionally
//! restricted to a subset of source elements.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::cqm::{alpha, CqmTransform, PairWeights};
use crate::error::{Error, Result};
use crate::lattice::Vec3;
use crate::mesh::BoundaryElement;
use crate::sources::NeumannSource;

/// Ring buffers of the last `L + 1` Dirichlet and Neumann values of every
/// element.
#[derive(Clone, Debug, PartialEq)]
pub struct ElementHistory {
    num_elements: usize,
    len: usize,
    /// Number of steps pushed; the current step is `steps - 1`.
    steps: usize,
    /// `[element][slot]`, slot = step mod len.
    phi: Vec<f64>,
    g: Vec<f64>,
}

impl ElementHistory {
    pub fn new(num_elements: usize, history: usize) -> Self {
        let len = history + 1;
        ElementHistory {
            num_elements,
            len,
            steps: 0,
            phi: vec![0.0; num_elements * len],
            g: vec![0.0; num_elements * len],
        }
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    /// Buffer length `L + 1`.
    pub fn capacity(&self) -> usize {
        self.len
    }

    /// Number of steps pushed so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Start step `n` with Neumann data `g_n`; `Phi_n` starts at zero.
    pub fn advance(&mut self, g_n: &[f64]) -> Result<()> {
        if g_n.len() != self.num_elements {
            return Err(Error::LengthMismatch {
                expected: self.num_elements,
                got: g_n.len(),
            });
        }
        let slot = self.steps % self.len;
        for (m, &g) in g_n.iter().enumerate() {
            self.g[m * self.len + slot] = g;
            self.phi[m * self.len + slot] = 0.0;
        }
        self.steps += 1;
        Ok(())
    }

    /// Store `Phi_n` for the current step.
    pub fn set_dirichlet(&mut self, phi_n: &[f64]) -> Result<()> {
        if phi_n.len() != self.num_elements {
            return Err(Error::LengthMismatch {
                expected: self.num_elements,
                got: phi_n.len(),
            });
        }
        assert!(self.steps > 0, "no step started");
        let slot = (self.steps - 1) % self.len;
        for (m, &p) in phi_n.iter().enumerate() {
            self.phi[m * self.len + slot] = p;
        }
        Ok(())
    }

    fn slot(&self, j: usize) -> Option<usize> {
        if j >= self.steps || j >= self.len {
            None
        } else {
            Some((self.steps - 1 - j) % self.len)
        }
    }

    /// `Phi_{n-j}` of element `m` (zero before the first step or beyond the
    /// buffer).
    pub fn phi(&self, m: usize, j: usize) -> f64 {
        self.slot(j).map_or(0.0, |s| self.phi[m * self.len + s])
    }

    pub fn g(&self, m: usize, j: usize) -> f64 {
        self.slot(j).map_or(0.0, |s| self.g[m * self.len + s])
    }

    /// Current `Phi_n` of every element.
    pub fn current_dirichlet(&self) -> Vec<f64> {
        (0..self.num_elements).map(|m| self.phi(m, 0)).collect()
    }

    /// `sum_j d_j Phi_{n-j} - v_j G_{n-j}` for one source element, summed in
    /// increasing `j`.
    #[inline]
    pub fn contribution(&self, w: &PairWeights, m: usize) -> f64 {
        if self.steps == 0 {
            return 0.0;
        }
        let depth = self.steps.min(self.len).min(w.len());
        let base = m * self.len;
        let head = (self.steps - 1) % self.len;
        let phi = &self.phi[base..base + self.len];
        let g = &self.g[base..base + self.len];
        let mut acc = 0.0;
        // walk the ring backwards from the head in two straight runs
        let first = (head + 1).min(depth);
        for j in 0..first {
            let s = head - j;
            acc += w.d[j] * phi[s] - w.v[j] * g[s];
        }
        for j in first..depth {
            let s = self.len + head - j;
            acc += w.d[j] * phi[s] - w.v[j] * g[s];
        }
        acc
    }

    /// Contribution as it stood `lag` steps ago.
    pub fn contribution_lagged(&self, w: &PairWeights, m: usize, lag: usize) -> f64 {
        if lag == 0 {
            return self.contribution(w, m);
        }
        let mut acc = 0.0;
        for j in 0..w.len() {
            if j + lag >= self.len {
                break;
            }
            acc += w.d[j] * self.phi(m, j + lag) - w.v[j] * self.g(m, j + lag);
        }
        acc
    }

    /// Same as [`Self::contribution`] without the `j = 0` Dirichlet term.
    #[inline]
    pub fn contribution_without_current_dirichlet(&self, w: &PairWeights, m: usize) -> f64 {
        self.contribution(w, m) - if self.steps > 0 { w.d[0] * self.phi(m, 0) } else { 0.0 }
    }
}

/// Pressure at a point from the elements of `subset`, given that point's
/// weights against every element (`weights[m]`). Summation runs over
/// `subset` in the given order.
pub fn subset_contribution(weights: &[PairWeights], subset: &[usize], history: &ElementHistory) -> f64 {
    let mut acc = 0.0;
    for &m in subset {
        acc += history.contribution(&weights[m], m);
    }
    acc
}

/// Pressure at a point from every element, in element order.
pub fn evaluate_pressure(weights: &[PairWeights], history: &ElementHistory) -> f64 {
    let mut acc = 0.0;
    for (m, w) in weights.iter().enumerate() {
        acc += history.contribution(w, m);
    }
    acc
}

/// Weights of the point `x` against every element.
pub fn point_weights_all(transform: &CqmTransform, x: &Vec3, elements: &[BoundaryElement]) -> Result<Vec<PairWeights>> {
    elements.par_iter().map(|e| transform.point_weights(x, e)).collect()
}

/// All row weights `V_{j,i,m}`, `D_{j,i,m}`, stored row-major.
#[derive(Clone, Debug)]
pub struct RowTable {
    pub num_elements: usize,
    pub rows: Vec<PairWeights>,
}

impl RowTable {
    pub fn build(transform: &CqmTransform, elements: &[BoundaryElement]) -> Result<Self> {
        let m = elements.len();
        let rows = (0..m * m)
            .into_par_iter()
            .map(|k| transform.row_weights(&elements[k / m], &elements[k % m]))
            .collect::<Result<Vec<_>>>()?;
        Ok(RowTable { num_elements: m, rows })
    }

    #[inline]
    pub fn get(&self, i: usize, m: usize) -> &PairWeights {
        &self.rows[i * self.num_elements + m]
    }

    pub fn row(&self, i: usize) -> &[PairWeights] {
        &self.rows[i * self.num_elements..(i + 1) * self.num_elements]
    }
}

/// How the boundary system is solved each step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MarchMode {
    /// Full `(I/2 - D_0)` solve.
    Dense,
    /// Row-wise solve with `Phi_n = 0` in the `j = 0` term.
    Diagonal,
}

/// Dense boundary system with its LU factorisation.
pub struct DenseSystem {
    pub lhs: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl DenseSystem {
    pub fn new(rows: &RowTable, elements: &[BoundaryElement]) -> Result<Self> {
        let m = elements.len();
        let lhs = DMatrix::from_fn(m, m, |i, k| {
            let diag = if i == k { 0.5 * elements[i].area } else { 0.0 };
            diag - rows.get(i, k).d[0]
        });
        let lu = lhs.clone().lu();
        if !lu.is_invertible() {
            return Err(Error::SingularSystem(format!("{m}x{m} boundary matrix is not invertible")));
        }
        let diag_min = (0..m).map(|i| lu.u()[(i, i)].abs()).fold(f64::INFINITY, f64::min);
        let diag_max = (0..m).map(|i| lu.u()[(i, i)].abs()).fold(0.0, f64::max);
        if diag_min <= 1e-14 * diag_max {
            return Err(Error::SingularSystem(format!("pivot ratio {:e}", diag_min / diag_max)));
        }
        Ok(DenseSystem { lhs, lu })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let b = DVector::from_column_slice(rhs);
        self.lu
            .solve(&b)
            .map(|x| x.as_slice().to_vec())
            .ok_or_else(|| Error::SingularSystem("LU solve failed".into()))
    }
}

/// Reference solver marching the full boundary system.
pub struct TdbemOracle {
    pub elements: Vec<BoundaryElement>,
    pub transform: CqmTransform,
    pub rows: RowTable,
    pub dense: Option<DenseSystem>,
    pub history: ElementHistory,
    pub mode: MarchMode,
    g_buf: Vec<f64>,
}

impl TdbemOracle {
    pub fn new(elements: Vec<BoundaryElement>, transform: CqmTransform, mode: MarchMode) -> Result<Self> {
        let rows = RowTable::build(&transform, &elements)?;
        let dense = match mode {
            MarchMode::Dense => Some(DenseSystem::new(&rows, &elements)?),
            MarchMode::Diagonal => None,
        };
        let history = ElementHistory::new(elements.len(), transform.config().history);
        let g_buf = vec![0.0; elements.len()];
        Ok(TdbemOracle {
            elements,
            transform,
            rows,
            dense,
            history,
            mode,
            g_buf,
        })
    }

    pub fn tau(&self) -> f64 {
        self.transform.config().tau
    }

    /// Current step index `n` of the next call to [`Self::step`].
    pub fn next_step(&self) -> usize {
        self.history.steps()
    }

    /// Advance one step with Neumann data from `source` at `t = n tau`.
    pub fn step(&mut self, source: &dyn NeumannSource) -> Result<Vec<f64>> {
        let t = self.next_step() as f64 * self.tau();
        let mut g = std::mem::take(&mut self.g_buf);
        source.neumann(&self.elements, t, &mut g);
        let phi = self.step_with(&g);
        self.g_buf = g;
        phi
    }

    /// Advance one step with explicit Neumann data `g_n`.
    pub fn step_with(&mut self, g_n: &[f64]) -> Result<Vec<f64>> {
        march_step(&mut self.history, &self.rows, &self.elements, self.dense.as_ref(), self.mode, g_n)
    }
}

/// One marching step: push `g_n`, solve for `Phi_n`, store it.
pub fn march_step(
    history: &mut ElementHistory,
    rows: &RowTable,
    elements: &[BoundaryElement],
    dense: Option<&DenseSystem>,
    mode: MarchMode,
    g_n: &[f64],
) -> Result<Vec<f64>> {
    history.advance(g_n)?;
    let hist = &*history;
    let rhs: Vec<f64> = (0..elements.len())
        .into_par_iter()
        .map(|i| {
            let row = rows.row(i);
            let mut acc = 0.0;
            for (m, w) in row.iter().enumerate() {
                acc += hist.contribution(w, m);
            }
            acc
        })
        .collect();
    let phi = match mode {
        MarchMode::Dense => dense
            .ok_or_else(|| Error::Config("dense marching needs a factorised system".into()))?
            .solve(&rhs)?,
        MarchMode::Diagonal => rhs.iter().zip(elements).map(|(r, e)| r / alpha(e)).collect(),
    };
    history.set_dirichlet(&phi)?;
    Ok(phi)
}

/// Write `step, point, pressure` rows.
pub fn write_pressure_csv(path: impl AsRef<Path>, rows: &[(usize, usize, f64)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "point", "pressure"])?;
    for (step, point, p) in rows {
        w.write_record([step.to_string(), point.to_string(), format!("{p:e}")])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Full Dirichlet and Neumann series of a run, for evaluating the potential
/// after the fact at many points without holding their weight tables.
#[derive(Clone, Debug, Default)]
pub struct RecordedRun {
    pub num_elements: usize,
    /// `phi[n][m]`.
    pub phi: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
}

impl RecordedRun {
    pub fn new(num_elements: usize) -> Self {
        RecordedRun {
            num_elements,
            ..Default::default()
        }
    }

    pub fn push(&mut self, g: Vec<f64>, phi: Vec<f64>) {
        self.g.push(g);
        self.phi.push(phi);
    }

    pub fn steps(&self) -> usize {
        self.phi.len()
    }

    /// Pressure at step `n` from the truncated history, with the point's
    /// weights against every element.
    pub fn pressure_at(&self, weights: &[PairWeights], n: usize) -> f64 {
        let mut acc = 0.0;
        for (m, w) in weights.iter().enumerate() {
            for j in 0..w.len().min(n + 1) {
                acc += w.d[j] * self.phi[n - j][m] - w.v[j] * self.g[n - j][m];
            }
        }
        acc
    }
}

//! The coupled solver loop.
//!
//! One step: rebin moved elements, advance the far-field grid, then update
//! the Dirichlet value of every element from a direct near-field sum over
//! its `R2`-block plus the interpolated, corrected far field, and finally
//! sample the listeners.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::cqm::{alpha, pair_signature, CqmConfig, CqmTransform, PairKey, PairWeights, TargetKey, WeightCache};
use crate::error::{Error, Result};
use crate::farfield::{cfl_timestep, Absorber, fdtd_far_step, CorrectionPlan, CorrectionTerm, FarFieldGrid, SubsetField};
use crate::lattice::{block_cells, GridSpec, Vec3};
use crate::mesh::{bin_elements, neighbor_elements, quadrature_points, set_difference, BoundaryElement, CellBinning, ElementSet};
use crate::oracle::ElementHistory;
use crate::sources::NeumannSource;

/// Solver parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridConfig {
    /// Width of a cell's near block. With width 3 the grid carries fields
    /// of elements one cell past the stencil and the coupled loop is not
    /// stable on closed surfaces a few cells across.
    pub r1: usize,
    /// Width of an element's near block.
    pub r2: usize,
    /// History length `L`.
    pub history: usize,
    pub c: f64,
    /// Time step; the CFL step when `None`.
    pub tau: Option<f64>,
    /// Jacobi sweeps over the near-block `D_0` coupling after the diagonal
    /// update. Zero gives the plain diagonal approximation, which lets the
    /// lowest interior resonance of a closed surface grow over long runs.
    pub dirichlet_sweeps: usize,
    pub absorber: Absorber,
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig {
            r1: 5,
            r2: 4,
            history: 64,
            c: crate::SOUND_SPEED,
            tau: None,
            dirichlet_sweeps: 2,
            absorber: Absorber::default(),
        }
    }
}

impl HybridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r1 % 2 == 0 || self.r1 == 0 {
            return Err(Error::Config(format!("R1 must be odd, got {}", self.r1)));
        }
        if self.r2 == 0 {
            return Err(Error::Config("R2 must be positive".into()));
        }
        if self.history == 0 {
            return Err(Error::Config("history length must be positive".into()));
        }
        Ok(())
    }
}

/// One interpolation cell of a far-field evaluation: trilinear weight and
/// the table slots that convert the stored `p_c(F_c)` to the wanted far set.
#[derive(Clone, Debug, PartialEq)]
struct StencilLink {
    cell: usize,
    weight: f64,
    corrections: Vec<(usize, f64)>,
}

/// Fixed evaluation point: near elements with their weights and the far
/// stencil.
#[derive(Clone, Debug)]
pub struct Probe {
    pub position: Vec3,
    near: Vec<(usize, Arc<PairWeights>)>,
    far: Vec<StencilLink>,
}

impl Probe {
    /// Elements summed directly.
    pub fn near_set(&self) -> Vec<usize> {
        self.near.iter().map(|(m, _)| *m).collect()
    }
}

/// Listener position with its recorded series, one sample per step.
#[derive(Clone, Debug)]
pub struct ListenerTap {
    pub position: Vec3,
    pub samples: Vec<f64>,
}

/// Per-step single-element contributions at cell centres.
#[derive(Debug, Default)]
struct ContributionTable {
    index: HashMap<(usize, usize), usize>,
    pairs: Vec<(usize, usize)>,
    weights: Vec<Arc<PairWeights>>,
    values: Vec<f64>,
}

impl ContributionTable {
    fn slot(&mut self, cell: usize, element: usize) -> usize {
        let next = self.pairs.len();
        *self.index.entry((cell, element)).or_insert_with(|| {
            self.pairs.push((cell, element));
            next
        })
    }
}

impl SubsetField for ContributionTable {
    #[inline]
    fn term(&self, t: &CorrectionTerm) -> f64 {
        self.values[t.slot]
    }
}

/// Full solver state.
pub struct SolverState {
    pub config: HybridConfig,
    pub transform: CqmTransform,
    pub elements: Vec<BoundaryElement>,
    pub binning: CellBinning,
    pub grid: FarFieldGrid,
    pub history: ElementHistory,
    pub cache: WeightCache,
    plan: CorrectionPlan,
    table: ContributionTable,
    near: Vec<Vec<(usize, Arc<PairWeights>)>>,
    near_sets: Vec<ElementSet>,
    far: Vec<Vec<StencilLink>>,
    listener_probes: Vec<Probe>,
    pub listeners: Vec<ListenerTap>,
    pending_vertices: Option<Vec<Vec3>>,
    g_buf: Vec<f64>,
    last_dirichlet: Vec<f64>,
}

fn point_key(x: &Vec3) -> u64 {
    let mut h = DefaultHasher::new();
    for c in x.iter() {
        c.to_bits().hash(&mut h);
    }
    h.finish()
}

impl SolverState {
    pub fn new(elements: Vec<BoundaryElement>, spec: GridSpec, config: HybridConfig) -> Result<Self> {
        config.validate()?;
        let tau = config.tau.unwrap_or_else(|| cfl_timestep(spec.h, config.c));
        let transform = CqmTransform::new(CqmConfig::new(tau, config.history, config.c)?)?;
        let mut grid = FarFieldGrid::new(spec.clone(), config.c, tau)?;
        grid.absorber = config.absorber;
        let binning = bin_elements(&elements, &spec)?;
        binning.check_clear_of_boundary(1)?;
        let m = elements.len();
        let mut state = SolverState {
            history: ElementHistory::new(m, config.history),
            config,
            transform,
            elements,
            binning,
            grid,
            cache: WeightCache::new(),
            plan: CorrectionPlan::default(),
            table: ContributionTable::default(),
            near: Vec::new(),
            near_sets: Vec::new(),
            far: Vec::new(),
            listener_probes: Vec::new(),
            listeners: Vec::new(),
            pending_vertices: None,
            g_buf: vec![0.0; m],
            last_dirichlet: vec![0.0; m],
        };
        state.rebuild()?;
        Ok(state)
    }

    pub fn tau(&self) -> f64 {
        self.grid.tau
    }

    pub fn spec(&self) -> &GridSpec {
        &self.grid.spec
    }

    /// Index of the next step.
    pub fn step_index(&self) -> usize {
        self.history.steps()
    }

    pub fn dirichlet(&self) -> &[f64] {
        &self.last_dirichlet
    }

    /// Number of (cell, element) pairs evaluated every step.
    pub fn num_cell_pairs(&self) -> usize {
        self.table.pairs.len()
    }

    fn tolerance(&self) -> f64 {
        1e-6 * self.grid.spec.h
    }

    fn cell_weights(&self, cell: usize, m: usize) -> Result<Arc<PairWeights>> {
        let x = self.grid.spec.cell_center(self.grid.spec.unlinear(cell));
        let e = &self.elements[m];
        self.cache.get_or_compute(
            PairKey {
                target: TargetKey::Cell(cell),
                source: m,
            },
            pair_signature(&x, None, e),
            self.tolerance(),
            || self.transform.point_weights(&x, e),
        )
    }

    fn probe_weights(&self, x: &Vec3, m: usize) -> Result<Arc<PairWeights>> {
        let e = &self.elements[m];
        self.cache.get_or_compute(
            PairKey {
                target: TargetKey::Point(point_key(x)),
                source: m,
            },
            pair_signature(x, None, e),
            self.tolerance(),
            || self.transform.point_weights(x, e),
        )
    }

    /// Stencil links for a far-field value at `x` restricted to the
    /// complement of `near_set`.
    fn link_point(&mut self, x: &Vec3, near_set: &[usize], scale: f64) -> Result<Vec<StencilLink>> {
        let spec = self.grid.spec.clone();
        let stencil = spec.trilinear(x)?;
        let mut links = Vec::with_capacity(8);
        for (cell, weight) in stencil {
            if weight == 0.0 {
                continue;
            }
            let nc = neighbor_elements(cell, self.config.r1, &self.binning);
            let cl = spec.linear(cell);
            let mut corrections = Vec::new();
            // p_c(F_x) = p_c(F_c) - p_c(N_x \ N_c) + p_c(N_c \ N_x)
            for m in set_difference(near_set, &nc) {
                corrections.push((self.table.slot(cl, m), -1.0));
            }
            for m in set_difference(&nc, near_set) {
                corrections.push((self.table.slot(cl, m), 1.0));
            }
            links.push(StencilLink {
                cell: cl,
                weight: weight * scale,
                corrections,
            });
        }
        Ok(links)
    }

    fn build_probe(&mut self, x: Vec3) -> Result<Probe> {
        let near_set = self.binning.elements_near_point(&x, self.config.r2);
        let near = near_set
            .iter()
            .map(|&m| Ok((m, self.probe_weights(&x, m)?)))
            .collect::<Result<Vec<_>>>()?;
        let far = self.link_point(&x, &near_set, 1.0)?;
        Ok(Probe { position: x, near, far })
    }

    /// Compute weights for table slots from `from` on, then their values at
    /// the current history head.
    fn fill_table(&mut self, from: usize) -> Result<()> {
        let pairs = self.table.pairs[from..].to_vec();
        let new: Vec<Arc<PairWeights>> = pairs
            .par_iter()
            .map(|&(cell, m)| self.cell_weights(cell, m))
            .collect::<Result<_>>()?;
        let values: Vec<f64> = pairs
            .iter()
            .zip(&new)
            .map(|(&(_, m), w)| self.history.contribution(w, m))
            .collect();
        self.table.weights.extend(new);
        self.table.values.extend(values);
        Ok(())
    }

    /// Rebuild the binning-dependent structures: correction plan, near
    /// rows, far links, probes and the contribution table.
    fn rebuild(&mut self) -> Result<()> {
        self.table = ContributionTable::default();
        let mut plan = CorrectionPlan::build(&self.binning, self.config.r1);
        for t in plan.terms.iter_mut() {
            t.slot = self.table.slot(t.cell, t.element);
        }
        self.plan = plan;

        let m = self.elements.len();
        let r2 = self.config.r2;
        self.near_sets = (0..m)
            .map(|i| self.binning.elements_near_point(&self.elements[i].center, r2))
            .collect();
        let tol = self.tolerance();
        let near: Vec<Vec<(usize, Arc<PairWeights>)>> = (0..m)
            .into_par_iter()
            .map(|i| {
                let target = &self.elements[i];
                self.near_sets[i]
                    .iter()
                    .map(|&k| {
                        let source = &self.elements[k];
                        let w = self.cache.get_or_compute(
                            PairKey {
                                target: TargetKey::Element(i),
                                source: k,
                            },
                            pair_signature(&target.vertices[0], Some(target), source),
                            tol,
                            || self.transform.row_weights(target, source),
                        )?;
                        Ok((k, w))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        self.near = near;

        let mut far = Vec::with_capacity(m);
        for i in 0..m {
            let rule = quadrature_points(&self.elements[i], 3)?;
            let near_set = self.near_sets[i].clone();
            let mut links = Vec::new();
            for (x, w) in rule.points.iter().zip(&rule.weights) {
                links.extend(self.link_point(x, &near_set, *w)?);
            }
            far.push(links);
        }
        self.far = far;

        let positions: Vec<Vec3> = self.listener_probes.iter().map(|p| p.position).collect();
        self.listener_probes = positions
            .into_iter()
            .map(|x| self.build_probe(x))
            .collect::<Result<_>>()?;
        self.fill_table(0)
    }

    /// Add a listener; its series starts at the next step.
    pub fn add_listener(&mut self, x: Vec3) -> Result<usize> {
        let from = self.table.pairs.len();
        let probe = self.build_probe(x)?;
        self.fill_table(from)?;
        self.listener_probes.push(probe);
        self.listeners.push(ListenerTap {
            position: x,
            samples: Vec::new(),
        });
        Ok(self.listeners.len() - 1)
    }

    /// Build probes at `points` for repeated evaluation with
    /// [`Self::evaluate_probes`]. Probes must be rebuilt after rebinning.
    pub fn build_probes(&mut self, points: &[Vec3]) -> Result<Vec<Probe>> {
        let from = self.table.pairs.len();
        let probes = points
            .iter()
            .map(|x| self.build_probe(*x))
            .collect::<Result<Vec<_>>>()?;
        self.fill_table(from)?;
        Ok(probes)
    }

    fn probe_value(&self, probe: &Probe) -> f64 {
        let mut near = 0.0;
        for (m, w) in &probe.near {
            near += self.history.contribution(w, *m);
        }
        near + self.far_value(&probe.far)
    }

    /// Pressure at each probe for the last completed step.
    pub fn evaluate_probes(&self, probes: &[Probe]) -> Vec<f64> {
        probes.par_iter().map(|p| self.probe_value(p)).collect()
    }

    fn far_value(&self, links: &[StencilLink]) -> f64 {
        let mut acc = 0.0;
        for link in links {
            let mut v = self.grid.current[link.cell];
            for &(slot, sign) in &link.corrections {
                v += sign * self.table.values[slot];
            }
            acc += link.weight * v;
        }
        acc
    }

    /// Interpolated pressure at `x` due to the elements outside `near_set`,
    /// from the current grid level and table.
    pub fn far_value_at_point(&mut self, x: &Vec3, near_set: &[usize]) -> Result<f64> {
        let from = self.table.pairs.len();
        let links = self.link_point(x, near_set, 1.0)?;
        self.fill_table(from)?;
        Ok(self.far_value(&links))
    }

    /// Pressure at `x` for the last completed step: direct sum over the
    /// `R2`-block around `x` plus the interpolated far field.
    pub fn listener_pressure(&mut self, x: &Vec3) -> Result<f64> {
        let from = self.table.pairs.len();
        let probe = self.build_probe(*x)?;
        self.fill_table(from)?;
        Ok(self.probe_value(&probe))
    }

    /// Queue new vertex positions (same topology) for the next step.
    pub fn set_vertices(&mut self, vertices: Vec<Vec3>) {
        self.pending_vertices = Some(vertices);
    }

    /// Move the elements to `vertices`: rebin, carry the stored far-field
    /// levels over to the new far sets, and refresh weights whose relative
    /// geometry changed. Histories are kept as they are.
    pub fn rebin_dynamic(&mut self, vertices: &[Vec3]) -> Result<()> {
        let moved: Vec<BoundaryElement> = self
            .elements
            .iter()
            .map(|e| {
                let ids = e.vertex_ids;
                if ids.iter().any(|&v| v >= vertices.len()) {
                    return Err(Error::LengthMismatch {
                        expected: ids.iter().max().unwrap() + 1,
                        got: vertices.len(),
                    });
                }
                Ok(BoundaryElement::new(e.id, ids, [vertices[ids[0]], vertices[ids[1]], vertices[ids[2]]]))
            })
            .collect::<Result<_>>()?;
        if moved == self.elements {
            return Ok(());
        }
        let spec = self.grid.spec.clone();
        let binning = bin_elements(&moved, &spec)?;
        binning.check_clear_of_boundary(1)?;

        // cells whose near block membership changes
        let r1 = self.config.r1;
        let mut touched: Vec<usize> = Vec::new();
        for (old, new) in self.binning.cell_of_element.iter().zip(&binning.cell_of_element) {
            if old != new {
                for c in [old, new] {
                    touched.extend(block_cells(&spec.block_around_cell(*c, r1)).map(|a| spec.linear(a)));
                }
            }
        }
        touched.sort_unstable();
        touched.dedup();
        let old_binning = std::mem::replace(&mut self.binning, binning);
        self.elements = moved;

        // p_a(F_new) = p_a(F_old) - p_a(F_old \ F_new) + p_a(F_new \ F_old)
        let mut fix: Vec<(usize, f64, f64)> = Vec::new();
        for &a in &touched {
            let cell = spec.unlinear(a);
            let n_old = neighbor_elements(cell, r1, &old_binning);
            let n_new = neighbor_elements(cell, r1, &self.binning);
            let mut cur = 0.0;
            let mut prev = 0.0;
            for (set, sign) in [(set_difference(&n_new, &n_old), -1.0), (set_difference(&n_old, &n_new), 1.0)] {
                for m in set {
                    let w = self.cell_weights(a, m)?;
                    cur += sign * self.history.contribution_lagged(&w, m, 0);
                    prev += sign * self.history.contribution_lagged(&w, m, 1);
                }
            }
            fix.push((a, cur, prev));
        }
        for (a, cur, prev) in fix {
            self.grid.current[a] += cur;
            self.grid.previous[a] += prev;
        }
        self.rebuild()
    }

    /// Advance one step with Neumann data from `source` at `t = n tau`.
    pub fn step(&mut self, source: &dyn NeumannSource) -> Result<()> {
        if let Some(v) = self.pending_vertices.take() {
            self.rebin_dynamic(&v)?;
        }
        let n = self.step_index();
        let t = n as f64 * self.tau();
        let mut g = std::mem::take(&mut self.g_buf);
        source.neumann(&self.elements, t, &mut g);
        let r = self.step_with(&g);
        self.g_buf = g;
        r
    }

    /// Advance one step with explicit Neumann data `g_n`.
    pub fn step_with(&mut self, g_n: &[f64]) -> Result<()> {
        if let Some(v) = self.pending_vertices.take() {
            self.rebin_dynamic(&v)?;
        }
        // grid to level n with the step n-1 corrections held in the table
        fdtd_far_step(&mut self.grid, &self.plan, &self.table);
        self.history.advance(g_n)?;
        self.refresh_table();
        let phi = self.update_dirichlet();
        self.history.set_dirichlet(&phi)?;
        self.patch_table(&phi);
        self.last_dirichlet = phi;
        for (tap, probe) in self.listeners.iter_mut().zip(&self.listener_probes) {
            let mut near = 0.0;
            for (m, w) in &probe.near {
                near += self.history.contribution(w, *m);
            }
            let mut far = 0.0;
            for link in &probe.far {
                let mut v = self.grid.current[link.cell];
                for &(slot, sign) in &link.corrections {
                    v += sign * self.table.values[slot];
                }
                far += link.weight * v;
            }
            tap.samples.push(near + far);
        }
        Ok(())
    }

    /// Recompute the contribution table from the history head. Inside a
    /// step the head holds `Phi_n = 0` at this point.
    pub fn refresh_table(&mut self) {
        let hist = &self.history;
        let values: Vec<f64> = self
            .table
            .pairs
            .par_iter()
            .zip(&self.table.weights)
            .map(|(&(_, m), w)| hist.contribution(w, m))
            .collect();
        self.table.values = values;
    }

    fn patch_table(&mut self, phi: &[f64]) {
        for ((&(_, m), w), v) in self.table.pairs.iter().zip(&self.table.weights).zip(self.table.values.iter_mut()) {
            *v += w.d[0] * phi[m];
        }
    }

    /// Diagonal Dirichlet update for the current step (history head holds
    /// `G_n` and `Phi_n = 0`, grid at level `n`).
    pub fn update_dirichlet(&self) -> Vec<f64> {
        let hist = &self.history;
        let base: Vec<f64> = (0..self.elements.len())
            .into_par_iter()
            .map(|i| {
                let e = &self.elements[i];
                let mut near = 0.0;
                for (m, w) in &self.near[i] {
                    near += hist.contribution(w, *m);
                }
                (near + e.area * self.far_value(&self.far[i])) / alpha(e)
            })
            .collect();
        let mut phi = base.clone();
        for _ in 0..self.config.dirichlet_sweeps {
            phi = (0..self.elements.len())
                .into_par_iter()
                .map(|i| {
                    let mut acc = 0.0;
                    for (m, w) in &self.near[i] {
                        if *m != i {
                            acc += w.d[0] * phi[*m];
                        }
                    }
                    base[i] + acc / alpha(&self.elements[i])
                })
                .collect();
        }
        phi
    }
}

/// Write `step, time, pressure` rows.
pub fn write_listener_csv(path: impl AsRef<Path>, samples: &[f64], tau: f64) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "time", "pressure"])?;
    for (n, p) in samples.iter().enumerate() {
        w.write_record([n.to_string(), format!("{:e}", n as f64 * tau), format!("{p:e}")])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Mono 16-bit WAV at `round(1 / tau)` Hz, peak-normalised. The scale
/// factor (Pa at full scale) goes to `<path>.scale.txt`. Returns the scale.
pub fn write_listener_wav(path: impl AsRef<Path>, samples: &[f64], tau: f64) -> Result<f64> {
    let path = path.as_ref();
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: (1.0 / tau).round() as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut wav = hound::WavWriter::create(path, spec)?;
    for s in samples {
        let v = if peak > 0.0 { s / peak } else { 0.0 };
        wav.write_sample((v * i16::MAX as f64).round() as i16)?;
    }
    wav.finalize()?;
    let side = path.with_extension("scale.txt");
    let mut f = std::fs::File::create(&side).map_err(|e| Error::io(&side, e))?;
    writeln!(f, "full_scale_pa={peak:e}").map_err(|e| Error::io(&side, e))?;
    Ok(peak)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::TriangleMesh;
    use crate::sources::Silent;

    fn small_scene() -> (Vec<BoundaryElement>, GridSpec) {
        let spec = GridSpec::cube(Vec3::zeros(), 0.4, 16).unwrap();
        let mesh = TriangleMesh::icosphere(Vec3::new(0.003, -0.002, 0.001), 0.04, 1);
        (mesh.boundary_elements(), spec)
    }

    fn config() -> HybridConfig {
        HybridConfig {
            history: 16,
            ..Default::default()
        }
    }

    #[test]
    fn defaults() {
        let c = HybridConfig::default();
        assert_eq!((c.r1, c.r2, c.history, c.dirichlet_sweeps), (5, 4, 64, 2));
        assert_eq!(c.absorber, Absorber::Higdon);
        assert!(HybridConfig { r1: 2, ..c.clone() }.validate().is_err());
    }

    #[test]
    fn zero_input_keeps_zero_state() {
        let (e, spec) = small_scene();
        let mut s = SolverState::new(e, spec, config()).unwrap();
        s.add_listener(Vec3::new(0.12, 0.0, 0.0)).unwrap();
        for _ in 0..10 {
            s.step(&Silent).unwrap();
        }
        assert_eq!(s.grid.max_abs(), 0.0);
        assert!(s.dirichlet().iter().all(|&p| p == 0.0));
        assert!(s.listeners[0].samples.iter().all(|&p| p == 0.0));
        assert_eq!(s.listeners[0].samples.len(), 10);
    }

    #[test]
    fn static_scene_does_not_touch_cache() {
        let (e, spec) = small_scene();
        let mut s = SolverState::new(e, spec, config()).unwrap();
        let computed = s.cache.computed();
        let g: Vec<f64> = (0..s.elements.len()).map(|m| (m as f64).sin()).collect();
        s.step_with(&g).unwrap();
        s.step_with(&g).unwrap();
        assert_eq!(s.cache.computed(), computed);
        assert_eq!(s.cache.invalidations(), 0);
    }

    #[test]
    fn rebin_without_motion_is_noop() {
        let (e, spec) = small_scene();
        let mut s = SolverState::new(e, spec, config()).unwrap();
        let mesh_vertices: Vec<Vec3> = {
            let mut v = vec![Vec3::zeros(); 1 + s.elements.iter().flat_map(|e| e.vertex_ids).max().unwrap()];
            for e in &s.elements {
                for k in 0..3 {
                    v[e.vertex_ids[k]] = e.vertices[k];
                }
            }
            v
        };
        let before = s.binning.clone();
        s.rebin_dynamic(&mesh_vertices).unwrap();
        assert_eq!(s.binning, before);
        assert_eq!(s.cache.invalidations(), 0);
    }

    #[test]
    fn elements_in_absorbing_layer_are_rejected() {
        let spec = GridSpec::cube(Vec3::zeros(), 0.4, 16).unwrap();
        let mesh = TriangleMesh::icosphere(Vec3::new(0.17, 0.0, 0.0), 0.02, 1);
        assert!(matches!(
            SolverState::new(mesh.boundary_elements(), spec, config()),
            Err(Error::ElementInAbsorbingLayer { .. })
        ));
    }

    #[test]
    fn listener_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let samples = [0.0, 0.5, -1.0, 0.25];
        write_listener_csv(dir.path().join("l.csv"), &samples, 1e-4).unwrap();
        let peak = write_listener_wav(dir.path().join("l.wav"), &samples, 1e-4).unwrap();
        assert_eq!(peak, 1.0);
        let mut r = hound::WavReader::open(dir.path().join("l.wav")).unwrap();
        assert_eq!(r.spec().sample_rate, 10000);
        let read: Vec<i16> = r.samples::<i16>().map(|s| s.unwrap()).collect();
        assert_eq!(read, vec![0, 16384, -32767, 8192]);
        let side = std::fs::read_to_string(dir.path().join("l.scale.txt")).unwrap();
        assert!(side.starts_with("full_scale_pa="));
    }
}

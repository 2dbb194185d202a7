//! Neumann data providers: the analytic monopole drive, file-based modal
//! vibration data, and the start-up envelope.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Vec3;
use crate::mesh::{BoundaryElement, Remeshed};

/// Density of air used to turn surface acceleration into a pressure
/// gradient, kg/m^3.
pub const AIR_DENSITY: f64 = 1.225;

/// Supplies the Neumann data `G_n` (normal pressure derivative along the
/// outward normal) of every element at time `t`.
pub trait NeumannSource: Sync {
    fn neumann(&self, elements: &[BoundaryElement], t: f64, out: &mut [f64]);

    /// Lowest driven frequency, Hz; `None` for a silent source.
    fn base_frequency(&self) -> Option<f64>;
}

/// Smoothstep `3u^2 - 2u^3`, `u = clamp(t / t_ramp, 0, 1)`.
pub fn ramp_envelope(t: f64, t_ramp: f64) -> f64 {
    if t_ramp <= 0.0 {
        return if t >= 0.0 { 1.0 } else { 0.0 };
    }
    let u = (t / t_ramp).clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// Point source with field `Re[amplitude * exp(i(w t - k r)) / (4 pi r)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonopoleSource {
    pub center: [f64; 3],
    pub frequency: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Sound speed used for the wavenumber, m/s.
    #[serde(default = "default_c")]
    pub c: f64,
    /// Ramp length, s; defaults to five periods.
    #[serde(default)]
    pub ramp: Option<f64>,
    /// Finite-difference step for the normal derivative, m.
    #[serde(default)]
    pub delta: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn default_c() -> f64 {
    crate::SOUND_SPEED
}

impl MonopoleSource {
    pub fn new(center: Vec3, frequency: f64, c: f64) -> Result<Self> {
        if !(frequency > 0.0) {
            return Err(Error::Config(format!("monopole frequency must be positive, got {frequency}")));
        }
        Ok(MonopoleSource {
            center: [center.x, center.y, center.z],
            frequency,
            amplitude: 1.0,
            c,
            ramp: None,
            delta: None,
        })
    }

    pub fn center(&self) -> Vec3 {
        Vec3::from(self.center)
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI * self.frequency / self.c
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI * self.frequency
    }

    pub fn ramp_time(&self) -> f64 {
        self.ramp.unwrap_or(5.0 / self.frequency)
    }

    /// Set the finite-difference step to `1e-4 h`.
    pub fn with_grid_step(mut self, h: f64) -> Self {
        self.delta = Some(1e-4 * h);
        self
    }

    /// Steady-state amplitude `amplitude / (4 pi r)` at `x`.
    pub fn amplitude_at(&self, x: &Vec3) -> f64 {
        self.amplitude / (4.0 * PI * (x - self.center()).norm())
    }
}

/// `Re[amplitude * exp(i(w t - k r)) / (4 pi r)]`.
pub fn monopole_pressure(x: &Vec3, source: &MonopoleSource, t: f64) -> Result<f64> {
    let r = (x - source.center()).norm();
    if !(r > 0.0) {
        return Err(Error::CoincidentPoints);
    }
    Ok(source.amplitude * (source.omega() * t - source.wavenumber() * r).cos() / (4.0 * PI * r))
}

/// Outward normal derivative of the monopole field at the element centre by
/// central differences, times the ramp envelope.
pub fn monopole_neumann(element: &BoundaryElement, source: &MonopoleSource, t: f64) -> Result<f64> {
    let delta = source.delta.unwrap_or(1e-6);
    let plus = monopole_pressure(&(element.center + element.normal * delta), source, t)?;
    let minus = monopole_pressure(&(element.center - element.normal * delta), source, t)?;
    Ok((plus - minus) / (2.0 * delta) * ramp_envelope(t, source.ramp_time()))
}

impl NeumannSource for MonopoleSource {
    fn neumann(&self, elements: &[BoundaryElement], t: f64, out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(elements) {
            // the centre is validated to lie inside the surface
            *o = monopole_neumann(e, self, t).unwrap_or(0.0);
        }
    }

    fn base_frequency(&self) -> Option<f64> {
        Some(self.frequency)
    }
}

/// Complex surface acceleration amplitudes per element and mode.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalNeumannData {
    /// `amplitudes[mode][element]`.
    pub amplitudes: Vec<Vec<Complex64>>,
    pub frequencies: Vec<f64>,
    pub num_elements: usize,
}

#[derive(Debug, Deserialize)]
struct ModalRow {
    element: usize,
    mode: usize,
    re: f64,
    im: f64,
    frequency: f64,
}

impl ModalNeumannData {
    pub fn zeros(num_elements: usize, frequencies: Vec<f64>) -> Self {
        ModalNeumannData {
            amplitudes: vec![vec![Complex64::new(0.0, 0.0); num_elements]; frequencies.len()],
            frequencies,
            num_elements,
        }
    }

    pub fn num_modes(&self) -> usize {
        self.frequencies.len()
    }

    /// Carry the table over to a remeshed surface; children take their
    /// source triangle's amplitude.
    pub fn transfer(&self, remeshed: &Remeshed) -> ModalNeumannData {
        ModalNeumannData {
            amplitudes: self.amplitudes.iter().map(|a| remeshed.transfer(a)).collect(),
            frequencies: self.frequencies.clone(),
            num_elements: remeshed.parent.len(),
        }
    }

    pub fn scaled(&self, k: f64) -> ModalNeumannData {
        ModalNeumannData {
            amplitudes: self
                .amplitudes
                .iter()
                .map(|a| a.iter().map(|z| z * k).collect())
                .collect(),
            ..self.clone()
        }
    }

    /// Drive for one mode.
    pub fn mode(&self, mode: usize) -> Result<ModalSource<'_>> {
        if mode >= self.num_modes() {
            return Err(Error::Config(format!("mode {mode} not present ({} modes)", self.num_modes())));
        }
        Ok(ModalSource { data: self, mode })
    }
}

/// Read `element, mode, re, im, frequency` rows (header line optional).
/// Missing (element, mode) pairs are zero.
pub fn load_modal_neumann(path: impl AsRef<Path>, num_elements: usize) -> Result<ModalNeumannData> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let has_header = text
        .lines()
        .next()
        .map(|l| l.split(',').next().unwrap_or("").trim().parse::<f64>().is_err())
        .unwrap_or(false);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        if i == 0 && has_header {
            continue;
        }
        let rec = rec?;
        let row: ModalRow = rec.deserialize(None).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if row.element >= num_elements {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("element {} out of range ({num_elements} elements)", row.element),
            });
        }
        rows.push((i + 1, row));
    }
    let num_modes = rows.iter().map(|(_, r)| r.mode + 1).max().unwrap_or(0);
    let mut frequencies = vec![f64::NAN; num_modes];
    for (line, r) in &rows {
        let f = &mut frequencies[r.mode];
        if f.is_nan() {
            *f = r.frequency;
        } else if *f != r.frequency {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: *line,
                message: format!("mode {} has conflicting frequencies {} and {}", r.mode, f, r.frequency),
            });
        }
    }
    let mut data = ModalNeumannData::zeros(num_elements, frequencies.iter().map(|f| if f.is_nan() { 0.0 } else { *f }).collect());
    for (_, r) in rows {
        data.amplitudes[r.mode][r.element] = Complex64::new(r.re, r.im);
    }
    Ok(data)
}

/// One vibration mode as a Neumann source:
/// `G = -rho0 * Re[a * exp(i w t)] * ramp(t)`.
#[derive(Clone, Copy, Debug)]
pub struct ModalSource<'a> {
    data: &'a ModalNeumannData,
    mode: usize,
}

impl ModalSource<'_> {
    pub fn frequency(&self) -> f64 {
        self.data.frequencies[self.mode]
    }
}

impl NeumannSource for ModalSource<'_> {
    fn neumann(&self, _elements: &[BoundaryElement], t: f64, out: &mut [f64]) {
        let f = self.frequency();
        let phase = Complex64::from_polar(1.0, 2.0 * PI * f * t);
        let env = if f > 0.0 { ramp_envelope(t, 5.0 / f) } else { 0.0 };
        for (o, a) in out.iter_mut().zip(&self.data.amplitudes[self.mode]) {
            *o = -AIR_DENSITY * (a * phase).re * env;
        }
    }

    fn base_frequency(&self) -> Option<f64> {
        Some(self.frequency())
    }
}

/// Neumann data that is zero forever.
#[derive(Clone, Copy, Debug, Default)]
pub struct Silent;

impl NeumannSource for Silent {
    fn neumann(&self, _elements: &[BoundaryElement], _t: f64, out: &mut [f64]) {
        out.fill(0.0);
    }

    fn base_frequency(&self) -> Option<f64> {
        None
    }
}

/// A source multiplied by a constant.
pub struct Scaled<'a, S: ?Sized> {
    pub inner: &'a S,
    pub factor: f64,
}

impl<S: NeumannSource + ?Sized> NeumannSource for Scaled<'_, S> {
    fn neumann(&self, elements: &[BoundaryElement], t: f64, out: &mut [f64]) {
        self.inner.neumann(elements, t, out);
        for o in out.iter_mut() {
            *o *= self.factor;
        }
    }

    fn base_frequency(&self) -> Option<f64> {
        self.inner.base_frequency()
    }
}

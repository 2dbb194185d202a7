//! Convolution-quadrature weights for the retarded single- and double-layer
//! potentials.
//!
//! For a Laplace-domain kernel `K(s)` the BDF2 convolution quadrature
//! weights are the Taylor coefficients of `K(gamma(z) / tau)` with
//! `gamma(z) = 3/2 - 2 z + z^2 / 2`. They are recovered by sampling on a
//! circle of radius `lambda < 1` and applying a scaled inverse DFT of size
//! `nf`:
//!
//! ```text
//! w_j = Re[ lambda^-j / nf * sum_l K(gamma(lambda zeta_l) / tau) zeta_l^-j ],  zeta_l = exp(2 pi i l / nf)
//! ```

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::lattice::Vec3;
use crate::mesh::{composite_rule, quadrature_points, BoundaryElement, QuadratureRule};

/// Time discretisation of the retarded potentials.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CqmConfig {
    /// Time step, s.
    pub tau: f64,
    /// History length `L`; weights are kept for `j = 0..=L`.
    pub history: usize,
    /// Sound speed, m/s.
    pub c: f64,
    /// Transform size.
    pub nf: usize,
    /// Contour radius.
    pub lambda: f64,
}

impl CqmConfig {
    /// `nf = 2 (L + 1)` and `lambda = 1e-16^(1 / (2 nf))`, so that
    /// `lambda^nf = 1e-8`.
    pub fn new(tau: f64, history: usize, c: f64) -> Result<Self> {
        let nf = 2 * (history + 1);
        let lambda = 1e-16f64.powf(1.0 / (2.0 * nf as f64));
        let cfg = CqmConfig {
            tau,
            history,
            c,
            nf,
            lambda,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.c > 0.0) {
            return Err(Error::Config(format!("sound speed must be positive, got {}", self.c)));
        }
        if self.nf < self.history + 1 {
            return Err(Error::Config(format!(
                "transform size {} shorter than history {}",
                self.nf,
                self.history + 1
            )));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Config(format!("lambda must lie in (0, 1), got {}", self.lambda)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.history + 1
    }
}

/// BDF2 generating polynomial.
#[inline]
pub fn bdf2(z: Complex64) -> Complex64 {
    1.5 - 2.0 * z + 0.5 * z * z
}

/// `exp(-s r / c) / (4 pi r)`.
pub fn helmholtz_single_layer(r: f64, s: Complex64, c: f64) -> Result<Complex64> {
    if !(r > 0.0) {
        return Err(Error::CoincidentPoints);
    }
    Ok((-s * r / c).exp() / (4.0 * PI * r))
}

/// Normal derivative of the single-layer kernel with respect to the source
/// point `y`:
///
/// ```text
/// dK/dn_y = (1 + s r / c) exp(-s r / c) / (4 pi r^2) * ((x - y) . n_y) / r
/// ```
pub fn helmholtz_double_layer(x: &Vec3, y: &Vec3, n_y: &Vec3, s: Complex64, c: f64) -> Result<Complex64> {
    let d = x - y;
    let r = d.norm();
    if !(r > 0.0) {
        return Err(Error::CoincidentPoints);
    }
    let cos = d.dot(n_y) / r;
    Ok((1.0 + s * r / c) * (-s * r / c).exp() / (4.0 * PI * r * r) * cos)
}

/// Single- and double-layer weights `v_j`, `d_j` for `j = 0..=L`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairWeights {
    pub v: Box<[f64]>,
    pub d: Box<[f64]>,
}

impl PairWeights {
    pub fn zeros(len: usize) -> Self {
        PairWeights {
            v: vec![0.0; len].into_boxed_slice(),
            d: vec![0.0; len].into_boxed_slice(),
        }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

/// One source quadrature sample: weight already multiplied by the element
/// area, position relative to the target frame, normal.
#[derive(Clone, Copy, Debug)]
struct SourceSample {
    weight: f64,
    y: Vec3,
    n: Vec3,
}

/// Precomputed contour and FFT plan for one [`CqmConfig`].
pub struct CqmTransform {
    config: CqmConfig,
    /// `s_l / c` for `l = 0..=nf/2`.
    s_over_c: Vec<Complex64>,
    /// `lambda^-j / nf`.
    scale: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CqmTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CqmTransform").field("config", &self.config).finish()
    }
}

/// Below this distance a target counts as lying on the source element, m.
pub const SINGULAR_RADIUS: f64 = 1e-6;

impl CqmTransform {
    pub fn new(config: CqmConfig) -> Result<Self> {
        config.validate()?;
        let nf = config.nf;
        let s_over_c = (0..=nf / 2)
            .map(|l| {
                let zeta = Complex64::from_polar(1.0, 2.0 * PI * l as f64 / nf as f64);
                bdf2(config.lambda * zeta) / (config.tau * config.c)
            })
            .collect();
        let scale = (0..config.len())
            .map(|j| config.lambda.powi(-(j as i32)) / nf as f64)
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(nf);
        Ok(CqmTransform {
            config,
            s_over_c,
            scale,
            fft,
        })
    }

    pub fn config(&self) -> &CqmConfig {
        &self.config
    }

    /// Laplace-domain parameter `s_l` of transform index `l`.
    pub fn frequency(&self, l: usize) -> Complex64 {
        let nf = self.config.nf;
        let l = l % nf;
        if l <= nf / 2 {
            self.s_over_c[l] * self.config.c
        } else {
            self.s_over_c[nf - l].conj() * self.config.c
        }
    }

    /// Turn the half-spectrum `l = 0..=nf/2` of a real-coefficient kernel
    /// into real weights.
    fn invert(&self, half: &[Complex64]) -> Result<Box<[f64]>> {
        let nf = self.config.nf;
        let mut buf = vec![Complex64::new(0.0, 0.0); nf];
        buf[..half.len()].copy_from_slice(half);
        for l in half.len()..nf {
            buf[l] = half[nf - l].conj();
        }
        self.fft.process(&mut buf);
        let mut peak = 0.0f64;
        let mut residue = 0.0f64;
        let out: Box<[f64]> = (0..self.config.len())
            .map(|j| {
                let w = buf[j] * self.scale[j];
                peak = peak.max(w.re.abs());
                residue = residue.max(w.im.abs());
                w.re
            })
            .collect();
        if peak > 0.0 && residue > 1e-8 * peak {
            return Err(Error::ComplexResidue(residue / peak));
        }
        Ok(out)
    }

    /// Accumulate both kernels for one target point over a set of source
    /// samples into the half spectra.
    fn accumulate(&self, x: &Vec3, target_weight: f64, sources: &[SourceSample], v: &mut [Complex64], d: &mut [Complex64]) -> Result<()> {
        for src in sources {
            let diff = x - src.y;
            let r = diff.norm();
            if !(r > 0.0) {
                return Err(Error::CoincidentPoints);
            }
            let w = target_weight * src.weight;
            let wv = w / (4.0 * PI * r);
            let wd = w * diff.dot(&src.n) / (4.0 * PI * r * r * r);
            for (l, s) in self.s_over_c.iter().enumerate() {
                let sr = s * r;
                let e = (-sr).exp();
                v[l] += wv * e;
                d[l] += wd * (1.0 + sr) * e;
            }
        }
        Ok(())
    }

    fn samples(element: &BoundaryElement, rule: &QuadratureRule, frame: &Vec3) -> Vec<SourceSample> {
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| SourceSample {
                weight: w * element.area,
                y: p - frame,
                n: element.normal,
            })
            .collect()
    }

    /// Weights `v_j(x)`, `d_j(x)` of the potential of `source` at the point
    /// `x`. The source quadrature is refined as `x` approaches the element.
    pub fn point_weights(&self, x: &Vec3, source: &BoundaryElement) -> Result<PairWeights> {
        // work in a frame anchored at x so translated pairs give identical bits
        let local = translate_element(source, x);
        if distance_to_triangle(&Vec3::zeros(), &local.vertices) < SINGULAR_RADIUS {
            return Err(Error::SingularPoint {
                point: [x.x, x.y, x.z],
                element: source.id,
            });
        }
        let rule = point_source_rule(&local, local.center.norm());
        let samples = Self::samples(&local, &rule, &Vec3::zeros());
        let half = self.s_over_c.len();
        let mut v = vec![Complex64::new(0.0, 0.0); half];
        let mut d = vec![Complex64::new(0.0, 0.0); half];
        self.accumulate(&Vec3::zeros(), 1.0, &samples, &mut v, &mut d)?;
        Ok(PairWeights {
            v: self.invert(&v)?,
            d: self.invert(&d)?,
        })
    }

    /// Row weights `V_{j,i,m}`, `D_{j,i,m}`: the potential of `source`
    /// integrated over `target` (area times the target quadrature). Adjacent
    /// pairs use the three-point rule on both elements, other pairs the
    /// centroid rule; the self pair goes through [`Self::self_weights`].
    pub fn row_weights(&self, target: &BoundaryElement, source: &BoundaryElement) -> Result<PairWeights> {
        if target.id == source.id && target.vertex_ids == source.vertex_ids {
            let mut w = self.self_weights(target)?;
            for v in w.v.iter_mut() {
                *v *= target.area;
            }
            return Ok(w);
        }
        let order = if target.is_adjacent(source) { 3 } else { 1 };
        let frame = target.vertices[0];
        let t_local = translate_element(target, &frame);
        let s_local = translate_element(source, &frame);
        let t_rule = quadrature_points(&t_local, order)?;
        let s_rule = quadrature_points(&s_local, order)?;
        let samples = Self::samples(&s_local, &s_rule, &Vec3::zeros());
        let half = self.s_over_c.len();
        let mut v = vec![Complex64::new(0.0, 0.0); half];
        let mut d = vec![Complex64::new(0.0, 0.0); half];
        for (x, w) in t_rule.points.iter().zip(&t_rule.weights) {
            self.accumulate(x, w * t_local.area, &samples, &mut v, &mut d)?;
        }
        Ok(PairWeights {
            v: self.invert(&v)?,
            d: self.invert(&d)?,
        })
    }

    /// Self weights of an element evaluated at its own centroid.
    ///
    /// The double layer vanishes on a flat element. The single layer splits
    /// into the static integral of `1/(4 pi r)`, done in closed form, and
    /// the regular remainder `(exp(-s r/c) - 1) / (4 pi r)`, done with a
    /// 48-point composite rule.
    pub fn self_weights(&self, element: &BoundaryElement) -> Result<PairWeights> {
        let local = translate_element(element, &element.center);
        let static_part = static_single_layer(&Vec3::zeros(), &local.vertices);
        let rule = composite_rule(&local, 2);
        let half = self.s_over_c.len();
        let mut v = vec![Complex64::new(static_part, 0.0); half];
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let r = p.norm();
            let wr = w * local.area / (4.0 * PI * r);
            for (l, s) in self.s_over_c.iter().enumerate() {
                v[l] += wr * ((-s * r).exp() - 1.0);
            }
        }
        Ok(PairWeights {
            v: self.invert(&v)?,
            d: vec![0.0; self.config.len()].into_boxed_slice(),
        })
    }
}

fn translate_element(e: &BoundaryElement, frame: &Vec3) -> BoundaryElement {
    BoundaryElement::new(
        e.id,
        e.vertex_ids,
        [e.vertices[0] - frame, e.vertices[1] - frame, e.vertices[2] - frame],
    )
}

/// Source rule for a point target at distance `dist` from the element
/// centroid.
fn point_source_rule(element: &BoundaryElement, dist: f64) -> QuadratureRule {
    let ratio = dist / element.max_edge();
    if ratio >= 4.0 {
        quadrature_points(element, 1).expect("order 1")
    } else if ratio >= 2.0 {
        quadrature_points(element, 3).expect("order 3")
    } else if ratio >= 1.0 {
        composite_rule(element, 1)
    } else if ratio >= 0.5 {
        composite_rule(element, 2)
    } else {
        composite_rule(element, 3)
    }
}

/// Shortest distance from `p` to the closed triangle `tri`.
pub fn distance_to_triangle(p: &Vec3, tri: &[Vec3; 3]) -> f64 {
    // Ericson, closest point on triangle
    let (a, b, c) = (tri[0], tri[1], tri[2]);
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (p - (a + ab * v)).norm();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (p - (a + ac * w)).norm();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + (c - b) * w)).norm();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (p - (a + ab * v + ac * w)).norm()
}

/// `\int_T 1 / (4 pi |p - y|) dA_y` for `p` in the plane of `T` and inside
/// it, in closed form: the triangle is fanned from `p` and each sub-triangle
/// contributes `d (asinh(t_b / d) - asinh(t_a / d))`, with `d` the distance
/// from `p` to the edge line and `t_a`, `t_b` the signed positions of the
/// edge end points along it.
pub fn static_single_layer(p: &Vec3, tri: &[Vec3; 3]) -> f64 {
    let mut total = 0.0;
    for k in 0..3 {
        let a = tri[k];
        let b = tri[(k + 1) % 3];
        let e = (b - a).normalize();
        let foot = a + e * (p - a).dot(&e);
        let d = (p - foot).norm();
        if d < 1e-300 {
            continue;
        }
        let ta = (a - foot).dot(&e);
        let tb = (b - foot).dot(&e);
        total += d * ((tb / d).asinh() - (ta / d).asinh());
    }
    total / (4.0 * PI)
}

/// Diagonal coefficient `alpha_i = |Gamma_i| / 2 - [D_0]_ii`; the double
/// layer self term of a flat element is zero.
pub fn alpha(element: &BoundaryElement) -> f64 {
    0.5 * element.area
}

/// Who a cached weight table belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TargetKey {
    Element(usize),
    Cell(usize),
    Point(u64),
}

impl TargetKey {
    fn tag(&self) -> (u8, u64) {
        match *self {
            TargetKey::Element(i) => (0, i as u64),
            TargetKey::Cell(i) => (1, i as u64),
            TargetKey::Point(i) => (2, i),
        }
    }

    fn from_tag(tag: u8, id: u64) -> Result<Self> {
        Ok(match tag {
            0 => TargetKey::Element(id as usize),
            1 => TargetKey::Cell(id as usize),
            2 => TargetKey::Point(id),
            _ => return Err(Error::CacheMismatch),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PairKey {
    pub target: TargetKey,
    pub source: usize,
}

#[derive(Clone, Debug)]
struct CacheEntry {
    signature: Vec<Vec3>,
    weights: Arc<PairWeights>,
}

/// Relative geometry of a pair: source corners (and target corners for
/// element targets) measured from the target reference point.
pub fn pair_signature(target_ref: &Vec3, target: Option<&BoundaryElement>, source: &BoundaryElement) -> Vec<Vec3> {
    let mut sig: Vec<Vec3> = source.vertices.iter().map(|v| v - target_ref).collect();
    if let Some(t) = target {
        sig.extend(t.vertices.iter().map(|v| v - target_ref));
    }
    sig
}

/// Concurrent store of weight tables keyed by (target, source) pair.
///
/// Entries remember the relative geometry they were computed for; a lookup
/// whose geometry differs by more than the tolerance recomputes and counts
/// an invalidation.
#[derive(Debug, Default)]
pub struct WeightCache {
    entries: RwLock<HashMap<PairKey, CacheEntry>>,
    invalidations: AtomicUsize,
    computed: AtomicUsize,
}

impl WeightCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn invalidations(&self) -> usize {
        self.invalidations.load(Ordering::Relaxed)
    }

    /// Number of tables computed (fresh or after invalidation).
    pub fn computed(&self) -> usize {
        self.computed.load(Ordering::Relaxed)
    }

    pub fn get(&self, key: &PairKey) -> Option<Arc<PairWeights>> {
        self.entries
            .read()
            .expect("cache lock")
            .get(key)
            .map(|e| e.weights.clone())
    }

    pub fn get_or_compute(
        &self,
        key: PairKey,
        signature: Vec<Vec3>,
        tolerance: f64,
        compute: impl FnOnce() -> Result<PairWeights>,
    ) -> Result<Arc<PairWeights>> {
        let stale = {
            let map = self.entries.read().expect("cache lock");
            match map.get(&key) {
                Some(entry) => {
                    let same = entry.signature.len() == signature.len()
                        && entry
                            .signature
                            .iter()
                            .zip(&signature)
                            .all(|(a, b)| (a - b).amax() <= tolerance);
                    if same {
                        return Ok(entry.weights.clone());
                    }
                    true
                }
                None => false,
            }
        };
        let weights = Arc::new(compute()?);
        self.computed.fetch_add(1, Ordering::Relaxed);
        if stale {
            self.invalidations.fetch_add(1, Ordering::Relaxed);
        }
        self.entries.write().expect("cache lock").insert(
            key,
            CacheEntry {
                signature,
                weights: weights.clone(),
            },
        );
        Ok(weights)
    }

    /// Binary cache file: five little-endian `f64` header values
    /// (`nf, L, tau, c, lambda`), a `u64` entry count, then per entry a
    /// `u8` target kind, `u64` target id, `u64` source id, `u32` signature
    /// length with that many `[f64; 3]` points, and the `L + 1` single-layer
    /// followed by the `L + 1` double-layer weights.
    pub fn save(&self, path: impl AsRef<Path>, config: &CqmConfig) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        for v in header(config) {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        let map = self.entries.read().expect("cache lock");
        let mut keys: Vec<&PairKey> = map.keys().collect();
        keys.sort_by_key(|k| (k.target.tag(), k.source));
        out.write_all(&(keys.len() as u64).to_le_bytes()).map_err(io)?;
        for key in keys {
            let entry = &map[key];
            let (tag, id) = key.target.tag();
            out.write_all(&[tag]).map_err(io)?;
            out.write_all(&id.to_le_bytes()).map_err(io)?;
            out.write_all(&(key.source as u64).to_le_bytes()).map_err(io)?;
            out.write_all(&(entry.signature.len() as u32).to_le_bytes()).map_err(io)?;
            for p in &entry.signature {
                for c in p.iter() {
                    out.write_all(&c.to_le_bytes()).map_err(io)?;
                }
            }
            for w in entry.weights.v.iter().chain(entry.weights.d.iter()) {
                out.write_all(&w.to_le_bytes()).map_err(io)?;
            }
        }
        out.flush().map_err(io)
    }

    /// Load a cache file written by [`Self::save`]. A header that does not
    /// match `config` yields [`Error::CacheMismatch`].
    pub fn load(path: impl AsRef<Path>, config: &CqmConfig) -> Result<WeightCache> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut input = BufReader::new(File::open(path).map_err(io)?);
        let mut f64_buf = [0u8; 8];
        let mut read_f64 = |r: &mut BufReader<File>| -> Result<f64> {
            r.read_exact(&mut f64_buf).map_err(|e| Error::io(path, e))?;
            Ok(f64::from_le_bytes(f64_buf))
        };
        for expected in header(config) {
            if read_f64(&mut input)?.to_bits() != expected.to_bits() {
                return Err(Error::CacheMismatch);
            }
        }
        let mut u64_buf = [0u8; 8];
        input.read_exact(&mut u64_buf).map_err(io)?;
        let count = u64::from_le_bytes(u64_buf);
        let len = config.len();
        let mut map = HashMap::new();
        for _ in 0..count {
            let mut tag = [0u8; 1];
            input.read_exact(&mut tag).map_err(io)?;
            input.read_exact(&mut u64_buf).map_err(io)?;
            let id = u64::from_le_bytes(u64_buf);
            input.read_exact(&mut u64_buf).map_err(io)?;
            let source = u64::from_le_bytes(u64_buf) as usize;
            let mut u32_buf = [0u8; 4];
            input.read_exact(&mut u32_buf).map_err(io)?;
            let nsig = u32::from_le_bytes(u32_buf) as usize;
            let mut signature = Vec::with_capacity(nsig);
            for _ in 0..nsig {
                let x = read_f64(&mut input)?;
                let y = read_f64(&mut input)?;
                let z = read_f64(&mut input)?;
                signature.push(Vec3::new(x, y, z));
            }
            let v = (0..len).map(|_| read_f64(&mut input)).collect::<Result<Box<[f64]>>>()?;
            let d = (0..len).map(|_| read_f64(&mut input)).collect::<Result<Box<[f64]>>>()?;
            map.insert(
                PairKey {
                    target: TargetKey::from_tag(tag[0], id)?,
                    source,
                },
                CacheEntry {
                    signature,
                    weights: Arc::new(PairWeights { v, d }),
                },
            );
        }
        Ok(WeightCache {
            entries: RwLock::new(map),
            ..Default::default()
        })
    }
}

fn header(config: &CqmConfig) -> [f64; 5] {
    [
        config.nf as f64,
        config.history as f64,
        config.tau,
        config.c,
        config.lambda,
    ]
}

//! Regular cell lattice shared by the far-field grid and element binning.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Integer cell coordinates `(u, v, w)`.
pub type CellIndex = [usize; 3];

/// Axis-aligned lattice of cubic cells of size `h`.
///
/// Cell `(u, v, w)` covers the half-open box
/// `[origin + u h, origin + (u + 1) h) x ...`; its centre sits at
/// `origin + (u + 1/2) h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: [f64; 3],
    pub h: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(origin: Vec3, h: f64, dims: [usize; 3]) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::Config(format!("cell size must be positive, got {h}")));
        }
        if dims.iter().any(|&n| n < 3) {
            return Err(Error::Config(format!("grid needs at least 3 cells per axis, got {dims:?}")));
        }
        Ok(GridSpec {
            origin: [origin.x, origin.y, origin.z],
            h,
            dims,
        })
    }

    /// Cubic domain of edge `size` centred on `center`, `n` cells per axis.
    pub fn cube(center: Vec3, size: f64, n: usize) -> Result<Self> {
        let h = size / n as f64;
        let origin = center - Vec3::repeat(0.5 * size);
        GridSpec::new(origin, h, [n; 3])
    }

    pub fn origin(&self) -> Vec3 {
        Vec3::from(self.origin)
    }

    pub fn num_cells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Row-major linear index, `w` fastest.
    #[inline]
    pub fn linear(&self, c: CellIndex) -> usize {
        (c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]
    }

    #[inline]
    pub fn unlinear(&self, idx: usize) -> CellIndex {
        let w = idx % self.dims[2];
        let rest = idx / self.dims[2];
        [rest / self.dims[1], rest % self.dims[1], w]
    }

    #[inline]
    pub fn cell_center(&self, c: CellIndex) -> Vec3 {
        Vec3::new(
            self.origin[0] + (c[0] as f64 + 0.5) * self.h,
            self.origin[1] + (c[1] as f64 + 0.5) * self.h,
            self.origin[2] + (c[2] as f64 + 0.5) * self.h,
        )
    }

    /// Cell whose half-open box contains `x`; points on a shared face go to
    /// the higher index.
    pub fn cell_of(&self, x: &Vec3) -> Option<CellIndex> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let t = ((x[a] - self.origin[a]) / self.h).floor();
            if !(t >= 0.0) || t >= self.dims[a] as f64 {
                return None;
            }
            c[a] = t as usize;
        }
        Some(c)
    }

    /// True when `c` is not in the outermost (absorbing) layer.
    pub fn is_interior(&self, c: CellIndex) -> bool {
        (0..3).all(|a| c[a] >= 1 && c[a] + 2 <= self.dims[a])
    }

    /// `r x r x r` block of cells centred on cell `c`, clamped to the grid.
    /// `r` must be odd.
    pub fn block_around_cell(&self, c: CellIndex, r: usize) -> [RangeInclusive<usize>; 3] {
        debug_assert!(r % 2 == 1, "cell-centred blocks need an odd width");
        let half = (r - 1) / 2;
        std::array::from_fn(|a| {
            let lo = c[a].saturating_sub(half);
            let hi = (c[a] + half).min(self.dims[a] - 1);
            lo..=hi
        })
    }

    /// The `r` cells per axis whose centres are nearest to `x`, clamped to
    /// the grid. For odd `r` this is the block centred on the cell
    /// containing `x`; for even `r` it is centred on the dual cell (the
    /// trilinear stencil of `x` grown by `r/2 - 1` rings).
    pub fn block_around_point(&self, x: &Vec3, r: usize) -> [RangeInclusive<usize>; 3] {
        assert!(r >= 1);
        std::array::from_fn(|a| {
            let s = (x[a] - self.origin[a]) / self.h;
            let (lo, hi) = if r % 2 == 1 {
                let centre = s.floor() as i64;
                let half = ((r - 1) / 2) as i64;
                (centre - half, centre + half)
            } else {
                let base = (s - 0.5).floor() as i64;
                (base - (r / 2 - 1) as i64, base + (r / 2) as i64)
            };
            let max = self.dims[a] as i64 - 1;
            let lo = lo.clamp(0, max) as usize;
            let hi = hi.clamp(0, max) as usize;
            lo..=hi
        })
    }

    /// Trilinear stencil of `x` over cell centres. Every stencil cell must be
    /// interior; the weights are non-negative and sum to one.
    pub fn trilinear(&self, x: &Vec3) -> Result<[(CellIndex, f64); 8]> {
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            let t = (x[a] - self.origin[a]) / self.h - 0.5;
            let f = t.floor();
            if !(f >= 1.0) || f + 3.0 > self.dims[a] as f64 {
                return Err(Error::PointOutsideInterior([x.x, x.y, x.z]));
            }
            base[a] = f as usize;
            frac[a] = t - f;
        }
        Ok(std::array::from_fn(|k| {
            let bits = [(k >> 2) & 1, (k >> 1) & 1, k & 1];
            let mut weight = 1.0;
            let mut cell = base;
            for a in 0..3 {
                if bits[a] == 1 {
                    weight *= frac[a];
                    cell[a] += 1;
                } else {
                    weight *= 1.0 - frac[a];
                }
            }
            (cell, weight)
        }))
    }

    /// Centre of the whole domain.
    pub fn domain_center(&self) -> Vec3 {
        self.origin() + 0.5 * self.h * Vec3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64)
    }
}

/// Iterate the cells of a block produced by [`GridSpec::block_around_cell`]
/// or [`GridSpec::block_around_point`].
pub fn block_cells(block: &[RangeInclusive<usize>; 3]) -> impl Iterator<Item = CellIndex> + '_ {
    block[0].clone().flat_map(move |u| {
        block[1]
            .clone()
            .flat_map(move |v| block[2].clone().map(move |w| [u, v, w]))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> GridSpec {
        GridSpec::new(Vec3::zeros(), 0.25, [8, 8, 8]).unwrap()
    }

    #[test]
    fn linear_round_trip() {
        let g = GridSpec::new(Vec3::zeros(), 1.0, [4, 5, 6]).unwrap();
        for i in 0..g.num_cells() {
            assert_eq!(g.linear(g.unlinear(i)), i);
        }
    }

    #[test]
    fn faces_go_to_higher_cell() {
        let g = spec();
        assert_eq!(g.cell_of(&Vec3::new(0.75, 0.1, 0.1)), Some([3, 0, 0]));
        assert_eq!(g.cell_of(&Vec3::new(-0.01, 0.1, 0.1)), None);
        assert_eq!(g.cell_of(&Vec3::new(2.0, 0.1, 0.1)), None);
    }

    #[test]
    fn trilinear_at_center_is_one_hot() {
        let g = spec();
        let x = g.cell_center([3, 4, 2]);
        let st = g.trilinear(&x).unwrap();
        for (c, w) in st {
            if c == [3, 4, 2] {
                assert_eq!(w, 1.0);
            } else {
                assert_eq!(w, 0.0);
            }
        }
    }

    #[test]
    fn even_block_contains_trilinear_stencil() {
        let g = spec();
        let x = Vec3::new(0.9, 1.1, 0.6);
        let block = g.block_around_point(&x, 4);
        let stencil = g.trilinear(&x).unwrap();
        for (c, _) in stencil {
            for a in 0..3 {
                let lo = c[a].saturating_sub(1);
                assert!(block[a].contains(&lo) && block[a].contains(&(c[a] + 1)));
            }
        }
        assert!(block.iter().all(|r| r.clone().count() == 4));
    }

    #[test]
    fn odd_block_is_centred() {
        let g = spec();
        let b = g.block_around_point(&g.cell_center([3, 3, 3]), 3);
        assert_eq!(b, [2..=4, 2..=4, 2..=4]);
        assert_eq!(g.block_around_cell([0, 3, 7], 3), [0..=1, 2..=4, 6..=7]);
    }

    proptest::proptest! {
        #[test]
        fn trilinear_reproduces_linear_fields(
            x in 0.4f64..1.6, y in 0.4f64..1.6, z in 0.4f64..1.6,
            a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0,
        ) {
            let g = spec();
            let p = Vec3::new(x, y, z);
            let st = g.trilinear(&p).unwrap();
            let sum: f64 = st.iter().map(|s| s.1).sum();
            proptest::prop_assert!((sum - 1.0).abs() < 1e-12);
            proptest::prop_assert!(st.iter().all(|s| s.1 >= 0.0));
            let f = |q: Vec3| a * q.x + b * q.y + c * q.z + 0.5;
            let interp: f64 = st.iter().map(|(cell, w)| w * f(g.cell_center(*cell))).sum();
            proptest::prop_assert!((interp - f(p)).abs() < 1e-12);
        }

        #[test]
        fn point_block_holds_its_cell(x in 0.01f64..1.99, y in 0.01f64..1.99, z in 0.01f64..1.99, r in 1usize..6) {
            let g = spec();
            let p = Vec3::new(x, y, z);
            let cell = g.cell_of(&p).unwrap();
            let block = g.block_around_point(&p, r);
            for a in 0..3 {
                proptest::prop_assert!(block[a].contains(&cell[a]));
                proptest::prop_assert!(block[a].end() - block[a].start() < r);
            }
        }
    }
}

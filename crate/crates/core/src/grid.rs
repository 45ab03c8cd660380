//! Periodic square-lattice geometry.
//!
//! Points live on an `L x L` torus. Differences between points are always
//! reported as minimum-image displacements in `[-L/2, L/2]` per axis; the side
//! length is required to be odd so that this representative is unique.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Range of sight of the agent, in lattice units.
pub const CAPTURE_RADIUS: f64 = std::f64::consts::SQRT_2;

/// Squared capture radius in lattice units; `di^2 + dj^2 <= 2` is the 3x3 block.
pub const CAPTURE_RADIUS_SQ: i64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    side: usize,
    spacing: f64,
}

impl GridSpec {
    pub fn new(side: usize, spacing: f64) -> Result<Self> {
        if side < 5 || side % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "lattice side must be odd and at least 5, got {side}"
            )));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lattice spacing must be positive, got {spacing}"
            )));
        }
        Ok(Self { side, spacing })
    }

    /// Unit-spacing lattice.
    pub fn unit(side: usize) -> Result<Self> {
        Self::new(side, 1.0)
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Number of lattice sites, `L^2`.
    #[inline]
    pub fn cells(&self) -> usize {
        self.side * self.side
    }

    #[inline]
    pub fn half(&self) -> i64 {
        (self.side / 2) as i64
    }

    /// Lattice center, where the agent starts.
    pub fn center(&self) -> LatticePoint {
        let c = (self.side / 2) as i64;
        LatticePoint { i: c, j: c }
    }

    /// Periodic wrap of an arbitrary integer pair into `[0, L)^2`.
    #[inline]
    pub fn wrap(&self, i: i64, j: i64) -> LatticePoint {
        let l = self.side as i64;
        LatticePoint {
            i: i.rem_euclid(l),
            j: j.rem_euclid(l),
        }
    }

    #[inline]
    fn wrap_component(&self, v: i64) -> i64 {
        let l = self.side as i64;
        let r = v.rem_euclid(l);
        if r > l / 2 {
            r - l
        } else {
            r
        }
    }

    /// Minimum-image representative of an arbitrary integer offset.
    #[inline]
    pub fn wrap_displacement(&self, di: i64, dj: i64) -> Displacement {
        Displacement {
            di: self.wrap_component(di),
            dj: self.wrap_component(dj),
        }
    }

    /// Minimum-image displacement `a - b`.
    #[inline]
    pub fn min_image(&self, a: LatticePoint, b: LatticePoint) -> Displacement {
        self.wrap_displacement(a.i - b.i, a.j - b.j)
    }

    /// Translate a point by an integer offset.
    #[inline]
    pub fn shift(&self, p: LatticePoint, di: i64, dj: i64) -> LatticePoint {
        self.wrap(p.i + di, p.j + dj)
    }

    /// Row-major linear index of a lattice point.
    #[inline]
    pub fn index(&self, p: LatticePoint) -> usize {
        p.i as usize * self.side + p.j as usize
    }

    #[inline]
    pub fn point(&self, index: usize) -> LatticePoint {
        LatticePoint {
            i: (index / self.side) as i64,
            j: (index % self.side) as i64,
        }
    }

    /// Linear index of a displacement in a table covering every offset of the torus.
    #[inline]
    pub fn displacement_index(&self, d: Displacement) -> usize {
        let l = self.side as i64;
        (d.di.rem_euclid(l) * l + d.dj.rem_euclid(l)) as usize
    }

    /// Inverse of [`GridSpec::displacement_index`].
    #[inline]
    pub fn displacement_at(&self, index: usize) -> Displacement {
        self.wrap_displacement((index / self.side) as i64, (index % self.side) as i64)
    }

    /// Every minimum-image displacement, in table order.
    pub fn displacements(&self) -> impl Iterator<Item = Displacement> + '_ {
        (0..self.cells()).map(|k| self.displacement_at(k))
    }

    /// Lattice points within the capture radius of `center`, the center included.
    /// Visit every cell `x` in row-major order together with the
    /// [`GridSpec::displacement_index`] of `from - x`.
    #[inline]
    pub fn for_each_offset(&self, from: LatticePoint, mut f: impl FnMut(usize, usize)) {
        let l = self.side as i64;
        let fi = from.i.rem_euclid(l);
        let fj = from.j.rem_euclid(l);
        let mut k = 0;
        for xi in 0..l {
            let mut di = fi - xi;
            if di < 0 {
                di += l;
            }
            let row = (di * l) as usize;
            for xj in 0..l {
                let mut dj = fj - xj;
                if dj < 0 {
                    dj += l;
                }
                f(k, row + dj as usize);
                k += 1;
            }
        }
    }

    pub fn capture_neighborhood(&self, center: LatticePoint) -> Vec<LatticePoint> {
        capture_offsets()
            .map(|(di, dj)| self.shift(center, di, dj))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticePoint {
    pub i: i64,
    pub j: i64,
}

impl LatticePoint {
    pub const fn new(i: i64, j: i64) -> Self {
        Self { i, j }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Displacement {
    pub di: i64,
    pub dj: i64,
}

impl Displacement {
    pub const fn new(di: i64, dj: i64) -> Self {
        Self { di, dj }
    }

    #[inline]
    pub fn norm_sq(&self) -> i64 {
        self.di * self.di + self.dj * self.dj
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    #[inline]
    pub fn is_zero(&self) -> bool {
        self.di == 0 && self.dj == 0
    }
}

impl std::ops::Neg for Displacement {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.di, -self.dj)
    }
}

/// Offsets `(di, dj)` of the 3x3 capture block.
pub fn capture_offsets() -> impl Iterator<Item = (i64, i64)> {
    (-1..=1).flat_map(|di| (-1..=1).map(move |dj| (di, dj)))
}

/// Capture test on a displacement. The default radius `sqrt(2)` takes the
/// exact integer path `di^2 + dj^2 <= 2`.
pub fn within_capture(d: Displacement, radius: f64, spacing: f64) -> bool {
    if radius == CAPTURE_RADIUS && spacing == 1.0 {
        return d.norm_sq() <= CAPTURE_RADIUS_SQ;
    }
    let r = radius / spacing;
    d.norm_sq() as f64 <= r * r * (1.0 + 1e-12)
}

/// One of the four nearest-neighbour moves available to the agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    PlusI,
    MinusI,
    PlusJ,
    MinusJ,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::PlusI, Action::MinusI, Action::PlusJ, Action::MinusJ];

    #[inline]
    pub fn offset(self) -> (i64, i64) {
        match self {
            Action::PlusI => (1, 0),
            Action::MinusI => (-1, 0),
            Action::PlusJ => (0, 1),
            Action::MinusJ => (0, -1),
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(k: usize) -> Self {
        Self::ALL[k]
    }

    pub fn from_offset(di: i64, dj: i64) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.offset() == (di, dj))
    }
}

/// Element of the dihedral group of the square, acting linearly on integer pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Symmetry {
    m: [[i64; 2]; 2],
}

impl Symmetry {
    pub const ALL: [Symmetry; 8] = [
        Symmetry { m: [[1, 0], [0, 1]] },
        Symmetry { m: [[0, -1], [1, 0]] },
        Symmetry { m: [[-1, 0], [0, -1]] },
        Symmetry { m: [[0, 1], [-1, 0]] },
        Symmetry { m: [[1, 0], [0, -1]] },
        Symmetry { m: [[-1, 0], [0, 1]] },
        Symmetry { m: [[0, 1], [1, 0]] },
        Symmetry { m: [[0, -1], [-1, 0]] },
    ];

    #[inline]
    pub fn apply(&self, (x, y): (i64, i64)) -> (i64, i64) {
        (
            self.m[0][0] * x + self.m[0][1] * y,
            self.m[1][0] * x + self.m[1][1] * y,
        )
    }

    pub fn apply_displacement(&self, d: Displacement) -> Displacement {
        let (di, dj) = self.apply((d.di, d.dj));
        Displacement::new(di, dj)
    }

    pub fn apply_action(&self, a: Action) -> Action {
        let (di, dj) = self.apply(a.offset());
        Action::from_offset(di, dj).expect("symmetries map unit steps to unit steps")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g51() -> GridSpec {
        GridSpec::unit(51).unwrap()
    }

    #[test]
    fn offset_visitor_matches_minimum_image() {
        let g = GridSpec::unit(9).unwrap();
        for from in [LatticePoint::new(0, 0), LatticePoint::new(8, 3), LatticePoint::new(4, 4)] {
            let mut seen = 0;
            g.for_each_offset(from, |k, d| {
                assert_eq!(k, seen);
                assert_eq!(d, g.displacement_index(g.min_image(from, g.point(k))));
                seen += 1;
            });
            assert_eq!(seen, 81);
        }
    }

    #[test]
    fn rejects_even_or_small_sides() {
        assert!(GridSpec::unit(50).is_err());
        assert!(GridSpec::unit(3).is_err());
        assert!(GridSpec::new(51, 0.0).is_err());
        assert!(GridSpec::unit(5).is_ok());
    }

    #[test]
    fn wrap_examples() {
        let g = g51();
        assert_eq!(g.wrap(51, 0), LatticePoint::new(0, 0));
        assert_eq!(g.wrap(-1, 3), LatticePoint::new(50, 3));
        assert_eq!(g.wrap(25, 25), LatticePoint::new(25, 25));
    }

    #[test]
    fn min_image_examples() {
        let g = g51();
        let o = LatticePoint::new(0, 0);
        assert_eq!(g.min_image(o, LatticePoint::new(50, 0)), Displacement::new(1, 0));
        assert_eq!(g.min_image(o, LatticePoint::new(25, 25)), Displacement::new(-25, -25));
        assert_eq!(
            g.min_image(LatticePoint::new(3, 4), LatticePoint::new(1, 1)),
            Displacement::new(2, 3)
        );
    }

    #[test]
    fn capture_examples() {
        assert!(within_capture(Displacement::new(1, 1), CAPTURE_RADIUS, 1.0));
        assert!(!within_capture(Displacement::new(2, 0), CAPTURE_RADIUS, 1.0));
        assert!(within_capture(Displacement::new(0, 0), CAPTURE_RADIUS, 1.0));
        // generic path agrees with the integer path
        assert!(within_capture(Displacement::new(1, 1), 2.0_f64.sqrt() * 0.5, 0.5));
        assert!(!within_capture(Displacement::new(2, 0), 2.0_f64.sqrt() * 0.5, 0.5));
    }

    #[test]
    fn capture_set_has_nine_cells() {
        for side in [5, 7, 51] {
            let g = GridSpec::unit(side).unwrap();
            let n = g
                .displacements()
                .filter(|&d| within_capture(d, CAPTURE_RADIUS, 1.0))
                .count();
            assert_eq!(n, 9);
            let mut hood = g.capture_neighborhood(LatticePoint::new(0, 0));
            hood.sort_by_key(|p| (p.i, p.j));
            hood.dedup();
            assert_eq!(hood.len(), 9);
        }
    }

    #[test]
    fn displacement_table_roundtrip() {
        let g = GridSpec::unit(7).unwrap();
        for k in 0..g.cells() {
            assert_eq!(g.displacement_index(g.displacement_at(k)), k);
        }
    }

    #[test]
    fn symmetries_form_a_group_on_actions() {
        for s in Symmetry::ALL {
            let mut imgs: Vec<_> = Action::ALL.iter().map(|&a| s.apply_action(a)).collect();
            imgs.sort_by_key(|a| a.index());
            imgs.dedup();
            assert_eq!(imgs.len(), 4);
        }
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent_and_in_range(i in -500i64..500, j in -500i64..500) {
            let g = g51();
            let p = g.wrap(i, j);
            prop_assert!((0..51).contains(&p.i) && (0..51).contains(&p.j));
            prop_assert_eq!(g.wrap(p.i, p.j), p);
            prop_assert_eq!(g.wrap(i + 51 * 3, j - 51), p);
        }

        #[test]
        fn min_image_is_antisymmetric(ai in 0i64..51, aj in 0i64..51, bi in 0i64..51, bj in 0i64..51) {
            let g = g51();
            let a = LatticePoint::new(ai, aj);
            let b = LatticePoint::new(bi, bj);
            let d = g.min_image(a, b);
            prop_assert_eq!(d, -g.min_image(b, a));
            prop_assert!(d.di.abs() <= 25 && d.dj.abs() <= 25);
            prop_assert_eq!(g.shift(b, d.di, d.dj), a);
        }
    }
}

//! Periodic square lattice on a flat torus with a degree-`d` twist.
//!
//! Sites are `(i, j)` with `0 ≤ i < nx`, `0 ≤ j < ny`, stored row-major
//! (`k = j·nx + i`). The x-link at `(i, j)` joins `(i, j)` to `(i+1, j)`, the
//! y-link joins `(i, j)` to `(i, j+1)`, and plaquette `(i, j)` has `(i, j)` as
//! its lower-left corner.
//!
//! Fields crossing the x-seam (from column `nx-1` to column `0`) pick up the
//! transition phase `χ(j) = 2π d j / ny`. Link values are the real
//! coordinates of the connection 1-form (not integrated); plaquette values
//! are integrated fluxes, so `Λ F = F / a²`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fiber::V3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dir {
    X = 0,
    Y = 1,
}

impl Dir {
    pub const BOTH: [Dir; 2] = [Dir::X, Dir::Y];
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub a: f64,
    pub d: i64,
}

pub fn build_grid(nx: usize, ny: usize, a: f64, d: i64) -> Result<Grid> {
    Grid::new(nx, ny, a, d)
}

impl Grid {
    pub fn new(nx: usize, ny: usize, a: f64, d: i64) -> Result<Grid> {
        if nx < 4 || ny < 4 {
            return Err(Error::InvalidGrid(format!("need nx, ny >= 4, got {nx}x{ny}")));
        }
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {a}")));
        }
        Ok(Grid { nx, ny, a, d })
    }

    #[inline]
    pub fn sites(&self) -> usize {
        self.nx * self.ny
    }

    pub fn volume(&self) -> f64 {
        self.nx as f64 * self.ny as f64 * self.a * self.a
    }

    pub fn area(&self) -> f64 {
        self.a * self.a
    }

    /// Uniform curvature of a degree-`d` bundle, `2πd / Vol`.
    pub fn threshold(&self) -> f64 {
        2.0 * PI * self.d as f64 / self.volume()
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    /// Site index of `(i + di, j + dj)` with periodic wrap.
    #[inline]
    pub fn shift(&self, k: usize, di: isize, dj: isize) -> usize {
        let (i, j) = self.coords(k);
        let i = (i as isize + di).rem_euclid(self.nx as isize) as usize;
        let j = (j as isize + dj).rem_euclid(self.ny as isize) as usize;
        self.idx(i, j)
    }

    #[inline]
    pub fn forward(&self, k: usize, dir: Dir) -> usize {
        match dir {
            Dir::X => self.shift(k, 1, 0),
            Dir::Y => self.shift(k, 0, 1),
        }
    }

    #[inline]
    pub fn backward(&self, k: usize, dir: Dir) -> usize {
        match dir {
            Dir::X => self.shift(k, -1, 0),
            Dir::Y => self.shift(k, 0, -1),
        }
    }

    #[inline]
    pub fn link(&self, k: usize, dir: Dir) -> usize {
        2 * k + dir as usize
    }

    /// Transition angle `χ(j)` applied when crossing the x-seam at row `j`.
    #[inline]
    pub fn transition(&self, j: usize) -> f64 {
        2.0 * PI * self.d as f64 * j as f64 / self.ny as f64
    }

    /// Twist contribution to the transport angle of the link.
    #[inline]
    pub fn link_twist(&self, k: usize, dir: Dir) -> f64 {
        let (i, j) = self.coords(k);
        if dir == Dir::X && i + 1 == self.nx {
            -self.transition(j)
        } else {
            0.0
        }
    }

    /// Twist contribution to the flux through plaquette `k`.
    #[inline]
    pub fn plaquette_twist(&self, k: usize) -> f64 {
        let (i, _) = self.coords(k);
        if i + 1 == self.nx {
            2.0 * PI * self.d as f64 / self.ny as f64
        } else {
            0.0
        }
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{}x{} (a={}, d={}) vs {}x{} (a={}, d={})",
                self.nx, self.ny, self.a, self.d, other.nx, other.ny, other.a, other.d
            )))
        }
    }

    /// Physical position of site `k`.
    pub fn position(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.coords(k);
        (i as f64 * self.a, j as f64 * self.a)
    }
}

/// Pointwise pairing of field values.
pub trait Pairing {
    fn pair(&self, other: &Self) -> f64;
}

impl Pairing for f64 {
    #[inline]
    fn pair(&self, other: &f64) -> f64 {
        self * other
    }
}

impl Pairing for V3 {
    #[inline]
    fn pair(&self, other: &V3) -> f64 {
        self.dot(other)
    }
}

/// Neumaier compensated summation in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

macro_rules! field_type {
    ($name:ident, $len:expr, $doc:expr) => {
        #[doc = $doc]
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name<T> {
            pub grid: Grid,
            pub data: Vec<T>,
        }

        impl<T: Clone> $name<T> {
            pub fn filled(grid: Grid, value: T) -> Self {
                let n = $len(&grid);
                Self { grid, data: vec![value; n] }
            }

            pub fn from_vec(grid: Grid, data: Vec<T>) -> Result<Self> {
                let n = $len(&grid);
                if data.len() != n {
                    return Err(Error::ShapeMismatch(format!(
                        "expected {} values, got {}",
                        n,
                        data.len()
                    )));
                }
                Ok(Self { grid, data })
            }

            pub fn map<U, F: Fn(&T) -> U>(&self, f: F) -> $name<U> {
                $name { grid: self.grid, data: self.data.iter().map(f).collect() }
            }
        }

        impl<T> std::ops::Index<usize> for $name<T> {
            type Output = T;
            #[inline]
            fn index(&self, k: usize) -> &T {
                &self.data[k]
            }
        }

        impl<T> std::ops::IndexMut<usize> for $name<T> {
            #[inline]
            fn index_mut(&mut self, k: usize) -> &mut T {
                &mut self.data[k]
            }
        }
    };
}

field_type!(SiteField, |g: &Grid| g.sites(), "One value per site.");
field_type!(LinkField, |g: &Grid| 2 * g.sites(), "One value per link, index `2k + dir`.");
field_type!(
    PlaquetteField,
    |g: &Grid| g.sites(),
    "One integrated value per plaquette, indexed by its base site."
);

impl<T> LinkField<T> {
    #[inline]
    pub fn at(&self, k: usize, dir: Dir) -> &T {
        &self.data[2 * k + dir as usize]
    }

    #[inline]
    pub fn at_mut(&mut self, k: usize, dir: Dir) -> &mut T {
        &mut self.data[2 * k + dir as usize]
    }
}

/// Discrete L² inner product of differential-form fields.
pub trait FormField {
    fn l2_inner(&self, other: &Self) -> Result<f64>;

    fn l2_norm(&self) -> f64 {
        self.l2_inner(self).map(f64::sqrt).unwrap_or(f64::NAN)
    }
}

impl<T: Pairing> FormField for SiteField<T> {
    fn l2_inner(&self, other: &Self) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let a2 = self.grid.area();
        Ok(a2 * compensated_sum(self.data.iter().zip(&other.data).map(|(x, y)| x.pair(y))))
    }
}

impl<T: Pairing> FormField for LinkField<T> {
    fn l2_inner(&self, other: &Self) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let a2 = self.grid.area();
        Ok(a2 * compensated_sum(self.data.iter().zip(&other.data).map(|(x, y)| x.pair(y))))
    }
}

impl FormField for PlaquetteField<f64> {
    fn l2_inner(&self, other: &Self) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let a2 = self.grid.area();
        Ok(compensated_sum(self.data.iter().zip(&other.data).map(|(x, y)| x * y)) / a2)
    }
}

pub fn l2_inner_product<F: FormField>(f: &F, g: &F) -> Result<f64> {
    f.l2_inner(g)
}

/// `Λ F`: the coefficient of `F` against the area form.
pub fn lambda_contract(f: &PlaquetteField<f64>) -> SiteField<f64> {
    let a2 = f.grid.area();
    SiteField { grid: f.grid, data: f.data.iter().map(|x| x / a2).collect() }
}

/// `L s = s ω`, the adjoint of [`lambda_contract`].
pub fn wedge_omega(s: &SiteField<f64>) -> PlaquetteField<f64> {
    let a2 = s.grid.area();
    PlaquetteField { grid: s.grid, data: s.data.iter().map(|x| x * a2).collect() }
}

/// Integral of a scalar site field.
pub fn integrate(s: &SiteField<f64>) -> f64 {
    s.grid.area() * compensated_sum(s.data.iter().copied())
}

pub fn sup_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::LabRng;
    use proptest::prelude::*;

    fn random_sites(g: Grid, r: &mut LabRng) -> SiteField<f64> {
        SiteField::from_vec(g, (0..g.sites()).map(|_| r.symmetric()).collect()).unwrap()
    }

    #[test]
    fn build_grid_examples() {
        assert_eq!(build_grid(8, 8, 0.5, 0).unwrap().volume(), 16.0);
        let g = build_grid(4, 4, 1.0, 1).unwrap();
        assert_eq!(g.volume(), 16.0);
        assert!(g.link_twist(g.idx(3, 2), Dir::X) != 0.0);
        assert_eq!(g.link_twist(g.idx(2, 2), Dir::X), 0.0);
        assert!(matches!(build_grid(3, 8, 1.0, 0), Err(Error::InvalidGrid(_))));
        assert!(build_grid(8, 8, 0.0, 0).is_err());
        assert!(build_grid(8, 8, -1.0, 0).is_err());
    }

    #[test]
    fn inner_product_examples() {
        let g = build_grid(8, 8, 1.0, 0).unwrap();
        let one = SiteField::filled(g, 1.0);
        let zero = SiteField::filled(g, 0.0);
        assert_eq!(l2_inner_product(&one, &one).unwrap(), 64.0);
        assert_eq!(l2_inner_product(&one, &zero).unwrap(), 0.0);
        let other = SiteField::filled(build_grid(8, 4, 1.0, 0).unwrap(), 1.0);
        assert!(matches!(one.l2_inner(&other), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn lambda_examples() {
        let g = build_grid(6, 5, 0.3, 0).unwrap();
        let f = PlaquetteField::filled(g, 0.0);
        assert!(lambda_contract(&f).data.iter().all(|&x| x == 0.0));
        let f = PlaquetteField::filled(g, g.area());
        assert!(lambda_contract(&f).data.iter().all(|&x| (x - 1.0).abs() < 1e-15));
    }

    #[test]
    fn lambda_is_adjoint_of_wedge_and_left_inverse() {
        let mut r = LabRng::new(21);
        let g = build_grid(9, 7, 0.37, 2).unwrap();
        for _ in 0..20 {
            let s = random_sites(g, &mut r);
            let f = PlaquetteField::from_vec(g, (0..g.sites()).map(|_| r.symmetric()).collect()).unwrap();
            let lhs = lambda_contract(&f).l2_inner(&s).unwrap();
            let rhs = f.l2_inner(&wedge_omega(&s)).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            let back = lambda_contract(&wedge_omega(&s));
            for (x, y) in back.data.iter().zip(&s.data) {
                assert!((x - y).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn twist_composes_to_total_degree() {
        for d in [-3i64, -1, 0, 1, 2, 5] {
            let g = build_grid(7, 6, 0.5, d).unwrap();
            let total = compensated_sum((0..g.sites()).map(|k| g.plaquette_twist(k)));
            assert!((total - 2.0 * PI * d as f64).abs() < 1e-12);
            // Going once around in y returns the transition to itself mod 2π.
            let wrap = g.transition(g.ny) - g.transition(0);
            assert!((wrap / (2.0 * PI) - d as f64).abs() < 1e-14);
            assert!(((wrap).sin()).abs() < 1e-12 && ((wrap).cos() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn indexing_round_trips() {
        let g = build_grid(5, 7, 1.0, 0).unwrap();
        for k in 0..g.sites() {
            let (i, j) = g.coords(k);
            assert_eq!(g.idx(i, j), k);
            for dir in Dir::BOTH {
                assert_eq!(g.backward(g.forward(k, dir), dir), k);
            }
        }
        assert_eq!(g.forward(g.idx(4, 6), Dir::X), g.idx(0, 6));
        assert_eq!(g.forward(g.idx(4, 6), Dir::Y), g.idx(4, 0));
    }

    #[test]
    fn compensated_sum_beats_naive() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    proptest! {
        #[test]
        fn cauchy_schwarz_holds(seed in any::<u64>(), nx in 4usize..10, ny in 4usize..10, a in 0.05f64..2.0) {
            let g = build_grid(nx, ny, a, 0).unwrap();
            let mut r = LabRng::new(seed);
            let f = random_sites(g, &mut r);
            let h = random_sites(g, &mut r);
            let fg = f.l2_inner(&h).unwrap();
            let ff = f.l2_inner(&f).unwrap();
            let hh = h.l2_inner(&h).unwrap();
            prop_assert!(fg * fg <= ff * hh * (1.0 + 1e-12));
            prop_assert!(ff > 0.0);
            prop_assert!((fg - h.l2_inner(&f).unwrap()).abs() <= 1e-14 * ff.max(hh));
        }
    }
}

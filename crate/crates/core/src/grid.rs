//! Rectangular cell-centered grids and the discrete calculus on them.
//!
//! Cells are stored row-major with axis 0 slowest. Faces normal to axis `a`
//! use the same layout with `n_a + 1` entries along that axis; face `k`
//! separates cells `k - 1` and `k`, so faces `0` and `n_a` lie on the wall.
//! Wall faces always carry zero gradient and zero flux (homogeneous Neumann).

use std::sync::Arc;

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    cells: Vec<usize>,
    lengths: Vec<f64>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
}

impl GridSpec {
    pub fn new(cells: &[usize], lengths: &[f64]) -> Result<Self> {
        let dim = cells.len();
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::param(format!("grid dimension must be 1, 2 or 3, got {dim}")));
        }
        if lengths.len() != dim {
            return Err(Error::param(format!(
                "grid has {dim} cell counts but {} lengths",
                lengths.len()
            )));
        }
        if let Some(n) = cells.iter().find(|&&n| n < 2) {
            return Err(Error::param(format!("every axis needs at least 2 cells, got {n}")));
        }
        if let Some(l) = lengths.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::param(format!("axis lengths must be finite and > 0, got {l}")));
        }
        let spacing = cells
            .iter()
            .zip(lengths)
            .map(|(&n, &l)| l / n as f64)
            .collect();
        let mut strides = vec![1; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * cells[a + 1];
        }
        Ok(Self {
            cells: cells.to_vec(),
            lengths: lengths.to_vec(),
            spacing,
            strides,
        })
    }

    /// Unit-length square/cube with `n` cells per axis.
    pub fn uniform(dim: usize, n: usize, length: f64) -> Result<Self> {
        Self::new(&vec![n; dim], &vec![length; dim])
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// |Ω|
    pub fn measure(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Number of faces normal to `axis`, wall faces included.
    pub fn face_count(&self, axis: usize) -> usize {
        self.cell_count() / self.cells[axis] * (self.cells[axis] + 1)
    }

    /// Per-axis cell index of a flat cell index.
    pub fn coords(&self, flat: usize) -> [usize; MAX_DIM] {
        let mut c = [0; MAX_DIM];
        for a in 0..self.dim() {
            c[a] = (flat / self.strides[a]) % self.cells[a];
        }
        c
    }

    /// Physical coordinate of the center of cell `k` along `axis`.
    pub fn center(&self, axis: usize, k: usize) -> f64 {
        (k as f64 + 0.5) * self.spacing[axis]
    }

    /// Physical center of a flat cell index.
    pub fn cell_center(&self, flat: usize) -> [f64; MAX_DIM] {
        let c = self.coords(flat);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim() {
            x[a] = self.center(a, c[a]);
        }
        x
    }

    /// Visits every interior face normal to `axis` as `(face, lo, hi)`:
    /// the flat face index in the face layout and the flat indices of the
    /// two adjacent cells, `hi = lo + stride`.
    #[inline]
    pub fn for_each_interior_face(&self, axis: usize, mut f: impl FnMut(usize, usize, usize)) {
        let n = self.cells[axis];
        let stride = self.strides[axis];
        let outer = self.cell_count() / (n * stride);
        for o in 0..outer {
            for k in 0..n - 1 {
                let lo_base = o * n * stride + k * stride;
                let face_base = o * (n + 1) * stride + (k + 1) * stride;
                for s in 0..stride {
                    f(face_base + s, lo_base + s, lo_base + s + stride);
                }
            }
        }
    }

    /// Physical position of a face (flat face index) normal to `axis`.
    pub fn face_position(&self, axis: usize, face: usize) -> [f64; MAX_DIM] {
        let mut x = [0.0; MAX_DIM];
        let mut rem = face;
        for a in (0..self.dim()).rev() {
            let extent = if a == axis { self.cells[a] + 1 } else { self.cells[a] };
            let k = rem % extent;
            rem /= extent;
            x[a] = if a == axis {
                k as f64 * self.spacing[a]
            } else {
                self.center(a, k)
            };
        }
        x
    }
}

/// One real value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<GridSpec>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<GridSpec>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::DataIntegrity(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                grid.cell_count()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Arc<GridSpec>, value: f64) -> Self {
        let n = grid.cell_count();
        Self {
            grid,
            values: vec![value; n],
        }
    }

    /// Samples `f` at cell centers.
    pub fn from_fn(grid: Arc<GridSpec>, f: impl Fn(&[f64]) -> f64) -> Self {
        let dim = grid.dim();
        let values = (0..grid.cell_count())
            .map(|i| f(&grid.cell_center(i)[..dim]))
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// First non-finite cell, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|x| !x.is_finite())
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        match self.first_non_finite() {
            Some(i) => Err(Error::DataIntegrity(format!(
                "{what} has non-finite value {} at cell {i}",
                self.values[i]
            ))),
            None => Ok(()),
        }
    }
}

/// Per-axis face values, wall faces included.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    grid: Arc<GridSpec>,
    axes: Vec<Vec<f64>>,
}

impl FaceField {
    pub fn zeros(grid: Arc<GridSpec>) -> Self {
        let axes = (0..grid.dim()).map(|a| vec![0.0; grid.face_count(a)]).collect();
        Self { grid, axes }
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn axis(&self, a: usize) -> &[f64] {
        &self.axes[a]
    }

    pub fn axis_mut(&mut self, a: usize) -> &mut [f64] {
        &mut self.axes[a]
    }

    pub fn max_abs(&self) -> f64 {
        self.axes
            .iter()
            .flatten()
            .fold(0.0, |m: f64, x| m.max(x.abs()))
    }

    /// Flat indices of wall faces normal to `axis`.
    pub fn wall_faces(&self, axis: usize) -> impl Iterator<Item = usize> + '_ {
        let n = self.grid.cells()[axis];
        let stride = self.grid.strides()[axis];
        let outer = self.grid.cell_count() / (n * stride);
        (0..outer).flat_map(move |o| {
            let base = o * (n + 1) * stride;
            (0..stride).flat_map(move |s| [base + s, base + n * stride + s])
        })
    }
}

/// Midpoint-rule ∫_Ω f.
pub fn integrate(f: &ScalarField) -> Result<f64> {
    f.check_finite("integrand")?;
    Ok(f.grid.cell_volume() * f.values.iter().sum::<f64>())
}

/// ‖f‖_{L^p(Ω)}; pass `f64::INFINITY` for the max norm.
pub fn lp_norm(f: &ScalarField, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::param(format!("L^p norm needs p >= 1, got {p}")));
    }
    f.check_finite("L^p argument")?;
    Ok(lp_norm_unchecked(f.grid.cell_volume(), &f.values, p))
}

pub(crate) fn lp_norm_unchecked(cell_volume: f64, values: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        values.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
    } else if p == 1.0 {
        cell_volume * values.iter().map(|x| x.abs()).sum::<f64>()
    } else if p == 2.0 {
        (cell_volume * values.iter().map(|x| x * x).sum::<f64>()).sqrt()
    } else {
        (cell_volume * values.iter().map(|x| x.abs().powf(p)).sum::<f64>()).powf(1.0 / p)
    }
}

/// Two-point face differences; wall faces are exactly zero.
pub fn face_gradient(f: &ScalarField) -> Result<FaceField> {
    f.check_finite("gradient argument")?;
    let grid = f.grid.clone();
    let mut out = FaceField::zeros(grid.clone());
    for a in 0..grid.dim() {
        let inv_h = 1.0 / grid.spacing()[a];
        let g = &mut out.axes[a];
        grid.for_each_interior_face(a, |face, lo, hi| {
            g[face] = (f.values[hi] - f.values[lo]) * inv_h;
        });
    }
    Ok(out)
}

/// Face-assembled ∫_Ω |∇f|²: every interior face contributes its squared
/// difference quotient weighted by one cell volume (half from each side).
pub fn grad_l2_sq(f: &ScalarField) -> f64 {
    grad_l2_sq_raw(&f.grid, &f.values)
}

pub(crate) fn grad_l2_sq_raw(grid: &GridSpec, values: &[f64]) -> f64 {
    let mut total = 0.0;
    for a in 0..grid.dim() {
        let inv_h = 1.0 / grid.spacing()[a];
        let mut sum = 0.0;
        grid.for_each_interior_face(a, |_, lo, hi| {
            let g = (values[hi] - values[lo]) * inv_h;
            sum += g * g;
        });
        total += sum;
    }
    total * grid.cell_volume()
}

/// Cellwise local form of [`grad_l2_sq`]: each cell receives half of the
/// squared gradient of every face it touches, so that
/// `integrate(cell_grad_sq(f)) == grad_l2_sq(f)` up to roundoff.
pub fn cell_grad_sq(f: &ScalarField) -> ScalarField {
    let mut out = vec![0.0; f.values.len()];
    cell_grad_sq_into(&f.grid, &f.values, &mut out);
    ScalarField {
        grid: f.grid.clone(),
        values: out,
    }
}

pub(crate) fn cell_grad_sq_into(grid: &GridSpec, values: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|x| *x = 0.0);
    for a in 0..grid.dim() {
        let inv_h = 1.0 / grid.spacing()[a];
        grid.for_each_interior_face(a, |_, lo, hi| {
            let g = (values[hi] - values[lo]) * inv_h;
            let half = 0.5 * g * g;
            out[lo] += half;
            out[hi] += half;
        });
    }
}

/// Discrete divergence Σ_a (F_{k+1} − F_k)/h_a. Wall fluxes must be zero.
pub fn div_flux(flux: &FaceField) -> Result<ScalarField> {
    let grid = flux.grid.clone();
    for a in 0..grid.dim() {
        if let Some(face) = flux.wall_faces(a).find(|&face| flux.axes[a][face] != 0.0) {
            return Err(Error::Contract(format!(
                "nonzero wall flux {} on axis {a} face {face}",
                flux.axes[a][face]
            )));
        }
        if let Some(v) = flux.axes[a].iter().find(|x| !x.is_finite()) {
            return Err(Error::DataIntegrity(format!("non-finite flux {v} on axis {a}")));
        }
    }
    let mut out = vec![0.0; grid.cell_count()];
    for a in 0..grid.dim() {
        let inv_h = 1.0 / grid.spacing()[a];
        let fa = &flux.axes[a];
        grid.for_each_interior_face(a, |face, lo, hi| {
            let q = fa[face] * inv_h;
            out[lo] += q;
            out[hi] -= q;
        });
    }
    Ok(ScalarField { grid, values: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(cells: &[usize], lengths: &[f64]) -> Arc<GridSpec> {
        Arc::new(GridSpec::new(cells, lengths).unwrap())
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(GridSpec::new(&[1, 4], &[1.0, 1.0]).is_err());
        assert!(GridSpec::new(&[4, 4], &[1.0, 0.0]).is_err());
        assert!(GridSpec::new(&[4, 4, 4, 4], &[1.0; 4]).is_err());
        assert!(GridSpec::new(&[4], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn measure_and_volume() {
        let g = GridSpec::new(&[4, 5], &[2.0, 3.0]).unwrap();
        assert_eq!(g.measure(), 6.0);
        assert!((g.cell_volume() - 0.3).abs() < 1e-15);
        assert_eq!(g.face_count(0), 25);
        assert_eq!(g.face_count(1), 24);
    }

    #[test]
    fn integrate_constant() {
        let g = grid(&[10, 10], &[1.0, 1.0]);
        let f = ScalarField::constant(g.clone(), 3.0);
        assert!((integrate(&f).unwrap() - 3.0).abs() < 1e-14);
        assert_eq!(integrate(&ScalarField::constant(g, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn integrate_linear_is_exact() {
        let g = grid(&[4, 4], &[1.0, 1.0]);
        let f = ScalarField::from_fn(g, |x| x[0]);
        // ∫₀¹∫₀¹ x dx dy = 1/2
        assert!((integrate(&f).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn integrate_rejects_nan() {
        let g = grid(&[2, 2], &[1.0, 1.0]);
        let mut f = ScalarField::constant(g, 1.0);
        f.values_mut()[3] = f64::NAN;
        assert!(matches!(integrate(&f), Err(Error::DataIntegrity(_))));
    }

    #[test]
    fn lp_norm_cases() {
        let g = grid(&[8, 8], &[1.0, 1.0]);
        let two = ScalarField::constant(g.clone(), 2.0);
        assert!((lp_norm(&two, 3.0).unwrap() - 2.0).abs() < 1e-14);
        let neg = ScalarField::constant(g.clone(), -2.0);
        assert_eq!(lp_norm(&neg, f64::INFINITY).unwrap(), 2.0);
        let half = ScalarField::from_fn(g.clone(), |x| if x[0] < 0.5 { 1.0 } else { 0.0 });
        assert!((lp_norm(&half, 2.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(lp_norm(&two, 0.5), Err(Error::Parameter(_))));
    }

    #[test]
    fn face_gradient_two_cells() {
        let g = grid(&[2], &[1.0]);
        let f = ScalarField::new(g, vec![0.0, 1.0]).unwrap();
        let grad = face_gradient(&f).unwrap();
        assert_eq!(grad.axis(0), &[0.0, 2.0, 0.0]);
    }

    #[test]
    fn face_gradient_constant_is_zero() {
        let g = grid(&[3, 4, 2], &[1.0, 2.0, 3.0]);
        let grad = face_gradient(&ScalarField::constant(g, 7.5)).unwrap();
        assert_eq!(grad.max_abs(), 0.0);
    }

    #[test]
    fn face_gradient_second_order() {
        let err = |n: usize| {
            let l = 2.0;
            let g = grid(&[n], &[l]);
            let f = ScalarField::from_fn(g.clone(), |x| (PI * x[0] / l).cos());
            let grad = face_gradient(&f).unwrap();
            let mut e: f64 = 0.0;
            g.for_each_interior_face(0, |face, _, _| {
                let x = g.face_position(0, face)[0];
                let exact = -(PI / l) * (PI * x / l).sin();
                e = e.max((grad.axis(0)[face] - exact).abs());
            });
            e
        };
        let order = (err(32) / err(64)).log2();
        assert!(order > 1.9, "observed order {order}");
    }

    #[test]
    fn grad_l2_sq_cosine_oracle() {
        // ∫₀¹ π² sin²(πx) dx = π²/2
        let errs: Vec<f64> = [32, 64, 128]
            .iter()
            .map(|&n| {
                let f = ScalarField::from_fn(grid(&[n], &[1.0]), |x| (PI * x[0]).cos());
                (grad_l2_sq(&f) - PI * PI / 2.0).abs()
            })
            .collect();
        assert!(errs[2] < 1e-3);
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.8);
        }
    }

    #[test]
    fn grad_l2_sq_zero_iff_constant() {
        let g = grid(&[4, 4], &[1.0, 1.0]);
        assert_eq!(grad_l2_sq(&ScalarField::constant(g.clone(), 3.0)), 0.0);
        let mut f = ScalarField::constant(g, 3.0);
        f.values_mut()[5] += 1e-9;
        assert!(grad_l2_sq(&f) > 0.0);
    }

    #[test]
    fn cell_grad_sq_integrates_to_grad_l2_sq() {
        let g = grid(&[6, 5], &[1.0, 2.0]);
        let f = ScalarField::from_fn(g, |x| (x[0] * 3.0).sin() + x[1] * x[1]);
        let local = integrate(&cell_grad_sq(&f)).unwrap();
        assert!((local - grad_l2_sq(&f)).abs() < 1e-12 * grad_l2_sq(&f));
    }

    #[test]
    fn div_flux_hand_example() {
        let g = grid(&[3], &[3.0]);
        let mut flux = FaceField::zeros(g);
        flux.axis_mut(0).copy_from_slice(&[0.0, 1.0, -1.0, 0.0]);
        let d = div_flux(&flux).unwrap();
        assert_eq!(d.values(), &[1.0, -2.0, 1.0]);
    }

    #[test]
    fn div_flux_rejects_wall_flux() {
        let g = grid(&[3, 3], &[1.0, 1.0]);
        let mut flux = FaceField::zeros(g);
        flux.axis_mut(1)[0] = 0.1;
        assert!(matches!(div_flux(&flux), Err(Error::Contract(_))));
    }

    #[test]
    fn wall_face_enumeration_matches_layout() {
        let g = grid(&[3, 4], &[1.0, 1.0]);
        let flux = FaceField::zeros(g.clone());
        for a in 0..2 {
            let walls: Vec<usize> = flux.wall_faces(a).collect();
            let mut interior = Vec::new();
            g.for_each_interior_face(a, |face, _, _| interior.push(face));
            assert_eq!(walls.len() + interior.len(), g.face_count(a));
            assert!(walls.iter().all(|w| !interior.contains(w)));
        }
    }

    proptest! {
        #[test]
        fn discrete_divergence_theorem(
            nx in 2usize..7, ny in 2usize..7,
            seed in proptest::collection::vec(-10.0f64..10.0, 128),
        ) {
            let g = grid(&[nx, ny], &[1.3, 0.7]);
            let mut flux = FaceField::zeros(g.clone());
            let mut faces = 0;
            for a in 0..2 {
                let mut k = a * 31;
                let mut vals = Vec::new();
                g.for_each_interior_face(a, |face, _, _| { vals.push(face); });
                for face in vals {
                    flux.axis_mut(a)[face] = seed[k % seed.len()];
                    k += 1;
                    faces += 1;
                }
            }
            let total = integrate(&div_flux(&flux).unwrap()).unwrap();
            prop_assert!(total.abs() <= 1e-12 * flux.max_abs().max(1e-300) * faces as f64);
        }

        #[test]
        fn l1_norm_matches_integral_of_abs(vals in proptest::collection::vec(-5.0f64..5.0, 12)) {
            let g = grid(&[3, 4], &[1.0, 2.0]);
            let f = ScalarField::new(g, vals).unwrap();
            let a = lp_norm(&f, 1.0).unwrap();
            let b = integrate(&f.map(f64::abs)).unwrap();
            prop_assert!((a - b).abs() <= 1e-14 * b.max(1.0));
        }

        #[test]
        fn grad_l2_sq_is_quadratic(c in -4.0f64..4.0, vals in proptest::collection::vec(-3.0f64..3.0, 8)) {
            let g = grid(&[2, 2, 2], &[1.0, 1.0, 1.0]);
            let f = ScalarField::new(g, vals).unwrap();
            let scaled = f.map(|x| c * x);
            let lhs = grad_l2_sq(&scaled);
            let rhs = c * c * grad_l2_sq(&f);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-12));
        }
    }
}

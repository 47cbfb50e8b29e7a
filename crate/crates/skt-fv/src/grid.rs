//! Uniform meshes: periodic 1D/2D tori and the bounded unit interval.
//!
//! Periodic cells are `[i*dx, (i+1)*dx)` with centers at `(i + 1/2)*dx`;
//! index arithmetic wraps modulo the cell count. Convolution kernels are
//! averaged over intervals centered on the lattice offsets `i*dx` (see
//! `kernels`), which keeps the discrete circular convolution aligned with
//! the cell values.

use crate::error::{Error, Result};

/// Uniform periodic mesh of a 1D torus of length `length`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGrid1D {
    pub n_cells: usize,
    pub length: f64,
    pub dx: f64,
}

/// Uniform periodic mesh of a 2D torus, tensor product of two 1D meshes.
/// Cells are linearized row-major: `idx = i + nx * j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicGrid2D {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub dx: f64,
    pub dy: f64,
}

/// Uniform mesh of the unit interval (0,1) with `n_cells` cells and no
/// wraparound; interface points sit at `i*dx` for `i = 0..=n_cells`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedGrid1D {
    pub n_cells: usize,
    pub dx: f64,
}

/// Uniform partition of the time interval `[0, t_final]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t_final: f64,
    pub n_steps: usize,
    pub dt: f64,
}

pub fn make_periodic_1d(n_cells: usize, length: f64) -> Result<PeriodicGrid1D> {
    if n_cells < 2 {
        return Err(Error::InvalidConfig(format!(
            "periodic 1D grid needs at least 2 cells, got {n_cells}"
        )));
    }
    if !(length > 0.0) || !length.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "domain length must be positive and finite, got {length}"
        )));
    }
    Ok(PeriodicGrid1D { n_cells, length, dx: length / n_cells as f64 })
}

pub fn make_periodic_2d(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<PeriodicGrid2D> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidConfig(format!(
            "periodic 2D grid needs at least 2 cells per axis, got {nx}x{ny}"
        )));
    }
    if !(lx > 0.0 && ly > 0.0) || !(lx.is_finite() && ly.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "domain lengths must be positive and finite, got {lx} x {ly}"
        )));
    }
    Ok(PeriodicGrid2D { nx, ny, lx, ly, dx: lx / nx as f64, dy: ly / ny as f64 })
}

pub fn make_bounded_1d(n_cells: usize) -> Result<BoundedGrid1D> {
    if n_cells < 2 {
        return Err(Error::InvalidConfig(format!(
            "bounded 1D grid needs at least 2 cells, got {n_cells}"
        )));
    }
    Ok(BoundedGrid1D { n_cells, dx: 1.0 / n_cells as f64 })
}

pub fn make_time_grid(t_final: f64, n_steps: usize) -> Result<TimeGrid> {
    if !(t_final > 0.0) || n_steps == 0 {
        return Err(Error::InvalidConfig(format!(
            "time grid needs t_final > 0 and n_steps >= 1, got {t_final}, {n_steps}"
        )));
    }
    Ok(TimeGrid { t_final, n_steps, dt: t_final / n_steps as f64 })
}

impl PeriodicGrid1D {
    /// Center of cell `i`.
    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    /// Neighbor index with periodic wrap; `offset` may be negative.
    #[inline]
    pub fn neighbor(&self, i: usize, offset: isize) -> usize {
        let n = self.n_cells as isize;
        (((i as isize + offset) % n + n) % n) as usize
    }
}

impl PeriodicGrid2D {
    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        i + self.nx * j
    }

    /// Neighbor of cell `(i, j)` wrapping each axis independently.
    #[inline]
    pub fn neighbor(&self, i: usize, j: usize, di: isize, dj: isize) -> (usize, usize) {
        let nx = self.nx as isize;
        let ny = self.ny as isize;
        let iw = ((i as isize + di) % nx + nx) % nx;
        let jw = ((j as isize + dj) % ny + ny) % ny;
        (iw as usize, jw as usize)
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.dx, (j as f64 + 0.5) * self.dy)
    }
}

impl BoundedGrid1D {
    /// Interface point `x_{i+1/2} = i*dx`, `i = 0..=n_cells`.
    #[inline]
    pub fn interface(&self, i: usize) -> f64 {
        debug_assert!(i <= self.n_cells);
        i as f64 * self.dx
    }

    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }
}

/// A periodic mesh of either dimension; the scheme operators and solvers are
/// written against this, with 2D handled as the tensor product of the 1D
/// stencils.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mesh {
    One(PeriodicGrid1D),
    Two(PeriodicGrid2D),
}

impl Mesh {
    pub fn n_cells(&self) -> usize {
        match self {
            Mesh::One(g) => g.n_cells,
            Mesh::Two(g) => g.n_cells(),
        }
    }

    /// Cell measure: `dx` in 1D, `dx*dy` in 2D.
    pub fn measure(&self) -> f64 {
        match self {
            Mesh::One(g) => g.dx,
            Mesh::Two(g) => g.dx * g.dy,
        }
    }

    /// Total domain volume.
    pub fn volume(&self) -> f64 {
        match self {
            Mesh::One(g) => g.length,
            Mesh::Two(g) => g.lx * g.ly,
        }
    }

    pub fn as_1d(&self) -> Option<&PeriodicGrid1D> {
        match self {
            Mesh::One(g) => Some(g),
            Mesh::Two(_) => None,
        }
    }

    pub fn as_2d(&self) -> Option<&PeriodicGrid2D> {
        match self {
            Mesh::Two(g) => Some(g),
            Mesh::One(_) => None,
        }
    }
}

impl From<PeriodicGrid1D> for Mesh {
    fn from(g: PeriodicGrid1D) -> Self {
        Mesh::One(g)
    }
}

impl From<PeriodicGrid2D> for Mesh {
    fn from(g: PeriodicGrid2D) -> Self {
        Mesh::Two(g)
    }
}

/// Averages groups of `m` consecutive fine cells onto a coarse grid with
/// `fine.n_cells = m * coarse.n_cells`. The grouped mean preserves total
/// mass exactly.
pub fn project_to_coarser(
    fine_values: &[f64],
    fine: &PeriodicGrid1D,
    coarse: &PeriodicGrid1D,
) -> Result<Vec<f64>> {
    if fine_values.len() != fine.n_cells {
        return Err(Error::InvalidConfig(format!(
            "value vector length {} does not match fine grid with {} cells",
            fine_values.len(),
            fine.n_cells
        )));
    }
    if (fine.length - coarse.length).abs() > 1e-12 * fine.length.abs() {
        return Err(Error::InvalidConfig(
            "projection requires grids of identical length".into(),
        ));
    }
    if coarse.n_cells == 0 || fine.n_cells % coarse.n_cells != 0 {
        return Err(Error::InvalidConfig(format!(
            "fine cell count {} is not a multiple of coarse cell count {}",
            fine.n_cells, coarse.n_cells
        )));
    }
    let m = fine.n_cells / coarse.n_cells;
    let inv_m = 1.0 / m as f64;
    let coarse_values = (0..coarse.n_cells)
        .map(|i| fine_values[i * m..(i + 1) * m].iter().sum::<f64>() * inv_m)
        .collect();
    Ok(coarse_values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dx_follows_definition() {
        let g = make_periodic_1d(4, 1.0).unwrap();
        assert_eq!(g.dx, 0.25);
        let g = make_periodic_1d(500, 25.0).unwrap();
        assert!((g.dx - 0.05).abs() < 1e-15);
        assert!((g.dx * g.n_cells as f64 - g.length).abs() <= f64::EPSILON * g.length);
    }

    #[test]
    fn degenerate_grids_rejected() {
        assert!(make_periodic_1d(1, 1.0).is_err());
        assert!(make_periodic_1d(8, 0.0).is_err());
        assert!(make_periodic_1d(8, -2.0).is_err());
        assert!(make_periodic_2d(1, 8, 1.0, 1.0).is_err());
        assert!(make_bounded_1d(1).is_err());
    }

    #[test]
    fn neighbor_wraps_and_inverts() {
        let g = make_periodic_1d(7, 2.0).unwrap();
        for i in 0..g.n_cells {
            assert_eq!(g.neighbor(g.neighbor(i, 1), -1), i);
            assert_eq!(g.neighbor(g.neighbor(i, -3), 3), i);
        }
        assert_eq!(g.neighbor(6, 1), 0);
        assert_eq!(g.neighbor(0, -1), 6);

        let g2 = make_periodic_2d(4, 3, 1.0, 1.0).unwrap();
        assert_eq!(g2.neighbor(3, 0, 1, -1), (0, 2));
    }

    #[test]
    fn projection_matches_grouped_means() {
        let fine = make_periodic_1d(4, 1.0).unwrap();
        let coarse = make_periodic_1d(2, 1.0).unwrap();
        assert_eq!(
            project_to_coarser(&[1.0, 1.0, 3.0, 3.0], &fine, &coarse).unwrap(),
            vec![1.0, 3.0]
        );
        assert_eq!(
            project_to_coarser(&[0.0, 4.0, 0.0, 0.0], &fine, &coarse).unwrap(),
            vec![2.0, 0.0]
        );
    }

    #[test]
    fn projection_rejects_non_nested() {
        let fine = make_periodic_1d(6, 1.0).unwrap();
        let coarse = make_periodic_1d(4, 1.0).unwrap();
        assert!(project_to_coarser(&[0.0; 6], &fine, &coarse).is_err());
        let other_len = make_periodic_1d(3, 2.0).unwrap();
        assert!(project_to_coarser(&[0.0; 6], &fine, &other_len).is_err());
    }

    #[test]
    fn projection_preserves_mass() {
        // direct summation oracle on a deterministic pseudo-random vector
        let fine = make_periodic_1d(24, 3.0).unwrap();
        let coarse = make_periodic_1d(6, 3.0).unwrap();
        let vals: Vec<f64> = (0..24).map(|i| ((i * 2654435761usize) % 97) as f64 / 7.0).collect();
        let proj = project_to_coarser(&vals, &fine, &coarse).unwrap();
        let mass_fine: f64 = vals.iter().sum::<f64>() * fine.dx;
        let mass_coarse: f64 = proj.iter().sum::<f64>() * coarse.dx;
        assert!((mass_fine - mass_coarse).abs() <= 1e-12 * mass_fine.abs());
    }

    #[test]
    fn cell_widths_sum_to_length() {
        let g = make_periodic_1d(13, 5.5).unwrap();
        let total: f64 = (0..g.n_cells).map(|_| g.dx).sum();
        assert!((total - g.length).abs() < 1e-12);
    }
}

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform quadrilateral mesh of `nx × ny` square elements with edge `h`.
///
/// Elements are numbered row by row starting at the bottom-left corner,
/// `e = row * nx + col`. Nodes follow the same convention on the
/// `(nx + 1) × (ny + 1)` lattice, and node `n` owns DOFs `2n` (x) and
/// `2n + 1` (y).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuredGrid {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
}

impl StructuredGrid {
    pub fn new(nx: usize, ny: usize, h: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidInput(format!("grid must be at least 1x1, got {nx}x{ny}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidInput(format!("element size must be positive, got {h}")));
        }
        Ok(Self { nx, ny, h })
    }

    /// Square grid whose physical extent is `extent` length units.
    pub fn with_extent(n: usize, extent: f64) -> Result<Self> {
        Self::new(n, n, extent / n as f64)
    }

    pub fn element_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn node_count(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn dof_count(&self) -> usize {
        2 * self.node_count()
    }

    pub fn width(&self) -> f64 {
        self.nx as f64 * self.h
    }

    pub fn node(&self, col: usize, row: usize) -> usize {
        row * (self.nx + 1) + col
    }

    pub fn element(&self, col: usize, row: usize) -> usize {
        row * self.nx + col
    }

    /// `(col, row)` of element `e`.
    pub fn element_position(&self, e: usize) -> (usize, usize) {
        (e % self.nx, e / self.nx)
    }

    /// Counter-clockwise node ids of element `e`, starting bottom-left.
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (c, r) = self.element_position(e);
        [self.node(c, r), self.node(c + 1, r), self.node(c + 1, r + 1), self.node(c, r + 1)]
    }

    pub fn element_dofs(&self, e: usize) -> [usize; 8] {
        let n = self.element_nodes(e);
        [
            2 * n[0],
            2 * n[0] + 1,
            2 * n[1],
            2 * n[1] + 1,
            2 * n[2],
            2 * n[2] + 1,
            2 * n[3],
            2 * n[3] + 1,
        ]
    }

    /// Largest `|i - j|` over DOF pairs sharing an element.
    pub fn half_bandwidth(&self) -> usize {
        2 * self.nx + 5
    }

    pub fn bottom_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..=self.nx).map(move |c| self.node(c, 0))
    }

    pub fn top_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..=self.nx).map(move |c| self.node(c, self.ny))
    }

    /// Edge-adjacent neighbours of element `e`.
    pub fn element_neighbors(&self, e: usize) -> impl Iterator<Item = usize> + '_ {
        let (c, r) = self.element_position(e);
        let left = (c > 0).then(|| self.element(c - 1, r));
        let right = (c + 1 < self.nx).then(|| self.element(c + 1, r));
        let down = (r > 0).then(|| self.element(c, r - 1));
        let up = (r + 1 < self.ny).then(|| self.element(c, r + 1));
        [left, right, down, up].into_iter().flatten()
    }

    /// Index of element `e` after mirroring the grid about its vertical centre line.
    pub fn mirror_element(&self, e: usize) -> usize {
        let (c, r) = self.element_position(e);
        self.element(self.nx - 1 - c, r)
    }
}

/// Per-element material density.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub nx: usize,
    pub ny: usize,
    pub rho: Vec<f64>,
    pub binarized: bool,
}

impl DensityField {
    pub fn new(nx: usize, ny: usize, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != nx * ny {
            return Err(Error::shape("DensityField", &[nx * ny], &[rho.len()]));
        }
        if let Some(v) = rho.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("density {v} outside [0, 1]")));
        }
        Ok(Self { nx, ny, rho, binarized: false })
    }

    pub fn uniform(nx: usize, ny: usize, value: f64) -> Result<Self> {
        Self::new(nx, ny, vec![value; nx * ny])
    }

    /// Binary field from a solid/void mask.
    pub fn from_mask(nx: usize, ny: usize, mask: &[bool]) -> Result<Self> {
        let rho = mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        let mut field = Self::new(nx, ny, rho)?;
        field.binarized = true;
        Ok(field)
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn volume_fraction(&self) -> f64 {
        self.rho.iter().sum::<f64>() / self.rho.len() as f64
    }

    pub fn solid_mask(&self) -> Vec<bool> {
        self.rho.iter().map(|&r| r >= 0.5).collect()
    }

    pub fn mirrored(&self) -> Self {
        let mut rho = Vec::with_capacity(self.rho.len());
        for r in 0..self.ny {
            for c in 0..self.nx {
                rho.push(self.rho[r * self.nx + (self.nx - 1 - c)]);
            }
        }
        Self { rho, ..self.clone() }
    }
}

/// Prescribed displacements and nodal point loads, both keyed by global DOF.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundaryConditionSet {
    pub fixed_dofs: Vec<(usize, f64)>,
    pub point_loads: Vec<(usize, f64)>,
}

impl BoundaryConditionSet {
    pub fn validate(&self, dof_count: usize) -> Result<()> {
        let mut fixed = vec![false; dof_count];
        for &(d, v) in &self.fixed_dofs {
            if d >= dof_count {
                return Err(Error::InvalidInput(format!("fixed dof {d} out of range")));
            }
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("prescribed value at dof {d} not finite")));
            }
            fixed[d] = true;
        }
        for &(d, v) in &self.point_loads {
            if d >= dof_count {
                return Err(Error::InvalidInput(format!("loaded dof {d} out of range")));
            }
            if fixed[d] {
                return Err(Error::InvalidInput(format!("dof {d} is both fixed and loaded")));
            }
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("load at dof {d} not finite")));
            }
        }
        Ok(())
    }

    /// Both DOFs of every bottom-edge node held at zero.
    pub fn clamp_bottom(grid: &StructuredGrid) -> Self {
        let fixed_dofs = grid.bottom_nodes().flat_map(|n| [(2 * n, 0.0), (2 * n + 1, 0.0)]).collect();
        Self { fixed_dofs, point_loads: Vec::new() }
    }

    pub fn fixed_mask(&self, dof_count: usize) -> Vec<bool> {
        let mut mask = vec![false; dof_count];
        for &(d, _) in &self.fixed_dofs {
            mask[d] = true;
        }
        mask
    }

    pub fn load_vector(&self, dof_count: usize) -> Vec<f64> {
        let mut f = vec![0.0; dof_count];
        for &(d, v) in &self.point_loads {
            f[d] += v;
        }
        f
    }
}

/// Isotropic linear elastic constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticProperties {
    /// Young's modulus, MPa.
    pub e: f64,
    pub nu: f64,
}

impl ElasticProperties {
    pub fn new(e: f64, nu: f64) -> Result<Self> {
        if !(e > 0.0 && e.is_finite()) || !(nu > -1.0 && nu < 0.5) {
            return Err(Error::InvalidInput(format!("invalid elastic constants E={e}, nu={nu}")));
        }
        Ok(Self { e, nu })
    }

    /// Structural steel used for the elastoplastic stage.
    pub const fn steel() -> Self {
        Self { e: 2.09e5, nu: 0.3 }
    }

    pub fn shear_modulus(&self) -> f64 {
        self.e / (2.0 * (1.0 + self.nu))
    }

    /// Plane-stress stiffness in Voigt order `(11, 22, 12)` with engineering shear.
    pub fn plane_stress_matrix(&self) -> [[f64; 3]; 3] {
        let c = self.e / (1.0 - self.nu * self.nu);
        [[c, self.nu * c, 0.0], [self.nu * c, c, 0.0], [0.0, 0.0, self.shear_modulus()]]
    }
}

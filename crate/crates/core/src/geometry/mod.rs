//! Quadrature grids, geodesic distances and L^p norms on the boundary
//! spheres S^1/S^2 and on the solid disk/ball.
//!
//! Grids are exact for polynomial integrands up to a declared degree, so norm
//! errors downstream are attributable rather than stochastic: the circle uses
//! the uniform trapezoid rule (exact for trigonometric polynomials), the
//! sphere uses Gauss–Legendre in cos(colatitude) times uniform longitude, and
//! the radial direction uses Gauss–Jacobi with the Jacobian r^n baked into
//! the weight.

pub mod rules;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
pub const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

/// Node layout of a grid; transforms exploit the tensor structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridStructure {
    /// Uniform angles on the circle.
    Circle { num_nodes: usize },
    /// Gauss–Legendre colatitudes x uniform longitudes, row-major in
    /// latitude: node index = i_lat * num_lon + j_lon.
    LatLon { num_lat: usize, num_lon: usize },
    /// Colatitude-only profile for axisymmetric integrands.
    ZonalProfile { num_lat: usize },
}

/// Quadrature grid on S^1 or S^2.
///
/// Nodes are `[theta, 0]` (angle) on the circle and
/// `[colatitude, longitude]` on the sphere. All weights are positive and sum
/// to the surface measure.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    dim: usize,
    nodes: Vec<[f64; 2]>,
    weights: Vec<f64>,
    exactness_degree: usize,
    total_measure: f64,
    structure: GridStructure,
    /// Smallest positive geodesic distance between grid neighbours; used by
    /// kernel diagnostics that must treat the diagonal separately.
    mesh_scale: f64,
}

impl QuadratureGrid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn exactness_degree(&self) -> usize {
        self.exactness_degree
    }

    pub fn total_measure(&self) -> f64 {
        self.total_measure
    }

    pub fn mesh_scale(&self) -> f64 {
        self.mesh_scale
    }

    pub fn structure(&self) -> GridStructure {
        self.structure
    }

    /// Quadrature of nodal values against the grid weights.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        self.check_len(values.len())?;
        Ok(values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v * w)
            .sum())
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.nodes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.nodes.len(),
                actual: len,
                context: "grid nodal values",
            });
        }
        Ok(())
    }

    /// Cartesian unit vector of node `i` (sphere nodes; the circle embeds in
    /// the plane with z = 0).
    pub fn unit_vector(&self, i: usize) -> [f64; 3] {
        let [a, b] = self.nodes[i];
        match self.dim {
            1 => [a.cos(), a.sin(), 0.0],
            _ => [a.sin() * b.cos(), a.sin() * b.sin(), a.cos()],
        }
    }
}

/// Uniform quadrature on the circle: nodes 2*pi*j/N, weights 2*pi/N.
///
/// Exact for trigonometric polynomials of degree <= N - 1.
pub fn make_circle_grid(num_nodes: usize) -> Result<QuadratureGrid> {
    if num_nodes < 4 {
        return Err(Error::invalid(format!(
            "circle grid needs at least 4 nodes, got {num_nodes}"
        )));
    }
    let h = TWO_PI / num_nodes as f64;
    let nodes = (0..num_nodes).map(|j| [j as f64 * h, 0.0]).collect();
    let weights = vec![h; num_nodes];
    Ok(QuadratureGrid {
        dim: 1,
        nodes,
        weights,
        exactness_degree: num_nodes - 1,
        total_measure: TWO_PI,
        structure: GridStructure::Circle { num_nodes },
        mesh_scale: h,
    })
}

/// Gauss–Legendre x uniform-longitude grid on the sphere.
///
/// Exact for spherical harmonics of degree <= min(2*num_lat - 1, num_lon - 1).
pub fn make_sphere_grid(num_lat: usize, num_lon: usize) -> Result<QuadratureGrid> {
    if num_lat < 2 || num_lon < 4 {
        return Err(Error::invalid(format!(
            "sphere grid needs num_lat >= 2 and num_lon >= 4, got ({num_lat}, {num_lon})"
        )));
    }
    let (x, wx) = rules::gauss_legendre(num_lat)?;
    let dphi = TWO_PI / num_lon as f64;
    let mut nodes = Vec::with_capacity(num_lat * num_lon);
    let mut weights = Vec::with_capacity(num_lat * num_lon);
    for (xi, wi) in x.iter().zip(&wx) {
        let theta = xi.acos();
        for j in 0..num_lon {
            nodes.push([theta, j as f64 * dphi]);
            weights.push(wi * dphi);
        }
    }
    // Colatitude spacing dominates near the equator; the longitude circle
    // spacing dominates near the poles. Use the smaller as the mesh scale.
    let dth = std::f64::consts::PI / num_lat as f64;
    let min_sin = x.iter().map(|xi| (1.0 - xi * xi).sqrt()).fold(f64::MAX, f64::min);
    Ok(QuadratureGrid {
        dim: 2,
        nodes,
        weights,
        exactness_degree: (2 * num_lat - 1).min(num_lon - 1),
        total_measure: FOUR_PI,
        structure: GridStructure::LatLon { num_lat, num_lon },
        mesh_scale: dth.min(dphi * min_sin),
    })
}

/// Colatitude-only grid for axisymmetric integrands on the sphere: nodes at
/// (theta_i, 0) with weights 2*pi*w_i. A valid S^2 quadrature whenever the
/// integrand does not depend on longitude; exact for zonal polynomials of
/// degree <= 2*num_lat - 1.
pub fn make_zonal_profile_grid(num_lat: usize) -> Result<QuadratureGrid> {
    if num_lat < 2 {
        return Err(Error::invalid("zonal profile grid needs num_lat >= 2"));
    }
    let (x, wx) = rules::gauss_legendre(num_lat)?;
    let nodes = x.iter().map(|xi| [xi.acos(), 0.0]).collect();
    let weights = wx.iter().map(|wi| wi * TWO_PI).collect();
    Ok(QuadratureGrid {
        dim: 2,
        nodes,
        weights,
        exactness_degree: 2 * num_lat - 1,
        total_measure: FOUR_PI,
        structure: GridStructure::ZonalProfile { num_lat },
        mesh_scale: std::f64::consts::PI / num_lat as f64,
    })
}

/// Geodesic distance between two grid nodes.
pub fn geodesic_distance(grid: &QuadratureGrid, i: usize, j: usize) -> Result<f64> {
    if i >= grid.len() || j >= grid.len() {
        return Err(Error::invalid(format!(
            "node index out of range: ({i}, {j}) on grid of {}",
            grid.len()
        )));
    }
    Ok(match grid.dim {
        1 => circle_distance(grid.nodes[i][0], grid.nodes[j][0]),
        _ => sphere_distance(grid.nodes[i], grid.nodes[j]),
    })
}

pub fn circle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % TWO_PI;
    d.min(TWO_PI - d)
}

pub fn sphere_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    // arccos of the dot product of the two unit vectors
    let dot = a[0].sin() * b[0].sin() * (a[1] - b[1]).cos() + a[0].cos() * b[0].cos();
    dot.clamp(-1.0, 1.0).acos()
}

/// L^p norm of real nodal values; p >= 1 or infinite.
pub fn lp_norm(values: &[f64], grid: &QuadratureGrid, p: f64) -> Result<f64> {
    grid.check_len(values.len())?;
    check_exponent(p)?;
    if p.is_infinite() {
        return Ok(values.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let sum: f64 = values
        .iter()
        .zip(&grid.weights)
        .map(|(v, w)| w * v.abs().powf(p))
        .sum();
    Ok(sum.powf(1.0 / p))
}

/// L^p norm of complex nodal values.
pub fn lp_norm_complex(values: &[Complex64], grid: &QuadratureGrid, p: f64) -> Result<f64> {
    grid.check_len(values.len())?;
    check_exponent(p)?;
    if p.is_infinite() {
        return Ok(values.iter().fold(0.0, |m, v| m.max(v.norm())));
    }
    let sum: f64 = values
        .iter()
        .zip(&grid.weights)
        .map(|(v, w)| w * v.norm().powf(p))
        .sum();
    Ok(sum.powf(1.0 / p))
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::invalid(format!("L^p exponent must satisfy p >= 1, got {p}")));
    }
    Ok(())
}

/// Tensor grid over the solid disk/ball: boundary grid times radial
/// Gauss–Jacobi nodes on (0, 1] with the Jacobian r^n in the weights.
#[derive(Debug, Clone)]
pub struct SolidGrid {
    boundary: QuadratureGrid,
    radial_nodes: Vec<f64>,
    radial_weights: Vec<f64>,
}

impl SolidGrid {
    /// Build from a boundary grid; the radial rule is exact for integrands
    /// r^k with k <= 2*num_radial - 1.
    pub fn new(boundary: QuadratureGrid, num_radial: usize) -> Result<Self> {
        let n = boundary.dim();
        let (x, w) = rules::gauss_jacobi_beta(num_radial, n)?;
        // Map [-1,1] with weight (1+x)^n to [0,1] with weight r^n.
        let scale = 2f64.powi(-(n as i32) - 1);
        let radial_nodes = x.iter().map(|xi| 0.5 * (xi + 1.0)).collect();
        let radial_weights = w.iter().map(|wi| wi * scale).collect();
        Ok(SolidGrid {
            boundary,
            radial_nodes,
            radial_weights,
        })
    }

    pub fn boundary(&self) -> &QuadratureGrid {
        &self.boundary
    }

    pub fn radial_nodes(&self) -> &[f64] {
        &self.radial_nodes
    }

    pub fn radial_weights(&self) -> &[f64] {
        &self.radial_weights
    }

    /// L^p norm over the solid domain of a function given by its nodal values
    /// on each radial shell: `shells[i]` holds the boundary-grid values at
    /// radius `radial_nodes[i]`. For p = infinity the boundary shell (r = 1)
    /// is included via `boundary_values`.
    pub fn lp_norm_shells(
        &self,
        shells: &[Vec<f64>],
        boundary_values: &[f64],
        p: f64,
    ) -> Result<f64> {
        check_exponent(p)?;
        if shells.len() != self.radial_nodes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.radial_nodes.len(),
                actual: shells.len(),
                context: "radial shells",
            });
        }
        if p.is_infinite() {
            let mut m = boundary_values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for shell in shells {
                m = shell.iter().fold(m, |m, v| m.max(v.abs()));
            }
            return Ok(m);
        }
        let mut sum = 0.0;
        for (shell, wr) in shells.iter().zip(&self.radial_weights) {
            self.boundary.check_len(shell.len())?;
            let s: f64 = shell
                .iter()
                .zip(self.boundary.weights())
                .map(|(v, w)| w * v.abs().powf(p))
                .sum();
            sum += wr * s;
        }
        Ok(sum.powf(1.0 / p))
    }
}

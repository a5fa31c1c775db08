//! Spectrum of D + V in the harmonic basis, harmonic extension of
//! eigenfunctions into the disk/ball, interior/boundary norm ratios, dyadic
//! extension bounds and interior decay profiles.
//!
//! The harmonic extension is spectral: the degree-k boundary component
//! extends as r^k, exactly on the model domains, so interior L^p norms come
//! from tensor quadrature with no meshing of the ball.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::basis::{CoefficientVector, HarmonicBasis};
use crate::error::{Error, Result};
use crate::fit;
use crate::geometry::{self, SolidGrid, TWO_PI};
use crate::operators::{self, PotentialField};
use crate::par;

/// Relative residual allowed on (D+V)e = lambda e.
const RESIDUAL_TOL: f64 = 1e-8;
/// Energy allowed in the top decile of degrees before an eigenvector is
/// flagged as truncation-contaminated.
const TAIL_ENERGY_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub lambda: f64,
    pub coefficients: CoefficientVector,
    pub index: usize,
    pub residual: f64,
    pub tail_contaminated: bool,
}

/// Full symmetric eigendecomposition of D + V, eigenvalues ascending,
/// eigenvectors orthonormal in coefficient space.
pub fn solve_spectrum(
    potential: &PotentialField,
    basis: &Arc<HarmonicBasis>,
) -> Result<Vec<Eigenpair>> {
    let composite = operators::assemble_composite(potential, basis)?;
    let decomp = operators::decompose(&composite)?;
    let n = basis.num_modes();
    let pairs = par::map_range(n, |j| {
        let coefficients: CoefficientVector = decomp.eigenvectors.column(j).into_owned();
        let lambda = decomp.eigenvalues[j];
        let residual = (composite.matrix() * &coefficients - &coefficients * lambda).norm();
        let tail = basis
            .leakage_fraction(&coefficients)
            .expect("length matches");
        Eigenpair {
            lambda,
            coefficients,
            index: j,
            residual,
            tail_contaminated: tail >= TAIL_ENERGY_TOL,
        }
    });
    for p in &pairs {
        if p.residual > RESIDUAL_TOL * p.lambda.abs().max(1.0) {
            return Err(Error::Eigensolve(format!(
                "residual {:.3e} at lambda {:.6} exceeds tolerance",
                p.residual, p.lambda
            )));
        }
    }
    Ok(pairs)
}

/// Spectrum of D + V on S^2 for an axisymmetric potential V(theta): the
/// operator block-diagonalizes over azimuthal order (and the cos/sin blocks
/// coincide), so each block is a dense (K+1-m)-dimensional eigensolve.
pub struct AxisymmetricSpectrum {
    basis: Arc<HarmonicBasis>,
    blocks: Vec<AxisymmetricBlock>,
}

pub struct AxisymmetricBlock {
    pub order: usize,
    /// 1 for m = 0, 2 for m >= 1 (cos and sin copies).
    pub multiplicity: usize,
    pub eigenvalues: Vec<f64>,
    /// Columns are eigenvectors over degrees k = m..K.
    pub vectors: DMatrix<f64>,
}

impl AxisymmetricSpectrum {
    /// Solve the per-order blocks. `potential_theta` holds V at the Gauss
    /// colatitude nodes of the basis grid.
    pub fn solve(basis: &Arc<HarmonicBasis>, potential_theta: &[f64]) -> Result<Self> {
        let tables = basis
            .sphere_tables()
            .ok_or_else(|| Error::invalid("axisymmetric solve requires an S^2 basis"))?;
        if potential_theta.len() != tables.num_lat {
            return Err(Error::DimensionMismatch {
                expected: tables.num_lat,
                actual: potential_theta.len(),
                context: "axisymmetric potential on latitude nodes",
            });
        }
        let kmax = basis.max_degree();
        let weights: Vec<f64> = tables
            .lat_weights
            .iter()
            .zip(potential_theta)
            .map(|(w, v)| TWO_PI * w * v)
            .collect();
        let blocks = par::map_range(kmax + 1, |m| {
            let table = &tables.legendre[m];
            let size = kmax + 1 - m;
            let mut h = DMatrix::zeros(size, size);
            // <Y_km, V Y_k'm> = 2 pi sum_i w_i V_i Q_k^m Q_k'^m for every m
            for a in 0..size {
                for b in a..size {
                    let mut acc = 0.0;
                    for i in 0..tables.num_lat {
                        acc += weights[i] * table[(i, a)] * table[(i, b)];
                    }
                    h[(a, b)] = acc;
                    h[(b, a)] = acc;
                }
            }
            for a in 0..size {
                h[(a, a)] += (m + a) as f64; // DtN eigenvalue: the degree
            }
            let eig = nalgebra::SymmetricEigen::new(h);
            let mut idx: Vec<usize> = (0..size).collect();
            idx.sort_by(|x, y| eig.eigenvalues[*x].partial_cmp(&eig.eigenvalues[*y]).unwrap());
            let eigenvalues: Vec<f64> = idx.iter().map(|i| eig.eigenvalues[*i]).collect();
            let mut vectors = DMatrix::zeros(size, size);
            for (c, i) in idx.iter().enumerate() {
                vectors.set_column(c, &eig.eigenvectors.column(*i));
            }
            AxisymmetricBlock {
                order: m,
                multiplicity: if m == 0 { 1 } else { 2 },
                eigenvalues,
                vectors,
            }
        });
        Ok(AxisymmetricSpectrum {
            basis: basis.clone(),
            blocks,
        })
    }

    pub fn basis(&self) -> &Arc<HarmonicBasis> {
        &self.basis
    }

    pub fn blocks(&self) -> &[AxisymmetricBlock] {
        &self.blocks
    }

    /// All eigenvalues with multiplicity, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for b in &self.blocks {
            for ev in &b.eigenvalues {
                for _ in 0..b.multiplicity {
                    out.push(*ev);
                }
            }
        }
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }

    /// Exact L^2 -> L^inf norm of the spectral cluster [lambda, lambda+1):
    /// the cluster density is axisymmetric, so the sup is over colatitude.
    pub fn cluster_norm_2_to_inf(&self, lambda: f64) -> Result<(f64, usize)> {
        let tables = self
            .basis
            .sphere_tables()
            .ok_or_else(|| Error::invalid("S^2 basis required"))?;
        let mut density = vec![0.0f64; tables.num_lat];
        let mut rank = 0usize;
        for block in &self.blocks {
            let sel: Vec<usize> = block
                .eigenvalues
                .iter()
                .enumerate()
                .filter(|(_, ev)| **ev >= lambda && **ev < lambda + 1.0)
                .map(|(i, _)| i)
                .collect();
            if sel.is_empty() {
                continue;
            }
            rank += block.multiplicity * sel.len();
            let table = &tables.legendre[block.order];
            for j in &sel {
                let col = block.vectors.column(*j);
                for i in 0..tables.num_lat {
                    let mut f = 0.0;
                    for (a, c) in col.iter().enumerate() {
                        f += c * table[(i, a)];
                    }
                    // cos^2 + sin^2 collapses the azimuthal factor; the
                    // sqrt(2) normalization doubles the m >= 1 density.
                    density[i] += block.multiplicity as f64 * f * f;
                }
            }
        }
        Ok((
            density.iter().fold(0.0f64, |m, v| m.max(*v)).sqrt(),
            rank,
        ))
    }
}

/// Harmonic extension data of one boundary function: interior L^p norms over
/// a p-list and annulus sup-norms over a delta-list.
#[derive(Debug, Clone)]
pub struct ExtensionProfile {
    pub lambda: f64,
    /// (p, boundary norm) pairs.
    pub boundary_norms: Vec<(f64, f64)>,
    /// (p, interior norm) pairs.
    pub interior_norms: Vec<(f64, f64)>,
    /// (delta, sup over r <= 1 - delta) pairs; delta = 0 is the boundary sup.
    pub annulus_sups: Vec<(f64, f64)>,
}

impl ExtensionProfile {
    pub fn boundary(&self, p: f64) -> Option<f64> {
        lookup(&self.boundary_norms, p)
    }

    pub fn interior(&self, p: f64) -> Option<f64> {
        lookup(&self.interior_norms, p)
    }
}

fn lookup(pairs: &[(f64, f64)], key: f64) -> Option<f64> {
    pairs
        .iter()
        .find(|(k, _)| (k - key).abs() < 1e-12 || (k.is_infinite() && key.is_infinite()))
        .map(|(_, v)| *v)
}

/// Scale coefficients by r^degree: the spectral harmonic extension evaluated
/// on one radial shell.
pub fn shell_coefficients(
    basis: &HarmonicBasis,
    coeffs: &CoefficientVector,
    r: f64,
) -> CoefficientVector {
    let mut out = coeffs.clone();
    for (idx, mode) in basis.modes().iter().enumerate() {
        out[idx] *= r.powi(mode.degree as i32);
    }
    out
}

/// Harmonically extend a boundary function into the solid domain and measure
/// its interior norms. The lambda field of the result is taken from the
/// caller (eigenvalue or sqrt-Laplacian frequency of the trace).
pub fn extend_harmonically(
    lambda: f64,
    coeffs: &CoefficientVector,
    basis: &HarmonicBasis,
    solid: &SolidGrid,
    p_list: &[f64],
    delta_list: &[f64],
) -> Result<ExtensionProfile> {
    basis.check_coefficients(coeffs)?;
    let boundary_values = basis.synthesize(coeffs)?;
    let shells: Vec<Vec<f64>> = par::map_slice(solid.radial_nodes(), |r| {
        let sc = shell_coefficients(basis, coeffs, *r);
        basis.synthesize(&sc).expect("length matches")
    });

    let mut boundary_norms = Vec::with_capacity(p_list.len());
    let mut interior_norms = Vec::with_capacity(p_list.len());
    for &p in p_list {
        boundary_norms.push((p, geometry::lp_norm(&boundary_values, basis.grid(), p)?));
        interior_norms.push((p, solid.lp_norm_shells(&shells, &boundary_values, p)?));
    }

    let boundary_sup = boundary_values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut annulus_sups = Vec::with_capacity(delta_list.len());
    for &delta in delta_list {
        if delta == 0.0 {
            annulus_sups.push((0.0, boundary_sup));
            continue;
        }
        let mut sup = 0.0f64;
        for (r, shell) in solid.radial_nodes().iter().zip(&shells) {
            if *r <= 1.0 - delta {
                sup = shell.iter().fold(sup, |m, v| m.max(v.abs()));
            }
        }
        annulus_sups.push((delta, sup));
    }

    Ok(ExtensionProfile {
        lambda,
        boundary_norms,
        interior_norms,
        annulus_sups,
    })
}

/// ||e||_Lp(solid) / ||e||_Lp(boundary) from a computed profile.
pub fn interior_boundary_ratio(profile: &ExtensionProfile, p: f64) -> Result<f64> {
    let b = profile
        .boundary(p)
        .ok_or_else(|| Error::invalid(format!("p = {p} not in the profile's p-list")))?;
    let i = profile
        .interior(p)
        .ok_or_else(|| Error::invalid(format!("p = {p} not in the profile's p-list")))?;
    if b == 0.0 {
        return Err(Error::invalid("zero boundary norm"));
    }
    Ok(i / b)
}

/// ||T_H(beta_l(P) f)||_Lp(solid) / ||f||_Lp(boundary): the harmonic
/// extension of the dyadic frequency block of a trace.
pub fn dyadic_extension_bound(
    f_values: &[f64],
    basis: &HarmonicBasis,
    solid: &SolidGrid,
    ell: u32,
    p: f64,
) -> Result<f64> {
    let lambda_max = *basis
        .sqrt_eigenvalues()
        .last()
        .ok_or_else(|| Error::invalid("empty basis"))?;
    if 2f64.powi(ell as i32 + 1) > lambda_max {
        return Err(Error::InsufficientResolution(format!(
            "dyadic level {ell} needs frequencies up to {} but the basis caps at {lambda_max}",
            2f64.powi(ell as i32 + 1)
        )));
    }
    let coeffs = basis.analyze(f_values)?;
    let filtered = operators::apply_multiplier(
        operators::lp_bump,
        2f64.powi(ell as i32),
        basis,
        &coeffs,
    )?;
    let denom = geometry::lp_norm(f_values, basis.grid(), p)?;
    if denom == 0.0 {
        return Err(Error::invalid("zero trace norm"));
    }
    let shells: Vec<Vec<f64>> = par::map_slice(solid.radial_nodes(), |r| {
        let sc = shell_coefficients(basis, &filtered, *r);
        basis.synthesize(&sc).expect("length matches")
    });
    let boundary_filtered = basis.synthesize(&filtered)?;
    let numer = solid.lp_norm_shells(&shells, &boundary_filtered, p)?;
    Ok(numer / denom)
}

/// Per-annulus sup norms with a fitted exponential decay rate:
/// sup_{r <= 1-delta} |u| ~ C exp(-c lambda delta).
#[derive(Debug, Clone)]
pub struct DecayProfile {
    /// (delta, sup) pairs, delta > 0.
    pub points: Vec<(f64, f64)>,
    /// Fitted c in sup ~ C exp(-c lambda delta).
    pub rate: f64,
    pub r_squared: f64,
}

pub fn interior_decay_profile(profile: &ExtensionProfile) -> Result<DecayProfile> {
    let sup0 = profile
        .annulus_sups
        .iter()
        .find(|(d, _)| *d == 0.0)
        .map(|(_, s)| *s)
        .ok_or_else(|| Error::invalid("decay fit needs the delta = 0 entry"))?;
    let pts: Vec<(f64, f64)> = profile
        .annulus_sups
        .iter()
        .filter(|(d, s)| *d > 0.0 && *s > 0.0)
        .map(|(d, s)| (*d, *s))
        .collect();
    if pts.len() < 2 || sup0 <= 0.0 || profile.lambda <= 0.0 {
        return Err(Error::invalid("decay fit needs >= 2 positive annulus sups"));
    }
    // least squares of ln(sup/sup0) against -lambda*delta
    let xs: Vec<f64> = pts.iter().map(|(d, _)| -profile.lambda * d).collect();
    let ys: Vec<f64> = pts.iter().map(|(_, s)| (s / sup0).ln()).collect();
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let rate = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - rate * sx) / n;
    let mean = sy / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        ss_res += (y - (rate * x + intercept)).powi(2);
        ss_tot += (y - mean).powi(2);
    }
    let r_squared = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Ok(DecayProfile {
        points: pts,
        rate,
        r_squared,
    })
}

/// Both sides of the Dirichlet a-priori bound: ||u||_{L^2(solid)} for the
/// harmonic extension u of f, against the spectral H^{-1/2} norm
/// (sum (1+lambda_k^2)^{-1/2} |f_k|^2)^{1/2}.
pub fn dirichlet_apriori_check(
    f_values: &[f64],
    basis: &HarmonicBasis,
    solid: &SolidGrid,
) -> Result<(f64, f64)> {
    let coeffs = basis.analyze(f_values)?;
    let shells: Vec<Vec<f64>> = par::map_slice(solid.radial_nodes(), |r| {
        let sc = shell_coefficients(basis, &coeffs, *r);
        basis.synthesize(&sc).expect("length matches")
    });
    let lhs = solid.lp_norm_shells(&shells, f_values, 2.0)?;
    let mut h_half = 0.0;
    for (idx, lam) in basis.sqrt_eigenvalues().iter().enumerate() {
        h_half += coeffs[idx] * coeffs[idx] / (1.0 + lam * lam).sqrt();
    }
    Ok((lhs, h_half.sqrt()))
}

/// Eigenvalue counting function data (lambda, N(lambda)) for Weyl-law slope
/// fits.
pub fn counting_function(eigenvalues: &[f64], lambdas: &[f64]) -> Vec<(f64, f64)> {
    lambdas
        .iter()
        .map(|l| {
            let count = eigenvalues.iter().filter(|ev| **ev <= *l).count();
            (*l, count as f64)
        })
        .collect()
}

/// Slope data for norm-growth laws: (lambda, value) points fitted over a
/// window; thin wrapper noting the standard usage.
pub fn growth_slope(points: &[(f64, f64)], window: (f64, f64)) -> Result<fit::ExponentFit> {
    fit::fit_exponent(points, window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_basis;
    use nalgebra::DVector;
    use crate::geometry::{make_circle_grid, make_sphere_grid};
    use approx::assert_abs_diff_eq;

    fn circle_setup(k: usize) -> (Arc<HarmonicBasis>, SolidGrid) {
        let grid = make_circle_grid(4 * (k + 1)).unwrap();
        let basis = Arc::new(build_basis(1, k, &grid).unwrap());
        let solid = SolidGrid::new(grid, 2 * k + 4).unwrap();
        (basis, solid)
    }

    #[test]
    fn flat_spectrum_is_exact() {
        let (basis, _) = circle_setup(16);
        let v0 = PotentialField::zero(basis.grid());
        let pairs = solve_spectrum(&v0, &basis).unwrap();
        // {0, 1, 1, 2, 2, ...}
        assert_abs_diff_eq!(pairs[0].lambda, 0.0, epsilon = 1e-10);
        for k in 1..=16usize {
            assert_abs_diff_eq!(pairs[2 * k - 1].lambda, k as f64, epsilon = 1e-10);
            assert_abs_diff_eq!(pairs[2 * k].lambda, k as f64, epsilon = 1e-10);
        }
        for p in &pairs {
            assert!(p.residual < 1e-10);
            // eigenpairs below the tail margin are clean; the ones at the
            // truncation edge are flagged by construction
            if p.lambda < 0.9 * 16.0 {
                assert!(!p.tail_contaminated, "lambda = {}", p.lambda);
            }
        }
    }

    #[test]
    fn constant_potential_shifts_spectrum() {
        let (basis, _) = circle_setup(8);
        let v = PotentialField::constant(basis.grid(), 0.75);
        let pairs = solve_spectrum(&v, &basis).unwrap();
        assert_abs_diff_eq!(pairs[0].lambda, 0.75, epsilon = 1e-10);
        assert_abs_diff_eq!(pairs[1].lambda, 1.75, epsilon = 1e-10);
    }

    #[test]
    fn cos_potential_spectrum_stable_under_refinement() {
        let grid_a = make_circle_grid(128).unwrap();
        let basis_a = Arc::new(build_basis(1, 24, &grid_a).unwrap());
        let va = PotentialField::cos_lowfreq(basis_a.grid());
        let pa = solve_spectrum(&va, &basis_a).unwrap();

        let grid_b = make_circle_grid(160).unwrap();
        let basis_b = Arc::new(build_basis(1, 36, &grid_b).unwrap());
        let vb = PotentialField::cos_lowfreq(basis_b.grid());
        let pb = solve_spectrum(&vb, &basis_b).unwrap();

        // eigenvalues well below the truncation agree across K
        for j in 0..30 {
            assert_abs_diff_eq!(pa[j].lambda, pb[j].lambda, epsilon = 1e-8);
        }
        // orthonormality of the eigenvector family
        let mut gram_defect = 0.0f64;
        for a in 0..20 {
            for b in 0..20 {
                let dot = pa[a].coefficients.dot(&pa[b].coefficients);
                let expect = if a == b { 1.0 } else { 0.0 };
                gram_defect = gram_defect.max((dot - expect).abs());
            }
        }
        assert!(gram_defect < 1e-9);
    }

    #[test]
    fn axisymmetric_blocks_match_dense_solve() {
        let grid = make_sphere_grid(2 * 13, 4 * 13).unwrap();
        let basis = Arc::new(build_basis(2, 12, &grid).unwrap());
        // zonal potential cos(theta)
        let v = PotentialField::cos_lowfreq(basis.grid());
        let dense = solve_spectrum(&v, &basis).unwrap();
        let tables = basis.sphere_tables().unwrap();
        let v_theta: Vec<f64> = tables.lat_cos.to_vec();
        let axi = AxisymmetricSpectrum::solve(&basis, &v_theta).unwrap();
        let evs = axi.eigenvalues();
        assert_eq!(evs.len(), dense.len());
        for (a, d) in evs.iter().zip(&dense) {
            assert_abs_diff_eq!(*a, d.lambda, epsilon = 1e-8);
        }
    }

    #[test]
    fn axisymmetric_cluster_norm_matches_addition_theorem_at_v0() {
        let grid = make_sphere_grid(2 * 17, 4 * 17).unwrap();
        let basis = Arc::new(build_basis(2, 16, &grid).unwrap());
        let v_theta = vec![0.0; basis.sphere_tables().unwrap().num_lat];
        let axi = AxisymmetricSpectrum::solve(&basis, &v_theta).unwrap();
        for k in [3usize, 8, 12] {
            let (norm, rank) = axi.cluster_norm_2_to_inf(k as f64 - 0.25).unwrap();
            assert_eq!(rank, 2 * k + 1);
            let expect = ((2.0 * k as f64 + 1.0) / crate::geometry::FOUR_PI).sqrt();
            assert_abs_diff_eq!(norm, expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn pure_mode_extension_profile() {
        let (basis, solid) = circle_setup(16);
        let k = 4usize;
        let idx = basis
            .modes()
            .iter()
            .position(|m| m.degree == k && m.order > 0)
            .unwrap();
        let mut c: CoefficientVector = DVector::zeros(basis.num_modes());
        c[idx] = 1.0;
        let profile = extend_harmonically(
            k as f64,
            &c,
            &basis,
            &solid,
            &[2.0, 4.0, f64::INFINITY],
            &[0.0, 0.1, 0.2],
        )
        .unwrap();
        // interior L2 = boundary L2 * (2k+2)^{-1/2}
        let ratio = interior_boundary_ratio(&profile, 2.0).unwrap();
        assert_abs_diff_eq!(ratio, (2.0 * k as f64 + 2.0f64).powf(-0.5), epsilon = 1e-10);
        // closed form (kp + n + 1)^{-1/p} at p = 4
        let r4 = interior_boundary_ratio(&profile, 4.0).unwrap();
        assert_abs_diff_eq!(r4, (4.0 * k as f64 + 2.0f64).powf(-0.25), epsilon = 1e-10);
        // maximum principle is exact for extensions
        let ri = interior_boundary_ratio(&profile, f64::INFINITY).unwrap();
        assert_abs_diff_eq!(ri, 1.0, epsilon = 1e-12);
        // annulus sup: boundary sup times (1-delta)^k; radial nodes only
        // reach r <= 1 - delta so compare against the largest admissible node
        let sup0 = profile.annulus_sups[0].1;
        let (d, s) = profile.annulus_sups[1];
        let r_star = solid
            .radial_nodes()
            .iter()
            .filter(|r| **r <= 1.0 - d)
            .fold(0.0f64, |m, r| m.max(*r));
        assert_abs_diff_eq!(s, sup0 * r_star.powi(k as i32), epsilon = 1e-10);
    }

    #[test]
    fn trace_of_extension_matches_boundary() {
        let (basis, _) = circle_setup(10);
        let mut c: CoefficientVector = DVector::zeros(basis.num_modes());
        for i in 0..c.len() {
            c[i] = ((i * 7 + 3) % 5) as f64 - 2.0;
        }
        let at_one = shell_coefficients(&basis, &c, 1.0);
        assert!((&at_one - &c).amax() < 1e-12);
    }

    #[test]
    fn extension_is_discretely_harmonic() {
        // polar-coordinate Laplacian u_rr + u_r / r + u_tt / r^2 on a tensor
        // grid; the residual must shrink like h^2 under refinement.
        let (basis, _) = circle_setup(6);
        let mut c: CoefficientVector = DVector::zeros(basis.num_modes());
        let i3 = basis.modes().iter().position(|m| m.degree == 3 && m.order > 0).unwrap();
        let i5 = basis.modes().iter().position(|m| m.degree == 5 && m.order < 0).unwrap();
        c[i3] = 1.0;
        c[i5] = -0.6;
        let eval = |r: f64, t: f64| -> f64 {
            let sc = shell_coefficients(&basis, &c, r);
            basis.evaluate_at(&sc, [t, 0.0]).unwrap()
        };
        let mut errs = Vec::new();
        for h in [1e-2, 5e-3] {
            let (r, t) = (0.6, 1.1);
            let urr = (eval(r + h, t) - 2.0 * eval(r, t) + eval(r - h, t)) / (h * h);
            let ur = (eval(r + h, t) - eval(r - h, t)) / (2.0 * h);
            let utt = (eval(r, t + h) - 2.0 * eval(r, t) + eval(r, t - h)) / (h * h);
            errs.push((urr + ur / r + utt / (r * r)).abs());
        }
        assert!(errs[1] < errs[0] / 3.0, "laplacian residuals {errs:?}");
        assert!(errs[1] < 1e-3);
    }

    #[test]
    fn dyadic_bound_on_pure_modes_and_support() {
        let grid = make_circle_grid(160).unwrap();
        let basis = Arc::new(build_basis(1, 40, &grid).unwrap());
        let solid = SolidGrid::new(grid, 90).unwrap();
        // pure mode inside the level-3 band (lambda in (4, 16))
        let k = 11usize;
        let vals: Vec<f64> = basis.grid().nodes().iter().map(|[t, _]| (k as f64 * t).cos()).collect();
        let ratio = dyadic_extension_bound(&vals, &basis, &solid, 3, 2.0).unwrap();
        let beta = operators::lp_bump(k as f64 / 8.0);
        let expect = beta * (2.0 * k as f64 + 2.0f64).powf(-0.5);
        assert_abs_diff_eq!(ratio, expect, epsilon = 1e-10);
        // no energy in the band
        let lo: Vec<f64> = basis.grid().nodes().iter().map(|[t, _]| (2.0 * t).cos()).collect();
        let zero = dyadic_extension_bound(&lo, &basis, &solid, 4, 2.0).unwrap();
        assert_abs_diff_eq!(zero, 0.0, epsilon = 1e-14);
        // level beyond the basis rejected
        assert!(dyadic_extension_bound(&vals, &basis, &solid, 6, 2.0).is_err());
    }

    #[test]
    fn decay_profile_of_pure_mode() {
        let (basis, solid) = circle_setup(64);
        let k = 64usize;
        let idx = basis.modes().iter().position(|m| m.degree == k && m.order > 0).unwrap();
        let mut c: CoefficientVector = DVector::zeros(basis.num_modes());
        c[idx] = 1.0;
        let deltas = [0.0, 0.05, 0.1, 0.15, 0.2];
        let profile = extend_harmonically(k as f64, &c, &basis, &solid, &[2.0], &deltas).unwrap();
        // sup over r <= 0.9 relative to boundary sup ~ (0.9)^64 evaluated at
        // the largest radial node below 0.9
        let r_star = solid
            .radial_nodes()
            .iter()
            .filter(|r| **r <= 0.9)
            .fold(0.0f64, |m, r| m.max(*r));
        let (_, s) = profile.annulus_sups.iter().find(|(d, _)| (*d - 0.1).abs() < 1e-12).unwrap();
        let sup0 = profile.annulus_sups[0].1;
        assert_abs_diff_eq!(s / sup0, r_star.powi(64), epsilon = 1e-6);
        let decay = interior_decay_profile(&profile).unwrap();
        // rate c = -ln(1-delta)/delta >= 1
        assert!(decay.rate >= 1.0);
        assert!(decay.r_squared > 0.99);
    }

    #[test]
    fn dirichlet_bound_on_pure_modes_and_constants() {
        let (basis, solid) = circle_setup(24);
        for k in [0usize, 1, 5, 20] {
            let idx = basis
                .modes()
                .iter()
                .position(|m| m.degree == k && m.order >= 0)
                .unwrap();
            let mut c: CoefficientVector = DVector::zeros(basis.num_modes());
            c[idx] = 1.3;
            let vals = basis.synthesize(&c).unwrap();
            let (lhs, rhs) = dirichlet_apriori_check(&vals, &basis, &solid).unwrap();
            let kf = k as f64;
            let expect_lhs = 1.3 * (2.0 * kf + 2.0).powf(-0.5);
            let expect_rhs = 1.3 * (1.0 + kf * kf).powf(-0.25);
            assert_abs_diff_eq!(lhs, expect_lhs, epsilon = 1e-10);
            assert_abs_diff_eq!(rhs, expect_rhs, epsilon = 1e-10);
            assert!(lhs <= rhs * (1.0 + 1e-12));
        }
        // constant trace: ratio sqrt(1/2)
        let ones = vec![2.0; basis.grid().len()];
        let (lhs, rhs) = dirichlet_apriori_check(&ones, &basis, &solid).unwrap();
        assert_abs_diff_eq!(lhs / rhs, 0.5f64.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn weyl_counting_slope() {
        let (basis, _) = circle_setup(128);
        let v0 = PotentialField::zero(basis.grid());
        let pairs = solve_spectrum(&v0, &basis).unwrap();
        let evs: Vec<f64> = pairs.iter().map(|p| p.lambda).collect();
        let lambdas: Vec<f64> = (3..=7).map(|j| 2f64.powi(j)).collect();
        let pts = counting_function(&evs, &lambdas);
        let fit = growth_slope(&pts, (8.0, 128.0)).unwrap();
        assert!((fit.slope - 1.0).abs() < 0.1, "slope {}", fit.slope);
    }
}

//! Synthetic internal-functional data from Gaussian heating patterns.
//!
//! The deterministic model integrates `g(. - x, a) sigma' |grad u|^2` on a
//! fine grid. The stochastic model draws thermal currents on every fine edge
//! and averages squared electrode currents over realisations.
//!
//! Fast stochastic path: for a heated realisation only the edges close to the
//! heating centre are drawn one by one. All remaining edges enter the electrode
//! currents linearly, so their joint contribution is a Gaussian vector whose
//! covariance is known in closed form; it is drawn from a small factorisation.
//! The resulting currents have exactly the same distribution as per-edge
//! sampling.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{
    ConductivityField, LaplaceSolver, PhysicalConstants, PotentialField, CM, CONDUCTIVITY_TO_SI,
};
use crate::grid::{GridOperators, GridSpec};
use crate::sparse::Scalar;

/// Patterns below this fraction of their peak are treated as zero in the
/// deterministic quadrature.
const PATTERN_CUTOFF: f64 = 1e-16;
/// Edges whose heating exceeds this fraction of the peak are sampled
/// individually in the fast stochastic path.
const NEAR_FRACTION: f64 = 1e-3;

/// `g(x, a) = exp(-|x - c|^2 / 2a) / (2 pi a)`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HeatingPattern {
    pub center: (f64, f64),
    pub a: f64,
}

impl HeatingPattern {
    pub fn new(center: (f64, f64), a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "heating width a={a} must be positive"
            )));
        }
        Ok(Self { center, a })
    }

    pub fn peak(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * self.a)
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let r2 = (x - self.center.0).powi(2) + (y - self.center.1).powi(2);
        self.peak() * (-r2 / (2.0 * self.a)).exp()
    }

    /// Squared radius beyond which the pattern is below `fraction * peak`.
    pub fn radius_sq(&self, fraction: f64) -> f64 {
        -2.0 * self.a * fraction.ln()
    }

    pub fn effective_area(&self) -> f64 {
        std::f64::consts::PI * self.a
    }
}

pub fn gaussian_pattern(center: (f64, f64), a: f64, points: &[(f64, f64)]) -> Result<Vec<f64>> {
    let p = HeatingPattern::new(center, a)?;
    Ok(points.iter().map(|&(x, y)| p.eval(x, y)).collect())
}

/// Fewest nodes per side for which a pattern of width `a` covers at least
/// four fine cells (`pi a >= 4 dx^2`).
pub fn required_fine_nodes(extent: f64, a: f64) -> usize {
    let dx_max = (std::f64::consts::PI * a / 4.0).sqrt();
    (extent / dx_max).ceil() as usize + 1
}

pub fn check_sampling(fine: &GridSpec, a: f64) -> Result<()> {
    let required = required_fine_nodes(fine.extent(), a);
    if fine.n() < required {
        return Err(Error::Undersampled {
            a,
            required,
            actual: fine.n(),
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExperimentParams {
    /// Background temperature, K.
    pub t0: f64,
    /// Bandwidth, rad/s.
    pub delta_omega: f64,
    /// Plate thickness, cm.
    pub delta_z: f64,
    /// Number of realisations.
    pub realizations: usize,
    /// Angular frequency, rad/s.
    pub omega: f64,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self {
            t0: 300.0,
            delta_omega: 2.0 * std::f64::consts::PI * 1e4,
            delta_z: 0.1,
            realizations: 1000,
            omega: 2.0 * std::f64::consts::PI * 1e4,
        }
    }
}

impl ExperimentParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("t0", self.t0),
            ("delta_omega", self.delta_omega),
            ("delta_z", self.delta_z),
            ("omega", self.omega),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name}={v} must be positive"
                )));
            }
        }
        if self.realizations == 0 {
            return Err(Error::InvalidParameter(
                "realizations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Units in which thermal currents are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseScaling {
    /// Current densities in A/m^2 with variance
    /// `kappa/pi T sigma' Delta-omega / (cell area * Delta-z)`; electrode
    /// currents in amperes.
    #[default]
    Physical,
    /// Standard deviation `sqrt(kappa T sigma' / pi)` per edge in grid units,
    /// with no bandwidth, thickness or cell factors.
    Dimensionless,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum Provenance {
    Deterministic {
        a: f64,
    },
    Stochastic {
        a: f64,
        params: ExperimentParams,
        scaling: NoiseScaling,
        seed: u64,
    },
}

/// `H_ii` on every coarse node, one vector per experiment.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeasurementSet {
    pub grid: GridSpec,
    pub data: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl MeasurementSet {
    pub fn num_experiments(&self) -> usize {
        self.data.len()
    }
}

/// Edges whose midpoint lies within `sqrt(r2)` of `(x, y)`.
fn edges_within(grid: &GridSpec, (x, y): (f64, f64), r2: f64) -> Vec<usize> {
    let n = grid.n();
    let h = grid.dx();
    let r = r2.sqrt();
    let clamp = |v: f64| v.max(0.0).min((n - 1) as f64);
    let (i0, i1) = (
        clamp(((x - r) / h).floor()) as usize,
        clamp(((x + r) / h).ceil()) as usize,
    );
    let (j0, j1) = (
        clamp(((y - r) / h).floor()) as usize,
        clamp(((y + r) / h).ceil()) as usize,
    );
    let nh = grid.num_h_edges();
    let mut out = Vec::new();
    for j in j0..=j1 {
        for i in i0..=i1 {
            if i + 1 < n {
                out.push(i + (n - 1) * j);
            }
            if j + 1 < n {
                out.push(nh + i + n * j);
            }
        }
    }
    out.retain(|&e| {
        let (ex, ey) = grid.edge_midpoint(e);
        (ex - x).powi(2) + (ey - y).powi(2) <= r2
    });
    out.sort_unstable();
    out
}

/// `s_e |D u_e|^2 q_e` on every fine edge, with `s_e = E12 sigma'`.
fn dissipation_per_edge(sigma_re: &[f64], u: &[Complex64], ops: &GridOperators) -> Vec<f64> {
    let s = ops.e12.apply(sigma_re);
    let du = ops.d.apply(u);
    let q = ops.grid.edge_quadrature_weights();
    s.iter()
        .zip(&du)
        .zip(&q)
        .map(|((s, d), q)| s * d.norm_sqr() * q)
        .collect()
}

fn check_fine(
    sigma: &ConductivityField,
    potentials: &[PotentialField],
    ops: &GridOperators,
) -> Result<()> {
    if sigma.grid() != &ops.grid {
        return Err(Error::DimensionMismatch(
            "conductivity is not on the fine grid".into(),
        ));
    }
    if let Some(p) = potentials
        .iter()
        .find(|p| p.u.len() != ops.grid.num_nodes())
    {
        return Err(Error::DimensionMismatch(format!(
            "potential has {} nodes, fine grid {}",
            p.u.len(),
            ops.grid.num_nodes()
        )));
    }
    Ok(())
}

fn coarse_extent_mismatch(a: &GridSpec, b: &GridSpec) -> bool {
    (a.extent() - b.extent()).abs() > 1e-12 * a.extent()
}

/// `H_ii(x) = sum_e g(e - x, a) s_e |D u_i|^2 q_e` on the fine grid, for `x`
/// ranging over the coarse nodes.
pub fn deterministic_measure(
    sigma: &ConductivityField,
    potentials: &[PotentialField],
    coarse: &GridSpec,
    a: f64,
    fine_ops: &GridOperators,
) -> Result<MeasurementSet> {
    check_fine(sigma, potentials, fine_ops)?;
    if coarse_extent_mismatch(coarse, &fine_ops.grid) {
        return Err(Error::DimensionMismatch(
            "coarse and fine grids cover different domains".into(),
        ));
    }
    HeatingPattern::new((0.0, 0.0), a)?;
    check_sampling(&fine_ops.grid, a)?;
    let fine = fine_ops.grid;
    let weights: Vec<Vec<f64>> = potentials
        .iter()
        .map(|p| dissipation_per_edge(sigma.sigma_re(), &p.u, fine_ops))
        .collect();
    let centers = coarse.node_coords();
    let per_center: Vec<Vec<f64>> = centers
        .par_iter()
        .map(|&c| {
            let pat = HeatingPattern { center: c, a };
            let edges = edges_within(&fine, c, pat.radius_sq(PATTERN_CUTOFF));
            let g: Vec<f64> = edges
                .iter()
                .map(|&e| {
                    let (x, y) = fine.edge_midpoint(e);
                    pat.eval(x, y)
                })
                .collect();
            weights
                .iter()
                .map(|w| edges.iter().zip(&g).map(|(&e, g)| g * w[e]).sum())
                .collect()
        })
        .collect();
    let data = (0..potentials.len())
        .map(|i| per_center.iter().map(|v| v[i]).collect())
        .collect();
    Ok(MeasurementSet {
        grid: *coarse,
        data,
        provenance: Provenance::Deterministic { a },
    })
}

/// Random current densities on the fine edges.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomCurrentRealization {
    pub j: Vec<f64>,
}

/// Per-edge noise and current factors for one conductivity on one grid.
pub struct CurrentModel<'a> {
    ops: &'a GridOperators,
    params: ExperimentParams,
    scaling: NoiseScaling,
    constants: PhysicalConstants,
    /// Variance of `j_e` per kelvin.
    unit_variance: Vec<f64>,
    /// `q_e` times the unit factor turning `sum q D u j` into an electrode current.
    current_factor: Vec<f64>,
}

impl<'a> CurrentModel<'a> {
    pub fn new(
        sigma: &ConductivityField,
        ops: &'a GridOperators,
        params: ExperimentParams,
        scaling: NoiseScaling,
        constants: PhysicalConstants,
    ) -> Result<Self> {
        params.validate()?;
        if sigma.grid() != &ops.grid {
            return Err(Error::DimensionMismatch(
                "conductivity is not on the current grid".into(),
            ));
        }
        let s = ops.e12.apply(sigma.sigma_re());
        let q = ops.grid.edge_quadrature_weights();
        let k = constants.kappa / std::f64::consts::PI;
        let (unit_variance, current_factor) = match scaling {
            NoiseScaling::Physical => {
                // Grid lengths in cm, conductivity in cm^-1 kOhm^-1.
                let dz = params.delta_z * CM;
                let var = s
                    .iter()
                    .zip(&q)
                    .map(|(s, q)| {
                        k * s * CONDUCTIVITY_TO_SI * params.delta_omega / (q * CM * CM * dz)
                    })
                    .collect();
                // (D u / CM) * (q CM^2) * dz
                let fac = q.iter().map(|q| q * CM * dz).collect();
                (var, fac)
            }
            NoiseScaling::Dimensionless => (s.iter().map(|s| k * s).collect(), q),
        };
        Ok(Self {
            ops,
            params,
            scaling,
            constants,
            unit_variance,
            current_factor,
        })
    }

    pub fn params(&self) -> &ExperimentParams {
        &self.params
    }

    pub fn scaling(&self) -> NoiseScaling {
        self.scaling
    }

    pub fn unit_variance(&self) -> &[f64] {
        &self.unit_variance
    }

    /// Divisor mapping a differential mean `|J|^2` back to `H` units
    /// (`cm^-3 kOhm^-1`).
    pub fn normalization(&self) -> f64 {
        let k = self.constants.kappa / std::f64::consts::PI;
        match self.scaling {
            NoiseScaling::Physical => {
                k * self.params.delta_omega * self.params.delta_z * CM * CONDUCTIVITY_TO_SI
            }
            NoiseScaling::Dimensionless => k * self.ops.grid.dx() * self.ops.grid.dy(),
        }
    }

    /// Draws one realisation; `stream` selects an independent substream.
    pub fn sample(
        &self,
        temperature: &[f64],
        seed: u64,
        stream: u64,
    ) -> Result<RandomCurrentRealization> {
        if temperature.len() != self.unit_variance.len() {
            return Err(Error::DimensionMismatch(
                "temperature must be edge-indexed".into(),
            ));
        }
        if let Some(t) = temperature.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "temperature {t} must be positive"
            )));
        }
        let mut rng = rng_for(seed, stream);
        let j = temperature
            .iter()
            .zip(&self.unit_variance)
            .map(|(t, v)| (t * v).sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(RandomCurrentRealization { j })
    }

    /// `J = -sum_e c_e (D u)_e j_e`, the discrete analogue of
    /// `-int grad u . j_e`.
    pub fn electrode_current<T: Scalar>(
        &self,
        u: &[T],
        realization: &RandomCurrentRealization,
    ) -> Result<T> {
        if u.len() != self.ops.grid.num_nodes() || realization.j.len() != self.current_factor.len()
        {
            return Err(Error::DimensionMismatch(
                "potential or realisation is not on the current grid".into(),
            ));
        }
        let du = self.ops.d.apply(u);
        let mut acc = T::default();
        for ((d, c), j) in du.iter().zip(&self.current_factor).zip(&realization.j) {
            acc += *d * (c * j);
        }
        Ok(-acc)
    }

    /// Electrode current through the source problem: solve for the potential
    /// `phi` generated by `j_e` with grounded electrodes and read off the
    /// boundary flux weighted by the electrode function. Slow; used to check
    /// [`CurrentModel::electrode_current`].
    pub fn electrode_current_direct(
        &self,
        solver: &LaplaceSolver,
        sigma: &ConductivityField,
        u: &PotentialField,
        realization: &RandomCurrentRealization,
    ) -> Result<Complex64> {
        let grid = self.ops.grid;
        let beta_j: Vec<Complex64> = (0..grid.num_edges())
            .map(|e| {
                let beta = if grid.is_tangential_boundary_edge(e) {
                    0.5
                } else {
                    1.0
                };
                Complex64::new(beta * realization.j[e], 0.0)
            })
            .collect();
        let src = self.ops.d.apply_transpose(&beta_j);
        let phi = solver.solve_source(&src)?;
        let flux = crate::forward::flux_operator(&grid, &sigma.edge_values(self.ops)).apply(&phi);
        let cell = grid.dx() * grid.dy();
        let unit = self.current_factor[0] / grid.edge_quadrature_weights()[0];
        let mut acc = Complex64::default();
        for &k in &solver.partition().electrodes {
            acc += u.u[k] * (flux[k] - src[k]) * cell;
        }
        Ok(acc * unit)
    }

    /// Per-edge `c_e (D u_i)_e` stacked as real vectors of length `dim`:
    /// `n` for real potentials, `2n` (real and imaginary parts) otherwise.
    fn edge_vectors(&self, potentials: &[PotentialField]) -> (usize, Vec<f64>) {
        let complex = potentials.iter().any(|p| p.u.iter().any(|z| z.im != 0.0));
        let dim = if complex {
            2 * potentials.len()
        } else {
            potentials.len()
        };
        let ne = self.current_factor.len();
        let mut v = vec![0.0; ne * dim];
        for (i, p) in potentials.iter().enumerate() {
            let du = self.ops.d.apply(&p.u);
            for e in 0..ne {
                let c = -self.current_factor[e];
                if complex {
                    v[e * dim + 2 * i] = c * du[e].re;
                    v[e * dim + 2 * i + 1] = c * du[e].im;
                } else {
                    v[e * dim + i] = c * du[e].re;
                }
            }
        }
        (dim, v)
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Substream of realisation `k` heated at centre `c`; centre `None` is the
/// background.
fn stream_id(center: Option<usize>, k: usize) -> u64 {
    let c = center.map_or(0, |c| c as u64 + 1);
    (c << 32) | k as u64
}

/// Empirical `<J_i conj(J_j)>` over `m` per-edge realisations at the given
/// edge temperatures.
pub fn empirical_covariance(
    model: &CurrentModel,
    potentials: &[PotentialField],
    temperature: &[f64],
    m: usize,
    seed: u64,
) -> Result<Vec<Vec<Complex64>>> {
    let n = potentials.len();
    let mut acc = vec![vec![Complex64::default(); n]; n];
    for k in 0..m {
        let r = model.sample(temperature, seed, stream_id(None, k))?;
        let j: Vec<Complex64> = potentials
            .iter()
            .map(|p| model.electrode_current(&p.u, &r))
            .collect::<Result<_>>()?;
        for a in 0..n {
            for b in 0..n {
                acc[a][b] += j[a] * j[b].conj();
            }
        }
    }
    let inv = 1.0 / m as f64;
    Ok(acc
        .into_iter()
        .map(|row| row.into_iter().map(|z| z * inv).collect())
        .collect())
}

/// Lower factor `L` with `L L^T = c` for a symmetric positive semidefinite
/// `dim x dim` matrix; near-zero pivots drop their column.
fn psd_factor(c: &[f64], dim: usize) -> Vec<f64> {
    let scale = (0..dim).map(|i| c[i * dim + i]).fold(0.0, f64::max);
    let tol = 1e-13 * scale;
    let mut l = vec![0.0; dim * dim];
    for j in 0..dim {
        let mut d = c[j * dim + j];
        for k in 0..j {
            d -= l[j * dim + k] * l[j * dim + k];
        }
        if d <= tol {
            continue;
        }
        let d = d.sqrt();
        l[j * dim + j] = d;
        for i in j + 1..dim {
            let mut s = c[i * dim + j];
            for k in 0..j {
                s -= l[i * dim + k] * l[j * dim + k];
            }
            l[i * dim + j] = s / d;
        }
    }
    l
}

/// Mean of `|J_i|^2` from a realisation vector `x` of length `dim`.
fn add_squares(x: &[f64], complex: bool, acc: &mut [f64]) {
    if complex {
        for (i, a) in acc.iter_mut().enumerate() {
            *a += x[2 * i] * x[2 * i] + x[2 * i + 1] * x[2 * i + 1];
        }
    } else {
        for (a, v) in acc.iter_mut().zip(x) {
            *a += v * v;
        }
    }
}

/// Differential stochastic measurements: for each coarse node `x`, the mean
/// of `|J_i|^2` over `M` realisations heated at `x`, minus the mean over `M`
/// background realisations drawn once for all centres, divided by
/// [`CurrentModel::normalization`].
#[allow(clippy::too_many_arguments)]
pub fn stochastic_measure(
    sigma: &ConductivityField,
    potentials: &[PotentialField],
    coarse: &GridSpec,
    a: f64,
    params: ExperimentParams,
    scaling: NoiseScaling,
    seed: u64,
    fine_ops: &GridOperators,
) -> Result<MeasurementSet> {
    check_fine(sigma, potentials, fine_ops)?;
    if params.realizations < 2 {
        return Err(Error::InvalidParameter(
            "stochastic measurements need at least 2 realizations".into(),
        ));
    }
    HeatingPattern::new((0.0, 0.0), a)?;
    check_sampling(&fine_ops.grid, a)?;
    let model = CurrentModel::new(
        sigma,
        fine_ops,
        params,
        scaling,
        PhysicalConstants::default(),
    )?;
    let fine = fine_ops.grid;
    let m = params.realizations;
    let n_exp = potentials.len();
    let (dim, v) = model.edge_vectors(potentials);
    let complex = dim != n_exp;
    let ne = fine.num_edges();

    // Background: full per-edge draws, shared by all centres.
    let t_bg = vec![params.t0; ne];
    let mut bg = vec![0.0; n_exp];
    let mut x = vec![0.0; dim];
    for k in 0..m {
        let r = model.sample(&t_bg, seed, stream_id(None, k))?;
        x.iter_mut().for_each(|x| *x = 0.0);
        for (e, j) in r.j.iter().enumerate() {
            for (xd, vd) in x.iter_mut().zip(&v[e * dim..(e + 1) * dim]) {
                *xd += vd * j;
            }
        }
        add_squares(&x, complex, &mut bg);
    }
    bg.iter_mut().for_each(|b| *b /= m as f64);

    // Covariance of all edges at background temperature.
    let mut c_bg = vec![0.0; dim * dim];
    for e in 0..ne {
        let w = params.t0 * model.unit_variance[e];
        let ve = &v[e * dim..(e + 1) * dim];
        for p in 0..dim {
            for q in 0..dim {
                c_bg[p * dim + q] += w * ve[p] * ve[q];
            }
        }
    }

    let norm = model.normalization();
    let centers = coarse.node_coords();
    let per_center: Vec<Vec<f64>> = centers
        .par_iter()
        .enumerate()
        .map(|(ci, &c)| {
            let pat = HeatingPattern { center: c, a };
            let g_at = |e: usize| {
                let (x, y) = fine.edge_midpoint(e);
                pat.eval(x, y)
            };
            let near = edges_within(&fine, c, pat.radius_sq(NEAR_FRACTION));
            let tail = edges_within(&fine, c, pat.radius_sq(PATTERN_CUTOFF));
            // Far covariance: background minus the near edges' background
            // share, plus the heating on far edges inside the pattern tail.
            let mut c_far = c_bg.clone();
            let mut add = |e: usize, w: f64| {
                let ve = &v[e * dim..(e + 1) * dim];
                for p in 0..dim {
                    for q in 0..dim {
                        c_far[p * dim + q] += w * ve[p] * ve[q];
                    }
                }
            };
            for &e in &near {
                add(e, -params.t0 * model.unit_variance[e]);
            }
            for &e in tail.iter().filter(|e| near.binary_search(e).is_err()) {
                add(e, g_at(e) * model.unit_variance[e]);
            }
            let l = psd_factor(&c_far, dim);
            let sd: Vec<f64> = near
                .iter()
                .map(|&e| ((params.t0 + g_at(e)) * model.unit_variance[e]).sqrt())
                .collect();

            let mut heated = vec![0.0; n_exp];
            let mut x = vec![0.0; dim];
            let mut z = vec![0.0; dim];
            for k in 0..m {
                let mut rng = rng_for(seed, stream_id(Some(ci), k));
                x.iter_mut().for_each(|x| *x = 0.0);
                for (&e, s) in near.iter().zip(&sd) {
                    let j = s * rng.sample::<f64, _>(StandardNormal);
                    for (xd, vd) in x.iter_mut().zip(&v[e * dim..(e + 1) * dim]) {
                        *xd += vd * j;
                    }
                }
                for zd in z.iter_mut() {
                    *zd = rng.sample(StandardNormal);
                }
                for p in 0..dim {
                    for q in 0..=p {
                        x[p] += l[p * dim + q] * z[q];
                    }
                }
                add_squares(&x, complex, &mut heated);
            }
            heated
                .iter()
                .zip(&bg)
                .map(|(h, b)| (h / m as f64 - b) / norm)
                .collect()
        })
        .collect();

    let data = (0..n_exp)
        .map(|i| per_center.iter().map(|v| v[i]).collect())
        .collect();
    Ok(MeasurementSet {
        grid: *coarse,
        data,
        provenance: Provenance::Stochastic {
            a,
            params,
            scaling,
            seed,
        },
    })
}

/// Order-of-magnitude current variances in A^2.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct NoiseMagnitude {
    pub background: f64,
    pub differential: f64,
    pub snr: f64,
}

/// Inputs to [`noise_magnitude`], all SI.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseScenario {
    /// K.
    pub t0: f64,
    /// K.
    pub delta_t: f64,
    /// rad/s.
    pub delta_omega: f64,
    /// m.
    pub delta_z: f64,
    /// S/m.
    pub sigma: f64,
    /// m^-2.
    pub grad_sq: f64,
    /// m^2.
    pub area: f64,
    /// m^2.
    pub heated_area: f64,
}

/// `(kappa/pi) T sigma' |grad u|^2 area Delta-z Delta-omega` for the
/// background and the heated spot.
pub fn noise_magnitude(s: &NoiseScenario, constants: &PhysicalConstants) -> NoiseMagnitude {
    let common =
        constants.kappa / std::f64::consts::PI * s.sigma * s.grad_sq * s.delta_z * s.delta_omega;
    let background = common * s.t0 * s.area;
    let differential = common * s.delta_t * s.heated_area;
    NoiseMagnitude {
        background,
        differential,
        snr: if background > 0.0 {
            differential / background
        } else {
            0.0
        },
    }
}

/// Mean energy of a quantum oscillator, `(hbar w / 2) coth(hbar w / 2 kappa T)`.
pub fn planck_correction(t: f64, omega: f64, constants: &PhysicalConstants) -> Result<f64> {
    if !(t > 0.0 && omega > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "T={t} and omega={omega} must be positive"
        )));
    }
    let half = 0.5 * constants.hbar * omega;
    Ok(half / (half / (constants.kappa * t)).tanh())
}

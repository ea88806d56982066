//! Gauss-Newton reconstruction of `sigma` from internal-functional data.
//!
//! Unknowns are the conductivity values off the known boundary band and the
//! potentials of every experiment at every node. Residual blocks per
//! experiment, real case:
//!
//! ```text
//! D^T [beta E12 s (.) D u_i]   on the equation rows
//! u_i - e_i                    on the electrodes
//! H_ii - [N1 (E1 s (.) |D1 u_i|^2) + N2 (E2 s (.) |D2 u_i|^2)]   on I
//! ```
//!
//! The complex case splits the conductivity equation into real and imaginary
//! parts and uses `s' (|D u'|^2 + |D u''|^2)` as the model of `H`.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forward::{
    equation_rows, flux_edge_factors, flux_operator, BoundarySpec, ConductivityField, LaplaceSolver,
};
use crate::grid::{BoundaryPartition, GridOperators, GridSpec};
use crate::measure::MeasurementSet;
use crate::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReconstructionKind {
    Real,
    Complex,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ArmijoParams {
    /// Sufficient-decrease slope.
    pub c: f64,
    /// Backtracking ratio.
    pub beta: f64,
    pub max_backtracks: usize,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        Self {
            c: 1e-4,
            beta: 0.5,
            max_backtracks: 30,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReconstructionConfig {
    pub kind: ReconstructionKind,
    /// Tikhonov weight on the Gauss-Newton step.
    pub gamma: f64,
    pub step_tol: f64,
    pub max_iters: usize,
    /// Width (cm) of the boundary band where `sigma` is known.
    pub boundary_band: f64,
    pub armijo: ArmijoParams,
}

/// `5^-4`.
pub const GAMMA_REAL: f64 = 1.6e-3;
/// `3^-3`.
pub const GAMMA_MIXED: f64 = 3.7e-2;
/// `1^-4`.
pub const GAMMA_COMPLEX: f64 = 1.0;

impl ReconstructionConfig {
    pub fn real() -> Self {
        Self {
            kind: ReconstructionKind::Real,
            gamma: GAMMA_REAL,
            step_tol: 0.1,
            max_iters: 100,
            boundary_band: 0.5,
            armijo: ArmijoParams::default(),
        }
    }

    pub fn mixed() -> Self {
        Self {
            gamma: GAMMA_MIXED,
            ..Self::real()
        }
    }

    pub fn complex() -> Self {
        Self {
            kind: ReconstructionKind::Complex,
            gamma: GAMMA_COMPLEX,
            ..Self::real()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma={} must be non-negative",
                self.gamma
            )));
        }
        if !(self.step_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "step_tol={} must be positive",
                self.step_tol
            )));
        }
        if !(self.armijo.beta > 0.0 && self.armijo.beta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "armijo beta={} must lie in (0, 1)",
                self.armijo.beta
            )));
        }
        if !(self.armijo.c > 0.0 && self.armijo.c < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "armijo c={} must lie in (0, 1)",
                self.armijo.c
            )));
        }
        if !(self.boundary_band >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "boundary band {} must be non-negative",
                self.boundary_band
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub residual_norm: f64,
    pub step_norm: f64,
    pub backtracks: usize,
}

/// Current iterate. `s_im` and `u_im` are all zero in the real case.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionState {
    pub s_re: Vec<f64>,
    pub s_im: Vec<f64>,
    pub u_re: Vec<Vec<f64>>,
    pub u_im: Vec<Vec<f64>>,
    pub log: Vec<IterationRecord>,
    pub converged: bool,
}

impl ReconstructionState {
    /// Iterations that took a step.
    pub fn iterations(&self) -> usize {
        self.log.len().saturating_sub(1)
    }

    pub fn conductivity(&self, grid: GridSpec) -> Result<ConductivityField> {
        ConductivityField::new(grid, self.s_re.clone(), self.s_im.clone())
    }
}

/// Data, electrode layout and known boundary band of one reconstruction.
pub struct InverseProblem {
    ops: GridOperators,
    kind: ReconstructionKind,
    partition: BoundaryPartition,
    electrode_values: Vec<Vec<Complex64>>,
    data: Vec<Vec<f64>>,
    known_re: Vec<f64>,
    known_im: Vec<f64>,
    band: Vec<bool>,
    free_s: Vec<usize>,
    eq_rows: Vec<usize>,
    interior: Vec<usize>,
    beta: Vec<f64>,
}

impl InverseProblem {
    /// `known` holds the true conductivity on the coarse nodes; only its
    /// band entries are used.
    pub fn new(
        ops: GridOperators,
        kind: ReconstructionKind,
        bcs: &[BoundarySpec],
        data: &MeasurementSet,
        known: &ConductivityField,
        boundary_band: f64,
    ) -> Result<Self> {
        let grid = ops.grid;
        if data.grid != grid || known.grid() != &grid {
            return Err(Error::DimensionMismatch(
                "data, known values and operators use different grids".into(),
            ));
        }
        if bcs.is_empty() || bcs.len() != data.num_experiments() {
            return Err(Error::DimensionMismatch(format!(
                "{} boundary conditions for {} experiments",
                bcs.len(),
                data.num_experiments()
            )));
        }
        let partition = bcs[0].partition.clone();
        if bcs.iter().any(|b| b.partition != partition) {
            return Err(Error::InvalidBoundary(
                "experiments must share one electrode layout".into(),
            ));
        }
        if partition.electrodes.is_empty() {
            return Err(Error::FloatingPotential);
        }
        if let Some(d) = data.data.iter().find(|d| d.len() != grid.num_nodes()) {
            return Err(Error::DimensionMismatch(format!(
                "data has {} values for {} nodes",
                d.len(),
                grid.num_nodes()
            )));
        }
        let electrode_values = bcs.iter().map(|b| b.values.clone()).collect();
        let mut band = grid.band_mask(boundary_band);
        for k in grid.boundary_nodes() {
            band[k] = true;
        }
        let free_s = (0..grid.num_nodes()).filter(|&k| !band[k]).collect();
        let eq_rows = equation_rows(&grid, &partition);
        let interior = grid.interior_nodes();
        let beta = flux_edge_factors(&grid);
        Ok(Self {
            ops,
            kind,
            partition,
            electrode_values,
            data: data.data.clone(),
            known_re: known.sigma_re().to_vec(),
            known_im: known.sigma_im().to_vec(),
            band,
            free_s,
            eq_rows,
            interior,
            beta,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.ops.grid
    }

    pub fn ops(&self) -> &GridOperators {
        &self.ops
    }

    pub fn kind(&self) -> ReconstructionKind {
        self.kind
    }

    pub fn band(&self) -> &[bool] {
        &self.band
    }

    pub fn num_experiments(&self) -> usize {
        self.data.len()
    }

    fn complex(&self) -> bool {
        self.kind == ReconstructionKind::Complex
    }

    /// Mean of the known band values.
    pub fn band_mean(&self) -> Complex64 {
        let k: Vec<usize> = (0..self.band.len()).filter(|&k| self.band[k]).collect();
        let n = k.len() as f64;
        Complex64::new(
            k.iter().map(|&i| self.known_re[i]).sum::<f64>() / n,
            k.iter().map(|&i| self.known_im[i]).sum::<f64>() / n,
        )
    }

    pub fn num_unknowns(&self) -> usize {
        let ns = self.free_s.len();
        let nn = self.grid().num_nodes();
        let m = self.num_experiments();
        if self.complex() {
            2 * ns + 2 * m * nn
        } else {
            ns + m * nn
        }
    }

    pub fn pack(&self, st: &ReconstructionState) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.num_unknowns());
        x.extend(self.free_s.iter().map(|&k| st.s_re[k]));
        if self.complex() {
            x.extend(self.free_s.iter().map(|&k| st.s_im[k]));
        }
        for i in 0..self.num_experiments() {
            x.extend_from_slice(&st.u_re[i]);
            if self.complex() {
                x.extend_from_slice(&st.u_im[i]);
            }
        }
        x
    }

    pub fn unpack(&self, x: &[f64], template: &ReconstructionState) -> ReconstructionState {
        let mut st = template.clone();
        let ns = self.free_s.len();
        let nn = self.grid().num_nodes();
        for (j, &k) in self.free_s.iter().enumerate() {
            st.s_re[k] = x[j];
        }
        let mut off = ns;
        if self.complex() {
            for (j, &k) in self.free_s.iter().enumerate() {
                st.s_im[k] = x[ns + j];
            }
            off += ns;
        }
        for i in 0..self.num_experiments() {
            st.u_re[i].copy_from_slice(&x[off..off + nn]);
            off += nn;
            if self.complex() {
                st.u_im[i].copy_from_slice(&x[off..off + nn]);
                off += nn;
            }
        }
        st
    }

    /// Potentials solved under a constant conductivity `sigma0` off the band.
    pub fn initial_guess(&self, sigma0: Complex64) -> Result<ReconstructionState> {
        if !(sigma0.re > 0.0) || (!self.complex() && sigma0.im != 0.0) {
            return Err(Error::InvalidConductivity(format!(
                "initial conductivity {sigma0} is not admissible"
            )));
        }
        let grid = *self.grid();
        let mut s_re = self.known_re.clone();
        let mut s_im = if self.complex() {
            self.known_im.clone()
        } else {
            vec![0.0; grid.num_nodes()]
        };
        for &k in &self.free_s {
            s_re[k] = sigma0.re;
            s_im[k] = sigma0.im;
        }
        let sigma = ConductivityField::new(grid, s_re.clone(), s_im.clone())?;
        let solver = LaplaceSolver::new(&sigma, &self.ops, &self.partition)?;
        let bcs: Vec<BoundarySpec> = self
            .electrode_values
            .iter()
            .map(|v| BoundarySpec::new(&grid, self.partition.clone(), v.clone()))
            .collect::<Result<_>>()?;
        let u = solver.solve_many(&bcs)?;
        Ok(ReconstructionState {
            s_re,
            s_im,
            u_re: u.iter().map(|p| p.real_part()).collect(),
            u_im: u
                .iter()
                .map(|p| {
                    if self.complex() {
                        p.imag_part()
                    } else {
                        vec![0.0; grid.num_nodes()]
                    }
                })
                .collect(),
            log: Vec::new(),
            converged: false,
        })
    }

    /// `[D^T (beta (.) w (.) D u)]` on the equation rows.
    fn flux_rows(&self, w: &[f64], u: &[f64]) -> Vec<f64> {
        let du = self.ops.d.apply(u);
        let f: Vec<f64> = du
            .iter()
            .zip(w)
            .zip(&self.beta)
            .map(|((d, w), b)| b * w * d)
            .collect();
        let full = self.ops.d.apply_transpose(&f);
        self.eq_rows.iter().map(|&k| full[k]).collect()
    }

    fn model_h(&self, s: &[f64], u_re: &[f64], u_im: Option<&[f64]>) -> Vec<f64> {
        let part = |d: &CsrMatrix, e: &CsrMatrix, n: &CsrMatrix| {
            let se = e.apply(s);
            let dr = d.apply(u_re);
            let di = u_im.map(|u| d.apply(u));
            let w: Vec<f64> = (0..se.len())
                .map(|k| se[k] * (dr[k] * dr[k] + di.as_ref().map_or(0.0, |di| di[k] * di[k])))
                .collect();
            n.apply(&w)
        };
        let h1 = part(&self.ops.d1, &self.ops.e1, &self.ops.n1);
        let h2 = part(&self.ops.d2, &self.ops.e2, &self.ops.n2);
        h1.iter().zip(&h2).map(|(a, b)| a + b).collect()
    }

    /// Stacked residual for either kind.
    pub fn residual(&self, st: &ReconstructionState) -> Vec<f64> {
        let es_re = self.ops.e12.apply(&st.s_re);
        let es_im = self.ops.e12.apply(&st.s_im);
        let mut r = Vec::new();
        for i in 0..self.num_experiments() {
            let (ur, ui) = (&st.u_re[i], &st.u_im[i]);
            let e = &self.electrode_values[i];
            if self.complex() {
                let a = self.flux_rows(&es_re, ur);
                let b = self.flux_rows(&es_im, ui);
                r.extend(a.iter().zip(&b).map(|(a, b)| a - b));
                let a = self.flux_rows(&es_re, ui);
                let b = self.flux_rows(&es_im, ur);
                r.extend(a.iter().zip(&b).map(|(a, b)| a + b));
                r.extend(self.partition.electrodes.iter().map(|&k| ur[k] - e[k].re));
                r.extend(self.partition.electrodes.iter().map(|&k| ui[k] - e[k].im));
                let h = self.model_h(&st.s_re, ur, Some(ui));
                r.extend(self.interior.iter().map(|&k| self.data[i][k] - h[k]));
            } else {
                r.extend(self.flux_rows(&es_re, ur));
                r.extend(self.partition.electrodes.iter().map(|&k| ur[k] - e[k].re));
                let h = self.model_h(&st.s_re, ur, None);
                r.extend(self.interior.iter().map(|&k| self.data[i][k] - h[k]));
            }
        }
        r
    }

    /// `D^T Diag(beta (.) D u) E12`, rows = equation rows, columns = free s.
    fn flux_wrt_s(&self, u: &[f64]) -> CsrMatrix {
        let du = self.ops.d.apply(u);
        let w: Vec<f64> = du.iter().zip(&self.beta).map(|(d, b)| d * b).collect();
        self.ops
            .d
            .transpose()
            .scale_cols(&w)
            .matmul(&self.ops.e12)
            .select_rows(&self.eq_rows)
            .select_cols(&self.free_s)
    }

    /// `N1 Diag(v1) M1 + N2 Diag(v2) M2` restricted to the interior rows.
    fn interp_pair(&self, v1: &[f64], m1: &CsrMatrix, v2: &[f64], m2: &CsrMatrix) -> CsrMatrix {
        let a = self.ops.n1.scale_cols(v1).matmul(m1);
        let b = self.ops.n2.scale_cols(v2).matmul(m2);
        a.add(&b).select_rows(&self.interior)
    }

    /// Derivative of the modelled `H` in `s` (columns = free s).
    fn h_wrt_s(&self, ur: &[f64], ui: Option<&[f64]>) -> CsrMatrix {
        let sq = |d: &CsrMatrix| {
            let a = d.apply(ur);
            let b = ui.map(|u| d.apply(u));
            (0..a.len())
                .map(|k| a[k] * a[k] + b.as_ref().map_or(0.0, |b| b[k] * b[k]))
                .collect::<Vec<f64>>()
        };
        self.interp_pair(
            &sq(&self.ops.d1),
            &self.ops.e1,
            &sq(&self.ops.d2),
            &self.ops.e2,
        )
        .select_cols(&self.free_s)
    }

    /// Derivative of the modelled `H` in one potential component.
    fn h_wrt_u(&self, s: &[f64], u: &[f64]) -> CsrMatrix {
        let v = |d: &CsrMatrix, e: &CsrMatrix| {
            let se = e.apply(s);
            let du = d.apply(u);
            se.iter()
                .zip(&du)
                .map(|(s, d)| 2.0 * s * d)
                .collect::<Vec<f64>>()
        };
        self.interp_pair(
            &v(&self.ops.d1, &self.ops.e1),
            &self.ops.d1,
            &v(&self.ops.d2, &self.ops.e2),
            &self.ops.d2,
        )
    }

    /// Exact sparse Jacobian of [`InverseProblem::residual`].
    pub fn jacobian(&self, st: &ReconstructionState) -> CsrMatrix {
        let grid = self.grid();
        let nn = grid.num_nodes();
        let ns = self.free_s.len();
        let l_re = flux_operator(grid, &self.ops.e12.apply(&st.s_re)).select_rows(&self.eq_rows);
        let l_im = if self.complex() {
            Some(flux_operator(grid, &self.ops.e12.apply(&st.s_im)).select_rows(&self.eq_rows))
        } else {
            None
        };
        let electrode_rows: Vec<(usize, usize, f64)> = self
            .partition
            .electrodes
            .iter()
            .enumerate()
            .map(|(r, &k)| (r, k, 1.0))
            .collect();
        let bnd = CsrMatrix::from_triplets(self.partition.electrodes.len(), nn, &electrode_rows);

        let mut t = Vec::new();
        let mut row = 0;
        let push =
            |t: &mut Vec<(usize, usize, f64)>, m: &CsrMatrix, r0: usize, c0: usize, sign: f64| {
                t.extend(m.iter().map(|(r, c, v)| (r0 + r, c0 + c, sign * v)));
            };
        let neq = self.eq_rows.len();
        let nb = self.partition.electrodes.len();
        let ni = self.interior.len();
        for i in 0..self.num_experiments() {
            let (ur, ui) = (&st.u_re[i], &st.u_im[i]);
            if let Some(l_im) = &l_im {
                let c_re = 2 * ns + 2 * i * nn;
                let c_im = c_re + nn;
                // Real part of the conductivity equation.
                push(&mut t, &l_re, row, c_re, 1.0);
                push(&mut t, l_im, row, c_im, -1.0);
                push(&mut t, &self.flux_wrt_s(ur), row, 0, 1.0);
                push(&mut t, &self.flux_wrt_s(ui), row, ns, -1.0);
                row += neq;
                // Imaginary part.
                push(&mut t, l_im, row, c_re, 1.0);
                push(&mut t, &l_re, row, c_im, 1.0);
                push(&mut t, &self.flux_wrt_s(ui), row, 0, 1.0);
                push(&mut t, &self.flux_wrt_s(ur), row, ns, 1.0);
                row += neq;
                push(&mut t, &bnd, row, c_re, 1.0);
                row += nb;
                push(&mut t, &bnd, row, c_im, 1.0);
                row += nb;
                push(&mut t, &self.h_wrt_s(ur, Some(ui)), row, 0, -1.0);
                push(&mut t, &self.h_wrt_u(&st.s_re, ur), row, c_re, -1.0);
                push(&mut t, &self.h_wrt_u(&st.s_re, ui), row, c_im, -1.0);
                row += ni;
            } else {
                let c_u = ns + i * nn;
                push(&mut t, &l_re, row, c_u, 1.0);
                push(&mut t, &self.flux_wrt_s(ur), row, 0, 1.0);
                row += neq;
                push(&mut t, &bnd, row, c_u, 1.0);
                row += nb;
                push(&mut t, &self.h_wrt_s(ur, None), row, 0, -1.0);
                push(&mut t, &self.h_wrt_u(&st.s_re, ur), row, c_u, -1.0);
                row += ni;
            }
        }
        CsrMatrix::from_triplets(row, self.num_unknowns(), &t)
    }

    /// `w = -(J^T J + gamma I)^{-1} J^T r`.
    fn step(&self, j: &CsrMatrix, r: &[f64], gamma: f64) -> Result<Vec<f64>> {
        let jt = j.transpose();
        let mut a = jt.matmul(j);
        let n = a.nrows();
        // Tiny floor so that gamma = 0 still factorises despite the
        // checkerboard null space of the interpolators.
        let trace: f64 = (0..n).map(|k| a.get(k, k)).sum();
        let g = gamma.max(1e-14 * trace / n as f64);
        a = a.add(&CsrMatrix::identity(n).scale(g));
        let g_vec = jt.apply(r);
        let llt = a
            .to_faer()?
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Solver(format!("Cholesky of normal equations: {e:?}")))?;
        let mut x = Mat::<f64>::from_fn(n, 1, |i, _| -g_vec[i]);
        llt.solve_in_place(x.as_mut());
        Ok((0..n).map(|i| x[(i, 0)]).collect())
    }

    /// Regularised Gauss-Newton with Armijo backtracking on `|r|^2`.
    pub fn gauss_newton(
        &self,
        initial: ReconstructionState,
        config: &ReconstructionConfig,
    ) -> Result<ReconstructionState> {
        config.validate()?;
        if config.kind != self.kind {
            return Err(Error::InvalidParameter(
                "configuration kind differs from the problem kind".into(),
            ));
        }
        let ns = self.free_s.len();
        let mut st = initial;
        st.log.clear();
        st.converged = false;
        let mut x = self.pack(&st);
        if x[..ns].iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidConductivity(
                "initial sigma' must be positive".into(),
            ));
        }
        let mut r = self.residual(&st);
        let mut phi = norm_sq(&r);
        for iter in 0..=config.max_iters {
            let j = self.jacobian(&st);
            let w = self.step(&j, &r, config.gamma)?;
            let wn = norm_sq(&w).sqrt();
            if wn < config.step_tol {
                st.log.push(IterationRecord {
                    iter,
                    residual_norm: phi.sqrt(),
                    step_norm: wn,
                    backtracks: 0,
                });
                st.converged = true;
                break;
            }
            if iter == config.max_iters {
                st.log.push(IterationRecord {
                    iter,
                    residual_norm: phi.sqrt(),
                    step_norm: wn,
                    backtracks: 0,
                });
                break;
            }
            let slope = 2.0 * dot(&j.apply(&w), &r);
            let mut alpha = 1.0;
            let mut backtracks = 0;
            loop {
                let trial: Vec<f64> = x.iter().zip(&w).map(|(x, w)| x + alpha * w).collect();
                let feasible = trial[..ns].iter().all(|&v| v > 0.0);
                if feasible {
                    let cand = self.unpack(&trial, &st);
                    let rc = self.residual(&cand);
                    let pc = norm_sq(&rc);
                    if pc <= phi + config.armijo.c * alpha * slope {
                        x = trial;
                        st = cand;
                        r = rc;
                        phi = pc;
                        break;
                    }
                }
                if backtracks == config.armijo.max_backtracks {
                    return Err(Error::LineSearch {
                        iteration: iter,
                        backtracks,
                        residual: phi.sqrt(),
                    });
                }
                alpha *= config.armijo.beta;
                backtracks += 1;
            }
            st.log.push(IterationRecord {
                iter,
                residual_norm: phi.sqrt(),
                step_norm: wn,
                backtracks,
            });
        }
        Ok(st)
    }
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// Average of fine-grid values over the fine nodes within half a coarse
/// cell of each coarse node.
pub fn restrict(fine: &GridSpec, values: &[f64], coarse: &GridSpec) -> Vec<f64> {
    let half = 0.5 * coarse.dx() + 1e-12 * coarse.extent();
    let h = fine.dx();
    let n = fine.n();
    coarse
        .node_coords()
        .iter()
        .map(|&(x, y)| {
            let range = |c: f64| {
                let lo = ((c - half) / h).ceil().max(0.0) as usize;
                let hi = (((c + half) / h).floor() as usize).min(n - 1);
                lo..=hi
            };
            let (mut sum, mut count) = (0.0, 0usize);
            for j in range(y) {
                for i in range(x) {
                    sum += values[fine.node(i, j)];
                    count += 1;
                }
            }
            sum / count as f64
        })
        .collect()
}

/// `|a - b| / |b|` over the listed nodes.
pub fn relative_l2_error(a: &[f64], b: &[f64], nodes: &[usize]) -> f64 {
    let num: f64 = nodes.iter().map(|&k| (a[k] - b[k]).powi(2)).sum();
    let den: f64 = nodes.iter().map(|&k| b[k] * b[k]).sum();
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{solve_many, ElectrodeFunction};
    use crate::measure::Provenance;

    struct Setup {
        problem: InverseProblem,
        truth: ReconstructionState,
        sigma: ConductivityField,
    }

    fn sigma_field(g: &GridSpec, complex: bool) -> ConductivityField {
        let re = g
            .node_coords()
            .iter()
            .map(|&(x, y)| 1.0 + 0.5 * (-((x - 4.0).powi(2) + (y - 6.0).powi(2)) / 3.0).exp())
            .collect();
        let im = g
            .node_coords()
            .iter()
            .map(|&(x, y)| {
                if complex {
                    0.5 + 0.3 * (-((x - 6.0).powi(2) + (y - 5.0).powi(2)) / 2.0).exp()
                } else {
                    0.0
                }
            })
            .collect();
        ConductivityField::new(*g, re, im).unwrap()
    }

    /// Data from the coarse model itself, so the truth is an exact zero of
    /// the residual.
    fn setup(n: usize, kind: ReconstructionKind, gaps: bool) -> Setup {
        let g = GridSpec::new(n, 10.0).unwrap();
        let ops = GridOperators::new(&g).unwrap();
        let complex = kind == ReconstructionKind::Complex;
        let sigma = sigma_field(&g, complex);
        let part = if gaps {
            crate::grid::classify_boundary(&g, &crate::grid::GapIntervals::centered(10.0, 1.0))
                .unwrap()
        } else {
            BoundaryPartition::full_dirichlet(&g)
        };
        let fs = if complex {
            vec![
                ElectrodeFunction::GTilde { order: 1 },
                ElectrodeFunction::HTilde { order: 2 },
            ]
        } else {
            vec![
                ElectrodeFunction::Affine {
                    c: 0.0,
                    a: 0.1,
                    b: 0.1,
                },
                ElectrodeFunction::Affine {
                    c: 0.1,
                    a: 0.1,
                    b: -0.1,
                },
            ]
        };
        let bcs: Vec<_> = fs
            .iter()
            .map(|f| BoundarySpec::from_function(&g, part.clone(), f).unwrap())
            .collect();
        let u = solve_many(&sigma, &bcs, &ops).unwrap();
        let data = MeasurementSet {
            grid: g,
            data: u
                .iter()
                .map(|p| crate::forward::internal_functional(sigma.sigma_re(), &p.u, &ops))
                .collect(),
            provenance: Provenance::Deterministic { a: 0.0 },
        };
        let problem = InverseProblem::new(ops, kind, &bcs, &data, &sigma, 0.5).unwrap();
        let truth = ReconstructionState {
            s_re: sigma.sigma_re().to_vec(),
            s_im: sigma.sigma_im().to_vec(),
            u_re: u.iter().map(|p| p.real_part()).collect(),
            u_im: u.iter().map(|p| p.imag_part()).collect(),
            log: vec![],
            converged: false,
        };
        Setup {
            problem,
            truth,
            sigma,
        }
    }

    fn inf_norm(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    #[test]
    fn exact_state_has_zero_residual() {
        for (kind, gaps) in [
            (ReconstructionKind::Real, false),
            (ReconstructionKind::Real, true),
            (ReconstructionKind::Complex, false),
        ] {
            let s = setup(12, kind, gaps);
            assert!(
                inf_norm(&s.problem.residual(&s.truth)) < 1e-10,
                "{kind:?} {gaps}"
            );
        }
    }

    #[test]
    fn perturbation_is_local() {
        let s = setup(12, ReconstructionKind::Real, false);
        let mut st = s.truth.clone();
        let g = *s.problem.grid();
        let k = g.node(5, 6);
        st.s_re[k] *= 1.1;
        let r = s.problem.residual(&st);
        let neq = s.problem.eq_rows.len();
        let nb = s.problem.partition.electrodes.len();
        let ni = s.problem.interior.len();
        for (row, &node) in s.problem.eq_rows.iter().enumerate() {
            let (i, j) = g.node_ij(node);
            let far = i.abs_diff(5) + j.abs_diff(6) > 2;
            if far {
                assert!(r[row].abs() < 1e-10);
            }
        }
        let meas = &r[neq + nb..neq + nb + ni];
        for (row, &node) in s.problem.interior.iter().enumerate() {
            let (i, j) = g.node_ij(node);
            if i.abs_diff(5) > 2 || j.abs_diff(6) > 2 {
                assert!(meas[row].abs() < 1e-12);
            }
        }
        assert!(inf_norm(&r) > 1e-6);
    }

    #[test]
    fn boundary_violation_shows_in_boundary_block() {
        let s = setup(10, ReconstructionKind::Real, false);
        let mut st = s.truth.clone();
        for &k in &s.problem.partition.electrodes {
            st.u_re[0][k] += 0.01;
        }
        let r = s.problem.residual(&st);
        let neq = s.problem.eq_rows.len();
        let nb = s.problem.partition.electrodes.len();
        let b = &r[neq..neq + nb];
        assert!((norm_sq(b).sqrt() - 0.01 * (nb as f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn complex_reduces_to_real() {
        let s = setup(10, ReconstructionKind::Real, false);
        let known = ConductivityField::new(
            *s.problem.grid(),
            s.sigma.sigma_re().to_vec(),
            vec![0.0; 100],
        )
        .unwrap();
        let bcs: Vec<BoundarySpec> = s
            .problem
            .electrode_values
            .iter()
            .map(|v| {
                BoundarySpec::new(s.problem.grid(), s.problem.partition.clone(), v.clone()).unwrap()
            })
            .collect();
        let data = MeasurementSet {
            grid: *s.problem.grid(),
            data: s.problem.data.clone(),
            provenance: Provenance::Deterministic { a: 0.0 },
        };
        let cp = InverseProblem::new(
            s.problem.ops.clone(),
            ReconstructionKind::Complex,
            &bcs,
            &data,
            &known,
            0.5,
        )
        .unwrap();
        let mut st = s.truth.clone();
        for k in 0..100 {
            st.s_re[k] *= 1.0 + 0.01 * (k % 7) as f64;
            st.u_re[1][k] += 0.001 * (k % 5) as f64;
        }
        let rr = s.problem.residual(&st);
        let rc = cp.residual(&st);
        let neq = s.problem.eq_rows.len();
        let nb = s.problem.partition.electrodes.len();
        let ni = s.problem.interior.len();
        for i in 0..2 {
            let a = i * (neq + nb + ni);
            let c = i * (2 * neq + 2 * nb + ni);
            assert_eq!(&rr[a..a + neq], &rc[c..c + neq]);
            assert!(rc[c + neq..c + 2 * neq].iter().all(|&v| v == 0.0));
            assert_eq!(
                &rr[a + neq..a + neq + nb],
                &rc[c + 2 * neq..c + 2 * neq + nb]
            );
            assert_eq!(
                &rr[a + neq + nb..a + neq + nb + ni],
                &rc[c + 2 * neq + 2 * nb..c + 2 * neq + 2 * nb + ni]
            );
        }
    }

    #[test]
    fn conjugation_symmetry() {
        let s = setup(10, ReconstructionKind::Complex, false);
        let mut st = s.truth.clone();
        for k in 0..100 {
            st.s_im[k] += 0.02 * (k % 3) as f64;
            st.u_im[0][k] += 0.003 * (k % 4) as f64;
        }
        let r = s.problem.residual(&st);
        let mut conj = st.clone();
        conj.s_im.iter_mut().for_each(|v| *v = -*v);
        conj.u_im.iter_mut().flatten().for_each(|v| *v = -*v);
        let mut p2 = InverseProblem {
            ..clone_problem(&s.problem)
        };
        p2.electrode_values
            .iter_mut()
            .flatten()
            .for_each(|z| *z = z.conj());
        let rc = p2.residual(&conj);
        assert!((norm_sq(&r) - norm_sq(&rc)).abs() <= 1e-12 * norm_sq(&r));
    }

    fn clone_problem(p: &InverseProblem) -> InverseProblem {
        InverseProblem {
            ops: p.ops.clone(),
            kind: p.kind,
            partition: p.partition.clone(),
            electrode_values: p.electrode_values.clone(),
            data: p.data.clone(),
            known_re: p.known_re.clone(),
            known_im: p.known_im.clone(),
            band: p.band.clone(),
            free_s: p.free_s.clone(),
            eq_rows: p.eq_rows.clone(),
            interior: p.interior.clone(),
            beta: p.beta.clone(),
        }
    }

    fn fd_check(s: &Setup, seed: u64) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut st = s.truth.clone();
        for v in st.s_re.iter_mut() {
            *v *= rng.random_range(0.9..1.1);
        }
        let x0 = s.problem.pack(&st);
        let j = s.problem.jacobian(&st);
        for _ in 0..5 {
            let v: Vec<f64> = (0..x0.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h = 1e-6;
            let rp = s.problem.residual(
                &s.problem.unpack(
                    &x0.iter()
                        .zip(&v)
                        .map(|(x, v)| x + h * v)
                        .collect::<Vec<_>>(),
                    &st,
                ),
            );
            let rm = s.problem.residual(
                &s.problem.unpack(
                    &x0.iter()
                        .zip(&v)
                        .map(|(x, v)| x - h * v)
                        .collect::<Vec<_>>(),
                    &st,
                ),
            );
            let fd: Vec<f64> = rp
                .iter()
                .zip(&rm)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect();
            let jv = j.apply(&v);
            let err: Vec<f64> = fd.iter().zip(&jv).map(|(a, b)| a - b).collect();
            let rel = norm_sq(&err).sqrt() / norm_sq(&jv).sqrt();
            assert!(rel < 1e-6, "{rel}");
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        fd_check(&setup(9, ReconstructionKind::Real, false), 1);
        fd_check(&setup(11, ReconstructionKind::Real, true), 2);
        fd_check(&setup(9, ReconstructionKind::Complex, false), 3);
    }

    #[test]
    fn pde_block_is_weighted_laplacian() {
        let s = setup(8, ReconstructionKind::Real, false);
        let j = s.problem.jacobian(&s.truth);
        let lap = crate::forward::assemble_weighted_laplacian(
            &s.sigma,
            &s.problem.ops,
            &s.problem.partition,
        );
        let ns = s.problem.free_s.len();
        for (r, _) in s.problem.eq_rows.iter().enumerate() {
            for c in 0..64 {
                assert!((j.get(r, ns + c) - lap.get(r, c).re).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn measurement_block_is_linear_in_s() {
        let s = setup(9, ReconstructionKind::Real, false);
        let j = s.problem.jacobian(&s.truth);
        let mut st = s.truth.clone();
        let mut v = vec![0.0; s.problem.num_unknowns()];
        for (n, &k) in s.problem.free_s.iter().enumerate() {
            v[n] = 0.05 * ((k % 3) as f64 - 1.0);
            st.s_re[k] += v[n];
        }
        let r0 = s.problem.residual(&s.truth);
        let r1 = s.problem.residual(&st);
        let jv = j.apply(&v);
        let neq = s.problem.eq_rows.len();
        let nb = s.problem.partition.electrodes.len();
        let ni = s.problem.interior.len();
        for row in neq + nb..neq + nb + ni {
            assert!((r1[row] - r0[row] - jv[row]).abs() < 1e-12);
        }
    }

    #[test]
    fn truth_stops_immediately() {
        let s = setup(10, ReconstructionKind::Real, false);
        let out = s
            .problem
            .gauss_newton(s.truth.clone(), &ReconstructionConfig::real())
            .unwrap();
        assert!(out.converged);
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.log[0].iter, 0);
        assert_eq!(out.s_re, s.truth.s_re);
    }

    #[test]
    fn constant_sigma_recovered_quickly() {
        let g = GridSpec::new(10, 10.0).unwrap();
        let ops = GridOperators::new(&g).unwrap();
        let sigma = ConductivityField::real(g, vec![1.5; 100]).unwrap();
        let part = BoundaryPartition::full_dirichlet(&g);
        let bcs: Vec<_> = [
            ElectrodeFunction::Affine {
                c: 0.0,
                a: 0.1,
                b: 0.1,
            },
            ElectrodeFunction::Affine {
                c: 0.1,
                a: 0.1,
                b: -0.1,
            },
        ]
        .iter()
        .map(|f| BoundarySpec::from_function(&g, part.clone(), f).unwrap())
        .collect();
        let u = solve_many(&sigma, &bcs, &ops).unwrap();
        let data = MeasurementSet {
            grid: g,
            data: u
                .iter()
                .map(|p| crate::forward::internal_functional(sigma.sigma_re(), &p.u, &ops))
                .collect(),
            provenance: Provenance::Deterministic { a: 0.0 },
        };
        let p =
            InverseProblem::new(ops, ReconstructionKind::Real, &bcs, &data, &sigma, 0.5).unwrap();
        let init = p.initial_guess(Complex64::new(1.5, 0.0)).unwrap();
        let out = p.gauss_newton(init, &ReconstructionConfig::real()).unwrap();
        assert!(out.log.len() <= 2, "{:?}", out.log);

        let init = p.initial_guess(Complex64::new(1.0, 0.0)).unwrap();
        let cfg = ReconstructionConfig {
            gamma: 0.0,
            step_tol: 1e-12,
            max_iters: 30,
            ..ReconstructionConfig::real()
        };
        let out = p.gauss_newton(init, &cfg).unwrap();
        let last = out.log.last().unwrap();
        assert!(last.residual_norm <= 1e-8, "{:?}", out.log);
        for w in out.log.windows(2) {
            assert!(w[1].residual_norm <= w[0].residual_norm);
        }
    }

    #[test]
    fn band_values_stay_fixed() {
        let s = setup(12, ReconstructionKind::Real, false);
        let init = s.problem.initial_guess(s.problem.band_mean()).unwrap();
        let out = s
            .problem
            .gauss_newton(init, &ReconstructionConfig::real())
            .unwrap();
        for k in 0..s.problem.grid().num_nodes() {
            if s.problem.band[k] {
                assert_eq!(out.s_re[k], s.sigma.sigma_re()[k]);
            }
        }
        assert!(out.converged);
    }

    #[test]
    fn config_validation() {
        assert!(ReconstructionConfig {
            gamma: -1.0,
            ..ReconstructionConfig::real()
        }
        .validate()
        .is_err());
        assert!(ReconstructionConfig {
            step_tol: 0.0,
            ..ReconstructionConfig::real()
        }
        .validate()
        .is_err());
        let mut c = ReconstructionConfig::real();
        c.armijo.beta = 1.0;
        assert!(c.validate().is_err());
        assert_eq!(ReconstructionConfig::complex().gamma, 1.0);
    }

    #[test]
    fn restriction_averages() {
        let fine = GridSpec::new(21, 10.0).unwrap();
        let coarse = GridSpec::new(11, 10.0).unwrap();
        let lin: Vec<f64> = fine
            .node_coords()
            .iter()
            .map(|&(x, y)| 2.0 * x - y + 1.0)
            .collect();
        let r = restrict(&fine, &lin, &coarse);
        for (k, &(x, y)) in coarse.node_coords().iter().enumerate() {
            if !coarse.is_boundary(k) {
                assert!((r[k] - (2.0 * x - y + 1.0)).abs() < 1e-12);
            }
        }
        assert_eq!(relative_l2_error(&r, &r, &coarse.interior_nodes()), 0.0);
    }
}

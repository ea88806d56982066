//! Discrete conductivity equation `D^T [E12 sigma (.) D u] = 0` with
//! Dirichlet electrodes and, optionally, insulating (no-flux) gaps.
//!
//! Gap nodes carry the centred ghost-node flux condition. Mirroring the
//! ghost value across the boundary and halving the row turns it into the
//! graph-Laplacian row with boundary-tangential edges at half weight, which
//! keeps the assembled operator (complex) symmetric.

use faer::linalg::solvers::Solve;
use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{BoundaryPartition, GridOperators, GridSpec};
use crate::sparse::{CsrMatrix, Scalar};

/// One `cm^-1 kOhm^-1` expressed in `S/m`.
pub const CONDUCTIVITY_TO_SI: f64 = 0.1;
/// One centimetre in metres.
pub const CM: f64 = 0.01;

const SOLVE_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhysicalConstants {
    /// Boltzmann constant, J/K.
    pub kappa: f64,
    /// Reduced Planck constant, J s.
    pub hbar: f64,
    /// Vacuum permeability, H/m.
    pub mu0: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            kappa: 1.36e-23,
            hbar: 1.05e-34,
            mu0: 4.0e-7 * std::f64::consts::PI,
        }
    }
}

/// Node-based complex conductivity `sigma' + i sigma''` in `cm^-1 kOhm^-1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConductivityField {
    grid: GridSpec,
    sigma_re: Vec<f64>,
    sigma_im: Vec<f64>,
}

impl ConductivityField {
    pub fn new(grid: GridSpec, sigma_re: Vec<f64>, sigma_im: Vec<f64>) -> Result<Self> {
        let n = grid.num_nodes();
        if sigma_re.len() != n || sigma_im.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "conductivity has {}/{} values for {n} nodes",
                sigma_re.len(),
                sigma_im.len()
            )));
        }
        if let Some(k) = sigma_re.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidConductivity(format!(
                "sigma' must be positive and finite (node {k}: {})",
                sigma_re[k]
            )));
        }
        if let Some(k) = sigma_im.iter().position(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidConductivity(format!(
                "sigma'' must be non-negative and finite (node {k}: {})",
                sigma_im[k]
            )));
        }
        Ok(Self {
            grid,
            sigma_re,
            sigma_im,
        })
    }

    pub fn real(grid: GridSpec, sigma_re: Vec<f64>) -> Result<Self> {
        let n = grid.num_nodes();
        Self::new(grid, sigma_re, vec![0.0; n])
    }

    pub fn constant(grid: GridSpec, value: Complex64) -> Result<Self> {
        let n = grid.num_nodes();
        Self::new(grid, vec![value.re; n], vec![value.im; n])
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn sigma_re(&self) -> &[f64] {
        &self.sigma_re
    }

    pub fn sigma_im(&self) -> &[f64] {
        &self.sigma_im
    }

    pub fn is_real(&self) -> bool {
        self.sigma_im.iter().all(|&s| s == 0.0)
    }

    pub fn values(&self) -> Vec<Complex64> {
        self.sigma_re
            .iter()
            .zip(&self.sigma_im)
            .map(|(&r, &i)| Complex64::new(r, i))
            .collect()
    }

    /// Edge conductivities `E12 (sigma' + i sigma'')`.
    pub fn edge_values(&self, ops: &GridOperators) -> Vec<Complex64> {
        ops.e12.apply(&self.values())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BcKind {
    FullDirichlet,
    Mixed,
}

/// Electrode set and the (possibly complex) electrode function on it.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundarySpec {
    pub kind: BcKind,
    pub partition: BoundaryPartition,
    /// Node-indexed electrode values; only entries on electrode nodes are used.
    pub values: Vec<Complex64>,
}

impl BoundarySpec {
    pub fn new(
        grid: &GridSpec,
        partition: BoundaryPartition,
        values: Vec<Complex64>,
    ) -> Result<Self> {
        if values.len() != grid.num_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "electrode values: {} entries for {} nodes",
                values.len(),
                grid.num_nodes()
            )));
        }
        if let Some(&k) = partition
            .electrodes
            .iter()
            .find(|&&k| !values[k].is_finite())
        {
            return Err(Error::InvalidBoundary(format!(
                "non-finite electrode value at node {k}"
            )));
        }
        let kind = if partition.gaps.is_empty() {
            BcKind::FullDirichlet
        } else {
            BcKind::Mixed
        };
        Ok(Self {
            kind,
            partition,
            values,
        })
    }

    /// Evaluates `f` on the electrode nodes of `partition`.
    pub fn from_function(
        grid: &GridSpec,
        partition: BoundaryPartition,
        f: &ElectrodeFunction,
    ) -> Result<Self> {
        let mut values = vec![Complex64::default(); grid.num_nodes()];
        for &k in &partition.electrodes {
            let (x, y) = grid.node_xy(k);
            values[k] = f.eval(x, y, grid.extent());
        }
        Self::new(grid, partition, values)
    }

    pub fn electrode_values(&self) -> Vec<Complex64> {
        self.partition
            .electrodes
            .iter()
            .map(|&k| self.values[k])
            .collect()
    }
}

/// Electrode functions used in the experiments.
///
/// `G(n) = (L/2) sin(theta) (r/L)^n` and `H(n) = (L/2) cos(theta) (r/L)^n`
/// in polar coordinates about the corner `(0, 0)`; with `L = 10` these are
/// `5 sin(theta) (r/10)^n` and `5 cos(theta) (r/10)^n`. The tilde variants
/// add half of the other function as imaginary part.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ElectrodeFunction {
    G {
        order: u32,
    },
    H {
        order: u32,
    },
    GTilde {
        order: u32,
    },
    HTilde {
        order: u32,
    },
    /// `c + a x + b y`.
    Affine {
        c: f64,
        a: f64,
        b: f64,
    },
}

impl ElectrodeFunction {
    pub fn eval(&self, x: f64, y: f64, extent: f64) -> Complex64 {
        let r = x.hypot(y);
        let theta = y.atan2(x);
        let half = 0.5 * extent;
        let g = |n: u32| half * theta.sin() * (r / extent).powi(n as i32);
        let h = |n: u32| half * theta.cos() * (r / extent).powi(n as i32);
        match *self {
            Self::G { order } => Complex64::new(g(order), 0.0),
            Self::H { order } => Complex64::new(h(order), 0.0),
            Self::GTilde { order } => Complex64::new(g(order), 0.5 * h(order)),
            Self::HTilde { order } => Complex64::new(h(order), 0.5 * g(order)),
            Self::Affine { c, a, b } => Complex64::new(c + a * x + b * y, 0.0),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let err = || Error::Parse(format!("unknown electrode function `{s}`"));
        if let Some(rest) = s.strip_prefix("affine:") {
            let v: Vec<f64> = rest
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|_| err()))
                .collect::<Result<_>>()?;
            if v.len() != 3 {
                return Err(err());
            }
            return Ok(Self::Affine {
                c: v[0],
                a: v[1],
                b: v[2],
            });
        }
        let (head, order) = s.split_at(s.find(|c: char| c.is_ascii_digit()).ok_or_else(err)?);
        let order: u32 = order.parse().map_err(|_| err())?;
        match head {
            "g" => Ok(Self::G { order }),
            "h" => Ok(Self::H { order }),
            "gt" | "g~" => Ok(Self::GTilde { order }),
            "ht" | "h~" => Ok(Self::HTilde { order }),
            _ => Err(err()),
        }
    }
}

/// `g_n`, `h_n` or their complex combinations at the listed nodes.
pub fn boundary_function(
    grid: &GridSpec,
    kind: char,
    order: u32,
    complex: bool,
    nodes: &[usize],
) -> Result<Vec<Complex64>> {
    let f = match (kind, complex) {
        ('g', false) => ElectrodeFunction::G { order },
        ('h', false) => ElectrodeFunction::H { order },
        ('g', true) => ElectrodeFunction::GTilde { order },
        ('h', true) => ElectrodeFunction::HTilde { order },
        _ => {
            return Err(Error::InvalidParameter(format!(
                "boundary function kind `{kind}`"
            )))
        }
    };
    Ok(nodes
        .iter()
        .map(|&k| {
            let (x, y) = grid.node_xy(k);
            f.eval(x, y, grid.extent())
        })
        .collect())
}

/// Per-edge factor of the flux operator: `1/2` on boundary-tangential edges.
pub fn flux_edge_factors(grid: &GridSpec) -> Vec<f64> {
    (0..grid.num_edges())
        .map(|e| {
            if grid.is_tangential_boundary_edge(e) {
                0.5
            } else {
                1.0
            }
        })
        .collect()
}

/// Full node x node operator `D^T Diag(beta w) D` for edge weights `w`.
pub fn flux_operator<T: Scalar>(grid: &GridSpec, edge_weights: &[T]) -> CsrMatrix<T> {
    assert_eq!(edge_weights.len(), grid.num_edges());
    let h2 = 1.0 / (grid.dx() * grid.dx());
    let mut t = Vec::with_capacity(4 * grid.num_edges());
    for (e, &w) in edge_weights.iter().enumerate() {
        let beta = if grid.is_tangential_boundary_edge(e) {
            0.5
        } else {
            1.0
        };
        let w = w * (beta * h2);
        let (a, b) = grid.edge_nodes(e);
        t.push((a, a, w));
        t.push((b, b, w));
        t.push((a, b, -w));
        t.push((b, a, -w));
    }
    CsrMatrix::from_triplets(grid.num_nodes(), grid.num_nodes(), &t)
}

/// Rows at which the conductivity equation is imposed: interior nodes plus
/// any gap nodes, ascending.
pub fn equation_rows(grid: &GridSpec, partition: &BoundaryPartition) -> Vec<usize> {
    let gap = partition.gap_mask(grid);
    (0..grid.num_nodes())
        .filter(|&k| !grid.is_boundary(k) || gap[k])
        .collect()
}

/// The weighted graph Laplacian restricted to the equation rows.
pub fn assemble_weighted_laplacian(
    sigma: &ConductivityField,
    ops: &GridOperators,
    partition: &BoundaryPartition,
) -> CsrMatrix<Complex64> {
    let w = sigma.edge_values(ops);
    let full = flux_operator(&ops.grid, &w);
    full.select_rows(&equation_rows(&ops.grid, partition))
}

/// Solution of one boundary-value problem.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialField {
    pub u: Vec<Complex64>,
}

impl PotentialField {
    pub fn real_part(&self) -> Vec<f64> {
        self.u.iter().map(|z| z.re).collect()
    }

    pub fn imag_part(&self) -> Vec<f64> {
        self.u.iter().map(|z| z.im).collect()
    }
}

/// Factorised conductivity operator for one conductivity and electrode
/// layout, reusable across electrode functions.
pub struct LaplaceSolver {
    grid: GridSpec,
    partition: BoundaryPartition,
    free: Vec<usize>,
    a_free: CsrMatrix<Complex64>,
    a_fixed: CsrMatrix<Complex64>,
    lu: faer::sparse::linalg::solvers::Lu<usize, Complex64>,
}

impl LaplaceSolver {
    pub fn new(
        sigma: &ConductivityField,
        ops: &GridOperators,
        partition: &BoundaryPartition,
    ) -> Result<Self> {
        let grid = ops.grid;
        if sigma.grid() != &grid {
            return Err(Error::DimensionMismatch(
                "conductivity and operators use different grids".into(),
            ));
        }
        if partition.electrodes.is_empty() {
            return Err(Error::FloatingPotential);
        }
        let free = equation_rows(&grid, partition);
        let rows = assemble_weighted_laplacian(sigma, ops, partition);
        let a_free = rows.select_cols(&free);
        let a_fixed = rows.select_cols(&partition.electrodes);
        let lu = a_free
            .to_faer()?
            .sp_lu()
            .map_err(|e| Error::Solver(format!("LU factorisation: {e:?}")))?;
        Ok(Self {
            grid,
            partition: partition.clone(),
            free,
            a_free,
            a_fixed,
            lu,
        })
    }

    pub fn solve(&self, bc: &BoundarySpec) -> Result<PotentialField> {
        Ok(self.solve_many(std::slice::from_ref(bc))?.remove(0))
    }

    pub fn solve_many(&self, bcs: &[BoundarySpec]) -> Result<Vec<PotentialField>> {
        for bc in bcs {
            if bc.partition != self.partition {
                return Err(Error::InvalidBoundary(
                    "electrode layout differs from factorised operator".into(),
                ));
            }
        }
        let nf = self.free.len();
        let rhs: Vec<Vec<Complex64>> = bcs
            .iter()
            .map(|bc| {
                self.a_fixed
                    .apply(&bc.electrode_values())
                    .into_iter()
                    .map(|v| -v)
                    .collect()
            })
            .collect();
        let mut x = Mat::<Complex64>::from_fn(nf, bcs.len(), |i, j| rhs[j][i]);
        self.lu.solve_in_place(x.as_mut());

        let mut out = Vec::with_capacity(bcs.len());
        for (j, bc) in bcs.iter().enumerate() {
            let mut uf: Vec<Complex64> = (0..nf).map(|i| x[(i, j)]).collect();
            let mut res = self.residual(&uf, &rhs[j]);
            let bnorm = norm(&rhs[j]).max(f64::MIN_POSITIVE);
            // A couple of refinement sweeps recover accuracy lost to pivoting.
            for _ in 0..2 {
                if norm(&res) <= SOLVE_TOLERANCE * bnorm {
                    break;
                }
                let mut corr = Mat::<Complex64>::from_fn(nf, 1, |i, _| res[i]);
                self.lu.solve_in_place(corr.as_mut());
                for (u, i) in uf.iter_mut().zip(0..) {
                    *u += corr[(i, 0)];
                }
                res = self.residual(&uf, &rhs[j]);
            }
            let rel = norm(&res) / bnorm;
            if rhs[j].iter().any(|v| *v != Complex64::default()) && rel > SOLVE_TOLERANCE {
                return Err(Error::SolverResidual {
                    residual: rel,
                    tolerance: SOLVE_TOLERANCE,
                });
            }
            let mut u = bc.values.clone();
            for (&k, &v) in self.free.iter().zip(&uf) {
                u[k] = v;
            }
            for &k in &self.partition.gaps {
                // Gap values come from the solve; only electrodes are prescribed.
                debug_assert!(self.free.binary_search(&k).is_ok());
            }
            out.push(PotentialField { u });
        }
        Ok(out)
    }

    /// Solves `A_ff phi_f = f_f` with `phi = 0` on the electrodes; `f` is
    /// node-indexed and only read on the equation rows.
    pub fn solve_source(&self, f: &[Complex64]) -> Result<Vec<Complex64>> {
        if f.len() != self.grid.num_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "source has {} entries for {} nodes",
                f.len(),
                self.grid.num_nodes()
            )));
        }
        let mut x = Mat::<Complex64>::from_fn(self.free.len(), 1, |i, _| f[self.free[i]]);
        self.lu.solve_in_place(x.as_mut());
        let mut phi = vec![Complex64::default(); self.grid.num_nodes()];
        for (i, &k) in self.free.iter().enumerate() {
            phi[k] = x[(i, 0)];
        }
        Ok(phi)
    }

    pub fn partition(&self) -> &BoundaryPartition {
        &self.partition
    }

    /// `b - A_ff u_f`.
    fn residual(&self, uf: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
        let au = self.a_free.apply(uf);
        b.iter().zip(au).map(|(&b, a)| b - a).collect()
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Solves the conductivity equation for a single boundary condition.
pub fn solve(
    sigma: &ConductivityField,
    bc: &BoundarySpec,
    ops: &GridOperators,
) -> Result<PotentialField> {
    LaplaceSolver::new(sigma, ops, &bc.partition)?.solve(bc)
}

/// Solves for several electrode functions sharing one electrode layout.
pub fn solve_many(
    sigma: &ConductivityField,
    bcs: &[BoundarySpec],
    ops: &GridOperators,
) -> Result<Vec<PotentialField>> {
    let Some(first) = bcs.first() else {
        return Ok(Vec::new());
    };
    LaplaceSolver::new(sigma, ops, &first.partition)?.solve_many(bcs)
}

/// `N1 (E1 s' (.) |D1 u|^2) + N2 (E2 s' (.) |D2 u|^2)` on every node. For
/// complex potentials `|D u|^2 = |D u'|^2 + |D u''|^2`.
pub fn internal_functional<T: Scalar>(sigma_re: &[f64], u: &[T], ops: &GridOperators) -> Vec<f64> {
    let part = |d: &CsrMatrix, e: &CsrMatrix, n: &CsrMatrix| {
        let du = d.apply(u);
        let se = e.apply(sigma_re);
        let w: Vec<f64> = du.iter().zip(&se).map(|(g, s)| s * g.norm_sqr()).collect();
        n.apply(&w)
    };
    let h1 = part(&ops.d1, &ops.e1, &ops.n1);
    let h2 = part(&ops.d2, &ops.e2, &ops.n2);
    h1.iter().zip(&h2).map(|(a, b)| a + b).collect()
}

/// Node gradients `(N1 D1 u, N2 D2 u)`.
pub fn nodal_gradient<T: Scalar>(u: &[T], ops: &GridOperators) -> Vec<[T; 2]> {
    let gx = ops.n1.apply(&ops.d1.apply(u));
    let gy = ops.n2.apply(&ops.d2.apply(u));
    gx.into_iter().zip(gy).map(|(a, b)| [a, b]).collect()
}

/// `omega mu |sigma| L^2` in SI units.
pub fn quasistatic_number_si(length_m: f64, sigma_abs_si: f64, omega: f64, mu: f64) -> f64 {
    omega * mu * sigma_abs_si * length_m * length_m
}

/// Validity number of the quasi-static approximation for a body of size
/// `length_cm` with `sigma' ` in `cm^-1 kOhm^-1` and real permittivity
/// `eps_re` in F/m at angular frequency `omega`.
pub fn quasistatic_check(
    length_cm: f64,
    sigma_re: f64,
    omega: f64,
    eps_re: f64,
    constants: &PhysicalConstants,
) -> f64 {
    let sigma = Complex64::new(sigma_re * CONDUCTIVITY_TO_SI, omega * eps_re);
    quasistatic_number_si(length_cm * CM, sigma.norm(), omega, constants.mu0)
}

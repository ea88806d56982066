//! Principal symbols of the linearised real and complex problems and their
//! pointwise conditioning.
//!
//! Real case, `n` experiments, unknowns `(d sigma, d u_1, ..., d u_n)`:
//! per experiment a measurement row `(|F_i|^2, .., 2 sigma F_i.i xi, ..)` and a
//! PDE row `(F_i.i xi, .., -sigma |xi|^2, ..)`.
//!
//! Complex case, unknowns `(d sigma', d sigma'', d u_1', d u_1'', ...)`: per
//! experiment one measurement row and two PDE rows.

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::{nodal_gradient, ConductivityField, PotentialField};
use crate::grid::GridOperators;

/// Value stored where the symbol is not injective.
pub const CONDITION_CAP: f64 = 1e16;

type Vec2 = [f64; 2];

fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// Dense symbol with its Douglis-Nirenberg weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries.
    pub data: Vec<Complex64>,
    pub row_weights: Vec<i32>,
    pub col_weights: Vec<i32>,
}

impl SymbolMatrix {
    fn zeros(rows: usize, cols: usize, row_weights: Vec<i32>, col_weights: Vec<i32>) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::default(); rows * cols],
            row_weights,
            col_weights,
        }
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn to_faer(&self) -> Mat<Complex64> {
        Mat::from_fn(self.rows, self.cols, |r, c| self.get(r, c))
    }

    /// Singular values, largest first.
    ///
    /// faer's complex SVD occasionally reports no convergence on ordinary
    /// inputs; the adjoint and then the real embedding
    /// `[[Re, -Im], [Im, Re]]` (same values, each twice) are tried next.
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        let a = self.to_faer();
        if let Ok(sv) = a.singular_values() {
            return Ok(sv);
        }
        if let Ok(sv) = a.adjoint().singular_values() {
            return Ok(sv);
        }
        self.embedded_singular_values()
    }

    fn embedded_singular_values(&self) -> Result<Vec<f64>> {
        let (r, c) = (self.rows, self.cols);
        let emb = Mat::<f64>::from_fn(2 * r, 2 * c, |i, j| {
            let z = self.get(i % r, j % c);
            match (i < r, j < c) {
                (true, true) | (false, false) => z.re,
                (true, false) => -z.im,
                (false, true) => z.im,
            }
        });
        let sv = emb
            .singular_values()
            .map_err(|e| Error::Solver(format!("SVD: {e:?}")))?;
        Ok(sv.into_iter().step_by(2).collect())
    }

    /// `sigma_max / sigma_min`, with `sigma_min` the `cols`-th singular value;
    /// [`CONDITION_CAP`] when the symbol is not injective.
    pub fn condition(&self) -> Result<f64> {
        if self.rows < self.cols {
            return Ok(CONDITION_CAP);
        }
        let sv = self.singular_values()?;
        let max = sv[0];
        let min = sv[self.cols - 1];
        if !(min > 0.0) || max / min >= CONDITION_CAP {
            return Ok(CONDITION_CAP);
        }
        Ok(max / min)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut out = Self::zeros(
            rows.len(),
            self.cols,
            rows.iter().map(|&r| self.row_weights[r]).collect(),
            self.col_weights.clone(),
        );
        for (i, &r) in rows.iter().enumerate() {
            out.data[i * self.cols..(i + 1) * self.cols]
                .copy_from_slice(&self.data[r * self.cols..(r + 1) * self.cols]);
        }
        out
    }

    pub fn determinant(&self) -> Result<Complex64> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} symbol is not square",
                self.rows, self.cols
            )));
        }
        Ok(self.to_faer().determinant())
    }
}

/// `2n x (n+1)` symbol of the real problem.
pub fn real_symbol(f: &[Vec2], sigma: f64, xi: Vec2) -> SymbolMatrix {
    let n = f.len();
    let x2 = dot(xi, xi);
    let mut m = SymbolMatrix::zeros(
        2 * n,
        n + 1,
        (0..2 * n).map(|r| (r % 2) as i32).collect(),
        (0..=n).map(|c| (c > 0) as i32).collect(),
    );
    for (i, &fi) in f.iter().enumerate() {
        let fx = dot(fi, xi);
        m.set(2 * i, 0, c(dot(fi, fi)));
        m.set(2 * i, 1 + i, 2.0 * sigma * fx * I);
        m.set(2 * i + 1, 0, fx * I);
        m.set(2 * i + 1, 1 + i, c(-sigma * x2));
    }
    m
}

/// `3n x (2 + 2n)` symbol of the complex problem.
pub fn complex_symbol(
    fr: &[Vec2],
    fi: &[Vec2],
    sigma_re: f64,
    sigma_im: f64,
    xi: Vec2,
) -> SymbolMatrix {
    assert_eq!(fr.len(), fi.len());
    let n = fr.len();
    let x2 = dot(xi, xi);
    let mut m = SymbolMatrix::zeros(
        3 * n,
        2 + 2 * n,
        (0..3 * n).map(|r| (r % 3 != 0) as i32).collect(),
        (0..2 + 2 * n).map(|c| (c >= 2) as i32).collect(),
    );
    for j in 0..n {
        let (a, b) = (fr[j], fi[j]);
        let (ax, bx) = (dot(a, xi), dot(b, xi));
        let (r, col) = (3 * j, 2 + 2 * j);
        m.set(r, 0, c(dot(a, a) + dot(b, b)));
        m.set(r, col, 2.0 * sigma_re * ax * I);
        m.set(r, col + 1, 2.0 * sigma_re * bx * I);

        m.set(r + 1, 0, ax * I);
        m.set(r + 1, 1, -bx * I);
        m.set(r + 1, col, c(-sigma_re * x2));
        m.set(r + 1, col + 1, c(sigma_im * x2));

        m.set(r + 2, 0, bx * I);
        m.set(r + 2, 1, ax * I);
        m.set(r + 2, col, c(-sigma_im * x2));
        m.set(r + 2, col + 1, c(-sigma_re * x2));
    }
    m
}

/// Largest square sub-matrix of the complex symbol: the measurement rows of
/// experiments 1 and 2 followed by every PDE row.
pub fn complex_submatrix(
    fr: &[Vec2],
    fi: &[Vec2],
    sigma_re: f64,
    sigma_im: f64,
    xi: Vec2,
) -> SymbolMatrix {
    let n = fr.len();
    assert!(n >= 2, "sub-matrix needs two experiments");
    let full = complex_symbol(fr, fi, sigma_re, sigma_im, xi);
    let mut rows = vec![0, 3];
    rows.extend((0..n).flat_map(|j| [3 * j + 1, 3 * j + 2]));
    full.select_rows(&rows)
}

fn bracket(fr: &[Vec2], fi: &[Vec2], xi: Vec2) -> (f64, f64, f64, f64) {
    let sq = |j: usize| dot(fr[j], fr[j]) + dot(fi[j], fi[j]);
    let along = |j: usize| dot(fr[j], xi).powi(2) + dot(fi[j], xi).powi(2);
    (sq(0), sq(1), along(0), along(1))
}

/// Determinant of the Schur complement of the PDE block in the `n = 2`
/// sub-matrix:
/// `2 s' s'' / |s|^2 * (|F_1|^2 [(F_2'.i xi)^2 + (F_2''.i xi)^2]
///                    - |F_2|^2 [(F_1'.i xi)^2 + (F_1''.i xi)^2]) / |xi|^2`.
pub fn schur_determinant(
    fr: [Vec2; 2],
    fi: [Vec2; 2],
    sigma_re: f64,
    sigma_im: f64,
    xi: Vec2,
) -> f64 {
    let (a1, a2, d1, d2) = bracket(&fr, &fi, xi);
    // (F'.i xi)^2 + (F''.i xi)^2 = -|F.xi|^2
    let pre = 2.0 * sigma_re * sigma_im / (sigma_re * sigma_re + sigma_im * sigma_im);
    pre * (a1 * -d2 - a2 * -d1) / dot(xi, xi)
}

/// Determinant of the `(2+2n)`-square sub-matrix,
/// `-2 s' s'' |xi|^(4n-2) |s|^(2(n-1)) (|F_1|^2 |F_2.xi|^2 - |F_2|^2 |F_1.xi|^2)`.
///
/// Equals the Schur determinant times `det` of the PDE block,
/// `|s|^(2n) |xi|^(4n)`. The leading minus comes from `(i xi)^2`.
pub fn full_subdeterminant(
    fr: &[Vec2],
    fi: &[Vec2],
    sigma_re: f64,
    sigma_im: f64,
    xi: Vec2,
) -> Result<f64> {
    let n = fr.len();
    if n < 2 || fi.len() != n {
        return Err(Error::InvalidParameter(format!(
            "sub-determinant needs n >= 2 experiments, got {n}"
        )));
    }
    let (a1, a2, d1, d2) = bracket(fr, fi, xi);
    let x = dot(xi, xi).sqrt();
    let s2 = sigma_re * sigma_re + sigma_im * sigma_im;
    Ok(-2.0
        * sigma_re
        * sigma_im
        * x.powi(4 * n as i32 - 2)
        * s2.powi(n as i32 - 1)
        * (a1 * d2 - a2 * d1))
}

/// Whether `|F_i|^2 |F_j.xi|^2 != |F_j|^2 |F_i.xi|^2` holds with a relative
/// margin of `1e-9`, for each direction.
pub fn injectivity_condition(fi: (Vec2, Vec2), fj: (Vec2, Vec2), directions: &[Vec2]) -> Vec<bool> {
    let fr = [fi.0, fj.0];
    let fim = [fi.1, fj.1];
    directions
        .iter()
        .map(|&xi| {
            let (a1, a2, d1, d2) = bracket(&fr, &fim, xi);
            let (lhs, rhs) = (a1 * d2, a2 * d1);
            (lhs - rhs).abs() > 1e-9 * (lhs + rhs)
        })
        .collect()
}

/// `K` unit directions `(cos 2 pi k / K, sin 2 pi k / K)`.
pub fn unit_directions(k: usize) -> Vec<Vec2> {
    (0..k)
        .map(|j| {
            let t = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
            [t.cos(), t.sin()]
        })
        .collect()
}

/// Node gradients `F' = grad u'`, `F'' = grad u''` of each experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldGradients {
    pub real: Vec<Vec<Vec2>>,
    pub imag: Vec<Vec<Vec2>>,
}

impl FieldGradients {
    pub fn from_potentials(potentials: &[PotentialField], ops: &GridOperators) -> Self {
        let mut real = Vec::with_capacity(potentials.len());
        let mut imag = Vec::with_capacity(potentials.len());
        for p in potentials {
            let g = nodal_gradient(&p.u, ops);
            real.push(g.iter().map(|[a, b]| [a.re, b.re]).collect());
            imag.push(g.iter().map(|[a, b]| [a.im, b.im]).collect());
        }
        Self { real, imag }
    }

    pub fn num_experiments(&self) -> usize {
        self.real.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.real.first().map_or(0, Vec::len)
    }

    /// Keeps the listed experiments, in order.
    pub fn select(&self, experiments: &[usize]) -> Self {
        Self {
            real: experiments.iter().map(|&i| self.real[i].clone()).collect(),
            imag: experiments.iter().map(|&i| self.imag[i].clone()).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymbolKind {
    Real,
    Complex,
}

/// Pointwise maximum condition number over the unit directions.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionMap {
    pub values: Vec<f64>,
    pub directions: usize,
}

impl ConditionMap {
    pub fn log10(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.log10()).collect()
    }

    pub fn median(&self) -> f64 {
        median(&self.values)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn condition_map(
    fields: &FieldGradients,
    sigma: &ConductivityField,
    kind: SymbolKind,
    directions: usize,
) -> Result<ConditionMap> {
    if directions < 4 {
        return Err(Error::InvalidParameter(format!(
            "need at least 4 directions, got {directions}"
        )));
    }
    let n = fields.num_experiments();
    if n == 0 {
        return Err(Error::InvalidParameter("no experiments".into()));
    }
    if fields.num_nodes() != sigma.grid().num_nodes() {
        return Err(Error::DimensionMismatch(
            "field gradients and conductivity differ in size".into(),
        ));
    }
    let xis = unit_directions(directions);
    let values = (0..fields.num_nodes())
        .into_par_iter()
        .map(|k| {
            let fr: Vec<Vec2> = fields.real.iter().map(|f| f[k]).collect();
            let fi: Vec<Vec2> = fields.imag.iter().map(|f| f[k]).collect();
            let (sr, si) = (sigma.sigma_re()[k], sigma.sigma_im()[k]);
            let mut worst: f64 = 1.0;
            for &xi in &xis {
                let m = match kind {
                    SymbolKind::Real => real_symbol(&fr, sr, xi),
                    SymbolKind::Complex => complex_symbol(&fr, &fi, sr, si, xi),
                };
                worst = worst.max(m.condition()?);
                if worst >= CONDITION_CAP {
                    break;
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ConditionMap { values, directions })
}

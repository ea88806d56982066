//! Uniform vertex-centred grid on the square `[0, L]^2`, its forward
//! difference operators and the node/edge interpolators built from them.
//!
//! Node `(i, j)` sits at `(i dx, j dy)` and has flat index `i + n j`.
//! Edges are numbered horizontal first (row-major, `i + (n-1) j`), then
//! vertical (`n(n-1) + i + n j`).

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    n: usize,
    extent: f64,
    fine_factor: usize,
}

impl GridSpec {
    pub fn new(n: usize, extent: f64) -> Result<Self> {
        Self::with_fine_factor(n, extent, 1)
    }

    pub fn with_fine_factor(n: usize, extent: f64, fine_factor: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGrid(format!("need n >= 3, got {n}")));
        }
        if !(extent > 0.0 && extent.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "extent must be positive, got {extent}"
            )));
        }
        if fine_factor < 1 {
            return Err(Error::InvalidGrid("fine_factor must be >= 1".into()));
        }
        Ok(Self {
            n,
            extent,
            fine_factor,
        })
    }

    /// The data-synthesis grid with `n * fine_factor` nodes per side.
    pub fn fine(&self) -> Self {
        Self {
            n: self.n * self.fine_factor,
            extent: self.extent,
            fine_factor: 1,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn fine_factor(&self) -> usize {
        self.fine_factor
    }

    pub fn dx(&self) -> f64 {
        self.extent / (self.n - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        self.dx()
    }

    pub fn num_nodes(&self) -> usize {
        self.n * self.n
    }

    pub fn num_h_edges(&self) -> usize {
        self.n * (self.n - 1)
    }

    pub fn num_edges(&self) -> usize {
        2 * self.num_h_edges()
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        i + self.n * j
    }

    #[inline]
    pub fn node_ij(&self, k: usize) -> (usize, usize) {
        (k % self.n, k / self.n)
    }

    pub fn node_xy(&self, k: usize) -> (f64, f64) {
        let (i, j) = self.node_ij(k);
        (i as f64 * self.dx(), j as f64 * self.dy())
    }

    pub fn node_coords(&self) -> Vec<(f64, f64)> {
        (0..self.num_nodes()).map(|k| self.node_xy(k)).collect()
    }

    pub fn is_boundary(&self, k: usize) -> bool {
        let (i, j) = self.node_ij(k);
        i == 0 || j == 0 || i == self.n - 1 || j == self.n - 1
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&k| !self.is_boundary(k))
            .collect()
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&k| self.is_boundary(k))
            .collect()
    }

    /// Endpoints `(a, b)` of edge `e`, with `b` the node in the positive direction.
    #[inline]
    pub fn edge_nodes(&self, e: usize) -> (usize, usize) {
        let n = self.n;
        let nh = self.num_h_edges();
        if e < nh {
            let (i, j) = (e % (n - 1), e / (n - 1));
            (self.node(i, j), self.node(i + 1, j))
        } else {
            let v = e - nh;
            let (i, j) = (v % n, v / n);
            (self.node(i, j), self.node(i, j + 1))
        }
    }

    pub fn is_horizontal(&self, e: usize) -> bool {
        e < self.num_h_edges()
    }

    pub fn edge_midpoint(&self, e: usize) -> (f64, f64) {
        let (a, b) = self.edge_nodes(e);
        let (xa, ya) = self.node_xy(a);
        let (xb, yb) = self.node_xy(b);
        (0.5 * (xa + xb), 0.5 * (ya + yb))
    }

    /// True for edges running along the boundary (both ends on the same side).
    pub fn is_tangential_boundary_edge(&self, e: usize) -> bool {
        let (a, _) = self.edge_nodes(e);
        let (i, j) = self.node_ij(a);
        if self.is_horizontal(e) {
            j == 0 || j == self.n - 1
        } else {
            i == 0 || i == self.n - 1
        }
    }

    /// Area attached to each edge component in the midpoint quadrature of
    /// `\int f dx`: `dx dy`, halved for edges lying on the boundary.
    pub fn edge_quadrature_weights(&self) -> Vec<f64> {
        let cell = self.dx() * self.dy();
        (0..self.num_edges())
            .map(|e| {
                if self.is_tangential_boundary_edge(e) {
                    0.5 * cell
                } else {
                    cell
                }
            })
            .collect()
    }

    /// Trapezoidal weights for node-based quadrature over the square.
    pub fn node_quadrature_weights(&self) -> Vec<f64> {
        let cell = self.dx() * self.dy();
        (0..self.num_nodes())
            .map(|k| {
                let (i, j) = self.node_ij(k);
                let wi = if i == 0 || i == self.n - 1 { 0.5 } else { 1.0 };
                let wj = if j == 0 || j == self.n - 1 { 0.5 } else { 1.0 };
                cell * wi * wj
            })
            .collect()
    }

    /// Distance from node `k` to the nearest side of the square.
    pub fn distance_to_boundary(&self, k: usize) -> f64 {
        let (x, y) = self.node_xy(k);
        let l = self.extent;
        x.min(l - x).min(y).min(l - y)
    }

    /// Nodes at distance `<= width` from the boundary.
    pub fn band_mask(&self, width: f64) -> Vec<bool> {
        let tol = 1e-9 * self.extent;
        (0..self.num_nodes())
            .map(|k| self.distance_to_boundary(k) <= width + tol)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OperatorRole {
    D1,
    D2,
    D,
    N1,
    N2,
    E1,
    E2,
    E12,
    Other,
}

#[derive(Clone, Debug)]
pub struct SparseOperator {
    pub role: OperatorRole,
    pub matrix: CsrMatrix,
}

impl std::ops::Deref for SparseOperator {
    type Target = CsrMatrix;
    fn deref(&self) -> &CsrMatrix {
        &self.matrix
    }
}

/// Forward differences `D1` (horizontal edges x nodes), `D2` (vertical edges
/// x nodes) and their stack `D`.
pub fn build_difference_operators(
    grid: &GridSpec,
) -> (SparseOperator, SparseOperator, SparseOperator) {
    let nh = grid.num_h_edges();
    let inv = 1.0 / grid.dx();
    let stencil = |offset: usize, count: usize| {
        let mut t = Vec::with_capacity(2 * count);
        for r in 0..count {
            let (a, b) = grid.edge_nodes(r + offset);
            t.push((r, a, -inv));
            t.push((r, b, inv));
        }
        CsrMatrix::from_triplets(count, grid.num_nodes(), &t)
    };
    let d1 = stencil(0, nh);
    let d2 = stencil(nh, nh);
    let d = CsrMatrix::vstack(&[&d1, &d2]);
    (
        SparseOperator {
            role: OperatorRole::D1,
            matrix: d1,
        },
        SparseOperator {
            role: OperatorRole::D2,
            matrix: d2,
        },
        SparseOperator {
            role: OperatorRole::D,
            matrix: d,
        },
    )
}

/// `phi(A) = Diag(|A^T| 1)^{-1} |A^T|`: the row-normalised transpose of `|A|`.
pub fn phi(a: &CsrMatrix) -> Result<CsrMatrix> {
    let abs_t = a.abs().transpose();
    let sums = abs_t.row_sums();
    if let Some(row) = sums.iter().position(|&s| s == 0.0) {
        return Err(Error::DegenerateInterpolation { row });
    }
    let inv: Vec<f64> = sums.iter().map(|s| 1.0 / s).collect();
    Ok(abs_t.scale_rows(&inv))
}

/// All difference and interpolation operators of a grid.
///
/// Because `D` maps nodes to edges here, node-valued interpolators come from
/// `phi(D_k)` and edge-valued ones from `phi(D_k^T)`.
#[derive(Clone, Debug)]
pub struct GridOperators {
    pub grid: GridSpec,
    pub d1: SparseOperator,
    pub d2: SparseOperator,
    pub d: SparseOperator,
    pub n1: SparseOperator,
    pub n2: SparseOperator,
    pub e1: SparseOperator,
    pub e2: SparseOperator,
    pub e12: SparseOperator,
}

impl GridOperators {
    pub fn new(grid: &GridSpec) -> Result<Self> {
        let (d1, d2, d) = build_difference_operators(grid);
        let (n1, n2, e1, e2, e12) = build_interpolators(&d1, &d2)?;
        Ok(Self {
            grid: *grid,
            d1,
            d2,
            d,
            n1,
            n2,
            e1,
            e2,
            e12,
        })
    }
}

pub fn build_interpolators(
    d1: &CsrMatrix,
    d2: &CsrMatrix,
) -> Result<(
    SparseOperator,
    SparseOperator,
    SparseOperator,
    SparseOperator,
    SparseOperator,
)> {
    let n1 = phi(d1)?;
    let n2 = phi(d2)?;
    let e1 = phi(&d1.transpose())?;
    let e2 = phi(&d2.transpose())?;
    let e12 = CsrMatrix::vstack(&[&e1, &e2]);
    let op = |role, matrix| SparseOperator { role, matrix };
    Ok((
        op(OperatorRole::N1, n1),
        op(OperatorRole::N2, n2),
        op(OperatorRole::E1, e1),
        op(OperatorRole::E2, e2),
        op(OperatorRole::E12, e12),
    ))
}

/// Insulating gaps on each side of the square, as open intervals in the
/// side coordinate (x on bottom/top, y on left/right).
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GapIntervals {
    #[serde(default)]
    pub bottom: Vec<(f64, f64)>,
    #[serde(default)]
    pub top: Vec<(f64, f64)>,
    #[serde(default)]
    pub left: Vec<(f64, f64)>,
    #[serde(default)]
    pub right: Vec<(f64, f64)>,
}

impl GapIntervals {
    pub fn none() -> Self {
        Self::default()
    }

    /// One gap of the given width centred on every side. With `L = 10` and
    /// width 1 the electrodes cover `[0, 4.5] u [5.5, 10]` on each side.
    pub fn centered(extent: f64, width: f64) -> Self {
        let iv = vec![(0.5 * (extent - width), 0.5 * (extent + width))];
        Self {
            bottom: iv.clone(),
            top: iv.clone(),
            left: iv.clone(),
            right: iv,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.bottom.is_empty()
            && self.top.is_empty()
            && self.left.is_empty()
            && self.right.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPartition {
    /// Electrode (Dirichlet) nodes, ascending.
    pub electrodes: Vec<usize>,
    /// No-flux gap nodes, ascending.
    pub gaps: Vec<usize>,
}

impl BoundaryPartition {
    pub fn full_dirichlet(grid: &GridSpec) -> Self {
        Self {
            electrodes: grid.boundary_nodes(),
            gaps: Vec::new(),
        }
    }

    pub fn gap_mask(&self, grid: &GridSpec) -> Vec<bool> {
        let mut m = vec![false; grid.num_nodes()];
        for &k in &self.gaps {
            m[k] = true;
        }
        m
    }
}

/// Splits boundary nodes into electrode nodes and gap nodes. Electrode
/// intervals are closed, so a node sitting exactly on a gap end point is an
/// electrode node. A corner is a gap node only when it lies in a gap on both
/// of its sides.
pub fn classify_boundary(grid: &GridSpec, gaps: &GapIntervals) -> Result<BoundaryPartition> {
    let l = grid.extent();
    let tol = 1e-9 * l;
    for (name, side) in [
        ("bottom", &gaps.bottom),
        ("top", &gaps.top),
        ("left", &gaps.left),
        ("right", &gaps.right),
    ] {
        let mut sorted = side.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(a, b) in &sorted {
            if !(a.is_finite() && b.is_finite()) || a >= b {
                return Err(Error::InvalidIntervals(format!(
                    "{name}: inverted interval ({a}, {b})"
                )));
            }
            if a < -tol || b > l + tol {
                return Err(Error::InvalidIntervals(format!(
                    "{name}: ({a}, {b}) outside [0, {l}]"
                )));
            }
        }
        for w in sorted.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::InvalidIntervals(format!(
                    "{name}: overlapping intervals ({}, {}) and ({}, {})",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
    }

    let in_gap = |ivs: &[(f64, f64)], s: f64| ivs.iter().any(|&(a, b)| s > a + tol && s < b - tol);
    let last = grid.n() - 1;
    let mut electrodes = Vec::new();
    let mut gap_nodes = Vec::new();
    for k in grid.boundary_nodes() {
        let (i, j) = grid.node_ij(k);
        let (x, y) = grid.node_xy(k);
        // A node is a gap node if it is in a gap on every side it belongs to.
        let mut sides = Vec::with_capacity(2);
        if j == 0 {
            sides.push(in_gap(&gaps.bottom, x));
        }
        if j == last {
            sides.push(in_gap(&gaps.top, x));
        }
        if i == 0 {
            sides.push(in_gap(&gaps.left, y));
        }
        if i == last {
            sides.push(in_gap(&gaps.right, y));
        }
        if sides.iter().all(|&g| g) {
            gap_nodes.push(k);
        } else {
            electrodes.push(k);
        }
    }
    Ok(BoundaryPartition {
        electrodes,
        gaps: gap_nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n, 10.0).unwrap()
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(GridSpec::new(2, 10.0).is_err());
        assert!(GridSpec::new(5, 0.0).is_err());
        assert!(GridSpec::with_fine_factor(5, 1.0, 0).is_err());
    }

    #[test]
    fn operator_shapes() {
        let g = grid(5);
        let ops = GridOperators::new(&g).unwrap();
        assert_eq!(ops.d1.shape(), (20, 25));
        assert_eq!(ops.d.shape(), (40, 25));
        assert_eq!(ops.n1.shape(), (25, 20));
        assert_eq!(ops.e12.shape(), (40, 25));
    }

    #[test]
    fn constant_has_zero_difference() {
        let g = grid(6);
        let (d1, d2, _) = build_difference_operators(&g);
        let c = vec![3.7; g.num_nodes()];
        assert!(d1.apply(&c).iter().all(|v| v.abs() < 1e-14));
        assert!(d2.apply(&c).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn linear_field_differences() {
        let g = grid(7);
        let (d1, d2, _) = build_difference_operators(&g);
        let x: Vec<f64> = g.node_coords().iter().map(|p| p.0).collect();
        for v in d1.apply(&x) {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-12);
        }
        for v in d2.apply(&x) {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn three_node_hand_example() {
        // Rows (0, 1, 4) along x with dx = 5.
        let g = grid(3);
        let (d1, _, _) = build_difference_operators(&g);
        let psi: Vec<f64> = (0..9).map(|k| [0.0, 1.0, 4.0][k % 3]).collect();
        let out = d1.apply(&psi);
        for row in out.chunks(2) {
            assert_abs_diff_eq!(row[0], 0.2, epsilon = 1e-15);
            assert_abs_diff_eq!(row[1], 0.6, epsilon = 1e-15);
        }
    }

    #[test]
    fn phi_hand_example() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, -1.0), (1, 1, 2.0)]);
        let p = phi(&a).unwrap().to_dense();
        assert_abs_diff_eq!(p[0][0], 1.0);
        assert_abs_diff_eq!(p[0][1], 0.0);
        assert_abs_diff_eq!(p[1][0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1][1], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn phi_of_signed_permutation_averages() {
        let a = CsrMatrix::from_triplets(3, 3, &[(0, 1, -1.0), (1, 2, 1.0), (2, 0, -1.0)]);
        let p = phi(&a).unwrap();
        assert_eq!(p.row_sums(), vec![1.0; 3]);
        assert_eq!(p.get(1, 0), 1.0);
    }

    #[test]
    fn phi_rejects_empty_column() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 1.0)]);
        assert!(matches!(
            phi(&a),
            Err(Error::DegenerateInterpolation { row: 1 })
        ));
    }

    #[test]
    fn interpolators_preserve_constants_and_are_stochastic() {
        let g = grid(6);
        let ops = GridOperators::new(&g).unwrap();
        for op in [&ops.n1, &ops.n2, &ops.e1, &ops.e2, &ops.e12] {
            for (r, s) in op.row_sums().iter().enumerate() {
                assert!((s - 1.0).abs() < 1e-12, "{:?} row {r} sums to {s}", op.role);
            }
            assert!(op.triplets().iter().all(|t| t.2 >= 0.0));
        }
        let c = vec![2.5; g.num_nodes()];
        let back = ops.n1.apply(&ops.e1.apply(&c));
        assert!(back.iter().all(|v| (v - 2.5).abs() < 1e-14));
        let ce = vec![-1.5; g.num_h_edges()];
        assert!(ops.n1.apply(&ce).iter().all(|v| (v + 1.5).abs() < 1e-14));
    }

    #[test]
    fn e1_gives_midpoints() {
        let g = grid(3);
        let ops = GridOperators::new(&g).unwrap();
        let x: Vec<f64> = g.node_coords().iter().map(|p| p.0).collect();
        let mid = ops.e1.apply(&x);
        for row in mid.chunks(2) {
            assert_abs_diff_eq!(row[0], 2.5);
            assert_abs_diff_eq!(row[1], 7.5);
        }
    }

    #[test]
    fn no_gaps_is_full_dirichlet() {
        let g = grid(8);
        let p = classify_boundary(&g, &GapIntervals::none()).unwrap();
        assert_eq!(p, BoundaryPartition::full_dirichlet(&g));
    }

    #[test]
    fn centred_gaps_on_fine_grid() {
        let g = GridSpec::new(101, 10.0).unwrap();
        let p = classify_boundary(&g, &GapIntervals::centered(10.0, 1.0)).unwrap();
        assert_eq!(p.gaps.len(), 4 * 9);
        let bottom: Vec<f64> = p
            .gaps
            .iter()
            .filter(|&&k| g.node_ij(k).1 == 0)
            .map(|&k| g.node_xy(k).0)
            .collect();
        assert_eq!(bottom.len(), 9);
        assert_abs_diff_eq!(bottom[0], 4.6, epsilon = 1e-9);
        assert_abs_diff_eq!(bottom[8], 5.4, epsilon = 1e-9);
        // Corners are electrode nodes.
        for k in [0, 100, 10100, 10200] {
            assert!(p.electrodes.contains(&k));
        }
        assert_eq!(p.electrodes.len() + p.gaps.len(), g.boundary_nodes().len());
    }

    #[test]
    fn interval_validation() {
        let g = grid(11);
        let mut bad = GapIntervals::none();
        bad.left = vec![(3.0, 2.0)];
        assert!(classify_boundary(&g, &bad).is_err());
        bad.left = vec![(1.0, 4.0), (3.0, 5.0)];
        assert!(classify_boundary(&g, &bad).is_err());
        bad.left = vec![(9.0, 11.0)];
        assert!(classify_boundary(&g, &bad).is_err());
    }

    #[test]
    fn quadrature_weights_sum_to_area() {
        let g = grid(9);
        let a: f64 = g.edge_quadrature_weights()[..g.num_h_edges()].iter().sum();
        assert_abs_diff_eq!(a, 100.0, epsilon = 1e-10);
        let b: f64 = g.node_quadrature_weights().iter().sum();
        assert_abs_diff_eq!(b, 100.0, epsilon = 1e-10);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn affine_fields_have_constant_differences(
                n in 3usize..12, a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0
            ) {
                let g = GridSpec::new(n, 10.0).unwrap();
                let (d1, d2, _) = build_difference_operators(&g);
                let f: Vec<f64> = g.node_coords().iter().map(|&(x, y)| a * x + b * y + c).collect();
                for v in d1.apply(&f) { prop_assert!((v - a).abs() < 1e-10); }
                for v in d2.apply(&f) { prop_assert!((v - b).abs() < 1e-10); }
            }

            #[test]
            fn partition_is_exhaustive(n in 3usize..40, w in 0.1f64..3.0) {
                let g = GridSpec::new(n, 10.0).unwrap();
                prop_assert_eq!(g.interior_nodes().len() + g.boundary_nodes().len(), n * n);
                let p = classify_boundary(&g, &GapIntervals::centered(10.0, w)).unwrap();
                let mut all: Vec<usize> = p.electrodes.iter().chain(&p.gaps).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, g.boundary_nodes());
            }
        }
    }
}

//! End-to-end synthetic experiments: truth on the fine grid, data on the
//! coarse grid, reconstruction on the coarse grid.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::forward::{BoundarySpec, ConductivityField, ElectrodeFunction, LaplaceSolver};
use crate::grid::{classify_boundary, BoundaryPartition, GapIntervals, GridOperators, GridSpec};
use crate::inverse::{restrict, InverseProblem, ReconstructionConfig, ReconstructionState};
use crate::measure::{
    deterministic_measure, stochastic_measure, ExperimentParams, MeasurementSet, NoiseScaling,
};

/// Electrode layout plus one electrode function per experiment.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoundarySet {
    /// Width of the insulating gap centred on each side; `None` means the
    /// whole boundary is one grounded electrode set.
    #[serde(default)]
    pub gap_width: Option<f64>,
    pub functions: Vec<ElectrodeFunction>,
}

impl BoundarySet {
    pub fn full(functions: Vec<ElectrodeFunction>) -> Self {
        Self {
            gap_width: None,
            functions,
        }
    }

    pub fn with_gaps(width: f64, functions: Vec<ElectrodeFunction>) -> Self {
        Self {
            gap_width: Some(width),
            functions,
        }
    }

    /// `e1 = (x + y)/10`, `e2 = (1 + x - y)/10`.
    pub fn affine_pair() -> Self {
        Self::full(vec![
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
        ])
    }

    pub fn is_complex(&self) -> bool {
        self.functions.iter().any(|f| {
            matches!(
                f,
                ElectrodeFunction::GTilde { .. } | ElectrodeFunction::HTilde { .. }
            )
        })
    }

    pub fn partition(&self, grid: &GridSpec) -> Result<BoundaryPartition> {
        match self.gap_width {
            None => Ok(BoundaryPartition::full_dirichlet(grid)),
            Some(w) => {
                if !(w > 0.0 && w < grid.extent()) {
                    return Err(Error::InvalidIntervals(format!(
                        "gap width {w} outside (0, {})",
                        grid.extent()
                    )));
                }
                classify_boundary(grid, &GapIntervals::centered(grid.extent(), w))
            }
        }
    }

    pub fn specs(&self, grid: &GridSpec) -> Result<Vec<BoundarySpec>> {
        if self.functions.is_empty() {
            return Err(Error::InvalidBoundary("no electrode functions".into()));
        }
        let partition = self.partition(grid)?;
        self.functions
            .iter()
            .map(|f| BoundarySpec::from_function(grid, partition.clone(), f))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum DataModel {
    Deterministic,
    Stochastic {
        params: ExperimentParams,
        #[serde(default)]
        scaling: NoiseScaling,
        seed: u64,
    },
}

/// Fine-grid truth restricted to the coarse grid.
pub fn restrict_conductivity(
    truth: &ConductivityField,
    coarse: &GridSpec,
) -> Result<ConductivityField> {
    let fine = truth.grid();
    ConductivityField::new(
        *coarse,
        restrict(fine, truth.sigma_re(), coarse),
        restrict(fine, truth.sigma_im(), coarse),
    )
}

/// Solves the forward problems for `truth` on its own grid and samples the
/// internal data at the nodes of `coarse`.
pub fn synthesize(
    truth: &ConductivityField,
    coarse: &GridSpec,
    boundary: &BoundarySet,
    a: f64,
    model: &DataModel,
) -> Result<MeasurementSet> {
    let fine = *truth.grid();
    let ops = GridOperators::new(&fine)?;
    let bcs = boundary.specs(&fine)?;
    let solver = LaplaceSolver::new(truth, &ops, &bcs[0].partition)?;
    let potentials = solver.solve_many(&bcs)?;
    match *model {
        DataModel::Deterministic => deterministic_measure(truth, &potentials, coarse, a, &ops),
        DataModel::Stochastic {
            params,
            scaling,
            seed,
        } => stochastic_measure(truth, &potentials, coarse, a, params, scaling, seed, &ops),
    }
}

/// Gauss-Newton reconstruction from `data`, with the conductivity known on
/// the boundary band from `known` and the band mean as starting value.
pub fn reconstruct(
    data: &MeasurementSet,
    boundary: &BoundarySet,
    known: &ConductivityField,
    config: &ReconstructionConfig,
) -> Result<ReconstructionState> {
    let grid = data.grid;
    let ops = GridOperators::new(&grid)?;
    let bcs = boundary.specs(&grid)?;
    let problem = InverseProblem::new(ops, config.kind, &bcs, data, known, config.boundary_band)?;
    let sigma0 = problem.band_mean();
    let sigma0 = if problem.kind() == crate::inverse::ReconstructionKind::Real {
        Complex64::new(sigma0.re, 0.0)
    } else {
        sigma0
    };
    let initial = problem.initial_guess(sigma0)?;
    problem.gauss_newton(initial, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inverse::relative_l2_error;
    use crate::phantom::Phantom;

    #[test]
    fn boundary_sets() {
        let g = GridSpec::new(21, 10.0).unwrap();
        let b = BoundarySet::with_gaps(1.0, vec![ElectrodeFunction::G { order: 1 }]);
        let specs = b.specs(&g).unwrap();
        assert_eq!(specs.len(), 1);
        assert!(!specs[0].partition.gaps.is_empty());
        assert!(BoundarySet::with_gaps(20.0, vec![]).partition(&g).is_err());
        assert!(BoundarySet::full(vec![]).specs(&g).is_err());
        assert!(!BoundarySet::affine_pair().is_complex());
        let e = BoundarySet::affine_pair().specs(&g).unwrap();
        let k = g.node(20, 0);
        assert!((e[0].values[k].re - 1.0).abs() < 1e-12);
        assert!((e[1].values[k].re - 1.1).abs() < 1e-12);
    }

    #[test]
    fn small_round_trip() {
        let coarse = GridSpec::with_fine_factor(16, 10.0, 2).unwrap();
        let truth = Phantom::TwoBumps.field(&coarse.fine()).unwrap();
        let bset = BoundarySet::affine_pair();
        let data = synthesize(&truth, &coarse, &bset, 0.5, &DataModel::Deterministic).unwrap();
        let known = restrict_conductivity(&truth, &coarse).unwrap();
        let st = reconstruct(&data, &bset, &known, &ReconstructionConfig::real()).unwrap();
        let err = relative_l2_error(&st.s_re, known.sigma_re(), &coarse.interior_nodes());
        let start = {
            let c = vec![st.s_re[0]; coarse.num_nodes()];
            relative_l2_error(&c, known.sigma_re(), &coarse.interior_nodes())
        };
        assert!(err < start, "{err} vs {start}");
    }
}

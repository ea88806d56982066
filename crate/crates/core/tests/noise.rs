use thermal_eit::experiment::{
    reconstruct, restrict_conductivity, synthesize, BoundarySet, DataModel,
};
use thermal_eit::inverse::relative_l2_error;
use thermal_eit::{ExperimentParams, GridSpec, NoiseScaling, Phantom, ReconstructionConfig};

fn model(realizations: usize, seed: u64) -> DataModel {
    DataModel::Stochastic {
        params: ExperimentParams {
            t0: 0.01,
            realizations,
            ..Default::default()
        },
        scaling: NoiseScaling::Physical,
        seed,
    }
}

// Data and reconstruction error both shrink when the ensemble grows.
#[test]
fn more_realizations_reduce_error() {
    let coarse = GridSpec::with_fine_factor(20, 10.0, 2).unwrap();
    let truth = Phantom::TwoBumps.field(&coarse.fine()).unwrap();
    let known = restrict_conductivity(&truth, &coarse).unwrap();
    let boundary = BoundarySet::affine_pair();
    let a = 0.1;
    let exact = synthesize(&truth, &coarse, &boundary, a, &DataModel::Deterministic).unwrap();
    let all: Vec<usize> = (0..coarse.num_nodes()).collect();

    let mut data_err = Vec::new();
    let mut recon_err = Vec::new();
    for m in [300, 3000] {
        let (mut d, mut r) = (0.0, 0.0);
        for seed in 1..=3 {
            let data = synthesize(&truth, &coarse, &boundary, a, &model(m, seed)).unwrap();
            d += relative_l2_error(&data.data[0], &exact.data[0], &all);
            let st = reconstruct(&data, &boundary, &known, &ReconstructionConfig::real()).unwrap();
            r += relative_l2_error(&st.s_re, known.sigma_re(), &coarse.interior_nodes());
        }
        data_err.push(d / 3.0);
        recon_err.push(r / 3.0);
    }
    eprintln!("data error {data_err:?}, reconstruction error {recon_err:?}");
    // Monte Carlo error scales as 1/sqrt(M); the ensembles differ by 10.
    let ratio = data_err[0] / data_err[1];
    assert!((2.5..4.0).contains(&ratio), "ratio {ratio}");
    assert!(recon_err[1] < recon_err[0]);
}

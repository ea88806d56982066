//! TOML experiment description and its validation.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use thermal_eit::experiment::BoundarySet;
use thermal_eit::inverse::{ArmijoParams, ReconstructionConfig, ReconstructionKind};
use thermal_eit::measure::{check_sampling, ExperimentParams, NoiseScaling};
use thermal_eit::{ElectrodeFunction, GridSpec, Phantom};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Forward,
    Measure,
    SymbolMap,
    Reconstruct,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Forward => "forward",
            Stage::Measure => "measure",
            Stage::SymbolMap => "symbol-map",
            Stage::Reconstruct => "reconstruct",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Coarse nodes per side.
    pub n: usize,
    /// Side length, cm.
    pub extent: f64,
    pub fine_factor: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n: 60,
            extent: 10.0,
            fine_factor: 2,
        }
    }
}

/// Ground truth on the fine grid: a built-in phantom or CSV grids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConductivityConfig {
    #[serde(default)]
    pub phantom: Option<String>,
    #[serde(default)]
    pub csv_re: Option<PathBuf>,
    #[serde(default)]
    pub csv_im: Option<PathBuf>,
}

impl Default for ConductivityConfig {
    fn default() -> Self {
        Self {
            phantom: Some("two-bumps".into()),
            csv_re: None,
            csv_im: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundaryConfig {
    pub gap_width: Option<f64>,
    /// Electrode functions such as `g1`, `ht2` or `affine:0,0.1,0.1`.
    pub functions: Vec<String>,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        Self {
            gap_width: None,
            functions: vec!["affine:0,0.1,0.1".into(), "affine:0.1,0.1,-0.1".into()],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Deterministic,
    Stochastic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasureConfig {
    pub model: ModelKind,
    /// Heating pattern width, cm^2.
    pub a: f64,
    pub t0: f64,
    pub delta_omega: f64,
    /// cm.
    pub delta_z: f64,
    pub realizations: usize,
    pub omega: f64,
    pub scaling: NoiseScaling,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        let p = ExperimentParams::default();
        Self {
            model: ModelKind::Deterministic,
            a: 0.01,
            t0: p.t0,
            delta_omega: p.delta_omega,
            delta_z: p.delta_z,
            realizations: p.realizations,
            omega: p.omega,
            scaling: NoiseScaling::default(),
        }
    }
}

impl MeasureConfig {
    pub fn params(&self) -> ExperimentParams {
        ExperimentParams {
            t0: self.t0,
            delta_omega: self.delta_omega,
            delta_z: self.delta_z,
            realizations: self.realizations,
            omega: self.omega,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Real,
    Complex,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SymbolConfig {
    pub kind: Kind,
    pub directions: usize,
}

impl Default for SymbolConfig {
    fn default() -> Self {
        Self {
            kind: Kind::Real,
            directions: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructConfig {
    pub kind: Kind,
    /// Defaults by kind and electrode layout when absent.
    pub gamma: Option<f64>,
    pub step_tol: f64,
    pub max_iters: usize,
    /// cm.
    pub band: f64,
    /// `[re, im]`; the mean of the known band values when absent.
    pub sigma0: Option<[f64; 2]>,
    pub armijo: ArmijoParams,
    /// Directory written by a previous `measure` stage; the current run's
    /// measurements when absent.
    pub data: Option<PathBuf>,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        let r = ReconstructionConfig::real();
        Self {
            kind: Kind::Real,
            gamma: None,
            step_tol: r.step_tol,
            max_iters: r.max_iters,
            band: r.boundary_band,
            sigma0: None,
            armijo: r.armijo,
            data: None,
        }
    }
}

impl ReconstructConfig {
    pub fn solver_config(&self, gaps: bool) -> ReconstructionConfig {
        let base = match (self.kind, gaps) {
            (Kind::Complex, _) => ReconstructionConfig::complex(),
            (Kind::Real, true) => ReconstructionConfig::mixed(),
            (Kind::Real, false) => ReconstructionConfig::real(),
        };
        ReconstructionConfig {
            kind: match self.kind {
                Kind::Real => ReconstructionKind::Real,
                Kind::Complex => ReconstructionKind::Complex,
            },
            gamma: self.gamma.unwrap_or(base.gamma),
            step_tol: self.step_tol,
            max_iters: self.max_iters,
            boundary_band: self.band,
            armijo: self.armijo,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub pipeline: Vec<Stage>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub conductivity: ConductivityConfig,
    #[serde(default)]
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub symbol: SymbolConfig,
    #[serde(default)]
    pub reconstruct: ReconstructConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: default_out(),
            pipeline: Vec::new(),
            grid: GridConfig::default(),
            conductivity: ConductivityConfig::default(),
            boundary: BoundaryConfig::default(),
            measure: MeasureConfig::default(),
            symbol: SymbolConfig::default(),
            reconstruct: ReconstructConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses a TOML file; relative paths inside are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.out);
        cfg.conductivity.csv_re.as_mut().map(fix);
        cfg.conductivity.csv_im.as_mut().map(fix);
        cfg.reconstruct.data.as_mut().map(fix);
        Ok(cfg)
    }

    pub fn coarse_grid(&self) -> Result<GridSpec> {
        Ok(GridSpec::with_fine_factor(
            self.grid.n,
            self.grid.extent,
            self.grid.fine_factor,
        )?)
    }

    pub fn boundary_set(&self) -> Result<BoundarySet> {
        let functions = self
            .boundary
            .functions
            .iter()
            .map(|f| ElectrodeFunction::parse(f))
            .collect::<thermal_eit::Result<Vec<_>>>()?;
        Ok(BoundarySet {
            gap_width: self.boundary.gap_width,
            functions,
        })
    }

    /// Stages in dependency order, without duplicates.
    pub fn ordered_stages(&self) -> Vec<Stage> {
        let mut s = self.pipeline.clone();
        s.sort();
        s.dedup();
        s
    }

    /// Checks every parameter the selected stages use, before any compute.
    pub fn validate(&self) -> Result<()> {
        if self.pipeline.is_empty() {
            bail!("pipeline: must list at least one stage (forward, measure, symbol-map, reconstruct)");
        }
        let stages = self.ordered_stages();
        let grid = self.coarse_grid().context("grid")?;
        let fine = grid.fine();

        let c = &self.conductivity;
        match (&c.phantom, &c.csv_re) {
            (Some(_), Some(_)) => bail!("conductivity: give either phantom or csv_re, not both"),
            (None, None) => bail!("conductivity: one of phantom or csv_re is required"),
            (Some(p), None) => {
                if c.csv_im.is_some() {
                    bail!("conductivity.csv_im: only allowed together with csv_re");
                }
                Phantom::parse(p).context("conductivity.phantom")?;
            }
            (None, Some(re)) => {
                for (field, path) in [
                    ("conductivity.csv_re", Some(re)),
                    ("conductivity.csv_im", c.csv_im.as_ref()),
                ] {
                    if let Some(path) = path {
                        if !path.is_file() {
                            bail!("{field}: file {} does not exist", path.display());
                        }
                    }
                }
            }
        }

        let bset = self.boundary_set().context("boundary.functions")?;
        if bset.functions.is_empty() {
            bail!("boundary.functions: at least one electrode function is required");
        }
        bset.partition(&fine).context("boundary.gap_width")?;

        if stages.contains(&Stage::Measure) {
            let m = &self.measure;
            m.params().validate().context("measure")?;
            if !(m.a > 0.0 && m.a.is_finite()) {
                bail!("measure.a: must be positive, got {}", m.a);
            }
            check_sampling(&fine, m.a).context("measure.a")?;
            if m.model == ModelKind::Stochastic && m.realizations < 2 {
                bail!("measure.realizations: stochastic data need at least 2");
            }
        }
        if stages.contains(&Stage::SymbolMap) {
            if self.symbol.directions < 4 {
                bail!(
                    "symbol.directions: need at least 4, got {}",
                    self.symbol.directions
                );
            }
            if self.symbol.kind == Kind::Real && bset.is_complex() {
                bail!("symbol.kind: complex electrode functions need kind = \"complex\"");
            }
        }
        if stages.contains(&Stage::Reconstruct) {
            let r = &self.reconstruct;
            r.solver_config(bset.gap_width.is_some())
                .validate()
                .context("reconstruct")?;
            if let Some([re, im]) = r.sigma0 {
                if !(re > 0.0) || im < 0.0 || (r.kind == Kind::Real && im != 0.0) {
                    bail!(
                        "reconstruct.sigma0: [{re}, {im}] is not admissible for kind {:?}",
                        r.kind
                    );
                }
            }
            if r.kind == Kind::Real && bset.is_complex() {
                bail!("reconstruct.kind: complex electrode functions need kind = \"complex\"");
            }
            match &r.data {
                Some(dir) => {
                    if !dir.join("metadata.json").is_file() {
                        bail!("reconstruct.data: {} has no metadata.json", dir.display());
                    }
                }
                None => {
                    if !stages.contains(&Stage::Measure) {
                        bail!("reconstruct.data: required when the pipeline has no measure stage");
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_pipeline(p: &[Stage]) -> ExperimentConfig {
        ExperimentConfig {
            pipeline: p.to_vec(),
            ..Default::default()
        }
    }

    #[test]
    fn defaults_validate() {
        with_pipeline(&[Stage::Reconstruct, Stage::Measure])
            .validate()
            .unwrap();
        assert_eq!(
            with_pipeline(&[
                Stage::Reconstruct,
                Stage::Forward,
                Stage::Measure,
                Stage::Forward
            ])
            .ordered_stages(),
            vec![Stage::Forward, Stage::Measure, Stage::Reconstruct]
        );
    }

    #[test]
    fn errors_name_fields() {
        let err = |c: ExperimentConfig| format!("{:#}", c.validate().unwrap_err());
        assert!(err(with_pipeline(&[])).starts_with("pipeline:"));

        let mut c = with_pipeline(&[Stage::Measure]);
        c.grid.n = 20;
        assert!(err(c).starts_with("measure.a"));

        let mut c = with_pipeline(&[Stage::Forward]);
        c.conductivity.phantom = Some("blob".into());
        assert!(err(c).starts_with("conductivity.phantom"));

        let mut c = with_pipeline(&[Stage::Forward]);
        c.conductivity = ConductivityConfig {
            phantom: None,
            csv_re: Some("/nonexistent.csv".into()),
            csv_im: None,
        };
        assert!(err(c).starts_with("conductivity.csv_re"));

        let mut c = with_pipeline(&[Stage::Reconstruct]);
        assert!(err(c.clone()).starts_with("reconstruct.data"));
        c.pipeline.push(Stage::Measure);
        c.reconstruct.step_tol = 0.0;
        assert!(err(c).starts_with("reconstruct"));

        let mut c = with_pipeline(&[Stage::Forward]);
        c.boundary.functions = vec!["q3".into()];
        assert!(err(c).starts_with("boundary.functions"));
    }

    #[test]
    fn toml_round_trip() {
        let src = r#"
            seed = 7
            pipeline = ["measure", "reconstruct"]
            [grid]
            n = 60
            [boundary]
            gap_width = 1.0
            functions = ["g1", "h1"]
            [measure]
            model = "stochastic"
            a = 0.01
            t0 = 0.01
            delta_omega = 62831.85307179586
            delta_z = 0.1
            realizations = 1000
            omega = 62831.85307179586
            scaling = "physical"
        "#;
        let c: ExperimentConfig = toml::from_str(src).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.measure.model, ModelKind::Stochastic);
        let back: ExperimentConfig = toml::from_str(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(toml::from_str::<ExperimentConfig>("[grid]\nn = 10\nbogus = 1\n").is_err());
    }
}

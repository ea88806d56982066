//! Pipeline stages, their on-disk outputs and the content-hash cache.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use thermal_eit::experiment::{restrict_conductivity, synthesize, BoundarySet, DataModel};
use thermal_eit::forward::{internal_functional, solve_many};
use thermal_eit::inverse::InverseProblem;
use thermal_eit::io::{read_grid_csv, write_grid_csv, write_pgm};
use thermal_eit::measure::{MeasurementSet, Provenance};
use thermal_eit::symbol::{condition_map, FieldGradients, SymbolKind};
use thermal_eit::{ConductivityField, GridOperators, GridSpec, Phantom};

use crate::config::{ExperimentConfig, Kind, ModelKind, Stage};

const SIGMA_UNITS: &str = "cm^-1 kOhm^-1";
const H_UNITS: &str = "cm^-3 kOhm^-1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the output directory, with `/` separators.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub seconds: f64,
    pub cached: bool,
    pub key: String,
}

/// Written next to a stage's outputs; a later run with the same key and
/// intact files skips the stage.
#[derive(Debug, Serialize, Deserialize)]
struct StageStamp {
    key: String,
    files: Vec<FileRecord>,
}

/// Description of a measurement directory.
#[derive(Debug, Serialize, Deserialize)]
pub struct MeasurementMeta {
    pub grid: GridSpec,
    pub provenance: Provenance,
    pub boundary: BoundarySet,
    pub files: Vec<String>,
}

pub struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    out: PathBuf,
    truth: Option<ConductivityField>,
    data: Option<MeasurementSet>,
    data_key: Option<String>,
    pub files: Vec<FileRecord>,
    pub stages: Vec<StageRecord>,
}

impl<'a> Runner<'a> {
    pub fn new(cfg: &'a ExperimentConfig) -> Self {
        Self {
            cfg,
            out: cfg.out.clone(),
            truth: None,
            data: None,
            data_key: None,
            files: Vec::new(),
            stages: Vec::new(),
        }
    }

    pub fn run(&mut self) -> Result<()> {
        std::fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        for stage in self.cfg.ordered_stages() {
            self.run_stage(stage)
                .with_context(|| format!("stage {}", stage.name()))?;
        }
        Ok(())
    }

    fn run_stage(&mut self, stage: Stage) -> Result<()> {
        let t = Instant::now();
        let key = self.stage_key(stage)?;
        let dir = self.out.join(stage.name());
        let cached = match read_stamp(&self.out, &dir, &key) {
            Some(files) => {
                if stage == Stage::Measure {
                    self.data = Some(load_measurements(&dir)?);
                }
                self.files.extend(files);
                true
            }
            None => {
                if dir.exists() {
                    std::fs::remove_dir_all(&dir)?;
                }
                std::fs::create_dir_all(&dir)?;
                let written = match stage {
                    Stage::Forward => self.forward(&dir)?,
                    Stage::Measure => self.measure(&dir)?,
                    Stage::SymbolMap => self.symbol_map(&dir)?,
                    Stage::Reconstruct => self.reconstruct(&dir)?,
                };
                let records = written
                    .iter()
                    .map(|p| file_record(&self.out, p))
                    .collect::<Result<Vec<_>>>()?;
                let stamp = StageStamp {
                    key: key.clone(),
                    files: records.clone(),
                };
                std::fs::write(dir.join("stage.json"), serde_json::to_vec_pretty(&stamp)?)?;
                self.files.extend(records);
                false
            }
        };
        if stage == Stage::Measure {
            self.data_key = Some(key.clone());
        }
        self.stages.push(StageRecord {
            stage,
            seconds: t.elapsed().as_secs_f64(),
            cached,
            key,
        });
        Ok(())
    }

    /// Hash of everything a stage's outputs depend on.
    fn stage_key(&self, stage: Stage) -> Result<String> {
        let c = self.cfg;
        let mut inputs = BTreeMap::<&str, serde_json::Value>::new();
        inputs.insert("stage", serde_json::to_value(stage)?);
        inputs.insert("version", env!("CARGO_PKG_VERSION").into());
        inputs.insert("grid", serde_json::to_value(&c.grid)?);
        inputs.insert("conductivity", self.conductivity_fingerprint()?);
        inputs.insert("boundary", serde_json::to_value(&c.boundary)?);
        match stage {
            Stage::Forward => {}
            Stage::Measure => {
                inputs.insert("measure", serde_json::to_value(&c.measure)?);
                if c.measure.model == ModelKind::Stochastic {
                    inputs.insert("seed", c.seed.into());
                }
            }
            Stage::SymbolMap => {
                inputs.insert("symbol", serde_json::to_value(&c.symbol)?);
            }
            Stage::Reconstruct => {
                let mut r = c.reconstruct.clone();
                let data = match r.data.take() {
                    Some(dir) => directory_fingerprint(&dir)?,
                    None => self
                        .data_key
                        .clone()
                        .context("measurements are not available")?,
                };
                inputs.insert("reconstruct", serde_json::to_value(&r)?);
                inputs.insert("data", data.into());
            }
        }
        Ok(sha256_hex(&serde_json::to_vec(&inputs)?))
    }

    fn conductivity_fingerprint(&self) -> Result<serde_json::Value> {
        let c = &self.cfg.conductivity;
        let file = |p: &Option<PathBuf>| -> Result<serde_json::Value> {
            Ok(match p {
                Some(p) => {
                    sha256_hex(&std::fs::read(p).with_context(|| p.display().to_string())?).into()
                }
                None => serde_json::Value::Null,
            })
        };
        Ok(serde_json::json!({
            "phantom": c.phantom,
            "csv_re": file(&c.csv_re)?,
            "csv_im": file(&c.csv_im)?,
        }))
    }

    fn truth(&mut self) -> Result<&ConductivityField> {
        if self.truth.is_none() {
            let fine = self.cfg.coarse_grid()?.fine();
            let c = &self.cfg.conductivity;
            let field = match (&c.phantom, &c.csv_re) {
                (Some(p), _) => Phantom::parse(p)?.field(&fine)?,
                (None, Some(re)) => {
                    let load = |path: &Path, field: &str| -> Result<Vec<f64>> {
                        let g = read_grid_csv(path)
                            .with_context(|| format!("{field}: {}", path.display()))?;
                        if g.n != fine.n()
                            || (g.extent - fine.extent()).abs() > 1e-9 * fine.extent()
                        {
                            bail!(
                                "{field}: grid n={}, L={} differs from the fine grid n={}, L={}",
                                g.n,
                                g.extent,
                                fine.n(),
                                fine.extent()
                            );
                        }
                        Ok(g.values)
                    };
                    let re_v = load(re, "conductivity.csv_re")?;
                    let im_v = match &c.csv_im {
                        Some(p) => load(p, "conductivity.csv_im")?,
                        None => vec![0.0; fine.num_nodes()],
                    };
                    ConductivityField::new(fine, re_v, im_v)?
                }
                (None, None) => bail!("conductivity: no source"),
            };
            self.truth = Some(field);
        }
        Ok(self.truth.as_ref().expect("set above"))
    }

    fn forward(&mut self, dir: &Path) -> Result<Vec<PathBuf>> {
        let bset = self.cfg.boundary_set()?;
        let truth = self.truth()?.clone();
        let fine = *truth.grid();
        let ops = GridOperators::new(&fine)?;
        let u = solve_many(&truth, &bset.specs(&fine)?, &ops)?;
        let mut files = Vec::new();
        let mut put = |name: String, field: &str, units: &str, v: &[f64]| -> Result<()> {
            let p = dir.join(name);
            write_grid_csv(&p, &fine, field, units, v)?;
            files.push(p);
            Ok(())
        };
        put(
            "sigma_re.csv".into(),
            "sigma_re",
            SIGMA_UNITS,
            truth.sigma_re(),
        )?;
        put(
            "sigma_im.csv".into(),
            "sigma_im",
            SIGMA_UNITS,
            truth.sigma_im(),
        )?;
        for (i, p) in u.iter().enumerate() {
            let i = i + 1;
            put(
                format!("u_{i}_re.csv"),
                &format!("u{i}_re"),
                "V",
                &p.real_part(),
            )?;
            put(
                format!("u_{i}_im.csv"),
                &format!("u{i}_im"),
                "V",
                &p.imag_part(),
            )?;
            let h = internal_functional(truth.sigma_re(), &p.u, &ops);
            put(
                format!("functional_{i}.csv"),
                &format!("sigma_grad_u{i}_sq"),
                H_UNITS,
                &h,
            )?;
        }
        Ok(files)
    }

    fn measure(&mut self, dir: &Path) -> Result<Vec<PathBuf>> {
        let cfg = self.cfg;
        let bset = cfg.boundary_set()?;
        let coarse = cfg.coarse_grid()?;
        let m = &cfg.measure;
        let model = match m.model {
            ModelKind::Deterministic => DataModel::Deterministic,
            ModelKind::Stochastic => DataModel::Stochastic {
                params: m.params(),
                scaling: m.scaling,
                seed: cfg.seed,
            },
        };
        let truth = self.truth()?.clone();
        let data = synthesize(&truth, &coarse, &bset, m.a, &model)?;
        let mut files = Vec::new();
        let mut names = Vec::new();
        for (i, h) in data.data.iter().enumerate() {
            let name = format!("H_{}.csv", i + 1);
            let p = dir.join(&name);
            write_grid_csv(&p, &coarse, &format!("H_{}{}", i + 1, i + 1), H_UNITS, h)?;
            files.push(p);
            names.push(name);
        }
        let meta = MeasurementMeta {
            grid: coarse,
            provenance: data.provenance.clone(),
            boundary: bset,
            files: names,
        };
        let p = dir.join("metadata.json");
        std::fs::write(&p, serde_json::to_vec_pretty(&meta)?)?;
        files.push(p);
        self.data = Some(data);
        Ok(files)
    }

    fn symbol_map(&mut self, dir: &Path) -> Result<Vec<PathBuf>> {
        let cfg = self.cfg;
        let bset = cfg.boundary_set()?;
        let coarse = cfg.coarse_grid()?;
        let sigma = restrict_conductivity(self.truth()?, &coarse)?;
        let ops = GridOperators::new(&coarse)?;
        let u = solve_many(&sigma, &bset.specs(&coarse)?, &ops)?;
        let kind = match cfg.symbol.kind {
            Kind::Real => SymbolKind::Real,
            Kind::Complex => SymbolKind::Complex,
        };
        let map = condition_map(
            &FieldGradients::from_potentials(&u, &ops),
            &sigma,
            kind,
            cfg.symbol.directions,
        )?;
        let log = map.log10();
        let csv = dir.join("condition_log10.csv");
        write_grid_csv(&csv, &coarse, "log10_condition", "1", &log)?;
        let pgm = dir.join("condition_log10.pgm");
        write_pgm(&pgm, coarse.n(), &log)?;
        Ok(vec![csv, pgm])
    }

    fn reconstruct(&mut self, dir: &Path) -> Result<Vec<PathBuf>> {
        let cfg = self.cfg;
        let r = &cfg.reconstruct;
        let (data, bset) = match &r.data {
            Some(d) => {
                let meta: MeasurementMeta =
                    serde_json::from_slice(&std::fs::read(d.join("metadata.json"))?)?;
                (load_measurements(d)?, meta.boundary)
            }
            None => (
                self.data
                    .clone()
                    .context("measurements are not available")?,
                cfg.boundary_set()?,
            ),
        };
        let coarse = data.grid;
        let known = restrict_conductivity(self.truth()?, &coarse)?;
        let config = r.solver_config(bset.gap_width.is_some());
        let ops = GridOperators::new(&coarse)?;
        let problem = InverseProblem::new(
            ops,
            config.kind,
            &bset.specs(&coarse)?,
            &data,
            &known,
            config.boundary_band,
        )?;
        let sigma0 = match r.sigma0 {
            Some([re, im]) => Complex64::new(re, im),
            None => {
                let m = problem.band_mean();
                if r.kind == Kind::Real {
                    Complex64::new(m.re, 0.0)
                } else {
                    m
                }
            }
        };
        let state = problem.gauss_newton(problem.initial_guess(sigma0)?, &config)?;

        let mut files = Vec::new();
        let p = dir.join("sigma_re.csv");
        write_grid_csv(&p, &coarse, "sigma_re", SIGMA_UNITS, &state.s_re)?;
        files.push(p);
        if r.kind == Kind::Complex {
            let p = dir.join("sigma_im.csv");
            write_grid_csv(&p, &coarse, "sigma_im", SIGMA_UNITS, &state.s_im)?;
            files.push(p);
        }
        let p = dir.join("sigma_re.pgm");
        write_pgm(&p, coarse.n(), &state.s_re)?;
        files.push(p);

        let mut log = String::from("iter,residual_norm,step_norm,backtracks\n");
        for rec in &state.log {
            log.push_str(&format!(
                "{},{},{},{}\n",
                rec.iter, rec.residual_norm, rec.step_norm, rec.backtracks
            ));
        }
        let p = dir.join("iterations.csv");
        std::fs::write(&p, log)?;
        files.push(p);
        Ok(files)
    }
}

fn file_record(root: &Path, p: &Path) -> Result<FileRecord> {
    let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
    let rel = p.strip_prefix(root).unwrap_or(p);
    Ok(FileRecord {
        path: rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/"),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

/// Files of a previous run when its key matches and no file changed.
fn read_stamp(root: &Path, dir: &Path, key: &str) -> Option<Vec<FileRecord>> {
    let stamp: StageStamp =
        serde_json::from_slice(&std::fs::read(dir.join("stage.json")).ok()?).ok()?;
    if stamp.key != key {
        return None;
    }
    for f in &stamp.files {
        let now = file_record(root, &root.join(&f.path)).ok()?;
        if now.sha256 != f.sha256 {
            return None;
        }
    }
    Some(stamp.files)
}

fn directory_fingerprint(dir: &Path) -> Result<String> {
    let meta: MeasurementMeta = serde_json::from_slice(
        &std::fs::read(dir.join("metadata.json"))
            .with_context(|| format!("{}/metadata.json", dir.display()))?,
    )?;
    let mut h = Sha256::new();
    h.update(std::fs::read(dir.join("metadata.json"))?);
    for f in &meta.files {
        h.update(std::fs::read(dir.join(f)).with_context(|| format!("{}/{f}", dir.display()))?);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn load_measurements(dir: &Path) -> Result<MeasurementSet> {
    let meta: MeasurementMeta = serde_json::from_slice(
        &std::fs::read(dir.join("metadata.json"))
            .with_context(|| format!("{}/metadata.json", dir.display()))?,
    )
    .context("parsing measurement metadata")?;
    let mut data = Vec::new();
    for f in &meta.files {
        let g = read_grid_csv(&dir.join(f)).with_context(|| format!("{}/{f}", dir.display()))?;
        if g.n != meta.grid.n() {
            bail!(
                "{f}: {} nodes per side, metadata says {}",
                g.n,
                meta.grid.n()
            );
        }
        data.push(g.values);
    }
    Ok(MeasurementSet {
        grid: meta.grid,
        data,
        provenance: meta.provenance,
    })
}

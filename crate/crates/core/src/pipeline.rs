//! Stage runner with on-disk intermediates.
//!
//! Every stage reads what it needs from the output directory, so any suffix
//! of the stage list can be rerun after deleting downstream artifacts.
//!
//! | stage          | reads                          | writes |
//! |----------------|--------------------------------|--------|
//! | `optimize`     | config                         | `z_tilde.csv`, `u_tilde.csv`, `optimum.json` |
//! | `sample-prior` | `z_tilde.csv`                  | `prior_samples.csv`, `prior_samples.json` |
//! | `calibrate`    | `z_tilde.csv`, data files      | `data/`, `posterior/`, `delta_fit.csv`, `calibrate.json` |
//! | `update`       | `z_tilde.csv`, `posterior/`    | `z_bar.csv`, `update.json` |
//! | `report`       | `z_tilde.csv`, `z_bar.csv`, `calibrate.json` | `z_star.csv`, `report.json` |
//! | `oracle-check` | config                         | `oracle_check.json` |
//!
//! Each finished stage replaces its row in `manifest.csv`
//! (`stage,wall_time_s,inputs_sha256`).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::calibrate;
use crate::config::{DataSource, RunConfig, Stage};
use crate::control::LfOptimum;
use crate::error::{Error, Result};
use crate::io::{export_data, ingest_data, read_posterior, read_table, read_vector, write_posterior, write_table, write_vector};
use crate::linalg::weighted_norm;
use crate::models::{generate_discrepancy_data, ControlVector, DiscrepancyData};
use crate::oracle::run_oracle_suite;
use crate::problem::{ControlDesign, Problem};
use crate::sampler::{sample_prior, SamplePlan};
use crate::sensitivity::{control_distance, hf_objective_report, update_solution, ObjectiveRow};

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub stage: Stage,
    pub wall_time_s: f64,
    pub inputs_sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimumSummary {
    pub objective: f64,
    pub gradient_norm: f64,
    pub control_norm: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationSummary {
    /// How the query controls were obtained.
    pub design: String,
    pub count: usize,
    /// `‖δ(z_ℓ, θ̄) − y_ℓ‖_{M_u} / ‖y_ℓ‖_{M_u}`; `None` when `y_ℓ = 0`.
    pub relative_fit: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub parameters: RunConfig,
    pub objectives: Vec<ObjectiveRow>,
    /// `‖z̃ − z*‖_{M_z}` and `‖z̄ − z*‖_{M_z}`.
    pub distance_tilde: Option<f64>,
    pub distance_bar: Option<f64>,
    pub improvement_ratio: Option<f64>,
    pub step_norm: f64,
    pub data_fit: Vec<Option<f64>>,
}

/// A configured benchmark bound to an output directory.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: RunConfig,
    pub problem: Problem,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|_| Error::MissingInput(path.display().to_string()))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn names(prefix: &str, count: usize) -> Vec<String> {
    (1..=count).map(|l| format!("{prefix}_{l}")).collect()
}

impl Pipeline {
    /// Assembles the problem. Nothing is written.
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let problem = Problem::new(config.benchmark_params())?;
        Ok(Self { config, problem })
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out_dir
    }

    fn path(&self, name: &str) -> PathBuf {
        self.config.out_dir.join(name)
    }

    fn x(&self) -> &[f64] {
        self.problem.mesh.nodes()
    }

    /// Runs the configured stages in canonical order.
    pub fn run(&self) -> Result<Vec<StageRecord>> {
        let mut stages = self.config.stages.clone();
        stages.sort();
        stages.dedup();
        stages.into_iter().map(|s| self.run_stage(s)).collect()
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageRecord> {
        fs::create_dir_all(self.out_dir())?;
        let start = Instant::now();
        let inputs = match stage {
            Stage::Optimize => self.optimize()?,
            Stage::SamplePrior => self.sample_prior()?,
            Stage::Calibrate => self.calibrate()?,
            Stage::Update => self.update()?,
            Stage::Report => self.report()?,
            Stage::OracleCheck => self.oracle_check()?,
        };
        let record = StageRecord {
            stage,
            wall_time_s: start.elapsed().as_secs_f64(),
            inputs_sha256: self.hash_inputs(&inputs)?,
        };
        self.record(&record)?;
        Ok(record)
    }

    /// SHA-256 over the parameter echo and each input file's bytes.
    fn hash_inputs(&self, inputs: &[PathBuf]) -> Result<String> {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.config)?);
        for p in inputs {
            if let Some(name) = p.file_name() {
                h.update(name.to_string_lossy().as_bytes());
            }
            h.update(fs::read(p)?);
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }

    fn record(&self, rec: &StageRecord) -> Result<()> {
        let path = self.path("manifest.csv");
        let header = "stage,wall_time_s,inputs_sha256";
        let mut lines: Vec<String> = match fs::read_to_string(&path) {
            Ok(text) => text
                .lines()
                .skip(1)
                .filter(|l| l.split(',').next() != Some(rec.stage.name()))
                .map(String::from)
                .collect(),
            Err(_) => Vec::new(),
        };
        lines.push(format!("{},{:.6},{}", rec.stage, rec.wall_time_s, rec.inputs_sha256));
        let mut out = String::from(header);
        for l in lines {
            out.push('\n');
            out.push_str(&l);
        }
        out.push('\n');
        fs::write(path, out)?;
        Ok(())
    }

    fn load_optimum(&self) -> Result<(LfOptimum, PathBuf)> {
        let path = self.path("z_tilde.csv");
        let z = read_vector(&path, self.problem.mesh.n_nodes())?;
        Ok((LfOptimum::at(&self.problem.spec, &self.problem.lf, z)?, path))
    }

    fn optimize(&self) -> Result<Vec<PathBuf>> {
        let opt = self.problem.lf_optimum()?;
        write_vector(&self.path("z_tilde.csv"), self.x(), "z_tilde", &opt.z_tilde)?;
        write_vector(&self.path("u_tilde.csv"), self.x(), "u_tilde", &opt.u_tilde)?;
        let summary = OptimumSummary {
            objective: opt.objective_value,
            gradient_norm: opt.gradient_norm,
            control_norm: weighted_norm(&self.problem.mass, &opt.z_tilde),
        };
        write_json(&self.path("optimum.json"), &summary)?;
        Ok(Vec::new())
    }

    /// `z_r` from the configured file or `z̃ + scale·ψ₁`.
    fn reference_control(&self, z_tilde: &ControlVector) -> Result<(ControlVector, Vec<PathBuf>)> {
        match &self.config.sampler.reference_path {
            Some(p) => Ok((read_vector(p, self.problem.mesh.n_nodes())?, vec![p.clone()])),
            None => {
                let psi = self.problem.smooth_modes(1)?;
                Ok((z_tilde + psi.column(0) * self.config.sampler.reference_scale, Vec::new()))
            }
        }
    }

    fn sample_prior(&self) -> Result<Vec<PathBuf>> {
        let (opt, zpath) = self.load_optimum()?;
        let (reference, mut inputs) = self.reference_control(&opt.z_tilde)?;
        let sc = &self.config.sampler;
        let plan = SamplePlan {
            samples: sc.samples,
            steps: sc.steps,
            reference,
            seed: self.config.seed,
        };
        let set = sample_prior(&plan, &self.problem.prior, self.config.prior.zeta, &opt.z_tilde, &self.problem.mass)?;
        let m = self.problem.mesh.n_nodes();
        let cols = sc.samples * (sc.steps + 1);
        let mut table = DMatrix::zeros(m, cols);
        let mut header = Vec::with_capacity(cols);
        for s in 0..sc.samples {
            let curves = set.curves(s);
            for k in 0..=sc.steps {
                header.push(format!("s{s}_k{k}"));
                table.set_column(s * (sc.steps + 1) + k, &curves.column(k));
            }
        }
        write_table(&self.path("prior_samples.csv"), self.x(), &header, &table)?;
        write_json(
            &self.path("prior_samples.json"),
            &serde_json::json!({
                "samples": sc.samples,
                "steps": sc.steps,
                "seed": self.config.seed,
                "zeta": set.zeta,
                "c": set.c,
            }),
        )?;
        inputs.insert(0, zpath);
        Ok(inputs)
    }

    fn design(&self) -> Option<ControlDesign> {
        match self.config.data {
            DataSource::Manufacture { count, scale } => Some(ControlDesign::OptimumPlusModes { count, scale }),
            DataSource::Files { .. } => None,
        }
    }

    /// High-fidelity data at the designed controls around `z̃`.
    pub fn manufacture_data(&self, z_tilde: &ControlVector) -> Result<DiscrepancyData> {
        let design = self.design().unwrap_or(ControlDesign::OptimumPlusModes { count: 2, scale: 2.0 });
        let controls = self.problem.design_controls(z_tilde, &design)?;
        generate_discrepancy_data(&self.problem.lf, &self.problem.hf, &controls)
    }

    /// Runs `optimize` if needed and writes `data/Z.csv`, `data/Y.csv`.
    pub fn write_manufactured_data(&self) -> Result<DiscrepancyData> {
        if !self.path("z_tilde.csv").exists() {
            self.run_stage(Stage::Optimize)?;
        }
        let (opt, _) = self.load_optimum()?;
        let data = self.manufacture_data(&opt.z_tilde)?;
        export_data(&self.path("data"), &data, &self.problem.mesh)?;
        Ok(data)
    }

    fn calibrate(&self) -> Result<Vec<PathBuf>> {
        let (opt, zpath) = self.load_optimum()?;
        let mut inputs = vec![zpath];
        let (data, design) = match &self.config.data {
            DataSource::Manufacture { count, scale } => {
                let data = self.manufacture_data(&opt.z_tilde)?;
                export_data(&self.path("data"), &data, &self.problem.mesh)?;
                let design = format!(
                    "z_1 = z_tilde, z_l = z_tilde + {scale} * psi_(l-1) for l = 2..{count}; psi_k: k-th smoothest non-constant Neumann mode, unit M_z norm, positive at x = 0"
                );
                (data, design)
            }
            DataSource::Files { z_path, y_path } => {
                inputs.push(z_path.clone());
                inputs.push(y_path.clone());
                let data = ingest_data(z_path, y_path, &self.problem.mesh)?;
                (data, format!("files {} and {}", z_path.display(), y_path.display()))
            }
        };
        let pm = calibrate(&data, &self.config.prior, &self.problem.prior, &opt.z_tilde, &self.problem.mass)?;
        write_posterior(&self.path("posterior"), &pm, &self.problem.mesh)?;

        let count = data.len();
        let mut fit_table = DMatrix::zeros(self.problem.mesh.n_nodes(), 2 * count);
        let mut relative_fit = Vec::with_capacity(count);
        for l in 0..count {
            let z = data.controls().column(l).into_owned();
            let y = data.discrepancies().column(l);
            let delta = pm.eval_delta(&z, &self.problem.mass)?;
            let ynorm = weighted_norm(&self.problem.mass, &y.into_owned());
            let err = weighted_norm(&self.problem.mass, &(&delta - y));
            relative_fit.push((ynorm > 0.0).then(|| err / ynorm));
            fit_table.set_column(l, &delta);
            fit_table.set_column(count + l, &y);
        }
        let mut header = names("delta", count);
        header.extend(names("y", count));
        write_table(&self.path("delta_fit.csv"), self.x(), &header, &fit_table)?;
        write_json(
            &self.path("calibrate.json"),
            &CalibrationSummary {
                design,
                count,
                relative_fit,
            },
        )?;
        Ok(inputs)
    }

    fn update(&self) -> Result<Vec<PathBuf>> {
        let (opt, zpath) = self.load_optimum()?;
        let pdir = self.path("posterior");
        let pm = read_posterior(&pdir, &self.problem.mesh)?;
        let res = update_solution(&pm, &opt, &self.problem.spec, &self.problem.lf)?;
        let n = self.problem.mesh.n_nodes();
        let mut table = DMatrix::zeros(n, 3);
        table.set_column(0, &res.z_tilde);
        table.set_column(1, &res.b_theta);
        table.set_column(2, &res.z_bar);
        let header = ["z_tilde", "b_theta", "z_bar"].map(String::from);
        write_table(&self.path("z_bar.csv"), self.x(), &header, &table)?;
        write_json(&self.path("update.json"), &res.diagnostics)?;
        Ok(vec![zpath, pdir.join("scalars.json")])
    }

    fn report(&self) -> Result<Vec<PathBuf>> {
        let n = self.problem.mesh.n_nodes();
        let zpath = self.path("z_tilde.csv");
        let z_tilde = read_vector(&zpath, n)?;
        let bpath = self.path("z_bar.csv");
        let bar = read_table(&bpath)?;
        let col = bar
            .names
            .iter()
            .position(|c| c == "z_bar")
            .ok_or_else(|| Error::Parse {
                path: bpath.display().to_string(),
                reason: "no `z_bar` column".into(),
            })?;
        if bar.x.len() != n {
            return Err(Error::dim(format!("rows of {}", bpath.display()), n, bar.x.len()));
        }
        let z_bar = bar.values.column(col).into_owned();
        let cpath = self.path("calibrate.json");
        let cal: CalibrationSummary = read_json(&cpath)?;
        let upath = self.path("update.json");
        let upd: UpdateDiagnosticsRead = read_json(&upath)?;

        let mass = &self.problem.mass;
        let z_star = if self.config.hf_reference {
            let star = self.problem.hf_optimum()?.z_tilde;
            write_vector(&self.path("z_star.csv"), self.x(), "z_star", &star)?;
            Some(star)
        } else {
            None
        };
        let mut candidates: Vec<(&str, &ControlVector)> = vec![("z_tilde", &z_tilde), ("z_bar", &z_bar)];
        if let Some(star) = &z_star {
            candidates.push(("z_star", star));
        }
        let objectives = hf_objective_report(&candidates, Some(&self.problem.hf), &self.problem.spec)?;
        let distance_tilde = z_star.as_ref().map(|s| control_distance(mass, &z_tilde, s));
        let distance_bar = z_star.as_ref().map(|s| control_distance(mass, &z_bar, s));
        let improvement_ratio = match (distance_tilde, distance_bar) {
            (Some(t), Some(b)) if t > 0.0 => Some(b / t),
            _ => None,
        };
        let report = Report {
            parameters: self.config.clone(),
            objectives,
            distance_tilde,
            distance_bar,
            improvement_ratio,
            step_norm: upd.step_norm,
            data_fit: cal.relative_fit,
        };
        write_json(&self.path("report.json"), &report)?;
        Ok(vec![zpath, bpath, cpath, upath])
    }

    fn oracle_check(&self) -> Result<Vec<PathBuf>> {
        let report = run_oracle_suite(self.config.seed)?;
        write_json(&self.path("oracle_check.json"), &report)?;
        if !report.passed {
            return Err(Error::Assumption(format!(
                "dense oracle mismatch: factored {:.3e}, gsvd {:.3e}",
                report.max_factored_error, report.max_gsvd_error
            )));
        }
        Ok(Vec::new())
    }
}

/// The part of `update.json` the report needs.
#[derive(Debug, Deserialize)]
struct UpdateDiagnosticsRead {
    step_norm: f64,
}

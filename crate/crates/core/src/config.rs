//! Run configuration.
//!
//! The file format is one `section.key = value` pair per line; blank lines
//! and `#` comments are ignored. Every key can be overridden from the
//! environment as `SECTION_KEY` (e.g. `PRIOR_GAMMA=2`). Precedence, highest
//! first: command-line flag, environment, file, built-in default.
//!
//! ```text
//! mesh.n_nodes = 200
//! prior.alpha = 0.01
//! objective.target_coeffs = 50, 0, -30
//! data.source = manufacture
//! run.stages = optimize, calibrate, update, report
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::prior::PriorSpec;
use crate::problem::{BenchmarkParams, PolynomialTarget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Optimize,
    SamplePrior,
    Calibrate,
    Update,
    Report,
    OracleCheck,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Optimize,
        Stage::SamplePrior,
        Stage::Calibrate,
        Stage::Update,
        Stage::Report,
        Stage::OracleCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Optimize => "optimize",
            Stage::SamplePrior => "sample-prior",
            Stage::Calibrate => "calibrate",
            Stage::Update => "update",
            Stage::Report => "report",
            Stage::OracleCheck => "oracle-check",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Stage::ALL.iter().map(|s| s.name()).collect();
                Error::Config(format!("unknown stage `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

/// Parses a comma-separated stage list into canonical execution order.
pub fn parse_stages(list: &str) -> Result<Vec<Stage>> {
    let mut stages = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(Stage::from_str)
        .collect::<Result<Vec<_>>>()?;
    if stages.is_empty() {
        return Err(Error::Config("stage list is empty".into()));
    }
    stages.sort();
    stages.dedup();
    Ok(stages)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// Benchmark data from the high-fidelity model at
    /// `z̃, z̃ + scale·ψ₁, …` (`count` controls).
    Manufacture { count: usize, scale: f64 },
    Files { z_path: PathBuf, y_path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplerConfig {
    pub samples: usize,
    pub steps: usize,
    /// `z_r = z̃ + reference_scale·ψ₁` unless `reference_path` is given.
    pub reference_scale: f64,
    pub reference_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub n_nodes: usize,
    pub kappa: f64,
    pub velocity: f64,
    pub h_robin: f64,
    pub beta: f64,
    pub target_center: f64,
    pub target_coeffs: Vec<f64>,
    pub prior: PriorSpec,
    pub data: DataSource,
    pub sampler: SamplerConfig,
    pub seed: u64,
    #[serde(skip)]
    pub out_dir: PathBuf,
    #[serde(skip)]
    pub stages: Vec<Stage>,
    /// Solve the high-fidelity optimum directly for the report.
    pub hf_reference: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = BenchmarkParams::default();
        Self {
            n_nodes: p.n_nodes,
            kappa: p.kappa,
            velocity: p.velocity,
            h_robin: p.h_robin,
            beta: p.beta,
            target_center: p.target.center,
            target_coeffs: p.target.coeffs,
            prior: p.prior,
            data: DataSource::Manufacture { count: 2, scale: 2.0 },
            sampler: SamplerConfig {
                samples: 100,
                steps: 11,
                reference_scale: 2.0,
                reference_path: None,
            },
            seed: 0,
            out_dir: PathBuf::from("out"),
            stages: vec![
                Stage::Optimize,
                Stage::SamplePrior,
                Stage::Calibrate,
                Stage::Update,
                Stage::Report,
            ],
            hf_reference: true,
        }
    }
}

/// Every recognised key.
pub const KEYS: [&str; 24] = [
    "mesh.n_nodes",
    "model.kappa",
    "model.velocity",
    "model.h_robin",
    "objective.beta",
    "objective.target_center",
    "objective.target_coeffs",
    "prior.gamma",
    "prior.epsilon",
    "prior.zeta",
    "prior.alpha",
    "data.source",
    "data.count",
    "data.perturbation_scale",
    "data.z_path",
    "data.y_path",
    "sampler.samples",
    "sampler.steps",
    "sampler.reference_scale",
    "sampler.reference_path",
    "run.seed",
    "run.out_dir",
    "run.stages",
    "report.hf_reference",
];

/// `prior.gamma` becomes `PRIOR_GAMMA`.
pub fn env_name(key: &str) -> String {
    key.replace('.', "_").to_ascii_uppercase()
}

/// Values given on the command line.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub stages: Option<String>,
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

#[derive(Default)]
struct RawData {
    source: Option<String>,
    count: Option<usize>,
    scale: Option<f64>,
    z_path: Option<PathBuf>,
    y_path: Option<PathBuf>,
}

impl RunConfig {
    /// Reads `path` (if any), applies environment and command-line overrides
    /// and validates the result.
    pub fn load(
        path: Option<&Path>,
        env: impl Fn(&str) -> Option<String>,
        cli: &CliOverrides,
    ) -> Result<Self> {
        let mut entries = Vec::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            entries = parse_entries(&text)?;
        }
        for key in KEYS {
            if let Some(v) = env(&env_name(key)) {
                entries.push((key.to_string(), v));
            }
        }
        if let Some(d) = &cli.out_dir {
            entries.push(("run.out_dir".into(), d.display().to_string()));
        }
        if let Some(s) = cli.seed {
            entries.push(("run.seed".into(), s.to_string()));
        }
        if let Some(s) = &cli.stages {
            entries.push(("run.stages".into(), s.clone()));
        }
        Self::from_entries(&entries)
    }

    /// Builds a configuration from ordered key/value pairs; later pairs win.
    pub fn from_entries(entries: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut data = RawData::default();
        for (key, value) in entries {
            cfg.set(key, value.trim(), &mut data)?;
        }
        cfg.data = match data.source.as_deref().unwrap_or("manufacture") {
            "manufacture" => {
                if data.z_path.is_some() || data.y_path.is_some() {
                    return Err(Error::Config("data paths given but data.source = manufacture".into()));
                }
                DataSource::Manufacture {
                    count: data.count.unwrap_or(2),
                    scale: data.scale.unwrap_or(2.0),
                }
            }
            "files" => match (data.z_path, data.y_path) {
                (Some(z_path), Some(y_path)) => DataSource::Files { z_path, y_path },
                _ => return Err(Error::Config("data.source = files needs data.z_path and data.y_path".into())),
            },
            other => {
                return Err(Error::Config(format!(
                    "`data.source`: expected `manufacture` or `files`, got `{other}`"
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str, data: &mut RawData) -> Result<()> {
        match key {
            "mesh.n_nodes" => self.n_nodes = parse_num(key, v)?,
            "model.kappa" => self.kappa = parse_num(key, v)?,
            "model.velocity" => self.velocity = parse_num(key, v)?,
            "model.h_robin" => self.h_robin = parse_num(key, v)?,
            "objective.beta" => self.beta = parse_num(key, v)?,
            "objective.target_center" => self.target_center = parse_num(key, v)?,
            "objective.target_coeffs" => {
                self.target_coeffs = v
                    .split(',')
                    .map(|c| parse_num(key, c.trim()))
                    .collect::<Result<_>>()?
            }
            "prior.gamma" => self.prior.gamma = parse_num(key, v)?,
            "prior.epsilon" => self.prior.epsilon = parse_num(key, v)?,
            "prior.zeta" => self.prior.zeta = parse_num(key, v)?,
            "prior.alpha" => self.prior.alpha = parse_num(key, v)?,
            "data.source" => data.source = Some(v.to_string()),
            "data.count" => data.count = Some(parse_num(key, v)?),
            "data.perturbation_scale" => data.scale = Some(parse_num(key, v)?),
            "data.z_path" => data.z_path = Some(PathBuf::from(v)),
            "data.y_path" => data.y_path = Some(PathBuf::from(v)),
            "sampler.samples" => self.sampler.samples = parse_num(key, v)?,
            "sampler.steps" => self.sampler.steps = parse_num(key, v)?,
            "sampler.reference_scale" => self.sampler.reference_scale = parse_num(key, v)?,
            "sampler.reference_path" => self.sampler.reference_path = Some(PathBuf::from(v)),
            "run.seed" => self.seed = parse_num(key, v)?,
            "run.out_dir" => self.out_dir = PathBuf::from(v),
            "run.stages" => self.stages = parse_stages(v)?,
            "report.hf_reference" => self.hf_reference = parse_num(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("`{name}` must be positive, got {x}")))
            }
        };
        if self.n_nodes < 2 {
            return Err(Error::Config(format!("`mesh.n_nodes` must be at least 2, got {}", self.n_nodes)));
        }
        positive("model.kappa", self.kappa)?;
        if !self.velocity.is_finite() {
            return Err(Error::Config("`model.velocity` must be finite".into()));
        }
        if !(self.h_robin >= 0.0 && self.h_robin.is_finite()) {
            return Err(Error::Config(format!("`model.h_robin` must be non-negative, got {}", self.h_robin)));
        }
        positive("objective.beta", self.beta)?;
        if self.target_coeffs.is_empty() || self.target_coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("`objective.target_coeffs` needs finite values".into()));
        }
        positive("prior.gamma", self.prior.gamma)?;
        positive("prior.epsilon", self.prior.epsilon)?;
        positive("prior.zeta", self.prior.zeta)?;
        positive("prior.alpha", self.prior.alpha)?;
        if let DataSource::Manufacture { scale, .. } = &self.data {
            positive("data.perturbation_scale", *scale)?;
        }
        if self.sampler.samples == 0 || self.sampler.steps == 0 {
            return Err(Error::Config("`sampler.samples` and `sampler.steps` must be positive".into()));
        }
        Ok(())
    }

    pub fn benchmark_params(&self) -> BenchmarkParams {
        BenchmarkParams {
            n_nodes: self.n_nodes,
            kappa: self.kappa,
            velocity: self.velocity,
            h_robin: self.h_robin,
            beta: self.beta,
            target: PolynomialTarget {
                center: self.target_center,
                coeffs: self.target_coeffs.clone(),
            },
            prior: self.prior,
        }
    }
}

/// Splits a config file into ordered key/value pairs.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", k + 1)))?;
        let key = key.trim();
        if key.split('.').count() != 2 || key.split('.').any(str::is_empty) {
            return Err(Error::Config(format!("line {}: key `{key}` must be `section.name`", k + 1)));
        }
        out.push((key.to_string(), value.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn entries(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_are_the_benchmark() {
        let cfg = RunConfig::from_entries(&[]).unwrap();
        assert_eq!(cfg.benchmark_params(), BenchmarkParams::default());
        assert_eq!(cfg.data, DataSource::Manufacture { count: 2, scale: 2.0 });
    }

    #[test]
    fn file_grammar() {
        let text = "# comment\n\nprior.gamma = 2.5  # trailing\nobjective.target_coeffs = 1, 2,3\nrun.stages = report, optimize\n";
        let cfg = RunConfig::from_entries(&parse_entries(text).unwrap()).unwrap();
        assert_eq!(cfg.prior.gamma, 2.5);
        assert_eq!(cfg.target_coeffs, vec![1.0, 2.0, 3.0]);
        assert_eq!(cfg.stages, vec![Stage::Optimize, Stage::Report]);
        assert!(parse_entries("gamma = 1").is_err());
        assert!(parse_entries("a.b.c = 1").is_err());
        assert!(parse_entries("prior.gamma 1").is_err());
    }

    #[test]
    fn precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "prior.gamma = 2\nprior.zeta = 3\nrun.seed = 4\n").unwrap();
        let env: HashMap<&str, &str> = [("PRIOR_ZETA", "5"), ("RUN_SEED", "6"), ("UNRELATED", "x")].into();
        let cli = CliOverrides {
            seed: Some(7),
            ..Default::default()
        };
        let cfg = RunConfig::load(Some(&path), |k| env.get(k).map(|v| v.to_string()), &cli).unwrap();
        assert_eq!(cfg.prior.gamma, 2.0);
        assert_eq!(cfg.prior.zeta, 5.0);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.prior.alpha, 0.01);
    }

    #[test]
    fn rejections() {
        for bad in [
            vec![("prior.alpha", "-1")],
            vec![("prior.alpha", "0")],
            vec![("prior.gamma", "abc")],
            vec![("mesh.n_nodes", "1")],
            vec![("model.kappa", "nan")],
            vec![("run.stages", "optimize, polish")],
            vec![("run.stages", " , ")],
            vec![("prior.colour", "1")],
            vec![("data.source", "files"), ("data.z_path", "Z.csv")],
            vec![("data.source", "oracle")],
            vec![("data.z_path", "Z.csv")],
        ] {
            let err = RunConfig::from_entries(&entries(&bad)).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{bad:?}: {err}");
        }
    }

    #[test]
    fn files_source() {
        let cfg = RunConfig::from_entries(&entries(&[
            ("data.source", "files"),
            ("data.z_path", "a/Z.csv"),
            ("data.y_path", "a/Y.csv"),
        ]))
        .unwrap();
        assert_eq!(
            cfg.data,
            DataSource::Files {
                z_path: "a/Z.csv".into(),
                y_path: "a/Y.csv".into()
            }
        );
    }

    #[test]
    fn env_names() {
        assert_eq!(env_name("prior.gamma"), "PRIOR_GAMMA");
        assert_eq!(env_name("mesh.n_nodes"), "MESH_N_NODES");
    }
}

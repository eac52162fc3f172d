//! Run configuration: one JSON object whose `command` key selects the task.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use dyson_blocks::dyson::{circulant_law, SolverOptions};
use dyson_blocks::eta::{BlockSource, CovarianceMap, CovarianceTensor, EtaPair};
use dyson_blocks::experiments::{limit_law, LimitLaw};
use dyson_blocks::linalg::ComplexMatrix;
use dyson_blocks::sampler::{EntryLaw, ModelSpec};
use dyson_blocks::serde_complex::ComplexValue;

use crate::RunError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RunConfig {
    Solve {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<ModelSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta: Option<MapConfig>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        z: Option<Vec<ComplexValue>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        z_grid: Option<ZGrid>,
        #[serde(default)]
        solver: SolverOptions,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        output: Option<PathBuf>,
    },
    Density {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<ModelSpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta: Option<MapConfig>,
        grid: DensityGrid,
        #[serde(default)]
        solver: SolverOptions,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        output: Option<PathBuf>,
    },
    Sample {
        model: ModelSpec,
        #[serde(default = "one")]
        trials: usize,
        #[serde(default)]
        format: SampleFormat,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        output: Option<PathBuf>,
    },
    Rate {
        model: ModelSpec,
        #[serde(default = "rate_z", with = "dyson_blocks::serde_complex::complex")]
        z: Complex64,
        #[serde(default = "rate_grid")]
        n_grid: Vec<usize>,
        #[serde(default = "fifty")]
        trials: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default)]
        solver: SolverOptions,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        output: Option<PathBuf>,
    },
    Universality {
        model: ModelSpec,
        law_a: EntryLaw,
        law_b: EntryLaw,
        #[serde(default = "rate_z", with = "dyson_blocks::serde_complex::complex")]
        z: Complex64,
        #[serde(default = "fifty")]
        trials: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        output: Option<PathBuf>,
    },
    CirculantKs {
        d: usize,
        #[serde(default = "ks_grid")]
        n_grid: Vec<usize>,
        #[serde(default = "twenty")]
        trials: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        output: Option<PathBuf>,
    },
    Wishart {
        tensor: CovarianceTensor,
        #[serde(default)]
        law: EntryLaw,
        #[serde(with = "dyson_blocks::serde_complex::complex")]
        z: Complex64,
        n: usize,
        #[serde(default = "fifty")]
        trials: usize,
        #[serde(default = "one")]
        identity_trials: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default)]
        solver: SolverOptions,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        output: Option<PathBuf>,
    },
}

fn one() -> usize {
    1
}
fn twenty() -> usize {
    20
}
fn fifty() -> usize {
    50
}
fn rate_z() -> Complex64 {
    Complex64::new(0.0, 3.0)
}
fn rate_grid() -> Vec<usize> {
    vec![32, 64, 128, 256]
}
fn ks_grid() -> Vec<usize> {
    vec![50, 100, 200]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub from: f64,
    pub to: f64,
    pub count: usize,
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        match self.count {
            0 => vec![],
            1 => vec![self.from],
            n => (0..n).map(|k| self.from + (self.to - self.from) * k as f64 / (n - 1) as f64).collect(),
        }
    }
}

/// Every `re + i·im` with `im` varying fastest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZGrid {
    pub re: Range,
    pub im: Range,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityGrid {
    pub from: f64,
    pub to: f64,
    pub step: f64,
    /// Distance above the real axis at which `g` is evaluated.
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_eps() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleFormat {
    #[default]
    Spectrum,
    Matrix,
}

/// A covariance map given directly rather than through a sampled model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapConfig {
    /// `η(B) = t·B`.
    Scalar {
        #[serde(default = "one")]
        d: usize,
        t: f64,
    },
    /// `η(B) = c·tr(B)/d·I`.
    Flat { d: usize, c: f64 },
    /// Choi matrix `C[(i,k),(j,l)] = η(E_ij)[k][l]`.
    Choi { d: usize, matrix: ComplexMatrix },
    Kronecker {
        betas: Vec<ComplexMatrix>,
        sigma: ComplexMatrix,
        #[serde(default = "unit")]
        prefactor: f64,
    },
    CorrelatedTensor { tensor: CovarianceTensor },
    IidBlocks { tensor: CovarianceTensor },
    WignerBlocks { tensor: CovarianceTensor },
    Circulant { d: usize },
    /// The pair driving the Wishart equation.
    Wishart {
        tensor: CovarianceTensor,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prefactor: Option<f64>,
    },
}

fn unit() -> f64 {
    1.0
}

impl MapConfig {
    pub fn build(&self) -> Result<LimitLaw, RunError> {
        let bad = |e: dyson_blocks::eta::EtaError| RunError::Config(e.to_string());
        Ok(match self {
            MapConfig::Scalar { d, t } => LimitLaw::Semicircular(CovarianceMap::scalar(*d, *t).map_err(bad)?),
            MapConfig::Flat { d, c } => LimitLaw::Semicircular(CovarianceMap::flat(*d, *c).map_err(bad)?),
            MapConfig::Choi { d, matrix } => {
                LimitLaw::Semicircular(CovarianceMap::from_choi(*d, matrix.clone()).map_err(bad)?)
            }
            MapConfig::Kronecker { betas, sigma, prefactor } => LimitLaw::Semicircular(
                CovarianceMap::kronecker_with_prefactor(betas, sigma, *prefactor).map_err(bad)?,
            ),
            MapConfig::CorrelatedTensor { tensor } => {
                LimitLaw::Semicircular(CovarianceMap::correlated_tensor(tensor).map_err(bad)?)
            }
            MapConfig::IidBlocks { tensor } => {
                LimitLaw::Semicircular(CovarianceMap::iid_blocks(BlockSource::Moments(tensor)).map_err(bad)?)
            }
            MapConfig::WignerBlocks { tensor } => {
                LimitLaw::Semicircular(CovarianceMap::wigner_blocks(BlockSource::Moments(tensor)).map_err(bad)?)
            }
            MapConfig::Circulant { d } => {
                if *d < 2 {
                    return Err(RunError::Config("circulant needs d >= 2".into()));
                }
                LimitLaw::Mixture(circulant_law(*d))
            }
            MapConfig::Wishart { tensor, prefactor } => LimitLaw::Wishart(match prefactor {
                Some(p) => EtaPair::wishart_with_prefactor(tensor, *p),
                None => EtaPair::wishart(tensor),
            }
            .map_err(bad)?),
        })
    }
}

/// The limit law named by `model` or `eta`, exactly one of which is set.
pub fn target(model: &Option<ModelSpec>, eta: &Option<MapConfig>) -> Result<LimitLaw, RunError> {
    match (model, eta) {
        (Some(spec), None) => limit_law(spec).map_err(|e| RunError::Config(format!("model: {e}"))),
        (None, Some(map)) => map.build(),
        (None, None) => Err(RunError::Config("missing field `model` (or `eta`)".into())),
        (Some(_), Some(_)) => Err(RunError::Config("give only one of `model` and `eta`".into())),
    }
}

/// Spectral parameters for `solve`: a list `z` or a rectangular `z_grid`.
pub fn resolve_points(z: &Option<Vec<ComplexValue>>, z_grid: &Option<ZGrid>) -> Result<Vec<Complex64>, RunError> {
    let zs: Vec<Complex64> = match (z, z_grid) {
        (Some(list), None) => list.iter().map(|v| v.0).collect(),
        (None, Some(g)) => {
            let ims = g.im.values();
            g.re.values().into_iter().flat_map(|re| ims.iter().map(move |&im| Complex64::new(re, im))).collect()
        }
        (None, None) => return Err(RunError::Config("missing field `z` (or `z_grid`)".into())),
        (Some(_), Some(_)) => return Err(RunError::Config("give only one of `z` and `z_grid`".into())),
    };
    if zs.is_empty() {
        return Err(RunError::Config("no spectral parameters".into()));
    }
    if let Some(z) = zs.iter().find(|z| !(z.im > 0.0)) {
        return Err(RunError::Config(format!("z = {z} is not in the upper half-plane")));
    }
    Ok(zs)
}

/// Tagged enums are buffered before their fields are checked, so serde_json
/// cannot place errors such as unknown fields. Point at the first occurrence
/// of the offending key instead.
fn locate(text: &str, e: serde_json::Error) -> String {
    let msg = e.to_string();
    if e.line() > 0 && !msg.ends_with("line 0 column 0") {
        return msg;
    }
    let msg = msg.trim_end_matches(" at line 0 column 0").to_string();
    let key = msg.split('`').nth(1).map(|k| format!("\"{k}\""));
    match key.and_then(|k| text.find(&k)) {
        Some(at) => {
            let before = &text[..at];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
            format!("{msg} at line {line} column {column}")
        }
        None => msg,
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            RunError::Config(msg) => RunError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, RunError> {
        serde_json::from_str(text).map_err(|e| RunError::Config(locate(text, e)))
    }

    pub fn output(&self) -> Option<&Path> {
        match self {
            RunConfig::Solve { output, .. }
            | RunConfig::Density { output, .. }
            | RunConfig::Sample { output, .. }
            | RunConfig::Rate { output, .. }
            | RunConfig::Universality { output, .. }
            | RunConfig::CirculantKs { output, .. }
            | RunConfig::Wishart { output, .. } => output.as_deref(),
        }
    }

    /// Applies command-line overrides. `solve` and `density` are
    /// deterministic and ignore the seed.
    pub fn with_overrides(mut self, out: Option<PathBuf>, seed: Option<u64>) -> Self {
        match &mut self {
            RunConfig::Solve { output, .. } | RunConfig::Density { output, .. } => {
                if out.is_some() {
                    *output = out;
                }
            }
            RunConfig::Sample { output, seed: s, .. }
            | RunConfig::Rate { output, seed: s, .. }
            | RunConfig::Universality { output, seed: s, .. }
            | RunConfig::CirculantKs { output, seed: s, .. }
            | RunConfig::Wishart { output, seed: s, .. } => {
                if out.is_some() {
                    *output = out;
                }
                if seed.is_some() {
                    *s = seed;
                }
            }
        }
        self
    }

    pub fn to_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

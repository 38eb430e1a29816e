//! Run configuration: a sectioned TOML file, parsed strictly.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use she_moments::kernel::{Density, ExpMoment};
use she_moments::sim::{Rho, Target};
use she_moments::{CorrelationKernel, HeatParams, InitialMeasure};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub kernel: KernelSection,
    pub heat: HeatSection,
    pub measure: Option<MeasureSection>,
    pub grid: Option<GridSection>,
    pub upsilon: Option<UpsilonSection>,
    pub phase: Option<PhaseSection>,
    pub fronts: Option<FrontsSection>,
    pub moments: Option<MomentsSection>,
    pub simulate: Option<SimulateSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSection {
    Riesz {
        alpha: f64,
        dim: usize,
    },
    Ou {
        alpha: f64,
        c: f64,
        dim: usize,
    },
    Poisson {
        dim: usize,
    },
    Cauchy {
        dim: usize,
    },
    Constant {
        level: f64,
        dim: usize,
    },
    WhiteNoise,
    Box {
        a: f64,
        dim: usize,
    },
    Tabulated {
        radii: Vec<f64>,
        values: Vec<f64>,
        dim: usize,
    },
    TabulatedCsv {
        path: PathBuf,
        dim: usize,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatSection {
    pub nu: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpMomentSection {
    pub beta: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSection {
    pub x: Vec<f64>,
    pub w: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSection {
    Dirac {
        at: Vec<f64>,
        exp_moment: Option<ExpMomentSection>,
    },
    Atoms {
        atoms: Vec<AtomSection>,
        exp_moment: Option<ExpMomentSection>,
    },
    Lebesgue {
        c: f64,
    },
    DensityTable {
        x: Vec<f64>,
        values: Vec<f64>,
        exp_moment: Option<ExpMomentSection>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    #[serde(default = "yes")]
    pub log: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpsilonSection {
    pub betas: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseSection {
    pub lip: f64,
    #[serde(rename = "Lip")]
    pub lip_upper: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontsSection {
    /// Each entry sets `lip = Lip = λ`.
    pub lambdas: Vec<f64>,
    /// Defaults to `λ^2/ν` per row.
    pub beta: Option<f64>,
    #[serde(default)]
    pub all_exp_moments: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSection {
    pub t: f64,
    pub x: Vec<f64>,
    pub xp: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsSection {
    pub lip: f64,
    #[serde(rename = "Lip")]
    pub lip_upper: f64,
    pub points: Vec<PointSection>,
    pub n_steps: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RhoSection {
    Linear {
        lambda: f64,
    },
    Table {
        u: Vec<f64>,
        values: Vec<f64>,
        lip: f64,
        #[serde(rename = "Lip")]
        lip_upper: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub t: f64,
    pub x: f64,
    pub xp: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub rho: RhoSection,
    pub half_width: f64,
    pub n_x: usize,
    pub t_max: f64,
    pub n_t: usize,
    pub n_paths: usize,
    #[serde(default)]
    pub antithetic: bool,
    #[serde(default)]
    pub targets: Vec<TargetSection>,
}

fn cfg_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(cfg_err)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn kernel(&self) -> Result<CorrelationKernel, CliError> {
        let k = match &self.kernel {
            KernelSection::Riesz { alpha, dim } => CorrelationKernel::riesz(*alpha, *dim),
            KernelSection::Ou { alpha, c, dim } => CorrelationKernel::ou(*alpha, *c, *dim),
            KernelSection::Poisson { dim } => CorrelationKernel::poisson(*dim),
            KernelSection::Cauchy { dim } => CorrelationKernel::cauchy(*dim),
            KernelSection::Constant { level, dim } => CorrelationKernel::constant(*level, *dim),
            KernelSection::WhiteNoise => Ok(CorrelationKernel::white_noise()),
            KernelSection::Box { a, dim } => CorrelationKernel::box_indicator(*a, *dim),
            KernelSection::Tabulated { radii, values, dim } => {
                CorrelationKernel::tabulated(radii.clone(), values.clone(), *dim)
            }
            KernelSection::TabulatedCsv { path, dim } => CorrelationKernel::tabulated_from_csv(path, *dim),
        };
        k.map_err(cfg_err)
    }

    pub fn heat(&self) -> Result<HeatParams, CliError> {
        let dim = self.kernel()?.dim();
        HeatParams::new(self.heat.nu, dim).map_err(cfg_err)
    }

    pub fn measure(&self) -> Result<InitialMeasure, CliError> {
        let section = self
            .measure
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [measure] section".into()))?;
        let with_moment = |mu: InitialMeasure, m: &Option<ExpMomentSection>| match m {
            Some(m) => mu.with_exp_moment(ExpMoment {
                beta: m.beta,
                value: m.value,
            }),
            None => Ok(mu),
        };
        let dim = self.kernel()?.dim();
        let mu = match section {
            MeasureSection::Dirac { at, exp_moment } => {
                InitialMeasure::dirac(at.clone()).and_then(|m| with_moment(m, exp_moment))
            }
            MeasureSection::Atoms { atoms, exp_moment } => {
                InitialMeasure::atoms(atoms.iter().map(|a| (a.x.clone(), a.w)).collect())
                    .and_then(|m| with_moment(m, exp_moment))
            }
            MeasureSection::Lebesgue { c } => InitialMeasure::lebesgue(*c, dim),
            MeasureSection::DensityTable { x, values, exp_moment } => Density::from_table_1d(x.clone(), values.clone())
                .and_then(InitialMeasure::density)
                .and_then(|m| with_moment(m, exp_moment)),
        }
        .map_err(cfg_err)?;
        if mu.dim() != dim {
            return Err(CliError::Config(format!(
                "measure dimension {} differs from kernel dimension {dim}",
                mu.dim()
            )));
        }
        Ok(mu)
    }

    pub fn section<'a, T>(&self, s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        s.as_ref()
            .ok_or_else(|| CliError::Config(format!("missing [{name}] section")))
    }
}

impl RhoSection {
    pub fn build(&self) -> Result<Rho, CliError> {
        match self {
            RhoSection::Linear { lambda } => Ok(Rho::Linear(*lambda)),
            RhoSection::Table {
                u,
                values,
                lip,
                lip_upper,
            } => Rho::table(u.clone(), values.clone(), *lip, *lip_upper).map_err(cfg_err),
        }
    }
}

impl TargetSection {
    pub fn target(&self) -> Target {
        Target {
            t: self.t,
            x: self.x,
            xp: self.xp,
        }
    }
}

//! Versioned JSON run configuration.

use std::path::PathBuf;

use outbreak_core::experiments::{
    default_init, FigureOverrides, NamedLevel, ParamFamily, QLevel, StrategyTemplate, DEFAULT_POPULATION,
};
use outbreak_core::model::{make_seiaqr, make_seiar, ModelParams, StageSpec, State};
use outbreak_core::{IntegrationConfig, Strategy};
use serde::{Deserialize, Serialize};

use crate::app::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Explicit list of parallel infectious stages.
    SeirN { sigma: f64, stages: Vec<StageSpec> },
    Seiar {
        r0: f64,
        sigma: f64,
        gamma: f64,
        chi: f64,
        xi: f64,
    },
    Seiaqr {
        r0: f64,
        sigma: f64,
        gamma: f64,
        chi: f64,
        xi: f64,
        zeta_i: f64,
        zeta_a: f64,
    },
}

impl ModelSpec {
    pub fn table2() -> Self {
        Self::Seiar {
            r0: 3.0,
            sigma: 0.2,
            gamma: 1.0 / 1.61,
            chi: 0.862,
            xi: 0.55,
        }
    }

    pub fn build(&self) -> outbreak_core::Result<ModelParams> {
        match self {
            Self::SeirN { sigma, stages } => ModelParams::new(*sigma, stages.clone()),
            Self::Seiar {
                r0,
                sigma,
                gamma,
                chi,
                xi,
            } => make_seiar(*r0, *sigma, *gamma, *chi, *xi),
            Self::Seiaqr {
                r0,
                sigma,
                gamma,
                chi,
                xi,
                zeta_i,
                zeta_a,
            } => make_seiaqr(*r0, *sigma, *gamma, *chi, *xi, *zeta_i, *zeta_a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitSpec {
    /// `exposed` people out of `population`, everyone else susceptible.
    Seeded { population: f64, exposed: f64 },
    /// Fractions given directly.
    Explicit { state: State },
}

impl Default for InitSpec {
    fn default() -> Self {
        Self::Seeded {
            population: DEFAULT_POPULATION,
            exposed: 1.0,
        }
    }
}

impl InitSpec {
    pub fn build(&self, params: &ModelParams) -> outbreak_core::Result<State> {
        match self {
            Self::Seeded { population, exposed } if *exposed == 1.0 => default_init(params, *population),
            Self::Seeded { population, exposed } => State::seeded(params.n_stages(), *population, *exposed),
            Self::Explicit { state } => {
                if state.n_stages() != params.n_stages() {
                    return Err(outbreak_core::Error::InvalidState(format!(
                        "initial state has {} stages, model has {}",
                        state.n_stages(),
                        params.n_stages()
                    )));
                }
                State::new(state.s, state.e, state.i.clone(), state.r)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    /// Directory receiving the CSV files.
    pub dir: PathBuf,
    /// Also write the event log of `simulate`.
    pub events: bool,
    /// Write an SVG chart next to each CSV.
    pub plot: bool,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            events: true,
            plot: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSpec {
    /// Strategy started at each `t_i_grid` value by `scan-ti`.
    pub template: StrategyTemplate,
    pub t_i_grid: Vec<f64>,
    /// Start of the regulated strategies of `scan-delta`.
    pub t_i: f64,
    pub delta_grid: Vec<f64>,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            template: StrategyTemplate::ConstantFinite {
                duration: 60.0,
                q: QLevel::Named(NamedLevel::SStar),
            },
            t_i_grid: (1..=50).map(|k| 5.0 * k as f64).collect(),
            t_i: 110.0,
            delta_grid: vec![1.0, 5.0, 10.0, 20.0, 40.0, 60.0, 80.0, 100.0, 120.0, 160.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuarantineSpec {
    pub chi: f64,
    pub xi: f64,
    pub r0: f64,
    pub zeta_i_grid: Vec<f64>,
}

impl Default for QuarantineSpec {
    fn default() -> Self {
        Self {
            chi: 0.862,
            xi: 0.55,
            r0: 3.0,
            zeta_i_grid: (0..=10).map(|k| k as f64 / 10.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropsSpec {
    pub family: ParamFamily,
    pub trials: usize,
    pub seed: u64,
}

impl Default for PropsSpec {
    fn default() -> Self {
        Self {
            family: ParamFamily::default(),
            trials: 100,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub model: ModelSpec,
    #[serde(default = "natural")]
    pub strategy: Strategy,
    #[serde(default)]
    pub init: InitSpec,
    #[serde(default)]
    pub integration: IntegrationConfig,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub scan: ScanSpec,
    #[serde(default)]
    pub figure: FigureOverrides,
    #[serde(default)]
    pub quarantine: QuarantineSpec,
    #[serde(default)]
    pub props: PropsSpec,
}

fn natural() -> Strategy {
    Strategy::Natural {}
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: SCHEMA_VERSION,
            model: ModelSpec::table2(),
            strategy: natural(),
            init: InitSpec::default(),
            integration: IntegrationConfig::default(),
            outputs: Outputs::default(),
            scan: ScanSpec::default(),
            figure: FigureOverrides::default(),
            quarantine: QuarantineSpec::default(),
            props: PropsSpec::default(),
        }
    }
}

impl RunConfig {
    /// Checks every section against the library validators.
    pub fn validate(&self) -> Result<(), CliError> {
        let invalid =
            |section: &str, e: outbreak_core::Error| CliError::Validation(format!("{section}: {e}"));
        if self.version != SCHEMA_VERSION {
            return Err(CliError::Validation(format!(
                "version: unsupported schema version {}, expected {SCHEMA_VERSION}",
                self.version
            )));
        }
        let params = self.model.build().map_err(|e| invalid("model", e))?;
        self.strategy
            .validate(params.n_stages())
            .map_err(|e| invalid("strategy", e))?;
        self.init.build(&params).map_err(|e| invalid("init", e))?;
        self.integration
            .validate()
            .map_err(|e| invalid("integration", e))?;
        self.scan
            .template
            .instantiate(&params, 1.0)
            .map_err(|e| invalid("scan.template", e))?;
        if self.props.trials == 0 {
            return Err(CliError::Validation("props.trials must be positive".into()));
        }
        Ok(())
    }
}

/// Parses and validates a configuration. Unknown keys are errors.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let cfg: RunConfig =
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config parse error: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

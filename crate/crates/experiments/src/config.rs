//! Experiment configuration.
//!
//! A config file names an experiment kind; every other key is optional and
//! falls back to that kind's defaults. Keys that the kind does not use are
//! rejected so typos never pass silently.

use std::path::{Path, PathBuf};

use iesis_core::dct::Ordering;
use serde::{Deserialize, Serialize};

use crate::error::{ExperimentError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SourceLocation,
    ChannelDct,
    FractureFractional,
    CustomLinear,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        Self::SourceLocation,
        Self::ChannelDct,
        Self::FractureFractional,
        Self::CustomLinear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::SourceLocation => "source_location",
            Self::ChannelDct => "channel_dct",
            Self::FractureFractional => "fracture_fractional",
            Self::CustomLinear => "custom_linear",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| {
                ExperimentError::config(format!(
                    "unknown experiment `{name}`; expected one of {}",
                    Self::ALL.map(|k| k.name()).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversionSection {
    pub n_ensemble: usize,
    pub lambda0: f64,
    pub nu: f64,
    pub rho: f64,
    pub eps_stop: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    /// Grid used to generate the synthetic data.
    pub data_nx: usize,
    pub data_ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub dt: f64,
    /// Step used to generate the synthetic data.
    pub data_dt: f64,
    /// Final time; data are observed there.
    pub horizon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorLayout {
    /// `sensors_x × sensors_y` points spanning `x_range × y_range`, edges included.
    Lattice,
    /// `sensors_x × sensors_y` points strictly inside the unit square.
    Interior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSection {
    pub sigma: f64,
    pub layout: SensorLayout,
    pub sensors_x: usize,
    pub sensors_y: usize,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub strength: f64,
    pub width: f64,
    pub truth: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    /// Constant source term.
    pub source: f64,
    /// Log-permeability of the background and channel facies.
    pub facies_low: f64,
    pub facies_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FractureSection {
    pub source: f64,
    pub fracture_permeability: f64,
    /// `(α, x0, y0, L0)`.
    pub truth: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearDriver {
    Gaussian,
    Mixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSection {
    pub n_params: usize,
    pub n_data: usize,
    pub sigma: f64,
    pub driver: LinearDriver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmSection {
    pub k_min: usize,
    pub k_max: usize,
    pub eps_screen: f64,
    pub max_inner: usize,
    pub fd_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DctSection {
    pub n_c: usize,
    pub alpha: f64,
    pub ordering: Ordering,
    pub tau: f64,
    pub b: [f64; 4],
    pub lower: f64,
    pub upper: f64,
    /// Feed post-processed fields to the forward model.
    pub project_forward: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Members used for state standard-deviation fields; 0 disables them.
    pub state_members: usize,
    pub histogram_bins: usize,
    /// Noise replicates per member for prediction intervals.
    pub prediction_replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub output: PathBuf,
    pub inversion: InversionSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<TimeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<ObservationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fracture: Option<FractureSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gmm: Option<GmmSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dct: Option<DctSection>,
    pub diagnostics: DiagnosticsSection,
}

fn inversion(rho: f64) -> InversionSection {
    InversionSection {
        n_ensemble: 500,
        lambda0: 1.0,
        nu: 2.0,
        rho,
        eps_stop: 1e-3,
        max_iter: 20,
    }
}

fn gmm() -> GmmSection {
    GmmSection {
        k_min: 2,
        k_max: 5,
        eps_screen: 0.05,
        max_inner: 50,
        fd_step: 1e-4,
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults for `kind`.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let diagnostics = DiagnosticsSection {
            state_members: 100,
            histogram_bins: iesis_core::diagnostics::DEFAULT_BINS,
            prediction_replicates: 4,
        };
        let base = Self {
            experiment: kind,
            seed: 1,
            output: PathBuf::from("runs").join(kind.name()),
            inversion: inversion(1.0),
            grid: None,
            time: None,
            observation: None,
            source: None,
            channel: None,
            fracture: None,
            linear: None,
            gmm: None,
            dct: None,
            diagnostics,
        };
        match kind {
            ExperimentKind::SourceLocation => Self {
                grid: Some(GridSection {
                    nx: 50,
                    ny: 50,
                    data_nx: 100,
                    data_ny: 100,
                }),
                observation: Some(ObservationSection {
                    sigma: 0.01,
                    layout: SensorLayout::Lattice,
                    sensors_x: 4,
                    sensors_y: 5,
                    x_range: [0.1, 0.7],
                    y_range: [0.0, 1.0],
                }),
                source: Some(SourceSection {
                    strength: std::f64::consts::E.powi(2),
                    width: 0.05,
                    truth: [0.09, 0.23],
                }),
                gmm: Some(gmm()),
                ..base
            },
            ExperimentKind::ChannelDct => Self {
                inversion: inversion(10.0),
                grid: Some(GridSection {
                    nx: 30,
                    ny: 30,
                    data_nx: 60,
                    data_ny: 60,
                }),
                time: Some(TimeSection {
                    dt: 0.02,
                    data_dt: 0.01,
                    horizon: 1.0,
                }),
                observation: Some(ObservationSection {
                    sigma: 0.01,
                    layout: SensorLayout::Interior,
                    sensors_x: 21,
                    sensors_y: 24,
                    x_range: [0.0, 1.0],
                    y_range: [0.0, 1.0],
                }),
                channel: Some(ChannelSection {
                    source: 10.0,
                    facies_low: 0.0,
                    facies_high: 1.0,
                }),
                dct: Some(DctSection {
                    n_c: 200,
                    alpha: 0.95,
                    ordering: Ordering::Zigzag,
                    tau: 0.75,
                    b: [1.0, 0.0, 1.0, 1.0],
                    lower: 0.0,
                    upper: 1.0,
                    project_forward: true,
                }),
                ..base
            },
            ExperimentKind::FractureFractional => Self {
                inversion: InversionSection {
                    max_iter: 10,
                    ..inversion(10.0)
                },
                grid: Some(GridSection {
                    nx: 50,
                    ny: 50,
                    data_nx: 100,
                    data_ny: 100,
                }),
                time: Some(TimeSection {
                    dt: 0.05,
                    data_dt: 0.1,
                    horizon: 5.0,
                }),
                observation: Some(ObservationSection {
                    sigma: 0.03,
                    layout: SensorLayout::Lattice,
                    sensors_x: 3,
                    sensors_y: 6,
                    x_range: [0.3, 0.7],
                    y_range: [0.0, 1.0],
                }),
                fracture: Some(FractureSection {
                    source: 10.0,
                    fracture_permeability: 1e4,
                    truth: [0.7, 0.3, 0.6, 0.4],
                }),
                gmm: Some(gmm()),
                ..base
            },
            ExperimentKind::CustomLinear => Self {
                inversion: InversionSection {
                    n_ensemble: 2000,
                    max_iter: 10,
                    eps_stop: 0.0,
                    ..inversion(1.0)
                },
                linear: Some(LinearSection {
                    n_params: 8,
                    n_data: 5,
                    sigma: 0.1,
                    driver: LinearDriver::Gaussian,
                }),
                gmm: Some(GmmSection {
                    k_min: 1,
                    k_max: 1,
                    ..gmm()
                }),
                ..base
            },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ExperimentError::config(e.to_string()))?;
        let kind = match user.get("experiment") {
            Some(toml::Value::String(s)) => ExperimentKind::parse(s)?,
            Some(_) => return Err(ExperimentError::config("`experiment` must be a string")),
            None => return Err(ExperimentError::config("missing `experiment`")),
        };
        let defaults = toml::Table::try_from(Self::defaults(kind))
            .map_err(|e| ExperimentError::config(format!("defaults do not serialize: {e}")))?;
        let merged = merge(defaults, user, "")?;
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| ExperimentError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(ExperimentError::config(format!("{field}: {why}")));
        let inv = &self.inversion;
        if inv.n_ensemble < 2 {
            return bad("inversion.n_ensemble", "must be at least 2");
        }
        if !(inv.lambda0 > 0.0) {
            return bad("inversion.lambda0", "must be positive");
        }
        if !(inv.nu >= 1.0) {
            return bad("inversion.nu", "must be at least 1");
        }
        if !(inv.rho > 0.0) {
            return bad("inversion.rho", "must be positive");
        }
        if !(inv.eps_stop >= 0.0) {
            return bad("inversion.eps_stop", "must be nonnegative");
        }
        if inv.max_iter == 0 {
            return bad("inversion.max_iter", "must be positive");
        }
        if let Some(g) = &self.grid {
            if g.nx < 2 || g.ny < 2 {
                return bad("grid", "needs at least 2 cells per direction");
            }
            if g.data_nx <= g.nx || g.data_ny <= g.ny {
                return bad("grid.data_nx/data_ny", "data grid must be strictly finer than the inversion grid");
            }
        }
        if let Some(t) = &self.time {
            if !(t.dt > 0.0 && t.data_dt > 0.0) {
                return bad("time.dt/data_dt", "must be positive");
            }
            if !(t.horizon >= t.dt && t.horizon >= t.data_dt) {
                return bad("time.horizon", "must cover at least one step");
            }
        }
        if let Some(o) = &self.observation {
            if !(o.sigma >= 0.0) {
                return bad("observation.sigma", "must be nonnegative");
            }
            if o.sensors_x == 0 || o.sensors_y == 0 {
                return bad("observation.sensors_x/sensors_y", "must be positive");
            }
            let in_unit = |r: [f64; 2]| 0.0 <= r[0] && r[0] <= r[1] && r[1] <= 1.0;
            if !in_unit(o.x_range) || !in_unit(o.y_range) {
                return bad("observation.x_range/y_range", "must be ordered subranges of [0, 1]");
            }
        }
        if let Some(s) = &self.source {
            if !(s.strength.is_finite() && s.width > 0.0) {
                return bad("source", "strength must be finite and width positive");
            }
        }
        if let Some(c) = &self.channel {
            if !(c.facies_low < c.facies_high) {
                return bad("channel.facies_low/facies_high", "low facies must be below high facies");
            }
        }
        if let Some(f) = &self.fracture {
            if !(f.fracture_permeability > 0.0) {
                return bad("fracture.fracture_permeability", "must be positive");
            }
            if !f.truth.iter().all(|v| *v > 0.0 && *v < 1.0) {
                return bad("fracture.truth", "entries must lie in (0, 1)");
            }
        }
        if let Some(l) = &self.linear {
            if l.n_params == 0 || l.n_data == 0 || !(l.sigma > 0.0) {
                return bad("linear", "needs positive sizes and sigma");
            }
        }
        if let Some(g) = &self.gmm {
            if g.k_min == 0 {
                return bad("gmm.k_min", "must be at least 1");
            }
            if g.k_max < g.k_min {
                return bad("gmm.k_max", "must be at least k_min");
            }
            if g.k_max > inv.n_ensemble {
                return bad("gmm.k_max", "exceeds the ensemble size");
            }
            if !(g.eps_screen >= 0.0 && g.eps_screen < 1.0) {
                return bad("gmm.eps_screen", "must lie in [0, 1)");
            }
            if !(g.fd_step > 0.0) {
                return bad("gmm.fd_step", "must be positive");
            }
        }
        if let Some(d) = &self.dct {
            let cells = self.grid.as_ref().map(|g| g.nx * g.ny).unwrap_or(0);
            if d.n_c == 0 || d.n_c > cells {
                return bad("dct.n_c", "must lie between 1 and the number of cells");
            }
            if !(d.alpha > 0.0 && d.alpha <= 1.0) {
                return bad("dct.alpha", "must lie in (0, 1]");
            }
            if let Err(e) = iesis_core::postprocess::PostProcessSpec::new(d.tau, d.b, d.lower, d.upper) {
                return bad("dct.tau/b/lower/upper", &e.to_string());
            }
        }
        if self.diagnostics.histogram_bins == 0 || self.diagnostics.prediction_replicates == 0 {
            return bad("diagnostics", "histogram_bins and prediction_replicates must be positive");
        }
        Ok(())
    }
}

/// Overlays `user` on `defaults`; any key absent from the defaults is an error.
fn merge(mut defaults: toml::Table, user: toml::Table, prefix: &str) -> Result<toml::Table> {
    for (key, value) in user {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match (defaults.remove(&key), value) {
            (None, _) => return Err(ExperimentError::config(format!("unknown key `{path}`"))),
            (Some(toml::Value::Table(d)), toml::Value::Table(u)) => {
                defaults.insert(key, toml::Value::Table(merge(d, u, &path)?));
            }
            (Some(toml::Value::Table(_)), _) => {
                return Err(ExperimentError::config(format!("`{path}` must be a table")));
            }
            (Some(_), v) => {
                defaults.insert(key, v);
            }
        }
    }
    Ok(defaults)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ExperimentConfig::from_toml_str("experiment = \"source_location\"").unwrap();
        assert_eq!(c.inversion.lambda0, 1.0);
        assert_eq!(c.inversion.nu, 2.0);
        assert_eq!(c, ExperimentConfig::defaults(ExperimentKind::SourceLocation));
    }

    #[test]
    fn echo_roundtrips() {
        for kind in ExperimentKind::ALL {
            let c = ExperimentConfig::defaults(kind);
            c.validate().unwrap();
            assert_eq!(ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
        }
    }

    #[test]
    fn rejections_name_the_field() {
        let cases = [
            ("experiment = \"source_location\"\n[gmm]\nk_min = 3\nk_max = 2", "gmm.k_max"),
            ("experiment = \"source_location\"\n[inversion]\nrho_typo = 1.0", "inversion.rho_typo"),
            ("experiment = \"source_location\"\n[dct]\nn_c = 3", "dct"),
            ("experiment = \"channel_dct\"\n[grid]\ndata_nx = 30", "grid.data_nx"),
            ("experiment = \"warp\"", "warp"),
        ];
        for (text, needle) in cases {
            let e = ExperimentConfig::from_toml_str(text).unwrap_err();
            assert!(e.to_string().contains(needle), "{e}");
            assert_eq!(e.exit_code(), 2);
        }
    }
}

//! The experiment configuration: a flat TOML file whose sections map one to
//! one onto the structs below. Unknown keys are rejected everywhere.

use kawasaki_core::lattice::Domain;
use kawasaki_core::rates::{cooperative, sample_disorder, speed_change, ssep, RateModel};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Conductivity,
    Duality,
    Corrector,
    Clt,
    Lifting,
    Hydro,
    Disorder,
    ValidateRates,
    InequalitySuite,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
    pub rate: RateSection,
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub density: DensitySection,
    #[serde(default)]
    pub hydro: HydroSection,
    #[serde(default)]
    pub disorder: DisorderSection,
    #[serde(default)]
    pub suite: SuiteSection,
    #[serde(default)]
    pub lifting: LiftingSection,
    #[serde(default)]
    pub clt: CltSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKindName {
    Ssep,
    SpeedChange,
    Cooperative,
    Disordered,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    pub kind: RateKindName,
    pub a: Option<f64>,
    pub a_max: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub d: usize,
    /// Cube sides Λ_L.
    pub sides: Vec<u64>,
    /// Triadic levels m (□_m = Λ_{3^m}); used instead of `sides` when given.
    pub triadic: Option<Vec<u32>>,
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection { d: 1, sides: vec![3, 5], triadic: None }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensitySection {
    pub values: Vec<f64>,
    /// `"1/64"` replaces `values` by the grid {1/64, …, 63/64}.
    pub grid: Option<String>,
}

impl Default for DensitySection {
    fn default() -> Self {
        DensitySection { values: vec![0.5], grid: None }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct HydroSection {
    pub sizes: Vec<usize>,
    pub horizon: f64,
    pub replicas: usize,
    pub alpha: f64,
    pub grid: usize,
    pub reference_side: u64,
    pub amplitude: f64,
    pub require_decreasing: bool,
}

impl Default for HydroSection {
    fn default() -> Self {
        HydroSection {
            sizes: vec![32, 64, 128],
            horizon: 0.05,
            replicas: 32,
            alpha: 1.0,
            grid: 128,
            reference_side: 5,
            amplitude: 0.25,
            require_decreasing: true,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisorderSection {
    pub samples: u64,
    pub levels: Vec<u32>,
}

impl Default for DisorderSection {
    fn default() -> Self {
        DisorderSection { samples: 32, levels: vec![0, 1] }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteSection {
    pub cases: usize,
}

impl Default for SuiteSection {
    fn default() -> Self {
        SuiteSection { cases: 200 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct LiftingSection {
    pub functions: usize,
    pub sites: usize,
}

impl Default for LiftingSection {
    fn default() -> Self {
        LiftingSection { functions: 10, sites: 3 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CltSection {
    pub exteriors: u64,
}

impl Default for CltSection {
    fn default() -> Self {
        CltSection { exteriors: 4 }
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<String>,
}

/// A config that failed to load, with the exit-code class it belongs to.
#[derive(Debug)]
pub enum LoadError {
    Parse { line: usize, column: usize, message: String },
    Validation { line: Option<usize>, column: Option<usize>, message: String },
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, column)
}

impl Config {
    /// Syntax errors are parse errors; a well-formed document that does not
    /// fit the schema (unknown key, wrong type, missing field) or fails the
    /// range checks is a validation error.
    pub fn parse(text: &str) -> Result<Config, LoadError> {
        if let Err(e) = text.parse::<toml::Table>() {
            let (line, column) = e.span().map_or((1, 1), |s| line_col(text, s.start));
            return Err(LoadError::Parse { line, column, message: e.message().to_string() });
        }
        let config: Config = toml::from_str(text).map_err(|e| {
            let pos = e.span().map(|s| line_col(text, s.start));
            LoadError::Validation { line: pos.map(|p| p.0), column: pos.map(|p| p.1), message: e.message().to_string() }
        })?;
        config
            .validate()
            .map_err(|message| LoadError::Validation { line: None, column: None, message })?;
        Ok(config)
    }

    pub fn model(&self) -> Result<RateModel, String> {
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| format!("rate.{key} is required for rate.kind = {:?}", self.rate.kind));
        let m = match self.rate.kind {
            RateKindName::Ssep => Ok(ssep()),
            RateKindName::SpeedChange => speed_change(need(self.rate.a, "a")?),
            RateKindName::Cooperative => cooperative(need(self.rate.a, "a")?),
            RateKindName::Disordered => sample_disorder(need(self.rate.a_max, "a_max")?, self.rate.seed.unwrap_or(0)),
        };
        m.map_err(|e| e.to_string())
    }

    pub fn densities(&self) -> Vec<f64> {
        match &self.density.grid {
            Some(_) => kawasaki_core::variational::density_grid(),
            None => self.density.values.clone(),
        }
    }

    /// (label L, domain) for every requested box.
    pub fn domains(&self) -> Result<Vec<(u64, Domain)>, String> {
        let d = self.geometry.d;
        let out: kawasaki_core::Result<Vec<(u64, Domain)>> = match &self.geometry.triadic {
            Some(levels) => levels.iter().map(|&m| Domain::triadic(m, d).map(|dom| (3u64.pow(m), dom))).collect(),
            None => self.geometry.sides.iter().map(|&l| Domain::cube(l, d).map(|dom| (l, dom))).collect(),
        };
        out.map_err(|e| e.to_string())
    }

    fn validate(&self) -> Result<(), String> {
        let rate = &self.rate;
        let stray = |key: &str, present: bool| {
            if present {
                Err(format!("rate.{key} does not apply to rate.kind = {:?}", rate.kind))
            } else {
                Ok(())
            }
        };
        match rate.kind {
            RateKindName::Ssep => {
                stray("a", rate.a.is_some())?;
                stray("a_max", rate.a_max.is_some())?;
                stray("seed", rate.seed.is_some())?;
            }
            RateKindName::SpeedChange | RateKindName::Cooperative => {
                stray("a_max", rate.a_max.is_some())?;
                stray("seed", rate.seed.is_some())?;
            }
            RateKindName::Disordered => stray("a", rate.a.is_some())?,
        }
        self.model()?;
        if !(1..=3).contains(&self.geometry.d) {
            return Err(format!("geometry.d = {} must be 1, 2 or 3", self.geometry.d));
        }
        if self.geometry.triadic.is_none() && self.geometry.sides.is_empty() {
            return Err("geometry.sides is empty".into());
        }
        if self.geometry.sides.contains(&0) {
            return Err("geometry.sides must be positive".into());
        }
        if let Some(levels) = &self.geometry.triadic {
            if levels.is_empty() || levels.iter().any(|&m| m > 3) {
                return Err("geometry.triadic must list levels in 0..=3".into());
            }
        }
        match &self.density.grid {
            Some(g) if g != "1/64" => return Err(format!("density.grid = {g:?}; only \"1/64\" is supported")),
            _ => {}
        }
        let rhos = self.densities();
        if rhos.is_empty() {
            return Err("density.values is empty".into());
        }
        if let Some(r) = rhos.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return Err(format!("density {r} outside (0, 1)"));
        }
        match self.kind {
            Kind::Hydro => {
                let h = &self.hydro;
                if self.geometry.d != 1 {
                    return Err("hydro runs in d = 1".into());
                }
                if h.sizes.is_empty() || h.sizes.windows(2).any(|w| w[1] <= w[0]) {
                    return Err("hydro.sizes must be strictly increasing".into());
                }
                if h.sizes[0] < 4 {
                    return Err("hydro.sizes must be at least 4".into());
                }
                if !(h.horizon >= 0.0 && h.horizon.is_finite()) {
                    return Err("hydro.horizon must be a finite T ≥ 0".into());
                }
                if h.replicas == 0 {
                    return Err("hydro.replicas must be positive".into());
                }
                if h.alpha <= 0.5 {
                    return Err("hydro.alpha must exceed d/2 = 0.5".into());
                }
                if h.grid < 16 {
                    return Err("hydro.grid must be at least 16".into());
                }
                if !(h.amplitude > 0.0 && h.amplitude < 0.5) {
                    return Err("hydro.amplitude must lie in (0, 0.5)".into());
                }
                if h.reference_side == 0 {
                    return Err("hydro.reference_side must be positive".into());
                }
            }
            Kind::Disorder => {
                if rate.kind != RateKindName::Disordered {
                    return Err("disorder needs rate.kind = \"disordered\"".into());
                }
                if self.disorder.samples < 2 {
                    return Err("disorder.samples must be at least 2".into());
                }
                let l = &self.disorder.levels;
                if l.is_empty() || l.windows(2).any(|w| w[1] <= w[0]) || l.iter().any(|&m| m > 3) {
                    return Err("disorder.levels must be strictly increasing in 0..=3".into());
                }
            }
            Kind::InequalitySuite => {
                if self.suite.cases == 0 {
                    return Err("suite.cases must be positive".into());
                }
            }
            Kind::Lifting => {
                if self.lifting.functions == 0 || !(1..=4).contains(&self.lifting.sites) {
                    return Err("lifting.functions must be positive and lifting.sites in 1..=4".into());
                }
            }
            Kind::Clt => {
                if self.clt.exteriors == 0 {
                    return Err("clt.exteriors must be positive".into());
                }
            }
            _ => {}
        }
        Ok(())
    }
}

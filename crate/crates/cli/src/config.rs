//! Experiment configuration: a sectioned TOML file, overridden key by key
//! from the command line (`--grid.nx 201`).

use std::path::Path;

use serde::{Deserialize, Serialize};
use tcilab::convolution::FactorizationParams;
use tcilab::estimators::{McParams, SigmaProfile, SpaceFamily};
use tcilab::noise::ShiftSpec;
use tcilab::solver::{CoefficientSpec, COEFFICIENT_PRESETS};
use tcilab::GridSpec;
use toml::{Table, Value};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("`{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("malformed override: {0}")]
    Override(String),
}

fn bad(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub replicas: usize,
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { replicas: 256, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub half_width: f64,
    pub nx: usize,
    pub horizon: f64,
    pub nt: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = GridSpec::default();
        GridSection {
            half_width: g.half_width,
            nx: g.nx,
            horizon: g.horizon,
            nt: g.nt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoefficientSection {
    pub preset: String,
    pub l_b: f64,
    pub l_sigma: f64,
    pub k_sigma: f64,
}

impl Default for CoefficientSection {
    fn default() -> Self {
        CoefficientSection {
            preset: "default".into(),
            l_b: 1.0,
            l_sigma: 0.5,
            k_sigma: 1.0,
        }
    }
}

/// Initial field `amplitude * exp(-x^2 / 2 width^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub amplitude: f64,
    pub width: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection { amplitude: 1.0, width: 1.0 }
    }
}

pub const SHIFT_KINDS: [&str; 4] = ["bump", "plateau", "feedback", "zero"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftSection {
    pub kind: String,
    /// Height for `bump` and `plateau`, bound for `feedback`.
    pub amplitude: f64,
    pub width: f64,
    pub radius: f64,
    pub t0: f64,
    pub t1: f64,
}

impl Default for ShiftSection {
    fn default() -> Self {
        ShiftSection {
            kind: "bump".into(),
            amplitude: 0.1,
            width: 1.0,
            radius: 1.0,
            t0: 0.0,
            t1: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TciSection {
    pub lambdas: Vec<f64>,
    pub n_max: usize,
    pub tail_tol: f64,
    pub family: SpaceFamily,
    /// Multipliers of the shift for the scaling sweep.
    pub amplitudes: Vec<f64>,
}

impl Default for TciSection {
    fn default() -> Self {
        TciSection {
            lambdas: vec![1.0, 0.5, 1.0 / 3.0, 0.25, 0.125],
            n_max: 8,
            tail_tol: 1e-6,
            family: SpaceFamily::L2Tem,
            amplitudes: vec![0.5, 1.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsometrySection {
    pub profiles: Vec<SigmaProfile>,
    pub lambda: f64,
    /// Evaluation time; `0` means the horizon.
    pub t: f64,
    pub quad_tol: f64,
}

impl Default for IsometrySection {
    fn default() -> Self {
        IsometrySection {
            profiles: vec![
                SigmaProfile::Constant { value: 1.0 },
                SigmaProfile::Indicator { value: 1.0, radius: 1.0 },
            ],
            lambda: 1.0,
            t: 0.0,
            quad_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvolutionSection {
    pub alpha: f64,
    pub replicas: usize,
    pub refine_space: usize,
    pub refine_time: usize,
    /// Gaps are measured on `|x| <= interior * L`.
    pub interior: f64,
    pub max_gap_ratio: f64,
}

impl Default for ConvolutionSection {
    fn default() -> Self {
        ConvolutionSection {
            alpha: FactorizationParams::default().alpha,
            replicas: 4,
            refine_space: 3,
            refine_time: 9,
            interior: 0.5,
            max_gap_ratio: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsSection {
    pub sigma: f64,
    pub lambda: f64,
    pub l2_orders: Vec<f64>,
    pub sup_orders: Vec<f64>,
    pub refine_space: usize,
    pub refine_time: usize,
    /// Allowed relative drift of a ratio across the refinement.
    pub stability: f64,
}

impl Default for MomentsSection {
    fn default() -> Self {
        MomentsSection {
            sigma: 1.0,
            lambda: 0.125,
            l2_orders: vec![2.0, 10.0],
            sup_orders: vec![2.0, 12.0],
            refine_space: 3,
            refine_time: 9,
            stability: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LipschitzSection {
    /// Heights of the bump added to the initial field.
    pub scales: Vec<f64>,
    pub width: f64,
    pub n_max: usize,
    /// Allowed relative miss of the heat-flow control.
    pub control_tol: f64,
}

impl Default for LipschitzSection {
    fn default() -> Self {
        LipschitzSection {
            scales: vec![0.05, 0.1, 0.2],
            width: 1.0,
            n_max: 8,
            control_tol: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelsSection {
    pub times: Vec<f64>,
    pub rates: Vec<f64>,
    pub slack: f64,
}

impl Default for KernelsSection {
    fn default() -> Self {
        KernelsSection {
            times: vec![0.1, 0.5, 1.0],
            rates: (1..=8).map(|n| 1.0 / n as f64).collect(),
            slack: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub replicas: usize,
    pub snapshots: usize,
    pub shifted: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        SimulateSection {
            replicas: 1,
            snapshots: 5,
            shifted: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub grid: GridSection,
    pub coefficients: CoefficientSection,
    pub initial: InitialSection,
    pub shift: ShiftSection,
    pub tci: TciSection,
    pub isometry: IsometrySection,
    pub convolution: ConvolutionSection,
    pub moments: MomentsSection,
    pub lipschitz: LipschitzSection,
    pub kernels: KernelsSection,
    pub simulate: SimulateSection,
}

/// Every `section.key` the defaults define.
fn known_keys() -> Table {
    match Value::try_from(ExperimentConfig::default()) {
        Ok(Value::Table(t)) => t,
        _ => unreachable!("config serializes to a table"),
    }
}

fn check_keys(table: &Table) -> Result<(), ConfigError> {
    let known = known_keys();
    for (section, body) in table {
        let Some(Value::Table(fields)) = known.get(section) else {
            return Err(ConfigError::UnknownKey(section.clone()));
        };
        let Value::Table(body) = body else {
            return Err(bad(section, "expected a section"));
        };
        for key in body.keys() {
            if !fields.contains_key(key) {
                return Err(ConfigError::UnknownKey(format!("{section}.{key}")));
            }
        }
    }
    Ok(())
}

fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Applies `--section.key value` pairs on top of `table`.
pub fn apply_overrides(table: &mut Table, args: &[String]) -> Result<(), ConfigError> {
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let Some(path) = flag.strip_prefix("--") else {
            return Err(ConfigError::Override(format!("expected `--section.key`, got `{flag}`")));
        };
        let (path, inline) = match path.split_once('=') {
            Some((p, v)) => (p, Some(v.to_string())),
            None => (path, None),
        };
        let Some((section, key)) = path.split_once('.') else {
            return Err(ConfigError::Override(format!("`--{path}` is not of the form `--section.key`")));
        };
        let raw = match inline {
            Some(v) => v,
            None => it
                .next()
                .cloned()
                .ok_or_else(|| ConfigError::Override(format!("`--{path}` needs a value")))?,
        };
        let entry = table
            .entry(section.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        let Value::Table(body) = entry else {
            return Err(bad(section, "expected a section"));
        };
        body.insert(key.to_string(), parse_value(&raw));
    }
    Ok(())
}

/// Reads the optional file, applies overrides and validates the result.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Read {
                path: p.display().to_string(),
                message: e.to_string(),
            })?;
            text.parse::<Table>().map_err(|e| ConfigError::Read {
                path: p.display().to_string(),
                message: e.to_string(),
            })?
        }
        None => Table::new(),
    };
    apply_overrides(&mut table, overrides)?;
    check_keys(&table)?;
    let config: ExperimentConfig = table.try_into().map_err(|e: toml::de::Error| bad("config", e.message()))?;
    config.validate()?;
    Ok(config)
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(key, format!("must be > 0, got {v}")))
    }
}

fn rates(key: &str, v: &[f64]) -> Result<(), ConfigError> {
    if v.is_empty() {
        return Err(bad(key, "must be a nonempty list"));
    }
    v.iter().try_for_each(|&l| positive(key, l))
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.grid;
        if g.nx % 2 == 0 {
            return Err(bad(
                "grid.nx",
                format!("must be odd so the grid is symmetric with a cell at x = 0, got {}", g.nx),
            ));
        }
        if g.nx < 3 {
            return Err(bad("grid.nx", format!("must be >= 3, got {}", g.nx)));
        }
        if g.nt == 0 {
            return Err(bad("grid.nt", "must be >= 1"));
        }
        positive("grid.half_width", g.half_width)?;
        positive("grid.horizon", g.horizon)?;
        self.grid_spec()?
            .check_resolution()
            .map_err(|e| bad("grid.nt", e.to_string()))?;
        if self.run.replicas < 2 {
            return Err(bad("run.replicas", format!("must be >= 2, got {}", self.run.replicas)));
        }

        let c = &self.coefficients;
        if !COEFFICIENT_PRESETS.contains(&c.preset.as_str()) {
            return Err(bad(
                "coefficients.preset",
                format!("`{}` is not one of {:?}", c.preset, COEFFICIENT_PRESETS),
            ));
        }
        self.coefficient_spec()?;

        positive("initial.width", self.initial.width)?;
        let s = &self.shift;
        if !SHIFT_KINDS.contains(&s.kind.as_str()) {
            return Err(bad("shift.kind", format!("`{}` is not one of {:?}", s.kind, SHIFT_KINDS)));
        }
        positive("shift.width", s.width)?;
        positive("shift.radius", s.radius)?;
        if !(0.0 <= s.t0 && s.t0 <= s.t1) {
            return Err(bad("shift.t1", format!("need 0 <= t0 <= t1, got [{}, {}]", s.t0, s.t1)));
        }

        rates("tci.lambdas", &self.tci.lambdas)?;
        if self.tci.n_max == 0 {
            return Err(bad("tci.n_max", "must be >= 1"));
        }
        positive("tci.tail_tol", self.tci.tail_tol)?;
        if self.tci.amplitudes.is_empty() {
            return Err(bad("tci.amplitudes", "must be a nonempty list"));
        }

        if self.isometry.profiles.is_empty() {
            return Err(bad("isometry.profiles", "must be a nonempty list"));
        }
        positive("isometry.lambda", self.isometry.lambda)?;
        positive("isometry.quad_tol", self.isometry.quad_tol)?;
        if self.isometry.t < 0.0 || self.isometry.t > g.horizon {
            return Err(bad("isometry.t", format!("must lie in [0, {}], got {}", g.horizon, self.isometry.t)));
        }

        let cv = &self.convolution;
        FactorizationParams::new(cv.alpha).map_err(|e| bad("convolution.alpha", e.to_string()))?;
        if cv.replicas < 1 {
            return Err(bad("convolution.replicas", "must be >= 1"));
        }
        self.refined(cv.refine_space, cv.refine_time)
            .map_err(|e| bad("convolution.refine_time", e.to_string()))?;
        if !(cv.interior > 0.0 && cv.interior <= 1.0) {
            return Err(bad("convolution.interior", format!("must lie in (0, 1], got {}", cv.interior)));
        }

        let m = &self.moments;
        positive("moments.lambda", m.lambda)?;
        rates("moments.l2_orders", &m.l2_orders)?;
        rates("moments.sup_orders", &m.sup_orders)?;
        positive("moments.stability", m.stability)?;
        self.refined(m.refine_space, m.refine_time)
            .map_err(|e| bad("moments.refine_time", e.to_string()))?;

        rates("lipschitz.scales", &self.lipschitz.scales)?;
        positive("lipschitz.width", self.lipschitz.width)?;
        if self.lipschitz.n_max == 0 {
            return Err(bad("lipschitz.n_max", "must be >= 1"));
        }

        rates("kernels.times", &self.kernels.times)?;
        rates("kernels.rates", &self.kernels.rates)?;
        if self.kernels.slack < 0.0 {
            return Err(bad("kernels.slack", "must be >= 0"));
        }
        if self.simulate.replicas < 1 {
            return Err(bad("simulate.replicas", "must be >= 1"));
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec, ConfigError> {
        let g = &self.grid;
        GridSpec::new(g.half_width, g.nx, g.horizon, g.nt).map_err(|e| bad("grid", e.to_string()))
    }

    pub fn refined(&self, space: usize, time: usize) -> Result<GridSpec, ConfigError> {
        let fine = self
            .grid_spec()?
            .refine(space, time)
            .map_err(|e| bad("grid", e.to_string()))?;
        fine.check_resolution().map_err(|e| bad("grid", e.to_string()))?;
        Ok(fine)
    }

    pub fn coefficient_spec(&self) -> Result<CoefficientSpec, ConfigError> {
        let c = &self.coefficients;
        CoefficientSpec::preset(&c.preset, c.l_b, c.l_sigma, c.k_sigma).map_err(|e| bad("coefficients", e.to_string()))
    }

    pub fn shift_spec(&self, grid: &GridSpec) -> Result<ShiftSpec, ConfigError> {
        let s = &self.shift;
        let made = match s.kind.as_str() {
            "bump" => ShiftSpec::gaussian_bump(grid, s.amplitude, s.width, s.t0, s.t1),
            "plateau" => ShiftSpec::plateau(grid, s.amplitude, s.radius, s.t0, s.t1),
            "feedback" => ShiftSpec::tanh_feedback(grid, s.amplitude),
            _ => Ok(ShiftSpec::zero(grid)),
        };
        made.map_err(|e| bad("shift", e.to_string()))
    }

    pub fn initial_field(&self, grid: &GridSpec) -> ndarray::Array1<f64> {
        let (a, w) = (self.initial.amplitude, self.initial.width);
        grid.field(|x| a * (-x * x / (2.0 * w * w)).exp())
    }

    pub fn mc(&self) -> McParams {
        McParams::new(self.run.replicas, self.run.seed)
    }

    /// Canonical TOML text of the effective configuration.
    pub fn snapshot(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = parse_config(None, &[]).unwrap();
        assert_eq!(c, ExperimentConfig::default());
        let back: ExperimentConfig = toml::from_str(&c.snapshot()).unwrap();
        assert_eq!(back, c);
        assert!(c.snapshot().contains("nx = 401"));
    }

    #[test]
    fn even_nx_is_rejected() {
        let err = parse_config(None, &args(&["--grid.nx", "400"])).unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { key, .. } if key == "grid.nx"), "{err}");
    }

    #[test]
    fn alpha_outside_range_cites_it() {
        let err = parse_config(None, &args(&["--convolution.alpha", "0.2"])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("convolution.alpha") && msg.contains("(0, 1/8)"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse_config(None, &args(&["--grid.nxx", "3"])).unwrap_err();
        assert_eq!(err.to_string(), "unknown key `grid.nxx`");
        let err = parse_config(None, &args(&["--gird.nx", "3"])).unwrap_err();
        assert_eq!(err.to_string(), "unknown key `gird`");
    }

    #[test]
    fn overrides_take_lists_strings_and_inline_values() {
        let c = parse_config(
            None,
            &args(&["--tci.lambdas", "[1.0, 0.5]", "--shift.kind", "plateau", "--run.seed=7"]),
        )
        .unwrap();
        assert_eq!(c.tci.lambdas, vec![1.0, 0.5]);
        assert_eq!(c.shift.kind, "plateau");
        assert_eq!(c.run.seed, 7);
    }

    #[test]
    fn file_then_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[grid]\nnx = 201\nnt = 100\n\n[run]\nseed = 3\n").unwrap();
        let c = parse_config(Some(&path), &args(&["--run.seed", "5"])).unwrap();
        assert_eq!((c.grid.nx, c.grid.nt, c.run.seed), (201, 100, 5));
        std::fs::write(&path, "[grid]\nwidth = 2\n").unwrap();
        assert_eq!(parse_config(Some(&path), &[]).unwrap_err().to_string(), "unknown key `grid.width`");
    }

    #[test]
    fn resolution_guard_applies() {
        let err = parse_config(None, &args(&["--grid.nt", "4000"])).unwrap_err();
        assert!(err.to_string().contains("grid.nt"), "{err}");
    }
}

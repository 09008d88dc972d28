//! TOML run configuration.
//!
//! Frequencies and rates carry an explicit unit suffix: `_rad_per_s` for
//! angular values or `_hz` for cycles per second (multiplied by 2π on
//! ingestion). Unknown keys are rejected so that typos do not pass silently.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::model::{
    BathParams, CavityParams, DetectionParams, DetuningReference, DriveParams, MechanicalMode, SteadyState,
    SystemParams, CODATA,
};
use crate::optimize::{closed_form_gains, BandWeight};
use crate::response::{FeedbackLaw, RationalFilter};
use crate::spectra::{FrequencyGrid, GridPolicy};
use crate::stability::BranchChoice;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeedbackSpec {
    #[default]
    Off,
    /// g_j = 2r√η cosθ·G_j.
    ClosedForm,
    /// g_j = c·G_j.
    Scaled {
        gain_scale: f64,
    },
    Proportional {
        gains: Vec<f64>,
    },
    Rational {
        filters: Vec<RationalFilter>,
    },
}

impl FeedbackSpec {
    pub fn resolve(&self, steady: &SteadyState, detection: &DetectionParams) -> FeedbackLaw {
        match self {
            FeedbackSpec::Off => FeedbackLaw::Off,
            FeedbackSpec::ClosedForm => closed_form_gains(steady, detection).0,
            FeedbackSpec::Scaled { gain_scale } => FeedbackLaw::proportional_to_coupling(*gain_scale, &steady.coupling),
            FeedbackSpec::Proportional { gains } => FeedbackLaw::Proportional { gains: gains.clone() },
            FeedbackSpec::Rational { filters } => FeedbackLaw::RationalPerMode {
                filters: filters.clone(),
            },
        }
    }

    pub fn is_off(&self) -> bool {
        matches!(self, FeedbackSpec::Off)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub policy: GridPolicy,
    /// Total points for linear and log grids.
    pub points: usize,
    /// Density for log-refined grids.
    pub points_per_decade: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lo: 1e3,
            hi: 1e6,
            policy: GridPolicy::LogRefined,
            points: 4000,
            points_per_decade: 2000,
        }
    }
}

impl GridSpec {
    pub fn build(&self, modes: &[MechanicalMode]) -> Result<FrequencyGrid> {
        match self.policy {
            GridPolicy::Linear => FrequencyGrid::linear(self.lo, self.hi, self.points),
            GridPolicy::Log => FrequencyGrid::log(self.lo, self.hi, self.points),
            GridPolicy::LogRefined => FrequencyGrid::log_refined(self.lo, self.hi, self.points_per_decade, modes),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub lo: f64,
    pub hi: f64,
    pub weight: BandWeight,
}

impl Default for BandSpec {
    fn default() -> Self {
        Self {
            lo: 1e4,
            hi: 1.2e5,
            weight: BandWeight::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseScanSpec {
    pub omega: f64,
    pub points: usize,
}

impl Default for PhaseScanSpec {
    fn default() -> Self {
        Self {
            omega: 1e4,
            points: 4001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    /// None: derived from the resolution guard.
    pub dt: Option<f64>,
    /// None: the shortest duration admitted by the mixing guard.
    pub duration: Option<f64>,
    pub burn_in: Option<f64>,
    pub record_stride: usize,
    pub seed: u64,
    pub segment_length: usize,
    pub overlap: f64,
    pub band_lo: f64,
    pub band_hi: f64,
    pub tolerance: f64,
    pub sub_bands: usize,
    /// Half-width of the excluded notch around each ω_j, in units of γ_j.
    pub notch_gammas: f64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            dt: None,
            duration: None,
            burn_in: None,
            record_stride: 50,
            seed: 1,
            segment_length: 1 << 15,
            overlap: 0.5,
            band_lo: 1e4,
            band_hi: 1e5,
            tolerance: 0.1,
            sub_bands: 8,
            notch_gammas: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub params: SystemParams,
    pub feedback: FeedbackSpec,
    pub branch: BranchChoice,
    pub grid: GridSpec,
    pub band: BandSpec,
    pub phase_scan: PhaseScanSpec,
    pub oracle: OracleSpec,
}

/// Key lookup with unit handling and unknown-key tracking for one section.
struct Section<'a> {
    name: &'a str,
    table: Option<&'a Table>,
    seen: BTreeSet<String>,
}

impl<'a> Section<'a> {
    fn new(root: &'a Table, name: &'a str) -> Result<Self> {
        let table = match root.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => return Err(Error::Config(format!("[{name}] must be a table"))),
        };
        Ok(Self {
            name,
            table,
            seen: BTreeSet::new(),
        })
    }

    fn of(name: &'a str, table: &'a Table) -> Self {
        Self {
            name,
            table: Some(table),
            seen: BTreeSet::new(),
        }
    }

    fn raw(&mut self, key: &str) -> Option<&'a Value> {
        self.seen.insert(key.to_string());
        self.table.and_then(|t| t.get(key))
    }

    fn number(&mut self, key: &str) -> Result<Option<f64>> {
        let name = self.name;
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(other) => Err(Error::Config(format!(
                "{name}.{key}: expected a number, found {}",
                other.type_str()
            ))),
        }
    }

    fn required(&mut self, key: &str) -> Result<f64> {
        let name = self.name;
        self.number(key)?
            .ok_or_else(|| Error::Config(format!("{name}.{key} is required")))
    }

    fn integer(&mut self, key: &str) -> Result<Option<u64>> {
        let name = self.name;
        match self.raw(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(_) => Err(Error::Config(format!("{name}.{key}: expected a non-negative integer"))),
        }
    }

    fn string(&mut self, key: &str) -> Result<Option<&'a str>> {
        let name = self.name;
        match self.raw(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.as_str())),
            Some(_) => Err(Error::Config(format!("{name}.{key}: expected a string"))),
        }
    }

    /// `{key}_rad_per_s` or `{key}_hz`, never both.
    fn frequency(&mut self, key: &str) -> Result<Option<f64>> {
        let rad = self.number(&format!("{key}_rad_per_s"))?;
        let hz = self.number(&format!("{key}_hz"))?;
        match (rad, hz) {
            (Some(_), Some(_)) => Err(Error::Config(format!(
                "{}.{key}: give either {key}_rad_per_s or {key}_hz, not both",
                self.name
            ))),
            (Some(w), None) => Ok(Some(w)),
            (None, Some(f)) => Ok(Some(TAU * f)),
            (None, None) => Ok(None),
        }
    }

    fn required_frequency(&mut self, key: &str) -> Result<f64> {
        let name = self.name;
        self.frequency(key)?
            .ok_or_else(|| Error::Config(format!("{name}.{key}_rad_per_s (or {key}_hz) is required")))
    }

    fn finish(self) -> Result<()> {
        if let Some(t) = self.table {
            let unknown: Vec<&String> = t.keys().filter(|k| !self.seen.contains(*k)).collect();
            if !unknown.is_empty() {
                return Err(Error::Config(format!(
                    "unknown key(s) in [{}]: {}",
                    self.name,
                    unknown.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", ")
                )));
            }
        }
        Ok(())
    }
}

const SECTIONS: [&str; 10] = [
    "cavity",
    "drive",
    "modes",
    "bath",
    "detection",
    "feedback",
    "grid",
    "band",
    "phase_scan",
    "oracle",
];

pub fn load(path: &Path) -> Result<RunConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse(text: &str) -> Result<RunConfig> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    if let Some(k) = root.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
        return Err(Error::Config(format!("unknown section [{k}]")));
    }

    let mut s = Section::new(&root, "cavity")?;
    let length = s.required("length_m")?;
    let kappa = s.required_frequency("kappa")?;
    let detuning = s.frequency("detuning")?.unwrap_or(0.0);
    let reference = match s.string("detuning_reference")? {
        None | Some("bare") => DetuningReference::Bare,
        Some("effective") => DetuningReference::Effective,
        Some(other) => {
            return Err(Error::Config(format!(
                "cavity.detuning_reference: expected \"bare\" or \"effective\", found \"{other}\""
            )))
        }
    };
    let laser_omega = match (s.number("wavelength_m")?, s.frequency("laser_omega")?) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "cavity: give either wavelength_m or laser_omega, not both".into(),
            ))
        }
        (Some(l), None) => TAU * CODATA.c / l,
        (None, Some(w)) => w,
        (None, None) => {
            return Err(Error::Config(
                "cavity.wavelength_m (or laser_omega_*) is required".into(),
            ))
        }
    };
    s.finish()?;
    let cavity = CavityParams {
        length,
        kappa,
        detuning,
        detuning_reference: reference,
        laser_omega,
    };

    let mut s = Section::new(&root, "drive")?;
    let drive = DriveParams {
        input_power: s.required("input_power_w")?,
    };
    s.finish()?;

    let modes = parse_modes(&root)?;

    let mut s = Section::new(&root, "bath")?;
    let bath = BathParams {
        temperature: s.number("temperature_k")?.unwrap_or(0.0),
    };
    s.finish()?;

    let mut s = Section::new(&root, "detection")?;
    let detection = DetectionParams {
        transmission: s.number("transmission")?.unwrap_or(1.0),
        efficiency: s.number("efficiency")?.unwrap_or(1.0),
        phase: s.number("phase_rad")?.unwrap_or(0.0),
    };
    s.finish()?;

    let params = SystemParams {
        cavity,
        drive,
        modes,
        bath,
        detection,
    };
    params.validate().map_err(|e| Error::Config(e.to_string()))?;

    let (feedback, branch) = parse_feedback(&root)?;

    let mut s = Section::new(&root, "grid")?;
    let mut grid = GridSpec::default();
    if let Some(v) = s.frequency("lo")? {
        grid.lo = v;
    }
    if let Some(v) = s.frequency("hi")? {
        grid.hi = v;
    }
    grid.policy = match s.string("spacing")? {
        None | Some("log_refined") => GridPolicy::LogRefined,
        Some("log") => GridPolicy::Log,
        Some("linear") => GridPolicy::Linear,
        Some(other) => {
            return Err(Error::Config(format!(
                "grid.spacing: expected linear, log or log_refined, found \"{other}\""
            )))
        }
    };
    if let Some(n) = s.integer("points")? {
        grid.points = n as usize;
    }
    if let Some(n) = s.integer("points_per_decade")? {
        grid.points_per_decade = n as usize;
    }
    s.finish()?;

    let mut s = Section::new(&root, "band")?;
    let mut band = BandSpec::default();
    if let Some(v) = s.frequency("lo")? {
        band.lo = v;
    }
    if let Some(v) = s.frequency("hi")? {
        band.hi = v;
    }
    band.weight = match s.string("weight")? {
        None | Some("uniform") => BandWeight::Uniform,
        Some("log_uniform") => BandWeight::LogUniform,
        Some(other) => {
            return Err(Error::Config(format!(
                "band.weight: expected uniform or log_uniform, found \"{other}\""
            )))
        }
    };
    s.finish()?;

    let mut s = Section::new(&root, "phase_scan")?;
    let mut phase_scan = PhaseScanSpec::default();
    if let Some(v) = s.frequency("omega")? {
        phase_scan.omega = v;
    }
    if let Some(n) = s.integer("points")? {
        phase_scan.points = n as usize;
    }
    s.finish()?;

    let oracle = parse_oracle(&root)?;

    Ok(RunConfig {
        params,
        feedback,
        branch,
        grid,
        band,
        phase_scan,
        oracle,
    })
}

fn mode_from(s: &mut Section) -> Result<MechanicalMode> {
    let omega = s.required_frequency("omega")?;
    let mass = s.required("mass_kg")?;
    let overlap = s.number("overlap")?.unwrap_or(1.0);
    let q = s.number("quality_factor")?;
    let gamma = s.frequency("gamma")?;
    let gamma = match (q, gamma) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(format!(
                "{}: give either quality_factor or gamma, not both",
                s.name
            )))
        }
        (Some(q), None) => omega / q,
        (None, Some(g)) => g,
        (None, None) => {
            return Err(Error::Config(format!(
                "{}: quality_factor or gamma is required",
                s.name
            )))
        }
    };
    Ok(MechanicalMode {
        omega,
        gamma,
        mass,
        overlap,
    })
}

/// Either `[[modes.list]]` entries or a generated uniform ladder
/// (`count`, `omega_min_*`, `omega_max_*`, shared `mass_kg`,
/// `quality_factor` and `overlap`).
fn parse_modes(root: &Table) -> Result<Vec<MechanicalMode>> {
    let mut s = Section::new(root, "modes")?;
    if s.table.is_none() {
        return Ok(Vec::new());
    }
    let mut modes = Vec::new();
    if let Some(list) = s.raw("list") {
        let Value::Array(items) = list else {
            return Err(Error::Config("modes.list must be an array of tables".into()));
        };
        for (i, item) in items.iter().enumerate() {
            let Value::Table(t) = item else {
                return Err(Error::Config(format!("modes.list[{i}] must be a table")));
            };
            let name = format!("modes.list[{i}]");
            let mut m = Section::of(&name, t);
            modes.push(mode_from(&mut m)?);
            m.finish()?;
        }
    }
    if let Some(count) = s.integer("count")? {
        let count = count as usize;
        let lo = s.required_frequency("omega_min")?;
        let hi = s.frequency("omega_max")?.unwrap_or(lo);
        let mass = s.required("mass_kg")?;
        let q = s.required("quality_factor")?;
        let overlap = s.number("overlap")?.unwrap_or(1.0);
        if count > 1 && !(hi > lo) {
            return Err(Error::Config("modes: omega_max must exceed omega_min".into()));
        }
        for j in 0..count {
            let omega = if count == 1 {
                lo
            } else {
                lo + (hi - lo) * j as f64 / (count - 1) as f64
            };
            modes.push(MechanicalMode::with_quality_factor(omega, q, mass, overlap));
        }
    }
    s.finish()?;
    Ok(modes)
}

fn parse_feedback(root: &Table) -> Result<(FeedbackSpec, BranchChoice)> {
    let mut s = Section::new(root, "feedback")?;
    let kind = s.string("kind")?.unwrap_or("off");
    let spec = match kind {
        "off" => FeedbackSpec::Off,
        "closed_form" => FeedbackSpec::ClosedForm,
        "scaled" => FeedbackSpec::Scaled {
            gain_scale: s.required("gain_scale")?,
        },
        "proportional" => {
            let gains = match s.raw("gains_rad_per_s") {
                Some(Value::Array(a)) => a
                    .iter()
                    .map(|v| match v {
                        Value::Float(f) => Ok(*f),
                        Value::Integer(i) => Ok(*i as f64),
                        _ => Err(Error::Config("feedback.gains_rad_per_s must hold numbers".into())),
                    })
                    .collect::<Result<Vec<f64>>>()?,
                _ => return Err(Error::Config("feedback.gains_rad_per_s (array) is required".into())),
            };
            FeedbackSpec::Proportional { gains }
        }
        "rational" => {
            let filters = match s.raw("filters") {
                Some(v) => v
                    .clone()
                    .try_into::<Vec<RationalFilter>>()
                    .map_err(|e| Error::Config(format!("feedback.filters: {e}")))?,
                None => return Err(Error::Config("feedback.filters is required".into())),
            };
            FeedbackSpec::Rational { filters }
        }
        other => {
            return Err(Error::Config(format!(
                "feedback.kind: expected off, closed_form, scaled, proportional or rational, found \"{other}\""
            )))
        }
    };
    let branch = match s.integer("branch")? {
        Some(i) => BranchChoice::Index(i as usize),
        None => BranchChoice::Auto,
    };
    s.finish()?;
    Ok((spec, branch))
}

fn parse_oracle(root: &Table) -> Result<OracleSpec> {
    let mut s = Section::new(root, "oracle")?;
    let mut o = OracleSpec {
        dt: s.number("dt_s")?,
        duration: s.number("duration_s")?,
        burn_in: s.number("burn_in_s")?,
        ..OracleSpec::default()
    };
    if let Some(v) = s.integer("record_stride")? {
        o.record_stride = v as usize;
    }
    if let Some(v) = s.integer("seed")? {
        o.seed = v;
    }
    if let Some(v) = s.integer("segment_length")? {
        o.segment_length = v as usize;
    }
    if let Some(v) = s.number("overlap")? {
        o.overlap = v;
    }
    if let Some(v) = s.frequency("band_lo")? {
        o.band_lo = v;
    }
    if let Some(v) = s.frequency("band_hi")? {
        o.band_hi = v;
    }
    if let Some(v) = s.number("tolerance")? {
        o.tolerance = v;
    }
    if let Some(v) = s.integer("sub_bands")? {
        o.sub_bands = v as usize;
    }
    if let Some(v) = s.number("notch_gammas")? {
        o.notch_gammas = v;
    }
    s.finish()?;
    Ok(o)
}

/// A `[feedback]` table read on its own, for `--feedback <file>`.
pub fn load_feedback(path: &Path) -> Result<FeedbackSpec> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(format!("{}: {e}", path.display())))?;
    if let Some(k) = root.keys().find(|k| *k != "feedback") {
        return Err(Error::Config(format!(
            "{}: feedback file may only contain [feedback], found [{k}]",
            path.display()
        )));
    }
    Ok(parse_feedback(&root)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[cavity]
length_m = 0.06
kappa_rad_per_s = 1e6
wavelength_m = 1064e-9
detuning_reference = "effective"

[drive]
input_power_w = 0.03

[modes]
count = 25
omega_min_rad_per_s = 1.5e5
omega_max_rad_per_s = 6e5
mass_kg = 1e-10
quality_factor = 1e4

[bath]
temperature_k = 4

[detection]
transmission = 0.99

[feedback]
kind = "closed_form"
"#;

    #[test]
    fn parses_generated_modes() {
        let c = parse(BASE).unwrap();
        assert_eq!(c.params.modes.len(), 25);
        assert!((c.params.modes[1].omega - 1.6875e5).abs() < 1e-6);
        assert_eq!(c.params.modes[0].gamma, 15.0);
        assert_eq!(c.feedback, FeedbackSpec::ClosedForm);
        assert_eq!(c.params.cavity.detuning_reference, DetuningReference::Effective);
    }

    #[test]
    fn hz_suffix_converts() {
        let text = BASE.replace("kappa_rad_per_s = 1e6", "kappa_hz = 1e6");
        let c = parse(&text).unwrap();
        assert!((c.params.cavity.kappa - TAU * 1e6).abs() < 1e-6);
        let both = BASE.replace("kappa_rad_per_s = 1e6", "kappa_rad_per_s = 1e6\nkappa_hz = 1");
        assert!(matches!(parse(&both), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_unknown_keys_and_sections() {
        let typo = BASE.replace("transmission = 0.99", "transmision = 0.99");
        let err = parse(&typo).unwrap_err().to_string();
        assert!(err.contains("transmision"), "{err}");
        assert!(parse(&format!("{BASE}\n[extra]\na = 1\n")).is_err());
    }

    #[test]
    fn syntax_errors_report_location() {
        let err = parse("[cavity]\nlength_m = = 1\n").unwrap_err().to_string();
        assert!(err.contains("line 2") || err.contains("2:"), "{err}");
    }

    #[test]
    fn explicit_mode_list() {
        let text = r#"
[cavity]
length_m = 0.06
kappa_rad_per_s = 1e6
wavelength_m = 1064e-9
[drive]
input_power_w = 0.01
[[modes.list]]
omega_rad_per_s = 3e5
gamma_rad_per_s = 30
mass_kg = 1e-10
overlap = -0.5
"#;
        let c = parse(text).unwrap();
        assert_eq!(c.params.modes.len(), 1);
        assert_eq!(c.params.modes[0].gamma, 30.0);
        assert_eq!(c.params.modes[0].overlap, -0.5);
        assert_eq!(c.feedback, FeedbackSpec::Off);
    }
}

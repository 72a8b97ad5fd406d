//! Run configuration: one TOML file, one section per pipeline. Unknown keys
//! are rejected, and every value is checked before any computation starts.

use std::path::{Path, PathBuf};

use ipw_core::atomic::AtomSpec;
use ipw_core::entanglement::ErrorBudget;
use ipw_core::photon::{ExperimentTiming, SourceModel};
use ipw_core::radiation::{ApertureSpec, CoherenceModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Output directory. Not part of the provenance hash.
    #[serde(skip_serializing)]
    pub out_dir: PathBuf,
    /// Also write gnuplot scripts next to the CSVs.
    pub plots: bool,
    pub atom: AtomSection,
    pub bloch: BlochSection,
    pub aperture: ApertureSection,
    pub timing: ExperimentTiming,
    pub source: SourceModel,
    pub g2: G2Section,
    pub budget: ErrorBudget,
    pub entangle: EntangleSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            out_dir: PathBuf::from("out"),
            plots: false,
            atom: AtomSection::default(),
            bloch: BlochSection::default(),
            aperture: ApertureSection::default(),
            timing: ExperimentTiming::default(),
            source: SourceModel::default(),
            g2: G2Section::default(),
            budget: ErrorBudget::default(),
            entangle: EntangleSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtomSection {
    pub tau_e_ns: f64,
    pub branch_s: f64,
}

impl Default for AtomSection {
    fn default() -> Self {
        AtomSection { tau_e_ns: 10.0, branch_s: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlochSection {
    pub t_p_ns: Vec<f64>,
}

impl Default for BlochSection {
    fn default() -> Self {
        BlochSection { t_p_ns: vec![0.01, 0.1, 0.5, 1.0, 2.0, 3.0, 5.0, 10.0, 20.0, 30.0, 50.0, 100.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ApertureSection {
    pub circular_max_na: f64,
    pub slit_na: Vec<f64>,
    pub points: usize,
    pub coherence: CoherenceModel,
    pub tolerance: f64,
    pub anchor_na: f64,
    pub stop_fraction: f64,
}

impl Default for ApertureSection {
    fn default() -> Self {
        ApertureSection {
            circular_max_na: 0.95,
            slit_na: vec![0.3, 0.6, 0.9],
            points: 41,
            coherence: CoherenceModel::default(),
            tolerance: 1e-9,
            anchor_na: 0.6,
            stop_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct G2Section {
    pub trials: u64,
    pub window_ps: u64,
    pub window_offset_ps: u64,
    pub norm_peaks: usize,
    pub scan_ps: Vec<u64>,
    pub histogram_bin_ps: u64,
    pub histogram_peaks: u64,
    pub stream_file: String,
    pub tune: Option<TuneSection>,
}

impl Default for G2Section {
    fn default() -> Self {
        G2Section {
            trials: 1_000_000,
            window_ps: 30_000,
            window_offset_ps: 0,
            norm_peaks: 2,
            scan_ps: (1..=20).map(|k| 5_000 * k).collect(),
            histogram_bin_ps: 4_000,
            histogram_peaks: 5,
            stream_file: "clicks.bin".into(),
            tune: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSection {
    pub dark_floor: f64,
    pub g2_target: f64,
    pub norm_peak_counts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EntangleSection {
    pub full_na: f64,
    pub stop_fraction: f64,
    pub kappa: f64,
    pub fit_budget: bool,
    pub fit_target: f64,
    pub grid_points: usize,
    pub shots: u64,
    pub fringe_points: usize,
}

impl Default for EntangleSection {
    fn default() -> Self {
        EntangleSection {
            full_na: 0.6,
            stop_fraction: 0.5,
            kappa: 1.0,
            fit_budget: true,
            fit_target: 0.884,
            grid_points: 12,
            shots: 100_000,
            fringe_points: 73,
        }
    }
}

fn invalid(field: &str, message: impl Into<String>) -> CliError {
    CliError::validation(Some(field), message)
}

fn na(field: &str, value: f64) -> Result<ApertureSpec, CliError> {
    ApertureSpec::from_na(value).map_err(|e| invalid(field, e.to_string()))
}

fn fraction(field: &str, value: f64) -> Result<(), CliError> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("{value} is outside (0, 1]")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(Some("config"), format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::validation(Some("config"), e.to_string().replace('\n', " ")))
    }

    pub fn atom_spec(&self) -> Result<AtomSpec, CliError> {
        AtomSpec::new(self.atom.tau_e_ns * 1e-9, self.atom.branch_s).map_err(|e| invalid("atom", e.to_string()))
    }

    /// Hex SHA-256 of the effective configuration.
    pub fn sha256(&self) -> String {
        let text = toml::to_string(self).expect("configuration serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.atom_spec()?;

        let grid = &self.bloch.t_p_ns;
        if grid.is_empty() {
            return Err(invalid("bloch.t_p_ns", "pulse grid is empty"));
        }
        if let Some(t) = grid.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(invalid("bloch.t_p_ns", format!("pulse duration {t} ns is not positive")));
        }

        let a = &self.aperture;
        na("aperture.circular_max_na", a.circular_max_na)?;
        na("aperture.anchor_na", a.anchor_na)?;
        for &v in &a.slit_na {
            na("aperture.slit_na", v)?;
        }
        if a.points < 2 {
            return Err(invalid("aperture.points", "need at least 2 points per curve"));
        }
        if !(a.tolerance > 0.0 && a.tolerance <= 1e-3) {
            return Err(invalid("aperture.tolerance", format!("{} is outside (0, 1e-3]", a.tolerance)));
        }
        if let CoherenceModel::Fixed(k) = a.coherence {
            if !(0.0..=1.0).contains(&k) {
                return Err(invalid("aperture.coherence", format!("overlap factor {k} is outside [0, 1]")));
            }
        }
        fraction("aperture.stop_fraction", a.stop_fraction)?;

        self.timing.validate().map_err(|e| invalid("timing", e.to_string()))?;
        self.source.validate(&self.timing).map_err(|e| invalid("source", e.to_string()))?;
        let g = &self.g2;
        if g.trials == 0 {
            return Err(invalid("g2.trials", "must be positive"));
        }
        let fits = |w: u64| w > 0 && g.window_offset_ps + w <= self.timing.gate_width_ps;
        if !fits(g.window_ps) {
            return Err(invalid("g2.window_ps", "window must be nonempty and end inside the gate"));
        }
        if g.norm_peaks == 0 {
            return Err(invalid("g2.norm_peaks", "need at least one normalization peak"));
        }
        if g.scan_ps.iter().any(|&w| !fits(w)) || g.scan_ps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("g2.scan_ps", "widths must increase and end inside the gate"));
        }
        if g.histogram_bin_ps == 0 {
            return Err(invalid("g2.histogram_bin_ps", "must be positive"));
        }
        if g.histogram_peaks < 5 {
            return Err(invalid("g2.histogram_peaks", "histogram must span at least 5 peaks"));
        }
        if g.stream_file.is_empty() || Path::new(&g.stream_file).file_name().is_none_or(|n| n != g.stream_file.as_str()) {
            return Err(invalid("g2.stream_file", "must be a plain file name"));
        }
        if let Some(t) = &g.tune {
            if !(t.dark_floor > 0.0 && t.dark_floor < t.g2_target && t.g2_target < 1.0) {
                return Err(invalid("g2.tune", "need 0 < dark_floor < g2_target < 1"));
            }
            if !(t.norm_peak_counts >= 1.0 && t.norm_peak_counts.is_finite()) {
                return Err(invalid("g2.tune.norm_peak_counts", "must be at least 1"));
            }
        }

        self.budget.validate().map_err(|e| invalid("budget", e.to_string()))?;
        let e = &self.entangle;
        na("entangle.full_na", e.full_na)?;
        fraction("entangle.stop_fraction", e.stop_fraction)?;
        if !(0.0..=1.0).contains(&e.kappa) {
            return Err(invalid("entangle.kappa", format!("{} is outside [0, 1]", e.kappa)));
        }
        if e.fit_budget && !(e.fit_target > 0.25 && e.fit_target <= 1.0) {
            return Err(invalid("entangle.fit_target", format!("{} is outside (0.25, 1]", e.fit_target)));
        }
        if e.grid_points < 3 {
            return Err(invalid("entangle.grid_points", "need at least 3 analysis settings"));
        }
        if e.shots == 0 {
            return Err(invalid("entangle.shots", "must be positive"));
        }
        if e.fringe_points < 2 {
            return Err(invalid("entangle.fringe_points", "need at least 2 points"));
        }
        Ok(())
    }
}

//! Run configuration, read from TOML.

use std::fs;
use std::path::{Path, PathBuf};

use lesion_core::design::HingeMode;
use lesion_core::events::{EventConfig, PersistenceRule};
use lesion_core::lmm::{LmmOptions, Method, RandomEffects};
use lesion_core::profile::ProfileGrid;
use lesion_core::synth::SynthConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub input: InputConfig,
    /// Artifact directory; relative paths resolve against the config file.
    pub output_dir: PathBuf,
    pub grid: GridConfig,
    pub events: EventsConfig,
    pub hinge_mode: HingeMode,
    /// Subjects dropped before any analysis (e.g. failed registration).
    pub exclude_subjects: Vec<String>,
    pub pca: PcaConfig,
    pub lmm: LmmConfig,
    pub fosr: FosrConfig,
    pub agreement: AgreementConfig,
    pub synth: SynthSection,
    pub trial: TrialConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            input: InputConfig::default(),
            output_dir: PathBuf::from("out"),
            grid: GridConfig::default(),
            events: EventsConfig::default(),
            hinge_mode: HingeMode::PaperLiteral,
            exclude_subjects: Vec::new(),
            pca: PcaConfig::default(),
            lmm: LmmConfig::default(),
            fosr: FosrConfig::default(),
            agreement: AgreementConfig::default(),
            synth: SynthSection::default(),
            trial: TrialConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub manifest: Option<PathBuf>,
    /// Long profile table; used instead of volumes when set.
    pub profile_table: Option<PathBuf>,
    pub covariate_table: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub end_day: i64,
    pub step: i64,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = ProfileGrid::default();
        GridConfig {
            end_day: g.end_day,
            step: g.step,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventsConfig {
    pub min_component_voxels: usize,
    pub edema_window_days: i64,
    pub persistence: PersistenceRule,
    pub inclusion_days: i64,
}

impl Default for EventsConfig {
    fn default() -> Self {
        let e = EventConfig::default();
        EventsConfig {
            min_component_voxels: e.min_component_voxels,
            edema_window_days: e.edema_window_days,
            persistence: e.persistence,
            inclusion_days: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaConfig {
    pub bootstrap: usize,
    pub retain: Option<usize>,
}

impl Default for PcaConfig {
    fn default() -> Self {
        PcaConfig {
            bootstrap: 1000,
            retain: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmmConfig {
    pub method: Method,
    pub random_effects: RandomEffects,
    pub bootstrap: usize,
    pub univariate: bool,
}

impl Default for LmmConfig {
    fn default() -> Self {
        LmmConfig {
            method: Method::Reml,
            random_effects: RandomEffects::SubjectAndLesion,
            bootstrap: 1000,
            univariate: true,
        }
    }
}

impl LmmConfig {
    pub fn options(&self) -> LmmOptions {
        LmmOptions {
            method: self.method,
            random_effects: self.random_effects,
            ..LmmOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FosrConfig {
    pub bootstrap: usize,
    pub basis_dim: usize,
    pub lambda: Option<f64>,
}

impl Default for FosrConfig {
    fn default() -> Self {
        FosrConfig {
            bootstrap: 1000,
            basis_dim: 10,
            lambda: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgreementConfig {
    /// Rating ledger; defaults to the trial ledger.
    pub ratings: Option<PathBuf>,
    pub bootstrap: usize,
    pub include_repeats_between: bool,
}

impl Default for AgreementConfig {
    fn default() -> Self {
        AgreementConfig {
            ratings: None,
            bootstrap: 1000,
            include_repeats_between: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    /// Directory the synthetic cohort is written to.
    pub output_dir: PathBuf,
    pub cohort: SynthConfig,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            output_dir: PathBuf::from("cohort"),
            cohort: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    pub raters: Vec<String>,
    pub repeats: usize,
    /// Number of lesions drawn for the trial; all lesions when unset.
    pub lesions: Option<usize>,
    pub ledger: PathBuf,
    pub bind: String,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            raters: vec!["rater1".into(), "rater2".into()],
            repeats: lesion_core::trial::DEFAULT_REPEATS,
            lesions: None,
            ledger: PathBuf::from("ratings.jsonl"),
            bind: "127.0.0.1:8080".into(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<RunConfig> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|source| Error::Config {
            path: path.to_path_buf(),
            source,
        })?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        RunConfig::from_toml(&text, path)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.input.manifest, &mut self.input.profile_table, &mut self.input.covariate_table, &mut self.agreement.ratings]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
        fix(&mut self.synth.output_dir);
        fix(&mut self.trial.ledger);
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.grid.end_day <= 0 || self.grid.step <= 0 || self.grid.end_day % self.grid.step != 0 {
            return bad(format!(
                "grid step {} must be positive and divide end_day {}",
                self.grid.step, self.grid.end_day
            ));
        }
        if self.events.min_component_voxels == 0 || self.events.edema_window_days <= 0 || self.events.inclusion_days <= 0 {
            return bad("event thresholds must be positive".into());
        }
        if self.events.inclusion_days < self.grid.end_day {
            return bad(format!(
                "inclusion horizon {} is shorter than the grid end {}",
                self.events.inclusion_days, self.grid.end_day
            ));
        }
        if self.input.profile_table.is_some() != self.input.covariate_table.is_some() {
            return bad("profile_table and covariate_table must be given together".into());
        }
        if self.fosr.basis_dim < 4 {
            return bad("fosr.basis_dim must be at least 4".into());
        }
        Ok(())
    }

    pub fn profile_grid(&self) -> ProfileGrid {
        ProfileGrid {
            end_day: self.grid.end_day,
            step: self.grid.step,
        }
    }

    pub fn event_config(&self) -> EventConfig {
        EventConfig {
            min_component_voxels: self.events.min_component_voxels,
            edema_window_days: self.events.edema_window_days,
            persistence: self.events.persistence,
        }
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.agreement.ratings.clone().unwrap_or_else(|| self.trial.ledger.clone())
    }
}

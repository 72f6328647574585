//! Stage orchestration. Each stage reads its inputs from the artifact
//! directory (or memory), writes its outputs there and returns them.

use std::fs;
use std::path::{Path, PathBuf};

use lesion_core::agreement::{bootstrap_agreement, AgreementReport, RatingKind};
use lesion_core::cohort::{Cohort, Sequence};
use lesion_core::design::{build_design, Covariate, Design};
use lesion_core::events::IncidenceEvent;
use lesion_core::fosr::{fit_fosr, significance_summary, FosrFit, FosrOptions};
use lesion_core::lmm::{
    fit_lmm, normal_approx_inference, parametric_bootstrap, BootstrapResult, CoefficientTable, LmmFit, LmmProblem,
};
use lesion_core::pca::{bootstrap_pca, fit_pca, orient_pc1, PcaBootstrap, PcaModel};
use lesion_core::profile::{extract_cohort_profiles, ConcatProfile, ExtractionCounts};
use lesion_core::rng::{derive_seed, ReplicateRunner};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, ModuleContext, Result};
use crate::ledger::{effective_records, read_ledger};
use crate::manifest::load_cohort;
use crate::tables::{read_json, read_profile_tables, read_rows, write_events, write_json, write_profile_tables, write_rows, write_table, ScoreRow};

pub mod artifacts {
    pub const RUN_MANIFEST: &str = "run_manifest.json";
    pub const EVENTS: &str = "events.csv";
    pub const PROFILES: &str = "profiles.csv";
    pub const COVARIATES: &str = "covariates.csv";
    pub const EXTRACTION: &str = "extraction.json";
    pub const PCA_MODEL: &str = "pca_model.json";
    pub const PCA_VARIANCE: &str = "pca_variance.csv";
    pub const PCA_CURVES: &str = "pca_curves.csv";
    pub const PCA_SCORES: &str = "pca_scores.csv";
    pub const PCA_BOOTSTRAP: &str = "pca_bootstrap.json";
    pub const LMM_MULTIVARIATE: &str = "lmm_multivariate.csv";
    pub const LMM_UNIVARIATE: &str = "lmm_univariate.csv";
    pub const LMM_FIT: &str = "lmm_fit.json";
    pub const FOSR_SIGNIFICANCE: &str = "fosr_significance.csv";
    pub const AGREEMENT_JSON: &str = "agreement.json";
    pub const AGREEMENT_CSV: &str = "agreement.csv";
    pub const REPORT: &str = "report.md";
    pub const PANELS: &str = "panels";

    pub fn fosr_curves(sequence: lesion_core::cohort::Sequence) -> String {
        format!("fosr_{}.csv", sequence.name())
    }
}

/// Salts separating the random streams of the stages.
#[derive(Debug, Clone, Copy)]
pub enum Stage {
    Pca = 1,
    Lmm = 2,
    Fosr = 3,
    Agreement = 4,
    Trial = 5,
}

pub fn stage_seed(seed: u64, stage: Stage) -> u64 {
    derive_seed(seed, stage as u64)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))
}

pub fn load_input_cohort(config: &RunConfig) -> Result<Cohort> {
    let manifest = config
        .input
        .manifest
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("input.manifest is required for volumetric stages".into()))?;
    let mut cohort = load_cohort(manifest)?;
    cohort.subjects.retain(|s| !config.exclude_subjects.contains(&s.subject_id));
    Ok(cohort)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionSummary {
    pub source: String,
    pub counts: Option<ExtractionCounts>,
    pub n_profiles: usize,
    pub n_lesions: usize,
    pub n_subjects: usize,
}

#[derive(Debug, Clone)]
pub struct ProfileStage {
    pub events: Vec<IncidenceEvent>,
    pub profiles: Vec<ConcatProfile>,
    pub summary: ExtractionSummary,
}

fn summarize(source: &str, counts: Option<ExtractionCounts>, profiles: &[ConcatProfile]) -> ExtractionSummary {
    let lesions: std::collections::BTreeSet<(&str, u32)> = profiles
        .iter()
        .map(|p| (p.key.subject_id.as_str(), p.key.lesion_id))
        .collect();
    let subjects: std::collections::BTreeSet<&str> = lesions.iter().map(|(s, _)| *s).collect();
    ExtractionSummary {
        source: source.into(),
        counts,
        n_profiles: profiles.len(),
        n_lesions: lesions.len(),
        n_subjects: subjects.len(),
    }
}

/// Events and profiles from volumes, or profiles from the table shortcut.
pub fn stage_profiles(config: &RunConfig, out: &Path) -> Result<ProfileStage> {
    ensure_dir(out)?;
    let grid = config.profile_grid();
    let stage = if let (Some(p), Some(c)) = (&config.input.profile_table, &config.input.covariate_table) {
        let mut profiles = read_profile_tables(p, c, &grid)?;
        profiles.retain(|p| !config.exclude_subjects.contains(&p.key.subject_id));
        ProfileStage {
            events: Vec::new(),
            summary: summarize("profile-table", None, &profiles),
            profiles,
        }
    } else {
        let cohort = load_input_cohort(config)?;
        let extracted = extract_cohort_profiles(&cohort, &config.event_config(), &grid, config.events.inclusion_days)
            .module("profile-pipeline")?;
        write_events(&out.join(artifacts::EVENTS), &extracted.events)?;
        ProfileStage {
            summary: summarize("volumes", Some(extracted.counts), &extracted.profiles),
            events: extracted.events,
            profiles: extracted.profiles,
        }
    };
    write_profile_tables(
        &out.join(artifacts::PROFILES),
        &out.join(artifacts::COVARIATES),
        &stage.profiles,
        &grid,
    )?;
    write_json(&out.join(artifacts::EXTRACTION), &stage.summary)?;
    Ok(stage)
}

pub fn read_stage_profiles(config: &RunConfig, out: &Path) -> Result<Vec<ConcatProfile>> {
    read_profile_tables(&out.join(artifacts::PROFILES), &out.join(artifacts::COVARIATES), &config.profile_grid())
}

#[derive(Debug, Clone)]
pub struct PcaStage {
    pub model: PcaModel,
    pub scores: Vec<f64>,
    pub bootstrap: PcaBootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PcaBootstrapSummary {
    replicates: usize,
    seed: u64,
    variance_explained_1: f64,
    variance_explained_1_lower: Option<f64>,
    variance_explained_1_upper: Option<f64>,
}

pub fn design_for(config: &RunConfig, profiles: &[ConcatProfile]) -> Result<Design> {
    build_design(profiles, config.hinge_mode).module("mixed-model")
}

pub fn stage_pca<X: ReplicateRunner>(config: &RunConfig, profiles: &[ConcatProfile], out: &Path, runner: &X) -> Result<PcaStage> {
    ensure_dir(out)?;
    let rows: Vec<&[f64]> = profiles.iter().map(|p| p.values.as_slice()).collect();
    let model = orient_pc1(fit_pca(&rows, config.pca.retain).module("pca-model")?).module("pca-model")?;
    let scores = rows
        .iter()
        .map(|r| model.score(r, 1))
        .collect::<lesion_core::Result<Vec<f64>>>()
        .module("pca-model")?;
    let design = design_for(config, profiles)?;
    let seed = stage_seed(config.seed, Stage::Pca);
    let bootstrap = bootstrap_pca(&rows, &design.groups.subject, &model, config.pca.bootstrap, seed, runner)
        .module("pca-model")?;

    write_json(&out.join(artifacts::PCA_MODEL), &model)?;
    let mut cumulative = 0.0;
    let variance_rows: Vec<Vec<String>> = model
        .eigenvalues
        .iter()
        .zip(&model.variance_explained)
        .enumerate()
        .map(|(k, (e, v))| {
            cumulative += v;
            vec![(k + 1).to_string(), e.to_string(), v.to_string(), cumulative.to_string()]
        })
        .collect();
    write_table(
        &out.join(artifacts::PCA_VARIANCE),
        &["component", "eigenvalue", "variance_explained", "cumulative"].map(String::from),
        &variance_rows,
    )?;
    let t = config.profile_grid().len();
    let days: Vec<i64> = config.profile_grid().days().collect();
    let bands = bootstrap.bands.as_ref();
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let curve_rows: Vec<Vec<String>> = Sequence::ALL
        .iter()
        .flat_map(|s| (0..t).map(move |k| (s, k)))
        .map(|(s, k)| {
            let j = s.index() * t + k;
            vec![
                s.name().to_string(),
                days[k].to_string(),
                model.mean_curve[j].to_string(),
                opt(bands.map(|b| b.mean.lower[j])),
                opt(bands.map(|b| b.mean.upper[j])),
                model.eigenvectors[0][j].to_string(),
                opt(bands.map(|b| b.pc1.lower[j])),
                opt(bands.map(|b| b.pc1.upper[j])),
            ]
        })
        .collect();
    write_table(
        &out.join(artifacts::PCA_CURVES),
        &["sequence", "day", "mean", "mean_lower", "mean_upper", "pc1", "pc1_lower", "pc1_upper"].map(String::from),
        &curve_rows,
    )?;
    write_rows(
        &out.join(artifacts::PCA_SCORES),
        profiles.iter().zip(&scores).map(|(p, &s)| ScoreRow {
            subject_id: p.key.subject_id.clone(),
            lesion_id: p.key.lesion_id,
            voxel_id: p.key.voxel_id,
            score_pc1: s,
        }),
    )?;
    write_json(
        &out.join(artifacts::PCA_BOOTSTRAP),
        &PcaBootstrapSummary {
            replicates: bootstrap.replicates,
            seed,
            variance_explained_1: model.variance_explained[0],
            variance_explained_1_lower: bands.map(|b| b.variance_explained_1.0),
            variance_explained_1_upper: bands.map(|b| b.variance_explained_1.1),
        },
    )?;
    Ok(PcaStage { model, scores, bootstrap })
}

/// PC1 scores in profile order, matched by voxel key.
pub fn read_stage_scores(profiles: &[ConcatProfile], out: &Path) -> Result<Vec<f64>> {
    let path = out.join(artifacts::PCA_SCORES);
    let rows: Vec<ScoreRow> = read_rows(&path)?;
    if rows.len() != profiles.len() {
        return Err(Error::format(&path, format!("{} scores for {} profiles", rows.len(), profiles.len())));
    }
    rows.iter()
        .zip(profiles)
        .map(|(r, p)| {
            if r.subject_id == p.key.subject_id && r.lesion_id == p.key.lesion_id && r.voxel_id == p.key.voxel_id {
                Ok(r.score_pc1)
            } else {
                Err(Error::format(&path, "score rows are not aligned with the profile table"))
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct LmmStage {
    pub fit: LmmFit,
    pub table: CoefficientTable,
    pub bootstrap: BootstrapResult,
    pub univariate: Vec<(Covariate, Result<(LmmFit, CoefficientTable), lesion_core::Error>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmSummary {
    pub method: lesion_core::lmm::Method,
    pub random_effects: lesion_core::lmm::RandomEffects,
    pub n_obs: usize,
    pub n_subjects: usize,
    pub n_lesions: usize,
    pub sigma2_subject: f64,
    pub sigma2_lesion: f64,
    pub sigma2_residual: f64,
    pub log_likelihood: f64,
    pub converged: bool,
    pub bootstrap_replicates: usize,
    pub bootstrap_seed: u64,
    pub bootstrap_redraws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientCsvRow {
    pub term: String,
    pub estimate: Option<f64>,
    pub std_error: Option<f64>,
    pub t_value: Option<f64>,
    pub p_value: Option<f64>,
    pub boot_lower: Option<f64>,
    pub boot_upper: Option<f64>,
    pub note: String,
}

impl CoefficientCsvRow {
    fn from_row(r: &lesion_core::lmm::CoefficientRow) -> Self {
        CoefficientCsvRow {
            term: r.name.clone(),
            estimate: Some(r.estimate),
            std_error: Some(r.std_error),
            t_value: Some(r.t_value),
            p_value: Some(r.p_value),
            boot_lower: r.boot_lower,
            boot_upper: r.boot_upper,
            note: String::new(),
        }
    }
}

/// Coefficient rows with the intercept moved to the end.
fn table_rows(table: &CoefficientTable) -> Vec<CoefficientCsvRow> {
    let (intercept, rest): (Vec<_>, Vec<_>) = table.rows.iter().partition(|r| r.name == "Intercept");
    rest.into_iter().chain(intercept).map(CoefficientCsvRow::from_row).collect()
}

fn fit_with_bootstrap<X: ReplicateRunner>(
    config: &RunConfig,
    design: &Design,
    y: &[f64],
    seed: u64,
    runner: &X,
) -> lesion_core::Result<(LmmFit, CoefficientTable, BootstrapResult)> {
    let options = config.lmm.options();
    let fit = fit_lmm(design, y, &options)?;
    let problem = LmmProblem::new(design, options.random_effects)?;
    let boot = parametric_bootstrap(&problem, &design.groups, &fit, &options, config.lmm.bootstrap, seed, runner)?;
    let mut table = normal_approx_inference(&fit);
    table.attach_bootstrap(&boot);
    Ok((fit, table, boot))
}

pub fn stage_lmm<X: ReplicateRunner>(config: &RunConfig, profiles: &[ConcatProfile], scores: &[f64], out: &Path, runner: &X) -> Result<LmmStage> {
    ensure_dir(out)?;
    let design = design_for(config, profiles)?;
    let seed = stage_seed(config.seed, Stage::Lmm);
    let (fit, table, bootstrap) = fit_with_bootstrap(config, &design, scores, seed, runner).module("mixed-model")?;
    write_rows(&out.join(artifacts::LMM_MULTIVARIATE), table_rows(&table))?;

    let mut univariate = Vec::new();
    if config.lmm.univariate {
        for (k, c) in Covariate::ALL.into_iter().enumerate() {
            let res = design
                .univariate(c)
                .and_then(|d| fit_with_bootstrap(config, &d, scores, derive_seed(seed, 100 + k as u64), runner))
                .map(|(f, t, _)| (f, t));
            univariate.push((c, res));
        }
        let rows = univariate.iter().map(|(c, res)| match res {
            Ok((_, t)) => CoefficientCsvRow::from_row(t.row(c.name()).expect("covariate row")),
            Err(e) => CoefficientCsvRow {
                term: c.name().into(),
                estimate: None,
                std_error: None,
                t_value: None,
                p_value: None,
                boot_lower: None,
                boot_upper: None,
                note: e.to_string(),
            },
        });
        write_rows(&out.join(artifacts::LMM_UNIVARIATE), rows)?;
    }
    write_json(
        &out.join(artifacts::LMM_FIT),
        &LmmSummary {
            method: fit.method,
            random_effects: fit.random_effects,
            n_obs: fit.n_obs,
            n_subjects: fit.n_subjects,
            n_lesions: fit.n_lesions,
            sigma2_subject: fit.sigma2_subject,
            sigma2_lesion: fit.sigma2_lesion,
            sigma2_residual: fit.sigma2_residual,
            log_likelihood: fit.log_likelihood,
            converged: fit.converged,
            bootstrap_replicates: bootstrap.replicates,
            bootstrap_seed: seed,
            bootstrap_redraws: bootstrap.redraws,
        },
    )?;
    Ok(LmmStage {
        fit,
        table,
        bootstrap,
        univariate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceCsvRow {
    pub sequence: Sequence,
    pub term: String,
    pub significant_points: usize,
    pub anywhere: bool,
    pub everywhere: bool,
    pub significant_days: String,
}

/// Grid indices as day ranges, e.g. `0-20 45 60-200`.
pub fn day_ranges(points: &[usize], step: i64) -> String {
    let mut parts: Vec<String> = Vec::new();
    let mut k = 0;
    while k < points.len() {
        let start = points[k];
        while k + 1 < points.len() && points[k + 1] == points[k] + 1 {
            k += 1;
        }
        let (a, b) = (start as i64 * step, points[k] as i64 * step);
        parts.push(if a == b { a.to_string() } else { format!("{a}-{b}") });
        k += 1;
    }
    parts.join(" ")
}

pub fn stage_fosr<X: ReplicateRunner>(config: &RunConfig, profiles: &[ConcatProfile], out: &Path, runner: &X) -> Result<Vec<(Sequence, FosrFit)>> {
    ensure_dir(out)?;
    let design = design_for(config, profiles)?;
    let grid = config.profile_grid();
    let t = grid.len();
    let days: Vec<f64> = grid.days().map(|d| d as f64).collect();
    let options = FosrOptions {
        basis_dim: config.fosr.basis_dim,
        lambda: config.fosr.lambda,
        ..FosrOptions::default()
    };
    let mut fits = Vec::new();
    let mut significance = Vec::new();
    for s in Sequence::ALL {
        let slices: Vec<&[f64]> = profiles
            .iter()
            .map(|p| &p.values[s.index() * t..(s.index() + 1) * t])
            .collect();
        let seed = derive_seed(stage_seed(config.seed, Stage::Fosr), s.index() as u64);
        let fit = fit_fosr(&slices, &design, &days, &options, config.fosr.bootstrap, seed, runner).module("fosr")?;
        let mut header = vec!["day".to_string()];
        for c in &fit.coefficients {
            for suffix in ["estimate", "raw", "lower", "upper"] {
                header.push(format!("{}_{suffix}", c.name));
            }
        }
        let rows: Vec<Vec<String>> = (0..t)
            .map(|k| {
                let mut row = vec![grid.days().nth(k).unwrap_or_default().to_string()];
                for (j, c) in fit.coefficients.iter().enumerate() {
                    row.push(c.smoothed[k].to_string());
                    row.push(c.raw[k].to_string());
                    match fit.bands.get(j) {
                        Some(b) => {
                            row.push(b.lower[k].to_string());
                            row.push(b.upper[k].to_string());
                        }
                        None => row.extend([String::new(), String::new()]),
                    }
                }
                row
            })
            .collect();
        write_table(&out.join(artifacts::fosr_curves(s)), &header, &rows)?;
        for f in significance_summary(&fit) {
            significance.push(SignificanceCsvRow {
                sequence: s,
                term: f.name,
                significant_points: f.significant_points.len(),
                anywhere: f.anywhere,
                everywhere: f.everywhere,
                significant_days: day_ranges(&f.significant_points, grid.step),
            });
        }
        fits.push((s, fit));
    }
    write_rows(&out.join(artifacts::FOSR_SIGNIFICANCE), significance)?;
    Ok(fits)
}

/// Review panels for every scored lesion; needs volumes, events and scores.
pub fn stage_panels(config: &RunConfig, out: &Path) -> Result<crate::panels::PanelIndex> {
    let cohort = load_input_cohort(config)?;
    let events = crate::tables::read_events(&out.join(artifacts::EVENTS))?;
    let scores: Vec<ScoreRow> = read_rows(&out.join(artifacts::PCA_SCORES))?;
    crate::panels::render_panels(&cohort, &events, &scores, &out.join(artifacts::PANELS))
}

pub fn uses_volumes(config: &RunConfig) -> bool {
    config.input.profile_table.is_none() && config.input.manifest.is_some()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementCsvRow {
    pub statistic: lesion_core::agreement::StatisticKind,
    pub rating: String,
    pub raters: String,
    pub n: usize,
    pub estimate: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// Agreement report from the rating ledger; `None` when no ledger exists.
pub fn stage_agreement<X: ReplicateRunner>(config: &RunConfig, out: &Path, runner: &X) -> Result<Option<AgreementReport>> {
    let ledger = config.ledger_path();
    if !ledger.exists() {
        return Ok(None);
    }
    ensure_dir(out)?;
    let records = effective_records(&read_ledger(&ledger)?);
    let report = bootstrap_agreement(
        &records,
        config.agreement.bootstrap,
        stage_seed(config.seed, Stage::Agreement),
        config.agreement.include_repeats_between,
        runner,
    )
    .module("agreement")?;
    write_json(&out.join(artifacts::AGREEMENT_JSON), &report)?;
    write_rows(
        &out.join(artifacts::AGREEMENT_CSV),
        report.statistics.iter().map(|s| AgreementCsvRow {
            statistic: s.kind,
            rating: match s.rating {
                Some(RatingKind::Segmentation) => "segmentation".into(),
                Some(RatingKind::Pc) => "pc".into(),
                None => "segmentation-vs-pc".into(),
            },
            raters: s.raters.join(" "),
            n: s.n,
            estimate: s.estimate,
            lower: s.lower,
            upper: s.upper,
        }),
    )?;
    Ok(Some(report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub seed: u64,
    pub stage_seeds: Vec<(String, u64)>,
    pub grid: crate::config::GridConfig,
    pub events: crate::config::EventsConfig,
    pub hinge_mode: lesion_core::design::HingeMode,
    pub exclude_subjects: Vec<String>,
    pub pca: crate::config::PcaConfig,
    pub lmm: crate::config::LmmConfig,
    pub fosr: crate::config::FosrConfig,
    pub agreement_bootstrap: usize,
    pub include_repeats_between: bool,
    pub input: String,
    pub stages: Vec<String>,
}

pub const STAGES: [&str; 6] = ["profiles", "pca", "lmm", "fosr", "panels", "agreement"];

/// Writes the run manifest, keeping stages recorded by earlier invocations
/// with the same seed.
pub fn write_run_manifest(config: &RunConfig, out: &Path, stages: &[&str]) -> Result<()> {
    ensure_dir(out)?;
    let mut done: Vec<String> = match read_json::<RunManifest>(&out.join(artifacts::RUN_MANIFEST)) {
        Ok(m) if m.seed == config.seed => m.stages,
        _ => Vec::new(),
    };
    done.extend(stages.iter().map(|s| s.to_string()));
    let stages: Vec<&str> = STAGES.into_iter().filter(|s| done.iter().any(|d| d == s)).collect();
    let file_name = |p: &Option<PathBuf>| {
        p.as_ref()
            .and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
    };
    let input = file_name(&config.input.profile_table)
        .or_else(|| file_name(&config.input.manifest))
        .unwrap_or_default();
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        stage_seeds: [
            ("pca", Stage::Pca),
            ("lmm", Stage::Lmm),
            ("fosr", Stage::Fosr),
            ("agreement", Stage::Agreement),
            ("trial", Stage::Trial),
        ]
        .iter()
        .map(|(n, s)| (n.to_string(), stage_seed(config.seed, *s)))
        .collect(),
        grid: config.grid,
        events: config.events,
        hinge_mode: config.hinge_mode,
        exclude_subjects: config.exclude_subjects.clone(),
        pca: config.pca,
        lmm: config.lmm,
        fosr: config.fosr,
        agreement_bootstrap: config.agreement.bootstrap,
        include_repeats_between: config.agreement.include_repeats_between,
        input,
        stages: stages.iter().map(|s| s.to_string()).collect(),
    };
    write_json(&out.join(artifacts::RUN_MANIFEST), &manifest)
}

#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub profiles: ProfileStage,
    pub pca: PcaStage,
    pub lmm: LmmStage,
    pub fosr: Vec<(Sequence, FosrFit)>,
    pub panels: Option<crate::panels::PanelIndex>,
    pub agreement: Option<AgreementReport>,
}

/// Every stage in order, then the report.
pub fn run_pipeline<X: ReplicateRunner>(config: &RunConfig, runner: &X) -> Result<RunOutputs> {
    let out = &config.output_dir;
    let profiles = stage_profiles(config, out)?;
    let pca = stage_pca(config, &profiles.profiles, out, runner)?;
    let lmm = stage_lmm(config, &profiles.profiles, &pca.scores, out, runner)?;
    let fosr = stage_fosr(config, &profiles.profiles, out, runner)?;
    let mut stages = vec!["profiles", "pca", "lmm", "fosr"];
    let panels = if uses_volumes(config) {
        stages.push("panels");
        Some(stage_panels(config, out)?)
    } else {
        None
    };
    let agreement = stage_agreement(config, out, runner)?;
    if agreement.is_some() {
        stages.push("agreement");
    }
    write_run_manifest(config, out, &stages)?;
    crate::report::write_report(out)?;
    Ok(RunOutputs {
        profiles,
        pca,
        lmm,
        fosr,
        panels,
        agreement,
    })
}

pub fn read_summary<T: serde::de::DeserializeOwned>(out: &Path, name: &str) -> Result<T> {
    read_json(&out.join(name))
}

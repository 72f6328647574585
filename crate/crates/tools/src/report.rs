//! Single-file Markdown summary of an artifact directory.

use std::fmt::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::pipeline::{artifacts, ExtractionSummary, LmmSummary, RunManifest};
use crate::tables::{read_json, write_text};

struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_csv(path: &Path) -> Result<CsvTable> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(Error::csv(path))?;
    let header = r.headers().map_err(Error::csv(path))?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
        .collect::<std::result::Result<_, _>>()
        .map_err(Error::csv(path))?;
    Ok(CsvTable { header, rows })
}

fn required_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    read_json(path)
}

fn cell(v: &str) -> String {
    match v.parse::<f64>() {
        Ok(x) if v.contains('.') || v.contains('e') => {
            if x != 0.0 && x.abs() < 1e-3 {
                format!("{x:.2e}")
            } else {
                format!("{x:.3}")
            }
        }
        _ => v.to_string(),
    }
}

fn markdown_table(out: &mut String, t: &CsvTable, columns: &[&str], keep: impl Fn(&[String]) -> bool) {
    let idx: Vec<usize> = columns
        .iter()
        .filter_map(|c| t.header.iter().position(|h| h == c))
        .collect();
    let _ = writeln!(out, "| {} |", idx.iter().map(|&i| t.header[i].as_str()).collect::<Vec<_>>().join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(idx.len()));
    for row in t.rows.iter().filter(|r| keep(r)) {
        let cells: Vec<String> = idx.iter().map(|&i| cell(&row[i])).collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
    out.push('\n');
}

fn interval(lo: Option<f64>, hi: Option<f64>) -> String {
    match (lo, hi) {
        (Some(l), Some(h)) => format!("({l:.3}, {h:.3})"),
        _ => "not bootstrapped".into(),
    }
}

/// Renders the report text; fails if a required artifact is missing.
pub fn render_report(dir: &Path) -> Result<String> {
    let manifest: RunManifest = required_json(&dir.join(artifacts::RUN_MANIFEST))?;
    let extraction: ExtractionSummary = required_json(&dir.join(artifacts::EXTRACTION))?;
    let variance = read_csv(&dir.join(artifacts::PCA_VARIANCE))?;
    let pca_boot: serde_json::Value = required_json(&dir.join(artifacts::PCA_BOOTSTRAP))?;
    let lmm = read_csv(&dir.join(artifacts::LMM_MULTIVARIATE))?;
    let lmm_fit: LmmSummary = required_json(&dir.join(artifacts::LMM_FIT))?;

    let mut out = String::new();
    let _ = writeln!(out, "# Lesion analysis report\n");
    let _ = writeln!(out, "## Run\n");
    let _ = writeln!(out, "- tool version: {}", manifest.tool_version);
    let _ = writeln!(out, "- seed: {}", manifest.seed);
    let _ = writeln!(out, "- input: {}", manifest.input);
    let _ = writeln!(out, "- stages: {}", manifest.stages.join(", "));
    let _ = writeln!(out, "- grid: 0 to {} days, step {}\n", manifest.grid.end_day, manifest.grid.step);

    let _ = writeln!(out, "## Profiles\n");
    let _ = writeln!(out, "- source: {}", extraction.source);
    if let Some(c) = &extraction.counts {
        let _ = writeln!(
            out,
            "- incident voxels: {}, lesion tissue: {}, with full follow-up: {}",
            c.events, c.lesion_tissue, c.included
        );
    }
    let _ = writeln!(
        out,
        "- profiles: {} voxels in {} lesions from {} subjects\n",
        extraction.n_profiles, extraction.n_lesions, extraction.n_subjects
    );

    let _ = writeln!(out, "## Principal components\n");
    let f = |k: &str| pca_boot.get(k).and_then(|v| v.as_f64());
    let _ = writeln!(
        out,
        "First component explains {:.1}% of the variance, bootstrap interval {} from {} replicates.\n",
        100.0 * f("variance_explained_1").unwrap_or(f64::NAN),
        interval(f("variance_explained_1_lower"), f("variance_explained_1_upper")),
        pca_boot.get("replicates").and_then(|v| v.as_u64()).unwrap_or(0)
    );
    markdown_table(
        &mut out,
        &variance,
        &["component", "eigenvalue", "variance_explained", "cumulative"],
        |r| r[0].parse::<usize>().is_ok_and(|k| k <= 5),
    );

    let _ = writeln!(out, "## Mixed model\n");
    let _ = writeln!(
        out,
        "Method {:?}, {} observations, {} subjects, {} lesions. Variance components: subject {:.3}, lesion {:.3}, residual {:.3}. Bootstrap: {} replicates.\n",
        lmm_fit.method,
        lmm_fit.n_obs,
        lmm_fit.n_subjects,
        lmm_fit.n_lesions,
        lmm_fit.sigma2_subject,
        lmm_fit.sigma2_lesion,
        lmm_fit.sigma2_residual,
        lmm_fit.bootstrap_replicates
    );
    let coef_cols = ["term", "estimate", "std_error", "t_value", "p_value", "boot_lower", "boot_upper"];
    let _ = writeln!(out, "### Multivariate\n");
    markdown_table(&mut out, &lmm, &coef_cols, |_| true);
    match read_csv(&dir.join(artifacts::LMM_UNIVARIATE)) {
        Ok(t) => {
            let _ = writeln!(out, "### Univariate\n");
            markdown_table(&mut out, &t, &[&coef_cols[..], &["note"]].concat(), |_| true);
        }
        Err(Error::MissingArtifact(_)) => {
            let _ = writeln!(out, "Univariate models were not run.\n");
        }
        Err(e) => return Err(e),
    }

    let _ = writeln!(out, "## Function-on-scalar regression\n");
    match read_csv(&dir.join(artifacts::FOSR_SIGNIFICANCE)) {
        Ok(t) => {
            let _ = writeln!(out, "Coefficients whose pointwise 95% band excludes zero on part of the grid.\n");
            markdown_table(
                &mut out,
                &t,
                &["sequence", "term", "significant_points", "everywhere", "significant_days"],
                |r| r.get(3).is_some_and(|a| a == "true"),
            );
        }
        Err(Error::MissingArtifact(_)) => {
            let _ = writeln!(out, "Function-on-scalar regression was not run.\n");
        }
        Err(e) => return Err(e),
    }

    let _ = writeln!(out, "## Rater agreement\n");
    match read_csv(&dir.join(artifacts::AGREEMENT_CSV)) {
        Ok(t) => markdown_table(
            &mut out,
            &t,
            &["statistic", "rating", "raters", "n", "estimate", "lower", "upper"],
            |_| true,
        ),
        Err(Error::MissingArtifact(_)) => {
            let _ = writeln!(out, "Trial not run: no rating ledger was found.\n");
        }
        Err(e) => return Err(e),
    }
    Ok(out)
}

pub fn write_report(dir: &Path) -> Result<()> {
    let text = render_report(dir)?;
    write_text(&dir.join(artifacts::REPORT), &text)
}

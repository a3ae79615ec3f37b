//! Batch commands.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Serialize;

use maskbench_core::bank::{build_bank, CandidateBank, Degeneracy, Polarity};
use maskbench_core::eval::{render_rows_csv, render_table, score_dataset, EvalReport, MatchRule, TableFormat};
use maskbench_core::mask::{load_mask, sidecar_path};
use maskbench_core::raster::{BinaryMask, WordImage};
use maskbench_core::recognize::{
    pad as pad_mask, recognize_all, render_for_ocr, render_mask_png_bytes, AdapterConfig, OcrJob, OcrResult,
};
use maskbench_core::store::{load_manifest, DatasetManifest};

use crate::{CandidatesArgs, EvaluateArgs, FormatArg, PadArgs, ReportArgs, UsageError};

#[derive(Debug, Serialize)]
struct BankFileEntry<'a> {
    index: usize,
    method: String,
    degenerate: Option<Degeneracy>,
    foreground: usize,
    file: &'a str,
}

#[derive(Debug, Serialize)]
struct BankFile<'a> {
    image_id: &'a str,
    width: usize,
    height: usize,
    polarity: Polarity,
    seed: u64,
    candidates: Vec<BankFileEntry<'a>>,
}

pub fn candidate_file_name(index: usize) -> String {
    format!("cand_{index:02}.png")
}

/// Write the bank's masks and `bank.json` into `dir`.
pub fn write_bank(bank: &CandidateBank, seed: u64, dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let names: Vec<String> = (1..=bank.len()).map(candidate_file_name).collect();
    let mut entries = Vec::with_capacity(bank.len());
    for (i, cand) in bank.candidates().iter().enumerate() {
        let path = dir.join(&names[i]);
        fs::write(&path, cand.mask.to_png_bytes()).with_context(|| format!("writing {}", path.display()))?;
        entries.push(BankFileEntry {
            index: i + 1,
            method: cand.method.to_string(),
            degenerate: cand.degenerate,
            foreground: cand.mask.count_foreground(),
            file: &names[i],
        });
    }
    let doc = BankFile {
        image_id: &bank.image_id,
        width: bank.width,
        height: bank.height,
        polarity: bank.polarity,
        seed,
        candidates: entries,
    };
    let path = dir.join("bank.json");
    let mut json = serde_json::to_vec_pretty(&doc)?;
    json.push(b'\n');
    fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Default, PartialEq, Eq)]
pub struct CandidatesSummary {
    pub written: Vec<String>,
    /// `(image_id, error)` for images skipped under `--keep-going`.
    pub failed: Vec<(String, String)>,
}

pub fn candidates(args: &CandidatesArgs) -> anyhow::Result<CandidatesSummary> {
    let manifest = load_manifest(&args.manifest)?;
    let polarity = Polarity::from(args.polarity);
    let mut summary = CandidatesSummary::default();
    for entry in &manifest.entries {
        let img = match WordImage::open(&entry.image_id, manifest.resolve(entry)) {
            Ok(img) => img,
            Err(e) if args.keep_going => {
                eprintln!("{}: skipped: {e}", entry.image_id);
                summary.failed.push((entry.image_id.clone(), e.to_string()));
                continue;
            }
            Err(e) => return Err(e).with_context(|| format!("image `{}`", entry.image_id)),
        };
        let bank = build_bank(&img, polarity, args.seed);
        write_bank(&bank, args.seed, &args.out.join(&entry.image_id))?;
        let degenerate = bank.candidates().iter().filter(|c| c.degenerate.is_some()).count();
        println!(
            "{}\t{}x{}\t{} candidates\t{} degenerate",
            entry.image_id,
            bank.width,
            bank.height,
            bank.len(),
            degenerate
        );
        summary.written.push(entry.image_id.clone());
    }
    Ok(summary)
}

/// A committed label mask when a sidecar exists, otherwise any image with
/// nonzero samples as foreground.
pub fn load_binary_mask(path: &Path) -> anyhow::Result<BinaryMask> {
    if sidecar_path(path).exists() {
        Ok(load_mask(path)?.to_binary())
    } else {
        Ok(BinaryMask::from_image_file(path)?)
    }
}

fn adapter_config(args: &EvaluateArgs) -> anyhow::Result<AdapterConfig> {
    let cfg = match (&args.adapter_config, &args.adapter_cmd) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(cmd)) => AdapterConfig {
            command: cmd.clone(),
            timeout_secs: args.timeout,
            engine_tag: args.engine_tag.clone(),
        },
        (None, None) => bail!(UsageError("one of --adapter-config or --adapter-cmd is required".into())),
    };
    cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(cfg)
}

pub fn mask_file(masks: &Path, image_id: &str) -> PathBuf {
    masks.join(format!("{image_id}.png"))
}

/// Render every available mask, run the adapter, and score.
pub fn evaluate_manifest(
    manifest: &DatasetManifest,
    args: &EvaluateArgs,
    cfg: &AdapterConfig,
) -> anyhow::Result<EvalReport> {
    if manifest.is_empty() {
        bail!(UsageError(format!("manifest `{}` has no images", manifest.name)));
    }
    let missing: Vec<&str> = manifest
        .entries
        .iter()
        .filter(|e| !mask_file(&args.masks, &e.image_id).is_file())
        .map(|e| e.image_id.as_str())
        .collect();
    if !missing.is_empty() {
        if !args.lenient {
            bail!(
                "{} image(s) have no mask in {}: {}",
                missing.len(),
                args.masks.display(),
                missing.join(", ")
            );
        }
        eprintln!("scoring {} image(s) without a mask as empty: {}", missing.len(), missing.join(", "));
    }

    let work = tempfile::tempdir().context("creating render directory")?;
    let mut jobs = Vec::new();
    for entry in &manifest.entries {
        let path = mask_file(&args.masks, &entry.image_id);
        if !path.is_file() {
            continue;
        }
        let mask = load_binary_mask(&path).with_context(|| format!("mask for `{}`", entry.image_id))?;
        let input = work.path().join(format!("{}.png", entry.image_id));
        if args.no_pad {
            fs::write(&input, render_mask_png_bytes(&mask))?;
        } else {
            render_for_ocr(&pad_mask(&mask), &input)?;
        }
        jobs.push(OcrJob {
            image_id: entry.image_id.clone(),
            input,
        });
    }
    let results: Vec<OcrResult> = recognize_all(&jobs, cfg, args.jobs);
    for r in &results {
        if let Some(detail) = &r.detail {
            eprintln!("{}: {:?}: {detail}", r.image_id, r.exit_status);
        }
    }
    let rule = MatchRule {
        case_insensitive: args.case_insensitive,
    };
    let algorithm = args.algorithm.clone().unwrap_or_else(|| cfg.engine_tag.clone());
    Ok(score_dataset(manifest, &results, rule, &algorithm)?)
}

pub fn write_report(report: &EvalReport, out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let one = std::slice::from_ref(report);
    let files = [
        ("report.txt", render_table(one, TableFormat::Text)?),
        ("report.csv", render_table(one, TableFormat::Csv)?),
        ("rows.csv", render_rows_csv(report)),
        ("report.json", serde_json::to_string_pretty(report)? + "\n"),
    ];
    for (name, body) in files {
        let path = out.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> anyhow::Result<EvalReport> {
    let cfg = adapter_config(args)?;
    let manifest = load_manifest(&args.manifest)?;
    let report = evaluate_manifest(&manifest, args, &cfg)?;
    write_report(&report, &args.out)?;
    print!("{}", render_table(std::slice::from_ref(&report), TableFormat::Text)?);
    Ok(report)
}

pub fn pad(args: &PadArgs) -> anyhow::Result<()> {
    let mask = load_binary_mask(&args.mask)?;
    let padded = pad_mask(&mask);
    render_for_ocr(&padded, &args.out)?;
    println!(
        "{}x{} -> {}x{}",
        mask.width(),
        mask.height(),
        padded.width(),
        padded.height()
    );
    Ok(())
}

pub fn report(args: &ReportArgs) -> anyhow::Result<String> {
    let mut reports = Vec::with_capacity(args.inputs.len());
    for path in &args.inputs {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let r: EvalReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        reports.push(r);
    }
    let format = match args.format {
        FormatArg::Text => TableFormat::Text,
        FormatArg::Csv => TableFormat::Csv,
    };
    Ok(render_table(&reports, format)?)
}

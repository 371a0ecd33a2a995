//! Evaluation commands writing a results JSON.
//!
//! Settings resolve in order: flag, then `--config` JSON overlay, then the
//! built-in default.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use merklespeech_core::dsp::TransformSpec;
use merklespeech_eval::{emit_report, EvalConfig, Report, Sections, Suite};
use serde::Deserialize;

use crate::{set_jobs, usage};

/// A `;`-separated list of transform records.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditions(pub Vec<TransformSpec>);

fn parse_conditions(s: &str) -> Result<Conditions, String> {
    s.split(';')
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(|c| c.parse::<TransformSpec>().map_err(|e| format!("`{c}`: {e}")))
        .collect::<Result<Vec<_>, _>>()
        .and_then(|v| if v.is_empty() { Err("no conditions given".into()) } else { Ok(Conditions(v)) })
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Results JSON output path.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON object of defaults for the flags below (keys in snake_case).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; every random stream derives from it [default: 1].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Negative windows, split evenly into validation and test [default: 100000].
    #[arg(long)]
    pub windows: Option<usize>,
    /// Watermark quantisation step in log10 magnitude units [default: 0.6].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Transform conditions separated by ';', e.g. "noise:snr_db=20,seed=0;clip:threshold=0.95".
    #[arg(long, value_parser = parse_conditions)]
    pub conditions: Option<Conditions>,
    /// Comma-separated strengths for the sweep [default: 0.2,0.4,0.6,0.8,1.0].
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Condition applied at every sweep point [default: noise:snr_db=20,seed=0].
    #[arg(long)]
    pub sweep_condition: Option<TransformSpec>,
    /// Comma-separated screening-score FPR targets [default: 0.001,0.0001].
    #[arg(long, value_delimiter = ',')]
    pub targets: Option<Vec<f64>>,
    /// Synthetic clean corpus size in files [default: 80].
    #[arg(long)]
    pub files: Option<usize>,
    /// Synthetic negative corpus size in files [default: 20].
    #[arg(long)]
    pub negative_files: Option<usize>,
    /// Positive score draws for the ROC area [default: 5000].
    #[arg(long)]
    pub positives: Option<usize>,
    /// Chunks per robustness condition and sweep point [default: 90].
    #[arg(long)]
    pub condition_chunks: Option<usize>,
    /// Bootstrap resamples for confidence intervals [default: 2000].
    #[arg(long)]
    pub bootstrap_resamples: Option<usize>,
    /// Directory of 16 kHz mono WAV files replacing the synthetic clean corpus.
    #[arg(long)]
    pub corpus_dir: Option<PathBuf>,
    /// Directory of unwatermarked WAV files replacing the synthetic negatives.
    #[arg(long)]
    pub negative_dir: Option<PathBuf>,
    /// Worker threads [default: available cores].
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Overlay {
    seed: Option<u64>,
    windows: Option<usize>,
    alpha: Option<f64>,
    conditions: Option<String>,
    alphas: Option<Vec<f64>>,
    sweep_condition: Option<String>,
    targets: Option<Vec<f64>>,
    files: Option<usize>,
    negative_files: Option<usize>,
    positives: Option<usize>,
    condition_chunks: Option<usize>,
    bootstrap_resamples: Option<usize>,
    corpus_dir: Option<PathBuf>,
    negative_dir: Option<PathBuf>,
    jobs: Option<usize>,
}

impl Overlay {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("--config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Kind {
    Fpr,
    Robust,
    Sweep,
}

impl Kind {
    fn sections(self) -> Sections {
        let none = Sections::NONE;
        match self {
            Kind::Fpr => Sections { clean: true, fpr: true, ..none },
            Kind::Robust => Sections { robustness: true, splice: true, ..none },
            Kind::Sweep => Sections { alpha_sweep: true, ..none },
        }
    }

    fn name(self) -> &'static str {
        match self {
            Kind::Fpr => "bench-fpr",
            Kind::Robust => "bench-robust",
            Kind::Sweep => "bench-sweep",
        }
    }
}

struct Resolved {
    config: EvalConfig,
    corpus_dir: Option<PathBuf>,
    negative_dir: Option<PathBuf>,
    jobs: Option<usize>,
}

fn resolve(a: &BenchArgs) -> Result<Resolved> {
    let o = match &a.config {
        Some(path) => Overlay::load(path)?,
        None => Overlay::default(),
    };
    let d = EvalConfig::default();
    let spec = |flag: &str, s: &str| s.parse::<TransformSpec>().map_err(|e| usage(format!("--config {flag} `{s}`: {e}")));
    let conditions = match (&a.conditions, &o.conditions) {
        (Some(c), _) => c.0.clone(),
        (None, Some(s)) => parse_conditions(s).map_err(|e| usage(format!("--config conditions: {e}")))?.0,
        (None, None) => d.conditions,
    };
    let sweep_condition = match (a.sweep_condition, &o.sweep_condition) {
        (Some(c), _) => c,
        (None, Some(s)) => spec("sweep_condition", s)?,
        (None, None) => d.sweep_condition,
    };
    let config = EvalConfig {
        seed: a.seed.or(o.seed).unwrap_or(d.seed),
        files: a.files.or(o.files).unwrap_or(d.files),
        negative_files: a.negative_files.or(o.negative_files).unwrap_or(d.negative_files),
        windows: a.windows.or(o.windows).unwrap_or(d.windows),
        positives: a.positives.or(o.positives).unwrap_or(d.positives),
        alpha: a.alpha.or(o.alpha).unwrap_or(d.alpha),
        condition_chunks: a.condition_chunks.or(o.condition_chunks).unwrap_or(d.condition_chunks),
        conditions,
        alphas: a.alphas.clone().or(o.alphas).unwrap_or(d.alphas),
        sweep_condition,
        targets: a.targets.clone().or(o.targets).unwrap_or(d.targets),
        bootstrap_resamples: a.bootstrap_resamples.or(o.bootstrap_resamples).unwrap_or(d.bootstrap_resamples),
    };
    if config.files == 0 && a.corpus_dir.is_none() && o.corpus_dir.is_none() {
        return Err(usage("--files must be at least 1"));
    }
    Ok(Resolved {
        config,
        corpus_dir: a.corpus_dir.clone().or(o.corpus_dir),
        negative_dir: a.negative_dir.clone().or(o.negative_dir),
        jobs: a.jobs.or(o.jobs),
    })
}

fn summarise(report: &Report) {
    if let Some(c) = &report.clean {
        println!(
            "clean: {} chunks, wm_only {:.4}, msv1 {:.4}, ber {:.2e}",
            c.chunks, c.wm_only.rate, c.msv1.rate, c.ber.rate
        );
        if let Some(auc) = &c.auc {
            println!("auc: {:.4}", auc.value);
        }
    }
    if let Some(f) = &report.fpr {
        for v in &f.verified {
            let interval = match (v.upper_bound, v.bootstrap_ci) {
                (Some(ub), _) => format!("95% upper bound {ub:.3e}"),
                (None, Some([lo, hi])) => format!("bootstrap 95% [{lo:.3e}, {hi:.3e}]"),
                (None, None) => String::new(),
            };
            println!("fpr {}: {}/{} ({interval})", v.tier, v.count, v.n);
        }
    }
    for r in report.robustness.iter().flatten() {
        println!("{}: decode {:.3}, wm_only {:.3}, msv1 {:.3}", r.condition, r.decode.rate, r.wm_only.rate, r.msv1.rate);
    }
    for s in report.splice.iter().flatten() {
        println!("splice {} ({}): wm_only {:.3}, msv1 {:.3}", s.scenario, s.metric, s.wm_only, s.msv1);
    }
    for p in report.alpha_sweep.iter().flatten() {
        println!("alpha {}: snr {:.2} dB, wm_only {:.3}", p.alpha, p.snr_db, p.wm_only.rate);
    }
}

pub(crate) fn run(kind: Kind, a: &BenchArgs) -> Result<()> {
    let r = resolve(a)?;
    set_jobs(r.jobs)?;
    println!("seed {} (rerun: {} --seed {} with the same flags)", r.config.seed, kind.name(), r.config.seed);
    let started = Instant::now();
    let suite = Suite::from_sources(r.config, r.corpus_dir.as_deref(), r.negative_dir.as_deref())?;
    let report = suite.report(kind.sections())?;
    emit_report(&report, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    summarise(&report);
    eprintln!("wrote {} in {:.1} s", a.out.display(), started.elapsed().as_secs_f64());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conditions_split_on_semicolons() {
        let c = parse_conditions("clip:threshold=0.95; noise:snr_db=20,seed=3;").unwrap();
        assert_eq!(c.0.len(), 2);
        assert_eq!(c.0[1], TransformSpec::Noise { snr_db: 20.0, seed: 3 });
        assert!(parse_conditions(" ; ").is_err());
        assert!(parse_conditions("warp:x=1").is_err());
    }
}

//! Command-line frontend: argument definitions and command runners.
//!
//! Every artifact is a file (WAV, JSON or a line-oriented key file), so the
//! commands compose in shell pipelines. `main` maps [`UsageError`] to exit
//! status 2 and any other error to 1.

mod bench;

use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use merklespeech_core::dsp::wav::{read_wav, write_wav, WavFormat};
use merklespeech_core::dsp::{apply_transform, seconds_to_samples, AudioBuffer, TransformSpec};
use merklespeech_core::manifest::{trust_line, IssuerKeypair, IssuerMeta, Params, TrustStore};
use merklespeech_core::payload::Cid;
use merklespeech_core::protocol::{Issuer, Pipeline, Tier};
use merklespeech_core::repository::{AcceptPolicy, FileStore, Repository, REPO_ENV};
use merklespeech_core::watermark::WatermarkKey;
use merklespeech_eval::splice::{render, whole_chunks, SpliceMode, SplicePlan, Sources};
use merklespeech_eval::synth::synth_corpus;
use merklespeech_repo_http::{HttpRepository, ServerHandle};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub use bench::BenchArgs;

/// Environment variable holding the secret watermark key.
pub const WM_KEY_ENV: &str = "MERKLESPEECH_WM_KEY";

/// A flag combination or value the command cannot act on.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Debug, Parser)]
#[command(name = "merklespeech", version, about = "Chunk-level speech provenance: enroll, verify, attack and evaluate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an issuer signing key and its trust-store line.
    Keygen(KeygenArgs),
    /// Watermark, commit, sign and publish an utterance.
    Enroll(EnrollArgs),
    /// Produce a per-chunk verification timeline for a recording.
    Verify(VerifyArgs),
    /// Apply one signal transform to a recording.
    Attack(AttackArgs),
    /// Build an edited recording from whole chunks of its sources.
    Splice(SpliceArgs),
    /// Serve a repository directory over HTTP.
    Serve(ServeArgs),
    /// Clean-chunk rates and false positives on unwatermarked windows.
    BenchFpr(BenchArgs),
    /// Survival under each transform condition and under splicing.
    BenchRobust(BenchArgs),
    /// Embedding SNR and robustness across watermark strengths.
    BenchSweep(BenchArgs),
    /// Write a seeded synthetic speech-like corpus as WAV files.
    SynthCorpus(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct IssuerArgs {
    /// Issuer identifier bound into signatures (no whitespace).
    #[arg(long, default_value = "issuer")]
    pub issuer_id: String,
    /// Issuer key id carried in every payload.
    #[arg(long, default_value_t = 1)]
    pub kid: u16,
}

impl IssuerArgs {
    fn meta(&self) -> IssuerMeta {
        IssuerMeta { issuer_id: self.issuer_id.clone(), kid: self.kid }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RepoArgs {
    /// Repository root directory, or an http(s) URL.
    #[arg(long, env = REPO_ENV)]
    pub repo: Option<String>,
    /// Repository service base URL; takes precedence over --repo.
    #[arg(long)]
    pub repo_url: Option<String>,
}

impl RepoArgs {
    fn open(&self, policy: AcceptPolicy) -> Result<Arc<dyn Repository>> {
        let location = match (&self.repo_url, &self.repo) {
            (Some(url), _) => url.as_str(),
            (None, Some(repo)) => repo.as_str(),
            (None, None) => return Err(usage(format!("one of --repo or --repo-url is required (or set {REPO_ENV})"))),
        };
        if location.starts_with("http://") || location.starts_with("https://") {
            return Ok(Arc::new(HttpRepository::new(location)));
        }
        let store = FileStore::open(location, policy).with_context(|| format!("opening repository {location}"))?;
        Ok(Arc::new(store))
    }
}

fn default_wm_key() -> u64 {
    WatermarkKey::default().seed
}

#[derive(Debug, Args)]
pub struct KeygenArgs {
    /// Where to write the secret key (hex seed).
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the trust-store line [default: <out>.trust].
    #[arg(long)]
    pub trust_out: Option<PathBuf>,
    #[command(flatten)]
    pub issuer: IssuerArgs,
    /// Derive the key from this seed instead of the OS generator (testing only).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overwrite an existing key file.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EnrollArgs {
    /// Input WAV (mono, 16 kHz).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Issuer secret key written by keygen.
    #[arg(long)]
    pub sk: PathBuf,
    #[command(flatten)]
    pub repo: RepoArgs,
    /// Output WAV of the watermarked audio (32-bit float).
    #[arg(long)]
    pub out: PathBuf,
    /// Watermark quantisation step in log10 magnitude units.
    #[arg(long, default_value_t = 0.6)]
    pub alpha: f64,
    /// Derive the content identifier from this seed instead of at random.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub issuer: IssuerArgs,
    /// Secret watermark key.
    #[arg(long, env = WM_KEY_ENV, default_value_t = default_wm_key(), hide_env_values = true)]
    pub wm_key: u64,
    /// Also write the signed manifest here.
    #[arg(long)]
    pub manifest_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TierArg {
    /// Payload, manifest and signature only.
    #[value(alias = "wm_only")]
    Wm,
    /// Additionally, fingerprint inclusion under the signed root.
    Msv1,
    /// Both tiers.
    Both,
}

impl TierArg {
    fn tiers(self) -> &'static [Tier] {
        match self {
            TierArg::Wm => &[Tier::WmOnly],
            TierArg::Msv1 => &[Tier::Msv1],
            TierArg::Both => &Tier::BOTH,
        }
    }
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Input WAV to verify.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub repo: RepoArgs,
    /// Trust store of pinned issuer keys.
    #[arg(long)]
    pub trust: PathBuf,
    /// Assurance tier to report.
    #[arg(long, value_enum, default_value_t = TierArg::Both)]
    pub tier: TierArg,
    /// Timeline JSON output [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Watermark quantisation step the audio was enrolled with.
    #[arg(long, default_value_t = 0.6)]
    pub alpha: f64,
    /// Window stride in seconds; below the chunk length enables any-window search.
    #[arg(long)]
    pub stride_secs: Option<f64>,
    /// Secret watermark key.
    #[arg(long, env = WM_KEY_ENV, default_value_t = default_wm_key(), hide_env_values = true)]
    pub wm_key: u64,
    /// Worker threads [default: available cores].
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    /// Input WAV.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Transform record, e.g. noise:snr_db=20,seed=7 or clip:threshold=0.95.
    #[arg(long)]
    pub transform: TransformSpec,
    /// Output WAV (32-bit float, clamped to [-1, 1]).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpliceModeArg {
    /// Insert donor chunks before host chunk --at.
    Insert,
    /// Cut host chunks --at..--at+--count.
    Remove,
    /// Replace host chunks --at..--at+--count with silence.
    Mute,
    /// Seeded runs of host, --other and --donor chunks.
    Mixed,
}

impl From<SpliceModeArg> for SpliceMode {
    fn from(m: SpliceModeArg) -> Self {
        match m {
            SpliceModeArg::Insert => SpliceMode::Insert,
            SpliceModeArg::Remove => SpliceMode::Remove,
            SpliceModeArg::Mute => SpliceMode::Mute,
            SpliceModeArg::Mixed => SpliceMode::Mixed,
        }
    }
}

#[derive(Debug, Args)]
pub struct SpliceArgs {
    /// Edit to perform.
    #[arg(long, value_enum)]
    pub mode: SpliceModeArg,
    /// Host WAV.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Foreign audio supplying inserted chunks (insert, mixed).
    #[arg(long, required_if_eq_any = [("mode", "insert"), ("mode", "mixed")])]
    pub donor: Option<PathBuf>,
    /// Second enrolled asset (mixed).
    #[arg(long, required_if_eq("mode", "mixed"))]
    pub other: Option<PathBuf>,
    /// First host chunk affected.
    #[arg(long, default_value_t = 0)]
    pub at: usize,
    /// Number of chunks inserted, removed or muted.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Output length in chunks for mixed mode [default: host chunks].
    #[arg(long)]
    pub length: Option<usize>,
    /// Seed for mixed-mode run layout.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Chunk length in seconds.
    #[arg(long, default_value_t = 2.0)]
    pub chunk_secs: f64,
    /// Output WAV.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the chunk plan (source and index per output chunk) as JSON.
    #[arg(long)]
    pub plan_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Repository root directory.
    #[arg(long, env = REPO_ENV)]
    pub repo: PathBuf,
    /// Listen address; port 0 picks a free port.
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    /// Trust store; when given, uploads must carry a valid pinned signature.
    #[arg(long)]
    pub trust: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of utterances.
    #[arg(long, default_value_t = 10)]
    pub files: usize,
    /// Corpus seed; file k depends only on (seed, k).
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Keygen(a) => keygen(&a),
        Command::Enroll(a) => enroll(&a),
        Command::Verify(a) => verify(&a),
        Command::Attack(a) => attack(&a),
        Command::Splice(a) => splice(&a),
        Command::Serve(a) => serve(&a),
        Command::BenchFpr(a) => bench::run(bench::Kind::Fpr, &a),
        Command::BenchRobust(a) => bench::run(bench::Kind::Robust, &a),
        Command::BenchSweep(a) => bench::run(bench::Kind::Sweep, &a),
        Command::SynthCorpus(a) => synth(&a),
    }
}

/// Cap the global worker pool. Only the first call has an effect.
pub(crate) fn set_jobs(jobs: Option<usize>) -> Result<()> {
    match jobs {
        Some(0) => Err(usage("--jobs must be at least 1")),
        Some(n) => {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Ok(())
        }
        None => Ok(()),
    }
}

pub(crate) fn load_wav(path: &Path) -> Result<AudioBuffer> {
    read_wav(path).with_context(|| format!("reading {}", path.display()))
}

fn save_wav(path: &Path, audio: &AudioBuffer) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    write_wav(path, audio, WavFormat::Float32).with_context(|| format!("writing {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn keygen(a: &KeygenArgs) -> Result<()> {
    if a.out.exists() && !a.force {
        return Err(usage(format!("--out {} exists (pass --force to overwrite)", a.out.display())));
    }
    let keypair = match a.seed {
        Some(seed) => IssuerKeypair::generate(&mut ChaCha20Rng::seed_from_u64(seed)),
        None => IssuerKeypair::generate(&mut rand::rngs::OsRng),
    };
    let line = trust_line(&a.issuer.meta(), &keypair.public_key()).map_err(|e| usage(format!("--issuer-id: {e}")))?;
    keypair.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        std::fs::set_permissions(&a.out, std::fs::Permissions::from_mode(0o600))?;
    }
    let trust_out = a.trust_out.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".trust");
        p.into()
    });
    write_file(&trust_out, line.as_bytes())?;
    print!("{line}");
    eprintln!("secret key: {}\ntrust line: {}", a.out.display(), trust_out.display());
    Ok(())
}

fn enroll(a: &EnrollArgs) -> Result<()> {
    let audio = load_wav(&a.input)?;
    let keypair = IssuerKeypair::load(&a.sk).with_context(|| format!("loading key {}", a.sk.display()))?;
    let mut params = Params::for_kid(a.issuer.kid);
    params.qim.alpha = a.alpha;
    let pipeline = Pipeline::new(params, &WatermarkKey { seed: a.wm_key }).map_err(|e| usage(format!("--alpha: {e}")))?;
    let issuer = Issuer { keypair, meta: a.issuer.meta() };
    let cid = match a.seed {
        Some(seed) => Cid::from_rng(&mut ChaCha20Rng::seed_from_u64(seed)),
        None => Cid::random(),
    };
    let repo = a.repo.open(AcceptPolicy::default())?;
    let enrollment = pipeline.enroll_with_cid(&audio, &issuer, repo.as_ref(), cid)?;
    save_wav(&a.out, &enrollment.audio)?;
    if let Some(path) = &a.manifest_out {
        write_file(path, &enrollment.manifest.to_canonical_json()?)?;
    }

    let n = enrollment.chunks.len();
    let snr = enrollment.chunks.iter().map(|c| c.snr_db).filter(|s| s.is_finite()).sum::<f64>() / n as f64;
    println!("cid {}", cid.to_hex());
    println!("rid {:016x}", enrollment.manifest.rid_alias);
    println!("chunks {n}");
    println!("mean_snr_db {snr:.2}");
    let tail = audio.len() - n * pipeline.chunk_len();
    if tail > 0 {
        eprintln!("note: trailing {:.2} s is shorter than one chunk and was not enrolled", tail as f64 / audio.sample_rate as f64);
    }
    let warnings = enrollment.warnings();
    if !warnings.is_empty() {
        eprintln!("warning: embedding did not converge for chunks {warnings:?}");
    }
    Ok(())
}

fn verify(a: &VerifyArgs) -> Result<()> {
    set_jobs(a.jobs)?;
    let audio = load_wav(&a.input)?;
    let trust = TrustStore::load(&a.trust).with_context(|| format!("loading trust store {}", a.trust.display()))?;
    let mut params = Params::default();
    params.qim.alpha = a.alpha;
    if let Some(stride) = a.stride_secs {
        params.stride_secs = stride;
    }
    let pipeline =
        Pipeline::new(params, &WatermarkKey { seed: a.wm_key }).map_err(|e| usage(format!("--alpha/--stride-secs: {e}")))?;
    let repo = a.repo.open(AcceptPolicy::default())?;
    let timeline = pipeline.verify_streaming(&audio, a.tier.tiers(), &trust, repo.as_ref())?;
    let json = timeline.records_json()?;
    match &a.out {
        Some(path) => write_file(path, format!("{json}\n").as_bytes())?,
        None => println!("{json}"),
    }
    for &tier in a.tier.tiers() {
        let records: Vec<_> = timeline.tier(tier).collect();
        let ok = records.iter().filter(|r| r.verified()).count();
        let reasons = timeline.summary.get(&tier).map(|m| {
            m.iter().map(|(reason, n)| format!("{reason}={n}")).collect::<Vec<_>>().join(" ")
        });
        eprintln!("{tier}: {ok}/{} verified ({})", records.len(), reasons.unwrap_or_default());
    }
    Ok(())
}

fn attack(a: &AttackArgs) -> Result<()> {
    let audio = load_wav(&a.input)?;
    let mut out = apply_transform(&audio, &a.transform).map_err(|e| usage(format!("--transform {}: {e}", a.transform)))?;
    out.clamp_in_place();
    save_wav(&a.out, &out)
}

fn splice(a: &SpliceArgs) -> Result<()> {
    let host = load_wav(&a.input)?;
    let donor = a.donor.as_deref().map(load_wav).transpose()?;
    let other = a.other.as_deref().map(load_wav).transpose()?;
    if !(a.chunk_secs > 0.0) {
        return Err(usage("--chunk-secs must be positive"));
    }
    let len = seconds_to_samples(a.chunk_secs, host.sample_rate);
    let n = whole_chunks(&host, len);
    let chunks_of = |buf: &Option<AudioBuffer>| buf.as_ref().map_or(0, |b| whole_chunks(b, len));
    let plan = match a.mode {
        SpliceModeArg::Insert => SplicePlan::insert(n, a.at, a.count),
        SpliceModeArg::Remove => SplicePlan::remove(n, a.at, a.count),
        SpliceModeArg::Mute => SplicePlan::mute(n, a.at, a.count),
        SpliceModeArg::Mixed => SplicePlan::mixed(n, chunks_of(&other), chunks_of(&donor), a.length.unwrap_or(n), a.seed),
    }
    .map_err(|e| usage(format!("--mode {}: {e}", SpliceMode::from(a.mode).as_str())))?;
    let sources = Sources { a: &host, b: other.as_ref(), foreign: donor.as_ref() };
    let out = render(&plan, &sources, len).map_err(|e| usage(e.to_string()))?;
    save_wav(&a.out, &out)?;
    if let Some(path) = &a.plan_out {
        write_file(path, &serde_json::to_vec_pretty(&plan)?)?;
    }
    let tampered = plan.tampered().iter().filter(|&&t| t).count();
    println!("chunks {} (host {n}, foreign or silent {tampered})", plan.pieces.len());
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<()> {
    let policy = match &a.trust {
        Some(path) => AcceptPolicy::pinned(
            TrustStore::load(path).with_context(|| format!("loading trust store {}", path.display()))?,
        ),
        None => AcceptPolicy::default(),
    };
    let store = FileStore::open(&a.repo, policy).with_context(|| format!("opening repository {}", a.repo.display()))?;
    let handle = ServerHandle::spawn(&a.addr, Arc::new(store)).with_context(|| format!("binding {}", a.addr))?;
    println!("listening on {}", handle.url());
    std::io::stdout().flush()?;
    loop {
        std::thread::park();
    }
}

fn synth(a: &SynthArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (k, audio) in synth_corpus(a.files, a.seed).iter().enumerate() {
        save_wav(&a.out.join(format!("utt_{k:04}.wav")), audio)?;
    }
    println!("wrote {} files to {}", a.files, a.out.display());
    Ok(())
}

//! The `aoft` command line.
//!
//! Every subcommand writes its artifacts into a staging directory and moves
//! them into place only after it succeeds. Exit codes: 0 success, 1 invalid
//! input, 2 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use clap::{Args, Parser, Subcommand};

use crate::ao::{build_ortho, normalize_strict, orthonormality_error, GeneratorVector};
use crate::checkpoint::Checkpoint;
use crate::diagnostics::{angle_histogram, compare_runs, norm_report, rademacher_estimate, NormReport, NormRow};
use crate::error::{invalid, AoftError, Result};
use crate::experiment::RunConfig;
use crate::gradcheck::grad_check;
use crate::linalg::{load_mtx1, save_mtx1, Vector};
use crate::peft::{Method, GENERATOR_INIT_STD};
use crate::seed::{self, normal_vec};
use crate::trainer::{metrics_csv, sweep, sweep_csv, SweepGrid};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

/// Environment variable naming the base output directory.
pub const OUT_DIR_ENV: &str = "AOFT_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "aoft", version, about = "Approximately orthogonal fine-tuning toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an AO factor from a seeded generator vector
    GenOrtho(GenOrthoArgs),
    /// Compare analytic generator gradients with central finite differences
    GradCheck(GradCheckArgs),
    /// Histogram the pairwise column angles of an MTX1 matrix
    AnalyzeAngles(AnalyzeAnglesArgs),
    /// Report spectral and Frobenius norms of a checkpoint's matrices
    AnalyzeNorms(AnalyzeNormsArgs),
    /// Monte-Carlo Rademacher complexity estimate
    Rademacher(RademacherArgs),
    /// Pre-train the toy ViT on synthetic task A
    Pretrain(PretrainArgs),
    /// Fine-tune a pre-trained checkpoint on synthetic task B
    Finetune(FinetuneArgs),
    /// Fine-tune over a hyper-parameter grid preset
    Sweep(SweepArgs),
    /// Compare two norm reports row by row
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory [default: $AOFT_OUT_DIR or ./out, then <subcommand>/<timestamp>]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenOrthoArgs {
    /// Generator length N
    #[arg(long)]
    pub n: usize,
    /// Number of columns d to keep
    #[arg(long)]
    pub d: usize,
    /// Root seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Rescale the generator to unit norm
    #[arg(long)]
    pub strict: bool,
    /// Standard deviation of the noise added to e0
    #[arg(long, default_value_t = GENERATOR_INIT_STD)]
    pub noise: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    /// Generator length N
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// Number of columns d
    #[arg(long, default_value_t = 4)]
    pub d: usize,
    /// Number of random draws
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    /// Root seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest acceptable relative error
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct AnalyzeAnglesArgs {
    /// MTX1 matrix whose columns are compared
    pub matrix: PathBuf,
    /// Histogram bin width in degrees
    #[arg(long, default_value_t = 1.0)]
    pub bin_width: f64,
    /// Label stored with the histogram [default: file name]
    #[arg(long)]
    pub label: Option<String>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct AnalyzeNormsArgs {
    /// Checkpoint directory (backbone or adapter)
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct RademacherArgs {
    /// Number of samples m
    #[arg(long)]
    pub m: usize,
    /// Norm bound gamma
    #[arg(long)]
    pub gamma: f64,
    /// Monte-Carlo trials
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Root seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dimension of the generated samples
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    /// MTX1 matrix whose first m rows are the samples [default: seeded Gaussian samples]
    #[arg(long, value_name = "MTX1")]
    pub samples: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML run configuration (overrides on the built-in desk setup)
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Root seed for model, data and training streams
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct MethodArgs {
    /// linear-probe, full, lora, lora-aoft, adapter, adapter-aoft, vpt or vpt-aoft
    #[arg(long)]
    pub method: Option<Method>,
    /// Bottleneck dimension (prompt count for VPT)
    #[arg(long)]
    pub d: Option<usize>,
    /// Add the per-column scaling vector (AOFT*)
    #[arg(long)]
    pub aoft_star: bool,
    /// Multiply the delta by a trainable scalar initialized to 0
    #[arg(long)]
    pub zero_gate: bool,
    /// Drop the adapter residual connection
    #[arg(long)]
    pub no_residual: bool,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Pre-trained checkpoint directory
    #[arg(long, value_name = "DIR")]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub method: MethodArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Pre-trained checkpoint directory
    #[arg(long, value_name = "DIR")]
    pub checkpoint: PathBuf,
    /// Grid axis to vary: lr, wd, dropout, batch or full
    #[arg(long, default_value = "lr")]
    pub preset: String,
    #[command(flatten)]
    pub method: MethodArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Baseline: checkpoint directory or norms CSV
    pub baseline: PathBuf,
    /// Candidate: checkpoint directory or norms CSV
    pub candidate: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenOrtho(_) => "gen-ortho",
            Command::GradCheck(_) => "grad-check",
            Command::AnalyzeAngles(_) => "analyze-angles",
            Command::AnalyzeNorms(_) => "analyze-norms",
            Command::Rademacher(_) => "rademacher",
            Command::Pretrain(_) => "pretrain",
            Command::Finetune(_) => "finetune",
            Command::Sweep(_) => "sweep",
            Command::Report(_) => "report",
        }
    }

    fn out(&self) -> Option<&Path> {
        let o = match self {
            Command::GenOrtho(a) => &a.out,
            Command::GradCheck(a) => &a.out,
            Command::AnalyzeAngles(a) => &a.out,
            Command::AnalyzeNorms(a) => &a.out,
            Command::Rademacher(a) => &a.out,
            Command::Pretrain(a) => &a.out,
            Command::Finetune(a) => &a.out,
            Command::Sweep(a) => &a.out,
            Command::Report(a) => &a.out,
        };
        o.out.as_deref()
    }
}

/// `--out`, else `$AOFT_OUT_DIR/<subcommand>/<timestamp>`, else `./out/...`.
pub fn output_dir(explicit: Option<&Path>, subcommand: &str) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    let base = std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"));
    let stamp = humantime::format_rfc3339_seconds(SystemTime::now())
        .to_string()
        .replace(':', "-");
    base.join(subcommand).join(stamp)
}

/// A scratch directory whose files move into `dest` on [`Staging::commit`]
/// and vanish otherwise.
struct Staging {
    tmp: PathBuf,
    dest: PathBuf,
    committed: bool,
}

impl Staging {
    fn new(dest: PathBuf) -> Result<Self> {
        let parent = dest
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&parent)?;
        let nanos = SystemTime::now()
            .duration_since(SystemTime::UNIX_EPOCH)
            .map_or(0, |d| d.as_nanos());
        let name = dest.file_name().map_or_else(|| "out".into(), |n| n.to_string_lossy().into_owned());
        let tmp = parent.join(format!(".{name}.staging-{}-{nanos}", std::process::id()));
        fs::create_dir_all(&tmp)?;
        Ok(Self {
            tmp,
            dest,
            committed: false,
        })
    }

    fn path(&self, file: &str) -> PathBuf {
        self.tmp.join(file)
    }

    fn write(&self, file: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        fs::write(self.path(file), contents)?;
        Ok(())
    }

    fn commit(mut self) -> Result<PathBuf> {
        fs::create_dir_all(&self.dest)?;
        for entry in fs::read_dir(&self.tmp)? {
            let entry = entry?;
            let target = self.dest.join(entry.file_name());
            if target.is_dir() {
                fs::remove_dir_all(&target)?;
            }
            fs::rename(entry.path(), target)?;
        }
        fs::remove_dir(&self.tmp)?;
        self.committed = true;
        Ok(self.dest.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.committed {
            let _ = fs::remove_dir_all(&self.tmp);
        }
    }
}

fn must_exist(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(invalid(format!("{} does not exist", path.display())))
    }
}

fn exit_code(e: &AoftError) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INVALID
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{text}");
                    EXIT_INVALID
                }
            };
        }
    };
    match execute(&cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cmd: &Command, out: &mut dyn Write) -> Result<i32> {
    let dest = output_dir(cmd.out(), cmd.name());
    let stage = Staging::new(dest)?;
    let mut code = EXIT_OK;
    match cmd {
        Command::GenOrtho(a) => gen_ortho(a, &stage, out)?,
        Command::GradCheck(a) => code = grad_check_cmd(a, &stage, out)?,
        Command::AnalyzeAngles(a) => analyze_angles(a, &stage, out)?,
        Command::AnalyzeNorms(a) => {
            let report = norm_report(&Checkpoint::load(must_exist(&a.checkpoint)?)?)?;
            stage.write("norms.csv", report.to_csv())?;
            stage.write("norms.json", serde_json::to_string_pretty(&report)? + "\n")?;
            writeln!(out, "rows {}", report.rows.len())?;
        }
        Command::Rademacher(a) => rademacher_cmd(a, &stage, out)?,
        Command::Pretrain(a) => pretrain_cmd(a, &stage, out)?,
        Command::Finetune(a) => finetune_cmd(a, &stage, out)?,
        Command::Sweep(a) => sweep_cmd(a, &stage, out)?,
        Command::Report(a) => {
            let cmp = compare_runs(&load_report(&a.baseline)?, &load_report(&a.candidate)?)?;
            stage.write("comparison.json", serde_json::to_string_pretty(&cmp)? + "\n")?;
            writeln!(out, "{}", cmp.verdict)?;
        }
    }
    if code == EXIT_OK {
        let dir = stage.commit()?;
        writeln!(out, "wrote {}", dir.display())?;
    }
    Ok(code)
}

fn gen_ortho(a: &GenOrthoArgs, stage: &Staging, out: &mut dyn Write) -> Result<()> {
    if a.n == 0 {
        return Err(invalid("--n must be positive"));
    }
    if !(a.noise.is_finite() && a.noise >= 0.0) {
        return Err(invalid("--noise must be finite and non-negative"));
    }
    let mut rng = seed::rng(a.seed, "gen-ortho");
    let mut q = normal_vec(&mut rng, a.n, a.noise);
    q[0] += 1.0;
    let mut g = GeneratorVector::new(q)?;
    if a.strict {
        g = normalize_strict(&g)?;
    }
    let f = build_ortho(&g, a.d)?;
    save_mtx1(stage.path("factor.mtx"), f.factor())?;
    stage.write("factor.json", serde_json::to_string_pretty(&f.sidecar())? + "\n")?;
    writeln!(out, "deviation {:e}", f.deviation())?;
    writeln!(out, "orthonormality_error {:e}", orthonormality_error(f.factor()))?;
    writeln!(out, "source_norm {}", f.source_norm())?;
    Ok(())
}

fn grad_check_cmd(a: &GradCheckArgs, stage: &Staging, out: &mut dyn Write) -> Result<i32> {
    let report = grad_check(a.n, a.d, a.trials, a.seed)?;
    writeln!(out, "max_rel_err {:e}", report.max_rel_err)?;
    if report.max_rel_err > a.tol {
        writeln!(out, "FAIL: exceeds tolerance {:e}", a.tol)?;
        return Ok(EXIT_NUMERICAL);
    }
    stage.write("grad_check.json", serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(EXIT_OK)
}

fn analyze_angles(a: &AnalyzeAnglesArgs, stage: &Staging, out: &mut dyn Write) -> Result<()> {
    let m = load_mtx1(must_exist(&a.matrix)?)?;
    let label = a
        .label
        .clone()
        .unwrap_or_else(|| a.matrix.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()));
    let h = angle_histogram(&m, a.bin_width)?.with_label(label);
    stage.write("histogram.csv", h.to_csv())?;
    stage.write("histogram.json", serde_json::to_string_pretty(&h)? + "\n")?;
    writeln!(out, "pairs {} mean {} std {}", h.pairs, h.mean, h.std)?;
    Ok(())
}

fn rademacher_cmd(a: &RademacherArgs, stage: &Staging, out: &mut dyn Write) -> Result<()> {
    if a.m == 0 {
        return Err(invalid("--m must be positive"));
    }
    let xs: Vec<Vector> = match &a.samples {
        Some(path) => {
            let m = load_mtx1(must_exist(path)?)?;
            if m.rows() < a.m {
                return Err(invalid(format!("{} holds {} rows, --m is {}", path.display(), m.rows(), a.m)));
            }
            (0..a.m).map(|i| Vector::from(m.row(i).to_vec())).collect()
        }
        None => {
            if a.dim == 0 {
                return Err(invalid("--dim must be positive"));
            }
            let mut rng = seed::rng(a.seed, "rademacher/samples");
            (0..a.m).map(|_| Vector::from(normal_vec(&mut rng, a.dim, 1.0))).collect()
        }
    };
    let e = rademacher_estimate(&xs, a.gamma, a.trials, a.seed)?;
    stage.write("rademacher.json", serde_json::to_string_pretty(&e)? + "\n")?;
    writeln!(out, "estimate {} std_error {}", e.estimate, e.std_error)?;
    Ok(())
}

fn run_config(run: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &run.config {
        Some(p) => RunConfig::from_toml(&fs::read_to_string(must_exist(p)?)?)?,
        None => RunConfig::default(),
    };
    if let Some(s) = run.seed {
        cfg.model.seed = s;
        cfg.data.seed = s;
        cfg.pretrain.seed = s;
        cfg.finetune.seed = s;
    }
    Ok(cfg)
}

fn apply_train_overrides(cfg: &mut crate::trainer::TrainConfig, run: &RunArgs) {
    if let Some(e) = run.epochs {
        cfg.epochs = e;
        cfg.warmup_epochs = cfg.warmup_epochs.min(e);
    }
    if let Some(lr) = run.lr {
        cfg.lr = lr;
    }
}

fn pretrain_cmd(a: &PretrainArgs, stage: &Staging, out: &mut dyn Write) -> Result<()> {
    let mut cfg = run_config(&a.run)?;
    apply_train_overrides(&mut cfg.pretrain, &a.run);
    cfg.validate()?;
    let data = cfg.datasets()?;
    let r = cfg.pretrain(&data)?;
    r.checkpoint.save(stage.path("checkpoint"))?;
    stage.write("metrics.csv", metrics_csv(&r.metrics))?;
    stage.write("config.toml", cfg.to_toml())?;
    let summary = serde_json::json!({
        "final_loss": r.final_loss,
        "train_accuracy": r.train_accuracy,
        "metadata": { "wall_time_s": r.metrics.iter().map(|m| m.wall_time_s).collect::<Vec<_>>() },
    });
    stage.write("summary.json", serde_json::to_string_pretty(&summary)? + "\n")?;
    writeln!(out, "train_accuracy {} final_loss {}", r.train_accuracy, r.final_loss)?;
    Ok(())
}

fn finetune_setup(m: &MethodArgs, run: &RunArgs) -> Result<RunConfig> {
    let mut cfg = run_config(run)?;
    let peft = &mut cfg.finetune.peft;
    if let Some(method) = m.method {
        peft.method = method;
    }
    if let Some(d) = m.d {
        peft.d = d;
    }
    peft.aoft_star |= m.aoft_star;
    peft.zero_gate |= m.zero_gate;
    if m.no_residual {
        peft.residual = false;
    }
    apply_train_overrides(&mut cfg.finetune, run);
    if let Some(lr) = run.lr {
        cfg.full_lr = lr;
    }
    Ok(cfg)
}

fn load_backbone(path: &Path, cfg: &mut RunConfig) -> Result<Checkpoint> {
    let ck = Checkpoint::load(must_exist(path)?)?;
    if ck.kind != crate::checkpoint::CheckpointKind::Backbone {
        return Err(invalid(format!("{} is not a backbone checkpoint", path.display())));
    }
    cfg.model = ck.model.clone();
    cfg.validate()?;
    Ok(ck)
}

fn finetune_cmd(a: &FinetuneArgs, stage: &Staging, out: &mut dyn Write) -> Result<()> {
    let mut cfg = finetune_setup(&a.method, &a.run)?;
    let backbone = load_backbone(&a.checkpoint, &mut cfg)?;
    let data = cfg.datasets()?;
    let method = cfg.finetune.peft.method;
    let r = cfg.finetune(&backbone, method, &data)?;
    r.adapters.save(stage.path("adapter"))?;
    stage.write("metrics.csv", metrics_csv(&r.metrics))?;
    stage.write("summary.json", serde_json::to_string_pretty(&r.summary())? + "\n")?;
    stage.write("config.toml", cfg.to_toml())?;
    writeln!(
        out,
        "{} eval_accuracy {} trainable {} frozen_checksum {}",
        method,
        r.final_eval_accuracy(),
        r.budget.trainable_count,
        r.frozen_checksum
    )?;
    Ok(())
}

fn sweep_cmd(a: &SweepArgs, stage: &Staging, out: &mut dyn Write) -> Result<()> {
    let mut cfg = finetune_setup(&a.method, &a.run)?;
    let backbone = load_backbone(&a.checkpoint, &mut cfg)?;
    let data = cfg.datasets()?;
    let base = cfg.finetune_config(cfg.finetune.peft.method);
    let grid = SweepGrid::preset(&a.preset, &base)?;
    let rows = sweep(&backbone, &base, &grid, &data.b_train, &data.b_eval)?;
    stage.write("sweep.csv", sweep_csv(&rows))?;
    let best = rows
        .iter()
        .filter_map(|r| r.final_eval_accuracy.map(|acc| (acc, r)))
        .fold(None::<(f64, &crate::trainer::SweepRow)>, |b, (acc, r)| match b {
            Some((ba, _)) if ba >= acc => b,
            _ => Some((acc, r)),
        });
    match best {
        Some((acc, r)) => writeln!(
            out,
            "best eval_accuracy {acc} at lr {} weight_decay {} dropout {} batch_size {}",
            r.lr, r.weight_decay, r.dropout, r.batch_size
        )?,
        None => writeln!(out, "every grid point failed")?,
    }
    Ok(())
}

/// A norm report from a checkpoint directory or a `norms.csv` file.
fn load_report(path: &Path) -> Result<NormReport> {
    must_exist(path)?;
    if path.is_dir() {
        return norm_report(&Checkpoint::load(path)?);
    }
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("layer,name,spectral,frobenius") {
        return Err(AoftError::Format(format!("{} is not a norms CSV", path.display())));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let bad = || AoftError::Format(format!("{}: malformed row {}", path.display(), i + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad());
        }
        rows.push(NormRow {
            layer: if f[0].is_empty() { None } else { Some(f[0].parse().map_err(|_| bad())?) },
            name: f[1].to_string(),
            spectral: f[2].parse().map_err(|_| bad())?,
            frobenius: f[3].parse().map_err(|_| bad())?,
        });
    }
    Ok(NormReport {
        label: path.with_extension("").display().to_string(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("aoft").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn unknown_flag_is_a_validation_error() {
        let (code, _, err) = run_capture(&["gen-ortho", "--n", "4", "--d", "2", "--bogus"]);
        assert_eq!(code, EXIT_INVALID);
        assert!(err.contains("--bogus"));
        assert_eq!(run_capture(&[]).0, EXIT_INVALID);
    }

    #[test]
    fn help_exits_cleanly() {
        let (code, out, _) = run_capture(&["--help"]);
        assert_eq!(code, EXIT_OK);
        for sub in ["gen-ortho", "grad-check", "analyze-angles", "analyze-norms", "rademacher", "pretrain", "finetune", "sweep", "report"] {
            assert!(out.contains(sub), "{sub}");
        }
    }

    #[test]
    fn failed_command_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let dest = dir.path().join("o");
        let (code, _, _) = run_capture(&["gen-ortho", "--n", "4", "--d", "9", "--out", dest.to_str().unwrap()]);
        assert_eq!(code, EXIT_INVALID);
        assert!(!dest.exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn gen_ortho_strict() {
        let dir = tempfile::tempdir().unwrap();
        let dest = dir.path().join("g");
        let (code, out, _) = run_capture(&["gen-ortho", "--n", "4", "--d", "4", "--strict", "--seed", "7", "--out", dest.to_str().unwrap()]);
        assert_eq!(code, EXIT_OK);
        let dev: f64 = out.lines().next().unwrap().strip_prefix("deviation ").unwrap().parse().unwrap();
        assert!(dev < 1e-10);
        assert!(dest.join("factor.mtx").exists() && dest.join("factor.json").exists());
    }

    #[test]
    fn default_dir_uses_env_base() {
        let p = output_dir(None, "report");
        assert!(p.to_string_lossy().contains("report"));
        assert_eq!(output_dir(Some(Path::new("x/y")), "report"), PathBuf::from("x/y"));
    }
}

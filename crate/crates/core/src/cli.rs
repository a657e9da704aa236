//! Command-line front end. `run` returns the process exit code:
//! 0 on success, 1 on a runtime failure, 2 on bad arguments or preconditions.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analytic::{lawler_lpp, BetaConvention, KappaParams};
use crate::experiment::{
    convergence_sweep, estimate_lpp_field, manifest_hash, snap_points, sweep_csv, write_field_outputs,
    write_sample_outputs, write_timing, OutputFormat, QueryPoint, DEFAULT_SWEEP_POINT,
};
use crate::explorer::{run_explorer, ExplorerConfig, Variation};
use crate::lattice::{DomainConfig, Termination};
use crate::validation::{run_validation_suite, Level, Mutation};
use crate::walk::WalkScheme;
use crate::Error;

pub const OUT_ENV: &str = "LPMODEL_OUT";

#[derive(Debug, Parser)]
#[command(name = "lpmodel", version, about = "Generalized harmonic explorer and left-passage estimates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the analytic left-passage formulas on a θ grid.
    Analytic(AnalyticArgs),
    /// Grow one path and write it out.
    Sample(SampleArgs),
    /// Estimate left-passage probabilities at query points.
    Field(FieldArgs),
    /// Estimate at fixed points across κ and domain sizes.
    Sweep(SweepArgs),
    /// Run the built-in validation checks.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ConventionArg {
    Paper,
    Matched,
}

impl From<ConventionArg> for BetaConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Paper => BetaConvention::Paper,
            ConventionArg::Matched => BetaConvention::Matched,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    Csaki,
    Asymptotic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariationArg {
    V1,
    V2,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LevelArg {
    Fast,
    Full,
}

/// κ as a decimal or a fraction such as `8/3`, restricted to (0, 8).
pub fn parse_kappa(s: &str) -> Result<f64, String> {
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|e| format!("bad numerator: {e}"))?;
            let b: f64 = b.trim().parse().map_err(|e| format!("bad denominator: {e}"))?;
            if b == 0.0 {
                return Err("zero denominator".into());
            }
            a / b
        }
        None => s.trim().parse().map_err(|e| format!("{e}"))?,
    };
    if v > 0.0 && v < 8.0 {
        Ok(v)
    } else {
        Err(format!("kappa must lie in (0, 8), got {v}"))
    }
}

fn parse_point(s: &str) -> Result<QueryPoint, String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let x: f64 = x.trim().parse().map_err(|e| format!("bad x: {e}"))?;
    let y: f64 = y.trim().parse().map_err(|e| format!("bad y: {e}"))?;
    if !x.is_finite() || !y.is_finite() {
        return Err("coordinates must be finite".into());
    }
    Ok(QueryPoint::new(x, y))
}

fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s.split_once('x').ok_or("expected WxH")?;
    let w: u32 = w.trim().parse().map_err(|e| format!("bad width: {e}"))?;
    let h: u32 = h.trim().parse().map_err(|e| format!("bad height: {e}"))?;
    Ok((w, h))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    /// Points start, start+step, … up to and including stop (to rounding).
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [a, b, c] = parts.as_slice() else {
        return Err("expected start:stop:step".into());
    };
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{e}"));
    let g = Grid {
        start: num(a)?,
        stop: num(b)?,
        step: num(c)?,
    };
    if !(g.start > 0.0 && g.stop < std::f64::consts::PI && g.start <= g.stop && g.step > 0.0) {
        return Err("need 0 < start <= stop < π and step > 0".into());
    }
    Ok(g)
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output directory; nothing is written outside it.
    #[arg(long, env = OUT_ENV, default_value = "lpmodel-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyticArgs {
    #[arg(long, value_parser = parse_kappa)]
    pub kappa: f64,
    #[arg(long, value_enum, default_value = "matched")]
    pub beta_convention: ConventionArg,
    /// θ grid as start:stop:step, inclusive.
    #[arg(long, value_parser = parse_grid, default_value = "0.1:3.04:0.1")]
    pub grid: Grid,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, value_parser = parse_kappa, default_value = "4")]
    pub kappa: f64,
    #[arg(long, value_enum, default_value = "matched")]
    pub beta_convention: ConventionArg,
    /// Use this Bessel order instead of the one implied by κ.
    #[arg(long, alias = "nu")]
    pub nu_override: Option<f64>,
    #[arg(long, value_enum, default_value = "csaki")]
    pub scheme: SchemeArg,
    #[arg(long, default_value_t = 2)]
    pub p_floor_height: u32,
    #[arg(long, value_enum, default_value = "v1")]
    pub variation: VariationArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to 10·width·height.
    #[arg(long)]
    pub max_steps: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DomainArgs {
    #[arg(long, default_value_t = 40)]
    pub width: u32,
    #[arg(long, default_value_t = 20)]
    pub height: u32,
    /// Lattice spacing δ; defaults to 1/(height − 1).
    #[arg(long)]
    pub spacing: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub domain: DomainArgs,
    /// Also write path.svg.
    #[arg(long)]
    pub svg: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct FieldArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub domain: DomainArgs,
    /// Physical query point x,y (repeatable).
    #[arg(long = "point", value_parser = parse_point, allow_hyphen_values = true)]
    pub points: Vec<QueryPoint>,
    #[arg(long, default_value_t = 1000)]
    pub n_paths: u64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated κ values; overrides --kappa.
    #[arg(long, value_parser = parse_kappa, value_delimiter = ',')]
    pub kappas: Vec<f64>,
    /// Comma-separated WxH sizes in increasing order.
    #[arg(long, value_parser = parse_size, value_delimiter = ',', default_value = "10x5,20x10,40x20")]
    pub sizes: Vec<(u32, u32)>,
    #[arg(long = "point", value_parser = parse_point, allow_hyphen_values = true)]
    pub points: Vec<QueryPoint>,
    #[arg(long, default_value_t = 1000)]
    pub n_paths: u64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: FormatArg,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, value_enum, default_value = "fast")]
    pub level: LevelArg,
    /// Use −β in the residual check; the suite should then fail.
    #[arg(long)]
    pub flip_beta_sign: bool,
    #[arg(long, default_value_t = 20261016)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Errors split by exit code.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn usage(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }

    fn runtime(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CmdResult = std::result::Result<(), Failure>;

impl ModelArgs {
    fn config(&self, domain: DomainConfig) -> std::result::Result<ExplorerConfig, Failure> {
        let mut cfg = ExplorerConfig::new(self.kappa, self.beta_convention.into(), domain, self.seed)
            .map_err(Failure::usage)?;
        cfg.variation = match self.variation {
            VariationArg::V1 => Variation::V1,
            VariationArg::V2 => Variation::V2,
        };
        cfg.max_steps = self.max_steps;
        if let Some(nu) = self.nu_override {
            cfg.walk.nu = nu;
        }
        cfg.walk.scheme = match self.scheme {
            SchemeArg::Csaki => WalkScheme::Csaki,
            SchemeArg::Asymptotic => WalkScheme::Asymptotic,
        };
        cfg.walk.p_floor_height = self.p_floor_height;
        cfg.validate().map_err(Failure::usage)?;
        Ok(cfg)
    }

    fn pool(&self) -> std::result::Result<rayon::ThreadPool, Failure> {
        if self.threads == Some(0) {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads.unwrap_or(0))
            .build()
            .map_err(|e| Failure::Runtime(e.to_string()))
    }
}

impl DomainArgs {
    fn config(&self) -> std::result::Result<DomainConfig, Failure> {
        if self.height < 2 {
            return Err(Failure::Usage("--height must be at least 2".into()));
        }
        let spacing = self.spacing.unwrap_or(1.0 / (f64::from(self.height) - 1.0));
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Failure::Usage("--spacing must be positive".into()));
        }
        let d = DomainConfig::new(self.width, self.height, spacing);
        d.validate().map_err(Failure::usage)?;
        Ok(d)
    }
}

fn prepare_out(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &serde_json::Value) -> CmdResult {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Failure::Runtime(e.to_string()))
}

fn cmd_analytic(a: &AnalyticArgs) -> CmdResult {
    let params = KappaParams::new(a.kappa, a.beta_convention.into()).map_err(Failure::usage)?;
    let mut rows = Vec::new();
    for theta in a.grid.points() {
        let lawler = lawler_lpp(&params, theta).map_err(Failure::runtime)?;
        // Schramm's formula depends on the point only through θ.
        let (x, y) = (theta.cos(), theta.sin());
        let schramm = crate::analytic::schramm_lpp(&params, x, y).map_err(Failure::runtime)?;
        rows.push((theta, schramm, lawler, schramm - lawler));
    }
    prepare_out(&a.out.out)?;
    match a.format {
        FormatArg::Csv => {
            let mut s = String::from("theta,schramm,lawler,difference\n");
            for (t, sc, l, d) in &rows {
                let _ = writeln!(s, "{t},{sc},{l},{d}");
            }
            fs::write(a.out.out.join("analytic.csv"), s).map_err(|e| Failure::Runtime(e.to_string()))?;
        }
        FormatArg::Json => {
            let v: Vec<_> = rows
                .iter()
                .map(|(t, sc, l, d)| serde_json::json!({"theta": t, "schramm": sc, "lawler": l, "difference": d}))
                .collect();
            write_json(&a.out.out.join("analytic.json"), &serde_json::Value::Array(v))?;
        }
    }
    let max = rows.iter().map(|r| r.3.abs()).fold(0.0, f64::max);
    println!("{} angles, max |schramm − lawler| = {max:.3e}", rows.len());
    Ok(())
}

fn cmd_sample(a: &SampleArgs) -> CmdResult {
    let cfg = a.model.config(a.domain.config()?)?;
    let t = Instant::now();
    let run = run_explorer(&cfg).map_err(Failure::runtime)?;
    let wall = t.elapsed().as_secs_f64();
    prepare_out(&a.out.out)?;
    let hash = write_sample_outputs(&a.out.out, &run, a.svg).map_err(Failure::runtime)?;
    write_timing(&a.out.out, wall, 1).map_err(Failure::runtime)?;
    println!(
        "{} steps, termination {}, manifest {hash}",
        run.state.step_count(),
        run.termination.as_str()
    );
    if run.termination != Termination::ReachedVEnd {
        return Err(Failure::Runtime(format!(
            "path did not reach v_end: {}",
            run.termination.as_str()
        )));
    }
    Ok(())
}

fn cmd_field(a: &FieldArgs) -> CmdResult {
    let cfg = a.model.config(a.domain.config()?)?;
    if a.n_paths == 0 {
        return Err(Failure::Usage("--n-paths must be at least 1".into()));
    }
    let points = if a.points.is_empty() {
        let top = f64::from(cfg.domain.height - 1) * cfg.domain.spacing;
        vec![QueryPoint::new(0.0, 0.5 * top), QueryPoint::new(0.25 * top, 0.5 * top)]
    } else {
        a.points.clone()
    };
    snap_points(&cfg.domain, &points).map_err(Failure::usage)?;
    let pool = a.model.pool()?;
    let t = Instant::now();
    let run = pool
        .install(|| estimate_lpp_field(&cfg, &points, a.n_paths))
        .map_err(Failure::runtime)?;
    let wall = t.elapsed().as_secs_f64();
    prepare_out(&a.out.out)?;
    let hash = write_field_outputs(&a.out.out, &run, a.format.into()).map_err(Failure::runtime)?;
    write_timing(&a.out.out, wall, pool.current_num_threads()).map_err(Failure::runtime)?;
    for e in &run.estimates {
        println!(
            "({:.4}, {:.4}): h_hat = {:.4} ± {:.4}, analytic = {:.4}",
            e.x, e.y, e.h_hat, e.se, e.analytic
        );
    }
    println!("manifest {hash}");
    if run.tally.failed_count() > 0 {
        eprintln!("warning: {} paths did not reach v_end", run.tally.failed_count());
    }
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> CmdResult {
    let kappas = if a.kappas.is_empty() {
        vec![a.model.kappa]
    } else {
        a.kappas.clone()
    };
    if a.sizes.is_empty() {
        return Err(Failure::Usage("--sizes must not be empty".into()));
    }
    let points = if a.points.is_empty() {
        vec![QueryPoint::new(DEFAULT_SWEEP_POINT.0, DEFAULT_SWEEP_POINT.1)]
    } else {
        a.points.clone()
    };
    // Check every size up front so nothing runs on a bad request.
    for &(w, h) in &a.sizes {
        let d = DomainArgs {
            width: w,
            height: h,
            spacing: None,
        }
        .config()?;
        let cfg = a.model.config(d)?;
        snap_points(&cfg.domain, &points).map_err(Failure::usage)?;
    }
    if a.n_paths == 0 {
        return Err(Failure::Usage("--n-paths must be at least 1".into()));
    }
    let (w0, h0) = a.sizes[0];
    let base = a.model.config(DomainConfig::new(w0, h0, 1.0 / (f64::from(h0) - 1.0)))?;
    let pool = a.model.pool()?;
    let t = Instant::now();
    let rows = pool
        .install(|| convergence_sweep(&base, &kappas, &a.sizes, &points, a.n_paths))
        .map_err(|e| match e {
            Error::Config(_) => Failure::usage(e),
            e => Failure::runtime(e),
        })?;
    let wall = t.elapsed().as_secs_f64();
    let manifest = serde_json::json!({
        "kind": "sweep",
        "version": env!("CARGO_PKG_VERSION"),
        "base": base,
        "kappas": kappas,
        "sizes": a.sizes,
        "points": points,
        "n_paths": a.n_paths,
        "master_seed": base.seed,
    });
    let hash = manifest_hash(&manifest).map_err(Failure::runtime)?;
    prepare_out(&a.out.out)?;
    write_json(&a.out.out.join("manifest.json"), &manifest)?;
    match a.format {
        FormatArg::Csv => fs::write(a.out.out.join("sweep.csv"), sweep_csv(&rows, &hash))
            .map_err(|e| Failure::Runtime(e.to_string()))?,
        FormatArg::Json => write_json(
            &a.out.out.join("sweep.json"),
            &serde_json::json!({"manifest_hash": hash, "rows": rows}),
        )?,
    }
    write_timing(&a.out.out, wall, pool.current_num_threads()).map_err(Failure::runtime)?;
    for r in &rows {
        println!(
            "kappa {:.4} {}x{} ({:.3}, {:.3}): |h_hat − analytic| = {:.4} ± {:.4}",
            r.kappa, r.width, r.height, r.estimate.x, r.estimate.y, r.abs_difference, r.estimate.se
        );
    }
    Ok(())
}

fn cmd_validate(a: &ValidateArgs) -> CmdResult {
    let level = match a.level {
        LevelArg::Fast => Level::Fast,
        LevelArg::Full => Level::Full,
    };
    let mutation = Mutation {
        flip_beta_sign: a.flip_beta_sign,
    };
    let t = Instant::now();
    let report = run_validation_suite(level, mutation, a.seed);
    let wall = t.elapsed().as_secs_f64();
    for item in &report.items {
        println!("{}", item.line());
    }
    prepare_out(&a.out.out)?;
    let value = serde_json::to_value(&report).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_json(&a.out.out.join("validation.json"), &value)?;
    write_timing(&a.out.out, wall, rayon::current_num_threads()).map_err(Failure::runtime)?;
    if report.all_passed() {
        Ok(())
    } else {
        let n = report.items.iter().filter(|i| !i.passed).count();
        Err(Failure::Runtime(format!("{n} check(s) failed")))
    }
}

/// Parse `args` (including the program name) and execute.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Analytic(a) => cmd_analytic(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Field(a) => cmd_field(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            2
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_fraction() {
        assert!((parse_kappa("8/3").unwrap() - 8.0 / 3.0).abs() < 1e-15);
        assert!(parse_kappa("9").is_err());
        assert!(parse_kappa("0").is_err());
        assert!(parse_kappa("1/0").is_err());
    }

    #[test]
    fn grid_is_inclusive() {
        let g = parse_grid("0.1:3.04:0.1").unwrap();
        let p = g.points();
        assert_eq!(p.len(), 30);
        assert!((p[29] - 3.0).abs() < 1e-12);
        assert!(parse_grid("0:1:0.1").is_err());
    }

    #[test]
    fn sizes_and_points() {
        assert_eq!(parse_size("20x10").unwrap(), (20, 10));
        let p = parse_point("-0.25,0.5").unwrap();
        assert_eq!((p.x, p.y), (-0.25, 0.5));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["lpmodel", "analytic", "--kappa", "9"]), 2);
        assert_eq!(run(["lpmodel", "bogus"]), 2);
    }
}

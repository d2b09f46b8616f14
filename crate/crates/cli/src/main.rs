use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use embedlab::report::{self, FolnerConfig, GluingSpec, ModuliConfig, Suite, SuiteOptions};
use embedlab::Error;

const EXIT_VIOLATIONS: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "embedlab", version, about = "Quantitative embeddings: moduli estimation and certified bound checks")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// base seed for every random stream
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// output path (file, or directory for `report`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// worker threads; results do not depend on it
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON config file; flags take precedence over its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate compression and expansion moduli of a glued embedding
    Moduli(ModuliArgs),
    /// Run a certified verification suite
    Verify(VerifyArgs),
    /// Hamming cube distortion and type-2 certificate
    Cube(CubeArgs),
    /// Probe embedding of the k-subset space
    Gk(GkArgs),
    /// Følner sets, property A and the glued group embedding
    Folner(FolnerArgs),
    /// Comparison table from a directory of moduli run summaries
    Report(ReportArgs),
}

#[derive(Args, Serialize)]
struct ModuliArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    schedule: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    nu: Option<f64>,
    #[arg(long, value_parser = ["kernel", "exp", "rff"])]
    #[serde(skip_serializing_if = "Option::is_none")]
    backend: Option<String>,
    #[arg(long = "rff-dim")]
    #[serde(rename = "features", skip_serializing_if = "Option::is_none")]
    rff_dim: Option<usize>,
    #[arg(long = "exp-degree")]
    #[serde(rename = "degree", skip_serializing_if = "Option::is_none")]
    exp_degree: Option<usize>,
    #[arg(long = "ambient-dim")]
    #[serde(skip_serializing_if = "Option::is_none")]
    ambient_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    terms: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pairs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    bins: Option<usize>,
    #[arg(long = "t-min")]
    #[serde(skip_serializing_if = "Option::is_none")]
    t_min: Option<f64>,
    #[arg(long = "t-max")]
    #[serde(skip_serializing_if = "Option::is_none")]
    t_max: Option<f64>,
    #[arg(long = "points-per-line")]
    #[serde(skip_serializing_if = "Option::is_none")]
    points_per_line: Option<usize>,
    /// fit range as LO,HI
    #[arg(long = "fit-range", value_delimiter = ',', num_args = 1..=2)]
    #[serde(skip_serializing_if = "Option::is_none")]
    fit_range: Option<Vec<f64>>,
}

#[derive(Args, Serialize)]
struct VerifyArgs {
    #[arg(long, value_parser = ["mazur", "kernel", "gluing", "folner", "cube", "gk"])]
    #[serde(skip)]
    suite: String,
    /// scales every sample count of the suite
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    scale: Option<f64>,
    /// gluing suite: check one schedule instead of the presets
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    schedule: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    nu: Option<f64>,
    #[arg(long, value_parser = ["kernel", "rff"])]
    #[serde(skip_serializing_if = "Option::is_none")]
    backend: Option<String>,
    #[arg(long = "rff-dim")]
    #[serde(rename = "features", skip_serializing_if = "Option::is_none")]
    rff_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    terms: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pairs: Option<usize>,
    #[arg(long = "t-min")]
    #[serde(skip_serializing_if = "Option::is_none")]
    t_min: Option<f64>,
    #[arg(long = "t-max")]
    #[serde(skip_serializing_if = "Option::is_none")]
    t_max: Option<f64>,
}

#[derive(Args, Serialize)]
struct CubeArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<u32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[arg(long = "target-type")]
    #[serde(skip_serializing_if = "Option::is_none")]
    target_type: Option<f64>,
}

#[derive(Args, Serialize)]
struct GkArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    ground: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
}

#[derive(Args, Serialize)]
struct FolnerArgs {
    #[arg(long, value_parser = ["z1", "z2", "z3", "heis", "tree"])]
    #[serde(skip_serializing_if = "Option::is_none")]
    group: Option<String>,
    #[arg(long = "n-max")]
    #[serde(skip_serializing_if = "Option::is_none")]
    n_max: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pairs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    bins: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// directory of moduli run summaries (*.json)
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    tolerance: f64,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

/// Defaults, then config file values, then flags.
fn merge<T: Serialize + DeserializeOwned>(base: T, file: Option<&Value>, flags: &impl Serialize, seed: Option<u64>) -> Result<T, Failure> {
    let mut v = serde_json::to_value(base).expect("serializable config");
    let obj = v.as_object_mut().expect("config is an object");
    let mut overlay = |src: &Value| {
        if let Some(o) = src.as_object() {
            for (k, x) in o {
                obj.insert(k.clone(), x.clone());
            }
        }
    };
    if let Some(f) = file {
        overlay(f);
    }
    let mut fl = serde_json::to_value(flags).expect("serializable flags");
    if let Some(s) = seed {
        fl["seed"] = json!(s);
    }
    overlay(&fl);
    serde_json::from_value(v).map_err(|e| Failure::Usage(format!("invalid configuration: {e}")))
}

fn read_config(path: &Option<PathBuf>) -> Result<Option<Value>, Failure> {
    let Some(p) = path else { return Ok(None) };
    let text = fs::read_to_string(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
    if !v.is_object() {
        return Err(Failure::Usage(format!("{}: expected a JSON object", p.display())));
    }
    Ok(Some(v))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable report");
    s.push('\n');
    s
}

/// Writes JSON to `out`, or prints it.
fn emit(out: &Option<PathBuf>, v: &impl Serialize) -> Result<(), Failure> {
    match out {
        Some(p) => write(p, &pretty(v)),
        None => {
            print!("{}", pretty(v));
            Ok(())
        }
    }
}

fn outcome(violations: usize) -> u8 {
    if violations == 0 {
        0
    } else {
        EXIT_VIOLATIONS
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let file = read_config(&cli.global.config)?;
    let section = |name: &str| file.as_ref().map(|f| f.get(name).cloned().unwrap_or_else(|| f.clone()));
    let g = &cli.global;
    match &cli.command {
        Command::Moduli(a) => {
            let cfg: ModuliConfig = merge(ModuliConfig::default(), section("moduli").as_ref(), a, g.seed)?;
            let run = report::run_moduli(&cfg)?;
            let csv_path = g.out.clone().unwrap_or_else(|| PathBuf::from("moduli.csv"));
            write(&csv_path, &run.estimate.to_csv())?;
            let summary = run.summary_json();
            write(&csv_path.with_extension("json"), &pretty(&summary))?;
            for f in &run.fits {
                println!("{:?} slope {:.4} over [{}, {}] ({} bins)", f.fit.envelope, f.fit.slope, f.fit.range.0, f.fit.range.1, f.fit.bins);
            }
            println!("violations {}", run.violations());
            Ok(outcome(run.violations()))
        }
        Command::Verify(a) => {
            let suite: Suite = a.suite.parse()?;
            let mut flags = serde_json::to_value(a).expect("serializable flags");
            let gluing_flags = flags.as_object_mut().expect("flags are an object");
            let mut top = serde_json::Map::new();
            if let Some(scale) = gluing_flags.remove("scale") {
                top.insert("scale".into(), scale);
            }
            let mut opts: SuiteOptions = merge(SuiteOptions::default(), section("verify").as_ref(), &top, g.seed)?;
            if !gluing_flags.is_empty() && suite != Suite::Gluing {
                return Err(Failure::Usage("schedule flags apply to --suite gluing only".into()));
            }
            if suite == Suite::Gluing && (!gluing_flags.is_empty() || opts.gluing.is_some()) {
                let spec: GluingSpec = merge(opts.gluing.take().unwrap_or_default(), None, &*gluing_flags, None)?;
                opts.gluing = Some(spec);
            }
            let rep = report::run_suite(suite, &opts)?;
            emit(&g.out, &rep)?;
            eprintln!("{:?}: violations {} controls {}", rep.suite, rep.violations, if rep.controls_fired { "fired" } else { "silent" });
            Ok(if rep.passed { 0 } else { EXIT_VIOLATIONS })
        }
        Command::Cube(a) => {
            let c: Value = merge(json!({"m": 8, "p": 1.0, "target_type": 2.0}), section("cube").as_ref(), a, None)?;
            let num = |k: &str| c[k].as_f64().ok_or_else(|| Failure::Usage(format!("cube: {k} must be a number")));
            let rep = report::cube_report(num("m")? as u32, num("p")?, num("target_type")?)?;
            emit(&g.out, &rep)?;
            Ok(outcome(((rep.certificate_ratio - 1.0).abs() > 1e-12) as usize))
        }
        Command::Gk(a) => {
            let c: Value = merge(json!({"k": 4, "ground": 12, "p": 1.0}), section("gk").as_ref(), a, None)?;
            let num = |k: &str| c[k].as_f64().ok_or_else(|| Failure::Usage(format!("gk: {k} must be a number")));
            let rep = report::gk_report(num("k")? as usize, num("ground")? as usize, num("p")?)?;
            emit(&g.out, &rep)?;
            Ok(outcome(rep.audit.violations))
        }
        Command::Folner(a) => {
            let cfg: FolnerConfig = merge(FolnerConfig::default(), section("folner").as_ref(), a, g.seed)?;
            let run = report::run_folner(&cfg)?;
            let csv_path = g.out.clone().unwrap_or_else(|| PathBuf::from("folner.csv"));
            write(&csv_path, &run.to_csv())?;
            write(&csv_path.with_extension("json"), &pretty(&run))?;
            println!("{:?}: blocks {} violations {} rho unbounded {}", cfg.group, run.blocks.len(), run.violations, run.rho_unbounded);
            Ok(outcome(run.violations))
        }
        Command::Report(a) => {
            let runs = report::load_runs(&a.dir).map_err(|e| Failure::Io(e.to_string()))?;
            let table = report::comparison_table(&runs, a.tolerance);
            let dir = g.out.clone().unwrap_or_else(|| a.dir.clone());
            write(&dir.join("comparison_table.json"), &pretty(&table))?;
            let text = table.render();
            write(&dir.join("comparison_table.txt"), &text)?;
            print!("{text}");
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_IO)
        }
    }
}

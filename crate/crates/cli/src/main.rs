use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sf_core::corpus::{self, SystemDefinition};
use sf_core::dynamics::{assign_point, concretize, conservation_report, integrate, Method};
use sf_core::expr::ZeroConfig;
use sf_core::report::{Report, SystemReport};
use sf_core::suite::{run_corpus, Check, SuiteConfig};

macro_rules! out {
    ($($arg:tt)*) => {
        writeln!(std::io::stdout(), $($arg)*)?
    };
}

#[derive(Parser)]
#[command(
    name = "sf",
    version,
    about = "Verify Stäckel-lifted Hamiltonian systems and their Haantjes operators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the builtin corpus
    List,
    /// Print a system definition and its generated Hamiltonians
    Show {
        /// Builtin name or path to a definition file
        target: String,
        /// Print the definition as TOML instead
        #[arg(long)]
        toml: bool,
    },
    /// Run the verification suite
    Verify(VerifyArgs),
    /// Integrate one Hamiltonian flow of a concretized system
    Integrate(IntegrateArgs),
    /// Summarize or merge JSON reports
    Report {
        /// Report files
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Merge the reports into one
        #[arg(long)]
        merge: bool,
        /// Write the merged report here instead of stdout
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Args)]
struct VerifyArgs {
    /// Builtin names, definition files, or `all`
    #[arg(default_value = "all")]
    targets: Vec<String>,
    /// Comma-separated subset of checks
    #[arg(long, value_delimiter = ',')]
    checks: Option<Vec<Check>>,
    /// Random trials per zero test
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Floating-point tolerance for non-rational identities
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report to this file
    #[arg(long)]
    json: Option<PathBuf>,
    /// Print every entry, not just failures
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Args)]
struct IntegrateArgs {
    target: String,
    /// 1-based index of the Hamiltonian whose flow is followed
    #[arg(long)]
    hamiltonian: Option<usize>,
    /// Initial condition overrides, e.g. "x1 = 0.1, p1 = -2"
    #[arg(long)]
    ic: Option<String>,
    /// Final time
    #[arg(long = "T")]
    duration: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// rk4 or stormer-verlet
    #[arg(long)]
    method: Option<Method>,
    /// Write the trajectory as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_workers() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if closed_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn closed_pipe(e: &anyhow::Error) -> bool {
    e.downcast_ref::<std::io::Error>()
        .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
}

fn configure_workers() -> Result<()> {
    let Ok(value) = std::env::var("SF_WORKERS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .with_context(|| format!("SF_WORKERS must be a positive integer, got `{value}`"))?;
    if n == 0 {
        bail!("SF_WORKERS must be at least 1");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn run(command: Command) -> Result<bool> {
    match command {
        Command::List => {
            for def in corpus::builtins() {
                out!("{:26} {}", def.name, def.description);
            }
            Ok(true)
        }
        Command::Show { target, toml } => show(&target, toml),
        Command::Verify(args) => verify(args),
        Command::Integrate(args) => integrate_cmd(args),
        Command::Report { files, merge, json } => report(files, merge, json),
    }
}

fn show(target: &str, toml: bool) -> Result<bool> {
    let def = corpus::resolve(target)?;
    if toml {
        print!("{}", def.to_toml());
        return Ok(true);
    }
    let sys = def.compile()?;
    out!("{}: {}", def.name, def.description);
    out!("chart    {}", sys.chart());
    out!("matrix   {} shape", def.matrix.mode);
    for row in &def.matrix.rows {
        out!("         [{}]", row.join(", "));
    }
    out!("f        ({})", def.functions.join(", "));
    let forms = sys.forms(&ZeroConfig::default())?;
    out!("generated Hamiltonians:");
    for (j, h) in forms.printed.hamiltonians.iter().enumerate() {
        out!("  H{} = {h}", j + 1);
    }
    if let Some(s) = &forms.specialized {
        out!("specialized:");
        for (j, h) in s.hamiltonians.iter().enumerate() {
            out!("  H{} = {h}", j + 1);
        }
    }
    for (name, s) in &forms.bases {
        out!("basis {name}:");
        for (j, h) in s.hamiltonians.iter().enumerate() {
            out!("  H{} = {h}", j + 1);
        }
    }
    Ok(true)
}

fn targets(names: &[String]) -> Result<Vec<SystemDefinition>> {
    let mut defs = Vec::new();
    for name in names {
        if name == "all" {
            defs.extend(corpus::builtins());
        } else {
            defs.push(corpus::resolve(name)?);
        }
    }
    Ok(defs)
}

fn verify(args: VerifyArgs) -> Result<bool> {
    let defs = targets(&args.targets)?;
    let mut cfg = SuiteConfig {
        zero: ZeroConfig {
            trials: args.trials,
            tol: args.tol,
            seed: args.seed,
            ..ZeroConfig::default()
        },
        ..SuiteConfig::default()
    };
    if let Some(checks) = args.checks {
        cfg = cfg.with_checks(checks);
    }
    let report = run_corpus(&defs, &cfg);
    for s in &report.systems {
        print_system(s, args.verbose)?;
    }
    let failures = report.failures().count();
    out!(
        "{} systems, {} entries, {} failing, {:.1} s",
        report.systems.len(),
        report.entries().count(),
        failures,
        report.timing_ms / 1e3
    );
    if let Some(path) = &args.json {
        std::fs::write(path, report.to_json())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(report.passed)
}

fn print_system(s: &SystemReport, verbose: bool) -> Result<()> {
    out!("{} {}", if s.passed { "PASS" } else { "FAIL" }, s.name);
    for c in &s.checks {
        if !verbose && c.passed() {
            continue;
        }
        let detail = c
            .detail
            .as_deref()
            .map(|d| format!(" ({d})"))
            .unwrap_or_default();
        out!("  {:12} {:28} {}{detail}", c.check, c.target, c.verdict);
        for w in &c.witnesses {
            out!("      {w}");
        }
    }
    Ok(())
}

fn integrate_cmd(args: IntegrateArgs) -> Result<bool> {
    let def = corpus::resolve(&args.target)?;
    let sys = def.compile()?;
    let forms = sys.forms(&ZeroConfig::default())?;
    let spec = def.dynamics.clone().unwrap_or_default();
    let cs = concretize(forms.working(), &sys.concretization)?;
    let ic = match (&args.ic, &sys.initial_condition) {
        (Some(text), base) => assign_point(sys.chart(), base.as_deref(), text)?,
        (None, Some(base)) => base.clone(),
        (None, None) => bail!("{} has no default initial condition; pass --ic", def.name),
    };
    let which = args.hamiltonian.unwrap_or(spec.hamiltonian);
    if which == 0 || which > cs.len() {
        bail!("--hamiltonian must be between 1 and {}", cs.len());
    }
    let method = args.method.unwrap_or(spec.method);
    let tr = integrate(
        &cs,
        which - 1,
        &ic,
        args.duration.unwrap_or(spec.duration),
        args.dt.unwrap_or(spec.dt),
        method,
    )?;
    out!(
        "{}: H{} flow, {} steps of {} with {}",
        def.name,
        which,
        tr.meta.steps,
        tr.meta.dt,
        tr.meta.method
    );
    if let Some(note) = &tr.meta.note {
        out!("note: {note}");
    }
    let end = tr.endpoint();
    let vars = sys.chart().phase_vars();
    let point: Vec<String> = vars
        .iter()
        .zip(end)
        .map(|(v, x)| format!("{v} = {x:.6}"))
        .collect();
    out!("endpoint: {}", point.join(", "));
    for d in conservation_report(&tr) {
        out!(
            "  H{}: initial {:.10e}, absolute drift {:.3e}, relative drift {:.3e}",
            d.index,
            d.initial,
            d.absolute,
            d.relative
        );
    }
    if let Some(path) = &args.csv {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        tr.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(true)
}

fn report(files: Vec<PathBuf>, merge: bool, json: Option<PathBuf>) -> Result<bool> {
    let mut reports = Vec::new();
    for path in &files {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        reports
            .push(Report::from_json(&text).with_context(|| format!("parsing {}", path.display()))?);
    }
    if merge {
        let merged = Report::merge(reports)?;
        match json {
            Some(path) => std::fs::write(&path, merged.to_json())
                .with_context(|| format!("writing {}", path.display()))?,
            None => out!("{}", merged.to_json()),
        }
        return Ok(merged.passed);
    }
    if json.is_some() {
        bail!("--json needs --merge");
    }
    let mut passed = true;
    for (path, r) in files.iter().zip(&reports) {
        out!(
            "{} (seed {}, {} trials)",
            path.display(),
            r.config.seed,
            r.config.trials
        );
        for s in &r.systems {
            print_system(s, false)?;
        }
        passed &= r.passed;
    }
    Ok(passed)
}

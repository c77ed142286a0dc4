use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use smte_core::energy::write_events_json;
use smte_core::equilibria::{sctp_margin, uep_margin, MISMATCH_LIMIT};
use smte_core::format::SCHEMA_VERSION;
use smte_core::system::Overrides;
use smte_core::*;

#[derive(Parser)]
#[command(
    name = "smte",
    version,
    about = "Transient stability simulation with individual and superimposed machine energy analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the swing equations and write the COI trajectory.
    Simulate(Common),
    /// Machine energies, IDSP/IDLP events and the conservation report.
    Energy(Common),
    /// Pre- and post-fault SEPs and the multi-start UEP.
    Equilibria(Common),
    /// Critical clearing time by bisection on clearing time.
    Cct(CctArgs),
    /// Superimposed potential energy surface over two machines' angles.
    Pes(PesArgs),
    /// Individual and superimposed verdicts with the comparative findings.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// Scenario file, or a bundled name (ts3, ts10).
    #[arg(long)]
    scenario: String,
    #[arg(long, allow_hyphen_values = true)]
    clearing_time: Option<f64>,
    #[arg(long)]
    fault_bus: Option<u32>,
    #[arg(long, allow_hyphen_values = true)]
    dt: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    horizon: Option<f64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads for parallel probes (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct CctArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 0.001)]
    resolution: f64,
    /// Initial bracket `lo,hi` in seconds.
    #[arg(long, default_value = "0.05,0.6", value_parser = parse_pair)]
    bracket: (f64, f64),
    /// Clearing times simulated per bisection round.
    #[arg(long, default_value_t = 4)]
    probes: usize,
}

#[derive(Args)]
struct PesArgs {
    #[command(flatten)]
    common: Common,
    /// `a_min:a_max:steps,b_min:b_max:steps` in degrees.
    #[arg(long, allow_hyphen_values = true)]
    grid: GridSpec,
    /// Machine ids on the two axes (default: the first two).
    #[arg(long, value_parser = parse_ids)]
    axes: Option<(u32, u32)>,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    /// Critical energy source for the margin.
    #[arg(long, value_enum)]
    margin: Option<MarginSource>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MarginSource {
    Sctp,
    Uep,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `lo,hi`")?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok((p(a)?, p(b)?))
}

fn parse_ids(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once(',').ok_or("expected `a,b`")?;
    let p = |x: &str| x.trim().parse::<u32>().map_err(|e| e.to_string());
    Ok((p(a)?, p(b)?))
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_validation() { 2 } else { 3 };
        Failure {
            code,
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 1, error }
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Error::Validation(msg.into()).into()
}

type Run<T = ()> = Result<T, Failure>;

fn load(c: &Common) -> Run<Scenario> {
    let base = if Path::new(&c.scenario).is_file() {
        let text =
            fs::read_to_string(&c.scenario).with_context(|| format!("reading {}", c.scenario))?;
        load_scenario(&text)?
    } else {
        match data::bundled(&c.scenario) {
            Some(s) => s?,
            None => {
                return Err(invalid(format!(
                    "no scenario file or bundled scenario named `{}` (bundled: {})",
                    c.scenario,
                    data::BUNDLED.join(", ")
                )))
            }
        }
    };
    Ok(base.with_overrides(&Overrides {
        dt: c.dt,
        horizon: c.horizon,
        clearing_time: c.clearing_time,
        fault_bus: c.fault_bus,
    })?)
}

fn create(dir: &Path, name: &str) -> Run<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json(dir: &Path, name: &str, v: &Value) -> Run {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, v).context(name.to_string())?;
    writeln!(w)
        .and_then(|_| w.flush())
        .context(name.to_string())?;
    Ok(())
}

fn finish(mut w: BufWriter<File>, name: &str) -> Run {
    w.flush().with_context(|| name.to_string())?;
    Ok(())
}

fn settings(s: &Scenario) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "scenario": s.name,
        "integrator": "rk4",
        "quadrature": "trapezoid",
        "dt": s.sim.dt,
        "horizon": s.sim.horizon,
        "clearing_time": s.fault.clearing_time,
        "fault_bus": s.fault.bus,
    })
}

fn with_settings(s: &Scenario, key: &str, body: Value) -> Value {
    let mut v = settings(s);
    v[key] = body;
    v
}

fn simulate(c: &Common) -> Run {
    let s = load(c)?;
    let tr = integrate(&s)?;
    match c.format {
        Format::Csv => {
            let mut w = create(&c.out, "trajectory.csv")?;
            tr.write_csv(&mut w).context("trajectory.csv")?;
            finish(w, "trajectory.csv")
        }
        Format::Json => {
            let body = serde_json::to_value(&tr).context("trajectory")?;
            write_json(
                &c.out,
                "trajectory.json",
                &with_settings(&s, "trajectory", body),
            )
        }
    }
}

fn energy(c: &Common) -> Run {
    let s = load(c)?;
    let tr = integrate(&s)?;
    let trace = machine_energy_trace(&tr)?;
    match c.format {
        Format::Csv => {
            let mut w = create(&c.out, "energy.csv")?;
            trace.write_csv(&mut w).context("energy.csv")?;
            finish(w, "energy.csv")?;
        }
        Format::Json => {
            let body = serde_json::to_value(&trace).context("energy")?;
            write_json(&c.out, "energy.json", &with_settings(&s, "energy", body))?;
        }
    }
    let mut events = Vec::new();
    for m in &s.machines {
        events.extend(find_idsp_idlp(&tr, &trace, m.id)?);
    }
    match find_smpp(&trace) {
        Ok(e) => events.push(e),
        Err(Error::Censored { t }) => eprintln!("warning: SMPP censored at {t} s"),
        Err(e) => return Err(e.into()),
    }
    let mut w = create(&c.out, "events.json")?;
    write_events_json(&trace, &events, &mut w).context("events.json")?;
    finish(w, "events.json")?;
    let cons = serde_json::to_value(conservation_report(&trace)).context("conservation")?;
    write_json(
        &c.out,
        "conservation.json",
        &with_settings(&s, "conservation", cons),
    )
}

fn equilibria(c: &Common) -> Run {
    let s = load(c)?;
    let pre = solve_sep(&s, StageLabel::Prefault)?;
    let post = solve_sep(&s, StageLabel::Postfault)?;
    let uep = solve_uep_multistart(&s, &post)?;
    let e = uep_energy(&s, &post, &uep)?;
    let mut v = settings(&s);
    v["solver"] = json!({ "method": "newton", "mismatch_limit": MISMATCH_LIMIT });
    v["uep_energy_path"] = "straight ray from post-fault SEP".into();
    v["sep_prefault"] = pre.to_json();
    v["sep_postfault"] = post.to_json();
    v["uep"] = uep.to_json();
    v["uep_energy"] = e.into();
    write_json(&c.out, "equilibria.json", &v)
}

fn cct(a: &CctArgs) -> Run {
    let s = load(&a.common)?;
    let r = find_cct(
        &s,
        a.bracket,
        a.resolution,
        a.probes,
        &AssessOptions::default(),
    )?;
    let mut w = create(&a.common.out, "cct.json")?;
    r.write_json(&mut w).context("cct.json")?;
    finish(w, "cct.json")?;
    println!(
        "cct {:.4} s, bracket [{:.4}, {:.4}] s",
        r.cct, r.bracket.0, r.bracket.1
    );
    Ok(())
}

fn pes(a: &PesArgs) -> Run {
    let s = load(&a.common)?;
    let axes = match a.axes {
        Some(x) => x,
        None if s.n() >= 3 => (s.machines[0].id, s.machines[1].id),
        None => return Err(invalid("PES sampling needs at least 3 machines")),
    };
    let g = pes_sample(&s, axes, &a.grid)?;
    match a.common.format {
        Format::Csv => {
            let mut w = create(&a.common.out, "pes.csv")?;
            g.write_csv(&mut w).context("pes.csv")?;
            finish(w, "pes.csv")
        }
        Format::Json => {
            let body = serde_json::to_value(&g).context("pes")?;
            write_json(&a.common.out, "pes.json", &with_settings(&s, "pes", body))
        }
    }
}

fn report(a: &ReportArgs) -> Run {
    let s = load(&a.common)?;
    let opts = AssessOptions::default();
    let run = assess(&s, &opts)?;
    let margin = match a.margin {
        None => None,
        Some(src) => {
            let sep = solve_sep(&s, StageLabel::Postfault)?;
            let m = match src {
                MarginSource::Uep => {
                    let uep = solve_uep_multistart(&s, &sep)?;
                    uep_margin((&run.trajectory, &run.trace), &sep, &uep)?
                }
                MarginSource::Sctp => {
                    let res = 0.01;
                    let r = find_cct(&s, (0.05, 0.6), res, 4, &opts)?;
                    let crit = assess(&s.with_clearing_time(r.cct)?, &opts)?;
                    sctp_margin(
                        (&crit.trajectory, &crit.trace),
                        (&run.trajectory, &run.trace),
                        &sep,
                    )?
                }
            };
            Some(m)
        }
    };
    let rep = comparative_report(&run.trajectory, &run.trace, margin, &opts)?;
    let mut v = serde_json::to_value(&rep).context("report")?;
    v["integrator"] = "rk4".into();
    v["quadrature"] = "trapezoid".into();
    write_json(&a.common.out, "report.json", &v)?;
    let text = rep.render_text();
    let mut w = create(&a.common.out, "report.txt")?;
    w.write_all(text.as_bytes()).context("report.txt")?;
    finish(w, "report.txt")?;
    print!("{text}");
    Ok(())
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Simulate(c) | Command::Energy(c) | Command::Equilibria(c) => c,
        Command::Cct(a) => &a.common,
        Command::Pes(a) => &a.common,
        Command::Report(a) => &a.common,
    }
}

fn run(cli: &Cli) -> Run {
    if let Some(j) = common(&cli.command).jobs {
        if j == 0 {
            return Err(invalid("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .context("thread pool")?;
    }
    match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Energy(c) => energy(c),
        Command::Equilibria(c) => equilibria(c),
        Command::Cct(a) => cct(a),
        Command::Pes(a) => pes(a),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hormander::config::{RunConfig, SuiteConfig};
use hormander::dump::OracleDump;
use hormander::report::{exit_code, Record, Report};
use hormander::session::{Session, SuiteRecord, SUITES};
use hormander::RunError;

/// Geometry and functional inequalities of Hörmander vector field systems.
#[derive(Parser, Debug)]
#[command(name = "hormander", version)]
struct Cli {
    /// Gallery model name or path to a `.vf` file.
    #[arg(long, global = true)]
    model: Option<String>,
    /// TOML run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for reports.
    #[arg(long, global = true)]
    out: Option<String>,
    /// Lattice spacing of the distance oracle.
    #[arg(long, global = true)]
    h: Option<f64>,
    /// Monte Carlo samples per ball.
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true)]
    k: Option<u32>,
    /// Integrability exponent, e.g. `2` or `3/2`.
    #[arg(long, global = true)]
    p: Option<String>,
    #[arg(long, global = true)]
    q_override: Option<String>,
    #[arg(long, global = true)]
    exponent_override: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bracket basis, pointwise and global indices, embedding table.
    Analyze,
    /// Control distance between two points, as `x1,x2,..`.
    Distance {
        #[arg(allow_hyphen_values = true)]
        x: String,
        #[arg(allow_hyphen_values = true)]
        y: String,
        /// Include the approximate geodesic in the report.
        #[arg(long)]
        geodesic: bool,
        /// Write the built oracle to this file.
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Answer from a previously dumped oracle instead of building one.
        #[arg(long)]
        load: Option<PathBuf>,
    },
    /// Monte Carlo volume of `B(center, r)` against `Λ(center, r)`.
    BallVolume {
        #[arg(allow_hyphen_values = true)]
        center: String,
        r: f64,
    },
    /// Run one inequality suite.
    Verify {
        suite: String,
        /// Exponent of the Sobolev sharpness probe.
        #[arg(long)]
        q_prime: Option<f64>,
    },
    /// Run every `[[suite]]` of the configuration (all suites when none).
    Report,
}

fn parse_point(s: &str) -> Result<Vec<f64>, RunError> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| RunError::Config(format!("bad coordinate '{t}' in '{s}'"))))
        .collect()
}

fn resolve_config(cli: &Cli) -> Result<RunConfig, RunError> {
    let mut cfg = match (&cli.config, &cli.model) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(m)) => RunConfig::for_model(m),
        (None, None) => return Err(RunError::Config("one of --model or --config is required".into())),
    };
    if let Some(m) = &cli.model {
        cfg.model = m.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(h) = cli.h {
        if !(h > 0.0) {
            return Err(RunError::Config(format!("--h must be positive, got {h}")));
        }
        cfg.oracle.h = h;
    }
    if let Some(n) = cli.samples {
        cfg.budgets.samples = n;
    }
    if let Some(k) = cli.k {
        cfg.lab.k = k;
    }
    if let Some(p) = &cli.p {
        cfg.lab.p = p.clone();
    }
    if let Some(q) = &cli.q_override {
        cfg.lab.q_override = Some(q.clone());
    }
    if let Some(e) = &cli.exponent_override {
        cfg.lab.exponent_override = Some(e.clone());
    }
    Ok(cfg)
}

fn print_suite(s: &SuiteRecord) {
    let ex: Vec<String> = s.exponents.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("{}: {} C={:.6e} {}", s.suite, s.verdict.as_str(), s.constant, ex.join(" "));
    for n in &s.notes {
        println!("  {n}");
    }
}

fn run(cli: Cli) -> Result<i32, RunError> {
    let cfg = resolve_config(&cli)?;
    let out = PathBuf::from(&cfg.out);
    match cli.command {
        Command::Analyze => {
            let session = Session::open(cfg)?;
            let a = session.analyze()?;
            println!("model {} (n = {}, m = {}) on {}", session.model_name, a.dim, a.fields, a.domain);
            match a.hormander.step {
                Some(s) => println!("Hormander condition holds, step {s}"),
                None => println!("Hormander condition holds"),
            }
            let hist: Vec<String> = a.nu_histogram.iter().map(|(v, c)| format!("nu={v}: {c}")).collect();
            println!("pointwise nu over {} samples: {}", a.sample_count, hist.join(", "));
            println!("nu_tilde = {} via {:?} at {:?}", a.nu_tilde, a.nu_tilde_witness.labels, a.nu_tilde_witness.point);
            println!("Q = {} via {:?} at {:?}", a.q, a.q_witness.labels, a.q_witness.point);
            for e in &a.embeddings {
                println!("k={} p={}: {}", e.k, e.p, e.summary);
            }
            let mut r = Report::new(&session);
            r.push(Record::Analyze(a));
            let path = r.write(&out, "analyze")?;
            println!("wrote {}", path.display());
            Ok(0)
        }
        Command::Distance { x, y, geodesic, dump, load } => {
            let (x, y) = (parse_point(&x)?, parse_point(&y)?);
            let mut session = Session::open(cfg)?;
            if let Some(path) = load {
                let (_, oracle) = OracleDump::read(&path)?.restore()?;
                session.set_oracle(oracle);
            }
            let d = session.distance(&x, &y, geodesic)?;
            println!("d({:?}, {:?}) = {:.6} +- {:.6} (h = {})", d.x, d.y, d.distance, d.error_bound, d.h);
            if let Some(path) = dump {
                OracleDump::capture(session.oracle()?, &session.sys).write(&path)?;
                println!("oracle written to {}", path.display());
            }
            let mut r = Report::new(&session);
            r.push(Record::Distance(d));
            let path = r.write(&out, "distance")?;
            println!("wrote {}", path.display());
            Ok(0)
        }
        Command::BallVolume { center, r } => {
            let c = parse_point(&center)?;
            let session = Session::open(cfg)?;
            let b = session.ball_volume(&c, r)?;
            println!(
                "|B({:?}, {})| = {:.6e} +- {:.2e}, Lambda = {:.6e}, ratio {:.4}",
                b.center, b.r, b.volume, b.stderr, b.lambda, b.ratio
            );
            let mut rep = Report::new(&session);
            rep.push(Record::BallVolume(b));
            let path = rep.write(&out, "ball-volume")?;
            println!("wrote {}", path.display());
            Ok(0)
        }
        Command::Verify { suite, q_prime } => {
            let mut sc = cfg.suites.iter().find(|s| s.name == suite).cloned().unwrap_or_else(|| SuiteConfig::named(&suite));
            if q_prime.is_some() {
                sc.q_prime = q_prime;
            }
            let session = Session::open(cfg)?;
            let rec = session.verify(&sc)?;
            print_suite(&rec);
            let mut r = Report::new(&session);
            r.push(Record::Suite(rec));
            let v = r.overall();
            let path = r.write(&out, &format!("verify-{suite}"))?;
            println!("wrote {}", path.display());
            Ok(exit_code(v))
        }
        Command::Report => {
            let suites: Vec<SuiteConfig> = if cfg.suites.is_empty() {
                SUITES.iter().map(|s| SuiteConfig::named(s)).collect()
            } else {
                cfg.suites.clone()
            };
            let session = Session::open(cfg)?;
            let mut r = Report::new(&session);
            r.push(Record::Analyze(session.analyze()?));
            for sc in &suites {
                match session.verify(sc) {
                    Ok(rec) => {
                        print_suite(&rec);
                        r.push(Record::Suite(rec));
                    }
                    // Regime mismatches are expected in a full sweep.
                    Err(RunError::Rejected(msg)) => println!("{}: REJECTED {msg}", sc.name),
                    Err(e) => return Err(e),
                }
            }
            let v = r.overall();
            let path = r.write(&out, "report")?;
            println!("overall {}; wrote {}", v.as_str(), path.display());
            Ok(exit_code(v))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

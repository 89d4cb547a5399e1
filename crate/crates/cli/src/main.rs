//! `framecover`: operator norms, basis constants, frames, dilations, ball
//! coverings of operator spheres and ball intersection checks.
//!
//! Exit status: 0 when every assertion holds, 1 when a report has findings,
//! 2 on usage or input errors.

mod input;
mod pipelines;
mod report;
mod scenario;

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use framecover_core::approx::Side;
use input::{Ctx, Rows};
use pipelines::{Expectation, ModeName, Outcome};
use report::{emit_csv, emit_json, Table};

#[derive(Parser)]
#[command(name = "framecover", version, about = "Frames, dilations and ball coverings of operator spaces")]
struct Cli {
    /// Report format on stdout; `csv` prints the command's table.
    #[arg(long, value_enum, global = true, default_value = "json")]
    format: Format,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Induced norm of a matrix between two spaces.
    Opnorm(OpnormArgs),
    /// Basis, unconditional and reflection constants of a basis.
    Constants(ConstantsArgs),
    /// Build or check a Schauder frame.
    Frame {
        #[command(subcommand)]
        cmd: FrameCmd,
    },
    /// Dilate a basis to a block unconditional frame and measure the embedding.
    Dilate(DilateArgs),
    /// Ball covering of an operator sphere.
    Cover {
        #[command(subcommand)]
        cmd: CoverCmd,
    },
    /// Ball intersection feasibility for a subspace.
    Bip(BipArgs),
    /// Run a TOML scenario.
    Run(RunArgs),
}

#[derive(Args)]
struct OpnormArgs {
    /// Matrix rows: CSV file or inline `a,b;c,d`.
    #[arg(long)]
    matrix: String,
    #[arg(long)]
    dom: String,
    #[arg(long)]
    cod: String,
    #[arg(long)]
    alpha: Option<f64>,
    /// Columns below this index are dropped in the tail model.
    #[arg(long)]
    tail: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ConstantsArgs {
    /// Basis vectors as rows, or `canonical`.
    #[arg(long)]
    basis: String,
    #[arg(long)]
    space: String,
    #[arg(long = "rho", default_values_t = [2.0])]
    rho: Vec<f64>,
    #[arg(long, default_value_t = 4096)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum FrameCmd {
    /// Frame of a basis with block repeats for surplus `eps`.
    Build {
        #[arg(long)]
        space: String,
        #[arg(long)]
        basis: String,
        #[arg(long)]
        eps: f64,
        /// Write the frame file here instead of embedding it in the report.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 4096)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Validate a frame file and measure its bounds.
    Check {
        #[arg(long)]
        frame: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Fail when a bound exceeds this value.
        #[arg(long)]
        bound: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct DilateArgs {
    #[arg(long)]
    space: String,
    #[arg(long)]
    basis: String,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 4096)]
    budget: usize,
    #[arg(long)]
    search_samples: Option<usize>,
    #[arg(long)]
    ufdd_samples: Option<usize>,
    #[arg(long)]
    identity_samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Codomain,
    Domain,
}

#[derive(Subcommand)]
enum CoverCmd {
    /// Centers 2 sum g_i (x) s_i / |sum| from two nets.
    Generate {
        #[arg(long)]
        dom: String,
        #[arg(long)]
        cod: String,
        /// Net resolution for nets not given explicitly.
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, default_value_t = 1)]
        m_max: usize,
        #[arg(long, default_value_t = 16)]
        cap: usize,
        #[arg(long, default_value_t = 1000)]
        limit: usize,
        #[arg(long)]
        functionals: Option<String>,
        #[arg(long)]
        vectors: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Constructive covering step for one or many unit operators.
    One {
        #[arg(long)]
        dom: String,
        #[arg(long)]
        cod: String,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        sigma: f64,
        /// Renormed mode with this alpha; plain norm when absent.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        tail: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        eps1: Option<f64>,
        #[arg(long)]
        eps2: Option<f64>,
        #[arg(long, value_enum, default_value = "codomain")]
        side: SideArg,
        #[arg(long)]
        frame: Option<String>,
        #[arg(long, conflicts_with = "count")]
        matrix: Option<String>,
        #[arg(long)]
        count: Option<usize>,
        /// Also write the (id, distance, bound, margin) table here.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Adversarial check of a claimed cover stored as JSON.
    Verify {
        #[arg(long)]
        cover: String,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct BipArgs {
    #[arg(long)]
    space: String,
    /// Subspace basis, one vector per row.
    #[arg(long)]
    subspace: String,
    #[arg(long)]
    y: String,
    #[arg(long)]
    points: String,
    #[arg(long, required_unless_present = "slack", conflicts_with = "slack")]
    eps: Option<f64>,
    /// Diagnostic radius offset in place of eps (may be negative).
    #[arg(long, allow_hyphen_values = true)]
    slack: Option<f64>,
    #[arg(long)]
    three_point: bool,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, value_enum)]
    expect: Option<Expectation>,
}

#[derive(Args)]
struct RunArgs {
    scenario: PathBuf,
    /// Write `<name>.json` and `<name>.<table>.csv` here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn thread_setup() -> Result<()> {
    if let Ok(v) = std::env::var("FRAMECOVER_THREADS") {
        let n: usize = v.trim().parse().ok().filter(|n| *n > 0).with_context(|| format!("FRAMECOVER_THREADS=`{v}` is not a positive integer"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("thread pool")?;
    }
    Ok(())
}

fn command_report(command: &str, out: Outcome) -> (Value, Vec<Table>, bool) {
    let pass = out.findings.is_empty();
    let v = json!({ "command": command, "result": out.result, "findings": out.findings, "pass": pass });
    (v, out.tables, pass)
}

fn emit(format: Format, v: &Value, tables: &[Table]) -> Result<()> {
    let text = match format {
        Format::Json => emit_json(v),
        Format::Csv => match tables.first() {
            Some(t) => emit_csv(t),
            None => bail!("this command has no table; use --format json"),
        },
    };
    std::io::stdout().write_all(text.as_bytes())?;
    Ok(())
}

fn execute(cli: Cli) -> Result<bool> {
    let ctx = Ctx::cwd();
    let r = |s: &String| Rows::Text(s.clone());
    let (v, tables, pass) = match cli.cmd {
        Cmd::Opnorm(a) => {
            let i = pipelines::OpnormInput { matrix: r(&a.matrix), dom: a.dom, cod: a.cod, alpha: a.alpha, tail: a.tail, restarts: a.restarts };
            command_report("opnorm", pipelines::opnorm(&ctx, &i, a.seed)?)
        }
        Cmd::Constants(a) => {
            let i = pipelines::ConstantsInput { basis: r(&a.basis), space: a.space, rho: a.rho, budget: a.budget };
            command_report("constants", pipelines::constants(&ctx, &i, a.seed)?)
        }
        Cmd::Frame { cmd: FrameCmd::Build { space, basis, eps, out, budget, seed } } => {
            let i = pipelines::FrameInput { space, basis: r(&basis), eps, budget };
            let (mut o, fr) = pipelines::frame_build(&ctx, &i, seed)?;
            match out {
                Some(p) => {
                    std::fs::write(&p, emit_json(&fr.to_json())).with_context(|| format!("cannot write {}", p.display()))?;
                    o.result["frame_file"] = json!(p.display().to_string());
                }
                None => o.result["frame"] = fr.to_json(),
            }
            command_report("frame build", o)
        }
        Cmd::Frame { cmd: FrameCmd::Check { frame, samples, bound, seed } } => {
            let i = pipelines::FrameCheckInput { frame, samples, bound };
            command_report("frame check", pipelines::frame_check(&ctx, &i, seed)?)
        }
        Cmd::Dilate(a) => {
            let i = pipelines::DilateInput {
                space: a.space,
                basis: r(&a.basis),
                eps: a.eps,
                budget: a.budget,
                search_samples: a.search_samples,
                ufdd_samples: a.ufdd_samples,
                identity_samples: a.identity_samples,
            };
            command_report("dilate", pipelines::dilate(&ctx, &i, a.seed)?)
        }
        Cmd::Cover { cmd: CoverCmd::Generate { dom, cod, eta, m_max, cap, limit, functionals, vectors, seed } } => {
            let i = pipelines::GenerateInput {
                dom,
                cod,
                eta,
                m_max,
                cap,
                limit,
                functionals: functionals.as_ref().map(r),
                vectors: vectors.as_ref().map(r),
            };
            command_report("cover generate", pipelines::cover_generate(&ctx, &i, seed)?)
        }
        Cmd::Cover {
            cmd: CoverCmd::One { dom, cod, eps, sigma, alpha, tail, eta, eps1, eps2, side, frame, matrix, count, csv, seed },
        } => {
            let i = pipelines::CoverInput {
                dom,
                cod,
                side: match side {
                    SideArg::Codomain => Side::Codomain,
                    SideArg::Domain => Side::Domain,
                },
                eps,
                sigma,
                mode: if alpha.is_some() { ModeName::Alpha } else { ModeName::Plain },
                alpha,
                tail,
                eps1,
                eps2,
                eta,
                frame,
                matrix: matrix.as_ref().map(r),
                count,
            };
            let o = pipelines::cover_one(&ctx, &i, seed)?;
            if let (Some(p), Some(t)) = (csv, o.tables.first()) {
                std::fs::write(&p, emit_csv(t)).with_context(|| format!("cannot write {}", p.display()))?;
            }
            command_report("cover one", o)
        }
        Cmd::Cover { cmd: CoverCmd::Verify { cover, samples, restarts, iters, seed } } => {
            let i = pipelines::VerifyInput { cover: pipelines::CoverSource::File(cover), samples, restarts, iters };
            command_report("cover verify", pipelines::cover_verify(&ctx, &i, seed)?)
        }
        Cmd::Bip(a) => {
            let i = pipelines::BipInput {
                space: a.space,
                subspace: r(&a.subspace),
                y: r(&a.y),
                points: r(&a.points),
                eps: a.eps,
                slack: a.slack,
                three_point: a.three_point,
                tol: a.tol,
                expect: a.expect,
            };
            command_report("bip", pipelines::bip(&ctx, &i, 0)?)
        }
        Cmd::Run(a) => {
            let (s, sctx) = scenario::Scenario::load(&a.scenario)?;
            let rep = scenario::run(&s, &sctx)?;
            if let Some(dir) = a.out_dir {
                std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
                let mut written = vec![dir.join(format!("{}.json", s.name))];
                std::fs::write(&written[0], emit_json(&rep.json))?;
                for t in &rep.tables {
                    let p = dir.join(format!("{}.{}.csv", s.name, t.name));
                    std::fs::write(&p, emit_csv(t))?;
                    written.push(p);
                }
                for p in written {
                    println!("{}", p.display());
                }
                return Ok(rep.pass);
            }
            (rep.json, rep.tables, rep.pass)
        }
    };
    emit(cli.format, &v, &tables)?;
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = thread_setup().and_then(|()| execute(cli));
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

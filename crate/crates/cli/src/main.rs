mod config;

use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hierwalk::freegreen::{u_finite, u_infinite, u_spectral, FreeGreenRecord, U_INFINITE_TOL};
use hierwalk::rgflow::{critical_beta_report, critical_beta_secant, predict_green, run_flow, DomainParams, Prediction, TrajectoryReport};
use hierwalk::verify::{run_suite, Suite};
use hierwalk::walkmc::{green_csv_row, mc_end_to_end, mc_green, McEstimate, GREEN_CSV_HEADER};
use hierwalk::Error;
use serde_json::{json, Value};

use config::{Format, RunConfig};

const SHOOTING_DEPTH: usize = 400;

#[derive(Parser, Debug)]
#[command(name = "hierwalk", version, about = "Hierarchical weakly self-avoiding walk: RG flow, free Green's functions and Monte Carlo")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// Flat key=value file; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Block side length.
    #[arg(long = "L", global = true)]
    l: Option<String>,
    /// Volume exponent: the torus is the ball of radius L^N.
    #[arg(long = "N", global = true)]
    n: Option<String>,
    /// Mass parameter as "re" or "re,im".
    #[arg(long, global = true, allow_hyphen_values = true)]
    beta: Option<String>,
    /// Coupling as "re" or "re,im".
    #[arg(long, global = true, allow_hyphen_values = true)]
    lambda: Option<String>,
    /// Site as dot-separated digits, least significant first.
    #[arg(long, global = true)]
    x: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    samples: Option<String>,
    /// Flow order: minimal or appendixC.
    #[arg(long, global = true)]
    order: Option<String>,
    #[arg(long, global = true)]
    tol: Option<String>,
    /// Output format: csv or json.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Write output to FILE instead of stdout.
    #[arg(long, global = true)]
    out: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Finite,
    Spectral,
    Infinite,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Free Green's function U_N(beta, x).
    FreeGreen {
        #[arg(long, value_enum, default_value = "finite")]
        method: Method,
    },
    /// Coupling flow (beta_j, lambda_j) for j = 0..=J.
    RgFlow {
        /// Number of steps.
        #[arg(long = "J")]
        j: Option<String>,
        /// Stop at the first step outside the domain.
        #[arg(long)]
        stop_at_exit: bool,
    },
    /// Critical mass beta_c(lambda).
    CriticalBeta {
        /// Print the bisection bracket history.
        #[arg(long)]
        verbose: bool,
    },
    /// RG prediction of the interacting Green's function.
    Predict,
    /// Monte Carlo estimate of the interacting Green's function.
    McGreen,
    /// Weighted mean-square displacement at time T.
    EndToEnd {
        #[arg(long = "T")]
        t: Option<String>,
    },
    /// Compares a prediction with a Monte Carlo estimate.
    Compare {
        /// JSON output of `predict`; computed from the config when absent.
        #[arg(long)]
        predicted: Option<PathBuf>,
        /// JSON output of `mc-green`; computed from the config when absent.
        #[arg(long)]
        measured: Option<PathBuf>,
    },
    /// Runs a named identity suite and reports pass/fail as JSON.
    Verify {
        #[arg(value_parser = ["susy", "tau", "decomp", "diagrams", "norms", "convolution"])]
        suite: String,
    },
}

struct CliError {
    code: u8,
    message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

fn io_error(e: io::Error) -> CliError {
    CliError {
        code: 3,
        message: format!("output failed: {e}"),
    }
}

struct Output {
    command: &'static str,
    notes: Vec<String>,
    csv_header: String,
    csv_rows: Vec<String>,
    json: Value,
}

impl Output {
    fn new(command: &'static str, csv_header: &str, csv_rows: Vec<String>, json: Value) -> Self {
        Output {
            command,
            notes: Vec::new(),
            csv_header: csv_header.into(),
            csv_rows,
            json,
        }
    }

    fn render(&self, cfg: &RunConfig, format: Format) -> String {
        match format {
            Format::Csv => {
                let mut s = format!("# hierwalk {} {}\n", self.command, env!("CARGO_PKG_VERSION"));
                for (k, v) in cfg.entries() {
                    s.push_str(&format!("# {k}={v}\n"));
                }
                for n in &self.notes {
                    s.push_str(&format!("# {n}\n"));
                }
                s.push_str(&self.csv_header);
                s.push('\n');
                for r in &self.csv_rows {
                    s.push_str(r);
                    s.push('\n');
                }
                s
            }
            Format::Json => {
                let config: serde_json::Map<String, Value> =
                    cfg.entries().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
                let doc = json!({
                    "command": self.command,
                    "version": env!("CARGO_PKG_VERSION"),
                    "config": config,
                    "notes": self.notes,
                    "result": self.json,
                });
                let mut s = serde_json::to_string_pretty(&doc).expect("plain data");
                s.push('\n');
                s
            }
        }
    }
}

fn build_config(common: &Common, command: &Command) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::with_defaults();
    if let Some(path) = &common.config {
        cfg.merge_file(path)?;
    }
    let flags = [
        ("L", &common.l),
        ("N", &common.n),
        ("beta", &common.beta),
        ("lambda", &common.lambda),
        ("x", &common.x),
        ("seed", &common.seed),
        ("samples", &common.samples),
        ("order", &common.order),
        ("tol", &common.tol),
        ("format", &common.format),
        ("out", &common.out),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, v);
        }
    }
    match command {
        Command::RgFlow { j: Some(j), .. } => cfg.set("J", j),
        Command::EndToEnd { t: Some(t) } => cfg.set("T", t),
        _ => {}
    }
    Ok(cfg)
}

fn free_green(cfg: &RunConfig, method: Method) -> Result<Output, CliError> {
    let (l, n, beta, x) = (cfg.l()?, cfg.n()?, cfg.beta()?, cfg.x()?);
    let u = match method {
        Method::Finite => u_finite(&beta, &x, n, l)?,
        Method::Spectral => u_spectral(&beta, &x, n, l)?,
        Method::Infinite => u_infinite(beta, &x, U_INFINITE_TOL)?,
    };
    let rec = FreeGreenRecord::new(l, n, beta, &x, u);
    let json = serde_json::to_value(&rec).expect("plain data");
    Ok(Output::new("free-green", FreeGreenRecord::CSV_HEADER, vec![rec.csv_row()], json))
}

fn rg_flow(cfg: &RunConfig, stop_at_exit: bool) -> Result<Output, CliError> {
    let report: TrajectoryReport = run_flow(
        cfg.beta()?,
        cfg.lambda()?,
        cfg.l()?,
        cfg.j()?,
        &DomainParams::default(),
        cfg.order()?,
        !stop_at_exit,
    )?;
    let mut out = Output::new("rg-flow", TrajectoryReport::CSV_HEADER, report.csv_rows(), report.to_json());
    let exit = report.exit_index.map_or("none".to_string(), |m| m.to_string());
    out.notes.push(format!("first exit M={exit}"));
    if report.diverged {
        out.notes.push("flow diverged; rows stop early".into());
    }
    Ok(out)
}

fn critical_beta(cfg: &RunConfig, verbose: bool) -> Result<Output, CliError> {
    let (lambda, l, tol, order) = (cfg.lambda()?, cfg.l()?, cfg.tol()?, cfg.order()?);
    let header = "lambda_re,lambda_im,beta_c_re,beta_c_im,iterations";
    if lambda.im == 0.0 && lambda.re >= 0.0 {
        let rep = critical_beta_report(lambda.re, l, SHOOTING_DEPTH, tol, order)?;
        let row = format!("{:e},{:e},{:e},{:e},{}", rep.lambda[0], rep.lambda[1], rep.beta_c[0], rep.beta_c[1], rep.iterations);
        let mut json = json!({
            "lambda": rep.lambda,
            "beta_c": rep.beta_c,
            "iterations": rep.iterations,
        });
        let mut out = Output::new("critical-beta", header, vec![row], Value::Null);
        if verbose {
            json["history"] = json!(rep.history);
            for (k, (lo, hi)) in rep.history.iter().enumerate() {
                out.notes.push(format!("bracket {k}: [{lo:e}, {hi:e}]"));
            }
        }
        out.json = json;
        Ok(out)
    } else {
        let bc = critical_beta_secant(lambda, l, SHOOTING_DEPTH, tol, order)?;
        let row = format!("{:e},{:e},{:e},{:e},", lambda.re, lambda.im, bc.re, bc.im);
        let json = json!({"lambda": [lambda.re, lambda.im], "beta_c": [bc.re, bc.im]});
        let mut out = Output::new("critical-beta", header, vec![row], json);
        if verbose {
            out.notes.push("secant continuation in arg(lambda); no bisection bracket".into());
        }
        Ok(out)
    }
}

fn prediction(cfg: &RunConfig) -> Result<Prediction, CliError> {
    Ok(predict_green(cfg.beta()?, cfg.lambda()?, &cfg.x()?, &DomainParams::default(), cfg.order()?)?)
}

fn predict(cfg: &RunConfig) -> Result<Output, CliError> {
    let p = prediction(cfg)?;
    Ok(Output::new("predict", Prediction::CSV_HEADER, vec![p.csv_row()], p.to_json()))
}

fn estimate(cfg: &RunConfig) -> Result<McEstimate, CliError> {
    let est = mc_green(cfg.beta()?, cfg.real_lambda()?, &cfg.x()?, cfg.n()?, cfg.samples()?, cfg.seed()?)?;
    if let Some(w) = &est.warning {
        eprintln!("warning: {w}");
    }
    Ok(est)
}

fn mc(cfg: &RunConfig) -> Result<Output, CliError> {
    if cfg.l()? != 2 {
        return Err(Error::Input("the walk simulator supports L = 2 only".into()).into());
    }
    let est = estimate(cfg)?;
    let (beta, lambda, x, n) = (cfg.beta()?, cfg.real_lambda()?, cfg.x()?, cfg.n()?);
    let row = green_csv_row(beta, lambda, &x, n, &est);
    let mut json = serde_json::to_value(&est).expect("plain data");
    json["beta"] = json!([beta.re, beta.im]);
    json["lambda"] = json!(lambda);
    json["x"] = json!(x.to_string());
    json["N"] = json!(n);
    let mut out = Output::new("mc-green", GREEN_CSV_HEADER, vec![row], json);
    out.notes.push(format!("batches={}", est.batches));
    Ok(out)
}

fn end_to_end(cfg: &RunConfig) -> Result<Output, CliError> {
    let (t, lambda, l, n, samples, seed) = (cfg.t()?, cfg.real_lambda()?, cfg.l()?, cfg.n()?, cfg.samples()?, cfg.seed()?);
    let e = mc_end_to_end(t, lambda, l, n, samples, seed)?;
    let row = format!(
        "{:e},{:e},{},{},{:e},{:e},{:e},{:e},{},{}",
        e.t,
        e.lambda,
        l,
        n,
        e.numerator.mean[0],
        e.denominator.mean[0],
        e.ratio,
        e.ratio_std_error,
        samples,
        seed
    );
    let json = serde_json::to_value(&e).expect("plain data");
    Ok(Output::new(
        "end-to-end",
        "T,lambda,L,N,numerator,denominator,ratio,ratio_std_error,n_samples,seed",
        vec![row],
        json,
    ))
}

fn read_json(path: &PathBuf) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError {
        code: 1,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    serde_json::from_str(&text).map_err(|e| CliError {
        code: 1,
        message: format!("{} is not JSON output of hierwalk (use --format json): {e}", path.display()),
    })
}

fn pair(v: &Value, what: &str) -> Result<[f64; 2], CliError> {
    let bad = || CliError {
        code: 1,
        message: format!("missing field {what}"),
    };
    let a = v.as_array().ok_or_else(bad)?;
    Ok([a.first().and_then(Value::as_f64).ok_or_else(bad)?, a.get(1).and_then(Value::as_f64).ok_or_else(bad)?])
}

fn compare(cfg: &RunConfig, predicted: Option<&PathBuf>, measured: Option<&PathBuf>) -> Result<Output, CliError> {
    let (pred, budget, px) = match predicted {
        Some(p) => {
            let v = read_json(p)?;
            let r = &v["result"];
            let budget = r["rel_error_budget"].as_f64().ok_or_else(|| CliError {
                code: 1,
                message: "missing field rel_error_budget".into(),
            })?;
            (pair(&r["G0_value"], "G0_value")?, budget, r["x"].as_str().unwrap_or("").to_string())
        }
        None => {
            let p = prediction(cfg)?;
            ([p.value.re, p.value.im], p.rel_error_budget, p.x.to_string())
        }
    };
    let (mean, se, mx) = match measured {
        Some(p) => {
            let v = read_json(p)?;
            let r = &v["result"];
            let se = r["std_error"].as_f64().ok_or_else(|| CliError {
                code: 1,
                message: "missing field std_error".into(),
            })?;
            (pair(&r["mean"], "mean")?, se, r["x"].as_str().unwrap_or("").to_string())
        }
        None => {
            let e = estimate(cfg)?;
            (e.mean, e.std_error, cfg.x()?.to_string())
        }
    };
    if px != mx {
        return Err(CliError {
            code: 1,
            message: format!("prediction is for x={px:?} but the estimate is for x={mx:?}"),
        });
    }
    let diff = ((pred[0] - mean[0]).powi(2) + (pred[1] - mean[1]).powi(2)).sqrt();
    let pnorm = (pred[0].powi(2) + pred[1].powi(2)).sqrt();
    let tolerance = (3.0 * se).max(budget * pnorm);
    let agree = diff <= tolerance;
    let row = format!(
        "{px},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{agree}",
        pred[0], pred[1], mean[0], mean[1], se, budget, diff, tolerance
    );
    let json = json!({
        "x": px,
        "prediction": pred,
        "estimate": mean,
        "std_error": se,
        "rel_error_budget": budget,
        "difference": diff,
        "tolerance": tolerance,
        "agree": agree,
    });
    Ok(Output::new(
        "compare",
        "x,prediction_re,prediction_im,estimate_re,estimate_im,std_error,rel_error_budget,difference,tolerance,agree",
        vec![row],
        json,
    ))
}

fn write_text(cfg: &RunConfig, text: &str) -> Result<(), CliError> {
    match cfg.out() {
        Some(path) => File::create(path)
            .and_then(|mut f| f.write_all(text.as_bytes()))
            .map_err(io_error),
        None => io::stdout().write_all(text.as_bytes()).map_err(io_error),
    }
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    let cfg = build_config(&cli.common, &cli.command)?;
    let format = cfg.format()?;
    if let Command::Verify { suite } = &cli.command {
        let report = run_suite(suite.parse::<Suite>()?, cfg.l()?)?;
        let mut doc = report.to_json();
        doc["config"] = json!({"L": cfg.raw("L")});
        write_text(&cfg, &format!("{}\n", serde_json::to_string_pretty(&doc).expect("plain data")))?;
        return Ok(if report.all_pass() { 0 } else { 3 });
    }
    let out = match &cli.command {
        Command::FreeGreen { method } => free_green(&cfg, *method)?,
        Command::RgFlow { stop_at_exit, .. } => rg_flow(&cfg, *stop_at_exit)?,
        Command::CriticalBeta { verbose } => critical_beta(&cfg, *verbose)?,
        Command::Predict => predict(&cfg)?,
        Command::McGreen => mc(&cfg)?,
        Command::EndToEnd { .. } => end_to_end(&cfg)?,
        Command::Compare { predicted, measured } => compare(&cfg, predicted.as_ref(), measured.as_ref())?,
        Command::Verify { .. } => unreachable!("handled above"),
    };
    write_text(&cfg, &out.render(&cfg, format))?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use nalgebra::{DMatrix, DVector};

use secinfer::centralized::{calibrate_tau, CentralError, CentralModel, L0_EPS};

use crate::input::{read_matrix, read_measurement, sink};
use crate::{Classify, Failure};

fn classify(e: CentralError) -> Failure {
    match e {
        CentralError::NoConsistent { .. } | CentralError::Solver(_) => Failure::Runtime(e.into()),
        _ => Failure::Config(e.into()),
    }
}

#[derive(Args)]
pub struct Inputs {
    /// Measurement matrix CSV, one row per sensor row (header optional).
    #[arg(long)]
    h: PathBuf,
    /// Measurement CSV of `row,y` pairs (header optional).
    #[arg(long)]
    y: PathBuf,
    /// Result CSV (`field,index,value`); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Inputs {
    fn read(&self) -> Result<(DMatrix<f64>, DVector<f64>), Failure> {
        Ok((read_matrix(&self.h).config()?, read_measurement(&self.y).config()?))
    }
}

type Record = (&'static str, Option<usize>, f64);

fn write_records(out: Option<&PathBuf>, records: &[Record]) -> Result<(), Failure> {
    let mut w = sink(out).runtime()?;
    w.write_record(["field", "index", "value"]).runtime()?;
    for (field, index, value) in records {
        w.write_record([
            field.to_string(),
            index.map_or(String::new(), |i| i.to_string()),
            value.to_string(),
        ])
        .runtime()?;
    }
    w.flush().runtime()
}

/// Human summary goes to stdout when the CSV goes to a file, to stderr
/// otherwise.
fn say(to_file: bool, line: String) {
    if to_file {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

#[derive(Args)]
pub struct DetectArgs {
    #[command(flatten)]
    io: Inputs,
    /// Residual threshold.
    #[arg(long, required_unless_present = "noise_std", conflicts_with = "noise_std")]
    tau: Option<f64>,
    /// Calibrate the threshold by Monte Carlo for this Gaussian noise level instead.
    #[arg(long)]
    noise_std: Option<f64>,
    /// Target false-alarm rate for calibration.
    #[arg(long, default_value_t = 0.01)]
    false_alarm: f64,
    /// Monte-Carlo draws for calibration.
    #[arg(long, default_value_t = 20_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn detect(a: DetectArgs) -> Result<(), Failure> {
    let (h, y) = a.io.read()?;
    let tau = match (a.tau, a.noise_std) {
        (Some(t), _) => t,
        (None, Some(s)) => calibrate_tau(&h, s, a.false_alarm, a.trials, a.seed).map_err(classify)?,
        (None, None) => unreachable!("clap requires tau or noise_std"),
    };
    let model = CentralModel::new(h, tau).map_err(classify)?;
    let theta = model.ls_estimate(&y).map_err(classify)?;
    let residual = model.residual(&y).map_err(classify)?;
    let alarm = residual > tau;
    let mut records: Vec<Record> = vec![
        ("alarm", None, alarm as u8 as f64),
        ("residual", None, residual),
        ("tau", None, tau),
    ];
    records.extend(theta.iter().enumerate().map(|(i, &v)| ("theta", Some(i), v)));
    write_records(a.io.out.as_ref(), &records)?;
    let f = a.io.out.is_some();
    say(
        f,
        format!(
            "{}: residual {residual:.6} vs threshold {tau:.6}",
            if alarm { "ATTACK" } else { "no attack" }
        ),
    );
    say(f, format!("estimate: {:?}", theta.as_slice()));
    Ok(())
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    L0,
    L1,
}

#[derive(Args)]
pub struct IdentifyArgs {
    #[command(flatten)]
    io: Inputs,
    #[arg(long, value_enum, default_value_t = Method::L0)]
    method: Method,
    /// Largest attack support tried by l0; defaults to (rows - cols) / 2.
    #[arg(long)]
    s_max: Option<usize>,
    /// Per-row consistency tolerance for l0.
    #[arg(long, default_value_t = L0_EPS)]
    eps: f64,
}

pub fn identify(a: IdentifyArgs) -> Result<(), Failure> {
    let (h, y) = a.io.read()?;
    let (p, m) = h.shape();
    let model = CentralModel::new(h, 1.0).map_err(classify)?;
    let r = match a.method {
        Method::L0 => model.identify_l0(&y, a.s_max.unwrap_or(p.saturating_sub(m) / 2), a.eps),
        Method::L1 => model.identify_l1(&y),
    }
    .map_err(classify)?;
    let mut records: Vec<Record> = Vec::new();
    records.extend(r.theta.iter().enumerate().map(|(i, &v)| ("theta", Some(i), v)));
    records.extend(r.attack.iter().enumerate().map(|(i, &v)| ("attack", Some(i), v)));
    records.extend(
        r.support
            .iter()
            .enumerate()
            .map(|(k, &row)| ("support", Some(k), row as f64)),
    );
    write_records(a.io.out.as_ref(), &records)?;
    let f = a.io.out.is_some();
    say(f, format!("attacked rows: {:?}", r.support));
    say(f, format!("estimate: {:?}", r.theta.as_slice()));
    Ok(())
}

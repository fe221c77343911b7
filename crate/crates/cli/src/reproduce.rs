use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use expou::calibration::{synthetic_series, PriceSeries, SyntheticSpec};
use expou::inversion::FrequencyGrid;
use expou::reproduce::{
    density_comparison, reference_params, table1 as run_table1, table2 as run_table2, with_beta,
    McSettings, TABLE1_BETAS, TABLE2_HORIZONS,
};
use expou::stats::CumulantSet;
use serde_json::json;

use crate::commands::calibrate_series;
use crate::output::{CliError, Context, Meta};
use crate::{CalibrationArgs, Sink};

#[derive(Args, Debug)]
pub struct McArgs {
    #[arg(long, default_value_t = 500_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 20_080_101)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.95)]
    pub confidence: f64,
}

impl McArgs {
    fn settings(&self) -> McSettings {
        McSettings {
            paths: self.paths,
            dt: self.dt,
            seed: self.seed,
            confidence: self.confidence,
        }
    }
}

#[derive(Args, Debug)]
pub struct Table1Args {
    #[command(flatten)]
    mc: McArgs,
    #[arg(long, value_delimiter = ',', default_values_t = TABLE1_BETAS)]
    betas: Vec<f64>,
    /// Largest β that also gets a Monte Carlo column.
    #[arg(long, default_value_t = 0.05)]
    mc_up_to: f64,
}

#[derive(Args, Debug)]
pub struct Table2Args {
    #[command(flatten)]
    mc: McArgs,
    #[arg(long, default_value_t = 0.01)]
    beta: f64,
    #[arg(long, value_delimiter = ',', default_values_t = TABLE2_HORIZONS)]
    horizons: Vec<f64>,
}

#[derive(Args, Debug)]
pub struct Table3Args {
    /// `date,close` CSV; a synthetic series is generated when absent.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 12_000)]
    days: usize,
    /// Seed of the synthetic series.
    #[arg(long, default_value_t = 2024)]
    series_seed: u64,
    #[command(flatten)]
    options: CalibrationArgs,
}

#[derive(Args, Debug)]
pub struct FigDensityArgs {
    #[arg(long, default_value_t = 5_000_000)]
    paths: usize,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 20_080_101)]
    seed: u64,
    #[arg(long, default_value_t = 0.01)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    #[arg(long, default_value_t = 1e3)]
    phi_max: f64,
    #[arg(long, default_value_t = 1 << 22)]
    n: usize,
}

fn mc_cells(c: Option<&CumulantSet>) -> String {
    match c {
        Some(c) => {
            let h = &c.half_widths;
            format!(
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                c.n, c.k1, h.k1, c.k2, h.k2, c.skew, h.skew, c.kurt, h.kurt
            )
        }
        None => ",,,,,,,,".into(),
    }
}

const MC_COLUMNS: [&str; 9] = ["n", "k1", "hw_k1", "k2", "hw_k2", "skew", "hw_skew", "kurt", "hw_kurt"];

fn prefixed(prefix: &str) -> String {
    MC_COLUMNS.iter().map(|c| format!("{prefix}_{c}")).collect::<Vec<_>>().join(",")
}

pub fn table1(a: Table1Args, sink: &Sink) -> Result<(), CliError> {
    let mc = a.mc.settings();
    let base = reference_params(0.01).ctx("model_core", "reference parameters")?;
    let mut meta = Meta::new("reproduce table1", Some(mc.seed), json!(base.raw()));
    meta.note("mc", json!(mc));
    meta.note("mc_up_to", a.mc_up_to);
    let rows = run_table1(&base, &a.betas, &mc, a.mc_up_to).ctx("reproduce", "table1")?;
    let mut data = format!("beta,th_k1,th_k2,th_skew,th_kurt,{}\n", prefixed("mc"));
    for r in &rows {
        let t = &r.theory;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:e}"));
        writeln!(
            data,
            "{},{:e},{:e},{},{},{}",
            r.beta,
            t.k1,
            t.k2,
            opt(t.skew),
            opt(t.kurt),
            mc_cells(r.mc.as_ref())
        )
        .ctx("cli", "format artifact")?;
    }
    sink.csv("table1", &meta, &data)
}

pub fn table2(a: Table2Args, sink: &Sink) -> Result<(), CliError> {
    let mc = a.mc.settings();
    let params = reference_params(a.beta).ctx("model_core", "reference parameters")?;
    let mut meta = Meta::new("reproduce table2", Some(mc.seed), json!(params.raw()));
    meta.note("mc", json!(mc));
    meta.note("beta", a.beta);
    let rows = run_table2(&params, &a.horizons, &mc).ctx("reproduce", "table2")?;
    let mut data = format!("horizon,{},{}\n", prefixed("exp"), prefixed("lin"));
    for r in &rows {
        writeln!(
            data,
            "{},{},{}",
            r.horizon,
            mc_cells(Some(&r.exponential)),
            mc_cells(Some(&r.linear))
        )
        .ctx("cli", "format artifact")?;
    }
    sink.csv("table2", &meta, &data)
}

/// Synthetic series used when no input is given.
pub const TABLE3_SPEC: SyntheticSpec = SyntheticSpec {
    mu: 0.074,
    m_bar: 0.145,
    beta: 0.11,
    alpha: 30.0,
    rho: -0.5,
};

pub fn table3(a: Table3Args, sink: &Sink) -> Result<(), CliError> {
    let (series, source) = match &a.input {
        Some(path) => (
            PriceSeries::from_csv_path(path).ctx("calibration", "read series")?,
            json!({ "input": path.display().to_string() }),
        ),
        None => (
            synthetic_series(&TABLE3_SPEC, a.days, a.series_seed).ctx("calibration", "synthetic series")?,
            json!({ "synthetic": TABLE3_SPEC, "days": a.days, "series_seed": a.series_seed }),
        ),
    };
    calibrate_series("reproduce table3", &series, &a.options, vec![("source", source)], sink)
}

pub fn fig_density(a: FigDensityArgs, sink: &Sink) -> Result<(), CliError> {
    let mc = McSettings {
        paths: a.paths,
        dt: a.dt,
        seed: a.seed,
        confidence: 0.95,
    };
    let base = reference_params(0.01).ctx("model_core", "reference parameters")?;
    let params = with_beta(&base, a.beta).ctx("model_core", "validate")?;
    let grid = FrequencyGrid::new(a.phi_max, a.n).ctx("inversion", "frequency grid")?;
    let mut meta = Meta::new("reproduce fig-density", Some(a.seed), json!(params.raw()));
    meta.note("mc", json!(mc));
    meta.note("grid", json!(grid));
    let cmp = density_comparison(&params, a.t, &mc, grid).ctx("reproduce", "density comparison")?;
    meta.note("normalization", cmp.normalization);
    let mut data = String::from("bin_lo,bin_hi,count,mc_density,cf_density,se,z\n");
    for b in &cmp.bins {
        writeln!(
            data,
            "{:e},{:e},{},{:e},{:e},{:e},{}",
            b.lo,
            b.hi,
            b.count,
            b.mc_density,
            b.cf_density,
            b.se,
            b.z_score().map_or_else(String::new, |z| format!("{z:e}"))
        )
        .ctx("cli", "format artifact")?;
    }
    sink.csv("fig-density", &meta, &data)
}

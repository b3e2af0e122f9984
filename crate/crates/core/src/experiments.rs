//! Monte Carlo study on the recharge-rate system: random game generation,
//! sweeps over (T, W, seed), aggregation, and CSV/SVG output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixtures::recharge_game;
use crate::game::GameSpec;
use crate::linalg::Tolerances;
use crate::online::{compute_tracking_gain, log_rel_pou, run_online};
use crate::potential::{check_assumptions, AssumptionId, AssumptionMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uniform {
    pub low: f64,
    pub high: f64,
}

impl Uniform {
    pub const fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    fn at(&self, unit: f64) -> f64 {
        self.low + (self.high - self.low) * unit
    }
}

/// How a draw from `d_dist` becomes the coupling weight dₜ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DConvention {
    /// dₜ is the drawn value itself.
    #[default]
    Literal,
    /// dₜ is the absolute value of the draw.
    Magnitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub a: f64,
    pub b1: f64,
    pub b2: f64,
    #[serde(rename = "T_range")]
    pub t_range: Vec<usize>,
    #[serde(rename = "W_range")]
    pub w_range: Vec<usize>,
    pub runs: usize,
    pub seed: u64,
    pub beta_dist: Uniform,
    pub l_dist: Uniform,
    pub d_dist: Uniform,
    pub d_convention: DConvention,
    pub assumption_mode: AssumptionMode,
    pub x1: [f64; 2],
    /// Reuse the stage-1 draws at every stage.
    pub time_invariant: bool,
}

impl Default for ExperimentConfig {
    /// a = 1.6, b = (0.85, 0.89), β, l ~ U[10, 110], d ~ U[−110, −10],
    /// T = 20, W = 0..6, 100 runs, x̄₁ = (1, 1), warn mode.
    fn default() -> Self {
        Self {
            a: crate::fixtures::RECHARGE_A,
            b1: crate::fixtures::RECHARGE_B1,
            b2: crate::fixtures::RECHARGE_B2,
            t_range: vec![20],
            w_range: (0..=6).collect(),
            runs: 100,
            seed: 0,
            beta_dist: Uniform::new(10.0, 110.0),
            l_dist: Uniform::new(10.0, 110.0),
            d_dist: Uniform::new(-110.0, -10.0),
            d_convention: DConvention::Literal,
            assumption_mode: AssumptionMode::Warn,
            x1: [1.0, 1.0],
            time_invariant: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.t_range.is_empty() || self.w_range.is_empty() {
            return bad("T_range and W_range must be non-empty".into());
        }
        if let Some(t) = self.t_range.iter().find(|&&t| t < 2) {
            return bad(format!("horizon {t} is below 2"));
        }
        for (name, u) in [("beta_dist", self.beta_dist), ("l_dist", self.l_dist), ("d_dist", self.d_dist)] {
            if !(u.low.is_finite() && u.high.is_finite() && u.low < u.high) {
                return bad(format!("{name} needs finite low < high, got [{}, {}]", u.low, u.high));
            }
        }
        if self.beta_dist.low <= 0.0 {
            return bad("beta_dist must be positive".into());
        }
        if ![self.a, self.b1, self.b2, self.x1[0], self.x1[1]].iter().all(|v| v.is_finite()) {
            return bad("system parameters must be finite".into());
        }
        Ok(())
    }
}

const TAG_BETA: u64 = 1;
const TAG_L: u64 = 2;
const TAG_D: u64 = 3;

/// `count` draws for one field. The k-th draw depends only on
/// (seed, tag, k), so longer horizons extend shorter ones.
fn field_draws(seed: u64, tag: u64, dist: Uniform, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng.set_word_pos(0);
    (0..count)
        .map(|_| dist.at((rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)))
        .collect()
}

/// Random recharge-rate game of horizon T: per stage t = 1..T−1,
/// βₜ, lₜ, dₜ are drawn independently; r_i = b_i²/βₜ and
/// Q_{t+1} = [[lₜ, −dₜ], [−dₜ, 0]].
pub fn generate_game(config: &ExperimentConfig, horizon: usize, seed: u64) -> Result<GameSpec> {
    config.validate()?;
    if horizon < 2 {
        return Err(Error::InvalidConfig(format!("horizon {horizon} is below 2")));
    }
    let stages = horizon - 1;
    let draws = if config.time_invariant { 1 } else { stages };
    let expand = |v: Vec<f64>| -> Vec<f64> {
        if config.time_invariant {
            vec![v[0]; stages]
        } else {
            v
        }
    };
    let beta = expand(field_draws(seed, TAG_BETA, config.beta_dist, draws));
    let l = expand(field_draws(seed, TAG_L, config.l_dist, draws));
    let mut d = expand(field_draws(seed, TAG_D, config.d_dist, draws));
    if config.d_convention == DConvention::Magnitude {
        d.iter_mut().for_each(|v| *v = v.abs());
    }
    Ok(recharge_game(config.a, config.b1, config.b2, &beta, &l, &d, config.x1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "W")]
    pub w: usize,
    pub seed: u64,
    pub pou: Option<f64>,
    pub nash_social_cost: Option<f64>,
    pub log_rel_pou: Option<f64>,
    /// Error code when the cell failed; such rows carry no metrics.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "W")]
    pub w: usize,
    pub mean_pou: Option<f64>,
    pub mean_nash_cost: Option<f64>,
    /// ln |mean_pou / mean_nash_cost|.
    pub log_rel_pou: Option<f64>,
    pub valid_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub aggregates: Vec<AggregateRow>,
    /// Number of generated games failing each assumption.
    pub assumption_warnings: BTreeMap<AssumptionId, usize>,
}

struct CellOutcome {
    rows: Vec<SweepRow>,
    failed: Vec<AssumptionId>,
}

fn failed_row(t: usize, w: usize, seed: u64, err: &Error) -> SweepRow {
    SweepRow {
        t,
        w,
        seed,
        pou: None,
        nash_social_cost: None,
        log_rel_pou: None,
        error: Some(err.code().to_string()),
    }
}

fn run_cell(config: &ExperimentConfig, horizon: usize, seed: u64, tol: &Tolerances) -> CellOutcome {
    let fail_all = |err: &Error, failed: Vec<AssumptionId>| CellOutcome {
        rows: config.w_range.iter().map(|&w| failed_row(horizon, w, seed, err)).collect(),
        failed,
    };
    let spec = match generate_game(config, horizon, seed) {
        Ok(s) => s,
        Err(e) => return fail_all(&e, Vec::new()),
    };
    let failed = match check_assumptions(&spec, AssumptionMode::Warn, tol) {
        Ok(report) => report.failures().map(|e| e.id).collect::<Vec<_>>(),
        Err(e) => return fail_all(&e, Vec::new()),
    };
    if config.assumption_mode == AssumptionMode::Strict && !failed.is_empty() {
        let err = Error::AssumptionViolated {
            id: failed[0],
            detail: String::new(),
        };
        return fail_all(&err, failed);
    }
    let gain = match compute_tracking_gain(&spec, tol) {
        Ok(g) => g.gain,
        Err(e) => return fail_all(&e, failed),
    };
    let rows = config
        .w_range
        .iter()
        .map(|&w| match run_online(&spec, w, Some(&gain), tol) {
            Ok(run) => SweepRow {
                t: horizon,
                w,
                seed,
                pou: Some(run.pou),
                nash_social_cost: Some(run.nash_cost_avg),
                log_rel_pou: run.log_rel_pou,
                error: None,
            },
            Err(e) => failed_row(horizon, w, seed, &e),
        })
        .collect();
    CellOutcome { rows, failed }
}

/// Runs every (T, run) game against every W. Run r uses seed
/// `config.seed + r`, so the same games are compared across W. Failing
/// cells produce flagged rows and never abort the sweep.
pub fn sweep(config: &ExperimentConfig, tol: &Tolerances) -> Result<SweepResult> {
    config.validate()?;
    let cells: Vec<(usize, u64)> = config
        .t_range
        .iter()
        .flat_map(|&t| (0..config.runs as u64).map(move |r| (t, config.seed.wrapping_add(r))))
        .collect();
    let outcomes: Vec<CellOutcome> = cells
        .par_iter()
        .map(|&(t, seed)| run_cell(config, t, seed, tol))
        .collect();

    let mut warnings = BTreeMap::new();
    let mut rows = Vec::with_capacity(cells.len() * config.w_range.len());
    for outcome in outcomes {
        for id in outcome.failed {
            *warnings.entry(id).or_insert(0) += 1;
        }
        rows.extend(outcome.rows);
    }
    rows.sort_by_key(|r| (r.t, r.w, r.seed));
    rows.dedup_by_key(|r| (r.t, r.w, r.seed));
    Ok(SweepResult {
        aggregates: aggregate(&rows),
        rows,
        assumption_warnings: warnings,
    })
}

/// Per (T, W): mean PoU and mean Nash cost over the successful runs, then
/// the log of their ratio.
pub fn aggregate(rows: &[SweepRow]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(usize, usize), (f64, f64, usize)> = BTreeMap::new();
    for r in rows {
        let entry = groups.entry((r.t, r.w)).or_insert((0.0, 0.0, 0));
        if let (Some(p), Some(c)) = (r.pou, r.nash_social_cost) {
            entry.0 += p;
            entry.1 += c;
            entry.2 += 1;
        }
    }
    groups
        .into_iter()
        .map(|((t, w), (sp, sc, k))| {
            let (mean_pou, mean_nash_cost) = if k > 0 {
                (Some(sp / k as f64), Some(sc / k as f64))
            } else {
                (None, None)
            };
            let log_rel = match (mean_pou, mean_nash_cost) {
                (Some(p), Some(c)) => log_rel_pou(p, c).ok().flatten(),
                _ => None,
            };
            AggregateRow {
                t,
                w,
                mean_pou,
                mean_nash_cost,
                log_rel_pou: log_rel,
                valid_runs: k,
            }
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::InvalidConfig(format!("not a number: {s:?}")))
}

pub const ROWS_HEADER: [&str; 6] = ["T", "W", "seed", "pou", "nash_social_cost", "log_rel_pou"];
pub const AGG_HEADER: [&str; 5] = ["T", "W", "mean_pou", "mean_nash_cost", "log_rel_pou"];

pub fn write_rows_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ROWS_HEADER)?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.w.to_string(),
            r.seed.to_string(),
            fmt_opt(r.pou),
            fmt_opt(r.nash_social_cost),
            fmt_opt(r.log_rel_pou),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate_csv(aggs: &[AggregateRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(AGG_HEADER)?;
    for a in aggs {
        w.write_record([
            a.t.to_string(),
            a.w.to_string(),
            fmt_opt(a.mean_pou),
            fmt_opt(a.mean_nash_cost),
            fmt_opt(a.log_rel_pou),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `rows.csv` and `agg.csv` into `dir`, creating it if needed.
pub fn emit_csv(result: &SweepResult, dir: &Path) -> Result<()> {
    if result.rows.is_empty() {
        return Err(Error::EmptyAggregate);
    }
    fs::create_dir_all(dir)?;
    write_rows_csv(&result.rows, &dir.join("rows.csv"))?;
    write_aggregate_csv(&result.aggregates, &dir.join("agg.csv"))
}

/// Reads an aggregate CSV as written by `write_aggregate_csv`.
pub fn read_aggregate_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != AGG_HEADER {
        return Err(Error::InvalidConfig(format!("unexpected aggregate header {header:?}")));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let rec = record?;
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::InvalidConfig(format!("not an integer: {s:?}")))
        };
        let mean_pou = parse_opt(&rec[2])?;
        out.push(AggregateRow {
            t: int(&rec[0])?,
            w: int(&rec[1])?,
            mean_pou,
            mean_nash_cost: parse_opt(&rec[3])?,
            log_rel_pou: parse_opt(&rec[4])?,
            valid_runs: usize::from(mean_pou.is_some()),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlotAxis {
    T,
    W,
}

impl std::str::FromStr for PlotAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T" | "t" => Ok(PlotAxis::T),
            "W" | "w" => Ok(PlotAxis::W),
            other => Err(Error::InvalidConfig(format!("plot axis must be T or W, got {other:?}"))),
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// SVG line chart of log relative PoU against `axis`, one series per value
/// of the other variable. Points without a value are skipped.
pub fn render_plot(aggs: &[AggregateRow], axis: PlotAxis) -> Result<String> {
    let mut series: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for a in aggs {
        let Some(y) = a.log_rel_pou else { continue };
        let (x, key) = match axis {
            PlotAxis::T => (a.t, a.w),
            PlotAxis::W => (a.w, a.t),
        };
        series.entry(key).or_default().push((x as f64, y));
    }
    if series.is_empty() {
        return Err(Error::EmptyAggregate);
    }
    for pts in series.values_mut() {
        pts.sort_by(|p, q| p.0.total_cmp(&q.0));
    }
    let all = series.values().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x1 - x0 < 1.0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-9 {
        y0 -= 0.5;
        y1 += 0.5;
    }

    let (width, height) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 120.0, 20.0, 50.0);
    let pw = width - left - right;
    let ph = height - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (y1 - y) / (y1 - y0) * ph;
    let (xname, kname) = match axis {
        PlotAxis::T => ("T", "W"),
        PlotAxis::W => ("W", "T"),
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        top + ph,
        left + pw,
        top + ph
    );
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, top + ph);
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            sx(fx),
            top + ph + 18.0,
            trim_tick(fx)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            sy(fy) + 4.0,
            trim_tick(fy)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xname}</text>"#,
        left + pw / 2.0,
        height - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">log relative PoU</text>"#,
        top + ph / 2.0,
        top + ph / 2.0
    );
    for (idx, (key, pts)) in series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        for &(x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = top + 14.0 + 16.0 * idx as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" fill="{color}">{kname} = {key}</text>"#,
            left + pw + 12.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn trim_tick(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn emit_plot(aggs: &[AggregateRow], axis: PlotAxis, path: &Path) -> Result<()> {
    let svg = render_plot(aggs, axis)?;
    fs::write(path, svg)?;
    Ok(())
}

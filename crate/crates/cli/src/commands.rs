use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wgcorr::analysis::{AxisKind, GridCell, SweepGrid};
use wgcorr::correlations::{g_clean, Evaluator};
use wgcorr::model::config_hash;
use wgcorr::montecarlo::{run, McConfig, PaEstimate, PdfEstimate};
use wgcorr::nppb::{enumerate_manifold, find_seed_solution};
use wgcorr::selfcheck::{run_selfcheck, SelfCheckOptions};
use wgcorr::timedomain::{evolve, g_at_time};
use wgcorr::{ChainConfig, Channel, CorrelationValue};

use crate::config::{ConfigError, Quantity, RunConfig, SweepPlan};
use crate::{CliError, Common};

type Result<T> = std::result::Result<T, CliError>;

/// Loaded configuration with command-line overrides applied, plus the hash
/// that goes into every output header.
struct Prepared {
    cfg: RunConfig,
    hash: String,
    out: Option<PathBuf>,
}

fn prepare(common: &Common) -> Result<Prepared> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    cfg.apply_overrides(common.seed, common.realizations);
    let out = common.out.clone().or_else(|| cfg.out.take());
    let hash = config_hash(&cfg);
    Ok(Prepared { cfg, hash, out })
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(fs::File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn fmt_value(v: CorrelationValue) -> String {
    match v {
        CorrelationValue::Finite(x) => format!("{x:.11e}"),
        CorrelationValue::Divergent => "inf".into(),
    }
}

fn checked_detunings(cfg: &RunConfig) -> Result<Vec<f64>> {
    let d = cfg.detunings();
    if d.len() != cfg.chain.n_qubits {
        return Err(ConfigError::Invalid(format!(
            "{} detunings given for {} qubits",
            d.len(),
            cfg.chain.n_qubits
        ))
        .into());
    }
    Ok(d)
}

pub fn eval(common: &Common) -> Result<()> {
    let p = prepare(common)?;
    let d = checked_detunings(&p.cfg)?;
    let mut ev = Evaluator::new(&p.cfg.chain)?;
    let (gt, gr) = ev.g_both(&d)?;
    let mut w = sink(p.out.as_deref())?;
    writeln!(w, "# config_hash={}", p.hash)?;
    writeln!(w, "g_t = {}", fmt_value(gt))?;
    if let Some(gr) = gr {
        writeln!(w, "g_r = {}", fmt_value(gr))?;
    }
    w.flush()?;
    if common.strict && (gt.is_divergent() || gr.is_some_and(|g| g.is_divergent())) {
        return Err(CliError::Divergent);
    }
    Ok(())
}

pub fn pdf(common: &Common) -> Result<()> {
    let p = prepare(common)?;
    let r = run(&p.cfg.chain, &p.cfg.mc()?)?;
    let mut w = sink(p.out.as_deref())?;
    writeln!(w, "{}", r.pdf.to_json())?;
    w.flush()?;
    if common.strict && r.pdf.divergent > 0 {
        return Err(CliError::Divergent);
    }
    Ok(())
}

#[derive(Serialize)]
struct PaReport {
    config_hash: String,
    #[serde(flatten)]
    estimate: PaEstimate,
}

pub fn pa(common: &Common) -> Result<()> {
    let p = prepare(common)?;
    let r = run(&p.cfg.chain, &p.cfg.mc()?)?;
    let report = PaReport {
        config_hash: p.hash,
        estimate: r.pa(),
    };
    let mut w = sink(p.out.as_deref())?;
    serde_json::to_writer(&mut w, &report).map_err(wgcorr::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    if common.strict && report.estimate.divergent > 0 {
        return Err(CliError::Divergent);
    }
    Ok(())
}

pub fn nppb(common: &Common) -> Result<()> {
    let p = prepare(common)?;
    let m = p.cfg.manifold.clone().ok_or(ConfigError::Missing("manifold"))?;
    let seed = find_seed_solution(&p.cfg.chain, &m)?;
    let set = enumerate_manifold(&p.cfg.chain, &m, &seed)?;
    let mut w = sink(p.out.as_deref())?;
    writeln!(w, "# config_hash={}", p.hash)?;
    set.write_jsonl(&mut w)?;
    w.flush()?;
    eprintln!("{} solutions, {} boundary hits", set.len(), set.boundary_hits);
    Ok(())
}

pub fn timedomain(common: &Common) -> Result<()> {
    let p = prepare(common)?;
    let pulse = p.cfg.pulse.clone().ok_or(ConfigError::Missing("pulse"))?;
    let d = checked_detunings(&p.cfg)?;
    let traj = evolve(&p.cfg.chain, &d, &pulse)?;
    let mut w = sink(p.out.as_deref())?;
    traj.write_csv(&p.cfg.chain, &pulse, &format!("config_hash={}", p.hash), &mut w)?;
    w.flush()?;
    let tau = p.cfg.tau.unwrap_or(pulse.t0);
    if traj.index_of(tau).is_ok() {
        let mut divergent = false;
        for ch in channels(&p.cfg.chain) {
            let g = g_at_time(&p.cfg.chain, &traj, tau, ch, &pulse)?;
            divergent |= g.is_divergent();
            eprintln!("{}(τ={tau}) = {}", channel_name(ch), fmt_value(g));
        }
        if common.strict && divergent {
            return Err(CliError::Divergent);
        }
    }
    Ok(())
}

pub fn selfcheck(common: &Common, perturb_phase: bool) -> Result<()> {
    let mut opts = SelfCheckOptions {
        perturb_phase,
        ..SelfCheckOptions::default()
    };
    if let Some(s) = common.seed {
        opts.seed = s;
    }
    let results = run_selfcheck(&opts);
    let mut w = sink(common.out.as_deref())?;
    let mut failed = 0;
    for r in &results {
        if !r.passed {
            failed += 1;
        }
        writeln!(w, "{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail)?;
    }
    w.flush()?;
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(())
}

fn channels(cfg: &ChainConfig) -> Vec<Channel> {
    if cfg.gamma_r > 0.0 {
        vec![Channel::Transmission, Channel::Reflection]
    } else {
        vec![Channel::Transmission]
    }
}

fn channel_name(ch: Channel) -> &'static str {
    match ch {
        Channel::Transmission => "g_t",
        Channel::Reflection => "g_r",
    }
}

/// Chain and Monte Carlo settings of one grid cell.
fn cell_setup(base: &RunConfig, plan: &SweepPlan, coords: &[f64]) -> Result<(ChainConfig, Option<McConfig>)> {
    let mut chain = base.chain;
    let mut mc = base.mc;
    for (axis, &v) in plan.axes.iter().zip(coords) {
        match axis.kind {
            AxisKind::N => {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(ConfigError::Invalid(format!("chain length {v} is not a positive integer")).into());
                }
                chain.n_qubits = v as usize;
            }
            AxisKind::Phi => chain.phase = v,
            AxisKind::W => mc.as_mut().ok_or(ConfigError::Missing("mc"))?.disorder_std = v,
            AxisKind::GammaNw => chain.gamma_nw = v,
            AxisKind::Alpha => {
                let gamma = chain.gamma_t + chain.gamma_r;
                chain.gamma_t = gamma / (1.0 + v);
                chain.gamma_r = gamma * v / (1.0 + v);
            }
        }
    }
    Ok((chain, mc))
}

/// Histogram density over the bins inside [a, b) with its Poisson error.
fn density_with_error(pdf: &PdfEstimate, a: f64, b: f64) -> (f64, f64) {
    let value = pdf.mean_density(a, b);
    let count: u64 = (0..pdf.nbins())
        .filter(|&i| pdf.edges[i] >= a * (1.0 - 1e-12) && pdf.edges[i + 1] <= b * (1.0 + 1e-12))
        .map(|i| pdf.counts[i])
        .sum();
    let err = if count > 0 { value / (count as f64).sqrt() } else { 0.0 };
    (value, err)
}

fn evaluate_cell(base: &RunConfig, plan: &SweepPlan, coords: &[f64]) -> Result<GridCell> {
    let (chain, mc) = cell_setup(base, plan, coords)?;
    if plan.quantity == Quantity::GClean {
        let ch = mc.map_or(Channel::Transmission, |m| m.channel);
        return Ok(GridCell {
            value: g_clean(&chain, ch)?.as_f64(),
            stderr: None,
            realizations: 0,
            seed: 0,
        });
    }
    let mc = mc.ok_or(ConfigError::Missing("mc"))?;
    let r = run(&chain, &mc)?;
    let (value, stderr) = match plan.quantity {
        Quantity::Pa => {
            let e = r.pa();
            (e.probability, e.std_error)
        }
        Quantity::Density => {
            let s0 = plan.s0.ok_or(ConfigError::Missing("sweep.s0"))?;
            let i = r
                .pdf
                .bin_of(s0)
                .ok_or_else(|| ConfigError::Invalid(format!("s0 = {s0} lies outside the histogram range")))?;
            density_with_error(&r.pdf, r.pdf.edges[i], r.pdf.edges[i + 1])
        }
        Quantity::DecadeDensity => {
            let s0 = plan.s0.ok_or(ConfigError::Missing("sweep.s0"))?;
            let h = 10f64.sqrt();
            density_with_error(&r.pdf, s0 / h, s0 * h)
        }
        Quantity::GClean => unreachable!(),
    };
    Ok(GridCell {
        value,
        stderr: Some(stderr),
        realizations: mc.realizations,
        seed: mc.seed,
    })
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    config_hash: String,
    cell: GridCell,
}

fn checkpoint_dir(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".cells");
    out.with_file_name(name)
}

fn load_checkpoint(path: &Path, hash: &str) -> Option<GridCell> {
    let text = fs::read_to_string(path).ok()?;
    let c: Checkpoint = serde_json::from_str(&text).ok()?;
    (c.config_hash == hash).then_some(c.cell)
}

fn store_checkpoint(path: &Path, hash: &str, cell: GridCell) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let body = serde_json::to_string(&Checkpoint {
        config_hash: hash.into(),
        cell,
    })
    .map_err(wgcorr::Error::from)?;
    fs::write(&tmp, body)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Cells are evaluated in row-major order. With `--out`, each finished cell
/// is stored next to the output so an interrupted sweep resumes where it
/// stopped.
pub fn sweep(common: &Common) -> Result<()> {
    let p = prepare(common)?;
    let plan = p.cfg.sweep.clone().ok_or(ConfigError::Missing("sweep"))?;
    if plan.axes.is_empty() || plan.axes.iter().any(|a| a.values.is_empty()) {
        return Err(ConfigError::Invalid("every sweep axis needs at least one value".into()).into());
    }
    let mut grid = SweepGrid::new(plan.axes.clone(), plan.quantity.name(), p.hash.clone());
    let dir = p.out.as_deref().map(checkpoint_dir);
    if let Some(d) = &dir {
        fs::create_dir_all(d)?;
    }
    let total: usize = plan.axes.iter().map(|a| a.values.len()).product();
    for k in 0..total {
        let file = dir.as_ref().map(|d| d.join(format!("{k}.json")));
        if let Some(cell) = file.as_deref().and_then(|f| load_checkpoint(f, &p.hash)) {
            grid.cells.push(cell);
            continue;
        }
        let coords = grid.coords(k);
        let cell = evaluate_cell(&p.cfg, &plan, &coords)?;
        if let Some(f) = &file {
            store_checkpoint(f, &p.hash, cell)?;
        }
        grid.cells.push(cell);
    }
    let mut w = sink(p.out.as_deref())?;
    grid.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

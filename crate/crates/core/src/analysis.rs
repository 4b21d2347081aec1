//! Post-processing: distances between histograms, state fidelities,
//! power-law fits and sweep grids.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::correlations::TruncatedSteadyState;
use crate::error::{Error, Result};
use crate::hamiltonian::inner;
use crate::linalg::norm2;
use crate::montecarlo::PdfEstimate;

/// ½ Σ (√p_i − √q_i)² over bin masses, including the underflow, overflow,
/// divergent and discarded cells.
pub fn hellinger(p: &PdfEstimate, q: &PdfEstimate) -> Result<f64> {
    if !p.same_binning(q) {
        return Err(Error::BinningMismatch);
    }
    let (a, b) = (p.masses(), q.masses());
    let h: f64 = a.iter().zip(&b).map(|(x, y)| (x.sqrt() - y.sqrt()).powi(2)).sum();
    Ok((0.5 * h).clamp(0.0, 1.0))
}

/// Normalized overlaps |⟨ψ̃|ψ⟩| / (‖ψ̃‖‖ψ‖) of the one- and two-excitation
/// amplitudes.
pub fn fidelity_pair(exact: &TruncatedSteadyState, approx: &TruncatedSteadyState) -> Result<(f64, f64)> {
    let f = |a: &[_], b: &[_]| -> Result<f64> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                actual: b.len(),
            });
        }
        let (na, nb) = (norm2(a), norm2(b));
        if !(na > 0.0) || !(nb > 0.0) {
            return Err(Error::ZeroState);
        }
        Ok((inner(b, a).norm() / (na * nb)).min(1.0))
    };
    let f1 = f(&exact.psi1, &approx.psi1)?;
    let f2 = if exact.psi2.is_empty() && approx.psi2.is_empty() {
        1.0
    } else {
        f(&exact.psi2, &approx.psi2)?
    };
    Ok((f1, f2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateData("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok((slope, intercept, r2))
}

/// Least squares of ln y on ln x: y ≈ prefactor · x^exponent.
pub fn powerlaw_fit(xs: &[f64], ys: &[f64]) -> Result<PowerLawFit> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::DegenerateData(format!("{} points, need at least 3", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::DegenerateData("power-law fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (slope, intercept, r2) = linear_fit(&lx, &ly)?;
    Ok(PowerLawFit {
        exponent: slope,
        prefactor: intercept.exp(),
        r_squared: r2,
    })
}

/// Fit of y ≈ 1 − a·N^{−b} through ln(1 − y) on ln N; points with y ≥ 1
/// are dropped. Returns (a, b, r²).
pub fn saturating_fit(ns: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let (xs, zs): (Vec<f64>, Vec<f64>) = ns
        .iter()
        .zip(ys)
        .filter(|(_, &y)| y < 1.0)
        .map(|(&n, &y)| (n, 1.0 - y))
        .unzip();
    let fit = powerlaw_fit(&xs, &zs)?;
    Ok((fit.prefactor, -fit.exponent, fit.r_squared))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    N,
    Phi,
    W,
    GammaNw,
    Alpha,
}

impl AxisKind {
    pub fn name(self) -> &'static str {
        match self {
            AxisKind::N => "n",
            AxisKind::Phi => "phi",
            AxisKind::W => "w",
            AxisKind::GammaNw => "gamma_nw",
            AxisKind::Alpha => "alpha",
        }
    }

    /// Tie-breaking priority in `grid_argmax` (lower first).
    fn tie_rank(self) -> u8 {
        match self {
            AxisKind::Phi => 0,
            AxisKind::W => 1,
            AxisKind::N => 2,
            AxisKind::GammaNw => 3,
            AxisKind::Alpha => 4,
        }
    }
}

impl fmt::Display for AxisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AxisKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "n" => AxisKind::N,
            "phi" => AxisKind::Phi,
            "w" => AxisKind::W,
            "gamma_nw" => AxisKind::GammaNw,
            "alpha" => AxisKind::Alpha,
            other => return Err(Error::Parse(format!("unknown axis {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub kind: AxisKind,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub value: f64,
    /// None for deterministic quantities.
    pub stderr: Option<f64>,
    pub realizations: u64,
    pub seed: u64,
}

/// Rectangular grid of scalar results; cells are stored row-major with the
/// first axis outermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub axes: Vec<Axis>,
    pub quantity: String,
    pub cells: Vec<GridCell>,
    pub config_hash: String,
}

fn fmt12(x: f64) -> String {
    format!("{x:.11e}")
}

impl SweepGrid {
    pub fn new(axes: Vec<Axis>, quantity: impl Into<String>, config_hash: impl Into<String>) -> Self {
        Self {
            axes,
            quantity: quantity.into(),
            cells: Vec::new(),
            config_hash: config_hash.into(),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.values.len()).collect()
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_complete(&self) -> bool {
        self.cells.len() == self.len()
    }

    /// Multi-index of flat cell `k`.
    pub fn multi_index(&self, mut k: usize) -> Vec<usize> {
        let shape = self.shape();
        let mut idx = vec![0; shape.len()];
        for (d, &s) in shape.iter().enumerate().rev() {
            idx[d] = k % s;
            k /= s;
        }
        idx
    }

    pub fn coords(&self, k: usize) -> Vec<f64> {
        self.multi_index(k)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.values[i])
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.iter().any(|a| a.values.is_empty()) {
            return Err(Error::DegenerateData("grid has an empty axis".into()));
        }
        if self.cells.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: self.cells.len(),
            });
        }
        Ok(())
    }

    /// Columns: axes…, value, stderr, K, seed; 12 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# config_hash={}", self.config_hash)?;
        writeln!(w, "# quantity={}", self.quantity)?;
        let mut head: Vec<&str> = self.axes.iter().map(|a| a.kind.name()).collect();
        head.extend(["value", "stderr", "K", "seed"]);
        writeln!(w, "{}", head.join(","))?;
        for (k, c) in self.cells.iter().enumerate() {
            let mut row: Vec<String> = self.coords(k).into_iter().map(fmt12).collect();
            row.push(fmt12(c.value));
            row.push(c.stderr.map(fmt12).unwrap_or_default());
            row.push(c.realizations.to_string());
            row.push(c.seed.to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let mut hash = String::new();
        let mut quantity = String::new();
        let mut header: Option<Vec<String>> = None;
        let mut rows: Vec<Vec<String>> = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(h) = rest.strip_prefix("config_hash=") {
                    hash = h.to_string();
                } else if let Some(q) = rest.strip_prefix("quantity=") {
                    quantity = q.to_string();
                }
                continue;
            }
            let fields: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
            if header.is_none() {
                header = Some(fields);
            } else {
                rows.push(fields);
            }
        }
        let header = header.ok_or_else(|| Error::Parse("missing CSV header".into()))?;
        let naxes = header
            .len()
            .checked_sub(4)
            .ok_or_else(|| Error::Parse("header too short".into()))?;
        if header[naxes..] != ["value", "stderr", "K", "seed"] {
            return Err(Error::Parse("unexpected trailing columns".into()));
        }
        let kinds = header[..naxes]
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<AxisKind>>>()?;
        let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Parse(format!("bad number {s:?}"))) };
        let int = |s: &str| -> Result<u64> { s.parse().map_err(|_| Error::Parse(format!("bad integer {s:?}"))) };
        let mut axes: Vec<Axis> = kinds.iter().map(|&kind| Axis { kind, values: Vec::new() }).collect();
        let mut cells = Vec::with_capacity(rows.len());
        for r in &rows {
            if r.len() != header.len() {
                return Err(Error::Parse(format!("row has {} fields, expected {}", r.len(), header.len())));
            }
            for (a, s) in axes.iter_mut().zip(&r[..naxes]) {
                let v = num(s)?;
                if !a.values.contains(&v) {
                    a.values.push(v);
                }
            }
            cells.push(GridCell {
                value: num(&r[naxes])?,
                stderr: if r[naxes + 1].is_empty() { None } else { Some(num(&r[naxes + 1])?) },
                realizations: int(&r[naxes + 2])?,
                seed: int(&r[naxes + 3])?,
            });
        }
        let grid = SweepGrid {
            axes,
            quantity,
            cells,
            config_hash: hash,
        };
        grid.validate()?;
        for (k, r) in rows.iter().enumerate() {
            let c = grid.coords(k);
            for (d, s) in r[..naxes].iter().enumerate() {
                if num(s)? != c[d] {
                    return Err(Error::Parse("rows are not in row-major grid order".into()));
                }
            }
        }
        Ok(grid)
    }
}

/// Coordinates and value of the largest cell. Ties go to the smaller φ,
/// then the smaller W, then the remaining axes in ascending order.
pub fn grid_argmax(grid: &SweepGrid) -> Result<(Vec<f64>, f64)> {
    grid.validate()?;
    let mut order: Vec<usize> = (0..grid.axes.len()).collect();
    order.sort_by_key(|&d| (grid.axes[d].kind.tie_rank(), d));
    let key = |k: usize| -> Vec<f64> {
        let c = grid.coords(k);
        order.iter().map(|&d| c[d]).collect()
    };
    let mut best = 0;
    for k in 1..grid.cells.len() {
        let (v, b) = (grid.cells[k].value, grid.cells[best].value);
        if v > b || (v == b && key(k) < key(best)) || b.is_nan() {
            best = k;
        }
    }
    Ok((grid.coords(best), grid.cells[best].value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CorrelationValue;
    use num_complex::Complex64 as C64;

    fn point_mass(s: f64) -> PdfEstimate {
        let mut p = PdfEstimate::empty("x".into());
        p.record(CorrelationValue::Finite(s));
        p
    }

    #[test]
    fn hellinger_extremes() {
        let p = point_mass(0.5);
        assert_eq!(hellinger(&p, &p).unwrap(), 0.0);
        assert!((hellinger(&p, &point_mass(50.0)).unwrap() - 1.0).abs() < 1e-15);
        let q = PdfEstimate::with_binning(-3, 3, 10, "x".into());
        assert!(matches!(hellinger(&p, &q), Err(Error::BinningMismatch)));
    }

    #[test]
    fn fidelity_scale_invariant() {
        let s = TruncatedSteadyState {
            psi1: vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.1)],
            psi2: vec![C64::new(0.3, -0.2)],
        };
        let mut t = s.clone();
        t.psi1.iter_mut().chain(t.psi2.iter_mut()).for_each(|z| *z *= 3.0);
        let (f1, f2) = fidelity_pair(&s, &t).unwrap();
        assert!((f1 - 1.0).abs() < 1e-15 && (f2 - 1.0).abs() < 1e-15);
        t.psi2[0] = C64::new(0.0, 0.0);
        assert!(matches!(fidelity_pair(&s, &t), Err(Error::ZeroState)));
    }

    #[test]
    fn power_law_exact() {
        let xs = [1.0, 2.0, 3.0, 5.0];
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let f = powerlaw_fit(&xs, &ys).unwrap();
        assert!((f.exponent - 2.0).abs() < 1e-12);
        assert!((f.prefactor - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!(matches!(powerlaw_fit(&xs[..2], &ys[..2]), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn saturating_fit_recovers_constants() {
        let ns = [4.0, 8.0, 12.0, 16.0, 20.0];
        let mut ys: Vec<f64> = ns.iter().map(|n: &f64| 1.0 - 0.97 * n.powf(-1.0 / 40.0)).collect();
        ys.push(1.2);
        let mut ns = ns.to_vec();
        ns.push(30.0);
        let (a, b, r2) = saturating_fit(&ns, &ys).unwrap();
        assert!((a - 0.97).abs() < 1e-10 && (b - 1.0 / 40.0).abs() < 1e-10 && r2 > 1.0 - 1e-10);
    }

    fn grid() -> SweepGrid {
        let mut g = SweepGrid::new(
            vec![
                Axis { kind: AxisKind::W, values: vec![0.5, 1.0] },
                Axis { kind: AxisKind::Phi, values: vec![0.1, 0.2, 0.3] },
            ],
            "pa",
            "abc",
        );
        for k in 0..6 {
            g.cells.push(GridCell {
                value: [0.1, 0.7, 0.7, 0.2, 0.7, 0.3][k],
                stderr: Some(0.01 / (k + 1) as f64),
                realizations: 1000,
                seed: 7,
            });
        }
        g
    }

    #[test]
    fn argmax_breaks_ties_towards_small_phase_then_small_w() {
        let (c, v) = grid_argmax(&grid()).unwrap();
        assert_eq!(v, 0.7);
        // Candidates (w, φ): (0.5, 0.2), (0.5, 0.3), (1.0, 0.2).
        assert_eq!(c, vec![0.5, 0.2]);
    }

    #[test]
    fn single_cell_argmax() {
        let mut g = SweepGrid::new(vec![Axis { kind: AxisKind::N, values: vec![3.0] }], "g", "h");
        g.cells.push(GridCell { value: -1.0, stderr: None, realizations: 0, seed: 0 });
        assert_eq!(grid_argmax(&g).unwrap(), (vec![3.0], -1.0));
    }

    #[test]
    fn csv_roundtrip_is_stable() {
        let g = grid();
        let mut a = Vec::new();
        g.write_csv(&mut a).unwrap();
        let back = SweepGrid::read_csv(std::str::from_utf8(&a).unwrap()).unwrap();
        assert_eq!(back.axes, g.axes);
        assert_eq!(back.config_hash, "abc");
        for (x, y) in back.cells.iter().zip(&g.cells) {
            assert!((x.value - y.value).abs() <= 1e-11 * y.value.abs());
            assert_eq!((x.realizations, x.seed), (y.realizations, y.seed));
        }
        let mut b = Vec::new();
        back.write_csv(&mut b).unwrap();
        assert_eq!(a, b);
    }
}

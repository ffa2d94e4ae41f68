use std::fmt;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{Direction, GridDims};
use crate::model::{model_forward, ModelConfig, ModelParams, Variant};
use crate::numerics::Rng;

/// Shortest span timed per repetition; cheap passes are repeated to reach it.
const MIN_REP_SECONDS: f64 = 0.02;
const BENCH_CHANNELS: usize = 3;
const BENCH_CLASSES: usize = 4;

/// Median wall time, in seconds, of one four-direction forward pass on a
/// `side×side` grid (a `1×side²` grid for the chain variant).
pub fn bench_forward(side: usize, variant: Variant, reps: usize, hidden: usize, seed: u64) -> Result<f64> {
    if reps == 0 {
        return Err(Error::invalid("--reps must be >= 1"));
    }
    let dims = if variant == Variant::Chain { GridDims::new(1, side * side)? } else { GridDims::new(side, side)? };
    let config = ModelConfig::new(BENCH_CHANNELS, hidden, BENCH_CLASSES, variant, &Direction::ALL)?;
    let mut rng = Rng::new(seed);
    let params = ModelParams::<f64>::init(&config, &mut rng);
    let data = (0..dims.len() * BENCH_CHANNELS).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let features = Field::from_vec(dims, BENCH_CHANNELS, data)?;

    let start = Instant::now();
    std::hint::black_box(model_forward(&features, &config, &params)?);
    let once = start.elapsed().as_secs_f64().max(1e-9);
    let iters = (MIN_REP_SECONDS / once).ceil().max(1.0) as usize;

    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        for _ in 0..iters {
            std::hint::black_box(model_forward(&features, &config, &params)?);
        }
        times.push(start.elapsed().as_secs_f64() / iters as f64);
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub side: usize,
    pub variant: Variant,
    pub median_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn time(&self, side: usize, variant: Variant) -> Option<f64> {
        self.rows.iter().find(|r| r.side == side && r.variant == variant).map(|r| r.median_seconds)
    }

    /// Time at `to` divided by time at `from` for one variant.
    pub fn growth(&self, variant: Variant, from: usize, to: usize) -> Option<f64> {
        Some(self.time(to, variant)? / self.time(from, variant)?)
    }

    fn sides(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.rows.iter().map(|r| r.side).collect();
        s.dedup();
        s
    }

    fn variants(&self) -> Vec<Variant> {
        let mut v = Vec::new();
        for r in &self.rows {
            if !v.contains(&r.variant) {
                v.push(r.variant);
            }
        }
        v
    }
}

pub fn run_bench(sides: &[usize], variants: &[Variant], reps: usize, hidden: usize, seed: u64) -> Result<BenchReport> {
    if sides.is_empty() || variants.is_empty() {
        return Err(Error::invalid("need at least one size and one variant"));
    }
    let mut report = BenchReport::default();
    for &side in sides {
        for &variant in variants {
            let median_seconds = bench_forward(side, variant, reps, hidden, seed)?;
            report.rows.push(BenchRow { side, variant, median_seconds });
        }
    }
    Ok(report)
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8}{:<18}{:>14}", "grid", "variant", "median_ms")?;
        for r in &self.rows {
            writeln!(f, "{:<8}{:<18}{:>14.4}", format!("{0}x{0}", r.side), r.variant.as_str(), r.median_seconds * 1e3)?;
        }
        let sides = self.sides();
        for v in self.variants() {
            for w in sides.windows(2) {
                if let Some(g) = self.growth(v, w[0], w[1]) {
                    writeln!(f, "growth {} {}x{}/{}x{}: {g:.2}", v.as_str(), w[1], w[1], w[0], w[0])?;
                }
            }
        }
        for &side in &sides {
            if let (Some(d), Some(p)) =
                (self.time(side, Variant::DenseAttention), self.time(side, Variant::PlainDag))
            {
                writeln!(f, "dense/plain {side}x{side}: {:.2}", d / p)?;
            }
        }
        Ok(())
    }
}

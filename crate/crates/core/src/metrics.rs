//! Consistency of area calls within and between arrays.

use std::fmt::Write as _;

use crate::areas::{call_areas, AreaCalls, AreaGrid};
use crate::dataset::{DatasetBundle, BUNDLE_ARRAYS};
use crate::detect::{call_regions, Region};
use crate::error::{Error, Result};
use crate::resample::{
    run_simulation_batch, ProbeSubset, PseudoMode, SimulationBatchResult, SimulationPlan,
};

pub const DEFAULT_TOP_N: usize = 30;
pub const DEFAULT_STABILITY_THRESHOLD: f64 = 0.99;
pub const DEFAULT_SMOOTH_WINDOW: usize = 51;

pub type CallTriple = [AreaCalls; BUNDLE_ARRAYS];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyKind {
    /// Only the top-scoring calls of each one-replicate pseudo-array.
    Top30,
    OneRep,
    /// Half the probes, two replicates each.
    TwoRepHalf,
    /// Median of all replicates per probe.
    MedianTen,
    /// Areas called in nearly every one-replicate simulation of an array.
    Stable99,
    AllTen,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Top30,
        StrategyKind::OneRep,
        StrategyKind::TwoRepHalf,
        StrategyKind::MedianTen,
        StrategyKind::Stable99,
        StrategyKind::AllTen,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Top30 => "top30",
            StrategyKind::OneRep => "one-rep",
            StrategyKind::TwoRepHalf => "two-rep-half",
            StrategyKind::MedianTen => "median-ten",
            StrategyKind::Stable99 => "stable99",
            StrategyKind::AllTen => "all-ten",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown strategy '{name}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopUnit {
    Region,
    Window,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub top_n: usize,
    pub top_unit: TopUnit,
    pub stability_threshold: f64,
    /// Probe half used by `two-rep-half`.
    pub half: ProbeSubset,
}

impl Strategy {
    pub fn new(kind: StrategyKind) -> Self {
        Strategy {
            kind,
            top_n: DEFAULT_TOP_N,
            top_unit: TopUnit::Region,
            stability_threshold: DEFAULT_STABILITY_THRESHOLD,
            half: ProbeSubset::Even,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.top_n == 0 {
            return Err(Error::invalid("top_n must be positive"));
        }
        if !(self.stability_threshold > 0.0 && self.stability_threshold <= 1.0) {
            return Err(Error::invalid("stability threshold must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Simulation plan whose batch this strategy consumes.
    pub fn plan(&self, base: &SimulationPlan, replicates: usize) -> SimulationPlan {
        let (k, mode, subset) = match self.kind {
            StrategyKind::Top30 | StrategyKind::OneRep | StrategyKind::Stable99 => {
                (1, PseudoMode::Spots, ProbeSubset::All)
            }
            StrategyKind::TwoRepHalf => (2.min(replicates), PseudoMode::Spots, self.half),
            StrategyKind::MedianTen => (replicates, PseudoMode::Median, ProbeSubset::All),
            StrategyKind::AllTen => (replicates, PseudoMode::Spots, ProbeSubset::All),
        };
        let keep_top_windows = match (self.kind, self.top_unit) {
            (StrategyKind::Top30, TopUnit::Window) => self.top_n,
            _ => 0,
        };
        SimulationPlan {
            k,
            mode,
            subset,
            keep_top_windows,
            ..base.clone()
        }
    }
}

fn top_regions(regions: &[Region], n: usize) -> Vec<Region> {
    let mut ranked = regions.to_vec();
    ranked.sort_by(|a, b| b.max_score.total_cmp(&a.max_score).then(a.start.cmp(&b.start)));
    ranked.truncate(n);
    ranked.sort_by_key(|r| r.start);
    ranked
}

/// Per-simulation call triples under `strategy`, derived from a batch run
/// with the strategy's plan.
pub fn apply_strategy(strategy: &Strategy, batch: &SimulationBatchResult) -> Result<Vec<CallTriple>> {
    strategy.validate()?;
    let grid = &batch.grid;
    match strategy.kind {
        StrategyKind::OneRep | StrategyKind::TwoRepHalf | StrategyKind::MedianTen | StrategyKind::AllTen => {
            Ok(batch.sims.iter().map(|s| s.arrays.clone().map(|a| a.calls)).collect())
        }
        StrategyKind::Top30 => Ok(batch
            .sims
            .iter()
            .map(|s| {
                s.arrays.clone().map(|a| match strategy.top_unit {
                    TopUnit::Region => call_areas(&top_regions(&a.regions, strategy.top_n), grid),
                    TopUnit::Window => {
                        let mut w = a.top_windows.clone();
                        w.truncate(strategy.top_n);
                        w.sort_by_key(|w| w.start);
                        let regions = call_regions(&w, f64::INFINITY, batch.plan.detect.merge_gap);
                        call_areas(&regions, grid)
                    }
                })
            })
            .collect()),
        StrategyKind::Stable99 => {
            let s = batch.sims.len();
            let mut triple = Vec::with_capacity(BUNDLE_ARRAYS);
            for array in 0..BUNDLE_ARRAYS {
                let freq = selection_frequency(batch, array)?;
                let bits = freq
                    .counts
                    .iter()
                    .map(|&c| c as f64 / s as f64 >= strategy.stability_threshold)
                    .collect();
                triple.push(AreaCalls { grid: *grid, bits });
            }
            let triple: CallTriple = triple
                .try_into()
                .map_err(|_| Error::invalid("expected three arrays"))?;
            Ok(vec![triple; s])
        }
    }
}

/// Per-area count of simulations calling the area on one array.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTrack {
    pub grid: AreaGrid,
    pub counts: Vec<u32>,
    pub sims: usize,
}

pub fn selection_frequency(batch: &SimulationBatchResult, array: usize) -> Result<FrequencyTrack> {
    if array >= BUNDLE_ARRAYS {
        return Err(Error::invalid(format!("array index {array} outside 0..2")));
    }
    if batch.sims.is_empty() {
        return Err(Error::invalid("empty simulation batch"));
    }
    Ok(FrequencyTrack {
        grid: batch.grid,
        counts: frequency_counts(batch.sims.iter().map(|s| &s.arrays[array].calls), batch.grid.len()),
        sims: batch.sims.len(),
    })
}

pub(crate) fn frequency_counts<'a>(calls: impl Iterator<Item = &'a AreaCalls>, n: usize) -> Vec<u32> {
    let mut counts = vec![0u32; n];
    for c in calls {
        for (count, &b) in counts.iter_mut().zip(&c.bits) {
            *count += u32::from(b);
        }
    }
    counts
}

/// Centered moving average; near the ends the window is truncated to the
/// available neighbours.
pub fn smooth_track(counts: &[u32], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::invalid(format!("smoothing window must be odd, got {window}")));
    }
    let half = window / 2;
    let mut prefix = Vec::with_capacity(counts.len() + 1);
    prefix.push(0u64);
    for &c in counts {
        prefix.push(prefix[prefix.len() - 1] + u64::from(c));
    }
    let n = counts.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) as f64 / (hi - lo) as f64
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyRow {
    pub strategy: String,
    /// Mean proportions called on exactly one, two and three arrays.
    pub exactly: [f64; 3],
    /// Per-simulation proportions; `None` when no area was called anywhere.
    pub per_sim: Vec<Option<[f64; 3]>>,
}

impl ConsistencyRow {
    pub fn sims_used(&self) -> usize {
        self.per_sim.iter().filter(|p| p.is_some()).count()
    }

    pub fn sims_empty(&self) -> usize {
        self.per_sim.len() - self.sims_used()
    }

    pub fn is_defined(&self) -> bool {
        self.sims_used() > 0
    }
}

/// Number of areas called on exactly 0, 1, 2 and 3 arrays.
pub fn agreement_counts(triple: &CallTriple) -> [usize; 4] {
    let mut counts = [0usize; 4];
    let n = triple[0].bits.len();
    for a in 0..n {
        let c = triple.iter().filter(|t| t.bits[a]).count();
        counts[c] += 1;
    }
    counts
}

pub fn consistency_row(strategy: &str, triples: &[CallTriple]) -> ConsistencyRow {
    let per_sim: Vec<Option<[f64; 3]>> = triples
        .iter()
        .map(|t| {
            let c = agreement_counts(t);
            let union = c[1] + c[2] + c[3];
            (union > 0).then(|| {
                let u = union as f64;
                [c[1] as f64 / u, c[2] as f64 / u, c[3] as f64 / u]
            })
        })
        .collect();
    let used: Vec<&[f64; 3]> = per_sim.iter().flatten().collect();
    let exactly = if used.is_empty() {
        [f64::NAN; 3]
    } else {
        let mut sum = [0.0; 3];
        for p in &used {
            for j in 0..3 {
                sum[j] += p[j];
            }
        }
        sum.map(|s| s / used.len() as f64)
    };
    ConsistencyRow {
        strategy: strategy.to_string(),
        exactly,
        per_sim,
    }
}

fn fmt_prop(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v:.6}")
    }
}

pub fn table1_tsv(rows: &[ConsistencyRow]) -> String {
    let mut out = String::from("strategy\texactly_one\texactly_two\texactly_three\tn_sims_used\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.strategy,
            fmt_prop(r.exactly[0]),
            fmt_prop(r.exactly[1]),
            fmt_prop(r.exactly[2]),
            r.sims_used()
        );
    }
    out
}

/// Runs every requested strategy. Strategies that share a plan share one
/// batch, so `top30`, `one-rep` and `stable99` see the same simulations.
pub fn table1(
    bundle: &DatasetBundle,
    base: &SimulationPlan,
    strategies: &[Strategy],
) -> Result<Vec<ConsistencyRow>> {
    let r = bundle.layout.replicates();
    let mut batches: Vec<(SimulationPlan, SimulationBatchResult)> = Vec::new();
    let mut rows = Vec::with_capacity(strategies.len());
    for s in strategies {
        s.validate()?;
        let plan = s.plan(base, r);
        let batch = match batches.iter().position(|(p, _)| same_batch(p, &plan)) {
            Some(i) => &batches[i].1,
            None => {
                let batch = run_simulation_batch(bundle, &plan)?;
                batches.push((plan, batch));
                &batches[batches.len() - 1].1
            }
        };
        rows.push(consistency_row(s.kind.name(), &apply_strategy(s, batch)?));
    }
    Ok(rows)
}

fn same_batch(a: &SimulationPlan, b: &SimulationPlan) -> bool {
    let strip = |p: &SimulationPlan| SimulationPlan {
        keep_top_windows: 0,
        ..p.clone()
    };
    strip(a) == strip(b) && a.keep_top_windows >= b.keep_top_windows
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub k: usize,
    pub p_ge1: f64,
    pub p_ge2: f64,
    pub p_eq3: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("k\tp_ge1\tp_ge2\tp_eq3\n");
        for p in &self.points {
            let _ = writeln!(out, "{}\t{:.6}\t{:.6}\t{:.6}", p.k, p.p_ge1, p.p_ge2, p.p_eq3);
        }
        out
    }
}

/// Mean fraction of all grid areas called on at least one, at least two and
/// all three arrays.
pub fn sweep_point(k: usize, triples: &[CallTriple]) -> Result<SweepPoint> {
    if triples.is_empty() {
        return Err(Error::invalid("empty simulation batch"));
    }
    let mut sums = [0.0f64; 3];
    for t in triples {
        let c = agreement_counts(t);
        let n = t[0].bits.len().max(1) as f64;
        sums[0] += (c[1] + c[2] + c[3]) as f64 / n;
        sums[1] += (c[2] + c[3]) as f64 / n;
        sums[2] += c[3] as f64 / n;
    }
    let s = triples.len() as f64;
    Ok(SweepPoint {
        k,
        p_ge1: sums[0] / s,
        p_ge2: sums[1] / s,
        p_eq3: sums[2] / s,
    })
}

pub fn replicate_sweep(bundle: &DatasetBundle, base: &SimulationPlan, ks: &[usize]) -> Result<SweepResult> {
    let mut points = Vec::with_capacity(ks.len());
    for &k in ks {
        let plan = SimulationPlan {
            k,
            mode: PseudoMode::Spots,
            subset: ProbeSubset::All,
            keep_top_windows: 0,
            ..base.clone()
        };
        let batch = run_simulation_batch(bundle, &plan)?;
        let triples: Vec<CallTriple> = batch.sims.iter().map(|s| s.arrays.clone().map(|a| a.calls)).collect();
        points.push(sweep_point(k, &triples)?);
    }
    Ok(SweepResult { points })
}

pub fn fig1_tsv(track: &FrequencyTrack, smoothed: &[f64]) -> String {
    let mut out = String::from("area_index\tstart\tcount\tsmoothed\n");
    for (i, (&c, &s)) in track.counts.iter().zip(smoothed).enumerate() {
        let _ = writeln!(out, "{i}\t{}\t{c}\t{s:.6}", track.grid.area(i).0);
    }
    out
}

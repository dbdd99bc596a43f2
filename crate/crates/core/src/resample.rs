//! Pseudo-arrays built from replicate spots, and batches of detections on them.
//!
//! Each simulation draws one replicate assignment and applies it to all three
//! physical arrays, so the three pseudo-arrays of a triplet share spot
//! locations and differ only through the arrays themselves.

use std::fmt::Write as _;

use rand::seq::index;
use rayon::prelude::*;

use crate::areas::{area_grid, call_areas, AreaCalls, AreaGrid, DEFAULT_AREA_SIZE};
use crate::dataset::{DatasetBundle, ProbeLayout, BUNDLE_ARRAYS};
use crate::detect::{detect, DetectParams, Region, Track, Window};
use crate::error::{Error, Result};
use crate::normalize::{log2_transform, quantile_normalize, TrackMatrix, DEFAULT_PSEUDOCOUNT};
use crate::rng::{self, derive_seed, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PseudoMode {
    /// Every chosen replicate is its own track entry.
    Spots,
    Mean,
    Median,
}

impl PseudoMode {
    pub fn name(self) -> &'static str {
        match self {
            PseudoMode::Spots => "spots",
            PseudoMode::Mean => "mean",
            PseudoMode::Median => "median",
        }
    }
}

/// Which probes enter a pseudo-array, by rank in position order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeSubset {
    All,
    Even,
    Odd,
}

impl ProbeSubset {
    pub fn name(self) -> &'static str {
        match self {
            ProbeSubset::All => "all",
            ProbeSubset::Even => "even",
            ProbeSubset::Odd => "odd",
        }
    }

    pub fn select(self, n_probes: usize) -> Vec<usize> {
        match self {
            ProbeSubset::All => (0..n_probes).collect(),
            ProbeSubset::Even => (0..n_probes).step_by(2).collect(),
            ProbeSubset::Odd => (1..n_probes).step_by(2).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizeScope {
    /// Normalize the three pseudo-arrays of each simulation together.
    Triplet,
    /// Normalize the full physical arrays once, before resampling.
    Physical,
}

impl NormalizeScope {
    pub fn name(self) -> &'static str {
        match self {
            NormalizeScope::Triplet => "triplet",
            NormalizeScope::Physical => "physical",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateAssignment {
    pub master_seed: u64,
    pub sim_index: u64,
    pub k: usize,
    /// Probe indices included, ascending.
    pub probes: Vec<usize>,
    /// `k` sorted replicate indices per included probe, flattened.
    pub chosen: Vec<u32>,
}

impl ReplicateAssignment {
    pub fn replicates(&self, i: usize) -> &[u32] {
        &self.chosen[i * self.k..(i + 1) * self.k]
    }
}

/// Uniform `k`-subset of replicates for every selected probe, drawn from the
/// stream keyed by `(master_seed, sim_index)`.
pub fn draw_replicate_assignment(
    layout: &ProbeLayout,
    k: usize,
    subset: ProbeSubset,
    master_seed: u64,
    sim_index: u64,
) -> Result<ReplicateAssignment> {
    let r = layout.replicates();
    if k == 0 || k > r {
        return Err(Error::invalid(format!("replicates per probe must lie in 1..={r}, got {k}")));
    }
    let probes = subset.select(layout.probes().len());
    let mut rng = rng::stream(master_seed, Purpose::Assignment, sim_index);
    let mut chosen = Vec::with_capacity(probes.len() * k);
    for _ in &probes {
        let mut pick: Vec<u32> = index::sample(&mut rng, r, k).iter().map(|i| i as u32).collect();
        pick.sort_unstable();
        chosen.extend(pick);
    }
    Ok(ReplicateAssignment {
        master_seed,
        sim_index,
        k,
        probes,
        chosen,
    })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    }
}

/// Track of one pseudo-array. `values` are per-spot values aligned with the
/// layout's spot order.
pub fn build_pseudo_array(
    layout: &ProbeLayout,
    values: &[f64],
    assignment: &ReplicateAssignment,
    mode: PseudoMode,
) -> Result<Track> {
    if values.len() != layout.spots().len() {
        return Err(Error::invalid("spot values do not match the layout"));
    }
    let cap = match mode {
        PseudoMode::Spots => assignment.chosen.len(),
        _ => assignment.probes.len(),
    };
    let mut positions = Vec::with_capacity(cap);
    let mut gc = Vec::with_capacity(cap);
    let mut out = Vec::with_capacity(cap);
    let mut buf = Vec::with_capacity(assignment.k);
    for (i, &p) in assignment.probes.iter().enumerate() {
        let probe = layout
            .probes()
            .get(p)
            .ok_or_else(|| Error::invalid(format!("assignment references missing probe {p}")))?;
        buf.clear();
        for &rep in assignment.replicates(i) {
            if rep as usize >= layout.replicates() {
                return Err(Error::invalid(format!(
                    "assignment references missing spot {}:{rep}",
                    probe.id
                )));
            }
            buf.push(values[layout.spot_index(p, rep as usize)]);
        }
        let entries: &[f64] = match mode {
            PseudoMode::Spots => &buf,
            PseudoMode::Mean => &[buf.iter().sum::<f64>() / buf.len() as f64],
            PseudoMode::Median => &[median(&mut buf.clone())],
        };
        for &v in entries {
            positions.push(probe.start);
            gc.push(probe.gc);
            out.push(v);
        }
    }
    Track::new(positions, gc, out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationPlan {
    pub sims: usize,
    /// Replicates drawn per probe.
    pub k: usize,
    pub mode: PseudoMode,
    pub subset: ProbeSubset,
    pub detect: DetectParams,
    pub scope: NormalizeScope,
    pub pseudocount: f64,
    pub master_seed: u64,
    pub independent_perm_seeds: bool,
    pub area_size: u64,
    /// Highest-scoring significant windows kept per array (for window-level
    /// top-n selection).
    pub keep_top_windows: usize,
}

impl Default for SimulationPlan {
    fn default() -> Self {
        SimulationPlan {
            sims: 1000,
            k: 1,
            mode: PseudoMode::Spots,
            subset: ProbeSubset::All,
            detect: DetectParams::default(),
            scope: NormalizeScope::Triplet,
            pseudocount: DEFAULT_PSEUDOCOUNT,
            master_seed: 0,
            independent_perm_seeds: false,
            area_size: DEFAULT_AREA_SIZE,
            keep_top_windows: 0,
        }
    }
}

impl SimulationPlan {
    pub fn validate(&self, layout: &ProbeLayout) -> Result<()> {
        if self.sims == 0 {
            return Err(Error::invalid("sims must be at least 1"));
        }
        if self.k == 0 || self.k > layout.replicates() {
            return Err(Error::invalid(format!(
                "replicates per probe must lie in 1..={}",
                layout.replicates()
            )));
        }
        if self.pseudocount.is_nan() || self.pseudocount <= 0.0 {
            return Err(Error::invalid("pseudocount must be positive"));
        }
        self.detect.validate(layout.probe_length())
    }

    /// Permutation seed for array `array` of simulation `sim_index`.
    pub fn permutation_seed(&self, sim_index: u64, array: usize) -> u64 {
        let shared = derive_seed(self.master_seed, Purpose::Permutation, sim_index);
        if self.independent_perm_seeds {
            derive_seed(shared, Purpose::Permutation, array as u64 + 1)
        } else {
            shared
        }
    }

    pub fn grid(&self, layout: &ProbeLayout) -> Result<AreaGrid> {
        let (start, end) = layout.tiled_region();
        area_grid(start, end, self.area_size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayOutcome {
    pub calls: AreaCalls,
    pub regions: Vec<Region>,
    pub called_bases: u64,
    /// Significant windows by descending score, at most `keep_top_windows`.
    pub top_windows: Vec<Window>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub sim_index: u64,
    pub perm_seeds: [u64; BUNDLE_ARRAYS],
    pub arrays: [ArrayOutcome; BUNDLE_ARRAYS],
}

impl SimOutcome {
    pub fn calls(&self) -> [&AreaCalls; BUNDLE_ARRAYS] {
        [&self.arrays[0].calls, &self.arrays[1].calls, &self.arrays[2].calls]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationBatchResult {
    pub grid: AreaGrid,
    pub plan: SimulationPlan,
    pub array_ids: [String; BUNDLE_ARRAYS],
    pub sims: Vec<SimOutcome>,
}

impl SimulationBatchResult {
    pub fn manifest_tsv(&self) -> String {
        let mut out = String::from(
            "sim_index\tmaster_seed\tperm_seed_1\tperm_seed_2\tperm_seed_3\tregions_1\tregions_2\tregions_3\tcalled_bases_1\tcalled_bases_2\tcalled_bases_3\n",
        );
        for s in &self.sims {
            let _ = write!(out, "{}\t{}", s.sim_index, self.plan.master_seed);
            for seed in s.perm_seeds {
                let _ = write!(out, "\t{seed}");
            }
            for a in &s.arrays {
                let _ = write!(out, "\t{}", a.regions.len());
            }
            for a in &s.arrays {
                let _ = write!(out, "\t{}", a.called_bases);
            }
            out.push('\n');
        }
        out
    }
}

/// Spot-level inputs to pseudo-array construction, prepared once per batch.
struct PreparedArrays {
    values: [Vec<f64>; BUNDLE_ARRAYS],
    /// Whether the values are already log-scale and normalized.
    normalized: bool,
}

fn prepare(bundle: &DatasetBundle, plan: &SimulationPlan) -> Result<PreparedArrays> {
    match plan.scope {
        NormalizeScope::Triplet => Ok(PreparedArrays {
            values: bundle.arrays.clone().map(|a| a.values),
            normalized: false,
        }),
        NormalizeScope::Physical => {
            let logs = bundle
                .arrays
                .iter()
                .map(|a| log2_transform(&a.values, plan.pseudocount))
                .collect::<Result<Vec<_>>>()?;
            let ids = bundle.arrays.iter().map(|a| a.array_id.clone()).collect();
            let m = quantile_normalize(&TrackMatrix::new(ids, logs)?)?;
            let [a, b, c]: [Vec<f64>; BUNDLE_ARRAYS] = m
                .data
                .try_into()
                .map_err(|_| Error::invalid("expected three normalized arrays"))?;
            Ok(PreparedArrays {
                values: [a, b, c],
                normalized: true,
            })
        }
    }
}

fn pseudo_triplet(
    bundle: &DatasetBundle,
    plan: &SimulationPlan,
    prepared: &PreparedArrays,
    assignment: &ReplicateAssignment,
) -> Result<[Track; BUNDLE_ARRAYS]> {
    let layout = &bundle.layout;
    let mut tracks = Vec::with_capacity(BUNDLE_ARRAYS);
    for values in &prepared.values {
        tracks.push(build_pseudo_array(layout, values, assignment, plan.mode)?);
    }
    if !prepared.normalized {
        let logs = tracks
            .iter()
            .map(|t| log2_transform(&t.values, plan.pseudocount))
            .collect::<Result<Vec<_>>>()?;
        let ids = bundle.arrays.iter().map(|a| a.array_id.clone()).collect();
        let m = quantile_normalize(&TrackMatrix::new(ids, logs)?)?;
        for (t, v) in tracks.iter_mut().zip(m.data) {
            t.values = v;
        }
    }
    tracks
        .try_into()
        .map_err(|_| Error::invalid("expected three pseudo-arrays"))
}

/// Normalized pseudo-array tracks of one simulation, as fed to detection.
pub fn simulation_tracks(
    bundle: &DatasetBundle,
    plan: &SimulationPlan,
    sim_index: u64,
) -> Result<(ReplicateAssignment, [Track; BUNDLE_ARRAYS])> {
    plan.validate(&bundle.layout)?;
    let prepared = prepare(bundle, plan)?;
    let assignment = draw_replicate_assignment(&bundle.layout, plan.k, plan.subset, plan.master_seed, sim_index)?;
    let tracks = pseudo_triplet(bundle, plan, &prepared, &assignment)?;
    Ok((assignment, tracks))
}

fn run_one(
    bundle: &DatasetBundle,
    plan: &SimulationPlan,
    prepared: &PreparedArrays,
    grid: &AreaGrid,
    sim_index: u64,
) -> Result<SimOutcome> {
    let assignment = draw_replicate_assignment(&bundle.layout, plan.k, plan.subset, plan.master_seed, sim_index)?;
    let tracks = pseudo_triplet(bundle, plan, prepared, &assignment)?;
    let perm_seeds: [u64; BUNDLE_ARRAYS] = std::array::from_fn(|j| plan.permutation_seed(sim_index, j));
    let mut arrays = Vec::with_capacity(BUNDLE_ARRAYS);
    for (track, &seed) in tracks.iter().zip(&perm_seeds) {
        let params = DetectParams {
            seed,
            ..plan.detect.clone()
        };
        let res = detect(track, &params)?;
        let mut top: Vec<Window> = res
            .windows
            .iter()
            .filter(|w| w.q < params.alpha)
            .cloned()
            .collect();
        top.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.start.cmp(&b.start)));
        top.truncate(plan.keep_top_windows);
        arrays.push(ArrayOutcome {
            calls: call_areas(&res.regions, grid),
            called_bases: res.called_bases(),
            regions: res.regions,
            top_windows: top,
        });
    }
    let arrays: [ArrayOutcome; BUNDLE_ARRAYS] = arrays
        .try_into()
        .map_err(|_| Error::invalid("expected three array outcomes"))?;
    Ok(SimOutcome {
        sim_index,
        perm_seeds,
        arrays,
    })
}

/// Runs `plan.sims` simulations in parallel; the result is identical for any
/// worker count.
pub fn run_simulation_batch(bundle: &DatasetBundle, plan: &SimulationPlan) -> Result<SimulationBatchResult> {
    plan.validate(&bundle.layout)?;
    let grid = plan.grid(&bundle.layout)?;
    let prepared = prepare(bundle, plan)?;
    let sims = (0..plan.sims as u64)
        .into_par_iter()
        .map(|i| run_one(bundle, plan, &prepared, &grid, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulationBatchResult {
        grid,
        plan: plan.clone(),
        array_ids: bundle.arrays.clone().map(|a| a.array_id),
        sims,
    })
}

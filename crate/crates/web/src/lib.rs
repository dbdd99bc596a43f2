//! Browser demo bindings. Each entry point builds a small synthetic dataset,
//! runs part of the pipeline and returns JSON for the page to draw.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use tileshuffle::detect::{detect, DetectParams};
use tileshuffle::metrics::{replicate_sweep, selection_frequency, smooth_track};
use tileshuffle::resample::{run_simulation_batch, simulation_tracks, SimulationPlan};
use tileshuffle::synth::{generate_synthetic, PlantedSegment, SynthConfig};
use tileshuffle::{Error, Result};

const MAX_PROBES: usize = 5000;
const MAX_SIMS: usize = 200;

#[derive(Debug, Serialize)]
pub struct Interval {
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Serialize)]
pub struct DetectView {
    pub positions: Vec<u64>,
    pub values: Vec<f64>,
    pub window_starts: Vec<u64>,
    pub window_scores: Vec<f64>,
    pub window_q: Vec<f64>,
    pub regions: Vec<Interval>,
    pub truth: Interval,
}

#[derive(Debug, Serialize)]
pub struct FrequencyView {
    pub sims: usize,
    pub area_starts: Vec<u64>,
    pub counts: Vec<u32>,
    pub smoothed: Vec<f64>,
    pub truth: Interval,
}

#[derive(Debug, Serialize)]
pub struct SweepView {
    pub k: Vec<usize>,
    pub p_ge1: Vec<f64>,
    pub p_ge2: Vec<f64>,
    pub p_eq3: Vec<f64>,
}

fn check(n_probes: usize, sims: usize) -> Result<()> {
    if !(100..=MAX_PROBES).contains(&n_probes) {
        return Err(Error::Validation(format!("probes must lie in 100..={MAX_PROBES}")));
    }
    if sims == 0 || sims > MAX_SIMS {
        return Err(Error::Validation(format!("simulations must lie in 1..={MAX_SIMS}")));
    }
    Ok(())
}

/// Synthetic config with a 2 kb segment centred in the region.
fn config(n_probes: usize, effect: f64, noise_sd: f64, seed: u64) -> SynthConfig {
    let base = SynthConfig::with_probe_count(n_probes);
    let mid = base.region_start + (base.region_end - base.region_start) / 2;
    let half = 1000.min((base.region_end - base.region_start) / 4);
    SynthConfig {
        seed,
        noise_sd,
        segments: vec![PlantedSegment {
            start: mid - half,
            end: mid + half,
            effect,
        }],
        ..base
    }
}

fn plan(sims: usize, k: usize, permutations: usize, seed: u64) -> SimulationPlan {
    SimulationPlan {
        sims,
        k,
        master_seed: seed,
        detect: DetectParams {
            permutations,
            seed,
            ..DetectParams::default()
        },
        ..SimulationPlan::default()
    }
}

fn truth(c: &SynthConfig) -> Interval {
    let s = &c.segments[0];
    Interval {
        start: s.start,
        end: s.end,
    }
}

/// One pseudo-array built from `k` replicates per probe, scored and called.
pub fn detect_view(
    n_probes: usize,
    effect: f64,
    noise_sd: f64,
    k: usize,
    permutations: usize,
    seed: u64,
) -> Result<DetectView> {
    check(n_probes, 1)?;
    let c = config(n_probes, effect, noise_sd, seed);
    let (bundle, _) = generate_synthetic(&c)?;
    let p = plan(1, k, permutations, seed);
    let (_, tracks) = simulation_tracks(&bundle, &p, 0)?;
    let track = &tracks[0];
    let res = detect(track, &p.detect)?;
    Ok(DetectView {
        positions: track.positions.clone(),
        values: track.values.clone(),
        window_starts: res.windows.iter().map(|w| w.start).collect(),
        window_scores: res.windows.iter().map(|w| w.score).collect(),
        window_q: res.windows.iter().map(|w| w.q).collect(),
        regions: res
            .regions
            .iter()
            .map(|r| Interval {
                start: r.start,
                end: r.end,
            })
            .collect(),
        truth: truth(&c),
    })
}

/// How often each 100-base area of the first array is called across pseudo-arrays.
pub fn frequency_view(
    n_probes: usize,
    effect: f64,
    k: usize,
    sims: usize,
    smooth_window: usize,
    seed: u64,
) -> Result<FrequencyView> {
    check(n_probes, sims)?;
    let c = config(n_probes, effect, 0.3, seed);
    let (bundle, _) = generate_synthetic(&c)?;
    let batch = run_simulation_batch(&bundle, &plan(sims, k, 100, seed))?;
    let track = selection_frequency(&batch, 0)?;
    let smoothed = smooth_track(&track.counts, smooth_window)?;
    Ok(FrequencyView {
        sims: track.sims,
        area_starts: track.grid.areas().map(|(s, _)| s).collect(),
        counts: track.counts,
        smoothed,
        truth: truth(&c),
    })
}

/// Proportion of areas called on at least one, at least two and all three arrays.
pub fn sweep_view(n_probes: usize, effect: f64, sims: usize, seed: u64) -> Result<SweepView> {
    check(n_probes, sims)?;
    let c = config(n_probes, effect, 0.3, seed);
    let (bundle, _) = generate_synthetic(&c)?;
    let sweep = replicate_sweep(&bundle, &plan(sims, 1, 100, seed), &[1, 2, 4, 10])?;
    Ok(SweepView {
        k: sweep.points.iter().map(|p| p.k).collect(),
        p_ge1: sweep.points.iter().map(|p| p.p_ge1).collect(),
        p_ge2: sweep.points.iter().map(|p| p.p_ge2).collect(),
        p_eq3: sweep.points.iter().map(|p| p.p_eq3).collect(),
    })
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsValue> {
    let v = r.map_err(|e| JsValue::from_str(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen(js_name = detectDemo)]
pub fn detect_demo(
    n_probes: usize,
    effect: f64,
    noise_sd: f64,
    k: usize,
    permutations: usize,
    seed: u32,
) -> std::result::Result<String, JsValue> {
    to_js(detect_view(n_probes, effect, noise_sd, k, permutations, seed.into()))
}

#[wasm_bindgen(js_name = frequencyDemo)]
pub fn frequency_demo(
    n_probes: usize,
    effect: f64,
    k: usize,
    sims: usize,
    smooth_window: usize,
    seed: u32,
) -> std::result::Result<String, JsValue> {
    to_js(frequency_view(n_probes, effect, k, sims, smooth_window, seed.into()))
}

#[wasm_bindgen(js_name = sweepDemo)]
pub fn sweep_demo(n_probes: usize, effect: f64, sims: usize, seed: u32) -> std::result::Result<String, JsValue> {
    to_js(sweep_view(n_probes, effect, sims, seed.into()))
}

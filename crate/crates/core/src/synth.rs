//! Synthetic replicated-probe datasets with planted expressed segments.
//!
//! Log2 signal of array `a`, probe `p`, replicate `r`:
//!
//! ```text
//! Y = baseline + gc_slope * (gc_p - 0.5) + effect * [p inside a segment]
//!     + probe_p + array_a + container_{a, container(p, r)} + noise
//! ```
//!
//! with independent zero-mean normal components. Intensities are written
//! on the linear scale, `2^Y`.

use std::fmt::Write as _;

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::areas::{area_grid, call_areas, AreaCalls, DEFAULT_AREA_SIZE};
use crate::dataset::{
    validate_bundle, DatasetBundle, Probe, ProbeLayout, Spot, SpotIntensities, BUNDLE_ARRAYS,
    DEFAULT_PROBE_LENGTH, DEFAULT_TILE_STEP,
};
use crate::detect::Region;
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedSegment {
    pub start: u64,
    pub end: u64,
    /// Added log2 signal.
    pub effect: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub chrom: String,
    pub region_start: u64,
    pub region_end: u64,
    pub tile_step: u64,
    pub probe_length: u64,
    pub replicates: usize,
    pub containers: usize,
    pub segments: Vec<PlantedSegment>,
    pub baseline: f64,
    pub gc_slope: f64,
    pub noise_sd: f64,
    pub container_sd: f64,
    pub array_sd: f64,
    pub probe_sd: f64,
    /// Fraction of probes removed, all replicates at once.
    pub dropout_fraction: f64,
    pub gc_range: (f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            chrom: "chr8".to_string(),
            region_start: 127_640_000,
            region_end: 129_120_000,
            tile_step: DEFAULT_TILE_STEP,
            probe_length: DEFAULT_PROBE_LENGTH,
            replicates: 10,
            containers: 10,
            segments: Vec::new(),
            baseline: 8.0,
            gc_slope: 0.5,
            noise_sd: 0.3,
            container_sd: 0.1,
            array_sd: 0.2,
            probe_sd: 0.2,
            dropout_fraction: 0.0,
            gc_range: (0.3, 0.7),
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Region just long enough to tile `n_probes` probes, starting at base 1.
    pub fn with_probe_count(n_probes: usize) -> Self {
        let base = SynthConfig::default();
        let start = 1;
        SynthConfig {
            region_start: start,
            region_end: start + (n_probes as u64 - 1) * base.tile_step + base.probe_length,
            ..base
        }
    }

    pub fn tiled_positions(&self) -> u64 {
        let len = self.region_end.saturating_sub(self.region_start);
        if len < self.probe_length {
            0
        } else {
            (len - self.probe_length) / self.tile_step + 1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.region_end <= self.region_start {
            return Err(Error::invalid("synthetic region end must exceed its start"));
        }
        if self.tile_step == 0 || self.probe_length == 0 {
            return Err(Error::invalid("tile_step and probe_length must be positive"));
        }
        if self.tiled_positions() == 0 {
            return Err(Error::invalid("synthetic region is shorter than one probe"));
        }
        if self.replicates == 0 || self.containers < self.replicates {
            return Err(Error::invalid(
                "need at least one replicate and no fewer containers than replicates",
            ));
        }
        for s in &self.segments {
            if s.start < self.region_start || s.end > self.region_end || s.end <= s.start {
                return Err(Error::invalid(format!(
                    "segment {}-{} outside the synthetic region",
                    s.start, s.end
                )));
            }
            if !s.effect.is_finite() {
                return Err(Error::invalid("segment effect must be finite"));
            }
        }
        let sds = [self.noise_sd, self.container_sd, self.array_sd, self.probe_sd];
        if sds.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::invalid("standard deviations must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.dropout_fraction) {
            return Err(Error::invalid("dropout_fraction must lie in [0, 1)"));
        }
        let (lo, hi) = self.gc_range;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::invalid("gc range must lie within [0, 1]"));
        }
        Ok(())
    }

    fn effect_at(&self, start: u64) -> f64 {
        let end = start + self.probe_length;
        self.segments
            .iter()
            .filter(|s| s.start <= start && end <= s.end)
            .map(|s| s.effect)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub segments: Vec<PlantedSegment>,
    /// Areas lying entirely inside a planted segment, on the standard grid.
    pub calls: AreaCalls,
}

impl GroundTruth {
    /// BED rows (`chrom start end effect`, 0-based half-open).
    pub fn to_bed(&self, chrom: &str) -> String {
        let mut out = String::new();
        for s in &self.segments {
            let _ = writeln!(out, "{chrom}\t{}\t{}\t{}", s.start - 1, s.end - 1, s.effect);
        }
        out
    }
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("validated standard deviation")
}

fn draw(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        0.0
    } else {
        normal(sd).sample(rng)
    }
}

pub fn generate_synthetic(config: &SynthConfig) -> Result<(DatasetBundle, GroundTruth)> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, Purpose::Synthetic, 0);
    let n_tiled = config.tiled_positions() as usize;
    let (gc_lo, gc_hi) = config.gc_range;
    let gc_all: Vec<f64> = (0..n_tiled)
        .map(|_| if gc_hi > gc_lo { rng.random_range(gc_lo..gc_hi) } else { gc_lo })
        .collect();

    let n_keep = ((n_tiled as f64) * (1.0 - config.dropout_fraction)).round().max(1.0) as usize;
    let mut kept: Vec<usize> = if n_keep >= n_tiled {
        (0..n_tiled).collect()
    } else {
        index::sample(&mut rng, n_tiled, n_keep).into_vec()
    };
    kept.sort_unstable();

    let r = config.replicates;
    let c = config.containers;
    let mut probes = Vec::with_capacity(kept.len());
    let mut spots = Vec::with_capacity(kept.len() * r);
    for (pi, &tile) in kept.iter().enumerate() {
        probes.push(Probe {
            id: format!("p{tile}"),
            start: config.region_start + tile as u64 * config.tile_step,
            gc: gc_all[tile],
        });
        for rep in 0..r {
            spots.push(Spot {
                probe: pi,
                replicate: rep as u32,
                container: ((rep + tile) % c) as u32,
            });
        }
    }

    let probe_effect: Vec<f64> = (0..probes.len()).map(|_| draw(&mut rng, config.probe_sd)).collect();
    let array_effect: Vec<f64> = (0..BUNDLE_ARRAYS).map(|_| draw(&mut rng, config.array_sd)).collect();
    let container_effect: Vec<f64> = (0..BUNDLE_ARRAYS * c)
        .map(|_| draw(&mut rng, config.container_sd))
        .collect();
    let fixed: Vec<f64> = probes
        .iter()
        .zip(&probe_effect)
        .map(|(p, eta)| {
            config.baseline + config.gc_slope * (p.gc - 0.5) + config.effect_at(p.start) + eta
        })
        .collect();

    let mut arrays = Vec::with_capacity(BUNDLE_ARRAYS);
    for a in 0..BUNDLE_ARRAYS {
        let values = spots
            .iter()
            .map(|s| {
                let y = fixed[s.probe]
                    + array_effect[a]
                    + container_effect[a * c + s.container as usize]
                    + draw(&mut rng, config.noise_sd);
                y.exp2()
            })
            .collect();
        arrays.push(SpotIntensities {
            array_id: format!("array_{}", a + 1),
            values,
        });
    }

    let layout = ProbeLayout::new(
        config.chrom.clone(),
        probes,
        spots,
        config.probe_length,
        config.tile_step,
        Some((config.region_start, config.region_end)),
    )?;
    let mut bundle = validate_bundle(layout, arrays)?;
    bundle.meta = format!("synthetic seed={}", config.seed);

    let grid = area_grid(config.region_start, config.region_end, DEFAULT_AREA_SIZE)?;
    let truth_regions: Vec<Region> = config
        .segments
        .iter()
        .map(|s| Region {
            start: s.start,
            end: s.end,
            max_score: s.effect,
            min_q: 0.0,
        })
        .collect();
    let truth = GroundTruth {
        segments: config.segments.clone(),
        calls: call_areas(&truth_regions, &grid),
    };
    Ok((bundle, truth))
}

/// Area-level `(precision, recall)`. Precision is 1 when nothing is called;
/// recall is 1 when nothing is true.
pub fn score_against_truth(calls: &AreaCalls, truth: &GroundTruth) -> Result<(f64, f64)> {
    if calls.grid != truth.calls.grid {
        return Err(Error::invalid("call grid differs from the truth grid"));
    }
    let (mut tp, mut fp, mut fne) = (0usize, 0usize, 0usize);
    for (&c, &t) in calls.bits.iter().zip(&truth.calls.bits) {
        match (c, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fne += 1,
            _ => {}
        }
    }
    let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fne == 0 { 1.0 } else { tp as f64 / (tp + fne) as f64 };
    Ok((precision, recall))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{parse_intensities, parse_layout};

    fn quiet(n: usize) -> SynthConfig {
        SynthConfig {
            noise_sd: 0.0,
            container_sd: 0.0,
            array_sd: 0.0,
            probe_sd: 0.0,
            gc_slope: 0.0,
            ..SynthConfig::with_probe_count(n)
        }
    }

    #[test]
    fn full_design_tiling_count() {
        let c = SynthConfig::default();
        // floor((1_480_000 - 50) / 20) + 1
        assert_eq!(c.tiled_positions(), 73_998);
        assert_eq!(SynthConfig::with_probe_count(2000).tiled_positions(), 2000);
    }

    #[test]
    fn degenerate_config_is_flat() {
        let (bundle, truth) = generate_synthetic(&quiet(100)).unwrap();
        for a in &bundle.arrays {
            assert!(a.values.iter().all(|&v| v == 256.0));
        }
        assert_eq!(truth.calls.count(), 0);
        assert_eq!(bundle.layout.probes().len(), 100);
        assert_eq!(bundle.layout.spots().len(), 1000);
    }

    #[test]
    fn planted_segment_doubles_signal() {
        let config = SynthConfig {
            segments: vec![PlantedSegment {
                start: 401,
                end: 1401,
                effect: 1.0,
            }],
            ..quiet(100)
        };
        let (bundle, truth) = generate_synthetic(&config).unwrap();
        let l = &bundle.layout;
        for (s, &v) in l.spots().iter().zip(&bundle.arrays[0].values) {
            let start = l.probes()[s.probe].start;
            let inside = start >= 401 && start + 50 <= 1401;
            assert_eq!(v, if inside { 512.0 } else { 256.0 });
        }
        assert_eq!(truth.calls.count(), 10);
    }

    #[test]
    fn dropout_and_seed_determinism() {
        let config = SynthConfig {
            dropout_fraction: 0.25,
            seed: 4,
            ..SynthConfig::with_probe_count(400)
        };
        let (a, _) = generate_synthetic(&config).unwrap();
        let (b, _) = generate_synthetic(&config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.layout.probes().len(), 300);
        let (c, _) = generate_synthetic(&SynthConfig { seed: 5, ..config }).unwrap();
        assert_ne!(a.arrays[0].values, c.arrays[0].values);
    }

    #[test]
    fn generated_files_parse_back() {
        let (bundle, _) = generate_synthetic(&SynthConfig::with_probe_count(50)).unwrap();
        let layout = parse_layout(&bundle.layout.to_tsv()).unwrap();
        assert_eq!(layout, bundle.layout);
        for a in &bundle.arrays {
            assert_eq!(&parse_intensities(&a.to_tsv(&layout), &layout).unwrap(), a);
        }
    }

    #[test]
    fn containers_distinct_per_probe() {
        let (bundle, _) = generate_synthetic(&SynthConfig::with_probe_count(30)).unwrap();
        assert_eq!(bundle.layout.containers(), 10);
    }

    #[test]
    fn invalid_configs() {
        let base = SynthConfig::with_probe_count(100);
        let bad_segment = SynthConfig {
            segments: vec![PlantedSegment { start: 0, end: 10, effect: 1.0 }],
            ..base.clone()
        };
        assert!(generate_synthetic(&bad_segment).is_err());
        assert!(generate_synthetic(&SynthConfig { noise_sd: -1.0, ..base.clone() }).is_err());
        assert!(generate_synthetic(&SynthConfig { dropout_fraction: 1.0, ..base.clone() }).is_err());
        assert!(generate_synthetic(&SynthConfig { containers: 5, ..base }).is_err());
    }

    #[test]
    fn truth_scoring_conventions() {
        let config = SynthConfig {
            segments: vec![PlantedSegment { start: 201, end: 701, effect: 1.0 }],
            ..quiet(100)
        };
        let (_, truth) = generate_synthetic(&config).unwrap();
        assert_eq!(score_against_truth(&truth.calls, &truth).unwrap(), (1.0, 1.0));
        let none = AreaCalls::empty(truth.calls.grid);
        assert_eq!(score_against_truth(&none, &truth).unwrap(), (1.0, 0.0));
        let complement = AreaCalls {
            grid: truth.calls.grid,
            bits: truth.calls.bits.iter().map(|b| !b).collect(),
        };
        assert_eq!(score_against_truth(&complement, &truth).unwrap(), (0.0, 0.0));
        let other = AreaCalls::empty(area_grid(1, 501, 100).unwrap());
        assert!(score_against_truth(&other, &truth).is_err());
        assert_eq!(truth.to_bed("chr8"), "chr8\t200\t700\t1\n");
    }
}

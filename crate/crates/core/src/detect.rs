//! Window-score permutation detection of expressed regions.
//!
//! A track is scored with sliding genomic windows anchored at probe starts.
//! The null is built by shuffling probe values within GC-content bins and
//! re-scoring every window; all permuted window scores are pooled, and each
//! observed score is ranked against the pool.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Fixed-point scale for trimmed-mean sums. Summing integers keeps window
/// scores exact and independent of summation order.
const SCORE_SCALE: f64 = 4_294_967_296.0;
const MAX_ABS_VALUE: f64 = 1.0e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrimMode {
    /// Mean after dropping one maximum and one minimum.
    TrimExtremes,
    Median,
}

impl TrimMode {
    pub fn min_members(self) -> usize {
        match self {
            TrimMode::TrimExtremes => 3,
            TrimMode::Median => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TrimMode::TrimExtremes => "trim-extremes",
            TrimMode::Median => "median",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtcMethod {
    EmpiricalFdr,
    Bh,
}

impl MtcMethod {
    pub fn name(self) -> &'static str {
        match self {
            MtcMethod::EmpiricalFdr => "empirical-fdr",
            MtcMethod::Bh => "bh",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectParams {
    /// Window length in bases.
    pub window_size: u64,
    pub permutations: usize,
    pub gc_bins: usize,
    pub trim_mode: TrimMode,
    pub min_probes: usize,
    pub alpha: f64,
    pub mtc_method: MtcMethod,
    pub seed: u64,
    /// Largest gap between significant windows that is still bridged when
    /// merging into regions.
    pub merge_gap: u64,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams {
            window_size: 1000,
            permutations: 1000,
            gc_bins: 3,
            trim_mode: TrimMode::TrimExtremes,
            min_probes: 10,
            alpha: 0.05,
            mtc_method: MtcMethod::EmpiricalFdr,
            seed: 0,
            merge_gap: 0,
        }
    }
}

impl DetectParams {
    pub fn validate(&self, probe_length: u64) -> Result<()> {
        if self.window_size < probe_length.max(1) {
            return Err(Error::invalid(format!(
                "window_size {} is shorter than the probe length {probe_length}",
                self.window_size
            )));
        }
        if self.permutations == 0 {
            return Err(Error::invalid("permutations must be at least 1"));
        }
        if self.gc_bins == 0 {
            return Err(Error::invalid("gc_bins must be at least 1"));
        }
        if self.min_probes < self.trim_mode.min_members() {
            return Err(Error::invalid(format!(
                "min_probes must be at least {} for {}",
                self.trim_mode.min_members(),
                self.trim_mode.name()
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Parallel per-entry vectors of one hybridization track.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub positions: Vec<u64>,
    pub gc: Vec<f64>,
    pub values: Vec<f64>,
}

impl Track {
    pub fn new(positions: Vec<u64>, gc: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if positions.len() != gc.len() || positions.len() != values.len() {
            return Err(Error::invalid("track vectors differ in length"));
        }
        if positions.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("track positions must be non-decreasing"));
        }
        if values.iter().any(|v| !v.is_finite() || v.abs() > MAX_ABS_VALUE) {
            return Err(Error::invalid("track values must be finite and of moderate size"));
        }
        Ok(Track {
            positions,
            gc,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Candidate window `[start, end)` and the half-open index range of its members.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowRange {
    pub start: u64,
    pub end: u64,
    pub lo: usize,
    pub hi: usize,
}

impl WindowRange {
    pub fn members(&self) -> usize {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub start: u64,
    pub end: u64,
    pub lo: usize,
    pub hi: usize,
    pub score: f64,
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub start: u64,
    pub end: u64,
    pub max_score: f64,
    pub min_q: f64,
}

impl Region {
    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    pub windows: Vec<Window>,
    pub regions: Vec<Region>,
    pub params: DetectParams,
}

impl DetectionResult {
    pub fn called_bases(&self) -> u64 {
        self.regions.iter().map(Region::len).sum()
    }

    /// `chrom start end score p q`, one row per region; p is reported as the
    /// smallest member-window p-value.
    pub fn regions_tsv(&self, chrom: &str) -> String {
        let mut out = String::from("chrom\tstart\tend\tscore\tp\tq\n");
        for r in &self.regions {
            let p = self
                .windows
                .iter()
                .filter(|w| w.start >= r.start && w.end <= r.end && w.q < self.params.alpha)
                .map(|w| w.p)
                .fold(1.0, f64::min);
            let _ = writeln!(
                out,
                "{chrom}\t{}\t{}\t{}\t{}\t{}",
                r.start, r.end, r.max_score, p, r.min_q
            );
        }
        out
    }

    pub fn windows_tsv(&self, chrom: &str) -> String {
        let mut out = String::from("chrom\tstart\tend\tprobes\tscore\tp\tq\n");
        for w in &self.windows {
            let _ = writeln!(
                out,
                "{chrom}\t{}\t{}\t{}\t{}\t{}\t{}",
                w.start,
                w.end,
                w.hi - w.lo,
                w.score,
                w.p,
                w.q
            );
        }
        out
    }
}

/// Equal-frequency GC bins; ties are ordered by position in the input.
pub fn assign_gc_bins(gc: &[f64], bins: usize) -> Result<Vec<usize>> {
    if bins == 0 {
        return Err(Error::invalid("gc_bins must be at least 1"));
    }
    if bins > gc.len() {
        return Err(Error::invalid(format!(
            "{bins} GC bins requested for {} probes",
            gc.len()
        )));
    }
    let mut order: Vec<usize> = (0..gc.len()).collect();
    order.sort_by(|&a, &b| gc[a].total_cmp(&gc[b]));
    let n = gc.len();
    let mut out = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = rank * bins / n;
    }
    Ok(out)
}

pub fn build_windows(positions: &[u64], window_size: u64, min_probes: usize) -> Vec<WindowRange> {
    let mut out: Vec<WindowRange> = Vec::new();
    let mut hi = 0;
    let mut lo = 0;
    while lo < positions.len() {
        let start = positions[lo];
        let end = start + window_size;
        while hi < positions.len() && positions[hi] < end {
            hi += 1;
        }
        let w = WindowRange { start, end, lo, hi };
        let duplicate = out.last().is_some_and(|p| p.lo == lo && p.hi == hi);
        if w.members() >= min_probes.max(1) && !duplicate {
            out.push(w);
        }
        while lo < positions.len() && positions[lo] == start {
            lo += 1;
        }
    }
    out
}

fn quantize(v: f64) -> i64 {
    (v * SCORE_SCALE).round() as i64
}

fn trimmed_score(sum: i128, min: i64, max: i64, n: usize) -> f64 {
    let kept = (sum - min as i128 - max as i128) as f64;
    kept / (n - 2) as f64 / SCORE_SCALE
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let m = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[m]
    } else {
        (sorted[m - 1] + sorted[m]) / 2.0
    }
}

/// Score of one window's member values.
pub fn window_score(values: &[f64], mode: TrimMode) -> Result<f64> {
    if values.len() < mode.min_members() {
        return Err(Error::invalid(format!(
            "{} needs at least {} values, got {}",
            mode.name(),
            mode.min_members(),
            values.len()
        )));
    }
    Ok(match mode {
        TrimMode::TrimExtremes => {
            let q: Vec<i64> = values.iter().map(|&v| quantize(v)).collect();
            let sum: i128 = q.iter().map(|&x| x as i128).sum();
            let min = *q.iter().min().unwrap_or(&0);
            let max = *q.iter().max().unwrap_or(&0);
            trimmed_score(sum, min, max, q.len())
        }
        TrimMode::Median => {
            let mut s = values.to_vec();
            s.sort_by(f64::total_cmp);
            median_sorted(&s)
        }
    })
}

/// Reusable buffers for scoring all windows of a track.
#[derive(Default)]
struct Scratch {
    quantized: Vec<i64>,
    prefix: Vec<i128>,
    max_q: VecDeque<usize>,
    min_q: VecDeque<usize>,
    sorted: Vec<f64>,
    permuted: Vec<f64>,
    bin_buf: Vec<f64>,
}

fn score_windows(values: &[f64], windows: &[WindowRange], mode: TrimMode, s: &mut Scratch, out: &mut Vec<f64>) {
    out.clear();
    match mode {
        TrimMode::TrimExtremes => {
            s.quantized.clear();
            s.quantized.extend(values.iter().map(|&v| quantize(v)));
            s.prefix.clear();
            s.prefix.push(0);
            let mut acc = 0i128;
            for &q in &s.quantized {
                acc += q as i128;
                s.prefix.push(acc);
            }
            s.max_q.clear();
            s.min_q.clear();
            let q = &s.quantized;
            let mut next = 0;
            for w in windows {
                while next < w.hi {
                    while s.max_q.back().is_some_and(|&b| q[b] <= q[next]) {
                        s.max_q.pop_back();
                    }
                    s.max_q.push_back(next);
                    while s.min_q.back().is_some_and(|&b| q[b] >= q[next]) {
                        s.min_q.pop_back();
                    }
                    s.min_q.push_back(next);
                    next += 1;
                }
                while s.max_q.front().is_some_and(|&f| f < w.lo) {
                    s.max_q.pop_front();
                }
                while s.min_q.front().is_some_and(|&f| f < w.lo) {
                    s.min_q.pop_front();
                }
                let sum = s.prefix[w.hi] - s.prefix[w.lo];
                let max = q[*s.max_q.front().expect("non-empty window")];
                let min = q[*s.min_q.front().expect("non-empty window")];
                out.push(trimmed_score(sum, min, max, w.members()));
            }
        }
        TrimMode::Median => {
            s.sorted.clear();
            let (mut lo, mut hi) = (0, 0);
            for w in windows {
                while hi < w.hi {
                    let v = values[hi];
                    let at = s.sorted.partition_point(|x| x.total_cmp(&v) == Ordering::Less);
                    s.sorted.insert(at, v);
                    hi += 1;
                }
                while lo < w.lo {
                    let v = values[lo];
                    let at = s.sorted.partition_point(|x| x.total_cmp(&v) == Ordering::Less);
                    s.sorted.remove(at);
                    lo += 1;
                }
                out.push(median_sorted(&s.sorted));
            }
        }
    }
}

/// Member indices of every GC bin, in track order.
fn bin_members(bins: &[usize]) -> Vec<Vec<usize>> {
    let n_bins = bins.iter().copied().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); n_bins];
    for (i, &b) in bins.iter().enumerate() {
        members[b].push(i);
    }
    members
}

fn permute_into<R: Rng + ?Sized>(
    values: &[f64],
    members: &[Vec<usize>],
    rng: &mut R,
    buf: &mut Vec<f64>,
    out: &mut Vec<f64>,
) {
    out.clear();
    out.extend_from_slice(values);
    for idx in members {
        buf.clear();
        buf.extend(idx.iter().map(|&i| values[i]));
        buf.shuffle(rng);
        for (&i, &v) in idx.iter().zip(buf.iter()) {
            out[i] = v;
        }
    }
}

/// Shuffles values among the entries of each GC bin.
pub fn permute_within_bins<R: Rng + ?Sized>(values: &[f64], bins: &[usize], rng: &mut R) -> Vec<f64> {
    let members = bin_members(bins);
    let mut out = Vec::with_capacity(values.len());
    permute_into(values, &members, rng, &mut Vec::new(), &mut out);
    out
}

/// Sorted pool of every permuted window score.
#[derive(Debug, Clone, PartialEq)]
pub struct NullPool {
    pub scores: Vec<f64>,
    pub permutations: usize,
}

impl NullPool {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Number of pooled scores `>= s`.
    pub fn count_at_least(&self, s: f64) -> usize {
        self.scores.len() - self.scores.partition_point(|&x| x < s)
    }
}

fn permutation_scores(
    track: &Track,
    windows: &[WindowRange],
    members: &[Vec<usize>],
    params: &DetectParams,
    index: usize,
    s: &mut Scratch,
    out: &mut Vec<f64>,
) {
    let mut rng = rng::stream(params.seed, Purpose::Permutation, index as u64);
    let mut permuted = std::mem::take(&mut s.permuted);
    let mut buf = std::mem::take(&mut s.bin_buf);
    permute_into(&track.values, members, &mut rng, &mut buf, &mut permuted);
    score_windows(&permuted, windows, params.trim_mode, s, out);
    s.permuted = permuted;
    s.bin_buf = buf;
}

/// Materializes the full pooled null (`permutations × windows` scores).
pub fn null_distribution(
    track: &Track,
    windows: &[WindowRange],
    bins: &[usize],
    params: &DetectParams,
) -> NullPool {
    let members = bin_members(bins);
    let per_perm: Vec<Vec<f64>> = (0..params.permutations)
        .into_par_iter()
        .map_init(Scratch::default, |s, p| {
            let mut out = Vec::with_capacity(windows.len());
            permutation_scores(track, windows, &members, params, p, s, &mut out);
            out
        })
        .collect();
    let mut scores: Vec<f64> = per_perm.into_iter().flatten().collect();
    scores.sort_by(f64::total_cmp);
    NullPool {
        scores,
        permutations: params.permutations,
    }
}

/// For each observed score, the number of pooled null scores `>=` it,
/// computed without materializing the pool. Per-permutation tallies are
/// integers, so the merge is independent of worker count.
pub fn null_exceedances(
    track: &Track,
    windows: &[WindowRange],
    bins: &[usize],
    observed: &[f64],
    params: &DetectParams,
) -> Vec<u64> {
    let members = bin_members(bins);
    let mut order: Vec<usize> = (0..observed.len()).collect();
    order.sort_by(|&a, &b| observed[a].total_cmp(&observed[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| observed[i]).collect();
    let n = sorted.len();

    let hist = (0..params.permutations)
        .into_par_iter()
        .fold(
            || (vec![0u64; n + 1], Scratch::default(), Vec::new()),
            |(mut hist, mut s, mut out), p| {
                permutation_scores(track, windows, &members, params, p, &mut s, &mut out);
                for &x in &out {
                    hist[sorted.partition_point(|&o| o <= x)] += 1;
                }
                (hist, s, out)
            },
        )
        .map(|(hist, _, _)| hist)
        .reduce(
            || vec![0u64; n + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );

    // a null score x counts for every observed s <= x, i.e. sorted ranks below
    // partition_point(x)
    let mut counts = vec![0u64; n];
    let mut acc = 0u64;
    for rank in (0..n).rev() {
        acc += hist[rank + 1];
        counts[order[rank]] = acc;
    }
    counts
}

/// `p = (1 + #{null >= s}) / (1 + |pool|)`.
pub fn empirical_pvalues(observed: &[f64], pool: &NullPool) -> Result<Vec<f64>> {
    if pool.is_empty() {
        return Err(Error::invalid("empty null pool"));
    }
    let counts: Vec<u64> = observed.iter().map(|&s| pool.count_at_least(s) as u64).collect();
    Ok(pvalues_from_counts(&counts, pool.len()))
}

pub fn pvalues_from_counts(exceedances: &[u64], pool_size: usize) -> Vec<f64> {
    let denom = (pool_size + 1) as f64;
    exceedances.iter().map(|&c| (c + 1) as f64 / denom).collect()
}

/// Benjamini-Hochberg step-up q-values.
pub fn bh_adjust(p: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = p.iter().find(|&&x| !(x > 0.0 && x <= 1.0)) {
        return Err(Error::invalid(format!("p-value {bad} outside (0, 1]")));
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut q = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        running = running.min(p[i] * m as f64 / (rank + 1) as f64);
        q[i] = running;
    }
    Ok(q)
}

/// Permutation FDR: expected null exceedances per permutation over observed
/// exceedances, capped at 1 and made non-increasing in the score.
pub fn empirical_fdr(observed: &[f64], exceedances: &[u64], permutations: usize) -> Vec<f64> {
    let n = observed.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| observed[a].total_cmp(&observed[b]));
    let mut raw = vec![0.0; n];
    // observed windows with score >= s: scan from the top, ties share a count
    let mut rank = n;
    while rank > 0 {
        let s = observed[order[rank - 1]];
        let mut first = rank - 1;
        while first > 0 && observed[order[first - 1]] == s {
            first -= 1;
        }
        let at_least = n - first;
        for &i in &order[first..rank] {
            let expected = exceedances[i] as f64 / permutations as f64;
            raw[i] = (expected / at_least.max(1) as f64).min(1.0);
        }
        rank = first;
    }
    let mut q = vec![0.0; n];
    let mut running = f64::INFINITY;
    for &i in &order {
        running = running.min(raw[i]);
        q[i] = running;
    }
    q
}

/// Observed scores plus their null evidence, as consumed by
/// [`adjust_multiplicity`].
pub struct WindowEvidence<'a> {
    pub scores: &'a [f64],
    pub p: &'a [f64],
    pub exceedances: &'a [u64],
    pub permutations: usize,
}

pub fn adjust_multiplicity(evidence: &WindowEvidence<'_>, method: MtcMethod) -> Result<Vec<f64>> {
    match method {
        MtcMethod::Bh => bh_adjust(evidence.p),
        MtcMethod::EmpiricalFdr => {
            if evidence.permutations == 0 {
                return Err(Error::invalid("empirical FDR needs at least one permutation"));
            }
            Ok(empirical_fdr(evidence.scores, evidence.exceedances, evidence.permutations))
        }
    }
}

/// Merges windows with `q < alpha` whose intervals overlap or lie within
/// `merge_gap` bases of each other. Windows must be sorted by start.
pub fn call_regions(windows: &[Window], alpha: f64, merge_gap: u64) -> Vec<Region> {
    let mut regions: Vec<Region> = Vec::new();
    for w in windows.iter().filter(|w| w.q < alpha) {
        match regions.last_mut() {
            Some(r) if w.start <= r.end + merge_gap => {
                r.end = r.end.max(w.end);
                r.max_score = r.max_score.max(w.score);
                r.min_q = r.min_q.min(w.q);
            }
            _ => regions.push(Region {
                start: w.start,
                end: w.end,
                max_score: w.score,
                min_q: w.q,
            }),
        }
    }
    regions
}

/// Full detection on one track. Deterministic given `params.seed`, whatever
/// the size of the enclosing rayon pool.
pub fn detect(track: &Track, params: &DetectParams) -> Result<DetectionResult> {
    params.validate(0)?;
    let windows = build_windows(&track.positions, params.window_size, params.min_probes);
    if windows.is_empty() {
        return Ok(DetectionResult {
            windows: Vec::new(),
            regions: Vec::new(),
            params: params.clone(),
        });
    }
    let bins = assign_gc_bins(&track.gc, params.gc_bins)?;
    let mut scores = Vec::with_capacity(windows.len());
    score_windows(&track.values, &windows, params.trim_mode, &mut Scratch::default(), &mut scores);
    let exceedances = null_exceedances(track, &windows, &bins, &scores, params);
    let pool_size = params.permutations * windows.len();
    let p = pvalues_from_counts(&exceedances, pool_size);
    let q = adjust_multiplicity(
        &WindowEvidence {
            scores: &scores,
            p: &p,
            exceedances: &exceedances,
            permutations: params.permutations,
        },
        params.mtc_method,
    )?;
    let windows: Vec<Window> = windows
        .iter()
        .enumerate()
        .map(|(i, w)| Window {
            start: w.start,
            end: w.end,
            lo: w.lo,
            hi: w.hi,
            score: scores[i],
            p: p[i],
            q: q[i],
        })
        .collect();
    let regions = call_regions(&windows, params.alpha, params.merge_gap);
    Ok(DetectionResult {
        windows,
        regions,
        params: params.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_trimmed(values: &[f64]) -> f64 {
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        s[1..s.len() - 1].iter().sum::<f64>() / (s.len() - 2) as f64
    }

    #[test]
    fn gc_bin_examples() {
        assert_eq!(
            assign_gc_bins(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6], 3).unwrap(),
            vec![0, 0, 1, 1, 2, 2]
        );
        assert_eq!(assign_gc_bins(&[0.3, 0.1, 0.2], 1).unwrap(), vec![0, 0, 0]);
        assert_eq!(assign_gc_bins(&[0.5; 4], 2).unwrap(), vec![0, 0, 1, 1]);
        assert_eq!(assign_gc_bins(&[0.6, 0.1, 0.4, 0.2], 2).unwrap(), vec![1, 0, 1, 0]);
        assert!(assign_gc_bins(&[0.5, 0.5], 3).is_err());
    }

    #[test]
    fn window_examples() {
        let dense: Vec<u64> = (0..50).map(|i| i * 20).collect();
        let w = build_windows(&dense, 1000, 10);
        assert_eq!((w[0].lo, w[0].hi, w[0].start, w[0].end), (0, 50, 0, 1000));
        // anchors from 800 on hold fewer than 10 probes
        assert_eq!(w.len(), 41);

        let sparse: Vec<u64> = (0..5).map(|i| i * 5000).collect();
        assert!(build_windows(&sparse, 1000, 2).is_empty());
        assert_eq!(build_windows(&[7], 1000, 1).len(), 1);
    }

    #[test]
    fn repeated_positions_share_a_window() {
        let pos = [0, 0, 0, 20, 20, 20, 3000, 3000];
        let w = build_windows(&pos, 1000, 1);
        assert_eq!(
            w.iter().map(|w| (w.lo, w.hi)).collect::<Vec<_>>(),
            vec![(0, 6), (3, 6), (6, 8)]
        );
    }

    #[test]
    fn score_examples() {
        assert_eq!(window_score(&[1.0, 2.0, 3.0, 4.0, 10.0], TrimMode::TrimExtremes).unwrap(), 3.0);
        assert_eq!(window_score(&[5.0, 5.0, 5.0], TrimMode::TrimExtremes).unwrap(), 5.0);
        assert_eq!(window_score(&[1.0, 2.0, 100.0], TrimMode::Median).unwrap(), 2.0);
        assert_eq!(window_score(&[4.0, 1.0, 2.0, 100.0], TrimMode::Median).unwrap(), 3.0);
        assert!(window_score(&[1.0, 2.0], TrimMode::TrimExtremes).is_err());
        assert!(window_score(&[], TrimMode::Median).is_err());
    }

    #[test]
    fn singleton_bin_is_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = permute_within_bins(&[1.0, 2.0, 3.0, 4.0], &[0, 1, 0, 0], &mut rng);
        assert_eq!(out[1], 2.0);
    }

    #[test]
    fn seeded_permutations_repeat() {
        let values: Vec<f64> = (0..30).map(f64::from).collect();
        let bins = assign_gc_bins(&values, 3).unwrap();
        let a = permute_within_bins(&values, &bins, &mut rng::stream(9, Purpose::Permutation, 0));
        let b = permute_within_bins(&values, &bins, &mut rng::stream(9, Purpose::Permutation, 0));
        assert_eq!(a, b);
    }

    fn toy_track(n: usize, f: impl Fn(usize) -> f64) -> Track {
        Track::new(
            (0..n as u64).map(|i| 1 + i * 20).collect(),
            (0..n).map(|i| (i % 7) as f64 / 10.0).collect(),
            (0..n).map(f).collect(),
        )
        .unwrap()
    }

    #[test]
    fn null_pool_cardinality_and_constant_track() {
        let track = toy_track(12, |_| 2.5);
        let windows = build_windows(&track.positions, 100, 3);
        let windows = &windows[..3];
        let bins = assign_gc_bins(&track.gc, 2).unwrap();
        let params = DetectParams {
            permutations: 1,
            ..Default::default()
        };
        let pool = null_distribution(&track, windows, &bins, &params);
        assert_eq!(pool.len(), 3);
        let params = DetectParams {
            permutations: 7,
            ..params
        };
        let pool = null_distribution(&track, windows, &bins, &params);
        assert_eq!(pool.len(), 21);
        assert!(pool.scores.iter().all(|&s| s == 2.5));
    }

    #[test]
    fn pvalue_examples() {
        let pool = NullPool {
            scores: (0..100).map(f64::from).collect(),
            permutations: 1,
        };
        let p = empirical_pvalues(&[1000.0, -1.0, 49.5, 50.0], &pool).unwrap();
        assert_eq!(p[0], 1.0 / 101.0);
        assert_eq!(p[1], 1.0);
        // direct count: nulls 50..=99 are >= 49.5
        let direct = (0..100).filter(|&x| f64::from(x) >= 49.5).count();
        assert_eq!(direct, 50);
        assert_eq!(p[2], 51.0 / 101.0);
        // ties count as exceedances
        assert_eq!(p[3], 51.0 / 101.0);
        let empty = NullPool {
            scores: vec![],
            permutations: 0,
        };
        assert!(empirical_pvalues(&[1.0], &empty).is_err());
    }

    #[test]
    fn bh_examples() {
        assert_eq!(bh_adjust(&[0.01, 0.02, 0.03]).unwrap(), vec![0.03, 0.03, 0.03]);
        assert_eq!(bh_adjust(&[0.2]).unwrap(), vec![0.2]);
        let q = bh_adjust(&[0.04, 0.01, 0.5]).unwrap();
        // p(1)=0.01*3/1=0.03, p(2)=0.04*3/2=0.06, p(3)=0.5
        assert!((q[1] - 0.03).abs() < 1e-15 && (q[0] - 0.06).abs() < 1e-15 && q[2] == 0.5);
        assert!(bh_adjust(&[0.0]).is_err());
        assert!(bh_adjust(&[1.5]).is_err());
    }

    #[test]
    fn empirical_fdr_examples() {
        // top score has no null exceedances
        let q = empirical_fdr(&[5.0, 1.0, 2.0], &[0, 30, 10], 10);
        assert_eq!(q[0], 0.0);
        // score 2: 1 null/perm over 2 observed >= 2 -> 0.5; score 1: 3/3 -> 1
        assert_eq!(q[2], 0.5);
        assert_eq!(q[1], 1.0);
        // monotonization pulls down a lower score with larger raw ratio
        let q = empirical_fdr(&[3.0, 2.0, 1.0], &[9, 10, 10], 10);
        // raw ratios 0.9, 0.5, 1/3
        assert_eq!(q, vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn region_examples() {
        let w = |start: u64, q: f64| Window {
            start,
            end: start + 1000,
            lo: 0,
            hi: 0,
            score: start as f64,
            p: q,
            q,
        };
        let r = call_regions(&[w(0, 0.01), w(500, 0.02)], 0.05, 0);
        assert_eq!(r.len(), 1);
        assert_eq!((r[0].start, r[0].end, r[0].max_score, r[0].min_q), (0, 1500, 500.0, 0.01));
        assert!(call_regions(&[w(0, 0.5)], 0.05, 0).is_empty());
        assert_eq!(call_regions(&[w(0, 0.01), w(2000, 0.01)], 0.05, 0).len(), 2);
        assert_eq!(call_regions(&[w(0, 0.01), w(1000, 0.01)], 0.05, 0).len(), 1);
        assert_eq!(call_regions(&[w(0, 0.01), w(2000, 0.01)], 0.05, 1000).len(), 1);
    }

    #[test]
    fn constant_track_calls_nothing() {
        let track = toy_track(200, |_| 3.25);
        let params = DetectParams {
            window_size: 400,
            permutations: 20,
            min_probes: 5,
            ..Default::default()
        };
        let res = detect(&track, &params).unwrap();
        assert!(!res.windows.is_empty());
        assert!(res.windows.iter().all(|w| w.p == 1.0 && w.score == 3.25));
        assert!(res.regions.is_empty());
    }

    #[test]
    fn streamed_counts_match_materialized_pool() {
        let track = toy_track(300, |i| ((i * 7919) % 113) as f64 / 13.0 + if (100..140).contains(&i) { 3.0 } else { 0.0 });
        let params = DetectParams {
            window_size: 300,
            permutations: 25,
            min_probes: 5,
            seed: 3,
            ..Default::default()
        };
        for mode in [TrimMode::TrimExtremes, TrimMode::Median] {
            let params = DetectParams { trim_mode: mode, ..params.clone() };
            let windows = build_windows(&track.positions, params.window_size, params.min_probes);
            let bins = assign_gc_bins(&track.gc, 3).unwrap();
            let mut observed = Vec::new();
            score_windows(&track.values, &windows, mode, &mut Scratch::default(), &mut observed);
            let pool = null_distribution(&track, &windows, &bins, &params);
            let streamed = null_exceedances(&track, &windows, &bins, &observed, &params);
            let direct: Vec<u64> = observed
                .iter()
                .map(|&s| pool.scores.iter().filter(|&&x| x >= s).count() as u64)
                .collect();
            assert_eq!(streamed, direct);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let track = toy_track(400, |i| ((i * 31) % 17) as f64 + if (150..200).contains(&i) { 9.0 } else { 0.0 });
        let params = DetectParams {
            window_size: 500,
            permutations: 40,
            min_probes: 5,
            seed: 11,
            ..Default::default()
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| detect(&track, &params).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(4));
        assert!(!one.regions.is_empty());
    }

    #[test]
    fn shift_invariance() {
        // values on a dyadic grid so the shift is exact
        let f = |i: usize| ((i * 7919) % 251) as f64 / 64.0 + if (60..110).contains(&i) { 2.0 } else { 0.0 };
        let base = toy_track(300, f);
        let shifted = toy_track(300, |i| f(i) + 1.5);
        let params = DetectParams {
            window_size: 400,
            permutations: 30,
            min_probes: 5,
            seed: 5,
            ..Default::default()
        };
        let a = detect(&base, &params).unwrap();
        let b = detect(&shifted, &params).unwrap();
        for (x, y) in a.windows.iter().zip(&b.windows) {
            assert_eq!((x.p, x.q), (y.p, y.q));
            assert!((y.score - x.score - 1.5).abs() < 1e-9);
        }
        assert_eq!(
            a.regions.iter().map(|r| (r.start, r.end)).collect::<Vec<_>>(),
            b.regions.iter().map(|r| (r.start, r.end)).collect::<Vec<_>>()
        );
    }

    #[test]
    fn regions_are_unions_of_significant_windows() {
        let track = toy_track(500, |i| ((i * 13) % 29) as f64 / 8.0 + if (200..260).contains(&i) { 3.0 } else { 0.0 });
        let params = DetectParams {
            window_size: 600,
            permutations: 50,
            min_probes: 10,
            seed: 2,
            ..Default::default()
        };
        let res = detect(&track, &params).unwrap();
        assert!(!res.regions.is_empty());
        for r in &res.regions {
            assert!(r.len() >= params.window_size);
            let mut covered = r.start;
            for w in res.windows.iter().filter(|w| w.q < params.alpha && w.start >= r.start && w.end <= r.end) {
                assert!(w.start <= covered);
                covered = covered.max(w.end);
            }
            assert_eq!(covered, r.end);
        }
        for pair in res.regions.windows(2) {
            assert!(pair[0].end < pair[1].start);
        }
    }

    #[test]
    fn params_validation() {
        let ok = DetectParams::default();
        assert!(ok.validate(50).is_ok());
        assert!(DetectParams { window_size: 40, ..ok.clone() }.validate(50).is_err());
        assert!(DetectParams { permutations: 0, ..ok.clone() }.validate(50).is_err());
        assert!(DetectParams { min_probes: 2, ..ok.clone() }.validate(50).is_err());
        assert!(DetectParams { min_probes: 1, trim_mode: TrimMode::Median, ..ok.clone() }.validate(50).is_ok());
        assert!(DetectParams { alpha: 1.0, ..ok }.validate(50).is_err());
    }

    proptest! {
        #[test]
        fn sliding_scores_match_direct(values in prop::collection::vec(-20.0..20.0f64, 3..80), gap in 1u64..60, w in 50u64..400) {
            let positions: Vec<u64> = (0..values.len() as u64).map(|i| i * gap).collect();
            let windows = build_windows(&positions, w, 3);
            for mode in [TrimMode::TrimExtremes, TrimMode::Median] {
                let mut out = Vec::new();
                score_windows(&values, &windows, mode, &mut Scratch::default(), &mut out);
                for (win, &s) in windows.iter().zip(&out) {
                    let direct = window_score(&values[win.lo..win.hi], mode).unwrap();
                    prop_assert_eq!(s, direct);
                    if mode == TrimMode::TrimExtremes {
                        prop_assert!((s - naive_trimmed(&values[win.lo..win.hi])).abs() < 1e-8);
                    }
                }
            }
        }

        #[test]
        fn permutation_preserves_bin_multisets(values in prop::collection::vec(-5.0..5.0f64, 1..60), seed: u64, k in 1usize..4) {
            let gc: Vec<f64> = values.iter().map(|v| (v.abs() * 7.0).fract()).collect();
            let k = k.min(values.len());
            let bins = assign_gc_bins(&gc, k).unwrap();
            let out = permute_within_bins(&values, &bins, &mut rng::stream(seed, Purpose::Permutation, 0));
            for b in 0..k {
                let mut x: Vec<f64> = values.iter().zip(&bins).filter(|(_, &bb)| bb == b).map(|(v, _)| *v).collect();
                let mut y: Vec<f64> = out.iter().zip(&bins).filter(|(_, &bb)| bb == b).map(|(v, _)| *v).collect();
                x.sort_by(f64::total_cmp);
                y.sort_by(f64::total_cmp);
                prop_assert_eq!(x, y);
            }
        }

        #[test]
        fn bin_sizes_differ_by_at_most_one(gc in prop::collection::vec(0.0..1.0f64, 1..100), k in 1usize..10) {
            let k = k.min(gc.len());
            let bins = assign_gc_bins(&gc, k).unwrap();
            let mut sizes = vec![0usize; k];
            bins.iter().for_each(|&b| sizes[b] += 1);
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }

        #[test]
        fn empirical_fdr_is_monotone(scores in prop::collection::vec(-3.0..3.0f64, 1..50), seed: u64) {
            let mut rng = rng::stream(seed, Purpose::Permutation, 0);
            let exceed: Vec<u64> = scores.iter().map(|_| rng.random_range(0..100)).collect();
            // exceedances must themselves be non-increasing in score to be coherent
            let mut order: Vec<usize> = (0..scores.len()).collect();
            order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
            let mut sorted_ex = exceed.clone();
            sorted_ex.sort_unstable_by(|a, b| b.cmp(a));
            let mut coherent = vec![0; scores.len()];
            for (r, &i) in order.iter().enumerate() { coherent[i] = sorted_ex[r]; }
            let q = empirical_fdr(&scores, &coherent, 5);
            for &i in &order { prop_assert!((0.0..=1.0).contains(&q[i])); }
            for w in order.windows(2) { prop_assert!(q[w[1]] <= q[w[0]]); }
        }
    }
}

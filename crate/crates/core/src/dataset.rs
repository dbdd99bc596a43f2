//! Probe layouts, spot intensities and the three-array bundle.
//!
//! Coordinates are 1-based; a probe starting at `s` covers bases
//! `s..s + probe_length` (half-open).

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const DEFAULT_PROBE_LENGTH: u64 = 50;
pub const DEFAULT_TILE_STEP: u64 = 20;
pub const BUNDLE_ARRAYS: usize = 3;

const LAYOUT_HEADER: [&str; 6] = ["probe_id", "chrom", "start", "gc", "replicate", "container"];
const INTENSITY_HEADER: [&str; 3] = ["probe_id", "replicate", "value"];

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub id: String,
    pub start: u64,
    pub gc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Spot {
    /// Index into [`ProbeLayout::probes`].
    pub probe: usize,
    pub replicate: u32,
    pub container: u32,
}

/// Every spot on an array, grouped by the probe it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeLayout {
    chrom: String,
    probes: Vec<Probe>,
    spots: Vec<Spot>,
    probe_length: u64,
    tile_step: u64,
    region: Option<(u64, u64)>,
    replicates: usize,
    containers: usize,
    spot_table: Vec<usize>,
}

impl ProbeLayout {
    pub fn new(
        chrom: impl Into<String>,
        probes: Vec<Probe>,
        spots: Vec<Spot>,
        probe_length: u64,
        tile_step: u64,
        region: Option<(u64, u64)>,
    ) -> Result<Self> {
        let chrom = chrom.into();
        if probe_length == 0 {
            return Err(Error::invalid("probe_length must be positive"));
        }
        if tile_step == 0 {
            return Err(Error::invalid("tile_step must be positive"));
        }
        if probes.is_empty() {
            return Err(Error::invalid("layout has no probes"));
        }
        let mut ids = HashSet::with_capacity(probes.len());
        for (i, p) in probes.iter().enumerate() {
            if !(0.0..=1.0).contains(&p.gc) {
                return Err(Error::invalid(format!("gc out of range for probe {}", p.id)));
            }
            if !ids.insert(p.id.as_str()) {
                return Err(Error::invalid(format!("duplicate probe_id {}", p.id)));
            }
            if i > 0 && p.start <= probes[i - 1].start {
                return Err(Error::invalid(format!(
                    "probe starts must be strictly increasing ({} at {})",
                    p.id, p.start
                )));
            }
        }
        if let Some((start, end)) = region {
            if end <= start {
                return Err(Error::invalid("tiled region end must exceed its start"));
            }
        }

        let mut per_probe: Vec<Vec<(u32, u32, usize)>> = vec![Vec::new(); probes.len()];
        for (si, s) in spots.iter().enumerate() {
            let Some(slot) = per_probe.get_mut(s.probe) else {
                return Err(Error::invalid(format!("spot {si} references unknown probe")));
            };
            slot.push((s.replicate, s.container, si));
        }
        let replicates = per_probe.iter().map(Vec::len).max().unwrap_or(0);
        if replicates == 0 {
            return Err(Error::invalid("layout has no spots"));
        }
        let containers = spots.iter().map(|s| s.container as usize + 1).max().unwrap_or(0);
        let mut spot_table = vec![usize::MAX; probes.len() * replicates];
        for (pi, reps) in per_probe.iter().enumerate() {
            let id = &probes[pi].id;
            if reps.len() != replicates {
                return Err(Error::invalid(format!(
                    "probe {id} has {} replicates, expected {replicates}",
                    reps.len()
                )));
            }
            let mut seen_containers = HashSet::with_capacity(replicates);
            for &(rep, container, si) in reps {
                let rep = rep as usize;
                if rep >= replicates {
                    return Err(Error::invalid(format!(
                        "probe {id} replicate {rep} outside 0..{replicates}"
                    )));
                }
                let slot = &mut spot_table[pi * replicates + rep];
                if *slot != usize::MAX {
                    return Err(Error::invalid(format!("duplicate spot {id}:{rep}")));
                }
                *slot = si;
                if !seen_containers.insert(container) {
                    return Err(Error::invalid(format!(
                        "probe {id} has two replicates in container {container}"
                    )));
                }
            }
        }

        Ok(ProbeLayout {
            chrom,
            probes,
            spots,
            probe_length,
            tile_step,
            region,
            replicates,
            containers,
            spot_table,
        })
    }

    pub fn chrom(&self) -> &str {
        &self.chrom
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    pub fn spots(&self) -> &[Spot] {
        &self.spots
    }

    pub fn probe_length(&self) -> u64 {
        self.probe_length
    }

    pub fn tile_step(&self) -> u64 {
        self.tile_step
    }

    /// Replicates per probe (R).
    pub fn replicates(&self) -> usize {
        self.replicates
    }

    /// Number of containers referenced (C).
    pub fn containers(&self) -> usize {
        self.containers
    }

    /// Index of the spot carrying `replicate` of probe `probe`.
    pub fn spot_index(&self, probe: usize, replicate: usize) -> usize {
        self.spot_table[probe * self.replicates + replicate]
    }

    /// The tiled interval `[start, end)`: the declared region when present,
    /// otherwise the span from the first probe start to the end of the last probe.
    pub fn tiled_region(&self) -> (u64, u64) {
        self.region.unwrap_or_else(|| {
            let first = self.probes[0].start;
            let last = self.probes[self.probes.len() - 1].start;
            (first, last + self.probe_length)
        })
    }

    pub fn declared_region(&self) -> Option<(u64, u64)> {
        self.region
    }

    pub fn spot_label(&self, spot: usize) -> String {
        let s = &self.spots[spot];
        format!("{}:{}", self.probes[s.probe].id, s.replicate)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "#probe_length={}", self.probe_length);
        let _ = writeln!(out, "#tile_step={}", self.tile_step);
        if let Some((start, end)) = self.region {
            let _ = writeln!(out, "#region={start}-{end}");
        }
        out.push_str(&LAYOUT_HEADER.join("\t"));
        out.push('\n');
        for s in &self.spots {
            let p = &self.probes[s.probe];
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                p.id, self.chrom, p.start, p.gc, s.replicate, s.container
            );
        }
        out
    }
}

fn parse_field<T: std::str::FromStr>(value: &str, name: &str, line: usize) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("non-numeric {name} '{value}'")))
}

fn check_header(fields: &[&str], expected: &[&str], line: usize) -> Result<()> {
    if fields != expected {
        return Err(Error::parse(
            line,
            format!("expected header '{}'", expected.join("\t")),
        ));
    }
    Ok(())
}

/// Parses a layout TSV.
///
/// Rows for one probe need not be contiguous; probes are ordered by first
/// appearance and spots keep file order.
pub fn parse_layout(text: &str) -> Result<ProbeLayout> {
    let mut probe_length = DEFAULT_PROBE_LENGTH;
    let mut tile_step = DEFAULT_TILE_STEP;
    let mut region = None;
    let mut header_seen = false;
    let mut chrom: Option<String> = None;
    let mut probes: Vec<Probe> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut spots: Vec<Spot> = Vec::new();
    let mut seen: HashSet<(usize, u32)> = HashSet::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        if let Some(directive) = raw.strip_prefix('#') {
            if let Some((key, value)) = directive.split_once('=') {
                match key.trim() {
                    "probe_length" => probe_length = parse_field(value, "probe_length", line)?,
                    "tile_step" => tile_step = parse_field(value, "tile_step", line)?,
                    "region" => {
                        let (a, b) = value
                            .trim()
                            .split_once('-')
                            .ok_or_else(|| Error::parse(line, "region must be START-END"))?;
                        region = Some((
                            parse_field(a, "region start", line)?,
                            parse_field(b, "region end", line)?,
                        ));
                    }
                    _ => {}
                }
            }
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if !header_seen {
            check_header(&fields, &LAYOUT_HEADER, line)?;
            header_seen = true;
            continue;
        }
        if fields.len() != LAYOUT_HEADER.len() {
            return Err(Error::parse(
                line,
                format!("expected {} fields, found {}", LAYOUT_HEADER.len(), fields.len()),
            ));
        }
        let id = fields[0];
        let row_chrom = fields[1];
        let start: u64 = parse_field(fields[2], "start", line)?;
        let gc: f64 = parse_field(fields[3], "gc", line)?;
        let replicate: u32 = parse_field(fields[4], "replicate", line)?;
        let container: u32 = parse_field(fields[5], "container", line)?;
        if !(0.0..=1.0).contains(&gc) {
            return Err(Error::parse(line, "gc out of range"));
        }
        match &chrom {
            None => chrom = Some(row_chrom.to_string()),
            Some(c) if c != row_chrom => {
                return Err(Error::parse(
                    line,
                    format!("mixed chromosomes ({c} and {row_chrom})"),
                ))
            }
            Some(_) => {}
        }
        let probe = match index.get(id) {
            Some(&pi) => {
                let p = &probes[pi];
                if p.start != start || p.gc != gc {
                    return Err(Error::parse(
                        line,
                        format!("probe {id} repeated with different start or gc"),
                    ));
                }
                pi
            }
            None => {
                if let Some(prev) = probes.last() {
                    if start <= prev.start {
                        return Err(Error::parse(
                            line,
                            format!("probe starts must increase ({id} at {start})"),
                        ));
                    }
                }
                probes.push(Probe {
                    id: id.to_string(),
                    start,
                    gc,
                });
                index.insert(id.to_string(), probes.len() - 1);
                probes.len() - 1
            }
        };
        if !seen.insert((probe, replicate)) {
            return Err(Error::parse(line, format!("duplicate spot {id}:{replicate}")));
        }
        spots.push(Spot {
            probe,
            replicate,
            container,
        });
    }
    if !header_seen {
        return Err(Error::invalid("layout is missing its header line"));
    }
    ProbeLayout::new(
        chrom.unwrap_or_default(),
        probes,
        spots,
        probe_length,
        tile_step,
        region,
    )
}

/// Raw (linear-scale) intensities of one physical array, aligned with the
/// spot order of its layout. A NaN entry marks a missing spot.
#[derive(Debug, Clone, PartialEq)]
pub struct SpotIntensities {
    pub array_id: String,
    pub values: Vec<f64>,
}

impl SpotIntensities {
    pub fn to_tsv(&self, layout: &ProbeLayout) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "#array_id={}", self.array_id);
        out.push_str(&INTENSITY_HEADER.join("\t"));
        out.push('\n');
        for (s, v) in layout.spots().iter().zip(&self.values) {
            let _ = writeln!(out, "{}\t{}\t{}", layout.probes()[s.probe].id, s.replicate, v);
        }
        out
    }
}

/// Parses an intensity TSV against `layout`. The array id comes from an
/// `#array_id=` directive and defaults to `array`.
pub fn parse_intensities(text: &str, layout: &ProbeLayout) -> Result<SpotIntensities> {
    let index: HashMap<&str, usize> = layout
        .probes()
        .iter()
        .enumerate()
        .map(|(i, p)| (p.id.as_str(), i))
        .collect();
    let mut array_id = String::from("array");
    let mut values = vec![f64::NAN; layout.spots().len()];
    let mut header_seen = false;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        if let Some(directive) = raw.strip_prefix('#') {
            if let Some(("array_id", value)) = directive.split_once('=') {
                array_id = value.trim().to_string();
            }
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if !header_seen {
            check_header(&fields, &INTENSITY_HEADER, line)?;
            header_seen = true;
            continue;
        }
        if fields.len() != INTENSITY_HEADER.len() {
            return Err(Error::parse(
                line,
                format!("expected {} fields, found {}", INTENSITY_HEADER.len(), fields.len()),
            ));
        }
        let id = fields[0];
        let probe = *index
            .get(id)
            .ok_or_else(|| Error::parse(line, format!("unknown probe_id {id}")))?;
        let replicate: usize = parse_field(fields[1], "replicate", line)?;
        if replicate >= layout.replicates() {
            return Err(Error::parse(line, format!("unknown spot {id}:{replicate}")));
        }
        let value: f64 = parse_field(fields[2], "value", line)?;
        if !value.is_finite() {
            return Err(Error::parse(line, "non-finite intensity"));
        }
        if value < 0.0 {
            return Err(Error::parse(line, "negative intensity"));
        }
        let spot = layout.spot_index(probe, replicate);
        if !values[spot].is_nan() {
            return Err(Error::parse(line, format!("duplicate spot {id}:{replicate}")));
        }
        values[spot] = value;
    }
    if !header_seen {
        return Err(Error::invalid("intensity file is missing its header line"));
    }
    if let Some(missing) = values.iter().position(|v| v.is_nan()) {
        return Err(Error::invalid(format!(
            "missing spot {}",
            layout.spot_label(missing)
        )));
    }
    Ok(SpotIntensities { array_id, values })
}

/// One layout and the three same-sample arrays measured on it.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub layout: ProbeLayout,
    pub arrays: [SpotIntensities; BUNDLE_ARRAYS],
    pub meta: String,
}

pub fn validate_bundle(layout: ProbeLayout, arrays: Vec<SpotIntensities>) -> Result<DatasetBundle> {
    if arrays.len() != BUNDLE_ARRAYS {
        return Err(Error::invalid(format!(
            "exactly 3 arrays required, got {}",
            arrays.len()
        )));
    }
    let mut ids = HashSet::new();
    let n = layout.spots().len();
    for a in &arrays {
        if !ids.insert(a.array_id.as_str()) {
            return Err(Error::invalid(format!("duplicate array_id {}", a.array_id)));
        }
        if a.values.len() > n {
            return Err(Error::invalid(format!(
                "array {} has {} values for {n} spots",
                a.array_id,
                a.values.len()
            )));
        }
        for spot in 0..n {
            match a.values.get(spot) {
                Some(v) if v.is_nan() => {}
                Some(v) if !v.is_finite() || *v < 0.0 => {
                    return Err(Error::invalid(format!(
                        "array {} has invalid intensity {v} at spot {}",
                        a.array_id,
                        layout.spot_label(spot)
                    )))
                }
                Some(_) => continue,
                None => {}
            }
            return Err(Error::invalid(format!(
                "array {} is missing spot {}",
                a.array_id,
                layout.spot_label(spot)
            )));
        }
    }
    let arrays: [SpotIntensities; BUNDLE_ARRAYS] = arrays
        .try_into()
        .map_err(|_| Error::invalid("exactly 3 arrays required"))?;
    Ok(DatasetBundle {
        layout,
        arrays,
        meta: String::new(),
    })
}

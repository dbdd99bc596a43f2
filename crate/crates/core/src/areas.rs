//! Fixed-length genomic areas and per-area expression calls.

use std::fmt::Write as _;

use crate::detect::Region;
use crate::error::{Error, Result};

pub const DEFAULT_AREA_SIZE: u64 = 100;

/// Contiguous `area_size` intervals anchored at `region_start`; a trailing
/// partial area is dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AreaGrid {
    pub region_start: u64,
    pub region_end: u64,
    pub area_size: u64,
}

impl AreaGrid {
    pub fn len(&self) -> usize {
        ((self.region_end - self.region_start) / self.area_size) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `[start, end)` of area `i`.
    pub fn area(&self, i: usize) -> (u64, u64) {
        let start = self.region_start + i as u64 * self.area_size;
        (start, start + self.area_size)
    }

    pub fn areas(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        (0..self.len()).map(|i| self.area(i))
    }
}

pub fn area_grid(region_start: u64, region_end: u64, area_size: u64) -> Result<AreaGrid> {
    if area_size == 0 {
        return Err(Error::invalid("area size must be positive"));
    }
    if region_end <= region_start {
        return Err(Error::invalid("region end must exceed region start"));
    }
    Ok(AreaGrid {
        region_start,
        region_end,
        area_size,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AreaCalls {
    pub grid: AreaGrid,
    pub bits: Vec<bool>,
}

impl AreaCalls {
    pub fn empty(grid: AreaGrid) -> Self {
        AreaCalls {
            grid,
            bits: vec![false; grid.len()],
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("area_index\tstart\tend\texpressed\n");
        for (i, ((start, end), &b)) in self.grid.areas().zip(&self.bits).enumerate() {
            let _ = writeln!(out, "{i}\t{start}\t{end}\t{}", u8::from(b));
        }
        out
    }
}

/// An area is expressed only when its whole interval lies inside one region.
pub fn call_areas(regions: &[Region], grid: &AreaGrid) -> AreaCalls {
    let mut calls = AreaCalls::empty(*grid);
    let n = grid.len() as u64;
    for r in regions {
        let first = r
            .start
            .saturating_sub(grid.region_start)
            .div_ceil(grid.area_size);
        let last = (r.end.saturating_sub(grid.region_start) / grid.area_size).min(n);
        for i in first..last {
            calls.bits[i as usize] = true;
        }
    }
    calls
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn region(start: u64, end: u64) -> Region {
        Region {
            start,
            end,
            max_score: 0.0,
            min_q: 0.0,
        }
    }

    #[test]
    fn grid_examples() {
        assert_eq!(area_grid(127_640_000, 129_120_000, 100).unwrap().len(), 14_800);
        let g = area_grid(0, 250, 100).unwrap();
        assert_eq!(g.areas().collect::<Vec<_>>(), vec![(0, 100), (100, 200)]);
        assert_eq!(area_grid(10, 60, 50).unwrap().len(), 1);
        assert!(area_grid(0, 100, 0).is_err());
        assert!(area_grid(100, 100, 10).is_err());
    }

    #[test]
    fn containment_examples() {
        let g = area_grid(950, 2050, 50).unwrap();
        let calls = call_areas(&[region(1000, 2000)], &g);
        // [950,1000) is outside, [1000,1050) inside
        assert!(!calls.bits[0] && calls.bits[1]);
        let g = area_grid(950, 2050, 100).unwrap();
        let calls = call_areas(&[region(1000, 2000)], &g);
        // [950,1050) only partly overlaps
        assert!(!calls.bits[0]);
        let g = area_grid(1000, 2000, 100).unwrap();
        assert!(call_areas(&[region(1000, 2000)], &g).bits[0]);
        assert_eq!(call_areas(&[], &g).count(), 0);
    }

    #[test]
    fn regions_outside_grid_are_clipped() {
        let g = area_grid(1000, 1500, 100).unwrap();
        let calls = call_areas(&[region(0, 1250), region(1400, 9000)], &g);
        assert_eq!(calls.bits, vec![true, true, false, false, true]);
    }

    /// Direct oracle: test every area against every region.
    fn brute(regions: &[Region], g: &AreaGrid) -> Vec<bool> {
        g.areas()
            .map(|(s, e)| regions.iter().any(|r| r.start <= s && e <= r.end))
            .collect()
    }

    fn regions() -> impl Strategy<Value = Vec<Region>> {
        prop::collection::vec((0u64..3000, 1u64..800), 0..6).prop_map(|mut v| {
            v.sort();
            let mut out: Vec<Region> = Vec::new();
            for (s, len) in v {
                let s = out.last().map_or(s, |r: &Region| s.max(r.end + 1));
                out.push(region(s, s + len));
            }
            out
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force(rs in regions(), start in 0u64..500, size in 1u64..150) {
            let g = area_grid(start, start + 4000, size).unwrap();
            let calls = call_areas(&rs, &g);
            prop_assert_eq!(&calls.bits, &brute(&rs, &g));
            let covered: u64 = rs.iter().map(Region::len).sum();
            prop_assert!(calls.count() as u64 * size <= covered);
        }

        #[test]
        fn enlarging_regions_is_monotone(rs in regions(), grow in 0u64..200) {
            let g = area_grid(0, 5000, 100).unwrap();
            let before = call_areas(&rs, &g);
            let grown: Vec<Region> = rs.iter().map(|r| region(r.start.saturating_sub(grow), r.end + grow)).collect();
            let after = call_areas(&grown, &g);
            for (b, a) in before.bits.iter().zip(&after.bits) {
                prop_assert!(!b || *a);
            }
        }
    }
}

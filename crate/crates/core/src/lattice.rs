//! Rectangular windows of Z or Z², occupancy configurations and boundary conditions.
//!
//! Sites are indexed row-major: index = (y - origin_y) * width + (x - origin_x).
//! One-dimensional regions have height 1 and only accept sites with y = 0.
//! Bit value 1 means occupied, 0 means empty.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::rng::RandomStream;

pub type Site = [i64; 2];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    dim: u8,
    origin: Site,
    width: usize,
    height: usize,
}

impl Region {
    /// Sites `origin, origin + 1, ..., origin + len - 1` of Z.
    pub fn line(origin: i64, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidRegion("empty line".into()));
        }
        Ok(Region { dim: 1, origin: [origin, 0], width: len, height: 1 })
    }

    pub fn rect(origin: Site, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidRegion(format!("extent {width}x{height}")));
        }
        Ok(Region { dim: 2, origin, width, height })
    }

    /// The box `[-r, r]^dim` centred on the origin.
    pub fn centered(dim: u8, r: usize) -> Result<Self> {
        let side = 2 * r + 1;
        match dim {
            1 => Region::line(-(r as i64), side),
            2 => Region::rect([-(r as i64), -(r as i64)], side, side),
            _ => Err(Error::InvalidRegion(format!("dimension {dim}"))),
        }
    }

    pub fn dim(&self) -> u8 {
        self.dim
    }
    pub fn origin(&self) -> Site {
        self.origin
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn len(&self) -> usize {
        self.width * self.height
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, s: Site) -> bool {
        self.index(s).is_some()
    }

    #[inline]
    pub fn index(&self, s: Site) -> Option<usize> {
        let dx = s[0] - self.origin[0];
        let dy = s[1] - self.origin[1];
        if dx < 0 || dy < 0 || dx as usize >= self.width || dy as usize >= self.height {
            return None;
        }
        Some(dy as usize * self.width + dx as usize)
    }

    #[inline]
    pub fn site(&self, i: usize) -> Site {
        [self.origin[0] + (i % self.width) as i64, self.origin[1] + (i / self.width) as i64]
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len()).map(move |i| self.site(i))
    }

    pub fn is_subregion_of(&self, other: &Region) -> bool {
        self.dim == other.dim
            && other.contains(self.origin)
            && other.contains([
                self.origin[0] + self.width as i64 - 1,
                self.origin[1] + self.height as i64 - 1,
            ])
    }
}

/// Outer configuration used wherever a rule reaches outside the region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoundaryCondition {
    AllOccupied,
    AllEmpty,
    /// Explicit bits (true = occupied); any other out-of-region lookup is an error.
    Explicit(BTreeMap<Site, bool>),
}

impl BoundaryCondition {
    pub fn occupied(&self, s: Site) -> Result<bool> {
        match self {
            BoundaryCondition::AllOccupied => Ok(true),
            BoundaryCondition::AllEmpty => Ok(false),
            BoundaryCondition::Explicit(m) => m.get(&s).copied().ok_or(Error::MissingBoundary(s)),
        }
    }

    /// Parses `occupied`, `empty`, or a JSON document `{"sites":[[x,y,bit],...]}`.
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "occupied" | "1" => return Ok(BoundaryCondition::AllOccupied),
            "empty" | "0" => return Ok(BoundaryCondition::AllEmpty),
            _ => {}
        }
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("boundary file: {e}")))?;
        let sites = v
            .get("sites")
            .and_then(|s| s.as_array())
            .ok_or_else(|| Error::Parse("boundary file needs a `sites` array".into()))?;
        let mut map = BTreeMap::new();
        for entry in sites {
            let a: Vec<i64> = entry
                .as_array()
                .map(|a| a.iter().filter_map(|x| x.as_i64()).collect())
                .unwrap_or_default();
            let (site, bit) = match a.as_slice() {
                [x, b] => ([*x, 0], *b),
                [x, y, b] => ([*x, *y], *b),
                _ => return Err(Error::Parse(format!("bad boundary entry {entry}"))),
            };
            if bit != 0 && bit != 1 {
                return Err(Error::Parse(format!("boundary bit must be 0 or 1, got {bit}")));
            }
            map.insert(site, bit == 1);
        }
        Ok(BoundaryCondition::Explicit(map))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    region: Region,
    words: Vec<u64>,
}

impl Configuration {
    pub fn all_occupied(region: &Region) -> Self {
        let n = region.len();
        let mut words = vec![u64::MAX; n.div_ceil(64)];
        if n % 64 != 0 {
            *words.last_mut().unwrap() = (1u64 << (n % 64)) - 1;
        }
        Configuration { region: region.clone(), words }
    }

    pub fn all_empty(region: &Region) -> Self {
        Configuration { region: region.clone(), words: vec![0; region.len().div_ceil(64)] }
    }

    pub fn from_fn(region: &Region, mut occupied: impl FnMut(Site) -> bool) -> Self {
        let mut c = Configuration::all_empty(region);
        for i in 0..region.len() {
            if occupied(region.site(i)) {
                c.set(i, true);
            }
        }
        c
    }

    /// Occupancy bits from the low bits of `mask` (bit i = site index i).
    pub fn from_mask(region: &Region, mask: u64) -> Self {
        assert!(region.len() <= 64);
        let mut c = Configuration::all_empty(region);
        if region.len() < 64 {
            c.words[0] = mask & ((1u64 << region.len()) - 1);
        } else {
            c.words[0] = mask;
        }
        c
    }

    pub fn to_mask(&self) -> u64 {
        assert!(self.len() <= 64);
        self.words[0]
    }

    /// Each site independently empty with probability `q`.
    pub fn sample_product(region: &Region, q: f64, stream: &mut RandomStream) -> Result<Self> {
        if !(0.0..=1.0).contains(&q) {
            return param(format!("vacancy probability {q} outside [0,1]"));
        }
        let mut c = Configuration::all_empty(region);
        for i in 0..region.len() {
            if !stream.bernoulli(q) {
                c.set(i, true);
            }
        }
        Ok(c)
    }

    pub fn region(&self) -> &Region {
        &self.region
    }
    pub fn len(&self) -> usize {
        self.region.len()
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        (self.words[i >> 6] >> (i & 63)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, occupied: bool) {
        let w = &mut self.words[i >> 6];
        if occupied {
            *w |= 1 << (i & 63);
        } else {
            *w &= !(1 << (i & 63));
        }
    }

    #[inline]
    pub fn toggle(&mut self, i: usize) {
        self.words[i >> 6] ^= 1 << (i & 63);
    }

    pub fn flip(&self, s: Site) -> Result<Self> {
        let i = self.region.index(s).ok_or(Error::OutOfRegion(s))?;
        let mut c = self.clone();
        c.toggle(i);
        Ok(c)
    }

    pub fn at(&self, s: Site) -> Option<bool> {
        self.region.index(s).map(|i| self.get(i))
    }

    /// The concatenation of this configuration with the boundary condition, read at `s`.
    pub fn lookup(&self, s: Site, bc: &BoundaryCondition) -> Result<bool> {
        match self.region.index(s) {
            Some(i) => Ok(self.get(i)),
            None => bc.occupied(s),
        }
    }

    pub fn vacancy_count(&self) -> usize {
        self.len() - self.words.iter().map(|w| w.count_ones() as usize).sum::<usize>()
    }

    pub fn empty_sites(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.get(i)).collect()
    }

    pub fn is_all_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Sitewise: every site empty in `self` is empty in `other`.
    pub fn vacancies_subset_of(&self, other: &Configuration) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| !a & b == 0)
    }

    pub fn to_text(&self) -> String {
        let r = &self.region;
        let mut s = format!("{} {} {} {}\n", r.width, r.height, r.origin[0], r.origin[1]);
        for y in 0..r.height {
            for x in 0..r.width {
                s.push(if self.get(y * r.width + x) { '1' } else { '0' });
            }
            s.push('\n');
        }
        s
    }

    /// Inverse of [`Configuration::to_text`]. A header with height 1 and origin_y 0 gives a 1D region.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("missing header".into()))?;
        let nums: Vec<i64> = header
            .split_whitespace()
            .map(|t| t.parse::<i64>().map_err(|e| Error::Parse(format!("header `{header}`: {e}"))))
            .collect::<Result<_>>()?;
        let [w, h, ox, oy] = nums[..] else {
            return Err(Error::Parse(format!("header `{header}` needs 4 integers")));
        };
        if w <= 0 || h <= 0 {
            return Err(Error::Parse(format!("non-positive extent in `{header}`")));
        }
        let region = if h == 1 && oy == 0 {
            Region::line(ox, w as usize)?
        } else {
            Region::rect([ox, oy], w as usize, h as usize)?
        };
        let mut c = Configuration::all_empty(&region);
        for y in 0..h as usize {
            let line = lines.next().ok_or_else(|| Error::Parse(format!("missing row {y}")))?.trim();
            if line.len() != w as usize {
                return Err(Error::Parse(format!("row {y} has length {}, expected {w}", line.len())));
            }
            for (x, ch) in line.chars().enumerate() {
                match ch {
                    '1' => c.set(y * w as usize + x, true),
                    '0' => {}
                    _ => return Err(Error::Parse(format!("bad character `{ch}` in row {y}"))),
                }
            }
        }
        if lines.next().is_some() {
            return Err(Error::Parse("trailing rows".into()));
        }
        Ok(c)
    }

    /// Compact single-line rendering for 1D debugging output.
    pub fn bits_string(&self) -> String {
        let mut s = String::with_capacity(self.len());
        for i in 0..self.len() {
            let _ = write!(s, "{}", self.get(i) as u8);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flip_centre_of_three_by_three() {
        let r = Region::rect([0, 0], 3, 3).unwrap();
        let c = Configuration::all_occupied(&r).flip([1, 1]).unwrap();
        assert_eq!(c.vacancy_count(), 1);
        assert_eq!(c.at([1, 1]), Some(false));
        assert!(matches!(c.flip([3, 0]), Err(Error::OutOfRegion(_))));
    }

    #[test]
    fn lookup_uses_boundary_outside() {
        let r = Region::rect([0, 0], 2, 2).unwrap();
        let c = Configuration::all_empty(&r);
        assert!(c.lookup([5, 5], &BoundaryCondition::AllOccupied).unwrap());
        assert!(!c.lookup([1, 1], &BoundaryCondition::AllOccupied).unwrap());
        let bc = BoundaryCondition::Explicit(BTreeMap::from([([-1, 0], false)]));
        assert!(!c.lookup([-1, 0], &bc).unwrap());
        assert_eq!(c.lookup([-2, 0], &bc), Err(Error::MissingBoundary([-2, 0])));
    }

    #[test]
    fn lookup_agrees_with_bits_on_four_by_four() {
        let r = Region::rect([-2, 3], 4, 4).unwrap();
        for mask in 0..(1u64 << 16) {
            let c = Configuration::from_mask(&r, mask);
            for i in 0..16 {
                let s = r.site(i);
                assert_eq!(c.lookup(s, &BoundaryCondition::AllEmpty).unwrap(), (mask >> i) & 1 == 1);
            }
        }
    }

    #[test]
    fn sampling_extremes() {
        let r = Region::rect([0, 0], 5, 4).unwrap();
        let mut s = RandomStream::new(1, "test");
        assert_eq!(Configuration::sample_product(&r, 0.0, &mut s).unwrap(), Configuration::all_occupied(&r));
        assert!(Configuration::sample_product(&r, 1.0, &mut s).unwrap().is_all_empty());
        assert!(Configuration::sample_product(&r, 1.5, &mut s).is_err());
    }

    #[test]
    fn sampling_vacancy_fraction_chi_square() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let r = Region::rect([0, 0], 32, 32).unwrap();
        let q = 0.5;
        let mut s = RandomStream::new(7, "sampling");
        let n = 10_000;
        let mut total = 0usize;
        let mut per_site = vec![0usize; r.len()];
        for _ in 0..n {
            let c = Configuration::sample_product(&r, q, &mut s).unwrap();
            total += c.vacancy_count();
            for i in c.empty_sites() {
                per_site[i] += 1;
            }
        }
        let mean = total as f64 / (n * r.len()) as f64;
        let sd = (q * (1.0 - q) / (n * r.len()) as f64).sqrt();
        assert!((mean - q).abs() < 3.0 * sd, "mean {mean}");
        let chi2: f64 = per_site
            .iter()
            .map(|&k| (k as f64 - n as f64 * q).powi(2) / (n as f64 * q * (1.0 - q)))
            .sum();
        let crit = ChiSquared::new(r.len() as f64).unwrap().inverse_cdf(0.99);
        assert!(chi2 < crit, "chi2 {chi2} >= {crit}");
    }

    #[test]
    fn text_round_trip_fixed() {
        let text = "3 2 -1 4\n101\n011\n";
        let c = Configuration::parse(text).unwrap();
        assert_eq!(c.to_text(), text);
        assert_eq!(c.at([-1, 4]), Some(true));
        assert_eq!(c.at([0, 4]), Some(false));
        assert_eq!(c.at([-1, 5]), Some(false));
        assert!(Configuration::parse("2 1 0 0\n1x\n").is_err());
        assert!(Configuration::parse("2 2 0 0\n11\n").is_err());
    }

    #[test]
    fn one_dimensional_header() {
        let c = Configuration::parse("4 1 -2 0\n1100\n").unwrap();
        assert_eq!(c.region().dim(), 1);
        assert_eq!(c.at([-2, 0]), Some(true));
    }

    proptest! {
        #[test]
        fn flip_is_involution(w in 1usize..9, h in 1usize..9, seed in any::<u64>(), i in 0usize..81) {
            let r = Region::rect([seed as i64 % 7, -3], w, h).unwrap();
            let mut s = RandomStream::new(seed, "flip");
            let c = Configuration::sample_product(&r, 0.4, &mut s).unwrap();
            let site = r.site(i % r.len());
            let f = c.flip(site).unwrap();
            prop_assert_eq!(f.flip(site).unwrap(), c.clone());
            let delta = f.vacancy_count() as i64 - c.vacancy_count() as i64;
            prop_assert_eq!(delta.abs(), 1);
        }

        #[test]
        fn text_round_trip(w in 1usize..40, h in 1usize..6, ox in -50i64..50, oy in -50i64..50, seed in any::<u64>()) {
            let r = Region::rect([ox, oy], w, h).unwrap();
            let mut s = RandomStream::new(seed, "text");
            let c = Configuration::sample_product(&r, 0.5, &mut s).unwrap();
            let back = Configuration::parse(&c.to_text()).unwrap();
            prop_assert_eq!(back.to_text(), c.to_text());
            for i in 0..r.len() {
                prop_assert_eq!(back.at(r.site(i)), Some(c.get(i)));
            }
        }

        #[test]
        fn index_site_bijection(w in 1usize..20, h in 1usize..20, ox in -9i64..9, oy in -9i64..9) {
            let r = Region::rect([ox, oy], w, h).unwrap();
            for i in 0..r.len() {
                prop_assert_eq!(r.index(r.site(i)), Some(i));
            }
        }
    }
}

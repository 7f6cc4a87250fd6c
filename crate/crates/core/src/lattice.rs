//! Finite sublattices of `Z^D` with the l1 metric.
//!
//! Every [`Region`] keeps its sites sorted lexicographically by coordinates.
//! That order fixes the tensor-product basis of operators built on the region
//! and is also the well-ordering used by the connected-set counting run.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of `Z^D`. Serialized as its coordinate list; a bare integer is
/// also accepted as a one-dimensional site.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Site(Vec<i64>);

impl<'de> Deserialize<'de> for Site {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Scalar(i64),
            Coords(Vec<i64>),
        }
        Ok(match Repr::deserialize(d)? {
            Repr::Scalar(x) => Site(vec![x]),
            Repr::Coords(c) => Site(c),
        })
    }
}

impl Site {
    pub fn new(coords: impl Into<Vec<i64>>) -> Self {
        Site(coords.into())
    }

    /// The origin of `Z^dim`.
    pub fn origin(dim: usize) -> Self {
        Site(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.0
    }

    /// `self + offset`, coordinate-wise.
    pub fn shifted(&self, offset: &[i64]) -> Site {
        Site(self.0.iter().zip(offset).map(|(a, b)| a + b).collect())
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, c) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl From<i64> for Site {
    fn from(x: i64) -> Self {
        Site(vec![x])
    }
}

pub fn l1_distance(x: &Site, y: &Site) -> Result<u64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    Ok(l1_unchecked(x, y))
}

fn l1_unchecked(x: &Site, y: &Site) -> u64 {
    x.0.iter().zip(&y.0).map(|(a, b)| a.abs_diff(*b)).sum()
}

/// Two sites are R-connected when their R-balls intersect, which under the
/// l1 metric is exactly `d(x, y) <= 2R`.
pub fn r_connected(x: &Site, y: &Site, range: u32) -> bool {
    x.dim() == y.dim() && l1_unchecked(x, y) <= 2 * u64::from(range)
}

/// A finite set of sites in canonical (lexicographic) order.
#[derive(Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Site>", into = "Vec<Site>")]
pub struct Region {
    sites: Vec<Site>,
}

impl TryFrom<Vec<Site>> for Region {
    type Error = Error;

    fn try_from(sites: Vec<Site>) -> Result<Self> {
        if let Some(first) = sites.first() {
            let dim = first.dim();
            if let Some(bad) = sites.iter().find(|s| s.dim() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: bad.dim(),
                });
            }
        }
        Ok(Region::from_sites(sites))
    }
}

impl From<Region> for Vec<Site> {
    fn from(r: Region) -> Self {
        r.sites
    }
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(&self.sites).finish()
    }
}

impl FromIterator<Site> for Region {
    fn from_iter<T: IntoIterator<Item = Site>>(iter: T) -> Self {
        Region::from_sites(iter)
    }
}

impl<'a> IntoIterator for &'a Region {
    type Item = &'a Site;
    type IntoIter = std::slice::Iter<'a, Site>;

    fn into_iter(self) -> Self::IntoIter {
        self.sites.iter()
    }
}

impl Region {
    pub fn empty() -> Self {
        Region::default()
    }

    /// Sorts and deduplicates.
    pub fn from_sites(sites: impl IntoIterator<Item = Site>) -> Self {
        let mut sites: Vec<Site> = sites.into_iter().collect();
        sites.sort();
        sites.dedup();
        Region { sites }
    }

    /// The one-dimensional chain `{0, 1, ..., n-1}`.
    pub fn chain(n: usize) -> Self {
        Region {
            sites: (0..n as i64).map(Site::from).collect(),
        }
    }

    /// Sites of a one-dimensional region given by their coordinates.
    pub fn line(coords: impl IntoIterator<Item = i64>) -> Self {
        Region::from_sites(coords.into_iter().map(Site::from))
    }

    /// The hypercube `[-half_width, half_width]^dim`.
    pub fn hypercube(dim: usize, half_width: i64) -> Self {
        let mut sites = vec![Vec::with_capacity(dim)];
        for _ in 0..dim {
            sites = sites
                .into_iter()
                .flat_map(|prefix| {
                    (-half_width..=half_width).map(move |c| {
                        let mut p = prefix.clone();
                        p.push(c);
                        p
                    })
                })
                .collect();
        }
        Region {
            sites: sites.into_iter().map(Site).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Site> {
        self.sites.iter()
    }

    pub fn contains(&self, x: &Site) -> bool {
        self.sites.binary_search(x).is_ok()
    }

    /// Position of `x` in canonical order.
    pub fn index_of(&self, x: &Site) -> Option<usize> {
        self.sites.binary_search(x).ok()
    }

    pub fn is_subset(&self, other: &Region) -> bool {
        self.sites.iter().all(|s| other.contains(s))
    }

    pub fn is_disjoint(&self, other: &Region) -> bool {
        self.sites.iter().all(|s| !other.contains(s))
    }

    pub fn union(&self, other: &Region) -> Region {
        Region::from_sites(self.sites.iter().chain(&other.sites).cloned())
    }

    pub fn intersection(&self, other: &Region) -> Region {
        Region {
            sites: self
                .sites
                .iter()
                .filter(|s| other.contains(s))
                .cloned()
                .collect(),
        }
    }

    pub fn difference(&self, other: &Region) -> Region {
        Region {
            sites: self
                .sites
                .iter()
                .filter(|s| !other.contains(s))
                .cloned()
                .collect(),
        }
    }

    pub fn with(&self, x: Site) -> Region {
        let mut sites = self.sites.clone();
        if let Err(pos) = sites.binary_search(&x) {
            sites.insert(pos, x);
        }
        Region { sites }
    }

    /// Subset selected by the bits of `mask` (bit k selects the k-th site).
    pub fn subset_by_mask(&self, mask: u64) -> Region {
        Region {
            sites: self
                .sites
                .iter()
                .enumerate()
                .filter(|(k, _)| mask >> k & 1 == 1)
                .map(|(_, s)| s.clone())
                .collect(),
        }
    }

    /// Bitmask of `sub` relative to this region; `None` if `sub` is not a subset.
    pub fn mask_of(&self, sub: &Region) -> Option<u64> {
        sub.iter()
            .try_fold(0u64, |m, s| self.index_of(s).map(|k| m | 1 << k))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("regions always serialize")
    }

    pub fn from_json(s: &str) -> Result<Region> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Whether two sets are R-connected to each other.
pub fn regions_r_connected(a: &Region, b: &Region, range: u32) -> bool {
    a.iter().any(|x| b.iter().any(|y| r_connected(x, y, range)))
}

/// Whether a nonempty set is a single R-connected cluster.
pub fn is_r_connected(set: &Region, range: u32) -> bool {
    !set.is_empty() && supercluster_decompose(std::slice::from_ref(set), range).len() == 1
}

pub fn set_distance(x: &Region, y: &Region) -> Result<u64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let mut best = u64::MAX;
    for a in x {
        for b in y {
            best = best.min(l1_distance(a, b)?);
        }
    }
    Ok(best)
}

/// Offsets of the unclipped l1 ball of radius `r` in `Z^dim`, lexicographic.
pub fn ball_offsets(dim: usize, r: u32) -> Vec<Vec<i64>> {
    fn rec(dim: usize, budget: i64, prefix: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if prefix.len() == dim {
            out.push(prefix.clone());
            return;
        }
        let used: i64 = prefix.iter().map(|c| c.abs()).sum();
        let left = budget - used;
        for c in -left..=left {
            prefix.push(c);
            rec(dim, budget, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, i64::from(r), &mut Vec::with_capacity(dim), &mut out);
    out
}

/// Partition of the union of `parts` into maximal R-connected components,
/// ordered by their smallest site.
pub fn supercluster_decompose(parts: &[Region], range: u32) -> Vec<Region> {
    let union: Vec<Site> = parts
        .iter()
        .flat_map(|p| p.iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n = union.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if r_connected(&union[i], &union[j], range) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<Site>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let root = find(&mut parent, i);
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[root]].push(union[i].clone());
    }
    // Roots are the minimal index of each group, so groups come out ordered
    // by smallest site and each group is already sorted.
    groups.into_iter().map(|sites| Region { sites }).collect()
}

/// Dimension, interaction range and the finite lattice itself.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeGeometry {
    dim: usize,
    range: u32,
    lattice: Region,
}

impl LatticeGeometry {
    pub fn new(dim: usize, range: u32, lattice: Region) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if range == 0 {
            return Err(Error::InvalidArgument("range must be positive".into()));
        }
        if let Some(bad) = lattice.iter().find(|s| s.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.dim(),
            });
        }
        Ok(LatticeGeometry {
            dim,
            range,
            lattice,
        })
    }

    /// An open chain of `n` sites.
    pub fn chain(n: usize, range: u32) -> Result<Self> {
        LatticeGeometry::new(1, range, Region::chain(n))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn range(&self) -> u32 {
        self.range
    }

    pub fn lattice(&self) -> &Region {
        &self.lattice
    }

    /// Size of an unclipped R-ball, `|B_R|`.
    pub fn ball_volume(&self) -> usize {
        ball_offsets(self.dim, self.range).len()
    }

    /// `{y : d(x, y) <= r}`, intersected with the lattice unless `unclipped`.
    pub fn ball(&self, x: &Site, r: u32, unclipped: bool) -> Region {
        let sites = ball_offsets(self.dim, r)
            .into_iter()
            .map(|off| x.shifted(&off))
            .filter(|y| unclipped || self.lattice.contains(y));
        // Offsets are lexicographic, so shifted sites are too.
        Region {
            sites: sites.collect(),
        }
    }

    fn check_subset(&self, m: &Region) -> Result<()> {
        if m.is_subset(&self.lattice) {
            Ok(())
        } else {
            Err(Error::NotSubset("the lattice"))
        }
    }

    pub fn ball_fits(&self, x: &Site) -> bool {
        self.ball(x, self.range, true).is_subset(&self.lattice)
    }

    /// Sites of `m` whose R-ball lies inside the lattice.
    pub fn interior(&self, m: &Region) -> Result<Region> {
        self.check_subset(m)?;
        Ok(Region {
            sites: m.iter().filter(|x| self.ball_fits(x)).cloned().collect(),
        })
    }

    /// The lattice intersected with the union of R-balls around `m`.
    pub fn closure(&self, m: &Region) -> Result<Region> {
        self.check_subset(m)?;
        Ok(Region::from_sites(m.iter().flat_map(|x| {
            self.ball(x, self.range, false).sites.into_iter()
        })))
    }

    /// Every R-connected `S` in the lattice with `v1 ∈ S` and `|S| = k`.
    ///
    /// Sets are grown one site at a time; a child `S ∪ {y}` is kept only when
    /// `y` is the last site of the child's own counting run, so every set has
    /// exactly one parent and appears once.
    pub fn enumerate_connected_sets(&self, v1: &Site, k: usize) -> Result<Vec<Region>> {
        if k == 0 {
            return Err(Error::InvalidArgument("set size k must be positive".into()));
        }
        if !self.lattice.contains(v1) {
            return Err(Error::NotSubset("the lattice"));
        }
        let reach = ball_offsets(self.dim, 2 * self.range);
        let mut out = Vec::new();
        let mut stack = vec![Region {
            sites: vec![v1.clone()],
        }];
        while let Some(set) = stack.pop() {
            if set.len() == k {
                out.push(set);
                continue;
            }
            let frontier: BTreeSet<Site> = set
                .iter()
                .flat_map(|s| reach.iter().map(move |off| s.shifted(off)))
                .filter(|y| self.lattice.contains(y) && !set.contains(y))
                .collect();
            for y in frontier {
                let child = set.with(y.clone());
                let run = counting_run(&child, v1, self.range)?;
                if run.order.last() == Some(&y) {
                    stack.push(child);
                }
            }
        }
        out.sort_by(|a, b| a.sites.cmp(&b.sites));
        Ok(out)
    }

    pub fn count_connected_sets(&self, v1: &Site, k: usize) -> Result<usize> {
        Ok(self.enumerate_connected_sets(v1, k)?.len())
    }
}

/// `(2e(2R+1)^D)^(k-1)`, the bound on the number of R-connected sets of size
/// `k` through a fixed site.
pub fn connected_set_bound(dim: usize, range: u32, k: usize) -> f64 {
    let base = 2.0 * std::f64::consts::E * f64::from(2 * range + 1).powi(dim as i32);
    base.powi(k.saturating_sub(1) as i32)
}

/// A trace of the counting algorithm on one set.
///
/// `advances[t]` is false when step `t` appended a site and true when it moved
/// on to the next queued site. `choices` gives, for each appended site, its
/// index inside the lexicographic `2R`-ball around the site it was found from.
/// The pair determines the set, which is what makes the run count an upper
/// bound on the set count.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CountingRun {
    pub order: Vec<Site>,
    pub advances: Vec<bool>,
    pub choices: Vec<usize>,
}

/// Runs the queue algorithm on `set` from `v1`: look at the earliest queued
/// site, append the smallest unqueued member of `set` R-connected to it, or
/// advance when there is none.
pub fn counting_run(set: &Region, v1: &Site, range: u32) -> Result<CountingRun> {
    if !set.contains(v1) {
        return Err(Error::NotSubset("the counted set"));
    }
    let k = set.len();
    let reach = ball_offsets(v1.dim(), 2 * range);
    let mut order = vec![v1.clone()];
    let mut queued = vec![false; k];
    queued[set.index_of(v1).expect("checked above")] = true;
    let mut advances = Vec::with_capacity(2 * k);
    let mut choices = Vec::with_capacity(k);
    let mut i = 0;
    while order.len() < k || i + 1 < k {
        let Some(current) = order.get(i).cloned() else {
            return Err(Error::NotConnected);
        };
        let next = set
            .iter()
            .enumerate()
            .find(|(idx, s)| !queued[*idx] && r_connected(&current, s, range));
        match next {
            Some((idx, s)) => {
                let offset: Vec<i64> = s
                    .coords()
                    .iter()
                    .zip(current.coords())
                    .map(|(a, b)| a - b)
                    .collect();
                let choice = reach
                    .iter()
                    .position(|o| *o == offset)
                    .expect("R-connected sites lie in the 2R-ball");
                queued[idx] = true;
                order.push(s.clone());
                choices.push(choice);
                advances.push(false);
            }
            None => {
                i += 1;
                advances.push(true);
            }
        }
    }
    Ok(CountingRun {
        order,
        advances,
        choices,
    })
}

impl CountingRun {
    /// Rebuilds the set from the run record alone.
    pub fn replay(&self, v1: &Site, range: u32) -> Region {
        let reach = ball_offsets(v1.dim(), 2 * range);
        let mut order = vec![v1.clone()];
        let mut i = 0;
        let mut choices = self.choices.iter();
        for &adv in &self.advances {
            if adv {
                i += 1;
            } else if let Some(&c) = choices.next() {
                order.push(order[i].shifted(&reach[c]));
            }
        }
        Region::from_sites(order)
    }
}

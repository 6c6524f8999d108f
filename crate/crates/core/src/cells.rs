//! Cells generated by a family of hyperboloid cuts, and the orderings of
//! those cells that fix the order of collapse operators.
//!
//! Particles are indexed `0..N` and flashes `1..=n_i`; the cut of flash
//! `(i, k)` is `hyperboloids[i][k - 1]`. An event's 4-cell index counts, per
//! particle, the cuts lying at or below it. The closed 4-cell `k` is the set
//! of events with `k<(e) <= k <= k<=(e)`, where `k<` counts cuts strictly
//! below and `k<=` cuts at or below; for a predecessor-complete `V` the union
//! of these closed cells is `{e : k<(e) in V}`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Cut, Event, Strip};

/// Largest number of 4-cells for which admissible sequences are enumerated.
pub const ENUMERATION_GUARD: usize = 12;

/// Abstract 4-cell `(k_1, ..., k_N)` with `0 <= k_i <= n_i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AbstractCell4(pub Vec<usize>);

impl AbstractCell4 {
    pub fn zero(particles: usize) -> Self {
        AbstractCell4(vec![0; particles])
    }

    /// Sum of the indices, the level used by the canonical ordering.
    pub fn level(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn fits(&self, n: &[usize]) -> bool {
        self.0.len() == n.len() && self.0.iter().zip(n).all(|(k, m)| k <= m)
    }

    /// Cells with one index decremented.
    pub fn predecessors(&self) -> impl Iterator<Item = AbstractCell4> + '_ {
        (0..self.0.len()).filter(|&j| self.0[j] > 0).map(|j| {
            let mut k = self.0.clone();
            k[j] -= 1;
            AbstractCell4(k)
        })
    }

    pub fn is_below(&self, other: &AbstractCell4) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }
}

impl std::fmt::Display for AbstractCell4 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for k in &self.0 {
            write!(f, "{k}")?;
        }
        Ok(())
    }
}

/// Abstract 3-cell: the face of 4-cell `cell` lying on a cut of `particle`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AbstractCell3 {
    pub particle: usize,
    pub cell: AbstractCell4,
}

impl AbstractCell3 {
    pub fn new(particle: usize, cell: AbstractCell4) -> Result<Self> {
        match cell.0.get(particle) {
            Some(&k) if k >= 1 => Ok(AbstractCell3 { particle, cell }),
            _ => Err(crate::error::invalid(
                "3-cell",
                format!("particle {particle} needs index >= 1 in cell {cell}"),
            )),
        }
    }

    pub fn flash(&self) -> usize {
        self.cell.0[self.particle]
    }
}

pub fn count_cells(n: &[usize]) -> usize {
    n.iter().map(|&m| m + 1).product()
}

/// All abstract 4-cells in lexicographic order.
pub fn all_cells(n: &[usize]) -> Vec<AbstractCell4> {
    let mut out = vec![AbstractCell4(Vec::with_capacity(n.len()))];
    for &m in n {
        out = out
            .into_iter()
            .flat_map(|c| {
                (0..=m).map(move |k| {
                    let mut v = c.0.clone();
                    v.push(k);
                    AbstractCell4(v)
                })
            })
            .collect();
    }
    out
}

pub fn is_predecessor_complete(set: &BTreeSet<AbstractCell4>) -> bool {
    set.iter()
        .all(|c| c.predecessors().all(|p| set.contains(&p)))
}

/// A predecessor-complete set of abstract 4-cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredecessorSet {
    members: BTreeSet<AbstractCell4>,
}

impl PredecessorSet {
    pub fn new(members: impl IntoIterator<Item = AbstractCell4>) -> Result<Self> {
        let members: BTreeSet<_> = members.into_iter().collect();
        if !is_predecessor_complete(&members) {
            return Err(Error::NotPredecessorComplete);
        }
        Ok(PredecessorSet { members })
    }

    pub fn empty() -> Self {
        PredecessorSet {
            members: BTreeSet::new(),
        }
    }

    pub fn contains(&self, c: &AbstractCell4) -> bool {
        self.members.contains(c)
    }

    pub fn members(&self) -> &BTreeSet<AbstractCell4> {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// An ordering of all abstract 4-cells in which every cell comes after its
/// predecessors.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AdmissibleSequence {
    n: Vec<usize>,
    order: Vec<AbstractCell4>,
}

impl AdmissibleSequence {
    pub fn new(n: &[usize], order: Vec<AbstractCell4>) -> Result<Self> {
        if order.len() != count_cells(n) {
            return Err(Error::NotAdmissible(format!(
                "{} cells listed, {} exist",
                order.len(),
                count_cells(n)
            )));
        }
        let mut seen = BTreeSet::new();
        for c in &order {
            if !c.fits(n) {
                return Err(Error::NotAdmissible(format!("cell {c} out of range")));
            }
            if let Some(p) = c.predecessors().find(|p| !seen.contains(p)) {
                return Err(Error::NotAdmissible(format!("{c} listed before {p}")));
            }
            if !seen.insert(c.clone()) {
                return Err(Error::NotAdmissible(format!("{c} listed twice")));
            }
        }
        Ok(AdmissibleSequence {
            n: n.to_vec(),
            order,
        })
    }

    pub fn n(&self) -> &[usize] {
        &self.n
    }

    pub fn order(&self) -> &[AbstractCell4] {
        &self.order
    }

    /// Position of `cell` in the sequence.
    pub fn step_of(&self, cell: &AbstractCell4) -> Option<usize> {
        self.order.iter().position(|c| c == cell)
    }

    /// The set of the first `len` cells.
    pub fn prefix(&self, len: usize) -> PredecessorSet {
        PredecessorSet {
            members: self.order[..len].iter().cloned().collect(),
        }
    }
}

/// Cells sorted by level, ties broken lexicographically.
pub fn canonical_sequence(n: &[usize]) -> AdmissibleSequence {
    let mut order = all_cells(n);
    order.sort_by(|a, b| a.level().cmp(&b.level()).then_with(|| a.cmp(b)));
    AdmissibleSequence {
        n: n.to_vec(),
        order,
    }
}

/// Every admissible sequence for `n`, in lexicographic order.
pub fn enumerate_admissible_sequences(n: &[usize]) -> Result<Vec<AdmissibleSequence>> {
    let size = count_cells(n);
    if size > ENUMERATION_GUARD {
        return Err(Error::GuardExceeded {
            what: "admissible sequence enumeration",
            size,
            limit: ENUMERATION_GUARD,
            hint: "the flash counts n",
        });
    }
    let mut out = Vec::new();
    let mut prefix = Vec::with_capacity(size);
    let mut placed = BTreeSet::new();
    extend(n, &all_cells(n), &mut prefix, &mut placed, &mut out);
    Ok(out)
}

fn extend(
    n: &[usize],
    cells: &[AbstractCell4],
    prefix: &mut Vec<AbstractCell4>,
    placed: &mut BTreeSet<AbstractCell4>,
    out: &mut Vec<AdmissibleSequence>,
) {
    if prefix.len() == cells.len() {
        out.push(AdmissibleSequence {
            n: n.to_vec(),
            order: prefix.clone(),
        });
        return;
    }
    for c in cells {
        if !placed.contains(c) && c.predecessors().all(|p| placed.contains(&p)) {
            placed.insert(c.clone());
            prefix.push(c.clone());
            extend(n, cells, prefix, placed, out);
            prefix.pop();
            placed.remove(c);
        }
    }
}

/// Adjacent transpositions leading from `a` to `b`, every intermediate
/// sequence admissible. Each cell of `b` in turn is bubbled left into place.
pub fn deformation_path(
    a: &AdmissibleSequence,
    b: &AdmissibleSequence,
) -> Result<Vec<AdmissibleSequence>> {
    if a.n != b.n {
        return Err(crate::error::invalid(
            "deformation_path",
            "sequences for different n",
        ));
    }
    let mut path = vec![a.clone()];
    let mut current = a.order.clone();
    for p in 0..current.len() {
        let q = current[p..]
            .iter()
            .position(|c| *c == b.order[p])
            .expect("both sequences list every cell")
            + p;
        for j in (p + 1..=q).rev() {
            current.swap(j - 1, j);
            path.push(AdmissibleSequence {
                n: a.n.clone(),
                order: current.clone(),
            });
        }
    }
    Ok(path)
}

/// Cells of the cut family `hyperboloids[i][k - 1]` above the initial
/// surface `T = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellComplex {
    pub strip: Strip,
    pub seeds: Vec<Event>,
    pub hyperboloids: Vec<Vec<Cut>>,
}

impl CellComplex {
    pub fn new(strip: Strip, seeds: Vec<Event>, hyperboloids: Vec<Vec<Cut>>) -> Result<Self> {
        if seeds.len() != hyperboloids.len() {
            return Err(Error::Dimension {
                expected: seeds.len(),
                got: hyperboloids.len(),
            });
        }
        for cut in hyperboloids.iter().flatten() {
            if cut.sites() != strip.sites {
                return Err(Error::SiteCount {
                    expected: strip.sites,
                    got: cut.sites(),
                });
            }
        }
        Ok(CellComplex {
            strip,
            seeds,
            hyperboloids,
        })
    }

    pub fn particles(&self) -> usize {
        self.hyperboloids.len()
    }

    pub fn n(&self) -> Vec<usize> {
        self.hyperboloids.iter().map(Vec::len).collect()
    }

    pub fn cut(&self, particle: usize, flash: usize) -> &Cut {
        &self.hyperboloids[particle][flash - 1]
    }

    fn count(&self, e: Event, strict: bool) -> AbstractCell4 {
        let x = e.x as usize;
        AbstractCell4(
            self.hyperboloids
                .iter()
                .map(|cuts| {
                    cuts.iter()
                        .filter(|c| {
                            if strict {
                                c.time(x) < e.t
                            } else {
                                c.time(x) <= e.t
                            }
                        })
                        .count()
                })
                .collect(),
        )
    }

    /// Number of cuts per particle at or below `e`.
    pub fn locate_4cell(&self, e: Event) -> AbstractCell4 {
        self.count(e, false)
    }

    /// Number of cuts per particle strictly below `e`.
    pub fn strict_index(&self, e: Event) -> AbstractCell4 {
        self.count(e, true)
    }

    /// Events of the closed 4-cell `cell`.
    pub fn cell_events(&self, cell: &AbstractCell4) -> Vec<Event> {
        self.strip
            .events()
            .filter(|&e| {
                self.strict_index(e).is_below(cell) && cell.is_below(&self.locate_4cell(e))
            })
            .collect()
    }

    /// Whether some event lies in `cell` and on none of its bounding cuts.
    pub fn has_interior(&self, cell: &AbstractCell4) -> bool {
        self.strip
            .events()
            .any(|e| self.strict_index(e) == *cell && self.locate_4cell(e) == *cell)
    }

    /// The 3-cell containing vertex `v` of the cut of flash `(particle, flash)`.
    pub fn locate_3cell(&self, particle: usize, flash: usize, v: Event) -> Result<AbstractCell3> {
        let cut = self.cut(particle, flash);
        if !cut.is_vertex(v) {
            return Err(Error::NotOnCut {
                particle,
                flash,
                site: v.x.max(0) as usize,
                t: v.t,
            });
        }
        let mut cell = self.locate_4cell(v);
        cell.0[particle] = flash;
        AbstractCell3::new(particle, cell)
    }

    /// Sites of the geometric 3-cell `c` on its cut.
    pub fn three_cell_sites(&self, c: &AbstractCell3) -> Vec<usize> {
        let cut = self.cut(c.particle, c.flash());
        (0..self.strip.sites)
            .filter(|&x| {
                self.locate_3cell(c.particle, c.flash(), cut.vertex(x))
                    .is_ok_and(|found| found == *c)
            })
            .collect()
    }

    /// Whether `e` lies in the union of the closed 4-cells of `set`.
    pub fn region_contains(&self, set: &BTreeSet<AbstractCell4>, e: Event) -> bool {
        let (lo, hi) = (self.strict_index(e), self.locate_4cell(e));
        set.iter().any(|c| lo.is_below(c) && c.is_below(&hi))
    }

    /// Whether the union of the closed 4-cells of `set` contains the causal
    /// past (within the strip) of each of its events.
    pub fn region_is_past_complete(&self, set: &BTreeSet<AbstractCell4>) -> bool {
        let inside: Vec<Event> = self
            .strip
            .events()
            .filter(|&e| self.region_contains(set, e))
            .collect();
        // the past cone is generated by the three events just below
        inside.iter().all(|&e| {
            (-1..=1).all(|dx| {
                let p = Event::new(e.t - 1, e.x + dx);
                !self.strip.contains(p) || self.region_contains(set, p)
            })
        })
    }

    /// Upper boundary of the union of the closed 4-cells of `v`. The empty
    /// set gives the initial surface `T = 0`.
    pub fn surface_of(&self, v: &PredecessorSet) -> Result<Cut> {
        if v.len() == count_cells(&self.n()) {
            return Err(Error::DegenerateRegion);
        }
        if v.is_empty() {
            return Ok(Cut::flat(self.strip.sites, 0));
        }
        let times = (0..self.strip.sites as i64)
            .map(|x| {
                (0..=self.strip.horizon)
                    .rev()
                    .find(|&t| v.contains(&self.strict_index(Event::new(t, x))))
                    .unwrap_or(0)
            })
            .collect();
        Cut::new(times)
    }
}

//! Interaction-local unitary evolution between cuts.
//!
//! The dynamics is a brick-wall circuit. At time `t` the sites are paired as
//! `{x, x+1}` with `x + t` even; a site left without a partner at a wall gets
//! a one-site gate. Advancing a pair from `t` to `t + 1` applies, per
//! particle, a coin rotation by `theta` followed by a spin-conditioned shift
//! (inward movers hop, outward movers reflect with a spin flip), then a
//! contact phase `e^{i gamma}` when two or more particles sit in the pair,
//! then the external-field phase `e^{i phi(t + 1, x)}` per particle.
//!
//! A gate counts as applied on a cut when both of its sites lie above the
//! gate's time. The applied gates always form a causally closed set, so the
//! state on a cut is `V_cut psi_0`, with `V_cut` the ordered product of its
//! gates, and `U^{cut'}_{cut} = V_{cut'} V_{cut}^dagger`.
//!
//! Interaction locality holds exactly for [compatible](Circuit::is_compatible)
//! cuts: those where no lightlike step splits a gate. A lightlike step from
//! `t` to `t + 1` between sites `x` and `x + 1` is only allowed when those two
//! sites are not paired at time `t`. Compatible cuts are closed under
//! [`Cut::meet`] and [`Cut::join`], and [`Circuit::regularize`] maps any cut to
//! the least compatible cut on or above it.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Cut, Event, Strip};
use crate::quantum::{
    diagonal_operator, distance, position_projector, slot_diagonal, Operator, SpaceShape, StateVec,
    C64,
};

/// External field: a phase per event, zero where unset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<FieldEntry>", into = "Vec<FieldEntry>")]
pub struct Potential {
    phases: BTreeMap<Event, f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldEntry {
    pub t: i64,
    pub x: i64,
    pub phi: f64,
}

impl From<Vec<FieldEntry>> for Potential {
    fn from(v: Vec<FieldEntry>) -> Self {
        let mut p = Potential::default();
        for e in v {
            p.set(Event::new(e.t, e.x), e.phi);
        }
        p
    }
}

impl From<Potential> for Vec<FieldEntry> {
    fn from(p: Potential) -> Self {
        p.phases
            .into_iter()
            .map(|(e, phi)| FieldEntry {
                t: e.t,
                x: e.x,
                phi,
            })
            .collect()
    }
}

impl Potential {
    pub fn zero() -> Self {
        Potential::default()
    }

    pub fn from_fn(strip: Strip, f: impl Fn(Event) -> f64) -> Self {
        let mut p = Potential::default();
        for e in strip.events() {
            p.set(e, f(e));
        }
        p
    }

    pub fn set(&mut self, e: Event, phi: f64) {
        if phi == 0.0 {
            self.phases.remove(&e);
        } else {
            self.phases.insert(e, phi);
        }
    }

    pub fn get(&self, e: Event) -> f64 {
        self.phases.get(&e).copied().unwrap_or(0.0)
    }

    /// Events where the two fields disagree.
    pub fn difference_support(&self, other: &Potential) -> Vec<Event> {
        let mut keys: Vec<Event> = self
            .phases
            .keys()
            .chain(other.phases.keys())
            .copied()
            .collect();
        keys.sort();
        keys.dedup();
        keys.retain(|&e| self.get(e) != other.get(e));
        keys
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub theta: f64,
    pub gamma: f64,
    #[serde(default)]
    pub potential: Potential,
}

impl GateParams {
    pub fn free(theta: f64) -> Self {
        GateParams {
            theta,
            gamma: 0.0,
            potential: Potential::zero(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Gate {
    /// Advances sites `left` and `left + 1` from `t` to `t + 1`.
    Pair { t: i64, left: usize },
    /// Advances the unpaired wall site from `t` to `t + 1`.
    Wall { t: i64, site: usize },
}

impl Gate {
    pub fn time(&self) -> i64 {
        match *self {
            Gate::Pair { t, .. } | Gate::Wall { t, .. } => t,
        }
    }

    pub fn sites(&self) -> std::ops::RangeInclusive<usize> {
        match *self {
            Gate::Pair { left, .. } => left..=left + 1,
            Gate::Wall { site, .. } => site..=site,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Circuit {
    strip: Strip,
    shape: SpaceShape,
    params: GateParams,
    pair_unitary: [[C64; 4]; 4],
    wall_unitary: [[C64; 2]; 2],
    /// Site of each slot, per basis index.
    site_table: Vec<u32>,
}

fn adjoint_of<const W: usize>(u: &[[C64; W]; W]) -> [[C64; W]; W] {
    std::array::from_fn(|r| std::array::from_fn(|c| u[c][r].conj()))
}

impl Circuit {
    /// Circuit for `particles` particles with two internal states
    /// (left mover = 0, right mover = 1).
    pub fn new(strip: Strip, particles: usize, params: GateParams) -> Result<Self> {
        if !params.theta.is_finite() || !params.gamma.is_finite() {
            return Err(crate::error::invalid(
                "dynamics",
                "theta and gamma must be finite",
            ));
        }
        let shape = SpaceShape::new(strip.sites, particles, 2)?;
        let (c, s) = (params.theta.cos(), params.theta.sin());
        let coin = [
            [C64::new(c, 0.0), C64::new(0.0, -s)],
            [C64::new(0.0, -s), C64::new(c, 0.0)],
        ];
        // local order: (a,L), (a,R), (a+1,L), (a+1,R)
        // shift: 0 -> 1, 1 -> 3, 2 -> 0, 3 -> 2
        let target = [1usize, 3, 0, 2];
        let mut pair_unitary = [[C64::new(0.0, 0.0); 4]; 4];
        for src in 0..4 {
            let site = src / 2;
            let spin_in = src % 2;
            for spin_out in 0..2 {
                let mid = site * 2 + spin_out;
                pair_unitary[target[mid]][src] += coin[spin_out][spin_in];
            }
        }
        // wall: coin, then spin flip
        let wall_unitary = [[coin[1][0], coin[1][1]], [coin[0][0], coin[0][1]]];
        let site_table = (0..shape.dim())
            .flat_map(|idx| (0..particles).map(move |slot| shape.site(idx, slot) as u32))
            .collect();
        Ok(Circuit {
            strip,
            shape,
            params,
            pair_unitary,
            wall_unitary,
            site_table,
        })
    }

    pub fn strip(&self) -> Strip {
        self.strip
    }

    pub fn shape(&self) -> SpaceShape {
        self.shape
    }

    pub fn params(&self) -> &GateParams {
        &self.params
    }

    /// Same gates acting on a single particle.
    pub fn single_particle(&self) -> Circuit {
        Circuit::new(self.strip, 1, self.params.clone()).expect("parameters already validated")
    }

    /// Same circuit with a different external field.
    pub fn with_potential(&self, potential: Potential) -> Circuit {
        let mut c = self.clone();
        c.params.potential = potential;
        c
    }

    /// Partner of `x` at time `t`, or `None` at a wall.
    pub fn partner(&self, x: usize, t: i64) -> Option<usize> {
        if (x as i64 + t).rem_euclid(2) == 0 {
            (x + 1 < self.strip.sites).then_some(x + 1)
        } else {
            x.checked_sub(1)
        }
    }

    pub fn gates_at(&self, t: i64) -> Vec<Gate> {
        let mut out = Vec::new();
        let mut x = 0;
        while x < self.strip.sites {
            match self.partner(x, t) {
                Some(p) if p == x + 1 => {
                    out.push(Gate::Pair { t, left: x });
                    x += 2;
                }
                Some(_) => unreachable!("pairs are scanned from the left"),
                None => {
                    out.push(Gate::Wall { t, site: x });
                    x += 1;
                }
            }
        }
        out
    }

    pub fn is_applied(&self, cut: &Cut, gate: Gate) -> bool {
        match gate {
            Gate::Pair { t, left } => t < cut.time(left).min(cut.time(left + 1)),
            Gate::Wall { t, site } => t < cut.time(site),
        }
    }

    /// Gates applied on `cut`, in time order.
    pub fn gates_applied(&self, cut: &Cut) -> Vec<Gate> {
        self.gates_between(&Cut::flat(cut.sites(), 0), cut)
    }

    /// Gates applied on `upper` but not on `lower`, in time order.
    pub fn gates_between(&self, lower: &Cut, upper: &Cut) -> Vec<Gate> {
        let t_lo = lower.times().iter().copied().min().unwrap_or(0).max(0);
        let t_hi = upper.times().iter().copied().max().unwrap_or(0);
        (t_lo..t_hi)
            .flat_map(|t| self.gates_at(t))
            .filter(|&g| self.is_applied(upper, g) && !self.is_applied(lower, g))
            .collect()
    }

    /// No lightlike step of the cut splits a gate.
    pub fn is_compatible(&self, cut: &Cut) -> bool {
        (0..cut.sites().saturating_sub(1)).all(|x| {
            let (a, b) = (cut.time(x), cut.time(x + 1));
            a == b || self.partner(x, a.min(b)) != Some(x + 1)
        })
    }

    /// Least compatible cut on or above `cut`.
    pub fn regularize(&self, cut: &Cut) -> Cut {
        let mut times = cut.times().to_vec();
        loop {
            let mut changed = false;
            for x in 0..times.len().saturating_sub(1) {
                let (a, b) = (times[x], times[x + 1]);
                if a != b && self.partner(x, a.min(b)) == Some(x + 1) {
                    let lower = if a < b { x } else { x + 1 };
                    times[lower] += 1;
                    changed = true;
                }
            }
            for x in 0..times.len() {
                let mut floor = times[x];
                if x > 0 {
                    floor = floor.max(times[x - 1] - 1);
                }
                if x + 1 < times.len() {
                    floor = floor.max(times[x + 1] - 1);
                }
                if floor > times[x] {
                    times[x] = floor;
                    changed = true;
                }
            }
            if !changed {
                return Cut::new(times).expect("regularization keeps the profile 1-Lipschitz");
            }
        }
    }

    /// Random compatible cut: a lazy random walk in `[lo, hi]`, regularized.
    pub fn random_compatible_cut(&self, rng: &mut impl Rng, lo: i64, hi: i64) -> Cut {
        let mut t = rng.random_range(lo..=hi);
        let mut times = Vec::with_capacity(self.strip.sites);
        for _ in 0..self.strip.sites {
            times.push(t);
            t = (t + rng.random_range(-1..=1)).clamp(lo, hi);
        }
        self.regularize(&Cut::new(times).expect("walk steps by at most one"))
    }

    /// Applies one gate (or its adjoint) in place to a state vector, or to
    /// several stacked end to end (the columns of an operator).
    pub fn apply_gate(&self, psi: &mut [C64], gate: Gate, adjoint: bool) {
        if adjoint {
            self.apply_phases(psi, gate, true);
            self.apply_local(psi, gate, true);
        } else {
            self.apply_local(psi, gate, false);
            self.apply_phases(psi, gate, false);
        }
    }

    fn apply_local(&self, psi: &mut [C64], gate: Gate, adjoint: bool) {
        match gate {
            Gate::Pair { left, .. } => {
                let u = if adjoint {
                    adjoint_of(&self.pair_unitary)
                } else {
                    self.pair_unitary
                };
                self.apply_local_matrix(psi, 2 * left, &u);
            }
            Gate::Wall { site, .. } => {
                let u = if adjoint {
                    adjoint_of(&self.wall_unitary)
                } else {
                    self.wall_unitary
                };
                self.apply_local_matrix(psi, 2 * site, &u);
            }
        }
    }

    fn apply_local_matrix<const W: usize>(&self, psi: &mut [C64], first: usize, u: &[[C64; W]; W]) {
        let shape = self.shape;
        let slot_dim = shape.slot_dim();
        for slot in 0..shape.particles {
            let stride = shape.stride(slot);
            let block = stride * slot_dim;
            for hi in (0..psi.len()).step_by(block) {
                for lo in 0..stride {
                    let base = hi + lo + first * stride;
                    let buf: [C64; W] = std::array::from_fn(|j| psi[base + j * stride]);
                    for (r, row) in u.iter().enumerate() {
                        let mut acc = C64::new(0.0, 0.0);
                        for (a, b) in row.iter().zip(&buf) {
                            acc += a * b;
                        }
                        psi[base + r * stride] = acc;
                    }
                }
            }
        }
    }

    fn apply_phases(&self, psi: &mut [C64], gate: Gate, adjoint: bool) {
        let n = self.shape.particles;
        let sites = gate.sites();
        let t_out = gate.time() + 1;
        let sign = if adjoint { -1.0 } else { 1.0 };
        let field: Vec<C64> = sites
            .clone()
            .map(|x| {
                let phi = self.params.potential.get(Event::new(t_out, x as i64));
                C64::from_polar(1.0, sign * phi)
            })
            .collect();
        let gamma = self.params.gamma;
        let trivial_field = field.iter().all(|z| *z == C64::new(1.0, 0.0));
        if gamma == 0.0 && trivial_field {
            return;
        }
        let contact = C64::from_polar(1.0, sign * gamma);
        let dim = self.shape.dim();
        let (lo, hi) = (*sites.start(), *sites.end());
        for (idx, amp) in psi.iter_mut().enumerate() {
            let row = &self.site_table[(idx % dim) * n..(idx % dim + 1) * n];
            let mut factor = C64::new(1.0, 0.0);
            let mut inside = 0;
            for &x in row {
                let x = x as usize;
                if (lo..=hi).contains(&x) {
                    inside += 1;
                    if !trivial_field {
                        factor *= field[x - lo];
                    }
                }
            }
            if inside >= 2 && gamma != 0.0 {
                factor *= contact;
            }
            if inside > 0 {
                *amp *= factor;
            }
        }
    }

    /// Applies `U^{to}_{from}` to every column of `op` in place.
    pub fn evolve_columns(&self, op: &mut Operator, from: &Cut, to: &Cut) {
        let common = from.meet(to);
        let back = self.gates_between(&common, from);
        let forward = self.gates_between(&common, to);
        let data = op.as_mut_slice();
        self.apply_gates(data, &back, true);
        self.apply_gates(data, &forward, false);
    }

    fn apply_gates(&self, psi: &mut [C64], gates: &[Gate], adjoint: bool) {
        if adjoint {
            for &g in gates.iter().rev() {
                self.apply_gate(psi, g, true);
            }
        } else {
            for &g in gates {
                self.apply_gate(psi, g, false);
            }
        }
    }

    /// `U^{to}_{from} psi`.
    pub fn evolve(&self, psi: &StateVec, from: &Cut, to: &Cut) -> StateVec {
        let common = from.meet(to);
        let back = self.gates_between(&common, from);
        let forward = self.gates_between(&common, to);
        let mut out = psi.clone();
        self.apply_gates(out.as_mut_slice(), &back, true);
        self.apply_gates(out.as_mut_slice(), &forward, false);
        out
    }

    /// `U^{to}_{from}` as a dense matrix.
    pub fn evolution_operator(&self, from: &Cut, to: &Cut) -> Operator {
        let common = from.meet(to);
        let back = self.gates_between(&common, from);
        let forward = self.gates_between(&common, to);
        let mut op = Operator::identity(self.shape.dim(), self.shape.dim());
        let data = op.as_mut_slice();
        self.apply_gates(data, &back, true);
        self.apply_gates(data, &forward, false);
        op
    }

    /// `U^{cut}_0`, evolution from the initial flat surface `T = 0`.
    pub fn propagator(&self, cut: &Cut) -> Operator {
        self.evolution_operator(&Cut::flat(cut.sites(), 0), cut)
    }
}

/// Memoized `U^{cut}_0` per cut. Shared read-mostly between workers.
#[derive(Debug)]
pub struct Propagators {
    circuit: Arc<Circuit>,
    cache: Mutex<HashMap<Cut, Arc<Operator>>>,
}

impl Propagators {
    pub fn new(circuit: Arc<Circuit>) -> Self {
        Propagators {
            circuit,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn get(&self, cut: &Cut) -> Arc<Operator> {
        if let Some(op) = self.cache.lock().expect("cache lock").get(cut) {
            return Arc::clone(op);
        }
        let op = Arc::new(self.circuit.propagator(cut));
        self.cache
            .lock()
            .expect("cache lock")
            .entry(cut.clone())
            .or_insert(op)
            .clone()
    }
}

fn check_overlap(a: &Cut, b: &Cut, sites: &[usize]) -> Result<()> {
    match sites
        .iter()
        .find(|&&x| x >= a.sites() || a.time(x) != b.time(x))
    {
        Some(&x) => Err(Error::NotInOverlap(x)),
        None => Ok(()),
    }
}

/// `|| P_{to}(A in slot) - U P_{from}(A in slot) U^dagger ||` for `A` in the
/// overlap of the two cuts.
pub fn verify_interaction_locality(
    circuit: &Circuit,
    from: &Cut,
    to: &Cut,
    sites: &[usize],
    slot: usize,
) -> Result<f64> {
    check_overlap(from, to, sites)?;
    let proj = position_projector(circuit.shape(), slot, sites);
    Ok(conjugation_defect(circuit, from, to, &proj, &proj))
}

/// Same check for a multiplication operator by `f` supported in the overlap.
pub fn verify_multiplication_locality(
    circuit: &Circuit,
    from: &Cut,
    to: &Cut,
    f: &[f64],
    slot: usize,
) -> Result<f64> {
    let support: Vec<usize> = (0..f.len()).filter(|&x| f[x] != 0.0).collect();
    check_overlap(from, to, &support)?;
    let op = diagonal_operator(&slot_diagonal(circuit.shape(), slot, |x| f[x]));
    Ok(conjugation_defect(circuit, from, to, &op, &op))
}

/// Complement form: the projector onto `to \ overlap` against the conjugated
/// projector onto `from \ overlap`.
pub fn verify_complement_locality(circuit: &Circuit, from: &Cut, to: &Cut, slot: usize) -> f64 {
    let overlap = from.overlap(to);
    let rest: Vec<usize> = (0..from.sites()).filter(|x| !overlap.contains(x)).collect();
    let proj = position_projector(circuit.shape(), slot, &rest);
    conjugation_defect(circuit, from, to, &proj, &proj)
}

fn conjugation_defect(
    circuit: &Circuit,
    from: &Cut,
    to: &Cut,
    on_from: &Operator,
    on_to: &Operator,
) -> f64 {
    let u = circuit.evolution_operator(from, to);
    distance(on_to, &(&u * on_from * u.adjoint()))
}

//! Profiles, collapse operators and the POVM density of one flash history.
//!
//! Flash `(i, k)` happens in band `m` on the cut
//! `H_ik = regularize(hyperboloid(z_{i,k-1}, m * delta_s))` at one of its
//! vertices `z_ik`, with `z_i0` the seed. Its collapse operator is the
//! Heisenberg picture (relative to the initial surface `T = 0`) of the
//! multiplication by a normalized Gaussian profile in particle slot `i`.
//! With [`ProfileMode::CutOff`] the profile is restricted to the 3-cell of
//! `z_ik` and renormalized there, so that the squared profiles of all centers
//! in the 3-cell sum to its indicator.

use serde::{Deserialize, Serialize};

use crate::cells::{AbstractCell3, AdmissibleSequence, CellComplex};
use crate::error::{Error, Result};
use crate::evolution::Circuit;
use crate::lattice::{hyperboloid_cut, Cut, Event};
use crate::quantum::{gram, Operator, StateVec, C64};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    /// Number of steps along the cut.
    #[default]
    Arc,
    /// Induced Minkowski length; lightlike steps have length zero.
    Minkowski,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMode {
    /// Profiles restricted to the flash's 3-cell.
    #[default]
    CutOff,
    /// Profiles over the whole cut, as in the non-interacting model.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub sigma: f64,
    pub tau_hat: f64,
    pub delta_s: f64,
    /// Number of bands `M`.
    pub bands: usize,
    /// Flash count per particle.
    pub n: Vec<usize>,
    #[serde(default)]
    pub metric: DistanceMetric,
    #[serde(default)]
    pub profile: ProfileMode,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        use crate::error::invalid;
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.sigma) {
            return Err(invalid("collapse.sigma", "must be positive and finite"));
        }
        if !positive(self.tau_hat) {
            return Err(invalid("collapse.tau_hat", "must be positive and finite"));
        }
        if !positive(self.delta_s) {
            return Err(invalid("collapse.delta_s", "must be positive and finite"));
        }
        if self.bands == 0 {
            return Err(invalid("collapse.bands", "need at least one band"));
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return Err(invalid(
                "particles.n",
                "every particle needs at least one flash",
            ));
        }
        Ok(())
    }

    pub fn particles(&self) -> usize {
        self.n.len()
    }
}

/// Probability of band `m` (1-based); the last band takes the tail.
pub fn temporal_weight(m: usize, params: &ModelParams) -> f64 {
    let r = params.delta_s / params.tau_hat;
    let tail = (-((m - 1) as f64) * r).exp();
    if m < params.bands {
        -(-r).exp_m1() * tail
    } else {
        tail
    }
}

pub fn temporal_weights(params: &ModelParams) -> Vec<f64> {
    (1..=params.bands)
        .map(|m| temporal_weight(m, params))
        .collect()
}

/// Distance between sites `a` and `b` measured along `cut`.
pub fn cut_distance(cut: &Cut, a: usize, b: usize, metric: DistanceMetric) -> f64 {
    let (lo, hi) = (a.min(b), a.max(b));
    match metric {
        DistanceMetric::Arc => (hi - lo) as f64,
        DistanceMetric::Minkowski => (lo..hi)
            .map(|x| {
                let dt = (cut.time(x + 1) - cut.time(x)) as f64;
                (1.0 - dt * dt).max(0.0).sqrt()
            })
            .sum(),
    }
}

/// Unnormalized Gaussian centered at site `center` of `cut`, per site.
pub fn raw_profile(center: usize, cut: &Cut, sigma: f64, metric: DistanceMetric) -> Vec<f64> {
    (0..cut.sites())
        .map(|z| {
            let d = cut_distance(cut, center, z, metric);
            (-d * d / (4.0 * sigma * sigma)).exp()
        })
        .collect()
}

/// Profile centered at `center`, supported on `set`, with
/// `sum_{x in set} g_x(z)^2 = 1` for every `z` in `set`.
pub fn cutoff_profile(
    set: &[usize],
    center: usize,
    cut: &Cut,
    sigma: f64,
    metric: DistanceMetric,
) -> Result<Vec<f64>> {
    if !set.contains(&center) {
        return Err(Error::CenterOutsideSet(center));
    }
    let raw = raw_profile(center, cut, sigma, metric);
    let mut g = vec![0.0; cut.sites()];
    for &z in set {
        // raw_x(z) = raw_z(x) by symmetry of the distance
        let around_z = raw_profile(z, cut, sigma, metric);
        let norm: f64 = set
            .iter()
            .map(|&w| around_z[w] * around_z[w])
            .sum::<f64>()
            .sqrt();
        g[z] = raw[z] / norm;
    }
    Ok(g)
}

/// One flash: its band and the site of its vertex on the band's cut.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Flash {
    pub band: usize,
    pub site: usize,
}

/// A full flash history: `flashes[i][k - 1]` for particle `i`, flash `k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlashConfig {
    pub flashes: Vec<Vec<Flash>>,
}

impl FlashConfig {
    pub fn validate(&self, params: &ModelParams, sites: usize) -> Result<()> {
        let counts: Vec<usize> = self.flashes.iter().map(Vec::len).collect();
        if counts != params.n {
            return Err(crate::error::invalid(
                "flash config",
                format!("flash counts {counts:?} do not match n = {:?}", params.n),
            ));
        }
        for f in self.flashes.iter().flatten() {
            if f.band == 0 || f.band > params.bands || f.site >= sites {
                return Err(crate::error::invalid(
                    "flash config",
                    format!("flash {f:?} out of range"),
                ));
            }
        }
        Ok(())
    }

    /// Product of the temporal weights of all bands.
    pub fn weight(&self, params: &ModelParams) -> f64 {
        self.flashes
            .iter()
            .flatten()
            .map(|f| temporal_weight(f.band, params))
            .product()
    }
}

/// Cut of a flash in band `band` following the flash (or seed) `prev`.
pub fn flash_cut(circuit: &Circuit, prev: Event, band: usize, delta_s: f64) -> Cut {
    circuit.regularize(&hyperboloid_cut(
        prev,
        band as f64 * delta_s,
        circuit.strip(),
    ))
}

/// Cuts, events, 3-cells and profiles of one flash history.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub complex: CellComplex,
    pub events: Vec<Vec<Event>>,
    pub cells: Vec<Vec<AbstractCell3>>,
    pub profiles: Vec<Vec<Vec<f64>>>,
}

impl Geometry {
    pub fn new(
        config: &FlashConfig,
        seeds: &[Event],
        params: &ModelParams,
        circuit: &Circuit,
    ) -> Result<Self> {
        let strip = circuit.strip();
        config.validate(params, strip.sites)?;
        if seeds.len() != params.particles() {
            return Err(Error::Dimension {
                expected: params.particles(),
                got: seeds.len(),
            });
        }
        let mut cuts = Vec::with_capacity(seeds.len());
        let mut events = Vec::with_capacity(seeds.len());
        for (flashes, &seed) in config.flashes.iter().zip(seeds) {
            let mut prev = seed;
            let mut cs = Vec::with_capacity(flashes.len());
            let mut es = Vec::with_capacity(flashes.len());
            for f in flashes {
                let cut = flash_cut(circuit, prev, f.band, params.delta_s);
                prev = cut.vertex(f.site);
                es.push(prev);
                cs.push(cut);
            }
            cuts.push(cs);
            events.push(es);
        }
        let complex = CellComplex::new(strip, seeds.to_vec(), cuts)?;
        let mut cells = Vec::with_capacity(seeds.len());
        let mut profiles = Vec::with_capacity(seeds.len());
        for (i, es) in events.iter().enumerate() {
            let mut cs = Vec::with_capacity(es.len());
            let mut ps = Vec::with_capacity(es.len());
            for (k0, &z) in es.iter().enumerate() {
                let cell = complex.locate_3cell(i, k0 + 1, z)?;
                let cut = complex.cut(i, k0 + 1);
                let set: Vec<usize> = match params.profile {
                    ProfileMode::CutOff => complex.three_cell_sites(&cell),
                    ProfileMode::Full => (0..strip.sites).collect(),
                };
                ps.push(cutoff_profile(
                    &set,
                    z.x as usize,
                    cut,
                    params.sigma,
                    params.metric,
                )?);
                cs.push(cell);
            }
            cells.push(cs);
            profiles.push(ps);
        }
        Ok(Geometry {
            complex,
            events,
            cells,
            profiles,
        })
    }

    pub fn cut(&self, particle: usize, flash: usize) -> &Cut {
        self.complex.cut(particle, flash)
    }

    pub fn profile(&self, particle: usize, flash: usize) -> &[f64] {
        &self.profiles[particle][flash - 1]
    }
}

/// A flash `(particle, flash)` and the step of `seq` at which its 3-cell is
/// crossed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct OrderedFlash {
    pub step: usize,
    pub particle: usize,
    pub flash: usize,
}

/// Flashes sorted by crossing step, the order in which their operators act.
pub fn flash_order(geom: &Geometry, seq: &AdmissibleSequence) -> Result<Vec<OrderedFlash>> {
    if seq.n() != geom.complex.n().as_slice() {
        return Err(Error::NotAdmissible(format!(
            "sequence for n = {:?} used with n = {:?}",
            seq.n(),
            geom.complex.n()
        )));
    }
    let mut out = Vec::new();
    for (i, cells) in geom.cells.iter().enumerate() {
        for (k0, cell) in cells.iter().enumerate() {
            let step = seq
                .step_of(&cell.cell)
                .expect("admissible sequences list every cell");
            out.push(OrderedFlash {
                step,
                particle: i,
                flash: k0 + 1,
            });
        }
    }
    out.sort();
    Ok(out)
}

fn multiply_slot(circuit: &Circuit, psi: &mut [C64], slot: usize, f: &[f64]) {
    let shape = circuit.shape();
    let dim = shape.dim();
    let per_index: Vec<f64> = (0..dim).map(|idx| f[shape.site(idx, slot)]).collect();
    for chunk in psi.chunks_mut(dim) {
        for (amp, g) in chunk.iter_mut().zip(&per_index) {
            *amp *= g;
        }
    }
}

/// `L psi` for the flashes in `order`, evolving the state from cut to cut.
pub fn apply_big_l(
    geom: &Geometry,
    order: &[OrderedFlash],
    circuit: &Circuit,
    psi: &StateVec,
) -> StateVec {
    let initial = Cut::flat(circuit.strip().sites, 0);
    let mut op = Operator::from_column_slice(psi.len(), 1, psi.as_slice());
    let last = chain(geom, order, circuit, &mut op, &initial);
    circuit.evolve_columns(&mut op, &last, &initial);
    StateVec::from_column_slice(op.as_slice())
}

/// `|L psi|^2`, skipping the final unitary evolution back to `T = 0`.
pub fn big_l_norm_sqr(
    geom: &Geometry,
    order: &[OrderedFlash],
    circuit: &Circuit,
    psi: &StateVec,
) -> f64 {
    let initial = Cut::flat(circuit.strip().sites, 0);
    let mut op = Operator::from_column_slice(psi.len(), 1, psi.as_slice());
    chain(geom, order, circuit, &mut op, &initial);
    op.norm_squared()
}

/// Applies the collapses in `order` to the columns of `op`, which start on
/// `initial`; returns the cut the columns end on.
fn chain(
    geom: &Geometry,
    order: &[OrderedFlash],
    circuit: &Circuit,
    op: &mut Operator,
    initial: &Cut,
) -> Cut {
    let mut current = initial.clone();
    for f in order {
        let cut = geom.cut(f.particle, f.flash);
        circuit.evolve_columns(op, &current, cut);
        multiply_slot(
            circuit,
            op.as_mut_slice(),
            f.particle,
            geom.profile(f.particle, f.flash),
        );
        current = cut.clone();
    }
    current
}

/// `L` as a dense matrix, optionally without the final evolution back to
/// the initial surface (which cancels in `L^dagger L`).
fn dense_chain(
    geom: &Geometry,
    order: &[OrderedFlash],
    circuit: &Circuit,
    close: bool,
) -> Operator {
    let dim = circuit.shape().dim();
    let initial = Cut::flat(circuit.strip().sites, 0);
    let mut op = Operator::identity(dim, dim);
    let last = chain(geom, order, circuit, &mut op, &initial);
    if close {
        circuit.evolve_columns(&mut op, &last, &initial);
    }
    op
}

/// The collapse operator of flash `(particle, flash)` on the initial surface.
pub fn collapse_op(geom: &Geometry, particle: usize, flash: usize, circuit: &Circuit) -> Operator {
    let order = [OrderedFlash {
        step: 0,
        particle,
        flash,
    }];
    dense_chain(geom, &order, circuit, true)
}

/// The ordered product of all collapse operators of the history.
pub fn big_l(geom: &Geometry, seq: &AdmissibleSequence, circuit: &Circuit) -> Result<Operator> {
    let order = flash_order(geom, seq)?;
    Ok(dense_chain(geom, &order, circuit, true))
}

/// `D = prod p(m_ik) L^dagger L`.
pub fn density_d(
    config: &FlashConfig,
    geom: &Geometry,
    seq: &AdmissibleSequence,
    circuit: &Circuit,
    params: &ModelParams,
) -> Result<Operator> {
    let l = dense_chain(geom, &flash_order(geom, seq)?, circuit, false);
    Ok(gram(&l) * C64::new(config.weight(params), 0.0))
}

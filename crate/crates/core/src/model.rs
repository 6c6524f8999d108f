//! The joint flash distribution and experiments built on it.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cells::{canonical_sequence, AdmissibleSequence};
use crate::collapse::{
    apply_big_l, big_l_norm_sqr, cutoff_profile, density_d, flash_order, Flash, FlashConfig,
    Geometry, ModelParams, ProfileMode,
};
use crate::error::{Error, Result};
use crate::evolution::{Circuit, Potential};
use crate::lattice::{Cut, Event};
use crate::quantum::{
    hermitian_pinv_sqrt, hermitian_sqrt, kron, position_projector, Operator, StateVec, C64,
};

/// Largest number of flash histories enumerated exactly.
pub const CONFIG_GUARD: usize = 100_000;

/// Tolerance of the normalization check in [`Model::joint_distribution`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

const CHUNK: usize = 8;

#[derive(Clone, Debug)]
pub struct Model {
    circuit: Arc<Circuit>,
    params: ModelParams,
    seeds: Vec<Event>,
}

/// Probabilities of all flash histories, in enumeration order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    pub entries: Vec<(FlashConfig, f64)>,
    pub total: f64,
}

impl JointDistribution {
    fn from_entries(entries: Vec<(FlashConfig, f64)>) -> Self {
        let total = entries.iter().map(|(_, p)| p).sum();
        JointDistribution { entries, total }
    }

    pub fn probability(&self, config: &FlashConfig) -> f64 {
        self.entries
            .iter()
            .find(|(c, _)| c == config)
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn marginal<K: Ord>(&self, key: impl Fn(&FlashConfig) -> K) -> BTreeMap<K, f64> {
        let mut out = BTreeMap::new();
        for (c, p) in &self.entries {
            *out.entry(key(c)).or_insert(0.0) += p;
        }
        out
    }

    /// Total-variation distance between the two full tables.
    pub fn total_variation(&self, other: &JointDistribution) -> f64 {
        total_variation(&self.marginal(Clone::clone), &other.marginal(Clone::clone))
    }

    /// Mutual information (natural log) between two functions of the history.
    pub fn mutual_information<A: Ord + Clone, B: Ord + Clone>(
        &self,
        a: impl Fn(&FlashConfig) -> A,
        b: impl Fn(&FlashConfig) -> B,
    ) -> f64 {
        let pa = self.marginal(&a);
        let pb = self.marginal(&b);
        let joint = self.marginal(|c| (a(c), b(c)));
        joint
            .iter()
            .filter(|(_, &p)| p > 0.0)
            .map(|((ka, kb), &p)| p * (p / (pa[ka] * pb[kb])).ln())
            .sum()
    }

    /// Flashes of each particle restricted to the first `n[i]`.
    pub fn truncated(&self, n: &[usize]) -> BTreeMap<FlashConfig, f64> {
        self.marginal(|c| truncate(c, n))
    }
}

pub fn truncate(config: &FlashConfig, n: &[usize]) -> FlashConfig {
    FlashConfig {
        flashes: config
            .flashes
            .iter()
            .zip(n)
            .map(|(f, &m)| f[..m.min(f.len())].to_vec())
            .collect(),
    }
}

pub fn total_variation<K: Ord>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let mut sum = 0.0;
    for (k, p) in a {
        sum += (p - b.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, q) in b {
        if !a.contains_key(k) {
            sum += q.abs();
        }
    }
    0.5 * sum
}

/// State on a cut given the flashes in its past.
#[derive(Clone, Debug)]
pub struct ConditionedState {
    pub surface: Cut,
    pub past: Vec<Vec<Flash>>,
    pub psi: StateVec,
    /// `W` on the initial surface.
    pub w: Operator,
    /// Probability of the conditioning event, `|W psi_0|^2`.
    pub probability: f64,
}

impl Model {
    pub fn new(circuit: Arc<Circuit>, params: ModelParams, seeds: Vec<Event>) -> Result<Self> {
        params.validate()?;
        let shape = circuit.shape();
        if seeds.len() != params.particles() || shape.particles != params.particles() {
            return Err(crate::error::invalid(
                "particles.seeds",
                format!(
                    "{} seeds and {} circuit particles for n = {:?}",
                    seeds.len(),
                    shape.particles,
                    params.n
                ),
            ));
        }
        let strip = circuit.strip();
        for (i, s) in seeds.iter().enumerate() {
            if s.x < 0 || s.x as usize >= strip.sites || s.t > 0 {
                return Err(crate::error::invalid(
                    format!("particles.seeds[{i}]"),
                    "seeds must lie on a site at or below the initial surface t = 0",
                ));
            }
        }
        Ok(Model {
            circuit,
            params,
            seeds,
        })
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn seeds(&self) -> &[Event] {
        &self.seeds
    }

    /// Same model with a different external field.
    pub fn with_potential(&self, potential: Potential) -> Model {
        Model {
            circuit: Arc::new(self.circuit.with_potential(potential)),
            ..self.clone()
        }
    }

    pub fn config_count(&self) -> usize {
        let per_flash = self.params.bands.saturating_mul(self.circuit.strip().sites);
        let flashes: usize = self.params.n.iter().sum();
        (0..flashes).fold(1usize, |acc, _| acc.saturating_mul(per_flash))
    }

    /// All flash histories, lexicographic in (particle, flash, band, site).
    pub fn configs(&self) -> Result<Vec<FlashConfig>> {
        let size = self.config_count();
        if size > CONFIG_GUARD {
            return Err(Error::GuardExceeded {
                what: "flash history enumeration",
                size,
                limit: CONFIG_GUARD,
                hint: "sites, bands or flash counts",
            });
        }
        let sites = self.circuit.strip().sites;
        let per_flash = self.params.bands * sites;
        let total: usize = self.params.n.iter().sum();
        Ok((0..size)
            .map(|mut code| {
                let mut digits = vec![0; total];
                for d in digits.iter_mut().rev() {
                    *d = code % per_flash;
                    code /= per_flash;
                }
                let mut it = digits.into_iter();
                FlashConfig {
                    flashes: self
                        .params
                        .n
                        .iter()
                        .map(|&m| {
                            (0..m)
                                .map(|_| {
                                    let d = it.next().expect("digit per flash");
                                    Flash {
                                        band: d / sites + 1,
                                        site: d % sites,
                                    }
                                })
                                .collect()
                        })
                        .collect(),
                }
            })
            .collect())
    }

    pub fn geometry(&self, config: &FlashConfig) -> Result<Geometry> {
        Geometry::new(config, &self.seeds, &self.params, &self.circuit)
    }

    pub fn canonical_sequence(&self) -> AdmissibleSequence {
        canonical_sequence(&self.params.n)
    }

    /// `<psi_0 | D(config) | psi_0>`.
    pub fn probability(&self, config: &FlashConfig, psi0: &StateVec) -> Result<f64> {
        let geom = self.geometry(config)?;
        let order = flash_order(&geom, &self.canonical_sequence())?;
        Ok(config.weight(&self.params) * big_l_norm_sqr(&geom, &order, &self.circuit, psi0))
    }

    fn check_state(&self, psi0: &StateVec) -> Result<()> {
        let dim = self.circuit.shape().dim();
        if psi0.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: psi0.len(),
            });
        }
        if (psi0.norm() - 1.0).abs() > 1e-10 {
            return Err(crate::error::invalid(
                "initial_state",
                "state is not normalized",
            ));
        }
        Ok(())
    }

    /// Probabilities of all histories without the normalization check.
    pub fn joint_unchecked(&self, psi0: &StateVec) -> Result<JointDistribution> {
        self.check_state(psi0)?;
        let configs = self.configs()?;
        let probs = configs
            .par_iter()
            .map(|c| self.probability(c, psi0))
            .collect::<Result<Vec<f64>>>()?;
        Ok(JointDistribution::from_entries(
            configs.into_iter().zip(probs).collect(),
        ))
    }

    /// Probabilities of all histories; fails when they do not sum to one.
    pub fn joint_distribution(&self, psi0: &StateVec) -> Result<JointDistribution> {
        let dist = self.joint_unchecked(psi0)?;
        if (dist.total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::NotNormalized(dist.total));
        }
        Ok(dist)
    }

    pub fn density(&self, config: &FlashConfig) -> Result<Operator> {
        let geom = self.geometry(config)?;
        density_d(
            config,
            &geom,
            &self.canonical_sequence(),
            &self.circuit,
            &self.params,
        )
    }

    /// Sum of `D` over `configs`, reduced in a fixed order.
    pub fn density_sum(&self, configs: &[FlashConfig]) -> Result<Operator> {
        let dim = self.circuit.shape().dim();
        let partial = configs
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut acc = Operator::zeros(dim, dim);
                for c in chunk {
                    acc += self.density(c)?;
                }
                Ok(acc)
            })
            .collect::<Result<Vec<Operator>>>()?;
        Ok(partial
            .into_iter()
            .fold(Operator::zeros(dim, dim), |acc, p| acc + p))
    }

    /// `sum_config D(config)`, which should be the identity.
    pub fn povm_sum(&self) -> Result<Operator> {
        self.density_sum(&self.configs()?)
    }

    fn events(&self, config: &FlashConfig) -> Result<Vec<Vec<Event>>> {
        Ok(self.geometry(config)?.events)
    }

    /// Histories agreeing with `past` on its flashes, all of which lie at or
    /// below `surface`, with every other flash strictly above it.
    pub fn completions(&self, surface: &Cut, past: &[Vec<Flash>]) -> Result<Vec<FlashConfig>> {
        if past.len() != self.params.particles()
            || past.iter().zip(&self.params.n).any(|(p, &m)| p.len() > m)
        {
            return Err(crate::error::invalid("past", "past flashes do not fit n"));
        }
        let above = |e: &Event| e.t > surface.time(e.x as usize);
        let mut out = Vec::new();
        for c in self.configs()? {
            if c.flashes
                .iter()
                .zip(past)
                .any(|(f, p)| f[..p.len()] != p[..])
            {
                continue;
            }
            let events = self.events(&c)?;
            for (ev, p) in events.iter().zip(past) {
                if let Some(e) = ev[..p.len()].iter().find(|e| above(e)) {
                    return Err(crate::error::invalid(
                        "past",
                        format!("flash at {e:?} lies above the surface"),
                    ));
                }
            }
            if events
                .iter()
                .zip(past)
                .all(|(ev, p)| ev[p.len()..].iter().all(above))
            {
                out.push(c);
            }
        }
        Ok(out)
    }

    /// `psi_surface = U W psi_0 / |W psi_0|` with `W` the square root of the
    /// summed densities of all completions of `past`.
    pub fn conditional_state(
        &self,
        surface: &Cut,
        past: &[Vec<Flash>],
        psi0: &StateVec,
    ) -> Result<ConditionedState> {
        self.check_state(psi0)?;
        let completions = self.completions(surface, past)?;
        let w = hermitian_sqrt(&self.density_sum(&completions)?)?;
        let v = &w * psi0;
        let norm = v.norm();
        if norm < 1e-12 {
            return Err(Error::NullEvent(norm));
        }
        let initial = Cut::flat(surface.sites(), 0);
        let psi = self
            .circuit
            .evolve(&(v / C64::new(norm, 0.0)), &initial, surface);
        Ok(ConditionedState {
            surface: surface.clone(),
            past: past.to_vec(),
            psi,
            w,
            probability: norm * norm,
        })
    }

    /// Probabilities of the completions of `state.past` predicted from the
    /// conditional state alone.
    pub fn predict_from_state(&self, state: &ConditionedState) -> Result<Vec<(FlashConfig, f64)>> {
        let initial = Cut::flat(state.surface.sites(), 0);
        let phi = self.circuit.evolve(&state.psi, &state.surface, &initial);
        let w_pinv = hermitian_pinv_sqrt(&(&state.w * &state.w), 1e-12)?;
        let chi = &w_pinv * phi;
        self.completions(&state.surface, &state.past)?
            .into_iter()
            .map(|c| {
                let d = self.density(&c)?;
                let p = chi.dotc(&(&d * &chi)).re;
                Ok((c, p))
            })
            .collect()
    }

    /// The N = 2, one flash each, operator `L` from the explicit four-way
    /// case split on which flash lies below the other particle's cut.
    pub fn simple_case_l(&self, config: &FlashConfig) -> Result<Operator> {
        if self.params.n != [1, 1] {
            return Err(crate::error::invalid(
                "particles.n",
                "simple case needs n = (1, 1)",
            ));
        }
        let c = &self.circuit;
        let f = [config.flashes[0][0], config.flashes[1][0]];
        let cuts: Vec<Cut> = (0..2)
            .map(|i| crate::collapse::flash_cut(c, self.seeds[i], f[i].band, self.params.delta_s))
            .collect();
        let sites = c.strip().sites;
        // P_i: vertices of H_i strictly below the other cut
        let lower: Vec<Vec<usize>> = (0..2)
            .map(|i| {
                (0..sites)
                    .filter(|&x| cuts[i].time(x) < cuts[1 - i].time(x))
                    .collect()
            })
            .collect();
        let in_lower = |i: usize| lower[i].contains(&f[i].site);
        let mut k = Vec::new();
        for i in 0..2 {
            let set: Vec<usize> = match self.params.profile {
                ProfileMode::Full => (0..sites).collect(),
                ProfileMode::CutOff if in_lower(i) => lower[i].clone(),
                ProfileMode::CutOff => (0..sites).filter(|x| !lower[i].contains(x)).collect(),
            };
            let g = cutoff_profile(
                &set,
                f[i].site,
                &cuts[i],
                self.params.sigma,
                self.params.metric,
            )?;
            let diag = crate::quantum::slot_diagonal(c.shape(), i, |x| g[x]);
            let v = c.propagator(&cuts[i]);
            k.push(v.adjoint() * crate::quantum::scale_rows(&diag, &v));
        }
        Ok(if in_lower(0) || !in_lower(1) {
            &k[1] * &k[0]
        } else {
            &k[0] * &k[1]
        })
    }

    /// Distribution from the tensor-product construction of independent
    /// particles, using the same cuts and profiles. Needs `gamma = 0`.
    pub fn noninteracting_reference(&self, psi0: &StateVec) -> Result<JointDistribution> {
        self.check_state(psi0)?;
        if self.circuit.params().gamma != 0.0 {
            return Err(crate::error::invalid(
                "dynamics.gamma",
                "reference needs gamma = 0",
            ));
        }
        let single = self.circuit.single_particle();
        let shape = single.shape();
        let configs = self.configs()?;
        let probs = configs
            .par_iter()
            .map(|c| {
                let geom = self.geometry(c)?;
                let mut l = Operator::identity(1, 1);
                for i in 0..self.params.particles() {
                    let mut li = Operator::identity(shape.dim(), shape.dim());
                    for k in 1..=self.params.n[i] {
                        let g = geom.profile(i, k);
                        let v = single.propagator(geom.cut(i, k));
                        let diag = crate::quantum::slot_diagonal(shape, 0, |x| g[x]);
                        li = v.adjoint() * crate::quantum::scale_rows(&diag, &v) * li;
                    }
                    l = kron(&l, &li);
                }
                Ok(c.weight(&self.params) * (l * psi0).norm_squared())
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(JointDistribution::from_entries(
            configs.into_iter().zip(probs).collect(),
        ))
    }

    /// Fails unless every flash cut of every history is flat.
    pub fn check_flat(&self) -> Result<()> {
        for c in self.configs()? {
            let geom = self.geometry(&c)?;
            for (i, cuts) in geom.complex.hyperboloids.iter().enumerate() {
                for (k0, cut) in cuts.iter().enumerate() {
                    if !cut.is_flat() {
                        return Err(Error::NotFlat(format!(
                            "cut of flash ({i}, {}) in history {:?} is {:?}",
                            k0 + 1,
                            c.flashes,
                            cut.times()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Discrete GRW on equal-time slices: Gaussian collapses at flat times,
    /// free of any cell structure, with the state advanced layer by layer.
    pub fn flat_limit_reference(&self, psi0: &StateVec) -> Result<JointDistribution> {
        self.check_state(psi0)?;
        self.check_flat()?;
        let c = &self.circuit;
        let sites = c.strip().sites;
        let configs = self.configs()?;
        let probs = configs
            .par_iter()
            .map(|cfg| {
                let mut flashes = Vec::new();
                for (i, fs) in cfg.flashes.iter().enumerate() {
                    let mut t = self.seeds[i].t;
                    for f in fs {
                        let level = f.band as f64 * self.params.delta_s;
                        t = (t + (level.ceil() as i64).max(1)).clamp(0, c.strip().horizon);
                        flashes.push((t, i, f.site));
                    }
                }
                flashes.sort();
                let mut psi = psi0.clone();
                let mut now = 0;
                for (t, i, x) in flashes {
                    for layer in now..t {
                        for g in c.gates_at(layer) {
                            c.apply_gate(psi.as_mut_slice(), g, false);
                        }
                    }
                    now = t;
                    let raw = |center: usize, z: usize| {
                        let d = center.abs_diff(z) as f64;
                        (-d * d / (4.0 * self.params.sigma * self.params.sigma)).exp()
                    };
                    let shape = c.shape();
                    for (idx, amp) in psi.iter_mut().enumerate() {
                        let z = shape.site(idx, i);
                        let norm: f64 = (0..sites).map(|w| raw(z, w).powi(2)).sum::<f64>().sqrt();
                        *amp *= raw(x, z) / norm;
                    }
                }
                Ok(cfg.weight(&self.params) * psi.norm_squared())
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(JointDistribution::from_entries(
            configs.into_iter().zip(probs).collect(),
        ))
    }

    /// Total variation between the marginals of the flashes at or below
    /// `surface` under two external fields that agree at and below it.
    pub fn parameter_independence_probe(
        &self,
        surface: &Cut,
        field_a: &Potential,
        field_b: &Potential,
        psi0: &StateVec,
    ) -> Result<f64> {
        for e in field_a.difference_support(field_b) {
            if e.x >= 0 && (e.x as usize) < surface.sites() && e.t <= surface.time(e.x as usize) {
                return Err(crate::error::invalid(
                    "probe.fields",
                    format!("fields differ at {e:?}, which is not above the surface"),
                ));
            }
        }
        let past_key = |c: &FlashConfig| -> Result<Vec<(usize, usize, Flash)>> {
            let events = self.events(c)?;
            let mut key = Vec::new();
            for (i, ev) in events.iter().enumerate() {
                for (k0, e) in ev.iter().enumerate() {
                    if e.t <= surface.time(e.x as usize) {
                        key.push((i, k0 + 1, c.flashes[i][k0]));
                    }
                }
            }
            Ok(key)
        };
        let a = self
            .with_potential(field_a.clone())
            .joint_distribution(psi0)?;
        let b = self
            .with_potential(field_b.clone())
            .joint_distribution(psi0)?;
        let keys: BTreeMap<FlashConfig, Vec<(usize, usize, Flash)>> = a
            .entries
            .iter()
            .map(|(c, _)| Ok((c.clone(), past_key(c)?)))
            .collect::<Result<_>>()?;
        let ma = a.marginal(|c| keys[c].clone());
        let mb = b.marginal(|c| keys[c].clone());
        Ok(total_variation(&ma, &mb))
    }
}

/// Independent draws from `dist` by inverse transform sampling.
pub fn sample_flashes(dist: &JointDistribution, rng_seed: u64, count: usize) -> Vec<FlashConfig> {
    let mut cumulative = Vec::with_capacity(dist.entries.len());
    let mut acc = 0.0;
    for (_, p) in &dist.entries {
        acc += p.max(0.0);
        cumulative.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (0..count)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            let idx = cumulative
                .partition_point(|&c| c <= u)
                .min(dist.entries.len() - 1);
            dist.entries[idx].0.clone()
        })
        .collect()
}

/// `L psi_0` for one history, on the initial surface.
pub fn collapsed_state(model: &Model, config: &FlashConfig, psi0: &StateVec) -> Result<StateVec> {
    let geom = model.geometry(config)?;
    let order = flash_order(&geom, &model.canonical_sequence())?;
    Ok(apply_big_l(&geom, &order, model.circuit(), psi0))
}

/// Position distribution of particle `slot` on `surface`.
pub fn position_distribution(model: &Model, psi: &StateVec, slot: usize) -> Vec<f64> {
    let shape = model.circuit().shape();
    (0..shape.sites)
        .map(|x| {
            let p = position_projector(shape, slot, &[x]);
            psi.dotc(&(&p * psi)).re
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collapse::DistanceMetric;
    use crate::evolution::GateParams;
    use crate::lattice::Strip;
    use crate::quantum::{operator_norm, random_state};

    fn model(sites: usize, gamma: f64, n: Vec<usize>, bands: usize) -> Model {
        let strip = Strip::new(sites, 10).unwrap();
        let circuit = Circuit::new(
            strip,
            n.len(),
            GateParams {
                theta: 0.4,
                gamma,
                potential: Potential::zero(),
            },
        )
        .unwrap();
        let seeds = (0..n.len())
            .map(|i| Event::new(0, (1 + 2 * i).min(sites - 1) as i64))
            .collect();
        Model::new(
            Arc::new(circuit),
            ModelParams {
                sigma: 1.5,
                tau_hat: 3.0,
                delta_s: 2.0,
                bands,
                n,
                metric: DistanceMetric::Arc,
                profile: ProfileMode::CutOff,
            },
            seeds,
        )
        .unwrap()
    }

    #[test]
    fn single_flash_trivial_total() {
        let m = model(4, 0.0, vec![1], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let psi = random_state(8, &mut rng);
        let d = m.joint_distribution(&psi).unwrap();
        assert!((d.total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn povm_small_interacting() {
        let m = model(4, 0.7, vec![1, 1], 2);
        let sum = m.povm_sum().unwrap();
        assert!(operator_norm(&(sum - Operator::identity(64, 64))) < 1e-10);
    }

    #[test]
    fn sampling_point_mass_and_seed() {
        let c = FlashConfig {
            flashes: vec![vec![Flash { band: 1, site: 0 }]],
        };
        let other = FlashConfig {
            flashes: vec![vec![Flash { band: 1, site: 1 }]],
        };
        let dist = JointDistribution::from_entries(vec![(other, 0.0), (c.clone(), 1.0)]);
        assert!(sample_flashes(&dist, 5, 100).iter().all(|s| *s == c));
        let m = model(4, 0.3, vec![1], 2);
        let psi = random_state(8, &mut ChaCha8Rng::seed_from_u64(3));
        let d = m.joint_distribution(&psi).unwrap();
        assert_eq!(sample_flashes(&d, 11, 50), sample_flashes(&d, 11, 50));
    }

    #[test]
    fn initial_surface_conditioning_is_trivial() {
        let m = model(4, 0.7, vec![1, 1], 2);
        let psi = random_state(64, &mut ChaCha8Rng::seed_from_u64(4));
        let s = m
            .conditional_state(&Cut::flat(4, 0), &[vec![], vec![]], &psi)
            .unwrap();
        assert!((s.psi - psi).norm() < 1e-10);
        assert!((s.probability - 1.0).abs() < 1e-10);
    }

    #[test]
    fn guard_rejects_large_enumerations() {
        let m = model(7, 0.0, vec![3, 3], 2);
        assert!(matches!(m.configs(), Err(Error::GuardExceeded { .. })));
    }
}

//! Experiment runner behind the `flashcollapse` binary.
//!
//! A run reads one JSON config, validates it completely, computes every
//! result in memory and only then writes the output files, each through a
//! temporary file and a rename. Output JSON has sorted keys and floats with
//! 17 significant digits, so identical inputs give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::cells::{
    all_cells, count_cells, enumerate_admissible_sequences, AbstractCell3, PredecessorSet,
};
use crate::collapse::{
    cutoff_profile, DistanceMetric, Flash, FlashConfig, ModelParams, ProfileMode,
};
use crate::error::{invalid, Error, Result};
use crate::evolution::{
    verify_complement_locality, verify_interaction_locality, Circuit, GateParams, Potential,
};
use crate::lattice::{Cut, Event, Strip};
use crate::model::{sample_flashes, JointDistribution, Model};
use crate::quantum::{operator_norm, product_state, random_state, Operator, StateVec, C64};

pub const SCHEMA_VERSION: u32 = 1;

/// Largest Hilbert-space dimension for which `verify` checks the full
/// operator sum.
const DENSE_CHECK_DIM: usize = 256;

#[derive(Parser, Debug)]
#[command(
    name = "flashcollapse",
    version,
    about = "Relativistic flash-collapse model on a 1+1 lattice"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `rng_seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for enumeration.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Normalization, locality, ordering and profile checks.
    Verify,
    /// Joint distribution and samples.
    Simulate,
    /// Cell complex and admissible sequences.
    EnumerateCells,
    /// General machinery against the independent-particle construction.
    CompareNoninteracting,
    /// Deep-seed run against equal-time GRW.
    FlatLimit,
    /// Effect of an external field change above a surface.
    ParamIndependence,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Simulate => "simulate",
            Command::EnumerateCells => "enumerate-cells",
            Command::CompareNoninteracting => "compare-noninteracting",
            Command::FlatLimit => "flat-limit",
            Command::ParamIndependence => "param-independence",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub strip: Strip,
    pub particles: ParticlesConfig,
    pub dynamics: DynamicsConfig,
    pub collapse: CollapseConfig,
    pub initial_state: InitialState,
    pub rng_seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub probe: Option<ProbeConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_samples() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticlesConfig {
    pub n: Vec<usize>,
    pub seeds: Vec<Event>,
    #[serde(default = "default_spin_dim")]
    pub spin_dim: usize,
}

fn default_spin_dim() -> usize {
    2
}

/// Constant phase `phi` on the events with `t0 <= t <= t1`, `x0 <= x <= x1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldRegion {
    pub t: [i64; 2],
    pub x: [i64; 2],
    pub phi: f64,
}

pub fn potential_from_regions(strip: Strip, regions: &[FieldRegion]) -> Result<Potential> {
    let mut p = Potential::zero();
    for (i, r) in regions.iter().enumerate() {
        if !r.phi.is_finite() || r.t[0] > r.t[1] || r.x[0] > r.x[1] {
            return Err(invalid(
                format!("field region {i}"),
                "needs finite phi and ordered ranges",
            ));
        }
        for e in strip.events() {
            if (r.t[0]..=r.t[1]).contains(&e.t) && (r.x[0]..=r.x[1]).contains(&e.x) {
                p.set(e, p.get(e) + r.phi);
            }
        }
    }
    Ok(p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub theta: f64,
    pub gamma: f64,
    #[serde(default)]
    pub potential: Vec<FieldRegion>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseConfig {
    pub sigma: f64,
    pub tau_hat: f64,
    pub delta_s: f64,
    pub bands: usize,
    #[serde(default)]
    pub metric: DistanceMetric,
    #[serde(default)]
    pub profile: ProfileMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// One Gaussian wave packet per particle.
    ProductGaussian { factors: Vec<GaussianFactor> },
    /// Gaussian random vector with its own seed.
    Random { seed: u64 },
    /// `(|a, b> + |b, a>) / sqrt 2` for two particles, spin fixed.
    BellPosition { sites: [usize; 2], spin: [f64; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianFactor {
    pub center: f64,
    pub width: f64,
    #[serde(default)]
    pub momentum: f64,
    pub spin: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub surface: Cut,
    /// Regions added to the dynamics field to form the second field.
    pub field_b: Vec<FieldRegion>,
}

fn one_particle_state(sites: usize, amp: impl Fn(usize, usize) -> C64) -> StateVec {
    StateVec::from_fn(sites * 2, |i, _| amp(i / 2, i % 2))
}

impl InitialState {
    pub fn build(&self, sites: usize, particles: usize) -> Result<StateVec> {
        let psi = match self {
            InitialState::ProductGaussian { factors } => {
                if factors.len() != particles {
                    return Err(invalid(
                        "initial_state.factors",
                        format!("{} factors for {particles} particles", factors.len()),
                    ));
                }
                let mut parts = Vec::new();
                for (i, f) in factors.iter().enumerate() {
                    if !(f.width > 0.0 && f.center.is_finite() && f.momentum.is_finite()) {
                        return Err(invalid(
                            format!("initial_state.factors[{i}]"),
                            "needs positive width and finite center and momentum",
                        ));
                    }
                    parts.push(one_particle_state(sites, |x, s| {
                        let d = x as f64 - f.center;
                        C64::from_polar(
                            (-d * d / (4.0 * f.width * f.width)).exp(),
                            f.momentum * x as f64,
                        ) * f.spin[s]
                    }));
                }
                product_state(&parts)
            }
            InitialState::Random { seed } => {
                let dim = (sites * 2).pow(particles as u32);
                random_state(dim, &mut ChaCha8Rng::seed_from_u64(*seed))
            }
            InitialState::BellPosition {
                sites: [a, b],
                spin,
            } => {
                if particles != 2 || *a >= sites || *b >= sites || a == b {
                    return Err(invalid(
                        "initial_state.sites",
                        "needs two particles and two distinct sites",
                    ));
                }
                let at = |x: usize| {
                    one_particle_state(sites, |y, s| {
                        C64::new(if y == x { spin[s] } else { 0.0 }, 0.0)
                    })
                };
                product_state(&[at(*a), at(*b)]) + product_state(&[at(*b), at(*a)])
            }
        };
        let norm = psi.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(invalid(
                "initial_state",
                "state has zero or non-finite norm",
            ));
        }
        Ok(psi / C64::new(norm, 0.0))
    }
}

/// Validated config with everything needed to run.
pub struct Prepared {
    pub config: RunConfig,
    pub model: Model,
    pub psi0: StateVec,
    pub hash: String,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: RunConfig = serde_json::from_str(text)?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", config.schema_version),
            ));
        }
        Ok(config)
    }

    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            sigma: self.collapse.sigma,
            tau_hat: self.collapse.tau_hat,
            delta_s: self.collapse.delta_s,
            bands: self.collapse.bands,
            n: self.particles.n.clone(),
            metric: self.collapse.metric,
            profile: self.collapse.profile,
        }
    }

    pub fn prepare(self) -> Result<Prepared> {
        let strip = Strip::new(self.strip.sites, self.strip.horizon)?;
        if self.particles.spin_dim != 2 {
            return Err(invalid(
                "particles.spin_dim",
                "the walk dynamics needs spin_dim = 2",
            ));
        }
        let potential = potential_from_regions(strip, &self.dynamics.potential)?;
        let circuit = Circuit::new(
            strip,
            self.particles.n.len(),
            GateParams {
                theta: self.dynamics.theta,
                gamma: self.dynamics.gamma,
                potential,
            },
        )?;
        let model = Model::new(
            Arc::new(circuit),
            self.model_params(),
            self.particles.seeds.clone(),
        )?;
        let psi0 = self
            .initial_state
            .build(strip.sites, self.particles.n.len())?;
        if let Some(probe) = &self.probe {
            if probe.surface.sites() != strip.sites {
                return Err(Error::SiteCount {
                    expected: strip.sites,
                    got: probe.surface.sites(),
                });
            }
            potential_from_regions(strip, &probe.field_b)?;
        }
        let hash = config_hash(&self)?;
        Ok(Prepared {
            config: self,
            model,
            psi0,
            hash,
        })
    }
}

/// SHA-256 of the canonical JSON form of the config.
pub fn config_hash(config: &RunConfig) -> Result<String> {
    let canonical = canonical_json(&serde_json::to_value(config)?)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

/// JSON with sorted keys and floats printed with 17 significant digits.
pub fn canonical_json(value: &Value) -> Result<String> {
    let mut out = String::new();
    write_value(&mut out, value, 0)?;
    out.push('\n');
    Ok(out)
}

fn write_value(out: &mut String, value: &Value, depth: usize) -> Result<()> {
    let pad = |out: &mut String, d: usize| {
        out.push('\n');
        out.push_str(&"  ".repeat(d));
    };
    match value {
        Value::Null | Value::Bool(_) | Value::String(_) => out.push_str(&value.to_string()),
        Value::Number(n) => {
            if n.is_f64() {
                let v = n.as_f64().expect("f64 number");
                out.push_str(&format_float(v));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::Array(items) => {
            if items.iter().all(|v| !v.is_array() && !v.is_object()) {
                out.push('[');
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, v, depth + 1)?;
                }
                out.push(']');
            } else {
                out.push('[');
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    pad(out, depth + 1);
                    write_value(out, v, depth + 1)?;
                }
                pad(out, depth);
                out.push(']');
            }
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                pad(out, depth + 1);
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push_str(": ");
                write_value(out, &map[*k], depth + 1)?;
            }
            if !map.is_empty() {
                pad(out, depth);
            }
            out.push('}');
        }
    }
    Ok(())
}

/// A float with 17 significant digits in JSON exponent notation.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "null".to_string()
    }
}

/// Writes `contents` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| invalid("output path", "missing file name"))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// An output file produced by a run.
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

/// Result of one subcommand: files to write and whether all checks passed.
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub passed: bool,
    pub summary: Vec<String>,
}

fn header(p: &Prepared, command: Command) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("schema_version".into(), json!(SCHEMA_VERSION));
    m.insert("command".into(), json!(command.name()));
    m.insert("config_hash".into(), json!(p.hash));
    m.insert("rng_seed".into(), json!(p.config.rng_seed));
    m
}

fn json_artifact(
    name: &str,
    mut head: serde_json::Map<String, Value>,
    body: Value,
) -> Result<Artifact> {
    if let Value::Object(b) = body {
        head.extend(b);
    }
    Ok(Artifact {
        name: name.to_string(),
        contents: canonical_json(&Value::Object(head))?.into_bytes(),
    })
}

fn distribution_json(dist: &JointDistribution) -> Value {
    Value::Array(
        dist.entries
            .iter()
            .map(|(c, p)| json!({"flashes": c, "probability": p}))
            .collect(),
    )
}

/// Runs `command` on a prepared config without touching the file system.
pub fn execute(command: Command, p: &Prepared) -> Result<Outcome> {
    match command {
        Command::Verify => run_verify(p),
        Command::Simulate => run_simulate(p),
        Command::EnumerateCells => run_enumerate(p),
        Command::CompareNoninteracting => run_compare(p),
        Command::FlatLimit => run_flat(p),
        Command::ParamIndependence => run_probe(p),
    }
}

struct Check {
    name: &'static str,
    value: f64,
    tolerance: f64,
}

impl Check {
    fn passed(&self) -> bool {
        self.value.is_finite() && self.value < self.tolerance
    }
}

fn run_verify(p: &Prepared) -> Result<Outcome> {
    let model = &p.model;
    let circuit = model.circuit();
    let mut rng = ChaCha8Rng::seed_from_u64(p.config.rng_seed);
    let mut checks = Vec::new();

    let dist = model.joint_unchecked(&p.psi0)?;
    checks.push(Check {
        name: "normalization",
        value: (dist.total - 1.0).abs(),
        tolerance: 1e-8,
    });
    let dim = circuit.shape().dim();
    if dim <= DENSE_CHECK_DIM {
        let sum = model.povm_sum()?;
        checks.push(Check {
            name: "povm_identity",
            value: operator_norm(&(sum - Operator::identity(dim, dim))),
            tolerance: 1e-8,
        });
    }

    let horizon = circuit.strip().horizon;
    let mut il = 0.0f64;
    for _ in 0..20 {
        let a = circuit.random_compatible_cut(&mut rng, 0, horizon - 2);
        let b = circuit.random_compatible_cut(&mut rng, 0, horizon - 2);
        let overlap = a.overlap(&b);
        for slot in 0..circuit.shape().particles {
            il = il.max(verify_complement_locality(circuit, &a, &b, slot));
            if !overlap.is_empty() {
                il = il.max(verify_interaction_locality(
                    circuit, &a, &b, &overlap, slot,
                )?);
            }
        }
    }
    checks.push(Check {
        name: "interaction_locality",
        value: il,
        tolerance: 1e-12,
    });

    let n = &model.params().n;
    if count_cells(n) <= crate::cells::ENUMERATION_GUARD && dim <= DENSE_CHECK_DIM {
        let seqs = enumerate_admissible_sequences(n)?;
        let configs = model.configs()?;
        let mut spread = 0.0f64;
        for _ in 0..5 {
            let c = &configs[rng.random_range(0..configs.len())];
            let geom = model.geometry(c)?;
            let first = crate::collapse::big_l(&geom, &seqs[0], circuit)?;
            for s in &seqs[1..] {
                let other = crate::collapse::big_l(&geom, s, circuit)?;
                spread = spread.max(operator_norm(&(&first - other)));
            }
        }
        checks.push(Check {
            name: "ordering_invariance",
            value: spread,
            tolerance: 1e-10,
        });
    }

    let mut profile = 0.0f64;
    let sites = circuit.strip().sites;
    for _ in 0..50 {
        let cut = circuit.random_compatible_cut(&mut rng, 0, horizon);
        let set: Vec<usize> = (0..sites).filter(|_| rng.random_bool(0.6)).collect();
        if set.is_empty() {
            continue;
        }
        let params = model.params();
        let profiles: Vec<Vec<f64>> = set
            .iter()
            .map(|&x| cutoff_profile(&set, x, &cut, params.sigma, params.metric))
            .collect::<Result<_>>()?;
        for z in 0..sites {
            let s: f64 = profiles.iter().map(|g| g[z] * g[z]).sum();
            let target = if set.contains(&z) { 1.0 } else { 0.0 };
            profile = profile.max((s - target).abs());
        }
    }
    checks.push(Check {
        name: "profile_identity",
        value: profile,
        tolerance: 1e-12,
    });

    let passed = checks.iter().all(Check::passed);
    let summary = checks
        .iter()
        .map(|c| {
            format!(
                "{:<22} {} value {:.3e} (tolerance {:.0e})",
                c.name,
                if c.passed() { "PASS" } else { "FAIL" },
                c.value,
                c.tolerance
            )
        })
        .collect();
    let body = json!({
        "passed": passed,
        "checks": checks.iter().map(|c| json!({
            "name": c.name,
            "value": c.value,
            "tolerance": c.tolerance,
            "passed": c.passed(),
        })).collect::<Vec<_>>(),
    });
    Ok(Outcome {
        artifacts: vec![json_artifact(
            "verify.json",
            header(p, Command::Verify),
            body,
        )?],
        passed,
        summary,
    })
}

fn run_simulate(p: &Prepared) -> Result<Outcome> {
    let model = &p.model;
    let dist = model.joint_distribution(&p.psi0)?;
    let samples = sample_flashes(&dist, p.config.rng_seed, p.config.samples);
    let mut csv = String::from("sample,particle,flash,band,site,t,x\n");
    for (s, c) in samples.iter().enumerate() {
        let events = model.geometry(c)?.events;
        for (i, fs) in c.flashes.iter().enumerate() {
            for (k0, f) in fs.iter().enumerate() {
                let e = events[i][k0];
                let _ = writeln!(
                    csv,
                    "{s},{i},{},{},{},{},{}",
                    k0 + 1,
                    f.band,
                    f.site,
                    e.t,
                    e.x
                );
            }
        }
    }
    let body = json!({
        "total": dist.total,
        "configs": dist.entries.len(),
        "distribution": distribution_json(&dist),
    });
    Ok(Outcome {
        artifacts: vec![
            json_artifact("distribution.json", header(p, Command::Simulate), body)?,
            Artifact {
                name: "samples.csv".into(),
                contents: csv.into_bytes(),
            },
        ],
        passed: true,
        summary: vec![
            format!("configs {}", dist.entries.len()),
            format!("total probability {}", format_float(dist.total)),
            format!("samples {}", samples.len()),
        ],
    })
}

/// Every flash in band 1 at its particle's seed site.
fn representative_config(model: &Model) -> FlashConfig {
    FlashConfig {
        flashes: model
            .params()
            .n
            .iter()
            .zip(model.seeds())
            .map(|(&m, s)| {
                vec![
                    Flash {
                        band: 1,
                        site: s.x as usize,
                    };
                    m
                ]
            })
            .collect(),
    }
}

fn run_enumerate(p: &Prepared) -> Result<Outcome> {
    let model = &p.model;
    let n = model.params().n.clone();
    let seqs = enumerate_admissible_sequences(&n)?;
    let config = representative_config(model);
    let geom = model.geometry(&config)?;
    let cx = &geom.complex;
    let cells: Vec<Value> = all_cells(&n)
        .iter()
        .map(|c| {
            json!({
                "index": c,
                "events": cx.cell_events(c).len(),
                "has_interior": cx.has_interior(c),
            })
        })
        .collect();
    let mut three = Vec::new();
    for (i, &m) in n.iter().enumerate() {
        for c in all_cells(&n)
            .into_iter()
            .filter(|c| c.0[i] >= 1 && c.0[i] <= m)
        {
            let c3 = AbstractCell3::new(i, c)?;
            three.push(json!({
                "particle": i,
                "cell": c3.cell,
                "sites": cx.three_cell_sites(&c3),
            }));
        }
    }
    let canonical = model.canonical_sequence();
    let mut surfaces = Vec::new();
    for len in 0..canonical.order().len() {
        let v: PredecessorSet = canonical.prefix(len);
        surfaces.push(json!({"cells": len, "surface": cx.surface_of(&v)?}));
    }
    let body = json!({
        "n": n,
        "cell_count": count_cells(&n),
        "sequence_count": seqs.len(),
        "sequences": seqs.iter().map(|s| s.order().to_vec()).collect::<Vec<_>>(),
        "representative": {
            "flashes": config,
            "hyperboloids": cx.hyperboloids,
            "events": geom.events,
            "cells": cells,
            "three_cells": three,
            "canonical_surfaces": surfaces,
        },
    });
    Ok(Outcome {
        artifacts: vec![json_artifact(
            "cells.json",
            header(p, Command::EnumerateCells),
            body,
        )?],
        passed: true,
        summary: vec![
            format!("4-cells {}", count_cells(&n)),
            format!("admissible sequences {}", seqs.len()),
        ],
    })
}

fn run_compare(p: &Prepared) -> Result<Outcome> {
    let free = p.model.circuit().params().clone();
    let circuit = Circuit::new(
        p.model.circuit().strip(),
        p.model.params().particles(),
        GateParams { gamma: 0.0, ..free },
    )?;
    let model = Model::new(
        Arc::new(circuit),
        p.model.params().clone(),
        p.model.seeds().to_vec(),
    )?;
    let general = model.joint_distribution(&p.psi0)?;
    let reference = model.noninteracting_reference(&p.psi0)?;
    let tv = general.total_variation(&reference);
    let mi = if model.params().particles() == 2 {
        general.mutual_information(|c| c.flashes[0].clone(), |c| c.flashes[1].clone())
    } else {
        f64::NAN
    };
    let passed = tv < 1e-8;
    let body = json!({
        "gamma_forced_zero": p.model.circuit().params().gamma != 0.0,
        "total_variation": tv,
        "mutual_information": mi,
        "passed": passed,
    });
    Ok(Outcome {
        artifacts: vec![json_artifact(
            "compare_noninteracting.json",
            header(p, Command::CompareNoninteracting),
            body,
        )?],
        passed,
        summary: vec![
            format!("total variation {tv:.3e}"),
            format!("inter-particle mutual information {mi:.3e}"),
        ],
    })
}

fn run_flat(p: &Prepared) -> Result<Outcome> {
    let model = &p.model;
    let reference = model.flat_limit_reference(&p.psi0)?;
    let general = model.joint_distribution(&p.psi0)?;
    let tv = general.total_variation(&reference);
    let passed = tv < 1e-8;
    let body = json!({"total_variation": tv, "passed": passed});
    Ok(Outcome {
        artifacts: vec![json_artifact(
            "flat_limit.json",
            header(p, Command::FlatLimit),
            body,
        )?],
        passed,
        summary: vec![format!("total variation {tv:.3e}")],
    })
}

fn run_probe(p: &Prepared) -> Result<Outcome> {
    let probe = p
        .config
        .probe
        .as_ref()
        .ok_or_else(|| invalid("probe", "param-independence needs a probe section"))?;
    let strip = p.model.circuit().strip();
    let field_a = p.model.circuit().params().potential.clone();
    let mut regions = p.config.dynamics.potential.clone();
    regions.extend_from_slice(&probe.field_b);
    let field_b = potential_from_regions(strip, &regions)?;
    let tv = p
        .model
        .parameter_independence_probe(&probe.surface, &field_a, &field_b, &p.psi0)?;
    let body = json!({"surface": probe.surface, "total_variation": tv});
    Ok(Outcome {
        artifacts: vec![json_artifact(
            "param_independence.json",
            header(p, Command::ParamIndependence),
            body,
        )?],
        passed: true,
        summary: vec![format!("past-marginal total variation {tv:.3e}")],
    })
}

fn run(cli: &Cli) -> Result<bool> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| invalid("--config", "a config file is required"))?;
    let text = fs::read_to_string(path)?;
    let mut config = RunConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        config.rng_seed = seed;
    }
    let out_dir = cli
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let prepared = config.prepare()?;
    eprintln!(
        "flashcollapse {}: config_hash={} rng_seed={}",
        cli.command.name(),
        prepared.hash,
        prepared.config.rng_seed
    );
    let start = Instant::now();
    let outcome = execute(cli.command, &prepared)?;
    fs::create_dir_all(&out_dir)?;
    for a in &outcome.artifacts {
        write_atomic(&out_dir.join(&a.name), &a.contents)?;
    }
    for line in &outcome.summary {
        println!("{line}");
    }
    eprintln!(
        "wrote {} file(s) to {} in {:.2}s",
        outcome.artifacts.len(),
        out_dir.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(outcome.passed)
}

/// Entry point of the binary.
pub fn main_with_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

//! Acceptance criteria, one PASS/FAIL line each.

use std::collections::BTreeSet;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use flashcollapse::cells::{
    all_cells, count_cells, enumerate_admissible_sequences, is_predecessor_complete, AbstractCell3,
    AbstractCell4, AdmissibleSequence, CellComplex,
};
use flashcollapse::collapse::{
    big_l, cutoff_profile, DistanceMetric, Flash, FlashConfig, ModelParams, ProfileMode,
};
use flashcollapse::evolution::{
    verify_complement_locality, verify_interaction_locality, verify_multiplication_locality,
    Circuit, GateParams, Potential,
};
use flashcollapse::lattice::{Cut, Event, Strip};
use flashcollapse::model::Model;
use flashcollapse::quantum::{
    gram, operator_norm, product_state, random_state, Operator, StateVec, C64,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn circuit(
    sites: usize,
    horizon: i64,
    particles: usize,
    gamma: f64,
    potential: Potential,
) -> Arc<Circuit> {
    let strip = Strip::new(sites, horizon).unwrap();
    Arc::new(
        Circuit::new(
            strip,
            particles,
            GateParams {
                theta: 0.4,
                gamma,
                potential,
            },
        )
        .unwrap(),
    )
}

fn params(n: Vec<usize>, profile: ProfileMode) -> ModelParams {
    ModelParams {
        sigma: 1.5,
        tau_hat: 3.0,
        delta_s: 2.0,
        bands: 2,
        n,
        metric: DistanceMetric::Arc,
        profile,
    }
}

fn standard_model(n: Vec<usize>, gamma: f64, profile: ProfileMode) -> Model {
    let seeds = vec![Event::new(0, 2), Event::new(0, 4)];
    Model::new(
        circuit(7, 10, 2, gamma, Potential::zero()),
        params(n, profile),
        seeds,
    )
    .unwrap()
}

fn random_config(rng: &mut ChaCha8Rng, n: &[usize], bands: usize, sites: usize) -> FlashConfig {
    FlashConfig {
        flashes: n
            .iter()
            .map(|&m| {
                (0..m)
                    .map(|_| Flash {
                        band: rng.random_range(1..=bands),
                        site: rng.random_range(0..sites),
                    })
                    .collect()
            })
            .collect(),
    }
}

fn identity_defect(op: Operator) -> f64 {
    let dim = op.nrows();
    operator_norm(&(op - Operator::identity(dim, dim)))
}

fn povm_normalization() -> Outcome {
    let start = Instant::now();
    let model = standard_model(vec![1, 1], 0.7, ProfileMode::CutOff);
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let psi = random_state(196, &mut ChaCha8Rng::seed_from_u64(100 + seed));
        let total = model.joint_unchecked(&psi).unwrap().total;
        worst = worst.max((total - 1.0).abs());
    }
    let povm = identity_defect(model.povm_sum().unwrap());
    let secs = start.elapsed().as_secs_f64();
    (
        worst < 1e-8 && povm < 1e-8,
        format!("max |total - 1| = {worst:.2e}, |sum D - I| = {povm:.2e}, {secs:.1}s"),
    )
}

/// Linear extensions of the componentwise order, counted over all
/// permutations.
fn brute_force_extensions(n: &[usize]) -> usize {
    let cells = all_cells(n);
    let mut idx: Vec<usize> = (0..cells.len()).collect();
    let mut count = 0;
    permute(&mut idx, 0, &mut |perm| {
        let ok = (0..perm.len())
            .all(|a| (a + 1..perm.len()).all(|b| !cells[perm[b]].is_below(&cells[perm[a]])));
        if ok {
            count += 1;
        }
    });
    count
}

fn permute(v: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        visit(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, visit);
        v.swap(k, i);
    }
}

fn ordering_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut spread = 0.0f64;
    let mut counts = Vec::new();
    for (n, trials) in [(vec![1, 1], 20), (vec![2, 1], 10)] {
        let model = standard_model(n.clone(), 0.7, ProfileMode::CutOff);
        let seqs = enumerate_admissible_sequences(&n).unwrap();
        counts.push((seqs.len(), brute_force_extensions(&n)));
        for _ in 0..trials {
            let c = random_config(&mut rng, &n, 2, 7);
            let geom = model.geometry(&c).unwrap();
            let first = big_l(&geom, &seqs[0], model.circuit()).unwrap();
            for s in &seqs[1..] {
                let other = big_l(&geom, s, model.circuit()).unwrap();
                spread = spread.max(operator_norm(&(&first - other)));
            }
        }
    }
    let counts_ok = counts[1] == (5, 5) && counts[0].0 == 2;
    (
        spread < 1e-10 && counts_ok,
        format!("max spread {spread:.2e}, sequence counts (found, oracle) {counts:?}"),
    )
}

fn profile_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut inside = 0.0f64;
    let mut outside = 0.0f64;
    let mut triples = 0;
    while triples < 200 {
        let sites = rng.random_range(2..10);
        let c = circuit(sites, 12, 1, 0.0, Potential::zero());
        let cut = c.random_compatible_cut(&mut rng, 0, 12);
        let set: Vec<usize> = (0..sites).filter(|_| rng.random_bool(0.5)).collect();
        if set.is_empty() {
            continue;
        }
        let sigma = rng.random_range(0.3..4.0);
        let metric = if rng.random_bool(0.5) {
            DistanceMetric::Arc
        } else {
            DistanceMetric::Minkowski
        };
        let z = rng.random_range(0..sites);
        let sum: f64 = set
            .iter()
            .map(|&x| cutoff_profile(&set, x, &cut, sigma, metric).unwrap()[z].powi(2))
            .sum();
        if set.contains(&z) {
            inside = inside.max((sum - 1.0).abs());
        } else {
            outside = outside.max(sum.abs());
        }
        triples += 1;
    }
    (
        inside < 1e-12 && outside < 1e-12,
        format!("max deviation in A {inside:.2e}, outside A {outside:.2e}"),
    )
}

fn interaction_locality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let potential = Potential::from_fn(Strip::new(7, 10).unwrap(), |e| {
        0.3 * ((e.t * 7 + e.x) as f64).sin()
    });
    let c = circuit(7, 10, 2, 0.7, potential);
    let mut worst = 0.0f64;
    let mut pairs = 0;
    while pairs < 50 {
        let a = c.random_compatible_cut(&mut rng, 0, 8);
        let b = c.random_compatible_cut(&mut rng, 0, 8);
        let overlap = a.overlap(&b);
        if overlap.is_empty() {
            continue;
        }
        let set: Vec<usize> = overlap
            .iter()
            .copied()
            .filter(|_| rng.random_bool(0.6))
            .collect();
        let slot = rng.random_range(0..2);
        let mut f = vec![0.0; 7];
        for &x in &overlap {
            f[x] = rng.random_range(-2.0..2.0);
        }
        worst = worst
            .max(verify_interaction_locality(&c, &a, &b, &set, slot).unwrap())
            .max(verify_multiplication_locality(&c, &a, &b, &f, slot).unwrap())
            .max(verify_complement_locality(&c, &a, &b, slot));
        pairs += 1;
    }
    (
        worst < 1e-12,
        format!("max deviation {worst:.2e} over 50 compatible cut pairs"),
    )
}

fn random_complex(rng: &mut ChaCha8Rng, n: &[usize]) -> CellComplex {
    let sites = rng.random_range(4..8);
    let c = circuit(sites, 14, n.len(), 0.0, Potential::zero());
    let seeds: Vec<Event> = (0..n.len())
        .map(|_| Event::new(0, rng.random_range(0..sites as i64)))
        .collect();
    let p = ModelParams {
        delta_s: rng.random_range(0.6..2.5),
        bands: 3,
        ..params(n.to_vec(), ProfileMode::CutOff)
    };
    let model = Model::new(c, p, seeds).unwrap();
    let cfg = random_config(rng, n, 3, sites);
    model.geometry(&cfg).unwrap().complex
}

fn subsets(cells: &[AbstractCell4]) -> Vec<BTreeSet<AbstractCell4>> {
    (0..1u32 << cells.len())
        .map(|mask| {
            cells
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, c)| c.clone())
                .collect()
        })
        .collect()
}

/// Each 3-cell lies on the surface reached just before its 4-cell is added
/// and strictly below the surface just after.
fn crossing_ok(cx: &CellComplex, seq: &AdmissibleSequence) -> bool {
    let n = cx.n();
    let total = count_cells(&n);
    let horizon = cx.strip.horizon;
    for c in all_cells(&n) {
        for i in 0..n.len() {
            if c.0[i] == 0 {
                continue;
            }
            let c3 = AbstractCell3::new(i, c.clone()).unwrap();
            let cut = cx.cut(i, c3.flash());
            let step = seq.step_of(&c).unwrap();
            let before = cx.surface_of(&seq.prefix(step)).unwrap();
            let after = (step + 1 < total).then(|| cx.surface_of(&seq.prefix(step + 1)).unwrap());
            for x in cx.three_cell_sites(&c3) {
                let t = cut.time(x);
                if before.time(x) != t {
                    return false;
                }
                if t < horizon && after.as_ref().is_some_and(|a| a.time(x) <= t) {
                    return false;
                }
            }
        }
    }
    true
}

fn combinatorics() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = enumerate_admissible_sequences(&[1, 1]).unwrap().len() == 2;
    for n in [vec![2, 1], vec![2, 2]] {
        let found = enumerate_admissible_sequences(&n).unwrap().len();
        let oracle = brute_force_extensions(&n);
        ok &= found == oracle;
        notes.push(format!("n={n:?}: {found}/{oracle}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut crossing_failures = 0;
    let mut forward_failures = 0;
    let mut converse_checked = 0;
    let mut converse_failures = 0;
    for trial in 0..100 {
        let n = if trial % 2 == 0 {
            vec![1, 1]
        } else {
            vec![2, 1]
        };
        let cx = random_complex(&mut rng, &n);
        for seq in enumerate_admissible_sequences(&n).unwrap() {
            if AdmissibleSequence::new(&n, seq.order().to_vec()).is_err() || !crossing_ok(&cx, &seq)
            {
                crossing_failures += 1;
            }
        }
        let cells = all_cells(&n);
        let all_nonempty = cells.iter().all(|c| cx.has_interior(c));
        for v in subsets(&cells) {
            let past_complete = cx.region_is_past_complete(&v);
            if is_predecessor_complete(&v) {
                if !past_complete {
                    forward_failures += 1;
                }
            } else if all_nonempty {
                converse_checked += 1;
                if past_complete {
                    converse_failures += 1;
                }
            }
        }
    }
    ok &= crossing_failures == 0 && forward_failures == 0 && converse_failures == 0;
    (
        ok,
        format!(
            "counts {}; crossing failures {crossing_failures}; forward failures {forward_failures}; \
             converse failures {converse_failures}/{converse_checked}",
            notes.join(", ")
        ),
    )
}

fn simple_case() -> Outcome {
    let model = standard_model(vec![1, 1], 0.7, ProfileMode::CutOff);
    let seqs = enumerate_admissible_sequences(&[1, 1]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let c = random_config(&mut rng, &[1, 1], 2, 7);
        let simple = model.simple_case_l(&c).unwrap();
        let geom = model.geometry(&c).unwrap();
        for s in &seqs {
            let general = big_l(&geom, s, model.circuit()).unwrap();
            worst = worst.max(operator_norm(&(&simple - general)));
        }
    }
    let mut sum = Operator::zeros(196, 196);
    for c in model.configs().unwrap() {
        sum += gram(&model.simple_case_l(&c).unwrap()) * C64::new(c.weight(model.params()), 0.0);
    }
    let norm = identity_defect(sum);
    (
        worst < 1e-10 && norm < 1e-8,
        format!("max |L_simple - L| = {worst:.2e}, |sum D_simple - I| = {norm:.2e}"),
    )
}

fn one_particle(rng: &mut ChaCha8Rng) -> StateVec {
    random_state(14, rng)
}

fn noninteracting() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cut_off = standard_model(vec![1, 1], 0.0, ProfileMode::CutOff);
    let psi = random_state(196, &mut rng);
    let tv = cut_off
        .joint_distribution(&psi)
        .unwrap()
        .total_variation(&cut_off.noninteracting_reference(&psi).unwrap());

    let full = standard_model(vec![1, 1], 0.0, ProfileMode::Full);
    let by_particle = |c: &FlashConfig| c.flashes[0].clone();
    let other = |c: &FlashConfig| c.flashes[1].clone();
    let product = product_state(&[one_particle(&mut rng), one_particle(&mut rng)]);
    let mi_product = full
        .joint_distribution(&product)
        .unwrap()
        .mutual_information(by_particle, other);
    let mi_product_cut = cut_off
        .joint_distribution(&product)
        .unwrap()
        .mutual_information(by_particle, other);

    // (|0, 6> + |6, 0>) / sqrt 2, right movers
    let at = |x: usize| {
        let mut v = StateVec::zeros(14);
        v[2 * x + 1] = C64::new(1.0, 0.0);
        v
    };
    let bell = (product_state(&[at(0), at(6)]) + product_state(&[at(6), at(0)]))
        * C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let mi_bell = full
        .joint_distribution(&bell)
        .unwrap()
        .mutual_information(by_particle, other);
    (
        tv < 1e-8 && mi_product < 1e-10 && mi_bell > 0.01,
        format!(
            "TV general vs tensor product {tv:.2e}; MI product {mi_product:.2e} (uncut profiles), \
             {mi_product_cut:.2e} (cut-off, reported); MI entangled {mi_bell:.3e}"
        ),
    )
}

fn flat_limit() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let cases: [(usize, Vec<Event>, Vec<usize>, i64); 2] = [
        (
            2,
            vec![Event::new(-18, 1), Event::new(-19, 3)],
            vec![1, 1],
            24,
        ),
        (1, vec![Event::new(-18, 2)], vec![2], 64),
    ];
    for (particles, seeds, n, horizon) in cases {
        let c = circuit(5, horizon, particles, 0.7, Potential::zero());
        let p = ModelParams {
            delta_s: 19.55,
            tau_hat: 20.0,
            ..params(n.clone(), ProfileMode::CutOff)
        };
        let model = Model::new(c, p, seeds).unwrap();
        let dim = model.circuit().shape().dim();
        let psi = random_state(dim, &mut ChaCha8Rng::seed_from_u64(8));
        let tv = model
            .joint_distribution(&psi)
            .unwrap()
            .total_variation(&model.flat_limit_reference(&psi).unwrap());
        ok &= tv < 1e-8;
        notes.push(format!("N={particles} n={n:?}: TV {tv:.2e}"));
    }
    (ok, notes.join("; "))
}

fn parameter_independence() -> Outcome {
    let strip = Strip::new(5, 12).unwrap();
    let base = Potential::from_fn(strip, |e| 0.2 * (e.x as f64) - 0.1 * (e.t as f64));
    let model = Model::new(
        circuit(5, 12, 2, 0.7, base.clone()),
        params(vec![1, 1], ProfileMode::CutOff),
        vec![Event::new(0, 1), Event::new(0, 3)],
    )
    .unwrap();
    let psi = random_state(100, &mut ChaCha8Rng::seed_from_u64(9));
    // a surface above every 3-cell of every history
    let mut top = Cut::flat(5, 0);
    for c in model.configs().unwrap() {
        for cut in model
            .geometry(&c)
            .unwrap()
            .complex
            .hyperboloids
            .iter()
            .flatten()
        {
            top = top.join(cut);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut changed = base.clone();
    for e in strip.events() {
        if e.t > top.time(e.x as usize) {
            changed.set(e, base.get(e) + rng.random_range(-3.0..3.0));
        }
    }
    let above = model
        .parameter_independence_probe(&top, &base, &changed, &psi)
        .unwrap();
    let same = model
        .parameter_independence_probe(&top, &base, &base, &psi)
        .unwrap();
    let low = Cut::flat(5, 3);
    let mut straddling = base.clone();
    for e in strip.events() {
        if e.t > 3 {
            straddling.set(e, base.get(e) + rng.random_range(-3.0..3.0));
        }
    }
    let overlap = model
        .parameter_independence_probe(&low, &base, &straddling, &psi)
        .unwrap();
    (
        above < 1e-10 && same == 0.0,
        format!(
            "field change above all 3-cells: TV {above:.2e}; identical fields: {same:.1e}; \
             change above t = 3 with straddling cells: TV {overlap:.3e} (reported)"
        ),
    )
}

fn reproducibility() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_flashcollapse");
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.json");
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(exe)
            .args(["simulate", "--config", config, "--seed", "77", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(
            status.status.success(),
            "{}",
            String::from_utf8_lossy(&status.stderr)
        );
        ["distribution.json", "samples.csv"].map(|f| std::fs::read(out.join(f)).unwrap())
    };
    let a = run("a");
    let b = run("b");
    let identical = a == b;
    (
        identical,
        format!("distribution.json and samples.csv byte-identical: {identical}"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("POVM normalization", povm_normalization),
        ("ordering invariance", ordering_invariance),
        ("cut-off profile identity", profile_identity),
        ("interaction locality", interaction_locality),
        ("combinatorics", combinatorics),
        ("simple-case equivalence", simple_case),
        ("non-interacting reduction", noninteracting),
        ("non-relativistic limit", flat_limit),
        ("parameter independence", parameter_independence),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (pass, detail) = match std::panic::catch_unwind(check) {
            Ok(r) => r,
            Err(e) => (
                false,
                format!(
                    "panicked: {}",
                    e.downcast_ref::<String>()
                        .cloned()
                        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_default()
                ),
            ),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<26} {}  {detail}",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" }
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion/criteria failed");
        ExitCode::FAILURE
    }
}

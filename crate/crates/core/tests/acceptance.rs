//! One pass/fail line per acceptance criterion, each with its runtime limit.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::Rng;

use wstate::adaptive::{distribution_crosscheck, AdaptivePlan};
use wstate::linear_optics::{apply, embed};
use wstate::measurement::{collapse, detect_and_absorb, detection_distribution, MIN_OUTCOME_PROBABILITY};
use wstate::permanent::{gurvits_estimate, operator_norm, permanent_bruteforce, permanent_exact};
use wstate::protocols::bleeding::{bleeding_analytic, sigma_bell_decomposition_check};
use wstate::protocols::chsh::{chsh_experiment, TSIRELSON};
use wstate::protocols::faux::{faux_equivalence_check, random_protocol};
use wstate::random::{haar_unitary, random_complex_matrix, rng_from_seed, trial_rng, TrialRng};
use wstate::resource_states::{
    apply_party_phases, compare_w_copies_sigma_star, heralded_phases, heralded_w, sigma_star, w_state, WPhases,
};
use wstate::{Error, Occupation, SparseState};

type Outcome = std::result::Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn crit<T>(r: wstate::Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e: Error| e.to_string())
}

fn bleeding_probabilities() -> Outcome {
    let r = crit(bleeding_analytic())?;
    let ok = (r.bell_probability - 0.5).abs() <= 1e-9
        && (r.conversion_probability - 1.0 / 3.0).abs() <= 1e-9
        && (r.success_probability - 2.0 / 3.0).abs() <= 1e-9;
    check(
        ok,
        format!(
            "bell={:.12} conversion={:.12} total={:.12}",
            r.bell_probability, r.conversion_probability, r.success_probability
        ),
    )
}

fn bell_decomposition() -> Outcome {
    let r = crit(sigma_bell_decomposition_check())?;
    check(
        (r.fidelity - 1.0).abs() <= 1e-9,
        format!(
            "fidelity={:.12} ({} of {} conventions)",
            r.fidelity, r.conventions_matching, r.conventions_tested
        ),
    )
}

fn faux_equivalence() -> Outcome {
    let mut rng = rng_from_seed(2024);
    let mut worst = 0.0f64;
    let mut count = 0;
    for n in 1..=3 {
        for m in n..=4 {
            for _ in 0..3 {
                let steps = rng.random_range(1..=3);
                let protocol = random_protocol(&mut rng, m, steps);
                worst = worst.max(crit(faux_equivalence_check(n, m, &protocol))?.tv_distance);
                count += 1;
            }
        }
    }
    check(
        count >= 20 && worst <= 1e-9,
        format!("{count} protocols, max TV={worst:.3e}"),
    )
}

fn chsh() -> Outcome {
    let r = crit(chsh_experiment(16, 100_000, 7))?;
    let analytic = r.derivation.chsh_value;
    check(
        r.deviation_in_standard_errors.abs() <= 3.0 && (analytic - TSIRELSON).abs() <= 1e-9,
        format!(
            "S={:.4} ± {:.4} ({:+.2} se), analytic={:.12}",
            r.s_estimate, r.standard_error, r.deviation_in_standard_errors, analytic
        ),
    )
}

fn adaptive_formula() -> Outcome {
    let mut worst = 0.0f64;
    for (i, (n, k)) in [(1, 4), (2, 6), (3, 6)].into_iter().enumerate() {
        let plan = crit(AdaptivePlan::random(&mut rng_from_seed(100 + i as u64), k, n))?;
        let r = crit(distribution_crosscheck(&plan, true))?;
        worst = worst.max(r.max_abs_diff);
    }
    check(worst <= 1e-9, format!("max abs diff={worst:.3e}"))
}

fn permanents() -> Outcome {
    let mut rng = rng_from_seed(6);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let a = random_complex_matrix(&mut rng, 1 + i % 8, 1 + i % 8);
        let d = (crit(permanent_exact(&a))? - crit(permanent_bruteforce(&a))?).norm();
        worst = worst.max(d);
    }
    let (epsilon, delta, trials) = (0.1, 0.05, 500u64);
    let mut failures = 0;
    for t in 0..trials {
        let mut rng = trial_rng(66, t);
        let a = random_complex_matrix(&mut rng, 6, 6);
        let a = &a * Complex64::new(1.0 / operator_norm(&a), 0.0);
        let exact = crit(permanent_exact(&a))?;
        if (crit(gurvits_estimate(&a, epsilon, delta, t))? - exact).norm() > epsilon {
            failures += 1;
        }
    }
    let rate = failures as f64 / trials as f64;
    check(
        worst <= 1e-10 && rate <= delta + 0.02,
        format!("exact vs brute force {worst:.3e}, Gurvits failure rate {rate:.3}"),
    )
}

fn sigma_star_approximation() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for n in [2, 3] {
        let r = crit(compare_w_copies_sigma_star(n * n * n, n))?;
        ok &= (r.projected_fidelity - 1.0).abs() <= 1e-9 && (r.collision_weight - r.collision_formula).abs() <= 1e-9;
        detail.push(format!(
            "N={n}: F={:.12} collisions={:.12} vs {:.12}",
            r.projected_fidelity, r.collision_weight, r.collision_formula
        ));
    }
    check(ok, detail.join("; "))
}

fn heralded() -> Outcome {
    let mut overlap = 0.0f64;
    let mut worst_fidelity = 1.0f64;
    for k in [2, 3, 4, 8] {
        let states: Vec<SparseState> = (0..k)
            .map(|s| heralded_w(k, s))
            .collect::<wstate::Result<_>>()
            .map_err(|e| e.to_string())?;
        for i in 0..k {
            for j in i + 1..k {
                overlap = overlap.max(crit(states[i].inner_product(&states[j]))?.norm());
            }
            let theta: Vec<f64> = crit(heralded_phases(k, i))?.theta().iter().map(|t| -t).collect();
            let corrected = crit(states[i].apply_mode_phases(&theta))?;
            worst_fidelity = worst_fidelity.min(crit(corrected.fidelity(&crit(w_state(k, &WPhases::zeros(k)))?))?);
        }
    }
    check(
        overlap <= 1e-10 && worst_fidelity >= 1.0 - 1e-12,
        format!("max overlap={overlap:.3e}, min corrected fidelity={worst_fidelity:.15}"),
    )
}

fn random_state(rng: &mut TrialRng, modes: usize) -> SparseState {
    let terms = (0..rng.random_range(1..=6)).map(|_| {
        let occ: Vec<u8> = (0..modes).map(|_| rng.random_range(0..=2)).collect();
        (
            Occupation::new(occ),
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        )
    });
    let s = SparseState::from_terms(modes, terms.collect::<Vec<_>>()).unwrap();
    if s.norm_sqr() < 1e-6 {
        SparseState::basis(Occupation::vacuum(modes))
    } else {
        s.normalize().unwrap()
    }
}

fn random_subset(rng: &mut TrialRng, modes: usize) -> Vec<usize> {
    let mut subset: Vec<usize> = (0..modes).filter(|_| rng.random::<bool>()).collect();
    if subset.is_empty() {
        subset.push(rng.random_range(0..modes));
    }
    subset
}

fn sector_weights(s: &SparseState) -> BTreeMap<usize, f64> {
    let mut w = BTreeMap::new();
    for (occ, amp) in s.iter() {
        *w.entry(occ.total()).or_insert(0.0) += amp.norm_sqr();
    }
    w
}

fn reinsert(collapsed: &SparseState, map: &[Option<usize>], modes: &[usize], counts: &[u8]) -> SparseState {
    let terms = collapsed.iter().map(|(occ, amp)| {
        let mut full = vec![0u8; map.len()];
        for (old, new) in map.iter().enumerate() {
            if let Some(j) = new {
                full[old] = occ.get(*j);
            }
        }
        for (&m, &c) in modes.iter().zip(counts) {
            full[m] = c;
        }
        (Occupation::new(full), *amp)
    });
    SparseState::from_terms(map.len(), terms.collect::<Vec<_>>()).unwrap()
}

fn property_suites() -> Outcome {
    const INSTANCES: u64 = 100;
    let mut norm = 0.0f64;
    let mut photons = 0.0f64;
    let mut born = 0.0f64;
    let mut collapse_err = 0.0f64;
    for t in 0..INSTANCES {
        let mut rng = trial_rng(9000, t);
        let modes = rng.random_range(2..=4);
        let state = random_state(&mut rng, modes);
        let targets = random_subset(&mut rng, modes);
        let u = embed(haar_unitary(&mut rng, targets.len()), &targets).map_err(|e| e.to_string())?;
        let out = crit(apply(&state, &u))?;
        norm = norm.max((out.norm_sqr() - 1.0).abs());
        let (before, after) = (sector_weights(&state), sector_weights(&out));
        for (n, w) in &before {
            photons = photons.max((w - after.get(n).unwrap_or(&0.0)).abs());
        }

        let measured = random_subset(&mut rng, modes);
        let dist = crit(detection_distribution(&out, &measured))?;
        born = born.max((dist.total() - 1.0).abs());
        let mut rebuilt = SparseState::empty(modes);
        for (outcome, p) in dist.iter() {
            if p < MIN_OUTCOME_PROBABILITY {
                continue;
            }
            let c = crit(collapse(&out, &measured, &outcome))?;
            let (_, p_absorb) = crit(detect_and_absorb(&out, &measured, &outcome))?;
            collapse_err = collapse_err
                .max((c.probability - p).abs())
                .max((p_absorb - p).abs())
                .max((c.state.norm_sqr() - 1.0).abs());
            let piece = reinsert(&c.state, &c.mode_map, &measured, outcome.counts());
            crit(rebuilt.add_scaled(&piece, Complex64::new(p.sqrt(), 0.0)))?;
        }
        collapse_err = collapse_err.max(crit(rebuilt.max_abs_diff(&out))?.max(0.0));
    }

    let mut dephasing = 0.0f64;
    for t in 0..INSTANCES {
        let mut rng = trial_rng(9500, t);
        let (k, n, m) = [(3, 2, 2), (4, 2, 2), (3, 3, 3), (4, 2, 3)][t as usize % 4];
        let (resource, layout) = crit(sigma_star(k, n, m))?;
        let phases: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        let dephased = crit(apply_party_phases(&resource, &layout, &phases))?;
        let local = haar_unitary(&mut rng, m);
        let mut evolved = [resource, dephased];
        for q in 0..k {
            let u = embed(local.clone(), layout.party(q)).map_err(|e| e.to_string())?;
            for s in evolved.iter_mut() {
                *s = crit(apply(s, &u))?;
            }
        }
        let all: Vec<usize> = (0..k * m).collect();
        let a = crit(detection_distribution(&evolved[0], &all))?;
        let b = crit(detection_distribution(&evolved[1], &all))?;
        dephasing = dephasing.max(a.max_abs_diff(&b));
    }
    check(
        norm <= 1e-9 && photons <= 1e-9 && born <= 1e-9 && collapse_err <= 1e-9 && dephasing <= 1e-9,
        format!(
            "{INSTANCES} instances each: norm {norm:.1e}, photon sectors {photons:.1e}, Born {born:.1e}, collapse {collapse_err:.1e}, dephasing {dephasing:.1e}"
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        (
            "bleeding exact probabilities",
            Duration::from_secs(5),
            bleeding_probabilities,
        ),
        (
            "four-party Bell decomposition",
            Duration::from_secs(5),
            bell_decomposition,
        ),
        (
            "faux/third-quantized equivalence",
            Duration::from_secs(120),
            faux_equivalence,
        ),
        ("multi-party CHSH", Duration::from_secs(120), chsh),
        (
            "adaptive sampling permanent formula",
            Duration::from_secs(120),
            adaptive_formula,
        ),
        ("permanent kernels", Duration::from_secs(180), permanents),
        (
            "W copies vs symmetric subset state",
            Duration::from_secs(60),
            sigma_star_approximation,
        ),
        (
            "heralded W orthogonality and correction",
            Duration::from_secs(10),
            heralded,
        ),
        ("property suites", Duration::from_secs(180), property_suites),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *limit;
        let (pass, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {}: {name}: {detail} [{:.2} s, limit {} s{}]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { ", too slow" }
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

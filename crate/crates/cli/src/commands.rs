use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use wstate::adaptive::{distribution_crosscheck, outcome_probability, run_adaptive_with, AdaptivePlan};
use wstate::io::{matrix_from_rows, parse_matrix, PlanJson, PovmJson};
use wstate::permanent::{
    gurvits_estimate, gurvits_sample_count, operator_norm, permanent_bruteforce, permanent_exact, MAX_BRUTEFORCE,
};
use wstate::protocols::bleeding::{bleeding_analytic, bleeding_sequential, bleeding_sequential_exact};
use wstate::protocols::chsh::{chsh_experiment, TSIRELSON};
use wstate::protocols::faux::{faux_equivalence_check, random_protocol};
use wstate::protocols::povm::{wlike_povm_check, Povm, TruncatedFockBasis, WlikeTolerance};
use wstate::random::{rng_from_seed, trial_rng};
use wstate::resource_states::{compare_w_copies_sigma_star, injection_fraction};

use crate::config::{Command, Config, UsageError};

pub const SAMPLE_MAX_PHOTONS: usize = 6;
const GURVITS_EPSILON: f64 = 0.1;
const GURVITS_DELTA: f64 = 0.05;

#[derive(Serialize, Debug, Clone)]
pub struct Criterion {
    pub name: String,
    pub observed: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Criterion {
    fn within(name: &str, observed: f64, expected: f64, tolerance: f64) -> Self {
        Criterion {
            name: name.to_string(),
            observed,
            expected,
            tolerance,
            pass: (observed - expected).abs() <= tolerance,
        }
    }
}

pub struct Outcome {
    pub results: Value,
    pub criteria: Vec<Criterion>,
    pub table: Option<Vec<TableRow>>,
}

/// One CSV line of a distribution table.
pub struct TableRow {
    pub outcome: Vec<usize>,
    pub probability_model: f64,
    pub probability_simulated: f64,
}

pub fn run(cfg: &Config) -> Result<Outcome, UsageError> {
    match cfg.command {
        Command::Bell => bell(cfg),
        Command::BleedAnalytic => bleed_analytic(),
        Command::BleedSeq => bleed_seq(cfg),
        Command::FauxCheck => faux_check(cfg),
        Command::Sample => sample(cfg),
        Command::Permanent => permanent(cfg),
        Command::PovmCheck => povm_check(cfg),
        Command::WstateFidelity => wstate_fidelity(cfg),
    }
}

fn plain(results: impl Serialize, criteria: Vec<Criterion>) -> Result<Outcome, UsageError> {
    Ok(Outcome {
        results: serde_json::to_value(results)?,
        criteria,
        table: None,
    })
}

fn read(path: &Path) -> Result<String, UsageError> {
    std::fs::read_to_string(path).map_err(|e| UsageError(format!("{}: {e}", path.display())))
}

fn require_matrix(cfg: &Config) -> Result<&Path, UsageError> {
    cfg.matrix
        .as_deref()
        .ok_or_else(|| UsageError(format!("`{}` needs --matrix", cfg.command)))
}

fn bell(cfg: &Config) -> Result<Outcome, UsageError> {
    let r = chsh_experiment(cfg.k.unwrap_or(16), cfg.trials.unwrap_or(100_000), cfg.seed)?;
    let criteria = vec![
        Criterion::within(
            "chsh_within_3_standard_errors",
            r.deviation_in_standard_errors,
            0.0,
            3.0,
        ),
        Criterion::within("analytic_chsh_value", r.derivation.chsh_value, TSIRELSON, 1e-9),
        Criterion::within(
            "photon_conservation_violations",
            r.photon_conservation_violations as f64,
            0.0,
            0.0,
        ),
    ];
    plain(r, criteria)
}

fn bleed_analytic() -> Result<Outcome, UsageError> {
    let r = bleeding_analytic()?;
    let criteria = vec![
        Criterion::within("bell_probability", r.bell_probability, 0.5, 1e-9),
        Criterion::within("conversion_probability", r.conversion_probability, 1.0 / 3.0, 1e-9),
        Criterion::within("success_probability", r.success_probability, 2.0 / 3.0, 1e-9),
        Criterion::within("total_probability", r.total_probability, 1.0, 1e-9),
    ];
    plain(r, criteria)
}

fn bleed_seq(cfg: &Config) -> Result<Outcome, UsageError> {
    let k = cfg.k.unwrap_or(if cfg.exact { 8 } else { 32 });
    let r = if cfg.exact {
        bleeding_sequential_exact(k)?
    } else {
        bleeding_sequential(k, cfg.trials.unwrap_or(10_000), cfg.seed)?
    };
    let (bell_tol, contamination_tol) = if r.exact {
        (1e-9, 1e-9)
    } else {
        (5.0 * r.bell_rate_sigma, 5.0 * r.contaminated_sigma)
    };
    let criteria = vec![
        Criterion::within("bell_rate", r.bell_rate, r.expected_bell_rate, bell_tol),
        Criterion::within(
            "contaminated_fraction",
            r.contaminated_fraction,
            r.expected_contaminated_fraction,
            contamination_tol,
        ),
    ];
    plain(r, criteria)
}

#[derive(Serialize)]
struct FauxRun {
    index: u64,
    steps: usize,
    outcomes: usize,
    tv_distance: f64,
}

fn faux_check(cfg: &Config) -> Result<Outcome, UsageError> {
    let (n, m) = (cfg.n.unwrap_or(2), cfg.m.unwrap_or(3));
    let trials = cfg.trials.unwrap_or(20);
    let mut runs = Vec::new();
    for t in 0..trials {
        let mut rng = trial_rng(cfg.seed, t);
        let steps = rng.random_range(1..=3);
        let protocol = random_protocol(&mut rng, m, steps);
        let r = faux_equivalence_check(n, m, &protocol)?;
        runs.push(FauxRun {
            index: t,
            steps,
            outcomes: r.outcomes,
            tv_distance: r.tv_distance,
        });
    }
    let max_tv = runs.iter().map(|r| r.tv_distance).fold(0.0, f64::max);
    let results = json!({ "N": n, "M": m, "protocols": runs, "max_tv_distance": max_tv });
    plain(results, vec![Criterion::within("max_tv_distance", max_tv, 0.0, 1e-9)])
}

fn load_plan(cfg: &Config) -> Result<AdaptivePlan, UsageError> {
    match &cfg.matrix {
        Some(path) => {
            let file: PlanJson = serde_json::from_str(&read(path)?)?;
            let unitaries = file
                .unitaries
                .iter()
                .map(matrix_from_rows)
                .collect::<wstate::Result<Vec<_>>>()?;
            if let Some(n) = cfg.n {
                if n != unitaries.len() {
                    return Err(UsageError(format!(
                        "--N {n} but the plan has {} unitaries",
                        unitaries.len()
                    )));
                }
            }
            Ok(AdaptivePlan::new(cfg.k.unwrap_or(file.k), unitaries)?)
        }
        None => {
            let n = cfg.n.unwrap_or(2);
            if n > SAMPLE_MAX_PHOTONS {
                return Err(UsageError(format!("sample supports N <= {SAMPLE_MAX_PHOTONS}")));
            }
            Ok(AdaptivePlan::random(
                &mut rng_from_seed(cfg.seed),
                cfg.k.unwrap_or(8),
                n,
            )?)
        }
    }
}

fn all_outcomes(n: usize) -> Vec<Vec<usize>> {
    (0..n.pow(n as u32))
        .map(|mut code| {
            let mut k = vec![0; n];
            for slot in k.iter_mut().rev() {
                *slot = code % n;
                code /= n;
            }
            k
        })
        .collect()
}

fn sample(cfg: &Config) -> Result<Outcome, UsageError> {
    let plan = load_plan(cfg)?;
    let (k, n) = (plan.k(), plan.n());
    if n > SAMPLE_MAX_PHOTONS {
        return Err(UsageError(format!("sample supports N <= {SAMPLE_MAX_PHOTONS}")));
    }
    let mut warnings = Vec::new();
    if k < n * n {
        warnings.push(format!("K={k} < N^2={}: collisions are not rare", n * n));
    }

    if cfg.crosscheck {
        let exhaustive = n <= 3 && k <= 8;
        let mut r = serde_json::to_value(distribution_crosscheck(&plan, exhaustive)?)?;
        let table: Vec<TableRow> = r["table"]
            .as_array()
            .into_iter()
            .flatten()
            .map(|row| {
                let outcome: Vec<usize> = serde_json::from_value(row["outcome"].clone()).unwrap_or_default();
                TableRow {
                    outcome,
                    probability_model: row["probability_model"].as_f64().unwrap_or(f64::NAN)
                        * r["normalization"].as_f64().unwrap_or(f64::NAN),
                    probability_simulated: row["probability_simulated"].as_f64().unwrap_or(f64::NAN),
                }
            })
            .collect();
        let criteria = vec![
            Criterion::within(
                "max_abs_diff",
                r["max_abs_diff"].as_f64().unwrap_or(f64::NAN),
                0.0,
                1e-9,
            ),
            Criterion::within(
                "normalization",
                r["normalization"].as_f64().unwrap_or(f64::NAN),
                injection_fraction(k, n),
                1e-9,
            ),
        ];
        r["warnings"] = json!(warnings);
        return Ok(Outcome {
            results: r,
            criteria,
            table: Some(table),
        });
    }

    let trials = cfg.trials.unwrap_or(10_000);
    if trials == 0 {
        return Err(UsageError("--trials must be positive".into()));
    }
    let mut counts: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
    let mut aborted = 0u64;
    // Trial streams start one past the plan's seed so they never share it.
    let trial_seed = cfg.seed.wrapping_add(1);
    for t in 0..trials {
        let r = run_adaptive_with(&plan, &mut trial_rng(trial_seed, t))?;
        if r.aborted {
            aborted += 1;
        } else {
            *counts.entry(r.detected_modes).or_default() += 1;
        }
    }
    let norm = injection_fraction(k, n);
    let total = trials as f64;
    let mut table = Vec::new();
    let mut max_z = 0.0f64;
    for outcome in all_outcomes(n) {
        let p = norm * outcome_probability(&plan, &outcome)?;
        let f = *counts.get(&outcome).unwrap_or(&0) as f64 / total;
        max_z = max_z.max(z_score(f, p, total));
        table.push(TableRow {
            outcome,
            probability_model: p,
            probability_simulated: f,
        });
    }
    let abort_fraction = aborted as f64 / total;
    let abort_z = z_score(abort_fraction, 1.0 - norm, total);
    let results = json!({
        "K": k,
        "N": n,
        "trials": trials,
        "seed": cfg.seed,
        "trial_seed": trial_seed,
        "aborted": aborted,
        "abort_fraction": abort_fraction,
        "expected_abort_fraction": 1.0 - norm,
        "max_z_score": max_z,
        "counts": counts.iter().map(|(k, c)| json!({"outcome": k, "count": c})).collect::<Vec<_>>(),
        "warnings": warnings,
    });
    let criteria = vec![
        Criterion::within("max_outcome_z_score", max_z, 0.0, 5.0),
        Criterion::within("abort_fraction_z_score", abort_z, 0.0, 5.0),
    ];
    Ok(Outcome {
        results,
        criteria,
        table: Some(table),
    })
}

fn z_score(f: f64, p: f64, trials: f64) -> f64 {
    let sigma = (p * (1.0 - p) / trials).sqrt();
    let diff = (f - p).abs();
    if sigma > 0.0 {
        diff / sigma
    } else if diff > 1e-12 {
        f64::INFINITY
    } else {
        0.0
    }
}

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn permanent(cfg: &Config) -> Result<Outcome, UsageError> {
    let a = parse_matrix(&read(require_matrix(cfg)?)?)?;
    let exact = permanent_exact(&a)?;
    let mut results = json!({
        "n": a.nrows(),
        "permanent": pair(exact),
        "permanent_abs": exact.norm(),
        "operator_norm": operator_norm(&a),
    });
    let mut criteria = Vec::new();
    if a.nrows() <= MAX_BRUTEFORCE {
        let brute = permanent_bruteforce(&a)?;
        results["bruteforce"] = json!(pair(brute));
        criteria.push(Criterion::within(
            "exact_vs_bruteforce",
            (exact - brute).norm(),
            0.0,
            1e-10 * brute.norm().max(1.0),
        ));
    }
    if operator_norm(&a) <= 1.0 {
        let estimate = gurvits_estimate(&a, GURVITS_EPSILON, GURVITS_DELTA, cfg.seed)?;
        results["gurvits"] = json!({
            "epsilon": GURVITS_EPSILON,
            "delta": GURVITS_DELTA,
            "samples": gurvits_sample_count(GURVITS_EPSILON, GURVITS_DELTA),
            "estimate": pair(estimate),
            "abs_error": (estimate - exact).norm(),
        });
    }
    plain(results, criteria)
}

fn povm_check(cfg: &Config) -> Result<Outcome, UsageError> {
    let file: PovmJson = serde_json::from_str(&read(require_matrix(cfg)?)?)?;
    let basis = TruncatedFockBasis::new(file.modes, file.max_photons)?;
    let elements = file
        .elements
        .iter()
        .map(matrix_from_rows)
        .collect::<wstate::Result<Vec<_>>>()?;
    let povm = Povm::new(basis, elements)?;
    let tol = WlikeTolerance::default();
    let checks = wlike_povm_check(&povm, tol);
    let failing = checks.iter().filter(|c| !c.pass).count();
    let results = json!({ "modes": file.modes, "max_photons": file.max_photons, "tolerance": tol, "elements": checks });
    plain(
        results,
        vec![Criterion::within("non_wlike_elements", failing as f64, 0.0, 0.0)],
    )
}

fn wstate_fidelity(cfg: &Config) -> Result<Outcome, UsageError> {
    let n = cfg.n.unwrap_or(2);
    let k = cfg.k.unwrap_or(n * n * n);
    let r = compare_w_copies_sigma_star(k, n)?;
    let criteria = vec![
        Criterion::within("projected_fidelity", r.projected_fidelity, 1.0, 1e-9),
        Criterion::within("collision_weight", r.collision_weight, r.collision_formula, 1e-9),
        Criterion::within("fidelity", r.fidelity, injection_fraction(k, n), 1e-9),
    ];
    plain(r, criteria)
}

//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails or exceeds its time budget.

use std::time::{Duration, Instant};

use polarization::cli::{execute, replay, Command, ResolvedConfig, DATA_FILE, MANIFEST_FILE};
use polarization::equilibrium::{
    attracting_strategies, find_singular_points, linspace, optimal_strategy, pip, selection_gradient, sweep,
    GradientMethod, SingularKind, SweepMode, SweepParameter,
};
use polarization::model::{expected_fitness_fixed, expected_fitness_social, outcome_probability};
use polarization::simulation::{run_ensemble, EnsembleStats};
use polarization::{BenefitCurve, Environment, InteractionParams, OutcomeTally, RiskModel, Scenario, Strategy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

/// Id, name, check and time budget in seconds.
type Criterion = (u32, &'static str, fn() -> Outcome, u64);

const FIXED_CYCLE: &str = include_str!("../configs/fixed_cycle.conf");
const SOCIAL_CYCLE: &str = include_str!("../configs/social_cycle.conf");

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn figure_scenario(model: RiskModel) -> Scenario {
    Scenario::new(
        model,
        BenefitCurve::SigmoidLinear {
            steepness: 10.0,
            slope: 0.02,
        },
        InteractionParams::default(),
    )
    .unwrap()
}

// Independent oracle: plain factorials, powers and nested loops.

fn oracle_choose(n: u32, k: u32) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * f64::from(n - i) / f64::from(i + 1);
    }
    c
}

fn oracle_binom(n: u32, k: u32, p: f64) -> f64 {
    oracle_choose(n, k) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

struct OracleParams {
    b_in: f64,
    b_out: f64,
    q_in: f64,
    q_out: f64,
    n: u32,
    h: f64,
    r: f64,
}

fn oracle_fitness(p: f64, q_eff: f64, theta: f64, o: &OracleParams) -> f64 {
    let n = o.n;
    let mut total = 0.0;
    for k in 0..=n {
        for l_in in 0..=k {
            for l_out in 0..=(n - k) {
                let prob = oracle_binom(n, k, p) * oracle_binom(k, l_in, o.q_in) * oracle_binom(n - k, l_out, q_eff);
                let payoff = f64::from(l_in) * o.b_in + f64::from(l_out) * o.b_out;
                let x = o.h * (payoff + f64::from(n) * theta) / f64::from(n);
                let benefit = (1.0 / (1.0 + (-x).exp())) * (1.0 + o.r * payoff);
                total += prob * benefit;
            }
        }
    }
    total
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst_norm: f64 = 0.0;
    let mut worst_fit: f64 = 0.0;
    let pick = |rng: &mut ChaCha8Rng| -> f64 {
        match rng.random_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random::<f64>(),
        }
    };
    for _ in 0..50 {
        let o = OracleParams {
            b_in: rng.random_range(0.05..2.0),
            b_out: rng.random_range(0.05..2.0),
            q_in: pick(&mut rng),
            q_out: pick(&mut rng),
            n: rng.random_range(1..=10),
            h: rng.random_range(0.5..20.0),
            r: rng.random_range(0.0..0.1),
        };
        let params = InteractionParams {
            b_in: o.b_in,
            b_out: o.b_out,
            q_in: o.q_in,
            q_out: o.q_out,
            n: o.n,
        };
        let curve = BenefitCurve::SigmoidLinear {
            steepness: o.h,
            slope: o.r,
        };
        let p = pick(&mut rng);
        let resident = pick(&mut rng);
        let theta = rng.random_range(-1.0..1.0);

        let sum: f64 = OutcomeTally::all(o.n)
            .map(|t| outcome_probability(t, Strategy::new(p).unwrap(), &params, o.q_out).unwrap())
            .sum();
        worst_norm = worst_norm.max((sum - 1.0).abs());

        let fixed =
            expected_fitness_fixed(Strategy::new(p).unwrap(), Environment::new(theta), &curve, &params).unwrap();
        let social = expected_fitness_social(
            Strategy::new(p).unwrap(),
            Strategy::new(resident).unwrap(),
            Environment::new(theta),
            &curve,
            &params,
        )
        .unwrap();
        worst_fit = worst_fit
            .max((fixed - oracle_fitness(p, o.q_out, theta, &o)).abs())
            .max((social - oracle_fitness(p, o.q_out * (1.0 - resident), theta, &o)).abs());
    }
    check(
        worst_norm <= 1e-12 && worst_fit <= 1e-12,
        format!("max |sum pi - 1| = {worst_norm:.2e}, max |fitness - oracle| = {worst_fit:.2e} (tol 1e-12, 50 sets)"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for model in [RiskModel::Fixed, RiskModel::Social] {
        let sc = figure_scenario(model);
        for _ in 0..100 {
            let p = Strategy::new(rng.random_range(0.01..0.99)).unwrap();
            let theta = Environment::new(rng.random_range(-1.0..1.0));
            let a = selection_gradient(p, theta, &sc, GradientMethod::Analytic)
                .unwrap()
                .value;
            let c = selection_gradient(p, theta, &sc, GradientMethod::CentralDifference { step: 1e-5 })
                .unwrap()
                .value;
            let scale = a.abs().max(c.abs()).max(1e-9);
            worst = worst.max((a - c).abs() / scale);
        }
    }
    check(
        worst <= 1e-6,
        format!("max relative difference {worst:.2e} over 200 points (tol 1e-6)"),
    )
}

fn criterion_3() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let fixed = figure_scenario(RiskModel::Fixed);
    for theta in [5.0, -5.0] {
        let g = selection_gradient(
            Strategy::new(0.5).unwrap(),
            Environment::new(theta),
            &fixed,
            GradientMethod::Analytic,
        )
        .unwrap()
        .value;
        let pass = (g - (-0.002)).abs() <= 1e-6;
        ok &= pass;
        parts.push(format!("fixed gradient at theta={theta}: {g:.6e} (target -0.002)"));
    }
    let social = figure_scenario(RiskModel::Social);
    let target = 1.0 - 0.5 / 0.6;
    for theta in [5.0, -5.0] {
        let pts = find_singular_points(Environment::new(theta), &social, 201).unwrap();
        match pts
            .iter()
            .filter(|pt| pt.kind == SingularKind::Interior)
            .min_by(|a, b| {
                (a.p_star.value() - target)
                    .abs()
                    .total_cmp(&(b.p_star.value() - target).abs())
            }) {
            Some(pt) => {
                let root_ok = (pt.p_star.value() - target).abs() <= 1e-6;
                let slope = pt.gradient_slope();
                let slope_ok = (slope - 0.012).abs() <= 1e-4;
                ok &= root_ok && slope_ok;
                parts.push(format!(
                    "social root at theta={theta}: {:.9} (target {target:.9}, {}), slope {slope:.6} (target 0.012, {})",
                    pt.p_star.value(),
                    if root_ok { "ok" } else { "off" },
                    if slope_ok { "ok" } else { "off" }
                ));
            }
            None => {
                ok = false;
                parts.push(format!("social model at theta={theta}: no interior root"));
            }
        }
    }
    check(ok, parts.join("; "))
}

fn criterion_4() -> Outcome {
    let sc = figure_scenario(RiskModel::Fixed);
    let thetas = linspace(-1.0, 1.0, 101);
    let q_outs = linspace(0.5, 1.0, 101);
    let res = sweep(SweepParameter::QOut, &q_outs, &thetas, &sc, SweepMode::Optimal, 201).unwrap();
    let mut interior = Vec::new();
    let (mut zeros, mut ones) = (0usize, 0usize);
    for (i, row) in res.p_star.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            let p = cell[0];
            if p.abs() <= 1e-6 {
                zeros += 1;
            } else if (p - 1.0).abs() <= 1e-6 {
                ones += 1;
            } else {
                interior.push((thetas[j], q_outs[i], p));
            }
        }
    }
    let at_09 = optimal_strategy(Environment::new(0.9), &sc, 201).unwrap().value();
    let row_06 = q_outs.iter().position(|&q| (q - 0.6).abs() < 1e-12).unwrap();
    let band_one = thetas
        .iter()
        .zip(&res.p_star[row_06])
        .any(|(&t, cell)| t.abs() < 0.9 && (cell[0] - 1.0).abs() <= 1e-6);
    let mut detail = format!(
        "p*=0 cells {zeros}, p*=1 cells {ones}, interior cells {}; p*(0.9, 0.6) = {at_09}; p*=1 in intermediate band at q_out=0.6: {band_one}",
        interior.len()
    );
    if let Some((t, q, p)) = interior.first() {
        detail.push_str(&format!("; first interior cell theta={t:.2}, q_out={q:.3}, p*={p:.4}"));
    }
    check(
        interior.is_empty() && zeros > 0 && ones > 0 && at_09 == 0.0 && band_one,
        detail,
    )
}

fn criterion_5() -> Outcome {
    let fixed = figure_scenario(RiskModel::Fixed);
    let social = figure_scenario(RiskModel::Social);
    let mut ok = true;
    let mut parts = Vec::new();
    for theta in [-1.0, 1.0] {
        let grid = pip(Environment::new(theta), &fixed, 201).unwrap();
        let u = grid.uninvadable(0);
        ok &= u;
        parts.push(format!("fixed theta={theta}: p=0 uninvadable {u}"));
    }
    let witness = linspace(-0.6, -0.2, 9).into_iter().find(|&theta| {
        let s = pip(Environment::new(theta), &social, 201).unwrap().stable_strategies();
        s.len() == 1 && s[0].p == 1.0
    });
    ok &= witness.is_some();
    parts.push(format!("social only-p=1 witness theta: {witness:?}"));
    let stable = pip(Environment::new(1.0), &social, 201).unwrap().stable_strategies();
    let low = stable.iter().any(|a| a.p_low <= 0.05);
    let high = stable.iter().any(|a| a.p_high == 1.0);
    ok &= low && high;
    let listed: Vec<f64> = stable.iter().map(|a| a.p).collect();
    parts.push(format!("social theta=1 stable {listed:?}"));
    check(ok, parts.join("; "))
}

fn desk_scale(text: &str) -> ResolvedConfig {
    let mut cfg = ResolvedConfig::parse(text).unwrap();
    for (k, v) in [
        ("N", "200"),
        ("ensemble", "100"),
        ("period", "100N"),
        ("total_events", "100N"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg.validate().unwrap();
    cfg
}

fn simulate(cfg: &ResolvedConfig) -> EnsembleStats {
    let sim = cfg.sim_config().unwrap();
    run_ensemble(
        &sim,
        &cfg.scenario().unwrap(),
        cfg.initial_condition().unwrap(),
        sim.seed,
    )
    .unwrap()
}

fn criterion_6() -> Outcome {
    let cfg = desk_scale(FIXED_CYCLE);
    let stats = simulate(&cfg);
    let total = cfg.sim_config().unwrap().total_events;
    let half = total / 2;
    let band_peak = stats
        .event_index
        .iter()
        .zip(&stats.theta)
        .zip(&stats.mean_p)
        .filter(|((&t, &th), _)| t <= half && th.abs() <= 0.5)
        .map(|(_, &m)| m)
        .fold(f64::NEG_INFINITY, f64::max);
    let extreme_max = stats
        .theta
        .iter()
        .zip(&stats.mean_p)
        .filter(|(&th, _)| th.abs() >= 0.95)
        .map(|(_, &m)| m)
        .fold(f64::NEG_INFINITY, f64::max);
    let at_minus_one = stats.theta.iter().any(|&th| th <= -0.95);
    let at_plus_one = stats.theta.iter().any(|&th| th >= 0.95);
    let mut asym: f64 = 0.0;
    for (c, &t) in stats.event_index.iter().enumerate() {
        if t >= half {
            continue;
        }
        let mirror = total - t;
        if let Some(d) = stats.event_index.iter().position(|&u| u == mirror) {
            asym = asym.max((stats.mean_p[c] - stats.mean_p[d]).abs());
        }
    }
    check(
        band_peak > 0.8 && extreme_max < 0.3 && at_minus_one && at_plus_one && asym < 0.15,
        format!(
            "peak mean_p in declining |theta|<=0.5 band {band_peak:.3} (need > 0.8); max mean_p at |theta|>=0.95 {extreme_max:.3} (need < 0.3); max decline/return difference {asym:.3} (need < 0.15)"
        ),
    )
}

fn criterion_7() -> Outcome {
    let cfg = desk_scale(SOCIAL_CYCLE);
    let stats = simulate(&cfg);
    let last = *stats.mean_p.last().unwrap();
    let peak = stats.mean_p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    check(
        last > 0.8,
        format!("final mean_p {last:.3} (need > 0.8); peak during the cycle {peak:.3}"),
    )
}

fn criterion_8() -> Outcome {
    let sc = Scenario::new(
        RiskModel::Social,
        BenefitCurve::SigmoidLinear {
            steepness: 100.0,
            slope: 0.01,
        },
        InteractionParams {
            q_out: 0.51,
            ..InteractionParams::default()
        },
    )
    .unwrap();
    let thetas = linspace(-1.0, 1.0, 2001);
    let hits: Vec<(f64, Vec<f64>)> = thetas
        .iter()
        .filter_map(|&theta| {
            let a = attracting_strategies(Environment::new(theta), &sc, 201).unwrap();
            (a.len() >= 3 && a.iter().any(|&p| p > 0.8 && p < 0.95)).then_some((theta, a))
        })
        .collect();
    match hits.first() {
        Some((theta, a)) => Ok(format!(
            "{} witnesses; first at theta={theta:.3} with attractors {a:?}",
            hits.len()
        )),
        None => Err("no theta in [-1, 1] (step 0.001) with three attractors".into()),
    }
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = desk_scale(FIXED_CYCLE);
    cfg.set("seed", "20240607").unwrap();
    let first = dir.path().join("first");
    execute(Command::Simulate, &cfg, &first, None).unwrap();
    let mut same = true;
    for (name, threads) in [("again", None), ("single", Some(1)), ("double", Some(2))] {
        let out = dir.path().join(name);
        replay(&first.join(MANIFEST_FILE), &out, threads).unwrap();
        same &= std::fs::read(first.join(DATA_FILE)).unwrap() == std::fs::read(out.join(DATA_FILE)).unwrap();
    }
    check(same, format!("three manifest replays byte-identical: {same}"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "normalization and oracle equivalence", criterion_1, 10),
        (2, "analytic vs central-difference gradient", criterion_2, 10),
        (3, "extreme-environment limits", criterion_3, 5),
        (4, "bimodal optimum map", criterion_4, 120),
        (5, "invasibility structure", criterion_5, 60),
        (6, "fixed-risk cycle symmetry", criterion_6, 300),
        (7, "social-risk irreversibility", criterion_7, 300),
        (8, "multi-stability witness", criterion_8, 120),
        (9, "manifest determinism", criterion_9, 60),
    ];
    let mut failures = 0;
    for (id, name, run, budget) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget);
        let (pass, detail) = match outcome {
            Ok(d) => (in_time, d),
            Err(d) => (false, d),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "{} criterion {id} ({name}): {detail} [{:.2}s of {budget}s]",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    }
    println!("{} of 9 criteria passed", 9 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}

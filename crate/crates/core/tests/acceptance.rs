//! Acceptance suite: one PASS/FAIL line per criterion, then a nonzero exit if
//! any criterion failed. Runs without the libtest harness so the report is
//! always printed.

use std::time::{Duration, Instant};

use mcd::analytic::{a_fixed_point, cm_g, critical_points, sw_drift, theta_r, theta_star};
use mcd::dynamics::{cm_step, glauber_step, sw_step, DynamicsKind};
use mcd::experiments::{
    bimodality_scan, cluster_tail_bound, cm_drift_map, escape_time, giant_concentration,
    one_step_exit, sm_tail, sw_drift_map, Start, CLUSTER_TAIL_K0,
};
use mcd::model::{EdgeConfig, ModelParams, SpinConfig};
use mcd::oracle::{
    bgj_coloring_check, build_kernel, conductance_bounds, detailed_balance_violation,
    es_coupling_check, iterated_coloring_check, mixing_time, spectral_gap, spin_index,
    stationarity_residual, total_variation,
};
use mcd::report::report_csv;
use mcd::rng::RngStream;

const SEED: u64 = 1;
const LN2: f64 = std::f64::consts::LN_2;

/// Collects the sub-checks of one criterion.
struct Criterion {
    id: u32,
    title: &'static str,
    budget: Duration,
    started: Instant,
    failures: Vec<String>,
}

impl Criterion {
    fn new(id: u32, title: &'static str, budget_secs: u64) -> Self {
        println!("criterion {id} ({title})");
        Self {
            id,
            title,
            budget: Duration::from_secs(budget_secs),
            started: Instant::now(),
            failures: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        println!("    [{}] {what}", if ok { "ok" } else { "FAIL" });
        if !ok {
            self.failures.push(what);
        }
    }

    fn finish(mut self) -> bool {
        let elapsed = self.started.elapsed();
        let in_budget = elapsed <= self.budget;
        self.check(
            in_budget,
            format!("wall clock {:.1}s within {}s", elapsed.as_secs_f64(), self.budget.as_secs()),
        );
        let pass = self.failures.is_empty();
        println!(
            "criterion {} {}: {}",
            self.id,
            self.title,
            if pass { "PASS" } else { "FAIL" }
        );
        pass
    }
}

fn criterion_1() -> bool {
    let mut c = Criterion::new(1, "analytic suite", 1);
    let cp = critical_points(3.0).unwrap();
    c.check((cp.lambda_c - 4.0 * LN2).abs() < 1e-12, format!("lambda_c(3) = {}", cp.lambda_c));
    c.check(
        (2.7450..=2.7465).contains(&cp.lambda_s),
        format!("lambda_s(3) = {}", cp.lambda_s),
    );
    c.check(cp.lambda_big_s == 3.0, format!("lambda_S(3) = {}", cp.lambda_big_s));
    for q in [3.0, 4.0, 10.0] {
        let lc = critical_points(q).unwrap().lambda_c;
        let tr = theta_r(lc, q).unwrap();
        let want = (q - 2.0) / (q - 1.0);
        c.check((tr - want).abs() < 1e-8, format!("Theta_r(lambda_c({q})) = {tr}, want {want}"));
    }
    for lambda in [2.75, 4.0 * LN2, 2.9] {
        let a = a_fixed_point(lambda, 3.0).unwrap();
        let f = sw_drift(a, lambda, 3.0);
        c.check((f - a).abs() < 1e-8, format!("lambda {lambda}: |F(a) - a| = {:e}", (f - a).abs()));
        let tr = theta_r(lambda, 3.0).unwrap();
        let ts = theta_star(lambda, 3.0).unwrap();
        let (gr, gs) = (cm_g(tr, lambda, 3.0), cm_g(ts, lambda, 3.0));
        c.check(gr.abs() < 1e-8, format!("lambda {lambda}: |g(Theta_r)| = {:e}", gr.abs()));
        c.check(gs.abs() < 1e-8, format!("lambda {lambda}: |g(Theta*)| = {:e}", gs.abs()));
        let h = 1e-6;
        let slope = (sw_drift(a + h, lambda, 3.0) - sw_drift(a - h, lambda, 3.0)) / (2.0 * h);
        c.check(slope.abs() < 1.0, format!("lambda {lambda}: |F'(a)| = {}", slope.abs()));
    }
    c.finish()
}

fn criterion_2() -> bool {
    let mut c = Criterion::new(2, "oracle suite", 300);
    let mut cases: Vec<(DynamicsKind, usize, f64)> = vec![
        (DynamicsKind::Sw, 3, 3.0),
        (DynamicsKind::Cm, 4, 2.0),
        (DynamicsKind::Cm, 4, 2.5),
    ];
    for n in [4, 6] {
        for q in [1.5, 2.0, 3.0] {
            cases.push((DynamicsKind::Glauber, n, q));
        }
    }
    for &(kind, n, q) in &cases {
        for lambda in [1.0, 2.0] {
            let k = build_kernel(kind, n, lambda, q).unwrap();
            let (s, d) = (stationarity_residual(&k), detailed_balance_violation(&k));
            c.check(
                s < 1e-10 && d < 1e-12,
                format!("{kind} n={n} q={q} lambda={lambda}: stationarity {s:.1e}, detailed balance {d:.1e}"),
            );
        }
    }
    for n in 2..=5 {
        // p = lambda/n must stay below 1
        for lambda in [1.0, 2.0].into_iter().filter(|&l| l < n as f64) {
            let d = es_coupling_check(n, lambda, 3).unwrap();
            c.check(d.max() < 1e-10, format!("coupling n={n} lambda={lambda}: {:.1e}", d.max()));
        }
    }
    for lambda in [1.0, 2.0] {
        let d = bgj_coloring_check(4, lambda, 3.0, 1.0 / 3.0).unwrap();
        c.check(d.max() < 1e-10, format!("red coloring n=4 lambda={lambda}: {:.1e}", d.max()));
        let d = iterated_coloring_check(3, lambda, 2.5).unwrap();
        c.check(d.max() < 1e-10, format!("iterated coloring n=3 lambda={lambda}: {:.1e}", d.max()));
    }
    for q in [1.5, 2.0, 3.0] {
        for lambda in [1.0, 2.0] {
            let k = build_kernel(DynamicsKind::Glauber, 4, lambda, q).unwrap();
            let gap = spectral_gap(&k).unwrap();
            // exhaustive over all 2^63 bipartitions: a complete search proves
            // Φ ≥ min(Φ, gap/2), and its best cut bounds Φ from above
            let b = conductance_bounds(&k, gap / 2.0, 50_000_000).unwrap();
            let upper = b.best.ratio;
            c.check(
                b.complete && gap <= 2.0 * b.lower * (1.0 + 1e-12) && upper * upper / 2.0 <= gap,
                format!(
                    "glauber n=4 q={q} lambda={lambda}: gap {gap:.6}, {:.6} <= Phi <= {upper:.6} ({} nodes)",
                    b.lower, b.nodes
                ),
            );
            let t = mixing_time(&k, 1_000_000).unwrap();
            let lo = 1.0 / gap - 1.0;
            let hi = (2.0 * std::f64::consts::E / k.measure().min_prob()).ln() / gap;
            c.check(
                t.is_some_and(|t| lo <= t as f64 && t as f64 <= hi),
                format!("glauber n=4 q={q} lambda={lambda}: {lo:.3} <= t_mix = {t:?} <= {hi:.3}"),
            );
        }
    }
    c.finish()
}

const SAMPLES: u64 = 100_000;

fn empirical(len: usize, mut draw: impl FnMut(&mut RngStream) -> usize, name: &str) -> Vec<f64> {
    let mut rng = RngStream::named(SEED, 0, name);
    let mut counts = vec![0.0; len];
    for _ in 0..SAMPLES {
        counts[draw(&mut rng)] += 1.0;
    }
    counts.iter().map(|c| c / SAMPLES as f64).collect()
}

fn criterion_3() -> bool {
    let mut c = Criterion::new(3, "dynamics vs oracle", 600);

    let k = build_kernel(DynamicsKind::Sw, 3, 1.5, 3.0).unwrap();
    let params = ModelParams::new(3, 3.0, 1.5).unwrap();
    let start = SpinConfig::monochromatic(3, 3);
    let row = k.dense_row(spin_index(&start));
    let emp = empirical(k.len(), |r| spin_index(&sw_step(&start, &params, r).unwrap()), "sw");
    let tv = total_variation(&emp, &row);
    c.check(tv < 1e-2, format!("sw n=3 q=3 lambda=1.5 from monochromatic: TV {tv:.4}"));

    let k = build_kernel(DynamicsKind::Cm, 4, 2.0, 2.5).unwrap();
    let params = ModelParams::new(4, 2.5, 2.0).unwrap();
    let start = EdgeConfig::complete(4);
    let row = k.dense_row(start.to_mask() as usize);
    let emp = empirical(k.len(), |r| cm_step(&start, &params, r).to_mask() as usize, "cm");
    let tv = total_variation(&emp, &row);
    c.check(tv < 1e-2, format!("cm n=4 q=2.5 lambda=2 from complete graph: TV {tv:.4}"));

    let k = build_kernel(DynamicsKind::Glauber, 4, 1.0, 2.0).unwrap();
    let params = ModelParams::new(4, 2.0, 1.0).unwrap();
    let start = EdgeConfig::from_pairs(4, [(0, 1), (1, 2)]).unwrap();
    let row = k.dense_row(start.to_mask() as usize);
    let emp = empirical(k.len(), |r| glauber_step(&start, &params, r).to_mask() as usize, "glauber");
    let tv = total_variation(&emp, &row);
    c.check(tv < 1e-2, format!("glauber n=4 q=2 lambda=1 from a path: TV {tv:.4}"));
    c.finish()
}

fn criterion_4() -> bool {
    let mut c = Criterion::new(4, "drift maps", 1200);
    let (q, lambda, n) = (3.0, 4.0 * LN2, 10_000);
    let r = sw_drift_map(n, lambda, q, &[1.0 / 3.0, 0.5, 2.0 / 3.0], 200, SEED).unwrap();
    for row in &r.rows {
        let (m, target) = (row.estimate.unwrap(), row.details["target"]);
        c.check(
            (m - target).abs() < 0.01,
            format!("sw z={:.4}: mean {m:.5} vs F {target:.5}", row.param),
        );
    }
    let (ts, tr) = (theta_star(lambda, q).unwrap(), theta_r(lambda, q).unwrap());
    let r = cm_drift_map(n, lambda, q, &[ts, (ts + tr) / 2.0, tr], 200, SEED).unwrap();
    for row in &r.rows {
        let (m, target) = (row.estimate.unwrap(), row.details["target"]);
        c.check(
            (m - target).abs() < 0.02,
            format!("cm theta={:.4}: mean {m:.5} vs f {target:.5}", row.param),
        );
    }
    let mid = &r.rows[1];
    c.check(
        mid.details["drift_z"] >= 2.0,
        format!(
            "cm midpoint drift {:.5} = {:.1} standard errors",
            mid.details["drift"], mid.details["drift_z"]
        ),
    );
    c.finish()
}

fn criterion_5() -> bool {
    let mut c = Criterion::new(5, "slowdown proxy", 1800);
    let (q, lc, rho) = (3.0, 4.0 * LN2, 0.08);
    let r = one_step_exit(&[200, 400, 800], lc, q, rho, Start::Balanced, 10_000, SEED).unwrap();
    for row in &r.rows {
        println!(
            "      n={}: exit {:.4} [{:.4}, {:.4}]",
            row.n,
            row.estimate.unwrap(),
            row.ci_lo.unwrap(),
            row.ci_hi.unwrap()
        );
    }
    let separated = r.rows.windows(2).all(|w| w[1].ci_hi.unwrap() < w[0].ci_lo.unwrap());
    c.check(separated, "exit probability strictly decreasing with disjoint 95% intervals");
    let slope = r.summary["log_slope"];
    c.check(slope < 0.0, format!("slope of log exit vs n = {slope:.3e}"));

    let r = one_step_exit(&[400], 3.2, q, rho, Start::Balanced, 10_000, SEED).unwrap();
    let e = r.rows[0].estimate.unwrap();
    c.check(e > 0.9, format!("contrast lambda=3.2 n=400: exit {e:.4} > 0.9"));

    let r = escape_time(&[40, 60, 80], lc, q, rho, Start::Balanced, 1_000_000, 400, SEED).unwrap();
    let medians: Vec<Option<f64>> = r.row_estimates();
    let increasing = medians.iter().all(Option::is_some)
        && medians.windows(2).all(|w| w[0].unwrap() < w[1].unwrap());
    c.check(increasing, format!("median escape times at n=40,60,80: {medians:?}"));
    c.finish()
}

fn criterion_6() -> bool {
    let mut c = Criterion::new(6, "equilibrium facts", 900);
    let ks = [20, 40, 60];
    let r = cluster_tail_bound(10_000, 0.5, &ks, 100_000, SEED).unwrap();
    for row in &r.rows {
        let (hi, bound) = (row.ci_hi.unwrap(), row.details["bound"]);
        c.check(
            row.param < CLUSTER_TAIL_K0 as f64 || hi < bound,
            format!("P(|C_0| >= {}) upper CI {hi:.2e} < bound {bound:.2e}", row.param),
        );
    }
    let r = sm_tail(&[100, 200, 400], 0.5, 20, 0.2, 100_000, SEED).unwrap();
    let hits: Vec<f64> = r.rows.iter().map(|row| row.details["hits"]).collect();
    let slope = r.summary["log_slope"];
    c.check(slope < 0.0, format!("S_M tail hits {hits:?}, slope of log estimate {slope:.3e}"));
    let r = giant_concentration(100_000, 2.0, 0.01, 100, SEED).unwrap();
    let hits = r.rows[0].details["hits"];
    c.check(hits <= 1.0, format!("giant outside 0.01 of theta_2 in {hits} of 100 replicas"));
    c.finish()
}

fn criterion_7() -> bool {
    let mut c = Criterion::new(7, "metastability bimodality", 1800);
    let r = bimodality_scan(500, 4.0 * LN2, 3.0, 200, 1000, SEED).unwrap();
    let (bal, ord) = (&r.rows[0], &r.rows[1]);
    let (mb, mo) = (bal.estimate.unwrap(), ord.estimate.unwrap());
    c.check((mb - 1.0 / 3.0).abs() < 0.05, format!("balanced-start mean {mb:.4} near 1/3"));
    c.check((mo - 2.0 / 3.0).abs() < 0.05, format!("ordered-start mean {mo:.4} near 2/3"));
    for (label, row) in [("balanced", bal), ("ordered", ord)] {
        let v = row.details["valley_mass"];
        c.check(v < 0.01, format!("{label}-start valley mass {v:.4} < 0.01"));
    }
    // not part of the criterion: the same scan at a size where the barrier
    // between the phases is several nats
    let r = bimodality_scan(20_000, 4.0 * LN2, 3.0, 200, 1000, SEED).unwrap();
    for row in &r.rows {
        println!(
            "    [info] n=20000 start {:.4}: mean {:.4}, valley mass {:.4}",
            row.param,
            row.estimate.unwrap(),
            row.details["valley_mass"]
        );
    }
    c.finish()
}

fn criterion_8() -> bool {
    let mut c = Criterion::new(8, "determinism", 600);
    let runs: Vec<(&str, Box<dyn Fn() -> String + Sync>)> = vec![
        ("one_step_exit", Box::new(|| {
            report_csv(&one_step_exit(&[60, 90], 2.7, 3.0, 0.08, Start::Balanced, 300, SEED).unwrap())
        })),
        ("escape_time", Box::new(|| {
            report_csv(&escape_time(&[30, 40], 2.7, 3.0, 0.2, Start::Balanced, 500, 50, SEED).unwrap())
        })),
        ("sw_drift_map", Box::new(|| {
            report_csv(&sw_drift_map(500, 2.77, 3.0, &[0.4, 0.6], 50, SEED).unwrap())
        })),
        ("cm_drift_map", Box::new(|| {
            report_csv(&cm_drift_map(500, 2.77, 2.5, &[0.3, 0.5], 50, SEED).unwrap())
        })),
        ("sm_tail", Box::new(|| report_csv(&sm_tail(&[100, 200], 0.5, 5, 0.05, 300, SEED).unwrap()))),
        ("cluster_tail_bound", Box::new(|| {
            report_csv(&cluster_tail_bound(2000, 0.5, &[5, 10, 20], 2000, SEED).unwrap())
        })),
        ("giant_concentration", Box::new(|| {
            report_csv(&giant_concentration(5000, 2.0, 0.01, 40, SEED).unwrap())
        })),
        ("bimodality_scan", Box::new(|| {
            report_csv(&bimodality_scan(200, 2.77, 3.0, 20, 100, SEED).unwrap())
        })),
    ];
    for (name, run) in &runs {
        let outputs: Vec<String> = [1, 2, 4]
            .iter()
            .map(|&t| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()
                    .unwrap()
                    .install(|| run())
            })
            .collect();
        let same = outputs.windows(2).all(|w| w[0] == w[1]) && outputs[0] == run();
        c.check(same, format!("{name}: identical CSV bytes with 1, 2 and 4 threads and on rerun"));
    }
    c.finish()
}

fn main() {
    // `cargo test -- --list` and filters from the libtest CLI are not
    // meaningful here; run everything.
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let results = [
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(),
        criterion_7(),
        criterion_8(),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed} of {} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}

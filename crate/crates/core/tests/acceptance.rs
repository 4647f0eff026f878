//! Acceptance gate: one PASS/FAIL line per criterion.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ce_quant::coarse::{
    apply_mapping, best_macro, logic_aggregate, CoarseMapping, LogicAggregation,
};
use ce_quant::cqe::{closed_determinism, cqe_residual, uncertainty};
use ce_quant::dataset::generate_dataset;
use ce_quant::io::{read_mapping, read_tpm};
use ce_quant::solvers::{
    enumerate_deg_vectors, solve_many, Method, Search, SolverOptions, GRID_POINTS,
};
use ce_quant::synth::{generate, states_to_vam, vam_to_tpm, DegVector};
use ce_quant::thresholds::{
    absolute_threshold, degeneracy_boundary, equivalent_threshold, micro_ei,
};
use ce_quant::tpm::{degeneracy, determinism, effective_information};
use ce_quant::Tpm;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn fixture(name: &str) -> Tpm {
    read_tpm(&fixture_path(name)).expect("fixture loads")
}

struct Gate {
    failed: usize,
}

impl Gate {
    fn report(&mut self, name: &str, ok: bool, detail: String) {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed += 1;
        }
    }
}

fn within(v: f64, target: f64, tol: f64) -> bool {
    (v - target).abs() <= tol
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn fig2(g: &mut Gate) {
    let ((micro, macro_), took) = timed(|| {
        let micro = fixture("fig2_micro.json");
        let agg: LogicAggregation = "M=AND(m0,m1)".parse().unwrap();
        let (_, m) = logic_aggregate(&micro, &agg).unwrap();
        (effective_information(&micro), effective_information(&m))
    });
    let ok = within(micro, 0.8113, 0.005)
        && macro_ == 1.0
        && macro_ - micro > 0.0
        && took < Duration::from_secs(1);
    g.report(
        "figure 2 coarse-graining",
        ok,
        format!(
            "micro EI {micro:.6}, AND macro EI {macro_}, dEI {:.6}, {took:?}",
            macro_ - micro
        ),
    );
}

fn fig4(g: &mut Gate) {
    let l = fixture("fig4_left.json").metrics();
    let r = fixture("fig4_right.json").metrics();
    let checks = [
        ("left deg", l.degeneracy, 0.594, 5e-4),
        ("left EI", l.ei, 0.81, 0.005),
        ("right det", r.determinism, 0.25, 0.005),
        ("right deg", r.degeneracy, 0.05, 0.005),
        ("right EI", r.ei, 0.38, 0.02),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, v, target, tol) in checks {
        let hit = within(v, target, tol);
        ok &= hit;
        parts.push(format!(
            "{name} {v:.6} (want {target} +/- {tol}{})",
            if hit { "" } else { ", MISS" }
        ));
    }
    g.report("figure 4 uncertainty vs asymmetry", ok, parts.join("; "));
}

fn eq14(g: &mut Gate) {
    let (worst, took) = timed(|| {
        let mut worst = 0.0f64;
        for n in 1..=8 {
            for k in 0..=100 {
                let x = 1.0 - 0.005 * f64::from(k);
                let t = &generate(n, x, DegVector::SYMMETRIC).unwrap()[0];
                worst = worst.max((closed_determinism(x).unwrap() - determinism(t)).abs());
            }
        }
        worst
    });
    g.report(
        "closed-form determinism equivalence",
        worst < 1e-9 && took < Duration::from_secs(30),
        format!("max |closed - matrix| = {worst:.3e} over n=1..8 x 101 x, {took:?}"),
    );
}

fn table1(g: &mut Gate) {
    let counts: Vec<usize> = (1..=7).map(|n| enumerate_deg_vectors(n).len()).collect();
    g.report(
        "deg vector counts",
        counts == [0, 5, 17, 65, 257, 1025, 4097],
        format!("n=1..7 -> {counts:?}"),
    );
}

fn fig8(g: &mut Gate) {
    let t = vam_to_tpm(&states_to_vam(&fixture("fig8.json"), 0.8).unwrap());
    let want = [0.16, 0.64, 0.04, 0.16];
    let err = t
        .row(0)
        .iter()
        .zip(want)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    g.report(
        "figure 8 VAM to TPM",
        err <= 1e-12,
        format!("row 00 = {:?}, max err {err:.1e}", t.row(0)),
    );
}

fn thresholds(g: &mut Gate) {
    let db = degeneracy_boundary(3, 2).unwrap();
    let at = absolute_threshold(3, 2, 0.0).unwrap();
    let at_db = absolute_threshold(3, 2, 1.0 / 3.0).unwrap();
    let ok = within(db, 1.0 / 3.0, 1e-9) && within(at, 0.0915, 5e-4) && at_db == 0.0;
    g.report(
        "figure 15/16 thresholds",
        ok,
        format!("DB(3,2) = {db:.9}, AT(3,2,0) = {at:.6} bits, AT(3,2,1/3) = {at_db}"),
    );
}

fn fig14(g: &mut Gate) {
    let mut ok = true;
    let mut parts = Vec::new();
    for u in [0.12, 0.25, 0.42] {
        let ei = micro_ei(3, u, 0.0).unwrap();
        let et = equivalent_threshold(ei.min(2.0), 2).unwrap();
        ok &= et < u;
        parts.push(format!("u={u}: EI {ei:.4}, ET {et:.4}"));
    }
    g.report("figure 14 ET below micro uncertainty", ok, parts.join("; "));
}

fn solver_equivalence(g: &mut Gate) {
    let (outcome, took) = timed(|| {
        let mut agree = 0usize;
        let mut found = 0usize;
        let mut mismatches = Vec::new();
        for n in 1..=5u32 {
            let targets: Vec<f64> = (0..12)
                .map(|k| f64::from(n) * f64::from(k) / 11.0)
                .collect();
            let run = |method| {
                let opts = SolverOptions {
                    method,
                    ..SolverOptions::default()
                };
                solve_many(n, &targets, &opts).unwrap()
            };
            let a = run(Method::Tpm);
            let b = run(Method::Cqe);
            for (t, (x, y)) in targets.iter().zip(a.iter().zip(&b)) {
                let same = match (x, y) {
                    (Search::Found(p), Search::Found(q)) => {
                        found += 1;
                        p.x == q.x && p.dv == q.dv && p.cd == q.cd
                    }
                    (Search::NotFound { .. }, Search::NotFound { .. }) => true,
                    _ => false,
                };
                if same {
                    agree += 1;
                } else {
                    mismatches.push(format!("n={n} EI={t:.4}"));
                }
            }
        }
        (agree, found, mismatches)
    });
    let (agree, found, mismatches) = outcome;
    g.report(
        "tpm_solver vs cqe_solver",
        mismatches.is_empty() && took < Duration::from_secs(300),
        format!(
            "{agree}/60 targets agree ({found} found by both), {took:?}{}",
            if mismatches.is_empty() {
                String::new()
            } else {
                format!(", differ at {mismatches:?}")
            }
        ),
    );
}

fn fig13(g: &mut Gate) {
    let micro = fixture("fig13_micro.json");
    let cm: CoarseMapping = read_mapping(&fixture_path("fig13_mapping.json")).unwrap();
    let micro_ei = effective_information(&micro);
    let four = effective_information(&apply_mapping(&micro, &cm).unwrap());
    let two = best_macro(&micro, 1, false).unwrap();
    let ok = within(four, 0.69, 0.01) && within(micro_ei, 0.55, 0.01) && two.macro_tpm_ei > four;
    g.report(
        "figure 13 coarse-graining",
        ok,
        format!(
            "micro EI {micro_ei:.4}, 4-state EI {four:.4}, best 2-state EI {:.4} via {:?}",
            two.macro_tpm_ei,
            two.mapping.map()
        ),
    );
}

/// Every 2-labelling of the micro states, straight from bitmasks.
fn brute_best_two_state(micro: &Tpm) -> f64 {
    let k = micro.states();
    let mut best = f64::NEG_INFINITY;
    for mask in 1..(1u32 << k) - 1 {
        let map: Vec<usize> = (0..k).map(|s| ((mask >> s) & 1) as usize).collect();
        let cm = CoarseMapping::new(k, 2, map).unwrap();
        best = best.max(effective_information(&apply_mapping(micro, &cm).unwrap()));
    }
    best
}

fn fig17(g: &mut Gate) {
    let micro = fixture("fig17_micro.json");
    let micro_ei = effective_information(&micro);
    let strategies = ["fig17_strategy1.json", "fig17_strategy2.json"].map(|f| {
        let cm = read_mapping(&fixture_path(f)).unwrap();
        effective_information(&apply_mapping(&micro, &cm).unwrap()) - micro_ei
    });
    let search = best_macro(&micro, 1, false).unwrap();
    let oracle = brute_best_two_state(&micro);
    let oracle_emerges = oracle - micro_ei > 0.0;
    let ok = strategies.iter().all(|&d| d <= 0.0)
        && within(search.macro_tpm_ei, oracle, 1e-12)
        && search.emerges() == oracle_emerges;
    g.report(
        "figure 17 strategies",
        ok,
        format!(
            "dEI strategy 1 {:.4}, strategy 2 {:.4}; best 2-state EI {:.4} (oracle {oracle:.4}) vs micro {micro_ei:.4}, CE {}",
            strategies[0],
            strategies[1],
            search.macro_tpm_ei,
            search.emerges()
        ),
    );
}

fn random_tpm() -> impl Strategy<Value = Tpm> {
    (1u32..=4).prop_flat_map(|n| {
        let k = 1usize << n;
        prop::collection::vec(prop_oneof![1 => Just(0.0), 3 => 0.0f64..1.0], k * k).prop_map(
            move |mut w| {
                for row in w.chunks_mut(k) {
                    if row.iter().all(|&v| v == 0.0) {
                        row[0] = 1.0;
                    }
                    let s: f64 = row.iter().sum();
                    row.iter_mut().for_each(|v| *v /= s);
                }
                Tpm::from_flat(n, w).unwrap()
            },
        )
    })
}

fn properties(g: &mut Gate) {
    const CASES: u32 = 1000;
    let runner = || {
        TestRunner::new(Config {
            failure_persistence: None,
            ..Config::with_cases(CASES)
        })
    };
    let mut results = Vec::new();

    let gen = (2u32..=5, 0.5f64..=1.0).prop_flat_map(|(n, x)| {
        (
            Just(n),
            Just(x),
            prop::sample::select(enumerate_deg_vectors(n)),
        )
    });
    results.push((
        "row-stochastic",
        runner()
            .run(&gen, |(n, x, dv)| {
                for t in generate(n, x, dv).unwrap() {
                    prop_assert!(t.max_row_deviation() <= 1e-12);
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    ));
    results.push((
        "det/deg in [0,1]",
        runner()
            .run(&random_tpm(), |t| {
                prop_assert!((0.0..=1.0).contains(&determinism(&t)));
                prop_assert!((0.0..=1.0).contains(&degeneracy(&t)));
                Ok(())
            })
            .map_err(|e| e.to_string()),
    ));
    let det_tpm =
        (1u32..=5).prop_flat_map(|n| prop::collection::vec(0..(1usize << n), 1usize << n));
    results.push((
        "x=1 round trip",
        runner()
            .run(&det_tpm, |targets| {
                let t = Tpm::from_targets(&targets).unwrap();
                prop_assert_eq!(vam_to_tpm(&states_to_vam(&t, 1.0).unwrap()), t);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    ));
    results.push((
        "relabeling",
        runner()
            .run(&(random_tpm(), any::<u64>()), |(t, seed)| {
                let k = t.states();
                let mut sigma: Vec<usize> = (0..k).collect();
                let mut s = seed;
                for i in (1..k).rev() {
                    s = s
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    sigma.swap(i, (s >> 33) as usize % (i + 1));
                }
                let mut data = vec![0.0; k * k];
                for i in 0..k {
                    for j in 0..k {
                        data[sigma[i] * k + sigma[j]] = t.get(i, j);
                    }
                }
                let p = Tpm::from_flat(t.n(), data).unwrap();
                prop_assert!((effective_information(&p) - effective_information(&t)).abs() < 1e-12);
                prop_assert!((determinism(&p) - determinism(&t)).abs() < 1e-12);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    ));
    results.push((
        "CQE residual on dataset",
        runner()
            .run(&(2u32..=5, any::<u64>()), |(n, seed)| {
                for r in generate_dataset(n, 2, seed).unwrap() {
                    prop_assert!(cqe_residual(r.x, r.degeneracy, r.ei, n).unwrap().abs() < 1e-9);
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    ));

    let mut ok = true;
    let parts: Vec<String> = results
        .into_iter()
        .map(|(name, r)| match r {
            Ok(()) => format!("{name} ok"),
            Err(e) => {
                ok = false;
                format!("{name} FAILED ({e})")
            }
        })
        .collect();
    g.report(
        "property suite",
        ok,
        format!("{CASES} cases each: {}", parts.join(", ")),
    );
}

fn scale(g: &mut Gate) {
    let (search, took) = timed(|| {
        let opts = SolverOptions {
            tolerance: 1e-15,
            method: Method::Cqe,
            deg_vectors: Some(vec![DegVector::SYMMETRIC]),
        };
        // off-grid target: the search has to visit every x
        solve_many(11, &[std::f64::consts::PI], &opts)
            .unwrap()
            .pop()
            .unwrap()
    });
    let (swept, detail) = match &search {
        Search::NotFound {
            iterations,
            closest,
        } => (
            *iterations == GRID_POINTS as u64,
            format!(
                "{iterations} grid points, closest x {:.4} (u = {:.4} bits)",
                closest.as_ref().map_or(f64::NAN, |c| c.x),
                closest
                    .as_ref()
                    .map_or(f64::NAN, |c| uncertainty(c.x).unwrap())
            ),
        ),
        Search::Found(r) => (false, format!("unexpected hit at x {}", r.x)),
    };
    g.report(
        "n=11 symmetric sweep",
        swept && took < Duration::from_secs(60),
        format!("{detail}, {took:?}"),
    );
}

fn main() -> ExitCode {
    let mut g = Gate { failed: 0 };
    fig2(&mut g);
    fig4(&mut g);
    eq14(&mut g);
    table1(&mut g);
    fig8(&mut g);
    thresholds(&mut g);
    fig14(&mut g);
    solver_equivalence(&mut g);
    fig13(&mut g);
    fig17(&mut g);
    properties(&mut g);
    scale(&mut g);
    println!("{} of 12 criteria failed", g.failed);
    if g.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

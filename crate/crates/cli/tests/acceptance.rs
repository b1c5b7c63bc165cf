//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use layerrd::pipeline::{random_distortion, random_distribution, random_map, random_permutation};
use layerrd::*;
use layerrd_cli::sweep::{plan_cases, run_case, KindChoice, SweepParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const SHAPE_TOL: f64 = 1e-6;

/// A solved curve kept for the shape check, with the entropy of its source.
struct Solved {
    name: String,
    curve: RdCurve,
    entropy: f64,
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }
}

fn within_time(elapsed: Duration, limit: Option<Duration>) -> bool {
    limit.is_none_or(|l| elapsed <= l)
}

fn criterion_1(curves: &mut Vec<Solved>) -> Outcome {
    let src = FiniteDistribution::uniform(2).unwrap();
    let d = DistortionMatrix::hamming(2).unwrap();
    let curve = solve_rd_curve(&src, &d, &SolverConfig::default()).unwrap();
    let mut worst: f64 = 0.0;
    for at in [0.05, 0.1, 0.25, 0.4] {
        let expected = 1.0 - binary_entropy(at);
        worst = worst.max((rate_at(&curve, at).unwrap() - expected).abs());
    }
    let r01 = rate_at(&curve, 0.1).unwrap();
    curves.push(Solved {
        name: "binary uniform".into(),
        curve,
        entropy: 1.0,
    });
    Outcome {
        pass: worst <= 1e-3 && (r01 - 0.5310).abs() <= 1e-3,
        detail: format!("max |R - (1 - Hb(D))| = {worst:.3e} bits, R(0.1) = {r01:.6}"),
    }
}

fn criterion_2(curves: &mut Vec<Solved>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut instances = Vec::new();
    let mut skipped = 0;
    while instances.len() < 10 {
        let src = random_distribution(&mut rng, 2).unwrap();
        let d = random_distortion(&mut rng, 2, DistortionKind::RandomNonnegative).unwrap();
        let (lo, hi) = distortion_range(&src, &d).unwrap();
        if hi - lo > 1e-3 {
            instances.push((src, d, lo, hi));
        } else {
            skipped += 1;
        }
    }
    let rows: Vec<(f64, Solved)> = instances
        .par_iter()
        .enumerate()
        .map(|(i, (src, d, lo, hi))| {
            let curve = solve_rd_curve(src, d, &SolverConfig::default()).unwrap();
            let mut worst: f64 = 0.0;
            for k in 1..=5 {
                let at = lo + (hi - lo) * k as f64 / 6.0;
                let solved = rate_at(&curve, at).unwrap();
                let brute = brute_force_rd(src, d, at, 1000).unwrap();
                worst = worst.max((solved - brute).abs());
            }
            let entropy = entropy(src);
            (
                worst,
                Solved {
                    name: format!("2x2 instance {i}"),
                    curve,
                    entropy,
                },
            )
        })
        .collect();
    let worst = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    curves.extend(rows.into_iter().map(|r| r.1));
    Outcome {
        pass: worst <= 2e-3,
        detail: format!("10 instances x 5 levels, max |solver - brute| = {worst:.3e} bits ({skipped} degenerate draws skipped)"),
    }
}

fn sweep_params(theorem: TheoremId, cases: usize) -> SweepParams {
    SweepParams {
        theorem,
        cases,
        max_sizes: PipelineSizes::new(6, 6, 5, 3),
        grid: 20,
        tol: 1e-4,
        seed: 0,
        kinds: KindChoice::Mixed,
        solver: SolverConfig::default(),
    }
}

/// Runs a planned sweep, keeping the curves but dropping their channels.
fn run_planned(
    params: &SweepParams,
) -> Vec<(layerrd_cli::sweep::CaseResult, [Solved; 2], Option<f64>)> {
    let plans = plan_cases(params).unwrap();
    plans
        .par_iter()
        .map(|plan| {
            let o = run_case(plan, params).unwrap();
            let h1 = entropy(&o.pipeline.y1_distribution());
            let (dominated_entropy, dominated_name) = match params.theorem {
                TheoremId::Thm1 => (entropy(&o.pipeline.y2_distribution()), "y2"),
                TheoremId::Thm2 => (h1, "cross"),
            };
            let delta = match params.theorem {
                TheoremId::Thm1 => None,
                TheoremId::Thm2 => {
                    let d_y2 = match plan.feature_distortion {
                        Some(layerrd_cli::sweep::FeatureDistortion::Random) => {
                            let sizes: PipelineSizes = plan.sizes.parse().unwrap();
                            let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
                            layerrd::pipeline::random_pipeline_with(
                                &mut rng,
                                sizes,
                                plan.distortion,
                            )
                            .unwrap();
                            random_distortion(&mut rng, sizes.y2, DistortionKind::RandomNonnegative)
                                .unwrap()
                        }
                        _ => o.pipeline.distortion_on_y2(),
                    };
                    let d_y1 = pullback_distortion(&d_y2, o.pipeline.g2()).unwrap();
                    Some(
                        check_distortion_magnitude(&d_y1, &d_y2, o.pipeline.g2())
                            .unwrap_or(f64::NAN),
                    )
                }
            };
            let curves = [
                Solved {
                    name: format!("case {} y1", plan.case),
                    curve: o.verification.dominating.curve,
                    entropy: h1,
                },
                Solved {
                    name: format!("case {} {dominated_name}", plan.case),
                    curve: o.verification.dominated.curve,
                    entropy: dominated_entropy,
                },
            ];
            (o.result, curves, delta)
        })
        .collect()
}

fn criterion_3(curves: &mut Vec<Solved>) -> Outcome {
    let rows = run_planned(&sweep_params(TheoremId::Thm1, 200));
    let failing = rows.iter().filter(|r| !r.0.passed).count();
    let worst = rows
        .iter()
        .map(|r| r.0.report.max_violation)
        .fold(0.0, f64::max);
    let points: usize = rows.iter().map(|r| r.0.report.d_grid.len()).sum();
    let mut kinds = BTreeMap::new();
    for r in &rows {
        *kinds.entry(r.0.plan.distortion.to_string()).or_insert(0) += 1;
    }
    curves.extend(rows.into_iter().flat_map(|r| r.1));
    Outcome {
        pass: failing == 0 && points == 200 * 20,
        detail: format!(
            "{}/200 pipelines pass, {points} grid points, max violation {worst:.3e} bits, kinds {kinds:?}",
            200 - failing
        ),
    }
}

fn criterion_4(curves: &mut Vec<Solved>) -> Outcome {
    let rows: Vec<(f64, [Solved; 2])> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let n1 = rng.gen_range(2..=6);
            let t = rng.gen_range(2..=3);
            let kind = if seed % 2 == 0 {
                DistortionKind::Hamming
            } else {
                DistortionKind::RandomNonnegative
            };
            let base = random_pipeline(rng.gen(), PipelineSizes::new(6, n1, n1, t), kind).unwrap();
            let perm = random_permutation(&mut rng, n1).unwrap();
            let p = LayeredPipeline::new(
                base.source().clone(),
                base.g1().clone(),
                perm,
                random_map(&mut rng, n1, t).unwrap(),
                base.task_distortion().clone(),
            )
            .unwrap();
            let v = check_theorem1(&p, 20, &SolverConfig::default(), 1e-4).unwrap();
            let mut worst: f64 = 0.0;
            for &(a, b) in &v.report.rate_pairs {
                worst = worst.max((a - b).abs());
            }
            let a = &v.dominating.curve;
            let b = &v.dominated.curve;
            for pt in a.points().iter().chain(b.points()) {
                let ra = rate_at(a, pt.distortion).unwrap();
                let rb = rate_at(b, pt.distortion).unwrap();
                worst = worst.max((ra - rb).abs());
            }
            let solved = [
                Solved {
                    name: format!("permutation {seed} y1"),
                    curve: v.dominating.curve,
                    entropy: entropy(&p.y1_distribution()),
                },
                Solved {
                    name: format!("permutation {seed} y2"),
                    curve: v.dominated.curve,
                    entropy: entropy(&p.y2_distribution()),
                },
            ];
            (worst, solved)
        })
        .collect();
    let worst = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    curves.extend(rows.into_iter().flat_map(|r| r.1));
    Outcome {
        pass: worst <= 1e-9,
        detail: format!("20 permutation pipelines, max |R_Y1 - R_Y2| = {worst:.3e} bits"),
    }
}

fn criterion_5(curves: &mut Vec<Solved>) -> Outcome {
    let rows = run_planned(&sweep_params(TheoremId::Thm2, 100));
    let unit = rows
        .iter()
        .filter(|r| r.2.is_some_and(|d| (d - 1.0).abs() <= 1e-9))
        .count();
    let bound_ok = rows.iter().filter(|r| r.0.report.passed()).count();
    let achieved = rows
        .iter()
        .filter(|r| r.0.achievability.as_ref().is_some_and(|a| a.holds))
        .count();
    let worst = rows
        .iter()
        .map(|r| r.0.report.max_violation)
        .fold(0.0, f64::max);
    let worst_feasible = rows
        .iter()
        .filter_map(|r| r.0.achievability.as_ref())
        .map(|a| a.max_feasibility_excess)
        .fold(0.0, f64::max);
    let worst_rate = rows
        .iter()
        .filter_map(|r| r.0.achievability.as_ref())
        .map(|a| a.max_rate_excess)
        .fold(0.0, f64::max);
    curves.extend(rows.into_iter().flat_map(|r| r.1));
    Outcome {
        pass: unit == 100 && bound_ok == 100 && achieved == 100,
        detail: format!(
            "delta=1 on {unit}/100, bound holds on {bound_ok}/100 (max violation {worst:.3e}), \
             two-step channel feasible and within rate on {achieved}/100 \
             (max excess: distortion {worst_feasible:.3e}, rate {worst_rate:.3e})"
        ),
    }
}

fn criterion_6() -> Outcome {
    let results: Vec<(bool, f64)> = (0..1000u64)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(60_000 + seed);
            let n = rng.gen_range(1..=6);
            let m = rng.gen_range(1..=6);
            let k = rng.gen_range(1..=6);
            let src = random_distribution(&mut rng, n).unwrap();
            let sparse = rng.gen_bool(0.3);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    if sparse {
                        let mut row = vec![0.0; m];
                        row[rng.gen_range(0..m)] = 1.0;
                        row
                    } else {
                        random_distribution(&mut rng, m).unwrap().mass().to_vec()
                    }
                })
                .collect();
            let channel = Channel::from_rows(&rows).unwrap();
            let g = random_map(&mut rng, m, k).unwrap();
            let out = dpi_check(&src, &channel, &g).unwrap();
            (
                out.i_after <= out.i_before + 1e-9,
                out.i_after - out.i_before,
            )
        })
        .collect();
    let held = results.iter().filter(|r| r.0).count();
    let worst = results
        .iter()
        .map(|r| r.1)
        .fold(f64::NEG_INFINITY, f64::max);
    Outcome {
        pass: held == 1000,
        detail: format!("{held}/1000 triples, max i_after - i_before = {worst:.3e} bits"),
    }
}

fn criterion_7() -> Outcome {
    let mut curves = vec![RateQualityCurve::new(
        vec![
            (0.05, 28.1),
            (0.1, 30.4),
            (0.2, 32.9),
            (0.4, 35.0),
            (0.8, 36.6),
        ],
        "psnr_db",
        "anchor",
    )
    .unwrap()];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..20 {
        let n = rng.gen_range(4..=8);
        let mut rate = rng.gen_range(0.01..0.2);
        let mut q = rng.gen_range(20.0..40.0);
        let pts = (0..n)
            .map(|_| {
                rate *= rng.gen_range(1.2..2.5);
                q += rng.gen_range(0.2..3.0);
                (rate, q)
            })
            .collect();
        curves.push(RateQualityCurve::new(pts, "psnr_db", format!("random {i}")).unwrap());
    }
    let (mut doubled, mut shifted, mut own): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for c in &curves {
        let r = bd_rate(c, &c.scale_rates(2.0).unwrap())
            .unwrap()
            .bd_rate_percent
            .unwrap();
        doubled = doubled.max((r - 100.0).abs());
        let q = bd_quality(c, &c.shift_quality(1.0).unwrap())
            .unwrap()
            .bd_quality
            .unwrap();
        shifted = shifted.max((q - 1.0).abs());
        let sr = bd_rate(c, c).unwrap().bd_rate_percent.unwrap();
        let sq = bd_quality(c, c).unwrap().bd_quality.unwrap();
        own = own.max(sr.abs()).max(sq.abs());
    }
    Outcome {
        pass: doubled <= 1e-9 && shifted <= 1e-9 && own <= 1e-9,
        detail: format!(
            "{} curves: |BD-rate(x2) - 100| <= {doubled:.1e}, |BD-quality(+1) - 1| <= {shifted:.1e}, |self| <= {own:.1e}",
            curves.len()
        ),
    }
}

fn criterion_8(curves: &[Solved]) -> Outcome {
    let mut bad = Vec::new();
    let mut worst_defect: f64 = 0.0;
    for s in curves {
        let pts = s.curve.points();
        let defect = s.curve.convexity_defect();
        worst_defect = worst_defect.max(defect);
        let increasing = pts.windows(2).any(|w| w[1].rate > w[0].rate);
        let out_of_range = pts
            .iter()
            .any(|p| p.rate < 0.0 || p.rate > s.entropy + 1e-9);
        if increasing || out_of_range || defect > SHAPE_TOL || pts.is_empty() {
            bad.push(s.name.clone());
        }
    }
    Outcome {
        pass: bad.is_empty() && !curves.is_empty(),
        detail: format!(
            "{} curves checked, worst chord-slope defect {worst_defect:.3e}, {} bad{}",
            curves.len(),
            bad.len(),
            if bad.is_empty() {
                String::new()
            } else {
                format!(": {:?}", &bad[..bad.len().min(5)])
            }
        ),
    }
}

fn output_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if !path.to_string_lossy().ends_with(".manifest.json") {
                let rel = path
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn criterion_9() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let sweep = |name: &str, theorem: &str, seed: &str| {
        let dir = root.path().join(name);
        let code = layerrd_cli::run([
            "layerrd",
            "sweep",
            theorem,
            "--seeds",
            "16",
            "--sizes",
            "6,6,5,3",
            "--grid",
            "20",
            "--tol",
            "1e-4",
            "--seed",
            seed,
            "--out-dir",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "sweep {name} exited with {code}");
        assert!(dir.join("sweep.manifest.json").is_file());
        output_files(&dir)
    };
    let mut identical = true;
    let mut files = 0;
    for theorem in ["thm1", "thm2"] {
        let a = sweep(&format!("{theorem}-a"), theorem, "42");
        let b = sweep(&format!("{theorem}-b"), theorem, "42");
        files += a.len();
        identical &= a == b && a.len() == 16 + 2;
    }
    let other = sweep("thm1-other", "thm1", "43");
    let differs = other != sweep("thm1-again", "thm1", "42");
    Outcome {
        pass: identical && differs,
        detail: format!(
            "two sweeps x 2 theorems, {files} files compared byte for byte: {}; a different seed changes the output: {differs}",
            if identical { "identical" } else { "DIFFERENT" }
        ),
    }
}

fn main() {
    let mut curves = Vec::new();
    type Check<'a> = Box<dyn FnOnce(&mut Vec<Solved>) -> Outcome + 'a>;
    let criteria: Vec<(u32, &str, Option<Duration>, Check)> = vec![
        (
            1,
            "closed-form binary R(D)",
            Some(Duration::from_secs(5)),
            Box::new(criterion_1),
        ),
        (
            2,
            "solver matches exhaustive search",
            Some(Duration::from_secs(120)),
            Box::new(criterion_2),
        ),
        (
            3,
            "deeper-feature bound, 200 pipelines",
            Some(Duration::from_secs(600)),
            Box::new(criterion_3),
        ),
        (
            4,
            "equality under permutation g2",
            None,
            Box::new(criterion_4),
        ),
        (5, "two-step bound, 100 cases", None, Box::new(criterion_5)),
        (
            6,
            "data processing, 1000 triples",
            Some(Duration::from_secs(30)),
            Box::new(|_| criterion_6()),
        ),
        (
            7,
            "BD exact-shift identities",
            None,
            Box::new(|_| criterion_7()),
        ),
        (
            8,
            "curve shape",
            None,
            Box::new(|c: &mut Vec<Solved>| criterion_8(c)),
        ),
        (9, "sweep determinism", None, Box::new(|_| criterion_9())),
    ];
    let total = criteria.len();
    let mut passed = 0;
    for (id, name, limit, check) in criteria {
        let start = Instant::now();
        let outcome = check(&mut curves);
        let elapsed = start.elapsed();
        let ok = outcome.pass && within_time(elapsed, limit);
        passed += ok as usize;
        let budget = limit.map_or(String::new(), |l| format!(" of {}s", l.as_secs()));
        println!(
            "criterion {id}: {} {name}: {} [{:.2}s{budget}]",
            if ok { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("{passed}/{total} criteria pass");
    if passed != total {
        std::process::exit(1);
    }
}

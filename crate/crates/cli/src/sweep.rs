//! Batch verification over seeded random pipelines.

use anyhow::{bail, Result};
use layerrd::pipeline::{random_distortion, random_pipeline_with};
use layerrd::theorem::{check_theorem1, check_theorem2};
use layerrd::{
    pullback_distortion, AchievabilityReport, DistortionKind, LayeredPipeline, PipelineSizes,
    SolverConfig, TheoremId, TheoremReport, Verification,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Which task distortions the generated pipelines use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum KindChoice {
    /// Hamming or random, picked per case.
    Mixed,
    Hamming,
    RandomNonnegative,
}

/// Distortion on `Y2` for the two-step bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureDistortion {
    /// Task distortion pulled back through `h2`.
    Task,
    /// Independent random nonnegative matrix on `Y2`.
    Random,
}

#[derive(Clone, Debug)]
pub struct SweepParams {
    pub theorem: TheoremId,
    pub cases: usize,
    pub max_sizes: PipelineSizes,
    pub grid: usize,
    pub tol: f64,
    pub seed: u64,
    pub kinds: KindChoice,
    pub solver: SolverConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CasePlan {
    pub case: usize,
    pub seed: u64,
    pub sizes: String,
    pub distortion: DistortionKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_distortion: Option<FeatureDistortion>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    #[serde(flatten)]
    pub plan: CasePlan,
    pub passed: bool,
    pub report: TheoremReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub achievability: Option<AchievabilityReport>,
}

/// A finished case with everything the report was computed from.
pub struct CaseOutcome {
    pub result: CaseResult,
    pub pipeline: LayeredPipeline,
    pub verification: Verification,
}

fn draw_size(rng: &mut ChaCha8Rng, max: usize) -> usize {
    if max <= 2 {
        max
    } else {
        rng.gen_range(2..=max)
    }
}

/// Draws every case's seed, sizes and distortion choice from one generator
/// seeded with `params.seed`, in case order.
pub fn plan_cases(params: &SweepParams) -> Result<Vec<CasePlan>> {
    let m = params.max_sizes;
    if [m.x, m.y1, m.y2, m.t].contains(&0) {
        bail!("alphabet sizes must be at least 1, got {m}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let plans = (0..params.cases)
        .map(|case| {
            let seed = rng.gen::<u64>();
            let sizes = PipelineSizes::new(
                draw_size(&mut rng, m.x),
                draw_size(&mut rng, m.y1),
                draw_size(&mut rng, m.y2),
                draw_size(&mut rng, m.t),
            );
            let distortion = match params.kinds {
                KindChoice::Hamming => DistortionKind::Hamming,
                KindChoice::RandomNonnegative => DistortionKind::RandomNonnegative,
                KindChoice::Mixed if rng.gen::<bool>() => DistortionKind::Hamming,
                KindChoice::Mixed => DistortionKind::RandomNonnegative,
            };
            let feature_distortion = match params.theorem {
                TheoremId::Thm1 => None,
                TheoremId::Thm2 if rng.gen::<bool>() => Some(FeatureDistortion::Task),
                TheoremId::Thm2 => Some(FeatureDistortion::Random),
            };
            CasePlan {
                case,
                seed,
                sizes: sizes.to_string(),
                distortion,
                feature_distortion,
            }
        })
        .collect();
    Ok(plans)
}

pub fn run_case(plan: &CasePlan, params: &SweepParams) -> Result<CaseOutcome> {
    let sizes: PipelineSizes = plan.sizes.parse()?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let pipeline = random_pipeline_with(&mut rng, sizes, plan.distortion)?;
    let verification = match params.theorem {
        TheoremId::Thm1 => check_theorem1(&pipeline, params.grid, &params.solver, params.tol)?,
        TheoremId::Thm2 => {
            let d_y2 = match plan.feature_distortion {
                Some(FeatureDistortion::Random) => {
                    random_distortion(&mut rng, sizes.y2, DistortionKind::RandomNonnegative)?
                }
                _ => pipeline.distortion_on_y2(),
            };
            let d_y1 = pullback_distortion(&d_y2, pipeline.g2())?;
            check_theorem2(
                &pipeline,
                &d_y1,
                Some(&d_y2),
                params.grid,
                &params.solver,
                params.tol,
            )?
        }
    };
    let achievability = verification.achievability.clone();
    let passed = verification.report.passed() && achievability.as_ref().is_none_or(|a| a.holds);
    Ok(CaseOutcome {
        result: CaseResult {
            plan: plan.clone(),
            passed,
            report: verification.report.clone(),
            achievability,
        },
        pipeline,
        verification,
    })
}

/// Runs every planned case, in parallel, keeping case order.
pub fn run_sweep(params: &SweepParams) -> Result<Vec<CaseResult>> {
    let plans = plan_cases(params)?;
    plans
        .par_iter()
        .map(|plan| run_case(plan, params).map(|o| o.result))
        .collect()
}

/// Fixed-width text table, one row per case.
pub fn summary_table(results: &[CaseResult]) -> String {
    let mut out = format!(
        "{:>5}  {:>20}  {:<9}  {:<18}  {:>12}  {}\n",
        "case", "seed", "sizes", "distortion", "max_viol", "verdict"
    );
    for r in results {
        out.push_str(&format!(
            "{:>5}  {:>20}  {:<9}  {:<18}  {:>12.3e}  {}\n",
            r.plan.case,
            r.plan.seed,
            r.plan.sizes,
            r.plan.distortion.to_string(),
            r.report.max_violation,
            if r.passed { "pass" } else { "FAIL" }
        ));
    }
    out
}

/// `rows,of,csv` with header `case,seed,sizes,distortion,max_violation,verdict`.
pub fn summary_csv(results: &[CaseResult]) -> String {
    let mut out = String::from("case,seed,sizes,distortion,max_violation,verdict\n");
    for r in results {
        out.push_str(&format!(
            "{},{},\"{}\",{},{},{}\n",
            r.plan.case,
            r.plan.seed,
            r.plan.sizes,
            r.plan.distortion,
            r.report.max_violation,
            if r.passed { "pass" } else { "fail" }
        ));
    }
    out
}

//! Finite-alphabet sources and the layered deterministic maps between them.
//!
//! The pipeline modelled here is the chain
//!
//! ```text
//!        g1        g2        h2
//!   X ------> Y1 ------> Y2 ------> T
//! ```
//!
//! with the derived maps `h1 = h2 . g2` (from `Y1` to the task output) and
//! `f = h1 . g1` (the end-to-end model). Symbols are plain indices
//! `0..size`; whatever they stand for (pixels, quantized features, labels)
//! is up to the caller. Optional downstream branches hang off `Y1`, the
//! partition point, and model features that are recomputed from it.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distortion::DistortionMatrix;
use crate::error::{Error, Result};

/// Absolute tolerance on the total mass of a distribution.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Smallest per-symbol weight drawn by the random generators before
/// renormalization.
pub const MIN_RANDOM_MASS: f64 = 1e-3;

/// A finite alphabet `{0, .., size - 1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Alphabet(pub(crate) usize);

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::invalid("alphabet size must be at least 1"));
        }
        Ok(Alphabet(size))
    }

    #[inline]
    pub fn size(self) -> usize {
        self.0
    }

    pub fn symbols(self) -> std::ops::Range<usize> {
        0..self.0
    }
}

/// Probability mass function over an [`Alphabet`].
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDistribution {
    mass: Vec<f64>,
}

impl FiniteDistribution {
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::invalid("distribution over an empty alphabet"));
        }
        if let Some(i) = mass
            .iter()
            .position(|&p| !p.is_finite() || !(0.0..=1.0).contains(&p))
        {
            return Err(Error::invalid(format!(
                "mass[{i}] = {} is outside [0, 1]",
                mass[i]
            )));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::invalid(format!("mass sums to {total}, expected 1")));
        }
        Ok(FiniteDistribution { mass })
    }

    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("weights sum to zero"));
        }
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(size: usize) -> Result<Self> {
        Alphabet::new(size)?;
        Ok(FiniteDistribution {
            mass: vec![1.0 / size as f64; size],
        })
    }

    pub fn point_mass(size: usize, symbol: usize) -> Result<Self> {
        Alphabet::new(size)?;
        if symbol >= size {
            return Err(Error::invalid(format!(
                "symbol {symbol} outside alphabet of size {size}"
            )));
        }
        let mut mass = vec![0.0; size];
        mass[symbol] = 1.0;
        Ok(FiniteDistribution { mass })
    }

    pub fn alphabet(&self) -> Alphabet {
        Alphabet(self.mass.len())
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }
}

/// A total function between two finite alphabets, stored as a lookup table.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DeterministicMap {
    table: Vec<usize>,
    codomain: Alphabet,
}

impl DeterministicMap {
    pub fn new(table: Vec<usize>, codomain_size: usize) -> Result<Self> {
        let codomain = Alphabet::new(codomain_size)?;
        if table.is_empty() {
            return Err(Error::invalid("map over an empty domain"));
        }
        if let Some(i) = table.iter().position(|&b| b >= codomain_size) {
            return Err(Error::invalid(format!(
                "table[{i}] = {} is outside codomain of size {codomain_size}",
                table[i]
            )));
        }
        Ok(DeterministicMap { table, codomain })
    }

    pub fn identity(size: usize) -> Result<Self> {
        Self::new((0..size).collect(), size)
    }

    pub fn constant(domain_size: usize, codomain_size: usize, value: usize) -> Result<Self> {
        Self::new(vec![value; domain_size], codomain_size)
    }

    pub fn domain(&self) -> Alphabet {
        Alphabet(self.table.len())
    }

    pub fn codomain(&self) -> Alphabet {
        self.codomain
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }

    #[inline]
    pub fn apply(&self, symbol: usize) -> usize {
        self.table[symbol]
    }

    /// True when the map is a permutation of a single alphabet onto itself.
    pub fn is_bijection(&self) -> bool {
        if self.domain() != self.codomain {
            return false;
        }
        let mut seen = vec![false; self.codomain.size()];
        for &b in &self.table {
            if std::mem::replace(&mut seen[b], true) {
                return false;
            }
        }
        true
    }

    /// Symbols of the codomain that some domain symbol maps to.
    pub fn image(&self) -> Vec<usize> {
        let mut hit = vec![false; self.codomain.size()];
        for &b in &self.table {
            hit[b] = true;
        }
        hit.iter()
            .enumerate()
            .filter_map(|(b, &h)| h.then_some(b))
            .collect()
    }
}

/// Distribution of `map(X)` when `X ~ dist`.
pub fn pushforward(
    dist: &FiniteDistribution,
    map: &DeterministicMap,
) -> Result<FiniteDistribution> {
    if dist.alphabet() != map.domain() {
        return Err(Error::mismatch(
            "pushforward",
            map.domain().size(),
            dist.len(),
        ));
    }
    let mut mass = vec![0.0; map.codomain().size()];
    for (a, &p) in dist.mass().iter().enumerate() {
        mass[map.apply(a)] += p;
    }
    Ok(FiniteDistribution { mass })
}

/// `second . first`: apply `first`, then `second`.
pub fn compose(first: &DeterministicMap, second: &DeterministicMap) -> Result<DeterministicMap> {
    if first.codomain() != second.domain() {
        return Err(Error::mismatch(
            "compose",
            second.domain().size(),
            first.codomain().size(),
        ));
    }
    Ok(DeterministicMap {
        table: first.table.iter().map(|&b| second.apply(b)).collect(),
        codomain: second.codomain(),
    })
}

/// A downstream feature recomputed from the partition point, with the
/// distortion measured on it.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub name: String,
    pub map: DeterministicMap,
    pub distortion: DistortionMatrix,
}

/// The chain `X -> Y1 -> Y2 -> T` plus the task distortion on `T`.
///
/// `h1` and `f` are recomputed from `g1`, `g2` and `h2` on demand; they are
/// never stored, so the relations `h1 = h2 . g2` and `f = h1 . g1` hold by
/// construction.
#[derive(Clone, Debug, PartialEq)]
pub struct LayeredPipeline {
    source: FiniteDistribution,
    g1: DeterministicMap,
    g2: DeterministicMap,
    h2: DeterministicMap,
    task_distortion: DistortionMatrix,
    branches: Vec<Branch>,
    partition_label: String,
}

impl LayeredPipeline {
    pub fn new(
        source: FiniteDistribution,
        g1: DeterministicMap,
        g2: DeterministicMap,
        h2: DeterministicMap,
        task_distortion: DistortionMatrix,
    ) -> Result<Self> {
        let pipeline = LayeredPipeline {
            source,
            g1,
            g2,
            h2,
            task_distortion,
            branches: Vec::new(),
            partition_label: "y1".to_string(),
        };
        pipeline.check()?;
        Ok(pipeline)
    }

    pub fn with_branches(mut self, branches: Vec<Branch>) -> Result<Self> {
        self.branches = branches;
        self.check()?;
        Ok(self)
    }

    pub fn with_partition_label(mut self, label: impl Into<String>) -> Self {
        self.partition_label = label.into();
        self
    }

    fn check(&self) -> Result<()> {
        let report = validate_pipeline(&self.to_spec());
        if report.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidPipeline(report))
        }
    }

    pub fn source(&self) -> &FiniteDistribution {
        &self.source
    }

    pub fn g1(&self) -> &DeterministicMap {
        &self.g1
    }

    pub fn g2(&self) -> &DeterministicMap {
        &self.g2
    }

    pub fn h2(&self) -> &DeterministicMap {
        &self.h2
    }

    pub fn task_distortion(&self) -> &DistortionMatrix {
        &self.task_distortion
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn partition_label(&self) -> &str {
        &self.partition_label
    }

    pub fn sizes(&self) -> PipelineSizes {
        PipelineSizes {
            x: self.source.len(),
            y1: self.g2.domain().size(),
            y2: self.h2.domain().size(),
            t: self.h2.codomain().size(),
        }
    }

    /// `h1 = h2 . g2`, from the partition point to the task output.
    pub fn h1(&self) -> DeterministicMap {
        compose(&self.g2, &self.h2).expect("pipeline alphabets chain")
    }

    /// `f = h1 . g1`, the end-to-end model.
    pub fn f(&self) -> DeterministicMap {
        compose(&self.g1, &self.h1()).expect("pipeline alphabets chain")
    }

    /// Induced distribution of `Y1 = g1(X)`.
    pub fn y1_distribution(&self) -> FiniteDistribution {
        pushforward(&self.source, &self.g1).expect("pipeline alphabets chain")
    }

    /// Induced distribution of `Y2 = g2(Y1)`.
    pub fn y2_distribution(&self) -> FiniteDistribution {
        pushforward(&self.y1_distribution(), &self.g2).expect("pipeline alphabets chain")
    }

    /// Distribution of the task output `T = f(X)`.
    pub fn task_distribution(&self) -> FiniteDistribution {
        pushforward(&self.source, &self.f()).expect("pipeline alphabets chain")
    }

    pub fn to_spec(&self) -> PipelineSpec {
        PipelineSpec {
            source: self.source.mass.clone(),
            g1: self.g1.table.clone(),
            g2: self.g2.table.clone(),
            h2: self.h2.table.clone(),
            task_distortion: self.task_distortion.to_rows(),
            branches: self
                .branches
                .iter()
                .map(|b| BranchSpec {
                    name: b.name.clone(),
                    map: b.map.table.clone(),
                    distortion: b.distortion.to_rows(),
                })
                .collect(),
            partition_label: self.partition_label.clone(),
        }
    }
}

/// Alphabet sizes of `X`, `Y1`, `Y2` and `T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineSizes {
    pub x: usize,
    pub y1: usize,
    pub y2: usize,
    pub t: usize,
}

impl PipelineSizes {
    pub fn new(x: usize, y1: usize, y2: usize, t: usize) -> Self {
        PipelineSizes { x, y1, y2, t }
    }

    fn as_array(self) -> [usize; 4] {
        [self.x, self.y1, self.y2, self.t]
    }
}

impl fmt::Display for PipelineSizes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x, self.y1, self.y2, self.t)
    }
}

impl FromStr for PipelineSizes {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::invalid(format!("sizes `{s}`: {e}")))?;
        match parts[..] {
            [x, y1, y2, t] => Ok(PipelineSizes { x, y1, y2, t }),
            _ => Err(Error::invalid(format!(
                "sizes `{s}`: expected four comma-separated integers"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistortionKind {
    Hamming,
    RandomNonnegative,
}

impl FromStr for DistortionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hamming" => Ok(DistortionKind::Hamming),
            "random-nonnegative" | "random" => Ok(DistortionKind::RandomNonnegative),
            other => Err(Error::invalid(format!("unknown distortion kind `{other}`"))),
        }
    }
}

impl fmt::Display for DistortionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistortionKind::Hamming => "hamming",
            DistortionKind::RandomNonnegative => "random-nonnegative",
        })
    }
}

/// Strictly positive random distribution: weights uniform on
/// `[MIN_RANDOM_MASS, 1)`, then renormalized.
pub fn random_distribution<R: Rng + ?Sized>(
    rng: &mut R,
    size: usize,
) -> Result<FiniteDistribution> {
    Alphabet::new(size)?;
    let weights: Vec<f64> = (0..size)
        .map(|_| rng.gen::<f64>().max(MIN_RANDOM_MASS))
        .collect();
    FiniteDistribution::from_weights(&weights)
}

/// Map drawn uniformly from all `codomain^domain` tables.
pub fn random_map<R: Rng + ?Sized>(
    rng: &mut R,
    domain: usize,
    codomain: usize,
) -> Result<DeterministicMap> {
    Alphabet::new(domain)?;
    Alphabet::new(codomain)?;
    let table = (0..domain).map(|_| rng.gen_range(0..codomain)).collect();
    DeterministicMap::new(table, codomain)
}

pub fn random_permutation<R: Rng + ?Sized>(rng: &mut R, size: usize) -> Result<DeterministicMap> {
    let mut table: Vec<usize> = (0..size).collect();
    table.shuffle(rng);
    DeterministicMap::new(table, size)
}

pub fn random_distortion<R: Rng + ?Sized>(
    rng: &mut R,
    size: usize,
    kind: DistortionKind,
) -> Result<DistortionMatrix> {
    match kind {
        DistortionKind::Hamming => DistortionMatrix::hamming(size),
        DistortionKind::RandomNonnegative => {
            let values = (0..size * size).map(|_| rng.gen::<f64>()).collect();
            DistortionMatrix::new(size, size, values)
        }
    }
}

/// Seeded random pipeline. Equal seeds give identical pipelines on every
/// platform (ChaCha8 stream).
pub fn random_pipeline(
    seed: u64,
    sizes: PipelineSizes,
    kind: DistortionKind,
) -> Result<LayeredPipeline> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_pipeline_with(&mut rng, sizes, kind)
}

pub fn random_pipeline_with<R: Rng + ?Sized>(
    rng: &mut R,
    sizes: PipelineSizes,
    kind: DistortionKind,
) -> Result<LayeredPipeline> {
    if sizes.as_array().contains(&0) {
        return Err(Error::invalid(format!(
            "all alphabet sizes must be >= 1, got {sizes}"
        )));
    }
    let source = random_distribution(rng, sizes.x)?;
    let g1 = random_map(rng, sizes.x, sizes.y1)?;
    let g2 = random_map(rng, sizes.y1, sizes.y2)?;
    let h2 = random_map(rng, sizes.y2, sizes.t)?;
    let task = random_distortion(rng, sizes.t, kind)?;
    LayeredPipeline::new(source, g1, g2, h2, task)
}

/// One failed pipeline invariant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Name of the invariant, e.g. `"source normalization"` or `"g2 range"`.
    pub invariant: String,
    /// Offending index within the component, when one applies.
    pub index: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{} [index {i}]: {}", self.invariant, self.detail),
            None => write!(f, "{}: {}", self.invariant, self.detail),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    fn push(
        &mut self,
        invariant: impl Into<String>,
        index: Option<usize>,
        detail: impl Into<String>,
    ) {
        self.violations.push(Violation {
            invariant: invariant.into(),
            index,
            detail: detail.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub name: String,
    pub map: Vec<usize>,
    pub distortion: Vec<Vec<f64>>,
}

fn default_partition_label() -> String {
    "y1".to_string()
}

/// Unvalidated pipeline, field for field the JSON file format.
///
/// Alphabet sizes are implied: `|X| = source.len()`, `|Y1| = g2.len()`,
/// `|Y2| = h2.len()` and `|T|` is the dimension of `task_distortion`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    pub source: Vec<f64>,
    pub g1: Vec<usize>,
    pub g2: Vec<usize>,
    pub h2: Vec<usize>,
    pub task_distortion: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub branches: Vec<BranchSpec>,
    #[serde(default = "default_partition_label")]
    pub partition_label: String,
}

impl PipelineSpec {
    pub fn into_pipeline(self) -> Result<LayeredPipeline> {
        let report = validate_pipeline(&self);
        if !report.is_empty() {
            return Err(Error::InvalidPipeline(report));
        }
        let t = self.task_distortion.len();
        let branches = self
            .branches
            .into_iter()
            .map(|b| {
                let dim = b.distortion.len();
                Ok(Branch {
                    name: b.name,
                    map: DeterministicMap::new(b.map, dim)?,
                    distortion: DistortionMatrix::from_rows(&b.distortion)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LayeredPipeline {
            source: FiniteDistribution::new(self.source)?,
            g1: DeterministicMap::new(self.g1, self.g2.len())?,
            g2: DeterministicMap::new(self.g2, self.h2.len())?,
            h2: DeterministicMap::new(self.h2, t)?,
            task_distortion: DistortionMatrix::from_rows(&self.task_distortion)?,
            branches,
            partition_label: self.partition_label,
        })
    }
}

fn check_table(
    report: &mut ValidationReport,
    name: &str,
    table: &[usize],
    domain: usize,
    codomain: usize,
) {
    if table.len() != domain {
        report.push(
            format!("{name} domain"),
            None,
            format!(
                "table has {} entries, domain has {domain} symbols",
                table.len()
            ),
        );
    }
    for (i, &b) in table.iter().enumerate() {
        if b >= codomain {
            report.push(
                format!("{name} range"),
                Some(i),
                format!("maps to {b}, codomain has {codomain} symbols"),
            );
        }
    }
}

fn check_square(report: &mut ValidationReport, name: &str, rows: &[Vec<f64>]) {
    if rows.is_empty() {
        report.push(format!("{name} shape"), None, "empty matrix");
        return;
    }
    let n = rows.len();
    for (r, row) in rows.iter().enumerate() {
        if row.len() != n {
            report.push(
                format!("{name} shape"),
                Some(r),
                format!("row has {} entries, expected {n}", row.len()),
            );
        }
        for (c, &v) in row.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                report.push(
                    format!("{name} values"),
                    Some(r * n + c),
                    format!("entry ({r}, {c}) = {v} is not a finite nonnegative number"),
                );
            }
        }
    }
}

/// Checks every pipeline invariant and lists the ones that fail.
///
/// Violations are data: an empty report means the spec can be turned into a
/// [`LayeredPipeline`].
pub fn validate_pipeline(spec: &PipelineSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let x = spec.source.len();
    let y1 = spec.g2.len();
    let y2 = spec.h2.len();
    let t = spec.task_distortion.len();

    for (name, size) in [("x", x), ("y1", y1), ("y2", y2), ("t", t)] {
        if size == 0 {
            report.push(format!("{name} alphabet"), None, "alphabet is empty");
        }
    }

    for (i, &p) in spec.source.iter().enumerate() {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            report.push(
                "source mass range",
                Some(i),
                format!("mass {p} outside [0, 1]"),
            );
        }
    }
    if x > 0 {
        let total: f64 = spec.source.iter().sum();
        if (total - 1.0).abs().is_nan() || (total - 1.0).abs() > MASS_TOLERANCE {
            report.push(
                "source normalization",
                None,
                format!("mass sums to {total}, expected 1 within {MASS_TOLERANCE:e}"),
            );
        }
    }

    check_table(&mut report, "g1", &spec.g1, x, y1);
    check_table(&mut report, "g2", &spec.g2, y1, y2);
    check_table(&mut report, "h2", &spec.h2, y2, t);
    check_square(&mut report, "task_distortion", &spec.task_distortion);

    for (k, branch) in spec.branches.iter().enumerate() {
        let name = format!("branch {k} ({})", branch.name);
        check_square(
            &mut report,
            &format!("{name} distortion"),
            &branch.distortion,
        );
        check_table(&mut report, &name, &branch.map, y1, branch.distortion.len());
    }
    report
}

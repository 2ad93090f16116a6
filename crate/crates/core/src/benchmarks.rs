//! Simulated test problems on the normalized unit hypercube, the crash
//! oracle that turns constraint violation into "no data", and the one-off
//! probe/refine pipeline that pins each problem's reference minimum and
//! penalty bound into a checked-in constants file.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::optim::pattern_search;

/// The registered simulated problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkId {
    Michalewicz10,
    Hartman6,
    EggCrate2,
}

impl BenchmarkId {
    pub fn all() -> [BenchmarkId; 3] {
        [Self::Michalewicz10, Self::Hartman6, Self::EggCrate2]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Michalewicz10 => "michalewicz10",
            Self::Hartman6 => "hartman6",
            Self::EggCrate2 => "eggcrate2",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Michalewicz10 => 10,
            Self::Hartman6 => 6,
            Self::EggCrate2 => 2,
        }
    }
}

impl fmt::Display for BenchmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "michalewicz10" => Ok(Self::Michalewicz10),
            "hartman6" => Ok(Self::Hartman6),
            "eggcrate2" => Ok(Self::EggCrate2),
            other => Err(Error::InvalidParameter(format!(
                "unknown benchmark '{other}' (expected michalewicz10|hartman6|eggcrate2)"
            ))),
        }
    }
}

/// Michalewicz function (steepness 10) after mapping the unit cube to its
/// native [0, pi]^10 box.
pub fn michalewicz10(x: &[f64]) -> f64 {
    assert_eq!(x.len(), 10, "michalewicz10 is 10-dimensional");
    let mut total = 0.0;
    for (i, z) in x.iter().enumerate() {
        let native = z * std::f64::consts::PI;
        let s = ((i + 1) as f64 * native * native / std::f64::consts::PI).sin();
        total += native.sin() * s.powi(20);
    }
    -total
}

const HARTMAN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HARTMAN_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];
const HARTMAN_C: [f64; 4] = [1.0, 1.2, 3.0, 3.2];

/// Hartman function in six dimensions; its native box is already [0, 1]^6.
pub fn hartman6(x: &[f64]) -> f64 {
    assert_eq!(x.len(), 6, "hartman6 is 6-dimensional");
    let mut total = 0.0;
    for i in 0..4 {
        let mut exponent = 0.0;
        for j in 0..6 {
            let d = x[j] - HARTMAN_P[i][j];
            exponent += HARTMAN_A[i][j] * d * d;
        }
        total += HARTMAN_C[i] * (-exponent).exp();
    }
    -total
}

/// Egg Crate function after mapping the unit square to its native [-5, 5]^2.
pub fn eggcrate2(x: &[f64]) -> f64 {
    assert_eq!(x.len(), 2, "eggcrate2 is 2-dimensional");
    let a = -5.0 + 10.0 * x[0];
    let b = -5.0 + 10.0 * x[1];
    a * a + b * b + 25.0 * (a.sin() * a.sin() + b.sin() * b.sin())
}

/// Sinusoidal constraint on the normalized coordinates. Its sign alternates
/// across the 2^D sub-hypercubes of the domain; a point is safe iff the value
/// is at most the threshold (zero for all registered problems).
pub fn sin_constraint(x: &[f64]) -> f64 {
    x.iter()
        .map(|v| (2.0 * std::f64::consts::PI * v).sin())
        .product()
}

/// A registered problem: objective, constraint, noise levels, and the pinned
/// reference constants used for regret and the high-cost penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub id: BenchmarkId,
    pub dim: usize,
    pub noise_std_objective: f64,
    pub noise_std_constraint: f64,
    pub true_threshold: f64,
    /// Reference minimum from the constants pipeline, for regret.
    pub f_min: f64,
    /// Fixed failure penalty for the high-cost baseline.
    pub hc_bound: f64,
}

#[derive(Debug, serde::Deserialize)]
struct StoredConstants {
    f_min: f64,
    hc_bound: f64,
}

fn stored_constants() -> &'static HashMap<String, StoredConstants> {
    static CONSTANTS: OnceLock<HashMap<String, StoredConstants>> = OnceLock::new();
    CONSTANTS.get_or_init(|| {
        toml::from_str(include_str!("benchmark_constants.toml"))
            .expect("checked-in benchmark constants parse")
    })
}

impl BenchmarkSpec {
    /// Loads a problem with its checked-in constants and the default 0.01
    /// observation noise on both channels.
    pub fn load(id: BenchmarkId) -> Self {
        let stored = &stored_constants()[id.name()];
        Self {
            id,
            dim: id.dim(),
            noise_std_objective: 0.01,
            noise_std_constraint: 0.01,
            true_threshold: 0.0,
            f_min: stored.f_min,
            hc_bound: stored.hc_bound,
        }
    }

    /// Noiseless objective at a normalized point.
    pub fn objective(&self, x: &[f64]) -> f64 {
        match self.id {
            BenchmarkId::Michalewicz10 => michalewicz10(x),
            BenchmarkId::Hartman6 => hartman6(x),
            BenchmarkId::EggCrate2 => eggcrate2(x),
        }
    }

    /// Noiseless constraint at a normalized point.
    pub fn constraint(&self, x: &[f64]) -> f64 {
        sin_constraint(x)
    }
}

/// Whether an experiment completed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Success,
    Failure,
}

impl Label {
    pub fn as_int(&self) -> u8 {
        match self {
            Self::Success => 1,
            Self::Failure => 0,
        }
    }
}

/// One coupled experiment outcome: values are present exactly when the run
/// succeeded, enforced by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridObservation {
    label: Label,
    values: Option<(f64, f64)>,
}

impl HybridObservation {
    pub fn success(objective_value: f64, constraint_value: f64) -> Self {
        Self {
            label: Label::Success,
            values: Some((objective_value, constraint_value)),
        }
    }

    pub fn failure() -> Self {
        Self {
            label: Label::Failure,
            values: None,
        }
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn is_success(&self) -> bool {
        self.label == Label::Success
    }

    pub fn objective_value(&self) -> Option<f64> {
        self.values.map(|v| v.0)
    }

    pub fn constraint_value(&self) -> Option<f64> {
        self.values.map(|v| v.1)
    }
}

/// Runs one simulated experiment: a violated constraint crashes the run and
/// reports nothing but the label; a safe run reports both observations under
/// independent Gaussian noise. The crash decision itself is noiseless.
pub fn crash_oracle(spec: &BenchmarkSpec, x: &[f64], rng: &mut impl Rng) -> HybridObservation {
    if spec.constraint(x) > spec.true_threshold {
        return HybridObservation::failure();
    }
    let eps_f: f64 = rand_distr::StandardNormal.sample(rng);
    let eps_g: f64 = rand_distr::StandardNormal.sample(rng);
    HybridObservation::success(
        spec.objective(x) + spec.noise_std_objective * eps_f,
        spec.constraint(x) + spec.noise_std_constraint * eps_g,
    )
}

const SAFE_START_ATTEMPTS: usize = 100_000;

/// Uniformly rejection-samples a point inside the safe region.
pub fn sample_safe_start(spec: &BenchmarkSpec, rng: &mut impl Rng) -> Result<Vec<f64>> {
    for _ in 0..SAFE_START_ATTEMPTS {
        let x: Vec<f64> = (0..spec.dim).map(|_| rng.random::<f64>()).collect();
        if spec.constraint(&x) <= spec.true_threshold {
            return Ok(x);
        }
    }
    Err(Error::SafeStartExhausted(SAFE_START_ATTEMPTS))
}

/// Provenance record of one constants-pipeline run.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub id: BenchmarkId,
    pub f_min: f64,
    pub argmin: Vec<f64>,
    pub probe_min: f64,
    pub probe_max: f64,
    pub hc_bound: f64,
    pub probes: usize,
    pub refine_starts: usize,
    pub refine_evals: usize,
    pub seed: u64,
}

/// Probe sweep plus multistart local refinement for one problem. `f_min` is
/// the smallest value seen anywhere (so it lower-bounds every probe by
/// construction); the penalty bound is the probe maximum plus one tenth of
/// the probe range. Deterministic given `seed`.
pub fn constant_oracle(
    id: BenchmarkId,
    probes: usize,
    refine_starts: usize,
    refine_evals: usize,
    seed: u64,
) -> OracleReport {
    use rand::SeedableRng;
    let spec = BenchmarkSpec {
        id,
        dim: id.dim(),
        noise_std_objective: 0.0,
        noise_std_constraint: 0.0,
        true_threshold: 0.0,
        f_min: 0.0,
        hc_bound: 0.0,
    };
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut probe_min = f64::INFINITY;
    let mut probe_max = f64::NEG_INFINITY;
    // Lowest-value probes kept as refinement starts, worst first.
    let mut starts: Vec<(f64, Vec<f64>)> = Vec::with_capacity(refine_starts + 1);
    for _ in 0..probes {
        let x: Vec<f64> = (0..spec.dim).map(|_| rng.random::<f64>()).collect();
        let v = spec.objective(&x);
        probe_min = probe_min.min(v);
        probe_max = probe_max.max(v);
        if starts.len() < refine_starts || v < starts[0].0 {
            starts.push((v, x));
            starts.sort_by(|a, b| b.0.total_cmp(&a.0));
            if starts.len() > refine_starts {
                starts.remove(0);
            }
        }
    }

    let mut f_min = probe_min;
    let mut argmin = starts.last().map(|s| s.1.clone()).unwrap_or_default();
    for (_, start) in &starts {
        let mut f = |x: &[f64]| -spec.objective(x);
        let r = pattern_search(&mut f, start, 0.1, 1e-10, refine_evals, Some((0.0, 1.0)));
        if -r.value < f_min {
            f_min = -r.value;
            argmin = r.point;
        }
    }

    OracleReport {
        id,
        f_min,
        argmin,
        probe_min,
        probe_max,
        hc_bound: probe_max + 0.1 * (probe_max - probe_min),
        probes,
        refine_starts,
        refine_evals,
        seed,
    }
}

/// Renders the constants file, provenance included, for a set of reports.
pub fn render_constants(reports: &[OracleReport]) -> String {
    let mut out = String::new();
    out.push_str("# Benchmark reference constants. Regenerate with:\n");
    out.push_str("#   crashbo oracle --benchmark all --out crates/core/src/benchmark_constants.toml\n");
    out.push_str("# f_min is the smallest objective value found by the probe sweep plus\n");
    out.push_str("# multistart pattern-search refinement; hc_bound is the probe maximum plus\n");
    out.push_str("# 10% of the probe range.\n");
    for r in reports {
        out.push_str(&format!("\n[{}]\n", r.id.name()));
        out.push_str(&format!("f_min = {:?}\n", r.f_min));
        out.push_str(&format!("hc_bound = {:?}\n", r.hc_bound));
        out.push_str(&format!("probe_min = {:?}\n", r.probe_min));
        out.push_str(&format!("probe_max = {:?}\n", r.probe_max));
        let args: Vec<String> = r.argmin.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&format!("argmin = [{}]\n", args.join(", ")));
        out.push_str(&format!("probes = {}\n", r.probes));
        out.push_str(&format!("refine_starts = {}\n", r.refine_starts));
        out.push_str(&format!("refine_evals = {}\n", r.refine_evals));
        out.push_str(&format!("seed = {}\n", r.seed));
    }
    out
}

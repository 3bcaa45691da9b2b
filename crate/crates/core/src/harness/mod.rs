//! Monte-Carlo campaigns: grow many trees, standardize their edge-type and
//! (A, B) statistics, and compare the sample against the limit law.

pub mod normality;
pub mod stream;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Scalar};
use crate::models::{grow_tracked, Model, ProcessKind};
use crate::rng;
use crate::spectral::{ab_map, builtin_limit_law, project_ab};
use crate::tree::PhyloTree;

pub use normality::{normality_test, NormalityReport};
pub use stream::Moments;

/// Replicates per work unit. Results are merged per unit in a fixed order,
/// so they do not depend on the number of worker threads.
pub const CHUNK: u64 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Statistic {
    EdgeVector,
    Ab,
}

impl Statistic {
    pub fn name(self) -> &'static str {
        match self {
            Statistic::EdgeVector => "edge-vector",
            Statistic::Ab => "ab",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CampaignTest {
    Mean,
    Covariance,
    Normality,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Means must lie within this many standard errors of zero.
    pub mean_se: f64,
    /// Relative Frobenius error allowed for the sample covariance.
    pub cov_rel_frobenius: f64,
    /// KS threshold is `ks_coefficient / sqrt(N)`.
    pub ks_coefficient: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            mean_se: 3.0,
            cov_rel_frobenius: 0.10,
            ks_coefficient: 1.63,
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_seed_tree() -> String {
    "t2".into()
}

fn default_stats() -> Vec<Statistic> {
    vec![Statistic::Ab, Statistic::EdgeVector]
}

fn default_tests() -> Vec<CampaignTest> {
    vec![CampaignTest::Mean, CampaignTest::Covariance, CampaignTest::Normality]
}

fn default_gate() -> Statistic {
    Statistic::Ab
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub model: Model,
    #[serde(default = "default_true")]
    pub rooted: bool,
    /// Built-in name, Newick string, or path to a Newick file.
    #[serde(default = "default_seed_tree")]
    pub seed_tree: String,
    pub n: usize,
    pub replicates: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_stats")]
    pub stats: Vec<Statistic>,
    #[serde(default = "default_tests")]
    pub tests: Vec<CampaignTest>,
    /// Statistic whose tests decide pass/fail; the other is diagnostic.
    #[serde(default = "default_gate")]
    pub gate: Statistic,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Optional CSV of per-replicate raw counts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_dump: Option<PathBuf>,
}

impl CampaignConfig {
    pub fn new(model: Model, n: usize, replicates: u64) -> Self {
        Self {
            model,
            rooted: true,
            seed_tree: default_seed_tree(),
            n,
            replicates,
            base_seed: 0,
            stats: default_stats(),
            tests: default_tests(),
            gate: default_gate(),
            tolerances: Tolerances::default(),
            raw_dump: None,
        }
    }

    pub fn kind(&self) -> ProcessKind {
        ProcessKind {
            model: self.model,
            rooted: self.rooted,
        }
    }

    /// Checks the configuration and resolves the seed tree.
    pub fn validate(&self) -> Result<PhyloTree> {
        if self.replicates < 2 {
            return Err(Error::Config(format!("need at least 2 replicates, got {}", self.replicates)));
        }
        if self.stats.is_empty() {
            return Err(Error::Config("no statistics selected".into()));
        }
        if !self.stats.contains(&self.gate) {
            return Err(Error::Config(format!(
                "gate statistic '{}' is not collected",
                self.gate.name()
            )));
        }
        let seed = resolve_seed_tree(&self.seed_tree)?;
        if seed.is_rooted() != self.rooted {
            return Err(Error::Config(format!(
                "seed tree '{}' is {} but the campaign is {}",
                self.seed_tree,
                if seed.is_rooted() { "rooted" } else { "unrooted" },
                if self.rooted { "rooted" } else { "unrooted" }
            )));
        }
        let m = seed.leaf_count();
        if self.n <= m {
            return Err(Error::Config(format!(
                "target n = {} must exceed the seed's {m} leaves",
                self.n
            )));
        }
        if !self.rooted && self.n < 6 {
            return Err(Error::Config("statistics of unrooted trees need n >= 6".into()));
        }
        Ok(seed)
    }
}

/// Built-in name, inline Newick, or a file holding Newick.
pub fn resolve_seed_tree(spec: &str) -> Result<PhyloTree> {
    let spec = spec.trim();
    if let Some(t) = PhyloTree::builtin(spec) {
        return Ok(t);
    }
    if spec.starts_with('(') {
        return PhyloTree::from_newick(spec);
    }
    let path = std::path::Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        return PhyloTree::from_newick(text.trim());
    }
    Err(Error::Config(format!(
        "seed tree '{spec}' is neither a built-in name, Newick, nor a readable file"
    )))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignMetadata {
    pub version: String,
    pub rng_algorithm: String,
    pub base_seed: u64,
    pub model: Model,
    pub rooted: bool,
    pub seed_tree: String,
    pub n: usize,
    pub replicates: u64,
    pub chunk: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatBlock {
    pub statistic: Statistic,
    /// Mean of `X_n / n`.
    pub per_leaf_mean: Vec<f64>,
    /// `s v_1` (or its (A, B) image), the limit of `X_n / n`.
    pub limit_rate: Vec<f64>,
    /// Mean of the standardized `z = (X_n - n s v_1) / sqrt(n)`.
    pub mean: Vec<f64>,
    /// Standard errors of `mean` from the theoretical covariance.
    pub theory_se: Vec<f64>,
    pub sample_se: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub theory_cov: Vec<Vec<f64>>,
    pub cov_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub test: CampaignTest,
    pub statistic: Statistic,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    pub gating: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub metadata: CampaignMetadata,
    pub blocks: Vec<StatBlock>,
    pub normality: Vec<(Statistic, NormalityReport)>,
    pub tests: Vec<TestOutcome>,
    pub passed: bool,
}

impl CampaignResult {
    pub fn block(&self, s: Statistic) -> Option<&StatBlock> {
        self.blocks.iter().find(|b| b.statistic == s)
    }

    pub fn test(&self, t: CampaignTest, s: Statistic) -> Option<&TestOutcome> {
        self.tests.iter().find(|o| o.test == t && o.statistic == s)
    }
}

/// Terminal counts of one replicate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplicateOutcome {
    pub replicate: u64,
    pub counts: Vec<u64>,
    pub a: u64,
    pub b: u64,
}

/// Grows one tree and checks the per-replicate invariants.
pub fn simulate_replicate(kind: ProcessKind, seed: &PhyloTree, n: usize, base_seed: u64, replicate: u64) -> Result<ReplicateOutcome> {
    let mut r = rng::stream(base_seed, replicate);
    let t = grow_tracked(kind, seed, n, &mut r)?;
    let d = kind.model.dim();
    let counts = t
        .counts()
        .ok_or_else(|| Error::Invariant {
            replicate,
            msg: "classification undefined at the terminal size".into(),
        })?[..d]
        .to_vec();
    let total: u64 = counts.iter().sum();
    let expected = match (kind.model, kind.rooted) {
        (Model::Yhk, _) => n as u64,
        (Model::Pda, true) => 2 * n as u64 - 1,
        (Model::Pda, false) => 2 * n as u64 - 3,
    };
    if total != expected {
        return Err(Error::Invariant {
            replicate,
            msg: format!("edge-type total {total}, expected {expected}"),
        });
    }
    let a = counts[0] / 2;
    let b = (counts[0] + counts[1]) / 2;
    let (ra, rb) = (t.tree().count_pitchforks() as u64, t.tree().count_cherries() as u64);
    if (a, b) != (ra, rb) {
        return Err(Error::Invariant {
            replicate,
            msg: format!("(A, B) from edge types ({a}, {b}) but recount gives ({ra}, {rb})"),
        });
    }
    Ok(ReplicateOutcome { replicate, counts, a, b })
}

struct ChunkOut {
    moments: Vec<Moments>,
    samples: Vec<Vec<Vec<f64>>>,
    raw: Vec<ReplicateOutcome>,
}

/// Theoretical centring and covariance for one statistic.
struct Theory {
    rate: Vec<f64>,
    cov: Matrix<f64>,
}

fn theory_for(model: Model, s: Statistic) -> Theory {
    let law = builtin_limit_law(model);
    let rate_edge: Vec<f64> = law.v1.iter().map(|v| (v * &law.s).to_f64()).collect();
    match s {
        Statistic::EdgeVector => Theory {
            rate: rate_edge,
            cov: law.sigma.to_f64(),
        },
        Statistic::Ab => {
            let l = ab_map::<f64>(model.dim()).expect("d >= 2");
            Theory {
                rate: l.mul_vec(&rate_edge),
                cov: project_ab(&law.sigma).expect("d >= 2").to_f64(),
            }
        }
    }
}

fn raw_vector(s: Statistic, o: &ReplicateOutcome) -> Vec<f64> {
    match s {
        Statistic::EdgeVector => o.counts.iter().map(|&c| c as f64).collect(),
        Statistic::Ab => vec![o.a as f64, o.b as f64],
    }
}

fn frobenius(m: &[Vec<f64>]) -> f64 {
    m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

/// Runs a whole campaign. Deterministic given the configuration.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignResult> {
    run_campaign_with(config, &theory_sigma)
}

/// Exact limit covariance of the edge-type vector, as floats.
pub fn theory_sigma(model: Model) -> Matrix<f64> {
    builtin_limit_law(model).sigma.to_f64()
}

/// As [`run_campaign`], with the theoretical edge covariance supplied by
/// `sigma_fn` (used to check that a wrong covariance is caught).
pub fn run_campaign_with(config: &CampaignConfig, sigma_fn: &(dyn Fn(Model) -> Matrix<f64> + Sync)) -> Result<CampaignResult> {
    let seed = config.validate()?;
    let kind = config.kind();
    let n = config.n;
    let stats = config.stats.clone();
    let theories: Vec<Theory> = stats
        .iter()
        .map(|&s| {
            let mut t = theory_for(config.model, s);
            let sigma = sigma_fn(config.model);
            t.cov = match s {
                Statistic::EdgeVector => sigma,
                Statistic::Ab => {
                    let l = ab_map::<f64>(config.model.dim()).expect("d >= 2");
                    l.mul(&sigma).mul(&l.transpose())
                }
            };
            t
        })
        .collect();
    let keep_samples = config.tests.contains(&CampaignTest::Normality);
    let keep_raw = config.raw_dump.is_some();
    let sqrt_n = (n as f64).sqrt();

    let chunks = config.replicates.div_ceil(CHUNK);
    let outs: Vec<ChunkOut> = (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<ChunkOut> {
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(config.replicates);
            let mut moments: Vec<Moments> = theories.iter().map(|t| Moments::new(t.rate.len())).collect();
            let mut samples: Vec<Vec<Vec<f64>>> = vec![Vec::new(); stats.len()];
            let mut raw = Vec::new();
            for rep in lo..hi {
                let o = simulate_replicate(kind, &seed, n, config.base_seed, rep)?;
                for (k, &s) in stats.iter().enumerate() {
                    let x = raw_vector(s, &o);
                    let z: Vec<f64> = x
                        .iter()
                        .zip(&theories[k].rate)
                        .map(|(x, r)| (x - n as f64 * r) / sqrt_n)
                        .collect();
                    moments[k].push(&z);
                    if keep_samples {
                        samples[k].push(z);
                    }
                }
                if keep_raw {
                    raw.push(o);
                }
            }
            Ok(ChunkOut { moments, samples, raw })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut per_stat: Vec<Vec<Moments>> = vec![Vec::with_capacity(outs.len()); stats.len()];
    let mut samples: Vec<Vec<Vec<f64>>> = vec![Vec::new(); stats.len()];
    let mut raw = Vec::new();
    for out in outs {
        for (k, m) in out.moments.into_iter().enumerate() {
            per_stat[k].push(m);
        }
        for (k, s) in out.samples.into_iter().enumerate() {
            samples[k].extend(s);
        }
        raw.extend(out.raw);
    }

    let big_n = config.replicates as f64;
    let tol = &config.tolerances;
    let mut blocks = Vec::new();
    let mut tests = Vec::new();
    let mut normality = Vec::new();
    for (k, &s) in stats.iter().enumerate() {
        let th = &theories[k];
        let d = th.rate.len();
        let m = stream::merge_tree(std::mem::take(&mut per_stat[k]), d);
        let cov = m.covariance();
        let theory_cov = th.cov.to_rows();
        let diff: Vec<Vec<f64>> = cov
            .iter()
            .zip(&theory_cov)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        let theory_norm = frobenius(&theory_cov);
        let cov_rel_error = if theory_norm > 0.0 {
            frobenius(&diff) / theory_norm
        } else {
            frobenius(&diff)
        };
        let theory_se: Vec<f64> = (0..d).map(|i| (th.cov[(i, i)].max(0.0) / big_n).sqrt()).collect();
        let sample_se = m.standard_errors();
        let per_leaf_mean: Vec<f64> = m
            .mean
            .iter()
            .zip(&th.rate)
            .map(|(z, r)| z / sqrt_n + r)
            .collect();
        let gating = s == config.gate;

        for &t in &config.tests {
            let (value, threshold) = match t {
                CampaignTest::Mean => {
                    let worst = m
                        .mean
                        .iter()
                        .enumerate()
                        .map(|(i, &mu)| {
                            let se = if theory_se[i] > 0.0 { theory_se[i] } else { sample_se[i] };
                            if se > 0.0 {
                                mu.abs() / se
                            } else if mu.abs() < 1e-12 {
                                0.0
                            } else {
                                f64::INFINITY
                            }
                        })
                        .fold(0.0f64, f64::max);
                    (worst, tol.mean_se)
                }
                CampaignTest::Covariance => (cov_rel_error, tol.cov_rel_frobenius),
                CampaignTest::Normality => {
                    let rep = normality_test(&samples[k], &th.cov, tol.ks_coefficient)?;
                    let out = (rep.mahalanobis_ks, rep.threshold);
                    normality.push((s, rep));
                    out
                }
            };
            tests.push(TestOutcome {
                test: t,
                statistic: s,
                value,
                threshold,
                passed: value <= threshold,
                gating,
            });
        }
        blocks.push(StatBlock {
            statistic: s,
            per_leaf_mean,
            limit_rate: th.rate.clone(),
            mean: m.mean.clone(),
            theory_se,
            sample_se,
            cov,
            theory_cov,
            cov_rel_error,
        });
    }

    if let Some(path) = &config.raw_dump {
        write_raw_dump(path, config.model.dim(), &raw)?;
    }

    let passed = tests.iter().filter(|t| t.gating).all(|t| t.passed);
    Ok(CampaignResult {
        metadata: CampaignMetadata {
            version: env!("CARGO_PKG_VERSION").into(),
            rng_algorithm: rng::RNG_ALGORITHM.into(),
            base_seed: config.base_seed,
            model: config.model,
            rooted: config.rooted,
            seed_tree: seed.to_newick(),
            n,
            replicates: config.replicates,
            chunk: CHUNK,
        },
        blocks,
        normality,
        tests,
        passed,
    })
}

fn write_raw_dump(path: &std::path::Path, d: usize, raw: &[ReplicateOutcome]) -> Result<()> {
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let mut header = vec!["replicate".to_string()];
    header.extend((1..=d).map(|i| format!("X{i}")));
    header.push("A".into());
    header.push("B".into());
    w.write_record(&header).map_err(io)?;
    for o in raw {
        let mut rec = vec![o.replicate.to_string()];
        rec.extend(o.counts.iter().map(|c| c.to_string()));
        rec.push(o.a.to_string());
        rec.push(o.b.to_string());
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed_tree: String,
    pub leaves: usize,
    pub ab_mean: Vec<f64>,
    pub ab_se: Vec<f64>,
    pub ab_cov: Vec<Vec<f64>>,
    pub cov_rel_error: f64,
    pub cov_passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDistance {
    pub first: usize,
    pub second: usize,
    /// Largest standardized mean difference, in pooled standard errors.
    pub mean_gap: f64,
    /// `||S_i - S_j||_F / ||Sigma||_F`.
    pub cov_gap: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndependenceReport {
    pub model: Model,
    pub rooted: bool,
    pub n: usize,
    pub replicates: u64,
    pub seeds: Vec<SeedSummary>,
    pub pairs: Vec<PairDistance>,
    pub passed: bool,
}

/// Runs the same campaign from several seed trees and compares the
/// standardized (A, B) laws with each other and with the limit.
pub fn initial_tree_independence(base: &CampaignConfig, seeds: &[String]) -> Result<IndependenceReport> {
    initial_tree_independence_with(base, seeds, &theory_sigma)
}

pub fn initial_tree_independence_with(
    base: &CampaignConfig,
    seeds: &[String],
    sigma_fn: &(dyn Fn(Model) -> Matrix<f64> + Sync),
) -> Result<IndependenceReport> {
    if seeds.len() < 2 {
        return Err(Error::Config("need at least two seed trees".into()));
    }
    let tol = &base.tolerances;
    let mut summaries = Vec::new();
    for spec in seeds {
        let cfg = CampaignConfig {
            seed_tree: spec.clone(),
            stats: vec![Statistic::Ab],
            tests: vec![CampaignTest::Covariance],
            gate: Statistic::Ab,
            raw_dump: None,
            ..base.clone()
        };
        let res = run_campaign_with(&cfg, sigma_fn)?;
        let b = res.block(Statistic::Ab).expect("ab collected");
        summaries.push(SeedSummary {
            seed_tree: res.metadata.seed_tree.clone(),
            leaves: resolve_seed_tree(spec)?.leaf_count(),
            ab_mean: b.mean.clone(),
            ab_se: b.theory_se.clone(),
            ab_cov: b.cov.clone(),
            cov_rel_error: b.cov_rel_error,
            cov_passed: b.cov_rel_error <= tol.cov_rel_frobenius,
        });
    }
    let sigma_norm = frobenius(&project_ab(&sigma_fn(base.model))?.to_rows());
    let mut pairs = Vec::new();
    for i in 0..summaries.len() {
        for j in i + 1..summaries.len() {
            let (a, b) = (&summaries[i], &summaries[j]);
            let mean_gap = (0..2)
                .map(|k| {
                    let se = (a.ab_se[k].powi(2) + b.ab_se[k].powi(2)).sqrt();
                    (a.ab_mean[k] - b.ab_mean[k]).abs() / se
                })
                .fold(0.0f64, f64::max);
            let diff: Vec<Vec<f64>> = a
                .ab_cov
                .iter()
                .zip(&b.ab_cov)
                .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x - y).collect())
                .collect();
            let cov_gap = frobenius(&diff) / sigma_norm;
            pairs.push(PairDistance {
                first: i,
                second: j,
                mean_gap,
                cov_gap,
                passed: mean_gap <= tol.mean_se,
            });
        }
    }
    let passed = summaries.iter().all(|s| s.cov_passed) && pairs.iter().all(|p| p.passed);
    Ok(IndependenceReport {
        model: base.model,
        rooted: base.rooted,
        n: base.n,
        replicates: base.replicates,
        seeds: summaries,
        pairs,
        passed,
    })
}

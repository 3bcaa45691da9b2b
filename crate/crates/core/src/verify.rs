//! Self-check suites: exact identities, urn/tree coupling and Monte-Carlo
//! campaigns, bundled into a machine-readable report.

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exact::{closed_form_moments, enumerate_exact, MomentSet, DEFAULT_ENUMERATION_CAP};
use crate::harness::{self, CampaignConfig, CampaignTest, Statistic};
use crate::linalg::{q, Matrix, QMatrix, Scalar};
use crate::models::{generate, grow_tracked, Model, ProcessKind};
use crate::rng;
use crate::spectral::{self, builtin_spectral, diagonalize_numeric, project_ab, SpectralData};
use crate::tree::PhyloTree;
use crate::urn::{b_second_moment_sum, check_assumptions, run_forced, UrnState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Yhk,
    Pda,
    Urn,
    Spectral,
    All,
}

impl std::str::FromStr for Suite {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "yhk" => Suite::Yhk,
            "pda" => Suite::Pda,
            "urn" => Suite::Urn,
            "spectral" => Suite::Spectral,
            "all" => Suite::All,
            other => return Err(crate::Error::Config(format!("unknown suite '{other}'"))),
        })
    }
}

/// Sizes of the stochastic checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub clt_n: usize,
    pub clt_replicates: u64,
    pub slln_n: usize,
    pub coupling_traces: u64,
    pub coupling_n: usize,
    pub split_runs: u64,
    pub bsum_n: u64,
    pub base_seed: u64,
}

impl Scale {
    /// Sizes used by the acceptance criteria.
    pub fn full() -> Self {
        Self {
            clt_n: 2000,
            clt_replicates: 10_000,
            slln_n: 100_000,
            coupling_traces: 1000,
            coupling_n: 60,
            split_runs: 100_000,
            bsum_n: 100_000,
            base_seed: 20_240_601,
        }
    }

    /// Small sizes for smoke runs.
    pub fn quick() -> Self {
        Self {
            clt_n: 1000,
            clt_replicates: 2000,
            slln_n: 20_000,
            coupling_traces: 100,
            coupling_n: 30,
            split_runs: 20_000,
            bsum_n: 100_000,
            base_seed: 20_240_601,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub version: String,
    pub rng_algorithm: String,
    pub suite: Suite,
    pub scale: Scale,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// Covariance routine under test; swapped out to check that a wrong one
/// is caught.
pub type SigmaFn = fn(&SpectralData<BigRational>) -> Result<QMatrix>;

fn qm(rows: &[&[i64]], den: i64) -> QMatrix {
    Matrix::from_i64_rows(rows).scale(&q(1, den))
}

/// Reference limit covariance of the edge-type vector.
pub fn reference_sigma(model: Model) -> QMatrix {
    match model {
        Model::Yhk => qm(
            &[
                &[276, -388, 138, -26],
                &[-388, 724, -194, -142],
                &[138, -194, 69, -13],
                &[-26, -142, -13, 181],
            ],
            1260,
        ),
        Model::Pda => qm(
            &[
                &[12, -12, 6, -6, -6, 6],
                &[-12, 28, -6, -10, 14, -14],
                &[6, -6, 3, -3, -3, 3],
                &[-6, -10, -3, 19, -5, 5],
                &[-6, 14, -3, -5, 7, -7],
                &[6, -14, 3, 5, -7, 7],
            ],
            64,
        ),
    }
}

/// Reference limit covariance of the standardized (A, B).
pub fn reference_sigma_ab(model: Model) -> QMatrix {
    match model {
        Model::Yhk => qm(&[&[69, -28], &[-28, 56]], 1260),
        Model::Pda => qm(&[&[3, 0], &[0, 4]], 64),
    }
}

fn check(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

fn models_for(suite: Suite) -> Vec<Model> {
    match suite {
        Suite::Yhk => vec![Model::Yhk],
        Suite::Pda => vec![Model::Pda],
        _ => vec![Model::Yhk, Model::Pda],
    }
}

pub fn run_suite(suite: Suite, scale: &Scale) -> Result<VerifyReport> {
    run_suite_with(suite, scale, spectral::sigma)
}

pub fn run_suite_with(suite: Suite, scale: &Scale, sigma_fn: SigmaFn) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    let spectral = matches!(suite, Suite::Spectral | Suite::All);
    let urn = matches!(suite, Suite::Urn | Suite::All);
    let campaigns = matches!(suite, Suite::Yhk | Suite::Pda | Suite::All);
    if spectral {
        for model in models_for(suite) {
            checks.extend(spectral_checks(model, sigma_fn)?);
        }
    }
    if urn {
        for model in models_for(suite) {
            checks.extend(urn_checks(model, scale)?);
        }
    }
    if campaigns {
        if suite != Suite::Pda {
            checks.push(unrooted_split_check(scale)?);
        }
        for model in models_for(suite) {
            checks.push(oracle_check(model)?);
            checks.push(slln_check(model, scale)?);
            checks.extend(clt_checks(model, scale, sigma_fn)?);
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        version: env!("CARGO_PKG_VERSION").into(),
        rng_algorithm: rng::RNG_ALGORITHM.into(),
        suite,
        scale: scale.clone(),
        checks,
        passed,
    })
}

fn spectral_checks(model: Model, sigma_fn: SigmaFn) -> Result<Vec<Check>> {
    let name = model.name();
    let sd = builtin_spectral(model);
    let r = model.replacement().to_qmatrix();
    let mut out = Vec::new();

    let residual_zero = spectral::is_zero_matrix(&sd.residual(&r));
    let biorth_zero = spectral::is_zero_matrix(&sd.biorthogonality_defect());
    out.push(check(
        format!("{name}: exact eigendecomposition"),
        residual_zero && biorth_zero,
        format!("R U = U diag(lambda): {residual_zero}, V U = I: {biorth_zero}"),
    ));

    let numeric = diagonalize_numeric(&r.to_f64());
    let expected: Vec<f64> = sd.eigenvalues.iter().map(|x| x.to_f64()).collect();
    let (ok, detail) = match numeric {
        Ok(nd) => {
            let mut got = nd.eigenvalues.clone();
            got.sort_by(|a, b| b.total_cmp(a));
            let err = got
                .iter()
                .zip(&expected)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            (got.len() == expected.len() && err <= 1e-8, format!("eigenvalues {got:?}, max error {err:.2e}"))
        }
        Err(e) => (false, e.to_string()),
    };
    out.push(check(format!("{name}: numeric eigenvalues"), ok, detail));

    let sigma = sigma_fn(&sd)?;
    let reference = reference_sigma(model);
    out.push(check(
        format!("{name}: limit covariance"),
        sigma == reference,
        format!("common denominator {}", sigma.common_denominator().0),
    ));
    let ab = project_ab(&sigma)?;
    out.push(check(
        format!("{name}: (A, B) covariance"),
        ab == reference_sigma_ab(model),
        format!("{:?}", ab.to_strings()),
    ));
    Ok(out)
}

fn urn_checks(model: Model, scale: &Scale) -> Result<Vec<Check>> {
    let name = model.name();
    let r = model.replacement();
    let mut out = Vec::new();
    let rep = check_assumptions(&r);
    out.push(check(
        format!("{name}: urn assumptions"),
        rep.passes(),
        rep.messages.join("; "),
    ));

    // Trees grown step by step against the urn driven by the drawn types.
    let kind = ProcessKind { model, rooted: true };
    let seed = PhyloTree::two_leaf();
    let d = model.dim();
    let mut mismatches = 0u64;
    let mut first = String::new();
    for k in 0..scale.coupling_traces {
        let (_, trace) = generate(kind, &seed, scale.coupling_n, scale.base_seed, k)?;
        let colors: Vec<usize> = trace
            .steps
            .iter()
            .map(|s| s.edge_type.map(|t| t as usize - 1).unwrap_or(usize::MAX))
            .collect();
        let start = UrnState::from_u64(&seed.classify_all_edges()?.0[..d]);
        let traj = match run_forced(&start, &r, &colors) {
            Ok(t) => t,
            Err(e) => {
                mismatches += 1;
                if first.is_empty() {
                    first = format!("trace {k}: {e}");
                }
                continue;
            }
        };
        let mut tree = seed.clone();
        for (i, step) in trace.steps.iter().enumerate() {
            tree.attach_leaf(step.edge, step.taxon)?;
            let counts: Vec<i64> = tree.classify_all_edges()?.0[..d].iter().map(|&c| c as i64).collect();
            if counts != traj.states[i + 1].counts {
                mismatches += 1;
                if first.is_empty() {
                    first = format!("trace {k} step {}: tree {counts:?} urn {:?}", i + 1, traj.states[i + 1].counts);
                }
                break;
            }
        }
    }
    out.push(check(
        format!("{name}: urn/tree coupling"),
        mismatches == 0,
        format!("{} traces to n = {}, {mismatches} mismatches {first}", scale.coupling_traces, scale.coupling_n),
    ));

    // Partial sums of squared b-coefficients.
    let sd = builtin_spectral(model);
    let eigs: Vec<f64> = sd.eigenvalues.iter().map(|x| x.to_f64()).collect();
    let s = eigs[0];
    let t0 = PhyloTree::two_leaf().classify_all_edges()?.0[..d].iter().sum::<u64>() as f64;
    let pairs: &[(usize, usize)] = match model {
        Model::Yhk => &[(3, 3), (3, 4), (4, 4)],
        Model::Pda => &[(5, 5), (5, 6), (6, 6)],
    };
    for &(i, j) in pairs {
        let sum = b_second_moment_sum(scale.bsum_n, i, j, &eigs, t0)?;
        let target = s / (s - eigs[i - 1] - eigs[j - 1]);
        let err = (sum - target).abs();
        out.push(check(
            format!("{name}: b-coefficient sum ({i},{j})"),
            err <= 1e-2,
            format!("n = {}: {sum:.6} vs {target:.6}, error {err:.2e}", scale.bsum_n),
        ));
    }
    Ok(out)
}

fn oracle_check(model: Model) -> Result<Check> {
    let mut bad = Vec::new();
    for n in 7..=10 {
        let e = enumerate_exact(model, &PhyloTree::two_leaf(), n, DEFAULT_ENUMERATION_CAP)?;
        let from_pmf = MomentSet::from_pmf(model, &e.ab);
        if from_pmf != closed_form_moments(model, n)? {
            bad.push(n);
        }
    }
    Ok(check(
        format!("{}: enumeration vs closed-form moments, n = 7..10", model.name()),
        bad.is_empty(),
        if bad.is_empty() { "all equal".into() } else { format!("differ at n = {bad:?}") },
    ))
}

fn slln_check(model: Model, scale: &Scale) -> Result<Check> {
    let kind = ProcessKind { model, rooted: true };
    let mut r = rng::stream(scale.base_seed, u64::MAX);
    let t = grow_tracked(kind, &PhyloTree::two_leaf(), scale.slln_n, &mut r)?;
    let counts = t.counts().expect("rooted classification");
    let rate = spectral::limit_rate(&builtin_spectral(model));
    let err = rate
        .iter()
        .enumerate()
        .map(|(i, r)| (counts[i] as f64 / scale.slln_n as f64 - r.to_f64()).abs())
        .fold(0.0f64, f64::max);
    Ok(check(
        format!("{}: strong law at n = {}", model.name(), scale.slln_n),
        err <= 0.01,
        format!("max |X/n - s v1| = {err:.4}"),
    ))
}

fn clt_checks(model: Model, scale: &Scale, sigma_fn: SigmaFn) -> Result<Vec<Check>> {
    let name = model.name();
    let theory = move |m: Model| -> Matrix<f64> {
        sigma_fn(&builtin_spectral(m))
            .map(|s| s.to_f64())
            .unwrap_or_else(|_| Matrix::zeros(m.dim(), m.dim()))
    };
    let mut cfg = CampaignConfig::new(model, scale.clt_n, scale.clt_replicates);
    cfg.base_seed = scale.base_seed;
    cfg.stats = vec![Statistic::Ab];
    let res = harness::run_campaign_with(&cfg, &theory)?;
    let mut out = Vec::new();
    for t in &res.tests {
        let label = match t.test {
            CampaignTest::Mean => "standardized (A, B) mean",
            CampaignTest::Covariance => "standardized (A, B) covariance",
            CampaignTest::Normality => "Mahalanobis KS",
        };
        out.push(check(
            format!("{name}: {label}, n = {}, N = {}", scale.clt_n, scale.clt_replicates),
            t.passed,
            format!("{:.4} vs threshold {:.4}", t.value, t.threshold),
        ));
    }

    cfg.tests = vec![CampaignTest::Covariance];
    let report = harness::initial_tree_independence_with(&cfg, &["t2".into(), "t1".into()], &theory)?;
    let detail = report
        .seeds
        .iter()
        .map(|s| format!("{}: {:.4}", s.seed_tree, s.cov_rel_error))
        .collect::<Vec<_>>()
        .join(", ");
    out.push(check(
        format!("{name}: covariance from 2- and 7-leaf seeds"),
        report.seeds.iter().all(|s| s.cov_passed),
        detail,
    ));
    Ok(out)
}

fn unrooted_split_check(scale: &Scale) -> Result<Check> {
    let kind = ProcessKind::YHK_ROOTED;
    let seed = PhyloTree::two_leaf();
    let mut hits = 0u64;
    for k in 0..scale.split_runs {
        let mut r = rng::stream(scale.base_seed ^ 0x5eed, k);
        let t = grow_tracked(kind, &seed, 6, &mut r)?;
        let alpha = t.tree().unroot()?.classify_pendant_edges()?;
        if alpha.0 == [4, 0, 2, 0] {
            hits += 1;
        }
    }
    let n = scale.split_runs as f64;
    let p = 0.8;
    let se = (p * (1.0 - p) / n).sqrt();
    let freq = hits as f64 / n;
    Ok(check(
        "yhk: unrooted 6-leaf split",
        (freq - p).abs() <= 3.0 * se,
        format!("frequency {freq:.5} over {} runs, SE {se:.5}", scale.split_runs),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn broken_sigma(sd: &SpectralData<BigRational>) -> Result<QMatrix> {
        // Drops the s factor.
        let s = sd.s().clone();
        Ok(spectral::sigma(sd)?.scale(&(BigRational::from_integer(1.into()) / s)))
    }

    #[test]
    fn spectral_suite_passes() {
        let rep = run_suite(Suite::Spectral, &Scale::quick()).unwrap();
        assert!(rep.passed, "{rep:#?}");
        assert_eq!(rep.checks.len(), 8);
    }

    #[test]
    fn urn_suite_passes() {
        let rep = run_suite(Suite::Urn, &Scale::quick()).unwrap();
        assert!(rep.passed, "{rep:#?}");
    }

    #[test]
    fn broken_sigma_is_caught() {
        let rep = run_suite_with(Suite::Spectral, &Scale::quick(), broken_sigma).unwrap();
        assert!(!rep.passed);
        let failed: Vec<_> = rep.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        assert!(failed.iter().any(|n| n.contains("pda: limit covariance")), "{failed:?}");
    }

    #[test]
    fn suite_names_parse() {
        assert_eq!("ALL".parse::<Suite>().unwrap(), Suite::All);
        assert!("nope".parse::<Suite>().is_err());
    }
}

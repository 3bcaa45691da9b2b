use std::io::Write;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::json;

use urnphylo::exact::{closed_form_moments, enumerate_exact, MomentSet};
use urnphylo::harness::{resolve_seed_tree, run_campaign, CampaignConfig};
use urnphylo::linalg::fmt_q;
use urnphylo::spectral::SpectralReport;
use urnphylo::urn::{check_assumptions, run, run_final, ReplacementMatrix, UrnState};
use urnphylo::verify::{run_suite, Scale, Suite};
use urnphylo::{generate as grow, Model, PhyloTree, ProcessKind};

use crate::config::{resolve, to_toml, Metadata};
use crate::{overrides, CliError, EnumerateArgs, GenerateArgs, SimulateArgs, SpectralArgs, UrnRunArgs, VerifyArgs};

fn yes() -> bool {
    true
}

fn one() -> u64 {
    1
}

fn print_config<T: Serialize>(settings: &T) -> Result<(), CliError> {
    print!("{}", to_toml(settings)?);
    Ok(())
}

fn print_json(value: &serde_json::Value) -> Result<(), CliError> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn default_seed_tree(rooted: bool) -> &'static str {
    if rooted {
        "t2"
    } else {
        "star3"
    }
}

fn seed_tree(spec: &Option<String>, rooted: bool) -> Result<PhyloTree, CliError> {
    let t = resolve_seed_tree(spec.as_deref().unwrap_or(default_seed_tree(rooted)))?;
    if t.is_rooted() != rooted {
        return Err(CliError::Config(format!(
            "seed tree is {} but --{} was requested",
            if t.is_rooted() { "rooted" } else { "unrooted" },
            if rooted { "rooted" } else { "unrooted" }
        )));
    }
    Ok(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum TreeFormat {
    Newick,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateSettings {
    model: Model,
    #[serde(default = "yes")]
    rooted: bool,
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed_tree: Option<String>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "one")]
    count: u64,
    #[serde(default = "newick")]
    format: TreeFormat,
    #[serde(default)]
    no_stats: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trace: Option<PathBuf>,
}

fn newick() -> TreeFormat {
    TreeFormat::Newick
}

#[derive(Serialize)]
struct TreeRecord {
    replicate: u64,
    newick: String,
    leaves: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<u64>,
    /// Counts of E1..E6.
    #[serde(skip_serializing_if = "Option::is_none")]
    edge_types: Option<Vec<u64>>,
}

pub fn generate(args: GenerateArgs) -> Result<(), CliError> {
    let no_stats = args.no_stats.then_some(true);
    let format = args.format.clone();
    let s: GenerateSettings = resolve(
        args.config.as_deref(),
        overrides! {
            "model" => args.model,
            "rooted" => args.rooting.value(),
            "n" => args.n,
            "seed_tree" => args.seed_tree,
            "seed" => args.seed,
            "count" => args.count,
            "format" => format,
            "no_stats" => no_stats,
            "trace" => args.trace,
        },
    )?;
    if args.print_config {
        return print_config(&s);
    }
    if !s.rooted && s.n < 6 && !s.no_stats {
        return Err(CliError::Config(
            "edge statistics are undefined for unrooted trees below 6 leaves; pass --no-stats".into(),
        ));
    }
    let seed = seed_tree(&s.seed_tree, s.rooted)?;
    let kind = ProcessKind {
        model: s.model,
        rooted: s.rooted,
    };
    let meta = Metadata::new("generate", Some(s.seed), &s)?;
    let mut records = Vec::new();
    for rep in 0..s.count {
        let (tree, trace) = grow(kind, &seed, s.n, s.seed, rep)?;
        if rep == 0 {
            if let Some(path) = &s.trace {
                let f = std::fs::File::create(path)?;
                trace.write_jsonl(std::io::BufWriter::new(f))?;
            }
        }
        let (a, b, edge_types) = if s.no_stats {
            (None, None, None)
        } else {
            let v = tree.classify_all_edges()?;
            (Some(v.pitchforks()), Some(v.cherries()), Some(v.0))
        };
        records.push(TreeRecord {
            replicate: rep,
            newick: tree.to_newick(),
            leaves: tree.leaf_count(),
            a,
            b,
            edge_types,
        });
    }
    match s.format {
        TreeFormat::Json => print_json(&json!({ "metadata": meta, "config": s, "trees": records })),
        TreeFormat::Newick => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "# {}", serde_json::to_string(&meta)?)?;
            for r in &records {
                writeln!(out, "{}", r.newick)?;
                if let (Some(a), Some(b), Some(v)) = (r.a, r.b, &r.edge_types) {
                    writeln!(out, "# A={a} B={b} edge_types={v:?}")?;
                }
            }
            Ok(())
        }
    }
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let cfg: CampaignConfig = resolve(
        args.config.as_deref(),
        overrides! {
            "model" => args.model,
            "rooted" => args.rooting.value(),
            "n" => args.n,
            "replicates" => args.replicates,
            "seed_tree" => args.seed_tree,
            "base_seed" => args.seed,
            "raw_dump" => args.raw_dump,
        },
    )?;
    if args.print_config {
        return print_config(&cfg);
    }
    let meta = Metadata::new("simulate", Some(cfg.base_seed), &cfg)?;
    let result = run_campaign(&cfg)?;
    let doc = json!({ "metadata": meta, "config": cfg, "result": result });
    match &args.out {
        Some(path) => std::fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?,
        None => print_json(&doc)?,
    }
    for t in &result.tests {
        eprintln!(
            "{} {:?}/{}: {:.4} vs {:.4}{}",
            if t.passed { "PASS" } else { "FAIL" },
            t.test,
            t.statistic.name(),
            t.value,
            t.threshold,
            if t.gating { "" } else { " (diagnostic)" }
        );
    }
    if result.passed {
        Ok(())
    } else {
        Err(CliError::Failed("campaign tests failed".into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum TableFormat {
    Json,
    Csv,
}

fn json_format() -> TableFormat {
    TableFormat::Json
}

fn default_cap() -> usize {
    urnphylo::exact::DEFAULT_ENUMERATION_CAP
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnumerateSettings {
    model: Model,
    #[serde(default = "yes")]
    rooted: bool,
    n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed_tree: Option<String>,
    #[serde(default = "default_cap")]
    cap: usize,
    #[serde(default = "json_format")]
    format: TableFormat,
}

fn moments_json(m: &MomentSet) -> serde_json::Value {
    let [ea, eb, va, vb, c] = m.to_strings();
    json!({ "mean_a": ea, "mean_b": eb, "var_a": va, "var_b": vb, "cov_ab": c })
}

pub fn enumerate(args: EnumerateArgs) -> Result<(), CliError> {
    let s: EnumerateSettings = resolve(
        args.config.as_deref(),
        overrides! {
            "model" => args.model,
            "rooted" => args.rooting.value(),
            "n" => args.n,
            "seed_tree" => args.seed_tree,
            "cap" => args.cap,
            "format" => args.format,
        },
    )?;
    if args.print_config {
        return print_config(&s);
    }
    let seed = seed_tree(&s.seed_tree, s.rooted)?;
    let meta = Metadata::new("enumerate", None, &s)?;
    let e = enumerate_exact(s.model, &seed, s.n, s.cap)?;
    if s.format == TableFormat::Csv {
        let mut out = std::io::stdout().lock();
        writeln!(out, "# {}", serde_json::to_string(&meta)?)?;
        e.ab.write_csv(&mut out)?;
        return Ok(());
    }
    let ab: Vec<_> = e
        .ab
        .probs
        .iter()
        .map(|((a, b), p)| json!({ "a": a, "b": b, "p": fmt_q(p) }))
        .collect();
    let edge_types: Vec<_> = e
        .edge_types
        .iter()
        .map(|(v, p)| json!({ "edge_types": v.0, "p": fmt_q(p) }))
        .collect();
    let enumerated = MomentSet::from_pmf(s.model, &e.ab);
    // The closed forms describe growth from the two-leaf tree.
    let closed = if s.rooted && seed.leaf_count() == 2 {
        closed_form_moments(s.model, s.n).ok()
    } else {
        None
    };
    print_json(&json!({
        "metadata": meta,
        "config": s,
        "shapes": e.shapes.len(),
        "total": fmt_q(&e.ab.total()),
        "ab": ab,
        "edge_types": edge_types,
        "moments": moments_json(&enumerated),
        "closed_form": closed.as_ref().map(moments_json),
        "closed_form_agrees": closed.as_ref().map(|c| *c == enumerated),
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpectralSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model: Option<Model>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<String>,
}

fn parse_matrix(text: &str) -> Result<ReplacementMatrix, CliError> {
    let rows: Vec<Vec<i64>> = text
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<i64>()
                        .map_err(|e| CliError::Config(format!("matrix entry '{}': {e}", x.trim())))
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    Ok(ReplacementMatrix::from_rows(&rows)?)
}

fn pick_matrix(model: Option<Model>, matrix: &Option<String>) -> Result<(String, ReplacementMatrix), CliError> {
    match (model, matrix) {
        (Some(m), None) => Ok((m.name().into(), m.replacement())),
        (None, Some(text)) => Ok(("custom".into(), parse_matrix(text)?)),
        _ => Err(CliError::Config("give exactly one of --model and --matrix".into())),
    }
}

pub fn spectral(args: SpectralArgs) -> Result<(), CliError> {
    let s: SpectralSettings = resolve(
        args.config.as_deref(),
        overrides! { "model" => args.model, "matrix" => args.matrix },
    )?;
    if args.print_config {
        return print_config(&s);
    }
    let (name, r) = pick_matrix(s.model, &s.matrix)?;
    let meta = Metadata::new("spectral", None, &s)?;
    let assumptions = check_assumptions(&r);
    let report = match s.model {
        Some(m) => SpectralReport::exact(m),
        None => SpectralReport::numeric(&name, &r)?,
    };
    print_json(&json!({
        "metadata": meta,
        "config": s,
        "replacement": r.rows(),
        "assumptions": assumptions,
        "spectral": report,
    }))
}

fn csv_format() -> TableFormat {
    TableFormat::Csv
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UrnRunSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model: Option<Model>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start: Option<Vec<i64>>,
    steps: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    replicate: u64,
    #[serde(default = "csv_format")]
    format: TableFormat,
}

pub fn urn_run(args: UrnRunArgs) -> Result<(), CliError> {
    let start: Option<Vec<i64>> = args
        .start
        .as_deref()
        .map(|t| {
            t.split(',')
                .map(|x| x.trim().parse::<i64>().map_err(|e| CliError::Config(format!("start entry '{x}': {e}"))))
                .collect()
        })
        .transpose()?;
    let s: UrnRunSettings = resolve(
        args.config.as_deref(),
        overrides! {
            "model" => args.model,
            "matrix" => args.matrix,
            "start" => start,
            "steps" => args.steps,
            "seed" => args.seed,
            "replicate" => args.replicate,
            "format" => args.format,
        },
    )?;
    if args.print_config {
        return print_config(&s);
    }
    let (_, r) = pick_matrix(s.model, &s.matrix)?;
    let start = match (&s.start, s.model) {
        (Some(v), _) => UrnState::new(v.clone())?,
        // The urn of a model starts from the two-leaf tree.
        (None, Some(m)) => UrnState::from_u64(&PhyloTree::two_leaf().classify_all_edges()?.0[..m.dim()]),
        (None, None) => return Err(CliError::Config("--start is required with --matrix".into())),
    };
    if start.dim() != r.dim() {
        return Err(CliError::Config(format!(
            "start has {} colours, matrix has {}",
            start.dim(),
            r.dim()
        )));
    }
    let meta = Metadata::new("urn-run", Some(s.seed), &s)?;
    let mut rng = urnphylo::rng::stream(s.seed, s.replicate);
    match s.format {
        TableFormat::Csv => {
            let traj = run(&start, &r, s.steps, &mut rng)?;
            let mut out = std::io::stdout().lock();
            writeln!(out, "# {}", serde_json::to_string(&meta)?)?;
            traj.write_csv(&mut out)?;
            Ok(())
        }
        TableFormat::Json => {
            let fin = run_final(&start, &r, s.steps, &mut rng)?;
            print_json(&json!({
                "metadata": meta,
                "config": s,
                "final": fin.counts,
                "total": fin.total(),
            }))
        }
    }
}

fn full() -> String {
    "full".into()
}

fn all() -> String {
    "all".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifySettings {
    #[serde(default = "all")]
    suite: String,
    #[serde(default = "full")]
    scale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    report: Option<PathBuf>,
}

pub fn verify(args: VerifyArgs) -> Result<(), CliError> {
    let s: VerifySettings = resolve(
        args.config.as_deref(),
        overrides! {
            "suite" => args.suite,
            "scale" => args.scale,
            "seed" => args.seed,
            "report" => args.report,
        },
    )?;
    if args.print_config {
        return print_config(&s);
    }
    let suite: Suite = s.suite.parse()?;
    let mut scale = match s.scale.as_str() {
        "full" => Scale::full(),
        "quick" => Scale::quick(),
        other => return Err(CliError::Config(format!("unknown scale '{other}'"))),
    };
    if let Some(seed) = s.seed {
        scale.base_seed = seed;
    }
    let meta = Metadata::new("verify", Some(scale.base_seed), &s)?;
    let report = run_suite(suite, &scale)?;
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if let Some(path) = &s.report {
        let doc = json!({ "metadata": meta, "config": s, "report": report });
        std::fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
    }
    if report.passed {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "{} of {} checks failed",
            report.checks.iter().filter(|c| !c.passed).count(),
            report.checks.len()
        )))
    }
}

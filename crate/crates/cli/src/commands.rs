use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lgw_core::cvae::{self, Checkpoint, CvaeModel, TrainConfig};
use lgw_core::dataset::Label;
use lgw_core::geometry::{
    binary_labels, cluster_size, consistency_ratio, convex_combination_test, interpolate,
    pca_project, render_projection_csv, render_scatter_svg, ArithOp, Labeler, Neighborhood, TraversalPlan, TreeLeaf,
};
use lgw_core::guided::{flip_ratio, FlipTarget, GuidedTraversal};
use lgw_core::ingest::{self, DataFormat, ReportFormat};
use lgw_core::learners::{DecisionTree, ForestParams, TreeParams};
use lgw_core::metrics::{run_all_metrics, MetricKind, MetricsConfig};
use lgw_core::synth::{centroid_labeler, generate, CentroidLabeler, Layout, SynthSpec};
use lgw_core::{Error, Factor, FactorSchema, LatentDataset, MetricReport, Seed};
use rand::seq::SliceRandom;
use rand::Rng;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::{
    ArithArgs, CliError, GuidedArgs, InputArgs, InterpolateArgs, LayoutArg, MetricsArgs, OutFormat, ProjectArgs,
    SynthArgs, TrainVaeArgs, TraverseArgs, TreeArgs,
};

type CliResult<T> = Result<T, CliError>;

fn require_seed(seed: Option<u64>) -> CliResult<Seed> {
    seed.map(Seed)
        .ok_or_else(|| CliError::usage("--seed is required for this command"))
}

fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct Loaded {
    schema: FactorSchema,
    ds: LatentDataset,
    sha: String,
}

fn load(input: &InputArgs) -> CliResult<Loaded> {
    let schema = input.schema.as_deref().map(ingest::load_schema).transpose()?;
    let (schema, ds) = ingest::load_dataset(&input.input, None, schema.as_ref())?;
    let mut sha = sha256_file(&input.input)?;
    if let Some(p) = &input.schema {
        sha = format!("{sha}+{}", sha256_file(p)?);
    }
    Ok(Loaded { schema, ds, sha })
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e).into())
}

/// Explicit `--format`, else the extension of `out`, else `fallback`.
fn resolve_format(explicit: Option<OutFormat>, out: &Path, allowed: &[OutFormat], fallback: OutFormat) -> CliResult<OutFormat> {
    let fmt = explicit.unwrap_or_else(|| {
        match out.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("json") => OutFormat::Json,
            Some("csv") => OutFormat::Csv,
            Some("svg") => OutFormat::Svg,
            Some("jsonl") => OutFormat::Jsonl,
            _ => fallback,
        }
    });
    if !allowed.contains(&fmt) {
        return Err(CliError::usage(format!(
            "format {fmt:?} is not available here; choose one of {allowed:?}"
        )));
    }
    Ok(fmt)
}

fn report_format(f: OutFormat) -> ReportFormat {
    match f {
        OutFormat::Csv => ReportFormat::Csv,
        _ => ReportFormat::Json,
    }
}

/// Prints the resolved configuration as one JSON line.
fn announce(command: &str, seed: Option<Seed>, config: Value) {
    let line = json!({"command": command, "seed": seed.map(|s| s.0), "config": config});
    println!("{line}");
}

fn report_config(report: &MetricReport) -> Value {
    Value::Object(
        report
            .config
            .iter()
            .map(|c| (c.key.clone(), Value::String(c.value.clone())))
            .collect::<Map<_, _>>(),
    )
}

fn write_report(report: &MetricReport, out: &Path, fmt: OutFormat) -> CliResult<()> {
    report.validate()?;
    write_file(out, &ingest::render_report(report, report_format(fmt)))
}

fn sample_index(ds: &LatentDataset, id: Option<u64>, default: usize) -> CliResult<usize> {
    match id {
        Some(id) => ds
            .samples()
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| Error::Data(format!("no sample with id {id}")).into()),
        None if default < ds.len() => Ok(default),
        None => Err(Error::Data(format!("dataset has only {} samples", ds.len())).into()),
    }
}

fn categorical<'a>(schema: &'a FactorSchema, name: &str) -> CliResult<&'a Factor> {
    schema
        .factor(name)
        .ok_or_else(|| Error::Schema(format!("unknown factor {name:?}")).into())
}

fn value_of(f: &Factor, value: &str) -> CliResult<usize> {
    f.value_index(value)
        .ok_or_else(|| Error::Schema(format!("{value:?} is not a value of {}", f.name)).into())
}

fn has_value(ds: &LatentDataset, i: usize, factor: &str, value: &str) -> bool {
    matches!(ds.samples()[i].labels.get(factor), Some(Label::Value(v)) if v == value)
}

fn labels_json(labeler: Option<&CentroidLabeler>, z: &[f64]) -> Value {
    labeler.map_or(Value::Null, |l| json!(l.label(z)))
}

pub fn synth(a: SynthArgs) -> CliResult<()> {
    let seed = require_seed(a.seed)?;
    let schema = match &a.schema {
        Some(p) => ingest::load_schema(p)?,
        None => FactorSchema::new(
            (0..a.factors)
                .map(|f| Factor::new(format!("f{f}"), (0..a.values).map(|v| format!("v{v}"))))
                .collect(),
        )?,
    };
    let layout = match a.layout {
        LayoutArg::Disentangled => Layout::Disentangled,
        LayoutArg::Rotated => Layout::Rotated,
        LayoutArg::Duplicated => Layout::Duplicated { copies: a.copies },
        LayoutArg::ShuffledLabels => Layout::ShuffledLabels,
        LayoutArg::Clusters => Layout::Clusters,
        LayoutArg::Cones => Layout::Cones,
    };
    let fmt = match resolve_format(a.format, &a.out, &[OutFormat::Jsonl, OutFormat::Csv], OutFormat::Jsonl)? {
        OutFormat::Csv => DataFormat::Csv,
        _ => DataFormat::Jsonl,
    };
    let spec = SynthSpec {
        schema,
        dim: a.dim,
        samples: a.samples,
        noise_std: a.noise,
        layout,
        seed,
    };
    let (schema, ds, truth) = generate(&spec)?;
    ingest::save_dataset(&a.out, fmt, &schema, &ds)?;
    let sidecar = sidecar_path(&a.out, "groundtruth.json");
    let mut text = serde_json::to_string_pretty(&truth).expect("ground truth serializes");
    text.push('\n');
    write_file(&sidecar, &text)?;
    announce(
        "synth",
        Some(seed),
        json!({
            "factors": schema.names().collect::<Vec<_>>(),
            "dim": a.dim,
            "samples": a.samples,
            "noise_std": a.noise,
            "layout": spec.layout,
            "gap": truth.gap,
            "format": format!("{fmt:?}").to_lowercase(),
        }),
    );
    Ok(())
}

/// `<dir>/<stem>.<suffix>` next to `out`.
fn sidecar_path(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn parse_max_features(s: &str) -> CliResult<Option<usize>> {
    match s {
        "all" => Ok(Some(usize::MAX)),
        "sqrt" => Ok(None),
        n => n
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| CliError::usage(format!("--forest-max-features takes all, sqrt or a positive count, got {n:?}"))),
    }
}

pub fn metrics(a: MetricsArgs) -> CliResult<()> {
    let seed = require_seed(a.seed)?;
    let fmt = resolve_format(a.format, &a.out, &[OutFormat::Json, OutFormat::Csv], OutFormat::Json)?;
    let kinds = if a.metrics == "all" {
        MetricKind::ALL.to_vec()
    } else {
        a.metrics
            .split(',')
            .map(|s| MetricKind::parse(s.trim()))
            .collect::<Result<Vec<_>, _>>()?
    };
    let cfg = MetricsConfig {
        metrics: kinds,
        bins: a.bins,
        normalized_mig: a.normalized_mig,
        raw_variance: a.raw_variance,
        test_fraction: a.test_fraction,
        forest: ForestParams {
            n_trees: a.trees,
            max_features: parse_max_features(&a.forest_max_features)?,
            ..ForestParams::default()
        },
        ..MetricsConfig::default()
    };
    let data = load(&a.input)?;
    let mut report = run_all_metrics(&data.ds, &data.schema, &cfg, seed)?;
    report.set_config("input_sha256", &data.sha);
    write_report(&report, &a.out, fmt)?;
    announce("metrics", Some(seed), report_config(&report));
    Ok(())
}

pub fn traverse(a: TraverseArgs) -> CliResult<()> {
    if a.guided {
        return traverse_guided(a);
    }
    let fmt = resolve_format(a.format, &a.out, &[OutFormat::Json, OutFormat::Csv], OutFormat::Json)?;
    let data = load(&a.input)?;
    let idx = sample_index(&data.ds, a.id, 0)?;
    let z = data.ds.samples()[idx].vector.clone();
    let mut plan = TraversalPlan::default_for(z.clone(), &data.ds.dim_stats())?;
    plan.steps = a.steps;
    if let Some(dims) = &a.dims {
        let dims = parse_dims(dims, data.ds.dim())?;
        plan = plan.restrict(&dims);
    }
    let runs = plan.run()?;
    let labeler = centroid_labeler(&data.ds, &data.schema).ok();
    let out = match fmt {
        OutFormat::Csv => {
            let factors: Vec<String> = labeler.as_ref().map(|l| l.factors()).unwrap_or_default();
            let mut s = String::from("dim,step,value");
            for f in &factors {
                s.push(',');
                s.push_str(f);
            }
            s.push('\n');
            for (d, vectors) in &runs {
                for (k, v) in vectors.iter().enumerate() {
                    s.push_str(&format!("{d},{k},{:?}", v[*d]));
                    let labels = labeler.as_ref().map(|l| l.label(v)).unwrap_or_default();
                    for f in &factors {
                        s.push(',');
                        s.push_str(labels.get(f).map_or("", String::as_str));
                    }
                    s.push('\n');
                }
            }
            s
        }
        _ => {
            let traversals: Vec<Value> = runs
                .iter()
                .map(|(d, vectors)| {
                    json!({
                        "dim": d,
                        "values": vectors.iter().map(|v| v[*d]).collect::<Vec<_>>(),
                        "labels": vectors.iter().map(|v| labels_json(labeler.as_ref(), v)).collect::<Vec<_>>(),
                    })
                })
                .collect();
            pretty(&json!({
                "input_sha256": data.sha,
                "sample_id": data.ds.samples()[idx].id,
                "z": z,
                "steps": plan.steps,
                "traversals": traversals,
            }))
        }
    };
    write_file(&a.out, &out)?;
    announce(
        "traverse",
        a.seed.map(Seed),
        json!({
            "input_sha256": data.sha,
            "sample_id": data.ds.samples()[idx].id,
            "steps": plan.steps,
            "dims": plan.ranges.iter().map(|r| r.0).collect::<Vec<_>>(),
            "range": "mean +- 2 std",
        }),
    );
    Ok(())
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn parse_dims(s: &str, dim: usize) -> CliResult<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .ok()
                .filter(|&d| d < dim)
                .ok_or_else(|| CliError::usage(format!("bad dimension {t:?} (dataset dim {dim})")))
        })
        .collect()
}

fn need<'a>(v: &'a Option<String>, flag: &str) -> CliResult<&'a str> {
    v.as_deref()
        .ok_or_else(|| CliError::usage(format!("{flag} is required with --guided")))
}

fn traverse_guided(a: TraverseArgs) -> CliResult<()> {
    let seed = require_seed(a.seed)?;
    let factor = need(&a.factor, "--factor")?;
    let from = need(&a.from, "--from")?;
    let to = need(&a.to, "--to")?;
    resolve_format(a.format, &a.out, &[OutFormat::Jsonl], OutFormat::Jsonl)?;
    let data = load(&a.input)?;
    let f = categorical(&data.schema, factor)?;
    value_of(f, from)?;
    let labels = binary_labels(&data.ds, &data.schema, factor, to)?;
    let traversal = GuidedTraversal::fit(&data.ds, &labels, &TreeParams::default(), seed)?;
    let idx = match a.id {
        Some(_) => sample_index(&data.ds, a.id, 0)?,
        None => (0..data.ds.len())
            .find(|&i| has_value(&data.ds, i, factor, from))
            .ok_or_else(|| Error::Data(format!("no sample has {factor} = {from}")))?,
    };
    let edit = traversal.traverse(&data.ds.samples()[idx].vector, 0, 1)?;
    write_file(&a.out, &edit.to_jsonl())?;
    announce(
        "traverse",
        Some(seed),
        json!({
            "input_sha256": data.sha,
            "guided": true,
            "factor": factor,
            "from": from,
            "to": to,
            "sample_id": data.ds.samples()[idx].id,
            "tree_depth": traversal.tree.depth(),
            "edited_dims": edit.edited_dims(),
        }),
    );
    Ok(())
}

/// Rows and class labels of the samples annotated for `factor`.
fn annotated_rows(loaded: &Loaded, factor: &str) -> CliResult<(Vec<usize>, Vec<usize>)> {
    let labels = loaded.ds.class_labels(&loaded.schema, factor)?;
    Ok(labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|c| (i, c)))
        .unzip())
}

pub fn interpolate_cmd(a: InterpolateArgs) -> CliResult<()> {
    let seed = if a.trials > 0 { Some(require_seed(a.seed)?) } else { a.seed.map(Seed) };
    let fmt = resolve_format(a.format, &a.out, &[OutFormat::Json, OutFormat::Csv], OutFormat::Json)?;
    let data = load(&a.input)?;
    let i1 = sample_index(&data.ds, a.from_id, 0)?;
    let i2 = sample_index(&data.ds, a.to_id, 1)?;
    let (z1, z2) = (&data.ds.samples()[i1].vector, &data.ds.samples()[i2].vector);
    let path = interpolate(z1, z2, a.step)?;
    let ts: Vec<f64> = (1..=path.len()).map(|k| k as f64 * a.step).collect();
    let labeler = centroid_labeler(&data.ds, &data.schema).ok();
    let mut warnings = Vec::new();

    let convexity = match seed.filter(|_| a.trials > 0) {
        None => Value::Null,
        Some(seed) => {
            let factor = match &a.factor {
                Some(f) => categorical(&data.schema, f)?.name.clone(),
                None => data
                    .schema
                    .factors()
                    .first()
                    .ok_or_else(|| Error::Schema("schema has no factors".into()))?
                    .name
                    .clone(),
            };
            let (rows, y) = annotated_rows(&data, &factor)?;
            let x: Vec<&[f64]> = rows.iter().map(|&i| data.ds.samples()[i].vector.as_slice()).collect();
            let tree = DecisionTree::fit(&x, &y, &TreeParams::default(), seed.derive(0))?;
            let leaf = tree.leaf_of(z1);
            let cluster: Vec<Vec<f64>> = x.iter().filter(|v| tree.leaf_of(v) == leaf).map(|v| v.to_vec()).collect();
            if cluster.len() < 2 {
                warnings.push(format!("leaf {leaf} holds {} sample(s); convexity check skipped", cluster.len()));
                json!({"factor": factor, "leaf": leaf, "cluster_size": cluster.len(), "trials": a.trials})
            } else {
                let same_leaf = convex_combination_test(&cluster, &TreeLeaf(&tree), a.trials, seed.derive(1))?;
                let same_class = convex_combination_test(&cluster, &tree, a.trials, seed.derive(1))?;
                json!({
                    "factor": factor,
                    "leaf": leaf,
                    "cluster_size": cluster.len(),
                    "trials": a.trials,
                    "same_leaf_fraction": same_leaf,
                    "same_class_fraction": same_class,
                })
            }
        }
    };

    let out = match fmt {
        OutFormat::Csv => {
            let factors: Vec<String> = labeler.as_ref().map(|l| l.factors()).unwrap_or_default();
            let mut s = String::from("t");
            for d in 0..data.ds.dim() {
                s.push_str(&format!(",z{d}"));
            }
            for f in &factors {
                s.push(',');
                s.push_str(f);
            }
            s.push('\n');
            for (t, v) in ts.iter().zip(&path) {
                s.push_str(&format!("{t:?}"));
                for x in v {
                    s.push_str(&format!(",{x:?}"));
                }
                let labels = labeler.as_ref().map(|l| l.label(v)).unwrap_or_default();
                for f in &factors {
                    s.push(',');
                    s.push_str(labels.get(f).map_or("", String::as_str));
                }
                s.push('\n');
            }
            s
        }
        _ => pretty(&json!({
            "input_sha256": data.sha,
            "from_id": data.ds.samples()[i1].id,
            "to_id": data.ds.samples()[i2].id,
            "step": a.step,
            "t": ts,
            "vectors": path,
            "labels": path.iter().map(|v| labels_json(labeler.as_ref(), v)).collect::<Vec<_>>(),
            "convexity": convexity,
            "warnings": warnings,
        })),
    };
    write_file(&a.out, &out)?;
    announce(
        "interpolate",
        seed,
        json!({
            "input_sha256": data.sha,
            "from_id": data.ds.samples()[i1].id,
            "to_id": data.ds.samples()[i2].id,
            "step": a.step,
            "intermediates": path.len(),
            "trials": a.trials,
        }),
    );
    Ok(())
}

pub fn arith(a: ArithArgs) -> CliResult<()> {
    let seed = require_seed(a.seed)?;
    let fmt = resolve_format(a.format, &a.out, &[OutFormat::Json, OutFormat::Csv], OutFormat::Json)?;
    let ops = a
        .ops
        .split(',')
        .map(|s| ArithOp::parse(s.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    if a.pairs == 0 {
        return Err(CliError::usage("--pairs must be positive"));
    }
    let data = load(&a.input)?;
    let f = categorical(&data.schema, &a.factor)?.clone();
    let labeler = centroid_labeler(&data.ds, &data.schema)?;
    if !labeler.factors().contains(&f.name) {
        return Err(Error::Data(format!("factor {} has no categorical annotations", f.name)).into());
    }
    let groups: Vec<Vec<usize>> = f
        .values
        .iter()
        .map(|v| (0..data.ds.len()).filter(|&i| has_value(&data.ds, i, &f.name, v)).collect())
        .collect();
    let eligible: Vec<usize> = groups.iter().filter(|g| g.len() >= 2).flatten().copied().collect();
    if eligible.is_empty() {
        return Err(Error::Data(format!("no value of {} has two samples", f.name)).into());
    }
    let mut rng = seed.derive(0).rng();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..a.pairs)
        .map(|_| {
            let i = eligible[rng.random_range(0..eligible.len())];
            let g = groups.iter().find(|g| g.contains(&i)).expect("eligible sample has a group");
            let j = loop {
                let j = g[rng.random_range(0..g.len())];
                if j != i {
                    break j;
                }
            };
            (data.ds.samples()[i].vector.clone(), data.ds.samples()[j].vector.clone())
        })
        .collect();
    let mut neighborhood = Neighborhood::from_stats(&data.ds.dim_stats());
    neighborhood.samples = a.neighborhood;

    let mut report = MetricReport::new();
    report.set_config("seed", seed.0);
    report.set_config("input_sha256", &data.sha);
    report.set_config("factor", &f.name);
    report.set_config("ops", ops.iter().map(|o| o.name()).collect::<Vec<_>>().join(","));
    report.set_config("pairs", a.pairs);
    report.set_config("neighborhood_samples", a.neighborhood);
    report.set_config("neighborhood_range", "mean +- 2 std, one dimension redrawn");
    report.set_config("labeler", "nearest_centroid");
    report.set_config("cluster_pair_samples", a.trials);
    let mut ratios = BTreeMap::new();
    for (k, op) in ops.iter().enumerate() {
        let r = consistency_ratio(&pairs, *op, &labeler, &f.name, &neighborhood, seed.derive(1 + k as u64))?;
        report.set_metric(format!("{}_consistency", op.name()), r.ratio);
        report.set_metric(format!("{}_evaluated", op.name()), r.evaluated as f64);
        report.set_metric(format!("{}_skipped", op.name()), r.skipped as f64);
        ratios.insert(op.name(), r.ratio);
    }
    if let (Some(add), Some(sub)) = (ratios.get("add"), ratios.get("sub")) {
        report.set_metric("add_minus_sub", add - sub);
    }
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for (v, g) in f.values.iter().zip(&groups) {
        let cluster: Vec<Vec<f64>> = g.iter().map(|&i| data.ds.samples()[i].vector.clone()).collect();
        if cluster.len() < 2 || a.trials == 0 {
            continue;
        }
        match cluster_size(&cluster, a.trials, seed.derive(1000 + rows.len() as u64)) {
            Ok(c) => {
                rows.push(v.clone());
                values.push(vec![c.max_cos_dist, c.min_cos_dist]);
            }
            Err(e) => report.warn(format!("cluster size for {v}: {e}")),
        }
    }
    report.add_table(
        "cluster_size",
        rows,
        vec!["max_cos_dist".into(), "min_cos_dist".into()],
        values,
    );
    write_report(&report, &a.out, fmt)?;
    announce("arith", Some(seed), report_config(&report));
    Ok(())
}

pub fn tree(a: TreeArgs) -> CliResult<()> {
    let seed = require_seed(a.seed)?;
    let fmt = resolve_format(a.format, &a.out, &[OutFormat::Json, OutFormat::Csv], OutFormat::Json)?;
    let data = load(&a.input)?;
    let f = categorical(&data.schema, &a.factor)?;
    let positive = match &a.positive {
        Some(p) => {
            value_of(f, p)?;
            p.clone()
        }
        None => f
            .values
            .first()
            .cloned()
            .ok_or_else(|| Error::Schema(format!("factor {} has no values", f.name)))?,
    };
    let labels = binary_labels(&data.ds, &data.schema, &f.name, &positive)?;
    let proxy = lgw_core::geometry::proxy_metrics(&data.ds, &labels, a.test_fraction, seed)?;
    let (rows, y): (Vec<usize>, Vec<usize>) = labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|c| (i, c)))
        .unzip();
    let x: Vec<&[f64]> = rows.iter().map(|&i| data.ds.samples()[i].vector.as_slice()).collect();
    let params = TreeParams {
        max_depth: a.max_depth,
        min_samples_leaf: a.min_samples_leaf,
        max_features: None,
    };
    let tree = DecisionTree::fit(&x, &y, &params, seed.derive(0))?;

    let mut report = MetricReport::new();
    report.set_config("seed", seed.0);
    report.set_config("input_sha256", &data.sha);
    report.set_config("factor", &f.name);
    report.set_config("positive", &positive);
    report.set_config("test_fraction", a.test_fraction);
    report.set_config("max_depth", a.max_depth.map_or("unlimited".to_string(), |d| d.to_string()));
    report.set_config("min_samples_leaf", a.min_samples_leaf);
    report.set_metric("separation", proxy.separation);
    report.set_metric("density", proxy.density);
    report.set_metric("depth", tree.depth() as f64);
    report.set_metric("leaves", tree.leaves().count() as f64);
    match tree.shortest_cross_path(0, 1) {
        Ok(p) => report.set_metric("cross_path_length", p.len() as f64),
        Err(e) => report.warn(format!("no cross path: {e}")),
    }
    report.add_table(
        "importance",
        vec![f.name.clone()],
        (0..data.ds.dim()).map(|d| format!("z{d}")).collect(),
        vec![tree.impurity_decrease()],
    );
    report.note(
        "reference separation/density on a trained sentence VAE: predicate 0.87/0.92, argument1 0.95/0.48, structure 0.58/0.55; not reproducible on synthetic data",
    );
    write_report(&report, &a.out, fmt)?;
    announce("tree", Some(seed), report_config(&report));
    Ok(())
}

pub fn guided(a: GuidedArgs) -> CliResult<()> {
    let seed = require_seed(a.seed)?;
    let fmt = resolve_format(a.format, &a.out, &[OutFormat::Json, OutFormat::Csv], OutFormat::Json)?;
    if a.trials == 0 {
        return Err(CliError::usage("--trials must be positive"));
    }
    let data = load(&a.input)?;
    let f = categorical(&data.schema, &a.factor)?;
    value_of(f, &a.from)?;
    value_of(f, &a.to)?;
    if a.from == a.to {
        return Err(CliError::usage("--from and --to must differ"));
    }
    let labels = binary_labels(&data.ds, &data.schema, &f.name, &a.to)?;
    let params = TreeParams {
        max_depth: a.max_depth,
        min_samples_leaf: a.min_samples_leaf,
        max_features: None,
    };
    let mut traversal = GuidedTraversal::fit(&data.ds, &labels, &params, seed.derive(0))?;
    traversal.edit.delta = a.delta;
    let mut candidates: Vec<usize> = (0..data.ds.len())
        .filter(|&i| has_value(&data.ds, i, &f.name, &a.from))
        .collect();
    if candidates.is_empty() {
        return Err(Error::Data(format!("no sample has {} = {}", f.name, a.from)).into());
    }
    candidates.shuffle(&mut seed.derive(1).rng());
    candidates.truncate(a.trials);
    let seeds: Vec<Vec<f64>> = candidates.iter().map(|&i| data.ds.samples()[i].vector.clone()).collect();
    let labeler = centroid_labeler(&data.ds, &data.schema)?;
    let target = FlipTarget {
        labeler: &labeler,
        factor: f.name.clone(),
        value: a.to.clone(),
    };
    let res = flip_ratio(&traversal, &seeds, 0, 1, &target)?;

    let mut report = MetricReport::new();
    report.set_config("seed", seed.0);
    report.set_config("input_sha256", &data.sha);
    report.set_config("factor", &f.name);
    report.set_config("from", &a.from);
    report.set_config("to", &a.to);
    report.set_config("trials", a.trials);
    report.set_config("delta", a.delta);
    report.set_config("interpretation", lgw_core::guided::INTERPRETATION);
    report.set_config("labeler", "nearest_centroid");
    report.set_config("max_depth", a.max_depth.map_or("unlimited".to_string(), |d| d.to_string()));
    report.set_config("min_samples_leaf", a.min_samples_leaf);
    report.set_metric("flip_ratio", res.ratio);
    report.set_metric("runs", res.runs as f64);
    report.set_metric("flipped", res.flipped as f64);
    report.set_metric("failures", res.failures as f64);
    let successful = res.runs - res.failures;
    if successful > 0 {
        report.set_metric("postcondition_rate", res.postcondition_held as f64 / successful as f64);
    } else {
        report.warn("no traversal succeeded");
    }
    report.set_metric("tree_depth", traversal.tree.depth() as f64);
    if candidates.len() < a.trials {
        report.warn(format!("only {} samples carry {} = {}", candidates.len(), f.name, a.from));
    }
    report.note("reference flip ratio on a trained sentence VAE: 0.71 over 100 seeds (cause -> mean); not reproducible on synthetic data");
    if let Some(path) = &a.edits {
        let mut s = String::new();
        for (i, e) in candidates.iter().zip(&res.edits) {
            s.push_str(&json!({"sample_id": data.ds.samples()[*i].id, "ok": e.is_some()}).to_string());
            s.push('\n');
            if let Some(e) = e {
                s.push_str(&e.to_jsonl());
            }
        }
        write_file(path, &s)?;
    }
    write_report(&report, &a.out, fmt)?;
    announce("guided", Some(seed), report_config(&report));
    Ok(())
}

pub fn train_vae(a: TrainVaeArgs) -> CliResult<()> {
    let seed = require_seed(a.seed)?;
    let data = load(&a.input)?;
    let cfg = TrainConfig {
        cycle_length: a.cycle,
        ramp_fraction: a.ramp,
        lambda: a.lambda,
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch,
        hidden: a.hidden,
        latent: a.latent,
        fixed_beta: None,
        seed: seed.0,
    };
    cfg.validate()?;
    let examples = cvae::examples_from_dataset(&data.ds, &data.schema);
    let model = CvaeModel::new(cvae::dims_for(&data.schema, a.hidden, a.latent), seed.derive(0))?;
    let outcome = cvae::train(model, &examples, &cfg)?;
    let mut ck = Checkpoint::new(&outcome, &cfg);
    ck.input_sha256 = Some(data.sha.clone());
    write_file(&a.out, &ck.to_json())?;
    let trace_path = a.trace.clone().unwrap_or_else(|| sidecar_path(&a.out, "trace.csv"));
    write_file(&trace_path, &cvae::trace_csv(&outcome.trace))?;
    let last = outcome.trace.last();
    announce(
        "train-vae",
        Some(seed),
        json!({
            "input_sha256": data.sha,
            "config": cfg,
            "steps": outcome.trace.len(),
            "final_total": last.map(|r| r.total),
            "final_kl_raw": last.map(|r| r.kl_raw),
            "diverged": outcome.diverged,
        }),
    );
    if let Some(msg) = outcome.diverged {
        return Err(CliError::Core(Error::Numerical(format!("training diverged at {msg}"))));
    }
    if let Some(p) = &a.latents {
        let z = cvae::posterior_means(&outcome.model, &data.ds, &data.schema)?;
        ingest::save_jsonl(p, &data.schema, &z)?;
    }
    Ok(())
}

pub fn project(a: ProjectArgs) -> CliResult<()> {
    let fmt = resolve_format(a.format, &a.out, &[OutFormat::Svg, OutFormat::Csv], OutFormat::Svg)?;
    let data = load(&a.input)?;
    let vectors: Vec<Vec<f64>> = data.ds.samples().iter().map(|s| s.vector.clone()).collect();
    let proj = pca_project(&vectors, 2)?;
    let (clusters, names): (Vec<usize>, Vec<String>) = match &a.factor {
        None => (vec![0; vectors.len()], vec!["all".to_string()]),
        Some(name) => {
            let f = categorical(&data.schema, name)?;
            let labels = data.ds.class_labels(&data.schema, &f.name)?;
            let mut names: Vec<String> = match data.ds.factor_kind(&f.name) {
                Some(lgw_core::dataset::FactorKind::Count) => {
                    let max = labels.iter().flatten().copied().max().unwrap_or(0);
                    (0..=max).map(|c| c.to_string()).collect()
                }
                _ => f.values.clone(),
            };
            let none = names.len();
            names.push("unannotated".into());
            (labels.iter().map(|l| l.unwrap_or(none)).collect(), names)
        }
    };
    let out = match fmt {
        OutFormat::Csv => {
            let per_point: Vec<String> = clusters.iter().map(|&c| names[c].clone()).collect();
            render_projection_csv(&data.ds.ids(), &proj.points, &per_point)
        }
        _ => render_scatter_svg(&proj.points, &clusters, &names)?,
    };
    write_file(&a.out, &out)?;
    announce(
        "project",
        None,
        json!({
            "input_sha256": data.sha,
            "components": 2,
            "explained_ratio": proj.explained_ratio,
            "factor": a.factor,
            "format": format!("{fmt:?}").to_lowercase(),
        }),
    );
    Ok(())
}

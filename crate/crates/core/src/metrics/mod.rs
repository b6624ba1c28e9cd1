//! The seven disentanglement metrics and the report that aggregates them.
//!
//! Every metric that needs a train/test split derives it from
//! `seed.derive(SPLIT_STREAM)`, so metrics run with the same seed share one
//! partition.

pub mod dci;
pub mod information;
pub mod report;
pub mod zdiff;
pub mod zminvar;

use serde::{Deserialize, Serialize};

use crate::dataset::{train_test_split, FactorSchema, LatentDataset, Seed};
use crate::error::{Error, Result};
use crate::learners::{ForestParams, LinearParams};

pub use dci::{
    completeness_score, dci_importance, disentanglement_score, informativeness_score, ForestImportance,
    InformativenessConfig, InformativenessResult,
};
pub use information::{
    entropy_binned, mig, modularity, modularity_from_mi, mutual_information_matrix, BinGrid, DimBins, MiMatrix,
    MigResult, ModularityResult, DEFAULT_BINS,
};
pub use report::MetricReport;
pub use zdiff::{z_diff_accuracy, ZDiffConfig, ZDiffResult};
pub use zminvar::{golden_factors, z_min_var_score, ZMinVarConfig, ZMinVarResult};

pub(crate) const SPLIT_STREAM: u64 = 0x5EED_5B11;

/// Sample indices per class, indexed by class; classes without samples give
/// empty groups.
pub(crate) fn value_groups(labels: &[Option<usize>]) -> Vec<Vec<usize>> {
    let n = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); n];
    for (i, l) in labels.iter().enumerate() {
        if let Some(c) = l {
            groups[*c].push(i);
        }
    }
    groups
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    ZDiff,
    ZMinVar,
    Mig,
    Modularity,
    Disentanglement,
    Completeness,
    Informativeness,
}

impl MetricKind {
    pub const ALL: [MetricKind; 7] = [
        MetricKind::ZDiff,
        MetricKind::ZMinVar,
        MetricKind::Mig,
        MetricKind::Modularity,
        MetricKind::Disentanglement,
        MetricKind::Completeness,
        MetricKind::Informativeness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::ZDiff => "z_diff",
            MetricKind::ZMinVar => "z_min_var",
            MetricKind::Mig => "mig",
            MetricKind::Modularity => "modularity",
            MetricKind::Disentanglement => "disentanglement",
            MetricKind::Completeness => "completeness",
            MetricKind::Informativeness => "informativeness",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub metrics: Vec<MetricKind>,
    pub bins: usize,
    /// Divide MIG gaps by the factor entropy.
    pub normalized_mig: bool,
    /// Report modularity on raw MI values as the headline number.
    pub raw_variance: bool,
    pub test_fraction: f64,
    pub z_diff: ZDiffConfig,
    pub z_min_var: ZMinVarConfig,
    pub forest: ForestParams,
    pub classifier: LinearParams,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            metrics: MetricKind::ALL.to_vec(),
            bins: DEFAULT_BINS,
            normalized_mig: false,
            raw_variance: false,
            test_fraction: 0.2,
            z_diff: ZDiffConfig::default(),
            z_min_var: ZMinVarConfig::default(),
            // sqrt(dim) candidates leak about half the importance mass to noise
            // dims on a 32-dim code with 4 informative dims
            forest: ForestParams::all_features(),
            classifier: LinearParams::default(),
        }
    }
}

fn dim_labels(dim: usize) -> Vec<String> {
    (0..dim).map(|d| format!("z{d}")).collect()
}

fn echo_config(report: &mut MetricReport, cfg: &MetricsConfig, seed: Seed) {
    report.set_config("seed", seed.0);
    report.set_config(
        "metrics",
        cfg.metrics.iter().map(|m| m.name()).collect::<Vec<_>>().join(","),
    );
    report.set_config("log_base", 2);
    report.set_config("bins", cfg.bins);
    report.set_config("test_fraction", cfg.test_fraction);
    report.set_config("mig_normalized", cfg.normalized_mig);
    report.set_config(
        "modularity_variance",
        if cfg.raw_variance { "raw" } else { "max_normalized" },
    );
    report.set_config("classifier", "multinomial_logistic");
    report.set_config("classifier_learning_rate", cfg.classifier.learning_rate);
    report.set_config("classifier_epochs", cfg.classifier.epochs);
    report.set_config("classifier_l2", cfg.classifier.l2);
    report.set_config("z_diff_batch", cfg.z_diff.batch_size);
    report.set_config("z_diff_train_points_per_factor", cfg.z_diff.train_points_per_factor);
    report.set_config("z_diff_test_points_per_factor", cfg.z_diff.test_points_per_factor);
    report.set_config("z_min_var_subsample", cfg.z_min_var.subsample);
    report.set_config("z_min_var_repeats", cfg.z_min_var.repeats);
    report.set_config("z_min_var_match", "argmax_vote");
    report.set_config("forest_trees", cfg.forest.n_trees);
    report.set_config(
        "forest_max_depth",
        cfg.forest.max_depth.map_or("unlimited".to_string(), |d| d.to_string()),
    );
    report.set_config("forest_min_samples_leaf", cfg.forest.min_samples_leaf);
    report.set_config("forest_max_features", cfg.forest.max_features_label());
}

/// Runs the selected metrics with one shared split and seed.
///
/// Metric-level failures become report warnings; only dataset-level
/// violations (an unsplittable dataset, bad configuration) are errors.
pub fn run_all_metrics(ds: &LatentDataset, schema: &FactorSchema, cfg: &MetricsConfig, seed: Seed) -> Result<MetricReport> {
    let mut report = MetricReport::new();
    echo_config(&mut report, cfg, seed);
    let (train, _) = train_test_split(ds, cfg.test_fraction, seed.derive(SPLIT_STREAM))?;
    let wants = |k: MetricKind| cfg.metrics.contains(&k);

    if wants(MetricKind::ZDiff) {
        let zc = ZDiffConfig {
            test_fraction: cfg.test_fraction,
            classifier: cfg.classifier.clone(),
            ..cfg.z_diff.clone()
        };
        match z_diff_accuracy(ds, schema, &zc, seed.derive(1)) {
            Ok(r) => {
                report.set_metric("z_diff_accuracy", r.accuracy_percent);
                if r.degenerate {
                    report.warn("z_diff: fewer than two usable factors; accuracy is trivially 100");
                }
                r.skipped.into_iter().for_each(|s| report.warn(format!("z_diff: {s}")));
            }
            Err(e) => report.warn(format!("z_diff: {e}")),
        }
    }

    if wants(MetricKind::ZMinVar) {
        let zc = ZMinVarConfig {
            test_fraction: cfg.test_fraction,
            ..cfg.z_min_var.clone()
        };
        match z_min_var_score(ds, schema, &zc, seed.derive(2)) {
            Ok(r) => {
                report.set_metric("z_min_var", r.score);
                report.add_table(
                    "z_min_var_votes",
                    dim_labels(ds.dim()),
                    r.factors.clone(),
                    r.vote_table.iter().map(|row| row.iter().map(|&c| c as f64).collect()).collect(),
                );
                report.add_table(
                    "z_min_var_per_factor",
                    r.factors.clone(),
                    vec!["accuracy".into()],
                    r.per_factor.iter().map(|&a| vec![a]).collect(),
                );
                r.skipped.into_iter().for_each(|s| report.warn(format!("z_min_var: {s}")));
            }
            Err(e) => report.warn(format!("z_min_var: {e}")),
        }
    }

    if wants(MetricKind::Mig) || wants(MetricKind::Modularity) {
        match mutual_information_matrix(ds, schema, cfg.bins) {
            Ok(mi) => {
                mi.skipped.iter().for_each(|s| report.warn(format!("mutual_information: {s}")));
                report.add_table("mutual_information", dim_labels(ds.dim()), mi.factors.clone(), mi.mi.clone());
                report.add_table(
                    "dim_entropy",
                    dim_labels(ds.dim()),
                    vec!["entropy_bits".into()],
                    mi.dim_entropy.iter().map(|&h| vec![h]).collect(),
                );
                if wants(MetricKind::Mig) {
                    match mig(&mi, cfg.normalized_mig) {
                        Ok(r) => {
                            report.set_metric("mig", r.mig);
                            report.add_table(
                                "mig_gaps",
                                r.gaps.iter().map(|g| g.0.clone()).collect(),
                                vec!["gap".into()],
                                r.gaps.iter().map(|g| vec![g.1]).collect(),
                            );
                        }
                        Err(e) => report.warn(format!("mig: {e}")),
                    }
                }
                if wants(MetricKind::Modularity) {
                    match modularity(&mi) {
                        Ok(r) => {
                            let headline = if cfg.raw_variance { r.raw } else { r.normalized };
                            report.set_metric("modularity", headline);
                            report.set_metric("modularity_normalized", r.normalized);
                            report.set_metric("modularity_raw", r.raw);
                            report.add_table(
                                "modularity_per_dim",
                                dim_labels(ds.dim()),
                                vec!["normalized".into(), "raw".into()],
                                r.per_dim_normalized
                                    .iter()
                                    .zip(&r.per_dim_raw)
                                    .map(|(&a, &b)| vec![a, b])
                                    .collect(),
                            );
                        }
                        Err(e) => report.warn(format!("modularity: {e}")),
                    }
                }
            }
            Err(e) => report.warn(format!("mutual_information: {e}")),
        }
    }

    if wants(MetricKind::Disentanglement) || wants(MetricKind::Completeness) {
        match dci_importance(&train, schema, &cfg.forest, seed.derive(3)) {
            Ok(imp) => {
                imp.skipped.iter().for_each(|s| report.warn(format!("importance: {s}")));
                if imp.factors.is_empty() {
                    report.warn("importance: no factor with informative labels");
                } else {
                    if wants(MetricKind::Disentanglement) {
                        report.set_metric("disentanglement", disentanglement_score(&imp.matrix));
                    }
                    if wants(MetricKind::Completeness) {
                        report.set_metric("completeness", completeness_score(&imp.matrix));
                    }
                    report.add_table("importance", imp.factors, dim_labels(ds.dim()), imp.matrix);
                }
            }
            Err(e) => report.warn(format!("importance: {e}")),
        }
    }

    if wants(MetricKind::Informativeness) {
        let ic = InformativenessConfig {
            test_fraction: cfg.test_fraction,
            classifier: cfg.classifier.clone(),
        };
        match informativeness_score(ds, schema, &ic, seed.derive(4)) {
            Ok(r) => {
                report.set_metric("informativeness_error", r.error);
                report.add_table(
                    "informativeness_accuracy",
                    r.factors.clone(),
                    vec!["accuracy".into()],
                    r.per_factor_accuracy.iter().map(|&a| vec![a]).collect(),
                );
                r.skipped.into_iter().for_each(|s| report.warn(format!("informativeness: {s}")));
            }
            Err(e) => report.warn(format!("informativeness: {e}")),
        }
    }
    report.validate()?;
    Ok(report)
}

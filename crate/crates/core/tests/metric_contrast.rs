use lgw_core::metrics::{run_all_metrics, MetricsConfig};
use lgw_core::synth::{generate, Layout, SynthSpec};
use lgw_core::{Factor, FactorSchema, MetricReport, Seed};

fn schema(factors: usize, values: usize) -> FactorSchema {
    FactorSchema::new(
        (0..factors)
            .map(|f| Factor::new(format!("f{f}"), (0..values).map(|v| format!("v{v}"))))
            .collect(),
    )
    .unwrap()
}

fn report(factors: usize, values: usize, dim: usize, n: usize, layout: Layout) -> MetricReport {
    let spec = SynthSpec {
        schema: schema(factors, values),
        dim,
        samples: n,
        noise_std: 0.1,
        layout,
        seed: Seed(1),
    };
    let (schema, ds, _) = generate(&spec).unwrap();
    run_all_metrics(&ds, &schema, &MetricsConfig::default(), Seed(1)).unwrap()
}

#[test]
fn small_disentangled_vs_rotated() {
    let d = report(2, 2, 4, 500, Layout::Disentangled);
    let r = report(2, 2, 4, 500, Layout::Rotated);
    assert!(d.metric("mig").unwrap() >= 0.8);
    assert!(r.metric("mig").unwrap() <= 0.2);
    assert!(r.metric("informativeness_error").unwrap() <= 0.05);
}

#[test]
fn full_size_contrast() {
    let d = report(4, 4, 32, 2000, Layout::Disentangled);
    let r = report(4, 4, 32, 2000, Layout::Rotated);
    let m = |rep: &MetricReport, k: &str| rep.metric(k).unwrap();
    assert!(m(&d, "mig") >= 0.8);
    assert!(m(&d, "modularity") >= 0.9);
    assert!(m(&d, "disentanglement") >= 0.9);
    assert!(m(&r, "mig") <= 0.2);
    assert!(m(&r, "disentanglement") <= 0.5);
    assert!(m(&d, "informativeness_error") <= 0.05);
    assert!(m(&r, "informativeness_error") <= 0.05);
    assert!(m(&d, "z_diff_accuracy") >= 95.0);
    assert!(m(&d, "z_min_var") >= 0.9);
    assert!(d.warnings.is_empty() && r.warnings.is_empty());
}

#[test]
fn duplicated_factor_lowers_mig_only() {
    let d = report(2, 4, 8, 1000, Layout::Disentangled);
    let dup = report(2, 4, 8, 1000, Layout::Duplicated { copies: 2 });
    assert!(dup.metric("mig").unwrap() < 0.5 * d.metric("mig").unwrap());
    assert!(dup.metric("informativeness_error").unwrap() <= 0.05);
}

#[test]
fn report_is_reproducible() {
    let a = report(2, 3, 6, 300, Layout::Disentangled);
    let b = report(2, 3, 6, 300, Layout::Disentangled);
    assert_eq!(
        lgw_core::ingest::render_report(&a, lgw_core::ingest::ReportFormat::Json),
        lgw_core::ingest::render_report(&b, lgw_core::ingest::ReportFormat::Json)
    );
}

use lgw_core::cvae::inject_latent_attention;
use lgw_core::dataset::subset_by_factor;
use lgw_core::learners::{DecisionTree, ForestParams, TreeParams};
use lgw_core::metrics::dci::{completeness_score, dci_importance, disentanglement_score};
use lgw_core::metrics::information::{mig, modularity, mutual_information_matrix};
use lgw_core::synth::{generate, Layout, SynthSpec};
use lgw_core::{Factor, FactorSchema, LatentDataset, Seed};
use proptest::prelude::*;

fn data(layout: Layout, seed: u64) -> (FactorSchema, LatentDataset, lgw_core::synth::GroundTruth) {
    let schema = FactorSchema::new(vec![Factor::new("a", ["x", "y", "z"]), Factor::new("b", ["p", "q"])]).unwrap();
    generate(&SynthSpec {
        schema,
        dim: 5,
        samples: 300,
        noise_std: 0.15,
        layout,
        seed: Seed(seed),
    })
    .unwrap()
}

fn permutation(dim: usize, seed: u64) -> Vec<usize> {
    let mut p: Vec<usize> = (0..dim).collect();
    let mut s = seed;
    for i in (1..dim).rev() {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        p.swap(i, (s >> 33) as usize % (i + 1));
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mi_metrics_permutation_invariant(seed in 0u64..1000, pseed in 0u64..1000) {
        let (schema, ds, _) = data(Layout::Disentangled, seed);
        let perm = permutation(5, pseed);
        let permuted = ds.map_vectors(5, |v| perm.iter().map(|&p| v[p]).collect()).unwrap();
        let a = mutual_information_matrix(&ds, &schema, 20).unwrap();
        let b = mutual_information_matrix(&permuted, &schema, 20).unwrap();
        for (d, &p) in perm.iter().enumerate() {
            prop_assert_eq!(&b.mi[d], &a.mi[p]);
        }
        prop_assert_eq!(mig(&a, false).unwrap().mig, mig(&b, false).unwrap().mig);
        let (ma, mb) = (modularity(&a).unwrap(), modularity(&b).unwrap());
        prop_assert!((ma.normalized - mb.normalized).abs() <= 1e-12);
        prop_assert!((ma.raw - mb.raw).abs() <= 1e-12);
    }

    #[test]
    fn mi_metrics_positive_affine_invariant(seed in 0u64..1000, scale in 0.1f64..10.0, shift in -5f64..5.0) {
        let (schema, ds, _) = data(Layout::Rotated, seed);
        let moved = ds.map_vectors(5, |v| v.iter().enumerate().map(|(d, x)| scale * (d + 1) as f64 * x + shift).collect()).unwrap();
        let a = mutual_information_matrix(&ds, &schema, 20).unwrap();
        let b = mutual_information_matrix(&moved, &schema, 20).unwrap();
        prop_assert!((mig(&a, false).unwrap().mig - mig(&b, false).unwrap().mig).abs() <= 1e-9);
        prop_assert!((modularity(&a).unwrap().normalized - modularity(&b).unwrap().normalized).abs() <= 1e-9);
        for row in a.mi.iter().chain(&b.mi) {
            prop_assert!(row.iter().all(|&m| m >= 0.0));
        }
        prop_assert!(a.dim_entropy.iter().all(|&h| h >= 0.0));
    }

    #[test]
    fn forest_importance_permutation_equivariant(seed in 0u64..1000, pseed in 0u64..1000) {
        // noise-free factor dims: every split is pure, so no two dims tie and
        // the lowest-dim tie rule never fires
        let schema = FactorSchema::new(vec![Factor::new("a", ["x", "y", "z"]), Factor::new("b", ["p", "q"])]).unwrap();
        let (schema, ds, _) = generate(&SynthSpec {
            schema,
            dim: 5,
            samples: 300,
            noise_std: 0.0,
            layout: Layout::Disentangled,
            seed: Seed(seed),
        })
        .unwrap();
        let perm = permutation(5, pseed);
        let permuted = ds.map_vectors(5, |v| perm.iter().map(|&p| v[p]).collect()).unwrap();
        let params = ForestParams { n_trees: 8, ..ForestParams::all_features() };
        let a = dci_importance(&ds, &schema, &params, Seed(seed)).unwrap();
        let b = dci_importance(&permuted, &schema, &params, Seed(seed)).unwrap();
        for (ra, rb) in a.matrix.iter().zip(&b.matrix) {
            prop_assert!((ra.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            for (d, &p) in perm.iter().enumerate() {
                prop_assert_eq!(rb[d], ra[p]);
            }
        }
        prop_assert_eq!(disentanglement_score(&a.matrix), disentanglement_score(&b.matrix));
        prop_assert_eq!(completeness_score(&a.matrix), completeness_score(&b.matrix));
    }

    #[test]
    fn tree_prediction_invariant_under_increasing_affine(seed in 0u64..1000, scale in 0.1f64..10.0, shift in -5f64..5.0) {
        let (schema, ds, _) = data(Layout::Rotated, seed);
        let y: Vec<usize> = ds.class_labels(&schema, "a").unwrap().into_iter().map(|l| l.unwrap()).collect();
        let f = |v: &[f64]| -> Vec<f64> { v.iter().enumerate().map(|(d, x)| scale * (d as f64 + 0.5) * x + shift).collect() };
        let x: Vec<Vec<f64>> = ds.samples().iter().map(|s| s.vector.clone()).collect();
        let xt: Vec<Vec<f64>> = x.iter().map(|v| f(v)).collect();
        let t1 = DecisionTree::fit(&x, &y, &TreeParams::default(), Seed(1)).unwrap();
        let t2 = DecisionTree::fit(&xt, &y, &TreeParams::default(), Seed(1)).unwrap();
        prop_assert!(x.iter().zip(&y).all(|(v, &c)| t1.predict(v) == c));
        let q = data(Layout::Rotated, seed + 1).1;
        for s in q.samples() {
            prop_assert_eq!(t1.predict(&s.vector), t2.predict(&f(&s.vector)));
        }
    }

    #[test]
    fn subsets_partition_the_annotated_rows(seed in 0u64..1000) {
        let (schema, ds, _) = data(Layout::Disentangled, seed);
        let ds = ds.select(&(0..ds.len()).filter(|i| i % 7 != 3).collect::<Vec<_>>());
        for factor in schema.factors() {
            let mut ids: Vec<u64> = factor
                .values
                .iter()
                .flat_map(|v| subset_by_factor(&ds, &schema, &factor.name, v).unwrap().ids())
                .collect();
            ids.sort_unstable();
            let want: Vec<u64> = ds.samples().iter().filter(|s| s.labels.contains_key(&factor.name)).map(|s| s.id).collect();
            prop_assert_eq!(ids, want);
        }
    }

    #[test]
    fn duplicated_key_value_row_keeps_output(seed in 0u64..1000, row in 0usize..4) {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let d = 6;
        let mut mat = |n: usize| -> Vec<Vec<f64>> { (0..n).map(|_| (0..d).map(|_| next()).collect()).collect() };
        let (q, k) = (mat(4), mat(4));
        // V rows equal K rows so the injected z serves as both key and value
        let v = k.clone();
        let plain = {
            let scale = (d as f64).sqrt();
            q.iter()
                .map(|qi| {
                    let logits: Vec<f64> = k.iter().map(|kj| qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() / scale).collect();
                    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let w: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
                    // duplicating row `row` doubles its weight
                    let total: f64 = w.iter().sum::<f64>() + w[row];
                    (0..d)
                        .map(|c| (w.iter().zip(&v).map(|(wj, vj)| wj * vj[c]).sum::<f64>() + w[row] * v[row][c]) / total)
                        .collect::<Vec<f64>>()
                })
                .collect::<Vec<_>>()
        };
        let out = inject_latent_attention(&q, &k, &v, &k[row]).unwrap();
        for (a, b) in out.output.iter().flatten().zip(plain.iter().flatten()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn rotation_is_an_isometry_of_the_disentangled_code() {
    let (_, d, _) = data(Layout::Disentangled, 5);
    let (_, r, _) = data(Layout::Rotated, 5);
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    for i in (0..d.len()).step_by(17) {
        for j in (0..d.len()).step_by(13) {
            let (u, v) = (&d.samples(), &r.samples());
            assert!((dist(&u[i].vector, &u[j].vector) - dist(&v[i].vector, &v[j].vector)).abs() <= 1e-9);
        }
    }
}

#[test]
fn mapped_dimension_carries_maximal_mi() {
    for seed in 0..5 {
        let (schema, ds, truth) = data(Layout::Disentangled, seed);
        let mi = mutual_information_matrix(&ds, &schema, 20).unwrap();
        for (k, name) in mi.factors.iter().enumerate() {
            let best = (0..mi.dim()).max_by(|&a, &b| mi.mi[a][k].total_cmp(&mi.mi[b][k])).unwrap();
            assert_eq!(vec![best], truth.factor_dims[name]);
        }
    }
}

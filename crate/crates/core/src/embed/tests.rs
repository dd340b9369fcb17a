use proptest::prelude::*;

use super::*;
use crate::model::{build_spec, Head, Model};
use crate::synthetic::separable_dataset;
use crate::tensor::RngStream;
use crate::text::EncodingConfig;
use crate::training::{train, Hyperparams};

fn entropy_perplexity(p: &[f64]) -> f64 {
    let h: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.log2()).sum();
    2f64.powf(h)
}

/// Per-point a/b straight from the definition.
fn brute_silhouette(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let d = |a: &Vec<f64>, b: &Vec<f64>| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let n = points.len();
    let mut s = vec![0.0; n];
    for i in 0..n {
        let own: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if own.is_empty() {
            continue;
        }
        let a = own.iter().map(|&j| d(&points[i], &points[j])).sum::<f64>() / own.len() as f64;
        let mut b = f64::INFINITY;
        let mut others: Vec<usize> = labels.iter().copied().filter(|&l| l != labels[i]).collect();
        others.sort();
        others.dedup();
        for l in others {
            let members: Vec<usize> = (0..n).filter(|&j| labels[j] == l).collect();
            b = b.min(members.iter().map(|&j| d(&points[i], &points[j])).sum::<f64>() / members.len() as f64);
        }
        s[i] = if a.max(b) == 0.0 { 0.0 } else { (b - a) / a.max(b) };
    }
    s.iter().sum::<f64>() / n as f64
}

fn blobs(n: usize, dim: usize, gap: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = RngStream::new(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let pts = labels
        .iter()
        .map(|&l| (0..dim).map(|d| rng.normal() + if d == 0 && l == 1 { gap } else { 0.0 }).collect())
        .collect();
    (pts, labels)
}

#[test]
fn equidistant_neighbours_get_a_uniform_row() {
    for k in [2usize, 5, 17] {
        let c = perplexity_calibration(&vec![3.7; k], k as f64, 1e-5).unwrap();
        assert!(c.probs.iter().all(|&p| (p - 1.0 / k as f64).abs() < 1e-6));
    }
}

#[test]
fn low_target_concentrates_on_the_near_neighbour() {
    let mut d = vec![50.0; 10];
    d[3] = 0.5;
    let c = perplexity_calibration(&d, 2.0, 1e-5).unwrap();
    assert!(c.probs[3] > 0.5, "{:?}", c.probs);
}

#[test]
fn calibration_errors() {
    assert!(perplexity_calibration(&[0.0, 0.0, 0.0], 2.0, 1e-4).is_err());
    assert!(perplexity_calibration(&[1.0], 1.0, 1e-4).is_err());
    assert!(perplexity_calibration(&[1.0, 2.0], 3.0, 1e-4).is_err());
}

#[test]
fn random_rows_reach_target_perplexity() {
    let mut rng = RngStream::new(31);
    for _ in 0..50 {
        let k = 10 + rng.below(90);
        let d: Vec<f64> = (0..k).map(|_| rng.uniform_range(0.0, 100.0).powi(2)).collect();
        let target = rng.uniform_range(2.0, k as f64 / 2.0);
        let c = perplexity_calibration(&d, target, 1e-4).unwrap();
        assert!((entropy_perplexity(&c.probs) - target).abs() < 1e-4, "k={k} target={target} got {}", c.perplexity);
        assert!((c.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn joint_matrix_is_symmetric_and_normalized() {
    let (x, _) = blobs(30, 5, 3.0, 32);
    let p = joint_probabilities(&x, 5.0).unwrap();
    let n = x.len();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    for i in 0..n {
        assert_eq!(p[i * n + i], 0.0);
        for j in 0..n {
            assert_eq!(p[i * n + j], p[j * n + i]);
            assert!(p[i * n + j] >= 0.0);
        }
    }
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("p{i}")).collect()
}

#[test]
fn separated_blobs_embed_apart() {
    let (x, labels) = blobs(100, 64, 10.0, 33);
    let r = tsne(&x, &ids(100), &TsneConfig::default()).unwrap();
    assert!(r.kl_final < r.kl_initial);
    let y: Vec<Vec<f64>> = r.coords.iter().map(|c| c.to_vec()).collect();
    let s = silhouette(&y, &labels).unwrap();
    assert!(s >= 0.8, "silhouette {s}");
}

#[test]
fn tsne_is_seeded_and_permutation_equivariant() {
    let (x, _) = blobs(24, 4, 4.0, 34);
    let cfg = TsneConfig { perplexity: 5.0, ..TsneConfig::default() };
    let names = ids(24);
    let a = tsne(&x, &names, &cfg).unwrap();
    assert_eq!(a, tsne(&x, &names, &cfg).unwrap());
    for seed in 0..4 {
        let r = tsne(&x, &names, &TsneConfig { seed, ..cfg.clone() }).unwrap();
        assert!(r.kl_final.is_finite() && r.kl_final < r.kl_initial, "seed {seed}: {r:?}");
    }
    let perm: Vec<usize> = (0..24).rev().collect();
    let xp: Vec<Vec<f64>> = perm.iter().map(|&i| x[i].clone()).collect();
    let np: Vec<String> = perm.iter().map(|&i| names[i].clone()).collect();
    let b = tsne(&xp, &np, &cfg).unwrap();
    for (k, &i) in perm.iter().enumerate() {
        assert_eq!(b.coords[k], a.coords[i]);
    }
    assert_ne!(a.coords, tsne(&x, &names, &TsneConfig { seed: 1, ..cfg.clone() }).unwrap().coords);
}

#[test]
fn tsne_rejects_bad_inputs() {
    let (x, _) = blobs(10, 3, 1.0, 35);
    assert!(tsne(&x, &ids(10), &TsneConfig::default()).is_err());
    assert!(tsne(&x[..4], &ids(4), &TsneConfig { perplexity: 1.1, ..TsneConfig::default() }).is_err());
    let mut dup = ids(10);
    dup[3] = "p0".into();
    assert!(tsne(&x, &dup, &TsneConfig { perplexity: 2.0, ..TsneConfig::default() }).is_err());
}

#[test]
fn silhouette_fixed_cases() {
    let pts = vec![vec![0.0, 0.0], vec![0.0, 0.1], vec![100.0, 0.0], vec![100.0, 0.1]];
    assert!(silhouette(&pts, &[0, 0, 1, 1]).unwrap() > 0.9);
    assert_eq!(silhouette(&vec![vec![1.0, 1.0]; 4], &[0, 1, 0, 1]).unwrap(), 0.0);
    assert!(silhouette(&pts, &[0, 0, 0, 0]).is_err());
    assert!(silhouette(&pts[..2], &[0, 1]).is_err());
    let (p, l) = {
        let mut rng = RngStream::new(36);
        let p: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.normal(), rng.normal(), rng.normal()]).collect();
        let l: Vec<usize> = (0..20).map(|_| rng.below(3)).collect();
        (p, l)
    };
    assert!((silhouette(&p, &l).unwrap() - brute_silhouette(&p, &l)).abs() < 1e-9);
}

proptest! {
    #[test]
    fn silhouette_matches_definition(rows in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, 0usize..4), 3..50)) {
        let pts: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.0, r.1]).collect();
        let labels: Vec<usize> = rows.iter().map(|r| r.2).collect();
        match silhouette(&pts, &labels) {
            Ok(s) => {
                prop_assert!((s - brute_silhouette(&pts, &labels)).abs() < 1e-9);
                prop_assert!((-1.0..=1.0).contains(&s));
            }
            Err(_) => prop_assert!(labels.iter().all(|&l| l == labels[0])),
        }
    }
}

#[test]
fn embeddings_are_deterministic_and_rows_match_documents() {
    let spec = build_spec(2, EncodingConfig::new(32, 4).unwrap(), 0.05, Head::Sigmoid).unwrap();
    let model = Model::new(spec, vec![], 37).unwrap();
    let mut d = separable_dataset(5, 2, 38);
    d.records.push(d.records[0].clone());
    let set = embed_dataset(&model, &d).unwrap();
    assert_eq!(set.len(), 6);
    assert!(set.matrix.iter().all(|r| r.len() == model.spec.feature_dim));
    assert_eq!(set.matrix[0], set.matrix[5]);
    assert_eq!(set.labels.as_deref(), Some(&[0, 1, 0, 1, 0, 0][..]));
    assert_eq!(set, embed_dataset(&model, &d).unwrap());
}

#[test]
fn trained_toy_embeddings_separate_classes() {
    let spec = build_spec(2, EncodingConfig::new(64, 4).unwrap(), 0.1, Head::Sigmoid).unwrap();
    let mut model = Model::new(spec, vec![], 39).unwrap();
    let data = separable_dataset(20, 2, 40);
    train(&mut model, &data, None, &Hyperparams { epochs: 40, batch_size: 20, seed: 41, ..Hyperparams::default() }).unwrap();
    let set = embed_dataset(&model, &separable_dataset(30, 2, 42)).unwrap();
    let labels = set.labels.clone().unwrap();
    let d = |a: &Vec<f64>, b: &Vec<f64>| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
    for i in 0..set.len() {
        for j in i + 1..set.len() {
            let v = d(&set.matrix[i], &set.matrix[j]);
            if labels[i] == labels[j] {
                intra += v;
                ni += 1;
            } else {
                inter += v;
                nx += 1;
            }
        }
    }
    assert!(intra / (ni as f64) < inter / (nx as f64));
}

#[test]
fn scatter_outputs_have_expected_structure() {
    let coords = [[0.0, 0.0], [1.0, 2.0], [3.0, -1.0]];
    let names: Vec<String> = vec!["friend".into(), "foe".into()];
    let ids: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
    let svg = scatter_svg("t", &coords, Some(&[0, 1, 1]), &names);
    assert_eq!(svg.matches("class=\"point\"").count(), 3);
    assert_eq!(svg.matches("class=\"legend\"").count(), 2);
    let plain = scatter_svg("t", &coords, None, &[]);
    assert_eq!(plain.matches("class=\"legend\"").count(), 0);
    let colours: std::collections::HashSet<&str> = plain.lines().filter(|l| l.contains("class=\"point\"")).map(|l| l.split("fill=").nth(1).unwrap()).collect();
    assert_eq!(colours.len(), 1);
    let dir = tempfile::tempdir().unwrap();
    let (s, c) = (dir.path().join("s.svg"), dir.path().join("s.csv"));
    emit_scatter(&ids, &coords, Some(&[0, 1, 1]), &names, &s, &c).unwrap();
    let csv = std::fs::read_to_string(&c).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert_eq!(csv.lines().nth(2).unwrap(), "b,1,2,foe");
    assert!(emit_scatter(&ids, &coords, None, &[], &dir.path().join("missing/x.svg"), &c).is_err());
    let var = class_variance(&[vec![0.0], vec![2.0], vec![5.0]], &[0, 0, 1]);
    assert_eq!(var[&0], 1.0);
    assert_eq!(var[&1], 0.0);
}

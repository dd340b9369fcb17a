use charnet::embed::{embed_dataset, silhouette, tsne, TsneConfig};
use charnet::model::{build_spec, load_checkpoint, save_checkpoint, Head, Model};
use charnet::synthetic::separable_dataset;
use charnet::text::{load_dataset, DatasetFormat, EncodingConfig};
use charnet::training::{evaluate, train, Hyperparams};
use charnet::transfer::{fine_tune, freeze, replace_head, FreezeSpec};

fn enc() -> EncodingConfig {
    EncodingConfig::new(48, 4).unwrap()
}

#[test]
fn csv_to_trained_checkpoint_to_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let mut body = String::from("text,label\n");
    for r in &separable_dataset(40, 2, 5).records {
        body.push_str(&format!("\"{}\",class{}\n", r.text, r.labels[0]));
    }
    std::fs::write(&path, body).unwrap();
    let data = load_dataset(&path, DatasetFormat::Csv).unwrap();
    assert_eq!(data.len(), 40);
    let (fit, held) = data.split(0.25, 5);

    let mut model = Model::new(build_spec(2, enc(), 0.1, Head::Softmax).unwrap(), vec![], 5).unwrap();
    let hp = Hyperparams { epochs: 25, batch_size: 10, learning_rate: 3e-3, seed: 5, head: Head::Softmax, ..Hyperparams::default() };
    let h = train(&mut model, &fit, Some(&held), &hp).unwrap();
    assert!(h.epochs.last().unwrap().train_loss < h.epochs[0].train_loss);
    let m = evaluate(&model, &held, 0.5).unwrap();
    assert!(m.binary_accuracy >= 0.8, "{m:?}");

    let ckpt = dir.path().join("m.ckpt");
    save_checkpoint(&model, &ckpt).unwrap();
    let back = load_checkpoint(&ckpt).unwrap();
    assert_eq!(evaluate(&back, &held, 0.5).unwrap(), m);

    let mut wide = replace_head(&back, 4, 6).unwrap();
    let mask = freeze(&wide, &FreezeSpec::parse("encoder")).unwrap();
    let four = separable_dataset(16, 4, 6);
    let h = fine_tune(&mut wide, &mask, &four, None, &Hyperparams { epochs: 2, batch_size: 8, ..hp }).unwrap();
    assert_eq!(h.epochs.len(), 2);
    assert_eq!(wide.n_classes(), 4);

    let set = embed_dataset(&model, &data).unwrap();
    let r = tsne(&set.matrix, &set.ids, &TsneConfig { perplexity: 8.0, seed: 5, ..TsneConfig::default() }).unwrap();
    let y: Vec<Vec<f64>> = r.coords.iter().map(|c| c.to_vec()).collect();
    let s = silhouette(&y, set.labels.as_ref().unwrap()).unwrap();
    assert!((-1.0..=1.0).contains(&s));
    assert!(r.kl_final < r.kl_initial);
}

//! History and metrics serialization: CSV, SVG and plain text.

use std::fmt::Write;
use std::path::Path;

use super::metrics::Metrics;
use super::train::TrainingHistory;
use crate::error::{Error, Result};
use crate::plot;

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// `epoch,train_loss,train_acc,val_loss,val_acc`; validation cells are empty
/// when no validation set was given.
pub fn history_csv(h: &TrainingHistory) -> String {
    let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
    for e in &h.epochs {
        let _ = writeln!(out, "{},{},{},{},{}", e.epoch, e.train_loss, e.train_accuracy, opt(e.val_loss), opt(e.val_accuracy));
    }
    out
}

pub fn history_svg(h: &TrainingHistory) -> String {
    let pick = |f: fn(&super::train::EpochRecord) -> Option<f64>| -> Vec<(f64, f64)> {
        h.epochs.iter().filter_map(|e| f(e).map(|v| (e.epoch as f64, v))).collect()
    };
    let mut series = vec![
        ("train loss", pick(|e| Some(e.train_loss))),
        ("train acc", pick(|e| Some(e.train_accuracy))),
    ];
    if h.epochs.iter().any(|e| e.val_loss.is_some()) {
        series.push(("val loss", pick(|e| e.val_loss)));
        series.push(("val acc", pick(|e| e.val_accuracy)));
    }
    plot::line_chart("Convergence", "epoch", "loss / binary accuracy", &series)
}

fn class_name(m: &Metrics, c: usize) -> String {
    m.labels.get(c).cloned().unwrap_or_else(|| c.to_string())
}

/// One row per class plus `macro` and `micro` rows.
pub fn metrics_csv(m: &Metrics) -> String {
    let mut out = String::from("class,tp,fp,fn,tn,precision,recall,f1,auc\n");
    for (c, k) in m.confusion.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            class_name(m, c),
            k.tp,
            k.fp,
            k.fn_,
            k.tn,
            m.precision[c],
            m.recall[c],
            m.f1[c],
            opt(m.per_class_auc[c])
        );
    }
    let _ = writeln!(out, "macro,,,,,{},{},{},", m.macro_precision, m.macro_recall, m.macro_f1);
    let _ = writeln!(out, "micro,,,,,{},{},{},{}", m.micro_precision, m.micro_recall, m.micro_f1, opt(m.auc));
    out
}

pub fn metrics_text(m: &Metrics) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "items: {}", m.n_items);
    let _ = writeln!(out, "threshold: {}", m.threshold);
    let _ = writeln!(out, "binary_accuracy: {:.6}", m.binary_accuracy);
    let _ = writeln!(out, "macro precision/recall/f1: {:.4} {:.4} {:.4}", m.macro_precision, m.macro_recall, m.macro_f1);
    let _ = writeln!(out, "micro precision/recall/f1: {:.4} {:.4} {:.4}", m.micro_precision, m.micro_recall, m.micro_f1);
    match m.auc {
        Some(a) => _ = writeln!(out, "auc: {a:.6}"),
        None => _ = writeln!(out, "auc: undefined (single-class targets)"),
    }
    for (c, k) in m.confusion.iter().enumerate() {
        let _ = writeln!(
            out,
            "class {}: tp={} fp={} fn={} tn={} p={:.4} r={:.4} f1={:.4}",
            class_name(m, c),
            k.tp,
            k.fp,
            k.fn_,
            k.tn,
            m.precision[c],
            m.recall[c],
            m.f1[c]
        );
    }
    out
}

pub fn roc_csv(m: &Metrics) -> String {
    let mut out = String::from("fpr,tpr\n");
    for (x, y) in &m.roc_points {
        let _ = writeln!(out, "{x},{y}");
    }
    out
}

pub fn roc_svg(m: &Metrics) -> String {
    let title = match m.auc {
        Some(a) => format!("ROC (AUC {a:.4})"),
        None => "ROC".to_string(),
    };
    plot::line_chart(&title, "false positive rate", "true positive rate", &[("roc", m.roc_points.clone()), ("chance", vec![(0.0, 0.0), (1.0, 1.0)])])
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

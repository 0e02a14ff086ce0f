//! Runs every (strategy, loss) cell on synthetic data across several seeds
//! and prints median test accuracy and ECE per cell.
//!
//! ```text
//! cargo run --release --example grid -- seeds=5 dim=10 spread=0.5 epochs=100 hidden=128
//! ```
//!
//! Options (all `key=value`): seeds, dim, spread, epochs, hidden (comma list),
//! seed0, decay_every, r, e, alpha, gamma, cells (`all` or `core`).

use std::collections::HashMap;

use confcal::calibration::{CalibrationReport, DEFAULT_BINS};
use confcal::confidence::{precompute_model_confidence, ConfidenceTable};
use confcal::dataset::{generate_synthetic, split, SyntheticConfig};
use confcal::smoothing::SmoothingConfig;
use confcal::trainer::{
    predict_all, train, ConfidenceTables, CurriculumConfig, LossKind, Strategy, TrainConfig,
};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn main() -> confcal::Result<()> {
    let opts: HashMap<String, String> = std::env::args()
        .skip(1)
        .filter_map(|a| a.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect();
    let get = |k: &str, d: &str| opts.get(k).cloned().unwrap_or_else(|| d.to_string());
    let num = |k: &str, d: &str| get(k, d).parse::<f64>().expect("numeric option");

    let seeds = num("seeds", "5") as u64;
    let seed0 = num("seed0", "0") as u64;
    let dim = num("dim", "10") as usize;
    let hidden: Vec<usize> = get("hidden", "128").split(',').filter(|s| !s.is_empty()).map(|s| s.parse().unwrap()).collect();
    let base = TrainConfig {
        epochs: num("epochs", "100") as usize,
        lr_decay_every: num("decay_every", "30") as usize,
        hidden_dims: hidden,
        smoothing: SmoothingConfig::new(num("alpha", "0.1"), num("gamma", "0.1"))?,
        curriculum: Some(CurriculumConfig { easy_ratio: num("r", "0.5"), end_epoch: num("e", "5") as usize }),
        ..TrainConfig::default()
    };

    let mut cells = vec![(Strategy::Iid, LossKind::Ce), (Strategy::Iid, LossKind::Ls)];
    if get("cells", "all") == "all" {
        cells.extend([
            (Strategy::Iid, LossKind::Mcls),
            (Strategy::Iid, LossKind::Hcls),
            (Strategy::Mccl, LossKind::Mcls),
            (Strategy::Mccl, LossKind::Hcls),
            (Strategy::Hccl, LossKind::Mcls),
            (Strategy::Hccl, LossKind::Hcls),
        ]);
    } else {
        cells.extend([(Strategy::Iid, LossKind::Hcls), (Strategy::Hccl, LossKind::Hcls)]);
    }
    let needs_model = cells.iter().any(|&(s, l)| s == Strategy::Mccl || l == LossKind::Mcls);

    let mut acc = vec![Vec::new(); cells.len()];
    let mut ece = vec![Vec::new(); cells.len()];
    for seed in seed0..seed0 + seeds {
        let data = generate_synthetic(&SyntheticConfig {
            centroid_spread: num("spread", "0.5"),
            ..SyntheticConfig::new(3, 200, dim, 10, 0.25, seed)
        })?;
        let (train_set, test_set) = split(&data, 0.8, seed)?;
        let model_table = if needs_model {
            let baseline_cfg = TrainConfig { seed: 1000 + seed, ..base.clone() };
            let (baseline, _) = train(&train_set, &baseline_cfg, ConfidenceTables::none())?;
            Some(precompute_model_confidence(&baseline, &train_set)?)
        } else {
            None
        };
        let human_table = ConfidenceTable::human(&train_set);
        let tables = ConfidenceTables { model: model_table.as_ref(), human: Some(&human_table) };
        for (c, &(strategy, loss)) in cells.iter().enumerate() {
            let cfg = TrainConfig { strategy, loss, seed, ..base.clone() };
            let (model, _) = train(&train_set, &cfg, tables)?;
            let probs: Vec<_> = predict_all(&model, &test_set)?.into_iter().map(|p| p.probs).collect();
            let report = CalibrationReport::compute(&probs, &test_set.modal_labels(), DEFAULT_BINS)?;
            acc[c].push(report.accuracy);
            ece[c].push(report.ece);
        }
    }
    println!("{:<6} {:<6} {:>9} {:>9}", "strat", "loss", "acc", "ece");
    for (c, (strategy, loss)) in cells.iter().enumerate() {
        println!(
            "{:<6} {:<6} {:>9.4} {:>9.4}",
            format!("{strategy:?}"),
            format!("{loss:?}"),
            median(acc[c].clone()),
            median(ece[c].clone())
        );
    }
    Ok(())
}

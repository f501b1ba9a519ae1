//! Synthesizes a labelled streamline set on the two-arc phantom, trains a
//! small oracle and scores a few held-out streamlines per sample kind.
//!
//! ```sh
//! cargo run --release --example oracle
//! ```

use std::collections::BTreeMap;

use tractoracle::oracle::{train_oracle, OracleConfig, TrainConfig};
use tractoracle::phantom::{generate_phantom, presets, synthesize_labeled_set};

fn main() -> tractoracle::Result<()> {
    let v = generate_phantom(&presets::two_arcs_one_crossing(), 0)?;
    let set = synthesize_labeled_set(&v, 300, 300, 1)?;
    let cfg = OracleConfig {
        n_points: 32,
        embed_dim: 16,
        n_blocks: 2,
        n_heads: 2,
        ffn_dim: 32,
        ..OracleConfig::default()
    };
    let tc = TrainConfig {
        epochs: 10,
        batch_size: 16,
        ..TrainConfig::default()
    };
    println!(
        "{} parameters, {} streamlines",
        cfg.param_count(),
        set.len()
    );
    let trained = train_oracle(&set.streamlines, &set.targets, &cfg, &tc, |e| {
        println!(
            "epoch {:2}  loss {:.4}  val accuracy {:.3}  f1 {:.3}",
            e.epoch, e.train_loss, e.validation.accuracy, e.validation.f1
        )
    })?;

    let mut by_kind: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for &i in &trained.val_idx {
        let score = trained.model.score(&set.streamlines[i])?;
        by_kind
            .entry(set.kinds[i].as_str())
            .or_default()
            .push(score);
    }
    println!("\nmean held-out score per kind:");
    for (kind, scores) in by_kind {
        println!(
            "  {kind:11} {:.3} over {}",
            scores.iter().sum::<f64>() / scores.len() as f64,
            scores.len()
        );
    }
    Ok(())
}

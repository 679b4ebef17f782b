//! Trains a GCN with unified normalization on SBM node clustering, saves a
//! checkpoint, reloads it, and prints the learned normalizer weights.
//!
//! Run with `--release`; a debug build is slow.

use graphnorm::graph::{sbm_generate, SbmConfig};
use graphnorm::train::{
    evaluate, extract_lambda_distribution, lambda_csv, load_checkpoint, save_checkpoint, train,
    Dataset, TrainConfig,
};
use graphnorm::Result;

fn main() -> Result<()> {
    let graphs = sbm_generate(&SbmConfig {
        num_graphs: 60,
        nodes_min: 15,
        nodes_max: 25,
        ..SbmConfig::default()
    })?;
    let data = Dataset {
        train: graphs[..48].to_vec(),
        val: graphs[48..54].to_vec(),
        test: graphs[54..].to_vec(),
    };
    let config = TrainConfig {
        epochs: 15,
        learning_rate: 1e-2,
        norm: "gn".parse()?,
        ..TrainConfig::default()
    };

    let out = train(&data, &config)?;
    for r in &out.report.epochs {
        println!(
            "epoch {:2}  train loss {:.4}  val balanced acc {:.4}",
            r.epoch,
            r.train.loss,
            r.val.balanced_accuracy.unwrap_or(f64::NAN)
        );
    }
    println!(
        "best epoch {}, test {:?}",
        out.report.best_epoch, out.report.test
    );

    let path = std::env::temp_dir().join("graphnorm-example-checkpoint.json");
    save_checkpoint(&path, &out.model, Some(&config))?;
    let (model, _) = load_checkpoint(&path)?;
    let again = evaluate(&model, &data.test, config.batch_size)?;
    println!("reloaded test metrics match: {}", again == out.report.test);
    print!("{}", lambda_csv(&extract_lambda_distribution(&model)?));
    Ok(())
}

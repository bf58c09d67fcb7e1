//! Fine-tunes a freshly initialized forecaster on a simulated target and
//! compares it with the naive baselines on held-out hours.

use cellcast::conformal::FoldLearner;
use cellcast::experiment::{learner, load_target, mae_rmse, point_forecast, Baseline, ExperimentConfig, RunSeeds};
use cellcast::model::ParameterSet;

fn main() -> cellcast::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.target.train_windows = 168;
    cfg.target.test_windows = 72;
    cfg.meta.finetune.steps = 200;
    cfg.meta.finetune.lr = 0.05;
    let seeds = RunSeeds::new(cfg.seed);

    let target = load_target(&cfg, &seeds, &cfg.window)?;
    let model = target.model_config(&cfg.model)?;
    println!(
        "target: {} cells, {} training windows, {} test windows, horizon {}h",
        target.dims(),
        target.n_train,
        target.n_test,
        cfg.window.horizon
    );
    println!(
        "model: hidden {}, {} heads, {} blocks, {} image channels",
        model.hidden, model.heads, model.blocks, model.image[2]
    );

    let init = ParameterSet::init(&model, seeds.init)?;
    println!("{} trainable values", init.all().numel());
    let l = learner(&cfg, &seeds, &model, &target, init);
    let out = point_forecast(&l, &target)?;
    let losses = &out.fitted.losses;
    println!(
        "fine-tune loss {:.4} -> {:.4} over {} steps",
        losses[0],
        losses[losses.len() - 1],
        losses.len()
    );

    println!("\nmethod           MAE      RMSE");
    println!("{:<16} {:<8.3} {:.3}", "forecaster", out.mae, out.rmse);
    let truth = target.truth(target.test_rows());
    let values = target.source.frame.values();
    for b in Baseline::ALL {
        let pred = b.predict(
            values,
            target.dims(),
            &target.target_indices(target.test_rows()),
            cfg.window.horizon,
        )?;
        let (mae, rmse) = mae_rmse(&truth, &pred)?;
        println!("{:<16} {mae:<8.3} {rmse:.3}", b.name());
    }

    let first = l.predict(&out.fitted, target.test_rows().start..target.test_rows().start + 1)?;
    println!("\nfirst test hour, per cell:");
    for (c, (p, t)) in first.iter().zip(&truth).enumerate() {
        println!("  cell {c}: forecast {p:>7.2}  observed {t:>7.2}");
    }
    Ok(())
}

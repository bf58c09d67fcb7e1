//! Meta-trains the forecaster body on simulated auxiliary tasks, then
//! fine-tunes on the target with the same budget as a cold start.
//!
//! ```text
//! cargo run --release --example meta_transfer -- 3
//! ```

use cellcast::experiment::{
    aux_tasks, learner, load_target, meta_initialize, point_forecast, ExperimentConfig, RunSeeds,
};
use cellcast::model::ParameterSet;

fn main() -> cellcast::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let mut cfg = ExperimentConfig {
        seed,
        ..Default::default()
    };
    cfg.target.train_windows = 168;
    cfg.aux.windows = 168;
    cfg.meta.epochs = 30;
    let seeds = RunSeeds::new(seed);

    let target = load_target(&cfg, &seeds, &cfg.window)?;
    let model = target.model_config(&cfg.model)?;
    let aux = aux_tasks(&cfg, &seeds, &cfg.window, cfg.aux.count, cfg.aux.windows)?;
    let init = ParameterSet::init(&model, seeds.init)?;

    let (meta_init, history) = meta_initialize(&cfg, &seeds, &model, &aux, &init)?;
    println!("meta-training on {} auxiliary tasks", aux.len());
    println!("epoch  query   support  |hypergrad|  CG its");
    for r in history.iter().step_by(5).chain(history.last()) {
        println!(
            "{:>5}  {:<7.4} {:<8.4} {:<11.4} {:?}",
            r.epoch, r.query_loss, r.support_loss, r.hypergradient_norm, r.cg_iterations
        );
    }

    let cold = point_forecast(&learner(&cfg, &seeds, &model, &target, init), &target)?;
    let warm = point_forecast(&learner(&cfg, &seeds, &model, &target, meta_init), &target)?;
    println!(
        "\n{} fine-tuning steps on {} target windows",
        cfg.meta.finetune.steps, target.n_train
    );
    println!("{:<17} MAE {:.3}  RMSE {:.3}", "cold start", cold.mae, cold.rmse);
    println!("{:<17} MAE {:.3}  RMSE {:.3}", "meta-initialized", warm.mae, warm.rmse);
    Ok(())
}

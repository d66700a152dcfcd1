//! Experiment orchestration: configuration, seeding, the training loop,
//! evaluation, sweeps, plot-data export and named presets.

mod config;
mod presets;
mod rewards;
mod seeding;
mod sweep;
mod train;

pub use config::{Algo, Inhibition, RuleKind, RunSettings, SaciSettings, Shaping, TrainConfig};
pub use presets::{preset, PRESETS};
pub use rewards::{lander_proxy, transition_rewards, TransitionRewards, PROXY_RADIUS, ZONE_REACH};
pub use seeding::{stream, StreamId, Streams};
pub use sweep::{
    curve, export_plot_data, export_plot_files, interpolate, load_sweep_cells, mean_std, smooth, sweep, sweep_cells,
    write_plot_csv, CellId, CellResult, PlotRow, PointSummary, SweepAxis, SweepResult,
};
pub use train::{
    evaluate, evaluate_traced, load_metrics, read_metrics, run_training, run_training_with, success_cause, windowed_mean,
    write_metrics, EvalSummary, MetricsRecord, TrainOutcome, TrainedAgent, AVG_WINDOW, CHECKPOINT_FILE,
    METRICS_FILE,
};

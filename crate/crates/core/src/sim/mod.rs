//! Multi-cell, multi-user traffic simulator with textual event and image
//! side channels, plus a factory for meta-training tasks.

pub mod files;
mod mobility;

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::{one_hot_metadata, prepare_task, MetaDataset, SeriesFrame, TaskDataset, TaskSource, WindowSpec};
use crate::error::{Error, Result};
use crate::numerics::{rng, Tensor};

pub use files::{load_cells_csv, load_events_csv, load_image_csv, write_cells_csv, write_events_csv, write_image_csv};
pub use mobility::{handover, is_working_hour, sector_of, step_mobility, user_traffic, UserState, WORKING_HOURS};

pub const SECTORS_PER_BS: usize = 3;
/// Image channels: base-station density and road mask.
pub const IMAGE_CHANNELS: usize = 2;

const STREAM_USERS: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_MOBILITY: u64 = 3;
const STREAM_EVENTS: u64 = 4;
const STREAM_IMAGE: u64 = 5;

/// Simulated series start on a Monday at midnight.
pub fn sim_epoch() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2024, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub base_stations: usize,
    /// Grid spacing in meters.
    pub spacing: f64,
    pub users_per_sector: usize,
    pub hours: usize,
    pub amplitude: [f64; 2],
    pub base_load: [f64; 2],
    pub noise_sigma: f64,
    /// Meters per hour.
    pub speed: f64,
    pub event_rate_per_day: f64,
    pub burst_multiplier: f64,
    pub event_duration_h: usize,
    /// Image is `image_size × image_size × 2`.
    pub image_size: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            base_stations: 2,
            spacing: 500.0,
            users_per_sector: 5,
            hours: 24 * 28,
            amplitude: [1.0, 3.0],
            base_load: [2.0, 5.0],
            noise_sigma: 0.3,
            speed: 300.0,
            event_rate_per_day: 0.5,
            burst_multiplier: 1.8,
            event_duration_h: 3,
            image_size: 8,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("simulator: {m}")));
        if self.base_stations == 0 {
            return fail("need at least one base station");
        }
        if self.users_per_sector == 0 {
            return fail("need at least one user per sector");
        }
        if self.hours < 48 {
            return fail("horizon must be at least 48 hours");
        }
        if !(self.noise_sigma >= 0.0) {
            return fail("noise sigma must be nonnegative");
        }
        if !(self.amplitude[0] >= 0.0 && self.amplitude[1] >= self.amplitude[0]) {
            return fail("amplitude range must satisfy 0 <= lo <= hi");
        }
        if !(self.base_load[1] >= self.base_load[0]) {
            return fail("base load range must satisfy lo <= hi");
        }
        if !(self.spacing > 0.0) || !(self.speed >= 0.0) {
            return fail("spacing must be positive and speed nonnegative");
        }
        if !(self.event_rate_per_day >= 0.0) || !(self.burst_multiplier >= 0.0) {
            return fail("event rate and burst multiplier must be nonnegative");
        }
        if self.image_size == 0 {
            return fail("image size must be positive");
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        SECTORS_PER_BS * self.base_stations
    }

    /// Width of the textual feature rows: one event flag per base station
    /// followed by the calendar one-hots.
    pub fn text_dims(&self) -> usize {
        self.base_stations + crate::data::METADATA_WIDTH
    }
}

/// Base-station coordinates on a square grid and the side of the
/// simulation area.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub base_stations: Vec<(f64, f64)>,
    pub extent: f64,
}

impl Layout {
    pub fn grid(n: usize, spacing: f64) -> Self {
        let side = (n as f64).sqrt().ceil().max(1.0) as usize;
        let base_stations = (0..n)
            .map(|k| (((k % side) as f64 + 0.5) * spacing, ((k / side) as f64 + 0.5) * spacing))
            .collect();
        Self {
            base_stations,
            extent: side as f64 * spacing,
        }
    }

    /// A representative point per cell: a quarter spacing from its base
    /// station along the sector's centre bearing.
    pub fn cell_positions(&self, spacing: f64) -> Vec<(f64, f64)> {
        let r = spacing / 4.0;
        let mut out = Vec::with_capacity(self.base_stations.len() * SECTORS_PER_BS);
        for &(bx, by) in &self.base_stations {
            for s in 0..SECTORS_PER_BS {
                let bearing = (60.0 + 120.0 * s as f64).to_radians();
                out.push((bx + r * bearing.sin(), by + r * bearing.cos()));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    pub timestamps: Vec<NaiveDateTime>,
    /// Row-major `hours × cells`.
    pub traffic: Vec<f64>,
    pub cells: usize,
    /// Row-major `hours × text_dims`.
    pub event_flags: Vec<f64>,
    pub text_dims: usize,
    pub image: Tensor,
    pub cell_positions: Vec<(f64, f64)>,
    pub layout: Layout,
}

impl SimOutput {
    pub fn hours(&self) -> usize {
        self.timestamps.len()
    }

    pub fn cell_ids(&self) -> Vec<String> {
        (0..self.cells).map(|c| c.to_string()).collect()
    }

    pub fn frame(&self) -> Result<SeriesFrame> {
        SeriesFrame::new(self.timestamps.clone(), self.cell_ids(), self.traffic.clone())
    }

    pub fn task_source(&self) -> Result<TaskSource> {
        Ok(TaskSource {
            frame: self.frame()?,
            exog: self.event_flags.clone(),
            exog_dims: self.text_dims,
            image: self.image.clone(),
            cell_positions: self.cell_positions.clone(),
        })
    }
}

/// Per-user traffic and attachment, row-major `hours × users`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimTrace {
    pub users: usize,
    pub user_traffic: Vec<f64>,
    pub user_cells: Vec<usize>,
}

fn uniform(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    range[0] + (range[1] - range[0]) * rng.gen::<f64>()
}

/// Initial user population: `users_per_sector` users scattered inside each
/// sector wedge of each base station.
pub fn spawn_users(cfg: &SimConfig, layout: &Layout) -> Result<Vec<UserState>> {
    let mut r = rng::stream(cfg.seed, STREAM_USERS);
    let mut users = Vec::with_capacity(cfg.cells() * cfg.users_per_sector);
    for &(bx, by) in &layout.base_stations {
        for s in 0..SECTORS_PER_BS {
            for _ in 0..cfg.users_per_sector {
                let bearing = (120.0 * (s as f64 + r.gen::<f64>())).to_radians();
                let dist = cfg.spacing * (0.05 + 0.4 * r.gen::<f64>());
                let x = (bx + dist * bearing.sin()).clamp(0.0, layout.extent);
                let y = (by + dist * bearing.cos()).clamp(0.0, layout.extent);
                let heading = r.gen::<f64>() * TAU;
                let amplitude = uniform(&mut r, cfg.amplitude);
                let phase = r.gen::<f64>() * 24.0;
                let base_load = uniform(&mut r, cfg.base_load);
                users.push(UserState {
                    x,
                    y,
                    heading,
                    amplitude,
                    phase,
                    base_load,
                    cell: handover(x, y, &layout.base_stations)?,
                });
            }
        }
    }
    Ok(users)
}

/// Per-hour, per-base-station burst flags (row-major `hours × B`).
pub fn draw_events(cfg: &SimConfig) -> Vec<f64> {
    let b = cfg.base_stations;
    let mut flags = vec![0.0; cfg.hours * b];
    if cfg.event_rate_per_day <= 0.0 || cfg.event_duration_h == 0 {
        return flags;
    }
    let mut r = rng::stream(cfg.seed, STREAM_EVENTS);
    let poisson = Poisson::new(cfg.event_rate_per_day).expect("positive rate");
    let days = cfg.hours.div_ceil(24);
    for day in 0..days {
        let k = poisson.sample(&mut r) as usize;
        for _ in 0..k {
            let start = day * 24 + r.gen_range(0..24);
            let bs = r.gen_range(0..b);
            for t in start..(start + cfg.event_duration_h).min(cfg.hours) {
                flags[t * b + bs] = 1.0;
            }
        }
    }
    flags
}

/// `W×H×2` image: a normalised Gaussian density around base stations and a
/// random grid of road rows and columns.
pub fn draw_image(cfg: &SimConfig, layout: &Layout) -> Tensor {
    let n = cfg.image_size;
    let mut data = vec![0.0; n * n * IMAGE_CHANNELS];
    let bw = cfg.spacing / 2.0;
    let mut density = vec![0.0; n * n];
    for x in 0..n {
        for y in 0..n {
            let px = (x as f64 + 0.5) / n as f64 * layout.extent;
            let py = (y as f64 + 0.5) / n as f64 * layout.extent;
            density[x * n + y] = layout
                .base_stations
                .iter()
                .map(|&(bx, by)| (-((px - bx).powi(2) + (py - by).powi(2)) / (2.0 * bw * bw)).exp())
                .sum();
        }
    }
    let peak = density.iter().cloned().fold(0.0, f64::max);
    let mut r = rng::stream(cfg.seed, STREAM_IMAGE);
    let road_cols: Vec<bool> = (0..n).map(|_| r.gen::<f64>() < 0.25).collect();
    let road_rows: Vec<bool> = (0..n).map(|_| r.gen::<f64>() < 0.25).collect();
    for x in 0..n {
        for y in 0..n {
            let base = (x * n + y) * IMAGE_CHANNELS;
            data[base] = if peak > 0.0 { density[x * n + y] / peak } else { 0.0 };
            data[base + 1] = if road_cols[x] || road_rows[y] { 1.0 } else { 0.0 };
        }
    }
    Tensor::new(vec![n, n, IMAGE_CHANNELS], data).expect("finite image")
}

pub fn run(cfg: &SimConfig) -> Result<SimOutput> {
    Ok(run_traced(cfg)?.0)
}

pub fn run_traced(cfg: &SimConfig) -> Result<(SimOutput, SimTrace)> {
    cfg.validate()?;
    let layout = Layout::grid(cfg.base_stations, cfg.spacing);
    let users = spawn_users(cfg, &layout)?;
    simulate_users(cfg, &layout, users)
}

/// Runs the hourly loop on an explicit user population.
pub fn run_with_users(cfg: &SimConfig, users: Vec<UserState>) -> Result<(SimOutput, SimTrace)> {
    cfg.validate()?;
    let layout = Layout::grid(cfg.base_stations, cfg.spacing);
    simulate_users(cfg, &layout, users)
}

fn simulate_users(cfg: &SimConfig, layout: &Layout, mut users: Vec<UserState>) -> Result<(SimOutput, SimTrace)> {
    let d = cfg.cells();
    let b = cfg.base_stations;
    let n_users = users.len();
    let events = draw_events(cfg);
    let mut noise = rng::stream(cfg.seed, STREAM_NOISE);
    let mut moves = rng::stream(cfg.seed, STREAM_MOBILITY);

    let mut traffic = vec![0.0; cfg.hours * d];
    let mut user_traffic_log = vec![0.0; cfg.hours * n_users];
    let mut user_cells = vec![0; cfg.hours * n_users];
    for t in 0..cfg.hours {
        for (i, u) in users.iter_mut().enumerate() {
            u.cell = handover(u.x, u.y, &layout.base_stations)?;
            let bs = u.cell / SECTORS_PER_BS;
            let mut v = user_traffic(t as f64, u, cfg.noise_sigma, &mut noise);
            if events[t * b + bs] > 0.0 {
                v *= cfg.burst_multiplier;
            }
            traffic[t * d + u.cell] += v;
            user_traffic_log[t * n_users + i] = v;
            user_cells[t * n_users + i] = u.cell;
        }
        for u in users.iter_mut() {
            *u = step_mobility(u, t, 1.0, cfg.speed, layout.extent, &mut moves);
        }
    }

    let timestamps: Vec<NaiveDateTime> = (0..cfg.hours)
        .map(|t| sim_epoch() + Duration::hours(t as i64))
        .collect();
    let meta = one_hot_metadata(&timestamps, &BTreeSet::new());
    let mw = crate::data::METADATA_WIDTH;
    let text_dims = cfg.text_dims();
    let mut event_flags = Vec::with_capacity(cfg.hours * text_dims);
    for t in 0..cfg.hours {
        event_flags.extend_from_slice(&events[t * b..(t + 1) * b]);
        event_flags.extend_from_slice(&meta[t * mw..(t + 1) * mw]);
    }

    let output = SimOutput {
        timestamps,
        traffic,
        cells: d,
        event_flags,
        text_dims,
        image: draw_image(cfg, layout),
        cell_positions: layout.cell_positions(cfg.spacing),
        layout: layout.clone(),
    };
    let trace = SimTrace {
        users: n_users,
        user_traffic: user_traffic_log,
        user_cells,
    };
    Ok((output, trace))
}

/// Relative half-widths of the per-task perturbation factors. Each task
/// scales its amplitude range, base-load range and noise by independent
/// factors drawn from `1 ± width`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskShift {
    pub amplitude: f64,
    pub base_load: f64,
    pub noise: f64,
}

impl TaskShift {
    pub fn identity() -> Self {
        Self::default()
    }
}

/// Windowing and splitting applied to every simulated task.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskPrep {
    pub window: WindowSpec,
    /// Fraction of windows (chronologically first) used as support.
    pub support_ratio: f64,
    /// Adjacency kernel length scale in meters.
    pub length_scale: f64,
}

impl Default for TaskPrep {
    fn default() -> Self {
        Self {
            window: WindowSpec::default(),
            support_ratio: 0.8,
            length_scale: 250.0,
        }
    }
}

/// Configuration of simulated task `index`: its own seed and perturbed
/// traffic parameters.
pub fn task_config(cfg: &SimConfig, index: usize, shift: &TaskShift) -> SimConfig {
    let mut r = rng::stream(rng::derive(cfg.seed, &[0x7a5c, index as u64]), 0);
    let mut factor = |w: f64| 1.0 + w * (2.0 * r.gen::<f64>() - 1.0);
    let fa = factor(shift.amplitude);
    let fb = factor(shift.base_load);
    let fs = factor(shift.noise);
    SimConfig {
        amplitude: [cfg.amplitude[0] * fa.max(0.0), cfg.amplitude[1] * fa.max(0.0)],
        base_load: [cfg.base_load[0] * fb, cfg.base_load[1] * fb],
        noise_sigma: cfg.noise_sigma * fs.max(0.0),
        seed: rng::derive(cfg.seed, &[0x5eed, index as u64]),
        ..cfg.clone()
    }
}

/// Windows one simulated series and splits it chronologically. The scaler
/// is fitted on the rows covered by support windows.
pub fn prepare_sim_task(name: &str, out: &SimOutput, prep: &TaskPrep) -> Result<TaskDataset> {
    let src = out.task_source()?;
    prep.window.validate()?;
    let first = prep.window.first_target();
    if out.hours() <= first {
        return Err(Error::Sizing(format!(
            "{} simulated hours, windowing needs at least {}",
            out.hours(),
            prep.window.min_length()
        )));
    }
    let n_windows = out.hours() - first;
    let n_support = ((prep.support_ratio * n_windows as f64).round() as usize).clamp(1, n_windows);
    let prepared = prepare_task(&src, &prep.window, 0..first + n_support, prep.length_scale)?;
    TaskDataset::split(name, prepared.windows, prep.support_ratio, prepared.adjacency)
}

pub fn make_meta_tasks(cfg: &SimConfig, n_tasks: usize, shift: &TaskShift, prep: &TaskPrep) -> Result<MetaDataset> {
    if n_tasks == 0 {
        return Err(Error::Config("need at least one meta-training task".into()));
    }
    let mut tasks = Vec::with_capacity(n_tasks);
    for i in 0..n_tasks {
        let out = run(&task_config(cfg, i, shift))?;
        tasks.push(prepare_sim_task(&format!("sim-{i}"), &out, prep)?);
    }
    MetaDataset::new(tasks)
}

//! Config-driven experiment harness: build a workload and topology, run a
//! set of planners against the same initial state, simulate plan execution,
//! and emit machine-readable reports.
//!
//! Planning always sees the measured (possibly noise-distorted) bandwidth
//! matrix; realized costs replay the same plan on the true matrix. All
//! planners except plain repartition plan on the locally pre-aggregated
//! state. Identical config and seed reproduce identical reports, except for
//! the wall-clock planning-time column.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{plan_loom, plan_repartition, preaggregate, LoomConfig};
use crate::model::{
    apply_phase, phase_cost, plan_cost, transfer_cost, validate_plan, AggregationPlan,
    AggregationState, Transfer,
};
use crate::oracle::optimal_tree_plan;
use crate::planner::{plan_grasp, PlannerMode};
use crate::topology::{make_uniform_star, simulate_benchmark, BandwidthMatrix, NoiseSpec, Topology};
use crate::workloads::{self, WorkloadSpec};
use crate::{Error, Result};

/// Cluster shape: a uniform star unless explicit per-node link speeds are
/// given. Array lengths must match the workload's node count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    #[serde(default = "default_link_bw")]
    pub link_bw: f64,
    #[serde(default)]
    pub uplink: Option<Vec<f64>>,
    #[serde(default)]
    pub downlink: Option<Vec<f64>>,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            link_bw: default_link_bw(),
            uplink: None,
            downlink: None,
        }
    }
}

fn default_link_bw() -> f64 {
    1.0
}

impl TopologyConfig {
    fn build(&self, n: usize) -> Result<Topology> {
        if self.uplink.is_none() && self.downlink.is_none() {
            return make_uniform_star(n, self.link_bw);
        }
        let fill = || vec![self.link_bw; n];
        let up = self.uplink.clone().unwrap_or_else(fill);
        let down = self.downlink.clone().unwrap_or_else(fill);
        if up.len() != n || down.len() != n {
            return Err(Error::Config(format!(
                "topology.uplink/downlink must list {n} nodes, got {} and {}",
                up.len(),
                down.len()
            )));
        }
        Topology::new(up, down)
    }
}

/// Tree fan-in from the config file: a count, or "auto" to derive it from
/// the data's combining benefit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FaninSetting {
    Count(usize),
    Mode(String),
}

impl Default for FaninSetting {
    fn default() -> Self {
        FaninSetting::Count(5)
    }
}

impl FaninSetting {
    fn resolve(&self) -> Result<LoomConfig> {
        match self {
            FaninSetting::Count(f) if *f < 2 => Err(Error::Config(format!(
                "loom_fanin: fan-in must be at least 2, got {f}"
            ))),
            FaninSetting::Count(f) => Ok(LoomConfig::Fixed(*f)),
            FaninSetting::Mode(m) if m == "auto" => Ok(LoomConfig::Auto),
            FaninSetting::Mode(m) => Err(Error::Config(format!(
                "loom_fanin: expected a count or \"auto\", got \"{m}\""
            ))),
        }
    }
}

/// One experiment: workload, cluster, measurement noise, and the planner
/// lineup. Deserialized from a TOML file; command-line flags override
/// fields after loading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub topology: TopologyConfig,
    #[serde(default)]
    pub noise: NoiseSpec,
    /// At least one of: grasp, grasp_exact, repart, preagg_repart,
    /// loom, loom(N), loom(auto), oracle.
    pub planners: Vec<String>,
    #[serde(default = "default_tuple_width")]
    pub tuple_width: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Fan-in for bare "loom" entries; inline loom(N) overrides it.
    #[serde(default)]
    pub loom_fanin: FaninSetting,
    #[serde(default = "default_oracle_limit")]
    pub oracle_node_limit: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Planner the sweep speedup column is normalized against.
    #[serde(default = "default_sweep_baseline")]
    pub sweep_baseline: String,
    /// Minhash signature length for the estimating planner.
    #[serde(default = "default_sketch_hashes")]
    pub sketch_hashes: usize,
}

fn default_tuple_width() -> f64 {
    1.0
}

fn default_oracle_limit() -> usize {
    crate::oracle::DEFAULT_NODE_LIMIT
}

fn default_sweep_baseline() -> String {
    "preagg_repart".into()
}

fn default_sketch_hashes() -> usize {
    100
}

impl ExperimentConfig {
    pub fn effective_seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

/// Parse a config file. Relative workload file paths are rebased onto the
/// config's directory so experiment bundles stay relocatable.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut cfg: ExperimentConfig =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if let Some(dir) = path.parent() {
        for f in cfg.workload.files.iter_mut() {
            if f.is_relative() {
                *f = dir.join(&*f);
            }
        }
    }
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlannerChoice {
    Grasp,
    GraspExact,
    Repart,
    PreaggRepart,
    Loom(LoomConfig),
    Oracle,
}

impl PlannerChoice {
    pub fn name(self) -> &'static str {
        match self {
            PlannerChoice::Grasp => "grasp",
            PlannerChoice::GraspExact => "grasp_exact",
            PlannerChoice::Repart => "repart",
            PlannerChoice::PreaggRepart => "preagg_repart",
            PlannerChoice::Loom(_) => "loom",
            PlannerChoice::Oracle => "oracle",
        }
    }
}

fn parse_planner(token: &str, default_fanin: LoomConfig) -> Result<PlannerChoice> {
    let t = token.trim();
    if let Some(inner) = t.strip_prefix("loom(").and_then(|r| r.strip_suffix(')')) {
        if inner == "auto" {
            return Ok(PlannerChoice::Loom(LoomConfig::Auto));
        }
        return match inner.parse::<usize>() {
            Ok(f) if f >= 2 => Ok(PlannerChoice::Loom(LoomConfig::Fixed(f))),
            Ok(f) => Err(Error::Config(format!(
                "planner \"{t}\": fan-in must be at least 2, got {f}"
            ))),
            Err(_) => Err(Error::Config(format!("bad tree fan-in in planner \"{t}\""))),
        };
    }
    match t {
        "grasp" => Ok(PlannerChoice::Grasp),
        "grasp_exact" => Ok(PlannerChoice::GraspExact),
        "repart" => Ok(PlannerChoice::Repart),
        "preagg_repart" => Ok(PlannerChoice::PreaggRepart),
        "loom" => Ok(PlannerChoice::Loom(default_fanin)),
        "oracle" => Ok(PlannerChoice::Oracle),
        other => Err(Error::Config(format!(
            "unknown planner \"{other}\"; expected grasp, grasp_exact, repart, preagg_repart, loom, loom(N), loom(auto), or oracle"
        ))),
    }
}

/// Parse and validate the planner lineup: nonempty, known tokens, no
/// duplicate report names.
pub fn resolve_planners(cfg: &ExperimentConfig) -> Result<Vec<PlannerChoice>> {
    if cfg.planners.is_empty() {
        return Err(Error::Config("planners: need at least one planner".into()));
    }
    let default_fanin = cfg.loom_fanin.resolve()?;
    let mut out = Vec::with_capacity(cfg.planners.len());
    for (i, token) in cfg.planners.iter().enumerate() {
        let choice = parse_planner(token, default_fanin)
            .map_err(|e| Error::Config(format!("planners[{i}]: {e}")))?;
        if out.iter().any(|&c: &PlannerChoice| c.name() == choice.name()) {
            return Err(Error::Config(format!(
                "planners[{i}]: duplicate planner \"{}\"",
                choice.name()
            )));
        }
        out.push(choice);
    }
    Ok(out)
}

/// Which side of a node's access link an interval occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkDirection {
    Up,
    Down,
}

impl std::fmt::Display for LinkDirection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LinkDirection::Up => "up",
            LinkDirection::Down => "down",
        })
    }
}

/// One contiguous busy window on a node's uplink or downlink under the true
/// bandwidth matrix. Transfers shorter than their phase leave an idle tail
/// until the next phase boundary.
#[derive(Debug, Clone, Serialize)]
pub struct BusyInterval {
    pub link: usize,
    pub direction: LinkDirection,
    pub start: f64,
    pub end: f64,
    pub tuples: u64,
}

/// Everything measured about one planner's run.
#[derive(Debug, Clone, Serialize)]
pub struct PlannerRun {
    pub planner: String,
    /// Plan cost under the measured matrix the planner believed.
    pub planned_cost: f64,
    /// Plan cost replayed on the true matrix.
    pub realized_cost: f64,
    pub per_phase_realized: Vec<f64>,
    pub phase_count: usize,
    /// Tuples that crossed a mapped destination's downlink.
    pub dest_tuples: u64,
    pub received_by_node: Vec<u64>,
    pub planning_seconds: f64,
    pub phases: Vec<Vec<Transfer>>,
    pub timeline: Vec<BusyInterval>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub seed: u64,
    pub config: ExperimentConfig,
    pub runs: Vec<PlannerRun>,
}

fn build_timeline(
    state: &AggregationState,
    plan: &AggregationPlan,
    bw: &BandwidthMatrix,
) -> Result<Vec<BusyInterval>> {
    let w = state.tuple_width();
    let mut cur = state.clone();
    let mut intervals = Vec::new();
    let mut clock = 0.0;
    for phase in &plan.phases {
        let dur = phase_cost(&cur, phase, bw)?;
        for tr in phase {
            let tuples = cur.tuples(tr.source, tr.partition);
            let cost = transfer_cost(tuples as f64, w, bw.get(tr.source, tr.dest))?;
            intervals.push(BusyInterval {
                link: tr.source,
                direction: LinkDirection::Up,
                start: clock,
                end: clock + cost,
                tuples,
            });
            intervals.push(BusyInterval {
                link: tr.dest,
                direction: LinkDirection::Down,
                start: clock,
                end: clock + cost,
                tuples,
            });
        }
        apply_phase(&mut cur, phase)?;
        clock += dur;
    }
    Ok(intervals)
}

/// Run every configured planner on the same generated instance.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SimReport> {
    if !cfg.tuple_width.is_finite() || cfg.tuple_width <= 0.0 {
        return Err(Error::Config(format!(
            "tuple_width must be positive, got {}",
            cfg.tuple_width
        )));
    }
    let planners = resolve_planners(cfg)?;
    let seed = cfg.effective_seed();
    let raw = workloads::generate(&cfg.workload, seed, cfg.tuple_width)?;
    let top = cfg.topology.build(raw.node_count())?;
    let true_bw = BandwidthMatrix::from_topology(&top);
    let measured = simulate_benchmark(&true_bw, cfg.noise, seed.wrapping_add(1))?;
    let pre = preaggregate(&raw);

    if planners.contains(&PlannerChoice::Oracle) {
        if pre.partition_count() != 1 || pre.all_to_one_destination().is_none() {
            return Err(Error::Config(
                "oracle requires a single-partition all-to-one workload".into(),
            ));
        }
        if raw.node_count() > cfg.oracle_node_limit {
            return Err(Error::Config(format!(
                "oracle cannot search {} nodes (limit {})",
                raw.node_count(),
                cfg.oracle_node_limit
            )));
        }
    }

    let mut runs = Vec::with_capacity(planners.len());
    for &choice in &planners {
        // Plain repartition ships raw data; everything else aggregates
        // locally first.
        let state = match choice {
            PlannerChoice::Repart => &raw,
            _ => &pre,
        };
        let started = Instant::now();
        let plan = match choice {
            PlannerChoice::Grasp => plan_grasp(
                state,
                &measured,
                PlannerMode::Estimates {
                    hash_count: cfg.sketch_hashes,
                    seed: seed.wrapping_add(2),
                },
            )?,
            PlannerChoice::GraspExact => plan_grasp(state, &measured, PlannerMode::Exact)?,
            PlannerChoice::Repart | PlannerChoice::PreaggRepart => plan_repartition(state)?,
            PlannerChoice::Loom(lc) => plan_loom(state, lc)?,
            PlannerChoice::Oracle => {
                optimal_tree_plan(state, &measured, cfg.oracle_node_limit)?.plan
            }
        };
        let planning_seconds = started.elapsed().as_secs_f64();

        let violations = validate_plan(state, &plan);
        if !violations.is_empty() {
            return Err(Error::PlanViolation(format!(
                "{}: {}",
                choice.name(),
                violations.join("; ")
            )));
        }
        let planned = plan_cost(state, &plan, &measured)?;
        let realized = plan_cost(state, &plan, &true_bw)?;
        let timeline = build_timeline(state, &plan, &true_bw)?;
        runs.push(PlannerRun {
            planner: choice.name().to_string(),
            planned_cost: planned.total,
            realized_cost: realized.total,
            per_phase_realized: realized.per_phase.clone(),
            phase_count: plan.phase_count(),
            dest_tuples: realized.dest_tuples(),
            received_by_node: realized.received.clone(),
            planning_seconds,
            phases: plan.phases.clone(),
            timeline,
        });
    }
    Ok(SimReport {
        seed,
        config: cfg.clone(),
        runs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
    Both,
}

impl OutputFormat {
    fn csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }

    fn json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }
}

/// Costs carry six significant digits in every CSV.
pub fn format_cost(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0.00000".into();
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = 5 - exp;
    if decimals >= 0 {
        format!("{:.*}", decimals as usize, x)
    } else {
        let scale = 10f64.powi(-decimals);
        format!("{:.0}", (x / scale).round() * scale)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

/// Write summary.csv plus one timeline per planner, and/or report.json.
/// Returns the files written.
pub fn emit_report(
    report: &SimReport,
    out_dir: &Path,
    format: OutputFormat,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", out_dir.display()),
        ))
    })?;
    let mut written = Vec::new();
    if format.csv() {
        let mut summary =
            String::from("planner,planned_cost,realized_cost,phases,dest_tuples,planning_time\n");
        for run in &report.runs {
            let _ = writeln!(
                summary,
                "{},{},{},{},{},{:.6}",
                run.planner,
                format_cost(run.planned_cost),
                format_cost(run.realized_cost),
                run.phase_count,
                run.dest_tuples,
                run.planning_seconds
            );
        }
        let path = out_dir.join("summary.csv");
        write_file(&path, &summary)?;
        written.push(path);

        for run in &report.runs {
            let mut timeline = String::from("link_id,direction,start,end,tuples\n");
            for iv in &run.timeline {
                let _ = writeln!(
                    timeline,
                    "{},{},{},{},{}",
                    iv.link,
                    iv.direction,
                    format_cost(iv.start),
                    format_cost(iv.end),
                    iv.tuples
                );
            }
            let path = out_dir.join(format!("timeline_{}.csv", run.planner));
            write_file(&path, &timeline)?;
            written.push(path);
        }
    }
    if format.json() {
        let path = out_dir.join("report.json");
        let body = serde_json::to_string_pretty(report)
            .map_err(|e| Error::Config(format!("report serialization: {e}")))?;
        write_file(&path, &(body + "\n"))?;
        written.push(path);
    }
    Ok(written)
}

/// One (axis value, planner) sweep measurement.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub planner: String,
    pub planned_cost: f64,
    pub realized_cost: f64,
    pub phase_count: usize,
    pub dest_tuples: u64,
    pub planning_seconds: f64,
    /// Baseline realized cost divided by this planner's realized cost.
    pub speedup: f64,
}

fn apply_axis(cfg: &mut ExperimentConfig, axis: &str, value: &str) -> Result<()> {
    fn parsed<T: std::str::FromStr>(axis: &str, value: &str) -> Result<T> {
        value
            .parse::<T>()
            .map_err(|_| Error::Config(format!("axis {axis}: cannot parse \"{value}\"")))
    }
    match axis {
        "jaccard" => cfg.workload.jaccard = parsed(axis, value)?,
        "dup_factor" => cfg.workload.dup_factor = parsed(axis, value)?,
        "hot_tuples" => cfg.workload.hot_tuples = parsed(axis, value)?,
        "tuples_per_node" => cfg.workload.tuples_per_node = parsed(axis, value)?,
        "node_count" => cfg.workload.node_count = parsed(axis, value)?,
        "exponent" => cfg.workload.exponent = parsed(axis, value)?,
        "key_domain" => cfg.workload.key_domain = parsed(axis, value)?,
        "seed" => cfg.seed = Some(parsed(axis, value)?),
        "tuple_width" => cfg.tuple_width = parsed(axis, value)?,
        "link_bw" => cfg.topology.link_bw = parsed(axis, value)?,
        "sketch_hashes" => cfg.sketch_hashes = parsed(axis, value)?,
        "noise_percent" => {
            let percent: f64 = parsed(axis, value)?;
            cfg.noise = if percent == 0.0 {
                NoiseSpec::None
            } else {
                match cfg.noise {
                    NoiseSpec::PerEntry { .. } => NoiseSpec::PerEntry { percent },
                    _ => NoiseSpec::Underestimate { percent },
                }
            };
        }
        "loom_fanin" => {
            cfg.loom_fanin = if value == "auto" {
                FaninSetting::Mode("auto".into())
            } else {
                FaninSetting::Count(parsed(axis, value)?)
            };
        }
        other => {
            return Err(Error::Config(format!(
                "unknown sweep axis \"{other}\"; expected jaccard, dup_factor, hot_tuples, \
                 tuples_per_node, node_count, exponent, key_domain, seed, tuple_width, link_bw, \
                 sketch_hashes, noise_percent, or loom_fanin"
            )))
        }
    }
    Ok(())
}

/// Run the experiment once per axis value and flatten the reports into
/// speedup-annotated rows. The speedup baseline planner must be in the
/// lineup.
pub fn run_sweep(cfg: &ExperimentConfig, axis: &str, values: &[String]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config(format!("axis {axis}: no values given")));
    }
    let planners = resolve_planners(cfg)?;
    if !planners.iter().any(|p| p.name() == cfg.sweep_baseline) {
        return Err(Error::Config(format!(
            "sweep baseline \"{}\" is not among the configured planners",
            cfg.sweep_baseline
        )));
    }
    let mut rows = Vec::new();
    for value in values {
        let mut point = cfg.clone();
        apply_axis(&mut point, axis, value)?;
        let report = run_experiment(&point)?;
        let base = report
            .runs
            .iter()
            .find(|r| r.planner == cfg.sweep_baseline)
            .expect("baseline presence validated above")
            .realized_cost;
        for run in &report.runs {
            rows.push(SweepRow {
                axis: axis.to_string(),
                value: value.clone(),
                planner: run.planner.clone(),
                planned_cost: run.planned_cost,
                realized_cost: run.realized_cost,
                phase_count: run.phase_count,
                dest_tuples: run.dest_tuples,
                planning_seconds: run.planning_seconds,
                speedup: base / run.realized_cost,
            });
        }
    }
    Ok(rows)
}

/// Write sweep.csv and/or sweep.json; returns the files written.
pub fn emit_sweep(rows: &[SweepRow], out_dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", out_dir.display()),
        ))
    })?;
    let mut written = Vec::new();
    if format.csv() {
        let mut body = String::from(
            "axis,value,planner,planned_cost,realized_cost,phases,dest_tuples,planning_time,speedup\n",
        );
        for r in rows {
            let _ = writeln!(
                body,
                "{},{},{},{},{},{},{},{:.6},{}",
                r.axis,
                r.value,
                r.planner,
                format_cost(r.planned_cost),
                format_cost(r.realized_cost),
                r.phase_count,
                r.dest_tuples,
                r.planning_seconds,
                format_cost(r.speedup)
            );
        }
        let path = out_dir.join("sweep.csv");
        write_file(&path, &body)?;
        written.push(path);
    }
    if format.json() {
        let path = out_dir.join("sweep.json");
        let body = serde_json::to_string_pretty(rows)
            .map_err(|e| Error::Config(format!("sweep serialization: {e}")))?;
        write_file(&path, &(body + "\n"))?;
        written.push(path);
    }
    Ok(written)
}

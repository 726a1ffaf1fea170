use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use semijet::error::{Error, Result};
use semijet::experiments::{
    find_dt_max, run_benchmark, run_cassini, run_collapse_circle, run_convergence, run_evolution, run_multibody,
    run_stability_sweep, DtSpec, ExperimentConfig, GridParams, Method, RunReport, ShapeSpec,
};
use semijet::interpolation::JetOrder;
use semijet::transport::TimeOrder;
use semijet::velocity::VelocityModel;

#[derive(Parser)]
#[command(name = "semijet", version, about = "Level-set jet scheme experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Unit circle under mean curvature flow, compared with the exact radius.
    CollapseCircle(Common),
    /// 3D Cassini oval pinching off under mean curvature flow.
    Cassini(Common),
    /// Two ellipses and a circle under volume-conserving flow.
    Multibody(Common),
    /// Five-lobed star under mean curvature flow.
    Star(Common),
    /// Stability classification of a volume-corrected circle.
    StabilitySweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        list: DtList,
        /// Bisect the largest stable step between LO and HI (in units of h²).
        #[arg(long, num_args = 2, value_names = ["LO", "HI"], conflicts_with_all = ["dt_list", "dt_h2_list"])]
        bisect: Option<Vec<f64>>,
        /// Relative bracket width at which bisection stops.
        #[arg(long, default_value_t = 0.01)]
        rel_width: f64,
    },
    /// Circle collapse for each method and time step, with evolution timings.
    Bench {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        list: DtList,
        /// Methods to compare.
        #[arg(long, value_delimiter = ',', default_value = "weno,semijet")]
        methods: Vec<Method>,
    },
    /// Circle collapse over a list of time steps with observed orders.
    Convergence {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        list: DtList,
    },
}

#[derive(Args)]
struct DtList {
    /// Absolute time steps.
    #[arg(long, value_delimiter = ',', conflicts_with = "dt_h2_list")]
    dt_list: Option<Vec<f64>>,
    /// Time steps as multiples of h².
    #[arg(long, value_delimiter = ',')]
    dt_h2_list: Option<Vec<f64>>,
}

impl DtList {
    fn resolve(&self, h: f64) -> Option<Vec<f64>> {
        match (&self.dt_list, &self.dt_h2_list) {
            (Some(d), _) => Some(d.clone()),
            (None, Some(c)) => Some(c.iter().map(|c| c * h * h).collect()),
            (None, None) => None,
        }
    }
}

#[derive(Args)]
struct Common {
    /// JSON file with a full run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Nodes per axis on [-2, 2], both ends included.
    #[arg(long, conflicts_with = "h")]
    grid: Option<usize>,
    /// Grid spacing; the grid is centred on the origin.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long, conflicts_with = "dt_h2")]
    dt: Option<f64>,
    /// Time step as a multiple of h².
    #[arg(long)]
    dt_h2: Option<f64>,
    /// Jet order: 0 or p1.
    #[arg(long)]
    jet: Option<JetOrder>,
    /// Time order: 1 or 2.
    #[arg(long)]
    time_order: Option<TimeOrder>,
    #[arg(long)]
    beta: Option<f64>,
    /// Offset of the sub-grid points.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    end_time: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    method: Option<Method>,
    /// Velocity model: mcf, vcmcf or zero.
    #[arg(long)]
    velocity: Option<VelocityModel>,
    /// Band half-width in grid spacings.
    #[arg(long)]
    band: Option<f64>,
    /// Shift the level set after every step to restore the initial volume.
    #[arg(long)]
    volume_correction: bool,
    /// Write an interface snapshot every K steps.
    #[arg(long, value_name = "K")]
    snapshot_every: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn build(&self, preset: ExperimentConfig) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)
                .map_err(|e| Error::Usage(format!("bad config {}: {e}", path.display())))?,
            None => preset,
        };
        if let Some(n) = self.grid {
            cfg.grid = GridParams { nodes: Some(n), h: None, ..cfg.grid };
        }
        if let Some(h) = self.h {
            cfg.grid = GridParams { nodes: None, h: Some(h), ..cfg.grid };
        }
        if let Some(dt) = self.dt {
            cfg.dt = DtSpec::Absolute(dt);
        }
        if let Some(c) = self.dt_h2 {
            cfg.dt = DtSpec::HSquared(c);
        }
        if let Some(j) = self.jet {
            cfg.jet = j;
        }
        if let Some(o) = self.time_order {
            cfg.time_order = o;
        }
        if let Some(b) = self.beta {
            cfg.beta = b;
        }
        if let Some(e) = self.eps {
            cfg.eps = e;
        }
        if let Some(t) = self.end_time {
            cfg.end_time = Some(t);
            cfg.steps = None;
        }
        if let Some(k) = self.steps {
            cfg.steps = Some(k);
        }
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(v) = self.velocity {
            cfg.velocity = v;
        }
        if let Some(b) = self.band {
            cfg.band_width = b;
        }
        if self.volume_correction {
            cfg.volume_correction = true;
        }
        if self.snapshot_every.is_some() {
            cfg.snapshot_every = self.snapshot_every;
        }
        if self.out.is_some() {
            cfg.out_dir = self.out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn preset(name: &str) -> ExperimentConfig {
    let base = ExperimentConfig { name: name.into(), ..Default::default() };
    match name {
        "cassini" => ExperimentConfig {
            shape: ShapeSpec::named("cassini").unwrap(),
            grid: GridParams::with_spacing(3, 0.0634),
            end_time: Some(0.0806),
            ..base
        },
        "multibody" => ExperimentConfig {
            shape: ShapeSpec::EllipseSet,
            grid: GridParams::with_spacing(2, 0.0634),
            dt: DtSpec::HSquared(0.5),
            end_time: Some(0.15),
            velocity: VelocityModel::Vcmcf,
            ..base
        },
        "star" => ExperimentConfig {
            shape: ShapeSpec::named("star").unwrap(),
            end_time: Some(0.05),
            ..base
        },
        "stability-sweep" => ExperimentConfig {
            velocity: VelocityModel::Vcmcf,
            volume_correction: true,
            end_time: None,
            ..base
        },
        _ => base,
    }
}

fn summarize(r: &RunReport) {
    if let Some(e) = r.final_error {
        println!("t = {:.6}  exact radius = {:.6}  mean radius = {:.6}  L∞ = {:.3e}", e.t, e.exact_radius, e.mean_radius, e.linf);
    }
    if let Some(last) = r.records.last() {
        println!(
            "steps = {}  t = {:.6}  volume = {:.6}  components = {}  max speed = {:.4}",
            last.step, last.t, last.volume, last.components, last.max_speed
        );
    }
    if let Some(v) = r.volume_change {
        println!("volume change = {:+.3}%", 100.0 * v);
    }
    for e in &r.sweep {
        println!("dt = {:.5e} ({:.2} h²)  {}  steps = {}", e.dt, e.dt_over_h2, e.verdict, e.steps_completed);
    }
    if let Some(d) = r.dt_max {
        println!("dt_max = {:.5e} ({:.2} h²)", d, d / (r.h * r.h));
    }
    for b in &r.bench {
        println!("{:8} nodes = {}  steps = {}  L∞ = {:.3e}  evolution = {:.3}s", b.method, b.nodes, b.steps, b.linf, b.evolution_seconds);
    }
    if let Some(c) = &r.convergence {
        for (i, (dt, e)) in c.steps.iter().zip(&c.errors).enumerate() {
            match c.orders.get(i) {
                Some(p) => println!("dt = {dt:.5e}  L∞ = {e:.3e}  order = {p:.2}"),
                None => println!("dt = {dt:.5e}  L∞ = {e:.3e}"),
            }
        }
        println!("regimes = {:?}", c.pattern);
    }
    if let Some(f) = &r.failure {
        println!("note: {f}");
    }
}

fn need_list(list: &DtList, h: f64) -> Result<Vec<f64>> {
    list.resolve(h).ok_or_else(|| Error::Usage("give --dt-list or --dt-h2-list".into()))
}

fn run(cli: Cli) -> Result<RunReport> {
    match cli.command {
        Command::CollapseCircle(c) => {
            let cfg = c.build(preset("collapse-circle"))?;
            run_collapse_circle(&cfg, cfg.out_dir.as_deref())
        }
        Command::Cassini(c) => {
            let cfg = c.build(preset("cassini"))?;
            run_cassini(&cfg, cfg.out_dir.as_deref())
        }
        Command::Multibody(c) => {
            let cfg = c.build(preset("multibody"))?;
            run_multibody(&cfg, cfg.out_dir.as_deref())
        }
        Command::Star(c) => {
            let cfg = c.build(preset("star"))?;
            run_evolution(&cfg, cfg.out_dir.as_deref())
        }
        Command::StabilitySweep { common, list, bisect, rel_width } => {
            let cfg = common.build(preset("stability-sweep"))?;
            let h = cfg.grid_spec()?.h();
            let out = cfg.out_dir.as_deref();
            match bisect {
                Some(b) => find_dt_max(&cfg, b[0] * h * h, b[1] * h * h, rel_width, out),
                None => run_stability_sweep(&cfg, &need_list(&list, h)?, out),
            }
        }
        Command::Bench { common, list, methods } => {
            let cfg = common.build(preset("bench"))?;
            let h = cfg.grid_spec()?.h();
            let dts = list.resolve(h).unwrap_or_else(|| vec![cfg.dt_for(h)]);
            let mut cfgs = Vec::new();
            for &m in &methods {
                for &dt in &dts {
                    cfgs.push(ExperimentConfig { method: m, dt: DtSpec::Absolute(dt), steps: None, ..cfg.clone() });
                }
            }
            run_benchmark(&cfgs, cfg.out_dir.as_deref())
        }
        Command::Convergence { common, list } => {
            let cfg = common.build(preset("convergence"))?;
            let h = cfg.grid_spec()?.h();
            run_convergence(&cfg, &need_list(&list, h)?, cfg.out_dir.as_deref())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) => 2,
        e if e.is_numerical() => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(r) => {
            summarize(&r);
            if let Some(dir) = &r.config.out_dir {
                println!("wrote {}", dir.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

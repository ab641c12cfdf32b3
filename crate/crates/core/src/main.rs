use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use gridmotion::config::{read_config, read_scene};
use gridmotion::io::{
    read_matches, read_trajectory, write_atomic, write_ground_truth, write_labels, write_matches, write_trajectory,
};
use gridmotion::pipeline::{bench, run_filter_pipeline, PipelineConfig};
use gridmotion::pose_eval::{ate, rpe, Trajectory};
use gridmotion::simulator::{generate, SceneConfig};
use gridmotion::stats::StatModel;
use gridmotion::{Error, Result};

#[derive(Parser)]
#[command(name = "gridmotion", version, about = "Separate static and dynamic feature correspondences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Ate,
    RpeTrans,
    RpeRot,
}

#[derive(Subcommand)]
enum Command {
    /// Label a matches file and refine the pose on the static matches.
    Filter {
        #[arg(long)]
        matches: PathBuf,
        /// Trajectory file whose first pose is the initial estimate;
        /// without it the pose is estimated with RANSAC.
        #[arg(long)]
        pose: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Labels file to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        refined_pose_out: Option<PathBuf>,
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
    /// Generate a synthetic frame pair.
    Simulate {
        /// Scene file; the default scene when omitted.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long)]
        out_matches: PathBuf,
        #[arg(long)]
        out_gt: PathBuf,
    },
    /// Compare an estimated trajectory against ground truth.
    Evaluate {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum, default_value = "ate")]
        mode: Mode,
        /// Frame stride for the relative modes.
        #[arg(long, default_value_t = 1)]
        delta: usize,
    },
    /// Print the support model for a neighborhood of n matches.
    Stats {
        #[arg(long, default_value_t = 0.6)]
        t: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 1.0 / 300.0)]
        m_ratio: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 3.0)]
        k: f64,
        /// Number of simulated trials.
        #[arg(long)]
        monte_carlo: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time the filter stages over several scene sizes.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000,8000")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Filter { matches, pose, config, out, refined_pose_out, report_out } => {
            let cfg = match config {
                Some(p) => read_config(&p)?,
                None => PipelineConfig::default(),
            };
            let matches = read_matches(&matches)?;
            let (stamp, pose0) = match pose {
                Some(p) => {
                    let traj = read_trajectory(&p)?;
                    let &(t, pose) =
                        traj.poses().first().ok_or_else(|| Error::Config(format!("{} holds no pose", p.display())))?;
                    (t, Some(pose))
                }
                None => (0.0, None),
            };
            let output = run_filter_pipeline(&matches, pose0.as_ref(), &cfg)?;
            write_labels(&out, &output.labels)?;
            if let Some(p) = refined_pose_out {
                write_trajectory(&p, &Trajectory::new(vec![(stamp, output.refined_pose)])?)?;
            }
            if let Some(p) = report_out {
                write_atomic(&p, &output.report.to_text(false))?;
            }
            let c = output.report.counts;
            eprintln!(
                "{} matches: {} static, {} dynamic in {} clusters, {} unknown",
                matches.len(),
                c.static_,
                c.dynamic,
                output.report.clusters.len(),
                c.unknown
            );
            for t in &output.report.timings {
                eprintln!("  {:<16} {:9.3} ms", t.stage, t.millis);
            }
            eprintln!("  {:<16} {:9.3} ms", "total", output.report.total_millis);
        }
        Command::Simulate { scene, out_matches, out_gt } => {
            let cfg = match scene {
                Some(p) => read_scene(&p)?,
                None => SceneConfig::default(),
            };
            let (matches, gt) = generate(&cfg)?;
            write_matches(&out_matches, &matches)?;
            write_ground_truth(&out_gt, &gt)?;
            eprintln!("{} matches, {} dynamic", matches.len(), gt.dynamic_ids.len());
        }
        Command::Evaluate { est, gt, mode, delta } => {
            let est = read_trajectory(&est)?;
            let gt = read_trajectory(&gt)?;
            let m = match mode {
                Mode::Ate => ate(&est, &gt)?,
                Mode::RpeTrans => rpe(&est, &gt, delta)?.0,
                Mode::RpeRot => rpe(&est, &gt, delta)?.1,
            };
            println!("rmse = {}\nmae = {}", m.rmse, m.mae);
        }
        Command::Stats { t, beta, m_ratio, n, k, monte_carlo, seed } => {
            let model = StatModel::new(t, beta, m_ratio)?;
            let r = model.separability(n, k);
            println!("p_true = {}", r.p_true);
            println!("p_false = {}", r.p_false);
            println!("mean_true = {}\nsd_true = {}", r.mean_true, r.sd_true);
            println!("mean_false = {}\nsd_false = {}", r.mean_false, r.sd_false);
            println!("threshold = {}", r.threshold);
            println!("separable = {}", r.separable);
            if let Some(trials) = monte_carlo {
                let (emp_true, emp_false) = model.monte_carlo_check(n, trials, seed);
                println!("empirical_p_true = {emp_true}\nempirical_p_false = {emp_false}");
            }
        }
        Command::Bench { sizes, seed } => {
            println!("size,millis");
            for r in bench(&sizes, seed)? {
                println!("{},{:.3}", r.size, r.millis);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vkfusion::config::FusionConfig;
use vkfusion::dataio::{base_dir, predictions_to_string, read_dataset, read_predictions, write_dataset};
use vkfusion::fusion::RoomBounds;
use vkfusion::pipeline::{bench, evaluate, fuse_dataset, Prepared, RunOptions};
use vkfusion::synthgen::{default_room, generate, RigStyle, Scenario, SynthConfig};
use vkfusion::{viz, Error};

#[derive(Parser)]
#[command(name = "vkf", version, about = "Multi-view 3D pose fusion from 2D keypoints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse every frame of a dataset into 3D poses.
    Fuse {
        #[arg(long)]
        dataset: PathBuf,
        /// Predictions file; stdout when omitted.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        fusion: FusionArgs,
    },
    /// Score predictions against dataset labels.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Also write the report as JSON ("-" prints JSON instead of the table).
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Generate a synthetic dataset with labels.
    Synth(SynthArgs),
    /// Time the fusion stages, one frame at a time.
    Bench {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Also write the report as JSON ("-" prints JSON instead of the table).
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        fusion: FusionArgs,
    },
    /// Write PLY/SVG views of one predicted frame, optionally grid and
    /// heatmap dumps.
    Viz {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        frame: String,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Horizontal slice of the fused grid at this height (mm).
        #[arg(long)]
        grid_slice: Option<f64>,
        /// Max-over-height view of the fused grid.
        #[arg(long)]
        top_view: bool,
        /// Heatmap and person-id images of every view.
        #[arg(long)]
        dump_heatmaps: bool,
        /// Restrict slices and heatmaps to one joint; also picks the joint of
        /// the id images (default 0).
        #[arg(long)]
        joint: Option<usize>,
    },
}

#[derive(Args)]
struct FusionArgs {
    /// TOML file with any fusion settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    voxel_size: Option<f64>,
    #[arg(long)]
    peak_threshold: Option<f32>,
    /// Fusion volume as minx,miny,minz,maxx,maxy,maxz (mm); defaults to the
    /// dataset room.
    #[arg(long, value_parser = parse_bounds)]
    bounds: Option<RoomBounds>,
    #[arg(long)]
    center_outlier: Option<f64>,
    #[arg(long)]
    limb_max_dist: Option<f64>,
    #[arg(long)]
    min_joints: Option<usize>,
    #[arg(long)]
    merge_overlap: Option<f64>,
    #[arg(long)]
    use_depth: bool,
    #[arg(long)]
    depth_min_points: Option<u32>,
    #[arg(long)]
    depth_dilation: Option<u32>,
    /// Use only the first k cameras of the dataset.
    #[arg(long)]
    cameras: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long, default_value = "synth")]
    name: String,
    #[arg(long, default_value = "body13")]
    skeleton: String,
    /// random | ghost
    #[arg(long, default_value = "random")]
    scenario: Scenario,
    #[arg(long, default_value_t = 4)]
    cameras: usize,
    /// corners | ring
    #[arg(long, default_value = "corners")]
    rig: RigStyle,
    #[arg(long, default_value_t = 1)]
    persons: usize,
    #[arg(long, default_value_t = 10)]
    frames: usize,
    #[arg(long, default_value_t = 25.0)]
    fps: f64,
    /// Mean 2D keypoint displacement (px).
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Probability of dropping a visible keypoint.
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    /// Per-axis standard deviation of 3D joint noise (mm).
    #[arg(long, default_value_t = 0.0)]
    pose_noise: f64,
    /// Depth points per joint and camera; 0 writes no depth.
    #[arg(long, default_value_t = 0)]
    depth_points: usize,
    #[arg(long, value_parser = parse_bounds)]
    room: Option<RoomBounds>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_bounds(s: &str) -> Result<RoomBounds, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let [a, b, c, d, e, f] = v[..] else {
        return Err(format!("expected 6 comma separated numbers, got {}", v.len()));
    };
    RoomBounds::new([a, b, c], [d, e, f]).map_err(|e| e.to_string())
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            e => Failure::Data(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

impl FusionArgs {
    fn options(&self) -> CliResult<RunOptions> {
        let mut c = match &self.config {
            Some(p) => FusionConfig::from_toml_file(p)?,
            None => FusionConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    c.$field = v;
                }
            )*};
        }
        set!(voxel_size, peak_threshold, center_outlier, limb_max_dist, min_joints, merge_overlap, depth_min_points, depth_dilation);
        if self.bounds.is_some() {
            c.bounds = self.bounds;
        }
        c.use_depth |= self.use_depth;
        c.validate()?;
        Ok(RunOptions {
            config: c,
            cameras: self.cameras,
            jobs: self.jobs,
        })
    }
}

fn write_out(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        None => {
            print!("{text}");
            Ok(())
        }
        Some(p) if p == Path::new("-") => {
            print!("{text}");
            Ok(())
        }
        Some(p) => fs::write(p, text).map_err(|e| Failure::Data(format!("{}: {e}", p.display()))),
    }
}

/// Prints `table` unless the JSON goes to stdout.
fn report<T: serde::Serialize>(value: &T, table: String, json: Option<&Path>) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes") + "\n";
    match json {
        Some(p) if p == Path::new("-") => print!("{text}"),
        Some(p) => {
            print!("{table}");
            write_out(Some(p), &text)?;
        }
        None => print!("{table}"),
    }
    Ok(())
}

fn file_name(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fuse { dataset, output, fusion } => {
            let opts = fusion.options()?;
            let doc = read_dataset(&dataset)?;
            let preds = fuse_dataset(&doc, &base_dir(&dataset), &opts)?;
            write_out(output.as_deref(), &predictions_to_string(&preds))
        }
        Command::Eval { predictions, dataset, json } => {
            let preds = read_predictions(&predictions)?;
            let doc = read_dataset(&dataset)?;
            let r = evaluate(&preds, &doc)?;
            report(&r, format!("{r}\n"), json.as_deref())
        }
        Command::Synth(a) => {
            let cfg = SynthConfig {
                name: a.name,
                skeleton: a.skeleton,
                scenario: a.scenario,
                cameras: a.cameras,
                rig: a.rig,
                persons: a.persons,
                frames: a.frames,
                fps: a.fps,
                jitter_px: a.jitter,
                dropout: a.dropout,
                pose_noise: a.pose_noise,
                depth_points_per_joint: a.depth_points,
                room: a.room.unwrap_or_else(default_room),
                seed: a.seed,
            };
            let doc = generate(&cfg)?;
            write_dataset(&doc, &a.output)?;
            Ok(())
        }
        Command::Bench {
            dataset,
            repeats,
            json,
            fusion,
        } => {
            let opts = fusion.options()?;
            let doc = read_dataset(&dataset)?;
            let b = bench(&doc, &base_dir(&dataset), &opts, repeats)?;
            let table = format!(
                "frames {}  repeats {}  voxels {}\n\
                 heatmaps {:>9.2} ms\n\
                 projection {:>7.2} ms\n\
                 peaks {:>12.2} ms\n\
                 grouping {:>9.2} ms\n\
                 total {:>12.2} ms  ({:.2} frames/s)\n",
                b.frames, b.repeats, b.voxels, b.heatmaps_ms, b.projection_ms, b.peaks_ms, b.grouping_ms, b.total_ms, b.fps
            );
            report(&b, table, json.as_deref())
        }
        Command::Viz {
            predictions,
            dataset,
            frame,
            out_dir,
            grid_slice,
            top_view,
            dump_heatmaps,
            joint,
        } => {
            let preds = read_predictions(&predictions)?;
            let doc = read_dataset(&dataset)?;
            let skel = doc.skeleton_def()?;
            if preds.skeleton != doc.skeleton {
                return Err(Failure::Data(format!(
                    "predictions use skeleton {:?}, dataset {:?}",
                    preds.skeleton, doc.skeleton
                )));
            }
            let (Some(fp), Some(fd)) = (preds.frames.iter().find(|f| f.frame == frame), doc.frame(&frame)) else {
                return Err(Failure::Data(format!("unknown frame {frame:?}")));
            };
            fs::create_dir_all(&out_dir).map_err(|e| Failure::Data(format!("{}: {e}", out_dir.display())))?;
            let stem = file_name(&frame);
            let mut written = Vec::new();

            let ply = out_dir.join(format!("{stem}.ply"));
            viz::write_text(&ply, &viz::ply_string(&fp.persons, &skel))?;
            written.push(ply);
            let calibs = doc.calibs()?;
            for v in &fd.views {
                let svg = out_dir.join(format!("{stem}_{}.svg", file_name(&v.camera)));
                let text = viz::svg_overlay(&calibs[&v.camera], &fp.persons, v.detections.as_deref(), &skel);
                viz::write_text(&svg, &text)?;
                written.push(svg);
            }

            if grid_slice.is_some() || top_view || dump_heatmaps {
                let opts = RunOptions::new(preds.config.clone());
                let prep = Prepared::new(&doc, &base_dir(&dataset), &opts)?;
                let index = prep.frame_index(&frame).expect("frame exists");
                let trace = prep.trace(index)?;
                let geo = *trace.grid.geometry();
                if let Some(h) = grid_slice {
                    let iz = ((h - geo.bounds.min[2]) / geo.voxel_size).floor();
                    if !(iz >= 0.0 && (iz as usize) < geo.dims[2]) {
                        return Err(Failure::Usage(format!("slice height {h} mm outside the grid")));
                    }
                    let path = out_dir.join(format!("{stem}_slice_{h}.png"));
                    viz::save_png(&viz::grid_slice(&trace.grid, iz as usize, joint)?, &path)?;
                    written.push(path);
                }
                if top_view {
                    let path = out_dir.join(format!("{stem}_top.png"));
                    viz::save_png(&viz::grid_top_view(&trace.grid), &path)?;
                    written.push(path);
                }
                if dump_heatmaps {
                    let j = joint.unwrap_or(0);
                    if j >= skel.joint_count() {
                        return Err(Failure::Usage(format!("no joint {j}")));
                    }
                    for ((cam, heat), ids) in trace.cameras.iter().zip(&trace.heatmaps).zip(&trace.ids) {
                        let cam = file_name(cam);
                        let path = out_dir.join(format!("{stem}_{cam}_heat.png"));
                        viz::save_png(&viz::heatmap_image(heat, joint), &path)?;
                        written.push(path);
                        let path = out_dir.join(format!("{stem}_{cam}_ids_j{j}.png"));
                        viz::save_png(&viz::id_image(ids, j), &path)?;
                        written.push(path);
                    }
                }
            }
            for p in written {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}

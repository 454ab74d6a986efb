mod error;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use spadcorr::correlator::{
    estimate_crosstalk, normalize, project_axes, project_sum_diff, CorrectedG2, CorrelationAccumulator,
};
use spadcorr::epr::{peak_profile, PeakCoordinate};
use spadcorr::io::{
    export, read_accumulator, read_corrected, write_accumulator, write_corrected, EventFileHeader, EventReader,
    EventWriter, RunConfig, ACCUMULATOR_MAGIC, CORRECTED_MAGIC, EVENT_MAGIC,
};
use spadcorr::optics::MappingMode;
use spadcorr::pipeline::{
    accumulate_parallel, correct_runs, evaluate, run_closed_loop, CorrectionOptions, Evaluation, EvaluationInput,
    PipelineConfig,
};
use spadcorr::sensor::Frame;

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "spadcorr", version, about = "SPAD-array photon-pair correlation pipeline")]
struct Cli {
    /// Run configuration (key = value lines). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 for one per core. Overrides the `threads` key.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Near,
    Far,
}

impl From<Mode> for MappingMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Near => MappingMode::NearField,
            Mode::Far => MappingMode::FarField,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Stage {
    Accidentals,
    Crosstalk,
    Mask,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExportKind {
    /// `dt,counts_per_mframe` from an accumulator or event file.
    DtHist,
    /// Full tensor indexed by linear pixel index.
    Matrix,
    /// Per-axis projections in long format.
    Projections,
    /// Sum and difference coordinate grids.
    SumDiff,
    /// Sum and difference peak profiles of both axes.
    Peaks,
    /// Cross-talk map estimated from an accidental-subtracted far-field tensor.
    Crosstalk,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one run and write an event file.
    Simulate {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the `frames` key.
        #[arg(long)]
        frames: Option<u32>,
        /// Write a record for every frame, including empty ones.
        #[arg(long)]
        keep_empty: bool,
    },
    /// Accumulate an event file into an accumulator snapshot.
    Correlate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correct a near-field and a far-field accumulator.
    Correct {
        #[arg(long)]
        near: PathBuf,
        #[arg(long)]
        far: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Stages to apply. Defaults to the `correct.*` keys.
        #[arg(long, value_enum, value_delimiter = ',')]
        stages: Option<Vec<Stage>>,
    },
    /// Evaluate corrected near-field and far-field tensors.
    Epr {
        #[arg(long)]
        near: PathBuf,
        #[arg(long)]
        far: PathBuf,
        /// Report destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Leave the source-parameter prediction out of the report.
        #[arg(long)]
        no_expected: bool,
    },
    /// Simulate, correlate, correct and evaluate both runs.
    Pipeline {
        /// Overrides the `output.dir` key.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Also write both event files.
        #[arg(long)]
        write_events: bool,
    },
    /// Turn an artifact into CSV plot data.
    Export {
        #[arg(long, value_enum)]
        what: ExportKind,
        #[arg(long)]
        input: PathBuf,
        /// Destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.pipeline.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.pipeline.threads = threads;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.pipeline.threads)
        .build()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Simulate { mode, out, frames, keep_empty } => {
            simulate(&cfg.pipeline, mode.into(), &out, frames.unwrap_or(cfg.pipeline.frames), keep_empty)
        }
        Command::Correlate { input, out } => correlate(&cfg.pipeline, &input, &out),
        Command::Correct { near, far, out_dir, stages } => correct(&cfg.pipeline, &near, &far, &out_dir, stages),
        Command::Epr { near, far, out, no_expected } => epr(&cfg.pipeline, &near, &far, out.as_deref(), !no_expected),
        Command::Pipeline { out_dir, write_events } => {
            pipeline(&cfg.pipeline, &out_dir.unwrap_or(cfg.output_dir.clone()), write_events)
        }
        Command::Export { what, input, out } => export_artifact(&cfg.pipeline, what, &input, out.as_deref()),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::file(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::file(path, e))
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::file(p, e)),
        None => std::io::stdout().lock().write_all(text.as_bytes()).map_err(|e| CliError::data(format!("stdout: {e}"))),
    }
}

fn simulate(
    cfg: &PipelineConfig,
    mode: MappingMode,
    out: &Path,
    frames: u32,
    keep_empty: bool,
) -> Result<(), CliError> {
    let sim = cfg.simulator(mode)?;
    let bin = cfg.sensor.tdc_bin_ps;
    if bin.fract() != 0.0 || bin > u32::MAX as f64 {
        return Err(CliError::config(format!("sensor.tdc_bin_ps = {bin} cannot be stored as whole picoseconds")));
    }
    let header = EventFileHeader {
        geometry: cfg.sensor.geometry,
        tdc_bin_ps: bin as u32,
        bins_per_frame: cfg.sensor.bins_per_frame,
        mapping: Some(mode),
    };
    let mut writer = EventWriter::new(create(out)?, header)?.omit_empty_frames(!keep_empty);
    for frame in sim.stream(frames, cfg.chunk_frames.max(1)) {
        writer.write_frame(&frame)?;
    }
    let (mut sink, bytes) = writer.finish(frames as u64)?;
    sink.flush().map_err(|e| CliError::file(out, e))?;
    log::info!("{frames} frames, {bytes} bytes written to {}", out.display());
    Ok(())
}

fn read_event_accumulator(cfg: &PipelineConfig, input: &Path) -> Result<CorrelationAccumulator, CliError> {
    let mut reader = EventReader::new(open(input)?)?;
    let header = *reader.header();
    let chunk = cfg.chunk_frames.max(1) as usize;
    let mut acc = CorrelationAccumulator::new(header.geometry, header.bins_per_frame, cfg.windows)?;
    let mut buf: Vec<Frame> = Vec::with_capacity(chunk);
    loop {
        buf.clear();
        for frame in reader.by_ref().take(chunk) {
            buf.push(frame?);
        }
        if buf.is_empty() {
            break;
        }
        acc.merge_from(&accumulate_parallel(&buf, header.geometry, header.bins_per_frame, cfg.windows)?)?;
    }
    let total = reader.total_frames().ok_or_else(|| CliError::data("event file has no footer"))?;
    let stored = reader.stored_frames();
    if total < stored {
        return Err(CliError::data(format!("footer claims {total} frames but {stored} are stored")));
    }
    acc.add_empty_frames(total - stored);
    Ok(acc)
}

fn correlate(cfg: &PipelineConfig, input: &Path, out: &Path) -> Result<(), CliError> {
    let acc = read_event_accumulator(cfg, input)?;
    let mut sink = create(out)?;
    write_accumulator(&acc, &mut sink)?;
    sink.flush().map_err(|e| CliError::file(out, e))
}

fn stage_options(base: &CorrectionOptions, stages: Option<Vec<Stage>>) -> Result<CorrectionOptions, CliError> {
    let Some(stages) = stages else {
        return Ok(*base);
    };
    let has = |s| stages.contains(&s);
    let mut opts = *base;
    if !has(Stage::Accidentals) {
        opts.accidentals = spadcorr::pipeline::AccidentalChoice::None;
    } else if opts.accidentals == spadcorr::pipeline::AccidentalChoice::None {
        opts.accidentals = spadcorr::pipeline::AccidentalChoice::ShiftedWindow;
    }
    opts.crosstalk = has(Stage::Crosstalk).then(|| base.crosstalk.unwrap_or_default());
    opts.mask_radius = has(Stage::Mask).then(|| base.mask_radius.unwrap_or(1));
    if opts.crosstalk.is_some() && !has(Stage::Accidentals) {
        return Err(CliError::config("the crosstalk stage requires the accidentals stage"));
    }
    Ok(opts)
}

fn write_corrected_file(g2: &CorrectedG2, path: &Path) -> Result<(), CliError> {
    let mut sink = create(path)?;
    write_corrected(g2, &mut sink)?;
    sink.flush().map_err(|e| CliError::file(path, e))
}

fn correct(
    cfg: &PipelineConfig,
    near: &Path,
    far: &Path,
    out_dir: &Path,
    stages: Option<Vec<Stage>>,
) -> Result<(), CliError> {
    let opts = stage_options(&cfg.corrections, stages)?;
    let near_acc = read_accumulator(open(near)?)?;
    let far_acc = read_accumulator(open(far)?)?;
    let runs = correct_runs(&near_acc, &far_acc, &opts)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::file(out_dir, e))?;
    write_corrected_file(&runs.near, &out_dir.join("near.g2c"))?;
    write_corrected_file(&runs.far, &out_dir.join("far.g2c"))?;
    if let Some(map) = &runs.crosstalk {
        write_text(Some(&out_dir.join("crosstalk.csv")), &export::crosstalk_csv(map))?;
    }
    Ok(())
}

/// Write the report, then turn method failures into a numeric exit.
fn finish_report(evaluation: &Evaluation, out: Option<&Path>) -> Result<(), CliError> {
    let mut json = evaluation.report.to_json();
    json.push('\n');
    write_text(out, &json)?;
    if evaluation.failures.is_empty() {
        return Ok(());
    }
    let list: Vec<String> = evaluation
        .failures
        .iter()
        .map(|(axis, m, why)| format!("{}/{}: {why}", ["x", "y"][*axis], m.label()))
        .collect();
    Err(CliError::numeric(format!("methods failed: {}", list.join("; "))))
}

fn epr(cfg: &PipelineConfig, near: &Path, far: &Path, out: Option<&Path>, expected: bool) -> Result<(), CliError> {
    let near = read_corrected(open(near)?)?;
    let far = read_corrected(open(far)?)?;
    let evaluation = evaluate(&EvaluationInput {
        near: &near,
        far: &far,
        near_mapping: cfg.near,
        far_mapping: cfg.far,
        pixel_pitch_um: cfg.sensor.pixel_pitch_um,
        column_threshold: cfg.column_threshold,
        methods: &cfg.methods,
        expected: expected.then_some(cfg.model),
    })?;
    finish_report(&evaluation, out)
}

fn pipeline(cfg: &PipelineConfig, out_dir: &Path, events: bool) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::file(out_dir, e))?;
    if events {
        simulate(cfg, MappingMode::NearField, &out_dir.join("near.evt"), cfg.frames, false)?;
        simulate(cfg, MappingMode::FarField, &out_dir.join("far.evt"), cfg.frames, false)?;
    }
    let out = run_closed_loop(cfg)?;
    for (acc, name) in [(&out.near_acc, "near.acc"), (&out.far_acc, "far.acc")] {
        let path = out_dir.join(name);
        let mut sink = create(&path)?;
        write_accumulator(acc, &mut sink)?;
        sink.flush().map_err(|e| CliError::file(&path, e))?;
    }
    write_corrected_file(&out.corrected.near, &out_dir.join("near.g2c"))?;
    write_corrected_file(&out.corrected.far, &out_dir.join("far.g2c"))?;
    if let Some(map) = &out.corrected.crosstalk {
        write_text(Some(&out_dir.join("crosstalk.csv")), &export::crosstalk_csv(map))?;
    }
    write_text(Some(&out_dir.join("dt_hist.csv")), &export::dt_hist_csv(&out.far_acc))?;
    finish_report(&out.evaluation, Some(&out_dir.join("report.json")))
}

enum Artifact {
    Accumulator(CorrelationAccumulator),
    Corrected(CorrectedG2),
}

fn load_artifact(cfg: &PipelineConfig, input: &Path) -> Result<Artifact, CliError> {
    let bytes = fs::read(input).map_err(|e| CliError::file(input, e))?;
    let magic = bytes.get(..8).unwrap_or(&[]);
    if magic == EVENT_MAGIC {
        Ok(Artifact::Accumulator(read_event_accumulator(cfg, input)?))
    } else if magic == ACCUMULATOR_MAGIC {
        Ok(Artifact::Accumulator(read_accumulator(bytes.as_slice())?))
    } else if magic == CORRECTED_MAGIC {
        Ok(Artifact::Corrected(read_corrected(bytes.as_slice())?))
    } else {
        Err(CliError::data(format!("{}: not an event file or snapshot", input.display())))
    }
}

fn export_artifact(cfg: &PipelineConfig, what: ExportKind, input: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let artifact = load_artifact(cfg, input)?;
    let g2 = || -> Result<CorrectedG2, CliError> {
        match &artifact {
            Artifact::Accumulator(acc) => Ok(normalize(acc)?),
            Artifact::Corrected(g2) => Ok(g2.clone()),
        }
    };
    let text = match what {
        ExportKind::DtHist => match &artifact {
            Artifact::Accumulator(acc) => export::dt_hist_csv(acc),
            Artifact::Corrected(_) => {
                return Err(CliError::data("corrected tensors carry no time histogram; pass an accumulator"))
            }
        },
        ExportKind::Matrix => export::matrix_csv(&g2()?),
        ExportKind::Projections => {
            let (x, y) = project_axes(&g2()?);
            export::projections_csv(&x, &y)
        }
        ExportKind::SumDiff => export::sum_diff_csv(&project_sum_diff(&g2()?)),
        ExportKind::Peaks => {
            let g2 = g2()?;
            let p = project_sum_diff(&g2);
            let r = g2.mask_radius();
            let profiles = [
                ("x.diff", peak_profile(&p.diff, 0, PeakCoordinate::Difference, r)),
                ("x.sum", peak_profile(&p.sum, 0, PeakCoordinate::Sum, r)),
                ("y.diff", peak_profile(&p.diff, 1, PeakCoordinate::Difference, r)),
                ("y.sum", peak_profile(&p.sum, 1, PeakCoordinate::Sum, r)),
            ];
            let refs: Vec<(&str, _)> = profiles.iter().map(|(l, p)| (*l, p)).collect();
            export::peaks_csv(&refs)
        }
        ExportKind::Crosstalk => {
            let g2 = g2()?;
            let opts = cfg.corrections.crosstalk.unwrap_or_default();
            export::crosstalk_csv(&estimate_crosstalk(&g2, g2.g1(), opts)?)
        }
    };
    write_text(out, &text)
}

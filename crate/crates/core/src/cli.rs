//! Command line front end.
//!
//! Every flag can also be set through an environment variable named
//! `TILESHUFFLE_<FLAG>` (upper case, dashes as underscores).

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataset::{parse_intensities, parse_layout, validate_bundle, DatasetBundle, ProbeLayout, SpotIntensities};
use crate::detect::{detect, DetectParams, MtcMethod, TrimMode};
use crate::error::{Error, Result};
use crate::metrics::{
    fig1_tsv, replicate_sweep, selection_frequency, smooth_track, table1, table1_tsv, Strategy,
    StrategyKind, TopUnit,
};
use crate::normalize::{log2_transform, quantile_normalize, TrackMatrix};
use crate::plot::{line_plot, Series};
use crate::resample::{
    build_pseudo_array, draw_replicate_assignment, run_simulation_batch, NormalizeScope, ProbeSubset,
    PseudoMode, SimulationPlan,
};
use crate::synth::{generate_synthetic, PlantedSegment, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "tileshuffle", version, about = "Permutation detection of expressed regions on tiled arrays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic three-array dataset with planted segments
    Synth(SynthArgs),
    /// Emit log2, quantile-normalized spot values
    Normalize(NormalizeArgs),
    /// Detect expressed regions on each given array
    Detect(DetectArgs),
    /// Run a batch of pseudo-array triplets and write per-simulation area calls
    Simulate(SimulateArgs),
    /// Between-array consistency proportions for each selection strategy
    Table1(Table1Args),
    /// Per-area selection frequency across pseudo-arrays of one array
    Fig1(Fig1Args),
    /// Proportion of areas selected as the number of replicates grows
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Output directory
    #[arg(long, env = "TILESHUFFLE_OUT")]
    out: PathBuf,
    /// Worker threads (default: available parallelism)
    #[arg(long, env = "TILESHUFFLE_THREADS")]
    threads: Option<usize>,
    /// Master seed
    #[arg(long, env = "TILESHUFFLE_SEED", default_value_t = 0)]
    seed: u64,
    /// Also write SVG plots where available
    #[arg(long, env = "TILESHUFFLE_SVG")]
    svg: bool,
}

#[derive(Debug, Args)]
struct InputArgs {
    /// Directory holding layout.tsv and array_1.tsv..array_3.tsv
    #[arg(long, env = "TILESHUFFLE_BUNDLE", conflicts_with_all = ["layout", "intensities"])]
    bundle: Option<PathBuf>,
    /// Layout TSV
    #[arg(long, env = "TILESHUFFLE_LAYOUT")]
    layout: Option<PathBuf>,
    /// Intensity TSV (repeat or comma-separate for several arrays)
    #[arg(long, env = "TILESHUFFLE_INTENSITIES", value_delimiter = ',', num_args = 1..)]
    intensities: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TrimArg {
    TrimExtremes,
    Median,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MtcArg {
    EmpiricalFdr,
    Bh,
}

#[derive(Debug, Args)]
struct DetectFlags {
    /// Window length in bases
    #[arg(long, env = "TILESHUFFLE_WINDOW_SIZE", default_value_t = 1000)]
    window_size: u64,
    #[arg(long, env = "TILESHUFFLE_PERMUTATIONS", default_value_t = 1000)]
    permutations: usize,
    #[arg(long, env = "TILESHUFFLE_GC_BINS", default_value_t = 3)]
    gc_bins: usize,
    #[arg(long, env = "TILESHUFFLE_TRIM_MODE", value_enum, default_value_t = TrimArg::TrimExtremes)]
    trim_mode: TrimArg,
    /// Minimum probes in a scored window
    #[arg(long, env = "TILESHUFFLE_MIN_PROBES", default_value_t = 10)]
    min_probes: usize,
    #[arg(long, env = "TILESHUFFLE_ALPHA", default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, env = "TILESHUFFLE_MTC_METHOD", value_enum, default_value_t = MtcArg::EmpiricalFdr)]
    mtc_method: MtcArg,
    /// Largest gap bridged when merging significant windows
    #[arg(long, env = "TILESHUFFLE_MERGE_GAP", default_value_t = 0)]
    merge_gap: u64,
}

impl DetectFlags {
    fn params(&self, seed: u64) -> DetectParams {
        DetectParams {
            window_size: self.window_size,
            permutations: self.permutations,
            gc_bins: self.gc_bins,
            trim_mode: match self.trim_mode {
                TrimArg::TrimExtremes => TrimMode::TrimExtremes,
                TrimArg::Median => TrimMode::Median,
            },
            min_probes: self.min_probes,
            alpha: self.alpha,
            mtc_method: match self.mtc_method {
                MtcArg::EmpiricalFdr => MtcMethod::EmpiricalFdr,
                MtcArg::Bh => MtcMethod::Bh,
            },
            seed,
            merge_gap: self.merge_gap,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScopeArg {
    Triplet,
    Physical,
}

#[derive(Debug, Args)]
struct NormFlags {
    #[arg(long, env = "TILESHUFFLE_PSEUDOCOUNT", default_value_t = 1.0)]
    pseudocount: f64,
    #[arg(long, env = "TILESHUFFLE_NORMALIZE_SCOPE", value_enum, default_value_t = ScopeArg::Triplet)]
    normalize_scope: ScopeArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Spots,
    Mean,
    Median,
}

impl From<ModeArg> for PseudoMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Spots => PseudoMode::Spots,
            ModeArg::Mean => PseudoMode::Mean,
            ModeArg::Median => PseudoMode::Median,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum HalfArg {
    Even,
    Odd,
}

impl From<HalfArg> for ProbeSubset {
    fn from(h: HalfArg) -> Self {
        match h {
            HalfArg::Even => ProbeSubset::Even,
            HalfArg::Odd => ProbeSubset::Odd,
        }
    }
}

#[derive(Debug, Args)]
struct PlanFlags {
    /// Simulations (pseudo-array triplets)
    #[arg(long, env = "TILESHUFFLE_SIMS", default_value_t = 1000)]
    sims: usize,
    /// Draw independent permutation seeds for the three arrays of a triplet
    #[arg(long, env = "TILESHUFFLE_INDEPENDENT_PERM_SEEDS")]
    independent_perm_seeds: bool,
    #[arg(long, env = "TILESHUFFLE_AREA_SIZE", default_value_t = 100)]
    area_size: u64,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, env = "TILESHUFFLE_CHROM", default_value = "chr8")]
    chrom: String,
    #[arg(long, env = "TILESHUFFLE_REGION_START", default_value_t = 127_640_000)]
    region_start: u64,
    /// Region end; ignored when --probes is given
    #[arg(long, env = "TILESHUFFLE_REGION_END", default_value_t = 129_120_000)]
    region_end: u64,
    /// Size the region to hold exactly this many tiled probes
    #[arg(long, env = "TILESHUFFLE_PROBES")]
    probes: Option<usize>,
    #[arg(long, env = "TILESHUFFLE_TILE_STEP", default_value_t = 20)]
    tile_step: u64,
    #[arg(long, env = "TILESHUFFLE_PROBE_LENGTH", default_value_t = 50)]
    probe_length: u64,
    #[arg(long, env = "TILESHUFFLE_REPLICATES", default_value_t = 10)]
    replicates: usize,
    #[arg(long, env = "TILESHUFFLE_CONTAINERS", default_value_t = 10)]
    containers: usize,
    /// Planted segment START-END:EFFECT (repeatable)
    #[arg(long = "segment", env = "TILESHUFFLE_SEGMENT", value_delimiter = ',')]
    segments: Vec<String>,
    #[arg(long, env = "TILESHUFFLE_BASELINE", default_value_t = 8.0)]
    baseline: f64,
    #[arg(long, env = "TILESHUFFLE_GC_SLOPE", default_value_t = 0.5)]
    gc_slope: f64,
    #[arg(long, env = "TILESHUFFLE_NOISE_SD", default_value_t = 0.3)]
    noise_sd: f64,
    #[arg(long, env = "TILESHUFFLE_CONTAINER_SD", default_value_t = 0.1)]
    container_sd: f64,
    #[arg(long, env = "TILESHUFFLE_ARRAY_SD", default_value_t = 0.2)]
    array_sd: f64,
    #[arg(long, env = "TILESHUFFLE_PROBE_SD", default_value_t = 0.2)]
    probe_sd: f64,
    /// Fraction of probes removed
    #[arg(long, env = "TILESHUFFLE_DROPOUT", default_value_t = 0.0)]
    dropout: f64,
    /// Keep exactly this many probes (overrides --dropout)
    #[arg(long, env = "TILESHUFFLE_KEEP_PROBES")]
    keep_probes: Option<usize>,
}

#[derive(Debug, Args)]
struct NormalizeArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    norm: NormFlags,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    detect: DetectFlags,
    #[command(flatten)]
    norm: NormFlags,
    /// Replicates used per probe (default: all)
    #[arg(long, env = "TILESHUFFLE_REPLICATES")]
    replicates: Option<usize>,
    #[arg(long, env = "TILESHUFFLE_MODE", value_enum, default_value_t = ModeArg::Spots)]
    mode: ModeArg,
    /// Also write the full window table
    #[arg(long, env = "TILESHUFFLE_EMIT_WINDOWS")]
    emit_windows: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    detect: DetectFlags,
    #[command(flatten)]
    norm: NormFlags,
    #[command(flatten)]
    plan: PlanFlags,
    /// Replicates drawn per probe
    #[arg(long, env = "TILESHUFFLE_REPLICATES", default_value_t = 1)]
    replicates: usize,
    #[arg(long, env = "TILESHUFFLE_MODE", value_enum, default_value_t = ModeArg::Spots)]
    mode: ModeArg,
    /// Use only one half of the probes (by rank)
    #[arg(long, env = "TILESHUFFLE_HALF", value_enum)]
    half: Option<HalfArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TopUnitArg {
    Region,
    Window,
}

#[derive(Debug, Args)]
struct Table1Args {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    detect: DetectFlags,
    #[command(flatten)]
    norm: NormFlags,
    #[command(flatten)]
    plan: PlanFlags,
    /// Strategies to evaluate, comma separated
    #[arg(
        long,
        env = "TILESHUFFLE_STRATEGIES",
        value_delimiter = ',',
        default_value = "top30,one-rep,two-rep-half,median-ten,stable99,all-ten"
    )]
    strategies: Vec<String>,
    #[arg(long, env = "TILESHUFFLE_TOP_N", default_value_t = 30)]
    top_n: usize,
    #[arg(long, env = "TILESHUFFLE_TOP_UNIT", value_enum, default_value_t = TopUnitArg::Region)]
    top_unit: TopUnitArg,
    #[arg(long, env = "TILESHUFFLE_STABILITY_THRESHOLD", default_value_t = 0.99)]
    stability_threshold: f64,
    /// Probe half used by two-rep-half
    #[arg(long, env = "TILESHUFFLE_HALF", value_enum, default_value_t = HalfArg::Even)]
    half: HalfArg,
}

#[derive(Debug, Args)]
struct Fig1Args {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    detect: DetectFlags,
    #[command(flatten)]
    norm: NormFlags,
    #[command(flatten)]
    plan: PlanFlags,
    /// Array (1-3) whose frequency track is written
    #[arg(long, env = "TILESHUFFLE_ARRAY", default_value_t = 1)]
    array: usize,
    /// Odd moving-average width, in areas
    #[arg(long, env = "TILESHUFFLE_SMOOTH_WINDOW", default_value_t = 51)]
    smooth_window: usize,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    detect: DetectFlags,
    #[command(flatten)]
    norm: NormFlags,
    #[command(flatten)]
    plan: PlanFlags,
    /// Replicate counts to evaluate (default: 1 through R)
    #[arg(long, env = "TILESHUFFLE_KS", value_delimiter = ',')]
    ks: Vec<usize>,
}

/// Ordered key/value echo of a run's resolved parameters.
struct RunManifest(Vec<(String, String)>);

impl RunManifest {
    fn new(subcommand: &str) -> Self {
        RunManifest(vec![
            ("subcommand".into(), subcommand.into()),
            ("version".into(), env!("CARGO_PKG_VERSION").into()),
        ])
    }

    fn push(&mut self, key: &str, value: impl ToString) {
        self.0.push((key.to_string(), value.to_string()));
    }

    fn detect(&mut self, p: &DetectParams) {
        self.push("window_size", p.window_size);
        self.push("permutations", p.permutations);
        self.push("gc_bins", p.gc_bins);
        self.push("trim_mode", p.trim_mode.name());
        self.push("min_probes", p.min_probes);
        self.push("alpha", p.alpha);
        self.push("mtc_method", p.mtc_method.name());
        self.push("merge_gap", p.merge_gap);
    }

    fn plan(&mut self, p: &SimulationPlan) {
        self.push("master_seed", p.master_seed);
        self.push("sims", p.sims);
        self.push("replicates", p.k);
        self.push("mode", p.mode.name());
        self.push("probe_subset", p.subset.name());
        self.push("normalize_scope", p.scope.name());
        self.push("pseudocount", p.pseudocount);
        self.push("independent_perm_seeds", p.independent_perm_seeds);
        self.push("area_size", p.area_size);
        self.detect(&p.detect);
    }

    fn to_tsv(&self) -> String {
        let mut out = String::from("key\tvalue\n");
        for (k, v) in &self.0 {
            out.push_str(k);
            out.push('\t');
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(format!("cannot read {}", path.display()), e))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(format!("cannot write {}", path.display()), e))
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("cannot create {}", dir.display()), e))
}

fn input_paths(input: &InputArgs) -> Result<(PathBuf, Vec<PathBuf>)> {
    if let Some(dir) = &input.bundle {
        return Ok((
            dir.join("layout.tsv"),
            (1..=3).map(|i| dir.join(format!("array_{i}.tsv"))).collect(),
        ));
    }
    let layout = input
        .layout
        .clone()
        .ok_or_else(|| Error::invalid("missing input: pass --bundle DIR or --layout FILE with --intensities FILE"))?;
    if input.intensities.is_empty() {
        return Err(Error::invalid("missing input: pass at least one --intensities FILE"));
    }
    Ok((layout, input.intensities.clone()))
}

fn load_arrays(input: &InputArgs, manifest: &mut RunManifest) -> Result<(ProbeLayout, Vec<SpotIntensities>)> {
    let (layout_path, array_paths) = input_paths(input)?;
    manifest.push("layout", layout_path.display());
    let layout = parse_layout(&read(&layout_path)?).map_err(|e| in_file(&layout_path, e))?;
    let mut arrays = Vec::with_capacity(array_paths.len());
    for (i, path) in array_paths.iter().enumerate() {
        let text = read(path)?;
        let mut a = parse_intensities(&text, &layout).map_err(|e| in_file(path, e))?;
        if !text.lines().any(|l| l.starts_with("#array_id=")) {
            a.array_id = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("array_{}", i + 1));
        }
        manifest.push(&format!("intensities_{}", i + 1), path.display());
        arrays.push(a);
    }
    Ok((layout, arrays))
}

fn in_file(path: &Path, e: Error) -> Error {
    match e {
        Error::Io { .. } => e,
        other => Error::invalid(format!("{}: {other}", path.display())),
    }
}

fn load_bundle(input: &InputArgs, manifest: &mut RunManifest) -> Result<DatasetBundle> {
    let (layout, arrays) = load_arrays(input, manifest)?;
    validate_bundle(layout, arrays)
}

fn base_plan(
    common: &CommonArgs,
    detect: &DetectFlags,
    norm: &NormFlags,
    plan: &PlanFlags,
) -> SimulationPlan {
    SimulationPlan {
        sims: plan.sims,
        detect: detect.params(common.seed),
        scope: match norm.normalize_scope {
            ScopeArg::Triplet => NormalizeScope::Triplet,
            ScopeArg::Physical => NormalizeScope::Physical,
        },
        pseudocount: norm.pseudocount,
        master_seed: common.seed,
        independent_perm_seeds: plan.independent_perm_seeds,
        area_size: plan.area_size,
        ..SimulationPlan::default()
    }
}

fn run_synth(args: &SynthArgs, manifest: &mut RunManifest) -> Result<()> {
    let mut segments = Vec::new();
    for s in &args.segments {
        segments.push(parse_segment(s)?);
    }
    let region_end = match args.probes {
        Some(0) => return Err(Error::invalid("--probes must be positive")),
        Some(n) => args.region_start + (n as u64 - 1) * args.tile_step + args.probe_length,
        None => args.region_end,
    };
    let mut config = SynthConfig {
        chrom: args.chrom.clone(),
        region_start: args.region_start,
        region_end,
        tile_step: args.tile_step,
        probe_length: args.probe_length,
        replicates: args.replicates,
        containers: args.containers,
        segments,
        baseline: args.baseline,
        gc_slope: args.gc_slope,
        noise_sd: args.noise_sd,
        container_sd: args.container_sd,
        array_sd: args.array_sd,
        probe_sd: args.probe_sd,
        dropout_fraction: args.dropout,
        seed: args.common.seed,
        ..SynthConfig::default()
    };
    if let Some(keep) = args.keep_probes {
        let tiled = config.tiled_positions() as f64;
        if keep == 0 || keep as f64 > tiled {
            return Err(Error::invalid(format!("--keep-probes must lie in 1..={tiled}")));
        }
        config.dropout_fraction = 1.0 - keep as f64 / tiled;
    }
    manifest.push("seed", config.seed);
    manifest.push("chrom", &config.chrom);
    manifest.push("region_start", config.region_start);
    manifest.push("region_end", config.region_end);
    manifest.push("tile_step", config.tile_step);
    manifest.push("probe_length", config.probe_length);
    manifest.push("replicates", config.replicates);
    manifest.push("containers", config.containers);
    manifest.push(
        "segments",
        config
            .segments
            .iter()
            .map(|s| format!("{}-{}:{}", s.start, s.end, s.effect))
            .collect::<Vec<_>>()
            .join(","),
    );
    manifest.push("baseline", config.baseline);
    manifest.push("gc_slope", config.gc_slope);
    manifest.push("noise_sd", config.noise_sd);
    manifest.push("container_sd", config.container_sd);
    manifest.push("array_sd", config.array_sd);
    manifest.push("probe_sd", config.probe_sd);
    manifest.push("dropout_fraction", config.dropout_fraction);

    let (bundle, truth) = generate_synthetic(&config)?;
    let out = &args.common.out;
    write(out, "layout.tsv", &bundle.layout.to_tsv())?;
    for (i, a) in bundle.arrays.iter().enumerate() {
        write(out, &format!("array_{}.tsv", i + 1), &a.to_tsv(&bundle.layout))?;
    }
    write(out, "truth.bed", &truth.to_bed(&config.chrom))?;
    manifest.push("probes_written", bundle.layout.probes().len());
    Ok(())
}

fn parse_segment(text: &str) -> Result<PlantedSegment> {
    let bad = || Error::invalid(format!("segment '{text}' must look like START-END:EFFECT"));
    let (range, effect) = text.split_once(':').ok_or_else(bad)?;
    let (start, end) = range.split_once('-').ok_or_else(bad)?;
    Ok(PlantedSegment {
        start: start.trim().parse().map_err(|_| bad())?,
        end: end.trim().parse().map_err(|_| bad())?,
        effect: effect.trim().parse().map_err(|_| bad())?,
    })
}

/// Log2 transform of each array, quantile-normalized jointly when there is
/// more than one.
fn normalized_columns(columns: Vec<Vec<f64>>, ids: Vec<String>, pseudocount: f64) -> Result<Vec<Vec<f64>>> {
    let logs = columns
        .iter()
        .map(|c| log2_transform(c, pseudocount))
        .collect::<Result<Vec<_>>>()?;
    if logs.len() < 2 {
        return Ok(logs);
    }
    Ok(quantile_normalize(&TrackMatrix::new(ids, logs)?)?.data)
}

fn run_normalize(args: &NormalizeArgs, manifest: &mut RunManifest) -> Result<()> {
    let (layout, arrays) = load_arrays(&args.input, manifest)?;
    manifest.push("pseudocount", args.norm.pseudocount);
    let ids: Vec<String> = arrays.iter().map(|a| a.array_id.clone()).collect();
    let data = normalized_columns(
        arrays.into_iter().map(|a| a.values).collect(),
        ids.clone(),
        args.norm.pseudocount,
    )?;
    let mut out = format!("probe_id\treplicate\t{}\n", ids.join("\t"));
    for (i, s) in layout.spots().iter().enumerate() {
        out.push_str(&layout.probes()[s.probe].id);
        out.push('\t');
        out.push_str(&s.replicate.to_string());
        for col in &data {
            out.push('\t');
            out.push_str(&col[i].to_string());
        }
        out.push('\n');
    }
    write(&args.common.out, "normalized.tsv", &out)
}

fn run_detect(args: &DetectArgs, manifest: &mut RunManifest) -> Result<()> {
    let (layout, arrays) = load_arrays(&args.input, manifest)?;
    let params = args.detect.params(args.common.seed);
    params.validate(layout.probe_length())?;
    let k = args.replicates.unwrap_or(layout.replicates());
    let assignment = draw_replicate_assignment(&layout, k, ProbeSubset::All, args.common.seed, 0)?;
    manifest.push("seed", args.common.seed);
    manifest.push("replicates", k);
    manifest.push("mode", PseudoMode::from(args.mode).name());
    manifest.push("pseudocount", args.norm.pseudocount);
    manifest.detect(&params);

    let mut tracks = Vec::with_capacity(arrays.len());
    for a in &arrays {
        tracks.push(build_pseudo_array(&layout, &a.values, &assignment, args.mode.into())?);
    }
    let ids: Vec<String> = arrays.iter().map(|a| a.array_id.clone()).collect();
    let values = normalized_columns(
        tracks.iter().map(|t| t.values.clone()).collect(),
        ids.clone(),
        args.norm.pseudocount,
    )?;
    for ((track, v), id) in tracks.iter_mut().zip(values).zip(&ids) {
        track.values = v;
        let res = detect(track, &params)?;
        write(&args.common.out, &format!("regions_{id}.tsv"), &res.regions_tsv(layout.chrom()))?;
        if args.emit_windows {
            write(&args.common.out, &format!("windows_{id}.tsv"), &res.windows_tsv(layout.chrom()))?;
        }
        manifest.push(&format!("regions_{id}"), res.regions.len());
    }
    Ok(())
}

fn run_simulate(args: &SimulateArgs, manifest: &mut RunManifest) -> Result<()> {
    let bundle = load_bundle(&args.input, manifest)?;
    let plan = SimulationPlan {
        k: args.replicates,
        mode: args.mode.into(),
        subset: args.half.map_or(ProbeSubset::All, Into::into),
        ..base_plan(&args.common, &args.detect, &args.norm, &args.plan)
    };
    manifest.plan(&plan);
    let batch = run_simulation_batch(&bundle, &plan)?;
    let out = &args.common.out;
    for s in &batch.sims {
        for (j, a) in s.arrays.iter().enumerate() {
            write(out, &format!("sim_{}_array_{}_areas.tsv", s.sim_index, j + 1), &a.calls.to_tsv())?;
        }
    }
    write(out, "manifest.tsv", &batch.manifest_tsv())
}

fn run_table1(args: &Table1Args, manifest: &mut RunManifest) -> Result<()> {
    let bundle = load_bundle(&args.input, manifest)?;
    let base = base_plan(&args.common, &args.detect, &args.norm, &args.plan);
    let strategies = args
        .strategies
        .iter()
        .map(|name| {
            Ok(Strategy {
                kind: StrategyKind::parse(name.trim())?,
                top_n: args.top_n,
                top_unit: match args.top_unit {
                    TopUnitArg::Region => TopUnit::Region,
                    TopUnitArg::Window => TopUnit::Window,
                },
                stability_threshold: args.stability_threshold,
                half: args.half.into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    manifest.plan(&base);
    manifest.push("strategies", args.strategies.join(","));
    manifest.push("top_n", args.top_n);
    manifest.push("top_unit", format!("{:?}", args.top_unit).to_lowercase());
    manifest.push("stability_threshold", args.stability_threshold);
    manifest.push("half", format!("{:?}", args.half).to_lowercase());
    let rows = table1(&bundle, &base, &strategies)?;
    for r in &rows {
        manifest.push(&format!("empty_sims_{}", r.strategy), r.sims_empty());
    }
    write(&args.common.out, "table1.tsv", &table1_tsv(&rows))
}

fn run_fig1(args: &Fig1Args, manifest: &mut RunManifest) -> Result<()> {
    if !(1..=3).contains(&args.array) {
        return Err(Error::invalid("--array must be 1, 2 or 3"));
    }
    let bundle = load_bundle(&args.input, manifest)?;
    let plan = base_plan(&args.common, &args.detect, &args.norm, &args.plan);
    manifest.plan(&plan);
    manifest.push("array", args.array);
    manifest.push("smooth_window", args.smooth_window);
    // validate before the batch runs
    smooth_track(&[], args.smooth_window)?;
    let batch = run_simulation_batch(&bundle, &plan)?;
    let track = selection_frequency(&batch, args.array - 1)?;
    let smoothed = smooth_track(&track.counts, args.smooth_window)?;
    write(&args.common.out, "fig1.tsv", &fig1_tsv(&track, &smoothed))?;
    if args.common.svg {
        let series = [
            Series {
                label: "count",
                points: track
                    .counts
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| (track.grid.area(i).0 as f64, c as f64))
                    .collect(),
            },
            Series {
                label: "smoothed",
                points: smoothed
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| (track.grid.area(i).0 as f64, s))
                    .collect(),
            },
        ];
        let title = format!("Selection frequency over {} pseudo-arrays", track.sims);
        write(&args.common.out, "fig1.svg", &line_plot(&title, "position", "simulations", &series))?;
    }
    Ok(())
}

fn run_sweep(args: &SweepArgs, manifest: &mut RunManifest) -> Result<()> {
    let bundle = load_bundle(&args.input, manifest)?;
    let plan = base_plan(&args.common, &args.detect, &args.norm, &args.plan);
    let ks = if args.ks.is_empty() {
        (1..=bundle.layout.replicates()).collect()
    } else {
        args.ks.clone()
    };
    manifest.plan(&plan);
    manifest.push("ks", ks.iter().map(usize::to_string).collect::<Vec<_>>().join(","));
    let sweep = replicate_sweep(&bundle, &plan, &ks)?;
    write(&args.common.out, "sweep.tsv", &sweep.to_tsv())?;
    if args.common.svg {
        let pick = |f: fn(&crate::metrics::SweepPoint) -> f64| {
            sweep.points.iter().map(|p| (p.k as f64, f(p))).collect::<Vec<_>>()
        };
        let series = [
            Series { label: ">=1 array", points: pick(|p| p.p_ge1) },
            Series { label: ">=2 arrays", points: pick(|p| p.p_ge2) },
            Series { label: "3 arrays", points: pick(|p| p.p_eq3) },
        ];
        write(
            &args.common.out,
            "sweep.svg",
            &line_plot("Proportion of areas selected", "replicates per probe", "proportion", &series),
        )?;
    }
    Ok(())
}

fn common(command: &Command) -> &CommonArgs {
    match command {
        Command::Synth(a) => &a.common,
        Command::Normalize(a) => &a.common,
        Command::Detect(a) => &a.common,
        Command::Simulate(a) => &a.common,
        Command::Table1(a) => &a.common,
        Command::Fig1(a) => &a.common,
        Command::Sweep(a) => &a.common,
    }
}

fn name(command: &Command) -> &'static str {
    match command {
        Command::Synth(_) => "synth",
        Command::Normalize(_) => "normalize",
        Command::Detect(_) => "detect",
        Command::Simulate(_) => "simulate",
        Command::Table1(_) => "table1",
        Command::Fig1(_) => "fig1",
        Command::Sweep(_) => "sweep",
    }
}

fn execute(command: &Command) -> Result<()> {
    let common = common(command);
    prepare_out(&common.out)?;
    let mut manifest = RunManifest::new(name(command));
    let threads = match common.threads {
        Some(0) => return Err(Error::invalid("--threads must be at least 1")),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    manifest.push("threads", threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let result = pool.install(|| match command {
        Command::Synth(a) => run_synth(a, &mut manifest),
        Command::Normalize(a) => run_normalize(a, &mut manifest),
        Command::Detect(a) => run_detect(a, &mut manifest),
        Command::Simulate(a) => run_simulate(a, &mut manifest),
        Command::Table1(a) => run_table1(a, &mut manifest),
        Command::Fig1(a) => run_fig1(a, &mut manifest),
        Command::Sweep(a) => run_sweep(a, &mut manifest),
    });
    manifest.push("status", if result.is_ok() { "ok" } else { "failed" });
    write(&common.out, "run-manifest.tsv", &manifest.to_tsv())?;
    result
}

/// Parses `argv`, runs the subcommand and returns the process exit code:
/// 0 on success, 1 on validation errors, 2 on I/O errors.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return 0;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("{first} (see --help)");
            return 1;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

//! Command-line front end.
//!
//! Settings come from an optional `key=value` file (`#` starts a comment)
//! and are overridden by flags. `--set key=value` reaches any key that has
//! no dedicated flag.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};

use crate::classical::BitDepthSpec;
use crate::data::{quantize, AugmentConfig, Dataset, DirSource, ImageSource, Split, SplitSpec};
use crate::error::{Error, Result};
use crate::expander::{Expander, Method};
use crate::image::ImageBuffer;
use crate::metrics::{evaluate, psnr, ssim, ImageScore, MetricReport};
use crate::model::{load_checkpoint, BitNetConfig, BitNetModel, Checkpoint, Variant};
use crate::train::{TrainConfig, Trainer};

pub const THREADS_ENV: &str = "BITEXPAND_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Quantize,
    Expand,
    Train,
    Eval,
    Bench,
}

#[derive(Debug, Parser)]
#[command(name = "bitexpand", version, about = "Bit-depth expansion toolkit")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// key=value settings file
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// zp, mig, br, bitnet or bitnet-chan
    #[arg(long)]
    pub method: Option<String>,
    /// Source bit depth
    #[arg(long)]
    pub q: Option<u8>,
    /// Target bit depth
    #[arg(long = "H")]
    pub target: Option<u8>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// eval: score each ground-truth image against itself
    #[arg(long)]
    pub self_check: bool,
    /// Any config key, e.g. --set lr=1e-3
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

/// Parses `key=value` lines. Blank lines and `#` comments are ignored.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected key=value, got {line:?}", i + 1))
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

const KNOWN_KEYS: &[&str] = &[
    "in",
    "out",
    "method",
    "q",
    "H",
    "checkpoint",
    "seed",
    "epochs",
    "threads",
    "self_check",
    "lr",
    "init_seed",
    "hflip_prob",
    "scale_min",
    "scale_max",
    "q_min",
    "q_max",
    "patch_size",
    "train_fraction",
    "split",
    "variant",
    "widths",
    "r_d",
    "r_u",
    "head_width",
    "use_bit_info",
    "use_msfi",
    "msfi_disconnect_from_smallest",
    "bench_repeats",
];

/// Fully merged settings for one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub method: Method,
    pub q: Option<u8>,
    pub target_bits: u8,
    pub checkpoint: Option<PathBuf>,
    pub threads: Option<usize>,
    pub self_check: bool,
    pub split: Split,
    pub split_spec: SplitSpec,
    pub bench_repeats: usize,
    pub train: TrainConfig,
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "1" | "true" | "on" | "yes" => Ok(true),
        "0" | "false" | "off" | "no" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected a boolean, got {v:?}"
        ))),
    }
}

impl RunConfig {
    /// Merges file settings, `--set` pairs and dedicated flags, in that
    /// order of increasing precedence.
    pub fn from_cli(cli: &Cli) -> Result<Self> {
        let mut map = match &cli.config {
            Some(p) => parse_config_text(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
            None => BTreeMap::new(),
        };
        for kv in &cli.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got {kv:?}")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        };
        put("in", cli.input.as_ref().map(|p| p.display().to_string()));
        put("out", cli.out.as_ref().map(|p| p.display().to_string()));
        put("method", cli.method.clone());
        put("q", cli.q.map(|v| v.to_string()));
        put("H", cli.target.map(|v| v.to_string()));
        put(
            "checkpoint",
            cli.checkpoint.as_ref().map(|p| p.display().to_string()),
        );
        put("seed", cli.seed.map(|v| v.to_string()));
        put("epochs", cli.epochs.map(|v| v.to_string()));
        put("threads", cli.threads.map(|v| v.to_string()));
        if cli.self_check {
            map.insert("self_check".into(), "1".into());
        }
        RunConfig::from_map(cli.command, &map)
    }

    pub fn from_map(command: Command, map: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = map.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown key {k:?}")));
        }
        let get = |k: &str| map.get(k).map(String::as_str);

        let method: Method = match get("method") {
            Some(m) => m.parse()?,
            None if command == Command::Bench => Method::BitNet,
            None => Method::Zp,
        };
        let target_bits: u8 = get("H").map_or(Ok(8), |v| parse_value("H", v))?;
        let q: Option<u8> = get("q").map(|v| parse_value("q", v)).transpose()?;
        if let Some(q) = q {
            if command != Command::Quantize {
                BitDepthSpec::new(q, target_bits)?;
            } else if q == 0 || q >= 16 {
                return Err(Error::Config(format!("q = {q} must be in 1..=15")));
            }
        }
        let seed: u64 = get("seed").map_or(Ok(10_000), |v| parse_value("seed", v))?;

        let defaults = TrainConfig::default();
        let aug_default = AugmentConfig::default();
        let augment = AugmentConfig {
            hflip_prob: get("hflip_prob")
                .map_or(Ok(aug_default.hflip_prob), |v| parse_value("hflip_prob", v))?,
            scale_range: (
                get("scale_min").map_or(Ok(aug_default.scale_range.0), |v| {
                    parse_value("scale_min", v)
                })?,
                get("scale_max").map_or(Ok(aug_default.scale_range.1), |v| {
                    parse_value("scale_max", v)
                })?,
            ),
            bit_depth_range: (
                get("q_min").map_or(Ok(aug_default.bit_depth_range.0), |v| {
                    parse_value("q_min", v)
                })?,
                get("q_max").map_or(Ok(aug_default.bit_depth_range.1), |v| {
                    parse_value("q_max", v)
                })?,
            ),
            patch_size: get("patch_size")
                .map_or(Ok(aug_default.patch_size), |v| parse_value("patch_size", v))?,
            seed,
        };

        let mut model = match get("widths") {
            Some(w) => BitNetConfig::with_widths(
                w.split(',')
                    .map(|s| parse_value("widths", s.trim()))
                    .collect::<Result<Vec<usize>>>()?,
            ),
            None => BitNetConfig::default(),
        };
        model.variant = match get("variant") {
            Some(v) => v.parse::<Variant>()?,
            None if method == Method::BitNetChan => Variant::Chan,
            None => Variant::Rgb,
        };
        if let Some(v) = get("r_d") {
            model.r_d = parse_value("r_d", v)?;
        }
        if let Some(v) = get("r_u") {
            model.r_u = parse_value("r_u", v)?;
        }
        if let Some(v) = get("head_width") {
            model.head_width = parse_value("head_width", v)?;
        }
        if let Some(v) = get("use_bit_info") {
            model.use_bit_info = parse_bool("use_bit_info", v)?;
        }
        if let Some(v) = get("use_msfi") {
            model.use_msfi = parse_bool("use_msfi", v)?;
        }
        if let Some(v) = get("msfi_disconnect_from_smallest") {
            model.msfi_disconnect_from_smallest = parse_value("msfi_disconnect_from_smallest", v)?;
        }
        model.validate()?;

        let train = TrainConfig {
            model,
            augment,
            target_bits,
            epochs: get("epochs").map_or(Ok(defaults.epochs), |v| parse_value("epochs", v))?,
            lr: get("lr").map_or(Ok(defaults.lr), |v| parse_value("lr", v))?,
            init_seed: get("init_seed").map_or(Ok(seed), |v| parse_value("init_seed", v))?,
        };

        let split = match get("split") {
            None | Some("all") => Split::All,
            Some("train") => Split::Train,
            Some("eval") => Split::Eval,
            Some(other) => {
                return Err(Error::Config(format!(
                    "split must be all, train or eval, got {other:?}"
                )))
            }
        };
        let split_spec = match get("train_fraction") {
            Some(v) => SplitSpec::new(parse_value("train_fraction", v)?)?,
            None => SplitSpec::default(),
        };
        let threads = get("threads")
            .map(|v| parse_value("threads", v))
            .transpose()?;
        if threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }

        let config = RunConfig {
            command,
            input: get("in").map(PathBuf::from),
            output: get("out").map(PathBuf::from),
            method,
            q,
            target_bits,
            checkpoint: get("checkpoint").map(PathBuf::from),
            threads,
            self_check: get("self_check").map_or(Ok(false), |v| parse_bool("self_check", v))?,
            split,
            split_spec,
            bench_repeats: get("bench_repeats")
                .map_or(Ok(3), |v| parse_value("bench_repeats", v))?,
            train,
        };
        config.check()?;
        Ok(config)
    }

    fn check(&self) -> Result<()> {
        let needs_checkpoint = matches!(self.command, Command::Expand | Command::Eval);
        if needs_checkpoint
            && self.method.is_network()
            && self.checkpoint.is_none()
            && !self.self_check
        {
            return Err(Error::Config(format!(
                "method {} needs --checkpoint",
                self.method
            )));
        }
        if self.bench_repeats == 0 {
            return Err(Error::Config("bench_repeats must be positive".into()));
        }
        Ok(())
    }

    fn input(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| Error::Config("--in is required".into()))
    }

    fn output(&self) -> Result<&Path> {
        self.output
            .as_deref()
            .ok_or_else(|| Error::Config("--out is required".into()))
    }

    fn require_q(&self) -> Result<u8> {
        self.q
            .ok_or_else(|| Error::Config("--q is required".into()))
    }
}

/// Thread count from the flag, else from `BITEXPAND_THREADS`.
pub fn resolve_threads(flag: Option<usize>) -> Result<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => {
            let n: usize = parse_value(THREADS_ENV, v.trim())?;
            if n == 0 {
                return Err(Error::Config(format!("{THREADS_ENV} must be positive")));
            }
            Ok(Some(n))
        }
        _ => Ok(None),
    }
}

/// Path of the text file recording the source depth of a quantized image.
pub fn sidecar_path(image: &Path) -> PathBuf {
    let mut name = image.file_name().map(OsString::from).unwrap_or_default();
    name.push(".q.txt");
    image.with_file_name(name)
}

pub fn read_sidecar(image: &Path) -> Result<Option<u8>> {
    let path = sidecar_path(image);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(&path, e)),
    };
    let map = parse_config_text(&text)?;
    map.get("q")
        .map(|v| parse_value("q", v))
        .transpose()
        .map_err(|_| Error::Config(format!("{}: bad q", path.display())))
}

fn list_inputs(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_dir() {
        Ok(DirSource::open(path)?.paths().to_vec())
    } else if path.exists() {
        Ok(vec![path.to_path_buf()])
    } else {
        Err(Error::io(
            path,
            std::io::Error::from(std::io::ErrorKind::NotFound),
        ))
    }
}

/// Maps an input file to its output: `out` itself for a single file, or
/// `out/<file name>` when the input is a directory.
fn output_for(input_root: &Path, file: &Path, out: &Path) -> Result<PathBuf> {
    if input_root.is_dir() {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        Ok(out.join(file.file_name().unwrap_or_default()))
    } else {
        Ok(out.to_path_buf())
    }
}

pub fn cmd_quantize(cfg: &RunConfig) -> Result<String> {
    let q = cfg.require_q()?;
    let (input, out) = (cfg.input()?, cfg.output()?);
    let mut msg = String::new();
    for file in list_inputs(input)? {
        let img = ImageBuffer::read_png(&file)?;
        let lbd = quantize(&img, q)?;
        let dst = output_for(input, &file, out)?;
        lbd.write_png(&dst)?;
        let side = sidecar_path(&dst);
        fs::write(&side, format!("q={q}\n")).map_err(|e| Error::io(&side, e))?;
        let _ = writeln!(msg, "{} -> {} ({q} bits)", file.display(), dst.display());
    }
    Ok(msg)
}

fn load_expander(cfg: &RunConfig, allow_fresh: bool) -> Result<Expander> {
    if !cfg.method.is_network() {
        return Expander::classical(cfg.method);
    }
    let model = match &cfg.checkpoint {
        Some(p) => load_checkpoint(p)?,
        None if allow_fresh => {
            log::warn!("no checkpoint given; timing an untrained network");
            BitNetModel::build(cfg.train.model.clone(), cfg.train.init_seed)?
        }
        None => {
            return Err(Error::Config(format!(
                "method {} needs --checkpoint",
                cfg.method
            )))
        }
    };
    Expander::network(cfg.method, model)
}

pub fn cmd_expand(cfg: &RunConfig) -> Result<String> {
    let (input, out) = (cfg.input()?, cfg.output()?);
    let expander = load_expander(cfg, false)?;
    let mut msg = String::new();
    for file in list_inputs(input)? {
        let q = match cfg.q {
            Some(q) => q,
            None => read_sidecar(&file)?.ok_or_else(|| {
                Error::Config(format!(
                    "{}: no --q given and no sidecar found",
                    file.display()
                ))
            })?,
        };
        let spec = BitDepthSpec::new(q, cfg.target_bits)?;
        let img = ImageBuffer::read_png(&file)?;
        let hbd = expander.expand(&img, spec)?;
        let dst = output_for(input, &file, out)?;
        hbd.write_png(&dst)?;
        let _ = writeln!(
            msg,
            "{} -> {} ({} {q}->{} bits)",
            file.display(),
            dst.display(),
            expander.name(),
            cfg.target_bits
        );
    }
    Ok(msg)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<String> {
    let (input, out) = (cfg.input()?, cfg.output()?);
    let split = if cfg.split == Split::All {
        Split::Train
    } else {
        cfg.split
    };
    let source = DirSource::open(input)?.split(cfg.split_spec, split)?;
    if source.is_empty() {
        return Err(Error::Config(format!(
            "{}: training split is empty",
            input.display()
        )));
    }
    let dataset = Dataset::new(
        Box::new(source),
        cfg.train.augment.clone(),
        cfg.train.target_bits,
    )?;
    let mut trainer = match &cfg.checkpoint {
        Some(p) => Trainer::resume(cfg.train.clone(), dataset, Checkpoint::load(p)?)?,
        None => Trainer::new(cfg.train.clone(), dataset)?,
    };
    let start_step = trainer.step();
    let records = trainer.fit(out)?;
    let mut msg = format!(
        "trained {} steps ({} total, {} epochs) into {}",
        trainer.step() - start_step,
        trainer.step(),
        trainer.epochs_done(),
        out.display()
    );
    if let Some(last) = records.last() {
        let _ = write!(msg, ", last loss {:.6}", last.loss);
    }
    if trainer.dataset_warnings() > 0 {
        let _ = write!(msg, ", {} images skipped", trainer.dataset_warnings());
    }
    Ok(msg)
}

fn self_check_report(source: &dyn ImageSource) -> MetricReport {
    let mut report = MetricReport {
        method: "self-check".into(),
        ..Default::default()
    };
    for i in 0..source.len() {
        let name = source.name(i);
        let scored = source.load(i).and_then(|img| {
            Ok(ImageScore {
                name: name.clone(),
                psnr: psnr(&img, &img)?,
                ssim: ssim(&img, &img)?,
                seconds: 0.0,
            })
        });
        match scored {
            Ok(row) => report.rows.push(row),
            Err(e) => report.failures.push((name, e.to_string())),
        }
    }
    report
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<(MetricReport, String)> {
    let input = cfg.input()?;
    let source = DirSource::open(input)?.split(cfg.split_spec, cfg.split)?;
    let report = if cfg.self_check {
        self_check_report(&source)
    } else {
        let q = cfg.q.unwrap_or(4);
        let expander = load_expander(cfg, false)?;
        evaluate(&expander, &source, q, cfg.target_bits)?
    };
    let csv = report.to_csv();
    if let Some(out) = &cfg.output {
        fs::write(out, &csv).map_err(|e| Error::io(out, e))?;
    }
    let text = if cfg.output.is_some() {
        report.summary()
    } else {
        format!("{csv}{}", report.summary())
    };
    Ok((report, text))
}

/// One bench row.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub name: String,
    pub megapixels: f64,
    /// Median over the repeats.
    pub seconds: f64,
}

impl BenchRow {
    pub fn mp_per_second(&self) -> f64 {
        self.megapixels / self.seconds
    }
}

/// Median wall time of `repeats` expansions of each image.
pub fn bench_images(
    expander: &Expander,
    images: &[(String, ImageBuffer)],
    spec: BitDepthSpec,
    repeats: usize,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(images.len());
    for (name, img) in images {
        let lbd = if img.bit_depth() > spec.q {
            quantize(img, spec.q)?
        } else {
            img.clone()
        };
        let mut times = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let start = Instant::now();
            expander.expand(&lbd, spec)?;
            times.push(start.elapsed().as_secs_f64());
        }
        times.sort_by(f64::total_cmp);
        rows.push(BenchRow {
            name: name.clone(),
            megapixels: (img.width() * img.height()) as f64 / 1e6,
            seconds: times[times.len() / 2],
        });
    }
    Ok(rows)
}

pub fn bench_table(rows: &[BenchRow]) -> String {
    let mut s = String::from("name,megapixels,median_seconds,mp_per_second\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.4},{:.6},{:.4}",
            r.name,
            r.megapixels,
            r.seconds,
            r.mp_per_second()
        );
    }
    let mp: f64 = rows.iter().map(|r| r.megapixels).sum();
    let secs: f64 = rows.iter().map(|r| r.seconds).sum();
    let _ = writeln!(
        s,
        "total,{mp:.4},{secs:.6},{:.4}",
        if secs > 0.0 { mp / secs } else { 0.0 }
    );
    s
}

pub fn cmd_bench(cfg: &RunConfig) -> Result<(Vec<BenchRow>, String)> {
    let input = cfg.input()?;
    let q = cfg.q.unwrap_or(4);
    let spec = BitDepthSpec::new(q, cfg.target_bits)?;
    let expander = load_expander(cfg, true)?;
    let mut images = Vec::new();
    for file in list_inputs(input)? {
        let name = file
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        images.push((name, ImageBuffer::read_png(&file)?));
    }
    let rows = bench_images(&expander, &images, spec, cfg.bench_repeats)?;
    let table = bench_table(&rows);
    if let Some(out) = &cfg.output {
        fs::write(out, &table).map_err(|e| Error::io(out, e))?;
    }
    Ok((rows, table))
}

fn dispatch(cfg: &RunConfig) -> Result<String> {
    match cfg.command {
        Command::Quantize => cmd_quantize(cfg),
        Command::Expand => cmd_expand(cfg),
        Command::Train => cmd_train(cfg),
        Command::Eval => {
            let (report, text) = cmd_eval(cfg)?;
            if report.rows.is_empty() {
                return Err(Error::Precondition(format!(
                    "no image could be scored\n{text}"
                )));
            }
            Ok(text)
        }
        Command::Bench => cmd_bench(cfg).map(|(_, t)| t),
    }
}

/// Runs one invocation and returns the process exit code: 0 on success,
/// 1 on a failed command, 2 on bad usage or configuration.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let cfg = match RunConfig::from_cli(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let result = resolve_threads(cfg.threads).and_then(|threads| match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
            .and_then(|pool| pool.install(|| dispatch(&cfg))),
        None => dispatch(&cfg),
    });
    match result {
        Ok(text) => {
            if !text.is_empty() {
                println!("{}", text.trim_end());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => 2,
                _ => 1,
            }
        }
    }
}

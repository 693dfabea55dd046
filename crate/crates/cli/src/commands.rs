use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde_json::json;
use snn_core::datasets::{self, DatasetName, DatasetSpec, EncodedDataset};
use snn_core::hwmodel::{self, throughput_report};
use snn_core::model_io::{load_model, save_model};
use snn_core::training::{self, EpochMetrics, Evaluation, SparsityReport};
use snn_core::{audit, AnyNetwork, Network, NumericMode, Real};

use crate::config::{self, Mode, Overrides, RunConfig};
use crate::error::{io_error, CliError};
use crate::{EvalArgs, ExportArgs, FetchArgs, HwArgs, TrainArgs};

type Result<T> = std::result::Result<T, CliError>;

fn dataset_name(s: &str) -> Result<DatasetName> {
    s.parse().map_err(CliError::config)
}

pub fn fetch(args: &FetchArgs, cache: &Path) -> Result<()> {
    let spec = DatasetSpec::builtin(dataset_name(&args.dataset)?, cache);
    let paths = match &args.from {
        Some(dir) => datasets::import_local(&spec, dir),
        None => datasets::fetch(&spec),
    }
    .map_err(CliError::data)?;
    for p in paths {
        println!("{}", p.display());
    }
    Ok(())
}

/// Loads train and test sets from the cache only; never downloads.
fn load_cached(name: DatasetName, cache: &Path, split_seed: u64) -> Result<(datasets::Dataset, datasets::Dataset)> {
    let spec = DatasetSpec::builtin(name, cache);
    if let Some(missing) = spec.files.iter().map(|f| spec.path(f)).find(|p| !p.exists()) {
        return Err(CliError::Data(format!(
            "{} is not cached ({} missing); run `snn fetch {name}` first",
            name,
            missing.display()
        )));
    }
    datasets::load(&spec, split_seed).map_err(CliError::data)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_error("create directory", dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| io_error("write", path, e))
}

pub fn train(args: &TrainArgs, cache: &Path) -> Result<()> {
    let file = RunConfig::load(&args.config)?;
    let r = file.resolve(&Overrides {
        out_dir: args.out.clone(),
        dataset: args.dataset.clone(),
        mode: args.mode.clone(),
        epochs: args.epochs,
        lr: args.lr,
        gamma: args.gamma,
        seed: args.seed,
        train_subset: args.subset,
    })?;
    let (mut train_set, test_set) = load_cached(r.dataset, cache, r.split_seed)?;
    if r.train_subset > 0 && r.train_subset < train_set.len() {
        train_set = train_set
            .stratified_subset(r.train_subset, r.split_seed)
            .map_err(CliError::data)?;
    }
    let train_enc = train_set.encode(r.t_max).map_err(CliError::data)?;
    let test_enc = test_set.encode(r.t_max).map_err(CliError::data)?;
    if r.layers[0] != train_enc.input_size() {
        return Err(CliError::Config(format!(
            "network.layers starts with {} inputs but {} samples have {}",
            r.layers[0],
            r.dataset,
            train_enc.input_size()
        )));
    }
    create_dir(&r.out_dir)?;
    info!(
        "training {} on {} ({} train / {} test), {:?} mode, {} epochs",
        join(&r.layers),
        r.dataset,
        train_enc.len(),
        test_enc.len(),
        r.mode,
        r.train.epochs
    );
    let started = Instant::now();
    let (model, history) = match r.mode {
        Mode::Real => {
            let mut net = Network::init(Real, &r.layers, &r.thresholds, r.t_max, r.init).map_err(CliError::config)?;
            let h = run_training(&mut net, &train_enc, &test_enc, &r.train)?;
            (AnyNetwork::Real(net), h)
        }
        Mode::Fixed => {
            let mut net =
                Network::init(r.fixed, &r.layers, &r.thresholds, r.t_max, r.init).map_err(CliError::config)?;
            let h = run_training(&mut net, &train_enc, &test_enc, &r.train)?;
            (AnyNetwork::Fixed(net), h)
        }
    };
    let elapsed = started.elapsed().as_secs_f64();

    let model_path = r.out_dir.join("model.snn");
    save_model(&model, &model_path).map_err(CliError::data)?;
    let mut csv = String::from(EpochMetrics::CSV_HEADER);
    csv.push('\n');
    for m in &history {
        csv.push_str(&m.csv_row());
        csv.push('\n');
    }
    write_file(&r.out_dir.join("metrics.csv"), csv)?;

    let last = history.last().expect("at least one epoch");
    let final_acc = last.test_accuracy.unwrap_or(f64::NAN);
    let best = history
        .iter()
        .filter_map(|m| m.test_accuracy.map(|a| (m.epoch, a)))
        .max_by(|a, b| a.1.total_cmp(&b.1));
    let muls = history.iter().fold(audit::MulCounts::default(), |acc, m| audit::MulCounts {
        float_muls: acc.float_muls + m.mul_counts.float_muls,
        int_scalar_products: acc.int_scalar_products + m.mul_counts.int_scalar_products,
    });
    let mut summary = String::new();
    let _ = writeln!(summary, "dataset            {}", r.dataset);
    let _ = writeln!(summary, "architecture       {}", join(&r.layers));
    let _ = writeln!(summary, "mode               {:?}", r.mode);
    let _ = writeln!(summary, "t_max              {}", r.t_max);
    let _ = writeln!(summary, "thresholds         {:?}", r.thresholds);
    let _ = writeln!(summary, "epochs             {}", r.train.epochs);
    let _ = writeln!(summary, "lr                 {}", r.train.lr);
    let _ = writeln!(summary, "gamma              {}", r.train.gamma);
    let _ = writeln!(summary, "seed               {}", r.train.seed);
    let _ = writeln!(summary, "train samples      {}", train_enc.len());
    let _ = writeln!(summary, "test samples       {}", test_enc.len());
    let _ = writeln!(summary, "final train acc    {:.4}", last.train_accuracy);
    let _ = writeln!(summary, "final test acc     {:.4}", final_acc);
    if let Some((epoch, acc)) = best {
        let _ = writeln!(summary, "best test acc      {acc:.4} (epoch {epoch})");
    }
    let _ = writeln!(summary, "active synapses    {:.2}%", 100.0 * last.active_fraction);
    let _ = writeln!(summary, "float muls         {}", muls.float_muls);
    let _ = writeln!(summary, "int scalar prods   {}", muls.int_scalar_products);
    let _ = writeln!(summary, "wall time          {elapsed:.1}s");
    if let Ok(hw) = throughput_report(&r.layers, &r.hw) {
        let _ = writeln!(
            summary,
            "hw cycles/sample   {} (parallelism {}, {:.3e} samples/s)",
            hw.cycles_per_sample, r.hw.parallelism, hw.samples_per_second
        );
    }
    let _ = writeln!(summary, "model              {}", model_path.display());
    write_file(&r.out_dir.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn run_training<N: NumericMode>(
    net: &mut Network<N>,
    train_set: &EncodedDataset,
    test_set: &EncodedDataset,
    cfg: &training::TrainConfig,
) -> Result<Vec<EpochMetrics>> {
    training::train_with(net, train_set, Some(test_set), cfg, |m| {
        info!(
            "epoch {:>3}  loss {:.4}  train {:.4}  test {}  active {:.3}  {:.1}s",
            m.epoch,
            m.train_loss,
            m.train_accuracy,
            m.test_accuracy.map_or("-".into(), |a| format!("{a:.4}")),
            m.active_fraction,
            m.seconds
        );
    })
    .map_err(CliError::data)
}

fn join(sizes: &[usize]) -> String {
    sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("-")
}

fn load_model_checked(path: &Path) -> Result<AnyNetwork> {
    if !path.exists() {
        return Err(CliError::Config(format!("model file {} does not exist", path.display())));
    }
    load_model(path).map_err(CliError::config)
}

/// Test split of `args.dataset`, encoded for `model`.
fn model_test_set(args: &EvalArgs, cache: &Path, model: &AnyNetwork) -> Result<(DatasetName, EncodedDataset)> {
    let name = dataset_name(&args.dataset)?;
    let (_, test) = load_cached(name, cache, args.split_seed)?;
    let enc = test.encode(model.t_max()).map_err(CliError::data)?;
    let sizes = model.layer_sizes();
    if sizes[0] != enc.input_size() || *sizes.last().expect("non-empty") < enc.classes {
        return Err(CliError::Config(format!(
            "model {} does not fit {name} ({} inputs, {} classes)",
            join(&sizes),
            enc.input_size(),
            enc.classes
        )));
    }
    Ok((name, enc))
}

fn out_dir(args: &EvalArgs) -> PathBuf {
    args.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

pub fn eval(args: &EvalArgs, cache: &Path) -> Result<()> {
    let model = load_model_checked(&args.model)?;
    let (name, data) = model_test_set(args, cache, &model)?;
    let gamma = args.gamma.unwrap_or_else(|| config::default_gamma(name));
    let ev = match &model {
        AnyNetwork::Real(n) => training::evaluate(n, &data, gamma),
        AnyNetwork::Fixed(n) => training::evaluate(n, &data, gamma),
    }
    .map_err(CliError::config)?;
    let dir = out_dir(args);
    create_dir(&dir)?;
    write_file(&dir.join("confusion.csv"), confusion_csv(&ev))?;
    if args.json {
        let report = json!({
            "model": args.model.display().to_string(),
            "dataset": name.as_str(),
            "samples": data.len(),
            "accuracy": ev.accuracy,
            "mean_loss": ev.mean_loss,
            "confusion": ev.confusion,
        });
        println!("{}", serde_json::to_string_pretty(&report).expect("plain values serialize"));
    } else {
        println!("accuracy {:.4} on {} {} test samples", ev.accuracy, data.len(), name);
        println!("mean loss {:.4}", ev.mean_loss);
        println!("confusion (rows = label, columns = prediction)");
        print!("{}", confusion_table(&ev));
    }
    Ok(())
}

fn confusion_csv(ev: &Evaluation) -> String {
    let n = ev.confusion.len();
    let mut s = String::from("label");
    for p in 0..n {
        let _ = write!(s, ",pred_{p}");
    }
    s.push('\n');
    for (label, row) in ev.confusion.iter().enumerate() {
        let _ = write!(s, "{label}");
        for c in row {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
    }
    s
}

fn confusion_table(ev: &Evaluation) -> String {
    let mut s = String::from("     ");
    for p in 0..ev.confusion.len() {
        let _ = write!(s, "{p:>6}");
    }
    s.push('\n');
    for (label, row) in ev.confusion.iter().enumerate() {
        let _ = write!(s, "{label:>5}");
        for c in row {
            let _ = write!(s, "{c:>6}");
        }
        s.push('\n');
    }
    s
}

pub fn sparsity(args: &EvalArgs, cache: &Path) -> Result<()> {
    let model = load_model_checked(&args.model)?;
    let (name, data) = model_test_set(args, cache, &model)?;
    let report = match &model {
        AnyNetwork::Real(n) => training::sparsity_report(n, &data),
        AnyNetwork::Fixed(n) => training::sparsity_report(n, &data),
    }
    .map_err(CliError::config)?;
    let dir = out_dir(args);
    create_dir(&dir)?;
    write_file(&dir.join("sparsity.csv"), sparsity_csv(&report))?;
    let least = report.least_active_class();
    if args.json {
        let classes: Vec<_> = report
            .per_class
            .iter()
            .map(|c| json!({"class": c.class, "samples": c.samples, "mean_active": c.mean_active, "percentage": c.percentage}))
            .collect();
        let out = json!({
            "dataset": name.as_str(),
            "total_synapses": report.total_synapses,
            "mean_active": report.mean_active,
            "percentage": report.percentage,
            "least_active_class": least,
            "per_class": classes,
        });
        println!("{}", serde_json::to_string_pretty(&out).expect("plain values serialize"));
    } else {
        println!("total synapses {}", report.total_synapses);
        println!("{:>5} {:>8} {:>12} {:>8}", "class", "samples", "mean_active", "percent");
        for c in &report.per_class {
            println!("{:>5} {:>8} {:>12.1} {:>7.2}%", c.class, c.samples, c.mean_active, c.percentage);
        }
        println!("{:>5} {:>8} {:>12.1} {:>7.2}%", "all", data.len(), report.mean_active, report.percentage);
        if let Some(c) = least {
            println!("least active class {c}");
        }
    }
    Ok(())
}

fn sparsity_csv(r: &SparsityReport) -> String {
    let mut s = String::from("class,samples,mean_active,percentage\n");
    for c in &r.per_class {
        let _ = writeln!(s, "{},{},{},{}", c.class, c.samples, c.mean_active, c.percentage);
    }
    let total: usize = r.per_class.iter().map(|c| c.samples).sum();
    let _ = writeln!(s, "all,{total},{},{}", r.mean_active, r.percentage);
    s
}

pub fn export_bram(args: &ExportArgs) -> Result<()> {
    let model = load_model_checked(&args.model)?;
    let fixed = match model {
        AnyNetwork::Fixed(n) => n,
        AnyNetwork::Real(n) => {
            let (q, report) = hwmodel::quantize_network(&n, snn_core::Fixed::default()).map_err(CliError::config)?;
            println!("quantized real-valued model to {}: {report}", q.mode.weight);
            q
        }
    };
    let images = hwmodel::export_bram(&fixed).map_err(CliError::config)?;
    create_dir(&args.out)?;
    let files = hwmodel::write_bram_files(&images, &args.out).map_err(CliError::data)?;
    println!(
        "wrote {} neuron images ({} files) for {} to {}",
        images.len(),
        files.len(),
        join(&fixed.layer_sizes()),
        args.out.display()
    );
    Ok(())
}

pub fn hwreport(args: &HwArgs) -> Result<()> {
    let file = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut hw = file.hw_config()?;
    if let Some(p) = args.parallelism {
        hw.parallelism = p;
    }
    if let Some(f) = args.fmax_mhz {
        hw.fmax_hz = f * 1e6;
    }
    let layers = args
        .layers
        .clone()
        .or_else(|| file.network.layers.clone())
        .unwrap_or_else(|| vec![64, 20, 10]);
    let report = throughput_report(&layers, &hw).map_err(CliError::config)?;
    println!("{report}");
    Ok(())
}

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use hydrowatch::dsp::write_wav;
use hydrowatch::eval::{
    boxplot_svg, classification_experiment, confusion_svg, holdout_experiment, report_csv,
    ClassificationConfig, HoldoutConfig, HoldoutOutcome, LabeledSample,
};
use hydrowatch::localization::{run_scenario, Scenario};
use hydrowatch::nnet::{
    load_autoencoder, save_autoencoder, save_classifier, train_autoencoder, train_classifier,
    train_classifier_standardized,
    LatentEncoding, MlpConfig,
};
use hydrowatch::risk::RiskPolicy;
use hydrowatch::service::{serve, ModelSet, Service, ServiceConfig};
use hydrowatch::sim::{
    acquisition_loop, build_corpus, render_scene, AcquisitionConfig, CorpusConfig, EventClass,
    Pacing, Scene, SimulatedStream,
};

#[derive(Parser)]
#[command(name = "hydrowatch", version, about = "Hydrophone event detection and localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the autoencoder on a synthetic corpus.
    TrainAe {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Model directory; receives autoencoder.hwnn.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the classifier on latent encodings of a trained autoencoder.
    TrainMlp {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Directory holding autoencoder.hwnn; receives classifier.hwnn.
        #[arg(long)]
        models: PathBuf,
    },
    /// Classification over repeated random splits against the nearest-neighbor baseline.
    Evaluate {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Novelty detection with one minority class held out of training.
    Holdout {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Class names; defaults to every minority class.
        #[arg(long = "class")]
        classes: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve a localization scenario file.
    Localize { scenario: PathBuf },
    /// Render a scene to a multichannel WAV.
    Simulate {
        scene: PathBuf,
        #[arg(long, default_value = "scene.wav")]
        out: PathBuf,
    },
    /// Run the service: acquisition, pipeline and HTTP API.
    Serve {
        #[arg(long, default_value = "hydrowatch-data")]
        data_dir: PathBuf,
        /// Model directories; the first becomes active.
        #[arg(long = "models", required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Scene fed to the acquisition loop; silence when absent.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Silent stream length when no scene is given.
        #[arg(long, default_value_t = 60.0)]
        duration_s: f64,
        #[arg(long, default_value_t = 1.0)]
        speedup: f64,
    },
    /// Hyperparameter grid over the classification protocol.
    Sweep {
        grid: PathBuf,
        #[command(flatten)]
        corpus: CorpusArgs,
    },
}

#[derive(Args, Clone)]
struct CorpusArgs {
    /// CorpusConfig JSON; overrides the flags below.
    #[arg(long)]
    corpus_config: Option<PathBuf>,
    #[arg(long, default_value_t = 60)]
    per_class: usize,
    /// Samples for each majority class.
    #[arg(long, default_value_t = 120)]
    majority: usize,
    #[arg(long, default_value_t = 32_000)]
    sample_rate: u32,
    #[arg(long, default_value_t = 7)]
    corpus_seed: u64,
}

impl CorpusArgs {
    fn config(&self) -> Result<CorpusConfig> {
        if let Some(p) = &self.corpus_config {
            return read_json(p);
        }
        let mut cfg = CorpusConfig::uniform(self.per_class, self.sample_rate, self.corpus_seed);
        for (class, n) in cfg.counts.iter_mut() {
            if !class.is_minority() {
                *n = self.majority;
            }
        }
        Ok(cfg)
    }

    fn build(&self) -> Result<Vec<LabeledSample>> {
        let cfg = self.config()?;
        log::info!("synthesizing {} samples", cfg.total());
        Ok(build_corpus(&cfg)?)
    }
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    /// ClassificationConfig JSON; replaces the desk-scale preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ExperimentArgs {
    fn config(&self) -> Result<ClassificationConfig> {
        match &self.config {
            Some(p) => read_json(p),
            None => Ok(ClassificationConfig::desk_scale(self.seed)),
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::TrainAe { corpus, exp, out } => train_ae(&corpus, &exp, &out),
        Command::TrainMlp { corpus, exp, models } => train_mlp(&corpus, &exp, &models),
        Command::Evaluate { corpus, exp, out } => evaluate(&corpus, &exp, out.as_deref()),
        Command::Holdout { corpus, exp, classes, out } => holdout(&corpus, &exp, &classes, out.as_deref()),
        Command::Localize { scenario } => {
            let s = Scenario::load(&scenario)?;
            let base = scenario.parent().unwrap_or(Path::new("."));
            print_json(&run_scenario(&s, base)?)
        }
        Command::Simulate { scene, out } => simulate(&scene, &out),
        Command::Serve { data_dir, models, policy, addr, scene, duration_s, speedup } => {
            run_service(data_dir, &models, policy.as_deref(), addr, scene.as_deref(), duration_s, speedup)
        }
        Command::Sweep { grid, corpus } => sweep(&grid, &corpus),
    }
}

fn train_ae(corpus: &CorpusArgs, exp: &ExperimentArgs, out: &Path) -> Result<()> {
    let cfg = exp.config()?;
    let samples = corpus.build()?;
    let mels: Vec<_> = samples.iter().map(|s| s.mel.clone()).collect();
    let (ae, hist) = train_autoencoder(&mels, &cfg.autoencoder, &cfg.autoencoder_training)?;
    fs::create_dir_all(out)?;
    save_autoencoder(&ae, out.join("autoencoder.hwnn"))?;
    fs::write(out.join("autoencoder_history.csv"), hist.to_csv())?;
    log::info!("final loss {:.5}", hist.epoch_loss.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

fn train_mlp(corpus: &CorpusArgs, exp: &ExperimentArgs, models: &Path) -> Result<()> {
    let cfg = exp.config()?;
    let ae = load_autoencoder(models.join("autoencoder.hwnn"))?;
    let samples = corpus.build()?;
    let z: Vec<LatentEncoding> = samples.iter().map(|s| ae.encode(&s.mel)).collect::<Result<_, _>>()?;
    let y: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let mlp_cfg = MlpConfig {
        input: ae.config.latent_size(),
        hidden: cfg.classifier_hidden.clone(),
        classes: cfg.n_classes,
        ..MlpConfig::default()
    };
    let train_fn = if cfg.standardize_latents { train_classifier_standardized } else { train_classifier };
    let (mlp, hist) = train_fn(&z, &y, &mlp_cfg, &cfg.classifier_training)?;
    save_classifier(&mlp, models.join("classifier.hwnn"))?;
    fs::write(models.join("classifier_history.csv"), hist.to_csv())?;
    Ok(())
}

fn evaluate(corpus: &CorpusArgs, exp: &ExperimentArgs, out: Option<&Path>) -> Result<()> {
    let cfg = exp.config()?;
    let samples = corpus.build()?;
    let res = classification_experiment(&samples, &cfg)?;
    let names = EventClass::names();
    let ae = res.ae_mlp.clone().with_class_names(names.clone());
    let nn = res.baseline.clone().with_class_names(names.clone());
    println!(
        "ae_mlp balanced {:.3} default {:.3} | nearest neighbor balanced {:.3} default {:.3}",
        ae.mean_balanced_accuracy, ae.mean_default_accuracy, nn.mean_balanced_accuracy, nn.mean_default_accuracy
    );
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("classification.json"), &res)?;
        fs::write(dir.join("ae_mlp.csv"), report_csv(&ae))?;
        fs::write(dir.join("baseline.csv"), report_csv(&nn))?;
        fs::write(dir.join("ae_mlp_confusion.svg"), confusion_svg(&ae.mean_confusion, &names, "AE + MLP"))?;
        fs::write(dir.join("baseline_confusion.svg"), confusion_svg(&nn.mean_confusion, &names, "Nearest neighbor"))?;
        let groups = vec![
            ("AE+MLP default".to_string(), ae.default_accuracies()),
            ("AE+MLP balanced".to_string(), ae.balanced_accuracies()),
            ("NN default".to_string(), nn.default_accuracies()),
            ("NN balanced".to_string(), nn.balanced_accuracies()),
        ];
        fs::write(dir.join("accuracy.svg"), boxplot_svg(&groups, "Accuracy over splits"))?;
    }
    Ok(())
}

fn holdout(corpus: &CorpusArgs, exp: &ExperimentArgs, classes: &[String], out: Option<&Path>) -> Result<()> {
    let cfg = match &exp.config {
        Some(p) => read_json::<HoldoutConfig>(p)?,
        None => HoldoutConfig::desk_scale(exp.seed),
    };
    let targets: Vec<EventClass> = if classes.is_empty() {
        EventClass::minority().collect()
    } else {
        classes.iter().map(|c| c.parse()).collect::<Result<_, _>>()?
    };
    let samples = corpus.build()?;
    let mut outcomes: Vec<HoldoutOutcome> = Vec::new();
    for class in targets {
        let o = holdout_experiment(&samples, class.id(), &cfg)?;
        println!("{:<28} ae auc {:.3}  nn auc {:.3}", class.name(), o.mean_auc_autoencoder, o.mean_auc_baseline);
        outcomes.push(o);
    }
    let wins = outcomes.iter().filter(|o| o.mean_auc_autoencoder > o.mean_auc_baseline).count();
    println!("autoencoder ahead on {wins} of {}", outcomes.len());
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("holdout.json"), &outcomes)?;
    }
    Ok(())
}

fn simulate(scene_path: &Path, out: &Path) -> Result<()> {
    let scene = Scene::load(scene_path)?;
    let rendered = render_scene(&scene)?;
    for w in &rendered.warnings {
        log::warn!("{w}");
    }
    let channels: Vec<&[f64]> = rendered.channels.iter().map(|c| c.samples.as_slice()).collect();
    write_wav(out, scene.sample_rate, &channels)?;
    print_json(&serde_json::json!({ "wav": out, "arrivals": rendered.arrivals }))
}

fn run_service(
    data_dir: PathBuf,
    model_dirs: &[PathBuf],
    policy: Option<&Path>,
    addr: SocketAddr,
    scene: Option<&Path>,
    duration_s: f64,
    speedup: f64,
) -> Result<()> {
    let first = &model_dirs[0];
    let id = first.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "default".into());
    let models = ModelSet::new(
        id,
        load_autoencoder(first.join("autoencoder.hwnn"))?,
        hydrowatch::nnet::load_classifier(first.join("classifier.hwnn"))?,
        EventClass::names(),
    )?;
    let policy = match policy {
        Some(p) => RiskPolicy::load(p)?,
        None => RiskPolicy::default(),
    };
    let svc = Service::open(ServiceConfig::new(data_dir), models, policy)?;
    for dir in &model_dirs[1..] {
        svc.register_model_dir(dir)?;
    }

    let stream = match scene {
        Some(p) => SimulatedStream::new(render_scene(&Scene::load(p)?)?.channels, 0.1)?,
        None => {
            log::info!("no scene given; streaming {duration_s} s of silence");
            SimulatedStream::silent(3, 96_000, duration_s, 0.1)?
        }
    };
    if !(speedup > 0.0) {
        bail!("speedup must be positive");
    }
    let acq = AcquisitionConfig { pacing: Pacing::RealTime { speedup }, ..AcquisitionConfig::default() };
    let worker = svc.clone();
    std::thread::spawn(move || {
        let report = acquisition_loop(stream, &acq, |buf| match worker.process(&buf.channels) {
            Ok(r) => log::info!("observation {} {}", r.observation_id, r.level()),
            Err(e) => log::error!("buffer {}: {e}", buf.index),
        });
        match report {
            Ok(r) => log::info!("acquisition finished: {} handled, {} dropped", r.handled, r.dropped),
            Err(e) => log::error!("acquisition: {e}"),
        }
    });

    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(serve(svc, addr))?;
    Ok(())
}

/// Every combination is one classification run; the leaderboard ranks by
/// mean balanced accuracy.
#[derive(Deserialize)]
struct Grid {
    hidden: Vec<usize>,
    ae_epochs: Vec<usize>,
    ae_learning_rate: Vec<f64>,
    classifier_hidden: Vec<Vec<usize>>,
    #[serde(default = "one")]
    repetitions: usize,
    #[serde(default)]
    seed: u64,
}

fn one() -> usize {
    1
}

#[derive(Serialize)]
struct Entry {
    hidden: usize,
    ae_epochs: usize,
    ae_learning_rate: f64,
    classifier_hidden: Vec<usize>,
    balanced_accuracy: f64,
    default_accuracy: f64,
    baseline_balanced_accuracy: f64,
}

fn sweep(grid_path: &Path, corpus: &CorpusArgs) -> Result<()> {
    let grid: Grid = read_json(grid_path)?;
    let samples = corpus.build()?;
    let mut board = Vec::new();
    for &hidden in &grid.hidden {
        for &epochs in &grid.ae_epochs {
            for &lr in &grid.ae_learning_rate {
                for ch in &grid.classifier_hidden {
                    let mut cfg = ClassificationConfig::desk_scale(grid.seed);
                    cfg.autoencoder.hidden = hidden;
                    cfg.autoencoder_training.epochs = epochs;
                    cfg.autoencoder_training.learning_rate = lr;
                    cfg.classifier_hidden = ch.clone();
                    cfg.repetitions = grid.repetitions;
                    let res = classification_experiment(&samples, &cfg)?;
                    log::info!("hidden {hidden} epochs {epochs} lr {lr} mlp {ch:?}: {:.3}", res.ae_mlp.mean_balanced_accuracy);
                    board.push(Entry {
                        hidden,
                        ae_epochs: epochs,
                        ae_learning_rate: lr,
                        classifier_hidden: ch.clone(),
                        balanced_accuracy: res.ae_mlp.mean_balanced_accuracy,
                        default_accuracy: res.ae_mlp.mean_default_accuracy,
                        baseline_balanced_accuracy: res.baseline.mean_balanced_accuracy,
                    });
                }
            }
        }
    }
    board.sort_by(|a, b| b.balanced_accuracy.total_cmp(&a.balanced_accuracy));
    print_json(&board)
}

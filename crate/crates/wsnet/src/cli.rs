//! Subcommand definitions and their implementations.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use wsnet_core::cost::{network_report, preset, PRESETS};
use wsnet_core::nn::{accuracy, argmax, train_with, Network};

use crate::bench::{bench_network, BenchTable};
use crate::config::{parse_config, Config};
use crate::dataset::{load_dataset, save_dataset, synth_dataset, Dataset};
use crate::error::{Error, FormatError, Result};
use crate::model::{load_model, quantize_model, save_model, Model};
use crate::report::{compare, cost_csv, preset_report, reference, CostTable};
use crate::verify::verify;

#[derive(Debug, Parser)]
#[command(name = "wsnet", version, about = "Weight-sampled 1D convolutional networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parameter and mult-add accounting for a network config.
    Cost {
        config: PathBuf,
        /// Input length; defaults to the config's input_len.
        #[arg(long)]
        input_len: Option<usize>,
        #[arg(long)]
        csv: bool,
        /// Compare against a published baseline column (table1 or table2).
        #[arg(long)]
        reference: Option<String>,
        /// Rewrite the network with an ablation preset (e.g. S8C8).
        #[arg(long)]
        preset: Option<String>,
    },
    /// Train a network on a dataset and write the model.
    Train {
        config: PathBuf,
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's training seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iters: Option<usize>,
        /// Held-out dataset used for logged accuracy.
        #[arg(long)]
        eval: Option<PathBuf>,
        /// Hold out this trailing fraction of the dataset instead of --eval.
        #[arg(long)]
        holdout: Option<f64>,
        /// Metrics log path; defaults to <out>.log.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Accuracy of a model on a dataset.
    Eval { model: PathBuf, dataset: PathBuf },
    /// Randomized fast/naive and finite-difference checks.
    Verify {
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// Number of finite-difference networks.
        #[arg(long, default_value_t = 20)]
        fd_trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Time naive and fast convolution per layer.
    Bench {
        config: PathBuf,
        #[arg(long)]
        input_len: Option<usize>,
        #[arg(long, default_value_t = 5)]
        repeat: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Store weight tensors as 8-bit codes.
    Quantize {
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Report accuracy before and after on this dataset.
        #[arg(long)]
        eval: Option<PathBuf>,
    },
    /// Write a synthetic tone dataset.
    Synth {
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 200)]
        per_class: usize,
        #[arg(long, default_value_t = 4096)]
        len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_config(path: &Path) -> Result<Config> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

fn check_dataset(net: &Network, data: &Dataset) -> Result<()> {
    if data.len != net.input_len() {
        return Err(FormatError::Size {
            what: "clip length",
            expected: net.input_len() as u64,
            found: data.len as u64,
        }
        .into());
    }
    if let Some((i, c)) = data.clips.iter().enumerate().find(|(_, c)| c.label >= net.classes()) {
        return Err(FormatError::Label {
            clip: i,
            label: c.label as u32,
            classes: net.classes() as u32,
        }
        .into());
    }
    Ok(())
}

pub fn run(cli: Cli, out: &mut impl Write) -> Result<()> {
    let w = |out: &mut dyn Write, text: &str| -> Result<()> {
        writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
    };
    match cli.command {
        Command::Cost {
            config,
            input_len,
            csv,
            reference: reference_name,
            preset: preset_name,
        } => {
            let cfg = read_config(&config)?;
            let len = input_len.unwrap_or(cfg.network.input_len);
            if let Some(name) = preset_name {
                let p = preset(&name).ok_or_else(|| {
                    let names: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
                    Error::Usage(format!("unknown preset {name}; known: {}", names.join(", ")))
                })?;
                let r = preset_report(&cfg.network, p, len)?;
                return w(out, &if csv { cost_csv(&r.report) } else { r.to_string() });
            }
            let report = network_report(&cfg.network, len)?;
            if csv {
                out.write_all(cost_csv(&report).as_bytes()).map_err(|e| Error::io("<stdout>", e))?;
            } else {
                w(out, &CostTable(&report).to_string())?;
            }
            if let Some(name) = reference_name {
                let r = reference(&name).ok_or_else(|| Error::Usage(format!("unknown reference {name}")))?;
                if !csv {
                    w(out, "")?;
                }
                let text = compare(&report, &r).to_string();
                if csv {
                    eprint!("{text}");
                } else {
                    write!(out, "{text}").map_err(|e| Error::io("<stdout>", e))?;
                }
            }
            Ok(())
        }
        Command::Train {
            config,
            dataset,
            out: model_path,
            seed,
            iters,
            eval,
            holdout,
            log,
        } => {
            let mut cfg = read_config(&config)?;
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(n) = iters {
                cfg.train.iters = n;
            }
            let mut data = load_dataset(&dataset)?;
            let mut held = match eval {
                Some(p) => Some(load_dataset(&p)?),
                None => None,
            };
            if let Some(frac) = holdout {
                if !(0.0..1.0).contains(&frac) {
                    return Err(Error::Usage("--holdout must lie in [0, 1)".into()));
                }
                if held.is_some() {
                    return Err(Error::Usage("--holdout and --eval are exclusive".into()));
                }
                let (t, h) = data.split_holdout(frac);
                data = t;
                held = Some(h);
            }
            let mut net = Network::from_spec(&cfg.network, cfg.train.init_std, cfg.train.seed)?;
            check_dataset(&net, &data)?;
            if let Some(h) = &held {
                check_dataset(&net, h)?;
            }
            let log_path = log.unwrap_or_else(|| {
                let mut p = model_path.clone().into_os_string();
                p.push(".log");
                PathBuf::from(p)
            });
            let mut lines = Vec::new();
            let eval_clips = held.as_ref().filter(|h| !h.clips.is_empty()).map(|h| &h.clips[..]);
            let result = train_with(&mut net, &data.clips, eval_clips, &cfg.train, |e| {
                let _ = writeln!(out, "{e}");
                lines.push(e.to_string());
            });
            fs::write(&log_path, lines.join("\n") + "\n").map_err(|e| Error::io(&log_path, e))?;
            let log = result?;
            save_model(&Model::from_network(&net, &cfg), &model_path)?;
            w(
                out,
                &format!(
                    "initial_loss={:.6} final_loss={:.6} model={}",
                    log.initial_loss,
                    log.final_loss,
                    model_path.display()
                ),
            )
        }
        Command::Eval { model, dataset } => {
            let (net, _) = load_model(&model)?.to_network()?;
            let data = load_dataset(&dataset)?;
            check_dataset(&net, &data)?;
            let acc = accuracy(&net, &data.clips)?;
            w(out, &format!("acc={acc:?} n={}", data.clips.len()))
        }
        Command::Verify { trials, fd_trials, seed } => {
            if trials == 0 {
                return Err(Error::Usage("--trials must be at least 1".into()));
            }
            let report = verify(trials, fd_trials, seed)?;
            w(out, &report.to_string())?;
            if report.passed() {
                Ok(())
            } else {
                Err(Error::Failed("verification failed".into()))
            }
        }
        Command::Bench {
            config,
            input_len,
            repeat,
            seed,
        } => {
            if repeat == 0 {
                return Err(Error::Usage("--repeat must be at least 1".into()));
            }
            let cfg = read_config(&config)?;
            let len = input_len.unwrap_or(cfg.network.input_len);
            let rows = bench_network(&cfg.network, len, repeat, seed)?;
            write!(out, "{}", BenchTable(&rows)).map_err(|e| Error::io("<stdout>", e))
        }
        Command::Quantize { model, out: dest, eval } => {
            let m = load_model(&model)?;
            let q = quantize_model(&m)?;
            let (float_bytes, q_bytes) = (m.size_report(false), q.size_report(true));
            save_model(&q, &dest)?;
            w(
                out,
                &format!(
                    "weights={} float_bytes={float_bytes} quantized_bytes={q_bytes} size_ratio={:.3} file_bytes={}->{}",
                    m.weight_count(),
                    float_bytes as f64 / q_bytes as f64,
                    m.encoded_len(false),
                    q.encoded_len(true)
                ),
            )?;
            if let Some(p) = eval {
                let data = load_dataset(&p)?;
                let (before, _) = m.to_network()?;
                let (after, _) = q.to_network()?;
                check_dataset(&before, &data)?;
                let (a, b) = (accuracy(&before, &data.clips)?, accuracy(&after, &data.clips)?);
                w(out, &format!("acc_float={a:?} acc_quantized={b:?} delta={:+}", b - a))?;
            }
            Ok(())
        }
        Command::Synth {
            classes,
            per_class,
            len,
            seed,
            out: dest,
        } => {
            let data = synth_dataset(classes, per_class, len, seed)?;
            save_dataset(&data, &dest)?;
            w(
                out,
                &format!("wrote {} clips of {len} samples to {}", data.clips.len(), dest.display()),
            )
        }
    }
}

/// Argmax of every logit row, ties to the lowest index.
pub fn predictions(net: &Network, data: &Dataset) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(data.clips.len());
    for chunk in data.clips.chunks(64) {
        let inputs: Vec<_> = chunk.iter().map(|c| c.input.clone()).collect();
        out.extend(net.predict(&inputs)?.iter().map(|z| argmax(z)));
    }
    Ok(out)
}

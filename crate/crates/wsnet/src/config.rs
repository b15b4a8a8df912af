//! Line-oriented network and training configuration files.
//!
//! ```text
//! [network]
//! input_len = 4096
//! input_channels = 1
//! classes = 4
//!
//! [layer conv1]
//! kind = conv
//! L = 16
//! N = 8
//! S = 8
//! stride = 4
//! bn = true
//! pool = max
//! pool_k = 4
//!
//! [layer fc]
//! kind = fc
//! N = 4
//!
//! [train]
//! lr = 0.001
//! batch = 32
//! ```
//!
//! Blank lines and lines starting with `#` or `;` are ignored.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use wsnet_core::arch::{LayerKind, LayerSpec, NetworkSpec};
use wsnet_core::nn::TrainHyper;
use wsnet_core::sampling::Padding;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub network: NetworkSpec,
    pub train: TrainHyper,
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

#[derive(Debug, PartialEq)]
enum Section {
    Network,
    Layer(String),
    Train,
}

struct Block {
    section: Section,
    line: usize,
    entries: Vec<(usize, String, String)>,
}

impl Block {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        let i = self.entries.iter().position(|(_, k, _)| k == key)?;
        let (line, _, v) = self.entries.remove(i);
        Some((line, v))
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| err(line, format!("invalid value {v:?} for {key}"))),
        }
    }

    fn require<T: FromStr>(&mut self, key: &str) -> Result<T> {
        self.parse(key)?
            .ok_or_else(|| err(self.line, format!("missing key {key}")))
    }

    fn finish(self) -> Result<()> {
        match self.entries.first() {
            Some((line, key, _)) => Err(err(*line, format!("unknown key {key}"))),
            None => Ok(()),
        }
    }
}

fn parse_bool(line: usize, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(err(line, format!("invalid boolean {v:?}"))),
    }
}

fn split_blocks(text: &str) -> Result<Vec<Block>> {
    let mut blocks: Vec<Block> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') || s.starts_with(';') {
            continue;
        }
        if let Some(inner) = s.strip_prefix('[') {
            let inner = inner
                .strip_suffix(']')
                .ok_or_else(|| err(line, "unterminated section header"))?
                .trim();
            let mut words = inner.split_whitespace();
            let section = match (words.next(), words.next(), words.next()) {
                (Some("network"), None, _) => Section::Network,
                (Some("train"), None, _) => Section::Train,
                (Some("layer"), Some(name), None) => {
                    if name.contains('.') {
                        return Err(err(line, format!("layer name {name:?} must not contain '.'")));
                    }
                    Section::Layer(name.to_string())
                }
                (Some("layer"), None, _) => return Err(err(line, "layer section needs a name")),
                _ => return Err(err(line, format!("unknown section [{inner}]"))),
            };
            if let Some(prev) = blocks.iter().find(|b| b.section == section) {
                let what = match &section {
                    Section::Layer(name) => format!("duplicate layer name {name} (first at line {})", prev.line),
                    _ => format!("duplicate section [{inner}] (first at line {})", prev.line),
                };
                return Err(err(line, what));
            }
            blocks.push(Block {
                section,
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected key = value, found {s:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(err(line, "empty key or value"));
        }
        let block = blocks
            .last_mut()
            .ok_or_else(|| err(line, format!("key {key} outside any section")))?;
        if let Some((first, _, _)) = block.entries.iter().find(|(_, k, _)| k == key) {
            return Err(err(line, format!("duplicate key {key} (first at line {first})")));
        }
        block.entries.push((line, key.to_string(), value.to_string()));
    }
    Ok(blocks)
}

fn parse_layer(name: String, mut b: Block) -> Result<LayerSpec> {
    let (kind_line, kind) = b.take("kind").ok_or_else(|| err(b.line, "missing key kind"))?;
    let kind = match kind.as_str() {
        "conv" => LayerKind::Conv,
        "fc" => LayerKind::Fc,
        other => return Err(err(kind_line, format!("unknown layer kind {other:?}"))),
    };
    let filter_len: Option<usize> = b.parse("L")?;
    if kind == LayerKind::Conv && filter_len.is_none() {
        return Err(err(b.line, "missing key L"));
    }
    let filters = b.require("N")?;
    let padding = match b.take("padding") {
        None => Padding::Same,
        Some((_, v)) if v == "same" => Padding::Same,
        Some((_, v)) if v == "valid" => Padding::Valid,
        Some((line, v)) => return Err(err(line, format!("unknown padding {v:?}"))),
    };
    let pool = match b.take("pool") {
        None => false,
        Some((_, v)) if v == "none" => false,
        Some((_, v)) if v == "max" => true,
        Some((line, v)) => return Err(err(line, format!("unknown pool {v:?}"))),
    };
    let pool_k = b.take("pool_k");
    let pool_kernel = match (pool, pool_k) {
        (true, Some((line, v))) => Some(v.parse().map_err(|_| err(line, format!("invalid value {v:?} for pool_k")))?),
        (true, None) => return Err(err(b.line, "pool = max needs pool_k")),
        (false, Some((line, _))) => return Err(err(line, "pool_k given without pool = max")),
        (false, None) => None,
    };
    let batch_norm = match b.take("bn") {
        Some((line, v)) => parse_bool(line, &v)?,
        None => false,
    };
    let spec = LayerSpec {
        name,
        kind,
        filter_len,
        filters,
        sample_stride: b.parse("S")?,
        channel_factor: b.parse("C")?.unwrap_or(1),
        denser: b.parse("D")?.unwrap_or(1),
        conv_stride: b.parse("stride")?.unwrap_or(1),
        padding,
        batch_norm,
        pool_kernel,
        dropout_keep: b.parse("dropout_keep")?.unwrap_or(1.0),
    };
    b.finish()?;
    Ok(spec)
}

fn parse_train(mut b: Block) -> Result<TrainHyper> {
    let d = TrainHyper::default();
    let hyper = TrainHyper {
        lr: b.parse("lr")?.unwrap_or(d.lr),
        beta1: b.parse("beta1")?.unwrap_or(d.beta1),
        beta2: b.parse("beta2")?.unwrap_or(d.beta2),
        eps: b.parse("eps")?.unwrap_or(d.eps),
        batch: b.parse("batch")?.unwrap_or(d.batch),
        init_std: b.parse("init_std")?.unwrap_or(d.init_std),
        iters: b.parse("iters")?.unwrap_or(d.iters),
        seed: b.parse("seed")?.unwrap_or(d.seed),
        log_every: b.parse("log_every")?.unwrap_or(d.log_every),
    };
    let line = b.line;
    b.finish()?;
    hyper.validate().map_err(|e| err(line, e.to_string()))?;
    Ok(hyper)
}

/// Strict parse; every error carries the offending line number.
pub fn parse_config(text: &str) -> Result<Config> {
    let blocks = split_blocks(text)?;
    let last_line = text.lines().count().max(1);
    if !blocks.iter().any(|b| matches!(b.section, Section::Layer(_))) {
        return Err(err(last_line, "no layers"));
    }
    let mut network_block = None;
    let mut train = TrainHyper::default();
    let mut layers = Vec::new();
    let mut layer_lines = HashMap::new();
    for b in blocks {
        match &b.section {
            Section::Network => network_block = Some(b),
            Section::Train => train = parse_train(b)?,
            Section::Layer(name) => {
                let name = name.clone();
                layer_lines.insert(name.clone(), b.line);
                layers.push(parse_layer(name, b)?);
            }
        }
    }
    let mut nb = network_block.ok_or_else(|| err(1, "missing [network] section"))?;
    let net_line = nb.line;
    let input_len = nb.require("input_len")?;
    let input_channels = nb.parse("input_channels")?.unwrap_or(1);
    let classes: Option<usize> = nb.parse("classes")?;
    nb.finish()?;
    let mut network = NetworkSpec {
        input_len,
        input_channels,
        classes: classes.unwrap_or(0),
        layers,
    };
    let resolved = network.resolve().map_err(|e| match e {
        wsnet_core::Error::Layer { ref name, .. } => err(layer_lines.get(name).copied().unwrap_or(net_line), e.to_string()),
        other => err(net_line, other.to_string()),
    })?;
    let last = resolved.last().expect("at least one layer");
    let out = last.len_pooled * last.channels_out;
    match classes {
        None => network.classes = out,
        Some(c) if c != out => {
            return Err(err(net_line, format!("classes = {c} but the last layer produces {out} outputs")));
        }
        Some(_) => {}
    }
    Ok(Config { network, train })
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = &self.network;
        writeln!(f, "[network]")?;
        writeln!(f, "input_len = {}", n.input_len)?;
        writeln!(f, "input_channels = {}", n.input_channels)?;
        writeln!(f, "classes = {}", n.classes)?;
        for l in &n.layers {
            writeln!(f)?;
            writeln!(f, "[layer {}]", l.name)?;
            let kind = match l.kind {
                LayerKind::Conv => "conv",
                LayerKind::Fc => "fc",
            };
            writeln!(f, "kind = {kind}")?;
            if let Some(len) = l.filter_len {
                writeln!(f, "L = {len}")?;
            }
            writeln!(f, "N = {}", l.filters)?;
            if let Some(s) = l.sample_stride {
                writeln!(f, "S = {s}")?;
            }
            writeln!(f, "C = {}", l.channel_factor)?;
            writeln!(f, "D = {}", l.denser)?;
            writeln!(f, "stride = {}", l.conv_stride)?;
            let padding = match l.padding {
                Padding::Same => "same",
                Padding::Valid => "valid",
            };
            writeln!(f, "padding = {padding}")?;
            match l.pool_kernel {
                Some(k) => writeln!(f, "pool = max\npool_k = {k}")?,
                None => writeln!(f, "pool = none")?,
            }
            writeln!(f, "bn = {}", l.batch_norm)?;
            writeln!(f, "dropout_keep = {}", l.dropout_keep)?;
        }
        let t = &self.train;
        writeln!(f)?;
        writeln!(f, "[train]")?;
        writeln!(f, "lr = {}", t.lr)?;
        writeln!(f, "beta1 = {}", t.beta1)?;
        writeln!(f, "beta2 = {}", t.beta2)?;
        writeln!(f, "eps = {}", t.eps)?;
        writeln!(f, "batch = {}", t.batch)?;
        writeln!(f, "iters = {}", t.iters)?;
        writeln!(f, "seed = {}", t.seed)?;
        writeln!(f, "init_std = {}", t.init_std)?;
        writeln!(f, "log_every = {}", t.log_every)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_of(e: Error) -> usize {
        match e {
            Error::Config { line, .. } => line,
            other => panic!("{other:?}"),
        }
    }

    const SMALL: &str = "\
[network]
input_len = 32
classes = 3

[layer conv1]
kind = conv
L = 4
N = 4
S = 2
pool = max
pool_k = 2

[layer fc]
kind = fc
N = 3
";

    #[test]
    fn parses_small_net() {
        let c = parse_config(SMALL).unwrap();
        assert_eq!(c.network.layers.len(), 2);
        assert_eq!(c.network.layers[0].sample_stride, Some(2));
        assert_eq!(c.network.layers[0].pool_kernel, Some(2));
        assert_eq!(c.train, TrainHyper::default());
    }

    #[test]
    fn empty_file_has_no_layers() {
        match parse_config("") {
            Err(Error::Config { message, .. }) => assert_eq!(message, "no layers"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_stride_names_layer() {
        let text = SMALL.replace("S = 2", "S = 0");
        match parse_config(&text) {
            Err(Error::Config { line, message }) => {
                assert_eq!(line, 5);
                assert!(message.contains("conv1"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = SMALL.replace("S = 2", "S = 2\nwidth = 3");
        assert_eq!(line_of(parse_config(&text).unwrap_err()), 10);
    }

    #[test]
    fn duplicate_layer_names() {
        let text = format!("{SMALL}\n[layer fc]\nkind = fc\nN = 3\n");
        assert_eq!(line_of(parse_config(&text).unwrap_err()), 17);
    }

    #[test]
    fn duplicate_keys() {
        let text = SMALL.replace("N = 3", "N = 3\nN = 4");
        assert_eq!(line_of(parse_config(&text).unwrap_err()), 16);
    }

    #[test]
    fn channel_factor_must_divide() {
        let text = SMALL.replace("[layer fc]", "[layer conv2]\nkind = conv\nL = 2\nN = 4\nC = 3\n\n[layer fc]");
        let e = parse_config(&text).unwrap_err();
        assert_eq!(line_of(e), 13);
    }

    #[test]
    fn wrong_class_count() {
        let text = SMALL.replace("classes = 3", "classes = 5");
        assert_eq!(line_of(parse_config(&text).unwrap_err()), 1);
    }

    #[test]
    fn classes_default_to_output_size() {
        let text = SMALL.replace("classes = 3\n", "");
        assert_eq!(parse_config(&text).unwrap().network.classes, 3);
    }

    #[test]
    fn printed_form_reparses() {
        let c = parse_config(SMALL).unwrap();
        assert_eq!(parse_config(&c.to_string()).unwrap(), c);
    }
}

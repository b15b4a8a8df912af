//! Text and CSV rendering of cost reports, plus comparison against the
//! published baseline columns and the ablation presets.

use std::fmt;

use wsnet_core::arch::NetworkSpec;
use wsnet_core::cost::{apply_preset, network_report, Clamp, CostReport, Preset};

use crate::error::Result;

fn fmt_speedup(s: Option<f64>) -> String {
    s.map_or_else(|| "-".into(), |v| format!("{v:.2}"))
}

/// Human-readable per-layer table with a totals line.
pub struct CostTable<'a>(pub &'a CostReport);

impl fmt::Display for CostTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = self.0;
        writeln!(
            f,
            "{:<8} {:>8} {:>8} {:>10} {:>10} {:>14} {:>14} {:>11} {:>8}",
            "layer", "T_in", "T_out", "params", "dense", "multadds_naive", "multadds_fast", "compactness", "speedup"
        )?;
        for c in &r.layers {
            writeln!(
                f,
                "{:<8} {:>8} {:>8} {:>10} {:>10} {:>14.4e} {:>14} {:>11.2} {:>8}",
                c.name,
                c.len_in,
                c.len_out,
                c.params,
                c.dense_params,
                c.multadds_naive as f64,
                c.multadds_fast.map_or_else(|| "-".into(), |v| format!("{:.4e}", v as f64)),
                c.compactness,
                fmt_speedup(c.speedup)
            )?;
        }
        writeln!(
            f,
            "{:<8} {:>8} {:>8} {:>10} {:>10} {:>14.4e} {:>14.4e}",
            "total", "", "", r.params, r.dense_params, r.multadds_naive as f64, r.multadds as f64
        )?;
        write!(
            f,
            "model size {} bytes float32, {} bytes 8-bit",
            r.float_bytes, r.quantized_bytes
        )
    }
}

/// `layer,params,multadds_naive,multadds_fast,compactness,speedup`; one row
/// per layer and a final `total` row. Absent values are left empty.
pub fn cost_csv(r: &CostReport) -> String {
    let mut out = String::from("layer,params,multadds_naive,multadds_fast,compactness,speedup\n");
    for c in &r.layers {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.name,
            c.params,
            c.multadds_naive,
            c.multadds_fast.map_or(String::new(), |v| v.to_string()),
            c.compactness,
            c.speedup.map_or(String::new(), |v| v.to_string())
        ));
    }
    let compact = r.dense_params as f64 / r.params as f64;
    let speed = r.multadds_naive as f64 / r.multadds as f64;
    out.push_str(&format!("total,{},{},{},{compact},{speed}\n", r.params, r.multadds_naive, r.multadds));
    out
}

/// Whether `value / unit` rounds or truncates to the printed `display`,
/// keeping as many significant figures as the display shows.
pub fn matches_display(value: f64, display: &str, unit: f64) -> bool {
    let Ok(shown) = display.parse::<f64>() else {
        return false;
    };
    let digits: String = display.chars().filter(char::is_ascii_digit).collect();
    let significant = if display.contains('.') {
        digits.trim_start_matches('0').len()
    } else {
        digits.trim_start_matches('0').trim_end_matches('0').len()
    }
    .max(1) as i32;
    let x = value / unit;
    if x <= 0.0 {
        return shown == 0.0;
    }
    let scale = 10f64.powi(significant - 1 - x.log10().floor() as i32);
    let close = |y: f64| (y - shown).abs() <= 1e-9 * shown.abs().max(1.0);
    close((x * scale).round() / scale) || close((x * scale).floor() / scale)
}

fn display_unit(display: &str) -> (&str, f64) {
    if let Some(n) = display.strip_suffix('K') {
        (n, 1e3)
    } else if let Some(n) = display.strip_suffix('M') {
        (n, 1e6)
    } else {
        (display, 1.0)
    }
}

/// Published per-layer columns of a baseline network.
#[derive(Debug, Clone, Copy)]
pub struct Reference {
    pub name: &'static str,
    pub layers: &'static [&'static str],
    pub params: &'static [&'static str],
    /// Mult-adds in units of 1e8, when the input length is known.
    pub multadds: Option<&'static [&'static str]>,
    pub input_len: Option<usize>,
}

pub const TABLE1: Reference = Reference {
    name: "table1",
    layers: &["conv1", "conv2", "conv3", "conv4", "conv5", "conv6", "conv7", "fc1", "fc2"],
    params: &["1K", "65K", "130K", "130K", "260K", "1M", "1M", "390K", "33K"],
    multadds: None,
    input_len: None,
};

pub const TABLE2: Reference = Reference {
    name: "table2",
    layers: &["conv1", "conv2", "conv3", "conv4", "conv5", "conv6", "conv7", "conv8"],
    params: &["1K", "16K", "32K", "65K", "130K", "520K", "2M", "11M"],
    multadds: Some(&["2.3", "9.0", "4.5", "2.3", "1.2", "1.2", "1.2", "2.3"]),
    input_len: Some(441_000),
};

pub fn reference(name: &str) -> Option<Reference> {
    [TABLE1, TABLE2].into_iter().find(|r| r.name.eq_ignore_ascii_case(name))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefRow {
    pub layer: String,
    pub params: u64,
    pub params_shown: &'static str,
    pub params_ok: bool,
    pub multadds: u64,
    pub multadds_shown: Option<&'static str>,
    pub multadds_ok: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub reference: &'static str,
    pub rows: Vec<RefRow>,
    pub notes: Vec<String>,
}

impl Comparison {
    pub fn row(&self, layer: &str) -> Option<&RefRow> {
        self.rows.iter().find(|r| r.layer == layer)
    }
}

/// Lines up `report` with the published columns. Mult-adds are the direct
/// convolution counts, since the published baselines are conventional.
pub fn compare(report: &CostReport, reference: &Reference) -> Comparison {
    let mut rows = Vec::new();
    for (i, layer) in reference.layers.iter().enumerate() {
        let Some(c) = report.layers.iter().find(|c| c.name == *layer) else {
            continue;
        };
        let (num, unit) = display_unit(reference.params[i]);
        let shown = reference.multadds.map(|m| m[i]);
        rows.push(RefRow {
            layer: c.name.clone(),
            params: c.params,
            params_shown: reference.params[i],
            params_ok: matches_display(c.params as f64, num, unit),
            multadds: c.multadds_naive,
            multadds_shown: shown,
            multadds_ok: shown.map(|s| matches_display(c.multadds_naive as f64, s, 1e8)),
        });
    }
    let mut notes = Vec::new();
    if reference.multadds.is_none() {
        notes.push("published input length unknown; mult-adds are listed but not compared".to_string());
    }
    if reference.name == "table2" {
        notes.extend(table2_notes(report));
    }
    Comparison {
        reference: reference.name,
        rows,
        notes,
    }
}

fn table2_notes(report: &CostReport) -> Vec<String> {
    let get = |name: &str| report.layers.iter().find(|c| c.name == name);
    let mut notes = Vec::new();
    if let (Some(c2), Some(c5)) = (get("conv2"), get("conv5")) {
        // mult-adds of a conventional layer are output positions times weights
        notes.push(format!(
            "conv5-conv7: conv5 holds {:.0}x the weights of conv2 ({} vs {}) over 1/{:.0} of its output \
             positions ({} vs {}), so its mult-adds are {:.3}x conv2's {:.3e}, i.e. {:.3e}; conv6 and conv7 \
             keep the same product. A published 1.2e8 would need conv2 at 9.6e8 or more, contradicting its \
             published 9.0e8",
            c5.params as f64 / c2.params as f64,
            c5.params,
            c2.params,
            c2.len_out as f64 / c5.len_out as f64,
            c5.len_out,
            c2.len_out,
            c5.multadds_naive as f64 / c2.multadds_naive as f64,
            c2.multadds_naive as f64,
            c5.multadds_naive as f64,
        ));
    }
    if let Some(c8) = get("conv8") {
        let per_pos = c8.multadds_naive as f64 / c8.len_out as f64;
        notes.push(format!(
            "conv8: the length chain leaves {} input and {} output positions, giving {:.2e}; \
             the published 2.3e8 would need about {:.0} output positions. Reported as inconsistent",
            c8.len_in,
            c8.len_out,
            c8.multadds_naive as f64,
            2.3e8 / per_pos
        ));
    }
    notes
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "reference {}", self.reference)?;
        writeln!(
            f,
            "{:<8} {:>10} {:>7} {:>5} {:>12} {:>9} {:>5}",
            "layer", "params", "shown", "ok", "multadds", "shown", "ok"
        )?;
        let mark = |ok: bool| if ok { "yes" } else { "NO" };
        for r in &self.rows {
            writeln!(
                f,
                "{:<8} {:>10} {:>7} {:>5} {:>12.3e} {:>9} {:>5}",
                r.layer,
                r.params,
                r.params_shown,
                mark(r.params_ok),
                r.multadds as f64,
                r.multadds_shown.map_or("-".to_string(), |s| format!("{s}e8")),
                r.multadds_ok.map_or("-", mark)
            )?;
        }
        for n in &self.notes {
            writeln!(f, "note: {n}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetReport {
    pub preset: &'static Preset,
    pub spec: NetworkSpec,
    pub clamps: Vec<Clamp>,
    pub report: CostReport,
    pub size_ratio: f64,
    pub multadds_ratio: f64,
}

/// Costs of `baseline` rewritten with `preset`, with ratios against the
/// unmodified baseline. Quantized presets compare byte sizes.
pub fn preset_report(baseline: &NetworkSpec, preset: &'static Preset, len: usize) -> Result<PresetReport> {
    let (spec, clamps) = apply_preset(baseline, preset)?;
    let base = network_report(baseline, len)?;
    let report = network_report(&spec, len)?;
    let (mut size_ratio, multadds_ratio) = report.ratios_against(&base);
    if preset.quantized {
        size_ratio = base.float_bytes as f64 / report.quantized_bytes as f64;
    }
    Ok(PresetReport {
        preset,
        spec,
        clamps,
        report,
        size_ratio,
        multadds_ratio,
    })
}

impl fmt::Display for PresetReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "preset {}", self.preset.name)?;
        writeln!(f, "{}", CostTable(&self.report))?;
        for c in &self.clamps {
            writeln!(f, "clamp: {} {} requested {} applied {}", c.layer, c.what, c.requested, c.applied)?;
        }
        let (size, madds) = self.preset.reported;
        write!(
            f,
            "model size ratio {:.1}x (published {size}x), mult-adds ratio {:.1}x (published {madds}x)",
            self.size_ratio, self.multadds_ratio
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use wsnet_core::arch::LayerSpec;

    #[test]
    fn display_matching_rounds_or_truncates() {
        assert!(matches_display(32768.0, "33", 1e3));
        assert!(matches_display(32768.0, "32", 1e3));
        assert!(matches_display(65536.0, "65", 1e3));
        assert!(matches_display(131072.0, "130", 1e3));
        assert!(matches_display(2097152.0, "2", 1e6));
        assert!(matches_display(9.03e8, "9.0", 1e8));
        assert!(!matches_display(1.13e8, "1.2", 1e8));
        assert!(!matches_display(65536.0, "64", 1e3));
    }

    #[test]
    fn csv_shape() {
        let net = NetworkSpec {
            input_len: 100,
            input_channels: 1,
            classes: 0,
            layers: vec![LayerSpec::conv("a", 8, 4), LayerSpec::conv("b", 4, 4)],
        };
        let csv = cost_csv(&network_report(&net, 100).unwrap());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[3].starts_with("total,"));
        assert!(lines.iter().all(|l| l.split(',').count() == 6));
    }
}

//! Adverse-action reason codes from Shapley attributions.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use explainkit::ShapleyExplanation;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increases,
    Decreases,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonCode {
    pub rank: usize,
    pub feature: String,
    pub observed_value: f64,
    pub phi: f64,
    pub direction: Direction,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonCodes {
    pub codes: Vec<ReasonCode>,
    pub requested: usize,
    /// Fewer than `requested` features pushed the score up.
    pub incomplete: bool,
}

/// Human-readable labels for specific feature values, read from a CSV with
/// header `feature,value,label`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Codebook {
    entries: BTreeMap<(String, String), String>,
}

impl Codebook {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if normalize_header(h) == "feature,value,label" => {}
            _ => bail!("codebook must start with the header `feature,value,label`"),
        }
        let mut entries = BTreeMap::new();
        for (n, line) in lines {
            let mut parts = line.splitn(3, ',');
            let (Some(f), Some(v), Some(label)) = (parts.next(), parts.next(), parts.next()) else {
                bail!("codebook line {}: expected three fields", n + 1);
            };
            let value: f64 = v
                .trim()
                .parse()
                .with_context(|| format!("codebook line {}: value `{}`", n + 1, v.trim()))?;
            entries.insert((f.trim().to_string(), value.to_string()), label.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading codebook {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn label(&self, feature: &str, value: f64) -> Option<&str> {
        self.entries
            .get(&(feature.to_string(), value.to_string()))
            .map(String::as_str)
    }
}

fn normalize_header(h: &str) -> String {
    h.split(',').map(|s| s.trim().to_ascii_lowercase()).collect::<Vec<_>>().join(",")
}

/// The `k` features with the largest positive attributions, i.e. those
/// pushing the score toward the adverse outcome, ranked by size.
pub fn reason_codes(
    explanation: &ShapleyExplanation,
    x: &[f64],
    names: &[String],
    k: usize,
    codebook: Option<&Codebook>,
) -> Result<ReasonCodes> {
    if k == 0 {
        bail!("k must be at least 1");
    }
    if x.len() != explanation.phi.len() || names.len() != explanation.phi.len() {
        bail!("row, names and attributions disagree on the feature count");
    }
    let mut adverse: Vec<usize> = (0..explanation.phi.len())
        .filter(|&j| explanation.phi[j] > 0.0)
        .collect();
    adverse.sort_by(|&a, &b| {
        explanation.phi[b]
            .total_cmp(&explanation.phi[a])
            .then(a.cmp(&b))
    });
    let codes: Vec<ReasonCode> = adverse
        .iter()
        .take(k)
        .enumerate()
        .map(|(r, &j)| {
            let value = codebook
                .and_then(|c| c.label(&names[j], x[j]))
                .map_or_else(|| x[j].to_string(), str::to_string);
            ReasonCode {
                rank: r + 1,
                feature: names[j].clone(),
                observed_value: x[j],
                phi: explanation.phi[j],
                direction: Direction::Increases,
                text: format!(
                    "feature {} is {value} (contribution {:+.4})",
                    names[j], explanation.phi[j]
                ),
            }
        })
        .collect();
    Ok(ReasonCodes {
        incomplete: codes.len() < k,
        requested: k,
        codes,
    })
}

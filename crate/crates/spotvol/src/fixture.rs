//! Writes the synthetic fixture as pipeline inputs plus a ready config.

use std::path::Path;

use spotvol_core::synth::{generate, SynthConfig, SynthData};

use crate::error::{AppError, AppResult};
use crate::io;

/// Config for the fixture written next to it; the split leaves 100 test days
/// on the default 400-day panel.
pub fn fixture_config(cfg: &SynthConfig) -> String {
    let day = |i: i64| cfg.start + chrono::Duration::days(i);
    let n = cfg.days as i64;
    let train_end = day(n * 3 / 5 - 1);
    let validation_end = day(n * 3 / 4 - 1);
    let last = day(n - 1);
    format!(
        r#"seed = {seed}
output_dir = "out"

[data]
prices = "prices.csv"
exogenous = "exogenous.csv"
corpus_dir = "corpus"
region = "NSW1"
slots_per_day = {slots}

[split]
train_end = "{train_end}"
validation_end = "{validation_end}"

[measures]
jump_alpha = 0.01
# A 400-day panel leaves most (month, weekday) cells unseen inside the
# training split, so the diurnal profile is estimated on the whole panel.
profile_end = "{last}"

[features]
target = "log"
sfs_budget = 12
kernel = {{ kind = "rbf" }}
components = {{ rule = "explained", fraction = 0.95, max = 8 }}

[models]
refit_every = 20

[models.gbt]
n_rounds = 150
learning_rate = 0.05
max_depth = 3
min_samples_leaf = 5
subsample = 0.8

[models.lstm]
hidden = 16
seq_len = 10
batch_size = 32
learning_rate = 0.003
epochs = 80
patience = 15

[evaluation]
segment_size = 50
significance = 0.10

[rating]
mode = "monthly"
chunk_size = 240
overlap = 120
top_k = 4
question = "Weather severity in {{period}}"

[provider]
kind = "offline-mock"
"#,
        seed = cfg.seed,
        slots = cfg.slots_per_day,
    )
}

pub fn write_fixture(dir: &Path, cfg: &SynthConfig) -> AppResult<SynthData> {
    let data = generate(cfg)?;
    std::fs::create_dir_all(dir.join("corpus")).map_err(|e| AppError::io(dir, e))?;
    io::write_prices(&dir.join("prices.csv"), &data.prices)?;
    io::write_exogenous(&dir.join("exogenous.csv"), &data.exogenous)?;
    for (year, text) in &data.corpus {
        io::write_text(&dir.join("corpus").join(format!("{year}.txt")), text)?;
    }
    let mut severity = String::from("period,severity\n");
    for (p, s) in &data.severity {
        severity.push_str(&format!("{p},{s}\n"));
    }
    io::write_text(&dir.join("planted_severity.csv"), &severity)?;
    io::write_text(&dir.join("config.toml"), &fixture_config(cfg))?;
    Ok(data)
}

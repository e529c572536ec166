//! Newline-delimited JSON dataset files: one header record, then one record
//! per episode. Floats are written as shortest round-trip decimals.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Episode, InitialLaw, NoiseSchedule, ScenarioId, Split, StateSpaceModel};
use crate::error::{Error, Result};
use crate::linalg::{matrix_to_rows, rows_to_matrix, vector};

pub const DATASET_FORMAT: &str = "rkn-dataset/1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRecord {
    f: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialRecord {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderRecord {
    format: String,
    model: ModelRecord,
    initial: InitialRecord,
    master_seed: u64,
    split: Split,
    #[serde(rename = "T")]
    len: usize,
    m: usize,
    n: usize,
    scenario_mix: Vec<(ScenarioId, usize)>,
    rng: String,
    episodes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EpisodeRecord {
    episode_id: u64,
    seed: u64,
    scenario_id: ScenarioId,
    sigma: Vec<f64>,
    x: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
}

pub fn write_dataset<W: Write>(ds: &Dataset, mut w: W) -> Result<()> {
    let header = HeaderRecord {
        format: DATASET_FORMAT.to_string(),
        model: ModelRecord {
            f: matrix_to_rows(ds.model.f()),
            h: matrix_to_rows(ds.model.h()),
            q: matrix_to_rows(ds.model.q()),
        },
        initial: InitialRecord {
            mean: ds.initial.mean.iter().copied().collect(),
            cov: matrix_to_rows(&ds.initial.cov),
        },
        master_seed: ds.master_seed,
        split: ds.split,
        len: ds.episode_len(),
        m: ds.model.state_dim(),
        n: ds.model.meas_dim(),
        scenario_mix: ds.scenario_mix.clone(),
        rng: ds.rng_algorithm.clone(),
        episodes: ds.episodes.len(),
        provenance: ds.provenance.clone(),
    };
    serde_json::to_writer(&mut w, &header).map_err(|e| Error::Internal(e.to_string()))?;
    w.write_all(b"\n")?;
    for ep in &ds.episodes {
        let rec = EpisodeRecord {
            episode_id: ep.episode_id,
            seed: ep.seed,
            scenario_id: ep.schedule.scenario(),
            sigma: ep.schedule.sigma().to_vec(),
            x: ep.x.clone(),
            z: ep.z.clone(),
        };
        serde_json::to_writer(&mut w, &rec).map_err(|e| Error::Internal(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    write_dataset(ds, BufWriter::new(file))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = File::open(path)?;
    read_dataset(BufReader::new(file))
}

/// Parses a dataset held in memory.
pub fn parse_dataset(text: &str) -> Result<Dataset> {
    read_dataset(text.as_bytes())
}

fn parse_line<T: serde::de::DeserializeOwned>(line: &str, lineno: usize, what: &str) -> Result<T> {
    serde_json::from_str(line).map_err(|e| Error::Parse {
        line: lineno,
        message: format!("{what}: {e}"),
    })
}

fn read_dataset<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut lines = reader.lines().enumerate();
    let (_, first) = lines.next().ok_or(Error::Parse { line: 1, message: "empty file".into() })?;
    let header: HeaderRecord = parse_line(&first?, 1, "header")?;
    if header.format != DATASET_FORMAT {
        return Err(Error::Parse {
            line: 1,
            message: format!("field `format`: expected {DATASET_FORMAT:?}, found {:?}", header.format),
        });
    }
    let header_err = |field: &str, e: Error| Error::Parse { line: 1, message: format!("field `{field}`: {e}") };
    let model = StateSpaceModel::new(
        rows_to_matrix(&header.model.f).map_err(|e| header_err("model.f", e))?,
        rows_to_matrix(&header.model.h).map_err(|e| header_err("model.h", e))?,
        rows_to_matrix(&header.model.q).map_err(|e| header_err("model.q", e))?,
    )
    .map_err(|e| header_err("model", e))?;
    if model.state_dim() != header.m || model.meas_dim() != header.n {
        return Err(Error::Parse { line: 1, message: "fields `m`/`n` disagree with the model matrices".into() });
    }
    let initial = InitialLaw::new(
        vector(&header.initial.mean),
        rows_to_matrix(&header.initial.cov).map_err(|e| header_err("initial.cov", e))?,
    )
    .map_err(|e| header_err("initial", e))?;

    let mut episodes = Vec::with_capacity(header.episodes.min(1 << 16));
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EpisodeRecord = parse_line(&line, lineno, "episode")?;
        let schedule = NoiseSchedule::with_scenario(rec.sigma, rec.scenario_id)
            .map_err(|e| Error::Parse { line: lineno, message: format!("field `sigma`: {e}") })?;
        let ep = Episode { episode_id: rec.episode_id, seed: rec.seed, schedule, x: rec.x, z: rec.z };
        if ep.len() != header.len {
            return Err(Error::Validation(format!(
                "line {lineno}: episode {} has length {} but the header declares T = {}",
                ep.episode_id,
                ep.len(),
                header.len
            )));
        }
        if ep.x.iter().chain(ep.z.iter()).flatten().any(|v| !v.is_finite()) {
            return Err(Error::Parse { line: lineno, message: "fields `x`/`z`: non-finite value".into() });
        }
        ep.validate(header.m, header.n)
            .map_err(|e| Error::Validation(format!("line {lineno}: {e}")))?;
        episodes.push(ep);
    }
    if episodes.len() != header.episodes {
        return Err(Error::Parse {
            line: episodes.len() + 2,
            message: format!(
                "field `episodes`: header declares {} episodes, file holds {} (truncated?)",
                header.episodes,
                episodes.len()
            ),
        });
    }
    let ds = Dataset {
        episodes,
        model,
        initial,
        master_seed: header.master_seed,
        split: header.split,
        scenario_mix: header.scenario_mix,
        rng_algorithm: header.rng,
        provenance: header.provenance,
    };
    ds.validate()?;
    Ok(ds)
}

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ChunkedAction, Domain, NormStats};
use crate::numkit::{DenseMatrix, SeededRng, Stream};

use super::expert::{scripted_expert, EXPERT_DONE_IOU};
use super::{
    observe, reward, step, Variant, WorldState, ACTION_DIM, EMBODIMENT_COLUMNS, EPISODE_CAP, HORIZON, OBS_DIM,
};

pub const DATASET_SCHEMA_VERSION: u32 = 1;
const MAX_RETRIES: u64 = 1000;

/// One expert demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub domain: Domain,
    pub variant: Variant,
    pub seed: u64,
    pub observations: Vec<[f64; OBS_DIM]>,
    /// Raw waypoint chunks, one per observation, padded with the final
    /// waypoint past the end of the demonstration.
    pub chunks: Vec<ChunkedAction>,
    /// Reward after each executed step.
    pub rewards: Vec<f64>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn max_reward(&self) -> f64 {
        self.rewards.iter().copied().fold(0.0, f64::max)
    }
}

/// Rolls out the expert from the reset for `seed`. Returns `None` when the
/// expert does not reach its stopping reward within the episode cap.
pub fn generate_episode(domain: Domain, variant: Variant, seed: u64) -> Option<Episode> {
    let mut state = WorldState::reset(domain, variant, seed);
    let mut jitter = SeededRng::new(seed, Stream::Custom(0));
    let mut observations = Vec::new();
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    while state.step < EPISODE_CAP && reward(&state) < EXPERT_DONE_IOU {
        observations.push(observe(&state));
        let waypoint = scripted_expert(&state, Some(&mut jitter));
        actions.push(waypoint);
        state = step(&state, waypoint).state;
        rewards.push(reward(&state));
    }
    if reward(&state) < EXPERT_DONE_IOU || actions.is_empty() {
        return None;
    }
    let last = *actions.last().expect("non-empty");
    let chunks = (0..actions.len())
        .map(|t| {
            let data: Vec<f64> = (t..t + HORIZON)
                .flat_map(|k| actions.get(k).copied().unwrap_or(last))
                .collect();
            ChunkedAction::raw(DenseMatrix::from_vec(HORIZON, ACTION_DIM, data).expect("chunk shape"))
                .expect("finite chunk")
        })
        .collect();
    Some(Episode {
        domain,
        variant,
        seed,
        observations,
        chunks,
        rewards,
    })
}

/// Demonstration counts per (domain, variant) cell.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default)]
    pub source: BTreeMap<String, usize>,
    #[serde(default)]
    pub target: BTreeMap<String, usize>,
}

impl DatasetSpec {
    /// 100 + 100 base demonstrations and 50 source demonstrations for each
    /// of the three shifted variants.
    pub fn reference_mixture() -> Self {
        let mut spec = DatasetSpec::default();
        spec.source.insert("base".into(), 100);
        spec.source.insert("purple".into(), 50);
        spec.source.insert("purple_mirrored".into(), 50);
        spec.source.insert("white_mirrored".into(), 50);
        spec.target.insert("base".into(), 100);
        spec
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: DatasetSpec = toml::from_str(text).map_err(|e| Error::parse("dataset spec", e.to_string()))?;
        spec.cells()?;
        Ok(spec)
    }

    /// Validated counts in canonical order (source before target, variants
    /// in declaration order).
    pub fn cells(&self) -> Result<Vec<(Domain, Variant, usize)>> {
        let mut out = Vec::new();
        for (domain, map) in [(Domain::Source, &self.source), (Domain::Target, &self.target)] {
            let mut parsed = BTreeMap::new();
            for (name, &count) in map {
                parsed.insert(name.parse::<Variant>()?, count);
            }
            for v in Variant::ALL {
                out.push((domain, v, parsed.get(&v).copied().unwrap_or(0)));
            }
        }
        Ok(out)
    }
}

fn cell_stream(domain: Domain, variant: Variant) -> Stream {
    let d = match domain {
        Domain::Source => 0,
        Domain::Target => 1,
    };
    let v = Variant::ALL.iter().position(|&x| x == variant).expect("known variant") as u64;
    Stream::Custom(1 + d * 4 + v)
}

/// Expert demonstrations for every cell of `spec`. Failed rollouts are
/// regenerated from the next sub-seed.
pub fn generate_dataset(spec: &DatasetSpec, seed: u64) -> Result<Vec<Episode>> {
    let mut episodes = Vec::new();
    let mut retries = 0u64;
    for (domain, variant, count) in spec.cells()? {
        let mut rng = SeededRng::new(seed, cell_stream(domain, variant));
        for _ in 0..count {
            let base = rng.next_u64();
            let mut found = None;
            for sub in 0..MAX_RETRIES {
                if let Some(ep) = generate_episode(domain, variant, base.wrapping_add(sub)) {
                    found = Some(ep);
                    break;
                }
                retries += 1;
            }
            episodes.push(found.ok_or_else(|| {
                Error::contract(format!(
                    "expert failed {MAX_RETRIES} times in a row for {domain}/{variant}"
                ))
            })?);
        }
    }
    if retries > 0 {
        log::info!("regenerated {retries} failed expert episodes");
    }
    Ok(episodes)
}

/// Line record of one episode. Field order is part of the file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    pub schema_version: u32,
    pub domain: Domain,
    pub variant: Variant,
    pub seed: u64,
    /// Row-major `len x 10`.
    pub observations: Vec<f64>,
    /// Row-major `len x 16 x 2` raw waypoints.
    pub chunks: Vec<f64>,
    pub rewards: Vec<f64>,
}

impl From<&Episode> for EpisodeRecord {
    fn from(ep: &Episode) -> Self {
        EpisodeRecord {
            schema_version: DATASET_SCHEMA_VERSION,
            domain: ep.domain,
            variant: ep.variant,
            seed: ep.seed,
            observations: ep.observations.iter().flatten().copied().collect(),
            chunks: ep.chunks.iter().flat_map(|c| c.values().data().to_vec()).collect(),
            rewards: ep.rewards.clone(),
        }
    }
}

impl TryFrom<EpisodeRecord> for Episode {
    type Error = Error;

    fn try_from(r: EpisodeRecord) -> Result<Self> {
        if r.schema_version != DATASET_SCHEMA_VERSION {
            return Err(Error::parse(
                "episode",
                format!(
                    "schema version {} (expected {DATASET_SCHEMA_VERSION})",
                    r.schema_version
                ),
            ));
        }
        let n = r.rewards.len();
        let per_chunk = HORIZON * ACTION_DIM;
        if r.observations.len() != n * OBS_DIM || r.chunks.len() != n * per_chunk {
            return Err(Error::parse(
                "episode",
                "observation, chunk and reward lengths disagree",
            ));
        }
        let observations = r
            .observations
            .chunks_exact(OBS_DIM)
            .map(|c| c.try_into().expect("exact chunk"))
            .collect();
        let chunks = r
            .chunks
            .chunks_exact(per_chunk)
            .map(|c| ChunkedAction::raw(DenseMatrix::from_vec(HORIZON, ACTION_DIM, c.to_vec())?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Episode {
            domain: r.domain,
            variant: r.variant,
            seed: r.seed,
            observations,
            chunks,
            rewards: r.rewards,
        })
    }
}

pub fn write_episodes(path: &Path, episodes: &[Episode]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for ep in episodes {
        let line =
            serde_json::to_string(&EpisodeRecord::from(ep)).map_err(|e| Error::parse("episode", e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_episodes(path: &Path) -> Result<Vec<Episode>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EpisodeRecord = serde_json::from_str(&line)
            .map_err(|e| Error::parse(format!("{}:{}", path.display(), k + 1), e.to_string()))?;
        out.push(Episode::try_from(record)?);
    }
    Ok(out)
}

/// Per-embodiment normalisation statistics. Observation statistics cover
/// the embodiment columns only; the background code is passed through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormBundle {
    pub source_obs: Option<NormStats>,
    pub source_action: Option<NormStats>,
    pub target_obs: Option<NormStats>,
    pub target_action: Option<NormStats>,
}

impl NormBundle {
    pub fn fit(episodes: &[Episode]) -> Result<Self> {
        let fit = |domain: Domain| -> Result<(Option<NormStats>, Option<NormStats>)> {
            let ds = DomainDataset::from_episodes(domain, episodes.iter());
            if ds.is_empty() {
                return Ok((None, None));
            }
            let (o, a) = ds.fit_norm_stats()?;
            Ok((Some(o), Some(a)))
        };
        let (source_obs, source_action) = fit(Domain::Source)?;
        let (target_obs, target_action) = fit(Domain::Target)?;
        Ok(NormBundle {
            source_obs,
            source_action,
            target_obs,
            target_action,
        })
    }

    pub fn obs(&self, domain: Domain) -> Result<&NormStats> {
        match domain {
            Domain::Source => self.source_obs.as_ref(),
            Domain::Target => self.target_obs.as_ref(),
        }
        .ok_or_else(|| Error::contract(format!("no {domain} observation statistics")))
    }

    pub fn action(&self, domain: Domain) -> Result<&NormStats> {
        match domain {
            Domain::Source => self.source_action.as_ref(),
            Domain::Target => self.target_action.as_ref(),
        }
        .ok_or_else(|| Error::contract(format!("no {domain} action statistics")))
    }
}

/// Flattened `(observation, chunk)` items of one embodiment.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub domain: Domain,
    /// `N x 10` raw observations.
    pub observations: DenseMatrix,
    /// `N x (16·2)` raw waypoint chunks.
    pub actions: DenseMatrix,
    pub variants: Vec<Variant>,
    pub episode_ids: Vec<usize>,
    pub steps: Vec<usize>,
}

impl DomainDataset {
    /// Items of every episode in `domain`, in episode order. Episode ids
    /// index the filtered episode sequence.
    pub fn from_episodes<'a>(domain: Domain, episodes: impl IntoIterator<Item = &'a Episode>) -> Self {
        let mut obs = Vec::new();
        let mut act = Vec::new();
        let mut variants = Vec::new();
        let mut episode_ids = Vec::new();
        let mut steps = Vec::new();
        for (id, ep) in episodes.into_iter().filter(|e| e.domain == domain).enumerate() {
            for (t, (o, c)) in ep.observations.iter().zip(&ep.chunks).enumerate() {
                obs.extend_from_slice(o);
                act.extend_from_slice(c.values().data());
                variants.push(ep.variant);
                episode_ids.push(id);
                steps.push(t);
            }
        }
        let n = variants.len();
        DomainDataset {
            domain,
            observations: DenseMatrix::from_vec(n, OBS_DIM, obs).expect("observation rows"),
            actions: DenseMatrix::from_vec(n, HORIZON * ACTION_DIM, act).expect("chunk rows"),
            variants,
            episode_ids,
            steps,
        }
    }

    pub fn len(&self) -> usize {
        self.variants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variants.is_empty()
    }

    /// Embodiment-column observation statistics and per-step action
    /// statistics, fitted on this embodiment only.
    pub fn fit_norm_stats(&self) -> Result<(NormStats, NormStats)> {
        let obs_rows: Vec<Vec<f64>> = (0..self.len())
            .map(|r| {
                EMBODIMENT_COLUMNS
                    .iter()
                    .map(|&c| self.observations.get(r, c))
                    .collect()
            })
            .collect();
        let obs = NormStats::fit(self.domain, obs_rows.iter().map(|r| r.as_slice()))?;
        let action = NormStats::fit(self.domain, self.actions.data().chunks_exact(ACTION_DIM))?;
        Ok((obs, action))
    }
}

/// File names of a dataset directory: one line-record file per variant
/// plus the normalisation statistics.
pub struct DatasetFiles;

impl DatasetFiles {
    pub const NORM_STATS: &'static str = "norm_stats.json";

    pub fn variant_file(variant: Variant) -> String {
        format!("{variant}.jsonl")
    }

    /// Writes every variant file (possibly empty) and the statistics.
    pub fn write(dir: &Path, episodes: &[Episode]) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for v in Variant::ALL {
            let path = dir.join(Self::variant_file(v));
            let subset: Vec<Episode> = episodes.iter().filter(|e| e.variant == v).cloned().collect();
            write_episodes(&path, &subset)?;
            written.push(path);
        }
        let stats = NormBundle::fit(episodes)?;
        let path = dir.join(Self::NORM_STATS);
        let text = serde_json::to_string_pretty(&stats).map_err(|e| Error::parse("norm stats", e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(written)
    }
}

/// Every episode in a dataset directory, in variant file order.
pub fn load_dataset_dir(dir: &Path) -> Result<Vec<Episode>> {
    let mut out = Vec::new();
    for v in Variant::ALL {
        let path = dir.join(DatasetFiles::variant_file(v));
        let episodes = read_episodes(&path)?;
        if let Some(bad) = episodes.iter().find(|e| e.variant != v) {
            return Err(Error::parse(
                path.display().to_string(),
                format!("holds a {} episode", bad.variant),
            ));
        }
        out.extend(episodes);
    }
    Ok(out)
}

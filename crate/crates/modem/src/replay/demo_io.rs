//! Demonstration files: a versioned JSON header line, then one episode per
//! line. Serialization uses shortest-round-trip float formatting, so a
//! load/save cycle reproduces the file byte for byte.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use autodiff::Tensor;
use serde::{Deserialize, Serialize};

use crate::envs::{EnvConfig, Observation};
use crate::error::{Error, Result};
use crate::replay::{Episode, Source};

pub const DEMO_FORMAT: &str = "modem-demos";
pub const DEMO_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoHeader {
    pub format: String,
    pub version: u32,
    pub task: String,
    pub grid_size: usize,
    pub frame_stack: usize,
    pub channels: usize,
    pub proprio_dim: usize,
    pub action_dim: usize,
    pub episode_len: usize,
    pub action_repeat: usize,
    pub goal_radius: f64,
}

impl DemoHeader {
    pub fn for_env(cfg: &EnvConfig, proprio_dim: usize, action_dim: usize) -> DemoHeader {
        DemoHeader {
            format: DEMO_FORMAT.into(),
            version: DEMO_VERSION,
            task: cfg.task.clone(),
            grid_size: cfg.grid_size,
            frame_stack: cfg.frame_stack,
            channels: 1,
            proprio_dim,
            action_dim,
            episode_len: cfg.episode_len,
            action_repeat: cfg.action_repeat,
            goal_radius: cfg.goal_radius,
        }
    }

    pub fn check_env(&self, cfg: &EnvConfig) -> Result<()> {
        if self.task != cfg.task
            || self.grid_size != cfg.grid_size
            || self.frame_stack != cfg.frame_stack
            || self.action_repeat != cfg.action_repeat
            || self.goal_radius != cfg.goal_radius
        {
            return Err(Error::DemoFormat(format!(
                "demo file was generated for task={} grid={} stack={} repeat={} radius={}, \
                 run config has task={} grid={} stack={} repeat={} radius={}",
                self.task,
                self.grid_size,
                self.frame_stack,
                self.action_repeat,
                self.goal_radius,
                cfg.task,
                cfg.grid_size,
                cfg.frame_stack,
                cfg.action_repeat,
                cfg.goal_radius
            )));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct EpisodeLine {
    /// [T+1][stack][channels][S][S]
    obs_image: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
    /// [T+1][P]
    obs_proprio: Vec<Vec<f64>>,
    /// [T][A]
    actions: Vec<Vec<f64>>,
    /// [T]
    rewards: Vec<f64>,
    success: bool,
}

fn nest_image(obs: &Observation) -> Vec<Vec<Vec<Vec<f64>>>> {
    let shape = obs.image.shape();
    let (stack, channels, side) = (shape[0], shape[1], shape[2]);
    let data = obs.image.data();
    let mut out = Vec::with_capacity(stack);
    let mut idx = 0;
    for _ in 0..stack {
        let mut chans = Vec::with_capacity(channels);
        for _ in 0..channels {
            let mut rows = Vec::with_capacity(side);
            for _ in 0..side {
                rows.push(data[idx..idx + side].to_vec());
                idx += side;
            }
            chans.push(rows);
        }
        out.push(chans);
    }
    out
}

fn flatten_image(nested: &[Vec<Vec<Vec<f64>>>], header: &DemoHeader) -> Result<Tensor> {
    let (stack, channels, side) = (header.frame_stack, header.channels, header.grid_size);
    if nested.len() != stack {
        return Err(Error::DemoFormat(format!(
            "obs_image has {} stacked frames, header says {}",
            nested.len(),
            stack
        )));
    }
    let mut data = Vec::with_capacity(stack * channels * side * side);
    for frame in nested {
        if frame.len() != channels {
            return Err(Error::DemoFormat("obs_image channel count mismatch".into()));
        }
        for chan in frame {
            if chan.len() != side || chan.iter().any(|row| row.len() != side) {
                return Err(Error::DemoFormat("obs_image spatial extent mismatch".into()));
            }
            for row in chan {
                data.extend_from_slice(row);
            }
        }
    }
    Ok(Tensor::new(vec![stack, channels, side, side], data))
}

pub fn save_demos(path: &Path, header: &DemoHeader, episodes: &[Episode]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    let header_json = serde_json::to_string(header)
        .map_err(|e| Error::DemoFormat(format!("header serialization: {}", e)))?;
    writeln!(w, "{}", header_json).map_err(io_err)?;
    for ep in episodes {
        let line = EpisodeLine {
            obs_image: ep.observations.iter().map(nest_image).collect(),
            obs_proprio: ep.observations.iter().map(|o| o.proprio.clone()).collect(),
            actions: ep.actions.clone(),
            rewards: ep.rewards.clone(),
            success: ep.success,
        };
        let json = serde_json::to_string(&line)
            .map_err(|e| Error::DemoFormat(format!("episode serialization: {}", e)))?;
        writeln!(w, "{}", json).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn load_demos(path: &Path) -> Result<(DemoHeader, Vec<Episode>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::DemoFormat("empty demo file".into()))?
        .map_err(|e| Error::io(path, e))?;
    let header: DemoHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::DemoFormat(format!("header: {}", e)))?;
    if header.format != DEMO_FORMAT {
        return Err(Error::DemoFormat(format!("unexpected format '{}'", header.format)));
    }
    if header.version != DEMO_VERSION {
        return Err(Error::DemoFormat(format!("unsupported version {}", header.version)));
    }

    let mut episodes = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: EpisodeLine = serde_json::from_str(&line)
            .map_err(|e| Error::DemoFormat(format!("episode line {}: {}", lineno + 2, e)))?;
        if parsed.obs_proprio.len() != parsed.obs_image.len() {
            return Err(Error::DemoFormat(format!(
                "episode line {}: {} images vs {} proprio entries",
                lineno + 2,
                parsed.obs_image.len(),
                parsed.obs_proprio.len()
            )));
        }
        let observations: Vec<Observation> = parsed
            .obs_image
            .iter()
            .zip(&parsed.obs_proprio)
            .map(|(img, prop)| {
                if prop.len() != header.proprio_dim {
                    return Err(Error::DemoFormat(format!(
                        "episode line {}: proprio dim {} vs header {}",
                        lineno + 2,
                        prop.len(),
                        header.proprio_dim
                    )));
                }
                Ok(Observation { image: flatten_image(img, &header)?, proprio: prop.clone() })
            })
            .collect::<Result<_>>()?;
        if parsed.actions.iter().any(|a| a.len() != header.action_dim) {
            return Err(Error::DemoFormat(format!(
                "episode line {}: action dim mismatch",
                lineno + 2
            )));
        }
        let episode = Episode {
            observations,
            actions: parsed.actions,
            rewards: parsed.rewards,
            success: parsed.success,
            source: Source::Demo,
        };
        episode.validate()?;
        episodes.push(episode);
    }
    Ok((header, episodes))
}

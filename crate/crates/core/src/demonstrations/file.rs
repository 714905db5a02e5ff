use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_structure, validate, DemoMetadata, DemoStep, DemonstrationSet, Episode, EpisodeEnd};
use crate::environment::{Environment, TaskId, WorldState};
use crate::error::{Error, Result};

pub const DEMO_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Header(DemoMetadata),
    EpisodeStart {
        episode: usize,
        initial_state: WorldState,
    },
    Step {
        episode: usize,
        t: usize,
        task: TaskId,
        observation: Vec<f64>,
        action: Vec<f64>,
    },
    EpisodeEnd {
        episode: usize,
        steps: usize,
        end: EpisodeEnd,
        final_observation: Vec<f64>,
    },
}

/// Append-only writer: a header line, then each episode flushed as it is added.
pub struct DemoWriter<W: Write> {
    out: W,
    episodes: usize,
}

impl DemoWriter<BufWriter<File>> {
    pub fn create(path: &Path, metadata: &DemoMetadata) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufWriter::new(f), metadata).map_err(|e| Error::io(path, e))
    }
}

impl<W: Write> DemoWriter<W> {
    pub fn new(mut out: W, metadata: &DemoMetadata) -> std::io::Result<Self> {
        write_line(&mut out, &Line::Header(metadata.clone()))?;
        out.flush()?;
        Ok(Self { out, episodes: 0 })
    }

    pub fn append(&mut self, ep: &Episode) -> std::io::Result<()> {
        let episode = self.episodes;
        write_line(
            &mut self.out,
            &Line::EpisodeStart {
                episode,
                initial_state: ep.initial_state.clone(),
            },
        )?;
        for (t, s) in ep.steps.iter().enumerate() {
            write_line(
                &mut self.out,
                &Line::Step {
                    episode,
                    t,
                    task: s.task,
                    observation: s.observation.clone(),
                    action: s.action.clone(),
                },
            )?;
        }
        write_line(
            &mut self.out,
            &Line::EpisodeEnd {
                episode,
                steps: ep.steps.len(),
                end: ep.end,
                final_observation: ep.final_observation.clone(),
            },
        )?;
        self.out.flush()?;
        self.episodes += 1;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

fn write_line<W: Write>(out: &mut W, line: &Line) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, line)?;
    out.write_all(b"\n")
}

pub fn save(set: &DemonstrationSet, path: &Path) -> Result<()> {
    let mut w = DemoWriter::create(path, &set.metadata)?;
    for ep in &set.episodes {
        w.append(ep).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Parses a demo file with structural checks only (no hashes, no replay).
pub fn read(path: &Path) -> Result<DemonstrationSet> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    parse(BufReader::new(f)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub(crate) fn parse<R: BufRead>(reader: R) -> Result<DemonstrationSet> {
    let mut lines = reader.lines().enumerate().peekable();
    let mut next = || -> Result<Option<(usize, Line, bool)>> {
        let Some((no, text)) = lines.next() else {
            return Ok(None);
        };
        let text = text.map_err(|e| Error::io("<demo stream>", e))?;
        let is_last = lines.peek().is_none();
        match serde_json::from_str::<Line>(&text) {
            Ok(l) => Ok(Some((no + 1, l, is_last))),
            Err(e) if is_last && e.is_eof() => Err(Error::Truncated(format!("line {} is incomplete", no + 1))),
            Err(e) => Err(Error::Parse(format!("line {}: {e}", no + 1))),
        }
    };
    let metadata = match next()? {
        Some((_, Line::Header(m), _)) => m,
        Some((no, _, _)) => return Err(Error::Parse(format!("line {no}: expected header"))),
        None => return Err(Error::Truncated("empty file".into())),
    };
    if metadata.format_version != DEMO_FORMAT_VERSION {
        return Err(Error::Version {
            found: metadata.format_version,
            expected: DEMO_FORMAT_VERSION,
        });
    }
    let mut episodes = Vec::new();
    let mut open: Option<Episode> = None;
    while let Some((no, line, _)) = next()? {
        let index = episodes.len();
        match line {
            Line::Header(_) => return Err(Error::Parse(format!("line {no}: second header"))),
            Line::EpisodeStart { episode, initial_state } => {
                if open.is_some() {
                    return Err(Error::Parse(format!("line {no}: episode {index} was not ended")));
                }
                if episode != index {
                    return Err(Error::Parse(format!("line {no}: episode {episode}, expected {index}")));
                }
                open = Some(Episode {
                    initial_state,
                    steps: Vec::new(),
                    end: EpisodeEnd::Stopped,
                    final_observation: Vec::new(),
                    completions: Vec::new(),
                });
            }
            Line::Step {
                episode,
                t,
                task,
                observation,
                action,
            } => {
                let ep = open
                    .as_mut()
                    .ok_or_else(|| Error::Parse(format!("line {no}: step outside an episode")))?;
                if episode != index || t != ep.steps.len() {
                    return Err(Error::Parse(format!("line {no}: step {episode}/{t} out of order")));
                }
                ep.steps.push(DemoStep {
                    task,
                    observation,
                    action,
                    events: Vec::new(),
                });
            }
            Line::EpisodeEnd {
                episode,
                steps,
                end,
                final_observation,
            } => {
                let mut ep = open
                    .take()
                    .ok_or_else(|| Error::Parse(format!("line {no}: end outside an episode")))?;
                if episode != index || steps != ep.steps.len() {
                    return Err(Error::Parse(format!(
                        "line {no}: end of episode {episode} claims {steps} steps, found {}",
                        ep.steps.len()
                    )));
                }
                ep.end = end;
                ep.final_observation = final_observation;
                check_structure(index, &ep)?;
                episodes.push(ep);
            }
        }
    }
    if open.is_some() {
        return Err(Error::Truncated(format!("episode {} has no end record", episodes.len())));
    }
    Ok(DemonstrationSet { metadata, episodes })
}

/// Reads a demo file and validates it against `env`: hashes, then replay of
/// every episode (which also re-derives the reward events).
pub fn load(path: &Path, env: &Environment) -> Result<DemonstrationSet> {
    let mut set = read(path)?;
    validate(env, &mut set)?;
    Ok(set)
}

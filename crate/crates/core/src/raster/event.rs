//! Event directory layout: `event.json` plus `frame_NNNN.rgrd` files.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{read_grid_file, write_grid_file, EventSequence};
use crate::error::{Error, Result};

pub const EVENT_META_FILE: &str = "event.json";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EventMeta {
    pub event_id: String,
    pub step_minutes: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_time: Option<NaiveDateTime>,
    /// Frame file names relative to the event directory, in temporal order.
    pub frames: Vec<String>,
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:04}.rgrd")
}

pub fn write_event_dir(event: &EventSequence, dir: impl AsRef<Path>) -> Result<EventMeta> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut frames = Vec::with_capacity(event.len());
    for (i, frame) in event.frames().iter().enumerate() {
        let name = frame_file_name(i);
        write_grid_file(frame, dir.join(&name))?;
        frames.push(name);
    }
    let meta = EventMeta {
        event_id: event.event_id.clone(),
        step_minutes: event.step_minutes,
        start_time: event.start_time,
        frames,
    };
    fs::write(dir.join(EVENT_META_FILE), serde_json::to_vec_pretty(&meta)?)?;
    Ok(meta)
}

/// Loads an event directory. Without `event.json`, frames are the
/// directory's `*.rgrd` files in lexicographic order with a 5-minute step
/// and the directory name as id.
pub fn read_event_dir(dir: impl AsRef<Path>) -> Result<EventSequence> {
    let dir = dir.as_ref();
    let meta_path = dir.join(EVENT_META_FILE);
    let meta = if meta_path.exists() {
        serde_json::from_slice::<EventMeta>(&fs::read(&meta_path)?)?
    } else {
        let mut frames: Vec<String> = fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".rgrd"))
            .collect();
        frames.sort();
        EventMeta {
            event_id: dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
            step_minutes: 5.0,
            start_time: None,
            frames,
        }
    };
    if meta.frames.is_empty() {
        return Err(Error::Format(format!(
            "event {} has no frames",
            dir.display()
        )));
    }
    let frames = meta
        .frames
        .iter()
        .map(|name| read_grid_file(dir.join(name)).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;
    let mut event = EventSequence::from_shared(meta.event_id, meta.step_minutes, frames)?;
    event.start_time = meta.start_time;
    Ok(event)
}

//! Address-event streams: the data model, file formats, temporal binning and
//! a deterministic synthetic generator.

mod binning;
mod io;
mod synth;

pub use binning::{bin_events, truncate_prefix};
pub use io::{load_stream, read_csv, read_evs1, save_stream, write_csv, write_evs1, StreamFormat};
pub use synth::{gen_synthetic, Glyph, SyntheticSpec};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Polarity {
    Off = 0,
    On = 1,
}

impl Polarity {
    pub const COUNT: usize = 2;

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Polarity::Off),
            1 => Some(Polarity::On),
            _ => None,
        }
    }

    /// Channel index used by count maps and response maps.
    #[inline]
    pub fn channel(self) -> usize {
        self as usize
    }
}

/// A single pixel event. `x` is the column and `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub t: u32,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t: u32, x: u16, y: u16, polarity: Polarity) -> Self {
        Event { t, x, y, polarity }
    }
}

/// Events from one sensor over `[0, duration)` microseconds, ordered by time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    width: u16,
    height: u16,
    duration: u32,
    events: Vec<Event>,
}

impl EventStream {
    /// Builds a stream after checking every invariant. Events must already be
    /// sorted; use [`EventStream::from_unsorted`] otherwise.
    pub fn new(width: u16, height: u16, duration: u32, events: Vec<Event>) -> Result<Self> {
        let stream = EventStream {
            width,
            height,
            duration,
            events,
        };
        stream.validate()?;
        Ok(stream)
    }

    /// Stable-sorts by timestamp, then validates.
    pub fn from_unsorted(
        width: u16,
        height: u16,
        duration: u32,
        mut events: Vec<Event>,
    ) -> Result<Self> {
        events.sort_by_key(|e| e.t);
        Self::new(width, height, duration, events)
    }

    pub fn empty(width: u16, height: u16, duration: u32) -> Result<Self> {
        Self::new(width, height, duration, Vec::new())
    }

    /// Skips validation. Only for streams built from an already valid stream.
    pub(crate) fn from_parts_unchecked(
        width: u16,
        height: u16,
        duration: u32,
        events: Vec<Event>,
    ) -> Self {
        EventStream {
            width,
            height,
            duration,
            events,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Invariant(format!(
                "sensor dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        let mut prev = 0u32;
        for (i, e) in self.events.iter().enumerate() {
            if e.x >= self.width || e.y >= self.height {
                return Err(Error::Invariant(format!(
                    "event {i} at ({}, {}) outside {}x{} sensor",
                    e.x, e.y, self.width, self.height
                )));
            }
            if e.t >= self.duration {
                return Err(Error::Invariant(format!(
                    "event {i} timestamp {} not below duration {}",
                    e.t, self.duration
                )));
            }
            if e.t < prev {
                return Err(Error::Invariant(format!(
                    "event {i} timestamp {} precedes previous {}",
                    e.t, prev
                )));
            }
            prev = e.t;
        }
        Ok(())
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn duration(&self) -> u32 {
        self.duration
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }
}

use super::kernel::check_size;
use crate::error::{Error, Result};
use crate::event::{EventStream, Polarity};

/// Per-position, per-parameter coverage counts.
///
/// Channel `p` is a `(H*K) x (W*K)` grid. The `K x K` block at block-row `i`,
/// block-column `j` belongs to response position `(row i, col j)`; entry
/// `(a, b)` inside the block counts how often kernel parameter `(a, b)` was
/// stamped onto that position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMap {
    channels: usize,
    height: usize,
    width: usize,
    k: usize,
    counts: Vec<u32>,
}

impl CountMap {
    pub fn zeros(channels: usize, height: usize, width: usize, k: usize) -> Self {
        CountMap {
            channels,
            height,
            width,
            k,
            counts: vec![0; channels * height * k * width * k],
        }
    }

    pub fn from_counts(channels: usize, height: usize, width: usize, k: usize, counts: Vec<u32>) -> Result<Self> {
        if counts.len() != channels * height * k * width * k {
            return Err(Error::arg(format!(
                "count map {channels}x{}x{} needs {} counts, got {}",
                height * k,
                width * k,
                channels * height * k * width * k,
                counts.len()
            )));
        }
        Ok(CountMap {
            channels,
            height,
            width,
            k,
            counts,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Response-map height (sensor rows).
    pub fn height(&self) -> usize {
        self.height
    }

    /// Response-map width (sensor columns).
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn kernel_size(&self) -> usize {
        self.k
    }

    /// Flat `[channel][H*K][W*K]` counts.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn grid_width(&self) -> usize {
        self.width * self.k
    }

    pub fn grid_height(&self) -> usize {
        self.height * self.k
    }

    #[inline]
    fn index(&self, channel: usize, grid_row: usize, grid_col: usize) -> usize {
        (channel * self.grid_height() + grid_row) * self.grid_width() + grid_col
    }

    /// Count of kernel parameter `(a, b)` at response position `(row, col)`.
    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize, a: usize, b: usize) -> u32 {
        self.counts[self.index(channel, row * self.k + a, col * self.k + b)]
    }

    /// Count at a raw grid cell.
    #[inline]
    pub fn grid(&self, channel: usize, grid_row: usize, grid_col: usize) -> u32 {
        self.counts[self.index(channel, grid_row, grid_col)]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Entrywise sum; both maps must share geometry.
    pub fn merged(&self, other: &CountMap) -> Result<CountMap> {
        if (self.channels, self.height, self.width, self.k)
            != (other.channels, other.height, other.width, other.k)
        {
            return Err(Error::arg("count map geometry mismatch"));
        }
        let counts = self
            .counts
            .iter()
            .zip(&other.counts)
            .map(|(a, b)| a + b)
            .collect();
        Ok(CountMap { counts, ..*self })
    }

    /// Adds one event's footprint. Out-of-bounds stamps are dropped.
    pub fn add_event(&mut self, channel: usize, x: usize, y: usize) {
        let c = self.k / 2;
        let k = self.k;
        let gw = self.grid_width();
        let plane = channel * self.grid_height() * gw;
        let r0 = y.saturating_sub(c);
        let r1 = (y + c).min(self.height - 1);
        let c0 = x.saturating_sub(c);
        let c1 = (x + c).min(self.width - 1);
        for row in r0..=r1 {
            // Kernel row index a = c + (row - y).
            let a = row + c - y;
            let line = plane + (row * k + a) * gw;
            for col in c0..=c1 {
                let b = col + c - x;
                self.counts[line + col * k + b] += 1;
            }
        }
    }
}

/// Number of in-bounds cells a `k x k` stamp centered at `(x, y)` covers.
pub fn footprint_size(x: usize, y: usize, k: usize, width: usize, height: usize) -> usize {
    let c = k / 2;
    let rows = (y + c).min(height - 1) - y.saturating_sub(c) + 1;
    let cols = (x + c).min(width - 1) - x.saturating_sub(c) + 1;
    rows * cols
}

/// Parameter counter: one channel per polarity. Kernel values are never read.
pub fn build_count_map(stream: &EventStream, k: usize, height: usize, width: usize) -> Result<CountMap> {
    check_size(k)?;
    if (stream.width() as usize, stream.height() as usize) != (width, height) {
        return Err(Error::arg(format!(
            "stream is {}x{}, count map expects {width}x{height}",
            stream.width(),
            stream.height()
        )));
    }
    let mut map = CountMap::zeros(Polarity::COUNT, height, width, k);
    for e in stream.events() {
        map.add_event(e.polarity.channel(), e.x as usize, e.y as usize);
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Event;

    #[test]
    fn centered_event_on_3x3_sensor() {
        let s = EventStream::new(3, 3, 10, vec![Event::new(0, 1, 1, Polarity::On)]).unwrap();
        let m = build_count_map(&s, 3, 3, 3).unwrap();
        let ch = Polarity::On.channel();
        for r in 0..9 {
            for c in 0..9 {
                let expect = u32::from(r % 4 == 0 && c % 4 == 0);
                assert_eq!(m.grid(ch, r, c), expect, "cell ({r},{c})");
            }
        }
        assert_eq!(m.total(), 9);
        assert!(m.counts()[..81].iter().all(|&v| v == 0), "OFF channel untouched");
    }

    // 5x5 response map lettered A..Y row-major. The first event covers
    // A,B,C,F,G,H,K,L,M, so it sits at (row 1, col 1).
    #[test]
    fn letter_grid_example() {
        let letter = |ch: char| {
            let i = ch as usize - 'A' as usize;
            (i / 5, i % 5)
        };
        let s = EventStream::new(5, 5, 10, vec![Event::new(0, 1, 1, Polarity::On)]).unwrap();
        let m = build_count_map(&s, 3, 5, 5).unwrap();
        let ch = Polarity::On.channel();
        let touched = [('A', 1), ('B', 2), ('C', 3), ('F', 4), ('G', 5), ('H', 6), ('K', 7), ('L', 8), ('M', 9)];
        for (pos, n) in touched {
            let (row, col) = letter(pos);
            let (a, b) = ((n - 1) / 3, (n - 1) % 3);
            assert_eq!(m.get(ch, row, col, a, b), 1, "{pos}W{n}");
        }
        assert_eq!(m.total(), 9);

        // The second covers R,S,T,W,X,Y with W1..W6 only: row 4, col 3.
        let s = EventStream::new(5, 5, 10, vec![Event::new(0, 3, 4, Polarity::On)]).unwrap();
        let m = build_count_map(&s, 3, 5, 5).unwrap();
        for (pos, n) in [('R', 1), ('S', 2), ('T', 3), ('W', 4), ('X', 5), ('Y', 6)] {
            let (row, col) = letter(pos);
            let (a, b) = ((n - 1) / 3, (n - 1) % 3);
            assert_eq!(m.get(ch, row, col, a, b), 1, "{pos}W{n}");
        }
        assert_eq!(m.total(), 6);
    }

    #[test]
    fn empty_stream_gives_zeros() {
        let s = EventStream::empty(7, 4, 10).unwrap();
        let m = build_count_map(&s, 5, 4, 7).unwrap();
        assert_eq!(m.total(), 0);
        assert_eq!(m.counts().len(), 2 * 20 * 35);
    }

    #[test]
    fn geometry_checks() {
        let s = EventStream::empty(7, 4, 10).unwrap();
        assert!(build_count_map(&s, 3, 7, 4).is_err());
        assert!(build_count_map(&s, 4, 4, 7).is_err());
    }

    #[test]
    fn footprint_at_corner_and_interior() {
        assert_eq!(footprint_size(0, 0, 3, 8, 8), 4);
        assert_eq!(footprint_size(4, 4, 3, 8, 8), 9);
        assert_eq!(footprint_size(7, 3, 5, 8, 8), 15);
        assert_eq!(footprint_size(0, 0, 5, 1, 1), 1);
    }
}

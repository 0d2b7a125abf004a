//! Region layout of the emulated address space.

use std::fmt;

/// Bytes per cache line.
pub const LINE_BYTES: usize = 64;
/// Bytes per word.
pub const WORD_BYTES: usize = 8;
/// Words per cache line.
pub const WORDS_PER_LINE: usize = LINE_BYTES / WORD_BYTES;

/// Index of an 8-byte word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WordAddr(pub usize);

/// Index of a 64-byte cache line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LineAddr(pub usize);

impl WordAddr {
    pub fn line(self) -> LineAddr {
        LineAddr(self.0 / WORDS_PER_LINE)
    }

    pub fn offset(self, words: usize) -> WordAddr {
        WordAddr(self.0 + words)
    }
}

impl LineAddr {
    pub fn first_word(self) -> WordAddr {
        WordAddr(self.0 * WORDS_PER_LINE)
    }
}

impl fmt::Display for WordAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "w{}", self.0)
    }
}

impl fmt::Display for LineAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

/// Persistence class of a region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RegionClass {
    /// Survives crashes through pwb/pfence/psync.
    Persistent,
    /// Never persisted; reset to zero by every crash.
    Volatile,
}

/// A contiguous, line-aligned run of cache lines.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Region {
    pub name: String,
    pub first_line: usize,
    pub lines: usize,
    pub class: RegionClass,
}

impl Region {
    pub fn base(&self) -> WordAddr {
        LineAddr(self.first_line).first_word()
    }

    pub fn word(&self, i: usize) -> WordAddr {
        debug_assert!(i < self.lines * WORDS_PER_LINE, "{}: word {i} out of region", self.name);
        self.base().offset(i)
    }

    pub fn line(&self, i: usize) -> LineAddr {
        debug_assert!(i < self.lines, "{}: line {i} out of region", self.name);
        LineAddr(self.first_line + i)
    }

    pub fn words(&self) -> usize {
        self.lines * WORDS_PER_LINE
    }

    pub fn contains(&self, line: LineAddr) -> bool {
        line.0 >= self.first_line && line.0 < self.first_line + self.lines
    }
}

/// Accumulates region declarations. Every region starts on a fresh cache line.
#[derive(Clone, Debug, Default)]
pub struct LayoutBuilder {
    regions: Vec<Region>,
    next_line: usize,
}

impl LayoutBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn region(&mut self, name: impl Into<String>, lines: usize, class: RegionClass) -> Region {
        let region = Region {
            name: name.into(),
            first_line: self.next_line,
            lines: lines.max(1),
            class,
        };
        self.next_line += region.lines;
        self.regions.push(region.clone());
        region
    }

    pub fn persistent(&mut self, name: impl Into<String>, lines: usize) -> Region {
        self.region(name, lines, RegionClass::Persistent)
    }

    pub fn volatile(&mut self, name: impl Into<String>, lines: usize) -> Region {
        self.region(name, lines, RegionClass::Volatile)
    }

    pub fn build(self) -> Layout {
        let mut volatile_lines = vec![false; self.next_line];
        for r in &self.regions {
            if r.class == RegionClass::Volatile {
                volatile_lines[r.first_line..r.first_line + r.lines].fill(true);
            }
        }
        Layout {
            regions: self.regions,
            lines: self.next_line,
            volatile_lines,
        }
    }
}

/// The finished address-space declaration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    regions: Vec<Region>,
    lines: usize,
    volatile_lines: Vec<bool>,
}

impl Layout {
    pub fn lines(&self) -> usize {
        self.lines
    }

    pub fn words(&self) -> usize {
        self.lines * WORDS_PER_LINE
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn is_volatile(&self, line: LineAddr) -> bool {
        self.volatile_lines.get(line.0).copied().unwrap_or(false)
    }

    pub fn region_of(&self, line: LineAddr) -> Option<&Region> {
        self.regions.iter().find(|r| r.contains(line))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regions_are_line_aligned_and_disjoint() {
        let mut b = LayoutBuilder::new();
        let a = b.persistent("a", 3);
        let v = b.volatile("lock", 1);
        let c = b.persistent("c", 2);
        let layout = b.build();
        assert_eq!(a.first_line, 0);
        assert_eq!(v.first_line, 3);
        assert_eq!(c.first_line, 4);
        assert_eq!(layout.lines(), 6);
        assert!(layout.is_volatile(LineAddr(3)));
        assert!(!layout.is_volatile(LineAddr(4)));
        assert_eq!(c.word(9).line(), LineAddr(5));
        assert_eq!(layout.region_of(LineAddr(1)).unwrap().name, "a");
    }

    #[test]
    fn word_to_line_mapping() {
        assert_eq!(WordAddr(0).line(), LineAddr(0));
        assert_eq!(WordAddr(7).line(), LineAddr(0));
        assert_eq!(WordAddr(8).line(), LineAddr(1));
        assert_eq!(LineAddr(2).first_word(), WordAddr(16));
    }
}

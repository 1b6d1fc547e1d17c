use serde::Serialize;

use super::SubtitleFile;

/// Silence between consecutive entries (file order).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Gap {
    /// Index of the entry the gap follows.
    pub after: usize,
    pub gap_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    /// Every overlapping pair, `(lower index, higher index)`, sorted.
    pub overlaps: Vec<(usize, usize)>,
    /// Informational: gaps at or above the configured threshold.
    pub gaps: Vec<Gap>,
    /// Indices whose start precedes the previous entry's start.
    pub order_violations: Vec<usize>,
}

impl ValidationReport {
    /// No overlaps and no order violations. Gaps are informational.
    pub fn is_clean(&self) -> bool {
        self.overlaps.is_empty() && self.order_violations.is_empty()
    }
}

/// [`validate_timeline_with`] at a 0 ms gap threshold.
pub fn validate_timeline(file: &SubtitleFile) -> ValidationReport {
    validate_timeline_with(file, 0)
}

pub fn validate_timeline_with(file: &SubtitleFile, gap_threshold_ms: u64) -> ValidationReport {
    let entries = file.entries();
    let mut report = ValidationReport::default();

    for pair in entries.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        if next.start() < prev.start() {
            report.order_violations.push(next.index());
        }
        if next.start() >= prev.end() {
            let gap_ms = next.start().saturating_sub(prev.end());
            if gap_ms >= gap_threshold_ms {
                report.gaps.push(Gap {
                    after: prev.index(),
                    gap_ms,
                });
            }
        }
    }

    // Sweep over start-sorted entries keeping the still-open ones.
    let mut by_start: Vec<_> = entries.iter().collect();
    by_start.sort_by_key(|e| (e.start(), e.end()));
    let mut open: Vec<&super::SubtitleEntry> = Vec::new();
    for e in by_start {
        open.retain(|o| o.end() > e.start());
        for o in &open {
            let (a, b) = (o.index().min(e.index()), o.index().max(e.index()));
            report.overlaps.push((a, b));
        }
        open.push(e);
    }
    report.overlaps.sort_unstable();
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::srt::{SubtitleEntry, Timestamp};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn file(spans: &[(u64, u64)]) -> SubtitleFile {
        SubtitleFile::new(
            spans
                .iter()
                .map(|&(s, e)| {
                    SubtitleEntry::new(0, Timestamp::from_millis(s), Timestamp::from_millis(e), ["x"])
                        .unwrap()
                })
                .collect(),
        )
    }

    #[test]
    fn touching_entries_report_zero_gap() {
        let r = validate_timeline(&file(&[(0, 1000), (1000, 2000)]));
        assert!(r.overlaps.is_empty());
        assert_eq!(r.gaps, vec![Gap { after: 1, gap_ms: 0 }]);
        assert!(r.is_clean());
    }

    #[test]
    fn constructed_overlap() {
        let r = validate_timeline(&file(&[(0, 1500), (1000, 2000)]));
        assert_eq!(r.overlaps, vec![(1, 2)]);
        assert!(r.gaps.is_empty());
    }

    #[test]
    fn threshold_filters_small_gaps() {
        let f = file(&[(0, 1000), (1100, 2000), (5000, 6000)]);
        assert_eq!(validate_timeline_with(&f, 500).gaps, vec![Gap { after: 2, gap_ms: 3000 }]);
    }

    #[test]
    fn overlap_spanning_several_entries() {
        let r = validate_timeline(&file(&[(0, 10_000), (1000, 2000), (3000, 4000)]));
        assert_eq!(r.overlaps, vec![(1, 2), (1, 3)]);
    }

    #[test]
    fn shuffled_file_has_violations_and_sorting_recovers() {
        let ordered = file(&[(0, 1000), (1000, 2000), (2500, 3000), (3000, 4000), (5000, 6000)]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut entries = ordered.entries().to_vec();
        while entries.windows(2).all(|w| w[0].start() <= w[1].start()) {
            entries.shuffle(&mut rng);
        }
        let shuffled = SubtitleFile::new(entries);
        let report = validate_timeline(&shuffled);

        // brute force over all adjacent pairs
        let expected: Vec<usize> = shuffled
            .entries()
            .windows(2)
            .filter(|w| w[1].start() < w[0].start())
            .map(|w| w[1].index())
            .collect();
        assert!(!report.order_violations.is_empty());
        assert_eq!(report.order_violations, expected);

        let recovered = shuffled.sorted();
        assert!(validate_timeline(&recovered).is_clean());
        assert_eq!(recovered, ordered);
    }
}

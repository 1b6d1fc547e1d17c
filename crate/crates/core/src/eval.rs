//! Corpus BLEU, a shift-free subtitle edit rate, and corpus statistics.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::srt::SubtitleFile;
use crate::text::is_cjk;

pub const BLEU_MAX_ORDER: usize = 4;
pub const BLEU_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("{hyp} hypotheses but {reference} references")]
    LengthMismatch { hyp: usize, reference: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("reference has no tokens")]
    EmptyReference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tokenizer {
    /// Split on whitespace.
    Whitespace,
    /// Every non-whitespace character is a token.
    Character,
    /// `Character` when the references contain CJK text, else `Whitespace`.
    #[default]
    Auto,
}

impl FromStr for Tokenizer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "whitespace" | "ws" => Ok(Tokenizer::Whitespace),
            "character" | "char" => Ok(Tokenizer::Character),
            "auto" => Ok(Tokenizer::Auto),
            _ => Err(format!("unknown tokenizer {s:?}")),
        }
    }
}

impl Tokenizer {
    pub fn resolve<'a, I: IntoIterator<Item = &'a str>>(self, references: I) -> Tokenizer {
        match self {
            Tokenizer::Auto if references.into_iter().any(|r| r.chars().any(is_cjk)) => Tokenizer::Character,
            Tokenizer::Auto => Tokenizer::Whitespace,
            other => other,
        }
    }

    pub fn tokenize(self, text: &str) -> Vec<String> {
        match self {
            Tokenizer::Character => text.chars().filter(|c| !c.is_whitespace()).map(String::from).collect(),
            _ => text.split_whitespace().map(String::from).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricScore {
    pub name: String,
    pub value: f64,
    pub details: BTreeMap<String, f64>,
}

impl fmt::Display for MetricScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {:.2}", self.name, self.value)
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU over `n = 1..=4`, scaled to `[0, 100]`.
///
/// Precisions use clipped counts summed over the corpus. A zero match
/// count for `n > 1` is replaced by `1e-9`; zero unigram matches score 0.
/// Orders for which the hypotheses contain no n-grams at all are left out
/// of the geometric mean. Brevity penalty is `exp(1 - r/c)` when `c <= r`.
pub fn bleu(hypotheses: &[String], references: &[String], tokenizer: Tokenizer) -> Result<MetricScore, EvalError> {
    if hypotheses.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            hyp: hypotheses.len(),
            reference: references.len(),
        });
    }
    if hypotheses.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let tok = tokenizer.resolve(references.iter().map(String::as_str));
    let mut matches = [0usize; BLEU_MAX_ORDER];
    let mut totals = [0usize; BLEU_MAX_ORDER];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hypotheses.iter().zip(references) {
        let (h, r) = (tok.tokenize(h), tok.tokenize(r));
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=BLEU_MAX_ORDER {
            let hc = ngram_counts(&h, n);
            let rc = ngram_counts(&r, n);
            totals[n - 1] += h.len().saturating_sub(n - 1);
            matches[n - 1] += hc.iter().map(|(g, c)| (*c).min(rc.get(g).copied().unwrap_or(0))).sum::<usize>();
        }
    }

    let mut details = BTreeMap::new();
    let mut log_sum = 0.0;
    let mut orders = 0usize;
    let mut zero = false;
    for n in 0..BLEU_MAX_ORDER {
        details.insert(format!("matches_{}", n + 1), matches[n] as f64);
        details.insert(format!("totals_{}", n + 1), totals[n] as f64);
        if totals[n] == 0 {
            if n == 0 {
                zero = true;
            }
            continue;
        }
        let p = if matches[n] > 0 {
            matches[n] as f64 / totals[n] as f64
        } else if n == 0 {
            zero = true;
            0.0
        } else {
            BLEU_EPSILON / totals[n] as f64
        };
        details.insert(format!("precision_{}", n + 1), 100.0 * p);
        if p > 0.0 {
            log_sum += p.ln();
        }
        orders += 1;
    }
    let bp = if hyp_len == 0 {
        0.0
    } else if hyp_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    details.insert("brevity_penalty".into(), bp);
    details.insert("hyp_len".into(), hyp_len as f64);
    details.insert("ref_len".into(), ref_len as f64);
    details.insert("effective_order".into(), orders as f64);
    details.insert("epsilon".into(), BLEU_EPSILON);
    details.insert("character_tokens".into(), f64::from(u8::from(tok == Tokenizer::Character)));

    let value = if zero || orders == 0 {
        0.0
    } else {
        100.0 * bp * (log_sum / orders as f64).exp()
    };
    Ok(MetricScore {
        name: "BLEU".into(),
        value,
        details,
    })
}

const EOL: &str = "<eol>";
const EOB: &str = "<eob>";

/// Tokens of a subtitle file, each tagged with its block number. Lines of
/// a block are separated by `<eol>`; every block ends with `<eob>`.
fn block_tokens(file: &SubtitleFile, tok: Tokenizer) -> Vec<(String, usize)> {
    let mut out = Vec::new();
    for (b, e) in file.entries().iter().enumerate() {
        for (i, line) in e.lines().iter().enumerate() {
            if i > 0 {
                out.push((EOL.to_string(), b));
            }
            out.extend(tok.tokenize(line).into_iter().map(|t| (t, b)));
        }
        out.push((EOB.to_string(), b));
    }
    out
}

/// Shift-free subtitle edit rate ("SubER-lite"), ×100.
///
/// Both files become token streams with `<eol>`/`<eob>` break tokens. A
/// hypothesis token may match or substitute a reference token only when
/// their blocks overlap in time; otherwise it costs a deletion plus an
/// insertion. Score = edit distance / reference token count. Unlike
/// published SubER, no block shifts are searched.
pub fn suber_lite(hyp: &SubtitleFile, reference: &SubtitleFile, tokenizer: Tokenizer) -> Result<MetricScore, EvalError> {
    let tok = tokenizer.resolve(reference.entries().iter().map(|e| e.text()).collect::<Vec<_>>().iter().map(String::as_str));
    let h = block_tokens(hyp, tok);
    let r = block_tokens(reference, tok);
    if r.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let overlaps: Vec<Vec<bool>> = hyp
        .entries()
        .iter()
        .map(|he| {
            reference
                .entries()
                .iter()
                .map(|re| he.start() < re.end() && re.start() < he.end())
                .collect()
        })
        .collect();

    // rolling DP over reference positions
    let m = r.len();
    let mut prev: Vec<u32> = (0..=m as u32).collect();
    let mut cur = vec![0u32; m + 1];
    for (i, (ht, hb)) in h.iter().enumerate() {
        cur[0] = i as u32 + 1;
        for j in 1..=m {
            let (rt, rb) = &r[j - 1];
            let mut best = prev[j].min(cur[j - 1]) + 1;
            if overlaps[*hb][*rb] {
                best = best.min(prev[j - 1] + u32::from(ht != rt));
            }
            cur[j] = best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let edits = prev[m] as f64;

    let mut details = BTreeMap::new();
    details.insert("edits".into(), edits);
    details.insert("ref_tokens".into(), m as f64);
    details.insert("hyp_tokens".into(), h.len() as f64);
    details.insert("shifts".into(), 0.0);
    Ok(MetricScore {
        name: "SubER-lite".into(),
        value: 100.0 * edits / m as f64,
        details,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub video_count: usize,
    pub total_duration_s: f64,
    pub avg_duration_s: f64,
    pub total_lines: usize,
    pub avg_lines: f64,
    pub total_words: usize,
    pub avg_words: f64,
    pub total_chars: usize,
    pub avg_chars: f64,
}

/// Subtitle entries count as lines; words are whitespace-separated;
/// characters exclude whitespace.
pub fn corpus_stats(files: &[(SubtitleFile, f64)]) -> Result<CorpusStats, EvalError> {
    if files.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    let n = files.len();
    let total_duration_s: f64 = files.iter().map(|(_, d)| d).sum();
    let total_lines: usize = files.iter().map(|(f, _)| f.len()).sum();
    let (mut total_words, mut total_chars) = (0, 0);
    for (f, _) in files {
        for e in f.entries() {
            for l in e.lines() {
                total_words += l.split_whitespace().count();
                total_chars += l.chars().filter(|c| !c.is_whitespace()).count();
            }
        }
    }
    let avg = |t: f64| t / n as f64;
    Ok(CorpusStats {
        video_count: n,
        total_duration_s,
        avg_duration_s: avg(total_duration_s),
        total_lines,
        avg_lines: avg(total_lines as f64),
        total_words,
        avg_words: avg(total_words as f64),
        total_chars,
        avg_chars: avg(total_chars as f64),
    })
}

/// A published figure that our computation does not reproduce.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discrepancy {
    pub field: String,
    pub computed: f64,
    pub reported: f64,
    pub note: String,
}

impl CorpusStats {
    pub fn field(&self, name: &str) -> Option<f64> {
        Some(match name {
            "video_count" => self.video_count as f64,
            "total_duration_s" => self.total_duration_s,
            "avg_duration_s" => self.avg_duration_s,
            "total_lines" => self.total_lines as f64,
            "avg_lines" => self.avg_lines,
            "total_words" => self.total_words as f64,
            "avg_words" => self.avg_words,
            "total_chars" => self.total_chars as f64,
            "avg_chars" => self.avg_chars,
            _ => return None,
        })
    }

    /// Compares against externally reported values; differences beyond
    /// `rel_tol` (relative) become discrepancy notes.
    pub fn compare(&self, reported: &[(&str, f64)], rel_tol: f64) -> Vec<Discrepancy> {
        reported
            .iter()
            .filter_map(|&(field, rep)| {
                let ours = self.field(field)?;
                let rel = if rep == 0.0 { ours.abs() } else { ((ours - rep) / rep).abs() };
                (rel > rel_tol).then(|| Discrepancy {
                    field: field.to_string(),
                    computed: ours,
                    reported: rep,
                    note: format!(
                        "{field}: computed {ours:.2} from totals, reported {rep}; the reported figure is not totals / count"
                    ),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::srt::{SubtitleEntry, Timestamp};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn file(blocks: &[(u64, u64, &[&str])]) -> SubtitleFile {
        SubtitleFile::new(
            blocks
                .iter()
                .map(|(a, b, lines)| {
                    SubtitleEntry::new(0, Timestamp::from_millis(*a), Timestamp::from_millis(*b), lines.iter().copied())
                        .unwrap()
                })
                .collect(),
        )
    }

    #[test]
    fn bleu_identity_and_disjoint() {
        let refs = s(&["the cat sat on the mat", "a b", "x"]);
        assert_eq!(bleu(&refs, &refs, Tokenizer::Whitespace).unwrap().value, 100.0);
        let hyp = s(&["q r s t u v", "w y", "z"]);
        assert_eq!(bleu(&hyp, &refs, Tokenizer::Whitespace).unwrap().value, 0.0);
    }

    #[test]
    fn bleu_hand_computed() {
        // clipped 1-gram 2/4, 2-gram 1/3, 3-gram 0/2, 4-gram 0/1, BP = 1
        let got = bleu(&s(&["the the the cat"]), &s(&["the cat sat down"]), Tokenizer::Whitespace).unwrap();
        let want = 100.0 * ((0.5f64.ln() + (1.0f64 / 3.0).ln() + (1e-9f64 / 2.0).ln() + 1e-9f64.ln()) / 4.0).exp();
        assert!((got.value - want).abs() < 1e-12);
        assert_eq!(got.details["matches_1"], 2.0);
        assert_eq!(got.details["brevity_penalty"], 1.0);
    }

    #[test]
    fn bleu_errors() {
        assert_eq!(
            bleu(&s(&["a"]), &s(&[]), Tokenizer::Whitespace),
            Err(EvalError::LengthMismatch { hyp: 1, reference: 0 })
        );
        assert_eq!(bleu(&[], &[], Tokenizer::Whitespace), Err(EvalError::EmptyCorpus));
    }

    #[test]
    fn auto_tokenizer_uses_characters_for_cjk() {
        let r = bleu(&s(&["建造飞龙塔"]), &s(&["建造飞龙塔"]), Tokenizer::Auto).unwrap();
        assert_eq!(r.details["character_tokens"], 1.0);
        assert_eq!(r.details["hyp_len"], 5.0);
    }

    #[test]
    fn brevity_penalty_applies() {
        let r = bleu(&s(&["a b c d"]), &s(&["a b c d e f g h"]), Tokenizer::Whitespace).unwrap();
        assert!((r.details["brevity_penalty"] - (-1.0f64).exp()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn bleu_order_free(pairs in prop::collection::vec(("[a-d]( [a-d]){0,6}", "[a-d]( [a-d]){0,6}"), 1..8), seed in any::<u64>()) {
            let (h, r): (Vec<String>, Vec<String>) = pairs.iter().cloned().unzip();
            let mut idx: Vec<usize> = (0..h.len()).collect();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for i in (1..idx.len()).rev() {
                idx.swap(i, rng.gen_range(0..=i));
            }
            let hp: Vec<String> = idx.iter().map(|&i| h[i].clone()).collect();
            let rp: Vec<String> = idx.iter().map(|&i| r[i].clone()).collect();
            let a = bleu(&h, &r, Tokenizer::Whitespace).unwrap().value;
            let b = bleu(&hp, &rp, Tokenizer::Whitespace).unwrap().value;
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert!((0.0..=100.0).contains(&a));
        }
    }

    #[test]
    fn bleu_non_increasing_under_reference_corruption() {
        for seed in 0..20u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let vocab = ["a", "b", "c", "d", "e", "f"];
            let refs: Vec<Vec<String>> = (0..5)
                .map(|_| (0..rng.gen_range(4..10)).map(|_| vocab[rng.gen_range(0..6)].to_string()).collect())
                .collect();
            let hyp: Vec<String> = refs.iter().map(|r| r.join(" ")).collect();
            let mut cur = refs.clone();
            let mut last = 100.0;
            for k in 0..30 {
                let i = rng.gen_range(0..cur.len());
                let j = rng.gen_range(0..cur[i].len());
                cur[i][j] = format!("novel{k}");
                let r: Vec<String> = cur.iter().map(|r| r.join(" ")).collect();
                let v = bleu(&hyp, &r, Tokenizer::Whitespace).unwrap().value;
                assert!(v <= last + 1e-9, "seed {seed} step {k}: {v} > {last}");
                last = v;
            }
        }
    }

    #[test]
    fn suber_identity_empty_and_substitution() {
        let r = file(&[(0, 1000, &["a b c"])]);
        assert_eq!(suber_lite(&r, &r, Tokenizer::Whitespace).unwrap().value, 0.0);
        assert_eq!(suber_lite(&SubtitleFile::default(), &r, Tokenizer::Whitespace).unwrap().value, 100.0);
        let h = file(&[(0, 1000, &["a x c"])]);
        let score = suber_lite(&h, &r, Tokenizer::Whitespace).unwrap();
        assert_eq!(score.value, 25.0);
        assert_eq!(score.details["ref_tokens"], 4.0);
    }

    #[test]
    fn suber_line_breaks_count() {
        let r = file(&[(0, 1000, &["a b", "c"])]);
        let h = file(&[(0, 1000, &["a b c"])]);
        // ref: a b <eol> c <eob>; hyp: a b c <eob> -> one deletion
        assert_eq!(suber_lite(&h, &r, Tokenizer::Whitespace).unwrap().value, 20.0);
    }

    #[test]
    fn suber_requires_time_overlap() {
        let r = file(&[(0, 1000, &["a"])]);
        let h = file(&[(5000, 6000, &["a"])]);
        // no overlap: 2 deletions + 2 insertions over 2 ref tokens
        assert_eq!(suber_lite(&h, &r, Tokenizer::Whitespace).unwrap().value, 200.0);
    }

    #[test]
    fn suber_empty_reference_rejected() {
        let h = file(&[(0, 1000, &["a"])]);
        assert_eq!(
            suber_lite(&h, &SubtitleFile::default(), Tokenizer::Whitespace),
            Err(EvalError::EmptyReference)
        );
    }

    #[test]
    fn suber_shift_invariant() {
        let r = file(&[(6000, 8000, &["a b"]), (8000, 9000, &["c"]), (9500, 12000, &["d e", "f"])]);
        let h = file(&[(6000, 8500, &["a b c"]), (9000, 12000, &["d x", "f g"])]);
        let base = suber_lite(&h, &r, Tokenizer::Whitespace).unwrap().value;
        for delta in [-5000i64, 5000] {
            let v = suber_lite(&h.shifted(delta), &r.shifted(delta), Tokenizer::Whitespace).unwrap().value;
            assert_eq!(v, base);
        }
    }

    #[test]
    fn stats_small_examples() {
        let ten = SubtitleFile::new((0..10).map(|i| {
            SubtitleEntry::new(0, Timestamp::from_secs(i), Timestamp::from_secs(i + 1), ["w"]).unwrap()
        }).collect());
        let st = corpus_stats(&[(ten, 60.0)]).unwrap();
        assert_eq!((st.avg_lines, st.avg_duration_s), (10.0, 60.0));

        let words = |n: usize| file(&[(0, 1000, &[vec!["w"; n].join(" ").as_str()])]);
        let st = corpus_stats(&[(words(100), 1.0), (words(200), 1.0)]).unwrap();
        assert_eq!((st.total_words, st.avg_words), (300, 150.0));
        assert_eq!(corpus_stats(&[]), Err(EvalError::EmptyCorpus));
    }

    #[test]
    fn discrepancies_are_reported() {
        let st = CorpusStats {
            video_count: 50,
            total_duration_s: 0.0,
            avg_duration_s: 0.0,
            total_lines: 16_968,
            avg_lines: 339.36,
            total_words: 0,
            avg_words: 0.0,
            total_chars: 0,
            avg_chars: 0.0,
        };
        let d = st.compare(&[("total_lines", 16_968.0), ("avg_lines", 346.3)], 1e-3);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].field, "avg_lines");
    }
}

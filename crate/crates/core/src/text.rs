//! Case-insensitive whole-word term matching shared by the knowledge base,
//! entity extraction, and keyword injection.
//!
//! A "word character" is alphanumeric or `_`, excluding scripts written
//! without spaces (CJK ideographs, kana, hangul). A match must not be glued
//! to a word character on either side where the term itself starts or ends
//! with one, so `Spire` matches in `a Spire.` and `Spire塔` but not in
//! `Spires`.

/// True for characters of scripts that do not separate words with spaces.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF        // hiragana, katakana
        | 0x3400..=0x4DBF      // CJK ext A
        | 0x4E00..=0x9FFF      // CJK unified
        | 0xAC00..=0xD7AF      // hangul syllables
        | 0xF900..=0xFAFF      // CJK compatibility
        | 0x20000..=0x2FA1F    // CJK ext B..
    )
}

fn is_word_char(c: char) -> bool {
    (c.is_alphanumeric() || c == '_') && !is_cjk(c)
}

struct Folded {
    chars: Vec<char>,
    folded: Vec<char>,
    // folded position -> index into `chars`
    origin: Vec<usize>,
}

fn fold(text: &str) -> Folded {
    let chars: Vec<char> = text.chars().collect();
    let mut folded = Vec::with_capacity(chars.len());
    let mut origin = Vec::with_capacity(chars.len());
    for (i, c) in chars.iter().enumerate() {
        for l in c.to_lowercase() {
            folded.push(l);
            origin.push(i);
        }
    }
    Folded {
        chars,
        folded,
        origin,
    }
}

/// Character ranges (`start..end` over `text.chars()`) of every whole-word,
/// case-insensitive occurrence of `term`. Overlapping occurrences are not
/// reported.
pub fn find_term(text: &str, term: &str) -> Vec<std::ops::Range<usize>> {
    let term = term.trim();
    if term.is_empty() {
        return Vec::new();
    }
    let hay = fold(text);
    let needle: Vec<char> = term.chars().flat_map(char::to_lowercase).collect();
    let first = term.chars().next().unwrap();
    let last = term.chars().last().unwrap();
    let m = needle.len();
    let mut hits = Vec::new();
    let mut s = 0;
    while s + m <= hay.folded.len() {
        let at_char_start = s == 0 || hay.origin[s] != hay.origin[s - 1];
        let e = s + m;
        let at_char_end = e == hay.folded.len() || hay.origin[e] != hay.origin[e - 1];
        if at_char_start && at_char_end && hay.folded[s..e] == needle[..] {
            let cs = hay.origin[s];
            let ce = hay.origin[e - 1] + 1;
            let left_ok = cs == 0 || !(is_word_char(first) && is_word_char(hay.chars[cs - 1]));
            let right_ok =
                ce == hay.chars.len() || !(is_word_char(last) && is_word_char(hay.chars[ce]));
            if left_ok && right_ok {
                hits.push(cs..ce);
                s = e;
                continue;
            }
        }
        s += 1;
    }
    hits
}

pub fn contains_term(text: &str, term: &str) -> bool {
    !find_term(text, term).is_empty()
}

/// Removes duplicates while keeping first occurrences in order.
pub fn dedup_preserving_order<I, S>(items: I) -> Vec<String>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for item in items {
        let item = item.into();
        if seen.insert(item.clone()) {
            out.push(item);
        }
    }
    out
}

/// Truncates to at most `max_chars` characters, appending `…` when cut.
pub fn truncate_chars(text: &str, max_chars: usize) -> String {
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    let mut out: String = text.chars().take(max_chars.saturating_sub(1)).collect();
    out.push('…');
    out
}

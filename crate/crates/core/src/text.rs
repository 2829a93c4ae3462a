//! Case folding, tokenization and sentence boundaries shared by every stage.

/// Full Unicode case folding (not ASCII lowercasing).
pub fn fold(s: &str) -> String {
    caseless::default_case_fold_str(s)
}

/// Case-folded word tokens: maximal runs of alphanumeric characters.
pub fn tokenize(s: &str) -> Vec<String> {
    fold(s)
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Case-folded characters of `s`, whitespace dropped. Used by the character-level mention encoder.
pub fn char_tokens(s: &str) -> Vec<String> {
    fold(s)
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(String::from)
        .collect()
}

/// Byte offset of the `char_idx`-th character of `s` (or `s.len()` past the end).
pub fn byte_offset(s: &str, char_idx: usize) -> usize {
    s.char_indices()
        .nth(char_idx)
        .map(|(b, _)| b)
        .unwrap_or(s.len())
}

/// Slice `s` by character offsets `[start, end)`.
pub fn char_slice(s: &str, start: usize, end: usize) -> &str {
    let b0 = byte_offset(s, start);
    let b1 = byte_offset(s, end);
    &s[b0..b1]
}

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '\n')
}

/// Character range of the sentence that contains `[start, end)`.
///
/// A sentence ends at `.`, `!`, `?` followed by whitespace (or end of text) and at newlines.
/// Terminators inside any span listed in `protected` (e.g. "United F.C.") are ignored.
pub fn sentence_bounds(
    text: &str,
    start: usize,
    end: usize,
    protected: &[(usize, usize)],
) -> (usize, usize) {
    let chars: Vec<char> = text.chars().collect();
    let inside = |i: usize| protected.iter().any(|&(s, e)| i >= s && i < e);
    let is_boundary = |i: usize| {
        is_terminal(chars[i])
            && !inside(i)
            && (chars[i] == '\n' || chars.get(i + 1).is_none_or(|c| c.is_whitespace()))
    };
    let mut left = start;
    while left > 0 && !is_boundary(left - 1) {
        left -= 1;
    }
    let mut right = end;
    while right < chars.len() && !is_boundary(right) {
        right += 1;
    }
    (left, right)
}

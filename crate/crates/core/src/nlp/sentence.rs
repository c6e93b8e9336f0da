//! Sentence segmentation.

/// Characters that may close a sentence after the terminator itself.
const CLOSERS: &[char] = &['"', '\'', '\u{201D}', '\u{2019}', '»', ')', ']', '}'];

fn is_terminator(c: char) -> bool {
    c == '.' || c == '!' || c == '?'
}

/// Split text into sentences.
///
/// A boundary falls after `.`, `!` or `?` (optionally followed by closing
/// quotes/brackets) when the next non-space character is an uppercase letter
/// or a digit, or at end of text. A period immediately after a listed
/// abbreviation is not a boundary. Segments are trimmed; empty text yields
/// an empty list.
pub fn split_sentences(text: &str, abbreviations: &[String]) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let n = chars.len();
    let mut sentences = Vec::new();
    let mut start = 0usize; // byte offset of the current segment start

    let mut i = 0usize;
    while i < n {
        let (_, c) = chars[i];
        if !is_terminator(c) {
            i += 1;
            continue;
        }
        if c == '.' && ends_with_abbreviation(&chars, i, abbreviations) {
            i += 1;
            continue;
        }
        // Absorb closing punctuation after the terminator.
        let mut j = i + 1;
        while j < n && CLOSERS.contains(&chars[j].1) {
            j += 1;
        }
        let cut = if j < n { chars[j].0 } else { text.len() };
        let boundary = if j >= n {
            true
        } else if chars[j].1.is_whitespace() {
            let mut k = j;
            while k < n && chars[k].1.is_whitespace() {
                k += 1;
            }
            k >= n || chars[k].1.is_uppercase() || chars[k].1.is_numeric()
        } else {
            false
        };
        if boundary {
            let segment = text[start..cut].trim();
            if !segment.is_empty() {
                sentences.push(segment.to_string());
            }
            start = cut;
        }
        i = j.max(i + 1);
    }

    let tail = text[start..].trim();
    if !tail.is_empty() {
        sentences.push(tail.to_string());
    }
    sentences
}

/// True when the letters immediately before position `dot` spell a listed
/// abbreviation.
fn ends_with_abbreviation(chars: &[(usize, char)], dot: usize, abbreviations: &[String]) -> bool {
    if abbreviations.is_empty() {
        return false;
    }
    let mut word = String::new();
    let mut k = dot;
    while k > 0 && chars[k - 1].1.is_alphabetic() {
        word.insert(0, chars[k - 1].1);
        k -= 1;
    }
    !word.is_empty() && abbreviations.iter().any(|a| a == &word)
}

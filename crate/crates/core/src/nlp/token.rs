//! Word segmentation.

use crate::envelope::Token;

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn is_joiner(c: char) -> bool {
    c == '\'' || c == '\u{2019}' || c == '-'
}

/// Split text into tokens: maximal runs of letters/digits, allowing a single
/// internal apostrophe or hyphen between letters. Punctuation is discarded.
/// Token surfaces occur as substrings of the input, in input order.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();

    for i in 0..chars.len() {
        let c = chars[i];
        let joins = is_joiner(c)
            && !current.is_empty()
            && i > 0
            && chars[i - 1].is_alphabetic()
            && i + 1 < chars.len()
            && chars[i + 1].is_alphabetic();
        if is_word_char(c) || joins {
            current.push(c);
        } else if !current.is_empty() {
            tokens.push(Token::new(std::mem::take(&mut current)));
        }
    }
    if !current.is_empty() {
        tokens.push(Token::new(current));
    }
    tokens
}

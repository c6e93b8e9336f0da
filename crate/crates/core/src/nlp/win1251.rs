//! UTF-8 to WIN-1251 conversion through the full 256-entry code chart.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::nlp::NlpError;

/// Byte emitted for unmappable code points in lossy mode ('?').
pub const REPLACEMENT_BYTE: u8 = 0x3F;

/// The WIN-1251 code chart: byte value to Unicode code point. Bytes
/// 0x00-0x7F are ASCII. Byte 0x98, unassigned in the classic chart, maps to
/// U+0098 as in the web-platform table, which keeps the mapping total and
/// bijective.
pub const UNICODE_FROM_WIN1251: [char; 256] = [
    '\u{0000}', '\u{0001}', '\u{0002}', '\u{0003}', '\u{0004}', '\u{0005}', '\u{0006}', '\u{0007}', // 0x00
    '\u{0008}', '\u{0009}', '\u{000A}', '\u{000B}', '\u{000C}', '\u{000D}', '\u{000E}', '\u{000F}', // 0x08
    '\u{0010}', '\u{0011}', '\u{0012}', '\u{0013}', '\u{0014}', '\u{0015}', '\u{0016}', '\u{0017}', // 0x10
    '\u{0018}', '\u{0019}', '\u{001A}', '\u{001B}', '\u{001C}', '\u{001D}', '\u{001E}', '\u{001F}', // 0x18
    '\u{0020}', '\u{0021}', '\u{0022}', '\u{0023}', '\u{0024}', '\u{0025}', '\u{0026}', '\u{0027}', // 0x20
    '\u{0028}', '\u{0029}', '\u{002A}', '\u{002B}', '\u{002C}', '\u{002D}', '\u{002E}', '\u{002F}', // 0x28
    '\u{0030}', '\u{0031}', '\u{0032}', '\u{0033}', '\u{0034}', '\u{0035}', '\u{0036}', '\u{0037}', // 0x30
    '\u{0038}', '\u{0039}', '\u{003A}', '\u{003B}', '\u{003C}', '\u{003D}', '\u{003E}', '\u{003F}', // 0x38
    '\u{0040}', '\u{0041}', '\u{0042}', '\u{0043}', '\u{0044}', '\u{0045}', '\u{0046}', '\u{0047}', // 0x40
    '\u{0048}', '\u{0049}', '\u{004A}', '\u{004B}', '\u{004C}', '\u{004D}', '\u{004E}', '\u{004F}', // 0x48
    '\u{0050}', '\u{0051}', '\u{0052}', '\u{0053}', '\u{0054}', '\u{0055}', '\u{0056}', '\u{0057}', // 0x50
    '\u{0058}', '\u{0059}', '\u{005A}', '\u{005B}', '\u{005C}', '\u{005D}', '\u{005E}', '\u{005F}', // 0x58
    '\u{0060}', '\u{0061}', '\u{0062}', '\u{0063}', '\u{0064}', '\u{0065}', '\u{0066}', '\u{0067}', // 0x60
    '\u{0068}', '\u{0069}', '\u{006A}', '\u{006B}', '\u{006C}', '\u{006D}', '\u{006E}', '\u{006F}', // 0x68
    '\u{0070}', '\u{0071}', '\u{0072}', '\u{0073}', '\u{0074}', '\u{0075}', '\u{0076}', '\u{0077}', // 0x70
    '\u{0078}', '\u{0079}', '\u{007A}', '\u{007B}', '\u{007C}', '\u{007D}', '\u{007E}', '\u{007F}', // 0x78
    '\u{0402}', '\u{0403}', '\u{201A}', '\u{0453}', '\u{201E}', '\u{2026}', '\u{2020}', '\u{2021}', // 0x80
    '\u{20AC}', '\u{2030}', '\u{0409}', '\u{2039}', '\u{040A}', '\u{040C}', '\u{040B}', '\u{040F}', // 0x88
    '\u{0452}', '\u{2018}', '\u{2019}', '\u{201C}', '\u{201D}', '\u{2022}', '\u{2013}', '\u{2014}', // 0x90
    '\u{0098}', '\u{2122}', '\u{0459}', '\u{203A}', '\u{045A}', '\u{045C}', '\u{045B}', '\u{045F}', // 0x98
    '\u{00A0}', '\u{040E}', '\u{045E}', '\u{0408}', '\u{00A4}', '\u{0490}', '\u{00A6}', '\u{00A7}', // 0xA0
    '\u{0401}', '\u{00A9}', '\u{0404}', '\u{00AB}', '\u{00AC}', '\u{00AD}', '\u{00AE}', '\u{0407}', // 0xA8
    '\u{00B0}', '\u{00B1}', '\u{0406}', '\u{0456}', '\u{0491}', '\u{00B5}', '\u{00B6}', '\u{00B7}', // 0xB0
    '\u{0451}', '\u{2116}', '\u{0454}', '\u{00BB}', '\u{0458}', '\u{0405}', '\u{0455}', '\u{0457}', // 0xB8
    '\u{0410}', '\u{0411}', '\u{0412}', '\u{0413}', '\u{0414}', '\u{0415}', '\u{0416}', '\u{0417}', // 0xC0
    '\u{0418}', '\u{0419}', '\u{041A}', '\u{041B}', '\u{041C}', '\u{041D}', '\u{041E}', '\u{041F}', // 0xC8
    '\u{0420}', '\u{0421}', '\u{0422}', '\u{0423}', '\u{0424}', '\u{0425}', '\u{0426}', '\u{0427}', // 0xD0
    '\u{0428}', '\u{0429}', '\u{042A}', '\u{042B}', '\u{042C}', '\u{042D}', '\u{042E}', '\u{042F}', // 0xD8
    '\u{0430}', '\u{0431}', '\u{0432}', '\u{0433}', '\u{0434}', '\u{0435}', '\u{0436}', '\u{0437}', // 0xE0
    '\u{0438}', '\u{0439}', '\u{043A}', '\u{043B}', '\u{043C}', '\u{043D}', '\u{043E}', '\u{043F}', // 0xE8
    '\u{0440}', '\u{0441}', '\u{0442}', '\u{0443}', '\u{0444}', '\u{0445}', '\u{0446}', '\u{0447}', // 0xF0
    '\u{0448}', '\u{0449}', '\u{044A}', '\u{044B}', '\u{044C}', '\u{044D}', '\u{044E}', '\u{044F}', // 0xF8
];

fn encode_table() -> &'static HashMap<char, u8> {
    static TABLE: OnceLock<HashMap<char, u8>> = OnceLock::new();
    TABLE.get_or_init(|| {
        UNICODE_FROM_WIN1251
            .iter()
            .enumerate()
            .map(|(byte, ch)| (*ch, byte as u8))
            .collect()
    })
}

/// How to treat code points outside the WIN-1251 repertoire.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConversionMode {
    /// An unmappable code point is an error.
    Strict,
    /// An unmappable code point becomes `?` (0x3F).
    Lossy,
}

/// Encode text as WIN-1251 bytes. The offset in the strict-mode error is
/// the character index of the offending code point.
pub fn to_win1251(text: &str, mode: ConversionMode) -> Result<Vec<u8>, NlpError> {
    let table = encode_table();
    let mut out = Vec::with_capacity(text.len());
    for (offset, c) in text.chars().enumerate() {
        match table.get(&c) {
            Some(byte) => out.push(*byte),
            None => match mode {
                ConversionMode::Strict => {
                    return Err(NlpError::Unmappable {
                        codepoint: c as u32,
                        offset,
                    })
                }
                ConversionMode::Lossy => out.push(REPLACEMENT_BYTE),
            },
        }
    }
    Ok(out)
}

/// Decode WIN-1251 bytes to a string. Total: every byte value has a mapping.
pub fn from_win1251(bytes: &[u8]) -> String {
    bytes
        .iter()
        .map(|b| UNICODE_FROM_WIN1251[*b as usize])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_maps_to_itself() {
        assert_eq!(to_win1251("A", ConversionMode::Strict).unwrap(), vec![0x41]);
        let ascii: String = (0u8..0x80).map(|b| b as char).collect();
        let bytes = to_win1251(&ascii, ConversionMode::Strict).unwrap();
        assert_eq!(bytes, (0u8..0x80).collect::<Vec<u8>>());
    }

    #[test]
    fn chart_spot_checks() {
        // Values from the published code chart.
        let strict = |s: &str| to_win1251(s, ConversionMode::Strict).unwrap();
        assert_eq!(strict("\u{0410}"), vec![0xC0]); // А
        assert_eq!(strict("\u{0402}"), vec![0x80]); // Ђ
        assert_eq!(strict("\u{2116}"), vec![0xB9]); // №
        assert_eq!(strict("\u{0491}"), vec![0xB4]); // ґ
        assert_eq!(strict("\u{0457}"), vec![0xBF]); // ї
        assert_eq!(strict("\u{044F}"), vec![0xFF]); // я
        assert_eq!(strict("\u{20AC}"), vec![0x88]); // €
    }

    #[test]
    fn round_trip_over_all_256_entries() {
        let all: Vec<u8> = (0u8..=255).collect();
        let decoded = from_win1251(&all);
        let encoded = to_win1251(&decoded, ConversionMode::Strict).unwrap();
        assert_eq!(encoded, all);
        // And in the other direction: every chart code point survives.
        let text: String = UNICODE_FROM_WIN1251.iter().collect();
        let bytes = to_win1251(&text, ConversionMode::Strict).unwrap();
        assert_eq!(from_win1251(&bytes), text);
    }

    #[test]
    fn strict_mode_rejects_unmappable() {
        match to_win1251("\u{4E2D}", ConversionMode::Strict) {
            Err(NlpError::Unmappable { codepoint, offset }) => {
                assert_eq!(codepoint, 0x4E2D);
                assert_eq!(offset, 0);
            }
            other => panic!("expected unmappable, got {other:?}"),
        }
        // Offset counts characters, not bytes.
        match to_win1251("ab\u{4E2D}", ConversionMode::Strict) {
            Err(NlpError::Unmappable { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("expected unmappable, got {other:?}"),
        }
    }

    #[test]
    fn lossy_mode_substitutes_question_mark() {
        let bytes = to_win1251("a\u{4E2D}b", ConversionMode::Lossy).unwrap();
        assert_eq!(bytes, vec![b'a', REPLACEMENT_BYTE, b'b']);
    }

    #[test]
    fn strict_never_emits_replacement_for_mappable() {
        // '?' itself is mappable and must encode as itself, not as a
        // substitution artifact.
        let text: String = UNICODE_FROM_WIN1251.iter().collect();
        let bytes = to_win1251(&text, ConversionMode::Strict).unwrap();
        let question_marks = bytes.iter().filter(|b| **b == REPLACEMENT_BYTE).count();
        assert_eq!(question_marks, 1);
    }
}

//! Turning raw line-oriented LLM output into clean question lists.
//!
//! Generation templates ask for one question per line with no numbering,
//! but models add enumeration markers, quotes, and blank lines anyway.
//! The parser strips that noise defensively.

use regex::Regex;
use std::sync::OnceLock;

use super::GatewayError;

/// Leading enumeration: an optional bullet (`-`, `*`, `•`) or an integer
/// followed by `.`, `)`, or `、`, then whitespace.
fn enumeration_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:[-*•]|\d{1,4}[.)、])\s+").expect("valid regex"))
}

/// Strips one layer of line noise: enumeration marker, then one matched
/// pair of surrounding quotes, then whitespace.
fn clean_line(line: &str) -> String {
    let stripped = enumeration_re().replace(line, "");
    let trimmed = stripped.trim();
    let unquoted = strip_matched_quotes(trimmed);
    unquoted.trim().to_string()
}

fn strip_matched_quotes(s: &str) -> &str {
    const PAIRS: [(char, char); 4] = [('"', '"'), ('\'', '\''), ('“', '”'), ('‘', '’')];
    let mut chars = s.chars();
    let (Some(first), Some(last)) = (chars.next(), s.chars().next_back()) else {
        return s;
    };
    if s.chars().count() < 2 {
        return s;
    }
    for (open, close) in PAIRS {
        if first == open && last == close {
            return &s[open.len_utf8()..s.len() - close.len_utf8()];
        }
    }
    s
}

/// Splits raw completion text into clean, nonempty question lines.
///
/// Markdown fences are dropped, enumeration markers and surrounding quotes
/// are stripped, and blank lines are skipped. If the resulting count
/// deviates from `expected` by more than `tolerance`, the whole reply is
/// rejected so a bad generation never silently shrinks the corpus.
pub fn parse_lines(raw: &str, expected: usize, tolerance: usize) -> Result<Vec<String>, GatewayError> {
    let mut out = Vec::new();
    for line in raw.lines() {
        let trimmed = line.trim();
        if trimmed.starts_with("```") {
            continue;
        }
        let cleaned = clean_line(line);
        if !cleaned.is_empty() {
            out.push(cleaned);
        }
    }
    let got = out.len();
    if got.abs_diff(expected) > tolerance {
        return Err(GatewayError::CountMismatch { got, expected });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn numbered_lines_stripped() {
        let got = parse_lines("1. Question content\n2. Question content", 2, 0).unwrap();
        assert_eq!(got, vec!["Question content", "Question content"]);
    }

    #[test]
    fn blank_lines_dropped() {
        let got = parse_lines("A\n\nB\nC", 3, 0).unwrap();
        assert_eq!(got, vec!["A", "B", "C"]);
    }

    #[test]
    fn count_mismatch_reported() {
        let raw = (1..=7).map(|i| format!("line {i}")).collect::<Vec<_>>().join("\n");
        let err = parse_lines(&raw, 10, 1).unwrap_err();
        match err {
            GatewayError::CountMismatch { got, expected } => {
                assert_eq!((got, expected), (7, 10));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn tolerance_allows_slack() {
        let raw = "a\nb\nc\nd\ne\nf\ng\nh\ni";
        assert!(parse_lines(raw, 10, 1).is_ok());
        assert!(parse_lines(raw, 10, 0).is_err());
    }

    #[test]
    fn bullets_quotes_and_fences() {
        let raw = "```\n- \"What is Zhang San's salary?\"\n* 'Second one'\n• Third one\n```";
        let got = parse_lines(raw, 3, 0).unwrap();
        assert_eq!(
            got,
            vec!["What is Zhang San's salary?", "Second one", "Third one"]
        );
    }

    #[test]
    fn cjk_enumeration_marker() {
        let got = parse_lines("1、 员工张三的工资是多少", 1, 0).unwrap();
        assert_eq!(got, vec!["员工张三的工资是多少"]);
    }

    #[test]
    fn numbers_inside_questions_survive() {
        let got = parse_lines("2023 revenue for the marketing department?", 1, 0).unwrap();
        assert_eq!(got, vec!["2023 revenue for the marketing department?"]);
    }

    /// Clean questions: no leading/trailing space, not quote-wrapped, and
    /// not starting with an enumeration marker.
    fn clean_question() -> impl Strategy<Value = String> {
        "[A-Za-z\u{4e00}-\u{4eff}][A-Za-z0-9 _?\u{4e00}-\u{4eff}]{0,30}[A-Za-z0-9?\u{4e00}-\u{4eff}]"
            .prop_filter("no enumeration shape", |s| !enumeration_re().is_match(s))
    }

    proptest! {
        #[test]
        fn noisy_round_trip(
            questions in prop::collection::vec(clean_question(), 1..12),
            style in 0usize..4,
            blanks in any::<bool>(),
        ) {
            let mut raw = String::new();
            for (i, q) in questions.iter().enumerate() {
                match style {
                    0 => raw.push_str(&format!("{}. {}", i + 1, q)),
                    1 => raw.push_str(&format!("- \"{}\"", q)),
                    2 => raw.push_str(&format!("  {}) {}  ", i + 1, q)),
                    _ => raw.push_str(q),
                }
                raw.push('\n');
                if blanks {
                    raw.push('\n');
                }
            }
            let parsed = parse_lines(&raw, questions.len(), 0).unwrap();
            prop_assert_eq!(&parsed, &questions);
            for line in &parsed {
                prop_assert!(!line.is_empty());
                prop_assert_eq!(line.trim(), line.as_str());
                prop_assert!(!enumeration_re().is_match(line));
            }
        }
    }
}

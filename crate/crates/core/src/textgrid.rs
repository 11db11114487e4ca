//! Praat TextGrid files, long text format, interval tiers only.
//!
//! Grammar accepted by [`parse_textgrid`] (whitespace between tokens is free,
//! strings are double-quoted with `""` as the escaped quote and may span
//! lines):
//!
//! ```text
//! File type = "ooTextFile"
//! Object class = "TextGrid"
//!
//! xmin = <num>
//! xmax = <num>
//! tiers? <exists>            (or <absent>, which ends the document)
//! size = <int>
//! item []:
//!     item [1]:
//!         class = "IntervalTier"
//!         name = "<string>"
//!         xmin = <num>
//!         xmax = <num>
//!         intervals: size = <int>
//!         intervals [1]:
//!             xmin = <num>
//!             xmax = <num>
//!             text = "<string>"
//! ```
//!
//! [`serialize_textgrid`] writes exactly this layout with four-space
//! indentation, LF line endings and times printed with at least six
//! decimals (more when needed to round-trip the `f64` exactly).

use std::fmt::Write as _;

use thiserror::Error;

/// Tier names written by the extraction pipeline, in file order.
pub const PIPELINE_TIERS: [&str; 4] = ["speakers", "vad", "overlap", "transcript"];

#[derive(Debug, Error, PartialEq)]
pub enum TextGridError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: point tiers are not supported")]
    PointTier { line: usize },
    #[error("tier \"{tier}\": interval {index} overlaps or precedes its predecessor")]
    Overlap { tier: String, index: usize },
    #[error("invalid TextGrid: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub xmin: f64,
    pub xmax: f64,
    pub label: String,
}

impl Interval {
    pub fn new(xmin: f64, xmax: f64, label: impl Into<String>) -> Self {
        Self {
            xmin,
            xmax,
            label: label.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tier {
    pub name: String,
    pub intervals: Vec<Interval>,
}

impl Tier {
    pub fn new(name: impl Into<String>, intervals: Vec<Interval>) -> Self {
        Self {
            name: name.into(),
            intervals,
        }
    }

    /// Builds a tier covering `[xmin, xmax]` contiguously, filling the gaps
    /// between `labeled` intervals with empty labels as Praat expects.
    pub fn covering(name: impl Into<String>, xmin: f64, xmax: f64, labeled: &[Interval]) -> Self {
        let mut intervals = Vec::with_capacity(2 * labeled.len() + 1);
        let mut cursor = xmin;
        for iv in labeled {
            if iv.xmin > cursor {
                intervals.push(Interval::new(cursor, iv.xmin, ""));
            }
            intervals.push(iv.clone());
            cursor = iv.xmax;
        }
        if xmax > cursor {
            intervals.push(Interval::new(cursor, xmax, ""));
        }
        Self::new(name, intervals)
    }

    fn validate(&self, xmin: f64, xmax: f64) -> Result<(), TextGridError> {
        let mut prev_end = f64::NEG_INFINITY;
        for (i, iv) in self.intervals.iter().enumerate() {
            if !(iv.xmin.is_finite() && iv.xmax.is_finite()) || iv.xmin >= iv.xmax {
                return Err(TextGridError::Invalid(format!(
                    "tier \"{}\": interval {} has xmin {} >= xmax {}",
                    self.name,
                    i + 1,
                    iv.xmin,
                    iv.xmax
                )));
            }
            if iv.xmin < prev_end {
                return Err(TextGridError::Overlap {
                    tier: self.name.clone(),
                    index: i + 1,
                });
            }
            if iv.xmin < xmin || iv.xmax > xmax {
                return Err(TextGridError::Invalid(format!(
                    "tier \"{}\": interval {} lies outside [{xmin}, {xmax}]",
                    self.name,
                    i + 1
                )));
            }
            prev_end = iv.xmax;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TierSet {
    pub xmin: f64,
    pub xmax: f64,
    pub tiers: Vec<Tier>,
}

impl TierSet {
    pub fn new(xmin: f64, xmax: f64, tiers: Vec<Tier>) -> Self {
        Self { xmin, xmax, tiers }
    }

    pub fn validate(&self) -> Result<(), TextGridError> {
        if !(self.xmin.is_finite() && self.xmax.is_finite()) || self.xmin > self.xmax {
            return Err(TextGridError::Invalid(format!(
                "document range [{}, {}] is invalid",
                self.xmin, self.xmax
            )));
        }
        self.tiers
            .iter()
            .try_for_each(|t| t.validate(self.xmin, self.xmax))
    }

    pub fn tier(&self, name: &str) -> Option<&Tier> {
        self.tiers.iter().find(|t| t.name == name)
    }
}

/// Writes `ts` in the long text format. Fails if the tier set is invalid.
pub fn serialize_textgrid(ts: &TierSet) -> Result<String, TextGridError> {
    ts.validate()?;
    let mut out = String::new();
    out.push_str("File type = \"ooTextFile\"\n");
    out.push_str("Object class = \"TextGrid\"\n\n");
    let _ = writeln!(out, "xmin = {}", fmt_time(ts.xmin));
    let _ = writeln!(out, "xmax = {}", fmt_time(ts.xmax));
    if ts.tiers.is_empty() {
        out.push_str("tiers? <absent>\n");
        return Ok(out);
    }
    out.push_str("tiers? <exists>\n");
    let _ = writeln!(out, "size = {}", ts.tiers.len());
    out.push_str("item []:\n");
    for (i, tier) in ts.tiers.iter().enumerate() {
        let _ = writeln!(out, "    item [{}]:", i + 1);
        out.push_str("        class = \"IntervalTier\"\n");
        let _ = writeln!(out, "        name = {}", quote(&tier.name));
        let _ = writeln!(out, "        xmin = {}", fmt_time(ts.xmin));
        let _ = writeln!(out, "        xmax = {}", fmt_time(ts.xmax));
        let _ = writeln!(out, "        intervals: size = {}", tier.intervals.len());
        for (j, iv) in tier.intervals.iter().enumerate() {
            let _ = writeln!(out, "        intervals [{}]:", j + 1);
            let _ = writeln!(out, "            xmin = {}", fmt_time(iv.xmin));
            let _ = writeln!(out, "            xmax = {}", fmt_time(iv.xmax));
            let _ = writeln!(out, "            text = {}", quote(&iv.label));
        }
    }
    Ok(out)
}

/// Shortest exact representation, padded to at least six decimals.
fn fmt_time(t: f64) -> String {
    let shortest = format!("{t:?}");
    let decimals = shortest
        .split_once('.')
        .map(|(_, frac)| frac.len())
        .unwrap_or(0);
    if shortest.contains(['e', 'E']) || decimals < 6 {
        let fixed = format!("{t:.6}");
        if fixed.parse::<f64>() == Ok(t) {
            return fixed;
        }
        // Tiny or huge magnitudes: fall back to enough digits to round-trip.
        return format!("{t:.17}");
    }
    shortest
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Str(String),
    Word(String),
}

struct Lexer<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            chars: text.chars().peekable(),
            line: 1,
        }
    }

    fn tokens(mut self) -> Result<Vec<(Token, usize)>, TextGridError> {
        let mut out = Vec::new();
        // A UTF-8 byte-order mark is tolerated.
        if self.chars.peek() == Some(&'\u{feff}') {
            self.chars.next();
        }
        while let Some(&c) = self.chars.peek() {
            if c == '\n' {
                self.line += 1;
                self.chars.next();
            } else if c.is_whitespace() {
                self.chars.next();
            } else if c == '"' {
                let line = self.line;
                self.chars.next();
                let mut s = String::new();
                loop {
                    match self.chars.next() {
                        Some('"') => {
                            if self.chars.peek() == Some(&'"') {
                                self.chars.next();
                                s.push('"');
                            } else {
                                break;
                            }
                        }
                        Some(ch) => {
                            if ch == '\n' {
                                self.line += 1;
                            }
                            s.push(ch);
                        }
                        None => {
                            return Err(TextGridError::Syntax {
                                line,
                                message: "unterminated string".into(),
                            })
                        }
                    }
                }
                out.push((Token::Str(s), line));
            } else {
                let line = self.line;
                let mut w = String::new();
                while let Some(&ch) = self.chars.peek() {
                    if ch.is_whitespace() || ch == '"' {
                        break;
                    }
                    w.push(ch);
                    self.chars.next();
                }
                out.push((Token::Word(w), line));
            }
        }
        Ok(out)
    }
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
}

impl Parser {
    fn line(&self) -> usize {
        self.tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map(|(_, l)| *l)
            .unwrap_or(1)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, TextGridError> {
        Err(TextGridError::Syntax {
            line: self.line(),
            message: message.into(),
        })
    }

    fn next(&mut self) -> Result<Token, TextGridError> {
        match self.tokens.get(self.pos) {
            Some((t, _)) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => self.err("unexpected end of document"),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn expect_word(&mut self, word: &str) -> Result<(), TextGridError> {
        match self.next()? {
            Token::Word(w) if w == word => Ok(()),
            other => {
                self.pos -= 1;
                self.err(format!("expected `{word}`, found {}", show(&other)))
            }
        }
    }

    fn string(&mut self) -> Result<String, TextGridError> {
        match self.next()? {
            Token::Str(s) => Ok(s),
            other => {
                self.pos -= 1;
                self.err(format!("expected quoted string, found {}", show(&other)))
            }
        }
    }

    fn number(&mut self) -> Result<f64, TextGridError> {
        match self.next()? {
            Token::Word(w) => match w.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => {
                    self.pos -= 1;
                    self.err(format!("expected number, found `{w}`"))
                }
            },
            other => {
                self.pos -= 1;
                self.err(format!("expected number, found {}", show(&other)))
            }
        }
    }

    fn count(&mut self) -> Result<usize, TextGridError> {
        let v = self.number()?;
        if v < 0.0 || v.fract() != 0.0 {
            self.pos -= 1;
            return self.err(format!("expected non-negative integer, found {v}"));
        }
        Ok(v as usize)
    }

    fn key_value_number(&mut self, key: &str) -> Result<f64, TextGridError> {
        self.expect_word(key)?;
        self.expect_word("=")?;
        self.number()
    }

    /// `item [n]:` / `intervals [n]:`, also accepting `item[n]:`.
    fn indexed_header(&mut self, key: &str, index: usize) -> Result<(), TextGridError> {
        let expected = format!("[{index}]:");
        match self.next()? {
            Token::Word(w) if w == key => self.expect_word(&expected),
            Token::Word(w) if w == format!("{key}{expected}") => Ok(()),
            other => {
                self.pos -= 1;
                self.err(format!(
                    "expected `{key} {expected}`, found {}",
                    show(&other)
                ))
            }
        }
    }
}

fn show(t: &Token) -> String {
    match t {
        Token::Str(s) => format!("\"{s}\""),
        Token::Word(w) => format!("`{w}`"),
    }
}

/// Parses a long-format TextGrid into a validated [`TierSet`].
pub fn parse_textgrid(text: &str) -> Result<TierSet, TextGridError> {
    let tokens = Lexer::new(text).tokens()?;
    let mut p = Parser { tokens, pos: 0 };

    p.expect_word("File")?;
    p.expect_word("type")?;
    p.expect_word("=")?;
    if p.string()? != "ooTextFile" {
        p.pos -= 1;
        return p.err("file type must be \"ooTextFile\"");
    }
    p.expect_word("Object")?;
    p.expect_word("class")?;
    p.expect_word("=")?;
    if p.string()? != "TextGrid" {
        p.pos -= 1;
        return p.err("object class must be \"TextGrid\"");
    }
    let xmin = p.key_value_number("xmin")?;
    let xmax = p.key_value_number("xmax")?;
    p.expect_word("tiers?")?;
    let mut tiers = Vec::new();
    match p.next()? {
        Token::Word(w) if w == "<absent>" => {}
        Token::Word(w) if w == "<exists>" => {
            p.expect_word("size")?;
            p.expect_word("=")?;
            let n_tiers = p.count()?;
            p.expect_word("item")?;
            p.expect_word("[]:")?;
            for i in 1..=n_tiers {
                tiers.push(parse_tier(&mut p, i)?);
            }
        }
        other => {
            p.pos -= 1;
            return p.err(format!("expected <exists> or <absent>, found {}", show(&other)));
        }
    }
    if !p.at_end() {
        return p.err("trailing content after last tier");
    }
    let ts = TierSet { xmin, xmax, tiers };
    ts.validate()?;
    Ok(ts)
}

fn parse_tier(p: &mut Parser, index: usize) -> Result<Tier, TextGridError> {
    p.indexed_header("item", index)?;
    p.expect_word("class")?;
    p.expect_word("=")?;
    let class_line = p.line();
    let class = p.string()?;
    match class.as_str() {
        "IntervalTier" => {}
        "TextTier" | "PointTier" => return Err(TextGridError::PointTier { line: class_line }),
        other => {
            p.pos -= 1;
            return p.err(format!("unknown tier class \"{other}\""));
        }
    }
    p.expect_word("name")?;
    p.expect_word("=")?;
    let name = p.string()?;
    // Tier bounds are parsed for syntax; the document bounds are authoritative.
    p.key_value_number("xmin")?;
    p.key_value_number("xmax")?;
    p.expect_word("intervals:")?;
    p.expect_word("size")?;
    p.expect_word("=")?;
    let n = p.count()?;
    let mut intervals = Vec::with_capacity(n);
    let mut prev_end = f64::NEG_INFINITY;
    for j in 1..=n {
        p.indexed_header("intervals", j)?;
        let start_line = p.line();
        let xmin = p.key_value_number("xmin")?;
        let xmax = p.key_value_number("xmax")?;
        p.expect_word("text")?;
        p.expect_word("=")?;
        let label = p.string()?;
        if xmin >= xmax {
            return Err(TextGridError::Syntax {
                line: start_line,
                message: format!("interval {j} has xmin {xmin} >= xmax {xmax}"),
            });
        }
        if xmin < prev_end {
            return Err(TextGridError::Overlap { tier: name, index: j });
        }
        prev_end = xmax;
        intervals.push(Interval { xmin, xmax, label });
    }
    Ok(Tier { name, intervals })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"File type = "ooTextFile"
Object class = "TextGrid"

xmin = 0
xmax = 1
tiers? <exists>
size = 1
item []:
    item [1]:
        class = "IntervalTier"
        name = "speakers"
        xmin = 0
        xmax = 1
        intervals: size = 1
        intervals [1]:
            xmin = 0
            xmax = 1
            text = "a"
"#;

    #[test]
    fn parses_minimal_document() {
        let ts = parse_textgrid(MINIMAL).unwrap();
        assert_eq!(ts.xmin, 0.0);
        assert_eq!(ts.xmax, 1.0);
        assert_eq!(ts.tiers.len(), 1);
        assert_eq!(ts.tiers[0].name, "speakers");
        assert_eq!(ts.tiers[0].intervals, vec![Interval::new(0.0, 1.0, "a")]);
    }

    #[test]
    fn round_trip_is_identity() {
        let ts = parse_textgrid(MINIMAL).unwrap();
        let again = parse_textgrid(&serialize_textgrid(&ts).unwrap()).unwrap();
        assert_eq!(ts, again);
    }

    #[test]
    fn overlapping_intervals_rejected() {
        let text = MINIMAL
            .replace("intervals: size = 1", "intervals: size = 2")
            .replace(
                "            text = \"a\"\n",
                "            text = \"a\"\n        intervals [2]:\n            xmin = 0.5\n            xmax = 1\n            text = \"b\"\n",
            );
        let err = parse_textgrid(&text).unwrap_err();
        assert!(matches!(err, TextGridError::Overlap { index: 2, .. }), "{err:?}");
    }

    #[test]
    fn point_tier_rejected() {
        let text = MINIMAL.replace("\"IntervalTier\"", "\"TextTier\"");
        assert_eq!(
            parse_textgrid(&text).unwrap_err(),
            TextGridError::PointTier { line: 10 }
        );
    }

    #[test]
    fn syntax_error_reports_line() {
        let text = MINIMAL.replace("xmax = 1\ntiers?", "xmax = one\ntiers?");
        match parse_textgrid(&text).unwrap_err() {
            TextGridError::Syntax { line, .. } => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_tier_set_is_header_only() {
        let ts = TierSet::new(0.0, 0.0, vec![]);
        let text = serialize_textgrid(&ts).unwrap();
        assert!(text.contains("tiers? <absent>"));
        assert!(!text.contains("item"));
        assert_eq!(parse_textgrid(&text).unwrap(), ts);
    }

    #[test]
    fn adjacent_intervals_counted() {
        let tier = Tier::new(
            "vad",
            vec![Interval::new(0.0, 0.5, "x"), Interval::new(0.5, 1.0, "y")],
        );
        let text = serialize_textgrid(&TierSet::new(0.0, 1.0, vec![tier])).unwrap();
        assert!(text.contains("intervals: size = 2"));
        assert!(text.contains("xmin = 0.500000"));
    }

    #[test]
    fn serializer_rejects_invalid_sets() {
        let tier = Tier::new(
            "vad",
            vec![Interval::new(0.0, 0.6, "x"), Interval::new(0.5, 1.0, "y")],
        );
        assert!(serialize_textgrid(&TierSet::new(0.0, 1.0, vec![tier])).is_err());
        let outside = Tier::new("vad", vec![Interval::new(0.0, 2.0, "x")]);
        assert!(serialize_textgrid(&TierSet::new(0.0, 1.0, vec![outside])).is_err());
    }

    #[test]
    fn quotes_and_newlines_survive() {
        let tier = Tier::new(
            "transcript",
            vec![Interval::new(0.0, 1.0, "he said \"hi\"\nthen left")],
        );
        let ts = TierSet::new(0.0, 1.0, vec![tier]);
        assert_eq!(parse_textgrid(&serialize_textgrid(&ts).unwrap()).unwrap(), ts);
    }

    #[test]
    fn covering_fills_gaps() {
        let t = Tier::covering("speakers", 0.0, 3.0, &[Interval::new(1.0, 2.0, "0")]);
        assert_eq!(t.intervals.len(), 3);
        assert_eq!(t.intervals[0], Interval::new(0.0, 1.0, ""));
        assert_eq!(t.intervals[2], Interval::new(2.0, 3.0, ""));
    }

    #[test]
    fn time_formatting() {
        assert_eq!(fmt_time(1.0), "1.000000");
        assert_eq!(fmt_time(0.1), "0.100000");
        assert_eq!(fmt_time(0.123456789), "0.123456789");
        assert_eq!(fmt_time(1e-9).parse::<f64>().unwrap(), 1e-9);
    }
}
